use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Region names used for the standard four-region layout.
pub const STANDARD_REGIONS: [&str; 4] = ["eyes", "mouth", "right_cheek", "left_cheek"];

/// A set of input-image pixels belonging to one facial region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMask {
    pub region_id: String,
    pub image_w: u32,
    pub image_h: u32,
    pub pixels: Vec<[u32; 2]>,
}

impl RegionMask {
    pub fn new(region_id: impl Into<String>, image_w: u32, image_h: u32, pixels: Vec<[u32; 2]>) -> Result<Self> {
        let mask = RegionMask {
            region_id: region_id.into(),
            image_w,
            image_h,
            pixels,
        };
        mask.validate()?;
        Ok(mask)
    }

    /// Axis-aligned rectangle `[x0, x1) x [y0, y1)`.
    pub fn rect(region_id: impl Into<String>, image_w: u32, image_h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        let pixels = (y0..y1).flat_map(|y| (x0..x1).map(move |x| [x, y])).collect();
        Self::new(region_id, image_w, image_h, pixels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::Validation(format!("mask `{}`: {msg}", self.region_id));
        if self.region_id.is_empty() {
            return Err(Error::Validation("mask has an empty region_id".into()));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(bad("image dimensions must be positive".into()));
        }
        if self.pixels.is_empty() {
            return Err(bad("no pixels".into()));
        }
        let mut seen = HashSet::with_capacity(self.pixels.len());
        for &[x, y] in &self.pixels {
            if x >= self.image_w || y >= self.image_h {
                return Err(bad(format!(
                    "pixel ({x}, {y}) outside {}x{} image",
                    self.image_w, self.image_h
                )));
            }
            if !seen.insert((x, y)) {
                return Err(bad(format!("duplicate pixel ({x}, {y})")));
            }
        }
        Ok(())
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<RegionMask> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mask: RegionMask = serde_json::from_str(&text)?;
    mask.validate()?;
    Ok(mask)
}

pub fn write_mask(mask: &RegionMask, path: impl AsRef<Path>) -> Result<()> {
    mask.validate()?;
    let path = path.as_ref();
    let text = serde_json::to_string(mask)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads pixel coordinates from a two-column `x,y` CSV (header optional).
pub fn read_mask_csv(path: impl AsRef<Path>, region_id: &str, image_w: u32, image_h: u32) -> Result<RegionMask> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let mut pixels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        if record.len() != 2 {
            return Err(Error::Validation(format!(
                "{}:{}: expected 2 columns, found {}",
                path.display(),
                line + 1,
                record.len()
            )));
        }
        match (record[0].parse::<u32>(), record[1].parse::<u32>()) {
            (Ok(x), Ok(y)) => pixels.push([x, y]),
            _ if line == 0 => continue,
            _ => {
                return Err(Error::Validation(format!(
                    "{}:{}: non-integer coordinate",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    RegionMask::new(region_id, image_w, image_h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_bounds_and_duplicates() {
        assert!(RegionMask::new("eyes", 4, 4, vec![[4, 0]]).is_err());
        assert!(RegionMask::new("eyes", 4, 4, vec![[1, 1], [1, 1]]).is_err());
        assert!(RegionMask::new("eyes", 4, 4, vec![]).is_err());
        assert!(RegionMask::new("eyes", 4, 4, vec![[3, 3]]).is_ok());
    }

    #[test]
    fn json_uses_pair_arrays() {
        let m = RegionMask::new("mouth", 8, 8, vec![[1, 2], [3, 4]]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"pixels\":[[1,2],[3,4]]"), "{text}");
    }

    #[test]
    fn csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "x,y\n0,1\n2, 3\n").unwrap();
        let m = read_mask_csv(&p, "eyes", 4, 4).unwrap();
        assert_eq!(m.pixels, vec![[0, 1], [2, 3]]);
    }
}
