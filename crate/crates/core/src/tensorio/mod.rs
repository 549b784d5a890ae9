//! Feature tensors, region masks and dataset manifests.
//!
//! Tensors are stored in the SPDT binary container:
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..4   | magic `SPDT`                              |
//! | 4      | version (1)                               |
//! | 5      | dtype (1 = f32, 2 = f64)                  |
//! | 6..8   | reserved, zero                            |
//! | 8..12  | `m` (u32 LE)                              |
//! | 12..14 | `w` (u16 LE)                              |
//! | 14..16 | `h` (u16 LE)                              |
//! | 16..   | `m*w*h` little-endian values, map-major, row-major within a map |

mod manifest;
mod mask;
pub mod synth;

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use manifest::{read_manifest, write_manifest, DatasetManifest, ManifestEntry};
pub use mask::{read_mask, read_mask_csv, write_mask, RegionMask, STANDARD_REGIONS};
pub use synth::{synth_generate, ClassPath, SynthParams};

pub const MAGIC: &[u8; 4] = b"SPDT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// A stack of `m` feature maps of `w x h` cells.
///
/// Values are held as `f64` regardless of the on-disk dtype; `dtype` records
/// the storage precision so that a read/write cycle is bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    m: usize,
    w: usize,
    h: usize,
    values: Vec<f64>,
    dtype: Dtype,
    pub source_id: String,
}

impl FeatureTensor {
    pub fn new(m: usize, w: usize, h: usize, values: Vec<f64>) -> Result<Self> {
        let t = FeatureTensor {
            m,
            w,
            h,
            values,
            dtype: Dtype::F64,
            source_id: String::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn zeros(m: usize, w: usize, h: usize) -> Result<Self> {
        Self::new(m, w, h, vec![0.0; m * w * h])
    }

    /// Builds a tensor from per-map closures `f(map, x, y)`.
    pub fn from_fn(m: usize, w: usize, h: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(m * w * h);
        for k in 0..m {
            for y in 0..h {
                for x in 0..w {
                    values.push(f(k, x, y));
                }
            }
        }
        Self::new(m, w, h, values)
    }

    pub fn with_dtype(mut self, dtype: Dtype) -> Self {
        if dtype == Dtype::F32 {
            for v in &mut self.values {
                *v = *v as f32 as f64;
            }
        }
        self.dtype = dtype;
        self
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.w == 0 || self.h == 0 {
            return Err(Error::Validation(format!(
                "tensor dimensions must be positive, got {}x{}x{}",
                self.m, self.w, self.h
            )));
        }
        if self.m > u32::MAX as usize || self.w > u16::MAX as usize || self.h > u16::MAX as usize {
            return Err(Error::Validation(format!(
                "tensor dimensions {}x{}x{} exceed the container limits",
                self.m, self.w, self.h
            )));
        }
        let expected = self.m * self.w * self.h;
        if self.values.len() != expected {
            return Err(Error::Validation(format!(
                "tensor has {} values, expected {expected}",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at index {i}")));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, map: usize, x: usize, y: usize) -> f64 {
        self.values[map * self.w * self.h + y * self.w + x]
    }

    /// The `m`-vector of responses at cell `(x, y)`.
    pub fn cell(&self, x: usize, y: usize) -> impl Iterator<Item = f64> + '_ {
        let plane = self.w * self.h;
        let offset = y * self.w + x;
        (0..self.m).map(move |k| self.values[k * plane + offset])
    }

    /// All `w*h` cells as columns of an `m x (w*h)` observation matrix,
    /// column index `y*w + x`.
    pub fn observations(&self) -> DMatrix<f64> {
        let plane = self.w * self.h;
        DMatrix::from_fn(self.m, plane, |k, i| self.values[k * plane + i])
    }

    /// Stores an `m x m` matrix as a single-map tensor with `w = h = m`.
    pub fn from_matrix(matrix: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        FeatureTensor::from_fn(1, cols, rows, |_, x, y| matrix[(y, x)])
    }

    /// Inverse of [`FeatureTensor::from_matrix`].
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.m != 1 {
            return Err(Error::Validation(format!(
                "matrix export expects a single map, found {}",
                self.m
            )));
        }
        Ok(DMatrix::from_fn(self.h, self.w, |r, c| self.get(0, c, r)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * self.dtype.size());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype.code());
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.w as u16).to_le_bytes());
        out.extend_from_slice(&(self.h as u16).to_le_bytes());
        match self.dtype {
            Dtype::F32 => {
                for &v in &self.values {
                    let x = v as f32;
                    if !x.is_finite() {
                        return Err(Error::Validation(format!("value {v} overflows f32")));
                    }
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Dtype::F64 => {
                for &v in &self.values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, message: String| Error::Format { offset, message };
        if bytes.len() < HEADER_LEN {
            return Err(fail(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
        }
        if &bytes[0..4] != MAGIC {
            return Err(fail(0, format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
        }
        if bytes[4] != VERSION {
            return Err(fail(4, format!("unsupported version {}", bytes[4])));
        }
        let dtype = Dtype::from_code(bytes[5]).ok_or_else(|| fail(5, format!("unknown dtype code {}", bytes[5])))?;
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(fail(6, "reserved bytes must be zero".into()));
        }
        let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let w = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
        let h = u16::from_le_bytes(bytes[14..16].try_into().unwrap()) as usize;
        if m == 0 || w == 0 || h == 0 {
            return Err(fail(8, format!("zero dimension {m}x{w}x{h}")));
        }
        let count = m * w * h;
        let expected_len = HEADER_LEN + count * dtype.size();
        if bytes.len() < expected_len {
            return Err(fail(bytes.len(), format!("truncated payload: expected {expected_len} bytes")));
        }
        if bytes.len() > expected_len {
            return Err(fail(expected_len, format!("{} trailing bytes", bytes.len() - expected_len)));
        }
        let payload = &bytes[HEADER_LEN..];
        let mut values = Vec::with_capacity(count);
        for (i, chunk) in payload.chunks_exact(dtype.size()).enumerate() {
            let v = match dtype {
                Dtype::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
                Dtype::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
            };
            if !v.is_finite() {
                return Err(fail(HEADER_LEN + i * dtype.size(), "non-finite value".into()));
            }
            values.push(v);
        }
        Ok(FeatureTensor {
            m,
            w,
            h,
            values,
            dtype,
            source_id: String::new(),
        })
    }

    /// Bilinear resize of every map to `new_w x new_h` (align-corners sampling).
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> Result<Self> {
        let scale = |n_in: usize, n_out: usize| {
            if n_out > 1 {
                (n_in - 1) as f64 / (n_out - 1) as f64
            } else {
                0.0
            }
        };
        let sx = scale(self.w, new_w);
        let sy = scale(self.h, new_h);
        let out = FeatureTensor::from_fn(self.m, new_w, new_h, |k, x, y| {
            let fx = x as f64 * sx;
            let fy = y as f64 * sy;
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(self.w - 1);
            let y1 = (y0 + 1).min(self.h - 1);
            let ax = fx - x0 as f64;
            let ay = fy - y0 as f64;
            let top = self.get(k, x0, y0) * (1.0 - ax) + self.get(k, x1, y0) * ax;
            let bottom = self.get(k, x0, y1) * (1.0 - ax) + self.get(k, x1, y1) * ax;
            top * (1.0 - ay) + bottom * ay
        })?;
        Ok(out.with_source_id(self.source_id.clone()))
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let t = FeatureTensor::from_bytes(&bytes)?;
    Ok(t.with_source_id(path.display().to_string()))
}

pub fn write_tensor(t: &FeatureTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = t.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
