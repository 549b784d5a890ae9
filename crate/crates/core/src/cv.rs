//! Subject-independent cross-validation folds.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Assigns whole subjects to `k` folds round-robin in ascending subject-id
/// order. Returns the test indices of each fold.
pub fn subject_folds<S: AsRef<str>>(subjects: &[S], k: usize) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 folds, got {k}")));
    }
    let unique: BTreeSet<&str> = subjects.iter().map(AsRef::as_ref).collect();
    if unique.len() < k {
        return Err(Error::Validation(format!(
            "{} subject(s) cannot fill {k} folds without an empty fold",
            unique.len()
        )));
    }
    let fold_of: std::collections::HashMap<&str, usize> =
        unique.iter().enumerate().map(|(i, s)| (*s, i % k)).collect();
    let mut folds = vec![Vec::new(); k];
    for (i, s) in subjects.iter().enumerate() {
        folds[fold_of[s.as_ref()]].push(i);
    }
    Ok(folds)
}

/// Complement of `test` within `0..n`.
pub fn train_indices(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &t in test {
        mask[t] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}
