//! Covariance-descriptor trajectories on the SPD manifold, alignment kernels
//! (DTW, global alignment kernel) and kernel SVM classification.

pub mod align;
pub mod covdesc;
pub mod cv;
pub mod error;
pub mod fusion;
pub mod spdcore;
pub mod svm;
pub mod tensorio;

pub use error::{Error, ErrorClass, Result};
