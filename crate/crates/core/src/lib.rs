//! Single-pass incremental Gaussian mixture learning.
//!
//! The crate learns a full-covariance Gaussian mixture from a data stream,
//! one point at a time, and reconstructs any subset of vector elements from
//! the rest. It ships two numerically equivalent backends: a reference one
//! that works on covariance matrices (O(D^3) per point) and a fast one that
//! maintains precision matrices with rank-one updates (O(D^2) per point).
//!
//! ```
//! use figmn::mixture::{IgmnConfig, MixtureModel};
//! use figmn::inference::SlicePlan;
//!
//! let data = [[0.0, 0.1], [0.2, 0.5], [0.4, 0.8], [0.6, 1.3], [0.8, 1.6]];
//! let mut model = MixtureModel::from_data(IgmnConfig::new(1.0, 0.0), &data).unwrap();
//! for x in &data {
//!     model.learn_one(x).unwrap();
//! }
//! let plan = SlicePlan::targets_last(2, 1).unwrap();
//! let y = figmn::inference::reconstruct(&model, &[0.5], &plan).unwrap();
//! assert!(y[0] > 0.8 && y[0] < 1.4);
//! ```

// `!(x > y)` is used deliberately so NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod cli;
pub mod data;
pub mod inference;
pub mod linalg;
pub mod mixture;
mod par;
pub mod stats;

pub use par::parallel_enabled;

/// Runs `f` with the crate's data-parallel loops confined to one thread.
pub fn run_single_threaded<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    par::sequential(f)
}
