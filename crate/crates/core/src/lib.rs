//! Meniscus segmentation with an attention U-Net and quantitative UTE
//! relaxometry (T1, T1ρ, T2*) over the segmented regions.

// `!(x > 0.0)` is the idiom used throughout to reject NaN together with
// out-of-range values; index loops mirror the layer equations.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attunet;
pub mod cli;
pub mod datapipe;
pub mod error;
pub mod evalstats;
pub mod nnkit;
pub mod phantom;
pub mod relaxfit;
pub mod trainer;

pub use error::{Error, Result};
