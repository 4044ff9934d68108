//! Regional white-matter lesion load quantification.
//!
//! The crate is organised bottom-up:
//!
//! * [`volio`] holds the in-memory volume model and NIfTI-1 I/O.
//! * [`geometry`] provides affine transforms, resampling, intensity-based
//!   affine registration and atlas label propagation.
//! * [`quantify`] fuses probability maps, binarizes lesions and aggregates
//!   lesion volume globally and per atlas region.
//! * [`stats`] implements the cohort analyses: Bland–Altman agreement,
//!   linear-model classifiers, ROC/AUC and coefficient significance.
//! * [`synth`] generates deterministic phantoms, parcellations and cohorts
//!   with planted effects.

// Index loops read closer to the matrix algebra; `!(a <= b)` is the NaN-safe form.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod quantify;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod volio;

/// Number of white-matter regions in the atlas parcellation.
pub const NUM_REGIONS: usize = 34;
