//! Correlation-filter visual tracking with depth-aware occlusion handling.
//!
//! The crate provides three tracker variants that share one kernelized
//! correlation filter:
//!
//! * [`kcf`]: RGB-only tracking-by-detection,
//! * [`depth`]: the same filter plus depth-difference occlusion detection and
//!   horizontal re-detection,
//! * [`particle`]: the depth tracker with a color-histogram particle filter
//!   proposing target locations.
//!
//! [`session`] drives any variant over a sequence, [`eval`] implements the metrics used to compare them and [`io`] handles
//! datasets, annotations, synthetic sequences and result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circulant;
pub mod depth;
pub mod error;
pub mod eval;
pub mod features;
pub mod fft;
pub mod geometry;
pub mod io;
pub mod kcf;
pub mod kernel;
pub mod particle;
pub mod session;

pub use error::{Error, Result};
pub use features::{FeatureConfig, FeatureKind, FeaturePatch};
pub use geometry::{BoundingBox, Frame};
pub use kcf::{Detection, TrackerConfig, TrackerModel};
pub use kernel::{KernelKind, KernelParams};
pub use session::{SessionConfig, Tracker, Variant};
