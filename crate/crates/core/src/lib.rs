//! Direct dense pose kernels.
//!
//! The crate covers the computational core of a direct (bottom-up) dense pose
//! estimator: feature-pyramid aggregation, the instance branch with
//! dynamically generated mask heads, the global IUV branch built on
//! submanifold sparse convolution and instance-aware normalization, the loss
//! stack, flow-based temporal smoothing of IUV logits, and dense-pose AP/AR
//! evaluation. A synthetic scene generator and a scaling benchmark drive the
//! whole pipeline at desk scale.
//!
//! Everything is generic over [`Real`] so the same kernels run in `f32`
//! (default) and `f64` (gradient checks).

pub mod bench;
pub mod conv;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod instance;
pub mod iuv;
pub mod pipeline;
pub mod real;
pub mod scene;
pub mod sparse;
pub mod temporal;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use real::Real;
pub use tensor::{BinaryMask, DenseTensor, FeaturePyramid};
