//! Diagnostics for how domain fine-tuning changed a transformer encoder's
//! embedding geometry, and whether those changes predict downstream gains
//! from scarce-label classifiers.
//!
//! The numeric kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the analysis scalar used by the pipeline.

pub mod correlation;
pub mod corpus_io;
pub mod error;
pub mod geometry;
pub mod improvement;
pub mod loss_dynamics;
pub mod pipeline;
pub mod repr_similarity;
pub mod scalar;
pub mod scarce;
pub mod stats;
pub mod synth;

pub use error::{DriftError, Result};
pub use scalar::Real;

/// Analysis scalar used by the pipeline.
pub type Scalar = f64;
/// Dense matrix in the analysis scalar (rows are samples).
pub type Matrix = nalgebra::DMatrix<Scalar>;
/// Dense single-precision matrix, the on-disk precision of embedding clouds.
pub type Matrix32 = nalgebra::DMatrix<f32>;
pub type ProcrustesAlignment = repr_similarity::ProcrustesAlignment<Scalar>;
pub type PowerLawFit = loss_dynamics::PowerLawFit<Scalar>;
pub type PairFit = correlation::PairFit<Scalar>;
pub type LinearModel = scarce::LinearModel<Scalar>;
pub type KMeansFit = geometry::KMeansFit<Scalar>;

/// Tool version recorded in provenance headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
