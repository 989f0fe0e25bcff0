//! Physics-directed data augmentation for TDoA fingerprint localization of
//! seismic sources in a heterogeneous 2D medium.
//!
//! The crate is organized along the processing chain:
//!
//! * [`field`]: grid geometry, the synthetic ground-truth slowness model and
//!   sensor placement.
//! * [`raytrace`]: straight-ray path lengths per cell.
//! * [`simulate`]: arrival times `t = A s`, measurement noise and TDoA
//!   fingerprints.
//! * [`tomo`]: regularized tomography estimating the slowness model from a
//!   few labeled events.
//! * [`learn`]: augmentation from the estimated model, MLP and SVM
//!   grid-cell classifiers.
//! * [`locate`]: differential-evolution least-squares localization.
//! * [`workflow_demo`]: the generic fit-transform-retrain workflow on a
//!   polynomial domain shift.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the
//! aliases below pin the common choices.

pub mod error;
pub mod field;
pub mod learn;
pub mod linalg;
pub mod locate;
pub mod raytrace;
pub mod scalar;
pub mod simulate;
pub mod tomo;
pub mod workflow_demo;

pub use error::{Error, Result};
pub use scalar::Real;

/// Seeded generator used for every stochastic step.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

pub type FieldConfig64 = field::FieldConfig<f64>;
pub type Point64 = field::Point<f64>;
pub type SlownessModel64 = field::SlownessModel<f64>;
pub type SensorArray64 = field::SensorArray<f64>;
pub type RayRow64 = raytrace::RayRow<f64>;
pub type RayMatrix64 = raytrace::RayMatrix<f64>;
pub type Dataset64 = simulate::Dataset<f64>;
pub type Dataset32 = simulate::Dataset<f32>;
pub type TomoPrior64 = tomo::TomoPrior<f64>;
pub type MlpModel32 = learn::MlpModel<f32>;
pub type MlpModel64 = learn::MlpModel<f64>;
pub type SvmModel64 = learn::SvmModel<f64>;
pub type PolyTransform64 = workflow_demo::PolyTransform<f64>;
