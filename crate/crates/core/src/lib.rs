//! Bayesian spatial deconfounding engine.
//!
//! Fits the confounded spatial linear mixed model and its deconfounded
//! reparameterization, samples the joint posterior exactly (no MCMC) on a
//! discrete hyperparameter grid, predicts at unobserved sites by universal
//! kriging, and ships a reference Gibbs sampler plus a simulation/benchmark
//! harness for equivalence studies.
//!
//! All numerical kernels are generic over the scalar type through [`Real`];
//! concrete `f64` aliases live at the crate root (`Matrix`, `Vector`, ...).

pub mod bench;
pub mod covariance;
pub mod error;
pub mod gibbs;
pub mod grsr;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Scalar abstraction for every numerical kernel in this crate: an IEEE
/// float (`f32` or `f64`) that nalgebra can factorize and rand can sample.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync {
    /// Lossy conversion from `f64`, for tolerances and literals.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    /// `true` when the value is neither NaN nor infinite.
    fn finite(self) -> bool;

    /// One standard normal draw.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One Gamma(shape, scale) draw.
    fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self;

    /// One U(0, 1) draw.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn finite(self) -> bool {
                self.is_finite()
            }

            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self {
                Gamma::new(shape, scale)
                    .expect("gamma parameters must be positive")
                    .sample(rng)
            }

            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random()
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Dense matrix over the crate's default `f64` scalar.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense vector over the crate's default `f64` scalar.
pub type Vector = nalgebra::DVector<f64>;
/// Projection cache over `f64`.
pub type ProjectionCache = linalg::ProjectionCache<f64>;
/// Cholesky factor over `f64`.
pub type SpdFactor = linalg::SpdFactor<f64>;
