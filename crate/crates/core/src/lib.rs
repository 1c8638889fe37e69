//! erglab-core: a computational laboratory for conservative dynamics.
//!
//! The crate estimates and exactly verifies the quantitative machinery of
//! smooth ergodic theory at desk scale: Lyapunov spectra, dominated
//! splittings and cone fields, Pesin blocks, ergodic decompositions and
//! variance functionals, and graph-transform center-stable disks. Smooth
//! torus maps provide the estimation side; exact finite permutation systems
//! with unimodular cocycles provide the oracle side, so every lemma that
//! admits a finite check is checked exactly.
//!
//! All numeric code is generic over the scalar type (see [`scalar::Scalar`]);
//! the aliases below pin the common `f64` instantiations.

pub mod domination;
pub mod error;
pub mod fuzz;
pub mod manifold;
pub mod measures;
pub mod pesin;
pub mod sampling;
pub mod scalar;
pub mod spectrum;
pub mod systems;

pub use error::{ErgError, Result};
pub use scalar::Scalar;

/// Default `f64` instantiations of the core types.
pub type TorusMap64 = systems::TorusMap<f64>;
pub type FiniteSystem64 = systems::FiniteSystem<f64>;
pub type TorusPoint64 = systems::TorusPoint<f64>;
pub type LyapunovSpectrum64<P> = spectrum::LyapunovSpectrum<f64, P>;
pub type AtomicMeasure64<P> = measures::AtomicMeasure<f64, P>;
pub type Decomposition64<P> = measures::Decomposition<f64, P>;
