//! Random walks on the integers with a multiple-function barrier at every
//! multiple of `N`.
//!
//! The closed-form engines ([`visits`], [`absorption`]) give expected
//! arrivals, absorption masses, reach probabilities and mean absorption
//! times. The [`oracle`] module checks them against a truncated linear
//! system and a seeded Monte-Carlo walker, and [`verify`] ties the two
//! together into a report with golden-value records.

pub mod absorption;
pub mod error;
pub mod model;
pub mod oracle;
pub mod verify;
pub mod visits;

pub use absorption::{
    barrier_time_variants, mean_time_any, mean_time_to_barrier, periodic_mean_times,
    spectral_derivatives, AbsorptionTimes, BarrierTimeVariants, DerivativeBundle,
};
pub use error::{FormulaDiscrepancy, Result, WalkError};
pub use model::{
    barrier_spectrum, lambda_pair, validate_model, BarrierSpectrum, Branch, RawModel,
    SpectralPair, WalkModel,
};
pub use visits::{
    absorption_mass, barrier_visits, reach_probability, site_visits, total_absorption,
    VisitEngine, VisitProfile,
};
