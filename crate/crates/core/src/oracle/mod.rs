//! Independent oracles for the closed forms: a truncated banded solver for
//! generating functions and mean times, numeric differentiation of its
//! output, and a seeded Monte-Carlo walker.

pub mod banded;
mod derivative;
mod montecarlo;
mod truncated;

pub use derivative::{gf_derivative, gf_derivative_window, richardson, Extrapolated, DEFAULT_STEPS};
pub use montecarlo::{simulate, EmpiricalStats, Estimate, SimulationConfig, CENSOR_LIMIT};
pub use truncated::{
    default_truncation, tail_bound, tail_ratio, truncated_mean_times, truncated_visits,
    truncated_visits_within, TruncatedMeanTimes, TruncatedSolution, TruncatedSystem, TAIL_TARGET,
};
