use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the model, the closed-form engines and the oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalkError {
    #[error("rejected parameter `{name}` = {value}: {reason}")]
    RejectedParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("spectrum is degenerate at z = {z}: lambda1 = lambda2 and zeta is undefined")]
    DegenerateSpectrum { z: f64 },
    #[error("no closed form for the balanced (p = q) case")]
    BalancedUnsupported,
    #[error("start site i0 = {i0} is not a barrier; this quantity needs i0 = 0")]
    StartNotBarrier { i0: i64 },
    #[error("linear system is singular at row {row}")]
    SingularSystem { row: usize },
    #[error("truncation K = {k} has tail bound {tail_bound:e}, above requested tolerance {tolerance:e}")]
    TruncationInsufficient {
        k: usize,
        tail_bound: f64,
        tolerance: f64,
    },
    #[error("extrapolation tableau disagrees by {error_estimate:e} (tolerance {tolerance:e})")]
    IllConditioned {
        error_estimate: f64,
        tolerance: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, WalkError>;

/// A disagreement between a verbatim printed formula and the authoritative
/// evaluation path. Diagnostic only, never an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaDiscrepancy {
    pub quantity: String,
    pub index: i64,
    pub printed: f64,
    pub authoritative: f64,
    pub relative_delta: f64,
}

impl FormulaDiscrepancy {
    /// Returns a discrepancy if `printed` and `authoritative` differ by more
    /// than `tolerance` relative.
    pub fn check(
        quantity: &str,
        index: i64,
        printed: f64,
        authoritative: f64,
        tolerance: f64,
    ) -> Option<Self> {
        let relative_delta = relative_delta(printed, authoritative);
        if relative_delta <= tolerance {
            return None;
        }
        Some(Self {
            quantity: quantity.to_string(),
            index,
            printed,
            authoritative,
            relative_delta,
        })
    }
}

impl fmt::Display for FormulaDiscrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FormulaDiscrepancy: {}[{}] printed = {:.12e}, authoritative = {:.12e} (relative delta {:.3e})",
            self.quantity, self.index, self.printed, self.authoritative, self.relative_delta
        )
    }
}

/// |a - b| / max(|b|, 1e-30), or 0 when both are equal (including infinities).
pub fn relative_delta(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / b.abs().max(1e-30)
}
