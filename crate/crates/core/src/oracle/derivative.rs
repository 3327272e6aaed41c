//! Numeric `z`-derivatives of the truncated generating function at `z = 1`.
//!
//! Only points `z < 1` are sampled since the series is not guaranteed to
//! converge above one. Backward differences `(X(1) - X(1-h))/h` are
//! extrapolated to `h -> 0` with a Neville tableau.
//!
//! On balanced models this gives the per-barrier split that has no closed
//! form; those values are an extension, not a closed-form result.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WalkError};
use crate::model::WalkModel;

use super::truncated::{default_truncation, TruncatedSystem};

/// Default step sizes.
pub const DEFAULT_STEPS: [f64; 4] = [1e-4, 5e-5, 2.5e-5, 1.25e-5];

/// Extrapolated derivative with the tableau's error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated {
    pub value: f64,
    pub error_estimate: f64,
}

/// Extrapolates `samples[i] = f(h[i])` to `h = 0`, assuming
/// `f(h) = f(0) + c1 h + c2 h^2 + ...`.
pub fn richardson(steps: &[f64], samples: &[f64]) -> Extrapolated {
    assert_eq!(steps.len(), samples.len());
    let n = steps.len();
    assert!(n >= 2, "need at least two samples");
    let mut prev = samples.to_vec();
    let mut diag = vec![samples[0]];
    // prev[i - (order - 1)] holds T[i][order - 1].
    for order in 1..n {
        let next: Vec<f64> = (order..n)
            .map(|i| {
                let (hi, hlo) = (steps[i], steps[i - order]);
                let a = prev[i - order + 1];
                let b = prev[i - order];
                a + (a - b) * hi / (hlo - hi)
            })
            .collect();
        diag.push(next[0]);
        prev = next;
    }
    let value = *diag.last().unwrap();
    let error_estimate = (value - diag[n - 2]).abs();
    Extrapolated {
        value,
        error_estimate,
    }
}

fn check_steps(steps: &[f64]) -> Result<()> {
    if steps.len() < 3 {
        return Err(WalkError::InvalidArgument(
            "numeric differentiation needs at least 3 step sizes".into(),
        ));
    }
    if steps.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
        return Err(WalkError::InvalidArgument("step sizes must lie in (0, 1)".into()));
    }
    for (i, a) in steps.iter().enumerate() {
        if steps[i + 1..].contains(a) {
            return Err(WalkError::InvalidArgument("step sizes must be distinct".into()));
        }
    }
    Ok(())
}

/// `s0 X'_kN(1)` for every barrier in `ks`.
///
/// `tolerance` is relative: a value whose error estimate exceeds
/// `tolerance * max(1, |value|)` is reported as
/// [`WalkError::IllConditioned`].
pub fn gf_derivative_window(
    model: &WalkModel,
    ks: RangeInclusive<i64>,
    steps: &[f64],
    tolerance: f64,
) -> Result<BTreeMap<i64, Extrapolated>> {
    check_steps(steps)?;
    let reach = ks.start().unsigned_abs().max(ks.end().unsigned_abs()) as usize;
    let k_trunc = default_truncation(model) + reach;
    let at = |z: f64| TruncatedSystem::new(model, k_trunc, z)?.solve();
    let base = at(1.0)?;
    let shifted = steps
        .iter()
        .map(|&h| at(1.0 - h))
        .collect::<Result<Vec<_>>>()?;
    let n = model.n();
    let mut out = BTreeMap::new();
    for k in ks {
        let site = k * n;
        let x1 = base.get(site).expect("window inside truncation");
        let samples: Vec<f64> = steps
            .iter()
            .zip(&shifted)
            .map(|(&h, sol)| model.s0() * (x1 - sol.get(site).unwrap()) / h)
            .collect();
        let est = richardson(steps, &samples);
        if est.error_estimate > tolerance * est.value.abs().max(1.0) {
            return Err(WalkError::IllConditioned {
                error_estimate: est.error_estimate,
                tolerance,
            });
        }
        out.insert(k, est);
    }
    Ok(out)
}

/// `s0 X'_kN(1)` for one barrier.
pub fn gf_derivative(
    model: &WalkModel,
    k: i64,
    steps: &[f64],
    tolerance: f64,
) -> Result<Extrapolated> {
    Ok(gf_derivative_window(model, k..=k, steps, tolerance)?[&k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, RawModel};
    use approx::assert_relative_eq;

    #[test]
    fn richardson_exact_on_polynomials() {
        let f = |h: f64| 2.0 + 3.0 * h - 5.0 * h * h + 0.5 * h * h * h;
        let steps = [0.1, 0.05, 0.025, 0.0125];
        let samples: Vec<f64> = steps.iter().map(|&h| f(h)).collect();
        let est = richardson(&steps, &samples);
        assert_relative_eq!(est.value, 2.0, epsilon = 1e-12);
        let uneven = [0.1, 0.07, 0.02];
        let samples: Vec<f64> = uneven.iter().map(|&h| 1.0 + h - h * h).collect();
        assert_relative_eq!(richardson(&uneven, &samples).value, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn derivative_of_exponential() {
        let steps = [1e-2, 5e-3, 2.5e-3];
        let samples: Vec<f64> = steps.iter().map(|&h| (1f64.exp() - (1.0f64 - h).exp()) / h).collect();
        let est = richardson(&steps, &samples);
        assert_relative_eq!(est.value, 1f64.exp(), max_relative = 1e-7);
        assert!(est.error_estimate < 1e-4);
    }

    #[test]
    fn rejects_bad_steps() {
        let m = validate_model(RawModel {
            p: 0.4,
            q: 0.2,
            r: None,
            p0: 0.2,
            q0: 0.2,
            r0: None,
            s0: 0.2,
            n: 2,
            i0: 0,
        })
        .unwrap();
        assert!(gf_derivative(&m, 0, &[1e-3, 5e-4], 1e-6).is_err());
        assert!(gf_derivative(&m, 0, &[1e-3, 1e-3, 5e-4], 1e-6).is_err());
        assert!(gf_derivative(&m, 0, &[1e-3, 0.0, 5e-4], 1e-6).is_err());
        assert!(matches!(
            gf_derivative(&m, 0, &[0.5, 0.4, 0.3], 1e-12),
            Err(WalkError::IllConditioned { .. })
        ));
    }
}
