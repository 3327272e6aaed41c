//! Mean absorption times.
//!
//! `m_i` is the expected number of steps before absorption when starting
//! at `i`; the absorbing transition itself is not counted. It is periodic
//! in `i` with period `N` and is available in closed form on both branches.
//!
//! `m_0k = s0 dX_kN/dz (z = 1)` splits `m_0` by the barrier that finally
//! absorbs the walk (so `sum_k m_0k = m_0`). It has a closed form only on the
//! drift branch and only for a walk started at a barrier.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{FormulaDiscrepancy, Result, WalkError};
use crate::model::{BarrierSpectrum, Branch, WalkModel};
use crate::visits::FORMULA_TOLERANCE;

/// Closed form on the drift branch.
///
/// Evaluated with all `rho^a` terms written as `1 + expm1(a ln rho)` and the
/// constant terms cancelled exactly, so it stays accurate close to balance.
pub fn drift_mean_time(model: &WalkModel, i: i64) -> f64 {
    let i = i.rem_euclid(model.n()) as f64;
    let n = model.n() as f64;
    let (p0, q0, s0) = (model.p0(), model.q0(), model.s0());
    let e = |a: f64| model.rho_pow_m1(-a);
    let numer = n * s0 * e(i) + n * p0 * e(1.0) + n * q0 * e(n - 1.0)
        - (i * s0 + p0 + q0 * (n - 1.0)) * e(n);
    (1.0 - s0) / s0 + numer / ((model.q() - model.p()) * -e(n) * s0)
}

/// The drift closed form evaluated term by term as printed.
pub fn drift_mean_time_printed(model: &WalkModel, i: i64) -> f64 {
    let i = i.rem_euclid(model.n()) as f64;
    let n = model.n() as f64;
    let (p, q, rho) = (model.p(), model.q(), model.rho());
    let (p0, q0, r0, s0) = (model.p0(), model.q0(), model.r0(), model.s0());
    let wrap = (q - p) * (1.0 - rho.powf(-n));
    n * rho.powf(-i) / wrap
        + i / (q - p)
        + (p0 + q0 * (n - 1.0)) / ((q - p) * s0)
        + (1.0 - s0) / s0
        + n * (p0 / rho + q0 * rho.powf(1.0 - n) + r0 - 1.0) / (wrap * s0)
}

/// Closed form on the balanced branch.
pub fn balanced_mean_time(model: &WalkModel, i: i64) -> f64 {
    let i = i.rem_euclid(model.n()) as f64;
    let n = model.n() as f64;
    let (p, p0, q0, s0) = (model.p(), model.p0(), model.q0(), model.s0());
    n * i / (2.0 * p) - i * i / (2.0 * p) + (p0 + q0) * (n - 1.0) / (2.0 * p * s0)
        + (1.0 - s0) / s0
}

/// Solves the defining system over one period:
/// `(1-r) m_i = p m_(i+1) + q m_(i-1) + 1` for `0 < i < N` and
/// `(1-r0) m_0 = p0 m_1 + q0 m_(N-1) + 1 - s0`, with `m_N = m_0`.
///
/// Returns `m_0 ..= m_N`.
pub fn periodic_mean_times(model: &WalkModel) -> Result<Vec<f64>> {
    let n = model.n() as usize;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for i in 0..n {
        let site = i as i64;
        let (next, prev) = ((i + 1) % n, (i + n - 1) % n);
        a[(i, i)] += 1.0 - model.hold(site);
        a[(i, next)] -= model.forward(site);
        a[(i, prev)] -= model.backward(site);
        b[i] = 1.0 - model.absorb(site);
    }
    let solution = a
        .lu()
        .solve(&b)
        .ok_or(WalkError::SingularSystem { row: 0 })?;
    let mut values: Vec<f64> = solution.iter().copied().collect();
    values.push(values[0]);
    Ok(values)
}

/// `m_i` for any integer `i`, from the closed form of the model's branch.
pub fn mean_time_any(model: &WalkModel, i: i64) -> f64 {
    match model.branch() {
        Branch::Drift => drift_mean_time(model, i),
        Branch::Balanced => balanced_mean_time(model, i),
    }
}

/// All z-derivatives at `z = 1` used by the per-barrier split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeBundle {
    pub dlambda1: f64,
    pub dlambda2: f64,
    pub zeta: f64,
    pub dzeta: f64,
    /// `d omega0 / dz` by the chain rule through `lambda1(z)`, `lambda2(z)`.
    pub domega0: f64,
    /// `d omega0 / dz` as printed, which omits the `(1 - r0)` and
    /// `(N-1)(rho q0 + p0)` factors in the `zeta` term.
    pub domega0_printed: f64,
    pub dxi1: f64,
    pub dxi2: f64,
    pub alpha: f64,
}

pub fn spectral_derivatives(model: &WalkModel) -> Result<DerivativeBundle> {
    if model.branch() == Branch::Balanced {
        return Err(WalkError::BalancedUnsupported);
    }
    let s = BarrierSpectrum::drift(model)?;
    let n = model.n() as f64;
    let rho = model.rho();
    let (l1, l2) = (rho.max(1.0), rho.min(1.0));
    let zeta = 1.0 / (model.p() - model.q()).abs();
    let alpha = model.alpha();
    let omega0 = s.omega0.expect("drift spectrum");
    let coupling = rho * model.q0() + model.p0();

    let shared = model.r0() * model.lambda_gap_pow(n) + coupling * model.lambda_gap_pow(n - 1.0);
    let domega0 = shared
        + zeta
            * (n * (1.0 - model.r0()) * model.lambda_sum_pow(n)
                - (n - 1.0) * coupling * model.lambda_sum_pow(n - 1.0));
    let domega0_printed =
        shared + zeta * (n * model.lambda_sum_pow(n) - model.lambda_sum_pow(n - 1.0));

    let xi_rate = s.omega * (alpha * omega0 * zeta * zeta + domega0);
    Ok(DerivativeBundle {
        dlambda1: -zeta * l1,
        dlambda2: zeta * l2,
        zeta,
        dzeta: zeta.powi(3) * alpha,
        domega0,
        domega0_printed,
        dxi1: -s.xi1 * xi_rate,
        dxi2: s.xi2 * xi_rate,
        alpha,
    })
}

/// `m_0k` evaluated three ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierTimeVariants {
    /// Chain-rule derivative of `Omega(z) (l1^N - l2^N) xi(z)^k`.
    pub proof_chain: f64,
    /// Printed expression with `Omega = [..]^(-1/2)` and the printed
    /// `d omega0/dz`.
    pub printed: f64,
    /// Printed expression read literally, `Omega = [..]^(+1/2)`.
    pub printed_verbatim: f64,
}

fn check_barrier_start(model: &WalkModel) -> Result<()> {
    if model.branch() == Branch::Balanced {
        return Err(WalkError::BalancedUnsupported);
    }
    if model.i0() != 0 {
        return Err(WalkError::StartNotBarrier { i0: model.i0() });
    }
    Ok(())
}

/// `s0 Omega xi^k { -N(1+rho^N) zeta + (l1^N - l2^N) Omega { |k| [w' + alpha w zeta^2]
///   - Omega [w w' + 4 p0 q0 rho^N alpha / (pq)] } }`
fn barrier_time_expr(
    model: &WalkModel,
    k: i64,
    xi: f64,
    omega: f64,
    domega0: f64,
    bundle: &DerivativeBundle,
    omega0: f64,
) -> f64 {
    let n = model.n() as f64;
    let rho = model.rho();
    let zeta = bundle.zeta;
    let alpha = bundle.alpha;
    let (p, q, p0, q0) = (model.p(), model.q(), model.p0(), model.q0());
    let spread = -n * model.lambda_sum_pow(n) * zeta;
    let rate = k.unsigned_abs() as f64 * (domega0 + alpha * omega0 * zeta * zeta);
    let norm = omega * (omega0 * domega0 + 4.0 * p0 * q0 / (p * q) * rho.powf(n) * alpha);
    model.s0()
        * omega
        * xi.powi(k as i32)
        * (spread + model.lambda_gap_pow(n) * omega * (rate - norm))
}

fn branch_root(s: &BarrierSpectrum, k: i64) -> f64 {
    if k <= 0 {
        s.xi1
    } else {
        s.xi2
    }
}

pub fn barrier_time_variants(model: &WalkModel, k: i64) -> Result<BarrierTimeVariants> {
    check_barrier_start(model)?;
    let s = BarrierSpectrum::drift(model)?;
    let bundle = spectral_derivatives(model)?;
    let omega0 = s.omega0.expect("drift spectrum");
    let xi = branch_root(&s, k);
    Ok(BarrierTimeVariants {
        proof_chain: barrier_time_expr(model, k, xi, s.omega, bundle.domega0, &bundle, omega0),
        printed: barrier_time_expr(
            model,
            k,
            xi,
            s.omega,
            bundle.domega0_printed,
            &bundle,
            omega0,
        ),
        printed_verbatim: barrier_time_expr(
            model,
            k,
            xi,
            1.0 / s.omega,
            bundle.domega0_printed,
            &bundle,
            omega0,
        ),
    })
}

/// `m_0k`, the expected number of steps before absorption accumulated by
/// walks that end at barrier `kN`, for a walk started at barrier 0.
pub fn mean_time_to_barrier(model: &WalkModel, k: i64) -> Result<f64> {
    Ok(barrier_time_variants(model, k)?.proof_chain)
}

/// Mean absorption times over one period and the per-barrier split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionTimes {
    pub model: WalkModel,
    /// `m_0 ..= m_N`.
    pub period_values: Vec<f64>,
    /// `m_0k`; empty when no closed form applies (balanced, or `i0 != 0`).
    pub per_barrier: BTreeMap<i64, f64>,
    #[serde(skip)]
    pub diagnostics: Vec<FormulaDiscrepancy>,
}

impl AbsorptionTimes {
    /// Evaluates `m_i` from the closed form, falling back to the periodic
    /// solve (with a diagnostic) where the two disagree beyond `1e-9`.
    pub fn new(model: &WalkModel, window: RangeInclusive<i64>) -> Result<Self> {
        let solved = periodic_mean_times(model)?;
        let mut diagnostics = Vec::new();
        let period_values = solved
            .iter()
            .enumerate()
            .map(|(i, &exact)| {
                let formula = mean_time_any(model, i as i64);
                match FormulaDiscrepancy::check("m", i as i64, formula, exact, FORMULA_TOLERANCE)
                {
                    Some(d) => {
                        diagnostics.push(d);
                        exact
                    }
                    None => formula,
                }
            })
            .collect();

        let mut per_barrier = BTreeMap::new();
        if check_barrier_start(model).is_ok() {
            let s = BarrierSpectrum::drift(model)?;
            let bundle = spectral_derivatives(model)?;
            let omega0 = s.omega0.expect("drift spectrum");
            // Both roots must give the same value at k = 0.
            let left = barrier_time_expr(model, 0, s.xi1, s.omega, bundle.domega0, &bundle, omega0);
            let right =
                barrier_time_expr(model, 0, s.xi2, s.omega, bundle.domega0, &bundle, omega0);
            diagnostics.extend(FormulaDiscrepancy::check(
                "m0k_root_consistency",
                0,
                right,
                left,
                FORMULA_TOLERANCE,
            ));
            for k in window {
                let v = barrier_time_variants(model, k)?;
                diagnostics.extend(FormulaDiscrepancy::check(
                    "m0k_printed",
                    k,
                    v.printed,
                    v.proof_chain,
                    FORMULA_TOLERANCE,
                ));
                per_barrier.insert(k, v.proof_chain);
            }
        }
        Ok(Self {
            model: *model,
            period_values,
            per_barrier,
            diagnostics,
        })
    }

    /// `m_i` for any integer `i`.
    pub fn at(&self, i: i64) -> f64 {
        self.period_values[i.rem_euclid(self.model.n()) as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lambda_pair, validate_model, RawModel};
    use approx::assert_relative_eq;

    #[allow(clippy::too_many_arguments)]
    fn model(p: f64, q: f64, p0: f64, q0: f64, r0: f64, s0: f64, n: i64, i0: i64) -> WalkModel {
        validate_model(RawModel {
            p,
            q,
            r: None,
            p0,
            q0,
            r0: Some(r0),
            s0,
            n,
            i0,
        })
        .unwrap()
    }

    fn cfg_sym() -> WalkModel {
        model(0.5, 0.5, 0.25, 0.25, 0.25, 0.25, 2, 0)
    }

    fn cfg_drift() -> WalkModel {
        model(0.4, 0.2, 0.2, 0.2, 0.4, 0.2, 2, 0)
    }

    #[test]
    fn hand_solved_periods() {
        // 0.75 m0 = 0.5 m1 + 0.75, m1 = m0 + 1
        assert_relative_eq!(mean_time_any(&cfg_sym(), 0), 5.0, epsilon = 1e-12);
        assert_relative_eq!(mean_time_any(&cfg_sym(), 1), 6.0, epsilon = 1e-12);
        // 0.6 m0 = 0.4 m1 + 0.8, 0.6 m1 = 0.6 m0 + 1
        assert_relative_eq!(mean_time_any(&cfg_drift(), 0), 22.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(mean_time_any(&cfg_drift(), 1), 9.0, epsilon = 1e-12);
        let solved = periodic_mean_times(&cfg_drift()).unwrap();
        assert_relative_eq!(solved[0], 22.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(solved[1], 9.0, epsilon = 1e-12);
        assert_eq!(solved[0], solved[2]);
    }

    #[test]
    fn periodic_in_start() {
        let m = model(0.3, 0.45, 0.2, 0.3, 0.1, 0.4, 5, 3);
        for i in 0..5 {
            assert_eq!(mean_time_any(&m, i + 5), mean_time_any(&m, i));
            assert_eq!(mean_time_any(&m, i - 10), mean_time_any(&m, i));
        }
        let times = AbsorptionTimes::new(&m, 0..=0).unwrap();
        assert_eq!(times.at(7), times.at(2));
    }

    #[test]
    fn stable_and_printed_drift_forms_agree() {
        for m in [
            cfg_drift(),
            model(0.3, 0.45, 0.2, 0.3, 0.1, 0.4, 5, 3),
            model(0.5, 0.2, 0.3, 0.1, 0.2, 0.4, 4, 1),
        ] {
            for i in 0..=m.n() {
                assert_relative_eq!(
                    drift_mean_time(&m, i),
                    drift_mean_time_printed(&m, i),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn derivative_bundle_cfg_drift() {
        let b = spectral_derivatives(&cfg_drift()).unwrap();
        assert_relative_eq!(b.dlambda1, -10.0, epsilon = 1e-12);
        assert_relative_eq!(b.dlambda2, 5.0, epsilon = 1e-12);
        assert_relative_eq!(b.alpha, 0.56, epsilon = 1e-14);
        assert_relative_eq!(b.dzeta, 70.0, epsilon = 1e-10);
    }

    /// Richardson-extrapolated backward difference of `f` at `z = 1`.
    fn backward_derivative(f: impl Fn(f64) -> f64) -> f64 {
        let h = 1e-4;
        let d = |h: f64| (f(1.0) - f(1.0 - h)) / h;
        let (d1, d2, d3) = (d(h), d(h / 2.0), d(h / 4.0));
        let (e1, e2) = (2.0 * d2 - d1, 2.0 * d3 - d2);
        (4.0 * e2 - e1) / 3.0
    }

    #[test]
    fn derivative_bundle_matches_finite_differences() {
        for m in [
            cfg_drift(),
            model(0.3, 0.45, 0.2, 0.3, 0.1, 0.4, 5, 0),
            model(0.5, 0.2, 0.3, 0.1, 0.2, 0.4, 4, 0),
        ] {
            let b = spectral_derivatives(&m).unwrap();
            let s = BarrierSpectrum::drift(&m).unwrap();
            let l1 = backward_derivative(|z| lambda_pair(&m, z).unwrap().lambda1);
            let l2 = backward_derivative(|z| lambda_pair(&m, z).unwrap().lambda2);
            let zeta = backward_derivative(|z| lambda_pair(&m, z).unwrap().zeta().unwrap());
            let w = backward_derivative(|z| s.omega0_at(z).unwrap());
            let x1 = backward_derivative(|z| s.xi_at(z).unwrap().0);
            let x2 = backward_derivative(|z| s.xi_at(z).unwrap().1);
            assert_relative_eq!(b.dlambda1, l1, max_relative = 1e-6);
            assert_relative_eq!(b.dlambda2, l2, max_relative = 1e-6);
            assert_relative_eq!(b.dzeta, zeta, max_relative = 1e-6);
            assert_relative_eq!(b.domega0, w, max_relative = 1e-6);
            assert_relative_eq!(b.dxi1, x1, max_relative = 1e-6);
            assert_relative_eq!(b.dxi2, x2, max_relative = 1e-6);
            assert!((b.domega0_printed - w).abs() > 1e-3);
        }
    }

    #[test]
    fn barrier_time_errors() {
        assert_eq!(
            mean_time_to_barrier(&cfg_sym(), 0),
            Err(WalkError::BalancedUnsupported)
        );
        let off = model(0.4, 0.2, 0.2, 0.2, 0.4, 0.2, 3, 1);
        assert_eq!(
            mean_time_to_barrier(&off, 0),
            Err(WalkError::StartNotBarrier { i0: 1 })
        );
        assert!(spectral_derivatives(&cfg_sym()).is_err());
    }

    #[test]
    fn barrier_time_ratio_tends_to_xi2() {
        let m = cfg_drift();
        let s = BarrierSpectrum::drift(&m).unwrap();
        let r = mean_time_to_barrier(&m, 6).unwrap() / mean_time_to_barrier(&m, 5).unwrap();
        // ratio = xi2 (6/5-ish correction from the |k| term)
        assert!((r / s.xi2 - 1.0).abs() < 0.25);
        assert!(r < 1.0);
    }

    #[test]
    fn absorption_times_flags_printed_split() {
        let t = AbsorptionTimes::new(&cfg_drift(), -2..=2).unwrap();
        assert_eq!(t.per_barrier.len(), 5);
        assert!(t.diagnostics.iter().any(|d| d.quantity == "m0k_printed"));
        assert!(t.diagnostics.iter().all(|d| d.quantity != "m"));
        let sym = AbsorptionTimes::new(&cfg_sym(), -2..=2).unwrap();
        assert!(sym.per_barrier.is_empty());
    }
}
