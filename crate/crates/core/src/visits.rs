//! Expected number of arrivals at every site, absorption masses and reach
//! probabilities.
//!
//! Barrier values follow a three-term recurrence whose solution is
//! `x[kN] = C1 xi1^k` for `k <= 0` and `x[kN] = K2 xi2^k` for `k >= 1`.
//! The constants come from the two boundary conditions at `k = 0` and
//! `k = 1`; the printed closed-form solution is evaluated alongside as a
//! cross-check. Sites between barriers interpolate the two neighbouring
//! barrier values, plus the start-site source inside the interval `[0, N]`.
//!
//! Arrival counts include the time-zero occupation of the start site.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::Serialize;

use crate::error::{FormulaDiscrepancy, Result};
use crate::model::{barrier_spectrum, BarrierSpectrum, Branch, WalkModel};

/// Relative tolerance for printed-formula cross-checks.
pub const FORMULA_TOLERANCE: f64 = 1e-9;

/// Closed-form evaluator for one model.
#[derive(Debug, Clone)]
pub struct VisitEngine {
    model: WalkModel,
    spectrum: BarrierSpectrum,
    c1: f64,
    k2: f64,
    diagnostics: Vec<FormulaDiscrepancy>,
}

impl VisitEngine {
    pub fn new(model: &WalkModel) -> Self {
        let spectrum = barrier_spectrum(model);
        let (rhs0, rhs1) = boundary_rhs(model);
        let (xi1, xi2) = (spectrum.xi1, spectrum.xi2);
        // -C1 xi1 + K2 xi2 = rhs0 / q0 and C1 - K2 = rhs1 / c
        let a = rhs0 / model.q0();
        let b = rhs1 / spectrum.lower_coeff();
        let c1 = -(a + b * xi2) / (xi1 - xi2);
        let k2 = c1 - b;

        let (printed_c1, printed_k2) = printed_constants(model, &spectrum);
        let diagnostics = [
            FormulaDiscrepancy::check("x_kN", 0, printed_c1, c1, FORMULA_TOLERANCE),
            FormulaDiscrepancy::check("x_kN", 1, printed_k2 * xi2, k2 * xi2, FORMULA_TOLERANCE),
        ]
        .into_iter()
        .flatten()
        .collect();

        Self {
            model: *model,
            spectrum,
            c1,
            k2,
            diagnostics,
        }
    }

    pub fn model(&self) -> &WalkModel {
        &self.model
    }

    pub fn spectrum(&self) -> &BarrierSpectrum {
        &self.spectrum
    }

    /// `C1`, the coefficient of `xi1^k` for `k <= 0`.
    pub fn barrier_coeff_left(&self) -> f64 {
        self.c1
    }

    /// `K2`, the coefficient of `xi2^k` for `k >= 1`.
    pub fn barrier_coeff_right(&self) -> f64 {
        self.k2
    }

    /// Mismatches between the printed barrier solution and the boundary
    /// system. Empty when they agree.
    pub fn diagnostics(&self) -> &[FormulaDiscrepancy] {
        &self.diagnostics
    }

    /// `x[kN]`.
    pub fn barrier(&self, k: i64) -> f64 {
        if k <= 0 {
            self.c1 * self.spectrum.xi1.powi(k as i32)
        } else {
            self.k2 * self.spectrum.xi2.powi(k as i32)
        }
    }

    /// `x[j]` for any site.
    pub fn site(&self, j: i64) -> f64 {
        let n_sites = self.model.n();
        let (k, n) = (j.div_euclid(n_sites), j.rem_euclid(n_sites));
        if n == 0 {
            return self.barrier(k);
        }
        let homogeneous = self.interpolate(k, n);
        if k != 0 {
            return homogeneous;
        }
        homogeneous + self.start_source(n, n <= self.model.i0())
    }

    /// Solution inside `(kN, (k+1)N)` driven by the two barrier values only.
    fn interpolate(&self, k: i64, n: i64) -> f64 {
        let m = &self.model;
        let left = m.p0() / m.p() * self.barrier(k);
        let right = m.q0() / m.q() * self.barrier(k + 1);
        let (n, big_n) = (n as f64, m.n() as f64);
        match m.branch() {
            Branch::Drift => {
                let (en, e_big) = (m.rho_pow_m1(n), m.rho_pow_m1(big_n));
                (left * (en - e_big) - right * en) / -e_big
            }
            Branch::Balanced => (right * n + left * (big_n - n)) / big_n,
        }
    }

    /// Source term of the start interval. `lower` picks the sub-branch for
    /// `n <= i0`; both agree at `n = i0`.
    fn start_source(&self, n: i64, lower: bool) -> f64 {
        let m = &self.model;
        let (n, big_n, i0) = (n as f64, m.n() as f64, m.i0() as f64);
        match m.branch() {
            Branch::Drift => {
                let e_big = m.rho_pow_m1(big_n);
                let numer = if lower {
                    m.rho_pow_m1(n) * m.rho_pow_m1(big_n - i0)
                } else {
                    (m.rho_pow_m1(n) - e_big) * m.rho_pow_m1(-i0)
                };
                numer / ((m.p() - m.q()) * e_big)
            }
            Branch::Balanced => {
                let numer = if lower { n * (big_n - i0) } else { i0 * (big_n - n) };
                numer / (m.p() * big_n)
            }
        }
    }

    /// `s0 x[kN]`, the probability of absorption at barrier `kN`.
    pub fn absorption_mass(&self, k: i64) -> f64 {
        self.model.s0() * self.barrier(k)
    }

    /// Sum of all absorption masses via the two geometric series.
    pub fn total_absorption(&self) -> f64 {
        let (xi1, xi2) = (self.spectrum.xi1, self.spectrum.xi2);
        self.model.s0() * (self.c1 * xi1 / (xi1 - 1.0) + self.k2 * xi2 / (1.0 - xi2))
    }

    /// Right-hand side of the barrier recurrence at `k`.
    pub fn recurrence_rhs(&self, k: i64) -> f64 {
        let (rhs0, rhs1) = boundary_rhs(&self.model);
        match k {
            0 => rhs0,
            1 => rhs1,
            _ => 0.0,
        }
    }

    /// Scaled residual of the barrier recurrence at `k`:
    /// `|q0 x[(k+1)N] + b x[kN] + c x[(k-1)N] - rhs(k)| / max(1, largest term)`.
    pub fn recurrence_residual(&self, k: i64) -> f64 {
        let terms = [
            self.model.q0() * self.barrier(k + 1),
            self.spectrum.linear_coeff() * self.barrier(k),
            self.spectrum.lower_coeff() * self.barrier(k - 1),
            -self.recurrence_rhs(k),
        ];
        scaled_sum(&terms)
    }

    /// Scaled residual of the one-step balance at site `j`:
    /// `x[j] = delta(j, i0) + fwd(j-1) x[j-1] + bwd(j+1) x[j+1] + hold(j) x[j]`.
    pub fn balance_residual(&self, j: i64) -> f64 {
        let m = &self.model;
        let source = if j == m.i0() { 1.0 } else { 0.0 };
        let terms = [
            (1.0 - m.hold(j)) * self.site(j),
            -m.forward(j - 1) * self.site(j - 1),
            -m.backward(j + 1) * self.site(j + 1),
            -source,
        ];
        scaled_sum(&terms)
    }

    /// Sum of `x[j]` over sites `-KN ..= KN`.
    pub fn total_visits(&self, k_max: i64) -> f64 {
        let n = self.model.n();
        (-k_max * n..=k_max * n).map(|j| self.site(j)).sum()
    }

    /// Materializes `x[j]` for the barriers `k` in `window` and every site
    /// between them.
    pub fn profile(&self, window: RangeInclusive<i64>) -> VisitProfile {
        let n = self.model.n();
        let values = (window.start() * n..=window.end() * n)
            .map(|j| (j, self.site(j)))
            .collect();
        VisitProfile {
            model: self.model,
            barrier_coeff_left: self.c1,
            barrier_coeff_right: self.k2,
            window,
            values,
        }
    }
}

fn scaled_sum(terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(1.0f64, |acc, t| acc.max(t.abs()));
    terms.iter().sum::<f64>().abs() / scale
}

/// Right-hand sides of the barrier recurrence at `k = 0` and `k = 1`.
fn boundary_rhs(model: &WalkModel) -> (f64, f64) {
    let (big_n, i0) = (model.n() as f64, model.i0() as f64);
    match model.branch() {
        Branch::Drift => {
            let gap = (1.0 - model.rho()).abs();
            (
                -model.lambda_gap_pow(big_n - i0) / gap,
                model.rho().powf(big_n) * model.lambda_gap_pow(-i0) / gap,
            )
        }
        Branch::Balanced => (i0 - big_n, -i0),
    }
}

/// `(C1, K2)` read off the printed closed-form solution.
fn printed_constants(model: &WalkModel, s: &BarrierSpectrum) -> (f64, f64) {
    let (big_n, i0) = (model.n() as f64, model.i0() as f64);
    match model.branch() {
        Branch::Drift => {
            let outer = model.lambda_gap_pow(big_n - i0);
            let inner = model.rho().powf(big_n) * -model.lambda_gap_pow(-i0);
            (
                (outer * s.xi1 + inner) * s.omega / s.xi1,
                (outer * s.xi2 + inner) * s.omega / s.xi2,
            )
        }
        Branch::Balanced => {
            let ratio = i0 * model.q0() / model.p0();
            (
                (ratio * s.xi2 + big_n - i0) * s.omega,
                (ratio * s.xi1 + big_n - i0) * s.omega,
            )
        }
    }
}

/// Expected arrivals over a finite window of sites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitProfile {
    pub model: WalkModel,
    pub barrier_coeff_left: f64,
    pub barrier_coeff_right: f64,
    /// Barrier indices `k` covered; sites run from `start*N` to `end*N`.
    pub window: RangeInclusive<i64>,
    pub values: BTreeMap<i64, f64>,
}

impl VisitProfile {
    /// `(site, x, absorption mass)` rows; the mass is `None` off-barrier.
    pub fn rows(&self) -> impl Iterator<Item = (i64, f64, Option<f64>)> + '_ {
        self.values.iter().map(|(&j, &x)| {
            let mass = self.model.is_barrier(j).then(|| self.model.s0() * x);
            (j, x, mass)
        })
    }
}

/// `x[kN]` for the model's own start site.
pub fn barrier_visits(model: &WalkModel, k: i64) -> f64 {
    VisitEngine::new(model).barrier(k)
}

/// `x[j]` for the model's own start site.
pub fn site_visits(model: &WalkModel, j: i64) -> f64 {
    VisitEngine::new(model).site(j)
}

/// `s0 x[kN]`.
pub fn absorption_mass(model: &WalkModel, k: i64) -> f64 {
    VisitEngine::new(model).absorption_mass(k)
}

/// Total absorption probability; equals one for every valid model.
pub fn total_absorption(model: &WalkModel) -> f64 {
    VisitEngine::new(model).total_absorption()
}

/// Expected arrivals at `j` for a walk started at an arbitrary site `i`.
///
/// The lattice is invariant under shifts by `N`, so the start is moved into
/// `[0, N)` and `j` is shifted with it.
pub fn visits_from(model: &WalkModel, i: i64, j: i64) -> Result<f64> {
    let (shift, start) = model.anchor(i);
    let anchored = model.with_start(start)?;
    Ok(VisitEngine::new(&anchored).site(j - shift))
}

/// Probability of ever reaching `j` from `i`: `x_ij / x_jj` for `i != j`
/// and `1 - 1/x_ii` for a return.
pub fn reach_probability(model: &WalkModel, i: i64, j: i64) -> Result<f64> {
    let x_jj = visits_from(model, j, j)?;
    if i == j {
        return Ok(1.0 - 1.0 / x_jj);
    }
    Ok(visits_from(model, i, j)? / x_jj)
}
