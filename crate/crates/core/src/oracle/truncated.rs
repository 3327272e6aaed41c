//! Finite linear-system approximation of the infinite walk.
//!
//! Sites `-KN ..= KN` are kept as transient states. A step out of that range
//! lands in an exit sink whose mass is reported as `leak`, separate from
//! barrier absorption. The generating function row `X(z)` solves
//! `X (I - zP) = e_i0`, which is the tridiagonal system assembled here in
//! transposed form.

use std::collections::BTreeMap;

use crate::absorption::periodic_mean_times;
use crate::error::{Result, WalkError};
use crate::model::{barrier_spectrum, WalkModel};

use super::banded::Tridiagonal;

/// Target tail bound for the default truncation.
pub const TAIL_TARGET: f64 = 1e-12;

/// Geometric decay rate of barrier values away from the start,
/// `max(xi2, 1/xi1)`.
pub fn tail_ratio(model: &WalkModel) -> f64 {
    let s = barrier_spectrum(model);
    s.xi2.max(1.0 / s.xi1)
}

/// `ceil(ln(1e-12) / ln(ratio)) + 5`, at least 3.
pub fn default_truncation(model: &WalkModel) -> usize {
    let k = (TAIL_TARGET.ln() / tail_ratio(model).ln()).ceil() as usize + 5;
    k.max(3)
}

/// `ratio^K`.
pub fn tail_bound(model: &WalkModel, k: usize) -> f64 {
    tail_ratio(model).powi(k as i32)
}

/// The assembled system `(I - zP)^T X^T = e_i0` over `-KN ..= KN`.
#[derive(Debug, Clone)]
pub struct TruncatedSystem {
    pub model: WalkModel,
    pub k: usize,
    pub z: f64,
    /// Site index of row 0.
    pub lo: i64,
    pub matrix: Tridiagonal,
    pub rhs: Vec<f64>,
}

impl TruncatedSystem {
    pub fn new(model: &WalkModel, k: usize, z: f64) -> Result<Self> {
        if k < 1 {
            return Err(WalkError::InvalidArgument("truncation K must be >= 1".into()));
        }
        if !(z > 0.0 && z <= 1.0) {
            return Err(WalkError::InvalidArgument(format!("z = {z} outside (0, 1]")));
        }
        let lo = -(k as i64) * model.n();
        let len = (2 * (-lo) + 1) as usize;
        let mut sub = vec![0.0; len];
        let mut diag = vec![0.0; len];
        let mut sup = vec![0.0; len];
        for (row, site) in (lo..=-lo).enumerate() {
            diag[row] = 1.0 - z * model.hold(site);
            sub[row] = -z * model.forward(site - 1);
            sup[row] = -z * model.backward(site + 1);
        }
        sub[0] = 0.0;
        sup[len - 1] = 0.0;
        let mut rhs = vec![0.0; len];
        rhs[(model.i0() - lo) as usize] = 1.0;
        Ok(Self {
            model: *model,
            k,
            z,
            lo,
            matrix: Tridiagonal { sub, diag, sup },
            rhs,
        })
    }

    pub fn hi(&self) -> i64 {
        -self.lo
    }

    pub fn solve(&self) -> Result<TruncatedSolution> {
        let values = self.matrix.solve(&self.rhs)?;
        Ok(self.wrap(values))
    }

    /// Exact `dX/dz` of the truncated generating function at this `z`,
    /// from `X' (I - zP) = X P`.
    pub fn derivative(&self, solution: &TruncatedSolution) -> Result<Vec<f64>> {
        let m = &self.model;
        let x = &solution.values;
        let len = x.len();
        let rhs: Vec<f64> = (0..len)
            .map(|row| {
                let site = self.lo + row as i64;
                let mut v = m.hold(site) * x[row];
                if row > 0 {
                    v += m.forward(site - 1) * x[row - 1];
                }
                if row + 1 < len {
                    v += m.backward(site + 1) * x[row + 1];
                }
                v
            })
            .collect();
        self.matrix.solve(&rhs)
    }

    fn wrap(&self, values: Vec<f64>) -> TruncatedSolution {
        let m = &self.model;
        let (lo, hi) = (self.lo, self.hi());
        let leak = m.backward(lo) * values[0] + m.forward(hi) * values[values.len() - 1];
        let absorbed = (lo..=hi)
            .zip(&values)
            .map(|(site, x)| m.absorb(site) * x)
            .sum();
        TruncatedSolution {
            model: *m,
            k: self.k,
            z: self.z,
            lo,
            values,
            absorbed,
            leak,
            tail_bound: tail_bound(m, self.k),
        }
    }
}

/// `X_j(z)` over the truncated window.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSolution {
    pub model: WalkModel,
    pub k: usize,
    pub z: f64,
    pub lo: i64,
    pub values: Vec<f64>,
    /// `sum s0 X_kN`; the absorbed probability at `z = 1`.
    pub absorbed: f64,
    /// Flow into the two exit sinks; the lost probability at `z = 1`.
    pub leak: f64,
    pub tail_bound: f64,
}

impl TruncatedSolution {
    pub fn get(&self, site: i64) -> Option<f64> {
        let row = site - self.lo;
        if row < 0 {
            return None;
        }
        self.values.get(row as usize).copied()
    }

    pub fn sites(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        (self.lo..).zip(self.values.iter().copied())
    }

    pub fn to_map(&self) -> BTreeMap<i64, f64> {
        self.sites().collect()
    }
}

/// Solves the truncated system for `X_j(z)`.
pub fn truncated_visits(model: &WalkModel, k: usize, z: f64) -> Result<TruncatedSolution> {
    if k < 3 {
        return Err(WalkError::InvalidArgument("truncation K must be >= 3".into()));
    }
    TruncatedSystem::new(model, k, z)?.solve()
}

/// As [`truncated_visits`], refusing truncations whose tail bound exceeds
/// `tolerance`.
pub fn truncated_visits_within(
    model: &WalkModel,
    k: usize,
    z: f64,
    tolerance: f64,
) -> Result<TruncatedSolution> {
    let bound = tail_bound(model, k);
    if bound > tolerance {
        return Err(WalkError::TruncationInsufficient {
            k,
            tail_bound: bound,
            tolerance,
        });
    }
    truncated_visits(model, k, z)
}

/// Oracle mean times.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMeanTimes {
    /// `m_0 ..= m_N` from the exact periodic system.
    pub period_values: Vec<f64>,
    /// `s0 X'_kN(1)` for every barrier in the truncated window.
    pub per_barrier: BTreeMap<i64, f64>,
    /// `sum_j X'_j(1) * (absorption + exit) rate`: expected steps before
    /// absorption or exit, from the derivative solve.
    pub absorbed_time: f64,
    pub tail_bound: f64,
}

/// Mean absorption times from the exact periodic system plus the per-barrier
/// split from the derivative of the truncated generating function.
pub fn truncated_mean_times(model: &WalkModel, k: usize) -> Result<TruncatedMeanTimes> {
    if k < 3 {
        return Err(WalkError::InvalidArgument("truncation K must be >= 3".into()));
    }
    let period_values = periodic_mean_times(model)?;
    let system = TruncatedSystem::new(model, k, 1.0)?;
    let solution = system.solve()?;
    let derivative = system.derivative(&solution)?;
    let per_barrier: BTreeMap<i64, f64> = (system.lo..=system.hi())
        .zip(&derivative)
        .filter(|(site, _)| model.is_barrier(*site))
        .map(|(site, d)| (site.div_euclid(model.n()), model.s0() * d))
        .collect();
    let exit_time = model.backward(system.lo) * derivative[0]
        + model.forward(system.hi()) * derivative[derivative.len() - 1];
    Ok(TruncatedMeanTimes {
        absorbed_time: per_barrier.values().sum::<f64>() + exit_time,
        period_values,
        per_barrier,
        tail_bound: solution.tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, RawModel};
    use approx::assert_relative_eq;

    fn cfg(p: f64, q: f64, p0: f64, q0: f64, r0: f64, s0: f64) -> WalkModel {
        validate_model(RawModel {
            p,
            q,
            r: None,
            p0,
            q0,
            r0: Some(r0),
            s0,
            n: 2,
            i0: 0,
        })
        .unwrap()
    }

    #[test]
    fn cfg_sym_truncated() {
        let m = cfg(0.5, 0.5, 0.25, 0.25, 0.25, 0.25);
        let x = truncated_visits(&m, 40, 1.0).unwrap();
        assert_relative_eq!(x.get(0).unwrap(), 4.0 / 3f64.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(x.absorbed + x.leak, 1.0, epsilon = 1e-12);
        assert!(x.leak < 1e-20);
        assert!(x.values.iter().all(|&v| v >= 0.0));
        let half = truncated_visits(&m, 40, 0.5).unwrap();
        assert!(half.get(0).unwrap() < x.get(0).unwrap());
    }

    #[test]
    fn row_sums_of_transient_block() {
        let m = cfg(0.4, 0.2, 0.2, 0.2, 0.4, 0.2);
        let sys = TruncatedSystem::new(&m, 3, 1.0).unwrap();
        // Column j of (I - P)^T is row j of I - P: sums to the row's deficit.
        let t = &sys.matrix;
        let n = t.len();
        for (row, site) in (sys.lo..=sys.hi()).enumerate() {
            // out-flow row of P at `site`: hold + forward (if in range) + backward (if in range)
            let mut kept = m.hold(site);
            if row + 1 < n {
                kept += -t.sub[row + 1];
            }
            if row > 0 {
                kept += -t.sup[row - 1];
            }
            let deficit = 1.0 - kept;
            let expect = m.absorb(site)
                + if row == 0 { m.backward(site) } else { 0.0 }
                + if row + 1 == n { m.forward(site) } else { 0.0 };
            assert_relative_eq!(deficit, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn mean_times_cfg_drift() {
        let m = cfg(0.4, 0.2, 0.2, 0.2, 0.4, 0.2);
        let t = truncated_mean_times(&m, 40).unwrap();
        assert_relative_eq!(t.period_values[0], 22.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(t.period_values[1], 9.0, epsilon = 1e-12);
        assert_relative_eq!(t.absorbed_time, 22.0 / 3.0, max_relative = 1e-8);
    }

    #[test]
    fn tolerance_gate() {
        let m = cfg(0.4, 0.2, 0.2, 0.2, 0.4, 0.2);
        assert!(matches!(
            truncated_visits_within(&m, 3, 1.0, 1e-12),
            Err(WalkError::TruncationInsufficient { .. })
        ));
        let k = default_truncation(&m);
        assert!(tail_bound(&m, k) < 1e-12);
        assert!(truncated_visits_within(&m, k, 1.0, 1e-12).is_ok());
        assert!(truncated_visits(&m, 2, 1.0).is_err());
    }
}
