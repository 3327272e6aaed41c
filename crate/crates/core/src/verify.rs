//! Closed forms against oracles, as one report.
//!
//! Each [`Check`] pairs a closed-form value with an oracle value and a
//! pinned tolerance. Values produced by oracles are also emitted as
//! [`GoldenRecord`]s, which can be written to disk and diffed on later runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::absorption::{barrier_time_variants, mean_time_any, periodic_mean_times};
use crate::error::{relative_delta, FormulaDiscrepancy, Result};
use crate::model::{Branch, WalkModel};
use crate::oracle::{
    default_truncation, gf_derivative_window, simulate, truncated_mean_times, truncated_visits,
    SimulationConfig, DEFAULT_STEPS,
};
use crate::visits::{VisitEngine, FORMULA_TOLERANCE};

pub const TOL_TOTAL_ABSORPTION: f64 = 1e-10;
pub const TOL_VISITS: f64 = 1e-8;
pub const TOL_CONSERVATION: f64 = 1e-10;
pub const TOL_RESIDUAL: f64 = 1e-10;
pub const TOL_MEAN_TIME: f64 = 1e-10;
pub const TOL_BOOKKEEPING: f64 = 1e-8;
pub const TOL_BARRIER_TIME: f64 = 1e-6;
pub const MC_STD_ERRORS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `|a - b| / |b|`.
    Relative,
    /// `|a - b|`, or a scaled residual.
    Absolute,
    /// `|a - b|` in standard errors of the oracle.
    StdErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub quantity: String,
    pub index: i64,
    /// `None` where no closed form exists and two oracles are compared.
    pub closed_form: Option<f64>,
    pub oracle: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub metric: Metric,
    pub pass: bool,
}

impl Check {
    fn new(
        quantity: &str,
        index: i64,
        closed_form: Option<f64>,
        oracle: f64,
        delta: f64,
        tolerance: f64,
        metric: Metric,
    ) -> Self {
        Self {
            quantity: quantity.to_string(),
            index,
            closed_form,
            oracle,
            delta,
            tolerance,
            metric,
            pass: delta <= tolerance,
        }
    }

    pub fn relative(quantity: &str, index: i64, closed: f64, oracle: f64, tol: f64) -> Self {
        let delta = relative_delta(closed, oracle);
        Self::new(quantity, index, Some(closed), oracle, delta, tol, Metric::Relative)
    }

    pub fn absolute(quantity: &str, index: i64, closed: f64, oracle: f64, tol: f64) -> Self {
        let delta = (closed - oracle).abs();
        Self::new(quantity, index, Some(closed), oracle, delta, tol, Metric::Absolute)
    }

    fn residual(quantity: &str, index: i64, residual: f64, tol: f64) -> Self {
        Self::new(quantity, index, Some(residual), 0.0, residual, tol, Metric::Absolute)
    }

    fn std_errors(quantity: &str, index: i64, closed: f64, mean: f64, se: f64) -> Self {
        let delta = if se > 0.0 {
            (closed - mean).abs() / se
        } else if closed == mean {
            0.0
        } else {
            f64::INFINITY
        };
        Self::new(quantity, index, Some(closed), mean, delta, MC_STD_ERRORS, Metric::StdErrors)
    }
}

/// An oracle-produced value with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRecord {
    pub model: WalkModel,
    pub quantity: String,
    pub index: i64,
    pub value: f64,
    pub error_bound: f64,
    pub oracle: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_trunc: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walks: Option<u64>,
}

impl GoldenRecord {
    fn key(&self) -> (String, i64, String, Option<u64>, Option<u64>) {
        (
            self.quantity.clone(),
            self.index,
            self.oracle.clone(),
            self.seed,
            self.walks,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Monte-Carlo walks; 0 skips the simulation checks.
    pub walks: u64,
    pub seed: u64,
    pub workers: usize,
    pub step_cap: u64,
    /// Step sizes for numeric differentiation.
    pub steps: Vec<f64>,
    /// Visits are compared on `|j| <= window * N`.
    pub window: i64,
    /// Per-barrier times are compared on `|k| <= barrier_window`.
    pub barrier_window: i64,
    /// Monte-Carlo absorption frequencies are compared on `|k| <= mc_window`.
    pub mc_window: i64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            walks: 0,
            seed: 42,
            workers: 0,
            step_cap: 1_000_000,
            steps: DEFAULT_STEPS.to_vec(),
            window: 3,
            barrier_window: 5,
            mc_window: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub model: WalkModel,
    pub branch: Branch,
    pub checks: Vec<Check>,
    pub diagnostics: Vec<FormulaDiscrepancy>,
    pub golden: Vec<GoldenRecord>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Checks whose quantity starts with `prefix`.
    pub fn checks_for<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Check> + 'a {
        self.checks.iter().filter(move |c| c.quantity.starts_with(prefix))
    }
}

struct Builder {
    model: WalkModel,
    checks: Vec<Check>,
    diagnostics: Vec<FormulaDiscrepancy>,
    golden: Vec<GoldenRecord>,
}

impl Builder {
    fn golden(&mut self, quantity: &str, index: i64, value: f64, error_bound: f64, oracle: &str) -> &mut GoldenRecord {
        self.golden.push(GoldenRecord {
            model: self.model,
            quantity: quantity.to_string(),
            index,
            value,
            error_bound,
            oracle: oracle.to_string(),
            k_trunc: None,
            steps: None,
            seed: None,
            walks: None,
        });
        self.golden.last_mut().unwrap()
    }
}

/// Runs every applicable closed-form-vs-oracle comparison for `model`.
pub fn verify(model: &WalkModel, options: &VerifyOptions) -> Result<VerifyReport> {
    let mut b = Builder {
        model: *model,
        checks: Vec::new(),
        diagnostics: Vec::new(),
        golden: Vec::new(),
    };
    let engine = VisitEngine::new(model);
    b.diagnostics.extend(engine.diagnostics().iter().cloned());
    let n = model.n();
    let window = options.window;

    b.checks.push(Check::absolute(
        "total_absorption",
        0,
        engine.total_absorption(),
        1.0,
        TOL_TOTAL_ABSORPTION,
    ));

    // Expected arrivals against the truncated solver.
    let k_trunc = default_truncation(model) + window as usize;
    let truncated = truncated_visits(model, k_trunc, 1.0)?;
    for j in -window * n..=window * n {
        let oracle = truncated.get(j).expect("window inside truncation");
        b.checks.push(Check::relative("x", j, engine.site(j), oracle, TOL_VISITS));
        b.golden("x", j, oracle, truncated.tail_bound * oracle, "truncated_solver")
            .k_trunc = Some(k_trunc);
    }
    b.checks.push(Check::absolute(
        "truncated_conservation",
        0,
        truncated.absorbed + truncated.leak,
        1.0,
        TOL_CONSERVATION,
    ));

    for k in -window - 1..=window + 1 {
        b.checks.push(Check::residual(
            "barrier_recurrence_residual",
            k,
            engine.recurrence_residual(k),
            TOL_RESIDUAL,
        ));
    }
    for j in -window * n..=window * n {
        b.checks.push(Check::residual(
            "balance_residual",
            j,
            engine.balance_residual(j),
            TOL_RESIDUAL,
        ));
    }

    // Mean absorption times against the periodic system.
    let solved = periodic_mean_times(model)?;
    for (i, &exact) in solved.iter().enumerate() {
        let i = i as i64;
        b.checks.push(Check::relative("m", i, mean_time_any(model, i), exact, TOL_MEAN_TIME));
        b.golden("m", i, exact, 1e-12 * exact, "periodic_solve");
    }
    let m_start = mean_time_any(model, model.i0());
    let big_k = default_truncation(model) as i64;
    b.checks.push(Check::relative(
        "total_visits_minus_one",
        model.i0(),
        engine.total_visits(big_k) - 1.0,
        m_start,
        TOL_BOOKKEEPING,
    ));

    if model.i0() == 0 {
        per_barrier_checks(&mut b, model, options)?;
    }

    if options.walks > 0 {
        monte_carlo_checks(&mut b, model, &engine, m_start, options)?;
    }

    Ok(VerifyReport {
        model: *model,
        branch: model.branch(),
        checks: b.checks,
        diagnostics: b.diagnostics,
        golden: b.golden,
    })
}

fn per_barrier_checks(b: &mut Builder, model: &WalkModel, options: &VerifyOptions) -> Result<()> {
    let bw = options.barrier_window;
    let numeric = gf_derivative_window(model, -bw..=bw, &options.steps, 1e-6)?;
    let k_trunc = default_truncation(model) + bw as usize;
    let exact = truncated_mean_times(model, k_trunc)?;
    for (&k, est) in &numeric {
        let solved = exact.per_barrier[&k];
        match model.branch() {
            Branch::Drift => {
                let v = barrier_time_variants(model, k)?;
                b.checks.push(Check::relative("m0k", k, v.proof_chain, est.value, TOL_BARRIER_TIME));
                b.checks.push(Check::relative(
                    "m0k_derivative_solve",
                    k,
                    v.proof_chain,
                    solved,
                    TOL_BARRIER_TIME,
                ));
                for (label, printed) in [("m0k_printed", v.printed), ("m0k_printed_verbatim", v.printed_verbatim)] {
                    b.diagnostics.extend(FormulaDiscrepancy::check(
                        label,
                        k,
                        printed,
                        est.value,
                        TOL_BARRIER_TIME.max(FORMULA_TOLERANCE),
                    ));
                }
            }
            Branch::Balanced => {
                // No closed form: the two oracles are compared with each other.
                let delta = relative_delta(est.value, solved);
                b.checks.push(Check::new(
                    "m0k_numeric_extension",
                    k,
                    None,
                    est.value,
                    delta,
                    TOL_BARRIER_TIME,
                    Metric::Relative,
                ));
            }
        }
        let rec = b.golden("m0k", k, est.value, est.error_estimate, "gf_derivative");
        rec.steps = Some(options.steps.clone());
        rec.k_trunc = Some(k_trunc);
    }
    // The split adds up to the mean absorption time from a barrier.
    let m0 = mean_time_any(model, 0);
    let total = match model.branch() {
        Branch::Drift => {
            let far = default_truncation(model) as i64 * 2;
            let mut sum = 0.0;
            for k in -far..=far {
                sum += barrier_time_variants(model, k)?.proof_chain;
            }
            Some(sum)
        }
        Branch::Balanced => None,
    };
    match total {
        Some(sum) => b.checks.push(Check::relative("m0k_sum", 0, sum, m0, TOL_BARRIER_TIME)),
        None => b.checks.push(Check::new(
            "m0k_sum_numeric_extension",
            0,
            None,
            exact.absorbed_time,
            relative_delta(exact.absorbed_time, m0),
            TOL_BARRIER_TIME,
            Metric::Relative,
        )),
    }
    Ok(())
}

fn monte_carlo_checks(
    b: &mut Builder,
    model: &WalkModel,
    engine: &VisitEngine,
    m_start: f64,
    options: &VerifyOptions,
) -> Result<()> {
    let config = SimulationConfig {
        walks: options.walks,
        seed: options.seed,
        step_cap: options.step_cap,
        workers: options.workers,
        site_window: options.mc_window,
    };
    let stats = simulate(model, &config)?;
    let provenance = |rec: &mut GoldenRecord| {
        rec.seed = Some(options.seed);
        rec.walks = Some(options.walks);
    };
    let e = stats.mean_steps;
    b.checks.push(Check::std_errors("mc_mean_steps", model.i0(), m_start, e.mean, e.std_error));
    provenance(b.golden("mc_mean_steps", model.i0(), e.mean, e.std_error, "monte_carlo"));

    let walks = stats.walks as f64;
    for k in -options.mc_window..=options.mc_window {
        let mass = engine.absorption_mass(k);
        let count = stats.absorption_counts.get(&k).copied().unwrap_or(0);
        let f = count as f64 / walks;
        // Standard error under the closed-form mass, so an empty bin still
        // has a meaningful scale.
        let se = (mass * (1.0 - mass) / walks).sqrt();
        b.checks.push(Check::std_errors("mc_absorption", k, mass, f, se));
        provenance(b.golden("mc_absorption", k, f, se, "monte_carlo"));
    }
    let n = model.n();
    for j in -options.mc_window * n..=options.mc_window * n {
        let e = stats.visit_means[&j];
        b.checks.push(Check::std_errors("mc_visits", j, engine.site(j), e.mean, e.std_error));
        provenance(b.golden("mc_visits", j, e.mean, e.std_error, "monte_carlo"));
    }
    let censored = stats.censored as f64 / walks;
    b.checks.push(Check::new(
        "mc_censored_fraction",
        0,
        None,
        censored,
        censored,
        crate::oracle::CENSOR_LIMIT,
        Metric::Absolute,
    ));
    Ok(())
}

/// Compares freshly generated golden records with stored ones.
///
/// Records are matched on `(quantity, index, oracle, seed, walks)`; stored
/// records with no fresh counterpart (for example Monte-Carlo values when
/// no simulation was run) are skipped. A fresh record with no stored
/// counterpart fails.
pub fn diff_golden(stored: &[GoldenRecord], fresh: &[GoldenRecord]) -> Vec<Check> {
    let by_key: BTreeMap<_, _> = stored.iter().map(|r| (r.key(), r)).collect();
    fresh
        .iter()
        .map(|new| match by_key.get(&new.key()) {
            Some(old) if old.model == new.model => {
                let tol = old.error_bound.max(new.error_bound) + 1e-12 * old.value.abs().max(1.0);
                let mut c = Check::absolute(
                    &format!("golden:{}", new.quantity),
                    new.index,
                    new.value,
                    old.value,
                    tol,
                );
                c.closed_form = Some(new.value);
                c
            }
            _ => Check::new(
                &format!("golden:{}", new.quantity),
                new.index,
                Some(new.value),
                f64::NAN,
                f64::INFINITY,
                0.0,
                Metric::Absolute,
            ),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, RawModel};

    fn cfg_drift() -> WalkModel {
        validate_model(RawModel {
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
        .unwrap()
    }

    #[test]
    fn drift_report_passes_and_flags_printed_split() {
        let report = verify(&cfg_drift(), &VerifyOptions::default()).unwrap();
        let failures: Vec<_> = report.failures().collect();
        assert!(failures.is_empty(), "{failures:?}");
        assert!(report.checks_for("m0k").count() > 0);
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.quantity == "m0k_printed"));
    }

    #[test]
    fn golden_diff_detects_changes() {
        let report = verify(&cfg_drift(), &VerifyOptions::default()).unwrap();
        let clean = diff_golden(&report.golden, &report.golden);
        assert!(clean.iter().all(|c| c.pass));
        let mut tampered = report.golden.clone();
        tampered[0].value += 1e-3;
        assert!(diff_golden(&tampered, &report.golden).iter().any(|c| !c.pass));
        assert!(diff_golden(&[], &report.golden).iter().all(|c| !c.pass));
    }

    #[test]
    fn report_model_round_trips() {
        let report = verify(&cfg_drift(), &VerifyOptions::default()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: VerifyReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.model, cfg_drift());
    }
}
