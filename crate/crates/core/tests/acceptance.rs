//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mfb_walk::absorption::{balanced_mean_time, drift_mean_time};
use mfb_walk::error::relative_delta;
use mfb_walk::model::{validate_model, Branch, RawModel, WalkModel};
use mfb_walk::oracle::{
    default_truncation, gf_derivative_window, simulate, truncated_visits_within, SimulationConfig,
    DEFAULT_STEPS, TAIL_TARGET,
};
use mfb_walk::verify::{MC_STD_ERRORS, TOL_BARRIER_TIME, TOL_RESIDUAL, TOL_TOTAL_ABSORPTION, TOL_VISITS};
use mfb_walk::{
    barrier_time_variants, mean_time_any, periodic_mean_times, FormulaDiscrepancy, VisitEngine,
};

use common::{cfg_drift, cfg_sym, random_models};

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, title: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            out.pass = false;
            out.detail.push_str(&format!("; runtime over {:.0?}", limit));
        }
    }
    println!(
        "criterion {id} {} [{:.2?}] {title}: {}",
        if out.pass { "PASS" } else { "FAIL" },
        elapsed,
        out.detail
    );
    out.pass
}

fn mixed_models(seed: u64, per_branch: usize, start_at_barrier: bool) -> Vec<WalkModel> {
    let mut all = random_models(seed, per_branch, Branch::Drift, start_at_barrier);
    all.extend(random_models(seed + 1, per_branch, Branch::Balanced, start_at_barrier));
    all
}

fn total_absorption() -> Outcome {
    let models = mixed_models(101, 50, false);
    let worst = models
        .iter()
        .map(|m| (VisitEngine::new(m).total_absorption() - 1.0).abs())
        .fold(0.0f64, f64::max);
    Outcome {
        pass: worst <= TOL_TOTAL_ABSORPTION,
        detail: format!("{} models, max |sum - 1| = {worst:.2e}", models.len()),
    }
}

fn visits_vs_truncated() -> Outcome {
    let mut models = vec![cfg_sym(), cfg_drift()];
    let mut random = random_models(202, 25, Branch::Drift, false);
    random.extend(random_models(203, 25, Branch::Balanced, false));
    models.extend(random);
    let mut worst = 0.0f64;
    let mut errors = Vec::new();
    for m in &models {
        let engine = VisitEngine::new(m);
        let n = m.n();
        let k = default_truncation(m) + 3;
        match truncated_visits_within(m, k, 1.0, TAIL_TARGET) {
            Ok(sol) => {
                for j in -3 * n..=3 * n {
                    worst = worst.max(relative_delta(engine.site(j), sol.get(j).unwrap()));
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let sym = VisitEngine::new(&cfg_sym());
    let goldens = [(0, 2.309401), (2, 0.618802), (1, 0.732051)];
    let golden_ok = goldens.iter().all(|&(j, v)| (sym.site(j) - v).abs() <= 1e-6);
    Outcome {
        pass: worst <= TOL_VISITS && golden_ok && errors.is_empty(),
        detail: format!(
            "{} models, max rel delta {worst:.2e}, goldens x0={:.6} x2={:.6} x1={:.6}{}",
            models.len(),
            sym.site(0),
            sym.site(2),
            sym.site(1),
            if errors.is_empty() { String::new() } else { format!(", errors: {errors:?}") }
        ),
    }
}

fn mean_times_vs_periodic() -> Outcome {
    let mut models = vec![cfg_sym(), cfg_drift()];
    models.extend(mixed_models(303, 25, false));
    let mut worst = 0.0f64;
    let mut periodic = true;
    for m in &models {
        let solved = periodic_mean_times(m).unwrap();
        let n = m.n();
        for (i, &exact) in solved.iter().enumerate() {
            worst = worst.max(relative_delta(mean_time_any(m, i as i64), exact));
        }
        for i in -2 * n..=4 * n {
            periodic &= mean_time_any(m, i) == mean_time_any(m, i.rem_euclid(n));
        }
    }
    let (sym, drift) = (cfg_sym(), cfg_drift());
    let goldens = [
        (mean_time_any(&sym, 0), 5.0),
        (mean_time_any(&sym, 1), 6.0),
        (mean_time_any(&drift, 0), 22.0 / 3.0),
        (mean_time_any(&drift, 1), 9.0),
    ];
    let golden_ok = goldens.iter().all(|(a, b)| (a - b).abs() <= 1e-9);
    Outcome {
        pass: worst <= 1e-10 && golden_ok && periodic,
        detail: format!(
            "{} models, max rel delta {worst:.2e}, goldens {:?}, periodic {periodic}",
            models.len(),
            goldens.map(|g| g.0)
        ),
    }
}

fn continuity() -> Outcome {
    let balanced = random_models(404, 10, Branch::Balanced, false);
    let mut worst = 0.0f64;
    for m in &balanced {
        let raw = m.raw();
        // Same hold probability, p/q = 1 + 1e-6.
        let moving = raw.p + raw.q;
        let q = moving / (2.0 + 1e-6);
        let perturbed = validate_model(RawModel {
            p: moving - q,
            q,
            r: None,
            ..raw
        })
        .unwrap();
        assert_eq!(perturbed.branch(), Branch::Drift);
        for i in 0..m.n() {
            worst = worst.max((drift_mean_time(&perturbed, i) - balanced_mean_time(m, i)).abs());
        }
    }
    Outcome {
        pass: worst < 1e-3,
        detail: format!("10 models at |rho - 1| ~ 1e-6, max |delta m| = {worst:.2e}"),
    }
}

fn barrier_times_vs_derivative() -> Outcome {
    let mut models = vec![cfg_drift()];
    models.extend(random_models(505, 20, Branch::Drift, true));
    let mut worst = 0.0f64;
    let mut printed: Vec<FormulaDiscrepancy> = Vec::new();
    let mut errors = Vec::new();
    for m in &models {
        match gf_derivative_window(m, -5..=5, &DEFAULT_STEPS, TOL_BARRIER_TIME) {
            Ok(numeric) => {
                for (&k, est) in &numeric {
                    let v = barrier_time_variants(m, k).unwrap();
                    worst = worst.max(relative_delta(v.proof_chain, est.value));
                    printed.extend(FormulaDiscrepancy::check(
                        "m0k_printed",
                        k,
                        v.printed,
                        est.value,
                        TOL_BARRIER_TIME,
                    ));
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let largest = printed
        .iter()
        .map(|d| d.relative_delta)
        .fold(0.0f64, f64::max);
    for d in printed.iter().take(3) {
        eprintln!("  diagnostic: {d}");
    }
    Outcome {
        pass: worst <= TOL_BARRIER_TIME && errors.is_empty(),
        detail: format!(
            "{} models, proof-chain path max rel delta {worst:.2e}; printed-derivative path flagged at {} points (max rel delta {largest:.2e}){}",
            models.len(),
            printed.len(),
            if errors.is_empty() { String::new() } else { format!(", errors: {errors:?}") }
        ),
    }
}

fn monte_carlo() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, m) in [("sym", cfg_sym()), ("drift", cfg_drift())] {
        let stats = simulate(&m, &SimulationConfig::new(1_000_000, 42)).unwrap();
        let engine = VisitEngine::new(&m);
        let z_steps = stats.mean_steps.z_score(mean_time_any(&m, m.i0()));
        let walks = stats.walks as f64;
        let z_absorb = (-2..=2)
            .map(|k| {
                let mass = engine.absorption_mass(k);
                let f = stats.absorption_counts.get(&k).copied().unwrap_or(0) as f64 / walks;
                (f - mass).abs() / (mass * (1.0 - mass) / walks).sqrt()
            })
            .fold(0.0f64, f64::max);
        pass &= z_steps <= MC_STD_ERRORS && z_absorb <= MC_STD_ERRORS && stats.censored == 0;
        details.push(format!(
            "{name}: steps {:.4} ({z_steps:.2} SE), worst barrier {z_absorb:.2} SE",
            stats.mean_steps.mean
        ));
    }
    Outcome {
        pass,
        detail: details.join("; "),
    }
}

fn determinism() -> Outcome {
    let mut pass = true;
    for m in [cfg_sym(), cfg_drift()] {
        let mut cfg = SimulationConfig::new(50_000, 42);
        let runs: Vec<_> = [1, 2, 8]
            .into_iter()
            .map(|w| {
                cfg.workers = w;
                simulate(&m, &cfg).unwrap()
            })
            .collect();
        let bits = |s: &mfb_walk::oracle::EmpiricalStats| {
            serde_json::to_string(s).unwrap()
        };
        pass &= runs.windows(2).all(|w| w[0] == w[1] && bits(&w[0]) == bits(&w[1]));
    }
    Outcome {
        pass,
        detail: "50000 walks, seed 42, workers 1/2/8".into(),
    }
}

fn residuals() -> Outcome {
    let mut models = vec![cfg_sym(), cfg_drift()];
    models.extend(mixed_models(808, 50, false));
    let mut worst_rec = 0.0f64;
    let mut worst_bal = 0.0f64;
    for m in &models {
        let engine = VisitEngine::new(m);
        let n = m.n();
        for k in -4..=4 {
            worst_rec = worst_rec.max(engine.recurrence_residual(k));
        }
        for j in -3 * n..=3 * n {
            worst_bal = worst_bal.max(engine.balance_residual(j));
        }
    }
    Outcome {
        pass: worst_rec < TOL_RESIDUAL && worst_bal < TOL_RESIDUAL,
        detail: format!(
            "{} models, recurrence {worst_rec:.2e}, balance {worst_bal:.2e}",
            models.len()
        ),
    }
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let results = [
        run(1, "total absorption is one", Some(secs(1)), total_absorption),
        run(2, "visits match truncated solver", Some(secs(10)), visits_vs_truncated),
        run(3, "mean times match periodic solve", None, mean_times_vs_periodic),
        run(4, "continuity across balance", None, continuity),
        run(5, "per-barrier times match numeric derivative", Some(secs(30)), barrier_times_vs_derivative),
        run(6, "Monte-Carlo concordance", Some(secs(60)), monte_carlo),
        run(7, "simulation is worker-count independent", None, determinism),
        run(8, "difference-equation residuals", None, residuals),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
