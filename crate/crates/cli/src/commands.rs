use std::fmt;
use std::fs;
use std::io;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use mfb_walk::oracle::{gf_derivative_window, simulate, SimulationConfig, DEFAULT_STEPS};
use mfb_walk::verify::{diff_golden, verify, GoldenRecord, VerifyOptions, TOL_BARRIER_TIME};
use mfb_walk::visits::visits_from;
use mfb_walk::{
    mean_time_any, reach_probability, validate_model, AbsorptionTimes, Branch, FormulaDiscrepancy,
    RawModel, VisitEngine, WalkError, WalkModel,
};
use serde_json::{json, Value};

use crate::args::{Command, Common, ModelArgs, SimArgs};
use crate::output::{num, opt, Report};

pub enum Failure {
    Validation(String),
    NoInput(PathBuf, io::Error),
    Output(io::Error),
    /// A report was emitted but checks failed.
    Verify,
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Verify => 3,
            Failure::NoInput(..) | Failure::Output(_) => 66,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(msg) => write!(f, "error: {msg}"),
            Failure::NoInput(path, e) => write!(f, "error: cannot read {}: {e}", path.display()),
            Failure::Output(e) => write!(f, "error: cannot write output: {e}"),
            Failure::Verify => write!(f, "verification failed"),
        }
    }
}

impl From<WalkError> for Failure {
    fn from(e: WalkError) -> Self {
        let hint = match e {
            WalkError::BalancedUnsupported => "; pass --numeric-fallback for a numeric split",
            _ => "",
        };
        Failure::Validation(format!("{e}{hint}"))
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::NoInput(path.to_path_buf(), e))
}

/// Loads a model from a JSON file, or from a report that embeds one under
/// `"model"`.
fn model_from_file(path: &Path) -> Result<WalkModel, Failure> {
    let text = read(path)?;
    let bad = |e: serde_json::Error| Failure::Validation(format!("{}: {e}", path.display()));
    let mut value: Value = serde_json::from_str(&text).map_err(bad)?;
    if let Some(inner) = value.get_mut("model") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(bad)
}

fn load_model(args: &ModelArgs) -> Result<WalkModel, Failure> {
    if let Some(path) = &args.model {
        return model_from_file(path);
    }
    // clap enforces the required flags when no file is given.
    let raw = RawModel {
        p: args.p.unwrap(),
        q: args.q.unwrap(),
        r: args.r,
        p0: args.p0.unwrap(),
        q0: args.q0.unwrap(),
        r0: args.r0,
        s0: args.s0.unwrap(),
        n: args.n.unwrap(),
        i0: args.i0,
    };
    Ok(validate_model(raw)?)
}

fn report_diagnostics(diagnostics: &[FormulaDiscrepancy]) {
    for d in diagnostics {
        eprintln!("{d}");
    }
}

fn sites(model: &WalkModel, window: &RangeInclusive<i64>) -> RangeInclusive<i64> {
    window.start() * model.n()..=window.end() * model.n()
}

fn span(window: &RangeInclusive<i64>) -> i64 {
    window.start().abs().max(window.end().abs())
}

fn emit(report: Report, common: &Common) -> Outcome {
    report.emit(common.output).map_err(Failure::Output)
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Visits(c) => visits(&c),
        Command::AbsorbDist(c) => absorb_dist(&c),
        Command::Reach { common, from, to } => reach(&common, from, to),
        Command::MeanTime(c) => mean_time(&c),
        Command::BarrierTime {
            common,
            numeric_fallback,
            strict_formulas,
        } => barrier_time(&common, numeric_fallback, strict_formulas),
        Command::Simulate { common, sim } => simulation(&common, &sim),
        Command::Verify {
            common,
            sim,
            golden,
            bless,
            strict_formulas,
        } => verification(&common, &sim, golden.as_deref(), bless, strict_formulas),
    }
}

fn visits(c: &Common) -> Outcome {
    let model = load_model(&c.model)?;
    let engine = VisitEngine::new(&model);
    report_diagnostics(engine.diagnostics());
    let profile = engine.profile(c.window.clone());
    let rows: Vec<_> = profile.rows().collect();
    emit(
        Report {
            json: json!({
                "command": "visits",
                "model": model,
                "window": [c.window.start(), c.window.end()],
                "barrier_coeff_left": profile.barrier_coeff_left,
                "barrier_coeff_right": profile.barrier_coeff_right,
                "rows": rows.iter().map(|(site, x, a)| json!({"site": site, "x": x, "absorption": a})).collect::<Vec<_>>(),
            }),
            header: vec!["site", "x", "absorption"],
            rows: rows
                .iter()
                .map(|&(site, x, a)| vec![site.to_string(), num(x), opt(a)])
                .collect(),
        },
        c,
    )
}

fn absorb_dist(c: &Common) -> Outcome {
    let model = load_model(&c.model)?;
    let engine = VisitEngine::new(&model);
    report_diagnostics(engine.diagnostics());
    let rows: Vec<(i64, f64)> = c.window.clone().map(|k| (k, engine.absorption_mass(k))).collect();
    emit(
        Report {
            json: json!({
                "command": "absorb-dist",
                "model": model,
                "window": [c.window.start(), c.window.end()],
                "total": engine.total_absorption(),
                "window_mass": rows.iter().map(|r| r.1).sum::<f64>(),
                "rows": rows.iter().map(|&(k, mass)| json!({"barrier": k, "site": k * model.n(), "probability": mass})).collect::<Vec<_>>(),
            }),
            header: vec!["barrier", "site", "probability"],
            rows: rows
                .iter()
                .map(|&(k, mass)| vec![k.to_string(), (k * model.n()).to_string(), num(mass)])
                .collect(),
        },
        c,
    )
}

fn reach(c: &Common, from: i64, to: i64) -> Outcome {
    let model = load_model(&c.model)?;
    let probability = reach_probability(&model, from, to)?;
    let visits = visits_from(&model, from, to)?;
    emit(
        Report {
            json: json!({
                "command": "reach",
                "model": model,
                "from": from,
                "to": to,
                "visits": visits,
                "probability": probability,
            }),
            header: vec!["from", "to", "visits", "probability"],
            rows: vec![vec![from.to_string(), to.to_string(), num(visits), num(probability)]],
        },
        c,
    )
}

fn mean_time(c: &Common) -> Outcome {
    let model = load_model(&c.model)?;
    #[allow(clippy::reversed_empty_ranges)]
    let times = AbsorptionTimes::new(&model, 1..=0)?;
    report_diagnostics(&times.diagnostics);
    let rows: Vec<(i64, f64)> = sites(&model, &c.window).map(|i| (i, times.at(i))).collect();
    emit(
        Report {
            json: json!({
                "command": "mean-time",
                "model": model,
                "window": [c.window.start(), c.window.end()],
                "period": times.period_values,
                "rows": rows.iter().map(|&(i, m)| json!({"site": i, "mean_time": m})).collect::<Vec<_>>(),
            }),
            header: vec!["site", "mean_time"],
            rows: rows.iter().map(|&(i, m)| vec![i.to_string(), num(m)]).collect(),
        },
        c,
    )
}

fn barrier_time(c: &Common, numeric_fallback: bool, strict: bool) -> Outcome {
    let model = load_model(&c.model)?;
    if model.i0() != 0 {
        return Err(WalkError::StartNotBarrier { i0: model.i0() }.into());
    }
    let mut diagnostics = Vec::new();
    type Row = (i64, f64, Option<f64>);
    let (method, rows): (&str, Vec<Row>) = match model.branch() {
        Branch::Drift => {
            let times = AbsorptionTimes::new(&model, c.window.clone())?;
            diagnostics = times.diagnostics;
            let rows = times.per_barrier.iter().map(|(&k, &v)| (k, v, None)).collect();
            ("closed_form", rows)
        }
        Branch::Balanced if numeric_fallback => {
            let est = gf_derivative_window(&model, c.window.clone(), &DEFAULT_STEPS, TOL_BARRIER_TIME)?;
            let rows = est
                .iter()
                .map(|(&k, e)| (k, e.value, Some(e.error_estimate)))
                .collect();
            ("numeric_extension", rows)
        }
        Branch::Balanced => return Err(WalkError::BalancedUnsupported.into()),
    };
    report_diagnostics(&diagnostics);
    emit(
        Report {
            json: json!({
                "command": "barrier-time",
                "model": model,
                "window": [c.window.start(), c.window.end()],
                "method": method,
                "mean_time": mean_time_any(&model, 0),
                "rows": rows.iter().map(|&(k, v, e)| json!({"barrier": k, "mean_steps": v, "error_estimate": e})).collect::<Vec<_>>(),
            }),
            header: vec!["barrier", "mean_steps", "error_estimate"],
            rows: rows
                .iter()
                .map(|&(k, v, e)| vec![k.to_string(), num(v), opt(e)])
                .collect(),
        },
        c,
    )?;
    if strict && !diagnostics.is_empty() {
        return Err(Failure::Verify);
    }
    Ok(())
}

fn simulation(c: &Common, sim: &SimArgs) -> Outcome {
    let model = load_model(&c.model)?;
    let config = SimulationConfig {
        walks: sim.walks,
        seed: sim.seed,
        step_cap: sim.step_cap,
        workers: sim.workers,
        site_window: span(&c.window),
    };
    let stats = simulate(&model, &config)?;
    if stats.excess_censoring {
        eprintln!(
            "warning: {} of {} walks censored at {} steps",
            stats.censored, stats.walks, stats.step_cap
        );
    }
    let mut rows = vec![vec![
        "mean_steps".into(),
        model.i0().to_string(),
        num(stats.mean_steps.mean),
        num(stats.mean_steps.std_error),
    ]];
    for k in c.window.clone() {
        let f = stats.absorption_hist.get(&k).map_or((0.0, 0.0), |e| (e.mean, e.std_error));
        rows.push(vec!["absorption".into(), k.to_string(), num(f.0), num(f.1)]);
    }
    for j in sites(&model, &c.window) {
        let e = stats.visit_means[&j];
        rows.push(vec!["visits".into(), j.to_string(), num(e.mean), num(e.std_error)]);
    }
    rows.push(vec![
        "censored".into(),
        "0".into(),
        num(stats.censored as f64 / stats.walks as f64),
        String::new(),
    ]);
    let mut json = serde_json::to_value(&stats).expect("stats serialize");
    json["command"] = json!("simulate");
    json["model"] = serde_json::to_value(model).expect("model serializes");
    emit(
        Report {
            json,
            header: vec!["quantity", "index", "mean", "std_error"],
            rows,
        },
        c,
    )
}

fn verification(
    c: &Common,
    sim: &SimArgs,
    golden: Option<&Path>,
    bless: bool,
    strict: bool,
) -> Outcome {
    let model = load_model(&c.model)?;
    let options = VerifyOptions {
        walks: sim.walks,
        seed: sim.seed,
        workers: sim.workers,
        step_cap: sim.step_cap,
        window: span(&c.window),
        ..VerifyOptions::default()
    };
    let mut report = verify(&model, &options)?;
    match golden {
        Some(path) if bless => {
            let text = serde_json::to_string_pretty(&report.golden).expect("records serialize");
            fs::write(path, text + "\n").map_err(Failure::Output)?;
            eprintln!("wrote {} golden records to {}", report.golden.len(), path.display());
        }
        Some(path) => {
            let stored: Vec<GoldenRecord> = serde_json::from_str(&read(path)?)
                .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
            report.checks.extend(diff_golden(&stored, &report.golden));
        }
        None => {}
    }
    report_diagnostics(&report.diagnostics);
    for f in report.failures() {
        eprintln!(
            "FAIL {}[{}]: delta {:.3e} > tolerance {:.3e}",
            f.quantity, f.index, f.delta, f.tolerance
        );
    }
    let rows = report
        .checks
        .iter()
        .map(|k| {
            vec![
                k.quantity.clone(),
                k.index.to_string(),
                opt(k.closed_form),
                num(k.oracle),
                num(k.delta),
                num(k.tolerance),
                serde_json::to_value(k.metric)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                k.pass.to_string(),
            ]
        })
        .collect();
    let mut json = serde_json::to_value(&report).expect("report serializes");
    json["command"] = json!("verify");
    json["passed"] = json!(report.passed());
    emit(
        Report {
            json,
            header: vec![
                "quantity",
                "index",
                "closed_form",
                "oracle",
                "delta",
                "tolerance",
                "metric",
                "pass",
            ],
            rows,
        },
        c,
    )?;
    if !report.passed() || (strict && !report.diagnostics.is_empty()) {
        return Err(Failure::Verify);
    }
    Ok(())
}
