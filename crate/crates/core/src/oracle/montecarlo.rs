//! Seeded Monte-Carlo walker.
//!
//! Walk `w` draws from its own ChaCha8 stream (`seed`, stream `w`), so the
//! sample path of every walk is fixed by `(seed, w)` alone. Walks are grouped
//! into fixed-size batches and all tallies are integers, so the result is
//! bit-identical for any worker count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalkError};
use crate::model::WalkModel;

const BATCH: u64 = 4096;

/// Censored fraction above which a run is flagged.
pub const CENSOR_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub walks: u64,
    pub seed: u64,
    /// Walks still alive after this many steps are censored.
    pub step_cap: u64,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    /// Visit counts are kept for sites `|j| <= site_window * N`.
    pub site_window: i64,
}

impl SimulationConfig {
    pub fn new(walks: u64, seed: u64) -> Self {
        Self {
            walks,
            seed,
            step_cap: 1_000_000,
            workers: 0,
            site_window: 3,
        }
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|mean - target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error == 0.0 {
            return if self.mean == target { 0.0 } else { f64::INFINITY };
        }
        (self.mean - target).abs() / self.std_error
    }

    fn from_sums(count: u64, sum: f64, sum_sq: f64) -> Self {
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let n = count as f64;
        let mean = sum / n;
        let var = if count > 1 {
            ((sum_sq - sum * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub walks: u64,
    pub seed: u64,
    pub step_cap: u64,
    /// Mean arrivals per walk at each site of the window.
    pub visit_means: BTreeMap<i64, Estimate>,
    /// Fraction of walks absorbed at barrier `kN`.
    pub absorption_hist: BTreeMap<i64, Estimate>,
    pub absorption_counts: BTreeMap<i64, u64>,
    /// Steps before absorption, over walks that were absorbed.
    pub mean_steps: Estimate,
    pub censored: u64,
    pub excess_censoring: bool,
}

#[derive(Debug, Default, Clone)]
struct Tally {
    steps: u128,
    steps_sq: u128,
    absorbed: BTreeMap<i64, u64>,
    visits: Vec<u64>,
    visits_sq: Vec<u64>,
    censored: u64,
}

impl Tally {
    fn with_window(width: usize) -> Self {
        Self {
            visits: vec![0; width],
            visits_sq: vec![0; width],
            ..Self::default()
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.steps += other.steps;
        self.steps_sq += other.steps_sq;
        for (k, c) in other.absorbed {
            *self.absorbed.entry(k).or_default() += c;
        }
        for (a, b) in self.visits.iter_mut().zip(other.visits) {
            *a += b;
        }
        for (a, b) in self.visits_sq.iter_mut().zip(other.visits_sq) {
            *a += b;
        }
        self.censored += other.censored;
        self
    }
}

enum Outcome {
    Absorbed { barrier: i64, steps: u64 },
    Censored,
}

struct Walker<'a> {
    model: &'a WalkModel,
    step_cap: u64,
    lo: i64,
    counts: Vec<u64>,
    touched: Vec<usize>,
}

impl Walker<'_> {
    fn visit(&mut self, site: i64) {
        let idx = site - self.lo;
        if idx < 0 || idx as usize >= self.counts.len() {
            return;
        }
        let idx = idx as usize;
        if self.counts[idx] == 0 {
            self.touched.push(idx);
        }
        self.counts[idx] += 1;
    }

    fn run(&mut self, rng: &mut ChaCha8Rng) -> Outcome {
        let m = self.model;
        let mut pos = m.i0();
        self.visit(pos);
        let mut steps = 0u64;
        loop {
            let u: f64 = rng.random();
            let (forward, backward, absorb) = (m.forward(pos), m.backward(pos), m.absorb(pos));
            if u < absorb {
                return Outcome::Absorbed {
                    barrier: pos.div_euclid(m.n()),
                    steps,
                };
            }
            if steps == self.step_cap {
                return Outcome::Censored;
            }
            if u < absorb + forward {
                pos += 1;
            } else if u < absorb + forward + backward {
                pos -= 1;
            }
            steps += 1;
            self.visit(pos);
        }
    }

    fn flush(&mut self, tally: &mut Tally) {
        for &idx in &self.touched {
            let c = self.counts[idx];
            tally.visits[idx] += c;
            tally.visits_sq[idx] += c * c;
            self.counts[idx] = 0;
        }
        self.touched.clear();
    }
}

fn run_batch(model: &WalkModel, config: &SimulationConfig, batch: u64) -> Tally {
    let lo = -config.site_window * model.n();
    let width = (2 * (-lo) + 1) as usize;
    let mut tally = Tally::with_window(width);
    let mut walker = Walker {
        model,
        step_cap: config.step_cap,
        lo,
        counts: vec![0; width],
        touched: Vec::new(),
    };
    let base = ChaCha8Rng::seed_from_u64(config.seed);
    let first = batch * BATCH;
    let last = (first + BATCH).min(config.walks);
    for walk in first..last {
        let mut rng = base.clone();
        rng.set_stream(walk);
        match walker.run(&mut rng) {
            Outcome::Absorbed { barrier, steps } => {
                *tally.absorbed.entry(barrier).or_default() += 1;
                tally.steps += steps as u128;
                tally.steps_sq += (steps as u128) * (steps as u128);
            }
            Outcome::Censored => tally.censored += 1,
        }
        walker.flush(&mut tally);
    }
    tally
}

/// Runs `config.walks` independent walks of `model`.
pub fn simulate(model: &WalkModel, config: &SimulationConfig) -> Result<EmpiricalStats> {
    if config.walks == 0 {
        return Err(WalkError::InvalidArgument("walks must be >= 1".into()));
    }
    if config.site_window < 0 {
        return Err(WalkError::InvalidArgument("site window must be >= 0".into()));
    }
    let batches = config.walks.div_ceil(BATCH);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| WalkError::InvalidArgument(format!("thread pool: {e}")))?;
    let tallies: Vec<Tally> = pool.install(|| {
        (0..batches)
            .into_par_iter()
            .map(|b| run_batch(model, config, b))
            .collect()
    });
    let lo = -config.site_window * model.n();
    let width = (2 * (-lo) + 1) as usize;
    let tally = tallies
        .into_iter()
        .fold(Tally::with_window(width), Tally::merge);

    let walks = config.walks as f64;
    let absorbed_walks: u64 = tally.absorbed.values().sum();
    let visit_means = (lo..)
        .zip(tally.visits.iter().zip(&tally.visits_sq))
        .map(|(site, (&s, &sq))| (site, Estimate::from_sums(config.walks, s as f64, sq as f64)))
        .collect();
    let absorption_hist = tally
        .absorbed
        .iter()
        .map(|(&k, &c)| {
            let f = c as f64 / walks;
            (
                k,
                Estimate {
                    mean: f,
                    std_error: (f * (1.0 - f) / walks).sqrt(),
                },
            )
        })
        .collect();
    Ok(EmpiricalStats {
        walks: config.walks,
        seed: config.seed,
        step_cap: config.step_cap,
        visit_means,
        absorption_hist,
        absorption_counts: tally.absorbed,
        mean_steps: Estimate::from_sums(
            absorbed_walks,
            tally.steps as f64,
            tally.steps_sq as f64,
        ),
        censored: tally.censored,
        excess_censoring: tally.censored as f64 / walks > CENSOR_LIMIT,
    })
}
