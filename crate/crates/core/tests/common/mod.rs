#![allow(dead_code)]

use mfb_walk::model::{validate_model, Branch, RawModel, WalkModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(clippy::too_many_arguments)]
pub fn model(p: f64, q: f64, p0: f64, q0: f64, r0: f64, s0: f64, n: i64, i0: i64) -> WalkModel {
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

/// p = q = 0.5, p0 = q0 = r0 = s0 = 0.25, N = 2, i0 = 0.
pub fn cfg_sym() -> WalkModel {
    model(0.5, 0.5, 0.25, 0.25, 0.25, 0.25, 2, 0)
}

/// p = 0.4, q = 0.2, p0 = q0 = 0.2, r0 = 0.4, s0 = 0.2, N = 2, i0 = 0.
pub fn cfg_drift() -> WalkModel {
    model(0.4, 0.2, 0.2, 0.2, 0.4, 0.2, 2, 0)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random valid model of the requested branch.
///
/// Drift models keep `|p - q| >= 0.05`; barrier absorption is at least 0.1
/// so mean absorption times stay in the tens of steps.
pub fn random_model(rng: &mut impl Rng, branch: Branch, start_at_barrier: bool) -> WalkModel {
    loop {
        let (p, q) = match branch {
            Branch::Balanced => {
                let p: f64 = rng.random_range(0.05..0.5);
                (p, p)
            }
            Branch::Drift => (rng.random_range(0.05..0.6f64), rng.random_range(0.05..0.6f64)),
        };
        if p + q > 1.0 || (branch == Branch::Drift && (p - q).abs() < 0.05) {
            continue;
        }
        let p0 = rng.random_range(0.05..0.4);
        let q0 = rng.random_range(0.05..0.4);
        let s0 = rng.random_range(0.1..0.5);
        let r0 = 1.0 - p0 - q0 - s0;
        if r0 < 0.0 {
            continue;
        }
        let n = rng.random_range(2..=6);
        let i0 = if start_at_barrier { 0 } else { rng.random_range(0..n) };
        let m = model(p, q, p0, q0, r0, s0, n, i0);
        assert_eq!(m.branch(), branch);
        return m;
    }
}

pub fn random_models(seed: u64, count: usize, branch: Branch, start_at_barrier: bool) -> Vec<WalkModel> {
    let mut r = rng(seed);
    (0..count).map(|_| random_model(&mut r, branch, start_at_barrier)).collect()
}
