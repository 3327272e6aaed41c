//! Walk parameters and the spectral data shared by every engine.
//!
//! The walk lives on the integers. Every site `kN` is a multiple-function
//! barrier: it moves the walker forward with `p0`, backward with `q0`, holds
//! it with `r0` and absorbs it with `s0`. All other sites move forward with
//! `p`, backward with `q` and hold with `r = 1 - p - q`. The walk starts at
//! `i0` in `[0, N)`.
//!
//! Two regimes are distinguished. [`Branch::Drift`] has `p != q` and uses the
//! geometric forms built on `rho = p / q`; [`Branch::Balanced`] has `p == q`
//! and uses the polynomial limits of the same expressions.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WalkError};

/// `|p - q|` below this classifies a model as balanced.
pub const BALANCE_THRESHOLD: f64 = 1e-9;

/// Absolute tolerance on the sum-to-one constraints.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `rho != 1`.
    Drift,
    /// `rho == 1` (within [`BALANCE_THRESHOLD`]).
    Balanced,
}

/// Unvalidated parameter bundle, as read from JSON or command-line flags.
///
/// `r` and `r0` may be omitted, in which case they are completed from the
/// other probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawModel {
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub r: Option<f64>,
    pub p0: f64,
    pub q0: f64,
    #[serde(default)]
    pub r0: Option<f64>,
    pub s0: f64,
    #[serde(rename = "N")]
    pub n: i64,
    pub i0: i64,
}

/// A validated walk model.
///
/// Serializes to `{p, q, r, p0, q0, r0, s0, N, i0}`; deserialization runs the
/// same validation as [`validate_model`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct WalkModel {
    p: f64,
    q: f64,
    r: f64,
    p0: f64,
    q0: f64,
    r0: f64,
    s0: f64,
    #[serde(rename = "N")]
    n: i64,
    i0: i64,
}

impl TryFrom<RawModel> for WalkModel {
    type Error = WalkError;

    fn try_from(raw: RawModel) -> Result<Self> {
        validate_model(raw)
    }
}

fn reject(name: &'static str, value: f64, reason: &'static str) -> WalkError {
    WalkError::RejectedParameter {
        name,
        value,
        reason,
    }
}

fn check_probability(name: &'static str, value: f64, strictly_positive: bool) -> Result<()> {
    if !value.is_finite() {
        return Err(reject(name, value, "must be finite"));
    }
    if strictly_positive && value <= 0.0 {
        return Err(reject(name, value, "must be > 0"));
    }
    if value < 0.0 {
        return Err(reject(name, value, "must be >= 0"));
    }
    if value > 1.0 {
        return Err(reject(name, value, "must be <= 1"));
    }
    Ok(())
}

/// Completes a hold probability so that the row sums to one exactly.
///
/// A supplied value must already close the sum to within [`SUM_TOLERANCE`].
fn complete_hold(
    name: &'static str,
    supplied: Option<f64>,
    moving: f64,
    sum_reason: &'static str,
) -> Result<f64> {
    let completed = 1.0 - moving;
    if let Some(value) = supplied {
        check_probability(name, value, false)?;
        if (value - completed).abs() > SUM_TOLERANCE {
            return Err(reject(name, value, sum_reason));
        }
    }
    if completed < -SUM_TOLERANCE {
        return Err(reject(name, completed, sum_reason));
    }
    Ok(completed.max(0.0))
}

/// Validates a raw parameter bundle.
///
/// Requires `p, q > 0`, `p + q <= 1`, `p0, q0, s0 > 0`, `r0 >= 0`,
/// `p0 + q0 + r0 + s0 = 1`, `N >= 2` and `0 <= i0 < N`.
pub fn validate_model(raw: RawModel) -> Result<WalkModel> {
    check_probability("p", raw.p, true)?;
    check_probability("q", raw.q, true)?;
    check_probability("p0", raw.p0, true)?;
    check_probability("q0", raw.q0, true)?;
    check_probability("s0", raw.s0, true)?;
    let r = complete_hold("r", raw.r, raw.p + raw.q, "p + q + r must equal 1")?;
    let r0 = complete_hold(
        "r0",
        raw.r0,
        raw.p0 + raw.q0 + raw.s0,
        "p0 + q0 + r0 + s0 must equal 1",
    )?;
    if raw.n < 2 {
        return Err(reject("N", raw.n as f64, "barrier spacing must be >= 2"));
    }
    if raw.i0 < 0 || raw.i0 >= raw.n {
        return Err(reject("i0", raw.i0 as f64, "start must satisfy 0 <= i0 < N"));
    }
    Ok(WalkModel {
        p: raw.p,
        q: raw.q,
        r,
        p0: raw.p0,
        q0: raw.q0,
        r0,
        s0: raw.s0,
        n: raw.n,
        i0: raw.i0,
    })
}

impl WalkModel {
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn p0(&self) -> f64 {
        self.p0
    }
    pub fn q0(&self) -> f64 {
        self.q0
    }
    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn s0(&self) -> f64 {
        self.s0
    }
    /// Barrier spacing `N`.
    pub fn n(&self) -> i64 {
        self.n
    }
    /// Start site, in `[0, N)`.
    pub fn i0(&self) -> i64 {
        self.i0
    }

    pub fn rho(&self) -> f64 {
        self.p / self.q
    }

    pub fn branch(&self) -> Branch {
        if (self.p - self.q).abs() < BALANCE_THRESHOLD {
            Branch::Balanced
        } else {
            Branch::Drift
        }
    }

    pub fn raw(&self) -> RawModel {
        RawModel {
            p: self.p,
            q: self.q,
            r: Some(self.r),
            p0: self.p0,
            q0: self.q0,
            r0: Some(self.r0),
            s0: self.s0,
            n: self.n,
            i0: self.i0,
        }
    }

    /// The same walk started at `i0` (must lie in `[0, N)`).
    pub fn with_start(&self, i0: i64) -> Result<WalkModel> {
        validate_model(RawModel { i0, ..self.raw() })
    }

    /// Splits an arbitrary site into the translation `k*N` and the start
    /// offset `i0 = site mod N`.
    pub fn anchor(&self, site: i64) -> (i64, i64) {
        let k = site.div_euclid(self.n);
        (k * self.n, site.rem_euclid(self.n))
    }

    pub fn is_barrier(&self, site: i64) -> bool {
        site.rem_euclid(self.n) == 0
    }

    /// Probability of a step `site -> site + 1`.
    pub fn forward(&self, site: i64) -> f64 {
        if self.is_barrier(site) {
            self.p0
        } else {
            self.p
        }
    }

    /// Probability of a step `site -> site - 1`.
    pub fn backward(&self, site: i64) -> f64 {
        if self.is_barrier(site) {
            self.q0
        } else {
            self.q
        }
    }

    /// Probability of staying at `site`.
    pub fn hold(&self, site: i64) -> f64 {
        if self.is_barrier(site) {
            self.r0
        } else {
            self.r
        }
    }

    /// Probability of absorption at `site`.
    pub fn absorb(&self, site: i64) -> f64 {
        if self.is_barrier(site) {
            self.s0
        } else {
            0.0
        }
    }

    /// `alpha = r(1 - r) + 4pq`.
    pub fn alpha(&self) -> f64 {
        self.r * (1.0 - self.r) + 4.0 * self.p * self.q
    }

    /// `rho^a - 1`, accurate when `rho` is close to one.
    pub fn rho_pow_m1(&self, a: f64) -> f64 {
        (a * self.rho().ln()).exp_m1()
    }

    /// `lambda1^a - lambda2^a` at `z = 1`, with `lambda1 = max(1, rho)` and
    /// `lambda2 = min(1, rho)`.
    pub(crate) fn lambda_gap_pow(&self, a: f64) -> f64 {
        let d = self.rho_pow_m1(a);
        if self.rho() >= 1.0 {
            d
        } else {
            -d
        }
    }

    /// `lambda1^a + lambda2^a` at `z = 1`.
    pub(crate) fn lambda_sum_pow(&self, a: f64) -> f64 {
        1.0 + self.rho().powf(a)
    }
}

/// Roots of `a x^2 + b x + c = 0` in descending order, or `None` if complex.
///
/// The larger-magnitude root uses the sign-matched formula and the other one
/// comes from the product of roots.
pub(crate) fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    quadratic_roots_with_sqrt(a, b, c, disc.sqrt())
}

fn quadratic_roots_with_sqrt(a: f64, b: f64, c: f64, sqrt_disc: f64) -> Option<(f64, f64)> {
    let t = -0.5 * (b + b.signum() * sqrt_disc);
    if t == 0.0 {
        return Some((0.0, 0.0));
    }
    let (x, y) = (t / a, c / t);
    Some(if x >= y { (x, y) } else { (y, x) })
}

/// Characteristic roots of the interior walk at a given `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPair {
    pub z: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    zeta: Option<f64>,
}

impl SpectralPair {
    /// `zeta(z) = [(1 - rz)^2 - 4pq z^2]^(-1/2)`.
    pub fn zeta(&self) -> Result<f64> {
        self.zeta.ok_or(WalkError::DegenerateSpectrum { z: self.z })
    }
}

/// Roots of `q z l^2 - (1 - r z) l + p z = 0` and `zeta(z)`.
///
/// At `z = 1` on a balanced model both roots equal one and `zeta` is
/// reported as [`WalkError::DegenerateSpectrum`].
pub fn lambda_pair(model: &WalkModel, z: f64) -> Result<SpectralPair> {
    if !(z > 0.0 && z <= 1.0) {
        return Err(WalkError::InvalidArgument(format!(
            "z = {z} outside (0, 1]"
        )));
    }
    let (p, q, r) = (model.p(), model.q(), model.r());
    // (1 - rz)^2 - 4pqz^2 factored so that it stays non-negative near balance.
    let root_gap = (1.0 - z) + z * (p.sqrt() - q.sqrt()).powi(2);
    let root_sum = (1.0 - r * z) + 2.0 * z * (p * q).sqrt();
    let disc = root_gap * root_sum;
    let degenerate = z == 1.0 && model.branch() == Branch::Balanced;
    let (lambda1, lambda2) = if degenerate {
        (1.0, 1.0)
    } else {
        quadratic_roots_with_sqrt(q * z, -(1.0 - r * z), p * z, disc.sqrt())
            .expect("discriminant is non-negative")
    };
    let zeta = if degenerate || disc <= 0.0 {
        None
    } else {
        Some(disc.powf(-0.5))
    };
    Ok(SpectralPair {
        z,
        lambda1,
        lambda2,
        zeta,
    })
}

/// Barrier-level recurrence data.
///
/// On the drift branch the barrier values obey
/// `q0 x[(k+1)N] + omega0/|1-rho| x[kN] + p0 rho^(N-1) x[(k-1)N] = rhs(k)`;
/// on the balanced branch `q0 x[(k+1)N] + psi0 x[kN] + p0 x[(k-1)N] = rhs(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpectrum {
    pub branch: Branch,
    /// `omega0` at `z = 1`; drift branch only.
    pub omega0: Option<f64>,
    /// `psi0 = -(p0 + q0 + N s0)`; balanced branch only.
    pub psi0: Option<f64>,
    pub xi1: f64,
    pub xi2: f64,
    /// `Omega = [omega0^2 - 4 p0 q0 (1-rho)^2 rho^(N-1)]^(-1/2)` (drift) or
    /// `[psi0^2 - 4 p0 q0]^(-1/2)` (balanced).
    pub omega: f64,
    pub alpha: f64,
    model: WalkModel,
}

impl BarrierSpectrum {
    /// Drift-branch spectrum. Also usable on near-balanced models, which is
    /// how the two branches are compared.
    pub fn drift(model: &WalkModel) -> Result<Self> {
        let rho = model.rho();
        if rho == 1.0 {
            return Err(WalkError::BalancedUnsupported);
        }
        let n = model.n() as f64;
        let (p0, q0, r0) = (model.p0(), model.q0(), model.r0());
        let omega0 = -model.lambda_gap_pow(n) * (1.0 - r0)
            + model.lambda_gap_pow(n - 1.0) * (rho * q0 + p0);
        let gap = (1.0 - rho).abs();
        let linear = omega0 / gap;
        let constant = p0 * rho.powf(n - 1.0);
        let (xi1, xi2) = quadratic_roots(q0, linear, constant)
            .expect("barrier recurrence has real roots for valid models");
        let omega = (omega0 * omega0 - 4.0 * p0 * q0 * gap * gap * rho.powf(n - 1.0)).powf(-0.5);
        Ok(Self {
            branch: Branch::Drift,
            omega0: Some(omega0),
            psi0: None,
            xi1,
            xi2,
            omega,
            alpha: model.alpha(),
            model: *model,
        })
    }

    /// Balanced-branch spectrum (only `p0, q0, s0, N` enter).
    pub fn balanced(model: &WalkModel) -> Self {
        let (p0, q0) = (model.p0(), model.q0());
        let psi0 = -(p0 + q0 + model.n() as f64 * model.s0());
        let (xi1, xi2) =
            quadratic_roots(q0, psi0, p0).expect("balanced barrier recurrence has real roots");
        Self {
            branch: Branch::Balanced,
            omega0: None,
            psi0: Some(psi0),
            xi1,
            xi2,
            omega: (psi0 * psi0 - 4.0 * p0 * q0).powf(-0.5),
            alpha: model.alpha(),
            model: *model,
        }
    }

    pub fn model(&self) -> &WalkModel {
        &self.model
    }

    /// Middle coefficient of the barrier recurrence (`omega0/|1-rho|` or `psi0`).
    pub fn linear_coeff(&self) -> f64 {
        match (self.omega0, self.psi0) {
            (Some(omega0), _) => omega0 / (1.0 - self.model.rho()).abs(),
            (None, Some(psi0)) => psi0,
            _ => unreachable!("spectrum carries one of omega0 / psi0"),
        }
    }

    /// Coefficient of `x[(k-1)N]` (`p0 rho^(N-1)` or `p0`).
    pub fn lower_coeff(&self) -> f64 {
        match self.branch {
            Branch::Drift => self.model.p0() * self.model.rho().powf(self.model.n() as f64 - 1.0),
            Branch::Balanced => self.model.p0(),
        }
    }

    /// `omega0(z) = (l2^N - l1^N)(1 - r0 z) + z (l1^(N-1) - l2^(N-1))(rho q0 + p0)`.
    pub fn omega0_at(&self, z: f64) -> Result<f64> {
        let pair = lambda_pair(&self.model, z)?;
        let n = self.model.n() as f64;
        let (l1, l2) = (pair.lambda1, pair.lambda2);
        let m = &self.model;
        Ok((l2.powf(n) - l1.powf(n)) * (1.0 - m.r0() * z)
            + z * (l1.powf(n - 1.0) - l2.powf(n - 1.0)) * (m.rho() * m.q0() + m.p0()))
    }

    /// Roots of `q0 xi^2 + q zeta(z) omega0(z) xi + p0 rho^(N-1) = 0`, the
    /// z-dependent barrier quadratic for a walk started at a barrier.
    pub fn xi_at(&self, z: f64) -> Result<(f64, f64)> {
        let m = &self.model;
        let zeta = lambda_pair(m, z)?.zeta()?;
        let linear = m.q() * zeta * self.omega0_at(z)?;
        let constant = m.p0() * m.rho().powf(m.n() as f64 - 1.0);
        quadratic_roots(m.q0(), linear, constant)
            .ok_or(WalkError::DegenerateSpectrum { z })
    }
}

/// Barrier spectrum for the model's own branch.
pub fn barrier_spectrum(model: &WalkModel) -> BarrierSpectrum {
    match model.branch() {
        Branch::Drift => BarrierSpectrum::drift(model).expect("drift model has rho != 1"),
        Branch::Balanced => BarrierSpectrum::balanced(model),
    }
}
