//! Foster–Lyapunov drift certificates for the coupled kernel, plus a
//! Monte-Carlo auditor that stress-tests a certificate against simulation.
//!
//! A certificate packages a pair function `𝒱 ≥ 1`, a rate `λ ∈ (0, 1)`, a
//! surplus constant `A ≥ 0` and a small set `C` such that the
//! reflection-coupled kernel satisfies, for every stepsize `γ ∈ (0, γ̄]`,
//!
//! ```text
//!     K_γ 𝒱(x, y)  ≤  λ^γ 𝒱(x, y) + A γ 1_C(x, y) .
//! ```
//!
//! Three metadata routes produce such certificates:
//!
//! * [`linear_certificate`] — strong monotonicity at infinity certifies the
//!   distance function `𝒱 = 1 + ‖x − y‖/R₁` with the strip
//!   `{‖x − y‖ ≤ R₁}` as small set;
//! * [`quadratic_certificate`] — radial confinement certifies
//!   `𝒱 = 1 + (‖x‖² + ‖y‖²)/2` on a product ball;
//! * [`exponential_certificate`] — weak dissipativity certifies the
//!   stepsize-warped `𝒱^γ` with `𝒱 = (V(x) + V(y))/2`,
//!   `V(x) = exp(rate·√(1 + ‖x‖²))`, on a product ball.
//!
//! The drift inequalities behind the first two routes hold for a
//! *nonpositive* one-sided constant, so a positive declared constant is
//! weakened to `0` before it enters the surplus; this costs nothing, since
//! any drift with a positive one-sided constant also admits the constant
//! `0`, and it keeps the inequality valid arbitrarily close to the
//! diagonal (where the merged mass pins `K_γ𝒱` at `1`).
//!
//! [`moment_certificate`] produces the companion moment drift
//! `K_γ‖x − y‖^p ≤ λ_p^γ‖x − y‖^p + A_p γ`, and [`pairify`] lifts a
//! single-chain drift `P_γV ≤ λ^γV + Aγ` to the pair space, either on all
//! of `X²` at the same rate or on a product ball at the square-root rate.
//!
//! [`verify_drift_mc`] closes the loop: it estimates `K_γ𝒱` by inner Monte
//! Carlo over a stratified cloud of start pairs (half inside the small
//! set, half outside) and reports the worst violation margin of the
//! certified inequality together with its standard error.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kernel::{coupled_step, ChainConfig, CoupleState};
use crate::model::DriftSpec;
use crate::{par, rng, Error, Result};

/// The certified pair function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PairLyapunov {
    /// `𝒱(x, y) = 1 + ‖x − y‖ / r`.
    Distance { r: f64 },
    /// `𝒱(x, y) = 1 + (‖x‖² + ‖y‖²)/2`.
    Quadratic,
    /// `𝒱(x, y) = (V(x) + V(y))/2` with `V(x) = exp(rate·√(1 + ‖x‖²))`.
    Exponential { rate: f64 },
}

impl PairLyapunov {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            PairLyapunov::Distance { r } => 1.0 + dist(x, y) / r,
            PairLyapunov::Quadratic => {
                1.0 + (sq_norm(x) + sq_norm(y)) / 2.0
            }
            PairLyapunov::Exponential { rate } => {
                let v = |p: &[f64]| (rate * (1.0 + sq_norm(p)).sqrt()).exp();
                (v(x) + v(y)) / 2.0
            }
        }
    }

    /// The coupling cost `1_{x ≠ y} 𝒱(x, y)` (zero on the diagonal).
    pub fn cost(&self, x: &[f64], y: &[f64]) -> f64 {
        if x == y {
            0.0
        } else {
            self.eval(x, y)
        }
    }
}

/// Where the surplus `Aγ` is allowed to act.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SmallSet {
    /// `{(x, y) : ‖x − y‖ ≤ m}`.
    DistanceBall { m: f64 },
    /// `B̄(0, r) × B̄(0, r)`.
    ProductBall { r: f64 },
}

impl SmallSet {
    pub fn contains(&self, x: &[f64], y: &[f64]) -> bool {
        match *self {
            SmallSet::DistanceBall { m } => dist(x, y) <= m,
            SmallSet::ProductBall { r } => {
                sq_norm(x) <= r * r && sq_norm(y) <= r * r
            }
        }
    }
}

/// A certified geometric drift `K_γ𝒱 ≤ λ^γ𝒱 + Aγ·1_C` for all
/// `γ ∈ (0, gamma_bar]`.
///
/// When `v_exponent_gamma` is set the certified inequality instead reads
/// `K_γ𝒱^γ ≤ λ^γ𝒱^γ + Aγ·1_C`: the exponential route warps the pair
/// function by the stepsize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftCertificate {
    pub v: PairLyapunov,
    pub lambda: f64,
    pub a: f64,
    pub small_set: SmallSet,
    pub gamma_bar: f64,
    /// Distance diameter bound: `C ⊆ {(x, y) : ‖x − y‖ ≤ m_tilde}`.
    pub m_tilde: f64,
    /// `sup_C 𝒱`.
    pub b_d: f64,
    /// Certifies `𝒱^γ` rather than `𝒱`.
    pub v_exponent_gamma: bool,
}

fn check_gamma_bar(gamma_bar: f64) -> Result<()> {
    if !(gamma_bar > 0.0) || !gamma_bar.is_finite() {
        return Err(Error::InvalidConfig(
            "gamma_bar must be positive and finite".into(),
        ));
    }
    Ok(())
}

fn check_cap(gamma_bar: f64, limit: f64, what: &str) -> Result<()> {
    check_gamma_bar(gamma_bar)?;
    if gamma_bar >= limit {
        return Err(Error::StepsizeCap(format!(
            "{what} requires gamma_bar < {limit}, got {gamma_bar}"
        )));
    }
    Ok(())
}

/// Distance-route certificate from strong monotonicity at infinity.
///
/// For a drift that is strongly monotone with modulus `m₁⁺` on pairs at
/// distance `≥ R₁`, the pair function `𝒱 = 1 + ‖x − y‖/R₁` satisfies the
/// geometric drift with
///
/// ```text
///     λ = exp[−(m₁⁺ − γ̄L²/2)/2] ,    A = m₁⁺ − min(m, 0) ,
/// ```
///
/// small set `{‖x − y‖ ≤ R₁}` and `sup_C 𝒱 = 2`, provided
/// `γ̄ < 2m₁⁺/L²`. The constants do not depend on the dimension.
pub fn linear_certificate(drift: &DriftSpec, gamma_bar: f64) -> Result<DriftCertificate> {
    let c1 = drift.conv_inf.ok_or_else(|| {
        Error::InsufficientDriftMetadata(
            "the distance-route certificate needs the strong-monotonicity block (c1)".into(),
        )
    })?;
    let l = drift.lipschitz;
    check_cap(
        gamma_bar,
        2.0 * c1.m_plus / (l * l),
        "the distance-route certificate",
    )?;
    let m_neg = drift.one_sided.min(0.0);
    Ok(DriftCertificate {
        v: PairLyapunov::Distance { r: c1.radius },
        lambda: (-(c1.m_plus - gamma_bar * l * l / 2.0) / 2.0).exp(),
        a: c1.m_plus - m_neg,
        small_set: SmallSet::DistanceBall { m: c1.radius },
        gamma_bar,
        m_tilde: c1.radius,
        b_d: 2.0,
        v_exponent_gamma: false,
    })
}

/// Quadratic-route certificate from radial confinement.
///
/// For `⟨b(x), x⟩ ≤ −m₂⁺‖x‖²` outside `B(0, R₂)`, the pair function
/// `𝒱 = 1 + (‖x‖² + ‖y‖²)/2` satisfies the geometric drift with
///
/// ```text
///     λ = exp[−(m₂⁺ − γ̄L²/2)] ,
///     A = d + 2R₂²(m₂⁺ − min(m, 0)) + 2m₂⁺ ,
///     R = √2 · λ^{−γ̄} A^{1/2} log^{−1/2}(1/λ) ,
/// ```
///
/// small set `B̄(0, R)²` (contained in `{‖x − y‖ ≤ 2R}`) and
/// `sup_C 𝒱 = 1 + R²`, provided `γ̄ < 2m₂⁺/L²`.
pub fn quadratic_certificate(drift: &DriftSpec, gamma_bar: f64) -> Result<DriftCertificate> {
    let c2 = drift.radial.ok_or_else(|| {
        Error::InsufficientDriftMetadata(
            "the quadratic-route certificate needs the radial-confinement block (c2)".into(),
        )
    })?;
    let l = drift.lipschitz;
    check_cap(
        gamma_bar,
        2.0 * c2.m_plus / (l * l),
        "the quadratic-route certificate",
    )?;
    let m_neg = drift.one_sided.min(0.0);
    let d = drift.dim as f64;
    let lambda = (-(c2.m_plus - gamma_bar * l * l / 2.0)).exp();
    let a = d + 2.0 * c2.radius * c2.radius * (c2.m_plus - m_neg) + 2.0 * c2.m_plus;
    let log_inv = -lambda.ln();
    let r = std::f64::consts::SQRT_2 * lambda.powf(-gamma_bar) * a.sqrt() / log_inv.sqrt();
    Ok(DriftCertificate {
        v: PairLyapunov::Quadratic,
        lambda,
        a,
        small_set: SmallSet::ProductBall { r },
        gamma_bar,
        m_tilde: 2.0 * r,
        b_d: 1.0 + r * r,
        v_exponent_gamma: false,
    })
}

/// Exponential-route certificate from weak dissipativity.
///
/// For `⟨b(x), x⟩ ≤ −k₁‖x‖·1_{‖x‖>R₃} − k₂‖b(x)‖² + a/2` and any
/// `rate ∈ (0, k₁/2]`, the warped pair function `𝒱^γ` with
/// `𝒱 = (V(x) + V(y))/2`, `V(x) = exp(rate·√(1 + ‖x‖²))`, satisfies the
/// geometric drift with
///
/// ```text
///     λ = exp[−rate²/2] ,            R₄ = max(1, R₃, (d + a)/k₁) ,
///     A = exp[γ̄(rate(d + a) + rate²)/2 + rate(1 + R₄²)^{1/2}]
///           · (rate(d + a)/2 + rate²) ,
///     R = log(2λ^{−2γ̄} A log^{−1}(1/λ)) ,
/// ```
///
/// small set `B̄(0, R)²` and `sup_C 𝒱 = exp(rate·√(1 + R²))`, provided
/// `γ̄ < 2k₂`.
pub fn exponential_certificate(
    drift: &DriftSpec,
    gamma_bar: f64,
    rate: f64,
) -> Result<DriftCertificate> {
    let c3 = drift.weak.ok_or_else(|| {
        Error::InsufficientDriftMetadata(
            "the exponential-route certificate needs the weak-dissipativity block (c3)".into(),
        )
    })?;
    if !(rate > 0.0 && rate <= c3.k1 / 2.0) {
        return Err(Error::InvalidConfig(format!(
            "exponential rate must lie in (0, k1/2] = (0, {}], got {rate}",
            c3.k1 / 2.0
        )));
    }
    check_cap(gamma_bar, 2.0 * c3.k2, "the exponential-route certificate")?;
    let d = drift.dim as f64;
    let r4 = 1.0f64.max(c3.radius).max((d + c3.a) / c3.k1);
    let lambda = (-rate * rate / 2.0).exp();
    let a = (gamma_bar * (rate * (d + c3.a) + rate * rate) / 2.0
        + rate * (1.0 + r4 * r4).sqrt())
    .exp()
        * (rate * (d + c3.a) / 2.0 + rate * rate);
    let log_inv = rate * rate / 2.0;
    let r = (2.0 * lambda.powf(-2.0 * gamma_bar) * a / log_inv).ln().max(0.0);
    Ok(DriftCertificate {
        v: PairLyapunov::Exponential { rate },
        lambda,
        a,
        small_set: SmallSet::ProductBall { r },
        gamma_bar,
        m_tilde: 2.0 * r,
        b_d: (rate * (1.0 + r * r).sqrt()).exp(),
        v_exponent_gamma: true,
    })
}

/// A certified moment drift
/// `K_γ‖x − y‖^p ≤ lambda^γ‖x − y‖^p + a·γ` for all `γ ∈ (0, gamma_bar]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentCertificate {
    pub p: u32,
    pub lambda: f64,
    pub a: f64,
    pub gamma_bar: f64,
}

/// `k!!` for odd `k` (the `2p`-th standard-normal moment is `(2p − 1)!!`).
fn odd_double_factorial(k: u32) -> f64 {
    let mut acc = 1.0;
    let mut i = k;
    while i > 1 {
        acc *= f64::from(i);
        i -= 2;
    }
    acc
}

/// Moment-route certificate from strong monotonicity at infinity.
///
/// For `p ≥ 2` and `γ̄ < 2m₁⁺/L²`, the coupled kernel contracts the p-th
/// power of the pair distance:
///
/// ```text
///     λ_p = exp[−m₁⁺/2 + γ̄L²/4] ,        C = (2p−1)!!·2^{2p}·max(1, γ̄)^p ,
///     A_{p,1} = sup_{t ≥ 0} { C t^{p−2} − m₁⁺ t^p/2 } ,
///     A_{p,2} = C κ₂^p R̄^{p−2}
///               + R̄^p { max(1, γ̄)^p (1 − m₋/2 + L²γ̄/4)^p + m₁⁺ } ,
///     A_p = max(A_{p,1}, A_{p,2}) ,
/// ```
///
/// with `κ₂ = max(1, 1 − γ̄m₋ + γ̄²L²/2)`, `R̄ = max(1, R₁)` and
/// `m₋ = min(m, 0)`.
pub fn moment_certificate(drift: &DriftSpec, gamma_bar: f64, p: u32) -> Result<MomentCertificate> {
    if p < 2 {
        return Err(Error::InvalidConfig(format!(
            "moment order must be at least 2, got {p}"
        )));
    }
    let c1 = drift.conv_inf.ok_or_else(|| {
        Error::InsufficientDriftMetadata(
            "the moment certificate needs the strong-monotonicity block (c1)".into(),
        )
    })?;
    let l = drift.lipschitz;
    check_cap(gamma_bar, 2.0 * c1.m_plus / (l * l), "the moment certificate")?;
    let m_neg = drift.one_sided.min(0.0);
    let m1p = c1.m_plus;
    let pf = f64::from(p);
    let pi = p as i32;
    let lambda = (-m1p / 2.0 + gamma_bar * l * l / 4.0).exp();
    let c = odd_double_factorial(2 * p - 1) * 2.0f64.powi(2 * pi) * gamma_bar.max(1.0).powi(pi);
    let a1 = if p == 2 {
        c
    } else {
        let t_star_sq = 2.0 * (pf - 2.0) * c / (pf * m1p);
        t_star_sq.powf((pf - 2.0) / 2.0) * 2.0 * c / pf
    };
    let kappa2 = (1.0 - gamma_bar * m_neg + gamma_bar * gamma_bar * l * l / 2.0).max(1.0);
    let r_bar = c1.radius.max(1.0);
    let a2 = c * kappa2.powi(pi) * r_bar.powi(pi - 2)
        + r_bar.powi(pi)
            * (gamma_bar.max(1.0).powi(pi) * (1.0 - m_neg / 2.0 + l * l * gamma_bar / 4.0).powi(pi)
                + m1p);
    Ok(MomentCertificate {
        p,
        lambda,
        a: a1.max(a2),
        gamma_bar,
    })
}

/// A single-chain Lyapunov function `V : X → [1, ∞)`.
#[derive(Clone)]
pub enum SingleLyapunov {
    /// `V(x) = 1 + ‖x‖²`.
    Quadratic,
    /// `V(x) = exp(rate·√(1 + ‖x‖²))`.
    Exponential { rate: f64 },
    /// Caller-supplied `V ≥ 1`. `level_radius(v)` must return a radius
    /// outside which `V ≥ v`; `None` marks a `V` that does not diverge at
    /// infinity, for which only the full-space pair drift exists.
    Custom {
        eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        level_radius: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    },
}

impl std::fmt::Debug for SingleLyapunov {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SingleLyapunov::Quadratic => f.write_str("Quadratic"),
            SingleLyapunov::Exponential { rate } => {
                f.debug_struct("Exponential").field("rate", rate).finish()
            }
            SingleLyapunov::Custom { level_radius, .. } => f
                .debug_struct("Custom")
                .field("eval", &"<fn>")
                .field("level_radius", &level_radius.as_ref().map(|_| "<fn>"))
                .finish(),
        }
    }
}

impl SingleLyapunov {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            SingleLyapunov::Quadratic => 1.0 + sq_norm(x),
            SingleLyapunov::Exponential { rate } => (rate * (1.0 + sq_norm(x)).sqrt()).exp(),
            SingleLyapunov::Custom { eval, .. } => eval(x),
        }
    }

    /// A radius outside which `V ≥ v` (the smallest such radius for the
    /// built-in shapes).
    pub fn level_radius(&self, v: f64) -> Option<f64> {
        match self {
            SingleLyapunov::Quadratic => Some((v - 1.0).max(0.0).sqrt()),
            SingleLyapunov::Exponential { rate } => {
                let t = v.max(1.0).ln() / rate;
                Some((t * t - 1.0).max(0.0).sqrt())
            }
            SingleLyapunov::Custom { level_radius, .. } => {
                level_radius.as_ref().map(|f| f(v))
            }
        }
    }
}

/// Pair-space drift obtained from a single-chain drift
/// `P_γV ≤ λ^γV + Aγ` (full space) for `𝒱(x, y) = (V(x) + V(y))/2`:
///
/// * full space: `K_γ𝒱 ≤ lambda_full^γ 𝒱 + aγ` everywhere,
///   `lambda_full = λ`;
/// * restricted: `K_γ𝒱 ≤ lambda_halved^γ 𝒱 + aγ·1_{B̄(0,radius)²}` with
///   `lambda_halved = λ^{1/2}`, where the product ball is the complement
///   of the level set `{V ≥ threshold}`,
///   `threshold = 4λ^{−γ̄}A·log^{−1}(1/λ)`, and sits inside the strip
///   `{‖x − y‖ ≤ 2·radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCertificate {
    pub lambda_full: f64,
    pub lambda_halved: f64,
    pub a: f64,
    pub threshold: f64,
    pub radius: f64,
    pub gamma_bar: f64,
}

/// Lift a single-chain geometric drift to the pair space.
///
/// Fails with a non-coercive-V error when a custom `V` carries no
/// level-radius map: without a coercivity witness the restricted branch
/// has no small set.
pub fn pairify(v: &SingleLyapunov, lambda: f64, a: f64, gamma_bar: f64) -> Result<PairCertificate> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "single-chain rate must lie in (0, 1), got {lambda}"
        )));
    }
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidConfig(
            "single-chain surplus must be nonnegative and finite".into(),
        ));
    }
    if !(gamma_bar >= 0.0) || !gamma_bar.is_finite() {
        return Err(Error::InvalidConfig(
            "gamma_bar must be nonnegative and finite".into(),
        ));
    }
    let threshold = 4.0 * lambda.powf(-gamma_bar) * a / -lambda.ln();
    let radius = v.level_radius(threshold).ok_or_else(|| {
        Error::NonCoerciveV(
            "custom V has no level-radius map; only the full-space branch applies".into(),
        )
    })?;
    Ok(PairCertificate {
        lambda_full: lambda,
        lambda_halved: lambda.sqrt(),
        a,
        threshold,
        radius,
        gamma_bar,
    })
}

/// Verdict of a Monte-Carlo drift audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditOutcome {
    /// No violation, and every margin was resolved sharply enough to have
    /// detected a relative violation of 5%.
    Pass,
    /// Some start pair violated the inequality beyond three standard
    /// errors.
    Fail,
    /// No violation detected, but the sample budget left margins
    /// unresolved at the 5% level; enlarge the budget rather than read
    /// this as a failure.
    Inconclusive,
}

/// Report of [`verify_drift_mc`].
#[derive(Debug, Clone, Serialize)]
pub struct DriftAudit {
    pub outcome: AuditOutcome,
    /// Largest estimated `K_γ𝒱 − (λ^γ𝒱 + Aγ1_C)` over start pairs.
    pub worst_margin: f64,
    /// Standard error of that worst estimate.
    pub worst_stderr: f64,
    /// The start pair attaining the worst margin.
    pub worst_pair: (Vec<f64>, Vec<f64>),
    /// Pairs whose margin exceeded three standard errors.
    pub violations: usize,
    /// Pairs left unresolved at the 5% relative level.
    pub unresolved: usize,
    pub outer_pairs: usize,
    pub inner_draws: u64,
}

struct PairEval {
    margin: f64,
    stderr: f64,
    rhs: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn unit_direction(rg: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rg.sample(StandardNormal)).collect();
        let n = sq_norm(&v).sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// One stratified start pair: dense near the small-set boundary on both
/// sides, with mass near the diagonal for distance strips.
fn sample_pair(rg: &mut ChaCha8Rng, d: usize, small_set: &SmallSet, inside: bool) -> (Vec<f64>, Vec<f64>) {
    match *small_set {
        SmallSet::DistanceBall { m } => {
            let spread = 1.0 + m;
            let x: Vec<f64> = (0..d).map(|_| spread * rg.sample::<f64, _>(StandardNormal)).collect();
            let dir = unit_direction(rg, d);
            let t = if inside {
                let u: f64 = rg.gen();
                m * u * u
            } else {
                m * (1.0 + rg.sample::<f64, _>(Exp1))
            };
            let y = x.iter().zip(&dir).map(|(&a, &e)| a + t * e).collect();
            (x, y)
        }
        SmallSet::ProductBall { r } => {
            let point = |rg: &mut ChaCha8Rng| -> Vec<f64> {
                let dir = unit_direction(rg, d);
                let rad = if inside {
                    let u: f64 = rg.gen();
                    r * u.powf(1.0 / d as f64)
                } else {
                    r + (0.5 + 0.5 * r) * rg.sample::<f64, _>(Exp1)
                };
                dir.into_iter().map(|e| rad * e).collect()
            };
            (point(rg), point(rg))
        }
    }
}

fn certified_value(cert: &DriftCertificate, x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let v = cert.v.eval(x, y);
    if cert.v_exponent_gamma {
        v.powf(gamma)
    } else {
        v
    }
}

fn eval_pair(
    cert: &DriftCertificate,
    cfg: &ChainConfig,
    x: Vec<f64>,
    y: Vec<f64>,
    inner_draws: u64,
    rg: &mut ChaCha8Rng,
) -> Result<PairEval> {
    let gamma = cfg.step.gamma;
    let state = CoupleState::new(x, y);
    let v0 = certified_value(cert, &state.x, &state.y, gamma);
    let surplus = if cert.small_set.contains(&state.x, &state.y) {
        cert.a * gamma
    } else {
        0.0
    };
    let rhs = cert.lambda.powf(gamma) * v0 + surplus;
    let mut z = vec![0.0; state.x.len()];
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..inner_draws {
        for zi in z.iter_mut() {
            *zi = rg.sample(StandardNormal);
        }
        let u: f64 = rg.gen();
        let next = coupled_step(cfg, &state, &z, u)?;
        let w = certified_value(cert, &next.x, &next.y, gamma);
        sum += w;
        sumsq += w * w;
    }
    let n = inner_draws as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(PairEval {
        margin: mean - rhs,
        stderr: (var / n).sqrt(),
        rhs,
        x: state.x,
        y: state.y,
    })
}

/// Monte-Carlo audit of a drift certificate against the coupled kernel.
///
/// Draws `outer_pairs` start pairs — alternating between the inside and
/// the outside of the certificate's small set, stratified toward its
/// boundary — and estimates `K_γ𝒱` at each by `inner_draws` coupled
/// transitions. A pair *violates* when its estimated margin
/// `K̂_γ𝒱 − (λ^γ𝒱 + Aγ1_C)` exceeds three standard errors; a pair is
/// *unresolved* when its margin is compatible with zero but the standard
/// error is too large to detect a 5% relative violation. Any violation
/// yields a failed audit; unresolved margins alone yield an inconclusive
/// one.
pub fn verify_drift_mc(
    cert: &DriftCertificate,
    cfg: &ChainConfig,
    outer_pairs: usize,
    inner_draws: u64,
) -> Result<DriftAudit> {
    cfg.validate()?;
    if cfg.step.gamma > cert.gamma_bar {
        return Err(Error::StepsizeCap(format!(
            "audit stepsize {} exceeds the certificate range (0, {}]",
            cfg.step.gamma, cert.gamma_bar
        )));
    }
    if outer_pairs < 2 {
        return Err(Error::InvalidConfig(
            "the audit needs at least 2 start pairs".into(),
        ));
    }
    if inner_draws < 2 {
        return Err(Error::InvalidConfig(
            "the audit needs at least 2 inner draws per pair".into(),
        ));
    }
    let d = cfg.dim();
    let blocks: Vec<Result<Vec<PairEval>>> =
        par::map_blocks(outer_pairs as u64, 64, |range| {
            range
                .map(|i| {
                    let mut rg = rng::stream(cfg.seed, rng::DOMAIN_AUDIT, i);
                    let (x, y) = sample_pair(&mut rg, d, &cert.small_set, i % 2 == 0);
                    eval_pair(cert, cfg, x, y, inner_draws, &mut rg)
                })
                .collect()
        });
    let mut worst: Option<PairEval> = None;
    let mut violations = 0;
    let mut unresolved = 0;
    for block in blocks {
        for pe in block? {
            if pe.margin > 3.0 * pe.stderr {
                violations += 1;
            } else if pe.margin + 3.0 * pe.stderr > 0.0 && 3.0 * pe.stderr > 0.05 * pe.rhs {
                unresolved += 1;
            }
            if worst.as_ref().map_or(true, |w| pe.margin > w.margin) {
                worst = Some(pe);
            }
        }
    }
    let worst = worst.expect("outer_pairs >= 2");
    let outcome = if violations > 0 {
        AuditOutcome::Fail
    } else if unresolved > 0 {
        AuditOutcome::Inconclusive
    } else {
        AuditOutcome::Pass
    };
    Ok(DriftAudit {
        outcome,
        worst_margin: worst.margin,
        worst_stderr: worst.stderr,
        worst_pair: (worst.x, worst.y),
        violations,
        unresolved,
        outer_pairs,
        inner_draws,
    })
}
