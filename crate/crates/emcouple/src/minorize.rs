//! The minorization calculus.
//!
//! Everything here is driven by the accumulated-variance sum of the
//! reflection coupling under a one-step regularity profile `κ`:
//!
//! ```text
//!     Ξ_n(κ) = γ ∑_{k=1}^n (1 + γκ(γ))^{-k}
//!            = −κ(γ)^{-1} · expm1(−n · log1p(γκ(γ))),
//! ```
//!
//! with the linear branch `Ξ_n = γn` when `γκ` is numerically zero. The
//! probability that a coupled pair at distance `t` has not merged after
//! `n` steps is at most `1 − 2Φ(−t/(2Ξ_n^{1/2}))`; block-uniform versions
//! of that bound give explicit minorization constants `ε`, and averaging
//! the same display over samples of the invariant measure yields
//! total-variation decay bounds. An inhomogeneous variant
//! `Ξ_k = ∑_i σ_i²/∏_{j≤i}(1+ϖ_j)` covers scheduled couplings.

use crate::kernel::Schedule;
use crate::model::KappaProfile;
use crate::special::normal_cdf;
use crate::{cast, Error, Real, Result};

/// Ceiling with a relative slop of `1e-9`, so that quotients like `1/γ`
/// that land a few ulps above an integer do not get rounded up a step.
pub(crate) fn ceil_robust(x: f64) -> f64 {
    let c = x.ceil();
    if c - x > 1.0 - 1e-9 * x.abs().max(1.0) && c - x < 1.0 {
        c - 1.0
    } else {
        c
    }
}

/// Steps per unit time: `⌈1/γ⌉`.
pub fn steps_per_unit_time(gamma: f64) -> Result<u64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    Ok(ceil_robust(1.0 / gamma) as u64)
}

/// Accumulated coupling variance `Ξ_n` at evaluated curvature
/// `kappa = κ(γ)`.
///
/// Uses the closed form when `|γκ| ≥ 10⁻¹²` and the exact linear branch
/// `γn` below that threshold (the `expm1`/`log1p` pair cancels there).
pub fn xi_value<F: Real>(kappa: F, gamma: F, n_steps: u64) -> Result<F> {
    if !(gamma > F::zero()) || !gamma.is_finite() {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    let gk = gamma * kappa;
    if gk <= -F::one() {
        return Err(Error::ExplosiveProfile(format!(
            "1 + γκ = {} is not positive",
            F::one() + gk
        )));
    }
    let n = F::from_u64(n_steps).ok_or_else(|| {
        Error::InvalidConfig("step count not representable in the scalar type".into())
    })?;
    if gk.abs() < cast::<F>(1e-12) {
        return Ok(gamma * n);
    }
    Ok(-((-(n * gk.ln_1p())).exp_m1()) / kappa)
}

/// Horizon of a variance-sum query: raw steps, or blocks of `⌈1/γ⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Steps(u64),
    Blocks(u64),
}

/// A fully specified `Ξ` evaluation against a classified profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiQuery {
    pub profile: KappaProfile,
    pub gamma: f64,
    pub horizon: Horizon,
}

impl XiQuery {
    pub fn value(&self) -> Result<f64> {
        if !(self.gamma > 0.0 && self.gamma <= self.profile.gamma_bar) {
            return Err(Error::InvalidConfig(format!(
                "gamma = {} outside (0, {}]",
                self.gamma, self.profile.gamma_bar
            )));
        }
        let n = match self.horizon {
            Horizon::Steps(n) => n,
            Horizon::Blocks(ell) => ell
                .checked_mul(steps_per_unit_time(self.gamma)?)
                .ok_or_else(|| Error::InvalidConfig("block horizon overflows".into()))?,
        };
        xi_value(self.profile.kappa.eval(self.gamma), self.gamma, n)
    }
}

/// Closed-form lower bound `α ≤ Ξ_{ℓ⌈1/γ⌉}` for a block of `ℓ` time
/// units, by the sign of the evaluated curvature:
///
/// ```text
///     κ < 0:  α₋ = −κ^{-1} (e^{−ℓκ} − 1)
///     κ = 0:  α₀ = ℓ
///     κ > 0:  α₊ = κ^{-1} {1 − exp[−ℓκ/(1 + γκ)]}      (≤ 1/κ)
/// ```
pub fn alpha_lower<F: Real>(kappa: F, gamma: F, ell: u64) -> Result<F> {
    if !(gamma > F::zero()) || !gamma.is_finite() {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    if ell == 0 {
        return Err(Error::InvalidConfig("block count must be positive".into()));
    }
    let l = F::from_u64(ell).ok_or_else(|| {
        Error::InvalidConfig("block count not representable in the scalar type".into())
    })?;
    if kappa < F::zero() {
        Ok(-(-l * kappa).exp_m1() / kappa)
    } else if kappa == F::zero() {
        Ok(l)
    } else {
        Ok(-(-l * kappa / (F::one() + gamma * kappa)).exp_m1() / kappa)
    }
}

/// Probability that a coupled pair started at distance `t` is still apart
/// after accumulating variance `Ξ`: at most `1 − 2Φ(−t/(2Ξ^{1/2}))`.
pub fn coalescence_upper_bound<F: Real>(t: F, xi: F) -> Result<F> {
    if !(xi > F::zero()) {
        return Err(Error::InvalidConfig(
            "accumulated variance must be positive".into(),
        ));
    }
    if !(t >= F::zero()) {
        return Err(Error::InvalidConfig("distance must be nonnegative".into()));
    }
    if t == F::zero() {
        return Ok(F::zero());
    }
    let two = cast::<F>(2.0);
    Ok(F::one() - two * normal_cdf(-t / (two * xi.sqrt())))
}

/// How the block minorization constant is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinorizationMode {
    /// Small-set pairs at distance `≤ m`, block of `ℓ ≥ ⌈m²⌉` time units:
    /// the stepsize-free constant `ε = 2Φ(−1/2)`.
    Uniform { m: f64, ell: u64, t: f64 },
    /// Expansive profiles: `ε = 2Φ(−(1+γ̄)^{1/2}(1+κ₊)^{1/2} t/2)`.
    Curvature {
        kappa_plus: f64,
        gamma_bar: f64,
        t: f64,
    },
}

/// Explicit block minorization constant `ε ∈ (0, 1]`.
pub fn minorization_eps(mode: &MinorizationMode) -> Result<f64> {
    match *mode {
        MinorizationMode::Uniform { m, ell, t } => {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidConfig(
                    "small-set diameter must be positive".into(),
                ));
            }
            if !(t >= 0.0) || t > m {
                return Err(Error::InvalidConfig(format!(
                    "pair distance t = {t} must lie in [0, {m}]"
                )));
            }
            let need = ceil_robust(m * m) as u64;
            if ell < need {
                return Err(Error::BlockLengthTooShort(format!(
                    "ell = {ell} < ceil(m^2) = {need}"
                )));
            }
            Ok(2.0 * normal_cdf(-0.5))
        }
        MinorizationMode::Curvature {
            kappa_plus,
            gamma_bar,
            t,
        } => {
            if !(gamma_bar >= 0.0) || !gamma_bar.is_finite() {
                return Err(Error::InvalidConfig(
                    "gamma_bar must be nonnegative".into(),
                ));
            }
            if !(1.0 + kappa_plus >= 0.0) || !kappa_plus.is_finite() {
                return Err(Error::InvalidConfig(
                    "kappa_plus must satisfy 1 + kappa_plus >= 0".into(),
                ));
            }
            if !(t >= 0.0) {
                return Err(Error::InvalidConfig("distance must be nonnegative".into()));
            }
            let arg = -(1.0 + gamma_bar).sqrt() * (1.0 + kappa_plus).sqrt() * t / 2.0;
            Ok(2.0 * normal_cdf(arg))
        }
    }
}

/// TV-decay mode: which closed form of the averaged coalescence bound to
/// use against invariant-measure samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TvDecayMode {
    /// Contractive profiles (`sup κ = κ₋ < 0`): the argument shrinks like
    /// `e^{−ℓκ₋}` in the block count.
    Contractive { kappa_minus: f64 },
    /// Non-expansive profiles (`κ ≡ 0`): diffusive `ℓ^{1/2}` scaling.
    NonExpansive,
}

/// Upper bound on the total-variation distance to the invariant measure
/// after `ℓ` time units, by Monte Carlo average of the closed-form
/// integrand over `pi_samples`:
///
/// ```text
///     contractive:    mean_y { 1 − 2Φ( −(−κ₋)^{1/2}‖x−y‖ / [2(e^{−ℓκ₋} − 1)^{1/2}] ) }
///     non-expansive:  mean_y { 1 − 2Φ( −‖x−y‖ / (2ℓ^{1/2}) ) }
/// ```
pub fn tv_decay_bound(
    mode: &TvDecayMode,
    x: &[f64],
    pi_samples: &[Vec<f64>],
    ell: u64,
) -> Result<f64> {
    if pi_samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if ell == 0 {
        return Err(Error::InvalidConfig("block count must be positive".into()));
    }
    let scale = match *mode {
        TvDecayMode::Contractive { kappa_minus } => {
            if !(kappa_minus < 0.0) || !kappa_minus.is_finite() {
                return Err(Error::InvalidConfig(
                    "contractive mode requires kappa_minus < 0".into(),
                ));
            }
            // (−κ₋)^{1/2} / [2(e^{−ℓκ₋} − 1)^{1/2}]
            (-kappa_minus).sqrt() / (2.0 * (-(ell as f64) * kappa_minus).exp_m1().sqrt())
        }
        TvDecayMode::NonExpansive => 1.0 / (2.0 * (ell as f64).sqrt()),
    };
    let mut acc = 0.0;
    for y in pi_samples {
        if y.len() != x.len() {
            return Err(Error::InvalidConfig(format!(
                "sample dimension {} does not match x ({})",
                y.len(),
                x.len()
            )));
        }
        let dist = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        acc += if dist == 0.0 {
            0.0
        } else {
            1.0 - 2.0 * normal_cdf(-scale * dist)
        };
    }
    Ok(acc / pi_samples.len() as f64)
}

/// Accumulated variance of an inhomogeneous schedule after `k` steps:
/// `∑_{i=1}^k σ_i² / ∏_{j=1}^i (1 + ϖ_j)`.
pub fn xi_schedule(sched: &Schedule, k: usize) -> Result<f64> {
    if k > sched.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds schedule length {}",
            sched.len()
        )));
    }
    let mut prod = 1.0;
    let mut acc = 0.0;
    for i in 0..k {
        let w = sched.warps[i];
        if !(1.0 + w > 0.0) {
            return Err(Error::ExplosiveProfile(format!(
                "schedule warp {w} at step {i} gives 1 + warp <= 0"
            )));
        }
        prod *= 1.0 + w;
        acc += sched.sigmas[i] * sched.sigmas[i] / prod;
    }
    Ok(acc)
}
