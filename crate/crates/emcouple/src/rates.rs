//! Assembly of explicit geometric convergence rates.
//!
//! The pipeline combines two ingredients produced elsewhere in the crate:
//!
//! * a coalescence lower bound `Ψ(γ, ℓ, t)` for the reflection coupling
//!   over blocks of `ℓ⌈1/γ⌉` steps, built from the step-map regularity
//!   profile `κ(γ)` and the accumulated-variance sum `Ξ` ([`psi`],
//!   [`eps_inf`]);
//! * a Foster–Lyapunov drift certificate `K_γ𝒱 ≤ λ^γ𝒱 + Aγ1_C`
//!   ([`crate::lyapunov`]).
//!
//! [`assemble_rate_constants`] turns `(λ, A, B̄_d = sup_C 𝒱)` and the
//! block-minorization constant `ε̄` into the coupling rate
//!
//! ```text
//!     log ρ̄₁ = log(λ) log(1 − ε̄) / {−log(c̄₁) + log(1 − ε̄)},
//!     c̄₁    = B̄_d + A λ^{−(1+γ̄)ℓ} (1 + γ̄) ℓ,
//! ```
//!
//! together with the prefactors `D̄₁, D̄₂, C̄₁` of the two-term bound
//!
//! ```text
//!     W_c(δ_x R_γ^k, δ_y R_γ^k)
//!         ≤ λ^{kγ/4} [D̄₁ c(x,y) + D̄₂ 1_{Δ^c}] + C̄₁ ρ̄₁^{kγ/4} 1_{Δ^c},
//! ```
//!
//! which collapses to `(D̄₁ + D̄₂ + C̄₁) ρ̄₁^{kγ/4} c(x,y)` since
//! `λ ≤ ρ̄₁` always ([`bound_curve`]).  [`w_constants`] converts the
//! cost-function bound into plain `W₁`/`W_p` bounds, [`limit_constants`]
//! evaluates every closed form at `γ̄ = 0` and cross-checks the result
//! against a stepsize-grid extrapolation, and
//! [`asymptotic_and_competitor_rates`] emits the first-order log
//! mixing-time summaries used to compare against other published-style
//! bounds.  [`harris_constants`] and [`block_harris_constants`] expose
//! the underlying generic-chain machinery: the former for a minorized
//! small set of a generic kernel, the latter for a drift that holds on
//! the whole product space with a block (multi-step) minorization.
//!
//! All rates are reported per unit time: exponents are `kγ` (or `kγ/4`)
//! for `k` steps of size `γ`, so the numbers are directly comparable
//! across stepsizes and with diffusion limits.

use serde::{Deserialize, Serialize};

use crate::lyapunov::{
    linear_certificate, moment_certificate, DriftCertificate, MomentCertificate, PairLyapunov,
    SmallSet,
};
use crate::minorize::{ceil_robust, steps_per_unit_time, xi_value};
use crate::model::{DriftSpec, KappaFn, KappaProfile, SignClass};
use crate::quad::integrate;
use crate::special::{normal_cdf, normal_pdf};
use crate::{Error, Result};

/// `log(e^a + e^b)` without leaving log space.
fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// The shared log-fraction rate: `log ρ = log(λ*) log(1 − ε) /
/// {log(1 − ε) − log_offset}` with `log_offset = log(c) − log(λ*)`
/// adjustments folded in by the caller.  `ε = 1` (coupling certain
/// within one block) degenerates to `ρ = λ*`, which is also the exact
/// limit `ε → 1⁻`; the result is clamped to `≥ log λ*` against
/// floating-point wobble so `λ* ≤ ρ` holds verbatim.
fn rate_log_fraction(log_lambda: f64, eps: f64, log_offset: f64) -> f64 {
    debug_assert!(log_lambda < 0.0);
    debug_assert!(log_offset >= 0.0 || log_offset.is_nan() == false);
    if eps >= 1.0 {
        return log_lambda;
    }
    let log1meps = (-eps).ln_1p();
    let r = log_lambda * log1meps / (log1meps - log_offset);
    r.max(log_lambda)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must lie in (0, 1), got {v}"
        )))
    }
}

// ---------------------------------------------------------------------
// Block coalescence lower bound Ψ
// ---------------------------------------------------------------------

/// Which curvature metadata the coalescence lower bound runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiMode {
    /// One-sided Lipschitz metadata only: profile `κ(γ) = −2m + γL²`.
    OneSided,
    /// Cocoercive drifts (`γ̄ ≤ 2m_b`): non-expansive steps, profile
    /// `κ(γ) = γL²`, plus a constant branch `2Φ(−1/2)` on blocks long
    /// enough relative to the contraction radius.
    Cocoercive,
}

/// Inputs of the block coalescence lower bound `Ψ(γ, ℓ, t)`: the
/// probability that the reflection coupling merges within `ℓ⌈1/γ⌉`
/// steps from distance `t` is at least `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiSpec {
    pub mode: PsiMode,
    /// Block length in units of `⌈1/γ⌉` steps.
    pub ell: u64,
    /// Step-map regularity profile feeding the variance sum `Ξ`.
    pub profile: KappaProfile,
    /// Contraction radius `R₁`; gates the cocoercive constant branch.
    pub r1: f64,
}

/// Build an affine profile `κ(γ) = a + bγ` on `(0, γ̄]`, rejecting
/// parameter ranges where `1 + γκ(γ)` reaches zero.
fn affine_profile(a: f64, b: f64, gamma_bar: f64) -> Result<KappaProfile> {
    check_positive("gamma_bar", gamma_bar)?;
    // min over the closure of (0, γ̄] of γκ(γ) = aγ + bγ²; the parabola
    // bottoms out at γ* = −a/(2b) when a < 0 < b.
    let mut min_gk = (gamma_bar * (a + b * gamma_bar)).min(0.0);
    if a < 0.0 && b > 0.0 && -a / (2.0 * b) < gamma_bar {
        min_gk = min_gk.min(-a * a / (4.0 * b));
    }
    if min_gk <= -1.0 {
        return Err(Error::ExplosiveProfile(format!(
            "1 + γκ(γ) reaches {} on (0, {gamma_bar}]",
            1.0 + min_gk
        )));
    }
    let sup = if b >= 0.0 { a + b * gamma_bar } else { a };
    let (class, kappa) = if a == 0.0 && b == 0.0 {
        (SignClass::NonPositive, KappaFn::Zero)
    } else if sup < 0.0 {
        (SignClass::Negative, KappaFn::Affine { a, b })
    } else {
        (SignClass::Positive, KappaFn::Affine { a, b })
    };
    Ok(KappaProfile {
        class,
        kappa,
        gamma_bar,
        kappa_minus: sup,
        kappa_plus: sup,
    })
}

impl PsiSpec {
    fn check_ell(ell: u64) -> Result<u64> {
        if ell == 0 {
            return Err(Error::InvalidConfig("block length ell must be >= 1".into()));
        }
        Ok(ell)
    }

    /// Coalescence bound from one-sided Lipschitz metadata; valid for
    /// drifts of either curvature sign.
    pub fn one_sided(drift: &DriftSpec, gamma_bar: f64, ell: u64) -> Result<PsiSpec> {
        let profile = affine_profile(
            -2.0 * drift.one_sided,
            drift.lipschitz * drift.lipschitz,
            gamma_bar,
        )?;
        Ok(PsiSpec {
            mode: PsiMode::OneSided,
            ell: Self::check_ell(ell)?,
            profile,
            r1: 0.0,
        })
    }

    /// Coalescence bound for cocoercive drifts: requires the declared
    /// constant `m_b` with `γ̄ ≤ 2m_b` (non-expansive steps) and the
    /// strong-monotonicity radius `R₁` gating the constant branch.
    pub fn cocoercive(drift: &DriftSpec, gamma_bar: f64, ell: u64) -> Result<PsiSpec> {
        let mb = drift.cocoercivity.ok_or_else(|| {
            Error::InsufficientDriftMetadata(
                "the cocoercive coalescence bound needs the cocoercivity constant m_b".into(),
            )
        })?;
        if gamma_bar > 2.0 * mb {
            return Err(Error::StepsizeCap(format!(
                "gamma_bar = {gamma_bar} exceeds 2 m_b = {}",
                2.0 * mb
            )));
        }
        let c1 = drift.conv_inf.ok_or_else(|| {
            Error::InsufficientDriftMetadata(
                "the cocoercive coalescence bound needs the strong-monotonicity block (c1)".into(),
            )
        })?;
        let profile = affine_profile(0.0, drift.lipschitz * drift.lipschitz, gamma_bar)?;
        Ok(PsiSpec {
            mode: PsiMode::Cocoercive,
            ell: Self::check_ell(ell)?,
            profile,
            r1: c1.radius,
        })
    }

    /// Assemble from an explicit profile (e.g. [`crate::model::classify_kappa`]).
    pub fn with_profile(
        mode: PsiMode,
        profile: KappaProfile,
        ell: u64,
        r1: f64,
    ) -> Result<PsiSpec> {
        if !(r1 >= 0.0) || !r1.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "contraction radius must be nonnegative, got {r1}"
            )));
        }
        Ok(PsiSpec {
            mode,
            ell: Self::check_ell(ell)?,
            profile,
            r1,
        })
    }

    /// Whether the cocoercive constant branch `2Φ(−1/2)` is active for
    /// the configured block length (`ℓ ≥ ⌈R₁⌉²`).
    fn constant_branch(&self) -> bool {
        if self.mode != PsiMode::Cocoercive {
            return false;
        }
        let c = ceil_robust(self.r1);
        self.ell as f64 >= c * c
    }
}

/// Variance sum `Ξ_{ℓ⌈1/γ⌉}(κ(γ))` of a profile at stepsize `γ`.
fn xi_at(profile: &KappaProfile, gamma: f64, ell: u64) -> Result<f64> {
    let n = ell
        .checked_mul(steps_per_unit_time(gamma)?)
        .ok_or_else(|| Error::InvalidConfig("block step count overflows u64".into()))?;
    xi_value(profile.kappa.eval(gamma), gamma, n)
}

/// Block coalescence lower bound `Ψ(γ, ℓ, t)` for `γ ∈ (0, γ̄]`.
///
/// One-sided mode evaluates `2Φ{−t/(2 Ξ_{ℓ⌈1/γ⌉}^{1/2}(κ))}`; the
/// cocoercive mode substitutes the constant `2Φ(−1/2)` when the block
/// is long enough (`ℓ ≥ ⌈R₁⌉²`) and the pair is inside the contraction
/// radius (`t ≤ R₁`).  `t = 0` returns 1 (the diagonal is absorbing).
pub fn psi(spec: &PsiSpec, gamma: f64, t: f64) -> Result<f64> {
    if !(gamma > 0.0) || gamma > spec.profile.gamma_bar {
        return Err(Error::InvalidConfig(format!(
            "gamma = {gamma} must lie in (0, {}]",
            spec.profile.gamma_bar
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "pair distance must be nonnegative and finite, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    if spec.constant_branch() && t <= spec.r1 {
        return Ok(2.0 * normal_cdf(-0.5));
    }
    let xi = xi_at(&spec.profile, gamma, spec.ell)?;
    if xi <= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * normal_cdf(-t / (2.0 * xi.sqrt())))
}

// ---------------------------------------------------------------------
// Infimum of Ψ over the stepsize range
// ---------------------------------------------------------------------

/// Diagnostics of the minorization infimum `ε̄ = inf_{γ, s ≤ t} Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinorizationInfimum {
    /// The certified infimum (minimum of the two scans below).
    pub eps_bar: f64,
    /// Smallest Ψ over the 64-point stepsize grid.
    pub grid_min: f64,
    /// Smallest Ψ among the analytic candidates: the endpoint `γ̄`, the
    /// block-boundary stepsizes `γ = 1/j` (where `⌈1/γ⌉` jumps), and
    /// the `γ → 0⁺` limit.
    pub analytic_min: f64,
    /// The distance the infimum is taken at (worst pair in the set).
    pub t: f64,
}

/// Infimum over `γ ∈ (0, gamma_bar]` of `Ξ_{ℓ⌈1/γ⌉}(κ(γ))`, split into
/// grid and analytic candidate minima.  `Ψ` is a monotone increasing
/// transform of `Ξ` at fixed distance, so this is the only scan needed.
fn xi_gamma_infimum(profile: &KappaProfile, gamma_bar: f64, ell: u64) -> Result<(f64, f64, f64)> {
    check_positive("gamma_bar", gamma_bar)?;
    if gamma_bar > profile.gamma_bar {
        return Err(Error::InvalidConfig(format!(
            "scan range (0, {gamma_bar}] exceeds the profile range (0, {}]",
            profile.gamma_bar
        )));
    }
    let mut grid_min = f64::INFINITY;
    for i in 1..=64u32 {
        let g = gamma_bar * f64::from(i) / 64.0;
        grid_min = grid_min.min(xi_at(profile, g, ell)?);
    }
    let mut analytic_min = xi_at(profile, gamma_bar, ell)?;
    // Block boundaries: n = ℓ⌈1/γ⌉ jumps at γ = 1/j.  Evaluate both
    // sides of the first 512 boundaries inside the range (the grid
    // covers stepsizes below γ̄/64 only coarsely, but the γ → 0⁺
    // analytic limit below closes the scan).
    let mut j = ceil_robust(1.0 / gamma_bar).max(1.0) as u64;
    for _ in 0..512 {
        let g = 1.0 / j as f64;
        if g < gamma_bar / 64.0 {
            break;
        }
        if g <= gamma_bar {
            let kappa = profile.kappa.eval(g);
            for n_blocks in [j, j + 1] {
                if let Some(n) = ell.checked_mul(n_blocks) {
                    analytic_min = analytic_min.min(xi_value(kappa, g, n)?);
                }
            }
        }
        j += 1;
    }
    let limit = match profile.kappa {
        // Ξ_{ℓ⌈1/γ⌉}(a + bγ) → ∫_0^ℓ e^{−as} ds as γ → 0.
        KappaFn::Affine { a, .. } => {
            let la = ell as f64 * a;
            if la.abs() < 1e-12 {
                ell as f64
            } else {
                -(-la).exp_m1() / a
            }
        }
        KappaFn::Zero => ell as f64,
        // κ(γ) = c/γ: Ξ ≤ 1/κ = γ/c vanishes, so no uniform-in-γ
        // minorization survives for this profile.
        KappaFn::Reciprocal { .. } => 0.0,
    };
    analytic_min = analytic_min.min(limit);
    Ok((grid_min.min(analytic_min), grid_min, analytic_min))
}

/// `ε̄ = inf_{γ ∈ (0, gamma_bar], ‖x−y‖ ≤ t} Ψ(γ, ℓ, ‖x−y‖)`.
///
/// The distance infimum sits at `‖x−y‖ = t` because `Ψ` decreases with
/// distance; the stepsize infimum is resolved through the variance sum
/// (64-point grid plus analytic candidates), and both partial minima
/// are reported so their agreement can be audited.
pub fn eps_inf(spec: &PsiSpec, gamma_bar: f64, t: f64) -> Result<MinorizationInfimum> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "pair diameter must be nonnegative and finite, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(MinorizationInfimum {
            eps_bar: 1.0,
            grid_min: 1.0,
            analytic_min: 1.0,
            t,
        });
    }
    let (inf_xi, grid_xi, analytic_xi) = xi_gamma_infimum(&spec.profile, gamma_bar, spec.ell)?;
    let tail = |xi: f64| {
        if xi <= 0.0 {
            0.0
        } else {
            2.0 * normal_cdf(-t / (2.0 * xi.sqrt()))
        }
    };
    let eps_for = |xi: f64| {
        if spec.constant_branch() {
            let constant = 2.0 * normal_cdf(-0.5f64);
            if t <= spec.r1 {
                constant
            } else {
                constant.min(tail(xi))
            }
        } else {
            tail(xi)
        }
    };
    Ok(MinorizationInfimum {
        eps_bar: eps_for(inf_xi),
        grid_min: eps_for(grid_xi),
        analytic_min: eps_for(analytic_xi),
        t,
    })
}

// ---------------------------------------------------------------------
// Rate constants from a drift certificate and a minorization constant
// ---------------------------------------------------------------------

/// Geometric-rate constants from `(λ, A, B̄_d)` and `ε̄`.
///
/// For heavy pair functions the literal `c̄₁` and `D̄₂` may overflow to
/// `+∞` (the bound they prefix is then vacuous but still valid); the
/// rate `ρ̄₁` is always computed in log space and stays finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    /// Per-unit-time Lyapunov rate `λ`.
    pub lambda: f64,
    /// Block-minorization constant `ε̄`.
    pub eps_bar: f64,
    /// Block length `ℓ` (units of `⌈1/γ⌉` steps).
    pub ell: u64,
    /// Stepsize ceiling the constants are uniform over (0 = limit).
    pub gamma_bar: f64,
    /// `B̄_d = sup` of the pair function over the small set.
    pub b_d: f64,
    /// Lyapunov mass one coupling block can accumulate:
    /// `c̄₁ = B̄_d + A λ^{−(1+γ̄)ℓ}(1+γ̄)ℓ`.
    pub block_cost: f64,
    pub log_block_cost: f64,
    /// Per-unit-time coupling rate, `λ ≤ ρ̄₁ < 1`.
    pub rho_bar_1: f64,
    pub log_rho_bar_1: f64,
    /// Prefactor of the initial cost.
    pub d_bar_1: f64,
    /// Off-diagonal additive prefactor paired with `λ^{kγ/4}`.
    pub d_bar_2: f64,
    /// Off-diagonal prefactor paired with `ρ̄₁^{kγ/4}`.
    pub c_bar_1: f64,
    /// `ε̄ = 1`: coupling within one block is certain and `ρ̄₁ = λ`.
    pub immediate_coupling: bool,
    /// Closed-form upper bound on `log⁻¹(1/ρ̄₁)`, available when
    /// `γ̄ ≤ 1` and `ε̄ ≤ 1 − e⁻¹`.
    pub log_inv_rho_bound: Option<f64>,
}

/// Assemble the coupling rate and prefactors.
///
/// `gamma_bar` is read from the certificate and may be 0: every closed
/// form is continuous at `γ̄ = 0`, which the diffusion-limit pipeline
/// exploits.  `ε̄ = 1` short-circuits to `ρ̄₁ = λ`; `ε̄ ∉ (0, 1]` is
/// rejected.
pub fn assemble_rate_constants(
    cert: &DriftCertificate,
    ell: u64,
    eps_bar: f64,
) -> Result<RateConstants> {
    if ell == 0 {
        return Err(Error::InvalidConfig("block length ell must be >= 1".into()));
    }
    let gb = cert.gamma_bar;
    if !(gb >= 0.0) || !gb.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "gamma_bar must be nonnegative and finite, got {gb}"
        )));
    }
    check_unit_open("lambda", cert.lambda)?;
    if !(cert.a >= 0.0) || !cert.a.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "drift offset A must be nonnegative and finite, got {}",
            cert.a
        )));
    }
    if !(cert.b_d >= 1.0) || !cert.b_d.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "small-set supremum B_d must be >= 1 and finite, got {}",
            cert.b_d
        )));
    }
    if !(eps_bar > 0.0 && eps_bar <= 1.0) {
        return Err(Error::DegenerateMinorization(format!(
            "eps_bar must lie in (0, 1], got {eps_bar}"
        )));
    }
    let lambda = cert.lambda;
    let a = cert.a;
    let g = -lambda.ln();
    let ellf = ell as f64;
    // log of A λ^{−(1+γ̄)ℓ}(1+γ̄)ℓ, −∞ when A = 0.
    let log_a_term = if a == 0.0 {
        f64::NEG_INFINITY
    } else {
        a.ln() + (1.0 + gb) * ellf * g + ((1.0 + gb) * ellf).ln()
    };
    let log_block_cost = logaddexp(cert.b_d.ln(), log_a_term);
    let block_cost = log_block_cost.exp();
    let d_bar_1 = 1.0 + 4.0 * a / (g * lambda.powf(gb));
    let d_bar_2 = d_bar_1 * log_a_term.exp();
    let immediate_coupling = eps_bar >= 1.0;
    let log_rho = rate_log_fraction(lambda.ln(), eps_bar, log_block_cost);
    let rho = log_rho.exp();
    let c_bar_1 = if a == 0.0 {
        0.0
    } else {
        8.0 * a / (-log_rho * (gb * log_rho).exp())
    };
    let log_inv_rho_bound = (gb <= 1.0 && eps_bar <= 1.0 - (-1.0f64).exp()).then(|| {
        (1.0 + cert.b_d.ln() + (1.0 + 2.0 * a * ellf).ln() + 2.0 * ellf * g) / (g * eps_bar)
    });
    Ok(RateConstants {
        lambda,
        eps_bar,
        ell,
        gamma_bar: gb,
        b_d: cert.b_d,
        block_cost,
        log_block_cost,
        rho_bar_1: rho,
        log_rho_bar_1: log_rho,
        d_bar_1,
        d_bar_2,
        c_bar_1,
        immediate_coupling,
        log_inv_rho_bound,
    })
}

/// One point of the convergence-bound curve at step `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    /// Two-term bound `λ^{kγ/4}[D̄₁c₀ + D̄₂1_{c₀>0}] + C̄₁ρ̄₁^{kγ/4}1_{c₀>0}`.
    pub full: f64,
    /// Single-rate bound `(D̄₁ + D̄₂ + C̄₁) ρ̄₁^{kγ/4} c₀`.
    pub collapsed: f64,
}

/// Evaluate the bound curve after `k` steps of size `gamma`, starting
/// from pair cost `c0` (0 on the diagonal, `= 𝒱(x, y) ≥ 1` off it).
///
/// The collapsed form dominates the full form whenever `c0 ≥ 1`.
pub fn bound_curve(rc: &RateConstants, gamma: f64, c0: f64, k: u64) -> Result<BoundPoint> {
    check_positive("gamma", gamma)?;
    if rc.gamma_bar > 0.0 && gamma > rc.gamma_bar {
        return Err(Error::InvalidConfig(format!(
            "gamma = {gamma} exceeds the certified ceiling {}",
            rc.gamma_bar
        )));
    }
    if !(c0 >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "pair cost must be nonnegative, got {c0}"
        )));
    }
    if c0 == 0.0 {
        return Ok(BoundPoint {
            full: 0.0,
            collapsed: 0.0,
        });
    }
    let quarter = k as f64 * gamma / 4.0;
    let lam_pow = (quarter * rc.lambda.ln()).exp();
    let rho_pow = (quarter * rc.log_rho_bar_1).exp();
    Ok(BoundPoint {
        full: lam_pow * (rc.d_bar_1 * c0 + rc.d_bar_2) + rc.c_bar_1 * rho_pow,
        collapsed: (rc.d_bar_1 + rc.d_bar_2 + rc.c_bar_1) * rho_pow * c0,
    })
}

// ---------------------------------------------------------------------
// Plain Wasserstein constants
// ---------------------------------------------------------------------

/// Interpolated `W_p` constants on top of the `W₁` prefactor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D4Constants {
    pub p: f64,
    pub alpha: f64,
    /// Interpolation exponent `q = p(α − 1)/(α − p)`.
    pub q: f64,
    /// Moment order actually certified (`⌈q⌉`, at least 2; any larger
    /// integer order is admissible in the moment step).
    pub q_ceil: u32,
    /// Marginal moment drift constants at order `q_ceil`.
    pub moment: MomentCertificate,
    /// Accumulated moment mass `B = Ã log⁻¹(1/λ̃) λ̃^{−γ̄}`.
    pub moment_mass: f64,
    /// `W_p` prefactor `D̄_{4,α} = D̄₃^{1/α} max(1, B^{(1−1/α)/⌈q⌉})`,
    /// paired with the rate `ρ̄₁^{kγ/(4α)}` and the cost
    /// `‖x−y‖ + ‖x−y‖^{1/α}`.
    pub d_bar_4: f64,
}

/// Constants converting the cost-function bound into plain `W₁`/`W_p`
/// bounds: `W₁ ≤ D̄₃ ρ̄₁^{kγ/4} ‖x − y‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinConstants {
    /// `ϑ = 1/R₁`, the slope of the pair function `1 + ϑ‖x − y‖`.
    pub theta: f64,
    /// One-step expansion exponent `ϰ = max(0, −m + γ̄L²/2)`.
    pub kappa_expansion: f64,
    /// Magnitude of the coalescence-bound slope at zero distance over
    /// single blocks: `(π inf_γ Ξ_{⌈1/γ⌉}(κ))^{−1/2}`.
    pub slope_magnitude: f64,
    /// Short-horizon branch `e^{ϰ(1+γ̄)}/ρ̄₁^{(1+γ̄)/4}`.
    pub branch_short: f64,
    /// Long-horizon branch
    /// `|a|(D̄₁+D̄₂+C̄₁)/(ϑρ̄₁^{1/4}) + D̄₁e^{ϰ(1+γ̄)}/ρ̄₁^{(1+γ̄)/4}`.
    pub branch_long: f64,
    /// `D̄₃ = max` of the two branches.
    pub d_bar_3: f64,
    /// Interpolated `W_p` constants when an order pair `(p, α)` is given.
    pub interpolation: Option<D4Constants>,
}

/// Assemble `D̄₃` (and optionally `D̄_{4,α}`) for the distance-cost
/// route.  Requires the strong-monotonicity block (for `ϑ = 1/R₁` and
/// the moment certificates) and a positive stepsize ceiling.
pub fn w_constants(
    drift: &DriftSpec,
    spec: &PsiSpec,
    rc: &RateConstants,
    order: Option<(f64, f64)>,
) -> Result<WassersteinConstants> {
    let c1 = drift.conv_inf.ok_or_else(|| {
        Error::InsufficientDriftMetadata(
            "the distance-cost constants need the strong-monotonicity block (c1)".into(),
        )
    })?;
    check_positive("gamma_bar", rc.gamma_bar)?;
    let gb = rc.gamma_bar;
    let theta = 1.0 / c1.radius;
    let kappa_expansion =
        (-drift.one_sided + gb * drift.lipschitz * drift.lipschitz / 2.0).max(0.0);
    // Slope of Ψ(γ, 1, ·) at 0, uniform over γ: single-block variance.
    let (inf_xi, _, _) = xi_gamma_infimum(&spec.profile, gb, 1)?;
    if !(inf_xi > 0.0) {
        return Err(Error::DegenerateMinorization(
            "the single-block variance infimum vanishes; no distance-cost slope survives".into(),
        ));
    }
    let slope_magnitude = 1.0 / (std::f64::consts::PI * inf_xi).sqrt();
    let expansion = (kappa_expansion * (1.0 + gb)).exp();
    let branch_short = expansion * (-(1.0 + gb) / 4.0 * rc.log_rho_bar_1).exp();
    let branch_long = slope_magnitude * (rc.d_bar_1 + rc.d_bar_2 + rc.c_bar_1)
        / (theta * (rc.log_rho_bar_1 / 4.0).exp())
        + rc.d_bar_1 * branch_short;
    let d_bar_3 = branch_short.max(branch_long);
    let interpolation = match order {
        None => None,
        Some((p, alpha)) => {
            if !(p >= 1.0) || !(alpha > p) || !alpha.is_finite() {
                return Err(Error::InvalidInterpolation(format!(
                    "interpolation needs alpha > p >= 1, got p = {p}, alpha = {alpha}"
                )));
            }
            let q = p * (alpha - 1.0) / (alpha - p);
            let q_ceil = (ceil_robust(q) as u32).max(2);
            let moment = moment_certificate(drift, gb, q_ceil)?;
            let moment_mass = moment.a / (-moment.lambda.ln() * moment.lambda.powf(gb));
            let d_bar_4 = d_bar_3.powf(1.0 / alpha)
                * moment_mass
                    .powf((1.0 - 1.0 / alpha) / f64::from(q_ceil))
                    .max(1.0);
            Some(D4Constants {
                p,
                alpha,
                q,
                q_ceil,
                moment,
                moment_mass,
                d_bar_4,
            })
        }
    };
    Ok(WassersteinConstants {
        theta,
        kappa_expansion,
        slope_magnitude,
        branch_short,
        branch_long,
        d_bar_3,
        interpolation,
    })
}

// ---------------------------------------------------------------------
// Zero-stepsize limits
// ---------------------------------------------------------------------

/// One positive-stepsize probe of the rate pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitProbe {
    pub gamma_bar: f64,
    pub rho_bar_1: f64,
    pub d_bar_1: f64,
}

/// Rate constants at `γ̄ = 0` with grid-extrapolation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    /// Every closed form evaluated literally at `γ̄ = 0`.
    pub at_zero: RateConstants,
    /// Probes at `γ̄ = base·{1, 10⁻¹, 10⁻²}` with `base = min(0.1, caps)`.
    pub probes: [LimitProbe; 3],
    /// Polynomial extrapolation of the probe curve to `γ̄ = 0`.
    pub extrapolated_rho: f64,
    pub extrapolated_d1: f64,
    /// Relative gaps between substitution and extrapolation.
    pub rel_gap_rho: f64,
    pub rel_gap_d1: f64,
}

/// Polynomial extrapolation to 0 through `(x_i, v_i)` (Neville).
fn neville_at_zero(xs: &[f64], vs: &[f64]) -> f64 {
    let mut v = vs.to_vec();
    let n = v.len();
    for j in 1..n {
        for i in 0..n - j {
            v[i] = (xs[i + j] * v[i] - xs[i] * v[i + 1]) / (xs[i + j] - xs[i]);
        }
    }
    v[0]
}

/// Distance-route rate constants in the zero-stepsize limit.
///
/// The closed forms are continuous at `γ̄ = 0` and are substituted
/// directly (`λ₀ = e^{−m₁⁺/2}`, variance sums by their analytic
/// limits).  The same pipeline is then evaluated on a stepsize grid
/// (half-decade points from `base` down to `base/100`, with the three
/// decade points reported) and extrapolated polynomially to zero; a
/// relative disagreement above `10⁻⁶` on the rate or on `D̄₁` is an
/// internal inconsistency.
pub fn limit_constants(
    drift: &DriftSpec,
    mode: PsiMode,
    ell: Option<u64>,
) -> Result<LimitConstants> {
    let c1 = drift.conv_inf.ok_or_else(|| {
        Error::InsufficientDriftMetadata(
            "the limit constants need the strong-monotonicity block (c1)".into(),
        )
    })?;
    let r1 = c1.radius;
    let m1p = c1.m_plus;
    let m = drift.one_sided;
    let l = drift.lipschitz;
    let ell = match ell {
        Some(e) => PsiSpec::check_ell(e)?,
        None => ceil_robust(r1 * r1).max(1.0) as u64,
    };
    let ellf = ell as f64;
    // Analytic ε̄ at γ̄ = 0: the variance sum tends to ∫_0^ℓ e^{−κ₀s} ds.
    let xi_limit = |kappa0: f64| {
        let lk = ellf * kappa0;
        if lk.abs() < 1e-12 {
            ellf
        } else {
            -(-lk).exp_m1() / kappa0
        }
    };
    let eps0 = match mode {
        PsiMode::OneSided => {
            let xi0 = xi_limit(-2.0 * m);
            2.0 * normal_cdf(-r1 / (2.0 * xi0.sqrt()))
        }
        PsiMode::Cocoercive => {
            if drift.cocoercivity.is_none() {
                return Err(Error::InsufficientDriftMetadata(
                    "the cocoercive limit needs the cocoercivity constant m_b".into(),
                ));
            }
            let c = ceil_robust(r1);
            if ellf >= c * c {
                2.0 * normal_cdf(-0.5)
            } else {
                2.0 * normal_cdf(-r1 / (2.0 * ellf.sqrt()))
            }
        }
    };
    let m_minus = m.min(0.0);
    let cert0 = DriftCertificate {
        v: PairLyapunov::Distance { r: r1 },
        lambda: (-m1p / 2.0).exp(),
        a: m1p - m_minus,
        small_set: SmallSet::DistanceBall { m: r1 },
        gamma_bar: 0.0,
        m_tilde: r1,
        b_d: 2.0,
        v_exponent_gamma: false,
    };
    let at_zero = assemble_rate_constants(&cert0, ell, eps0)?;

    let mut base = 0.1f64;
    if l > 0.0 {
        base = base.min(m1p / (l * l));
    }
    if mode == PsiMode::Cocoercive {
        if let Some(mb) = drift.cocoercivity {
            base = base.min(2.0 * mb);
        }
    }
    let probe_at = |gb: f64| -> Result<(f64, f64)> {
        let cert = linear_certificate(drift, gb)?;
        let spec = match mode {
            PsiMode::OneSided => PsiSpec::one_sided(drift, gb, ell)?,
            PsiMode::Cocoercive => PsiSpec::cocoercive(drift, gb, ell)?,
        };
        let inf = eps_inf(&spec, gb, cert.m_tilde)?;
        let rc = assemble_rate_constants(&cert, ell, inf.eps_bar)?;
        Ok((rc.rho_bar_1, rc.d_bar_1))
    };
    let scales = [1.0, 10f64.powf(-0.5), 0.1, 10f64.powf(-1.5), 0.01];
    let mut xs = [0.0; 5];
    let mut rho_vals = [0.0; 5];
    let mut d1_vals = [0.0; 5];
    for (i, s) in scales.iter().enumerate() {
        let gb = base * s;
        let (rho, d1) = probe_at(gb)?;
        xs[i] = gb;
        rho_vals[i] = rho;
        d1_vals[i] = d1;
    }
    let probes = [
        LimitProbe {
            gamma_bar: xs[0],
            rho_bar_1: rho_vals[0],
            d_bar_1: d1_vals[0],
        },
        LimitProbe {
            gamma_bar: xs[2],
            rho_bar_1: rho_vals[2],
            d_bar_1: d1_vals[2],
        },
        LimitProbe {
            gamma_bar: xs[4],
            rho_bar_1: rho_vals[4],
            d_bar_1: d1_vals[4],
        },
    ];
    let extrapolated_rho = neville_at_zero(&xs, &rho_vals);
    let extrapolated_d1 = neville_at_zero(&xs, &d1_vals);
    let rel = |lim: f64, ext: f64| (ext - lim).abs() / lim.abs().max(f64::MIN_POSITIVE);
    let rel_gap_rho = rel(at_zero.rho_bar_1, extrapolated_rho);
    let rel_gap_d1 = rel(at_zero.d_bar_1, extrapolated_d1);
    if !(rel_gap_rho <= 1e-6) || !(rel_gap_d1 <= 1e-6) {
        return Err(Error::Inconsistency(format!(
            "limit substitution and grid extrapolation disagree: \
             rho {} vs {} (rel {rel_gap_rho:.3e}), D1 {} vs {} (rel {rel_gap_d1:.3e})",
            at_zero.rho_bar_1, extrapolated_rho, at_zero.d_bar_1, extrapolated_d1
        )));
    }
    Ok(LimitConstants {
        at_zero,
        probes,
        extrapolated_rho,
        extrapolated_d1,
        rel_gap_rho,
        rel_gap_d1,
    })
}

// ---------------------------------------------------------------------
// Asymptotic summaries and competitor log rates
// ---------------------------------------------------------------------

/// Log mixing-time summaries for drifts that are strongly monotone only
/// at long range (`m < 0` inside the radius): each value bounds
/// `log(log⁻¹(1/ρ))`, the log of the relaxation time, which grows like
/// the barrier `−mR²` for such drifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitorLogRates {
    /// Reflection-coupling rate, diffusion limit:
    /// `(−mR²/4)(1 − e^{2mR²})⁻¹`.
    pub ours: f64,
    /// Stepsize-uniform version of `ours` (worst case over `(0, γ̄]`),
    /// when a ceiling is supplied.
    pub ours_stepsize: Option<f64>,
    /// Discrete-chain total-variation route: `−mR²/c₁`.
    pub discrete_tv: f64,
    /// Discrete-chain `W₁` route: `−49mR²/(6c₂)`.
    pub discrete_w1: f64,
    /// Discrete-chain `W₂` route: `LR²/(6c₂)` (stepsize-Lipschitz
    /// driven, hence normalized with `m ← −L`).
    pub discrete_w2: f64,
    /// Continuous-time `W₁` route: `−mR²/4`.
    pub continuous_w1: f64,
    /// Continuous-time `W_p` route: `(−m + m⁺)R²/4`.
    pub continuous_wp: f64,
}

/// Barrier exponents `β = −4·(log mixing time)/(mR²)`, the normalized
/// column comparing all methods at the same `(m, m⁺, R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    /// `(1 − e^{2mR²})⁻¹`, which tends to 1 for large barriers.
    pub ours: f64,
    /// `1 − m⁺/m`.
    pub continuous_wp: f64,
    /// Exactly 1.
    pub continuous_w1: f64,
    /// `4/c₁`.
    pub discrete_tv: f64,
    /// `196/(6c₂)`.
    pub discrete_w1: f64,
    /// `4/(6c₂)` after the `m ← −L` normalization.
    pub discrete_w2: f64,
}

/// `c₁ = 16⁻¹ ∫_{1/4}^{3/8} (1 − e^{u−1/2}) φ(u) du`.
fn c1_quadrature() -> Result<f64> {
    let f = |u: f64| (1.0 - (u - 0.5).exp()) * normal_pdf(u);
    Ok(integrate(f, 0.25, 0.375, 1e-10)?.value / 16.0)
}

/// `c₂ = 4 min(∫_0^{1/2} u²(1 − e^{u−1/2})φ(u) du, (1 − e⁻¹)∫_0^{1/2} u³φ(u) du)`.
fn c2_quadrature() -> Result<f64> {
    let f1 = |u: f64| u * u * (1.0 - (u - 0.5).exp()) * normal_pdf(u);
    let f2 = |u: f64| u * u * u * normal_pdf(u);
    let i1 = integrate(f1, 0.0, 0.5, 1e-10)?.value;
    let i2 = integrate(f2, 0.0, 0.5, 1e-10)?.value;
    Ok(4.0 * i1.min(-(-1.0f64).exp_m1() * i2))
}

fn check_barrier_inputs(m: f64, m_plus: f64, l: f64, r: f64) -> Result<()> {
    if !(m < 0.0) || !m.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "the mixing-time table needs a negative long-range constant m, got {m}"
        )));
    }
    if !(m_plus >= 0.0) || !m_plus.is_finite() || !(l >= 0.0) || !l.is_finite() {
        return Err(Error::InvalidConfig(
            "the mixing-time table needs finite m_plus, L >= 0".into(),
        ));
    }
    check_positive("radius R", r)
}

/// Log mixing-time values for all tabulated methods at `(m, m⁺, L, R)`,
/// `m < 0`.  `gamma_bar` adds the stepsize-uniform variant of our rate.
pub fn competitor_log_rates(
    m: f64,
    m_plus: f64,
    l: f64,
    r: f64,
    gamma_bar: Option<f64>,
) -> Result<CompetitorLogRates> {
    check_barrier_inputs(m, m_plus, l, r)?;
    let c1 = c1_quadrature()?;
    let c2 = c2_quadrature()?;
    let mr2 = m * r * r;
    // 1 − e^{2mR²} computed as −expm1 for tiny barriers.
    let ours = (-mr2 / 4.0) / -(2.0 * mr2).exp_m1();
    let ours_stepsize = match gamma_bar {
        None => None,
        Some(gb) => {
            check_positive("gamma_bar", gb)?;
            let factor = |g: f64| {
                let e = (r * r * (2.0 * m - g * l * l)) / (1.0 - 2.0 * m * g + g * g * l * l);
                (1.0 - g * l * l / (2.0 * m)) / -e.exp_m1()
            };
            let mut sup = f64::NEG_INFINITY;
            for i in 1..=64u32 {
                sup = sup.max(factor(gb * f64::from(i) / 64.0));
            }
            Some(-mr2 / 4.0 * sup)
        }
    };
    Ok(CompetitorLogRates {
        ours,
        ours_stepsize,
        discrete_tv: -mr2 / c1,
        discrete_w1: -49.0 * mr2 / (6.0 * c2),
        discrete_w2: l * r * r / (6.0 * c2),
        continuous_w1: -mr2 / 4.0,
        continuous_wp: (-m + m_plus) * r * r / 4.0,
    })
}

/// Normalized barrier exponents at `(m, m⁺, L, R)`, `m < 0`.
pub fn beta_row(m: f64, m_plus: f64, l: f64, r: f64) -> Result<BetaRow> {
    check_barrier_inputs(m, m_plus, l, r)?;
    let c1 = c1_quadrature()?;
    let c2 = c2_quadrature()?;
    Ok(BetaRow {
        ours: -1.0 / (2.0 * m * r * r).exp_m1(),
        continuous_wp: 1.0 - m_plus / m,
        continuous_w1: 1.0,
        discrete_tv: 4.0 / c1,
        discrete_w1: 196.0 / (6.0 * c2),
        discrete_w2: 4.0 / (6.0 * c2),
    })
}

/// First-order `log⁻¹(1/ρ)` summaries for the distance-cost route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceAsymptotics {
    /// Cocoercive drifts at ceiling `γ̄`.
    pub cocoercive: Option<f64>,
    /// Cocoercive drifts, `γ̄ → 0`:
    /// `(1 + log 2)/(m₁⁺Φ(−1/2)) + 4(1 + R₁²)/Φ(−1/2)`.
    pub cocoercive_limit: Option<f64>,
    /// One-sided drifts (`m < 0`) at ceiling `γ̄`.
    pub one_sided: Option<f64>,
    /// One-sided drifts, `γ̄ → 0`.
    pub one_sided_limit: Option<f64>,
    /// Diffusion counterpart of the cocoercive limit (tail factor
    /// `4R₁²` instead of `4(1 + R₁²)`).
    pub diffusion_convex: Option<f64>,
    /// Diffusion counterpart of the one-sided limit (coarser
    /// `(1 + R₁²)` factors from the localization step).
    pub diffusion_one_sided: Option<f64>,
}

/// First-order `log⁻¹(1/ρ)` summaries for the quadratic-cost route,
/// evaluated with the zero-stepsize certificate constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticAsymptotics {
    /// Small-set radius of the limiting certificate.
    pub r: f64,
    pub a: f64,
    pub cocoercive_limit: Option<f64>,
    pub one_sided_limit: Option<f64>,
}

/// First-order `log⁻¹(1/ρ)` summaries for the exponential-cost route,
/// evaluated with the zero-stepsize certificate constants at the
/// maximal exponent `m₃⁺ = k₁/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialAsymptotics {
    pub m3_plus: f64,
    pub r: f64,
    pub a: f64,
    pub cocoercive_limit: Option<f64>,
    pub one_sided_limit: Option<f64>,
}

/// The full asymptotic summary: quadrature constants, competitor log
/// mixing times, the normalized barrier row, and per-route first-order
/// rate summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRates {
    /// `c₁` by adaptive quadrature (tolerance well below `10⁻⁸`).
    pub c1_quad: f64,
    /// `c₂` by adaptive quadrature.
    pub c2_quad: f64,
    /// Present when `m < 0` and the strong-monotonicity block is declared.
    pub competitors: Option<CompetitorLogRates>,
    pub beta: Option<BetaRow>,
    pub distance: Option<DistanceAsymptotics>,
    pub quadratic: Option<QuadraticAsymptotics>,
    pub exponential: Option<ExponentialAsymptotics>,
    pub notes: Vec<String>,
}

/// Shared one-sided tail denominator `Φ{−s(−m)^{1/2}R/(2 − 2e^{2mR²})^{1/2}}`.
fn barrier_phi(m: f64, r: f64, scale: f64) -> f64 {
    normal_cdf(-scale * (-m).sqrt() * r / (-2.0 * (2.0 * m * r * r).exp_m1()).sqrt())
}

/// Asymptotic and competitor rate summary for a declared drift at
/// stepsize ceiling `gamma_bar`.
///
/// Every value here is a first-order summary (`≃` up to logarithmic
/// terms); the certified bounds are the assembled rate constants.
pub fn asymptotic_and_competitor_rates(
    drift: &DriftSpec,
    gamma_bar: f64,
) -> Result<AsymptoticRates> {
    check_positive("gamma_bar", gamma_bar)?;
    let c1_quad = c1_quadrature()?;
    let c2_quad = c2_quadrature()?;
    let m = drift.one_sided;
    let l = drift.lipschitz;
    let d = drift.dim as f64;
    let phi_half = normal_cdf(-0.5);
    let ln2 = std::f64::consts::LN_2;
    let cocoercive = drift.cocoercivity.is_some();
    let mut notes = vec![
        "log mixing-time values are first-order summaries; the assembled rate constants are \
         the certified bounds"
            .to_string(),
    ];

    let (competitors, beta) = match drift.conv_inf {
        Some(c1) if m < 0.0 => (
            Some(competitor_log_rates(
                m,
                c1.m_plus,
                l,
                c1.radius,
                Some(gamma_bar),
            )?),
            Some(beta_row(m, c1.m_plus, l, c1.radius)?),
        ),
        _ => {
            notes.push(
                "competitor table omitted: it compares barrier regimes and needs m < 0 with a \
                 declared long-range radius"
                    .to_string(),
            );
            (None, None)
        }
    };

    let distance = drift.conv_inf.map(|c1| {
        let m1p = c1.m_plus;
        let r1 = c1.radius;
        let r1sq1 = 1.0 + r1 * r1;
        let shifted = m1p - gamma_bar * l * l / 2.0;
        let stepped = |phi_den: f64, log_arg: f64| {
            (shifted > 0.0).then(|| {
                (1.0 + ln2 + log_arg.ln_1p() + 2.0 * r1sq1 * shifted) / (shifted * phi_den)
            })
        };
        let one_sided_phi = if m < 0.0 {
            // Endpoint single-block variance at the ceiling stepsize.
            let kappa = -2.0 * m + gamma_bar * l * l;
            let n = steps_per_unit_time(gamma_bar).unwrap_or(1);
            let xi = xi_value(kappa, gamma_bar, n).unwrap_or(f64::NAN);
            Some(normal_cdf(-r1 / (2.0 * xi.sqrt())))
        } else {
            None
        };
        DistanceAsymptotics {
            cocoercive: if cocoercive {
                stepped(phi_half, 2.0 * r1sq1 * m1p)
            } else {
                None
            },
            cocoercive_limit: cocoercive
                .then(|| (1.0 + ln2) / (m1p * phi_half) + 4.0 * r1sq1 / phi_half),
            one_sided: one_sided_phi.and_then(|phi| stepped(phi, 2.0 * r1sq1 * (m1p - m))),
            one_sided_limit: (m < 0.0).then(|| {
                (1.0 + ln2 + (2.0 * (m1p - m)).ln_1p() + 2.0 * m1p)
                    / (m1p * barrier_phi(m, r1, 1.0))
            }),
            diffusion_convex: cocoercive
                .then(|| (1.0 + ln2) / (phi_half * m1p) + 4.0 * r1 * r1 / phi_half),
            diffusion_one_sided: (m < 0.0).then(|| {
                (1.0 + ln2 + (2.0 * (m1p - m) * r1sq1).ln_1p() + 2.0 * m1p * r1sq1)
                    / (m1p * barrier_phi(m, r1, 1.0))
            }),
        }
    });

    let quadratic = drift.radial.map(|c2| {
        let m2p = c2.m_plus;
        let m_minus = m.min(0.0);
        let a = d + 2.0 * c2.radius * c2.radius * (m2p - m_minus) + 2.0 * m2p;
        // Limit small-set radius: √2·√A·log^{−1/2}(1/λ₀), λ₀ = e^{−m₂⁺}.
        let r = (2.0 * a / m2p).sqrt();
        let num = 1.0 + 2.0 * (r * r).ln_1p() + (2.0 * a).ln_1p() + 2.0 * (1.0 + 4.0 * r * r) * m2p;
        QuadraticAsymptotics {
            r,
            a,
            cocoercive_limit: cocoercive.then(|| num / (m2p * phi_half)),
            one_sided_limit: (m < 0.0).then(|| num / (m2p * barrier_phi(m, r, 2.0))),
        }
    });

    let exponential = drift.weak.map(|c3| {
        let m3p = c3.k1 / 2.0;
        let g = m3p * m3p / 2.0;
        let r4 = 1.0f64.max(c3.radius).max((d + c3.a) / c3.k1);
        let a = (m3p * (1.0 + r4 * r4).sqrt()).exp() * (m3p * (d + c3.a) / 2.0 + m3p * m3p);
        let r = (2.0 * a / g).ln().max(0.0);
        let num =
            2.0 * (1.0 + m3p * (1.0 + r) / 4.0 + (2.0 * a).ln_1p() + (1.0 + 4.0 * r * r) * m3p);
        ExponentialAsymptotics {
            m3_plus: m3p,
            r,
            a,
            cocoercive_limit: cocoercive.then(|| num / (m3p * phi_half)),
            one_sided_limit: (m < 0.0).then(|| num / (m3p * barrier_phi(m, r, 2.0))),
        }
    });

    Ok(AsymptoticRates {
        c1_quad,
        c2_quad,
        competitors,
        beta,
        distance,
        quadratic,
        exponential,
        notes,
    })
}

// ---------------------------------------------------------------------
// Generic-chain constants: minorized small set
// ---------------------------------------------------------------------

/// Second pair-function drift `K𝒱₂ ≤ λ₂𝒱₂ + A₂ d` for unbounded costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondFunction {
    pub lambda2: f64,
    pub a2: f64,
}

/// Inputs of the generic-chain rate: an `n₀`-step contraction of a
/// bounded semimetric on a set `C` (`K^{n₀}d ≤ (1 − ε)d` on `C`), a
/// one-step drift `K𝒱₁ ≤ λ₁𝒱₁ + A₁1_C`, and the supremum of `𝒱₁`
/// over `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarrisInputs {
    pub eps: f64,
    pub n0: u64,
    pub lambda1: f64,
    pub a1: f64,
    pub sup_v1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<SecondFunction>,
}

/// Assembled generic-chain constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarrisConstants {
    pub inputs: HarrisInputs,
    /// Return-cost offset `A₁λ₁^{−n₀}n₀` added to `𝒱₁`.
    pub offset: f64,
    /// `M = sup_C 𝒱₁ + offset`.
    pub m_cap: f64,
    /// Per-step rate `λ₁ ≤ ρ < 1`.
    pub rho: f64,
    pub log_rho: f64,
}

/// Assemble the generic-chain rate
/// `log ρ = log(1 − ε) log(λ₁)/{−log(M) + log(1 − ε)}`.
pub fn harris_constants(inputs: HarrisInputs) -> Result<HarrisConstants> {
    check_unit_open("lambda1", inputs.lambda1)?;
    if inputs.n0 == 0 {
        return Err(Error::InvalidConfig("n0 must be >= 1".into()));
    }
    if !(inputs.eps > 0.0 && inputs.eps <= 1.0) {
        return Err(Error::DegenerateMinorization(format!(
            "eps must lie in (0, 1], got {}",
            inputs.eps
        )));
    }
    if !(inputs.a1 >= 0.0) || !inputs.a1.is_finite() {
        return Err(Error::InvalidConfig("A1 must be nonnegative".into()));
    }
    if !(inputs.sup_v1 >= 1.0) || !inputs.sup_v1.is_finite() {
        return Err(Error::InvalidConfig(
            "sup of V1 over the small set must be >= 1".into(),
        ));
    }
    if let Some(s) = inputs.second {
        check_unit_open("lambda2", s.lambda2)?;
        if !(s.a2 >= 0.0) || !s.a2.is_finite() {
            return Err(Error::InvalidConfig("A2 must be nonnegative".into()));
        }
    }
    let offset = inputs.a1 * inputs.lambda1.powf(-(inputs.n0 as f64)) * inputs.n0 as f64;
    let m_cap = inputs.sup_v1 + offset;
    let log_rho = rate_log_fraction(inputs.lambda1.ln(), inputs.eps, m_cap.ln());
    Ok(HarrisConstants {
        inputs,
        offset,
        m_cap,
        rho: log_rho.exp(),
        log_rho,
    })
}

impl HarrisConstants {
    /// Bound on the expected semimetric after `n` steps from a pair
    /// with `𝒱₁ = v1` and `d = d0`:
    /// `min[ρⁿ(M·Ξ + d0), ρ^{n/2}(1 + d0) + λ₁^{n/2}Ξ]` with
    /// `Ξ = v1 + offset`.
    pub fn semimetric_bound(&self, n: u64, v1: f64, d0: f64) -> f64 {
        let xi = v1 + self.offset;
        let nf = n as f64;
        let slow = (nf * self.log_rho).exp() * (self.m_cap * xi + d0);
        let split = (nf / 2.0 * self.log_rho).exp() * (1.0 + d0)
            + (nf / 2.0 * self.inputs.lambda1.ln()).exp() * xi;
        slow.min(split)
    }

    /// Bound on the expected second pair function after `n` steps:
    /// `λ₂ⁿv2 + A₂ min[ρ̃^{n/4}r_ρ(d0 + Ξ), ρ̃^{n/4}r_ρ(1 + d0) + λ̃^{n/4}r_λΞ]`
    /// with `ρ̃ = max(λ₂, ρ)`, `λ̃ = max(λ₁, λ₂)` and
    /// `r_x = 4 log⁻¹(1/x)/x`.
    pub fn second_bound(&self, n: u64, v1: f64, v2: f64, d0: f64) -> Result<f64> {
        let s = self.inputs.second.ok_or_else(|| {
            Error::InvalidConfig("no second pair-function drift was declared".into())
        })?;
        let xi = v1 + self.offset;
        let rho_t = s.lambda2.max(self.rho);
        let lam_t = s.lambda2.max(self.inputs.lambda1);
        let r_rho = 4.0 / (-rho_t.ln() * rho_t);
        let r_lam = 4.0 / (-lam_t.ln() * lam_t);
        let nf = n as f64;
        let rho_pow = (nf / 4.0 * rho_t.ln()).exp();
        let lam_pow = (nf / 4.0 * lam_t.ln()).exp();
        let tail = (rho_pow * r_rho * (d0 + xi)).min(rho_pow * r_rho * (1.0 + d0) + lam_pow * r_lam * xi);
        Ok((nf * s.lambda2.ln()).exp() * v2 + s.a2 * tail)
    }
}

// ---------------------------------------------------------------------
// Generic-chain constants: whole-space drift with block minorization
// ---------------------------------------------------------------------

/// Block-chain constants at one aggregation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRate {
    /// Accumulated offset over one block.
    pub a_ell: f64,
    /// Block return cost.
    pub c_ell: f64,
    /// Averaged block rate `(λ^block + 1)/2`.
    pub lambda_ell: f64,
    /// Prefactor `C = 2(1 + A_ℓ)(1 + c_ℓ/{(1 − ε)(1 − λ_ℓ)})`.
    pub big_c: f64,
    /// Per-block coupling rate.
    pub rho: f64,
    pub log_rho: f64,
}

/// Rate constants from a whole-space drift `K𝒱 ≤ λ^γ𝒱 + Aγ` with a
/// block minorization on the sublevel set `{𝒱 ≤ B_d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockHarrisConstants {
    pub ell: u64,
    pub gamma_bar: f64,
    /// Whole-space drift level `B_d = 2A(1 + γ̄){1 + log⁻¹(1/λ)}`.
    pub b_d: f64,
    /// Pair diameter of the sublevel set `{𝒱 ≤ B_d}`.
    pub m_d: f64,
    /// Minorization over that sublevel set.
    pub eps: MinorizationInfimum,
    /// Constants at the endpoint stepsize `γ = γ̄` (blocks of
    /// `ℓ⌈1/γ̄⌉` steps).
    pub at_gamma_bar: BlockRate,
    /// Stepsize-uniform constants (blocks of `ℓ⌈1/γ⌉` steps at the
    /// simulated `γ`).
    pub uniform: BlockRate,
    /// Closed-form upper bound on `log⁻¹(1/ρ)` for the uniform rate,
    /// available when `γ̄ ≤ 1`, `log(1/λ) ≤ log 2`, `A ≥ 1` and
    /// `ε ≤ 1 − e⁻¹`.
    pub log_inv_rho_bound: Option<f64>,
}

/// The block-rate log fraction
/// `log ρ = log(1 − ε) log(λ*)/{log(1 − ε) + log(λ*) − log(c)}`.
fn block_rate(a_ell: f64, c_ell: f64, lambda_ell: f64, eps: f64) -> BlockRate {
    let log_rho = rate_log_fraction(lambda_ell.ln(), eps, c_ell.ln() - lambda_ell.ln());
    let big_c = 2.0 * (1.0 + a_ell) * (1.0 + c_ell / ((1.0 - eps).max(0.0) * (1.0 - lambda_ell)));
    BlockRate {
        a_ell,
        c_ell,
        lambda_ell,
        big_c,
        rho: log_rho.exp(),
        log_rho,
    }
}

/// Closed-form cap on `log⁻¹(1/ρ)` for the uniform block rate.
fn block_explicit_bound(lambda: f64, a: f64, eps: f64, gamma_bar: f64) -> Option<f64> {
    let g = -lambda.ln();
    (gamma_bar <= 1.0 && g <= std::f64::consts::LN_2 && a >= 1.0 && eps <= 1.0 - (-1.0f64).exp())
        .then(|| {
            12.0 * std::f64::consts::LN_2 * (6.0 * a * (1.0 + 1.0 / g)).ln() / (g * eps)
        })
}

/// Assemble the block-chain constants for a certificate whose drift
/// holds on the whole product space.
///
/// The pair function must be stepsize-independent (certificates whose
/// function carries a `γ` exponent are rejected): the sublevel set
/// `{𝒱 ≤ B_d}`, its diameter and the minorization over it must not
/// move with `γ`.
pub fn block_harris_constants(
    cert: &DriftCertificate,
    spec: &PsiSpec,
    ell: u64,
) -> Result<BlockHarrisConstants> {
    if cert.v_exponent_gamma {
        return Err(Error::InvalidConfig(
            "the block-chain constants need a stepsize-independent pair function".into(),
        ));
    }
    let ell = PsiSpec::check_ell(ell)?;
    check_unit_open("lambda", cert.lambda)?;
    check_positive("gamma_bar", cert.gamma_bar)?;
    let lambda = cert.lambda;
    let a = cert.a;
    let gb = cert.gamma_bar;
    let g = -lambda.ln();
    let b_d = 2.0 * a * (1.0 + gb) * (1.0 + 1.0 / g);
    if !(b_d >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "whole-space drift level B_d = {b_d} is below 1; no nonempty sublevel set"
        )));
    }
    let m_d = match cert.v {
        PairLyapunov::Distance { r } => r * (b_d - 1.0).max(0.0),
        PairLyapunov::Quadratic => 2.0 * (b_d - 1.0).max(0.0).sqrt(),
        PairLyapunov::Exponential { rate } => {
            let t = (2.0 * b_d).max(1.0).ln() / rate;
            2.0 * (t * t - 1.0).max(0.0).sqrt()
        }
    };
    let eps = eps_inf(spec, gb, m_d)?;
    if !(eps.eps_bar > 0.0) {
        return Err(Error::DegenerateMinorization(format!(
            "no coalescence mass survives over the sublevel diameter {m_d}"
        )));
    }
    let ellf = ell as f64;

    // Endpoint stepsize: blocks of ℓ⌈1/γ̄⌉ steps.
    let n_bar = steps_per_unit_time(gb)?;
    let block_exp = gb * ellf * n_bar as f64;
    let lam_block = (block_exp * lambda.ln()).exp();
    let a_gamma = a * gb * -(block_exp * lambda.ln()).exp_m1() / -(gb * lambda.ln()).exp_m1();
    let at_gamma_bar = block_rate(
        a_gamma,
        lam_block * a_gamma + b_d,
        (lam_block + 1.0) / 2.0,
        eps.eps_bar,
    );

    // Stepsize-uniform: the accumulated offset is capped by
    // A(1+γ̄)min(ℓ, 1 + log⁻¹(1/λ)) for every γ ∈ (0, γ̄].
    let a_uniform = a * (1.0 + gb) * ellf.min(1.0 + 1.0 / g);
    let uniform = block_rate(
        a_uniform,
        a_uniform + b_d,
        (lambda + 1.0) / 2.0,
        eps.eps_bar,
    );
    let log_inv_rho_bound = block_explicit_bound(lambda, a, eps.eps_bar, gb);
    Ok(BlockHarrisConstants {
        ell,
        gamma_bar: gb,
        b_d,
        m_d,
        eps,
        at_gamma_bar,
        uniform,
        log_inv_rho_bound,
    })
}

impl BlockHarrisConstants {
    /// Evaluate the block bound `C ρ^{⌊k/(ℓ⌈1/γ⌉)⌋} v0` after `k` steps
    /// of size `gamma`, from initial pair value `v0`.
    pub fn bound(&self, uniform: bool, gamma: f64, k: u64, v0: f64) -> Result<f64> {
        check_positive("gamma", gamma)?;
        if gamma > self.gamma_bar {
            return Err(Error::InvalidConfig(format!(
                "gamma = {gamma} exceeds the certified ceiling {}",
                self.gamma_bar
            )));
        }
        if !(v0 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pair value must be nonnegative, got {v0}"
            )));
        }
        let rate = if uniform {
            &self.uniform
        } else {
            &self.at_gamma_bar
        };
        let per_block = self
            .ell
            .checked_mul(steps_per_unit_time(gamma)?)
            .ok_or_else(|| Error::InvalidConfig("block step count overflows u64".into()))?;
        let blocks = (k / per_block) as f64;
        Ok(rate.big_c * (blocks * rate.log_rho).exp() * v0)
    }
}

// ---------------------------------------------------------------------
// Full report
// ---------------------------------------------------------------------

/// Which pair function a route certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateRoute {
    /// `𝒱 = 1 + ‖x − y‖/R₁` (needs the c1 block).
    Distance,
    /// `𝒱 = 1 + (‖x‖² + ‖y‖²)/2` (needs the c2 block).
    Quadratic,
    /// `𝒱 = (e^{m₃⁺φ(x)} + e^{m₃⁺φ(y)})/2` (needs the c3 block).
    Exponential,
}

/// Rate constants for one route under one coalescence mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiModeReport {
    pub mode: PsiMode,
    /// Block length used (defaults: `⌈R₁²⌉` for the distance route,
    /// `⌈M̃_d²⌉` otherwise).
    pub ell: u64,
    pub minorization: MinorizationInfimum,
    pub constants: RateConstants,
    /// Whole-space block-chain alternative, when admissible.
    pub block: Option<BlockHarrisConstants>,
    /// Plain-Wasserstein constants (distance route only).
    pub wasserstein: Option<WassersteinConstants>,
    /// Zero-stepsize limits (distance route only).
    pub limits: Option<LimitConstants>,
}

/// All coalescence-mode reports for one drift certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub route: CertificateRoute,
    pub certificate: DriftCertificate,
    pub psi_modes: Vec<PsiModeReport>,
}

/// The complete rate report for a drift at a stepsize ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub gamma_bar: f64,
    pub routes: Vec<RouteReport>,
    pub asymptotics: AsymptoticRates,
    pub notes: Vec<String>,
}

/// Build the full report: one route per declared curvature block, one
/// sub-report per admissible coalescence mode, plus asymptotics.
///
/// `ell` overrides the per-route block-length defaults; `order`
/// requests interpolated `W_p` constants at `(p, α)` on the distance
/// route.  Routes are skipped when their metadata is absent; any other
/// error (stepsize caps, explosive profiles) is propagated.
pub fn full_rate_report(
    drift: &DriftSpec,
    gamma_bar: f64,
    ell: Option<u64>,
    order: Option<(f64, f64)>,
) -> Result<RateReport> {
    check_positive("gamma_bar", gamma_bar)?;
    if let Some(e) = ell {
        PsiSpec::check_ell(e)?;
    }
    let mut notes = Vec::new();
    let cocoercive_ok = match drift.cocoercivity {
        Some(mb) if gamma_bar <= 2.0 * mb && drift.conv_inf.is_some() => true,
        Some(_) => {
            notes.push(
                "cocoercive mode omitted: it needs gamma_bar <= 2 m_b and the c1 block".into(),
            );
            false
        }
        None => false,
    };
    let mut certificates: Vec<(CertificateRoute, DriftCertificate)> = Vec::new();
    if drift.conv_inf.is_some() {
        certificates.push((
            CertificateRoute::Distance,
            crate::lyapunov::linear_certificate(drift, gamma_bar)?,
        ));
    }
    if drift.radial.is_some() {
        certificates.push((
            CertificateRoute::Quadratic,
            crate::lyapunov::quadratic_certificate(drift, gamma_bar)?,
        ));
    }
    if let Some(c3) = drift.weak {
        certificates.push((
            CertificateRoute::Exponential,
            crate::lyapunov::exponential_certificate(drift, gamma_bar, c3.k1 / 2.0)?,
        ));
    }
    if certificates.is_empty() {
        return Err(Error::InsufficientDriftMetadata(
            "no curvature block (c1, c2 or c3) is declared; no certificate route exists".into(),
        ));
    }

    let mut routes = Vec::new();
    for (route, cert) in certificates {
        let route_ell = match ell {
            Some(e) => e,
            None => ceil_robust(cert.m_tilde * cert.m_tilde).max(1.0) as u64,
        };
        let mut modes = vec![PsiMode::OneSided];
        if cocoercive_ok {
            modes.push(PsiMode::Cocoercive);
        }
        let mut psi_modes = Vec::new();
        for mode in modes {
            let spec = match mode {
                PsiMode::OneSided => PsiSpec::one_sided(drift, gamma_bar, route_ell)?,
                PsiMode::Cocoercive => PsiSpec::cocoercive(drift, gamma_bar, route_ell)?,
            };
            // A small set so wide that the block minorization underflows
            // to zero yields no usable constants on this route; report it
            // in a note rather than failing routes that are still fine.
            let assembled = eps_inf(&spec, gamma_bar, cert.m_tilde).and_then(|minorization| {
                let constants = assemble_rate_constants(&cert, route_ell, minorization.eps_bar)?;
                Ok((minorization, constants))
            });
            let (minorization, constants) = match assembled {
                Ok(pair) => pair,
                Err(e @ Error::DegenerateMinorization(_)) => {
                    notes.push(format!("{route:?}/{mode:?} constants omitted: {e}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let block = match block_harris_constants(&cert, &spec, route_ell) {
                Ok(b) => Some(b),
                Err(Error::InvalidConfig(msg)) | Err(Error::DegenerateMinorization(msg)) => {
                    notes.push(format!("block-chain constants omitted: {msg}"));
                    None
                }
                Err(e) => return Err(e),
            };
            let (wasserstein, limits) = if route == CertificateRoute::Distance {
                (
                    Some(w_constants(drift, &spec, &constants, order)?),
                    Some(limit_constants(drift, mode, Some(route_ell))?),
                )
            } else {
                (None, None)
            };
            psi_modes.push(PsiModeReport {
                mode,
                ell: route_ell,
                minorization,
                constants,
                block,
                wasserstein,
                limits,
            });
        }
        if psi_modes.is_empty() {
            continue;
        }
        routes.push(RouteReport {
            route,
            certificate: cert,
            psi_modes,
        });
    }
    if routes.is_empty() {
        return Err(Error::DegenerateMinorization(format!(
            "every certificate route degenerates at gamma_bar = {gamma_bar}: {}",
            notes.join("; ")
        )));
    }
    let asymptotics = asymptotic_and_competitor_rates(drift, gamma_bar)?;
    Ok(RateReport {
        gamma_bar,
        routes,
        asymptotics,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BuiltinDrift, DriftConstants};

    fn drift_ml(m: f64, l: f64) -> DriftSpec {
        DriftSpec::from_parts(
            1,
            None,
            DriftConstants {
                lipschitz: Some(l),
                one_sided: Some(m),
                ..Default::default()
            },
            None,
        )
        .unwrap()
    }

    fn linear_drift() -> DriftSpec {
        BuiltinDrift::Linear { theta: 1.0 }.instantiate(1, 0.1).unwrap()
    }

    fn mixture_drift() -> DriftSpec {
        BuiltinDrift::GaussianMixture { sigma: 2.0, m: 6.0 }
            .instantiate(1, 0.1)
            .unwrap()
    }

    fn literal_cert(lambda: f64, a: f64, b_d: f64, gamma_bar: f64) -> DriftCertificate {
        DriftCertificate {
            v: PairLyapunov::Distance { r: 1.0 },
            lambda,
            a,
            small_set: SmallSet::DistanceBall { m: 1.0 },
            gamma_bar,
            m_tilde: 1.0,
            b_d,
            v_exponent_gamma: false,
        }
    }

    const TWO_PHI_HALF: f64 = 0.617_075_077_451_973_792_72;

    #[test]
    fn psi_constant_branch_and_diagonal() {
        let spec = PsiSpec::cocoercive(&linear_drift(), 0.5, 1).unwrap();
        assert_eq!(psi(&spec, 0.3, 0.0).unwrap(), 1.0);
        // ℓ = 1 ≥ ⌈R₁⌉² = 1 and t ≤ R₁ = 1: constant branch.
        let v = psi(&spec, 0.3, 0.8).unwrap();
        assert!((v - TWO_PHI_HALF).abs() < 1e-15, "{v}");
        // Beyond the radius the variance branch takes over.
        assert!(psi(&spec, 0.3, 1.5).unwrap() < v);
        assert!(psi(&spec, 0.6, 0.8).is_err(), "gamma above the ceiling");
    }

    #[test]
    fn psi_zero_curvature_matches_display() {
        let profile = affine_profile(0.0, 0.0, 0.5).unwrap();
        let spec = PsiSpec::with_profile(PsiMode::OneSided, profile, 1, 0.0).unwrap();
        // Ξ = γ·ℓ⌈1/γ⌉ = 1 at γ = 0.1, so Ψ = 2Φ(−2/2).
        let v = psi(&spec, 0.1, 2.0).unwrap();
        let expected = 2.0 * normal_cdf(-1.0);
        assert!((v - expected).abs() < 1e-15, "{v} vs {expected}");
    }

    #[test]
    fn explosive_profiles_are_rejected() {
        // κ(γ) = −2 + γ bottoms out at γκ = −1 exactly when γ̄ ≥ 1.
        assert!(matches!(
            PsiSpec::one_sided(&drift_ml(1.0, 1.0), 1.0, 1),
            Err(Error::ExplosiveProfile(_))
        ));
        assert!(PsiSpec::one_sided(&drift_ml(1.0, 1.0), 0.5, 1).is_ok());
    }

    #[test]
    fn eps_inf_hits_the_zero_stepsize_candidate() {
        // Contractive profile: the variance sum increases with γ, so
        // the infimum is the γ → 0⁺ limit (e² − 1)/2.
        let spec = PsiSpec::one_sided(&drift_ml(1.0, 1.0), 0.5, 1).unwrap();
        let xi0 = 3.194_528_049_465_324_7_f64;
        let inf = eps_inf(&spec, 0.5, 1.0).unwrap();
        let expected = 2.0 * normal_cdf(-1.0 / (2.0 * xi0.sqrt()));
        assert!((inf.eps_bar - expected).abs() < 1e-12, "{inf:?}");
        assert!((inf.analytic_min - expected).abs() < 1e-12);
        assert!(inf.grid_min >= inf.analytic_min);
        assert_eq!(eps_inf(&spec, 0.5, 0.0).unwrap().eps_bar, 1.0);
    }

    #[test]
    fn rate_constants_match_hand_arithmetic() {
        // c̄₁ = B̄_d = 2 when A = 0, so
        // log ρ = log(.5)log(.5)/(log(.5) − log 2) gives ρ = 2^{−1/2}.
        let rc = assemble_rate_constants(&literal_cert(0.5, 0.0, 2.0, 1.0), 1, 0.5).unwrap();
        assert!((rc.rho_bar_1 - 0.707_106_781_186_547_6).abs() < 1e-15);
        assert_eq!(rc.d_bar_1, 1.0);
        assert_eq!(rc.d_bar_2, 0.0);
        assert_eq!(rc.c_bar_1, 0.0);
        assert!((rc.block_cost - 2.0).abs() < 1e-12);
        assert!(!rc.immediate_coupling);

        let p0 = bound_curve(&rc, 0.5, 2.0, 0).unwrap();
        assert!((p0.full - 2.0).abs() < 1e-12);
        assert!((p0.collapsed - 2.0).abs() < 1e-12);
        assert_eq!(bound_curve(&rc, 0.5, 0.0, 7).unwrap().full, 0.0);
        let far = bound_curve(&rc, 0.5, 2.0, 400).unwrap();
        assert!(far.full < 1e-14 && far.full > 0.0);
    }

    #[test]
    fn degenerate_and_immediate_minorization() {
        let cert = literal_cert(0.5, 1.0, 2.0, 1.0);
        assert!(matches!(
            assemble_rate_constants(&cert, 1, 0.0),
            Err(Error::DegenerateMinorization(_))
        ));
        let rc = assemble_rate_constants(&cert, 1, 1.0).unwrap();
        assert!(rc.immediate_coupling);
        assert_eq!(rc.rho_bar_1, rc.lambda);
    }

    #[test]
    fn lambda_below_rho_and_monotonicity_on_random_tuples() {
        use rand::{Rng, SeedableRng};
        let mut rg = rand::rngs::StdRng::seed_from_u64(0x5eed);
        for _ in 0..10_000 {
            let lambda = rg.gen_range(0.01..0.99);
            let eps = rg.gen_range(1e-6..1.0);
            let b_d = rg.gen_range(1.0..10.0);
            let a = rg.gen_range(0.0..5.0);
            let gb = rg.gen_range(0.0..1.0);
            let ell = rg.gen_range(1..5u64);
            let rc = assemble_rate_constants(&literal_cert(lambda, a, b_d, gb), ell, eps).unwrap();
            assert!(
                rc.lambda <= rc.rho_bar_1 && rc.rho_bar_1 < 1.0,
                "{lambda} {eps} {b_d} {a} {gb} {ell}"
            );
            if let Some(bound) = rc.log_inv_rho_bound {
                assert!(
                    bound >= 1.0 / -rc.log_rho_bar_1 - 1e-9,
                    "explicit cap {bound} under computed {}",
                    1.0 / -rc.log_rho_bar_1
                );
            }
            // ρ̄₁ grows with the block cost and shrinks with ε̄.
            let heavier =
                assemble_rate_constants(&literal_cert(lambda, a, b_d + 1.0, gb), ell, eps).unwrap();
            assert!(heavier.rho_bar_1 >= rc.rho_bar_1 - 1e-15);
            let stronger = assemble_rate_constants(
                &literal_cert(lambda, a, b_d, gb),
                ell,
                (eps * 1.5).min(1.0),
            )
            .unwrap();
            assert!(stronger.rho_bar_1 <= rc.rho_bar_1 + 1e-15);
        }
    }

    #[test]
    fn collapsed_bound_dominates_full_bound() {
        let cert = literal_cert(0.6, 2.0, 3.0, 0.8);
        let rc = assemble_rate_constants(&cert, 2, 0.3).unwrap();
        for k in [0u64, 1, 5, 20, 100, 1000] {
            for c0 in [1.0, 2.5, 10.0] {
                let p = bound_curve(&rc, 0.4, c0, k).unwrap();
                assert!(
                    p.collapsed >= p.full - 1e-12 * p.full.abs(),
                    "k={k} c0={c0}: {p:?}"
                );
            }
        }
    }

    #[test]
    fn distance_cost_constants_and_interpolation() {
        let drift = linear_drift();
        let spec = PsiSpec::one_sided(&drift, 0.5, 1).unwrap();
        let cert = linear_certificate(&drift, 0.5).unwrap();
        let inf = eps_inf(&spec, 0.5, cert.m_tilde).unwrap();
        let rc = assemble_rate_constants(&cert, 1, inf.eps_bar).unwrap();
        let w = w_constants(&drift, &spec, &rc, Some((2.0, 3.0))).unwrap();
        // (π (e² − 1)/2)^{−1/2}: single-block variance at γ → 0⁺.
        assert!((w.slope_magnitude - 0.315_661_568_929_134_24).abs() < 1e-12);
        assert_eq!(w.theta, 1.0);
        assert!(w.branch_long >= w.branch_short);
        assert_eq!(w.d_bar_3, w.branch_long);
        let interp = w.interpolation.unwrap();
        assert_eq!(interp.q_ceil, 4);
        assert!((interp.q - 4.0).abs() < 1e-15);
        let expected = w.d_bar_3.powf(1.0 / 3.0)
            * interp.moment_mass.powf((1.0 - 1.0 / 3.0) / 4.0).max(1.0);
        assert!((interp.d_bar_4 - expected).abs() < 1e-12 * expected);
        assert!(matches!(
            w_constants(&drift, &spec, &rc, Some((3.0, 2.0))),
            Err(Error::InvalidInterpolation(_))
        ));
    }

    #[test]
    fn limit_constants_agree_with_extrapolation() {
        let drift = linear_drift();
        for mode in [PsiMode::OneSided, PsiMode::Cocoercive] {
            let lim = limit_constants(&drift, mode, None).unwrap();
            assert!((lim.at_zero.lambda - (-0.5f64).exp()).abs() < 1e-15);
            assert!(lim.rel_gap_rho <= 1e-6 && lim.rel_gap_d1 <= 1e-6, "{lim:?}");
            assert!((lim.probes[0].gamma_bar - 0.1).abs() < 1e-15);
            assert!((lim.probes[2].gamma_bar - 0.001).abs() < 1e-15);
            assert_eq!(lim.at_zero.gamma_bar, 0.0);
        }
        // The cocoercive constant branch survives the limit untouched.
        let lim = limit_constants(&drift, PsiMode::Cocoercive, None).unwrap();
        assert!((lim.at_zero.eps_bar - TWO_PHI_HALF).abs() < 1e-15);
    }

    #[test]
    fn quadrature_constants_hit_frozen_values() {
        let c1 = c1_quadrature().unwrap();
        let c2 = c2_quadrature().unwrap();
        assert!((c1 - 5.065_790_198_729_835_7e-4).abs() < 1e-12, "{c1}");
        assert!((c2 - 7.169_975_720_438_166_9e-3).abs() < 1e-12, "{c2}");
        assert!(c1 > 0.0004 && c1 <= 0.00051);
        assert!(c2 > 0.006 && c2 <= 0.0072);
    }

    #[test]
    fn barrier_row_matches_hand_values() {
        let beta = beta_row(-1.0, 0.5, 1.0, 3.0).unwrap();
        assert!((beta.ours - 1.000_000_015_229_979_9).abs() < 1e-15, "{beta:?}");
        assert!((beta.continuous_wp - 1.5).abs() < 1e-15);
        assert_eq!(beta.continuous_w1, 1.0);
        let c1 = c1_quadrature().unwrap();
        let c2 = c2_quadrature().unwrap();
        assert!((beta.discrete_tv - 4.0 / c1).abs() < 1e-9 / c1);
        assert!((beta.discrete_w1 - 196.0 / (6.0 * c2)).abs() < 1e-9 / c2);
        assert!((beta.discrete_w2 - 4.0 / (6.0 * c2)).abs() < 1e-9 / c2);
        assert!(beta_row(0.5, 0.5, 1.0, 3.0).is_err(), "needs m < 0");
    }

    #[test]
    fn mixture_log_rates_match_theta_identity() {
        // σ = 2, mode gap 6: θ = 1.5, m = (1 − θ²)/σ², R = 2·6.
        let theta: f64 = 1.5;
        let rates = competitor_log_rates(-0.3125, 0.125, 0.3125, 12.0, Some(0.1)).unwrap();
        let identity = 4.0 * theta * theta * (theta * theta - 1.0)
            / -(-32.0 * theta * theta * (theta * theta - 1.0)).exp_m1();
        assert!((rates.ours - identity).abs() < 1e-12 * identity, "{rates:?}");
        assert!((rates.continuous_w1 - 11.25).abs() < 1e-12);
        // The stepsize-uniform value can only be worse (larger).
        assert!(rates.ours_stepsize.unwrap() >= rates.ours);
        assert!(rates.discrete_tv > rates.ours);
        assert!(rates.discrete_w2 > rates.ours);
    }

    #[test]
    fn generic_chain_constants_match_hand_values() {
        let hc = harris_constants(HarrisInputs {
            eps: 0.5,
            n0: 1,
            lambda1: 0.5,
            a1: 1.0,
            sup_v1: 2.0,
            second: None,
        })
        .unwrap();
        assert_eq!(hc.offset, 2.0);
        assert_eq!(hc.m_cap, 4.0);
        assert!((hc.rho - 0.793_700_525_984_099_8).abs() < 1e-15);
        // A₁ = 0 reduces to the two-point arithmetic of the rate fraction.
        let hc0 = harris_constants(HarrisInputs {
            eps: 0.5,
            n0: 1,
            lambda1: 0.5,
            a1: 0.0,
            sup_v1: 2.0,
            second: None,
        })
        .unwrap();
        assert!((hc0.rho - 0.707_106_781_186_547_6).abs() < 1e-15);
        // ε = 1 couples in one pass: ρ = λ₁, approached monotonically.
        let full = harris_constants(HarrisInputs { eps: 1.0, ..hc0.inputs }).unwrap();
        assert_eq!(full.rho, 0.5);
        let mut last = 1.0;
        for eps in [0.9, 0.99, 0.999, 0.9999] {
            let h = harris_constants(HarrisInputs { eps, ..hc0.inputs }).unwrap();
            assert!(h.rho < last && h.rho > 0.5);
            last = h.rho;
        }
        // n = 0 bound: min[M·Ξ + d₀, (1 + d₀) + Ξ] with Ξ = 1 + offset.
        assert_eq!(hc.semimetric_bound(0, 1.0, 1.0), 5.0);
        assert!(hc.second_bound(3, 1.0, 1.0, 1.0).is_err());
        let with_second = harris_constants(HarrisInputs {
            second: Some(SecondFunction { lambda2: 0.9, a2: 1.0 }),
            ..hc.inputs
        })
        .unwrap();
        let mut prev = f64::INFINITY;
        for n in [0u64, 10, 50, 200] {
            let b = with_second.second_bound(n, 1.0, 1.0, 1.0).unwrap();
            assert!(b.is_finite() && b > 0.0 && b <= prev);
            prev = b;
        }
    }

    #[test]
    fn block_chain_level_and_explicit_cap() {
        let cert = literal_cert(0.5, 1.0, 2.0, 0.5);
        let spec = PsiSpec::one_sided(&drift_ml(1.0, 1.0), 0.5, 1).unwrap();
        let bh = block_harris_constants(&cert, &spec, 1).unwrap();
        assert!((bh.b_d - 7.328_085_122_666_722).abs() < 1e-12, "{}", bh.b_d);
        assert!((bh.m_d - (bh.b_d - 1.0)).abs() < 1e-12);
        assert!(bh.eps.eps_bar > 0.0 && bh.eps.eps_bar < 1.0);
        for rate in [&bh.at_gamma_bar, &bh.uniform] {
            assert!(rate.rho > 0.0 && rate.rho < 1.0);
            assert!(rate.lambda_ell <= rate.rho + 1e-15);
            assert!(rate.big_c.is_finite() && rate.big_c > 0.0);
        }
        let cap = bh.log_inv_rho_bound.expect("gate holds at λ = 1/2, A = 1");
        assert!(cap >= 1.0 / -bh.uniform.log_rho - 1e-9);
        // Bounds decay block by block and reject out-of-range stepsizes.
        let b0 = bh.bound(true, 0.5, 0, 3.0).unwrap();
        let b1 = bh.bound(true, 0.5, 40, 3.0).unwrap();
        assert!(b1 < b0);
        assert!(bh.bound(true, 0.6, 0, 1.0).is_err());

        let mut odd = cert.clone();
        odd.v_exponent_gamma = true;
        assert!(matches!(
            block_harris_constants(&odd, &spec, 1),
            Err(Error::InvalidConfig(_))
        ));
        let mut weightless = cert;
        weightless.a = 0.0;
        assert!(matches!(
            block_harris_constants(&weightless, &spec, 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn small_set_rate_beats_block_rate_on_shared_inputs() {
        // Same (λ, A, ℓ, ε̄): the small-set route's explicit cap on the
        // inverse log rate stays below the whole-space block route's.
        for &lambda in &[0.5, 0.6, 0.7] {
            for &a in &[1.0, 2.0, 5.0] {
                for &ell in &[1u64, 2] {
                    for &eps in &[0.1, 0.3, 0.6] {
                        let rc =
                            assemble_rate_constants(&literal_cert(lambda, a, 2.0, 0.5), ell, eps)
                                .unwrap();
                        let small = rc.log_inv_rho_bound.unwrap();
                        let blocked = block_explicit_bound(lambda, a, eps, 0.5).unwrap();
                        assert!(
                            small <= blocked,
                            "λ={lambda} A={a} ℓ={ell} ε={eps}: {small} > {blocked}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn underflowing_routes_are_skipped_with_a_note() {
        // At m = 10 the quadratic small set is so wide (m_tilde ≈ 244.7)
        // that its block minorization underflows f64; the distance route
        // survives and the report must say why the other one is missing.
        let drift = BuiltinDrift::GaussianMixture { sigma: 2.0, m: 10.0 }
            .instantiate(1, 0.1)
            .unwrap();
        let report = full_rate_report(&drift, 0.1, None, None).unwrap();
        assert_eq!(report.routes.len(), 1);
        assert_eq!(report.routes[0].route, CertificateRoute::Distance);
        let rc = &report.routes[0].psi_modes[0].constants;
        assert!(rc.eps_bar > 0.0 && rc.log_rho_bar_1 < 0.0);
        assert!(
            report
                .notes
                .iter()
                .any(|n| n.contains("Quadratic") && n.contains("degenerate")),
            "notes: {:?}",
            report.notes
        );
        assert!(report.asymptotics.beta.is_some());
    }

    #[test]
    fn full_report_shapes_and_round_trip() {
        let report = full_rate_report(&linear_drift(), 0.5, None, Some((2.0, 3.0))).unwrap();
        assert_eq!(report.routes.len(), 3);
        for route in &report.routes {
            assert_eq!(route.psi_modes.len(), 2, "{:?}", route.route);
            for pm in &route.psi_modes {
                assert!(pm.constants.rho_bar_1 < 1.0);
                let is_distance = route.route == CertificateRoute::Distance;
                assert_eq!(pm.wasserstein.is_some(), is_distance);
                assert_eq!(pm.limits.is_some(), is_distance);
                if route.route == CertificateRoute::Exponential {
                    assert!(pm.block.is_none(), "stepsize-dependent pair function");
                }
            }
        }
        assert!(report.asymptotics.competitors.is_none(), "m > 0 here");
        assert!(report.asymptotics.distance.unwrap().cocoercive_limit.is_some());
        assert!(report.asymptotics.exponential.unwrap().cocoercive_limit.is_some());

        let mixture = full_rate_report(&mixture_drift(), 0.1, None, None).unwrap();
        assert_eq!(mixture.routes.len(), 2);
        for route in &mixture.routes {
            assert_eq!(route.psi_modes.len(), 1);
            assert_eq!(route.psi_modes[0].mode, PsiMode::OneSided);
        }
        let distance = &mixture.routes[0];
        assert_eq!(distance.route, CertificateRoute::Distance);
        assert!((distance.certificate.lambda - 0.941_709_353_685_223_4).abs() < 1e-15);
        assert_eq!(distance.psi_modes[0].ell, 144);
        assert!(mixture.asymptotics.competitors.is_some());
        assert!(mixture.asymptotics.beta.is_some());

        let json = serde_json::to_string(&mixture).unwrap();
        let back: RateReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mixture);
    }

    #[test]
    fn asymptotics_respect_declared_metadata() {
        let rates = asymptotic_and_competitor_rates(&mixture_drift(), 0.1).unwrap();
        let dist = rates.distance.unwrap();
        assert!(dist.cocoercive.is_none() && dist.cocoercive_limit.is_none());
        let one_sided = dist.one_sided.unwrap();
        let one_sided_limit = dist.one_sided_limit.unwrap();
        assert!(one_sided.is_finite() && one_sided > 0.0);
        assert!(one_sided_limit.is_finite() && one_sided_limit > 0.0);
        assert!(dist.diffusion_one_sided.unwrap() >= one_sided_limit);
        let quad = rates.quadratic.unwrap();
        assert!(quad.cocoercive_limit.is_none());
        assert!(quad.one_sided_limit.is_some());
        assert!(rates.exponential.is_none(), "no c3 block declared");
    }
}
