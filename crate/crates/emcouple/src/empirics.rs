//! Monte Carlo estimators that confront the closed-form bounds with
//! simulation at desk scale.
//!
//! Three estimators and two drivers:
//!
//! * [`estimate_tv`] — histogram total-variation distance between a 1-d
//!   sample cloud and an exact normal-mixture density, with a multinomial
//!   bootstrap standard error. The binned TV is a lower bound of the true
//!   TV with a deterministic bias floor, which we prefer at desk scale to
//!   kernel estimates with tuned bandwidths.
//! * [`estimate_w1_1d`] — the exact 1-d Wasserstein-1 distance between two
//!   empirical measures of equal size (mean of `|x₍ᵢ₎ − y₍ᵢ₎|` over sorted
//!   samples).
//! * [`fit_log_rate`] — least-squares slope of `n ↦ log TV_n` restricted
//!   to the window `3·plateau ≤ TV ≤ ½`, where the plateau (the saturation
//!   level caused by the gap between the diffusion's invariant law and the
//!   discretized chain's) is the median of the final tenth of the curve.
//! * [`run_mixture_experiment`] — simulates the Langevin discretization
//!   `X_{k+1} = X_k + γ b(X_k) + √(2γ) Z_{k+1}` of the two-well potential
//!   `U(x) = x²/(2σ²) − log cosh(mx/(2σ²))` across many independent
//!   replicas, estimates `TV(law(X_n), π)` on a checkpoint grid, fits the
//!   empirical contraction factor, and tabulates it against the
//!   closed-form inverse rates of [`crate::rates::competitor_log_rates`].
//! * [`validate_bound`] — couples two chains by reflection, estimates the
//!   cost `E[1_{X_k ≠ Y_k} 𝒱(X_k, Y_k)]` on a step grid, and checks it
//!   against [`bound_curve`] at three standard errors, optionally alongside
//!   a falsification control that is *supposed* to be violated.
//!
//! All estimators are single-pass over replicas with per-replica random
//! streams, so results are byte-identical for a fixed seed.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kernel::{simulate_coupled, ChainConfig, CoupleOptions};
use crate::lyapunov::DriftCertificate;
use crate::model::{BuiltinDrift, DriftSpec};
use crate::rates::{bound_curve, competitor_log_rates, RateConstants};
use crate::rng;
use crate::special::normal_cdf;
use crate::{Error, Result};

/// Bootstrap resample count for histogram TV standard errors.
const BOOTSTRAP_RESAMPLES: usize = 100;
/// Minimum sample count for a meaningful histogram TV estimate.
const MIN_TV_SAMPLES: usize = 1000;
/// Histogram resolution used by the experiment drivers.
const DEFAULT_BINS: usize = 400;
/// Checkpoint count target for TV-vs-n curves.
const CURVE_POINTS: u64 = 200;

// ---------------------------------------------------------------------
// Exact reference densities
// ---------------------------------------------------------------------

/// One Gaussian component of a [`NormalMixture`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// A finite mixture of normal distributions, used as the exact reference
/// law in histogram TV estimates. Bin masses are integrated in closed
/// form through `Φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalMixture {
    pub components: Vec<MixtureComponent>,
}

impl NormalMixture {
    /// A validated mixture. Weights must be positive and sum to one.
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let mixture = NormalMixture { components };
        mixture.validate()?;
        Ok(mixture)
    }

    /// The symmetric two-well reference `½N(−m/2, σ²) + ½N(m/2, σ²)`,
    /// i.e. the invariant law of the two-well potential in the centered
    /// coordinate.
    pub fn two_well(sigma: f64, m: f64) -> Result<Self> {
        NormalMixture::new(vec![
            MixtureComponent {
                weight: 0.5,
                mean: -0.5 * m,
                sd: sigma,
            },
            MixtureComponent {
                weight: 0.5,
                mean: 0.5 * m,
                sd: sigma,
            },
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidConfig(
                "mixture needs at least one component".into(),
            ));
        }
        let mut total = 0.0;
        for c in &self.components {
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "component weight must be positive, got {}",
                    c.weight
                )));
            }
            if !(c.sd > 0.0) || !c.sd.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "component sd must be positive, got {}",
                    c.sd
                )));
            }
            if !c.mean.is_finite() {
                return Err(Error::InvalidConfig("component mean must be finite".into()));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "component weights must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    /// Cumulative distribution function `Σ wⱼ Φ((x − μⱼ)/σⱼ)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_cdf((x - c.mean) / c.sd))
            .sum()
    }

    /// Probability mass of the interval `(a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    fn max_sd(&self) -> f64 {
        self.components.iter().fold(0.0, |acc, c| acc.max(c.sd))
    }
}

// ---------------------------------------------------------------------
// Histogram TV with bootstrap errors
// ---------------------------------------------------------------------

/// A reference law integrated over a fixed binning of `[lo, hi)`.
struct BinnedReference {
    lo: f64,
    width: f64,
    /// Reference mass of each bin.
    masses: Vec<f64>,
    /// Reference mass outside `[lo, hi)`; the empirical measure carries
    /// none there, so it enters the TV sum unmatched.
    outside: f64,
}

impl BinnedReference {
    fn build(reference: &NormalMixture, lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let masses: Vec<f64> = (0..bins)
            .map(|i| reference.mass(lo + i as f64 * width, lo + (i + 1) as f64 * width))
            .collect();
        let outside = (reference.cdf(lo) + 1.0 - reference.cdf(hi)).max(0.0);
        BinnedReference {
            lo,
            width,
            masses,
            outside,
        }
    }

    fn bin_of(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.width).floor();
        (i.max(0.0) as usize).min(self.masses.len() - 1)
    }

    /// `TV = ½(Σᵢ |cᵢ/n − πᵢ| + π(outside))`.
    fn tv(&self, counts: &[u64], n: u64) -> f64 {
        let total = n as f64;
        let sum: f64 = counts
            .iter()
            .zip(&self.masses)
            .map(|(&c, &pi)| (c as f64 / total - pi).abs())
            .sum();
        0.5 * (sum + self.outside)
    }
}

fn binom(rg: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("binomial parameters are validated")
        .sample(rg)
}

/// One multinomial resample of `counts` (total `n`), returned as its TV
/// against the binned reference. Sampled as a chain of conditional
/// binomials so only occupied bins cost a draw.
fn resample_tv(counts: &[u64], n: u64, nz_last: usize, br: &BinnedReference, rg: &mut ChaCha8Rng) -> f64 {
    let total = n as f64;
    let mut remaining = n;
    let mut mass_left = 1.0;
    let mut acc = 0.0;
    for (i, (&c, &pi)) in counts.iter().zip(&br.masses).enumerate() {
        let draw = if c == 0 || remaining == 0 {
            0
        } else if i == nz_last {
            remaining
        } else {
            let share = c as f64 / total;
            let d = binom(rg, remaining, (share / mass_left).min(1.0));
            mass_left = (mass_left - share).max(0.0);
            d
        };
        remaining -= draw;
        acc += (draw as f64 / total - pi).abs();
    }
    0.5 * (acc + br.outside)
}

/// Bootstrap standard error of the histogram TV: the standard deviation
/// of the TV over [`BOOTSTRAP_RESAMPLES`] multinomial resamples of the
/// observed histogram.
fn bootstrap_stderr(counts: &[u64], n: u64, br: &BinnedReference, rg: &mut ChaCha8Rng) -> f64 {
    let nz_last = match counts.iter().rposition(|&c| c > 0) {
        Some(i) => i,
        None => return 0.0,
    };
    let vals: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| resample_tv(counts, n, nz_last, br, rg))
        .collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
    var.sqrt()
}

/// A histogram TV estimate with its binning and a bootstrap error bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    /// Binned total-variation distance (a lower bound of the true TV).
    pub tv: f64,
    /// Bootstrap standard error over multinomial resamples.
    pub stderr: f64,
    pub bins: usize,
    /// Histogram support, `[sample min − 5σ, sample max + 5σ]`.
    pub lo: f64,
    pub hi: f64,
    pub n_samples: usize,
}

/// Estimate the total-variation distance between the empirical law of
/// `samples` and the exact `reference`, by comparing bin masses over a
/// histogram of `bins` cells covering the samples with a `5σ` margin.
///
/// Needs at least 10³ samples. The bootstrap stream is keyed by `seed`.
pub fn estimate_tv(
    samples: &[f64],
    reference: &NormalMixture,
    bins: usize,
    seed: u64,
) -> Result<TvEstimate> {
    reference.validate()?;
    if samples.len() < MIN_TV_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "TV estimation needs at least {MIN_TV_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if bins < 2 {
        return Err(Error::InvalidConfig(format!(
            "histogram needs at least 2 bins, got {bins}"
        )));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in samples {
        if !x.is_finite() {
            return Err(Error::InvalidConfig("samples must be finite".into()));
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let pad = 5.0 * reference.max_sd();
    lo -= pad;
    hi += pad;
    let br = BinnedReference::build(reference, lo, hi, bins);
    let mut counts = vec![0u64; bins];
    for &x in samples {
        counts[br.bin_of(x)] += 1;
    }
    let n = samples.len() as u64;
    let mut rg = rng::stream(seed, rng::DOMAIN_BOOTSTRAP, 0);
    Ok(TvEstimate {
        tv: br.tv(&counts, n),
        stderr: bootstrap_stderr(&counts, n, &br, &mut rg),
        bins,
        lo,
        hi,
        n_samples: samples.len(),
    })
}

// ---------------------------------------------------------------------
// Exact empirical W₁ in one dimension
// ---------------------------------------------------------------------

/// The exact Wasserstein-1 distance between the empirical measures of
/// `xs` and `ys`: the mean of `|x₍ᵢ₎ − y₍ᵢ₎|` over sorted samples, which
/// for equal-size sets coincides with `∫|F_x − F_y|`.
pub fn estimate_w1_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if xs.len() != ys.len() {
        return Err(Error::UnequalSampleCounts(format!(
            "{} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig("samples must be finite".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64)
}

// ---------------------------------------------------------------------
// Log-rate fitting
// ---------------------------------------------------------------------

/// Result of fitting `log TV_n ≈ log C + n log ρ` on the pre-plateau
/// window of a TV-vs-n curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted per-step contraction factor `e^slope ∈ (0, 1)`.
    pub rho_exp: f64,
    /// `(n_first, n_last)` of the fitted window.
    pub window: (f64, f64),
    /// Number of curve points inside the window.
    pub n_points: usize,
    /// Saturation level: median TV over the final tenth of the curve.
    pub plateau: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Fit the geometric decay rate of a TV curve given as `(n, tv)` pairs.
///
/// The saturation plateau — TV stops decreasing once the chain's own
/// invariant law dominates the distance to the reference — is estimated
/// as the median of the final 10% of the curve, and the least-squares
/// line is fitted on `log tv` over the points with `tv ∈ [3·plateau, ½]`.
pub fn fit_log_rate(curve: &[(f64, f64)]) -> Result<RateFit> {
    if curve.len() < 20 {
        return Err(Error::InsufficientSamples(format!(
            "rate fitting needs a curve of at least 20 points, got {}",
            curve.len()
        )));
    }
    let tail = curve.len() / 10;
    let mut last: Vec<f64> = curve[curve.len() - tail..].iter().map(|&(_, tv)| tv).collect();
    last.sort_by(f64::total_cmp);
    let mid = last.len() / 2;
    let plateau = if last.len() % 2 == 1 {
        last[mid]
    } else {
        0.5 * (last[mid - 1] + last[mid])
    };
    let floor = 3.0 * plateau;
    let window: Vec<(f64, f64)> = curve
        .iter()
        .copied()
        .filter(|&(_, tv)| tv > 0.0 && tv >= floor && tv <= 0.5)
        .collect();
    if window.len() < 2 {
        return Err(Error::NoLinearRegime(format!(
            "fit window [{floor:.3e}, 0.5] holds {} curve points",
            window.len()
        )));
    }
    let npts = window.len() as f64;
    let mean_n = window.iter().map(|&(n, _)| n).sum::<f64>() / npts;
    let mean_y = window.iter().map(|&(_, tv)| tv.ln()).sum::<f64>() / npts;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(n, tv) in &window {
        sxx += (n - mean_n) * (n - mean_n);
        sxy += (n - mean_n) * (tv.ln() - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::NoLinearRegime(
            "fit window has no spread in n".into(),
        ));
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::NoLinearRegime(format!(
            "log-TV slope {slope:.3e} is not negative"
        )));
    }
    let residual = (window
        .iter()
        .map(|&(n, tv)| {
            let fitted = mean_y + slope * (n - mean_n);
            (tv.ln() - fitted) * (tv.ln() - fitted)
        })
        .sum::<f64>()
        / npts)
        .sqrt();
    let (first, last_n) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(n, _)| {
            (lo.min(n), hi.max(n))
        });
    Ok(RateFit {
        rho_exp: slope.exp(),
        window: (first, last_n),
        n_points: window.len(),
        plateau,
        residual,
    })
}

// ---------------------------------------------------------------------
// Two-well mixture experiment
// ---------------------------------------------------------------------

/// A two-well target `π ∝ exp(−x²/(2σ²)) cosh(mx/(2σ²))`, i.e. the
/// equal-weight normal mixture with modes at `±m/2` and scale `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub sigma: f64,
    /// Mode separation; the potential is convex iff `m ≤ 2σ`.
    pub m: f64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.m >= 0.0) || !self.m.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "mode separation must be nonnegative, got {}",
                self.m
            )));
        }
        Ok(())
    }

    /// Half mode separation in noise units, `θ = m/(2σ)`.
    pub fn theta(&self) -> f64 {
        self.m / (2.0 * self.sigma)
    }

    /// The drift `b = −U′` with its declared regularity constants.
    pub fn drift(&self, gamma: f64) -> Result<DriftSpec> {
        BuiltinDrift::GaussianMixture {
            sigma: self.sigma,
            m: self.m,
        }
        .instantiate(1, gamma)
    }

    /// The exact invariant law of the diffusion.
    pub fn reference(&self) -> Result<NormalMixture> {
        NormalMixture::two_well(self.sigma, self.m)
    }
}

/// One point of a TV-vs-n curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvPoint {
    pub n: u64,
    pub tv: f64,
    pub stderr: f64,
}

/// The measured contraction factor next to the closed-form inverse rates
/// it is supposed to track. All entries except `rho_exp` are
/// `log(1/rate)` in the diffusion's time unit (`1/γ` chain steps), so
/// curves can be compared additively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureRateSummary {
    /// `log γ − log log(1/ρ_exp)`: the measured log-inverse-rate.
    pub measured: f64,
    /// Our reflection-coupling rate.
    pub ours: f64,
    /// The discretized-chain TV competitor.
    pub discrete_tv: f64,
    /// The discretized-chain W₂ competitor.
    pub discrete_w2: f64,
    /// Fitted per-step contraction factor.
    pub rho_exp: f64,
}

/// Everything measured for one mixture spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureExperiment {
    pub spec: MixtureSpec,
    pub gamma: f64,
    pub n_steps: u64,
    /// Starting point actually used (defaults to the left mode `−m/2`).
    pub x0: f64,
    pub replicas: u64,
    pub curve: Vec<TvPoint>,
    pub fit: RateFit,
    /// Rate comparison; absent when the potential is convex (`m ≤ 2σ`),
    /// where the barrier-rate formulas do not apply.
    pub rates: Option<MixtureRateSummary>,
}

/// Simulate the Langevin discretization of each two-well spec and
/// measure its TV convergence to the diffusion's invariant law.
///
/// Each replica runs `X_{k+1} = X_k + γ b(X_k) + √(2γ) Z_{k+1}` from
/// `x0` (default: the left mode `−m/2`); at ~200 evenly spaced
/// checkpoints the replica cloud is binned and compared against the
/// exact mixture. The per-step contraction factor is then fitted on the
/// pre-plateau window and converted to a log-inverse-rate comparable
/// with the closed-form competitor table.
pub fn run_mixture_experiment(
    specs: &[MixtureSpec],
    gamma: f64,
    n_steps: u64,
    x0: Option<f64>,
    replicas: u64,
    seed: u64,
) -> Result<Vec<MixtureExperiment>> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig("need at least one mixture spec".into()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if n_steps == 0 || replicas == 0 {
        return Err(Error::InvalidConfig(
            "n_steps and replicas must be positive".into(),
        ));
    }
    for spec in specs {
        spec.validate()?;
    }
    if let Some(x) = x0 {
        if !x.is_finite() {
            return Err(Error::InvalidConfig("x0 must be finite".into()));
        }
    }

    // Checkpoint grid: every `stride` steps plus the endpoint, ~200 rows.
    let stride = (n_steps / CURVE_POINTS).max(1);
    let mut checks: Vec<u64> = (0..=n_steps / stride).map(|i| i * stride).collect();
    if *checks.last().expect("nonempty") != n_steps {
        checks.push(n_steps);
    }

    let mut out = Vec::with_capacity(specs.len());
    for (si, spec) in specs.iter().enumerate() {
        let sigma2 = spec.sigma * spec.sigma;
        // X + γb(X) with b(x) = −x/σ² + (m/(2σ²)) tanh(mx/(2σ²)) collapses
        // to a1·x + a2·tanh(th·x); the √(2γ) noise makes the diffusion
        // limit target π itself rather than a tempered power of it.
        let a1 = 1.0 - gamma / sigma2;
        let th = spec.m / (2.0 * sigma2);
        let a2 = gamma * th;
        let sn = (2.0 * gamma).sqrt();
        let start = x0.unwrap_or(-0.5 * spec.m);

        let reference = spec.reference()?;
        let half_range = 0.5 * spec.m + 8.0 * spec.sigma;
        let br = BinnedReference::build(&reference, -half_range, half_range, DEFAULT_BINS);
        let mut hist = vec![vec![0u64; DEFAULT_BINS]; checks.len()];

        for r in 0..replicas {
            let mut rg = rng::stream(seed, rng::DOMAIN_MIXTURE, si as u64 * replicas + r);
            let mut x = start;
            hist[0][br.bin_of(x)] += 1;
            let mut ci = 1;
            for k in 1..=n_steps {
                let z: f64 = rg.sample(StandardNormal);
                x = a1 * x + a2 * (th * x).tanh() + sn * z;
                if ci < checks.len() && k == checks[ci] {
                    hist[ci][br.bin_of(x)] += 1;
                    ci += 1;
                }
            }
        }

        let mut curve = Vec::with_capacity(checks.len());
        for (ci, counts) in hist.iter().enumerate() {
            let tv = br.tv(counts, replicas);
            let mut brg = rng::stream(
                seed,
                rng::DOMAIN_BOOTSTRAP,
                1 + (si * checks.len() + ci) as u64,
            );
            let stderr = bootstrap_stderr(counts, replicas, &br, &mut brg);
            curve.push(TvPoint {
                n: checks[ci],
                tv,
                stderr,
            });
        }

        let pairs: Vec<(f64, f64)> = curve.iter().map(|p| (p.n as f64, p.tv)).collect();
        let fit = fit_log_rate(&pairs)?;

        let drift = spec.drift(gamma)?;
        let consts = drift.constants();
        let (m_os, l) = match (consts.one_sided, consts.lipschitz) {
            (Some(m), Some(l)) => (m, l),
            _ => {
                return Err(Error::InsufficientDriftMetadata(
                    "mixture drift must declare one-sided and Lipschitz constants".into(),
                ))
            }
        };
        let rates = if m_os < 0.0 {
            let comp = competitor_log_rates(m_os, 1.0 / (2.0 * sigma2), l, 2.0 * spec.m, None)?;
            Some(MixtureRateSummary {
                measured: gamma.ln() - (-fit.rho_exp.ln()).ln(),
                ours: comp.ours.ln(),
                discrete_tv: comp.discrete_tv.ln(),
                discrete_w2: comp.discrete_w2.ln(),
                rho_exp: fit.rho_exp,
            })
        } else {
            None
        };

        out.push(MixtureExperiment {
            spec: *spec,
            gamma,
            n_steps,
            x0: start,
            replicas,
            curve,
            fit,
            rates,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Bound validation
// ---------------------------------------------------------------------

/// A falsification control: a curve that the empirical cost is expected
/// to *exceed*, demonstrating that the validation harness can detect
/// violations at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSpec {
    /// The certified curve with the coupling rate squared,
    /// `λ^{kγ/4}(D̄₁c₀ + D̄₂) + C̄₁ρ̄₁^{kγ/2}`.
    SquaredRate,
    /// A planted per-step geometric envelope `level·rateᵏ`.
    Geometric { level: f64, rate: f64 },
}

impl ControlSpec {
    /// Evaluate the control curve at step `k`.
    pub fn bound(&self, rc: &RateConstants, gamma: f64, c0: f64, k: u64) -> Result<f64> {
        match *self {
            ControlSpec::SquaredRate => {
                if c0 == 0.0 {
                    return Ok(0.0);
                }
                let quarter = k as f64 * gamma / 4.0;
                let lam_pow = (quarter * rc.lambda.ln()).exp();
                let rho2_pow = (2.0 * quarter * rc.log_rho_bar_1).exp();
                Ok(lam_pow * (rc.d_bar_1 * c0 + rc.d_bar_2) + rc.c_bar_1 * rho2_pow)
            }
            ControlSpec::Geometric { level, rate } => {
                if !(level > 0.0) || !level.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "control level must be positive, got {level}"
                    )));
                }
                if !(rate > 0.0 && rate < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "control rate must lie in (0, 1), got {rate}"
                    )));
                }
                Ok(level * rate.powf(k as f64))
            }
        }
    }
}

/// One grid point of a bound validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub k: usize,
    /// Monte Carlo estimate of `E[1_{X_k ≠ Y_k} 𝒱(X_k, Y_k)]`.
    pub empirical: f64,
    pub stderr: f64,
    /// Certified curve value at `k`.
    pub bound: f64,
    /// Control curve value at `k`, when a control was requested.
    pub control: Option<f64>,
}

/// A grid point where an estimate exceeded a curve by more than three
/// standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
}

/// Outcome of [`validate_bound`]: every check, plus the subsets that
/// violated the certified curve and the control curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Initial pair cost `𝒱(x₀, y₀)` (0 on the diagonal).
    pub c0: f64,
    pub gamma: f64,
    pub replicas: u64,
    pub checks: Vec<BoundCheck>,
    /// Violations of the certified bound — expected to be empty.
    pub violations: Vec<Violation>,
    /// Violations of the control curve — expected to be nonempty for a
    /// falsified control.
    pub control_violations: Vec<Violation>,
}

impl ValidationReport {
    /// Whether the certified bound dominated the estimate everywhere.
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Couple two copies of the chain from `(x0, y0)` by reflection and check
/// the Monte Carlo coupling cost `E[1_{X_k ≠ Y_k} 𝒱(X_k, Y_k)]` against
/// the certified curve `bound_curve(rc, γ, 𝒱(x₀, y₀), k)` every `stride`
/// steps, flagging any point where the estimate exceeds the curve by more
/// than three standard errors.
pub fn validate_bound(
    cfg: &ChainConfig,
    x0: &[f64],
    y0: &[f64],
    cert: &DriftCertificate,
    rc: &RateConstants,
    stride: usize,
    control: Option<ControlSpec>,
) -> Result<ValidationReport> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be positive".into()));
    }
    let grid: Vec<usize> = (1..=cfg.n_steps / stride).map(|j| j * stride).collect();
    if grid.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "stride {stride} leaves no checkpoints within {} steps",
            cfg.n_steps
        )));
    }
    let gamma = cfg.step.gamma;
    let c0 = cert.v.cost(x0, y0);
    let v = cert.v;
    let opts = CoupleOptions {
        retain_pairs: 0,
        eval_grid: grid,
        functional: Some(Arc::new(move |x: &[f64], y: &[f64]| v.cost(x, y))),
    };
    let curve = simulate_coupled(cfg, x0, y0, &opts)?;
    let points = curve.functional.expect("functional was requested");

    let mut checks = Vec::with_capacity(points.len());
    let mut violations = Vec::new();
    let mut control_violations = Vec::new();
    for p in &points {
        let bound = bound_curve(rc, gamma, c0, p.step as u64)?.full;
        let ctrl = match control {
            Some(c) => Some(c.bound(rc, gamma, c0, p.step as u64)?),
            None => None,
        };
        let slack = 3.0 * p.stderr;
        if p.mean > bound + slack {
            violations.push(Violation {
                k: p.step,
                empirical: p.mean,
                stderr: p.stderr,
                bound,
            });
        }
        if let Some(cb) = ctrl {
            if p.mean > cb + slack {
                control_violations.push(Violation {
                    k: p.step,
                    empirical: p.mean,
                    stderr: p.stderr,
                    bound: cb,
                });
            }
        }
        checks.push(BoundCheck {
            k: p.step,
            empirical: p.mean,
            stderr: p.stderr,
            bound,
            control: ctrl,
        });
    }
    Ok(ValidationReport {
        c0,
        gamma,
        replicas: curve.n_replicas,
        checks,
        violations,
        control_violations,
    })
}

// ---------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ProjectionSpec, StepScheme, StepSpec};
    use crate::rates::{full_rate_report, CertificateRoute};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn draw_two_well(n: usize, sigma: f64, m: f64, seed: u64) -> Vec<f64> {
        let mut rg = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let side = if rg.gen::<bool>() { 0.5 } else { -0.5 };
                side * m + sigma * rg.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    /// Independent W₁ oracle: ∫ |F_x(t) − F_y(t)| dt over the merged grid.
    fn w1_cdf_oracle(xs: &[f64], ys: &[f64]) -> f64 {
        let mut grid: Vec<f64> = xs.iter().chain(ys).copied().collect();
        grid.sort_by(f64::total_cmp);
        let mut xs_s = xs.to_vec();
        let mut ys_s = ys.to_vec();
        xs_s.sort_by(f64::total_cmp);
        ys_s.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let cdf = |s: &[f64], t: f64| s.partition_point(|&v| v <= t) as f64 / n;
        grid.windows(2)
            .map(|w| (cdf(&xs_s, w[0]) - cdf(&ys_s, w[0])).abs() * (w[1] - w[0]))
            .sum()
    }

    /// Expected binned TV when the samples come from the reference
    /// itself: Σ E|p̂ᵢ − πᵢ|/2 with the Gaussian mean-absolute-deviation
    /// approximation E|p̂ − π| ≈ √(2π_i(1 − π_i)/(π n)).
    fn predicted_noise_floor(est: &TvEstimate, reference: &NormalMixture) -> f64 {
        let width = (est.hi - est.lo) / est.bins as f64;
        let n = est.n_samples as f64;
        (0..est.bins)
            .map(|i| {
                let a = est.lo + i as f64 * width;
                let pi = reference.mass(a, a + width);
                (2.0 * pi * (1.0 - pi) / (std::f64::consts::PI * n)).sqrt()
            })
            .sum::<f64>()
            * 0.5
    }

    #[test]
    fn w1_matches_sorted_pairing_and_cdf_integral() {
        assert_eq!(estimate_w1_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(estimate_w1_1d(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(estimate_w1_1d(&[3.0, -1.0, 2.0], &[2.0, 3.0, -1.0]).unwrap(), 0.0);

        assert!(matches!(
            estimate_w1_1d(&[], &[]),
            Err(Error::EmptySampleSet)
        ));
        assert!(matches!(
            estimate_w1_1d(&[1.0], &[1.0, 2.0]),
            Err(Error::UnequalSampleCounts(_))
        ));
        assert!(matches!(
            estimate_w1_1d(&[f64::NAN], &[0.0]),
            Err(Error::InvalidConfig(_))
        ));

        let mut rg = StdRng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rg.gen_range(1..200);
            let xs: Vec<f64> = (0..n).map(|_| rg.gen_range(-5.0..5.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rg.gen_range(-5.0..5.0)).collect();
            let direct = estimate_w1_1d(&xs, &ys).unwrap();
            let oracle = w1_cdf_oracle(&xs, &ys);
            assert!(
                (direct - oracle).abs() <= 1e-12,
                "sorted pairing {direct} vs CDF integral {oracle}"
            );
        }
    }

    #[test]
    fn tv_estimator_matches_closed_forms() {
        let reference = NormalMixture::two_well(2.0, 6.0).unwrap();

        // Samples from the reference itself: the estimate sits at the
        // multinomial noise floor (the extra 10% slack absorbs the
        // Gaussian MAD approximation of that floor).
        let same = draw_two_well(200_000, 2.0, 6.0, 1);
        let est = estimate_tv(&same, &reference, 400, 7).unwrap();
        let floor = predicted_noise_floor(&est, &reference);
        assert!(
            (est.tv - floor).abs() <= 3.0 * est.stderr + 0.1 * floor,
            "tv {} vs noise floor {} (stderr {})",
            est.tv,
            floor,
            est.stderr
        );

        // Disjoint supports: everything shifted by 10σ.
        let shifted: Vec<f64> = same.iter().map(|x| x + 20.0).collect();
        let far = estimate_tv(&shifted, &reference, 400, 7).unwrap();
        assert!(far.tv > 0.99, "disjoint TV {}", far.tv);

        // One mode of a far-separated mixture carries half the mass.
        let wide = NormalMixture::two_well(1.0, 12.0).unwrap();
        let mut rg = StdRng::seed_from_u64(2);
        let one_mode: Vec<f64> = (0..50_000)
            .map(|_| -6.0 + rg.sample::<f64, _>(StandardNormal))
            .collect();
        let half = estimate_tv(&one_mode, &wide, 400, 7).unwrap();
        assert!(
            (half.tv - 0.5).abs() < 0.01,
            "single-mode TV {} should be ≈ 1/2",
            half.tv
        );

        assert!(matches!(
            estimate_tv(&same[..999], &reference, 400, 7),
            Err(Error::InsufficientSamples(_))
        ));
        assert!(matches!(
            estimate_tv(&same, &reference, 1, 7),
            Err(Error::InvalidConfig(_))
        ));

        // Deterministic in the seed.
        let again = estimate_tv(&same, &reference, 400, 7).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn rate_fit_recovers_planted_slopes() {
        // Geometric decay over a 10⁻⁴ floor.
        let floored: Vec<(f64, f64)> = (0..100)
            .map(|n| (n as f64, 0.9f64.powi(n) + 1e-4))
            .collect();
        let fit = fit_log_rate(&floored).unwrap();
        assert!(
            (fit.rho_exp - 0.9).abs() < 0.005,
            "rho_exp {} should be 0.9 ± 0.005",
            fit.rho_exp
        );

        // Pure geometric decay truncated before its plateau: the window
        // is tv ∈ [3·median(last 20), 0.5] = n ∈ [69, 80] and the fitted
        // slope is exact.
        let pure: Vec<(f64, f64)> = (0..200).map(|n| (n as f64, 0.99f64.powi(n))).collect();
        let fit = fit_log_rate(&pure).unwrap();
        assert!((fit.rho_exp - 0.99).abs() < 1e-12);
        assert_eq!(fit.window, (69.0, 80.0));
        assert_eq!(fit.n_points, 12);
        assert!(fit.residual < 1e-9);

        // A constant curve has an empty window above 3× its own level.
        let flat: Vec<(f64, f64)> = (0..50).map(|n| (n as f64, 0.3)).collect();
        assert!(matches!(
            fit_log_rate(&flat),
            Err(Error::NoLinearRegime(_))
        ));

        assert!(matches!(
            fit_log_rate(&pure[..19]),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn mixture_experiment_end_to_end_small() {
        let specs = [MixtureSpec { sigma: 2.0, m: 6.0 }];
        let runs = run_mixture_experiment(&specs, 0.1, 600, None, 4000, 11).unwrap();
        assert_eq!(runs.len(), 1);
        let run = &runs[0];
        assert_eq!(run.x0, -3.0);
        assert_eq!(run.curve.len(), 201);
        assert_eq!(run.curve[0].n, 0);
        assert_eq!(run.curve.last().unwrap().n, 600);

        // Point mass at the start, near the plateau at the end.
        assert!(run.curve[0].tv > 0.9);
        assert!(run.curve.last().unwrap().tv < 0.15);
        assert!(run.fit.rho_exp > 0.98 && run.fit.rho_exp < 1.0);

        // Rate table: `ours` is exactly log of the closed-form inverse
        // rate 4θ²(θ² − 1)/(1 − e^{−32θ²(θ²−1)}) with θ = 1.5, and it is
        // the closest entry to the measured log-inverse-rate.
        let rates = run.rates.expect("nonconvex spec has rate rows");
        let th2 = 1.5f64 * 1.5;
        let exact = 4.0 * th2 * (th2 - 1.0) / -(-32.0 * th2 * (th2 - 1.0)).exp_m1();
        assert!((rates.ours - exact.ln()).abs() < 1e-12);
        assert!((rates.measured - 2.91).abs() < 0.5, "measured {}", rates.measured);
        let gap = (rates.ours - rates.measured).abs();
        assert!(gap < (rates.discrete_tv - rates.measured).abs());
        assert!(gap < (rates.discrete_w2 - rates.measured).abs());
        assert_eq!(rates.rho_exp, run.fit.rho_exp);

        // Fixed seed ⇒ byte-identical rerun.
        let again = run_mixture_experiment(&specs, 0.1, 600, None, 4000, 11).unwrap();
        assert_eq!(runs, again);

        // A convex spec still fits a rate but carries no barrier rows.
        let convex = [MixtureSpec { sigma: 2.0, m: 2.0 }];
        let runs = run_mixture_experiment(&convex, 0.1, 400, Some(-1.0), 2000, 3).unwrap();
        assert!(runs[0].rates.is_none());
        assert!(runs[0].fit.rho_exp < 1.0);

        assert!(matches!(
            run_mixture_experiment(&[], 0.1, 100, None, 100, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            run_mixture_experiment(&specs, -0.1, 100, None, 100, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn bound_validation_runs_and_flags_planted_control() {
        let drift = BuiltinDrift::Linear { theta: 1.0 }.instantiate(1, 0.1).unwrap();
        let report = full_rate_report(&drift, 0.5, None, None).unwrap();
        let route = report
            .routes
            .iter()
            .find(|r| r.route == CertificateRoute::Distance)
            .expect("linear drift has a distance route");
        let cert = route.certificate.clone();
        let rc = route.psi_modes[0].constants.clone();

        let cfg = ChainConfig {
            drift,
            step: StepSpec {
                gamma: 0.1,
                scheme: StepScheme::Euler,
            },
            proj: ProjectionSpec::Identity,
            n_steps: 400,
            n_replicas: 2000,
            seed: 5,
        };

        // Diagonal start: both sides identically zero.
        let diag = validate_bound(&cfg, &[1.0], &[1.0], &cert, &rc, 50, None).unwrap();
        assert_eq!(diag.c0, 0.0);
        assert!(diag.passed());
        assert!(diag
            .checks
            .iter()
            .all(|c| c.empirical == 0.0 && c.bound == 0.0 && c.stderr == 0.0));

        // Honest bound: never violated; squared-rate control sits below
        // the certified curve but is still far too large to trip here.
        let rep = validate_bound(
            &cfg,
            &[0.0],
            &[2.0],
            &cert,
            &rc,
            50,
            Some(ControlSpec::SquaredRate),
        )
        .unwrap();
        assert!(rep.c0 > 1.0);
        assert_eq!(rep.checks.len(), 8);
        assert!(rep.passed());
        assert!(rep.first_violation().is_none());
        for c in &rep.checks {
            let ctrl = c.control.unwrap();
            assert!(ctrl.is_finite() && ctrl <= c.bound);
        }

        // A planted fast envelope is caught.
        let planted = validate_bound(
            &cfg,
            &[0.0],
            &[2.0],
            &cert,
            &rc,
            50,
            Some(ControlSpec::Geometric {
                level: 1e-6,
                rate: 0.5,
            }),
        )
        .unwrap();
        assert!(planted.passed());
        assert!(!planted.control_violations.is_empty());

        assert!(matches!(
            validate_bound(&cfg, &[0.0], &[2.0], &cert, &rc, 0, None),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            validate_bound(&cfg, &[0.0], &[2.0], &cert, &rc, 401, None),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn coupling_fraction_dominates_marginal_histogram_tv() {
        // The non-coalesced fraction bounds the TV between the two
        // marginal clouds from above; binning the clouds can only lose
        // mass differences, and the noise bias of a two-sample binned TV
        // at 20k points stays within the added slack.
        let drift = BuiltinDrift::Linear { theta: 1.0 }.instantiate(1, 0.1).unwrap();
        let cfg = ChainConfig {
            drift,
            step: StepSpec {
                gamma: 0.1,
                scheme: StepScheme::Euler,
            },
            proj: ProjectionSpec::Identity,
            n_steps: 15,
            n_replicas: 20_000,
            seed: 9,
        };
        let curve = simulate_coupled(
            &cfg,
            &[0.0],
            &[2.0],
            &CoupleOptions {
                retain_pairs: 20_000,
                ..CoupleOptions::default()
            },
        )
        .unwrap();
        let frac = *curve.non_coalesced.last().unwrap();
        assert!(frac > 0.05 && frac < 1.0, "fraction {frac}");

        let xs: Vec<f64> = curve.terminal_pairs.iter().map(|(x, _)| x[0]).collect();
        let ys: Vec<f64> = curve.terminal_pairs.iter().map(|(_, y)| y[0]).collect();
        let lo = xs.iter().chain(&ys).fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = xs.iter().chain(&ys).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let bins = 60;
        let width = (hi - lo) / bins as f64 + f64::EPSILON;
        let mut px = vec![0.0; bins];
        let mut py = vec![0.0; bins];
        let w = 1.0 / xs.len() as f64;
        for &x in &xs {
            px[(((x - lo) / width) as usize).min(bins - 1)] += w;
        }
        for &y in &ys {
            py[(((y - lo) / width) as usize).min(bins - 1)] += w;
        }
        let hist_tv: f64 = 0.5 * px.iter().zip(&py).map(|(a, b)| (a - b).abs()).sum::<f64>();

        let se = *curve.stderr.last().unwrap();
        assert!(
            hist_tv <= frac + 3.0 * se + 0.03,
            "binned marginal TV {hist_tv} exceeds coupling fraction {frac}"
        );
    }

    #[test]
    fn mixture_spec_and_serde_round_trips() {
        assert!(MixtureSpec { sigma: 0.0, m: 1.0 }.validate().is_err());
        assert!(MixtureSpec { sigma: 1.0, m: -1.0 }.validate().is_err());
        let spec = MixtureSpec { sigma: 2.0, m: 6.0 };
        spec.validate().unwrap();
        assert_eq!(spec.theta(), 1.5);

        let reference = spec.reference().unwrap();
        assert!((reference.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((reference.mass(-1e9, 1e9) - 1.0).abs() < 1e-12);
        assert!(NormalMixture::new(vec![MixtureComponent {
            weight: 0.7,
            mean: 0.0,
            sd: 1.0,
        }])
        .is_err());

        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(spec, serde_json::from_str::<MixtureSpec>(&json).unwrap());

        let ctrl = ControlSpec::Geometric {
            level: 2.0,
            rate: 0.9,
        };
        let json = serde_json::to_string(&ctrl).unwrap();
        assert!(json.contains("geometric"));
        assert_eq!(ctrl, serde_json::from_str::<ControlSpec>(&json).unwrap());

        let fit = RateFit {
            rho_exp: 0.99,
            window: (10.0, 50.0),
            n_points: 12,
            plateau: 0.01,
            residual: 1e-3,
        };
        let json = serde_json::to_string(&fit).unwrap();
        assert_eq!(fit, serde_json::from_str::<RateFit>(&json).unwrap());
    }
}
