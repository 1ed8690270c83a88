//! Chain and coupled-pair transition kernels.
//!
//! The single chain is the (optionally projected) Euler–Maruyama recursion
//!
//! ```text
//!     X_{k+1} = Π( T_γ(X_k) + √γ Z_{k+1} ),       Z_{k+1} ~ N(0, Id).
//! ```
//!
//! Two copies are advanced with the *reflection coupling*: with
//! `E = T_γ(Y_k) − T_γ(X_k)`, `e = E/‖E‖`, and `a = ⟨e, √γ Z⟩`,
//!
//! ```text
//!     X̃ = T_γ(X_k) + √γ Z,
//!     Ỹ = X̃                                    with prob. φ(‖E‖ − a)/φ(a) ∧ 1,
//!     Ỹ = T_γ(Y_k) + (Id − 2ee^⊤)√γ Z          otherwise,
//! ```
//!
//! then both coordinates are projected. The acceptance ratio is evaluated
//! in the log domain, `log p = min(0, (a² − (‖E‖ − a)²)/(2γ))`, so the
//! density ratio never under- or overflows. The merge flag is set exactly
//! when `T_γ(X_k) = T_γ(Y_k)` (exact float equality of the difference) or
//! when the acceptance test `log u < log p` passes — never from numeric
//! collisions after projection — and it is sticky: the diagonal is
//! absorbing bit-exactly.
//!
//! The X-marginal of the coupled transition is by construction the exact
//! single-chain step: both code paths share the same proposal arithmetic.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{DriftFn, DriftSpec, ProjectionSpec, StepScheme, StepSpec};
use crate::special::normal_cdf;
use crate::{cast, par, rng, Error, Real, Result};

/// One inhomogeneous step map `T_k` (same calling convention as a drift).
pub type StepMapFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Pair functional `(x, y) ↦ v` evaluated on non-merged replicas.
pub type PairFunctional = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Everything a replica ensemble needs: problem, horizon, size, seed.
#[derive(Clone)]
pub struct ChainConfig {
    pub drift: DriftSpec,
    pub step: StepSpec,
    pub proj: ProjectionSpec,
    pub n_steps: usize,
    pub n_replicas: u64,
    pub seed: u64,
}

impl ChainConfig {
    pub fn dim(&self) -> usize {
        self.drift.dim
    }

    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        self.proj.validate(self.drift.dim)?;
        self.drift.eval_fn()?;
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
        }
        if self.n_replicas == 0 {
            return Err(Error::InvalidConfig("n_replicas must be at least 1".into()));
        }
        Ok(())
    }
}

/// A coupled pair: two states plus the sticky merge flag.
///
/// Invariant: `coalesced` implies `x == y` componentwise, and once set the
/// flag never reverts.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupleState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub coalesced: bool,
}

impl CoupleState {
    /// Start a pair; the flag is set iff the points are exactly equal.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> CoupleState {
        let coalesced = x == y;
        CoupleState { x, y, coalesced }
    }
}

/// Inhomogeneous driving data: per-step maps `T_k`, noise scales `σ_k`,
/// and declared expansion constants `ϖ_k` with
/// `‖T_k(x) − T_k(y)‖² ≤ (1 + ϖ_k)‖x − y‖²`.
#[derive(Clone)]
pub struct Schedule {
    pub step_maps: Vec<StepMapFn>,
    pub sigmas: Vec<f64>,
    pub warps: Vec<f64>,
    pub proj: ProjectionSpec,
}

impl std::fmt::Debug for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Schedule")
            .field("len", &self.step_maps.len())
            .field("sigmas", &self.sigmas)
            .field("warps", &self.warps)
            .field("proj", &self.proj)
            .finish()
    }
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.step_maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step_maps.is_empty()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.step_maps.is_empty() {
            return Err(Error::InvalidConfig("schedule must be nonempty".into()));
        }
        if self.sigmas.len() != self.step_maps.len() || self.warps.len() != self.step_maps.len() {
            return Err(Error::InvalidConfig(
                "schedule sequences must have equal lengths".into(),
            ));
        }
        if self.sigmas.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "schedule noise scales must be positive".into(),
            ));
        }
        if self.warps.iter().any(|&w| !(1.0 + w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig(
                "schedule warps must satisfy 1 + warp > 0".into(),
            ));
        }
        self.proj.validate(dim)
    }

    /// The homogeneous schedule `(T_γ, √γ, ϖ)` repeated `cfg.n_steps`
    /// times. Its steps reproduce [`coupled_step`] bit-exactly.
    pub fn constant(cfg: &ChainConfig, warp: f64) -> Result<Schedule> {
        cfg.validate()?;
        let drift = cfg.drift.eval_fn()?.clone();
        let scheme = cfg.step.scheme;
        let gamma = cfg.step.gamma;
        let map: StepMapFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
            apply_step_map(&drift, scheme, gamma, x, out);
        });
        Ok(Schedule {
            step_maps: vec![map; cfg.n_steps],
            sigmas: vec![gamma.sqrt(); cfg.n_steps],
            warps: vec![warp; cfg.n_steps],
            proj: cfg.proj.clone(),
        })
    }
}

/// `T_γ(x)` into `out`.
#[inline]
pub(crate) fn apply_step_map(
    drift: &DriftFn,
    scheme: StepScheme,
    gamma: f64,
    x: &[f64],
    out: &mut [f64],
) {
    drift(x, out);
    match scheme {
        StepScheme::Euler => {
            for (o, &xi) in out.iter_mut().zip(x) {
                *o = xi + gamma * *o;
            }
        }
        StepScheme::Tamed => {
            let bnorm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = gamma / (1.0 + gamma * bnorm);
            for (o, &xi) in out.iter_mut().zip(x) {
                *o = xi + scale * *o;
            }
        }
    }
}

/// `out = t + σz`: the unique proposal arithmetic, shared by the single
/// chain and both coupled coordinates so marginals agree bit-exactly.
#[inline]
fn propose(t: &[f64], sigma: f64, z: &[f64], out: &mut [f64]) {
    for ((o, &ti), &zi) in out.iter_mut().zip(t).zip(z) {
        *o = ti + sigma * zi;
    }
}

/// Reflection core on the pre-projection proposals.
///
/// Writes `X̃ = tx + σz` into `x_new` and `Ỹ` (copy of `X̃` on a merge,
/// mirror image otherwise) into `y_new`; returns whether the pair merged
/// via the equality or acceptance branch.
fn reflect_proposals(
    tx: &[f64],
    ty: &[f64],
    sigma: f64,
    z: &[f64],
    u: f64,
    x_new: &mut [f64],
    y_new: &mut [f64],
) -> bool {
    propose(tx, sigma, z, x_new);
    let mut nrm2 = 0.0f64;
    let mut d_max = 0.0f64;
    for (&a, &b) in ty.iter().zip(tx) {
        let d = a - b;
        nrm2 += d * d;
        d_max = d_max.max(d.abs());
    }
    if d_max == 0.0 {
        y_new.copy_from_slice(x_new);
        return true;
    }
    // The squared norm can lose the difference to under-/overflow even
    // when the components are representable; rescale by the largest
    // component in that (rare) case.
    let (e_norm, inv_norm, inv_scale) = if nrm2 > 0.0 && nrm2.is_finite() {
        let n = nrm2.sqrt();
        (n, 1.0 / n, 1.0)
    } else {
        let inv_m = 1.0 / d_max;
        let mut s = 0.0;
        for (&a, &b) in ty.iter().zip(tx) {
            let d = (a - b) * inv_m;
            s += d * d;
        }
        let sn = s.sqrt();
        (d_max * sn, 1.0 / sn, inv_m)
    };
    let mut ez = 0.0;
    for ((&a, &b), &zi) in ty.iter().zip(tx).zip(z) {
        ez += ((a - b) * inv_scale) * zi;
    }
    let a = sigma * ez * inv_norm;
    let gap = e_norm - a;
    let log_p = ((a * a - gap * gap) / (2.0 * sigma * sigma)).min(0.0);
    if u.ln() < log_p {
        y_new.copy_from_slice(x_new);
        return true;
    }
    let two_a = 2.0 * a;
    for (((o, &t), &b), &zi) in y_new.iter_mut().zip(ty).zip(tx).zip(z) {
        let e_i = ((t - b) * inv_scale) * inv_norm;
        *o = t + sigma * zi - two_a * e_i;
    }
    false
}

/// One coupled transition for an arbitrary step map; allocates the state.
fn coupled_transition(
    t_map: impl Fn(&[f64], &mut [f64]),
    sigma: f64,
    proj: &ProjectionSpec,
    s: &CoupleState,
    z: &[f64],
    u: f64,
) -> CoupleState {
    let d = s.x.len();
    if s.coalesced {
        debug_assert_eq!(s.x, s.y, "coalesced state must sit on the diagonal");
        let mut t = vec![0.0; d];
        t_map(&s.x, &mut t);
        let mut xn = vec![0.0; d];
        propose(&t, sigma, z, &mut xn);
        proj.apply_in_place(&mut xn);
        return CoupleState {
            x: xn.clone(),
            y: xn,
            coalesced: true,
        };
    }
    let mut tx = vec![0.0; d];
    let mut ty = vec![0.0; d];
    t_map(&s.x, &mut tx);
    t_map(&s.y, &mut ty);
    let mut xn = vec![0.0; d];
    let mut yn = vec![0.0; d];
    let merged = reflect_proposals(&tx, &ty, sigma, z, u, &mut xn, &mut yn);
    proj.apply_in_place(&mut xn);
    if merged {
        yn.copy_from_slice(&xn);
    } else {
        proj.apply_in_place(&mut yn);
    }
    CoupleState {
        x: xn,
        y: yn,
        coalesced: merged,
    }
}

fn check_dim(dim: usize, v: &[f64], name: &str) -> Result<()> {
    if v.len() == dim {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} has length {}, expected {dim}",
            v.len()
        )))
    }
}

/// One single-chain step `Π(T_γ(x) + √γ z)`.
pub fn em_step(cfg: &ChainConfig, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let d = cfg.dim();
    check_dim(d, x, "x")?;
    check_dim(d, z, "z")?;
    cfg.step.validate()?;
    cfg.proj.validate(d)?;
    let drift = cfg.drift.eval_fn()?;
    let mut t = vec![0.0; d];
    apply_step_map(drift, cfg.step.scheme, cfg.step.gamma, x, &mut t);
    let mut out = vec![0.0; d];
    propose(&t, cfg.step.gamma.sqrt(), z, &mut out);
    cfg.proj.apply_in_place(&mut out);
    Ok(out)
}

/// One reflection-coupled transition; `u` is the acceptance uniform.
///
/// The X-coordinate of the output equals [`em_step`]`(cfg, s.x, z)`
/// bit-exactly, merged or not.
pub fn coupled_step(cfg: &ChainConfig, s: &CoupleState, z: &[f64], u: f64) -> Result<CoupleState> {
    let d = cfg.dim();
    check_dim(d, &s.x, "s.x")?;
    check_dim(d, &s.y, "s.y")?;
    check_dim(d, z, "z")?;
    cfg.step.validate()?;
    cfg.proj.validate(d)?;
    if !(u >= 0.0) {
        return Err(Error::InvalidConfig(
            "acceptance uniform must be nonnegative".into(),
        ));
    }
    let drift = cfg.drift.eval_fn()?;
    let scheme = cfg.step.scheme;
    let gamma = cfg.step.gamma;
    Ok(coupled_transition(
        |x, out| apply_step_map(drift, scheme, gamma, x, out),
        gamma.sqrt(),
        &cfg.proj,
        s,
        z,
        u,
    ))
}

/// The inhomogeneous variant: step `k` (0-based) uses `(T_{k+1}, σ_{k+1})`
/// from the schedule. A constant schedule reproduces [`coupled_step`]
/// bit-exactly.
pub fn coupled_step_schedule(
    s: &CoupleState,
    sched: &Schedule,
    k: usize,
    z: &[f64],
    u: f64,
) -> Result<CoupleState> {
    let d = s.x.len();
    check_dim(d, &s.y, "s.y")?;
    check_dim(d, z, "z")?;
    sched.validate(d)?;
    if k >= sched.len() {
        return Err(Error::InvalidConfig(format!(
            "step index {k} outside schedule of length {}",
            sched.len()
        )));
    }
    if !(u >= 0.0) {
        return Err(Error::InvalidConfig(
            "acceptance uniform must be nonnegative".into(),
        ));
    }
    let map = &sched.step_maps[k];
    Ok(coupled_transition(
        |x, out| map(x, out),
        sched.sigmas[k],
        &sched.proj,
        s,
        z,
        u,
    ))
}

/// Exact probability that one reflection-coupled step merges a pair whose
/// step maps differ by `‖E‖`: `2Φ(−‖E‖/(2√γ))`.
pub fn one_step_coalesce_prob<F: Real>(e_norm: F, gamma: F) -> Result<F> {
    if !(gamma > F::zero()) || !gamma.is_finite() {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    if !(e_norm >= F::zero()) {
        return Err(Error::InvalidConfig(
            "step-map gap must be nonnegative".into(),
        ));
    }
    let two = cast::<F>(2.0);
    Ok(two * normal_cdf(-e_norm / (two * gamma.sqrt())))
}

/// Monte Carlo options for [`simulate_coupled`].
#[derive(Clone, Default)]
pub struct CoupleOptions {
    /// Keep the terminal pair of the first `retain_pairs` replicas.
    pub retain_pairs: usize,
    /// Steps (1-based, strictly increasing) at which to average the
    /// functional over replicas; merged replicas contribute exactly `0`.
    pub eval_grid: Vec<usize>,
    pub functional: Option<PairFunctional>,
}

/// Functional average at one step of the evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalPoint {
    pub step: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Replica-averaged coupling statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingCurve {
    /// `non_coalesced[k]`, `k = 0..=n_steps`: fraction of replicas not yet
    /// merged after `k` steps — an unbiased estimate of the probability
    /// that the coupled pair still disagrees.
    pub non_coalesced: Vec<f64>,
    /// Binomial standard error of each fraction.
    pub stderr: Vec<f64>,
    pub functional: Option<Vec<FunctionalPoint>>,
    pub terminal_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub n_replicas: u64,
}

struct BlockStats {
    /// `hist[k]` counts replicas that merged at step `k`; the last slot
    /// counts replicas that never merged.
    hist: Vec<u64>,
    fsum: Vec<f64>,
    fsq: Vec<f64>,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Run `cfg.n_replicas` independent reflection-coupled chains from
/// `(x0, y0)` and aggregate the merge-time histogram into the
/// non-coalesced fraction curve.
///
/// Replicas are distributed over threads in fixed blocks; each replica
/// owns the random stream keyed by `(seed, replica index)`, so the result
/// is byte-identical regardless of thread count. Per step each replica
/// consumes `dim` standard normals followed by one uniform.
pub fn simulate_coupled(
    cfg: &ChainConfig,
    x0: &[f64],
    y0: &[f64],
    opts: &CoupleOptions,
) -> Result<CouplingCurve> {
    cfg.validate()?;
    let d = cfg.dim();
    check_dim(d, x0, "x0")?;
    check_dim(d, y0, "y0")?;
    for (name, pt) in [("x0", x0), ("y0", y0)] {
        let mut p = pt.to_vec();
        cfg.proj.apply_in_place(&mut p);
        if p != pt {
            return Err(Error::InvalidConfig(format!(
                "{name} lies outside the projection range"
            )));
        }
    }
    let grid = &opts.eval_grid;
    if opts.functional.is_some() {
        if grid.is_empty() {
            return Err(Error::InvalidConfig(
                "functional evaluation needs a nonempty eval_grid".into(),
            ));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "eval_grid must be strictly increasing".into(),
            ));
        }
        if grid[0] == 0 || grid[grid.len() - 1] > cfg.n_steps {
            return Err(Error::InvalidConfig(
                "eval_grid steps must lie in 1..=n_steps".into(),
            ));
        }
    }
    let drift = cfg.drift.eval_fn()?.clone();
    let scheme = cfg.step.scheme;
    let gamma = cfg.step.gamma;
    let sigma = gamma.sqrt();
    let proj = cfg.proj.clone();
    let n_steps = cfg.n_steps;
    let never = n_steps + 1;
    let n_grid = if opts.functional.is_some() {
        grid.len()
    } else {
        0
    };
    let retain = opts.retain_pairs as u64;

    let blocks = par::map_blocks(cfg.n_replicas, par::BLOCK_REPLICAS, |range| {
        let mut out = BlockStats {
            hist: vec![0u64; never + 1],
            fsum: vec![0.0; n_grid],
            fsq: vec![0.0; n_grid],
            pairs: Vec::new(),
        };
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut tx = vec![0.0; d];
        let mut ty = vec![0.0; d];
        let mut xn = vec![0.0; d];
        let mut yn = vec![0.0; d];
        let mut z = vec![0.0; d];
        for r in range {
            let mut rg = rng::stream(cfg.seed, rng::DOMAIN_COUPLE, r);
            x.copy_from_slice(x0);
            y.copy_from_slice(y0);
            let mut coalesced = x == y;
            let mut tau = if coalesced { 0 } else { never };
            let keep = r < retain;
            let mut gi = 0usize;
            if !(coalesced && !keep) {
                for k in 1..=n_steps {
                    for zi in z.iter_mut() {
                        *zi = rg.sample(StandardNormal);
                    }
                    let u: f64 = rg.gen();
                    if coalesced {
                        apply_step_map(&drift, scheme, gamma, &x, &mut tx);
                        propose(&tx, sigma, &z, &mut xn);
                        proj.apply_in_place(&mut xn);
                        x.copy_from_slice(&xn);
                        y.copy_from_slice(&xn);
                    } else {
                        apply_step_map(&drift, scheme, gamma, &x, &mut tx);
                        apply_step_map(&drift, scheme, gamma, &y, &mut ty);
                        let merged = reflect_proposals(&tx, &ty, sigma, &z, u, &mut xn, &mut yn);
                        proj.apply_in_place(&mut xn);
                        if merged {
                            yn.copy_from_slice(&xn);
                        } else {
                            proj.apply_in_place(&mut yn);
                        }
                        std::mem::swap(&mut x, &mut xn);
                        std::mem::swap(&mut y, &mut yn);
                        if merged {
                            coalesced = true;
                            tau = k;
                        }
                    }
                    if let Some(f) = &opts.functional {
                        while gi < grid.len() && grid[gi] == k {
                            if !coalesced {
                                let v = f(&x, &y);
                                out.fsum[gi] += v;
                                out.fsq[gi] += v * v;
                            }
                            gi += 1;
                        }
                    }
                    // Merged replicas stay on the diagonal and contribute
                    // zero to every later grid point; stop early unless
                    // the terminal pair is kept.
                    if coalesced && !keep {
                        break;
                    }
                }
            }
            out.hist[tau] += 1;
            if keep {
                out.pairs.push((x.clone(), y.clone()));
            }
        }
        out
    });

    let n = cfg.n_replicas as f64;
    let mut hist = vec![0u64; never + 1];
    let mut fsum = vec![0.0; n_grid];
    let mut fsq = vec![0.0; n_grid];
    let mut pairs = Vec::with_capacity(opts.retain_pairs.min(cfg.n_replicas as usize));
    for b in blocks {
        for (h, bh) in hist.iter_mut().zip(&b.hist) {
            *h += bh;
        }
        for (s, bs) in fsum.iter_mut().zip(&b.fsum) {
            *s += bs;
        }
        for (s, bs) in fsq.iter_mut().zip(&b.fsq) {
            *s += bs;
        }
        pairs.extend(b.pairs);
    }

    let mut non_coalesced = Vec::with_capacity(never);
    let mut stderr = Vec::with_capacity(never);
    let mut remaining = cfg.n_replicas;
    for h in hist.iter().take(never) {
        remaining -= h;
        let p = remaining as f64 / n;
        non_coalesced.push(p);
        stderr.push((p * (1.0 - p) / n).sqrt());
    }

    let functional = opts.functional.as_ref().map(|_| {
        grid.iter()
            .zip(fsum.iter().zip(&fsq))
            .map(|(&step, (&s, &sq))| {
                let mean = s / n;
                let var = if cfg.n_replicas > 1 {
                    ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                FunctionalPoint {
                    step,
                    mean,
                    stderr: (var / n).sqrt(),
                }
            })
            .collect()
    });

    Ok(CouplingCurve {
        non_coalesced,
        stderr,
        functional,
        terminal_pairs: pairs,
        n_replicas: cfg.n_replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BuiltinDrift, DriftConstants};
    use rand::SeedableRng;

    fn zero_drift(dim: usize) -> DriftSpec {
        let eval: DriftFn = Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0));
        DriftSpec::from_parts(
            dim,
            Some(eval),
            DriftConstants {
                lipschitz: Some(0.0),
                one_sided: Some(0.0),
                ..DriftConstants::default()
            },
            None,
        )
        .unwrap()
    }

    fn cfg_with(drift: DriftSpec, gamma: f64, proj: ProjectionSpec) -> ChainConfig {
        ChainConfig {
            drift,
            step: StepSpec {
                gamma,
                scheme: StepScheme::Euler,
            },
            proj,
            n_steps: 1,
            n_replicas: 1,
            seed: 7,
        }
    }

    #[test]
    fn em_step_examples() {
        let cfg = cfg_with(zero_drift(2), 1.0, ProjectionSpec::Identity);
        assert_eq!(em_step(&cfg, &[0.0, 0.0], &[1.0, 0.0]).unwrap(), [1.0, 0.0]);

        let cfg = cfg_with(
            BuiltinDrift::Linear { theta: 1.0 }.instantiate(1, 0.1).unwrap(),
            0.1,
            ProjectionSpec::Identity,
        );
        assert!((em_step(&cfg, &[1.0], &[0.0]).unwrap()[0] - 0.9).abs() < 1e-15);

        let cfg = cfg_with(zero_drift(2), 1.0, ProjectionSpec::Ball { radius: 1.0 });
        let out = em_step(&cfg, &[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn coalesced_input_is_absorbing_and_matches_em_step() {
        let cfg = cfg_with(
            BuiltinDrift::Linear { theta: 0.5 }.instantiate(3, 0.2).unwrap(),
            0.2,
            ProjectionSpec::Ball { radius: 2.0 },
        );
        let s = CoupleState::new(vec![1.0, -0.5, 0.25], vec![1.0, -0.5, 0.25]);
        assert!(s.coalesced);
        let z = [0.3, -1.2, 0.8];
        let out = coupled_step(&cfg, &s, &z, 0.5).unwrap();
        let marginal = em_step(&cfg, &s.x, &z).unwrap();
        assert!(out.coalesced);
        assert_eq!(out.x, marginal);
        assert_eq!(out.y, marginal);
    }

    #[test]
    fn forced_reject_mirrors_and_leaves_flag_unset() {
        // b ≡ 0, γ = 1, x = 0, y = 2, z = 1: the mirror lands exactly on
        // X̃ = 1, but the merge flag follows the acceptance rule, not
        // numeric equality.
        let cfg = cfg_with(zero_drift(1), 1.0, ProjectionSpec::Identity);
        let s = CoupleState::new(vec![0.0], vec![2.0]);
        let out = coupled_step(&cfg, &s, &[1.0], 1.0).unwrap();
        assert_eq!(out.x, vec![1.0]);
        assert_eq!(out.y, vec![1.0]);
        assert!(!out.coalesced);
        // Tiny uniform forces the accept branch at the same inputs.
        let out = coupled_step(&cfg, &s, &[1.0], 1e-300).unwrap();
        assert!(out.coalesced);
        assert_eq!(out.x, out.y);
    }

    #[test]
    fn x_marginal_is_bit_exact_for_both_branches() {
        let cfg = cfg_with(
            BuiltinDrift::Linear { theta: 1.0 }.instantiate(2, 0.1).unwrap(),
            0.1,
            ProjectionSpec::Ball { radius: 3.0 },
        );
        let mut rg = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut accepts = 0;
        for _ in 0..500 {
            let x: Vec<f64> = (0..2).map(|_| rg.gen_range(-2.0..2.0)).collect();
            // Keep the pair within noise range so both branches fire often.
            let y: Vec<f64> = x.iter().map(|&v| v + rg.gen_range(-0.7..0.7)).collect();
            let z: Vec<f64> = (0..2).map(|_| rg.sample(StandardNormal)).collect();
            let u: f64 = rg.gen();
            let s = CoupleState::new(x.clone(), y);
            let out = coupled_step(&cfg, &s, &z, u).unwrap();
            assert_eq!(out.x, em_step(&cfg, &x, &z).unwrap());
            accepts += out.coalesced as u32;
        }
        assert!(accepts > 50, "both branches must be exercised: {accepts}");
        assert!(accepts < 450, "both branches must be exercised: {accepts}");
    }

    #[test]
    fn mirror_is_an_isometry() {
        let mut rg = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..4).map(|_| rg.sample(StandardNormal)).collect();
            let mut e: Vec<f64> = (0..4).map(|_| rg.sample(StandardNormal)).collect();
            let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in e.iter_mut() {
                *v /= en;
            }
            let ez: f64 = e.iter().zip(&z).map(|(a, b)| a * b).sum();
            let mirrored: Vec<f64> = z.iter().zip(&e).map(|(&zi, &ei)| zi - 2.0 * ez * ei).collect();
            let n0 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n1 = mirrored.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n1 - n0).abs() <= 4.0 * f64::EPSILON * n0);
        }
    }

    #[test]
    fn one_step_coalesce_prob_examples() {
        assert_eq!(one_step_coalesce_prob(0.0, 1.0).unwrap(), 1.0);
        let p = one_step_coalesce_prob(2.0f64, 1.0).unwrap();
        assert!((p - 0.317_310_507_862_914_1).abs() < 1e-13);
        assert_eq!(one_step_coalesce_prob(1e6, 1.0).unwrap(), 0.0);
        assert!(one_step_coalesce_prob(-1.0, 1.0).is_err());
        assert!(one_step_coalesce_prob(1.0, 0.0).is_err());
        // f32 instantiation.
        let p32 = one_step_coalesce_prob(2.0f32, 1.0f32).unwrap();
        assert!((p32 - 0.317_31f32).abs() < 1e-4);
    }

    #[test]
    fn empirical_accept_rate_matches_formula() {
        // b ≡ 0 so ‖E‖ = ‖x − y‖ exactly; one step, many replicas.
        let mut cfg = cfg_with(zero_drift(2), 0.04, ProjectionSpec::Identity);
        cfg.n_replicas = 100_000;
        let curve = simulate_coupled(&cfg, &[0.0, 0.0], &[0.3, 0.4], &CoupleOptions::default())
            .unwrap();
        let p = 1.0 - curve.non_coalesced[1];
        let expect = one_step_coalesce_prob(0.5f64, 0.04).unwrap();
        let se = (expect * (1.0 - expect) / 1e5).sqrt();
        assert!(
            (p - expect).abs() <= 5.0 * se,
            "empirical {p} vs exact {expect} (se {se})"
        );
    }

    #[test]
    fn constant_schedule_reproduces_homogeneous_kernel_bit_exactly() {
        let mut cfg = cfg_with(
            BuiltinDrift::Linear { theta: 1.0 }.instantiate(2, 0.1).unwrap(),
            0.1,
            ProjectionSpec::Ball { radius: 5.0 },
        );
        cfg.n_steps = 30;
        let sched = Schedule::constant(&cfg, -0.19).unwrap();
        assert_eq!(sched.len(), 30);
        let mut rg = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut a = CoupleState::new(vec![0.5, 0.0], vec![0.0, 0.4]);
        let mut b = a.clone();
        let mut merged_seen = false;
        for k in 0..cfg.n_steps {
            let z: Vec<f64> = (0..2).map(|_| rg.sample(StandardNormal)).collect();
            let u: f64 = rg.gen();
            a = coupled_step(&cfg, &a, &z, u).unwrap();
            b = coupled_step_schedule(&b, &sched, k, &z, u).unwrap();
            assert_eq!(a, b, "diverged at step {k}");
            merged_seen |= a.coalesced;
        }
        assert!(merged_seen, "walk should merge within 30 steps");
    }

    #[test]
    fn schedule_validation_rejects_malformed_inputs() {
        let map: StepMapFn = Arc::new(|x: &[f64], out: &mut [f64]| out.copy_from_slice(x));
        let good = Schedule {
            step_maps: vec![map.clone(), map.clone()],
            sigmas: vec![1.0, 2.0],
            warps: vec![0.0, -0.5],
            proj: ProjectionSpec::Identity,
        };
        good.validate(1).unwrap();
        let mut bad = good.clone();
        bad.sigmas = vec![1.0];
        assert!(bad.validate(1).is_err());
        let mut bad = good.clone();
        bad.sigmas = vec![1.0, 0.0];
        assert!(bad.validate(1).is_err());
        let mut bad = good.clone();
        bad.warps = vec![0.0, -1.0];
        assert!(bad.validate(1).is_err());
        let s = CoupleState::new(vec![0.0], vec![1.0]);
        assert!(coupled_step_schedule(&s, &good, 2, &[0.0], 0.5).is_err());
    }

    #[test]
    fn simulate_equal_starts_never_separate() {
        let mut cfg = cfg_with(zero_drift(1), 0.5, ProjectionSpec::Identity);
        cfg.n_steps = 5;
        cfg.n_replicas = 64;
        let opts = CoupleOptions {
            retain_pairs: 64,
            ..CoupleOptions::default()
        };
        let curve = simulate_coupled(&cfg, &[1.0], &[1.0], &opts).unwrap();
        assert!(curve.non_coalesced.iter().all(|&f| f == 0.0));
        assert_eq!(curve.terminal_pairs.len(), 64);
        for (x, y) in &curve.terminal_pairs {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn simulate_one_step_fraction_matches_oracle() {
        let mut cfg = cfg_with(zero_drift(1), 1.0, ProjectionSpec::Identity);
        cfg.n_replicas = 20_000;
        let curve = simulate_coupled(&cfg, &[0.0], &[2.0], &CoupleOptions::default()).unwrap();
        assert_eq!(curve.non_coalesced[0], 1.0);
        let expect = 1.0 - 0.317_310_507_862_914_1;
        assert!(
            (curve.non_coalesced[1] - expect).abs() <= 5.0 * curve.stderr[1].max(1e-4),
            "{} vs {expect}",
            curve.non_coalesced[1]
        );
    }

    #[test]
    fn simulate_is_monotone_and_deterministic() {
        let mut cfg = cfg_with(
            BuiltinDrift::Linear { theta: 1.0 }.instantiate(1, 0.1).unwrap(),
            0.1,
            ProjectionSpec::Identity,
        );
        cfg.n_steps = 20;
        cfg.n_replicas = 3000;
        let a = simulate_coupled(&cfg, &[0.0], &[2.0], &CoupleOptions::default()).unwrap();
        let b = simulate_coupled(&cfg, &[0.0], &[2.0], &CoupleOptions::default()).unwrap();
        assert_eq!(a, b);
        for w in a.non_coalesced.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(a.non_coalesced[20] < 1.0);
    }

    #[test]
    fn functional_indicator_reproduces_fraction_exactly() {
        let mut cfg = cfg_with(
            BuiltinDrift::Linear { theta: 1.0 }.instantiate(1, 0.1).unwrap(),
            0.1,
            ProjectionSpec::Identity,
        );
        cfg.n_steps = 12;
        cfg.n_replicas = 2000;
        let opts = CoupleOptions {
            retain_pairs: 0,
            eval_grid: vec![1, 4, 12],
            functional: Some(Arc::new(|_x: &[f64], _y: &[f64]| 1.0)),
        };
        let curve = simulate_coupled(&cfg, &[0.0], &[1.5], &opts).unwrap();
        let pts = curve.functional.unwrap();
        assert_eq!(pts.len(), 3);
        for p in &pts {
            assert_eq!(p.mean, curve.non_coalesced[p.step]);
        }
    }

    #[test]
    fn simulate_rejects_bad_inputs() {
        let cfg = cfg_with(zero_drift(2), 1.0, ProjectionSpec::Ball { radius: 1.0 });
        let err = simulate_coupled(&cfg, &[2.0, 0.0], &[0.0, 0.0], &CoupleOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("projection range"));
        let opts = CoupleOptions {
            retain_pairs: 0,
            eval_grid: vec![0],
            functional: Some(Arc::new(|_: &[f64], _: &[f64]| 0.0)),
        };
        assert!(simulate_coupled(&cfg, &[0.0, 0.0], &[0.5, 0.0], &opts).is_err());
        let opts = CoupleOptions {
            retain_pairs: 0,
            eval_grid: vec![2, 2],
            functional: Some(Arc::new(|_: &[f64], _: &[f64]| 0.0)),
        };
        assert!(simulate_coupled(&cfg, &[0.0, 0.0], &[0.5, 0.0], &opts).is_err());
    }
}
