//! Problem description: drift functions, their declared regularity and
//! curvature constants, projections, and step maps.
//!
//! A [`DriftSpec`] bundles an optional evaluation closure with the
//! constants the closed-form bounds consume:
//!
//! * `lipschitz` — `L` with `‖b(x) − b(y)‖ ≤ L‖x − y‖` and `b(0) = 0`;
//! * `one_sided` — `m` with `⟨b(x) − b(y), x − y⟩ ≤ −m‖x − y‖²`
//!   (`m > 0` strongly monotone, `m < 0` semi-monotone);
//! * `cocoercivity` — `m_b` with
//!   `⟨b(x) − b(y), x − y⟩ ≤ −m_b‖b(x) − b(y)‖²`;
//! * `conv_inf` — `(m₁⁺, R₁)`: strong monotonicity of modulus `m₁⁺` for
//!   pairs with `‖x − y‖ ≥ R₁`;
//! * `radial` — `(m₂⁺, R₂)`: `⟨b(x), x⟩ ≤ −m₂⁺‖x‖²` outside `B(0, R₂)`;
//! * `weak` — `(k₁, k₂, a, R₃)`:
//!   `⟨b(x), x⟩ ≤ −k₁‖x‖·1_{‖x‖>R₃} − k₂‖b(x)‖² + a/2`;
//! * `tamed_meta` — `(L̃, ℓ̃, M_ℓ̃)` for locally Lipschitz drifts:
//!   `‖b(x) − b(y)‖ ≤ L̃(1 + ‖x‖^ℓ̃ + ‖y‖^ℓ̃)‖x − y‖` together with
//!   `M_ℓ̃ = sup_x (1 + ‖x‖^ℓ̃)/(1 + ‖b(x)‖)`.
//!
//! [`classify_kappa`] turns the declared constants and a step scheme into
//! the one-step regularity profile `κ(γ)` of the step map, i.e. the
//! smallest declared function with
//! `‖T_γ(x) − T_γ(y)‖² ≤ (1 + γκ(γ))‖x − y‖²`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Drift evaluation: writes `b(x)` into the output slice.
pub type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Strong monotonicity of modulus `m_plus` for pairs at distance `≥ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexityAtInfinity {
    pub m_plus: f64,
    pub radius: f64,
}

/// Radial confinement `⟨b(x), x⟩ ≤ −m_plus‖x‖²` outside `B(0, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialConfinement {
    pub m_plus: f64,
    pub radius: f64,
}

/// Weak dissipativity
/// `⟨b(x), x⟩ ≤ −k1‖x‖·1_{‖x‖>radius} − k2‖b(x)‖² + a/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakDissipativity {
    pub k1: f64,
    pub k2: f64,
    pub a: f64,
    pub radius: f64,
}

/// Local Lipschitz growth constants for tamed schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamedMeta {
    /// `L̃` in `‖b(x) − b(y)‖ ≤ L̃(1 + ‖x‖^ℓ̃ + ‖y‖^ℓ̃)‖x − y‖`.
    pub l_tilde: f64,
    /// The growth exponent `ℓ̃`.
    pub ell_tilde: f64,
    /// `M_ℓ̃ = sup_x (1 + ‖x‖^ℓ̃)/(1 + ‖b(x)‖)` (always `≥ 1`).
    pub m_ell: f64,
}

/// Declared drift constants, in the serialized layout.
///
/// Every field is optional; when a builtin drift is combined with a
/// constants block, explicitly set fields override the builtin defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConstants {
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(rename = "m", skip_serializing_if = "Option::is_none")]
    pub one_sided: Option<f64>,
    #[serde(rename = "m_b", skip_serializing_if = "Option::is_none")]
    pub cocoercivity: Option<f64>,
    #[serde(rename = "c1", skip_serializing_if = "Option::is_none")]
    pub conv_inf: Option<ConvexityAtInfinity>,
    #[serde(rename = "c2", skip_serializing_if = "Option::is_none")]
    pub radial: Option<RadialConfinement>,
    #[serde(rename = "c3", skip_serializing_if = "Option::is_none")]
    pub weak: Option<WeakDissipativity>,
}

impl DriftConstants {
    /// Overlay `overrides` on `self`, field by field.
    pub fn merged_with(&self, overrides: &DriftConstants) -> DriftConstants {
        DriftConstants {
            lipschitz: overrides.lipschitz.or(self.lipschitz),
            one_sided: overrides.one_sided.or(self.one_sided),
            cocoercivity: overrides.cocoercivity.or(self.cocoercivity),
            conv_inf: overrides.conv_inf.or(self.conv_inf),
            radial: overrides.radial.or(self.radial),
            weak: overrides.weak.or(self.weak),
        }
    }
}

/// A drift together with its declared constants.
#[derive(Clone)]
pub struct DriftSpec {
    pub dim: usize,
    eval_fn: Option<DriftFn>,
    pub lipschitz: f64,
    pub one_sided: f64,
    pub cocoercivity: Option<f64>,
    pub conv_inf: Option<ConvexityAtInfinity>,
    pub radial: Option<RadialConfinement>,
    pub weak: Option<WeakDissipativity>,
    pub tamed_meta: Option<TamedMeta>,
}

impl std::fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftSpec")
            .field("dim", &self.dim)
            .field("eval_fn", &self.eval_fn.as_ref().map(|_| "<fn>"))
            .field("lipschitz", &self.lipschitz)
            .field("one_sided", &self.one_sided)
            .field("cocoercivity", &self.cocoercivity)
            .field("conv_inf", &self.conv_inf)
            .field("radial", &self.radial)
            .field("weak", &self.weak)
            .field("tamed_meta", &self.tamed_meta)
            .finish()
    }
}

fn require_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be finite")))
    }
}

impl DriftSpec {
    /// Assemble and validate a drift specification.
    ///
    /// `lipschitz` and `one_sided` are mandatory; the optional blocks in
    /// `constants` are validated for sign and range, and when an
    /// evaluation closure is supplied, `b(0) = 0` is checked exactly.
    pub fn from_parts(
        dim: usize,
        eval_fn: Option<DriftFn>,
        constants: DriftConstants,
        tamed_meta: Option<TamedMeta>,
    ) -> Result<DriftSpec> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        let lipschitz = constants.lipschitz.ok_or_else(|| {
            Error::InsufficientDriftMetadata("Lipschitz constant L is required".into())
        })?;
        let one_sided = constants.one_sided.ok_or_else(|| {
            Error::InsufficientDriftMetadata("one-sided constant m is required".into())
        })?;
        require_finite("L", lipschitz)?;
        require_finite("m", one_sided)?;
        if lipschitz < 0.0 {
            return Err(Error::InvalidConfig("L must be nonnegative".into()));
        }
        if one_sided < -lipschitz || one_sided > lipschitz {
            return Err(Error::InvalidConfig(format!(
                "one-sided constant m = {one_sided} must lie in [-L, L] = [{}, {}]",
                -lipschitz, lipschitz
            )));
        }
        if let Some(mb) = constants.cocoercivity {
            require_finite("m_b", mb)?;
            if mb <= 0.0 {
                return Err(Error::InvalidConfig("m_b must be positive".into()));
            }
        }
        if let Some(c1) = constants.conv_inf {
            require_finite("c1.m_plus", c1.m_plus)?;
            require_finite("c1.radius", c1.radius)?;
            if c1.m_plus <= 0.0 || c1.radius <= 0.0 {
                return Err(Error::InvalidConfig(
                    "c1 requires m_plus > 0 and radius > 0".into(),
                ));
            }
        }
        if let Some(c2) = constants.radial {
            require_finite("c2.m_plus", c2.m_plus)?;
            require_finite("c2.radius", c2.radius)?;
            if c2.m_plus <= 0.0 || c2.radius < 0.0 {
                return Err(Error::InvalidConfig(
                    "c2 requires m_plus > 0 and radius >= 0".into(),
                ));
            }
        }
        if let Some(c3) = constants.weak {
            for (name, v) in [
                ("c3.k1", c3.k1),
                ("c3.k2", c3.k2),
                ("c3.a", c3.a),
                ("c3.radius", c3.radius),
            ] {
                require_finite(name, v)?;
            }
            if c3.k1 <= 0.0 || c3.k2 <= 0.0 || c3.a < 0.0 || c3.radius < 0.0 {
                return Err(Error::InvalidConfig(
                    "c3 requires k1, k2 > 0 and a, radius >= 0".into(),
                ));
            }
        }
        if let Some(t2) = tamed_meta {
            for (name, v) in [
                ("t2.l_tilde", t2.l_tilde),
                ("t2.ell_tilde", t2.ell_tilde),
                ("t2.m_ell", t2.m_ell),
            ] {
                require_finite(name, v)?;
            }
            if t2.l_tilde < 0.0 || t2.ell_tilde < 0.0 || t2.m_ell < 1.0 {
                return Err(Error::InvalidConfig(
                    "t2 requires l_tilde, ell_tilde >= 0 and m_ell >= 1".into(),
                ));
            }
        }
        if let Some(f) = &eval_fn {
            let zero = vec![0.0; dim];
            let mut out = vec![f64::NAN; dim];
            f(&zero, &mut out);
            if out.iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidConfig(
                    "drift must vanish at the origin: b(0) != 0".into(),
                ));
            }
        }
        Ok(DriftSpec {
            dim,
            eval_fn,
            lipschitz,
            one_sided,
            cocoercivity: constants.cocoercivity,
            conv_inf: constants.conv_inf,
            radial: constants.radial,
            weak: constants.weak,
            tamed_meta,
        })
    }

    /// The evaluation closure, or an error for constants-only specs.
    pub fn eval_fn(&self) -> Result<&DriftFn> {
        self.eval_fn.as_ref().ok_or_else(|| {
            Error::InsufficientDriftMetadata(
                "drift has no evaluation function; simulation requires one".into(),
            )
        })
    }

    /// Evaluate `b(x)` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        (self.eval_fn()?)(x, out);
        Ok(())
    }

    /// The declared constants block (for serialization and reports).
    pub fn constants(&self) -> DriftConstants {
        DriftConstants {
            lipschitz: Some(self.lipschitz),
            one_sided: Some(self.one_sided),
            cocoercivity: self.cocoercivity,
            conv_inf: self.conv_inf,
            radial: self.radial,
            weak: self.weak,
        }
    }
}

/// Damping applied to the double-well drift to make it globally Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WellDamping {
    /// `b/(1 + ‖b‖)`: stepsize-free taming of the drift itself.
    Tame,
    /// Cutoff blending: untouched on `B(0, n)`, tamed by `γ^alpha‖b‖`
    /// far away (`alpha < 1/2`).
    Cutoff { n: u32, alpha: f64 },
}

impl Default for WellDamping {
    fn default() -> Self {
        WellDamping::Tame
    }
}

/// Built-in drift families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BuiltinDrift {
    /// `b(x) = −θx`, `θ > 0`.
    Linear { theta: f64 },
    /// Gradient flow of the two-component Gaussian mixture
    /// `½N(−m/2, σ²) + ½N(m/2, σ²)` in centred coordinates (`d = 1`):
    /// `b(x) = −x/σ² + (m/(2σ²)) tanh(mx/(2σ²))`.
    GaussianMixture { sigma: f64, m: f64 },
    /// Damped double well `b_raw(x) = x(1 − ‖x‖²)`.
    DoubleWell {
        #[serde(default)]
        damping: WellDamping,
    },
}

impl BuiltinDrift {
    /// Instantiate at dimension `dim`; `gamma` is only read by
    /// stepsize-dependent dampings.
    pub fn instantiate(&self, dim: usize, gamma: f64) -> Result<DriftSpec> {
        match *self {
            BuiltinDrift::Linear { theta } => {
                if !(theta > 0.0) || !theta.is_finite() {
                    return Err(Error::InvalidConfig(
                        "linear drift requires theta > 0".into(),
                    ));
                }
                let eval: DriftFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
                    for (o, &xi) in out.iter_mut().zip(x) {
                        *o = -theta * xi;
                    }
                });
                DriftSpec::from_parts(
                    dim,
                    Some(eval),
                    DriftConstants {
                        lipschitz: Some(theta),
                        one_sided: Some(theta),
                        cocoercivity: Some(1.0 / theta),
                        conv_inf: Some(ConvexityAtInfinity {
                            m_plus: theta,
                            radius: 1.0,
                        }),
                        radial: Some(RadialConfinement {
                            m_plus: theta,
                            radius: 0.0,
                        }),
                        weak: Some(WeakDissipativity {
                            k1: theta / 2.0,
                            k2: 1.0 / (2.0 * theta),
                            a: 0.0,
                            radius: 1.0,
                        }),
                    },
                    None,
                )
            }
            BuiltinDrift::GaussianMixture { sigma, m } => {
                if dim != 1 {
                    return Err(Error::InvalidConfig(
                        "gaussian-mixture drift is one-dimensional".into(),
                    ));
                }
                if !(sigma > 0.0) || !(m >= 0.0) || !sigma.is_finite() || !m.is_finite() {
                    return Err(Error::InvalidConfig(
                        "gaussian-mixture requires sigma > 0 and m >= 0".into(),
                    ));
                }
                let s2 = sigma * sigma;
                let eval: DriftFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
                    out[0] = -x[0] / s2 + m / (2.0 * s2) * (m * x[0] / (2.0 * s2)).tanh();
                });
                let theta = m / (2.0 * sigma);
                let lipschitz = (theta * theta - 1.0).max(1.0) / s2;
                let one_sided = (1.0 - theta * theta) / s2;
                // Convex (θ ≤ 1) plus L-smooth gives 1/L-cocoercivity.
                let cocoercivity = (theta <= 1.0).then_some(1.0 / lipschitz);
                DriftSpec::from_parts(
                    dim,
                    Some(eval),
                    DriftConstants {
                        lipschitz: Some(lipschitz),
                        one_sided: Some(one_sided),
                        cocoercivity,
                        conv_inf: Some(ConvexityAtInfinity {
                            m_plus: 1.0 / (2.0 * s2),
                            radius: if m > 0.0 { 2.0 * m } else { 1.0 },
                        }),
                        radial: Some(RadialConfinement {
                            m_plus: 1.0 / (2.0 * s2),
                            radius: m,
                        }),
                        weak: None,
                    },
                    None,
                )
            }
            BuiltinDrift::DoubleWell { damping } => match damping {
                WellDamping::Tame => {
                    let eval: DriftFn = Arc::new(|x: &[f64], out: &mut [f64]| {
                        let nrm2: f64 = x.iter().map(|v| v * v).sum();
                        let factor = 1.0 - nrm2;
                        let mut raw_nrm2 = 0.0;
                        for (o, &xi) in out.iter_mut().zip(x) {
                            *o = xi * factor;
                            raw_nrm2 += *o * *o;
                        }
                        let scale = 1.0 / (1.0 + raw_nrm2.sqrt());
                        for o in out.iter_mut() {
                            *o *= scale;
                        }
                    });
                    DriftSpec::from_parts(
                        dim,
                        Some(eval),
                        DriftConstants {
                            lipschitz: Some(8.0),
                            one_sided: Some(-8.0),
                            cocoercivity: None,
                            conv_inf: None,
                            radial: None,
                            weak: Some(WeakDissipativity {
                                k1: 6.0 / 7.0,
                                k2: 0.5,
                                a: 1.0,
                                radius: 2.0,
                            }),
                        },
                        None,
                    )
                }
                WellDamping::Cutoff { n, alpha } => {
                    let raw: DriftFn = Arc::new(|x: &[f64], out: &mut [f64]| {
                        let nrm2: f64 = x.iter().map(|v| v * v).sum();
                        let factor = 1.0 - nrm2;
                        for (o, &xi) in out.iter_mut().zip(x) {
                            *o = xi * factor;
                        }
                    });
                    let eval = build_approx_drift(raw, gamma, n, alpha)?;
                    let nf = f64::from(n) + 2.0;
                    let lipschitz = nf.powi(3) + 4.0 * nf * nf + 9.0;
                    DriftSpec::from_parts(
                        dim,
                        Some(eval),
                        DriftConstants {
                            lipschitz: Some(lipschitz),
                            one_sided: Some(-lipschitz),
                            cocoercivity: None,
                            conv_inf: None,
                            radial: None,
                            weak: None,
                        },
                        None,
                    )
                }
            },
        }
    }
}

/// Cutoff-damped approximation of an unbounded drift.
///
/// Returns
///
/// ```text
///     b_{γ,n}(x) = φ_n(x) b(x) + (1 − φ_n(x)) b(x)/(1 + γ^α ‖b(x)‖),
///     φ_n(x)     = clamp(n + 1 − ‖x‖, 0, 1),
/// ```
///
/// which agrees with `b` exactly on `B̄(0, n)` and everywhere satisfies
/// `‖b − b_{γ,n}‖ ≤ γ^α‖b‖²/(1 + γ^α‖b‖)`. Requires `α ∈ (0, 1/2)`: for
/// larger exponents the damping is too weak for the discretization error
/// of the scheme to stay controlled as `γ → 0`.
pub fn build_approx_drift(base: DriftFn, gamma: f64, n: u32, alpha: f64) -> Result<DriftFn> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidTaming(format!(
            "alpha = {alpha} must lie in (0, 1/2)"
        )));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    let gamma_alpha = gamma.powf(alpha);
    let nf = f64::from(n);
    Ok(Arc::new(move |x: &[f64], out: &mut [f64]| {
        base(x, out);
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let phi = (nf + 1.0 - xnorm).clamp(0.0, 1.0);
        if phi < 1.0 {
            let bnorm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            let blend = phi + (1.0 - phi) / (1.0 + gamma_alpha * bnorm);
            for o in out.iter_mut() {
                *o *= blend;
            }
        }
    }))
}

/// Non-expansive projections onto closed convex sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProjectionSpec {
    /// No constraint (`Π = Id`).
    Identity,
    /// Euclidean ball `B̄(0, radius)`.
    Ball { radius: f64 },
    /// Axis-aligned box `[lower_i, upper_i]` per coordinate.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Half-space `{x : ⟨normal, x⟩ ≤ offset}`.
    Halfspace { normal: Vec<f64>, offset: f64 },
}

impl ProjectionSpec {
    /// Check shape and parameter validity at dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ProjectionSpec::Identity => Ok(()),
            ProjectionSpec::Ball { radius } => {
                if *radius > 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(
                        "ball projection requires radius > 0".into(),
                    ))
                }
            }
            ProjectionSpec::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::InvalidConfig(format!(
                        "box projection bounds must have length {dim}"
                    )));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::InvalidConfig(
                        "box projection requires lower <= upper".into(),
                    ));
                }
                Ok(())
            }
            ProjectionSpec::Halfspace { normal, offset } => {
                if normal.len() != dim {
                    return Err(Error::InvalidConfig(format!(
                        "halfspace normal must have length {dim}"
                    )));
                }
                let nrm2: f64 = normal.iter().map(|v| v * v).sum();
                if nrm2 > 0.0 && nrm2.is_finite() && offset.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(
                        "halfspace projection requires a nonzero finite normal".into(),
                    ))
                }
            }
        }
    }

    /// Orthogonal projection, in place.
    pub fn apply_in_place(&self, x: &mut [f64]) {
        match self {
            ProjectionSpec::Identity => {}
            ProjectionSpec::Ball { radius } => {
                let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nrm > *radius {
                    let scale = radius / nrm;
                    for v in x.iter_mut() {
                        *v *= scale;
                    }
                }
            }
            ProjectionSpec::Box { lower, upper } => {
                for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(l, u);
                }
            }
            ProjectionSpec::Halfspace { normal, offset } => {
                let dot: f64 = normal.iter().zip(x.iter()).map(|(n, v)| n * v).sum();
                if dot > *offset {
                    let nrm2: f64 = normal.iter().map(|v| v * v).sum();
                    let scale = (dot - offset) / nrm2;
                    for (v, n) in x.iter_mut().zip(normal) {
                        *v -= scale * n;
                    }
                }
            }
        }
    }
}

/// Deterministic part of the transition: how `T_γ` is built from `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepScheme {
    /// `T_γ(x) = x + γ b(x)`.
    #[default]
    Euler,
    /// `T_γ(x) = x + γ b(x)/(1 + γ‖b(x)‖)`.
    Tamed,
}

/// Stepsize and scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub gamma: f64,
    #[serde(default)]
    pub scheme: StepScheme,
}

impl StepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gamma > 0.0 && self.gamma.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig("gamma must be positive".into()))
        }
    }
}

/// Serialized drift description: a builtin, a constants block, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinDrift>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<DriftConstants>,
}

impl DriftConfig {
    /// Build the drift; explicit constants override builtin defaults.
    /// Without a builtin the result is constants-only (no evaluation
    /// closure), which suffices for the closed-form bound commands.
    pub fn instantiate(&self, gamma: f64) -> Result<DriftSpec> {
        match (&self.builtin, &self.constants) {
            (Some(builtin), overrides) => {
                let base = builtin.instantiate(self.dim, gamma)?;
                let merged = match overrides {
                    Some(over) => base.constants().merged_with(over),
                    None => base.constants(),
                };
                DriftSpec::from_parts(self.dim, base.eval_fn.clone(), merged, base.tamed_meta)
            }
            (None, Some(constants)) => {
                DriftSpec::from_parts(self.dim, None, constants.clone(), None)
            }
            (None, None) => Err(Error::InsufficientDriftMetadata(
                "drift needs a builtin or a constants block".into(),
            )),
        }
    }
}

/// Sign class of the step-map regularity profile over `(0, γ̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignClass {
    /// `sup κ < 0`: one-step contraction, uniformly in the class.
    Negative,
    /// `κ ≡ 0`: non-expansive step map.
    NonPositive,
    /// `κ > 0` somewhere: expansion must be paid for over blocks.
    Positive,
}

/// Closed-form regularity profile `κ(γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum KappaFn {
    /// `κ(γ) = a + bγ` (Euler step under Lipschitz + one-sided bounds:
    /// `a = −2m`, `b = L²`).
    Affine { a: f64, b: f64 },
    /// `κ(γ) = c/γ` (tamed step under local Lipschitz growth).
    Reciprocal { c: f64 },
    /// `κ ≡ 0`.
    Zero,
}

impl KappaFn {
    pub fn eval(&self, gamma: f64) -> f64 {
        match *self {
            KappaFn::Affine { a, b } => a + b * gamma,
            KappaFn::Reciprocal { c } => c / gamma,
            KappaFn::Zero => 0.0,
        }
    }
}

/// Regularity profile of a step map over a stepsize range `(0, γ̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaProfile {
    pub class: SignClass,
    pub kappa: KappaFn,
    pub gamma_bar: f64,
    /// `sup_{γ ∈ (0, γ̄]} κ(γ)`; negative exactly in the contractive
    /// class, where the block bounds consume it as `κ₋`.
    pub kappa_minus: f64,
    /// The same supremum, consumed as `κ₊` by the expansive-class bounds.
    /// For the reciprocal profile the analytic supremum is `+∞` at
    /// `γ → 0⁺`; the reported value is the supremum over the 64-point
    /// evaluation grid, attained at `γ̄/64`.
    pub kappa_plus: f64,
}

/// Classify the step map built from `drift` by `scheme` on `(0, gamma_bar]`.
///
/// Euler steps use the affine profile `κ(γ) = −2m + L²γ`; with `m > 0`
/// this is uniformly negative precisely when `γ̄ < 2m/L²`, and outside
/// that range a declared cocoercivity constant `m_b` (with `γ̄ ≤ 2m_b`)
/// still yields the non-expansive class `κ ≡ 0`. Tamed steps use the
/// reciprocal profile from the local Lipschitz growth constants. Profiles
/// reaching `1 + γκ(γ) ≤ 0` anywhere on the range are rejected.
pub fn classify_kappa(
    drift: &DriftSpec,
    scheme: StepScheme,
    gamma_bar: f64,
) -> Result<KappaProfile> {
    if !(gamma_bar > 0.0) || !gamma_bar.is_finite() {
        return Err(Error::InvalidConfig("gamma_bar must be positive".into()));
    }
    match scheme {
        StepScheme::Euler => {
            let l = drift.lipschitz;
            let m = drift.one_sided;
            let nonexpansive = || -> Option<KappaProfile> {
                let mb = drift.cocoercivity?;
                (gamma_bar <= 2.0 * mb).then_some(KappaProfile {
                    class: SignClass::NonPositive,
                    kappa: KappaFn::Zero,
                    gamma_bar,
                    kappa_minus: 0.0,
                    kappa_plus: 0.0,
                })
            };
            if m > 0.0 {
                let within_cap = l == 0.0 || gamma_bar < 2.0 * m / (l * l);
                if within_cap {
                    // Explosive iff min_{(0,γ̄]} γκ(γ) ≤ −1; the parabola
                    // γ ↦ −2mγ + L²γ² bottoms out at γ* = m/L².
                    let min_gk = if l == 0.0 || gamma_bar <= m / (l * l) {
                        gamma_bar * (-2.0 * m + l * l * gamma_bar)
                    } else {
                        -m * m / (l * l)
                    };
                    if min_gk <= -1.0 {
                        return Err(Error::ExplosiveProfile(format!(
                            "1 + γκ(γ) reaches {} on (0, {gamma_bar}]",
                            1.0 + min_gk
                        )));
                    }
                    return Ok(KappaProfile {
                        class: SignClass::Negative,
                        kappa: KappaFn::Affine {
                            a: -2.0 * m,
                            b: l * l,
                        },
                        gamma_bar,
                        kappa_minus: -2.0 * m + l * l * gamma_bar,
                        kappa_plus: -2.0 * m + l * l * gamma_bar,
                    });
                }
                if let Some(profile) = nonexpansive() {
                    return Ok(profile);
                }
                return Err(Error::StepsizeCap(format!(
                    "gamma_bar = {gamma_bar} is not below 2m/L^2 = {}",
                    2.0 * m / (l * l)
                )));
            }
            if let Some(profile) = nonexpansive() {
                return Ok(profile);
            }
            if l == 0.0 && m == 0.0 {
                return Ok(KappaProfile {
                    class: SignClass::NonPositive,
                    kappa: KappaFn::Zero,
                    gamma_bar,
                    kappa_minus: 0.0,
                    kappa_plus: 0.0,
                });
            }
            let sup = -2.0 * m + l * l * gamma_bar;
            Ok(KappaProfile {
                class: SignClass::Positive,
                kappa: KappaFn::Affine {
                    a: -2.0 * m,
                    b: l * l,
                },
                gamma_bar,
                kappa_minus: sup,
                kappa_plus: sup,
            })
        }
        StepScheme::Tamed => {
            let t2 = drift.tamed_meta.ok_or_else(|| {
                Error::InsufficientDriftMetadata(
                    "tamed classification needs t2 constants (l_tilde, ell_tilde, m_ell)".into(),
                )
            })?;
            // One tamed step moves points apart by at most a factor
            // 1 + γ·L̃_γ with L̃_γ = 2γ⁻¹M(1+M)L̃, so
            // κ(γ) = 2L̃_γ + γL̃_γ² = (2c + c²)/γ for c = 2M(1+M)L̃.
            let c = 2.0 * t2.m_ell * (1.0 + t2.m_ell) * t2.l_tilde;
            let coeff = 2.0 * c + c * c;
            let sup = coeff / (gamma_bar / 64.0);
            Ok(KappaProfile {
                class: SignClass::Positive,
                kappa: KappaFn::Reciprocal { c: coeff },
                gamma_bar,
                kappa_minus: sup,
                kappa_plus: sup,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(theta: f64, dim: usize) -> DriftSpec {
        BuiltinDrift::Linear { theta }.instantiate(dim, 0.1).unwrap()
    }

    #[test]
    fn linear_constants_and_eval() {
        let d = linear(2.0, 3);
        assert_eq!(d.lipschitz, 2.0);
        assert_eq!(d.one_sided, 2.0);
        assert_eq!(d.cocoercivity, Some(0.5));
        let mut out = vec![0.0; 3];
        d.eval_into(&[1.0, -2.0, 0.5], &mut out).unwrap();
        assert_eq!(out, vec![-2.0, 4.0, -1.0]);
    }

    #[test]
    fn mixture_drift_matches_reference() {
        let d = BuiltinDrift::GaussianMixture { sigma: 2.0, m: 6.0 }
            .instantiate(1, 0.1)
            .unwrap();
        let mut out = [0.0];
        d.eval_into(&[1.0], &mut out).unwrap();
        assert!((out[0] - 0.226_361_714_290_465_49).abs() < 1e-15);
        d.eval_into(&[-3.0], &mut out).unwrap();
        assert!((out[0] - 0.016_480_413_945_889_77).abs() < 1e-15);
        // θ = 1.5: L = (θ²−1)/σ² = 1.25/4, m = (1−θ²)/σ² = −1.25/4.
        assert_eq!(d.lipschitz, 0.3125);
        assert_eq!(d.one_sided, -0.3125);
        assert_eq!(d.cocoercivity, None);
        let c1 = d.conv_inf.unwrap();
        assert_eq!((c1.m_plus, c1.radius), (0.125, 12.0));
    }

    #[test]
    fn mixture_drift_is_odd_and_lipschitz() {
        let d = BuiltinDrift::GaussianMixture { sigma: 2.0, m: 6.0 }
            .instantiate(1, 0.1)
            .unwrap();
        let eval = |x: f64| {
            let mut out = [0.0];
            d.eval_into(&[x], &mut out).unwrap();
            out[0]
        };
        for i in 0..100 {
            let x = -12.0 + 0.24 * f64::from(i);
            assert!((eval(x) + eval(-x)).abs() < 1e-15);
            let y = x + 0.05;
            assert!((eval(y) - eval(x)).abs() <= d.lipschitz * 0.05 + 1e-12);
            // One-sided bound on secants.
            assert!((eval(y) - eval(x)) * 0.05 <= -d.one_sided * 0.0025 + 1e-12);
        }
    }

    #[test]
    fn double_well_tame_is_bounded_and_matches_reference() {
        let d = BuiltinDrift::DoubleWell {
            damping: WellDamping::Tame,
        }
        .instantiate(1, 0.1)
        .unwrap();
        let mut out = [0.0];
        d.eval_into(&[2.0], &mut out).unwrap();
        assert!((out[0] + 0.857_142_857_142_857_1).abs() < 1e-15);
        for i in 0..200 {
            let x = -10.0 + 0.1 * f64::from(i);
            d.eval_into(&[x], &mut out).unwrap();
            assert!(out[0].abs() < 1.0);
        }
    }

    #[test]
    fn double_well_weak_dissipativity_holds_on_samples() {
        let d = BuiltinDrift::DoubleWell {
            damping: WellDamping::Tame,
        }
        .instantiate(2, 0.1)
        .unwrap();
        let w = d.weak.unwrap();
        let mut b = [0.0; 2];
        for i in 0..60 {
            for j in 0..60 {
                let x = [-6.0 + 0.2 * f64::from(i), -6.0 + 0.2 * f64::from(j)];
                d.eval_into(&x, &mut b).unwrap();
                let xb = x[0] * b[0] + x[1] * b[1];
                let xn = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let bn2 = b[0] * b[0] + b[1] * b[1];
                let ind = if xn > w.radius { 1.0 } else { 0.0 };
                assert!(
                    xb <= -w.k1 * xn * ind - w.k2 * bn2 + w.a / 2.0 + 1e-12,
                    "weak dissipativity violated at {x:?}"
                );
            }
        }
    }

    #[test]
    fn approx_drift_equals_base_inside_ball_and_taming_bound_outside() {
        let base: DriftFn = Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = x[0].abs().powf(1.5) * x[0].sin();
        });
        let (gamma, n, alpha) = (0.01, 3, 0.4);
        let damped = build_approx_drift(base.clone(), gamma, n, alpha).unwrap();
        let ga = gamma.powf(alpha);
        let mut raw = [0.0];
        let mut tamed = [0.0];
        for i in 0..400 {
            let x = [-10.0 + 0.05 * f64::from(i)];
            base(&x, &mut raw);
            damped(&x, &mut tamed);
            if x[0].abs() <= 3.0 {
                assert_eq!(raw[0], tamed[0], "must be untouched at {x:?}");
            }
            let bound = ga * raw[0] * raw[0] / (1.0 + ga * raw[0].abs());
            assert!(
                (raw[0] - tamed[0]).abs() <= bound + 1e-12,
                "taming bound violated at {x:?}"
            );
        }
        // Reference value of the raw drift, as a guard on the test itself.
        base(&[3.7], &mut raw);
        assert!((raw[0] + 3.770_892_614_247_612_8).abs() < 1e-14);
    }

    #[test]
    fn approx_drift_rejects_bad_exponents() {
        let base: DriftFn = Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 0.0);
        for alpha in [0.5, 0.7, 0.0, -0.1] {
            let err = match build_approx_drift(base.clone(), 0.01, 3, alpha) {
                Err(e) => e,
                Ok(_) => panic!("taming exponent {alpha} should be rejected"),
            };
            assert!(err.to_string().starts_with("invalid taming exponent"));
        }
    }

    #[test]
    fn projections_are_exact_and_idempotent() {
        let ball = ProjectionSpec::Ball { radius: 2.0 };
        let mut x = vec![3.0, 4.0];
        ball.apply_in_place(&mut x);
        assert!((x[0] - 1.2).abs() < 1e-15 && (x[1] - 1.6).abs() < 1e-15);
        let snapshot = x.clone();
        ball.apply_in_place(&mut x);
        assert_eq!(x, snapshot);

        let boxp = ProjectionSpec::Box {
            lower: vec![-1.0, 0.0],
            upper: vec![1.0, 0.5],
        };
        let mut y = vec![-3.0, 0.25];
        boxp.apply_in_place(&mut y);
        assert_eq!(y, vec![-1.0, 0.25]);

        let hs = ProjectionSpec::Halfspace {
            normal: vec![0.0, 2.0],
            offset: 1.0,
        };
        let mut z = vec![5.0, 3.0];
        hs.apply_in_place(&mut z);
        assert_eq!(z, vec![5.0, 0.5]);
        let mut inside = vec![5.0, -1.0];
        hs.apply_in_place(&mut inside);
        assert_eq!(inside, vec![5.0, -1.0]);
    }

    #[test]
    fn projections_are_nonexpansive_on_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let projs = vec![
            ProjectionSpec::Identity,
            ProjectionSpec::Ball { radius: 1.5 },
            ProjectionSpec::Box {
                lower: vec![-0.5; 3],
                upper: vec![0.75; 3],
            },
            ProjectionSpec::Halfspace {
                normal: vec![1.0, -2.0, 0.5],
                offset: 0.3,
            },
        ];
        for proj in projs {
            proj.validate(3).unwrap();
            for _ in 0..2000 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let d0: f64 = x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let (mut px, mut py) = (x.clone(), y.clone());
                proj.apply_in_place(&mut px);
                proj.apply_in_place(&mut py);
                let d1: f64 = px
                    .iter()
                    .zip(&py)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(d1 <= d0 + 1e-12 * d0.max(1.0), "{proj:?}: {d1} > {d0}");
            }
        }
    }

    #[test]
    fn spec_invariants_are_enforced() {
        let c = |l: Option<f64>, m: Option<f64>| DriftConstants {
            lipschitz: l,
            one_sided: m,
            ..DriftConstants::default()
        };
        assert!(DriftSpec::from_parts(1, None, c(None, Some(0.0)), None).is_err());
        assert!(DriftSpec::from_parts(1, None, c(Some(1.0), None), None).is_err());
        assert!(DriftSpec::from_parts(1, None, c(Some(-1.0), Some(0.0)), None).is_err());
        assert!(DriftSpec::from_parts(1, None, c(Some(1.0), Some(2.0)), None).is_err());
        assert!(DriftSpec::from_parts(1, None, c(Some(1.0), Some(-2.0)), None).is_err());
        assert!(DriftSpec::from_parts(0, None, c(Some(1.0), Some(0.5)), None).is_err());
        let mut bad_mb = c(Some(1.0), Some(0.5));
        bad_mb.cocoercivity = Some(0.0);
        assert!(DriftSpec::from_parts(1, None, bad_mb, None).is_err());
        // Nonvanishing drift at the origin is rejected.
        let shifted: DriftFn = Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 1.0);
        assert!(DriftSpec::from_parts(1, Some(shifted), c(Some(1.0), Some(0.5)), None).is_err());
        // Constants-only spec has no evaluator.
        let spec = DriftSpec::from_parts(1, None, c(Some(1.0), Some(0.5)), None).unwrap();
        let err = match spec.eval_fn() {
            Err(e) => e,
            Ok(_) => panic!("constants-only spec should have no evaluator"),
        };
        assert!(err.to_string().starts_with("insufficient drift metadata"));
    }

    #[test]
    fn drift_config_json_round_trip_and_overrides() {
        let json = r#"{
            "dim": 1,
            "builtin": {"name": "gaussian-mixture", "sigma": 2.0, "m": 6.0},
            "constants": {"m_b": 0.25}
        }"#;
        let cfg: DriftConfig = serde_json::from_str(json).unwrap();
        let spec = cfg.instantiate(0.1).unwrap();
        assert_eq!(spec.cocoercivity, Some(0.25));
        assert_eq!(spec.lipschitz, 0.3125);

        let constants_only = r#"{"dim": 2, "constants": {"L": 1.0, "m": -0.5}}"#;
        let cfg: DriftConfig = serde_json::from_str(constants_only).unwrap();
        let spec = cfg.instantiate(0.1).unwrap();
        assert_eq!((spec.dim, spec.lipschitz, spec.one_sided), (2, 1.0, -0.5));

        let unknown = r#"{"dim": 1, "constants": {"L": 1.0, "m": 0.0, "zeta": 3.0}}"#;
        assert!(serde_json::from_str::<DriftConfig>(unknown).is_err());

        let round = serde_json::to_string(&DriftConfig {
            dim: 3,
            builtin: Some(BuiltinDrift::DoubleWell {
                damping: WellDamping::Cutoff { n: 2, alpha: 0.4 },
            }),
            constants: None,
        })
        .unwrap();
        let back: DriftConfig = serde_json::from_str(&round).unwrap();
        assert_eq!(
            back.builtin,
            Some(BuiltinDrift::DoubleWell {
                damping: WellDamping::Cutoff { n: 2, alpha: 0.4 }
            })
        );
    }

    #[test]
    fn classify_strongly_monotone_euler() {
        let d = linear(1.0, 1);
        let p = classify_kappa(&d, StepScheme::Euler, 0.1).unwrap();
        assert_eq!(p.class, SignClass::Negative);
        assert_eq!(p.kappa, KappaFn::Affine { a: -2.0, b: 1.0 });
        assert!((p.kappa_minus + 1.9).abs() < 1e-15);
        assert_eq!(p.kappa.eval(0.1), p.kappa_minus);
    }

    #[test]
    fn classify_falls_back_to_cocoercive_class_beyond_cap() {
        let d = linear(1.0, 1);
        // 2m/L² = 2: the cap excludes γ̄ = 2, but m_b = 1 admits γ̄ ≤ 2.
        let p = classify_kappa(&d, StepScheme::Euler, 2.0).unwrap();
        assert_eq!(p.class, SignClass::NonPositive);
        assert_eq!(p.kappa, KappaFn::Zero);
        let err = classify_kappa(&d, StepScheme::Euler, 2.5).unwrap_err();
        assert!(err.to_string().starts_with("stepsize-cap violation"));
    }

    #[test]
    fn classify_expansive_euler() {
        let d = BuiltinDrift::GaussianMixture { sigma: 2.0, m: 6.0 }
            .instantiate(1, 0.1)
            .unwrap();
        let p = classify_kappa(&d, StepScheme::Euler, 0.5).unwrap();
        assert_eq!(p.class, SignClass::Positive);
        // κ(γ) = 0.625 + 0.3125²γ, sup at γ̄.
        assert!((p.kappa.eval(0.5) - (0.625 + 0.3125 * 0.3125 * 0.5)).abs() < 1e-15);
        assert_eq!(p.kappa_plus, p.kappa.eval(0.5));
    }

    #[test]
    fn classify_tamed_reciprocal_profile() {
        let raw: DriftFn = Arc::new(|x: &[f64], out: &mut [f64]| {
            let nrm2: f64 = x.iter().map(|v| v * v).sum();
            for (o, &xi) in out.iter_mut().zip(x) {
                *o = xi * (1.0 - nrm2);
            }
        });
        let d = DriftSpec::from_parts(
            2,
            Some(raw),
            DriftConstants {
                lipschitz: Some(10.0),
                one_sided: Some(-10.0),
                ..DriftConstants::default()
            },
            Some(TamedMeta {
                l_tilde: 3.0,
                ell_tilde: 2.0,
                m_ell: 2.0,
            }),
        )
        .unwrap();
        let p = classify_kappa(&d, StepScheme::Tamed, 0.64).unwrap();
        assert_eq!(p.class, SignClass::Positive);
        // c = 2·2·3·3 = 36, κ(γ) = (72 + 1296)/γ = 1368/γ.
        assert_eq!(p.kappa, KappaFn::Reciprocal { c: 1368.0 });
        assert!((p.kappa.eval(0.5) - 2736.0).abs() < 1e-12);
        assert!((p.kappa_plus - 1368.0 / 0.01).abs() < 1e-9);
        // Without the metadata the tamed classification is unavailable.
        let bare = linear(1.0, 2);
        let err = classify_kappa(&bare, StepScheme::Tamed, 0.5).unwrap_err();
        assert!(err
            .to_string()
            .starts_with("insufficient drift metadata"));
    }

    #[test]
    fn classify_zero_drift() {
        let d = DriftSpec::from_parts(
            1,
            None,
            DriftConstants {
                lipschitz: Some(0.0),
                one_sided: Some(0.0),
                ..DriftConstants::default()
            },
            None,
        )
        .unwrap();
        let p = classify_kappa(&d, StepScheme::Euler, 1.0).unwrap();
        assert_eq!(p.class, SignClass::NonPositive);
        assert_eq!(p.kappa, KappaFn::Zero);
    }

    #[test]
    fn classify_rejects_explosive_profiles() {
        // m = 1, L = 1 declared would give min γκ = −1 at the vertex only
        // if m ≥ L; build an (artificial) profile m = L = 1 with γ̄ past
        // the vertex: min γκ = −m²/L² = −1 → explosive.
        let d = DriftSpec::from_parts(
            1,
            None,
            DriftConstants {
                lipschitz: Some(1.0),
                one_sided: Some(1.0),
                ..DriftConstants::default()
            },
            None,
        )
        .unwrap();
        let err = classify_kappa(&d, StepScheme::Euler, 1.5).unwrap_err();
        assert!(err.to_string().starts_with("explosive profile"), "{err}");
    }
}
