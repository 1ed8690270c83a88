//! Euler–Maruyama chains, reflection couplings, and explicit geometric
//! convergence bounds.
//!
//! The central object is the (optionally projected) Euler–Maruyama chain
//!
//! ```text
//!     X_{k+1} = Π( T_γ(X_k) + √γ Z_{k+1} ),      Z_{k+1} ~ N(0, Id),
//! ```
//!
//! where `T_γ` is an explicit step map (Euler `x + γ b(x)`, or a tamed
//! variant) and `Π` is a non-expansive projection. Two copies of the chain
//! started at `x` and `y` are coupled by *reflection*: the second chain
//! reuses the first chain's Gaussian increment mirrored across the
//! hyperplane orthogonal to `e = (T_γ(y) − T_γ(x))/‖·‖`, and the pair is
//! merged with the maximal-coupling acceptance probability
//! `φ(‖E‖ − a)/φ(a) ∧ 1` for `a = ⟨e, √γ z⟩`. Once merged, the two chains
//! are identical forever; the coupling inequality
//!
//! ```text
//!     ‖δ_x R_γ^n − δ_y R_γ^n‖_TV ≤ P(X_n ≠ Y_n)
//! ```
//!
//! turns hitting-time tail bounds for the coupled pair into total-variation
//! convergence bounds for the chain.
//!
//! The crate is organised in three layers.
//!
//! * **Simulation** ([`kernel`], [`model`]): step maps, projections, the
//!   reflection-coupled transition, and deterministic parallel Monte Carlo
//!   drivers for coalescence curves.
//! * **Certificates** ([`minorize`], [`lyapunov`]): one-step contraction
//!   profiles `κ(γ)`, the variance sums `Ξ_n(κ)`, explicit minorization
//!   constants for blocks of `ℓ⌈1/γ⌉` steps, and Foster–Lyapunov drift
//!   certificates `K𝒱 ≤ λ^γ 𝒱 + Aγ` for linear, quadratic and exponential
//!   Lyapunov functions.
//! * **Rates** ([`rates`], [`empirics`]): assembly of the certificates
//!   into fully explicit geometric bounds in weighted total variation and
//!   Wasserstein distances, their stepsize-independent limits, closed-form
//!   competitor rates for comparison, and Monte Carlo validation helpers.
//!
//! Scalar-generic numerics (normal CDF, quadrature, the `Ξ`/`α`/`κ`
//! formula layer) are written against the [`Real`] trait so they can be
//! instantiated at `f32` or `f64`; everything simulation-facing is `f64`
//! (alias [`Scalar`]).

use thiserror::Error;

pub mod empirics;
pub mod kernel;
pub mod lyapunov;
pub mod minorize;
pub mod model;
mod par;
pub mod quad;
mod rng;
pub mod rates;
pub mod special;

pub use empirics::{
    estimate_tv, estimate_w1_1d, fit_log_rate, run_mixture_experiment, validate_bound,
    BoundCheck, ControlSpec, MixtureComponent, MixtureExperiment, MixtureRateSummary,
    MixtureSpec, NormalMixture, RateFit, TvEstimate, TvPoint, ValidationReport, Violation,
};
pub use kernel::{
    coupled_step, coupled_step_schedule, em_step, one_step_coalesce_prob, simulate_coupled,
    ChainConfig, CoupleOptions, CouplingCurve, CoupleState, FunctionalPoint, PairFunctional,
    Schedule, StepMapFn,
};
pub use lyapunov::{
    exponential_certificate, linear_certificate, moment_certificate, pairify,
    quadratic_certificate, verify_drift_mc, AuditOutcome, DriftAudit, DriftCertificate,
    MomentCertificate, PairCertificate, PairLyapunov, SingleLyapunov, SmallSet,
};
pub use minorize::{
    alpha_lower, coalescence_upper_bound, minorization_eps, steps_per_unit_time, tv_decay_bound,
    xi_schedule, xi_value, Horizon, MinorizationMode, TvDecayMode, XiQuery,
};
pub use model::{
    build_approx_drift, classify_kappa, BuiltinDrift, ConvexityAtInfinity, DriftConfig,
    DriftConstants, DriftFn, DriftSpec, KappaFn, KappaProfile, ProjectionSpec, RadialConfinement,
    SignClass, StepScheme, StepSpec, TamedMeta, WeakDissipativity, WellDamping,
};
pub use rates::{
    assemble_rate_constants, asymptotic_and_competitor_rates, block_harris_constants,
    beta_row, bound_curve, competitor_log_rates, full_rate_report, harris_constants,
    limit_constants, psi,
    w_constants, AsymptoticRates, BetaRow, BlockHarrisConstants, BoundPoint, CertificateRoute,
    CompetitorLogRates, HarrisConstants, LimitConstants, PsiMode, PsiModeReport, RateConstants,
    RateReport, RouteReport, WassersteinConstants,
};

/// Scalar type used by the simulation layer.
pub type Scalar = f64;

/// Floating-point scalars the formula layer can be instantiated at.
///
/// Extends [`num_traits::Float`] with the complementary error function,
/// which is the only special function the closed-form bounds need and the
/// one piece `num_traits` does not provide.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Complementary error function `erfc(x) = 2/√π ∫_x^∞ e^{−t²} dt`.
    fn erfc(self) -> Self;
}

impl Real for f64 {
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// Convert an `f64` constant into the working scalar type.
///
/// Panics only if `F` cannot represent ordinary finite constants, which no
/// `Real` implementation exhibits.
pub(crate) fn cast<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("constant representable in every Real type")
}

/// Errors reported by the certificate and simulation layers.
///
/// The message vocabulary is part of the crate's interface: front-ends
/// match on the leading phrase to translate failures into exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A formula needs a drift constant that was not declared.
    #[error("insufficient drift metadata: {0}")]
    InsufficientDriftMetadata(String),
    /// The requested stepsize ceiling exceeds the admissible range.
    #[error("stepsize-cap violation: {0}")]
    StepsizeCap(String),
    /// The contraction profile reaches `1 + γκ(γ) ≤ 0`.
    #[error("explosive profile: {0}")]
    ExplosiveProfile(String),
    /// A cutoff-damped drift was requested with exponent `α ≥ 1/2`.
    #[error("invalid taming exponent: {0}")]
    InvalidTaming(String),
    /// The block length `ℓ` is too short for the requested minorization.
    #[error("block length too short: {0}")]
    BlockLengthTooShort(String),
    /// Wasserstein-p interpolation needs `α > p`.
    #[error("invalid interpolation exponent: {0}")]
    InvalidInterpolation(String),
    /// The minorization constant is not in `(0, 1]`.
    #[error("degenerate minorization: {0}")]
    DegenerateMinorization(String),
    /// A log-linear fit was requested on a curve with no linear regime.
    #[error("no linear regime: {0}")]
    NoLinearRegime(String),
    /// A statistical estimate was requested from too few samples.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    /// A custom Lyapunov function has no declared level-set radii.
    #[error("non-coercive V: {0}")]
    NonCoerciveV(String),
    /// An empirical routine received no samples at all.
    #[error("empty sample set")]
    EmptySampleSet,
    /// Paired-sample routines received differently sized samples.
    #[error("unequal sample counts: {0}")]
    UnequalSampleCounts(String),
    /// Malformed configuration (dimensions, signs, ranges).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// An internal cross-check failed; indicates a bug, not bad input.
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
