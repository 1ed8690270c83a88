//! Run configuration: one sectioned JSON document per invocation.
//!
//! The document carries a shared `problem` block (drift + step map +
//! projection) and one optional section per subcommand; each command reads
//! exactly the sections it needs. Every struct rejects unknown fields, so a
//! typo fails loudly with a field path instead of silently falling back to
//! a default.

use std::fs;
use std::path::Path;

use emcouple::{
    CertificateRoute, ControlSpec, DriftConfig, MixtureSpec, ProjectionSpec, PsiMode, StepSpec,
};
use serde::Deserialize;

use crate::CliError;

/// Shared chain description: which drift, which step map, which constraint.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub drift: DriftConfig,
    pub step: StepSpec,
    #[serde(default = "identity")]
    pub projection: ProjectionSpec,
}

fn identity() -> ProjectionSpec {
    ProjectionSpec::Identity
}

/// `rates`: closed-form report for the problem drift.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSection {
    /// Stepsize ceiling `γ̄` the constants are certified over; defaults to
    /// the problem stepsize.
    pub gamma_bar: Option<f64>,
    /// Block length override (defaults per route).
    pub ell: Option<u64>,
    /// Interpolated Wasserstein order `(p, α)` on the distance route.
    pub order: Option<(f64, f64)>,
}

/// `couple`: reflection-coupled coalescence curve, optionally checked
/// against the certified bound.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSection {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub n_steps: usize,
    /// Overrides the top-level replica budget for this command.
    pub replicas: Option<u64>,
    #[serde(default)]
    pub retain_pairs: usize,
    /// When present, also run the certified-bound validation.
    pub validate: Option<ValidateSection>,
}

/// Bound validation: compare the Monte Carlo pair-cost curve against the
/// certified two-term bound every `stride` steps.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub route: CertificateRoute,
    /// Coalescence mode whose constants to use; defaults to the first one
    /// the report offers for the route.
    pub mode: Option<PsiMode>,
    /// Ceiling for the certificate; defaults to the problem stepsize.
    pub gamma_bar: Option<f64>,
    pub ell: Option<u64>,
    pub stride: usize,
    /// Optional control curve (e.g. a planted geometric envelope that the
    /// data should refute).
    pub control: Option<ControlSpec>,
}

/// `mixture`: two-well TV-decay experiment and rate comparison.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    pub specs: Vec<MixtureSpec>,
    pub gamma: f64,
    pub n_steps: u64,
    /// Common starting point; defaults to the left mode `−m/2`.
    pub x0: Option<f64>,
    pub replicas: Option<u64>,
}

/// One `(m, m⁺, L, R)` barrier row of the `compare` grid.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRow {
    pub m: f64,
    pub m_plus: f64,
    pub l: f64,
    pub r: f64,
}

/// `compare`: competitor inverse-rate grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub grid: Vec<CompareRow>,
    /// When set, also evaluate the stepsize-uniform variant of our rate.
    pub gamma_bar: Option<f64>,
}

/// `verify-drift`: Monte Carlo audit of the one-step drift inequality.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyDriftSection {
    pub route: CertificateRoute,
    /// Ceiling for the certificate; defaults to the problem stepsize.
    pub gamma_bar: Option<f64>,
    /// Exponential-route rate override (defaults to `k₁/2`).
    pub exp_rate: Option<f64>,
    pub outer_pairs: usize,
    pub inner_draws: u64,
}

/// The whole configuration file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub problem: Option<ProblemSection>,
    /// Base seed; the `--seed` flag overrides it. Defaults to 0.
    pub seed: Option<u64>,
    /// Replica budget; the `--replicas` flag overrides it.
    pub replicas: Option<u64>,
    pub rates: Option<RatesSection>,
    pub couple: Option<CoupleSection>,
    pub mixture: Option<MixtureSection>,
    pub compare: Option<CompareSection>,
    pub verify_drift: Option<VerifyDriftSection>,
}

impl FileConfig {
    /// The problem block, or a config error naming the command that
    /// needed it.
    pub fn problem(&self, command: &str) -> Result<&ProblemSection, CliError> {
        self.problem.as_ref().ok_or_else(|| {
            CliError::Config(format!("the {command} command needs a problem section"))
        })
    }
}

/// Parse the file, reporting schema errors with their field path.
pub fn load(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::Config(format!("{} (at {})", e.inner(), e.path())))
}
