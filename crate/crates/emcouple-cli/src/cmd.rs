//! Subcommand implementations: resolve the config sections, call the
//! library, write artifacts, and translate outcomes into exit codes.
//!
//! Every artifact is written deterministically — JSON through serde with
//! shortest round-trip float formatting, CSV through `Display` (also
//! shortest round-trip) — so a fixed `(config, seed)` pair produces
//! byte-identical files regardless of thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use emcouple::{
    competitor_log_rates, full_rate_report, run_mixture_experiment, simulate_coupled,
    validate_bound, verify_drift_mc, AuditOutcome, CertificateRoute, ChainConfig, CoupleOptions,
    DriftCertificate, DriftSpec, MixtureRateSummary, RateFit, RouteReport, ValidationReport,
};
use serde::Serialize;

use crate::config::{FileConfig, ProblemSection};
use crate::{CliError, Resolved};

/// `rates`: full closed-form report for the problem drift.
pub fn rates(cfg: &FileConfig, rv: &Resolved) -> Result<i32, CliError> {
    let problem = cfg.problem("rates")?;
    let section = cfg.rates.clone().unwrap_or_default();
    let gamma_bar = section.gamma_bar.unwrap_or(problem.step.gamma);
    let drift = problem.drift.instantiate(gamma_bar)?;
    let report = full_rate_report(&drift, gamma_bar, section.ell, section.order)?;
    let path = write_json(&rv.out_dir, "rates.json", &report)?;
    for route in &report.routes {
        let rc = &route.psi_modes[0].constants;
        println!(
            "route {:?}: lambda = {}, rho_bar_1 = {} (log {})",
            route.route, route.certificate.lambda, rc.rho_bar_1, rc.log_rho_bar_1
        );
    }
    println!("wrote {}", path.display());
    Ok(0)
}

/// `couple`: coalescence curve CSV, plus the certified-bound validation
/// when the config asks for it. Exit 1 when the certified bound is
/// violated.
pub fn couple(cfg: &FileConfig, rv: &Resolved) -> Result<i32, CliError> {
    let problem = cfg.problem("couple")?;
    let section = cfg
        .couple
        .as_ref()
        .ok_or_else(|| CliError::Config("the couple command needs a couple section".into()))?;
    let chain = chain_config(problem, section.n_steps, rv.replicas(section.replicas)?, rv.seed)?;
    let opts = CoupleOptions {
        retain_pairs: section.retain_pairs,
        ..CoupleOptions::default()
    };
    let curve = simulate_coupled(&chain, &section.x0, &section.y0, &opts)?;

    let mut csv = String::from("k,non_coalesced_fraction,stderr\n");
    for (k, (frac, se)) in curve.non_coalesced.iter().zip(&curve.stderr).enumerate() {
        let _ = writeln!(csv, "{k},{frac},{se}");
    }
    let path = write_text(&rv.out_dir, "couple.csv", &csv)?;
    println!(
        "{} replicas, {} steps: non-coalesced fraction {} at the horizon",
        curve.n_replicas,
        section.n_steps,
        curve.non_coalesced.last().copied().unwrap_or(0.0)
    );
    println!("wrote {}", path.display());

    let Some(v) = &section.validate else {
        return Ok(0);
    };
    let gamma_bar = v.gamma_bar.unwrap_or(problem.step.gamma);
    let cert_drift = problem.drift.instantiate(gamma_bar)?;
    let report = full_rate_report(&cert_drift, gamma_bar, v.ell, None)?;
    let route = find_route(&report.routes, v.route)?;
    let mode = match v.mode {
        Some(m) => route
            .psi_modes
            .iter()
            .find(|pm| pm.mode == m)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "the {:?} route does not admit the {m:?} coalescence mode",
                    v.route
                ))
            })?,
        None => &route.psi_modes[0],
    };
    let outcome = validate_bound(
        &chain,
        &section.x0,
        &section.y0,
        &route.certificate,
        &mode.constants,
        v.stride,
        v.control,
    )?;

    let mut csv = String::from("k,empirical,stderr,bound,control\n");
    for c in &outcome.checks {
        let control = c.control.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{control}", c.k, c.empirical, c.stderr, c.bound);
    }
    let csv_path = write_text(&rv.out_dir, "validation.csv", &csv)?;
    let json_path = write_json(&rv.out_dir, "validation.json", &outcome)?;
    report_validation(&outcome);
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(if outcome.passed() { 0 } else { 1 })
}

fn report_validation(outcome: &ValidationReport) {
    match outcome.first_violation() {
        None => println!(
            "certified bound holds at all {} checkpoints",
            outcome.checks.len()
        ),
        Some(v) => println!(
            "certified bound VIOLATED at k = {}: empirical {} > bound {}",
            v.k, v.empirical, v.bound
        ),
    }
    if !outcome.control_violations.is_empty() {
        println!(
            "control curve refuted at {} checkpoints (first at k = {})",
            outcome.control_violations.len(),
            outcome.control_violations[0].k
        );
    }
}

/// Per-well summary written alongside the mixture TV curves.
#[derive(Serialize)]
struct MixtureRunSummary<'a> {
    sigma: f64,
    m: f64,
    gamma: f64,
    n_steps: u64,
    replicas: u64,
    x0: f64,
    fit: &'a RateFit,
    rates: &'a Option<MixtureRateSummary>,
}

/// `mixture`: TV decay curves for each two-well spec plus fitted-rate
/// comparison against the closed-form predictions.
pub fn mixture(cfg: &FileConfig, rv: &Resolved) -> Result<i32, CliError> {
    let section = cfg
        .mixture
        .as_ref()
        .ok_or_else(|| CliError::Config("the mixture command needs a mixture section".into()))?;
    let experiments = run_mixture_experiment(
        &section.specs,
        section.gamma,
        section.n_steps,
        section.x0,
        rv.replicas(section.replicas)?,
        rv.seed,
    )?;

    let mut csv = String::from("m,n,tv,stderr\n");
    for exp in &experiments {
        for p in &exp.curve {
            let _ = writeln!(csv, "{},{},{},{}", exp.spec.m, p.n, p.tv, p.stderr);
        }
    }
    let csv_path = write_text(&rv.out_dir, "mixture.csv", &csv)?;

    let summaries: Vec<MixtureRunSummary> = experiments
        .iter()
        .map(|exp| MixtureRunSummary {
            sigma: exp.spec.sigma,
            m: exp.spec.m,
            gamma: exp.gamma,
            n_steps: exp.n_steps,
            replicas: exp.replicas,
            x0: exp.x0,
            fit: &exp.fit,
            rates: &exp.rates,
        })
        .collect();
    let json_path = write_json(&rv.out_dir, "mixture_rates.json", &summaries)?;

    for exp in &experiments {
        match &exp.rates {
            Some(r) => println!(
                "m = {}: rho_exp = {}, measured log-inverse-rate {} vs ours {}",
                exp.spec.m, exp.fit.rho_exp, r.measured, r.ours
            ),
            None => println!(
                "m = {}: rho_exp = {} (convex well, no barrier-rate comparison)",
                exp.spec.m, exp.fit.rho_exp
            ),
        }
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(0)
}

/// `compare`: competitor inverse-rate grid, one CSV row per barrier tuple.
pub fn compare(cfg: &FileConfig, rv: &Resolved) -> Result<i32, CliError> {
    let section = cfg
        .compare
        .as_ref()
        .ok_or_else(|| CliError::Config("the compare command needs a compare section".into()))?;
    if section.grid.is_empty() {
        return Err(CliError::Config("the compare grid is empty".into()));
    }
    let mut csv = String::from(
        "m,m_plus,l,r,ours,ours_stepsize,discrete_tv,discrete_w1,discrete_w2,\
         continuous_w1,continuous_wp\n",
    );
    for row in &section.grid {
        let c = competitor_log_rates(row.m, row.m_plus, row.l, row.r, section.gamma_bar)?;
        let stepsize = c.ours_stepsize.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{stepsize},{},{},{},{},{}",
            row.m,
            row.m_plus,
            row.l,
            row.r,
            c.ours,
            c.discrete_tv,
            c.discrete_w1,
            c.discrete_w2,
            c.continuous_w1,
            c.continuous_wp
        );
    }
    let path = write_text(&rv.out_dir, "compare.csv", &csv)?;
    println!("wrote {} ({} rows)", path.display(), section.grid.len());
    Ok(0)
}

/// Audit artifact: the certificate under test plus the worst observed
/// margin of `K𝒱 − (λ^γ𝒱 + Aγ1_C)` over the sampled start pairs.
#[derive(Serialize)]
struct AuditArtifact<'a> {
    certificate: &'a DriftCertificate,
    status: AuditOutcome,
    worst_margin: f64,
    stderr: f64,
    worst_pair: &'a (Vec<f64>, Vec<f64>),
    violations: usize,
    unresolved: usize,
    outer_pairs: usize,
    inner_draws: u64,
}

/// `verify-drift`: Monte Carlo audit of the one-step drift inequality for
/// the declared certificate. Exit 1 when the inequality is violated, 3
/// when the sample budget leaves it unresolved.
pub fn verify_drift(cfg: &FileConfig, rv: &Resolved) -> Result<i32, CliError> {
    let problem = cfg.problem("verify-drift")?;
    let section = cfg.verify_drift.as_ref().ok_or_else(|| {
        CliError::Config("the verify-drift command needs a verify_drift section".into())
    })?;
    let gamma_bar = section.gamma_bar.unwrap_or(problem.step.gamma);
    let drift = problem.drift.instantiate(problem.step.gamma)?;
    let cert = build_certificate(&drift, section.route, gamma_bar, section.exp_rate)?;
    // The audit is one-step; the horizon and replica fields are unused.
    let chain = chain_config(problem, 1, 1, rv.seed)?;
    let audit = verify_drift_mc(&cert, &chain, section.outer_pairs, section.inner_draws)?;

    let artifact = AuditArtifact {
        certificate: &cert,
        status: audit.outcome,
        worst_margin: audit.worst_margin,
        stderr: audit.worst_stderr,
        worst_pair: &audit.worst_pair,
        violations: audit.violations,
        unresolved: audit.unresolved,
        outer_pairs: audit.outer_pairs,
        inner_draws: audit.inner_draws,
    };
    let path = write_json(&rv.out_dir, "audit.json", &artifact)?;
    println!(
        "audit over {} pairs x {} draws: worst margin {} (stderr {})",
        audit.outer_pairs, audit.inner_draws, audit.worst_margin, audit.worst_stderr
    );
    println!("wrote {}", path.display());
    match audit.outcome {
        AuditOutcome::Pass => {
            println!("drift inequality holds");
            Ok(0)
        }
        AuditOutcome::Fail => {
            println!(
                "drift inequality VIOLATED for {} start pairs",
                audit.violations
            );
            Ok(1)
        }
        AuditOutcome::Inconclusive => Err(CliError::Numeric(format!(
            "insufficient samples: {} margins left unresolved at the 5% level; \
             enlarge inner_draws",
            audit.unresolved
        ))),
    }
}

fn build_certificate(
    drift: &DriftSpec,
    route: CertificateRoute,
    gamma_bar: f64,
    exp_rate: Option<f64>,
) -> Result<DriftCertificate, CliError> {
    let cert = match route {
        CertificateRoute::Distance => emcouple::linear_certificate(drift, gamma_bar)?,
        CertificateRoute::Quadratic => emcouple::quadratic_certificate(drift, gamma_bar)?,
        CertificateRoute::Exponential => {
            let rate = match exp_rate {
                Some(r) => r,
                None => {
                    let c3 = drift.weak.ok_or_else(|| {
                        CliError::Config(
                            "the exponential route needs the weak-dissipativity block (c3)".into(),
                        )
                    })?;
                    c3.k1 / 2.0
                }
            };
            emcouple::exponential_certificate(drift, gamma_bar, rate)?
        }
    };
    Ok(cert)
}

fn chain_config(
    problem: &ProblemSection,
    n_steps: usize,
    n_replicas: u64,
    seed: u64,
) -> Result<ChainConfig, CliError> {
    Ok(ChainConfig {
        drift: problem.drift.instantiate(problem.step.gamma)?,
        step: problem.step,
        proj: problem.projection.clone(),
        n_steps,
        n_replicas,
        seed,
    })
}

fn find_route(routes: &[RouteReport], want: CertificateRoute) -> Result<&RouteReport, CliError> {
    routes.iter().find(|r| r.route == want).ok_or_else(|| {
        CliError::Config(format!(
            "the {want:?} route is not available for this drift (missing curvature block)"
        ))
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("cannot serialize {name}: {e}")))?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
