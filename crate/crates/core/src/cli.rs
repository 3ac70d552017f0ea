//! Subcommand driver behind the `primeq` binary.
//!
//! Exit status: 0 success, 1 a scientific check failed, 2 bad configuration or
//! usage, 3 numerical blow-up. Every failure also leaves `error.csv` in the
//! output directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{parse_config, RunConfig};
use crate::dynamics::{simulate_deterministic, simulate_stochastic, solve_skeleton};
use crate::error::Error;
use crate::experiments::{run_clt_verification, run_mdp_convergence, run_strong_convergence, ExperimentReport};
use crate::io;
use crate::noise::{sample_path, verify_hypotheses, NoiseKind, NoiseSpec};
use crate::operators::{identity_suite, identity_suite_with_pad};
use crate::rate::{rate_for_terminal_hyperplane, rate_gradient_descent, StepRule};
use crate::spectral::DEFAULT_PAD;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;

pub const SUBCOMMANDS: [&str; 8] = ["identities", "hypotheses", "simulate", "strong", "clt", "mdp", "skeleton", "rate"];

/// Accepted band for the strong-deviation slope and its minimum r^2.
pub const STRONG_SLOPE_BAND: (f64, f64) = (0.85, 1.15);
pub const STRONG_MIN_R2: f64 = 0.99;
/// Allowed relative gap between the closed-form and descent rates.
pub const RATE_AGREEMENT: f64 = 0.01;

pub fn usage() -> String {
    format!(
        "usage: primeq <subcommand> --config <path> [--seed N] [--out DIR]\nsubcommands: {}",
        SUBCOMMANDS.join(", ")
    )
}

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BlowUp { .. } | Error::Stability { .. } => EXIT_BLOWUP,
        Error::DegenerateDirection { .. } | Error::Stall { .. } => EXIT_CHECK_FAILED,
        _ => EXIT_USAGE,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain { .. } => "domain",
        Error::Shape(_) => "shape",
        Error::Config(_) => "config",
        Error::CostGuard(_) => "cost_guard",
        Error::BlowUp { .. } => "blowup",
        Error::Stability { .. } => "stability",
        Error::GridMismatch(_) => "grid_mismatch",
        Error::DegenerateDirection { .. } => "degenerate_direction",
        Error::Stall { .. } => "stall",
        Error::Io(_) => "io",
    }
}

fn fail(out: &Path, kind: &str, message: &str, code: i32, digest: &str) -> i32 {
    eprintln!("primeq: {message}");
    if let Err(e) = io::write_error_csv(&out.join("error.csv"), kind, message, code, digest) {
        eprintln!("primeq: could not write error.csv: {e}");
    }
    code
}

/// Outcome of a subcommand that ran to completion.
enum Verdict {
    Pass,
    Fail(String),
}

/// Parses the config file, applies the overrides and runs one subcommand.
pub fn run_from_file(name: &str, config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> i32 {
    let fallback = out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => return fail(&fallback, "io", &format!("{}: {e}", config.display()), EXIT_USAGE, ""),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(&fallback, "config", &e.to_string(), EXIT_USAGE, ""),
    };
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(dir) = out {
        cfg = cfg.with_output_dir(dir);
    }
    run_subcommand(name, &cfg)
}

/// Runs one subcommand, writing its artifacts into `cfg.output_dir`.
pub fn run_subcommand(name: &str, cfg: &RunConfig) -> i32 {
    let out = cfg.output_dir.clone();
    let digest = cfg.digest();
    if !SUBCOMMANDS.contains(&name) {
        eprintln!("{}", usage());
        return fail(&out, "usage", &format!("unknown subcommand `{name}`"), EXIT_USAGE, &digest);
    }
    if let Err(e) = io::write_metadata(&out, name, &digest) {
        return fail(&out, error_kind(&e), &e.to_string(), exit_code(&e), &digest);
    }
    let result = match name {
        "identities" => identities(cfg, &out, &digest),
        "hypotheses" => hypotheses(cfg, &out, &digest),
        "simulate" => simulate(cfg, &out, &digest),
        "strong" => strong(cfg, &out, &digest),
        "clt" => clt(cfg, &out, &digest),
        "mdp" => mdp(cfg, &out, &digest),
        "skeleton" => skeleton(cfg, &out, &digest),
        "rate" => rate(cfg, &out, &digest),
        _ => unreachable!("checked against SUBCOMMANDS"),
    };
    match result {
        Ok(Verdict::Pass) => EXIT_OK,
        Ok(Verdict::Fail(msg)) => fail(&out, "check", &msg, EXIT_CHECK_FAILED, &digest),
        Err(e) => fail(&out, error_kind(&e), &e.to_string(), exit_code(&e), &digest),
    }
}

type Outcome = crate::Result<Verdict>;

fn identities(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let report = if cfg.pad == DEFAULT_PAD {
        identity_suite(cfg.master_seed, cfg.domain, cfg.trials)?
    } else {
        identity_suite_with_pad(cfg.master_seed, cfg.domain, cfg.trials, cfg.pad)?
    };
    io::write_identity_csv(&out.join("identities.csv"), &report, digest)?;
    if let Some(rerun) = &report.rerun {
        io::write_identity_csv(&out.join("identities_pad2.csv"), rerun, digest)?;
    }
    let r = report.decisive();
    println!(
        "identities: {} trials, pad {}: max res_31 {:.3e}, antisym {:.3e}, energy {:.3e}",
        r.rows.len(),
        r.pad,
        r.max_res_31(),
        r.max_res_antisym(),
        r.max_res_energy()
    );
    Ok(if r.passes() {
        Verdict::Pass
    } else {
        Verdict::Fail("identity residuals exceed tolerance".into())
    })
}

fn hypotheses(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let base = cfg.noise_spec()?;
    let reports = NoiseKind::ALL
        .iter()
        .map(|&kind| {
            let spec = NoiseSpec::new(kind, base.sigma().to_vec(), cfg.saturation, cfg.domain)?;
            verify_hypotheses(&spec, cfg.trials, cfg.master_seed)
        })
        .collect::<crate::Result<Vec<_>>>()?;
    io::write_hypotheses_csv(&out.join("hypotheses.csv"), &reports, cfg.master_seed, digest)?;
    for r in &reports {
        println!("hypotheses: {:<17} K = {:.4e}, max ratio {:.4e}", r.kind.to_string(), r.k, r.max_ratio());
    }
    Ok(match reports.iter().find(|r| !r.passes()) {
        None => Verdict::Pass,
        Some(r) => Verdict::Fail(format!("{} noise violates its stored constant", r.kind)),
    })
}

fn simulate(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let solver = cfg.solver_config()?;
    let spec = cfg.noise_spec()?;
    let y0 = cfg.initial_state();
    let det = simulate_deterministic(&y0, &solver)?;
    let eps = cfg.eps_list[0];
    let path = sample_path(cfg.master_seed, 0, &solver.grid, spec.d_w());
    let sto = simulate_stochastic(&y0, &solver.with_eps(eps), &spec, &path)?;
    if cfg.formats.csv {
        io::write_trajectory_csv(&out.join("deterministic.csv"), &det, cfg.master_seed, digest)?;
        io::write_trajectory_csv(&out.join("stochastic.csv"), &sto, cfg.master_seed, digest)?;
    }
    if cfg.formats.binary {
        io::write_trajectory_bin(&out.join("deterministic.bin"), &det)?;
        io::write_trajectory_bin(&out.join("stochastic.bin"), &sto)?;
    }
    println!(
        "simulate: |Y0(T)| = {:.6e}, |Y^eps(T)| = {:.6e} at eps = {eps:e}, energy defect {:.3e}",
        det.diagnostics.last().map_or(0.0, |d| d.l2),
        sto.diagnostics.last().map_or(0.0, |d| d.l2),
        det.energy_defect.last().copied().unwrap_or(0.0)
    );
    Ok(Verdict::Pass)
}

fn write_campaign(report: &mut ExperimentReport, out: &Path, digest: &str) -> crate::Result<()> {
    report.config_digest = digest.to_string();
    let name = report.campaign.name();
    io::write_report_csv(&out.join(format!("{name}.csv")), report)?;
    io::write_report_diagnostics_csv(&out.join(format!("{name}_diagnostics.csv")), report)?;
    for r in &report.rows {
        println!(
            "{name}: eps {:.1e}  mean {:.6e}  ci_half {:.3e}",
            r.eps, r.estimator.mean, r.estimator.ci_half
        );
    }
    match report.fit {
        Some(f) => println!("{name}: slope {:.4}  r2 {:.5}", f.slope, f.r2),
        None => println!("{name}: regression skipped"),
    }
    Ok(())
}

fn strong(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut report = run_strong_convergence(
        &cfg.initial_state(),
        &cfg.eps_list,
        cfg.paths,
        &cfg.solver_config()?,
        &cfg.noise_spec()?,
        cfg.master_seed,
    )?;
    write_campaign(&mut report, out, digest)?;
    Ok(match report.fit {
        Some(f) if !(STRONG_SLOPE_BAND.0..=STRONG_SLOPE_BAND.1).contains(&f.slope) || f.r2 < STRONG_MIN_R2 => {
            Verdict::Fail(format!("strong slope {:.4} (r2 {:.4}) outside the accepted band", f.slope, f.r2))
        }
        _ => Verdict::Pass,
    })
}

fn ordering_verdict(report: &ExperimentReport) -> Verdict {
    if report.nonincreasing_within_ci() {
        Verdict::Pass
    } else {
        Verdict::Fail(format!(
            "{} estimator increases as eps decreases beyond the confidence intervals",
            report.campaign.name()
        ))
    }
}

fn clt(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut report = run_clt_verification(
        &cfg.initial_state(),
        &cfg.eps_list,
        cfg.paths,
        &cfg.solver_config()?,
        &cfg.noise_spec()?,
        cfg.master_seed,
    )?;
    write_campaign(&mut report, out, digest)?;
    Ok(ordering_verdict(&report))
}

fn mdp(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut report = run_mdp_convergence(
        &cfg.initial_state(),
        &cfg.control(),
        &cfg.eps_list,
        cfg.paths,
        &cfg.solver_config()?,
        &cfg.noise_spec()?,
        cfg.master_seed,
    )?;
    write_campaign(&mut report, out, digest)?;
    Ok(ordering_verdict(&report))
}

fn skeleton(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let solver = cfg.solver_config()?;
    let spec = cfg.noise_spec()?;
    let base = simulate_deterministic(&cfg.initial_state(), &solver)?;
    let h = cfg.control();
    let r = solve_skeleton(&h, &solver, &spec, &base)?;
    if cfg.formats.csv {
        io::write_trajectory_csv(&out.join("skeleton.csv"), &r, cfg.master_seed, digest)?;
    }
    if cfg.formats.binary {
        io::write_trajectory_bin(&out.join("skeleton.bin"), &r)?;
        io::write_control_bin(&out.join("control.bin"), &h)?;
    }
    println!(
        "skeleton: energy(h) = {:.4e}, sup ||R||^2 = {:.6e}, int |AR|^2 = {:.6e}",
        h.energy(),
        r.monitors.sup_h1_sq,
        r.monitors.int_a_sq
    );
    Ok(Verdict::Pass)
}

fn rate(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let solver = cfg.solver_config()?;
    let spec = cfg.noise_spec()?;
    let base = simulate_deterministic(&cfg.initial_state(), &solver)?;
    let phi = cfg.phi();
    let x = cfg.rate_x;
    let closed = rate_for_terminal_hyperplane(&phi, x, &solver, &spec, &base)?;
    let descent = rate_gradient_descent(&phi, x, &solver, &spec, &base, cfg.rate_iters, StepRule::default())?;
    io::write_rate_csv(&out.join("rate.csv"), &[closed.clone(), descent.clone()], x, digest)?;
    if cfg.formats.binary {
        io::write_control_bin(&out.join("optimizer.bin"), &closed.optimizer)?;
    }
    println!(
        "rate: I = {:.8e} (closed form, Q = {:.4e}), {:.8e} (descent, {} iterations)",
        closed.value, closed.gram, descent.value, descent.iterations
    );
    let gap = (descent.value - closed.value).abs();
    Ok(if gap > RATE_AGREEMENT * closed.value {
        Verdict::Fail(format!("descent and closed form differ by {:.3e}", gap / closed.value))
    } else if closed.residual > 1e-6 * x.abs().max(f64::MIN_POSITIVE) {
        Verdict::Fail(format!("closed-form optimizer misses the constraint by {:.3e}", closed.residual))
    } else {
        Verdict::Pass
    })
}
