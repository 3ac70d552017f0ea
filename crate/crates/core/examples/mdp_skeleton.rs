//! Controlled process against the skeleton for a fixed control of energy 2,
//! with and without advection.

use primeq::dynamics::{simulate_deterministic, solve_skeleton, SolverConfig, TimeGrid};
use primeq::experiments::run_mdp_convergence;
use primeq::noise::{NoiseKind, NoiseSpec};
use primeq::operators::OperatorToggles;
use primeq::rate::ControlPath;
use primeq::spectral::{DomainSpec, Space, State};

fn main() -> primeq::Result<()> {
    let domain = DomainSpec::new(1.0, 1.0, 8, 8)?;
    let cfg = SolverConfig::new(Space::new(domain)?, TimeGrid::new(1.0, 400)?);
    let y0 = State::smooth_initial(domain, 1.0);
    let eps = [1e-2, 1e-3, 1e-4];

    let spec = NoiseSpec::uniform(NoiseKind::BoundedDiagonal, 8, 0.5, 1.0, domain)?;
    let h = ControlPath::smooth_profile(cfg.grid, 8, 2.0);
    let base = simulate_deterministic(&y0, &cfg)?;
    let skeleton = solve_skeleton(&h, &cfg, &spec, &base)?;
    println!(
        "skeleton: sup ||R||^2 = {:.4e}, int |AR|^2 = {:.4e}",
        skeleton.monitors.sup_h1_sq, skeleton.monitors.int_a_sq
    );

    let full = run_mdp_convergence(&y0, &h, &eps, 16, &cfg, &spec, 42)?;
    println!("full model");
    for row in &full.rows {
        println!(
            "  eps {:.0e}: mean sup|Z - R| = {:.6e}, estimator = {:.6e}",
            row.eps, row.diagnostics.sup_dist.mean, row.estimator.mean
        );
    }
    println!("  sup distance decreasing: {}", full.sup_dist_decreasing());

    let linear_cfg = cfg.with_toggles(OperatorToggles { enable_b: false, enable_g: true });
    let additive = NoiseSpec::uniform(NoiseKind::Additive, 8, 0.5, 1.0, domain)?;
    let no_b = run_mdp_convergence(&y0, &h, &eps, 16, &linear_cfg, &additive, 42)?;
    if let Some(fit) = no_b.fit {
        println!("without advection: slope {:.4} (2a = {})", fit.slope, 2.0 * cfg.lambda_exponent);
    }
    Ok(())
}
