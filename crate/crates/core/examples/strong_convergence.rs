//! Strong deviation scaling: `E[sup |Y^eps - Y0|^2 + int ||Y^eps - Y0||^2]` against `eps`
//! on the full model, with a log-log fit.

use primeq::dynamics::{SolverConfig, TimeGrid};
use primeq::experiments::run_strong_convergence;
use primeq::noise::{NoiseKind, NoiseSpec};
use primeq::spectral::{DomainSpec, Space, State};

fn main() -> primeq::Result<()> {
    let domain = DomainSpec::new(1.0, 1.0, 8, 8)?;
    let cfg = SolverConfig::new(Space::new(domain)?, TimeGrid::new(1.0, 400)?);
    let spec = NoiseSpec::uniform(NoiseKind::BoundedDiagonal, 8, 0.5, 1.0, domain)?;
    let y0 = State::smooth_initial(domain, 1.0);

    let report = run_strong_convergence(&y0, &[1e-1, 1e-2, 1e-3], 64, &cfg, &spec, 42)?;
    println!("{:>8} {:>14} {:>14}", "eps", "mean", "ci_half");
    for row in &report.rows {
        println!("{:>8.0e} {:>14.6e} {:>14.6e}", row.eps, row.estimator.mean, row.estimator.ci_half);
    }
    if let Some(fit) = report.fit {
        println!("slope {:.4}  r2 {:.5}", fit.slope, fit.r2);
    }
    Ok(())
}
