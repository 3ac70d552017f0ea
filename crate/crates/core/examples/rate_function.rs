//! Moderate-deviation rate for a terminal hyperplane: adjoint closed form
//! against penalized gradient descent, on the full model.

use primeq::dynamics::{simulate_deterministic, SolverConfig, TimeGrid};
use primeq::noise::{NoiseKind, NoiseSpec};
use primeq::rate::{rate_for_terminal_hyperplane, rate_gradient_descent, StepRule};
use primeq::spectral::{DomainSpec, Space, State};

fn main() -> primeq::Result<()> {
    let domain = DomainSpec::new(1.0, 1.0, 6, 6)?;
    let cfg = SolverConfig::new(Space::new(domain)?, TimeGrid::new(1.0, 200)?);
    let spec = NoiseSpec::uniform(NoiseKind::BoundedDiagonal, 8, 0.5, 1.0, domain)?;
    let base = simulate_deterministic(&State::smooth_initial(domain, 1.0), &cfg)?;
    // constraint on the (1,1) velocity coefficient
    let phi = State::unit(domain, 0);

    for x in [0.05, 0.1, 0.2] {
        let closed = rate_for_terminal_hyperplane(&phi, x, &cfg, &spec, &base)?;
        let descent = rate_gradient_descent(&phi, x, &cfg, &spec, &base, 500, StepRule::default())?;
        println!(
            "x = {x:<4}: closed form {:.6e} (Q = {:.4e})  descent {:.6e} in {} iterations, rel. gap {:.2e}",
            closed.value,
            closed.gram,
            descent.value,
            descent.iterations,
            (descent.value - closed.value).abs() / closed.value
        );
    }
    Ok(())
}
