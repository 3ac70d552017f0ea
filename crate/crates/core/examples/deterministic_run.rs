//! Deterministic solve from a smooth initial state: norm decay, the discrete
//! energy balance and first-order convergence of its defect.

use primeq::dynamics::{simulate_deterministic, SolverConfig, TimeGrid};
use primeq::spectral::{DomainSpec, Space, State};

fn main() -> primeq::Result<()> {
    let domain = DomainSpec::new(1.0, 1.0, 8, 8)?;
    let y0 = State::smooth_initial(domain, 1.0);
    let mut previous: Option<f64> = None;
    for n_steps in [200, 400, 800, 1600] {
        let cfg = SolverConfig::new(Space::new(domain)?, TimeGrid::new(1.0, n_steps)?);
        let traj = simulate_deterministic(&y0, &cfg)?;
        let defect = traj.energy_defect.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let last = traj.diagnostics.last().expect("non-empty trajectory");
        print!("n = {n_steps:>4}: |Y(T)| = {:.6e}  ||Y(T)|| = {:.6e}  max energy defect {defect:.4e}", last.l2, last.h1);
        match previous {
            Some(p) => println!("  ratio {:.3}", p / defect),
            None => println!(),
        }
        previous = Some(defect);
    }
    Ok(())
}
