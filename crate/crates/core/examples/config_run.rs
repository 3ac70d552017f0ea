//! Drives the `strong` subcommand from an in-memory config, the same path the
//! `primeq` binary takes after reading its file.

use primeq::cli::run_subcommand;
use primeq::config::parse_config;

const CONFIG: &str = "
domain.nx = 6
domain.nz = 6
grid.n_steps = 200
noise.kind = linear_diagonal
noise.sigma = 0.4
solver.eps = 1e-1, 1e-2, 1e-3
experiment.paths = 16
";

fn main() {
    let out = std::env::temp_dir().join("primeq_config_run");
    let cfg = match parse_config(CONFIG) {
        Ok(c) => c.with_output_dir(out.clone()),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    println!("config digest {}", cfg.digest());
    let code = run_subcommand("strong", &cfg);
    println!("exit status {code}, artifacts in {}", out.display());
}
