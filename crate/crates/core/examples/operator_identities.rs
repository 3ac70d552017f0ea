//! Algebraic identities of the discrete advection operator on random states,
//! plus the cost of dropping the dealiasing pad.

use primeq::operators::{identity_suite, identity_suite_with_pad};
use primeq::spectral::DomainSpec;

fn main() -> primeq::Result<()> {
    let domain = DomainSpec::new(1.0, 1.0, 8, 8)?;
    for (label, report) in [
        ("pad 1.5", identity_suite(42, domain, 100)?),
        ("pad 1.0", identity_suite_with_pad(42, domain, 100, 1.0)?),
    ] {
        let r = report.decisive();
        println!(
            "{label}: trilinear {:.2e}  antisymmetry {:.2e}  energy {:.2e}  bound ratio {:.3}  -> {}",
            r.max_res_31(),
            r.max_res_antisym(),
            r.max_res_energy(),
            r.max_ratio_33(),
            if r.passes() { "ok" } else { "fails" }
        );
    }
    Ok(())
}
