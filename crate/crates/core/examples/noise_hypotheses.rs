//! Randomized check of the growth and Lipschitz constants stored with each
//! noise coefficient.

use primeq::noise::{verify_hypotheses, NoiseKind, NoiseSpec};
use primeq::spectral::DomainSpec;

fn main() -> primeq::Result<()> {
    let domain = DomainSpec::new(1.0, 1.0, 8, 8)?;
    for kind in NoiseKind::ALL {
        let spec = NoiseSpec::uniform(kind, 8, 0.5, 1.0, domain)?;
        let r = verify_hypotheses(&spec, 200, 7)?;
        println!(
            "{:<17} K = {:.4e}  growth {:.4e}  lipschitz {:.4e}  dz growth {:.4e}  margin {:.3}",
            kind.to_string(),
            r.k,
            r.max_growth,
            r.max_lipschitz,
            r.max_dz_growth,
            r.margin()
        );
    }
    Ok(())
}
