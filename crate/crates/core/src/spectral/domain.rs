use std::f64::consts::PI;

use crate::error::{Error, Result};

/// The rectangle `(0, L) x (-depth, 0)` together with its spectral truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainSpec {
    pub length: f64,
    pub depth: f64,
    pub nx: usize,
    pub nz: usize,
}

impl DomainSpec {
    pub fn new(length: f64, depth: f64, nx: usize, nz: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!("domain length must be > 0, got {length}")));
        }
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::Config(format!("domain depth must be > 0, got {depth}")));
        }
        if nx == 0 || nz == 0 {
            return Err(Error::Config(format!(
                "mode counts must be >= 1, got nx = {nx}, nz = {nz}"
            )));
        }
        Ok(DomainSpec { length, depth, nx, nz })
    }

    /// Horizontal wavenumber `k pi / L`.
    #[inline]
    pub fn kx(&self, k: usize) -> f64 {
        k as f64 * PI / self.length
    }

    /// Vertical wavenumber `m pi / depth`.
    #[inline]
    pub fn kz(&self, m: usize) -> f64 {
        m as f64 * PI / self.depth
    }

    /// Eigenvalue of `-Laplacian` on mode `(k, m)`.
    #[inline]
    pub fn eigenvalue(&self, k: usize, m: usize) -> f64 {
        let a = self.kx(k);
        let b = self.kz(m);
        a * a + b * b
    }

    /// Smallest nonzero eigenvalue over the velocity and temperature bases.
    pub fn lambda_min(&self) -> f64 {
        let t_min = self.eigenvalue(1, 0).min(self.eigenvalue(0, 1));
        t_min.min(self.eigenvalue(1, 1))
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalue(self.nx, self.nz)
    }

    /// Poincare constant `1 / sqrt(lambda_min)` for states with zero mean temperature.
    pub fn poincare_constant(&self) -> f64 {
        1.0 / self.lambda_min().sqrt()
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let sx = 1e-12 * self.length;
        let sz = 1e-12 * self.depth;
        x >= -sx && x <= self.length + sx && z >= -self.depth - sz && z <= sz
    }

    /// Number of velocity coefficients, `nx * nz`.
    pub fn v_dof(&self) -> usize {
        self.nx * self.nz
    }

    /// Number of temperature coefficients, `(nx + 1) * (nz + 1)`.
    pub fn t_dof(&self) -> usize {
        (self.nx + 1) * (self.nz + 1)
    }

    pub fn dof(&self) -> usize {
        self.v_dof() + self.t_dof()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(DomainSpec::new(0.0, 1.0, 4, 4).is_err());
        assert!(DomainSpec::new(1.0, -1.0, 4, 4).is_err());
        assert!(DomainSpec::new(1.0, 1.0, 0, 4).is_err());
        assert!(DomainSpec::new(f64::NAN, 1.0, 4, 4).is_err());
    }

    #[test]
    fn eigenvalues_positive_except_constant_mode() {
        let d = DomainSpec::new(2.0, 0.5, 5, 3).unwrap();
        for k in 0..=d.nx {
            for m in 0..=d.nz {
                let lam = d.eigenvalue(k, m);
                if k == 0 && m == 0 {
                    assert_eq!(lam, 0.0);
                } else {
                    assert!(lam > 0.0);
                    assert!(lam >= d.lambda_min());
                }
            }
        }
        let unit = DomainSpec::new(1.0, 1.0, 1, 1).unwrap();
        assert!((unit.eigenvalue(1, 1) - 2.0 * PI * PI).abs() < 1e-12);
    }
}
