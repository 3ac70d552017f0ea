use ndarray::{Array2, ArrayView2};

use super::domain::DomainSpec;
use super::field::{Field, Parity, Trig};
use crate::error::{Error, Result};

/// Dealiasing ratio used for all pointwise products.
pub const DEFAULT_PAD: f64 = 1.5;

/// Midpoint collocation grid with direct-matrix sine/cosine transforms.
///
/// With `M` nodes per direction the midpoint rule integrates `cos(j pi s / len)`
/// exactly for `0 <= j < 2M`. The grid has `ceil(pad (N + 1))` nodes per direction,
/// so `pad >= 1` gives exact round trips and `pad >= 1.5` makes the triple products
/// behind Galerkin projection of quadratic terms alias-free.
#[derive(Clone, Debug)]
pub struct Collocation {
    domain: DomainSpec,
    pad: f64,
    xs: Vec<f64>,
    zs: Vec<f64>,
    sin_x: Array2<f64>,
    cos_x: Array2<f64>,
    sin_z: Array2<f64>,
    cos_z: Array2<f64>,
    wx: f64,
    wz: f64,
}

fn nodes(n: usize, len: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) * len / n as f64).collect()
}

fn table(points: &[f64], modes: usize, wavenumber: impl Fn(usize) -> f64, trig: Trig) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), modes + 1), |(i, k)| trig.eval(wavenumber(k) * points[i]))
}

impl Collocation {
    pub fn new(domain: DomainSpec, pad: f64) -> Result<Self> {
        if !(pad.is_finite() && pad >= 1.0) {
            return Err(Error::Config(format!(
                "collocation pad ratio must be >= 1 to resolve the band, got {pad}"
            )));
        }
        let mx = (pad * (domain.nx + 1) as f64).ceil() as usize;
        let mz = (pad * (domain.nz + 1) as f64).ceil() as usize;
        let xs = nodes(mx, domain.length);
        // nodes in zeta = z + depth
        let zs = nodes(mz, domain.depth);
        let kx = |k| domain.kx(k);
        let kz = |m| domain.kz(m);
        Ok(Collocation {
            sin_x: table(&xs, domain.nx, kx, Trig::Sin),
            cos_x: table(&xs, domain.nx, kx, Trig::Cos),
            sin_z: table(&zs, domain.nz, kz, Trig::Sin),
            cos_z: table(&zs, domain.nz, kz, Trig::Cos),
            wx: domain.length / mx as f64,
            wz: domain.depth / mz as f64,
            domain,
            pad,
            xs,
            zs,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn pad(&self) -> f64 {
        self.pad
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.xs.len(), self.zs.len())
    }

    /// Physical x-coordinates of the nodes.
    pub fn x_nodes(&self) -> &[f64] {
        &self.xs
    }

    /// Physical z-coordinates of the nodes (in `(-depth, 0)`).
    pub fn z_nodes(&self) -> Vec<f64> {
        self.zs.iter().map(|s| s - self.domain.depth).collect()
    }

    fn x_table(&self, t: Trig) -> &Array2<f64> {
        match t {
            Trig::Sin => &self.sin_x,
            Trig::Cos => &self.cos_x,
        }
    }

    fn z_table(&self, t: Trig) -> &Array2<f64> {
        match t {
            Trig::Sin => &self.sin_z,
            Trig::Cos => &self.cos_z,
        }
    }

    /// Values at the nodes, `values[i][j] = f(x_i, z_j)`.
    pub fn to_grid(&self, f: &Field) -> Array2<f64> {
        debug_assert_eq!(f.domain(), &self.domain);
        let (px, pz) = f.parity();
        self.x_table(px).dot(f.coeffs()).dot(&self.z_table(pz).t())
    }

    /// Galerkin projection of nodal values onto the band of the given parity.
    pub fn from_grid(&self, values: ArrayView2<f64>, parity: Parity) -> Result<Field> {
        let (mx, mz) = self.shape();
        if values.dim() != (mx, mz) {
            return Err(Error::Shape(format!(
                "grid values have shape {:?}, expected {:?}",
                values.dim(),
                (mx, mz)
            )));
        }
        let (px, pz) = parity;
        let mut c = self.x_table(px).t().dot(&values).dot(self.z_table(pz));
        let (lx, lz) = (self.domain.length, self.domain.depth);
        for ((k, m), c) in c.indexed_iter_mut() {
            let mass = px.mass(k, lx) * pz.mass(m, lz);
            *c = if mass > 0.0 { *c * self.wx * self.wz / mass } else { 0.0 };
        }
        Ok(Field::from_raw(self.domain, parity, c))
    }
}
