use std::ops::{Deref, DerefMut};

use ndarray::Array2;

use super::domain::DomainSpec;
use crate::error::{Error, Result};

/// Trigonometric family of a basis direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    pub fn flip(self) -> Trig {
        match self {
            Trig::Sin => Trig::Cos,
            Trig::Cos => Trig::Sin,
        }
    }

    #[inline]
    pub fn eval(self, arg: f64) -> f64 {
        match self {
            Trig::Sin => arg.sin(),
            Trig::Cos => arg.cos(),
        }
    }

    /// `int_0^len f(n pi s / len)^2 ds` for the unnormalized basis function.
    #[inline]
    pub fn mass(self, n: usize, len: f64) -> f64 {
        match (self, n) {
            (Trig::Sin, 0) => 0.0,
            (Trig::Cos, 0) => len,
            _ => 0.5 * len,
        }
    }

    /// Smallest admissible index: sine modes start at 1.
    #[inline]
    pub fn first(self) -> usize {
        match self {
            Trig::Sin => 1,
            Trig::Cos => 0,
        }
    }
}

/// Parity pair of a field: x-family, z-family.
pub type Parity = (Trig, Trig);

pub const V_PARITY: Parity = (Trig::Sin, Trig::Cos);
pub const T_PARITY: Parity = (Trig::Cos, Trig::Cos);
pub const THETA_PARITY: Parity = (Trig::Cos, Trig::Sin);

/// Truncated series `sum c(k, m) X_k(x) Z_m(z + depth)` with `X`, `Z` fixed by the parity.
///
/// Coefficients are stored in an `(nx + 1) x (nz + 1)` array. Entries with a sine
/// index of zero are structurally zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    domain: DomainSpec,
    parity: Parity,
    coeffs: Array2<f64>,
}

impl Field {
    pub fn zeros(domain: DomainSpec, parity: Parity) -> Self {
        Field {
            domain,
            parity,
            coeffs: Array2::zeros((domain.nx + 1, domain.nz + 1)),
        }
    }

    pub fn from_fn(domain: DomainSpec, parity: Parity, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Field::zeros(domain, parity);
        for (k, m) in out.modes() {
            out.coeffs[[k, m]] = f(k, m);
        }
        out
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize, m: usize) -> f64 {
        self.coeffs[[k, m]]
    }

    /// Sets one coefficient. Writes to structurally absent modes are ignored.
    pub fn set(&mut self, k: usize, m: usize, value: f64) {
        if self.admits(k, m) {
            self.coeffs[[k, m]] = value;
        }
    }

    pub fn admits(&self, k: usize, m: usize) -> bool {
        k >= self.parity.0.first() && m >= self.parity.1.first() && k <= self.domain.nx && m <= self.domain.nz
    }

    /// Admissible `(k, m)` indices in row-major order.
    pub fn modes(&self) -> impl Iterator<Item = (usize, usize)> {
        let (px, pz) = self.parity;
        let (nx, nz) = (self.domain.nx, self.domain.nz);
        (px.first()..=nx).flat_map(move |k| (pz.first()..=nz).map(move |m| (k, m)))
    }

    /// `int_M X_k^2 Z_m^2`.
    #[inline]
    pub fn mass(&self, k: usize, m: usize) -> f64 {
        self.parity.0.mass(k, self.domain.length) * self.parity.1.mass(m, self.domain.depth)
    }

    /// Pointwise value of the truncated series.
    pub fn eval(&self, x: f64, z: f64) -> Result<f64> {
        if !self.domain.contains(x, z) {
            return Err(Error::Domain { x, z });
        }
        let zeta = z + self.domain.depth;
        let (px, pz) = self.parity;
        let xs: Vec<f64> = (0..=self.domain.nx).map(|k| px.eval(self.domain.kx(k) * x)).collect();
        let zs: Vec<f64> = (0..=self.domain.nz).map(|m| pz.eval(self.domain.kz(m) * zeta)).collect();
        Ok(self.modes().map(|(k, m)| self.coeffs[[k, m]] * xs[k] * zs[m]).sum())
    }

    /// Exact `d/dx`, flipping the x-family.
    pub fn dx(&self) -> Field {
        let (px, pz) = self.parity;
        let d = self.domain;
        let sign = match px {
            Trig::Sin => 1.0,
            Trig::Cos => -1.0,
        };
        let mut out = Field::zeros(d, (px.flip(), pz));
        for (k, m) in self.modes() {
            out.set(k, m, sign * d.kx(k) * self.coeffs[[k, m]]);
        }
        out
    }

    /// Exact `d/dz`, flipping the z-family.
    pub fn dz(&self) -> Field {
        let (px, pz) = self.parity;
        let d = self.domain;
        let sign = match pz {
            Trig::Sin => 1.0,
            Trig::Cos => -1.0,
        };
        let mut out = Field::zeros(d, (px, pz.flip()));
        for (k, m) in self.modes() {
            out.set(k, m, sign * d.kz(m) * self.coeffs[[k, m]]);
        }
        out
    }

    /// `sum w(k, m) c(k, m)^2 mass(k, m)`.
    pub fn weighted_norm_sq(&self, w: impl Fn(usize, usize) -> f64) -> f64 {
        self.modes()
            .map(|(k, m)| {
                let c = self.coeffs[[k, m]];
                w(k, m) * c * c * self.mass(k, m)
            })
            .sum()
    }

    /// L2(M) inner product, exact from coefficients.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        if self.domain != other.domain {
            return Err(Error::Shape("fields live on different domains".into()));
        }
        if self.parity != other.parity {
            // distinct families are orthogonal only in special cases; refuse rather than guess
            return Err(Error::Shape(format!(
                "inner product between parities {:?} and {:?}",
                self.parity, other.parity
            )));
        }
        Ok(self.dot(other))
    }

    pub(crate) fn dot(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.parity, other.parity);
        self.modes()
            .map(|(k, m)| self.coeffs[[k, m]] * other.coeffs[[k, m]] * self.mass(k, m))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.weighted_norm_sq(|_, _| 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.mapv_inplace(|c| a * c);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        debug_assert_eq!(self.parity, other.parity);
        self.coeffs.scaled_add(a, &other.coeffs);
    }

    pub(crate) fn from_raw(domain: DomainSpec, parity: Parity, coeffs: Array2<f64>) -> Self {
        let mut f = Field { domain, parity, coeffs };
        f.clean();
        f
    }

    /// Zeros structurally absent entries.
    fn clean(&mut self) {
        if self.parity.0 == Trig::Sin {
            self.coeffs.row_mut(0).fill(0.0);
        }
        if self.parity.1 == Trig::Sin {
            self.coeffs.column_mut(0).fill(0.0);
        }
    }
}

/// Horizontal velocity: `sin(k pi x / L) cos(m pi (z + depth) / depth)`, `k, m >= 1`.
///
/// The `m = 0` column is absent, so the vertical mean of `v` vanishes identically.
#[derive(Clone, Debug, PartialEq)]
pub struct VField(Field);

impl VField {
    pub fn zeros(domain: DomainSpec) -> Self {
        VField(Field::zeros(domain, V_PARITY))
    }

    pub fn from_fn(domain: DomainSpec, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        VField::project(Field::from_fn(domain, V_PARITY, |k, m| if m == 0 { 0.0 } else { f(k, m) }))
    }

    /// Drops the vertical mean of a `(Sin, Cos)` field.
    pub fn project(mut f: Field) -> Self {
        assert_eq!(f.parity(), V_PARITY, "velocity requires (sin, cos) parity");
        f.coeffs.column_mut(0).fill(0.0);
        VField(f)
    }

    pub fn set(&mut self, k: usize, m: usize, value: f64) {
        if m >= 1 {
            self.0.set(k, m, value);
        }
    }

    pub fn as_field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    pub(crate) fn field_mut(&mut self) -> &mut Field {
        &mut self.0
    }

    /// Velocity modes `k, m >= 1` in row-major order.
    pub fn v_modes(&self) -> impl Iterator<Item = (usize, usize)> {
        let (nx, nz) = (self.0.domain.nx, self.0.domain.nz);
        (1..=nx).flat_map(move |k| (1..=nz).map(move |m| (k, m)))
    }
}

impl Deref for VField {
    type Target = Field;
    fn deref(&self) -> &Field {
        &self.0
    }
}

/// Temperature: `cos(k pi x / L) cos(m pi (z + depth) / depth)`, `k, m >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TField(Field);

impl TField {
    pub fn zeros(domain: DomainSpec) -> Self {
        TField(Field::zeros(domain, T_PARITY))
    }

    pub fn from_fn(domain: DomainSpec, f: impl FnMut(usize, usize) -> f64) -> Self {
        TField(Field::from_fn(domain, T_PARITY, f))
    }

    pub fn new(f: Field) -> Self {
        assert_eq!(f.parity(), T_PARITY, "temperature requires (cos, cos) parity");
        TField(f)
    }

    pub fn as_field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }
}

impl Deref for TField {
    type Target = Field;
    fn deref(&self) -> &Field {
        &self.0
    }
}

impl DerefMut for TField {
    fn deref_mut(&mut self) -> &mut Field {
        &mut self.0
    }
}

/// Vertical velocity `theta = -int_{-depth}^{z} dv/dx dz'`, in closed form per mode.
pub fn phi_of_v(v: &VField) -> Field {
    let d = *v.domain();
    let mut out = Field::zeros(d, THETA_PARITY);
    for (k, m) in v.v_modes() {
        out.set(k, m, -d.kx(k) / d.kz(m) * v.coeff(k, m));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit() -> DomainSpec {
        DomainSpec::new(1.0, 1.0, 3, 3).unwrap()
    }

    #[test]
    fn eval_basics() {
        let d = DomainSpec::new(2.0, 0.7, 3, 2).unwrap();
        let zero = VField::zeros(d);
        assert_eq!(zero.eval(0.3, -0.2).unwrap(), 0.0);

        let mut v = VField::zeros(d);
        v.set(1, 1, 1.0);
        assert!((v.eval(1.0, -0.7).unwrap() - 1.0).abs() < 1e-14);

        let mut t = TField::zeros(d);
        t.set(0, 0, 1.0);
        for &(x, z) in &[(0.0, 0.0), (1.3, -0.5), (2.0, -0.7)] {
            assert!((t.eval(x, z).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(matches!(t.eval(2.5, -0.1), Err(Error::Domain { .. })));
        assert!(matches!(t.eval(0.5, 0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn velocity_has_no_vertical_mean_slot() {
        let mut v = VField::from_fn(unit(), |k, m| (k + m) as f64);
        v.set(2, 0, 5.0);
        for k in 0..=3 {
            assert_eq!(v.coeff(k, 0), 0.0);
        }
    }

    #[test]
    fn derivative_of_first_mode() {
        let d = DomainSpec::new(1.5, 1.0, 2, 2).unwrap();
        let mut v = VField::zeros(d);
        v.set(1, 1, 1.0);
        let vx = v.dx();
        assert_eq!(vx.parity(), (Trig::Cos, Trig::Cos));
        assert!((vx.coeff(1, 1) - PI / 1.5).abs() < 1e-15);

        let mut t = TField::zeros(d);
        t.set(2, 0, 3.0);
        assert_eq!(t.dz().norm_sq(), 0.0);

        let t = TField::from_fn(d, |k, m| 1.0 + k as f64 - m as f64);
        let tzz = t.dz().dz();
        for (k, m) in t.modes() {
            let expect = -d.kz(m).powi(2) * t.coeff(k, m);
            assert!((tzz.coeff(k, m) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_closed_form_and_boundary_values() {
        let d = DomainSpec::new(1.0, 1.0, 2, 2).unwrap();
        let mut v = VField::zeros(d);
        v.set(1, 1, 1.0);
        let theta = phi_of_v(&v);
        for &(x, z) in &[(0.1, -0.3), (0.6, -0.9), (0.25, -0.5)] {
            let expect = -(PI * x).cos() * (PI * (z + 1.0)).sin();
            assert!((theta.eval(x, z).unwrap() - expect).abs() < 1e-14);
        }
        assert_eq!(phi_of_v(&VField::zeros(d)).norm_sq(), 0.0);
    }

    #[test]
    fn phi_matches_numerical_vertical_integral() {
        let d = DomainSpec::new(1.3, 0.8, 3, 3).unwrap();
        let v = VField::from_fn(d, |k, m| ((k * 7 + m * 3) % 5) as f64 - 2.0);
        let theta = phi_of_v(&v);
        let vx = v.dx();
        let (x, z) = (0.47, -0.21);
        // composite Simpson in z' on [-depth, z]
        let n = 2000;
        let a = -d.depth;
        let h = (z - a) / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * vx.eval(x, a + i as f64 * h).unwrap();
        }
        let integral = -s * h / 3.0;
        assert!((theta.eval(x, z).unwrap() - integral).abs() < 1e-10);
    }

    #[test]
    fn inner_rejects_mismatch() {
        let a = VField::zeros(unit());
        let b = VField::zeros(DomainSpec::new(2.0, 1.0, 3, 3).unwrap());
        assert!(matches!(a.inner(&b), Err(Error::Shape(_))));
        let t = TField::zeros(unit());
        assert!(a.inner(&t).is_err());
    }
}
