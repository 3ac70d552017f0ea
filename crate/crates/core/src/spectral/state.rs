use std::ops::{Add, Mul, Sub};

use rand::Rng;
use rand_distr::StandardNormal;

use super::domain::DomainSpec;
use super::field::{Field, TField, VField};
use crate::error::{Error, Result};

/// A truncated solution `Y = (v, T)` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub v: VField,
    pub temp: TField,
    pub t: f64,
}

/// The three norms monitored along trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Norms {
    /// `|Y|`
    pub l2: f64,
    /// `||Y||`
    pub h1: f64,
    /// `|dY/dz|`
    pub dz_l2: f64,
}

impl State {
    pub fn zeros(domain: DomainSpec) -> Self {
        State {
            v: VField::zeros(domain),
            temp: TField::zeros(domain),
            t: 0.0,
        }
    }

    pub fn new(v: VField, temp: TField) -> Result<Self> {
        if v.domain() != temp.domain() {
            return Err(Error::Shape("velocity and temperature on different domains".into()));
        }
        Ok(State { v, temp, t: 0.0 })
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn domain(&self) -> &DomainSpec {
        self.v.domain()
    }

    /// Random state with coefficients `N(0, 1) * (1 + k^2 + m^2)^(-decay)`.
    pub fn random<R: Rng + ?Sized>(domain: DomainSpec, rng: &mut R, decay: f64) -> Self {
        let mut draw = |k: usize, m: usize| {
            let g: f64 = rng.sample(StandardNormal);
            g * (1.0 + (k * k + m * m) as f64).powf(-decay)
        };
        let v = VField::from_fn(domain, &mut draw);
        let temp = TField::from_fn(domain, &mut draw);
        State { v, temp, t: 0.0 }
    }

    /// Smooth low-mode initial condition used by the campaigns.
    ///
    /// `v = a (e11 + e12/2 - e21/2)`, `T = a (e10 + e01/2 + e11/2)` where `e_km` are basis functions.
    pub fn smooth_initial(domain: DomainSpec, amplitude: f64) -> Self {
        let mut s = State::zeros(domain);
        s.v.set(1, 1, amplitude);
        s.v.set(1, 2, 0.5 * amplitude);
        s.v.set(2, 1, -0.5 * amplitude);
        s.temp.set(1, 0, amplitude);
        s.temp.set(0, 1, 0.5 * amplitude);
        s.temp.set(1, 1, 0.5 * amplitude);
        s
    }

    /// Exact L2(M) inner product `(v, v~) + (T, T~)`.
    pub fn inner(&self, other: &State) -> Result<f64> {
        if self.domain() != other.domain() {
            return Err(Error::Shape("states live on different domains".into()));
        }
        Ok(self.dot(other))
    }

    pub(crate) fn dot(&self, other: &State) -> f64 {
        self.v.dot(&other.v) + self.temp.dot(&other.temp)
    }

    pub fn l2_sq(&self) -> f64 {
        self.v.norm_sq() + self.temp.norm_sq()
    }

    /// `||Y||^2 = sum lambda(k, m) c^2 mass`.
    pub fn h1_sq(&self) -> f64 {
        let d = *self.domain();
        let w = |k: usize, m: usize| d.eigenvalue(k, m);
        self.v.weighted_norm_sq(w) + self.temp.weighted_norm_sq(w)
    }

    /// `|dY/dz|^2`.
    pub fn dz_l2_sq(&self) -> f64 {
        let d = *self.domain();
        let w = |_: usize, m: usize| d.kz(m).powi(2);
        self.v.weighted_norm_sq(w) + self.temp.weighted_norm_sq(w)
    }

    /// `||dY/dz||^2`.
    pub fn dz_h1_sq(&self) -> f64 {
        let d = *self.domain();
        let w = |k: usize, m: usize| d.kz(m).powi(2) * d.eigenvalue(k, m);
        self.v.weighted_norm_sq(w) + self.temp.weighted_norm_sq(w)
    }

    /// `|AY|^2`.
    pub fn a_l2_sq(&self) -> f64 {
        let d = *self.domain();
        let w = |k: usize, m: usize| d.eigenvalue(k, m).powi(2);
        self.v.weighted_norm_sq(w) + self.temp.weighted_norm_sq(w)
    }

    pub fn norms(&self) -> Norms {
        Norms {
            l2: self.l2_sq().sqrt(),
            h1: self.h1_sq().sqrt(),
            dz_l2: self.dz_l2_sq().sqrt(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.temp.is_finite()
    }

    /// `(dv/dz, dT/dz)` as raw fields.
    pub fn dz(&self) -> (Field, Field) {
        (self.v.dz(), self.temp.dz())
    }

    pub fn scale(&mut self, a: f64) {
        self.v.field_mut().scale(a);
        self.temp.scale(a);
    }

    pub fn scaled(&self, a: f64) -> State {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &State) {
        debug_assert_eq!(self.domain(), other.domain());
        self.v.field_mut().axpy(a, &other.v);
        self.temp.axpy(a, &other.temp);
    }

    /// Coefficients flattened as velocity `(k = 1..nx, m = 1..nz)` then temperature `(k = 0..nx, m = 0..nz)`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.domain().dof());
        out.extend(self.v.v_modes().map(|(k, m)| self.v.coeff(k, m)));
        out.extend(self.temp.modes().map(|(k, m)| self.temp.coeff(k, m)));
        out
    }

    pub fn from_flat(domain: DomainSpec, data: &[f64]) -> Result<Self> {
        if data.len() != domain.dof() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                domain.dof(),
                data.len()
            )));
        }
        let mut s = State::zeros(domain);
        let mut it = data.iter().copied();
        let v_modes: Vec<_> = s.v.v_modes().collect();
        for (k, m) in v_modes {
            s.v.set(k, m, it.next().unwrap());
        }
        let t_modes: Vec<_> = s.temp.modes().collect();
        for (k, m) in t_modes {
            s.temp.set(k, m, it.next().unwrap());
        }
        Ok(s)
    }

    /// Mode masses in `to_flat` order.
    pub fn flat_masses(domain: DomainSpec) -> Vec<f64> {
        let s = State::zeros(domain);
        let mut out = Vec::with_capacity(domain.dof());
        out.extend(s.v.v_modes().map(|(k, m)| s.v.mass(k, m)));
        out.extend(s.temp.modes().map(|(k, m)| s.temp.mass(k, m)));
        out
    }

    /// Basis state for flat index `i`, unit coefficient.
    pub fn unit(domain: DomainSpec, i: usize) -> State {
        let mut data = vec![0.0; domain.dof()];
        data[i] = 1.0;
        State::from_flat(domain, &data).expect("index within dof")
    }
}

impl Add<&State> for &State {
    type Output = State;
    fn add(self, rhs: &State) -> State {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub<&State> for &State {
    type Output = State;
    fn sub(self, rhs: &State) -> State {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &State {
    type Output = State;
    fn mul(self, a: f64) -> State {
        self.scaled(a)
    }
}

/// `inner(a, b)` with a shape check.
pub fn inner(a: &State, b: &State) -> Result<f64> {
    a.inner(b)
}

/// `(|Y|, ||Y||, |dY/dz|)`.
pub fn norms(y: &State) -> Norms {
    y.norms()
}
