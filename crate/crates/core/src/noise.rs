//! Finitely many Wiener modes acting through diagonal noise operators `psi`.
//!
//! `U` is identified with the span of the first `d_W` noise directions, which
//! alternate between velocity and temperature basis functions (lowest
//! eigenvalue first). Direction `j` carries the unit-amplitude basis function
//! `phi_j` and amplitude `sigma_j`; the operator is
//! `psi(t, Y) u = sum_j sigma_j g(c_j) u_j phi_j` with `c_j` the coefficient of
//! `Y` on `phi_j` and the gain `g` fixed by the kind.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::spectral::{DomainSpec, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    /// `g = 1`
    Additive,
    /// `g(c) = 1 + s tanh(c / s)`
    BoundedDiagonal,
    /// `g(c) = c`
    LinearDiagonal,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Additive, NoiseKind::BoundedDiagonal, NoiseKind::LinearDiagonal];
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Additive => "additive",
            NoiseKind::BoundedDiagonal => "bounded_diagonal",
            NoiseKind::LinearDiagonal => "linear_diagonal",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(NoiseKind::Additive),
            "bounded_diagonal" => Ok(NoiseKind::BoundedDiagonal),
            "linear_diagonal" => Ok(NoiseKind::LinearDiagonal),
            other => Err(Error::Config(format!(
                "unknown noise kind `{other}` (expected additive, bounded_diagonal or linear_diagonal)"
            ))),
        }
    }
}

/// A noise direction: a velocity or temperature basis function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    V(usize, usize),
    T(usize, usize),
}

impl Direction {
    pub fn mode(self) -> (usize, usize) {
        match self {
            Direction::V(k, m) | Direction::T(k, m) => (k, m),
        }
    }

    pub fn coeff(self, y: &State) -> f64 {
        match self {
            Direction::V(k, m) => y.v.coeff(k, m),
            Direction::T(k, m) => y.temp.coeff(k, m),
        }
    }

    fn add_to(self, y: &mut State, value: f64) {
        match self {
            Direction::V(k, m) => {
                let c = y.v.coeff(k, m);
                y.v.set(k, m, c + value);
            }
            Direction::T(k, m) => {
                let c = y.temp.coeff(k, m);
                y.temp.set(k, m, c + value);
            }
        }
    }

    fn mass(self, y: &State) -> f64 {
        match self {
            Direction::V(k, m) => y.v.mass(k, m),
            Direction::T(k, m) => y.temp.mass(k, m),
        }
    }
}

/// The first `count` noise directions on `domain`.
pub fn noise_directions(domain: &DomainSpec, count: usize) -> Result<Vec<Direction>> {
    let by_eigen = |mut modes: Vec<(usize, usize)>| {
        modes.sort_by(|a, b| {
            domain
                .eigenvalue(a.0, a.1)
                .total_cmp(&domain.eigenvalue(b.0, b.1))
                .then(a.cmp(b))
        });
        modes
    };
    let v = by_eigen((1..=domain.nx).flat_map(|k| (1..=domain.nz).map(move |m| (k, m))).collect());
    let t = by_eigen(
        (0..=domain.nx)
            .flat_map(|k| (0..=domain.nz).map(move |m| (k, m)))
            .filter(|&km| km != (0, 0))
            .collect(),
    );
    let available = v.len() + t.len();
    if count > available {
        return Err(Error::Config(format!(
            "noise.d_w = {count} exceeds the {available} available directions"
        )));
    }
    let mut out = Vec::with_capacity(count);
    let (mut iv, mut it) = (v.into_iter(), t.into_iter());
    while out.len() < count {
        if let Some((k, m)) = iv.next() {
            out.push(Direction::V(k, m));
        }
        if out.len() < count {
            if let Some((k, m)) = it.next() {
                out.push(Direction::T(k, m));
            }
        }
    }
    Ok(out)
}

/// A concrete diagonal noise operator with its Lipschitz/growth constant `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    sigma: Vec<f64>,
    saturation: f64,
    domain: DomainSpec,
    directions: Vec<Direction>,
    masses: Vec<f64>,
    k: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, sigma: Vec<f64>, saturation: f64, domain: DomainSpec) -> Result<Self> {
        if sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("noise amplitudes must be finite".into()));
        }
        if !(saturation.is_finite() && saturation > 0.0) {
            return Err(Error::Config(format!("noise.saturation must be > 0, got {saturation}")));
        }
        let directions = noise_directions(&domain, sigma.len())?;
        let probe = State::zeros(domain);
        let masses: Vec<f64> = directions.iter().map(|d| d.mass(&probe)).collect();
        let mut spec = NoiseSpec {
            kind,
            sigma,
            saturation,
            domain,
            directions,
            masses,
            k: 0.0,
        };
        spec.k = spec.closed_form_k();
        Ok(spec)
    }

    /// Same amplitude on every one of `d_w` directions.
    pub fn uniform(kind: NoiseKind, d_w: usize, sigma: f64, saturation: f64, domain: DomainSpec) -> Result<Self> {
        NoiseSpec::new(kind, vec![sigma; d_w], saturation, domain)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn d_w(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn saturation(&self) -> f64 {
        self.saturation
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    /// The stored constant `K` of the growth, Lipschitz and vertical-derivative bounds.
    pub fn constant_k(&self) -> f64 {
        self.k
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }

    /// Squared vertical wavenumber of direction `j`.
    fn kz_sq(&self, j: usize) -> f64 {
        self.domain.kz(self.directions[j].mode().1).powi(2)
    }

    fn closed_form_k(&self) -> f64 {
        let sig_max_sq = self.sigma.iter().fold(0.0f64, |a, s| a.max(s * s));
        let weighted = |w: &dyn Fn(usize) -> f64| -> f64 {
            (0..self.d_w()).map(|j| self.sigma[j].powi(2) * self.masses[j] * w(j)).sum()
        };
        let growth = weighted(&|_| 1.0);
        let dz_growth = weighted(&|j| self.kz_sq(j));
        match self.kind {
            NoiseKind::Additive => growth.max(dz_growth),
            NoiseKind::BoundedDiagonal => {
                let gmax_sq = (1.0 + self.saturation).powi(2);
                (gmax_sq * growth).max(gmax_sq * dz_growth).max(sig_max_sq)
            }
            // growth, Lipschitz and dz bounds all reduce to the largest amplitude
            NoiseKind::LinearDiagonal => sig_max_sq,
        }
    }

    fn gain(&self, c: f64) -> f64 {
        match self.kind {
            NoiseKind::Additive => 1.0,
            NoiseKind::BoundedDiagonal => 1.0 + self.saturation * (c / self.saturation).tanh(),
            NoiseKind::LinearDiagonal => c,
        }
    }

    /// `sigma_j g(c_j)` for every direction.
    pub fn diagonal(&self, y: &State) -> Vec<f64> {
        self.directions
            .iter()
            .zip(&self.sigma)
            .map(|(d, s)| s * self.gain(d.coeff(y)))
            .collect()
    }

    /// Unit-amplitude basis state of direction `j`.
    pub fn direction_state(&self, j: usize) -> State {
        let mut s = State::zeros(self.domain);
        self.directions[j].add_to(&mut s, 1.0);
        s
    }

    /// `psi(t, Y) u`.
    pub fn apply(&self, _t: f64, y: &State, u: ArrayView1<f64>) -> Result<State> {
        if u.len() != self.d_w() {
            return Err(Error::Shape(format!(
                "noise input has {} entries, expected d_w = {}",
                u.len(),
                self.d_w()
            )));
        }
        let mut out = State::zeros(self.domain);
        out.t = y.t;
        for ((dir, g), ui) in self.directions.iter().zip(self.diagonal(y)).zip(u.iter()) {
            dir.add_to(&mut out, g * ui);
        }
        Ok(out)
    }

    /// `psi(t, Y)^* p` with respect to the L2 pairing: `sigma_j g(c_j) (phi_j, p)`.
    pub fn adjoint(&self, _t: f64, y: &State, p: &State) -> Vec<f64> {
        self.diagonal(y)
            .into_iter()
            .enumerate()
            .map(|(j, g)| g * self.masses[j] * self.directions[j].coeff(p))
            .collect()
    }

    /// Hilbert-Schmidt norm squared of `psi(t, Y)`.
    pub fn hs_norm_sq(&self, y: &State) -> f64 {
        self.diagonal(y).iter().zip(&self.masses).map(|(g, m)| g * g * m).sum()
    }

    /// `|| psi(Y1) - psi(Y2) ||_HS^2`.
    pub fn hs_dist_sq(&self, y1: &State, y2: &State) -> f64 {
        self.diagonal(y1)
            .iter()
            .zip(self.diagonal(y2))
            .zip(&self.masses)
            .map(|((a, b), m)| (a - b).powi(2) * m)
            .sum()
    }

    /// `|| dz psi(Y) ||_HS^2`, with `dz` applied to the output field.
    pub fn dz_hs_norm_sq(&self, y: &State) -> f64 {
        self.diagonal(y)
            .iter()
            .enumerate()
            .map(|(j, g)| g * g * self.masses[j] * self.kz_sq(j))
            .sum()
    }
}

/// `psi(t, Y) u`.
pub fn apply_psi(spec: &NoiseSpec, t: f64, y: &State, u: ArrayView1<f64>) -> Result<State> {
    spec.apply(t, y, u)
}

/// Brownian increments on a time grid for `d_W` independent modes.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerPath {
    pub master_seed: u64,
    pub path_index: u64,
    pub grid: TimeGrid,
    increments: Array2<f64>,
}

impl WienerPath {
    /// `[step x mode]` array of `N(0, dt)` draws.
    pub fn increments(&self) -> &Array2<f64> {
        &self.increments
    }

    pub fn increment(&self, step: usize) -> ArrayView1<'_, f64> {
        self.increments.row(step)
    }

    pub fn d_w(&self) -> usize {
        self.increments.ncols()
    }
}

/// Generator for path `path_index` of a campaign: ChaCha8 keyed by the master
/// seed, on the stream selected by the path index.
pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Draws increments step by step, modes fastest; reproducible per `(master_seed, path_index)`.
pub fn sample_path(master_seed: u64, path_index: u64, grid: &TimeGrid, d_w: usize) -> WienerPath {
    let mut rng = path_rng(master_seed, path_index);
    let scale = grid.dt().sqrt();
    let increments = Array2::from_shape_simple_fn((grid.n_steps(), d_w), || {
        let g: f64 = rng.sample(StandardNormal);
        scale * g
    });
    WienerPath {
        master_seed,
        path_index,
        grid: *grid,
        increments,
    }
}

/// Empirical maxima of the three hypothesis ratios against the stored `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub kind: NoiseKind,
    pub k: f64,
    pub trials: usize,
    /// `max ||psi(phi)||^2 / (1 + |phi|^2)`
    pub max_growth: f64,
    /// `max ||psi(phi1) - psi(phi2)||^2 / |phi1 - phi2|^2`
    pub max_lipschitz: f64,
    /// `max ||dz psi(phi)||^2 / (1 + |dz phi|^2)`
    pub max_dz_growth: f64,
}

impl HypothesisReport {
    pub fn max_ratio(&self) -> f64 {
        self.max_growth.max(self.max_lipschitz).max(self.max_dz_growth)
    }

    /// `K - max ratio`; nonnegative when the hypotheses hold on the sample.
    pub fn margin(&self) -> f64 {
        self.k - self.max_ratio()
    }

    pub fn passes(&self) -> bool {
        self.max_ratio() <= self.k * (1.0 + 1e-12)
    }
}

/// Samples random states over several magnitudes and records the worst ratios.
pub fn verify_hypotheses(spec: &NoiseSpec, trials: usize, seed: u64) -> Result<HypothesisReport> {
    if trials == 0 {
        return Err(Error::Config("hypothesis check needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.domain;
    let mut rep = HypothesisReport {
        kind: spec.kind,
        k: spec.k,
        trials,
        max_growth: 0.0,
        max_lipschitz: 0.0,
        max_dz_growth: 0.0,
    };
    for _ in 0..trials {
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let phi = &State::random(d, &mut rng, 0.5) * scale;
        let delta = 10f64.powf(rng.random_range(-4.0..1.0));
        let phi2 = &phi + &(&State::random(d, &mut rng, 0.5) * delta);

        rep.max_growth = rep.max_growth.max(spec.hs_norm_sq(&phi) / (1.0 + phi.l2_sq()));
        let dist = (&phi - &phi2).l2_sq();
        if dist > 0.0 {
            rep.max_lipschitz = rep.max_lipschitz.max(spec.hs_dist_sq(&phi, &phi2) / dist);
        }
        rep.max_dz_growth = rep.max_dz_growth.max(spec.dz_hs_norm_sq(&phi) / (1.0 + phi.dz_l2_sq()));
    }
    Ok(rep)
}
