//! Controls, their energy, and the rate function for linear terminal constraints.
//!
//! The skeleton map `h -> R^h` is linear, so for the constraint
//! `(R^h(T), phi) = x` the infimum of the energy is attained at a multiple of the
//! gradient of the constraint. That gradient comes from a backward costate sweep
//! whose operators are numerical transposes of the frozen-coefficient drift.

use std::fmt;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{linearized_drift, solve_skeleton, SolverConfig, TimeGrid, Trajectory, TrajectoryKind};
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::spectral::{DomainSpec, State, TField, VField};

/// Piecewise-constant control with values `[step x mode]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPath {
    grid: TimeGrid,
    values: Array2<f64>,
}

impl ControlPath {
    pub fn zeros(grid: TimeGrid, d_w: usize) -> Self {
        ControlPath {
            grid,
            values: Array2::zeros((grid.n_steps(), d_w)),
        }
    }

    pub fn from_values(grid: TimeGrid, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != grid.n_steps() {
            return Err(Error::Shape(format!(
                "control has {} rows, grid has {} steps",
                values.nrows(),
                grid.n_steps()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("control values must be finite".into()));
        }
        Ok(ControlPath { grid, values })
    }

    /// Standard normal entries, reproducible per seed.
    pub fn random(grid: TimeGrid, d_w: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = Array2::from_shape_simple_fn((grid.n_steps(), d_w), || rng.sample::<f64, _>(StandardNormal));
        ControlPath { grid, values }
    }

    /// Fixed smooth profile `h_j(t) = cos(2 pi t / T + j) / (1 + j)` scaled to the given energy.
    pub fn smooth_profile(grid: TimeGrid, d_w: usize, energy: f64) -> Self {
        let period = grid.t_end();
        let values = Array2::from_shape_fn((grid.n_steps(), d_w), |(n, j)| {
            (2.0 * std::f64::consts::PI * grid.t(n) / period + j as f64).cos() / (1.0 + j as f64)
        });
        let h = ControlPath { grid, values };
        let e = h.energy();
        if e > 0.0 {
            h.scaled((energy / e).sqrt())
        } else {
            h
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn d_w(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn step(&self, n: usize) -> ArrayView1<'_, f64> {
        self.values.row(n)
    }

    pub fn scaled(&self, a: f64) -> Self {
        ControlPath {
            grid: self.grid,
            values: &self.values * a,
        }
    }

    /// `1/2 int |h|_U^2 dt`.
    pub fn energy(&self) -> f64 {
        0.5 * self.grid.dt() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// `int |h|_U^2 dt <= m`.
    pub fn in_ball(&self, m: f64) -> bool {
        2.0 * self.energy() <= m
    }

    /// `sum_n dt <h_n, k_n>_U`.
    pub fn inner(&self, other: &ControlPath) -> f64 {
        self.grid.dt() * self.values.iter().zip(other.values.iter()).map(|(a, b)| a * b).sum::<f64>()
    }

    fn axpy(&mut self, a: f64, other: &ControlPath) {
        self.values.scaled_add(a, &other.values);
    }
}

/// `1/2 int |h|_U^2 dt`.
pub fn energy(h: &ControlPath) -> f64 {
    h.energy()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMethod {
    AdjointClosedForm,
    GradientDescent,
}

impl fmt::Display for RateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateMethod::AdjointClosedForm => "adjoint_closed_form",
            RateMethod::GradientDescent => "gradient_descent",
        })
    }
}

/// One accepted descent iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescentRecord {
    pub iteration: usize,
    pub penalty: f64,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateResult {
    pub value: f64,
    pub optimizer: ControlPath,
    pub method: RateMethod,
    /// `|(R^h(T), phi) - x|` after a forward solve with the optimizer.
    pub residual: f64,
    /// Gram value `Q = sum dt |psi^* S p_{n+1}|^2`.
    pub gram: f64,
    pub iterations: usize,
    pub log: Vec<DescentRecord>,
}

/// Relative floor on `Q / |phi|^2` below which the direction counts as unreachable.
pub const GRAM_TOL: f64 = 1e-12;

fn zeros_like(d: DomainSpec, t: f64) -> State {
    State::zeros(d).with_time(t)
}

/// Transpose of the frozen drift `r -> B(Y0, r) + B(r, Y0) + G(r)` in the L2 pairing:
/// `(L^* p)_i = (L e_i, p) / mass_i`.
fn drift_adjoint(y0: &State, columns: &[State], masses: &[f64], p: &State) -> State {
    let d = *y0.domain();
    let flat: Vec<f64> = columns.iter().zip(masses).map(|(c, m)| c.dot(p) / m).collect();
    State::from_flat(d, &flat).expect("dof-sized").with_time(p.t)
}

fn drift_columns(cfg: &SolverConfig, y0: &State) -> Vec<State> {
    let d = *y0.domain();
    (0..d.dof()).map(|i| linearized_drift(cfg, y0, &State::unit(d, i))).collect()
}

/// Diagonal resolvent `(I + dt A)^-1`.
fn resolvent(y: &State, dt: f64) -> State {
    let d = *y.domain();
    let v = VField::from_fn(d, |k, m| y.v.coeff(k, m) / (1.0 + dt * d.eigenvalue(k, m)));
    let temp = TField::from_fn(d, |k, m| y.temp.coeff(k, m) / (1.0 + dt * d.eigenvalue(k, m)));
    State { v, temp, t: y.t }
}

/// Backward costate sweep for `J(h) = (R^h(T), phi)`.
///
/// `p_N = phi` and `p_n = (I - dt L_n)^* (I + dt A)^-1 p_{n+1}`, where `L_n` is the
/// drift linearized at `Y0(t_n)`. Then `J(h) = sum_n dt <h_n, psi_n^* (I + dt A)^-1 p_{n+1}>_U`.
pub fn adjoint_solve(phi: &State, cfg: &SolverConfig, base: &Trajectory) -> Result<Trajectory> {
    if base.grid != cfg.grid {
        return Err(Error::GridMismatch(format!(
            "base trajectory grid {:?} differs from solver grid {:?}",
            base.grid, cfg.grid
        )));
    }
    if !phi.is_finite() {
        return Err(Error::Shape("terminal functional must be finite".into()));
    }
    let d = *phi.domain();
    if d != *base.initial().domain() {
        return Err(Error::Shape("terminal functional and base on different domains".into()));
    }
    let grid = cfg.grid;
    let dt = grid.dt();
    let n = grid.n_steps();
    let active = cfg.toggles.enable_b || cfg.toggles.enable_g;
    let masses = State::flat_masses(d);
    let mut states = vec![zeros_like(d, 0.0); n + 1];
    states[n] = phi.clone().with_time(grid.t(n));
    let mut cached: Option<(usize, Vec<State>)> = None;
    for i in (0..n).rev() {
        let q = resolvent(&states[i + 1], dt);
        let mut p = q.clone();
        if active {
            let y0 = base.state_at_step(i);
            let key = i / base.record_every;
            if cached.as_ref().map(|c| c.0) != Some(key) {
                cached = Some((key, drift_columns(cfg, y0)));
            }
            let cols = &cached.as_ref().expect("just filled").1;
            p.axpy(-dt, &drift_adjoint(y0, cols, &masses, &q));
        }
        if !p.is_finite() {
            return Err(Error::BlowUp {
                t: grid.t(i),
                detail: "nonfinite costate".into(),
            });
        }
        states[i] = p.with_time(grid.t(i));
    }
    Ok(Trajectory::from_states(TrajectoryKind::Adjoint, grid, cfg.toggles, states))
}

/// Gradient representer `g_n = psi(t_n, Y0)^* (I + dt A)^-1 p_{n+1}` of `J`.
pub fn constraint_gradient(adjoint: &Trajectory, spec: &NoiseSpec, base: &Trajectory) -> ControlPath {
    let grid = adjoint.grid;
    let dt = grid.dt();
    let mut values = Array2::zeros((grid.n_steps(), spec.d_w()));
    for n in 0..grid.n_steps() {
        let q = resolvent(adjoint.state_at_step(n + 1), dt);
        let g = spec.adjoint(grid.t(n), base.state_at_step(n), &q);
        values.row_mut(n).assign(&ArrayView1::from(&g));
    }
    ControlPath { grid, values }
}

/// `(R^h(T), phi)` by a forward skeleton solve.
pub fn terminal_value(h: &ControlPath, phi: &State, cfg: &SolverConfig, spec: &NoiseSpec, base: &Trajectory) -> Result<f64> {
    let r = solve_skeleton(h, cfg, spec, base)?;
    phi.inner(r.last())
}

/// `I = x^2 / (2Q)` with optimizer `h* = (x / Q) g`.
pub fn rate_for_terminal_hyperplane(
    phi: &State,
    x: f64,
    cfg: &SolverConfig,
    spec: &NoiseSpec,
    base: &Trajectory,
) -> Result<RateResult> {
    let adj = adjoint_solve(phi, cfg, base)?;
    let g = constraint_gradient(&adj, spec, base);
    let q = g.inner(&g);
    let tol = GRAM_TOL * phi.l2_sq();
    if !(q > tol) {
        return Err(Error::DegenerateDirection { q, tol });
    }
    let optimizer = g.scaled(x / q);
    let residual = (terminal_value(&optimizer, phi, cfg, spec, base)? - x).abs();
    Ok(RateResult {
        value: x * x / (2.0 * q),
        optimizer,
        method: RateMethod::AdjointClosedForm,
        residual,
        gram: q,
        iterations: 0,
        log: Vec::new(),
    })
}

/// Line-search and stopping parameters for [`rate_gradient_descent`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRule {
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Relative objective decrease below which a penalty stage has plateaued.
    pub plateau: f64,
    /// Relative constraint violation accepted at a plateau.
    pub constraint_tol: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 60,
            plateau: 1e-10,
            constraint_tol: 1e-4,
        }
    }
}

/// Penalized descent on `energy(h) + P ((R^h(T), phi) - x)^2` from `h = 0`.
///
/// `P` starts at `100 / Q` and doubles whenever a stage plateaus with the
/// constraint still violated. The objective is nonincreasing within each stage.
pub fn rate_gradient_descent(
    phi: &State,
    x: f64,
    cfg: &SolverConfig,
    spec: &NoiseSpec,
    base: &Trajectory,
    iters: usize,
    rule: StepRule,
) -> Result<RateResult> {
    if iters == 0 {
        return Err(Error::Config("rate.iters must be >= 1".into()));
    }
    let adj = adjoint_solve(phi, cfg, base)?;
    let g = constraint_gradient(&adj, spec, base);
    let q = g.inner(&g);
    let tol = GRAM_TOL * phi.l2_sq();
    if !(q > tol) {
        return Err(Error::DegenerateDirection { q, tol });
    }
    let constraint = |h: &ControlPath| terminal_value(h, phi, cfg, spec, base);
    let objective = |h: &ControlPath, j: f64, p: f64| h.energy() + p * (j - x).powi(2);
    let scale = x.abs().max(f64::MIN_POSITIVE);

    let mut penalty = 100.0 / q;
    let mut h = ControlPath::zeros(cfg.grid, spec.d_w());
    let mut j = constraint(&h)?;
    let mut f = objective(&h, j, penalty);
    let mut log = vec![DescentRecord {
        iteration: 0,
        penalty,
        objective: f,
        residual: (j - x).abs(),
    }];
    let mut iteration = 0;
    while iteration < iters {
        // gradient in the sum_n dt <., .> metric
        let mut grad = h.clone();
        grad.axpy(2.0 * penalty * (j - x), &g);
        let gnorm_sq = grad.inner(&grad);
        let converged_stage = gnorm_sq <= 1e-28 * (1.0 + f.abs());
        if converged_stage && (j - x).abs() <= rule.constraint_tol * scale {
            break;
        }
        let mut accepted = None;
        if !converged_stage {
            let mut step = rule.initial_step;
            for _ in 0..rule.max_backtracks {
                let mut trial = h.clone();
                trial.axpy(-step, &grad);
                // an overshooting trial may trip the stability or blow-up guard; shrink instead
                let jt = match constraint(&trial) {
                    Ok(v) => v,
                    Err(Error::Stability { .. } | Error::BlowUp { .. }) => {
                        step *= rule.shrink;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let ft = objective(&trial, jt, penalty);
                if ft <= f - rule.armijo * step * gnorm_sq {
                    accepted = Some((trial, jt, ft));
                    break;
                }
                step *= rule.shrink;
            }
        }
        iteration += 1;
        match accepted {
            Some((trial, jt, ft)) => {
                let decrease = f - ft;
                h = trial;
                j = jt;
                f = ft;
                log.push(DescentRecord {
                    iteration,
                    penalty,
                    objective: f,
                    residual: (j - x).abs(),
                });
                if decrease > rule.plateau * f.abs() {
                    continue;
                }
            }
            None if !converged_stage && gnorm_sq > 1e-20 * (1.0 + f * f) => {
                return Err(Error::Stall {
                    iterations: iteration,
                    best_objective: f,
                });
            }
            None => {}
        }
        if (j - x).abs() <= rule.constraint_tol * scale {
            break;
        }
        penalty *= 2.0;
        f = objective(&h, j, penalty);
        log.push(DescentRecord {
            iteration,
            penalty,
            objective: f,
            residual: (j - x).abs(),
        });
    }
    Ok(RateResult {
        value: h.energy(),
        residual: (j - x).abs(),
        optimizer: h,
        method: RateMethod::GradientDescent,
        gram: q,
        iterations: iteration,
        log,
    })
}
