//! Semi-implicit Euler-Maruyama time stepping: implicit in `A`, explicit in `B`
//! and `G`, noise and controls at the left endpoint.

use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, WienerPath};
use crate::operators::{apply_b, apply_g, OperatorToggles};
use crate::rate::ControlPath;
use crate::spectral::{Space, State, TField, VField};

/// Uniform grid on `[0, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Config(format!("grid.t_end must be > 0, got {t_end}")));
        }
        if n_steps == 0 {
            return Err(Error::Config("grid.n_steps must be >= 1".into()));
        }
        Ok(TimeGrid { t_end, n_steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn t(&self, step: usize) -> f64 {
        step as f64 * self.dt()
    }

    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            t_end: self.t_end,
            n_steps: self.n_steps * factor,
        }
    }
}

/// Everything a solver needs besides the initial state and the noise.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub grid: TimeGrid,
    pub space: Space,
    pub toggles: OperatorToggles,
    pub eps: f64,
    /// `a` in `lambda(eps) = eps^(-a)`, must lie in `(0, 1/2)`.
    pub lambda_exponent: f64,
    pub record_every: usize,
    /// Explicit-advection guard: `dt <= c_nl / (1 + ||Y_n||)`.
    pub c_nl: f64,
    /// Abort threshold on `|Y|`.
    pub blowup_guard: f64,
}

pub const DEFAULT_LAMBDA_EXPONENT: f64 = 0.25;
pub const DEFAULT_C_NL: f64 = 1.0;
pub const DEFAULT_BLOWUP_GUARD: f64 = 1e12;

impl SolverConfig {
    pub fn new(space: Space, grid: TimeGrid) -> Self {
        SolverConfig {
            grid,
            space,
            toggles: OperatorToggles::default(),
            eps: 0.0,
            lambda_exponent: DEFAULT_LAMBDA_EXPONENT,
            record_every: 1,
            c_nl: DEFAULT_C_NL,
            blowup_guard: DEFAULT_BLOWUP_GUARD,
        }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        SolverConfig { eps, ..self.clone() }
    }

    pub fn with_toggles(&self, toggles: OperatorToggles) -> Self {
        SolverConfig { toggles, ..self.clone() }
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        SolverConfig { grid, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::Config(format!("eps must be >= 0, got {}", self.eps)));
        }
        if !(self.lambda_exponent > 0.0 && self.lambda_exponent < 0.5) {
            return Err(Error::Config(format!(
                "lambda_exponent must lie in (0, 1/2) so that lambda -> inf and sqrt(eps) lambda -> 0, got {}",
                self.lambda_exponent
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        if !(self.c_nl > 0.0) || !(self.blowup_guard > 0.0) {
            return Err(Error::Config("c_nl and blowup_guard must be > 0".into()));
        }
        Ok(())
    }

    /// `lambda(eps) = eps^(-a)`.
    pub fn lambda(&self) -> f64 {
        self.eps.powf(-self.lambda_exponent)
    }
}

/// What a trajectory represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    Deterministic,
    Stochastic,
    Linearized,
    Skeleton,
    Controlled,
    Adjoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub state: State,
}

/// Norms at one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiag {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub dz_l2: f64,
    /// Left-Riemann `int_0^t ||Y||^2 ds`.
    pub running_h1_sq: f64,
}

/// Running suprema and left-Riemann integrals of the moment quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Monitors {
    /// `sup |Y|^4`
    pub sup_l2_4: f64,
    /// `int ||Y||^2`
    pub int_h1_sq: f64,
    /// `sup |dz Y|^4`
    pub sup_dz_4: f64,
    /// `int |dz Y|^2 ||dz Y||^2`
    pub int_dz_mixed: f64,
    /// `sup ||Y||^2`
    pub sup_h1_sq: f64,
    /// `int |AY|^2`
    pub int_a_sq: f64,
}

impl Monitors {
    fn observe(&mut self, y: &State, weight: f64) {
        let l2 = y.l2_sq();
        let dz = y.dz_l2_sq();
        let h1 = y.h1_sq();
        self.sup_l2_4 = self.sup_l2_4.max(l2 * l2);
        self.sup_dz_4 = self.sup_dz_4.max(dz * dz);
        self.sup_h1_sq = self.sup_h1_sq.max(h1);
        if weight > 0.0 {
            self.int_h1_sq += weight * h1;
            self.int_dz_mixed += weight * dz * y.dz_h1_sq();
            self.int_a_sq += weight * y.a_l2_sq();
        }
    }

    /// Monitors of the sampled states `state(i)` at `times[i]`.
    pub(crate) fn along(times: &[f64], state: impl Fn(usize) -> State) -> Self {
        let mut m = Monitors::default();
        for i in 0..times.len() {
            let w = if i + 1 < times.len() { times[i + 1] - times[i] } else { 0.0 };
            m.observe(&state(i), w);
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        [self.sup_l2_4, self.int_h1_sq, self.sup_dz_4, self.int_dz_mixed, self.sup_h1_sq, self.int_a_sq]
            .iter()
            .all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub grid: TimeGrid,
    pub record_every: usize,
    pub toggles: OperatorToggles,
    pub eps: f64,
    pub samples: Vec<Sample>,
    /// One entry per step `0..=n_steps`.
    pub diagnostics: Vec<StepDiag>,
    pub monitors: Monitors,
    /// Cumulative energy-identity defect per step (deterministic runs only).
    pub energy_defect: Vec<f64>,
}

impl Trajectory {
    pub fn initial(&self) -> &State {
        &self.samples[0].state
    }

    pub fn last(&self) -> &State {
        &self.samples.last().expect("nonempty trajectory").state
    }

    /// Most recent recorded state at or before `step` (left-constant interpolation).
    pub fn state_at_step(&self, step: usize) -> &State {
        let idx = (step / self.record_every).min(self.samples.len() - 1);
        let idx = if self.samples[idx].step > step { idx - 1 } else { idx };
        &self.samples[idx].state
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.t).collect()
    }

    /// Trajectory holding one state per grid step, with diagnostics recomputed from the states.
    pub(crate) fn from_states(kind: TrajectoryKind, grid: TimeGrid, toggles: OperatorToggles, states: Vec<State>) -> Self {
        debug_assert_eq!(states.len(), grid.n_steps() + 1);
        let dt = grid.dt();
        let n = grid.n_steps();
        let mut monitors = Monitors::default();
        let mut running = 0.0;
        let mut diagnostics = Vec::with_capacity(n + 1);
        for (i, y) in states.iter().enumerate() {
            let norms = y.norms();
            diagnostics.push(StepDiag {
                t: y.t,
                l2: norms.l2,
                h1: norms.h1,
                dz_l2: norms.dz_l2,
                running_h1_sq: running,
            });
            monitors.observe(y, if i < n { dt } else { 0.0 });
            running += dt * norms.h1 * norms.h1;
        }
        Trajectory {
            kind,
            grid,
            record_every: 1,
            toggles,
            eps: 0.0,
            samples: states.into_iter().enumerate().map(|(step, state)| Sample { step, state }).collect(),
            diagnostics,
            monitors,
            energy_defect: Vec::new(),
        }
    }
}

/// One implicit step: solves `(I + dt A) Y_{n+1} = Y_n - dt forcing + stochastic` mode by mode.
pub fn step(y: &State, forcing: &State, stochastic: &State, dt: f64) -> Result<State> {
    if !(y.is_finite() && forcing.is_finite() && stochastic.is_finite()) {
        return Err(Error::BlowUp {
            t: y.t,
            detail: "nonfinite input to the implicit step".into(),
        });
    }
    if forcing.domain() != y.domain() || stochastic.domain() != y.domain() {
        return Err(Error::Shape("step operands on different domains".into()));
    }
    let d = *y.domain();
    let rhs = |a: f64, f: f64, s: f64| a - dt * f + s;
    let v = VField::from_fn(d, |k, m| {
        rhs(y.v.coeff(k, m), forcing.v.coeff(k, m), stochastic.v.coeff(k, m)) / (1.0 + dt * d.eigenvalue(k, m))
    });
    let temp = TField::from_fn(d, |k, m| {
        rhs(y.temp.coeff(k, m), forcing.temp.coeff(k, m), stochastic.temp.coeff(k, m))
            / (1.0 + dt * d.eigenvalue(k, m))
    });
    Ok(State { v, temp, t: y.t + dt })
}

/// Per-step right-hand side: explicit forcing, optional stochastic increment and
/// the state whose velocity advects (for the step-size guard).
struct Rhs {
    forcing: State,
    stochastic: Option<State>,
    advecting_h1: Option<f64>,
}

fn integrate(
    y0: State,
    cfg: &SolverConfig,
    kind: TrajectoryKind,
    mut rhs: impl FnMut(usize, &State) -> Result<Rhs>,
) -> Result<Trajectory> {
    cfg.validate()?;
    if y0.domain() != cfg.space.domain() {
        return Err(Error::Shape("initial state and solver on different domains".into()));
    }
    let grid = cfg.grid;
    let dt = grid.dt();
    let n = grid.n_steps();
    let mut traj = Trajectory {
        kind,
        grid,
        record_every: cfg.record_every,
        toggles: cfg.toggles,
        eps: cfg.eps,
        samples: Vec::with_capacity(n / cfg.record_every + 2),
        diagnostics: Vec::with_capacity(n + 1),
        monitors: Monitors::default(),
        energy_defect: Vec::new(),
    };
    let zero = State::zeros(*y0.domain());
    let mut y = y0.with_time(0.0);
    let mut running = 0.0;
    for i in 0..=n {
        check_guard(&y, cfg.blowup_guard)?;
        let norms = y.norms();
        traj.diagnostics.push(StepDiag {
            t: y.t,
            l2: norms.l2,
            h1: norms.h1,
            dz_l2: norms.dz_l2,
            running_h1_sq: running,
        });
        traj.monitors.observe(&y, if i < n { dt } else { 0.0 });
        if i % cfg.record_every == 0 || i == n {
            traj.samples.push(Sample { step: i, state: y.clone() });
        }
        if i == n {
            break;
        }
        running += dt * norms.h1 * norms.h1;
        let r = rhs(i, &y)?;
        if let Some(h1) = r.advecting_h1 {
            let limit = cfg.c_nl / (1.0 + h1);
            if dt > limit {
                return Err(Error::Stability { t: y.t, dt, limit });
            }
        }
        let next = step(&y, &r.forcing, r.stochastic.as_ref().unwrap_or(&zero), dt)?;
        // keep t exact on the grid
        y = next.with_time(grid.t(i + 1));
    }
    Ok(traj)
}

fn check_guard(y: &State, guard: f64) -> Result<()> {
    let l2 = y.l2_sq().sqrt();
    if !l2.is_finite() || l2 > guard {
        return Err(Error::BlowUp {
            t: y.t,
            detail: format!("|Y| = {l2:e} exceeds guard {guard:e}"),
        });
    }
    Ok(())
}

/// `B(a, b)` under the toggles.
fn nonlinear(cfg: &SolverConfig, a: &State, b: &State) -> State {
    if cfg.toggles.enable_b {
        apply_b(&cfg.space, a, b)
    } else {
        State::zeros(*a.domain())
    }
}

fn pressure(cfg: &SolverConfig, y: &State) -> Option<State> {
    cfg.toggles.enable_g.then(|| apply_g(y))
}

fn check_base(cfg: &SolverConfig, base: &Trajectory) -> Result<()> {
    if base.grid != cfg.grid {
        return Err(Error::GridMismatch(format!(
            "base trajectory grid {:?} differs from solver grid {:?}",
            base.grid, cfg.grid
        )));
    }
    Ok(())
}

fn check_path(cfg: &SolverConfig, spec: &NoiseSpec, path: &WienerPath) -> Result<()> {
    if path.grid != cfg.grid {
        return Err(Error::GridMismatch(format!(
            "Wiener path grid {:?} differs from solver grid {:?}",
            path.grid, cfg.grid
        )));
    }
    if path.d_w() != spec.d_w() {
        return Err(Error::Shape(format!(
            "Wiener path has {} modes, noise expects {}",
            path.d_w(),
            spec.d_w()
        )));
    }
    Ok(())
}

fn check_control(cfg: &SolverConfig, spec: &NoiseSpec, h: &ControlPath) -> Result<()> {
    if h.grid() != &cfg.grid {
        return Err(Error::GridMismatch(format!(
            "control grid {:?} differs from solver grid {:?}",
            h.grid(),
            cfg.grid
        )));
    }
    if h.d_w() != spec.d_w() {
        return Err(Error::Shape(format!("control has {} modes, noise expects {}", h.d_w(), spec.d_w())));
    }
    Ok(())
}

/// Deterministic limit `dY + AY dt + B(Y, Y) dt + G(Y) dt = 0`.
///
/// Records the cumulative energy defect
/// `|Y_n|^2 - |Y_0|^2 + 2 dt sum_{i<n} (||Y_i||^2 + (G(Y_i), Y_i))`.
pub fn simulate_deterministic(y0: &State, cfg: &SolverConfig) -> Result<Trajectory> {
    let dt = cfg.grid.dt();
    let mut work = Vec::with_capacity(cfg.grid.n_steps());
    let mut traj = integrate(y0.clone(), cfg, TrajectoryKind::Deterministic, |_, y| {
        let mut forcing = nonlinear(cfg, y, y);
        let mut w = y.h1_sq();
        if let Some(g) = pressure(cfg, y) {
            w += g.dot(y);
            forcing.axpy(1.0, &g);
        }
        work.push(w);
        Ok(Rhs {
            forcing,
            stochastic: None,
            advecting_h1: cfg.toggles.enable_b.then(|| y.h1_sq().sqrt()),
        })
    })?;
    let e0 = traj.diagnostics[0].l2.powi(2);
    let mut dissipated = 0.0;
    traj.energy_defect = traj
        .diagnostics
        .iter()
        .enumerate()
        .map(|(n, d)| {
            if n > 0 {
                dissipated += 2.0 * dt * work[n - 1];
            }
            d.l2 * d.l2 - e0 + dissipated
        })
        .collect();
    Ok(traj)
}

/// `dY + AY dt + B(Y, Y) dt + G(Y) dt = sqrt(eps) psi(t, Y) dW`.
///
/// With `eps = 0` or a zero noise the noise term is skipped, so the result
/// matches [`simulate_deterministic`] bit for bit.
pub fn simulate_stochastic(y0: &State, cfg: &SolverConfig, spec: &NoiseSpec, path: &WienerPath) -> Result<Trajectory> {
    check_path(cfg, spec, path)?;
    let amp = cfg.eps.sqrt();
    let noisy = cfg.eps > 0.0 && !spec.is_zero();
    integrate(y0.clone(), cfg, TrajectoryKind::Stochastic, |n, y| {
        let mut forcing = nonlinear(cfg, y, y);
        if let Some(g) = pressure(cfg, y) {
            forcing.axpy(1.0, &g);
        }
        let stochastic = if noisy {
            let mut s = spec.apply(y.t, y, path.increment(n))?;
            s.scale(amp);
            Some(s)
        } else {
            None
        };
        Ok(Rhs {
            forcing,
            stochastic,
            advecting_h1: cfg.toggles.enable_b.then(|| y.h1_sq().sqrt()),
        })
    })
}

/// `B(a, b) + B(b, a) + G(b)`: the linearization of the drift at `a` applied to `b`.
pub(crate) fn linearized_drift(cfg: &SolverConfig, a: &State, b: &State) -> State {
    let mut f = State::zeros(*a.domain());
    if cfg.toggles.enable_b {
        f = apply_b(&cfg.space, a, b);
        f.axpy(1.0, &apply_b(&cfg.space, b, a));
    }
    if let Some(g) = pressure(cfg, b) {
        f.axpy(1.0, &g);
    }
    f
}

fn advecting(cfg: &SolverConfig, a: &State, b: &State) -> Option<f64> {
    cfg.toggles.enable_b.then(|| a.h1_sq().sqrt() + b.h1_sq().sqrt())
}

/// Central-limit process: `dV + AV dt + (B(Y0, V) + B(V, Y0)) dt + G(V) dt = psi(t, Y0) dW`, `V(0) = 0`.
///
/// `base` is the deterministic trajectory started from `y0` on the same grid.
pub fn simulate_linearized(
    y0: &State,
    cfg: &SolverConfig,
    spec: &NoiseSpec,
    path: &WienerPath,
    base: &Trajectory,
) -> Result<Trajectory> {
    check_base(cfg, base)?;
    check_path(cfg, spec, path)?;
    if base.initial().to_flat() != y0.to_flat() {
        return Err(Error::Shape("base trajectory was not started from the given initial state".into()));
    }
    let noisy = !spec.is_zero();
    integrate(State::zeros(*y0.domain()), cfg, TrajectoryKind::Linearized, |n, v| {
        let y = base.state_at_step(n);
        let stochastic = if noisy { Some(spec.apply(v.t, y, path.increment(n))?) } else { None };
        Ok(Rhs {
            forcing: linearized_drift(cfg, y, v),
            stochastic,
            advecting_h1: advecting(cfg, y, v),
        })
    })
}

/// Skeleton equation `dR + AR dt + (B(R, Y0) + B(Y0, R)) dt + G(R) dt = psi(t, Y0) h dt`, `R(0) = 0`.
///
/// The trajectory monitors carry `sup ||R||^2` and `int |AR|^2`.
pub fn solve_skeleton(h: &ControlPath, cfg: &SolverConfig, spec: &NoiseSpec, base: &Trajectory) -> Result<Trajectory> {
    check_base(cfg, base)?;
    check_control(cfg, spec, h)?;
    integrate(State::zeros(*base.initial().domain()), cfg, TrajectoryKind::Skeleton, |n, r| {
        let y = base.state_at_step(n);
        let mut forcing = linearized_drift(cfg, y, r);
        forcing.axpy(-1.0, &spec.apply(r.t, y, h.step(n))?);
        Ok(Rhs {
            forcing,
            stochastic: None,
            advecting_h1: advecting(cfg, y, r),
        })
    })
}

/// Controlled moderate-deviation process `Z` with state argument `X = Y0 + sqrt(eps) lambda Z`:
///
/// `dZ + AZ dt + B(Z, X) dt + B(Y0, Z) dt + G(Z) dt = lambda^-1 psi(t, X) dW + psi(t, X) h dt`.
pub fn simulate_controlled(
    h: &ControlPath,
    cfg: &SolverConfig,
    spec: &NoiseSpec,
    path: &WienerPath,
    base: &Trajectory,
) -> Result<Trajectory> {
    if cfg.eps == 0.0 {
        return Err(Error::Config(
            "eps = 0 leaves lambda(eps) undefined for the controlled equation; use solve_skeleton".into(),
        ));
    }
    check_base(cfg, base)?;
    check_path(cfg, spec, path)?;
    check_control(cfg, spec, h)?;
    let lambda = cfg.lambda();
    let coupling = cfg.eps.sqrt() * lambda;
    integrate(State::zeros(*base.initial().domain()), cfg, TrajectoryKind::Controlled, |n, z| {
        let y = base.state_at_step(n);
        let mut x = y.clone();
        x.axpy(coupling, z);
        let mut forcing = State::zeros(*z.domain());
        if cfg.toggles.enable_b {
            forcing = apply_b(&cfg.space, z, &x);
            forcing.axpy(1.0, &apply_b(&cfg.space, y, z));
        }
        if let Some(g) = pressure(cfg, z) {
            forcing.axpy(1.0, &g);
        }
        forcing.axpy(-1.0, &spec.apply(z.t, &x, h.step(n))?);
        let mut stochastic = spec.apply(z.t, &x, path.increment(n))?;
        stochastic.scale(1.0 / lambda);
        Ok(Rhs {
            forcing,
            stochastic: Some(stochastic),
            advecting_h1: advecting(cfg, z, &x),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_path, NoiseKind};
    use crate::spectral::DomainSpec;

    fn space(n: usize) -> Space {
        Space::new(DomainSpec::new(1.0, 1.0, n, n).unwrap()).unwrap()
    }

    fn max_diff(a: &State, b: &State) -> f64 {
        a.to_flat().iter().zip(b.to_flat()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        let g = TimeGrid::new(2.0, 8).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.refined(2).n_steps(), 16);
    }

    #[test]
    fn config_rejects_bad_exponent() {
        let mut cfg = SolverConfig::new(space(2), TimeGrid::new(1.0, 4).unwrap());
        cfg.lambda_exponent = 0.6;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.lambda_exponent = 0.25;
        assert!((cfg.with_eps(1e-4).lambda() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn step_is_scalar_recurrence() {
        let d = DomainSpec::new(1.0, 1.0, 2, 2).unwrap();
        let mut y = State::zeros(d);
        y.v.set(1, 1, 2.0);
        y.temp.set(0, 0, 3.0);
        let zero = State::zeros(d);
        let next = step(&y, &zero, &zero, 0.1).unwrap();
        assert!((next.v.coeff(1, 1) - 2.0 / (1.0 + 0.1 * d.eigenvalue(1, 1))).abs() < 1e-15);
        assert_eq!(next.temp.coeff(0, 0), 3.0);

        let mut bad = y.clone();
        bad.v.set(1, 1, f64::NAN);
        assert!(matches!(step(&bad, &zero, &zero, 0.1), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn implicit_decay_converges_at_first_order() {
        let d = DomainSpec::new(1.0, 1.0, 1, 1).unwrap();
        let lam = d.eigenvalue(1, 1);
        let mut y = State::zeros(d);
        y.v.set(1, 1, 1.0);
        let errs: Vec<f64> = [20usize, 40, 80]
            .iter()
            .map(|&n| {
                let cfg = SolverConfig::new(Space::new(d).unwrap(), TimeGrid::new(0.1, n).unwrap())
                    .with_toggles(OperatorToggles::linear());
                let tr = simulate_deterministic(&y, &cfg).unwrap();
                let c = tr.last().v.coeff(1, 1);
                assert!((c - (1.0 + 0.1 / n as f64 * lam).powi(-(n as i32))).abs() < 1e-14);
                (c - (-lam * 0.1).exp()).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((1.8..2.2).contains(&r), "{r}");
        }
    }

    #[test]
    fn horizontally_uniform_temperature_is_pure_heat_decay() {
        let sp = space(4);
        let d = *sp.domain();
        let mut y = State::zeros(d);
        y.temp.set(0, 1, 1.0);
        y.temp.set(0, 3, -0.5);
        let cfg = SolverConfig::new(sp, TimeGrid::new(0.5, 50).unwrap());
        let tr = simulate_deterministic(&y, &cfg).unwrap();
        let r = |m: usize| (1.0 + 0.01 * d.eigenvalue(0, m)).powi(-50);
        assert!((tr.last().temp.coeff(0, 1) - r(1)).abs() < 1e-14);
        assert!((tr.last().temp.coeff(0, 3) + 0.5 * r(3)).abs() < 1e-14);
        assert_eq!(tr.last().v.norm_sq(), 0.0);
    }

    #[test]
    fn energy_defect_is_first_order() {
        let sp = space(4);
        let y0 = State::smooth_initial(*sp.domain(), 1.0);
        let base = TimeGrid::new(0.5, 50).unwrap();
        let defects: Vec<f64> = (0..4)
            .map(|r| {
                let cfg = SolverConfig::new(sp.clone(), base.refined(1 << r));
                let tr = simulate_deterministic(&y0, &cfg).unwrap();
                assert!(tr.monitors.is_finite());
                tr.energy_defect.last().unwrap().abs()
            })
            .collect();
        for w in defects.windows(2) {
            let r = w[0] / w[1];
            assert!((1.7..=2.3).contains(&r), "{defects:?}");
        }
    }

    #[test]
    fn stability_guard_aborts() {
        let sp = space(4);
        let y0 = State::smooth_initial(*sp.domain(), 50.0);
        let cfg = SolverConfig::new(sp, TimeGrid::new(1.0, 4).unwrap());
        assert!(matches!(simulate_deterministic(&y0, &cfg), Err(Error::Stability { .. })));
    }

    #[test]
    fn zero_noise_degenerates_to_deterministic() {
        let sp = space(4);
        let d = *sp.domain();
        let y0 = State::smooth_initial(d, 1.0);
        let grid = TimeGrid::new(0.5, 40).unwrap();
        let cfg = SolverConfig::new(sp, grid);
        let det = simulate_deterministic(&y0, &cfg).unwrap();
        let spec = NoiseSpec::uniform(NoiseKind::BoundedDiagonal, 6, 0.5, 1.0, d).unwrap();
        let path = sample_path(1, 0, &grid, 6);
        let sto = simulate_stochastic(&y0, &cfg, &spec, &path).unwrap();
        assert_eq!(det.samples, sto.samples);
        assert_eq!(det.diagnostics, sto.diagnostics);

        let silent = NoiseSpec::uniform(NoiseKind::Additive, 6, 0.0, 1.0, d).unwrap();
        let sto = simulate_stochastic(&y0, &cfg.with_eps(0.1), &silent, &path).unwrap();
        assert_eq!(det.samples, sto.samples);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let sp = space(2);
        let d = *sp.domain();
        let cfg = SolverConfig::new(sp, TimeGrid::new(1.0, 10).unwrap());
        let spec = NoiseSpec::uniform(NoiseKind::Additive, 2, 1.0, 1.0, d).unwrap();
        let path = sample_path(1, 0, &TimeGrid::new(1.0, 20).unwrap(), 2);
        let r = simulate_stochastic(&State::zeros(d), &cfg, &spec, &path);
        assert!(matches!(r, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn linear_clt_decomposition_is_exact() {
        let sp = space(3);
        let d = *sp.domain();
        let y0 = State::smooth_initial(d, 1.0);
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let cfg = SolverConfig::new(sp, grid).with_toggles(OperatorToggles::linear());
        let spec = NoiseSpec::uniform(NoiseKind::Additive, 5, 0.7, 1.0, d).unwrap();
        let base = simulate_deterministic(&y0, &cfg).unwrap();
        for p in 0..3 {
            let path = sample_path(9, p, &grid, 5);
            let lin = simulate_linearized(&y0, &cfg, &spec, &path, &base).unwrap();
            for eps in [1e-2, 1e-4] {
                let y = simulate_stochastic(&y0, &cfg.with_eps(eps), &spec, &path).unwrap();
                for ((a, b), c) in y.samples.iter().zip(&base.samples).zip(&lin.samples) {
                    let x = (&a.state - &b.state).scaled(1.0 / eps.sqrt());
                    assert!(max_diff(&x, &c.state) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn linearized_vanishes_without_noise() {
        let sp = space(3);
        let d = *sp.domain();
        let y0 = State::smooth_initial(d, 1.0);
        let grid = TimeGrid::new(0.5, 20).unwrap();
        let cfg = SolverConfig::new(sp, grid);
        let base = simulate_deterministic(&y0, &cfg).unwrap();
        let spec = NoiseSpec::uniform(NoiseKind::LinearDiagonal, 4, 0.0, 1.0, d).unwrap();
        let lin = simulate_linearized(&y0, &cfg, &spec, &sample_path(3, 0, &grid, 4), &base).unwrap();
        assert!(lin.samples.iter().all(|s| s.state.l2_sq() == 0.0));
    }

    #[test]
    fn ou_variance_matches_analytic_value() {
        let d = DomainSpec::new(1.0, 1.0, 1, 1).unwrap();
        let sp = Space::new(d).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let cfg = SolverConfig::new(sp, grid).with_toggles(OperatorToggles::linear());
        let y0 = State::zeros(d);
        let base = simulate_deterministic(&y0, &cfg).unwrap();
        let sigma = 0.8;
        let spec = NoiseSpec::uniform(NoiseKind::Additive, 1, sigma, 1.0, d).unwrap();
        let (kk, mm) = spec.directions()[0].mode();
        let lam = d.eigenvalue(kk, mm);
        let n_paths = 4000;
        let finals: Vec<f64> = (0..n_paths)
            .map(|p| {
                let path = sample_path(5, p, &grid, 1);
                let tr = simulate_linearized(&y0, &cfg, &spec, &path, &base).unwrap();
                spec.directions()[0].coeff(tr.last())
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / n_paths as f64;
        let var = finals.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64;
        let dt = grid.dt();
        let r = 1.0 / (1.0 + dt * lam);
        let discrete: f64 = sigma * sigma * dt * (1..=grid.n_steps()).map(|j| r.powi(2 * j as i32)).sum::<f64>();
        let analytic = sigma * sigma * (1.0 - (-2.0 * lam).exp()) / (2.0 * lam);
        // chi-square: sd of the sample variance ~ var sqrt(2/n)
        let mc = 4.0 * discrete * (2.0 / n_paths as f64).sqrt();
        assert!((var - discrete).abs() < mc, "{var} vs {discrete}");
        assert!((discrete - analytic).abs() < 2.0 * dt * lam * analytic);
    }

    #[test]
    fn uniform_in_eps_bound() {
        let sp = space(8);
        let d = *sp.domain();
        let y0 = State::smooth_initial(d, 1.0);
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let cfg = SolverConfig::new(sp, grid);
        let spec = NoiseSpec::uniform(NoiseKind::BoundedDiagonal, 8, 0.5, 1.0, d).unwrap();
        let stats = |eps: f64| {
            let xs: Vec<f64> = (0..64)
                .map(|p| {
                    let tr = simulate_stochastic(&y0, &cfg.with_eps(eps), &spec, &sample_path(2, p, &grid, 8)).unwrap();
                    tr.diagnostics.iter().fold(0.0f64, |m, s| m.max(s.l2))
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / 64.0;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 63.0).sqrt();
            (mean, sd)
        };
        let (m2, s2) = stats(1e-2);
        let (m3, s3) = stats(1e-3);
        assert!(m2.is_finite() && m3.is_finite());
        assert!((m2 - m3).abs() <= 3.0 * s2.max(s3));
    }

    fn skeleton_setup() -> (SolverConfig, NoiseSpec, Trajectory) {
        let sp = space(3);
        let d = *sp.domain();
        let grid = TimeGrid::new(0.5, 40).unwrap();
        let cfg = SolverConfig::new(sp, grid);
        let spec = NoiseSpec::uniform(NoiseKind::BoundedDiagonal, 4, 0.6, 1.0, d).unwrap();
        let base = simulate_deterministic(&State::smooth_initial(d, 1.0), &cfg).unwrap();
        (cfg, spec, base)
    }

    #[test]
    fn skeleton_is_linear_in_control() {
        let (cfg, spec, base) = skeleton_setup();
        let zero = ControlPath::zeros(cfg.grid, 4);
        let r0 = solve_skeleton(&zero, &cfg, &spec, &base).unwrap();
        assert!(r0.samples.iter().all(|s| s.state.l2_sq() == 0.0));

        let h = ControlPath::random(cfg.grid, 4, 17);
        let r1 = solve_skeleton(&h, &cfg, &spec, &base).unwrap();
        let r3 = solve_skeleton(&h.scaled(3.0), &cfg, &spec, &base).unwrap();
        let scale = r1.samples.iter().fold(0.0f64, |m, s| m.max(s.state.l2_sq().sqrt()));
        for (a, b) in r1.samples.iter().zip(&r3.samples) {
            assert!(max_diff(&a.state.scaled(3.0), &b.state) <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn skeleton_bound_grows_with_energy() {
        let (cfg, spec, base) = skeleton_setup();
        let h = ControlPath::smooth_profile(cfg.grid, 4, 0.5);
        let sups: Vec<f64> = [1.0f64, 4.0, 16.0]
            .iter()
            .map(|&m| {
                let tr = solve_skeleton(&h.scaled(m.sqrt()), &cfg, &spec, &base).unwrap();
                assert!(tr.monitors.is_finite());
                tr.monitors.sup_h1_sq
            })
            .collect();
        assert!(sups[0] > 0.0 && sups[0] <= sups[1] && sups[1] <= sups[2], "{sups:?}");
    }

    #[test]
    fn controlled_rejects_zero_eps() {
        let (cfg, spec, base) = skeleton_setup();
        let h = ControlPath::zeros(cfg.grid, 4);
        let path = sample_path(1, 0, &cfg.grid, 4);
        assert!(matches!(simulate_controlled(&h, &cfg, &spec, &path, &base), Err(Error::Config(_))));
        let silent = NoiseSpec::uniform(NoiseKind::Additive, 4, 0.0, 1.0, *cfg.space.domain()).unwrap();
        let z = simulate_controlled(&h, &cfg.with_eps(1e-2), &silent, &path, &base).unwrap();
        assert!(z.samples.iter().all(|s| s.state.l2_sq() == 0.0));
    }

    #[test]
    fn controlled_minus_skeleton_is_scaled_convolution_without_advection() {
        let (cfg, _, _) = skeleton_setup();
        let d = *cfg.space.domain();
        let cfg = cfg.with_toggles(OperatorToggles { enable_b: false, enable_g: true });
        let y0 = State::smooth_initial(d, 1.0);
        let base = simulate_deterministic(&y0, &cfg).unwrap();
        let spec = NoiseSpec::uniform(NoiseKind::Additive, 4, 0.6, 1.0, d).unwrap();
        let h = ControlPath::smooth_profile(cfg.grid, 4, 2.0);
        let r = solve_skeleton(&h, &cfg, &spec, &base).unwrap();
        for p in 0..4 {
            let path = sample_path(11, p, &cfg.grid, 4);
            let conv = simulate_linearized(&y0, &cfg, &spec, &path, &base).unwrap();
            let conv_sup = conv.samples.iter().fold(0.0f64, |m, s| m.max(s.state.l2_sq().sqrt()));
            for eps in [1e-2, 1e-4] {
                let c = cfg.with_eps(eps);
                let z = simulate_controlled(&h, &c, &spec, &path, &base).unwrap();
                let sup = z
                    .samples
                    .iter()
                    .zip(&r.samples)
                    .fold(0.0f64, |m, (a, b)| m.max((&a.state - &b.state).l2_sq().sqrt()));
                assert!(sup <= conv_sup / c.lambda() * (1.0 + 1e-9) + 1e-14, "{sup} {}", conv_sup / c.lambda());
                assert!(sup >= conv_sup / c.lambda() * (1.0 - 1e-9));
            }
        }
    }
}
