//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Runs as a plain binary so the verdict lines always reach the test log.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use primeq::dynamics::{
    simulate_deterministic, simulate_linearized, simulate_stochastic, SolverConfig, TimeGrid, Trajectory,
};
use primeq::experiments::{run_clt_verification, run_mdp_convergence, run_strong_convergence, ExperimentReport};
use primeq::noise::{sample_path, verify_hypotheses, NoiseKind, NoiseSpec};
use primeq::operators::{apply_b, b_oracle, identity_suite, OperatorToggles};
use primeq::rate::{
    adjoint_solve, constraint_gradient, rate_for_terminal_hyperplane, rate_gradient_descent, terminal_value,
    ControlPath, StepRule,
};
use primeq::spectral::{DomainSpec, Space, State};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

/// Campaign reports collected for the moment-monitor criterion.
#[derive(Default)]
struct Campaigns(Vec<(&'static str, ExperimentReport)>);

fn domain8() -> DomainSpec {
    DomainSpec::new(1.0, 1.0, 8, 8).unwrap()
}

fn cfg8() -> SolverConfig {
    SolverConfig::new(Space::new(domain8()).unwrap(), TimeGrid::new(1.0, 400).unwrap())
}

fn bounded8() -> NoiseSpec {
    NoiseSpec::uniform(NoiseKind::BoundedDiagonal, 8, 0.5, 1.0, domain8()).unwrap()
}

fn y0() -> State {
    State::smooth_initial(domain8(), 1.0)
}

fn max_abs(s: &State) -> f64 {
    s.to_flat().iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn c1() -> primeq::Result<Outcome> {
    let r = identity_suite(SEED, domain8(), 100)?;
    let r = r.decisive();
    let pass = r.max_res_energy() <= 1e-9 && r.max_res_antisym() <= 1e-9 && r.max_res_31() <= 1e-8;
    Ok(Outcome::new(
        pass,
        format!(
            "energy {:.2e}, antisym {:.2e}, trilinear {:.2e} (pad {})",
            r.max_res_energy(),
            r.max_res_antisym(),
            r.max_res_31(),
            r.pad
        ),
    ))
}

fn c2() -> primeq::Result<Outcome> {
    let d = DomainSpec::new(1.0, 1.0, 4, 4)?;
    let space = Space::new(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let y = State::random(d, &mut rng, 0.5);
        let yt = State::random(d, &mut rng, 0.5);
        let slow = b_oracle(&y, &yt)?;
        let mut diff = apply_b(&space, &y, &yt);
        diff.axpy(-1.0, &slow);
        worst = worst.max(max_abs(&diff) / max_abs(&slow).max(f64::MIN_POSITIVE));
    }
    Ok(Outcome::new(worst <= 1e-8, format!("max relative gap {worst:.2e} over 50 pairs")))
}

fn c3() -> primeq::Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in NoiseKind::ALL {
        let spec = NoiseSpec::uniform(kind, 8, 0.5, 1.0, domain8())?;
        let r = verify_hypotheses(&spec, 200, SEED)?;
        pass &= r.passes();
        parts.push(format!("{kind} ratio {:.3e} <= K {:.3e}", r.max_ratio(), r.k));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn c4(campaigns: &mut Campaigns) -> primeq::Result<Outcome> {
    let r = run_strong_convergence(&y0(), &[1e-1, 1e-2, 1e-3], 64, &cfg8(), &bounded8(), SEED)?;
    let fit = r.fit.expect("three nonzero rows");
    let pass = (fit.slope - 1.0).abs() <= 0.15 && fit.r2 >= 0.99;
    campaigns.0.push(("strong", r));
    Ok(Outcome::new(pass, format!("slope {:.4}, r2 {:.5}", fit.slope, fit.r2)))
}

fn c5() -> primeq::Result<Outcome> {
    let d = domain8();
    let cfg = cfg8().with_toggles(OperatorToggles { enable_b: false, enable_g: false });
    let spec = NoiseSpec::uniform(NoiseKind::Additive, 8, 0.5, 1.0, d)?;
    let y0 = y0();
    let base = simulate_deterministic(&y0, &cfg)?;
    let mut worst = 0.0f64;
    for p in 0..16 {
        let path = sample_path(SEED, p, &cfg.grid, spec.d_w());
        let lin = simulate_linearized(&y0, &cfg, &spec, &path, &base)?;
        for eps in [1e-1, 1e-2, 1e-3] {
            let y = simulate_stochastic(&y0, &cfg.with_eps(eps), &spec, &path)?;
            worst = worst.max(pathwise_gap(&y, &base, &lin, eps.sqrt()));
        }
    }
    Ok(Outcome::new(worst <= 1e-10, format!("max sup |(Y - Y0)/sqrt(eps) - V| = {worst:.2e}")))
}

fn pathwise_gap(y: &Trajectory, base: &Trajectory, lin: &Trajectory, scale: f64) -> f64 {
    (0..=y.grid.n_steps())
        .map(|n| {
            let mut x = y.state_at_step(n).clone();
            x.axpy(-1.0, base.state_at_step(n));
            x.scale(1.0 / scale);
            x.axpy(-1.0, lin.state_at_step(n));
            x.l2_sq().sqrt()
        })
        .fold(0.0, f64::max)
}

fn c6(campaigns: &mut Campaigns) -> primeq::Result<Outcome> {
    let r = run_clt_verification(&y0(), &[1e-2, 1e-3, 1e-4], 64, &cfg8(), &bounded8(), SEED)?;
    let pass = r.means_decreasing() && r.ends_separated();
    let means: Vec<String> = r.rows.iter().map(|row| format!("{:.3e}", row.estimator.mean)).collect();
    campaigns.0.push(("clt", r));
    Ok(Outcome::new(pass, format!("means {}", means.join(" > "))))
}

fn c7() -> primeq::Result<Outcome> {
    let defects = [200usize, 400, 800, 1600]
        .iter()
        .map(|&n| {
            let cfg = SolverConfig::new(Space::new(domain8())?, TimeGrid::new(1.0, n)?);
            let t = simulate_deterministic(&y0(), &cfg)?;
            Ok(t.energy_defect.iter().fold(0.0f64, |m, e| m.max(e.abs())))
        })
        .collect::<primeq::Result<Vec<f64>>>()?;
    let ratios: Vec<f64> = defects.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = ratios.iter().all(|r| (1.7..=2.3).contains(r));
    Ok(Outcome::new(pass, format!("defect ratios {ratios:.3?}")))
}

fn c8(campaigns: &mut Campaigns) -> primeq::Result<Outcome> {
    let cfg = cfg8();
    let spec = bounded8();
    let h = ControlPath::smooth_profile(cfg.grid, spec.d_w(), 2.0);
    let eps = [1e-2, 1e-3, 1e-4];
    let full = run_mdp_convergence(&y0(), &h, &eps, 16, &cfg, &spec, SEED)?;
    let no_b_cfg = cfg.with_toggles(OperatorToggles { enable_b: false, enable_g: true });
    let no_b = run_mdp_convergence(&y0(), &h, &eps, 16, &no_b_cfg, &spec, SEED)?;
    let slope = no_b.fit.map_or(f64::NAN, |f| f.slope);
    let target = 2.0 * cfg.lambda_exponent;
    let pass = full.sup_dist_decreasing() && (slope - target).abs() <= 0.1;
    let dists: Vec<String> = full.rows.iter().map(|r| format!("{:.3e}", r.diagnostics.sup_dist.mean)).collect();
    campaigns.0.push(("mdp", full));
    campaigns.0.push(("mdp_no_b", no_b));
    Ok(Outcome::new(
        pass,
        format!("sup |Z - R| {}; slope without B {slope:.4} (target {target})", dists.join(" > ")),
    ))
}

fn ou_problem(steps: usize) -> primeq::Result<(SolverConfig, NoiseSpec, Trajectory, State)> {
    // single velocity mode with eigenvalue 1
    let side = PI * SQRT_2;
    let d = DomainSpec::new(side, side, 1, 1)?;
    let cfg = SolverConfig::new(Space::new(d)?, TimeGrid::new(1.0, steps)?).with_toggles(OperatorToggles::linear());
    let spec = NoiseSpec::uniform(NoiseKind::Additive, 1, 1.0, 1.0, d)?;
    let base = simulate_deterministic(&State::zeros(d), &cfg)?;
    let mut phi = State::zeros(d);
    phi.v.set(1, 1, 1.0 / phi.v.mass(1, 1));
    Ok((cfg, spec, base, phi))
}

fn c9() -> primeq::Result<Outcome> {
    let exact = 1.0 / (1.0 - (-2.0f64).exp());
    let mut errs = Vec::new();
    for n in [100usize, 200, 400, 800] {
        let (cfg, spec, base, phi) = ou_problem(n)?;
        let r = rate_for_terminal_hyperplane(&phi, 1.0, &cfg, &spec, &base)?;
        errs.push((r.value - exact).abs() / exact);
    }
    let refines = errs.windows(2).all(|w| w[1] < w[0]);
    let analytic = *errs.last().unwrap() <= 0.02;

    // brute-force KKT oracle on a coarse grid
    let (cfg, spec, base, phi) = ou_problem(40)?;
    let n = cfg.grid.n_steps();
    let dt = cfg.grid.dt();
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        let mut v = ndarray::Array2::zeros((n, 1));
        v[[i, 0]] = 1.0;
        let a = terminal_value(&ControlPath::from_values(cfg.grid, v)?, &phi, &cfg, &spec, &base)?;
        kkt[(i, i)] = dt;
        kkt[(i, n)] = a;
        kkt[(n, i)] = a;
    }
    rhs[n] = 1.0;
    let sol = kkt.lu().solve(&rhs).expect("nonsingular KKT system");
    let qp = 0.5 * dt * (0..n).map(|i| sol[i] * sol[i]).sum::<f64>();
    let closed40 = rate_for_terminal_hyperplane(&phi, 1.0, &cfg, &spec, &base)?.value;
    let qp_gap = (closed40 - qp).abs() / qp;

    let (cfg, spec, base, phi) = ou_problem(200)?;
    let closed = rate_for_terminal_hyperplane(&phi, 1.0, &cfg, &spec, &base)?;
    let gd = rate_gradient_descent(&phi, 1.0, &cfg, &spec, &base, 500, StepRule::default())?;
    let gd_gap = (gd.value - closed.value).abs() / closed.value;

    // duality pairing on the full model for every noise kind
    let d = DomainSpec::new(1.0, 1.0, 4, 4)?;
    let full = SolverConfig::new(Space::new(d)?, TimeGrid::new(0.5, 40)?);
    let base = simulate_deterministic(&State::smooth_initial(d, 1.0), &full)?;
    let mut dual_gap = 0.0f64;
    for (s, kind) in NoiseKind::ALL.into_iter().enumerate() {
        let spec = NoiseSpec::uniform(kind, 5, 0.7, 1.0, d)?;
        let phi = State::random(d, &mut ChaCha8Rng::seed_from_u64(SEED + s as u64), 0.5);
        let h = ControlPath::random(full.grid, spec.d_w(), SEED + 10 + s as u64);
        let forward = terminal_value(&h, &phi, &full, &spec, &base)?;
        let adj = adjoint_solve(&phi, &full, &base)?;
        let backward = h.inner(&constraint_gradient(&adj, &spec, &base));
        dual_gap = dual_gap.max((forward - backward).abs() / forward.abs());
    }

    let errs: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
    let pass = refines && analytic && qp_gap <= 1e-10 && gd_gap <= 0.01 && dual_gap <= 1e-8;
    Ok(Outcome::new(
        pass,
        format!(
            "OU relative errors [{}] vs {exact:.4}; KKT gap {qp_gap:.1e}; descent gap {gd_gap:.2e}; duality {dual_gap:.1e}",
            errs.join(", ")
        ),
    ))
}

fn c10(campaigns: &Campaigns) -> Outcome {
    let mut pass = !campaigns.0.is_empty();
    let mut parts = Vec::new();
    for (name, r) in &campaigns.0 {
        let finite = r.rows.iter().all(|row| {
            let d = &row.diagnostics;
            [d.mean_sup_l2_4, d.mean_int_h1_sq, d.mean_sup_dz_4, d.mean_int_dz_mixed]
                .iter()
                .all(|x| x.is_finite())
        });
        let spread = r.monitor_spread();
        let worst = spread.iter().fold(0.0f64, |m, &x| m.max(x));
        pass &= finite && worst <= 10.0;
        parts.push(format!("{name} {worst:.3}"));
    }
    Outcome::new(pass, format!("max/min of per-eps monitor means: {}", parts.join(", ")))
}

fn report(id: usize, name: &str, limit: Duration, run: impl FnOnce() -> primeq::Result<Outcome>) -> bool {
    let start = Instant::now();
    let outcome = run();
    let elapsed = start.elapsed();
    let (pass, detail) = match outcome {
        Ok(o) => (o.pass && elapsed <= limit, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {id:>2} {}: {name}: {detail} [{:.1}s, limit {}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn main() -> ExitCode {
    // honor `cargo test -- --list` and friends without running the suite
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let secs = Duration::from_secs;
    let mut campaigns = Campaigns::default();
    let results = [
        report(1, "operator identities", secs(30), c1),
        report(2, "advection oracle equivalence", secs(60), c2),
        report(3, "noise hypothesis contracts", secs(30), c3),
        report(4, "strong deviation scaling", secs(600), || c4(&mut campaigns)),
        report(5, "exact linear CLT oracle", secs(60), c5),
        report(6, "CLT convergence", secs(600), || c6(&mut campaigns)),
        report(7, "energy identity consistency", secs(60), c7),
        report(8, "skeleton and controlled convergence", secs(600), || c8(&mut campaigns)),
        report(9, "rate function", secs(120), c9),
        report(10, "moment monitors", secs(1), || Ok(c10(&campaigns))),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
