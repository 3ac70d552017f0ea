//! Coupled Monte Carlo campaigns over a decreasing list of noise intensities.
//!
//! Every path draws one Wiener path from `(master_seed, path_index)` and reuses
//! it for each `eps` (common random numbers). Paths run in parallel; the
//! per-`eps` statistics are reduced in path-index order so reports do not
//! depend on scheduling.
//!
//! For a difference process `X` recorded at `t_0 < ... < t_K` the estimator is
//! `max_i |X(t_i)|^2 + sum_i (t_{i+1} - t_i) ||X(t_i)||^2`.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dynamics::{
    simulate_controlled, simulate_deterministic, simulate_linearized, simulate_stochastic, solve_skeleton,
    Monitors, SolverConfig, Trajectory,
};
use crate::error::{Error, Result};
use crate::noise::{sample_path, NoiseSpec};
use crate::rate::ControlPath;
use crate::spectral::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Campaign {
    Strong,
    Clt,
    Mdp,
}

impl Campaign {
    pub fn name(self) -> &'static str {
        match self {
            Campaign::Strong => "strong",
            Campaign::Clt => "clt",
            Campaign::Mdp => "mdp",
        }
    }
}

/// Mean, sample deviation and 95% Student-t half-width.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sigma: f64,
    pub ci_half: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Summary { mean, sigma: f64::NAN, ci_half: f64::NAN };
        }
        let sigma = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        Summary {
            mean,
            sigma,
            ci_half: t_quantile_975(n - 1) * sigma / (n as f64).sqrt(),
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci_half
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_half
    }
}

fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Per-path quantities for one `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathMetrics {
    pub eps: f64,
    pub path_index: u64,
    /// `sup |X|^2 + int ||X||^2`
    pub estimator: f64,
    /// `sup |X|`
    pub sup_dist: f64,
    /// Moment monitors of the perturbed process (`Y^eps` or `Z^eps`).
    pub monitors: Monitors,
    /// `int |V^eps|^2 ||V^eps||^2` with `V^eps = (Y^eps - Y0) / sqrt(eps)` (CLT campaigns).
    pub rescaled_mixed: f64,
}

/// Per-`eps` diagnostics beyond the estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RowDiagnostics {
    pub sup_dist: Summary,
    pub mean_sup_l2_4: f64,
    pub mean_int_h1_sq: f64,
    pub mean_sup_dz_4: f64,
    pub mean_int_dz_mixed: f64,
    pub mean_rescaled_mixed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsRow {
    pub eps: f64,
    pub n_paths: usize,
    pub estimator: Summary,
    pub diagnostics: RowDiagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub campaign: Campaign,
    pub rows: Vec<EpsRow>,
    /// Log-log fit of the estimator mean against `eps`.
    pub fit: Option<Fit>,
    /// Set when a mean is not positive and no regression was attempted.
    pub regression_skipped: bool,
    pub master_seed: u64,
    pub config_digest: String,
    pub paths: Vec<PathMetrics>,
}

impl ExperimentReport {
    /// Estimator means strictly decrease along the `eps` list.
    pub fn means_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].estimator.mean < w[0].estimator.mean)
    }

    /// No pair of rows is ordered the wrong way with disjoint confidence intervals.
    pub fn nonincreasing_within_ci(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, a)| {
            self.rows[i + 1..]
                .iter()
                .all(|b| b.estimator.lower() <= a.estimator.upper())
        })
    }

    /// First and last rows have disjoint intervals in decreasing order.
    pub fn ends_separated(&self) -> bool {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if self.rows.len() > 1 => b.estimator.upper() < a.estimator.lower(),
            _ => false,
        }
    }

    /// Mean `sup |X|` strictly decreases along the `eps` list.
    pub fn sup_dist_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].diagnostics.sup_dist.mean < w[0].diagnostics.sup_dist.mean)
    }

    /// Max over min of the per-`eps` means of the four moment monitors.
    pub fn monitor_spread(&self) -> [f64; 4] {
        let pick: [fn(&RowDiagnostics) -> f64; 4] = [
            |d| d.mean_sup_l2_4,
            |d| d.mean_int_h1_sq,
            |d| d.mean_sup_dz_4,
            |d| d.mean_int_dz_mixed,
        ];
        pick.map(|f| spread(self.rows.iter().map(|r| f(&r.diagnostics))))
    }
}

fn spread(xs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo > 0.0 {
        hi / lo
    } else if hi == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<Fit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::Config("fit_slope needs at least two points".into()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::Config("fit_slope needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(Fit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

fn validate(eps_list: &[f64], n_paths: usize) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::Config("eps list must be nonempty".into()));
    }
    if eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::Config("every eps must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps list must be strictly decreasing".into()));
    }
    if n_paths < 2 {
        return Err(Error::Config("a campaign needs at least 2 paths".into()));
    }
    Ok(())
}

/// `(sup |X|^2 + int ||X||^2, sup |X|)` over recorded samples with `X = diff(i)`.
fn path_estimator(times: &[f64], diff: impl Fn(usize) -> State) -> (f64, f64) {
    let mut sup = 0.0f64;
    let mut int = 0.0;
    for i in 0..times.len() {
        let x = diff(i);
        sup = sup.max(x.l2_sq());
        if i + 1 < times.len() {
            int += (times[i + 1] - times[i]) * x.h1_sq();
        }
    }
    (sup + int, sup.sqrt())
}

fn rescaled_mixed(times: &[f64], diff: impl Fn(usize) -> State) -> f64 {
    (0..times.len().saturating_sub(1))
        .map(|i| {
            let x = diff(i);
            (times[i + 1] - times[i]) * x.l2_sq() * x.h1_sq()
        })
        .sum()
}

fn assemble(
    campaign: Campaign,
    eps_list: &[f64],
    n_paths: usize,
    master_seed: u64,
    per_path: Vec<Result<Vec<PathMetrics>>>,
) -> Result<ExperimentReport> {
    let mut paths = Vec::with_capacity(n_paths * eps_list.len());
    for r in per_path {
        paths.extend(r?);
    }
    let rows: Vec<EpsRow> = eps_list
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let ms: Vec<&PathMetrics> = paths.iter().skip(k).step_by(eps_list.len()).collect();
            let col = |f: fn(&PathMetrics) -> f64| ms.iter().map(|m| f(m)).collect::<Vec<f64>>();
            let mean = |f: fn(&PathMetrics) -> f64| Summary::of(&col(f)).mean;
            EpsRow {
                eps,
                n_paths,
                estimator: Summary::of(&col(|m| m.estimator)),
                diagnostics: RowDiagnostics {
                    sup_dist: Summary::of(&col(|m| m.sup_dist)),
                    mean_sup_l2_4: mean(|m| m.monitors.sup_l2_4),
                    mean_int_h1_sq: mean(|m| m.monitors.int_h1_sq),
                    mean_sup_dz_4: mean(|m| m.monitors.sup_dz_4),
                    mean_int_dz_mixed: mean(|m| m.monitors.int_dz_mixed),
                    mean_rescaled_mixed: mean(|m| m.rescaled_mixed),
                },
            }
        })
        .collect();
    let positive = rows.iter().all(|r| r.estimator.mean > 0.0 && r.estimator.mean.is_finite());
    let fit = if positive && rows.len() >= 2 {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps.ln(), r.estimator.mean.ln())).collect();
        Some(fit_slope(&pts)?)
    } else {
        None
    };
    Ok(ExperimentReport {
        campaign,
        regression_skipped: fit.is_none(),
        fit,
        rows,
        master_seed,
        config_digest: String::new(),
        paths,
    })
}

fn diff_at<'a>(a: &'a Trajectory, b: &'a Trajectory, scale: f64) -> impl Fn(usize) -> State + 'a {
    move |i| (&a.samples[i].state - &b.samples[i].state).scaled(scale)
}

/// Strong deviation: `X = Y^eps - Y0` for each `eps`.
pub fn run_strong_convergence(
    y0: &State,
    eps_list: &[f64],
    n_paths: usize,
    cfg: &SolverConfig,
    spec: &NoiseSpec,
    master_seed: u64,
) -> Result<ExperimentReport> {
    validate(eps_list, n_paths)?;
    let base = simulate_deterministic(y0, cfg)?;
    let times = base.times();
    let per_path: Vec<Result<Vec<PathMetrics>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = sample_path(master_seed, p, &cfg.grid, spec.d_w());
            eps_list
                .iter()
                .map(|&eps| {
                    let y = simulate_stochastic(y0, &cfg.with_eps(eps), spec, &path)?;
                    let (estimator, sup_dist) = path_estimator(&times, diff_at(&y, &base, 1.0));
                    Ok(PathMetrics {
                        eps,
                        path_index: p,
                        estimator,
                        sup_dist,
                        monitors: y.monitors,
                        rescaled_mixed: 0.0,
                    })
                })
                .collect()
        })
        .collect();
    assemble(Campaign::Strong, eps_list, n_paths, master_seed, per_path)
}

/// Central limit correction: `X = (Y^eps - Y0) / sqrt(eps) - V0`, with `V0` on the same path.
pub fn run_clt_verification(
    y0: &State,
    eps_list: &[f64],
    n_paths: usize,
    cfg: &SolverConfig,
    spec: &NoiseSpec,
    master_seed: u64,
) -> Result<ExperimentReport> {
    validate(eps_list, n_paths)?;
    let base = simulate_deterministic(y0, cfg)?;
    let times = base.times();
    let per_path: Vec<Result<Vec<PathMetrics>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = sample_path(master_seed, p, &cfg.grid, spec.d_w());
            let lin = simulate_linearized(y0, cfg, spec, &path, &base)?;
            eps_list
                .iter()
                .map(|&eps| {
                    let y = simulate_stochastic(y0, &cfg.with_eps(eps), spec, &path)?;
                    let s = 1.0 / eps.sqrt();
                    let (estimator, sup_dist) = path_estimator(&times, |i| {
                        let mut x = (&y.samples[i].state - &base.samples[i].state).scaled(s);
                        x.axpy(-1.0, &lin.samples[i].state);
                        x
                    });
                    Ok(PathMetrics {
                        eps,
                        path_index: p,
                        estimator,
                        sup_dist,
                        monitors: y.monitors,
                        rescaled_mixed: rescaled_mixed(&times, diff_at(&y, &base, s)),
                    })
                })
                .collect()
        })
        .collect();
    assemble(Campaign::Clt, eps_list, n_paths, master_seed, per_path)
}

/// Controlled process against the skeleton: `X = Z^eps - R^h` for a fixed control `h`.
pub fn run_mdp_convergence(
    y0: &State,
    h: &ControlPath,
    eps_list: &[f64],
    n_paths: usize,
    cfg: &SolverConfig,
    spec: &NoiseSpec,
    master_seed: u64,
) -> Result<ExperimentReport> {
    validate(eps_list, n_paths)?;
    let base = simulate_deterministic(y0, cfg)?;
    let skeleton = solve_skeleton(h, cfg, spec, &base)?;
    let times = base.times();
    let per_path: Vec<Result<Vec<PathMetrics>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = sample_path(master_seed, p, &cfg.grid, spec.d_w());
            eps_list
                .iter()
                .map(|&eps| {
                    let run = cfg.with_eps(eps);
                    let z = simulate_controlled(h, &run, spec, &path, &base)?;
                    let (estimator, sup_dist) = path_estimator(&times, diff_at(&z, &skeleton, 1.0));
                    // moment monitors belong to the controlled solution X = Y0 + sqrt(eps) lambda Z
                    let coupling = eps.sqrt() * run.lambda();
                    let monitors = Monitors::along(&times, |i| {
                        let mut x = base.samples[i].state.clone();
                        x.axpy(coupling, &z.samples[i].state);
                        x
                    });
                    Ok(PathMetrics {
                        eps,
                        path_index: p,
                        estimator,
                        sup_dist,
                        monitors,
                        rescaled_mixed: 0.0,
                    })
                })
                .collect()
        })
        .collect();
    assemble(Campaign::Mdp, eps_list, n_paths, master_seed, per_path)
}
