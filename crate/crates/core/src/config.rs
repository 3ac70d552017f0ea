//! Flat `section.key = value` run configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Unknown keys,
//! duplicates and out-of-range values are all collected and reported together
//! with their line numbers. `domain.nx` and `domain.nz` are required; every
//! other key has a default (see [`DEFAULTS`]).
//!
//! The digest is the SHA-256 of the sorted, normalized `key=value` lines of the
//! fully resolved configuration (output keys excluded), so it ignores ordering,
//! comments and spelling of numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::dynamics::{SolverConfig, TimeGrid};
use crate::error::{Error, Result};
use crate::noise::{noise_directions, NoiseKind, NoiseSpec};
use crate::operators::OperatorToggles;
use crate::rate::ControlPath;
use crate::spectral::{DomainSpec, Space, State};

/// Keys with their default values. `None` marks a required key.
pub const DEFAULTS: &[(&str, Option<&str>)] = &[
    ("domain.length", Some("1")),
    ("domain.depth", Some("1")),
    ("domain.nx", None),
    ("domain.nz", None),
    ("domain.pad", Some("1.5")),
    ("grid.t_end", Some("1")),
    ("grid.n_steps", Some("400")),
    ("noise.kind", Some("bounded_diagonal")),
    ("noise.d_w", Some("8")),
    ("noise.sigma", Some("0.5")),
    ("noise.saturation", Some("1")),
    ("solver.enable_b", Some("true")),
    ("solver.enable_g", Some("true")),
    ("solver.eps", Some("1e-1, 1e-2, 1e-3")),
    ("solver.lambda_exponent", Some("0.25")),
    ("solver.record_every", Some("1")),
    ("solver.c_nl", Some("1")),
    ("solver.blowup_guard", Some("1e12")),
    ("experiment.paths", Some("64")),
    ("experiment.master_seed", Some("42")),
    ("experiment.trials", Some("100")),
    ("initial.amplitude", Some("1")),
    ("control.energy", Some("2")),
    ("rate.phi_component", Some("v")),
    ("rate.phi_k", Some("1")),
    ("rate.phi_m", Some("1")),
    ("rate.x", Some("1")),
    ("rate.iters", Some("500")),
    ("output.directory", Some("out")),
    ("output.formats", Some("csv")),
];

/// One problem found while parsing; `line` is 0 for problems not tied to a line.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

/// All problems found in a config text.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::Config(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Velocity,
    Temperature,
}

/// Output artifact selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub binary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub pad: f64,
    pub grid: TimeGrid,
    pub noise_kind: NoiseKind,
    pub d_w: usize,
    pub sigma: Vec<f64>,
    pub saturation: f64,
    pub toggles: OperatorToggles,
    pub eps_list: Vec<f64>,
    pub lambda_exponent: f64,
    pub record_every: usize,
    pub c_nl: f64,
    pub blowup_guard: f64,
    pub paths: usize,
    pub master_seed: u64,
    pub trials: usize,
    pub amplitude: f64,
    pub control_energy: f64,
    pub phi_component: Component,
    pub phi_mode: (usize, usize),
    pub rate_x: f64,
    pub rate_iters: usize,
    pub output_dir: PathBuf,
    pub formats: Formats,
    normalized: BTreeMap<String, String>,
}

struct Parser {
    raw: BTreeMap<String, (String, usize)>,
    issues: Vec<ConfigIssue>,
    normalized: BTreeMap<String, String>,
}

impl Parser {
    fn issue(&mut self, line: usize, message: String) {
        self.issues.push(ConfigIssue { line, message });
    }

    /// Raw text and line of `key`, falling back to the default (line 0).
    fn text(&mut self, key: &str) -> Option<(String, usize)> {
        if let Some(v) = self.raw.get(key) {
            return Some(v.clone());
        }
        match DEFAULTS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d) {
            Some(d) => Some((d.to_string(), 0)),
            None => {
                self.issue(0, format!("missing required key `{key}`"));
                None
            }
        }
    }

    fn parse<T>(&mut self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Option<(T, usize)> {
        let (text, line) = self.text(key)?;
        match f(text.trim()) {
            Some(v) => Some((v, line)),
            None => {
                self.issue(line, format!("`{key}`: expected {what}, got `{text}`"));
                None
            }
        }
    }

    fn float(&mut self, key: &str, valid: impl Fn(f64) -> bool, rule: &str) -> Option<f64> {
        let (v, line) = self.parse(key, "a number", |s| s.parse::<f64>().ok().filter(|x| x.is_finite()))?;
        if !valid(v) {
            self.issue(line, format!("`{key}` = {v} violates {rule}"));
            return None;
        }
        self.normalized.insert(key.into(), format!("{v:e}"));
        Some(v)
    }

    fn int(&mut self, key: &str, min: u64) -> Option<u64> {
        let (v, line) = self.parse(key, "a nonnegative integer", |s| s.parse::<u64>().ok())?;
        if v < min {
            self.issue(line, format!("`{key}` = {v} must be >= {min}"));
            return None;
        }
        self.normalized.insert(key.into(), v.to_string());
        Some(v)
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        let (v, _) = self.parse(key, "true or false", |s| s.parse::<bool>().ok())?;
        self.normalized.insert(key.into(), v.to_string());
        Some(v)
    }

    fn list(&mut self, key: &str, valid: impl Fn(f64) -> bool, rule: &str) -> Option<Vec<f64>> {
        let (v, line) = self.parse(key, "a comma-separated list of numbers", |s| {
            s.split(',')
                .map(|p| p.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .filter(|l| !l.is_empty())
        })?;
        if let Some(bad) = v.iter().find(|x| !valid(**x)) {
            self.issue(line, format!("`{key}` entry {bad} violates {rule}"));
            return None;
        }
        let norm: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
        self.normalized.insert(key.into(), norm.join(","));
        Some(v)
    }

    fn word<T>(&mut self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Option<T> {
        let (v, _) = self.parse(key, what, f)?;
        let (text, _) = self.text(key)?;
        self.normalized.insert(key.into(), text.trim().to_string());
        Some(v)
    }

    fn line_of(&self, key: &str) -> usize {
        self.raw.get(key).map_or(0, |v| v.1)
    }
}

/// Parses and validates a config text, reporting every problem at once.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, ConfigErrors> {
    let mut p = Parser {
        raw: BTreeMap::new(),
        issues: Vec::new(),
        normalized: BTreeMap::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            p.issue(n, format!("expected `section.key = value`, got `{body}`"));
            continue;
        };
        let key = key.trim();
        if !DEFAULTS.iter().any(|(k, _)| *k == key) {
            p.issue(n, format!("unknown key `{key}`"));
            continue;
        }
        if let Some((_, first)) = p.raw.get(key) {
            let first = *first;
            p.issue(n, format!("duplicate key `{key}` (lines {first} and {n})"));
            continue;
        }
        p.raw.insert(key.to_string(), (value.trim().to_string(), n));
    }

    let pos = |x: f64| x > 0.0;
    let length = p.float("domain.length", pos, "length > 0");
    let depth = p.float("domain.depth", pos, "depth > 0");
    let nx = p.int("domain.nx", 1);
    let nz = p.int("domain.nz", 1);
    let pad = p.float("domain.pad", |x| x >= 1.0, "pad >= 1");
    let t_end = p.float("grid.t_end", pos, "t_end > 0");
    let n_steps = p.int("grid.n_steps", 1);
    let noise_kind = p.word("noise.kind", "additive, bounded_diagonal or linear_diagonal", |s| s.parse().ok());
    let d_w = p.int("noise.d_w", 1);
    let sigma = p.list("noise.sigma", |x| x >= 0.0, "sigma >= 0");
    let saturation = p.float("noise.saturation", pos, "saturation > 0");
    let enable_b = p.boolean("solver.enable_b");
    let enable_g = p.boolean("solver.enable_g");
    let eps_list = p.list("solver.eps", pos, "eps > 0");
    let lambda_exponent = p.float(
        "solver.lambda_exponent",
        |a| a > 0.0 && a < 0.5,
        "a in (0, 1/2), needed for lambda(eps) -> inf and sqrt(eps) lambda(eps) -> 0",
    );
    let record_every = p.int("solver.record_every", 1);
    let c_nl = p.float("solver.c_nl", pos, "c_nl > 0");
    let blowup_guard = p.float("solver.blowup_guard", pos, "blowup_guard > 0");
    let paths = p.int("experiment.paths", 2);
    let master_seed = p.int("experiment.master_seed", 0);
    let trials = p.int("experiment.trials", 1);
    let amplitude = p.float("initial.amplitude", |x| x >= 0.0, "amplitude >= 0");
    let control_energy = p.float("control.energy", |x| x >= 0.0, "energy >= 0");
    let phi_component = p.word("rate.phi_component", "v or temp", |s| match s {
        "v" => Some(Component::Velocity),
        "temp" => Some(Component::Temperature),
        _ => None,
    });
    let phi_k = p.int("rate.phi_k", 0);
    let phi_m = p.int("rate.phi_m", 0);
    let rate_x = p.float("rate.x", |_| true, "");
    let rate_iters = p.int("rate.iters", 1);
    let output_dir = p.word("output.directory", "a path", |s| (!s.is_empty()).then(|| PathBuf::from(s)));
    let formats = p.word("output.formats", "a list drawn from csv, bin", |s| {
        let mut f = Formats { csv: false, binary: false };
        for part in s.split(',').map(str::trim) {
            match part {
                "csv" => f.csv = true,
                "bin" => f.binary = true,
                _ => return None,
            }
        }
        Some(f)
    });

    // cross-field rules
    if let Some(eps) = &eps_list {
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            let line = p.line_of("solver.eps");
            p.issue(line, "`solver.eps` must be strictly decreasing".into());
        }
    }
    if let (Some(sigma), Some(d_w)) = (&sigma, d_w) {
        if sigma.len() != 1 && sigma.len() as u64 != d_w {
            let line = p.line_of("noise.sigma");
            p.issue(line, format!("`noise.sigma` has {} entries; expected 1 or d_w = {d_w}", sigma.len()));
        }
    }
    let domain = match (length, depth, nx, nz) {
        (Some(l), Some(h), Some(nx), Some(nz)) => match DomainSpec::new(l, h, nx as usize, nz as usize) {
            Ok(d) => Some(d),
            Err(e) => {
                p.issue(0, e.to_string());
                None
            }
        },
        _ => None,
    };
    if let (Some(d), Some(d_w)) = (&domain, d_w) {
        if let Err(e) = noise_directions(d, d_w as usize) {
            let line = p.line_of("noise.d_w");
            p.issue(line, e.to_string());
        }
    }
    if let (Some(d), Some(c), Some(k), Some(m)) = (&domain, phi_component, phi_k, phi_m) {
        let (k, m) = (k as usize, m as usize);
        let ok = k <= d.nx
            && m <= d.nz
            && match c {
                Component::Velocity => k >= 1 && m >= 1,
                Component::Temperature => true,
            };
        if !ok {
            let line = p.line_of("rate.phi_k").max(p.line_of("rate.phi_m"));
            p.issue(line, format!("rate functional mode ({k}, {m}) is not a basis mode of the chosen component"));
        }
    }

    if !p.issues.is_empty() {
        p.issues.sort_by_key(|i| i.line);
        return Err(ConfigErrors(p.issues));
    }
    let grid = TimeGrid::new(t_end.unwrap(), n_steps.unwrap() as usize).map_err(|e| ConfigErrors(vec![ConfigIssue {
        line: 0,
        message: e.to_string(),
    }]))?;
    Ok(RunConfig {
        domain: domain.unwrap(),
        pad: pad.unwrap(),
        grid,
        noise_kind: noise_kind.unwrap(),
        d_w: d_w.unwrap() as usize,
        sigma: sigma.unwrap(),
        saturation: saturation.unwrap(),
        toggles: OperatorToggles {
            enable_b: enable_b.unwrap(),
            enable_g: enable_g.unwrap(),
        },
        eps_list: eps_list.unwrap(),
        lambda_exponent: lambda_exponent.unwrap(),
        record_every: record_every.unwrap() as usize,
        c_nl: c_nl.unwrap(),
        blowup_guard: blowup_guard.unwrap(),
        paths: paths.unwrap() as usize,
        master_seed: master_seed.unwrap(),
        trials: trials.unwrap() as usize,
        amplitude: amplitude.unwrap(),
        control_energy: control_energy.unwrap(),
        phi_component: phi_component.unwrap(),
        phi_mode: (phi_k.unwrap() as usize, phi_m.unwrap() as usize),
        rate_x: rate_x.unwrap(),
        rate_iters: rate_iters.unwrap() as usize,
        output_dir: output_dir.unwrap(),
        formats: formats.unwrap(),
        // where artifacts go does not change what they contain
        normalized: p.normalized.into_iter().filter(|(k, _)| !k.starts_with("output.")).collect(),
    })
}

impl RunConfig {
    /// Hex SHA-256 of the normalized key-value set.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.normalized {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Overrides the master seed (and the digest with it).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self.normalized.insert("experiment.master_seed".into(), seed.to_string());
        self
    }

    /// Overrides the output directory; not part of the digest.
    pub fn with_output_dir(mut self, dir: PathBuf) -> Self {
        self.output_dir = dir;
        self
    }

    pub fn space(&self) -> Result<Space> {
        Space::with_pad(self.domain, self.pad)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.space()?, self.grid).with_toggles(self.toggles);
        cfg.lambda_exponent = self.lambda_exponent;
        cfg.record_every = self.record_every;
        cfg.c_nl = self.c_nl;
        cfg.blowup_guard = self.blowup_guard;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let sigma = if self.sigma.len() == 1 {
            vec![self.sigma[0]; self.d_w]
        } else {
            self.sigma.clone()
        };
        NoiseSpec::new(self.noise_kind, sigma, self.saturation, self.domain)
    }

    pub fn initial_state(&self) -> State {
        State::smooth_initial(self.domain, self.amplitude)
    }

    /// Fixed control with energy `control.energy`.
    pub fn control(&self) -> ControlPath {
        ControlPath::smooth_profile(self.grid, self.d_w, self.control_energy)
    }

    /// Terminal functional whose pairing returns the coefficient of the configured mode.
    pub fn phi(&self) -> State {
        let (k, m) = self.phi_mode;
        let mut phi = State::zeros(self.domain);
        match self.phi_component {
            Component::Velocity => {
                let mass = phi.v.mass(k, m);
                phi.v.set(k, m, 1.0 / mass);
            }
            Component::Temperature => {
                let mass = phi.temp.mass(k, m);
                phi.temp.set(k, m, 1.0 / mass);
            }
        }
        phi
    }
}
