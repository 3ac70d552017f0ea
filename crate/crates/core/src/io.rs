//! CSV and binary artifacts.
//!
//! CSV files use `,` separators, `.` decimals and `{:.16e}` reals (17
//! significant digits). Tables end with footer rows `name,value`; every file
//! carries a `config_digest` footer. Wall-clock timestamps go only into
//! `metadata.txt`, so reruns of the same config give byte-identical CSVs.
//!
//! Binary trajectories are little-endian: the 8-byte magic `PEQTRAJ1`, then
//! `u64` values `Nx`, `Nz`, `n_samples`, then `n_samples` rows of `f64`, each row
//! being `t` followed by the state coefficients in `State::to_flat` order.
//! Controls use magic `PEQCTRL1` with `Nx = d_W`, `Nz = 0` and rows `t, h_1..h_dW`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::experiments::ExperimentReport;
use crate::noise::HypothesisReport;
use crate::operators::IdentityReport;
use crate::rate::{ControlPath, RateResult};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"PEQTRAJ1";
pub const CONTROL_MAGIC: &[u8; 8] = b"PEQCTRL1";

/// `{:.16e}`
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

struct Table {
    w: csv::Writer<BufWriter<File>>,
}

impl Table {
    fn create(path: &Path, header: &[&str]) -> Result<Table> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = csv::WriterBuilder::new()
            .flexible(true)
            .from_writer(BufWriter::new(File::create(path)?));
        w.write_record(header)?;
        Ok(Table { w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        Ok(())
    }

    fn footer(&mut self, name: &str, value: impl AsRef<str>) -> Result<()> {
        self.row([name, value.as_ref()])
    }

    fn finish(mut self, digest: &str) -> Result<()> {
        self.footer("config_digest", digest)?;
        self.w.flush()?;
        Ok(())
    }
}

/// `eps, n_paths, mean, sigma, ci_half` plus fit, seed and digest footers.
pub fn write_report_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut t = Table::create(path, &["eps", "n_paths", "mean", "sigma", "ci_half"])?;
    for r in &report.rows {
        t.row([
            real(r.eps),
            r.n_paths.to_string(),
            real(r.estimator.mean),
            real(r.estimator.sigma),
            real(r.estimator.ci_half),
        ])?;
    }
    let (slope, intercept, r2) = match report.fit {
        Some(f) => (real(f.slope), real(f.intercept), real(f.r2)),
        None => ("NaN".into(), "NaN".into(), "NaN".into()),
    };
    t.footer("slope", slope)?;
    t.footer("intercept", intercept)?;
    t.footer("r2", r2)?;
    t.footer("regression_skipped", report.regression_skipped.to_string())?;
    t.footer("seed", report.master_seed.to_string())?;
    t.finish(&report.config_digest)
}

/// Per-`eps` distance and moment diagnostics of a campaign.
pub fn write_report_diagnostics_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut t = Table::create(
        path,
        &[
            "eps",
            "sup_dist_mean",
            "sup_dist_ci_half",
            "sup_l2_4",
            "int_h1_sq",
            "sup_dz_4",
            "int_dz_mixed",
            "rescaled_mixed",
        ],
    )?;
    for r in &report.rows {
        let d = &r.diagnostics;
        t.row([
            real(r.eps),
            real(d.sup_dist.mean),
            real(d.sup_dist.ci_half),
            real(d.mean_sup_l2_4),
            real(d.mean_int_h1_sq),
            real(d.mean_sup_dz_4),
            real(d.mean_int_dz_mixed),
            real(d.mean_rescaled_mixed),
        ])?;
    }
    t.footer("seed", report.master_seed.to_string())?;
    t.finish(&report.config_digest)
}

/// `trial, res_31, res_antisym, res_energy, ratio_33`.
pub fn write_identity_csv(path: &Path, report: &IdentityReport, digest: &str) -> Result<()> {
    let mut t = Table::create(path, &["trial", "res_31", "res_antisym", "res_energy", "ratio_33"])?;
    for r in &report.rows {
        t.row([
            r.trial.to_string(),
            real(r.res_31),
            real(r.res_antisym),
            real(r.res_energy),
            real(r.ratio_33),
        ])?;
    }
    t.footer("pad", real(report.pad))?;
    t.footer("passes", report.passes().to_string())?;
    t.footer("seed", report.seed.to_string())?;
    t.finish(digest)
}

/// One row per noise kind.
pub fn write_hypotheses_csv(path: &Path, reports: &[HypothesisReport], seed: u64, digest: &str) -> Result<()> {
    let mut t = Table::create(
        path,
        &["kind", "k", "trials", "max_growth", "max_lipschitz", "max_dz_growth", "passes"],
    )?;
    for r in reports {
        t.row([
            r.kind.to_string(),
            real(r.k),
            r.trials.to_string(),
            real(r.max_growth),
            real(r.max_lipschitz),
            real(r.max_dz_growth),
            r.passes().to_string(),
        ])?;
    }
    t.footer("seed", seed.to_string())?;
    t.finish(digest)
}

/// `t, l2, h1, dz_l2` at every step.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, seed: u64, digest: &str) -> Result<()> {
    let mut t = Table::create(path, &["t", "l2", "h1", "dz_l2"])?;
    for d in &traj.diagnostics {
        t.row([real(d.t), real(d.l2), real(d.h1), real(d.dz_l2)])?;
    }
    let m = &traj.monitors;
    t.footer("sup_l2_4", real(m.sup_l2_4))?;
    t.footer("int_h1_sq", real(m.int_h1_sq))?;
    t.footer("sup_dz_4", real(m.sup_dz_4))?;
    t.footer("int_dz_mixed", real(m.int_dz_mixed))?;
    t.footer("sup_h1_sq", real(m.sup_h1_sq))?;
    t.footer("int_a_sq", real(m.int_a_sq))?;
    t.footer("eps", real(traj.eps))?;
    t.footer("seed", seed.to_string())?;
    t.finish(digest)
}

/// `value, residual, method, Q, iterations`, one row per result.
pub fn write_rate_csv(path: &Path, results: &[RateResult], x: f64, digest: &str) -> Result<()> {
    let mut t = Table::create(path, &["value", "residual", "method", "Q", "iterations"])?;
    for r in results {
        t.row([
            real(r.value),
            real(r.residual),
            r.method.to_string(),
            real(r.gram),
            r.iterations.to_string(),
        ])?;
    }
    t.footer("x", real(x))?;
    t.finish(digest)
}

/// Machine-readable failure record.
pub fn write_error_csv(path: &Path, kind: &str, message: &str, exit_code: i32, digest: &str) -> Result<()> {
    let mut t = Table::create(path, &["kind", "message", "exit_code"])?;
    t.row([kind, message, &exit_code.to_string()])?;
    t.finish(digest)
}

/// Timestamp and provenance for a run, kept apart from the deterministic CSVs.
pub fn write_metadata(dir: &Path, subcommand: &str, digest: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("metadata.txt");
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = File::create(&path)?;
    writeln!(f, "subcommand = {subcommand}")?;
    writeln!(f, "config_digest = {digest}")?;
    writeln!(f, "unix_time = {secs}")?;
    writeln!(f, "version = {}", env!("CARGO_PKG_VERSION"))?;
    Ok(path)
}

fn write_rows(path: &Path, magic: &[u8; 8], header: [u64; 3], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    for h in header {
        w.write_all(&h.to_le_bytes())?;
    }
    for row in rows {
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Full coefficient dump of the recorded samples.
pub fn write_trajectory_bin(path: &Path, traj: &Trajectory) -> Result<()> {
    let d = *traj.initial().domain();
    write_rows(
        path,
        TRAJECTORY_MAGIC,
        [d.nx as u64, d.nz as u64, traj.samples.len() as u64],
        traj.samples.iter().map(|s| {
            let mut row = vec![s.state.t];
            row.extend(s.state.to_flat());
            row
        }),
    )
}

pub fn write_control_bin(path: &Path, h: &ControlPath) -> Result<()> {
    let grid = *h.grid();
    write_rows(
        path,
        CONTROL_MAGIC,
        [h.d_w() as u64, 0, grid.n_steps() as u64],
        (0..grid.n_steps()).map(|n| {
            let mut row = vec![grid.t(n)];
            row.extend(h.step(n).iter().copied());
            row
        }),
    )
}

/// Header `(magic, Nx, Nz, n_samples)` and the rows of a binary artifact.
pub fn read_bin(path: &Path) -> Result<([u8; 8], [u64; 3], Vec<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC && &magic != CONTROL_MAGIC {
        return Err(Error::Io(format!("{}: unknown magic", path.display())));
    }
    let mut header = [0u64; 3];
    let mut buf = [0u8; 8];
    for h in header.iter_mut() {
        r.read_exact(&mut buf)?;
        *h = u64::from_le_bytes(buf);
    }
    let [nx, nz, n] = header.map(|x| x as usize);
    let width = if &magic == TRAJECTORY_MAGIC {
        1 + nx * nz + (nx + 1) * (nz + 1)
    } else {
        1 + nx
    };
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(width);
        for _ in 0..width {
            r.read_exact(&mut buf)?;
            row.push(f64::from_le_bytes(buf));
        }
        rows.push(row);
    }
    Ok((magic, header, rows))
}

/// The `config_digest` footer of a CSV artifact.
pub fn read_digest(path: &Path) -> Result<String> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_path(path)?;
    for rec in r.records() {
        let rec = rec?;
        if rec.get(0) == Some("config_digest") {
            return Ok(rec.get(1).unwrap_or("").to_string());
        }
    }
    Err(Error::Io(format!("{}: no config_digest footer", path.display())))
}

/// Common digest of a set of artifacts; artifacts from different configs are an error.
pub fn check_same_digest(paths: &[&Path]) -> Result<String> {
    let mut found: Option<(String, &Path)> = None;
    for &p in paths {
        let d = read_digest(p)?;
        match &found {
            None => found = Some((d, p)),
            Some((first, fp)) if *first != d => {
                return Err(Error::Config(format!(
                    "artifacts come from different configs: {} ({first}) vs {} ({d})",
                    fp.display(),
                    p.display()
                )))
            }
            Some(_) => {}
        }
    }
    found
        .map(|f| f.0)
        .ok_or_else(|| Error::Config("no artifacts to compare".into()))
}
