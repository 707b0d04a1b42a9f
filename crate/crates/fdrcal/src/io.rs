//! File formats: CSV panel ingestion, synthetic panel generation, report
//! and plot-data emission, provenance manifests, and JSONL checkpoints.
//!
//! ## Panel CSV schema (version 1)
//!
//! * header row: first column is the period-label column (its header text
//!   is free), remaining headers are strategy names (unique, non-empty);
//! * each data row: period label (unique, strictly increasing under the
//!   panel's period ordering) followed by one cell per strategy;
//! * empty cell ⇒ missing observation; all present values must be finite
//!   decimals (returns in decimal units, e.g. `0.01` = 1%).
//!
//! Factor CSVs share the layout but forbid missing cells.
//!
//! All error coordinates are 1-based file coordinates (row 1 = header,
//! column 1 = the period column).
//!
//! ## Emission
//!
//! Reports are written as nested JSON (lossless; re-ingesting reproduces
//! the in-memory value), flat CSV (one row per cell), and plot-data CSVs
//! (x/y series).  Invalid cells are never dropped: they carry the explicit
//! `NA` marker.  Nothing here embeds timestamps, so identical runs write
//! byte-identical files.

use crate::calibrate::{CutoffSolution, ErrorRateReport};
use crate::config::SyntheticSection;
use crate::joint::{JointErrorRates, JointTestResult};
use crate::panel::{FactorPanel, PanelError, ReturnPanel};
use crate::rates::RocCurve;
use crate::resample::{stream_rng, Stage};
use crate::simstudy::{CellRecord, SimStudyReport};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Explicit marker for invalid/absent numeric cells in CSV output.
pub const NULL_MARKER: &str = "NA";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IoError {
    #[error("cannot read {path}: {detail}")]
    Read { path: String, detail: String },
    #[error("cannot write {path}: {detail}")]
    Write { path: String, detail: String },
    #[error("{path}:{row}:{column}: {detail}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        detail: String,
    },
    #[error("{path}: duplicate {kind} \"{name}\" (column {column})")]
    DuplicateIdentifier {
        path: String,
        kind: String,
        name: String,
        column: usize,
    },
    #[error("{path}: file has no data rows")]
    Empty { path: String },
    #[error("invalid synthetic spec: {detail}")]
    InvalidSpec { detail: String },
    #[error("{path}:{line}: bad checkpoint record: {detail}")]
    Checkpoint {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("serialization failed: {detail}")]
    Serialize { detail: String },
    #[error(transparent)]
    Panel(#[from] PanelError),
}

fn read_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Read {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Write {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

/// Parsed CSV grid shared by the panel and factor loaders.
struct RawTable {
    names: Vec<String>,
    periods: Vec<String>,
    /// Row-major cells; `None` = empty cell.
    cells: Vec<Vec<Option<f64>>>,
}

fn load_table(path: &Path) -> Result<RawTable, IoError> {
    let file = std::fs::File::open(path).map_err(|e| read_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let p = path.display().to_string();

    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| read_err(path, e))?,
        None => return Err(IoError::Empty { path: p }),
    };
    if header.len() < 2 {
        return Err(IoError::Parse {
            path: p,
            row: 1,
            column: header.len(),
            detail: "header needs a period column plus at least one strategy column".into(),
        });
    }
    let mut names = Vec::with_capacity(header.len() - 1);
    let mut seen = std::collections::HashSet::new();
    for (idx, field) in header.iter().enumerate().skip(1) {
        let name = field.trim();
        if name.is_empty() {
            return Err(IoError::Parse {
                path: p,
                row: 1,
                column: idx + 1,
                detail: "empty strategy name in header".into(),
            });
        }
        if !seen.insert(name.to_string()) {
            return Err(IoError::DuplicateIdentifier {
                path: p,
                kind: "strategy name".into(),
                name: name.into(),
                column: idx + 1,
            });
        }
        names.push(name.to_string());
    }

    let n = names.len();
    let mut periods = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut seen_periods = std::collections::HashSet::new();
    for (ri, rec) in records.enumerate() {
        let row = ri + 2; // 1-based, after the header
        let rec = rec.map_err(|e| read_err(path, e))?;
        if rec.len() != n + 1 {
            return Err(IoError::Parse {
                path: p,
                row,
                column: rec.len(),
                detail: format!("expected {} fields, found {}", n + 1, rec.len()),
            });
        }
        let period = rec.get(0).unwrap_or("").trim().to_string();
        if period.is_empty() {
            return Err(IoError::Parse {
                path: p,
                row,
                column: 1,
                detail: "empty period label".into(),
            });
        }
        if !seen_periods.insert(period.clone()) {
            return Err(IoError::DuplicateIdentifier {
                path: p,
                kind: "period".into(),
                name: period,
                column: 1,
            });
        }
        let mut row_cells = Vec::with_capacity(n);
        for j in 0..n {
            let raw = rec.get(j + 1).unwrap_or("").trim();
            if raw.is_empty() {
                row_cells.push(None);
                continue;
            }
            let value: f64 = raw.parse().map_err(|_| IoError::Parse {
                path: p.clone(),
                row,
                column: j + 2,
                detail: format!("cannot parse \"{raw}\" as a number"),
            })?;
            if !value.is_finite() {
                return Err(IoError::Parse {
                    path: p,
                    row,
                    column: j + 2,
                    detail: format!("non-finite value \"{raw}\""),
                });
            }
            row_cells.push(Some(value));
        }
        periods.push(period);
        cells.push(row_cells);
    }
    if periods.is_empty() {
        return Err(IoError::Empty { path: p });
    }
    Ok(RawTable {
        names,
        periods,
        cells,
    })
}

/// Loads a return panel; empty cells become missing observations.
pub fn load_panel(path: &Path) -> Result<ReturnPanel, IoError> {
    let table = load_table(path)?;
    let d = table.periods.len();
    let n = table.names.len();
    let values = Array2::from_shape_fn((d, n), |(r, j)| table.cells[r][j].unwrap_or(f64::NAN));
    let mask = Array2::from_shape_fn((d, n), |(r, j)| table.cells[r][j].is_some());
    Ok(ReturnPanel::new(values, mask, table.periods, table.names)?)
}

/// Loads a factor panel; every cell must be present.
pub fn load_factors(path: &Path) -> Result<FactorPanel, IoError> {
    let table = load_table(path)?;
    let d = table.periods.len();
    let k = table.names.len();
    for (r, row) in table.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if cell.is_none() {
                return Err(IoError::Parse {
                    path: path.display().to_string(),
                    row: r + 2,
                    column: j + 2,
                    detail: "factor cells cannot be empty".into(),
                });
            }
        }
    }
    let values = Array2::from_shape_fn((d, k), |(r, j)| table.cells[r][j].unwrap());
    Ok(FactorPanel::new(values, table.periods, table.names)?)
}

/// Shortest round-trip decimal formatting (Rust's `Display` for `f64`).
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| NULL_MARKER.into())
}

fn fmt_opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string())
        .unwrap_or_else(|| NULL_MARKER.into())
}

/// Writes a panel in the schema `load_panel` reads; round-trips exactly.
pub fn write_panel(panel: &ReturnPanel, path: &Path) -> Result<(), IoError> {
    let mut text = String::new();
    text.push_str("period");
    for name in panel.names() {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (r, period) in panel.periods().iter().enumerate() {
        text.push_str(period);
        for j in 0..panel.n_strategies() {
            text.push(',');
            if panel.mask()[(r, j)] {
                let _ = write!(text, "{}", panel.values()[(r, j)]);
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| write_err(path, e))
}

/// Writes a complete factor panel in the same schema.
pub fn write_factors(factors: &FactorPanel, path: &Path) -> Result<(), IoError> {
    let mut text = String::new();
    text.push_str("period");
    for name in factors.names() {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (r, period) in factors.periods().iter().enumerate() {
        text.push_str(period);
        for j in 0..factors.n_factors() {
            let _ = write!(text, ",{}", factors.values()[(r, j)]);
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| write_err(path, e))
}

fn month_labels(start: &str, d: usize) -> Result<Vec<String>, IoError> {
    let bad = || IoError::InvalidSpec {
        detail: format!("start must be \"YYYY-MM\", got \"{start}\""),
    };
    let (y, m) = start.split_once('-').ok_or_else(bad)?;
    let year: i64 = y.parse().map_err(|_| bad())?;
    let month: i64 = m.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&month) {
        return Err(bad());
    }
    Ok((0..d as i64)
        .map(|k| {
            let total = year * 12 + (month - 1) + k;
            format!(
                "{:04}-{:02}",
                total.div_euclid(12),
                total.rem_euclid(12) + 1
            )
        })
        .collect())
}

/// Generates a reproducible synthetic panel plus a truth sidecar.
///
/// Columns are equicorrelated Gaussians (`x = σ(√ρ·f + √(1−ρ)·ε)`); a
/// random `signal_fraction` of columns additionally receive a per-period
/// mean of `signal_mean`.  The sidecar lists, per strategy, whether it
/// carries signal and the mean injected.  Identical seeds produce
/// byte-identical files.
pub fn gen_synthetic(
    spec: &SyntheticSection,
    seed: u64,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), IoError> {
    if spec.d < 2 || spec.n < 1 {
        return Err(IoError::InvalidSpec {
            detail: format!("need d >= 2 and n >= 1, got d = {}, n = {}", spec.d, spec.n),
        });
    }
    if !(0.0..1.0).contains(&spec.correlation) {
        return Err(IoError::InvalidSpec {
            detail: format!("correlation must lie in [0, 1), got {}", spec.correlation),
        });
    }
    if !(0.0..=1.0).contains(&spec.signal_fraction) {
        return Err(IoError::InvalidSpec {
            detail: format!(
                "signal_fraction must lie in [0, 1], got {}",
                spec.signal_fraction
            ),
        });
    }
    if spec.noise_sd <= 0.0 || !spec.noise_sd.is_finite() {
        return Err(IoError::InvalidSpec {
            detail: format!(
                "noise_sd must be positive and finite, got {}",
                spec.noise_sd
            ),
        });
    }
    if !spec.signal_mean.is_finite() {
        return Err(IoError::InvalidSpec {
            detail: format!("signal_mean must be finite, got {}", spec.signal_mean),
        });
    }

    let periods = match &spec.start {
        Some(start) => month_labels(start, spec.d)?,
        None => (1..=spec.d).map(|r| format!("{r:04}")).collect(),
    };
    let names: Vec<String> = (1..=spec.n).map(|j| format!("s{j:04}")).collect();

    // Signal columns: uniform subset, fixed by the seed.
    let n_true = crate::inject::n_true_for_fraction(spec.signal_fraction, spec.n);
    let mut select_rng = stream_rng(seed, Stage::Synthetic, 1, 0);
    let mut pool: Vec<usize> = (0..spec.n).collect();
    for i in 0..n_true {
        let pick = select_rng.random_range(i..spec.n);
        pool.swap(i, pick);
    }
    let mut truth = vec![false; spec.n];
    for &c in &pool[..n_true] {
        truth[c] = true;
    }

    let rho = spec.correlation;
    let (common_w, idio_w) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut noise_rng = stream_rng(seed, Stage::Synthetic, 0, 0);
    let mut values = Array2::zeros((spec.d, spec.n));
    for r in 0..spec.d {
        let f: f64 = StandardNormal.sample(&mut noise_rng);
        for j in 0..spec.n {
            let e: f64 = StandardNormal.sample(&mut noise_rng);
            let mut x = spec.noise_sd * (common_w * f + idio_w * e);
            if truth[j] {
                x += spec.signal_mean;
            }
            values[(r, j)] = x;
        }
    }
    let panel = ReturnPanel::from_complete(values, periods, names.clone())?;

    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let panel_path = out_dir.join("synthetic_panel.csv");
    write_panel(&panel, &panel_path)?;

    let truth_path = out_dir.join("synthetic_truth.csv");
    let mut sidecar = String::from("strategy,truth,injected_mean\n");
    for (j, name) in names.iter().enumerate() {
        let mean = if truth[j] { spec.signal_mean } else { 0.0 };
        let _ = writeln!(sidecar, "{name},{},{}", truth[j], fmt_f64(mean));
    }
    std::fs::write(&truth_path, sidecar).map_err(|e| write_err(&truth_path, e))?;
    Ok((panel_path, truth_path))
}

/// Output formats for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Plotdata,
}

pub const ALL_FORMATS: [ReportFormat; 3] = [
    ReportFormat::Json,
    ReportFormat::Csv,
    ReportFormat::Plotdata,
];

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| IoError::Serialize {
        detail: e.to_string(),
    })?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| write_err(path, e))
}

/// Emits a calibration report.
///
/// * JSON: the full nested report (provenance included); re-ingesting with
///   serde reproduces the in-memory value exactly.
/// * CSV: one flat row per cell, `NA` for every absent/invalid field.
/// * Plotdata: per-`p0` error-rate-vs-cutoff series (fixed-cutoff cells
///   only), for rate-curve plots.
pub fn emit_report(
    report: &ErrorRateReport,
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Json => {
                let path = out_dir.join("report.json");
                write_json(report, &path)?;
                written.push(path);
            }
            ReportFormat::Csv => {
                let path = out_dir.join("report.csv");
                let mut text = String::from(
                    "p0,procedure,alpha,t_cutoff,type1,se_type1,type2,se_type2,\
                     oratio,se_oratio,tpr,fpr,outer_draws,inner_draws,draws_used,\
                     draws_skipped,valid,unattained,error\n",
                );
                for c in &report.cells {
                    let error = c.error.as_deref().unwrap_or("");
                    let error = if error.contains([',', '"', '\n']) {
                        format!("\"{}\"", error.replace('"', "\"\""))
                    } else {
                        error.to_string()
                    };
                    let _ = writeln!(
                        text,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        fmt_f64(c.p0),
                        c.procedure,
                        fmt_opt(c.alpha),
                        fmt_opt(c.t_cutoff),
                        fmt_opt(c.type1),
                        fmt_opt(c.se_type1),
                        fmt_opt(c.type2),
                        fmt_opt(c.se_type2),
                        fmt_opt(c.oratio),
                        fmt_opt(c.se_oratio),
                        fmt_opt(c.tpr),
                        fmt_opt(c.fpr),
                        c.outer_draws,
                        c.inner_draws,
                        c.draws_used,
                        c.draws_skipped,
                        c.valid,
                        fmt_opt_bool(c.unattained),
                        error,
                    );
                }
                std::fs::write(&path, text).map_err(|e| write_err(&path, e))?;
                written.push(path);
            }
            ReportFormat::Plotdata => {
                let mut p0s: Vec<f64> = report
                    .cells
                    .iter()
                    .filter(|c| c.procedure == "fixed_cutoff")
                    .map(|c| c.p0)
                    .collect();
                p0s.sort_by(f64::total_cmp);
                p0s.dedup();
                for p0 in p0s {
                    let path = out_dir.join(format!("plot_rates_vs_cutoff_p0_{}.csv", fmt_f64(p0)));
                    let mut text = String::from("t_cutoff,type1,type2,oratio\n");
                    for c in report
                        .cells
                        .iter()
                        .filter(|c| c.procedure == "fixed_cutoff" && c.p0 == p0)
                    {
                        let _ = writeln!(
                            text,
                            "{},{},{},{}",
                            fmt_opt(c.t_cutoff),
                            fmt_opt(c.type1),
                            fmt_opt(c.type2),
                            fmt_opt(c.oratio),
                        );
                    }
                    std::fs::write(&path, text).map_err(|e| write_err(&path, e))?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

/// Emits an ROC curve: JSON plus a plot-data series.  The analytic (0,0)
/// and (1,1) endpoints bound every series.
pub fn emit_roc(curve: &RocCurve, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let json_path = out_dir.join("roc.json");
    write_json(curve, &json_path)?;
    let csv_path = out_dir.join("plot_roc.csv");
    let mut text = String::from("cutoff,fpr,tpr\n");
    for pt in &curve.points {
        let _ = writeln!(
            text,
            "{},{},{}",
            fmt_f64(pt.cutoff),
            fmt_f64(pt.fpr),
            fmt_f64(pt.tpr)
        );
    }
    std::fs::write(&csv_path, text).map_err(|e| write_err(&csv_path, e))?;
    Ok(vec![json_path, csv_path])
}

/// Emits one cutoff solution as JSON.
pub fn emit_solution(solution: &CutoffSolution, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let path = out_dir.join("solution.json");
    write_json(solution, &path)?;
    Ok(vec![path])
}

/// Emits a cutoff-vs-p0 series (one solved cutoff per prior fraction).
pub fn emit_cutoff_curve(
    solutions: &[CutoffSolution],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let path = out_dir.join("plot_cutoff_vs_p0.csv");
    let mut text = String::from("p0,t_star,achieved_type1,achieved_type2,unattained\n");
    for s in solutions {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            fmt_f64(s.p0),
            fmt_f64(s.t_star),
            fmt_f64(s.achieved_type1),
            fmt_f64(s.achieved_type2),
            s.unattained
        );
    }
    std::fs::write(&path, text).map_err(|e| write_err(&path, e))?;
    Ok(vec![path])
}

/// Emits a joint-test result (JSON + flat CSV of per-statistic p-values).
pub fn emit_joint_result(
    result: &JointTestResult,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let json_path = out_dir.join("joint_test.json");
    write_json(result, &json_path)?;
    let csv_path = out_dir.join("joint_test.csv");
    let mut text = String::from("statistic,observed,p_value,b_used\n");
    for s in &result.stats {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            s.stat.label(),
            fmt_f64(s.observed),
            fmt_f64(s.p_value),
            s.b_used
        );
    }
    std::fs::write(&csv_path, text).map_err(|e| write_err(&csv_path, e))?;
    Ok(vec![json_path, csv_path])
}

/// Emits joint-test error rates (JSON + flat CSV of per-statistic/level
/// rejection tallies).
pub fn emit_joint_rates(rates: &JointErrorRates, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let json_path = out_dir.join("joint_rates.json");
    write_json(rates, &json_path)?;
    let csv_path = out_dir.join("joint_rates.csv");
    let mut text = String::from("statistic,level,rejections,perturbations,rejection_rate\n");
    for (stat, row) in rates.statistics.iter().zip(&rates.tallies) {
        for tally in row {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                stat.label(),
                fmt_f64(tally.level),
                tally.rejections,
                tally.perturbations,
                fmt_f64(tally.rejection_rate())
            );
        }
    }
    std::fs::write(&csv_path, text).map_err(|e| write_err(&csv_path, e))?;
    Ok(vec![json_path, csv_path])
}

/// Emits a simulation-study report (JSON + flat CSV with `NA` markers).
pub fn emit_sim_report(report: &SimStudyReport, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let json_path = out_dir.join("sim_study.json");
    write_json(report, &json_path)?;
    let csv_path = out_dir.join("sim_study.csv");
    let mut text =
        String::from("procedure,t_cutoff,delta,p0,actual,actual_se,est,est_se,win,cells_used\n");
    for row in &report.rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            row.procedure,
            fmt_opt(row.t_cutoff),
            fmt_opt(row.delta),
            fmt_opt(row.p0),
            fmt_opt(row.actual),
            fmt_opt(row.actual_se),
            fmt_opt(row.est),
            fmt_opt(row.est_se),
            fmt_opt_bool(row.win),
            row.cells_used
        );
    }
    std::fs::write(&csv_path, text).map_err(|e| write_err(&csv_path, e))?;
    Ok(vec![json_path, csv_path])
}

/// Outcome of a Frac run: the widest jointly-significant top fraction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FracOutcome {
    pub level: f64,
    pub upper_bound: f64,
    pub frac: f64,
}

/// Emits a Frac outcome as JSON.
pub fn emit_frac(outcome: &FracOutcome, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let path = out_dir.join("frac.json");
    write_json(outcome, &path)?;
    Ok(vec![path])
}

/// One input file's identity inside the provenance manifest.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestInput {
    pub name: String,
    pub path: String,
    pub fingerprint: String,
}

/// Provenance manifest written by every CLI run: configuration hash, seed,
/// input fingerprints, and versions.  Deliberately timestamp-free so equal
/// runs produce equal bytes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config_sha256: String,
    pub inputs: Vec<ManifestInput>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, threads: Option<usize>, config_text: &str) -> Self {
        let mut h = Sha256::new();
        h.update(config_text.as_bytes());
        let digest = h.finalize();
        let mut config_sha256 = String::with_capacity(64);
        for byte in digest {
            let _ = write!(config_sha256, "{byte:02x}");
        }
        Self {
            schema_version: 1,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            threads,
            config_sha256,
            inputs: Vec::new(),
        }
    }

    pub fn with_input(mut self, name: &str, path: &Path, fingerprint: String) -> Self {
        self.inputs.push(ManifestInput {
            name: name.into(),
            path: path.display().to_string(),
            fingerprint,
        });
        self
    }
}

/// Writes `manifest.json` into the output directory.
pub fn write_manifest(manifest: &Manifest, out_dir: &Path) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let path = out_dir.join("manifest.json");
    write_json(manifest, &path)?;
    Ok(path)
}

/// Reads a JSONL checkpoint; a missing file is an empty (fresh) checkpoint.
pub fn read_checkpoint(path: &Path) -> Result<Vec<CellRecord>, IoError> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(read_err(path, e)),
    };
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (li, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| read_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CellRecord = serde_json::from_str(&line).map_err(|e| IoError::Checkpoint {
            path: path.display().to_string(),
            line: li + 1,
            detail: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Appends simulation-study cell records to a JSONL checkpoint, flushing
/// after every record so an interrupted run loses at most the cell in
/// flight.
pub struct CheckpointWriter {
    file: std::fs::File,
    path: PathBuf,
}

impl CheckpointWriter {
    pub fn open(path: &Path) -> Result<Self, IoError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| write_err(parent, e))?;
            }
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| write_err(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &CellRecord) -> Result<(), IoError> {
        let mut line = serde_json::to_vec(record).map_err(|e| IoError::Serialize {
            detail: e.to_string(),
        })?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|e| write_err(&self.path, e))
    }
}
