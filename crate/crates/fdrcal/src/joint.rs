//! The Fama–French (2010) joint test of zero alpha across all funds, plus
//! its error-rate calibration and the Frac diagnostic.
//!
//! The joint test asks one question of the whole cross-section: is there
//! *any* outperformance?  It compares percentile statistics of the alpha
//! t-statistic cross-section (the maximum, the 99.9th percentile, …)
//! against their distribution under a bootstrapped zero-alpha null:
//!
//! 1. Estimate each fund's alpha and subtract it, producing the pseudo
//!    panel `Y₀` with exactly zero in-sample alphas.
//! 2. Resample rows of `Y₀` (the same rows across funds, factors moving in
//!    lockstep) `B` times; per draw compute the cross-section of alpha
//!    t-statistics and its percentile statistics.
//! 3. The p-value of a statistic is `(1 + #{draws ≥ observed}) / (B + 1)`
//!    — a right-tail comparison, floored at `1/(B+1)` so no p-value is
//!    ever exactly zero.
//!
//! The minimum-observation rule applies in the actual *and* the
//! bootstrapped samples: a fund with enough history overall can still drop
//! out of a draw that under-samples its observed rows.
//!
//! [`ff_error_rates`] wraps the test in the double-bootstrap harness: at
//! `p0 = 0` it perturbs `Y₀` `M` times and reports how often the test
//! falsely rejects (`TYPE1_ff`); at `p0 > 0` it injects the top-`p0`
//! ranked alphas and reports how often the test misses them (`TYPE2_ff`).
//! [`frac_statistic`] pushes the test down the percentile ladder to find
//! the widest fraction of top percentiles that are all jointly significant
//! — a diagnostic that *overstates* the true outperforming fraction, which
//! is exactly the bias it exists to demonstrate.

use crate::inject::{build_alternative_panel, build_null_panel, InjectError, InjectionConfig};
use crate::panel::{
    period_cmp, ColumnStore, DrawDesign, EffectKind, FactorPanel, FactorStore, PanelError,
    ReturnPanel, Sidedness,
};
use crate::resample::{
    apply_draw_factors, child_seed, draw_indices, BootstrapPlan, ResampleError, Stage,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum JointError {
    #[error("percentile must lie in (0, 100], got {q}")]
    InvalidPercentile { q: f64 },
    #[error("invalid joint-test config: {detail}")]
    InvalidConfig { detail: String },
    #[error("significance level must lie in (0, 1], got {level}")]
    InvalidLevel { level: f64 },
    #[error("cross-section is empty (no defined t-statistics)")]
    EmptyCrossSection,
    #[error("no funds survive the {min_obs_t}-observation filter")]
    AllFundsFiltered { min_obs_t: usize },
    #[error("unknown statistic label {label:?} (expected \"max\" or a percentile like \"p99.5\")")]
    UnknownStat { label: String },
    #[error("subsample window {start}..{end} selects no periods")]
    EmptyWindow { start: String, end: String },
    #[error("subsample windows overlap at period {period}")]
    OverlappingWindows { period: String },
    #[error(transparent)]
    Inject(#[from] InjectError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// A cross-sectional statistic of the t-statistic distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointStat {
    /// The largest t-statistic.
    Max,
    /// The order statistic at rank `ceil(q/100 · n)` (so `q = 100` is the
    /// maximum).  The ceiling-rank convention is pinned here: percentile
    /// definitions differ across software and the choice changes which
    /// fund's t-statistic is compared.
    Percentile(f64),
}

impl JointStat {
    pub fn label(&self) -> String {
        match self {
            JointStat::Max => "max".into(),
            JointStat::Percentile(q) => format!("p{q}"),
        }
    }

    /// Parses `"max"`, `"p99.5"`, or a bare number like `"99.5"`.
    pub fn parse(label: &str) -> Result<Self, JointError> {
        let trimmed = label.trim();
        if trimmed.eq_ignore_ascii_case("max") {
            return Ok(JointStat::Max);
        }
        let digits = trimmed.strip_prefix(['p', 'P']).unwrap_or(trimmed);
        let q: f64 = digits.parse().map_err(|_| JointError::UnknownStat {
            label: label.to_string(),
        })?;
        if !(q > 0.0 && q <= 100.0) {
            return Err(JointError::InvalidPercentile { q });
        }
        Ok(JointStat::Percentile(q))
    }
}

impl Serialize for JointStat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for JointStat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let label = String::deserialize(d)?;
        JointStat::parse(&label).map_err(serde::de::Error::custom)
    }
}

/// The seven statistics of the reference tables: the maximum plus six
/// upper percentiles.
pub fn default_statistics() -> Vec<JointStat> {
    vec![
        JointStat::Max,
        JointStat::Percentile(99.9),
        JointStat::Percentile(99.5),
        JointStat::Percentile(99.0),
        JointStat::Percentile(98.0),
        JointStat::Percentile(95.0),
        JointStat::Percentile(90.0),
    ]
}

/// Configuration of one joint test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTestConfig {
    pub statistics: Vec<JointStat>,
    /// Bootstrap draws for the null distribution.
    pub b: usize,
    /// Minimum observations per fund, enforced in the actual sample and in
    /// every bootstrap draw.
    pub min_obs_t: usize,
    /// Significance levels for the error-rate harness.
    pub alpha_levels: Vec<f64>,
    /// Sidedness of the Type II injection (the test itself is right-tail).
    pub sidedness: Sidedness,
}

impl Default for JointTestConfig {
    fn default() -> Self {
        Self {
            statistics: default_statistics(),
            b: 1000,
            min_obs_t: 8,
            alpha_levels: vec![0.05],
            sidedness: Sidedness::OneSidedRight,
        }
    }
}

impl JointTestConfig {
    pub fn validate(&self) -> Result<(), JointError> {
        if self.statistics.is_empty() {
            return Err(JointError::InvalidConfig {
                detail: "statistics list is empty".into(),
            });
        }
        for stat in &self.statistics {
            if let JointStat::Percentile(q) = stat {
                if !(*q > 0.0 && *q <= 100.0) {
                    return Err(JointError::InvalidPercentile { q: *q });
                }
            }
        }
        if self.b == 0 {
            return Err(JointError::InvalidConfig {
                detail: "bootstrap count b must be at least 1".into(),
            });
        }
        if self.min_obs_t < 2 {
            return Err(JointError::InvalidConfig {
                detail: format!("min_obs_t must be at least 2, got {}", self.min_obs_t),
            });
        }
        for &level in &self.alpha_levels {
            if !(level > 0.0 && level <= 1.0) {
                return Err(JointError::InvalidLevel { level });
            }
        }
        Ok(())
    }
}

/// The order statistic of `tvec` selected by `spec` (non-finite entries are
/// ignored).  Uses the ceiling-rank convention documented on [`JointStat`].
pub fn percentile_stat(tvec: &[f64], spec: JointStat) -> Result<f64, JointError> {
    let mut v: Vec<f64> = tvec.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(JointError::EmptyCrossSection);
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    match spec {
        JointStat::Max => Ok(*v.last().expect("nonempty")),
        JointStat::Percentile(q) => {
            if !(q > 0.0 && q <= 100.0) {
                return Err(JointError::InvalidPercentile { q });
            }
            let n = v.len();
            let rank = (q / 100.0 * n as f64).ceil() as usize;
            Ok(v[rank.clamp(1, n) - 1])
        }
    }
}

/// One statistic's observed value and bootstrap p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatOutcome {
    pub stat: JointStat,
    pub observed: f64,
    /// `(1 + #{bootstrap ≥ observed}) / (b_used + 1)`, in `[1/(B+1), 1]`.
    pub p_value: f64,
    /// Draws that produced a non-empty cross-section.
    pub b_used: usize,
}

/// The joint test's full outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTestResult {
    pub stats: Vec<StatOutcome>,
    /// Funds surviving the actual-sample observation filter.
    pub fund_count: usize,
    /// Funds contributing a defined t-statistic to the observed
    /// cross-section.
    pub observed_cross_section: usize,
    pub b: usize,
}

impl JointTestResult {
    pub fn outcome(&self, stat: JointStat) -> Option<&StatOutcome> {
        self.stats.iter().find(|s| s.stat == stat)
    }
}

/// Observed (or per-draw) cross-section of alpha t-statistics; columns
/// whose regressions fail or need more observations drop out silently —
/// identical semantics to the calibration decision paths.
fn cross_section_t(
    store: &ColumnStore,
    design: &DrawDesign<'_>,
    idx: &[u32],
    min_obs_t: usize,
    scratch: &mut Vec<f64>,
) -> Vec<f64> {
    let mut t = Vec::with_capacity(store.n_strategies());
    for j in 0..store.n_strategies() {
        if let Ok((_, tv)) = crate::panel::effect_t_under_draw(
            store,
            Some(design),
            j,
            idx,
            EffectKind::FactorAlpha,
            min_obs_t,
            scratch,
        ) {
            t.push(tv);
        }
    }
    t
}

/// Runs the Fama–French joint test (see module docs).  `seed` keys the `B`
/// null bootstrap draws; identical inputs and seed reproduce every p-value
/// exactly.
pub fn ff_joint_test(
    panel: &ReturnPanel,
    factors: &FactorPanel,
    cfg: &JointTestConfig,
    seed: u64,
) -> Result<JointTestResult, JointError> {
    cfg.validate()?;
    factors.check_aligned(panel)?;
    let (filtered, _dropped) =
        panel
            .filter_min_obs(cfg.min_obs_t)
            .map_err(|_| JointError::AllFundsFiltered {
                min_obs_t: cfg.min_obs_t,
            })?;
    let fund_count = filtered.n_strategies();
    let d = filtered.n_periods();

    // Observed cross-section on the identity draw.
    let store = ColumnStore::from_panel(&filtered);
    let fstore = FactorStore::from_panel(factors);
    let identity: Vec<u32> = (0..d as u32).collect();
    let mut scratch = Vec::with_capacity(d);
    let design = DrawDesign::new(&fstore, &identity).map_err(|e| JointError::InvalidConfig {
        detail: format!("factor design is degenerate on the observed sample: {e}"),
    })?;
    let observed_t = cross_section_t(&store, &design, &identity, cfg.min_obs_t, &mut scratch);
    if observed_t.is_empty() {
        return Err(JointError::EmptyCrossSection);
    }
    let observed: Vec<f64> = cfg
        .statistics
        .iter()
        .map(|&s| percentile_stat(&observed_t, s))
        .collect::<Result<_, _>>()?;

    // Zero-alpha pseudo panel and its bootstrap distribution.
    let null = build_null_panel(
        &filtered,
        Some(factors),
        EffectKind::FactorAlpha,
        cfg.min_obs_t,
    )?;
    let null_store = ColumnStore::from_panel(&null.panel);
    let null_fstore = FactorStore::from_panel(null.factors.as_ref().expect("factor mode"));
    let plan = BootstrapPlan::new(seed, cfg.b, 1, d);
    // exceed[s] = draws whose statistic s reached the observed value.
    let per_draw: Vec<Option<Vec<bool>>> = (0..cfg.b as u64)
        .into_par_iter()
        .map(|bi| {
            let draw = draw_indices(&plan, Stage::JointNull, bi, 0);
            let idx = draw.indices();
            let design = DrawDesign::new(&null_fstore, idx).ok()?;
            let mut scratch = Vec::with_capacity(d);
            let t = cross_section_t(&null_store, &design, idx, cfg.min_obs_t, &mut scratch);
            if t.is_empty() {
                return None;
            }
            Some(
                cfg.statistics
                    .iter()
                    .zip(&observed)
                    .map(|(&s, &obs)| percentile_stat(&t, s).map(|v| v >= obs).unwrap_or(false))
                    .collect(),
            )
        })
        .collect();

    let mut b_used = 0usize;
    let mut exceed = vec![0usize; cfg.statistics.len()];
    for row in per_draw.iter().flatten() {
        b_used += 1;
        for (count, &hit) in exceed.iter_mut().zip(row) {
            if hit {
                *count += 1;
            }
        }
    }
    if b_used == 0 {
        return Err(JointError::EmptyCrossSection);
    }
    let stats = cfg
        .statistics
        .iter()
        .zip(&observed)
        .zip(&exceed)
        .map(|((&stat, &obs), &count)| StatOutcome {
            stat,
            observed: obs,
            p_value: (1 + count) as f64 / (b_used + 1) as f64,
            b_used,
        })
        .collect();
    Ok(JointTestResult {
        stats,
        fund_count,
        observed_cross_section: observed_t.len(),
        b: cfg.b,
    })
}

/// Rejection/miss tallies for one statistic at one significance level.
/// Rates are exposed as exact counts so the `h`/`l` accounting identity
/// (`rejections + non-rejections = M`) holds without rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTally {
    pub level: f64,
    pub rejections: usize,
    pub perturbations: usize,
}

impl LevelTally {
    /// `TYPE1_ff` when the truth was null, the rejection rate otherwise.
    pub fn rejection_rate(&self) -> f64 {
        self.rejections as f64 / self.perturbations as f64
    }

    /// `TYPE2_ff` when effects were injected.
    pub fn miss_rate(&self) -> f64 {
        (self.perturbations - self.rejections) as f64 / self.perturbations as f64
    }
}

/// Error rates of the joint test per statistic and level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointErrorRates {
    pub p0: f64,
    /// Perturbations that produced a usable test.
    pub m_used: usize,
    pub m_requested: usize,
    /// Outer-indexed `[statistic][level]` tallies.
    pub tallies: Vec<Vec<LevelTally>>,
    pub statistics: Vec<JointStat>,
}

impl JointErrorRates {
    pub fn tally(&self, stat: JointStat, level: f64) -> Option<&LevelTally> {
        let si = self.statistics.iter().position(|&s| s == stat)?;
        self.tallies[si].iter().find(|t| t.level == level)
    }
}

/// Calibrates the joint test's error rates by the §-style double loop:
/// at `p0 = 0`, perturb the zero-alpha panel `M` times and count false
/// rejections per level (`TYPE1_ff = mean hᵢ`); at `p0 > 0`, build `M`
/// injected panels (each ranked on its own perturbation draw) and count
/// misses (`TYPE2_ff = mean lᵢ`).  Perturbations that fail to produce a
/// test (e.g. every fund filtered in a draw) are dropped and reported via
/// `m_used`.
pub fn ff_error_rates(
    panel: &ReturnPanel,
    factors: &FactorPanel,
    p0: f64,
    m: usize,
    cfg: &JointTestConfig,
    seed: u64,
) -> Result<JointErrorRates, JointError> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&p0) {
        return Err(JointError::InvalidConfig {
            detail: format!("p0 must lie in [0, 1], got {p0}"),
        });
    }
    if m == 0 {
        return Err(JointError::InvalidConfig {
            detail: "perturbation count m must be at least 1".into(),
        });
    }
    factors.check_aligned(panel)?;
    let d = panel.n_periods();
    let plan = BootstrapPlan::new(seed, m, 1, d);
    let null = if p0 == 0.0 {
        Some(build_null_panel(
            panel,
            Some(factors),
            EffectKind::FactorAlpha,
            cfg.min_obs_t,
        )?)
    } else {
        None
    };

    let results: Vec<Option<JointTestResult>> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let test_seed = child_seed(seed, Stage::Perturb, i, 1);
            if let Some(null) = &null {
                // Type I branch: a row bootstrap of Y₀ (factors in
                // lockstep) is the perturbed panel the test sees.
                let draw = draw_indices(&plan, Stage::Perturb, i, 0);
                let perturbed = crate::resample::apply_draw(&null.panel, &draw).ok()?;
                let pfactors =
                    apply_draw_factors(null.factors.as_ref().expect("factor mode"), &draw).ok()?;
                ff_joint_test(&perturbed, &pfactors, cfg, test_seed).ok()
            } else {
                // Type II branch: injection ranked on this perturbation's
                // draw; the test then sees the injected panel as data.
                let draw = draw_indices(&plan, Stage::Perturb, i, 0);
                let inject_cfg = InjectionConfig {
                    p0,
                    kind: EffectKind::FactorAlpha,
                    sidedness: cfg.sidedness,
                    min_obs: cfg.min_obs_t,
                };
                let labeled =
                    build_alternative_panel(panel, Some(factors), &inject_cfg, &draw).ok()?;
                let lf = labeled.factors.as_ref().expect("factor mode");
                ff_joint_test(&labeled.panel, lf, cfg, test_seed).ok()
            }
        })
        .collect();

    let mut m_used = 0usize;
    let mut tallies: Vec<Vec<LevelTally>> = cfg
        .statistics
        .iter()
        .map(|_| {
            cfg.alpha_levels
                .iter()
                .map(|&level| LevelTally {
                    level,
                    rejections: 0,
                    perturbations: 0,
                })
                .collect()
        })
        .collect();
    for result in results.iter().flatten() {
        m_used += 1;
        for (si, stat_tallies) in tallies.iter_mut().enumerate() {
            let p = result.stats[si].p_value;
            for tally in stat_tallies.iter_mut() {
                tally.perturbations += 1;
                if p <= tally.level {
                    tally.rejections += 1;
                }
            }
        }
    }
    if m_used == 0 {
        return Err(JointError::EmptyCrossSection);
    }
    Ok(JointErrorRates {
        p0,
        m_used,
        m_requested: m,
        tallies,
        statistics: cfg.statistics.clone(),
    })
}

/// The Frac diagnostic: the widest top fraction `D` (on a 1% grid up to
/// `upper_bound`) such that **every** percentile above `100(1 − D)` is
/// jointly significant at `level`; 0 when even the top percentile fails.
/// All percentiles share one set of bootstrap draws.
pub fn frac_statistic(
    panel: &ReturnPanel,
    factors: &FactorPanel,
    cfg: &JointTestConfig,
    level: f64,
    upper_bound: f64,
    seed: u64,
) -> Result<f64, JointError> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(JointError::InvalidLevel { level });
    }
    if !(upper_bound > 0.0 && upper_bound <= 0.99) {
        return Err(JointError::InvalidConfig {
            detail: format!("upper_bound must lie in (0, 0.99], got {upper_bound}"),
        });
    }
    let steps = (upper_bound * 100.0).round() as usize;
    let mut ladder_cfg = cfg.clone();
    ladder_cfg.statistics = (1..=steps)
        .map(|d| JointStat::Percentile(100.0 - d as f64))
        .collect();
    let result = ff_joint_test(panel, factors, &ladder_cfg, seed)?;
    let mut frac = 0.0;
    for (d, outcome) in result.stats.iter().enumerate() {
        if outcome.p_value <= level {
            frac = (d + 1) as f64 / 100.0;
        } else {
            break;
        }
    }
    Ok(frac)
}

/// One subsample window, inclusive on both period labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleWindow {
    pub start: String,
    pub end: String,
}

/// The reference 1984–2016 split: five five-year windows plus one
/// eight-year window, on `YYYY-MM` labels.
pub fn default_subsample_windows() -> Vec<SubsampleWindow> {
    let mk = |s: &str, e: &str| SubsampleWindow {
        start: s.to_string(),
        end: e.to_string(),
    };
    vec![
        mk("1984-01", "1988-12"),
        mk("1989-01", "1993-12"),
        mk("1994-01", "1998-12"),
        mk("1999-01", "2003-12"),
        mk("2004-01", "2008-12"),
        mk("2009-01", "2016-12"),
    ]
}

/// Splits a panel into per-window panels.  Windows must not overlap and
/// must each select at least one period.  Funds with no observations in a
/// window are dropped from that window; with `require_complete`, funds
/// missing *any* period in the window are dropped (the complete-data
/// variant where each window demands `T = window length`).
pub fn subsample_split(
    panel: &ReturnPanel,
    windows: &[SubsampleWindow],
    require_complete: bool,
) -> Result<Vec<ReturnPanel>, JointError> {
    use std::cmp::Ordering;
    let periods = panel.periods();
    let mut row_sets: Vec<Vec<usize>> = Vec::with_capacity(windows.len());
    let mut claimed: Vec<Option<usize>> = vec![None; periods.len()];
    for (wi, w) in windows.iter().enumerate() {
        let rows: Vec<usize> = periods
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                period_cmp(p, &w.start) != Ordering::Less
                    && period_cmp(p, &w.end) != Ordering::Greater
            })
            .map(|(r, _)| r)
            .collect();
        if rows.is_empty() {
            return Err(JointError::EmptyWindow {
                start: w.start.clone(),
                end: w.end.clone(),
            });
        }
        for &r in &rows {
            if claimed[r].is_some() {
                return Err(JointError::OverlappingWindows {
                    period: periods[r].clone(),
                });
            }
            claimed[r] = Some(wi);
        }
        row_sets.push(rows);
    }

    let mut out = Vec::with_capacity(windows.len());
    for rows in &row_sets {
        let mask = panel.mask();
        let values = panel.values();
        let keep: Vec<bool> = (0..panel.n_strategies())
            .map(|j| {
                let obs = rows.iter().filter(|&&r| mask[(r, j)]).count();
                if require_complete {
                    obs == rows.len()
                } else {
                    obs > 0
                }
            })
            .collect();
        if !keep.iter().any(|&k| k) {
            return Err(JointError::AllFundsFiltered { min_obs_t: 1 });
        }
        let cols: Vec<usize> = (0..panel.n_strategies()).filter(|&j| keep[j]).collect();
        let sub_values = ndarray::Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| {
            values[(rows[r], cols[c])]
        });
        let sub_mask = ndarray::Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| {
            mask[(rows[r], cols[c])]
        });
        let sub_periods: Vec<String> = rows.iter().map(|&r| panel.periods()[r].clone()).collect();
        let sub_names: Vec<String> = cols.iter().map(|&c| panel.names()[c].clone()).collect();
        out.push(ReturnPanel::new(
            sub_values,
            sub_mask,
            sub_periods,
            sub_names,
        )?);
    }
    Ok(out)
}
