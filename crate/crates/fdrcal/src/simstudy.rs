//! Validation harness: does the double bootstrap estimate the error rates
//! a procedure actually incurs?
//!
//! The study manufactures populations where the truth is known: take a
//! base panel, demean every column, pick a random `true_fraction` of
//! columns, and shift each by a mean drawn from a Gamma distribution
//! (population `D_m`).  Each population is perturbed `K` times by a row
//! bootstrap (`D_{m,k}` — the "in-sample data" a researcher would see).
//! For every decision rule and level `δ`:
//!
//! * **Actual** is the realized false-discovery rate of the rule on
//!   `D_{m,k}`, computable because the truth labels are known.
//! * **Est** is the double-bootstrap `TYPE1` estimate on `D_{m,k}` *with
//!   the labels hidden* — the Est path receives only the panel, so the
//!   estimator cannot cheat by construction.
//!
//! Both are averaged over all `M·K` cells; a rule/p0 cell "wins" when
//! `|Est − Actual| < |δ − Actual|`, i.e. the calibrated estimate beats the
//! nominal level as a description of reality.
//!
//! This is the heaviest computation in the crate (`M·K` nested double
//! bootstraps), so it budget-guards up front and emits one checkpoint
//! record per `(m, k)` through a caller-supplied sink; a later run can
//! resume from those records and recompute only what is missing.

use crate::calibrate::{double_bootstrap, CalibrateError, CalibrationRequest, ProcedureSpec};
use crate::inject::{InjectError, TruthLabeledPanel};
use crate::panel::{mean_t_stat, ColumnStore, EffectKind, PanelError, ReturnPanel, Sidedness};
use crate::procedures::{
    bh, by, fixed_cutoff, p_from_t, rsw_subsets, storey, PValueSource, ProcedureError, RswConfig,
};
use crate::rates::{count_outcomes, realized_rates, RatesError};
use crate::resample::{
    apply_draw, child_seed, draw_indices, stream_rng, BootstrapPlan, ResampleError, Stage,
};
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimStudyError {
    #[error("invalid sim-study config: {detail}")]
    InvalidConfig { detail: String },
    #[error("invalid Gamma spec: {detail}")]
    InvalidGamma { detail: String },
    #[error(
        "study volume {units:.3e} draw-units (M*K*(I*J+1)) exceeds budget {max:.3e}; \
         raise max_budget_units explicitly to run at this scale"
    )]
    BudgetExceeded { units: f64, max: f64 },
    #[error("checkpoint records do not match this config: {detail}")]
    ResumeMismatch { detail: String },
    #[error(transparent)]
    Calibrate(#[from] CalibrateError),
    #[error(transparent)]
    Inject(#[from] InjectError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Procedure(#[from] ProcedureError),
    #[error(transparent)]
    Rates(#[from] RatesError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// Mean/standard-deviation parameterization of the Gamma distribution of true
/// mean returns: shape `k = μ0²/σ0²`, scale `θ = σ0²/μ0`.  `σ0 = 0`
/// degenerates to a point mass at `μ0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    pub mu0: f64,
    pub sigma0: f64,
}

impl GammaSpec {
    pub fn validate(&self) -> Result<(), SimStudyError> {
        if self.mu0 <= 0.0 || !self.mu0.is_finite() {
            return Err(SimStudyError::InvalidGamma {
                detail: format!("mu0 must be positive and finite, got {}", self.mu0),
            });
        }
        if self.sigma0 < 0.0 || !self.sigma0.is_finite() {
            return Err(SimStudyError::InvalidGamma {
                detail: format!(
                    "sigma0 must be non-negative and finite, got {}",
                    self.sigma0
                ),
            });
        }
        Ok(())
    }

    pub fn shape(&self) -> f64 {
        (self.mu0 / self.sigma0).powi(2)
    }

    pub fn scale(&self) -> f64 {
        self.sigma0 * self.sigma0 / self.mu0
    }
}

/// `n` i.i.d. draws from the spec (constants when `σ0 = 0`).
pub fn gamma_sample(
    spec: &GammaSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SimStudyError> {
    spec.validate()?;
    if spec.sigma0 == 0.0 {
        return Ok(vec![spec.mu0; n]);
    }
    let dist = rand_distr::Gamma::new(spec.shape(), spec.scale()).map_err(|e| {
        SimStudyError::InvalidGamma {
            detail: e.to_string(),
        }
    })?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Builds population `D_m`: demeans every base column (observed cells
/// only), then shifts a uniformly random `true_fraction` of columns by
/// Gamma-drawn means.  Column selection and the Gamma draws are keyed by
/// `(master_seed, m)`, so a population is identical across all of its
/// perturbations and across runs.
pub fn build_population(
    base: &ReturnPanel,
    true_fraction: f64,
    gamma: &GammaSpec,
    master_seed: u64,
    m: u64,
) -> Result<TruthLabeledPanel, SimStudyError> {
    if !(0.0..1.0).contains(&true_fraction) {
        return Err(SimStudyError::InvalidConfig {
            detail: format!("true_fraction must lie in [0, 1), got {true_fraction}"),
        });
    }
    gamma.validate()?;
    let n = base.n_strategies();
    let d = base.n_periods();
    let n_true = crate::inject::n_true_for_fraction(true_fraction, n);

    let mut selection_rng = stream_rng(master_seed, Stage::Population, m, 0);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..n_true {
        let pick = selection_rng.random_range(i..n);
        pool.swap(i, pick);
    }
    let mut chosen: Vec<usize> = pool[..n_true].to_vec();
    chosen.sort_unstable();

    let mut gamma_rng = stream_rng(master_seed, Stage::Population, m, 1);
    let means = gamma_sample(gamma, n_true, &mut gamma_rng)?;

    let mut truth = vec![false; n];
    let mut injected_effect = vec![0.0; n];
    for (&col, &mu) in chosen.iter().zip(&means) {
        truth[col] = true;
        injected_effect[col] = mu;
    }

    // Demean observed cells, then shift the chosen columns.
    let mut values = base.values().clone();
    let mask = base.mask().clone();
    for j in 0..n {
        let obs: Vec<usize> = (0..d).filter(|&r| mask[(r, j)]).collect();
        let mean: f64 = obs.iter().map(|&r| values[(r, j)]).sum::<f64>() / obs.len() as f64;
        let shift = injected_effect[j] - mean;
        for &r in &obs {
            values[(r, j)] += shift;
        }
    }
    let panel = ReturnPanel::new(values, mask, base.periods().to_vec(), base.names().to_vec())?;

    // Diagnostic: the in-sample t-statistic each true column carries.
    let mut injected_t = vec![0.0; n];
    for &col in &chosen {
        let sample: Vec<f64> = (0..d)
            .filter(|&r| panel.mask()[(r, col)])
            .map(|r| panel.values()[(r, col)])
            .collect();
        injected_t[col] = mean_t_stat(&sample, 2)
            .map(|s| s.t_stat)
            .unwrap_or(f64::NAN);
    }

    Ok(TruthLabeledPanel {
        panel,
        factors: None,
        truth,
        injected_effect,
        injected_t,
        kind: EffectKind::RawMean,
    })
}

/// Full study configuration.  `delta_grid` holds the nominal levels `δ`
/// for the p-value procedures; `cutoffs` adds fixed t-cutoff rules
/// (level-free).  `est_outer`/`est_inner` size the nested double bootstrap
/// behind every Est value.
#[derive(Debug, Clone)]
pub struct SimStudyConfig<'a> {
    pub base_panel: &'a ReturnPanel,
    pub true_fraction: f64,
    pub gamma: GammaSpec,
    pub m: usize,
    pub k: usize,
    pub procedures: Vec<ProcedureSpec>,
    pub cutoffs: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub p0_grid: Vec<f64>,
    pub est_outer: usize,
    pub est_inner: usize,
    pub sidedness: Sidedness,
    pub min_obs: usize,
    pub p_values: PValueSource,
    pub seed: u64,
    /// Guard on `M·K·(I·J + 1)`; raise deliberately for large studies.
    pub max_budget_units: f64,
}

impl<'a> SimStudyConfig<'a> {
    /// Defaults mirroring the reference tables at desk scale: 10% true
    /// strategies, Gamma(5%, 2.5%) annualized-style means, BH under
    /// one-sided normal p-values.
    pub fn new(base_panel: &'a ReturnPanel, seed: u64) -> Self {
        Self {
            base_panel,
            true_fraction: 0.10,
            gamma: GammaSpec {
                mu0: 0.05,
                sigma0: 0.025,
            },
            m: 50,
            k: 20,
            procedures: vec![ProcedureSpec::Bh],
            cutoffs: Vec::new(),
            delta_grid: vec![0.01, 0.05, 0.10],
            p0_grid: vec![0.05, 0.10, 0.15],
            est_outer: 10,
            est_inner: 100,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 8,
            p_values: PValueSource::OneSidedNormal,
            seed,
            max_budget_units: 1e8,
        }
    }

    fn validate(&self) -> Result<(), SimStudyError> {
        if self.m == 0 || self.k == 0 {
            return Err(SimStudyError::InvalidConfig {
                detail: "M and K must both be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.true_fraction) {
            return Err(SimStudyError::InvalidConfig {
                detail: format!(
                    "true_fraction must lie in [0, 1), got {}",
                    self.true_fraction
                ),
            });
        }
        self.gamma.validate()?;
        if self.procedures.is_empty() && self.cutoffs.is_empty() {
            return Err(SimStudyError::InvalidConfig {
                detail: "no decision rules (procedures and cutoffs both empty)".into(),
            });
        }
        if self.est_outer == 0 || self.est_inner == 0 {
            return Err(SimStudyError::InvalidConfig {
                detail: "est_outer and est_inner must both be at least 1".into(),
            });
        }
        let units =
            self.m as f64 * self.k as f64 * (self.est_outer as f64 * self.est_inner as f64 + 1.0);
        if units > self.max_budget_units {
            return Err(SimStudyError::BudgetExceeded {
                units,
                max: self.max_budget_units,
            });
        }
        Ok(())
    }
}

/// One rule×p0 Est slot within a cell record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstSlot {
    pub p0: f64,
    /// `None` marks an isolated estimation failure for this cell.
    pub fdr_est: Option<f64>,
}

/// One rule's outcomes on one `D_{m,k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub procedure: String,
    pub t_cutoff: Option<f64>,
    pub delta: Option<f64>,
    pub fdr_actual: Option<f64>,
    pub est: Vec<EstSlot>,
}

/// Checkpoint unit: everything computed for one `(m, k)` perturbation.
/// Serialized one-per-line (JSONL) by the caller's sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub m: usize,
    pub k: usize,
    pub entries: Vec<CellEntry>,
}

/// Aggregated study row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub procedure: String,
    pub t_cutoff: Option<f64>,
    pub delta: Option<f64>,
    pub p0: Option<f64>,
    /// Mean realized FDR over all `M·K` cells (truth known).
    pub actual: Option<f64>,
    pub actual_se: Option<f64>,
    /// Mean double-bootstrap estimate over the same cells (truth hidden).
    pub est: Option<f64>,
    pub est_se: Option<f64>,
    /// `|Est − Actual| < |δ − Actual|`; `None` for level-free rules.
    pub win: Option<bool>,
    pub cells_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudyMeta {
    pub seed: u64,
    pub m: usize,
    pub k: usize,
    pub true_fraction: f64,
    pub gamma: GammaSpec,
    pub delta_grid: Vec<f64>,
    pub p0_grid: Vec<f64>,
    pub cutoffs: Vec<f64>,
    pub procedures: Vec<ProcedureSpec>,
    pub est_outer: usize,
    pub est_inner: usize,
    pub n_periods: usize,
    pub n_strategies: usize,
    pub base_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudyReport {
    pub meta: SimStudyMeta,
    pub rows: Vec<SimRow>,
}

/// Internal rule table: fixed cutoffs first, then procedures × deltas —
/// the same enumeration order the nested calibration uses.
#[derive(Debug, Clone)]
enum SimRule {
    Fixed { t_cut: f64 },
    Proc { spec: ProcedureSpec, delta: f64 },
}

fn enumerate_rules(cfg: &SimStudyConfig<'_>) -> Vec<SimRule> {
    let mut rules = Vec::new();
    for &t_cut in &cfg.cutoffs {
        rules.push(SimRule::Fixed { t_cut });
    }
    for spec in &cfg.procedures {
        for &delta in &cfg.delta_grid {
            rules.push(SimRule::Proc {
                spec: spec.clone(),
                delta,
            });
        }
    }
    rules
}

/// Realized FDR of each rule on the materialized `D_{m,k}` (truth known).
fn actual_fdrs(
    cfg: &SimStudyConfig<'_>,
    rules: &[SimRule],
    d_mk: &ReturnPanel,
    truth: &[bool],
    m: u64,
    k: u64,
) -> Vec<Option<f64>> {
    let store = ColumnStore::from_panel(d_mk);
    let d = d_mk.n_periods();
    let identity: Vec<u32> = (0..d as u32).collect();
    let mut scratch = Vec::with_capacity(d);
    let n = d_mk.n_strategies();
    let mut t = vec![f64::NAN; n];
    for (j, tj) in t.iter_mut().enumerate() {
        if let Ok((_, tv)) = crate::panel::effect_t_under_draw(
            &store,
            None,
            j,
            &identity,
            EffectKind::RawMean,
            cfg.min_obs,
            &mut scratch,
        ) {
            *tj = tv;
        }
    }
    let student_t = matches!(
        cfg.p_values,
        PValueSource::OneSidedStudentT | PValueSource::TwoSidedStudentT
    );
    let dfs: Option<Vec<usize>> = student_t.then(|| {
        (0..n)
            .map(|j| d_mk.observed_count(j).saturating_sub(1).max(1))
            .collect()
    });
    let pv = p_from_t(&t, dfs.as_deref(), cfg.p_values).ok();

    // Each rule yields either a whole-panel decision vector or (for the
    // subset-averaged RSW variant) an already-aggregated FDR.
    enum Outcome {
        Decisions(Vec<bool>),
        Rfdr(f64),
    }

    rules
        .iter()
        .map(|rule| {
            let outcome = match rule {
                SimRule::Fixed { t_cut } => Some(Outcome::Decisions(
                    fixed_cutoff(&t, *t_cut, cfg.sidedness).reject,
                )),
                SimRule::Proc { spec, delta } => match spec {
                    ProcedureSpec::Bh => pv
                        .as_ref()
                        .and_then(|v| bh(v, *delta).ok())
                        .map(|s| Outcome::Decisions(s.reject)),
                    ProcedureSpec::By => pv
                        .as_ref()
                        .and_then(|v| by(v, *delta).ok())
                        .map(|s| Outcome::Decisions(s.reject)),
                    ProcedureSpec::Storey { theta } => pv
                        .as_ref()
                        .and_then(|v| storey(v, *delta, *theta).ok())
                        .map(|s| Outcome::Decisions(s.reject)),
                    ProcedureSpec::Rsw {
                        b,
                        subsample_size,
                        subsample_count,
                    } => {
                        let rsw_cfg = RswConfig {
                            b: *b,
                            sidedness: cfg.sidedness,
                            min_obs: cfg.min_obs,
                            subsample_size: *subsample_size,
                            subsample_count: *subsample_count,
                            ..RswConfig::default()
                        };
                        let seed = child_seed(cfg.seed, Stage::StepdownNull, m, k);
                        rsw_subsets(d_mk, None, EffectKind::RawMean, *delta, &rsw_cfg, seed)
                            .ok()
                            .and_then(|subs| {
                                // Average over subsets like the calibration.
                                let mut sum = 0.0;
                                for sub in &subs {
                                    let st: Vec<bool> =
                                        sub.columns.iter().map(|&c| truth[c]).collect();
                                    let counts = count_outcomes(&sub.set.reject, &st).ok()?;
                                    sum += realized_rates(&counts).rfdr;
                                }
                                Some(Outcome::Rfdr(sum / subs.len() as f64))
                            })
                    }
                },
            };
            match outcome {
                Some(Outcome::Decisions(dec)) => count_outcomes(&dec, truth)
                    .ok()
                    .map(|c| realized_rates(&c).rfdr),
                Some(Outcome::Rfdr(v)) => Some(v),
                None => None,
            }
        })
        .collect()
}

/// Runs (or resumes) the study.  `resume` supplies checkpoint records from
/// an earlier run: matching `(m, k)` cells are reused, everything else is
/// recomputed.  Every freshly computed record is passed to `sink` in
/// lexical `(m, k)` order — callers append them to a JSONL checkpoint.
pub fn run_sim_study(
    cfg: &SimStudyConfig<'_>,
    resume: &[CellRecord],
    sink: &mut dyn FnMut(&CellRecord),
) -> Result<SimStudyReport, SimStudyError> {
    cfg.validate()?;
    let rules = enumerate_rules(cfg);
    let expected = expected_entry_shapes(cfg, &rules);
    let mut have: std::collections::BTreeMap<(usize, usize), &CellRecord> =
        std::collections::BTreeMap::new();
    for rec in resume {
        if rec.m >= cfg.m || rec.k >= cfg.k {
            return Err(SimStudyError::ResumeMismatch {
                detail: format!(
                    "record ({}, {}) outside the {}x{} study",
                    rec.m, rec.k, cfg.m, cfg.k
                ),
            });
        }
        validate_record_shape(rec, &expected)?;
        have.insert((rec.m, rec.k), rec);
    }

    let missing: Vec<(usize, usize)> = (0..cfg.m)
        .flat_map(|m| (0..cfg.k).map(move |k| (m, k)))
        .filter(|key| !have.contains_key(key))
        .collect();

    // Parallel over missing cells, grouped by m so each population is
    // built once per worker item.
    let mut by_m: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for &(m, k) in &missing {
        by_m.entry(m).or_default().push(k);
    }
    let jobs: Vec<(usize, Vec<usize>)> = by_m.into_iter().collect();
    let fresh: Vec<Result<Vec<CellRecord>, SimStudyError>> = jobs
        .par_iter()
        .map(|(m, ks)| {
            let population = build_population(
                cfg.base_panel,
                cfg.true_fraction,
                &cfg.gamma,
                cfg.seed,
                *m as u64,
            )?;
            let d = population.panel.n_periods();
            let perturb_plan = BootstrapPlan::new(cfg.seed, cfg.m, cfg.k, d);
            let mut records = Vec::with_capacity(ks.len());
            for &k in ks {
                let draw = draw_indices(&perturb_plan, Stage::Perturb, *m as u64, k as u64);
                let d_mk = apply_draw(&population.panel, &draw)?;
                let actual =
                    actual_fdrs(cfg, &rules, &d_mk, &population.truth, *m as u64, k as u64);

                // Est: nested double bootstrap, panel only (no labels).
                let est_seed = child_seed(cfg.seed, Stage::Perturb, *m as u64, k as u64);
                let mut req = CalibrationRequest::new(
                    &d_mk,
                    BootstrapPlan::new(est_seed, cfg.est_outer, cfg.est_inner, d),
                );
                req.p0_grid = cfg.p0_grid.clone();
                req.alpha_grid = cfg.delta_grid.clone();
                req.cutoff_grid = cfg.cutoffs.clone();
                req.procedures = cfg.procedures.clone();
                req.sidedness = cfg.sidedness;
                req.min_obs = cfg.min_obs;
                req.p_values = cfg.p_values;
                let report = double_bootstrap(&req)?;

                let entries: Vec<CellEntry> = rules
                    .iter()
                    .zip(&actual)
                    .map(|(rule, &fdr_actual)| {
                        let (procedure, t_cutoff, delta) = rule_labels(rule);
                        let est = cfg
                            .p0_grid
                            .iter()
                            .map(|&p0| {
                                let cell = match rule {
                                    SimRule::Fixed { t_cut } => report.fixed_cell(p0, *t_cut),
                                    SimRule::Proc { spec, delta } => {
                                        report.cell(p0, &spec.label(), Some(*delta))
                                    }
                                };
                                EstSlot {
                                    p0,
                                    fdr_est: cell.and_then(|c| c.type1),
                                }
                            })
                            .collect();
                        CellEntry {
                            procedure,
                            t_cutoff,
                            delta,
                            fdr_actual,
                            est,
                        }
                    })
                    .collect();
                records.push(CellRecord { m: *m, k, entries });
            }
            Ok(records)
        })
        .collect();

    let mut fresh_records = Vec::new();
    for group in fresh {
        fresh_records.extend(group?);
    }
    fresh_records.sort_by_key(|r| (r.m, r.k));
    for rec in &fresh_records {
        sink(rec);
    }

    // Merge and aggregate in lexical (m, k) order.
    let mut all: Vec<&CellRecord> = have.values().copied().chain(fresh_records.iter()).collect();
    all.sort_by_key(|r| (r.m, r.k));

    let mut rows = Vec::new();
    for (ri, rule) in rules.iter().enumerate() {
        let (procedure, t_cutoff, delta) = rule_labels(rule);
        for (pi, &p0) in cfg.p0_grid.iter().enumerate() {
            let mut pairs: Vec<(usize, f64, f64)> = Vec::new(); // (m, actual, est)
            for rec in &all {
                let entry = &rec.entries[ri];
                if let (Some(a), Some(e)) = (entry.fdr_actual, entry.est[pi].fdr_est) {
                    pairs.push((rec.m, a, e));
                }
            }
            let cells_used = pairs.len();
            let (actual, actual_se) = mean_and_se_by_m(&pairs, |p| p.1);
            let (est, est_se) = mean_and_se_by_m(&pairs, |p| p.2);
            let win = match (rule, actual, est) {
                (SimRule::Proc { delta, .. }, Some(a), Some(e)) => {
                    Some((e - a).abs() < (delta - a).abs())
                }
                _ => None,
            };
            rows.push(SimRow {
                procedure: procedure.clone(),
                t_cutoff,
                delta,
                p0: Some(p0),
                actual,
                actual_se,
                est,
                est_se,
                win,
                cells_used,
            });
        }
    }

    Ok(SimStudyReport {
        meta: SimStudyMeta {
            seed: cfg.seed,
            m: cfg.m,
            k: cfg.k,
            true_fraction: cfg.true_fraction,
            gamma: cfg.gamma,
            delta_grid: cfg.delta_grid.clone(),
            p0_grid: cfg.p0_grid.clone(),
            cutoffs: cfg.cutoffs.clone(),
            procedures: cfg.procedures.clone(),
            est_outer: cfg.est_outer,
            est_inner: cfg.est_inner,
            n_periods: cfg.base_panel.n_periods(),
            n_strategies: cfg.base_panel.n_strategies(),
            base_fingerprint: cfg.base_panel.fingerprint(),
        },
        rows,
    })
}

fn rule_labels(rule: &SimRule) -> (String, Option<f64>, Option<f64>) {
    match rule {
        SimRule::Fixed { t_cut } => ("fixed_cutoff".into(), Some(*t_cut), None),
        SimRule::Proc { spec, delta } => (spec.label(), None, Some(*delta)),
    }
}

/// Grand mean over cells plus a standard error from per-population means
/// (cells within one population share its truth draw and are correlated).
fn mean_and_se_by_m(
    pairs: &[(usize, f64, f64)],
    value: impl Fn(&(usize, f64, f64)) -> f64,
) -> (Option<f64>, Option<f64>) {
    if pairs.is_empty() {
        return (None, None);
    }
    let grand = pairs.iter().map(&value).sum::<f64>() / pairs.len() as f64;
    let mut per_m: std::collections::BTreeMap<usize, (f64, usize)> =
        std::collections::BTreeMap::new();
    for p in pairs {
        let e = per_m.entry(p.0).or_insert((0.0, 0));
        e.0 += value(p);
        e.1 += 1;
    }
    let means: Vec<f64> = per_m.values().map(|(s, c)| s / *c as f64).collect();
    let se = if means.len() >= 2 {
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let ss: f64 = means.iter().map(|v| (v - mean).powi(2)).sum();
        Some((ss / (n - 1.0)).sqrt() / n.sqrt())
    } else {
        None
    };
    (Some(grand), se)
}

/// `(procedure, t_cutoff, delta, p0s)` expected of one checkpoint entry.
type EntryShape = (String, Option<f64>, Option<f64>, Vec<f64>);

/// Expected entry shape per record, for resume validation.
fn expected_entry_shapes(cfg: &SimStudyConfig<'_>, rules: &[SimRule]) -> Vec<EntryShape> {
    rules
        .iter()
        .map(|rule| {
            let (procedure, t_cutoff, delta) = rule_labels(rule);
            (procedure, t_cutoff, delta, cfg.p0_grid.clone())
        })
        .collect()
}

fn validate_record_shape(rec: &CellRecord, expected: &[EntryShape]) -> Result<(), SimStudyError> {
    if rec.entries.len() != expected.len() {
        return Err(SimStudyError::ResumeMismatch {
            detail: format!(
                "record ({}, {}) has {} entries, config defines {}",
                rec.m,
                rec.k,
                rec.entries.len(),
                expected.len()
            ),
        });
    }
    for (entry, (procedure, t_cutoff, delta, p0s)) in rec.entries.iter().zip(expected) {
        let got_p0s: Vec<f64> = entry.est.iter().map(|s| s.p0).collect();
        if &entry.procedure != procedure
            || entry.t_cutoff != *t_cutoff
            || entry.delta != *delta
            || &got_p0s != p0s
        {
            return Err(SimStudyError::ResumeMismatch {
                detail: format!(
                    "record ({}, {}) entry {:?} does not match the configured rule grid",
                    rec.m, rec.k, entry.procedure
                ),
            });
        }
    }
    Ok(())
}
