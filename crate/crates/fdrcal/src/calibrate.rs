//! The double-bootstrap calibration driver.
//!
//! One calibration runs a two-level Monte Carlo over a return panel:
//!
//! 1. **Outer loop** (`i = 0..I`): draw a ranking bootstrap of the panel,
//!    rank columns by their resampled effect t-statistics, and inject the
//!    top `p0` fraction's effects into the original columns
//!    ([`crate::inject::build_alternative_panel`]).  The result is a panel
//!    with known per-column truth labels whose "true" effects carry the
//!    winner's-curse inflation a researcher mining the data would face.
//! 2. **Inner loop** (`j = 0..J`): resample the labeled panel's rows,
//!    compute the cross-section of test statistics, apply every decision
//!    rule under study (fixed t-cutoffs and p-value procedures), and tally
//!    realized false-discovery and miss rates against the labels.
//!
//! `TYPE1`, `TYPE2`, and `ORATIO` for a rule are the means of the realized
//! rates over all `I × J` draws; Monte Carlo standard errors are computed
//! across the `I` outer replications.  [`solve_cutoff`] inverts the Type I
//! curve: it scans a t-cutoff grid and returns the most powerful cutoff
//! whose calibrated Type I rate stays at or below a target.
//! [`compare_methods`] benchmarks the p-value procedures against the
//! calibrated cutoff's Type II error on common draws.
//!
//! # Determinism
//!
//! For a fixed request (including the master seed) the report is
//! byte-identical at any thread count: every bootstrap stream is keyed by
//! `(seed, stage, i, j)`, parallel workers write into order-preserving
//! slots, and all floating-point reductions run in a fixed lexical order.

use crate::inject::{build_alternative_panel, InjectError, InjectionConfig};
use crate::panel::{
    ColumnStore, DrawDesign, EffectKind, FactorPanel, FactorStore, PanelError, ReturnPanel,
    Sidedness,
};
use crate::procedures::{
    bh, by, fixed_cutoff, p_from_t, rsw_subsets, storey, PValueSource, ProcedureError, RswConfig,
};
use crate::rates::{count_outcomes, realized_rates, RatesError, RealizedRates};
use crate::resample::{
    apply_draw, apply_draw_factors, child_seed, draw_indices, BootstrapPlan, ResampleError, Stage,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CalibrateError {
    #[error("{grid} grid must not be empty")]
    EmptyGrid { grid: &'static str },
    #[error("{grid} grid must be strictly increasing")]
    GridNotIncreasing { grid: &'static str },
    #[error("true fraction p0 must lie in [0, 1], got {p0}")]
    InvalidFraction { p0: f64 },
    #[error("significance level alpha must lie in (0, 1), got {alpha}")]
    InvalidAlpha { alpha: f64 },
    #[error("target Type I rate must lie in (0, 1], got {target}")]
    InvalidTarget { target: f64 },
    #[error("request defines no decision rules (no cutoffs, no procedures)")]
    NoDecisionRules,
    #[error("bootstrap plan is inconsistent with the panel: {detail}")]
    InvalidPlan { detail: String },
    #[error("min_obs must be at least 2, got {min_obs}")]
    InvalidMinObs { min_obs: usize },
    #[error("factor-alpha mode requires a factor panel")]
    MissingFactors,
    #[error("invalid procedure spec: {detail}")]
    InvalidProcedure { detail: String },
    #[error("no valid fixed-cutoff cells at p0 = {p0}; last error: {last}")]
    NoValidCutoffCells { p0: f64, last: String },
    #[error(transparent)]
    Procedure(#[from] ProcedureError),
    #[error(transparent)]
    Inject(#[from] InjectError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Rates(#[from] RatesError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// A p-value procedure to calibrate.  Fixed t-cutoffs are specified
/// separately through [`CalibrationRequest::cutoff_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcedureSpec {
    Bh,
    By,
    Storey {
        theta: f64,
    },
    Rsw {
        b: usize,
        #[serde(default = "default_subsample_size")]
        subsample_size: usize,
        #[serde(default = "default_subsample_count")]
        subsample_count: usize,
    },
}

fn default_subsample_size() -> usize {
    500
}

fn default_subsample_count() -> usize {
    100
}

impl ProcedureSpec {
    /// Stable label used in report rows; matches
    /// [`crate::procedures::ProcedureTag::name`].
    pub fn label(&self) -> String {
        match self {
            ProcedureSpec::Bh => "bh".into(),
            ProcedureSpec::By => "by".into(),
            ProcedureSpec::Storey { theta } => format!("storey_{theta}"),
            ProcedureSpec::Rsw { .. } => "rsw_stepdown_bootstrap".into(),
        }
    }
}

/// Everything one calibration run needs.  The panel and factors are
/// borrowed; grids and procedure lists are owned so requests can be built
/// from configuration files.
#[derive(Debug, Clone)]
pub struct CalibrationRequest<'a> {
    pub panel: &'a ReturnPanel,
    pub factors: Option<&'a FactorPanel>,
    /// Fractions of columns treated as true strategies; strictly increasing.
    pub p0_grid: Vec<f64>,
    /// Significance levels for the p-value procedures; strictly increasing.
    pub alpha_grid: Vec<f64>,
    /// Fixed t-cutoffs to calibrate; strictly increasing, may be empty when
    /// `procedures` is not (a trailing `+inf` is allowed).
    pub cutoff_grid: Vec<f64>,
    pub procedures: Vec<ProcedureSpec>,
    pub plan: BootstrapPlan,
    /// Effect definition: raw mean return or factor-model alpha.
    pub mode: EffectKind,
    pub sidedness: Sidedness,
    pub min_obs: usize,
    /// Convention mapping t-statistics to p-values for the step-up rules.
    pub p_values: PValueSource,
}

impl<'a> CalibrationRequest<'a> {
    /// A request with the common defaults: one-sided raw-mean testing,
    /// normal p-values, `min_obs = 8`, and empty grids to be filled in.
    pub fn new(panel: &'a ReturnPanel, plan: BootstrapPlan) -> Self {
        Self {
            panel,
            factors: None,
            p0_grid: Vec::new(),
            alpha_grid: Vec::new(),
            cutoff_grid: Vec::new(),
            procedures: Vec::new(),
            plan,
            mode: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 8,
            p_values: PValueSource::OneSidedNormal,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrateError> {
        self.validate_base()?;
        check_grid(&self.p0_grid, "p0", true)?;
        for &p0 in &self.p0_grid {
            if !(0.0..=1.0).contains(&p0) {
                return Err(CalibrateError::InvalidFraction { p0 });
            }
        }
        if self.procedures.is_empty() && self.cutoff_grid.is_empty() {
            return Err(CalibrateError::NoDecisionRules);
        }
        if !self.procedures.is_empty() {
            check_grid(&self.alpha_grid, "alpha", true)?;
            for &alpha in &self.alpha_grid {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(CalibrateError::InvalidAlpha { alpha });
                }
            }
        }
        if !self.cutoff_grid.is_empty() {
            check_grid(&self.cutoff_grid, "cutoff", false)?;
        }
        for spec in &self.procedures {
            match spec {
                ProcedureSpec::Storey { theta } => {
                    if !(*theta > 0.0 && *theta < 1.0) {
                        return Err(CalibrateError::InvalidProcedure {
                            detail: format!("Storey theta must lie in (0, 1), got {theta}"),
                        });
                    }
                }
                ProcedureSpec::Rsw {
                    b,
                    subsample_size,
                    subsample_count,
                } => {
                    if *subsample_size < 2 || *subsample_count == 0 {
                        return Err(CalibrateError::InvalidProcedure {
                            detail: "Rsw subsample_size must be >= 2 and subsample_count >= 1"
                                .into(),
                        });
                    }
                    // Fail fast on configs the stepdown itself would refuse.
                    let n_eff = self.panel.n_strategies().min(*subsample_size);
                    let cfg = RswConfig::default();
                    if *b < 50 {
                        return Err(
                            ProcedureError::InsufficientIterations { b: *b, needed: 50 }.into()
                        );
                    }
                    let cost = *b as f64 * (n_eff as f64) * (n_eff as f64);
                    if cost > cfg.max_budget {
                        return Err(ProcedureError::BudgetExceeded {
                            cost,
                            budget: cfg.max_budget,
                        }
                        .into());
                    }
                }
                ProcedureSpec::Bh | ProcedureSpec::By => {}
            }
        }
        Ok(())
    }

    /// Checks shared by the full calibration and the cutoff solver.
    fn validate_base(&self) -> Result<(), CalibrateError> {
        if self.plan.n_periods != self.panel.n_periods() {
            return Err(CalibrateError::InvalidPlan {
                detail: format!(
                    "plan has {} periods, panel has {}",
                    self.plan.n_periods,
                    self.panel.n_periods()
                ),
            });
        }
        if self.plan.outer_draws == 0 || self.plan.inner_draws == 0 {
            return Err(CalibrateError::InvalidPlan {
                detail: "outer_draws and inner_draws must both be at least 1".into(),
            });
        }
        if self.min_obs < 2 {
            return Err(CalibrateError::InvalidMinObs {
                min_obs: self.min_obs,
            });
        }
        match (self.mode, self.factors) {
            (EffectKind::FactorAlpha, None) => return Err(CalibrateError::MissingFactors),
            (EffectKind::FactorAlpha, Some(f)) => f.check_aligned(self.panel)?,
            (EffectKind::RawMean, _) => {}
        }
        Ok(())
    }
}

fn check_grid(
    grid: &[f64],
    name: &'static str,
    require_nonempty: bool,
) -> Result<(), CalibrateError> {
    if grid.is_empty() {
        if require_nonempty {
            return Err(CalibrateError::EmptyGrid { grid: name });
        }
        return Ok(());
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(CalibrateError::GridNotIncreasing { grid: name });
        }
    }
    if grid.iter().any(|v| v.is_nan()) {
        return Err(CalibrateError::GridNotIncreasing { grid: name });
    }
    Ok(())
}

/// The canonical solver grid: t = 1.5, 1.6, …, 5.0.
pub fn default_cutoff_grid() -> Vec<f64> {
    (15..=50).map(|k| k as f64 / 10.0).collect()
}

/// One rule's calibrated error rates at one true fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub p0: f64,
    /// Rule label: `fixed_cutoff`, `bh`, `by`, `storey_<theta>`,
    /// `rsw_stepdown_bootstrap`, or `calibrated_cutoff`.
    pub procedure: String,
    /// Significance level for p-value rules and the calibrated-cutoff
    /// column; `None` for plain fixed cutoffs.
    pub alpha: Option<f64>,
    /// The t-cutoff for fixed and calibrated rules.
    pub t_cutoff: Option<f64>,
    pub type1: Option<f64>,
    pub se_type1: Option<f64>,
    pub type2: Option<f64>,
    pub se_type2: Option<f64>,
    pub oratio: Option<f64>,
    pub se_oratio: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub outer_draws: usize,
    pub inner_draws: usize,
    /// Inner draws that produced decisions for this rule.
    pub draws_used: u64,
    /// Inner draws skipped (failed statistics or rule errors).
    pub draws_skipped: u64,
    pub valid: bool,
    /// For `calibrated_cutoff` rows: whether the Type I target was
    /// unattainable on the grid (the reported cutoff is the grid maximum).
    pub unattained: Option<bool>,
    pub error: Option<String>,
}

/// Provenance block: everything needed to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub seed: u64,
    pub outer_draws: usize,
    pub inner_draws: usize,
    pub n_periods: usize,
    pub n_strategies: usize,
    pub p0_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub cutoff_grid: Vec<f64>,
    pub procedures: Vec<ProcedureSpec>,
    pub mode: EffectKind,
    pub sidedness: Sidedness,
    pub min_obs: usize,
    pub p_values: PValueSource,
    pub panel_fingerprint: String,
    pub factor_fingerprint: Option<String>,
}

/// A full calibration report: provenance plus one cell per
/// `(p0, rule[, alpha])` combination, in deterministic order (p0 major;
/// fixed cutoffs in grid order, then procedures × alphas).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateReport {
    pub meta: CalibrationMeta,
    pub cells: Vec<ReportCell>,
}

impl ErrorRateReport {
    /// Looks up a cell by grid values (exact float match against the grid
    /// literals) and rule label.
    pub fn cell(&self, p0: f64, procedure: &str, alpha: Option<f64>) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.p0 == p0 && c.procedure == procedure && c.alpha == alpha)
    }

    /// The fixed-cutoff cell at `(p0, t_cut)`.
    pub fn fixed_cell(&self, p0: f64, t_cut: f64) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.p0 == p0 && c.procedure == "fixed_cutoff" && c.t_cutoff == Some(t_cut))
    }
}

/// Internal rule enumeration: the cross-section decisions evaluated on
/// every inner draw.
#[derive(Debug, Clone)]
enum Rule {
    Fixed { t_cut: f64 },
    Proc { spec: ProcedureSpec, alpha: f64 },
}

impl Rule {
    fn cell_shell(&self, p0: f64, plan: &BootstrapPlan) -> ReportCell {
        let (procedure, alpha, t_cutoff) = match self {
            Rule::Fixed { t_cut } => ("fixed_cutoff".to_string(), None, Some(*t_cut)),
            Rule::Proc { spec, alpha } => (spec.label(), Some(*alpha), None),
        };
        ReportCell {
            p0,
            procedure,
            alpha,
            t_cutoff,
            type1: None,
            se_type1: None,
            type2: None,
            se_type2: None,
            oratio: None,
            se_oratio: None,
            tpr: None,
            fpr: None,
            outer_draws: plan.outer_draws,
            inner_draws: plan.inner_draws,
            draws_used: 0,
            draws_skipped: 0,
            valid: false,
            unattained: None,
            error: None,
        }
    }
}

fn enumerate_rules(req: &CalibrationRequest<'_>) -> Vec<Rule> {
    let mut rules = Vec::new();
    for &t_cut in &req.cutoff_grid {
        rules.push(Rule::Fixed { t_cut });
    }
    for spec in &req.procedures {
        for &alpha in &req.alpha_grid {
            rules.push(Rule::Proc {
                spec: spec.clone(),
                alpha,
            });
        }
    }
    rules
}

/// Per-(rule, outer) accumulator filled sequentially over inner draws.
#[derive(Debug, Clone, Default)]
struct RuleAccum {
    sum: [f64; 5], // rfdr, rmiss, rratio, tpr, fpr
    used: u64,
    skipped: u64,
    last_error: Option<String>,
}

impl RuleAccum {
    fn add(&mut self, r: &RealizedRates) {
        self.sum[0] += r.rfdr;
        self.sum[1] += r.rmiss;
        self.sum[2] += r.rratio;
        self.sum[3] += r.tpr;
        self.sum[4] += r.fpr;
        self.used += 1;
    }

    fn skip(&mut self, msg: Option<String>) {
        self.skipped += 1;
        if let Some(m) = msg {
            self.last_error = Some(m);
        }
    }
}

/// One outer replication's tallies for every rule at one p0.
struct OuterSlice {
    rules: Vec<RuleAccum>,
}

/// Runs the inner loop for outer replication `i` at true fraction `p0`.
fn run_outer(req: &CalibrationRequest<'_>, rules: &[Rule], p0: f64, i: u64) -> OuterSlice {
    let j_total = req.plan.inner_draws as u64;
    let mut slice = OuterSlice {
        rules: vec![RuleAccum::default(); rules.len()],
    };
    let skip_all = |slice: &mut OuterSlice, n: u64, msg: &str| {
        for acc in &mut slice.rules {
            for _ in 0..n {
                acc.skipped += 1;
            }
            acc.last_error = Some(msg.to_string());
        }
    };

    let outer_draw = draw_indices(&req.plan, Stage::Outer, i, 0);
    let cfg = InjectionConfig {
        p0,
        kind: req.mode,
        sidedness: req.sidedness,
        min_obs: req.min_obs,
    };
    let labeled = match build_alternative_panel(req.panel, req.factors, &cfg, &outer_draw) {
        Ok(l) => l,
        Err(e) => {
            skip_all(&mut slice, j_total, &format!("outer draw {i}: {e}"));
            return slice;
        }
    };
    let store = ColumnStore::from_panel(&labeled.panel);
    let fstore = labeled.factors.as_ref().map(FactorStore::from_panel);
    let n = labeled.panel.n_strategies();
    let k_factors = labeled.factors.as_ref().map_or(0, |f| f.n_factors());
    let need_p = rules.iter().any(
        |r| matches!(r, Rule::Proc { spec, .. } if !matches!(spec, ProcedureSpec::Rsw { .. })),
    );
    let student_t = matches!(
        req.p_values,
        PValueSource::OneSidedStudentT | PValueSource::TwoSidedStudentT
    );

    let mut scratch: Vec<f64> = Vec::with_capacity(req.plan.n_periods);
    let mut t = vec![f64::NAN; n];
    for j in 0..j_total {
        let inner = draw_indices(&req.plan, Stage::Inner, i, j);
        let idx = inner.indices();

        let design = match req.mode {
            EffectKind::FactorAlpha => {
                match DrawDesign::new(fstore.as_ref().expect("validated"), idx) {
                    Ok(d) => Some(d),
                    Err(e) => {
                        // A degenerate resampled factor design invalidates
                        // every statistic: skip the draw for all rules.
                        for acc in &mut slice.rules {
                            acc.skip(Some(format!("inner draw ({i},{j}): {e}")));
                        }
                        continue;
                    }
                }
            }
            EffectKind::RawMean => None,
        };
        let mut any_defined = false;
        for (col, tj) in t.iter_mut().enumerate() {
            *tj = match crate::panel::effect_t_under_draw(
                &store,
                design.as_ref(),
                col,
                idx,
                req.mode,
                req.min_obs,
                &mut scratch,
            ) {
                Ok((_, tv)) => {
                    any_defined = true;
                    tv
                }
                Err(_) => f64::NAN,
            };
        }
        if !any_defined {
            for acc in &mut slice.rules {
                acc.skip(Some(format!("inner draw ({i},{j}): no defined statistics")));
            }
            continue;
        }

        let pv = if need_p {
            let dfs = if student_t {
                Some(dofs_under_draw(&store, idx, req.mode, k_factors))
            } else {
                None
            };
            match p_from_t(&t, dfs.as_deref(), req.p_values) {
                Ok(v) => Some(v),
                Err(e) => {
                    for (acc, rule) in slice.rules.iter_mut().zip(rules) {
                        if matches!(rule, Rule::Proc { spec, .. } if !matches!(spec, ProcedureSpec::Rsw { .. }))
                        {
                            acc.skip(Some(format!("inner draw ({i},{j}): {e}")));
                        }
                    }
                    None
                }
            }
        } else {
            None
        };

        // Materialized panel for rules that need a concrete resample.
        let mut inner_panel: Option<(ReturnPanel, Option<FactorPanel>)> = None;

        for (acc, rule) in slice.rules.iter_mut().zip(rules) {
            let decisions: Result<Vec<bool>, String> = match rule {
                Rule::Fixed { t_cut } => Ok(fixed_cutoff(&t, *t_cut, req.sidedness).reject),
                Rule::Proc { spec, alpha } => match spec {
                    ProcedureSpec::Bh => match &pv {
                        Some(v) => bh(v, *alpha).map(|s| s.reject).map_err(|e| e.to_string()),
                        None => continue, // already counted skipped above
                    },
                    ProcedureSpec::By => match &pv {
                        Some(v) => by(v, *alpha).map(|s| s.reject).map_err(|e| e.to_string()),
                        None => continue,
                    },
                    ProcedureSpec::Storey { theta } => match &pv {
                        Some(v) => storey(v, *alpha, *theta)
                            .map(|s| s.reject)
                            .map_err(|e| e.to_string()),
                        None => continue,
                    },
                    ProcedureSpec::Rsw {
                        b,
                        subsample_size,
                        subsample_count,
                    } => {
                        if inner_panel.is_none() {
                            let built = apply_draw(&labeled.panel, &inner)
                                .map_err(|e| e.to_string())
                                .and_then(|p| {
                                    let f = labeled
                                        .factors
                                        .as_ref()
                                        .map(|f| apply_draw_factors(f, &inner))
                                        .transpose()
                                        .map_err(|e| e.to_string())?;
                                    Ok((p, f))
                                });
                            match built {
                                Ok(mat) => inner_panel = Some(mat),
                                Err(e) => {
                                    acc.skip(Some(format!("inner draw ({i},{j}): {e}")));
                                    continue;
                                }
                            }
                        }
                        let (mat_panel, mat_factors) = inner_panel.as_ref().expect("just built");
                        let rsw_cfg = RswConfig {
                            b: *b,
                            sidedness: req.sidedness,
                            min_obs: req.min_obs,
                            subsample_size: *subsample_size,
                            subsample_count: *subsample_count,
                            ..RswConfig::default()
                        };
                        let seed = child_seed(req.plan.master_seed, Stage::StepdownNull, i, j);
                        let outcome = rsw_subsets(
                            mat_panel,
                            mat_factors.as_ref(),
                            req.mode,
                            *alpha,
                            &rsw_cfg,
                            seed,
                        )
                        .map_err(|e| e.to_string())
                        .and_then(|subs| tally_subsets(&subs, &labeled.truth));
                        match outcome {
                            Ok(r) => acc.add(&r),
                            Err(e) => acc.skip(Some(format!("inner draw ({i},{j}): {e}"))),
                        }
                        continue; // tallies handled; no shared path below
                    }
                },
            };
            match decisions {
                Ok(d) => match count_outcomes(&d, &labeled.truth) {
                    Ok(counts) => acc.add(&realized_rates(&counts)),
                    Err(e) => acc.skip(Some(format!("inner draw ({i},{j}): {e}"))),
                },
                Err(e) => acc.skip(Some(format!("inner draw ({i},{j}): {e}"))),
            }
        }
    }
    slice
}

/// Realized rates for one stepdown run, averaged over its column subsets
/// (a single full-width subset when the panel fits the stepdown budget).
fn tally_subsets(
    subs: &[crate::procedures::SubsetRejection],
    truth: &[bool],
) -> Result<RealizedRates, String> {
    let mut sum = RealizedRates::default();
    for sub in subs {
        let sub_truth: Vec<bool> = sub.columns.iter().map(|&c| truth[c]).collect();
        let counts = count_outcomes(&sub.set.reject, &sub_truth).map_err(|e| e.to_string())?;
        let r = realized_rates(&counts);
        sum.rfdr += r.rfdr;
        sum.rmiss += r.rmiss;
        sum.rratio += r.rratio;
        sum.tpr += r.tpr;
        sum.fpr += r.fpr;
    }
    let m = subs.len() as f64;
    Ok(RealizedRates {
        rfdr: sum.rfdr / m,
        rmiss: sum.rmiss / m,
        rratio: sum.rratio / m,
        tpr: sum.tpr / m,
        fpr: sum.fpr / m,
    })
}

/// Per-column degrees of freedom under a draw: observed count minus fitted
/// parameters, floored at 1 (columns whose statistics already failed carry
/// `t = NaN` and map to `p = 1` regardless).
fn dofs_under_draw(
    store: &ColumnStore,
    idx: &[u32],
    mode: EffectKind,
    k_factors: usize,
) -> Vec<usize> {
    let params = match mode {
        EffectKind::RawMean => 1,
        EffectKind::FactorAlpha => k_factors + 1,
    };
    (0..store.n_strategies())
        .map(|j| {
            let obs = if store.is_complete() {
                idx.len()
            } else {
                let col = store.column(j);
                idx.iter().filter(|&&r| !col[r as usize].is_nan()).count()
            };
            obs.saturating_sub(params).max(1)
        })
        .collect()
}

/// Runs the full grid and produces cells in deterministic order.  Shared by
/// [`double_bootstrap`] and [`solve_cutoff`].
fn run_grid(req: &CalibrationRequest<'_>, p0_grid: &[f64], rules: &[Rule]) -> Vec<ReportCell> {
    let i_total = req.plan.outer_draws as u64;
    // Parallel fill over (p0, i) tasks into order-preserving slots.
    let tasks: Vec<(usize, u64)> = p0_grid
        .iter()
        .enumerate()
        .flat_map(|(pi, _)| (0..i_total).map(move |i| (pi, i)))
        .collect();
    let slices: Vec<OuterSlice> = tasks
        .par_iter()
        .map(|&(pi, i)| run_outer(req, rules, p0_grid[pi], i))
        .collect();

    // Sequential lexical reduction: p0 major, rule minor, outer i inner.
    let mut cells = Vec::with_capacity(p0_grid.len() * rules.len());
    for (pi, &p0) in p0_grid.iter().enumerate() {
        let base = pi * i_total as usize;
        for (ri, rule) in rules.iter().enumerate() {
            let mut cell = rule.cell_shell(p0, &req.plan);
            let mut total = [0.0f64; 5];
            let mut used = 0u64;
            let mut skipped = 0u64;
            let mut outer_means: Vec<[f64; 5]> = Vec::with_capacity(i_total as usize);
            let mut last_error = None;
            for i in 0..i_total as usize {
                let acc = &slices[base + i].rules[ri];
                for (tot, s) in total.iter_mut().zip(acc.sum) {
                    *tot += s;
                }
                used += acc.used;
                skipped += acc.skipped;
                if acc.used > 0 {
                    let mut m = [0.0f64; 5];
                    for (mi, s) in m.iter_mut().zip(acc.sum) {
                        *mi = s / acc.used as f64;
                    }
                    outer_means.push(m);
                }
                if let Some(e) = &acc.last_error {
                    last_error = Some(e.clone());
                }
            }
            cell.draws_used = used;
            cell.draws_skipped = skipped;
            cell.error = last_error;
            if used > 0 {
                let denom = used as f64;
                cell.type1 = Some(total[0] / denom);
                cell.type2 = Some(total[1] / denom);
                cell.oratio = Some(total[2] / denom);
                cell.tpr = Some(total[3] / denom);
                cell.fpr = Some(total[4] / denom);
                cell.valid = true;
                let i_eff = outer_means.len();
                if i_eff >= 2 {
                    cell.se_type1 = Some(se_of_means(&outer_means, 0));
                    cell.se_type2 = Some(se_of_means(&outer_means, 1));
                    cell.se_oratio = Some(se_of_means(&outer_means, 2));
                }
            }
            cells.push(cell);
        }
    }
    cells
}

/// Standard error across outer replications: sample sd of the per-outer
/// inner means divided by √I.
fn se_of_means(means: &[[f64; 5]], field: usize) -> f64 {
    let n = means.len() as f64;
    let mean: f64 = means.iter().map(|m| m[field]).sum::<f64>() / n;
    let ss: f64 = means.iter().map(|m| (m[field] - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt() / n.sqrt()
}

fn build_meta(req: &CalibrationRequest<'_>, cutoff_grid: &[f64]) -> CalibrationMeta {
    CalibrationMeta {
        seed: req.plan.master_seed,
        outer_draws: req.plan.outer_draws,
        inner_draws: req.plan.inner_draws,
        n_periods: req.panel.n_periods(),
        n_strategies: req.panel.n_strategies(),
        p0_grid: req.p0_grid.clone(),
        alpha_grid: req.alpha_grid.clone(),
        cutoff_grid: cutoff_grid.to_vec(),
        procedures: req.procedures.clone(),
        mode: req.mode,
        sidedness: req.sidedness,
        min_obs: req.min_obs,
        p_values: req.p_values,
        panel_fingerprint: req.panel.fingerprint(),
        factor_fingerprint: req.factors.map(|f| f.fingerprint()),
    }
}

/// Calibrates every requested rule over the `p0` grid (see module docs).
/// Failures isolate per cell: a cell that never produces decisions is
/// returned invalid with its last error, and the run continues.
pub fn double_bootstrap(req: &CalibrationRequest<'_>) -> Result<ErrorRateReport, CalibrateError> {
    req.validate()?;
    let rules = enumerate_rules(req);
    let cells = run_grid(req, &req.p0_grid, &rules);
    Ok(ErrorRateReport {
        meta: build_meta(req, &req.cutoff_grid),
        cells,
    })
}

/// A solved data-specific t-cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSolution {
    pub p0: f64,
    pub alpha_target: f64,
    /// The selected grid cutoff.
    pub t_star: f64,
    pub achieved_type1: f64,
    pub achieved_type2: f64,
    /// True when every grid point's Type I rate exceeded the target; the
    /// reported cutoff is then the grid maximum (the most conservative).
    pub unattained: bool,
}

/// Solves for the t-cutoff whose calibrated Type I rate is the largest not
/// exceeding `alpha_target` at true fraction `p0` — the most powerful
/// admissible cutoff on the grid.  Uses `req.cutoff_grid` when non-empty,
/// else [`default_cutoff_grid`] (1.5 to 5.0 in 0.1 steps).  `alpha_target`
/// may be 1 (everything qualifies → the smallest grid point).
///
/// All grid points share bootstrap draws, so comparisons across cutoffs are
/// common-random-number comparisons.
pub fn solve_cutoff(
    req: &CalibrationRequest<'_>,
    p0: f64,
    alpha_target: f64,
) -> Result<CutoffSolution, CalibrateError> {
    req.validate_base()?;
    if !(0.0..=1.0).contains(&p0) {
        return Err(CalibrateError::InvalidFraction { p0 });
    }
    if !(alpha_target > 0.0 && alpha_target <= 1.0) {
        return Err(CalibrateError::InvalidTarget {
            target: alpha_target,
        });
    }
    let grid = if req.cutoff_grid.is_empty() {
        default_cutoff_grid()
    } else {
        req.cutoff_grid.clone()
    };
    check_grid(&grid, "cutoff", true)?;
    let rules: Vec<Rule> = grid.iter().map(|&t_cut| Rule::Fixed { t_cut }).collect();
    let cells = run_grid(req, &[p0], &rules);
    select_cutoff(&cells, p0, alpha_target)
}

/// Selection shared with [`compare_methods`]: cells must be fixed-cutoff
/// cells at `p0` in grid order.
fn select_cutoff(
    cells: &[ReportCell],
    p0: f64,
    alpha_target: f64,
) -> Result<CutoffSolution, CalibrateError> {
    let valid: Vec<&ReportCell> = cells
        .iter()
        .filter(|c| c.p0 == p0 && c.procedure == "fixed_cutoff" && c.valid)
        .collect();
    if valid.is_empty() {
        let last = cells
            .iter()
            .filter(|c| c.p0 == p0 && c.procedure == "fixed_cutoff")
            .filter_map(|c| c.error.clone())
            .next_back()
            .unwrap_or_else(|| "no cells evaluated".into());
        return Err(CalibrateError::NoValidCutoffCells { p0, last });
    }
    let admissible = valid
        .iter()
        .filter(|c| c.type1.expect("valid cell") <= alpha_target)
        // max_by on type1; first wins ties because Ordering::Greater is
        // required to replace the incumbent.
        .fold(None::<&&ReportCell>, |best, c| match best {
            None => Some(c),
            Some(b) if c.type1 > b.type1 => Some(c),
            keep => keep,
        });
    let (chosen, unattained) = match admissible {
        Some(c) => (*c, false),
        None => (*valid.last().expect("nonempty"), true),
    };
    Ok(CutoffSolution {
        p0,
        alpha_target,
        t_star: chosen.t_cutoff.expect("fixed cell"),
        achieved_type1: chosen.type1.expect("valid cell"),
        achieved_type2: chosen.type2.expect("valid cell"),
        unattained,
    })
}

/// Calibrates the requested procedures and appends, per `(p0, alpha)`, a
/// `calibrated_cutoff` benchmark row: the Type II error achieved by the
/// [`solve_cutoff`] threshold on the same draws.  Uses `req.cutoff_grid` as
/// the solver grid (default grid when empty); the fixed-cutoff cells it is
/// derived from stay in the report.
pub fn compare_methods(req: &CalibrationRequest<'_>) -> Result<ErrorRateReport, CalibrateError> {
    let mut eff = req.clone();
    if eff.cutoff_grid.is_empty() {
        eff.cutoff_grid = default_cutoff_grid();
    }
    eff.validate()?;
    let rules = enumerate_rules(&eff);
    let mut cells = run_grid(&eff, &eff.p0_grid, &rules);
    let mut bench = Vec::new();
    for &p0 in &eff.p0_grid {
        for &alpha in &eff.alpha_grid {
            let mut cell = ReportCell {
                p0,
                procedure: "calibrated_cutoff".into(),
                alpha: Some(alpha),
                t_cutoff: None,
                type1: None,
                se_type1: None,
                type2: None,
                se_type2: None,
                oratio: None,
                se_oratio: None,
                tpr: None,
                fpr: None,
                outer_draws: eff.plan.outer_draws,
                inner_draws: eff.plan.inner_draws,
                draws_used: 0,
                draws_skipped: 0,
                valid: false,
                unattained: None,
                error: None,
            };
            match select_cutoff(&cells, p0, alpha) {
                Ok(sol) => {
                    let src = cells
                        .iter()
                        .find(|c| {
                            c.p0 == p0
                                && c.procedure == "fixed_cutoff"
                                && c.t_cutoff == Some(sol.t_star)
                        })
                        .expect("solution cell exists");
                    cell.t_cutoff = Some(sol.t_star);
                    cell.type1 = src.type1;
                    cell.se_type1 = src.se_type1;
                    cell.type2 = src.type2;
                    cell.se_type2 = src.se_type2;
                    cell.oratio = src.oratio;
                    cell.se_oratio = src.se_oratio;
                    cell.tpr = src.tpr;
                    cell.fpr = src.fpr;
                    cell.draws_used = src.draws_used;
                    cell.draws_skipped = src.draws_skipped;
                    cell.valid = true;
                    cell.unattained = Some(sol.unattained);
                }
                Err(e) => {
                    cell.error = Some(e.to_string());
                }
            }
            bench.push(cell);
        }
    }
    cells.extend(bench);
    Ok(ErrorRateReport {
        meta: build_meta(&eff, &eff.cutoff_grid),
        cells,
    })
}
