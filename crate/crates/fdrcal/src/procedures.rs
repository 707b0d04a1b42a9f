//! Multiple-testing decision rules: fixed t-cutoffs, p-value step-up
//! procedures, and a bootstrap stepdown.
//!
//! The step-up family shares one engine: sort p-values ascending, find the
//! largest rank `k` whose order statistic sits below a rank-dependent
//! threshold, and reject everything at or below that order statistic.
//! Benjamini–Hochberg uses `k·α/N`; Benjamini–Yekutieli divides `α` by the
//! harmonic number `c(N) = Σ 1/i` for validity under arbitrary dependence;
//! Storey first estimates the null fraction `π₀` from the p-value tail and
//! spends `α/π₀`.
//!
//! [`rsw`] implements a bootstrap stepdown for FDR control in the spirit of
//! Romano–Shaikh–Wolf (2008): hypotheses are visited in order of decreasing
//! observed statistics, and the k-th is rejected while the bootstrap
//! estimate
//!
//! ```text
//! FDR_hat(k, c) = (1/B) * sum_b  F*_b(c) / (F*_b(c) + k - 1)
//! ```
//!
//! stays at or below `α`, where `F*_b(c)` counts statistics among the
//! not-yet-rejected hypotheses that reach `c` in the b-th centered bootstrap
//! resample and `c` is the k-th observed order statistic.  At `k = 1` the
//! estimate degenerates to the familywise max-statistic test.  The exact
//! critical-value recursion varies across the stepdown literature; this
//! variant — tagged `rsw_stepdown_bootstrap` in reports — evaluates the FDR
//! estimate directly at the observed order statistics, which keeps the
//! decision identical to using the smallest admissible critical values while
//! costing `O(B · N)` per step (worst case `O(B · N²)`).  A budget guard
//! rejects configurations whose `B·N²` cost would be unreasonable; panels
//! wider than `subsample_size` are handled by [`rsw_subsets`], which draws
//! random column subsets and lets callers average realized error rates
//! across them.

use crate::inject::{build_null_panel, InjectError};
use crate::panel::{
    ColumnStore, DrawDesign, EffectKind, FactorPanel, FactorStore, PanelError, ReturnPanel,
    Sidedness, StatError,
};
use crate::rates::decide;
use crate::resample::{draw_indices, stream_rng, BootstrapPlan, Stage};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProcedureError {
    #[error("significance level alpha must lie in (0, 1), got {alpha}")]
    InvalidAlpha { alpha: f64 },
    #[error("Storey tail threshold theta must lie in (0, 1), got {theta}")]
    InvalidTheta { theta: f64 },
    #[error("p-value at index {index} is invalid: {value}")]
    InvalidPValue { index: usize, value: f64 },
    #[error("Student-t p-values need per-column degrees of freedom")]
    MissingDof,
    #[error("degrees of freedom at index {index} must be >= 1, got {dof}")]
    InvalidDof { index: usize, dof: usize },
    #[error("procedure input is empty")]
    EmptyInput,
    #[error("bootstrap iterations {b} below the minimum {needed} for stable stepdown cutoffs")]
    InsufficientIterations { b: usize, needed: usize },
    #[error(
        "stepdown cost B*N^2 = {cost:.3e} exceeds budget {budget:.3e}; \
         use column subsampling (rsw_subsets) for wide panels"
    )]
    BudgetExceeded { cost: f64, budget: f64 },
    #[error(transparent)]
    Inject(#[from] InjectError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// How t-statistics map to p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueSource {
    /// `p = 1 - Phi(t)` — the default for one-sided-right testing.
    OneSidedNormal,
    /// `p = 2 (1 - Phi(|t|))`.
    TwoSidedNormal,
    /// Student-t upper tail with per-column degrees of freedom.
    OneSidedStudentT,
    /// Two-sided Student-t.
    TwoSidedStudentT,
}

/// A validated vector of p-values plus the convention that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueVector {
    pub p: Vec<f64>,
    pub source: PValueSource,
}

impl PValueVector {
    /// Wraps raw p-values, validating each lies in [0, 1].
    pub fn new(p: Vec<f64>, source: PValueSource) -> Result<Self, ProcedureError> {
        if p.is_empty() {
            return Err(ProcedureError::EmptyInput);
        }
        for (index, &value) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(ProcedureError::InvalidPValue { index, value });
            }
        }
        Ok(Self { p, source })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Converts t-statistics to p-values.  `dfs` supplies per-column degrees of
/// freedom and is required for the Student-t sources.  A NaN statistic (an
/// undefined column) maps to `p = 1`, i.e. never rejected.
pub fn p_from_t(
    t: &[f64],
    dfs: Option<&[usize]>,
    source: PValueSource,
) -> Result<PValueVector, ProcedureError> {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::erf::erfc;
    if t.is_empty() {
        return Err(ProcedureError::EmptyInput);
    }
    // Normal tails via erfc directly: 1 - Phi(t) = erfc(t/sqrt(2))/2 keeps
    // relative precision deep in the tail where `1 - cdf` cancels.
    let p: Vec<f64> = match source {
        PValueSource::OneSidedNormal | PValueSource::TwoSidedNormal => t
            .iter()
            .map(|&ti| {
                if ti.is_nan() {
                    1.0
                } else if source == PValueSource::OneSidedNormal {
                    0.5 * erfc(ti / std::f64::consts::SQRT_2)
                } else {
                    erfc(ti.abs() / std::f64::consts::SQRT_2)
                }
            })
            .collect(),
        PValueSource::OneSidedStudentT | PValueSource::TwoSidedStudentT => {
            let dfs = dfs.ok_or(ProcedureError::MissingDof)?;
            if dfs.len() != t.len() {
                return Err(ProcedureError::MissingDof);
            }
            let mut p = Vec::with_capacity(t.len());
            for (index, (&ti, &df)) in t.iter().zip(dfs).enumerate() {
                if ti.is_nan() {
                    p.push(1.0);
                    continue;
                }
                if df < 1 {
                    return Err(ProcedureError::InvalidDof { index, dof: df });
                }
                let dist = StudentsT::new(0.0, 1.0, df as f64).expect("valid student-t");
                let v = if source == PValueSource::OneSidedStudentT {
                    1.0 - dist.cdf(ti)
                } else {
                    2.0 * (1.0 - dist.cdf(ti.abs()))
                };
                p.push(v);
            }
            p
        }
    };
    // Clamp away any floating fuzz outside [0, 1].
    let p = p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    PValueVector::new(p, source)
}

/// Identifies which rule produced a rejection set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "procedure", rename_all = "snake_case")]
pub enum ProcedureTag {
    FixedCutoff { t_cut: f64 },
    Bh { alpha: f64 },
    By { alpha: f64 },
    Storey { alpha: f64, theta: f64 },
    RswStepdownBootstrap { alpha: f64, b: usize },
}

impl ProcedureTag {
    /// Short name for report rows.
    pub fn name(&self) -> String {
        match self {
            ProcedureTag::FixedCutoff { .. } => "fixed_cutoff".into(),
            ProcedureTag::Bh { .. } => "bh".into(),
            ProcedureTag::By { .. } => "by".into(),
            ProcedureTag::Storey { theta, .. } => format!("storey_{theta}"),
            ProcedureTag::RswStepdownBootstrap { .. } => "rsw_stepdown_bootstrap".into(),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            ProcedureTag::FixedCutoff { .. } => None,
            ProcedureTag::Bh { alpha }
            | ProcedureTag::By { alpha }
            | ProcedureTag::Storey { alpha, .. }
            | ProcedureTag::RswStepdownBootstrap { alpha, .. } => Some(*alpha),
        }
    }
}

impl std::fmt::Display for ProcedureTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProcedureTag::FixedCutoff { t_cut } => write!(f, "fixed_cutoff(t={t_cut})"),
            other => write!(f, "{}", other.name()),
        }
    }
}

/// The outcome of one decision rule on one cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionSet {
    /// Per-column rejection decisions, aligned with the input order.
    pub reject: Vec<bool>,
    /// Data-scale threshold: a t-cutoff for [`fixed_cutoff`] and [`rsw`]
    /// (`+inf` when nothing is rejected), a p-value cutoff for the step-up
    /// rules (`0` when nothing is rejected).
    pub threshold: f64,
    pub tag: ProcedureTag,
}

impl RejectionSet {
    pub fn n_rejected(&self) -> usize {
        self.reject.iter().filter(|&&r| r).count()
    }
}

/// Rejects columns whose t-statistic exceeds `t_cut` (strictly; |t| when
/// two-sided).  NaN statistics never reject.
pub fn fixed_cutoff(t: &[f64], t_cut: f64, sidedness: Sidedness) -> RejectionSet {
    RejectionSet {
        reject: t.iter().map(|&ti| decide(ti, t_cut, sidedness)).collect(),
        threshold: t_cut,
        tag: ProcedureTag::FixedCutoff { t_cut },
    }
}

fn validate_alpha(alpha: f64) -> Result<(), ProcedureError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ProcedureError::InvalidAlpha { alpha });
    }
    Ok(())
}

/// Shared step-up engine: rejects all p-values at or below the largest order
/// statistic `p_(k)` satisfying `p_(k) <= threshold(k)` (1-based ranks).
/// Returns the decisions and the realized p-value cutoff (0 when empty).
fn step_up(p: &[f64], threshold_at: impl Fn(usize) -> f64) -> (Vec<bool>, f64) {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    let mut cutoff = None;
    for k in (1..=n).rev() {
        let pk = p[order[k - 1]];
        if pk <= threshold_at(k) {
            cutoff = Some(pk);
            break;
        }
    }
    match cutoff {
        Some(c) => (p.iter().map(|&v| v <= c).collect(), c),
        None => (vec![false; n], 0.0),
    }
}

/// Benjamini–Hochberg step-up at level `alpha`.
pub fn bh(pv: &PValueVector, alpha: f64) -> Result<RejectionSet, ProcedureError> {
    validate_alpha(alpha)?;
    let n = pv.len() as f64;
    let (reject, threshold) = step_up(&pv.p, |k| k as f64 * alpha / n);
    Ok(RejectionSet {
        reject,
        threshold,
        tag: ProcedureTag::Bh { alpha },
    })
}

/// Benjamini–Yekutieli step-up: `alpha` deflated by the harmonic number
/// `c(N) = 1 + 1/2 + … + 1/N`, valid under arbitrary dependence.
pub fn by(pv: &PValueVector, alpha: f64) -> Result<RejectionSet, ProcedureError> {
    validate_alpha(alpha)?;
    let n = pv.len();
    let c: f64 = (1..=n).map(|i| 1.0 / i as f64).sum();
    let nf = n as f64;
    let (reject, threshold) = step_up(&pv.p, |k| k as f64 * alpha / (nf * c));
    Ok(RejectionSet {
        reject,
        threshold,
        tag: ProcedureTag::By { alpha },
    })
}

/// Storey's null-fraction estimate: `#{p > theta} / (N (1 - theta))`,
/// clamped into `[1/N, 1]`.
pub fn storey_pi0(pv: &PValueVector, theta: f64) -> Result<f64, ProcedureError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ProcedureError::InvalidTheta { theta });
    }
    let n = pv.len() as f64;
    let tail = pv.p.iter().filter(|&&v| v > theta).count() as f64;
    let raw = tail / (n * (1.0 - theta));
    Ok(raw.clamp(1.0 / n, 1.0))
}

/// Storey's adaptive step-up: Benjamini–Hochberg at level `alpha / pi0_hat`.
pub fn storey(pv: &PValueVector, alpha: f64, theta: f64) -> Result<RejectionSet, ProcedureError> {
    validate_alpha(alpha)?;
    let pi0 = storey_pi0(pv, theta)?;
    let n = pv.len() as f64;
    let (reject, threshold) = step_up(&pv.p, |k| k as f64 * alpha / (n * pi0));
    Ok(RejectionSet {
        reject,
        threshold,
        tag: ProcedureTag::Storey { alpha, theta },
    })
}

/// Configuration of the bootstrap stepdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RswConfig {
    /// Bootstrap resamples for the null distribution.
    pub b: usize,
    pub sidedness: Sidedness,
    pub min_obs: usize,
    /// Panels wider than this must go through [`rsw_subsets`].
    pub subsample_size: usize,
    /// Number of random column subsets drawn by [`rsw_subsets`].
    pub subsample_count: usize,
    /// Upper bound on the `B·N²` worst-case cost of one stepdown.
    pub max_budget: f64,
}

impl Default for RswConfig {
    fn default() -> Self {
        Self {
            b: 1000,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 8,
            subsample_size: 500,
            subsample_count: 100,
            max_budget: 3e11,
        }
    }
}

const RSW_MIN_B: usize = 50;

/// Bootstrap stepdown FDR procedure (see module docs).  `seed` keys the
/// centered bootstrap; identical inputs and seed reproduce the decision
/// bit-for-bit.
pub fn rsw(
    panel: &ReturnPanel,
    factors: Option<&FactorPanel>,
    kind: EffectKind,
    alpha: f64,
    cfg: &RswConfig,
    seed: u64,
) -> Result<RejectionSet, ProcedureError> {
    validate_alpha(alpha)?;
    if cfg.b < RSW_MIN_B {
        return Err(ProcedureError::InsufficientIterations {
            b: cfg.b,
            needed: RSW_MIN_B,
        });
    }
    let n = panel.n_strategies();
    let cost = cfg.b as f64 * (n as f64) * (n as f64);
    if cost > cfg.max_budget {
        return Err(ProcedureError::BudgetExceeded {
            cost,
            budget: cfg.max_budget,
        });
    }
    let d = panel.n_periods();

    // Observed scores (t or |t|); NaN marks columns excluded from the
    // procedure (undefined statistics are never rejected).
    let store = ColumnStore::from_panel(panel);
    let fstore = factors.map(FactorStore::from_panel);
    let identity: Vec<u32> = (0..d as u32).collect();
    let observed = column_scores(&store, fstore.as_ref(), kind, cfg, &identity)?;

    // Centered bootstrap: scores on resamples of the zero-effect panel.
    let null = build_null_panel(panel, factors, kind, cfg.min_obs)?;
    let null_store = ColumnStore::from_panel(&null.panel);
    let null_fstore = null.factors.as_ref().map(FactorStore::from_panel);
    let plan = BootstrapPlan::new(seed, cfg.b, 1, d);
    let boot: Vec<Vec<f64>> = (0..cfg.b as u64)
        .into_par_iter()
        .map(|bi| {
            let draw = draw_indices(&plan, Stage::StepdownNull, bi, 0);
            column_scores(&null_store, null_fstore.as_ref(), kind, cfg, draw.indices())
                .unwrap_or_else(|_| vec![f64::NAN; n])
        })
        .collect();

    // Stepdown over the observed order statistics.
    let mut ranked: Vec<usize> = (0..n).filter(|&j| !observed[j].is_nan()).collect();
    ranked.sort_by(|&a, &b| {
        observed[b]
            .partial_cmp(&observed[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut reject = vec![false; n];
    let mut threshold = f64::INFINITY;
    for k in 1..=ranked.len() {
        let c = observed[ranked[k - 1]];
        let remaining = &ranked[k - 1..];
        let mut fdr_hat = 0.0;
        for row in &boot {
            let f = remaining
                .iter()
                .filter(|&&j| row[j] >= c) // NaN compares false
                .count() as f64;
            if f > 0.0 {
                fdr_hat += f / (f + (k as f64 - 1.0));
            }
        }
        fdr_hat /= cfg.b as f64;
        if fdr_hat <= alpha {
            reject[ranked[k - 1]] = true;
            threshold = c;
        } else {
            break;
        }
    }
    Ok(RejectionSet {
        reject,
        threshold,
        tag: ProcedureTag::RswStepdownBootstrap { alpha, b: cfg.b },
    })
}

fn column_scores(
    store: &ColumnStore,
    fstore: Option<&FactorStore>,
    kind: EffectKind,
    cfg: &RswConfig,
    idx: &[u32],
) -> Result<Vec<f64>, ProcedureError> {
    let design = match (kind, fstore) {
        (EffectKind::FactorAlpha, Some(fs)) => Some(DrawDesign::new(fs, idx)?),
        (EffectKind::FactorAlpha, None) => return Err(StatError::NoFactors.into()),
        _ => None,
    };
    let mut scratch = Vec::with_capacity(idx.len());
    let mut out = Vec::with_capacity(store.n_strategies());
    for j in 0..store.n_strategies() {
        let score = match crate::panel::effect_t_under_draw(
            store,
            design.as_ref(),
            j,
            idx,
            kind,
            cfg.min_obs,
            &mut scratch,
        ) {
            Ok((_, t)) => match cfg.sidedness {
                Sidedness::OneSidedRight => t,
                Sidedness::TwoSided => t.abs(),
            },
            Err(_) => f64::NAN,
        };
        out.push(score);
    }
    Ok(out)
}

/// One column subset's stepdown outcome: `columns[i]` is the original panel
/// index of decision `set.reject[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRejection {
    pub columns: Vec<usize>,
    pub set: RejectionSet,
}

/// Runs the stepdown on random column subsets when the panel is wider than
/// `cfg.subsample_size`; narrow panels come back as a single full-width
/// subset.  Subset membership and all bootstraps are keyed by `seed`.
pub fn rsw_subsets(
    panel: &ReturnPanel,
    factors: Option<&FactorPanel>,
    kind: EffectKind,
    alpha: f64,
    cfg: &RswConfig,
    seed: u64,
) -> Result<Vec<SubsetRejection>, ProcedureError> {
    let n = panel.n_strategies();
    if n <= cfg.subsample_size {
        let set = rsw(panel, factors, kind, alpha, cfg, seed)?;
        return Ok(vec![SubsetRejection {
            columns: (0..n).collect(),
            set,
        }]);
    }
    let mut out = Vec::with_capacity(cfg.subsample_count);
    for s in 0..cfg.subsample_count as u64 {
        let mut rng = stream_rng(seed, Stage::Subsample, s, 0);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..cfg.subsample_size {
            let pick = rng.random_range(i..n);
            pool.swap(i, pick);
        }
        let mut columns: Vec<usize> = pool[..cfg.subsample_size].to_vec();
        columns.sort_unstable();
        let mut keep = vec![false; n];
        for &c in &columns {
            keep[c] = true;
        }
        let sub = panel.retain_columns(&keep)?;
        let set = rsw(
            &sub,
            factors,
            kind,
            alpha,
            cfg,
            crate::resample::child_seed(seed, Stage::Subsample, s, 1),
        )?;
        out.push(SubsetRejection { columns, set });
    }
    Ok(out)
}
