//! Return panels, factor panels, and per-strategy statistics.
//!
//! A [`ReturnPanel`] holds a D×N matrix of per-period returns for N
//! strategies (columns) over D periods (rows), together with an observation
//! mask: missing observations are first-class and are never conflated with
//! zero returns.  A [`FactorPanel`] holds a complete D×K matrix of factor
//! returns aligned to the same periods.
//!
//! Per-column statistics come in two flavors selected by [`EffectKind`]:
//! the t-statistic of the mean return, or the t-statistic of the OLS alpha
//! against the factor panel (intercept plus K slopes, homoskedastic standard
//! errors).  Both are exposed for full samples ([`panel_stats`]) and, through
//! [`ColumnStore`] / [`FactorStore`], for bootstrap index draws on the hot
//! path without re-allocating per draw.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Structural errors raised when building or combining panels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PanelError {
    #[error("values are {values_rows}x{values_cols} but mask is {mask_rows}x{mask_cols}")]
    ShapeMismatch {
        values_rows: usize,
        values_cols: usize,
        mask_rows: usize,
        mask_cols: usize,
    },
    #[error("panel needs at least 2 periods, got {got}")]
    TooFewPeriods { got: usize },
    #[error("panel has no strategy columns")]
    NoStrategies,
    #[error("expected {expected} period labels, got {got}")]
    PeriodCountMismatch { expected: usize, got: usize },
    #[error("expected {expected} strategy names, got {got}")]
    NameCountMismatch { expected: usize, got: usize },
    #[error("period labels not strictly increasing at row {row}: {prev:?} >= {next:?}")]
    PeriodsNotIncreasing {
        row: usize,
        prev: String,
        next: String,
    },
    #[error("duplicate strategy name {name:?}")]
    DuplicateName { name: String },
    #[error("strategy {name:?} has no observed returns")]
    EmptyColumn { name: String },
    #[error("non-finite value at period {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("factor panel periods do not match return panel periods (row {row})")]
    FactorPeriodMismatch { row: usize },
    #[error("factor panel has a non-finite value at period {row}, factor {col}")]
    FactorNonFinite { row: usize, col: usize },
}

/// Per-column estimation failures.  These are recoverable: callers decide
/// whether a failing column invalidates a computation or is merely excluded.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatError {
    #[error("too few observations: needed {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("degenerate variance: sample has no dispersion")]
    DegenerateVariance,
    #[error("rank-deficient regression design")]
    RankDeficient,
    #[error("factor-alpha statistics requested but no factor panel supplied")]
    NoFactors,
}

/// Which per-column effect is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// Mean return and its t-statistic.
    RawMean,
    /// OLS intercept against the factor panel and its t-statistic.
    FactorAlpha,
}

impl std::fmt::Display for EffectKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EffectKind::RawMean => write!(f, "raw_mean"),
            EffectKind::FactorAlpha => write!(f, "factor_alpha"),
        }
    }
}

/// Sidedness of the significance decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// Reject for large positive statistics only.
    OneSidedRight,
    /// Reject for large |statistic|.
    TwoSided,
}

impl std::fmt::Display for Sidedness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sidedness::OneSidedRight => write!(f, "one_sided_right"),
            Sidedness::TwoSided => write!(f, "two_sided"),
        }
    }
}

/// Compares period labels: numerically when both parse as integers,
/// lexicographically otherwise (ISO-style date strings sort correctly).
pub fn period_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.trim().parse::<i64>(), b.trim().parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// A D×N panel of per-period returns with an explicit observation mask.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    values: Array2<f64>,
    mask: Array2<bool>,
    periods: Vec<String>,
    names: Vec<String>,
}

/// Equality compares labels, the mask, and the *observed* values bitwise;
/// values at masked-out cells are placeholders and never participate.
impl PartialEq for ReturnPanel {
    fn eq(&self, other: &Self) -> bool {
        self.periods == other.periods
            && self.names == other.names
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &observed)| !observed || a.to_bits() == b.to_bits())
    }
}

impl ReturnPanel {
    /// Builds a panel, validating every structural invariant: matching
    /// shapes, at least two strictly increasing periods, unique names,
    /// at least one observation per column, finite observed values.
    pub fn new(
        values: Array2<f64>,
        mask: Array2<bool>,
        periods: Vec<String>,
        names: Vec<String>,
    ) -> Result<Self, PanelError> {
        let (d, n) = values.dim();
        let (md, mn) = mask.dim();
        if (d, n) != (md, mn) {
            return Err(PanelError::ShapeMismatch {
                values_rows: d,
                values_cols: n,
                mask_rows: md,
                mask_cols: mn,
            });
        }
        if d < 2 {
            return Err(PanelError::TooFewPeriods { got: d });
        }
        if n == 0 {
            return Err(PanelError::NoStrategies);
        }
        if periods.len() != d {
            return Err(PanelError::PeriodCountMismatch {
                expected: d,
                got: periods.len(),
            });
        }
        if names.len() != n {
            return Err(PanelError::NameCountMismatch {
                expected: n,
                got: names.len(),
            });
        }
        for r in 1..d {
            if period_cmp(&periods[r - 1], &periods[r]) != std::cmp::Ordering::Less {
                return Err(PanelError::PeriodsNotIncreasing {
                    row: r,
                    prev: periods[r - 1].clone(),
                    next: periods[r].clone(),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(PanelError::DuplicateName { name: name.clone() });
            }
        }
        for j in 0..n {
            let mut any = false;
            for r in 0..d {
                if mask[(r, j)] {
                    any = true;
                    if !values[(r, j)].is_finite() {
                        return Err(PanelError::NonFinite { row: r, col: j });
                    }
                }
            }
            if !any {
                return Err(PanelError::EmptyColumn {
                    name: names[j].clone(),
                });
            }
        }
        Ok(Self {
            values,
            mask,
            periods,
            names,
        })
    }

    /// Builds a fully observed panel (mask all true).
    pub fn from_complete(
        values: Array2<f64>,
        periods: Vec<String>,
        names: Vec<String>,
    ) -> Result<Self, PanelError> {
        let mask = Array2::from_elem(values.dim(), true);
        Self::new(values, mask, periods, names)
    }

    /// Number of periods D.
    pub fn n_periods(&self) -> usize {
        self.values.nrows()
    }

    /// Number of strategies N.
    pub fn n_strategies(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn periods(&self) -> &[String] {
        &self.periods
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_values(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn column_mask(&self, j: usize) -> ArrayView1<'_, bool> {
        self.mask.column(j)
    }

    /// Observed cell count for column `j`.
    pub fn observed_count(&self, j: usize) -> usize {
        self.mask.column(j).iter().filter(|&&m| m).count()
    }

    /// True when every cell is observed.
    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// New panel keeping only the columns where `keep` is true, preserving
    /// order.  Errors if nothing is kept.
    pub fn retain_columns(&self, keep: &[bool]) -> Result<Self, PanelError> {
        assert_eq!(keep.len(), self.n_strategies(), "keep mask length");
        let cols: Vec<usize> = (0..self.n_strategies()).filter(|&j| keep[j]).collect();
        if cols.is_empty() {
            return Err(PanelError::NoStrategies);
        }
        let d = self.n_periods();
        let mut values = Array2::zeros((d, cols.len()));
        let mut mask = Array2::from_elem((d, cols.len()), false);
        for (out_j, &j) in cols.iter().enumerate() {
            for r in 0..d {
                values[(r, out_j)] = self.values[(r, j)];
                mask[(r, out_j)] = self.mask[(r, j)];
            }
        }
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        Self::new(values, mask, self.periods.clone(), names)
    }

    /// Splits columns by a minimum-observation filter: returns the panel of
    /// passing columns plus the names of dropped ones.
    pub fn filter_min_obs(&self, min_obs: usize) -> Result<(Self, Vec<String>), PanelError> {
        let keep: Vec<bool> = (0..self.n_strategies())
            .map(|j| self.observed_count(j) >= min_obs)
            .collect();
        let dropped = (0..self.n_strategies())
            .filter(|&j| !keep[j])
            .map(|j| self.names[j].clone())
            .collect();
        let kept = self.retain_columns(&keep)?;
        Ok((kept, dropped))
    }

    /// SHA-256 fingerprint over shape, labels, names, and cell contents.
    /// Stable across runs and platforms; used for provenance manifests.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"return-panel\0");
        h.update((self.n_periods() as u64).to_le_bytes());
        h.update((self.n_strategies() as u64).to_le_bytes());
        for p in &self.periods {
            h.update(p.as_bytes());
            h.update([0u8]);
        }
        for n in &self.names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        for r in 0..self.n_periods() {
            for j in 0..self.n_strategies() {
                if self.mask[(r, j)] {
                    h.update(self.values[(r, j)].to_le_bytes());
                } else {
                    h.update(b"missing!");
                }
            }
        }
        hex_string(&h.finalize())
    }
}

/// A complete D×K panel of factor returns aligned to a return panel's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    values: Array2<f64>,
    periods: Vec<String>,
    names: Vec<String>,
}

impl FactorPanel {
    /// Builds a factor panel; every value must be finite (no missing cells).
    pub fn new(
        values: Array2<f64>,
        periods: Vec<String>,
        names: Vec<String>,
    ) -> Result<Self, PanelError> {
        let (d, k) = values.dim();
        if d < 2 {
            return Err(PanelError::TooFewPeriods { got: d });
        }
        if periods.len() != d {
            return Err(PanelError::PeriodCountMismatch {
                expected: d,
                got: periods.len(),
            });
        }
        if names.len() != k {
            return Err(PanelError::NameCountMismatch {
                expected: k,
                got: names.len(),
            });
        }
        for r in 1..d {
            if period_cmp(&periods[r - 1], &periods[r]) != std::cmp::Ordering::Less {
                return Err(PanelError::PeriodsNotIncreasing {
                    row: r,
                    prev: periods[r - 1].clone(),
                    next: periods[r].clone(),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(PanelError::DuplicateName { name: name.clone() });
            }
        }
        for r in 0..d {
            for c in 0..k {
                if !values[(r, c)].is_finite() {
                    return Err(PanelError::FactorNonFinite { row: r, col: c });
                }
            }
        }
        Ok(Self {
            values,
            periods,
            names,
        })
    }

    pub fn n_periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn periods(&self) -> &[String] {
        &self.periods
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Checks row alignment with a return panel (same period labels).
    pub fn check_aligned(&self, panel: &ReturnPanel) -> Result<(), PanelError> {
        if self.n_periods() != panel.n_periods() {
            return Err(PanelError::FactorPeriodMismatch { row: 0 });
        }
        for (r, (a, b)) in self.periods.iter().zip(panel.periods()).enumerate() {
            if a != b {
                return Err(PanelError::FactorPeriodMismatch { row: r });
            }
        }
        Ok(())
    }

    /// SHA-256 fingerprint (shape, labels, names, values).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"factor-panel\0");
        h.update((self.n_periods() as u64).to_le_bytes());
        h.update((self.n_factors() as u64).to_le_bytes());
        for p in &self.periods {
            h.update(p.as_bytes());
            h.update([0u8]);
        }
        for n in &self.names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        for r in 0..self.n_periods() {
            for c in 0..self.n_factors() {
                h.update(self.values[(r, c)].to_le_bytes());
            }
        }
        hex_string(&h.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Mean, dispersion, and t-statistic of one observed sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStat {
    pub n_obs: usize,
    pub mean: f64,
    pub sd: f64,
    pub t_stat: f64,
}

/// t-statistic of the sample mean: `t = mean / (sd / sqrt(n))` with the
/// unbiased (n−1) standard deviation.  Two-pass computation.
///
/// Errors with [`StatError::TooFewObservations`] below `min_obs` (and always
/// below 2) and [`StatError::DegenerateVariance`] when the sample has no
/// dispersion beyond rounding noise.
pub fn mean_t_stat(sample: &[f64], min_obs: usize) -> Result<MeanStat, StatError> {
    let n = sample.len();
    let needed = min_obs.max(2);
    if n < needed {
        return Err(StatError::TooFewObservations { needed, got: n });
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let mut ss = 0.0;
    let mut max_abs: f64 = 0.0;
    for &v in sample {
        let d = v - mean;
        ss += d * d;
        max_abs = max_abs.max(v.abs());
    }
    if ss <= degenerate_ss_tol(n, max_abs) {
        return Err(StatError::DegenerateVariance);
    }
    let sd = (ss / (nf - 1.0)).sqrt();
    let t_stat = mean / (sd / nf.sqrt());
    Ok(MeanStat {
        n_obs: n,
        mean,
        sd,
        t_stat,
    })
}

/// Threshold below which a residual sum of squares is rounding noise rather
/// than real dispersion: accumulated cancellation error in an n-term sum of
/// magnitude `max_abs` values is of order `eps * max_abs * n` per element.
fn degenerate_ss_tol(n: usize, max_abs: f64) -> f64 {
    let per_elem = f64::EPSILON * max_abs * n as f64 * 16.0;
    n as f64 * per_elem * per_elem
}

/// OLS fit of one column on an intercept plus K factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaFit {
    /// Estimated intercept.
    pub alpha: f64,
    /// Factor slopes, one per factor column.
    pub betas: Vec<f64>,
    /// Homoskedastic standard error of alpha; `None` when the residual
    /// variance is degenerate (exact fit) or degrees of freedom run out.
    pub se_alpha: Option<f64>,
    /// `alpha / se_alpha`, `None` under the same conditions.
    pub t_alpha: Option<f64>,
    pub n_obs: usize,
}

/// OLS of `y` on `[1, x_1..x_K]` where row r of `x` holds the K factor
/// values paired with `y[r]`.  Uses the normal equations with a Cholesky
/// solve; homoskedastic standard errors.
pub fn alpha_regression(y: &[f64], x: &[Vec<f64>], min_obs: usize) -> Result<AlphaFit, StatError> {
    let n = y.len();
    assert_eq!(x.len(), n, "design rows must match observations");
    let k = x.first().map_or(0, |row| row.len());
    let p = k + 1;
    let needed = min_obs.max(p + 1);
    if n < needed {
        return Err(StatError::TooFewObservations { needed, got: n });
    }
    let mut gram = nalgebra::DMatrix::<f64>::zeros(p, p);
    let mut xty = nalgebra::DVector::<f64>::zeros(p);
    let mut yty = 0.0;
    for (r, row) in x.iter().enumerate() {
        assert_eq!(row.len(), k, "ragged design row");
        let yr = y[r];
        yty += yr * yr;
        gram[(0, 0)] += 1.0;
        xty[0] += yr;
        for a in 0..k {
            gram[(0, a + 1)] += row[a];
            xty[a + 1] += row[a] * yr;
            for b in a..k {
                gram[(a + 1, b + 1)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let chol = nalgebra::Cholesky::new(gram.clone()).ok_or(StatError::RankDeficient)?;
    let beta = chol.solve(&xty);
    let inv = chol.inverse();
    let rss = (yty - beta.dot(&xty)).max(0.0);
    let dof = n as f64 - p as f64;
    let max_abs = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (se_alpha, t_alpha) = if dof >= 1.0 && rss > degenerate_ss_tol(n, max_abs) {
        let sigma2 = rss / dof;
        let se = (sigma2 * inv[(0, 0)]).sqrt();
        (Some(se), Some(beta[0] / se))
    } else {
        (None, None)
    };
    Ok(AlphaFit {
        alpha: beta[0],
        betas: beta.iter().skip(1).copied().collect(),
        se_alpha,
        t_alpha,
        n_obs: n,
    })
}

/// Full-sample statistics for one strategy column.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyStat {
    pub name: String,
    pub n_obs: usize,
    /// Mean of observed returns.
    pub mean: f64,
    /// t-statistic of the mean.
    pub t_stat: f64,
    /// OLS alpha against the factor panel, when factors were supplied.
    pub alpha: Option<f64>,
    /// t-statistic of alpha, when factors were supplied and well-defined.
    pub t_alpha: Option<f64>,
    /// Alpha-regression residuals as a length-D series (NaN where the
    /// strategy is unobserved); only populated in factor mode.
    pub residuals: Option<Vec<f64>>,
}

impl StrategyStat {
    /// The (effect, t) pair for the requested kind, if defined.
    pub fn effect_t(&self, kind: EffectKind) -> Option<(f64, f64)> {
        match kind {
            EffectKind::RawMean => Some((self.mean, self.t_stat)),
            EffectKind::FactorAlpha => match (self.alpha, self.t_alpha) {
                (Some(a), Some(t)) => Some((a, t)),
                _ => None,
            },
        }
    }
}

/// Full-sample statistics for every column.  Columns that fail estimation
/// are reported as errors in place, never silently dropped, so the output
/// always has one entry per input column.
pub fn panel_stats(
    panel: &ReturnPanel,
    factors: Option<&FactorPanel>,
    min_obs: usize,
) -> Result<Vec<Result<StrategyStat, StatError>>, PanelError> {
    if let Some(f) = factors {
        f.check_aligned(panel)?;
    }
    let d = panel.n_periods();
    let mut out = Vec::with_capacity(panel.n_strategies());
    let mut sample = Vec::with_capacity(d);
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..panel.n_strategies() {
        sample.clear();
        design.clear();
        let mut rows = Vec::with_capacity(d);
        for r in 0..d {
            if panel.mask()[(r, j)] {
                sample.push(panel.values()[(r, j)]);
                rows.push(r);
                if let Some(f) = factors {
                    design.push(f.values().row(r).to_vec());
                }
            }
        }
        let base = match mean_t_stat(&sample, min_obs) {
            Ok(s) => s,
            Err(e) => {
                out.push(Err(e));
                continue;
            }
        };
        let stat = if let Some(_f) = factors {
            match alpha_regression(&sample, &design, min_obs) {
                Ok(fit) => {
                    let mut resid = vec![f64::NAN; d];
                    for (pos, &r) in rows.iter().enumerate() {
                        let mut fitted = fit.alpha;
                        for (b, x) in fit.betas.iter().zip(&design[pos]) {
                            fitted += b * x;
                        }
                        resid[r] = sample[pos] - fitted;
                    }
                    StrategyStat {
                        name: panel.names()[j].clone(),
                        n_obs: base.n_obs,
                        mean: base.mean,
                        t_stat: base.t_stat,
                        alpha: Some(fit.alpha),
                        t_alpha: fit.t_alpha,
                        residuals: Some(resid),
                    }
                }
                Err(e) => {
                    out.push(Err(e));
                    continue;
                }
            }
        } else {
            StrategyStat {
                name: panel.names()[j].clone(),
                n_obs: base.n_obs,
                mean: base.mean,
                t_stat: base.t_stat,
                alpha: None,
                t_alpha: None,
                residuals: None,
            }
        };
        out.push(Ok(stat));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Hot-path stores: column-major snapshots for bootstrap index draws.
// ---------------------------------------------------------------------------

/// Column-major snapshot of a return panel for resampling loops.
/// Missing observations are encoded as NaN so a gather needs no second
/// mask lookup; `complete` short-circuits the NaN checks entirely.
#[derive(Debug, Clone)]
pub struct ColumnStore {
    d: usize,
    n: usize,
    data: Vec<f64>,
    complete: bool,
}

impl ColumnStore {
    pub fn from_panel(panel: &ReturnPanel) -> Self {
        let d = panel.n_periods();
        let n = panel.n_strategies();
        let mut data = vec![f64::NAN; d * n];
        let mut complete = true;
        for j in 0..n {
            for r in 0..d {
                if panel.mask()[(r, j)] {
                    data[j * d + r] = panel.values()[(r, j)];
                } else {
                    complete = false;
                }
            }
        }
        Self {
            d,
            n,
            data,
            complete,
        }
    }

    pub fn n_periods(&self) -> usize {
        self.d
    }

    pub fn n_strategies(&self) -> usize {
        self.n
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Contiguous column slice (NaN = missing).
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    /// Gathers the observed values of column `j` under an index draw into
    /// `out` (cleared first).
    pub fn gather_observed(&self, j: usize, idx: &[u32], out: &mut Vec<f64>) {
        out.clear();
        let col = self.column(j);
        if self.complete {
            out.extend(idx.iter().map(|&r| col[r as usize]));
        } else {
            for &r in idx {
                let v = col[r as usize];
                if !v.is_nan() {
                    out.push(v);
                }
            }
        }
    }

    /// Mean t-statistic of column `j` under an index draw.
    pub fn mean_t_under_draw(
        &self,
        j: usize,
        idx: &[u32],
        min_obs: usize,
        scratch: &mut Vec<f64>,
    ) -> Result<MeanStat, StatError> {
        self.gather_observed(j, idx, scratch);
        mean_t_stat(scratch, min_obs)
    }
}

/// Column-major snapshot of a factor panel (complete by construction).
#[derive(Debug, Clone)]
pub struct FactorStore {
    d: usize,
    k: usize,
    /// Row-major rows of length k for cheap row gathers.
    rows: Vec<f64>,
}

impl FactorStore {
    pub fn from_panel(factors: &FactorPanel) -> Self {
        let d = factors.n_periods();
        let k = factors.n_factors();
        let mut rows = vec![0.0; d * k];
        for r in 0..d {
            for c in 0..k {
                rows[r * k + c] = factors.values()[(r, c)];
            }
        }
        Self { d, k, rows }
    }

    pub fn n_periods(&self) -> usize {
        self.d
    }

    pub fn n_factors(&self) -> usize {
        self.k
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.rows[r * self.k..(r + 1) * self.k]
    }
}

/// Factor design shared by all fully observed columns under one index draw:
/// the Gram matrix and its inverse are computed once per draw, then each
/// column costs one pass over the drawn rows.
pub struct DrawDesign<'a> {
    factors: &'a FactorStore,
    idx: &'a [u32],
    p: usize,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    inv00: f64,
}

impl<'a> DrawDesign<'a> {
    /// Builds the shared design for an index draw.  Fails with
    /// [`StatError::RankDeficient`] when the drawn factor rows are collinear
    /// and [`StatError::TooFewObservations`] when the draw is shorter than
    /// `K + 2`.
    pub fn new(factors: &'a FactorStore, idx: &'a [u32]) -> Result<Self, StatError> {
        let p = factors.k + 1;
        if idx.len() < p + 1 {
            return Err(StatError::TooFewObservations {
                needed: p + 1,
                got: idx.len(),
            });
        }
        let mut gram = nalgebra::DMatrix::<f64>::zeros(p, p);
        for &r in idx {
            let row = factors.row(r as usize);
            gram[(0, 0)] += 1.0;
            for a in 0..factors.k {
                gram[(0, a + 1)] += row[a];
                for b in a..factors.k {
                    gram[(a + 1, b + 1)] += row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let chol = nalgebra::Cholesky::new(gram).ok_or(StatError::RankDeficient)?;
        let inv00 = chol.inverse()[(0, 0)];
        Ok(Self {
            factors,
            idx,
            p,
            chol,
            inv00,
        })
    }

    /// Alpha and t(alpha) for a fully observed column under this design's
    /// draw.  `col` is the column slice from a [`ColumnStore`].
    pub fn alpha_t(&self, col: &[f64]) -> Result<(f64, f64), StatError> {
        let p = self.p;
        let k = p - 1;
        let mut xty = nalgebra::DVector::<f64>::zeros(p);
        let mut yty = 0.0;
        let mut max_abs: f64 = 0.0;
        for &r in self.idx {
            let y = col[r as usize];
            max_abs = max_abs.max(y.abs());
            yty += y * y;
            xty[0] += y;
            let row = self.factors.row(r as usize);
            for a in 0..k {
                xty[a + 1] += row[a] * y;
            }
        }
        let beta = self.chol.solve(&xty);
        let n = self.idx.len();
        let rss = (yty - beta.dot(&xty)).max(0.0);
        let dof = n as f64 - p as f64;
        if dof < 1.0 || rss <= degenerate_ss_tol(n, max_abs) {
            return Err(StatError::DegenerateVariance);
        }
        let se = (rss / dof * self.inv00).sqrt();
        Ok((beta[0], beta[0] / se))
    }

    /// Alpha and t(alpha) for a column with missing cells: restricts the
    /// draw to rows where the column is observed and solves the per-column
    /// normal equations.
    pub fn alpha_t_masked(&self, col: &[f64], min_obs: usize) -> Result<(f64, f64), StatError> {
        let k = self.p - 1;
        let mut y = Vec::with_capacity(self.idx.len());
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(self.idx.len());
        for &r in self.idx {
            let v = col[r as usize];
            if !v.is_nan() {
                y.push(v);
                x.push(self.factors.row(r as usize).to_vec());
            }
        }
        let _ = k;
        let fit = alpha_regression(&y, &x, min_obs)?;
        match fit.t_alpha {
            Some(t) => Ok((fit.alpha, t)),
            None => Err(StatError::DegenerateVariance),
        }
    }
}

/// Effect and t-statistic of one column under an index draw, dispatching on
/// [`EffectKind`] and column completeness.  `design` must be supplied in
/// factor mode (built once per draw).
pub fn effect_t_under_draw(
    store: &ColumnStore,
    design: Option<&DrawDesign<'_>>,
    j: usize,
    idx: &[u32],
    kind: EffectKind,
    min_obs: usize,
    scratch: &mut Vec<f64>,
) -> Result<(f64, f64), StatError> {
    match kind {
        EffectKind::RawMean => {
            let s = store.mean_t_under_draw(j, idx, min_obs, scratch)?;
            Ok((s.mean, s.t_stat))
        }
        EffectKind::FactorAlpha => {
            let design = design.ok_or(StatError::NoFactors)?;
            let col = store.column(j);
            if store.is_complete() || !col.iter().any(|v| v.is_nan()) {
                design.alpha_t(col)
            } else {
                design.alpha_t_masked(col, min_obs)
            }
        }
    }
}
