//! Realized error rates: contingency tallies, rate definitions, draw-level
//! aggregation, and bootstrap ROC curves.
//!
//! The three headline rates follow the multiple-testing calibration
//! conventions:
//!
//! * `rfdr` — realized false-discovery proportion `FP / (FP + TP)`, the
//!   fraction of declared discoveries that are false; `0` when nothing is
//!   declared (no discoveries means no false discoveries);
//! * `rmiss` — realized miss proportion `FN / (FN + TN)`, the fraction of
//!   non-rejections that hide a true strategy; `0` when everything is
//!   rejected;
//! * `rratio` — the odds `FP / FN` trading lucky discoveries against missed
//!   ones; `0` when there are no misses.
//!
//! Averaging draw-level realized rates in `(outer, inner)` lexical order
//! ([`aggregate`]) yields the Type I / Type II / odds-ratio estimates of the
//! double bootstrap and keeps every run byte-deterministic regardless of
//! thread count.

use crate::inject::TruthLabeledPanel;
use crate::panel::{ColumnStore, DrawDesign, EffectKind, FactorStore, Sidedness, StatError};
use crate::resample::{IndexDraw, ResampleError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RatesError {
    #[error("decision vector length {decisions} does not match truth length {truth}")]
    LengthMismatch { decisions: usize, truth: usize },
    #[error("cannot tally outcomes over empty vectors")]
    Empty,
    #[error("cannot aggregate zero cells")]
    NoCells,
    #[error("ROC curve needs at least one true column; truth labels are all false")]
    NoTrueColumns,
    #[error("cutoff grid must be strictly increasing and finite (violation at position {at})")]
    CutoffGridNotIncreasing { at: usize },
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// 2x2 decision-versus-truth tally for one draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyCounts {
    /// Rejected and truly null (a lucky discovery).
    pub false_pos: u64,
    /// Rejected and truly effective.
    pub true_pos: u64,
    /// Not rejected but truly effective (a miss).
    pub false_neg: u64,
    /// Not rejected and truly null.
    pub true_neg: u64,
}

impl ContingencyCounts {
    pub fn total(&self) -> u64 {
        self.false_pos + self.true_pos + self.false_neg + self.true_neg
    }

    pub fn rejections(&self) -> u64 {
        self.false_pos + self.true_pos
    }
}

/// Tallies decisions against truth labels.
pub fn count_outcomes(decisions: &[bool], truth: &[bool]) -> Result<ContingencyCounts, RatesError> {
    if decisions.len() != truth.len() {
        return Err(RatesError::LengthMismatch {
            decisions: decisions.len(),
            truth: truth.len(),
        });
    }
    if decisions.is_empty() {
        return Err(RatesError::Empty);
    }
    let mut c = ContingencyCounts::default();
    for (&d, &t) in decisions.iter().zip(truth) {
        match (d, t) {
            (true, false) => c.false_pos += 1,
            (true, true) => c.true_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Realized rates of one draw.  See the module docs for the zero-denominator
/// conventions; `tpr`/`fpr` use the usual sensitivity / false-positive-rate
/// definitions with `0` when their denominators vanish.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RealizedRates {
    pub rfdr: f64,
    pub rmiss: f64,
    pub rratio: f64,
    pub tpr: f64,
    pub fpr: f64,
}

pub fn realized_rates(c: &ContingencyCounts) -> RealizedRates {
    let fp = c.false_pos as f64;
    let tp = c.true_pos as f64;
    let fnn = c.false_neg as f64;
    let tn = c.true_neg as f64;
    let rfdr = if fp + tp > 0.0 { fp / (fp + tp) } else { 0.0 };
    let rmiss = if fnn + tn > 0.0 {
        fnn / (fnn + tn)
    } else {
        0.0
    };
    let rratio = if fnn > 0.0 { fp / fnn } else { 0.0 };
    let tpr = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
    let fpr = if fp + tn > 0.0 { fp / (fp + tn) } else { 0.0 };
    RealizedRates {
        rfdr,
        rmiss,
        rratio,
        tpr,
        fpr,
    }
}

/// Draw-count and arithmetic means of realized rates accumulated in the
/// order supplied (callers pass `(outer, inner)` lexical order).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRates {
    /// Mean realized false-discovery rate (Type I error estimate).
    pub type1: f64,
    /// Mean realized miss rate (Type II error estimate).
    pub type2: f64,
    /// Mean realized odds ratio.
    pub oratio: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub draws: usize,
}

/// Plain running means in supplied order — the accumulation order is part of
/// the determinism contract, so no reordering or pairwise tricks.
pub fn aggregate(cells: &[RealizedRates]) -> Result<AggregateRates, RatesError> {
    if cells.is_empty() {
        return Err(RatesError::NoCells);
    }
    let mut s = RealizedRates::default();
    for c in cells {
        s.rfdr += c.rfdr;
        s.rmiss += c.rmiss;
        s.rratio += c.rratio;
        s.tpr += c.tpr;
        s.fpr += c.fpr;
    }
    let n = cells.len() as f64;
    Ok(AggregateRates {
        type1: s.rfdr / n,
        type2: s.rmiss / n,
        oratio: s.rratio / n,
        tpr: s.tpr / n,
        fpr: s.fpr / n,
        draws: cells.len(),
    })
}

/// One point of a bootstrap ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// t-statistic cutoff (`-inf` and `+inf` endpoints included).
    pub cutoff: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Bootstrap ROC curve: per-cutoff (FPR, TPR) averaged over inner draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Points ordered by ascending cutoff, spanning (1,1) down to (0,0).
    pub points: Vec<RocPoint>,
    /// Inner draws that entered the averages.
    pub draws_used: usize,
    /// Draws dropped because the resampled design was unusable.
    pub draws_skipped: usize,
}

/// Sweeps t-statistic cutoffs over inner draws of a truth-labeled panel.
///
/// For each draw, each column's statistic is recomputed on the resampled
/// rows and compared against every cutoff (strictly greater; absolute value
/// when two-sided).  Columns whose statistic is undefined in a draw (e.g. an
/// undersampled short history) count as not rejected.  Analytic endpoints at
/// `-inf` (1,1) and `+inf` (0,0) bound the curve.
pub fn roc_curve(
    labeled: &TruthLabeledPanel,
    draws: &[IndexDraw],
    cutoffs: &[f64],
    sidedness: Sidedness,
    min_obs: usize,
) -> Result<RocCurve, RatesError> {
    if labeled.n_true() == 0 {
        return Err(RatesError::NoTrueColumns);
    }
    validate_grid(cutoffs)?;
    if labeled.kind == EffectKind::FactorAlpha && labeled.factors.is_none() {
        return Err(StatError::NoFactors.into());
    }
    let store = ColumnStore::from_panel(&labeled.panel);
    let fstore = labeled.factors.as_ref().map(FactorStore::from_panel);
    let n = store.n_strategies();
    let d = store.n_periods();
    let mut sum_tpr = vec![0.0f64; cutoffs.len()];
    let mut sum_fpr = vec![0.0f64; cutoffs.len()];
    let mut used = 0usize;
    let mut skipped = 0usize;
    let mut scratch = Vec::with_capacity(d);
    let mut stats = vec![f64::NAN; n];
    for draw in draws {
        if draw.len() != d {
            return Err(ResampleError::LengthMismatch {
                draw_len: draw.len(),
                panel_len: d,
            }
            .into());
        }
        let idx = draw.indices();
        let design = match (labeled.kind, fstore.as_ref()) {
            (EffectKind::FactorAlpha, Some(fs)) => match DrawDesign::new(fs, idx) {
                Ok(dd) => Some(dd),
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            },
            _ => None,
        };
        for (j, slot) in stats.iter_mut().enumerate() {
            *slot = match crate::panel::effect_t_under_draw(
                &store,
                design.as_ref(),
                j,
                idx,
                labeled.kind,
                min_obs,
                &mut scratch,
            ) {
                Ok((_, t)) => t,
                Err(_) => f64::NAN, // undefined: never rejected
            };
        }
        for (ci, &c) in cutoffs.iter().enumerate() {
            let mut counts = ContingencyCounts::default();
            for (j, &t) in stats.iter().enumerate() {
                let reject = decide(t, c, sidedness);
                match (reject, labeled.truth[j]) {
                    (true, false) => counts.false_pos += 1,
                    (true, true) => counts.true_pos += 1,
                    (false, true) => counts.false_neg += 1,
                    (false, false) => counts.true_neg += 1,
                }
            }
            let r = realized_rates(&counts);
            sum_tpr[ci] += r.tpr;
            sum_fpr[ci] += r.fpr;
        }
        used += 1;
    }
    if used == 0 {
        return Err(RatesError::NoCells);
    }
    let mut points = Vec::with_capacity(cutoffs.len() + 2);
    points.push(RocPoint {
        cutoff: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    for (ci, &c) in cutoffs.iter().enumerate() {
        points.push(RocPoint {
            cutoff: c,
            fpr: sum_fpr[ci] / used as f64,
            tpr: sum_tpr[ci] / used as f64,
        });
    }
    points.push(RocPoint {
        cutoff: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    Ok(RocCurve {
        points,
        draws_used: used,
        draws_skipped: skipped,
    })
}

/// Cutoff decision shared by the ROC sweep and fixed-cutoff procedures:
/// strict `t > c`, on |t| when two-sided.  NaN statistics never reject.
pub(crate) fn decide(t: f64, cutoff: f64, sidedness: Sidedness) -> bool {
    match sidedness {
        Sidedness::OneSidedRight => t > cutoff,
        Sidedness::TwoSided => t.abs() > cutoff,
    }
}

fn validate_grid(cutoffs: &[f64]) -> Result<(), RatesError> {
    for (i, w) in cutoffs.windows(2).enumerate() {
        if w[0] >= w[1] {
            return Err(RatesError::CutoffGridNotIncreasing { at: i + 1 });
        }
    }
    for (i, c) in cutoffs.iter().enumerate() {
        if !c.is_finite() {
            return Err(RatesError::CutoffGridNotIncreasing { at: i });
        }
    }
    Ok(())
}
