//! Truth-labeled panels: null construction and bootstrap effect injection.
//!
//! The double bootstrap needs panels whose true/false labels are known.  Two
//! constructions provide them:
//!
//! * [`build_null_panel`] shifts every column so its in-sample effect (mean
//!   return or factor alpha) is exactly zero — a world where nothing works
//!   and every rejection is a false discovery.
//! * [`build_alternative_panel`] first resamples the panel rows under an
//!   outer bootstrap draw, ranks columns by their resampled t-statistics,
//!   and declares the top fraction `p0` "true".  Each selected column of the
//!   *original* panel is then shifted so its in-sample effect equals the
//!   effect it showed in the resampled panel; every other column is shifted
//!   to zero effect.  Because winners are picked on a bootstrap replay, their
//!   injected effects inherit the winner's-curse inflation seen in real
//!   selection exercises, which is exactly what makes the calibration
//!   data-driven rather than parametric.
//!
//! Shifts are constant per column and touch only observed cells, so
//! dispersion, factor loadings, and the missingness pattern are preserved.
//! In one-sided-right testing the injected effects must be strictly
//! positive; a non-positive selected effect raises
//! [`InjectError::PositivityViolation`] rather than silently injecting a
//! "true" strategy that the one-sided test could never find.

use crate::panel::{
    alpha_regression, ColumnStore, DrawDesign, EffectKind, FactorPanel, FactorStore, PanelError,
    ReturnPanel, Sidedness, StatError,
};
use crate::resample::{IndexDraw, ResampleError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InjectError {
    #[error("injected fraction p0 must lie in [0, 1], got {p0}")]
    InvalidFraction { p0: f64 },
    #[error("column {name:?} failed estimation: {source}")]
    ColumnEstimation {
        name: String,
        #[source]
        source: StatError,
    },
    #[error(
        "positivity violation: selected column {name:?} has non-positive effect {effect} \
         under one-sided-right testing"
    )]
    PositivityViolation { name: String, effect: f64 },
    #[error("cannot select {needed} true columns: only {rankable} columns were rankable")]
    TooFewRankable { needed: usize, rankable: usize },
    #[error("no true strategies in labeled panel")]
    NoTrueStrategies,
    #[error("factor-alpha injection requested but no factor panel supplied")]
    NoFactors,
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// How effects are injected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    /// Fraction of columns declared true; `round_half_up(p0 * N)` columns.
    pub p0: f64,
    /// Effect definition: mean return or factor alpha.
    pub kind: EffectKind,
    /// Decision sidedness; one-sided-right enforces effect positivity.
    pub sidedness: Sidedness,
    /// Minimum observations for per-column estimation.
    pub min_obs: usize,
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<(), InjectError> {
        if !(0.0..=1.0).contains(&self.p0) || !self.p0.is_finite() {
            return Err(InjectError::InvalidFraction { p0: self.p0 });
        }
        Ok(())
    }
}

/// A panel with known truth labels and the effects that were injected.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthLabeledPanel {
    /// The shifted panel, on the original rows.
    pub panel: ReturnPanel,
    /// Factor panel aligned to the original rows, when effects are alphas.
    pub factors: Option<FactorPanel>,
    /// `truth[j]`: whether column j carries an injected effect.
    pub truth: Vec<bool>,
    /// Injected per-period effect per column (0 for false columns).
    pub injected_effect: Vec<f64>,
    /// t-statistic each true column showed in the ranking draw (0 for
    /// false columns).
    pub injected_t: Vec<f64>,
    /// Effect definition used for injection and later decisions.
    pub kind: EffectKind,
}

impl TruthLabeledPanel {
    pub fn n_true(&self) -> usize {
        self.truth.iter().filter(|&&t| t).count()
    }
}

/// Full-sample effect (mean or alpha) of each column; the ingredient for
/// constant shifts.  Errors carry the column name.
fn column_effects(
    panel: &ReturnPanel,
    factors: Option<&FactorPanel>,
    kind: EffectKind,
    min_obs: usize,
) -> Result<Vec<f64>, InjectError> {
    let d = panel.n_periods();
    let n = panel.n_strategies();
    let mut effects = Vec::with_capacity(n);
    match kind {
        EffectKind::RawMean => {
            for j in 0..n {
                let mut sum = 0.0;
                let mut cnt = 0usize;
                for r in 0..d {
                    if panel.mask()[(r, j)] {
                        sum += panel.values()[(r, j)];
                        cnt += 1;
                    }
                }
                if cnt < min_obs.max(1) {
                    return Err(InjectError::ColumnEstimation {
                        name: panel.names()[j].clone(),
                        source: StatError::TooFewObservations {
                            needed: min_obs.max(1),
                            got: cnt,
                        },
                    });
                }
                effects.push(sum / cnt as f64);
            }
        }
        EffectKind::FactorAlpha => {
            let f = factors.ok_or(InjectError::NoFactors)?;
            f.check_aligned(panel)?;
            let mut y = Vec::with_capacity(d);
            let mut x: Vec<Vec<f64>> = Vec::with_capacity(d);
            for j in 0..n {
                y.clear();
                x.clear();
                for r in 0..d {
                    if panel.mask()[(r, j)] {
                        y.push(panel.values()[(r, j)]);
                        x.push(f.values().row(r).to_vec());
                    }
                }
                let fit = alpha_regression(&y, &x, min_obs).map_err(|source| {
                    InjectError::ColumnEstimation {
                        name: panel.names()[j].clone(),
                        source,
                    }
                })?;
                effects.push(fit.alpha);
            }
        }
    }
    Ok(effects)
}

/// Applies a constant shift per column to observed cells only.
fn shift_columns(panel: &ReturnPanel, shifts: &[f64]) -> Result<ReturnPanel, PanelError> {
    let d = panel.n_periods();
    let n = panel.n_strategies();
    let mut values = panel.values().clone();
    for j in 0..n {
        let s = shifts[j];
        if s != 0.0 {
            for r in 0..d {
                if panel.mask()[(r, j)] {
                    values[(r, j)] += s;
                }
            }
        }
    }
    ReturnPanel::new(
        values,
        panel.mask().clone(),
        panel.periods().to_vec(),
        panel.names().to_vec(),
    )
}

/// Shifts every column to exactly zero in-sample effect.  The result is a
/// truth-labeled panel with `truth` all false.
pub fn build_null_panel(
    panel: &ReturnPanel,
    factors: Option<&FactorPanel>,
    kind: EffectKind,
    min_obs: usize,
) -> Result<TruthLabeledPanel, InjectError> {
    let effects = column_effects(panel, factors, kind, min_obs)?;
    let shifts: Vec<f64> = effects.iter().map(|e| -e).collect();
    let shifted = shift_columns(panel, &shifts)?;
    let n = panel.n_strategies();
    Ok(TruthLabeledPanel {
        panel: shifted,
        factors: factors.cloned(),
        truth: vec![false; n],
        injected_effect: vec![0.0; n],
        injected_t: vec![0.0; n],
        kind,
    })
}

/// Number of true columns for a fraction: round-half-up of `p0 * N`.
pub fn n_true_for_fraction(p0: f64, n: usize) -> usize {
    (p0 * n as f64).round() as usize
}

/// Ranks columns on an outer bootstrap draw and injects the top `p0`
/// fraction's resampled effects into the original panel (see module docs).
///
/// With `p0 = 0` this degenerates to [`build_null_panel`].
pub fn build_alternative_panel(
    panel: &ReturnPanel,
    factors: Option<&FactorPanel>,
    cfg: &InjectionConfig,
    outer_draw: &IndexDraw,
) -> Result<TruthLabeledPanel, InjectError> {
    cfg.validate()?;
    let n = panel.n_strategies();
    let n_true = n_true_for_fraction(cfg.p0, n);
    if n_true == 0 {
        return build_null_panel(panel, factors, cfg.kind, cfg.min_obs);
    }
    if outer_draw.len() != panel.n_periods() {
        return Err(ResampleError::LengthMismatch {
            draw_len: outer_draw.len(),
            panel_len: panel.n_periods(),
        }
        .into());
    }
    if cfg.kind == EffectKind::FactorAlpha {
        let f = factors.ok_or(InjectError::NoFactors)?;
        f.check_aligned(panel)?;
    }

    // Rank columns by t-statistic on the resampled panel.  Factor rows are
    // resampled simultaneously through the shared draw design, keeping each
    // resampled return matched to its period's factor returns.  Columns
    // whose resampled statistic is undefined are simply unrankable.
    let store = ColumnStore::from_panel(panel);
    let fstore = factors.map(FactorStore::from_panel);
    let idx = outer_draw.indices();
    let design = match (cfg.kind, fstore.as_ref()) {
        (EffectKind::FactorAlpha, Some(fs)) => Some(DrawDesign::new(fs, idx).map_err(
            |source| InjectError::ColumnEstimation {
                name: "<factor design>".into(),
                source,
            },
        )?),
        _ => None,
    };
    let mut scratch = Vec::with_capacity(idx.len());
    let mut ranked: Vec<(usize, f64, f64)> = Vec::with_capacity(n); // (j, effect, t)
    for j in 0..n {
        if let Ok((effect, t)) = crate::panel::effect_t_under_draw(
            &store,
            design.as_ref(),
            j,
            idx,
            cfg.kind,
            cfg.min_obs,
            &mut scratch,
        ) {
            ranked.push((j, effect, t));
        }
    }
    if ranked.len() < n_true {
        return Err(InjectError::TooFewRankable {
            needed: n_true,
            rankable: ranked.len(),
        });
    }
    // Descending by t, ties broken by the lower original column index.
    ranked.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let selected = &ranked[..n_true];
    if cfg.sidedness == Sidedness::OneSidedRight {
        for &(j, effect, _) in selected {
            if effect <= 0.0 {
                return Err(InjectError::PositivityViolation {
                    name: panel.names()[j].clone(),
                    effect,
                });
            }
        }
    }

    let current = column_effects(panel, factors, cfg.kind, cfg.min_obs)?;
    let mut truth = vec![false; n];
    let mut injected_effect = vec![0.0; n];
    let mut injected_t = vec![0.0; n];
    for &(j, effect, t) in selected {
        truth[j] = true;
        injected_effect[j] = effect;
        injected_t[j] = t;
    }
    let shifts: Vec<f64> = (0..n).map(|j| injected_effect[j] - current[j]).collect();
    let shifted = shift_columns(panel, &shifts)?;
    Ok(TruthLabeledPanel {
        panel: shifted,
        factors: factors.cloned(),
        truth,
        injected_effect,
        injected_t,
        kind: cfg.kind,
    })
}

/// Medians of the injected effects and ranking t-statistics among true
/// columns of one labeled panel.  Callers average these across outer draws
/// to describe the injected alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionStats {
    pub median_effect: f64,
    pub median_t: f64,
    pub n_true: usize,
}

pub fn selection_stats(labeled: &TruthLabeledPanel) -> Result<SelectionStats, InjectError> {
    let mut effects: Vec<f64> = Vec::new();
    let mut ts: Vec<f64> = Vec::new();
    for (j, &is_true) in labeled.truth.iter().enumerate() {
        if is_true {
            effects.push(labeled.injected_effect[j]);
            ts.push(labeled.injected_t[j]);
        }
    }
    if effects.is_empty() {
        return Err(InjectError::NoTrueStrategies);
    }
    Ok(SelectionStats {
        median_effect: median(&mut effects),
        median_t: median(&mut ts),
        n_true: ts.len(),
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resample::{draw_indices, BootstrapPlan, Stage};
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn periods(d: usize) -> Vec<String> {
        (1..=d).map(|r| format!("{r:04}")).collect()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("s{j:03}")).collect()
    }

    /// Deterministic noise pattern with mean exactly zero over 8 rows.
    const BASE: [f64; 8] = [0.03, -0.01, 0.02, -0.04, 0.01, 0.02, -0.05, 0.02];

    fn laddered_panel(n: usize) -> ReturnPanel {
        // Column j = zero-mean base pattern + j * 0.01: t increases in j.
        let values = Array2::from_shape_fn((8, n), |(r, j)| BASE[r] + j as f64 * 0.01);
        ReturnPanel::from_complete(values, periods(8), names(n)).unwrap()
    }

    #[test]
    fn null_panel_zeroes_every_mean() {
        let p = laddered_panel(3);
        let null = build_null_panel(&p, None, EffectKind::RawMean, 2).unwrap();
        assert!(null.truth.iter().all(|&t| !t));
        assert_eq!(null.n_true(), 0);
        for j in 0..3 {
            let mean: f64 = null.panel.column_values(j).iter().sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-15, "column {j} mean {mean}");
        }
    }

    #[test]
    fn null_panel_zeroes_every_alpha() {
        let d = 24;
        let mut state = 7u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let fvals = Array2::from_shape_fn((d, 2), |_| next() * 0.05);
        let factors =
            FactorPanel::new(fvals.clone(), periods(d), vec!["f1".into(), "f2".into()]).unwrap();
        let rvals = Array2::from_shape_fn((d, 4), |(r, j)| {
            0.002 * (j as f64 + 1.0) + 0.7 * fvals[(r, 0)] - 0.2 * fvals[(r, 1)] + next() * 0.01
        });
        let panel = ReturnPanel::from_complete(rvals, periods(d), names(4)).unwrap();
        let null = build_null_panel(&panel, Some(&factors), EffectKind::FactorAlpha, 4).unwrap();
        // Re-estimated alphas must vanish to numerical precision.
        for j in 0..4 {
            let y: Vec<f64> = (0..d).map(|r| null.panel.values()[(r, j)]).collect();
            let x: Vec<Vec<f64>> = (0..d).map(|r| fvals.row(r).to_vec()).collect();
            let fit = alpha_regression(&y, &x, 2).unwrap();
            assert!(fit.alpha.abs() < 1e-12, "column {j} alpha {}", fit.alpha);
        }
    }

    #[test]
    fn zero_fraction_equals_null_panel() {
        let p = laddered_panel(5);
        let cfg = InjectionConfig {
            p0: 0.0,
            kind: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 2,
        };
        let draw = draw_indices(&BootstrapPlan::new(9, 1, 1, 8), Stage::Outer, 0, 0);
        let alt = build_alternative_panel(&p, None, &cfg, &draw).unwrap();
        let null = build_null_panel(&p, None, EffectKind::RawMean, 2).unwrap();
        assert_eq!(alt, null);
    }

    #[test]
    fn identity_draw_selects_top_columns_and_keeps_their_means() {
        let p = laddered_panel(10);
        let cfg = InjectionConfig {
            p0: 0.2,
            kind: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 2,
        };
        let idd = IndexDraw::identity(8);
        let alt = build_alternative_panel(&p, None, &cfg, &idd).unwrap();
        // t increases with the column index, so columns 8 and 9 are true.
        let expect_true: Vec<bool> = (0..10).map(|j| j >= 8).collect();
        assert_eq!(alt.truth, expect_true);
        // Selected columns' injected effects equal their original means and
        // their data are bitwise unchanged (shift is exactly zero).
        for j in 8..10 {
            assert_relative_eq!(alt.injected_effect[j], j as f64 * 0.01, epsilon = 1e-14);
            for r in 0..8 {
                assert_eq!(alt.panel.values()[(r, j)], p.values()[(r, j)]);
            }
        }
        // Unselected columns are shifted to zero mean.
        for j in 0..8 {
            let mean: f64 = alt.panel.column_values(j).iter().sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-15);
            assert_eq!(alt.injected_effect[j], 0.0);
        }
    }

    #[test]
    fn ties_break_toward_lower_column_index() {
        // Columns 0 and 1 are bitwise identical; only one slot is available.
        let mut values = Array2::zeros((8, 3));
        for r in 0..8 {
            values[(r, 0)] = BASE[r] + 0.02;
            values[(r, 1)] = BASE[r] + 0.02;
            values[(r, 2)] = BASE[r] + 0.001;
        }
        let p = ReturnPanel::from_complete(values, periods(8), names(3)).unwrap();
        let cfg = InjectionConfig {
            p0: 0.34, // round(1.02) = 1 true column
            kind: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 2,
        };
        let alt = build_alternative_panel(&p, None, &cfg, &IndexDraw::identity(8)).unwrap();
        assert_eq!(alt.truth, vec![true, false, false]);
    }

    #[test]
    fn fraction_rounds_half_up() {
        assert_eq!(n_true_for_fraction(0.25, 10), 3); // 2.5 -> 3
        assert_eq!(n_true_for_fraction(0.05, 10), 1); // 0.5 -> 1
        assert_eq!(n_true_for_fraction(0.04, 10), 0);
        assert_eq!(n_true_for_fraction(0.10, 200), 20);
        assert_eq!(n_true_for_fraction(1.0, 7), 7);
    }

    #[test]
    fn invalid_fraction_is_rejected() {
        let p = laddered_panel(3);
        for p0 in [-0.1, 1.5, f64::NAN] {
            let cfg = InjectionConfig {
                p0,
                kind: EffectKind::RawMean,
                sidedness: Sidedness::TwoSided,
                min_obs: 2,
            };
            let err = build_alternative_panel(&p, None, &cfg, &IndexDraw::identity(8)).unwrap_err();
            assert!(matches!(err, InjectError::InvalidFraction { .. }));
        }
    }

    #[test]
    fn positivity_violation_surfaces_by_name() {
        // Every column has a firmly negative mean; one-sided-right injection
        // must refuse to label any of them true.
        let values = Array2::from_shape_fn((8, 4), |(r, j)| BASE[r] * 0.1 - 0.05 - j as f64 * 0.01);
        let p = ReturnPanel::from_complete(values, periods(8), names(4)).unwrap();
        let cfg = InjectionConfig {
            p0: 0.25,
            kind: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 2,
        };
        let err = build_alternative_panel(&p, None, &cfg, &IndexDraw::identity(8)).unwrap_err();
        match err {
            InjectError::PositivityViolation { name, effect } => {
                assert_eq!(name, "s000");
                assert!(effect < 0.0);
            }
            other => panic!("expected positivity violation, got {other:?}"),
        }
        // The same selection is fine two-sided.
        let cfg2 = InjectionConfig {
            sidedness: Sidedness::TwoSided,
            ..cfg
        };
        assert!(build_alternative_panel(&p, None, &cfg2, &IndexDraw::identity(8)).is_ok());
    }

    #[test]
    fn shifts_touch_only_observed_cells() {
        let mut values = Array2::from_shape_fn((8, 2), |(r, j)| BASE[r] + j as f64 * 0.01);
        let mut mask = Array2::from_elem((8, 2), true);
        mask[(3, 0)] = false;
        values[(3, 0)] = 99.0; // sentinel under the mask
        let p = ReturnPanel::new(values, mask, periods(8), names(2)).unwrap();
        let null = build_null_panel(&p, None, EffectKind::RawMean, 2).unwrap();
        assert_eq!(null.panel.values()[(3, 0)], 99.0);
        let obs_mean: f64 = (0..8)
            .filter(|&r| r != 3)
            .map(|r| null.panel.values()[(r, 0)])
            .sum::<f64>()
            / 7.0;
        assert!(obs_mean.abs() < 1e-15);
    }

    #[test]
    fn estimation_failures_carry_the_column_name() {
        let mut mask = Array2::from_elem((8, 2), true);
        for r in 1..8 {
            mask[(r, 1)] = false;
        }
        let values = Array2::from_shape_fn((8, 2), |(r, _)| BASE[r] + 0.01);
        let p = ReturnPanel::new(values, mask, periods(8), names(2)).unwrap();
        let err = build_null_panel(&p, None, EffectKind::RawMean, 4).unwrap_err();
        match err {
            InjectError::ColumnEstimation { name, source } => {
                assert_eq!(name, "s001");
                assert_eq!(source, StatError::TooFewObservations { needed: 4, got: 1 });
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selection_stats_takes_medians_over_true_columns() {
        let p = laddered_panel(10);
        let cfg = InjectionConfig {
            p0: 0.3,
            kind: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 2,
        };
        let alt = build_alternative_panel(&p, None, &cfg, &IndexDraw::identity(8)).unwrap();
        let stats = selection_stats(&alt).unwrap();
        assert_eq!(stats.n_true, 3);
        // True columns are 7, 8, 9 with means 0.07, 0.08, 0.09.
        assert_relative_eq!(stats.median_effect, 0.08, epsilon = 1e-14);
        // Null panels have no true columns.
        let null = build_null_panel(&p, None, EffectKind::RawMean, 2).unwrap();
        assert_eq!(
            selection_stats(&null).unwrap_err(),
            InjectError::NoTrueStrategies
        );
    }

    #[test]
    fn selection_stats_singleton_median_is_the_value() {
        let p = laddered_panel(10);
        let cfg = InjectionConfig {
            p0: 0.1,
            kind: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 2,
        };
        let alt = build_alternative_panel(&p, None, &cfg, &IndexDraw::identity(8)).unwrap();
        let stats = selection_stats(&alt).unwrap();
        assert_eq!(stats.n_true, 1);
        assert_relative_eq!(stats.median_effect, 0.09, epsilon = 1e-14);
    }

    #[test]
    fn winners_curse_inflates_selected_noise_effects() {
        // Pure-noise panel: selected effects are positive (and t large) in
        // every draw purely through selection.
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let d = 60;
        let n = 40;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let values = Array2::from_shape_fn((d, n), |_| {
            0.03 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let p = ReturnPanel::from_complete(values, periods(d), names(n)).unwrap();
        let cfg = InjectionConfig {
            p0: 0.1,
            kind: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 2,
        };
        let plan = BootstrapPlan::new(11, 20, 1, d);
        for i in 0..20 {
            let draw = draw_indices(&plan, Stage::Outer, i, 0);
            let alt = build_alternative_panel(&p, None, &cfg, &draw).unwrap();
            let stats = selection_stats(&alt).unwrap();
            assert_eq!(stats.n_true, 4);
            assert!(stats.median_effect > 0.0);
            assert!(stats.median_t > 0.0);
        }
    }

    #[test]
    fn null_panel_bootstrap_t_stats_center_on_zero() {
        // 1,000 bootstraps of a null panel: the grand mean of per-draw
        // cross-sectional average t-statistics sits near zero.
        let d = 60;
        let n = 50;
        let mut state = 123u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let values = Array2::from_shape_fn((d, n), |_| next() * 0.04 + 0.002);
        let p = ReturnPanel::from_complete(values, periods(d), names(n)).unwrap();
        let null = build_null_panel(&p, None, EffectKind::RawMean, 2).unwrap();
        let store = ColumnStore::from_panel(&null.panel);
        let plan = BootstrapPlan::new(5, 1, 1000, d);
        let mut grand = 0.0;
        let mut scratch = Vec::new();
        for j in 0..1000u64 {
            let draw = draw_indices(&plan, Stage::Inner, 0, j);
            let mut cross = 0.0;
            for col in 0..n {
                cross += store
                    .mean_t_under_draw(col, draw.indices(), 2, &mut scratch)
                    .unwrap()
                    .t_stat;
            }
            grand += cross / n as f64;
        }
        grand /= 1000.0;
        assert!(grand.abs() < 0.03, "grand mean t {grand}");
    }
}
