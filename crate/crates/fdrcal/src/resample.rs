//! Deterministic bootstrap index draws keyed by coordinates, not call order.
//!
//! Every random stream is a pure function of `(master_seed, stage, i, j)`:
//! the four values are packed into a 32-byte ChaCha key, so any draw can be
//! regenerated in isolation — from any thread, in any order — and a whole
//! study is byte-reproducible from its master seed alone.  Nested studies
//! derive child plans through [`BootstrapPlan::child_plan`], which mixes the
//! same coordinates into a fresh master seed, keeping every level of an
//! outer/inner/inner-inner hierarchy on provably disjoint streams.
//!
//! An [`IndexDraw`] is a with-replacement row resampling: `indices[r]` names
//! the source row that lands at position `r`.  [`apply_draw`] gathers values
//! and mask alike, so missing observations resample with their rows and a
//! drawn column may hold fewer observations than the original — that
//! undersampling is intentional and mirrors how missing data behave in
//! stationary-bootstrap practice.

use crate::panel::{FactorPanel, PanelError, ReturnPanel};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ResampleError {
    #[error("draw length {draw_len} does not match panel period count {panel_len}")]
    LengthMismatch { draw_len: usize, panel_len: usize },
    #[error("draw index {index} out of range for {len} periods")]
    IndexOutOfRange { index: u32, len: usize },
    #[error("draw must contain at least one index")]
    EmptyDraw,
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Named random-stream stages.  Each stage occupies its own key subspace;
/// the explicit discriminants are part of the on-disk reproducibility
/// contract and must never be renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u64)]
pub enum Stage {
    /// Outer ranking/injection draws of the double bootstrap.
    Outer = 1,
    /// Inner evaluation draws of the double bootstrap.
    Inner = 2,
    /// Perturbation draws for joint-test error rates and study drivers.
    Perturb = 3,
    /// Null-distribution draws inside a joint bootstrap test.
    JointNull = 4,
    /// Population construction in simulation studies.
    Population = 5,
    /// Strategy-subset selection (subsampled stepdown procedures).
    Subsample = 6,
    /// Bootstrap draws inside a stepdown procedure.
    StepdownNull = 7,
    /// Synthetic data generation.
    Synthetic = 8,
}

impl Stage {
    pub fn code(self) -> u64 {
        self as u64
    }
}

/// Sizes and seed of a bootstrap study: `outer_draws` (I) ranking draws,
/// `inner_draws` (J) evaluation draws per outer draw, over `n_periods` (D)
/// rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub master_seed: u64,
    pub outer_draws: usize,
    pub inner_draws: usize,
    pub n_periods: usize,
}

impl BootstrapPlan {
    pub fn new(master_seed: u64, outer_draws: usize, inner_draws: usize, n_periods: usize) -> Self {
        Self {
            master_seed,
            outer_draws,
            inner_draws,
            n_periods,
        }
    }

    /// Derives a child plan whose streams are disjoint from this plan's and
    /// from every other child's, keyed by `(stage, i, j)`.
    pub fn child_plan(
        &self,
        stage: Stage,
        i: u64,
        j: u64,
        outer_draws: usize,
        inner_draws: usize,
        n_periods: usize,
    ) -> BootstrapPlan {
        BootstrapPlan {
            master_seed: child_seed(self.master_seed, stage, i, j),
            outer_draws,
            inner_draws,
            n_periods,
        }
    }
}

/// ChaCha stream for coordinates `(master_seed, stage, i, j)`, obtained by
/// packing all four into the 32-byte key.
pub fn stream_rng(master_seed: u64, stage: Stage, i: u64, j: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&stage.code().to_le_bytes());
    key[16..24].copy_from_slice(&i.to_le_bytes());
    key[24..32].copy_from_slice(&j.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Derives a 64-bit child seed from coordinates via a SplitMix64 chain.
/// Used when a nested computation needs its own master seed.
pub fn child_seed(master_seed: u64, stage: Stage, i: u64, j: u64) -> u64 {
    let mut s = master_seed;
    for v in [stage.code(), i, j] {
        s = splitmix64(s ^ v.wrapping_mul(0x9e3779b97f4a7c15));
    }
    s
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// One with-replacement row draw: position `r` of the resampled panel takes
/// row `indices[r]` of the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexDraw {
    indices: Vec<u32>,
}

impl IndexDraw {
    /// Wraps explicit indices, validating the range.
    pub fn from_indices(indices: Vec<u32>, n_periods: usize) -> Result<Self, ResampleError> {
        if indices.is_empty() {
            return Err(ResampleError::EmptyDraw);
        }
        for &ix in &indices {
            if ix as usize >= n_periods {
                return Err(ResampleError::IndexOutOfRange {
                    index: ix,
                    len: n_periods,
                });
            }
        }
        Ok(Self { indices })
    }

    /// The identity draw of length `d` (every row maps to itself).
    pub fn identity(d: usize) -> Self {
        Self {
            indices: (0..d as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// The i.i.d. row draw for coordinates `(stage, i, j)` under a plan:
/// `plan.n_periods` indices sampled uniformly with replacement.
pub fn draw_indices(plan: &BootstrapPlan, stage: Stage, i: u64, j: u64) -> IndexDraw {
    let d = plan.n_periods;
    assert!(d > 0, "plan must cover at least one period");
    assert!(d <= u32::MAX as usize, "period count exceeds index width");
    let mut rng = stream_rng(plan.master_seed, stage, i, j);
    let indices = (0..d).map(|_| rng.random_range(0..d as u32)).collect();
    IndexDraw { indices }
}

/// Composition `(a ∘ b)[r] = a[b[r]]`: applying `a` then `b` equals applying
/// `a ∘ b` once.
pub fn compose(a: &IndexDraw, b: &IndexDraw) -> IndexDraw {
    let indices = b.indices.iter().map(|&r| a.indices[r as usize]).collect();
    IndexDraw { indices }
}

/// Gathers panel rows under a draw: output row `r` is input row
/// `indices[r]`, for values and mask alike.  Period labels are kept
/// positionally — row `r` of the output is pseudo-period `r` — so label
/// ordering invariants continue to hold on resampled panels.
pub fn apply_draw(panel: &ReturnPanel, draw: &IndexDraw) -> Result<ReturnPanel, ResampleError> {
    let d = panel.n_periods();
    if draw.len() != d {
        return Err(ResampleError::LengthMismatch {
            draw_len: draw.len(),
            panel_len: d,
        });
    }
    let n = panel.n_strategies();
    let mut values = Array2::zeros((d, n));
    let mut mask = Array2::from_elem((d, n), false);
    for (r, &src) in draw.indices.iter().enumerate() {
        let src = src as usize;
        if src >= d {
            return Err(ResampleError::IndexOutOfRange {
                index: src as u32,
                len: d,
            });
        }
        for j in 0..n {
            values[(r, j)] = panel.values()[(src, j)];
            mask[(r, j)] = panel.mask()[(src, j)];
        }
    }
    // A sufficiently unlucky draw could leave some column with zero
    // observations; surface that through the panel invariant rather than
    // panicking.
    Ok(ReturnPanel::new(
        values,
        mask,
        panel.periods().to_vec(),
        panel.names().to_vec(),
    )?)
}

/// Gathers factor rows under the same draw, keeping factors aligned with a
/// jointly resampled return panel.
pub fn apply_draw_factors(
    factors: &FactorPanel,
    draw: &IndexDraw,
) -> Result<FactorPanel, ResampleError> {
    let d = factors.n_periods();
    if draw.len() != d {
        return Err(ResampleError::LengthMismatch {
            draw_len: draw.len(),
            panel_len: d,
        });
    }
    let k = factors.n_factors();
    let mut values = Array2::zeros((d, k));
    for (r, &src) in draw.indices.iter().enumerate() {
        for c in 0..k {
            values[(r, c)] = factors.values()[(src as usize, c)];
        }
    }
    Ok(FactorPanel::new(
        values,
        factors.periods().to_vec(),
        factors.names().to_vec(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn plan(d: usize) -> BootstrapPlan {
        BootstrapPlan::new(42, 4, 8, d)
    }

    fn small_panel() -> ReturnPanel {
        let v = array![[0.1, 1.0], [0.2, 2.0], [0.3, 3.0], [0.4, 4.0]];
        ReturnPanel::from_complete(
            v,
            (1..=4).map(|r| format!("{r:04}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn identical_coordinates_reproduce_identical_draws() {
        let p = plan(64);
        let a = draw_indices(&p, Stage::Inner, 3, 17);
        let b = draw_indices(&p, Stage::Inner, 3, 17);
        assert_eq!(a, b);
        let c = draw_indices(&p, Stage::Inner, 3, 18);
        assert_ne!(a, c);
        let d = draw_indices(&p, Stage::Outer, 3, 17);
        assert_ne!(a, d);
        let e = draw_indices(&BootstrapPlan::new(43, 4, 8, 64), Stage::Inner, 3, 17);
        assert_ne!(a, e);
    }

    #[test]
    fn single_period_plan_draws_only_zero() {
        let p = BootstrapPlan::new(7, 1, 1, 1);
        let d = draw_indices(&p, Stage::Outer, 0, 0);
        assert_eq!(d.indices(), &[0]);
    }

    #[test]
    fn draw_frequencies_are_uniform() {
        // 10,000 draws of length 10: each index count is Binomial(100000,
        // 0.1); require every count within 5 sigma and the chi-square
        // goodness-of-fit statistic below the 0.9999 quantile of chi2(9).
        let p = BootstrapPlan::new(2024, 10_000, 1, 10);
        let mut counts = [0u64; 10];
        for i in 0..10_000u64 {
            for &ix in draw_indices(&p, Stage::Outer, i, 0).indices() {
                counts[ix as usize] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        assert_eq!(total, 100_000);
        let expected = 10_000.0;
        let sigma = (100_000.0f64 * 0.1 * 0.9).sqrt();
        let mut chi2 = 0.0;
        for &c in &counts {
            assert!(
                (c as f64 - expected).abs() < 5.0 * sigma,
                "index count {c} outside 5 sigma of {expected}"
            );
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        let crit = ChiSquared::new(9.0).unwrap().inverse_cdf(0.9999);
        assert!(chi2 < crit, "chi2 {chi2} >= critical {crit}");
    }

    #[test]
    fn identity_draw_reproduces_panel() {
        let panel = small_panel();
        let out = apply_draw(&panel, &IndexDraw::identity(4)).unwrap();
        assert_eq!(out, panel);
    }

    #[test]
    fn constant_draw_repeats_one_row() {
        let panel = small_panel();
        let d = IndexDraw::from_indices(vec![2, 2, 2, 2], 4).unwrap();
        let out = apply_draw(&panel, &d).unwrap();
        for r in 0..4 {
            assert_eq!(out.values()[(r, 0)], 0.3);
            assert_eq!(out.values()[(r, 1)], 3.0);
        }
    }

    #[test]
    fn composition_law_holds_exactly() {
        let panel = small_panel();
        let a = IndexDraw::from_indices(vec![1, 3, 0, 2], 4).unwrap();
        let b = IndexDraw::from_indices(vec![2, 2, 1, 0], 4).unwrap();
        let lhs = apply_draw(&apply_draw(&panel, &a).unwrap(), &b).unwrap();
        let rhs = apply_draw(&panel, &compose(&a, &b)).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn composition_law_holds_for_random_draws() {
        let p = plan(4);
        let panel = small_panel();
        for i in 0..16 {
            let a = draw_indices(&p, Stage::Outer, i, 0);
            let b = draw_indices(&p, Stage::Inner, i, 1);
            let lhs = apply_draw(&apply_draw(&panel, &a).unwrap(), &b).unwrap();
            let rhs = apply_draw(&panel, &compose(&a, &b)).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn apply_draw_rejects_length_mismatch() {
        let panel = small_panel();
        let d = IndexDraw::from_indices(vec![0, 1], 4).unwrap();
        assert_eq!(
            apply_draw(&panel, &d).unwrap_err(),
            ResampleError::LengthMismatch {
                draw_len: 2,
                panel_len: 4
            }
        );
    }

    #[test]
    fn from_indices_validates_range_and_emptiness() {
        assert!(matches!(
            IndexDraw::from_indices(vec![4], 4),
            Err(ResampleError::IndexOutOfRange { index: 4, len: 4 })
        ));
        assert!(matches!(
            IndexDraw::from_indices(vec![], 4),
            Err(ResampleError::EmptyDraw)
        ));
    }

    #[test]
    fn draws_resample_mask_with_values() {
        let v = array![[0.1, 9.0], [0.2, 0.5], [0.3, 0.6]];
        let mut m = Array2::from_elem((3, 2), true);
        m[(0, 1)] = false;
        let panel = ReturnPanel::new(
            v,
            m,
            (1..=3).map(|r| format!("{r:04}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let d = IndexDraw::from_indices(vec![0, 0, 1], 3).unwrap();
        let out = apply_draw(&panel, &d).unwrap();
        assert!(!out.mask()[(0, 1)]);
        assert!(!out.mask()[(1, 1)]);
        assert!(out.mask()[(2, 1)]);
        assert_eq!(out.observed_count(1), 1);
    }

    #[test]
    fn child_plans_decorrelate_nested_streams() {
        let p = plan(32);
        let c1 = p.child_plan(Stage::StepdownNull, 0, 0, 2, 2, 32);
        let c2 = p.child_plan(Stage::StepdownNull, 0, 1, 2, 2, 32);
        assert_ne!(c1.master_seed, c2.master_seed);
        assert_ne!(c1.master_seed, p.master_seed);
        let d1 = draw_indices(&c1, Stage::Inner, 0, 0);
        let d2 = draw_indices(&c2, Stage::Inner, 0, 0);
        assert_ne!(d1, d2);
    }
}
