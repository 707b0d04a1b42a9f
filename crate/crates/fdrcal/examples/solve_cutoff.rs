//! Solves for the data-calibrated t-statistic cutoff: the grid point whose
//! bootstrap-calibrated Type I rate is the largest that stays at or below
//! the target (the most powerful admissible choice).
//!
//! A fixed textbook threshold like t > 2 ignores both the cross-section
//! size and the correlation structure; the solved cutoff adapts to the
//! panel at hand.
//!
//! Run with: `cargo run --release --example solve_cutoff`

use fdrcal::{solve_cutoff, BootstrapPlan, CalibrationRequest, ReturnPanel};
use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let (d, n) = (240, 80);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let values = Array2::from_shape_fn((d, n), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.02 * z
    });
    let panel = ReturnPanel::from_complete(
        values,
        (1..=d).map(|r| format!("{r:04}")).collect(),
        (0..n).map(|j| format!("strat_{j:03}")).collect(),
    )
    .expect("valid panel");

    let mut req = CalibrationRequest::new(&panel, BootstrapPlan::new(31, 10, 200, d));
    req.cutoff_grid = (15..=40).map(|k| k as f64 / 10.0).collect(); // 1.5 .. 4.0

    for (p0, target) in [(0.05, 0.05), (0.10, 0.05), (0.10, 0.10)] {
        let solution = solve_cutoff(&req, p0, target).expect("solver runs");
        println!(
            "p0 = {:>4.0}%  target TYPE1 <= {:>4.1}%  ->  t* = {:.1}   \
             achieved TYPE1 = {:.4}, TYPE2 = {:.4}{}",
            p0 * 100.0,
            target * 100.0,
            solution.t_star,
            solution.achieved_type1,
            solution.achieved_type2,
            if solution.unattained {
                "  (unattained: grid maximum reported)"
            } else {
                ""
            }
        );
    }
    println!(
        "\nAll cutoffs share the same bootstrap draws, so the comparison\n\
         across grid points is a common-random-number comparison: the\n\
         selected cutoff is admissible against every alternative on the\n\
         same draws, not against a noisy re-simulation."
    );
}
