//! Show that inverted batches look Gaussian at full schedule depth but not
//! at truncated depth: the justification for fitting per-class Gaussians in
//! the noise domain.

use d3hr::ddim::{build_schedule_to, invert, LatentBatch};
use d3hr::eval::normality_report;
use d3hr::gmm::{analytic_epsilon, default_world, sample_dataset};

fn main() {
    let spec = default_world();
    let eps = |z: &[f64], ab: f64, c: usize| analytic_epsilon(&spec, c, z, ab).unwrap();
    let data = sample_dataset(&spec, 1000, 11).unwrap();

    println!("depth  terminal_alpha_bar  |skew|+|ex_kurtosis| (mean over dims and classes)");
    for terminal in [125usize, 250, 500, 750, 1000] {
        let schedule = build_schedule_to(1000, 1e-4, 0.02, 31, terminal).unwrap();
        let mut agg = 0.0;
        for c in 0..spec.num_classes() {
            let pts: Vec<Vec<f64>> =
                data.points.iter().filter(|p| p.y == c).map(|p| p.x.clone()).collect();
            let batch = LatentBatch::new(spec.dimension, pts, c, 0).unwrap();
            let up = invert(&batch, &schedule, &eps).unwrap();
            agg += normality_report(&up).unwrap().aggregate / spec.num_classes() as f64;
        }
        println!("{terminal:5}  {:18.3e}  {agg:.4}", schedule.terminal_alpha_bar());
    }
}
