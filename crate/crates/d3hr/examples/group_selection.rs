//! Statistic-guided group sampling: draw many candidate subsets from the
//! fitted noise-domain Gaussian and keep the one whose moments match best.
//! Prints how the selected loss falls as the candidate pool grows.

use d3hr::ddim::{build_schedule, invert, LatentBatch};
use d3hr::distill::{fit_class_stats, group_sample, LossWeights};
use d3hr::gmm::{analytic_epsilon, default_world, sample_dataset};

fn main() {
    let spec = default_world();
    let eps = |z: &[f64], ab: f64, c: usize| analytic_epsilon(&spec, c, z, ab).unwrap();
    let schedule = build_schedule(1000, 1e-4, 0.02, 31).unwrap();
    let data = sample_dataset(&spec, 200, 5).unwrap();

    let pts: Vec<Vec<f64>> =
        data.points.iter().filter(|p| p.y == 0).map(|p| p.x.clone()).collect();
    let batch = LatentBatch::new(spec.dimension, pts, 0, 0).unwrap();
    let stats = fit_class_stats(&invert(&batch, &schedule, &eps).unwrap()).unwrap();

    println!("pool_size  selected_total_loss  (mean, spread, skew terms)");
    for m in [1usize, 10, 100, 1000, 10000] {
        let best = group_sample(&stats, 10, m, LossWeights::default(), 0).unwrap();
        let l = &best.loss;
        println!(
            "{m:9}  {:19.6e}  ({:.2e}, {:.2e}, {:.2e})",
            l.total, l.l_mu, l.l_sigma, l.l_skew
        );
    }
}
