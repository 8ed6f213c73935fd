//! Map data to the noise domain and back, showing how reconstruction error
//! shrinks as the number of inversion steps grows.

use d3hr::ddim::{build_schedule, invert, sample, LatentBatch};
use d3hr::gmm::{analytic_epsilon, default_world, sample_dataset};

fn main() {
    let spec = default_world();
    let eps = |z: &[f64], ab: f64, c: usize| analytic_epsilon(&spec, c, z, ab).unwrap();
    let data = sample_dataset(&spec, 100, 7).unwrap();

    println!("steps  median_rel_error  worst_rel_error");
    for k in [4usize, 8, 16, 31, 64, 128] {
        let schedule = build_schedule(1000, 1e-4, 0.02, k).unwrap();
        let mut errs = Vec::new();
        for c in 0..spec.num_classes() {
            let pts: Vec<Vec<f64>> =
                data.points.iter().filter(|p| p.y == c).map(|p| p.x.clone()).collect();
            let batch = LatentBatch::new(spec.dimension, pts.clone(), c, 0).unwrap();
            let up = invert(&batch, &schedule, &eps).unwrap();
            let down = sample(&up, &schedule, &eps).unwrap();
            for (orig, got) in pts.iter().zip(&down.latents) {
                let num: f64 =
                    orig.iter().zip(got).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let den: f64 = orig.iter().map(|a| a * a).sum::<f64>().sqrt();
                errs.push(num / den.max(1e-12));
            }
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("{k:5}  {:16.3e}  {:15.3e}", errs[errs.len() / 2], errs.last().unwrap());
    }
}
