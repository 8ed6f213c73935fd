//! The full pipeline: distill a dataset down to 10 points per class with
//! each generation mode, train a linear classifier on the result, and
//! compare held-out accuracy against training on the full data.

use d3hr::ddim::build_schedule;
use d3hr::distill::{distill_dataset, DistillConfig, LossWeights, Mode};
use d3hr::eval::{evaluate_classifier, train_classifier, TrainConfig};
use d3hr::gmm::{default_world, sample_dataset};

fn main() {
    let spec = default_world();
    let schedule = build_schedule(1000, 1e-4, 0.02, 31).unwrap();
    let data = sample_dataset(&spec, 150, 2024).unwrap();
    let test = sample_dataset(&spec, 1000, 2025).unwrap();

    let full_model = train_classifier(&data, TrainConfig::default()).unwrap();
    let full_acc = evaluate_classifier(&full_model, &test).unwrap();
    println!("full data ({} points): accuracy {full_acc:.4}", data.points.len());

    for mode in [Mode::Ddpm, Mode::Random, Mode::Group] {
        let mut accs = Vec::new();
        for seed in 0..5u64 {
            let config = DistillConfig {
                ipc: 10,
                m: if mode == Mode::Group { 10000 } else { 1 },
                weights: LossWeights::default(),
                mode,
                seed,
                var_scale: 1.0,
            };
            let (set, _) = distill_dataset(&data, &spec, &schedule, &config).unwrap();
            let train = set.as_dataset(spec.digest());
            let model = train_classifier(&train, TrainConfig::default()).unwrap();
            accs.push(evaluate_classifier(&model, &test).unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / accs.len() as f64)
            .sqrt();
        println!("{mode} (40 points, 5 seeds): accuracy {mean:.4} +/- {std:.4}");
    }
}
