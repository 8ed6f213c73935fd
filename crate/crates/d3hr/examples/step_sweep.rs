//! Trade off inversion depth against quality: fewer steps are cheaper but
//! leave the noise-domain batch less Gaussian and the round trip lossier.

use d3hr::eval::{timestep_sweep, EvalConfig, TrainConfig};
use d3hr::distill::LossWeights;
use d3hr::gmm::{default_world, sample_dataset};

fn main() {
    let spec = default_world();
    let data = sample_dataset(&spec, 150, 2024).unwrap();
    let test = sample_dataset(&spec, 500, 2025).unwrap();
    let config = EvalConfig {
        ipc: 10,
        m: 1000,
        weights: LossWeights::default(),
        train: TrainConfig::default(),
        seed: 0,
    };
    let rows = timestep_sweep(&data, &test, &spec, &[4, 8, 16, 31, 64], &config).unwrap();
    println!("steps  normality  median_round_trip  accuracy");
    for r in rows {
        println!(
            "{:5}  {:9.4}  {:17.3e}  {:.4}",
            r.num_steps, r.normality, r.median_round_trip_error, r.accuracy
        );
    }
}
