//! The storage story: a distilled set can be replaced by a tiny per-class
//! statistics bundle, from which sets of any size regenerate on demand.

use d3hr::ddim::build_schedule;
use d3hr::distill::{distill_dataset, regenerate_from_stats, DistillConfig, LossWeights, Mode};
use d3hr::gmm::{default_world, sample_dataset};

fn main() {
    let spec = default_world();
    let schedule = build_schedule(1000, 1e-4, 0.02, 31).unwrap();
    let data = sample_dataset(&spec, 150, 2024).unwrap();

    let config = DistillConfig {
        ipc: 50,
        m: 10000,
        weights: LossWeights::default(),
        mode: Mode::Group,
        seed: 0,
        var_scale: 1.0,
    };
    let (set, bundle) = distill_dataset(&data, &spec, &schedule, &config).unwrap();

    let set_bytes = serde_json::to_vec(&set).unwrap().len();
    let bundle_bytes = serde_json::to_vec(&bundle).unwrap().len();
    println!(
        "distilled set: {} points, {set_bytes} bytes; stats bundle: {bundle_bytes} bytes \
         ({:.1}% of the set)",
        set.points.len(),
        100.0 * bundle_bytes as f64 / set_bytes as f64
    );

    let regen = regenerate_from_stats(&bundle, 50, &spec, 0).unwrap();
    println!(
        "regenerated at the same seed: {}",
        if regen.points == set.points { "bit-identical to the original" } else { "DIFFERS" }
    );

    for ipc in [1usize, 10, 200] {
        let other = regenerate_from_stats(&bundle, ipc, &spec, 1).unwrap();
        println!("regenerated {} points at {ipc} per class", other.points.len());
    }
}
