//! Sample a dataset from the built-in mixture world and print per-class
//! summary statistics.

use d3hr::gmm::{default_world, sample_dataset};

fn main() {
    let spec = default_world();
    println!(
        "world: {} dims, {} classes, {} components each (digest {})",
        spec.dimension,
        spec.num_classes(),
        spec.classes[0].len(),
        &spec.digest()[..12]
    );

    let data = sample_dataset(&spec, 500, 42).unwrap();
    for c in 0..spec.num_classes() {
        let pts: Vec<&Vec<f64>> = data.points.iter().filter(|p| p.y == c).map(|p| &p.x).collect();
        let n = pts.len() as f64;
        let mean: Vec<f64> = (0..spec.dimension)
            .map(|i| pts.iter().map(|x| x[i]).sum::<f64>() / n)
            .collect();
        let head: Vec<String> = mean.iter().take(4).map(|m| format!("{m:+.2}")).collect();
        println!("class {c}: {} points, mean [{}, ...]", pts.len(), head.join(", "));
    }
}
