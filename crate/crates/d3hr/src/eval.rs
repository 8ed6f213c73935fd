//! Verification instruments: a deterministic linear classifier for
//! downstream accuracy, normality diagnostics for the mapped domain, the
//! energy-distance two-sample statistic, and the sweep/ablation drivers.

use serde::{Deserialize, Serialize};

use crate::ddim::{build_schedule, invert, sample, LatentBatch, NoiseSchedule};
use crate::distill::{distill_dataset, DistillConfig, LossWeights, Mode};
use crate::error::{Error, Result};
use crate::gmm::{analytic_epsilon, Dataset, GmmSpec};

/// Multinomial logistic regression with bias folded into the weight matrix.
/// Zero-initialized and fit by full-batch gradient descent, so training is
/// deterministic and seed-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// weights[c] has length d + 1; the last entry is the bias.
    pub weights: Vec<Vec<f64>>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, epochs: 500, l2: 1e-4 }
    }
}

/// Per-dimension adjusted skewness and excess kurtosis of a latent batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    /// Mean over dimensions of |skewness| + |excess kurtosis|; 0 for an
    /// exact Gaussian in the large-sample limit.
    pub aggregate: f64,
}

/// Accuracy/energy record for one seed of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub accuracy: f64,
    pub energy_distance: f64,
}

/// Aggregated evaluation of one distillation configuration across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub mode: Mode,
    pub weights: LossWeights,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub energy_mean: f64,
    pub energy_std: f64,
    /// Normality aggregate of the mapped latents at the terminal step,
    /// averaged over classes (first seed).
    pub normality: f64,
    pub per_seed: Vec<SeedRecord>,
}

/// One row of the inversion-depth sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_steps: usize,
    pub normality: f64,
    pub median_round_trip_error: f64,
    pub accuracy: f64,
}

fn logits(model: &ClassifierModel, x: &[f64]) -> Vec<f64> {
    model
        .weights
        .iter()
        .map(|w| {
            let d = w.len() - 1;
            w[..d].iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + w[d]
        })
        .collect()
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Cross-entropy objective with L2 penalty on the non-bias weights, and its
/// gradient. Exposed for the finite-difference gradient checks.
pub fn classifier_loss_grad(
    weights: &[Vec<f64>],
    data: &Dataset,
    l2: f64,
) -> (f64, Vec<Vec<f64>>) {
    let n_classes = weights.len();
    let d = data.dimension;
    let n = data.points.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![vec![0.0; d + 1]; n_classes];
    for p in &data.points {
        let mut probs: Vec<f64> = weights
            .iter()
            .map(|w| w[..d].iter().zip(&p.x).map(|(wi, xi)| wi * xi).sum::<f64>() + w[d])
            .collect();
        let m = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = m + probs.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
        loss += log_z - probs[p.y];
        softmax_in_place(&mut probs);
        for c in 0..n_classes {
            let err = probs[c] - if c == p.y { 1.0 } else { 0.0 };
            for i in 0..d {
                grad[c][i] += err * p.x[i];
            }
            grad[c][d] += err;
        }
    }
    loss /= n;
    for (c, g) in grad.iter_mut().enumerate() {
        for i in 0..=d {
            g[i] /= n;
        }
        for i in 0..d {
            loss += 0.5 * l2 * weights[c][i] * weights[c][i] / n_classes as f64;
            g[i] += l2 * weights[c][i] / n_classes as f64;
        }
    }
    (loss, grad)
}

/// Train the linear classifier on a labelled dataset.
pub fn train_classifier(train: &Dataset, config: TrainConfig) -> Result<ClassifierModel> {
    if train.points.is_empty() {
        return Err(Error::Degenerate("empty training set".into()));
    }
    let n_classes = train.points.iter().map(|p| p.y).max().unwrap() + 1;
    if n_classes < 2 {
        return Err(Error::Degenerate("need at least 2 classes".into()));
    }
    for c in 0..n_classes {
        if !train.points.iter().any(|p| p.y == c) {
            return Err(Error::Degenerate(format!("class {c} has no training points")));
        }
    }
    let d = train.dimension;
    let mut weights = vec![vec![0.0; d + 1]; n_classes];
    for _ in 0..config.epochs {
        let (loss, grad) = classifier_loss_grad(&weights, train, config.l2);
        if !loss.is_finite() {
            return Err(Error::Degenerate("non-finite training loss".into()));
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            for i in 0..=d {
                w[i] -= config.learning_rate * g[i];
            }
        }
    }
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Degenerate("non-finite parameters after training".into()));
    }
    Ok(ClassifierModel { weights, config })
}

/// Fraction of argmax-correct predictions; ties go to the smallest class.
pub fn evaluate_classifier(model: &ClassifierModel, test: &Dataset) -> Result<f64> {
    if test.points.is_empty() {
        return Err(Error::Degenerate("empty test set".into()));
    }
    let d = model.weights[0].len() - 1;
    if test.dimension != d {
        return Err(Error::DimensionMismatch { expected: d, got: test.dimension });
    }
    let correct = test
        .points
        .iter()
        .filter(|p| {
            let l = logits(model, &p.x);
            let mut best = 0;
            for (c, &v) in l.iter().enumerate() {
                if v > l[best] {
                    best = c;
                }
            }
            best == p.y
        })
        .count();
    Ok(correct as f64 / test.points.len() as f64)
}

/// Adjusted Fisher-Pearson skewness and adjusted excess kurtosis per
/// dimension, plus the scalar aggregate.
pub fn normality_report(batch: &LatentBatch) -> Result<NormalityReport> {
    let n = batch.latents.len();
    if n < 4 {
        return Err(Error::Degenerate(format!("normality report needs >= 4 latents, got {n}")));
    }
    let d = batch.dimension;
    let nf = n as f64;
    let mut skewness = Vec::with_capacity(d);
    let mut kurtosis = Vec::with_capacity(d);
    for i in 0..d {
        let xs: Vec<f64> = batch.latents.iter().map(|l| l[i]).collect();
        let mean = xs.iter().sum::<f64>() / nf;
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let s2 = ss / (nf - 1.0);
        if s2 < 1e-12 {
            return Err(Error::Degenerate(format!("zero variance in dimension {i}")));
        }
        let s = s2.sqrt();
        let sum3: f64 = xs.iter().map(|x| ((x - mean) / s).powi(3)).sum();
        let sum4: f64 = xs.iter().map(|x| ((x - mean) / s).powi(4)).sum();
        let g1 = nf / ((nf - 1.0) * (nf - 2.0)) * sum3;
        let g2 = nf * (nf + 1.0) / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0)) * sum4
            - 3.0 * (nf - 1.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0));
        skewness.push(g1);
        kurtosis.push(g2);
    }
    let aggregate = skewness
        .iter()
        .zip(&kurtosis)
        .map(|(s, k)| s.abs() + k.abs())
        .sum::<f64>()
        / d as f64;
    Ok(NormalityReport { skewness, excess_kurtosis: kurtosis, aggregate })
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Energy distance 2 E|A-B| - E|A-A'| - E|B-B'| between two point clouds,
/// as the V-statistic (all ordered pairs), so identical multisets give 0.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("energy distance needs nonempty sets".into()));
    }
    let d = a[0].len();
    for p in a.iter().chain(b.iter()) {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
    }
    let cross: f64 = a
        .iter()
        .map(|x| b.iter().map(|y| l2_dist(x, y)).sum::<f64>())
        .sum::<f64>()
        / (a.len() * b.len()) as f64;
    Ok(2.0 * cross - within_mean(a) - within_mean(b))
}

fn within_mean(set: &[Vec<f64>]) -> f64 {
    let n = set.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += l2_dist(&set[i], &set[j]);
        }
    }
    // all ordered pairs: the diagonal contributes 0, off-diagonal twice
    sum * 2.0 / (n * n) as f64
}

fn xs_of(points: &[crate::gmm::DataPoint]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.x.clone()).collect()
}

/// Mean-over-classes normality aggregate of the inverted data at the
/// schedule's terminal step, and the median round-trip reconstruction error.
pub fn inversion_diagnostics(
    data: &Dataset,
    spec: &GmmSpec,
    schedule: &NoiseSchedule,
) -> Result<(f64, f64)> {
    let eps_fn = |z: &[f64], ab: f64, c: usize| {
        analytic_epsilon(spec, c, z, ab).expect("valid epsilon inputs")
    };
    let mut normality_sum = 0.0;
    let mut errors = Vec::new();
    for c in 0..spec.num_classes() {
        let points: Vec<Vec<f64>> =
            data.points.iter().filter(|p| p.y == c).map(|p| p.x.clone()).collect();
        if points.is_empty() {
            return Err(Error::Degenerate(format!("class {c} has no points")));
        }
        let batch = LatentBatch::new(data.dimension, points.clone(), c, 0)?;
        let mapped = invert(&batch, schedule, &eps_fn)?;
        normality_sum += normality_report(&mapped)?.aggregate;
        let back = sample(&mapped, schedule, &eps_fn)?;
        for (orig, rec) in points.iter().zip(&back.latents) {
            let norm = orig.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            errors.push(l2_dist(orig, rec) / norm);
        }
    }
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = errors[errors.len() / 2];
    Ok((normality_sum / spec.num_classes() as f64, median))
}

/// Configuration for sweeps and ablations.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub ipc: usize,
    pub m: usize,
    pub weights: LossWeights,
    pub train: TrainConfig,
    pub seed: u64,
}

fn run_cycle(
    data: &Dataset,
    test: &Dataset,
    spec: &GmmSpec,
    schedule: &NoiseSchedule,
    mode: Mode,
    weights: LossWeights,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SeedRecord> {
    let dconfig = DistillConfig {
        ipc: cfg.ipc,
        m: if mode == Mode::Group { cfg.m } else { 1 },
        weights,
        mode,
        seed,
        var_scale: 1.0,
    };
    let (set, _) = distill_dataset(data, spec, schedule, &dconfig)?;
    let train_set = set.as_dataset(data.spec_digest.clone());
    let model = train_classifier(&train_set, cfg.train)?;
    let accuracy = evaluate_classifier(&model, test)?;
    let energy = energy_distance(&xs_of(&set.points), &xs_of(&data.points))?;
    Ok(SeedRecord { seed, accuracy, energy_distance: energy })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Evaluate one labelled configuration across seeds.
#[allow(clippy::too_many_arguments)]
pub fn eval_mode(
    label: &str,
    data: &Dataset,
    test: &Dataset,
    spec: &GmmSpec,
    schedule: &NoiseSchedule,
    mode: Mode,
    weights: LossWeights,
    cfg: &EvalConfig,
    seeds: &[u64],
) -> Result<EvalReport> {
    let per_seed: Vec<SeedRecord> = seeds
        .iter()
        .map(|&s| run_cycle(data, test, spec, schedule, mode, weights, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let (accuracy_mean, accuracy_std) =
        mean_std(&per_seed.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let (energy_mean, energy_std) =
        mean_std(&per_seed.iter().map(|r| r.energy_distance).collect::<Vec<_>>());
    let (normality, _) = inversion_diagnostics(data, spec, schedule)?;
    Ok(EvalReport {
        label: label.to_string(),
        mode,
        weights,
        accuracy_mean,
        accuracy_std,
        energy_mean,
        energy_std,
        normality,
        per_seed,
    })
}

/// Run the three-mode ablation (and optionally the seven weight
/// combinations) across seeds.
pub fn ablation_run(
    data: &Dataset,
    test: &Dataset,
    spec: &GmmSpec,
    schedule: &NoiseSchedule,
    cfg: &EvalConfig,
    seeds: &[u64],
    weight_grid: bool,
) -> Result<Vec<EvalReport>> {
    if seeds.len() < 2 {
        return Err(Error::InvalidParameter("ablation needs at least 2 seeds".into()));
    }
    let mut reports = Vec::new();
    for (label, mode) in [("ddpm", Mode::Ddpm), ("random", Mode::Random), ("group", Mode::Group)] {
        reports.push(eval_mode(label, data, test, spec, schedule, mode, cfg.weights, cfg, seeds)?);
    }
    if weight_grid {
        let w = cfg.weights;
        let combos: [(&str, [f64; 3]); 7] = [
            ("mu", [w.mu, 0.0, 0.0]),
            ("sigma", [0.0, w.sigma, 0.0]),
            ("skew", [0.0, 0.0, w.skew]),
            ("mu+sigma", [w.mu, w.sigma, 0.0]),
            ("mu+skew", [w.mu, 0.0, w.skew]),
            ("sigma+skew", [0.0, w.sigma, w.skew]),
            ("mu+sigma+skew", [w.mu, w.sigma, w.skew]),
        ];
        for (label, ws) in combos {
            reports.push(eval_mode(
                label,
                data,
                test,
                spec,
                schedule,
                Mode::Group,
                LossWeights::from(ws),
                cfg,
                seeds,
            )?);
        }
    }
    Ok(reports)
}

/// For each inversion depth K: normality at the terminal step, median
/// round-trip error, and downstream accuracy of a group-mode distillation.
pub fn timestep_sweep(
    data: &Dataset,
    test: &Dataset,
    spec: &GmmSpec,
    k_list: &[usize],
    cfg: &EvalConfig,
) -> Result<Vec<SweepRow>> {
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::InvalidParameter("K values must be positive".into()));
    }
    k_list
        .iter()
        .map(|&k| {
            let schedule = build_schedule(1000, 1e-4, 0.02, k)?;
            let (normality, median) = inversion_diagnostics(data, spec, &schedule)?;
            let record = run_cycle(
                data,
                test,
                spec,
                &schedule,
                Mode::Group,
                cfg.weights,
                cfg,
                cfg.seed,
            )?;
            Ok(SweepRow {
                num_steps: k,
                normality,
                median_round_trip_error: median,
                accuracy: record.accuracy,
            })
        })
        .collect()
}
