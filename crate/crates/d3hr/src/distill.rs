//! Distribution matching in the mapped noise domain: per-class Gaussian
//! statistics, the moment-mismatch subset metric, group sampling, and the
//! end-to-end distillation drivers (plus the random-subset and DDPM-forward
//! baseline modes).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddim::{ddpm_forward, invert, sample, EpsFn, LatentBatch, NoiseSchedule, ScheduleParams};
use crate::error::{Error, Result};
use crate::gmm::{analytic_epsilon, DataPoint, Dataset, GmmSpec};
use crate::rng::{derive_seed, rng_from_seed};

const VAR_FLOOR: f64 = 1e-9;
// lane used for the DDPM-forward noise stream, disjoint from candidate indices
const NOISE_LANE: u64 = u64::MAX;

/// Per-class, per-dimension Gaussian statistics of the mapped latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussianStats {
    pub class: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Skewness target; a Gaussian is symmetric so this is always 0.
    pub skew_target: f64,
    pub source_count: usize,
}

/// Weights of the three moment-mismatch terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct LossWeights {
    pub mu: f64,
    pub sigma: f64,
    pub skew: f64,
}

impl From<[f64; 3]> for LossWeights {
    fn from(w: [f64; 3]) -> Self {
        Self { mu: w[0], sigma: w[1], skew: w[2] }
    }
}

impl From<LossWeights> for [f64; 3] {
    fn from(w: LossWeights) -> Self {
        [w.mu, w.sigma, w.skew]
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mu: 1.0, sigma: 1.0, skew: 0.5 }
    }
}

/// Breakdown of the subset metric into its three weighted terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_mu: f64,
    pub l_sigma: f64,
    pub l_skew: f64,
    pub total: f64,
    pub weights: LossWeights,
}

/// One candidate subset of n latents with its score.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSubset {
    pub latents: Vec<Vec<f64>>,
    pub candidate_index: usize,
    pub loss: LossBreakdown,
}

/// Distillation mode: the full method or one of the two ablation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Group sampling over m candidate subsets (the full method).
    Group,
    /// A single random subset after DDIM inversion (Base-RS).
    Random,
    /// DDPM forward noising instead of DDIM inversion (Base-DDPM).
    Ddpm,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group" => Ok(Mode::Group),
            "random" => Ok(Mode::Random),
            "ddpm" => Ok(Mode::Ddpm),
            other => Err(Error::InvalidParameter(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Group => "group",
            Mode::Random => "random",
            Mode::Ddpm => "ddpm",
        };
        f.write_str(s)
    }
}

/// Run provenance attached to every distilled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub steps: usize,
    pub weights: LossWeights,
    pub var_scale: f64,
}

/// The generated distilled dataset in data space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledSet {
    pub dimension: usize,
    pub points: Vec<DataPoint>,
    pub mode: Mode,
    pub ipc: usize,
    pub m: usize,
    pub provenance: Provenance,
}

impl DistilledSet {
    /// View as a plain dataset for downstream training/evaluation.
    pub fn as_dataset(&self, spec_digest: String) -> Dataset {
        Dataset {
            dimension: self.dimension,
            points: self.points.clone(),
            seed: self.provenance.seed,
            spec_digest,
        }
    }
}

/// Per-class statistics plus schedule parameters: everything needed to
/// regenerate distilled sets of any size without the original data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBundle {
    pub schedule: ScheduleParams,
    pub classes: Vec<ClassGaussianStats>,
    pub weights: LossWeights,
    pub m: usize,
}

/// Distillation configuration shared by the library drivers and the CLI.
#[derive(Debug, Clone)]
pub struct DistillConfig {
    pub ipc: usize,
    pub m: usize,
    pub weights: LossWeights,
    pub mode: Mode,
    pub seed: u64,
    pub var_scale: f64,
}

/// Fit per-dimension mean and population standard deviation (1/n convention)
/// of a mapped batch.
pub fn fit_class_stats(batch: &LatentBatch) -> Result<ClassGaussianStats> {
    let n = batch.latents.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("need at least 2 latents to fit stats, got {n}")));
    }
    let d = batch.dimension;
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for l in &batch.latents {
        for i in 0..d {
            mean[i] += l[i];
        }
    }
    for m in &mut mean {
        *m /= nf;
    }
    let mut var = vec![0.0; d];
    for l in &batch.latents {
        for i in 0..d {
            let diff = l[i] - mean[i];
            var[i] += diff * diff;
        }
    }
    let mut std = Vec::with_capacity(d);
    for (i, v) in var.iter().enumerate() {
        let v = v / nf;
        if v < VAR_FLOOR {
            return Err(Error::Degenerate(format!("zero variance in dimension {i}")));
        }
        std.push(v.sqrt());
    }
    Ok(ClassGaussianStats { class: batch.class, mean, std, skew_target: 0.0, source_count: n })
}

/// Draw n i.i.d. latents, dimension i from N(mean_i, std_i^2).
pub fn gaussian_subset_sample(
    stats: &ClassGaussianStats,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("subset size must be positive".into()));
    }
    let d = stats.mean.len();
    let mut rng = rng_from_seed(seed);
    Ok((0..n)
        .map(|_| {
            (0..d)
                .map(|i| stats.mean[i] + stats.std[i] * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect())
}

/// The moment-mismatch metric: squared deviations of subset mean, standard
/// deviation, and adjusted skewness from the target Gaussian statistics,
/// each averaged over dimensions, then combined as a weighted sum.
///
/// The spread term measures the 1/n root-mean-square deviation about the
/// target mean (not the subset's own mean). The skewness term is defined as
/// 0 for n < 3, where its bias-correction factor is undefined.
pub fn subset_loss(
    subset: &[Vec<f64>],
    stats: &ClassGaussianStats,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    let n = subset.len();
    if n == 0 {
        return Err(Error::Degenerate("empty subset".into()));
    }
    let d = stats.mean.len();
    for l in subset {
        if l.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: l.len() });
        }
    }
    let nf = n as f64;
    let mut l_mu = 0.0;
    let mut l_sigma = 0.0;
    let mut l_skew = 0.0;
    for i in 0..d {
        let mu = stats.mean[i];
        let sigma = stats.std[i];
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut cube = 0.0;
        for l in subset {
            let x = l[i];
            sum += x;
            let dev = x - mu;
            sq += dev * dev;
            let u = dev / sigma;
            cube += u * u * u;
        }
        let mean_diff = sum / nf - mu;
        l_mu += mean_diff * mean_diff;
        let spread_diff = (sq / nf).sqrt() - sigma;
        l_sigma += spread_diff * spread_diff;
        if n >= 3 {
            let skew = nf / ((nf - 1.0) * (nf - 2.0)) * cube - stats.skew_target;
            l_skew += skew * skew;
        }
    }
    let df = d as f64;
    l_mu /= df;
    l_sigma /= df;
    l_skew /= df;
    let total = weights.mu * l_mu + weights.sigma * l_sigma + weights.skew * l_skew;
    Ok(LossBreakdown { l_mu, l_sigma, l_skew, total, weights })
}

/// Draw m candidate subsets with deterministically derived per-candidate
/// seeds and return the one with minimal loss (smallest index on ties).
/// Candidates are scored in parallel; the argmin reduction is deterministic.
pub fn group_sample(
    stats: &ClassGaussianStats,
    n: usize,
    m: usize,
    weights: LossWeights,
    seed: u64,
) -> Result<CandidateSubset> {
    if m == 0 {
        return Err(Error::InvalidParameter("candidate count m must be positive".into()));
    }
    let best = (0..m)
        .into_par_iter()
        .map(|k| {
            let subset =
                gaussian_subset_sample(stats, n, derive_seed(seed, stats.class as u64, k as u64))?;
            let loss = subset_loss(&subset, stats, weights)?;
            Ok(CandidateSubset { latents: subset, candidate_index: k, loss })
        })
        .reduce_with(|a, b| {
            let (a, b) = (a?, b?);
            Ok(if (b.loss.total, b.candidate_index) < (a.loss.total, a.candidate_index) {
                b
            } else {
                a
            })
        })
        .expect("m >= 1");
    best
}

fn scaled_stats(stats: &ClassGaussianStats, var_scale: f64) -> ClassGaussianStats {
    if var_scale == 1.0 {
        return stats.clone();
    }
    let mut s = stats.clone();
    for v in &mut s.std {
        *v *= var_scale;
    }
    s
}

/// Map one class to the noise domain, pick a representative subset there,
/// and map it back to data space. Returns the generated points and the
/// (unscaled) fitted statistics.
#[allow(clippy::too_many_arguments)]
pub fn distill_class(
    points: &[Vec<f64>],
    class: usize,
    schedule: &NoiseSchedule,
    eps_fn: &EpsFn,
    config: &DistillConfig,
) -> Result<(Vec<Vec<f64>>, ClassGaussianStats)> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!("class {class} has fewer than 2 points")));
    }
    let d = points[0].len();
    let k = schedule.num_transitions();

    let mapped = match config.mode {
        Mode::Group | Mode::Random => {
            let batch = LatentBatch::new(d, points.to_vec(), class, 0)?;
            invert(&batch, schedule, eps_fn)?
        }
        Mode::Ddpm => {
            let abar = schedule.terminal_alpha_bar();
            let mut rng = rng_from_seed(derive_seed(config.seed, class as u64, NOISE_LANE));
            let latents = points
                .iter()
                .map(|z0| {
                    let noise: Vec<f64> =
                        (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    ddpm_forward(z0, abar, &noise)
                })
                .collect::<Result<Vec<_>>>()?;
            LatentBatch::new(d, latents, class, k)?
        }
    };

    let stats = fit_class_stats(&mapped)?;
    let sampling_stats = scaled_stats(&stats, config.var_scale);

    let subset = match config.mode {
        Mode::Group => {
            group_sample(&sampling_stats, config.ipc, config.m, config.weights, config.seed)?.latents
        }
        Mode::Random | Mode::Ddpm => gaussian_subset_sample(
            &sampling_stats,
            config.ipc,
            derive_seed(config.seed, class as u64, 0),
        )?,
    };

    let noise_batch = LatentBatch::new(d, subset, class, k)?;
    let data_batch = sample(&noise_batch, schedule, eps_fn)?;
    Ok((data_batch.latents, stats))
}

/// Run distillation over every class of a dataset. Classes are independent
/// and use per-class derived seed streams.
pub fn distill_dataset(
    data: &Dataset,
    spec: &GmmSpec,
    schedule: &NoiseSchedule,
    config: &DistillConfig,
) -> Result<(DistilledSet, StatsBundle)> {
    let n_classes = spec.num_classes();
    let mut by_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_classes];
    for p in &data.points {
        if p.y >= n_classes {
            return Err(Error::InvalidParameter(format!("class index {} out of range", p.y)));
        }
        by_class[p.y].push(p.x.clone());
    }
    let eps_fn = |z: &[f64], ab: f64, c: usize| {
        analytic_epsilon(spec, c, z, ab).expect("valid epsilon inputs")
    };
    let mut points = Vec::with_capacity(n_classes * config.ipc);
    let mut class_stats = Vec::with_capacity(n_classes);
    for (c, class_points) in by_class.iter().enumerate() {
        let (distilled, stats) = distill_class(class_points, c, schedule, &eps_fn, config)?;
        for x in distilled {
            points.push(DataPoint { x, y: c });
        }
        class_stats.push(stats);
    }
    let set = DistilledSet {
        dimension: data.dimension,
        points,
        mode: config.mode,
        ipc: config.ipc,
        m: config.m,
        provenance: Provenance {
            seed: config.seed,
            steps: schedule.num_transitions(),
            weights: config.weights,
            var_scale: config.var_scale,
        },
    };
    let bundle = StatsBundle {
        schedule: schedule.params(),
        classes: class_stats,
        weights: config.weights,
        m: config.m,
    };
    Ok((set, bundle))
}

/// Regenerate a distilled set of any size from stored class statistics
/// alone, without the original dataset.
pub fn regenerate_from_stats(
    bundle: &StatsBundle,
    ipc: usize,
    spec: &GmmSpec,
    seed: u64,
) -> Result<DistilledSet> {
    if bundle.classes.len() != spec.num_classes() {
        let have: Vec<usize> = bundle.classes.iter().map(|s| s.class).collect();
        for c in 0..spec.num_classes() {
            if !have.contains(&c) {
                return Err(Error::MissingClassStats(c));
            }
        }
        return Err(Error::InvalidParameter("stats bundle does not match spec classes".into()));
    }
    let schedule = NoiseSchedule::from_params(&bundle.schedule)?;
    let k = schedule.num_transitions();
    let eps_fn = |z: &[f64], ab: f64, c: usize| {
        analytic_epsilon(spec, c, z, ab).expect("valid epsilon inputs")
    };
    let mut points = Vec::with_capacity(bundle.classes.len() * ipc);
    for stats in &bundle.classes {
        let subset = group_sample(stats, ipc, bundle.m, bundle.weights, seed)?;
        let noise_batch = LatentBatch::new(stats.mean.len(), subset.latents, stats.class, k)?;
        let data_batch = sample(&noise_batch, &schedule, &eps_fn)?;
        for x in data_batch.latents {
            points.push(DataPoint { x, y: stats.class });
        }
    }
    Ok(DistilledSet {
        dimension: spec.dimension,
        points,
        mode: Mode::Group,
        ipc,
        m: bundle.m,
        provenance: Provenance {
            seed,
            steps: k,
            weights: bundle.weights,
            var_scale: 1.0,
        },
    })
}
