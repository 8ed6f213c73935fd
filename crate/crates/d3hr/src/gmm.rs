//! Class-conditional Gaussian-mixture data worlds with closed-form diffused
//! marginals and the exact noise predictor they imply.
//!
//! Every mixture is axis-aligned (diagonal covariance), which keeps the
//! analytic score exact while staying genuinely multi-modal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Smallest admissible per-dimension standard deviation. Anything below this
/// would put a near-singularity into the score.
pub const STD_FLOOR: f64 = 1e-6;

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// One axis-aligned Gaussian component of a class mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A class-conditional Gaussian-mixture data distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub dimension: usize,
    pub classes: Vec<Vec<GmmComponent>>,
}

/// One labelled point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub y: usize,
}

/// A sampled labelled dataset with its generation provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dimension: usize,
    pub points: Vec<DataPoint>,
    pub seed: u64,
    pub spec_digest: String,
}

impl GmmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::InvalidSpec("spec must have at least one class".into()));
        }
        for (c, comps) in self.classes.iter().enumerate() {
            if comps.is_empty() {
                return Err(Error::InvalidSpec(format!("class {c} has no components")));
            }
            let wsum: f64 = comps.iter().map(|k| k.weight).sum();
            if (wsum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::InvalidSpec(format!(
                    "class {c} component weights sum to {wsum}, expected 1"
                )));
            }
            for (k, comp) in comps.iter().enumerate() {
                if comp.weight <= 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "class {c} component {k} has non-positive weight"
                    )));
                }
                if comp.mean.len() != self.dimension || comp.std.len() != self.dimension {
                    return Err(Error::InvalidSpec(format!(
                        "class {c} component {k} mean/std length mismatch"
                    )));
                }
                if comp.std.iter().any(|&s| s < STD_FLOOR) {
                    return Err(Error::InvalidSpec(format!(
                        "class {c} component {k} std below positivity floor {STD_FLOOR}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Hex digest of the canonical JSON form, used for dataset provenance.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed of the documented default-world generation procedure.
pub const DEFAULT_WORLD_SEED: u64 = 12;

/// The desk-scale default world: d = 8, 4 classes, 3 components per class.
/// Component means are uniform in [-4, 4]^d, stds uniform in [0.3, 1.2],
/// weights exponential draws normalized to sum 1, all drawn from a single
/// seeded stream so the world is a fixed constant of the crate.
pub fn default_world() -> GmmSpec {
    let d = 8;
    let n_classes = 4;
    let comps_per_class = 3;
    let mut rng = rng_from_seed(DEFAULT_WORLD_SEED);
    let mut classes = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let raw: Vec<f64> = (0..comps_per_class).map(|_| -rng.gen::<f64>().ln()).collect();
        let total: f64 = raw.iter().sum();
        let mut comps = Vec::with_capacity(comps_per_class);
        for w in raw {
            let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let std: Vec<f64> = (0..d).map(|_| rng.gen_range(0.3..1.2)).collect();
            comps.push(GmmComponent { weight: w / total, mean, std });
        }
        // renormalize exactly so validation's 1e-9 check holds
        let wsum: f64 = comps.iter().map(|c| c.weight).sum();
        for c in &mut comps {
            c.weight /= wsum;
        }
        classes.push(comps);
    }
    let spec = GmmSpec { dimension: d, classes };
    spec.validate().expect("default world is valid");
    spec
}

/// Draw `n_per_class` labelled points per class. Deterministic given `seed`;
/// each class uses an independent derived stream.
pub fn sample_dataset(spec: &GmmSpec, n_per_class: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("n_per_class must be positive".into()));
    }
    let digest = spec.digest();
    let mut points = Vec::with_capacity(n_per_class * spec.num_classes());
    for (c, comps) in spec.classes.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, c as u64, 0));
        for _ in 0..n_per_class {
            let k = pick_component(comps, rng.gen::<f64>());
            let comp = &comps[k];
            let x: Vec<f64> = (0..spec.dimension)
                .map(|i| comp.mean[i] + comp.std[i] * rng.sample::<f64, _>(StandardNormal))
                .collect();
            points.push(DataPoint { x, y: c });
        }
    }
    Ok(Dataset { dimension: spec.dimension, points, seed, spec_digest: digest })
}

fn pick_component(comps: &[GmmComponent], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, comp) in comps.iter().enumerate() {
        acc += comp.weight;
        if u < acc {
            return k;
        }
    }
    comps.len() - 1
}

/// A diffused mixture component, in (mean, variance) form.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// The marginal of the forward diffusion at signal level `alpha_bar`:
/// component means scale by sqrt(alpha_bar), per-dimension variances become
/// alpha_bar * s^2 + (1 - alpha_bar). Weights are unchanged.
pub fn marginal_at(spec: &GmmSpec, class: usize, alpha_bar: f64) -> Result<Vec<MarginalComponent>> {
    check_alpha_bar(alpha_bar)?;
    let comps = spec
        .classes
        .get(class)
        .ok_or_else(|| Error::InvalidParameter(format!("class {class} out of range")))?;
    let sqrt_ab = alpha_bar.sqrt();
    Ok(comps
        .iter()
        .map(|c| MarginalComponent {
            weight: c.weight,
            mean: c.mean.iter().map(|&m| sqrt_ab * m).collect(),
            var: c.std.iter().map(|&s| alpha_bar * s * s + (1.0 - alpha_bar)).collect(),
        })
        .collect())
}

fn check_alpha_bar(alpha_bar: f64) -> Result<()> {
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha_bar must be in (0, 1], got {alpha_bar}"
        )));
    }
    Ok(())
}

/// Log-density of an axis-aligned Gaussian mixture at `point`, reduced with
/// log-sum-exp so nearly identical components at small alpha_bar stay stable.
pub fn gmm_log_density(mixture: &[MarginalComponent], point: &[f64]) -> Result<f64> {
    let d = point.len();
    let mut log_terms = Vec::with_capacity(mixture.len());
    for comp in mixture {
        if comp.mean.len() != d {
            return Err(Error::DimensionMismatch { expected: comp.mean.len(), got: d });
        }
        let mut lp = comp.weight.ln();
        for i in 0..d {
            let v = comp.var[i];
            let diff = point[i] - comp.mean[i];
            lp += -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + diff * diff / v);
        }
        log_terms.push(lp);
    }
    Ok(log_sum_exp(&log_terms))
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// The exact noise predictor for the diffused class mixture:
/// eps*(z) = -sqrt(1 - alpha_bar) * grad log p_t(z), computed through
/// log-domain responsibilities over the marginal components.
pub fn analytic_epsilon(
    spec: &GmmSpec,
    class: usize,
    z: &[f64],
    alpha_bar: f64,
) -> Result<Vec<f64>> {
    let mixture = marginal_at(spec, class, alpha_bar)?;
    if z.len() != spec.dimension {
        return Err(Error::DimensionMismatch { expected: spec.dimension, got: z.len() });
    }
    let d = z.len();
    let scale = (1.0 - alpha_bar).sqrt();
    if scale == 0.0 {
        return Ok(vec![0.0; d]);
    }
    let mut log_resp = Vec::with_capacity(mixture.len());
    for comp in &mixture {
        let mut lp = comp.weight.ln();
        for i in 0..d {
            let v = comp.var[i];
            let diff = z[i] - comp.mean[i];
            lp += -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + diff * diff / v);
        }
        log_resp.push(lp);
    }
    let norm = log_sum_exp(&log_resp);
    let mut eps = vec![0.0; d];
    for (comp, lr) in mixture.iter().zip(&log_resp) {
        let r = (lr - norm).exp();
        for i in 0..d {
            eps[i] += r * (comp.mean[i] - z[i]) / comp.var[i];
        }
    }
    for e in &mut eps {
        *e *= -scale;
    }
    Ok(eps)
}
