//! Noise schedules and the deterministic DDIM sampling/inversion steps,
//! their multi-step drivers, and the stochastic DDPM forward map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable schedule parameters. Alpha-bar is always recomputed from
/// these, never stored, so schedule files stay implementation-portable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub inference_steps: Vec<usize>,
}

/// A linear-beta noise schedule with its cumulative signal coefficients and
/// an inference-step subsequence tau_0 = 0 < tau_1 < ... < tau_K.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// alpha_bar[t] for t = 0..=train_steps, alpha_bar[0] = 1.
    pub alpha_bar: Vec<f64>,
    pub inference_steps: Vec<usize>,
}

/// A batch of same-class latents positioned at one index of the inference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub dimension: usize,
    pub latents: Vec<Vec<f64>>,
    pub class: usize,
    /// Index into the schedule's inference_steps (0 = data end).
    pub step_index: usize,
}

impl LatentBatch {
    pub fn new(dimension: usize, latents: Vec<Vec<f64>>, class: usize, step_index: usize) -> Result<Self> {
        for l in &latents {
            if l.len() != dimension {
                return Err(Error::DimensionMismatch { expected: dimension, got: l.len() });
            }
        }
        Ok(Self { dimension, latents, class, step_index })
    }
}

/// Noise predictor signature: (latent, alpha_bar, class) -> predicted noise.
pub type EpsFn<'a> = dyn Fn(&[f64], f64, usize) -> Vec<f64> + Sync + 'a;

/// Build a linear-beta schedule over `train_steps` training timesteps with a
/// uniform `num_inference`-step inference grid ending at `train_steps`.
pub fn build_schedule(
    train_steps: usize,
    beta_start: f64,
    beta_end: f64,
    num_inference: usize,
) -> Result<NoiseSchedule> {
    build_schedule_to(train_steps, beta_start, beta_end, num_inference, train_steps)
}

/// Like [`build_schedule`] but with the inference grid ending at
/// `terminal_step <= train_steps`. Used by the truncated-depth sweeps.
pub fn build_schedule_to(
    train_steps: usize,
    beta_start: f64,
    beta_end: f64,
    num_inference: usize,
    terminal_step: usize,
) -> Result<NoiseSchedule> {
    if train_steps == 0 {
        return Err(Error::InvalidParameter("train_steps must be positive".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    if num_inference == 0 || num_inference > train_steps {
        return Err(Error::InvalidParameter(format!(
            "num_inference must be in [1, train_steps], got {num_inference}"
        )));
    }
    if terminal_step == 0 || terminal_step > train_steps {
        return Err(Error::InvalidParameter(format!(
            "terminal_step must be in [1, train_steps], got {terminal_step}"
        )));
    }
    let mut alpha_bar = Vec::with_capacity(train_steps + 1);
    alpha_bar.push(1.0);
    let mut prod = 1.0;
    for t in 1..=train_steps {
        let frac = if train_steps == 1 { 0.0 } else { (t - 1) as f64 / (train_steps - 1) as f64 };
        let beta = beta_start + frac * (beta_end - beta_start);
        prod *= 1.0 - beta;
        alpha_bar.push(prod);
    }
    let mut grid = vec![0usize];
    for j in 1..=num_inference {
        let t = ((j * terminal_step) as f64 / num_inference as f64).round() as usize;
        if t > *grid.last().unwrap() {
            grid.push(t);
        }
    }
    if grid.len() < 2 {
        return Err(Error::InvalidParameter("degenerate inference grid".into()));
    }
    Ok(NoiseSchedule { train_steps, beta_start, beta_end, alpha_bar, inference_steps: grid })
}

impl NoiseSchedule {
    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            train_steps: self.train_steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            inference_steps: self.inference_steps.clone(),
        }
    }

    pub fn from_params(p: &ScheduleParams) -> Result<Self> {
        if p.inference_steps.first() != Some(&0) || p.inference_steps.len() < 2 {
            return Err(Error::InvalidParameter(
                "inference_steps must start at 0 with at least one step".into(),
            ));
        }
        if !p.inference_steps.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("inference_steps must be strictly increasing".into()));
        }
        if *p.inference_steps.last().unwrap() > p.train_steps {
            return Err(Error::InvalidParameter("inference step beyond train_steps".into()));
        }
        let base = build_schedule(p.train_steps, p.beta_start, p.beta_end, 1)?;
        Ok(NoiseSchedule { inference_steps: p.inference_steps.clone(), ..base })
    }

    /// Number of inference transitions K.
    pub fn num_transitions(&self) -> usize {
        self.inference_steps.len() - 1
    }

    /// alpha_bar at the terminal inference step tau_K.
    pub fn terminal_alpha_bar(&self) -> f64 {
        self.alpha_bar[*self.inference_steps.last().unwrap()]
    }
}

fn check_range(ab: f64, name: &str) -> Result<()> {
    if !(ab > 0.0 && ab <= 1.0) {
        return Err(Error::InvalidParameter(format!("{name} must be in (0, 1], got {ab}")));
    }
    Ok(())
}

/// One deterministic DDIM sampling step from signal level `abar_from` to the
/// less-noisy `abar_to`.
pub fn ddim_sample_step(z: &[f64], abar_from: f64, abar_to: f64, eps: &[f64]) -> Result<Vec<f64>> {
    check_range(abar_from, "abar_from")?;
    check_range(abar_to, "abar_to")?;
    if abar_to < abar_from {
        return Err(Error::InvalidParameter(
            "sampling must move toward data (abar_to >= abar_from)".into(),
        ));
    }
    if z.len() != eps.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: eps.len() });
    }
    Ok(ddim_step_unchecked(z, abar_from, abar_to, eps))
}

/// One deterministic DDIM inversion step from `abar_from` to the noisier
/// `abar_to`. Exact algebraic inverse of [`ddim_sample_step`] with the same
/// eps and swapped alpha-bar arguments.
pub fn ddim_invert_step(z: &[f64], abar_from: f64, abar_to: f64, eps: &[f64]) -> Result<Vec<f64>> {
    check_range(abar_from, "abar_from")?;
    check_range(abar_to, "abar_to")?;
    if abar_to > abar_from {
        return Err(Error::InvalidParameter(
            "inversion must move toward noise (abar_to <= abar_from)".into(),
        ));
    }
    if z.len() != eps.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: eps.len() });
    }
    Ok(ddim_step_unchecked(z, abar_from, abar_to, eps))
}

// z' = sqrt(to/from) z + sqrt(to) (sqrt(1/to - 1) - sqrt(1/from - 1)) eps
fn ddim_step_unchecked(z: &[f64], abar_from: f64, abar_to: f64, eps: &[f64]) -> Vec<f64> {
    let scale = (abar_to / abar_from).sqrt();
    let coeff = abar_to.sqrt() * ((1.0 / abar_to - 1.0).sqrt() - (1.0 / abar_from - 1.0).sqrt());
    z.iter().zip(eps).map(|(&zi, &ei)| scale * zi + coeff * ei).collect()
}

// Heun step shared by both drivers: predict with the source-point eps, then
// redo the step with the average of source and predicted-destination eps.
// Keeps each substep on the exact single-step algebra while cutting the
// discretization error to second order, which the round-trip tolerances need.
fn heun_step<F>(
    z: &[f64],
    ab_from: f64,
    ab_to: f64,
    class: usize,
    eps_fn: &EpsFn,
    step: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64, f64, &[f64]) -> Result<Vec<f64>>,
{
    let e1 = eps_fn(z, ab_from, class);
    let predicted = step(z, ab_from, ab_to, &e1)?;
    let e2 = eps_fn(&predicted, ab_to, class);
    let avg: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| 0.5 * (a + b)).collect();
    step(z, ab_from, ab_to, &avg)
}

/// Drive a batch from the data end (grid index 0) to the noise end (index K).
pub fn invert(batch: &LatentBatch, schedule: &NoiseSchedule, eps_fn: &EpsFn) -> Result<LatentBatch> {
    if batch.step_index != 0 {
        return Err(Error::InvalidParameter(format!(
            "invert expects a batch at inference index 0, got {}",
            batch.step_index
        )));
    }
    let grid = &schedule.inference_steps;
    let latents = batch
        .latents
        .iter()
        .map(|z0| {
            let mut z = z0.clone();
            for w in grid.windows(2) {
                let ab_from = schedule.alpha_bar[w[0]];
                let ab_to = schedule.alpha_bar[w[1]];
                z = heun_step(&z, ab_from, ab_to, batch.class, eps_fn, ddim_invert_step)?;
            }
            Ok(z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LatentBatch {
        dimension: batch.dimension,
        latents,
        class: batch.class,
        step_index: schedule.num_transitions(),
    })
}

/// Drive a batch from the noise end (grid index K) back to the data end.
pub fn sample(batch: &LatentBatch, schedule: &NoiseSchedule, eps_fn: &EpsFn) -> Result<LatentBatch> {
    let k = schedule.num_transitions();
    if batch.step_index != k {
        return Err(Error::InvalidParameter(format!(
            "sample expects a batch at inference index {k}, got {}",
            batch.step_index
        )));
    }
    let grid = &schedule.inference_steps;
    let latents = batch
        .latents
        .iter()
        .map(|zk| {
            let mut z = zk.clone();
            for i in (0..k).rev() {
                let ab_from = schedule.alpha_bar[grid[i + 1]];
                let ab_to = schedule.alpha_bar[grid[i]];
                z = heun_step(&z, ab_from, ab_to, batch.class, eps_fn, ddim_sample_step)?;
            }
            Ok(z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LatentBatch { dimension: batch.dimension, latents, class: batch.class, step_index: 0 })
}

/// Stochastic DDPM forward map: sqrt(abar) z0 + sqrt(1 - abar) noise.
/// The noise vector is supplied explicitly so callers control determinism.
pub fn ddpm_forward(z0: &[f64], abar: f64, noise: &[f64]) -> Result<Vec<f64>> {
    check_range(abar, "abar")?;
    if z0.len() != noise.len() {
        return Err(Error::DimensionMismatch { expected: z0.len(), got: noise.len() });
    }
    let a = abar.sqrt();
    let b = (1.0 - abar).sqrt();
    Ok(z0.iter().zip(noise).map(|(&z, &n)| a * z + b * n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{analytic_epsilon, GmmComponent, GmmSpec};
    use rand::Rng;

    #[test]
    fn schedule_first_alpha_bar() {
        let s = build_schedule(1000, 1e-4, 0.02, 31).unwrap();
        assert!((s.alpha_bar[1] - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn schedule_matches_direct_product_oracle() {
        let s = build_schedule(1000, 1e-4, 0.02, 31).unwrap();
        let mut prod = 1.0;
        for t in 1..=1000usize {
            let beta = 1e-4 + ((t - 1) as f64 / 999.0) * (0.02 - 1e-4);
            prod *= 1.0 - beta;
        }
        assert!(((s.alpha_bar[1000] - prod) / prod).abs() < 1e-12);
    }

    #[test]
    fn schedule_single_step_grid() {
        let s = build_schedule(1000, 1e-4, 0.02, 1).unwrap();
        assert_eq!(s.inference_steps, vec![0, 1000]);
    }

    #[test]
    fn schedule_alpha_bar_strictly_decreasing() {
        let s = build_schedule(1000, 1e-4, 0.02, 31).unwrap();
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar.iter().all(|&a| a > 0.0 && a <= 1.0));
        assert_eq!(s.inference_steps.len(), 32);
    }

    #[test]
    fn schedule_rejects_bad_params() {
        assert!(build_schedule(0, 1e-4, 0.02, 1).is_err());
        assert!(build_schedule(1000, 0.0, 0.02, 31).is_err());
        assert!(build_schedule(1000, 0.03, 0.02, 31).is_err());
        assert!(build_schedule(1000, 1e-4, 1.0, 31).is_err());
        assert!(build_schedule(1000, 1e-4, 0.02, 0).is_err());
        assert!(build_schedule(10, 1e-4, 0.02, 11).is_err());
    }

    #[test]
    fn schedule_params_round_trip() {
        let s = build_schedule(1000, 1e-4, 0.02, 31).unwrap();
        let p = s.params();
        let s2 = NoiseSchedule::from_params(&p).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn sample_step_pure_rescaling() {
        let out = ddim_sample_step(&[2.0], 0.25, 1.0, &[0.0]).unwrap();
        assert!((out[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sample_step_equal_times_is_identity() {
        let out = ddim_sample_step(&[1.0, -0.5], 0.4, 0.4, &[3.0, -7.0]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15);
        assert!((out[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn sample_step_arithmetic_oracle() {
        let (ab_t, ab_prev) = (0.25, 0.5);
        let z = [1.0, 0.0];
        let eps = [0.5, -1.0];
        let out = ddim_sample_step(&z, ab_t, ab_prev, &eps).unwrap();
        // hand-evaluated: scale = sqrt(2), coeff = sqrt(0.5)(1 - sqrt(3))
        let scale = (ab_prev / ab_t).sqrt();
        let coeff = ab_prev.sqrt() * ((1.0 / ab_prev - 1.0).sqrt() - (1.0 / ab_t - 1.0).sqrt());
        for i in 0..2 {
            assert!((out[i] - (scale * z[i] + coeff * eps[i])).abs() < 1e-12);
        }
        assert!((out[0] - (2.0f64.sqrt() + 0.5f64.sqrt() * (1.0 - 3.0f64.sqrt()) * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn invert_step_inverse_of_sampling_example() {
        let out = ddim_invert_step(&[4.0], 1.0, 0.25, &[0.0]).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invert_step_arithmetic_oracle() {
        let (ab_t, ab_next) = (0.5, 0.25);
        let z = [1.0, 0.0];
        let eps = [0.5, -1.0];
        let out = ddim_invert_step(&z, ab_t, ab_next, &eps).unwrap();
        let scale = (ab_next / ab_t).sqrt();
        let coeff = ab_next.sqrt() * ((1.0 / ab_next - 1.0).sqrt() - (1.0 / ab_t - 1.0).sqrt());
        for i in 0..2 {
            assert!((out[i] - (scale * z[i] + coeff * eps[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_eps_round_trip_identity() {
        let mut rng = crate::rng::rng_from_seed(11);
        for _ in 0..200 {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let eps: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = rng.gen_range(0.05..1.0);
            let b = rng.gen_range(0.01..a);
            let up = ddim_invert_step(&z, a, b, &eps).unwrap();
            let back = ddim_sample_step(&up, b, a, &eps).unwrap();
            for i in 0..3 {
                assert!((back[i] - z[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn step_direction_enforced() {
        assert!(ddim_sample_step(&[1.0], 0.5, 0.25, &[0.0]).is_err());
        assert!(ddim_invert_step(&[1.0], 0.25, 0.5, &[0.0]).is_err());
    }

    fn zero_eps(z: &[f64], _ab: f64, _class: usize) -> Vec<f64> {
        vec![0.0; z.len()]
    }

    #[test]
    fn invert_with_zero_eps_telescopes() {
        let s = build_schedule(1000, 1e-4, 0.02, 8).unwrap();
        let batch = LatentBatch::new(2, vec![vec![1.0, -2.0], vec![0.5, 3.0]], 0, 0).unwrap();
        let out = invert(&batch, &s, &zero_eps).unwrap();
        let scale = s.terminal_alpha_bar().sqrt();
        for (o, z) in out.latents.iter().zip(&batch.latents) {
            for i in 0..2 {
                assert!((o[i] - scale * z[i]).abs() < 1e-12);
            }
        }
        assert_eq!(out.step_index, 8);
    }

    #[test]
    fn sample_with_zero_eps_telescopes() {
        let s = build_schedule(1000, 1e-4, 0.02, 8).unwrap();
        let batch = LatentBatch::new(1, vec![vec![0.25]], 0, 8).unwrap();
        let out = sample(&batch, &s, &zero_eps).unwrap();
        assert!((out.latents[0][0] - 0.25 / s.terminal_alpha_bar().sqrt()).abs() < 1e-9);
    }

    #[test]
    fn invert_single_transition_equals_one_step() {
        // with a state-independent predictor the corrector pass is a no-op
        let s = build_schedule(1000, 1e-4, 0.02, 1).unwrap();
        let z = vec![1.5, -0.3];
        let batch = LatentBatch::new(2, vec![z.clone()], 0, 0).unwrap();
        let eps_fn = |_zz: &[f64], _ab: f64, _c: usize| vec![0.2, -0.4];
        let out = invert(&batch, &s, &eps_fn).unwrap();
        let one = ddim_invert_step(&z, s.alpha_bar[0], s.alpha_bar[1000], &[0.2, -0.4]).unwrap();
        assert_eq!(out.latents[0], one);
    }

    #[test]
    fn invert_rejects_wrong_step_index() {
        let s = build_schedule(1000, 1e-4, 0.02, 4).unwrap();
        let batch = LatentBatch::new(1, vec![vec![0.0]], 0, 2).unwrap();
        assert!(invert(&batch, &s, &zero_eps).is_err());
    }

    #[test]
    fn invert_does_not_mutate_input() {
        let s = build_schedule(1000, 1e-4, 0.02, 4).unwrap();
        let batch = LatentBatch::new(1, vec![vec![1.0]], 0, 0).unwrap();
        let copy = batch.clone();
        let _ = invert(&batch, &s, &zero_eps).unwrap();
        assert_eq!(batch, copy);
    }

    fn std_normal_world() -> GmmSpec {
        GmmSpec {
            dimension: 2,
            classes: vec![vec![GmmComponent {
                weight: 1.0,
                mean: vec![0.0, 0.0],
                std: vec![1.0, 1.0],
            }]],
        }
    }

    #[test]
    fn standard_normal_is_probability_flow_fixed_point() {
        let spec = std_normal_world();
        let s = build_schedule(1000, 1e-4, 0.02, 31).unwrap();
        let ds = crate::gmm::sample_dataset(&spec, 2000, 5).unwrap();
        let latents: Vec<Vec<f64>> = ds.points.iter().map(|p| p.x.clone()).collect();
        let batch = LatentBatch::new(2, latents, 0, 0).unwrap();
        let eps_fn =
            |z: &[f64], ab: f64, c: usize| analytic_epsilon(&spec, c, z, ab).unwrap();
        let out = invert(&batch, &s, &eps_fn).unwrap();
        for i in 0..2 {
            let xs: Vec<f64> = out.latents.iter().map(|l| l[i]).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 0.08, "mean {mean}");
            assert!((var - 1.0).abs() < 0.12, "var {var}");
        }
    }

    #[test]
    fn ddpm_forward_endpoints_and_scaling() {
        let z0 = [1.0, 2.0];
        assert_eq!(ddpm_forward(&z0, 1.0, &[5.0, 5.0]).unwrap(), vec![1.0, 2.0]);
        let out = ddpm_forward(&[0.0, 0.0], 0.36, &[1.0, -1.0]).unwrap();
        assert!((out[0] - 0.8).abs() < 1e-12);
        assert!((out[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn ddpm_forward_population_mean() {
        use rand_distr::StandardNormal;
        let z0 = [2.0, -1.0];
        let ab = 0.7;
        let mut rng = crate::rng::rng_from_seed(21);
        let mut acc = [0.0f64; 2];
        let n = 10000;
        for _ in 0..n {
            let noise: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let out = ddpm_forward(&z0, ab, &noise).unwrap();
            acc[0] += out[0];
            acc[1] += out[1];
        }
        for i in 0..2 {
            assert!((acc[i] / n as f64 - ab.sqrt() * z0[i]).abs() < 0.05);
        }
    }
}
