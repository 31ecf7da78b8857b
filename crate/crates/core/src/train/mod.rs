//! Adam with a warmup/inverse-square-root schedule, epoch loop and
//! model selection.

use crate::error::{Error, Result};
use crate::model::{Model, ParamStore};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Segments per mini-batch.
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// L2 coefficient added to the gradient.
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.98,
            weight_decay: 1e-4,
            warmup_steps: 1000,
            peak_lr: 1e-3,
            eps: 1e-8,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        open_unit("beta1", self.beta1)?;
        open_unit("beta2", self.beta2)?;
        if self.warmup_steps == 0 {
            return Err(Error::Config("warmup_steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config(format!("peak_lr = {} must be positive", self.peak_lr)));
        }
        if !(self.weight_decay >= 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config("weight_decay must be ≥ 0 and eps > 0".into()));
        }
        Ok(())
    }
}

/// `peak_lr · min(step/warmup, sqrt(warmup/step))` for 1-based `step`.
pub fn noam_lr(step: u64, warmup_steps: u64, peak_lr: f64) -> Result<f64> {
    if step == 0 {
        return Err(Error::Domain("learning-rate schedule is defined from step 1".into()));
    }
    if warmup_steps == 0 {
        return Err(Error::Config("warmup_steps must be at least 1".into()));
    }
    let (s, w) = (step as f64, warmup_steps as f64);
    Ok(peak_lr * (s / w).min((w / s).sqrt()))
}

/// Adam moments, one buffer per parameter in registry order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    /// Updates applied so far.
    pub t: u64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update with L2 weight decay folded into the gradient.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[Tensor<f32>],
    state: &mut OptimizerState,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::dim(
            "adam_step",
            format!(
                "{} parameters, {} gradients, {}/{} moment buffers",
                params.len(),
                grads.len(),
                state.m.len(),
                state.v.len()
            ),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::dim(
                "adam_step",
                format!("{}: parameter {:?} vs gradient {:?}", p.name, p.value.shape(), g.shape()),
            ));
        }
        if let Some(i) = g.data().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {} has a non-finite value at element {i}",
                p.name
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, wd) = (config.beta1, config.beta2, config.weight_decay);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((theta, &g), m), v) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            let g = g as f64 + wd * *theta as f64;
            let m_new = b1 * *m as f64 + (1.0 - b1) * g;
            let v_new = b2 * *v as f64 + (1.0 - b2) * g * g;
            *m = m_new as f32;
            *v = v_new as f32;
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + state.eps);
            *theta = (*theta as f64 - update) as f32;
        }
    }
    Ok(())
}

/// One training segment: `n_c × F × M` input and its class.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Tensor<f32>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub steps: usize,
    /// Loss of every step, in order.
    pub losses: Vec<f32>,
}

/// Seed of the shuffle for `epoch`, derived from the run seed.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One pass over all segments in shuffled mini-batches. Each step appends a
/// `step\tlr\tloss` line to `log`.
pub fn train_epoch(
    model: &mut Model,
    dataset: &[Sample],
    config: &TrainConfig,
    state: &mut OptimizerState,
    epoch: usize,
    mut log: Option<&mut dyn Write>,
) -> Result<EpochStats> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("training set has no segments".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch)));
    let mut losses = Vec::new();
    for batch in order.chunks(config.batch_size) {
        let inputs: Vec<&Tensor<f32>> = batch.iter().map(|&i| &dataset[i].input).collect();
        let labels: Vec<usize> = batch.iter().map(|&i| dataset[i].label).collect();
        let x = Tensor::stack(&inputs)?;
        let (loss, grads) = model.loss_and_grads(&x, &labels)?;
        let lr = noam_lr(state.t + 1, config.warmup_steps, config.peak_lr)?;
        adam_step(model.params_mut(), &grads, state, lr, config)?;
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}\t{lr:.6e}\t{loss:.6}", state.t)
                .map_err(|e| Error::Data(format!("cannot write training log: {e}")))?;
        }
        log::debug!("step {} lr {lr:.3e} loss {loss:.4}", state.t);
        losses.push(loss);
    }
    Ok(EpochStats {
        mean_loss: losses.iter().map(|&l| l as f64).sum::<f64>() / losses.len() as f64,
        steps: losses.len(),
        losses,
    })
}

/// Index of the minimal development EER; ties go to the earliest epoch.
pub fn select_best<'a, C>(checkpoints: &'a [C], dev_eers: &[f64]) -> Result<(usize, &'a C)> {
    if checkpoints.is_empty() {
        return Err(Error::Data("no checkpoints to select from".into()));
    }
    if checkpoints.len() != dev_eers.len() {
        return Err(Error::Data(format!(
            "{} checkpoints but {} development EERs",
            checkpoints.len(),
            dev_eers.len()
        )));
    }
    let mut best = 0;
    for (i, &e) in dev_eers.iter().enumerate() {
        if e.is_nan() {
            return Err(Error::NonFinite(format!("development EER of epoch {} is NaN", i + 1)));
        }
        if e < dev_eers[best] {
            best = i;
        }
    }
    Ok((best, &checkpoints[best]))
}
