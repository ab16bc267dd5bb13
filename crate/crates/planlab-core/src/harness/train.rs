//! The training loop: Adam over masked cross-entropy, global-norm clipping,
//! best-validation checkpoint selection, and honest divergence reporting.

use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::harness::eval::{argmax_policy, rollout_policy, RolloutCounts};
use crate::harness::{EpochReport, RunStatus, TrainConfig, TrainResult};
use crate::planners::{forward, input_tensor, ModelParams, PlannerConfig};
use crate::rng::SplitMix64;
use crate::tensor::{Scalar, Tape, Tensor};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Scale `grads` so their joint L2 norm is at most `clip`; returns the norm
/// measured before clipping. The norm is accumulated at 64-bit regardless of
/// the tensor precision.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], clip: f64) -> f64 {
    let mut sq = 0.0f64;
    for g in grads.iter() {
        for &x in g.data() {
            let v = x.to_f64();
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm.is_finite() && norm > clip {
        let scale = T::from_f64(clip / norm);
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// Adam state, one slot per parameter tensor.
struct Adam<T: Scalar> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u32,
}

impl<T: Scalar> Adam<T> {
    fn new(params: &ModelParams<T>) -> Adam<T> {
        let zeros: Vec<Tensor<T>> =
            params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        Adam { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, params: &mut ModelParams<T>, grads: &[Tensor<T>], lr: f64) {
        self.t += 1;
        let b1 = T::from_f64(BETA1);
        let b2 = T::from_f64(BETA2);
        let one_minus_b1 = T::from_f64(1.0 - BETA1);
        let one_minus_b2 = T::from_f64(1.0 - BETA2);
        let corr1 = T::from_f64(1.0 - BETA1.powi(self.t as i32));
        let corr2 = T::from_f64(1.0 - BETA2.powi(self.t as i32));
        let lr_t = T::from_f64(lr);
        let eps = T::from_f64(EPSILON);
        for ((param, grad), (m, v)) in
            params.tensors_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = param.data_mut();
            let gd = grad.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                md[i] = b1 * md[i] + one_minus_b1 * gd[i];
                vd[i] = b2 * vd[i] + one_minus_b2 * gd[i] * gd[i];
                let m_hat = md[i] / corr1;
                let v_hat = vd[i] / corr2;
                pd[i] = pd[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// One sample's contribution: loss, rollout tallies, and (in training mode)
/// the gradient of the per-sample mean loss with respect to every parameter.
struct SampleRun<T: Scalar> {
    loss: f64,
    counts: RolloutCounts,
    grads: Option<Vec<Tensor<T>>>,
}

fn run_sample<T: Scalar>(
    cfg: &PlannerConfig,
    params: &ModelParams<T>,
    sample: &Sample,
    with_grad: bool,
) -> Result<SampleRun<T>> {
    let mut tape = Tape::new();
    let input = input_tensor::<T>(&sample.maze, &sample.goal, cfg.kernel);
    let pass = forward(&mut tape, cfg, params, &input, &sample.space)?;
    let mask: Vec<bool> = (0..sample.space.len()).map(|s| s != sample.goal_state).collect();
    let loss_id = tape.softmax_cross_entropy(pass.logits, sample.labels.labels(), &mask)?;
    let loss = tape.value(loss_id).item().to_f64();
    let policy = argmax_policy(tape.value(pass.logits));
    let counts = rollout_policy(sample, &policy);
    let grads = if with_grad {
        let g = tape.backward(loss_id)?;
        Some(pass.params.iter().map(|&id| g.wrt(id).clone()).collect())
    } else {
        None
    };
    Ok(SampleRun { loss, counts, grads })
}

/// Mean loss and rollout metrics of `params` over a split, without gradients.
fn split_pass<T: Scalar>(
    cfg: &PlannerConfig,
    params: &ModelParams<T>,
    data: &Dataset,
) -> Result<(f64, RolloutCounts)> {
    let runs: Vec<SampleRun<T>> = data
        .samples
        .par_iter()
        .map(|s| run_sample(cfg, params, s, false))
        .collect::<Result<_>>()?;
    let mut counts = RolloutCounts::default();
    let mut loss = 0.0;
    for run in &runs {
        loss += run.loss;
        counts.add(run.counts);
    }
    Ok((loss / data.len().max(1) as f64, counts))
}

/// Train `cfg` on `train_set`, tracking validation metrics per epoch.
///
/// Returns the parameters of the best validation-%Opt epoch. A non-finite
/// training or validation loss stops the run and is reported through
/// [`RunStatus::Diverged`] rather than an error: the remaining reports cover
/// the epochs that completed.
pub fn train<T: Scalar>(
    cfg: &PlannerConfig,
    tcfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    tcfg.validate()?;
    for (name, data) in [("train", train_set), ("val", val_set)] {
        if data.is_empty() {
            return Err(Error::config(format!("{name} split is empty")));
        }
        if data.kernel != cfg.kernel {
            return Err(Error::config(format!(
                "{name} split kernel {} does not match model kernel {}",
                data.kernel.name(),
                cfg.kernel.name()
            )));
        }
    }

    // Stream 0 of the run seed initializes parameters; stream 1 drives the
    // epoch shuffles.
    let mut params = ModelParams::<T>::init(cfg, tcfg.seed)?;
    let mut shuffle_rng = SplitMix64::stream(tcfg.seed, 1);
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut reports = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(usize, f64, ModelParams<T>)> = None;
    let mut status = RunStatus::Ok;

    'epochs: for epoch in 1..=tcfg.epochs {
        let clock = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut train_loss = 0.0;
        let mut train_counts = RolloutCounts::default();

        for batch in order.chunks(tcfg.batch) {
            let runs: Vec<SampleRun<T>> = batch
                .par_iter()
                .map(|&i| run_sample(cfg, &params, &train_set.samples[i], true))
                .collect::<Result<_>>()?;
            let mut acc: Vec<Tensor<T>> =
                params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
            for run in &runs {
                if !run.loss.is_finite() {
                    status = RunStatus::Diverged { epoch };
                    break 'epochs;
                }
                train_loss += run.loss;
                train_counts.add(run.counts);
                for (a, g) in acc.iter_mut().zip(run.grads.as_ref().expect("training run")) {
                    let ad = a.data_mut();
                    for (x, &y) in ad.iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
            }
            let inv = T::from_f64(1.0 / runs.len() as f64);
            for a in &mut acc {
                for x in a.data_mut() {
                    *x *= inv;
                }
            }
            clip_global_norm(&mut acc, tcfg.clip);
            adam.step(&mut params, &acc, tcfg.lr);
        }
        train_loss /= train_set.len() as f64;

        let (val_loss, val_counts) = split_pass(cfg, &params, val_set)?;
        if !val_loss.is_finite() {
            status = RunStatus::Diverged { epoch };
            break 'epochs;
        }
        let train_metrics = train_counts.metrics();
        let val_metrics = val_counts.metrics();
        reports.push(EpochReport {
            epoch,
            train_loss,
            val_loss,
            train_pct_opt: train_metrics.pct_opt,
            train_pct_suc: train_metrics.pct_suc,
            val_pct_opt: val_metrics.pct_opt,
            val_pct_suc: val_metrics.pct_suc,
            seconds: clock.elapsed().as_secs_f64(),
        });
        if best.as_ref().map_or(true, |(_, b, _)| val_metrics.pct_opt > *b) {
            best = Some((epoch, val_metrics.pct_opt, params.clone()));
        }
    }

    let (best_epoch, best_val_pct_opt, best_params) = match best {
        Some((e, v, p)) => (Some(e), v, p),
        // Diverged before completing the first epoch: fall back to the
        // initial parameters so the result is still a usable checkpoint.
        None => (None, 0.0, params),
    };
    Ok(TrainResult {
        params: best_params,
        best_epoch,
        best_val_pct_opt,
        reports,
        status,
    })
}
