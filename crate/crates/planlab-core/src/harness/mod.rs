//! Training, evaluation, and experiment plumbing.
//!
//! [`train`] runs Adam over the masked cross-entropy imitation loss and keeps
//! the checkpoint with the best validation %Optimal. [`evaluate`] scores a
//! parameter set by argmax rollouts over every state of every sample.
//! [`sweep`] and [`seed_variance`] wrap whole experiment grids, and the
//! `*_csv` helpers render the stable artifact formats the command-line layer
//! writes to disk.

mod eval;
mod sweep;
mod train;

pub use eval::{
    argmax_policy, evaluate, evaluate_oracle, rollout_cap, rollout_model, rollout_policy,
    Metrics, RolloutCounts,
};
pub use sweep::{
    curve_csv, seed_variance, sweep, sweep_csv, SeedVariance, SweepEntry, SweepReport,
};
pub use train::{clip_global_norm, train};

use crate::error::{Error, Result};
use crate::planners::ModelParams;
use crate::tensor::Scalar;

/// Optimization settings. `new` fills in the defaults — learning rate 1e-3,
/// batch 32, gradient clip 40, 30 epochs — leaving only the seed mandatory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub clip: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> TrainConfig {
        TrainConfig { lr: 1e-3, batch: 32, clip: 40.0, epochs: 30, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::config("batch size and epoch count must be positive"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::config("gradient clip must be positive"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::config("learning rate must be finite and non-negative"));
        }
        Ok(())
    }
}

/// One epoch of a training run, as written to the epoch CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Training metrics are collected from the same forward passes that
    /// produce gradients, so they reflect the parameters as they moved
    /// through the epoch; validation metrics use the post-epoch parameters.
    pub train_pct_opt: f64,
    pub train_pct_suc: f64,
    pub val_pct_opt: f64,
    pub val_pct_suc: f64,
    pub seconds: f64,
}

/// How a training run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    /// The loss became non-finite during this (1-based) epoch; the run holds
    /// whatever reports completed before it.
    Diverged { epoch: usize },
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }

    pub fn label(&self) -> String {
        match self {
            RunStatus::Ok => "ok".into(),
            RunStatus::Diverged { epoch } => format!("diverged@{epoch}"),
        }
    }
}

/// Outcome of [`train`]: the best-validation checkpoint plus the full series.
#[derive(Debug)]
pub struct TrainResult<T: Scalar> {
    /// Parameters of the epoch with the best validation %Opt (the initial
    /// draw if no epoch completed).
    pub params: ModelParams<T>,
    pub best_epoch: Option<usize>,
    pub best_val_pct_opt: f64,
    pub reports: Vec<EpochReport>,
    pub status: RunStatus,
}

/// %Opt thresholds used by the learning-speed report.
pub const LEARNING_THRESHOLDS: [f64; 4] = [50.0, 75.0, 90.0, 95.0];

/// For each threshold, the first (1-based) epoch whose validation %Opt
/// reached it, or `None` if the series never did.
pub fn learning_speed(reports: &[EpochReport], thresholds: &[f64]) -> Result<Vec<Option<usize>>> {
    if reports.is_empty() {
        return Err(Error::contract("learning_speed needs a nonempty report series"));
    }
    Ok(thresholds
        .iter()
        .map(|&th| reports.iter().find(|r| r.val_pct_opt >= th).map(|r| r.epoch))
        .collect())
}

/// Render an epochs-to-threshold entry, `--` when never reached.
pub fn epochs_label(entry: Option<usize>) -> String {
    match entry {
        Some(e) => e.to_string(),
        None => "--".into(),
    }
}

/// Mean and sample standard deviation (Welford's recurrence; the n=1 std is
/// reported as 0).
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let std = if xs.len() > 1 { (m2 / (xs.len() - 1) as f64).sqrt() } else { 0.0 };
    (mean, std)
}

/// Epoch CSV: `epoch,split,loss,pct_opt,pct_suc,seconds`, a train and a val
/// row per epoch, closed by a `# status:` trailer line.
pub fn epoch_csv(reports: &[EpochReport], status: &RunStatus) -> String {
    let mut out = String::from("epoch,split,loss,pct_opt,pct_suc,seconds\n");
    for r in reports {
        out.push_str(&format!(
            "{},train,{:.6},{:.4},{:.4},{:.3}\n",
            r.epoch, r.train_loss, r.train_pct_opt, r.train_pct_suc, r.seconds
        ));
        out.push_str(&format!(
            "{},val,{:.6},{:.4},{:.4},{:.3}\n",
            r.epoch, r.val_loss, r.val_pct_opt, r.val_pct_suc, r.seconds
        ));
    }
    out.push_str(&format!("# status: {}\n", status.label()));
    out
}

/// Learning-speed CSV: `threshold,epochs`, `--` for never-reached.
pub fn learning_speed_csv(reports: &[EpochReport], thresholds: &[f64]) -> Result<String> {
    let speeds = learning_speed(reports, thresholds)?;
    let mut out = String::from("threshold,epochs\n");
    for (&th, &entry) in thresholds.iter().zip(&speeds) {
        out.push_str(&format!("{},{}\n", th, epochs_label(entry)));
    }
    Ok(out)
}
