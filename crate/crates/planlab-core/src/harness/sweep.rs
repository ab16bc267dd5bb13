//! Hyperparameter sweeps, top-n stability curves, and seed-variance reports.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::harness::eval::{evaluate, Metrics};
use crate::harness::train::train;
use crate::harness::{mean_and_std, RunStatus, TrainConfig};
use crate::planners::{Arch, PlannerConfig};
use crate::tensor::Scalar;

/// One trained grid point. `metrics` is `None` when the run diverged.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub arch: Arch,
    pub k: usize,
    pub f: usize,
    pub seed: u64,
    pub best_val_pct_opt: f64,
    pub metrics: Option<Metrics>,
    pub status: RunStatus,
}

/// Ranked sweep results plus the top-n running-average curve over the
/// completed runs (`curve[n-1]` = mean test %Opt of the best n settings).
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub curve: Vec<f64>,
}

/// Train every `(K, F)` grid point and rank by test %Opt (descending, ties by
/// ascending `(K, F)`). Diverged runs sink to the bottom and stay out of the
/// curve.
pub fn sweep<T: Scalar>(
    arch: Arch,
    hidden: usize,
    grid: &[(usize, usize)],
    tcfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    test_set: &Dataset,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::config("sweep needs a nonempty (K, F) grid"));
    }
    let mut entries = Vec::with_capacity(grid.len());
    for &(k, f) in grid {
        let cfg = PlannerConfig::new(arch, k, f, hidden, train_set.kernel)?;
        let result = train::<T>(&cfg, tcfg, train_set, val_set)?;
        let metrics = match result.status {
            RunStatus::Ok => Some(evaluate(&cfg, &result.params, test_set)?),
            RunStatus::Diverged { .. } => None,
        };
        entries.push(SweepEntry {
            arch,
            k,
            f,
            seed: tcfg.seed,
            best_val_pct_opt: result.best_val_pct_opt,
            metrics,
            status: result.status,
        });
    }
    entries.sort_by(|a, b| {
        match (&a.metrics, &b.metrics) {
            (Some(ma), Some(mb)) => mb
                .pct_opt
                .partial_cmp(&ma.pct_opt)
                .expect("finite percentages")
                .then_with(|| (a.k, a.f).cmp(&(b.k, b.f))),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => (a.k, a.f).cmp(&(b.k, b.f)),
        }
    });
    let mut curve = Vec::new();
    let mut running = 0.0;
    for (i, entry) in entries.iter().filter_map(|e| e.metrics.as_ref()).enumerate() {
        running += entry.pct_opt;
        curve.push(running / (i + 1) as f64);
    }
    Ok(SweepReport { entries, curve })
}

/// Sweep-summary CSV: `arch,K,F,seed,test_pct_opt,test_pct_suc,status`.
/// Diverged rows carry `--` metrics.
pub fn sweep_csv(entries: &[SweepEntry]) -> String {
    let mut out = String::from("arch,K,F,seed,test_pct_opt,test_pct_suc,status\n");
    for e in entries {
        let (opt, suc) = match &e.metrics {
            Some(m) => (format!("{:.4}", m.pct_opt), format!("{:.4}", m.pct_suc)),
            None => ("--".into(), "--".into()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.arch.name(),
            e.k,
            e.f,
            e.seed,
            opt,
            suc,
            e.status.label()
        ));
    }
    out
}

/// Top-n curve CSV: `n,mean_test_pct_opt`.
pub fn curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("n,mean_test_pct_opt\n");
    for (i, v) in curve.iter().enumerate() {
        out.push_str(&format!("{},{:.4}\n", i + 1, v));
    }
    out
}

/// Final-epoch %Opt spread across repeated runs of one configuration.
#[derive(Debug, Clone)]
pub struct SeedVariance {
    pub seeds: Vec<u64>,
    pub train_pct_opt: Vec<f64>,
    pub val_pct_opt: Vec<f64>,
    pub train_mean: f64,
    pub train_std: f64,
    pub val_mean: f64,
    pub val_std: f64,
}

/// Repeat training once per entry of `seeds` (at least two) and report the
/// mean and sample standard deviation of the final-epoch train/val %Opt.
pub fn seed_variance<T: Scalar>(
    cfg: &PlannerConfig,
    tcfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    seeds: &[u64],
) -> Result<SeedVariance> {
    if seeds.len() < 2 {
        return Err(Error::config("seed_variance needs at least two seeds"));
    }
    let mut train_pct = Vec::with_capacity(seeds.len());
    let mut val_pct = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run_cfg = TrainConfig { seed, ..*tcfg };
        let result = train::<T>(cfg, &run_cfg, train_set, val_set)?;
        let last = match result.status {
            RunStatus::Ok => result.reports.last().expect("completed run has reports"),
            RunStatus::Diverged { epoch } => {
                return Err(Error::Inconsistent(format!(
                    "seed {seed} diverged in epoch {epoch}; variance over partial runs is meaningless"
                )))
            }
        };
        train_pct.push(last.train_pct_opt);
        val_pct.push(last.val_pct_opt);
    }
    let (train_mean, train_std) = mean_and_std(&train_pct);
    let (val_mean, val_std) = mean_and_std(&val_pct);
    Ok(SeedVariance {
        seeds: seeds.to_vec(),
        train_pct_opt: train_pct,
        val_pct_opt: val_pct,
        train_mean,
        train_std,
        val_mean,
        val_std,
    })
}
