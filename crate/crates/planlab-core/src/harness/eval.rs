//! Policy evaluation: argmax rollouts and the %Optimal / %Success metrics.

use rayon::prelude::*;

use crate::dataset::{Dataset, Sample};
use crate::error::Result;
use crate::planners::{forward, input_tensor, ModelParams, PlannerConfig};
use crate::tensor::{Scalar, Tape, Tensor};

/// Aggregate policy quality over every state of a dataset split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub pct_opt: f64,
    pub pct_suc: f64,
}

/// Raw rollout tallies, summable across samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct RolloutCounts {
    pub optimal: usize,
    pub success: usize,
    pub states: usize,
}

impl RolloutCounts {
    pub fn add(&mut self, other: RolloutCounts) {
        self.optimal += other.optimal;
        self.success += other.success;
        self.states += other.states;
    }

    pub fn metrics(&self) -> Metrics {
        let denom = self.states.max(1) as f64;
        Metrics {
            pct_opt: 100.0 * self.optimal as f64 / denom,
            pct_suc: 100.0 * self.success as f64 / denom,
        }
    }
}

/// Steps allowed before a rollout is declared lost.
pub fn rollout_cap(m: usize) -> usize {
    4 * m * m
}

/// Per-row argmax over `[N, A]` logits, ties to the lowest action index.
pub fn argmax_policy<T: Scalar>(logits: &Tensor<T>) -> Vec<u8> {
    let shape = logits.shape();
    let (n, actions) = (shape[0], shape[1]);
    let data = logits.data();
    let mut policy = Vec::with_capacity(n);
    for row in 0..n {
        let z = &data[row * actions..(row + 1) * actions];
        let mut best = 0usize;
        for (a, &v) in z.iter().enumerate().skip(1) {
            if v > z[best] {
                best = a;
            }
        }
        policy.push(best as u8);
    }
    policy
}

/// Roll the policy table out from every state of one sample.
///
/// A start state counts as a success when the walk reaches the goal within
/// `4·m²` steps, and as optimal when it does so in exactly the oracle
/// distance. The goal itself is a zero-length optimal path.
pub fn rollout_policy(sample: &Sample, policy: &[u8]) -> RolloutCounts {
    let cap = rollout_cap(sample.maze.size());
    let mut counts = RolloutCounts { states: sample.space.len(), ..Default::default() };
    for start in 0..sample.space.len() {
        if start == sample.goal_state {
            counts.success += 1;
            counts.optimal += 1;
            continue;
        }
        let mut state = start;
        let mut steps = 0usize;
        while state != sample.goal_state && steps < cap {
            state = sample.table.next(state, policy[state] as usize);
            steps += 1;
        }
        if state == sample.goal_state {
            counts.success += 1;
            if steps == sample.distances.get(start) as usize {
                counts.optimal += 1;
            }
        }
    }
    counts
}

/// Forward one sample and roll out its argmax policy.
pub fn rollout_model<T: Scalar>(
    cfg: &PlannerConfig,
    params: &ModelParams<T>,
    sample: &Sample,
) -> Result<RolloutCounts> {
    let mut tape = Tape::new();
    let input = input_tensor::<T>(&sample.maze, &sample.goal, cfg.kernel);
    let pass = forward(&mut tape, cfg, params, &input, &sample.space)?;
    let policy = argmax_policy(tape.value(pass.logits));
    Ok(rollout_policy(sample, &policy))
}

/// %Opt / %Suc of a model over every state of every sample in `data`.
pub fn evaluate<T: Scalar>(
    cfg: &PlannerConfig,
    params: &ModelParams<T>,
    data: &Dataset,
) -> Result<Metrics> {
    let counts = data
        .samples
        .par_iter()
        .map(|sample| rollout_model(cfg, params, sample))
        .try_reduce(RolloutCounts::default, |mut acc, c| {
            acc.add(c);
            Ok(acc)
        })?;
    Ok(counts.metrics())
}

/// Evaluate the stored oracle labels as a policy. Closes the metric loop:
/// this must score 100/100 on any verified dataset.
pub fn evaluate_oracle(data: &Dataset) -> Metrics {
    let mut total = RolloutCounts::default();
    for sample in &data.samples {
        total.add(rollout_policy(sample, sample.labels.labels()));
    }
    total.metrics()
}
