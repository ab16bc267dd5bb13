//! Exact ground truth: shortest-path distances, optimal-action labels, and a
//! tabular value-iteration reference planner.

use crate::error::{Error, Result};
use crate::grid::{StateSpace, TransitionTable};

/// Label stored for the goal state, which has no optimal action ("stay").
pub const GOAL_LABEL: u8 = 0xFE;

/// Distance sentinel for unreachable states. Never produced on connected
/// mazes: NEWS/Moore moves are symmetric, and Differential Drive turns make
/// every orientation reachable at every cell.
pub const UNREACHABLE: u16 = u16::MAX;

/// Per-state shortest distance to the goal, in actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMap {
    values: Vec<u16>,
}

impl DistanceMap {
    pub fn from_values(values: Vec<u16>) -> DistanceMap {
        DistanceMap { values }
    }

    pub fn get(&self, state: usize) -> u16 {
        self.values[state]
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-state optimal action (lowest index among distance-decreasing actions);
/// the goal state carries [`GOAL_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn from_labels(labels: Vec<u8>) -> LabelMap {
        LabelMap { labels }
    }

    pub fn get(&self, state: usize) -> u8 {
        self.labels[state]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Breadth-first search backward from the goal over reversed edges.
pub fn bfs_distances(space: &StateSpace, table: &TransitionTable, goal: usize) -> DistanceMap {
    let n = space.len();
    let actions = table.action_count();

    // Reversed adjacency: predecessors[t] lists states s with next(s, a) = t.
    let mut pred_count = vec![0u32; n];
    for s in 0..n {
        for a in 0..actions {
            pred_count[table.next(s, a)] += 1;
        }
    }
    let mut offsets = vec![0usize; n + 1];
    for t in 0..n {
        offsets[t + 1] = offsets[t] + pred_count[t] as usize;
    }
    let mut preds = vec![0u32; offsets[n]];
    let mut fill = offsets.clone();
    for s in 0..n {
        for a in 0..actions {
            let t = table.next(s, a);
            preds[fill[t]] = s as u32;
            fill[t] += 1;
        }
    }

    let mut dist = vec![UNREACHABLE; n];
    dist[goal] = 0;
    let mut queue = std::collections::VecDeque::with_capacity(n);
    queue.push_back(goal);
    while let Some(t) = queue.pop_front() {
        let next_d = dist[t] + 1;
        for &s in &preds[offsets[t]..offsets[t + 1]] {
            let s = s as usize;
            if dist[s] == UNREACHABLE {
                dist[s] = next_d;
                queue.push_back(s);
            }
        }
    }
    DistanceMap { values: dist }
}

/// For each state, the lowest-indexed action whose successor decreases the
/// distance by exactly 1; the goal gets [`GOAL_LABEL`].
pub fn optimal_labels(dist: &DistanceMap, table: &TransitionTable) -> Result<LabelMap> {
    let n = dist.len();
    let actions = table.action_count();
    let mut labels = vec![0u8; n];
    for s in 0..n {
        let d = dist.get(s);
        if d == 0 {
            labels[s] = GOAL_LABEL;
            continue;
        }
        if d == UNREACHABLE {
            return Err(Error::Inconsistent(format!("state {s} unreachable from the goal")));
        }
        let mut found = None;
        for a in 0..actions {
            if dist.get(table.next(s, a)) == d - 1 {
                found = Some(a as u8);
                break;
            }
        }
        labels[s] = found.ok_or_else(|| {
            Error::Inconsistent(format!("no action decreases distance from state {s}"))
        })?;
    }
    Ok(LabelMap { labels })
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    /// Greedy action per state (ties broken by lowest index); the goal keeps
    /// its greedy action too — rollouts stop there regardless.
    pub policy: Vec<u8>,
}

/// Tabular value iteration on the true deterministic model: reward −1 per
/// step, the goal absorbing with reward 0.
pub fn value_iteration(
    table: &TransitionTable,
    goal: usize,
    gamma: f64,
    iters: usize,
) -> ValueIteration {
    let n = table.state_count();
    let actions = table.action_count();
    let mut values = vec![0.0f64; n];
    let mut next_values = vec![0.0f64; n];
    for _ in 0..iters {
        for s in 0..n {
            if s == goal {
                next_values[s] = 0.0;
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..actions {
                let q = -1.0 + gamma * values[table.next(s, a)];
                if q > best {
                    best = q;
                }
            }
            next_values[s] = best;
        }
        std::mem::swap(&mut values, &mut next_values);
    }
    let mut policy = vec![0u8; n];
    for s in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0u8;
        for a in 0..actions {
            let q = -1.0 + gamma * values[table.next(s, a)];
            if q > best {
                best = q;
                arg = a as u8;
            }
        }
        policy[s] = arg;
    }
    ValueIteration { values, policy }
}
