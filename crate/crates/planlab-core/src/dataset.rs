//! Sample generation and the binary dataset container.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! magic   "GPPN"
//! u16     format version (1)
//! u16     m
//! u8      kernel (0=news, 1=moore, 2=diffdrive)
//! u32     sample count
//! u64     generator seed for this file
//! u8      label tie-break policy (0 = lowest action index)
//! then per sample:
//!   maze    ⌈m²/8⌉ bytes; cell y·m+x is bit (y·m+x) mod 8 (LSB first) of
//!           byte (y·m+x)/8; 1 = open
//!   goal    orientation u8, x u16, y u16
//!   labels  u8 per state in enumeration order (0xFE = goal/stay)
//!   dists   u16 per state, same order
//! ```

use std::path::Path;

use rayon::prelude::*;

use crate::bytes::Reader;
use crate::error::{Error, Result};
use crate::grid::{AgentState, GoalSpec, Kernel, MazeGrid, StateSpace, TransitionTable};
use crate::maze::{generate_maze_with, sample_goal, Decimation};
use crate::oracle::{bfs_distances, optimal_labels, DistanceMap, LabelMap, GOAL_LABEL, UNREACHABLE};
use crate::rng::SplitMix64;

const MAGIC: &[u8; 4] = b"GPPN";
const VERSION: u16 = 1;
const TIE_BREAK_LOWEST: u8 = 0;

/// One labeled planning problem, with its state space prebuilt for training
/// and evaluation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub maze: MazeGrid,
    pub goal: GoalSpec,
    pub space: StateSpace,
    pub table: TransitionTable,
    pub goal_state: usize,
    pub labels: LabelMap,
    pub distances: DistanceMap,
}

impl Sample {
    /// Label a maze/goal pair with the exact oracle.
    pub fn build(maze: MazeGrid, kernel: Kernel, goal: GoalSpec) -> Result<Sample> {
        let space = StateSpace::new(&maze, kernel);
        let table = TransitionTable::build(&maze, &space);
        let goal_state = space
            .index(goal.goal)
            .ok_or_else(|| Error::contract("goal is not a valid state"))?;
        let distances = bfs_distances(&space, &table, goal_state);
        let labels = optimal_labels(&distances, &table)?;
        Ok(Sample { maze, goal, space, table, goal_state, labels, distances })
    }

    /// Reassemble a deserialized sample, trusting its stored labels.
    fn from_parts(
        maze: MazeGrid,
        kernel: Kernel,
        goal: GoalSpec,
        labels: LabelMap,
        distances: DistanceMap,
    ) -> Result<Sample> {
        let space = StateSpace::new(&maze, kernel);
        let table = TransitionTable::build(&maze, &space);
        let goal_state = space
            .index(goal.goal)
            .ok_or_else(|| Error::contract("stored goal is not a valid state"))?;
        if labels.labels().len() != space.len() || distances.len() != space.len() {
            return Err(Error::contract(format!(
                "stored maps cover {} / {} states, want {}",
                labels.labels().len(),
                distances.len(),
                space.len()
            )));
        }
        Ok(Sample { maze, goal, space, table, goal_state, labels, distances })
    }

    /// Cross-check the stored label and distance maps against the maze.
    pub fn verify(&self) -> Result<()> {
        let fresh = bfs_distances(&self.space, &self.table, self.goal_state);
        if fresh != self.distances {
            return Err(Error::Inconsistent("stored distances disagree with BFS".into()));
        }
        let actions = self.table.action_count();
        for s in 0..self.space.len() {
            let d = self.distances.get(s);
            let label = self.labels.get(s);
            if s == self.goal_state {
                if d != 0 || label != GOAL_LABEL {
                    return Err(Error::Inconsistent(format!(
                        "goal state {s} stored as distance {d}, label {label:#x}"
                    )));
                }
                continue;
            }
            if d == 0 || d == UNREACHABLE {
                return Err(Error::Inconsistent(format!("state {s} has distance {d}")));
            }
            if label as usize >= actions {
                return Err(Error::Inconsistent(format!("state {s} has label {label:#x}")));
            }
            let next_d = self.distances.get(self.table.next(s, label as usize));
            if next_d != d - 1 {
                return Err(Error::Inconsistent(format!(
                    "label {label} at state {s} leads to distance {next_d}, want {}",
                    d - 1
                )));
            }
            for a in 0..label as usize {
                if self.distances.get(self.table.next(s, a)) == d - 1 {
                    return Err(Error::Inconsistent(format!(
                        "state {s} labeled {label}, but action {a} is also optimal"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Dataset {
    pub m: usize,
    pub kernel: Kernel,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Generate `count` labeled samples. Sample `i` draws its maze (with
    /// per-maze decimation) and goal from the stream seeded `seed ^ i`, so
    /// generation is order-independent and reproducible.
    pub fn generate(m: usize, kernel: Kernel, count: usize, seed: u64) -> Result<Dataset> {
        let samples: Vec<Sample> = (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = SplitMix64::stream(seed, i);
                let maze = generate_maze_with(&mut rng, m, Decimation::PerMaze)?;
                let goal = sample_goal(&maze, kernel, &mut rng);
                Sample::build(maze, kernel, goal)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { m, kernel, seed, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total states across all samples.
    pub fn state_count(&self) -> usize {
        self.samples.iter().map(|s| s.space.len()).sum()
    }

    pub fn verify(&self) -> Result<()> {
        self.samples.par_iter().enumerate().try_for_each(|(i, s)| {
            s.verify().map_err(|e| Error::Inconsistent(format!("sample {i}: {e}")))
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if self.m > u16::MAX as usize {
            return Err(Error::contract("maze size exceeds the u16 header field"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.m as u16).to_le_bytes());
        out.push(self.kernel.code());
        out.extend_from_slice(&(self.samples.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(TIE_BREAK_LOWEST);
        let bitmap_len = (self.m * self.m + 7) / 8;
        for sample in &self.samples {
            let mut bitmap = vec![0u8; bitmap_len];
            for (i, &open) in sample.maze.cells().iter().enumerate() {
                if open {
                    bitmap[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&bitmap);
            let g = sample.goal.goal;
            out.push(g.orientation as u8);
            out.extend_from_slice(&(g.x as u16).to_le_bytes());
            out.extend_from_slice(&(g.y as u16).to_le_bytes());
            out.extend_from_slice(sample.labels.labels());
            for &d in sample.distances.values() {
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let buf = std::fs::read(path)?;
        let mut r = Reader::new(&buf);
        r.expect_magic(MAGIC, "dataset")?;
        let version = r.u16("format version")?;
        if version != VERSION {
            return Err(r.error(format!("unsupported dataset version {version}")));
        }
        let m = r.u16("maze size")? as usize;
        let kernel = Kernel::from_code(r.u8("kernel")?).map_err(|e| r.error(e.to_string()))?;
        let count = r.u32("sample count")? as usize;
        let seed = r.u64("generator seed")?;
        let tie = r.u8("tie-break policy")?;
        if tie != TIE_BREAK_LOWEST {
            return Err(r.error(format!("unknown tie-break policy {tie}")));
        }
        let bitmap_len = (m * m + 7) / 8;
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            let bitmap = r.take(bitmap_len, "maze bitmap")?;
            let open: Vec<bool> =
                (0..m * m).map(|c| bitmap[c / 8] >> (c % 8) & 1 == 1).collect();
            let maze = MazeGrid::new(m, open)
                .map_err(|e| r.error(format!("sample {i} maze: {e}")))?;
            let orientation = r.u8("goal orientation")? as usize;
            let x = r.u16("goal x")? as usize;
            let y = r.u16("goal y")? as usize;
            let goal = GoalSpec::new(&maze, kernel, AgentState { x, y, orientation })
                .map_err(|e| r.error(format!("sample {i} goal: {e}")))?;
            let n_states = StateSpace::new(&maze, kernel).len();
            let labels = LabelMap::from_labels(r.take(n_states, "label map")?.to_vec());
            let raw = r.take(2 * n_states, "distance map")?;
            let distances = DistanceMap::from_values(
                raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect(),
            );
            samples.push(
                Sample::from_parts(maze, kernel, goal, labels, distances)
                    .map_err(|e| r.error(format!("sample {i}: {e}")))?,
            );
        }
        r.finish()?;
        Ok(Dataset { m, kernel, seed, samples })
    }
}
