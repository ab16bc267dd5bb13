//! Procedural maze generation: depth-first search with recursive backtracking
//! over a room lattice, followed by random wall decimation.
//!
//! For odd `m ≥ 5`, rooms sit at odd (x, y) coordinates, pillars at even-even
//! coordinates, and the cells between two rooms are "wall slots" the carver
//! and the decimation step may open. Borders and pillars are never opened,
//! so every generated maze is a supergraph of a spanning tree over rooms and
//! therefore connected.

use crate::error::{Error, Result};
use crate::grid::{AgentState, GoalSpec, Kernel, MazeGrid, CARDINAL};
use crate::rng::SplitMix64;

/// Wall-deletion probability policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decimation {
    /// Use this probability for every maze.
    Fixed(f64),
    /// Draw d ~ U[0, 1) once per maze.
    PerMaze,
}

#[derive(Debug, Clone)]
pub struct MazeGenConfig {
    /// Maze side length; odd and ≥ 5 so the room lattice embeds exactly.
    pub m: usize,
    pub seed: u64,
    pub decimation: Decimation,
}

impl MazeGenConfig {
    fn validate(&self) -> Result<()> {
        if self.m < 5 || self.m % 2 == 0 {
            return Err(Error::config(format!("maze size {} must be odd and ≥ 5", self.m)));
        }
        if let Decimation::Fixed(d) = self.decimation {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::config(format!("decimation probability {d} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn generate_maze(cfg: &MazeGenConfig) -> Result<MazeGrid> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    generate_maze_with(&mut rng, cfg.m, cfg.decimation)
}

/// Carve a maze using draws from `rng` (callers that sample goals afterwards
/// keep using the same stream).
pub fn generate_maze_with(rng: &mut SplitMix64, m: usize, decimation: Decimation) -> Result<MazeGrid> {
    MazeGenConfig { m, seed: 0, decimation }.validate()?;
    let rooms = (m - 1) / 2; // rooms per side; room (i, j) lives at cell (2i+1, 2j+1)
    let mut open = vec![false; m * m];
    for j in 0..rooms {
        for i in 0..rooms {
            open[(2 * j + 1) * m + (2 * i + 1)] = true;
        }
    }

    // Recursive backtracker over the room lattice, iterative stack form.
    let mut visited = vec![false; rooms * rooms];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    while let Some(&(ci, cj)) = stack.last() {
        let mut candidates = [(0usize, 0usize); 4];
        let mut n = 0;
        for (dx, dy) in CARDINAL {
            let (ni, nj) = (ci as isize + dx, cj as isize + dy);
            if ni < 0 || nj < 0 || ni as usize >= rooms || nj as usize >= rooms {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            if !visited[nj * rooms + ni] {
                candidates[n] = (ni, nj);
                n += 1;
            }
        }
        if n == 0 {
            stack.pop();
            continue;
        }
        let (ni, nj) = candidates[rng.below(n as u64) as usize];
        visited[nj * rooms + ni] = true;
        // Open the wall slot between rooms (ci, cj) and (ni, nj).
        let wx = (2 * ci + 1 + 2 * ni + 1) / 2;
        let wy = (2 * cj + 1 + 2 * nj + 1) / 2;
        open[wy * m + wx] = true;
        stack.push((ni, nj));
    }

    // Wall decimation: one uniform draw per room-to-room slot, row-major, so
    // a fixed seed yields monotone open sets as d grows.
    let d = match decimation {
        Decimation::Fixed(d) => d,
        Decimation::PerMaze => rng.next_f64(),
    };
    for y in 1..m - 1 {
        for x in 1..m - 1 {
            if x % 2 == y % 2 {
                continue; // room or pillar, not a slot
            }
            if rng.next_f64() < d {
                open[y * m + x] = true;
            }
        }
    }

    MazeGrid::new(m, open)
}

/// Sample a goal uniformly over open cells; Differential Drive goals also get
/// a uniform orientation.
pub fn sample_goal(maze: &MazeGrid, kernel: Kernel, rng: &mut SplitMix64) -> GoalSpec {
    let cells: Vec<(usize, usize)> = maze.open_cells().collect();
    let (x, y) = cells[rng.below(cells.len() as u64) as usize];
    let orientation = match kernel {
        Kernel::DiffDrive => rng.below(4) as usize,
        _ => 0,
    };
    GoalSpec { goal: AgentState { x, y, orientation } }
}
