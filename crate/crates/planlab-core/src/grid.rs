//! Maze grids, transition kernels, and deterministic successor semantics.
//!
//! Conventions used throughout the crate:
//! * `x` is the column, `y` the row; `(0, 0)` is the top-left cell.
//! * North decreases `y`, East increases `x`.
//! * Orientations are encoded `0=N, 1=E, 2=S, 3=W`.
//! * 2D maps are stored row-major: index `y * m + x`.

use crate::error::{Error, Result};

/// Cardinal direction deltas in orientation order N, E, S, W.
pub const CARDINAL: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

/// Moore-neighborhood deltas, clockwise from North.
const MOORE: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Ground-truth action model for the maze MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    /// Move North, East, South, or West (actions 0..4 in that order).
    News,
    /// Move to any of the eight surrounding cells, clockwise from North.
    Moore,
    /// Action 0 moves forward along the current orientation; 1 turns left
    /// 90°; 2 turns right 90°. Turns always succeed in place.
    DiffDrive,
}

impl Kernel {
    pub fn action_count(self) -> usize {
        match self {
            Kernel::News => 4,
            Kernel::Moore => 8,
            Kernel::DiffDrive => 3,
        }
    }

    pub fn orientation_count(self) -> usize {
        match self {
            Kernel::News | Kernel::Moore => 1,
            Kernel::DiffDrive => 4,
        }
    }

    /// Number of channels in the one-hot goal map fed to the planners.
    pub fn goal_channels(self) -> usize {
        self.orientation_count()
    }

    /// Stable on-disk code (0=NEWS, 1=MOORE, 2=DIFFDRIVE).
    pub fn code(self) -> u8 {
        match self {
            Kernel::News => 0,
            Kernel::Moore => 1,
            Kernel::DiffDrive => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Kernel> {
        match code {
            0 => Ok(Kernel::News),
            1 => Ok(Kernel::Moore),
            2 => Ok(Kernel::DiffDrive),
            other => Err(Error::contract(format!("unknown kernel code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::News => "news",
            Kernel::Moore => "moore",
            Kernel::DiffDrive => "diffdrive",
        }
    }

    pub fn from_name(name: &str) -> Result<Kernel> {
        match name {
            "news" => Ok(Kernel::News),
            "moore" => Ok(Kernel::Moore),
            "diffdrive" => Ok(Kernel::DiffDrive),
            other => Err(Error::config(format!(
                "unknown kernel '{other}' (expected news, moore, or diffdrive)"
            ))),
        }
    }
}

/// An m×m occupancy grid. `true` cells are open floor, `false` cells walls.
///
/// Invariants enforced at construction: all border cells are walls, at least
/// one cell is open, and the open cells form a single 4-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeGrid {
    m: usize,
    open: Vec<bool>,
}

impl MazeGrid {
    pub fn new(m: usize, open: Vec<bool>) -> Result<MazeGrid> {
        if m == 0 || open.len() != m * m {
            return Err(Error::InvalidMaze(format!(
                "cell buffer has {} entries, want {}",
                open.len(),
                m * m
            )));
        }
        let grid = MazeGrid { m, open };
        grid.check_invariants()?;
        Ok(grid)
    }

    fn check_invariants(&self) -> Result<()> {
        let m = self.m;
        for y in 0..m {
            for x in 0..m {
                let border = x == 0 || y == 0 || x == m - 1 || y == m - 1;
                if border && self.open[y * m + x] {
                    return Err(Error::InvalidMaze(format!("border cell ({x}, {y}) is open")));
                }
            }
        }
        let total_open = self.open.iter().filter(|&&c| c).count();
        if total_open == 0 {
            return Err(Error::InvalidMaze("no open cells".into()));
        }
        // Flood fill under the 4-neighborhood from the first open cell.
        let start = self.open.iter().position(|&c| c).unwrap();
        let mut seen = vec![false; m * m];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0usize;
        while let Some(idx) = stack.pop() {
            reached += 1;
            let (x, y) = (idx % m, idx / m);
            for (dx, dy) in CARDINAL {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if nx >= m || ny >= m {
                    continue;
                }
                let nidx = ny * m + nx;
                if self.open[nidx] && !seen[nidx] {
                    seen[nidx] = true;
                    stack.push(nidx);
                }
            }
        }
        if reached != total_open {
            return Err(Error::InvalidMaze(format!(
                "open cells are disconnected ({reached} of {total_open} reachable)"
            )));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// True when `(x, y)` is in bounds and open.
    pub fn is_open(&self, x: usize, y: usize) -> bool {
        x < self.m && y < self.m && self.open[y * self.m + x]
    }

    fn is_open_signed(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && self.is_open(x as usize, y as usize)
    }

    pub fn count_open(&self) -> usize {
        self.open.iter().filter(|&&c| c).count()
    }

    /// Open cells as `(x, y)` in row-major order (y outer, x inner).
    pub fn open_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.m;
        (0..m * m).filter(|&i| self.open[i]).map(move |i| (i % m, i / m))
    }

    /// Raw row-major occupancy, `true` = open.
    pub fn cells(&self) -> &[bool] {
        &self.open
    }

    /// Parse a maze drawing: `#` walls, `.` open, one row per line.
    pub fn from_ascii(art: &str) -> Result<MazeGrid> {
        let rows: Vec<&str> = art.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let m = rows.len();
        let mut open = Vec::with_capacity(m * m);
        for row in &rows {
            if row.chars().count() != m {
                return Err(Error::InvalidMaze(format!(
                    "row '{row}' has {} cells, want {m}",
                    row.chars().count()
                )));
            }
            for ch in row.chars() {
                match ch {
                    '#' => open.push(false),
                    '.' => open.push(true),
                    other => {
                        return Err(Error::InvalidMaze(format!("unexpected cell character '{other}'")))
                    }
                }
            }
        }
        MazeGrid::new(m, open)
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.m + 1) * self.m);
        for y in 0..self.m {
            for x in 0..self.m {
                out.push(if self.open[y * self.m + x] { '.' } else { '#' });
            }
            out.push('\n');
        }
        out
    }

    /// Reflect across the main diagonal (swap x and y).
    pub fn transposed(&self) -> MazeGrid {
        let m = self.m;
        let mut open = vec![false; m * m];
        for y in 0..m {
            for x in 0..m {
                open[x * m + y] = self.open[y * m + x];
            }
        }
        MazeGrid { m, open }
    }
}

/// Agent configuration: a cell plus (for Differential Drive) an orientation.
/// NEWS and Moore states always carry orientation 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentState {
    pub x: usize,
    pub y: usize,
    pub orientation: usize,
}

impl AgentState {
    pub fn cell(x: usize, y: usize) -> AgentState {
        AgentState { x, y, orientation: 0 }
    }

    pub fn oriented(x: usize, y: usize, orientation: usize) -> AgentState {
        AgentState { x, y, orientation }
    }
}

/// A navigation target. For NEWS and Moore this is a cell; for Differential
/// Drive the target orientation is part of the goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoalSpec {
    pub goal: AgentState,
}

impl GoalSpec {
    pub fn new(maze: &MazeGrid, kernel: Kernel, goal: AgentState) -> Result<GoalSpec> {
        validate_state(maze, kernel, goal)?;
        Ok(GoalSpec { goal })
    }
}

fn validate_state(maze: &MazeGrid, kernel: Kernel, s: AgentState) -> Result<()> {
    if !maze.is_open(s.x, s.y) {
        return Err(Error::contract(format!("state ({}, {}) is not an open cell", s.x, s.y)));
    }
    if s.orientation >= kernel.orientation_count() {
        return Err(Error::contract(format!(
            "orientation {} out of range for {}",
            s.orientation,
            kernel.name()
        )));
    }
    Ok(())
}

/// Deterministic transition function. Movement into a wall or off-grid is a
/// self-loop; Differential Drive turns always succeed in place.
pub fn successor(maze: &MazeGrid, kernel: Kernel, s: AgentState, a: usize) -> Result<AgentState> {
    validate_state(maze, kernel, s)?;
    if a >= kernel.action_count() {
        return Err(Error::contract(format!("action {a} out of range for {}", kernel.name())));
    }
    let next = match kernel {
        Kernel::News => step(maze, s, CARDINAL[a]),
        Kernel::Moore => step(maze, s, MOORE[a]),
        Kernel::DiffDrive => match a {
            0 => step(maze, s, CARDINAL[s.orientation]),
            1 => AgentState { orientation: (s.orientation + 3) % 4, ..s },
            _ => AgentState { orientation: (s.orientation + 1) % 4, ..s },
        },
    };
    Ok(next)
}

fn step(maze: &MazeGrid, s: AgentState, (dx, dy): (isize, isize)) -> AgentState {
    let (nx, ny) = (s.x as isize + dx, s.y as isize + dy);
    if maze.is_open_signed(nx, ny) {
        AgentState { x: nx as usize, y: ny as usize, ..s }
    } else {
        s
    }
}

/// All agent states of a maze in row-major-then-orientation order.
pub fn enumerate_states(maze: &MazeGrid, kernel: Kernel) -> Vec<AgentState> {
    let orientations = kernel.orientation_count();
    let mut states = Vec::with_capacity(maze.count_open() * orientations);
    for (x, y) in maze.open_cells() {
        for o in 0..orientations {
            states.push(AgentState { x, y, orientation: o });
        }
    }
    states
}

/// Indexed state set: the canonical enumeration plus the inverse lookup.
#[derive(Debug, Clone)]
pub struct StateSpace {
    kernel: Kernel,
    m: usize,
    states: Vec<AgentState>,
    index_of: Vec<u32>,
}

const NO_STATE: u32 = u32::MAX;

impl StateSpace {
    pub fn new(maze: &MazeGrid, kernel: Kernel) -> StateSpace {
        let m = maze.size();
        let orientations = kernel.orientation_count();
        let states = enumerate_states(maze, kernel);
        let mut index_of = vec![NO_STATE; m * m * orientations];
        for (i, s) in states.iter().enumerate() {
            index_of[(s.y * m + s.x) * orientations + s.orientation] = i as u32;
        }
        StateSpace { kernel, m, states, index_of }
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> AgentState {
        self.states[index]
    }

    pub fn index(&self, s: AgentState) -> Option<usize> {
        let orientations = self.kernel.orientation_count();
        if s.x >= self.m || s.y >= self.m || s.orientation >= orientations {
            return None;
        }
        match self.index_of[(s.y * self.m + s.x) * orientations + s.orientation] {
            NO_STATE => None,
            i => Some(i as usize),
        }
    }
}

/// Dense successor table: `next(state, action)` as state indices.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    action_count: usize,
    next: Vec<u32>,
}

impl TransitionTable {
    pub fn build(maze: &MazeGrid, space: &StateSpace) -> TransitionTable {
        let kernel = space.kernel();
        let actions = kernel.action_count();
        let mut next = vec![NO_STATE; space.len() * actions];
        for (i, &s) in space.states().iter().enumerate() {
            for a in 0..actions {
                let t = successor(maze, kernel, s, a).expect("enumerated states are valid");
                next[i * actions + a] = space.index(t).expect("successors stay in the state space") as u32;
            }
        }
        TransitionTable { action_count: actions, next }
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn next(&self, state: usize, action: usize) -> usize {
        self.next[state * self.action_count + action] as usize
    }

    pub fn state_count(&self) -> usize {
        self.next.len() / self.action_count
    }
}

/// One-hot goal map with shape `[goal_channels, m, m]`, flattened row-major.
/// The hot entry sits at channel = goal orientation (0 for NEWS/Moore).
pub fn goal_map(goal: &GoalSpec, kernel: Kernel, m: usize) -> Vec<f64> {
    let channels = kernel.goal_channels();
    let mut map = vec![0.0; channels * m * m];
    let g = goal.goal;
    map[g.orientation * m * m + g.y * m + g.x] = 1.0;
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room5() -> MazeGrid {
        MazeGrid::from_ascii(
            "#####\n\
             #...#\n\
             #...#\n\
             #...#\n\
             #####",
        )
        .unwrap()
    }

    #[test]
    fn rejects_open_border() {
        let mut open = vec![false; 25];
        open[0] = true;
        assert!(MazeGrid::new(5, open).is_err());
    }

    #[test]
    fn rejects_fully_walled() {
        assert!(MazeGrid::new(5, vec![false; 25]).is_err());
    }

    #[test]
    fn rejects_disconnected() {
        let art = "#####\n\
                   #.#.#\n\
                   #####\n\
                   #.#.#\n\
                   #####";
        assert!(MazeGrid::from_ascii(art).is_err());
    }

    #[test]
    fn news_moves_north() {
        let maze = room5();
        let s = AgentState::cell(2, 2);
        let n = successor(&maze, Kernel::News, s, 0).unwrap();
        assert_eq!(n, AgentState::cell(2, 1));
    }

    #[test]
    fn blocked_move_self_loops() {
        let maze = room5();
        let s = AgentState::cell(2, 1);
        for kernel in [Kernel::News, Kernel::Moore] {
            let n = successor(&maze, kernel, s, 0).unwrap();
            assert_eq!(n, s, "{kernel:?} into the north wall should stay put");
        }
        let facing_north = AgentState::oriented(2, 1, 0);
        let n = successor(&maze, Kernel::DiffDrive, facing_north, 0).unwrap();
        assert_eq!(n, facing_north);
    }

    #[test]
    fn diffdrive_turns() {
        let maze = room5();
        let s = AgentState::oriented(2, 2, 0);
        let right = successor(&maze, Kernel::DiffDrive, s, 2).unwrap();
        assert_eq!(right, AgentState::oriented(2, 2, 1));
        let left = successor(&maze, Kernel::DiffDrive, s, 1).unwrap();
        assert_eq!(left, AgentState::oriented(2, 2, 3));
    }

    #[test]
    fn diffdrive_forward_follows_orientation() {
        let maze = room5();
        for (o, (dx, dy)) in CARDINAL.iter().enumerate() {
            let s = AgentState::oriented(2, 2, o);
            let n = successor(&maze, Kernel::DiffDrive, s, 0).unwrap();
            assert_eq!(n.x as isize, 2 + dx);
            assert_eq!(n.y as isize, 2 + dy);
            assert_eq!(n.orientation, o);
        }
    }

    #[test]
    fn moore_interior_has_eight_distinct_successors() {
        let maze = MazeGrid::from_ascii(
            "#######\n\
             #.....#\n\
             #.....#\n\
             #.....#\n\
             #.....#\n\
             #.....#\n\
             #######",
        )
        .unwrap();
        let s = AgentState::cell(3, 3);
        let mut seen = std::collections::HashSet::new();
        for a in 0..8 {
            seen.insert(successor(&maze, Kernel::Moore, s, a).unwrap());
        }
        assert_eq!(seen.len(), 8);
        assert!(!seen.contains(&s));
    }

    #[test]
    fn invalid_inputs_are_contract_errors() {
        let maze = room5();
        assert!(successor(&maze, Kernel::News, AgentState::cell(0, 0), 0).is_err());
        assert!(successor(&maze, Kernel::News, AgentState::cell(2, 2), 4).is_err());
        assert!(successor(&maze, Kernel::DiffDrive, AgentState::oriented(2, 2, 4), 0).is_err());
    }

    #[test]
    fn enumeration_counts_and_order() {
        let maze = MazeGrid::from_ascii(
            "#####\n\
             #..##\n\
             ##..#\n\
             ###.#\n\
             #####",
        )
        .unwrap();
        let news = enumerate_states(&maze, Kernel::News);
        assert_eq!(news.len(), 5);
        // Row-major: (1,1), (2,1), (2,2), (3,2), (3,3).
        assert_eq!(news[0], AgentState::cell(1, 1));
        assert_eq!(news[1], AgentState::cell(2, 1));
        assert_eq!(news[4], AgentState::cell(3, 3));

        let dd = enumerate_states(&maze, Kernel::DiffDrive);
        assert_eq!(dd.len(), 20);
        assert_eq!(dd[0], AgentState::oriented(1, 1, 0));
        assert_eq!(dd[3], AgentState::oriented(1, 1, 3));
        assert_eq!(dd[4], AgentState::oriented(2, 1, 0));
    }

    #[test]
    fn state_space_round_trips_indices() {
        let maze = room5();
        for kernel in [Kernel::News, Kernel::Moore, Kernel::DiffDrive] {
            let space = StateSpace::new(&maze, kernel);
            assert_eq!(space.len(), 9 * kernel.orientation_count());
            for (i, &s) in space.states().iter().enumerate() {
                assert_eq!(space.index(s), Some(i));
            }
            assert_eq!(space.index(AgentState::cell(0, 0)), None);
        }
    }

    #[test]
    fn transition_table_matches_successor() {
        let maze = room5();
        let space = StateSpace::new(&maze, Kernel::DiffDrive);
        let table = TransitionTable::build(&maze, &space);
        for (i, &s) in space.states().iter().enumerate() {
            for a in 0..3 {
                let expect = successor(&maze, Kernel::DiffDrive, s, a).unwrap();
                assert_eq!(space.state(table.next(i, a)), expect);
            }
        }
    }

    #[test]
    fn goal_maps_are_one_hot() {
        let maze = room5();
        let news_goal = GoalSpec::new(&maze, Kernel::News, AgentState::cell(3, 2)).unwrap();
        let map = goal_map(&news_goal, Kernel::News, 5);
        assert_eq!(map.len(), 25);
        assert_eq!(map.iter().sum::<f64>(), 1.0);
        assert_eq!(map[2 * 5 + 3], 1.0);

        let dd_goal =
            GoalSpec::new(&maze, Kernel::DiffDrive, AgentState::oriented(3, 2, 1)).unwrap();
        let map = goal_map(&dd_goal, Kernel::DiffDrive, 5);
        assert_eq!(map.len(), 100);
        assert_eq!(map.iter().sum::<f64>(), 1.0);
        assert_eq!(map[25 + 2 * 5 + 3], 1.0);
    }

    #[test]
    fn goal_must_be_open() {
        let maze = room5();
        assert!(GoalSpec::new(&maze, Kernel::News, AgentState::cell(0, 0)).is_err());
    }

    #[test]
    fn transpose_is_involutive() {
        let maze = MazeGrid::from_ascii(
            "#####\n\
             #..##\n\
             ##..#\n\
             ###.#\n\
             #####",
        )
        .unwrap();
        let t = maze.transposed();
        assert!(t.is_open(1, 2));
        assert!(!t.is_open(2, 1));
        assert_eq!(t.transposed(), maze);
    }
}
