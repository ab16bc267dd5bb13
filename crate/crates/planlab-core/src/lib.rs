//! Differentiable path-planning laboratory.
//!
//! The crate bundles everything needed to study learned planners on grid
//! mazes end to end:
//!
//! * [`grid`] — maze grids, the NEWS / Moore / Differential Drive transition
//!   kernels, and deterministic successor semantics;
//! * [`maze`] — procedural maze generation (recursive backtracker + wall
//!   decimation) and goal sampling;
//! * [`oracle`] — exact shortest-path distances, optimal-action labels, and
//!   a tabular value-iteration reference planner;
//! * [`tensor`] — a small reverse-mode autodiff engine with exactly the
//!   operators the planners need;
//! * [`planners`] — the VIN, GPPN, and Hyper-VIN architectures;
//! * [`dataset`] — sample generation and the binary dataset container;
//! * [`harness`] — training loop, %Optimal / %Success metrics, and sweeps.

mod bytes;

pub mod dataset;
pub mod error;
pub mod grid;
pub mod harness;
pub mod maze;
pub mod oracle;
pub mod planners;
pub mod rng;
pub mod tensor;

pub use dataset::{Dataset, Sample};
pub use error::{Error, Result};
pub use harness::{
    evaluate, evaluate_oracle, learning_speed, seed_variance, sweep, train, EpochReport, Metrics,
    RunStatus, SweepReport, TrainConfig, TrainResult,
};
pub use grid::{
    enumerate_states, goal_map, successor, AgentState, GoalSpec, Kernel, MazeGrid, StateSpace,
    TransitionTable,
};
pub use maze::{generate_maze, generate_maze_with, sample_goal, Decimation, MazeGenConfig};
pub use oracle::{
    bfs_distances, optimal_labels, value_iteration, DistanceMap, LabelMap, ValueIteration,
    GOAL_LABEL, UNREACHABLE,
};
pub use planners::{
    forward, input_tensor, load_checkpoint, peek_checkpoint, save_checkpoint, Arch, ForwardPass,
    ModelParams, PlannerConfig,
};
pub use rng::SplitMix64;
pub use tensor::{Gradients, NodeId, Scalar, Tape, Tensor};
