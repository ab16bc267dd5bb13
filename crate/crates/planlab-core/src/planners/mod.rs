//! The three differentiable planners.
//!
//! All map a stacked maze-plus-goal image to per-state action logits through
//! K recurrent planning steps:
//!
//! * **VIN** — a learned reward image R̄ and K rounds of
//!   `Q̄ = conv([R̄; V̄])`, `V̄ = max` over the hidden channels, with a 1×1
//!   policy head reading the final Q̄;
//! * **GPPN** — an input convolution produces h⁰, then each step feeds a
//!   1-channel convolution of h through one shared LSTM cell per position
//!   (input size 1), the head reading h^K;
//! * **Hyper-VIN** — a two-layer hypernetwork predicts untied per-position
//!   3×3 kernels over R̄ and V̄, otherwise following the VIN recurrence.

mod checkpoint;
mod gppn;
mod hypervin;
mod vin;

pub use checkpoint::{load_checkpoint, peek_checkpoint, save_checkpoint, CheckpointHeader};

use crate::error::{Error, Result};
use crate::grid::{goal_map, GoalSpec, Kernel, MazeGrid, StateSpace};
use crate::rng::SplitMix64;
use crate::tensor::{NodeId, Scalar, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Vin,
    Gppn,
    HyperVin,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Vin => "vin",
            Arch::Gppn => "gppn",
            Arch::HyperVin => "hypervin",
        }
    }

    pub fn from_name(name: &str) -> Result<Arch> {
        match name {
            "vin" => Ok(Arch::Vin),
            "gppn" => Ok(Arch::Gppn),
            "hypervin" => Ok(Arch::HyperVin),
            other => Err(Error::config(format!(
                "unknown architecture '{other}' (expected vin, gppn, or hypervin)"
            ))),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Arch::Vin => 0,
            Arch::Gppn => 1,
            Arch::HyperVin => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Arch> {
        match code {
            0 => Ok(Arch::Vin),
            1 => Ok(Arch::Gppn),
            2 => Ok(Arch::HyperVin),
            other => Err(Error::contract(format!("unknown architecture code {other}"))),
        }
    }

    /// Hidden dimension matching the reference experimental protocol.
    pub fn default_hidden(self) -> usize {
        match self {
            Arch::Gppn => 150,
            // Hyper-VIN inherits the VIN width.
            Arch::Vin | Arch::HyperVin => 600,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub arch: Arch,
    pub k: usize,
    pub f: usize,
    pub hidden: usize,
    pub kernel: Kernel,
}

impl PlannerConfig {
    pub fn new(arch: Arch, k: usize, f: usize, hidden: usize, kernel: Kernel) -> Result<Self> {
        let cfg = PlannerConfig { arch, k, f, hidden, kernel };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("iteration count K must be ≥ 1"));
        }
        if self.f < 3 || self.f % 2 == 0 {
            return Err(Error::config(format!("kernel size F = {} must be odd and ≥ 3", self.f)));
        }
        if self.hidden < 1 {
            return Err(Error::config("hidden dimension must be ≥ 1"));
        }
        if self.arch == Arch::HyperVin && self.f != 3 {
            return Err(Error::config("hypervin fixes F = 3"));
        }
        Ok(())
    }

    /// Input channels: one occupancy map plus the goal map.
    pub fn input_channels(&self) -> usize {
        1 + self.kernel.goal_channels()
    }

    /// Policy-head output channels: one block of actions per orientation.
    pub fn head_channels(&self) -> usize {
        self.kernel.orientation_count() * self.kernel.action_count()
    }

    /// Chebyshev radius beyond which an input cell cannot influence a probe
    /// cell: the input convolution plus K planning convolutions each add
    /// (F−1)/2.
    pub fn receptive_radius(&self) -> usize {
        (self.k + 1) * (self.f - 1) / 2
    }
}

/// Named parameter tensors in a fixed per-architecture order (the checkpoint
/// and initialization order).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    entries: Vec<(String, Tensor<T>)>,
}

/// Shapes and order of every parameter tensor for `cfg`.
pub fn param_specs(cfg: &PlannerConfig) -> Vec<(&'static str, Vec<usize>)> {
    let c = cfg.input_channels();
    let h = cfg.hidden;
    let f = cfg.f;
    let head = cfg.head_channels();
    match cfg.arch {
        Arch::Vin => vec![
            ("input_conv.weight", vec![1, c, f, f]),
            ("input_conv.bias", vec![1]),
            ("q_conv.weight", vec![h, 2, f, f]),
            ("q_conv.bias", vec![h]),
            ("head.weight", vec![head, h, 1, 1]),
            ("head.bias", vec![head]),
        ],
        Arch::Gppn => vec![
            ("input_conv.weight", vec![h, c, f, f]),
            ("input_conv.bias", vec![h]),
            ("h_conv.weight", vec![1, h, f, f]),
            ("h_conv.bias", vec![1]),
            ("lstm.weight", vec![4 * h, 1 + h]),
            ("lstm.bias", vec![4 * h]),
            ("head.weight", vec![head, h, 1, 1]),
            ("head.bias", vec![head]),
        ],
        Arch::HyperVin => vec![
            ("input_conv.weight", vec![1, c, 3, 3]),
            ("input_conv.bias", vec![1]),
            ("hyper1.weight", vec![h, c, 3, 3]),
            ("hyper1.bias", vec![h]),
            ("hyper2.weight", vec![2 * h * 9, h, 3, 3]),
            ("hyper2.bias", vec![2 * h * 9]),
            ("head.weight", vec![head, h, 1, 1]),
            ("head.bias", vec![head]),
        ],
    }
}

/// Per-tensor uniform initialization bound: weights and biases of a layer use
/// ±1/√fan_in of that layer.
fn init_bound(name: &str, shape: &[usize]) -> f64 {
    let fan_in = if name.starts_with("lstm") {
        // [4H, I+H] rows all see I+H inputs.
        shape[shape.len() - 1]
    } else {
        // Conv weights [O, C, F, F].
        shape[1] * shape[2] * shape[3]
    };
    1.0 / (fan_in as f64).sqrt()
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh parameters: every tensor uniform in ±1/√fan_in (biases use their
    /// layer's fan-in), then the LSTM forget-gate bias block is set to 1.
    pub fn init(cfg: &PlannerConfig, seed: u64) -> Result<ModelParams<T>> {
        cfg.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut entries = Vec::new();
        let specs = param_specs(cfg);
        for pair in specs.chunks(2) {
            let (wname, wshape) = &pair[0];
            let (bname, bshape) = &pair[1];
            let bound = init_bound(wname, wshape);
            let weight =
                Tensor::from_fn(wshape, |_| T::from_f64(rng.uniform_symmetric(bound)));
            let mut bias =
                Tensor::from_fn(bshape, |_| T::from_f64(rng.uniform_symmetric(bound)));
            if *bname == "lstm.bias" {
                let h = bshape[0] / 4;
                for v in &mut bias.data_mut()[h..2 * h] {
                    *v = T::ONE;
                }
            }
            entries.push((wname.to_string(), weight));
            entries.push((bname.to_string(), bias));
        }
        Ok(ModelParams { entries })
    }

    /// Assemble from named tensors, validating names, order, and shapes.
    pub fn from_entries(cfg: &PlannerConfig, entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let specs = param_specs(cfg);
        if entries.len() != specs.len() {
            return Err(Error::contract(format!(
                "{} parameter tensors, expected {}",
                entries.len(),
                specs.len()
            )));
        }
        for ((name, tensor), (sname, sshape)) in entries.iter().zip(&specs) {
            if name != sname || tensor.shape() != &sshape[..] {
                return Err(Error::contract(format!(
                    "parameter '{name}' {:?} does not match expected '{sname}' {sshape:?}",
                    tensor.shape()
                )));
            }
        }
        Ok(ModelParams { entries })
    }

    pub fn entries(&self) -> &[(String, Tensor<T>)] {
        &self.entries
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }

    /// Same shapes, all zeros (optimizer state buffers).
    pub fn zeros_like(&self) -> ModelParams<T> {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }
}

/// Stack the occupancy map (1 = open, 0 = wall) with the one-hot goal map
/// into the planner input image `[1 + goal_channels, m, m]`.
pub fn input_tensor<T: Scalar>(maze: &MazeGrid, goal: &GoalSpec, kernel: Kernel) -> Tensor<T> {
    let m = maze.size();
    let gmap = goal_map(goal, kernel, m);
    let mut data = Vec::with_capacity((1 + gmap.len() / (m * m)) * m * m);
    for &open in maze.cells() {
        data.push(if open { T::ONE } else { T::ZERO });
    }
    data.extend(gmap.iter().map(|&v| T::from_f64(v)));
    Tensor::from_vec(&[1 + kernel.goal_channels(), m, m], data).expect("consistent shapes")
}

/// Handles into one forward pass on a tape.
pub struct ForwardPass {
    /// Per-state action logits, shape `[S, A]`.
    pub logits: NodeId,
    /// Pre-gather policy-head map, shape `[O·A, m, m]` (probed by the
    /// translation-equivariance tests).
    pub head_map: NodeId,
    /// Parameter leaves in `ModelParams` entry order, for gradient reads.
    pub params: Vec<NodeId>,
}

pub(crate) struct Bound {
    names: Vec<&'static str>,
    pub ids: Vec<NodeId>,
}

impl Bound {
    pub fn id(&self, name: &str) -> NodeId {
        let at = self
            .names
            .iter()
            .position(|n| *n == name)
            .unwrap_or_else(|| panic!("parameter '{name}' not bound"));
        self.ids[at]
    }
}

/// Run one planner forward pass, binding `params` as tape leaves.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &PlannerConfig,
    params: &ModelParams<T>,
    input: &Tensor<T>,
    space: &StateSpace,
) -> Result<ForwardPass> {
    cfg.validate()?;
    let m = space.size();
    let want = [cfg.input_channels(), m, m];
    if input.shape() != want {
        return Err(Error::contract(format!(
            "planner input shape {:?}, expected {want:?}",
            input.shape()
        )));
    }
    if space.kernel() != cfg.kernel {
        return Err(Error::contract(format!(
            "state space kernel {} does not match config kernel {}",
            space.kernel().name(),
            cfg.kernel.name()
        )));
    }
    let specs = param_specs(cfg);
    let mut names = Vec::with_capacity(specs.len());
    let mut ids = Vec::with_capacity(specs.len());
    for ((name, tensor), (sname, sshape)) in params.entries().iter().zip(&specs) {
        if name != sname || tensor.shape() != &sshape[..] {
            return Err(Error::contract(format!(
                "parameter '{name}' {:?} does not match expected '{sname}' {sshape:?}",
                tensor.shape()
            )));
        }
        names.push(*sname);
        ids.push(tape.leaf(tensor.clone()));
    }
    let bound = Bound { names, ids };
    let input_id = tape.leaf(input.clone());

    let head_map = match cfg.arch {
        Arch::Vin => vin::forward(tape, cfg, &bound, input_id, m)?,
        Arch::Gppn => gppn::forward(tape, cfg, &bound, input_id, m)?,
        Arch::HyperVin => hypervin::forward(tape, cfg, &bound, input_id, m)?,
    };
    let logits = tape.gather_states(head_map, space)?;
    Ok(ForwardPass { logits, head_map, params: bound.ids })
}
