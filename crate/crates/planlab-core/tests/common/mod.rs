//! Shared helpers for the integration suites: central-difference gradient
//! checking at 64-bit, the per-operator check battery, flat parameter-vector
//! plumbing, and the planner-level exactness probes (locality, reduction).
//!
//! The acceptance target and the focused suites run the same functions, so a
//! property is never verified two subtly different ways.

// Each test target compiles its own copy; not every target uses every helper.
#![allow(dead_code)]

use planlab_core::grid::{AgentState, GoalSpec, Kernel, MazeGrid, StateSpace};
use planlab_core::planners::{forward, input_tensor, Arch, ModelParams, PlannerConfig};
use planlab_core::tensor::{NodeId, Tape, Tensor};
use planlab_core::{Dataset, Sample, SplitMix64};

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Relative error with an absolute floor so near-zero gradients compare
/// sanely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Check one analytic gradient vector against central differences of `loss`
/// over a flat parameter vector. Returns the worst relative error.
pub fn check_fn_grads<F>(mut loss: F, x: &[f64], analytic: &[f64], what: &str) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "{what}: gradient length");
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + GRAD_STEP;
        let up = loss(&probe);
        probe[i] = x[i] - GRAD_STEP;
        let down = loss(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * GRAD_STEP);
        let err = rel_err(analytic[i], numeric);
        assert!(
            err < GRAD_TOL,
            "{what}: coordinate {i}: analytic {} vs numeric {} (rel err {err:.3e})",
            analytic[i],
            numeric
        );
        worst = worst.max(err);
    }
    worst
}

/// Flatten every tensor of a parameter set into one vector.
pub fn flatten_params(params: &ModelParams<f64>) -> Vec<f64> {
    let mut flat = Vec::new();
    for t in params.tensors() {
        flat.extend_from_slice(t.data());
    }
    flat
}

/// Write a flat vector back into the parameter tensors.
pub fn unflatten_params(params: &mut ModelParams<f64>, flat: &[f64]) {
    let mut at = 0;
    for t in params.tensors_mut() {
        let d = t.data_mut();
        d.copy_from_slice(&flat[at..at + d.len()]);
        at += d.len();
    }
    assert_eq!(at, flat.len());
}

/// Flatten a gradient list in the same order as [`flatten_params`].
pub fn flatten_tensors(tensors: &[Tensor<f64>]) -> Vec<f64> {
    let mut flat = Vec::new();
    for t in tensors {
        flat.extend_from_slice(t.data());
    }
    flat
}

/// Deterministic pseudo-random fill for test tensors, spread over [-1, 1].
pub fn fill_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = planlab_core::SplitMix64::new(seed);
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
    Tensor::from_vec(shape, data).unwrap()
}

// ---------------------------------------------------------------------------
// Per-operator gradient checks
// ---------------------------------------------------------------------------

/// Gradient-check an operator composition. `build` receives a tape holding
/// one leaf per entry of `shapes` (filled deterministically from `seed`) and
/// returns the scalar loss node; every leaf's analytic gradient is compared
/// against central differences. Returns the worst relative error seen.
pub fn gradcheck_op<B>(shapes: &[&[usize]], seed: u64, what: &str, build: B) -> f64
where
    B: Fn(&mut Tape<f64>, &[NodeId]) -> NodeId,
{
    let leaves: Vec<Tensor<f64>> =
        shapes.iter().enumerate().map(|(i, s)| fill_tensor(s, seed + i as u64)).collect();

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &ids);
    assert_eq!(tape.value(loss).len(), 1, "{what}: loss must be scalar");
    let loss_value = tape.value(loss).item();
    assert!(loss_value.is_finite(), "{what}: loss {loss_value}");
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = ids.iter().map(|&id| grads.wrt(id).clone()).collect();
    let analytic_flat = flatten_tensors(&analytic);

    let flat0 = flatten_tensors(&leaves);
    let eval = |flat: &[f64]| -> f64 {
        let mut tape = Tape::new();
        let mut at = 0;
        let mut ids = Vec::with_capacity(leaves.len());
        for t in &leaves {
            let n = t.len();
            let rebuilt = Tensor::from_vec(t.shape(), flat[at..at + n].to_vec()).unwrap();
            ids.push(tape.leaf(rebuilt));
            at += n;
        }
        let loss = build(&mut tape, &ids);
        tape.value(loss).item()
    };
    check_fn_grads(eval, &flat0, &analytic_flat, what)
}

/// A weighted sum turns any tensor output into a scalar loss with dense,
/// nontrivial cotangents. The weights are a constant, not a checked leaf.
pub fn weighted_sum(tape: &mut Tape<f64>, node: NodeId, seed: u64) -> NodeId {
    let shape = tape.value(node).shape().to_vec();
    let weights = tape.leaf(fill_tensor(&shape, seed));
    let prod = tape.mul(node, weights).unwrap();
    tape.sum_all(prod)
}

pub fn grads_add_mul_scale() -> f64 {
    let a = gradcheck_op(&[&[3, 4], &[3, 4]], 1, "add", |tape, ids| {
        let s = tape.add(ids[0], ids[1]).unwrap();
        weighted_sum(tape, s, 901)
    });
    let b = gradcheck_op(&[&[2, 5], &[2, 5]], 2, "mul", |tape, ids| {
        let p = tape.mul(ids[0], ids[1]).unwrap();
        weighted_sum(tape, p, 902)
    });
    let c = gradcheck_op(&[&[7]], 3, "scale", |tape, ids| {
        let s = tape.scale(ids[0], -2.5);
        weighted_sum(tape, s, 903)
    });
    a.max(b).max(c)
}

pub fn grads_activations() -> f64 {
    let a = gradcheck_op(&[&[4, 3]], 4, "sigmoid", |tape, ids| {
        let s = tape.sigmoid(ids[0]);
        weighted_sum(tape, s, 904)
    });
    let b = gradcheck_op(&[&[4, 3]], 5, "tanh", |tape, ids| {
        let t = tape.tanh(ids[0]);
        weighted_sum(tape, t, 905)
    });
    a.max(b)
}

pub fn grads_shape_ops() -> f64 {
    let a = gradcheck_op(&[&[2, 3, 3], &[1, 3, 3]], 6, "concat_channels", |tape, ids| {
        let c = tape.concat_channels(ids[0], ids[1]).unwrap();
        weighted_sum(tape, c, 906)
    });
    let b = gradcheck_op(&[&[2, 6]], 7, "reshape", |tape, ids| {
        let r = tape.reshape(ids[0], &[3, 4]).unwrap();
        weighted_sum(tape, r, 907)
    });
    let c = gradcheck_op(&[&[3, 2, 4]], 8, "flatten_positions", |tape, ids| {
        let f = tape.flatten_positions(ids[0]).unwrap();
        weighted_sum(tape, f, 908)
    });
    let d = gradcheck_op(&[&[8, 3]], 9, "unflatten_positions", |tape, ids| {
        let u = tape.unflatten_positions(ids[0], 2, 4).unwrap();
        weighted_sum(tape, u, 909)
    });
    a.max(b).max(c).max(d)
}

pub fn grads_conv2d() -> f64 {
    // 2 input channels, 3 output channels, 3x3 kernel over a 7x7 map: big
    // enough that interior taps, edges, and corners all appear.
    let a = gradcheck_op(&[&[2, 7, 7], &[3, 2, 3, 3], &[3]], 10, "conv2d", |tape, ids| {
        let y = tape.conv2d(ids[0], ids[1], ids[2]).unwrap();
        weighted_sum(tape, y, 910)
    });
    let b = gradcheck_op(&[&[1, 5, 5], &[2, 1, 5, 5], &[2]], 11, "conv2d_f5", |tape, ids| {
        let y = tape.conv2d(ids[0], ids[1], ids[2]).unwrap();
        weighted_sum(tape, y, 911)
    });
    a.max(b)
}

pub fn grads_channel_max() -> f64 {
    // Random fills collide with probability zero, so the argmax is stable
    // under the finite-difference step.
    gradcheck_op(&[&[4, 5, 5]], 12, "channel_max", |tape, ids| {
        let m = tape.channel_max(ids[0]).unwrap();
        weighted_sum(tape, m, 912)
    })
}

pub fn grads_lstm_cell() -> f64 {
    // Both outputs participate in the loss so the h' and c' backward paths
    // are exercised together, including the shared gate parameters.
    let shapes: [&[usize]; 5] = [&[6, 2], &[6, 3], &[6, 3], &[12, 5], &[12]];
    gradcheck_op(&shapes, 13, "lstm_cell", |tape, ids| {
        let (h_new, c_new) = tape.lstm_cell(ids[0], ids[1], ids[2], ids[3], ids[4]).unwrap();
        let lh = weighted_sum(tape, h_new, 913);
        let lc = weighted_sum(tape, c_new, 914);
        tape.add(lh, lc).unwrap()
    })
}

pub fn grads_lstm_cell_h_only() -> f64 {
    // The planner only reads h' at the last iteration; check that path alone.
    let shapes: [&[usize]; 5] = [&[4, 3], &[4, 2], &[4, 2], &[8, 5], &[8]];
    gradcheck_op(&shapes, 14, "lstm_cell_h_only", |tape, ids| {
        let (h_new, _c_new) = tape.lstm_cell(ids[0], ids[1], ids[2], ids[3], ids[4]).unwrap();
        weighted_sum(tape, h_new, 915)
    })
}

pub fn grads_chained_lstm() -> f64 {
    // Two recurrent steps with shared weights: gradients must sum across the
    // unrolled uses, mirroring the planner's K iterations.
    let shapes: [&[usize]; 4] = [&[3, 2], &[3, 2], &[8, 4], &[8]];
    gradcheck_op(&shapes, 15, "chained_lstm", |tape, ids| {
        let c0 = tape.leaf(Tensor::zeros(&[3, 2]));
        let (h1, c1) = tape.lstm_cell(ids[0], ids[1], c0, ids[2], ids[3]).unwrap();
        let (h2, _c2) = tape.lstm_cell(ids[0], h1, c1, ids[2], ids[3]).unwrap();
        weighted_sum(tape, h2, 916)
    })
}

pub fn grads_untied_conv_pair() -> f64 {
    // 2 hidden channels over a 5x5 map: weight maps are [2*2*9, 5, 5].
    gradcheck_op(&[&[1, 5, 5], &[1, 5, 5], &[36, 5, 5]], 16, "untied_conv_pair", |tape, ids| {
        let q = tape.untied_conv_pair(ids[0], ids[1], ids[2]).unwrap();
        weighted_sum(tape, q, 917)
    })
}

pub fn grads_gather_cross_entropy() -> f64 {
    let maze = MazeGrid::from_ascii(
        "#######\n\
         #..#..#\n\
         #.##.##\n\
         #.....#\n\
         #.###.#\n\
         #.....#\n\
         #######",
    )
    .unwrap();
    let space = StateSpace::new(&maze, Kernel::News);
    let goal = GoalSpec::new(&maze, Kernel::News, AgentState { x: 5, y: 5, orientation: 0 })
        .unwrap();
    let sample = Sample::build(maze, Kernel::News, goal).unwrap();
    let labels = sample.labels.labels().to_vec();
    let mask: Vec<bool> = (0..space.len()).map(|s| s != sample.goal_state).collect();

    gradcheck_op(&[&[4, 7, 7]], 17, "gather+softmax_ce", |tape, ids| {
        let gathered = tape.gather_states(ids[0], &space).unwrap();
        tape.softmax_cross_entropy(gathered, &labels, &mask).unwrap()
    })
}

pub fn grads_composite_pipeline() -> f64 {
    // conv -> channel_max -> concat -> conv -> gather -> CE: a miniature VIN
    // exercising every junction in one graph.
    let maze = MazeGrid::from_ascii(
        "#####\n\
         #...#\n\
         #.#.#\n\
         #...#\n\
         #####",
    )
    .unwrap();
    let space = StateSpace::new(&maze, Kernel::News);
    let goal =
        GoalSpec::new(&maze, Kernel::News, AgentState { x: 3, y: 3, orientation: 0 }).unwrap();
    let sample = Sample::build(maze.clone(), Kernel::News, goal).unwrap();
    let labels = sample.labels.labels().to_vec();
    let mask: Vec<bool> = (0..space.len()).map(|s| s != sample.goal_state).collect();

    let shapes: [&[usize]; 5] = [&[2, 5, 5], &[3, 2, 3, 3], &[3], &[4, 4, 3, 3], &[4]];
    gradcheck_op(&shapes, 18, "composite", |tape, ids| {
        let q = tape.conv2d(ids[0], ids[1], ids[2]).unwrap();
        let v = tape.channel_max(q).unwrap();
        let cat = tape.concat_channels(q, v).unwrap();
        let q2 = tape.conv2d(cat, ids[3], ids[4]).unwrap();
        let logits = tape.gather_states(q2, &space).unwrap();
        tape.softmax_cross_entropy(logits, &labels, &mask).unwrap()
    })
}

/// The full primitive battery, returning (operator, worst relative error).
pub fn all_primitive_gradchecks() -> Vec<(&'static str, f64)> {
    vec![
        ("add/mul/scale", grads_add_mul_scale()),
        ("sigmoid/tanh", grads_activations()),
        ("concat/reshape/flatten/unflatten", grads_shape_ops()),
        ("conv2d", grads_conv2d()),
        ("channel_max", grads_channel_max()),
        ("lstm_cell", grads_lstm_cell()),
        ("lstm_cell h-only", grads_lstm_cell_h_only()),
        ("chained lstm", grads_chained_lstm()),
        ("untied_conv_pair", grads_untied_conv_pair()),
        ("gather+cross_entropy", grads_gather_cross_entropy()),
        ("composite pipeline", grads_composite_pipeline()),
    ]
}

// ---------------------------------------------------------------------------
// Planner-level checks
// ---------------------------------------------------------------------------

pub fn test_sample(m: usize, kernel: Kernel, seed: u64) -> Sample {
    let mut data = Dataset::generate(m, kernel, 1, seed).unwrap();
    data.samples.remove(0)
}

/// Masked cross-entropy of one forward pass, as the trainer computes it.
pub fn sample_loss(cfg: &PlannerConfig, params: &ModelParams<f64>, sample: &Sample) -> f64 {
    let mut tape = Tape::new();
    let input = input_tensor::<f64>(&sample.maze, &sample.goal, cfg.kernel);
    let pass = forward(&mut tape, cfg, params, &input, &sample.space).unwrap();
    let mask: Vec<bool> = (0..sample.space.len()).map(|s| s != sample.goal_state).collect();
    let loss = tape.softmax_cross_entropy(pass.logits, sample.labels.labels(), &mask).unwrap();
    tape.value(loss).item()
}

pub fn sample_grads(cfg: &PlannerConfig, params: &ModelParams<f64>, sample: &Sample) -> Vec<f64> {
    let mut tape = Tape::new();
    let input = input_tensor::<f64>(&sample.maze, &sample.goal, cfg.kernel);
    let pass = forward(&mut tape, cfg, params, &input, &sample.space).unwrap();
    let mask: Vec<bool> = (0..sample.space.len()).map(|s| s != sample.goal_state).collect();
    let loss = tape.softmax_cross_entropy(pass.logits, sample.labels.labels(), &mask).unwrap();
    let grads = tape.backward(loss).unwrap();
    let tensors: Vec<Tensor<f64>> = pass.params.iter().map(|&id| grads.wrt(id).clone()).collect();
    flatten_tensors(&tensors)
}

/// Gradient-check a whole planner on one m=7 sample; returns the worst
/// relative error over every parameter coordinate.
pub fn gradcheck_planner(cfg: &PlannerConfig, kernel_seed: u64, what: &str) -> f64 {
    let sample = test_sample(7, cfg.kernel, kernel_seed);
    let params = ModelParams::<f64>::init(cfg, 99).unwrap();
    let flat = flatten_params(&params);
    let analytic = sample_grads(cfg, &params, &sample);
    let eval = |x: &[f64]| -> f64 {
        let mut probe = params.clone();
        unflatten_params(&mut probe, x);
        sample_loss(cfg, &probe, &sample)
    };
    let worst = check_fn_grads(eval, &flat, &analytic, what);
    println!("{what}: {} parameters, worst rel err {worst:.2e}", flat.len());
    worst
}

/// Full head map values for locality probing.
pub fn head_logits(
    cfg: &PlannerConfig,
    params: &ModelParams<f64>,
    maze: &MazeGrid,
    input: &Tensor<f64>,
) -> Vec<f64> {
    let space = StateSpace::new(maze, cfg.kernel);
    let mut tape = Tape::new();
    let pass = forward(&mut tape, cfg, params, input, &space).unwrap();
    tape.value(pass.head_map).data().to_vec()
}

/// Receptive-field exactness for one (arch, K, F): perturbing **every** input
/// cell at Chebyshev distance > (K+1)(F−1)/2 from the center probe must leave
/// the probe's head outputs bit-identical, while perturbing the probe's own
/// cell must change them. Returns the number of far cells swept.
pub fn locality_exhaustive(arch: Arch, k: usize, f: usize, m: usize) -> usize {
    let mut rng = SplitMix64::new(7);
    let maze =
        planlab_core::generate_maze_with(&mut rng, m, planlab_core::Decimation::Fixed(0.3))
            .unwrap();
    let goal = planlab_core::sample_goal(&maze, Kernel::News, &mut rng);

    let cfg = PlannerConfig::new(arch, k, f, 4, Kernel::News).unwrap();
    let radius = cfg.receptive_radius();
    assert_eq!(radius, (k + 1) * (f - 1) / 2);
    assert!(2 * radius + 2 < m, "map too small to have far cells");
    let params = ModelParams::<f64>::init(&cfg, 3).unwrap();
    let input = input_tensor::<f64>(&maze, &goal, Kernel::News);
    let base = head_logits(&cfg, &params, &maze, &input);
    let channels = cfg.head_channels();

    let probe = (m / 2, m / 2);
    let mut swept = 0;
    for py in 0..m {
        for px in 0..m {
            let cheb = (px as i64 - probe.0 as i64)
                .abs()
                .max((py as i64 - probe.1 as i64).abs()) as usize;
            if cheb <= radius {
                continue;
            }
            let mut dirty = input.clone();
            dirty.data_mut()[py * m + px] += 0.731;
            let out = head_logits(&cfg, &params, &maze, &dirty);
            for ch in 0..channels {
                let idx = ch * m * m + probe.1 * m + probe.0;
                assert_eq!(
                    base[idx].to_bits(),
                    out[idx].to_bits(),
                    "{} K={k} F={f}: cell ({px},{py}) at Chebyshev {cheb} > {radius} leaked",
                    arch.name()
                );
            }
            swept += 1;
        }
    }

    // Same-cell perturbation must change something at the probe, or the sweep
    // above proves nothing.
    let mut dirty = input.clone();
    dirty.data_mut()[probe.1 * m + probe.0] += 0.731;
    let out = head_logits(&cfg, &params, &maze, &dirty);
    let moved = (0..channels).any(|ch| {
        let idx = ch * m * m + probe.1 * m + probe.0;
        base[idx].to_bits() != out[idx].to_bits()
    });
    assert!(moved, "{} K={k} F={f}: probe is insensitive to its own cell", arch.name());
    swept
}

/// Bitwise Hyper-VIN → VIN reduction at 64-bit: zero the hypernetwork except
/// its final bias so every position predicts the same kernels, copy those
/// kernels into a VIN, and require bit-identical head maps. Returns the
/// number of compared values.
pub fn hypervin_reduction_check() -> usize {
    let m = 9;
    let kernel = Kernel::News;
    let sample = test_sample(m, kernel, 77);
    let hidden = 5;

    let hcfg = PlannerConfig::new(Arch::HyperVin, 3, 3, hidden, kernel).unwrap();
    let vcfg = PlannerConfig::new(Arch::Vin, 3, 3, hidden, kernel).unwrap();

    let mut hparams = ModelParams::<f64>::init(&hcfg, 5).unwrap();
    // Shared constants for the per-position kernels, drawn deterministically.
    let mut rng = SplitMix64::new(31);
    let shared: Vec<f64> = (0..2 * hidden * 9).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
    // hyper2.weight := 0, hyper2.bias := shared -> position-constant output
    // (tanh of anything times zero weights leaves only the bias).
    hparams.get_mut("hyper2.weight").unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
    hparams.get_mut("hyper2.bias").unwrap().data_mut().copy_from_slice(&shared);

    let mut vparams = ModelParams::<f64>::init(&vcfg, 5).unwrap();
    // VIN's q_conv.weight is [H, 2, 3, 3]: channel 0 reads R, channel 1 reads
    // V. The hyper layout is all H R-kernels then all H V-kernels.
    let mut q_weight = vec![0.0f64; hidden * 2 * 9];
    for a in 0..hidden {
        for t in 0..9 {
            q_weight[(a * 2) * 9 + t] = shared[a * 9 + t];
            q_weight[(a * 2 + 1) * 9 + t] = shared[(hidden + a) * 9 + t];
        }
    }
    // Input convolutions and heads must agree too: copy them over, and zero
    // the VIN q-conv bias to match the untied update which has none.
    for name in ["input_conv.weight", "input_conv.bias", "head.weight", "head.bias"] {
        let from = hparams.get(name).unwrap().clone();
        *vparams.get_mut(name).unwrap() = from;
    }
    *vparams.get_mut("q_conv.weight").unwrap() =
        Tensor::from_vec(&[hidden, 2, 3, 3], q_weight).unwrap();
    vparams.get_mut("q_conv.bias").unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);

    let input = input_tensor::<f64>(&sample.maze, &sample.goal, kernel);
    let mut htape = Tape::new();
    let hpass = forward(&mut htape, &hcfg, &hparams, &input, &sample.space).unwrap();
    let mut vtape = Tape::new();
    let vpass = forward(&mut vtape, &vcfg, &vparams, &input, &sample.space).unwrap();

    let h_out = htape.value(hpass.head_map).data();
    let v_out = vtape.value(vpass.head_map).data();
    assert_eq!(h_out.len(), v_out.len());
    for (i, (a, b)) in h_out.iter().zip(v_out).enumerate() {
        assert_eq!(a.to_bits(), b.to_bits(), "head outputs differ at {i}: {a} vs {b}");
    }
    h_out.len()
}

/// An all-open interior maze in ASCII, used when a test needs a trivial
/// state space of the right size.
pub fn ascii_open(m: usize) -> String {
    let mut s = String::new();
    for y in 0..m {
        for x in 0..m {
            s.push(if x == 0 || y == 0 || x == m - 1 || y == m - 1 { '#' } else { '.' });
        }
        if y + 1 < m {
            s.push('\n');
        }
    }
    s
}
