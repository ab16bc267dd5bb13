//! Central-difference gradient checks for every autodiff primitive at 64-bit.
//!
//! Each case wires the operator into a scalar loss, asks the tape for
//! analytic gradients of every leaf, and compares them against symmetric
//! finite differences coordinate by coordinate.

mod common;

use common::{check_fn_grads, fill_tensor, flatten_tensors};
use planlab_core::grid::{AgentState, GoalSpec, Kernel, MazeGrid, StateSpace};
use planlab_core::tensor::{NodeId, Tape, Tensor};

/// Gradient-check an operator composition. `build` receives a tape holding
/// one leaf per entry of `shapes` (filled deterministically from `seed`) and
/// returns the scalar loss node; every leaf's analytic gradient is compared
/// against central differences.
fn gradcheck_op<B>(shapes: &[&[usize]], seed: u64, what: &str, build: B)
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
    check_fn_grads(eval, &flat0, &analytic_flat, what);
}

/// A weighted sum turns any tensor output into a scalar loss with dense,
/// nontrivial cotangents. The weights are a constant, not a checked leaf.
fn weighted_sum(tape: &mut Tape<f64>, node: NodeId, seed: u64) -> NodeId {
    let shape = tape.value(node).shape().to_vec();
    let weights = tape.leaf(fill_tensor(&shape, seed));
    let prod = tape.mul(node, weights).unwrap();
    tape.sum_all(prod)
}

#[test]
fn add_mul_scale_grads() {
    gradcheck_op(&[&[3, 4], &[3, 4]], 1, "add", |tape, ids| {
        let s = tape.add(ids[0], ids[1]).unwrap();
        weighted_sum(tape, s, 901)
    });
    gradcheck_op(&[&[2, 5], &[2, 5]], 2, "mul", |tape, ids| {
        let p = tape.mul(ids[0], ids[1]).unwrap();
        weighted_sum(tape, p, 902)
    });
    gradcheck_op(&[&[7]], 3, "scale", |tape, ids| {
        let s = tape.scale(ids[0], -2.5);
        weighted_sum(tape, s, 903)
    });
}

#[test]
fn activation_grads() {
    gradcheck_op(&[&[4, 3]], 4, "sigmoid", |tape, ids| {
        let s = tape.sigmoid(ids[0]);
        weighted_sum(tape, s, 904)
    });
    gradcheck_op(&[&[4, 3]], 5, "tanh", |tape, ids| {
        let t = tape.tanh(ids[0]);
        weighted_sum(tape, t, 905)
    });
}

#[test]
fn shape_op_grads() {
    gradcheck_op(&[&[2, 3, 3], &[1, 3, 3]], 6, "concat_channels", |tape, ids| {
        let c = tape.concat_channels(ids[0], ids[1]).unwrap();
        weighted_sum(tape, c, 906)
    });
    gradcheck_op(&[&[2, 6]], 7, "reshape", |tape, ids| {
        let r = tape.reshape(ids[0], &[3, 4]).unwrap();
        weighted_sum(tape, r, 907)
    });
    gradcheck_op(&[&[3, 2, 4]], 8, "flatten_positions", |tape, ids| {
        let f = tape.flatten_positions(ids[0]).unwrap();
        weighted_sum(tape, f, 908)
    });
    gradcheck_op(&[&[8, 3]], 9, "unflatten_positions", |tape, ids| {
        let u = tape.unflatten_positions(ids[0], 2, 4).unwrap();
        weighted_sum(tape, u, 909)
    });
}

#[test]
fn conv2d_grads() {
    // 2 input channels, 3 output channels, 3x3 kernel over a 7x7 map: big
    // enough that interior taps, edges, and corners all appear.
    gradcheck_op(&[&[2, 7, 7], &[3, 2, 3, 3], &[3]], 10, "conv2d", |tape, ids| {
        let y = tape.conv2d(ids[0], ids[1], ids[2]).unwrap();
        weighted_sum(tape, y, 910)
    });
    gradcheck_op(&[&[1, 5, 5], &[2, 1, 5, 5], &[2]], 11, "conv2d_f5", |tape, ids| {
        let y = tape.conv2d(ids[0], ids[1], ids[2]).unwrap();
        weighted_sum(tape, y, 911)
    });
}

#[test]
fn channel_max_grads() {
    // Random fills collide with probability zero, so the argmax is stable
    // under the finite-difference step.
    gradcheck_op(&[&[4, 5, 5]], 12, "channel_max", |tape, ids| {
        let m = tape.channel_max(ids[0]).unwrap();
        weighted_sum(tape, m, 912)
    });
}

#[test]
fn lstm_cell_grads() {
    // Both outputs participate in the loss so the h' and c' backward paths
    // are exercised together, including the shared gate parameters.
    let shapes: [&[usize]; 5] = [&[6, 2], &[6, 3], &[6, 3], &[12, 5], &[12]];
    gradcheck_op(&shapes, 13, "lstm_cell", |tape, ids| {
        let (h_new, c_new) = tape.lstm_cell(ids[0], ids[1], ids[2], ids[3], ids[4]).unwrap();
        let lh = weighted_sum(tape, h_new, 913);
        let lc = weighted_sum(tape, c_new, 914);
        tape.add(lh, lc).unwrap()
    });
}

#[test]
fn lstm_cell_grads_h_only() {
    // The planner only reads h' at the last iteration; check that path alone.
    let shapes: [&[usize]; 5] = [&[4, 3], &[4, 2], &[4, 2], &[8, 5], &[8]];
    gradcheck_op(&shapes, 14, "lstm_cell_h_only", |tape, ids| {
        let (h_new, _c_new) = tape.lstm_cell(ids[0], ids[1], ids[2], ids[3], ids[4]).unwrap();
        weighted_sum(tape, h_new, 915)
    });
}

#[test]
fn chained_lstm_grads() {
    // Two recurrent steps with shared weights: gradients must sum across the
    // unrolled uses, mirroring the planner's K iterations.
    let shapes: [&[usize]; 4] = [&[3, 2], &[3, 2], &[8, 4], &[8]];
    gradcheck_op(&shapes, 15, "chained_lstm", |tape, ids| {
        let c0 = tape.leaf(Tensor::zeros(&[3, 2]));
        let (h1, c1) = tape.lstm_cell(ids[0], ids[1], c0, ids[2], ids[3]).unwrap();
        let (h2, _c2) = tape.lstm_cell(ids[0], h1, c1, ids[2], ids[3]).unwrap();
        weighted_sum(tape, h2, 916)
    });
}

#[test]
fn untied_conv_pair_grads() {
    // 2 hidden channels over a 5x5 map: weight maps are [2*2*9, 5, 5].
    gradcheck_op(&[&[1, 5, 5], &[1, 5, 5], &[36, 5, 5]], 16, "untied_conv_pair", |tape, ids| {
        let q = tape.untied_conv_pair(ids[0], ids[1], ids[2]).unwrap();
        weighted_sum(tape, q, 917)
    });
}

#[test]
fn gather_and_cross_entropy_grads() {
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
    let sample = planlab_core::Sample::build(maze, Kernel::News, goal).unwrap();
    let labels = sample.labels.labels().to_vec();
    let mask: Vec<bool> = (0..space.len()).map(|s| s != sample.goal_state).collect();

    gradcheck_op(&[&[4, 7, 7]], 17, "gather+softmax_ce", |tape, ids| {
        let gathered = tape.gather_states(ids[0], &space).unwrap();
        tape.softmax_cross_entropy(gathered, &labels, &mask).unwrap()
    });
}

#[test]
fn composite_pipeline_grads() {
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
    let sample = planlab_core::Sample::build(maze.clone(), Kernel::News, goal).unwrap();
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
    });
}
