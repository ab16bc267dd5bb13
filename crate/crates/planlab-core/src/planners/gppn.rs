//! Gated Path Planning Network forward pass.

use super::{Bound, PlannerConfig};
use crate::error::Result;
use crate::tensor::{NodeId, Scalar, Tape, Tensor};

/// Input image → `[O·A, m, m]` policy-head map.
///
/// The input convolution produces h⁰ directly (the recurrence never sees the
/// input again); each step convolves h down to one channel and feeds that
/// scalar, per position, through a single shared LSTM cell of input size 1.
/// The head reads h^K.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &PlannerConfig,
    bound: &Bound,
    input: NodeId,
    m: usize,
) -> Result<NodeId> {
    let positions = m * m;
    let mut h_map =
        tape.conv2d(input, bound.id("input_conv.weight"), bound.id("input_conv.bias"))?;
    let mut c = tape.leaf(Tensor::zeros(&[positions, cfg.hidden]));
    let (w, b) = (bound.id("lstm.weight"), bound.id("lstm.bias"));
    for _ in 0..cfg.k {
        let x_map = tape.conv2d(h_map, bound.id("h_conv.weight"), bound.id("h_conv.bias"))?;
        let x = tape.flatten_positions(x_map)?;
        let h = tape.flatten_positions(h_map)?;
        let (h_new, c_new) = tape.lstm_cell(x, h, c, w, b)?;
        h_map = tape.unflatten_positions(h_new, m, m)?;
        c = c_new;
    }
    tape.conv2d(h_map, bound.id("head.weight"), bound.id("head.bias"))
}
