//! Hyper-VIN forward pass: VIN with position-untied planning kernels
//! predicted by a small convolutional hypernetwork.

use super::{Bound, PlannerConfig};
use crate::error::Result;
use crate::tensor::{NodeId, Scalar, Tape, Tensor};

/// Input image → `[O·A, m, m]` policy-head map.
///
/// A two-layer 3×3 hypernetwork (tanh between the layers) maps the input to
/// per-position weight maps: `hidden` reward kernels stacked over `hidden`
/// value kernels, 9 taps each. The recurrence applies those untied kernels to
/// the R̄ and V̄ patches and max-pools, exactly mirroring the VIN update; the
/// head reads the final pre-max activations.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &PlannerConfig,
    bound: &Bound,
    input: NodeId,
    m: usize,
) -> Result<NodeId> {
    let r = tape.conv2d(input, bound.id("input_conv.weight"), bound.id("input_conv.bias"))?;
    let hy = tape.conv2d(input, bound.id("hyper1.weight"), bound.id("hyper1.bias"))?;
    let hy = tape.tanh(hy);
    let wmaps = tape.conv2d(hy, bound.id("hyper2.weight"), bound.id("hyper2.bias"))?;

    let mut v = tape.leaf(Tensor::zeros(&[1, m, m]));
    let mut q = r; // replaced in the first iteration
    for _ in 0..cfg.k {
        q = tape.untied_conv_pair(r, v, wmaps)?;
        v = tape.channel_max(q)?;
    }
    tape.conv2d(q, bound.id("head.weight"), bound.id("head.bias"))
}
