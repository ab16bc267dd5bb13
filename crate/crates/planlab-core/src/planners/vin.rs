//! Value Iteration Network forward pass.

use super::{Bound, PlannerConfig};
use crate::error::Result;
use crate::tensor::{NodeId, Scalar, Tape, Tensor};

/// Input image → `[O·A, m, m]` policy-head map.
///
/// R̄ is a single learned reward channel; V̄⁰ = 0; each of the K steps forms
/// Q̄ = conv([R̄; V̄]) over the hidden channels and max-pools them back to V̄.
/// The head reads the final Q̄.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &PlannerConfig,
    bound: &Bound,
    input: NodeId,
    m: usize,
) -> Result<NodeId> {
    let r = tape.conv2d(input, bound.id("input_conv.weight"), bound.id("input_conv.bias"))?;
    let mut v = tape.leaf(Tensor::zeros(&[1, m, m]));
    let mut q = r; // replaced in the first iteration
    for _ in 0..cfg.k {
        let cat = tape.concat_channels(r, v)?;
        q = tape.conv2d(cat, bound.id("q_conv.weight"), bound.id("q_conv.bias"))?;
        v = tape.channel_max(q)?;
    }
    tape.conv2d(q, bound.id("head.weight"), bound.id("head.bias"))
}
