//! Eager forward evaluation with reverse-mode gradient accumulation.
//!
//! Nodes are appended in topological order by construction; [`Tape::backward`]
//! walks them once in reverse, so each tape supports a single backward pass.

use super::ops::{self, ConvDims};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::grid::StateSpace;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Sigmoid(NodeId),
    Tanh(NodeId),
    SumAll(NodeId),
    ConcatChannels(NodeId, NodeId),
    Reshape(NodeId),
    /// `[C, H, W]` → `[H·W, C]` transpose so per-position ops can batch rows.
    FlattenPositions(NodeId),
    /// Inverse of `FlattenPositions`, back to `[C, H, W]`.
    UnflattenPositions(NodeId),
    Conv2d { input: NodeId, weight: NodeId, bias: NodeId },
    ChannelMax { input: NodeId, argmax: Vec<u32> },
    /// Next cell state of an LSTM step; gates are recomputed in backward.
    LstmC { x: NodeId, h: NodeId, c: NodeId, w: NodeId, b: NodeId },
    /// Next hidden state; created after its `LstmC` twin so the reverse walk
    /// pushes the ∂h′/∂c′ contribution into the cell node first.
    LstmH { x: NodeId, h: NodeId, c: NodeId, w: NodeId, b: NodeId, c_new: NodeId },
    /// Per-state action logits gathered from a `[O·A, m, m]` head map.
    GatherStates { input: NodeId, src: Vec<u32> },
    SoftmaxCrossEntropy { logits: NodeId, labels: Vec<u8>, mask: Vec<bool> },
    UntiedConvPair { r: NodeId, v: NodeId, w: NodeId },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    spent: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape { nodes: Vec::new(), spent: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.idx()].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { value, op });
        id
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.idx()].value.shape()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::contract(format!(
                "add shapes differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = self.value(a).clone();
        for (o, &bv) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += bv;
        }
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::contract(format!(
                "mul shapes differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = self.value(a).clone();
        for (o, &bv) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= bv;
        }
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, k: T) -> NodeId {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            *o *= k;
        }
        self.push(out, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            *o = o.sigmoid();
        }
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            *o = o.tanh();
        }
        self.push(out, Op::Tanh(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let mut acc = T::ZERO;
        for &v in self.value(a).data() {
            acc += v;
        }
        self.push(Tensor::scalar(acc), Op::SumAll(a))
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[1..] != sb[1..] {
            return Err(Error::contract(format!(
                "concat_channels wants [C,H,W] with equal maps, got {sa:?} and {sb:?}"
            )));
        }
        let shape = vec![sa[0] + sb[0], sa[1], sa[2]];
        let mut data = Vec::with_capacity(shape.iter().product());
        data.extend_from_slice(self.value(a).data());
        data.extend_from_slice(self.value(b).data());
        let out = Tensor::from_vec(&shape, data)?;
        Ok(self.push(out, Op::ConcatChannels(a, b)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let want: usize = shape.iter().product();
        if want != self.value(a).len() {
            return Err(Error::contract(format!(
                "reshape {:?} → {:?} changes element count",
                self.shape(a),
                shape
            )));
        }
        let out = Tensor::from_vec(shape, self.value(a).data().to_vec())?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn flatten_positions(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a);
        if s.len() != 3 {
            return Err(Error::contract(format!("flatten_positions wants [C,H,W], got {s:?}")));
        }
        let (c, plane) = (s[0], s[1] * s[2]);
        let src = self.value(a).data();
        let mut data = vec![T::ZERO; c * plane];
        for ch in 0..c {
            for p in 0..plane {
                data[p * c + ch] = src[ch * plane + p];
            }
        }
        let out = Tensor::from_vec(&[plane, c], data)?;
        Ok(self.push(out, Op::FlattenPositions(a)))
    }

    pub fn unflatten_positions(&mut self, a: NodeId, h: usize, w: usize) -> Result<NodeId> {
        let s = self.shape(a);
        if s.len() != 2 || s[0] != h * w {
            return Err(Error::contract(format!(
                "unflatten_positions wants [{h}·{w}, C], got {s:?}"
            )));
        }
        let (plane, c) = (s[0], s[1]);
        let src = self.value(a).data();
        let mut data = vec![T::ZERO; c * plane];
        for p in 0..plane {
            for ch in 0..c {
                data[ch * plane + p] = src[p * c + ch];
            }
        }
        let out = Tensor::from_vec(&[c, h, w], data)?;
        Ok(self.push(out, Op::UnflattenPositions(a)))
    }

    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (si, sw, sb) = (self.shape(input), self.shape(weight), self.shape(bias));
        if si.len() != 3 || sw.len() != 4 || sb.len() != 1 {
            return Err(Error::contract(format!(
                "conv2d wants input [C,H,W], weight [O,C,F,F], bias [O]; got {si:?}, {sw:?}, {sb:?}"
            )));
        }
        if sw[1] != si[0] || sw[2] != sw[3] || sw[2] % 2 == 0 || sb[0] != sw[0] {
            return Err(Error::contract(format!(
                "conv2d shape mismatch: input {si:?}, weight {sw:?}, bias {sb:?}"
            )));
        }
        let d = ConvDims { cin: si[0], cout: sw[0], f: sw[2], h: si[1], w: si[2] };
        let mut out = Tensor::zeros(&[d.cout, d.h, d.w]);
        ops::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            &d,
            out.data_mut(),
        );
        Ok(self.push(out, Op::Conv2d { input, weight, bias }))
    }

    pub fn channel_max(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a);
        if s.len() != 3 || s[0] == 0 {
            return Err(Error::contract(format!("channel_max wants [A,H,W] with A ≥ 1, got {s:?}")));
        }
        let (c, plane) = (s[0], s[1] * s[2]);
        let src = self.value(a).data();
        let mut data = vec![T::ZERO; plane];
        let mut argmax = vec![0u32; plane];
        for p in 0..plane {
            let mut best = src[p];
            let mut arg = 0u32;
            for ch in 1..c {
                let v = src[ch * plane + p];
                if v > best {
                    best = v;
                    arg = ch as u32;
                }
            }
            data[p] = best;
            argmax[p] = arg;
        }
        let out = Tensor::from_vec(&[1, s[1], s[2]], data)?;
        Ok(self.push(out, Op::ChannelMax { input: a, argmax }))
    }

    /// One LSTM step over `batch` independent rows; returns `(h', c')`.
    pub fn lstm_cell(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        w: NodeId,
        b: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let (sx, sh, sc, sw, sb) =
            (self.shape(x), self.shape(h), self.shape(c), self.shape(w), self.shape(b));
        if sx.len() != 2 || sh.len() != 2 || sc != sh || sx[0] != sh[0] {
            return Err(Error::contract(format!(
                "lstm_cell wants x [B,I], h and c [B,H]; got {sx:?}, {sh:?}, {sc:?}"
            )));
        }
        let (batch, input_dim, hidden) = (sx[0], sx[1], sh[1]);
        if sw != [4 * hidden, input_dim + hidden] || sb != [4 * hidden] {
            return Err(Error::contract(format!(
                "lstm_cell wants weight [4H,I+H] and bias [4H]; got {sw:?}, {sb:?}"
            )));
        }
        let ids = [x, h, c, w, b];
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                if ids[i] == ids[j] {
                    return Err(Error::contract("lstm_cell operands must be distinct nodes"));
                }
            }
        }
        let gates = ops::lstm_gates(
            self.value(x).data(),
            self.value(h).data(),
            self.value(w).data(),
            self.value(b).data(),
            batch,
            input_dim,
            hidden,
        );
        let mut h_new = Tensor::zeros(&[batch, hidden]);
        let mut c_new = Tensor::zeros(&[batch, hidden]);
        ops::lstm_forward(&gates, self.value(c).data(), h_new.data_mut(), c_new.data_mut());
        let c_id = self.push(c_new, Op::LstmC { x, h, c, w, b });
        let h_id = self.push(h_new, Op::LstmH { x, h, c, w, b, c_new: c_id });
        Ok((h_id, c_id))
    }

    /// Gather per-state logits out of a `[O·A, m, m]` head map: state rows in
    /// `space` order, channel `o·A + a` read at the state's cell.
    pub fn gather_states(&mut self, input: NodeId, space: &StateSpace) -> Result<NodeId> {
        let s = self.shape(input);
        let (orientations, m) = (space.kernel().orientation_count(), space.size());
        if s.len() != 3 || s[1] != m || s[2] != m || s[0] % orientations != 0 {
            return Err(Error::contract(format!(
                "gather_states wants [O·A, {m}, {m}], got {s:?}"
            )));
        }
        let actions = s[0] / orientations;
        let plane = m * m;
        let src_data = self.value(input).data();
        let n = space.len();
        let mut src = Vec::with_capacity(n * actions);
        let mut data = Vec::with_capacity(n * actions);
        for st in space.states() {
            for a in 0..actions {
                let idx = (st.orientation * actions + a) * plane + st.y * m + st.x;
                src.push(idx as u32);
                data.push(src_data[idx]);
            }
        }
        let out = Tensor::from_vec(&[n, actions], data)?;
        Ok(self.push(out, Op::GatherStates { input, src }))
    }

    /// Mean negative log-softmax over unmasked rows.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[u8],
        mask: &[bool],
    ) -> Result<NodeId> {
        let s = self.shape(logits);
        if s.len() != 2 {
            return Err(Error::contract(format!("softmax_cross_entropy wants [N,A], got {s:?}")));
        }
        let (n, actions) = (s[0], s[1]);
        if labels.len() != n || mask.len() != n {
            return Err(Error::contract(format!(
                "labels/mask length {} / {} do not match {n} rows",
                labels.len(),
                mask.len()
            )));
        }
        let rows = mask.iter().filter(|&&m| m).count();
        if rows == 0 {
            return Err(Error::contract("softmax_cross_entropy with empty mask"));
        }
        let data = self.value(logits).data();
        let mut total = T::ZERO;
        for row in 0..n {
            if !mask[row] {
                continue;
            }
            let label = labels[row] as usize;
            if label >= actions {
                return Err(Error::contract(format!(
                    "label {label} out of range for {actions} actions (row {row})"
                )));
            }
            let z = &data[row * actions..(row + 1) * actions];
            let mut top = z[0];
            for &v in &z[1..] {
                top = top.maximum(v);
            }
            let mut lse = T::ZERO;
            for &v in z {
                lse += (v - top).exp();
            }
            total += top + lse.ln() - z[label];
        }
        let loss = total / T::from_f64(rows as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), mask: mask.to_vec() },
        ))
    }

    pub fn untied_conv_pair(&mut self, r: NodeId, v: NodeId, w: NodeId) -> Result<NodeId> {
        let (sr, sv, sw) = (self.shape(r), self.shape(v), self.shape(w));
        if sr.len() != 3 || sr[0] != 1 || sv != sr {
            return Err(Error::contract(format!(
                "untied_conv_pair wants r and v [1,H,W], got {sr:?} and {sv:?}"
            )));
        }
        let (h, wd) = (sr[1], sr[2]);
        if sw.len() != 3 || sw[1] != h || sw[2] != wd || sw[0] % 18 != 0 || sw[0] == 0 {
            return Err(Error::contract(format!(
                "untied_conv_pair wants weights [2·A·9, {h}, {wd}], got {sw:?}"
            )));
        }
        if r == v || r == w || v == w {
            return Err(Error::contract("untied_conv_pair operands must be distinct nodes"));
        }
        let hidden = sw[0] / 18;
        let mut out = Tensor::zeros(&[hidden, h, wd]);
        ops::untied_pair_forward(
            self.value(r).data(),
            self.value(v).data(),
            self.value(w).data(),
            hidden,
            h,
            wd,
            out.data_mut(),
        );
        Ok(self.push(out, Op::UntiedConvPair { r, v, w }))
    }

    /// Reverse accumulation from a scalar loss. Consumes the tape's single
    /// backward allowance; gradients of nodes the loss never touched are zero.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<T>> {
        if self.spent {
            return Err(Error::contract("backward called twice on one tape"));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward from non-scalar node of shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.spent = true;

        let n = self.nodes.len();
        let mut grads: Vec<Tensor<T>> =
            self.nodes.iter().map(|node| Tensor::zeros(node.value.shape())).collect();
        let mut touched = vec![false; n];
        grads[loss.idx()].data_mut()[0] = T::ONE;
        touched[loss.idx()] = true;

        for i in (0..=loss.idx()).rev() {
            if !touched[i] {
                continue;
            }
            let g = std::mem::replace(&mut grads[i], Tensor::take());
            self.distribute(i, &g, &mut grads, &mut touched);
            grads[i] = g;
        }
        Ok(Gradients { grads })
    }

    fn distribute(&self, node: usize, g: &Tensor<T>, grads: &mut [Tensor<T>], touched: &mut [bool]) {
        let mut reach = |id: NodeId| touched[id.idx()] = true;
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                reach(*a);
                reach(*b);
                for (ga, &gv) in grads[a.idx()].data_mut().iter_mut().zip(g.data()) {
                    *ga += gv;
                }
                for (gb, &gv) in grads[b.idx()].data_mut().iter_mut().zip(g.data()) {
                    *gb += gv;
                }
            }
            Op::Mul(a, b) => {
                reach(*a);
                reach(*b);
                let av = self.nodes[a.idx()].value.data();
                let bv = self.nodes[b.idx()].value.data();
                for (i, &gv) in g.data().iter().enumerate() {
                    grads[a.idx()].data_mut()[i] += gv * bv[i];
                }
                for (i, &gv) in g.data().iter().enumerate() {
                    grads[b.idx()].data_mut()[i] += gv * av[i];
                }
            }
            Op::Scale(a, k) => {
                reach(*a);
                for (ga, &gv) in grads[a.idx()].data_mut().iter_mut().zip(g.data()) {
                    *ga += gv * *k;
                }
            }
            Op::Sigmoid(a) => {
                reach(*a);
                let y = self.nodes[node].value.data();
                for (i, &gv) in g.data().iter().enumerate() {
                    grads[a.idx()].data_mut()[i] += gv * y[i] * (T::ONE - y[i]);
                }
            }
            Op::Tanh(a) => {
                reach(*a);
                let y = self.nodes[node].value.data();
                for (i, &gv) in g.data().iter().enumerate() {
                    grads[a.idx()].data_mut()[i] += gv * (T::ONE - y[i] * y[i]);
                }
            }
            Op::SumAll(a) => {
                reach(*a);
                let gv = g.data()[0];
                for ga in grads[a.idx()].data_mut() {
                    *ga += gv;
                }
            }
            Op::ConcatChannels(a, b) => {
                reach(*a);
                reach(*b);
                let na = self.nodes[a.idx()].value.len();
                for (ga, &gv) in grads[a.idx()].data_mut().iter_mut().zip(&g.data()[..na]) {
                    *ga += gv;
                }
                for (gb, &gv) in grads[b.idx()].data_mut().iter_mut().zip(&g.data()[na..]) {
                    *gb += gv;
                }
            }
            Op::Reshape(a) => {
                reach(*a);
                for (ga, &gv) in grads[a.idx()].data_mut().iter_mut().zip(g.data()) {
                    *ga += gv;
                }
            }
            Op::FlattenPositions(a) => {
                reach(*a);
                let s = self.nodes[a.idx()].value.shape();
                let (c, plane) = (s[0], s[1] * s[2]);
                let ga = grads[a.idx()].data_mut();
                let gd = g.data();
                for p in 0..plane {
                    for ch in 0..c {
                        ga[ch * plane + p] += gd[p * c + ch];
                    }
                }
            }
            Op::UnflattenPositions(a) => {
                reach(*a);
                let s = self.nodes[node].value.shape();
                let (c, plane) = (s[0], s[1] * s[2]);
                let ga = grads[a.idx()].data_mut();
                let gd = g.data();
                for ch in 0..c {
                    for p in 0..plane {
                        ga[p * c + ch] += gd[ch * plane + p];
                    }
                }
            }
            Op::Conv2d { input, weight, bias } => {
                reach(*input);
                reach(*weight);
                reach(*bias);
                let si = self.nodes[input.idx()].value.shape();
                let sw = self.nodes[weight.idx()].value.shape();
                let d = ConvDims { cin: si[0], cout: sw[0], f: sw[2], h: si[1], w: si[2] };
                // The three operand gradients are distinct nodes in the
                // planners, but alias-proof extraction keeps this general.
                let (gi, gw, gb) = take3(grads, input.idx(), weight.idx(), bias.idx());
                let mut gi = gi;
                let mut gw = gw;
                let mut gb = gb;
                ops::conv2d_backward(
                    self.nodes[input.idx()].value.data(),
                    self.nodes[weight.idx()].value.data(),
                    &d,
                    g.data(),
                    gi.data_mut(),
                    gw.data_mut(),
                    gb.data_mut(),
                );
                put3(grads, (input.idx(), gi), (weight.idx(), gw), (bias.idx(), gb));
            }
            Op::ChannelMax { input, argmax } => {
                reach(*input);
                let plane = argmax.len();
                let gi = grads[input.idx()].data_mut();
                for (p, (&gv, &arg)) in g.data().iter().zip(argmax).enumerate() {
                    gi[arg as usize * plane + p] += gv;
                }
            }
            Op::LstmC { x, h, c, w, b } => {
                self.lstm_backward(*x, *h, *c, *w, *b, None, g, grads, touched);
            }
            Op::LstmH { x, h, c, w, b, c_new } => {
                self.lstm_backward(*x, *h, *c, *w, *b, Some(*c_new), g, grads, touched);
            }
            Op::GatherStates { input, src } => {
                reach(*input);
                let gi = grads[input.idx()].data_mut();
                for (&idx, &gv) in src.iter().zip(g.data()) {
                    gi[idx as usize] += gv;
                }
            }
            Op::SoftmaxCrossEntropy { logits, labels, mask } => {
                reach(*logits);
                let gv = g.data()[0];
                let rows = mask.iter().filter(|&&m| m).count();
                let scale = gv / T::from_f64(rows as f64);
                let z = self.nodes[logits.idx()].value.data();
                let actions = self.nodes[logits.idx()].value.shape()[1];
                let gl = grads[logits.idx()].data_mut();
                for row in 0..mask.len() {
                    if !mask[row] {
                        continue;
                    }
                    let zrow = &z[row * actions..(row + 1) * actions];
                    let mut top = zrow[0];
                    for &v in &zrow[1..] {
                        top = top.maximum(v);
                    }
                    let mut denom = T::ZERO;
                    for &v in zrow {
                        denom += (v - top).exp();
                    }
                    let grow = &mut gl[row * actions..(row + 1) * actions];
                    for (a, &v) in zrow.iter().enumerate() {
                        grow[a] += scale * ((v - top).exp() / denom);
                    }
                    grow[labels[row] as usize] -= scale;
                }
            }
            Op::UntiedConvPair { r, v, w } => {
                reach(*r);
                reach(*v);
                reach(*w);
                let sw = self.nodes[w.idx()].value.shape();
                let sr = self.nodes[r.idx()].value.shape();
                let hidden = sw[0] / 18;
                let (gr, gv, gw) = take3(grads, r.idx(), v.idx(), w.idx());
                let mut gr = gr;
                let mut gv = gv;
                let mut gw = gw;
                ops::untied_pair_backward(
                    self.nodes[r.idx()].value.data(),
                    self.nodes[v.idx()].value.data(),
                    self.nodes[w.idx()].value.data(),
                    hidden,
                    sr[1],
                    sr[2],
                    g.data(),
                    gr.data_mut(),
                    gv.data_mut(),
                    gw.data_mut(),
                );
                put3(grads, (r.idx(), gr), (v.idx(), gv), (w.idx(), gw));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        w: NodeId,
        b: NodeId,
        c_new: Option<NodeId>,
        g: &Tensor<T>,
        grads: &mut [Tensor<T>],
        touched: &mut [bool],
    ) {
        for id in [x, h, c, w, b] {
            touched[id.idx()] = true;
        }
        if let Some(cn) = c_new {
            touched[cn.idx()] = true;
        }
        let sx = self.nodes[x.idx()].value.shape();
        let sh = self.nodes[h.idx()].value.shape();
        let (batch, input_dim, hidden) = (sx[0], sx[1], sh[1]);
        let xv = self.nodes[x.idx()].value.data();
        let hv = self.nodes[h.idx()].value.data();
        let cv = self.nodes[c.idx()].value.data();
        let wv = self.nodes[w.idx()].value.data();
        let bv = self.nodes[b.idx()].value.data();
        let gates = ops::lstm_gates(xv, hv, wv, bv, batch, input_dim, hidden);

        // Incoming gradient mapped to per-gate pre-activation gradients.
        let n = batch * hidden;
        let mut pre = vec![T::ZERO; n];
        match c_new {
            Some(cn) => {
                // d h' landing on the output gate; the chain through c' is
                // pushed into the c'-node, whose own backward handles it.
                let cnv = self.nodes[cn.idx()].value.data();
                let gc_new = grads[cn.idx()].data_mut();
                for i in 0..n {
                    let t = cnv[i].tanh();
                    pre[i] = g.data()[i] * t * gates.o[i] * (T::ONE - gates.o[i]);
                    gc_new[i] += g.data()[i] * gates.o[i] * (T::ONE - t * t);
                }
                self.scatter_gate(&pre, 3, xv, hv, wv, batch, input_dim, hidden, grads, x, h, w, b);
            }
            None => {
                // d c': input, forget, and cell gates plus the direct c path.
                for i in 0..n {
                    pre[i] = g.data()[i] * gates.g[i] * gates.i[i] * (T::ONE - gates.i[i]);
                }
                self.scatter_gate(&pre, 0, xv, hv, wv, batch, input_dim, hidden, grads, x, h, w, b);
                for i in 0..n {
                    pre[i] = g.data()[i] * cv[i] * gates.f[i] * (T::ONE - gates.f[i]);
                }
                self.scatter_gate(&pre, 1, xv, hv, wv, batch, input_dim, hidden, grads, x, h, w, b);
                for i in 0..n {
                    pre[i] = g.data()[i] * gates.i[i] * (T::ONE - gates.g[i] * gates.g[i]);
                }
                self.scatter_gate(&pre, 2, xv, hv, wv, batch, input_dim, hidden, grads, x, h, w, b);
                let gc = grads[c.idx()].data_mut();
                for i in 0..n {
                    gc[i] += g.data()[i] * gates.f[i];
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn scatter_gate(
        &self,
        pre: &[T],
        gate: usize,
        xv: &[T],
        hv: &[T],
        wv: &[T],
        batch: usize,
        input_dim: usize,
        hidden: usize,
        grads: &mut [Tensor<T>],
        x: NodeId,
        h: NodeId,
        w: NodeId,
        b: NodeId,
    ) {
        let (gx, gh, gw, gb) = take4(grads, x.idx(), h.idx(), w.idx(), b.idx());
        let mut gx = gx;
        let mut gh = gh;
        let mut gw = gw;
        let mut gb = gb;
        ops::lstm_scatter_pre_grad(
            pre,
            gate,
            xv,
            hv,
            wv,
            batch,
            input_dim,
            hidden,
            gx.data_mut(),
            gh.data_mut(),
            gw.data_mut(),
            gb.data_mut(),
        );
        put3(grads, (x.idx(), gx), (h.idx(), gh), (w.idx(), gw));
        grads[b.idx()] = gb;
    }
}

fn take3<T: Scalar>(
    grads: &mut [Tensor<T>],
    a: usize,
    b: usize,
    c: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    debug_assert!(a != b && b != c && a != c, "planner graphs never alias conv operands");
    (
        std::mem::replace(&mut grads[a], Tensor::take()),
        std::mem::replace(&mut grads[b], Tensor::take()),
        std::mem::replace(&mut grads[c], Tensor::take()),
    )
}

fn take4<T: Scalar>(
    grads: &mut [Tensor<T>],
    a: usize,
    b: usize,
    c: usize,
    d: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>) {
    debug_assert!(
        a != b && a != c && a != d && b != c && b != d && c != d,
        "planner graphs never alias LSTM operands"
    );
    (
        std::mem::replace(&mut grads[a], Tensor::take()),
        std::mem::replace(&mut grads[b], Tensor::take()),
        std::mem::replace(&mut grads[c], Tensor::take()),
        std::mem::replace(&mut grads[d], Tensor::take()),
    )
}

fn put3<T: Scalar>(
    grads: &mut [Tensor<T>],
    a: (usize, Tensor<T>),
    b: (usize, Tensor<T>),
    c: (usize, Tensor<T>),
) {
    grads[a.0] = a.1;
    grads[b.0] = b.1;
    grads[c.0] = c.1;
}

/// Per-node gradients from one backward pass.
pub struct Gradients<T: Scalar> {
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, id: NodeId) -> &Tensor<T> {
        &self.grads[id.idx()]
    }
}
