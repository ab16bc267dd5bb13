//! Raw numeric kernels behind the tape operators.
//!
//! Accumulation orders are part of the contract: every output element of
//! [`conv2d_forward`] adds its bias first and then the (ci, ky, kx) terms in
//! lexicographic order, skipping out-of-range taps, and
//! [`untied_pair_forward`] adds the nine reward taps then the nine value taps
//! in the same (ky, kx) order. Keeping the orders aligned makes a
//! position-constant untied update bitwise equal to the tied convolution.

use super::Scalar;

pub struct ConvDims {
    pub cin: usize,
    pub cout: usize,
    pub f: usize,
    pub h: usize,
    pub w: usize,
}

/// Cross-correlation with stride 1 and zero "same" padding of (F−1)/2.
pub fn conv2d_forward<T: Scalar>(
    input: &[T],
    weight: &[T],
    bias: &[T],
    d: &ConvDims,
    out: &mut [T],
) {
    let p = (d.f - 1) / 2;
    let plane = d.h * d.w;
    for co in 0..d.cout {
        out[co * plane..(co + 1) * plane].fill(bias[co]);
        for ci in 0..d.cin {
            for ky in 0..d.f {
                let ylo = p.saturating_sub(ky);
                let yhi = (d.h + p).saturating_sub(ky).min(d.h);
                for kx in 0..d.f {
                    let wgt = weight[((co * d.cin + ci) * d.f + ky) * d.f + kx];
                    let xlo = p.saturating_sub(kx);
                    let xhi = (d.w + p).saturating_sub(kx).min(d.w);
                    for y in ylo..yhi {
                        let iy = y + ky - p;
                        let orow = co * plane + y * d.w;
                        let irow = ci * plane + iy * d.w + kx;
                        for x in xlo..xhi {
                            out[orow + x] += wgt * input[irow + x - p];
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weight, and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &[T],
    weight: &[T],
    d: &ConvDims,
    gout: &[T],
    ginput: &mut [T],
    gweight: &mut [T],
    gbias: &mut [T],
) {
    let p = (d.f - 1) / 2;
    let plane = d.h * d.w;
    for co in 0..d.cout {
        let mut acc = T::ZERO;
        for &g in &gout[co * plane..(co + 1) * plane] {
            acc += g;
        }
        gbias[co] += acc;
        for ci in 0..d.cin {
            for ky in 0..d.f {
                let ylo = p.saturating_sub(ky);
                let yhi = (d.h + p).saturating_sub(ky).min(d.h);
                for kx in 0..d.f {
                    let widx = ((co * d.cin + ci) * d.f + ky) * d.f + kx;
                    let wgt = weight[widx];
                    let xlo = p.saturating_sub(kx);
                    let xhi = (d.w + p).saturating_sub(kx).min(d.w);
                    let mut wacc = T::ZERO;
                    for y in ylo..yhi {
                        let iy = y + ky - p;
                        let orow = co * plane + y * d.w;
                        let irow = ci * plane + iy * d.w + kx;
                        for x in xlo..xhi {
                            let g = gout[orow + x];
                            wacc += g * input[irow + x - p];
                            ginput[irow + x - p] += wgt * g;
                        }
                    }
                    gweight[widx] += wacc;
                }
            }
        }
    }
}

/// Position-wise untied planning update at F = 3. `wmaps` stacks, per
/// position, `hidden` reward kernels followed by `hidden` value kernels
/// (channel = block·hidden·9 + a·9 + ky·3 + kx). Out-of-range taps are
/// skipped, matching the tied convolution.
pub fn untied_pair_forward<T: Scalar>(
    r: &[T],
    v: &[T],
    wmaps: &[T],
    hidden: usize,
    h: usize,
    w: usize,
    out: &mut [T],
) {
    let plane = h * w;
    for a in 0..hidden {
        for y in 0..h {
            for x in 0..w {
                let pos = y * w + x;
                let mut acc = T::ZERO;
                for (block, map) in [(0, r), (1, v)] {
                    let base = (block * hidden + a) * 9;
                    for ky in 0..3 {
                        let iy = y + ky;
                        if iy < 1 || iy > h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = x + kx;
                            if ix < 1 || ix > w {
                                continue;
                            }
                            acc += wmaps[(base + ky * 3 + kx) * plane + pos]
                                * map[(iy - 1) * w + (ix - 1)];
                        }
                    }
                }
                out[a * plane + pos] = acc;
            }
        }
    }
}

pub fn untied_pair_backward<T: Scalar>(
    r: &[T],
    v: &[T],
    wmaps: &[T],
    hidden: usize,
    h: usize,
    w: usize,
    gout: &[T],
    gr: &mut [T],
    gv: &mut [T],
    gwmaps: &mut [T],
) {
    let plane = h * w;
    for a in 0..hidden {
        for y in 0..h {
            for x in 0..w {
                let pos = y * w + x;
                let g = gout[a * plane + pos];
                for block in 0..2 {
                    let (map, gmap): (&[T], &mut [T]) =
                        if block == 0 { (r, &mut *gr) } else { (v, &mut *gv) };
                    let base = (block * hidden + a) * 9;
                    for ky in 0..3 {
                        let iy = y + ky;
                        if iy < 1 || iy > h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = x + kx;
                            if ix < 1 || ix > w {
                                continue;
                            }
                            let widx = (base + ky * 3 + kx) * plane + pos;
                            let midx = (iy - 1) * w + (ix - 1);
                            gwmaps[widx] += g * map[midx];
                            gmap[midx] += g * wmaps[widx];
                        }
                    }
                }
            }
        }
    }
}

/// Gate activations of one LSTM step. Rows of `w`/`b` hold the input, forget,
/// cell, and output gates in that order, over the concatenated `[x, h]`.
pub struct LstmGates<T> {
    pub i: Vec<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub o: Vec<T>,
}

pub fn lstm_gates<T: Scalar>(
    x: &[T],
    h: &[T],
    w: &[T],
    bias: &[T],
    batch: usize,
    input_dim: usize,
    hidden: usize,
) -> LstmGates<T> {
    let cols = input_dim + hidden;
    let mut pre = vec![T::ZERO; batch * 4 * hidden];
    for b in 0..batch {
        let xrow = &x[b * input_dim..(b + 1) * input_dim];
        let hrow = &h[b * hidden..(b + 1) * hidden];
        let prow = &mut pre[b * 4 * hidden..(b + 1) * 4 * hidden];
        for j in 0..4 * hidden {
            let wrow = &w[j * cols..(j + 1) * cols];
            let mut acc = bias[j];
            for (i, &xv) in xrow.iter().enumerate() {
                acc += wrow[i] * xv;
            }
            for (k, &hv) in hrow.iter().enumerate() {
                acc += wrow[input_dim + k] * hv;
            }
            prow[j] = acc;
        }
    }
    let mut gates = LstmGates {
        i: vec![T::ZERO; batch * hidden],
        f: vec![T::ZERO; batch * hidden],
        g: vec![T::ZERO; batch * hidden],
        o: vec![T::ZERO; batch * hidden],
    };
    for b in 0..batch {
        let prow = &pre[b * 4 * hidden..(b + 1) * 4 * hidden];
        for j in 0..hidden {
            gates.i[b * hidden + j] = prow[j].sigmoid();
            gates.f[b * hidden + j] = prow[hidden + j].sigmoid();
            gates.g[b * hidden + j] = prow[2 * hidden + j].tanh();
            gates.o[b * hidden + j] = prow[3 * hidden + j].sigmoid();
        }
    }
    gates
}

pub fn lstm_forward<T: Scalar>(
    gates: &LstmGates<T>,
    c: &[T],
    h_new: &mut [T],
    c_new: &mut [T],
) {
    for idx in 0..c.len() {
        let cn = gates.f[idx] * c[idx] + gates.i[idx] * gates.g[idx];
        c_new[idx] = cn;
        h_new[idx] = gates.o[idx] * cn.tanh();
    }
}

/// Scatter one batch-row-major pre-activation gradient block back onto the
/// LSTM operands. `gate` selects the row block of `w`/`b` (0=i, 1=f, 2=g, 3=o).
#[allow(clippy::too_many_arguments)]
pub fn lstm_scatter_pre_grad<T: Scalar>(
    gpre: &[T],
    gate: usize,
    x: &[T],
    h: &[T],
    w: &[T],
    batch: usize,
    input_dim: usize,
    hidden: usize,
    gx: &mut [T],
    gh: &mut [T],
    gw: &mut [T],
    gb: &mut [T],
) {
    let cols = input_dim + hidden;
    for b in 0..batch {
        let xrow = &x[b * input_dim..(b + 1) * input_dim];
        let hrow = &h[b * hidden..(b + 1) * hidden];
        for j in 0..hidden {
            let gp = gpre[b * hidden + j];
            let row = gate * hidden + j;
            gb[row] += gp;
            let wrow = &w[row * cols..(row + 1) * cols];
            let gwrow = &mut gw[row * cols..(row + 1) * cols];
            for (i, &xv) in xrow.iter().enumerate() {
                gwrow[i] += gp * xv;
                gx[b * input_dim + i] += gp * wrow[i];
            }
            for (k, &hv) in hrow.iter().enumerate() {
                gwrow[input_dim + k] += gp * hv;
                gh[b * hidden + k] += gp * wrow[input_dim + k];
            }
        }
    }
}
