//! Batched forward/backward kernels. Activations are stored sample-major:
//! a batch of `b` tensors of shape `c x h x w` is one `Vec` of `b * c * h * w`.

use super::arch::{Layer, ParamSlot, Plan, Shape};
use super::scalar::Scalar;

/// Cached intermediate results of a forward pass.
pub(crate) struct Tape<T> {
    pub batch: usize,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<T>>,
    /// im2col buffers for convolutions, argmax indices for pooling.
    aux: Vec<Aux<T>>,
}

enum Aux<T> {
    None,
    Cols(Vec<T>),
    Argmax(Vec<u32>),
}

fn im2col<T: Scalar>(input: &[T], s: Shape, kernel: usize, stride: usize, out: Shape, cols: &mut [T]) {
    let n = out.h * out.w;
    for ci in 0..s.c {
        let plane = &input[ci * s.h * s.w..(ci + 1) * s.h * s.w];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..out.h {
                    let src = &plane[(oy * stride + ky) * s.w + kx..];
                    let d = &mut dst[oy * out.w..(oy + 1) * out.w];
                    if stride == 1 {
                        d.copy_from_slice(&src[..out.w]);
                    } else {
                        for (ox, v) in d.iter_mut().enumerate() {
                            *v = src[ox * stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(cols: &[T], s: Shape, kernel: usize, stride: usize, out: Shape, grad_in: &mut [T]) {
    let n = out.h * out.w;
    for ci in 0..s.c {
        let plane = &mut grad_in[ci * s.h * s.w..(ci + 1) * s.h * s.w];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..out.h {
                    let base = (oy * stride + ky) * s.w + kx;
                    for ox in 0..out.w {
                        plane[base + ox * stride] += src[oy * out.w + ox];
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Scalar>(
    layers: &[Layer],
    plan: &Plan,
    params: &[T],
    input: Vec<T>,
    batch: usize,
    keep: bool,
) -> Tape<T> {
    let mut acts = vec![input];
    let mut aux = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let (sin, sout) = (plan.shapes[i], plan.shapes[i + 1]);
        let x = acts.last().expect("input present");
        let (y, a) = match *layer {
            Layer::Conv { kernel, stride, .. } => {
                let slot = plan.slots[i].as_ref().expect("conv has params");
                conv_forward(x, sin, sout, kernel, stride, slot, params, batch)
            }
            Layer::Relu => (
                x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
                Aux::None,
            ),
            Layer::MaxPool2 => pool_forward(x, sin, sout, batch),
            Layer::Flatten => (x.clone(), Aux::None),
            Layer::Dense { units } => {
                let slot = plan.slots[i].as_ref().expect("dense has params");
                (dense_forward(x, sin.len(), units, slot, params, batch), Aux::None)
            }
        };
        if !keep {
            // inference only needs the latest activation
            acts.clear();
        }
        acts.push(y);
        aux.push(if keep { a } else { Aux::None });
    }
    Tape { batch, acts, aux }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Scalar>(
    x: &[T],
    sin: Shape,
    sout: Shape,
    kernel: usize,
    stride: usize,
    slot: &ParamSlot,
    params: &[T],
    batch: usize,
) -> (Vec<T>, Aux<T>) {
    let k = sin.c * kernel * kernel;
    let n = sout.h * sout.w;
    let w = &params[slot.weight_offset..slot.weight_offset + slot.weight_len()];
    let bias = &params[slot.bias_offset..slot.bias_offset + slot.bias_len];
    let mut cols = vec![T::zero(); batch * k * n];
    let mut y = vec![T::zero(); batch * sout.len()];
    for b in 0..batch {
        let cb = &mut cols[b * k * n..(b + 1) * k * n];
        im2col(&x[b * sin.len()..(b + 1) * sin.len()], sin, kernel, stride, sout, cb);
        let yb = &mut y[b * sout.len()..(b + 1) * sout.len()];
        for (co, row) in yb.chunks_exact_mut(n).enumerate() {
            row.fill(bias[co]);
        }
        T::gemm(sout.c, k, n, T::one(), w, k as isize, 1, cb, n as isize, 1, T::one(), yb, n as isize, 1);
    }
    (y, Aux::Cols(cols))
}

fn pool_forward<T: Scalar>(x: &[T], sin: Shape, sout: Shape, batch: usize) -> (Vec<T>, Aux<T>) {
    let mut y = Vec::with_capacity(batch * sout.len());
    let mut arg = Vec::with_capacity(batch * sout.len());
    for b in 0..batch {
        let xb = &x[b * sin.len()..(b + 1) * sin.len()];
        for c in 0..sin.c {
            let plane = c * sin.h * sin.w;
            for oy in 0..sout.h {
                for ox in 0..sout.w {
                    let mut best = plane + 2 * oy * sin.w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let j = plane + (2 * oy + dy) * sin.w + 2 * ox + dx;
                        // first maximum wins on ties
                        if xb[j] > xb[best] {
                            best = j;
                        }
                    }
                    y.push(xb[best]);
                    arg.push(best as u32);
                }
            }
        }
    }
    (y, Aux::Argmax(arg))
}

fn dense_forward<T: Scalar>(
    x: &[T],
    inputs: usize,
    units: usize,
    slot: &ParamSlot,
    params: &[T],
    batch: usize,
) -> Vec<T> {
    let w = &params[slot.weight_offset..slot.weight_offset + slot.weight_len()];
    let bias = &params[slot.bias_offset..slot.bias_offset + slot.bias_len];
    let mut y = Vec::with_capacity(batch * units);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    // Y[b, o] += X[b, :] . W[o, :]
    T::gemm(batch, inputs, units, T::one(), x, inputs as isize, 1, w, 1, inputs as isize, T::one(), &mut y, units as isize, 1);
    y
}

/// Accumulates parameter gradients into `grads` given `d(loss)/d(output)`.
pub(crate) fn backward<T: Scalar>(
    layers: &[Layer],
    plan: &Plan,
    params: &[T],
    tape: &Tape<T>,
    grad_out: Vec<T>,
    grads: &mut [T],
) {
    let batch = tape.batch;
    let mut dy = grad_out;
    for (i, layer) in layers.iter().enumerate().rev() {
        let (sin, sout) = (plan.shapes[i], plan.shapes[i + 1]);
        let x = &tape.acts[i];
        let need_input_grad = i > 0;
        dy = match *layer {
            Layer::Conv { kernel, stride, .. } => {
                let slot = plan.slots[i].as_ref().expect("conv has params");
                let Aux::Cols(cols) = &tape.aux[i] else {
                    unreachable!("conv tape holds im2col buffers")
                };
                let k = sin.c * kernel * kernel;
                let n = sout.h * sout.w;
                let w = &params[slot.weight_offset..slot.weight_offset + slot.weight_len()];
                let mut dx = vec![T::zero(); if need_input_grad { batch * sin.len() } else { 0 }];
                let mut dcols = vec![T::zero(); if need_input_grad { k * n } else { 0 }];
                for b in 0..batch {
                    let dyb = &dy[b * sout.len()..(b + 1) * sout.len()];
                    let cb = &cols[b * k * n..(b + 1) * k * n];
                    {
                        let gw = &mut grads[slot.weight_offset..slot.weight_offset + slot.weight_len()];
                        // dW[co, r] += sum_j dY[co, j] * cols[r, j]
                        T::gemm(sout.c, n, k, T::one(), dyb, n as isize, 1, cb, 1, n as isize, T::one(), gw, k as isize, 1);
                    }
                    let gb = &mut grads[slot.bias_offset..slot.bias_offset + slot.bias_len];
                    for (co, row) in dyb.chunks_exact(n).enumerate() {
                        let mut acc = T::zero();
                        for &v in row {
                            acc += v;
                        }
                        gb[co] += acc;
                    }
                    if need_input_grad {
                        // dcols[r, j] = sum_co W[co, r] * dY[co, j]
                        T::gemm(k, sout.c, n, T::one(), w, 1, k as isize, dyb, n as isize, 1, T::zero(), &mut dcols, n as isize, 1);
                        col2im_add(&dcols, sin, kernel, stride, sout, &mut dx[b * sin.len()..(b + 1) * sin.len()]);
                    }
                }
                dx
            }
            Layer::Relu => {
                let y = &tape.acts[i + 1];
                dy.iter()
                    .zip(y)
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect()
            }
            Layer::MaxPool2 => {
                let Aux::Argmax(arg) = &tape.aux[i] else {
                    unreachable!("pool tape holds argmax indices")
                };
                let mut dx = vec![T::zero(); batch * sin.len()];
                for b in 0..batch {
                    let dxb = &mut dx[b * sin.len()..(b + 1) * sin.len()];
                    for j in 0..sout.len() {
                        let idx = b * sout.len() + j;
                        dxb[arg[idx] as usize] += dy[idx];
                    }
                }
                dx
            }
            Layer::Flatten => dy,
            Layer::Dense { units } => {
                let slot = plan.slots[i].as_ref().expect("dense has params");
                let inputs = sin.len();
                {
                    let gw = &mut grads[slot.weight_offset..slot.weight_offset + slot.weight_len()];
                    // dW[o, j] += sum_b dY[b, o] * X[b, j]
                    T::gemm(units, batch, inputs, T::one(), &dy, 1, units as isize, x, inputs as isize, 1, T::one(), gw, inputs as isize, 1);
                }
                let gb = &mut grads[slot.bias_offset..slot.bias_offset + slot.bias_len];
                for row in dy.chunks_exact(units) {
                    for (g, &v) in gb.iter_mut().zip(row) {
                        *g += v;
                    }
                }
                if need_input_grad {
                    let w = &params[slot.weight_offset..slot.weight_offset + slot.weight_len()];
                    let mut dx = vec![T::zero(); batch * inputs];
                    T::gemm(batch, units, inputs, T::one(), &dy, units as isize, 1, w, inputs as isize, 1, T::zero(), &mut dx, inputs as isize, 1);
                    dx
                } else {
                    Vec::new()
                }
            }
        };
        if !need_input_grad {
            break;
        }
    }
}
