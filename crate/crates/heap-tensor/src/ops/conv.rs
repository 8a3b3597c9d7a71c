//! Strided periodic convolution and its exact adjoint.
//!
//! Both ops lower to GEMM through an im2col gather (and its col2im scatter
//! twin) built on precomputed wrapped-index tables, so periodicity costs no
//! branches in the inner loops and the transpose op is the adjoint of the
//! forward op by construction.

use crate::{Real, Tensor, TensorError};

/// Circular padding placed before the first tap: total padding is
/// `k - stride`, split (almost) evenly.
fn pad_before(k: usize, stride: usize) -> usize {
    (k - stride) / 2
}

/// Wrapped source index table: entry `[t * out + o]` is the input coordinate
/// read by output position `o` through kernel tap `t`.
fn wrap_table(extent: usize, taps: usize, out: usize, stride: usize, pb: usize) -> Vec<usize> {
    let mut table = vec![0usize; taps * out];
    for t in 0..taps {
        for o in 0..out {
            let raw = (o * stride + t) as isize - pb as isize;
            table[t * out + o] = raw.rem_euclid(extent as isize) as usize;
        }
    }
    table
}

/// Gathers `src` (layout `[c, h, w]`) into `col` (layout `[c*kh*kw, oh*ow]`).
#[allow(clippy::too_many_arguments)]
fn im2col<R: Real>(
    src: &[R],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    ys: &[usize],
    xs: &[usize],
    col: &mut [R],
) {
    debug_assert_eq!(col.len(), c * kh * kw * oh * ow);
    let ohw = oh * ow;
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * ohw;
                let xs_row = &xs[kx * ow..(kx + 1) * ow];
                for oy in 0..oh {
                    let sy = ys[ky * oh + oy];
                    let src_row = &plane[sy * w..(sy + 1) * w];
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    for (d, &sx) in dst.iter_mut().zip(xs_row) {
                        *d = src_row[sx];
                    }
                }
            }
        }
    }
}

/// Scatter-adds `col` back into `dst`; the exact transpose of [`im2col`].
#[allow(clippy::too_many_arguments)]
fn col2im_add<R: Real>(
    col: &[R],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    ys: &[usize],
    xs: &[usize],
    dst: &mut [R],
) {
    debug_assert_eq!(col.len(), c * kh * kw * oh * ow);
    let ohw = oh * ow;
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * ohw;
                let xs_row = &xs[kx * ow..(kx + 1) * ow];
                for oy in 0..oh {
                    let sy = ys[ky * oh + oy];
                    let src = &col[row + oy * ow..row + (oy + 1) * ow];
                    let dst_row = &mut plane[sy * w..(sy + 1) * w];
                    for (&v, &sx) in src.iter().zip(xs_row) {
                        dst_row[sx] += v;
                    }
                }
            }
        }
    }
}

struct ConvGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,

    /// `[kh * oh]` wrapped row indices, `[kw * ow]` wrapped column indices.
    ys: Vec<usize>,
    xs: Vec<usize>,
}

impl ConvGeom {
    fn kdim(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
}

/// Strided circular cross-correlation with per-output-channel bias.
///
/// Input `[b, c_in, h, w]`, kernel `[c_out, c_in, kh, kw]`, output
/// `[b, c_out, h/stride, w/stride]`. Shift-equivariant: rolling the input by
/// `stride * s` rolls the output by `s`, exactly.
pub fn conv2d_periodic<R: Real>(
    input: &Tensor<R>,
    kernel: &Tensor<R>,
    bias: Option<&Tensor<R>>,
    stride: usize,
) -> Result<Tensor<R>, TensorError> {
    let g = conv_geometry(input, kernel, stride, false)?;
    if let Some(b) = bias {
        if b.shape() != [g.c_out] {
            return Err(TensorError::Shape(format!(
                "bias shape {:?} does not match {} output channels",
                b.shape(),
                g.c_out
            )));
        }
    }

    let ohw = g.oh * g.ow;
    let kdim = g.kdim();
    let mut out = vec![R::ZERO; g.batch * g.c_out * ohw];
    let mut col = vec![R::ZERO; kdim * ohw];
    {
        let inp = input.values();
        let ker = kernel.values();
        for b in 0..g.batch {
            im2col(
                &inp[b * g.c_in * g.h * g.w..],
                g.c_in,
                g.h,
                g.w,
                g.kh,
                g.kw,
                g.oh,
                g.ow,
                &g.ys,
                &g.xs,
                &mut col,
            );
            let out_b = &mut out[b * g.c_out * ohw..(b + 1) * g.c_out * ohw];
            unsafe {
                R::gemm(
                    g.c_out,
                    kdim,
                    ohw,
                    R::ONE,
                    ker.as_ptr(),
                    kdim as isize,
                    1,
                    col.as_ptr(),
                    ohw as isize,
                    1,
                    R::ZERO,
                    out_b.as_mut_ptr(),
                    ohw as isize,
                    1,
                );
            }
            if let Some(bt) = bias {
                let bv = bt.values();
                for (o, &bias_o) in bv.iter().enumerate() {
                    for v in &mut out_b[o * ohw..(o + 1) * ohw] {
                        *v += bias_o;
                    }
                }
            }
        }
    }

    let mut parents = vec![input.clone(), kernel.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (ic, kc) = (input.clone(), kernel.clone());
    let has_bias = bias.is_some();
    Ok(Tensor::from_op(
        vec![g.batch, g.c_out, g.oh, g.ow],
        out,
        parents,
        Box::new(move |out_t: &Tensor<R>| {
            let gout = out_t.grad().expect("output grad present");
            let ohw = g.oh * g.ow;
            let kdim = g.kdim();
            let inp = ic.values();
            let ker = kc.values();

            let mut dinput = vec![R::ZERO; inp.len()];
            let mut dkernel = vec![R::ZERO; ker.len()];
            let mut col = vec![R::ZERO; kdim * ohw];
            let mut colgrad = vec![R::ZERO; kdim * ohw];

            for b in 0..g.batch {
                let gout_b = &gout[b * g.c_out * ohw..(b + 1) * g.c_out * ohw];
                im2col(
                    &inp[b * g.c_in * g.h * g.w..],
                    g.c_in,
                    g.h,
                    g.w,
                    g.kh,
                    g.kw,
                    g.oh,
                    g.ow,
                    &g.ys,
                    &g.xs,
                    &mut col,
                );
                unsafe {
                    // dkernel += gout_b [c_out x ohw] * col^T [ohw x kdim]
                    R::gemm(
                        g.c_out,
                        ohw,
                        kdim,
                        R::ONE,
                        gout_b.as_ptr(),
                        ohw as isize,
                        1,
                        col.as_ptr(),
                        1,
                        ohw as isize,
                        R::ONE,
                        dkernel.as_mut_ptr(),
                        kdim as isize,
                        1,
                    );
                    // colgrad = kernel^T [kdim x c_out] * gout_b [c_out x ohw]
                    R::gemm(
                        kdim,
                        g.c_out,
                        ohw,
                        R::ONE,
                        ker.as_ptr(),
                        1,
                        kdim as isize,
                        gout_b.as_ptr(),
                        ohw as isize,
                        1,
                        R::ZERO,
                        colgrad.as_mut_ptr(),
                        ohw as isize,
                        1,
                    );
                }
                col2im_add(
                    &colgrad,
                    g.c_in,
                    g.h,
                    g.w,
                    g.kh,
                    g.kw,
                    g.oh,
                    g.ow,
                    &g.ys,
                    &g.xs,
                    &mut dinput[b * g.c_in * g.h * g.w..(b + 1) * g.c_in * g.h * g.w],
                );
            }
            let mut grads = vec![Some(dinput), Some(dkernel)];
            if has_bias {
                let mut dbias = vec![R::ZERO; g.c_out];
                for b in 0..g.batch {
                    for o in 0..g.c_out {
                        let base = (b * g.c_out + o) * ohw;
                        dbias[o] += gout[base..base + ohw].iter().copied().sum();
                    }
                }
                grads.push(Some(dbias));
            }
            grads
        }),
    ))
}

/// Exact adjoint of [`conv2d_periodic`] with the same kernel geometry, plus a
/// per-output-channel bias.
///
/// Input `[b, c_in, h, w]`, kernel `[c_in, c_out, kh, kw]`, output
/// `[b, c_out, h*stride, w*stride]`.
pub fn conv_transpose2d_periodic<R: Real>(
    input: &Tensor<R>,
    kernel: &Tensor<R>,
    bias: Option<&Tensor<R>>,
    stride: usize,
) -> Result<Tensor<R>, TensorError> {
    // The adjoint's geometry is that of a forward conv mapping the *output*
    // space back onto the input space.
    let g = conv_geometry(input, kernel, stride, true)?;
    if let Some(b) = bias {
        if b.shape() != [g.c_out] {
            return Err(TensorError::Shape(format!(
                "bias shape {:?} does not match {} output channels",
                b.shape(),
                g.c_out
            )));
        }
    }

    // Roles: g.h/g.w is the (large) output extent, g.oh/g.ow the input extent.
    let ihw = g.oh * g.ow;
    let big = g.h * g.w;
    let cokk = g.c_out * g.kh * g.kw;
    let mut out = vec![R::ZERO; g.batch * g.c_out * big];
    let mut colmat = vec![R::ZERO; cokk * ihw];
    {
        let inp = input.values();
        let ker = kernel.values();
        for b in 0..g.batch {
            let in_b = &inp[b * g.c_in * ihw..(b + 1) * g.c_in * ihw];
            unsafe {
                // colmat [cokk x ihw] = kernel^T [cokk x c_in] * in_b [c_in x ihw]
                R::gemm(
                    cokk,
                    g.c_in,
                    ihw,
                    R::ONE,
                    ker.as_ptr(),
                    1,
                    cokk as isize,
                    in_b.as_ptr(),
                    ihw as isize,
                    1,
                    R::ZERO,
                    colmat.as_mut_ptr(),
                    ihw as isize,
                    1,
                );
            }
            let out_b = &mut out[b * g.c_out * big..(b + 1) * g.c_out * big];
            col2im_add(
                &colmat, g.c_out, g.h, g.w, g.kh, g.kw, g.oh, g.ow, &g.ys, &g.xs, out_b,
            );
            if let Some(bt) = bias {
                let bv = bt.values();
                for (o, &bias_o) in bv.iter().enumerate() {
                    for v in &mut out_b[o * big..(o + 1) * big] {
                        *v += bias_o;
                    }
                }
            }
        }
    }

    let mut parents = vec![input.clone(), kernel.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (ic, kc) = (input.clone(), kernel.clone());
    let has_bias = bias.is_some();
    Ok(Tensor::from_op(
        vec![g.batch, g.c_out, g.h, g.w],
        out,
        parents,
        Box::new(move |out_t: &Tensor<R>| {
            let gout = out_t.grad().expect("output grad present");
            let ihw = g.oh * g.ow;
            let big = g.h * g.w;
            let cokk = g.c_out * g.kh * g.kw;
            let inp = ic.values();
            let ker = kc.values();

            let mut dinput = vec![R::ZERO; inp.len()];
            let mut dkernel = vec![R::ZERO; ker.len()];
            let mut dcol = vec![R::ZERO; cokk * ihw];

            for b in 0..g.batch {
                let gout_b = &gout[b * g.c_out * big..(b + 1) * g.c_out * big];
                im2col(
                    gout_b, g.c_out, g.h, g.w, g.kh, g.kw, g.oh, g.ow, &g.ys, &g.xs, &mut dcol,
                );
                let in_b = &inp[b * g.c_in * ihw..(b + 1) * g.c_in * ihw];
                unsafe {
                    // dinput_b [c_in x ihw] = kernel [c_in x cokk] * dcol [cokk x ihw]
                    R::gemm(
                        g.c_in,
                        cokk,
                        ihw,
                        R::ONE,
                        ker.as_ptr(),
                        cokk as isize,
                        1,
                        dcol.as_ptr(),
                        ihw as isize,
                        1,
                        R::ZERO,
                        dinput[b * g.c_in * ihw..].as_mut_ptr(),
                        ihw as isize,
                        1,
                    );
                    // dkernel [c_in x cokk] += in_b [c_in x ihw] * dcol^T [ihw x cokk]
                    R::gemm(
                        g.c_in,
                        ihw,
                        cokk,
                        R::ONE,
                        in_b.as_ptr(),
                        ihw as isize,
                        1,
                        dcol.as_ptr(),
                        1,
                        ihw as isize,
                        R::ONE,
                        dkernel.as_mut_ptr(),
                        cokk as isize,
                        1,
                    );
                }
            }
            let mut grads = vec![Some(dinput), Some(dkernel)];
            if has_bias {
                let mut dbias = vec![R::ZERO; g.c_out];
                for b in 0..g.batch {
                    for o in 0..g.c_out {
                        let base = (b * g.c_out + o) * big;
                        dbias[o] += gout[base..base + big].iter().copied().sum();
                    }
                }
                grads.push(Some(dbias));
            }
            grads
        }),
    ))
}

/// Validates shapes and builds the shared gather geometry. For the transpose
/// op the "output" extents are the large ones and channel roles swap.
fn conv_geometry<R: Real>(
    input: &Tensor<R>,
    kernel: &Tensor<R>,
    stride: usize,
    transpose: bool,
) -> Result<ConvGeom, TensorError> {
    if stride == 0 {
        return Err(TensorError::Contract("stride must be >= 1".into()));
    }
    let ishape = input.shape();
    let kshape = kernel.shape();
    if ishape.len() != 4 || kshape.len() != 4 {
        return Err(TensorError::Shape(format!(
            "conv expects 4-d input and kernel, got {ishape:?} and {kshape:?}"
        )));
    }
    let (batch, ci_in, ih, iw) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let (kh, kw) = (kshape[2], kshape[3]);
    if kh < stride || kw < stride {
        return Err(TensorError::Shape(format!(
            "kernel {kh}x{kw} smaller than stride {stride} leaves gaps"
        )));
    }

    if transpose {
        // kernel [c_in, c_out, kh, kw]; output extent = input extent * stride.
        if kshape[0] != ci_in {
            return Err(TensorError::Shape(format!(
                "transpose kernel expects {} input channels, input has {}",
                kshape[0], ci_in
            )));
        }
        let (h, w) = (ih * stride, iw * stride);
        Ok(ConvGeom {
            batch,
            c_in: ci_in,
            c_out: kshape[1],
            h,
            w,
            kh,
            kw,
            oh: ih,
            ow: iw,
            ys: wrap_table(h, kh, ih, stride, pad_before(kh, stride)),
            xs: wrap_table(w, kw, iw, stride, pad_before(kw, stride)),
        })
    } else {
        // kernel [c_out, c_in, kh, kw]; extents must divide by stride.
        if kshape[1] != ci_in {
            return Err(TensorError::Shape(format!(
                "kernel expects {} input channels, input has {}",
                kshape[1], ci_in
            )));
        }
        if ih % stride != 0 || iw % stride != 0 {
            return Err(TensorError::Shape(format!(
                "input extents {ih}x{iw} not divisible by stride {stride}"
            )));
        }
        let (oh, ow) = (ih / stride, iw / stride);
        Ok(ConvGeom {
            batch,
            c_in: ci_in,
            c_out: kshape[0],
            h: ih,
            w: iw,
            kh,
            kw,
            oh,
            ow,
            ys: wrap_table(ih, kh, oh, stride, pad_before(kh, stride)),
            xs: wrap_table(iw, kw, ow, stride, pad_before(kw, stride)),
        })
    }
}
