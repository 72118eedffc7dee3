//! Raw forward and adjoint loops for the spatial operators.
//!
//! All kernels work on flat row-major slices and accumulate into their
//! outputs, so callers zero-initialize (or bias-initialize) destinations.

use crate::{Real, Shape};

/// Output columns `x` for which `x + kx - pad` lands inside `[0, width)`.
#[inline]
fn valid_cols(out_w: usize, in_w: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (in_w + pad).saturating_sub(kx).min(out_w);
    (lo, hi.max(lo))
}

#[inline]
fn shifted_row(y: usize, ky: usize, pad: usize, in_h: usize) -> Option<usize> {
    let iy = (y + ky).checked_sub(pad)?;
    (iy < in_h).then_some(iy)
}

/// Dot product with eight independent partial sums, so the reduction
/// vectorizes; the summation order is fixed.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (d, s) in y.iter_mut().zip(x) {
        *d += alpha * *s;
    }
}

/// Visits the contiguous runs that map input rows onto rows of the unfolded
/// `(c * k * k, n * out_plane)` matrix: `f(input_offset, col_offset, len)`.
/// Row `(i, ky, kx)` of that matrix is the input plane `i` shifted by
/// `(ky - pad, kx - pad)` with zero fill.
fn for_each_run(is: Shape, k: usize, pad: usize, os: Shape, mut f: impl FnMut(usize, usize, usize)) {
    let ncols = is.n * os.plane();
    for i in 0..is.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((i * k + ky) * k + kx) * ncols;
                let (lo, hi) = valid_cols(os.w, is.w, kx, pad);
                if lo >= hi {
                    continue;
                }
                for n in 0..is.n {
                    let ibase = is.index(n, i, 0, 0);
                    for y in 0..os.h {
                        if let Some(iy) = shifted_row(y, ky, pad, is.h) {
                            f(ibase + iy * is.w + kx + lo - pad, row + n * os.plane() + y * os.w + lo, hi - lo);
                        }
                    }
                }
            }
        }
    }
}

fn im2col<T: Real>(input: &[T], is: Shape, k: usize, pad: usize, os: Shape) -> Vec<T> {
    let mut col = vec![T::zero(); is.c * k * k * is.n * os.plane()];
    for_each_run(is, k, pad, os, |src, dst, len| {
        col[dst..dst + len].copy_from_slice(&input[src..src + len]);
    });
    col
}

fn col2im<T: Real>(col: &[T], is: Shape, k: usize, pad: usize, os: Shape, input: &mut [T]) {
    for_each_run(is, k, pad, os, |src, dst, len| {
        for (d, s) in input[src..src + len].iter_mut().zip(&col[dst..dst + len]) {
            *d += *s;
        }
    });
}

/// Cross-correlation `out[n, o] = bias[o] + sum_i w[o, i] * in[n, i]`,
/// computed as a product of the weight matrix with the unfolded input.
pub(crate) fn conv2d_forward<T: Real>(
    input: &[T],
    is: Shape,
    weight: &[T],
    ws: Shape,
    bias: &[T],
    pad: usize,
    out: &mut [T],
    os: Shape,
) {
    let k = ws.h;
    let kk = is.c * k * k;
    let plane = os.plane();
    let ncols = is.n * plane;
    let col = im2col(input, is, k, pad, os);
    let mut acc = vec![T::zero(); ncols];
    for o in 0..ws.n {
        acc.fill(bias[o]);
        let wrow = &weight[o * kk..(o + 1) * kk];
        for (r, &wv) in wrow.iter().enumerate() {
            if wv != T::zero() {
                axpy(wv, &col[r * ncols..(r + 1) * ncols], &mut acc);
            }
        }
        for n in 0..is.n {
            let dst = os.index(n, o, 0, 0);
            out[dst..dst + plane].copy_from_slice(&acc[n * plane..(n + 1) * plane]);
        }
    }
}

/// Adjoint of [`conv2d_forward`]; each gradient slot is optional.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Real>(
    gout: &[T],
    os: Shape,
    input: &[T],
    is: Shape,
    weight: &[T],
    ws: Shape,
    pad: usize,
    gin: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let k = ws.h;
    let kk = is.c * k * k;
    let plane = os.plane();
    let ncols = is.n * plane;
    // gradient rows in the (o, n * plane) layout of the product
    let mut grow = vec![T::zero(); ws.n * ncols];
    for o in 0..ws.n {
        for n in 0..is.n {
            let src = os.index(n, o, 0, 0);
            grow[o * ncols + n * plane..o * ncols + (n + 1) * plane].copy_from_slice(&gout[src..src + plane]);
        }
    }
    if let Some(gb) = gb.as_deref_mut() {
        for o in 0..ws.n {
            gb[o] += grow[o * ncols..(o + 1) * ncols].iter().copied().sum::<T>();
        }
    }
    if gw.is_some() || gin.is_some() {
        let col = if gw.is_some() { im2col(input, is, k, pad, os) } else { Vec::new() };
        if let Some(gw) = gw.as_deref_mut() {
            for o in 0..ws.n {
                let g = &grow[o * ncols..(o + 1) * ncols];
                for r in 0..kk {
                    gw[o * kk + r] += dot(g, &col[r * ncols..(r + 1) * ncols]);
                }
            }
        }
        if let Some(gin) = gin {
            let mut gcol = vec![T::zero(); kk * ncols];
            for r in 0..kk {
                let dst = &mut gcol[r * ncols..(r + 1) * ncols];
                for o in 0..ws.n {
                    let wv = weight[o * kk + r];
                    if wv != T::zero() {
                        axpy(wv, &grow[o * ncols..(o + 1) * ncols], dst);
                    }
                }
            }
            col2im(&gcol, is, k, pad, os, gin);
        }
    }
}

/// 2x2 stride-2 transposed convolution with weight `(in, out, 2, 2)`.
pub(crate) fn upconv2_forward<T: Real>(
    input: &[T],
    is: Shape,
    weight: &[T],
    ws: Shape,
    bias: &[T],
    out: &mut [T],
    os: Shape,
) {
    for n in 0..is.n {
        for o in 0..ws.c {
            let base = os.index(n, o, 0, 0);
            out[base..base + os.plane()].fill(bias[o]);
            for i in 0..is.c {
                let ibase = is.index(n, i, 0, 0);
                for dy in 0..2 {
                    for dx in 0..2 {
                        let wv = weight[ws.index(i, o, dy, dx)];
                        for y in 0..is.h {
                            let row = &input[ibase + y * is.w..ibase + (y + 1) * is.w];
                            let orow = base + (2 * y + dy) * os.w + dx;
                            for (x, v) in row.iter().enumerate() {
                                out[orow + 2 * x] += wv * *v;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn upconv2_backward<T: Real>(
    gout: &[T],
    os: Shape,
    input: &[T],
    is: Shape,
    weight: &[T],
    ws: Shape,
    mut gin: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    for n in 0..is.n {
        for o in 0..ws.c {
            let base = os.index(n, o, 0, 0);
            if let Some(gb) = gb.as_deref_mut() {
                gb[o] += gout[base..base + os.plane()].iter().copied().sum::<T>();
            }
            for i in 0..is.c {
                let ibase = is.index(n, i, 0, 0);
                for dy in 0..2 {
                    for dx in 0..2 {
                        let widx = ws.index(i, o, dy, dx);
                        let wv = weight[widx];
                        let mut acc = T::zero();
                        for y in 0..is.h {
                            let orow = base + (2 * y + dy) * os.w + dx;
                            for x in 0..is.w {
                                let g = gout[orow + 2 * x];
                                let idx = ibase + y * is.w + x;
                                acc += g * input[idx];
                                if let Some(gin) = gin.as_deref_mut() {
                                    gin[idx] += wv * g;
                                }
                            }
                        }
                        if let Some(gw) = gw.as_deref_mut() {
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 stride-2 max pooling. Returns flat input indices of each maximum;
/// ties resolve to the first cell in row-major order.
pub(crate) fn maxpool2_forward<T: Real>(input: &[T], is: Shape, out: &mut [T], os: Shape) -> Vec<u32> {
    let mut argmax = vec![0u32; os.len()];
    for n in 0..is.n {
        for c in 0..is.c {
            for y in 0..os.h {
                for x in 0..os.w {
                    let mut best = is.index(n, c, 2 * y, 2 * x);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = is.index(n, c, 2 * y + dy, 2 * x + dx);
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                    let oidx = os.index(n, c, y, x);
                    out[oidx] = input[best];
                    argmax[oidx] = best as u32;
                }
            }
        }
    }
    argmax
}

/// Coefficients of the first-derivative stencil at position `i` of a line
/// of `len >= 2` samples with unit spacing: central in the interior,
/// one-sided at both ends. Entries are `(index, weight)`.
#[inline]
pub(crate) fn derivative_stencil(len: usize, i: usize) -> [(usize, f64); 2] {
    if i == 0 {
        [(1, 1.0), (0, -1.0)]
    } else if i == len - 1 {
        [(len - 1, 1.0), (len - 2, -1.0)]
    } else {
        [(i + 1, 0.5), (i - 1, -0.5)]
    }
}

/// Applies the derivative stencil along columns (`along_x`) or rows, scaled
/// by `scale`. With `transpose` the adjoint is accumulated instead.
pub(crate) fn apply_stencil<T: Real>(src: &[T], dst: &mut [T], s: Shape, along_x: bool, scale: f64, transpose: bool) {
    for plane in 0..s.n * s.c {
        let base = plane * s.plane();
        for y in 0..s.h {
            for x in 0..s.w {
                let here = base + y * s.w + x;
                let taps = if along_x {
                    derivative_stencil(s.w, x).map(|(j, w)| (base + y * s.w + j, w))
                } else {
                    derivative_stencil(s.h, y).map(|(j, w)| (base + j * s.w + x, w))
                };
                for (idx, w) in taps {
                    let coeff = T::lit(w * scale);
                    if transpose {
                        dst[idx] += coeff * src[here];
                    } else {
                        dst[here] += coeff * src[idx];
                    }
                }
            }
        }
    }
}
