//! Direct 2D cross-correlation with zero padding.
//!
//! Every output pixel accumulates its terms in a fixed order: input channel
//! first, then filter row, then filter column. Out-of-bounds taps are
//! skipped rather than multiplied by zero.

use crate::error::{ensure_dim, Error, Result};
use crate::scalar::Real;

use super::{FilterBank, Tensor4};

/// Spatial output size `(size + 2 * padding - kernel) / stride + 1`, which
/// must be a positive integer.
pub fn output_dim(
    op: &'static str,
    axis: &'static str,
    size: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid(format!("{op}: stride must be >= 1")));
    }
    let padded = size + 2 * padding;
    if padded < kernel || !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::NonIntegralOutput {
            op,
            axis,
            size,
            kernel,
            stride,
            padding,
        });
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output indices `lo..hi` whose tap `x * stride + tap - pad` lands inside
/// `0..in_len`.
#[inline]
fn valid_range(tap: usize, stride: usize, pad: isize, in_len: usize, out_len: usize) -> (usize, usize) {
    let off = tap as isize - pad;
    let lo = if off >= 0 {
        0
    } else {
        ((-off) as usize).div_ceil(stride)
    };
    let last = in_len as isize - 1 - off;
    if last < 0 {
        return (0, 0);
    }
    let hi = (last as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// `out += correlate(inp, kernel)` for one plane pair. `pad` may be negative,
/// which lets a small kernel be evaluated as if embedded in a larger one.
#[allow(clippy::too_many_arguments)]
pub(crate) fn plane_correlate_acc<T: Real>(
    inp: &[T],
    ih: usize,
    iw: usize,
    kernel: &[T],
    k: usize,
    stride: usize,
    pad: isize,
    out: &mut [T],
    oh: usize,
    ow: usize,
) {
    for i in 0..k {
        let (ylo, yhi) = valid_range(i, stride, pad, ih, oh);
        for y in ylo..yhi {
            let iy = ((y * stride) as isize + i as isize - pad) as usize;
            let in_row = &inp[iy * iw..(iy + 1) * iw];
            let out_row = &mut out[y * ow..(y + 1) * ow];
            for j in 0..k {
                let w = kernel[i * k + j];
                if w == T::zero() {
                    continue;
                }
                let (xlo, xhi) = valid_range(j, stride, pad, iw, ow);
                let off = j as isize - pad;
                if stride == 1 {
                    let base = (xlo as isize + off) as usize;
                    for (o, &v) in out_row[xlo..xhi].iter_mut().zip(&in_row[base..base + (xhi - xlo)]) {
                        *o += w * v;
                    }
                } else {
                    for (x, o) in out_row.iter_mut().enumerate().take(xhi).skip(xlo) {
                        *o += w * in_row[((x * stride) as isize + off) as usize];
                    }
                }
            }
        }
    }
}

/// `gin += adjoint of correlate(·, kernel)` applied to `grad`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn plane_input_grad_acc<T: Real>(
    grad: &[T],
    oh: usize,
    ow: usize,
    kernel: &[T],
    k: usize,
    stride: usize,
    pad: isize,
    gin: &mut [T],
    ih: usize,
    iw: usize,
) {
    for i in 0..k {
        let (ylo, yhi) = valid_range(i, stride, pad, ih, oh);
        for y in ylo..yhi {
            let iy = ((y * stride) as isize + i as isize - pad) as usize;
            let g_row = &grad[y * ow..(y + 1) * ow];
            let gin_row = &mut gin[iy * iw..(iy + 1) * iw];
            for j in 0..k {
                let w = kernel[i * k + j];
                if w == T::zero() {
                    continue;
                }
                let (xlo, xhi) = valid_range(j, stride, pad, iw, ow);
                let off = j as isize - pad;
                if stride == 1 {
                    let base = (xlo as isize + off) as usize;
                    for (gi, &g) in gin_row[base..base + (xhi - xlo)].iter_mut().zip(&g_row[xlo..xhi]) {
                        *gi += w * g;
                    }
                } else {
                    for (x, &g) in g_row.iter().enumerate().take(xhi).skip(xlo) {
                        gin_row[((x * stride) as isize + off) as usize] += w * g;
                    }
                }
            }
        }
    }
}

/// `gk[i][j] += Σ_{y,x} inp[y*s+i-p][x*s+j-p] * grad[y][x]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn plane_filter_grad_acc<T: Real>(
    inp: &[T],
    ih: usize,
    iw: usize,
    grad: &[T],
    oh: usize,
    ow: usize,
    k: usize,
    stride: usize,
    pad: isize,
    gk: &mut [T],
) {
    for i in 0..k {
        let (ylo, yhi) = valid_range(i, stride, pad, ih, oh);
        for j in 0..k {
            let (xlo, xhi) = valid_range(j, stride, pad, iw, ow);
            let off = j as isize - pad;
            let mut acc = T::zero();
            for y in ylo..yhi {
                let iy = ((y * stride) as isize + i as isize - pad) as usize;
                let in_row = &inp[iy * iw..(iy + 1) * iw];
                let g_row = &grad[y * ow..(y + 1) * ow];
                if stride == 1 {
                    let base = (xlo as isize + off) as usize;
                    for (&v, &g) in in_row[base..base + (xhi - xlo)].iter().zip(&g_row[xlo..xhi]) {
                        acc += v * g;
                    }
                } else {
                    for (x, &g) in g_row.iter().enumerate().take(xhi).skip(xlo) {
                        acc += in_row[((x * stride) as isize + off) as usize] * g;
                    }
                }
            }
            gk[i * k + j] += acc;
        }
    }
}

fn conv_out_dims(
    op: &'static str,
    input: &Tensor4<impl Real>,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize)> {
    Ok((
        output_dim(op, "height", input.h(), k, stride, padding)?,
        output_dim(op, "width", input.w(), k, stride, padding)?,
    ))
}

/// Dense cross-correlation:
/// `out[n,o,y,x] = Σ_{c,i,j} in[n,c,y·s+i−p,x·s+j−p] · f[o,c,i,j]`.
pub fn conv2d_forward<T: Real>(
    input: &Tensor4<T>,
    filters: &FilterBank<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    const OP: &str = "conv2d_forward";
    ensure_dim(OP, "input channels", filters.in_channels(), input.c())?;
    let (oh, ow) = conv_out_dims(OP, input, filters.k(), stride, padding)?;
    let (n, cin, cout, k) = (input.n(), input.c(), filters.out_channels(), filters.k());
    let mut out = Tensor4::zeros(n, cout, oh, ow);
    for b in 0..n {
        for o in 0..cout {
            let out_plane = out.plane_mut(b, o);
            for c in 0..cin {
                plane_correlate_acc(
                    input.plane(b, c),
                    input.h(),
                    input.w(),
                    filters.kernel(o, c),
                    k,
                    stride,
                    padding as isize,
                    out_plane,
                    oh,
                    ow,
                );
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`conv2d_forward`] with respect to both the input and the
/// filters.
pub fn conv2d_backward<T: Real>(
    input: &Tensor4<T>,
    filters: &FilterBank<T>,
    grad_out: &Tensor4<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor4<T>, FilterBank<T>)> {
    const OP: &str = "conv2d_backward";
    ensure_dim(OP, "input channels", filters.in_channels(), input.c())?;
    let (oh, ow) = conv_out_dims(OP, input, filters.k(), stride, padding)?;
    ensure_dim(OP, "grad batch", input.n(), grad_out.n())?;
    ensure_dim(OP, "grad channels", filters.out_channels(), grad_out.c())?;
    ensure_dim(OP, "grad height", oh, grad_out.h())?;
    ensure_dim(OP, "grad width", ow, grad_out.w())?;

    let (n, cin, cout, k) = (input.n(), input.c(), filters.out_channels(), filters.k());
    let (ih, iw) = (input.h(), input.w());
    let mut grad_input = input.zeros_like();
    let mut grad_filters = filters.zeros_like();
    for b in 0..n {
        for o in 0..cout {
            let g = grad_out.plane(b, o);
            for c in 0..cin {
                plane_input_grad_acc(
                    g,
                    oh,
                    ow,
                    filters.kernel(o, c),
                    k,
                    stride,
                    padding as isize,
                    grad_input.plane_mut(b, c),
                    ih,
                    iw,
                );
                plane_filter_grad_acc(
                    input.plane(b, c),
                    ih,
                    iw,
                    g,
                    oh,
                    ow,
                    k,
                    stride,
                    padding as isize,
                    grad_filters.kernel_mut(o, c),
                );
            }
        }
    }
    Ok((grad_input, grad_filters))
}

/// Per-channel correlation: channel `c` of the input is filtered by kernel
/// `filters[c][0]` alone. `filters` has `in_channels == 1`.
pub fn depthwise_conv2d_forward<T: Real>(
    input: &Tensor4<T>,
    filters: &FilterBank<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    const OP: &str = "depthwise_conv2d_forward";
    ensure_dim(OP, "filter group width", 1, filters.in_channels())?;
    ensure_dim(OP, "channels", filters.out_channels(), input.c())?;
    let (oh, ow) = conv_out_dims(OP, input, filters.k(), stride, padding)?;
    let mut out = Tensor4::zeros(input.n(), input.c(), oh, ow);
    for b in 0..input.n() {
        for c in 0..input.c() {
            plane_correlate_acc(
                input.plane(b, c),
                input.h(),
                input.w(),
                filters.kernel(c, 0),
                filters.k(),
                stride,
                padding as isize,
                out.plane_mut(b, c),
                oh,
                ow,
            );
        }
    }
    Ok(out)
}

pub fn depthwise_conv2d_backward<T: Real>(
    input: &Tensor4<T>,
    filters: &FilterBank<T>,
    grad_out: &Tensor4<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor4<T>, FilterBank<T>)> {
    const OP: &str = "depthwise_conv2d_backward";
    ensure_dim(OP, "filter group width", 1, filters.in_channels())?;
    ensure_dim(OP, "channels", filters.out_channels(), input.c())?;
    let (oh, ow) = conv_out_dims(OP, input, filters.k(), stride, padding)?;
    ensure_dim(OP, "grad batch", input.n(), grad_out.n())?;
    ensure_dim(OP, "grad channels", input.c(), grad_out.c())?;
    ensure_dim(OP, "grad height", oh, grad_out.h())?;
    ensure_dim(OP, "grad width", ow, grad_out.w())?;

    let mut grad_input = input.zeros_like();
    let mut grad_filters = filters.zeros_like();
    let k = filters.k();
    for b in 0..input.n() {
        for c in 0..input.c() {
            let g = grad_out.plane(b, c);
            plane_input_grad_acc(
                g,
                oh,
                ow,
                filters.kernel(c, 0),
                k,
                stride,
                padding as isize,
                grad_input.plane_mut(b, c),
                input.h(),
                input.w(),
            );
            plane_filter_grad_acc(
                input.plane(b, c),
                input.h(),
                input.w(),
                g,
                oh,
                ow,
                k,
                stride,
                padding as isize,
                grad_filters.kernel_mut(c, 0),
            );
        }
    }
    Ok((grad_input, grad_filters))
}
