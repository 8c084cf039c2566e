//! Ring convolution.
//!
//! The concentric rings of each filter rotate independently. For every ring
//! group the input is correlated with each rotated filter, the per-pixel
//! maximum over rotations is kept, and the group maxima are summed before
//! the bias is added. The backward pass sends the upstream gradient only to
//! the rotation that won the forward maximum and folds the rotated filter
//! gradients back onto the canonical weights.

use crate::error::{ensure_dim, Error, Result};
use crate::ring_geometry::{accumulate_ring_grad, enumerate_ring_rotations, RingLayout, RingRotations, RingWeights};
use crate::scalar::Real;
use crate::tensor::{output_dim, plane_correlate_acc, plane_filter_grad_acc, plane_input_grad_acc, FilterBank, Tensor4};

use super::standard::{add_bias, bias_grad};

/// Winning rotation step for every `(n, o, ring, y, x)` of a forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingState {
    input_dims: [usize; 4],
    out_channels: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    argmax: Vec<u16>,
}

impl RingState {
    /// Number of ring groups (`R`).
    pub fn groups(&self) -> usize {
        (self.k - 1) / 2
    }

    #[inline]
    fn offset(&self, n: usize, o: usize, group: usize) -> usize {
        ((n * self.out_channels + o) * self.groups() + group) * self.oh * self.ow
    }

    /// Rotation step that won at output pixel `(y, x)` of ring `ring >= 1`.
    pub fn winner(&self, n: usize, o: usize, ring: usize, y: usize, x: usize) -> usize {
        self.argmax[self.offset(n, o, ring - 1) + y * self.ow + x] as usize
    }

    /// Every stored winner of ring `ring`.
    pub fn ring_winners(&self, ring: usize) -> impl Iterator<Item = usize> + '_ {
        let plane = self.oh * self.ow;
        let groups = self.groups();
        self.argmax
            .chunks(plane)
            .enumerate()
            .filter(move |(i, _)| i % groups == ring - 1)
            .flat_map(|(_, c)| c.iter().map(|&v| v as usize))
    }

    fn check(&self, input: &Tensor4<impl Real>, w_k: usize, cout: usize, stride: usize, padding: usize) -> Result<()> {
        if self.input_dims != input.dims()
            || self.k != w_k
            || self.out_channels != cout
            || self.stride != stride
            || self.padding != padding
        {
            return Err(Error::StaleState(format!(
                "ring state was recorded for input {:?}, k={}, out={}, stride={}, padding={}; \
                 backward called with input {:?}, k={}, out={}, stride={}, padding={}",
                self.input_dims,
                self.k,
                self.out_channels,
                self.stride,
                self.padding,
                input.dims(),
                w_k,
                cout,
                stride,
                padding
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RingGrads<T> {
    pub input: Tensor4<T>,
    pub weights: FilterBank<T>,
    pub bias: Vec<T>,
}

fn group_pad(rots: &RingRotations<impl Real>, group: usize, padding: usize) -> isize {
    padding as isize - rots.inset(group) as isize
}

pub fn ring_forward<T: Real>(
    input: &Tensor4<T>,
    w: &RingWeights<T>,
    bias: Option<&[T]>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor4<T>, RingState)> {
    const OP: &str = "ring_forward";
    ensure_dim(OP, "input channels", w.in_channels(), input.c())?;
    let k = w.k();
    let layout = RingLayout::new(k)?;
    let rots = enumerate_ring_rotations(w, &layout)?;
    let oh = output_dim(OP, "height", input.h(), k, stride, padding)?;
    let ow = output_dim(OP, "width", input.w(), k, stride, padding)?;
    let (n, cin, cout) = (input.n(), input.c(), w.out_channels());
    let groups = rots.groups.len();
    let plane = oh * ow;

    let mut out = Tensor4::zeros(n, cout, oh, ow);
    let mut argmax = vec![0u16; n * cout * groups * plane];
    let mut resp = vec![T::zero(); plane];
    let mut best = vec![T::zero(); plane];
    for b in 0..n {
        for o in 0..cout {
            for (g, group) in rots.groups.iter().enumerate() {
                let pad = group_pad(&rots, g, padding);
                let start = ((b * cout + o) * groups + g) * plane;
                let winners = &mut argmax[start..start + plane];
                for (s, filters) in group.filters.iter().enumerate() {
                    let target = if s == 0 { &mut best } else { &mut resp };
                    target.fill(T::zero());
                    for c in 0..cin {
                        plane_correlate_acc(
                            input.plane(b, c),
                            input.h(),
                            input.w(),
                            filters.kernel(o, c),
                            group.size,
                            stride,
                            pad,
                            target,
                            oh,
                            ow,
                        );
                    }
                    if s > 0 {
                        // Strict comparison: the lowest rotation index wins ties.
                        for ((bv, win), &rv) in best.iter_mut().zip(winners.iter_mut()).zip(&resp) {
                            if rv > *bv {
                                *bv = rv;
                                *win = s as u16;
                            }
                        }
                    }
                }
                for (dst, &v) in out.plane_mut(b, o).iter_mut().zip(&best) {
                    *dst += v;
                }
            }
        }
    }
    if let Some(bias) = bias {
        add_bias(&mut out, bias)?;
    }
    let state = RingState {
        input_dims: input.dims(),
        out_channels: cout,
        k,
        stride,
        padding,
        oh,
        ow,
        argmax,
    };
    Ok((out, state))
}

pub fn ring_backward<T: Real>(
    input: &Tensor4<T>,
    w: &RingWeights<T>,
    grad_out: &Tensor4<T>,
    state: &RingState,
    stride: usize,
    padding: usize,
) -> Result<RingGrads<T>> {
    const OP: &str = "ring_backward";
    ensure_dim(OP, "input channels", w.in_channels(), input.c())?;
    state.check(input, w.k(), w.out_channels(), stride, padding)?;
    let (oh, ow) = (state.oh, state.ow);
    ensure_dim(OP, "grad batch", input.n(), grad_out.n())?;
    ensure_dim(OP, "grad channels", w.out_channels(), grad_out.c())?;
    ensure_dim(OP, "grad height", oh, grad_out.h())?;
    ensure_dim(OP, "grad width", ow, grad_out.w())?;

    let layout = RingLayout::new(w.k())?;
    let rots = enumerate_ring_rotations(w, &layout)?;
    let mut rot_grads = rots.clone();
    for group in &mut rot_grads.groups {
        for f in &mut group.filters {
            f.data_mut().fill(T::zero());
        }
    }
    let (n, cin, cout) = (input.n(), input.c(), w.out_channels());
    let plane = oh * ow;
    let mut grad_input = input.zeros_like();
    let mut routed = vec![T::zero(); plane];
    for b in 0..n {
        for o in 0..cout {
            let g_plane = grad_out.plane(b, o);
            for (g, group) in rots.groups.iter().enumerate() {
                let pad = group_pad(&rots, g, padding);
                let start = state.offset(b, o, g);
                let winners = &state.argmax[start..start + plane];
                for (s, filters) in group.filters.iter().enumerate() {
                    let mut any = false;
                    for ((r, &gv), &win) in routed.iter_mut().zip(g_plane).zip(winners) {
                        if win as usize == s {
                            *r = gv;
                            any |= gv != T::zero();
                        } else {
                            *r = T::zero();
                        }
                    }
                    if !any {
                        continue;
                    }
                    let fgrad = &mut rot_grads.groups[g].filters[s];
                    for c in 0..cin {
                        plane_input_grad_acc(
                            &routed,
                            oh,
                            ow,
                            filters.kernel(o, c),
                            group.size,
                            stride,
                            pad,
                            grad_input.plane_mut(b, c),
                            input.h(),
                            input.w(),
                        );
                        plane_filter_grad_acc(
                            input.plane(b, c),
                            input.h(),
                            input.w(),
                            &routed,
                            oh,
                            ow,
                            group.size,
                            stride,
                            pad,
                            fgrad.kernel_mut(o, c),
                        );
                    }
                }
            }
        }
    }
    Ok(RingGrads {
        input: grad_input,
        weights: accumulate_ring_grad(&rot_grads, &layout)?,
        bias: bias_grad(grad_out),
    })
}

/// Reference for 3×3 filters: rotates the whole filter in 45° steps
/// (neighbors ordered by polar angle), correlates with each of the eight
/// versions and keeps the per-pixel maximum. Stride 1 only.
pub fn orn8_reference<T: Real>(x: &Tensor4<T>, f: &FilterBank<T>, bias: Option<&[T]>, padding: usize) -> Result<Tensor4<T>> {
    if f.k() != 3 {
        return Err(Error::invalid(format!("orn8_reference needs a 3x3 filter, got {0}x{0}", f.k())));
    }
    ensure_dim("orn8_reference", "input channels", f.in_channels(), x.c())?;
    let mut ring: Vec<(i64, i64)> = (-1..=1)
        .flat_map(|i| (-1..=1).map(move |j| (i, j)))
        .filter(|&o| o != (0, 0))
        .collect();
    let angle = |(i, j): (i64, i64)| (-(i as f64)).atan2(j as f64);
    ring.sort_by(|a, b| angle(*b).total_cmp(&angle(*a)));
    let (h, w) = (x.h(), x.w());
    let oh = output_dim("orn8_reference", "height", h, 3, 1, padding)?;
    let ow = output_dim("orn8_reference", "width", w, 3, 1, padding)?;
    let p = padding as isize;
    let mut out = Tensor4::zeros(x.n(), f.out_channels(), oh, ow);
    for n in 0..x.n() {
        for o in 0..f.out_channels() {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = T::neg_infinity();
                    for s in 0..8 {
                        let tap = |c: usize, i: usize, j: usize| {
                            if (i, j) == (1, 1) {
                                return f.get(o, c, 1, 1);
                            }
                            let pos = ring.iter().position(|&q| q == (i as i64 - 1, j as i64 - 1)).expect("ring offset");
                            let (si, sj) = ring[(pos + 8 - s) % 8];
                            f.get(o, c, (si + 1) as usize, (sj + 1) as usize)
                        };
                        let mut acc = T::zero();
                        for c in 0..x.c() {
                            for i in 0..3 {
                                for j in 0..3 {
                                    let iy = (y + i) as isize - p;
                                    let ix = (xx + j) as isize - p;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += x.get(n, c, iy as usize, ix as usize) * tap(c, i, j);
                                    }
                                }
                            }
                        }
                        best = best.max(acc);
                    }
                    out.set(n, o, y, xx, best + bias.map_or(T::zero(), |b| b[o]));
                }
            }
        }
    }
    Ok(out)
}
