//! Radial depthwise-separable convolution: a 1×1 convolution to `out1`
//! channels, one radial 2D filter per channel, and a 1×1 convolution to
//! `out2` channels. Stride and padding apply to the radial stage; the bias
//! sits on the last stage.

use crate::error::{ensure_dim, Result};
use crate::ring_geometry::{accumulate_radial_grad, build_radial_filter, RadialWeights};
use crate::scalar::Real;
use crate::tensor::{
    conv2d_backward, conv2d_forward, depthwise_conv2d_backward, depthwise_conv2d_forward, FilterBank, Tensor4,
};

use super::standard::{add_bias, bias_grad};

#[derive(Clone, Debug, PartialEq)]
pub struct RsdwParams<T> {
    /// `out1 × in × 1 × 1`
    pub expand: FilterBank<T>,
    /// `out1 × 1` radial weights, one set per channel.
    pub radial: RadialWeights<T>,
    /// `out2 × out1 × 1 × 1`
    pub project: FilterBank<T>,
    /// `out2` values, or `None` for a bias-free layer.
    pub bias: Option<Vec<T>>,
}

impl<T: Real> RsdwParams<T> {
    pub fn zeros(in_channels: usize, out1: usize, out2: usize, radius: usize, has_bias: bool) -> Self {
        Self {
            expand: FilterBank::zeros(out1, in_channels, 1),
            radial: RadialWeights::zeros(out1, 1, radius),
            project: FilterBank::zeros(out2, out1, 1),
            bias: has_bias.then(|| vec![T::zero(); out2]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.expand.in_channels()
    }

    pub fn out1(&self) -> usize {
        self.expand.out_channels()
    }

    pub fn out2(&self) -> usize {
        self.project.out_channels()
    }

    fn check_chain(&self, op: &'static str, input: &Tensor4<T>) -> Result<()> {
        ensure_dim(op, "stage 1 (1x1) input channels", self.expand.in_channels(), input.c())?;
        ensure_dim(op, "stage 1 (1x1) filter size", 1, self.expand.k())?;
        ensure_dim(op, "stage 2 (radial) channels", self.expand.out_channels(), self.radial.out_channels())?;
        ensure_dim(op, "stage 2 (radial) group width", 1, self.radial.in_channels())?;
        ensure_dim(op, "stage 3 (1x1) input channels", self.radial.out_channels(), self.project.in_channels())?;
        ensure_dim(op, "stage 3 (1x1) filter size", 1, self.project.k())?;
        if let Some(b) = &self.bias {
            ensure_dim(op, "stage 3 (1x1) bias length", self.project.out_channels(), b.len())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RsdwGrads<T> {
    pub input: Tensor4<T>,
    pub expand: FilterBank<T>,
    pub radial: RadialWeights<T>,
    pub project: FilterBank<T>,
    pub bias: Vec<T>,
}

/// Intermediate activations of the first two stages.
#[derive(Clone, Debug)]
pub struct RsdwActivations<T> {
    pub expanded: Tensor4<T>,
    pub filtered: Tensor4<T>,
}

pub fn rsdw_forward_with_activations<T: Real>(
    input: &Tensor4<T>,
    params: &RsdwParams<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor4<T>, RsdwActivations<T>)> {
    params.check_chain("rsdw_forward", input)?;
    let expanded = conv2d_forward(input, &params.expand, 1, 0)?;
    let radial = build_radial_filter(&params.radial, params.radial.k())?;
    let filtered = depthwise_conv2d_forward(&expanded, &radial, stride, padding)?;
    let mut out = conv2d_forward(&filtered, &params.project, 1, 0)?;
    if let Some(b) = &params.bias {
        add_bias(&mut out, b)?;
    }
    Ok((out, RsdwActivations { expanded, filtered }))
}

pub fn rsdw_forward<T: Real>(
    input: &Tensor4<T>,
    params: &RsdwParams<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    rsdw_forward_with_activations(input, params, stride, padding).map(|(out, _)| out)
}

/// Reverse pass through the three stages. `activations` may come from the
/// matching forward call; otherwise they are recomputed.
pub fn rsdw_backward<T: Real>(
    input: &Tensor4<T>,
    params: &RsdwParams<T>,
    grad_out: &Tensor4<T>,
    stride: usize,
    padding: usize,
    activations: Option<&RsdwActivations<T>>,
) -> Result<RsdwGrads<T>> {
    params.check_chain("rsdw_backward", input)?;
    let recomputed;
    let acts = match activations {
        Some(a) => a,
        None => {
            recomputed = rsdw_forward_with_activations(input, params, stride, padding)?.1;
            &recomputed
        }
    };
    let (g_filtered, g_project) = conv2d_backward(&acts.filtered, &params.project, grad_out, 1, 0)?;
    let radial = build_radial_filter(&params.radial, params.radial.k())?;
    let (g_expanded, g_radial_dense) =
        depthwise_conv2d_backward(&acts.expanded, &radial, &g_filtered, stride, padding)?;
    let (g_input, g_expand) = conv2d_backward(input, &params.expand, &g_expanded, 1, 0)?;
    Ok(RsdwGrads {
        input: g_input,
        expand: g_expand,
        radial: accumulate_radial_grad(&g_radial_dense, params.radial.radius())?,
        project: g_project,
        bias: if params.bias.is_some() {
            bias_grad(grad_out)
        } else {
            Vec::new()
        },
    })
}
