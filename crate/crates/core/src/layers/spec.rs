use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ring_geometry::RingLayout;
use crate::tensor::output_dim;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Rad,
    Rsdw,
    Ring,
    Relu,
    Batchnorm,
    Maxpool,
    GlobalAvgPool,
    FullyConnected,
}

impl LayerKind {
    pub const ALL: [LayerKind; 9] = [
        LayerKind::Conv,
        LayerKind::Rad,
        LayerKind::Rsdw,
        LayerKind::Ring,
        LayerKind::Relu,
        LayerKind::Batchnorm,
        LayerKind::Maxpool,
        LayerKind::GlobalAvgPool,
        LayerKind::FullyConnected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Rad => "rad",
            LayerKind::Rsdw => "rsdw",
            LayerKind::Ring => "ring",
            LayerKind::Relu => "relu",
            LayerKind::Batchnorm => "batchnorm",
            LayerKind::Maxpool => "maxpool",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::FullyConnected => "fully_connected",
        }
    }

    /// Layers that slide a `k × k` window over the input.
    pub fn is_spatial_filter(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Rad | LayerKind::Rsdw | LayerKind::Ring)
    }

    /// Spatial filters whose output co-rotates with the input.
    pub fn is_rotation_equivariant(self) -> bool {
        matches!(self, LayerKind::Rad | LayerKind::Rsdw | LayerKind::Ring)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "conv" => LayerKind::Conv,
            "rad" => LayerKind::Rad,
            "rsdw" => LayerKind::Rsdw,
            "ring" => LayerKind::Ring,
            "relu" => LayerKind::Relu,
            "batchnorm" | "bn" => LayerKind::Batchnorm,
            "maxpool" => LayerKind::Maxpool,
            "global_avg_pool" | "gap" => LayerKind::GlobalAvgPool,
            "fully_connected" | "fc" => LayerKind::FullyConnected,
            other => return Err(Error::invalid(format!("unknown layer kind `{other}`"))),
        })
    }
}

/// Declarative description of one layer.
///
/// For `rsdw`, `out1` is the width of the first 1×1 stage (and of the
/// depthwise radial stage) and `out2 == out_channels` the width of the
/// final 1×1 stage. `batchnorm` uses `in_channels == out_channels`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub k: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub out1: usize,
    pub stride: usize,
    pub padding: Option<usize>,
    pub has_bias: bool,
}

impl LayerSpec {
    fn base(kind: LayerKind) -> Self {
        Self {
            kind,
            k: 1,
            in_channels: 0,
            out_channels: 0,
            out1: 0,
            stride: 1,
            padding: None,
            has_bias: true,
        }
    }

    fn filter(kind: LayerKind, k: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            k,
            in_channels,
            out_channels,
            ..Self::base(kind)
        }
    }

    pub fn conv(k: usize, in_channels: usize, out_channels: usize) -> Self {
        Self::filter(LayerKind::Conv, k, in_channels, out_channels)
    }

    pub fn rad(k: usize, in_channels: usize, out_channels: usize) -> Self {
        Self::filter(LayerKind::Rad, k, in_channels, out_channels)
    }

    pub fn ring(k: usize, in_channels: usize, out_channels: usize) -> Self {
        Self::filter(LayerKind::Ring, k, in_channels, out_channels)
    }

    pub fn rsdw(k: usize, in_channels: usize, out1: usize, out2: usize) -> Self {
        Self {
            out1,
            ..Self::filter(LayerKind::Rsdw, k, in_channels, out2)
        }
    }

    pub fn relu() -> Self {
        Self::base(LayerKind::Relu)
    }

    pub fn batchnorm(channels: usize) -> Self {
        Self::filter(LayerKind::Batchnorm, 1, channels, channels)
    }

    pub fn maxpool() -> Self {
        Self {
            k: 2,
            stride: 2,
            ..Self::base(LayerKind::Maxpool)
        }
    }

    pub fn global_avg_pool() -> Self {
        Self::base(LayerKind::GlobalAvgPool)
    }

    pub fn fully_connected(in_features: usize, out_features: usize) -> Self {
        Self::filter(LayerKind::FullyConnected, 1, in_features, out_features)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = Some(padding);
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }

    /// Explicit padding, or `(k - 1) / 2` ("same") when unset.
    pub fn padding(&self) -> usize {
        self.padding.unwrap_or((self.k.saturating_sub(1)) / 2)
    }

    pub fn out2(&self) -> usize {
        self.out_channels
    }

    /// Largest ring radius of a filter layer.
    pub fn radius(&self) -> usize {
        (self.k.saturating_sub(1)) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("{} layer: {msg}", self.kind)));
        match self.kind {
            LayerKind::Conv | LayerKind::Rad | LayerKind::Ring | LayerKind::Rsdw => {
                if self.k.is_multiple_of(2) || self.k == 0 {
                    return bad(format!("filter size must be odd, got {}", self.k));
                }
                if matches!(self.kind, LayerKind::Rad | LayerKind::Ring | LayerKind::Rsdw) && self.k < 3 {
                    return bad(format!("filter size must be >= 3, got {}", self.k));
                }
                if self.in_channels == 0 || self.out_channels == 0 {
                    return bad("channel counts must be >= 1".into());
                }
                if self.kind == LayerKind::Rsdw && self.out1 == 0 {
                    return bad("out1 must be >= 1".into());
                }
                if self.stride == 0 {
                    return bad("stride must be >= 1".into());
                }
            }
            LayerKind::Batchnorm => {
                if self.in_channels == 0 || self.in_channels != self.out_channels {
                    return bad("needs in == out >= 1 channels".into());
                }
            }
            LayerKind::FullyConnected => {
                if self.in_channels == 0 || self.out_channels == 0 {
                    return bad("feature counts must be >= 1".into());
                }
            }
            LayerKind::Relu | LayerKind::Maxpool | LayerKind::GlobalAvgPool => {}
        }
        Ok(())
    }

    /// Output `(c, h, w)` for an input of `(c, h, w)`.
    pub fn output_shape(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let check_channels = |expected: usize| {
            if c != expected {
                Err(Error::Shape {
                    op: "layer chain",
                    axis: "input channels",
                    expected,
                    actual: c,
                })
            } else {
                Ok(())
            }
        };
        match self.kind {
            LayerKind::Conv | LayerKind::Rad | LayerKind::Ring | LayerKind::Rsdw => {
                check_channels(self.in_channels)?;
                let p = self.padding();
                Ok((
                    self.out_channels,
                    output_dim("layer chain", "height", h, self.k, self.stride, p)?,
                    output_dim("layer chain", "width", w, self.k, self.stride, p)?,
                ))
            }
            LayerKind::Batchnorm => {
                check_channels(self.in_channels)?;
                Ok((c, h, w))
            }
            LayerKind::Relu => Ok((c, h, w)),
            LayerKind::Maxpool => {
                if h < 2 || w < 2 {
                    return Err(Error::invalid(format!("maxpool needs planes of at least 2x2, got {h}x{w}")));
                }
                Ok((c, h / 2, w / 2))
            }
            LayerKind::GlobalAvgPool => Ok((c, 1, 1)),
            LayerKind::FullyConnected => {
                if c * h * w != self.in_channels {
                    return Err(Error::Shape {
                        op: "layer chain",
                        axis: "fully connected input features",
                        expected: self.in_channels,
                        actual: c * h * w,
                    });
                }
                Ok((self.out_channels, 1, 1))
            }
        }
    }
}

/// Learnable weights of a layer, bias excluded.
///
/// Filter layers follow the weight formulas `k·k·in·out` (conv, ring),
/// `(R+1)·in·out` (rad) and `in·out1 + (R+1)·out1 + out1·out2` (rsdw).
/// Batch normalization counts its scale and shift, a fully connected layer
/// `in·out`.
pub fn param_count(spec: &LayerSpec) -> Result<usize> {
    spec.validate()?;
    let (k, cin, cout) = (spec.k, spec.in_channels, spec.out_channels);
    let radial = spec.radius() + 1;
    Ok(match spec.kind {
        LayerKind::Conv | LayerKind::Ring => k * k * cin * cout,
        LayerKind::Rad => radial * cin * cout,
        LayerKind::Rsdw => cin * spec.out1 + radial * spec.out1 + spec.out1 * spec.out2(),
        LayerKind::Batchnorm => 2 * cin,
        LayerKind::FullyConnected => cin * cout,
        LayerKind::Relu | LayerKind::Maxpool | LayerKind::GlobalAvgPool => 0,
    })
}

/// Multiply-accumulates of one forward execution, bias excluded, for an
/// output surface of `h × w`.
///
/// conv and rad: `w·h·k·k·in·out`; rsdw: `(w·h·out1)·(in + k·k + out2)`;
/// ring 3×3: `w·h·3·3·in·out`; ring 5×5: `(8·w·h·in·out)·(3·3 + 2·5·5)`,
/// i.e. dense evaluation of all 24 rotated filters. Larger ring filters
/// count dense evaluation of every group. Elementwise and pooling layers
/// count zero; a fully connected layer counts `in·out`.
pub fn mac_count(spec: &LayerSpec, h: usize, w: usize) -> Result<u64> {
    spec.validate()?;
    if h == 0 || w == 0 {
        return Err(Error::invalid(format!("mac_count needs a positive surface, got {h}x{w}")));
    }
    let surface = (h * w) as u64;
    let (k, cin, cout) = (spec.k as u64, spec.in_channels as u64, spec.out_channels as u64);
    Ok(match spec.kind {
        LayerKind::Conv | LayerKind::Rad => surface * k * k * cin * cout,
        LayerKind::Rsdw => surface * spec.out1 as u64 * (cin + k * k + spec.out2() as u64),
        LayerKind::Ring => match spec.k {
            3 => surface * 3 * 3 * cin * cout,
            5 => (8 * surface * cin * cout) * (3 * 3 + 2 * 5 * 5),
            _ => surface * cin * cout * RingLayout::new(spec.k)?.dense_macs_per_pixel() as u64,
        },
        LayerKind::FullyConnected => cin * cout,
        LayerKind::Relu | LayerKind::Batchnorm | LayerKind::Maxpool | LayerKind::GlobalAvgPool => 0,
    })
}
