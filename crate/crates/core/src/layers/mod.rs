//! Differentiable layers: the radial (RAD), radial depthwise-separable
//! (RSDW) and ring (RING) convolutions, the conventional blocks needed to
//! build models around them, and per-layer weight/MAC accounting.

mod rad;
mod ring;
mod rsdw;
mod spec;
pub mod standard;

pub use rad::{rad_backward, rad_forward, RadGrads};
pub use ring::{orn8_reference, ring_backward, ring_forward, RingGrads, RingState};
pub use rsdw::{rsdw_backward, rsdw_forward, rsdw_forward_with_activations, RsdwActivations, RsdwGrads, RsdwParams};
pub use spec::{mac_count, param_count, LayerKind, LayerSpec};
