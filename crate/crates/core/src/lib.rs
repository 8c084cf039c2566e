//! Rotation-invariant convolution layers for the CPU.
//!
//! Three layer families keep their feature maps equivariant under quarter
//! turns of the input, so a network that ends in global average pooling is
//! invariant to 0°, 90°, 180° and 270° rotations without rotated training
//! data:
//!
//! * **RAD** shares one weight among all taps at the same rounded distance
//!   from the filter center.
//! * **RSDW** wraps a per-channel radial filter between two 1×1
//!   convolutions.
//! * **RING** lets every concentric ring of an ordinary filter rotate on its
//!   own and keeps the strongest response per ring.
//!
//! Every layer has an exact backward pass, checked against finite
//! differences in the test suite.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod layers;
pub mod model;
pub mod ring_geometry;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::{FilterBank, Tensor4};
