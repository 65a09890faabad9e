//! Statistical modelling, information rates and detection for
//! photomultiplier-tube optical receivers.
//!
//! The numerical core is generic over [`num::Real`]; the aliases at the
//! crate root fix the scalar to `f64` or `f32`.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod detect;
pub mod error;
pub mod gain;
pub mod info;
pub mod mixed;
pub mod num;
pub mod quad;
pub mod regimes;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use gain::{mgf_gain, mgf_sample, GainModel};
pub use mixed::{sample_dist, Mixed, SampleDist};
pub use num::Real;

pub type GainModelF64 = GainModel<f64>;
pub type GainModelF32 = GainModel<f32>;
pub type SampleDistF64 = SampleDist<f64>;
pub type SampleDistF32 = SampleDist<f32>;
