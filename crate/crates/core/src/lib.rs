//! Bit-toggle power models for fixed-point MAC hardware and power-aware
//! multiplier-free quantization.
//!
//! * [`word`], [`stream`], [`multiplier`], [`mac`]: bit-exact simulation with
//!   per-component toggle counting.
//! * [`power`]: closed-form power formulas.
//! * [`quantize`]: unsigned layer split, power-aware weight quantizer, uniform
//!   quantizer and repeated-addition products.
//! * [`mse`]: quantization-error theory and Monte-Carlo validation.
//! * [`infer`]: toy dense-network engine and budget search.

// Guards are written as `!(x > 0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod infer;
pub mod mac;
pub mod mse;
pub mod multiplier;
pub mod power;
pub mod quantize;
pub mod stream;
pub mod word;

pub use error::{Error, Result};
pub use mac::{run_mac_stream, run_pann_stream, Component, MacUnitState, ToggleReport, ToggleTally};
pub use stream::{gen_words, pann_operands, Distribution, MultiplierKind, StreamConfig};
pub use word::{hamming_toggles, Word};

/// Scalar types accepted by the generic numeric code.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
}

/// Double-precision instantiations.
pub type MacPowerBreakdown = power::MacPowerBreakdown<f64>;
pub type EqualPowerPoint = power::EqualPowerPoint<f64>;
pub type QuantizedTensor = quantize::QuantizedTensor<f64>;
pub type DenseLayer = quantize::DenseLayer<f64>;
pub type SplitLayer = quantize::SplitLayer<f64>;
pub type MseParams = mse::MseParams<f64>;
