//! Layer splitting and weight/activation quantizers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// A dense layer `y = W x + b`, optionally followed by ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    /// `out × in`, row-major.
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
    pub relu: bool,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Vec<Vec<T>>, bias: Vec<T>, relu: bool) -> Result<Self> {
        let layer = DenseLayer { weights, bias, relu };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Validation("layer has no output neurons".into()));
        }
        let fan_in = self.weights[0].len();
        if fan_in == 0 {
            return Err(Error::Validation("layer has no inputs".into()));
        }
        if let Some(i) = self.weights.iter().position(|r| r.len() != fan_in) {
            return Err(Error::Validation(format!(
                "weight row {i} has {} entries, expected {fan_in}",
                self.weights[i].len()
            )));
        }
        if self.bias.len() != self.weights.len() {
            return Err(Error::Validation(format!(
                "bias has {} entries for {} neurons",
                self.bias.len(),
                self.weights.len()
            )));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    /// `W x + b`, without the activation.
    pub fn affine(&self, x: &[T]) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
            .collect()
    }
}

/// `W = W⁺ − W⁻` and `b = b⁺ − b⁻` with non-negative, disjointly supported parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitLayer<T> {
    pub w_plus: Vec<Vec<T>>,
    pub w_minus: Vec<Vec<T>>,
    pub b_plus: Vec<T>,
    pub b_minus: Vec<T>,
    pub relu: bool,
}

fn relu_parts<T: Scalar>(v: T) -> (T, T) {
    if v > T::zero() {
        (v, T::zero())
    } else if v < T::zero() {
        (T::zero(), -v)
    } else {
        (T::zero(), T::zero())
    }
}

/// Splits a layer into two layers with non-negative parameters, so that
/// on non-negative inputs both halves accumulate only non-negative terms.
pub fn split_layer<T: Scalar>(layer: &DenseLayer<T>) -> SplitLayer<T> {
    let split_rows = |sel: fn((T, T)) -> T| -> Vec<Vec<T>> {
        layer
            .weights
            .iter()
            .map(|r| r.iter().map(|&w| sel(relu_parts(w))).collect())
            .collect()
    };
    SplitLayer {
        w_plus: split_rows(|p| p.0),
        w_minus: split_rows(|p| p.1),
        b_plus: layer.bias.iter().map(|&b| relu_parts(b).0).collect(),
        b_minus: layer.bias.iter().map(|&b| relu_parts(b).1).collect(),
        relu: layer.relu,
    }
}

impl<T: Scalar> SplitLayer<T> {
    /// The two affine outputs `(W⁺x + b⁺, W⁻x + b⁻)`.
    pub fn forward_parts(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let half = |w: &Vec<Vec<T>>, b: &Vec<T>| -> Vec<T> {
            w.iter()
                .zip(b)
                .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
                .collect()
        };
        (half(&self.w_plus, &self.b_plus), half(&self.w_minus, &self.b_minus))
    }

    /// Rebuilds the original layer.
    pub fn merge(&self) -> DenseLayer<T> {
        let weights = self
            .w_plus
            .iter()
            .zip(&self.w_minus)
            .map(|(p, m)| p.iter().zip(m).map(|(&a, &b)| a - b).collect())
            .collect();
        let bias = self.b_plus.iter().zip(&self.b_minus).map(|(&a, &b)| a - b).collect();
        DenseLayer {
            weights,
            bias,
            relu: self.relu,
        }
    }
}

/// `y = y⁺ − y⁻`.
pub fn recombine<T: Scalar>(y_plus: &[T], y_minus: &[T]) -> Result<Vec<T>> {
    if y_plus.len() != y_minus.len() {
        return Err(Error::contract(format!(
            "cannot recombine outputs of length {} and {}",
            y_plus.len(),
            y_minus.len()
        )));
    }
    Ok(y_plus.iter().zip(y_minus).map(|(&p, &m)| p - m).collect())
}

/// Integer tensor with its dequantization map `offset + gamma · q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor<T> {
    pub gamma: T,
    /// Zero for the power-aware quantizer; the centre of the lowest bin for
    /// the uniform quantizer.
    pub offset: T,
    pub signed: bool,
    pub shape: Vec<usize>,
    pub q: Vec<i64>,
    /// `‖q‖₁ / d`, the mean number of additions per element.
    pub addition_factor: Option<T>,
}

impl<T: Scalar> QuantizedTensor<T> {
    pub fn dequantize(&self) -> Vec<T> {
        self.q
            .iter()
            .map(|&q| self.offset + self.gamma * T::from_i64(q).expect("integer representable"))
            .collect()
    }

    pub fn max_abs(&self) -> u64 {
        self.q.iter().map(|q| q.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn l1(&self) -> u64 {
        self.q.iter().map(|q| q.unsigned_abs()).sum()
    }
}

/// Rounds to nearest, ties away from zero. Every rounding in the
/// power-aware quantizer goes through here.
pub fn round_half_away<T: Scalar>(v: T) -> T {
    // `Float::round` already breaks ties away from zero.
    v.round()
}

fn to_int<T: Scalar>(v: T) -> Result<i64> {
    v.to_i64()
        .ok_or_else(|| Error::Degenerate(format!("quantized value {v:?} is not a finite integer")))
}

/// Step `‖w‖₁ / (R·d)` of the power-aware quantizer.
pub fn pann_gamma<T: Scalar>(w: &[T], r_target: T) -> Result<T> {
    if !(r_target > T::zero()) {
        return Err(Error::contract(format!(
            "addition factor must be positive, got {r_target:?}"
        )));
    }
    if w.is_empty() {
        return Err(Error::Degenerate("empty weight vector".into()));
    }
    let l1 = w.iter().fold(T::zero(), |acc, &v| acc + v.abs());
    if !(l1 > T::zero()) {
        return Err(Error::Degenerate(
            "all weights are zero; the quantization step is undefined".into(),
        ));
    }
    Ok(l1 / (r_target * T::from_usize(w.len()).expect("length representable")))
}

/// Quantizes `w` with step `gamma` to integers `round(w_i / gamma)`.
pub fn quantize_with_gamma<T: Scalar>(w: &[T], gamma: T) -> Result<QuantizedTensor<T>> {
    let q = w
        .iter()
        .map(|&v| to_int(round_half_away(v / gamma)))
        .collect::<Result<Vec<i64>>>()?;
    let l1: u64 = q.iter().map(|v| v.unsigned_abs()).sum();
    let d = T::from_usize(w.len()).expect("length representable");
    Ok(QuantizedTensor {
        gamma,
        offset: T::zero(),
        signed: w.iter().any(|&v| v < T::zero()),
        shape: vec![w.len()],
        q,
        addition_factor: Some(T::from_u64(l1).expect("l1 representable") / d),
    })
}

/// Power-aware quantization of one dot product's weights, targeting `R`
/// additions per element on average.
pub fn pann_quantize_weights<T: Scalar>(w: &[T], r_target: T) -> Result<QuantizedTensor<T>> {
    let gamma = pann_gamma(w, r_target)?;
    quantize_with_gamma(w, gamma)
}

/// Where the L1 normalisation of the step is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaScope {
    /// One step per output neuron, `d` = fan-in.
    #[default]
    PerNeuron,
    /// One step for the whole layer, normalised by the element count.
    PerLayer,
}

/// Quantizes every row of a weight matrix. All-zero rows (dead neurons)
/// quantize to zeros with a unit step under `PerNeuron`.
pub fn pann_quantize_matrix<T: Scalar>(
    weights: &[Vec<T>],
    r_target: T,
    scope: GammaScope,
) -> Result<Vec<QuantizedTensor<T>>> {
    match scope {
        GammaScope::PerNeuron => weights
            .iter()
            .map(|row| match pann_quantize_weights(row, r_target) {
                Err(Error::Degenerate(_)) if !row.is_empty() => quantize_with_gamma(row, T::one()),
                other => other,
            })
            .collect(),
        GammaScope::PerLayer => {
            let flat: Vec<T> = weights.iter().flatten().copied().collect();
            let gamma = pann_gamma(&flat, r_target)?;
            weights.iter().map(|row| quantize_with_gamma(row, gamma)).collect()
        }
    }
}

fn check_ruq_args<T: Scalar>(bits: u32, lo: T, hi: T) -> Result<T> {
    if bits == 0 || bits > 32 {
        return Err(Error::contract(format!("bit width must be in 1..=32, got {bits}")));
    }
    if !(lo < hi) {
        return Err(Error::contract(format!("empty quantizer range [{lo:?}, {hi:?}]")));
    }
    Ok((hi - lo) / T::from_i64(1i64 << bits).expect("level count representable"))
}

fn ruq_with<T: Scalar>(x: &[T], bits: u32, lo: T, step: T, index: impl Fn(T) -> T) -> Result<Vec<i64>> {
    let top = T::from_i64((1i64 << bits) - 1).expect("representable");
    x.iter()
        .map(|&v| {
            let idx = index((v - lo) / step);
            let idx = if idx.is_nan() { T::zero() } else { idx };
            to_int(idx.max(T::zero()).min(top))
        })
        .collect()
}

/// Regular uniform quantizer with `2^bits` levels over `[lo, hi]`.
///
/// With `step = (hi - lo) / 2^bits`, a value maps to
/// `clamp(round((x - lo) / step), 0, 2^bits - 1)` and dequantizes to
/// `lo + step · q`. The grid contains `lo` exactly, so a zero activation
/// stays zero when `lo = 0`; the price is a biased top bin, since values in
/// the last step and a half all land on `hi - step`.
pub fn ruq_quantize<T: Scalar>(x: &[T], bits: u32, lo: T, hi: T) -> Result<QuantizedTensor<T>> {
    let step = check_ruq_args(bits, lo, hi)?;
    let q = ruq_with(x, bits, lo, step, |v| v.round())?;
    Ok(QuantizedTensor {
        gamma: step,
        offset: lo,
        signed: false,
        shape: vec![x.len()],
        q,
        addition_factor: None,
    })
}

/// Unbiased (mid-rise) variant of [`ruq_quantize`]: `[lo, hi]` is cut into
/// `2^bits` bins of width `step`, a value maps to the index of its bin and
/// dequantizes to the bin centre. The error is zero-mean with variance
/// `step² / 12` for inputs spread evenly over the range, which is what the
/// closed-form error model assumes.
pub fn ruq_quantize_midrise<T: Scalar>(x: &[T], bits: u32, lo: T, hi: T) -> Result<QuantizedTensor<T>> {
    let step = check_ruq_args(bits, lo, hi)?;
    let q = ruq_with(x, bits, lo, step, |v| v.floor())?;
    Ok(QuantizedTensor {
        gamma: step,
        offset: lo + step / (T::one() + T::one()),
        signed: false,
        shape: vec![x.len()],
        q,
        addition_factor: None,
    })
}

/// Default uniform-quantizer range: `[min, max]` of the tensor, or the
/// symmetric `[-max|x|, max|x|]` when `symmetric`.
pub fn ruq_range<T: Scalar>(x: &[T], symmetric: bool) -> Result<(T, T)> {
    if x.is_empty() {
        return Err(Error::Degenerate("empty tensor".into()));
    }
    let (lo, hi) = if symmetric {
        let m = x.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        (-m, m)
    } else {
        let lo = x.iter().fold(T::infinity(), |m, &v| m.min(v));
        let hi = x.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        (lo, hi)
    };
    if !(lo < hi) {
        return Err(Error::Degenerate(format!("constant tensor, range [{lo:?}, {hi:?}]")));
    }
    Ok((lo, hi))
}

/// `q_w · q_x` computed as `q_w` repeated additions of `q_x`.
pub fn mul_via_additions(q_w: i64, q_x: i64) -> Result<i64> {
    if q_w < 0 {
        return Err(Error::contract(format!(
            "repeat count {q_w} is negative; split signs first"
        )));
    }
    let mut acc: i64 = 0;
    for _ in 0..q_w {
        acc = acc
            .checked_add(q_x)
            .ok_or_else(|| Error::contract("repeated addition overflowed i64"))?;
    }
    Ok(acc)
}

/// Runtime memory and latency of a multiplier-free configuration relative
/// to a `b_x_baseline`-bit quantized network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    /// Bits needed for the largest weight magnitude.
    pub b_r: u32,
    pub activation_mem_factor: f64,
    pub weight_mem_factor: f64,
    pub latency_factor: f64,
}

/// Bits to store magnitudes up to `max_abs`, at least one.
pub fn magnitude_bits(max_abs: u64) -> u32 {
    (64 - max_abs.leading_zeros()).max(1)
}

impl StorageReport {
    pub fn from_max_abs(max_abs: u64, b_x_baseline: u32, b_x: u32, r: f64) -> Self {
        let b_r = magnitude_bits(max_abs);
        StorageReport {
            b_r,
            activation_mem_factor: b_x as f64 / b_x_baseline as f64,
            weight_mem_factor: b_r as f64 / b_x_baseline as f64,
            latency_factor: r,
        }
    }
}

pub fn storage_report<T: Scalar>(qt: &QuantizedTensor<T>, b_x_baseline: u32, b_x: u32, r: f64) -> StorageReport {
    StorageReport::from_max_abs(qt.max_abs(), b_x_baseline, b_x, r)
}
