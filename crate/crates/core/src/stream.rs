//! Operand stream generation for the toggle simulations.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with the
//! 64-bit seed from the config, so a stream is fully determined by its config.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::word::Word;

/// Sample count used for every reported toggle average.
pub const DEFAULT_SAMPLES: usize = 36_000;
pub const DEFAULT_ACC_WIDTH: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    ClippedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierKind {
    BoothRadix2,
    SerialShiftAdd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub distribution: Distribution,
    pub signed: bool,
    pub n_samples: usize,
    pub seed: u64,
    /// Weight operand width.
    pub b_w: u32,
    /// Activation operand width.
    pub b_x: u32,
    /// Accumulator width `B`.
    pub acc_width: u32,
    pub multiplier: MultiplierKind,
}

impl StreamConfig {
    /// Signed uniform Booth stream with the default sample count and a 32-bit accumulator.
    pub fn new(b_w: u32, b_x: u32, seed: u64) -> Self {
        StreamConfig {
            distribution: Distribution::Uniform,
            signed: true,
            n_samples: DEFAULT_SAMPLES,
            seed,
            b_w,
            b_x,
            acc_width: DEFAULT_ACC_WIDTH,
            multiplier: MultiplierKind::BoothRadix2,
        }
    }

    pub fn unsigned(mut self) -> Self {
        self.signed = false;
        self
    }

    pub fn with_distribution(mut self, d: Distribution) -> Self {
        self.distribution = d;
        self
    }

    pub fn with_multiplier(mut self, k: MultiplierKind) -> Self {
        self.multiplier = k;
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn with_acc_width(mut self, b: u32) -> Self {
        self.acc_width = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::contract(format!(
                "n_samples ≥ 2 required (toggles are counted between consecutive operations), got {}",
                self.n_samples
            )));
        }
        for (name, w) in [("b_w", self.b_w), ("b_x", self.b_x)] {
            if !(1..=32).contains(&w) {
                return Err(Error::contract(format!("{name} must be in 1..=32, got {w}")));
            }
        }
        if self.acc_width < self.b_w + self.b_x || self.acc_width > 64 {
            return Err(Error::contract(format!(
                "accumulator width {} must be in {}..=64",
                self.acc_width,
                self.b_w + self.b_x
            )));
        }
        Ok(())
    }

    /// Weight and activation operand streams. The two streams use
    /// independent ChaCha8 streams derived from the same seed.
    pub fn operand_streams(&self) -> Result<(Vec<Word>, Vec<Word>)> {
        self.validate()?;
        let w = gen_words(self.distribution, self.signed, self.b_w, self.n_samples, self.seed, 0)?;
        let x = gen_words(self.distribution, self.signed, self.b_x, self.n_samples, self.seed, 1)?;
        Ok((w, x))
    }
}

/// Draws `n` operands of `width` bits.
///
/// Signed operands cover `[-2^(width-1), 2^(width-1))`; unsigned operands
/// cover `[0, 2^(width-1))` so that they run on the same signed multiplier
/// array without changing its architecture.
pub fn gen_words(
    distribution: Distribution,
    signed: bool,
    width: u32,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Word>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let half = 1i64 << (width - 1);
    let (lo, hi) = if signed { (-half, half) } else { (0, half) };
    let values: Vec<i64> = match distribution {
        Distribution::Uniform => (0..n).map(|_| rng.random_range(lo..hi)).collect(),
        Distribution::ClippedGaussian => {
            let draws: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let peak = draws.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let peak = if peak > 0.0 { peak } else { 1.0 };
            draws
                .iter()
                .map(|&v| {
                    let v = if signed { v } else { v.abs() };
                    let scaled = (v / peak * half as f64).round() as i64;
                    scaled.clamp(lo, hi - 1)
                })
                .collect()
        }
    };
    values
        .into_iter()
        .map(|v| Word::encode(v, width, signed))
        .collect()
}

/// Operands for a multiplier-free accumulation stream: `n` non-negative
/// repeat counts with mean `r` and `n` unsigned activations uniform over the
/// full `[0, 2^b_x)` range.
///
/// A count is `k + j` with `k` uniform on `0..=2⌊r⌋` and `j` a Bernoulli
/// draw with probability `r - ⌊r⌋`, so any real `r ≥ 0` is reachable.
pub fn pann_operands(r: f64, b_x: u32, n: usize, seed: u64) -> Result<(Vec<i64>, Vec<Word>)> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::contract(format!("mean repeat count must be non-negative, got {r}")));
    }
    if !(1..=32).contains(&b_x) {
        return Err(Error::contract(format!("activation width must be in 1..=32, got {b_x}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let whole = r.floor() as i64;
    let frac = r - r.floor();
    let q = (0..n)
        .map(|_| rng.random_range(0..=2 * whole) + i64::from(rng.random_bool(frac)))
        .collect();
    rng.set_stream(1);
    let x = (0..n)
        .map(|_| Word::encode(rng.random_range(0..1i64 << b_x), b_x, false))
        .collect::<Result<Vec<_>>>()?;
    Ok((q, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_signed_range_and_mean() {
        let w = gen_words(Distribution::Uniform, true, 4, 36_000, 7, 0).unwrap();
        assert!(w.iter().all(|w| (-8..8).contains(&w.value())));
        let mean = w.iter().map(|w| w.value() as f64).sum::<f64>() / w.len() as f64;
        // true mean is -0.5 for [-8, 8)
        assert!((mean + 0.5).abs() < 0.05 * 8.0, "mean {mean}");
    }

    #[test]
    fn unsigned_uses_lower_half() {
        let w = gen_words(Distribution::Uniform, false, 4, 5_000, 7, 0).unwrap();
        assert!(w.iter().all(|w| (0..8).contains(&w.value())));
        assert!(w.iter().any(|w| w.value() == 7));
    }

    #[test]
    fn clipped_gaussian_concentrates() {
        let w = gen_words(Distribution::ClippedGaussian, true, 8, 36_000, 3, 0).unwrap();
        assert!(w.iter().all(|w| (-128..128).contains(&w.value())));
        let inside = w.iter().filter(|w| w.value().abs() <= 64).count();
        assert!(inside as f64 > 0.9 * w.len() as f64, "{inside}");
        let u = gen_words(Distribution::ClippedGaussian, false, 8, 1_000, 3, 0).unwrap();
        assert!(u.iter().all(|w| (0..128).contains(&w.value())));
    }

    #[test]
    fn same_seed_same_stream() {
        let a = gen_words(Distribution::Uniform, true, 6, 1000, 99, 0).unwrap();
        let b = gen_words(Distribution::Uniform, true, 6, 1000, 99, 0).unwrap();
        let c = gen_words(Distribution::Uniform, true, 6, 1000, 99, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pann_operand_means() {
        let (q, x) = pann_operands(2.25, 6, 40_000, 1).unwrap();
        let mean = q.iter().sum::<i64>() as f64 / q.len() as f64;
        assert!((mean - 2.25).abs() < 0.03, "{mean}");
        assert!(q.iter().all(|&v| v >= 0));
        assert!(x.iter().all(|w| w.width() == 6 && !w.is_signed()));
        assert!(x.iter().any(|w| w.value() == 63));
        assert!(pann_operands(-1.0, 4, 10, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(StreamConfig::new(4, 4, 0).with_samples(1).validate().is_err());
        assert!(StreamConfig::new(4, 4, 0).with_acc_width(7).validate().is_err());
        assert!(StreamConfig::new(4, 4, 0).validate().is_ok());
    }
}
