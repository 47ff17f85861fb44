//! Quantization-error theory for dot products.
//!
//! A dot product of length `d` between activations uniform on `[0, M_x]` and
//! weights uniform on `[-M_w/2, M_w/2]` has, under unbiased quantizers,
//!
//! ```text
//! MSE ≈ d (σ_w² σ_εx² + σ_x² σ_εw²)
//! ```
//!
//! Every closed form below carries the common prefactor `d M_x² M_w² / 144`
//! explicitly, which is why the uniform-quantizer to power-aware ratio does
//! not depend on `d`, `M_x` or `M_w`.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::{equal_power_r, unsigned_mac_budget};
use crate::quantize::{pann_quantize_weights, ruq_quantize_midrise};
use crate::Scalar;

fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant representable")
}

fn pow2_neg2<T: Scalar>(b: u32) -> T {
    c::<T>(2.0).powi(-2 * b as i32)
}

/// Second moments entering the first-order error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseParams<T> {
    pub d: usize,
    pub m_x: T,
    pub m_w: T,
    pub sigma_w2: T,
    pub sigma_x2: T,
    pub sigma_ew2: T,
    pub sigma_ex2: T,
}

impl<T: Scalar> MseParams<T> {
    /// Uniform activations on `[0, M_x]` and weights on `[-M_w/2, M_w/2]`,
    /// so `σ_x² = M_x²/3` and `σ_w² = M_w²/12`.
    pub fn uniform(d: usize, m_x: T, m_w: T, sigma_ex2: T, sigma_ew2: T) -> Self {
        MseParams {
            d,
            m_x,
            m_w,
            sigma_w2: m_w * m_w / c(12.0),
            sigma_x2: m_x * m_x / c(3.0),
            sigma_ew2,
            sigma_ex2,
        }
    }
}

/// `d (σ_w² σ_εx² + σ_x² σ_εw²)`, plus `d σ_εx² σ_εw²` when
/// `include_second_order`.
pub fn mse_general<T: Scalar>(p: &MseParams<T>, include_second_order: bool) -> T {
    let d = T::from_usize(p.d).expect("d representable");
    let mut inner = p.sigma_w2 * p.sigma_ex2 + p.sigma_x2 * p.sigma_ew2;
    if include_second_order {
        inner = inner + p.sigma_ex2 * p.sigma_ew2;
    }
    d * inner
}

/// `d M_x² M_w² / 144`.
pub fn prefactor<T: Scalar>(d: usize, m_x: T, m_w: T) -> T {
    T::from_usize(d).expect("d representable") * m_x * m_x * m_w * m_w / c(144.0)
}

/// Uniform quantizers on both operands: `prefactor · (2^(-2 b_x) + 4 · 2^(-2 b_w))`.
pub fn mse_ruq<T: Scalar>(d: usize, m_x: T, m_w: T, b_x: u32, b_w: u32) -> T {
    prefactor(d, m_x, m_w) * (pow2_neg2::<T>(b_x) + c::<T>(4.0) * pow2_neg2::<T>(b_w))
}

/// Power-aware weights with a fixed addition factor `r` and `b_x`-bit
/// activations: `prefactor · (2^(-2 b_x) + 1 / (4 R²))`.
pub fn mse_pann_fixed_r<T: Scalar>(d: usize, m_x: T, m_w: T, b_x: u32, r: T) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::contract(format!("addition factor must be positive, got {r:?}")));
    }
    Ok(prefactor(d, m_x, m_w) * (pow2_neg2::<T>(b_x) + T::one() / (c::<T>(4.0) * r * r)))
}

/// Power-aware quantization at budget `P` with `b_x`-bit activations, with
/// `R = P / b_x - 0.5`: `prefactor · (2^(-2 b_x) + b_x² / (2P - b_x)²)`.
pub fn mse_pann<T: Scalar>(d: usize, m_x: T, m_w: T, b_x: u32, budget_p: T) -> Result<T> {
    let bx = T::from_u32(b_x).expect("width representable");
    let denom = c::<T>(2.0) * budget_p - bx;
    if !(denom > T::zero()) {
        return Err(Error::InfeasibleBudget {
            budget: budget_p.to_f64().unwrap_or(f64::NAN),
            min_feasible: 0.5 * b_x as f64,
            reason: format!("{b_x}-bit activations alone exceed the budget"),
        });
    }
    Ok(prefactor(d, m_x, m_w) * (pow2_neg2::<T>(b_x) + bx * bx / (denom * denom)))
}

/// Activation width minimising [`mse_pann`] at budget `P`. Ties go to the
/// narrower width. Infeasible candidates are skipped.
pub fn optimal_bx<T: Scalar>(
    d: usize,
    m_x: T,
    m_w: T,
    budget_p: T,
    range: RangeInclusive<u32>,
) -> Result<(u32, T)> {
    let mut best: Option<(u32, T)> = None;
    for b in range.clone() {
        if b == 0 {
            continue;
        }
        if let Ok(m) = mse_pann(d, m_x, m_w, b, budget_p) {
            if best.is_none_or(|(_, bm)| m < bm) {
                best = Some((b, m));
            }
        }
    }
    best.ok_or_else(|| Error::InfeasibleBudget {
        budget: budget_p.to_f64().unwrap_or(f64::NAN),
        min_feasible: 0.5 * (*range.start()).max(1) as f64,
        reason: format!(
            "no activation width in {}..={} fits the budget",
            range.start(),
            range.end()
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow<T> {
    pub b: u32,
    pub budget_p: T,
    pub b_x_opt: u32,
    pub mse_ruq: T,
    pub mse_pann: T,
    pub ratio: T,
}

/// For each baseline width `b`, compares a `b`-bit uniform quantizer with
/// the best power-aware configuration at the power of an unsigned `b`-bit
/// MAC. Candidate activation widths are `2..=8`.
pub fn ratio_curve<T: Scalar>(d: usize, m_x: T, m_w: T, bits: &[u32]) -> Result<Vec<RatioRow<T>>> {
    bits.iter()
        .map(|&b| {
            let p = unsigned_mac_budget::<T>(b);
            let ruq = mse_ruq(d, m_x, m_w, b, b);
            let (b_x_opt, pann) = optimal_bx(d, m_x, m_w, p, 2..=8)?;
            Ok(RatioRow {
                b,
                budget_p: p,
                b_x_opt,
                mse_ruq: ruq,
                mse_pann: pann,
                ratio: ruq / pann,
            })
        })
        .collect()
}

/// First width whose ratio drops below one.
pub fn crossing_bit<T: Scalar>(rows: &[RatioRow<T>]) -> Option<u32> {
    rows.iter().find(|r| r.ratio < T::one()).map(|r| r.b)
}

/// `σ_εw² ≈ M_w² / (192 R²)`, obtained by replacing `E[‖w‖₁²]` with
/// `(d M_w / 4)²`.
pub fn pann_weight_error_moment<T: Scalar>(m_w: T, r: T) -> T {
    m_w * m_w / (c::<T>(192.0) * r * r)
}

/// The same moment with the exact finite-`d` value
/// `E[‖w‖₁²] = d M_w²/12 + d(d-1) M_w²/16`.
pub fn pann_weight_error_moment_exact<T: Scalar>(d: usize, m_w: T, r: T) -> T {
    let df = T::from_usize(d).expect("d representable");
    let l1_sq = df * m_w * m_w / c(12.0) + df * (df - T::one()) * m_w * m_w / c(16.0);
    l1_sq / (c::<T>(12.0) * r * r * df * df)
}

/// Operand statistics for the Monte-Carlo experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionModel {
    /// Activations uniform on `[0, m_x]`, weights uniform on `[-m_w/2, m_w/2]`.
    Uniform { m_x: f64, m_w: f64 },
    /// Activations `max(0, N(x_mean, x_std²))`, weights `N(0, w_std²)`.
    GaussianRelu { x_mean: f64, x_std: f64, w_std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightQuant {
    Exact,
    /// Uniform quantizer over the model's weight range (uniform model) or
    /// the symmetric max range of each vector (Gaussian model).
    Ruq { bits: u32 },
    Pann { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActQuant {
    Exact,
    /// Uniform quantizer on `[0, M_x]` (uniform model) or on `[0, clip]`
    /// with the clip found by [`best_relu_clip`] (Gaussian model).
    Ruq { bits: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub weights: WeightQuant,
    pub activations: ActQuant,
}

fn sample_model(model: &DistributionModel, d: usize, rng: &mut ChaCha8Rng, w: &mut Vec<f64>, x: &mut Vec<f64>) {
    w.clear();
    x.clear();
    match *model {
        DistributionModel::Uniform { m_x, m_w } => {
            for _ in 0..d {
                w.push(rng.random_range(-m_w / 2.0..m_w / 2.0));
                x.push(rng.random_range(0.0..m_x));
            }
        }
        DistributionModel::GaussianRelu { x_mean, x_std, w_std } => {
            let nw = Normal::new(0.0, w_std).expect("valid std");
            let nx = Normal::new(x_mean, x_std).expect("valid std");
            for _ in 0..d {
                w.push(nw.sample(rng));
                x.push(nx.sample(rng).max(0.0));
            }
        }
    }
}

/// Clip value for `bits`-bit uniform quantization of `max(0, N(mean, std²))`
/// that minimises the empirical squared error, found by grid search over
/// `[0.25σ, mean + 6σ]`.
pub fn best_relu_clip(bits: u32, x_mean: f64, x_std: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = Normal::new(x_mean, x_std).map_err(|e| Error::contract(e.to_string()))?;
    let xs: Vec<f64> = (0..20_000).map(|_| nx.sample(&mut rng).max(0.0)).collect();
    let top = x_mean.max(0.0) + 6.0 * x_std;
    let mut best = (f64::INFINITY, top);
    for k in 1..=240 {
        let clip = top * k as f64 / 240.0;
        let qt = ruq_quantize_midrise(&xs, bits, 0.0, clip)?;
        let err: f64 = xs
            .iter()
            .zip(qt.dequantize())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if err < best.0 {
            best = (err, clip);
        }
    }
    Ok(best.1)
}

/// Empirical mean of `(wᵀx - ŵᵀx̂)²` over `trials` independent draws.
pub fn monte_carlo_mse(
    model: &DistributionModel,
    d: usize,
    cfg: &QuantConfig,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < 1000 {
        return Err(Error::contract(format!("at least 1000 trials required, got {trials}")));
    }
    if d == 0 {
        return Err(Error::contract("dot-product length must be positive"));
    }
    let act_range = match (model, cfg.activations) {
        (_, ActQuant::Exact) => None,
        (DistributionModel::Uniform { m_x, .. }, ActQuant::Ruq { .. }) => Some((0.0, *m_x)),
        (DistributionModel::GaussianRelu { x_mean, x_std, .. }, ActQuant::Ruq { bits }) => {
            Some((0.0, best_relu_clip(bits, *x_mean, *x_std, seed ^ 0x5eed)?))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut w, mut x) = (Vec::with_capacity(d), Vec::with_capacity(d));
    let mut total = 0.0;
    for _ in 0..trials {
        sample_model(model, d, &mut rng, &mut w, &mut x);
        let wq = match cfg.weights {
            WeightQuant::Exact => w.clone(),
            WeightQuant::Ruq { bits } => {
                let (lo, hi) = match model {
                    DistributionModel::Uniform { m_w, .. } => (-m_w / 2.0, m_w / 2.0),
                    DistributionModel::GaussianRelu { .. } => {
                        let m = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                        (-m, m)
                    }
                };
                ruq_quantize_midrise(&w, bits, lo, hi)?.dequantize()
            }
            WeightQuant::Pann { r } => pann_quantize_weights(&w, r)?.dequantize(),
        };
        let xq = match (cfg.activations, act_range) {
            (ActQuant::Ruq { bits }, Some((lo, hi))) => ruq_quantize_midrise(&x, bits, lo, hi)?.dequantize(),
            _ => x.clone(),
        };
        let exact: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        let approx: f64 = wq.iter().zip(&xq).map(|(a, b)| a * b).sum();
        total += (exact - approx) * (exact - approx);
    }
    Ok(total / trials as f64)
}

/// Empirical second moment of the per-element weight error of the
/// power-aware quantizer, uniform weights on `[-m_w/2, m_w/2]`.
pub fn monte_carlo_pann_weight_error(d: usize, m_w: f64, r: f64, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut count = 0usize;
    for _ in 0..trials {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-m_w / 2.0..m_w / 2.0)).collect();
        let qt = pann_quantize_weights(&w, r)?;
        for (a, b) in w.iter().zip(qt.dequantize()) {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Ratio curve estimated by simulation: for each `b`, the `b`-bit uniform
/// quantizer against the best power-aware activation width at the same
/// budget. Every configuration reuses the same seed, so all of them see the
/// same operand draws.
pub fn monte_carlo_ratio_curve(
    model: &DistributionModel,
    d: usize,
    bits: &[u32],
    trials: usize,
    seed: u64,
) -> Result<Vec<RatioRow<f64>>> {
    bits.iter()
        .map(|&b| {
            let p = unsigned_mac_budget::<f64>(b);
            let ruq_cfg = QuantConfig {
                weights: WeightQuant::Ruq { bits: b },
                activations: ActQuant::Ruq { bits: b },
            };
            let ruq = monte_carlo_mse(model, d, &ruq_cfg, trials, seed)?;
            let mut best: Option<(u32, f64)> = None;
            for bx in 2..=8u32 {
                let r = equal_power_r(p, bx);
                if r <= 0.0 {
                    continue;
                }
                let cfg = QuantConfig {
                    weights: WeightQuant::Pann { r },
                    activations: ActQuant::Ruq { bits: bx },
                };
                let m = monte_carlo_mse(model, d, &cfg, trials, seed)?;
                if best.is_none_or(|(_, bm)| m < bm) {
                    best = Some((bx, m));
                }
            }
            let (b_x_opt, pann) = best.ok_or_else(|| Error::InfeasibleBudget {
                budget: p,
                min_feasible: 1.0,
                reason: "no feasible activation width".into(),
            })?;
            Ok(RatioRow {
                b,
                budget_p: p,
                b_x_opt,
                mse_ruq: ruq,
                mse_pann: pann,
                ratio: ruq / pann,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_model() -> DistributionModel {
        DistributionModel::Uniform { m_x: 1.0, m_w: 1.0 }
    }

    #[test]
    fn general_form() {
        let p = MseParams::uniform(1024, 1.0, 1.0, 0.0, 0.0);
        assert_eq!(mse_general(&p, true), 0.0);
        let p: MseParams<f64> = MseParams {
            d: 1024,
            m_x: 1.0,
            m_w: 1.0,
            sigma_w2: 1.0 / 12.0,
            sigma_x2: 1.0 / 3.0,
            sigma_ew2: 1e-4,
            sigma_ex2: 1e-4,
        };
        assert!((mse_general(&p, false) - 0.042_666).abs() < 1e-5);
        assert!(mse_general(&p, true) >= mse_general(&p, false));
    }

    #[test]
    fn ruq_closed_form() {
        assert!((mse_ruq(1, 1.0f64, 1.0, 2, 2) - 5.0 / 2304.0).abs() < 1e-15);
        assert!(mse_ruq(1, 1.0f64, 1.0, 30, 30) < 1e-18);
        let a = mse_ruq(7, 1.0f64, 1.0, 3, 5);
        let b = mse_ruq(7, 1.0f64, 2.0, 3, 5);
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pann_closed_form() {
        let pre = prefactor(1, 1.0f64, 1.0);
        let m3 = mse_pann(1, 1.0f64, 1.0, 3, 10.0).unwrap() / pre;
        assert!((m3 - (1.0 / 64.0 + 9.0 / 289.0)).abs() < 1e-12);
        assert!((m3 - 0.04677).abs() < 1e-5);
        let m4 = mse_pann(1, 1.0f64, 1.0, 4, 10.0).unwrap() / pre;
        assert!((m4 - 0.06641).abs() < 1e-5);
        assert!(mse_pann(1, 1.0f64, 1.0, 8, 4.0).is_err());
        // same point through the fixed-R form
        let fixed = mse_pann_fixed_r(1, 1.0f64, 1.0, 3, 10.0 / 3.0 - 0.5).unwrap() / pre;
        assert!((fixed - m3).abs() < 1e-12);
        let big = mse_pann_fixed_r(1, 1.0f64, 1.0, 5, 1e9).unwrap() / pre;
        assert!((big - 2f64.powi(-10)).abs() < 1e-12);
    }

    #[test]
    fn optimal_width() {
        let (b, _) = optimal_bx(1, 1.0f64, 1.0, 10.0, 2..=8).unwrap();
        assert_eq!(b, 3);
        assert_eq!(optimal_bx(1, 1.0f64, 1.0, 10.0, 5..=5).unwrap().0, 5);
        let mut last = 0;
        for p in [6.0, 10.0, 16.5, 24.0, 32.5, 42.0, 52.5, 64.0] {
            let (b, _) = optimal_bx(1, 1.0f64, 1.0, p, 2..=8).unwrap();
            assert!(b >= last);
            last = b;
        }
        assert!(optimal_bx(1, 1.0f64, 1.0, 0.9, 2..=8).is_err());
    }

    #[test]
    fn ratio_curve_shape() {
        let rows = ratio_curve(1024, 1.0f64, 1.0, &[2, 3, 4, 5, 6, 7, 8]).unwrap();
        assert!((rows[0].ratio - (0.3125 / 0.04677)).abs() < 0.01);
        for w in rows.windows(2) {
            assert!(w[1].ratio < w[0].ratio);
        }
        assert!(rows[6].ratio < 1.0);
        let other = ratio_curve(3, 2.0f64, 0.5, &[2, 3, 4, 5, 6, 7, 8]).unwrap();
        for (a, b) in rows.iter().zip(&other) {
            assert!((a.ratio - b.ratio).abs() < 1e-12);
        }
        let cross = crossing_bit(&rows).unwrap();
        assert!((5..=8).contains(&cross));
    }

    #[test]
    fn exact_moment_approaches_approximation() {
        let approx = pann_weight_error_moment(1.0f64, 2.0);
        let exact = pann_weight_error_moment_exact(1024, 1.0f64, 2.0);
        assert!((exact / approx - 1.0).abs() < 1e-3);
    }

    #[test]
    fn lossless_monte_carlo_is_zero() {
        let cfg = QuantConfig {
            weights: WeightQuant::Exact,
            activations: ActQuant::Exact,
        };
        let m = uniform_model();
        assert_eq!(monte_carlo_mse(&m, 16, &cfg, 1000, 1).unwrap(), 0.0);
        assert!(monte_carlo_mse(&m, 16, &cfg, 999, 1).is_err());
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let cfg = QuantConfig {
            weights: WeightQuant::Pann { r: 2.0 },
            activations: ActQuant::Ruq { bits: 4 },
        };
        let m = uniform_model();
        let a = monte_carlo_mse(&m, 64, &cfg, 1000, 5).unwrap();
        let b = monte_carlo_mse(&m, 64, &cfg, 1000, 5).unwrap();
        assert_eq!(a, b);
    }
}
