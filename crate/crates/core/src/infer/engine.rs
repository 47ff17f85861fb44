use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mac::{Accumulator, ToggleTally};
use crate::power::{mac_power, pann_power};
use crate::quantize::{mul_via_additions, pann_quantize_matrix, ruq_quantize, ruq_range, GammaScope};
use crate::word::Word;

use super::model::{Dataset, Model};

/// How each dot product is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    FloatRef,
    /// Uniformly quantized activations and weights, integer multiplies.
    QuantMul { b_x: u32, b_w: u32 },
    /// Power-aware weights with `r` additions per element on average, and
    /// products realised as repeated additions on sign-split paths.
    PannAdd { b_x: u32, r: f64, count_toggles: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub gamma_scope: GammaScope,
    /// Accumulator width used when counting toggles.
    pub acc_width: u32,
    /// Number of calibration samples drawn (without replacement, using
    /// `seed`); `None` uses the whole calibration split.
    pub calib_samples: Option<usize>,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            gamma_scope: GammaScope::PerNeuron,
            acc_width: 32,
            calib_samples: None,
            seed: 0,
        }
    }
}

/// Integer layer: `y_j = w_scale_j · act_gamma · Σ_i w_ji p_i + bias_j`,
/// where `p_i` is the `act_bits`-bit activation code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantLayer {
    pub w: Vec<Vec<i64>>,
    pub w_scale: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
    pub act_gamma: f64,
    pub act_hi: f64,
    pub act_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arith {
    Multiply,
    RepeatedAdd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub layers: Vec<QuantLayer>,
    pub arith: Arith,
}

/// Toggle accounting for the two unsigned accumulation paths.
struct PannMeter {
    plus: Accumulator,
    minus: Accumulator,
    totals: ToggleTally,
    elements: u64,
}

impl PannMeter {
    fn new(acc_width: u32) -> Result<Self> {
        Ok(PannMeter {
            plus: Accumulator::new(acc_width, false)?,
            minus: Accumulator::new(acc_width, false)?,
            totals: ToggleTally::default(),
            elements: 0,
        })
    }

    /// One dot product on both paths; returns `Σ w_i p_i` as accumulated.
    fn dot(&mut self, w: &[i64], p: &[Word]) -> Result<i64> {
        self.plus.reset_register();
        self.minus.reset_register();
        for (&wi, x) in w.iter().zip(p) {
            let path = if wi > 0 { &mut self.plus } else { &mut self.minus };
            for _ in 0..wi.unsigned_abs() {
                self.totals.add(&path.step(x)?);
            }
        }
        self.elements += w.len() as u64;
        Ok(self.plus.register().value() - self.minus.register().value())
    }
}

impl QuantizedModel {
    fn act_codes(layer: &QuantLayer, h: &[f64]) -> Result<Vec<i64>> {
        if let Some(v) = h.iter().find(|v| **v < 0.0) {
            return Err(Error::Invariant(format!(
                "negative activation {v} entered a fixed-point layer (missing ReLU?)"
            )));
        }
        Ok(ruq_quantize(h, layer.act_bits, 0.0, layer.act_hi)?.q)
    }

    fn run(&self, x: &[f64], mut meter: Option<&mut PannMeter>) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            let p = Self::act_codes(layer, &h)?;
            let words = match meter {
                Some(_) => p
                    .iter()
                    .map(|&v| Word::encode(v, layer.act_bits, false))
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let mut out = Vec::with_capacity(layer.w.len());
            for (j, row) in layer.w.iter().enumerate() {
                let acc = match self.arith {
                    Arith::Multiply => row.iter().zip(&p).map(|(w, p)| w * p).sum::<i64>(),
                    Arith::RepeatedAdd => {
                        let (mut pos, mut neg) = (0i64, 0i64);
                        for (&w, &pi) in row.iter().zip(&p) {
                            if w > 0 {
                                pos += mul_via_additions(w, pi)?;
                            } else if w < 0 {
                                neg += mul_via_additions(-w, pi)?;
                            }
                        }
                        let acc = pos - neg;
                        if let Some(m) = meter.as_deref_mut() {
                            let simulated = m.dot(row, &words)?;
                            if simulated != acc {
                                return Err(Error::Invariant(format!(
                                    "simulated accumulator {simulated} differs from {acc}"
                                )));
                            }
                        }
                        acc
                    }
                };
                let y = layer.w_scale[j] * layer.act_gamma * acc as f64 + layer.bias[j];
                out.push(if layer.relu { y.max(0.0) } else { y });
            }
            h = out;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.run(x, None)
    }

    /// The same integer weights evaluated with the other arithmetic.
    pub fn with_arith(&self, arith: Arith) -> QuantizedModel {
        QuantizedModel {
            layers: self.layers.clone(),
            arith,
        }
    }

    /// Largest stored weight magnitude over all layers.
    pub fn max_abs_weight(&self) -> u64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().flatten())
            .map(|w| w.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Mean `|w|` over every weight, i.e. additions per element.
    pub fn addition_factor(&self) -> f64 {
        let (sum, n) = self
            .layers
            .iter()
            .flat_map(|l| l.w.iter().flatten())
            .fold((0u64, 0u64), |(s, n), w| (s + w.unsigned_abs(), n + 1));
        sum as f64 / n.max(1) as f64
    }
}

/// A model ready to run under a particular backend.
#[derive(Debug, Clone)]
pub enum Prepared {
    Float(Model),
    Quant(QuantizedModel),
}

impl Prepared {
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Prepared::Float(m) => Ok(m.forward_float(x)),
            Prepared::Quant(q) => q.forward(x),
        }
    }
}

/// Largest input seen by each layer on the calibration samples. Inputs are
/// non-negative, so the quantization range of layer `l` is `[0, max_l]`.
pub fn calibrate_activation_ranges(model: &Model, calib: &Dataset) -> Result<Vec<f64>> {
    if calib.is_empty() {
        return Err(Error::Validation("calibration set is empty".into()));
    }
    let mut maxima = vec![0.0f64; model.layers.len()];
    for x in &calib.samples {
        let mut h = x.clone();
        for (i, l) in model.layers.iter().enumerate() {
            maxima[i] = h.iter().fold(maxima[i], |m, v| m.max(*v));
            h = l.affine(&h);
            if l.relu {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
    }
    // a layer whose inputs are all zero still needs a non-empty range
    Ok(maxima.into_iter().map(|m| if m > 0.0 { m } else { 1.0 }).collect())
}

fn calibration_subset(calib: &Dataset, cfg: &EngineConfig) -> Dataset {
    match cfg.calib_samples {
        Some(n) if n < calib.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut idx = sample(&mut rng, calib.len(), n).into_vec();
            idx.sort_unstable();
            calib.subset(&idx)
        }
        _ => calib.clone(),
    }
}

/// Quantizes `model` for `backend`, calibrating activation ranges on `calib`.
pub fn prepare(model: &Model, calib: &Dataset, backend: &Backend, cfg: &EngineConfig) -> Result<Prepared> {
    let (act_bits, arith) = match *backend {
        Backend::FloatRef => return Ok(Prepared::Float(model.clone())),
        Backend::QuantMul { b_x, b_w } => {
            if b_w == 0 || b_w > 32 {
                return Err(Error::contract(format!("weight width {b_w} outside 1..=32")));
            }
            (b_x, Arith::Multiply)
        }
        Backend::PannAdd { b_x, r, .. } => {
            if !(r > 0.0) {
                return Err(Error::contract(format!("addition factor must be positive, got {r}")));
            }
            (b_x, Arith::RepeatedAdd)
        }
    };
    if act_bits == 0 || act_bits > 32 {
        return Err(Error::contract(format!("activation width {act_bits} outside 1..=32")));
    }
    let ranges = calibrate_activation_ranges(model, &calibration_subset(calib, cfg))?;
    let mut layers = Vec::with_capacity(model.layers.len());
    for (l, &hi) in model.layers.iter().zip(&ranges) {
        let (w, w_scale) = match *backend {
            Backend::QuantMul { b_w, .. } => {
                // one symmetric range per layer; codes recentred so that
                // w ≈ gamma · (q - 2^(b-1)), which maps 0 to 0
                let flat: Vec<f64> = l.weights.iter().flatten().copied().collect();
                let (lo, hi_w) = ruq_range(&flat, true)?;
                let half = 1i64 << (b_w - 1);
                let mut gamma = 0.0;
                let rows = l
                    .weights
                    .iter()
                    .map(|row| {
                        let qt = ruq_quantize(row, b_w, lo, hi_w)?;
                        gamma = qt.gamma;
                        Ok(qt.q.iter().map(|q| q - half).collect())
                    })
                    .collect::<Result<Vec<Vec<i64>>>>()?;
                (rows, vec![gamma; l.out_dim()])
            }
            Backend::PannAdd { r, .. } => {
                let qts = pann_quantize_matrix(&l.weights, r, cfg.gamma_scope)?;
                let scales = qts.iter().map(|q| q.gamma).collect();
                (qts.into_iter().map(|q| q.q).collect(), scales)
            }
            Backend::FloatRef => unreachable!(),
        };
        layers.push(QuantLayer {
            w,
            w_scale,
            bias: l.bias.clone(),
            relu: l.relu,
            act_gamma: hi / (1u64 << act_bits) as f64,
            act_hi: hi,
            act_bits,
        });
    }
    Ok(Prepared::Quant(QuantizedModel { layers, arith }))
}

/// Accuracy and power of one backend on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub samples: usize,
    /// Simulated toggles per MAC-equivalent element.
    pub measured_power: Option<f64>,
    /// Model prediction in the same unit.
    pub predicted_power: Option<f64>,
    /// Realised mean additions per element (power-aware backend only).
    pub addition_factor: Option<f64>,
    pub backend: Backend,
    pub config: EngineConfig,
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Runs `backend` over `data` and reports top-1 accuracy and, for the
/// power-aware backend with `count_toggles`, the simulated accumulator
/// power.
pub fn evaluate(model: &Model, calib: &Dataset, data: &Dataset, backend: &Backend, cfg: &EngineConfig) -> Result<EvalReport> {
    data.validate_for(model)?;
    calib.validate_for(model)?;
    let prepared = prepare(model, calib, backend, cfg)?;
    let mut meter = match (backend, &prepared) {
        (Backend::PannAdd { count_toggles: true, .. }, Prepared::Quant(_)) => Some(PannMeter::new(cfg.acc_width)?),
        _ => None,
    };
    let mut correct = 0usize;
    for (x, &label) in data.samples.iter().zip(&data.labels) {
        let logits = match &prepared {
            Prepared::Float(m) => m.forward_float(x),
            Prepared::Quant(q) => q.run(x, meter.as_mut())?,
        };
        if argmax(&logits) == label {
            correct += 1;
        }
    }
    let (predicted_power, addition_factor) = match (*backend, &prepared) {
        (Backend::QuantMul { b_x, b_w }, _) => (Some(mac_power::<f64>(b_w, b_x, cfg.acc_width, false)?.total), None),
        (Backend::PannAdd { b_x, r, .. }, Prepared::Quant(q)) => (Some(pann_power(r, b_x)), Some(q.addition_factor())),
        _ => (None, None),
    };
    Ok(EvalReport {
        accuracy: correct as f64 / data.len() as f64,
        samples: data.len(),
        measured_power: meter.map(|m| m.totals.total() as f64 / m.elements.max(1) as f64),
        predicted_power,
        addition_factor,
        backend: *backend,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::DenseLayer;

    fn identity_model() -> Model {
        Model::new(vec![DenseLayer::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0], false).unwrap()]).unwrap()
    }

    fn random_model(seed: u64) -> (Model, Dataset) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |o: usize, i: usize, relu| {
            DenseLayer::new(
                (0..o).map(|_| (0..i).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
                (0..o).map(|_| rng.random_range(-0.1..0.1)).collect(),
                relu,
            )
            .unwrap()
        };
        let m = Model::new(vec![layer(8, 6, true), layer(3, 8, false)]).unwrap();
        let samples: Vec<Vec<f64>> = (0..50).map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let labels = samples.iter().map(|s| argmax(&m.forward_float(s))).collect();
        (m, Dataset::new(samples, labels).unwrap())
    }

    #[test]
    fn float_identity() {
        let m = identity_model();
        let ds = Dataset::new(vec![vec![0.25, 0.75]], vec![1]).unwrap();
        let p = prepare(&m, &ds, &Backend::FloatRef, &EngineConfig::default()).unwrap();
        assert_eq!(p.forward(&[0.25, 0.75]).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn fine_quantization_tracks_float() {
        let (m, ds) = random_model(1);
        let p = prepare(&m, &ds, &Backend::QuantMul { b_x: 16, b_w: 16 }, &EngineConfig::default()).unwrap();
        for x in &ds.samples {
            let a = m.forward_float(x);
            let b = p.forward(x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-3, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn repeated_addition_matches_multiplication_bit_exactly() {
        let (m, ds) = random_model(2);
        let backend = Backend::PannAdd { b_x: 5, r: 3.0, count_toggles: false };
        let Prepared::Quant(q) = prepare(&m, &ds, &backend, &EngineConfig::default()).unwrap() else {
            panic!("expected a quantized model");
        };
        let mul = q.with_arith(Arith::Multiply);
        for x in &ds.samples {
            assert_eq!(q.forward(x).unwrap(), mul.forward(x).unwrap());
        }
    }

    #[test]
    fn negative_input_is_an_invariant_failure() {
        let m = identity_model();
        let ds = Dataset::new(vec![vec![0.25, 0.75]], vec![1]).unwrap();
        let p = prepare(&m, &ds, &Backend::QuantMul { b_x: 4, b_w: 4 }, &EngineConfig::default()).unwrap();
        assert!(matches!(p.forward(&[-0.5, 0.0]), Err(Error::Invariant(_))));
    }

    #[test]
    fn toggle_counting_agrees_with_arithmetic() {
        let (m, ds) = random_model(3);
        let backend = Backend::PannAdd { b_x: 4, r: 2.0, count_toggles: true };
        let rep = evaluate(&m, &ds, &ds, &backend, &EngineConfig::default()).unwrap();
        assert!(rep.measured_power.unwrap() > 0.0);
        assert_eq!(rep.predicted_power, Some(10.0));
        let a = evaluate(&m, &ds, &ds, &backend, &EngineConfig::default()).unwrap();
        assert_eq!(a, rep);
    }

    #[test]
    fn calibration_subset_is_seeded() {
        let (m, ds) = random_model(4);
        let cfg = |seed| EngineConfig { calib_samples: Some(10), seed, ..EngineConfig::default() };
        let a = calibration_subset(&ds, &cfg(1));
        assert_eq!(a.len(), 10);
        assert_eq!(a, calibration_subset(&ds, &cfg(1)));
        assert_ne!(a, calibration_subset(&ds, &cfg(2)));
        assert!(calibrate_activation_ranges(&m, &a).unwrap().iter().all(|&v| v > 0.0));
    }
}
