//! Multiply-accumulate unit with per-component toggle accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiplier::ArrayMultiplier;
use crate::stream::{MultiplierKind, StreamConfig};
use crate::word::{hamming_toggles, Word};

/// Raw toggle counts, summed over any number of steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleTally {
    pub mult_input_a: u64,
    pub mult_input_b: u64,
    pub mult_internal: u64,
    pub acc_input: u64,
    pub acc_sum: u64,
    pub ff: u64,
}

impl ToggleTally {
    pub fn total(&self) -> u64 {
        self.mult_total() + self.acc_total()
    }

    pub fn mult_total(&self) -> u64 {
        self.mult_input_a + self.mult_input_b + self.mult_internal
    }

    pub fn acc_total(&self) -> u64 {
        self.acc_input + self.acc_sum + self.ff
    }

    pub fn add(&mut self, other: &ToggleTally) {
        self.mult_input_a += other.mult_input_a;
        self.mult_input_b += other.mult_input_b;
        self.mult_internal += other.mult_internal;
        self.acc_input += other.acc_input;
        self.acc_sum += other.acc_sum;
        self.ff += other.ff;
    }

    pub fn get(&self, c: Component) -> u64 {
        match c {
            Component::MultInputA => self.mult_input_a,
            Component::MultInputB => self.mult_input_b,
            Component::MultInternal => self.mult_internal,
            Component::AccInput => self.acc_input,
            Component::AccSum => self.acc_sum,
            Component::Ff => self.ff,
            Component::MultTotal => self.mult_total(),
            Component::AccTotal => self.acc_total(),
            Component::Total => self.total(),
        }
    }
}

/// Reported quantities, in the fixed order used by every table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    MultInputA,
    MultInputB,
    MultInternal,
    AccInput,
    AccSum,
    Ff,
    MultTotal,
    AccTotal,
    Total,
}

impl Component {
    pub const ALL: [Component; 9] = [
        Component::MultInputA,
        Component::MultInputB,
        Component::MultInternal,
        Component::AccInput,
        Component::AccSum,
        Component::Ff,
        Component::MultTotal,
        Component::AccTotal,
        Component::Total,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Component::MultInputA => "mult_input_a",
            Component::MultInputB => "mult_input_b",
            Component::MultInternal => "mult_internal",
            Component::AccInput => "acc_input",
            Component::AccSum => "acc_sum",
            Component::Ff => "ff",
            Component::MultTotal => "mult_total",
            Component::AccTotal => "acc_total",
            Component::Total => "total",
        }
    }
}

/// Toggle totals over `samples` measured operations (or elements).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleReport {
    pub samples: u64,
    pub totals: ToggleTally,
}

impl ToggleReport {
    pub fn mean(&self, c: Component) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        self.totals.get(c) as f64 / self.samples as f64
    }
}

/// The B-bit accumulator: input bus, adder and the register (FF).
#[derive(Debug, Clone)]
pub struct Accumulator {
    width: u32,
    prev_input: Word,
    register: Word,
}

impl Accumulator {
    pub fn new(width: u32, signed: bool) -> Result<Self> {
        Ok(Accumulator {
            width,
            prev_input: Word::zero(width, signed)?,
            register: Word::zero(width, signed)?,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn register(&self) -> Word {
        self.register
    }

    /// Clears the register without counting toggles (a new dot product).
    pub fn reset_register(&mut self) {
        self.register = Word::from_raw(0, self.width, self.register.is_signed());
    }

    /// Extends `addend` to B bits, adds it (wrapping) and counts toggles at
    /// the input bus, the sum output and the FF.
    pub fn step(&mut self, addend: &Word) -> Result<ToggleTally> {
        if addend.width() > self.width {
            return Err(Error::contract(format!(
                "addend of {} bits does not fit a {}-bit accumulator",
                addend.width(),
                self.width
            )));
        }
        let input = addend.extend(self.width)?;
        let input = Word::from_raw(input.raw(), self.width, self.register.is_signed());
        let sum = Word::from_raw(
            self.register.raw().wrapping_add(input.raw()),
            self.width,
            self.register.is_signed(),
        );
        let acc_input = hamming_toggles(&self.prev_input, &input)? as u64;
        let acc_sum = hamming_toggles(&self.register, &sum)? as u64;
        self.prev_input = input;
        self.register = sum;
        Ok(ToggleTally {
            acc_input,
            acc_sum,
            ff: acc_sum,
            ..ToggleTally::default()
        })
    }
}

/// State of one MAC unit across a stream of operations.
#[derive(Debug, Clone)]
pub struct MacUnitState {
    multiplier: ArrayMultiplier,
    b_w: u32,
    b_x: u32,
    signed: bool,
    prev_input_a: Word,
    prev_input_b: Word,
    prev_internal_nodes: Vec<u64>,
    scratch: Vec<u64>,
    acc: Accumulator,
}

impl MacUnitState {
    pub fn new(kind: MultiplierKind, b_w: u32, b_x: u32, acc_width: u32, signed: bool) -> Result<Self> {
        if !(1..=32).contains(&b_w) || !(1..=32).contains(&b_x) {
            return Err(Error::contract(format!(
                "operand widths must be in 1..=32, got b_w={b_w}, b_x={b_x}"
            )));
        }
        if acc_width < b_w + b_x || acc_width > 64 {
            return Err(Error::contract(format!(
                "accumulator width {acc_width} cannot hold a {}-bit product",
                b_w + b_x
            )));
        }
        let multiplier = ArrayMultiplier::new(kind, b_w.max(b_x));
        let rows = multiplier.rows();
        Ok(MacUnitState {
            multiplier,
            b_w,
            b_x,
            signed,
            prev_input_a: Word::zero(b_w, signed)?,
            prev_input_b: Word::zero(b_x, signed)?,
            prev_internal_nodes: vec![0; rows],
            scratch: vec![0; rows],
            acc: Accumulator::new(acc_width, signed)?,
        })
    }

    pub fn from_config(cfg: &StreamConfig) -> Result<Self> {
        Self::new(cfg.multiplier, cfg.b_w, cfg.b_x, cfg.acc_width, cfg.signed)
    }

    /// Multiplier output width `b_w + b_x`.
    pub fn b_acc(&self) -> u32 {
        self.b_w + self.b_x
    }

    pub fn acc_width(&self) -> u32 {
        self.acc.width()
    }

    /// Internal node count, fixed for a given multiplier kind and widths.
    pub fn internal_node_count(&self) -> u32 {
        self.multiplier.rows() as u32 * self.multiplier.nodes_per_row()
    }

    pub fn accumulator(&self) -> Word {
        self.acc.register()
    }

    fn check_operand(&self, w: &Word, width: u32, name: &str) -> Result<()> {
        if w.width() != width {
            return Err(Error::WidthMismatch {
                left: width,
                right: w.width(),
            });
        }
        if w.is_signed() != self.signed {
            return Err(Error::contract(format!(
                "{name} signedness does not match the unit (signed={})",
                self.signed
            )));
        }
        // Unsigned operands run on the signed array, so they must leave the
        // top bit clear.
        if !self.signed && w.bit(width - 1) {
            return Err(Error::contract(format!(
                "unsigned {name} {} must be below 2^{}",
                w.value(),
                width - 1
            )));
        }
        Ok(())
    }

    /// Multiplies weight `a` by activation `b`. The weight is the data
    /// operand, the activation is the recoded operand.
    pub fn multiply_step(&mut self, a: &Word, b: &Word) -> Result<(Word, ToggleTally)> {
        self.check_operand(a, self.b_w, "weight operand")?;
        self.check_operand(b, self.b_x, "activation operand")?;
        let product = self.multiplier.evaluate(a.value(), b.value(), &mut self.scratch);
        let internal: u64 = self
            .scratch
            .iter()
            .zip(&self.prev_internal_nodes)
            .map(|(n, p)| (n ^ p).count_ones() as u64)
            .sum();
        std::mem::swap(&mut self.scratch, &mut self.prev_internal_nodes);
        let tally = ToggleTally {
            mult_input_a: hamming_toggles(&self.prev_input_a, a)? as u64,
            mult_input_b: hamming_toggles(&self.prev_input_b, b)? as u64,
            mult_internal: internal,
            ..ToggleTally::default()
        };
        self.prev_input_a = *a;
        self.prev_input_b = *b;
        let product = Word::encode(product, self.b_acc(), self.signed)
            .map_err(|e| Error::Invariant(format!("product does not fit b_acc: {e}")))?;
        Ok((product, tally))
    }

    pub fn accumulate_step(&mut self, addend: &Word) -> Result<ToggleTally> {
        self.acc.step(addend)
    }

    /// One full MAC: multiply then accumulate.
    pub fn mac_step(&mut self, a: &Word, b: &Word) -> Result<ToggleTally> {
        let (p, mut t) = self.multiply_step(a, b)?;
        t.add(&self.accumulate_step(&p)?);
        Ok(t)
    }
}

/// Simulates `cfg.n_samples` MAC operations. The first operation only
/// charges the zero-initialised unit and is not counted, so the averages are
/// over the `n - 1` transitions between consecutive operations.
pub fn run_mac_stream(cfg: &StreamConfig) -> Result<ToggleReport> {
    let (w, x) = cfg.operand_streams()?;
    let mut unit = MacUnitState::from_config(cfg)?;
    let mut totals = ToggleTally::default();
    for (i, (a, b)) in w.iter().zip(&x).enumerate() {
        let t = unit.mac_step(a, b)?;
        if i > 0 {
            totals.add(&t);
        }
    }
    Ok(ToggleReport {
        samples: (w.len() - 1) as u64,
        totals,
    })
}

/// Simulates multiplier-free dot products. Element `i` puts activation
/// `activations[i]` on the accumulator input and adds it `weights_q[i]`
/// times; zero weights are skipped and the input bus holds its value.
///
/// `dot_len` splits the stream into dot products of that length; the
/// register is cleared between them (uncounted). The report counts
/// toggles per element.
pub fn run_pann_stream(
    weights_q: &[i64],
    activations: &[Word],
    b_x: u32,
    acc_width: u32,
    dot_len: Option<usize>,
) -> Result<ToggleReport> {
    if weights_q.len() != activations.len() {
        return Err(Error::contract(format!(
            "{} weights but {} activations",
            weights_q.len(),
            activations.len()
        )));
    }
    if acc_width < b_x {
        return Err(Error::contract(format!(
            "accumulator width {acc_width} below activation width {b_x}"
        )));
    }
    if let Some(&neg) = weights_q.iter().find(|&&q| q < 0) {
        return Err(Error::contract(format!(
            "quantized weight {neg} is negative; split signs before accumulation"
        )));
    }
    let mut acc = Accumulator::new(acc_width, false)?;
    let mut totals = ToggleTally::default();
    for (i, (&q, x)) in weights_q.iter().zip(activations).enumerate() {
        if x.width() != b_x || x.is_signed() {
            return Err(Error::contract(format!(
                "activation {i} must be an unsigned {b_x}-bit word"
            )));
        }
        if let Some(n) = dot_len {
            if n > 0 && i % n == 0 {
                acc.reset_register();
            }
        }
        for _ in 0..q {
            totals.add(&acc.step(x)?);
        }
    }
    Ok(ToggleReport {
        samples: weights_q.len() as u64,
        totals,
    })
}
