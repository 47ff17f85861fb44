//! Bit-level array multipliers.
//!
//! Both multipliers are modelled as a column of `b` ripple-carry rows, one
//! per digit of the recoded operand, where `b = max(b_w, b_x)`. Row `i` adds
//! `d_i · a` to the running partial sum, retires the least significant bit
//! of the sum as product bit `i`, and passes the arithmetic right shift of the
//! rest to row `i + 1`. The rows are `b + 1` bits wide, which is exactly
//! enough to hold every intermediate partial sum.
//!
//! The observable nodes of a row are its `b` low sum bits plus the carry out
//! of the top data column: `b + 1` nodes per row, `b (b + 1)` in total.

use crate::stream::MultiplierKind;
use crate::word::mask;

/// Radix-2 Booth digits `d_i = q_{i-1} - q_i` (with `q_{-1} = 0`) of the
/// low `width` bits of `q`, least significant first.
///
/// A run of ones collapses to one `+1` and one `-1`, e.g. `0b1111` becomes
/// `2^4 - 2^0` (a `-1` at position 0 and the `+1` falling off the top when
/// the operand is interpreted as signed).
pub fn booth_digits(q: i64, width: u32) -> Vec<i8> {
    let bits = q as u64;
    (0..width)
        .map(|i| {
            let prev = if i == 0 { 0 } else { (bits >> (i - 1)) & 1 };
            let cur = (bits >> i) & 1;
            prev as i8 - cur as i8
        })
        .collect()
}

/// Long-multiplication digits: the bits of `q`, with the top bit weighted
/// negatively when `signed`.
pub fn serial_digits(q: i64, width: u32, signed: bool) -> Vec<i8> {
    let bits = q as u64;
    (0..width)
        .map(|i| {
            let d = ((bits >> i) & 1) as i8;
            if signed && i + 1 == width {
                -d
            } else {
                d
            }
        })
        .collect()
}

/// Number of add operations a digit string costs (non-zero digits).
pub fn partial_product_count(digits: &[i8]) -> usize {
    digits.iter().filter(|&&d| d != 0).count()
}

/// A `b × b` array multiplier of a given kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayMultiplier {
    kind: MultiplierKind,
    core: u32,
}

impl ArrayMultiplier {
    pub fn new(kind: MultiplierKind, core: u32) -> Self {
        assert!((1..=32).contains(&core), "multiplier core width {core}");
        ArrayMultiplier { kind, core }
    }

    pub fn kind(&self) -> MultiplierKind {
        self.kind
    }

    pub fn core_width(&self) -> u32 {
        self.core
    }

    /// Rows in the array; each row contributes one node word.
    pub fn rows(&self) -> usize {
        self.core as usize
    }

    pub fn nodes_per_row(&self) -> u32 {
        self.core + 1
    }

    /// Multiplies the data operand `a` by the recoded operand `q`, writing
    /// each row's node word into `nodes`. Both values must fit in `core`
    /// signed bits. Returns the exact product.
    pub fn evaluate(&self, a: i64, q: i64, nodes: &mut [u64]) -> i64 {
        let b = self.core;
        debug_assert_eq!(nodes.len(), b as usize);
        let w = b + 1;
        let m = mask(w);
        let low_mask = mask(b);
        let qbits = q as u64;
        let mut partial: i64 = 0;
        let mut low: u64 = 0;
        for i in 0..b {
            let cur = ((qbits >> i) & 1) as i64;
            let d = match self.kind {
                MultiplierKind::BoothRadix2 => {
                    let prev = if i == 0 { 0 } else { ((qbits >> (i - 1)) & 1) as i64 };
                    prev - cur
                }
                // Signed operands weigh the top bit negatively; an unsigned
                // operand never has it set because operands live in the
                // lower half of the range.
                MultiplierKind::SerialShiftAdd => {
                    if i + 1 == b {
                        -cur
                    } else {
                        cur
                    }
                }
            };
            let x = (partial as u64) & m;
            let y = ((d * a) as u64) & m;
            let s = x + y;
            let carries = ((x ^ y ^ s) >> 1) & m;
            let sum = s & m;
            nodes[i as usize] = (sum & low_mask) | (((carries >> (b - 1)) & 1) << b);
            low |= (sum & 1) << i;
            // sign-extend the (b+1)-bit sum, then drop the retired bit
            let signed_sum = ((sum << (64 - w)) as i64) >> (64 - w);
            partial = signed_sum >> 1;
        }
        (partial << b) | low as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exhaustive(kind: MultiplierKind, b: u32) {
        let m = ArrayMultiplier::new(kind, b);
        let mut nodes = vec![0u64; m.rows()];
        let half = 1i64 << (b - 1);
        for a in -half..half {
            for q in -half..half {
                assert_eq!(m.evaluate(a, q, &mut nodes), a * q, "{kind:?} b={b} {a}*{q}");
                let limit = mask(b + 1);
                assert!(nodes.iter().all(|&n| n <= limit));
            }
        }
    }

    #[test]
    fn booth_is_exact_up_to_8_bits() {
        for b in 1..=8 {
            exhaustive(MultiplierKind::BoothRadix2, b);
        }
    }

    #[test]
    fn serial_is_exact_up_to_8_bits() {
        for b in 1..=8 {
            exhaustive(MultiplierKind::SerialShiftAdd, b);
        }
    }

    #[test]
    fn booth_recodes_fifteen_as_two_terms() {
        // 0b01111 on 5 bits: -1 at 2^0, +1 at 2^4
        let d = booth_digits(15, 5);
        assert_eq!(d, vec![-1, 0, 0, 0, 1]);
        let value: i64 = d.iter().enumerate().map(|(i, &d)| (d as i64) << i).sum();
        assert_eq!(value, 15);
        let serial = serial_digits(15, 5, true);
        assert_eq!(partial_product_count(&serial) - partial_product_count(&d), 2);
    }

    #[test]
    fn zero_data_operand_gives_zero() {
        let m = ArrayMultiplier::new(MultiplierKind::BoothRadix2, 6);
        let mut nodes = vec![0u64; 6];
        for q in -32..32 {
            assert_eq!(m.evaluate(0, q, &mut nodes), 0);
            assert!(nodes.iter().all(|&n| n == 0));
        }
    }

    #[test]
    fn wide_cores_stay_exact() {
        let m = ArrayMultiplier::new(MultiplierKind::BoothRadix2, 32);
        let mut nodes = vec![0u64; 32];
        for &(a, q) in &[
            (i32::MIN as i64, i32::MIN as i64),
            (i32::MAX as i64, i32::MIN as i64),
            (-12345, 987654),
        ] {
            assert_eq!(m.evaluate(a, q, &mut nodes), a * q);
        }
    }
}
