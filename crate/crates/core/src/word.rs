//! Fixed-width binary words, the unit every circuit simulation works on.

use std::fmt;

use crate::error::{Error, Result};

/// Widest word the simulators handle.
pub const MAX_WIDTH: u32 = 64;

/// A `width`-bit pattern with its interpretation (two's complement when
/// `signed`, plain binary otherwise). Bits above `width` are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Word {
    raw: u64,
    width: u32,
    signed: bool,
}

#[inline]
pub(crate) fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Inclusive value range of a `(width, signed)` word.
pub fn representable_range(width: u32, signed: bool) -> (i128, i128) {
    if signed {
        let half = 1i128 << (width - 1);
        (-half, half - 1)
    } else {
        (0, (1i128 << width) - 1)
    }
}

fn check_width(width: u32) -> Result<()> {
    if width == 0 || width > MAX_WIDTH {
        return Err(Error::contract(format!(
            "word width must be in 1..={MAX_WIDTH}, got {width}"
        )));
    }
    Ok(())
}

impl Word {
    /// Encodes `value` as a `width`-bit word.
    pub fn encode(value: i64, width: u32, signed: bool) -> Result<Self> {
        check_width(width)?;
        let (min, max) = representable_range(width, signed);
        let v = value as i128;
        if v < min || v > max {
            return Err(Error::Range {
                value: v,
                min,
                max,
                width,
                kind: if signed { "signed" } else { "unsigned" },
            });
        }
        Ok(Word {
            raw: (value as u64) & mask(width),
            width,
            signed,
        })
    }

    /// All-zero word.
    pub fn zero(width: u32, signed: bool) -> Result<Self> {
        check_width(width)?;
        Ok(Word { raw: 0, width, signed })
    }

    /// Reinterprets the low `width` bits of `raw`; never fails on range.
    pub(crate) fn from_raw(raw: u64, width: u32, signed: bool) -> Self {
        Word {
            raw: raw & mask(width),
            width,
            signed,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// The bit pattern, LSB in bit 0.
    pub fn raw(&self) -> u64 {
        self.raw
    }

    pub fn bit(&self, i: u32) -> bool {
        i < self.width && (self.raw >> i) & 1 == 1
    }

    /// Bits from LSB to MSB.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.width).map(move |i| self.bit(i))
    }

    /// Decoded integer value.
    pub fn value(&self) -> i64 {
        if self.signed && self.width < 64 && self.bit(self.width - 1) {
            (self.raw | !mask(self.width)) as i64
        } else {
            self.raw as i64
        }
    }

    /// Sign- or zero-extends (per the word's own signedness) to `width` bits.
    pub fn extend(&self, width: u32) -> Result<Word> {
        check_width(width)?;
        if width < self.width {
            return Err(Error::contract(format!(
                "cannot extend a {}-bit word to {width} bits",
                self.width
            )));
        }
        Ok(Word::from_raw(self.value() as u64, width, self.signed))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Word({}, {}{}: {})",
            self.value(),
            if self.signed { "s" } else { "u" },
            self.width,
            self
        )
    }
}

/// MSB-first bit string, like a datasheet would print it.
impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.width).rev() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Number of bit positions at which two equally wide words differ.
pub fn hamming_toggles(prev: &Word, next: &Word) -> Result<u32> {
    if prev.width != next.width {
        return Err(Error::WidthMismatch {
            left: prev.width,
            right: next.width,
        });
    }
    Ok((prev.raw ^ next.raw).count_ones())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plus_two_and_minus_two_on_32_bits() {
        let p = Word::encode(2, 32, true).unwrap();
        let m = Word::encode(-2, 32, true).unwrap();
        assert_eq!(p.to_string(), format!("{}10", "0".repeat(30)));
        assert_eq!(m.to_string(), format!("{}0", "1".repeat(31)));
        assert_eq!(hamming_toggles(&p, &m).unwrap(), 30);
    }

    #[test]
    fn zero_and_full_flip() {
        let z = Word::encode(0, 4, false).unwrap();
        assert_eq!(z.to_string(), "0000");
        let f = Word::encode(15, 4, false).unwrap();
        assert_eq!(hamming_toggles(&z, &f).unwrap(), 4);
        assert_eq!(hamming_toggles(&f, &f).unwrap(), 0);
    }

    #[test]
    fn out_of_range_names_interval() {
        let err = Word::encode(8, 4, true).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[-8, 7]"), "{msg}");
        assert!(Word::encode(-1, 4, false).is_err());
        assert!(Word::encode(16, 4, false).is_err());
        assert!(Word::encode(15, 4, false).is_ok());
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let a = Word::encode(1, 4, true).unwrap();
        let b = Word::encode(1, 5, true).unwrap();
        assert!(matches!(
            hamming_toggles(&a, &b),
            Err(Error::WidthMismatch { left: 4, right: 5 })
        ));
    }

    #[test]
    fn extension_keeps_value() {
        let w = Word::encode(-3, 4, true).unwrap();
        let e = w.extend(32).unwrap();
        assert_eq!(e.value(), -3);
        assert_eq!(e.raw().count_ones(), 31);
        let u = Word::encode(9, 4, false).unwrap().extend(16).unwrap();
        assert_eq!(u.raw(), 9);
        assert!(w.extend(3).is_err());
    }

    #[test]
    fn sixty_four_bit_words() {
        let w = Word::encode(i64::MIN, 64, true).unwrap();
        assert_eq!(w.value(), i64::MIN);
        let u = Word::encode(-1, 64, true).unwrap();
        assert_eq!(u.raw(), u64::MAX);
    }

    #[test]
    fn invalid_widths() {
        assert!(Word::encode(0, 0, true).is_err());
        assert!(Word::encode(0, 65, true).is_err());
    }
}
