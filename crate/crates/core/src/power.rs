//! Closed-form power models, in average bit flips per operation.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mac::Component;
use crate::Scalar;

fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant representable")
}

fn n<T: Scalar>(v: u32) -> T {
    T::from_u32(v).expect("small integer representable")
}

/// Per-MAC power split between multiplier and accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacPowerBreakdown<T> {
    pub mult: T,
    pub acc: T,
    pub total: T,
    pub b_w: u32,
    pub b_x: u32,
    pub acc_width: u32,
    pub signed: bool,
}

/// Predicted power of a `b_w × b_x` MAC with a `B`-bit accumulator.
///
/// The multiplier costs `0.5·max(b_w, b_x)²` internally plus half of each
/// input register. The signed accumulator sees `0.5·B` toggles on its
/// sign-extended input and `b_w + b_x` on sum and FF together; unsigned
/// inputs only toggle the `b_w + b_x` product bits, so the accumulator costs
/// `1.5·(b_w + b_x)`.
pub fn mac_power<T: Scalar>(b_w: u32, b_x: u32, acc_width: u32, signed: bool) -> Result<MacPowerBreakdown<T>> {
    if b_w == 0 || b_x == 0 {
        return Err(Error::contract("operand widths must be positive"));
    }
    if acc_width < b_w + b_x {
        return Err(Error::contract(format!(
            "accumulator width {acc_width} cannot represent a {}-bit product",
            b_w + b_x
        )));
    }
    let half = c::<T>(0.5);
    let core = n::<T>(b_w.max(b_x));
    let b_acc = n::<T>(b_w + b_x);
    let mult = half * core * core + half * b_acc;
    let acc = if signed {
        half * n::<T>(acc_width) + b_acc
    } else {
        c::<T>(1.5) * b_acc
    };
    Ok(MacPowerBreakdown {
        mult,
        acc,
        total: mult + acc,
        b_w,
        b_x,
        acc_width,
        signed,
    })
}

/// Predicted per-operation value of one reported component.
pub fn predicted_component<T: Scalar>(
    component: Component,
    b_w: u32,
    b_x: u32,
    acc_width: u32,
    signed: bool,
) -> Result<T> {
    let p = mac_power::<T>(b_w, b_x, acc_width, signed)?;
    let half = c::<T>(0.5);
    let core = n::<T>(b_w.max(b_x));
    let b_acc = n::<T>(b_w + b_x);
    Ok(match component {
        Component::MultInputA => half * n::<T>(b_w),
        Component::MultInputB => half * n::<T>(b_x),
        Component::MultInternal => half * core * core,
        Component::AccInput => {
            if signed {
                half * n::<T>(acc_width)
            } else {
                half * b_acc
            }
        }
        Component::AccSum | Component::Ff => half * b_acc,
        Component::MultTotal => p.mult,
        Component::AccTotal => p.acc,
        Component::Total => p.total,
    })
}

/// Total power of an unsigned `b`-bit MAC, `0.5·b² + 4·b`. This is the
/// budget PANN is tuned to when it replaces a `b`-bit quantized network.
pub fn unsigned_mac_budget<T: Scalar>(b: u32) -> T {
    let b = n::<T>(b);
    c::<T>(0.5) * b * b + c::<T>(4.0) * b
}

/// Average toggles per element of a multiplier-free dot product with `r`
/// additions per element at activation width `b_x`.
pub fn pann_power<T: Scalar>(r: T, b_x: u32) -> T {
    (r + c::<T>(0.5)) * n::<T>(b_x)
}

/// A power budget per MAC-equivalent element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget<T> {
    pub p: T,
    pub mac_count: Option<u64>,
}

impl<T: Scalar> PowerBudget<T> {
    pub fn new(p: T) -> Result<Self> {
        if !(p > T::zero()) || !p.is_finite() {
            return Err(Error::InfeasibleBudget {
                budget: p.to_f64().unwrap_or(f64::NAN),
                min_feasible: 0.0,
                reason: "the budget must be positive and finite".into(),
            });
        }
        Ok(PowerBudget { p, mac_count: None })
    }

    /// Budget of an unsigned `b`-bit MAC.
    pub fn of_unsigned_mac(b: u32) -> Self {
        PowerBudget {
            p: unsigned_mac_budget(b),
            mac_count: None,
        }
    }

    pub fn network_total(&self) -> Option<T> {
        self.mac_count.map(|m| network_power(self.p, m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualPowerPoint<T> {
    pub b_x: u32,
    pub r: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualPowerSweep<T> {
    pub points: Vec<EqualPowerPoint<T>>,
    /// Widths whose addition factor would be non-positive.
    pub omitted: Vec<u32>,
}

/// Addition factor that spends exactly `p` at activation width `b_x`.
pub fn equal_power_r<T: Scalar>(p: T, b_x: u32) -> T {
    p / n::<T>(b_x) - c::<T>(0.5)
}

/// Walks the constant-power curve over `widths`.
pub fn equal_power_points<T: Scalar>(
    budget: PowerBudget<T>,
    widths: RangeInclusive<u32>,
) -> Result<EqualPowerSweep<T>> {
    let mut sweep = EqualPowerSweep {
        points: Vec::new(),
        omitted: Vec::new(),
    };
    let mut smallest = None;
    for b_x in widths.clone() {
        if b_x == 0 {
            sweep.omitted.push(b_x);
            continue;
        }
        smallest.get_or_insert(b_x);
        let r = equal_power_r(budget.p, b_x);
        if r > T::zero() {
            sweep.points.push(EqualPowerPoint { b_x, r });
        } else {
            sweep.omitted.push(b_x);
        }
    }
    if sweep.points.is_empty() {
        let min_b = smallest.unwrap_or(1);
        return Err(Error::InfeasibleBudget {
            budget: budget.p.to_f64().unwrap_or(f64::NAN),
            min_feasible: 0.5 * min_b as f64,
            reason: format!(
                "budget too small: no activation width in {}..={} leaves a positive addition factor",
                widths.start(),
                widths.end()
            ),
        });
    }
    Ok(sweep)
}

/// Fraction of MAC power saved by switching a `b`-bit MAC with a `B`-bit
/// accumulator from signed to unsigned arithmetic.
pub fn unsigned_power_save<T: Scalar>(b: u32, acc_width: u32) -> Result<T> {
    let s = mac_power::<T>(b, b, acc_width, true)?;
    let u = mac_power::<T>(b, b, acc_width, false)?;
    Ok(T::one() - u.total / s.total)
}

/// Accumulator width that cannot overflow on a `k × k × c_in` convolution:
/// `b_x + b_w + 1 + ⌊log2(k²·c_in)⌋`.
pub fn required_acc_width(b_x: u32, b_w: u32, k: u32, c_in: u32) -> Result<u32> {
    if b_x == 0 || b_w == 0 || k == 0 || c_in == 0 {
        return Err(Error::contract("all arguments must be positive"));
    }
    let terms = (k as u64) * (k as u64) * (c_in as u64);
    Ok(b_x + b_w + 1 + terms.ilog2())
}

/// Network-level power: per-MAC power times the MAC count.
pub fn network_power<T: Scalar>(per_mac: T, mac_count: u64) -> T {
    per_mac * T::from_u64(mac_count).expect("MAC count representable")
}
