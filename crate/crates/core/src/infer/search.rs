use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::power::{equal_power_points, pann_power, PowerBudget};
use crate::quantize::StorageReport;

use super::engine::{evaluate, prepare, Backend, EngineConfig, Prepared};
use super::model::{Dataset, Model};

/// One point on the constant-power curve, evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub b_x: u32,
    pub r: f64,
    pub accuracy: f64,
    pub predicted_power: f64,
    pub measured_power: Option<f64>,
    /// Additions per element actually realised by the rounded weights.
    pub addition_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSearch {
    pub budget_p: f64,
    pub best: SweepRow,
    pub rows: Vec<SweepRow>,
    /// Widths skipped because they would need a non-positive `R`.
    pub omitted: Vec<u32>,
}

/// Walks every activation width in `widths` at power `budget_p`, sets
/// `R = P / b_x - 0.5`, quantizes and evaluates, and keeps the most accurate
/// configuration (the narrowest width on ties).
pub fn budget_search(
    model: &Model,
    calib: &Dataset,
    data: &Dataset,
    budget_p: f64,
    widths: RangeInclusive<u32>,
    cfg: &EngineConfig,
    count_toggles: bool,
) -> Result<BudgetSearch> {
    let sweep = equal_power_points(PowerBudget::new(budget_p)?, widths)?;
    let mut rows = Vec::with_capacity(sweep.points.len());
    for pt in &sweep.points {
        let backend = Backend::PannAdd {
            b_x: pt.b_x,
            r: pt.r,
            count_toggles,
        };
        let rep = evaluate(model, calib, data, &backend, cfg)?;
        rows.push(SweepRow {
            b_x: pt.b_x,
            r: pt.r,
            accuracy: rep.accuracy,
            predicted_power: pann_power(pt.r, pt.b_x),
            measured_power: rep.measured_power,
            addition_factor: rep.addition_factor.unwrap_or(f64::NAN),
        });
    }
    let best = rows
        .iter()
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if b.accuracy >= r.accuracy => Some(b),
            _ => Some(r),
        })
        .expect("sweep is non-empty")
        .clone();
    Ok(BudgetSearch {
        budget_p,
        best,
        rows,
        omitted: sweep.omitted,
    })
}

/// One row of the hardware/accuracy frontier at a fixed budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub b_x: u32,
    pub latency: f64,
    pub b_r: u32,
    pub act_mem: f64,
    pub weight_mem: f64,
    pub accuracy: f64,
}

/// Every feasible activation width at `budget_p`, with the memory and
/// latency cost relative to a `b_x_baseline`-bit quantized network.
pub fn tradeoff_table(
    model: &Model,
    calib: &Dataset,
    data: &Dataset,
    budget_p: f64,
    b_x_baseline: u32,
    widths: RangeInclusive<u32>,
    cfg: &EngineConfig,
) -> Result<Vec<TradeoffRow>> {
    let sweep = equal_power_points(PowerBudget::new(budget_p)?, widths)?;
    sweep
        .points
        .iter()
        .map(|pt| {
            let backend = Backend::PannAdd {
                b_x: pt.b_x,
                r: pt.r,
                count_toggles: false,
            };
            let rep = evaluate(model, calib, data, &backend, cfg)?;
            let max_abs = match prepare(model, calib, &backend, cfg)? {
                Prepared::Quant(q) => q.max_abs_weight(),
                Prepared::Float(_) => 0,
            };
            let s = StorageReport::from_max_abs(max_abs, b_x_baseline, pt.b_x, pt.r);
            Ok(TradeoffRow {
                b_x: pt.b_x,
                latency: s.latency_factor,
                b_r: s.b_r,
                act_mem: s.activation_mem_factor,
                weight_mem: s.weight_mem_factor,
                accuracy: rep.accuracy,
            })
        })
        .collect()
}
