//! Toy dense-network inference with interchangeable MAC backends, and the
//! power-budget search built on top of it.

mod engine;
mod model;
mod search;

pub use engine::{
    calibrate_activation_ranges, evaluate, Arith, prepare, Backend, EngineConfig, EvalReport, Prepared,
    QuantLayer, QuantizedModel,
};
pub use model::{Dataset, Model, FORMAT_VERSION};
pub use search::{budget_search, tradeoff_table, BudgetSearch, SweepRow, TradeoffRow};
