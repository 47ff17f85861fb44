use std::fs;
use std::path::{Path, PathBuf};

use pann::infer::{
    budget_search as run_budget_search, prepare, tradeoff_table, Backend, Dataset, EngineConfig, Model, Prepared,
    QuantizedModel,
};
use pann::mac::Component;
use pann::mse::{crossing_bit, monte_carlo_ratio_curve, optimal_bx, ratio_curve, DistributionModel, RatioRow};
use pann::power::{equal_power_r, pann_power, predicted_component, unsigned_mac_budget};
use pann::quantize::{recombine, split_layer, SplitLayer, StorageReport};
use pann::{run_mac_stream, Distribution, StreamConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::RunManifest;
use crate::{
    BudgetSearchArgs, CliError, DistArg, EvalDataArgs, ModeArg, MseArgs, QuantizeArgs, SimulateArgs, TradeoffArgs,
    ValidateArgs,
};

/// Version stamped into every CSV comment line and JSON output.
pub const FORMAT_VERSION: u32 = 1;

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Serializes `rows` as CSV under a `# pann <command> format_version=N` line.
fn write_csv<R: Serialize>(path: &Path, command: &str, header: &[&str], rows: &[R]) -> Result<(), CliError> {
    let mut buf = format!("# pann {command} format_version={FORMAT_VERSION}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(header).map_err(|e| CliError::input(e.to_string()))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::input(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_file(path, &buf)
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn finish(mut m: RunManifest, outputs: &[&Path], results: Value) -> Result<(), CliError> {
    m.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    m.results = results;
    m.write(outputs[0])?;
    Ok(())
}

fn config_of<A: Serialize>(args: &A) -> Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn relative_error(measured: f64, predicted: f64) -> f64 {
    if predicted == 0.0 {
        measured.abs()
    } else {
        (measured - predicted).abs() / predicted.abs()
    }
}

#[derive(Serialize)]
struct SimRow {
    component: &'static str,
    measured_avg: f64,
    predicted: f64,
    relative_error: f64,
}

fn stream_config(
    b_w: u32,
    b_x: u32,
    acc_width: u32,
    signed: bool,
    n: usize,
    seed: u64,
    mult: crate::MultArg,
) -> StreamConfig {
    let cfg = StreamConfig::new(b_w, b_x, seed)
        .with_samples(n)
        .with_acc_width(acc_width)
        .with_multiplier(mult.into());
    if signed {
        cfg
    } else {
        cfg.unsigned()
    }
}

pub fn simulate(a: &SimulateArgs, argv: &[String]) -> Result<(), CliError> {
    let dist = match a.dist {
        DistArg::Uniform => Distribution::Uniform,
        DistArg::Gaussian => Distribution::ClippedGaussian,
    };
    let cfg = stream_config(a.bw, a.bx, a.acc_width, a.signed, a.n, a.seed, a.mult).with_distribution(dist);
    let report = run_mac_stream(&cfg)?;
    let rows = Component::ALL
        .iter()
        .map(|&c| {
            let measured = report.mean(c);
            let predicted = predicted_component::<f64>(c, a.bw, a.bx, a.acc_width, a.signed)?;
            Ok(SimRow {
                component: c.name(),
                measured_avg: measured,
                predicted,
                relative_error: relative_error(measured, predicted),
            })
        })
        .collect::<Result<Vec<_>, pann::Error>>()?;
    write_csv(
        &a.out,
        "simulate",
        &["component", "measured_avg", "predicted", "relative_error"],
        &rows,
    )?;
    let m = RunManifest::new("simulate", argv, json!({ "args": config_of(a), "stream": cfg }), Some(a.seed));
    finish(m, &[&a.out], json!({ "samples": report.samples }))
}

#[derive(Serialize, Clone)]
struct GateRow {
    grid: &'static str,
    b_w: u32,
    b_x: u32,
    signed: bool,
    component: String,
    measured_avg: f64,
    predicted: f64,
    relative_error: f64,
    tolerance: String,
    pass: String,
}

/// Relative tolerance on each component of the square sweep, `None` where
/// the model makes no claim that is gated.
fn square_tolerance(c: Component, signed: bool) -> Option<f64> {
    match (c, signed) {
        (Component::MultInputA | Component::MultInputB, true) => Some(0.05),
        (Component::MultInternal, true) => Some(0.15),
        (Component::AccInput, true) => Some(0.07),
        (Component::AccSum | Component::Ff, true) => Some(0.15),
        (Component::AccInput, false) => Some(0.15),
        _ => None,
    }
}

/// Grid position of one validation row.
struct Cell {
    grid: &'static str,
    b_w: u32,
    b_x: u32,
    signed: bool,
}

impl Cell {
    fn row(&self, component: &str, measured: f64, predicted: f64, tol: Option<f64>) -> GateRow {
        let err = relative_error(measured, predicted);
        GateRow {
            grid: self.grid,
            b_w: self.b_w,
            b_x: self.b_x,
            signed: self.signed,
            component: component.to_string(),
            measured_avg: measured,
            predicted,
            relative_error: err,
            tolerance: tol.map(|t| t.to_string()).unwrap_or_default(),
            pass: match tol {
                Some(t) if err <= t => "true".into(),
                Some(_) => "false".into(),
                None => String::new(),
            },
        }
    }
}

pub fn validate_models(a: &ValidateArgs, argv: &[String]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for signed in [true, false] {
        for b in a.bits.range() {
            let cfg = stream_config(b, b, a.acc_width, signed, a.n, a.seed, a.mult);
            let rep = run_mac_stream(&cfg)?;
            for &c in Component::ALL.iter() {
                let p = predicted_component::<f64>(c, b, b, a.acc_width, signed)?;
                let cell = Cell { grid: "square", b_w: b, b_x: b, signed };
                rows.push(cell.row(c.name(), rep.mean(c), p, square_tolerance(c, signed)));
            }
        }
    }
    let b_x = a.bits.end;
    let mut mult_power = std::collections::BTreeMap::new();
    for signed in [true, false] {
        for b_w in a.bits.range() {
            let cfg = stream_config(b_w, b_x, a.acc_width, signed, a.n, a.seed, a.mult);
            let rep = run_mac_stream(&cfg)?;
            let measured = rep.mean(Component::MultTotal);
            mult_power.insert((signed, b_w), measured);
            let p = predicted_component::<f64>(Component::MultTotal, b_w, b_x, a.acc_width, signed)?;
            let tol = signed.then_some(0.10);
            let cell = Cell { grid: "mixed", b_w, b_x, signed };
            rows.push(cell.row("mult_total", measured, p, tol));
        }
    }
    // Narrowing only the weights barely reduces multiplier power.
    let half = (b_x / 2).max(a.bits.start);
    for (signed, lo, hi) in [(true, 0.90, 1.05), (false, 0.85, 1.00)] {
        if let (Some(&num), Some(&den)) = (mult_power.get(&(signed, half)), mult_power.get(&(signed, b_x))) {
            let ratio = num / den;
            let pn = predicted_component::<f64>(Component::MultTotal, half, b_x, a.acc_width, signed)?;
            let pd = predicted_component::<f64>(Component::MultTotal, b_x, b_x, a.acc_width, signed)?;
            let ok = (lo..=hi).contains(&ratio);
            rows.push(GateRow {
                grid: "ratio",
                b_w: half,
                b_x,
                signed,
                component: format!("mult_total_ratio_to_b_w_{b_x}"),
                measured_avg: ratio,
                predicted: pn / pd,
                relative_error: relative_error(ratio, pn / pd),
                tolerance: format!("[{lo}, {hi}]"),
                pass: ok.to_string(),
            });
        }
    }
    write_csv(
        &a.out,
        "validate-models",
        &[
            "grid",
            "b_w",
            "b_x",
            "signed",
            "component",
            "measured_avg",
            "predicted",
            "relative_error",
            "tolerance",
            "pass",
        ],
        &rows,
    )?;
    let failed: Vec<&GateRow> = rows.iter().filter(|r| r.pass == "false").collect();
    let gated = rows.iter().filter(|r| !r.pass.is_empty()).count();
    let m = RunManifest::new("validate-models", argv, config_of(a), Some(a.seed));
    finish(m, &[&a.out], json!({ "gated_rows": gated, "failed_rows": failed.len() }))?;
    if failed.is_empty() {
        return Ok(());
    }
    for r in &failed {
        eprintln!(
            "FAIL {} b_w={} b_x={} signed={} {}: measured {:.4}, predicted {:.4}, error {:.4} > {}",
            r.grid, r.b_w, r.b_x, r.signed, r.component, r.measured_avg, r.predicted, r.relative_error, r.tolerance
        );
    }
    Err(CliError::gate(format!("{} of {gated} gated rows outside tolerance", failed.len())))
}

fn load_calib(dir: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::load(dir.join("calib.csv"))?)
}

/// Largest width whose unsigned MAC fits in `budget`, used as the reference
/// for memory factors when no baseline is given.
fn baseline_for_budget(budget: f64) -> u32 {
    (1..=32u32)
        .take_while(|&b| unsigned_mac_budget::<f64>(b) <= budget + 1e-9)
        .last()
        .unwrap_or(1)
}

/// Deterministic non-negative probe inputs for the split equivalence check.
fn probe_inputs(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
}

fn split_forward(layers: &[SplitLayer<f64>], x: &[f64]) -> Result<Vec<f64>, pann::Error> {
    let mut h = x.to_vec();
    for l in layers {
        let (p, m) = l.forward_parts(&h);
        h = recombine(&p, &m)?;
        if l.relu {
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    Ok(h)
}

fn quantized_storage(q: &QuantizedModel, baseline: u32, b_x: u32, r: f64) -> Value {
    let s = StorageReport::from_max_abs(q.max_abs_weight(), baseline, b_x, r);
    json!({
        "format_version": FORMAT_VERSION,
        "b_x_baseline": baseline,
        "b_x": b_x,
        "max_abs_weight": q.max_abs_weight(),
        "storage": s,
    })
}

pub fn quantize(a: &QuantizeArgs, argv: &[String]) -> Result<(), CliError> {
    let model = Model::load(&a.model)?;
    let storage_path = sidecar(&a.out, ".storage.json");
    let cfg = EngineConfig {
        gamma_scope: a.scope.into(),
        calib_samples: a.calib_samples,
        seed: a.seed,
        ..EngineConfig::default()
    };
    let need_data = || {
        a.data
            .as_deref()
            .ok_or_else(|| CliError::input("--data is required for this mode (calibration split)"))
    };
    let (output, storage, results) = match a.mode {
        ModeArg::Pann => {
            let budget = a.budget.ok_or_else(|| CliError::input("--mode pann requires --budget"))?;
            let b_x = match a.bx {
                Some(b) => b,
                None => optimal_bx(model.layers[0].in_dim(), 1.0, 1.0, budget, a.brange.range())?.0,
            };
            let r = equal_power_r(budget, b_x);
            if r <= 0.0 {
                return Err(pann::Error::InfeasibleBudget {
                    budget,
                    min_feasible: 0.5 * b_x as f64,
                    reason: format!("{b_x}-bit activations leave no additions"),
                }
                .into());
            }
            let calib = load_calib(need_data()?)?;
            let backend = Backend::PannAdd { b_x, r, count_toggles: false };
            let Prepared::Quant(q) = prepare(&model, &calib, &backend, &cfg)? else {
                unreachable!("fixed-point backend yields a quantized model")
            };
            let baseline = baseline_for_budget(budget);
            let results = json!({
                "b_x": b_x,
                "r": r,
                "predicted_power": pann_power(r, b_x),
                "addition_factor": q.addition_factor(),
            });
            let out = json!({
                "format_version": FORMAT_VERSION,
                "mode": "pann",
                "budget": budget,
                "b_x": b_x,
                "r": r,
                "model": q,
            });
            (out, quantized_storage(&q, baseline, b_x, r), results)
        }
        ModeArg::Ruq => {
            let bits = a.bits.ok_or_else(|| CliError::input("--mode ruq requires --bits"))?;
            let calib = load_calib(need_data()?)?;
            let backend = Backend::QuantMul { b_x: bits, b_w: bits };
            let Prepared::Quant(q) = prepare(&model, &calib, &backend, &cfg)? else {
                unreachable!("fixed-point backend yields a quantized model")
            };
            let out = json!({
                "format_version": FORMAT_VERSION,
                "mode": "ruq",
                "bits": bits,
                "model": q,
            });
            let results = json!({ "bits": bits, "predicted_power": unsigned_mac_budget::<f64>(bits) });
            (out, quantized_storage(&q, bits, bits, 1.0), results)
        }
        ModeArg::UnsignedSplit => {
            let split: Vec<SplitLayer<f64>> = model.layers.iter().map(split_layer).collect();
            let structural = split.iter().zip(&model.layers).all(|(s, l)| s.merge() == *l);
            let mut worst = 0.0f64;
            for x in probe_inputs(model.input_dim(), 256, a.seed) {
                let reference = model.forward_float(&x);
                for (u, v) in reference.iter().zip(split_forward(&split, &x)?) {
                    worst = worst.max((u - v).abs() / u.abs().max(1.0));
                }
            }
            if !structural || worst > 1e-9 {
                return Err(CliError::gate(format!(
                    "unsigned split is not equivalent to the source model (merge exact: {structural}, worst relative logit error {worst:e})"
                )));
            }
            let out = json!({
                "format_version": FORMAT_VERSION,
                "mode": "unsigned_split",
                "layers": split,
            });
            let params: usize = model.layers.iter().map(|l| l.in_dim() * l.out_dim()).sum();
            let storage = json!({
                "format_version": FORMAT_VERSION,
                "storage": Value::Null,
                "note": "the split doubles stored parameters but keeps the arithmetic in floating point",
                "parameters_before": params,
                "parameters_after": 2 * params,
            });
            let results = json!({ "equivalence_checked": true, "worst_relative_error": worst });
            (out, storage, results)
        }
    };
    write_json(&a.out, &output)?;
    write_json(&storage_path, &storage)?;
    let m = RunManifest::new("quantize", argv, config_of(a), Some(a.seed));
    finish(m, &[&a.out, &storage_path], results)
}

#[derive(Serialize)]
struct MseRow {
    b: u32,
    #[serde(rename = "P")]
    p: f64,
    b_x_opt: u32,
    mse_ruq: f64,
    mse_pann: f64,
    ratio: f64,
}

impl From<RatioRow<f64>> for MseRow {
    fn from(r: RatioRow<f64>) -> Self {
        MseRow {
            b: r.b,
            p: r.budget_p,
            b_x_opt: r.b_x_opt,
            mse_ruq: r.mse_ruq,
            mse_pann: r.mse_pann,
            ratio: r.ratio,
        }
    }
}

/// Operand statistics used by the simulated curve: standard normal weights
/// and rectified standard normal activations.
pub const GAUSSIAN_MODEL: DistributionModel = DistributionModel::GaussianRelu {
    x_mean: 0.0,
    x_std: 1.0,
    w_std: 1.0,
};

pub fn mse(a: &MseArgs, argv: &[String]) -> Result<(), CliError> {
    let bits = a.bits.values();
    let d = a.d.unwrap_or(1024);
    let rows = match a.dist {
        DistArg::Uniform => ratio_curve::<f64>(d, 1.0, 1.0, &bits)?,
        DistArg::Gaussian => {
            let seed = a.seed.ok_or_else(|| CliError::input("--dist gaussian is simulated and requires --seed"))?;
            monte_carlo_ratio_curve(&GAUSSIAN_MODEL, d, &bits, a.trials, seed)?
        }
    };
    let crossing = crossing_bit(&rows);
    let csv_rows: Vec<MseRow> = rows.into_iter().map(MseRow::from).collect();
    write_csv(&a.out, "mse", &["b", "P", "b_x_opt", "mse_ruq", "mse_pann", "ratio"], &csv_rows)?;
    let model = match a.dist {
        DistArg::Uniform => DistributionModel::Uniform { m_x: 1.0, m_w: 1.0 },
        DistArg::Gaussian => GAUSSIAN_MODEL,
    };
    let m = RunManifest::new("mse", argv, json!({ "args": config_of(a), "d": d, "model": model }), a.seed);
    finish(m, &[&a.out], json!({ "crossing_bit": crossing }))
}

fn eval_inputs(c: &EvalDataArgs) -> Result<(Model, Dataset, Dataset, EngineConfig), CliError> {
    let model = Model::load(&c.model)?;
    let calib = load_calib(&c.data)?;
    let data = Dataset::load(c.data.join(c.split.file_name()))?;
    let cfg = EngineConfig {
        gamma_scope: c.scope.into(),
        acc_width: c.acc_width,
        calib_samples: Some(c.calib_samples),
        seed: c.seed,
    };
    Ok((model, calib, data, cfg))
}

pub fn budget_search(a: &BudgetSearchArgs, argv: &[String]) -> Result<(), CliError> {
    let c = &a.common;
    let (model, calib, data, cfg) = eval_inputs(c)?;
    let res = run_budget_search(&model, &calib, &data, c.budget, c.brange.range(), &cfg, true)?;
    let out = json!({
        "format_version": FORMAT_VERSION,
        "split": c.split,
        "engine": cfg,
        "budget_p": res.budget_p,
        "best": res.best,
        "rows": res.rows,
        "omitted": res.omitted,
    });
    write_json(&c.out, &out)?;
    let m = RunManifest::new("budget-search", argv, config_of(a), Some(c.seed));
    finish(
        m,
        &[&c.out],
        json!({ "b_x": res.best.b_x, "r": res.best.r, "accuracy": res.best.accuracy }),
    )
}

pub fn tradeoff(a: &TradeoffArgs, argv: &[String]) -> Result<(), CliError> {
    let c = &a.common;
    if a.baseline_bits == 0 {
        return Err(CliError::input("--baseline-bits must be positive"));
    }
    let (model, calib, data, cfg) = eval_inputs(c)?;
    let rows = tradeoff_table(&model, &calib, &data, c.budget, a.baseline_bits, c.brange.range(), &cfg)?;
    write_csv(
        &c.out,
        "tradeoff",
        &["b_x", "latency", "b_r", "act_mem", "weight_mem", "accuracy"],
        &rows,
    )?;
    let m = RunManifest::new("tradeoff", argv, config_of(a), Some(c.seed));
    finish(m, &[&c.out], json!({ "rows": rows.len() }))
}
