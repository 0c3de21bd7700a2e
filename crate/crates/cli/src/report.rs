//! Report builders for each subcommand and their text/JSON/CSV renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context};
use edge_mapper_core::aiecost::is_under_utilized;
use edge_mapper_core::exec::{verify_plan_with_fault, Fault, VerifyReport};
use edge_mapper_core::lare::{lare_sweep, LareRow, LARE_CSV_HEADER};
use edge_mapper_core::model::{
    CalibrationTable, DeviceSpec, Dims3, Domain, LayerSpec, NetworkSpec, PlanFlag, Source, Strategy, TilingPlan,
};
use edge_mapper_core::planner::{
    crossing_sensitivity, default_pins, exhaustive_layer_search, hybrid_partition, partition_costs, plan_layer,
    plan_network, validate_plan, CellStatus, LayerCosts, NetworkPlan, PartitionResult, PlanConstraints, SearchBounds,
    SensitivityRow, Violation, DEFAULT_SEARCH_CAP,
};
use edge_mapper_core::plcost::{min_feasible_rf, pl_network_interval, pl_point, prorated_budget};
use edge_mapper_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::{parse_budget, parse_dims, parse_pins, parse_shape, require_network, CommonArgs, Format, Inputs, Output};
use crate::{EXIT_ERROR, EXIT_OK, EXIT_UNMET};

fn tag<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).unwrap_or_default();
    s.push('\n');
    s
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().context("flushing csv")?;
    Ok(String::from_utf8(bytes)?)
}

fn shape(d: Dims3) -> String {
    format!("({},{},{})", d.m, d.k, d.n)
}

fn met(flag: Option<bool>) -> &'static str {
    match flag {
        Some(true) => "met",
        Some(false) => "unmet",
        None => "n/a",
    }
}

// ---------------------------------------------------------------- plan

/// All-PL build at the smallest reuse factor fitting each layer's share of
/// the device budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlBaseline {
    pub rfs: Vec<u64>,
    pub sources: Vec<Source>,
    pub interval_cycles: u64,
    pub throughput_hz: f64,
}

#[derive(Debug, Clone)]
pub struct PlanReport {
    pub device: String,
    pub network: NetworkSpec,
    pub aie: NetworkPlan,
    /// `Err` holds the reason the network does not fit the PL.
    pub pl: Result<PlBaseline, String>,
    pub target_hz: Option<f64>,
    pub aie_met: Option<bool>,
    pub pl_met: Option<bool>,
}

pub fn pl_baseline(
    network: &NetworkSpec,
    device: &DeviceSpec,
    strategy: Strategy,
    calib: Option<&CalibrationTable>,
) -> edge_mapper_core::Result<PlBaseline> {
    let mut rfs = Vec::with_capacity(network.layers.len());
    let mut sources = Vec::with_capacity(network.layers.len());
    for layer in &network.layers {
        let share = prorated_budget(&device.pl_resources, layer, network);
        let rf = min_feasible_rf(layer, &share, strategy, &device.pl_model, calib)?;
        sources.push(pl_point(layer, rf, strategy, &device.pl_model, calib)?.source);
        rfs.push(rf);
    }
    let interval_cycles = pl_network_interval(network, &rfs, strategy, &device.pl_model, calib)?;
    Ok(PlBaseline {
        rfs,
        sources,
        interval_cycles,
        throughput_hz: device.pl_clock_hz / interval_cycles.max(1) as f64,
    })
}

pub fn plan_report(
    network: &NetworkSpec,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    strategy: Strategy,
    calib: Option<&CalibrationTable>,
) -> anyhow::Result<PlanReport> {
    let aie = plan_network(network, device, constraints, calib)?;
    let pl = match pl_baseline(network, device, strategy, calib) {
        Ok(b) => Ok(b),
        Err(e @ Error::ResourceWall { .. }) => Err(e.to_string()),
        Err(e) => return Err(e.into()),
    };
    let target_hz = constraints.target_throughput_hz;
    let aie_met = target_hz.map(|t| aie.throughput.throughput_hz >= t);
    let pl_met = target_hz.map(|t| pl.as_ref().is_ok_and(|b| b.throughput_hz >= t));
    Ok(PlanReport {
        device: device.name.clone(),
        network: network.clone(),
        aie,
        pl,
        target_hz,
        aie_met,
        pl_met,
    })
}

fn layer_source(plan: &NetworkPlan, i: usize) -> Source {
    plan.choices[i].estimate.latency.source
}

const PLAN_CSV_HEADER: [&str; 21] = [
    "layer",
    "m",
    "k",
    "n",
    "domain",
    "p_k",
    "p_n",
    "q_k",
    "q_n",
    "api_m",
    "api_k",
    "api_n",
    "r_m",
    "r_k",
    "r_n",
    "band",
    "col_first",
    "col_last",
    "latency_cycles",
    "source",
    "flags",
];

fn flag_list(flags: &[PlanFlag]) -> String {
    flags.iter().map(tag).collect::<Vec<_>>().join(";")
}

fn plan_csv(report: &PlanReport) -> anyhow::Result<String> {
    let rows = report.aie.plan.layers.iter().enumerate().map(|(i, l)| {
        let a = l.aie.as_ref();
        let f =
            |g: &dyn Fn(&edge_mapper_core::model::AieMapping) -> u64| a.map(|a| g(a).to_string()).unwrap_or_default();
        vec![
            l.name.clone(),
            l.m.to_string(),
            l.k.to_string(),
            l.n.to_string(),
            l.domain.to_string(),
            f(&|a| a.p_k),
            f(&|a| a.p_n),
            f(&|a| a.q_k),
            f(&|a| a.q_n),
            f(&|a| a.api_shape.m),
            f(&|a| a.api_shape.k),
            f(&|a| a.api_shape.n),
            f(&|a| a.r.m),
            f(&|a| a.r.k),
            f(&|a| a.r.n),
            f(&|a| a.band),
            f(&|a| a.column_span[0]),
            f(&|a| a.column_span[1]),
            format!("{}", l.latency_cycles),
            layer_source(&report.aie, i).to_string(),
            flag_list(&l.flags),
        ]
    });
    csv_string(&PLAN_CSV_HEADER, rows)
}

pub fn plan_text(report: &PlanReport) -> String {
    let plan = &report.aie.plan;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "network {}: {} layers, batch {}, device {}",
        plan.network,
        plan.layers.len(),
        plan.batch,
        report.device
    );
    let _ = writeln!(
        s,
        "{:<10} {:<16} {:>7} {:<9} {:<9} {:>4} {:>7} {:>10} {:<10} flags",
        "layer", "shape", "p_k*p_n", "api", "r", "band", "cols", "cycles", "source"
    );
    for (i, l) in plan.layers.iter().enumerate() {
        let Some(a) = &l.aie else { continue };
        let _ = writeln!(
            s,
            "{:<10} {:<16} {:>7} {:<9} {:<9} {:>4} {:>7} {:>10.1} {:<10} {}",
            l.name,
            format!("({},{},{})", l.m, l.k, l.n),
            format!("{}x{}", a.p_k, a.p_n),
            shape(a.api_shape),
            shape(a.r),
            a.band,
            format!("{}-{}", a.column_span[0], a.column_span[1]),
            l.latency_cycles,
            layer_source(&report.aie, i),
            flag_list(&l.flags),
        );
    }
    let t = &report.aie.throughput;
    let _ = writeln!(s, "bands: {}", plan.bands);
    let _ = writeln!(
        s,
        "aie: interval {:.3} ns/inference, throughput {:.0} inferences/s ({:.3} MHz), crossings {}, penalty {:.3}",
        t.interval_seconds * 1e9,
        t.throughput_hz,
        t.mhz(),
        t.crossings,
        t.penalty_factor
    );
    match &report.pl {
        Ok(b) => {
            let src = if b.sources.contains(&Source::Analytic) {
                "analytic"
            } else {
                "calibrated"
            };
            let rfs: Vec<String> = b.rfs.iter().map(u64::to_string).collect();
            let _ = writeln!(
                s,
                "pl: reuse factors [{}], interval {} cycles, throughput {:.0} inferences/s ({:.3} MHz), source {}",
                rfs.join(", "),
                b.interval_cycles,
                b.throughput_hz,
                b.throughput_hz / 1e6,
                src
            );
        }
        Err(reason) => {
            let _ = writeln!(s, "pl: infeasible ({reason})");
        }
    }
    match report.target_hz {
        Some(t) => {
            let _ = writeln!(
                s,
                "target {:.3} MHz: aie target {}, pl target {}",
                t / 1e6,
                met(report.aie_met),
                met(report.pl_met)
            );
        }
        None => {
            let _ = writeln!(s, "target: none given");
        }
    }
    if plan.bands > 1 {
        let _ = writeln!(s, "note: band contention factors are analytic (uncalibrated)");
    }
    s
}

pub(crate) fn cmd_plan(common: &CommonArgs, inputs: &Inputs) -> anyhow::Result<Output> {
    let network = require_network(inputs)?;
    let target = common.target_hz(Some(network));
    let constraints = common.constraints(target);
    let report = plan_report(
        network,
        &inputs.device,
        &constraints,
        common.strategy,
        inputs.calib.as_ref(),
    )?;
    let summary = plan_text(&report);
    let plan_json = format!("{}\n", report.aie.plan.to_json());
    let csv = plan_csv(&report)?;
    let stdout = match common.format {
        Format::Text => summary.clone(),
        Format::Json => plan_json.clone(),
        Format::Csv => csv.clone(),
    };
    let code = if report.aie_met == Some(false) {
        EXIT_UNMET
    } else {
        EXIT_OK
    };
    Ok(Output {
        stdout,
        files: vec![
            ("plan.json".into(), plan_json),
            ("plan_summary.txt".into(), summary),
            ("plan_layers.csv".into(), csv),
        ],
        code,
    })
}

// ---------------------------------------------------------------- lare

pub fn lare_report(
    shapes: &[(u64, u64)],
    budgets: &[edge_mapper_core::model::ResourceVector],
    batch: u64,
    strategy: Strategy,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    calib: Option<&CalibrationTable>,
) -> anyhow::Result<Vec<LareRow>> {
    Ok(lare_sweep(
        shapes,
        budgets,
        batch,
        strategy,
        device,
        constraints,
        calib,
    )?)
}

fn lare_text(rows: &[LareRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6} {:>6} {:>10} {:>8} {:>12} {:<11} {:>12} {:<10} {:<10} {:<10}",
        "k", "n", "aie_cycles", "rf_eq", "lare_scalar", "range", "budget", "verdict", "pl_source", "aie_source"
    );
    for r in rows {
        let res = &r.result;
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>10} {:>8.3} {:>12.3} {:<11} {:>12} {:<10} {:<10} {:<10}",
            res.k,
            res.n,
            res.aie_cycles,
            res.rf_eq,
            res.lare_scalar,
            res.range,
            r.budget_scalar.map_or_else(|| "-".to_string(), |b| format!("{b:.3}")),
            r.verdict.map_or_else(|| "-".to_string(), |v| v.to_string()),
            res.pl_source.map_or_else(|| "mixed".to_string(), |p| p.to_string()),
            res.aie_source,
        );
    }
    s
}

pub(crate) fn cmd_lare(
    common: &CommonArgs,
    inputs: &Inputs,
    shapes: &[String],
    budgets: &[String],
    batch: Option<u64>,
) -> anyhow::Result<Output> {
    let shapes: Vec<(u64, u64)> = if shapes.is_empty() {
        let network = inputs.network.as_ref().context("lare needs --shapes or --network")?;
        let mut seen = Vec::new();
        for l in &network.layers {
            if !seen.contains(&(l.k, l.n)) {
                seen.push((l.k, l.n));
            }
        }
        seen
    } else {
        shapes.iter().map(|s| parse_shape(s)).collect::<anyhow::Result<_>>()?
    };
    let budgets = budgets
        .iter()
        .map(|b| parse_budget(b))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let batch = batch
        .or_else(|| inputs.network.as_ref().map(NetworkSpec::batch))
        .unwrap_or(8);
    if batch == 0 {
        bail!("--batch must be positive");
    }
    let constraints = common.constraints(None);
    let rows = lare_report(
        &shapes,
        &budgets,
        batch,
        common.strategy,
        &inputs.device,
        &constraints,
        inputs.calib.as_ref(),
    )?;
    let csv = csv_string(&LARE_CSV_HEADER, rows.iter().map(LareRow::csv_record))?;
    let stdout = match common.format {
        Format::Text => lare_text(&rows),
        Format::Json => pretty(&serde_json::to_value(&rows)?),
        Format::Csv => csv.clone(),
    };
    Ok(Output {
        stdout,
        files: vec![("lare.csv".into(), csv)],
        code: EXIT_OK,
    })
}

// ---------------------------------------------------------------- partition

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub network: String,
    pub pins: Vec<Option<Domain>>,
    pub costs: Vec<LayerCosts>,
    pub result: PartitionResult,
    pub sensitivity: Vec<SensitivityRow>,
}

/// AIE costs for the partitioner: the whole-network plan when it exists,
/// else each layer planned alone (layers with no tiling get no AIE cost).
fn aie_costs(
    network: &NetworkSpec,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    strategy: Strategy,
    calib: Option<&CalibrationTable>,
) -> anyhow::Result<Vec<LayerCosts>> {
    if let Ok(plan) = plan_network(network, device, constraints, calib) {
        return Ok(partition_costs(
            network,
            device,
            Some(&plan),
            &device.pl_resources,
            strategy,
            calib,
        )?);
    }
    let mut costs = partition_costs(network, device, None, &device.pl_resources, strategy, calib)?;
    for (layer, cost) in network.layers.iter().zip(costs.iter_mut()) {
        if let Ok(choice) = plan_layer(layer, device, constraints, calib) {
            cost.aie_cycles = Some(choice.cycles() as f64);
            cost.aie_source = Some(choice.estimate.latency.source);
        }
    }
    Ok(costs)
}

pub fn partition_report(
    network: &NetworkSpec,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    strategy: Strategy,
    rho: f64,
    pins: Option<Vec<Option<Domain>>>,
    calib: Option<&CalibrationTable>,
) -> anyhow::Result<PartitionReport> {
    let pins = pins.unwrap_or_else(|| default_pins(network.layers.len()));
    let costs = aie_costs(network, device, constraints, strategy, calib)?;
    let result = hybrid_partition(network, device, &costs, rho, Some(&pins))?;
    let sensitivity = crossing_sensitivity(result.base_interval_seconds, rho, result.max_crossings);
    Ok(PartitionReport {
        network: network.name.clone(),
        pins,
        costs,
        result,
        sensitivity,
    })
}

const SENSITIVITY_HEADER: [&str; 4] = ["crossings", "penalty_factor", "interval_seconds", "throughput_hz"];

fn sensitivity_csv(rows: &[SensitivityRow]) -> anyhow::Result<String> {
    csv_string(
        &SENSITIVITY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.crossings.to_string(),
                format!("{}", r.penalty_factor),
                format!("{:e}", r.interval_seconds),
                format!("{}", 1.0 / r.interval_seconds),
            ]
        }),
    )
}

const PARTITION_LAYER_HEADER: [&str; 9] = [
    "layer",
    "domain",
    "pin",
    "pl_rf",
    "pl_cycles",
    "pl_source",
    "aie_cycles",
    "aie_source",
    "stage_seconds",
];

fn partition_layers_csv(network: &NetworkSpec, report: &PartitionReport) -> anyhow::Result<String> {
    let rows = network.layers.iter().enumerate().map(|(i, l)| {
        let c = &report.costs[i];
        vec![
            l.name.clone(),
            report.result.domains[i].to_string(),
            report.pins[i].map_or_else(|| "-".to_string(), |d| d.to_string()),
            c.pl.map(|p| p.rf.to_string()).unwrap_or_default(),
            c.pl.map(|p| p.interval_cycles.to_string()).unwrap_or_default(),
            c.pl.map(|p| p.source.to_string()).unwrap_or_default(),
            c.aie_cycles.map(|x| format!("{x}")).unwrap_or_default(),
            c.aie_source.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:e}", report.result.stage_seconds[i]),
        ]
    });
    csv_string(&PARTITION_LAYER_HEADER, rows)
}

fn partition_text(network: &NetworkSpec, report: &PartitionReport) -> String {
    let r = &report.result;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "network {}: {} layers, rho {}",
        report.network,
        network.layers.len(),
        r.rho
    );
    let _ = writeln!(
        s,
        "{:<10} {:<6} {:<4} {:>6} {:>10} {:>10} {:>12} {:<10}",
        "layer", "domain", "pin", "pl_rf", "pl_cycles", "aie_cycles", "stage_ns", "source"
    );
    for (i, l) in network.layers.iter().enumerate() {
        let c = &report.costs[i];
        let source = match r.domains[i] {
            Domain::Pl => c.pl.map(|p| p.source),
            Domain::Aie => c.aie_source,
        };
        let _ = writeln!(
            s,
            "{:<10} {:<6} {:<4} {:>6} {:>10} {:>10} {:>12.3} {:<10}",
            l.name,
            r.domains[i],
            report.pins[i].map_or_else(|| "-".to_string(), |d| d.to_string()),
            c.pl.map_or_else(|| "-".to_string(), |p| p.rf.to_string()),
            c.pl.map_or_else(|| "-".to_string(), |p| p.interval_cycles.to_string()),
            c.aie_cycles.map_or_else(|| "-".to_string(), |x| format!("{x:.1}")),
            r.stage_seconds[i] * 1e9,
            source.map_or_else(|| "-".to_string(), |s| s.to_string()),
        );
    }
    let _ = writeln!(
        s,
        "crossings {}, penalty {:.3}, interval {:.3} ns (base {:.3} ns), throughput {:.0} inferences/s ({:.3} MHz)",
        r.crossings,
        r.penalty_factor,
        r.penalized_interval_seconds * 1e9,
        r.base_interval_seconds * 1e9,
        r.throughput_hz,
        r.throughput_hz / 1e6
    );
    let _ = writeln!(s, "crossing sensitivity:");
    let _ = writeln!(s, "{:>9} {:>8} {:>14}", "crossings", "penalty", "interval_ns");
    for row in &report.sensitivity {
        let _ = writeln!(
            s,
            "{:>9} {:>8.3} {:>14.3}",
            row.crossings,
            row.penalty_factor,
            row.interval_seconds * 1e9
        );
    }
    s
}

pub(crate) fn cmd_partition(common: &CommonArgs, inputs: &Inputs, pins: Option<&str>) -> anyhow::Result<Output> {
    let network = require_network(inputs)?;
    let pins = pins.map(|p| parse_pins(p, network.layers.len())).transpose()?;
    let constraints = common.constraints(None);
    let report = partition_report(
        network,
        &inputs.device,
        &constraints,
        common.strategy,
        common.rho,
        pins,
        inputs.calib.as_ref(),
    )?;
    let json = pretty(&serde_json::to_value(&report)?);
    let sens = sensitivity_csv(&report.sensitivity)?;
    let layers = partition_layers_csv(network, &report)?;
    let stdout = match common.format {
        Format::Text => partition_text(network, &report),
        Format::Json => json.clone(),
        Format::Csv => sens.clone(),
    };
    Ok(Output {
        stdout,
        files: vec![
            ("partition.json".into(), json),
            ("partition_sensitivity.csv".into(), sens),
            ("partition_layers.csv".into(), layers),
        ],
        code: EXIT_OK,
    })
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone)]
pub struct ValidateReport {
    pub violations: Vec<Violation>,
    pub verify: VerifyReport,
}

impl ValidateReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.verify.passed()
    }
}

pub fn validate_report(
    plan: &TilingPlan,
    network: Option<&NetworkSpec>,
    device: &DeviceSpec,
    trials: u64,
    seed: u64,
    inject_rk_fault: bool,
) -> ValidateReport {
    let violations = validate_plan(plan, network, device).err().unwrap_or_default();
    let fault = inject_rk_fault.then_some(Fault::RkOffByOne);
    let verify = verify_plan_with_fault(plan, device.unroll, trials, seed, fault);
    ValidateReport { violations, verify }
}

fn validate_text(r: &ValidateReport) -> String {
    let mut s = String::new();
    for v in &r.violations {
        let _ = writeln!(s, "violation {v}");
    }
    for f in &r.verify.failures {
        let _ = writeln!(s, "failure {f}");
    }
    for m in &r.verify.mismatches {
        let _ = writeln!(
            s,
            "mismatch layer {} trial {} at ({}, {}): expected {}, got {}",
            m.layer, m.trial, m.row, m.col, m.expected, m.actual
        );
    }
    for w in &r.verify.warnings {
        let _ = writeln!(s, "warning {w}");
    }
    let _ = writeln!(
        s,
        "{} violations, {} layers x {} trials (seed {}): {}",
        r.violations.len(),
        r.verify.layers_checked,
        r.verify.trials,
        r.verify.seed,
        if r.passed() { "pass" } else { "FAIL" }
    );
    s
}

pub(crate) fn cmd_validate(
    common: &CommonArgs,
    inputs: &Inputs,
    plan: &TilingPlan,
    trials: u64,
    inject_rk_fault: bool,
) -> anyhow::Result<Output> {
    let report = validate_report(
        plan,
        inputs.network.as_ref(),
        &inputs.device,
        trials,
        common.seed,
        inject_rk_fault,
    );
    let json = pretty(&json!({
        "passed": report.passed(),
        "violations": report.violations,
        "verify": report.verify,
    }));
    let text = validate_text(&report);
    let stdout = match common.format {
        Format::Json => json.clone(),
        Format::Text | Format::Csv => text.clone(),
    };
    Ok(Output {
        stdout,
        files: vec![("validate.json".into(), json)],
        code: if report.passed() { EXIT_OK } else { EXIT_ERROR },
    })
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p_k: u64,
    pub p_n: u64,
    pub tiles: u64,
    pub api_shape: Dims3,
    pub per_tile: Dims3,
    pub cycles: u64,
    pub tile_cycles: u64,
    pub cascade_cycles: u64,
    pub broadcast_cycles: u64,
    pub bound: String,
    pub source: Source,
    /// Per-tile workload below the minimum in some dimension.
    pub under_utilized: bool,
    /// A split dimension falls below the minimum, so the planner would skip it.
    pub below_split_minimum: bool,
}

/// Cells with equal `p_k * p_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalGroup {
    pub tiles: u64,
    pub cells: usize,
    pub best_p_k: u64,
    pub best_p_n: u64,
    pub best_cycles: u64,
    pub worst_cycles: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub layer: LayerSpec,
    pub grid: u64,
    pub rows: Vec<SweepRow>,
    /// Cells with no legal API tiling, as (p_k, p_n, reason).
    pub illegal: Vec<(u64, u64, CellStatus)>,
    pub diagonals: Vec<DiagonalGroup>,
}

/// Latency over `1..=grid` x `1..=grid`. Cells below the minimum per-tile
/// workload are costed and flagged rather than dropped.
pub fn sweep_report(
    layer: &LayerSpec,
    grid: u64,
    device: &DeviceSpec,
    base: &PlanConstraints,
    calib: Option<&CalibrationTable>,
) -> anyhow::Result<SweepReport> {
    if grid == 0 {
        bail!("--grid must be positive");
    }
    let min = base.min_per_tile_workload;
    let constraints = PlanConstraints {
        max_tiles_per_layer: grid * grid,
        min_per_tile_workload: Dims3::new(1, 1, 1),
        objective: Default::default(),
        target_throughput_hz: None,
        ..base.clone()
    };
    let bounds = SearchBounds {
        max_p_k: grid,
        max_p_n: grid,
        cap: DEFAULT_SEARCH_CAP,
    };
    let search = exhaustive_layer_search(layer, device, bounds, &constraints, calib)?;
    let mut cells: BTreeMap<(u64, u64), Vec<_>> = BTreeMap::new();
    for cell in &search.table {
        cells.entry((cell.p_k, cell.p_n)).or_default().push(cell);
    }
    let mut rows = Vec::new();
    let mut illegal = Vec::new();
    for p_n in 1..=grid {
        for p_k in 1..=grid {
            let group = cells.get(&(p_k, p_n)).map(Vec::as_slice).unwrap_or_default();
            // Cheapest legal shape; device shape order breaks ties.
            let best = group
                .iter()
                .filter_map(|c| c.estimate.as_ref().filter(|_| c.status == CellStatus::Legal))
                .enumerate()
                .min_by_key(|(i, e)| (e.latency.cycles, *i))
                .map(|(_, e)| e);
            match best {
                Some(e) => {
                    let below_split_minimum = (p_k > 1 && e.per_tile.k < min.k) || (p_n > 1 && e.per_tile.n < min.n);
                    rows.push(SweepRow {
                        p_k,
                        p_n,
                        tiles: p_k * p_n,
                        api_shape: e.tiling.api_shape,
                        per_tile: e.per_tile,
                        cycles: e.latency.cycles,
                        tile_cycles: e.tile_cycles,
                        cascade_cycles: e.cascade_cycles,
                        broadcast_cycles: e.broadcast_cycles,
                        bound: tag(&e.latency.bound),
                        source: e.latency.source,
                        under_utilized: is_under_utilized(e.per_tile, min),
                        below_split_minimum,
                    });
                }
                None => {
                    let reason = group.first().map_or(CellStatus::OffArray, |c| c.status);
                    illegal.push((p_k, p_n, reason));
                }
            }
        }
    }
    let mut by_tiles: BTreeMap<u64, Vec<&SweepRow>> = BTreeMap::new();
    for r in &rows {
        by_tiles.entry(r.tiles).or_default().push(r);
    }
    let diagonals = by_tiles
        .into_iter()
        .map(|(tiles, group)| {
            let best = group
                .iter()
                .min_by_key(|r| (r.cycles, std::cmp::Reverse(r.p_k)))
                .expect("nonempty group");
            DiagonalGroup {
                tiles,
                cells: group.len(),
                best_p_k: best.p_k,
                best_p_n: best.p_n,
                best_cycles: best.cycles,
                worst_cycles: group.iter().map(|r| r.cycles).max().unwrap_or(0),
            }
        })
        .collect();
    Ok(SweepReport {
        layer: layer.clone(),
        grid,
        rows,
        illegal,
        diagonals,
    })
}

const SWEEP_HEADER: [&str; 17] = [
    "p_k",
    "p_n",
    "tiles",
    "api_m",
    "api_k",
    "api_n",
    "q_m",
    "q_k",
    "q_n",
    "cycles",
    "tile_cycles",
    "cascade_cycles",
    "broadcast_cycles",
    "bound",
    "source",
    "under_utilized",
    "below_split_minimum",
];

fn sweep_csv(r: &SweepReport) -> anyhow::Result<String> {
    csv_string(
        &SWEEP_HEADER,
        r.rows.iter().map(|c| {
            vec![
                c.p_k.to_string(),
                c.p_n.to_string(),
                c.tiles.to_string(),
                c.api_shape.m.to_string(),
                c.api_shape.k.to_string(),
                c.api_shape.n.to_string(),
                c.per_tile.m.to_string(),
                c.per_tile.k.to_string(),
                c.per_tile.n.to_string(),
                c.cycles.to_string(),
                c.tile_cycles.to_string(),
                c.cascade_cycles.to_string(),
                c.broadcast_cycles.to_string(),
                c.bound.clone(),
                c.source.to_string(),
                c.under_utilized.to_string(),
                c.below_split_minimum.to_string(),
            ]
        }),
    )
}

fn diagonals_csv(r: &SweepReport) -> anyhow::Result<String> {
    csv_string(
        &["tiles", "cells", "best_p_k", "best_p_n", "best_cycles", "worst_cycles"],
        r.diagonals.iter().map(|d| {
            vec![
                d.tiles.to_string(),
                d.cells.to_string(),
                d.best_p_k.to_string(),
                d.best_p_n.to_string(),
                d.best_cycles.to_string(),
                d.worst_cycles.to_string(),
            ]
        }),
    )
}

fn sweep_text(r: &SweepReport) -> String {
    let l = &r.layer;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "layer {} ({},{},{}): {} of {} cells legal, cycles by p_n (rows) x p_k (columns)",
        l.name,
        l.m,
        l.k,
        l.n,
        r.rows.len(),
        r.grid * r.grid
    );
    let _ = write!(s, "{:>5}", "");
    for p_k in 1..=r.grid {
        let _ = write!(s, " {:>9}", format!("p_k={p_k}"));
    }
    s.push('\n');
    for p_n in 1..=r.grid {
        let _ = write!(s, "{:>5}", format!("p_n={p_n}"));
        for p_k in 1..=r.grid {
            let cell = r.rows.iter().find(|c| c.p_k == p_k && c.p_n == p_n);
            let text = match cell {
                Some(c) if c.under_utilized => format!("{}*", c.cycles),
                Some(c) => c.cycles.to_string(),
                None => "-".to_string(),
            };
            let _ = write!(s, " {text:>9}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "* under-utilized tile; - no legal tiling");
    let analytic = r.rows.iter().filter(|c| c.source == Source::Analytic).count();
    let _ = writeln!(
        s,
        "sources: {} analytic, {} calibrated",
        analytic,
        r.rows.len() - analytic
    );
    let _ = writeln!(s, "constant-parallelism groups:");
    let _ = writeln!(
        s,
        "{:>6} {:>6} {:>10} {:>12} {:>12}",
        "tiles", "cells", "best", "best_cycles", "worst_cycles"
    );
    for d in &r.diagonals {
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>10} {:>12} {:>12}",
            d.tiles,
            d.cells,
            format!("{}x{}", d.best_p_k, d.best_p_n),
            d.best_cycles,
            d.worst_cycles
        );
    }
    s
}

pub(crate) fn cmd_sweep(
    common: &CommonArgs,
    inputs: &Inputs,
    layer: Option<&str>,
    layer_index: usize,
    grid: u64,
) -> anyhow::Result<Output> {
    let layer = match layer {
        Some(text) => {
            let d = parse_dims(text)?;
            LayerSpec::new(format!("{}x{}x{}", d.m, d.k, d.n), d.m, d.k, d.n)?
        }
        None => {
            let network = inputs.network.as_ref().context("sweep needs --layer or --network")?;
            let l = network
                .layers
                .get(layer_index)
                .with_context(|| format!("network has no layer {layer_index}"))?;
            l.clone()
        }
    };
    let report = sweep_report(
        &layer,
        grid,
        &inputs.device,
        &common.constraints(None),
        inputs.calib.as_ref(),
    )?;
    let csv = sweep_csv(&report)?;
    let diag = diagonals_csv(&report)?;
    let stdout = match common.format {
        Format::Text => sweep_text(&report),
        Format::Json => pretty(&serde_json::to_value(&report)?),
        Format::Csv => csv.clone(),
    };
    Ok(Output {
        stdout,
        files: vec![("sweep.csv".into(), csv), ("sweep_diagonals.csv".into(), diag)],
        code: EXIT_OK,
    })
}
