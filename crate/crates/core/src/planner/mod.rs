//! Tiling search, band layout and PL/AIE partitioning.
//!
//! Candidate order is ascending tile count, then descending `p_k`, then API
//! shapes in device order. Cost always decides; the order only breaks ties.

mod layout;
mod partition;
mod search;
mod validate;

use serde::{Deserialize, Serialize};

pub use layout::{band_layout, BandLayout, Placement};
pub use partition::{
    crossing_sensitivity, default_pins, hybrid_partition, partition_costs, LayerCosts, PartitionResult, PlStage,
    SensitivityRow, MAX_SENSITIVITY_CROSSINGS,
};
pub use search::{exhaustive_layer_search, CellStatus, ExhaustiveResult, SearchBounds, SearchCell, DEFAULT_SEARCH_CAP};
pub use validate::{validate_plan, Violation};

use crate::aiecost::{
    enumerate_api_tilings, is_under_utilized, memory_feasible, pad_workload, plan_throughput, spatial_latency,
    stage_seconds, ApiTiling, SpatialEstimate, Throughput, DEFAULT_MIN_TILE_WORKLOAD,
};
use crate::error::{Error, Result};
use crate::model::{
    AieMapping, CalibrationTable, DeviceSpec, Dims3, Domain, LayerPlan, LayerSpec, NetworkSpec, PlanFlag, Source,
    TilingPlan, DEFAULT_CROSSING_RHO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    MinLatency,
    /// Fewest tiles whose interval meets `target_throughput_hz`.
    MinTilesMeetingTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConstraints {
    pub max_tiles_per_layer: u64,
    pub allow_multi_band: bool,
    pub min_per_tile_workload: Dims3,
    pub api_shape_override: Option<Dims3>,
    /// Restrict the spatial splits considered, as `(p_k, p_n)` pairs.
    pub spatial_override: Option<Vec<(u64, u64)>>,
    pub objective: Objective,
    pub target_throughput_hz: Option<f64>,
}

impl Default for PlanConstraints {
    fn default() -> Self {
        Self {
            max_tiles_per_layer: 32,
            allow_multi_band: false,
            min_per_tile_workload: DEFAULT_MIN_TILE_WORKLOAD,
            api_shape_override: None,
            spatial_override: None,
            objective: Objective::MinLatency,
            target_throughput_hz: None,
        }
    }
}

impl PlanConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.max_tiles_per_layer == 0 {
            return Err(Error::invalid("max_tiles_per_layer must be positive"));
        }
        if !self.min_per_tile_workload.all_positive() {
            return Err(Error::invalid("min_per_tile_workload entries must be positive"));
        }
        if let Some(t) = self.target_throughput_hz {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::invalid(format!("target throughput {t} must be positive")));
            }
        }
        if self.objective == Objective::MinTilesMeetingTarget && self.target_throughput_hz.is_none() {
            return Err(Error::invalid(
                "objective min_tiles_meeting_target needs a target throughput",
            ));
        }
        Ok(())
    }

    fn allows_shape(&self, shape: Dims3) -> bool {
        self.api_shape_override.is_none_or(|s| s == shape)
    }

    fn allows_split(&self, p_k: u64, p_n: u64) -> bool {
        self.spatial_override
            .as_ref()
            .is_none_or(|list| list.contains(&(p_k, p_n)))
    }

    /// A split is excluded when it divides a dimension below the minimum.
    /// Unsplit dimensions are kept: a small layer still needs one tile.
    fn split_too_fine(&self, p_k: u64, p_n: u64, per_tile: Dims3) -> bool {
        (p_k > 1 && per_tile.k < self.min_per_tile_workload.k) || (p_n > 1 && per_tile.n < self.min_per_tile_workload.n)
    }

    /// Largest per-batch cycle count meeting the target, if there is one.
    fn target_cycles(&self, batch: u64, device: &DeviceSpec) -> Option<f64> {
        self.target_throughput_hz
            .map(|hz| batch as f64 * device.aie_clock_hz / hz)
    }
}

/// One legal spatial plus API tiling of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub p_k: u64,
    pub p_n: u64,
    pub tiling: ApiTiling,
    pub padded: Dims3,
    pub per_tile: Dims3,
}

impl Candidate {
    pub fn tiles(&self) -> u64 {
        self.p_k * self.p_n
    }
}

/// Legal candidates in the deterministic tie-break order.
pub fn candidate_tilings(layer: &LayerSpec, device: &DeviceSpec, constraints: &PlanConstraints) -> Vec<Candidate> {
    let mut out = Vec::new();
    for tiles in 1..=constraints.max_tiles_per_layer {
        for p_k in (1..=tiles).rev().filter(|p| tiles % p == 0) {
            let p_n = tiles / p_k;
            if p_k > device.usable_width() || p_n > device.rows || !constraints.allows_split(p_k, p_n) {
                continue;
            }
            for &shape in &device.legal_api_shapes {
                if !constraints.allows_shape(shape) {
                    continue;
                }
                let Some(pw) = pad_workload(layer, p_k, p_n, shape, device.unroll) else {
                    continue;
                };
                if constraints.split_too_fine(p_k, p_n, pw.per_tile) {
                    continue;
                }
                if !memory_feasible(pw.per_tile.k, pw.per_tile.n, pw.per_tile.m, layer.dtype, device).0 {
                    continue;
                }
                let tiling = enumerate_api_tilings(pw.per_tile, device)
                    .into_iter()
                    .find(|t| t.api_shape == shape);
                if let Some(tiling) = tiling {
                    out.push(Candidate {
                        p_k,
                        p_n,
                        tiling,
                        padded: pw.padded,
                        per_tile: pw.per_tile,
                    });
                }
            }
        }
    }
    out
}

/// A costed candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerChoice {
    pub candidate: Candidate,
    pub estimate: SpatialEstimate,
}

impl LayerChoice {
    pub fn cycles(&self) -> u64 {
        self.estimate.latency.cycles
    }
}

/// Ranking key shared by the planner and the exhaustive search; smaller wins.
pub(crate) fn objective_key(
    cycles: u64,
    tiles: u64,
    constraints: &PlanConstraints,
    target_cycles: Option<f64>,
) -> (u8, u64, u64) {
    match (constraints.objective, target_cycles) {
        (Objective::MinTilesMeetingTarget, Some(limit)) if cycles as f64 <= limit => (0, tiles, cycles),
        (Objective::MinTilesMeetingTarget, _) => (1, cycles, tiles),
        (Objective::MinLatency, _) => (0, cycles, 0),
    }
}

fn cost_candidates(
    layer: &LayerSpec,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    calib: Option<&CalibrationTable>,
) -> Result<Vec<LayerChoice>> {
    candidate_tilings(layer, device, constraints)
        .into_iter()
        .map(|c| {
            spatial_latency(layer, c.p_k, c.p_n, &c.tiling, device, calib)
                .map(|estimate| LayerChoice { candidate: c, estimate })
        })
        .collect()
}

/// First candidate in tie-break order with the strictly best objective key.
fn pick_best<'a>(
    choices: impl IntoIterator<Item = &'a LayerChoice>,
    constraints: &PlanConstraints,
    target_cycles: Option<f64>,
) -> Option<LayerChoice> {
    let mut best: Option<(LayerChoice, (u8, u64, u64))> = None;
    for c in choices {
        let key = objective_key(c.cycles(), c.candidate.tiles(), constraints, target_cycles);
        if best.as_ref().is_none_or(|(_, k)| key < *k) {
            best = Some((*c, key));
        }
    }
    best.map(|(c, _)| c)
}

fn no_tiling(layer: &LayerSpec, constraints: &PlanConstraints) -> Error {
    Error::Infeasible(format!(
        "layer '{}' ({},{},{}) has no legal tiling within {} tiles",
        layer.name, layer.m, layer.k, layer.n, constraints.max_tiles_per_layer
    ))
}

/// Best tiling of one layer under the constraints' objective.
pub fn plan_layer(
    layer: &LayerSpec,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    calib: Option<&CalibrationTable>,
) -> Result<LayerChoice> {
    constraints.validate()?;
    let choices = cost_candidates(layer, device, constraints, calib)?;
    let target = constraints.target_cycles(layer.m, device);
    pick_best(&choices, constraints, target).ok_or_else(|| no_tiling(layer, constraints))
}

/// Result of planning a whole network on the AIE array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub plan: TilingPlan,
    pub layout: BandLayout,
    pub choices: Vec<LayerChoice>,
    pub throughput: Throughput,
    /// Per-layer band contention factor applied to the interval.
    pub contention: Vec<f64>,
}

/// Plans every layer on the AIE array and lays the layers out in bands.
///
/// A single-band plan is built by shrinking the widest layers first. With
/// multi-band allowed, the unshrunk plan is also costed with the band
/// contention penalty and the faster of the two is kept.
pub fn plan_network(
    network: &NetworkSpec,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    calib: Option<&CalibrationTable>,
) -> Result<NetworkPlan> {
    constraints.validate()?;
    network.validate()?;
    let target = constraints.target_cycles(network.batch(), device);
    let mut per_layer = Vec::with_capacity(network.layers.len());
    for layer in &network.layers {
        let choices = cost_candidates(layer, device, constraints, calib)?;
        if choices.is_empty() {
            return Err(no_tiling(layer, constraints));
        }
        per_layer.push(choices);
    }
    let preferred: Vec<LayerChoice> = per_layer
        .iter()
        .map(|c| pick_best(c, constraints, target).expect("nonempty"))
        .collect();

    let single = shrink_to_one_band(&per_layer, preferred.clone(), device, constraints, target);
    let multi = if constraints.allow_multi_band {
        assemble(network, device, constraints, preferred).ok()
    } else {
        None
    };
    let single = single.and_then(|s| assemble(network, device, constraints, s).ok());

    match (single, multi) {
        (Some(s), Some(m)) => {
            if m.throughput.interval_seconds < s.throughput.interval_seconds {
                Ok(m)
            } else {
                Ok(s)
            }
        }
        (Some(s), None) => Ok(s),
        (None, Some(m)) => Ok(m),
        (None, None) => Err(Error::Infeasible(format!(
            "network '{}' does not fit the {} usable columns of one band{}",
            network.name,
            device.usable_width(),
            if constraints.allow_multi_band {
                " and no multi-band layout fits the array rows"
            } else {
                "; multi-band placement is disabled"
            }
        ))),
    }
}

/// Narrows the widest layers until the column total fits one band.
fn shrink_to_one_band(
    per_layer: &[Vec<LayerChoice>],
    mut chosen: Vec<LayerChoice>,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    target: Option<f64>,
) -> Option<Vec<LayerChoice>> {
    let width = device.usable_width();
    loop {
        let used: u64 = chosen.iter().map(|c| c.candidate.p_k).sum();
        if used <= width {
            return Some(chosen);
        }
        let widest = chosen.iter().map(|c| c.candidate.p_k).max()?;
        let i = chosen.iter().position(|c| c.candidate.p_k == widest)?;
        let narrower = per_layer[i].iter().filter(|c| c.candidate.p_k < widest);
        chosen[i] = pick_best(narrower, constraints, target)?;
    }
}

/// Lays out `choices`, applies band contention and builds the plan document.
fn assemble(
    network: &NetworkSpec,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    choices: Vec<LayerChoice>,
) -> Result<NetworkPlan> {
    let columns: Vec<u64> = choices.iter().map(|c| c.candidate.p_k).collect();
    let layout = band_layout(&columns, device)?;
    let rows_needed: u64 = layout
        .groups
        .iter()
        .map(|g| g.iter().map(|&i| choices[i].candidate.p_n).max().unwrap_or(0))
        .sum();
    if rows_needed > device.rows {
        return Err(Error::ArrayOverflow(format!(
            "{} bands need {rows_needed} rows, the array has {}",
            layout.bands, device.rows
        )));
    }
    let beta = device.aie_model.band_contention;
    let batch = network.batch();
    let mut contention = Vec::with_capacity(choices.len());
    let mut layers = Vec::with_capacity(choices.len());
    for (i, (layer, choice)) in network.layers.iter().zip(&choices).enumerate() {
        let sharing = layout.sharing_bands(i);
        let factor = beta.powi(sharing as i32);
        contention.push(factor);
        let place = layout.placements[i];
        let c = &choice.candidate;
        let cycles = choice.cycles() as f64 * factor;
        let mut flags = Vec::new();
        if is_under_utilized(c.per_tile, constraints.min_per_tile_workload) {
            flags.push(PlanFlag::UnderUtilized);
        }
        if sharing > 0 {
            flags.push(PlanFlag::MultiBand);
        }
        if choice.estimate.latency.source == Source::Analytic {
            flags.push(PlanFlag::AnalyticModel);
        }
        if c.padded != Dims3::new(layer.m, layer.k, layer.n) {
            flags.push(PlanFlag::Padded);
        }
        layers.push(LayerPlan {
            name: layer.name.clone(),
            m: layer.m,
            k: layer.k,
            n: layer.n,
            domain: Domain::Aie,
            aie: Some(AieMapping {
                p_k: c.p_k,
                p_n: c.p_n,
                padded: c.padded,
                q_k: c.per_tile.k,
                q_n: c.per_tile.n,
                api_shape: c.tiling.api_shape,
                r: c.tiling.repetitions,
                band: place.band,
                column_span: [
                    device.usable_column_lo + place.first_col,
                    device.usable_column_lo + place.last_col,
                ],
            }),
            rf: None,
            latency_cycles: cycles,
            latency_seconds: stage_seconds(Domain::Aie, cycles, batch, device),
            flags,
        });
    }
    let mut plan = TilingPlan {
        network: network.name.clone(),
        batch,
        layers,
        bands: layout.bands,
        interval_seconds: 0.0,
        throughput_hz: 0.0,
        crossings: 0,
        penalty_factor: 1.0,
    };
    let throughput = plan_throughput(&plan, network, device, DEFAULT_CROSSING_RHO)?;
    plan.interval_seconds = throughput.interval_seconds;
    plan.throughput_hz = throughput.throughput_hz;
    plan.crossings = throughput.crossings;
    plan.penalty_factor = throughput.penalty_factor;
    Ok(NetworkPlan {
        plan,
        layout,
        choices,
        throughput,
        contention,
    })
}
