use serde::{Deserialize, Serialize};

use super::NetworkPlan;
use crate::aiecost::stage_seconds;
use crate::error::{Error, Result};
use crate::model::{
    crossing_penalty, CalibrationTable, DeviceSpec, Domain, NetworkSpec, ResourceVector, Source, Strategy,
};
use crate::plcost::{min_feasible_rf, pl_point, prorated_budget};

/// Largest crossing count in the sensitivity table.
pub const MAX_SENSITIVITY_CROSSINGS: u64 = 14;

/// Relative slack under which two objectives count as equal.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlStage {
    pub rf: u64,
    pub interval_cycles: u64,
    pub source: Source,
}

/// Cost of one layer in each domain; `None` means the domain is unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerCosts {
    pub pl: Option<PlStage>,
    /// Per-batch AIE interval in AIE cycles.
    pub aie_cycles: Option<f64>,
    pub aie_source: Option<Source>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub domains: Vec<Domain>,
    /// Seconds per inference of each stage in its chosen domain.
    pub stage_seconds: Vec<f64>,
    pub crossings: u64,
    pub base_interval_seconds: f64,
    pub penalized_interval_seconds: f64,
    pub penalty_factor: f64,
    pub throughput_hz: f64,
    pub rho: f64,
    /// Found by the exact dynamic program.
    pub optimal: bool,
    /// Most crossings any feasible assignment can reach.
    pub max_crossings: u64,
}

/// First and last layer pinned to the PL, the rest free.
pub fn default_pins(layers: usize) -> Vec<Option<Domain>> {
    let mut pins = vec![None; layers];
    if let Some(first) = pins.first_mut() {
        *first = Some(Domain::Pl);
    }
    if let Some(last) = pins.last_mut() {
        *last = Some(Domain::Pl);
    }
    pins
}

/// Per-layer PL and AIE costs. PL layers run at the smallest reuse factor
/// fitting a MAC-prorated share of `pl_budget`; a layer that cannot fit at
/// any reuse factor has no PL cost.
pub fn partition_costs(
    network: &NetworkSpec,
    device: &DeviceSpec,
    aie: Option<&NetworkPlan>,
    pl_budget: &ResourceVector,
    strategy: Strategy,
    calib: Option<&CalibrationTable>,
) -> Result<Vec<LayerCosts>> {
    let mut out = Vec::with_capacity(network.layers.len());
    for (i, layer) in network.layers.iter().enumerate() {
        let share = prorated_budget(pl_budget, layer, network);
        let pl = match min_feasible_rf(layer, &share, strategy, &device.pl_model, calib) {
            Ok(rf) => {
                let p = pl_point(layer, rf, strategy, &device.pl_model, calib)?;
                Some(PlStage {
                    rf,
                    interval_cycles: p.interval_cycles,
                    source: p.source,
                })
            }
            Err(Error::ResourceWall { .. }) => None,
            Err(e) => return Err(e),
        };
        let aie_layer = aie.and_then(|p| p.plan.layers.get(i));
        out.push(LayerCosts {
            pl,
            aie_cycles: aie_layer.map(|l| l.latency_cycles),
            aie_source: aie.and_then(|p| p.choices.get(i)).map(|c| c.estimate.latency.source),
        });
    }
    Ok(out)
}

fn seconds(costs: &LayerCosts, domain: Domain, batch: u64, device: &DeviceSpec) -> Option<f64> {
    let cycles = match domain {
        Domain::Pl => costs.pl.map(|p| p.interval_cycles as f64),
        Domain::Aie => costs.aie_cycles,
    }?;
    Some(stage_seconds(domain, cycles, batch, device))
}

const DOMAINS: [Domain; 2] = [Domain::Pl, Domain::Aie];

/// Exact assignment of layers to domains minimising
/// `max stage interval * (1 + rho * (crossings - 2))`.
///
/// The state is `(layer, domain, domain changes so far)` holding the smallest
/// bottleneck reachable, so the multiplicative penalty is applied exactly
/// over the final states. Ties favour fewer crossings.
#[allow(clippy::needless_range_loop)] // DP tables read clearer indexed
pub fn hybrid_partition(
    network: &NetworkSpec,
    device: &DeviceSpec,
    costs: &[LayerCosts],
    rho: f64,
    pins: Option<&[Option<Domain>]>,
) -> Result<PartitionResult> {
    let layers = network.layers.len();
    if layers == 0 {
        return Err(Error::Empty("network has no layers to partition".into()));
    }
    if costs.len() != layers {
        return Err(Error::LengthMismatch(format!(
            "{} cost entries for {layers} layers",
            costs.len()
        )));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::invalid(format!(
            "crossing rate {rho} must be finite and non-negative"
        )));
    }
    let default = default_pins(layers);
    let pins = pins.unwrap_or(&default);
    if pins.len() != layers {
        return Err(Error::LengthMismatch(format!(
            "{} pins for {layers} layers",
            pins.len()
        )));
    }
    let batch = network.batch();
    // cost[i][d]: stage seconds, None when layer i cannot sit in domain d.
    let mut cost = Vec::with_capacity(layers);
    for (i, (c, pin)) in costs.iter().zip(pins).enumerate() {
        let name = &network.layers[i].name;
        let pl = seconds(c, Domain::Pl, batch, device);
        let aie = seconds(c, Domain::Aie, batch, device);
        if pl.is_none() && aie.is_none() {
            return Err(Error::MissingCost(format!("layer {i} '{name}' has no PL or AIE cost")));
        }
        let row = match pin {
            Some(Domain::Pl) if pl.is_none() => {
                return Err(Error::PinConflict(format!(
                    "layer {i} '{name}' is pinned to pl but has no PL cost"
                )))
            }
            Some(Domain::Aie) if aie.is_none() => {
                return Err(Error::PinConflict(format!(
                    "layer {i} '{name}' is pinned to aie but has no AIE cost"
                )))
            }
            Some(Domain::Pl) => [pl, None],
            Some(Domain::Aie) => [None, aie],
            None => [pl, aie],
        };
        cost.push(row);
    }

    // best[i][d][c] = (bottleneck, predecessor domain index)
    type Cell = Option<(f64, usize)>;
    let mut best: Vec<[Vec<Cell>; 2]> = (0..layers).map(|_| [vec![None; layers], vec![None; layers]]).collect();
    for d in 0..2 {
        if let Some(s) = cost[0][d] {
            best[0][d][0] = Some((s, d));
        }
    }
    for i in 1..layers {
        for d in 0..2 {
            let Some(s) = cost[i][d] else { continue };
            for c in 0..layers {
                let mut cell: Cell = None;
                for prev in 0..2 {
                    let changed = usize::from(prev != d);
                    if c < changed {
                        continue;
                    }
                    if let Some((b, _)) = best[i - 1][prev][c - changed] {
                        let v = b.max(s);
                        if cell.is_none_or(|(old, _)| v < old) {
                            cell = Some((v, prev));
                        }
                    }
                }
                best[i][d][c] = cell;
            }
        }
    }

    let last = layers - 1;
    let mut pick: Option<(f64, usize, usize)> = None;
    let mut max_changes = 0;
    for c in 0..layers {
        for d in 0..2 {
            let Some((base, _)) = best[last][d][c] else { continue };
            max_changes = max_changes.max(c);
            let obj = base * crossing_penalty(2 + c as u64, rho);
            if pick.is_none_or(|(o, _, _)| obj < o * (1.0 - TIE_EPS)) {
                pick = Some((obj, d, c));
            }
        }
    }
    let (_, mut d, mut c) =
        pick.ok_or_else(|| Error::Infeasible("no domain assignment satisfies the pins and costs".into()))?;

    let mut domains = vec![Domain::Pl; layers];
    for i in (0..layers).rev() {
        domains[i] = DOMAINS[d];
        let (_, prev) = best[i][d][c].expect("reconstructed state exists");
        if i > 0 {
            if prev != d {
                c -= 1;
            }
            d = prev;
        }
    }
    let stage_seconds: Vec<f64> = domains
        .iter()
        .enumerate()
        .map(|(i, &dom)| cost[i][dom as usize].expect("chosen domain has a cost"))
        .collect();
    let base = stage_seconds.iter().copied().fold(0.0, f64::max);
    let crossings = crate::model::boundary_crossings(&domains);
    let penalty_factor = crossing_penalty(crossings, rho);
    let penalized = base * penalty_factor;
    Ok(PartitionResult {
        domains,
        stage_seconds,
        crossings,
        base_interval_seconds: base,
        penalized_interval_seconds: penalized,
        penalty_factor,
        throughput_hz: 1.0 / penalized,
        rho,
        optimal: true,
        max_crossings: 2 + max_changes as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub crossings: u64,
    pub penalty_factor: f64,
    pub interval_seconds: f64,
}

/// Penalised interval at `c = 2, 4, ...` up to `max_crossings` (at most 14).
pub fn crossing_sensitivity(base_seconds: f64, rho: f64, max_crossings: u64) -> Vec<SensitivityRow> {
    let top = max_crossings.clamp(2, MAX_SENSITIVITY_CROSSINGS);
    (2..=top)
        .step_by(2)
        .map(|c| {
            let penalty_factor = crossing_penalty(c, rho);
            SensitivityRow {
                crossings: c,
                penalty_factor,
                interval_seconds: base_seconds * penalty_factor,
            }
        })
        .collect()
}
