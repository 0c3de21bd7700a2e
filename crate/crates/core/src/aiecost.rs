//! AI-Engine latency estimation for a spatially and API-tiled GEMM.
//!
//! The analytic model is a per-tile roofline: a fixed overhead plus the
//! largest of the compute, input-stream and output-stream terms. Spatial
//! tiling adds cascade hops between columns and input broadcast to extra
//! rows. Calibration records override the single-tile figure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    boundary_crossings, crossing_penalty, round_up, CalibrationTable, DeviceSpec, Dims3, Domain, Dtype, LayerSpec,
    NetworkSpec, Source, TilingPlan,
};

/// Per-tile workload below which a tile is considered under-utilized.
pub const DEFAULT_MIN_TILE_WORKLOAD: Dims3 = Dims3::new(8, 16, 32);

/// Bytes per accumulator element carried on the cascade bus.
const ACCUMULATOR_BYTES: u64 = 4;

/// One legal decomposition of a per-tile workload into API calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApiTiling {
    pub api_shape: Dims3,
    /// `(r_m, r_k, r_n)`: repetitions of the unrolled API block.
    pub repetitions: Dims3,
}

impl ApiTiling {
    /// API shape scaled by the unroll factors.
    pub fn effective_tile(&self, unroll: &Dims3) -> Dims3 {
        self.api_shape.times(unroll)
    }

    /// API calls per tile.
    pub fn invocations(&self, unroll: &Dims3) -> u64 {
        self.repetitions.product() * unroll.product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Compute,
    StreamIn,
    StreamOut,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AieLatency {
    pub cycles: u64,
    pub bound: Bound,
    pub source: Source,
    /// Batch rows produced per `cycles`; used to normalise to inferences.
    pub batch_rows: u64,
}

impl AieLatency {
    /// Seconds per batch at the AIE clock.
    pub fn seconds(&self, device: &DeviceSpec) -> f64 {
        self.cycles as f64 / device.aie_clock_hz
    }

    /// Seconds per inference (one batch row).
    pub fn seconds_per_inference(&self, device: &DeviceSpec) -> f64 {
        self.seconds(device) / self.batch_rows.max(1) as f64
    }
}

/// Every legal API shape whose unrolled tile divides `workload` exactly.
pub fn enumerate_api_tilings(workload: Dims3, device: &DeviceSpec) -> Vec<ApiTiling> {
    device
        .legal_api_shapes
        .iter()
        .filter_map(|&shape| {
            let eff = shape.times(&device.unroll);
            let divides = workload.m.is_multiple_of(eff.m)
                && workload.k.is_multiple_of(eff.k)
                && workload.n.is_multiple_of(eff.n);
            (divides && workload.all_positive()).then(|| ApiTiling {
                api_shape: shape,
                repetitions: Dims3::new(workload.m / eff.m, workload.k / eff.k, workload.n / eff.n),
            })
        })
        .collect()
}

/// Local-memory footprint of a tile: resident weights plus ping-pong input
/// and output buffers.
pub fn tile_footprint(q_k: u64, q_n: u64, m: u64, dtype: Dtype) -> u64 {
    let b = dtype.bytes();
    q_k * q_n * b + 2 * m * (q_k + q_n) * b
}

/// Whether the tile's data fits its local-memory budget, and its footprint in bytes.
pub fn memory_feasible(q_k: u64, q_n: u64, m: u64, dtype: Dtype, device: &DeviceSpec) -> (bool, u64) {
    let footprint = tile_footprint(q_k, q_n, m, dtype);
    (footprint <= device.tile_data_budget(), footprint)
}

/// Lower bound on cycles for `m * q_k * q_n` MACs at peak vector throughput.
pub fn compute_floor(workload: Dims3, device: &DeviceSpec) -> u64 {
    workload.product().div_ceil(device.macs_per_cycle)
}

/// Roofline terms of one tile, before overhead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RooflineTerms {
    pub compute: u64,
    pub stream_in: u64,
    pub stream_out: u64,
}

impl RooflineTerms {
    /// Largest term; ties resolve in declaration order.
    pub fn dominant(&self) -> (Bound, u64) {
        let mut best = (Bound::Compute, self.compute);
        for (bound, v) in [(Bound::StreamIn, self.stream_in), (Bound::StreamOut, self.stream_out)] {
            if v > best.1 {
                best = (bound, v);
            }
        }
        best
    }
}

pub fn roofline_terms(workload: Dims3, tiling: &ApiTiling, dtype: Dtype, device: &DeviceSpec) -> RooflineTerms {
    let params = &device.aie_model;
    let r = tiling.repetitions;
    // One unrolled block issues u_m*u_k*u_n API calls, each taking as many
    // cycles as its MACs need at peak rate.
    let cycles_per_call = tiling.api_shape.product().div_ceil(device.macs_per_cycle);
    let cycles_per_block = device.unroll.product() * cycles_per_call;
    let inefficiency = if r.k > r.n { 1.0 + params.k_heavy_penalty } else { 1.0 };
    let compute = ((r.product() * cycles_per_block) as f64 * inefficiency).ceil() as u64;
    let port = device.stream_bytes_per_cycle();
    let b = dtype.bytes();
    RooflineTerms {
        compute,
        stream_in: (workload.m * workload.k * b).div_ceil(port),
        stream_out: (workload.m * workload.n * b).div_ceil(port),
    }
}

/// Latency of one tile running `workload = (m, q_k, q_n)` with `tiling`.
pub fn single_tile_latency(
    workload: Dims3,
    tiling: &ApiTiling,
    dtype: Dtype,
    device: &DeviceSpec,
    calib: Option<&CalibrationTable>,
) -> AieLatency {
    let terms = roofline_terms(workload, tiling, dtype, device);
    let (bound, dominant) = terms.dominant();
    if let Some(rec) = calib.and_then(|c| c.aie_record(workload.m, workload.k, workload.n, tiling.api_shape)) {
        return AieLatency {
            cycles: rec.latency_cycles,
            bound,
            source: Source::Calibrated,
            batch_rows: workload.m,
        };
    }
    AieLatency {
        cycles: device.aie_model.overhead_cycles + dominant,
        bound,
        source: Source::Analytic,
        batch_rows: workload.m,
    }
}

/// Padded layer dimensions and the per-tile share for one spatial split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaddedWorkload {
    pub padded: Dims3,
    pub per_tile: Dims3,
}

/// Pads `layer` for `(p_k, p_n)` tiles of `api_shape`.
///
/// A dimension is padded up to the next multiple of `p * s * u`, but only
/// when it already holds at least one unrolled API tile per spatial tile;
/// workloads smaller than that return `None`.
pub fn pad_workload(layer: &LayerSpec, p_k: u64, p_n: u64, api_shape: Dims3, unroll: Dims3) -> Option<PaddedWorkload> {
    if p_k == 0 || p_n == 0 {
        return None;
    }
    let eff = api_shape.times(&unroll);
    let steps = [(layer.m, eff.m), (layer.k, p_k * eff.k), (layer.n, p_n * eff.n)];
    if steps.iter().any(|&(dim, step)| dim < step) {
        return None;
    }
    let padded = Dims3::new(
        round_up(layer.m, steps[0].1),
        round_up(layer.k, steps[1].1),
        round_up(layer.n, steps[2].1),
    );
    Some(PaddedWorkload {
        padded,
        per_tile: Dims3::new(padded.m, padded.k / p_k, padded.n / p_n),
    })
}

/// Whether a per-tile workload falls below `min` in any dimension.
pub fn is_under_utilized(per_tile: Dims3, min: Dims3) -> bool {
    per_tile.m < min.m || per_tile.k < min.k || per_tile.n < min.n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialEstimate {
    pub latency: AieLatency,
    pub p_k: u64,
    pub p_n: u64,
    pub padded: Dims3,
    pub per_tile: Dims3,
    pub tiling: ApiTiling,
    /// Latency of one tile, cascade transfer included.
    pub tile_cycles: u64,
    pub cascade_cycles: u64,
    pub broadcast_cycles: u64,
    /// Per-tile workload below [`DEFAULT_MIN_TILE_WORKLOAD`].
    pub under_utilized: bool,
}

/// Latency of `layer` split over `p_k` columns and `p_n` rows of tiles.
pub fn spatial_latency(
    layer: &LayerSpec,
    p_k: u64,
    p_n: u64,
    tiling: &ApiTiling,
    device: &DeviceSpec,
    calib: Option<&CalibrationTable>,
) -> Result<SpatialEstimate> {
    if p_k == 0 || p_n == 0 {
        return Err(Error::IllegalPlan(format!(
            "spatial split ({p_k}, {p_n}) has a zero factor"
        )));
    }
    if p_k > device.usable_width() || p_n > device.rows {
        return Err(Error::ArrayOverflow(format!(
            "{p_k} x {p_n} (usable {} columns x {} rows)",
            device.usable_width(),
            device.rows
        )));
    }
    let padded = pad_workload(layer, p_k, p_n, tiling.api_shape, device.unroll).ok_or_else(|| {
        Error::IllegalPlan(format!(
            "layer '{}' ({},{},{}) is smaller than one {} API tile per spatial tile at ({p_k}, {p_n})",
            layer.name,
            layer.m,
            layer.k,
            layer.n,
            tiling.api_shape.times(&device.unroll)
        ))
    })?;
    let per_tile = padded.per_tile;
    let eff = tiling.effective_tile(&device.unroll);
    if tiling.repetitions.times(&eff) != per_tile {
        return Err(Error::IllegalPlan(format!(
            "repetitions {} of effective tile {eff} do not cover per-tile workload {per_tile}",
            tiling.repetitions
        )));
    }
    let (fits, footprint) = memory_feasible(per_tile.k, per_tile.n, per_tile.m, layer.dtype, device);
    if !fits {
        return Err(Error::MemoryInfeasible {
            m: per_tile.m,
            q_k: per_tile.k,
            q_n: per_tile.n,
            footprint,
            budget: device.tile_data_budget(),
        });
    }

    let tile = single_tile_latency(per_tile, tiling, layer.dtype, device, calib);
    let params = &device.aie_model;
    let mut tile_cycles = tile.cycles;
    let mut bound = tile.bound;
    if p_k > 1 {
        // Partial sums leave every non-final column on the cascade bus.
        let transfer = (per_tile.m * per_tile.n * ACCUMULATOR_BYTES).div_ceil(device.cascade_bytes_per_cycle());
        let cascade_tile = params.overhead_cycles + transfer;
        if cascade_tile > tile_cycles {
            tile_cycles = cascade_tile;
            bound = Bound::Cascade;
        }
    }
    let cascade_cycles = (p_k - 1) * params.cascade_hop_cycles;
    let stream_in = (per_tile.m * per_tile.k * layer.dtype.bytes()).div_ceil(device.stream_bytes_per_cycle());
    let broadcast_cycles = (p_n - 1) * (params.row_broadcast_factor * stream_in as f64).ceil() as u64;

    Ok(SpatialEstimate {
        latency: AieLatency {
            cycles: tile_cycles + cascade_cycles + broadcast_cycles,
            bound,
            source: tile.source,
            batch_rows: layer.m,
        },
        p_k,
        p_n,
        padded: padded.padded,
        per_tile,
        tiling: *tiling,
        tile_cycles,
        cascade_cycles,
        broadcast_cycles,
        under_utilized: is_under_utilized(per_tile, DEFAULT_MIN_TILE_WORKLOAD),
    })
}

/// Seconds per inference spent in a stage of `domain` taking `cycles`.
///
/// PL stages accept one inference per interval; AIE stages process a batch
/// of `batch` rows per interval.
pub fn stage_seconds(domain: Domain, cycles: f64, batch: u64, device: &DeviceSpec) -> f64 {
    match domain {
        Domain::Pl => cycles / device.pl_clock_hz,
        Domain::Aie => cycles / device.aie_clock_hz / batch.max(1) as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    /// Seconds per inference, crossing penalty included.
    pub interval_seconds: f64,
    pub throughput_hz: f64,
    pub crossings: u64,
    pub penalty_factor: f64,
}

impl Throughput {
    pub fn mhz(&self) -> f64 {
        self.throughput_hz / 1e6
    }
}

/// Steady-state throughput of a plan: the slowest stage, scaled by the
/// boundary-crossing penalty.
pub fn plan_throughput(plan: &TilingPlan, network: &NetworkSpec, device: &DeviceSpec, rho: f64) -> Result<Throughput> {
    if network.layers.is_empty() || plan.layers.is_empty() {
        return Err(Error::Empty("network has no layers to schedule".into()));
    }
    if plan.layers.len() != network.layers.len() {
        return Err(Error::LengthMismatch(format!(
            "plan covers {} layers, network has {}",
            plan.layers.len(),
            network.layers.len()
        )));
    }
    let batch = network.batch();
    let base = plan
        .layers
        .iter()
        .map(|l| stage_seconds(l.domain, l.latency_cycles, batch, device))
        .fold(0.0, f64::max);
    let crossings = boundary_crossings(&plan.domains());
    let penalty_factor = crossing_penalty(crossings, rho);
    let interval_seconds = base * penalty_factor;
    Ok(Throughput {
        interval_seconds,
        throughput_hz: 1.0 / interval_seconds,
        crossings,
        penalty_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AieRecord;

    fn dev() -> DeviceSpec {
        DeviceSpec::vek280()
    }

    fn tiling_for(workload: Dims3, shape: Dims3) -> ApiTiling {
        *enumerate_api_tilings(workload, &dev())
            .iter()
            .find(|t| t.api_shape == shape)
            .unwrap()
    }

    #[test]
    fn enumerates_both_shapes_for_8x32x64() {
        let t = enumerate_api_tilings(Dims3::new(8, 32, 64), &dev());
        assert_eq!(
            t,
            vec![
                ApiTiling {
                    api_shape: Dims3::new(4, 8, 8),
                    repetitions: Dims3::new(1, 2, 4)
                },
                ApiTiling {
                    api_shape: Dims3::new(4, 16, 8),
                    repetitions: Dims3::new(1, 1, 4)
                },
            ]
        );
    }

    #[test]
    fn k16_admits_only_the_finer_shape() {
        let t = enumerate_api_tilings(Dims3::new(8, 16, 16), &dev());
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].api_shape, Dims3::new(4, 8, 8));
    }

    #[test]
    fn workload_below_effective_tile_has_no_tiling() {
        assert!(enumerate_api_tilings(Dims3::new(4, 8, 8), &dev()).is_empty());
    }

    #[test]
    fn memory_examples() {
        let d = dev();
        assert_eq!(memory_feasible(128, 128, 8, Dtype::I8, &d), (true, 20_480));
        assert_eq!(memory_feasible(256, 256, 8, Dtype::I8, &d), (false, 73_728));
        assert!(memory_feasible(1, 1, 1, Dtype::I8, &d).0);
    }

    #[test]
    fn compute_bound_single_tile() {
        let w = Dims3::new(8, 128, 128);
        let t = tiling_for(w, Dims3::new(4, 8, 8));
        assert_eq!(compute_floor(w, &dev()), 512);
        let lat = single_tile_latency(w, &t, Dtype::I8, &dev(), None);
        // r = (1, 8, 8), 8 cycles per unrolled block, no K-heavy penalty.
        assert_eq!(lat.cycles, 50 + 512);
        assert_eq!(lat.bound, Bound::Compute);
        assert_eq!(lat.source, Source::Analytic);
    }

    #[test]
    fn tiny_workload_is_stream_bound() {
        let w = Dims3::new(8, 16, 16);
        let t = tiling_for(w, Dims3::new(4, 8, 8));
        let terms = roofline_terms(w, &t, Dtype::I8, &dev());
        assert_eq!(terms.compute, 8);
        assert_eq!(terms.stream_in, 32);
        let lat = single_tile_latency(w, &t, Dtype::I8, &dev(), None);
        assert_eq!(lat.bound, Bound::StreamIn);
        assert_eq!(lat.cycles, 82);
    }

    #[test]
    fn calibrated_record_is_verbatim() {
        let calib = CalibrationTable::new(
            vec![],
            vec![AieRecord {
                m: 8,
                q_k: 64,
                q_n: 64,
                api_shape: Dims3::new(4, 8, 8),
                latency_cycles: 300,
            }],
        )
        .unwrap();
        let w = Dims3::new(8, 64, 64);
        let lat = single_tile_latency(w, &tiling_for(w, Dims3::new(4, 8, 8)), Dtype::I8, &dev(), Some(&calib));
        assert_eq!(lat.cycles, 300);
        assert_eq!(lat.source, Source::Calibrated);
    }

    #[test]
    fn larger_api_shape_respects_compute_floor() {
        let w = Dims3::new(8, 64, 64);
        let t = tiling_for(w, Dims3::new(4, 16, 8));
        let terms = roofline_terms(w, &t, Dtype::I8, &dev());
        assert!(terms.compute >= compute_floor(w, &dev()));
    }

    #[test]
    fn degenerate_split_equals_single_tile() {
        let layer = LayerSpec::new("l", 8, 128, 128).unwrap();
        let w = Dims3::new(8, 128, 128);
        let t = tiling_for(w, Dims3::new(4, 8, 8));
        let s = spatial_latency(&layer, 1, 1, &t, &dev(), None).unwrap();
        assert_eq!(s.latency, single_tile_latency(w, &t, Dtype::I8, &dev(), None));
        assert!(!s.under_utilized);
    }

    #[test]
    fn four_by_two_gives_design_rule_four_tile() {
        let layer = LayerSpec::new("l", 8, 128, 128).unwrap();
        let w = Dims3::new(8, 32, 64);
        let t = tiling_for(w, Dims3::new(4, 8, 8));
        let s = spatial_latency(&layer, 4, 2, &t, &dev(), None).unwrap();
        assert_eq!(s.per_tile, w);
        assert!(!s.under_utilized);
        // tile: 50 + max(64, 64, 128); 3 hops; one extra row at 1/8 of 64 input cycles.
        assert_eq!(s.latency.cycles, 178 + 3 + 8);
    }

    #[test]
    fn eight_by_eight_is_flagged() {
        let layer = LayerSpec::new("l", 8, 128, 128).unwrap();
        let w = Dims3::new(8, 16, 16);
        let s = spatial_latency(&layer, 8, 8, &tiling_for(w, Dims3::new(4, 8, 8)), &dev(), None).unwrap();
        assert_eq!(s.per_tile, w);
        assert!(s.under_utilized);
    }

    #[test]
    fn overflow_and_mismatch_are_errors() {
        let layer = LayerSpec::new("l", 8, 1024, 128).unwrap();
        let t = ApiTiling {
            api_shape: Dims3::new(4, 8, 8),
            repetitions: Dims3::new(1, 1, 1),
        };
        assert!(matches!(
            spatial_latency(&layer, 32, 1, &t, &dev(), None),
            Err(Error::ArrayOverflow(_))
        ));
        assert!(matches!(
            spatial_latency(&layer, 1, 1, &t, &dev(), None),
            Err(Error::IllegalPlan(_))
        ));
    }

    #[test]
    fn memory_infeasible_split_is_an_error() {
        let layer = LayerSpec::new("l", 8, 256, 256).unwrap();
        let w = Dims3::new(8, 256, 256);
        let t = tiling_for(w, Dims3::new(4, 8, 8));
        assert!(matches!(
            spatial_latency(&layer, 1, 1, &t, &dev(), None),
            Err(Error::MemoryInfeasible { .. })
        ));
    }

    #[test]
    fn padding_rounds_to_split_multiple() {
        let layer = LayerSpec::new("l", 8, 128, 128).unwrap();
        let p = pad_workload(&layer, 3, 1, Dims3::new(4, 8, 8), Dims3::new(2, 2, 2)).unwrap();
        assert_eq!(p.padded, Dims3::new(8, 144, 128));
        assert_eq!(p.per_tile, Dims3::new(8, 48, 128));
        let tiny = LayerSpec::new("l", 8, 8, 8).unwrap();
        assert!(pad_workload(&tiny, 1, 1, Dims3::new(4, 8, 8), Dims3::new(2, 2, 2)).is_none());
    }

    #[test]
    fn stage_seconds_normalise_batch() {
        let d = dev();
        // 512 cycles at 1 GHz per batch of 8 rows.
        assert_eq!(stage_seconds(Domain::Aie, 512.0, 8, &d), 512e-9 / 8.0);
        // 25 PL cycles at 312.5 MHz is 12.5 M inferences per second.
        let s = stage_seconds(Domain::Pl, 25.0, 8, &d);
        assert!((1.0 / s - 12.5e6).abs() < 1e-3);
    }
}
