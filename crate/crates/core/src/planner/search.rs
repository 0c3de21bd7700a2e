use serde::{Deserialize, Serialize};

use super::{objective_key, PlanConstraints};
use crate::aiecost::{spatial_latency, tile_footprint, ApiTiling, SpatialEstimate};
use crate::error::{Error, Result};
use crate::model::{CalibrationTable, DeviceSpec, Dims3, LayerSpec};

pub const DEFAULT_SEARCH_CAP: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub max_p_k: u64,
    pub max_p_n: u64,
    pub cap: u64,
}

impl SearchBounds {
    /// Bounds implied by the constraints and the array size.
    pub fn for_constraints(device: &DeviceSpec, constraints: &PlanConstraints) -> Self {
        Self {
            max_p_k: constraints.max_tiles_per_layer.min(device.usable_width()),
            max_p_n: constraints.max_tiles_per_layer.min(device.rows),
            cap: DEFAULT_SEARCH_CAP,
        }
    }
}

/// Why a grid cell is or is not a legal candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Legal,
    TooManyTiles,
    OffArray,
    Excluded,
    ShapeOverridden,
    TooSmall,
    BelowMinimum,
    OverMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchCell {
    pub p_k: u64,
    pub p_n: u64,
    pub api_shape: Dims3,
    pub status: CellStatus,
    /// Per-tile workload when the padding is defined.
    pub per_tile: Option<Dims3>,
    pub estimate: Option<SpatialEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub best: Option<SearchCell>,
    /// Every `(p_k, p_n, shape)` cell in row-major order.
    pub table: Vec<SearchCell>,
}

fn pad_to(dim: u64, step: u64) -> Option<u64> {
    (dim >= step).then(|| dim.div_ceil(step) * step)
}

/// Brute-force enumeration of every `(p_k, p_n, shape)` cell within `bounds`.
///
/// Legality is derived here from first principles rather than reusing the
/// planner's candidate generator, so the two can be checked against each other.
pub fn exhaustive_layer_search(
    layer: &LayerSpec,
    device: &DeviceSpec,
    bounds: SearchBounds,
    constraints: &PlanConstraints,
    calib: Option<&CalibrationTable>,
) -> Result<ExhaustiveResult> {
    constraints.validate()?;
    let shapes = device.legal_api_shapes.len() as u64;
    let size = bounds.max_p_k.saturating_mul(bounds.max_p_n).saturating_mul(shapes);
    if size > bounds.cap {
        return Err(Error::SearchSpaceTooLarge { size, cap: bounds.cap });
    }
    let u = device.unroll;
    let min = constraints.min_per_tile_workload;
    let target = constraints
        .target_throughput_hz
        .map(|hz| layer.m as f64 * device.aie_clock_hz / hz);

    let mut table = Vec::with_capacity(size as usize);
    for p_k in 1..=bounds.max_p_k {
        for p_n in 1..=bounds.max_p_n {
            for &shape in &device.legal_api_shapes {
                let mut cell = SearchCell {
                    p_k,
                    p_n,
                    api_shape: shape,
                    status: CellStatus::Legal,
                    per_tile: None,
                    estimate: None,
                };
                let padded = (
                    pad_to(layer.m, shape.m * u.m),
                    pad_to(layer.k, p_k * shape.k * u.k),
                    pad_to(layer.n, p_n * shape.n * u.n),
                );
                if let (Some(m), Some(k), Some(n)) = padded {
                    cell.per_tile = Some(Dims3::new(m, k / p_k, n / p_n));
                }
                cell.status = if p_k * p_n > constraints.max_tiles_per_layer {
                    CellStatus::TooManyTiles
                } else if p_k > device.usable_width() || p_n > device.rows {
                    CellStatus::OffArray
                } else if constraints
                    .spatial_override
                    .as_ref()
                    .is_some_and(|l| !l.contains(&(p_k, p_n)))
                {
                    CellStatus::Excluded
                } else if constraints.api_shape_override.is_some_and(|s| s != shape) {
                    CellStatus::ShapeOverridden
                } else {
                    match cell.per_tile {
                        None => CellStatus::TooSmall,
                        Some(t) if (p_k > 1 && t.k < min.k) || (p_n > 1 && t.n < min.n) => CellStatus::BelowMinimum,
                        Some(t) if tile_footprint(t.k, t.n, t.m, layer.dtype) > device.tile_data_budget() => {
                            CellStatus::OverMemory
                        }
                        Some(_) => CellStatus::Legal,
                    }
                };
                if cell.status == CellStatus::Legal {
                    let t = cell.per_tile.expect("legal cells are padded");
                    let eff = shape.times(&u);
                    let tiling = ApiTiling {
                        api_shape: shape,
                        repetitions: Dims3::new(t.m / eff.m, t.k / eff.k, t.n / eff.n),
                    };
                    cell.estimate = Some(spatial_latency(layer, p_k, p_n, &tiling, device, calib)?);
                }
                table.push(cell);
            }
        }
    }

    let shape_rank = |s: Dims3| {
        device
            .legal_api_shapes
            .iter()
            .position(|&x| x == s)
            .unwrap_or(usize::MAX)
    };
    let best = table
        .iter()
        .filter_map(|c| c.estimate.map(|e| (c, e)))
        .min_by_key(|(c, e)| {
            (
                objective_key(e.latency.cycles, c.p_k * c.p_n, constraints, target),
                c.p_k * c.p_n,
                std::cmp::Reverse(c.p_k),
                shape_rank(c.api_shape),
            )
        })
        .map(|(c, _)| *c);
    Ok(ExhaustiveResult { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::plan_layer;

    fn dev() -> DeviceSpec {
        DeviceSpec::vek280()
    }

    fn constraints(max: u64) -> PlanConstraints {
        PlanConstraints {
            max_tiles_per_layer: max,
            ..Default::default()
        }
    }

    #[test]
    fn grid_for_128_square_agrees_with_planner() {
        let l = LayerSpec::new("t", 8, 128, 128).unwrap();
        let c = constraints(64);
        let bounds = SearchBounds {
            max_p_k: 8,
            max_p_n: 8,
            cap: DEFAULT_SEARCH_CAP,
        };
        let r = exhaustive_layer_search(&l, &dev(), bounds, &c, None).unwrap();
        assert_eq!(r.table.len(), 128);
        let best = r.best.unwrap();
        let planned = plan_layer(&l, &dev(), &c, None).unwrap();
        assert_eq!(
            (best.p_k, best.p_n, best.api_shape),
            (
                planned.candidate.p_k,
                planned.candidate.p_n,
                planned.candidate.tiling.api_shape
            )
        );
        let cell88 = r.table.iter().find(|c| (c.p_k, c.p_n) == (8, 8)).unwrap();
        assert_eq!(cell88.status, CellStatus::BelowMinimum);
    }

    #[test]
    fn single_cell_bounds() {
        let l = LayerSpec::new("t", 8, 16, 32).unwrap();
        let bounds = SearchBounds {
            max_p_k: 1,
            max_p_n: 1,
            cap: 10,
        };
        let r = exhaustive_layer_search(&l, &dev(), bounds, &constraints(1), None).unwrap();
        let best = r.best.unwrap();
        assert_eq!((best.p_k, best.p_n, best.api_shape), (1, 1, Dims3::new(4, 8, 8)));
        assert_eq!(r.table.iter().filter(|c| c.status == CellStatus::Legal).count(), 1);
    }

    #[test]
    fn cap_is_enforced() {
        let l = LayerSpec::new("t", 8, 128, 128).unwrap();
        let bounds = SearchBounds {
            max_p_k: 31,
            max_p_n: 8,
            cap: 100,
        };
        let err = exhaustive_layer_search(&l, &dev(), bounds, &constraints(32), None).unwrap_err();
        assert!(err.to_string().contains("100"), "{err}");
    }
}
