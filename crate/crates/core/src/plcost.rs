//! hls4ml-style programmable-logic cost model.
//!
//! A dense layer on the PL is characterised by its reuse factor: how many
//! multiplications share one arithmetic unit. Sweeping the reuse factor gives
//! a trade-off curve of interval against resources.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CalibrationTable, LayerSpec, NetworkSpec, PlModelParams, ResourceVector, Source, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub reuse_factor: u64,
    /// PL cycles between successive inferences.
    pub interval_cycles: u64,
    pub resources: ResourceVector,
    pub source: Source,
}

/// PL interval/resource points of one layer shape, ordered by reuse factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub k: u64,
    pub n: u64,
    pub strategy: Strategy,
    pub points: Vec<TradeoffPoint>,
}

impl TradeoffCurve {
    /// Builds a curve and checks its ordering invariants.
    pub fn new(k: u64, n: u64, strategy: Strategy, points: Vec<TradeoffPoint>) -> Result<Self> {
        let curve = TradeoffCurve { k, n, strategy, points };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        let group = format!("curve (k={}, n={}, {})", self.k, self.n, self.strategy);
        for p in &self.points {
            if p.reuse_factor == 0 || p.interval_cycles < p.reuse_factor {
                return Err(Error::invalid(format!(
                    "{group}: point rf={} has interval {} below its reuse factor",
                    p.reuse_factor, p.interval_cycles
                )));
            }
            p.resources.validate()?;
        }
        for pair in self.points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.reuse_factor <= a.reuse_factor {
                return Err(Error::NonMonotone {
                    group,
                    detail: format!(
                        "reuse factors not strictly increasing ({} then {})",
                        a.reuse_factor, b.reuse_factor
                    ),
                });
            }
            if b.interval_cycles < a.interval_cycles {
                return Err(Error::NonMonotone {
                    group,
                    detail: format!(
                        "interval falls from {} (rf={}) to {} (rf={})",
                        a.interval_cycles, a.reuse_factor, b.interval_cycles, b.reuse_factor
                    ),
                });
            }
            if !b.resources.fits_within(&a.resources) {
                return Err(Error::NonMonotone {
                    group,
                    detail: format!(
                        "resources rise from [{}] (rf={}) to [{}] (rf={})",
                        a.resources, a.reuse_factor, b.resources, b.reuse_factor
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Calibrated` if every point is, `Analytic` if none is, `None` for a mix.
    pub fn uniform_source(&self) -> Option<Source> {
        let first = self.points.first()?.source;
        self.points.iter().all(|p| p.source == first).then_some(first)
    }
}

/// Reuse factors accepted for a layer: the divisors of `k * n`, ascending.
pub fn legal_reuse_factors(layer: &LayerSpec) -> Vec<u64> {
    divisors(layer.k * layer.n)
}

pub(crate) fn divisors(value: u64) -> Vec<u64> {
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut d = 1u64;
    while d * d <= value {
        if value.is_multiple_of(d) {
            low.push(d);
            if d != value / d {
                high.push(value / d);
            }
        }
        d += 1;
    }
    low.extend(high.into_iter().rev());
    low
}

fn is_legal_rf(layer: &LayerSpec, rf: u64) -> bool {
    let weights = layer.k * layer.n;
    rf >= 1 && rf <= weights && weights.is_multiple_of(rf)
}

/// Analytic interval and resources; `rf` must divide `k * n`.
fn analytic_point(layer: &LayerSpec, rf: u64, strategy: Strategy, params: &PlModelParams) -> TradeoffPoint {
    let weights = layer.k * layer.n;
    let mults = weights.div_ceil(rf);
    let bram = (weights * layer.dtype.bytes()).div_ceil(params.bram_bytes) as f64;
    let base_lut = params.lut_per_mult * mults as f64;
    let (lut, dsp) = match strategy {
        Strategy::Resource => (base_lut, mults as f64),
        // Every multiplier is built from logic.
        Strategy::Latency => (base_lut * params.latency_lut_factor, 0.0),
    };
    TradeoffPoint {
        reuse_factor: rf,
        interval_cycles: params.pipeline_depth + rf,
        resources: ResourceVector::new(lut, 0.5 * lut, dsp, bram),
        source: Source::Analytic,
    }
}

/// Cost of one layer at one reuse factor; a calibration record with the exact
/// key wins over the analytic model.
pub fn pl_point(
    layer: &LayerSpec,
    rf: u64,
    strategy: Strategy,
    params: &PlModelParams,
    calib: Option<&CalibrationTable>,
) -> Result<TradeoffPoint> {
    if !is_legal_rf(layer, rf) {
        return Err(Error::IllegalReuseFactor {
            rf,
            k: layer.k,
            n: layer.n,
        });
    }
    if let Some(rec) = calib.and_then(|c| c.pl_record(layer.k, layer.n, rf, strategy)) {
        return Ok(TradeoffPoint {
            reuse_factor: rf,
            interval_cycles: rec.interval_cycles,
            resources: rec.resources,
            source: Source::Calibrated,
        });
    }
    Ok(analytic_point(layer, rf, strategy, params))
}

pub fn tradeoff_curve(
    layer: &LayerSpec,
    strategy: Strategy,
    params: &PlModelParams,
    calib: Option<&CalibrationTable>,
) -> Result<TradeoffCurve> {
    let points = legal_reuse_factors(layer)
        .into_iter()
        .map(|rf| pl_point(layer, rf, strategy, params, calib))
        .collect::<Result<Vec<_>>>()?;
    TradeoffCurve::new(layer.k, layer.n, strategy, points)
}

/// Smallest legal reuse factor whose resources fit `budget` componentwise.
pub fn min_feasible_rf(
    layer: &LayerSpec,
    budget: &ResourceVector,
    strategy: Strategy,
    params: &PlModelParams,
    calib: Option<&CalibrationTable>,
) -> Result<u64> {
    budget.validate()?;
    let rfs = legal_reuse_factors(layer);
    for &rf in &rfs {
        let point = pl_point(layer, rf, strategy, params, calib)?;
        if point.resources.fits_within(budget) {
            return Ok(rf);
        }
    }
    Err(Error::ResourceWall {
        k: layer.k,
        n: layer.n,
        max_rf: rfs.last().copied().unwrap_or(1),
    })
}

/// Steady-state interval of a PL dataflow pipeline: its slowest stage.
pub fn pl_network_interval(
    network: &NetworkSpec,
    rfs: &[u64],
    strategy: Strategy,
    params: &PlModelParams,
    calib: Option<&CalibrationTable>,
) -> Result<u64> {
    if rfs.len() != network.layers.len() {
        return Err(Error::LengthMismatch(format!(
            "{} reuse factors for {} layers",
            rfs.len(),
            network.layers.len()
        )));
    }
    let mut worst = 0;
    for (layer, &rf) in network.layers.iter().zip(rfs) {
        worst = worst.max(pl_point(layer, rf, strategy, params, calib)?.interval_cycles);
    }
    Ok(worst)
}

/// Share of `budget` assigned to `layer`, proportional to its MAC count.
pub fn prorated_budget(budget: &ResourceVector, layer: &LayerSpec, network: &NetworkSpec) -> ResourceVector {
    let total = network.mac_count();
    if total == 0 {
        return ResourceVector::ZERO;
    }
    budget.scale(layer.mac_count() as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PlRecord;

    fn layer(m: u64, k: u64, n: u64) -> LayerSpec {
        LayerSpec::new("t", m, k, n).unwrap()
    }

    /// Independent divisor oracle: test every candidate.
    fn divisors_by_scan(v: u64) -> Vec<u64> {
        (1..=v).filter(|d| v.is_multiple_of(*d)).collect()
    }

    #[test]
    fn legal_rf_examples() {
        assert_eq!(legal_reuse_factors(&layer(8, 4, 4)), vec![1, 2, 4, 8, 16]);
        assert_eq!(legal_reuse_factors(&layer(8, 1, 1)), vec![1]);
        assert_eq!(legal_reuse_factors(&layer(8, 16, 8)), vec![1, 2, 4, 8, 16, 32, 64, 128]);
        for (k, n) in [(3, 5), (12, 18), (7, 49), (64, 64), (36, 36)] {
            assert_eq!(legal_reuse_factors(&layer(1, k, n)), divisors_by_scan(k * n));
        }
    }

    #[test]
    fn analytic_resource_strategy_points() {
        let l = layer(8, 64, 64);
        let p = PlModelParams::default();
        let p1 = pl_point(&l, 1, Strategy::Resource, &p, None).unwrap();
        assert_eq!(p1.interval_cycles, 9);
        assert_eq!(p1.resources.dsp, 4096.0);
        assert_eq!(p1.resources.lut, 25.0 * 4096.0);
        assert_eq!(p1.resources.ff, 0.5 * 25.0 * 4096.0);
        // 4096 bytes of int8 weights over 2304-byte blocks.
        assert_eq!(p1.resources.bram, 2.0);
        assert_eq!(p1.source, Source::Analytic);
        let p64 = pl_point(&l, 64, Strategy::Resource, &p, None).unwrap();
        assert_eq!(p64.interval_cycles, 72);
        assert_eq!(p64.resources.dsp, 64.0);
    }

    #[test]
    fn latency_strategy_uses_logic_multipliers() {
        let l = layer(8, 64, 64);
        let p = PlModelParams::default();
        let lat = pl_point(&l, 4, Strategy::Latency, &p, None).unwrap();
        let res = pl_point(&l, 4, Strategy::Resource, &p, None).unwrap();
        assert_eq!(lat.interval_cycles, res.interval_cycles);
        assert_eq!(lat.resources.lut, 4.0 * res.resources.lut);
        assert_eq!(lat.resources.dsp, 0.0);
    }

    #[test]
    fn illegal_rf_is_rejected() {
        let l = layer(8, 64, 64);
        assert!(matches!(
            pl_point(&l, 3, Strategy::Resource, &PlModelParams::default(), None),
            Err(Error::IllegalReuseFactor { rf: 3, .. })
        ));
        assert!(pl_point(&l, 8192, Strategy::Resource, &PlModelParams::default(), None).is_err());
    }

    #[test]
    fn calibrated_record_passes_through() {
        let rec = PlRecord {
            k: 64,
            n: 64,
            reuse_factor: 2,
            strategy: Strategy::Resource,
            interval_cycles: 40,
            resources: ResourceVector::new(1.0, 2.0, 3.0, 4.0),
        };
        let calib = CalibrationTable::new(vec![rec.clone()], vec![]).unwrap();
        let p = pl_point(
            &layer(8, 64, 64),
            2,
            Strategy::Resource,
            &PlModelParams::default(),
            Some(&calib),
        )
        .unwrap();
        assert_eq!(p.source, Source::Calibrated);
        assert_eq!(p.interval_cycles, 40);
        assert_eq!(p.resources, rec.resources);
        // A different strategy does not match the key.
        let q = pl_point(
            &layer(8, 64, 64),
            2,
            Strategy::Latency,
            &PlModelParams::default(),
            Some(&calib),
        )
        .unwrap();
        assert_eq!(q.source, Source::Analytic);
    }

    #[test]
    fn curve_of_64x64() {
        let c = tradeoff_curve(&layer(8, 64, 64), Strategy::Resource, &PlModelParams::default(), None).unwrap();
        assert_eq!(c.points.len(), 13);
        assert_eq!(c.points.first().unwrap().interval_cycles, 9);
        assert_eq!(c.points.last().unwrap().interval_cycles, 4104);
        assert_eq!(c.uniform_source(), Some(Source::Analytic));
    }

    #[test]
    fn single_point_curve() {
        let c = tradeoff_curve(&layer(8, 1, 1), Strategy::Resource, &PlModelParams::default(), None).unwrap();
        assert_eq!(c.points.len(), 1);
    }

    #[test]
    fn mixed_curve_violation_is_reported() {
        // Calibrated rf=2 claims more DSPs than the analytic rf=1 point.
        let rec = PlRecord {
            k: 4,
            n: 4,
            reuse_factor: 2,
            strategy: Strategy::Resource,
            interval_cycles: 10,
            resources: ResourceVector::new(0.0, 0.0, 1000.0, 0.0),
        };
        let calib = CalibrationTable::new(vec![rec], vec![]).unwrap();
        let err = tradeoff_curve(
            &layer(8, 4, 4),
            Strategy::Resource,
            &PlModelParams::default(),
            Some(&calib),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonMonotone { .. }), "{err}");
    }

    #[test]
    fn min_feasible_rf_examples() {
        let l = layer(8, 64, 64);
        let p = PlModelParams::default();
        let big = 1e12;
        let dsp_1024 = ResourceVector::new(big, big, 1024.0, big);
        assert_eq!(min_feasible_rf(&l, &dsp_1024, Strategy::Resource, &p, None).unwrap(), 4);
        let everything = ResourceVector::new(big, big, big, big);
        assert_eq!(
            min_feasible_rf(&l, &everything, Strategy::Resource, &p, None).unwrap(),
            1
        );
        let no_dsp = ResourceVector::new(big, big, 0.0, big);
        assert!(matches!(
            min_feasible_rf(&l, &no_dsp, Strategy::Resource, &p, None),
            Err(Error::ResourceWall { .. })
        ));
    }

    #[test]
    fn network_interval_is_slowest_stage() {
        let net = NetworkSpec::new("n", vec![layer(8, 64, 64), layer(8, 64, 64)], None).unwrap();
        let p = PlModelParams::default();
        assert_eq!(
            pl_network_interval(&net, &[1, 64], Strategy::Resource, &p, None).unwrap(),
            72
        );
        assert_eq!(
            pl_network_interval(&net, &[1, 1], Strategy::Resource, &p, None).unwrap(),
            9
        );
        assert!(matches!(
            pl_network_interval(&net, &[1], Strategy::Resource, &p, None),
            Err(Error::LengthMismatch(_))
        ));
    }
}
