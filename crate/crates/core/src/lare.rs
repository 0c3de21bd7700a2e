//! Latency-adjusted resource equivalent (LARE).
//!
//! LARE is the PL resource a layer needs to match a given AIE interval. It is
//! read off the layer's reuse-factor trade-off curve by piecewise-linear
//! interpolation in (seconds, resource) space. AIE intervals outside the
//! curve are clamped to its end points and marked rather than extrapolated.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aiecost::AieLatency;
use crate::error::{Error, Result};
use crate::model::{CalibrationTable, DeviceSpec, LayerSpec, ResourceVector, ResourceWeights, Source, Strategy};
use crate::planner::{plan_layer, PlanConstraints};
use crate::plcost::{tradeoff_curve, TradeoffCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMarker {
    InRange,
    /// The AIE is faster than the fully parallel PL point.
    AboveCurve,
    /// The AIE is slower than the most serialized PL point.
    BelowCurve,
}

impl fmt::Display for RangeMarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            RangeMarker::InRange => "in_range",
            RangeMarker::AboveCurve => "above_curve",
            RangeMarker::BelowCurve => "below_curve",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PreferPl,
    PreferAie,
    /// Componentwise and scalar comparisons disagree.
    Boundary,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Verdict::PreferPl => "prefer_pl",
            Verdict::PreferAie => "prefer_aie",
            Verdict::Boundary => "boundary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LareResult {
    pub k: u64,
    pub n: u64,
    pub strategy: Strategy,
    pub aie_cycles: u64,
    /// AIE seconds per inference.
    pub aie_interval_seconds: f64,
    /// Real-valued reuse factor at which the PL matches the AIE.
    pub rf_eq: f64,
    pub lare: ResourceVector,
    pub lare_scalar: f64,
    pub range: RangeMarker,
    /// Set only when the AIE falls outside the curve.
    pub verdict: Option<Verdict>,
    /// LARE is a small fraction of the fully parallel PL cost.
    pub under_utilized: bool,
    /// `None` when the curve mixes calibrated and analytic points.
    pub pl_source: Option<Source>,
    pub aie_source: Source,
}

/// Reads the trade-off curve at the AIE interval.
pub fn lare(curve: &TradeoffCurve, aie: &AieLatency, device: &DeviceSpec) -> Result<LareResult> {
    let (first, last) = match (curve.points.first(), curve.points.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Err(Error::Empty(format!(
                "trade-off curve for (k={}, n={}) has no points",
                curve.k, curve.n
            )))
        }
    };
    curve.validate()?;
    let secs = |cycles: u64| cycles as f64 / device.pl_clock_hz;
    let target = aie.seconds_per_inference(device);

    let (rf_eq, lare, range, verdict) = if target < secs(first.interval_cycles) {
        (
            first.reuse_factor as f64,
            first.resources,
            RangeMarker::AboveCurve,
            Some(Verdict::PreferAie),
        )
    } else if target > secs(last.interval_cycles) {
        (
            last.reuse_factor as f64,
            last.resources,
            RangeMarker::BelowCurve,
            Some(Verdict::PreferPl),
        )
    } else {
        // Last point at or below the target: among equal intervals this is
        // the largest reuse factor, which uses the least resource.
        let i = curve
            .points
            .iter()
            .rposition(|p| secs(p.interval_cycles) <= target)
            .expect("target is at or above the first point");
        let a = &curve.points[i];
        let sa = secs(a.interval_cycles);
        if sa == target || i + 1 == curve.points.len() {
            (a.reuse_factor as f64, a.resources, RangeMarker::InRange, None)
        } else {
            let b = &curve.points[i + 1];
            let t = (target - sa) / (secs(b.interval_cycles) - sa);
            let rf = a.reuse_factor as f64 + t * (b.reuse_factor - a.reuse_factor) as f64;
            (rf, a.resources.lerp(&b.resources, t), RangeMarker::InRange, None)
        }
    };

    let weights = &device.resource_weights;
    let lare_scalar = lare.scalar(weights);
    let under_utilized = lare_scalar < device.lare.under_utilized_fraction * first.resources.scalar(weights);
    Ok(LareResult {
        k: curve.k,
        n: curve.n,
        strategy: curve.strategy,
        aie_cycles: aie.cycles,
        aie_interval_seconds: target,
        rf_eq,
        lare,
        lare_scalar,
        range,
        verdict,
        under_utilized,
        pl_source: curve.uniform_source(),
        aie_source: aie.source,
    })
}

/// PL/AIE verdict for a budget. The PL is preferred when the budget covers
/// LARE in every component (ties included), the AIE when it falls short on
/// the weighted scalar, and the call is a boundary otherwise.
pub fn classify(result: &LareResult, available: &ResourceVector, weights: &ResourceWeights) -> Verdict {
    if result.lare.fits_within(available) {
        Verdict::PreferPl
    } else if available.scalar(weights) < result.lare_scalar {
        Verdict::PreferAie
    } else {
        Verdict::Boundary
    }
}

/// One row of a LARE sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LareRow {
    pub result: LareResult,
    pub budget: Option<ResourceVector>,
    pub budget_scalar: Option<f64>,
    pub verdict: Option<Verdict>,
}

pub const LARE_CSV_HEADER: [&str; 18] = [
    "k",
    "n",
    "strategy",
    "aie_cycles",
    "aie_seconds",
    "rf_eq",
    "lut",
    "ff",
    "dsp",
    "bram",
    "lare_scalar",
    "range",
    "budget_scalar",
    "verdict",
    "under_utilized",
    "pl_source",
    "aie_source",
    "interpolation",
];

impl LareRow {
    pub fn csv_record(&self) -> Vec<String> {
        let r = &self.result;
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            r.k.to_string(),
            r.n.to_string(),
            r.strategy.to_string(),
            r.aie_cycles.to_string(),
            format!("{:e}", r.aie_interval_seconds),
            format!("{:.4}", r.rf_eq),
            format!("{:.3}", r.lare.lut),
            format!("{:.3}", r.lare.ff),
            format!("{:.3}", r.lare.dsp),
            format!("{:.3}", r.lare.bram),
            format!("{:.3}", r.lare_scalar),
            r.range.to_string(),
            opt(self.budget_scalar.map(|s| format!("{s:.3}"))),
            opt(self.verdict.map(|v| v.to_string())),
            r.under_utilized.to_string(),
            r.pl_source.map_or_else(|| "mixed".to_string(), |s| s.to_string()),
            r.aie_source.to_string(),
            "linear".to_string(),
        ]
    }
}

/// Cross product of layer shapes and budgets at batch `m`.
///
/// Each shape's AIE interval comes from [`plan_layer`] under `constraints`.
/// Out-of-range rows keep their clamped verdict; in-range rows are classified
/// against each budget. An empty budget list yields one row per shape, with
/// a verdict only when the shape is out of range.
#[allow(clippy::too_many_arguments)]
pub fn lare_sweep(
    shapes: &[(u64, u64)],
    budgets: &[ResourceVector],
    m: u64,
    strategy: Strategy,
    device: &DeviceSpec,
    constraints: &PlanConstraints,
    calib: Option<&CalibrationTable>,
) -> Result<Vec<LareRow>> {
    if shapes.is_empty() {
        return Err(Error::Empty("no layer shapes to sweep".into()));
    }
    for b in budgets {
        b.validate()?;
    }
    let mut rows = Vec::with_capacity(shapes.len() * budgets.len().max(1));
    for &(k, n) in shapes {
        let layer = LayerSpec::new(format!("{k}x{n}"), m, k, n)?;
        let curve = tradeoff_curve(&layer, strategy, &device.pl_model, calib)?;
        let aie = plan_layer(&layer, device, constraints, calib)?.estimate.latency;
        let result = lare(&curve, &aie, device)?;
        if budgets.is_empty() {
            let verdict = result.verdict;
            rows.push(LareRow {
                result,
                budget: None,
                budget_scalar: None,
                verdict,
            });
            continue;
        }
        for b in budgets {
            let verdict = result
                .verdict
                .unwrap_or_else(|| classify(&result, b, &device.resource_weights));
            rows.push(LareRow {
                result: result.clone(),
                budget: Some(*b),
                budget_scalar: Some(b.scalar(&device.resource_weights)),
                verdict: Some(verdict),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aiecost::Bound;
    use crate::model::Strategy;
    use crate::plcost::TradeoffPoint;
    use proptest::prelude::*;

    fn same_clock() -> DeviceSpec {
        let mut d = DeviceSpec::vek280();
        d.pl_clock_hz = d.aie_clock_hz;
        d
    }

    fn lut(v: f64) -> ResourceVector {
        ResourceVector::new(v, 0.0, 0.0, 0.0)
    }

    fn point(rf: u64, cycles: u64, r: f64) -> TradeoffPoint {
        TradeoffPoint {
            reuse_factor: rf,
            interval_cycles: cycles,
            resources: lut(r),
            source: Source::Analytic,
        }
    }

    fn synthetic() -> TradeoffCurve {
        TradeoffCurve::new(
            4,
            4,
            Strategy::Resource,
            vec![point(1, 10, 1000.0), point(2, 20, 600.0), point(4, 40, 400.0)],
        )
        .unwrap()
    }

    fn aie(cycles: u64) -> AieLatency {
        AieLatency {
            cycles,
            bound: Bound::Compute,
            source: Source::Analytic,
            batch_rows: 1,
        }
    }

    #[test]
    fn exact_match_returns_the_point() {
        let r = lare(&synthetic(), &aie(20), &same_clock()).unwrap();
        assert_eq!(r.lare_scalar, 600.0);
        assert_eq!(r.rf_eq, 2.0);
        assert_eq!(r.range, RangeMarker::InRange);
    }

    #[test]
    fn interpolates_between_brackets() {
        let r = lare(&synthetic(), &aie(30), &same_clock()).unwrap();
        // Oracle: the line through (20, 600) and (40, 400) at 30.
        let oracle = 600.0 + (30.0 - 20.0) * (400.0 - 600.0) / (40.0 - 20.0);
        assert!((r.lare_scalar - oracle).abs() < 1e-9);
        assert!((r.rf_eq - 3.0).abs() < 1e-12);
    }

    #[test]
    fn faster_than_rf1_is_above_curve() {
        let r = lare(&synthetic(), &aie(5), &same_clock()).unwrap();
        assert_eq!(r.range, RangeMarker::AboveCurve);
        assert_eq!(r.verdict, Some(Verdict::PreferAie));
        assert_eq!(r.lare_scalar, 1000.0);
    }

    #[test]
    fn slower_than_last_point_is_below_curve() {
        let r = lare(&synthetic(), &aie(90), &same_clock()).unwrap();
        assert_eq!(r.range, RangeMarker::BelowCurve);
        assert_eq!(r.verdict, Some(Verdict::PreferPl));
        assert_eq!(r.lare_scalar, 400.0);
        assert!(!r.under_utilized);
    }

    #[test]
    fn empty_curve_is_an_error() {
        let c = TradeoffCurve {
            k: 1,
            n: 1,
            strategy: Strategy::Resource,
            points: vec![],
        };
        assert!(matches!(lare(&c, &aie(1), &same_clock()), Err(Error::Empty(_))));
    }

    #[test]
    fn classify_examples() {
        let r = lare(&synthetic(), &aie(20), &same_clock()).unwrap();
        let w = ResourceWeights::default();
        assert_eq!(classify(&r, &lut(1000.0), &w), Verdict::PreferPl);
        assert_eq!(classify(&r, &lut(300.0), &w), Verdict::PreferAie);
        assert_eq!(classify(&r, &lut(600.0), &w), Verdict::PreferPl);
        // Plenty of weighted resource but no LUTs: the two tests disagree.
        assert_eq!(
            classify(&r, &ResourceVector::new(100.0, 0.0, 10.0, 0.0), &w),
            Verdict::Boundary
        );
    }

    #[test]
    fn plateau_takes_the_cheapest_point() {
        let c = TradeoffCurve::new(
            4,
            4,
            Strategy::Resource,
            vec![
                point(1, 10, 1000.0),
                point(2, 20, 600.0),
                point(4, 20, 500.0),
                point(8, 40, 400.0),
            ],
        )
        .unwrap();
        let r = lare(&c, &aie(20), &same_clock()).unwrap();
        assert_eq!(r.lare_scalar, 500.0);
        assert_eq!(r.rf_eq, 4.0);
    }

    #[test]
    fn under_utilized_flag() {
        let c = TradeoffCurve::new(
            4,
            4,
            Strategy::Resource,
            vec![point(1, 10, 1000.0), point(16, 160, 50.0)],
        )
        .unwrap();
        assert!(lare(&c, &aie(160), &same_clock()).unwrap().under_utilized);
        assert!(!lare(&c, &aie(10), &same_clock()).unwrap().under_utilized);
    }

    #[test]
    fn sweep_cardinality_and_verdicts() {
        let d = DeviceSpec::vek280();
        let c = PlanConstraints {
            max_tiles_per_layer: 1,
            ..Default::default()
        };
        let budgets = [lut(1e9), ResourceVector::ZERO];
        let rows = lare_sweep(
            &[(32, 32), (64, 64), (128, 128)],
            &budgets,
            8,
            Strategy::Resource,
            &d,
            &c,
            None,
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        let bare = lare_sweep(&[(32, 32)], &[], 8, Strategy::Resource, &d, &c, None).unwrap();
        assert_eq!(bare.len(), 1);
        assert_eq!(bare[0].verdict, bare[0].result.verdict);
        assert_eq!(bare[0].csv_record().len(), LARE_CSV_HEADER.len());
        assert!(lare_sweep(&[], &budgets, 8, Strategy::Resource, &d, &c, None).is_err());
    }

    #[test]
    fn single_row_sweep_is_lare_then_classify() {
        let d = DeviceSpec::vek280();
        let c = PlanConstraints {
            max_tiles_per_layer: 1,
            ..Default::default()
        };
        let budget = ResourceVector::new(5000.0, 5000.0, 10.0, 10.0);
        let rows = lare_sweep(&[(64, 64)], &[budget], 8, Strategy::Resource, &d, &c, None).unwrap();
        let layer = LayerSpec::new("x", 8, 64, 64).unwrap();
        let curve = tradeoff_curve(&layer, Strategy::Resource, &d.pl_model, None).unwrap();
        let a = plan_layer(&layer, &d, &c, None).unwrap().estimate.latency;
        let r = lare(&curve, &a, &d).unwrap();
        let v = r.verdict.unwrap_or_else(|| classify(&r, &budget, &d.resource_weights));
        assert_eq!(rows[0].result, r);
        assert_eq!(rows[0].verdict, Some(v));
    }

    fn arb_curve() -> impl proptest::strategy::Strategy<Value = TradeoffCurve> {
        use proptest::strategy::Strategy as _;
        prop::collection::vec((1u64..50, 0.0f64..500.0), 1..8).prop_map(|steps| {
            let mut rf = 0;
            let mut cycles = 0;
            let mut res = 5000.0;
            let points = steps
                .into_iter()
                .map(|(dc, dr)| {
                    rf += 1;
                    cycles = (cycles + dc).max(rf);
                    res -= dr;
                    point(rf, cycles, res)
                })
                .collect();
            TradeoffCurve::new(4, 4, Strategy::Resource, points).unwrap()
        })
    }

    proptest! {
        #[test]
        fn faster_aie_never_lowers_lare(curve in arb_curve(), a in 1u64..600, b in 1u64..600) {
            let d = same_clock();
            let (fast, slow) = (a.min(b), a.max(b));
            let lf = lare(&curve, &aie(fast), &d).unwrap();
            let ls = lare(&curve, &aie(slow), &d).unwrap();
            prop_assert!(lf.lare_scalar >= ls.lare_scalar - 1e-9);
            let min_rf = curve.points[0].reuse_factor as f64;
            let max_rf = curve.points.last().unwrap().reuse_factor as f64;
            prop_assert!(lf.rf_eq >= min_rf && lf.rf_eq <= max_rf);
        }

        #[test]
        fn curve_points_are_reproduced_exactly(curve in arb_curve(), idx in 0usize..8) {
            let d = same_clock();
            let p = &curve.points[idx % curve.points.len()];
            let r = lare(&curve, &aie(p.interval_cycles), &d).unwrap();
            let same_interval: Vec<_> = curve.points.iter().filter(|q| q.interval_cycles == p.interval_cycles).collect();
            prop_assert_eq!(r.lare, same_interval.last().unwrap().resources);
        }

        #[test]
        fn verdict_is_scale_invariant(
            curve in arb_curve(),
            cycles in 1u64..600,
            budget in (0.0f64..6000.0, 0.0f64..100.0),
            exp in -4i32..5,
        ) {
            let d = same_clock();
            let c = 2f64.powi(exp);
            let avail = ResourceVector::new(budget.0, budget.1, 0.0, 0.0);
            let base = lare(&curve, &aie(cycles), &d).unwrap();
            let mut scaled_curve = curve.clone();
            for p in &mut scaled_curve.points {
                p.resources = p.resources.scale(c);
            }
            let scaled = lare(&scaled_curve, &aie(cycles), &d).unwrap();
            let w = &d.resource_weights;
            prop_assert_eq!(classify(&base, &avail, w), classify(&scaled, &avail.scale(c), w));
        }

        #[test]
        fn faster_aie_clock_never_lowers_lare(curve in arb_curve(), cycles in 1u64..600) {
            let d = same_clock();
            let mut fast = d.clone();
            fast.aie_clock_hz *= 2.0;
            let slow_r = lare(&curve, &aie(cycles), &d).unwrap();
            let fast_r = lare(&curve, &aie(cycles), &fast).unwrap();
            prop_assert!((fast_r.aie_interval_seconds * 2.0 - slow_r.aie_interval_seconds).abs() <= 1e-24);
            prop_assert!(fast_r.lare_scalar >= slow_r.lare_scalar - 1e-9);
        }
    }
}
