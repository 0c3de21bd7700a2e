use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aiecost::tile_footprint;
use crate::model::{DeviceSpec, Dims3, Domain, Dtype, LayerPlan, NetworkSpec, TilingPlan};

/// A broken plan invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub layer: Option<usize>,
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(i) => write!(f, "layer {i}: {}: {}", self.invariant, self.detail),
            None => write!(f, "{}: {}", self.invariant, self.detail),
        }
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn check(&mut self, ok: bool, layer: Option<usize>, invariant: &'static str, detail: impl FnOnce() -> String) {
        if !ok {
            self.out.push(Violation {
                layer,
                invariant,
                detail: detail(),
            });
        }
    }
}

/// Re-derives every legality rule of a plan from its own fields.
///
/// Nothing here trusts the planner: padding, divisibility, API shapes,
/// repetitions, memory, column spans and band occupancy are all recomputed.
pub fn validate_plan(
    plan: &TilingPlan,
    network: Option<&NetworkSpec>,
    device: &DeviceSpec,
) -> Result<(), Vec<Violation>> {
    let mut ck = Checker { out: Vec::new() };
    ck.check(!plan.layers.is_empty(), None, "nonempty", || {
        "plan has no layers".into()
    });
    for (i, w) in plan.layers.windows(2).enumerate() {
        ck.check(w[0].n == w[1].k, Some(i + 1), "chain", || {
            format!("input width {} does not match previous output {}", w[1].k, w[0].n)
        });
    }
    if let Some(net) = network {
        ck.check(net.layers.len() == plan.layers.len(), None, "layer_count", || {
            format!(
                "plan has {} layers, network has {}",
                plan.layers.len(),
                net.layers.len()
            )
        });
        for (i, (l, p)) in net.layers.iter().zip(&plan.layers).enumerate() {
            ck.check((l.m, l.k, l.n) == (p.m, p.k, p.n), Some(i), "dims", || {
                format!("plan ({},{},{}) vs network ({},{},{})", p.m, p.k, p.n, l.m, l.k, l.n)
            });
        }
    }
    for (i, layer) in plan.layers.iter().enumerate() {
        ck.check(layer.m == plan.batch, Some(i), "batch", || {
            format!("m = {} but batch is {}", layer.m, plan.batch)
        });
        ck.check(layer.m > 0 && layer.k > 0 && layer.n > 0, Some(i), "dims", || {
            "zero dimension".into()
        });
        ck.check(
            layer.latency_cycles.is_finite() && layer.latency_cycles >= 0.0,
            Some(i),
            "latency",
            || {
                format!(
                    "latency_cycles {} is not a finite non-negative number",
                    layer.latency_cycles
                )
            },
        );
        match layer.domain {
            Domain::Pl => check_pl(&mut ck, i, layer),
            Domain::Aie => check_aie(&mut ck, i, layer, device),
        }
    }
    check_bands(&mut ck, plan, device);
    if ck.out.is_empty() {
        Ok(())
    } else {
        Err(ck.out)
    }
}

fn check_pl(ck: &mut Checker, i: usize, layer: &LayerPlan) {
    ck.check(layer.aie.is_none(), Some(i), "pl_mapping", || {
        "PL layer carries an AIE mapping".into()
    });
    match layer.rf {
        None => ck.check(false, Some(i), "reuse_factor", || "PL layer has no reuse factor".into()),
        Some(rf) => {
            let kn = layer.k * layer.n;
            ck.check(rf >= 1 && kn.is_multiple_of(rf), Some(i), "reuse_factor", || {
                format!("rf {rf} does not divide k*n = {kn}")
            });
        }
    }
}

fn check_aie(ck: &mut Checker, i: usize, layer: &LayerPlan, device: &DeviceSpec) {
    let Some(a) = &layer.aie else {
        ck.check(false, Some(i), "aie_mapping", || "AIE layer has no mapping".into());
        return;
    };
    let l = Some(i);
    ck.check(layer.rf.is_none(), l, "aie_mapping", || {
        "AIE layer carries a reuse factor".into()
    });
    ck.check(device.legal_api_shapes.contains(&a.api_shape), l, "api_shape", || {
        format!("{} is not a legal API shape", a.api_shape)
    });
    if a.p_k == 0 || a.p_n == 0 {
        ck.check(false, l, "spatial", || {
            format!("zero spatial factor ({}, {})", a.p_k, a.p_n)
        });
        return;
    }
    ck.check(a.p_k <= device.usable_width(), l, "spatial", || {
        format!("p_k {} exceeds usable width {}", a.p_k, device.usable_width())
    });
    ck.check(a.p_n <= device.rows, l, "spatial", || {
        format!("p_n {} exceeds {} rows", a.p_n, device.rows)
    });

    let u = device.unroll;
    let s = a.api_shape;
    let steps = [
        ("m", layer.m, a.padded.m, s.m * u.m),
        ("k", layer.k, a.padded.k, a.p_k * s.k * u.k),
        ("n", layer.n, a.padded.n, a.p_n * s.n * u.n),
    ];
    for (name, logical, padded, step) in steps {
        if step == 0 {
            continue;
        }
        ck.check(logical >= step, l, "padding", || {
            format!("{name} = {logical} is smaller than one spatial API step {step}")
        });
        ck.check(padded % step == 0, l, "divisibility", || {
            format!("padded {name} = {padded} is not a multiple of {step}")
        });
        ck.check(padded >= logical && padded - logical < step, l, "padding", || {
            format!("padded {name} = {padded} is not the minimal padding of {logical} to {step}")
        });
    }
    ck.check(a.q_k * a.p_k == a.padded.k, l, "divisibility", || {
        format!("p_k {} * q_k {} != padded k {}", a.p_k, a.q_k, a.padded.k)
    });
    ck.check(a.q_n * a.p_n == a.padded.n, l, "divisibility", || {
        format!("p_n {} * q_n {} != padded n {}", a.p_n, a.q_n, a.padded.n)
    });
    let eff = s.times(&u);
    if eff.all_positive() {
        let want = Dims3::new(a.padded.m / eff.m, a.q_k / eff.k, a.q_n / eff.n);
        let covers = a.padded.m % eff.m == 0 && a.q_k % eff.k == 0 && a.q_n % eff.n == 0;
        ck.check(covers && a.r == want, l, "repetitions", || {
            format!(
                "r = {} but per-tile ({},{},{}) over {eff} needs {want}",
                a.r, a.padded.m, a.q_k, a.q_n
            )
        });
    }
    let footprint = tile_footprint(a.q_k, a.q_n, a.padded.m, Dtype::I8);
    ck.check(footprint <= device.tile_data_budget(), l, "memory", || {
        format!("tile needs {footprint} bytes, budget is {}", device.tile_data_budget())
    });
    let [first, last] = a.column_span;
    ck.check(
        first >= device.usable_column_lo && last <= device.usable_column_hi && first <= last,
        l,
        "column_span",
        || {
            format!(
                "span [{first}, {last}] outside usable columns [{}, {}]",
                device.usable_column_lo, device.usable_column_hi
            )
        },
    );
    ck.check(
        last.wrapping_sub(first).wrapping_add(1) == a.p_k,
        l,
        "column_span",
        || format!("span [{first}, {last}] does not hold p_k = {} columns", a.p_k),
    );
}

fn check_bands(ck: &mut Checker, plan: &TilingPlan, device: &DeviceSpec) {
    let aie: Vec<(usize, &crate::model::AieMapping)> = plan
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.aie.as_ref().map(|a| (i, a)))
        .collect();
    let bands_used = aie.iter().map(|(_, a)| a.band + 1).max().unwrap_or(0);
    ck.check(bands_used <= plan.bands, None, "bands", || {
        format!("layers use {bands_used} bands, plan declares {}", plan.bands)
    });
    for (x, &(i, a)) in aie.iter().enumerate() {
        for &(j, b) in &aie[x + 1..] {
            let disjoint = a.column_span[1] < b.column_span[0] || b.column_span[1] < a.column_span[0];
            ck.check(a.band != b.band || disjoint, Some(j), "band_overlap", || {
                format!("columns overlap layer {i} in band {}", a.band)
            });
        }
    }
    let rows: u64 = (0..bands_used)
        .map(|band| {
            aie.iter()
                .filter(|(_, a)| a.band == band)
                .map(|(_, a)| a.p_n)
                .max()
                .unwrap_or(0)
        })
        .sum();
    ck.check(rows <= device.rows, None, "bands", || {
        format!("bands need {rows} rows, the array has {}", device.rows)
    });
}
