use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::device::Dims3;
use crate::error::{Error, Result};

/// Which fabric executes a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Pl,
    Aie,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Domain::Pl => "pl",
            Domain::Aie => "aie",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanFlag {
    /// Per-tile workload below the configured minimum.
    UnderUtilized,
    /// The layer shares columns with a layer in another band.
    MultiBand,
    /// Cost came from an uncalibrated analytic model.
    AnalyticModel,
    /// Some dimension was zero-padded.
    Padded,
}

/// Spatial and API tiling of one layer on the AI-Engine array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AieMapping {
    pub p_k: u64,
    pub p_n: u64,
    /// Padded `(m, k, n)` seen by the hardware loops.
    pub padded: Dims3,
    pub q_k: u64,
    pub q_n: u64,
    pub api_shape: Dims3,
    /// API repetition counts `(r_m, r_k, r_n)`.
    pub r: Dims3,
    pub band: u64,
    /// Inclusive device column indices.
    pub column_span: [u64; 2],
}

impl AieMapping {
    pub fn tiles(&self) -> u64 {
        self.p_k * self.p_n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub name: String,
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub domain: Domain,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub aie: Option<AieMapping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rf: Option<u64>,
    /// Stage interval in cycles of the layer's own clock, contention included.
    pub latency_cycles: f64,
    /// Time between successive inferences leaving this stage.
    pub latency_seconds: f64,
    #[serde(default)]
    pub flags: Vec<PlanFlag>,
}

impl LayerPlan {
    pub fn has_flag(&self, flag: PlanFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Complete mapping of a network, as written by `plan` and read by `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub network: String,
    pub batch: u64,
    pub layers: Vec<LayerPlan>,
    pub bands: u64,
    /// Steady-state time per inference, crossing penalty included.
    pub interval_seconds: f64,
    /// Inferences per second.
    pub throughput_hz: f64,
    pub crossings: u64,
    pub penalty_factor: f64,
}

/// Default latency overhead per extra PL-AIE boundary crossing.
pub const DEFAULT_CROSSING_RHO: f64 = 0.039;

/// Boundary crossings of a layer chain whose input arrives from and whose
/// output returns to the PL: the two I/O crossings plus one per domain change.
pub fn boundary_crossings(domains: &[Domain]) -> u64 {
    2 + domains.windows(2).filter(|w| w[0] != w[1]).count() as u64
}

/// Multiplicative interval penalty for `crossings` boundary crossings.
pub fn crossing_penalty(crossings: u64, rho: f64) -> f64 {
    1.0 + rho * crossings.saturating_sub(2) as f64
}

impl TilingPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json_str(text: &str, context: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(context, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    /// Domain sequence in network order.
    pub fn domains(&self) -> Vec<Domain> {
        self.layers.iter().map(|l| l.domain).collect()
    }
}
