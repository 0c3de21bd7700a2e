//! Domain types shared by every engine, plus the file loaders.

mod calibration;
mod device;
mod network;
mod plan;
mod resources;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use calibration::{load_calibration, AieKey, AieRecord, CalibrationTable, PlKey, PlRecord, Strategy};
pub use device::{load_device, AieModelParams, DeviceSpec, Dims3, LareParams, PlModelParams, BUNDLED_PROFILES};
pub use network::{load_network, mac_count, Dtype, LayerEntry, LayerSpec, NetworkFile, NetworkSpec};
pub use plan::{
    boundary_crossings, crossing_penalty, AieMapping, Domain, LayerPlan, PlanFlag, TilingPlan, DEFAULT_CROSSING_RHO,
};
pub use resources::{ResourceVector, ResourceWeights};

/// Where a cost figure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Analytic,
    Calibrated,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Source::Analytic => "analytic",
            Source::Calibrated => "calibrated",
        })
    }
}

/// Smallest multiple of `step` that is `>= value`.
pub fn round_up(value: u64, step: u64) -> u64 {
    value.div_ceil(step) * step
}
