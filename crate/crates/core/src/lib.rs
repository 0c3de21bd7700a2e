//! Design-space exploration for mapping quantized dense networks onto the
//! programmable logic (PL) and AI-Engine (AIE) array of an adaptive SoC.
//!
//! * [`model`]: device, network, calibration and plan types with their loaders.
//! * [`plcost`]: reuse-factor trade-off curves for hls4ml-style PL layers.
//! * [`aiecost`]: roofline latency of spatially and API-tiled GEMMs on the AIE array.
//! * [`lare`]: the latency-adjusted resource equivalent, the PL/AIE decision boundary.
//! * [`planner`]: tiling search, band layout and PL/AIE partitioning.
//! * [`exec`]: functional execution of tiling plans against a reference GEMM.

pub mod aiecost;
pub mod error;
pub mod exec;
pub mod lare;
pub mod model;
pub mod planner;
pub mod plcost;

pub use error::{Error, Result};
