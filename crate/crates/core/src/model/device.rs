use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::resources::{ResourceVector, ResourceWeights};
use crate::error::{Error, Result};

/// An `(m, k, n)` triple: API tile shapes, unroll factors, per-tile workloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u64; 3]", into = "[u64; 3]")]
pub struct Dims3 {
    pub m: u64,
    pub k: u64,
    pub n: u64,
}

impl Dims3 {
    pub const fn new(m: u64, k: u64, n: u64) -> Self {
        Dims3 { m, k, n }
    }

    pub fn product(&self) -> u64 {
        self.m * self.k * self.n
    }

    pub fn all_positive(&self) -> bool {
        self.m > 0 && self.k > 0 && self.n > 0
    }

    /// Elementwise product.
    pub fn times(&self, other: &Dims3) -> Dims3 {
        Dims3::new(self.m * other.m, self.k * other.k, self.n * other.n)
    }
}

impl From<[u64; 3]> for Dims3 {
    fn from(v: [u64; 3]) -> Self {
        Dims3::new(v[0], v[1], v[2])
    }
}

impl From<Dims3> for [u64; 3] {
    fn from(d: Dims3) -> Self {
        [d.m, d.k, d.n]
    }
}

impl fmt::Display for Dims3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.m, self.k, self.n)
    }
}

/// Constants of the analytic programmable-logic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlModelParams {
    /// Fixed pipeline depth added to every interval, PL cycles.
    pub pipeline_depth: u64,
    /// LUTs per instantiated multiplier under the Resource strategy.
    pub lut_per_mult: f64,
    /// LUT multiplier of the Latency strategy over the Resource strategy.
    pub latency_lut_factor: f64,
    /// Bytes held by one BRAM block.
    pub bram_bytes: u64,
}

impl Default for PlModelParams {
    fn default() -> Self {
        PlModelParams {
            pipeline_depth: 8,
            lut_per_mult: 25.0,
            latency_lut_factor: 4.0,
            bram_bytes: 2304,
        }
    }
}

/// Constants of the analytic AI-Engine model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AieModelParams {
    /// Lock acquisition and pipeline fill, cycles per kernel invocation.
    pub overhead_cycles: u64,
    /// Extra compute fraction charged when the reduction loop is longer than the output loop.
    pub k_heavy_penalty: f64,
    pub cascade_hop_cycles: u64,
    /// Fraction of a column's input stream time paid again for each extra row it is broadcast to.
    pub row_broadcast_factor: f64,
    /// Latency multiplier per extra band sharing a layer's columns.
    pub band_contention: f64,
}

impl Default for AieModelParams {
    fn default() -> Self {
        AieModelParams {
            overhead_cycles: 50,
            k_heavy_penalty: 0.25,
            cascade_hop_cycles: 1,
            row_broadcast_factor: 0.125,
            band_contention: 1.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LareParams {
    /// A LARE scalar below this fraction of the rf=1 scalar flags an under-utilized AIE mapping.
    pub under_utilized_fraction: f64,
}

impl Default for LareParams {
    fn default() -> Self {
        LareParams {
            under_utilized_fraction: 0.1,
        }
    }
}

fn default_weight_mem_fraction() -> f64 {
    0.75
}

/// Geometry, clocks and model constants of one FPGA + AI-Engine device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    #[serde(default)]
    pub name: String,
    pub columns: u64,
    pub rows: u64,
    pub usable_column_lo: u64,
    pub usable_column_hi: u64,
    pub macs_per_cycle: u64,
    pub aie_clock_hz: f64,
    pub pl_clock_hz: f64,
    pub local_mem_bytes: u64,
    pub stream_port_bits: u64,
    pub cascade_bits: u64,
    pub plio_bits: u64,
    pub legal_api_shapes: Vec<Dims3>,
    pub unroll: Dims3,
    /// Share of local memory available to the data buffers of one tile.
    #[serde(default = "default_weight_mem_fraction")]
    pub weight_mem_fraction: f64,
    #[serde(default)]
    pub resource_weights: ResourceWeights,
    /// PL resources available to a whole network.
    #[serde(default)]
    pub pl_resources: ResourceVector,
    #[serde(default)]
    pub pl_model: PlModelParams,
    #[serde(default)]
    pub aie_model: AieModelParams,
    #[serde(default)]
    pub lare: LareParams,
}

const VEK280_JSON: &str = include_str!("../../profiles/vek280.json");

/// Names of the device profiles compiled into the library.
pub const BUNDLED_PROFILES: &[&str] = &["vek280"];

impl DeviceSpec {
    pub fn bundled(name: &str) -> Result<DeviceSpec> {
        match name {
            "vek280" => DeviceSpec::from_json_str(VEK280_JSON, "bundled profile vek280"),
            other => Err(Error::invalid(format!(
                "unknown bundled device profile '{other}' (available: {})",
                BUNDLED_PROFILES.join(", ")
            ))),
        }
    }

    pub fn vek280() -> DeviceSpec {
        DeviceSpec::bundled("vek280").expect("bundled vek280 profile is valid")
    }

    pub fn from_json_str(text: &str, context: &str) -> Result<DeviceSpec> {
        let spec: DeviceSpec = serde_json::from_str(text).map_err(|e| Error::parse(context, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("device spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("columns", self.columns),
            ("rows", self.rows),
            ("macs_per_cycle", self.macs_per_cycle),
            ("local_mem_bytes", self.local_mem_bytes),
            ("stream_port_bits", self.stream_port_bits),
            ("cascade_bits", self.cascade_bits),
            ("plio_bits", self.plio_bits),
            ("pl_model.bram_bytes", self.pl_model.bram_bytes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("aie_clock_hz", self.aie_clock_hz), ("pl_clock_hz", self.pl_clock_hz)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.usable_column_lo > self.usable_column_hi || self.usable_column_hi >= self.columns {
            return Err(Error::invalid(format!(
                "usable column range [{}, {}] must satisfy 0 <= lo <= hi < columns ({})",
                self.usable_column_lo, self.usable_column_hi, self.columns
            )));
        }
        if self.legal_api_shapes.is_empty() {
            return Err(Error::invalid("legal_api_shapes must not be empty"));
        }
        if let Some(bad) = self.legal_api_shapes.iter().find(|s| !s.all_positive()) {
            return Err(Error::invalid(format!("API shape {bad} has a zero entry")));
        }
        for (i, s) in self.legal_api_shapes.iter().enumerate() {
            if self.legal_api_shapes[..i].contains(s) {
                return Err(Error::invalid(format!("API shape {s} listed twice")));
            }
        }
        if !self.unroll.all_positive() {
            return Err(Error::invalid(format!("unroll {} has a zero entry", self.unroll)));
        }
        if !(self.weight_mem_fraction > 0.0 && self.weight_mem_fraction <= 1.0) {
            return Err(Error::invalid("weight_mem_fraction must lie in (0, 1]"));
        }
        self.resource_weights.validate()?;
        self.pl_resources.validate()?;
        let pl = &self.pl_model;
        if !(pl.lut_per_mult.is_finite() && pl.lut_per_mult >= 0.0)
            || !(pl.latency_lut_factor.is_finite() && pl.latency_lut_factor >= 0.0)
        {
            return Err(Error::invalid("pl_model LUT constants must be finite and nonnegative"));
        }
        let aie = &self.aie_model;
        if !(aie.k_heavy_penalty.is_finite() && aie.k_heavy_penalty >= 0.0)
            || !(aie.row_broadcast_factor.is_finite() && aie.row_broadcast_factor >= 0.0)
        {
            return Err(Error::invalid("aie_model penalties must be finite and nonnegative"));
        }
        if !(aie.band_contention.is_finite() && aie.band_contention >= 1.0) {
            return Err(Error::invalid("aie_model.band_contention must be >= 1"));
        }
        let frac = self.lare.under_utilized_fraction;
        if !(frac.is_finite() && (0.0..=1.0).contains(&frac)) {
            return Err(Error::invalid("lare.under_utilized_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Number of columns the planner may use.
    pub fn usable_width(&self) -> u64 {
        self.usable_column_hi - self.usable_column_lo + 1
    }

    pub fn stream_bytes_per_cycle(&self) -> u64 {
        (self.stream_port_bits / 8).max(1)
    }

    pub fn cascade_bytes_per_cycle(&self) -> u64 {
        (self.cascade_bits / 8).max(1)
    }

    /// Local memory bytes a tile may fill with weights and activation buffers.
    pub fn tile_data_budget(&self) -> u64 {
        (self.local_mem_bytes as f64 * self.weight_mem_fraction).floor() as u64
    }

    /// Bandwidth of one PL-to-AIE stream at the PL clock, bytes per second.
    pub fn plio_bandwidth(&self) -> f64 {
        self.plio_bits as f64 / 8.0 * self.pl_clock_hz
    }
}

pub fn load_device(path: impl AsRef<Path>) -> Result<DeviceSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    DeviceSpec::from_json_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_vek280_matches_published_geometry() {
        let d = DeviceSpec::vek280();
        assert_eq!(d.columns, 38);
        assert_eq!(d.rows, 8);
        assert_eq!((d.usable_column_lo, d.usable_column_hi), (7, 37));
        assert_eq!(d.usable_width(), 31);
        assert_eq!(d.macs_per_cycle, 256);
        assert_eq!(d.aie_clock_hz, 1e9);
        assert_eq!(d.pl_clock_hz, 312.5e6);
        assert_eq!(d.local_mem_bytes, 65536);
        assert_eq!(d.stream_port_bits, 32);
        assert_eq!(d.cascade_bits, 512);
        assert_eq!(d.plio_bits, 128);
        assert_eq!(d.unroll, Dims3::new(2, 2, 2));
        assert_eq!(d.legal_api_shapes, vec![Dims3::new(4, 8, 8), Dims3::new(4, 16, 8)]);
        assert_eq!(d.tile_data_budget(), 49152);
        // 128-bit PLIO at 312.5 MHz is 5 GB/s.
        assert_eq!(d.plio_bandwidth(), 5e9);
    }

    #[test]
    fn rejects_usable_range_past_array() {
        let mut d = DeviceSpec::vek280();
        d.usable_column_hi = 40;
        assert!(matches!(d.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_empty_shape_set() {
        let mut d = DeviceSpec::vek280();
        d.legal_api_shapes.clear();
        assert!(d.validate().is_err());
    }

    #[test]
    fn rejects_zero_shape_entry() {
        let mut d = DeviceSpec::vek280();
        d.legal_api_shapes.push(Dims3::new(4, 0, 8));
        assert!(d.validate().is_err());
    }

    #[test]
    fn missing_optional_sections_take_defaults() {
        let text = r#"{
            "columns": 4, "rows": 2, "usable_column_lo": 0, "usable_column_hi": 3,
            "macs_per_cycle": 256, "aie_clock_hz": 1e9, "pl_clock_hz": 3e8,
            "local_mem_bytes": 65536, "stream_port_bits": 32, "cascade_bits": 512,
            "plio_bits": 128, "legal_api_shapes": [[4,8,8]], "unroll": [2,2,2]
        }"#;
        let d = DeviceSpec::from_json_str(text, "inline").unwrap();
        assert_eq!(d.aie_model, AieModelParams::default());
        assert_eq!(d.resource_weights, ResourceWeights::default());
        assert_eq!(d.weight_mem_fraction, 0.75);
    }

    #[test]
    fn unknown_bundled_profile_is_an_error() {
        assert!(DeviceSpec::bundled("vck190").is_err());
    }
}
