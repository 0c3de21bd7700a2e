use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type of activations and weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    I8,
}

impl Dtype {
    pub fn bytes(self) -> u64 {
        match self {
            Dtype::I8 => 1,
        }
    }
}

/// One dense layer as a GEMM: `(m x k) * (k x n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Batch rows.
    pub m: u64,
    /// Input features, the reduction dimension.
    pub k: u64,
    /// Output features.
    pub n: u64,
    #[serde(default)]
    pub dtype: Dtype,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, m: u64, k: u64, n: u64) -> Result<Self> {
        let layer = LayerSpec {
            name: name.into(),
            m,
            k,
            n,
            dtype: Dtype::I8,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return Err(Error::invalid(format!(
                "layer '{}' has a zero dimension (m={}, k={}, n={})",
                self.name, self.m, self.k, self.n
            )));
        }
        Ok(())
    }

    /// `m * k * n` on the logical (unpadded) dimensions.
    pub fn mac_count(&self) -> u64 {
        mac_count(self)
    }

    /// Number of weights, `k * n`.
    pub fn weights(&self) -> u64 {
        self.k * self.n
    }
}

pub fn mac_count(layer: &LayerSpec) -> u64 {
    layer.m * layer.k * layer.n
}

/// An ordered chain of dense layers sharing one batch size.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// Goal in inferences per second.
    pub target_throughput_hz: Option<f64>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>, target_throughput_hz: Option<f64>) -> Result<Self> {
        let net = NetworkSpec {
            name: name.into(),
            layers,
            target_throughput_hz,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Empty(format!("network '{}' has no layers", self.name)));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        let batch = self.layers[0].m;
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[1].m != batch {
                return Err(Error::invalid(format!(
                    "layer {} ('{}') has batch {} but the network batch is {batch}",
                    i + 1,
                    pair[1].name,
                    pair[1].m
                )));
            }
            if pair[0].n != pair[1].k {
                return Err(Error::invalid(format!(
                    "layer {i} ('{}') outputs {} features but layer {} ('{}') expects {}",
                    pair[0].name,
                    pair[0].n,
                    i + 1,
                    pair[1].name,
                    pair[1].k
                )));
            }
        }
        if let Some(t) = self.target_throughput_hz {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::invalid("target_throughput_hz must be positive"));
            }
        }
        Ok(())
    }

    pub fn batch(&self) -> u64 {
        self.layers.first().map_or(0, |l| l.m)
    }

    pub fn mac_count(&self) -> u64 {
        self.layers.iter().map(mac_count).sum()
    }

    pub fn from_json_str(text: &str, context: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::parse(context, e))?;
        file.into_spec()
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            name: self.name.clone(),
            batch: self.batch(),
            target_throughput_hz: self.target_throughput_hz,
            layers: self
                .layers
                .iter()
                .map(|l| LayerEntry {
                    name: l.name.clone(),
                    k: l.k,
                    n: l.n,
                    dtype: l.dtype,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }
}

/// On-disk network format; `batch` applies to every layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub name: String,
    pub batch: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_throughput_hz: Option<f64>,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub k: u64,
    pub n: u64,
    #[serde(default)]
    pub dtype: Dtype,
}

impl NetworkFile {
    pub fn into_spec(self) -> Result<NetworkSpec> {
        let batch = self.batch;
        let layers = self
            .layers
            .into_iter()
            .map(|e| LayerSpec {
                name: e.name,
                m: batch,
                k: e.k,
                n: e.n,
                dtype: e.dtype,
            })
            .collect();
        NetworkSpec::new(self.name, layers, self.target_throughput_hz)
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    NetworkSpec::from_json_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(dims: &[(u64, u64)]) -> String {
        let layers: Vec<String> = dims
            .iter()
            .enumerate()
            .map(|(i, (k, n))| format!(r#"{{"name":"fc{i}","k":{k},"n":{n}}}"#))
            .collect();
        format!(r#"{{"name":"t","batch":8,"layers":[{}]}}"#, layers.join(","))
    }

    #[test]
    fn accepts_compatible_chain() {
        let net = NetworkSpec::from_json_str(&chain(&[(16, 16), (16, 8)]), "t").unwrap();
        assert_eq!(net.layers.len(), 2);
        assert_eq!((net.layers[0].m, net.layers[0].k, net.layers[0].n), (8, 16, 16));
        assert_eq!((net.layers[1].m, net.layers[1].k, net.layers[1].n), (8, 16, 8));
    }

    #[test]
    fn rejects_mismatched_chain() {
        let err = NetworkSpec::from_json_str(&chain(&[(16, 16), (32, 8)]), "t").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(NetworkSpec::from_json_str(&chain(&[(0, 16)]), "t").is_err());
        assert!(
            NetworkSpec::from_json_str(r#"{"name":"t","batch":0,"layers":[{"name":"a","k":1,"n":1}]}"#, "t").is_err()
        );
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(matches!(
            NetworkSpec::from_json_str("{\"name\": ", "t"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn mac_count_examples() {
        assert_eq!(LayerSpec::new("a", 8, 128, 128).unwrap().mac_count(), 131_072);
        assert_eq!(LayerSpec::new("a", 1, 1, 1).unwrap().mac_count(), 1);
    }
}
