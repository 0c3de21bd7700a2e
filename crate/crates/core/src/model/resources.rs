use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Programmable-logic resource usage, one count per resource class.
///
/// Counts are real-valued because interpolated points on a trade-off curve
/// fall between integer synthesis results.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceVector {
    #[serde(default)]
    pub lut: f64,
    #[serde(default)]
    pub ff: f64,
    #[serde(default)]
    pub dsp: f64,
    #[serde(default)]
    pub bram: f64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector {
        lut: 0.0,
        ff: 0.0,
        dsp: 0.0,
        bram: 0.0,
    };

    pub fn new(lut: f64, ff: f64, dsp: f64, bram: f64) -> Self {
        ResourceVector { lut, ff, dsp, bram }
    }

    pub fn components(&self) -> [f64; 4] {
        [self.lut, self.ff, self.dsp, self.bram]
    }

    pub fn from_components(c: [f64; 4]) -> Self {
        ResourceVector::new(c[0], c[1], c[2], c[3])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.components()) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "resource {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub const NAMES: [&'static str; 4] = ["lut", "ff", "dsp", "bram"];

    /// Componentwise `self <= budget`.
    pub fn fits_within(&self, budget: &ResourceVector) -> bool {
        self.components()
            .iter()
            .zip(budget.components())
            .all(|(used, avail)| *used <= avail)
    }

    pub fn scalar(&self, weights: &ResourceWeights) -> f64 {
        weights.lut * self.lut + weights.ff * self.ff + weights.dsp * self.dsp + weights.bram * self.bram
    }

    pub fn scale(&self, factor: f64) -> Self {
        ResourceVector::from_components(self.components().map(|c| c * factor))
    }

    /// Point on the segment from `self` (t = 0) to `other` (t = 1).
    pub fn lerp(&self, other: &ResourceVector, t: f64) -> Self {
        let a = self.components();
        let b = other.components();
        ResourceVector::from_components([
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
            a[3] + t * (b[3] - a[3]),
        ])
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;

    fn add(self, rhs: Self) -> Self {
        ResourceVector::new(
            self.lut + rhs.lut,
            self.ff + rhs.ff,
            self.dsp + rhs.dsp,
            self.bram + rhs.bram,
        )
    }
}

impl Sub for ResourceVector {
    type Output = ResourceVector;

    fn sub(self, rhs: Self) -> Self {
        ResourceVector::new(
            self.lut - rhs.lut,
            self.ff - rhs.ff,
            self.dsp - rhs.dsp,
            self.bram - rhs.bram,
        )
    }
}

impl Mul<f64> for ResourceVector {
    type Output = ResourceVector;

    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lut={} ff={} dsp={} bram={}", self.lut, self.ff, self.dsp, self.bram)
    }
}

/// Weights collapsing a [`ResourceVector`] to a single cost axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceWeights {
    pub lut: f64,
    pub ff: f64,
    pub dsp: f64,
    pub bram: f64,
}

impl Default for ResourceWeights {
    fn default() -> Self {
        ResourceWeights {
            lut: 1.0,
            ff: 0.5,
            dsp: 100.0,
            bram: 200.0,
        }
    }
}

impl ResourceWeights {
    pub fn validate(&self) -> Result<()> {
        for v in [self.lut, self.ff, self.dsp, self.bram] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid("resource weights must be finite and nonnegative"));
            }
        }
        if self.lut + self.ff + self.dsp + self.bram <= 0.0 {
            return Err(Error::invalid("at least one resource weight must be positive"));
        }
        Ok(())
    }
}
