use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DeviceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub band: u64,
    /// Inclusive column offsets from the west edge of the usable range.
    pub first_col: u64,
    pub last_col: u64,
}

impl Placement {
    pub fn overlaps(&self, other: &Placement) -> bool {
        self.first_col <= other.last_col && other.first_col <= self.last_col
    }
}

/// Assignment of layers to bands and column spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandLayout {
    pub placements: Vec<Placement>,
    pub bands: u64,
    /// Layer indices per band, west to east.
    pub groups: Vec<Vec<usize>>,
}

impl BandLayout {
    pub fn band_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Number of other bands holding a layer whose columns overlap layer `i`.
    pub fn sharing_bands(&self, i: usize) -> u64 {
        let me = &self.placements[i];
        self.groups
            .iter()
            .enumerate()
            .filter(|&(band, members)| {
                band as u64 != me.band && members.iter().any(|&j| self.placements[j].overlaps(me))
            })
            .count() as u64
    }
}

/// Greedy west-to-east layout in network order: a layer that would run past
/// the usable width opens a new band at the west edge.
pub fn band_layout(column_counts: &[u64], device: &DeviceSpec) -> Result<BandLayout> {
    let width = device.usable_width();
    let mut placements = Vec::with_capacity(column_counts.len());
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut band = 0u64;
    let mut used = 0u64;
    for (i, &cols) in column_counts.iter().enumerate() {
        if cols == 0 {
            return Err(Error::invalid(format!("layer {i} needs zero columns")));
        }
        if cols > width {
            return Err(Error::ArrayOverflow(format!(
                "layer {i} needs {cols} columns, usable width is {width}:"
            )));
        }
        if groups.is_empty() {
            groups.push(Vec::new());
        } else if used + cols > width {
            band += 1;
            used = 0;
            groups.push(Vec::new());
        }
        placements.push(Placement {
            band,
            first_col: used,
            last_col: used + cols - 1,
        });
        groups[band as usize].push(i);
        used += cols;
    }
    Ok(BandLayout {
        placements,
        bands: groups.len() as u64,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(cols: u64, layers: usize) -> Vec<usize> {
        band_layout(&vec![cols; layers], &DeviceSpec::vek280())
            .unwrap()
            .band_sizes()
    }

    #[test]
    fn column_exhaustion_cases() {
        assert_eq!(sizes(4, 8), vec![7, 1]);
        assert_eq!(sizes(6, 8), vec![5, 3]);
        assert_eq!(sizes(3, 8), vec![8]);
        assert_eq!(sizes(2, 8), vec![8]);
    }

    #[test]
    fn spans_restart_at_west_edge() {
        let l = band_layout(&[4; 8], &DeviceSpec::vek280()).unwrap();
        assert_eq!(
            l.placements[6],
            Placement {
                band: 0,
                first_col: 24,
                last_col: 27
            }
        );
        assert_eq!(
            l.placements[7],
            Placement {
                band: 1,
                first_col: 0,
                last_col: 3
            }
        );
        assert_eq!(l.sharing_bands(0), 1);
        assert_eq!(l.sharing_bands(7), 1);
        assert_eq!(l.sharing_bands(3), 0);
    }

    #[test]
    fn too_wide_layer_is_an_error() {
        assert!(band_layout(&[32], &DeviceSpec::vek280()).is_err());
        assert!(band_layout(&[31], &DeviceSpec::vek280()).is_ok());
    }

    #[test]
    fn empty_input_has_no_bands() {
        let l = band_layout(&[], &DeviceSpec::vek280()).unwrap();
        assert_eq!(l.bands, 0);
    }
}
