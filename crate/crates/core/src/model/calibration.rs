//! Measured latency and resource records that override the analytic models.
//!
//! On disk a calibration table is one comma-separated file with a header row.
//! The first column (`kind`) tags each row as `pl` or `aie`; lines starting
//! with `#` are comments.
//!
//! ```text
//! kind,m,k,n,reuse_factor,strategy,s_m,s_k,s_n,cycles,lut,ff,dsp,bram
//! pl,,64,64,1,resource,,,,64,0,0,4096,0
//! aie,8,64,64,,,4,8,8,300,,,,
//! ```
//!
//! For `pl` rows `k`/`n` are the layer shape and `cycles` is the interval.
//! For `aie` rows `k`/`n` are the padded per-tile workload `q_k`/`q_n` and
//! `cycles` is the single-tile latency.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::device::Dims3;
use super::resources::ResourceVector;
use crate::error::{Error, Result};

/// hls4ml implementation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Latency,
    Resource,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Latency => "latency",
            Strategy::Resource => "resource",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "latency" => Ok(Strategy::Latency),
            "resource" => Ok(Strategy::Resource),
            other => Err(Error::parse("strategy", format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlRecord {
    pub k: u64,
    pub n: u64,
    pub reuse_factor: u64,
    pub strategy: Strategy,
    pub interval_cycles: u64,
    pub resources: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AieRecord {
    pub m: u64,
    pub q_k: u64,
    pub q_n: u64,
    pub api_shape: Dims3,
    pub latency_cycles: u64,
}

pub type PlKey = (u64, u64, u64, Strategy);
pub type AieKey = (u64, u64, u64, Dims3);

/// Validated set of calibration records with exact-key lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationTable {
    pl: BTreeMap<PlKey, PlRecord>,
    aie: BTreeMap<AieKey, AieRecord>,
}

impl CalibrationTable {
    pub fn new(pl_records: Vec<PlRecord>, aie_records: Vec<AieRecord>) -> Result<Self> {
        let mut pl = BTreeMap::new();
        for r in pl_records {
            if r.k == 0 || r.n == 0 || r.reuse_factor == 0 {
                return Err(Error::invalid(format!(
                    "pl record (k={}, n={}, rf={}) has a zero field",
                    r.k, r.n, r.reuse_factor
                )));
            }
            if r.interval_cycles == 0 {
                return Err(Error::invalid(format!(
                    "pl record (k={}, n={}, rf={}, {}) has zero interval",
                    r.k, r.n, r.reuse_factor, r.strategy
                )));
            }
            r.resources.validate()?;
            let key = (r.k, r.n, r.reuse_factor, r.strategy);
            if pl.insert(key, r).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate pl record for (k={}, n={}, rf={}, {})",
                    key.0, key.1, key.2, key.3
                )));
            }
        }
        let mut aie = BTreeMap::new();
        for r in aie_records {
            if r.m == 0 || r.q_k == 0 || r.q_n == 0 || !r.api_shape.all_positive() {
                return Err(Error::invalid("aie record has a zero dimension"));
            }
            if r.latency_cycles == 0 {
                return Err(Error::invalid(format!(
                    "aie record ({}, {}, {}, {}) has zero latency",
                    r.m, r.q_k, r.q_n, r.api_shape
                )));
            }
            let key = (r.m, r.q_k, r.q_n, r.api_shape);
            if aie.insert(key, r).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate aie record for (m={}, q_k={}, q_n={}, shape={})",
                    key.0, key.1, key.2, key.3
                )));
            }
        }
        let table = CalibrationTable { pl, aie };
        table.check_pl_monotone()?;
        Ok(table)
    }

    /// Within each (k, n, strategy) group, ordered by reuse factor, the
    /// interval must not fall and no resource class may rise.
    fn check_pl_monotone(&self) -> Result<()> {
        // BTreeMap order is (k, n, rf, strategy); regroup by (k, n, strategy).
        let mut groups: BTreeMap<(u64, u64, Strategy), Vec<&PlRecord>> = BTreeMap::new();
        for r in self.pl.values() {
            groups.entry((r.k, r.n, r.strategy)).or_default().push(r);
        }
        for ((k, n, strategy), mut recs) in groups {
            recs.sort_by_key(|r| r.reuse_factor);
            for pair in recs.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let group = format!("pl group (k={k}, n={n}, {strategy})");
                if b.interval_cycles < a.interval_cycles {
                    return Err(Error::NonMonotone {
                        group,
                        detail: format!(
                            "interval falls from {} to {} as rf rises {} -> {}",
                            a.interval_cycles, b.interval_cycles, a.reuse_factor, b.reuse_factor
                        ),
                    });
                }
                for (name, (ra, rb)) in ResourceVector::NAMES
                    .iter()
                    .zip(a.resources.components().into_iter().zip(b.resources.components()))
                {
                    if rb > ra {
                        return Err(Error::NonMonotone {
                            group,
                            detail: format!(
                                "{name} rises from {ra} to {rb} as rf rises {} -> {}",
                                a.reuse_factor, b.reuse_factor
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn pl_record(&self, k: u64, n: u64, rf: u64, strategy: Strategy) -> Option<&PlRecord> {
        self.pl.get(&(k, n, rf, strategy))
    }

    pub fn aie_record(&self, m: u64, q_k: u64, q_n: u64, shape: Dims3) -> Option<&AieRecord> {
        self.aie.get(&(m, q_k, q_n, shape))
    }

    pub fn pl_records(&self) -> impl Iterator<Item = &PlRecord> {
        self.pl.values()
    }

    pub fn aie_records(&self) -> impl Iterator<Item = &AieRecord> {
        self.aie.values()
    }

    pub fn is_empty(&self) -> bool {
        self.pl.is_empty() && self.aie.is_empty()
    }

    pub fn from_csv_str(text: &str, context: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut pl = Vec::new();
        let mut aie = Vec::new();
        for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::parse(context, e))?;
            let line = format!("{context}: record {}", i + 1);
            match row.kind.as_str() {
                "pl" => pl.push(row.into_pl(&line)?),
                "aie" => aie.push(row.into_aie(&line)?),
                other => {
                    return Err(Error::parse(line, format!("unknown section tag '{other}'")));
                }
            }
        }
        CalibrationTable::new(pl, aie)
    }

    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for r in self.pl.values() {
            writer.serialize(CsvRow::from_pl(r)).expect("in-memory csv write");
        }
        for r in self.aie.values() {
            writer.serialize(CsvRow::from_aie(r)).expect("in-memory csv write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf8")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    kind: String,
    m: Option<u64>,
    k: Option<u64>,
    n: Option<u64>,
    reuse_factor: Option<u64>,
    strategy: Option<Strategy>,
    s_m: Option<u64>,
    s_k: Option<u64>,
    s_n: Option<u64>,
    cycles: Option<u64>,
    lut: Option<f64>,
    ff: Option<f64>,
    dsp: Option<f64>,
    bram: Option<f64>,
}

fn required<T>(v: Option<T>, field: &str, line: &str) -> Result<T> {
    v.ok_or_else(|| Error::parse(line, format!("missing field '{field}'")))
}

impl CsvRow {
    fn into_pl(self, line: &str) -> Result<PlRecord> {
        Ok(PlRecord {
            k: required(self.k, "k", line)?,
            n: required(self.n, "n", line)?,
            reuse_factor: required(self.reuse_factor, "reuse_factor", line)?,
            strategy: required(self.strategy, "strategy", line)?,
            interval_cycles: required(self.cycles, "cycles", line)?,
            resources: ResourceVector::new(
                self.lut.unwrap_or(0.0),
                self.ff.unwrap_or(0.0),
                self.dsp.unwrap_or(0.0),
                self.bram.unwrap_or(0.0),
            ),
        })
    }

    fn into_aie(self, line: &str) -> Result<AieRecord> {
        Ok(AieRecord {
            m: required(self.m, "m", line)?,
            q_k: required(self.k, "k", line)?,
            q_n: required(self.n, "n", line)?,
            api_shape: Dims3::new(
                required(self.s_m, "s_m", line)?,
                required(self.s_k, "s_k", line)?,
                required(self.s_n, "s_n", line)?,
            ),
            latency_cycles: required(self.cycles, "cycles", line)?,
        })
    }

    fn from_pl(r: &PlRecord) -> Self {
        CsvRow {
            kind: "pl".into(),
            m: None,
            k: Some(r.k),
            n: Some(r.n),
            reuse_factor: Some(r.reuse_factor),
            strategy: Some(r.strategy),
            s_m: None,
            s_k: None,
            s_n: None,
            cycles: Some(r.interval_cycles),
            lut: Some(r.resources.lut),
            ff: Some(r.resources.ff),
            dsp: Some(r.resources.dsp),
            bram: Some(r.resources.bram),
        }
    }

    fn from_aie(r: &AieRecord) -> Self {
        CsvRow {
            kind: "aie".into(),
            m: Some(r.m),
            k: Some(r.q_k),
            n: Some(r.q_n),
            reuse_factor: None,
            strategy: None,
            s_m: Some(r.api_shape.m),
            s_k: Some(r.api_shape.k),
            s_n: Some(r.api_shape.n),
            cycles: Some(r.latency_cycles),
            lut: None,
            ff: None,
            dsp: None,
            bram: None,
        }
    }
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<CalibrationTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    CalibrationTable::from_csv_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "kind,m,k,n,reuse_factor,strategy,s_m,s_k,s_n,cycles,lut,ff,dsp,bram\n";

    #[test]
    fn accepts_monotone_pair() {
        let text = format!("{HEADER}pl,,64,64,1,resource,,,,64,0,0,4096,0\npl,,64,64,2,resource,,,,128,0,0,2048,0\n");
        let t = CalibrationTable::from_csv_str(&text, "t").unwrap();
        assert_eq!(t.pl_records().count(), 2);
        assert_eq!(t.aie_records().count(), 0);
        let r = t.pl_record(64, 64, 2, Strategy::Resource).unwrap();
        assert_eq!(r.interval_cycles, 128);
        assert_eq!(r.resources.dsp, 2048.0);
    }

    #[test]
    fn rejects_falling_interval_and_names_group() {
        let text = format!("{HEADER}pl,,64,64,1,resource,,,,128,0,0,4096,0\npl,,64,64,2,resource,,,,64,0,0,2048,0\n");
        match CalibrationTable::from_csv_str(&text, "t") {
            Err(Error::NonMonotone { group, .. }) => {
                assert!(group.contains("k=64") && group.contains("resource"), "{group}")
            }
            other => panic!("expected non-monotone error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_rising_resource() {
        let text = format!("{HEADER}pl,,64,64,1,resource,,,,64,0,0,100,0\npl,,64,64,2,resource,,,,128,0,0,200,0\n");
        assert!(matches!(
            CalibrationTable::from_csv_str(&text, "t"),
            Err(Error::NonMonotone { .. })
        ));
    }

    #[test]
    fn strategies_are_separate_groups() {
        let text = format!("{HEADER}pl,,64,64,1,resource,,,,64,0,0,100,0\npl,,64,64,2,latency,,,,32,0,0,200,0\n");
        assert!(CalibrationTable::from_csv_str(&text, "t").is_ok());
    }

    #[test]
    fn rejects_duplicate_key() {
        let text = format!("{HEADER}aie,8,64,64,,,4,8,8,300,,,,\naie,8,64,64,,,4,8,8,310,,,,\n");
        assert!(matches!(
            CalibrationTable::from_csv_str(&text, "t"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn rejects_zero_latency() {
        let text = format!("{HEADER}aie,8,64,64,,,4,8,8,0,,,,\n");
        assert!(CalibrationTable::from_csv_str(&text, "t").is_err());
    }

    #[test]
    fn aie_section_is_optional_and_comments_skip() {
        let text = format!("# measured\n{HEADER}# rf sweep\npl,,64,64,1,resource,,,,64,0,0,4096,0\n");
        let t = CalibrationTable::from_csv_str(&text, "t").unwrap();
        assert_eq!(t.aie_records().count(), 0);
    }

    #[test]
    fn unknown_section_is_a_parse_error() {
        let text = format!("{HEADER}gpu,,64,64,1,resource,,,,64,0,0,4096,0\n");
        assert!(matches!(
            CalibrationTable::from_csv_str(&text, "t"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let text = format!("{HEADER}pl,,64,64,1,resource,,,,64,10,5,4096,2\naie,8,64,64,,,4,8,8,300,,,,\n");
        let t = CalibrationTable::from_csv_str(&text, "t").unwrap();
        let again = CalibrationTable::from_csv_str(&t.to_csv_string(), "again").unwrap();
        assert_eq!(t, again);
    }
}
