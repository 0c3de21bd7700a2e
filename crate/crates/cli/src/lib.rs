//! Command-line front end for edge-mapper.
//!
//! Every subcommand is a pure function of its inputs and seed. Reports go to
//! stdout in the chosen format and, with `--out`, also to files in that
//! directory. Exit codes: 0 success, 1 input, feasibility or validation
//! error, 2 target throughput unmet.

mod report;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use edge_mapper_core::model::{
    load_calibration, load_device, load_network, CalibrationTable, DeviceSpec, Dims3, Domain, NetworkSpec,
    ResourceVector, Strategy, TilingPlan, DEFAULT_CROSSING_RHO,
};
use edge_mapper_core::planner::{Objective, PlanConstraints};

pub use report::{
    lare_report, partition_report, plan_report, sweep_report, validate_report, PartitionReport, PlBaseline, PlanReport,
    SweepReport, SweepRow, ValidateReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNMET: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "edge-mapper",
    version,
    about = "Place dense networks on PL or AI-Engine tiles and plan their tiling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    MinLatency,
    MinTiles,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Network description (JSON).
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
    /// Device profile file; overrides --profile.
    #[arg(long, global = true)]
    pub device: Option<PathBuf>,
    /// Bundled device profile.
    #[arg(long, global = true, env = "EDGE_MAPPER_PROFILE", default_value = "vek280")]
    pub profile: String,
    /// Calibration table (CSV).
    #[arg(long, global = true)]
    pub calib: Option<PathBuf>,
    /// Directory that receives the report files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "resource")]
    pub strategy: Strategy,
    #[arg(long, global = true, default_value_t = 32)]
    pub max_tiles: u64,
    #[arg(long, global = true)]
    pub allow_multi_band: bool,
    /// Latency overhead per extra PL-AIE crossing.
    #[arg(long, global = true, default_value_t = DEFAULT_CROSSING_RHO)]
    pub rho: f64,
    /// Throughput goal in millions of inferences per second.
    #[arg(long, global = true)]
    pub target_mhz: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = ObjectiveArg::MinLatency)]
    pub objective: ObjectiveArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tile every layer onto the AIE array and compare with an all-PL build.
    Plan,
    /// Latency-adjusted resource equivalent per layer shape.
    Lare {
        /// Shapes as KxN, comma separated; defaults to the network's layers.
        #[arg(long, value_delimiter = ',')]
        shapes: Vec<String>,
        /// PL budgets as lut:ff:dsp:bram; repeatable.
        #[arg(long = "budget")]
        budgets: Vec<String>,
        /// Batch rows; defaults to the network batch, else 8.
        #[arg(long)]
        batch: Option<u64>,
    },
    /// Split the network between PL and AIE under the crossing penalty.
    Partition {
        /// One character per layer: p (PL), a (AIE) or - (free).
        /// Defaults to the first and last layers on the PL.
        #[arg(long)]
        pins: Option<String>,
    },
    /// Re-check a plan file and run it against a reference GEMM.
    Validate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, hide = true)]
        inject_rk_fault: bool,
    },
    /// Latency over a grid of spatial splits for one layer.
    Sweep {
        /// Layer as M,K,N; defaults to a layer of the network.
        #[arg(long)]
        layer: Option<String>,
        #[arg(long, default_value_t = 0)]
        layer_index: usize,
        /// Largest p_k and p_n in the grid.
        #[arg(long, default_value_t = 8)]
        grid: u64,
    },
}

/// Inputs resolved from the command line.
pub struct Inputs {
    pub device: DeviceSpec,
    pub network: Option<NetworkSpec>,
    pub calib: Option<CalibrationTable>,
}

impl CommonArgs {
    pub fn load(&self) -> anyhow::Result<Inputs> {
        let device = match &self.device {
            Some(path) => load_device(path)?,
            None => DeviceSpec::bundled(&self.profile)?,
        };
        let network = self.network.as_ref().map(load_network).transpose()?;
        let calib = self.calib.as_ref().map(load_calibration).transpose()?;
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            bail!("--rho must be a finite non-negative number, got {}", self.rho);
        }
        if let Some(t) = self.target_mhz {
            if !(t.is_finite() && t > 0.0) {
                bail!("--target-mhz must be positive, got {t}");
            }
        }
        Ok(Inputs { device, network, calib })
    }

    pub fn constraints(&self, target_hz: Option<f64>) -> PlanConstraints {
        PlanConstraints {
            max_tiles_per_layer: self.max_tiles,
            allow_multi_band: self.allow_multi_band,
            objective: match self.objective {
                ObjectiveArg::MinLatency => Objective::MinLatency,
                ObjectiveArg::MinTiles => Objective::MinTilesMeetingTarget,
            },
            target_throughput_hz: target_hz,
            ..Default::default()
        }
    }

    /// `--target-mhz`, else the network's own target.
    pub fn target_hz(&self, network: Option<&NetworkSpec>) -> Option<f64> {
        self.target_mhz
            .map(|m| m * 1e6)
            .or_else(|| network.and_then(|n| n.target_throughput_hz))
    }
}

pub(crate) fn require_network(inputs: &Inputs) -> anyhow::Result<&NetworkSpec> {
    inputs.network.as_ref().context("this command needs --network")
}

pub(crate) fn parse_shape(text: &str) -> anyhow::Result<(u64, u64)> {
    let (k, n) = text
        .trim()
        .split_once(['x', 'X'])
        .with_context(|| format!("shape '{text}' is not KxN"))?;
    let k: u64 = k.trim().parse().with_context(|| format!("bad K in '{text}'"))?;
    let n: u64 = n.trim().parse().with_context(|| format!("bad N in '{text}'"))?;
    if k == 0 || n == 0 {
        bail!("shape '{text}' has a zero dimension");
    }
    Ok((k, n))
}

pub(crate) fn parse_budget(text: &str) -> anyhow::Result<ResourceVector> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 4 {
        bail!("budget '{text}' is not lut:ff:dsp:bram");
    }
    let mut v = [0.0; 4];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .with_context(|| format!("bad number '{part}' in budget '{text}'"))?;
    }
    let r = ResourceVector::from_components(v);
    r.validate()?;
    Ok(r)
}

pub(crate) fn parse_dims(text: &str) -> anyhow::Result<Dims3> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        bail!("layer '{text}' is not M,K,N");
    }
    let mut d = [0u64; 3];
    for (slot, part) in d.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .with_context(|| format!("bad number '{part}' in '{text}'"))?;
    }
    Ok(Dims3::new(d[0], d[1], d[2]))
}

pub(crate) fn parse_pins(text: &str, layers: usize) -> anyhow::Result<Vec<Option<Domain>>> {
    let pins = text
        .chars()
        .map(|c| match c.to_ascii_lowercase() {
            'p' => Ok(Some(Domain::Pl)),
            'a' => Ok(Some(Domain::Aie)),
            '-' | '*' => Ok(None),
            other => bail!("pin '{other}' is not one of p, a, -"),
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if pins.len() != layers {
        bail!("{} pins given for {layers} layers", pins.len());
    }
    Ok(pins)
}

/// Rendered output of one command.
pub struct Output {
    pub stdout: String,
    /// Files for `--out`, as (file name, contents).
    pub files: Vec<(String, String)>,
    pub code: i32,
}

fn write_files(dir: &Path, files: &[(String, String)]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> anyhow::Result<Output> {
    let common = &cli.common;
    let inputs = common.load()?;
    match &cli.command {
        Command::Plan => report::cmd_plan(common, &inputs),
        Command::Lare { shapes, budgets, batch } => report::cmd_lare(common, &inputs, shapes, budgets, *batch),
        Command::Partition { pins } => report::cmd_partition(common, &inputs, pins.as_deref()),
        Command::Validate {
            plan,
            trials,
            inject_rk_fault,
        } => {
            let plan = TilingPlan::load(plan)?;
            report::cmd_validate(common, &inputs, &plan, *trials, *inject_rk_fault)
        }
        Command::Sweep {
            layer,
            layer_index,
            grid,
        } => report::cmd_sweep(common, &inputs, layer.as_deref(), *layer_index, *grid),
    }
}

/// Parses `args`, runs the command and writes to the given streams.
/// Returns the process exit code; never panics on bad input.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = execute(&cli).and_then(|out| {
        if let Some(dir) = &cli.common.out {
            write_files(dir, &out.files)?;
        }
        Ok(out)
    });
    match result {
        Ok(out) => {
            if stdout.write_all(out.stdout.as_bytes()).is_err() {
                return EXIT_ERROR;
            }
            out.code
        }
        Err(e) => {
            // Core errors already embed their cause; only print causes that add text.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_shapes_budgets_and_pins() {
        assert_eq!(parse_shape("64x32").unwrap(), (64, 32));
        assert!(parse_shape("64").is_err());
        assert!(parse_shape("0x4").is_err());
        assert_eq!(
            parse_budget("1:2:3:4").unwrap(),
            ResourceVector::new(1.0, 2.0, 3.0, 4.0)
        );
        assert!(parse_budget("1:2:3").is_err());
        assert!(parse_budget("1:2:-3:4").is_err());
        assert_eq!(
            parse_pins("pa-", 3).unwrap(),
            vec![Some(Domain::Pl), Some(Domain::Aie), None]
        );
        assert!(parse_pins("pa", 3).is_err());
        assert!(parse_pins("pxa", 3).is_err());
        assert_eq!(parse_dims("8,128,64").unwrap(), Dims3::new(8, 128, 64));
    }

    #[test]
    fn usage_errors_exit_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["edge-mapper", "bogus"], &mut out, &mut err), EXIT_ERROR);
        assert_eq!(run(["edge-mapper", "plan"], &mut out, &mut err), EXIT_ERROR);
        assert!(String::from_utf8_lossy(&err).contains("--network"));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["edge-mapper", "--help"], &mut out, &mut err), EXIT_OK);
        assert!(!out.is_empty());
    }
}
