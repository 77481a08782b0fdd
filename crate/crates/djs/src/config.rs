//! Experiment specifications: JSON config files overlaid by command-line
//! flags.

use std::path::{Path, PathBuf};

use clap::Parser;
use djs_core::{Activation, InputMode, NetworkConfig, QRecurrence, SolverConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Limiting spectrum from the fixed-point equations.
    #[default]
    Theory,
    /// Monte Carlo Jacobian spectra.
    Simulate,
    /// Theory against pooled simulation.
    Compare,
    /// Built-in invariant and oracle checks.
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

/// A complete, validated description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub network: NetworkConfig,
    pub solver: SolverConfig,
    pub reps: usize,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
    /// Admit unbounded activations such as relu.
    pub unsafe_unbounded: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            mode: Mode::Theory,
            network: NetworkConfig::default(),
            solver: SolverConfig::default(),
            reps: 1,
            output_dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
            unsafe_unbounded: false,
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "mode",
    "network",
    "solver",
    "reps",
    "output_dir",
    "formats",
    "unsafe_unbounded",
];
const NETWORK_KEYS: &[&str] = &["widths", "sigma_b2", "activation", "input", "seed", "recurrence"];
const SOLVER_KEYS: &[&str] = &[
    "damping",
    "tol",
    "max_iter",
    "eps_ladder",
    "grid",
    "c",
    "accelerate",
    "order",
];
const GRID_KEYS: &[&str] = &["log_points", "linear_points", "log_floor", "knee", "chunk"];

/// Rejects keys outside the known sections, naming the valid ones.
fn check_keys(value: &Value) -> Result<()> {
    fn section(obj: &Value, prefix: &str, keys: &[&str]) -> Result<()> {
        if let Value::Object(map) = obj {
            for key in map.keys() {
                if !keys.contains(&key.as_str()) {
                    return Err(Error::UnknownKey {
                        key: format!("{prefix}{key}"),
                        valid: keys.iter().map(|k| format!("{prefix}{k}")).collect(),
                    });
                }
            }
        }
        Ok(())
    }
    section(value, "", TOP_KEYS)?;
    if let Some(network) = value.get("network") {
        section(network, "network.", NETWORK_KEYS)?;
    }
    if let Some(solver) = value.get("solver") {
        section(solver, "solver.", SOLVER_KEYS)?;
        if let Some(grid) = solver.get("grid") {
            section(grid, "solver.grid.", GRID_KEYS)?;
        }
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|source| Error::Json {
            context: origin.to_string(),
            source,
        })?;
        check_keys(&value)?;
        serde_json::from_value(value).map_err(|source| Error::Json {
            context: origin.to_string(),
            source,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&io::read_text(path)?, &path.display().to_string())
    }

    pub fn to_json(&self) -> Result<String> {
        io::to_json(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.solver.validate()?;
        match &self.network.activation {
            Activation::Relu if !self.unsafe_unbounded => {
                return Err(Error::Config(
                    "relu is unbounded; pass --unsafe-unbounded to use it".into(),
                ))
            }
            Activation::PiecewiseLinear { knots } => {
                Activation::piecewise_linear(knots.clone())?;
            }
            _ => {}
        }
        if self.reps == 0 && matches!(self.mode, Mode::Simulate | Mode::Compare) {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.formats.is_empty() {
            return Err(Error::Config("at least one output format is required".into()));
        }
        Ok(())
    }
}

/// Command-line interface. Flags override values from `--config`.
#[derive(Debug, Clone, Default, Parser)]
#[command(
    name = "djs",
    version,
    about = "Limiting and simulated Jacobian spectra of deep random networks"
)]
pub struct Cli {
    /// Run mode; may also be given with --mode.
    #[arg(value_enum)]
    pub command: Option<Mode>,
    /// Run mode.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Activation name (tanh, hard-tanh, erf, scaled-shifted-tanh, relu) or
    /// a JSON file with piecewise-linear knots.
    #[arg(long)]
    pub phi: Option<String>,
    /// Depth.
    #[arg(long = "L")]
    pub depth: Option<usize>,
    /// Common width of every layer.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated widths n_0,...,n_L.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Bias variance sigma_b^2.
    #[arg(long = "sigma-b2")]
    pub sigma_b2: Option<f64>,
    /// A number, `fixed-point`, or `iid-unit`.
    #[arg(long)]
    pub q1: Option<String>,
    /// Base seed of every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo replicas.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated, strictly decreasing offsets.
    #[arg(long = "eps-ladder", value_delimiter = ',')]
    pub eps_ladder: Option<Vec<f64>>,
    /// Relative residual tolerance of the fixed-point solver.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Width ratio n_0 / n_1 of the first layer; also the solver's ratio.
    #[arg(long)]
    pub c: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Whether sigma_b^2 is added to q at layers beyond the first.
    #[arg(long = "q-recurrence", value_parser = ["with-bias", "without-bias"])]
    pub q_recurrence: Option<String>,
    /// Admit unbounded activations (relu); results carry no guarantee.
    #[arg(long = "unsafe-unbounded")]
    pub unsafe_unbounded: bool,
    /// Comma-separated subset of csv,json.
    #[arg(long, value_delimiter = ',', value_parser = ["csv", "json"])]
    pub formats: Option<Vec<String>>,
}

impl Cli {
    /// The spec from `--config` (or defaults) with the flags applied.
    pub fn to_spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_file(path)?,
            None => ExperimentSpec::default(),
        };
        if let (Some(a), Some(b)) = (self.command, self.mode) {
            if a != b {
                return Err(Error::Config(format!("mode given twice: {a:?} and {b:?}")));
            }
        }
        if let Some(mode) = self.mode.or(self.command) {
            spec.mode = mode;
        }
        spec.unsafe_unbounded |= self.unsafe_unbounded;
        let net = &mut spec.network;
        if let Some(phi) = &self.phi {
            net.activation = if phi.ends_with(".json") {
                io::read_activation(Path::new(phi))?
            } else {
                Activation::from_name(phi, spec.unsafe_unbounded)?
            };
        }
        if let Some(widths) = &self.widths {
            if self.depth.is_some_and(|l| l + 1 != widths.len()) {
                return Err(Error::Config(format!("--L disagrees with {} widths", widths.len())));
            }
            net.widths = widths.clone();
        } else if self.depth.is_some() || self.n.is_some() || self.c.is_some() {
            let depth = self.depth.unwrap_or(net.depth());
            if depth == 0 {
                return Err(Error::Config("--L must be at least 1".into()));
            }
            let n = self.n.unwrap_or_else(|| *net.widths.last().unwrap_or(&256));
            net.widths = vec![n; depth + 1];
            if let Some(c) = self.c {
                if !(c > 0.0) || !c.is_finite() {
                    return Err(Error::Config(format!("--c must be positive, got {c}")));
                }
                net.widths[0] = ((c * n as f64).round() as usize).max(1);
            }
        }
        if let Some(c) = self.c {
            spec.solver.aspect_c = c;
        }
        if let Some(s) = self.sigma_b2 {
            net.sigma_b2 = s;
        }
        if let Some(q1) = &self.q1 {
            net.input = match q1.as_str() {
                "fixed-point" => InputMode::FixedPoint,
                "iid-unit" => InputMode::IidUnit,
                v => InputMode::Q1Target {
                    q1: v.parse().map_err(|_| {
                        Error::Config(format!("--q1 expects a number, fixed-point or iid-unit, got '{v}'"))
                    })?,
                },
            };
        }
        if let Some(seed) = self.seed {
            net.seed = seed;
        }
        if let Some(r) = &self.q_recurrence {
            net.recurrence = if r == "without-bias" {
                QRecurrence::WithoutBias
            } else {
                QRecurrence::WithBias
            };
        }
        if let InputMode::Explicit { x0 } = &net.input {
            if x0.len() != net.widths[0] && (self.n.is_some() || self.widths.is_some() || self.c.is_some()) {
                return Err(Error::Config("explicit input length does not match the new n_0".into()));
            }
        }
        if let Some(reps) = self.reps {
            spec.reps = reps;
        }
        if let Some(eps) = &self.eps_ladder {
            spec.solver.eps_ladder = eps.clone();
        }
        if let Some(tol) = self.tol {
            spec.solver.tol = tol;
        }
        if let Some(out) = &self.output {
            spec.output_dir = out.clone();
        }
        if let Some(formats) = &self.formats {
            spec.formats = formats
                .iter()
                .map(|f| if f == "csv" { Format::Csv } else { Format::Json })
                .collect();
            spec.formats.dedup();
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips_through_json() {
        let mut spec = ExperimentSpec::default();
        spec.network.widths = vec![10, 20, 30];
        spec.network.activation = Activation::piecewise_linear(vec![(-1.0, -1.0), (0.5, 0.25), (2.0, 1.0)]).unwrap();
        spec.solver.eps_ladder = vec![0.1, 0.01];
        spec.formats = vec![Format::Json];
        let back = ExperimentSpec::from_json_str(&spec.to_json().unwrap(), "test").unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentSpec::from_json_str(r#"{"solver": {"dampnig": 0.3}}"#, "t").unwrap_err();
        match err {
            Error::UnknownKey { key, valid } => {
                assert_eq!(key, "solver.dampnig");
                assert!(valid.contains(&"solver.damping".to_string()));
            }
            e => panic!("{e}"),
        }
        assert_eq!(
            ExperimentSpec::from_json_str(r#"{"bogus": 1}"#, "t")
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::try_parse_from([
            "djs",
            "theory",
            "--phi",
            "hard-tanh",
            "--L",
            "3",
            "--n",
            "64",
            "--q1",
            "fixed-point",
        ])
        .unwrap();
        let spec = cli.to_spec().unwrap();
        assert_eq!(spec.mode, Mode::Theory);
        assert_eq!(spec.network.widths, vec![64; 4]);
        assert_eq!(spec.network.activation, Activation::HardTanh);
        assert_eq!(spec.network.input, InputMode::FixedPoint);
        let cli = Cli::try_parse_from(["djs", "--mode", "simulate", "--L", "0"]).unwrap();
        assert!(cli.to_spec().is_err());
        let cli = Cli::try_parse_from(["djs", "--phi", "relu"]).unwrap();
        assert!(cli.to_spec().is_err());
        let cli = Cli::try_parse_from(["djs", "--phi", "relu", "--unsafe-unbounded"]).unwrap();
        assert_eq!(cli.to_spec().unwrap().network.activation, Activation::Relu);
    }
}
