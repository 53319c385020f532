//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use qecopt::ansatz::{build_layout, parse_qasm, Encoder, GateKind, Layout, LayoutKind};
use qecopt::channels::{CompositeNoise, NoiseSpec};
use qecopt::codes::{standard_encoder, ProbeConfig};
use qecopt::designs::{Estimator, StateSet};
use qecopt::loss::Recovery;
use qecopt::train::{OptimConfig, SelectionConfig, TrainMode, TrainReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// One run: every command reads the sections it needs and rejects missing
/// ones. Relative paths are resolved against the config file's directory.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    /// Logical qubit count for commands without an encoder section.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub encoder: Option<EncoderSource>,
    #[serde(default)]
    pub ansatz: Option<AnsatzConfig>,
    #[serde(default)]
    pub recovery: Option<RecoveryConfig>,
    #[serde(default)]
    pub states: StatesConfig,
    #[serde(default)]
    pub optimizer: Option<OptimConfig>,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub seeds: Option<Seeds>,
    #[serde(default)]
    pub estimators: Option<Vec<Estimator>>,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Per-qubit noise plus the optional strength of correlated two-qubit
/// depolarizing noise after every two-qubit gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table", into = "toml::Table")]
pub struct NoiseConfig {
    pub spec: NoiseSpec,
    pub gate_noise_p: Option<f64>,
}

impl TryFrom<toml::Table> for NoiseConfig {
    type Error = String;

    fn try_from(mut table: toml::Table) -> Result<Self, String> {
        let gate_noise_p = match table.remove("gate_noise_p") {
            None => None,
            Some(toml::Value::Float(v)) => Some(v),
            Some(toml::Value::Integer(v)) => Some(v as f64),
            Some(other) => return Err(format!("gate_noise_p must be a number, got {other}")),
        };
        let spec = NoiseSpec::deserialize(toml::Value::Table(table)).map_err(|e| e.to_string())?;
        Ok(Self { spec, gate_noise_p })
    }
}

impl From<NoiseConfig> for toml::Table {
    fn from(n: NoiseConfig) -> toml::Table {
        let mut table = match toml::Value::try_from(&n.spec) {
            Ok(toml::Value::Table(t)) => t,
            _ => toml::Table::new(),
        };
        if let Some(p) = n.gate_noise_p {
            table.insert("gate_noise_p".into(), toml::Value::Float(p));
        }
        table
    }
}

impl NoiseConfig {
    pub fn new(spec: NoiseSpec) -> Self {
        Self {
            spec,
            gate_noise_p: None,
        }
    }

    pub fn composite(&self) -> CliResult<CompositeNoise> {
        let gate = self
            .gate_noise_p
            .map(|p| NoiseSpec::CorrelatedDepolarizing2q { p });
        self.spec.validate()?;
        Ok(CompositeNoise::new(self.spec.clone(), gate)?)
    }

    /// A copy with the named parameter replaced: any numeric key of the noise
    /// table (`p`, `c`, `gamma`, `t1_us`, `t2_us`, `t_us`) or `gate_noise_p`.
    pub fn with_parameter(&self, name: &str, value: f64) -> CliResult<Self> {
        let mut table: toml::Table = self.clone().into();
        if name != "gate_noise_p" && !table.contains_key(name) {
            return Err(CliError::Config(format!(
                "noise kind {} has no parameter {name:?}",
                self.spec.name()
            )));
        }
        table.insert(name.into(), toml::Value::Float(value));
        Self::try_from(table).map_err(CliError::Config)
    }
}

/// Where an encoder comes from: a shipped code (or `unencoded`) or a circuit
/// file. Circuit files ending in `.qasm` are parsed as OpenQASM 2; anything
/// else is read as JSON holding either a training report or a bound encoder.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSource {
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default)]
    pub circuit: Option<PathBuf>,
    #[serde(default)]
    pub k: Option<usize>,
}

/// A loaded encoder with the recovery that came with it, if any.
#[derive(Clone, Debug)]
pub struct LoadedCode {
    pub label: String,
    pub encoder: Encoder,
    pub recovery: Option<Recovery>,
}

impl EncoderSource {
    pub fn load(&self, base_dir: &Path) -> CliResult<LoadedCode> {
        match (&self.code, &self.circuit) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "encoder: give either `code` or `circuit`, not both".into(),
            )),
            (None, None) => Err(CliError::Config(
                "encoder: one of `code` or `circuit` is required".into(),
            )),
            (Some(code), None) if code == "unencoded" => Ok(LoadedCode {
                label: code.clone(),
                encoder: Encoder::unencoded(self.k.unwrap_or(1)),
                recovery: None,
            }),
            (Some(code), None) => {
                let spec = standard_encoder(code)?;
                if self.k.is_some_and(|k| k != spec.k) {
                    return Err(CliError::Config(format!(
                        "encoder: {code} encodes k = {}",
                        spec.k
                    )));
                }
                Ok(LoadedCode {
                    label: code.clone(),
                    encoder: spec.encoder()?,
                    recovery: None,
                })
            }
            (None, Some(path)) => load_circuit(&base_dir.join(path), self.k),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CircuitJson {
    Report(Box<TrainReport>),
    Encoder(Encoder),
}

/// Reads an encoder from a QASM file (`k` defaults to 1) or a JSON file.
pub fn load_circuit(path: &Path, k: Option<usize>) -> CliResult<LoadedCode> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let label = path.display().to_string();
    let is_qasm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("qasm"));
    if is_qasm {
        let parsed =
            parse_qasm(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let encoder = Encoder::new(k.unwrap_or(1), parsed.ansatz, parsed.params)?;
        return Ok(LoadedCode {
            label,
            encoder,
            recovery: None,
        });
    }
    let parsed: CircuitJson = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{}: not a training report or encoder: {e}",
            path.display()
        ))
    })?;
    let (encoder, recovery) = match parsed {
        CircuitJson::Report(r) => (r.encoder()?, r.recovery.clone()),
        CircuitJson::Encoder(e) => (Encoder::new(e.k, e.ansatz, e.params)?, None),
    };
    if k.is_some_and(|k| k != encoder.k) {
        return Err(CliError::Config(format!(
            "{}: circuit encodes k = {}",
            path.display(),
            encoder.k
        )));
    }
    Ok(LoadedCode {
        label,
        encoder,
        recovery,
    })
}

fn default_layout() -> LayoutKind {
    LayoutKind::Full
}

fn default_single() -> GateKind {
    GateKind::Rzyz
}

fn default_two() -> GateKind {
    GateKind::ControlledV
}

fn default_k() -> usize {
    1
}

/// Randomized entangling ansatz family for encoding training.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzConfig {
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub depth: usize,
    #[serde(default = "default_layout")]
    pub layout: LayoutKind,
    #[serde(default)]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default = "default_single")]
    pub single: GateKind,
    #[serde(default = "default_two")]
    pub two: GateKind,
}

impl AnsatzConfig {
    pub fn layout(&self) -> CliResult<Layout> {
        Ok(build_layout(self.layout, self.n, self.edges.clone())?)
    }
}

fn default_mode() -> TrainMode {
    TrainMode::RecoveryOnly
}

/// Recovery ansatz on the code qubits plus `r` fresh qubits.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub depth: usize,
    #[serde(default)]
    pub r: usize,
    #[serde(default = "default_layout")]
    pub layout: LayoutKind,
    #[serde(default)]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default = "default_single")]
    pub single: GateKind,
    #[serde(default = "default_two")]
    pub two: GateKind,
    #[serde(default = "default_mode")]
    pub mode: TrainMode,
}

/// Training states: a design estimator with optional explicit weights.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesConfig {
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

fn default_estimator() -> Estimator {
    Estimator::TwoDesign
}

impl Default for StatesConfig {
    fn default() -> Self {
        Self {
            estimator: default_estimator(),
            weights: None,
        }
    }
}

impl StatesConfig {
    pub fn state_set(&self, k: usize) -> CliResult<StateSet> {
        Ok(self.estimator.state_set(k, self.weights.as_deref())?)
    }
}

/// Seeds as a count (`0..count`) or an explicit list.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// Re-evaluation over a list of values of one noise parameter.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_toml(&text, &base).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn noise(&self) -> CliResult<&NoiseConfig> {
        self.noise.as_ref().ok_or_else(|| missing("noise"))
    }

    pub fn ansatz(&self) -> CliResult<&AnsatzConfig> {
        self.ansatz.as_ref().ok_or_else(|| missing("ansatz"))
    }

    pub fn recovery(&self) -> CliResult<&RecoveryConfig> {
        self.recovery.as_ref().ok_or_else(|| missing("recovery"))
    }

    pub fn encoder(&self) -> CliResult<LoadedCode> {
        self.encoder
            .as_ref()
            .ok_or_else(|| missing("encoder"))?
            .load(&self.base_dir)
    }

    pub fn seeds(&self) -> CliResult<Vec<u64>> {
        let seeds = self
            .seeds
            .as_ref()
            .ok_or_else(|| missing("seeds"))?
            .to_vec();
        if seeds.is_empty() {
            return Err(CliError::Config(
                "seeds: at least one seed is required".into(),
            ));
        }
        Ok(seeds)
    }

    pub fn estimators(&self) -> Vec<Estimator> {
        self.estimators.clone().unwrap_or_else(|| {
            vec![
                Estimator::TwoDesign,
                Estimator::Haar {
                    count: Estimator::DEFAULT_HAAR_COUNT,
                    seed: 0,
                },
            ]
        })
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing required section `{section}`"))
}
