//! Experiment presets: JSON files naming a graph, noise model, sweep grid,
//! schedule and converter design, plus the stages `run` executes.

use crate::CliError;
use hdmbqc::encoding::EncodingSpec;
use hdmbqc::graph::{eight_qubit_cluster, four_qudit_chain, GraphState};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

pub const BUILTIN: [&str; 5] = ["cluster8", "qudit5", "rotation-sweep", "rotation-schedule", "mplc-hadamard"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    BuildState,
    Witness,
    Rotate,
    Schedule,
    MplcDesign,
    MplcReconstruct,
    Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    /// `cluster8` or `qudit5`.
    Builtin(String),
    /// JSON graph record, or the plain edge-list format for any other extension.
    /// Relative paths resolve against the preset file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingPreset {
    pub d: usize,
    pub qudits_per_photon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisePreset {
    pub white_noise: f64,
    /// Mean coincidences per setting; absent means exact expectations.
    pub mean_counts: Option<f64>,
    pub resamples: usize,
}

impl Default for NoisePreset {
    fn default() -> Self {
        Self {
            white_noise: 0.0,
            mean_counts: None,
            resamples: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputState {
    /// `|+>`
    Plus,
    /// `(|0> + i|1>)/√2`
    PlusI,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPreset {
    pub alpha_steps: usize,
    pub beta_steps: usize,
    #[serde(default)]
    pub gamma: f64,
    pub input: InputState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencySource {
    /// Five-qubit rotation chain with its output qubit.
    Rotation,
    /// Forward cones, one list per qubit.
    Cones(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePreset {
    pub dependencies: DependencySource,
    /// Photon index of every qubit.
    pub allocation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MplcPreset {
    /// Hadamard factors measured by the stack.
    pub qubits: usize,
    pub iterations: usize,
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_cols")]
    pub cols: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub probe_noise: f64,
    /// Mask file to characterise; defaults to the one `mplc-design` writes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<PathBuf>,
}

fn default_rows() -> usize {
    64
}

fn default_cols() -> usize {
    160
}

fn default_probes() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsPreset {
    pub rate_hz: f64,
    pub rate_in_hz: Option<f64>,
    pub rate_out_hz: Option<f64>,
    /// Defaults to the graph's Hilbert-space dimension.
    pub hilbert_dim: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub graph: Option<GraphSource>,
    pub encoding: Option<EncodingPreset>,
    #[serde(default)]
    pub noise: NoisePreset,
    pub sweep: Option<SweepPreset>,
    pub schedule: Option<SchedulePreset>,
    pub mplc: Option<MplcPreset>,
    pub metrics: Option<MetricsPreset>,
    pub stages: Vec<Stage>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentPreset {
    /// No sections; fill in what the stages need.
    pub fn empty(name: &str, stages: Vec<Stage>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            seed: 0,
            graph: None,
            encoding: None,
            noise: NoisePreset::default(),
            sweep: None,
            schedule: None,
            mplc: None,
            metrics: None,
            stages,
            base_dir: None,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let p = match name {
            "cluster8" => Self {
                graph: Some(GraphSource::Builtin("cluster8".into())),
                encoding: Some(EncodingPreset { d: 2, qudits_per_photon: 4 }),
                metrics: Some(MetricsPreset {
                    rate_hz: 130.0,
                    rate_in_hz: None,
                    rate_out_hz: None,
                    hilbert_dim: None,
                }),
                ..Self::empty(name, vec![Stage::BuildState, Stage::Witness, Stage::Metrics])
            },
            "qudit5" => Self {
                graph: Some(GraphSource::Builtin("qudit5".into())),
                encoding: Some(EncodingPreset { d: 5, qudits_per_photon: 2 }),
                noise: NoisePreset {
                    white_noise: 0.1,
                    mean_counts: Some(1e4),
                    resamples: 1000,
                },
                metrics: Some(MetricsPreset {
                    rate_hz: 100.0,
                    rate_in_hz: None,
                    rate_out_hz: None,
                    hilbert_dim: None,
                }),
                ..Self::empty(name, vec![Stage::BuildState, Stage::Witness, Stage::Metrics])
            },
            "rotation-sweep" => Self {
                sweep: Some(SweepPreset {
                    alpha_steps: 16,
                    beta_steps: 16,
                    gamma: 0.0,
                    input: InputState::Plus,
                }),
                ..Self::empty(name, vec![Stage::Rotate])
            },
            "rotation-schedule" => Self {
                schedule: Some(SchedulePreset {
                    dependencies: DependencySource::Rotation,
                    allocation: vec![0, 0, 0, 0, 1],
                }),
                ..Self::empty(name, vec![Stage::Schedule])
            },
            "mplc-hadamard" => Self {
                mplc: Some(MplcPreset {
                    qubits: 2,
                    iterations: 30,
                    rows: default_rows(),
                    cols: default_cols(),
                    probes: 16,
                    probe_noise: 0.0,
                    masks: None,
                }),
                ..Self::empty(name, vec![Stage::MplcDesign, Stage::MplcReconstruct])
            },
            _ => return None,
        };
        Some(p)
    }

    /// A builtin name, or a path to a preset JSON file.
    pub fn load(name_or_path: &str) -> Result<Self, CliError> {
        if let Some(p) = Self::builtin(name_or_path) {
            return Ok(p);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(CliError::Preset(format!(
                "{name_or_path:?} is neither a builtin preset ({}) nor a file",
                BUILTIN.join(", ")
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let mut p: Self = serde_json::from_str(&text).map_err(|e| CliError::Preset(format!("{}: {e}", path.display())))?;
        p.base_dir = path.parent().map(Path::to_path_buf);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Preset(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("invalid preset name {:?}", self.name));
        }
        if !(0.0..=1.0).contains(&self.noise.white_noise) {
            return bad(format!("white_noise {} outside [0, 1]", self.noise.white_noise));
        }
        if let Some(c) = self.noise.mean_counts {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("mean_counts {c} must be positive"));
            }
            if self.noise.resamples < 2 {
                return bad("count-based witness needs at least two bootstrap resamples".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.alpha_steps == 0 || s.beta_steps == 0 {
                return bad("sweep grids must be nonempty".into());
            }
        }
        if let Some(m) = &self.mplc {
            if m.qubits == 0 || m.iterations == 0 {
                return bad("mplc needs at least one qubit and one iteration".into());
            }
        }
        for st in &self.stages {
            let missing = match st {
                Stage::BuildState | Stage::Witness => self.graph.is_none(),
                Stage::Rotate => self.sweep.is_none(),
                Stage::Schedule => self.schedule.is_none(),
                Stage::MplcDesign | Stage::MplcReconstruct => self.mplc.is_none(),
                Stage::Metrics => self.metrics.is_none(),
            };
            if missing {
                return bad(format!("stage {st:?} has no matching section in preset {:?}", self.name));
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<GraphState, CliError> {
        let src = self
            .graph
            .as_ref()
            .ok_or_else(|| CliError::Preset(format!("preset {:?} names no graph", self.name)))?;
        let g = match src {
            GraphSource::Builtin(n) => match n.as_str() {
                "cluster8" => eight_qubit_cluster(),
                "qudit5" => four_qudit_chain(),
                other => return Err(CliError::Preset(format!("unknown builtin graph {other:?}"))),
            },
            GraphSource::File(f) => {
                let path = match &self.base_dir {
                    Some(b) if f.is_relative() => b.join(f),
                    _ => f.clone(),
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Preset(format!("graph file {}: {e}", path.display())))?;
                if path.extension().is_some_and(|e| e == "json") {
                    GraphState::from_json(&text)?
                } else {
                    GraphState::from_edge_list(&text)?
                }
            }
        };
        if g.n_vertices() % 2 != 0 {
            return Err(CliError::Preset("graph must have the same number of qudits on each photon".into()));
        }
        Ok(g)
    }

    pub fn encoding(&self, g: &GraphState) -> Result<EncodingSpec, CliError> {
        let (d, n) = (g.d(), g.n_vertices() / 2);
        if let Some(e) = &self.encoding {
            if (e.d, e.qudits_per_photon) != (d, n) {
                return Err(CliError::Preset(format!(
                    "encoding d={} x {} does not match the graph (d={d}, {n} per photon)",
                    e.d, e.qudits_per_photon
                )));
            }
        }
        Ok(EncodingSpec::with_default_grid(d, n)?)
    }
}
