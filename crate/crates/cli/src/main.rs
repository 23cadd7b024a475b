use clap::{Args, Parser, Subcommand, ValueEnum};
use hdmbqc_cli::preset::{DependencySource, InputState, MetricsPreset, SchedulePreset};
use hdmbqc_cli::{resolve_root, run_preset, run_stages, CliError, ExperimentPreset, Stage, BUILTIN, OUT_DIR_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hdmbqc", version, about = "Two-photon cluster-state simulation and converter design")]
struct Cli {
    /// Output root; files go to `<root>/<preset name>`.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    /// Overrides the preset's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PresetArg {
    /// Builtin preset name or path to a preset JSON file.
    #[arg(long, short)]
    preset: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum WitnessMode {
    Exact,
    Counts,
}

#[derive(Clone, Copy, ValueEnum)]
enum Input {
    Plus,
    PlusI,
}

#[derive(Subcommand)]
enum Command {
    /// List builtin presets, or print one as editable JSON.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
    /// Simulate the cluster state and export it with its compiled circuit.
    BuildState(PresetArg),
    /// Evaluate the entanglement witness exactly or from sampled counts.
    Witness {
        #[command(flatten)]
        preset: PresetArg,
        #[arg(long, value_enum)]
        mode: Option<WitnessMode>,
        /// White-noise fraction.
        #[arg(long)]
        noise: Option<f64>,
        /// Mean coincidences per setting; implies `--mode counts`.
        #[arg(long)]
        counts: Option<f64>,
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Sweep the single-qubit rotation over an angle grid.
    Rotate {
        #[command(flatten)]
        preset: PresetArg,
        /// Grid steps for both angles.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_enum)]
        input: Option<Input>,
    },
    /// Qubit- and photon-level feedforward schedules.
    Schedule {
        #[command(flatten)]
        preset: PresetArg,
        /// Comma-separated photon index per qubit.
        #[arg(long, value_delimiter = ',')]
        allocation: Option<Vec<usize>>,
        /// Dependency graph JSON (`qubits`, `fc`).
        #[arg(long)]
        dependencies: Option<PathBuf>,
    },
    /// Design the phase masks of a measurement converter.
    MplcDesign {
        #[command(flatten)]
        preset: PresetArg,
        #[arg(long)]
        qubits: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Recover a converter's transfer matrix from simulated intensities.
    MplcReconstruct {
        #[command(flatten)]
        preset: PresetArg,
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Number of Hadamard factors the masks were designed for.
        #[arg(long)]
        qubits: Option<usize>,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        probe_noise: Option<f64>,
    },
    /// Resource rate and loss figures.
    Metrics {
        #[arg(long, short)]
        preset: Option<String>,
        #[arg(long)]
        dim: Option<u64>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        rate_in: Option<f64>,
        #[arg(long)]
        rate_out: Option<f64>,
    },
    /// Run every stage a preset lists.
    Run(PresetArg),
}

fn mplc_section(p: &mut ExperimentPreset) -> Result<&mut hdmbqc_cli::preset::MplcPreset, CliError> {
    let name = p.name.clone();
    p.mplc
        .as_mut()
        .ok_or_else(|| CliError::Preset(format!("preset {name:?} has no mplc section")))
}

fn execute(cli: Cli) -> Result<Vec<String>, CliError> {
    let root = resolve_root(cli.out_dir);
    let (mut p, stage) = match cli.command {
        Command::Presets { show: None } => return Ok(BUILTIN.iter().map(|s| s.to_string()).collect()),
        Command::Presets { show: Some(name) } => {
            let p = ExperimentPreset::builtin(&name)
                .ok_or_else(|| CliError::Preset(format!("no builtin preset {name:?}")))?;
            return Ok(vec![serde_json::to_string_pretty(&p)?]);
        }
        Command::Run(a) => {
            let mut p = ExperimentPreset::load(&a.preset)?;
            if let Some(s) = cli.seed {
                p.seed = s;
            }
            return run_preset(&p, &root);
        }
        Command::BuildState(a) => (ExperimentPreset::load(&a.preset)?, Stage::BuildState),
        Command::Witness {
            preset,
            mode,
            noise,
            counts,
            resamples,
        } => {
            let mut p = ExperimentPreset::load(&preset.preset)?;
            if let Some(n) = noise {
                p.noise.white_noise = n;
            }
            if let Some(r) = resamples {
                p.noise.resamples = r;
            }
            if counts.is_some() {
                p.noise.mean_counts = counts;
            }
            match mode {
                Some(WitnessMode::Exact) => p.noise.mean_counts = None,
                Some(WitnessMode::Counts) if p.noise.mean_counts.is_none() => p.noise.mean_counts = Some(1e4),
                _ => {}
            }
            (p, Stage::Witness)
        }
        Command::Rotate {
            preset,
            steps,
            gamma,
            input,
        } => {
            let mut p = ExperimentPreset::load(&preset.preset)?;
            let name = p.name.clone();
            let s = p
                .sweep
                .as_mut()
                .ok_or_else(|| CliError::Preset(format!("preset {name:?} has no sweep section")))?;
            if let Some(n) = steps {
                s.alpha_steps = n;
                s.beta_steps = n;
            }
            if let Some(g) = gamma {
                s.gamma = g;
            }
            if let Some(i) = input {
                s.input = match i {
                    Input::Plus => InputState::Plus,
                    Input::PlusI => InputState::PlusI,
                };
            }
            (p, Stage::Rotate)
        }
        Command::Schedule {
            preset,
            allocation,
            dependencies,
        } => {
            let mut p = ExperimentPreset::load(&preset.preset)?;
            let mut s = p.schedule.take().unwrap_or(SchedulePreset {
                dependencies: DependencySource::Rotation,
                allocation: Vec::new(),
            });
            if let Some(path) = dependencies {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Preset(format!("{}: {e}", path.display())))?;
                let dep = hdmbqc::DependencyGraph::from_json(&text)?;
                s.dependencies = DependencySource::Cones((0..dep.len()).map(|q| dep.cone(q).to_vec()).collect());
            }
            if let Some(a) = allocation {
                s.allocation = a;
            }
            p.schedule = Some(s);
            (p, Stage::Schedule)
        }
        Command::MplcDesign {
            preset,
            qubits,
            iterations,
        } => {
            let mut p = ExperimentPreset::load(&preset.preset)?;
            let m = mplc_section(&mut p)?;
            if let Some(q) = qubits {
                m.qubits = q;
            }
            if let Some(i) = iterations {
                m.iterations = i;
            }
            (p, Stage::MplcDesign)
        }
        Command::MplcReconstruct {
            preset,
            masks,
            qubits,
            probes,
            probe_noise,
        } => {
            let mut p = ExperimentPreset::load(&preset.preset)?;
            let m = mplc_section(&mut p)?;
            if masks.is_some() {
                m.masks = masks;
            }
            if let Some(q) = qubits {
                m.qubits = q;
            }
            if let Some(n) = probes {
                m.probes = n;
            }
            if let Some(n) = probe_noise {
                m.probe_noise = n;
            }
            (p, Stage::MplcReconstruct)
        }
        Command::Metrics {
            preset,
            dim,
            rate,
            rate_in,
            rate_out,
        } => {
            let mut p = match preset {
                Some(name) => ExperimentPreset::load(&name)?,
                None => ExperimentPreset::empty("metrics", vec![Stage::Metrics]),
            };
            let m = p.metrics.get_or_insert(MetricsPreset {
                rate_hz: f64::NAN,
                rate_in_hz: None,
                rate_out_hz: None,
                hilbert_dim: None,
            });
            if let Some(r) = rate {
                m.rate_hz = r;
            }
            if dim.is_some() {
                m.hilbert_dim = dim;
            }
            if rate_in.is_some() {
                m.rate_in_hz = rate_in;
            }
            if rate_out.is_some() {
                m.rate_out_hz = rate_out;
            }
            if m.rate_hz.is_nan() {
                return Err(CliError::Preset("metrics needs --rate".into()));
            }
            if m.hilbert_dim.is_none() && p.graph.is_none() {
                return Err(CliError::Preset("metrics needs --dim or a preset with a graph".into()));
            }
            (p, Stage::Metrics)
        }
    };
    if let Some(s) = cli.seed {
        p.seed = s;
    }
    p.stages = vec![stage];
    p.validate()?;
    run_stages(&p, &[stage], &root)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
