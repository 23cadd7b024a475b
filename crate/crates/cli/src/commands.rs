//! One routine per stage. Each writes its files and returns summary lines.

use crate::output::OutputDir;
use crate::preset::{DependencySource, ExperimentPreset, InputState, Stage};
use crate::CliError;
use hdmbqc::feedforward::{rotation_sweep, write_sweep_csv, InputPrep};
use hdmbqc::graph::{check_two_photon_realizable, compile_graph, simulate_cluster};
use hdmbqc::linalg::hadamard;
use hdmbqc::metrics::MetricsRecord;
use hdmbqc::mplc::{
    compile_measurement_stack, frobenius_fidelity, gauge_rows, gs_reconstruct, read_masks, spot_modes, stack_matrix,
    synthesize_probes, write_mask_preview, write_masks, Geometry, GsOptions,
};
use hdmbqc::scheduler::{check_allocation, edges, photon_rounds, qubit_rounds, DependencyGraph, PhotonAllocation};
use hdmbqc::state::sample_counts;
use hdmbqc::witness::{
    expand_witness, mix_with_white_noise, mub_settings, terms_from_distributions, witness_exact, witness_from_counts,
    witness_on_mixture, SettingUsed, TermEstimate, WitnessReport,
};
use hdmbqc::C64;
use serde::Serialize;
use std::f64::consts::TAU;

/// Tolerance for checks that hold exactly in exact arithmetic.
const EXACT_TOL: f64 = 1e-9;

pub fn run_stage(stage: Stage, p: &ExperimentPreset, out: &OutputDir) -> Result<Vec<String>, CliError> {
    match stage {
        Stage::BuildState => build_state(p, out),
        Stage::Witness => witness(p, out),
        Stage::Rotate => rotate(p, out),
        Stage::Schedule => schedule(p, out),
        Stage::MplcDesign => mplc_design(p, out),
        Stage::MplcReconstruct => mplc_reconstruct(p, out),
        Stage::Metrics => metrics(p, out),
    }
}

#[derive(Serialize)]
struct Cell {
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

fn cells(m: &ndarray::Array2<C64>) -> Vec<Cell> {
    m.indexed_iter()
        .map(|((row, col), z)| Cell { row, col, re: z.re, im: z.im })
        .collect()
}

pub fn build_state(p: &ExperimentPreset, out: &OutputDir) -> Result<Vec<String>, CliError> {
    let g = p.graph()?;
    let spec = p.encoding(&g)?;
    let real = check_two_photon_realizable(&g);
    if !real.realizable {
        out.write_json("realizability.json", "realizability", &real)?;
        return Err(CliError::Check(format!("graph is not two-photon realizable: {}", real.reason)));
    }
    let circuit = compile_graph(&g, &spec)?;
    let state = simulate_cluster(&g, &spec)?;
    let mut buf = Vec::new();
    state.write_json(&mut buf)?;
    let value: serde_json::Value = serde_json::from_slice(&buf)?;
    out.write_json("state.json", "two_photon_state", value)?;
    out.write_json("circuit.json", "compiled_circuit", &circuit)?;
    out.write_json("realizability.json", "realizability", &real)?;
    #[derive(Serialize)]
    struct Prob {
        mode_a: usize,
        mode_b: usize,
        probability: f64,
    }
    let probs = state.coincidence_probs();
    out.write_csv(
        "coincidences.csv",
        "ideal_coincidence_probabilities",
        probs
            .indexed_iter()
            .filter(|(_, &v)| v > 0.0)
            .map(|((mode_a, mode_b), &probability)| Prob { mode_a, mode_b, probability }),
    )?;
    Ok(vec![format!(
        "state: d = {}, {} qudits, {} x {} modes, norm {:.12}",
        g.d(),
        g.n_vertices(),
        state.modes(),
        state.modes(),
        state.norm()
    )])
}

pub fn witness(p: &ExperimentPreset, out: &OutputDir) -> Result<Vec<String>, CliError> {
    let g = p.graph()?;
    let spec = p.encoding(&g)?;
    let state = simulate_cluster(&g, &spec)?;
    let settings = mub_settings(&g)?;
    let noise = &p.noise;
    let expected = witness_on_mixture(&g, noise.white_noise)?;
    let probs: Vec<_> = settings
        .iter()
        .map(|s| Ok(mix_with_white_noise(&s.probabilities(&state)?, noise.white_noise)))
        .collect::<Result<_, CliError>>()?;
    let report = match noise.mean_counts {
        None if noise.white_noise == 0.0 => witness_exact(&state, &g)?,
        None => {
            let exp = expand_witness(&g)?;
            let values = terms_from_distributions(&g, &settings, [&probs[0], &probs[1]])?;
            WitnessReport {
                value: exp.evaluate(&values).re,
                std_dev: 0.0,
                per_term: exp
                    .terms
                    .iter()
                    .zip(values)
                    .map(|(t, value)| TermEstimate {
                        label: t.label.clone(),
                        group: t.group,
                        value,
                        std: 0.0,
                    })
                    .collect(),
                setting_used: SettingUsed::Exact,
            }
        }
        Some(mean) => {
            let tables = [
                sample_counts(&probs[0], mean, p.seed.wrapping_mul(2))?,
                sample_counts(&probs[1], mean, p.seed.wrapping_mul(2).wrapping_add(1))?,
            ];
            for (i, t) in tables.iter().enumerate() {
                let mut buf = Vec::new();
                t.write_csv(&mut buf)?;
                out.write_bytes(&format!("counts_setting{}.csv", i + 1), "coincidence_counts", &buf)?;
            }
            witness_from_counts([&tables[0], &tables[1]], &g, &settings, noise.resamples, p.seed)?
        }
    };
    out.write_json("witness.json", "witness_report", &report)?;
    let mut buf = Vec::new();
    report.write_terms_csv(&mut buf)?;
    out.write_bytes("witness_terms.csv", "witness_terms", &buf)?;
    let mut lines = Vec::new();
    match report.setting_used {
        SettingUsed::Exact => {
            if (report.value - expected).abs() > EXACT_TOL {
                return Err(CliError::Check(format!(
                    "exact witness {} disagrees with the mixture value {expected}",
                    report.value
                )));
            }
            lines.push(format!("witness = {:.3} (exact, white noise p = {})", report.value, noise.white_noise));
        }
        SettingUsed::TwoMubCounts => lines.push(format!(
            "witness = {:.3} ± {:.3} (two-setting counts, mean {} per setting, white noise p = {}, {} bootstrap resamples); noiseless expectation {expected:.3}",
            report.value,
            report.std_dev,
            noise.mean_counts.unwrap_or_default(),
            noise.white_noise,
            noise.resamples
        )),
    }
    lines.push(format!(
        "{} operator strings; entanglement {}",
        report.per_term.len(),
        if report.value < 0.0 { "detected" } else { "not detected" }
    ));
    Ok(lines)
}

pub fn rotate(p: &ExperimentPreset, out: &OutputDir) -> Result<Vec<String>, CliError> {
    let s = p.sweep.as_ref().ok_or_else(|| CliError::Preset("no sweep section".into()))?;
    let grid = |n: usize| (0..n).map(|k| k as f64 * TAU / n as f64).collect::<Vec<_>>();
    let input = match s.input {
        InputState::Plus => InputPrep::Z.input(),
        InputState::PlusI => InputPrep::Y.input(),
    };
    let rows = rotation_sweep(&grid(s.alpha_steps), &grid(s.beta_steps), s.gamma, input)?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    out.write_bytes("rotation_sweep.csv", "rotation_sweep", &buf)?;
    let bloch_err = rows
        .iter()
        .map(|r| (r.x - r.oracle_x).abs().max((r.y - r.oracle_y).abs()).max((r.z - r.oracle_z).abs()))
        .fold(0.0, f64::max);
    let min_f = rows.iter().map(|r| r.min_branch_fidelity).fold(1.0, f64::min);
    #[derive(Serialize)]
    struct Summary {
        rows: usize,
        gamma: f64,
        input: InputState,
        max_bloch_error: f64,
        min_branch_fidelity: f64,
    }
    out.write_json(
        "rotation_sweep.json",
        "rotation_sweep_summary",
        Summary {
            rows: rows.len(),
            gamma: s.gamma,
            input: s.input,
            max_bloch_error: bloch_err,
            min_branch_fidelity: min_f,
        },
    )?;
    if bloch_err > EXACT_TOL || 1.0 - min_f > EXACT_TOL {
        return Err(CliError::Check(format!(
            "rotation sweep departs from the analytic rotation: Bloch error {bloch_err:.2e}, min fidelity {min_f}"
        )));
    }
    Ok(vec![format!(
        "rotation sweep: {} rows, max Bloch error vs analytic {bloch_err:.1e}, min branch fidelity {min_f:.12}",
        rows.len()
    )])
}

pub fn schedule(p: &ExperimentPreset, out: &OutputDir) -> Result<Vec<String>, CliError> {
    let s = p.schedule.as_ref().ok_or_else(|| CliError::Preset("no schedule section".into()))?;
    let dep = match &s.dependencies {
        DependencySource::Rotation => hdmbqc::scheduler::rotation_dependencies(),
        DependencySource::Cones(fc) => DependencyGraph::new(fc.clone())?,
    };
    let alloc = PhotonAllocation::new(s.allocation.clone())?;
    if s.allocation.len() != dep.len() {
        return Err(CliError::Preset(format!(
            "allocation covers {} qubits, dependency graph has {}",
            s.allocation.len(),
            dep.len()
        )));
    }
    let es = edges(&dep);
    let qr = qubit_rounds(&dep);
    let verdict = check_allocation(&dep, &alloc)?;
    let pr = if verdict.valid { Some(photon_rounds(&dep, &alloc)?) } else { None };
    #[derive(Serialize)]
    struct Report<'a> {
        forward_cones: Vec<Vec<usize>>,
        edges: &'a [(usize, usize)],
        allocation: &'a [usize],
        verdict: &'a hdmbqc::scheduler::AllocationVerdict,
        qubit_rounds: &'a hdmbqc::Schedule,
        photon_rounds: Option<&'a hdmbqc::Schedule>,
    }
    out.write_json(
        "schedule.json",
        "schedule",
        Report {
            forward_cones: (0..dep.len()).map(|q| dep.cone(q).to_vec()).collect(),
            edges: &es,
            allocation: &s.allocation,
            verdict: &verdict,
            qubit_rounds: &qr,
            photon_rounds: pr.as_ref(),
        },
    )?;
    out.write_bytes("schedule_qubits.dot", "graphviz", qr.to_dot(&es).as_bytes())?;
    let Some(pr) = pr else {
        let c = verdict.conflict.map(|c| c.to_string()).unwrap_or_default();
        return Err(CliError::Check(format!("allocation {:?} is not schedulable: {c}", s.allocation)));
    };
    let photon_edges: Vec<(usize, usize)> = es
        .iter()
        .map(|&(a, b)| (alloc.photon(a), alloc.photon(b)))
        .filter(|(a, b)| a != b)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    out.write_bytes("schedule_photons.dot", "graphviz", pr.to_dot(&photon_edges).as_bytes())?;
    Ok(vec![format!(
        "schedule: {} qubits in {} qubit rounds, {} photons in {} photon rounds ({} vs {} feedforward steps)",
        dep.len(),
        qr.len(),
        alloc.photons(),
        pr.len(),
        qr.len().saturating_sub(1),
        pr.len().saturating_sub(1)
    )])
}

fn geometry(p: &ExperimentPreset) -> Result<(Geometry, &crate::preset::MplcPreset), CliError> {
    let m = p.mplc.as_ref().ok_or_else(|| CliError::Preset("no mplc section".into()))?;
    let g = Geometry {
        rows: m.rows,
        cols: m.cols,
        ..Geometry::desk()
    };
    g.validate()?;
    Ok((g, m))
}

pub fn mplc_design(p: &ExperimentPreset, out: &OutputDir) -> Result<Vec<String>, CliError> {
    let (g, m) = geometry(p)?;
    let factors = vec![hadamard(); m.qubits];
    let s = compile_measurement_stack(&factors, &g, m.iterations)?;
    write_masks(&out.file("masks.bin"), &s.stack)?;
    out.record("masks.bin", "phase_masks")?;
    write_mask_preview(&out.file("masks.png"), &s.stack)?;
    out.record("masks.png", "phase_mask_preview")?;
    #[derive(Serialize)]
    struct Design<'a> {
        planes: usize,
        modes: usize,
        fidelity: f64,
        layer_fidelity: &'a [f64],
        mean_efficiency: f64,
        efficiency: &'a [f64],
        geometry: &'a Geometry,
    }
    out.write_json(
        "mplc_design.json",
        "mplc_design",
        Design {
            planes: s.planes(),
            modes: s.target.nrows(),
            fidelity: s.fidelity,
            layer_fidelity: &s.layer_fidelity,
            mean_efficiency: s.transfer.mean_efficiency(),
            efficiency: &s.transfer.efficiency,
            geometry: &g,
        },
    )?;
    #[derive(Serialize)]
    struct Sweep {
        sweep: usize,
        fidelity: f64,
    }
    out.write_csv(
        "mplc_history.csv",
        "wavefront_matching_history",
        s.history.iter().enumerate().map(|(sweep, &fidelity)| Sweep { sweep, fidelity }),
    )?;
    out.write_csv("mplc_transfer.csv", "transfer_matrix", cells(&s.transfer.matrix))?;
    Ok(vec![format!(
        "mplc design: {} Hadamard factor(s), {} planes, fidelity {:.6}, mean efficiency {:.3}",
        m.qubits,
        s.planes(),
        s.fidelity,
        s.transfer.mean_efficiency()
    )])
}

pub fn mplc_reconstruct(p: &ExperimentPreset, out: &OutputDir) -> Result<Vec<String>, CliError> {
    let (g, m) = geometry(p)?;
    let path = m.masks.clone().unwrap_or_else(|| out.file("masks.bin"));
    if !path.exists() {
        return Err(CliError::Preset(format!(
            "mask file {} not found; run mplc-design first or pass --masks",
            path.display()
        )));
    }
    let stack = read_masks(&path)?;
    if stack.geometry != g {
        return Err(CliError::Preset("mask file geometry differs from the preset".into()));
    }
    let modes = spot_modes(1 << m.qubits, &g)?;
    let truth = stack_matrix(&stack, &modes, &modes)?;
    let (single, probes) = synthesize_probes(&truth.matrix, m.probes, m.probe_noise, p.seed);
    let opts = GsOptions {
        seed: p.seed,
        ..GsOptions::default()
    };
    let rec = gs_reconstruct(&single, &probes, &opts)?;
    let fidelity = frobenius_fidelity(&rec.transfer.matrix, &gauge_rows(&truth.matrix))?;
    #[derive(Serialize)]
    struct Report<'a> {
        probes: usize,
        probe_noise: f64,
        fidelity_to_simulated: f64,
        reconstruction: &'a hdmbqc::mplc::GsReconstruction,
    }
    out.write_json(
        "reconstruction.json",
        "gs_reconstruction",
        Report {
            probes: m.probes,
            probe_noise: m.probe_noise,
            fidelity_to_simulated: fidelity,
            reconstruction: &rec,
        },
    )?;
    out.write_csv("reconstructed_transfer.csv", "transfer_matrix", cells(&rec.transfer.matrix))?;
    let mut lines = vec![format!(
        "reconstruction: {} probes, noise {}, fidelity to simulated stack {fidelity:.6}, residual {:.2e}",
        m.probes, m.probe_noise, rec.residual
    )];
    if rec.ill_conditioned {
        lines.push("warning: probe set is ill-conditioned".into());
    }
    Ok(lines)
}

pub fn metrics(p: &ExperimentPreset, out: &OutputDir) -> Result<Vec<String>, CliError> {
    let m = p.metrics.as_ref().ok_or_else(|| CliError::Preset("no metrics section".into()))?;
    let dim = match m.hilbert_dim {
        Some(d) => d,
        None => {
            let g = p.graph()?;
            (g.d() as u64).pow(g.n_vertices() as u32)
        }
    };
    let rates = match (m.rate_in_hz, m.rate_out_hz) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(CliError::Preset("loss needs both rate_in_hz and rate_out_hz".into())),
    };
    let rec = MetricsRecord::new(dim, m.rate_hz, rates)?;
    out.write_json("metrics.json", "metrics", &rec)?;
    out.write_csv("metrics.csv", "metrics", [&rec])?;
    let mut line = format!(
        "metrics: dim {} at {} Hz, eqrr {:.4e} Hz, {:.2} equivalent qubits",
        rec.hilbert_dim, rec.rate_hz, rec.eqrr_hz, rec.equivalent_qubits
    );
    if let Some(l) = rec.loss_db {
        line.push_str(&format!(", loss {l:.2} dB"));
    }
    if !rec.is_passive() {
        return Err(CliError::Check(format!("output rate exceeds input rate; a passive system cannot gain ({line})")));
    }
    Ok(vec![line])
}
