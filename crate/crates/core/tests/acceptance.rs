//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use hdmbqc::encoding::EncodingSpec;
use hdmbqc::feedforward::{
    adaptive_oracle, build_intra_feedforward, chain_state, circuit_branches, derive_chain_from_cluster,
    qubit_fidelity, rotation_pattern, rotation_sweep, InputPrep, MeasurementPattern, PatternEntry,
};
use hdmbqc::graph::{
    check_two_photon_realizable, eight_qubit_cluster, four_qudit_chain, layout, simulate_cluster, stabilizers, Edge,
    GraphState, StabilizerTerm,
};
use hdmbqc::linalg::{self, hadamard, C64};
use hdmbqc::metrics::{eqrr, loss_db};
use hdmbqc::mplc::{
    compile_measurement_stack, frobenius_fidelity, gauge_rows, gs_reconstruct, propagate, spot_modes, stack_matrix,
    synthesize_probes, target_fields, wavefront_match, Geometry, GsOptions, OpticalField,
};
use hdmbqc::scheduler::{
    check_allocation, edges, photon_rounds, qubit_rounds, rotation_dependencies, Conflict, DependencyGraph,
    PhotonAllocation,
};
use hdmbqc::state::{Photon, TwoPhotonState};
use hdmbqc::witness::{expand_witness, mub_settings, terms_from_distributions, witness_exact, witness_on_mixture, zero_crossing};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spec(d: usize, n: usize) -> EncodingSpec {
    EncodingSpec::with_default_grid(d, n).unwrap()
}

fn criterion_1() -> Outcome {
    let g8 = eight_qubit_cluster();
    let g5 = four_qudit_chain();
    let w8 = witness_exact(&simulate_cluster(&g8, &spec(2, 4)).unwrap(), &g8).unwrap().value;
    let w5 = witness_exact(&simulate_cluster(&g5, &spec(5, 2)).unwrap(), &g5).unwrap().value;
    // constant 3 and two identity strings at weight 1/8: W(I/dim) = 3 - 2/8
    let oracle = 1.0 / (1.0 + (3.0 - 2.0 / 8.0));
    let p = zero_crossing(&g8).unwrap();
    let at = witness_on_mixture(&g8, p).unwrap();
    let pass = (w8 + 1.0).abs() < 1e-9 && (w5 + 1.0).abs() < 1e-9 && (p - oracle).abs() < 1e-6 && at.abs() < 1e-9;
    outcome(
        pass,
        format!("W(8 qubits) = {w8:.12}, W(d=5) = {w5:.12}, zero crossing p = {p:.7} (oracle {oracle:.7})"),
    )
}

fn random_graph(rng: &mut ChaCha8Rng) -> Option<GraphState> {
    let d = [2, 3, 5][rng.random_range(0..3)];
    let n = rng.random_range(1..=3);
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.shuffle(rng);
    let mut alloc = vec![Photon::B; 2 * n];
    for &v in &order[..n] {
        alloc[v] = Photon::A;
    }
    let mut es: Vec<Edge> = (0..n).map(|k| Edge::new(order[k], order[n + k], 1)).collect();
    for side in [&order[..n], &order[n..]] {
        for i in 0..n {
            for j in i + 1..n {
                let w = rng.random_range(0..d);
                if w > 0 {
                    es.push(Edge::new(side[i], side[j], w));
                }
            }
        }
    }
    GraphState::new(d, 2 * n, es, alloc).ok()?.with_auto_frame().ok()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut tested, mut unframeable, mut worst) = (0, 0, 0.0f64);
    let mut all_realizable = true;
    while tested < 200 {
        let Some(g) = random_graph(&mut rng) else {
            unframeable += 1;
            continue;
        };
        all_realizable &= check_two_photon_realizable(&g).realizable;
        let s = simulate_cluster(&g, &spec(g.d(), g.n_vertices() / 2)).unwrap();
        let lay = layout(&g).unwrap();
        for t in stabilizers(&g) {
            worst = worst.max((t.expectation(&s, &lay) - C64::new(1.0, 0.0)).norm());
        }
        tested += 1;
    }
    outcome(
        all_realizable && worst < 1e-10,
        format!("{tested} graphs, max |<S> - 1| = {worst:.2e} ({unframeable} draws had no valid frame)"),
    )
}

/// Operator strings of the expanded witnesses in `X_1 Z_2^3` notation.
const EIGHT_QUBIT_STRINGS: [&str; 30] = [
    "X_2 Z_3 Z_4 Z_5 Z_6 X_7 X_8", "X_2 Z_6 X_7 X_8", "X_2 Z_4 Z_5 X_7 X_8", "X_2 Z_3 X_7 X_8",
    "X_1 Z_4 Z_5 Z_6 X_8", "X_1 Z_3 Z_6 X_8", "X_1 Z_3 Z_4 Z_5 X_8", "X_1 X_8", "X_1 X_2 Z_3 Z_4 Z_5 Z_6 X_7",
    "X_1 X_2 Z_6 X_7", "X_1 X_2 Z_4 Z_5 X_7", "X_1 X_2 Z_3 X_7", "Z_4 Z_5 Z_6", "Z_3 Z_6", "Z_3 Z_4 Z_5",
    "Z_1 Z_2 X_3 X_5 X_6 Z_7 Z_8", "Z_1 Z_2 X_3 X_4 X_6 Z_7 Z_8", "Z_1 X_4 X_5 Z_7 Z_8", "Z_1 Z_7 Z_8",
    "Z_1 X_3 X_5 X_6 Z_8", "Z_1 X_3 X_4 X_6 Z_8", "Z_1 Z_2 X_4 X_5 Z_8", "Z_1 Z_2 Z_8", "X_3 X_5 X_6 Z_7",
    "X_3 X_4 X_6 Z_7", "Z_2 X_4 X_5 Z_7", "Z_2 Z_7", "Z_2 X_3 X_5 X_6", "Z_2 X_3 X_4 X_6", "X_4 X_5",
];

const QUDIT_STRINGS: [&str; 24] = [
    "Z_1^4 Z_2^2 X_3 X_4", "Z_1^4 Z_2^3 X_3^2 X_4^2", "Z_1^4 Z_2^4 X_3^3 X_4^3", "Z_1^4 I_2 X_3^4 X_4^4",
    "Z_1^3 Z_2^3 X_3 X_4", "Z_1^3 Z_2^4 X_3^2 X_4^2", "Z_1^3 I_2 X_3^3 X_4^3", "Z_1^3 Z_2 X_3^4 X_4^4",
    "I_1 Z_2 X_3 X_4", "I_1 Z_2^2 X_3^2 X_4^2", "Z_1^4 Z_2 I_3 I_4", "Z_1^3 Z_2^2 I_3 I_4", "I_1 I_2 Z_3 Z_4^4",
    "I_1 I_2 Z_3^2 Z_4^3", "X_1 X_2 Z_3^2 Z_4^4", "X_1 X_2 Z_3^3 Z_4^3", "X_1 X_2 Z_3^4 Z_4^2", "X_1 X_2 I_3 Z_4",
    "X_1 X_2 Z_3 I_4", "X_1^2 X_2^2 Z_3^3 Z_4^4", "X_1^2 X_2^2 Z_3^4 Z_4^3", "X_1^2 X_2^2 I_3 Z_4^2",
    "X_1^2 X_2^2 Z_3 Z_4", "X_1^2 X_2^2 Z_3^2 I_4",
];

/// `(x, z)` exponents of a written string on `n` sites.
fn parse_string(s: &str, n: usize) -> (Vec<usize>, Vec<usize>) {
    let (mut x, mut z) = (vec![0; n], vec![0; n]);
    for tok in s.split_whitespace() {
        let (op, rest) = tok.split_at(1);
        let rest = &rest[1..];
        let (site, pow) = match rest.split_once('^') {
            Some((a, b)) => (a.parse::<usize>().unwrap(), b.parse::<usize>().unwrap()),
            None => (rest.parse::<usize>().unwrap(), 1),
        };
        match op {
            "X" => x[site - 1] = pow,
            "Z" => z[site - 1] = pow,
            "I" => {}
            _ => panic!("bad token {tok}"),
        }
    }
    (x, z)
}

fn pair_class(t: &StabilizerTerm) -> (Vec<usize>, Vec<usize>) {
    let (x, z) = t.string();
    let d = t.d;
    let neg = |v: &[usize]| v.iter().map(|&a| (d - a) % d).collect::<Vec<_>>();
    let conj = (neg(&x), neg(&z));
    std::cmp::min((x, z), conj)
}

fn random_state(d: usize, n: usize, seed: u64) -> TwoPhotonState {
    let m = d.pow(n as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = Array2::from_shape_fn((m, m), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    TwoPhotonState::normalized(amp, spec(d, n)).unwrap()
}

fn criterion_3() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (g, written, n) in [
        (eight_qubit_cluster(), &EIGHT_QUBIT_STRINGS[..], 4),
        (four_qudit_chain(), &QUDIT_STRINGS[..], 2),
    ] {
        let d = g.d();
        let exp = expand_witness(&g).unwrap();
        let settings = mub_settings(&g).unwrap();
        let evaluated: BTreeSet<usize> = settings.iter().flat_map(|s| s.terms.iter().copied()).collect();
        let covered = evaluated.len() == exp.terms.len() && settings[0].terms.len() + settings[1].terms.len() == exp.terms.len();
        let classes: BTreeSet<_> = exp
            .terms
            .iter()
            .filter(|t| !t.op.is_identity_string())
            .map(|t| pair_class(&t.op))
            .collect();
        let listed: BTreeSet<_> = written
            .iter()
            .map(|s| {
                let (x, z) = parse_string(s, g.n_vertices());
                let mut t = StabilizerTerm::identity(d, g.n_vertices());
                t.x = x;
                t.z = z;
                pair_class(&t)
            })
            .collect();
        let identities = exp.terms.iter().filter(|t| t.op.is_identity_string()).count();
        let strings_match = classes == listed && listed.len() == written.len();
        // per-term agreement between the two-setting readout and exact expectations
        let lay = layout(&g).unwrap();
        let mut worst: f64 = 0.0;
        for state in [simulate_cluster(&g, &spec(d, n)).unwrap(), random_state(d, n, 11)] {
            let probs = [settings[0].probabilities(&state).unwrap(), settings[1].probabilities(&state).unwrap()];
            let vals = terms_from_distributions(&g, &settings, [&probs[0], &probs[1]]).unwrap();
            for (t, v) in exp.terms.iter().zip(&vals) {
                worst = worst.max((t.op.expectation(&state, &lay) - v).norm());
            }
        }
        pass &= covered && strings_match && worst < 1e-10;
        notes.push(format!(
            "d={d}: {} strings over the two settings ({} + {}), {} identity, {} conjugate classes vs {} written, max term error {worst:.1e}",
            exp.terms.len(),
            settings[0].terms.len(),
            settings[1].terms.len(),
            identities,
            classes.len(),
            written.len()
        ));
    }
    let e8 = expand_witness(&eight_qubit_cluster()).unwrap();
    pass &= e8.terms.len() == 32;
    outcome(pass, notes.join("; "))
}

fn random_pattern(rng: &mut ChaCha8Rng) -> MeasurementPattern {
    let n = rng.random_range(1..=4);
    let entries = (0..n)
        .map(|j| {
            if rng.random_bool(0.2) {
                PatternEntry::z()
            } else {
                let deps = (0..j).filter(|_| rng.random_bool(0.5)).collect();
                PatternEntry::equatorial(rng.random::<f64>() * TAU - PI, deps)
            }
        })
        .collect();
    MeasurementPattern::new(entries).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut dp, mut df): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let pattern = random_pattern(&mut rng);
        let input = [
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
        ];
        let chain = chain_state(input, pattern.len()).unwrap();
        let oracle = adaptive_oracle(&pattern, &chain).unwrap();
        let circuit = build_intra_feedforward(&pattern).unwrap().unitary();
        let got = circuit_branches(&pattern, &circuit, &chain).unwrap();
        for (a, b) in oracle.branches.iter().zip(&got.branches) {
            assert_eq!(a.outcomes, b.outcomes);
            dp = dp.max((a.probability - b.probability).abs());
            if !a.zero_probability {
                df = df.max(1.0 - qubit_fidelity(a.corrected, b.corrected));
            }
        }
    }
    // rotation chain, 16 x 16 angle grid, inputs reachable from the cluster
    let grid: Vec<f64> = (0..16).map(|k| k as f64 * TAU / 16.0).collect();
    let mut rot_worst: f64 = 0.0;
    let mut bloch_worst: f64 = 0.0;
    let mut derived_worst: f64 = 0.0;
    let cluster = simulate_cluster(&eight_qubit_cluster(), &spec(2, 4)).unwrap();
    for prep in [InputPrep::Z, InputPrep::Y] {
        for row in rotation_sweep(&grid, &grid, 0.0, prep.input()).unwrap() {
            rot_worst = rot_worst.max(1.0 - row.min_branch_fidelity);
            bloch_worst = bloch_worst
                .max((row.x - row.oracle_x).abs())
                .max((row.y - row.oracle_y).abs())
                .max((row.z - row.oracle_z).abs());
        }
        let derived = derive_chain_from_cluster(&cluster, &eight_qubit_cluster(), prep).unwrap();
        let ideal = chain_state(prep.input(), 4).unwrap();
        derived_worst = derived_worst.max(1.0 - linalg::inner(&ideal, &derived.chain).norm_sqr());
        let pattern = rotation_pattern(0.7, 1.9, 0.0);
        let u = build_intra_feedforward(&pattern).unwrap().unitary();
        let want = hdmbqc::feedforward::apply2(
            &hdmbqc::feedforward::rz(1.9).dot(&hdmbqc::feedforward::rx(0.7)),
            prep.input(),
        );
        for b in circuit_branches(&pattern, &u, &derived.chain).unwrap().branches {
            derived_worst = derived_worst.max(1.0 - qubit_fidelity(b.corrected, want));
        }
    }
    let pass = dp <= 1e-10 && df <= 1e-10 && rot_worst <= 1e-10 && bloch_worst <= 1e-10 && derived_worst <= 1e-10;
    outcome(
        pass,
        format!(
            "100 patterns: max dP = {dp:.1e}, max 1-F = {df:.1e}; rotation grid 2 x 256 rows: max 1-F = {rot_worst:.1e}, max Bloch error = {bloch_worst:.1e}; chain from cluster: max 1-F = {derived_worst:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let measured = DependencyGraph::from_pattern(&rotation_pattern(0.3, 0.5, 0.7)).unwrap();
    let q4 = qubit_rounds(&measured).len();
    let full = rotation_dependencies();
    let q5 = qubit_rounds(&full).len();
    let alloc = PhotonAllocation::new(vec![0, 0, 0, 0, 1]).unwrap();
    let p = photon_rounds(&full, &alloc).unwrap().len();
    let reduction = q4 == 4 && p == 2 && q5 - 1 == 4 && p - 1 == 1;

    let conflict_dep = DependencyGraph::new(vec![vec![1], vec![2], vec![]]).unwrap();
    let verdict = check_allocation(&conflict_dep, &PhotonAllocation::new(vec![0, 1, 0]).unwrap()).unwrap();
    let witness_ok = !verdict.valid
        && verdict.conflict
            == Some(Conflict::Pair {
                forward: (0, 1),
                backward: (1, 2),
            });

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut valid, mut backward) = (0, 0);
    for _ in 0..2000 {
        let n = rng.random_range(2..10);
        let fc = (0..n).map(|i| (i + 1..n).filter(|_| rng.random_bool(0.3)).collect()).collect();
        let dep = DependencyGraph::new(fc).unwrap();
        let raw: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let ids: Vec<usize> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let alloc = PhotonAllocation::new(raw.iter().map(|p| ids.iter().position(|x| x == p).unwrap()).collect()).unwrap();
        if !check_allocation(&dep, &alloc).unwrap().valid {
            continue;
        }
        valid += 1;
        let round = photon_rounds(&dep, &alloc).unwrap().round_of(alloc.photons());
        for (a, b) in edges(&dep) {
            let (pa, pb) = (alloc.photon(a), alloc.photon(b));
            if round[pa] > round[pb] || (pa != pb && round[pa] == round[pb]) {
                backward += 1;
            }
        }
    }
    outcome(
        reduction && witness_ok && backward == 0 && valid > 100,
        format!(
            "rotation: {q4} measured-qubit rounds vs {p} photon rounds ({} feedforward steps vs {} with the output qubit); conflict witness {:?}; {valid} fuzzed valid allocations, {backward} backward edges",
            q5 - 1,
            p - 1,
            verdict.conflict.map(|c| c.qubits())
        ),
    )
}

fn random_unitary(n: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let q = g.qr().q();
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)])
}

fn criterion_6() -> Outcome {
    let g = Geometry::desk();
    let modes = spot_modes(2, &g).unwrap();
    let u = hadamard();
    let r = wavefront_match(&modes, &target_fields(&modes, &u).unwrap(), 3, 30, &g).unwrap();
    let a = stack_matrix(&r.stack, &modes, &modes).unwrap();
    let f = frobenius_fidelity(&a.matrix, &u).unwrap();
    let monotone = r.history.len() == 30 && r.history.windows(2).all(|w| w[1] >= w[0] - 1e-6);
    let truth = random_unitary(4, 6);
    let (single, probes) = synthesize_probes(&truth, 16, 0.0, 60);
    let rec = gs_reconstruct(&single, &probes, &GsOptions::default()).unwrap();
    let fgs = frobenius_fidelity(&rec.transfer.matrix, &gauge_rows(&truth)).unwrap();
    outcome(
        f >= 0.998 - 0.002 && monotone && (f - r.fidelity).abs() < 1e-6 && fgs >= 0.999,
        format!(
            "3-plane beam splitter F = {f:.7} (efficiency {:.3}), 30 sweeps monotone = {monotone}, GS 4x4 F = {fgs:.7}",
            a.mean_efficiency()
        ),
    )
}

fn criterion_7() -> Outcome {
    let g = Geometry::desk();
    // Hadamard and the Y eigenbasis
    let s_dag = Array2::from_diag(&ndarray::arr1(&[C64::new(1.0, 0.0), C64::new(0.0, -1.0)]));
    let y = hadamard().dot(&s_dag);
    let sets = [vec![hadamard()], vec![hadamard(), y.clone()], vec![hadamard(), y, hadamard()]];
    let mut counts = Vec::new();
    let mut fids = Vec::new();
    for f in &sets {
        let s = compile_measurement_stack(f, &g, 30).unwrap();
        counts.push(s.planes() as f64);
        fids.push(s.fidelity);
    }
    let ns = [1.0, 2.0, 3.0];
    let (mn, mc) = (2.0, counts.iter().sum::<f64>() / 3.0);
    let slope = ns.iter().zip(&counts).map(|(n, c)| (n - mn) * (c - mc)).sum::<f64>() / 2.0;
    let icept = mc - slope * mn;
    let resid = ns.iter().zip(&counts).map(|(n, c)| (c - (slope * n + icept)).abs()).fold(0.0, f64::max);
    let pass = counts[0] == 3.0 && counts[1] == 5.0 && counts[2] <= 7.0 && fids.iter().all(|&f| f >= 0.98) && resid < 1.0;
    outcome(
        pass,
        format!("planes {counts:?}, fidelities {:?}, fit {slope:.2}N + {icept:.2} (max residual {resid:.2})", fids
            .iter()
            .map(|f| format!("{f:.5}"))
            .collect::<Vec<_>>()),
    )
}

fn criterion_8() -> Outcome {
    let e = eqrr(625, 100.0).unwrap();
    let l1 = loss_db(1.0, 10f64.powf(-1.82)).unwrap();
    let l2 = loss_db(1.0, 10f64.powf(-2.08)).unwrap();
    let pass = (e.eqrr_hz - 6.25e4).abs() < 1e-9
        && (e.equivalent_qubits - 9.28).abs() <= 0.01
        && (l1 + 9.1).abs() < 0.05
        && (l2 + 10.4).abs() < 0.05;
    outcome(
        pass,
        format!(
            "eqrr = {:.1} Hz, {:.4} equivalent qubits, loss {l1:.3} dB and {l2:.3} dB",
            e.eqrr_hz, e.equivalent_qubits
        ),
    )
}

fn criterion_9() -> Outcome {
    let g = Geometry {
        rows: 512,
        cols: 512,
        ..Geometry::desk()
    };
    let w0 = 100.0;
    let zr_mm = PI * (w0 * 1e-6f64).powi(2) / (g.wavelength_nm * 1e-9) * 1e3;
    let f0 = OpticalField::gaussian(&g, (0.0, 0.0), w0);
    let mut worst: f64 = 0.0;
    for k in 0..=8 {
        let z = 25.0 * k as f64;
        let f = propagate(&f0, z, 1.0).unwrap().field;
        let analytic = w0 * (1.0 + (z / zr_mm).powi(2)).sqrt();
        worst = worst.max((f.radius_x_um() / analytic - 1.0).abs());
    }
    outcome(
        worst < 0.005,
        format!("z in [0, 200] mm at 810 nm, z_R = {zr_mm:.2} mm, max relative waist error {:.4}%", worst * 100.0),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("ideal-state witnesses", criterion_1, Some(Duration::from_secs(5))),
        ("stabilizer suite", criterion_2, Some(Duration::from_secs(60))),
        ("witness term coverage", criterion_3, None),
        ("intra-feedforward equivalence", criterion_4, Some(Duration::from_secs(30))),
        ("scheduler", criterion_5, Some(Duration::from_secs(10))),
        ("MPLC quantitative", criterion_6, Some(Duration::from_secs(60))),
        ("plane scaling", criterion_7, None),
        ("metrics", criterion_8, None),
        ("propagation oracle", criterion_9, Some(Duration::from_secs(5))),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let el = t.elapsed();
        let in_time = limit.is_none_or(|l| el <= l);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit.map(|l| format!(" (limit {} s)", l.as_secs())).unwrap_or_default();
        println!(
            "[{}] {}. {name}: {} | {:.2} s{budget}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            el.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
