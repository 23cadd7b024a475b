//! Intra-photon feedforward as a fixed linear-optic circuit.
//!
//! Qubits `1..N` of a linear cluster sit on one photon's `2^N` modes, and the
//! last qubit of the chain sits on the other photon. Qubit `j` is measured
//! either in `Z` or in the equatorial basis
//!
//! `B(φ) = {(|0> + e^{iφ}|1>)/√2 ↦ m = +1, (|0> - e^{iφ}|1>)/√2 ↦ m = -1}`
//!
//! with `φ = f_j(m)·θ_j`. Here `f_j` is the product of earlier outcomes listed in
//! its dependency set. Outcome `m = (-1)^s` for detector digit `s`.
//!
//! Because `H·P(-φ)` maps `B(φ)` onto the computational basis, all adaptive
//! measurements collapse into one unitary. It is built layer by layer: layer
//! `j` puts the phase `-f_j·θ_j` on the modes with `q_j = 1`, where `f_j` is
//! read off the already-interfered digits `< j`. Then a beam splitter acts on
//! digit `j`. `Z`-basis qubits get no layer.

use crate::encoding::{digit, digits_of};
use crate::linalg::{self, C64, ONE, ZERO};
use crate::state::{ModeUnitary, StateError, TwoPhotonState};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_QUBIT_CAP: usize = 10;
const ZERO_PROB: f64 = 1e-24;

#[derive(Debug, Error)]
pub enum FeedforwardError {
    #[error("qubit {qubit} depends on qubit {dep}, which is not measured earlier")]
    ForwardDependency { qubit: usize, dep: usize },
    #[error("qubit {0} is measured in Z and cannot carry a dependency")]
    PauliDependency(usize),
    #[error("pattern has {n} qubits, above the cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("pattern is empty")]
    Empty,
    #[error("chain state has {found} rows, pattern needs {expected}")]
    ChainSize { expected: usize, found: usize },
    #[error("input qubit state has zero norm")]
    ZeroInput,
    #[error("expected the eight-vertex two-photon cluster: {0}")]
    WrongGraph(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type FeedforwardResult<T> = Result<T, FeedforwardError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case")]
pub enum Basis {
    Z,
    Equatorial { theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEntry {
    #[serde(flatten)]
    pub basis: Basis,
    /// Earlier qubits whose outcome product sets the sign of `theta`.
    #[serde(default)]
    pub depends_on: Vec<usize>,
}

impl PatternEntry {
    pub fn z() -> Self {
        PatternEntry {
            basis: Basis::Z,
            depends_on: Vec::new(),
        }
    }

    pub fn equatorial(theta: f64, depends_on: Vec<usize>) -> Self {
        PatternEntry {
            basis: Basis::Equatorial { theta },
            depends_on,
        }
    }

    /// `f_j(m)` for outcome digits `s` (only entries in `depends_on` are read).
    pub fn sign(&self, s: &[usize]) -> f64 {
        let flips: usize = self.depends_on.iter().map(|&i| s[i]).sum();
        if flips % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Measurement pattern, qubits listed in measurement order. Index 0 is the
/// input qubit of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PatternRecord", into = "PatternRecord")]
pub struct MeasurementPattern {
    entries: Vec<PatternEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternRecord {
    pub qubits: Vec<PatternEntry>,
}

impl TryFrom<PatternRecord> for MeasurementPattern {
    type Error = FeedforwardError;

    fn try_from(r: PatternRecord) -> FeedforwardResult<Self> {
        MeasurementPattern::new(r.qubits)
    }
}

impl From<MeasurementPattern> for PatternRecord {
    fn from(p: MeasurementPattern) -> Self {
        PatternRecord { qubits: p.entries }
    }
}

impl MeasurementPattern {
    pub fn new(mut entries: Vec<PatternEntry>) -> FeedforwardResult<Self> {
        if entries.is_empty() {
            return Err(FeedforwardError::Empty);
        }
        for (j, e) in entries.iter_mut().enumerate() {
            if let Some(&dep) = e.depends_on.iter().find(|&&i| i >= j) {
                return Err(FeedforwardError::ForwardDependency { qubit: j, dep });
            }
            if e.basis == Basis::Z && !e.depends_on.is_empty() {
                return Err(FeedforwardError::PauliDependency(j));
            }
            e.depends_on.sort_unstable();
            e.depends_on.dedup();
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[PatternEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Forward cones: `fc[i]` lists the qubits whose sign reads outcome `i`.
    pub fn forward_cones(&self) -> Vec<Vec<usize>> {
        let mut fc = vec![Vec::new(); self.len()];
        for (j, e) in self.entries.iter().enumerate() {
            for &i in &e.depends_on {
                fc[i].push(j);
            }
        }
        fc
    }

    pub fn to_json(&self) -> FeedforwardResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> FeedforwardResult<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Rotation `R_x(γ) R_z(β) R_x(α)` on a five-qubit chain, the first four
/// qubits measured.
pub fn rotation_pattern(alpha: f64, beta: f64, gamma: f64) -> MeasurementPattern {
    MeasurementPattern::new(vec![
        PatternEntry::equatorial(0.0, vec![]),
        PatternEntry::equatorial(-alpha, vec![0]),
        PatternEntry::equatorial(-beta, vec![1]),
        PatternEntry::equatorial(-gamma, vec![0, 2]),
    ])
    .expect("valid pattern")
}

/// One feedforward layer: the diagonal phase, then a beam splitter on `qubit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub qubit: usize,
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraFeedforward {
    pub n: usize,
    pub layers: Vec<Layer>,
}

impl IntraFeedforward {
    pub fn modes(&self) -> usize {
        1 << self.n
    }

    /// Mode pairs `(q_j = 0, q_j = 1)` of each layer's beam splitters.
    pub fn beam_splitter_layout(&self) -> Vec<Vec<(usize, usize)>> {
        let m = self.modes();
        self.layers
            .iter()
            .map(|l| {
                let bit = 1 << (self.n - 1 - l.qubit);
                (0..m).filter(|x| x & bit == 0).map(|x| (x, x | bit)).collect()
            })
            .collect()
    }

    pub fn unitary(&self) -> ModeUnitary {
        let m = self.modes();
        let mut u = linalg::identity(m);
        for (layer, pairs) in self.layers.iter().zip(self.beam_splitter_layout()) {
            for (mut row, &phi) in u.rows_mut().into_iter().zip(&layer.phases) {
                let w = C64::from_polar(1.0, phi);
                row.mapv_inplace(|z| z * w);
            }
            for (a, b) in pairs {
                let ra = u.row(a).to_owned();
                let rb = u.row(b).to_owned();
                u.row_mut(a).assign(&((&ra + &rb) * C64::new(FRAC_1_SQRT_2, 0.0)));
                u.row_mut(b).assign(&((&ra - &rb) * C64::new(FRAC_1_SQRT_2, 0.0)));
            }
        }
        ModeUnitary::new(u).expect("beam splitters and phases are unitary")
    }
}

pub fn build_intra_feedforward(pattern: &MeasurementPattern) -> FeedforwardResult<IntraFeedforward> {
    build_intra_feedforward_capped(pattern, DEFAULT_QUBIT_CAP)
}

pub fn build_intra_feedforward_capped(pattern: &MeasurementPattern, cap: usize) -> FeedforwardResult<IntraFeedforward> {
    let n = pattern.len();
    if n > cap {
        return Err(FeedforwardError::TooLarge { n, cap });
    }
    let m = 1usize << n;
    let layers = pattern
        .entries
        .iter()
        .enumerate()
        .filter_map(|(j, e)| match e.basis {
            Basis::Z => None,
            Basis::Equatorial { theta } => {
                let phases = (0..m)
                    .map(|mode| {
                        if digit(mode, j, 2, n) == 1 {
                            -e.sign(&digits_of(mode, 2, n)) * theta
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Some(Layer { qubit: j, phases })
            }
        })
        .collect();
    Ok(IntraFeedforward { n, layers })
}

/// Rotation circuit on the sixteen modes of one photon.
pub fn rotation_circuit(alpha: f64, beta: f64, gamma: f64) -> ModeUnitary {
    build_intra_feedforward(&rotation_pattern(alpha, beta, gamma))
        .expect("four qubits")
        .unitary()
}

/// Known Pauli correction `X^x Z^z` on the output qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    pub x: bool,
    pub z: bool,
}

/// Byproduct on the output of a chain after the given outcomes. Measuring a
/// qubit carrying `X^a Z^b` in an equatorial basis with outcome `s` leaves
/// `X^{s+b} Z^a` on the next one. A `Z` measurement leaves `Z^s`.
pub fn chain_frame(pattern: &MeasurementPattern, s: &[usize]) -> PauliFrame {
    let (mut a, mut b) = (0, 0);
    for (e, &sj) in pattern.entries.iter().zip(s) {
        (a, b) = match e.basis {
            Basis::Equatorial { .. } => ((sj + b) % 2, a),
            Basis::Z => (0, sj),
        };
    }
    PauliFrame { x: a == 1, z: b == 1 }
}

impl PauliFrame {
    /// Applies `(X^x Z^z)^{-1} = Z^z X^x` to a qubit state.
    pub fn undo(&self, v: [C64; 2]) -> [C64; 2] {
        let mut v = v;
        if self.x {
            v.swap(0, 1);
        }
        if self.z {
            v[1] = -v[1];
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Outcomes `m_j = ±1` in measurement order.
    pub outcomes: Vec<i8>,
    pub probability: f64,
    /// Normalized output qubit state, zero when the branch cannot occur.
    pub state: [C64; 2],
    pub frame: PauliFrame,
    /// `Z^z X^x · state`.
    pub corrected: [C64; 2],
    pub zero_probability: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTable {
    pub branches: Vec<Branch>,
}

impl BranchTable {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    /// Branch-averaged `<X>, <Y>, <Z>` of the frame-corrected output.
    pub fn corrected_bloch(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for b in &self.branches {
            let r = bloch(b.corrected);
            for k in 0..3 {
                acc[k] += b.probability * r[k];
            }
        }
        acc
    }
}

fn branch(pattern: &MeasurementPattern, s: Vec<usize>, out: [C64; 2]) -> Branch {
    let p = out[0].norm_sqr() + out[1].norm_sqr();
    let zero = p < ZERO_PROB;
    let state = if zero {
        [ZERO; 2]
    } else {
        let n = p.sqrt();
        [out[0] / n, out[1] / n]
    };
    let frame = chain_frame(pattern, &s);
    Branch {
        outcomes: s.iter().map(|&x| if x == 0 { 1 } else { -1 }).collect(),
        probability: p,
        corrected: frame.undo(state),
        state,
        frame,
        zero_probability: zero,
    }
}

/// Linear cluster on `n_measured + 1` qubits with `input` on the first qubit,
/// as a `2^n_measured x 2` amplitude matrix (rows: measured qubits, big-endian).
pub fn chain_state(input: [C64; 2], n_measured: usize) -> FeedforwardResult<Array2<C64>> {
    let norm = (input[0].norm_sqr() + input[1].norm_sqr()).sqrt();
    if norm == 0.0 {
        return Err(FeedforwardError::ZeroInput);
    }
    let total = n_measured + 1;
    let dim = 1usize << total;
    let amp0 = 1.0 / ((1usize << n_measured) as f64).sqrt();
    let v = Array1::from_shape_fn(dim, |x| {
        let bits = digits_of(x, 2, total);
        let edges: usize = bits.windows(2).map(|w| w[0] * w[1]).sum();
        let sign = if edges % 2 == 0 { 1.0 } else { -1.0 };
        input[bits[0]] / norm * amp0 * sign
    });
    Ok(v.into_shape_with_order((dim / 2, 2)).expect("exact reshape"))
}

/// Ground-truth sequential semantics: measure qubit 1, branch, adapt the next
/// basis from the recorded outcomes, project, and repeat.
pub fn adaptive_oracle(pattern: &MeasurementPattern, chain: &Array2<C64>) -> FeedforwardResult<BranchTable> {
    let n = pattern.len();
    if chain.nrows() != 1 << n || chain.ncols() != 2 {
        return Err(FeedforwardError::ChainSize {
            expected: 1 << n,
            found: chain.nrows(),
        });
    }
    let flat: Vec<C64> = chain.iter().copied().collect();
    let mut out = Vec::with_capacity(1 << n);
    descend(pattern, 0, flat, Vec::new(), &mut out);
    out.sort_by_key(|b| {
        b.outcomes
            .iter()
            .fold(0usize, |acc, &m| acc * 2 + usize::from(m < 0))
    });
    Ok(BranchTable { branches: out })
}

fn descend(pattern: &MeasurementPattern, j: usize, psi: Vec<C64>, s: Vec<usize>, out: &mut Vec<Branch>) {
    if j == pattern.len() {
        out.push(branch(pattern, s, [psi[0], psi[1]]));
        return;
    }
    let e = &pattern.entries[j];
    let half = psi.len() / 2;
    for outcome in 0..2 {
        // bra of the basis vector for this outcome
        let bra: [C64; 2] = match e.basis {
            Basis::Z => {
                if outcome == 0 {
                    [ONE, ZERO]
                } else {
                    [ZERO, ONE]
                }
            }
            Basis::Equatorial { theta } => {
                let phi = e.sign(&padded(&s, j)) * theta;
                let sgn = if outcome == 0 { 1.0 } else { -1.0 };
                [
                    C64::new(FRAC_1_SQRT_2, 0.0),
                    C64::from_polar(FRAC_1_SQRT_2, -phi) * sgn,
                ]
            }
        };
        let next: Vec<C64> = (0..half).map(|k| bra[0] * psi[k] + bra[1] * psi[half + k]).collect();
        let mut s2 = s.clone();
        s2.push(outcome);
        descend(pattern, j + 1, next, s2, out);
    }
}

fn padded(s: &[usize], len: usize) -> Vec<usize> {
    let mut v = s.to_vec();
    v.resize(len, 0);
    v
}

/// Runs the synthesized circuit on the measured photon and reads every output
/// mode as a branch.
pub fn circuit_branches(
    pattern: &MeasurementPattern,
    circuit: &ModeUnitary,
    chain: &Array2<C64>,
) -> FeedforwardResult<BranchTable> {
    let n = pattern.len();
    if chain.nrows() != 1 << n || circuit.dim() != chain.nrows() {
        return Err(FeedforwardError::ChainSize {
            expected: 1 << n,
            found: chain.nrows(),
        });
    }
    let after = circuit.matrix().dot(chain);
    let branches = (0..1usize << n)
        .into_par_iter()
        .map(|mode| branch(pattern, digits_of(mode, 2, n), [after[[mode, 0]], after[[mode, 1]]]))
        .collect();
    Ok(BranchTable { branches })
}

pub fn bloch(v: [C64; 2]) -> [f64; 3] {
    let c = v[0].conj() * v[1];
    [2.0 * c.re, 2.0 * c.im, v[0].norm_sqr() - v[1].norm_sqr()]
}

pub fn rx(angle: f64) -> Array2<C64> {
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    ndarray::array![[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
}

pub fn rz(angle: f64) -> Array2<C64> {
    ndarray::array![
        [C64::from_polar(1.0, -angle / 2.0), ZERO],
        [ZERO, C64::from_polar(1.0, angle / 2.0)]
    ]
}

pub fn apply2(u: &Array2<C64>, v: [C64; 2]) -> [C64; 2] {
    [u[[0, 0]] * v[0] + u[[0, 1]] * v[1], u[[1, 0]] * v[0] + u[[1, 1]] * v[1]]
}

/// `|<a|b>|²` for normalized qubit states.
pub fn qubit_fidelity(a: [C64; 2], b: [C64; 2]) -> f64 {
    (a[0].conj() * b[0] + a[1].conj() * b[1]).norm_sqr()
}

/// Input preparations reachable from the eight-qubit cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPrep {
    /// Project qubit eight on `Z = +1`: input `|+>`.
    Z,
    /// Project qubit eight on `Y = -1`: input `(|0> + i|1>)/√2`.
    Y,
}

impl InputPrep {
    pub fn input(self) -> [C64; 2] {
        let h = FRAC_1_SQRT_2;
        match self {
            InputPrep::Z => [C64::new(h, 0.0), C64::new(h, 0.0)],
            InputPrep::Y => [C64::new(h, 0.0), C64::new(0.0, h)],
        }
    }

    fn bra(self) -> [C64; 2] {
        let h = FRAC_1_SQRT_2;
        match self {
            InputPrep::Z => [ONE, ZERO],
            InputPrep::Y => [C64::new(h, 0.0), C64::new(0.0, -h)],
        }
    }
}

/// Five-qubit chain left on photon A's sixteen modes and qubit five.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedChain {
    /// `16 x 2` amplitudes in the physical frame (inverse DFTs still on qubits one and four).
    pub physical: Array2<C64>,
    /// Same state with the frame removed, i.e. the plain chain state.
    pub chain: Array2<C64>,
    /// Probability of finding qubits six and seven in `+1` of their graph `Z`.
    pub probability_67: f64,
    /// Probability of the full post-selection, qubit eight included.
    pub probability: f64,
    pub prep: InputPrep,
}

/// Post-selects the simulated eight-qubit cluster down to the five-qubit chain
/// `1-2-3-4-5` carrying the chosen input on qubit one.
pub fn derive_chain_from_cluster(
    state: &TwoPhotonState,
    g: &crate::graph::GraphState,
    prep: InputPrep,
) -> FeedforwardResult<DerivedChain> {
    let want = crate::graph::eight_qubit_cluster();
    if g != &want {
        return Err(FeedforwardError::WrongGraph("graph differs from the eight-qubit cluster".into()));
    }
    if state.modes() != 16 || state.spec().d() != 2 {
        return Err(FeedforwardError::WrongGraph(format!("state has {} modes", state.modes())));
    }
    // photon B digits read q8 q7 q6 q5. q6 and q7 are framed: graph Z = +1 is
    // physical |+>. q8 is unframed.
    let plus = [C64::new(FRAC_1_SQRT_2, 0.0); 2];
    let amp = state.amp();
    // probability of q6, q7: marginalize q8 and q5
    let mut p67 = 0.0;
    for i in 0..16 {
        for q8 in 0..2 {
            for q5 in 0..2 {
                let mut a = ZERO;
                for q7 in 0..2 {
                    for q6 in 0..2 {
                        a += plus[q7] * plus[q6] * amp[[i, q8 * 8 + q7 * 4 + q6 * 2 + q5]];
                    }
                }
                p67 += a.norm_sqr();
            }
        }
    }
    let bra8 = prep.bra();
    let unnorm = Array2::from_shape_fn((16, 2), |(i, q5)| {
        let mut acc = ZERO;
        for q8 in 0..2 {
            for q7 in 0..2 {
                for q6 in 0..2 {
                    acc += bra8[q8] * plus[q7] * plus[q6] * amp[[i, q8 * 8 + q7 * 4 + q6 * 2 + q5]];
                }
            }
        }
        acc
    });
    let probability = linalg::frobenius_norm_sqr(&unnorm);
    let physical = unnorm.mapv(|z| z / probability.sqrt());
    // undo the inverse DFTs on qubits one and four (digits 0 and 3 of photon A)
    let h = linalg::hadamard();
    let i2 = linalg::identity(2);
    let undo = linalg::kron_all([&h, &i2, &i2, &h]);
    let chain = undo.dot(&physical);
    Ok(DerivedChain {
        physical,
        chain,
        probability_67: p67,
        probability,
        prep,
    })
}

/// One row of a rotation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub oracle_x: f64,
    pub oracle_y: f64,
    pub oracle_z: f64,
    pub min_branch_fidelity: f64,
}

/// Frame-corrected Bloch vector of the rotation circuit's output over an
/// `alpha x beta` grid, next to the analytic `R_x(γ)R_z(β)R_x(α)` prediction.
pub fn rotation_sweep(alphas: &[f64], betas: &[f64], gamma: f64, input: [C64; 2]) -> FeedforwardResult<Vec<SweepRow>> {
    let chain = chain_state(input, 4)?;
    let norm = (input[0].norm_sqr() + input[1].norm_sqr()).sqrt();
    let input = [input[0] / norm, input[1] / norm];
    let grid: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| betas.iter().map(move |&b| (a, b))).collect();
    grid.par_iter()
        .map(|&(alpha, beta)| {
            let pattern = rotation_pattern(alpha, beta, gamma);
            let u = build_intra_feedforward(&pattern)?.unitary();
            let table = circuit_branches(&pattern, &u, &chain)?;
            let target = apply2(&rx(gamma).dot(&rz(beta)).dot(&rx(alpha)), input);
            let [x, y, z] = table.corrected_bloch();
            let [ox, oy, oz] = bloch(target);
            let min_branch_fidelity = table
                .branches
                .iter()
                .map(|b| qubit_fidelity(b.corrected, target))
                .fold(1.0, f64::min);
            Ok(SweepRow {
                alpha,
                beta,
                gamma,
                x,
                y,
                z,
                oracle_x: ox,
                oracle_y: oy,
                oracle_z: oz,
                min_branch_fidelity,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> FeedforwardResult<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingSpec;
    use crate::graph::{eight_qubit_cluster, simulate_cluster};
    use crate::linalg::{hadamard, identity, kron, max_abs_diff};
    use std::f64::consts::PI;

    fn plus() -> [C64; 2] {
        [C64::new(FRAC_1_SQRT_2, 0.0); 2]
    }

    fn y_input() -> [C64; 2] {
        InputPrep::Y.input()
    }

    fn assert_branches_equal(a: &BranchTable, b: &BranchTable) {
        assert_eq!(a.branches.len(), b.branches.len());
        for (x, y) in a.branches.iter().zip(&b.branches) {
            assert_eq!(x.outcomes, y.outcomes);
            assert!((x.probability - y.probability).abs() <= 1e-10, "{} {}", x.probability, y.probability);
            assert_eq!(x.zero_probability, y.zero_probability);
            if !x.zero_probability {
                assert!(qubit_fidelity(x.corrected, y.corrected) >= 1.0 - 1e-10);
            }
        }
    }

    #[test]
    fn identity_rotation_teleports_input() {
        let chain = chain_state(y_input(), 4).unwrap();
        let p = rotation_pattern(0.0, 0.0, 0.0);
        let t = circuit_branches(&p, &rotation_circuit(0.0, 0.0, 0.0), &chain).unwrap();
        assert!((t.total_probability() - 1.0).abs() < 1e-12);
        for b in &t.branches {
            assert!((b.probability - 1.0 / 16.0).abs() < 1e-12);
            assert!(qubit_fidelity(b.corrected, y_input()) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn x_rotation_on_y_input() {
        let chain = chain_state(y_input(), 4).unwrap();
        for alpha in [0.3, 1.2, 2.9, -0.7] {
            let p = rotation_pattern(alpha, 0.0, 0.0);
            let t = circuit_branches(&p, &rotation_circuit(alpha, 0.0, 0.0), &chain).unwrap();
            let want = apply2(&rx(alpha), y_input());
            for b in &t.branches {
                assert!(qubit_fidelity(b.corrected, want) > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn z_rotation_on_plus_input() {
        let chain = chain_state(plus(), 4).unwrap();
        for beta in [0.4, 2.2, -1.9] {
            let p = rotation_pattern(0.0, beta, 0.0);
            let t = circuit_branches(&p, &rotation_circuit(0.0, beta, 0.0), &chain).unwrap();
            let want = apply2(&rz(beta), plus());
            for b in &t.branches {
                assert!(qubit_fidelity(b.corrected, want) > 1.0 - 1e-12);
            }
            // <X> follows cos β
            let [x, _, _] = t.corrected_bloch();
            assert!((x - beta.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn full_rotation_oracle() {
        let (a, b, c) = (0.7, 1.9, -2.3);
        let input = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let chain = chain_state(input, 4).unwrap();
        let p = rotation_pattern(a, b, c);
        let oracle = adaptive_oracle(&p, &chain).unwrap();
        let want = apply2(&rx(c).dot(&rz(b)).dot(&rx(a)), input);
        for br in &oracle.branches {
            assert!(qubit_fidelity(br.corrected, want) > 1.0 - 1e-12);
        }
        let circ = circuit_branches(&p, &rotation_circuit(a, b, c), &chain).unwrap();
        assert_branches_equal(&oracle, &circ);
        // frame word: X^{s2+s4} Z^{s1+s3}
        let s = [1, 0, 1, 1];
        assert_eq!(chain_frame(&p, &s), PauliFrame { x: true, z: false });
        let s = [1, 1, 0, 1];
        assert_eq!(chain_frame(&p, &s), PauliFrame { x: false, z: true });
    }

    #[test]
    fn two_qubit_teleportation() {
        let input = [C64::new(0.8, 0.0), C64::new(0.0, 0.6)];
        let chain = chain_state(input, 1).unwrap();
        let p = MeasurementPattern::new(vec![PatternEntry::equatorial(0.0, vec![])]).unwrap();
        let t = adaptive_oracle(&p, &chain).unwrap();
        let h_in = apply2(&hadamard(), input);
        for b in &t.branches {
            assert!((b.probability - 0.5).abs() < 1e-12);
            assert!(qubit_fidelity(b.corrected, h_in) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn all_z_measurements_collapse() {
        let chain = chain_state(plus(), 3).unwrap();
        let p = MeasurementPattern::new(vec![PatternEntry::z(); 3]).unwrap();
        let t = adaptive_oracle(&p, &chain).unwrap();
        assert!(build_intra_feedforward(&p).unwrap().layers.is_empty());
        for b in &t.branches {
            assert!((b.probability - 1.0 / 8.0).abs() < 1e-12);
            assert!(qubit_fidelity(b.corrected, plus()) > 1.0 - 1e-12);
        }
        let c = circuit_branches(&p, &build_intra_feedforward(&p).unwrap().unitary(), &chain).unwrap();
        assert_branches_equal(&t, &c);
    }

    #[test]
    fn zero_probability_branches_are_flagged() {
        // input |0>, first qubit in Z: outcome 1 never happens
        let chain = chain_state([ONE, ZERO], 1).unwrap();
        let p = MeasurementPattern::new(vec![PatternEntry::z()]).unwrap();
        let t = adaptive_oracle(&p, &chain).unwrap();
        assert!(!t.branches[0].zero_probability);
        assert!(t.branches[1].zero_probability);
        assert_eq!(t.branches[1].state, [ZERO; 2]);
    }

    #[test]
    fn undetermined_pattern_is_separable() {
        let p = MeasurementPattern::new(vec![PatternEntry::equatorial(0.0, vec![]); 3]).unwrap();
        let u = build_intra_feedforward(&p).unwrap().unitary();
        let h = hadamard();
        let want = kron(&kron(&h, &h), &h);
        assert!(max_abs_diff(u.matrix(), &want) < 1e-14);
    }

    #[test]
    fn rotation_pattern_with_gamma_zero_matches_rotation_circuit() {
        let u = build_intra_feedforward(&rotation_pattern(0.4, 1.1, 0.0)).unwrap().unitary();
        assert!(max_abs_diff(u.matrix(), rotation_circuit(0.4, 1.1, 0.0).matrix()) < 1e-15);
        assert_eq!(u.dim(), 16);
    }

    #[test]
    fn two_qubit_block_rule() {
        // qubit 2 adapts on m1: top block (m1 = +1) applies H P(-θ2), bottom H P(θ2)
        let (t1, t2) = (0.9, -1.7);
        let p = MeasurementPattern::new(vec![
            PatternEntry::equatorial(t1, vec![]),
            PatternEntry::equatorial(t2, vec![0]),
        ])
        .unwrap();
        let u = build_intra_feedforward(&p).unwrap().unitary();
        let h = hadamard();
        let ph = |a: f64| ndarray::array![[ONE, ZERO], [ZERO, C64::from_polar(1.0, a)]];
        let top = h.dot(&ph(-t2));
        let bottom = h.dot(&ph(t2));
        let mut second = Array2::<C64>::zeros((4, 4));
        second.slice_mut(ndarray::s![0..2, 0..2]).assign(&top);
        second.slice_mut(ndarray::s![2..4, 2..4]).assign(&bottom);
        let first = kron(&h.dot(&ph(-t1)), &identity(2));
        assert!(max_abs_diff(u.matrix(), &second.dot(&first)) < 1e-14);
    }

    #[test]
    fn pattern_validation_and_json() {
        assert!(matches!(
            MeasurementPattern::new(vec![PatternEntry::equatorial(0.1, vec![0])]),
            Err(FeedforwardError::ForwardDependency { qubit: 0, dep: 0 })
        ));
        assert!(matches!(
            MeasurementPattern::new(vec![PatternEntry::z(), PatternEntry { basis: Basis::Z, depends_on: vec![0] }]),
            Err(FeedforwardError::PauliDependency(1))
        ));
        let p = rotation_pattern(0.1, 0.2, 0.3);
        let text = p.to_json().unwrap();
        assert!(text.contains("\"equatorial\""));
        assert_eq!(MeasurementPattern::from_json(&text).unwrap(), p);
        let parsed = MeasurementPattern::from_json(
            r#"{"qubits":[{"basis":"z"},{"basis":"equatorial","theta":1.0,"depends_on":[]}]}"#,
        )
        .unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(p.forward_cones(), vec![vec![1, 3], vec![2], vec![3], vec![]]);
        let big = MeasurementPattern::new(vec![PatternEntry::z(); 11]).unwrap();
        assert!(matches!(build_intra_feedforward(&big), Err(FeedforwardError::TooLarge { .. })));
    }

    fn cluster_state() -> TwoPhotonState {
        simulate_cluster(&eight_qubit_cluster(), &EncodingSpec::with_default_grid(2, 4).unwrap()).unwrap()
    }

    #[test]
    fn chain_from_cluster_with_z_input() {
        let d = derive_chain_from_cluster(&cluster_state(), &eight_qubit_cluster(), InputPrep::Z).unwrap();
        assert!((d.probability_67 - 0.25).abs() < 1e-12);
        assert!((d.probability - 0.125).abs() < 1e-12);
        let direct = chain_state(plus(), 4).unwrap();
        let f = linalg::inner(&direct, &d.chain).norm_sqr();
        assert!((f - 1.0).abs() < 1e-12, "{f}");
    }

    #[test]
    fn chain_from_cluster_with_y_input() {
        let d = derive_chain_from_cluster(&cluster_state(), &eight_qubit_cluster(), InputPrep::Y).unwrap();
        let direct = chain_state(y_input(), 4).unwrap();
        let f = linalg::inner(&direct, &d.chain).norm_sqr();
        assert!((f - 1.0).abs() < 1e-12, "{f}");
    }

    #[test]
    fn chain_derivation_rejects_other_graphs() {
        let g = crate::graph::four_qudit_chain();
        assert!(derive_chain_from_cluster(&cluster_state(), &g, InputPrep::Z).is_err());
    }

    #[test]
    fn sweep_rows_and_csv() {
        let grid: Vec<f64> = (0..4).map(|k| k as f64 * PI / 2.0).collect();
        let rows = rotation_sweep(&grid, &grid, 0.0, y_input()).unwrap();
        assert_eq!(rows.len(), 16);
        for r in &rows {
            assert!((r.x - r.oracle_x).abs() < 1e-12);
            assert!((r.y - r.oracle_y).abs() < 1e-12);
            assert!((r.z - r.oracle_z).abs() < 1e-12);
            assert!(r.min_branch_fidelity > 1.0 - 1e-12);
        }
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("alpha,beta,gamma,x,y,z,oracle_x"));
        assert_eq!(text.lines().count(), 17);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        pub(crate) fn random_pattern() -> impl Strategy<Value = MeasurementPattern> {
            (1usize..=4)
                .prop_flat_map(|n| {
                    proptest::collection::vec((any::<bool>(), -PI..PI, any::<u8>()), n)
                })
                .prop_map(|spec| {
                    let entries = spec
                        .into_iter()
                        .enumerate()
                        .map(|(j, (is_z, theta, mask))| {
                            if is_z && j % 2 == 1 {
                                PatternEntry::z()
                            } else {
                                let deps = (0..j).filter(|i| mask >> i & 1 == 1).collect();
                                PatternEntry::equatorial(theta, deps)
                            }
                        })
                        .collect();
                    MeasurementPattern::new(entries).unwrap()
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn circuit_reproduces_oracle(p in random_pattern(), a in -PI..PI, b in -PI..PI) {
                let input = [C64::new(a.cos(), 0.0), C64::from_polar(a.sin(), b)];
                let chain = chain_state(input, p.len()).unwrap();
                let ff = build_intra_feedforward(&p).unwrap();
                prop_assert!(ff.layers.len() <= p.len());
                let u = ff.unitary();
                prop_assert!(linalg::unitarity_defect(u.matrix()) < 1e-10);
                let o = adaptive_oracle(&p, &chain).unwrap();
                let c = circuit_branches(&p, &u, &chain).unwrap();
                for (x, y) in o.branches.iter().zip(&c.branches) {
                    prop_assert!((x.probability - y.probability).abs() <= 1e-10);
                    if !x.zero_probability {
                        prop_assert!(qubit_fidelity(x.corrected, y.corrected) >= 1.0 - 1e-10);
                    }
                }
            }

            #[test]
            fn angles_never_move_beam_splitters(p in random_pattern(), shift in -PI..PI) {
                let moved = MeasurementPattern::new(
                    p.entries()
                        .iter()
                        .map(|e| match e.basis {
                            Basis::Z => e.clone(),
                            Basis::Equatorial { theta } => PatternEntry::equatorial(theta + shift, e.depends_on.clone()),
                        })
                        .collect(),
                )
                .unwrap();
                let a = build_intra_feedforward(&p).unwrap();
                let b = build_intra_feedforward(&moved).unwrap();
                prop_assert_eq!(a.beam_splitter_layout(), b.beam_splitter_layout());
                prop_assert_eq!(a.layers.iter().map(|l| l.qubit).collect::<Vec<_>>(), b.layers.iter().map(|l| l.qubit).collect::<Vec<_>>());
            }
        }
    }
}
