//! Weighted qudit graph states shared between two photons.
//!
//! A graph is realizable on a photon pair when every vertex has exactly one
//! edge to the other photon, with weight 1. Those edges come for free from the
//! down-converted pair. The remaining edges join vertices on the same photon
//! and are compiled into mode operations on that photon.
//!
//! The pair state `Σ|jj>/√d` equals `CZ|++>` up to one inverse DFT `H†` on one
//! of the two vertices. Vertices carrying that `H†` are *framed*. Exactly one
//! vertex of every pair is framed, and the simulated state is `F|G>`, where
//! `F` is `H†` on every framed vertex. Under this frame an intra-photon edge
//! compiles as follows.
//!
//! * Neither end framed: the phase `2π·w·q_u·q_v/d` on every mode.
//! * One end framed: the relabeling `q_t → q_t + w·q_c mod d`, where `t` is the
//!   framed end and `c` the other one.
//! * Both ends framed: not a phase or a relabeling. This is rejected.
//!
//! Stabilizers are reported for the physical state `F|G>`, i.e. conjugated by `F`.
//!
//! Vertex indices are 0-based everywhere in this crate. Labels produced by
//! [`StabilizerTerm::label`] are 1-based.

use crate::encoding::{digits_of, index_of, EncodingSpec};
use crate::linalg::{omega_pow, C64};
use crate::state::{spdc_state, Photon, StateError, TwoPhotonState};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex {vertex} out of range for a graph with {n} vertices")]
    Vertex { vertex: usize, n: usize },
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({u}, {v}) has weight {w}, outside 1..{d}")]
    Weight { u: usize, v: usize, w: usize, d: usize },
    #[error("edge ({0}, {1}) listed twice")]
    DuplicateEdge(usize, usize),
    #[error("qudit dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("allocation has {found} entries for {n} vertices")]
    Allocation { found: usize, n: usize },
    #[error("graph cannot be split over two photons: {0}")]
    Unrealizable(Realizability),
    #[error("graph has d = {graph_d} and {graph_n} vertices, encoding has d = {d} and N = {n}")]
    SpecMismatch {
        graph_d: usize,
        graph_n: usize,
        d: usize,
        n: usize,
    },
    #[error("pair ({0}, {1}) must have exactly one framed vertex")]
    PairFrame(usize, usize),
    #[error("edge ({0}, {1}) joins two framed vertices and has no phase or relabeling form")]
    FrameConflict(usize, usize),
    #[error("no frame assignment avoids an edge between two framed vertices")]
    NoFrame,
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type GraphResult<T> = Result<T, GraphError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    #[serde(default = "unit_weight")]
    pub w: usize,
}

fn unit_weight() -> usize {
    1
}

impl Edge {
    pub fn new(u: usize, v: usize, w: usize) -> Self {
        Edge { u: u.min(v), v: u.max(v), w }
    }

    pub fn touches(&self, x: usize) -> bool {
        self.u == x || self.v == x
    }

    pub fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct GraphState {
    d: usize,
    n_vertices: usize,
    edges: Vec<Edge>,
    allocation: Vec<Photon>,
    frame: Vec<bool>,
}

/// JSON form of a graph. `frame` lists framed vertices; when absent a frame is
/// chosen by [`GraphState::with_auto_frame`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub d: usize,
    pub vertices: usize,
    pub edges: Vec<Edge>,
    pub allocation: Vec<Photon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<Vec<usize>>,
}

impl TryFrom<GraphRecord> for GraphState {
    type Error = GraphError;

    fn try_from(r: GraphRecord) -> GraphResult<Self> {
        let g = GraphState::new(r.d, r.vertices, r.edges, r.allocation)?;
        match r.frame {
            Some(f) => g.with_frame(&f),
            None => g.with_auto_frame(),
        }
    }
}

impl From<GraphState> for GraphRecord {
    fn from(g: GraphState) -> Self {
        GraphRecord {
            d: g.d,
            vertices: g.n_vertices,
            frame: Some(g.framed_vertices()),
            edges: g.edges,
            allocation: g.allocation,
        }
    }
}

impl GraphState {
    /// Builds an unframed graph. Edges are normalized to `u < v` and sorted.
    pub fn new(d: usize, n_vertices: usize, edges: Vec<Edge>, allocation: Vec<Photon>) -> GraphResult<Self> {
        if d < 2 {
            return Err(GraphError::Dimension(d));
        }
        if allocation.len() != n_vertices {
            return Err(GraphError::Allocation {
                found: allocation.len(),
                n: n_vertices,
            });
        }
        let mut seen = BTreeSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for e in edges {
            for x in [e.u, e.v] {
                if x >= n_vertices {
                    return Err(GraphError::Vertex { vertex: x, n: n_vertices });
                }
            }
            if e.u == e.v {
                return Err(GraphError::SelfLoop(e.u));
            }
            if e.w == 0 || e.w >= d {
                return Err(GraphError::Weight { u: e.u, v: e.v, w: e.w, d });
            }
            let e = Edge::new(e.u, e.v, e.w);
            if !seen.insert((e.u, e.v)) {
                return Err(GraphError::DuplicateEdge(e.u, e.v));
            }
            norm.push(e);
        }
        norm.sort();
        Ok(Self {
            d,
            n_vertices,
            edges: norm,
            allocation,
            frame: vec![false; n_vertices],
        })
    }

    pub fn with_frame(mut self, framed: &[usize]) -> GraphResult<Self> {
        self.frame = vec![false; self.n_vertices];
        for &v in framed {
            if v >= self.n_vertices {
                return Err(GraphError::Vertex { vertex: v, n: self.n_vertices });
            }
            self.frame[v] = true;
        }
        Ok(self)
    }

    /// Chooses one framed vertex per pair so that no intra-photon edge joins two
    /// framed vertices, using as few relabeling edges as possible. Ties go to the
    /// lexicographically smallest framed set. Graphs that are not realizable keep
    /// an empty frame.
    pub fn with_auto_frame(self) -> GraphResult<Self> {
        let cert = check_two_photon_realizable(&self);
        if !cert.realizable {
            return Ok(self);
        }
        let framed = self.auto_frame(&cert.matching)?;
        self.with_frame(&framed)
    }

    fn auto_frame(&self, matching: &[(usize, usize)]) -> GraphResult<Vec<usize>> {
        let pairs = matching.len();
        if pairs > 20 {
            return Err(GraphError::Parse("automatic framing supports at most 20 pairs".into()));
        }
        let intra: Vec<Edge> = self.edges.iter().copied().filter(|e| !self.is_cross(e)).collect();
        let mut best: Option<(usize, Vec<usize>)> = None;
        for mask in 0u32..(1 << pairs) {
            let mut framed: Vec<usize> = matching
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| if mask >> k & 1 == 1 { a } else { b })
                .collect();
            framed.sort_unstable();
            let is_f = |x: usize| framed.binary_search(&x).is_ok();
            if intra.iter().any(|e| is_f(e.u) && is_f(e.v)) {
                continue;
            }
            let relabels = intra.iter().filter(|e| is_f(e.u) != is_f(e.v)).count();
            let better = match &best {
                None => true,
                Some((r, f)) => relabels < *r || (relabels == *r && framed < *f),
            };
            if better {
                best = Some((relabels, framed));
            }
        }
        best.map(|(_, f)| f).ok_or(GraphError::NoFrame)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn allocation(&self) -> &[Photon] {
        &self.allocation
    }

    pub fn photon_of(&self, v: usize) -> Photon {
        self.allocation[v]
    }

    pub fn is_framed(&self, v: usize) -> bool {
        self.frame[v]
    }

    pub fn framed_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices).filter(|&v| self.frame[v]).collect()
    }

    pub fn is_cross(&self, e: &Edge) -> bool {
        self.allocation[e.u] != self.allocation[e.v]
    }

    /// Vertices of one photon, ascending.
    pub fn vertices_on(&self, p: Photon) -> Vec<usize> {
        (0..self.n_vertices).filter(|&v| self.allocation[v] == p).collect()
    }

    /// `(neighbor, weight)` pairs of `v`.
    pub fn neighbors(&self, v: usize) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter(|e| e.touches(v))
            .map(|e| (e.other(v), e.w))
            .collect()
    }

    /// Renames vertices: vertex `v` becomes `map[v]`.
    pub fn relabeled(&self, map: &[usize]) -> GraphResult<Self> {
        let edges = self.edges.iter().map(|e| Edge::new(map[e.u], map[e.v], e.w)).collect();
        let mut allocation = self.allocation.clone();
        let mut framed = Vec::new();
        for v in 0..self.n_vertices {
            allocation[map[v]] = self.allocation[v];
            if self.frame[v] {
                framed.push(map[v]);
            }
        }
        GraphState::new(self.d, self.n_vertices, edges, allocation)?.with_frame(&framed)
    }

    pub fn to_json(&self) -> GraphResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> GraphResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parses the plain edge-list format:
    ///
    /// ```text
    /// d 2
    /// A 0 1 2 3
    /// B 4 5 6 7
    /// frame 0 3 5 6
    /// 0 1
    /// 0 7
    /// 1 2 1
    /// ```
    ///
    /// Lines `A`/`B` list each photon's vertices, `frame` is optional, and any
    /// other line is `u v [w]`. `#` starts a comment.
    pub fn from_edge_list(text: &str) -> GraphResult<Self> {
        let mut d = None;
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut frame = None;
        let mut edges = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let head = it.next().unwrap_or_default();
            let nums = |it: std::str::SplitWhitespace| -> GraphResult<Vec<usize>> {
                it.map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| GraphError::Parse(format!("line {}: bad integer {t:?}", ln + 1)))
                })
                .collect()
            };
            match head {
                "d" => d = nums(it)?.first().copied(),
                "A" => a.extend(nums(it)?),
                "B" => b.extend(nums(it)?),
                "frame" => frame = Some(nums(it)?),
                _ => {
                    let mut all = vec![head.parse::<usize>().map_err(|_| {
                        GraphError::Parse(format!("line {}: unknown directive {head:?}", ln + 1))
                    })?];
                    all.extend(nums(it)?);
                    match all[..] {
                        [u, v] => edges.push(Edge::new(u, v, 1)),
                        [u, v, w] => edges.push(Edge::new(u, v, w)),
                        _ => return Err(GraphError::Parse(format!("line {}: expected `u v [w]`", ln + 1))),
                    }
                }
            }
        }
        let d = d.ok_or_else(|| GraphError::Parse("missing `d` line".into()))?;
        let n = a.len() + b.len();
        let mut allocation = vec![None; n];
        for (list, p) in [(&a, Photon::A), (&b, Photon::B)] {
            for &v in list {
                if v >= n || allocation[v].is_some() {
                    return Err(GraphError::Parse(format!("vertex {v} listed twice or out of range")));
                }
                allocation[v] = Some(p);
            }
        }
        let allocation = allocation.into_iter().map(|p| p.expect("all slots filled")).collect();
        GraphRecord {
            d,
            vertices: n,
            edges,
            allocation,
            frame,
        }
        .try_into()
    }
}

/// Outcome of the two-photon test. When realizable, `matching` holds the
/// `(A vertex, B vertex)` pairs ordered by A vertex. Otherwise `violations`
/// lists offending edges and `reason` explains the failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realizability {
    pub realizable: bool,
    pub matching: Vec<(usize, usize)>,
    pub violations: Vec<Edge>,
    pub reason: String,
}

impl std::fmt::Display for Realizability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.reason)?;
        for e in &self.violations {
            write!(f, " ({},{},w={})", e.u, e.v, e.w)?;
        }
        Ok(())
    }
}

pub fn check_two_photon_realizable(g: &GraphState) -> Realizability {
    let fail = |reason: String, violations: Vec<Edge>| Realizability {
        realizable: false,
        matching: Vec::new(),
        violations,
        reason,
    };
    let na = g.vertices_on(Photon::A).len();
    let nb = g.n_vertices - na;
    if na != nb {
        return fail(format!("photons hold {na} and {nb} vertices"), Vec::new());
    }
    let cross: Vec<Edge> = g.edges.iter().copied().filter(|e| g.is_cross(e)).collect();
    let heavy: Vec<Edge> = cross.iter().copied().filter(|e| e.w != 1).collect();
    if !heavy.is_empty() {
        return fail("cross-photon edges must have weight 1".into(), heavy);
    }
    let mut degree = vec![0usize; g.n_vertices];
    for e in &cross {
        degree[e.u] += 1;
        degree[e.v] += 1;
    }
    let bad: BTreeSet<usize> = (0..g.n_vertices).filter(|&v| degree[v] != 1).collect();
    if !bad.is_empty() {
        let violations = cross
            .iter()
            .copied()
            .filter(|e| bad.contains(&e.u) || bad.contains(&e.v))
            .collect();
        let list: Vec<String> = bad.iter().map(|v| v.to_string()).collect();
        return fail(
            format!("vertices without exactly one cross-photon edge: {}", list.join(", ")),
            violations,
        );
    }
    let mut matching: Vec<(usize, usize)> = cross
        .iter()
        .map(|e| match g.allocation[e.u] {
            Photon::A => (e.u, e.v),
            Photon::B => (e.v, e.u),
        })
        .collect();
    matching.sort_unstable();
    Realizability {
        realizable: true,
        matching,
        violations: Vec::new(),
        reason: "cross-photon edges form a unit-weight perfect matching".into(),
    }
}

/// Position of every vertex in the mode labels.
///
/// Photon A's digits are its vertices in ascending order. Digit `k` of photon
/// B is the pair partner of photon A's digit `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub d: usize,
    pub digits_a: Vec<usize>,
    pub digits_b: Vec<usize>,
}

impl Layout {
    pub fn n(&self) -> usize {
        self.digits_a.len()
    }

    pub fn digits(&self, p: Photon) -> &[usize] {
        match p {
            Photon::A => &self.digits_a,
            Photon::B => &self.digits_b,
        }
    }

    /// `(photon, digit)` of a vertex.
    pub fn locate(&self, v: usize) -> (Photon, usize) {
        if let Some(k) = self.digits_a.iter().position(|&x| x == v) {
            (Photon::A, k)
        } else {
            let k = self.digits_b.iter().position(|&x| x == v).expect("vertex in layout");
            (Photon::B, k)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameGate {
    /// Inverse DFT left over from the pair source.
    InverseDft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameOp {
    pub vertex: usize,
    pub gate: FrameGate,
}

/// Relabeling `q_target → q_target + weight·q_control mod d` on one photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relabel {
    pub target: usize,
    pub control: usize,
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledCircuit {
    pub layout: Layout,
    pub pairing: Vec<(usize, usize)>,
    pub phases_a: Vec<f64>,
    pub phases_b: Vec<f64>,
    pub perm_a: Vec<usize>,
    pub perm_b: Vec<usize>,
    pub relabels_a: Vec<Relabel>,
    pub relabels_b: Vec<Relabel>,
    pub frame_ops: Vec<FrameOp>,
}

impl CompiledCircuit {
    pub fn phases(&self, p: Photon) -> &[f64] {
        match p {
            Photon::A => &self.phases_a,
            Photon::B => &self.phases_b,
        }
    }

    pub fn perm(&self, p: Photon) -> &[usize] {
        match p {
            Photon::A => &self.perm_a,
            Photon::B => &self.perm_b,
        }
    }

    pub fn to_json(&self) -> GraphResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn layout(g: &GraphState) -> GraphResult<Layout> {
    let cert = check_two_photon_realizable(g);
    if !cert.realizable {
        return Err(GraphError::Unrealizable(cert));
    }
    Ok(Layout {
        d: g.d,
        digits_a: cert.matching.iter().map(|p| p.0).collect(),
        digits_b: cert.matching.iter().map(|p| p.1).collect(),
    })
}

pub fn compile_graph(g: &GraphState, spec: &EncodingSpec) -> GraphResult<CompiledCircuit> {
    let cert = check_two_photon_realizable(g);
    if !cert.realizable {
        return Err(GraphError::Unrealizable(cert));
    }
    let n = cert.matching.len();
    if g.d != spec.d() || n != spec.qudits_per_photon() {
        return Err(GraphError::SpecMismatch {
            graph_d: g.d,
            graph_n: g.n_vertices,
            d: spec.d(),
            n: spec.qudits_per_photon(),
        });
    }
    for &(a, b) in &cert.matching {
        if g.frame[a] == g.frame[b] {
            return Err(GraphError::PairFrame(a, b));
        }
    }
    let lay = layout(g)?;
    let d = g.d;
    let m = spec.modes();
    let mut out = CompiledCircuit {
        pairing: cert.matching.clone(),
        phases_a: vec![0.0; m],
        phases_b: vec![0.0; m],
        perm_a: (0..m).collect(),
        perm_b: (0..m).collect(),
        relabels_a: Vec::new(),
        relabels_b: Vec::new(),
        frame_ops: g
            .framed_vertices()
            .into_iter()
            .map(|vertex| FrameOp {
                vertex,
                gate: FrameGate::InverseDft,
            })
            .collect(),
        layout: lay.clone(),
    };
    for photon in [Photon::A, Photon::B] {
        let digits = lay.digits(photon);
        let pos = |v: usize| digits.iter().position(|&x| x == v).expect("vertex on photon");
        let mut phase_terms: Vec<(usize, usize, usize)> = Vec::new();
        let mut relabels = Vec::new();
        for e in g.edges.iter().filter(|e| !g.is_cross(e) && g.allocation[e.u] == photon) {
            match (g.frame[e.u], g.frame[e.v]) {
                (false, false) => phase_terms.push((pos(e.u), pos(e.v), e.w)),
                (true, true) => return Err(GraphError::FrameConflict(e.u, e.v)),
                (fu, _) => {
                    let (t, c) = if fu { (e.u, e.v) } else { (e.v, e.u) };
                    relabels.push(Relabel {
                        target: pos(t),
                        control: pos(c),
                        weight: e.w,
                    });
                }
            }
        }
        let mut phases = vec![0.0; m];
        let mut perm = vec![0; m];
        for mode in 0..m {
            let mut q = digits_of(mode, d, n);
            let e: usize = phase_terms.iter().map(|&(ku, kv, w)| w * q[ku] * q[kv]).sum();
            phases[mode] = 2.0 * PI * (e % d) as f64 / d as f64;
            // targets are framed and controls are not, so the order is irrelevant
            for r in &relabels {
                q[r.target] = (q[r.target] + r.weight * q[r.control]) % d;
            }
            perm[mode] = index_of(&q, d);
        }
        match photon {
            Photon::A => {
                out.phases_a = phases;
                out.perm_a = perm;
                out.relabels_a = relabels;
            }
            Photon::B => {
                out.phases_b = phases;
                out.perm_b = perm;
                out.relabels_b = relabels;
            }
        }
    }
    Ok(out)
}

/// Runs a compiled circuit on the pair state.
pub fn run_compiled(c: &CompiledCircuit, spec: &EncodingSpec) -> GraphResult<TwoPhotonState> {
    let mut s = spdc_state(spec);
    for p in [Photon::A, Photon::B] {
        s = s.apply_mode_phases(p, c.phases(p))?;
        s = s.apply_mode_permutation(p, c.perm(p))?;
    }
    Ok(s)
}

pub fn simulate_cluster(g: &GraphState, spec: &EncodingSpec) -> GraphResult<TwoPhotonState> {
    run_compiled(&compile_graph(g, spec)?, spec)
}

/// `ω^phase · Π_v X_v^{x_v} Z_v^{z_v}`, with `X` to the left of `Z` on each vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StabilizerTerm {
    pub d: usize,
    pub x: Vec<usize>,
    pub z: Vec<usize>,
    pub phase: usize,
}

impl StabilizerTerm {
    pub fn identity(d: usize, n: usize) -> Self {
        Self {
            d,
            x: vec![0; n],
            z: vec![0; n],
            phase: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn is_identity_string(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&p| p == 0)
    }

    pub fn phase_value(&self) -> C64 {
        omega_pow(self.d, self.phase as i64)
    }

    /// Operator product `self · rhs`.
    pub fn mul(&self, rhs: &StabilizerTerm) -> StabilizerTerm {
        let d = self.d;
        let swap: usize = self.z.iter().zip(&rhs.x).map(|(z, x)| z * x).sum();
        StabilizerTerm {
            d,
            x: self.x.iter().zip(&rhs.x).map(|(a, b)| (a + b) % d).collect(),
            z: self.z.iter().zip(&rhs.z).map(|(a, b)| (a + b) % d).collect(),
            phase: (self.phase + rhs.phase + swap) % d,
        }
    }

    pub fn pow(&self, p: usize) -> StabilizerTerm {
        (0..p).fold(StabilizerTerm::identity(self.d, self.n()), |acc, _| acc.mul(self))
    }

    pub fn adjoint(&self) -> StabilizerTerm {
        let d = self.d;
        let xz: usize = self.x.iter().zip(&self.z).map(|(a, b)| a * b).sum();
        StabilizerTerm {
            d,
            x: self.x.iter().map(|&a| (d - a) % d).collect(),
            z: self.z.iter().map(|&b| (d - b) % d).collect(),
            phase: (xz + d * d - self.phase % d) % d,
        }
    }

    /// Same operator string, phase dropped.
    pub fn string(&self) -> (Vec<usize>, Vec<usize>) {
        (self.x.clone(), self.z.clone())
    }

    /// Conjugation by `H†` on vertex `v`: `X^a Z^b → ω^{-ab} X^b Z^{-a}`.
    pub fn conjugate_inverse_dft(&mut self, v: usize) {
        let d = self.d;
        let (a, b) = (self.x[v], self.z[v]);
        self.x[v] = b;
        self.z[v] = (d - a) % d;
        self.phase = (self.phase + d * d - (a * b) % d) % d;
    }

    /// Human-readable operator string with 1-based vertex labels, e.g. `X_1 Z_2^3`.
    pub fn label(&self) -> String {
        let mut s = String::new();
        for v in 0..self.n() {
            for (op, p) in [("X", self.x[v]), ("Z", self.z[v])] {
                if p == 0 {
                    continue;
                }
                if !s.is_empty() {
                    s.push(' ');
                }
                let _ = write!(s, "{op}_{}", v + 1);
                if p > 1 {
                    let _ = write!(s, "^{p}");
                }
            }
        }
        if s.is_empty() {
            s.push('I');
        }
        s
    }

    /// Exact `<ψ|T|ψ>`.
    pub fn expectation(&self, state: &TwoPhotonState, layout: &Layout) -> C64 {
        let m = state.modes();
        let (ma, za) = self.photon_action(Photon::A, layout, m);
        let (mb, zb) = self.photon_action(Photon::B, layout, m);
        let d = self.d;
        let roots: Vec<C64> = (0..d).map(|k| omega_pow(d, k as i64)).collect();
        let amp = state.amp();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                let a = amp[[i, j]];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                acc += amp[[ma[i], mb[j]]].conj() * roots[(za[i] + zb[j]) % d] * a;
            }
        }
        acc * self.phase_value()
    }

    /// Mode map and clock exponent of this term restricted to one photon.
    pub(crate) fn photon_action(&self, p: Photon, layout: &Layout, m: usize) -> (Vec<usize>, Vec<usize>) {
        let d = self.d;
        let digits = layout.digits(p);
        let n = digits.len();
        let mut map = vec![0; m];
        let mut zexp = vec![0; m];
        for mode in 0..m {
            let mut q = digits_of(mode, d, n);
            let mut e = 0;
            for (k, &v) in digits.iter().enumerate() {
                e += self.z[v] * q[k];
                q[k] = (q[k] + self.x[v]) % d;
            }
            map[mode] = index_of(&q, d);
            zexp[mode] = e % d;
        }
        (map, zexp)
    }
}

/// `S_k = X_k Π_j Z_j^{w_kj}` for every vertex, conjugated by the frame.
pub fn stabilizers(g: &GraphState) -> Vec<StabilizerTerm> {
    let n = g.n_vertices;
    (0..n)
        .map(|k| {
            let mut t = StabilizerTerm::identity(g.d, n);
            t.x[k] = 1;
            for (j, w) in g.neighbors(k) {
                t.z[j] = (t.z[j] + w) % g.d;
            }
            for v in g.framed_vertices() {
                t.conjugate_inverse_dft(v);
            }
            t
        })
        .collect()
}

/// The eight-qubit graph: chain 0-1-2-3 on photon A, each vertex paired with
/// `7 - v` on photon B, framed on {0, 3, 5, 6}.
pub fn eight_qubit_cluster() -> GraphState {
    let mut edges = vec![Edge::new(0, 1, 1), Edge::new(1, 2, 1), Edge::new(2, 3, 1)];
    edges.extend((0..4).map(|v| Edge::new(v, 7 - v, 1)));
    let allocation = (0..8).map(|v| if v < 4 { Photon::A } else { Photon::B }).collect();
    GraphState::new(2, 8, edges, allocation)
        .and_then(|g| g.with_frame(&[0, 3, 5, 6]))
        .expect("valid graph")
}

/// The d = 5 chain 0-1-2-3 with vertices 1, 2 on photon A and 0, 3 on photon B,
/// framed on {0, 3}.
pub fn four_qudit_chain() -> GraphState {
    let edges = vec![Edge::new(0, 1, 1), Edge::new(1, 2, 1), Edge::new(2, 3, 1)];
    let allocation = vec![Photon::B, Photon::A, Photon::A, Photon::B];
    GraphState::new(5, 4, edges, allocation)
        .and_then(|g| g.with_frame(&[0, 3]))
        .expect("valid graph")
}
