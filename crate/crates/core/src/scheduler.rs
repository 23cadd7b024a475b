//! Measurement rounds for adaptive measurement patterns spread over photons.
//!
//! `fc(q)` is the forward cone of qubit `q`: the qubits whose basis depends on
//! `q`'s outcome. Its transitive closure is the strict order `≺`. Qubits are
//! scheduled by repeatedly removing the `≺`-minimal ones.
//!
//! A photon is detected all at once, so all its qubits are measured together.
//! An allocation of qubits to photons is usable when no two photons need to be
//! measured before each other. This is checked pairwise on `≺`, and then the
//! induced photon order is checked for longer cycles. Three photons can form a
//! cycle that no single pair exposes.

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("qubit {qubit} out of range for {n} qubits")]
    Range { qubit: usize, n: usize },
    #[error("dependencies contain a cycle: {0:?}")]
    Cycle(Vec<usize>),
    #[error("allocation covers {found} qubits, dependency graph has {n}")]
    Allocation { found: usize, n: usize },
    #[error("photon {0} holds no qubit")]
    EmptyPhoton(usize),
    #[error("allocation is not measurable: {0}")]
    Invalid(Conflict),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type ScheduleResult<T> = Result<T, ScheduleError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DependencyRecord", into = "DependencyRecord")]
pub struct DependencyGraph {
    fc: Vec<Vec<usize>>,
    /// `closure[i][j]` iff `i ≺ j`.
    closure: Vec<BitVec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependencyRecord {
    pub qubits: usize,
    pub fc: Vec<Vec<usize>>,
}

impl TryFrom<DependencyRecord> for DependencyGraph {
    type Error = ScheduleError;

    fn try_from(r: DependencyRecord) -> ScheduleResult<Self> {
        let mut fc = r.fc;
        fc.resize(r.qubits, Vec::new());
        DependencyGraph::new(fc)
    }
}

impl From<DependencyGraph> for DependencyRecord {
    fn from(g: DependencyGraph) -> Self {
        DependencyRecord {
            qubits: g.fc.len(),
            fc: g.fc,
        }
    }
}

impl DependencyGraph {
    pub fn new(mut fc: Vec<Vec<usize>>) -> ScheduleResult<Self> {
        let n = fc.len();
        for cone in &mut fc {
            if let Some(&q) = cone.iter().find(|&&q| q >= n) {
                return Err(ScheduleError::Range { qubit: q, n });
            }
            cone.sort_unstable();
            cone.dedup();
        }
        let order = topological_order(&fc).map_err(ScheduleError::Cycle)?;
        let mut closure = vec![bitvec![0; n]; n];
        for &q in order.iter().rev() {
            let mut reach = bitvec![0; n];
            for &s in &fc[q] {
                reach.set(s, true);
                reach |= &closure[s];
            }
            closure[q] = reach;
        }
        Ok(Self { fc, closure })
    }

    pub fn from_pattern(p: &crate::feedforward::MeasurementPattern) -> ScheduleResult<Self> {
        Self::new(p.forward_cones())
    }

    pub fn len(&self) -> usize {
        self.fc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fc.is_empty()
    }

    pub fn cone(&self, q: usize) -> &[usize] {
        &self.fc[q]
    }

    /// `a ≺ b`.
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.closure[a][b]
    }

    pub fn to_json(&self) -> ScheduleResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> ScheduleResult<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Kahn order, or one cycle.
fn topological_order(adj: &[Vec<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let n = adj.len();
    let mut indeg = vec![0usize; n];
    for cone in adj {
        for &s in cone {
            indeg[s] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &s in &adj[v] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // walk backwards inside the leftover subgraph until a vertex repeats
    let left: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] > 0).collect();
    let start = *left.first().expect("leftover vertex");
    let mut path = vec![start];
    let mut pos = vec![usize::MAX; n];
    pos[start] = 0;
    loop {
        let v = *path.last().expect("nonempty");
        let next = adj[v].iter().copied().find(|s| left.contains(s)).expect("leftover successor");
        if pos[next] != usize::MAX {
            return Err(path[pos[next]..].to_vec());
        }
        pos[next] = path.len();
        path.push(next);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonAllocation {
    photon_of: Vec<usize>,
    photons: usize,
}

impl PhotonAllocation {
    /// `photon_of[q]` names the photon of qubit `q`. Photon ids must be `0..P`
    /// with every id used.
    pub fn new(photon_of: Vec<usize>) -> ScheduleResult<Self> {
        let photons = photon_of.iter().map(|&p| p + 1).max().unwrap_or(0);
        let used: BTreeSet<usize> = photon_of.iter().copied().collect();
        if let Some(p) = (0..photons).find(|p| !used.contains(p)) {
            return Err(ScheduleError::EmptyPhoton(p));
        }
        Ok(Self { photon_of, photons })
    }

    pub fn single_photon(n: usize) -> Self {
        Self {
            photon_of: vec![0; n],
            photons: usize::from(n > 0),
        }
    }

    pub fn one_per_qubit(n: usize) -> Self {
        Self {
            photon_of: (0..n).collect(),
            photons: n,
        }
    }

    pub fn photon(&self, q: usize) -> usize {
        self.photon_of[q]
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn qubits_of(&self, p: usize) -> Vec<usize> {
        (0..self.photon_of.len()).filter(|&q| self.photon_of[q] == p).collect()
    }

    /// Joins photon `b` into photon `a` and renumbers the rest.
    pub fn merged(&self, a: usize, b: usize) -> ScheduleResult<Self> {
        let (keep, gone) = (a.min(b), a.max(b));
        Self::new(
            self.photon_of
                .iter()
                .map(|&p| match p.cmp(&gone) {
                    std::cmp::Ordering::Equal => keep,
                    std::cmp::Ordering::Greater => p - 1,
                    std::cmp::Ordering::Less => p,
                })
                .collect(),
        )
    }

    fn check(&self, dep: &DependencyGraph) -> ScheduleResult<()> {
        if self.photon_of.len() != dep.len() {
            return Err(ScheduleError::Allocation {
                found: self.photon_of.len(),
                n: dep.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Qubit,
    Photon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub rounds: Vec<Vec<usize>>,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Round index of every element.
    pub fn round_of(&self, n: usize) -> Vec<usize> {
        let mut r = vec![usize::MAX; n];
        for (t, round) in self.rounds.iter().enumerate() {
            for &x in round {
                r[x] = t;
            }
        }
        r
    }

    pub fn to_json(&self) -> ScheduleResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Graphviz source with one rank per round and the given edges.
    pub fn to_dot(&self, edges: &[(usize, usize)]) -> String {
        let prefix = match self.kind {
            ScheduleKind::Qubit => "q",
            ScheduleKind::Photon => "p",
        };
        let mut s = String::from("digraph schedule {\n  rankdir=LR;\n");
        for (t, round) in self.rounds.iter().enumerate() {
            let _ = write!(s, "  subgraph round{t} {{ rank=same;");
            for x in round {
                let _ = write!(s, " {prefix}{x};");
            }
            s.push_str(" }\n");
        }
        for (a, b) in edges {
            let _ = writeln!(s, "  {prefix}{a} -> {prefix}{b};");
        }
        s.push_str("}\n");
        s
    }
}

/// Minimal-element peeling over an acyclic successor relation.
fn peel(n: usize, precedes: impl Fn(usize, usize) -> bool, kind: ScheduleKind) -> Schedule {
    let mut left: Vec<usize> = (0..n).collect();
    let mut rounds = Vec::new();
    while !left.is_empty() {
        let (now, later): (Vec<usize>, Vec<usize>) = left
            .iter()
            .partition(|&&q| !left.iter().any(|&p| p != q && precedes(p, q)));
        rounds.push(now);
        left = later;
    }
    Schedule { kind, rounds }
}

pub fn qubit_rounds(dep: &DependencyGraph) -> Schedule {
    peel(dep.len(), |a, b| dep.precedes(a, b), ScheduleKind::Qubit)
}

/// Photons other than `p` holding a qubit in the cone of one of `p`'s qubits.
pub fn photon_forward_cones(dep: &DependencyGraph, alloc: &PhotonAllocation) -> ScheduleResult<Vec<BTreeSet<usize>>> {
    alloc.check(dep)?;
    let mut cones = vec![BTreeSet::new(); alloc.photons()];
    for q in 0..dep.len() {
        let p = alloc.photon(q);
        for &s in dep.cone(q) {
            let ps = alloc.photon(s);
            if ps != p {
                cones[p].insert(ps);
            }
        }
    }
    Ok(cones)
}

/// Why an allocation cannot be scheduled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Conflict {
    /// `forward.0 ≺ forward.1` and `backward.0 ≺ backward.1`, where `forward.0`
    /// and `backward.1` share one photon and `forward.1`, `backward.0` share another.
    Pair {
        forward: (usize, usize),
        backward: (usize, usize),
    },
    /// Photons ordered in a cycle through three or more photons.
    PhotonCycle { photons: Vec<usize> },
}

impl Conflict {
    /// The conflicting qubits in scan order, shared qubits listed once.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Conflict::Pair { forward, backward } => {
                let mut v = vec![forward.0, forward.1];
                for q in [backward.0, backward.1] {
                    if !v.contains(&q) {
                        v.push(q);
                    }
                }
                v
            }
            Conflict::PhotonCycle { .. } => Vec::new(),
        }
    }
}

impl std::fmt::Display for Conflict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Conflict::Pair { forward, backward } => write!(
                f,
                "q{} ≺ q{} and q{} ≺ q{} order the same two photons both ways",
                forward.0, forward.1, backward.0, backward.1
            ),
            Conflict::PhotonCycle { photons } => write!(f, "photon order has the cycle {photons:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationVerdict {
    pub valid: bool,
    pub conflict: Option<Conflict>,
}

pub fn check_allocation(dep: &DependencyGraph, alloc: &PhotonAllocation) -> ScheduleResult<AllocationVerdict> {
    alloc.check(dep)?;
    let n = dep.len();
    for qi in 0..n {
        let pn = alloc.photon(qi);
        for qj in dep.closure[qi].iter_ones() {
            let pm = alloc.photon(qj);
            if pm == pn {
                continue;
            }
            for ql in (0..n).filter(|&q| alloc.photon(q) == pm) {
                if let Some(qk) = dep.closure[ql].iter_ones().find(|&q| alloc.photon(q) == pn) {
                    return Ok(AllocationVerdict {
                        valid: false,
                        conflict: Some(Conflict::Pair {
                            forward: (qi, qj),
                            backward: (ql, qk),
                        }),
                    });
                }
            }
        }
    }
    let cones = photon_forward_cones(dep, alloc)?;
    let adj: Vec<Vec<usize>> = cones.iter().map(|c| c.iter().copied().collect()).collect();
    if let Err(photons) = topological_order(&adj) {
        return Ok(AllocationVerdict {
            valid: false,
            conflict: Some(Conflict::PhotonCycle { photons }),
        });
    }
    Ok(AllocationVerdict {
        valid: true,
        conflict: None,
    })
}

pub fn photon_rounds(dep: &DependencyGraph, alloc: &PhotonAllocation) -> ScheduleResult<Schedule> {
    let verdict = check_allocation(dep, alloc)?;
    if let Some(c) = verdict.conflict {
        return Err(ScheduleError::Invalid(c));
    }
    let cones = photon_forward_cones(dep, alloc)?;
    let order = DependencyGraph::new(cones.iter().map(|c| c.iter().copied().collect()).collect())?;
    Ok(peel(alloc.photons(), |a, b| order.precedes(a, b), ScheduleKind::Photon))
}

/// Qubit-level schedule implied by a photon schedule.
pub fn flatten(photon_schedule: &Schedule, alloc: &PhotonAllocation) -> Schedule {
    Schedule {
        kind: ScheduleKind::Qubit,
        rounds: photon_schedule
            .rounds
            .iter()
            .map(|r| {
                let mut qs: Vec<usize> = r.iter().flat_map(|&p| alloc.qubits_of(p)).collect();
                qs.sort_unstable();
                qs
            })
            .collect(),
    }
}

/// Direct dependency edges `(q, s)` with `s ∈ fc(q)`.
pub fn edges(dep: &DependencyGraph) -> Vec<(usize, usize)> {
    (0..dep.len())
        .flat_map(|q| dep.cone(q).iter().map(move |&s| (q, s)))
        .collect()
}

/// Dependencies of the single-qubit rotation chain: four measured qubits
/// adapted as `θ2 ← m1`, `θ3 ← m2`, `θ4 ← m1·m3`. The fifth (output) qubit's
/// next measurement is adapted on its `X` byproduct, the parity `s2 + s4`.
pub fn rotation_dependencies() -> DependencyGraph {
    DependencyGraph::new(vec![vec![1, 3], vec![2, 4], vec![3], vec![4], vec![]]).expect("acyclic")
}
