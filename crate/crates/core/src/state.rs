//! Exact two-photon pure states over the joint spatial-mode basis.
//!
//! A state is an `M x M` amplitude matrix: row index = mode of photon A,
//! column index = mode of photon B. Mode operations act on rows for photon A
//! (`U · amp`) and on columns for photon B (`amp · Uᵀ`).
//!
//! Mixed states are never formed. Noise studies mix expectation values or
//! probability tables linearly instead.

use crate::encoding::EncodingSpec;
use crate::linalg::{self, C64, ONE};
use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_UNITARY_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("expected dimension {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("matrix is not unitary: max |UU† - I| = {defect:.3e} exceeds {tol:.1e}")]
    NotUnitary { defect: f64, tol: f64 },
    #[error("mode map is not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("mean total count must be non-negative and finite, got {0}")]
    NegativeMean(f64),
    #[error("probability table contains a negative or non-finite entry")]
    BadProbabilities,
    #[error("count table has {found} cells, expected {expected}")]
    TableShape { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type StateResult<T> = Result<T, StateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Photon {
    A,
    B,
}

impl Photon {
    pub fn other(self) -> Photon {
        match self {
            Photon::A => Photon::B,
            Photon::B => Photon::A,
        }
    }
}

/// A unitary on the `M` modes of one photon.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeUnitary {
    matrix: Array2<C64>,
    tolerance: f64,
}

impl ModeUnitary {
    pub fn new(matrix: Array2<C64>) -> StateResult<Self> {
        Self::with_tolerance(matrix, DEFAULT_UNITARY_TOL)
    }

    pub fn with_tolerance(matrix: Array2<C64>, tolerance: f64) -> StateResult<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(StateError::Dimension { expected: r, found: c });
        }
        let defect = linalg::unitarity_defect(&matrix);
        if !(defect <= tolerance) {
            return Err(StateError::NotUnitary { defect, tol: tolerance });
        }
        Ok(Self { matrix, tolerance })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            matrix: linalg::identity(m),
            tolerance: DEFAULT_UNITARY_TOL,
        }
    }

    pub fn diagonal_phases(phases: &[f64]) -> Self {
        let diag = Array1::from_iter(phases.iter().map(|&p| C64::from_polar(1.0, p)));
        Self {
            matrix: Array2::from_diag(&diag),
            tolerance: DEFAULT_UNITARY_TOL,
        }
    }

    /// Unitary sending mode `m` to mode `perm[m]`.
    pub fn permutation(perm: &[usize]) -> StateResult<Self> {
        check_permutation(perm)?;
        let m = perm.len();
        let mut matrix = Array2::zeros((m, m));
        for (src, &dst) in perm.iter().enumerate() {
            matrix[[dst, src]] = ONE;
        }
        Ok(Self {
            matrix,
            tolerance: DEFAULT_UNITARY_TOL,
        })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn compose(&self, first: &ModeUnitary) -> ModeUnitary {
        ModeUnitary {
            matrix: self.matrix.dot(&first.matrix),
            tolerance: self.tolerance.max(first.tolerance),
        }
    }
}

pub(crate) fn check_permutation(perm: &[usize]) -> StateResult<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(StateError::NotPermutation(perm.len()));
        }
        seen[p] = true;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    amp: Array2<C64>,
    spec: EncodingSpec,
}

impl TwoPhotonState {
    pub fn new(amp: Array2<C64>, spec: EncodingSpec) -> StateResult<Self> {
        let m = spec.modes();
        if amp.dim() != (m, m) {
            return Err(StateError::Dimension {
                expected: m,
                found: amp.nrows().max(amp.ncols()),
            });
        }
        let norm = linalg::frobenius_norm_sqr(&amp).sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(Self { amp, spec })
    }

    /// Rescales a nonzero amplitude matrix to unit norm.
    pub fn normalized(amp: Array2<C64>, spec: EncodingSpec) -> StateResult<Self> {
        let norm = linalg::frobenius_norm_sqr(&amp).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(StateError::NotNormalized(norm));
        }
        Self::new(amp.mapv(|z| z / norm), spec)
    }

    pub fn amp(&self) -> &Array2<C64> {
        &self.amp
    }

    pub fn spec(&self) -> &EncodingSpec {
        &self.spec
    }

    pub fn modes(&self) -> usize {
        self.spec.modes()
    }

    pub fn norm(&self) -> f64 {
        linalg::frobenius_norm_sqr(&self.amp).sqrt()
    }

    pub fn apply_photon_unitary(&self, photon: Photon, u: &ModeUnitary) -> StateResult<Self> {
        self.check_dim(u.dim())?;
        let amp = match photon {
            Photon::A => u.matrix.dot(&self.amp),
            Photon::B => self.amp.dot(&u.matrix.t()),
        };
        Ok(Self {
            amp,
            spec: self.spec.clone(),
        })
    }

    pub fn apply_mode_phases(&self, photon: Photon, phases: &[f64]) -> StateResult<Self> {
        self.check_dim(phases.len())?;
        let mut amp = self.amp.clone();
        let axis = match photon {
            Photon::A => Axis(0),
            Photon::B => Axis(1),
        };
        for (mut lane, &phi) in amp.axis_iter_mut(axis).zip(phases) {
            let w = C64::from_polar(1.0, phi);
            lane.mapv_inplace(|z| z * w);
        }
        Ok(Self {
            amp,
            spec: self.spec.clone(),
        })
    }

    /// Moves the amplitude of mode `m` to mode `perm[m]`.
    pub fn apply_mode_permutation(&self, photon: Photon, perm: &[usize]) -> StateResult<Self> {
        self.check_dim(perm.len())?;
        check_permutation(perm)?;
        let mut amp = Array2::zeros(self.amp.dim());
        for (src, &dst) in perm.iter().enumerate() {
            match photon {
                Photon::A => amp.row_mut(dst).assign(&self.amp.row(src)),
                Photon::B => amp.column_mut(dst).assign(&self.amp.column(src)),
            }
        }
        Ok(Self {
            amp,
            spec: self.spec.clone(),
        })
    }

    pub fn coincidence_probs(&self) -> Array2<f64> {
        self.amp.mapv(|z| z.norm_sqr())
    }

    /// `|<target|self>|²` with the Frobenius inner product.
    pub fn fidelity(&self, target: &TwoPhotonState) -> StateResult<f64> {
        if self.amp.dim() != target.amp.dim() {
            return Err(StateError::Dimension {
                expected: target.modes(),
                found: self.modes(),
            });
        }
        Ok(linalg::inner(&target.amp, &self.amp).norm_sqr())
    }

    fn check_dim(&self, n: usize) -> StateResult<()> {
        if n != self.modes() {
            return Err(StateError::Dimension {
                expected: self.modes(),
                found: n,
            });
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> StateResult<()> {
        serde_json::to_writer_pretty(w, &StateRecord::from(self))?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(r: R) -> StateResult<Self> {
        let rec: StateRecord = serde_json::from_reader(r)?;
        rec.try_into()
    }
}

/// Maximally entangled pair state `Σ_i |i>_A |i>_B / √M`.
pub fn spdc_state(spec: &EncodingSpec) -> TwoPhotonState {
    let m = spec.modes();
    let a = 1.0 / (m as f64).sqrt();
    TwoPhotonState {
        amp: Array2::from_diag_elem(m, C64::new(a, 0.0)),
        spec: spec.clone(),
    }
}

pub fn state_fidelity(state: &TwoPhotonState, target: &TwoPhotonState) -> StateResult<f64> {
    state.fidelity(target)
}

/// On-disk form of a state: the encoding header plus row-major real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub spec: EncodingSpec,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&TwoPhotonState> for StateRecord {
    fn from(s: &TwoPhotonState) -> Self {
        StateRecord {
            spec: s.spec.clone(),
            re: s.amp.iter().map(|z| z.re).collect(),
            im: s.amp.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<StateRecord> for TwoPhotonState {
    type Error = StateError;

    fn try_from(r: StateRecord) -> StateResult<Self> {
        let m = r.spec.modes();
        if r.re.len() != m * m || r.im.len() != m * m {
            return Err(StateError::TableShape {
                expected: m * m,
                found: r.re.len().min(r.im.len()),
            });
        }
        let data = r.re.iter().zip(&r.im).map(|(&a, &b)| C64::new(a, b)).collect();
        let amp = Array2::from_shape_vec((m, m), data).expect("length checked");
        TwoPhotonState::new(amp, r.spec)
    }
}

/// Mode-resolved coincidence counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceTable {
    pub counts: Array2<u64>,
    pub total: u64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    row: usize,
    col: usize,
    count: u64,
}

impl CoincidenceTable {
    pub fn new(counts: Array2<u64>, seed: u64) -> Self {
        let total = counts.sum();
        Self { counts, total, seed }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> StateResult<()> {
        let mut out = csv::Writer::from_writer(w);
        for ((row, col), &count) in self.counts.indexed_iter() {
            out.serialize(CountRow { row, col, count })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, m: usize, seed: u64) -> StateResult<Self> {
        let mut counts = Array2::zeros((m, m));
        let mut n = 0;
        for rec in csv::Reader::from_reader(r).deserialize() {
            let CountRow { row, col, count } = rec?;
            if row >= m || col >= m {
                return Err(StateError::TableShape { expected: m * m, found: row.max(col) * m });
            }
            counts[[row, col]] = count;
            n += 1;
        }
        if n != m * m {
            return Err(StateError::TableShape { expected: m * m, found: n });
        }
        Ok(Self::new(counts, seed))
    }
}

/// Draws every cell independently from `Poisson(mean_total · p)`.
pub fn sample_counts(probs: &Array2<f64>, mean_total: f64, seed: u64) -> StateResult<CoincidenceTable> {
    if !(mean_total >= 0.0) || !mean_total.is_finite() {
        return Err(StateError::NegativeMean(mean_total));
    }
    if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(StateError::BadProbabilities);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = probs.mapv(|p| {
        let lambda = mean_total * p;
        if lambda > 0.0 {
            Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u64
        } else {
            0
        }
    });
    Ok(CoincidenceTable::new(counts, seed))
}

/// Diagonal of phases on the modes of one photon, as a full matrix.
pub fn phase_matrix(phases: &[f64]) -> Array2<C64> {
    ModeUnitary::diagonal_phases(phases).into_matrix()
}
