//! Multi-plane light converters: alternating phase masks and free-space
//! propagation acting on one photon's spatial modes.
//!
//! Distances are unfolded. Each bounce between the phase plate and the mirror
//! traverses the gap twice, so masks sit 87 mm apart and the last mask is
//! followed by 43.5 mm to the output plane.

mod field;
mod gs;
mod io;
mod wfm;

pub use field::{orthonormalize, propagate, spot_modes, OpticalField, Propagation, Propagator, Transfer};
pub use gs::{gauge_rows, gs_reconstruct, synthesize_probes, GsOptions, GsReconstruction, Probe};
pub use io::{read_masks, write_mask_preview, write_masks, MaskHeader, MASK_FORMAT, MASK_VERSION};
pub use wfm::{
    compile_measurement_stack, kron_factors, stack_matrix, target_fields, wavefront_match, wavefront_match_with,
    MeasurementStack, PlaneStack, WfmOptions, WfmResult, DEFAULT_ITERATIONS,
};

use crate::linalg::C64;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MplcError {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape { left: (usize, usize), right: (usize, usize) },
    #[error("empty mode list")]
    Empty,
    #[error("input and target lists differ in length ({0} vs {1})")]
    ModeCount(usize, usize),
    #[error("field contains non-finite values")]
    NotFinite,
    #[error("target is not a tensor product of {n} factors of size {d}")]
    NotSeparable { d: usize, n: usize },
    #[error("domain: {0}")]
    Domain(String),
    #[error("mask file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type MplcResult<T> = Result<T, MplcError>;

/// Sampling grid, optical constants and plane spacing of a converter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub rows: usize,
    pub cols: usize,
    pub pitch_um: f64,
    pub wavelength_nm: f64,
    pub plane_distance_mm: f64,
    pub final_distance_mm: f64,
    /// Fraction of the Nyquist frequency passed by each propagation.
    pub angle_cap: f64,
    pub spot_pitch_um: f64,
    pub spot_waist_um: f64,
}

impl Geometry {
    /// 64 × 160 grid, scaled down from the 140 × 360 masks.
    pub fn desk() -> Self {
        Self {
            rows: 64,
            cols: 160,
            pitch_um: 12.5,
            wavelength_nm: 810.0,
            plane_distance_mm: 87.0,
            final_distance_mm: 43.5,
            angle_cap: 0.15,
            spot_pitch_um: 300.0,
            spot_waist_um: 100.0,
        }
    }

    pub fn full_size() -> Self {
        Self {
            rows: 140,
            cols: 360,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> MplcResult<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(MplcError::Geometry("grid must be nonempty".into()));
        }
        if !(self.pitch_um > 0.0 && self.wavelength_nm > 0.0) {
            return Err(MplcError::Geometry("pitch and wavelength must be positive".into()));
        }
        if !(self.plane_distance_mm >= 0.0 && self.final_distance_mm >= 0.0) {
            return Err(MplcError::Geometry("distances must be non-negative".into()));
        }
        if !(self.angle_cap > 0.0 && self.angle_cap <= 1.0) {
            return Err(MplcError::Geometry(format!("angle cap {} outside (0, 1]", self.angle_cap)));
        }
        Ok(())
    }

    /// Pixel centre in µm relative to the grid centre.
    pub fn pixel_um(&self, r: usize, c: usize) -> (f64, f64) {
        (
            (c as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch_um,
            (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch_um,
        )
    }
}

/// Realised transformation, outputs × inputs. Not assumed unitary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub matrix: Array2<C64>,
    /// Power of each input coupled into the output mode set.
    pub efficiency: Vec<f64>,
}

impl TransferMatrix {
    pub fn new(matrix: Array2<C64>) -> Self {
        let efficiency = matrix.columns().into_iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum()).collect();
        Self { matrix, efficiency }
    }

    pub fn mean_efficiency(&self) -> f64 {
        self.efficiency.iter().sum::<f64>() / self.efficiency.len().max(1) as f64
    }
}

/// `|Tr(A U†)| / √(Tr(A A†) Tr(U U†))`.
pub fn frobenius_fidelity(a: &Array2<C64>, u: &Array2<C64>) -> MplcResult<f64> {
    if a.dim() != u.dim() {
        return Err(MplcError::Shape {
            left: a.dim(),
            right: u.dim(),
        });
    }
    let tr = crate::linalg::inner(u, a);
    let na = crate::linalg::frobenius_norm_sqr(a);
    let nu = crate::linalg::frobenius_norm_sqr(u);
    if na == 0.0 || nu == 0.0 {
        return Ok(0.0);
    }
    Ok((tr.norm() / (na * nu).sqrt()).min(1.0))
}

/// Coincidence probability of a two-photon amplitude after converters on
/// both photons: `Σ |T_A ψ T_Bᵀ|²`.
pub fn coincidence_transmission(amp: &Array2<C64>, ta: &TransferMatrix, tb: &TransferMatrix) -> MplcResult<f64> {
    let (m, n) = amp.dim();
    if ta.matrix.ncols() != m || tb.matrix.ncols() != n {
        return Err(MplcError::Shape {
            left: (ta.matrix.ncols(), tb.matrix.ncols()),
            right: (m, n),
        });
    }
    let out = ta.matrix.dot(amp).dot(&tb.matrix.t());
    Ok(crate::linalg::frobenius_norm_sqr(&out))
}
