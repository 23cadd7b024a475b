//! Resource-rate and loss figures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("domain: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eqrr {
    pub eqrr_hz: f64,
    /// `log₂` of the Hilbert-space dimension.
    pub equivalent_qubits: f64,
}

/// Effective quantum resource rate, `dim(H) · rate`.
pub fn eqrr(hilbert_dim: u64, rate_hz: f64) -> Result<Eqrr, MetricsError> {
    if !(rate_hz >= 0.0) || !rate_hz.is_finite() {
        return Err(MetricsError::Domain(format!("rate {rate_hz} must be finite and non-negative")));
    }
    if hilbert_dim == 0 {
        return Err(MetricsError::Domain("Hilbert-space dimension must be positive".into()));
    }
    Ok(Eqrr {
        eqrr_hz: hilbert_dim as f64 * rate_hz,
        equivalent_qubits: (hilbert_dim as f64).log2(),
    })
}

/// Per-photon loss from the coincidence rates before and after: `10·log₁₀ √(out/in)`.
pub fn loss_db(rate_in_hz: f64, rate_out_hz: f64) -> Result<f64, MetricsError> {
    if !(rate_in_hz > 0.0) || !rate_in_hz.is_finite() {
        return Err(MetricsError::Domain(format!("input rate {rate_in_hz} must be positive")));
    }
    if !(rate_out_hz >= 0.0) || !rate_out_hz.is_finite() {
        return Err(MetricsError::Domain(format!("output rate {rate_out_hz} must be non-negative")));
    }
    Ok(5.0 * (rate_out_hz / rate_in_hz).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub hilbert_dim: u64,
    pub rate_hz: f64,
    pub eqrr_hz: f64,
    pub equivalent_qubits: f64,
    pub loss_db: Option<f64>,
}

impl MetricsRecord {
    /// `rates` is `(rate_in, rate_out)` when a loss figure is wanted.
    pub fn new(hilbert_dim: u64, rate_hz: f64, rates: Option<(f64, f64)>) -> Result<Self, MetricsError> {
        let e = eqrr(hilbert_dim, rate_hz)?;
        let loss_db = rates.map(|(a, b)| loss_db(a, b)).transpose()?;
        Ok(Self {
            hilbert_dim,
            rate_hz,
            eqrr_hz: e.eqrr_hz,
            equivalent_qubits: e.equivalent_qubits,
            loss_db,
        })
    }

    /// Passive optics cannot add coincidences.
    pub fn is_passive(&self) -> bool {
        self.loss_db.is_none_or(|l| l <= 0.0)
    }
}
