//! Mode indexing for qudits encoded in the transverse spatial modes of a photon.
//!
//! Each photon carries `M = d^N` modes, and mode `m` stands for the qudit string
//! obtained by writing `m` in base `d`, most significant digit first. Digit `k`
//! is qudit `k` of that photon.
//!
//! Both photons go through one binary aperture mask with `2M` holes laid out
//! row-major from the top-left corner. Momentum conservation pairs every
//! aperture with its point reflection through the mask center, so photon A in
//! aperture `m` always finds photon B in aperture `2M - 1 - m`. Both apertures
//! carry the mode label `m`.
//!
//! Which physical hole gets which label is a convention. The row-major
//! assignment used here is one valid choice, not a measured property of any
//! particular mask.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("qudit dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("at least one qudit per photon is required")]
    NoQudits,
    #[error("{d}^{n} modes per photon overflows the supported range")]
    TooManyModes { d: usize, n: usize },
    #[error("aperture grid {rows}x{cols} holds {found} apertures, expected 2M = {expected}")]
    GridSize {
        rows: usize,
        cols: usize,
        found: usize,
        expected: usize,
    },
    #[error("aperture pitch {pitch_um} um must exceed the aperture diameter {diameter_um} um")]
    Overlap { pitch_um: f64, diameter_um: f64 },
    #[error("index {index} out of range 0..{bound}")]
    Range { index: usize, bound: usize },
    #[error("qudit string has {found} digits, expected {expected}")]
    Length { found: usize, expected: usize },
    #[error("digit {digit} at position {position} is not below d = {d}")]
    Digit {
        digit: usize,
        position: usize,
        d: usize,
    },
}

/// Physical layout of the binary amplitude mask holding both photons' apertures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApertureGrid {
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "pitch_um")]
    pub pitch_um: f64,
    #[serde(rename = "radius_um")]
    pub radius_um: f64,
}

impl ApertureGrid {
    pub fn new(rows: usize, cols: usize, pitch_um: f64, radius_um: f64) -> Result<Self, EncodingError> {
        if !(pitch_um > 2.0 * radius_um) {
            return Err(EncodingError::Overlap {
                pitch_um,
                diameter_um: 2.0 * radius_um,
            });
        }
        Ok(Self {
            rows,
            cols,
            pitch_um,
            radius_um,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (row, col) of a row-major aperture index.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    /// Aperture center in micrometres, relative to the mask center (x right, y down).
    pub fn center_um(&self, index: usize) -> (f64, f64) {
        let (r, c) = self.coords(index);
        let x = (c as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch_um;
        let y = (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch_um;
        (x, y)
    }

    /// Point reflection through the grid center.
    pub fn partner(&self, index: usize) -> Result<usize, EncodingError> {
        if index >= self.len() {
            return Err(EncodingError::Range {
                index,
                bound: self.len(),
            });
        }
        let (r, c) = self.coords(index);
        Ok((self.rows - 1 - r) * self.cols + (self.cols - 1 - c))
    }
}

/// A string of `N` qudit values, each in `0..d`. Digit 0 is the most significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuditString(pub Vec<usize>);

impl QuditString {
    pub fn digits(&self) -> &[usize] {
        &self.0
    }
}

/// How many qudits of which dimension live on each photon, plus the mask they go through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EncodingConfig", into = "EncodingConfig")]
pub struct EncodingSpec {
    d: usize,
    n: usize,
    modes: usize,
    grid: ApertureGrid,
}

/// Flat on-disk form of [`EncodingSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    pub pitch_um: f64,
    pub radius_um: f64,
}

impl TryFrom<EncodingConfig> for EncodingSpec {
    type Error = EncodingError;

    fn try_from(c: EncodingConfig) -> Result<Self, Self::Error> {
        EncodingSpec::new(c.d, c.n, ApertureGrid::new(c.rows, c.cols, c.pitch_um, c.radius_um)?)
    }
}

impl From<EncodingSpec> for EncodingConfig {
    fn from(s: EncodingSpec) -> Self {
        EncodingConfig {
            d: s.d,
            n: s.n,
            rows: s.grid.rows,
            cols: s.grid.cols,
            pitch_um: s.grid.pitch_um,
            radius_um: s.grid.radius_um,
        }
    }
}

/// Aperture pitch and radius of the 5x10 mask used for the d = 5 experiments.
pub const DEFAULT_PITCH_UM: f64 = 300.0;
pub const DEFAULT_RADIUS_UM: f64 = 100.0;

impl EncodingSpec {
    pub fn new(d: usize, n: usize, grid: ApertureGrid) -> Result<Self, EncodingError> {
        let modes = mode_count(d, n)?;
        if grid.len() != 2 * modes {
            return Err(EncodingError::GridSize {
                rows: grid.rows,
                cols: grid.cols,
                found: grid.len(),
                expected: 2 * modes,
            });
        }
        Ok(Self { d, n, modes, grid })
    }

    /// Picks the most square `rows x cols` factorisation of `2M` with `rows <= cols`
    /// and the default pitch and radius.
    pub fn with_default_grid(d: usize, n: usize) -> Result<Self, EncodingError> {
        let modes = mode_count(d, n)?;
        let total = 2 * modes;
        let rows = (1..=total)
            .take_while(|r| r * r <= total)
            .filter(|r| total % r == 0)
            .last()
            .unwrap_or(1);
        let grid = ApertureGrid::new(rows, total / rows, DEFAULT_PITCH_UM, DEFAULT_RADIUS_UM)?;
        Self::new(d, n, grid)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn qudits_per_photon(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn grid(&self) -> &ApertureGrid {
        &self.grid
    }

    pub fn index_to_digits(&self, m: usize) -> Result<QuditString, EncodingError> {
        if m >= self.modes {
            return Err(EncodingError::Range {
                index: m,
                bound: self.modes,
            });
        }
        Ok(QuditString(digits_of(m, self.d, self.n)))
    }

    pub fn digits_to_index(&self, q: &QuditString) -> Result<usize, EncodingError> {
        if q.0.len() != self.n {
            return Err(EncodingError::Length {
                found: q.0.len(),
                expected: self.n,
            });
        }
        q.0.iter().enumerate().try_fold(0usize, |acc, (position, &digit)| {
            if digit >= self.d {
                Err(EncodingError::Digit {
                    digit,
                    position,
                    d: self.d,
                })
            } else {
                Ok(acc * self.d + digit)
            }
        })
    }

    /// Aperture carrying mode `m` of photon A (top half of the mask).
    pub fn aperture_a(&self, m: usize) -> usize {
        m
    }

    /// Aperture carrying mode `m` of photon B.
    pub fn aperture_b(&self, m: usize) -> usize {
        2 * self.modes - 1 - m
    }

    pub fn partner_aperture(&self, i: usize) -> Result<usize, EncodingError> {
        self.grid.partner(i)
    }
}

fn mode_count(d: usize, n: usize) -> Result<usize, EncodingError> {
    if d < 2 {
        return Err(EncodingError::Dimension(d));
    }
    if n == 0 {
        return Err(EncodingError::NoQudits);
    }
    u32::try_from(n)
        .ok()
        .and_then(|e| d.checked_pow(e))
        .filter(|m| m.checked_mul(2).is_some())
        .ok_or(EncodingError::TooManyModes { d, n })
}

/// Big-endian base-`d` digits of `m`, padded to `n` places.
pub fn digits_of(mut m: usize, d: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = m % d;
        m /= d;
    }
    out
}

/// Inverse of [`digits_of`]. Digits are assumed to be in range.
pub fn index_of(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &q| acc * d + q)
}

/// Value of digit `k` (0 = most significant) of mode `m`.
#[inline]
pub fn digit(m: usize, k: usize, d: usize, n: usize) -> usize {
    (m / d.pow((n - 1 - k) as u32)) % d
}
