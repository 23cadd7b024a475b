//! Sampled scalar fields and band-limited angular-spectrum propagation.

use super::{Geometry, MplcError, MplcResult};
use crate::linalg::{C64, ZERO};
use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Complex amplitude on an `H × W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalField {
    data: Array2<C64>,
    pitch_um: f64,
    wavelength_nm: f64,
}

impl OpticalField {
    pub fn new(data: Array2<C64>, pitch_um: f64, wavelength_nm: f64) -> MplcResult<Self> {
        let (h, w) = data.dim();
        if h == 0 || w == 0 {
            return Err(MplcError::Geometry("field grid must be nonempty".into()));
        }
        if !(pitch_um > 0.0 && wavelength_nm > 0.0) {
            return Err(MplcError::Geometry("pitch and wavelength must be positive".into()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MplcError::NotFinite);
        }
        // keep the standard layout, the FFT works on the flat buffer
        let data = if data.is_standard_layout() { data } else { data.as_standard_layout().to_owned() };
        Ok(Self {
            data,
            pitch_um,
            wavelength_nm,
        })
    }

    /// Unit-energy Gaussian `exp(-r²/w0²)` centred at `(x, y)` µm from the grid centre.
    pub fn gaussian(geom: &Geometry, center_um: (f64, f64), waist_um: f64) -> Self {
        let (cx, cy) = center_um;
        let data = Array2::from_shape_fn((geom.rows, geom.cols), |(r, c)| {
            let (x, y) = geom.pixel_um(r, c);
            C64::new((-((x - cx).powi(2) + (y - cy).powi(2)) / (waist_um * waist_um)).exp(), 0.0)
        });
        let mut f = Self {
            data,
            pitch_um: geom.pitch_um,
            wavelength_nm: geom.wavelength_nm,
        };
        f.normalize();
        f
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<C64> {
        self.data
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn pitch_um(&self) -> f64 {
        self.pitch_um
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let e = self.energy().sqrt();
        if e > 0.0 {
            self.data.mapv_inplace(|z| z / e);
        }
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &OpticalField) -> C64 {
        crate::linalg::inner(&self.data, &other.data)
    }

    /// Second-moment beam radius along x, `2·√⟨(x-x̄)²⟩`, in µm.
    pub fn radius_x_um(&self) -> f64 {
        let (h, w) = self.dim();
        let e = self.energy();
        let xs: Vec<f64> = (0..w).map(|c| (c as f64 - (w as f64 - 1.0) / 2.0) * self.pitch_um).collect();
        let mut mean = 0.0;
        let mut sq = 0.0;
        for r in 0..h {
            for c in 0..w {
                let i = self.data[[r, c]].norm_sqr();
                mean += i * xs[c];
                sq += i * xs[c] * xs[c];
            }
        }
        mean /= e;
        2.0 * (sq / e - mean * mean).sqrt()
    }
}

/// Cached 2-D FFT plans for one grid size.
#[derive(Clone)]
pub(crate) struct Fft2 {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(h: usize, w: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            h,
            w,
            row_fwd: p.plan_fft_forward(w),
            row_inv: p.plan_fft_inverse(w),
            col_fwd: p.plan_fft_forward(h),
            col_inv: p.plan_fft_inverse(h),
        }
    }

    fn run(&self, buf: &mut [C64], inverse: bool) {
        let (h, w) = (self.h, self.w);
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        rows.process(buf);
        let mut t = vec![ZERO; h * w];
        for r in 0..h {
            for c in 0..w {
                t[c * h + r] = buf[r * w + c];
            }
        }
        cols.process(&mut t);
        let scale = if inverse { 1.0 / (h * w) as f64 } else { 1.0 };
        for r in 0..h {
            for c in 0..w {
                buf[r * w + c] = t[c * h + r] * scale;
            }
        }
    }
}

/// `fftfreq`: spatial frequencies in 1/m for `n` samples at pitch `p` metres.
fn fftfreq(n: usize, p: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            k / (n as f64 * p)
        })
        .collect()
}

/// Angular-spectrum propagator for one geometry.
#[derive(Clone)]
pub struct Propagator {
    h: usize,
    w: usize,
    pitch_m: f64,
    wavelength_m: f64,
    cap: f64,
    fft: Fft2,
}

/// Transfer function sampled on the FFT grid.
#[derive(Debug, Clone)]
pub struct Transfer {
    pub(crate) h: Vec<C64>,
    /// The transfer phase is undersampled at the band edge for this distance.
    pub aliased: bool,
}

impl Propagator {
    pub fn new(rows: usize, cols: usize, pitch_um: f64, wavelength_nm: f64, cap: f64) -> MplcResult<Self> {
        if rows == 0 || cols == 0 {
            return Err(MplcError::Geometry("grid must be nonempty".into()));
        }
        if !(cap > 0.0 && cap <= 1.0) {
            return Err(MplcError::Geometry(format!("angle cap {cap} outside (0, 1]")));
        }
        Ok(Self {
            h: rows,
            w: cols,
            pitch_m: pitch_um * 1e-6,
            wavelength_m: wavelength_nm * 1e-9,
            cap,
            fft: Fft2::new(rows, cols),
        })
    }

    pub fn for_geometry(g: &Geometry) -> MplcResult<Self> {
        Self::new(g.rows, g.cols, g.pitch_um, g.wavelength_nm, g.angle_cap)
    }

    /// Band-limited transfer over `distance_mm`. Negative distances give the
    /// conjugate (backward) transfer.
    pub fn transfer(&self, distance_mm: f64) -> Transfer {
        if distance_mm == 0.0 {
            return Transfer {
                h: vec![crate::linalg::ONE; self.h * self.w],
                aliased: false,
            };
        }
        let z = distance_mm * 1e-3;
        let fy = fftfreq(self.h, self.pitch_m);
        let fx = fftfreq(self.w, self.pitch_m);
        let fmax = self.cap / (2.0 * self.pitch_m);
        let inv_l2 = 1.0 / (self.wavelength_m * self.wavelength_m);
        let mut h = vec![ZERO; self.h * self.w];
        let mut evanescent = false;
        for (r, &v) in fy.iter().enumerate() {
            for (c, &u) in fx.iter().enumerate() {
                if u.abs() > fmax || v.abs() > fmax {
                    continue;
                }
                let s = inv_l2 - u * u - v * v;
                if s <= 0.0 {
                    evanescent = true;
                    continue;
                }
                h[r * self.w + c] = C64::from_polar(1.0, 2.0 * PI * s.sqrt() * z);
            }
        }
        // local phase-gradient sampling limit of the transfer function
        let limit = |n: usize| {
            let span = n as f64 * self.pitch_m;
            1.0 / (self.wavelength_m * ((2.0 * z.abs() / span).powi(2) + 1.0).sqrt())
        };
        let aliased = evanescent || fmax > limit(self.h) || fmax > limit(self.w);
        Transfer { h, aliased }
    }

    /// In-place propagation of a flat row-major buffer.
    pub(crate) fn apply(&self, buf: &mut [C64], t: &Transfer) {
        if t.h.iter().all(|&z| z == crate::linalg::ONE) {
            return;
        }
        self.fft.run(buf, false);
        for (a, b) in buf.iter_mut().zip(&t.h) {
            *a *= b;
        }
        self.fft.run(buf, true);
    }

    /// Adjoint of [`Propagator::apply`].
    pub(crate) fn apply_adjoint(&self, buf: &mut [C64], t: &Transfer) {
        if t.h.iter().all(|&z| z == crate::linalg::ONE) {
            return;
        }
        self.fft.run(buf, false);
        for (a, b) in buf.iter_mut().zip(&t.h) {
            *a *= b.conj();
        }
        self.fft.run(buf, true);
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub field: OpticalField,
    /// Sampling of the transfer function is violated somewhere in the band.
    pub aliased: bool,
}

/// Propagates `field` over `distance_mm` with the given angle cap. Distance
/// zero returns the field unchanged; negative distances use the conjugate transfer.
pub fn propagate(field: &OpticalField, distance_mm: f64, cap: f64) -> MplcResult<Propagation> {
    if !distance_mm.is_finite() {
        return Err(MplcError::Geometry("distance must be finite".into()));
    }
    if distance_mm == 0.0 {
        return Ok(Propagation {
            field: field.clone(),
            aliased: false,
        });
    }
    let (h, w) = field.dim();
    let p = Propagator::new(h, w, field.pitch_um, field.wavelength_nm, cap)?;
    let t = p.transfer(distance_mm.abs());
    let mut data = field.data.clone();
    let buf = data.as_slice_mut().expect("standard layout");
    if distance_mm > 0.0 {
        p.apply(buf, &t);
    } else {
        p.apply_adjoint(buf, &t);
    }
    Ok(Propagation {
        field: OpticalField {
            data,
            pitch_um: field.pitch_um,
            wavelength_nm: field.wavelength_nm,
        },
        aliased: t.aliased,
    })
}

/// Gaussian spots on a near-square grid at the geometry's spot pitch, made
/// exactly orthonormal by symmetric (Löwdin) orthogonalisation.
pub fn spot_modes(n: usize, geom: &Geometry) -> MplcResult<Vec<OpticalField>> {
    if n == 0 {
        return Err(MplcError::Empty);
    }
    let rows = (1..=n).filter(|r| n % r == 0 && r * r <= n).max().unwrap_or(1);
    let grid = crate::encoding::ApertureGrid::new(rows, n / rows, geom.spot_pitch_um, geom.spot_waist_um)
        .map_err(|e| MplcError::Geometry(e.to_string()))?;
    let raw: Vec<OpticalField> = (0..n)
        .map(|i| OpticalField::gaussian(geom, grid.center_um(i), geom.spot_waist_um))
        .collect();
    let (ext_x, ext_y) = grid.center_um(n - 1);
    let half_w = geom.cols as f64 * geom.pitch_um / 2.0;
    let half_h = geom.rows as f64 * geom.pitch_um / 2.0;
    if ext_x + 2.0 * geom.spot_waist_um > half_w || ext_y + 2.0 * geom.spot_waist_um > half_h {
        return Err(MplcError::Geometry(format!(
            "{n} spots ({rows}×{}) do not fit on a {}×{} grid",
            n / rows,
            geom.rows,
            geom.cols
        )));
    }
    orthonormalize(raw)
}

/// Symmetric orthonormalisation `φ' = Σ φ S^{-1/2}`.
pub fn orthonormalize(fields: Vec<OpticalField>) -> MplcResult<Vec<OpticalField>> {
    let n = fields.len();
    let s = DMatrix::from_fn(n, n, |i, j| fields[i].overlap(&fields[j]));
    let eig = s.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < 1e-12) {
        return Err(MplcError::Geometry("modes are linearly dependent".into()));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(1.0 / l.sqrt(), 0.0)));
    let t = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.adjoint();
    Ok((0..n)
        .into_par_iter()
        .map(|j| {
            let mut data = Array2::zeros(fields[0].dim());
            for (i, f) in fields.iter().enumerate() {
                let c = t[(i, j)];
                data.zip_mut_with(&f.data, |o, &x| *o += c * x);
            }
            OpticalField {
                data,
                pitch_um: fields[0].pitch_um,
                wavelength_nm: fields[0].wavelength_nm,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn geom(rows: usize, cols: usize) -> Geometry {
        Geometry {
            rows,
            cols,
            ..Geometry::desk()
        }
    }

    #[test]
    fn zero_distance_is_identity() {
        let f = OpticalField::gaussian(&geom(32, 48), (40.0, -20.0), 60.0);
        let p = propagate(&f, 0.0, 0.15).unwrap();
        assert_eq!(p.field, f);
        assert!(!p.aliased);
    }

    #[test]
    fn fft_round_trip() {
        let fft = Fft2::new(6, 10);
        let orig: Vec<C64> = (0..60).map(|k| C64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let mut buf = orig.clone();
        fft.run(&mut buf, false);
        // DC bin is the plain sum
        let sum: C64 = orig.iter().sum();
        assert!((buf[0] - sum).norm() < 1e-12);
        fft.run(&mut buf, true);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn band_limited_energy_and_reversibility() {
        let g = geom(64, 96);
        let f0 = OpticalField::gaussian(&g, (100.0, 50.0), 100.0);
        // first pass drops the out-of-band tail
        let f = propagate(&f0, 10.0, 0.15).unwrap().field;
        let e = f.energy();
        assert!(e < 1.0 && e > 0.9);
        let fwd = propagate(&f, 87.0, 0.15).unwrap().field;
        assert!((fwd.energy() - e).abs() < 1e-9);
        let back = propagate(&fwd, -87.0, 0.15).unwrap().field;
        assert!(max_abs_diff(back.data(), f.data()) < 1e-9);
    }

    #[test]
    fn aliasing_flag_tracks_distance() {
        let p = Propagator::new(512, 512, 12.5, 810.0, 1.0).unwrap();
        assert!(!p.transfer(1.0).aliased);
        assert!(p.transfer(5000.0).aliased);
    }

    #[test]
    fn spots_are_orthonormal() {
        let g = Geometry::desk();
        for n in [2, 4, 8] {
            let s = spot_modes(n, &g).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let o = s[i].overlap(&s[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((o - C64::new(want, 0.0)).norm() < 1e-10);
                }
            }
        }
        assert!(spot_modes(64, &g).is_err());
    }
}
