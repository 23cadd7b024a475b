//! Transfer-matrix recovery from intensities only.
//!
//! Magnitudes come from single-input illumination. Row phases are fitted by
//! alternating projections against phase-diverse multi-input probes: impose
//! the measured output amplitudes, solve the linear least-squares problem for
//! the row, then restore the known magnitudes. Each row is only defined up to
//! a global phase, fixed by making its first nonzero element real positive.

use super::{MplcError, MplcResult, TransferMatrix};
use crate::linalg::{C64, ZERO};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Input amplitudes of one probe and the recorded output intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub input: Vec<C64>,
    pub intensities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsOptions {
    pub max_iterations: usize,
    /// Stop once the residual changes by less than this between iterations.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for GsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-8,
            restarts: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GsReconstruction {
    pub transfer: TransferMatrix,
    /// Rows with no recorded intensity, returned as zeros.
    pub null_rows: Vec<usize>,
    /// Fewer than `2M` probes or a near-singular probe matrix.
    pub ill_conditioned: bool,
    /// Worst relative amplitude residual over rows.
    pub residual: f64,
    pub iterations: usize,
}

/// Multiplies each row by the phase that makes its first nonzero entry real positive.
pub fn gauge_rows(a: &Array2<C64>) -> Array2<C64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let peak = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if let Some(z) = row.iter().find(|z| z.norm() > 1e-9 * peak).copied() {
            let g = z.conj() / z.norm();
            row.mapv_inplace(|x| x * g);
        }
    }
    out
}

pub fn gs_reconstruct(single: &Array2<f64>, probes: &[Probe], opts: &GsOptions) -> MplcResult<GsReconstruction> {
    let (n_out, m) = single.dim();
    if m == 0 || n_out == 0 {
        return Err(MplcError::Empty);
    }
    for p in probes {
        if p.input.len() != m || p.intensities.len() != n_out {
            return Err(MplcError::Shape {
                left: (p.intensities.len(), p.input.len()),
                right: (n_out, m),
            });
        }
    }
    if single.iter().chain(probes.iter().flat_map(|p| p.intensities.iter())).any(|x| !x.is_finite()) {
        return Err(MplcError::NotFinite);
    }
    let x = DMatrix::from_fn(probes.len(), m, |p, j| probes[p].input[j]);
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let ill_conditioned = probes.len() < 2 * m || smin <= 1e-6 * smax;
    let pinv = x
        .clone()
        .pseudo_inverse(1e-10 * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| MplcError::Domain(e.to_string()))?;

    let rows: Vec<(Vec<C64>, f64, usize, bool)> = (0..n_out)
        .into_par_iter()
        .map(|i| {
            let r: Vec<f64> = single.row(i).iter().map(|&v| v.max(0.0).sqrt()).collect();
            if r.iter().all(|&v| v == 0.0) {
                return (vec![ZERO; m], 0.0, 0, true);
            }
            let y: Vec<f64> = probes.iter().map(|p| p.intensities[i].max(0.0).sqrt()).collect();
            let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let mut best: Option<(Vec<C64>, f64)> = None;
            let mut iters = 0;
            for restart in 0..opts.restarts.max(1) {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream((i * opts.restarts.max(1) + restart) as u64 + 1);
                let mut a: Vec<C64> = r.iter().map(|&v| C64::from_polar(v, rng.random::<f64>() * TAU)).collect();
                let mut prev = f64::INFINITY;
                let mut res = f64::INFINITY;
                for _ in 0..opts.max_iterations {
                    iters += 1;
                    let av = nalgebra::DVector::from_vec(a.clone());
                    let z = &x * &av;
                    res = z.iter().zip(&y).map(|(z, y)| (z.norm() - y).powi(2)).sum::<f64>().sqrt() / ynorm;
                    if (prev - res).abs() < opts.tolerance {
                        break;
                    }
                    prev = res;
                    let target = nalgebra::DVector::from_iterator(
                        z.len(),
                        z.iter().zip(&y).map(|(z, &y)| if z.norm() > 0.0 { z * (y / z.norm()) } else { C64::new(y, 0.0) }),
                    );
                    let ls = &pinv * target;
                    for (j, aj) in a.iter_mut().enumerate() {
                        if ls[j].norm() > 0.0 {
                            *aj = ls[j] * (r[j] / ls[j].norm());
                        }
                    }
                }
                if best.as_ref().is_none_or(|(_, b)| res < *b) {
                    best = Some((a, res));
                }
            }
            let (a, res) = best.expect("at least one restart");
            (a, res, iters, false)
        })
        .collect();

    let mut matrix = Array2::zeros((n_out, m));
    let mut null_rows = Vec::new();
    let mut residual: f64 = 0.0;
    let mut iterations = 0;
    for (i, (row, res, it, null)) in rows.into_iter().enumerate() {
        if null {
            null_rows.push(i);
        }
        for (j, v) in row.into_iter().enumerate() {
            matrix[[i, j]] = v;
        }
        residual = residual.max(res);
        iterations = iterations.max(it);
    }
    Ok(GsReconstruction {
        transfer: TransferMatrix::new(gauge_rows(&matrix)),
        null_rows,
        ill_conditioned,
        residual,
        iterations,
    })
}

/// Single-input intensities and random phase-diverse probes for a known
/// matrix, with optional multiplicative Gaussian intensity noise.
pub fn synthesize_probes(a: &Array2<C64>, n_probes: usize, noise: f64, seed: u64) -> (Array2<f64>, Vec<Probe>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let jitter = |v: f64, rng: &mut ChaCha8Rng| (v * (1.0 + noise * normal.sample(rng))).max(0.0);
    let single = a.mapv(|z| z.norm_sqr());
    let single = single.mapv(|v| jitter(v, &mut rng));
    let m = a.ncols();
    let probes = (0..n_probes)
        .map(|_| {
            let input: Vec<C64> = (0..m)
                .map(|_| C64::from_polar(1.0 / (m as f64).sqrt(), rng.random::<f64>() * TAU))
                .collect();
            let out = a.dot(&ndarray::Array1::from_vec(input.clone()));
            let intensities = out.iter().map(|z| jitter(z.norm_sqr(), &mut rng)).collect();
            Probe { input, intensities }
        })
        .collect();
    (single, probes)
}
