//! Small dense complex-matrix helpers shared by the simulation modules.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use std::f64::consts::PI;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Primitive d-th root of unity raised to `k`.
#[inline]
pub fn omega_pow(d: usize, k: i64) -> C64 {
    let r = k.rem_euclid(d as i64) as f64;
    C64::from_polar(1.0, 2.0 * PI * r / d as f64)
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, ONE)
}

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
        block.zip_mut_with(b, |o, &y| *o = x * y);
    }
    out
}

/// Kronecker product of a list, first factor most significant.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a Array2<C64>>) -> Array2<C64> {
    factors
        .into_iter()
        .fold(identity(1), |acc, f| kron(&acc, f))
}

/// Unitary DFT, `F[k][j] = ω^{jk}/√d`. Equal to the Hadamard for d = 2.
pub fn dft(d: usize) -> Array2<C64> {
    let s = 1.0 / (d as f64).sqrt();
    Array2::from_shape_fn((d, d), |(k, j)| omega_pow(d, (j * k) as i64) * s)
}

pub fn hadamard() -> Array2<C64> {
    dft(2)
}

/// Cyclic shift `X|j> = |j+1 mod d>`.
pub fn shift(d: usize) -> Array2<C64> {
    Array2::from_shape_fn((d, d), |(r, c)| if r == (c + 1) % d { ONE } else { ZERO })
}

/// Clock `Z|j> = ω^j |j>`.
pub fn clock(d: usize) -> Array2<C64> {
    Array2::from_diag(&Array1::from_shape_fn(d, |j| omega_pow(d, j as i64)))
}

pub fn mat_pow(a: &Array2<C64>, p: usize) -> Array2<C64> {
    (0..p).fold(identity(a.nrows()), |acc, _| acc.dot(a))
}

/// Largest elementwise deviation of `U U†` from the identity.
pub fn unitarity_defect(u: &Array2<C64>) -> f64 {
    let g = u.dot(&dagger(u));
    g.indexed_iter()
        .map(|((i, j), z)| (z - if i == j { ONE } else { ZERO }).norm())
        .fold(0.0, f64::max)
}

pub fn frobenius_norm_sqr(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `Σ conj(a) b` over all entries.
pub fn inner(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
