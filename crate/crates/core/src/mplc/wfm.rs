//! Wavefront matching and evaluation of phase-plate stacks.
//!
//! Every mask update is a candidate phase from the summed overlap between the
//! forward-propagated inputs and the back-propagated (weighted) targets at that
//! plane, followed by a backtracking search along the phase change. A step is
//! kept only if the Frobenius fidelity does not drop, so the fidelity after
//! each sweep is non-decreasing. The first sweeps weight the targets by the
//! identity (plain wavefront matching); later sweeps use the fidelity gradient
//! `t·I − (|t|²/D)·A` with `t = Tr A`, `D = ‖A‖²`, which also balances loss
//! between modes.
//!
//! The overlaps at plane `k` use the targets carried backwards through the
//! planes after `k`. Backward propagation is the exact adjoint of the forward
//! one, so candidate masks at `k` are scored without any further FFTs.

use super::field::{OpticalField, Propagator, Transfer};
use super::{frobenius_fidelity, spot_modes, Geometry, MplcError, MplcResult, TransferMatrix};
use crate::linalg::{kron_all, C64, ZERO};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const DEFAULT_ITERATIONS: usize = 30;

/// Phase masks in order of incidence, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneStack {
    pub masks: Vec<Array2<f64>>,
    pub geometry: Geometry,
}

impl PlaneStack {
    pub fn new(masks: Vec<Array2<f64>>, geometry: Geometry) -> MplcResult<Self> {
        geometry.validate()?;
        for m in &masks {
            if m.dim() != (geometry.rows, geometry.cols) {
                return Err(MplcError::Shape {
                    left: m.dim(),
                    right: (geometry.rows, geometry.cols),
                });
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(MplcError::NotFinite);
            }
        }
        Ok(Self { masks, geometry })
    }

    pub fn flat(n_planes: usize, geometry: Geometry) -> MplcResult<Self> {
        let m = Array2::zeros((geometry.rows, geometry.cols));
        Self::new(vec![m; n_planes], geometry)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Output-plane field for an input at the first mask.
    pub fn transmit(&self, input: &OpticalField) -> MplcResult<OpticalField> {
        let e = Engine::new(self)?;
        e.check(input)?;
        let mut buf = flat(input);
        e.forward(0, &mut buf);
        OpticalField::new(
            Array2::from_shape_vec((self.geometry.rows, self.geometry.cols), buf).expect("shape"),
            self.geometry.pitch_um,
            self.geometry.wavelength_nm,
        )
    }
}

fn flat(f: &OpticalField) -> Vec<C64> {
    f.data().iter().copied().collect()
}

struct Engine {
    prop: Propagator,
    between: Transfer,
    last: Transfer,
    phasors: Vec<Vec<C64>>,
    dims: (usize, usize),
}

impl Engine {
    fn new(stack: &PlaneStack) -> MplcResult<Self> {
        let g = &stack.geometry;
        g.validate()?;
        let prop = Propagator::for_geometry(g)?;
        Ok(Self {
            between: prop.transfer(g.plane_distance_mm),
            last: prop.transfer(g.final_distance_mm),
            prop,
            phasors: stack.masks.iter().map(phasor).collect(),
            dims: (g.rows, g.cols),
        })
    }

    fn check(&self, f: &OpticalField) -> MplcResult<()> {
        if f.dim() != self.dims {
            return Err(MplcError::Shape {
                left: f.dim(),
                right: self.dims,
            });
        }
        Ok(())
    }

    fn planes(&self) -> usize {
        self.phasors.len()
    }

    fn transfer_after(&self, k: usize) -> &Transfer {
        if k + 1 == self.planes() {
            &self.last
        } else {
            &self.between
        }
    }

    /// Mask `k` then the propagation that follows it.
    fn step(&self, k: usize, buf: &mut [C64]) {
        for (a, p) in buf.iter_mut().zip(&self.phasors[k]) {
            *a *= p;
        }
        self.prop.apply(buf, self.transfer_after(k));
    }

    /// From just before mask `from` to the output plane.
    fn forward(&self, from: usize, buf: &mut [C64]) {
        if self.planes() == 0 {
            self.prop.apply(buf, &self.last);
        }
        for k in from..self.planes() {
            self.step(k, buf);
        }
    }

    /// Target carried back to just after each mask; index `k` is valid for plane `k`.
    fn backward(&self, target: &[C64]) -> Vec<Vec<C64>> {
        let p = self.planes();
        let mut out = vec![Vec::new(); p];
        let mut b = target.to_vec();
        for k in (0..p).rev() {
            self.prop.apply_adjoint(&mut b, self.transfer_after(k));
            out[k] = b.clone();
            for (a, ph) in b.iter_mut().zip(&self.phasors[k]) {
                *a *= ph.conj();
            }
        }
        out
    }
}

fn phasor(m: &Array2<f64>) -> Vec<C64> {
    m.iter().map(|&p| C64::from_polar(1.0, p)).collect()
}

/// Overlap matrix `A'[j][m] = Σ conj(B_j) e^{iφ} F_m` at one plane.
fn plane_overlaps(back: &[&[C64]], fwd: &[Vec<C64>], ph: &[C64]) -> Array2<C64> {
    let n = fwd.len();
    let weighted: Vec<Vec<C64>> = fwd
        .par_iter()
        .map(|f| f.iter().zip(ph).map(|(a, p)| a * p).collect())
        .collect();
    let vals: Vec<C64> = (0..n * n)
        .into_par_iter()
        .map(|jm| {
            let (j, m) = (jm / n, jm % n);
            back[j].iter().zip(&weighted[m]).map(|(b, f)| b.conj() * f).sum()
        })
        .collect();
    Array2::from_shape_vec((n, n), vals).expect("square")
}

/// Fidelity of an overlap matrix taken in the target basis.
fn overlap_fidelity(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let tr: C64 = a.diag().iter().sum();
    let d: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    if d == 0.0 {
        0.0
    } else {
        (tr.norm() / (n as f64 * d).sqrt()).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfmOptions {
    pub iterations: usize,
    /// Sweeps that weight targets by the identity before switching to the
    /// fidelity gradient.
    pub coherent_sweeps: usize,
    /// Planes that may change; all when `None`.
    pub active: Option<Range<usize>>,
}

impl Default for WfmOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            coherent_sweeps: 10,
            active: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WfmResult {
    pub stack: PlaneStack,
    pub initial_fidelity: f64,
    /// Fidelity after each full sweep.
    pub history: Vec<f64>,
    pub fidelity: f64,
}

pub fn wavefront_match(
    inputs: &[OpticalField],
    targets: &[OpticalField],
    n_planes: usize,
    iterations: usize,
    geometry: &Geometry,
) -> MplcResult<WfmResult> {
    let stack = PlaneStack::flat(n_planes, geometry.clone())?;
    wavefront_match_with(
        inputs,
        targets,
        stack,
        &WfmOptions {
            iterations,
            ..WfmOptions::default()
        },
    )
}

/// Optimises `stack` in place of a flat start. `targets[m]` is the desired
/// output-plane field for `inputs[m]`.
pub fn wavefront_match_with(
    inputs: &[OpticalField],
    targets: &[OpticalField],
    stack: PlaneStack,
    opts: &WfmOptions,
) -> MplcResult<WfmResult> {
    if inputs.is_empty() {
        return Err(MplcError::Empty);
    }
    if inputs.len() != targets.len() {
        return Err(MplcError::ModeCount(inputs.len(), targets.len()));
    }
    if stack.is_empty() {
        return Err(MplcError::Geometry("stack has no planes to optimise".into()));
    }
    let mut eng = Engine::new(&stack)?;
    for f in inputs.iter().chain(targets) {
        eng.check(f)?;
    }
    let p = eng.planes();
    let active = opts.active.clone().unwrap_or(0..p);
    if active.end > p {
        return Err(MplcError::Geometry(format!("active planes {active:?} exceed {p}")));
    }
    let n = inputs.len();
    let tgt: Vec<Vec<C64>> = targets.iter().map(flat).collect();
    let mut masks = stack.masks;

    let score_end = |eng: &Engine| {
        let back: Vec<Vec<Vec<C64>>> = tgt.par_iter().map(|t| eng.backward(t)).collect();
        let mut fwd: Vec<Vec<C64>> = inputs.iter().map(flat).collect();
        fwd.par_iter_mut().for_each(|f| {
            for k in 0..p - 1 {
                eng.step(k, f);
            }
        });
        let b: Vec<&[C64]> = back.iter().map(|v| v[p - 1].as_slice()).collect();
        overlap_fidelity(&plane_overlaps(&b, &fwd, &eng.phasors[p - 1]))
    };
    let initial_fidelity = score_end(&eng);
    let mut history = Vec::with_capacity(opts.iterations);

    for sweep in 0..opts.iterations {
        // masks after the current plane are untouched while it is updated
        let back: Vec<Vec<Vec<C64>>> = tgt.par_iter().map(|t| eng.backward(t)).collect();
        let mut fwd: Vec<Vec<C64>> = inputs.iter().map(flat).collect();
        let mut last = 0.0;
        for k in 0..p {
            let bk: Vec<&[C64]> = back.iter().map(|v| v[k].as_slice()).collect();
            let a = plane_overlaps(&bk, &fwd, &eng.phasors[k]);
            let f0 = overlap_fidelity(&a);
            last = f0;
            if active.contains(&k) {
                let g = if sweep < opts.coherent_sweeps {
                    Array2::from_diag_elem(n, crate::linalg::ONE)
                } else {
                    let t: C64 = a.diag().iter().sum();
                    let d: f64 = a.iter().map(|z| z.norm_sqr()).sum();
                    let mut g = a.mapv(|z| -z * (t.norm_sqr() / d));
                    for i in 0..n {
                        g[[i, i]] += t;
                    }
                    g
                };
                let len = fwd[0].len();
                let c: Vec<C64> = (0..len)
                    .into_par_iter()
                    .map(|x| {
                        let mut acc = ZERO;
                        for (mi, f) in fwd.iter().enumerate() {
                            let mut b = ZERO;
                            for (j, bj) in bk.iter().enumerate() {
                                b += g[[j, mi]] * bj[x];
                            }
                            acc += b * f[x].conj();
                        }
                        acc
                    })
                    .collect();
                let old = masks[k].clone();
                let step: Vec<f64> = c
                    .iter()
                    .zip(old.iter())
                    .map(|(z, &o)| wrap(z.arg() - o))
                    .collect();
                let mut s = 1.0;
                while s > 1e-3 {
                    let trial: Array2<f64> =
                        Array2::from_shape_fn(old.dim(), |(r, cc)| old[[r, cc]] + s * step[r * old.ncols() + cc]);
                    let ph = phasor(&trial);
                    let f1 = overlap_fidelity(&plane_overlaps(&bk, &fwd, &ph));
                    if f1 >= f0 {
                        masks[k] = trial.mapv(|x| x.rem_euclid(std::f64::consts::TAU));
                        eng.phasors[k] = ph;
                        last = f1;
                        break;
                    }
                    s *= 0.5;
                }
            }
            if k + 1 < p {
                fwd.par_iter_mut().for_each(|f| eng.step(k, f));
            }
        }
        history.push(last);
    }
    let stack = PlaneStack::new(masks, stack.geometry)?;
    let fidelity = history.last().copied().unwrap_or(initial_fidelity);
    Ok(WfmResult {
        stack,
        initial_fidelity,
        history,
        fidelity,
    })
}

fn wrap(x: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let y = x.rem_euclid(t);
    if y > std::f64::consts::PI {
        y - t
    } else {
        y
    }
}

/// `t_j = Σ_i U[i][j] o_i`: the field input `j` should reach.
pub fn target_fields(outputs: &[OpticalField], u: &Array2<C64>) -> MplcResult<Vec<OpticalField>> {
    let n = outputs.len();
    if u.dim() != (n, n) {
        return Err(MplcError::Shape {
            left: u.dim(),
            right: (n, n),
        });
    }
    if n == 0 {
        return Err(MplcError::Empty);
    }
    (0..n)
        .map(|j| {
            let mut data = Array2::zeros(outputs[0].dim());
            for (i, o) in outputs.iter().enumerate() {
                let c = u[[i, j]];
                data.zip_mut_with(o.data(), |acc, &x| *acc += c * x);
            }
            OpticalField::new(data, outputs[0].pitch_um(), outputs[0].wavelength_nm())
        })
        .collect()
}

/// `A[i][j] = ⟨output_i | stack(input_j)⟩`.
pub fn stack_matrix(stack: &PlaneStack, inputs: &[OpticalField], outputs: &[OpticalField]) -> MplcResult<TransferMatrix> {
    let eng = Engine::new(stack)?;
    for f in inputs.iter().chain(outputs) {
        eng.check(f)?;
    }
    let outs: Vec<Vec<C64>> = inputs
        .par_iter()
        .map(|f| {
            let mut b = flat(f);
            eng.forward(0, &mut b);
            b
        })
        .collect();
    let m = Array2::from_shape_fn((outputs.len(), inputs.len()), |(i, j)| {
        outputs[i].data().iter().zip(&outs[j]).map(|(o, x)| o.conj() * x).sum()
    });
    Ok(TransferMatrix::new(m))
}

/// Splits `u` into `n` Kronecker factors of size `d`, first factor most significant.
pub fn kron_factors(u: &Array2<C64>, d: usize, n: usize) -> MplcResult<Vec<Array2<C64>>> {
    let size = d.pow(n as u32);
    if u.dim() != (size, size) {
        return Err(MplcError::Shape {
            left: u.dim(),
            right: (size, size),
        });
    }
    let mut rest = u.clone();
    let mut factors = Vec::with_capacity(n);
    for k in 0..n.saturating_sub(1) {
        let r = d.pow((n - k - 1) as u32);
        let block = |i: usize, j: usize, m: &Array2<C64>| m.slice(ndarray::s![i * r..(i + 1) * r, j * r..(j + 1) * r]).to_owned();
        let (mut bi, mut bj, mut best) = (0, 0, -1.0);
        for i in 0..d {
            for j in 0..d {
                let nrm = crate::linalg::frobenius_norm_sqr(&block(i, j, &rest));
                if nrm > best {
                    (bi, bj, best) = (i, j, nrm);
                }
            }
        }
        if best <= 0.0 {
            return Err(MplcError::NotSeparable { d, n });
        }
        let b = block(bi, bj, &rest).mapv(|z| z / best.sqrt());
        let a = Array2::from_shape_fn((d, d), |(i, j)| crate::linalg::inner(&b, &block(i, j, &rest)));
        if crate::linalg::max_abs_diff(&crate::linalg::kron(&a, &b), &rest) > 1e-9 {
            return Err(MplcError::NotSeparable { d, n });
        }
        factors.push(a);
        rest = b;
    }
    factors.push(rest);
    Ok(factors)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementStack {
    pub stack: PlaneStack,
    pub target: Array2<C64>,
    pub transfer: TransferMatrix,
    pub fidelity: f64,
    /// Fidelity against the partial product after each layer's optimisation.
    pub layer_fidelity: Vec<f64>,
    pub history: Vec<f64>,
}

impl MeasurementStack {
    pub fn planes(&self) -> usize {
        self.stack.len()
    }
}

/// Builds a stack for the separable transformation `U₁ ⊗ U₂ ⊗ …` on spot modes.
///
/// Layer `k` owns planes `2k, 2k+1, 2k+2`, so neighbouring layers share a
/// plane and `N` factors need `2N + 1` planes. Layers are optimised in turn,
/// each against the product of the factors so far.
pub fn compile_measurement_stack(
    factors: &[Array2<C64>],
    geometry: &Geometry,
    iterations: usize,
) -> MplcResult<MeasurementStack> {
    if factors.is_empty() {
        return Err(MplcError::Empty);
    }
    for f in factors {
        if f.nrows() != f.ncols() || f.nrows() == 0 {
            return Err(MplcError::Shape {
                left: f.dim(),
                right: (f.nrows(), f.nrows()),
            });
        }
        if crate::linalg::unitarity_defect(f) > 1e-9 {
            return Err(MplcError::Domain("basis factors must be unitary".into()));
        }
    }
    let target = kron_all(factors);
    let modes = spot_modes(target.nrows(), geometry)?;
    let planes = 2 * factors.len() + 1;
    let mut stack = PlaneStack::flat(planes, geometry.clone())?;
    let mut layer_fidelity = Vec::new();
    let mut history = Vec::new();
    for k in 0..factors.len() {
        let partial: Vec<Array2<C64>> = factors
            .iter()
            .enumerate()
            .map(|(i, f)| if i <= k { f.clone() } else { crate::linalg::identity(f.nrows()) })
            .collect();
        let targets = target_fields(&modes, &kron_all(&partial))?;
        let r = wavefront_match_with(
            &modes,
            &targets,
            stack,
            &WfmOptions {
                iterations,
                active: Some(2 * k..2 * k + 3),
                ..WfmOptions::default()
            },
        )?;
        layer_fidelity.push(r.fidelity);
        history.extend(r.history);
        stack = r.stack;
    }
    let transfer = stack_matrix(&stack, &modes, &modes)?;
    let fidelity = frobenius_fidelity(&transfer.matrix, &target)?;
    Ok(MeasurementStack {
        stack,
        target,
        transfer,
        fidelity,
        layer_fidelity,
        history,
    })
}
