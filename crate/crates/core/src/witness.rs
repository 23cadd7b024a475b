//! Stabilizer entanglement witnesses for two-colorable cluster states.
//!
//! With vertices split by index parity into `G0 = {0, 2, ...}` and
//! `G1 = {1, 3, ...}`,
//!
//! `W = (d+1)/(d-1) - d/(d-1) · (Π_{k∈G0} P_k + Π_{k∈G1} P_k)`,
//! `P_k = (1/d) Σ_{p=1..d} S_k^p`.
//!
//! Every `P_k` is a projector, so `W ≥ -1` on every state. For d = 2 this is
//! `3 - 2(Π (S_k+1)/2 + Π (S_k+1)/2)`.
//!
//! Expanding each product gives `d^{|G|}` operator strings per group. On a
//! group's strings every vertex carries only `X` powers or only `Z` powers, so a
//! single product basis per group measures all of them at once.

use crate::encoding::digits_of;
use crate::graph::{layout, stabilizers, GraphError, GraphState, Layout, StabilizerTerm};
use crate::linalg::{dft, identity, kron_all, omega_pow, C64};
use crate::state::{CoincidenceTable, ModeUnitary, Photon, StateError, TwoPhotonState};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_BOOTSTRAP: usize = 1000;
const IMAG_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("edge ({0}, {1}) joins two vertices of equal index parity")]
    NotBipartite(usize, usize),
    #[error("count table for setting {0} is empty")]
    InsufficientData(usize),
    #[error("white-noise fraction {0} outside [0, 1]")]
    Domain(f64),
    #[error("state has {found} modes, graph needs {expected}")]
    Mismatch { expected: usize, found: usize },
    #[error("witness value has imaginary part {0:.3e}")]
    NotReal(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type WitnessResult<T> = Result<T, WitnessError>;

/// One operator string of the expanded witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessTerm {
    /// Parity group, 0 or 1.
    pub group: usize,
    /// Power of each group stabilizer, in `1..=d`.
    pub powers: Vec<usize>,
    pub op: StabilizerTerm,
    /// Weight of `<op>` in `W`; the sign is already included, so `W = constant + Σ coefficient·<op>`.
    pub coefficient: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessExpansion {
    pub d: usize,
    pub constant: f64,
    pub groups: [Vec<usize>; 2],
    pub terms: Vec<WitnessTerm>,
}

impl WitnessExpansion {
    /// Value on the maximally mixed state, where only identity strings survive.
    pub fn mixed_value(&self) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .filter(|t| t.op.is_identity_string())
                .map(|t| t.coefficient * t.op.phase_value().re)
                .sum::<f64>()
    }

    pub fn evaluate(&self, values: &[C64]) -> C64 {
        self.terms
            .iter()
            .zip(values)
            .map(|(t, v)| *v * t.coefficient)
            .sum::<C64>()
            + self.constant
    }
}

pub fn parity_groups(g: &GraphState) -> WitnessResult<[Vec<usize>; 2]> {
    if let Some(e) = g.edges().iter().find(|e| e.u % 2 == e.v % 2) {
        return Err(WitnessError::NotBipartite(e.u, e.v));
    }
    let n = g.n_vertices();
    Ok([(0..n).step_by(2).collect(), (1..n).step_by(2).collect()])
}

pub fn expand_witness(g: &GraphState) -> WitnessResult<WitnessExpansion> {
    let groups = parity_groups(g)?;
    let d = g.d();
    let n = g.n_vertices();
    let df = d as f64;
    let scale = df / (df - 1.0);
    let stab = stabilizers(g);
    let mut terms = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        let k = group.len();
        let coefficient = -scale / df.powi(k as i32);
        let pows: Vec<Vec<StabilizerTerm>> = group
            .iter()
            .map(|&v| (0..=d).map(|p| stab[v].pow(p)).collect())
            .collect();
        for idx in 0..d.pow(k as u32) {
            let powers: Vec<usize> = digits_of(idx, d, k).into_iter().map(|x| x + 1).collect();
            let op = powers
                .iter()
                .zip(&pows)
                .fold(StabilizerTerm::identity(d, n), |acc, (&p, table)| acc.mul(&table[p]));
            terms.push(WitnessTerm {
                group: gi,
                label: op.label(),
                powers,
                op,
                coefficient,
            });
        }
    }
    Ok(WitnessExpansion {
        d,
        constant: (df + 1.0) / (df - 1.0),
        groups,
        terms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingUsed {
    Exact,
    TwoMubCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub label: String,
    pub group: usize,
    pub value: C64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub value: f64,
    pub std_dev: f64,
    pub per_term: Vec<TermEstimate>,
    pub setting_used: SettingUsed,
}

#[derive(Serialize)]
struct TermRow<'a> {
    label: &'a str,
    group: usize,
    re: f64,
    im: f64,
    std: f64,
}

impl WitnessReport {
    pub fn write_json<W: Write>(&self, w: W) -> WitnessResult<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per operator string: `label,group,re,im,std`.
    pub fn write_terms_csv<W: Write>(&self, w: W) -> WitnessResult<()> {
        let mut out = csv::Writer::from_writer(w);
        for t in &self.per_term {
            out.serialize(TermRow {
                label: &t.label,
                group: t.group,
                re: t.value.re,
                im: t.value.im,
                std: t.std,
            })?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_modes(state: &TwoPhotonState, lay: &Layout) -> WitnessResult<()> {
    let expected = lay.d.pow(lay.n() as u32);
    if state.modes() != expected {
        return Err(WitnessError::Mismatch {
            expected,
            found: state.modes(),
        });
    }
    Ok(())
}

pub fn witness_exact(state: &TwoPhotonState, g: &GraphState) -> WitnessResult<WitnessReport> {
    let exp = expand_witness(g)?;
    let lay = layout(g)?;
    check_modes(state, &lay)?;
    let values: Vec<C64> = exp.terms.par_iter().map(|t| t.op.expectation(state, &lay)).collect();
    let total = exp.evaluate(&values);
    if total.im.abs() > IMAG_TOL {
        return Err(WitnessError::NotReal(total.im));
    }
    Ok(WitnessReport {
        value: total.re,
        std_dev: 0.0,
        per_term: exp
            .terms
            .iter()
            .zip(values)
            .map(|(t, value)| TermEstimate {
                label: t.label.clone(),
                group: t.group,
                value,
                std: 0.0,
            })
            .collect(),
        setting_used: SettingUsed::Exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingLabel {
    Setting1,
    Setting2,
}

/// Product measurement basis evaluating one parity group's strings.
#[derive(Debug, Clone, PartialEq)]
pub struct MubSetting {
    pub label: SettingLabel,
    pub group: usize,
    /// Per-vertex flag: measured in the `X` eigenbasis rather than `Z`.
    pub x_type: Vec<bool>,
    pub u_a: ModeUnitary,
    pub u_b: ModeUnitary,
    /// Indices into [`WitnessExpansion::terms`].
    pub terms: Vec<usize>,
}

impl MubSetting {
    /// Number of digits of one photon measured in the `X` eigenbasis.
    pub fn x_count(&self, lay: &Layout, p: Photon) -> usize {
        lay.digits(p).iter().filter(|&&v| self.x_type[v]).count()
    }

    /// Outcome probabilities of this setting on a state.
    pub fn probabilities(&self, state: &TwoPhotonState) -> WitnessResult<Array2<f64>> {
        Ok(state
            .apply_photon_unitary(Photon::A, &self.u_a)?
            .apply_photon_unitary(Photon::B, &self.u_b)?
            .coincidence_probs())
    }
}

/// The two settings. In group `G`, vertex `v` is measured in `X` when it lies
/// in `G` and is unframed, or lies outside `G` and is framed. The `X` eigenbasis
/// is read out by a DFT on that digit: outcome `k` means eigenvalue `ω^k` of `X`.
pub fn mub_settings(g: &GraphState) -> WitnessResult<[MubSetting; 2]> {
    let exp = expand_witness(g)?;
    let lay = layout(g)?;
    let d = g.d();
    let n = g.n_vertices();
    let f = dft(d);
    let id = identity(d);
    let make = |gi: usize, label: SettingLabel| -> WitnessResult<MubSetting> {
        let x_type: Vec<bool> = (0..n).map(|v| (v % 2 == gi) != g.is_framed(v)).collect();
        let per_photon = |p: Photon| -> WitnessResult<ModeUnitary> {
            let factors: Vec<&Array2<C64>> = lay
                .digits(p)
                .iter()
                .map(|&v| if x_type[v] { &f } else { &id })
                .collect();
            Ok(ModeUnitary::new(kron_all(factors))?)
        };
        Ok(MubSetting {
            label,
            group: gi,
            u_a: per_photon(Photon::A)?,
            u_b: per_photon(Photon::B)?,
            terms: exp
                .terms
                .iter()
                .enumerate()
                .filter(|(_, t)| t.group == gi)
                .map(|(i, _)| i)
                .collect(),
            x_type,
        })
    };
    Ok([make(0, SettingLabel::Setting1)?, make(1, SettingLabel::Setting2)?])
}

/// Per-cell eigenvalue exponent of every term of a setting, as a flat
/// `M*M` table per term (row-major over `(A mode, B mode)`).
fn eigen_exponents(term: &StabilizerTerm, setting: &MubSetting, lay: &Layout) -> Vec<usize> {
    let d = lay.d;
    let n = lay.n();
    let m = d.pow(n as u32);
    let per_photon = |p: Photon| -> Vec<usize> {
        let digits = lay.digits(p);
        (0..m)
            .map(|mode| {
                let q = digits_of(mode, d, n);
                digits
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let pow = if setting.x_type[v] { term.x[v] } else { term.z[v] };
                        pow * q[k]
                    })
                    .sum::<usize>()
            })
            .collect()
    };
    let ea = per_photon(Photon::A);
    let eb = per_photon(Photon::B);
    let mut out = Vec::with_capacity(m * m);
    for a in &ea {
        for b in &eb {
            out.push((a + b + term.phase) % d);
        }
    }
    out
}

/// Term values estimated from per-setting outcome distributions (any
/// non-negative weights summing to one per table).
pub fn terms_from_distributions(
    g: &GraphState,
    settings: &[MubSetting; 2],
    dists: [&Array2<f64>; 2],
) -> WitnessResult<Vec<C64>> {
    let exp = expand_witness(g)?;
    let lay = layout(g)?;
    let d = g.d();
    let roots: Vec<C64> = (0..d).map(|k| omega_pow(d, k as i64)).collect();
    let mut values = vec![C64::new(0.0, 0.0); exp.terms.len()];
    for s in settings {
        let p = dists[s.group];
        for &ti in &s.terms {
            let ex = eigen_exponents(&exp.terms[ti].op, s, &lay);
            values[ti] = p.iter().zip(&ex).map(|(w, &e)| roots[e] * *w).sum();
        }
    }
    Ok(values)
}

/// Compiled estimator: term values as linear functions of the two count tables.
struct Estimator {
    exp: WitnessExpansion,
    /// `(setting group, exponent table)` for every term.
    tables: Vec<(usize, Vec<usize>)>,
    roots: Vec<C64>,
}

impl Estimator {
    fn new(g: &GraphState, settings: &[MubSetting; 2]) -> WitnessResult<Self> {
        let exp = expand_witness(g)?;
        let lay = layout(g)?;
        let mut tables = vec![(0, Vec::new()); exp.terms.len()];
        for s in settings {
            for &ti in &s.terms {
                tables[ti] = (s.group, eigen_exponents(&exp.terms[ti].op, s, &lay));
            }
        }
        let d = g.d();
        Ok(Self {
            roots: (0..d).map(|k| omega_pow(d, k as i64)).collect(),
            exp,
            tables,
        })
    }

    fn terms(&self, freqs: [&[f64]; 2]) -> Vec<C64> {
        self.tables
            .iter()
            .map(|(gi, ex)| freqs[*gi].iter().zip(ex).map(|(w, &e)| self.roots[e] * *w).sum())
            .collect()
    }
}

fn frequencies(t: &CoincidenceTable) -> Vec<f64> {
    let n = t.total as f64;
    t.counts.iter().map(|&c| c as f64 / n).collect()
}

/// Multinomial resample with the table's total, drawn as a chain of binomials.
fn resample(counts: &[u64], total: u64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut left = total;
    let mut mass = 1.0;
    let n = total as f64;
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            let k = if left == 0 || p <= 0.0 {
                0
            } else if p >= mass {
                left
            } else {
                Binomial::new(left, (p / mass).min(1.0)).expect("valid binomial").sample(rng)
            };
            left -= k;
            mass -= p;
            k as f64 / n
        })
        .collect()
}

/// Witness estimate from the two settings' count tables, with bootstrap
/// standard deviations over `resamples` multinomial resamples of each table.
pub fn witness_from_counts(
    tables: [&CoincidenceTable; 2],
    g: &GraphState,
    settings: &[MubSetting; 2],
    resamples: usize,
    seed: u64,
) -> WitnessResult<WitnessReport> {
    for (i, t) in tables.iter().enumerate() {
        if t.total == 0 {
            return Err(WitnessError::InsufficientData(i + 1));
        }
    }
    let est = Estimator::new(g, settings)?;
    let f = [frequencies(tables[0]), frequencies(tables[1])];
    let values = est.terms([&f[0], &f[1]]);
    let value = est.exp.evaluate(&values).re;
    let raw: [Vec<u64>; 2] = [tables[0].counts.iter().copied().collect(), tables[1].counts.iter().copied().collect()];
    let boots: Vec<(f64, Vec<C64>)> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let a = resample(&raw[0], tables[0].total, &mut rng);
            let b = resample(&raw[1], tables[1].total, &mut rng);
            let tv = est.terms([&a, &b]);
            (est.exp.evaluate(&tv).re, tv)
        })
        .collect();
    let std_of = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
        let v: Vec<f64> = xs.collect();
        if v.len() < 2 {
            return 0.0;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let std_dev = std_of(&mut boots.iter().map(|b| b.0));
    let per_term = est
        .exp
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let re = std_of(&mut boots.iter().map(|b| b.1[i].re));
            let im = std_of(&mut boots.iter().map(|b| b.1[i].im));
            TermEstimate {
                label: t.label.clone(),
                group: t.group,
                value: values[i],
                std: re.hypot(im),
            }
        })
        .collect();
    Ok(WitnessReport {
        value,
        std_dev,
        per_term,
        setting_used: SettingUsed::TwoMubCounts,
    })
}

/// Witness of `(1-p)·|G><G| + p·I/dim`.
pub fn witness_on_mixture(g: &GraphState, p: f64) -> WitnessResult<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(WitnessError::Domain(p));
    }
    let exp = expand_witness(g)?;
    let spec = crate::encoding::EncodingSpec::with_default_grid(g.d(), g.n_vertices() / 2)
        .map_err(|e| GraphError::Parse(e.to_string()))?;
    let ideal = witness_exact(&crate::graph::simulate_cluster(g, &spec)?, g)?.value;
    Ok((1.0 - p) * ideal + p * exp.mixed_value())
}

/// White-noise fraction at which the mixture witness reaches zero.
pub fn zero_crossing(g: &GraphState) -> WitnessResult<f64> {
    let w0 = witness_on_mixture(g, 0.0)?;
    let w1 = witness_on_mixture(g, 1.0)?;
    Ok(-w0 / (w1 - w0))
}

/// Outcome distribution of the white-noise mixture in one setting.
pub fn mix_with_white_noise(probs: &Array2<f64>, p: f64) -> Array2<f64> {
    let cells = probs.len() as f64;
    probs.mapv(|x| (1.0 - p) * x + p / cells)
}
