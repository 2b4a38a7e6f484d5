//! Reproducible random inputs.
//!
//! All randomness flows from a 64-bit seed through `ChaCha8Rng`, so a draw is
//! bit-identical on every platform. Batch runners seed draw `i` with
//! `master_seed + i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{build_path, certify_tuple, CMatrix, PerturbationPath, Tolerances};
use crate::mpoly::{MultiIndex, MultiPoly};

/// The generator used everywhere in the crate.
pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of draw `index` in a batch started from `master`.
pub fn draw_seed(master: u64, index: u64) -> u64 {
    master.wrapping_add(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    /// `A_j = U D_j U*`, `B_j = U D'_j U*` with one Haar unitary `U` and
    /// diagonals in the closed unit disc.
    JointlyDiagonal,
    /// Circulant matrices, i.e. polynomials in the cyclic shift.
    Circulant,
    /// As `JointlyDiagonal` with real diagonals in `[−1, 1]`.
    SelfAdjointDiagonal,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 3] = [
        EnsembleKind::JointlyDiagonal,
        EnsembleKind::Circulant,
        EnsembleKind::SelfAdjointDiagonal,
    ];

    pub fn is_self_adjoint(self) -> bool {
        self == EnsembleKind::SelfAdjointDiagonal
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnsembleKind::JointlyDiagonal => "jointly-diagonal",
            EnsembleKind::Circulant => "circulant",
            EnsembleKind::SelfAdjointDiagonal => "self-adjoint-diagonal",
        })
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "jointlydiagonal" | "diagonal" => Ok(EnsembleKind::JointlyDiagonal),
            "circulant" => Ok(EnsembleKind::Circulant),
            "selfadjointdiagonal" | "selfadjoint" => Ok(EnsembleKind::SelfAdjointDiagonal),
            _ => Err(Error::Parse(format!(
                "unknown ensemble `{s}` (expected jointly-diagonal, circulant or self-adjoint-diagonal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub dim: usize,
    pub v_scale: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Structural("ensemble needs at least one variable".into()));
        }
        if self.dim == 0 || self.dim > crate::matcore::DEFAULT_MAX_DIM {
            return Err(Error::Structural(format!(
                "ensemble dimension {} out of range",
                self.dim
            )));
        }
        if !(self.v_scale >= 0.0 && self.v_scale.is_finite()) {
            return Err(Error::Domain(format!(
                "v_scale must be finite and ≥ 0, got {}",
                self.v_scale
            )));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform point of the closed unit disc.
fn disc_point(rng: &mut impl Rng) -> Complex64 {
    let r = rng.random_range(0.0..=1.0_f64).sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(r, theta)
}

/// Radial projection onto the closed unit disc.
fn clip_to_disc(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 1.0 {
        z / r
    } else {
        z
    }
}

/// Haar unitary from the QR factorisation of a complex Gaussian matrix,
/// with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let z = DMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, k)] *= phase;
        }
    }
    CMatrix::new(q).expect("finite unitary")
}

fn conjugate(u: &CMatrix, diag: &[Complex64]) -> CMatrix {
    let d = CMatrix::from_diagonal(diag);
    &(u * &d) * &u.adjoint()
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + &m.adjoint()).scale_real(0.5)
}

/// Circulant matrix with the given eigenvalues, `C = Σ_k c_k S^k` where `S`
/// is the cyclic shift and `c` is the inverse DFT of the spectrum.
pub fn circulant_from_spectrum(spectrum: &[Complex64]) -> CMatrix {
    let d = spectrum.len();
    let omega = |e: usize| Complex64::from_polar(1.0, std::f64::consts::TAU * (e % d) as f64 / d as f64);
    let c: Vec<Complex64> = (0..d)
        .map(|k| {
            spectrum
                .iter()
                .enumerate()
                .map(|(r, l)| l * omega(r * k))
                .sum::<Complex64>()
                / d as f64
        })
        .collect();
    CMatrix::from_fn(d, |i, k| c[(i + d - k) % d])
}

fn perturbed_disc(rng: &mut impl Rng, v_scale: f64, dim: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let a: Vec<Complex64> = (0..dim).map(|_| disc_point(rng)).collect();
    let b = a.iter().map(|&x| clip_to_disc(x + disc_point(rng) * v_scale)).collect();
    (a, b)
}

fn perturbed_segment(rng: &mut impl Rng, v_scale: f64, dim: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let b = a
        .iter()
        .map(|&x| (x + v_scale * rng.random_range(-1.0..=1.0_f64)).clamp(-1.0, 1.0))
        .collect::<Vec<f64>>();
    let lift = |v: Vec<f64>| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
    (lift(a), lift(b))
}

/// Joint diagonal form of a drawn pair: `A_j = W diag(a_j) W*` and
/// `B_j = W diag(b_j) W*` with `W` unitary.
#[derive(Debug, Clone)]
pub struct JointForm {
    pub basis: CMatrix,
    pub a: Vec<Vec<Complex64>>,
    pub b: Vec<Vec<Complex64>>,
}

/// Normalised Fourier matrix `F_{ik} = ω^{ik}/√d`; it diagonalises every circulant.
pub fn fourier_basis(dim: usize) -> CMatrix {
    let s = 1.0 / (dim as f64).sqrt();
    CMatrix::from_fn(dim, |i, k| {
        Complex64::from_polar(s, std::f64::consts::TAU * ((i * k) % dim) as f64 / dim as f64)
    })
}

/// The spectra and eigenbasis behind [`draw_path`] for the same spec.
pub fn draw_joint_form(spec: &EnsembleSpec) -> Result<JointForm> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let dim = spec.dim;
    let (basis, pairs): (CMatrix, Vec<_>) = match spec.kind {
        EnsembleKind::JointlyDiagonal => {
            let u = haar_unitary(dim, &mut rng);
            (
                u,
                (0..spec.n)
                    .map(|_| perturbed_disc(&mut rng, spec.v_scale, dim))
                    .collect(),
            )
        }
        EnsembleKind::SelfAdjointDiagonal => {
            let u = haar_unitary(dim, &mut rng);
            (
                u,
                (0..spec.n)
                    .map(|_| perturbed_segment(&mut rng, spec.v_scale, dim))
                    .collect(),
            )
        }
        EnsembleKind::Circulant => (
            fourier_basis(dim),
            (0..spec.n)
                .map(|_| perturbed_disc(&mut rng, spec.v_scale, dim))
                .collect(),
        ),
    };
    let (a, b) = pairs.into_iter().unzip();
    Ok(JointForm { basis, a, b })
}

fn endpoint_matrices(kind: EnsembleKind, form: &JointForm) -> (Vec<CMatrix>, Vec<CMatrix>) {
    let build = |d: &Vec<Complex64>| match kind {
        EnsembleKind::JointlyDiagonal => conjugate(&form.basis, d),
        EnsembleKind::SelfAdjointDiagonal => hermitian_part(&conjugate(&form.basis, d)),
        EnsembleKind::Circulant => circulant_from_spectrum(d),
    };
    (form.a.iter().map(build).collect(), form.b.iter().map(build).collect())
}

/// Draws a certified path.
pub fn draw_path(spec: &EnsembleSpec) -> Result<PerturbationPath> {
    let form = draw_joint_form(spec)?;
    let (a, b) = endpoint_matrices(spec.kind, &form);
    let tol = Tolerances::default();
    let a = certify_tuple(a, tol.ctol, tol.ntol)?;
    let b = certify_tuple(b, tol.ctol, tol.ntol)?;
    build_path(a, b, &tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub n: usize,
    pub max_total_degree: u32,
    pub coeff_scale: f64,
    pub seed: u64,
    /// Optional cap on every per-variable degree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_var_degree: Option<u32>,
}

impl FunctionSpec {
    pub fn new(n: usize, max_total_degree: u32, seed: u64) -> Self {
        Self {
            n,
            max_total_degree,
            coeff_scale: 1.0,
            seed,
            max_var_degree: None,
        }
    }
}

/// Every multi-index with `|k| ≤ total` and `k_j ≤ cap`, in lexicographic order.
pub fn multi_indices(n: usize, total: u32, cap: u32) -> Vec<MultiIndex> {
    fn rec(pos: usize, left: u32, cap: u32, cur: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left.min(cap) {
            cur[pos] = e;
            rec(pos + 1, left - e, cap, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    rec(0, total, cap, &mut vec![0; n], &mut out);
    out
}

/// Dense random polynomial with complex Gaussian coefficients damped by
/// `coeff_scale/(1+|k|)²`.
pub fn draw_function(spec: &FunctionSpec) -> Result<MultiPoly> {
    if spec.n == 0 {
        return Err(Error::Structural("function needs at least one variable".into()));
    }
    if !spec.coeff_scale.is_finite() {
        return Err(Error::Domain("coeff_scale must be finite".into()));
    }
    let mut rng = rng_from_seed(spec.seed);
    let cap = spec.max_var_degree.unwrap_or(spec.max_total_degree);
    let terms: Vec<(MultiIndex, Complex64)> = multi_indices(spec.n, spec.max_total_degree, cap)
        .into_iter()
        .map(|k| {
            let size: u32 = k.iter().sum();
            let damp = spec.coeff_scale / (1.0 + size as f64).powi(2);
            let c = gaussian(&mut rng) * damp;
            (k, c)
        })
        .collect();
    MultiPoly::from_terms(spec.n, terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialKind {
    /// Diagonal endpoints `A`, perturbations that do not commute with them.
    NonCommuting,
    /// Upper-triangular Toeplitz contractions (polynomials in the nilpotent
    /// shift): commuting but not normal, with nonzero traces.
    NonNormal,
}

impl fmt::Display for AdversarialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversarialKind::NonCommuting => "non-commuting",
            AdversarialKind::NonNormal => "non-normal",
        })
    }
}

impl AdversarialKind {
    pub const ALL: [AdversarialKind; 2] = [AdversarialKind::NonCommuting, AdversarialKind::NonNormal];
}

impl FromStr for AdversarialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "noncommuting" => Ok(AdversarialKind::NonCommuting),
            "nonnormal" => Ok(AdversarialKind::NonNormal),
            _ => Err(Error::Parse(format!(
                "unknown adversarial kind `{s}` (expected non-commuting or non-normal)"
            ))),
        }
    }
}

fn upper_toeplitz(diag: Complex64, coeffs: &[Complex64], dim: usize) -> CMatrix {
    let m = CMatrix::from_fn(dim, |i, k| match k.checked_sub(i) {
        Some(0) => diag,
        Some(d) if d <= coeffs.len() => coeffs[d - 1],
        _ => Complex64::new(0.0, 0.0),
    });
    // Keep it a strict contraction.
    let norm = m.op_norm();
    if norm > 0.9 {
        m.scale_real(0.9 / norm)
    } else {
        m
    }
}

/// A path that violates exactly one hypothesis, for out-of-hypothesis probes.
pub fn adversarial_path(kind: AdversarialKind, n: usize, dim: usize, seed: u64) -> Result<PerturbationPath> {
    if n == 0 || dim < 2 {
        return Err(Error::Structural("adversarial paths need n ≥ 1 and dim ≥ 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    let (a, b): (Vec<CMatrix>, Vec<CMatrix>) = match kind {
        AdversarialKind::NonCommuting => (0..n)
            .map(|_| {
                let diag: Vec<Complex64> = (0..dim).map(|_| disc_point(&mut rng) * 0.5).collect();
                let a = CMatrix::from_diagonal(&diag);
                let v = CMatrix::from_fn(dim, |_, _| gaussian(&mut rng));
                let v = v.scale_real(0.4 / v.op_norm());
                let b = &a + &v;
                (a, b)
            })
            .unzip(),
        AdversarialKind::NonNormal => (0..n)
            .map(|_| {
                let ca: Vec<Complex64> = (1..dim).map(|_| gaussian(&mut rng)).collect();
                let cb: Vec<Complex64> = (1..dim).map(|_| gaussian(&mut rng)).collect();
                let (da, db) = (disc_point(&mut rng) * 0.5, disc_point(&mut rng) * 0.5);
                (upper_toeplitz(da, &ca, dim), upper_toeplitz(db, &cb, dim))
            })
            .unzip(),
    };
    let tol = Tolerances::default();
    let a = certify_tuple(a, tol.ctol, tol.ntol)?;
    let b = certify_tuple(b, tol.ctol, tol.ntol)?;
    build_path(a, b, &tol)
}

/// Orthogonal projectors onto the blocks of a random unitary basis split into
/// `blocks` consecutive groups: the eigenprojectors of a random normal matrix
/// with `blocks` distinct eigenvalues.
pub fn random_partition(dim: usize, blocks: usize, rng: &mut impl Rng) -> Result<Vec<CMatrix>> {
    if blocks == 0 || blocks > dim {
        return Err(Error::Structural(format!(
            "cannot split dimension {dim} into {blocks} blocks"
        )));
    }
    let u = haar_unitary(dim, rng);
    // Random cut points give block sizes ≥ 1.
    let mut cuts: Vec<usize> = (1..dim).collect();
    for i in 0..cuts.len() {
        let j = rng.random_range(i..cuts.len());
        cuts.swap(i, j);
    }
    let mut cuts: Vec<usize> = cuts.into_iter().take(blocks - 1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(dim);
    Ok(bounds
        .windows(2)
        .map(|w| {
            let mut p = CMatrix::zeros(dim);
            for k in w[0]..w[1] {
                let col = CMatrix::from_fn(dim, |i, c| if c == 0 { u.get(i, k) } else { Complex64::new(0.0, 0.0) });
                p = &p + &(&col * &col.adjoint());
            }
            p
        })
        .collect())
}

/// Random Hilbert–Schmidt perturbation with entries `N(0, scale²/dim)`.
pub fn random_perturbation(dim: usize, scale: f64, rng: &mut impl Rng) -> CMatrix {
    let s = scale / (dim as f64).sqrt();
    CMatrix::from_fn(dim, |_, _| gaussian(rng) * s)
}
