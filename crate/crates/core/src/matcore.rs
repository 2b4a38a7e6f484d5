//! Dense complex matrices, traces and Schatten norms, plus certification of
//! commuting contraction tuples and the linear paths between them.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default commutation / normality tolerance (scale-normalised).
pub const DEFAULT_CTOL: f64 = 1e-10;
/// Default slack on `‖X‖ ≤ 1` for contraction certification.
pub const DEFAULT_NTOL: f64 = 1e-10;
/// Number of uniform `t` samples used to certify contractivity along a path.
pub const DEFAULT_PATH_GRID: usize = 33;
/// Soft cap on matrix dimension; callers that take user input check it.
pub const DEFAULT_MAX_DIM: usize = 64;

/// Dense square complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<Complex64>);

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix{}", self.0)
    }
}

impl CMatrix {
    /// Wraps a square matrix with finite entries.
    pub fn new(inner: DMatrix<Complex64>) -> Result<Self> {
        if inner.nrows() != inner.ncols() {
            return Err(Error::Structural(format!(
                "matrix is {}x{}, expected square",
                inner.nrows(),
                inner.ncols()
            )));
        }
        if inner.nrows() == 0 {
            return Err(Error::Structural("matrix has dimension 0".into()));
        }
        if inner.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("matrix has non-finite entries".into()));
        }
        Ok(Self(inner))
    }

    /// Builds from row-major rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self(DMatrix::from_fn(dim, dim, f))
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let dim = diag.len();
        Self::from_fn(dim, |i, j| if i == j { diag[i] } else { Complex64::new(0.0, 0.0) })
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn inner(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: Complex64, other: &CMatrix) {
        self.0.zip_apply(&other.0, |a, b| *a += s * b);
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Singular values in non-increasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.0.clone().svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn op_norm(&self) -> f64 {
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    /// `self^p` by binary exponentiation.
    pub fn pow(&self, mut p: u32) -> Self {
        let mut result = Self::identity(self.dim());
        let mut base = self.clone();
        while p > 0 {
            if p & 1 == 1 {
                result = &result * &base;
            }
            p >>= 1;
            if p > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// `[self, other] = self·other − other·self`
    pub fn commutator(&self, other: &CMatrix) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

/// Canonical trace.
pub fn trace(m: &CMatrix) -> Complex64 {
    m.trace()
}

/// Schatten `p`-norm `(Σ σ_i^p)^{1/p}`.
pub fn schatten_norm(m: &CMatrix, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("Schatten exponent {p} is below 1")));
    }
    if p == 2.0 {
        return Ok(m.frobenius());
    }
    let s = m.singular_values();
    if p.is_infinite() {
        return Ok(s.first().copied().unwrap_or(0.0));
    }
    if p == 1.0 {
        return Ok(s.iter().sum());
    }
    Ok(s.iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p))
}

/// Operator norm (largest singular value).
pub fn op_norm(m: &CMatrix) -> f64 {
    m.op_norm()
}

/// Tolerances used when certifying tuples and paths.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub ctol: f64,
    pub ntol: f64,
    pub path_grid: usize,
    pub max_dim: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ctol: DEFAULT_CTOL,
            ntol: DEFAULT_NTOL,
            path_grid: DEFAULT_PATH_GRID,
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

/// An `n`-tuple of equal-size matrices with its certification record.
#[derive(Debug, Clone)]
pub struct CommutingTuple {
    mats: Vec<CMatrix>,
    comm_residual: f64,
    is_commuting: bool,
    is_contraction: bool,
    is_normal: bool,
    is_self_adjoint: bool,
}

impl CommutingTuple {
    pub fn n(&self) -> usize {
        self.mats.len()
    }

    pub fn dim(&self) -> usize {
        self.mats[0].dim()
    }

    pub fn mats(&self) -> &[CMatrix] {
        &self.mats
    }

    /// Largest pairwise commutator, in operator norm.
    pub fn comm_residual(&self) -> f64 {
        self.comm_residual
    }

    /// `comm_residual ≤ ctol·max(1, max_j ‖X_j‖²)`.
    pub fn is_commuting(&self) -> bool {
        self.is_commuting
    }

    pub fn is_contraction(&self) -> bool {
        self.is_contraction
    }

    pub fn is_normal(&self) -> bool {
        self.is_normal
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.is_self_adjoint
    }
}

fn check_same_dim(mats: &[CMatrix]) -> Result<usize> {
    let first = mats
        .first()
        .ok_or_else(|| Error::Structural("empty matrix tuple".into()))?;
    let dim = first.dim();
    for m in mats {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.dim(),
            });
        }
    }
    Ok(dim)
}

/// Computes the commutation residual, contraction and normality flags.
pub fn certify_tuple(mats: Vec<CMatrix>, ctol: f64, ntol: f64) -> Result<CommutingTuple> {
    check_same_dim(&mats)?;
    let norms: Vec<f64> = mats.iter().map(op_norm).collect();
    let mut comm_residual = 0.0_f64;
    for i in 0..mats.len() {
        for j in (i + 1)..mats.len() {
            comm_residual = comm_residual.max(mats[i].commutator(&mats[j]).op_norm());
        }
    }
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let scale = 1.0_f64.max(max_norm * max_norm);
    let is_commuting = comm_residual <= ctol * scale;
    let is_contraction = norms.iter().all(|&x| x <= 1.0 + ntol);
    let is_normal = mats.iter().all(|m| m.commutator(&m.adjoint()).op_norm() <= ctol);
    let is_self_adjoint = mats.iter().all(|m| (m - &m.adjoint()).op_norm() <= ctol);
    Ok(CommutingTuple {
        mats,
        comm_residual,
        is_commuting,
        is_contraction,
        is_normal,
        is_self_adjoint,
    })
}

/// Endpoint tuples `A`, `B` with differences `V = B − A` and the linear path
/// `X(t) = A + tV`.
#[derive(Debug, Clone)]
pub struct PerturbationPath {
    a: CommutingTuple,
    b: CommutingTuple,
    v: Vec<CMatrix>,
    path_valid: bool,
    contractive: bool,
}

impl PerturbationPath {
    pub fn a(&self) -> &CommutingTuple {
        &self.a
    }

    pub fn b(&self) -> &CommutingTuple {
        &self.b
    }

    pub fn v(&self) -> &[CMatrix] {
        &self.v
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn dim(&self) -> usize {
        self.v[0].dim()
    }

    /// `{A} ∪ {B} ∪ {V}` pairwise commute, so `X(t)` commutes for every `t`.
    pub fn path_valid(&self) -> bool {
        self.path_valid
    }

    /// Every `X_j(t)` passed the contraction check on the certification grid.
    pub fn contractive(&self) -> bool {
        self.contractive
    }

    /// Commuting normal contractions along the whole segment. Normal
    /// commuting `A_j`, `V_j` give normal `A_j + tV_j` (Fuglede), so endpoint
    /// normality plus `path_valid` is enough.
    pub fn in_hypothesis(&self) -> bool {
        self.path_valid && self.contractive && self.a.is_normal && self.b.is_normal
    }

    pub fn self_adjoint(&self) -> bool {
        self.a.is_self_adjoint && self.b.is_self_adjoint
    }

    /// `X_j(t) = A_j + tV_j` for every coordinate.
    pub fn at(&self, t: f64) -> Vec<CMatrix> {
        self.a
            .mats
            .iter()
            .zip(&self.v)
            .map(|(a, v)| {
                let mut x = a.clone();
                x.axpy(Complex64::new(t, 0.0), v);
                x
            })
            .collect()
    }

    /// The one-variable path `(A_j, B_j)`.
    pub fn coordinate(&self, j: usize, tol: &Tolerances) -> Result<PerturbationPath> {
        if j >= self.n() {
            return Err(Error::Structural(format!(
                "coordinate {} out of range for {} variables",
                j + 1,
                self.n()
            )));
        }
        let a = certify_tuple(vec![self.a.mats[j].clone()], tol.ctol, tol.ntol)?;
        let b = certify_tuple(vec![self.b.mats[j].clone()], tol.ctol, tol.ntol)?;
        build_path(a, b, tol)
    }
}

fn families_commute(mats: &[&CMatrix], ctol: f64) -> bool {
    let max_norm = mats.iter().map(|m| m.frobenius()).fold(0.0, f64::max);
    let bound = ctol * 1.0_f64.max(max_norm * max_norm);
    for i in 0..mats.len() {
        for j in (i + 1)..mats.len() {
            let c = mats[i].commutator(mats[j]);
            // Frobenius dominates the operator norm; only fall back to SVD
            // when the cheap bound is inconclusive.
            if c.frobenius() > bound && c.op_norm() > bound {
                return false;
            }
        }
    }
    true
}

/// Builds the path between two certified tuples and checks that it stays
/// commuting and contractive.
pub fn build_path(a: CommutingTuple, b: CommutingTuple, tol: &Tolerances) -> Result<PerturbationPath> {
    if a.n() != b.n() {
        return Err(Error::ArityMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let v: Vec<CMatrix> = a.mats.iter().zip(&b.mats).map(|(x, y)| y - x).collect();

    let family: Vec<&CMatrix> = a.mats.iter().chain(&b.mats).chain(&v).collect();
    let path_valid = families_commute(&family, tol.ctol);

    let grid = tol.path_grid.max(2);
    let contractive = a.is_contraction
        && b.is_contraction
        && (1..grid - 1).all(|q| {
            let t = q as f64 / (grid - 1) as f64;
            a.mats.iter().zip(&v).all(|(x, dv)| {
                let mut xt = x.clone();
                xt.axpy(Complex64::new(t, 0.0), dv);
                xt.op_norm() <= 1.0 + tol.ntol
            })
        });

    Ok(PerturbationPath {
        a,
        b,
        v,
        path_valid,
        contractive,
    })
}

/// `X_1^{k_1} ··· X_n^{k_n}` in coordinate order.
pub fn ordered_monomial(tuple: &CommutingTuple, k: &[u32]) -> Result<CMatrix> {
    ordered_monomial_of(tuple.mats(), k)
}

pub(crate) fn ordered_monomial_of(mats: &[CMatrix], k: &[u32]) -> Result<CMatrix> {
    if k.len() != mats.len() {
        return Err(Error::ArityMismatch {
            expected: mats.len(),
            found: k.len(),
        });
    }
    let mut acc: Option<CMatrix> = None;
    for (m, &e) in mats.iter().zip(k) {
        if e == 0 {
            continue;
        }
        let p = m.pow(e);
        acc = Some(match acc {
            None => p,
            Some(prev) => &prev * &p,
        });
    }
    Ok(acc.unwrap_or_else(|| CMatrix::identity(mats[0].dim())))
}
