//! Finite-support multivariate power series.
//!
//! A [`MultiPoly`] stores `Σ c_k z^k` over a finite set of multi-indices and
//! evaluates either at scalar points or at commuting matrix tuples, where
//! `z^k` becomes the ordered product `X_1^{k_1}···X_n^{k_n}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matcore::{op_norm, CMatrix, CommutingTuple};

pub type MultiIndex = Vec<u32>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Polynomial in `n_vars` complex variables, kept in canonical form (no
/// stored zero coefficients, terms ordered lexicographically by index).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoly {
    n_vars: usize,
    terms: BTreeMap<MultiIndex, Complex64>,
}

impl MultiPoly {
    pub fn zero(n_vars: usize) -> Self {
        assert!(n_vars > 0, "polynomial needs at least one variable");
        Self {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: Complex64) -> Self {
        let mut p = Self::zero(n_vars);
        p.add_term(vec![0; n_vars], c);
        p
    }

    pub fn monomial(k: MultiIndex, c: Complex64) -> Self {
        let mut p = Self::zero(k.len());
        p.add_term(k, c);
        p
    }

    /// Collects `(index, coefficient)` pairs; repeated indices are summed.
    pub fn from_terms(n_vars: usize, terms: impl IntoIterator<Item = (MultiIndex, Complex64)>) -> Result<Self> {
        let mut p = Self::zero(n_vars);
        for (k, c) in terms {
            if k.len() != n_vars {
                return Err(Error::ArityMismatch {
                    expected: n_vars,
                    found: k.len(),
                });
            }
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::Domain(format!("non-finite coefficient at {k:?}")));
            }
            p.add_term(k, c);
        }
        Ok(p)
    }

    /// Univariate polynomial from ascending coefficients.
    pub fn univariate(coeffs: &[Complex64]) -> Self {
        let mut p = Self::zero(1);
        for (d, &c) in coeffs.iter().enumerate() {
            p.add_term(vec![d as u32], c);
        }
        p
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, k: &[u32]) -> Complex64 {
        self.terms.get(k).copied().unwrap_or(ZERO)
    }

    pub fn add_term(&mut self, k: MultiIndex, c: Complex64) {
        debug_assert_eq!(k.len(), self.n_vars);
        if c == ZERO {
            return;
        }
        let entry = self.terms.entry(k);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == ZERO {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    /// Largest exponent of variable `j` in the support (`N_j`).
    pub fn degree_in(&self, j: usize) -> u32 {
        self.terms.keys().map(|k| k[j]).max().unwrap_or(0)
    }

    pub fn degrees(&self) -> Vec<u32> {
        (0..self.n_vars).map(|j| self.degree_in(j)).collect()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|k| k.iter().sum()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_terms(self.n_vars, self.terms.iter().map(|(k, c)| (k.clone(), c * s))).expect("scaling keeps arity")
    }

    pub fn add(&self, other: &MultiPoly) -> Result<Self> {
        self.check_arity(other.n_vars)?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), *c);
        }
        Ok(out)
    }

    /// Embeds a univariate polynomial as a function of variable `j` among `n_vars`.
    pub fn embed_univariate(&self, j: usize, n_vars: usize) -> Result<Self> {
        if self.n_vars != 1 {
            return Err(Error::ArityMismatch {
                expected: 1,
                found: self.n_vars,
            });
        }
        if j >= n_vars {
            return Err(Error::Structural(format!("coordinate {} out of range", j + 1)));
        }
        Self::from_terms(
            n_vars,
            self.terms.iter().map(|(k, c)| {
                let mut idx = vec![0; n_vars];
                idx[j] = k[0];
                (idx, *c)
            }),
        )
    }

    /// `Σ |c_k| r^{|k|}`, an upper bound of `|f|` on the closed polydisc of radius `r`.
    pub fn coeff_sum(&self, radius: f64) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| c.norm() * radius.powi(k.iter().sum::<u32>() as i32))
            .sum()
    }

    pub(crate) fn check_arity(&self, n: usize) -> Result<()> {
        if n != self.n_vars {
            return Err(Error::ArityMismatch {
                expected: self.n_vars,
                found: n,
            });
        }
        Ok(())
    }
}

/// Nested Horner evaluation over the lexicographically sorted support.
fn horner(terms: &[(&MultiIndex, Complex64)], var: usize, z: &[Complex64]) -> Complex64 {
    if var == z.len() {
        return terms.iter().map(|(_, c)| *c).sum();
    }
    let mut groups: Vec<(u32, Complex64)> = Vec::new();
    let mut start = 0;
    while start < terms.len() {
        let d = terms[start].0[var];
        let mut end = start + 1;
        while end < terms.len() && terms[end].0[var] == d {
            end += 1;
        }
        groups.push((d, horner(&terms[start..end], var + 1, z)));
        start = end;
    }
    let zv = z[var];
    let mut acc = ZERO;
    let mut prev = match groups.last() {
        Some(&(d, _)) => d,
        None => return ZERO,
    };
    for &(d, val) in groups.iter().rev() {
        acc = acc * zv.powu(prev - d) + val;
        prev = d;
    }
    acc * zv.powu(prev)
}

/// `f(z) = Σ c_k z^k`.
pub fn eval_scalar(f: &MultiPoly, z: &[Complex64]) -> Result<Complex64> {
    f.check_arity(z.len())?;
    let terms: Vec<(&MultiIndex, Complex64)> = f.terms.iter().map(|(k, c)| (k, *c)).collect();
    Ok(horner(&terms, 0, z))
}

/// Cached powers `X_j^p` for `p ≤ N_j`, each by binary exponentiation.
pub(crate) struct PowerTable {
    powers: Vec<Vec<CMatrix>>,
}

impl PowerTable {
    pub(crate) fn new(mats: &[CMatrix], degrees: &[u32]) -> Self {
        let powers = mats
            .iter()
            .zip(degrees)
            .map(|(m, &d)| (0..=d).map(|p| m.pow(p)).collect())
            .collect();
        Self { powers }
    }

    pub(crate) fn get(&self, j: usize, p: u32) -> &CMatrix {
        &self.powers[j][p as usize]
    }
}

pub(crate) fn eval_operator_mats(f: &MultiPoly, mats: &[CMatrix]) -> Result<CMatrix> {
    f.check_arity(mats.len())?;
    let dim = mats[0].dim();
    let table = PowerTable::new(mats, &f.degrees());
    let mut out = CMatrix::zeros(dim);
    for (k, c) in &f.terms {
        let mut prod: Option<CMatrix> = None;
        for (j, &e) in k.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let p = table.get(j, e);
            prod = Some(match prod {
                None => p.clone(),
                Some(acc) => &acc * p,
            });
        }
        match prod {
            Some(m) => out.axpy(*c, &m),
            None => out.axpy(*c, &CMatrix::identity(dim)),
        }
    }
    Ok(out)
}

/// `f(X) = Σ c_k X_1^{k_1}···X_n^{k_n}`.
pub fn eval_operator(f: &MultiPoly, tuple: &CommutingTuple) -> Result<CMatrix> {
    eval_operator_mats(f, tuple.mats())
}

fn falling_factorial(k: u32, o: u32) -> f64 {
    (0..o).map(|i| (k - i) as f64).product()
}

/// `∂^{order} f`, with `order[j]` derivatives in `z_j`.
pub fn partial_derivative(f: &MultiPoly, order: &[u32]) -> Result<MultiPoly> {
    f.check_arity(order.len())?;
    let mut out = MultiPoly::zero(f.n_vars);
    for (k, c) in &f.terms {
        if k.iter().zip(order).any(|(a, o)| a < o) {
            continue;
        }
        let scale: f64 = k.iter().zip(order).map(|(&a, &o)| falling_factorial(a, o)).product();
        let shifted = k.iter().zip(order).map(|(a, o)| a - o).collect();
        out.add_term(shifted, c * scale);
    }
    Ok(out)
}

/// The zero-constant antiderivative `g` with `∂^{order} g = f`.
pub fn antiderivative(f: &MultiPoly, order: &[u32]) -> Result<MultiPoly> {
    f.check_arity(order.len())?;
    let mut out = MultiPoly::zero(f.n_vars);
    for (k, c) in &f.terms {
        let raised: MultiIndex = k.iter().zip(order).map(|(a, o)| a + o).collect();
        let scale: f64 = raised
            .iter()
            .zip(order)
            .map(|(&a, &o)| falling_factorial(a, o))
            .product();
        out.add_term(raised, c / scale);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainShape {
    /// Unit circle in each variable.
    Torus,
    /// `[−1, 1]` in each variable.
    Cube,
}

/// Sampling domain `Ω^n` for sup-norm estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainKind {
    pub kind: DomainShape,
    pub grid_per_axis: usize,
    /// Torus radius / cube half-width; 1 for the unit polydisc.
    #[serde(default = "one")]
    pub radius: f64,
}

fn one() -> f64 {
    1.0
}

/// Refinement stops once a grid would exceed this many points.
pub const MAX_GRID_POINTS: usize = 1 << 24;
pub const MAX_GRID_PER_AXIS: usize = 512;
/// Starting grid size used by batch checks before any refinement.
pub const GRID_BUDGET: usize = 1 << 16;
/// Relative slack for grid-based inequality checks.
pub const GRID_SLACK: f64 = 1e-8;

impl DomainKind {
    pub fn torus() -> Self {
        Self {
            kind: DomainShape::Torus,
            grid_per_axis: 64,
            radius: 1.0,
        }
    }

    pub fn cube() -> Self {
        Self {
            kind: DomainShape::Cube,
            grid_per_axis: 65,
            radius: 1.0,
        }
    }

    pub fn with_grid(self, grid_per_axis: usize) -> Self {
        Self { grid_per_axis, ..self }
    }

    /// Sample points along one axis.
    pub fn axis_samples(&self) -> Vec<Complex64> {
        let g = self.grid_per_axis.max(1);
        match self.kind {
            DomainShape::Torus => (0..g)
                .map(|q| Complex64::from_polar(self.radius, 2.0 * PI * q as f64 / g as f64))
                .collect(),
            DomainShape::Cube if g == 1 => vec![ZERO],
            DomainShape::Cube => (0..g)
                .map(|q| Complex64::new(self.radius * (-1.0 + 2.0 * q as f64 / (g - 1) as f64), 0.0))
                .collect(),
        }
    }

    /// Next grid in the nested refinement sequence (torus `G → 2G`, cube `G → 2G − 1`).
    pub fn refined(&self) -> Self {
        let g = match self.kind {
            DomainShape::Torus => self.grid_per_axis * 2,
            DomainShape::Cube => self.grid_per_axis * 2 - 1,
        };
        self.with_grid(g)
    }

    /// Coarsens along the nested sequence until the tensor grid has at most
    /// [`GRID_BUDGET`] points.
    pub fn for_vars(self, n_vars: usize) -> Self {
        let mut d = self;
        while d.grid_per_axis > 4 && (d.grid_per_axis as f64).powi(n_vars as i32) > GRID_BUDGET as f64 {
            let g = match d.kind {
                DomainShape::Torus => d.grid_per_axis / 2,
                DomainShape::Cube => d.grid_per_axis.div_ceil(2),
            };
            d = d.with_grid(g);
        }
        d
    }

    fn can_refine(&self, n_vars: usize) -> bool {
        let next = self.refined().grid_per_axis;
        next <= MAX_GRID_PER_AXIS + 1 && (next as f64).powi(n_vars as i32) <= MAX_GRID_POINTS as f64
    }
}

/// Max of `|f|` over the tensor grid, by contracting one axis at a time.
fn grid_max(f: &MultiPoly, dom: &DomainKind) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    let n = f.n_vars;
    let samples = dom.axis_samples();
    let g = samples.len();
    let dims: Vec<usize> = f.degrees().iter().map(|&d| d as usize + 1).collect();

    // Dense coefficient tensor, row-major over (k_1, ..., k_n).
    let mut shape = dims.clone();
    let mut data = vec![ZERO; dims.iter().product()];
    for (k, c) in &f.terms {
        let mut idx = 0;
        for (j, &e) in k.iter().enumerate() {
            idx = idx * dims[j] + e as usize;
        }
        data[idx] = *c;
    }

    // Contract the leading axis into the grid, appending the sample axis at
    // the back, for every variable except the last.
    for _ in 0..n - 1 {
        let lead = shape[0];
        let rest: usize = shape[1..].iter().product();
        let mut next = vec![ZERO; rest * g];
        for r in 0..rest {
            for (q, z) in samples.iter().enumerate() {
                let mut acc = ZERO;
                for d in (0..lead).rev() {
                    acc = acc * z + data[d * rest + r];
                }
                next[r * g + q] = acc;
            }
        }
        shape.remove(0);
        shape.push(g);
        data = next;
    }

    let lead = shape[0];
    let rest: usize = shape[1..].iter().product();
    let mut best = 0.0_f64;
    for r in 0..rest {
        for z in &samples {
            let mut acc = ZERO;
            for d in (0..lead).rev() {
                acc = acc * z + data[d * rest + r];
            }
            best = best.max(acc.norm());
        }
    }
    best
}

/// Sup-norm bracket of a polynomial on `Ω^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    /// Max over the sample grid; a lower bound of the true sup.
    pub grid_sup: f64,
    /// `Σ |c_k| r^{|k|}`; an upper bound of the true sup.
    pub coeff_upper: f64,
}

pub fn sup_norm(f: &MultiPoly, dom: &DomainKind) -> SupNorm {
    SupNorm {
        grid_sup: grid_max(f, dom),
        coeff_upper: f.coeff_sum(dom.radius),
    }
}

/// Refines the grid until `value ≤ grid_sup·(1 + slack)` holds or the
/// refinement budget runs out. Returns the last sup and the grid used.
pub(crate) fn refine_until_dominates(f: &MultiPoly, dom: &DomainKind, value: f64, slack: f64) -> (SupNorm, DomainKind) {
    let mut d = *dom;
    let mut s = sup_norm(f, &d);
    while value > s.grid_sup * (1.0 + slack) && d.can_refine(f.n_vars) {
        d = d.refined();
        s = sup_norm(f, &d);
    }
    (s, d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum VonNeumannStatus {
    Holds,
    Violated,
    /// Inputs outside the hypotheses under which the inequality is guaranteed.
    Refused(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VonNeumannReport {
    pub status: VonNeumannStatus,
    pub op_norm: f64,
    pub grid_sup: f64,
    pub coeff_upper: f64,
    pub grid_per_axis: usize,
}

/// Checks `‖f(X)‖ ≤ ‖f‖_{L^∞(Ω^n)}` from both sides of the sup bracket.
pub fn von_neumann_check(f: &MultiPoly, tuple: &CommutingTuple, dom: &DomainKind) -> Result<VonNeumannReport> {
    let value = op_norm(&eval_operator(f, tuple)?);
    let refusal = if !tuple.is_commuting() {
        Some("tuple is not commuting")
    } else if !tuple.is_normal() {
        Some("tuple is not normal; the inequality needs a normal dilation")
    } else if !tuple.is_contraction() {
        Some("tuple is not contractive")
    } else if dom.kind == DomainShape::Cube && !tuple.is_self_adjoint() {
        Some("cube domain needs a self-adjoint tuple")
    } else {
        None
    };
    if let Some(reason) = refusal {
        let s = sup_norm(f, dom);
        return Ok(VonNeumannReport {
            status: VonNeumannStatus::Refused(reason.into()),
            op_norm: value,
            grid_sup: s.grid_sup,
            coeff_upper: s.coeff_upper,
            grid_per_axis: dom.grid_per_axis,
        });
    }
    let (s, used) = refine_until_dominates(f, dom, value, GRID_SLACK);
    let holds = value <= s.coeff_upper * (1.0 + GRID_SLACK) && value <= s.grid_sup * (1.0 + GRID_SLACK);
    Ok(VonNeumannReport {
        status: if holds {
            VonNeumannStatus::Holds
        } else {
            VonNeumannStatus::Violated
        },
        op_norm: value,
        grid_sup: s.grid_sup,
        coeff_upper: s.coeff_upper,
        grid_per_axis: used.grid_per_axis,
    })
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    k: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    n_vars: usize,
    terms: Vec<TermRepr>,
}

impl Serialize for MultiPoly {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PolyRepr {
            n_vars: self.n_vars,
            terms: self
                .terms
                .iter()
                .map(|(k, c)| TermRepr {
                    k: k.clone(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MultiPoly {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PolyRepr::deserialize(deserializer)?;
        if repr.n_vars == 0 {
            return Err(D::Error::custom("n_vars must be positive"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &repr.terms {
            if !seen.insert(t.k.clone()) {
                return Err(D::Error::custom(format!("duplicate multi-index {:?}", t.k)));
            }
        }
        MultiPoly::from_terms(
            repr.n_vars,
            repr.terms.into_iter().map(|t| (t.k, Complex64::new(t.re, t.im))),
        )
        .map_err(D::Error::custom)
    }
}
