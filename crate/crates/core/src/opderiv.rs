//! Higher-order derivatives of `t ↦ f(X(t))` along the linear path
//! `X_j(t) = A_j + tV_j`.
//!
//! The m-th derivative splits into terms `D_f^{j_1^{i_1},…,j_k^{i_k}}(t)`, one
//! per choice of coordinates `j_1 < … < j_k` and orders `i_l ≥ 1` with
//! `Σ i_l = m`, weighted by the multinomial `m!/(i_1!···i_k!)`. Within a term,
//! the coordinate-`j_l` factor of each monomial is the `i_l`-th derivative of
//! `X_{j_l}(s)^{k_{j_l}}`, given in closed form by [`power_derivative`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matcore::{CMatrix, PerturbationPath};
use crate::mpoly::{eval_operator_mats, MultiPoly};

/// Whether a computation ran inside the hypotheses of the trace theorems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Within,
    /// The formula was evaluated, but the inputs violate commutativity,
    /// normality or contractivity.
    Outside,
}

impl Hypothesis {
    pub fn from_flag(ok: bool) -> Self {
        if ok {
            Hypothesis::Within
        } else {
            Hypothesis::Outside
        }
    }

    pub fn is_within(self) -> bool {
        self == Hypothesis::Within
    }
}

/// A value tagged with the hypothesis status of its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagged<T> {
    pub value: T,
    pub hypothesis: Hypothesis,
}

/// Descriptor `(j_1^{i_1}, …, j_k^{i_k})` of one derivative term. Coordinates
/// are stored 0-based; the text form `"1^2,3^1"` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DerivTermSpec {
    coords: Vec<(usize, u32)>,
}

impl DerivTermSpec {
    pub fn new(coords: Vec<(usize, u32)>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Structural(
                "derivative term needs at least one coordinate".into(),
            ));
        }
        if let Some((j, _)) = coords.iter().find(|(_, i)| *i == 0) {
            return Err(Error::Structural(format!("order at coordinate {} must be ≥ 1", j + 1)));
        }
        for w in coords.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Structural(format!(
                    "coordinates must be strictly increasing, got {} then {}",
                    w[0].0 + 1,
                    w[1].0 + 1
                )));
            }
        }
        Ok(Self { coords })
    }

    /// The single-coordinate term `j^m`.
    pub fn single(j: usize, m: u32) -> Result<Self> {
        Self::new(vec![(j, m)])
    }

    pub fn coords(&self) -> &[(usize, u32)] {
        &self.coords
    }

    /// Total order `m`.
    pub fn order(&self) -> u32 {
        self.coords.iter().map(|(_, i)| i).sum()
    }

    /// `m!/(i_1!···i_k!)`.
    pub fn multinomial(&self) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(self.order()) / self.coords.iter().map(|&(_, i)| fact(i)).product::<f64>()
    }

    /// Derivative multi-index over `n_vars` variables.
    pub fn orders(&self, n_vars: usize) -> Result<Vec<u32>> {
        let mut out = vec![0; n_vars];
        for &(j, i) in &self.coords {
            if j >= n_vars {
                return Err(Error::Structural(format!(
                    "term coordinate {} out of range for {} variables",
                    j + 1,
                    n_vars
                )));
            }
            out[j] = i;
        }
        Ok(out)
    }
}

impl fmt::Display for DerivTermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, (j, i)) in self.coords.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}^{}", j + 1, i)?;
        }
        Ok(())
    }
}

/// Grammar: comma-separated `j^i` with `j ≥ 1` strictly increasing and `i ≥ 1`.
pub const TERM_GRAMMAR: &str = "term := pair (',' pair)*   pair := j '^' i   (j ≥ 1 strictly increasing, i ≥ 1)";

impl FromStr for DerivTermSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(Error::Parse(format!("empty term; {TERM_GRAMMAR}")));
        }
        let mut coords = Vec::new();
        for pair in compact.split(',') {
            let (j, i) = pair
                .split_once('^')
                .ok_or_else(|| Error::Parse(format!("`{pair}` is not of the form j^i; {TERM_GRAMMAR}")))?;
            let j: usize = j
                .parse()
                .map_err(|_| Error::Parse(format!("bad coordinate `{j}`; {TERM_GRAMMAR}")))?;
            let i: u32 = i
                .parse()
                .map_err(|_| Error::Parse(format!("bad order `{i}`; {TERM_GRAMMAR}")))?;
            if j == 0 {
                return Err(Error::Parse(format!("coordinates are 1-based; {TERM_GRAMMAR}")));
            }
            coords.push((j - 1, i));
        }
        Self::new(coords).map_err(|e| Error::Parse(format!("{e}; {TERM_GRAMMAR}")))
    }
}

impl Serialize for DerivTermSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[u64; 2]> = self.coords.iter().map(|&(j, i)| [j as u64 + 1, i as u64]).collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DerivTermSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let pairs = Vec::<[u64; 2]>::deserialize(deserializer)?;
        if pairs.iter().any(|p| p[0] == 0) {
            return Err(D::Error::custom("coordinates are 1-based"));
        }
        Self::new(pairs.iter().map(|p| (p[0] as usize - 1, p[1] as u32)).collect()).map_err(D::Error::custom)
    }
}

/// A weak composition: non-negative parts with a fixed sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composition {
    pub parts: Vec<u32>,
}

/// Weak compositions of `total` into `parts` parts, ascending lexicographically.
#[derive(Debug, Clone)]
pub struct Compositions {
    next: Option<Vec<u32>>,
}

impl Iterator for Compositions {
    type Item = Composition;

    fn next(&mut self) -> Option<Composition> {
        let current = self.next.take()?;
        // Move one unit from the tail into the position just left of the
        // last nonzero part, and put the remaining tail mass at the end.
        if let Some(last) = current.iter().rposition(|&x| x > 0).filter(|&q| q > 0) {
            let p = last - 1;
            let rest: u32 = current[p + 1..].iter().sum();
            let mut succ = current.clone();
            succ[p] += 1;
            for x in &mut succ[p + 1..] {
                *x = 0;
            }
            let end = succ.len() - 1;
            succ[end] = rest - 1;
            self.next = Some(succ);
        }
        Some(Composition { parts: current })
    }
}

/// All `C(total + parts − 1, parts − 1)` weak compositions.
pub fn compositions(total: u32, parts: usize) -> Compositions {
    assert!(parts >= 1, "compositions need at least one part");
    let mut first = vec![0; parts];
    first[parts - 1] = total;
    Compositions { next: Some(first) }
}

/// Every term of the m-th derivative in `n` variables: increasing `k`, then
/// lexicographic coordinates, then lexicographic orders.
pub fn enumerate_terms(n_vars: usize, m: u32) -> Vec<DerivTermSpec> {
    let mut out = Vec::new();
    for k in 1..=(m as usize).min(n_vars) {
        for js in combinations(n_vars, k) {
            for comp in compositions(m - k as u32, k) {
                let coords = js.iter().zip(&comp.parts).map(|(&j, &p)| (j, p + 1)).collect();
                out.push(DerivTermSpec { coords });
            }
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// `d^n/ds^n (X + sV)^p` at `s = 0` from the powers `X^0..X^{p−n}`.
fn power_derivative_from(powers: &[CMatrix], v: &CMatrix, p: u32, n: u32) -> CMatrix {
    let dim = v.dim();
    if n > p {
        return CMatrix::zeros(dim);
    }
    if n == 0 {
        return powers[p as usize].clone();
    }
    let mut out = CMatrix::zeros(dim);
    for comp in compositions(p - n, n as usize + 1) {
        let mut prod = powers[comp.parts[0] as usize].clone();
        for &q in &comp.parts[1..] {
            prod = &prod * v;
            if q > 0 {
                prod = &prod * &powers[q as usize];
            }
        }
        out.axpy(Complex64::new(1.0, 0.0), &prod);
    }
    let fact: f64 = (1..=n).map(f64::from).product();
    out.scale_real(fact)
}

/// `d^n/ds^n|_{s=t} (H + sV)^p
///   = n!·Σ_{p_0+…+p_n = p−n} (H+tV)^{p_0} V (H+tV)^{p_1} V ··· V (H+tV)^{p_n}`,
/// and the zero matrix when `n > p`.
pub fn power_derivative(h: &CMatrix, v: &CMatrix, p: u32, n: u32, t: f64) -> Result<CMatrix> {
    if h.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: v.dim(),
        });
    }
    if n > p {
        return Ok(CMatrix::zeros(h.dim()));
    }
    let mut x = h.clone();
    x.axpy(Complex64::new(t, 0.0), v);
    let powers: Vec<CMatrix> = (0..=p - n).map(|q| x.pow(q)).collect();
    Ok(power_derivative_from(&powers, v, p, n))
}

/// Powers of `X_j(t)` and memoised power derivatives at a fixed `t`.
pub(crate) struct PathEval<'a> {
    v: &'a [CMatrix],
    powers: Vec<Vec<CMatrix>>,
    derivs: HashMap<(usize, u32, u32), CMatrix>,
}

impl<'a> PathEval<'a> {
    pub(crate) fn new(path: &'a PerturbationPath, degrees: &[u32], t: f64) -> Self {
        let xs = path.at(t);
        let powers = xs
            .iter()
            .zip(degrees)
            .map(|(x, &d)| (0..=d).map(|p| x.pow(p)).collect())
            .collect();
        Self {
            v: path.v(),
            powers,
            derivs: HashMap::new(),
        }
    }

    fn power(&self, j: usize, p: u32) -> &CMatrix {
        &self.powers[j][p as usize]
    }

    fn ensure_deriv(&mut self, j: usize, p: u32, i: u32) {
        if !self.derivs.contains_key(&(j, p, i)) {
            let d = power_derivative_from(&self.powers[j], &self.v[j], p, i);
            self.derivs.insert((j, p, i), d);
        }
    }

    /// Prepares every factor a term needs so evaluation can borrow immutably.
    pub(crate) fn prepare(&mut self, f: &MultiPoly, term: &DerivTermSpec) {
        for (k, _) in f.terms() {
            if term.coords.iter().all(|&(j, i)| k[j] >= i) {
                for &(j, i) in &term.coords {
                    self.ensure_deriv(j, k[j], i);
                }
            }
        }
    }

    pub(crate) fn d_term(&self, f: &MultiPoly, term: &DerivTermSpec) -> CMatrix {
        let dim = self.v[0].dim();
        let mut order = vec![0u32; f.n_vars()];
        for &(j, i) in &term.coords {
            order[j] = i;
        }
        let mut out = CMatrix::zeros(dim);
        for (k, c) in f.terms() {
            if k.iter().zip(&order).any(|(a, o)| a < o) {
                continue;
            }
            let mut prod: Option<CMatrix> = None;
            for (j, (&e, &o)) in k.iter().zip(&order).enumerate() {
                let factor = if o > 0 {
                    &self.derivs[&(j, e, o)]
                } else if e > 0 {
                    self.power(j, e)
                } else {
                    continue;
                };
                prod = Some(match prod {
                    None => factor.clone(),
                    Some(acc) => &acc * factor,
                });
            }
            let prod = prod.unwrap_or_else(|| CMatrix::identity(dim));
            out.axpy(*c, &prod);
        }
        out
    }
}

fn check_inputs(f: &MultiPoly, path: &PerturbationPath) -> Result<()> {
    f.check_arity(path.n())
}

/// `D_f^{j_1^{i_1},…,j_k^{i_k}}(t)`: for each monomial, the ordered product
/// over coordinates where coordinate `j_l` contributes
/// `d^{i_l}/ds^{i_l} X_{j_l}(s)^{k_{j_l}}` and the others `X_j(t)^{k_j}`.
pub fn d_term(f: &MultiPoly, path: &PerturbationPath, term: &DerivTermSpec, t: f64) -> Result<Tagged<CMatrix>> {
    check_inputs(f, path)?;
    term.orders(f.n_vars())?;
    let mut eval = PathEval::new(path, &f.degrees(), t);
    eval.prepare(f, term);
    Ok(Tagged {
        value: eval.d_term(f, term),
        hypothesis: Hypothesis::from_flag(path.path_valid()),
    })
}

/// Pairwise tree sum with a shape fixed by the input length.
pub(crate) fn tree_sum(mut items: Vec<CMatrix>, dim: usize) -> CMatrix {
    if items.is_empty() {
        return CMatrix::zeros(dim);
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(&a + &b),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop().expect("non-empty")
}

/// Scalar counterpart of [`tree_sum`].
pub(crate) fn tree_sum_scalars(mut items: Vec<Complex64>) -> Complex64 {
    if items.is_empty() {
        return Complex64::new(0.0, 0.0);
    }
    while items.len() > 1 {
        items = items.chunks(2).map(|p| p.iter().sum()).collect();
    }
    items[0]
}

pub(crate) fn full_derivative_raw(f: &MultiPoly, path: &PerturbationPath, m: u32, t: f64) -> Result<CMatrix> {
    check_inputs(f, path)?;
    if m == 0 {
        return eval_operator_mats(f, &path.at(t));
    }
    let terms = enumerate_terms(f.n_vars(), m);
    let mut eval = PathEval::new(path, &f.degrees(), t);
    for term in &terms {
        eval.prepare(f, term);
    }
    let parts: Vec<CMatrix> = terms
        .par_iter()
        .map(|term| eval.d_term(f, term).scale_real(term.multinomial()))
        .collect();
    Ok(tree_sum(parts, path.dim()))
}

/// `d^m/ds^m|_{s=t} f(X(s)) = Σ_terms m!/(i_1!···i_k!)·D_f^{term}(t)`.
/// `m = 0` gives `f(X(t))`.
pub fn full_derivative(f: &MultiPoly, path: &PerturbationPath, m: u32, t: f64) -> Result<Tagged<CMatrix>> {
    Ok(Tagged {
        value: full_derivative_raw(f, path, m, t)?,
        hypothesis: Hypothesis::from_flag(path.path_valid()),
    })
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Σ_j (−1)^j C(m, j) F(t + (m/2 − j)h) / h^m`.
pub fn central_difference(family: impl Fn(f64) -> CMatrix, m: u32, t: f64, h: f64) -> CMatrix {
    let samples: Vec<CMatrix> = (0..=m).map(|j| family(t + (m as f64 / 2.0 - j as f64) * h)).collect();
    let dim = samples[0].dim();
    let mut out = CMatrix::zeros(dim);
    for (j, s) in samples.iter().enumerate() {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        out.axpy(Complex64::new(sign * binomial(m, j as u32), 0.0), s);
    }
    out.scale_real(h.powi(-(m as i32)))
}

/// m-th central difference of `t ↦ f(X(t))`.
pub fn finite_difference(f: &MultiPoly, path: &PerturbationPath, m: u32, t: f64, h: f64) -> Result<CMatrix> {
    check_inputs(f, path)?;
    Ok(central_difference(
        |s| eval_operator_mats(f, &path.at(s)).expect("arity checked"),
        m,
        t,
        h,
    ))
}

/// One Richardson step on [`finite_difference`]: `(4·D(h/2) − D(h))/3`,
/// which cancels the `h²` error term.
pub fn extrapolated_difference(f: &MultiPoly, path: &PerturbationPath, m: u32, t: f64, h: f64) -> Result<CMatrix> {
    let coarse = finite_difference(f, path, m, t, h)?;
    let fine = finite_difference(f, path, m, t, h / 2.0)?;
    let mut out = fine.scale_real(4.0 / 3.0);
    out.axpy(Complex64::new(-1.0 / 3.0, 0.0), &coarse);
    Ok(out)
}

/// Step sizes for central differences of order `m`.
pub fn default_step(m: u32) -> f64 {
    match m {
        0..=2 => 1e-2,
        3 => 3e-2,
        _ => 5e-2,
    }
}
