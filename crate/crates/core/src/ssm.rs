//! Linear functionals standing in for the higher-order spectral shift
//! measures.
//!
//! For a term `j_1^{i_1},…,j_k^{i_k}` of order `m`,
//! `φ(∂^{term} f) = ∫_0^1 (1−t)^{m−1}/(m−1)! · tr D_f^{term}(t) dt`.
//! It only depends on `∂^{term} f` since `D_f^{term}` vanishes whenever that
//! derivative does, so `φ(g)` is evaluated with `f` any antiderivative of `g`.
//! Any representing measure has these values as its moments; no measure is
//! reconstructed.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::hs_factor;
use crate::matcore::{PerturbationPath, Tolerances};
use crate::mpoly::{antiderivative, partial_derivative, DomainKind, MultiIndex, MultiPoly, GRID_SLACK};
use crate::opderiv::{enumerate_terms, tree_sum_scalars, DerivTermSpec, Hypothesis, PathEval, Tagged};
use crate::quadrature::{gauss_legendre_unit, nodes_for_degree};
use crate::remainder::{taylor_remainder, taylor_weight};

/// `φ_{term}` on polynomials whose per-variable degrees stay below a fixed
/// bound, with the path powers cached at the quadrature nodes.
pub struct SsmFunctional<'a> {
    term: DerivTermSpec,
    path: &'a PerturbationPath,
    orders: Vec<u32>,
    max_degree: Vec<u32>,
    rule: Vec<(f64, f64)>,
    evals: Vec<PathEval<'a>>,
}

impl<'a> SsmFunctional<'a> {
    /// Exact for every `g` with `deg_j g ≤ max_degree[j]`.
    pub fn new(term: &DerivTermSpec, path: &'a PerturbationPath, max_degree: &[u32]) -> Result<Self> {
        if max_degree.len() != path.n() {
            return Err(Error::ArityMismatch {
                expected: path.n(),
                found: max_degree.len(),
            });
        }
        let orders = term.orders(path.n())?;
        let lifted: Vec<u32> = max_degree.iter().zip(&orders).map(|(d, o)| d + o).collect();
        let total: u32 = lifted.iter().sum();
        let rule = gauss_legendre_unit(nodes_for_degree(total));
        let evals = rule.iter().map(|&(t, _)| PathEval::new(path, &lifted, t)).collect();
        Ok(Self {
            term: term.clone(),
            path,
            orders,
            max_degree: max_degree.to_vec(),
            rule,
            evals,
        })
    }

    pub fn term(&self) -> &DerivTermSpec {
        &self.term
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.rule.len()
    }

    /// `(1/m!)·Π ‖V_{j_l}‖_2^{i_l}`.
    pub fn tv_bound(&self) -> f64 {
        let fact: f64 = (1..=self.term.order()).map(f64::from).product();
        hs_factor(self.path, &self.term) / fact
    }

    fn lift(&self, g: &MultiPoly) -> Result<MultiPoly> {
        g.check_arity(self.path.n())?;
        if g.degrees().iter().zip(&self.max_degree).any(|(d, cap)| d > cap) {
            return Err(Error::Domain(format!(
                "degrees {:?} exceed the functional's bound {:?}",
                g.degrees(),
                self.max_degree
            )));
        }
        antiderivative(g, &self.orders)
    }

    /// Prepares the cached factors for `f` at every node.
    fn prepare(&mut self, f: &MultiPoly) {
        for e in &mut self.evals {
            e.prepare(f, &self.term);
        }
    }

    fn integrate(&self, f: &MultiPoly) -> Complex64 {
        let m = self.term.order();
        let parts: Vec<Complex64> = self
            .rule
            .iter()
            .zip(&self.evals)
            .map(|(&(t, w), e)| e.d_term(f, &self.term).trace() * (w * taylor_weight(m, t)))
            .collect();
        tree_sum_scalars(parts)
    }

    pub fn eval(&mut self, g: &MultiPoly) -> Result<Complex64> {
        let f = self.lift(g)?;
        self.prepare(&f);
        Ok(self.integrate(&f))
    }

    /// `φ(z^a)` for every listed exponent, in parallel.
    pub fn eval_monomials(&mut self, exps: &[MultiIndex]) -> Result<Vec<Complex64>> {
        let lifted: Vec<MultiPoly> = exps
            .iter()
            .map(|a| self.lift(&MultiPoly::monomial(a.clone(), Complex64::new(1.0, 0.0))))
            .collect::<Result<_>>()?;
        for f in &lifted {
            self.prepare(f);
        }
        let this = &*self;
        Ok(lifted.par_iter().map(|f| this.integrate(f)).collect())
    }
}

/// `φ_{term}(g)` along `path`.
pub fn phi(term: &DerivTermSpec, g: &MultiPoly, path: &PerturbationPath) -> Result<Tagged<Complex64>> {
    g.check_arity(path.n())?;
    let mut func = SsmFunctional::new(term, path, &g.degrees())?;
    Ok(Tagged {
        value: func.eval(g)?,
        hypothesis: Hypothesis::from_flag(path.in_hypothesis()),
    })
}

/// Values `φ_{term}(z^a)` for all `a ≤ max_degree` componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MomentTableJson", try_from = "MomentTableJson")]
pub struct MomentTable {
    pub term: DerivTermSpec,
    pub m: u32,
    pub tv_bound: f64,
    pub entries: BTreeMap<MultiIndex, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct MomentEntryJson {
    a: MultiIndex,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct MomentTableJson {
    term: DerivTermSpec,
    m: u32,
    tv_bound: f64,
    entries: Vec<MomentEntryJson>,
}

impl From<MomentTable> for MomentTableJson {
    fn from(t: MomentTable) -> Self {
        Self {
            term: t.term,
            m: t.m,
            tv_bound: t.tv_bound,
            entries: t
                .entries
                .into_iter()
                .map(|(a, c)| MomentEntryJson { a, re: c.re, im: c.im })
                .collect(),
        }
    }
}

impl TryFrom<MomentTableJson> for MomentTable {
    type Error = Error;

    fn try_from(j: MomentTableJson) -> Result<Self> {
        if j.term.order() != j.m {
            return Err(Error::Parse(format!(
                "term {} has order {}, not {}",
                j.term,
                j.term.order(),
                j.m
            )));
        }
        let mut entries = BTreeMap::new();
        for e in j.entries {
            if entries.insert(e.a.clone(), Complex64::new(e.re, e.im)).is_some() {
                return Err(Error::Parse(format!("duplicate moment {:?}", e.a)));
            }
        }
        Ok(Self {
            term: j.term,
            m: j.m,
            tv_bound: j.tv_bound,
            entries,
        })
    }
}

/// Default moment range: degree 4 in every variable.
pub const DEFAULT_MOMENT_DEGREE: u32 = 4;

fn box_indices(max_degree: &[u32]) -> Vec<MultiIndex> {
    let mut out = vec![Vec::new()];
    for &d in max_degree {
        out = out
            .into_iter()
            .flat_map(|prefix: MultiIndex| {
                (0..=d).map(move |e| {
                    let mut k = prefix.clone();
                    k.push(e);
                    k
                })
            })
            .collect();
    }
    out
}

pub fn moment_table(term: &DerivTermSpec, path: &PerturbationPath, max_degree: &[u32]) -> Result<MomentTable> {
    let mut func = SsmFunctional::new(term, path, max_degree)?;
    let exps = box_indices(max_degree);
    let values = func.eval_monomials(&exps)?;
    Ok(MomentTable {
        term: term.clone(),
        m: term.order(),
        tv_bound: func.tv_bound(),
        entries: exps.into_iter().zip(values).collect(),
    })
}

impl MomentTable {
    pub fn max_abs_entry(&self) -> f64 {
        self.entries.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvAudit {
    pub entries: usize,
    pub violations: usize,
    /// Largest `|φ(z^a)| / (tv_bound · sup|z^a|)`.
    pub max_ratio: f64,
}

/// Checks `|φ(z^a)| ≤ tv_bound · sup_{Ω^n} |z^a|` for every entry.
pub fn tv_audit(table: &MomentTable, dom: &DomainKind) -> TvAudit {
    let mut violations = 0;
    let mut max_ratio = 0.0_f64;
    for (a, c) in &table.entries {
        let size: u32 = a.iter().sum();
        let bound = table.tv_bound * dom.radius.powi(size as i32);
        if c.norm() > bound * (1.0 + GRID_SLACK) {
            violations += 1;
        }
        if c.norm() > 0.0 {
            max_ratio = max_ratio.max(if bound > 0.0 { c.norm() / bound } else { f64::INFINITY });
        }
    }
    TvAudit {
        entries: table.entries.len(),
        violations,
        max_ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFormulaReport {
    pub m: u32,
    /// Trace of the Taylor remainder.
    pub lhs: Complex64,
    /// `Σ_terms m!/(i_1!···i_k!)·φ_{term}(∂^{term} f)`.
    pub rhs: Complex64,
    pub abs_gap: f64,
    pub terms: usize,
    pub tol: f64,
    pub passed: bool,
    pub hypothesis: Hypothesis,
}

/// Compares the remainder trace with the sum of functionals over all terms.
pub fn trace_formula_check(f: &MultiPoly, path: &PerturbationPath, m: u32, tol: f64) -> Result<TraceFormulaReport> {
    if m < 1 {
        return Err(Error::Domain("trace formula needs m ≥ 1".into()));
    }
    f.check_arity(path.n())?;
    let lhs = taylor_remainder(f, path, m)?.value.trace();
    let terms = enumerate_terms(f.n_vars(), m);
    let parts: Vec<Complex64> = terms
        .iter()
        .map(|term| {
            let g = partial_derivative(f, &term.orders(f.n_vars())?)?;
            if g.is_zero() {
                return Ok(Complex64::new(0.0, 0.0));
            }
            Ok(phi(term, &g, path)?.value * term.multinomial())
        })
        .collect::<Result<_>>()?;
    let rhs = tree_sum_scalars(parts);
    let abs_gap = (lhs - rhs).norm();
    Ok(TraceFormulaReport {
        m,
        lhs,
        rhs,
        abs_gap,
        terms: terms.len(),
        tol,
        passed: abs_gap <= tol * (1.0 + lhs.norm()),
        hypothesis: Hypothesis::from_flag(path.in_hypothesis()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub coordinate: usize,
    pub m: u32,
    /// `φ_{j^m}(g)` on the full path.
    pub functional: Complex64,
    /// Remainder trace of `F(A_j + sV_j)` with `F^{(m)} = g`.
    pub remainder: Complex64,
    pub abs_gap: f64,
    pub tol: f64,
    pub passed: bool,
}

/// `φ_{j^m}(g)` against the one-variable remainder trace of an `m`-fold
/// antiderivative of `g`, the latter computed on the path `(A_j, B_j)` alone.
pub fn single_variable_reduction(
    g: &MultiPoly,
    j: usize,
    m: u32,
    path: &PerturbationPath,
    tol: f64,
) -> Result<ReductionReport> {
    if g.n_vars() != 1 {
        return Err(Error::ArityMismatch {
            expected: 1,
            found: g.n_vars(),
        });
    }
    if m == 0 {
        return Err(Error::Domain("reduction needs m ≥ 1".into()));
    }
    let term = DerivTermSpec::single(j, m)?;
    let lifted = g.embed_univariate(j, path.n())?;
    let functional = phi(&term, &lifted, path)?.value;

    let big_f = antiderivative(g, &[m])?;
    let coord = path.coordinate(j, &Tolerances::default())?;
    let remainder = taylor_remainder(&big_f, &coord, m)?.value.trace();
    let abs_gap = (functional - remainder).norm();
    Ok(ReductionReport {
        coordinate: j,
        m,
        functional,
        remainder,
        abs_gap,
        tol,
        passed: abs_gap <= tol * (1.0 + remainder.norm()),
    })
}
