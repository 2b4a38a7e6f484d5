//! Per-term trace estimates
//! `|tr D_f^{term}(t)| ≤ Π ‖V_{j_l}‖_2^{i_l} · ‖∂^{term} f‖_{L∞(Ω^n)}`
//! and the Hilbert–Schmidt block bound behind them.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{
    adversarial_path, draw_function, draw_path, draw_seed, AdversarialKind, EnsembleKind, EnsembleSpec, FunctionSpec,
};
use crate::error::{Error, Result};
use crate::matcore::{certify_tuple, CMatrix, PerturbationPath, Tolerances};
use crate::mpoly::{
    partial_derivative, refine_until_dominates, sup_norm, DomainKind, DomainShape, MultiPoly, SupNorm, GRID_SLACK,
};
use crate::opderiv::{enumerate_terms, DerivTermSpec, Hypothesis, PathEval};

/// Relative slack of the sound check. Equality is attained (e.g. `f = z²`
/// with a diagonal `V`), so the comparison has to absorb rounding.
pub const SOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub term: DerivTermSpec,
    pub m: u32,
    pub t: f64,
    /// `|tr D_f^{term}(t)|`.
    pub lhs: f64,
    /// `Π ‖V_{j_l}‖_2^{i_l}`.
    pub rhs_factor: f64,
    pub sup: SupNorm,
    /// Grid resolution at which the strict check was decided.
    pub grid_per_axis: usize,
    pub pass_strict: bool,
    pub pass_sound: bool,
    pub hypothesis: Hypothesis,
}

impl EstimateReport {
    /// `lhs / (rhs_factor · grid_sup)`, 0 when both sides vanish.
    pub fn ratio(&self) -> f64 {
        ratio(self.lhs, self.rhs_factor * self.sup.grid_sup)
    }

    /// `lhs / (rhs_factor · coeff_upper)`.
    pub fn sound_ratio(&self) -> f64 {
        ratio(self.lhs, self.rhs_factor * self.sup.coeff_upper)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// `Π ‖V_{j_l}‖_2^{i_l}`.
pub fn hs_factor(path: &PerturbationPath, term: &DerivTermSpec) -> f64 {
    term.coords()
        .iter()
        .map(|&(j, i)| path.v()[j].frobenius().powi(i as i32))
        .product()
}

/// Whether `X(t)` is a commuting tuple of normal contractions, and
/// self-adjoint when the domain is the cube.
pub fn hypothesis_at(path: &PerturbationPath, t: f64, dom: &DomainKind) -> Hypothesis {
    let tol = Tolerances::default();
    let ok = match certify_tuple(path.at(t), tol.ctol, tol.ntol) {
        Ok(x) => {
            x.is_commuting()
                && x.is_normal()
                && x.is_contraction()
                && (dom.kind == DomainShape::Torus || x.is_self_adjoint())
        }
        Err(_) => false,
    };
    Hypothesis::from_flag(ok && path.path_valid())
}

fn decide(
    term: &DerivTermSpec,
    t: f64,
    lhs: f64,
    rhs_factor: f64,
    (g, base): (&MultiPoly, SupNorm),
    dom: &DomainKind,
    hypothesis: Hypothesis,
) -> EstimateReport {
    let pass_sound = lhs <= rhs_factor * base.coeff_upper * (1.0 + SOUND_SLACK);
    let (sup, grid) = if lhs <= rhs_factor * base.grid_sup * (1.0 + GRID_SLACK) || rhs_factor == 0.0 {
        (base, *dom)
    } else {
        refine_until_dominates(g, dom, lhs / rhs_factor, GRID_SLACK)
    };
    EstimateReport {
        term: term.clone(),
        m: term.order(),
        t,
        lhs,
        rhs_factor,
        sup,
        grid_per_axis: grid.grid_per_axis,
        pass_strict: lhs <= rhs_factor * sup.grid_sup * (1.0 + GRID_SLACK),
        pass_sound,
        hypothesis,
    }
}

/// Both sides of the estimate for one term at one `t`. The strict check
/// refines the sup grid before it is declared failed; inputs outside the
/// hypotheses are still evaluated and flagged.
pub fn trace_estimate_check(
    f: &MultiPoly,
    path: &PerturbationPath,
    term: &DerivTermSpec,
    t: f64,
    dom: &DomainKind,
) -> Result<EstimateReport> {
    f.check_arity(path.n())?;
    let orders = term.orders(f.n_vars())?;
    let g = partial_derivative(f, &orders)?;
    let base = sup_norm(&g, dom);
    let lhs = crate::opderiv::d_term(f, path, term, t)?.value.trace().norm();
    Ok(decide(
        term,
        t,
        lhs,
        hs_factor(path, term),
        (&g, base),
        dom,
        hypothesis_at(path, t, dom),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsBlockReport {
    pub m: usize,
    /// `Σ |tr(E_1 V_1 ··· E_m V_m)|` over all block tuples.
    pub lhs: f64,
    /// `Π ‖V_j‖_2`.
    pub rhs: f64,
    pub tuples: usize,
    pub passed: bool,
}

const RESOLUTION_TOL: f64 = 1e-10;

fn check_resolution(family: &[CMatrix], dim: usize) -> Result<()> {
    if family.is_empty() {
        return Err(Error::Structural("empty projector family".into()));
    }
    let mut sum = CMatrix::zeros(dim);
    for (a, p) in family.iter().enumerate() {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        if (p - &p.adjoint()).op_norm() > RESOLUTION_TOL {
            return Err(Error::Structural(format!("block {a} is not self-adjoint")));
        }
        for q in &family[a..] {
            let prod = p * q;
            let target = if std::ptr::eq(p, q) {
                p.clone()
            } else {
                CMatrix::zeros(dim)
            };
            if (&prod - &target).op_norm() > RESOLUTION_TOL {
                return Err(Error::Structural(format!(
                    "block {a} is not an orthogonal projector of the family"
                )));
            }
        }
        sum = &sum + p;
    }
    if (&sum - &CMatrix::identity(dim)).op_norm() > RESOLUTION_TOL {
        return Err(Error::Structural("projectors do not sum to the identity".into()));
    }
    Ok(())
}

/// Checks `Σ_{blocks} |tr(E_1(δ_1)V_1 ··· E_m(δ_m)V_m)| ≤ Π ‖V_j‖_2` for one
/// resolution of the identity per factor.
pub fn hs_block_bound_check(partitions: &[Vec<CMatrix>], v: &[CMatrix]) -> Result<HsBlockReport> {
    let m = v.len();
    if m < 2 {
        return Err(Error::Domain("block bound needs at least two perturbations".into()));
    }
    if partitions.len() != m {
        return Err(Error::ArityMismatch {
            expected: m,
            found: partitions.len(),
        });
    }
    let dim = v[0].dim();
    for x in v {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.dim(),
            });
        }
    }
    for family in partitions {
        check_resolution(family, dim)?;
    }
    let factors: Vec<Vec<CMatrix>> = partitions
        .iter()
        .zip(v)
        .map(|(family, x)| family.iter().map(|e| e * x).collect())
        .collect();

    fn walk(level: usize, prefix: &CMatrix, factors: &[Vec<CMatrix>], acc: &mut f64, count: &mut usize) {
        if level == factors.len() {
            *acc += prefix.trace().norm();
            *count += 1;
            return;
        }
        for f in &factors[level] {
            walk(level + 1, &(prefix * f), factors, acc, count);
        }
    }
    let mut lhs = 0.0;
    let mut tuples = 0;
    for first in &factors[0] {
        walk(1, first, &factors, &mut lhs, &mut tuples);
    }
    let rhs: f64 = v.iter().map(CMatrix::frobenius).product();
    Ok(HsBlockReport {
        m,
        lhs,
        rhs,
        tuples,
        passed: lhs <= rhs * (1.0 + SOUND_SLACK),
    })
}

/// Ensemble template of a sweep; the seed comes from the draw index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTemplate {
    pub kind: EnsembleKind,
    pub n: usize,
    pub dim: usize,
    pub v_scale: f64,
}

impl EnsembleTemplate {
    pub fn spec(&self, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            kind: self.kind,
            n: self.n,
            dim: self.dim,
            v_scale: self.v_scale,
            seed,
        }
    }

    pub fn domain(&self) -> DomainKind {
        let base = if self.kind.is_self_adjoint() {
            DomainKind::cube()
        } else {
            DomainKind::torus()
        };
        base.for_vars(self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub seed: u64,
    pub draws: usize,
    pub ensembles: Vec<EnsembleTemplate>,
    /// Out-of-hypothesis probes, one per draw, sized like the first template.
    pub adversarial: Vec<AdversarialKind>,
    pub m_values: Vec<u32>,
    /// Largest number of distinct coordinates in a term.
    pub max_k: usize,
    pub t_grid: Vec<f64>,
    pub max_total_degree: u32,
    pub coeff_scale: f64,
    /// Only `m = 2` is theorem-backed for a general trace.
    pub general_trace: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            draws: 10,
            ensembles: EnsembleKind::ALL
                .iter()
                .map(|&kind| EnsembleTemplate {
                    kind,
                    n: 3,
                    dim: 6,
                    v_scale: 0.5,
                })
                .collect(),
            adversarial: Vec::new(),
            m_values: vec![2, 3, 4],
            max_k: 3,
            t_grid: vec![0.0, 0.5, 1.0],
            max_total_degree: 5,
            coeff_scale: 1.0,
            general_trace: false,
        }
    }
}

impl SweepConfig {
    pub fn empty() -> Self {
        Self {
            draws: 0,
            ensembles: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_values.iter().any(|&m| !(1..=6).contains(&m)) {
            return Err(Error::Domain("m values must lie in [1, 6]".into()));
        }
        if self.t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Domain("t grid must lie in [0, 1]".into()));
        }
        if !(self.coeff_scale.is_finite() && self.coeff_scale > 0.0) {
            return Err(Error::Domain("coeff_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Where a case sits relative to the theorem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseClass {
    Backed,
    /// In hypothesis, but `m > 2` under a general trace.
    Unbacked,
    OutOfHypothesis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub seed: u64,
    pub ensemble: String,
    pub class: CaseClass,
    pub report: EstimateReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub total: usize,
    pub passed_sound: usize,
    pub passed_strict: usize,
    pub max_ratio: f64,
    pub max_sound_ratio: f64,
}

impl Tally {
    fn add(&mut self, r: &EstimateReport) {
        self.total += 1;
        self.passed_sound += r.pass_sound as usize;
        self.passed_strict += r.pass_strict as usize;
        self.max_ratio = self.max_ratio.max(r.ratio());
        self.max_sound_ratio = self.max_sound_ratio.max(r.sound_ratio());
    }

    pub fn strict_rate(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.passed_strict as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub seed: u64,
    pub ensemble: String,
    pub term: DerivTermSpec,
    pub m: u32,
    pub t: f64,
    pub lhs: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: u32,
    /// Counts over theorem-backed cases.
    pub total: usize,
    pub passed_sound: usize,
    pub passed_strict: usize,
    pub max_ratio: f64,
    pub max_sound_ratio: f64,
    pub unbacked: Tally,
    pub out_of_hypothesis: Tally,
    /// Sound-check failures of theorem-backed cases, with the seeds to rerun them.
    pub failures: Vec<FailureRecord>,
    #[serde(skip)]
    pub cases: Vec<SweepCase>,
}

impl SweepReport {
    pub fn from_cases(cases: Vec<SweepCase>) -> Self {
        let mut backed = Tally::default();
        let mut unbacked = Tally::default();
        let mut outside = Tally::default();
        let mut failures = Vec::new();
        for c in &cases {
            match c.class {
                CaseClass::Backed => {
                    backed.add(&c.report);
                    if !c.report.pass_sound {
                        failures.push(FailureRecord {
                            seed: c.seed,
                            ensemble: c.ensemble.clone(),
                            term: c.report.term.clone(),
                            m: c.report.m,
                            t: c.report.t,
                            lhs: c.report.lhs,
                            bound: c.report.rhs_factor * c.report.sup.coeff_upper,
                        });
                    }
                }
                CaseClass::Unbacked => unbacked.add(&c.report),
                CaseClass::OutOfHypothesis => outside.add(&c.report),
            }
        }
        Self {
            schema: 1,
            total: backed.total,
            passed_sound: backed.passed_sound,
            passed_strict: backed.passed_strict,
            max_ratio: backed.max_ratio,
            max_sound_ratio: backed.max_sound_ratio,
            unbacked,
            out_of_hypothesis: outside,
            failures,
            cases,
        }
    }

    pub fn all_sound(&self) -> bool {
        self.failures.is_empty()
    }

    /// One row per case: `term,m,t,ratio,class`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,m,t,ratio,class,seed,ensemble\n");
        for c in &self.cases {
            let class = match c.class {
                CaseClass::Backed => "backed",
                CaseClass::Unbacked => "unbacked",
                CaseClass::OutOfHypothesis => "out_of_hypothesis",
            };
            let _ = writeln!(
                out,
                "\"{}\",{},{},{:e},{},{},{}",
                c.report.term,
                c.report.m,
                c.report.t,
                c.report.ratio(),
                class,
                c.seed,
                c.ensemble
            );
        }
        out
    }
}

/// Independent stream for the test function of a draw.
pub fn function_seed(seed: u64) -> u64 {
    seed ^ 0xD1B5_4A32_D192_ED03
}

/// Every (term, t) case for one function and path.
pub fn estimate_cases(
    f: &MultiPoly,
    path: &PerturbationPath,
    m_values: &[u32],
    max_k: usize,
    t_grid: &[f64],
    dom: &DomainKind,
) -> Result<Vec<EstimateReport>> {
    f.check_arity(path.n())?;
    let hyp: Vec<Hypothesis> = t_grid.iter().map(|&t| hypothesis_at(path, t, dom)).collect();
    let mut evals: Vec<PathEval> = t_grid.iter().map(|&t| PathEval::new(path, &f.degrees(), t)).collect();
    let mut sups: HashMap<Vec<u32>, (MultiPoly, SupNorm)> = HashMap::new();
    let mut out = Vec::new();
    for &m in m_values {
        for term in enumerate_terms(f.n_vars(), m)
            .into_iter()
            .filter(|t| t.coords().len() <= max_k)
        {
            let orders = term.orders(f.n_vars())?;
            let (g, base) = sups
                .entry(orders.clone())
                .or_insert_with(|| {
                    let g = partial_derivative(f, &orders).expect("arity checked");
                    let s = sup_norm(&g, dom);
                    (g, s)
                })
                .clone();
            let factor = hs_factor(path, &term);
            for (q, &t) in t_grid.iter().enumerate() {
                evals[q].prepare(f, &term);
                let lhs = evals[q].d_term(f, &term).trace().norm();
                out.push(decide(&term, t, lhs, factor, (&g, base), dom, hyp[q]));
            }
        }
    }
    Ok(out)
}

fn classify(r: &EstimateReport, general_trace: bool) -> CaseClass {
    if !r.hypothesis.is_within() || r.m < 2 {
        CaseClass::OutOfHypothesis
    } else if general_trace && r.m > 2 {
        CaseClass::Unbacked
    } else {
        CaseClass::Backed
    }
}

/// Runs the estimate over `{draws × ensembles × m × terms × t}`, in parallel
/// over draws with results merged in draw order.
pub fn estimate_sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let per_draw: Vec<Result<Vec<SweepCase>>> = (0..config.draws as u64)
        .into_par_iter()
        .map(|i| {
            let seed = draw_seed(config.seed, i);
            let mut cases = Vec::new();
            for tpl in &config.ensembles {
                let path = draw_path(&tpl.spec(seed))?;
                let f = draw_function(&FunctionSpec {
                    coeff_scale: config.coeff_scale,
                    ..FunctionSpec::new(tpl.n, config.max_total_degree, function_seed(seed))
                })?;
                let dom = tpl.domain();
                for r in estimate_cases(&f, &path, &config.m_values, config.max_k, &config.t_grid, &dom)? {
                    cases.push(SweepCase {
                        seed,
                        ensemble: tpl.kind.to_string(),
                        class: classify(&r, config.general_trace),
                        report: r,
                    });
                }
            }
            for &kind in &config.adversarial {
                let n = config.ensembles.first().map_or(2, |t| t.n);
                let dim = config.ensembles.first().map_or(4, |t| t.dim).max(2);
                let path = adversarial_path(kind, n, dim, seed)?;
                let f = draw_function(&FunctionSpec::new(n, config.max_total_degree, function_seed(seed)))?;
                for r in estimate_cases(
                    &f,
                    &path,
                    &config.m_values,
                    config.max_k,
                    &config.t_grid,
                    &DomainKind::torus().for_vars(n),
                )? {
                    cases.push(SweepCase {
                        seed,
                        ensemble: kind.to_string(),
                        class: CaseClass::OutOfHypothesis,
                        report: r,
                    });
                }
            }
            Ok(cases)
        })
        .collect();
    let mut cases = Vec::new();
    for r in per_draw {
        cases.extend(r?);
    }
    Ok(SweepReport::from_cases(cases))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{random_partition, random_perturbation, rng_from_seed};
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn diag_pair(eps: f64) -> PerturbationPath {
        let tol = Tolerances::default();
        let a = certify_tuple(vec![CMatrix::zeros(2)], tol.ctol, tol.ntol).unwrap();
        let b = certify_tuple(vec![CMatrix::from_diagonal(&[c(eps), c(-eps)])], tol.ctol, tol.ntol).unwrap();
        crate::matcore::build_path(a, b, &tol).unwrap()
    }

    #[test]
    fn diagonal_square_attains_equality() {
        let eps = 0.3;
        let p = diag_pair(eps);
        let f = MultiPoly::monomial(vec![2], c(1.0));
        let r = trace_estimate_check(&f, &p, &DerivTermSpec::single(0, 2).unwrap(), 0.4, &DomainKind::torus()).unwrap();
        assert!((r.lhs - 4.0 * eps * eps).abs() < 1e-15);
        assert!((r.rhs_factor - 2.0 * eps * eps).abs() < 1e-15);
        assert!((r.sup.grid_sup - 2.0).abs() < 1e-15);
        assert!(r.pass_sound && r.pass_strict);
        assert!((r.ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_perturbation_passes() {
        let p = diag_pair(0.0);
        let f = MultiPoly::univariate(&[c(1.0), c(2.0), c(3.0), c(4.0)]);
        for m in 2..4 {
            let r =
                trace_estimate_check(&f, &p, &DerivTermSpec::single(0, m).unwrap(), 0.5, &DomainKind::torus()).unwrap();
            assert_eq!(r.lhs, 0.0);
            assert!(r.pass_sound && r.pass_strict);
        }
    }

    #[test]
    fn batched_cases_match_single_checks() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::JointlyDiagonal,
            n: 2,
            dim: 4,
            v_scale: 0.5,
            seed: 12,
        };
        let p = draw_path(&spec).unwrap();
        let f = draw_function(&FunctionSpec::new(2, 4, 3)).unwrap();
        let dom = DomainKind::torus();
        let batch = estimate_cases(&f, &p, &[2, 3], 3, &[0.0, 0.7], &dom).unwrap();
        assert_eq!(batch.len(), (3 + 4) * 2);
        for r in &batch {
            let single = trace_estimate_check(&f, &p, &r.term, r.t, &dom).unwrap();
            assert_eq!(&single, r);
        }
    }

    #[test]
    fn non_normal_path_is_flagged() {
        let p = adversarial_path(AdversarialKind::NonNormal, 2, 4, 3).unwrap();
        let f = MultiPoly::monomial(vec![2, 1], c(1.0));
        let r = trace_estimate_check(&f, &p, &DerivTermSpec::single(0, 2).unwrap(), 0.5, &DomainKind::torus()).unwrap();
        assert_eq!(r.hypothesis, Hypothesis::Outside);
    }

    #[test]
    fn cube_requires_self_adjoint() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::JointlyDiagonal,
            n: 1,
            dim: 3,
            v_scale: 0.5,
            seed: 2,
        };
        let p = draw_path(&spec).unwrap();
        assert_eq!(hypothesis_at(&p, 0.5, &DomainKind::cube()), Hypothesis::Outside);
        assert_eq!(hypothesis_at(&p, 0.5, &DomainKind::torus()), Hypothesis::Within);
        let sa = draw_path(&EnsembleSpec {
            kind: EnsembleKind::SelfAdjointDiagonal,
            ..spec
        })
        .unwrap();
        assert_eq!(hypothesis_at(&sa, 0.5, &DomainKind::cube()), Hypothesis::Within);
    }

    #[test]
    fn block_bound_trivial_partition_is_cauchy_schwarz() {
        let mut rng = rng_from_seed(4);
        let v1 = random_perturbation(4, 1.0, &mut rng);
        let v2 = random_perturbation(4, 1.0, &mut rng);
        let whole = vec![CMatrix::identity(4)];
        let r = hs_block_bound_check(&[whole.clone(), whole], &[v1.clone(), v2.clone()]).unwrap();
        assert!((r.lhs - (&v1 * &v2).trace().norm()).abs() < 1e-14);
        assert!(r.passed && r.tuples == 1);
    }

    #[test]
    fn block_bound_rank_one_diagonal() {
        let d1 = [c(0.3), c(-1.2), c(0.5)];
        let d2 = [c(2.0), c(0.1), c(-0.7)];
        let rank_one: Vec<CMatrix> = (0..3)
            .map(|k| CMatrix::from_fn(3, |i, j| if i == k && j == k { c(1.0) } else { c(0.0) }))
            .collect();
        let r = hs_block_bound_check(
            &[rank_one.clone(), rank_one],
            &[CMatrix::from_diagonal(&d1), CMatrix::from_diagonal(&d2)],
        )
        .unwrap();
        let want: f64 = d1.iter().zip(&d2).map(|(a, b)| (a * b).norm()).sum();
        assert!((r.lhs - want).abs() < 1e-14 && r.passed && r.tuples == 9);
    }

    #[test]
    fn block_bound_random_partitions() {
        let mut rng = rng_from_seed(9);
        for _ in 0..30 {
            for m in 2..=3 {
                let parts: Vec<Vec<CMatrix>> = (0..m).map(|_| random_partition(5, 3, &mut rng).unwrap()).collect();
                let v: Vec<CMatrix> = (0..m).map(|_| random_perturbation(5, 1.0, &mut rng)).collect();
                assert!(hs_block_bound_check(&parts, &v).unwrap().passed);
            }
        }
    }

    #[test]
    fn block_bound_rejects_bad_resolution() {
        let half = CMatrix::identity(2).scale_real(0.5);
        let v = vec![CMatrix::identity(2), CMatrix::identity(2)];
        let err = hs_block_bound_check(&[vec![half.clone(), half], vec![CMatrix::identity(2)]], &v);
        assert!(matches!(err, Err(Error::Structural(_))));
        let short = hs_block_bound_check(&[vec![CMatrix::identity(2)]], &v[..1]);
        assert!(matches!(short, Err(Error::Domain(_))));
    }

    #[test]
    fn empty_sweep() {
        let r = estimate_sweep(&SweepConfig::empty()).unwrap();
        assert_eq!(r.total, 0);
        assert!(r.failures.is_empty());
    }

    #[test]
    fn smoke_sweep_is_sound_and_deterministic() {
        let cfg = SweepConfig {
            draws: 3,
            seed: 77,
            adversarial: vec![AdversarialKind::NonCommuting, AdversarialKind::NonNormal],
            ..SweepConfig::default()
        };
        let a = estimate_sweep(&cfg).unwrap();
        assert!(a.total > 0 && a.all_sound(), "{:?}", a.failures);
        assert!(a.max_sound_ratio <= 1.0 + SOUND_SLACK);
        assert!(a.out_of_hypothesis.total > 0);
        let b = estimate_sweep(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.to_csv().lines().count(), a.cases.len() + 1);
    }

    #[test]
    fn general_trace_backs_only_second_order() {
        let cfg = SweepConfig {
            draws: 1,
            general_trace: true,
            ..SweepConfig::default()
        };
        let r = estimate_sweep(&cfg).unwrap();
        assert!(r
            .cases
            .iter()
            .filter(|c| c.class == CaseClass::Backed)
            .all(|c| c.report.m == 2));
        assert!(r.unbacked.total > 0 && r.unbacked.passed_sound == r.unbacked.total);
    }
}
