//! Batch verification suites.
//!
//! Every random choice of a draw comes from its seed, so a failure reruns
//! bit-identically with `seed = <reported seed>` and `draws = 1`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, RngExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divdiff::{
    divdiff_apply, divdiff_bound, divdiff_integral, divdiff_recursive, quadrature_nodes_for, sample_domain_point,
    DividedDiffSpec,
};
use crate::ensembles::{
    draw_function, draw_joint_form, draw_path, draw_seed, random_partition, random_perturbation, rng_from_seed,
    EnsembleKind, EnsembleSpec, FunctionSpec, JointForm, Rng64,
};
use crate::error::{Error, Result};
use crate::estimates::{estimate_cases, function_seed, hs_block_bound_check, EnsembleTemplate};
use crate::matcore::{CMatrix, PerturbationPath};
use crate::mpoly::{eval_scalar, DomainKind, MultiPoly, GRID_SLACK};
use crate::opderiv::{
    central_difference, default_step, enumerate_terms, extrapolated_difference, full_derivative, power_derivative,
};
use crate::remainder::remainder_check;
use crate::ssm::{moment_table, single_variable_reduction, trace_formula_check, tv_audit, DEFAULT_MOMENT_DEGREE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Divdiff,
    Derivatives,
    Remainder,
    Estimates,
    Tracefla,
    Reduction,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [
        Suite::Divdiff,
        Suite::Derivatives,
        Suite::Remainder,
        Suite::Estimates,
        Suite::Tracefla,
        Suite::Reduction,
    ];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Divdiff => "divdiff",
            Suite::Derivatives => "derivatives",
            Suite::Remainder => "remainder",
            Suite::Estimates => "estimates",
            Suite::Tracefla => "tracefla",
            Suite::Reduction => "reduction",
            Suite::All => "all",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown suite `{s}` (expected divdiff, derivatives, remainder, estimates, tracefla, reduction or all)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub draws: usize,
    pub dim: usize,
    pub n_vars: usize,
    pub m_min: u32,
    pub m_max: u32,
    /// Fixed ensemble; by default the kind rotates with the draw seed.
    pub ensemble: Option<EnsembleKind>,
    pub v_scale: f64,
    pub max_total_degree: u32,
    /// Overrides every suite's main tolerance.
    pub tol: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            draws: 50,
            dim: 6,
            n_vars: 3,
            m_min: 2,
            m_max: 4,
            ensemble: None,
            v_scale: 0.5,
            max_total_degree: 5,
            tol: None,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::matcore::DEFAULT_MAX_DIM).contains(&self.dim) {
            return Err(Error::Domain(format!(
                "dim must lie in [1, {}]",
                crate::matcore::DEFAULT_MAX_DIM
            )));
        }
        if !(1..=6).contains(&self.n_vars) {
            return Err(Error::Domain("nvars must lie in [1, 6]".into()));
        }
        if !(1..=6).contains(&self.m_min) || !(1..=6).contains(&self.m_max) || self.m_min > self.m_max {
            return Err(Error::Domain("m range must satisfy 1 ≤ m-min ≤ m-max ≤ 6".into()));
        }
        if !(self.v_scale.is_finite() && self.v_scale >= 0.0) {
            return Err(Error::Domain("v_scale must be finite and ≥ 0".into()));
        }
        if let Some(t) = self.tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Domain("tolerances must be > 0".into()));
            }
        }
        Ok(())
    }

    fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn kind_for(&self, seed: u64) -> EnsembleKind {
        self.ensemble.unwrap_or(EnsembleKind::ALL[(seed % 3) as usize])
    }

    fn template(&self, kind: EnsembleKind) -> EnsembleTemplate {
        EnsembleTemplate {
            kind,
            n: self.n_vars,
            dim: self.dim,
            v_scale: self.v_scale,
        }
    }

    fn orders(&self, lo: u32, hi: u32) -> Vec<u32> {
        (self.m_min.max(lo)..=self.m_max.min(hi)).collect()
    }
}

/// Independent generator for the auxiliary choices of a draw.
fn aux_rng(seed: u64) -> Rng64 {
    rng_from_seed(seed ^ 0x6A09_E667_F3BC_C908)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: String,
    pub seed: u64,
    pub detail: String,
    pub error: f64,
    pub tol: f64,
    pub passed: bool,
    pub in_hypothesis: bool,
}

impl CheckOutcome {
    fn new(check: &str, seed: u64, detail: String, error: f64, tol: f64) -> Self {
        Self {
            check: check.into(),
            seed,
            detail,
            error,
            tol,
            passed: error <= tol,
            in_hypothesis: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: Suite,
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub out_of_hypothesis: usize,
    /// Largest `error / tol` over in-hypothesis checks.
    pub worst_margin: f64,
    pub failures: Vec<CheckOutcome>,
}

impl SuiteSummary {
    fn from_outcomes(suite: Suite, outcomes: Vec<CheckOutcome>) -> Self {
        let mut s = SuiteSummary {
            suite,
            checks: 0,
            passed: 0,
            failed: 0,
            out_of_hypothesis: 0,
            worst_margin: 0.0,
            failures: Vec::new(),
        };
        for o in outcomes {
            if !o.in_hypothesis {
                s.out_of_hypothesis += 1;
                continue;
            }
            s.checks += 1;
            s.worst_margin = s.worst_margin.max(if o.tol > 0.0 { o.error / o.tol } else { 0.0 });
            if o.passed {
                s.passed += 1;
            } else {
                s.failed += 1;
                s.failures.push(o);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: u32,
    pub seed: u64,
    pub draws: usize,
    pub passed: bool,
    pub suites: Vec<SuiteSummary>,
}

/// Minimum distance between distinct divided-difference nodes; keeps the
/// recursive table well conditioned.
const NODE_SEPARATION: f64 = 0.15;

/// Random spec of total order `m` on `n` variables with nodes in the unit
/// disc; some nodes repeat to exercise the confluent branch.
pub fn random_divdiff_spec(n: usize, m: u32, rng: &mut impl Rng) -> Result<DividedDiffSpec> {
    let k = rng.random_range(1..=(m as usize).min(n));
    let mut coords: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        coords.swap(i, j);
    }
    let mut coords: Vec<usize> = coords.into_iter().take(k).collect();
    coords.sort_unstable();
    // Orders ≥ 1 summing to m.
    let mut orders = vec![1u32; k];
    for _ in 0..(m as usize - k) {
        orders[rng.random_range(0..k)] += 1;
    }
    let mut out = Vec::with_capacity(k);
    for (&j, &i) in coords.iter().zip(&orders) {
        let mut nodes: Vec<Complex64> = Vec::with_capacity(i as usize + 1);
        while nodes.len() < i as usize + 1 {
            if !nodes.is_empty() && rng.random_range(0.0..1.0) < 0.3 {
                let pick = nodes[rng.random_range(0..nodes.len())];
                nodes.push(pick);
                continue;
            }
            let z = Complex64::from_polar(
                rng.random_range(0.0..=1.0_f64).sqrt(),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            if nodes.iter().all(|x| (x - z).norm() >= NODE_SEPARATION) {
                nodes.push(z);
            }
        }
        out.push((j, nodes));
    }
    DividedDiffSpec::new(out)
}

fn divdiff_draw(cfg: &VerifyConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = aux_rng(seed);
    let n = cfg.n_vars.min(3);
    let f = draw_function(&FunctionSpec {
        max_var_degree: Some(5),
        ..FunctionSpec::new(n, 5 * n as u32, function_seed(seed))
    })?;
    let m = rng.random_range(1..=4u32);
    let spec = random_divdiff_spec(n, m, &mut rng)?;
    let point: Vec<Complex64> = (0..n)
        .map(|_| sample_domain_point(&DomainKind::torus(), &mut rng))
        .collect();
    let recursive = eval_scalar(&divdiff_recursive(&f, &spec)?, &point)?;
    let homogeneous = eval_scalar(&divdiff_apply(&f, &spec)?, &point)?;
    let integral = divdiff_integral(&f, &spec, quadrature_nodes_for(&f), &point)?;
    let spread = (recursive - homogeneous)
        .norm()
        .max((recursive - integral).norm())
        .max((homogeneous - integral).norm());
    let mut out = vec![CheckOutcome::new(
        "three_routes",
        seed,
        format!("m={m}"),
        spread,
        cfg.tol_or(1e-10),
    )];

    let dom = DomainKind::torus();
    let coords = spec
        .coords()
        .iter()
        .map(|(j, nodes)| (*j, nodes.iter().map(|_| sample_domain_point(&dom, &mut rng)).collect()))
        .collect();
    let torus_spec = DividedDiffSpec::new(coords)?;
    let value = eval_scalar(&divdiff_apply(&f, &torus_spec)?, &point)?.norm();
    let bound = divdiff_bound(&f, &torus_spec, &dom)?;
    let excess = (value - bound * (1.0 + 1e-8)).max(0.0);
    out.push(CheckOutcome {
        passed: excess == 0.0,
        ..CheckOutcome::new(
            "bound",
            seed,
            format!("m={m} ratio={:.3e}", value / bound.max(f64::MIN_POSITIVE)),
            excess,
            1e-8,
        )
    });
    Ok(out)
}

fn draw_case(cfg: &VerifyConfig, seed: u64) -> Result<(EnsembleKind, PerturbationPath, MultiPoly)> {
    let kind = cfg.kind_for(seed);
    let path = draw_path(&cfg.template(kind).spec(seed))?;
    let f = draw_function(&FunctionSpec::new(
        cfg.n_vars,
        cfg.max_total_degree,
        function_seed(seed),
    ))?;
    Ok((kind, path, f))
}

/// `d^m/dt^m f(a + tv)` evaluated slot by slot on the joint eigenvalues,
/// by expanding every monomial as a polynomial in `s` around `t`.
pub fn scalar_chain_rule(f: &MultiPoly, form: &JointForm, m: u32, t: f64) -> CMatrix {
    let dim = form.basis.dim();
    let m_fact: f64 = (1..=m).map(f64::from).product();
    let diag: Vec<Complex64> = (0..dim)
        .map(|r| {
            let x: Vec<Complex64> = form
                .a
                .iter()
                .zip(&form.b)
                .map(|(a, b)| a[r] + (b[r] - a[r]) * t)
                .collect();
            let v: Vec<Complex64> = form.a.iter().zip(&form.b).map(|(a, b)| b[r] - a[r]).collect();
            let mut total = Complex64::new(0.0, 0.0);
            for (k, c) in f.terms() {
                // Coefficients in s of Π_j (x_j + s v_j)^{k_j}, truncated at s^m.
                let mut poly = vec![Complex64::new(0.0, 0.0); m as usize + 1];
                poly[0] = Complex64::new(1.0, 0.0);
                for (j, &e) in k.iter().enumerate() {
                    for _ in 0..e {
                        for d in (0..=m as usize).rev() {
                            let lower = if d > 0 {
                                poly[d - 1] * v[j]
                            } else {
                                Complex64::new(0.0, 0.0)
                            };
                            poly[d] = poly[d] * x[j] + lower;
                        }
                    }
                }
                total += c * poly[m as usize];
            }
            total * m_fact
        })
        .collect();
    &(&form.basis * &CMatrix::from_diagonal(&diag)) * &form.basis.adjoint()
}

fn rel_error(approx: &CMatrix, exact: &CMatrix) -> f64 {
    let diff = (approx - exact).frobenius();
    let scale = exact.frobenius();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn derivatives_draw(cfg: &VerifyConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = aux_rng(seed);
    let mut out = Vec::new();

    // Power derivative against extrapolated central differences.
    let dim = cfg.dim.min(8);
    let h = random_perturbation(dim, 0.8, &mut rng);
    let v = random_perturbation(dim, 0.8, &mut rng);
    let p = rng.random_range(0..=6u32);
    let n = rng.random_range(1..=3u32);
    let t = rng.random_range(0.0..=1.0);
    let exact = power_derivative(&h, &v, p, n, t)?;
    if n > p {
        out.push(CheckOutcome::new(
            "power_zero",
            seed,
            format!("p={p} n={n}"),
            exact.frobenius(),
            0.0,
        ));
    } else {
        let family = |s: f64| {
            let mut x = h.clone();
            x.axpy(Complex64::new(s, 0.0), &v);
            x.pow(p)
        };
        let step = default_step(n);
        let coarse = central_difference(family, n, t, step);
        let fine = central_difference(family, n, t, step / 2.0);
        let mut rich = fine.scale_real(4.0 / 3.0);
        rich.axpy(Complex64::new(-1.0 / 3.0, 0.0), &coarse);
        out.push(CheckOutcome::new(
            "power_fd",
            seed,
            format!("p={p} n={n} t={t:.3}"),
            rel_error(&rich, &exact),
            cfg.tol_or(1e-6),
        ));
    }

    // Full derivative against finite differences and, on diagonal paths,
    // against the scalar chain rule.
    let (kind, path, f) = draw_case(cfg, seed)?;
    let form = draw_joint_form(&cfg.template(kind).spec(seed))?;
    for m in cfg.orders(1, 6) {
        let t = rng.random_range(0.0..=1.0);
        let exact = full_derivative(&f, &path, m, t)?;
        let fd = extrapolated_difference(&f, &path, m, t, default_step(m))?;
        let mut o = CheckOutcome::new(
            "full_fd",
            seed,
            format!("{kind} m={m} t={t:.3}"),
            rel_error(&fd, &exact.value),
            cfg.tol_or(1e-5),
        );
        o.in_hypothesis = exact.hypothesis.is_within();
        out.push(o);
        let scalar = scalar_chain_rule(&f, &form, m, t);
        let err = (&scalar - &exact.value).frobenius() / (1.0 + exact.value.frobenius());
        out.push(CheckOutcome::new(
            "full_scalar",
            seed,
            format!("{kind} m={m} t={t:.3}"),
            err,
            cfg.tol_or(1e-9),
        ));
    }
    Ok(out)
}

fn remainder_draw(cfg: &VerifyConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let (kind, path, f) = draw_case(cfg, seed)?;
    let mut out = Vec::new();
    for m in cfg.orders(1, 6) {
        let tol = cfg.tol_or(1e-9);
        let r = remainder_check(&f, &path, m, tol)?;
        let mut o = CheckOutcome::new("identity", seed, format!("{kind} m={m}"), r.relative_gap(), tol);
        o.in_hypothesis = r.hypothesis.is_within();
        out.push(o);
    }
    if path.n() >= 2 {
        let bilinear = MultiPoly::monomial(
            (0..path.n()).map(|j| u32::from(j < 2)).collect(),
            Complex64::new(1.0, 0.0),
        );
        let r = remainder_check(&bilinear, &path, 2, 1e-12)?;
        let closed = (&path.v()[0] * &path.v()[1]).trace();
        let err = r.abs_gap.max((r.rhs_integral - closed).norm());
        out.push(CheckOutcome::new("bilinear", seed, kind.to_string(), err, 1e-12));
    }
    Ok(out)
}

fn estimates_draw(cfg: &VerifyConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let (kind, path, f) = draw_case(cfg, seed)?;
    let dom = cfg.template(kind).domain();
    let ms = cfg.orders(2, 6);
    let mut out = Vec::new();
    for r in estimate_cases(&f, &path, &ms, 3, &[0.0, 0.5, 1.0], &dom)? {
        let excess = (r.sound_ratio() - 1.0).max(0.0);
        out.push(CheckOutcome {
            passed: r.pass_sound,
            in_hypothesis: r.hypothesis.is_within(),
            ..CheckOutcome::new(
                "trace_estimate",
                seed,
                format!("{kind} term={} t={} ratio={:.3e}", r.term, r.t, r.ratio()),
                excess,
                crate::estimates::SOUND_SLACK,
            )
        });
    }
    let mut rng = aux_rng(seed);
    for m in [2usize, 3] {
        let blocks = rng.random_range(1..=cfg.dim);
        let parts: Vec<Vec<CMatrix>> = (0..m)
            .map(|_| random_partition(cfg.dim, blocks, &mut rng))
            .collect::<Result<_>>()?;
        let v: Vec<CMatrix> = (0..m).map(|_| random_perturbation(cfg.dim, 1.0, &mut rng)).collect();
        let r = hs_block_bound_check(&parts, &v)?;
        out.push(CheckOutcome {
            passed: r.passed,
            ..CheckOutcome::new(
                "hs_block",
                seed,
                format!("m={m} blocks={blocks}"),
                (r.lhs / r.rhs - 1.0).max(0.0),
                crate::estimates::SOUND_SLACK,
            )
        });
    }
    Ok(out)
}

fn tracefla_draw(cfg: &VerifyConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let (kind, path, f) = draw_case(cfg, seed)?;
    let mut out = Vec::new();
    let ms = cfg.orders(2, 6);
    for &m in &ms {
        let tol = cfg.tol_or(1e-9);
        let r = trace_formula_check(&f, &path, m, tol)?;
        let mut o = CheckOutcome::new(
            "formula",
            seed,
            format!("{kind} m={m}"),
            r.abs_gap / (1.0 + r.lhs.norm()),
            tol,
        );
        o.in_hypothesis = r.hypothesis.is_within();
        out.push(o);
    }
    let mut rng = aux_rng(seed);
    if let Some(&m) = ms.first() {
        let terms = enumerate_terms(path.n(), m);
        let term = &terms[rng.random_range(0..terms.len())];
        let table = moment_table(term, &path, &vec![DEFAULT_MOMENT_DEGREE; path.n()])?;
        let dom = cfg.template(kind).domain();
        let audit = tv_audit(&table, &dom);
        out.push(CheckOutcome {
            passed: audit.violations == 0,
            ..CheckOutcome::new(
                "tv_audit",
                seed,
                format!("{kind} term={term} entries={}", audit.entries),
                (audit.max_ratio - 1.0).max(0.0),
                GRID_SLACK,
            )
        });
    }
    Ok(out)
}

fn reduction_draw(cfg: &VerifyConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = aux_rng(seed);
    let mut out = Vec::new();
    let kinds = match cfg.ensemble {
        Some(k) => vec![k],
        None => vec![
            EnsembleKind::ALL[(seed % 2) as usize],
            EnsembleKind::SelfAdjointDiagonal,
        ],
    };
    let g = draw_function(&FunctionSpec::new(1, 4, function_seed(seed)))?;
    for kind in kinds {
        let path = draw_path(&cfg.template(kind).spec(seed))?;
        for m in cfg.orders(2, 6) {
            let j = rng.random_range(0..path.n());
            let tol = cfg.tol_or(1e-10);
            let r = single_variable_reduction(&g, j, m, &path, tol)?;
            out.push(CheckOutcome::new(
                "reduction",
                seed,
                format!("{kind} j={} m={m}", j + 1),
                r.abs_gap / (1.0 + r.remainder.norm()),
                tol,
            ));
        }
    }
    Ok(out)
}

/// Runs one suite (not [`Suite::All`]) over `cfg.draws` seeds in parallel.
pub fn run_suite(suite: Suite, cfg: &VerifyConfig) -> Result<SuiteSummary> {
    cfg.validate()?;
    let runner: fn(&VerifyConfig, u64) -> Result<Vec<CheckOutcome>> = match suite {
        Suite::Divdiff => divdiff_draw,
        Suite::Derivatives => derivatives_draw,
        Suite::Remainder => remainder_draw,
        Suite::Estimates => estimates_draw,
        Suite::Tracefla => tracefla_draw,
        Suite::Reduction => reduction_draw,
        Suite::All => return Err(Error::Structural("run each suite separately".into())),
    };
    let per_draw: Vec<Result<Vec<CheckOutcome>>> = (0..cfg.draws as u64)
        .into_par_iter()
        .map(|i| runner(cfg, draw_seed(cfg.seed, i)))
        .collect();
    let mut outcomes = Vec::new();
    for r in per_draw {
        outcomes.extend(r?);
    }
    Ok(SuiteSummary::from_outcomes(suite, outcomes))
}

pub fn run_verify(suite: Suite, cfg: &VerifyConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let suites = match suite {
        Suite::All => Suite::EACH.to_vec(),
        s => vec![s],
    };
    let summaries = suites
        .into_iter()
        .map(|s| run_suite(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport {
        schema: 1,
        seed: cfg.seed,
        draws: cfg.draws,
        passed: summaries.iter().all(|s| s.failed == 0),
        suites: summaries,
    })
}

/// Ensemble spec used by a draw of the verification suites.
pub fn draw_spec(cfg: &VerifyConfig, seed: u64) -> EnsembleSpec {
    cfg.template(cfg.kind_for(seed)).spec(seed)
}
