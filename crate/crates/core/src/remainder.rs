//! Taylor remainders along the path and their integral trace representation
//!
//! `tr R_m = ∫_0^1 (1−t)^{m−1}/(m−1)! · tr(d^m/ds^m|_{s=t} f(X(s))) dt`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{CMatrix, PerturbationPath};
use crate::mpoly::{eval_operator_mats, MultiPoly};
use crate::opderiv::{full_derivative_raw, Hypothesis, Tagged};
use crate::quadrature::{gauss_legendre_unit, nodes_for_degree};

/// `(1−t)^{m−1}/(m−1)!`.
pub fn taylor_weight(m: u32, t: f64) -> f64 {
    let fact: f64 = (1..m).map(f64::from).product();
    (1.0 - t).powi(m as i32 - 1) / fact
}

/// Node count making `∫ taylor_weight(m, t)·p(t) dt` exact when the trace
/// polynomial `p` has degree `≤ deg(f) − m`.
pub fn remainder_nodes(f: &MultiPoly) -> usize {
    nodes_for_degree(f.total_degree())
}

/// `∫_0^1 (1−t)^{m−1}/(m−1)!·integrand(t) dt` by an `nodes`-point rule.
pub(crate) fn weighted_integral(
    m: u32,
    nodes: usize,
    integrand: impl Fn(f64) -> Result<Complex64>,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (t, w) in gauss_legendre_unit(nodes) {
        acc += integrand(t)? * (w * taylor_weight(m, t));
    }
    Ok(acc)
}

fn validate_order(m: u32) -> Result<()> {
    if m == 0 {
        return Err(Error::Domain("remainder order must be ≥ 1".into()));
    }
    Ok(())
}

/// `f(B) − Σ_{k<m} (1/k!)·d^k/ds^k|_{s=0} f(X(s))`, with the `k = 0` term `f(A)`.
pub fn taylor_remainder(f: &MultiPoly, path: &PerturbationPath, m: u32) -> Result<Tagged<CMatrix>> {
    validate_order(m)?;
    f.check_arity(path.n())?;
    let mut out = eval_operator_mats(f, path.b().mats())?;
    let mut fact = 1.0;
    for k in 0..m {
        if k > 0 {
            fact *= k as f64;
        }
        if k > f.total_degree() {
            break;
        }
        let d = full_derivative_raw(f, path, k, 0.0)?;
        out.axpy(Complex64::new(-1.0 / fact, 0.0), &d);
    }
    Ok(Tagged {
        value: out,
        hypothesis: Hypothesis::from_flag(path.path_valid()),
    })
}

/// Gauss–Legendre evaluation of the integral side of the identity. `m = 1` is
/// accepted; at finite dimension every perturbation is trace class.
pub fn remainder_trace_integral(f: &MultiPoly, path: &PerturbationPath, m: u32) -> Result<Tagged<Complex64>> {
    validate_order(m)?;
    f.check_arity(path.n())?;
    let value = if m > f.total_degree() {
        Complex64::new(0.0, 0.0)
    } else {
        weighted_integral(m, remainder_nodes(f), |t| {
            Ok(full_derivative_raw(f, path, m, t)?.trace())
        })?
    };
    Ok(Tagged {
        value,
        hypothesis: Hypothesis::from_flag(path.path_valid()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport {
    pub m: u32,
    pub lhs_trace: Complex64,
    pub rhs_integral: Complex64,
    pub abs_gap: f64,
    pub quadrature_nodes: usize,
    pub tol: f64,
    pub passed: bool,
    pub hypothesis: Hypothesis,
}

impl RemainderReport {
    /// `abs_gap / (1 + |lhs|)`.
    pub fn relative_gap(&self) -> f64 {
        self.abs_gap / (1.0 + self.lhs_trace.norm())
    }
}

/// Both sides of the identity; passes iff `gap ≤ tol·(1 + |lhs|)`.
pub fn remainder_check(f: &MultiPoly, path: &PerturbationPath, m: u32, tol: f64) -> Result<RemainderReport> {
    let lhs = taylor_remainder(f, path, m)?.value.trace();
    let rhs = remainder_trace_integral(f, path, m)?.value;
    let abs_gap = (lhs - rhs).norm();
    Ok(RemainderReport {
        m,
        lhs_trace: lhs,
        rhs_integral: rhs,
        abs_gap,
        quadrature_nodes: remainder_nodes(f),
        tol,
        passed: abs_gap <= tol * (1.0 + lhs.norm()),
        hypothesis: Hypothesis::from_flag(path.path_valid()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{
        adversarial_path, draw_function, draw_path, AdversarialKind, EnsembleKind, EnsembleSpec, FunctionSpec,
    };

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn ensemble(kind: EnsembleKind, n: usize, seed: u64) -> PerturbationPath {
        draw_path(&EnsembleSpec {
            kind,
            n,
            dim: 5,
            v_scale: 0.4,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn weight_integrates_to_inverse_factorial() {
        for m in 1..6u32 {
            let got = weighted_integral(m, 4, |_| Ok(c(1.0))).unwrap();
            let want = 1.0 / (1..=m).map(f64::from).product::<f64>();
            assert!((got.re - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_perturbation() {
        let p = draw_path(&EnsembleSpec {
            kind: EnsembleKind::JointlyDiagonal,
            n: 2,
            dim: 4,
            v_scale: 0.0,
            seed: 1,
        })
        .unwrap();
        let f = draw_function(&FunctionSpec::new(2, 4, 2)).unwrap();
        assert!(
            taylor_remainder(&f, &p, 2)
                .unwrap()
                .value
                .max_abs_diff(&CMatrix::zeros(4))
                < 1e-14
        );
        assert_eq!(remainder_trace_integral(&f, &p, 2).unwrap().value.norm(), 0.0);
    }

    #[test]
    fn bilinear_closed_form() {
        let p = ensemble(EnsembleKind::Circulant, 2, 4);
        let f = MultiPoly::monomial(vec![1, 1], c(1.0));
        let r = taylor_remainder(&f, &p, 2).unwrap().value;
        let v1v2 = &p.v()[0] * &p.v()[1];
        assert!(r.max_abs_diff(&v1v2) < 1e-14);
        let report = remainder_check(&f, &p, 2, 1e-12).unwrap();
        assert!(report.passed);
        assert!((report.rhs_integral - v1v2.trace()).norm() <= 1e-12);
        assert!(report.abs_gap <= 1e-12);
    }

    #[test]
    fn remainder_vanishes_past_degree() {
        let p = ensemble(EnsembleKind::JointlyDiagonal, 2, 8);
        let f = draw_function(&FunctionSpec::new(2, 3, 8)).unwrap();
        assert!(
            taylor_remainder(&f, &p, 4)
                .unwrap()
                .value
                .max_abs_diff(&CMatrix::zeros(5))
                < 1e-13
        );
        assert_eq!(remainder_trace_integral(&f, &p, 4).unwrap().value.norm(), 0.0);
    }

    #[test]
    fn identity_on_random_draws() {
        for seed in 0..20 {
            for kind in EnsembleKind::ALL {
                let p = ensemble(kind, 3, seed);
                let f = draw_function(&FunctionSpec::new(3, 5, seed + 100)).unwrap();
                for m in 1..=5 {
                    let r = remainder_check(&f, &p, m, 1e-9).unwrap();
                    assert!(r.passed, "{kind} seed {seed} m {m}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn second_order_matches_first_order_expansion() {
        let p = ensemble(EnsembleKind::JointlyDiagonal, 2, 3);
        let f = draw_function(&FunctionSpec::new(2, 4, 3)).unwrap();
        let fb = eval_operator_mats(&f, p.b().mats()).unwrap();
        let fa = eval_operator_mats(&f, p.a().mats()).unwrap();
        let d1 = full_derivative_raw(&f, &p, 1, 0.0).unwrap();
        let direct = (&(&fb - &fa) - &d1).trace();
        let r = taylor_remainder(&f, &p, 2).unwrap().value.trace();
        assert!((direct - r).norm() < 1e-13);
    }

    #[test]
    fn outside_hypothesis_is_flagged() {
        let p = adversarial_path(AdversarialKind::NonCommuting, 2, 3, 5).unwrap();
        let f = MultiPoly::monomial(vec![2, 1], c(1.0));
        let r = remainder_check(&f, &p, 2, 1e-9).unwrap();
        assert_eq!(r.hypothesis, Hypothesis::Outside);
    }

    #[test]
    fn order_zero_rejected() {
        let p = ensemble(EnsembleKind::JointlyDiagonal, 1, 3);
        let f = MultiPoly::univariate(&[c(1.0), c(1.0)]);
        assert!(matches!(taylor_remainder(&f, &p, 0), Err(Error::Domain(_))));
    }
}
