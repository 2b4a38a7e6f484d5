//! Higher-order perturbation machinery for commuting matrix tuples.
//!
//! The crate computes m-th derivatives of `t ↦ f(A + tV)` for polynomial
//! functions of commuting tuples, the Taylor-remainder trace identity, the
//! per-term trace estimate with Hilbert–Schmidt perturbations, and the
//! linear functionals standing in for the higher-order spectral shift
//! measures. Every identity comes with an independent numerical check.

pub mod divdiff;
pub mod ensembles;
pub mod error;
pub mod estimates;
pub mod matcore;
pub mod mpoly;
pub mod opderiv;
pub mod quadrature;
pub mod remainder;
pub mod ssm;
pub mod verify;

pub use divdiff::{
    complete_homogeneous, divdiff_apply, divdiff_integral, divdiff_monomial, divdiff_recursive, divdiff_univariate,
    DividedDiffSpec,
};
pub use ensembles::{
    adversarial_path, draw_function, draw_joint_form, draw_path, AdversarialKind, EnsembleKind, EnsembleSpec,
    FunctionSpec, JointForm,
};
pub use error::{Error, Result};
pub use estimates::{
    estimate_sweep, hs_block_bound_check, trace_estimate_check, EstimateReport, HsBlockReport, SweepConfig, SweepReport,
};
pub use matcore::{
    build_path, certify_tuple, op_norm, ordered_monomial, schatten_norm, trace, CMatrix, CommutingTuple,
    PerturbationPath, Tolerances,
};
pub use mpoly::{
    antiderivative, eval_operator, eval_scalar, partial_derivative, sup_norm, von_neumann_check, DomainKind,
    DomainShape, MultiIndex, MultiPoly, SupNorm,
};
pub use num_complex::Complex64;
pub use opderiv::{
    compositions, d_term, enumerate_terms, finite_difference, full_derivative, power_derivative, Composition,
    DerivTermSpec, Hypothesis, Tagged,
};
pub use remainder::{remainder_check, remainder_trace_integral, taylor_remainder, RemainderReport};
pub use ssm::{
    moment_table, phi, single_variable_reduction, trace_formula_check, tv_audit, MomentTable, SsmFunctional,
};
pub use verify::{run_suite, run_verify, Suite, VerifyConfig, VerifyReport};
