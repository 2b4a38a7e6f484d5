use mvssm_core::divdiff::{
    divdiff_apply, divdiff_apply_in_order, divdiff_integral, divdiff_recursive, quadrature_nodes_for, DividedDiffSpec,
};
use mvssm_core::ensembles::{
    draw_function, draw_joint_form, draw_path, haar_unitary, rng_from_seed, EnsembleKind, EnsembleSpec, FunctionSpec,
};
use mvssm_core::ssm::SsmFunctional;
use mvssm_core::{
    antiderivative, certify_tuple, compositions, divdiff_univariate, enumerate_terms, eval_operator, eval_scalar,
    full_derivative, ordered_monomial, partial_derivative, phi, power_derivative, remainder_trace_integral,
    schatten_norm, sup_norm, taylor_remainder, CMatrix, Complex64, DerivTermSpec, DomainKind, MultiPoly,
};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn kind() -> impl Strategy<Value = EnsembleKind> {
    prop::sample::select(EnsembleKind::ALL.to_vec())
}

fn matrix(dim: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim * dim)
        .prop_map(move |v| CMatrix::from_fn(dim, |i, j| c(v[i * dim + j].0, v[i * dim + j].1)))
}

fn disc_point() -> impl Strategy<Value = Complex64> {
    (0.0..1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| Complex64::from_polar(r.sqrt(), a))
}

fn spec(kind: EnsembleKind, n: usize, dim: usize, seed: u64) -> EnsembleSpec {
    EnsembleSpec {
        kind,
        n,
        dim,
        v_scale: 0.5,
        seed,
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn schatten_two_squared_is_trace_of_gram(m in (1usize..7).prop_flat_map(matrix)) {
        let s2 = schatten_norm(&m, 2.0).unwrap();
        let gram = (&m.adjoint() * &m).trace().re;
        prop_assert!((s2 * s2 - gram).abs() <= 1e-12 * gram.max(1e-300));
    }

    #[test]
    fn trace_is_unitarily_invariant(m in (1usize..7).prop_flat_map(matrix), seed in any::<u64>()) {
        let u = haar_unitary(m.dim(), &mut rng_from_seed(seed));
        let conj = &(&u * &m) * &u.adjoint();
        let s1 = schatten_norm(&m, 1.0).unwrap();
        prop_assert!((conj.trace() - m.trace()).norm() <= 1e-11 * s1.max(1.0));
    }

    #[test]
    fn trace_norm_of_product_obeys_holder(pair in (matrix(6), matrix(6))) {
        let (m, n) = pair;
        let lhs = schatten_norm(&(&m * &n), 1.0).unwrap();
        prop_assert!(lhs <= m.frobenius() * n.frobenius() * (1.0 + 1e-12));
    }

    #[test]
    fn commuting_monomials_ignore_factor_order(
        diags in prop::collection::vec(prop::collection::vec(disc_point(), 5), 3),
        k in prop::collection::vec(0u32..4, 3),
    ) {
        let mats: Vec<CMatrix> = diags.iter().map(|d| CMatrix::from_diagonal(d)).collect();
        let tuple = certify_tuple(mats.clone(), 1e-10, 1e-10).unwrap();
        let ordered = ordered_monomial(&tuple, &k).unwrap();
        let mut reversed = CMatrix::identity(5);
        for j in (0..3).rev() {
            reversed = &reversed * &mats[j].pow(k[j]);
        }
        prop_assert!(ordered.max_abs_diff(&reversed) <= 1e-12);
    }

    #[test]
    fn operator_evaluation_is_linear(
        kind in kind(), seed in any::<u64>(), alpha in disc_point(), beta in disc_point(),
    ) {
        let path = draw_path(&spec(kind, 3, 5, seed)).unwrap();
        let f = draw_function(&FunctionSpec::new(3, 4, seed)).unwrap();
        let g = draw_function(&FunctionSpec::new(3, 4, seed ^ 1)).unwrap();
        let combo = f.scale(alpha).add(&g.scale(beta)).unwrap();
        let lhs = eval_operator(&combo, path.a()).unwrap();
        let mut rhs = eval_operator(&f, path.a()).unwrap().scale(alpha);
        rhs.axpy(beta, &eval_operator(&g, path.a()).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
    }

    #[test]
    fn operator_evaluation_matches_joint_spectrum(seed in any::<u64>(), dim in 1usize..7) {
        let s = spec(EnsembleKind::JointlyDiagonal, 2, dim, seed);
        let path = draw_path(&s).unwrap();
        let form = draw_joint_form(&s).unwrap();
        let f = draw_function(&FunctionSpec::new(2, 5, seed)).unwrap();
        let values: Vec<Complex64> = (0..dim)
            .map(|r| eval_scalar(&f, &[form.a[0][r], form.a[1][r]]).unwrap())
            .collect();
        let expected = &(&form.basis * &CMatrix::from_diagonal(&values)) * &form.basis.adjoint();
        prop_assert!(eval_operator(&f, path.a()).unwrap().max_abs_diff(&expected) <= 1e-12);
    }

    #[test]
    fn grid_sup_is_bracketed_and_monotone(seed in any::<u64>(), cube in any::<bool>()) {
        let f = draw_function(&FunctionSpec::new(2, 5, seed)).unwrap();
        let mut dom = if cube { DomainKind::cube() } else { DomainKind::torus() }.with_grid(5);
        let mut last = 0.0;
        for _ in 0..4 {
            let s = sup_norm(&f, &dom);
            prop_assert!(s.grid_sup <= s.coeff_upper * (1.0 + 1e-12));
            prop_assert!(s.grid_sup >= last);
            last = s.grid_sup;
            dom = dom.refined();
        }
    }

    #[test]
    fn antiderivative_inverts_partial_derivative(seed in any::<u64>(), order in prop::collection::vec(0u32..3, 3)) {
        let f = draw_function(&FunctionSpec::new(3, 5, seed)).unwrap();
        let back = partial_derivative(&antiderivative(&f, &order).unwrap(), &order).unwrap();
        for (k, v) in f.terms() {
            prop_assert!((back.coeff(k) - v).norm() <= 1e-12 * v.norm().max(1.0));
        }
        prop_assert_eq!(back.len(), f.len());
    }

    #[test]
    fn polynomials_round_trip_through_json(seed in any::<u64>(), n in 1usize..4) {
        let f = draw_function(&FunctionSpec::new(n, 5, seed)).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: MultiPoly = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn univariate_divided_differences_are_symmetric(
        coeffs in prop::collection::vec(disc_point(), 1..8),
        nodes in prop::collection::vec(disc_point(), 4),
    ) {
        let nodes_ok = (0..4).all(|a| (0..a).all(|b| (nodes[a] - nodes[b]).norm() > 0.1));
        prop_assume!(nodes_ok);
        let base = divdiff_univariate(&coeffs, &nodes);
        let mut perm = [0usize, 1, 2, 3];
        // Heap's algorithm over all 24 orderings.
        let mut counters = [0usize; 4];
        let mut i = 0;
        while i < 4 {
            if counters[i] < i {
                if i % 2 == 0 { perm.swap(0, i) } else { perm.swap(counters[i], i) }
                let permuted: Vec<Complex64> = perm.iter().map(|&p| nodes[p]).collect();
                let value = divdiff_univariate(&coeffs, &permuted);
                prop_assert!((value - base).norm() <= 1e-10 * (1.0 + base.norm()));
                counters[i] += 1;
                i = 0;
            } else {
                counters[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn coalescing_nodes_approach_the_derivative(
        coeffs in prop::collection::vec(disc_point(), 2..8),
        lambda in disc_point(),
        dir in 0.0..std::f64::consts::TAU,
    ) {
        let derivative: Complex64 = coeffs.iter().enumerate().skip(1)
            .map(|(k, a)| a * lambda.powu(k as u32 - 1) * k as f64)
            .sum();
        // Second-derivative bound on the disc of radius 1.01.
        let curvature: f64 = coeffs.iter().enumerate()
            .map(|(k, a)| a.norm() * (k * k.saturating_sub(1)) as f64 / 2.0 * 1.01f64.powi(k as i32))
            .sum();
        for h in [1e-2, 1e-3, 1e-4] {
            let value = divdiff_univariate(&coeffs, &[lambda, lambda + Complex64::from_polar(h, dir)]);
            prop_assert!((value - derivative).norm() <= curvature * h + 1e-10);
        }
    }

    #[test]
    fn divided_difference_routes_agree(
        seed in any::<u64>(),
        a in prop::collection::vec(disc_point(), 2..5),
        b in prop::collection::vec(disc_point(), 2..4),
        point in prop::collection::vec(disc_point(), 2),
    ) {
        let f = draw_function(&FunctionSpec { max_var_degree: Some(5), ..FunctionSpec::new(2, 10, seed) }).unwrap();
        let spec = DividedDiffSpec::new(vec![(0, a), (1, b)]).unwrap();
        let recursive = eval_scalar(&divdiff_recursive(&f, &spec).unwrap(), &point).unwrap();
        let homogeneous = eval_scalar(&divdiff_apply(&f, &spec).unwrap(), &point).unwrap();
        let reversed = eval_scalar(&divdiff_apply_in_order(&f, &spec, &[1, 0]).unwrap(), &point).unwrap();
        let quadrature = divdiff_integral(&f, &spec, quadrature_nodes_for(&f), &point).unwrap();
        let scale = 1.0 + homogeneous.norm();
        prop_assert!((homogeneous - reversed).norm() <= 1e-10 * scale);
        prop_assert!((recursive - homogeneous).norm() <= 1e-10 * scale);
        prop_assert!((quadrature - homogeneous).norm() <= 1e-10);
    }

    #[test]
    fn composition_and_term_counts(total in 0u32..8, parts in 1usize..5, n in 1usize..5, m in 1u32..6) {
        let count = compositions(total, parts).count() as u64;
        prop_assert_eq!(count, binomial(total as u64 + parts as u64 - 1, parts as u64 - 1));
        let terms = enumerate_terms(n, m);
        let expected_terms: u64 = (1..=n.min(m as usize) as u64)
            .map(|k| binomial(n as u64, k) * binomial(m as u64 - 1, k - 1))
            .sum();
        prop_assert_eq!(terms.len() as u64, expected_terms);
        for t in &terms {
            prop_assert_eq!(t.order(), m);
            let text = t.to_string();
            prop_assert_eq!(&text.parse::<DerivTermSpec>().unwrap(), t);
            let json = serde_json::to_string(t).unwrap();
            prop_assert_eq!(&serde_json::from_str::<DerivTermSpec>(&json).unwrap(), t);
        }
    }

    #[test]
    fn single_variable_derivative_is_sum_of_power_derivatives(
        kind in kind(), seed in any::<u64>(), m in 1u32..5, t in 0.0..=1.0f64,
    ) {
        let path = draw_path(&spec(kind, 1, 5, seed)).unwrap();
        let f = draw_function(&FunctionSpec::new(1, 6, seed)).unwrap();
        let h = path.a().mats()[0].clone();
        let v = path.v()[0].clone();
        let mut expected = CMatrix::zeros(5);
        for (k, coef) in f.terms() {
            expected.axpy(*coef, &power_derivative(&h, &v, k[0], m, t).unwrap());
        }
        let got = full_derivative(&f, &path, m, t).unwrap().value;
        prop_assert!(got.max_abs_diff(&expected) <= 1e-12 * (1.0 + expected.frobenius()));
    }

    #[test]
    fn derivative_is_linear_and_killed_by_degree(
        kind in kind(), seed in any::<u64>(), m in 1u32..5, alpha in disc_point(),
    ) {
        let path = draw_path(&spec(kind, 2, 4, seed)).unwrap();
        let f = draw_function(&FunctionSpec::new(2, 5, seed)).unwrap();
        let g = draw_function(&FunctionSpec::new(2, 3, seed ^ 7)).unwrap();
        let combo = f.add(&g.scale(alpha)).unwrap();
        let lhs = full_derivative(&combo, &path, m, 0.3).unwrap().value;
        let mut rhs = full_derivative(&f, &path, m, 0.3).unwrap().value;
        rhs.axpy(alpha, &full_derivative(&g, &path, m, 0.3).unwrap().value);
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + rhs.frobenius()));
        let low = draw_function(&FunctionSpec::new(2, m - 1, seed)).unwrap();
        prop_assert!(full_derivative(&low, &path, m, 0.3).unwrap().value.is_zero());
    }

    #[test]
    fn derivative_trace_is_low_degree_in_t(kind in kind(), seed in any::<u64>(), m in 1u32..4) {
        let deg = 5u32;
        let path = draw_path(&spec(kind, 2, 4, seed)).unwrap();
        let f = draw_function(&FunctionSpec::new(2, deg, seed)).unwrap();
        // A polynomial of degree ≤ deg − m has vanishing (deg − m + 1)-th difference.
        let order = (deg - m + 1) as usize;
        let h = 1.0 / order as f64;
        let samples: Vec<Complex64> = (0..=order)
            .map(|q| full_derivative(&f, &path, m, q as f64 * h).unwrap().value.trace())
            .collect();
        let mut residual = c(0.0, 0.0);
        let mut scale = 0.0;
        for (q, s) in samples.iter().enumerate() {
            let w = binomial(order as u64, q as u64) as f64 * if (order - q) % 2 == 0 { 1.0 } else { -1.0 };
            residual += s * w;
            scale += s.norm() * w.abs();
        }
        prop_assert!(residual.norm() <= 1e-9 * (1.0 + scale));
    }

    #[test]
    fn remainder_vanishes_above_degree(kind in kind(), seed in any::<u64>(), deg in 1u32..4) {
        let path = draw_path(&spec(kind, 2, 4, seed)).unwrap();
        let f = draw_function(&FunctionSpec::new(2, deg, seed)).unwrap();
        let m = deg + 1;
        prop_assert!(taylor_remainder(&f, &path, m).unwrap().value.max_abs_diff(&CMatrix::zeros(4)) <= 1e-12);
        prop_assert_eq!(remainder_trace_integral(&f, &path, m).unwrap().value, c(0.0, 0.0));
    }

    #[test]
    fn second_order_remainder_subtracts_the_first_derivative(kind in kind(), seed in any::<u64>()) {
        let path = draw_path(&spec(kind, 3, 4, seed)).unwrap();
        let f = draw_function(&FunctionSpec::new(3, 5, seed)).unwrap();
        let fb = eval_operator(&f, path.b()).unwrap();
        let fa = eval_operator(&f, path.a()).unwrap();
        let d1 = full_derivative(&f, &path, 1, 0.0).unwrap().value;
        let expected = (&(&fb - &fa) - &d1).trace();
        let got = taylor_remainder(&f, &path, 2).unwrap().value.trace();
        prop_assert!((got - expected).norm() <= 1e-12 * (1.0 + expected.norm()));
    }

    #[test]
    fn functional_is_linear_and_bounded(kind in kind(), seed in any::<u64>(), alpha in disc_point(), which in 0usize..6) {
        let path = draw_path(&spec(kind, 3, 4, seed)).unwrap();
        let term = enumerate_terms(3, 2)[which].clone();
        let g = draw_function(&FunctionSpec::new(3, 4, seed)).unwrap();
        let h = draw_function(&FunctionSpec::new(3, 4, seed ^ 3)).unwrap();
        let combo = g.add(&h.scale(alpha)).unwrap();
        let lhs = phi(&term, &combo, &path).unwrap().value;
        let rhs = phi(&term, &g, &path).unwrap().value + alpha * phi(&term, &h, &path).unwrap().value;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        let bound = SsmFunctional::new(&term, &path, &[4, 4, 4]).unwrap().tv_bound() * g.coeff_sum(1.0);
        prop_assert!(phi(&term, &g, &path).unwrap().value.norm() <= bound * (1.0 + 1e-10));
    }

    #[test]
    fn ensembles_are_certified_and_deterministic(kind in kind(), seed in any::<u64>(), n in 1usize..4, dim in 1usize..9) {
        let s = spec(kind, n, dim, seed);
        let path = draw_path(&s).unwrap();
        prop_assert!(path.in_hypothesis());
        prop_assert_eq!(path.self_adjoint(), kind.is_self_adjoint());
        for v in path.v() {
            prop_assert!(v.op_norm() <= s.v_scale * (dim as f64).sqrt() * (1.0 + 1e-12));
        }
        let again = draw_path(&s).unwrap();
        for (x, y) in path.v().iter().zip(again.v()) {
            prop_assert_eq!(x.max_abs_diff(y), 0.0);
        }
    }
}
