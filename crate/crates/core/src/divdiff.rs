//! Confluent multivariate divided differences.
//!
//! Three independent routes compute the same quantity:
//!
//! * [`divdiff_recursive`] runs the classical confluent divided-difference
//!   table one coordinate at a time;
//! * [`divdiff_apply`] uses the closed form on monomials, where the
//!   coefficient is a complete homogeneous sum `h_d` of the nodes;
//! * [`divdiff_integral`] integrates `∂^m f` over nested simplices with
//!   Gauss–Legendre after mapping each simplex to a cube.

use num_complex::Complex64;
use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::mpoly::{eval_scalar, partial_derivative, DomainKind, DomainShape, MultiIndex, MultiPoly};
use crate::quadrature::{gauss_legendre_unit, nodes_for_degree};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Divided difference of order `i_l = nodes_l.len() − 1` in coordinate `j_l`,
/// for each `l`. Coordinates are 0-based and strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DividedDiffSpec {
    coords: Vec<(usize, Vec<Complex64>)>,
}

impl DividedDiffSpec {
    pub fn new(coords: Vec<(usize, Vec<Complex64>)>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Structural(
                "divided difference needs at least one coordinate".into(),
            ));
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
        if let Some((j, _)) = coords.iter().find(|(_, nodes)| nodes.len() < 2) {
            return Err(Error::Structural(format!(
                "coordinate {} needs at least two nodes (order ≥ 1)",
                j + 1
            )));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[(usize, Vec<Complex64>)] {
        &self.coords
    }

    /// Total order `m = Σ i_l`.
    pub fn order(&self) -> u32 {
        self.coords.iter().map(|(_, n)| (n.len() - 1) as u32).sum()
    }

    /// Derivative multi-index `(0, …, i_1, …, i_k, …)` over `n_vars` variables.
    pub fn derivative_orders(&self, n_vars: usize) -> Result<Vec<u32>> {
        let mut orders = vec![0; n_vars];
        for (j, nodes) in &self.coords {
            if *j >= n_vars {
                return Err(Error::Structural(format!(
                    "coordinate {} out of range for {} variables",
                    j + 1,
                    n_vars
                )));
            }
            orders[*j] = (nodes.len() - 1) as u32;
        }
        Ok(orders)
    }

    fn factorial_product(&self) -> f64 {
        self.coords
            .iter()
            .map(|(_, n)| (1..n.len()).map(|x| x as f64).product::<f64>())
            .product()
    }
}

/// `f^{(d)}(x) / d!` for ascending coefficients `f`.
fn taylor_coefficient(f: &[Complex64], d: usize, x: Complex64) -> Complex64 {
    let mut acc = ZERO;
    for p in (d..f.len()).rev() {
        acc = acc * x + f[p] * binomial(p, d);
    }
    acc
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `f[λ_0, …, λ_k]` for a univariate polynomial with ascending coefficients.
///
/// Runs the divided-difference table after grouping equal nodes; entries
/// spanning a block of equal nodes take the Taylor coefficient
/// `f^{(L)}(λ)/L!`, which is the confluent limit of the recursion.
pub fn divdiff_univariate(f: &[Complex64], nodes: &[Complex64]) -> Complex64 {
    if nodes.is_empty() {
        return ZERO;
    }
    let mut sorted: Vec<Complex64> = Vec::with_capacity(nodes.len());
    for &x in nodes {
        match sorted.iter().rposition(|&y| y == x) {
            Some(pos) => sorted.insert(pos + 1, x),
            None => sorted.push(x),
        }
    }
    let k = sorted.len();
    // table[i] holds f[x_i, ..., x_{i+len}] for the current len
    let mut table: Vec<Complex64> = sorted.iter().map(|&x| taylor_coefficient(f, 0, x)).collect();
    for len in 1..k {
        for i in 0..k - len {
            let (xi, xj) = (sorted[i], sorted[i + len]);
            table[i] = if xi == xj {
                taylor_coefficient(f, len, xi)
            } else {
                (table[i + 1] - table[i]) / (xj - xi)
            };
        }
    }
    table[0]
}

/// Divided differences applied coordinate by coordinate through the
/// univariate table.
pub fn divdiff_recursive(f: &MultiPoly, spec: &DividedDiffSpec) -> Result<MultiPoly> {
    spec.derivative_orders(f.n_vars())?;
    let mut current = f.clone();
    for (j, nodes) in spec.coords() {
        let max_d = current.degree_in(*j) as usize;
        let cache: Vec<Complex64> = (0..=max_d)
            .map(|d| {
                let mut e = vec![ZERO; d + 1];
                e[d] = ONE;
                divdiff_univariate(&e, nodes)
            })
            .collect();
        let mut next = MultiPoly::zero(current.n_vars());
        for (k, c) in current.terms() {
            let mut idx = k.clone();
            let d = idx[*j] as usize;
            idx[*j] = 0;
            next.add_term(idx, c * cache[d]);
        }
        current = next;
    }
    Ok(current)
}

/// Complete homogeneous symmetric sum `h_d(x_0, …, x_r)`, via
/// `h_d(x_0..x_s) = h_d(x_0..x_{s−1}) + x_s·h_{d−1}(x_0..x_s)`.
pub fn complete_homogeneous(d: u32, nodes: &[Complex64]) -> Complex64 {
    let d = d as usize;
    let Some((&first, rest)) = nodes.split_first() else {
        return if d == 0 { ONE } else { ZERO };
    };
    let mut h = Vec::with_capacity(d + 1);
    let mut p = ONE;
    for _ in 0..=d {
        h.push(p);
        p *= first;
    }
    for &x in rest {
        for e in 1..=d {
            let prev = h[e - 1];
            h[e] += x * prev;
        }
    }
    h[d]
}

/// Divided difference of the monomial `z^k`: a monomial in the untouched
/// variables with coefficient `Π_l h_{k_{j_l} − i_l}(λ_{l,·})`, or zero when
/// some `k_{j_l} < i_l`.
pub fn divdiff_monomial(k: &[u32], spec: &DividedDiffSpec) -> Result<MultiPoly> {
    spec.derivative_orders(k.len())?;
    let mut coeff = ONE;
    let mut idx: MultiIndex = k.to_vec();
    for (j, nodes) in spec.coords() {
        let i = (nodes.len() - 1) as u32;
        if k[*j] < i {
            return Ok(MultiPoly::zero(k.len()));
        }
        coeff *= complete_homogeneous(k[*j] - i, nodes);
        idx[*j] = 0;
    }
    Ok(MultiPoly::monomial(idx, coeff))
}

fn apply_factor(f: &MultiPoly, j: usize, nodes: &[Complex64]) -> MultiPoly {
    let i = (nodes.len() - 1) as u32;
    let mut out = MultiPoly::zero(f.n_vars());
    for (k, c) in f.terms() {
        if k[j] < i {
            continue;
        }
        let mut idx = k.clone();
        idx[j] = 0;
        out.add_term(idx, c * complete_homogeneous(k[j] - i, nodes));
    }
    out
}

/// Linear extension of [`divdiff_monomial`] over the support of `f`.
pub fn divdiff_apply(f: &MultiPoly, spec: &DividedDiffSpec) -> Result<MultiPoly> {
    spec.derivative_orders(f.n_vars())?;
    let mut out = MultiPoly::zero(f.n_vars());
    for (k, c) in f.terms() {
        for (idx, d) in divdiff_monomial(k, spec)?.terms() {
            out.add_term(idx.clone(), c * d);
        }
    }
    Ok(out)
}

/// Applies the single-coordinate factors of `spec` in the given order
/// (a permutation of `0..k`). Every order yields the same polynomial.
pub fn divdiff_apply_in_order(f: &MultiPoly, spec: &DividedDiffSpec, order: &[usize]) -> Result<MultiPoly> {
    spec.derivative_orders(f.n_vars())?;
    let mut seen = vec![false; spec.coords().len()];
    if order.len() != seen.len()
        || order
            .iter()
            .any(|&o| o >= seen.len() || std::mem::replace(&mut seen[o], true))
    {
        return Err(Error::Structural(
            "order is not a permutation of the spec factors".into(),
        ));
    }
    let mut current = f.clone();
    for &o in order {
        let (j, nodes) = &spec.coords()[o];
        current = apply_factor(&current, *j, nodes);
    }
    Ok(current)
}

/// Node count making the simplex quadrature exact for `f`.
pub fn quadrature_nodes_for(f: &MultiPoly) -> usize {
    let maxdeg = f.degrees().into_iter().max().unwrap_or(0);
    nodes_for_degree(maxdeg).max(1)
}

/// Nested-simplex integral representation evaluated at `point`; the entries
/// of `point` at the spec coordinates are ignored.
///
/// Each simplex `1 ≥ t_1 ≥ … ≥ t_i ≥ 0` is mapped to the unit cube by
/// `t_r = t_{r−1}·u_r`, with Jacobian `t_1···t_{i−1}`, and integrated with
/// `nodes_per_axis` Gauss–Legendre points in every `u_r`.
pub fn divdiff_integral(
    f: &MultiPoly,
    spec: &DividedDiffSpec,
    nodes_per_axis: usize,
    point: &[Complex64],
) -> Result<Complex64> {
    f.check_arity(point.len())?;
    let orders = spec.derivative_orders(f.n_vars())?;
    let g = partial_derivative(f, &orders)?;
    if g.is_zero() {
        return Ok(ZERO);
    }
    let rule = gauss_legendre_unit(nodes_per_axis);

    // (argument, weight) samples per spec factor
    let mut factor_samples: Vec<Vec<(Complex64, f64)>> = Vec::new();
    for (_, nodes) in spec.coords() {
        let i = nodes.len() - 1;
        let mut samples = Vec::with_capacity(rule.len().pow(i as u32));
        let mut digits = vec![0usize; i];
        loop {
            let mut t = Vec::with_capacity(i);
            let mut weight = 1.0;
            let mut prev = 1.0;
            for (r, &dgt) in digits.iter().enumerate() {
                let (u, w) = rule[dgt];
                let tr = prev * u;
                weight *= w;
                if r + 1 < i {
                    weight *= tr;
                }
                t.push(tr);
                prev = tr;
            }
            // Σ_{l=1}^{i} (λ_{l−1} − λ_l)·t_{i+1−l} + λ_i
            let mut arg = nodes[i];
            for l in 1..=i {
                arg += (nodes[l - 1] - nodes[l]) * t[i - l];
            }
            samples.push((arg, weight));

            let mut pos = 0;
            loop {
                if pos == i {
                    break;
                }
                digits[pos] += 1;
                if digits[pos] < rule.len() {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
            if pos == i {
                break;
            }
        }
        factor_samples.push(samples);
    }

    let mut z = point.to_vec();
    let mut total = ZERO;
    let mut idx = vec![0usize; factor_samples.len()];
    loop {
        let mut weight = 1.0;
        for (l, (j, _)) in spec.coords().iter().enumerate() {
            let (arg, w) = factor_samples[l][idx[l]];
            z[*j] = arg;
            weight *= w;
        }
        total += eval_scalar(&g, &z)? * weight;

        let mut pos = 0;
        while pos < idx.len() {
            idx[pos] += 1;
            if idx[pos] < factor_samples[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == idx.len() {
            break;
        }
    }
    Ok(total)
}

/// `(1/Π i_l!)·Σ|coefficients of ∂^m f|`, an upper bound for the divided
/// difference over nodes and points in the closed polydisc of the domain radius.
pub fn divdiff_bound(f: &MultiPoly, spec: &DividedDiffSpec, dom: &DomainKind) -> Result<f64> {
    let orders = spec.derivative_orders(f.n_vars())?;
    let g = partial_derivative(f, &orders)?;
    Ok(g.coeff_sum(dom.radius) / spec.factorial_product())
}

/// Draws one point of `Ω` at random.
pub fn sample_domain_point<R: Rng + ?Sized>(dom: &DomainKind, rng: &mut R) -> Complex64 {
    match dom.kind {
        DomainShape::Torus => Complex64::from_polar(dom.radius, rng.random_range(0.0..std::f64::consts::TAU)),
        DomainShape::Cube => Complex64::new(rng.random_range(-dom.radius..=dom.radius), 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct BoundAudit {
    pub samples: usize,
    pub violations: usize,
    /// Largest `|divided difference| / bound` seen.
    pub max_ratio: f64,
}

/// Samples nodes and evaluation points from `dom` and checks
/// `|divided difference| ≤ bound·(1 + slack)` at each draw.
///
/// `shape` lists `(coordinate, order)` pairs; the node values are redrawn
/// for every sample.
pub fn audit_bound<R: Rng + ?Sized>(
    f: &MultiPoly,
    shape: &[(usize, usize)],
    dom: &DomainKind,
    draws: usize,
    slack: f64,
    rng: &mut R,
) -> Result<BoundAudit> {
    let mut audit = BoundAudit::default();
    for _ in 0..draws {
        let coords = shape
            .iter()
            .map(|&(j, i)| (j, (0..=i).map(|_| sample_domain_point(dom, rng)).collect()))
            .collect();
        let spec = DividedDiffSpec::new(coords)?;
        let point: Vec<Complex64> = (0..f.n_vars()).map(|_| sample_domain_point(dom, rng)).collect();
        let value = eval_scalar(&divdiff_apply(f, &spec)?, &point)?.norm();
        let bound = divdiff_bound(f, &spec, dom)?;
        audit.samples += 1;
        if value > bound * (1.0 + slack) {
            audit.violations += 1;
        }
        if bound > 0.0 {
            audit.max_ratio = audit.max_ratio.max(value / bound);
        } else if value > 0.0 {
            audit.max_ratio = f64::INFINITY;
        }
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn r(x: f64) -> Complex64 {
        c(x, 0.0)
    }

    fn eval_uni(f: &[Complex64], x: Complex64) -> Complex64 {
        f.iter().rev().fold(ZERO, |acc, &a| acc * x + a)
    }

    /// Textbook recursion for pairwise distinct nodes.
    fn brute(f: &[Complex64], nodes: &[Complex64]) -> Complex64 {
        if nodes.len() == 1 {
            return eval_uni(f, nodes[0]);
        }
        let k = nodes.len() - 1;
        (brute(f, &nodes[1..]) - brute(f, &nodes[..k])) / (nodes[k] - nodes[0])
    }

    fn zpow(d: usize) -> Vec<Complex64> {
        let mut e = vec![ZERO; d + 1];
        e[d] = r(1.0);
        e
    }

    #[test]
    fn univariate_examples() {
        assert!((divdiff_univariate(&zpow(2), &[r(0.0), r(1.0)]) - r(1.0)).norm() < 1e-15);
        assert!((divdiff_univariate(&zpow(2), &[r(1.0), r(1.0)]) - r(2.0)).norm() < 1e-15);
        let nodes = [r(1.0), r(2.0), r(3.0)];
        // z^3 over three nodes is h_1 = a + b + c
        assert!((brute(&zpow(3), &nodes) - r(6.0)).norm() < 1e-13);
        assert!((divdiff_univariate(&zpow(3), &nodes) - r(6.0)).norm() < 1e-13);
        // z^4 over three nodes is h_2 = a²+b²+c²+ab+ac+bc
        assert!((brute(&zpow(4), &nodes) - r(25.0)).norm() < 1e-12);
        assert!((divdiff_univariate(&zpow(4), &nodes) - r(25.0)).norm() < 1e-12);
    }

    #[test]
    fn univariate_matches_brute_force_on_distinct_nodes() {
        let f = [
            c(0.3, 0.1),
            c(-1.0, 0.5),
            c(0.2, 0.0),
            c(0.0, -0.7),
            c(1.1, 0.2),
            c(-0.4, 0.4),
        ];
        let nodes = [c(0.9, 0.1), c(-0.3, 0.8), c(0.1, -0.6), c(-0.7, -0.2), c(0.5, 0.5)];
        for k in 1..=nodes.len() {
            let a = divdiff_univariate(&f, &nodes[..k]);
            let b = brute(&f, &nodes[..k]);
            assert!((a - b).norm() < 1e-12, "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn univariate_symmetric_under_permutations() {
        let f = [
            c(0.1, 0.0),
            c(1.0, -1.0),
            c(0.0, 2.0),
            c(-0.5, 0.0),
            c(0.3, 0.3),
            c(0.0, 0.1),
        ];
        let base = [c(0.2, 0.9), c(-0.8, 0.1), c(0.4, -0.4), c(0.95, 0.0)];
        let reference = divdiff_univariate(&f, &base);
        let mut count = 0;
        for a in 0..4 {
            for b in 0..4 {
                for cc in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, cc, d];
                        let mut s = p.to_vec();
                        s.sort();
                        s.dedup();
                        if s.len() != 4 {
                            continue;
                        }
                        count += 1;
                        let nodes: Vec<_> = p.iter().map(|&i| base[i]).collect();
                        assert!((divdiff_univariate(&f, &nodes) - reference).norm() < 1e-12);
                    }
                }
            }
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn confluence_continuity() {
        let f = [
            c(0.5, 0.0),
            c(0.0, 1.0),
            c(-1.0, 0.0),
            c(0.2, 0.3),
            c(0.0, 0.0),
            c(0.1, -0.1),
        ];
        let lam = c(0.3, -0.4);
        let exact = taylor_coefficient(&f, 1, lam);
        assert!((divdiff_univariate(&f, &[lam, lam]) - exact).norm() < 1e-15);
        let mut prev = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let gap = (divdiff_univariate(&f, &[lam, lam + h]) - exact).norm();
            assert!(gap <= 10.0 * h, "h={h}: {gap}");
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn complete_homogeneous_small_cases() {
        let (a, b) = (c(0.5, 0.2), c(-0.1, 0.9));
        assert_eq!(complete_homogeneous(0, &[a, b]), r(1.0));
        assert!((complete_homogeneous(1, &[a, b]) - (a + b)).norm() < 1e-15);
        assert!((complete_homogeneous(2, &[a, b]) - (a * a + a * b + b * b)).norm() < 1e-15);
        assert!((complete_homogeneous(3, &[r(0.0), r(0.0), r(0.0)])).norm() == 0.0);
    }

    #[test]
    fn monomial_examples() {
        let (l0, l1) = (c(0.3, 0.7), c(-0.6, 0.2));
        let spec = DividedDiffSpec::new(vec![(0, vec![l0, l1])]).unwrap();
        let got = divdiff_monomial(&[2, 1], &spec).unwrap();
        assert_eq!(got, MultiPoly::monomial(vec![0, 1], l0 + l1));
        // agrees with the recursion route
        let rec = divdiff_recursive(&MultiPoly::monomial(vec![2, 1], r(1.0)), &spec).unwrap();
        assert!((rec.coeff(&[0, 1]) - (l0 + l1)).norm() < 1e-15);

        let spec2 = DividedDiffSpec::new(vec![(1, vec![l0, l1, l0])]).unwrap();
        assert!(divdiff_monomial(&[3, 1], &spec2).unwrap().is_zero());

        let spec3 = DividedDiffSpec::new(vec![(0, vec![r(0.0); 3])]).unwrap();
        assert!(divdiff_monomial(&[3], &spec3).unwrap().is_zero());
    }

    #[test]
    fn apply_examples() {
        let spec = DividedDiffSpec::new(vec![
            (0, vec![c(0.1, 0.2), c(0.9, 0.0)]),
            (1, vec![c(0.0, 1.0), r(-0.5)]),
        ])
        .unwrap();
        assert!(divdiff_apply(&MultiPoly::constant(2, c(3.0, 1.0)), &spec)
            .unwrap()
            .is_zero());
        let z1z2 = MultiPoly::monomial(vec![1, 1], r(1.0));
        assert_eq!(divdiff_apply(&z1z2, &spec).unwrap(), MultiPoly::constant(2, r(1.0)));
    }

    #[test]
    fn spec_validation() {
        assert!(DividedDiffSpec::new(vec![(1, vec![r(0.0), r(1.0)]), (0, vec![r(0.0), r(1.0)])]).is_err());
        assert!(DividedDiffSpec::new(vec![(0, vec![r(0.0)])]).is_err());
        assert!(DividedDiffSpec::new(vec![]).is_err());
        let spec = DividedDiffSpec::new(vec![(2, vec![r(0.0), r(1.0)])]).unwrap();
        assert!(divdiff_apply(&MultiPoly::zero(2), &spec).is_err());
    }

    #[test]
    fn integral_examples() {
        let z2 = MultiPoly::univariate(&zpow(2));
        let spec = DividedDiffSpec::new(vec![(0, vec![r(0.0), r(1.0)])]).unwrap();
        let v = divdiff_integral(&z2, &spec, 2, &[ZERO]).unwrap();
        assert!((v - r(1.0)).norm() < 1e-15);

        let z1z2 = MultiPoly::monomial(vec![1, 1], r(1.0));
        let spec = DividedDiffSpec::new(vec![(0, vec![c(0.4, 0.1), c(-0.2, 0.8)])]).unwrap();
        let point = [ZERO, c(0.3, -0.7)];
        let v = divdiff_integral(&z1z2, &spec, 1, &point).unwrap();
        assert!((v - point[1]).norm() < 1e-15);
    }

    #[test]
    fn integral_repeated_nodes_is_scaled_derivative() {
        let f = MultiPoly::from_terms(
            2,
            [
                (vec![4, 2], c(0.5, -0.1)),
                (vec![3, 3], c(0.0, 1.0)),
                (vec![2, 0], r(2.0)),
                (vec![1, 2], c(-0.3, 0.3)),
            ],
        )
        .unwrap();
        let lam = c(0.2, 0.6);
        let mu = c(-0.5, 0.1);
        let spec = DividedDiffSpec::new(vec![(0, vec![lam; 3]), (1, vec![mu; 2])]).unwrap();
        let at = [lam, mu];
        let d = eval_scalar(&partial_derivative(&f, &[2, 1]).unwrap(), &at).unwrap() / 2.0;
        let v = divdiff_integral(&f, &spec, quadrature_nodes_for(&f), &at).unwrap();
        assert!((v - d).norm() < 1e-13);
        let a = eval_scalar(&divdiff_apply(&f, &spec).unwrap(), &at).unwrap();
        assert!((a - d).norm() < 1e-13);
    }

    #[test]
    fn permutation_of_factor_order() {
        let f = MultiPoly::from_terms(
            3,
            [
                (vec![3, 2, 4], c(0.2, 0.1)),
                (vec![2, 2, 2], c(-1.0, 0.0)),
                (vec![5, 1, 3], c(0.0, 0.4)),
                (vec![1, 1, 1], r(0.7)),
            ],
        )
        .unwrap();
        let spec = DividedDiffSpec::new(vec![
            (0, vec![c(0.1, 0.2), c(0.3, -0.3), c(0.1, 0.2)]),
            (1, vec![c(0.0, 1.0), r(0.5)]),
            (2, vec![r(-0.4), c(0.6, 0.6), r(0.1), c(0.0, -0.2)]),
        ])
        .unwrap();
        let reference = divdiff_apply(&f, &spec).unwrap();
        for order in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let got = divdiff_apply_in_order(&f, &spec, &order).unwrap();
            for (k, cf) in reference.terms() {
                assert!((got.coeff(k) - cf).norm() < 1e-12);
            }
            assert_eq!(got.len(), reference.len());
        }
        assert!(divdiff_apply_in_order(&f, &spec, &[0, 0, 1]).is_err());
    }

    #[test]
    fn bound_examples() {
        let z1sq = MultiPoly::monomial(vec![2, 0], r(1.0));
        let spec = DividedDiffSpec::new(vec![(0, vec![c(0.3, 0.3), r(-0.8), c(0.0, 0.5)])]).unwrap();
        assert!((divdiff_bound(&z1sq, &spec, &DomainKind::torus()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(divdiff_apply(&z1sq, &spec).unwrap(), MultiPoly::constant(2, r(1.0)));
        let k = MultiPoly::constant(2, r(4.0));
        assert_eq!(divdiff_bound(&k, &spec, &DomainKind::torus()).unwrap(), 0.0);
    }

    #[test]
    fn bound_audit_on_torus() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = MultiPoly::from_terms(
            2,
            [
                (vec![3, 1], c(0.2, -0.5)),
                (vec![4, 2], c(1.0, 0.0)),
                (vec![2, 3], c(0.0, 0.3)),
                (vec![0, 1], r(2.0)),
            ],
        )
        .unwrap();
        let audit = audit_bound(&f, &[(0, 2), (1, 1)], &DomainKind::torus(), 200, 1e-8, &mut rng).unwrap();
        assert_eq!(audit.samples, 200);
        assert_eq!(audit.violations, 0);
        assert!(audit.max_ratio <= 1.0 + 1e-8);
    }
}
