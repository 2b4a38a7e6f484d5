//! Gauss–Legendre rules mapped to `[0, 1]`.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

/// `(node, weight)` pairs of the `n`-point Gauss–Legendre rule on `[0, 1]`.
/// Exact for polynomials of degree `≤ 2n − 1`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("n >= 1");
    GaussLegendre::new(n)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Smallest rule exact for polynomials of degree `≤ degree`.
pub fn nodes_for_degree(degree: u32) -> usize {
    (degree as usize + 2) / 2
}
