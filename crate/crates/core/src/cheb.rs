//! Chebyshev polynomial machinery: the shifted Laplacian, basis application
//! through the three-term recurrence, and the node-value reparameterization
//! that turns learnable values at Chebyshev nodes into expansion coefficients.
//!
//! The whole point of this path is that a degree-K filter costs K sparse
//! products and nothing else — no eigendecomposition, no inversion.

use crate::graph::{GraphError, SparseSymMatrix};
use crate::matrix::Matrix;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChebError {
    #[error("expected {expected} coefficients for an order-{order} stack, got {got}")]
    CoeffLengthMismatch {
        order: usize,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Learnable values at the K+1 Chebyshev nodes of order K.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeValueCoeffs {
    node_values: Vec<f64>,
}

impl NodeValueCoeffs {
    /// Wraps K+1 node values for an order-K filter.
    pub fn new(node_values: Vec<f64>) -> Self {
        assert!(!node_values.is_empty(), "need at least one node value");
        Self { node_values }
    }

    pub fn constant(order: usize, value: f64) -> Self {
        Self::new(vec![value; order + 1])
    }

    pub fn order(&self) -> usize {
        self.node_values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.node_values
    }
}

/// Chebyshev nodes `cos((j + 1/2) pi / (K+1))` for `j = 0..=K`, strictly
/// decreasing in (-1, 1).
///
/// Built by mirroring so antisymmetric pairs cancel exactly in floating
/// point; with an odd count the middle node is exactly zero.
pub fn cheb_nodes(order: usize) -> Vec<f64> {
    let count = order + 1;
    let mut nodes = vec![0.0; count];
    for j in 0..count / 2 {
        let theta = (j as f64 + 0.5) * PI / count as f64;
        let c = theta.cos();
        nodes[j] = c;
        nodes[count - 1 - j] = -c;
    }
    nodes
}

/// Conversion matrix from node values to expansion coefficients:
/// `coeffs = M * node_values`, with `M[k][j] = (2 - [k=0]) / (K+1) * T_k(x_j)`.
pub fn interp_matrix(order: usize) -> Matrix {
    let count = order + 1;
    let nodes = cheb_nodes(order);
    // T_k(x_j) by the recurrence, one column per node.
    let mut t_prev = vec![1.0; count];
    let mut t_curr = nodes.clone();
    let mut m = Matrix::zeros(count, count);
    for k in 0..count {
        let factor = if k == 0 { 1.0 } else { 2.0 } / count as f64;
        let t_k: &[f64] = if k == 0 { &t_prev } else { &t_curr };
        for j in 0..count {
            m[(k, j)] = factor * t_k[j];
        }
        if k > 0 {
            let t_next: Vec<f64> = (0..count)
                .map(|j| 2.0 * nodes[j] * t_curr[j] - t_prev[j])
                .collect();
            t_prev = std::mem::take(&mut t_curr);
            t_curr = t_next;
        }
    }
    m
}

/// Coefficients of the degree-K Chebyshev expansion that interpolates the
/// node values; linear in the node values.
pub fn interp_to_coeffs(c: &NodeValueCoeffs) -> Vec<f64> {
    let m = interp_matrix(c.order());
    let count = c.order() + 1;
    let mut coeffs = vec![0.0; count];
    for k in 0..count {
        let mut acc = 0.0;
        for j in 0..count {
            acc += m[(k, j)] * c.values()[j];
        }
        coeffs[k] = acc;
    }
    coeffs
}

/// Evaluates a Chebyshev expansion at a scalar point by Clenshaw recursion.
pub fn cheb_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + x * b1 - b2
}

/// Evaluates the Chebyshev polynomial `T_k` at a scalar point.
pub fn cheb_t(k: usize, x: f64) -> f64 {
    let mut t_prev = 1.0;
    if k == 0 {
        return t_prev;
    }
    let mut t_curr = x;
    for _ in 1..k {
        let t_next = 2.0 * x * t_curr - t_prev;
        t_prev = t_curr;
        t_curr = t_next;
    }
    t_curr
}

/// Shifts the normalized Laplacian onto the Chebyshev domain: `L - I`, which
/// maps the spectrum [0, 2] onto [-1, 1]. Rows without a stored diagonal
/// (isolated nodes) gain an explicit -1 entry.
pub fn shift_laplacian(l: &SparseSymMatrix) -> SparseSymMatrix {
    let n = l.num_nodes();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for r in 0..n {
        let mut diagonal_seen = false;
        for (c, v) in l.row_entries(r) {
            if !diagonal_seen && c > r {
                col_indices.push(r);
                values.push(-1.0);
                diagonal_seen = true;
            }
            if c == r {
                diagonal_seen = true;
                let shifted = v - 1.0;
                if shifted != 0.0 {
                    col_indices.push(c);
                    values.push(shifted);
                }
            } else {
                col_indices.push(c);
                values.push(v);
            }
        }
        if !diagonal_seen {
            col_indices.push(r);
            values.push(-1.0);
        }
        row_offsets.push(col_indices.len());
    }
    SparseSymMatrix::new(n, row_offsets, col_indices, values)
}

/// The K+1 basis blocks `T_k(Lhat) X` for one input signal.
#[derive(Clone, Debug)]
pub struct ChebStack {
    blocks: Vec<Matrix>,
}

impl ChebStack {
    pub fn order(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &Matrix {
        &self.blocks[k]
    }
}

/// Materializes the basis stack through the three-term recurrence:
/// `T_0 X = X`, `T_1 X = Lhat X`, `T_k X = 2 Lhat T_{k-1} X - T_{k-2} X`.
pub fn cheb_apply(
    lhat: &SparseSymMatrix,
    x: &Matrix,
    order: usize,
) -> Result<ChebStack, ChebError> {
    let mut blocks = Vec::with_capacity(order + 1);
    blocks.push(x.clone());
    if order >= 1 {
        blocks.push(lhat.spmm(x)?);
    }
    for k in 2..=order {
        let mut next = lhat.spmm(&blocks[k - 1])?.scale(2.0);
        next.add_assign_scaled(&blocks[k - 2], -1.0);
        blocks.push(next);
    }
    Ok(ChebStack { blocks })
}

/// `sum_k coeffs[k] * blocks[k]`; linear in both arguments.
pub fn combine(stack: &ChebStack, coeffs: &[f64]) -> Result<Matrix, ChebError> {
    if coeffs.len() != stack.blocks.len() {
        return Err(ChebError::CoeffLengthMismatch {
            order: stack.order(),
            expected: stack.blocks.len(),
            got: coeffs.len(),
        });
    }
    let (rows, cols) = stack.blocks[0].shape();
    let mut out = Matrix::zeros(rows, cols);
    for (block, &c) in stack.blocks.iter().zip(coeffs) {
        out.add_assign_scaled(block, c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{erdos_renyi_graph, normalized_laplacian, Graph};
    use crate::spectral::eigendecompose;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path2_lhat() -> SparseSymMatrix {
        let g = Graph::from_edges(&[(0, 1)], 2).unwrap();
        shift_laplacian(&normalized_laplacian(&g))
    }

    #[test]
    fn shifted_path_laplacian() {
        let lhat = path2_lhat();
        let dense = lhat.to_dense();
        assert_eq!(dense.data(), &[0.0, -1.0, -1.0, 0.0]);
        let d = eigendecompose(&lhat).unwrap();
        assert!((d.eigenvalues()[0] + 1.0).abs() < 1e-10);
        assert!((d.eigenvalues()[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn shifting_identity_gives_zero_matrix() {
        let lhat = shift_laplacian(&SparseSymMatrix::identity(4));
        assert_eq!(lhat.to_dense(), Matrix::zeros(4, 4));
    }

    #[test]
    fn shifted_spectrum_stays_in_unit_interval() {
        for seed in 0..10 {
            let g = erdos_renyi_graph(25, 0.15, seed);
            let lhat = shift_laplacian(&normalized_laplacian(&g));
            let d = eigendecompose(&lhat).unwrap();
            for &l in d.eigenvalues() {
                assert!((-1.0 - 1e-8..=1.0 + 1e-8).contains(&l), "eigenvalue {l}");
            }
        }
    }

    #[test]
    fn isolated_node_gets_explicit_shifted_diagonal() {
        let g = Graph::from_edges(&[(0, 1)], 3).unwrap();
        let lhat = shift_laplacian(&normalized_laplacian(&g));
        assert_eq!(lhat.get(2, 2), -1.0);
    }

    #[test]
    fn node_values_for_small_orders() {
        let n0 = cheb_nodes(0);
        assert_eq!(n0, vec![0.0]);
        let n1 = cheb_nodes(1);
        let expected = (PI / 4.0).cos();
        assert!((n1[0] - expected).abs() < 1e-15);
        assert_eq!(n1[1], -n1[0]);
    }

    #[test]
    fn nodes_are_strictly_decreasing() {
        for order in [0, 1, 2, 5, 10, 11] {
            let nodes = cheb_nodes(order);
            assert_eq!(nodes.len(), order + 1);
            for w in nodes.windows(2) {
                assert!(w[0] > w[1]);
            }
            for &x in &nodes {
                assert!((-1.0..1.0).contains(&x));
            }
        }
    }

    #[test]
    fn nodes_are_roots_of_next_chebyshev() {
        for order in [3, 10] {
            for &x in &cheb_nodes(order) {
                assert!(cheb_t(order + 1, x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_node_values_give_unit_leading_coefficient() {
        let coeffs = interp_to_coeffs(&NodeValueCoeffs::constant(10, 3.5));
        assert!((coeffs[0] - 3.5).abs() < 1e-12);
        for &c in &coeffs[1..] {
            assert!(c.abs() < 1e-13, "spurious coefficient {c}");
        }
    }

    #[test]
    fn sampling_t3_recovers_unit_vector() {
        let nodes = cheb_nodes(10);
        let values: Vec<f64> = nodes.iter().map(|&x| cheb_t(3, x)).collect();
        let coeffs = interp_to_coeffs(&NodeValueCoeffs::new(values));
        for (k, &c) in coeffs.iter().enumerate() {
            let expected = if k == 3 { 1.0 } else { 0.0 };
            assert!((c - expected).abs() < 1e-10, "coeff {k} = {c}");
        }
    }

    #[test]
    fn expansion_round_trips_through_the_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let values: Vec<f64> = (0..11).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let nv = NodeValueCoeffs::new(values.clone());
        let coeffs = interp_to_coeffs(&nv);
        for (j, &x) in cheb_nodes(10).iter().enumerate() {
            assert!((cheb_eval(&coeffs, x) - values[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn stack_order_zero_is_just_the_signal() {
        let lhat = path2_lhat();
        let x = Matrix::column(&[1.0, 0.0]);
        let stack = cheb_apply(&lhat, &x, 0).unwrap();
        assert_eq!(stack.blocks().len(), 1);
        assert_eq!(stack.block(0), &x);
    }

    #[test]
    fn stack_first_block_is_shifted_product() {
        let lhat = path2_lhat();
        let x = Matrix::column(&[1.0, 0.0]);
        let stack = cheb_apply(&lhat, &x, 1).unwrap();
        assert_eq!(stack.block(1).data(), &[0.0, -1.0]);
    }

    #[test]
    fn stack_second_block_matches_dense_power_oracle() {
        let g = erdos_renyi_graph(20, 0.3, 21);
        let lhat = shift_laplacian(&normalized_laplacian(&g));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::from_vec(20, 2, (0..40).map(|_| rng.random::<f64>() - 0.5).collect());
        let stack = cheb_apply(&lhat, &x, 2).unwrap();
        let dense = lhat.to_dense();
        let mut oracle = dense.matmul(&dense.matmul(&x)).scale(2.0);
        oracle.add_assign_scaled(&x, -1.0);
        assert!(stack.block(2).max_abs_diff(&oracle) < 1e-10);
    }

    #[test]
    fn recurrence_invariant_holds_along_the_stack() {
        let g = erdos_renyi_graph(15, 0.25, 33);
        let lhat = shift_laplacian(&normalized_laplacian(&g));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Matrix::from_vec(15, 1, (0..15).map(|_| rng.random::<f64>()).collect());
        let stack = cheb_apply(&lhat, &x, 8).unwrap();
        assert_eq!(stack.block(0), &x);
        assert!(stack.block(1).max_abs_diff(&lhat.spmm(&x).unwrap()) < 1e-15);
        for k in 2..=8 {
            let mut expect = lhat.spmm(stack.block(k - 1)).unwrap().scale(2.0);
            expect.add_assign_scaled(stack.block(k - 2), -1.0);
            assert!(stack.block(k).max_abs_diff(&expect) < 1e-10);
        }
    }

    #[test]
    fn combine_unit_and_zero_coefficients() {
        let lhat = path2_lhat();
        let x = Matrix::column(&[0.25, -2.0]);
        let stack = cheb_apply(&lhat, &x, 3).unwrap();
        let e0 = combine(&stack, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(e0, x);
        let zero = combine(&stack, &[0.0; 4]).unwrap();
        assert_eq!(zero, Matrix::zeros(2, 1));
    }

    #[test]
    fn combine_rejects_wrong_length() {
        let lhat = path2_lhat();
        let stack = cheb_apply(&lhat, &Matrix::zeros(2, 1), 2).unwrap();
        assert!(matches!(
            combine(&stack, &[1.0]),
            Err(ChebError::CoeffLengthMismatch { .. })
        ));
    }

    /// The load-bearing property: the recurrence path equals exact spectral
    /// filtering by the induced scalar polynomial.
    #[test]
    fn combine_matches_spectral_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..4 {
            let g = erdos_renyi_graph(50, 0.12, 500 + seed);
            let l = normalized_laplacian(&g);
            let lhat = shift_laplacian(&l);
            let x = Matrix::from_vec(50, 2, (0..100).map(|_| rng.random::<f64>() - 0.5).collect());
            let gamma: Vec<f64> = (0..11).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let coeffs = interp_to_coeffs(&NodeValueCoeffs::new(gamma));

            let stack = cheb_apply(&lhat, &x, 10).unwrap();
            let recurrence = combine(&stack, &coeffs).unwrap();

            let d = eigendecompose(&l).unwrap();
            let c = coeffs.clone();
            let spectral = d
                .filter_with(|lambda| cheb_eval(&c, lambda - 1.0), &x)
                .unwrap();
            let diff = recurrence.max_abs_diff(&spectral);
            assert!(diff < 1e-7, "seed {seed}: defect {diff}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Degree <= K polynomials are reproduced exactly by interpolation.
        #[test]
        fn interpolation_is_exact_for_low_degree(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 1..=11)
        ) {
            let order = 10;
            let nodes = cheb_nodes(order);
            let values: Vec<f64> = nodes.iter().map(|&x| cheb_eval(&coeffs, x)).collect();
            let recovered = interp_to_coeffs(&NodeValueCoeffs::new(values));
            for k in 0..=order {
                let expected = coeffs.get(k).copied().unwrap_or(0.0);
                prop_assert!((recovered[k] - expected).abs() < 1e-10);
            }
        }

        /// Node-value to coefficient conversion is linear.
        #[test]
        fn interpolation_is_linear(
            a in proptest::collection::vec(-1.0f64..1.0, 6),
            b in proptest::collection::vec(-1.0f64..1.0, 6),
            s in -3.0f64..3.0
        ) {
            let ca = interp_to_coeffs(&NodeValueCoeffs::new(a.clone()));
            let cb = interp_to_coeffs(&NodeValueCoeffs::new(b.clone()));
            let mixed: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| x + s * y).collect();
            let cm = interp_to_coeffs(&NodeValueCoeffs::new(mixed));
            for k in 0..6 {
                prop_assert!((cm[k] - (ca[k] + s * cb[k])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bounded_spectrum_keeps_stack_finite() {
        let g = erdos_renyi_graph(40, 0.2, 3);
        let lhat = shift_laplacian(&normalized_laplacian(&g));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Matrix::from_vec(40, 1, (0..40).map(|_| rng.random::<f64>() * 10.0).collect());
        let stack = cheb_apply(&lhat, &x, 20).unwrap();
        for block in stack.blocks() {
            assert!(block.all_finite());
        }
    }
}
