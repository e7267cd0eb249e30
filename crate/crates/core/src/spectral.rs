//! Exact spectral filtering via dense symmetric eigendecomposition.
//!
//! This is the oracle side of the project: it generates experiment targets
//! and verifies the recurrence-based filter path. It is deliberately capped
//! at desk scale; the trained model never goes through here.

use crate::graph::SparseSymMatrix;
use crate::matrix::Matrix;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Largest matrix the dense eigensolver will accept by default.
pub const DEFAULT_DENSE_LIMIT: usize = 3000;

const OFF_DIAG_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix of size {n} exceeds the dense eigensolver limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("Jacobi sweep cap reached; off-diagonal norm still {off_diag:.3e}")]
    NotConverged { off_diag: f64 },
    #[error("decomposition is over {expected} nodes but signal has {got} rows")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric
/// matrix; column k of the eigenvector matrix pairs with eigenvalue k.
///
/// Equal eigenvalues carry no ordering guarantee beyond the ascending
/// values, so checks against a decomposition should use residuals or
/// reconstructions, never eigenvector equality.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn num_nodes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(f(lambda)) U^T x` for an arbitrary scalar response.
    pub fn filter_with(
        &self,
        f: impl Fn(f64) -> f64,
        x: &Matrix,
    ) -> Result<Matrix, SpectralError> {
        if x.rows() != self.num_nodes() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.num_nodes(),
                got: x.rows(),
            });
        }
        let mut spectral = self.eigenvectors.matmul_at(x);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let gain = f(lambda);
            for v in spectral.row_mut(k) {
                *v *= gain;
            }
        }
        Ok(self.eigenvectors.matmul(&spectral))
    }
}

/// Dense symmetric eigendecomposition with the default size cap.
pub fn eigendecompose(m: &SparseSymMatrix) -> Result<SpectralDecomposition, SpectralError> {
    eigendecompose_with_limit(m, DEFAULT_DENSE_LIMIT)
}

/// Cyclic Jacobi rotations on a dense copy. Converges when the off-diagonal
/// Frobenius norm drops below 1e-10; errors out after 100 sweeps.
pub fn eigendecompose_with_limit(
    m: &SparseSymMatrix,
    dense_limit: usize,
) -> Result<SpectralDecomposition, SpectralError> {
    let n = m.num_nodes();
    if n > dense_limit {
        return Err(SpectralError::TooLarge { n, limit: dense_limit });
    }
    debug_assert!(m.symmetry_defect() <= 1e-9, "input is not value-symmetric");
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: Matrix::zeros(0, 0),
        });
    }

    let mut a = m.to_dense();
    let mut v = Matrix::identity(n);
    let mut d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    let mut off_diag = off_diagonal_norm(&a);
    for sweep in 0..MAX_SWEEPS {
        if off_diag < OFF_DIAG_TOLERANCE {
            return Ok(finish(d, v));
        }
        // Skip near-zero pivots early on instead of rotating every pair.
        let threshold = if sweep < 3 {
            0.2 * off_diag * off_diag / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[(p, q)] = 0.0;
                    continue;
                }
                if apq.abs() <= threshold {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a[(p, q)] = 0.0;
                for j in 0..p {
                    rotate(&mut a, j, p, j, q, s, tau);
                }
                for j in p + 1..q {
                    rotate(&mut a, p, j, j, q, s, tau);
                }
                for j in q + 1..n {
                    rotate(&mut a, p, j, q, j, s, tau);
                }
                for j in 0..n {
                    rotate(&mut v, j, p, j, q, s, tau);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
        off_diag = off_diagonal_norm(&a);
    }
    Err(SpectralError::NotConverged { off_diag })
}

#[inline]
fn rotate(m: &mut Matrix, i: usize, j: usize, k: usize, l: usize, s: f64, tau: f64) {
    let g = m[(i, j)];
    let h = m[(k, l)];
    m[(i, j)] = g - s * (h + g * tau);
    m[(k, l)] = h + s * (g - h * tau);
}

/// Frobenius norm of the strict upper triangle, counted for both halves.
fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            let v = a[(p, q)];
            acc += 2.0 * v * v;
        }
    }
    acc.sqrt()
}

fn finish(d: Vec<f64>, v: Matrix) -> SpectralDecomposition {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, new_col)] = v[(r, old_col)];
        }
    }
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// The benchmark filter responses, plus an escape hatch for a user-supplied
/// scalar response of the eigenvalue.
#[derive(Clone)]
pub enum TargetFilterKind {
    Low,
    High,
    Band,
    Reject,
    Comb,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl TargetFilterKind {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            TargetFilterKind::Low => (-10.0 * lambda * lambda).exp(),
            TargetFilterKind::High => 1.0 - (-10.0 * lambda * lambda).exp(),
            TargetFilterKind::Band => (-10.0 * (lambda - 1.0) * (lambda - 1.0)).exp(),
            TargetFilterKind::Reject => 1.0 - (-10.0 * (lambda - 1.0) * (lambda - 1.0)).exp(),
            TargetFilterKind::Comb => (std::f64::consts::PI * lambda).sin().abs(),
            TargetFilterKind::Custom(f) => f(lambda),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "low" => Some(TargetFilterKind::Low),
            "high" => Some(TargetFilterKind::High),
            "band" => Some(TargetFilterKind::Band),
            "reject" => Some(TargetFilterKind::Reject),
            "comb" => Some(TargetFilterKind::Comb),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetFilterKind::Low => "low",
            TargetFilterKind::High => "high",
            TargetFilterKind::Band => "band",
            TargetFilterKind::Reject => "reject",
            TargetFilterKind::Comb => "comb",
            TargetFilterKind::Custom(_) => "custom",
        }
    }

    /// The five named benchmark filters.
    pub fn all_named() -> [TargetFilterKind; 5] {
        [
            TargetFilterKind::Low,
            TargetFilterKind::High,
            TargetFilterKind::Band,
            TargetFilterKind::Reject,
            TargetFilterKind::Comb,
        ]
    }
}

impl fmt::Debug for TargetFilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for TargetFilterKind {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TargetFilterKind::Custom(a), TargetFilterKind::Custom(b)) => Arc::ptr_eq(a, b),
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

/// Exact spectral filtering of a signal by a named response.
pub fn exact_filter(
    decomp: &SpectralDecomposition,
    kind: &TargetFilterKind,
    x: &Matrix,
) -> Result<Matrix, SpectralError> {
    decomp.filter_with(|lambda| kind.eval(lambda), x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{erdos_renyi_graph, normalized_laplacian, Graph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path2_laplacian() -> SparseSymMatrix {
        let g = Graph::from_edges(&[(0, 1)], 2).unwrap();
        normalized_laplacian(&g)
    }

    fn random_symmetric(n: usize, seed: u64) -> SparseSymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random::<f64>() * 2.0 - 1.0;
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        SparseSymMatrix::from_dense(&dense)
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let d = eigendecompose(&SparseSymMatrix::identity(5)).unwrap();
        for &l in d.eigenvalues() {
            assert!((l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn triangle_spectrum_is_zero_and_three_halves() {
        let g = Graph::from_edges(&[(0, 1), (1, 2), (2, 0)], 3).unwrap();
        let d = eigendecompose(&normalized_laplacian(&g)).unwrap();
        let expected = [0.0, 1.5, 1.5];
        for (&got, &want) in d.eigenvalues().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn path2_spectrum_and_eigenvectors() {
        let d = eigendecompose(&path2_laplacian()).unwrap();
        assert!((d.eigenvalues()[0] - 0.0).abs() < 1e-10);
        assert!((d.eigenvalues()[1] - 2.0).abs() < 1e-10);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        // Distinct eigenvalues, so columns are determined up to sign.
        let u = d.eigenvectors();
        assert!((u[(0, 0)].abs() - inv_sqrt2).abs() < 1e-10);
        assert!((u[(1, 0)] - u[(0, 0)]).abs() < 1e-10);
        assert!((u[(0, 1)].abs() - inv_sqrt2).abs() < 1e-10);
        assert!((u[(1, 1)] + u[(0, 1)]).abs() < 1e-10);
    }

    #[test]
    fn residuals_vanish_on_random_symmetric_matrix() {
        let m = random_symmetric(50, 3);
        let d = eigendecompose(&m).unwrap();
        let dense = m.to_dense();
        for k in 0..50 {
            let mut worst = 0.0f64;
            for i in 0..50 {
                let mut av = 0.0;
                for j in 0..50 {
                    av += dense[(i, j)] * d.eigenvectors()[(j, k)];
                }
                worst = worst.max((av - d.eigenvalues()[k] * d.eigenvectors()[(i, k)]).abs());
            }
            assert!(worst < 1e-8, "residual {worst} for eigenpair {k}");
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal_and_reconstruct() {
        let m = random_symmetric(30, 9);
        let d = eigendecompose(&m).unwrap();
        let u = d.eigenvectors();
        let gram = u.matmul_at(u);
        assert!(gram.max_abs_diff(&Matrix::identity(30)) < 1e-8);
        let mut recon = Matrix::zeros(30, 30);
        for k in 0..30 {
            let l = d.eigenvalues()[k];
            for i in 0..30 {
                for j in 0..30 {
                    recon[(i, j)] += l * u[(i, k)] * u[(j, k)];
                }
            }
        }
        assert!(recon.max_abs_diff(&m.to_dense()) < 1e-8);
    }

    #[test]
    fn eigenvalues_come_out_ascending() {
        let d = eigendecompose(&random_symmetric(20, 4)).unwrap();
        for w in d.eigenvalues().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn size_limit_is_enforced() {
        let m = SparseSymMatrix::identity(10);
        assert!(matches!(
            eigendecompose_with_limit(&m, 5),
            Err(SpectralError::TooLarge { n: 10, limit: 5 })
        ));
    }

    #[test]
    fn named_filter_values() {
        assert!((TargetFilterKind::Low.eval(0.0) - 1.0).abs() < 1e-15);
        assert!((TargetFilterKind::Band.eval(1.0) - 1.0).abs() < 1e-15);
        assert!(TargetFilterKind::Comb.eval(1.0).abs() < 1e-12);
        assert!((TargetFilterKind::High.eval(0.0)).abs() < 1e-15);
        assert!((TargetFilterKind::Reject.eval(1.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_filter_is_identity() {
        let m = random_symmetric(12, 5);
        let d = eigendecompose(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Matrix::from_vec(12, 3, (0..36).map(|_| rng.random::<f64>()).collect());
        let custom = TargetFilterKind::Custom(Arc::new(|_| 1.0));
        let y = exact_filter(&d, &custom, &x).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-8);
    }

    #[test]
    fn linear_response_reproduces_the_matrix() {
        let l = path2_laplacian();
        let d = eigendecompose(&l).unwrap();
        let x = Matrix::column(&[1.0, 0.0]);
        let custom = TargetFilterKind::Custom(Arc::new(|lambda| lambda));
        let filtered = exact_filter(&d, &custom, &x).unwrap();
        let direct = l.spmm(&x).unwrap();
        assert!(filtered.max_abs_diff(&direct) < 1e-10);
        assert!((filtered[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((filtered[(1, 0)] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn low_pass_on_path2_averages() {
        let d = eigendecompose(&path2_laplacian()).unwrap();
        let x = Matrix::column(&[1.0, 0.0]);
        let y = exact_filter(&d, &TargetFilterKind::Low, &x).unwrap();
        // f(0) = 1 and f(2) = e^{-40} ~ 0, so the output is the average.
        assert!((y[(0, 0)] - 0.5).abs() < 1e-10);
        assert!((y[(1, 0)] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn polynomial_response_matches_dense_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..5 {
            let g = erdos_renyi_graph(40, 0.15, 100 + trial);
            let l = normalized_laplacian(&g);
            let d = eigendecompose(&l).unwrap();
            let coeffs: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let x = Matrix::from_vec(40, 2, (0..80).map(|_| rng.random::<f64>() - 0.5).collect());

            let c = coeffs.clone();
            let custom = TargetFilterKind::Custom(Arc::new(move |lambda| {
                c.iter().rev().fold(0.0, |acc, &ck| acc * lambda + ck)
            }));
            let spectral_path = exact_filter(&d, &custom, &x).unwrap();

            // Dense polynomial-of-the-matrix oracle.
            let dense = l.to_dense();
            let mut power = x.clone();
            let mut direct = x.scale(coeffs[0]);
            for &ck in &coeffs[1..] {
                power = dense.matmul(&power);
                direct.add_assign_scaled(&power, ck);
            }
            assert!(
                spectral_path.max_abs_diff(&direct) < 1e-7,
                "trial {trial}: {}",
                spectral_path.max_abs_diff(&direct)
            );
        }
    }

    #[test]
    fn filtering_is_linear_in_the_signal() {
        let m = random_symmetric(15, 8);
        let d = eigendecompose(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x1 = Matrix::from_vec(15, 2, (0..30).map(|_| rng.random::<f64>()).collect());
        let x2 = Matrix::from_vec(15, 2, (0..30).map(|_| rng.random::<f64>()).collect());
        let (a, b) = (0.7, -2.3);
        let combined = exact_filter(&d, &TargetFilterKind::Band, &x1.scale(a).add(&x2.scale(b)))
            .unwrap();
        let separate = exact_filter(&d, &TargetFilterKind::Band, &x1)
            .unwrap()
            .scale(a)
            .add(&exact_filter(&d, &TargetFilterKind::Band, &x2).unwrap().scale(b));
        assert!(combined.max_abs_diff(&separate) < 1e-8);
    }

    #[test]
    fn sequential_filters_compose_multiplicatively() {
        let g = erdos_renyi_graph(30, 0.2, 55);
        let l = normalized_laplacian(&g);
        let d = eigendecompose(&l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = Matrix::from_vec(30, 1, (0..30).map(|_| rng.random::<f64>()).collect());
        let once = d
            .filter_with(
                |l| TargetFilterKind::Low.eval(l) * TargetFilterKind::Comb.eval(l),
                &x,
            )
            .unwrap();
        let twice = exact_filter(
            &d,
            &TargetFilterKind::Comb,
            &exact_filter(&d, &TargetFilterKind::Low, &x).unwrap(),
        )
        .unwrap();
        assert!(once.max_abs_diff(&twice) < 1e-7);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = eigendecompose(&SparseSymMatrix::identity(4)).unwrap();
        let x = Matrix::zeros(3, 1);
        assert!(matches!(
            exact_filter(&d, &TargetFilterKind::Low, &x),
            Err(SpectralError::DimensionMismatch { .. })
        ));
    }
}
