//! One-command aggregation of the cross-module equivalence and gradient
//! checks: the recurrence path against exact spectral filtering, the sparse
//! kernel against dense multiplication, spectrum bounds, interpolation
//! exactness, and finite-difference verification of every gradient.


use crate::adam::{AdamConfig, AdamState};
use crate::autodiff::{finite_difference_gradient, max_relative_error, Tape};
use crate::cheb::{
    cheb_apply, cheb_eval, cheb_nodes, cheb_t, combine, interp_to_coeffs, shift_laplacian,
    NodeValueCoeffs,
};
use crate::graph::{erdos_renyi_graph, normalized_laplacian};
use crate::matrix::Matrix;
use crate::model::{forward, loss, ModelDims, ModelVariant, Targets};
use crate::model::{init_params, LossWeights};
use crate::spectral::{eigendecompose, TargetFilterKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
    pub elapsed_ms: u64,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {:<32} {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        out.push_str(&format!(
            "oracle suite: {}/{} checks passed in {} ms\n",
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len(),
            self.elapsed_ms
        ));
        out
    }
}

/// Runs every oracle check; any failure flips the report.
pub fn run_oracle_suite() -> OracleReport {
    let start = Instant::now();
    let mut checks = Vec::new();

    checks.push(bounded_check(
        "spmm_vs_dense_multiply",
        spmm_dense_defect(),
        1e-12,
    ));
    checks.push(laplacian_spectrum_check());
    checks.push(bounded_check(
        "cheb_recurrence_invariant",
        recurrence_defect(),
        1e-10,
    ));
    checks.push(bounded_check(
        "spectral_equivalence",
        spectral_equivalence_defect(8, 60, 10, 17, 0.0),
        1e-7,
    ));
    checks.push(bounded_check(
        "interpolation_exactness",
        interpolation_defect(),
        1e-10,
    ));
    checks.push(bounded_check("eigen_residual", eigen_residual_defect(), 1e-8));
    checks.push(bounded_check(
        "filter_linearity_composition",
        filter_algebra_defect(),
        1e-7,
    ));
    checks.push(bounded_check("op_gradients", op_gradient_defect(), 1e-4));
    checks.push(bounded_check(
        "full_model_gradient_classification",
        full_model_gradient_max_error(true, 123),
        1e-4,
    ));
    checks.push(bounded_check(
        "full_model_gradient_regression",
        full_model_gradient_max_error(false, 321),
        1e-4,
    ));
    checks.push(bounded_check("adam_first_step", adam_first_step_defect(), 1e-12));

    OracleReport {
        checks,
        elapsed_ms: start.elapsed().as_millis() as u64,
    }
}

fn bounded_check(name: &'static str, defect: f64, bound: f64) -> OracleCheck {
    OracleCheck {
        name,
        passed: defect.is_finite() && defect < bound,
        detail: format!("defect {defect:.3e} (bound {bound:.0e})"),
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
    )
}

fn spmm_dense_defect() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for (i, &n) in [20usize, 60, 120, 200].iter().enumerate() {
        let g = erdos_renyi_graph(n, 0.1, 100 + i as u64);
        let l = normalized_laplacian(&g);
        let x = random_matrix(n, 3, &mut rng);
        let sparse = l.spmm(&x).expect("shapes agree");
        let dense = l.to_dense().matmul(&x);
        worst = worst.max(sparse.max_abs_diff(&dense));
    }
    worst
}

fn laplacian_spectrum_check() -> OracleCheck {
    let mut worst_low = 0.0f64;
    let mut worst_high = 0.0f64;
    let mut worst_sym = 0.0f64;
    for seed in 0..100u64 {
        let n = 5 + (seed as usize * 7) % 45;
        let p = 0.05 + 0.3 * ((seed % 10) as f64 / 10.0);
        let g = erdos_renyi_graph(n, p, seed);
        let l = normalized_laplacian(&g);
        worst_sym = worst_sym.max(l.symmetry_defect());
        let d = eigendecompose(&l).expect("desk-scale decomposition");
        for &lambda in d.eigenvalues() {
            worst_low = worst_low.max(-lambda);
            worst_high = worst_high.max(lambda - 2.0);
        }
    }
    let passed = worst_low < 1e-8 && worst_high < 1e-8 && worst_sym < 1e-12;
    OracleCheck {
        name: "laplacian_spectrum_bounds",
        passed,
        detail: format!(
            "below-zero {worst_low:.3e}, above-two {worst_high:.3e}, asymmetry {worst_sym:.3e}"
        ),
    }
}

fn recurrence_defect() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let n = 30 + 10 * seed as usize;
        let g = erdos_renyi_graph(n, 0.15, 200 + seed);
        let lhat = shift_laplacian(&normalized_laplacian(&g));
        let x = random_matrix(n, 2, &mut rng);
        let stack = cheb_apply(&lhat, &x, 10).expect("shapes agree");
        worst = worst.max(stack.block(0).max_abs_diff(&x));
        for k in 2..=10 {
            let mut expect = lhat.spmm(stack.block(k - 1)).expect("shapes agree").scale(2.0);
            expect.add_assign_scaled(stack.block(k - 2), -1.0);
            worst = worst.max(stack.block(k).max_abs_diff(&expect));
        }
    }
    worst
}

/// Worst disagreement between the recurrence filter path and exact spectral
/// filtering across random graphs and node-value coefficients.
///
/// `coeff_perturbation` is added to one coefficient on the recurrence side
/// only; a nonzero value must break the equivalence, which is how the suite's
/// own sensitivity is verified.
pub fn spectral_equivalence_defect(
    graphs: usize,
    max_nodes: usize,
    order: usize,
    seed: u64,
    coeff_perturbation: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..graphs {
        let n = 20 + (max_nodes - 20) * trial / graphs.max(1);
        let g = erdos_renyi_graph(n, 0.12, seed + trial as u64);
        let l = normalized_laplacian(&g);
        let lhat = shift_laplacian(&l);
        let x = random_matrix(n, 2, &mut rng);
        let gamma: Vec<f64> = (0..=order).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mut coeffs = interp_to_coeffs(&NodeValueCoeffs::new(gamma));
        let spectral_coeffs = coeffs.clone();
        coeffs[order.min(3)] += coeff_perturbation;

        let stack = cheb_apply(&lhat, &x, order).expect("shapes agree");
        let via_recurrence = combine(&stack, &coeffs).expect("lengths agree");

        let d = eigendecompose(&l).expect("desk-scale decomposition");
        let via_spectrum = d
            .filter_with(|lambda| cheb_eval(&spectral_coeffs, lambda - 1.0), &x)
            .expect("shapes agree");
        worst = worst.max(via_recurrence.max_abs_diff(&via_spectrum));
    }
    worst
}

fn interpolation_defect() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let order = 10;
    let nodes = cheb_nodes(order);
    let mut worst = 0.0f64;
    // Unit directions first: T_k sampled at the nodes must give e_k.
    for k in 0..=order {
        let values: Vec<f64> = nodes.iter().map(|&x| cheb_t(k, x)).collect();
        let coeffs = interp_to_coeffs(&NodeValueCoeffs::new(values));
        for (j, &c) in coeffs.iter().enumerate() {
            let expected = f64::from(j == k);
            worst = worst.max((c - expected).abs());
        }
    }
    // Then random low-degree expansions.
    for _ in 0..20 {
        let truth: Vec<f64> = (0..=order).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let values: Vec<f64> = nodes.iter().map(|&x| cheb_eval(&truth, x)).collect();
        let coeffs = interp_to_coeffs(&NodeValueCoeffs::new(values));
        for (c, t) in coeffs.iter().zip(&truth) {
            worst = worst.max((c - t).abs());
        }
    }
    worst
}

fn eigen_residual_defect() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let g = erdos_renyi_graph(50, 0.2, 300 + seed);
        let l = normalized_laplacian(&g);
        let dense = l.to_dense();
        let d = eigendecompose(&l).expect("desk-scale decomposition");
        for k in 0..50 {
            for i in 0..50 {
                let mut av = 0.0;
                for j in 0..50 {
                    av += dense[(i, j)] * d.eigenvectors()[(j, k)];
                }
                worst = worst.max((av - d.eigenvalues()[k] * d.eigenvectors()[(i, k)]).abs());
            }
        }
    }
    worst
}

fn filter_algebra_defect() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = erdos_renyi_graph(40, 0.15, 400);
    let l = normalized_laplacian(&g);
    let d = eigendecompose(&l).expect("desk-scale decomposition");
    let x1 = random_matrix(40, 2, &mut rng);
    let x2 = random_matrix(40, 2, &mut rng);
    let mut worst = 0.0f64;

    let combined = d
        .filter_with(|l| TargetFilterKind::Band.eval(l), &x1.scale(0.7).add(&x2.scale(-1.3)))
        .expect("shapes agree");
    let separate = d
        .filter_with(|l| TargetFilterKind::Band.eval(l), &x1)
        .expect("shapes agree")
        .scale(0.7)
        .add(
            &d.filter_with(|l| TargetFilterKind::Band.eval(l), &x2)
                .expect("shapes agree")
                .scale(-1.3),
        );
    worst = worst.max(combined.max_abs_diff(&separate));

    let low_then_comb = d
        .filter_with(
            |l| TargetFilterKind::Comb.eval(l),
            &d.filter_with(|l| TargetFilterKind::Low.eval(l), &x1).expect("shapes agree"),
        )
        .expect("shapes agree");
    let product = d
        .filter_with(
            |l| TargetFilterKind::Comb.eval(l) * TargetFilterKind::Low.eval(l),
            &x1,
        )
        .expect("shapes agree");
    worst = worst.max(low_then_comb.max_abs_diff(&product));
    worst
}

fn op_gradient_defect() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let step = 1e-5;
    let floor = 1e-6;
    let mut worst = 0.0f64;
    let mask: Arc<Vec<usize>> = Arc::new((0..6).collect());
    let labels: Arc<Vec<usize>> = Arc::new(vec![0, 1, 2, 0, 1, 2]);
    let g = erdos_renyi_graph(6, 0.5, 500);
    let lhat = Arc::new(shift_laplacian(&normalized_laplacian(&g)));

    // One scalar objective per op, differentiated at a random point.
    type Builder = Box<dyn Fn(&mut Tape, crate::autodiff::Var) -> crate::autodiff::Var>;
    let target = random_matrix(6, 3, &mut rng);
    let weight = random_matrix(3, 3, &mut rng);
    let cases: Vec<(&str, Builder)> = vec![
        ("matmul", {
            let w = weight.clone();
            Box::new(move |t, v| {
                let wc = t.constant(w.clone());
                let m = t.matmul(v, wc).expect("shapes agree");
                t.sum(m)
            })
        }),
        ("relu_scale", {
            Box::new(|t, v| {
                let r = t.relu(v);
                let s = t.scale(r, 1.7);
                t.sum(s)
            })
        }),
        ("softmax_mse", {
            let tg = target.clone();
            let m = Arc::clone(&mask);
            Box::new(move |t, v| {
                let s = t.softmax_rows(v);
                let c = t.constant(tg.clone());
                t.mse_var(s, c, Arc::clone(&m)).expect("shapes agree")
            })
        }),
        ("cross_entropy_hard", {
            let lb = Arc::clone(&labels);
            let m = Arc::clone(&mask);
            Box::new(move |t, v| {
                t.cross_entropy_hard(v, Arc::clone(&lb), Arc::clone(&m)).expect("valid")
            })
        }),
        ("spmm_lincomb", {
            let lh = Arc::clone(&lhat);
            Box::new(move |t, v| {
                let b1 = t.spmm(&lh, v).expect("shapes agree");
                let b2 = t.spmm(&lh, b1).expect("shapes agree");
                let coeffs = t.constant(Matrix::row_vector(&[0.5, -1.0, 2.0]));
                let out = t.lincomb(&[v, b1, b2], coeffs).expect("lengths agree");
                t.sum(out)
            })
        }),
        ("dropout", {
            Box::new(|t, v| {
                let d = t.dropout(v, 0.3, 99, true).expect("valid p");
                t.sum(d)
            })
        }),
    ];
    for (_, build) in &cases {
        // Bias entries away from ReLU kinks.
        let at = random_matrix(6, 3, &mut rng).map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
        let mut tape = Tape::new();
        let x = tape.leaf(at.clone());
        let out = build(&mut tape, x);
        tape.backward(out).expect("scalar objective");
        let analytic = tape.grad_or_zeros(x);
        let numeric = finite_difference_gradient(
            &mut |probe: &Matrix| {
                let mut t = Tape::new();
                let v = t.leaf(probe.clone());
                let o = build(&mut t, v);
                t.scalar(o)
            },
            &at,
            step,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric, floor));
    }
    worst
}

/// Worst relative disagreement between the tape gradient and central finite
/// differences across every parameter tensor of the full three-term loss on
/// a 20-node, 2-class instance with K1 = K2 = 4.
pub fn full_model_gradient_max_error(classification: bool, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 20;
    let g = erdos_renyi_graph(n, 0.2, seed);
    let lhat = Arc::new(shift_laplacian(&normalized_laplacian(&g)));
    let x = random_matrix(n, 3, &mut rng);
    let dims = ModelDims {
        in_features: 3,
        width: 2,
        mlp_layers: 2,
        mlp_hidden: 6,
        k1: 4,
        k2: 4,
    };
    let params = init_params(&dims, 0.0, seed).expect("consistent dims");
    let targets = if classification {
        Targets::Classes {
            labels: Arc::new((0..n).map(|i| i % 2).collect()),
            num_classes: 2,
        }
    } else {
        Targets::Signal(Arc::new(random_matrix(n, 2, &mut rng)))
    };
    let mask: Arc<Vec<usize>> = Arc::new((0..n).step_by(2).collect());
    let weights = LossWeights::new(1.0, 1.0);

    let objective = |list: &[Matrix]| -> f64 {
        let mut p = params.clone();
        p.set_from_list(list.to_vec());
        let mut tape = Tape::new();
        let fv = forward(&mut tape, &p, &x, &lhat, ModelVariant::Ergnn, false, 0)
            .expect("consistent dims");
        let total = loss(
            &mut tape,
            &fv,
            &targets,
            &mask,
            &lhat,
            weights,
            ModelVariant::Ergnn,
            false,
        )
        .expect("valid loss");
        tape.scalar(total)
    };

    let mut tape = Tape::new();
    let fv = forward(&mut tape, &params, &x, &lhat, ModelVariant::Ergnn, false, 0)
        .expect("consistent dims");
    let total = loss(
        &mut tape,
        &fv,
        &targets,
        &mask,
        &lhat,
        weights,
        ModelVariant::Ergnn,
        false,
    )
    .expect("valid loss");
    tape.backward(total).expect("scalar loss");
    let analytic: Vec<Matrix> = fv.params.in_order().iter().map(|&v| tape.grad_or_zeros(v)).collect();

    let base = params.to_list();
    let mut worst = 0.0f64;
    for tensor_idx in 0..base.len() {
        let numeric = finite_difference_gradient(
            &mut |probe: &Matrix| {
                let mut list = base.clone();
                list[tensor_idx] = probe.clone();
                objective(&list)
            },
            &base[tensor_idx],
            1e-5,
        );
        worst = worst.max(max_relative_error(&analytic[tensor_idx], &numeric, 1e-6));
    }
    worst
}

fn adam_first_step_defect() -> f64 {
    // At t = 1 both bias corrections cancel, so the update must equal
    // -lr * g / (|g| + eps) exactly.
    let mut worst = 0.0f64;
    for &g in &[4.0f64, -0.7, 0.002] {
        let lr = 0.03;
        let cfg = AdamConfig::new(lr, 0.0);
        let mut params = vec![Matrix::filled(1, 1, 1.0)];
        let grads = vec![Matrix::filled(1, 1, g)];
        let mut state = AdamState::new(cfg, &params);
        state.step(&mut params, &grads);
        let delta = params[0].data()[0] - 1.0;
        let expected = -lr * g / (g.abs() + cfg.epsilon);
        worst = worst.max(((delta - expected) / lr).abs());
    }
    worst
}
