//! The two-step rational graph filter model.
//!
//! Step one applies an explicit Chebyshev polynomial numerator to the
//! linearly transformed input. Step two substitutes the denominator filter
//! with an MLP, and the training objective adds a consistency term that pulls
//! the pair toward the literal rational relation
//! `Z1 = (sum_k beta_k T_k(Lhat)) Z2`.
//!
//! Nothing on the training path eigendecomposes, inverts, or densifies the
//! graph; it is touched only through sparse products.

use crate::adam::AdamState;
use crate::autodiff::{AutodiffError, Tape, Var};
use crate::cheb::{interp_matrix, interp_to_coeffs, ChebError, NodeValueCoeffs};
use crate::graph::SparseSymMatrix;
use crate::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("inconsistent model widths: {0}")]
    InconsistentWidths(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Cheb(#[from] ChebError),
    #[error("non-finite loss {0}; aborting the run")]
    NonFiniteLoss(f64),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

/// Which pieces of the model are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelVariant {
    /// Numerator filter plus MLP denominator with the full three-term loss.
    Ergnn,
    /// Polynomial filter alone: the MLP is the identity and only the
    /// numerator supervision term remains.
    NumeratorOnly,
    /// Graph-blind baseline: the transform feeds the MLP directly and only
    /// the output supervision term remains.
    PlainMlp,
}

impl ModelVariant {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "ergnn" => Some(Self::Ergnn),
            "numerator-only" => Some(Self::NumeratorOnly),
            "plain-mlp" => Some(Self::PlainMlp),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ergnn => "ergnn",
            Self::NumeratorOnly => "numerator-only",
            Self::PlainMlp => "plain-mlp",
        }
    }
}

/// Trade-off weights on the two supervision terms; the consistency term is
/// always weighted 1.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub eta: f64,
    pub xi: f64,
}

impl LossWeights {
    pub fn new(eta: f64, xi: f64) -> Self {
        assert!(eta >= 0.0 && eta.is_finite(), "eta must be finite and >= 0");
        assert!(xi >= 0.0 && xi.is_finite(), "xi must be finite and >= 0");
        Self { eta, xi }
    }
}

/// Supervision for one task; the variant picks the loss shape.
#[derive(Clone, Debug)]
pub enum Targets {
    /// Hard class labels for every node.
    Classes {
        labels: Arc<Vec<usize>>,
        num_classes: usize,
    },
    /// Real-valued signal to regress onto.
    Signal(Arc<Matrix>),
}

/// Static shape description used to initialize parameters.
#[derive(Clone, Copy, Debug)]
pub struct ModelDims {
    pub in_features: usize,
    /// Output width of the input transform; equals the class count for
    /// classification and the signal width for regression, so both filter
    /// outputs live in prediction space.
    pub width: usize,
    pub mlp_layers: usize,
    pub mlp_hidden: usize,
    pub k1: usize,
    pub k2: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// All learnable state: input transform, numerator and denominator node
/// values, and the MLP stack.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalFilterParams {
    pub w: Matrix,
    pub b: Matrix,
    /// Node values behind the numerator coefficients, 1 x (K1+1).
    pub gamma_num: Matrix,
    /// Node values behind the denominator coefficients, 1 x (K2+1).
    pub gamma_den: Matrix,
    pub mlp: Vec<MlpLayer>,
    pub dropout_p: f64,
    pub k1: usize,
    pub k2: usize,
}

impl RationalFilterParams {
    /// Tensors in canonical order: w, b, gamma_num, gamma_den, then each MLP
    /// layer's weight and bias.
    pub fn to_list(&self) -> Vec<Matrix> {
        let mut list = vec![
            self.w.clone(),
            self.b.clone(),
            self.gamma_num.clone(),
            self.gamma_den.clone(),
        ];
        for layer in &self.mlp {
            list.push(layer.weight.clone());
            list.push(layer.bias.clone());
        }
        list
    }

    pub fn set_from_list(&mut self, list: Vec<Matrix>) {
        assert_eq!(list.len(), 4 + 2 * self.mlp.len(), "tensor count mismatch");
        let mut it = list.into_iter();
        self.w = it.next().unwrap();
        self.b = it.next().unwrap();
        self.gamma_num = it.next().unwrap();
        self.gamma_den = it.next().unwrap();
        for layer in &mut self.mlp {
            layer.weight = it.next().unwrap();
            layer.bias = it.next().unwrap();
        }
    }

    /// L1 norm of the denominator coefficient vector; near zero means the
    /// rational form has degenerated.
    pub fn denominator_coeff_l1(&self) -> f64 {
        interp_to_coeffs(&NodeValueCoeffs::new(self.gamma_den.data().to_vec()))
            .iter()
            .map(|c| c.abs())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.to_list().iter().all(Matrix::all_finite)
    }
}

/// Glorot-uniform transform and MLP weights, zero biases, and node values
/// fixed at 1 so the numerator starts as the identity filter and the
/// denominator as the constant-1 filter. Deterministic given the seed.
pub fn init_params(
    dims: &ModelDims,
    dropout_p: f64,
    seed: u64,
) -> Result<RationalFilterParams, ModelError> {
    if dims.in_features == 0 || dims.width == 0 {
        return Err(ModelError::InconsistentWidths(format!(
            "in_features {} and width {} must be positive",
            dims.in_features, dims.width
        )));
    }
    if dims.mlp_layers > 0 && dims.mlp_layers != 1 && dims.mlp_hidden == 0 {
        return Err(ModelError::InconsistentWidths(
            "hidden width must be positive for a multi-layer MLP".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = glorot(dims.in_features, dims.width, &mut rng);
    let b = Matrix::zeros(1, dims.width);
    let mut mlp = Vec::with_capacity(dims.mlp_layers);
    let mut widths = Vec::with_capacity(dims.mlp_layers + 1);
    widths.push(dims.width);
    for _ in 1..dims.mlp_layers {
        widths.push(dims.mlp_hidden);
    }
    widths.push(dims.width);
    for i in 0..dims.mlp_layers {
        mlp.push(MlpLayer {
            weight: glorot(widths[i], widths[i + 1], &mut rng),
            bias: Matrix::zeros(1, widths[i + 1]),
        });
    }
    Ok(RationalFilterParams {
        w,
        b,
        gamma_num: Matrix::filled(1, dims.k1 + 1, 1.0),
        gamma_den: Matrix::filled(1, dims.k2 + 1, 1.0),
        mlp,
        dropout_p,
        k1: dims.k1,
        k2: dims.k2,
    })
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_vec(
        fan_in,
        fan_out,
        (0..fan_in * fan_out)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
            .collect(),
    )
}

/// Tape handles for the learnable tensors, in canonical order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub w: Var,
    pub b: Var,
    pub gamma_num: Var,
    pub gamma_den: Var,
    pub mlp: Vec<(Var, Var)>,
}

impl ParamVars {
    pub fn in_order(&self) -> Vec<Var> {
        let mut vars = vec![self.w, self.b, self.gamma_num, self.gamma_den];
        for &(w, b) in &self.mlp {
            vars.push(w);
            vars.push(b);
        }
        vars
    }
}

/// Handles to the staged outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub z0: Var,
    pub z1: Var,
    pub z2: Var,
    pub params: ParamVars,
}

/// One forward pass on the tape.
///
/// `z0 = x w + b`; `z1` applies the numerator filter to `z0` through the
/// Chebyshev recurrence; `z2` is the MLP output with ReLU between layers and
/// dropout ahead of each layer in training mode.
pub fn forward(
    tape: &mut Tape,
    params: &RationalFilterParams,
    x: &Matrix,
    lhat: &Arc<SparseSymMatrix>,
    variant: ModelVariant,
    training: bool,
    seed: u64,
) -> Result<ForwardVars, ModelError> {
    if x.cols() != params.w.rows() {
        return Err(ModelError::InconsistentWidths(format!(
            "input has {} features but the transform expects {}",
            x.cols(),
            params.w.rows()
        )));
    }
    let pv = ParamVars {
        w: tape.leaf(params.w.clone()),
        b: tape.leaf(params.b.clone()),
        gamma_num: tape.leaf(params.gamma_num.clone()),
        gamma_den: tape.leaf(params.gamma_den.clone()),
        mlp: params
            .mlp
            .iter()
            .map(|layer| (tape.leaf(layer.weight.clone()), tape.leaf(layer.bias.clone())))
            .collect(),
    };
    let xc = tape.constant(x.clone());
    let z0 = tape.linear(xc, pv.w, pv.b)?;

    let z1 = match variant {
        ModelVariant::PlainMlp => z0,
        _ => {
            let blocks = cheb_blocks(tape, lhat, z0, params.k1)?;
            let alpha = tape.matmul_const(pv.gamma_num, interp_matrix(params.k1).transpose())?;
            tape.lincomb(&blocks, alpha)?
        }
    };

    let z2 = match variant {
        ModelVariant::NumeratorOnly => z1,
        _ => {
            let mut h = z1;
            let last = params.mlp.len().saturating_sub(1);
            for (i, &(w, b)) in pv.mlp.iter().enumerate() {
                h = tape.dropout(h, params.dropout_p, mix_seed(seed, i as u64), training)?;
                h = tape.linear(h, w, b)?;
                if i < last {
                    h = tape.relu(h);
                }
            }
            h
        }
    };

    Ok(ForwardVars {
        z0,
        z1,
        z2,
        params: pv,
    })
}

/// Chebyshev basis blocks of a tape tensor via the three-term recurrence.
fn cheb_blocks(
    tape: &mut Tape,
    lhat: &Arc<SparseSymMatrix>,
    x: Var,
    order: usize,
) -> Result<Vec<Var>, ModelError> {
    let mut blocks = Vec::with_capacity(order + 1);
    blocks.push(x);
    if order >= 1 {
        blocks.push(tape.spmm(lhat, x)?);
    }
    for k in 2..=order {
        let prod = tape.spmm(lhat, blocks[k - 1])?;
        let doubled = tape.scale(prod, 2.0);
        blocks.push(tape.sub(doubled, blocks[k - 2])?);
    }
    Ok(blocks)
}

/// Applies the polynomial denominator filter to a tape tensor:
/// `sum_k beta_k T_k(Lhat) z` with `beta` interpolated from the denominator
/// node values. Differentiable in both the node values and the signal.
pub fn denominator_apply(
    tape: &mut Tape,
    lhat: &Arc<SparseSymMatrix>,
    gamma_den: Var,
    z: Var,
    k2: usize,
) -> Result<Var, ModelError> {
    let blocks = cheb_blocks(tape, lhat, z, k2)?;
    let beta = tape.matmul_const(gamma_den, interp_matrix(k2).transpose())?;
    Ok(tape.lincomb(&blocks, beta)?)
}

/// The three-term training objective.
///
/// Classification: `eta CE(z1, y) + xi CE(z2, y) + CE(z1, softmax(q(Lhat) z2))`.
/// Regression swaps every CE for MSE and drops the softmax. The supervision
/// terms run over the training mask; the consistency term runs over all
/// nodes. Reduced variants keep only their supervision term.
#[allow(clippy::too_many_arguments)]
pub fn loss(
    tape: &mut Tape,
    fv: &ForwardVars,
    targets: &Targets,
    train_mask: &Arc<Vec<usize>>,
    lhat: &Arc<SparseSymMatrix>,
    weights: LossWeights,
    variant: ModelVariant,
    detach_consistency_target: bool,
) -> Result<Var, ModelError> {
    let k2 = tape.value(fv.params.gamma_den).cols() - 1;
    let num_nodes = tape.value(fv.z1).rows();
    let all_nodes: Arc<Vec<usize>> = Arc::new((0..num_nodes).collect());

    match variant {
        ModelVariant::NumeratorOnly => {
            let nume = supervision(tape, fv.z1, targets, train_mask)?;
            Ok(tape.scale(nume, weights.eta))
        }
        ModelVariant::PlainMlp => {
            let deno = supervision(tape, fv.z2, targets, train_mask)?;
            Ok(tape.scale(deno, weights.xi))
        }
        ModelVariant::Ergnn => {
            let nume = supervision(tape, fv.z1, targets, train_mask)?;
            let deno = supervision(tape, fv.z2, targets, train_mask)?;
            let filtered = denominator_apply(tape, lhat, fv.params.gamma_den, fv.z2, k2)?;
            let anchor = if detach_consistency_target {
                tape.detach(filtered)
            } else {
                filtered
            };
            let consistency = match targets {
                Targets::Classes { .. } => {
                    let soft = tape.softmax_rows(anchor);
                    tape.cross_entropy_soft(fv.z1, soft, all_nodes)?
                }
                Targets::Signal(_) => tape.mse_var(fv.z1, anchor, all_nodes)?,
            };
            let nume_scaled = tape.scale(nume, weights.eta);
            let deno_scaled = tape.scale(deno, weights.xi);
            let partial = tape.add(nume_scaled, deno_scaled)?;
            Ok(tape.add(partial, consistency)?)
        }
    }
}

fn supervision(
    tape: &mut Tape,
    pred: Var,
    targets: &Targets,
    mask: &Arc<Vec<usize>>,
) -> Result<Var, ModelError> {
    match targets {
        Targets::Classes { labels, .. } => {
            Ok(tape.cross_entropy_hard(pred, Arc::clone(labels), Arc::clone(mask))?)
        }
        Targets::Signal(y) => Ok(tape.mse_const(pred, Arc::clone(y), Arc::clone(mask))?),
    }
}

/// One training batch: everything a step needs beyond the parameters.
pub struct TrainBatch<'a> {
    pub x: &'a Matrix,
    pub lhat: &'a Arc<SparseSymMatrix>,
    pub targets: &'a Targets,
    pub train_mask: &'a Arc<Vec<usize>>,
    pub weights: LossWeights,
    pub variant: ModelVariant,
    pub detach_consistency_target: bool,
    /// Seed for this step's dropout masks; derive it from the run seed and
    /// epoch so masks differ across epochs but reruns are identical.
    pub step_seed: u64,
}

/// One forward/backward/update cycle. Returns the loss value before the
/// update. A non-finite loss aborts instead of stepping.
pub fn train_step(
    params: &mut RationalFilterParams,
    optimizer: &mut AdamState,
    batch: &TrainBatch<'_>,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let fv = forward(
        &mut tape,
        params,
        batch.x,
        batch.lhat,
        batch.variant,
        true,
        batch.step_seed,
    )?;
    let objective = loss(
        &mut tape,
        &fv,
        batch.targets,
        batch.train_mask,
        batch.lhat,
        batch.weights,
        batch.variant,
        batch.detach_consistency_target,
    )?;
    let value = tape.scalar(objective);
    if !value.is_finite() {
        return Err(ModelError::NonFiniteLoss(value));
    }
    tape.backward(objective)?;
    let grads: Vec<Matrix> = fv
        .params
        .in_order()
        .iter()
        .map(|&v| tape.grad_or_zeros(v))
        .collect();
    let mut list = params.to_list();
    optimizer.step(&mut list, &grads);
    params.set_from_list(list);
    Ok(value)
}

/// Evaluation-mode forward pass; returns the numerator output and the final
/// output as plain matrices.
pub fn predict(
    params: &RationalFilterParams,
    x: &Matrix,
    lhat: &Arc<SparseSymMatrix>,
    variant: ModelVariant,
) -> Result<(Matrix, Matrix), ModelError> {
    let mut tape = Tape::new();
    let fv = forward(&mut tape, params, x, lhat, variant, false, 0)?;
    Ok((tape.value(fv.z1).clone(), tape.value(fv.z2).clone()))
}

/// Fraction of masked rows whose argmax matches the label. Ties resolve to
/// the lowest class index.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for &r in mask {
        let row = logits.row(r);
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == labels[r] {
            correct += 1;
        }
    }
    correct as f64 / mask.len() as f64
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer over the combined value.
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the dropout seed for one epoch of one run.
pub fn epoch_seed(run_seed: u64, epoch: usize) -> u64 {
    mix_seed(run_seed, epoch as u64)
}

/// Writes parameters as a plain-text key/tensor map with exact bit patterns,
/// so checkpoints round-trip bit-for-bit.
pub fn save_checkpoint(params: &RationalFilterParams, path: &Path) -> Result<(), ModelError> {
    let mut out = String::new();
    out.push_str("ergnn-params v1\n");
    out.push_str(&format!("k1 {}\n", params.k1));
    out.push_str(&format!("k2 {}\n", params.k2));
    out.push_str(&format!("dropout {:016x}\n", params.dropout_p.to_bits()));
    out.push_str(&format!("mlp_layers {}\n", params.mlp.len()));
    let write_tensor = |name: &str, m: &Matrix, out: &mut String| {
        out.push_str(&format!("tensor {} {} {}\n", name, m.rows(), m.cols()));
        for (i, v) in m.data().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{:016x}", v.to_bits()));
        }
        out.push('\n');
    };
    write_tensor("w", &params.w, &mut out);
    write_tensor("b", &params.b, &mut out);
    write_tensor("gamma_num", &params.gamma_num, &mut out);
    write_tensor("gamma_den", &params.gamma_den, &mut out);
    for (i, layer) in params.mlp.iter().enumerate() {
        write_tensor(&format!("mlp{i}.weight"), &layer.weight, &mut out);
        write_tensor(&format!("mlp{i}.bias"), &layer.bias, &mut out);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<RationalFilterParams, ModelError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String), ModelError> {
        match lines.next() {
            Some((i, Ok(line))) => Ok((i + 1, line)),
            Some((i, Err(e))) => Err(ModelError::Checkpoint {
                line: i + 1,
                message: e.to_string(),
            }),
            None => Err(ModelError::Checkpoint {
                line: 0,
                message: format!("missing {expect}"),
            }),
        }
    };
    let (line, header) = next_line("header")?;
    if header != "ergnn-params v1" {
        return Err(ModelError::Checkpoint {
            line,
            message: format!("unrecognized header `{header}`"),
        });
    }
    let parse_field = |entry: (usize, String), key: &str| -> Result<String, ModelError> {
        let (line, text) = entry;
        let mut parts = text.split_whitespace();
        if parts.next() != Some(key) {
            return Err(ModelError::Checkpoint {
                line,
                message: format!("expected `{key}`"),
            });
        }
        parts.next().map(str::to_string).ok_or(ModelError::Checkpoint {
            line,
            message: format!("missing value for `{key}`"),
        })
    };
    let parse_usize = |s: String, line: usize| -> Result<usize, ModelError> {
        s.parse().map_err(|_| ModelError::Checkpoint {
            line,
            message: format!("invalid count `{s}`"),
        })
    };
    let k1_entry = next_line("k1")?;
    let k1 = parse_usize(parse_field(k1_entry.clone(), "k1")?, k1_entry.0)?;
    let k2_entry = next_line("k2")?;
    let k2 = parse_usize(parse_field(k2_entry.clone(), "k2")?, k2_entry.0)?;
    let drop_entry = next_line("dropout")?;
    let dropout_bits = u64::from_str_radix(&parse_field(drop_entry.clone(), "dropout")?, 16)
        .map_err(|_| ModelError::Checkpoint {
            line: drop_entry.0,
            message: "invalid dropout bits".to_string(),
        })?;
    let layers_entry = next_line("mlp_layers")?;
    let mlp_layers = parse_usize(parse_field(layers_entry.clone(), "mlp_layers")?, layers_entry.0)?;

    let mut read_tensor = |expected: &str| -> Result<Matrix, ModelError> {
        let (line, head) = next_line("tensor header")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" || parts[1] != expected {
            return Err(ModelError::Checkpoint {
                line,
                message: format!("expected `tensor {expected} <rows> <cols>`, got `{head}`"),
            });
        }
        let rows: usize = parts[2].parse().map_err(|_| ModelError::Checkpoint {
            line,
            message: "invalid rows".to_string(),
        })?;
        let cols: usize = parts[3].parse().map_err(|_| ModelError::Checkpoint {
            line,
            message: "invalid cols".to_string(),
        })?;
        let (dline, data_line) = next_line("tensor data")?;
        let mut data = Vec::with_capacity(rows * cols);
        for token in data_line.split_whitespace() {
            let bits = u64::from_str_radix(token, 16).map_err(|_| ModelError::Checkpoint {
                line: dline,
                message: format!("invalid entry `{token}`"),
            })?;
            data.push(f64::from_bits(bits));
        }
        if data.len() != rows * cols {
            return Err(ModelError::Checkpoint {
                line: dline,
                message: format!("expected {} entries, got {}", rows * cols, data.len()),
            });
        }
        Ok(Matrix::from_vec(rows, cols, data))
    };

    let w = read_tensor("w")?;
    let b = read_tensor("b")?;
    let gamma_num = read_tensor("gamma_num")?;
    let gamma_den = read_tensor("gamma_den")?;
    let mut mlp = Vec::with_capacity(mlp_layers);
    for i in 0..mlp_layers {
        let weight = read_tensor(&format!("mlp{i}.weight"))?;
        let bias = read_tensor(&format!("mlp{i}.bias"))?;
        mlp.push(MlpLayer { weight, bias });
    }
    Ok(RationalFilterParams {
        w,
        b,
        gamma_num,
        gamma_den,
        mlp,
        dropout_p: f64::from_bits(dropout_bits),
        k1,
        k2,
    })
}
