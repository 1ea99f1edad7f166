//! The residual-attention graph convolutional autoencoder: residual
//! modeling, attention-damped representation learning, structure/attribute
//! reconstruction, full-batch training, and anomaly ranking.
//!
//! Layout of one forward pass (no bias terms anywhere):
//!
//! ```text
//! R   = ReLU(... ReLU(X W_res_0) ... W_res_last)          n x d
//! T_l = exp(-gamma * ReLU(ReLU(R W_att_l0) W_att_l1))     n x f_l, one per GCN layer
//! H_1 = ReLU(S X W_0)                                     first layer, no attention
//! H_l+1 = ReLU(S (H_l o T_l) W_l)                         attention on hidden layers
//! Z   = last H, then Z o T_last feeds the decoders
//! A^  = sigmoid(Z Z^T)        E_S = ||A - A^||_F^2
//! X^  = MLP(Z)                E_A = ||X - X^ - lambda R||_F^2
//! L   = (1 - alpha) E_S + alpha E_A
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, AttributedGraph, NormalizedAdjacency};
use crate::nn::{
    adam_step, exp_neg, glorot_init, relu, sigmoid_scalar, AdamConfig, AdamState, Tape, Tensor2,
    Var,
};
use crate::sparse::CsrMatrix;

/// Which decoder inputs the final attention map modulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttentionTarget {
    #[default]
    Both,
    Structure,
    Attribute,
}

impl FromStr for AttentionTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(AttentionTarget::Both),
            "structure" => Ok(AttentionTarget::Structure),
            "attribute" => Ok(AttentionTarget::Attribute),
            other => Err(Error::InvalidArgument(format!(
                "unknown attention target {other:?} (expected both, structure, or attribute)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Trade-off between structure and attribute reconstruction, in [0, 1].
    pub alpha: f64,
    /// Residual weight in the attribute error, >= 0.
    pub lambda: f64,
    /// Attention sharpness, >= 0; 0 disables attention.
    pub gamma: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Hidden widths of the GCN encoder; the last entry is the embedding.
    pub gcn_dims: Vec<usize>,
    /// Depth of the residual FC stack (width = attribute dim throughout).
    pub res_layers: usize,
    /// Depth of each attention FC stack (width = its GCN layer's width).
    pub att_layers: usize,
    /// Depth of the attribute-decoder MLP.
    pub decoder_layers: usize,
    pub embedding_attention: AttentionTarget,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.8,
            lambda: 0.1,
            gamma: 1.0,
            lr: 0.01,
            epochs: 100,
            gcn_dims: vec![64, 32],
            res_layers: 3,
            att_layers: 2,
            decoder_layers: 2,
            embedding_attention: AttentionTarget::Both,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.gcn_dims.is_empty() || self.gcn_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(
                "gcn_dims must be a nonempty list of positive widths".into(),
            ));
        }
        if self.res_layers == 0 || self.att_layers == 0 || self.decoder_layers == 0 {
            return Err(Error::InvalidArgument(
                "res_layers, att_layers, and decoder_layers must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Hidden widths of the attribute decoder, mirroring the encoder back
    /// out to `input_dim`.
    fn decoder_widths(&self, input_dim: usize) -> Vec<usize> {
        let mut mirror: Vec<usize> = self.gcn_dims[..self.gcn_dims.len() - 1]
            .iter()
            .rev()
            .copied()
            .collect();
        let hidden_needed = self.decoder_layers - 1;
        let pad = mirror.last().copied().unwrap_or(input_dim);
        while mirror.len() < hidden_needed {
            mirror.push(pad);
        }
        mirror.truncate(hidden_needed);
        let mut widths = vec![*self.gcn_dims.last().expect("validated nonempty")];
        widths.extend(mirror);
        widths.push(input_dim);
        widths
    }
}

/// One trainable tensor with its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub value: Tensor2,
    pub adam: AdamState,
}

impl ParamTensor {
    fn new(name: String, value: Tensor2) -> Self {
        let adam = AdamState::new(value.rows(), value.cols());
        ParamTensor { name, value, adam }
    }
}

/// All trainable weights: residual stack, attention stacks (one per GCN
/// layer), GCN layers, and the attribute-decoder MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub res_weights: Vec<ParamTensor>,
    pub att_weights: Vec<Vec<ParamTensor>>,
    pub gcn_weights: Vec<ParamTensor>,
    pub dec_weights: Vec<ParamTensor>,
}

impl ModelParams {
    /// Glorot-initialize every tensor in a fixed order from one seed.
    pub fn init(input_dim: usize, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let res_weights = (0..hp.res_layers)
            .map(|l| {
                ParamTensor::new(
                    format!("res.{l}"),
                    glorot_init(input_dim, input_dim, &mut rng),
                )
            })
            .collect();
        let att_weights = hp
            .gcn_dims
            .iter()
            .enumerate()
            .map(|(l, &width)| {
                (0..hp.att_layers)
                    .map(|j| {
                        let rows = if j == 0 { input_dim } else { width };
                        ParamTensor::new(
                            format!("att.{l}.{j}"),
                            glorot_init(rows, width, &mut rng),
                        )
                    })
                    .collect()
            })
            .collect();
        let mut gcn_weights = Vec::with_capacity(hp.gcn_dims.len());
        let mut in_dim = input_dim;
        for (l, &width) in hp.gcn_dims.iter().enumerate() {
            gcn_weights.push(ParamTensor::new(
                format!("gcn.{l}"),
                glorot_init(in_dim, width, &mut rng),
            ));
            in_dim = width;
        }
        let widths = hp.decoder_widths(input_dim);
        let dec_weights = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| ParamTensor::new(format!("dec.{l}"), glorot_init(w[0], w[1], &mut rng)))
            .collect();
        Ok(ModelParams {
            res_weights,
            att_weights,
            gcn_weights,
            dec_weights,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.res_weights
            .iter()
            .chain(self.att_weights.iter().flatten())
            .chain(self.gcn_weights.iter())
            .chain(self.dec_weights.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.res_weights
            .iter_mut()
            .chain(self.att_weights.iter_mut().flatten())
            .chain(self.gcn_weights.iter_mut())
            .chain(self.dec_weights.iter_mut())
    }

    pub fn tensor_count(&self) -> usize {
        self.iter().count()
    }
}

/// Everything one forward pass produces.
#[derive(Debug, Clone)]
pub struct ForwardState {
    /// Learned residual R, n x d, nonnegative.
    pub residual: Tensor2,
    /// Attention maps, one per GCN layer, entries in (0, 1].
    pub attention: Vec<Tensor2>,
    /// Hidden representations per GCN layer; the last is the embedding Z.
    pub hidden: Vec<Tensor2>,
    /// Reconstructed adjacency, n x n, entries in (0, 1). Materialized
    /// densely; at n in the tens of thousands this is the peak memory
    /// consumer (training and scoring avoid it via row blocks).
    pub adj_recon: Tensor2,
    /// Reconstructed attributes, n x d.
    pub attr_recon: Tensor2,
    pub structure_error: f64,
    pub attribute_error: f64,
    pub loss: f64,
}

impl ForwardState {
    pub fn embedding(&self) -> &Tensor2 {
        self.hidden.last().expect("at least one GCN layer")
    }
}

/// Anomaly ranking strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Residual,
    Attribute,
    Structure,
    Combined,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Residual,
        Strategy::Attribute,
        Strategy::Structure,
        Strategy::Combined,
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Strategy::Residual => "residual",
            Strategy::Attribute => "attribute",
            Strategy::Structure => "structure",
            Strategy::Combined => "combined",
        };
        f.write_str(name)
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(Strategy::Residual),
            "attribute" => Ok(Strategy::Attribute),
            "structure" => Ok(Strategy::Structure),
            "combined" => Ok(Strategy::Combined),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?} (expected residual, attribute, structure, or combined)"
            ))),
        }
    }
}

/// Per-node scores under one strategy, plus the descending ranking
/// (ties break by ascending node index).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub strategy: Strategy,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl ScoreReport {
    pub fn new(strategy: Strategy, scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("{strategy} scores"),
            });
        }
        let ranking = rank_descending(&scores);
        Ok(ScoreReport {
            strategy,
            scores,
            ranking,
        })
    }
}

pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub structure_error: f64,
    pub attribute_error: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainingHistory {
    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

// ---------------------------------------------------------------------------
// Plain (inference) forward operations
// ---------------------------------------------------------------------------

/// Residual stack: R = ReLU(... ReLU(X W_0) ... W_last). Nonnegative output
/// with the shape of X.
pub fn compute_residual(x: &Tensor2, params: &ModelParams) -> Result<Tensor2> {
    let mut r = x.clone();
    for w in &params.res_weights {
        r = relu(&r.matmul(&w.value)?);
    }
    Ok(r)
}

/// Attention maps exp(-gamma * FC_l(R)), one per GCN layer; each FC stack is
/// `att_layers` ReLU layers wide as its GCN layer. Entries in (0, 1].
pub fn compute_attention(r: &Tensor2, params: &ModelParams, gamma: f64) -> Result<Vec<Tensor2>> {
    if gamma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gamma must be >= 0, got {gamma}"
        )));
    }
    params
        .att_weights
        .iter()
        .map(|stack| {
            let mut t = r.clone();
            for w in stack {
                t = relu(&t.matmul(&w.value)?);
            }
            Ok(exp_neg(&t, gamma))
        })
        .collect()
}

/// GCN encoder. The first layer aggregates raw attributes; deeper layers
/// aggregate attention-damped hidden states. Returns all hidden matrices;
/// the last is the embedding Z. `attention` must hold one map per layer
/// (the final map is applied after encoding, not here).
pub fn encode(
    s: &NormalizedAdjacency,
    x: &Tensor2,
    attention: &[Tensor2],
    params: &ModelParams,
) -> Result<Vec<Tensor2>> {
    let layers = params.gcn_weights.len();
    if attention.len() != layers {
        return Err(Error::DimensionMismatch {
            what: "attention maps".into(),
            expected: layers,
            found: attention.len(),
        });
    }
    let mut hidden = Vec::with_capacity(layers);
    let mut h = x.clone();
    for (l, w) in params.gcn_weights.iter().enumerate() {
        let input = if l == 0 {
            h.clone()
        } else {
            h.hadamard(&attention[l - 1])?
        };
        h = relu(&s.matrix().mul_dense(&input.matmul(&w.value)?)?);
        hidden.push(h.clone());
    }
    Ok(hidden)
}

/// Inner-product decoder: sigmoid(Z Z^T), symmetric with entries in (0, 1).
pub fn decode_structure(z: &Tensor2) -> Result<Tensor2> {
    z.ensure_finite("structure decoder input")?;
    Ok(z.matmul_nt(z)?.map(sigmoid_scalar))
}

/// Attribute decoder MLP: ReLU between layers, linear final layer so the
/// output can reach negative attribute values.
pub fn decode_attributes(z: &Tensor2, params: &ModelParams) -> Result<Tensor2> {
    let mut h = z.clone();
    let last = params.dec_weights.len() - 1;
    for (l, w) in params.dec_weights.iter().enumerate() {
        h = h.matmul(&w.value)?;
        if l < last {
            h = relu(&h);
        }
    }
    Ok(h)
}

/// Joint objective: E_S = ||A - A^||_F^2, E_A = ||X - X^ - lambda R||_F^2,
/// L = (1 - alpha) E_S + alpha E_A.
pub fn loss(
    adj: &CsrMatrix,
    x: &Tensor2,
    a_hat: &Tensor2,
    x_hat: &Tensor2,
    r: &Tensor2,
    alpha: f64,
    lambda: f64,
) -> Result<(f64, f64, f64)> {
    let n = adj.n_rows();
    if a_hat.shape() != (n, n) {
        return Err(Error::Shape {
            op: "loss",
            lhs: (n, n),
            rhs: a_hat.shape(),
        });
    }
    if x.shape() != x_hat.shape() || x.shape() != r.shape() {
        return Err(Error::Shape {
            op: "loss",
            lhs: x.shape(),
            rhs: x_hat.shape(),
        });
    }
    let mut e_s = 0.0;
    for i in 0..n {
        let row = a_hat.row(i);
        let mut row_sum = 0.0;
        for &m in row {
            row_sum += m * m;
        }
        let (cols, _) = adj.row(i);
        for &j in cols {
            let m = row[j];
            row_sum += 1.0 - 2.0 * m;
        }
        e_s += row_sum;
    }
    let mut e_a = 0.0;
    for ((&xv, &xh), &rv) in x.data().iter().zip(x_hat.data()).zip(r.data()) {
        let diff = xv - xh - lambda * rv;
        e_a += diff * diff;
    }
    let l = (1.0 - alpha) * e_s + alpha * e_a;
    if !l.is_finite() {
        return Err(Error::NonFinite {
            context: "loss".into(),
        });
    }
    Ok((e_s, e_a, l))
}

/// Per-row structure reconstruction errors ||A_i - sigmoid(z_i Z^T)||_2,
/// computed in row blocks without materializing the full reconstruction.
pub fn structure_row_errors(adj: &CsrMatrix, z: &Tensor2) -> Result<Vec<f64>> {
    let n = z.rows();
    if adj.n_rows() != n || adj.n_cols() != n {
        return Err(Error::Shape {
            op: "structure_row_errors",
            lhs: (adj.n_rows(), adj.n_cols()),
            rhs: z.shape(),
        });
    }
    const BLOCK: usize = 1024;
    let mut errors = Vec::with_capacity(n);
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let mut block = Tensor2::zeros(end - start, z.cols());
        for i in start..end {
            block.row_mut(i - start).copy_from_slice(z.row(i));
        }
        let logits = block.matmul_nt(z)?;
        for (local, i) in (start..end).enumerate() {
            let row = logits.row(local);
            let mut sum = 0.0;
            for &l in row {
                let m = sigmoid_scalar(l);
                sum += m * m;
            }
            let (cols, _) = adj.row(i);
            for &j in cols {
                let m = sigmoid_scalar(row[j]);
                sum += 1.0 - 2.0 * m;
            }
            errors.push(sum.max(0.0).sqrt());
        }
    }
    Ok(errors)
}

fn row_norms(t: &Tensor2) -> Vec<f64> {
    (0..t.rows())
        .map(|i| t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A hyperparameter set bound to initialized (or trained) weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub hyperparams: Hyperparams,
    pub input_dim: usize,
    pub params: ModelParams,
}

struct TapeForward<'a> {
    tape: Tape<'a>,
    param_vars: Vec<Var>,
    e_s: Var,
    e_a: Var,
    loss: Var,
}

impl Model {
    /// Fresh model with Glorot-initialized weights drawn from `hp.seed`.
    pub fn init(input_dim: usize, hp: &Hyperparams) -> Result<Model> {
        let params = ModelParams::init(input_dim, hp)?;
        Ok(Model {
            hyperparams: hp.clone(),
            input_dim,
            params,
        })
    }

    fn check_input(&self, g: &AttributedGraph) -> Result<()> {
        if g.attr_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "attribute dimension".into(),
                expected: self.input_dim,
                found: g.attr_dim(),
            });
        }
        g.attributes().ensure_finite("model input")
    }

    /// Record one differentiable forward pass over the tape.
    fn build_forward<'a>(
        &self,
        s: &'a CsrMatrix,
        adj: &'a CsrMatrix,
        x: &Tensor2,
    ) -> Result<TapeForward<'a>> {
        let hp = &self.hyperparams;
        let mut tape = Tape::new();
        let mut param_vars = Vec::with_capacity(self.params.tensor_count());
        for p in self.params.iter() {
            param_vars.push(tape.leaf(p.value.clone())?);
        }
        // leaves follow ModelParams::iter order: res, att (flattened), gcn, dec
        let res_n = self.params.res_weights.len();
        let att_n: usize = self.params.att_weights.iter().map(Vec::len).sum();
        let gcn_n = self.params.gcn_weights.len();
        let (res_vars, rest) = param_vars.split_at(res_n);
        let (att_vars_flat, rest) = rest.split_at(att_n);
        let (gcn_vars, dec_vars) = rest.split_at(gcn_n);

        let x_var = tape.leaf(x.clone())?;

        let mut r = x_var;
        for &w in res_vars {
            let prod = tape.matmul(r, w)?;
            r = tape.relu(prod)?;
        }

        let mut thetas = Vec::with_capacity(self.params.att_weights.len());
        let mut offset = 0;
        for stack in &self.params.att_weights {
            let mut t = r;
            for j in 0..stack.len() {
                let prod = tape.matmul(t, att_vars_flat[offset + j])?;
                t = tape.relu(prod)?;
            }
            offset += stack.len();
            thetas.push(tape.exp_neg(t, hp.gamma)?);
        }

        let mut h = x_var;
        for (l, &w) in gcn_vars.iter().enumerate() {
            let input = if l == 0 { h } else { tape.hadamard(h, thetas[l - 1])? };
            let projected = tape.matmul(input, w)?;
            let aggregated = tape.spmm(s, projected)?;
            h = tape.relu(aggregated)?;
        }
        let z = h;
        let z_att = tape.hadamard(z, thetas[thetas.len() - 1])?;
        let (z_struct, z_attr) = match hp.embedding_attention {
            AttentionTarget::Both => (z_att, z_att),
            AttentionTarget::Structure => (z_att, z),
            AttentionTarget::Attribute => (z, z_att),
        };

        let e_s = tape.struct_recon_error(adj, z_struct)?;

        let mut xh = z_attr;
        let last = dec_vars.len() - 1;
        for (l, &w) in dec_vars.iter().enumerate() {
            xh = tape.matmul(xh, w)?;
            if l < last {
                xh = tape.relu(xh)?;
            }
        }
        let scaled_r = tape.scale(r, hp.lambda)?;
        let diff = tape.sub(x_var, xh)?;
        let resid_diff = tape.sub(diff, scaled_r)?;
        let e_a = tape.frob_sq(resid_diff)?;

        let weighted_s = tape.scale(e_s, 1.0 - hp.alpha)?;
        let weighted_a = tape.scale(e_a, hp.alpha)?;
        let loss = tape.add(weighted_s, weighted_a)?;

        Ok(TapeForward {
            tape,
            param_vars,
            e_s,
            e_a,
            loss,
        })
    }

    /// Full inference pass, materializing every intermediate named in
    /// [`ForwardState`] (including the dense reconstructed adjacency).
    pub fn forward(&self, g: &AttributedGraph) -> Result<ForwardState> {
        self.check_input(g)?;
        let s = normalize_adjacency(g);
        let x = g.attributes();
        let hp = &self.hyperparams;

        let residual = compute_residual(x, &self.params)?;
        let attention = compute_attention(&residual, &self.params, hp.gamma)?;
        let hidden = encode(&s, x, &attention, &self.params)?;
        let z = hidden.last().expect("at least one GCN layer");
        let z_att = z.hadamard(attention.last().expect("one map per layer"))?;
        let (z_struct, z_attr) = match hp.embedding_attention {
            AttentionTarget::Both => (&z_att, &z_att),
            AttentionTarget::Structure => (&z_att, z),
            AttentionTarget::Attribute => (z, &z_att),
        };
        let adj_recon = decode_structure(z_struct)?;
        let attr_recon = decode_attributes(z_attr, &self.params)?;
        let (structure_error, attribute_error, total) = loss(
            g.adjacency(),
            x,
            &adj_recon,
            &attr_recon,
            &residual,
            hp.alpha,
            hp.lambda,
        )?;
        Ok(ForwardState {
            residual,
            attention,
            hidden,
            adj_recon,
            attr_recon,
            structure_error,
            attribute_error,
            loss: total,
        })
    }

    /// (E_S, E_A, L) at the current weights without materializing the dense
    /// reconstruction.
    pub fn loss_terms(&self, g: &AttributedGraph) -> Result<(f64, f64, f64)> {
        self.check_input(g)?;
        let s = normalize_adjacency(g);
        let fwd = self.build_forward(s.matrix(), g.adjacency(), g.attributes())?;
        Ok((
            fwd.tape.value(fwd.e_s).scalar_value()?,
            fwd.tape.value(fwd.e_a).scalar_value()?,
            fwd.tape.value(fwd.loss).scalar_value()?,
        ))
    }

    /// Gradient of L with respect to every parameter, in `ModelParams::iter`
    /// order. Parameters off the loss path get zero gradients.
    pub fn loss_gradients(&self, g: &AttributedGraph) -> Result<Vec<Tensor2>> {
        self.check_input(g)?;
        let s = normalize_adjacency(g);
        let fwd = self.build_forward(s.matrix(), g.adjacency(), g.attributes())?;
        let grads = fwd.tape.backward(fwd.loss)?;
        Ok(self
            .params
            .iter()
            .zip(&fwd.param_vars)
            .map(|(p, var)| {
                grads[var.index()]
                    .clone()
                    .unwrap_or_else(|| Tensor2::zeros(p.value.rows(), p.value.cols()))
            })
            .collect())
    }

    /// Full-batch training: one forward/backward/Adam step per epoch.
    /// History rows record the loss surface at the start of each epoch.
    pub fn train(g: &AttributedGraph, hp: &Hyperparams) -> Result<(Model, TrainingHistory)> {
        hp.validate()?;
        g.attributes().ensure_finite("training input")?;
        let mut model = Model::init(g.attr_dim(), hp)?;
        let s = normalize_adjacency(g);
        let adam_cfg = AdamConfig::with_lr(hp.lr);
        let mut history = TrainingHistory::default();

        for epoch in 0..hp.epochs {
            let in_epoch = |e: Error| Error::Training(format!("epoch {epoch}: {e}"));
            let fwd = model
                .build_forward(s.matrix(), g.adjacency(), g.attributes())
                .map_err(in_epoch)?;
            history.epochs.push(EpochStats {
                epoch,
                structure_error: fwd.tape.value(fwd.e_s).scalar_value()?,
                attribute_error: fwd.tape.value(fwd.e_a).scalar_value()?,
                loss: fwd.tape.value(fwd.loss).scalar_value()?,
            });
            let mut grads = fwd.tape.backward(fwd.loss).map_err(in_epoch)?;
            for (param, var) in model.params.iter_mut().zip(&fwd.param_vars) {
                let grad = grads[var.index()]
                    .take()
                    .unwrap_or_else(|| Tensor2::zeros(param.value.rows(), param.value.cols()));
                adam_step(&mut param.value, &grad, &mut param.adam, &adam_cfg, &param.name)
                    .map_err(in_epoch)?;
            }
        }
        Ok((model, history))
    }

    /// Per-node anomaly scores under one ranking strategy.
    pub fn score(&self, g: &AttributedGraph, strategy: Strategy) -> Result<ScoreReport> {
        self.check_input(g)?;
        let scores = match strategy {
            Strategy::Residual => {
                // depends only on X and the residual stack
                let r = compute_residual(g.attributes(), &self.params)?;
                row_norms(&r)
            }
            Strategy::Attribute => self.attribute_errors(g)?,
            Strategy::Structure => self.structure_errors(g)?,
            Strategy::Combined => {
                let alpha = self.hyperparams.alpha;
                let attr = self.attribute_errors(g)?;
                let struc = self.structure_errors(g)?;
                struc
                    .iter()
                    .zip(&attr)
                    .map(|(s, a)| (1.0 - alpha) * s + alpha * a)
                    .collect()
            }
        };
        ScoreReport::new(strategy, scores)
    }

    pub fn score_all(&self, g: &AttributedGraph) -> Result<Vec<ScoreReport>> {
        Strategy::ALL.iter().map(|&s| self.score(g, s)).collect()
    }

    fn embedding_and_attention(
        &self,
        g: &AttributedGraph,
    ) -> Result<(Tensor2, Tensor2, Vec<Tensor2>)> {
        let s = normalize_adjacency(g);
        let x = g.attributes();
        let residual = compute_residual(x, &self.params)?;
        let attention = compute_attention(&residual, &self.params, self.hyperparams.gamma)?;
        let hidden = encode(&s, x, &attention, &self.params)?;
        let z = hidden.into_iter().last().expect("at least one GCN layer");
        let z_att = z.hadamard(attention.last().expect("one map per layer"))?;
        Ok((z, z_att, attention))
    }

    fn attribute_errors(&self, g: &AttributedGraph) -> Result<Vec<f64>> {
        let (z, z_att, _) = self.embedding_and_attention(g)?;
        let z_attr = match self.hyperparams.embedding_attention {
            AttentionTarget::Both | AttentionTarget::Attribute => &z_att,
            AttentionTarget::Structure => &z,
        };
        let x_hat = decode_attributes(z_attr, &self.params)?;
        let diff = g.attributes().sub(&x_hat)?;
        Ok(row_norms(&diff))
    }

    fn structure_errors(&self, g: &AttributedGraph) -> Result<Vec<f64>> {
        let (z, z_att, _) = self.embedding_and_attention(g)?;
        let z_struct = match self.hyperparams.embedding_attention {
            AttentionTarget::Both | AttentionTarget::Structure => &z_att,
            AttentionTarget::Attribute => &z,
        };
        structure_row_errors(g.adjacency(), z_struct)
    }

    /// Serialize hyperparameters, every weight tensor, and optimizer state
    /// to JSON. `load(save(m))` reproduces identical scores.
    pub fn save(&self, path: &Path) -> Result<()> {
        let checkpoint = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model: self.clone(),
        };
        let json = serde_json::to_string_pretty(&checkpoint)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)?;
        if checkpoint.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidInput(format!(
                "unsupported checkpoint format {:?}",
                checkpoint.format
            )));
        }
        checkpoint.model.hyperparams.validate()?;
        Ok(checkpoint.model)
    }
}

const CHECKPOINT_FORMAT: &str = "resgcn-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    model: Model,
}
