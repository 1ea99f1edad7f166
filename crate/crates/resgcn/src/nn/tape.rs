//! Recorded reverse-mode differentiation over the operator set the model
//! needs: dense/sparse products, elementwise nonlinearities, Frobenius
//! losses, and a fused adjacency-reconstruction error that never
//! materializes the full n x n reconstruction.
//!
//! A [`Tape`] records each forward operation together with its value; calling
//! [`Tape::backward`] on a recorded scalar walks the nodes in reverse and
//! accumulates exact gradients. Every operation validates shapes and rejects
//! non-finite outputs instead of propagating them.

use crate::error::{Error, Result};
use crate::nn::tensor::{exp_neg, relu, sigmoid, sigmoid_scalar, Tensor2};
use crate::sparse::CsrMatrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position in the gradient vector returned by [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    /// a * b^T
    MatMulNt(Var, Var),
    Spmm(&'a CsrMatrix, Var),
    Hadamard(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    ExpNeg(Var, f64),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    /// Squared Frobenius norm, yielding a 1x1 scalar.
    FrobSq(Var),
    /// || A - sigmoid(Z Z^T) ||_F^2 evaluated in row blocks.
    StructRecon(&'a CsrMatrix, Var),
}

struct Node<'a> {
    value: Tensor2,
    op: Op<'a>,
}

/// Rows per block for the fused adjacency-reconstruction error; bounds peak
/// memory at block_rows * n doubles.
const STRUCT_BLOCK_ROWS: usize = 1024;

pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Default for Tape<'a> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor2, op: Op<'a>, context: &str) -> Result<Var> {
        value.ensure_finite(context)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Record an input. Leaves are where gradients accumulate.
    pub fn leaf(&mut self, value: Tensor2) -> Result<Var> {
        self.push(value, Op::Leaf, "leaf input")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), "matmul output")
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_nt(self.value(b))?;
        self.push(value, Op::MatMulNt(a, b), "matmul_nt output")
    }

    pub fn spmm(&mut self, s: &'a CsrMatrix, h: Var) -> Result<Var> {
        let value = s.mul_dense(self.value(h))?;
        self.push(value, Op::Spmm(s, h), "spmm output")
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        self.push(value, Op::Hadamard(a, b), "hadamard output")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = relu(self.value(x));
        self.push(value, Op::Relu(x), "relu output")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = sigmoid(self.value(x));
        self.push(value, Op::Sigmoid(x), "sigmoid output")
    }

    pub fn exp_neg(&mut self, x: Var, gamma: f64) -> Result<Var> {
        let value = exp_neg(self.value(x), gamma);
        self.push(value, Op::ExpNeg(x, gamma), "exp_neg output")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        self.push(value, Op::Add(a, b), "add output")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        self.push(value, Op::Sub(a, b), "sub output")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let value = self.value(x).scale(c);
        self.push(value, Op::Scale(x, c), "scale output")
    }

    pub fn frob_sq(&mut self, x: Var) -> Result<Var> {
        let value = Tensor2::scalar(self.value(x).frob_norm_sq());
        self.push(value, Op::FrobSq(x), "frob_sq output")
    }

    /// Fused structure-reconstruction error || A - sigmoid(Z Z^T) ||_F^2.
    pub fn struct_recon_error(&mut self, adj: &'a CsrMatrix, z: Var) -> Result<Var> {
        let zt = self.value(z);
        if adj.n_rows() != adj.n_cols() || adj.n_rows() != zt.rows() {
            return Err(Error::Shape {
                op: "struct_recon_error",
                lhs: (adj.n_rows(), adj.n_cols()),
                rhs: zt.shape(),
            });
        }
        let value = Tensor2::scalar(struct_recon_forward(adj, zt)?);
        self.push(value, Op::StructRecon(adj, z), "struct_recon output")
    }

    /// Reverse pass from a recorded scalar. Returns one gradient slot per
    /// node; untouched slots (nodes not on the path to the loss) are `None`.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Tensor2>>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(
                "backward called before any forward pass was recorded".into(),
            ));
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(Error::State(format!(
                "backward requires a scalar loss, found shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for i in (0..=loss.0).rev() {
            // Inputs always precede their consumers, so split keeps the
            // borrow checker happy without cloning the upstream gradient.
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(&self.nodes[b.0].value)?;
                    let gb = self.nodes[a.0].value.matmul_tn(g)?;
                    accumulate(&mut lower[a.0], ga)?;
                    accumulate(&mut lower[b.0], gb)?;
                }
                Op::MatMulNt(a, b) => {
                    // y = a b^T: da = g b, db = g^T a
                    let ga = g.matmul(&self.nodes[b.0].value)?;
                    let gb = g.matmul_tn(&self.nodes[a.0].value)?;
                    accumulate(&mut lower[a.0], ga)?;
                    accumulate(&mut lower[b.0], gb)?;
                }
                Op::Spmm(s, h) => {
                    let gh = s.mul_dense_tn(g)?;
                    accumulate(&mut lower[h.0], gh)?;
                }
                Op::Hadamard(a, b) => {
                    let ga = g.hadamard(&self.nodes[b.0].value)?;
                    let gb = g.hadamard(&self.nodes[a.0].value)?;
                    accumulate(&mut lower[a.0], ga)?;
                    accumulate(&mut lower[b.0], gb)?;
                }
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    for (gv, &xv) in gx.data_mut().iter_mut().zip(self.nodes[x.0].value.data()) {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut lower[x.0], gx)?;
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[i].value;
                    let mut gx = g.clone();
                    for (gv, &yv) in gx.data_mut().iter_mut().zip(y.data()) {
                        *gv *= yv * (1.0 - yv);
                    }
                    accumulate(&mut lower[x.0], gx)?;
                }
                Op::ExpNeg(x, gamma) => {
                    let y = &self.nodes[i].value;
                    let mut gx = g.clone();
                    for (gv, &yv) in gx.data_mut().iter_mut().zip(y.data()) {
                        *gv *= -gamma * yv;
                    }
                    accumulate(&mut lower[x.0], gx)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut lower[a.0], g.clone())?;
                    accumulate(&mut lower[b.0], g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut lower[a.0], g.clone())?;
                    accumulate(&mut lower[b.0], g.scale(-1.0))?;
                }
                Op::Scale(x, c) => {
                    accumulate(&mut lower[x.0], g.scale(*c))?;
                }
                Op::FrobSq(x) => {
                    let s = g.scalar_value()?;
                    accumulate(&mut lower[x.0], self.nodes[x.0].value.scale(2.0 * s))?;
                }
                Op::StructRecon(adj, z) => {
                    let s = g.scalar_value()?;
                    let gz = struct_recon_backward(adj, &self.nodes[z.0].value, s)?;
                    accumulate(&mut lower[z.0], gz)?;
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(slot: &mut Option<Tensor2>, grad: Tensor2) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&grad),
        None => {
            *slot = Some(grad);
            Ok(())
        }
    }
}

/// E_S accumulated block by block in row-major order, so the sum matches a
/// dense evaluation bit for bit.
fn struct_recon_forward(adj: &CsrMatrix, z: &Tensor2) -> Result<f64> {
    let n = z.rows();
    let mut total = 0.0;
    for start in (0..n).step_by(STRUCT_BLOCK_ROWS) {
        let end = (start + STRUCT_BLOCK_ROWS).min(n);
        let block = block_rows(z, start, end);
        let logits = block.matmul_nt(z)?;
        for (local, i) in (start..end).enumerate() {
            let row = logits.row(local);
            let mut row_sum = 0.0;
            for &l in row {
                let m = sigmoid_scalar(l);
                row_sum += m * m;
            }
            // entries where A = 1 contribute (1 - m)^2 instead of m^2
            let (cols, _) = adj.row(i);
            for &j in cols {
                let m = sigmoid_scalar(row[j]);
                row_sum += 1.0 - 2.0 * m;
            }
            total += row_sum;
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "struct_recon_error".into(),
        });
    }
    Ok(total)
}

/// Gradient of the fused E_S with respect to Z, scaled by `upstream`.
/// With M = sigmoid(Z Z^T) and P = 2 (M - A) o M o (1 - M), the gradient is
/// (P + P^T) Z; blocks contribute P_b Z to their own rows and P_b^T Z_b
/// everywhere.
fn struct_recon_backward(adj: &CsrMatrix, z: &Tensor2, upstream: f64) -> Result<Tensor2> {
    let (n, k) = z.shape();
    let mut grad = Tensor2::zeros(n, k);
    for start in (0..n).step_by(STRUCT_BLOCK_ROWS) {
        let end = (start + STRUCT_BLOCK_ROWS).min(n);
        let block = block_rows(z, start, end);
        let mut p = block.matmul_nt(z)?;
        for (local, i) in (start..end).enumerate() {
            let row = p.row_mut(local);
            for v in row.iter_mut() {
                let m = sigmoid_scalar(*v);
                *v = 2.0 * m * m * (1.0 - m);
            }
            let (cols, _) = adj.row(i);
            for &j in cols {
                // shift (m - 0) to (m - 1) for present edges
                let l = z.row(i).iter().zip(z.row(j)).map(|(a, b)| a * b).sum::<f64>();
                let m = sigmoid_scalar(l);
                row[j] -= 2.0 * m * (1.0 - m);
            }
        }
        let own = p.matmul(z)?;
        for (local, i) in (start..end).enumerate() {
            for (g, &v) in grad.row_mut(i).iter_mut().zip(own.row(local)) {
                *g += upstream * v;
            }
        }
        let cross = p.matmul_tn(&block)?;
        for i in 0..n {
            for (g, &v) in grad.row_mut(i).iter_mut().zip(cross.row(i)) {
                *g += upstream * v;
            }
        }
    }
    Ok(grad)
}

fn block_rows(z: &Tensor2, start: usize, end: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(end - start, z.cols());
    for i in start..end {
        out.row_mut(i - start).copy_from_slice(z.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::glorot_init;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences on a scalar-valued function of one leaf.
    fn finite_diff(
        base: &Tensor2,
        eval: impl Fn(&Tensor2) -> f64,
        h: f64,
    ) -> Tensor2 {
        let mut grad = Tensor2::zeros(base.rows(), base.cols());
        for idx in 0..base.data().len() {
            let mut plus = base.clone();
            plus.data_mut()[idx] += h;
            let mut minus = base.clone();
            minus.data_mut()[idx] -= h;
            grad.data_mut()[idx] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        grad
    }

    fn max_rel_error(analytic: &Tensor2, numeric: &Tensor2) -> f64 {
        analytic
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    fn random_csr(n: usize, p: f64, rng: &mut impl Rng) -> CsrMatrix {
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(p) {
                    triplets.push((i, j, 1.0));
                    triplets.push((j, i, 1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, triplets).unwrap()
    }

    #[test]
    fn frobenius_gradient_is_two_w() {
        let mut tape = Tape::new();
        let w = tape
            .leaf(Tensor2::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap())
            .unwrap();
        let loss = tape.frob_sq(w).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gw = grads[0].as_ref().unwrap();
        let expected = tape.value(w).scale(2.0);
        assert_eq!(gw, &expected);
    }

    #[test]
    fn unused_leaf_gets_no_gradient() {
        let mut tape = Tape::new();
        let used = tape.leaf(Tensor2::scalar(2.0)).unwrap();
        let unused = tape.leaf(Tensor2::scalar(5.0)).unwrap();
        let loss = tape.frob_sq(used).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads[unused.index()].is_none());
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let tape = Tape::new();
        assert!(matches!(
            tape.backward(Var(0)),
            Err(Error::State(_))
        ));
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::zeros(2, 3)).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::State(_))));
    }

    #[test]
    fn non_finite_output_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::from_vec(1, 1, vec![1e308]).unwrap()).unwrap();
        let doubled = tape.add(x, x).unwrap_err();
        assert!(matches!(doubled, Error::NonFinite { .. }));
    }

    #[test]
    fn spmm_matches_dense_product_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let n = rng.gen_range(2..=50);
            let s = random_csr(n, 0.2, &mut rng);
            let h = glorot_init(n, 7, &mut rng);
            let sparse = s.mul_dense(&h).unwrap();
            let dense = s.to_dense().matmul(&h).unwrap();
            for (a, b) in sparse.data().iter().zip(dense.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spmm_on_triangle_row_normalized_gives_ones() {
        // S of K3 has every entry 1/3; each row of S * ones(3,1) sums to 1.
        let s = CsrMatrix::from_triplets(
            3,
            3,
            (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j, 1.0 / 3.0)))
                .collect(),
        )
        .unwrap();
        let ones = Tensor2::from_vec(3, 1, vec![1.0; 3]).unwrap();
        let out = s.mul_dense(&ones).unwrap();
        for &v in out.data() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_check_each_primitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;

        // matmul: loss = || X W ||_F^2 w.r.t. W
        let x = glorot_init(5, 4, &mut rng);
        let w0 = glorot_init(4, 3, &mut rng);
        let grad_of = |w: &Tensor2| {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone()).unwrap();
            let wv = tape.leaf(w.clone()).unwrap();
            let y = tape.matmul(xv, wv).unwrap();
            let loss = tape.frob_sq(y).unwrap();
            let value = tape.value(loss).scalar_value().unwrap();
            let grad = tape.backward(loss).unwrap()[wv.index()].clone().unwrap();
            (grad, value)
        };
        let (analytic, _) = grad_of(&w0);
        let numeric = finite_diff(&w0, |w| grad_of(w).1, h);
        assert!(max_rel_error(&analytic, &numeric) < 1e-6);

        // composed elementwise chain: sigmoid, exp_neg, hadamard, sub, scale
        let a0 = glorot_init(4, 4, &mut rng);
        let b = glorot_init(4, 4, &mut rng);
        let eval = |a: &Tensor2| {
            let mut tape = Tape::new();
            let av = tape.leaf(a.clone()).unwrap();
            let bv = tape.leaf(b.clone()).unwrap();
            let s = tape.sigmoid(av).unwrap();
            let e = tape.exp_neg(s, 1.3).unwrap();
            let p = tape.hadamard(e, bv).unwrap();
            let d = tape.sub(p, bv).unwrap();
            let sc = tape.scale(d, 0.7).unwrap();
            let loss = tape.frob_sq(sc).unwrap();
            (tape, av, loss)
        };
        let (tape, av, loss) = eval(&a0);
        let analytic = tape.backward(loss).unwrap()[av.index()].clone().unwrap();
        let numeric = finite_diff(
            &a0,
            |a| {
                let (tape, _, loss) = eval(a);
                tape.value(loss).scalar_value().unwrap()
            },
            h,
        );
        assert!(max_rel_error(&analytic, &numeric) < 1e-6);

        // relu away from kinks
        let mut c0 = glorot_init(4, 4, &mut rng);
        for v in c0.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.1_f64.copysign(*v);
            }
        }
        let eval_relu = |c: &Tensor2| {
            let mut tape = Tape::new();
            let cv = tape.leaf(c.clone()).unwrap();
            let r = tape.relu(cv).unwrap();
            let loss = tape.frob_sq(r).unwrap();
            (tape, cv, loss)
        };
        let (tape, cv, loss) = eval_relu(&c0);
        let analytic = tape.backward(loss).unwrap()[cv.index()].clone().unwrap();
        let numeric = finite_diff(
            &c0,
            |c| {
                let (tape, _, loss) = eval_relu(c);
                tape.value(loss).scalar_value().unwrap()
            },
            h,
        );
        assert!(max_rel_error(&analytic, &numeric) < 1e-6);

        // spmm and matmul_nt
        let s = random_csr(6, 0.4, &mut rng);
        let h0 = glorot_init(6, 3, &mut rng);
        let eval_sp = |hv: &Tensor2| {
            let mut tape = Tape::new();
            let hleaf = tape.leaf(hv.clone()).unwrap();
            let agg = tape.spmm(&s, hleaf).unwrap();
            let gram = tape.matmul_nt(agg, agg).unwrap();
            let sg = tape.sigmoid(gram).unwrap();
            let loss = tape.frob_sq(sg).unwrap();
            (tape, hleaf, loss)
        };
        let (tape, hleaf, loss) = eval_sp(&h0);
        let analytic = tape.backward(loss).unwrap()[hleaf.index()].clone().unwrap();
        let numeric = finite_diff(
            &h0,
            |hv| {
                let (tape, _, loss) = eval_sp(hv);
                tape.value(loss).scalar_value().unwrap()
            },
            h,
        );
        assert!(max_rel_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn fused_struct_recon_matches_materialized_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 17;
        let adj = random_csr(n, 0.25, &mut rng);
        let z0 = glorot_init(n, 5, &mut rng);

        // materialized: frob_sq(dense(A) - sigmoid(Z Z^T))
        let mut tape = Tape::new();
        let z = tape.leaf(z0.clone()).unwrap();
        let a_dense = tape.leaf(adj.to_dense()).unwrap();
        let gram = tape.matmul_nt(z, z).unwrap();
        let recon = tape.sigmoid(gram).unwrap();
        let diff = tape.sub(a_dense, recon).unwrap();
        let loss_mat = tape.frob_sq(diff).unwrap();
        let grads_mat = tape.backward(loss_mat).unwrap();
        let gz_mat = grads_mat[z.index()].clone().unwrap();
        let es_mat = tape.value(loss_mat).scalar_value().unwrap();

        // fused
        let mut tape2 = Tape::new();
        let z2 = tape2.leaf(z0.clone()).unwrap();
        let loss_fused = tape2.struct_recon_error(&adj, z2).unwrap();
        let grads_fused = tape2.backward(loss_fused).unwrap();
        let gz_fused = grads_fused[z2.index()].clone().unwrap();
        let es_fused = tape2.value(loss_fused).scalar_value().unwrap();

        assert!((es_mat - es_fused).abs() < 1e-10 * es_mat.abs().max(1.0));
        for (a, b) in gz_mat.data().iter().zip(gz_fused.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn fused_struct_recon_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 9;
        let adj = random_csr(n, 0.3, &mut rng);
        let z0 = glorot_init(n, 4, &mut rng);
        let eval = |zv: &Tensor2| {
            let mut tape = Tape::new();
            let z = tape.leaf(zv.clone()).unwrap();
            let loss = tape.struct_recon_error(&adj, z).unwrap();
            (tape, z, loss)
        };
        let (tape, z, loss) = eval(&z0);
        let analytic = tape.backward(loss).unwrap()[z.index()].clone().unwrap();
        let numeric = finite_diff(
            &z0,
            |zv| {
                let (tape, _, loss) = eval(zv);
                tape.value(loss).scalar_value().unwrap()
            },
            1e-5,
        );
        assert!(max_rel_error(&analytic, &numeric) < 1e-6);
    }
}
