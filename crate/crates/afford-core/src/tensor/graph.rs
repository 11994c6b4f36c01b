//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only tape: every operation eagerly computes its
//! value and records its inputs, so node ids are already in topological
//! order. [`Graph::backward`] walks the tape once in reverse, accumulating
//! gradients by summation across fan-out.
//!
//! The op set is deliberately small; structural reshuffles (patchify, head
//! split, slicing, embedding lookup, im2col) are all expressed through
//! [`Graph::gather`] with precomputed index maps, whose adjoint is a
//! scatter-add.

use super::{kernels, numel, Scalar, Tensor};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    /// Elementwise add; `b` may be a trailing-suffix broadcast.
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    /// Elementwise mul; `b` may be a trailing-suffix broadcast.
    Mul { a: Var, b: Var },
    /// `a * mul + add`, elementwise with constants (only `mul` matters to the
    /// backward pass).
    Affine { a: Var, mul: T },
    /// Batched matrix product; `trans_b` multiplies by `bᵀ`.
    Matmul { a: Var, b: Var, trans_b: bool },
    /// `out[i] = map[i] < 0 ? 0 : a[map[i]]`; adjoint is scatter-add.
    Gather { a: Var, map: Arc<Vec<i64>> },
    Concat { a: Var, b: Var, axis: usize },
    SoftmaxLast { a: Var },
    /// Per-row normalization over the last dim with affine params.
    LayerNorm { x: Var, gain: Var, bias: Var },
    Gelu { a: Var },
    SumAll { a: Var },
    /// Mean squared error between same-shaped tensors, fused to a scalar.
    Mse { a: Var, b: Var },
    /// Mean cross-entropy over rows of `logits`; probabilities are kept for
    /// the backward pass.
    CrossEntropy { logits: Var, targets: Arc<Vec<usize>>, probs: Vec<T> },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Variance floor inside layer norm.
pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    strict_finite: bool,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// True when `b` is a strict trailing suffix of `a` (broadcast rule).
fn is_suffix(a: &[usize], b: &[usize]) -> bool {
    b.len() < a.len() && a[a.len() - b.len()..] == *b
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), strict_finite: cfg!(debug_assertions) }
    }

    /// Toggles the per-op finiteness scan (always worth it in verification
    /// suites, too slow for the training hot path in release builds).
    pub fn strict_finite(mut self, on: bool) -> Self {
        self.strict_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        if self.strict_finite {
            value.check_finite("graph op output")?;
        }
        self.nodes.push(Node { op, value, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad).expect("leaf push cannot fail")
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.input(value, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.value(a).dims().to_vec(), self.value(b).dims().to_vec());
        let value = if da == db {
            self.value(a).zip_with(self.value(b), |x, y| x + y)?
        } else if is_suffix(&da, &db) {
            let bl = numel(&db);
            let mut out = self.value(a).clone();
            let bdata = self.value(b).data().to_vec();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                *v += bdata[i % bl];
            }
            out
        } else {
            return Err(Error::shape("add", format!("{da:?} vs {db:?}")));
        };
        let rg = self.any_grad(&[a, b]);
        self.push(Op::Add { a, b }, value, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        self.push(Op::Sub { a, b }, value, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.value(a).dims().to_vec(), self.value(b).dims().to_vec());
        let value = if da == db {
            self.value(a).zip_with(self.value(b), |x, y| x * y)?
        } else if is_suffix(&da, &db) {
            let bl = numel(&db);
            let mut out = self.value(a).clone();
            let bdata = self.value(b).data().to_vec();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                *v *= bdata[i % bl];
            }
            out
        } else {
            return Err(Error::shape("mul", format!("{da:?} vs {db:?}")));
        };
        let rg = self.any_grad(&[a, b]);
        self.push(Op::Mul { a, b }, value, rg)
    }

    pub fn affine(&mut self, a: Var, mul: T, add: T) -> Result<Var> {
        let value = self.value(a).map(|x| x * mul + add);
        let rg = self.any_grad(&[a]);
        self.push(Op::Affine { a, mul }, value, rg)
    }

    /// Zero-copy dim change.
    pub fn reshape(&mut self, a: Var, dims: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshaped(dims)?;
        let rg = self.any_grad(&[a]);
        // Identity gather would waste a copy; model as affine with mul=1.
        self.push(Op::Affine { a, mul: T::one() }, value, rg)
    }

    /// Shape contract: `a [..batch, m, k] × b [..batch, k, n] -> [..batch, m, n]`.
    /// The batch prefixes must be equal, or `b` may be rank-2 and is then
    /// shared across the batch. With `trans_b`, `b` is `[..batch, n, k]`.
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (adims, bdims) = (self.value(a).dims().to_vec(), self.value(b).dims().to_vec());
        let (m, k, n, batch, b_shared) = matmul_dims("matmul", &adims, &bdims, trans_b)?;
        let mut out_dims = adims[..adims.len() - 2].to_vec();
        out_dims.push(m);
        out_dims.push(n);
        let mut out = vec![T::zero(); batch * m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            for bi in 0..batch {
                let a_s = &av[bi * m * k..(bi + 1) * m * k];
                let b_s = if b_shared { bv } else { &bv[bi * k * n..(bi + 1) * k * n] };
                let c_s = &mut out[bi * m * n..(bi + 1) * m * n];
                if trans_b {
                    kernels::gemm_nt(a_s, b_s, c_s, m, k, n);
                } else {
                    kernels::gemm_nn(a_s, b_s, c_s, m, k, n);
                }
            }
        }
        let rg = self.any_grad(&[a, b]);
        self.push(Op::Matmul { a, b, trans_b }, Tensor::new(out_dims, out)?, rg)
    }

    /// `out[i] = map[i] < 0 ? 0 : a.data[map[i]]`.
    pub fn gather(&mut self, a: Var, map: Arc<Vec<i64>>, out_dims: Vec<usize>) -> Result<Var> {
        if numel(&out_dims) != map.len() {
            return Err(Error::shape("gather", format!("map len {} vs dims {out_dims:?}", map.len())));
        }
        let src = self.value(a).data();
        let n = src.len() as i64;
        let mut out = Vec::with_capacity(map.len());
        for &ix in map.iter() {
            if ix >= n {
                return Err(Error::shape("gather", format!("index {ix} out of range {n}")));
            }
            out.push(if ix < 0 { T::zero() } else { src[ix as usize] });
        }
        let rg = self.any_grad(&[a]);
        self.push(Op::Gather { a, map }, Tensor::new(out_dims, out)?, rg)
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (da, db) = (self.value(a).dims().to_vec(), self.value(b).dims().to_vec());
        if da.len() != db.len()
            || axis >= da.len()
            || da.iter().zip(&db).enumerate().any(|(i, (x, y))| i != axis && x != y)
        {
            return Err(Error::shape("concat", format!("{da:?} ++ {db:?} along {axis}")));
        }
        let mut out_dims = da.clone();
        out_dims[axis] += db[axis];
        let outer: usize = da[..axis].iter().product();
        let block_a: usize = da[axis..].iter().product();
        let block_b: usize = db[axis..].iter().product();
        let mut out = Vec::with_capacity(outer * (block_a + block_b));
        let av = self.value(a).data();
        let bv = self.value(b).data();
        for o in 0..outer {
            out.extend_from_slice(&av[o * block_a..(o + 1) * block_a]);
            out.extend_from_slice(&bv[o * block_b..(o + 1) * block_b]);
        }
        let rg = self.any_grad(&[a, b]);
        self.push(Op::Concat { a, b, axis }, Tensor::new(out_dims, out)?, rg)
    }

    /// Numerically stable softmax over the last dim.
    pub fn softmax_last(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let d = *t.dims().last().ok_or_else(|| Error::shape("softmax", "rank 0"))?;
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(d) {
            let mut mx = row[0];
            for &v in row.iter() {
                if v > mx {
                    mx = v;
                }
            }
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let value = Tensor::new(t.dims().to_vec(), out)?;
        let rg = self.any_grad(&[a]);
        self.push(Op::SoftmaxLast { a }, value, rg)
    }

    /// Per-row zero mean / unit variance over the last dim, then `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let t = self.value(x);
        let d = *t.dims().last().ok_or_else(|| Error::shape("layer_norm", "rank 0"))?;
        if self.value(gain).dims() != [d] || self.value(bias).dims() != [d] {
            return Err(Error::shape(
                "layer_norm",
                format!("gain/bias must be [{d}], got {:?}/{:?}",
                    self.value(gain).dims(), self.value(bias).dims()),
            ));
        }
        let eps = T::from_f64(LAYER_NORM_EPS);
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let mut out = t.data().to_vec();
        let inv_d = T::one() / T::from_f64(d as f64);
        for row in out.chunks_mut(d) {
            let mut mean = T::zero();
            for &v in row.iter() {
                mean += v;
            }
            mean *= inv_d;
            let mut var = T::zero();
            for &v in row.iter() {
                let c = v - mean;
                var += c * c;
            }
            var *= inv_d;
            let inv = T::one() / (var + eps).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * g[j] + b[j];
            }
        }
        let value = Tensor::new(t.dims().to_vec(), out)?;
        let rg = self.any_grad(&[x, gain, bias]);
        self.push(Op::LayerNorm { x, gain, bias }, value, rg)
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(gelu_fwd);
        let rg = self.any_grad(&[a]);
        self.push(Op::Gelu { a }, value, rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let mut s = T::zero();
        for &v in self.value(a).data() {
            s += v;
        }
        let rg = self.any_grad(&[a]);
        self.push(Op::SumAll { a }, Tensor::scalar(s), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        let s = self.sum_all(a)?;
        self.affine(s, T::from_f64(1.0 / n as f64), T::zero())
    }

    /// Scalar `mean((a - b)²)`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims() != tb.dims() {
            return Err(Error::shape("mse", format!("{:?} vs {:?}", ta.dims(), tb.dims())));
        }
        let mut s = T::zero();
        for (&x, &y) in ta.data().iter().zip(tb.data()) {
            let d = x - y;
            s += d * d;
        }
        s /= T::from_f64(ta.len() as f64);
        let rg = self.any_grad(&[a, b]);
        self.push(Op::Mse { a, b }, Tensor::scalar(s), rg)
    }

    /// Mean cross-entropy of row targets against `logits [rows, classes]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: Arc<Vec<usize>>) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 2 {
            return Err(Error::shape("cross_entropy", format!("want [rows, classes], got {:?}", t.dims())));
        }
        let (rows, classes) = (t.dims()[0], t.dims()[1]);
        if targets.len() != rows {
            return Err(Error::shape("cross_entropy", format!("{rows} rows vs {} targets", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&c| c >= classes) {
            return Err(Error::Usage(format!("class id {bad} out of range {classes}")));
        }
        let mut probs = t.data().to_vec();
        let mut loss = T::zero();
        for (i, row) in probs.chunks_mut(classes).enumerate() {
            let mut mx = row[0];
            for &v in row.iter() {
                if v > mx {
                    mx = v;
                }
            }
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
            loss -= row[targets[i]].max(T::from_f64(1e-40)).ln();
        }
        loss /= T::from_f64(rows as f64);
        let rg = self.any_grad(&[logits]);
        self.push(Op::CrossEntropy { logits, targets, probs }, Tensor::scalar(loss), rg)
    }

    /// Reverse pass from a scalar loss. Gradients accumulate by summation
    /// across fan-out; nodes that do not require gradients are skipped.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got dims {:?}",
                self.value(loss).dims()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.accumulate_inputs(id, &g, &mut grads)?;
            // Leaves keep their gradient; interior grads are dropped to cap
            // peak memory.
            if matches!(self.nodes[id].op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|data| Tensor::new(self.nodes[id].value.dims().to_vec(), data).expect("grad dims"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate_inputs(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        macro_rules! acc {
            ($var:expr, $write:expr) => {{
                let v: Var = $var;
                if self.nodes[v.0].requires_grad {
                    let slot = grads[v.0]
                        .get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
                    #[allow(clippy::redundant_closure_call)]
                    ($write)(slot.as_mut_slice());
                }
            }};
        }

        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                acc!(*a, |da: &mut [T]| for (d, &gv) in da.iter_mut().zip(g) {
                    *d += gv;
                });
                let bl = self.nodes[b.0].value.len();
                acc!(*b, |db: &mut [T]| for (i, &gv) in g.iter().enumerate() {
                    db[i % bl] += gv;
                });
            }
            Op::Sub { a, b } => {
                acc!(*a, |da: &mut [T]| for (d, &gv) in da.iter_mut().zip(g) {
                    *d += gv;
                });
                acc!(*b, |db: &mut [T]| for (d, &gv) in db.iter_mut().zip(g) {
                    *d -= gv;
                });
            }
            Op::Mul { a, b } => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                let bl = bv.len();
                acc!(*a, |da: &mut [T]| for (i, &gv) in g.iter().enumerate() {
                    da[i] += gv * bv[i % bl];
                });
                acc!(*b, |db: &mut [T]| for (i, &gv) in g.iter().enumerate() {
                    db[i % bl] += gv * av[i];
                });
            }
            Op::Affine { a, mul } => {
                let m = *mul;
                acc!(*a, |da: &mut [T]| for (d, &gv) in da.iter_mut().zip(g) {
                    *d += gv * m;
                });
            }
            Op::Matmul { a, b, trans_b } => {
                let adims = self.nodes[a.0].value.dims().to_vec();
                let bdims = self.nodes[b.0].value.dims().to_vec();
                let (m, k, n, batch, b_shared) =
                    matmul_dims("matmul-backward", &adims, &bdims, *trans_b)?;
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                let trans_b = *trans_b;
                acc!(*a, |da: &mut [T]| {
                    for bi in 0..batch {
                        let g_s = &g[bi * m * n..(bi + 1) * m * n];
                        let b_s = if b_shared { bv } else { &bv[bi * k * n..(bi + 1) * k * n] };
                        let d_s = &mut da[bi * m * k..(bi + 1) * m * k];
                        if trans_b {
                            // dA = dC · B   (B stored [n,k])
                            kernels::gemm_nn(g_s, b_s, d_s, m, n, k);
                        } else {
                            // dA = dC · Bᵀ  (B stored [k,n])
                            kernels::gemm_nt(g_s, b_s, d_s, m, n, k);
                        }
                    }
                });
                acc!(*b, |db: &mut [T]| {
                    for bi in 0..batch {
                        let g_s = &g[bi * m * n..(bi + 1) * m * n];
                        let a_s = &av[bi * m * k..(bi + 1) * m * k];
                        let d_s = if b_shared { &mut db[..] } else { &mut db[bi * k * n..(bi + 1) * k * n] };
                        if trans_b {
                            // dB = dCᵀ · A  → [n, k]
                            kernels::gemm_tn(g_s, a_s, d_s, m, n, k);
                        } else {
                            // dB = Aᵀ · dC  → [k, n]
                            kernels::gemm_tn(a_s, g_s, d_s, m, k, n);
                        }
                    }
                });
            }
            Op::Gather { a, map } => {
                acc!(*a, |da: &mut [T]| for (i, &ix) in map.iter().enumerate() {
                    if ix >= 0 {
                        da[ix as usize] += g[i];
                    }
                });
            }
            Op::Concat { a, b, axis } => {
                let da_dims = self.nodes[a.0].value.dims().to_vec();
                let db_dims = self.nodes[b.0].value.dims().to_vec();
                let outer: usize = da_dims[..*axis].iter().product();
                let block_a: usize = da_dims[*axis..].iter().product();
                let block_b: usize = db_dims[*axis..].iter().product();
                let stride = block_a + block_b;
                acc!(*a, |da: &mut [T]| for o in 0..outer {
                    for i in 0..block_a {
                        da[o * block_a + i] += g[o * stride + i];
                    }
                });
                acc!(*b, |db: &mut [T]| for o in 0..outer {
                    for i in 0..block_b {
                        db[o * block_b + i] += g[o * stride + block_a + i];
                    }
                });
            }
            Op::SoftmaxLast { a } => {
                let y = self.nodes[id].value.data();
                let d = *self.nodes[id].value.dims().last().unwrap();
                acc!(*a, |da: &mut [T]| {
                    for r in 0..y.len() / d {
                        let ys = &y[r * d..(r + 1) * d];
                        let gs = &g[r * d..(r + 1) * d];
                        let mut dot = T::zero();
                        for (&yv, &gv) in ys.iter().zip(gs) {
                            dot += yv * gv;
                        }
                        let ds = &mut da[r * d..(r + 1) * d];
                        for j in 0..d {
                            ds[j] += ys[j] * (gs[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias } => {
                let xv = self.nodes[x.0].value.data();
                let gv = self.nodes[gain.0].value.data();
                let d = *self.nodes[x.0].value.dims().last().unwrap();
                let rows = xv.len() / d;
                let eps = T::from_f64(LAYER_NORM_EPS);
                let inv_d = T::one() / T::from_f64(d as f64);
                // Recompute per-row stats; cheaper than caching them.
                let row_stats = |r: usize| {
                    let xs = &xv[r * d..(r + 1) * d];
                    let mut mean = T::zero();
                    for &v in xs {
                        mean += v;
                    }
                    mean *= inv_d;
                    let mut var = T::zero();
                    for &v in xs {
                        let c = v - mean;
                        var += c * c;
                    }
                    var *= inv_d;
                    (mean, T::one() / (var + eps).sqrt())
                };
                acc!(*x, |dx: &mut [T]| for r in 0..rows {
                    let (mean, inv) = row_stats(r);
                    let xs = &xv[r * d..(r + 1) * d];
                    let gs = &g[r * d..(r + 1) * d];
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..d {
                        let xh = (xs[j] - mean) * inv;
                        let dxh = gs[j] * gv[j];
                        m1 += dxh;
                        m2 += dxh * xh;
                    }
                    m1 *= inv_d;
                    m2 *= inv_d;
                    let ds = &mut dx[r * d..(r + 1) * d];
                    for j in 0..d {
                        let xh = (xs[j] - mean) * inv;
                        let dxh = gs[j] * gv[j];
                        ds[j] += inv * (dxh - m1 - xh * m2);
                    }
                });
                acc!(*gain, |dg: &mut [T]| for r in 0..rows {
                    let (mean, inv) = row_stats(r);
                    let xs = &xv[r * d..(r + 1) * d];
                    let gs = &g[r * d..(r + 1) * d];
                    for j in 0..d {
                        dg[j] += gs[j] * (xs[j] - mean) * inv;
                    }
                });
                acc!(*bias, |db: &mut [T]| for r in 0..rows {
                    let gs = &g[r * d..(r + 1) * d];
                    for j in 0..d {
                        db[j] += gs[j];
                    }
                });
            }
            Op::Gelu { a } => {
                let xv = self.nodes[a.0].value.data();
                acc!(*a, |da: &mut [T]| for (i, &gv) in g.iter().enumerate() {
                    da[i] += gv * gelu_bwd(xv[i]);
                });
            }
            Op::SumAll { a } => {
                let gv = g[0];
                acc!(*a, |da: &mut [T]| for d in da.iter_mut() {
                    *d += gv;
                });
            }
            Op::Mse { a, b } => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                let scale = g[0] * T::from_f64(2.0 / av.len() as f64);
                acc!(*a, |da: &mut [T]| for i in 0..av.len() {
                    da[i] += scale * (av[i] - bv[i]);
                });
                acc!(*b, |db: &mut [T]| for i in 0..av.len() {
                    db[i] -= scale * (av[i] - bv[i]);
                });
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let classes = self.nodes[logits.0].value.dims()[1];
                let rows = targets.len();
                let scale = g[0] / T::from_f64(rows as f64);
                acc!(*logits, |dl: &mut [T]| for r in 0..rows {
                    for c in 0..classes {
                        let ind = if targets[r] == c { T::one() } else { T::zero() };
                        dl[r * classes + c] += scale * (probs[r * classes + c] - ind);
                    }
                });
            }
        }
        Ok(())
    }
}

/// Validates matmul operand dims; returns `(m, k, n, batch, b_shared)`.
fn matmul_dims(
    op: &'static str,
    adims: &[usize],
    bdims: &[usize],
    trans_b: bool,
) -> Result<(usize, usize, usize, usize, bool)> {
    if adims.len() < 2 || bdims.len() < 2 {
        return Err(Error::shape(op, format!("{adims:?} × {bdims:?}")));
    }
    let (m, k) = (adims[adims.len() - 2], adims[adims.len() - 1]);
    let (bk, n) = if trans_b {
        (bdims[bdims.len() - 1], bdims[bdims.len() - 2])
    } else {
        (bdims[bdims.len() - 2], bdims[bdims.len() - 1])
    };
    if bk != k {
        return Err(Error::shape(op, format!("inner dims disagree: {adims:?} × {bdims:?}")));
    }
    let a_batch = &adims[..adims.len() - 2];
    let b_batch = &bdims[..bdims.len() - 2];
    let b_shared = b_batch.is_empty() && !a_batch.is_empty();
    if !b_shared && a_batch != b_batch {
        return Err(Error::shape(op, format!("batch prefixes disagree: {adims:?} × {bdims:?}")));
    }
    Ok((m, k, n, a_batch.iter().product::<usize>().max(1), b_shared))
}

fn gelu_fwd<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let u = c * (x + k * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_bwd<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4);
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * k * x * x)
}
