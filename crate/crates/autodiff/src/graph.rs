//! Reverse-mode tape over immutable tensors.
//!
//! Operations execute eagerly and append a node to the tape; node creation
//! order is a topological order, so `backward` is a single reverse sweep
//! that visits each node exactly once and accumulates gradients additively
//! across fan-out. Every op validates shapes and panics on non-finite
//! outputs; that panic is the engine's hard-error channel and callers that
//! need recoverable behavior catch it at a step boundary.

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Matmul,
    Add,
    AddBias,
    Sub,
    Mul,
    Affine { a: f64 },
    ClampMin { floor: f64 },
    Concat { cols: Vec<usize> },
    SliceCols { start: usize, input_cols: usize },
    SumAll { input_len: usize },
    MeanAll { input_len: usize },
    Tanh,
    Sigmoid,
    Elu,
    Softplus,
    Ln,
    LogSoftmax,
    GaussianLogProb,
    DiagGaussianKl,
    StopGrad,
}

struct Node {
    value: Tensor,
    parents: Vec<NodeId>,
    op: Op,
}

/// Gradients of one scalar with respect to every tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of a node, materializing zeros for off-path nodes.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

/// The computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, parents: Vec<NodeId>, op: Op) -> NodeId {
        self.nodes.push(Node { value, parents, op });
        NodeId(self.nodes.len() - 1)
    }

    /// A trainable or data input; gradients flow into it like any node.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, vec![], Op::Input)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rank(), 2, "matmul lhs must be rank 2");
        assert_eq!(tb.rank(), 2, "matmul rhs must be rank 2");
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = ta.data()[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &tb.data()[kk * n..][..n];
                let orow = &mut out[i * n..][..n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let t = Tensor::checked(vec![m, n], out, "matmul");
        self.push(t, vec![a, b], Op::Matmul)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
            let t = Tensor::checked(ta.shape().to_vec(), data, "add");
            return self.push(t, vec![a, b], Op::Add);
        }
        // leading-batch broadcast: [m, n] + [n]
        assert!(
            ta.rank() == 2 && tb.rank() == 1 && ta.cols() == tb.cols(),
            "add shapes {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let (m, n) = (ta.rows(), ta.cols());
        let mut data = ta.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += tb.data()[j];
            }
        }
        let t = Tensor::checked(vec![m, n], data, "add (bias)");
        self.push(t, vec![a, b], Op::AddBias)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "sub shapes");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let t = Tensor::checked(ta.shape().to_vec(), data, "sub");
        self.push(t, vec![a, b], Op::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shapes");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::checked(ta.shape().to_vec(), data, "mul");
        self.push(t, vec![a, b], Op::Mul)
    }

    /// Elementwise `a * x + b` with scalar constants.
    pub fn affine(&mut self, x: NodeId, a: f64, b: f64) -> NodeId {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| a * v + b).collect();
        let t = Tensor::checked(tx.shape().to_vec(), data, "affine");
        self.push(t, vec![x], Op::Affine { a })
    }

    /// Elementwise `max(x, floor)`; the gradient passes where `x >= floor`.
    pub fn clamp_min(&mut self, x: NodeId, floor: f64) -> NodeId {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v.max(floor)).collect();
        let t = Tensor::checked(tx.shape().to_vec(), data, "clamp_min");
        self.push(t, vec![x], Op::ClampMin { floor })
    }

    /// Concatenate along the last axis; all inputs share the leading shape.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rank = self.value(parts[0]).rank();
        let rows = self.value(parts[0]).rows();
        let cols: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = cols.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rank(), rank, "concat mixes ranks");
                assert_eq!(t.rows(), rows, "concat row mismatch");
                data.extend_from_slice(t.row(i));
            }
        }
        let shape = if rank == 2 { vec![rows, total] } else { vec![total] };
        let t = Tensor::checked(shape, data, "concat");
        self.push(t, parts.to_vec(), Op::Concat { cols })
    }

    /// Columns `[start, start + len)` of the last axis.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        assert!(start + len <= cols, "slice out of range");
        let mut data = Vec::with_capacity(rows * len);
        for i in 0..rows {
            data.extend_from_slice(&tx.row(i)[start..start + len]);
        }
        let shape = if tx.rank() == 2 { vec![rows, len] } else { vec![len] };
        let t = Tensor::checked(shape, data, "slice_cols");
        self.push(
            t,
            vec![x],
            Op::SliceCols {
                start,
                input_cols: cols,
            },
        )
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let s: f64 = tx.data().iter().sum();
        let n = tx.len();
        let t = Tensor::checked(vec![1], vec![s], "sum");
        self.push(t, vec![x], Op::SumAll { input_len: n })
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let n = tx.len();
        let s: f64 = tx.data().iter().sum::<f64>() / n as f64;
        let t = Tensor::checked(vec![1], vec![s], "mean");
        self.push(t, vec![x], Op::MeanAll { input_len: n })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Tanh, |v| v.tanh(), "tanh")
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Sigmoid, sigmoid, "sigmoid")
    }

    pub fn elu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Elu, |v| if v > 0.0 { v } else { v.exp() - 1.0 }, "elu")
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Softplus, softplus, "softplus")
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Ln, |v| v.ln(), "ln")
    }

    fn unary(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64, ctx: &str) -> NodeId {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::checked(tx.shape().to_vec(), data, ctx);
        self.push(t, vec![x], op)
    }

    /// Row-wise log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = tx.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|&v| v - lse));
        }
        let t = Tensor::checked(tx.shape().to_vec(), data, "log_softmax");
        self.push(t, vec![x], Op::LogSoftmax)
    }

    /// Row-sum of diagonal Gaussian log densities: output has one entry per row.
    pub fn gaussian_log_prob(&mut self, x: NodeId, mean: NodeId, std: NodeId) -> NodeId {
        let (tx, tm, ts) = (self.value(x), self.value(mean), self.value(std));
        assert_eq!(tx.shape(), tm.shape(), "gaussian_log_prob shapes");
        assert_eq!(tx.shape(), ts.shape(), "gaussian_log_prob shapes");
        assert!(
            ts.data().iter().all(|&s| s > 0.0),
            "gaussian_log_prob: non-positive std"
        );
        let (rows, cols) = (tx.rows(), tx.cols());
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
        let mut out = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut acc = 0.0;
            for j in 0..cols {
                let (v, mu, sd) = (
                    tx.data()[i * cols + j],
                    tm.data()[i * cols + j],
                    ts.data()[i * cols + j],
                );
                let z = (v - mu) / sd;
                acc += -HALF_LN_2PI - sd.ln() - 0.5 * z * z;
            }
            out.push(acc);
        }
        let t = Tensor::checked(vec![rows], out, "gaussian_log_prob");
        self.push(t, vec![x, mean, std], Op::GaussianLogProb)
    }

    /// Row-sum KL between diagonal Gaussians:
    /// `sum_j [ln(s2/s1) + (s1^2 + (m1-m2)^2) / (2 s2^2) - 1/2]`.
    pub fn diag_gaussian_kl(
        &mut self,
        mean1: NodeId,
        std1: NodeId,
        mean2: NodeId,
        std2: NodeId,
    ) -> NodeId {
        let shape = self.value(mean1).shape().to_vec();
        for &id in &[std1, mean2, std2] {
            assert_eq!(self.value(id).shape(), &shape[..], "diag_gaussian_kl shapes");
        }
        for &id in &[std1, std2] {
            assert!(
                self.value(id).data().iter().all(|&s| s > 0.0),
                "diag_gaussian_kl: non-positive std"
            );
        }
        let (tm1, ts1, tm2, ts2) = (
            self.value(mean1),
            self.value(std1),
            self.value(mean2),
            self.value(std2),
        );
        let (rows, cols) = (tm1.rows(), tm1.cols());
        let mut out = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut acc = 0.0;
            for j in 0..cols {
                let (m1, s1, m2, s2) = (
                    tm1.data()[i * cols + j],
                    ts1.data()[i * cols + j],
                    tm2.data()[i * cols + j],
                    ts2.data()[i * cols + j],
                );
                let d = m1 - m2;
                acc += (s2 / s1).ln() + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5;
            }
            out.push(acc);
        }
        let t = Tensor::checked(vec![rows], out, "diag_gaussian_kl");
        self.push(t, vec![mean1, std1, mean2, std2], Op::DiagGaussianKl)
    }

    /// `mean + std * noise` with externally supplied noise.
    pub fn reparam_sample(&mut self, mean: NodeId, std: NodeId, noise: NodeId) -> NodeId {
        assert!(
            self.value(std).data().iter().all(|&s| s > 0.0),
            "reparam_sample: non-positive std"
        );
        let scaled = self.mul(std, noise);
        self.add(mean, scaled)
    }

    /// Identity with blocked gradient.
    pub fn stop_grad(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x).clone();
        self.push(t, vec![x], Op::StopGrad)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(
            self.value(loss).len(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, shape: &[usize], add: &[f64]) {
        let slot = &mut grads[id.0];
        match slot {
            Some(t) => {
                for (a, b) in t.data_mut().iter_mut().zip(add) {
                    *a += b;
                }
                if let Some(bad) = t.data().iter().find(|x| !x.is_finite()) {
                    panic!("gradient accumulation: non-finite value {bad}");
                }
            }
            None => {
                *slot = Some(Tensor::checked(shape.to_vec(), add.to_vec(), "gradient"));
            }
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut Vec<Option<Tensor>>) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let parent = |i: usize| node.parents[i];
        let pval = |i: usize| self.value(node.parents[i]);
        match &node.op {
            Op::Input => {}
            Op::StopGrad => {}
            Op::Matmul => {
                let (a, b) = (pval(0), pval(1));
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                // dA = g . B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g.data()[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for kk in 0..k {
                            da[i * k + kk] += gij * b.data()[kk * n + j];
                        }
                    }
                }
                Self::accumulate(grads, parent(0), a.shape(), &da);
                // dB = A^T . g
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for kk in 0..k {
                        let aik = a.data()[i * k + kk];
                        if aik == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[kk * n + j] += aik * g.data()[i * n + j];
                        }
                    }
                }
                Self::accumulate(grads, parent(1), b.shape(), &db);
            }
            Op::Add => {
                Self::accumulate(grads, parent(0), pval(0).shape(), g.data());
                Self::accumulate(grads, parent(1), pval(1).shape(), g.data());
            }
            Op::AddBias => {
                Self::accumulate(grads, parent(0), pval(0).shape(), g.data());
                let (m, n) = (pval(0).rows(), pval(0).cols());
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        db[j] += g.data()[i * n + j];
                    }
                }
                Self::accumulate(grads, parent(1), pval(1).shape(), &db);
            }
            Op::Sub => {
                Self::accumulate(grads, parent(0), pval(0).shape(), g.data());
                let neg: Vec<f64> = g.data().iter().map(|x| -x).collect();
                Self::accumulate(grads, parent(1), pval(1).shape(), &neg);
            }
            Op::Mul => {
                let da: Vec<f64> = g.data().iter().zip(pval(1).data()).map(|(x, y)| x * y).collect();
                Self::accumulate(grads, parent(0), pval(0).shape(), &da);
                let db: Vec<f64> = g.data().iter().zip(pval(0).data()).map(|(x, y)| x * y).collect();
                Self::accumulate(grads, parent(1), pval(1).shape(), &db);
            }
            Op::Affine { a, .. } => {
                let dx: Vec<f64> = g.data().iter().map(|x| a * x).collect();
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::ClampMin { floor } => {
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(pval(0).data())
                    .map(|(gv, &xv)| if xv >= *floor { *gv } else { 0.0 })
                    .collect();
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::Concat { cols } => {
                let rows = out.rows();
                let total = out.cols();
                let mut start = 0;
                for (pi, &w) in cols.iter().enumerate() {
                    let mut dp = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        dp.extend_from_slice(&g.data()[i * total + start..][..w]);
                    }
                    Self::accumulate(grads, parent(pi), pval(pi).shape(), &dp);
                    start += w;
                }
            }
            Op::SliceCols { start, input_cols } => {
                let rows = out.rows();
                let len = out.cols();
                let mut dx = vec![0.0; rows * input_cols];
                for i in 0..rows {
                    dx[i * input_cols + start..][..len].copy_from_slice(&g.data()[i * len..][..len]);
                }
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::SumAll { input_len } => {
                let dx = vec![g.item(); *input_len];
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::MeanAll { input_len } => {
                let dx = vec![g.item() / *input_len as f64; *input_len];
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::Tanh => {
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * (1.0 - y * y))
                    .collect();
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::Sigmoid => {
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * y * (1.0 - y))
                    .collect();
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::Elu => {
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(pval(0).data().iter().zip(out.data()))
                    .map(|(gv, (&x, &y))| if x > 0.0 { *gv } else { gv * (y + 1.0) })
                    .collect();
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::Softplus => {
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(pval(0).data())
                    .map(|(gv, &x)| gv * sigmoid(x))
                    .collect();
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::Ln => {
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(pval(0).data())
                    .map(|(gv, &x)| gv / x)
                    .collect();
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::LogSoftmax => {
                let (rows, cols) = (out.rows(), out.cols());
                let mut dx = vec![0.0; rows * cols];
                for i in 0..rows {
                    let gsum: f64 = g.data()[i * cols..][..cols].iter().sum();
                    for j in 0..cols {
                        let soft = out.data()[i * cols + j].exp();
                        dx[i * cols + j] = g.data()[i * cols + j] - soft * gsum;
                    }
                }
                Self::accumulate(grads, parent(0), pval(0).shape(), &dx);
            }
            Op::GaussianLogProb => {
                let (x, mean, std) = (pval(0), pval(1), pval(2));
                let (rows, cols) = (x.rows(), x.cols());
                let mut dx = vec![0.0; rows * cols];
                let mut dm = vec![0.0; rows * cols];
                let mut ds = vec![0.0; rows * cols];
                for i in 0..rows {
                    let gi = g.data()[i];
                    for j in 0..cols {
                        let idx = i * cols + j;
                        let (v, mu, sd) = (x.data()[idx], mean.data()[idx], std.data()[idx]);
                        let diff = v - mu;
                        dm[idx] = gi * diff / (sd * sd);
                        dx[idx] = -dm[idx];
                        ds[idx] = gi * (diff * diff / (sd * sd * sd) - 1.0 / sd);
                    }
                }
                Self::accumulate(grads, parent(0), x.shape(), &dx);
                Self::accumulate(grads, parent(1), mean.shape(), &dm);
                Self::accumulate(grads, parent(2), std.shape(), &ds);
            }
            Op::DiagGaussianKl => {
                let (m1, s1, m2, s2) = (pval(0), pval(1), pval(2), pval(3));
                let (rows, cols) = (m1.rows(), m1.cols());
                let mut dm1 = vec![0.0; rows * cols];
                let mut ds1 = vec![0.0; rows * cols];
                let mut dm2 = vec![0.0; rows * cols];
                let mut ds2 = vec![0.0; rows * cols];
                for i in 0..rows {
                    let gi = g.data()[i];
                    for j in 0..cols {
                        let idx = i * cols + j;
                        let (a, b, c, d) = (
                            m1.data()[idx],
                            s1.data()[idx],
                            m2.data()[idx],
                            s2.data()[idx],
                        );
                        let diff = a - c;
                        dm1[idx] = gi * diff / (d * d);
                        dm2[idx] = -dm1[idx];
                        ds1[idx] = gi * (b / (d * d) - 1.0 / b);
                        ds2[idx] = gi * (1.0 / d - (b * b + diff * diff) / (d * d * d));
                    }
                }
                Self::accumulate(grads, parent(0), m1.shape(), &dm1);
                Self::accumulate(grads, parent(1), s1.shape(), &ds1);
                Self::accumulate(grads, parent(2), m2.shape(), &dm2);
                Self::accumulate(grads, parent(3), s2.shape(), &ds2);
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
