//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive appends a node holding its forward value and the
//! references needed to push an adjoint back to its inputs. Parameters enter
//! the tape as snapshots of their current value; [`Tape::backward`] adds the
//! accumulated adjoints of those snapshots into the owning [`ParamStore`].

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::kernels;
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicUsize = AtomicUsize::new(0);

/// Handle to a value recorded on a particular [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: usize,
    index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch-norm running statistics, updated by exponential moving average in
/// train mode and used verbatim in eval mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Weight kept on the old running value at each update.
    pub decay: f64,
    pub eps: f64,
}

impl RunningStats {
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            decay: Self::DEFAULT_DECAY,
            eps: Self::DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Conv1d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Tensor,
        inv_std: Vec<f64>,
        train: bool,
    },
    Relu(usize),
    Linear {
        x: usize,
        w: usize,
        b: usize,
    },
    GlobalAvgPool(usize),
    AvgPool {
        x: usize,
        size: usize,
    },
    Softmax(usize),
    LogSoftmax(usize),
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
    },
    Mse {
        a: usize,
        b: usize,
    },
    L2Normalize {
        x: usize,
        norms: Vec<f64>,
        eps: f64,
    },
    Concat {
        a: usize,
        b: usize,
        axis: usize,
    },
    Add(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    MatMulNT(usize, usize),
    Transpose(usize),
    Diag(usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Adjoints of every node reachable backwards from a scalar loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: usize,
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        assert_eq!(v.tape, self.tape, "variable from a different tape");
        self.adjoints[v.index].as_ref()
    }
}

#[derive(Debug)]
pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            op,
            format!("shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.ndim() != rank {
        return Err(Error::dim(
            op,
            format!("expected rank {}, got shape {:?}", rank, t.shape()),
        ));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable recorded on a different tape");
        v.index
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v)].value
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.val(v)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Snapshot of a parameter's current value.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// 1-D convolution with zero padding: `[N, C_in, T] * [C_out, C_in, K] -> [N, C_out, T']`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xt, wt, bt) = (self.val(x), self.val(w), self.val(b));
        expect_rank("conv1d", xt, 3)?;
        expect_rank("conv1d", wt, 3)?;
        if xt.dim(1) != wt.dim(1) {
            return Err(Error::dim(
                "conv1d",
                format!(
                    "input channels of input {:?} do not match kernel {:?}",
                    xt.shape(),
                    wt.shape()
                ),
            ));
        }
        if bt.shape() != [wt.dim(0)] {
            return Err(Error::dim(
                "conv1d",
                format!("bias {:?} for kernel {:?}", bt.shape(), wt.shape()),
            ));
        }
        if stride == 0 {
            return Err(Error::Contract("conv1d stride must be at least 1".into()));
        }
        if wt.dim(2) > xt.dim(2) + 2 * padding || wt.dim(2) == 0 {
            return Err(Error::dim(
                "conv1d",
                format!(
                    "kernel {:?} longer than padded input {:?} (padding {})",
                    wt.shape(),
                    xt.shape(),
                    padding
                ),
            ));
        }
        let y = kernels::conv1d_forward(xt, wt, bt, stride, padding);
        let (x, w, b) = (self.idx(x), self.idx(w), self.idx(b));
        Ok(self.push(
            y,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            },
        ))
    }

    /// Per-channel batch normalization over the batch and time axes of `[N, C, T]`.
    ///
    /// Train mode uses biased batch statistics and folds them into `stats`;
    /// eval mode normalizes with `stats` unchanged.
    pub fn batchnorm1d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats,
        mode: Mode,
    ) -> Result<Var> {
        let (xt, gt, bt) = (self.val(x), self.val(gamma), self.val(beta));
        expect_rank("batchnorm1d", xt, 3)?;
        let c = xt.dim(1);
        if gt.shape() != [c] || bt.shape() != [c] || stats.mean.len() != c {
            return Err(Error::dim(
                "batchnorm1d",
                format!(
                    "input {:?} with gamma {:?}, beta {:?}, {} running channels",
                    xt.shape(),
                    gt.shape(),
                    bt.shape(),
                    stats.mean.len()
                ),
            ));
        }
        let (y, xhat, inv_std, train) = match mode {
            Mode::Train => {
                let count = xt.dim(0) * xt.dim(2);
                if count < 2 {
                    return Err(Error::DegenerateBatch {
                        op: "batchnorm1d",
                        detail: format!("{} value(s) per channel for input {:?}", count, xt.shape()),
                    });
                }
                let (mean, var) = kernels::channel_stats(xt);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
                let (y, xhat) = kernels::channel_normalize(xt, &mean, &inv_std, gt, bt);
                for ch in 0..c {
                    stats.mean[ch] = stats.decay * stats.mean[ch] + (1.0 - stats.decay) * mean[ch];
                    stats.var[ch] = stats.decay * stats.var[ch] + (1.0 - stats.decay) * var[ch];
                }
                (y, xhat, inv_std, true)
            }
            Mode::Eval => {
                let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
                let (y, xhat) = kernels::channel_normalize(xt, &stats.mean, &inv_std, gt, bt);
                (y, xhat, inv_std, false)
            }
        };
        let (x, gamma, beta) = (self.idx(x), self.idx(gamma), self.idx(beta));
        Ok(self.push(
            y,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
        ))
    }

    /// Elementwise `max(0, x)`; the gradient at exactly zero is zero. NaN
    /// passes through.
    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.val(x).map(|v| if v > 0.0 || v.is_nan() { v } else { 0.0 });
        let x = self.idx(x);
        self.push(y, Op::Relu(x))
    }

    /// Affine map per row: `[N, d_in] -> [N, d_out]` with weight `[d_out, d_in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xt, wt, bt) = (self.val(x), self.val(w), self.val(b));
        expect_rank("linear", xt, 2)?;
        expect_rank("linear", wt, 2)?;
        if xt.dim(1) != wt.dim(1) || bt.shape() != [wt.dim(0)] {
            return Err(Error::dim(
                "linear",
                format!(
                    "input {:?}, weight {:?}, bias {:?}",
                    xt.shape(),
                    wt.shape(),
                    bt.shape()
                ),
            ));
        }
        let y = kernels::linear_forward(xt, wt, bt);
        let (x, w, b) = (self.idx(x), self.idx(w), self.idx(b));
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    /// Mean over the temporal axis: `[N, C, T] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xt = self.val(x);
        expect_rank("global_avg_pool", xt, 3)?;
        if xt.dim(2) == 0 {
            return Err(Error::dim("global_avg_pool", "temporal length is zero"));
        }
        let y = kernels::global_avg_pool(xt);
        let x = self.idx(x);
        Ok(self.push(y, Op::GlobalAvgPool(x)))
    }

    /// Non-overlapping temporal average pooling with window `size`.
    pub fn avg_pool1d(&mut self, x: Var, size: usize) -> Result<Var> {
        let xt = self.val(x);
        expect_rank("avg_pool1d", xt, 3)?;
        if size == 0 || xt.dim(2) < size {
            return Err(Error::dim(
                "avg_pool1d",
                format!("window {} on input {:?}", size, xt.shape()),
            ));
        }
        let y = kernels::avg_pool1d(xt, size);
        let x = self.idx(x);
        Ok(self.push(y, Op::AvgPool { x, size }))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        expect_rank("softmax", self.val(x), 2)?;
        let y = kernels::softmax_rows(self.val(x));
        let x = self.idx(x);
        Ok(self.push(y, Op::Softmax(x)))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        expect_rank("log_softmax", self.val(x), 2)?;
        let y = kernels::log_softmax_rows(self.val(x));
        let x = self.idx(x);
        Ok(self.push(y, Op::LogSoftmax(x)))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lt = self.val(logits);
        expect_rank("cross_entropy", lt, 2)?;
        let (n, c) = (lt.dim(0), lt.dim(1));
        if labels.len() != n || n == 0 {
            return Err(Error::dim(
                "cross_entropy",
                format!("{} labels for logits {:?}", labels.len(), lt.shape()),
            ));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(Error::Label {
                index,
                label,
                classes: c,
            });
        }
        let logp = kernels::log_softmax_rows(lt);
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(i, &l)| logp.at2(i, l))
            .sum::<f64>()
            / n as f64;
        let logits = self.idx(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.val(a), self.val(b));
        same_shape("mse", at, bt)?;
        if at.is_empty() {
            return Err(Error::dim("mse", "empty operands"));
        }
        let loss = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / at.len() as f64;
        let (a, b) = (self.idx(a), self.idx(b));
        Ok(self.push(Tensor::scalar(loss), Op::Mse { a, b }))
    }

    /// Divides each row of `[N, d]` by `max(||row||₂, eps)`.
    pub fn l2_normalize(&mut self, x: Var, eps: f64) -> Result<Var> {
        let xt = self.val(x);
        expect_rank("l2_normalize", xt, 2)?;
        let norms = kernels::row_norms(xt, eps);
        let d = xt.dim(1);
        let mut y = xt.clone();
        if d > 0 {
            for (row, n) in y.data_mut().chunks_mut(d).zip(&norms) {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        let x = self.idx(x);
        Ok(self.push(y, Op::L2Normalize { x, norms, eps }))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (at, bt) = (self.val(a), self.val(b));
        if at.ndim() != bt.ndim() || axis >= at.ndim() {
            return Err(Error::dim(
                "concat",
                format!("shapes {:?} and {:?} on axis {}", at.shape(), bt.shape(), axis),
            ));
        }
        for d in 0..at.ndim() {
            if d != axis && at.dim(d) != bt.dim(d) {
                return Err(Error::dim(
                    "concat",
                    format!(
                        "shapes {:?} and {:?} differ off axis {}",
                        at.shape(),
                        bt.shape(),
                        axis
                    ),
                ));
            }
        }
        let outer: usize = at.shape()[..axis].iter().product();
        let inner: usize = at.shape()[axis + 1..].iter().product();
        let (la, lb) = (at.dim(axis) * inner, bt.dim(axis) * inner);
        let mut data = Vec::with_capacity(at.len() + bt.len());
        for o in 0..outer {
            data.extend_from_slice(&at.data()[o * la..(o + 1) * la]);
            data.extend_from_slice(&bt.data()[o * lb..(o + 1) * lb]);
        }
        let mut shape = at.shape().to_vec();
        shape[axis] += bt.dim(axis);
        let y = Tensor::new(shape, data)?;
        let (a, b) = (self.idx(a), self.idx(b));
        Ok(self.push(y, Op::Concat { a, b, axis }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.val(a), self.val(b));
        same_shape("add", at, bt)?;
        let mut y = at.clone();
        y.add_assign(bt);
        let (a, b) = (self.idx(a), self.idx(b));
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let y = self.val(x).map(|v| v * factor);
        let x = self.idx(x);
        self.push(y, Op::Scale(x, factor))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.val(x).data().iter().sum();
        let x = self.idx(x);
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `a · bᵀ` for `a: [N, d]`, `b: [M, d]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.val(a), self.val(b));
        expect_rank("matmul_nt", at, 2)?;
        expect_rank("matmul_nt", bt, 2)?;
        if at.dim(1) != bt.dim(1) {
            return Err(Error::dim(
                "matmul_nt",
                format!("inner dims of {:?} and {:?} differ", at.shape(), bt.shape()),
            ));
        }
        let y = kernels::matmul_nt(at, bt);
        let (a, b) = (self.idx(a), self.idx(b));
        Ok(self.push(y, Op::MatMulNT(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        expect_rank("transpose", self.val(x), 2)?;
        let y = kernels::transpose2d(self.val(x));
        let x = self.idx(x);
        Ok(self.push(y, Op::Transpose(x)))
    }

    /// Main diagonal of a square matrix.
    pub fn diag(&mut self, x: Var) -> Result<Var> {
        let xt = self.val(x);
        expect_rank("diag", xt, 2)?;
        if xt.dim(0) != xt.dim(1) {
            return Err(Error::dim("diag", format!("non-square matrix {:?}", xt.shape())));
        }
        let n = xt.dim(0);
        let y = Tensor::from_fn(&[n], |i| xt.at2(i, i));
        let x = self.idx(x);
        Ok(self.push(y, Op::Diag(x)))
    }

    /// Reverse accumulation from a scalar `loss`, returning adjoints for
    /// every node. The tape itself is left untouched, so repeated calls agree.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(Error::Contract("loss was not recorded on this tape".into()));
        }
        let seed = &self.nodes[loss.index].value;
        if seed.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                seed.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[loss.index] = Some(Tensor::ones(seed.shape()));

        for i in (0..=loss.index).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::Conv1d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                } => {
                    let (dx, dw, db) = kernels::conv1d_backward(
                        &self.nodes[*x].value,
                        &self.nodes[*w].value,
                        &g,
                        *stride,
                        *padding,
                    );
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *w, dw);
                    accumulate(&mut adj, *b, db);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    train,
                } => {
                    let gt = &self.nodes[*gamma].value;
                    let (dx, dg, db) = if *train {
                        kernels::batchnorm_train_backward(&g, xhat, inv_std, gt)
                    } else {
                        kernels::batchnorm_eval_backward(&g, xhat, inv_std, gt)
                    };
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *gamma, dg);
                    accumulate(&mut adj, *beta, db);
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[*x].value;
                    let mut dx = g.clone();
                    dx.data_mut()
                        .iter_mut()
                        .zip(xv.data())
                        .for_each(|(d, &v)| {
                            if v <= 0.0 {
                                *d = 0.0
                            }
                        });
                    accumulate(&mut adj, *x, dx);
                }
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) =
                        kernels::linear_backward(&self.nodes[*x].value, &self.nodes[*w].value, &g);
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *w, dw);
                    accumulate(&mut adj, *b, db);
                }
                Op::GlobalAvgPool(x) => {
                    let xv = &self.nodes[*x].value;
                    let len = xv.dim(2);
                    let mut dx = Vec::with_capacity(xv.len());
                    for &gv in g.data() {
                        dx.extend(std::iter::repeat_n(gv / len as f64, len));
                    }
                    accumulate(&mut adj, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                Op::AvgPool { x, size } => {
                    let xv = &self.nodes[*x].value;
                    let len = xv.dim(2);
                    let out_len = g.dim(2);
                    let mut dx = vec![0.0; xv.len()];
                    for (r, grow) in g.data().chunks(out_len).enumerate() {
                        for (t, &gv) in grow.iter().enumerate() {
                            for k in 0..*size {
                                dx[r * len + t * size + k] = gv / *size as f64;
                            }
                        }
                    }
                    accumulate(&mut adj, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let c = y.dim(1);
                    let mut dx = vec![0.0; y.len()];
                    for r in 0..y.dim(0) {
                        let yr = &y.data()[r * c..(r + 1) * c];
                        let gr = &g.data()[r * c..(r + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            dx[r * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut adj, *x, Tensor::new(y.shape().to_vec(), dx).unwrap());
                }
                Op::LogSoftmax(x) => {
                    let y = &node.value;
                    let c = y.dim(1);
                    let mut dx = vec![0.0; y.len()];
                    for r in 0..y.dim(0) {
                        let yr = &y.data()[r * c..(r + 1) * c];
                        let gr = &g.data()[r * c..(r + 1) * c];
                        let total: f64 = gr.iter().sum();
                        for j in 0..c {
                            dx[r * c + j] = gr[j] - yr[j].exp() * total;
                        }
                    }
                    accumulate(&mut adj, *x, Tensor::new(y.shape().to_vec(), dx).unwrap());
                }
                Op::CrossEntropy { logits, labels } => {
                    let lv = &self.nodes[*logits].value;
                    let n = lv.dim(0);
                    let scale = g.item() / n as f64;
                    let mut dx = kernels::softmax_rows(lv);
                    let c = lv.dim(1);
                    for (i, &l) in labels.iter().enumerate() {
                        dx.data_mut()[i * c + l] -= 1.0;
                    }
                    dx.scale_in_place(scale);
                    accumulate(&mut adj, *logits, dx);
                }
                Op::Mse { a, b } => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let scale = 2.0 * g.item() / av.len() as f64;
                    let da = Tensor::new(
                        av.shape().to_vec(),
                        av.data()
                            .iter()
                            .zip(bv.data())
                            .map(|(x, y)| scale * (x - y))
                            .collect(),
                    )
                    .unwrap();
                    let db = da.map(|v| -v);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::L2Normalize { x, norms, eps } => {
                    let y = &node.value;
                    let d = y.dim(1);
                    let mut dx = vec![0.0; y.len()];
                    for (r, &norm) in norms.iter().enumerate() {
                        let yr = &y.data()[r * d..(r + 1) * d];
                        let gr = &g.data()[r * d..(r + 1) * d];
                        let clamped = {
                            let raw: f64 = self.nodes[*x].value.data()[r * d..(r + 1) * d]
                                .iter()
                                .map(|v| v * v)
                                .sum::<f64>()
                                .sqrt();
                            raw <= *eps
                        };
                        if clamped {
                            for j in 0..d {
                                dx[r * d + j] = gr[j] / norm;
                            }
                        } else {
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for j in 0..d {
                                dx[r * d + j] = (gr[j] - yr[j] * dot) / norm;
                            }
                        }
                    }
                    accumulate(&mut adj, *x, Tensor::new(y.shape().to_vec(), dx).unwrap());
                }
                Op::Concat { a, b, axis } => {
                    let la = self.nodes[*a].value.dim(*axis);
                    let lb = self.nodes[*b].value.dim(*axis);
                    let ga = g.narrow(*axis, 0, la).expect("concat split");
                    let gb = g.narrow(*axis, la, lb).expect("concat split");
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g.clone());
                }
                Op::Scale(x, factor) => {
                    let f = *factor;
                    accumulate(&mut adj, *x, g.map(|v| v * f));
                }
                Op::Sum(x) => {
                    let s = g.item();
                    let shape = self.nodes[*x].value.shape().to_vec();
                    accumulate(&mut adj, *x, Tensor::full(&shape, s));
                }
                Op::MatMulNT(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    // out = a bᵀ: da = g b, db = gᵀ a
                    let da = kernels::matmul_nt(&g, &kernels::transpose2d(bv));
                    let db = kernels::matmul_nt(&kernels::transpose2d(&g), &kernels::transpose2d(av));
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Transpose(x) => {
                    accumulate(&mut adj, *x, kernels::transpose2d(&g));
                }
                Op::Diag(x) => {
                    let n = g.len();
                    let mut dx = Tensor::zeros(&[n, n]);
                    for i in 0..n {
                        dx.data_mut()[i * n + i] = g.data()[i];
                    }
                    accumulate(&mut adj, *x, dx);
                }
            }
            adj[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            adjoints: adj,
        })
    }

    /// Adds `∂loss/∂θ` into the gradient of every parameter on the tape that
    /// the loss depends on. Parameters not on any path are left untouched.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = grads.adjoints[i].as_ref() {
                    store.get_mut(id).accumulate(g);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Tensor>], index: usize, delta: Tensor) {
    match &mut adj[index] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}
