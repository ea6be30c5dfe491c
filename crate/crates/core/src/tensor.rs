//! Dense `f64` tensors and a reverse-mode tape covering the reader's ops.
//!
//! Only 1-D and 2-D shapes occur. A [`Tape`] borrows the parameter tensors,
//! records each op with its output value, and [`Tape::backward`] replays the
//! adjoints in reverse order. One tape serves one sample; gradients from
//! several tapes are summed by the caller.

use std::borrow::Cow;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                op: "new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, x: f64) {
        self.data.iter_mut().for_each(|v| *v = x);
    }

    /// Entries drawn from `U[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        debug_assert!(lo < hi);
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.random_range(lo..hi)).collect(),
        }
    }

    /// A `rows x cols` matrix with orthonormal columns (or rows, when wide):
    /// the Q factor of a standard-normal draw, with R's diagonal positive.
    pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let (tall, short) = (rows.max(cols), rows.min(cols));
        // Column-major columns of a tall x short normal matrix.
        let mut cols_q: Vec<Vec<f64>> = (0..short)
            .map(|_| {
                (0..tall)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        for j in 0..short {
            // Modified Gram-Schmidt, applied twice for stability.
            for _ in 0..2 {
                for k in 0..j {
                    let (done, rest) = cols_q.split_at_mut(j);
                    let q = &done[k];
                    let v = &mut rest[0];
                    let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(q).for_each(|(x, qk)| *x -= proj * qk);
                }
            }
            let norm = cols_q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            cols_q[j].iter_mut().for_each(|x| *x /= norm);
        }
        let mut data = vec![0.0; rows * cols];
        for (j, col) in cols_q.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                if rows >= cols {
                    data[i * cols + j] = x;
                } else {
                    data[j * cols + i] = x;
                }
            }
        }
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: vec![c, r],
            data,
        }
    }
}

fn check_finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::Shape {
            op,
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(())
}

/// `[m,k] x [k,n] -> [m,n]` or `[m,k] x [k] -> [m]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mismatch = || Error::Shape {
        op: "matmul",
        left: a.shape.clone(),
        right: b.shape.clone(),
    };
    if a.shape.len() != 2 || b.shape.is_empty() || b.shape.len() > 2 {
        return Err(mismatch());
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    if b.shape[0] != k {
        return Err(mismatch());
    }
    let n = b.cols();
    let mut out = vec![0.0; m * n];
    if n == 1 {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &a.data[i * k..(i + 1) * k];
            *o = row.iter().zip(&b.data).map(|(x, y)| x * y).sum();
        }
    } else {
        for i in 0..m {
            for p in 0..k {
                let aip = a.data[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &b.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                orow.iter_mut().zip(brow).for_each(|(o, x)| *o += aip * x);
            }
        }
    }
    let shape = if b.shape.len() == 1 {
        vec![m]
    } else {
        vec![m, n]
    };
    check_finite("matmul", Tensor { shape, data: out })
}

fn zip_with(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    same_shape(op, a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    check_finite(
        op,
        Tensor {
            shape: a.shape.clone(),
            data,
        },
    )
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn elementwise_mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("mul", a, b, |x, y| x * y)
}

fn map(op: &'static str, a: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    check_finite(
        op,
        Tensor {
            shape: a.shape.clone(),
            data: a.data.iter().map(|&x| f(x)).collect(),
        },
    )
}

pub fn tanh(a: &Tensor) -> Result<Tensor> {
    map("tanh", a, f64::tanh)
}

pub fn sigmoid(a: &Tensor) -> Result<Tensor> {
    map("sigmoid", a, |x| {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    })
}

/// Softmax of a vector, shifted by its maximum before exponentiation.
pub fn softmax(a: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 1 || a.is_empty() {
        return Err(Error::Shape {
            op: "softmax",
            left: a.shape.clone(),
            right: vec![],
        });
    }
    let max = a.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = a.data.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    check_finite(
        "softmax",
        Tensor::vector(exps.into_iter().map(|e| e / z).collect()),
    )
}

/// Concatenates vectors.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    let mut data = Vec::new();
    for p in parts {
        if p.shape.len() != 1 {
            return Err(Error::Shape {
                op: "concat",
                left: p.shape.clone(),
                right: vec![],
            });
        }
        data.extend_from_slice(&p.data);
    }
    Ok(Tensor::vector(data))
}

/// Stacks equal-length vectors as the rows of a matrix.
pub fn stack(rows: &[&Tensor]) -> Result<Tensor> {
    let n = rows.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(rows.len() * n);
    for r in rows {
        if r.shape != [n] {
            return Err(Error::Shape {
                op: "stack",
                left: vec![n],
                right: r.shape.clone(),
            });
        }
        data.extend_from_slice(&r.data);
    }
    Tensor::new(vec![rows.len(), n], data)
}

/// Mean over axis 0 of a matrix.
pub fn mean_over_axis(a: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || a.shape[0] == 0 {
        return Err(Error::Shape {
            op: "mean",
            left: a.shape.clone(),
            right: vec![],
        });
    }
    let (r, c) = (a.shape[0], a.shape[1]);
    let mut out = vec![0.0; c];
    for i in 0..r {
        out.iter_mut().zip(a.row(i)).for_each(|(o, x)| *o += x);
    }
    out.iter_mut().for_each(|o| *o /= r as f64);
    Ok(Tensor::vector(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    Concat(Vec<NodeId>),
    Stack(Vec<NodeId>),
    MeanRows(NodeId),
    Transpose(NodeId),
    Row { table: NodeId, index: usize },
    Nll { probs: NodeId, target: usize },
    Sum(NodeId),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
}

/// Record of one forward pass.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    n_params: usize,
}

impl<'a> Tape<'a> {
    /// A tape whose first nodes are the given parameters, in order.
    pub fn new<I>(params: I) -> Self
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let nodes: Vec<Node<'a>> = params
            .into_iter()
            .map(|t| Node {
                value: Cow::Borrowed(t),
                op: Op::Leaf,
            })
            .collect();
        let n_params = nodes.len();
        Tape { nodes, n_params }
    }

    pub fn param(&self, index: usize) -> NodeId {
        assert!(index < self.n_params, "parameter {index} not on tape");
        NodeId(index)
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == self.n_params
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = add(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = sub(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = elementwise_mul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tanh(self.value(a))?;
        Ok(self.push(v, Op::Tanh(a)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = sigmoid(self.value(a))?;
        Ok(self.push(v, Op::Sigmoid(a)))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = softmax(self.value(a))?;
        Ok(self.push(v, Op::Softmax(a)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let v = concat(&parts.iter().map(|&p| self.value(p)).collect::<Vec<_>>())?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let v = stack(&rows.iter().map(|&p| self.value(p)).collect::<Vec<_>>())?;
        Ok(self.push(v, Op::Stack(rows.to_vec())))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = mean_over_axis(self.value(a))?;
        Ok(self.push(v, Op::MeanRows(a)))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        if t.shape.len() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                left: t.shape.clone(),
                right: vec![],
            });
        }
        let v = t.transpose();
        Ok(self.push(v, Op::Transpose(a)))
    }

    /// Row `index` of a matrix, as a vector (embedding lookup).
    pub fn row(&mut self, table: NodeId, index: usize) -> Result<NodeId> {
        let t = self.value(table);
        if t.shape.len() != 2 || index >= t.shape[0] {
            return Err(Error::Shape {
                op: "row",
                left: t.shape.clone(),
                right: vec![index],
            });
        }
        let v = Tensor::vector(t.row(index).to_vec());
        Ok(self.push(v, Op::Row { table, index }))
    }

    /// `-ln probs[target]`.
    pub fn nll(&mut self, probs: NodeId, target: usize) -> Result<NodeId> {
        let p = self.value(probs);
        if p.shape.len() != 1 || target >= p.len() {
            return Err(Error::Shape {
                op: "nll",
                left: p.shape.clone(),
                right: vec![target],
            });
        }
        let v = check_finite("nll", Tensor::scalar(-p.data[target].ln()))?;
        Ok(self.push(v, Op::Nll { probs, target }))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).data.iter().sum());
        Ok(self.push(v, Op::Sum(a)))
    }

    /// Gradients of the scalar `loss` with respect to every parameter, in
    /// parameter order. Unused parameters get all-zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Tensor>> {
        if self.is_empty() || loss.0 < self.n_params || loss.0 >= self.nodes.len() {
            return Err(Error::NoForward);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                left: self.value(loss).shape.clone(),
                right: vec![1],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (self.n_params..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let y = &self.nodes[i].value.data;
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.shape[0], av.shape[1], bv.cols());
                    self.accumulate(&mut grads, *a, |ga| {
                        for r in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[r * n + j] * bv.data[p * n + j];
                                }
                                ga[r * k + p] += s;
                            }
                        }
                    });
                    self.accumulate(&mut grads, *b, |gb| {
                        for r in 0..m {
                            for p in 0..k {
                                let arp = av.data[r * k + p];
                                for j in 0..n {
                                    gb[p * n + j] += arp * g[r * n + j];
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, |ga| add_into(ga, &g));
                    self.accumulate(&mut grads, *b, |gb| add_into(gb, &g));
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, |ga| add_into(ga, &g));
                    self.accumulate(&mut grads, *b, |gb| {
                        gb.iter_mut().zip(&g).for_each(|(x, d)| *x -= d)
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                    self.accumulate(&mut grads, *a, |ga| {
                        for j in 0..ga.len() {
                            ga[j] += g[j] * bv[j];
                        }
                    });
                    self.accumulate(&mut grads, *b, |gb| {
                        for j in 0..gb.len() {
                            gb[j] += g[j] * av[j];
                        }
                    });
                }
                Op::Tanh(a) => self.accumulate(&mut grads, *a, |ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * (1.0 - y[j] * y[j]);
                    }
                }),
                Op::Sigmoid(a) => self.accumulate(&mut grads, *a, |ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                }),
                Op::Softmax(a) => {
                    let dot: f64 = g.iter().zip(y).map(|(d, p)| d * p).sum();
                    self.accumulate(&mut grads, *a, |ga| {
                        for j in 0..ga.len() {
                            ga[j] += y[j] * (g[j] - dot);
                        }
                    })
                }
                Op::Concat(parts) | Op::Stack(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        self.accumulate(&mut grads, *p, |gp| add_into(gp, &g[offset..offset + n]));
                        offset += n;
                    }
                }
                Op::MeanRows(a) => {
                    let rows = self.value(*a).shape[0];
                    let c = g.len();
                    self.accumulate(&mut grads, *a, |ga| {
                        for r in 0..rows {
                            for j in 0..c {
                                ga[r * c + j] += g[j] / rows as f64;
                            }
                        }
                    })
                }
                Op::Transpose(a) => {
                    let (r, c) = (self.value(*a).shape[0], self.value(*a).shape[1]);
                    self.accumulate(&mut grads, *a, |ga| {
                        for i in 0..r {
                            for j in 0..c {
                                ga[i * c + j] += g[j * r + i];
                            }
                        }
                    })
                }
                Op::Row { table, index } => {
                    let c = self.value(*table).cols();
                    self.accumulate(&mut grads, *table, |gt| {
                        add_into(&mut gt[index * c..(index + 1) * c], &g)
                    })
                }
                Op::Nll { probs, target } => {
                    let p = self.value(*probs).data[*target];
                    self.accumulate(&mut grads, *probs, |gp| gp[*target] -= g[0] / p)
                }
                Op::Sum(a) => {
                    self.accumulate(&mut grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0]))
                }
            }
        }

        let out: Vec<Tensor> = (0..self.n_params)
            .map(|i| {
                let shape = self.nodes[i].value.shape.clone();
                match grads.get_mut(i).and_then(Option::take) {
                    Some(data) => Tensor { shape, data },
                    None => Tensor::zeros(&shape),
                }
            })
            .collect();
        for g in &out {
            if !g.is_finite() {
                return Err(Error::NonFinite("backward"));
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], id: NodeId, f: impl FnOnce(&mut [f64])) {
        let slot = &mut grads[id.0];
        let buf = slot.get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.len()]);
        f(buf);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
