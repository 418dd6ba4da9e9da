//! Reverse-mode differentiation over a linear record of executed ops.
//!
//! A [`Tape`] borrows a [`ParamStore`] for reading; parameter values are never
//! copied onto the tape. [`Tape::backward`] walks the record in exact reverse
//! order and returns [`Gradients`], which the caller folds into the store with
//! [`ParamStore::accumulate`] once the tape is dropped.

use std::collections::HashMap;

use super::tensor::{self, Tensor};
use super::{NumericsError, ParamId, ParamStore};

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Gather {
        table: ParamId,
        rows: Vec<usize>,
    },
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        src: Var,
        axis: usize,
        start: usize,
    },
    LpNormalize {
        src: Var,
        p: f64,
        eps: f64,
        norms: Vec<f64>,
    },
    SoftmaxCe {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor,
    },
    Sum(Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

/// Gradient contributions produced by one backward pass.
#[derive(Debug, Default)]
pub struct Gradients {
    pub(crate) dense: Vec<(ParamId, Tensor)>,
    /// Sparse row contributions from embedding lookups: `(table, row, values)`.
    pub(crate) rows: Vec<(ParamId, usize, Vec<f64>)>,
}

impl Gradients {
    /// Materializes the gradient of every parameter in `store` as a dense tensor.
    pub fn to_dense(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store.ids().map(|id| Tensor::zeros(store.value(id).shape())).collect();
        for (id, g) in &self.dense {
            out[id.index()].add_assign(g);
        }
        for (id, row, values) in &self.rows {
            let t = &mut out[id.index()];
            let cols = t.cols();
            for (dst, v) in t.data_mut()[row * cols..(row + 1) * cols].iter_mut().zip(values) {
                *dst += v;
            }
        }
        out
    }
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without a value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Reads a parameter. Repeated reads share one node, so gradients from
    /// every use accumulate there.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    /// Embedding lookup: stacks `rows` of the table into an `n × d` matrix.
    /// The backward pass touches only the looked-up rows.
    pub fn gather(&mut self, table: ParamId, rows: &[usize]) -> Result<Var, NumericsError> {
        let t = self.store.value(table);
        let (r, c) = t.dims2()?;
        if rows.is_empty() {
            return Err(NumericsError::InvalidShape(vec![0, c]));
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(NumericsError::IndexOutOfRange { index: i, len: r });
            }
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::matrix(rows.len(), c, data)?;
        Ok(self.push(
            value,
            Op::Gather {
                table,
                rows: rows.to_vec(),
            },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = tensor::matmul_nt(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMulNt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let out = tensor::add_row(self.value(a), self.value(row))?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = tensor::hadamard(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let out = tensor::mul_row(self.value(a), self.value(row))?;
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x * c).ensure_finite("scale")?;
        Ok(self.push(out, Op::Scale(a, c)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = tensor::sigmoid(self.value(a));
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = tensor::tanh(self.value(a));
        self.push(out, Op::Tanh(a))
    }

    /// Concatenates rank-2 values along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NumericsError> {
        if parts.is_empty() || axis > 1 {
            return Err(NumericsError::InvalidShape(vec![parts.len(), axis]));
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.value(p).dims2()).collect::<Result<_, _>>()?;
        let (r0, c0) = dims[0];
        let out = if axis == 0 {
            if dims.iter().any(|&(_, c)| c != c0) {
                return Err(self.concat_mismatch(parts));
            }
            let rows = dims.iter().map(|d| d.0).sum();
            let data = parts
                .iter()
                .flat_map(|&p| self.value(p).data().iter().copied())
                .collect();
            Tensor::matrix(rows, c0, data)?
        } else {
            if dims.iter().any(|&(r, _)| r != r0) {
                return Err(self.concat_mismatch(parts));
            }
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row(i));
                }
            }
            Tensor::matrix(r0, cols, data)?
        };
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    fn concat_mismatch(&self, parts: &[Var]) -> NumericsError {
        NumericsError::ShapeMismatch {
            op: "concat",
            left: self.value(parts[0]).shape().to_vec(),
            right: parts
                .iter()
                .map(|&p| self.value(p).shape().to_vec())
                .find(|s| s != self.value(parts[0]).shape())
                .unwrap_or_default(),
        }
    }

    /// Takes `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var, NumericsError> {
        let v = self.value(src);
        let (r, c) = v.dims2()?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || len == 0 || start + len > extent {
            return Err(NumericsError::IndexOutOfRange {
                index: start + len,
                len: extent,
            });
        }
        let out = if axis == 0 {
            Tensor::matrix(len, c, v.data()[start * c..(start + len) * c].to_vec())?
        } else {
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&v.row(i)[start..start + len]);
            }
            Tensor::matrix(r, len, data)?
        };
        Ok(self.push(out, Op::Slice { src, axis, start }))
    }

    /// Divides every row by `max(‖row‖p, eps)`.
    pub fn lp_normalize_rows(&mut self, src: Var, p: f64, eps: f64) -> Result<Var, NumericsError> {
        let v = self.value(src);
        let (r, c) = v.dims2()?;
        let mut data = Vec::with_capacity(r * c);
        let mut norms = Vec::with_capacity(r);
        for i in 0..r {
            let row = v.row(i);
            norms.push(tensor::lp_norm(row, p));
            data.extend(tensor::lp_normalize(row, p, eps)?);
        }
        let out = Tensor::new(v.shape().to_vec(), data)?;
        Ok(self.push(out, Op::LpNormalize { src, p, eps, norms }))
    }

    /// Summed softmax cross-entropy over the rows of `logits`, one target per
    /// row. Produces a `1 × 1` value.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NumericsError> {
        let v = self.value(logits);
        let (r, c) = v.dims2()?;
        if targets.len() != r {
            return Err(NumericsError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: v.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(r * c);
        for (i, &t) in targets.iter().enumerate() {
            loss += tensor::softmax_cross_entropy(v.row(i), t)?;
            probs.extend(tensor::softmax(v.row(i)));
        }
        let probs = Tensor::new(v.shape().to_vec(), probs)?;
        Ok(self.push(
            Tensor::scalar(loss).ensure_finite("softmax_cross_entropy")?,
            Op::SoftmaxCe {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let s = Tensor::scalar(self.value(a).sum()).ensure_finite("sum")?;
        Ok(self.push(s, Op::Sum(a)))
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        self.backward_scaled(loss, 1.0)
    }

    /// Backpropagates from a single-element `loss`, seeding its gradient with
    /// `seed` (used to average a summed loss over a batch).
    pub fn backward_scaled(&self, loss: Var, seed: f64) -> Result<Gradients, NumericsError> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![seed])?);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(id) => out.dense.push((*id, g)),
                Op::Gather { table, rows } => {
                    for (k, &row) in rows.iter().enumerate() {
                        out.rows.push((*table, row, g.row(k).to_vec()));
                    }
                }
                Op::MatMul(a, b) => {
                    let da = tensor::matmul_nt(&g, self.value(*b))?;
                    let db = tensor::matmul_tn(self.value(*a), &g)?;
                    accumulate(&mut grads, *a, da, self.value(*a));
                    accumulate(&mut grads, *b, db, self.value(*b));
                }
                Op::MatMulNt(a, b) => {
                    // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A
                    let da = tensor::matmul(&g, self.value(*b))?;
                    let db = tensor::matmul_tn(&g, self.value(*a))?;
                    accumulate(&mut grads, *a, da, self.value(*a));
                    accumulate(&mut grads, *b, db, self.value(*b));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone(), self.value(*a));
                    accumulate(&mut grads, *b, g, self.value(*b));
                }
                Op::AddRow(a, row) => {
                    let c = g.cols();
                    let mut drow = vec![0.0; c];
                    for chunk in g.data().chunks(c) {
                        drow.iter_mut().zip(chunk).for_each(|(d, x)| *d += x);
                    }
                    accumulate(&mut grads, *a, g, self.value(*a));
                    let drow = Tensor::new(self.value(*row).shape().to_vec(), drow)?;
                    accumulate(&mut grads, *row, drow, self.value(*row));
                }
                Op::Mul(a, b) => {
                    let da = tensor::hadamard(&g, self.value(*b))?;
                    let db = tensor::hadamard(&g, self.value(*a))?;
                    accumulate(&mut grads, *a, da, self.value(*a));
                    accumulate(&mut grads, *b, db, self.value(*b));
                }
                Op::MulRow(a, row) => {
                    let av = self.value(*a);
                    let rv = self.value(*row);
                    let c = g.cols();
                    let da = tensor::mul_row(&g, rv)?;
                    let mut drow = vec![0.0; c];
                    for (gc, ac) in g.data().chunks(c).zip(av.data().chunks(c)) {
                        for ((d, x), y) in drow.iter_mut().zip(gc).zip(ac) {
                            *d += x * y;
                        }
                    }
                    let drow = Tensor::new(rv.shape().to_vec(), drow)?;
                    accumulate(&mut grads, *a, da, av);
                    accumulate(&mut grads, *row, drow, rv);
                }
                Op::Scale(a, c) => {
                    let da = g.map(|x| x * c);
                    accumulate(&mut grads, *a, da, self.value(*a));
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let da = zip_map(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    accumulate(&mut grads, *a, da, self.value(*a));
                }
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let da = zip_map(&g, y, |gv, yv| gv * (1.0 - yv * yv));
                    accumulate(&mut grads, *a, da, self.value(*a));
                }
                Op::Concat { parts, axis } => {
                    let mut offset = 0;
                    for &p in parts {
                        let (pr, pc) = self.value(p).dims2()?;
                        let piece = if *axis == 0 {
                            let c = g.cols();
                            Tensor::matrix(pr, pc, g.data()[offset * c..(offset + pr) * c].to_vec())?
                        } else {
                            let mut data = Vec::with_capacity(pr * pc);
                            for r in 0..pr {
                                data.extend_from_slice(&g.row(r)[offset..offset + pc]);
                            }
                            Tensor::matrix(pr, pc, data)?
                        };
                        offset += if *axis == 0 { pr } else { pc };
                        accumulate(&mut grads, p, piece, self.value(p));
                    }
                }
                Op::Slice { src, axis, start } => {
                    let sv = self.value(*src);
                    let (_, sc) = sv.dims2()?;
                    let mut full = vec![0.0; sv.len()];
                    if *axis == 0 {
                        full[start * sc..start * sc + g.len()].copy_from_slice(g.data());
                    } else {
                        let len = g.cols();
                        for r in 0..g.rows() {
                            full[r * sc + start..r * sc + start + len].copy_from_slice(g.row(r));
                        }
                    }
                    let full = Tensor::new(sv.shape().to_vec(), full)?;
                    accumulate(&mut grads, *src, full, sv);
                }
                Op::LpNormalize { src, p, eps, norms } => {
                    let xv = self.value(*src);
                    let c = xv.cols();
                    let mut dx = Vec::with_capacity(xv.len());
                    for (r, &norm) in norms.iter().enumerate() {
                        let x = xv.row(r);
                        let gr = g.row(r);
                        if norm < *eps {
                            dx.extend(gr.iter().map(|gv| gv / eps));
                            continue;
                        }
                        // d(x/n) = g/n − (g·x)/n² · ∂n/∂x, ∂n/∂xⱼ = sign(xⱼ)|xⱼ|^(p−1) / n^(p−1)
                        let gx: f64 = gr.iter().zip(x).map(|(a, b)| a * b).sum();
                        let np1 = norm.powf(p - 1.0);
                        for j in 0..c {
                            let dn = x[j].signum() * x[j].abs().powf(p - 1.0) / np1;
                            dx.push(gr[j] / norm - gx / (norm * norm) * dn);
                        }
                    }
                    let dx = Tensor::new(xv.shape().to_vec(), dx)?;
                    accumulate(&mut grads, *src, dx, xv);
                }
                Op::SoftmaxCe { logits, targets, probs } => {
                    let seed = g.data()[0];
                    let mut d = probs.clone();
                    let c = d.cols();
                    for (r, &t) in targets.iter().enumerate() {
                        d.data_mut()[r * c + t] -= 1.0;
                    }
                    d.data_mut().iter_mut().for_each(|x| *x *= seed);
                    accumulate(&mut grads, *logits, d, self.value(*logits));
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    let da = Tensor::filled(av.shape(), g.data()[0]);
                    accumulate(&mut grads, *a, da, av);
                }
            }
        }

        for (id, t) in &out.dense {
            if !t.is_finite() {
                return Err(NumericsError::NonFiniteGradient(self.store.name(*id).to_string()));
            }
        }
        for (id, _, row) in &out.rows {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(NumericsError::NonFiniteGradient(self.store.name(*id).to_string()));
            }
        }
        Ok(out)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Additive accumulation at fan-out. The incoming gradient takes the shape of
/// the node it flows into (row vectors may arrive as `1 × d`).
fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor, like: &Tensor) {
    let g = if g.shape() == like.shape() {
        g
    } else {
        g.reshape(like.shape().to_vec()).expect("gradient size matches value")
    };
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
