use crate::error::{Error, Result};

use super::matmul::{matmul_nn, matmul_nt, matmul_tn};
use super::{Activation, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// out = input * weight (+ bias per output column, when present)
    Affine {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    },
    Activation {
        input: NodeId,
        kind: Activation,
    },
    /// out = factor * input (constant factor, elementwise)
    Scale {
        input: NodeId,
        factor: f64,
    },
    /// out = sum of same-shape terms
    SumTerms {
        terms: Vec<NodeId>,
    },
    /// out = [parts[0] | parts[1] | ...] along columns
    ConcatCols {
        parts: Vec<NodeId>,
    },
    /// DeepONet pairing: coeffs [b, d+1], basis [q, d] ->
    /// out[i,p] = sum_j coeffs[i,j] * basis[p,j] + coeffs[i,d]
    Combine {
        coeffs: NodeId,
        basis: NodeId,
    },
    /// Scalar mean squared error against a constant target.
    Mse {
        pred: NodeId,
        target: NodeId,
    },
    AddScalars {
        lhs: NodeId,
        rhs: NodeId,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    adjoint: Option<Vec<f64>>,
}

/// Define-by-run recording of a computation, rebuilt for every forward pass.
///
/// Single-threaded by contract: record and run backward from one thread.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            adjoint: None,
        });
        id
    }

    /// Constant input: no adjoint is accumulated for it.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable input: its adjoint is available after [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Adjoint of a node after backward; `None` if it did not require one.
    pub fn adjoint(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].adjoint.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// input [b, n_in] * weight [n_in, n_out] + bias [n_out].
    ///
    /// The bias is optional so architectures without a bias on a given layer
    /// are first-class rather than emulated with frozen zeros.
    pub fn affine(&mut self, input: NodeId, weight: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let inp = self.value(input);
        let w = self.value(weight);
        if !inp.is_matrix() || !w.is_matrix() || inp.cols() != w.rows() {
            return Err(Error::dim(format!(
                "affine: input {:?} incompatible with weight {:?}",
                inp.shape(),
                w.shape()
            )));
        }
        let (b_rows, n_in, n_out) = (inp.rows(), inp.cols(), w.cols());
        if let Some(bias) = bias {
            let bv = self.value(bias);
            if bv.len() != n_out {
                return Err(Error::dim(format!(
                    "affine: bias {:?} incompatible with weight {:?}",
                    bv.shape(),
                    w.shape()
                )));
            }
        }
        let inp = self.value(input);
        let w = self.value(weight);
        let mut out = matmul_nn(inp.data(), w.data(), b_rows, n_in, n_out);
        if let Some(bias) = bias {
            let bv = self.value(bias).data();
            for row in out.chunks_mut(n_out) {
                for (o, &b) in row.iter_mut().zip(bv) {
                    *o += b;
                }
            }
        }
        let grad = self.needs(&[input, weight]) || bias.is_some_and(|b| self.needs(&[b]));
        Ok(self.push(
            Tensor::from_parts(vec![b_rows, n_out], out),
            Op::Affine {
                input,
                weight,
                bias,
            },
            grad,
        ))
    }

    pub fn activation(&mut self, input: NodeId, kind: Activation) -> NodeId {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| kind.apply(v)).collect();
        let shape = x.shape().to_vec();
        let grad = self.needs(&[input]);
        self.push(
            Tensor::from_parts(shape, data),
            Op::Activation { input, kind },
            grad,
        )
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> NodeId {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| factor * v).collect();
        let shape = x.shape().to_vec();
        let grad = self.needs(&[input]);
        self.push(
            Tensor::from_parts(shape, data),
            Op::Scale { input, factor },
            grad,
        )
    }

    /// Elementwise sum of same-shape nodes, in the order given.
    pub fn sum_terms(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Contract("sum of zero terms".into()))?;
        let shape = self.value(*first).shape().to_vec();
        for t in terms {
            if self.value(*t).shape() != shape.as_slice() {
                return Err(Error::dim(format!(
                    "sum: shape {:?} != {:?}",
                    self.value(*t).shape(),
                    shape
                )));
            }
        }
        let mut data = self.value(*first).data().to_vec();
        for t in &terms[1..] {
            for (o, &v) in data.iter_mut().zip(self.value(*t).data()) {
                *o += v;
            }
        }
        let grad = self.needs(terms);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::SumTerms {
                terms: terms.to_vec(),
            },
            grad,
        ))
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero parts".into()))?;
        let rows = self.value(*first).rows();
        let mut total_cols = 0usize;
        for p in parts {
            let v = self.value(*p);
            if !v.is_matrix() || v.rows() != rows {
                return Err(Error::dim(format!(
                    "concat: part {:?} incompatible with {} rows",
                    v.shape(),
                    rows
                )));
            }
            total_cols += v.cols();
        }
        let mut data = vec![0.0; rows * total_cols];
        let mut offset = 0usize;
        for p in parts {
            let v = self.value(*p);
            let c = v.cols();
            for r in 0..rows {
                data[r * total_cols + offset..r * total_cols + offset + c]
                    .copy_from_slice(&v.data()[r * c..(r + 1) * c]);
            }
            offset += c;
        }
        let grad = self.needs(parts);
        Ok(self.push(
            Tensor::from_parts(vec![rows, total_cols], data),
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            grad,
        ))
    }

    /// Pair expansion coefficients with basis values:
    /// `out[i, p] = sum_j coeffs[i, j] * basis[p, j] + coeffs[i, d]`
    /// where `coeffs` is [b, d+1] (last column is the additive offset) and
    /// `basis` is [q, d].
    pub fn combine(&mut self, coeffs: NodeId, basis: NodeId) -> Result<NodeId> {
        let c = self.value(coeffs);
        let t = self.value(basis);
        if !c.is_matrix() || !t.is_matrix() || c.cols() != t.cols() + 1 {
            return Err(Error::dim(format!(
                "combine: coeffs {:?} must have exactly one more column than basis {:?}",
                c.shape(),
                t.shape()
            )));
        }
        let (b_rows, d, q) = (c.rows(), t.cols(), t.rows());
        let mut out = vec![0.0; b_rows * q];
        // main term: coeffs[:, :d] * basis^T
        for i in 0..b_rows {
            let c_row = &c.data()[i * (d + 1)..i * (d + 1) + d];
            let offset = c.data()[i * (d + 1) + d];
            let out_row = &mut out[i * q..(i + 1) * q];
            for (p, o) in out_row.iter_mut().enumerate() {
                let t_row = &t.data()[p * d..(p + 1) * d];
                let mut acc = 0.0;
                for (&cv, &tv) in c_row.iter().zip(t_row) {
                    acc += cv * tv;
                }
                *o = acc + offset;
            }
        }
        let grad = self.needs(&[coeffs, basis]);
        Ok(self.push(
            Tensor::from_parts(vec![b_rows, q], out),
            Op::Combine { coeffs, basis },
            grad,
        ))
    }

    /// Mean squared error between a prediction and a constant target node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.value(pred).shape() != self.value(target).shape() {
            return Err(Error::dim(format!(
                "mse: prediction {:?} vs target {:?}",
                self.value(pred).shape(),
                self.value(target).shape()
            )));
        }
        if self.nodes[target.0].needs_grad {
            return Err(Error::Contract(
                "mse target must be a constant leaf".into(),
            ));
        }
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let n = p.len().max(1);
        let mut acc = 0.0;
        for (&pv, &tv) in p.iter().zip(t) {
            let d = pv - tv;
            acc += d * d;
        }
        let grad = self.needs(&[pred]);
        Ok(self.push(
            Tensor::scalar(acc / n as f64),
            Op::Mse { pred, target },
            grad,
        ))
    }

    pub fn add_scalars(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        if !self.value(lhs).is_scalar() || !self.value(rhs).is_scalar() {
            return Err(Error::Contract("add_scalars expects scalar nodes".into()));
        }
        let v = self.value(lhs).data()[0] + self.value(rhs).data()[0];
        let grad = self.needs(&[lhs, rhs]);
        Ok(self.push(Tensor::scalar(v), Op::AddScalars { lhs, rhs }, grad))
    }

    fn add_to_adjoint(&mut self, id: NodeId, contribution: &[f64]) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let len = self.nodes[id.0].value.len();
        let adj = self.nodes[id.0]
            .adjoint
            .get_or_insert_with(|| vec![0.0; len]);
        for (a, &c) in adj.iter_mut().zip(contribution) {
            *a += c;
        }
    }

    fn take_adjoint_or_zeros(&self, id: NodeId) -> Vec<f64> {
        match &self.nodes[id.0].adjoint {
            Some(a) => a.clone(),
            None => vec![0.0; self.nodes[id.0].value.len()],
        }
    }

    /// Reverse sweep from a scalar output. Every node that required a
    /// gradient carries a defined adjoint afterwards.
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        if !self.value(output).is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        for node in &mut self.nodes {
            node.adjoint = None;
        }
        if !self.nodes[output.0].needs_grad {
            // Constant graph: all parameter adjoints are zero by definition.
            for i in 0..self.nodes.len() {
                if self.nodes[i].needs_grad {
                    self.nodes[i].adjoint = Some(vec![0.0; self.nodes[i].value.len()]);
                }
            }
            return Ok(());
        }
        self.nodes[output.0].adjoint = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            if self.nodes[idx].adjoint.is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let grad = self.take_adjoint_or_zeros(NodeId(idx));
            match self.nodes[idx].op.clone() {
                Op::Leaf => {}
                Op::Affine {
                    input,
                    weight,
                    bias,
                } => {
                    let (b_rows, n_in) = {
                        let v = self.value(input);
                        (v.rows(), v.cols())
                    };
                    let n_out = self.value(weight).cols();
                    if self.nodes[input.0].needs_grad {
                        let w = self.value(weight).data();
                        let d_in = matmul_nt(&grad, w, b_rows, n_out, n_in);
                        self.add_to_adjoint(input, &d_in);
                    }
                    if self.nodes[weight.0].needs_grad {
                        let x = self.value(input).data();
                        let d_w = matmul_tn(x, &grad, b_rows, n_in, n_out);
                        self.add_to_adjoint(weight, &d_w);
                    }
                    if let Some(bias) = bias {
                        if self.nodes[bias.0].needs_grad {
                            let mut d_b = vec![0.0; n_out];
                            for row in grad.chunks(n_out) {
                                for (db, &g) in d_b.iter_mut().zip(row) {
                                    *db += g;
                                }
                            }
                            self.add_to_adjoint(bias, &d_b);
                        }
                    }
                }
                Op::Activation { input, kind } => {
                    if self.nodes[input.0].needs_grad {
                        let x = self.value(input).data();
                        let y = self.nodes[idx].value.data();
                        let d: Vec<f64> = grad
                            .iter()
                            .zip(x.iter().zip(y))
                            .map(|(&g, (&xv, &yv))| g * kind.derivative(xv, yv))
                            .collect();
                        self.add_to_adjoint(input, &d);
                    }
                }
                Op::Scale { input, factor } => {
                    if self.nodes[input.0].needs_grad {
                        let d: Vec<f64> = grad.iter().map(|&g| g * factor).collect();
                        self.add_to_adjoint(input, &d);
                    }
                }
                Op::SumTerms { terms } => {
                    for t in terms {
                        self.add_to_adjoint(t, &grad);
                    }
                }
                Op::ConcatCols { parts } => {
                    let rows = self.nodes[idx].value.rows();
                    let total_cols = self.nodes[idx].value.cols();
                    let mut offset = 0usize;
                    for p in parts {
                        let c = self.value(p).cols();
                        if self.nodes[p.0].needs_grad {
                            let mut d = vec![0.0; rows * c];
                            for r in 0..rows {
                                d[r * c..(r + 1) * c].copy_from_slice(
                                    &grad[r * total_cols + offset..r * total_cols + offset + c],
                                );
                            }
                            self.add_to_adjoint(p, &d);
                        }
                        offset += c;
                    }
                }
                Op::Combine { coeffs, basis } => {
                    let d = self.value(basis).cols();
                    let q = self.value(basis).rows();
                    let b_rows = self.value(coeffs).rows();
                    if self.nodes[coeffs.0].needs_grad {
                        // d_coeffs[:, :d] = grad [b,q] * basis [q,d]
                        let t = self.value(basis).data();
                        let main = matmul_nn(&grad, t, b_rows, q, d);
                        let mut d_c = vec![0.0; b_rows * (d + 1)];
                        for i in 0..b_rows {
                            d_c[i * (d + 1)..i * (d + 1) + d]
                                .copy_from_slice(&main[i * d..(i + 1) * d]);
                            d_c[i * (d + 1) + d] = grad[i * q..(i + 1) * q].iter().sum();
                        }
                        self.add_to_adjoint(coeffs, &d_c);
                    }
                    if self.nodes[basis.0].needs_grad {
                        // d_basis[p, j] = sum_i grad[i, p] * coeffs[i, j]
                        let c = self.value(coeffs);
                        let c_main: Vec<f64> = (0..b_rows)
                            .flat_map(|i| {
                                c.data()[i * (d + 1)..i * (d + 1) + d].iter().copied()
                            })
                            .collect();
                        let d_t = matmul_tn(&grad, &c_main, b_rows, q, d);
                        self.add_to_adjoint(basis, &d_t);
                    }
                }
                Op::Mse { pred, target } => {
                    if self.nodes[pred.0].needs_grad {
                        let p = self.value(pred).data();
                        let t = self.value(target).data();
                        let scale = 2.0 * grad[0] / p.len() as f64;
                        let d: Vec<f64> = p
                            .iter()
                            .zip(t)
                            .map(|(&pv, &tv)| scale * (pv - tv))
                            .collect();
                        self.add_to_adjoint(pred, &d);
                    }
                }
                Op::AddScalars { lhs, rhs } => {
                    self.add_to_adjoint(lhs, &grad);
                    self.add_to_adjoint(rhs, &grad);
                }
            }
        }

        // Parameters never reached by the sweep still get defined adjoints.
        for i in 0..self.nodes.len() {
            let node = &mut self.nodes[i];
            if node.needs_grad && node.adjoint.is_none() && matches!(node.op, Op::Leaf) {
                node.adjoint = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(())
    }
}
