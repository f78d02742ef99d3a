//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so a node's inputs always have
//! smaller indices and a single reverse sweep is a valid topological order.
//! Parameters are copied into the tape when registered; backward never
//! touches the caller's `ParamGroup`s.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::tensor::{ParamGroup, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Activate { x: Var, act: Activation },
    Concat { a: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    Weighted { x: Var, weights: Vec<f64> },
    Ln { x: Var, floor: f64 },
    Square(Var),
    Sum(Var),
    SelectRows { x: Var, rows: Vec<usize> },
    Pick { x: Var, cols: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct ParamRef {
    group: String,
    key: String,
}

/// Computation graph recorded during a forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamRef, Var)>,
    param_lookup: HashMap<ParamRef, Var>,
}

/// Gradients keyed by parameter group name, each laid out like its group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    groups: BTreeMap<String, ParamGroup>,
}

impl Gradients {
    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.get(name)
    }

    pub fn get(&self, group: &str, key: &str) -> Option<&Tensor> {
        self.groups.get(group).and_then(|g| g.get(key))
    }

    pub fn groups(&self) -> impl Iterator<Item = &ParamGroup> {
        self.groups.values()
    }

    /// Keys (group, key) whose gradient has at least one nonzero entry.
    pub fn nonzero_keys(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for g in self.groups.values() {
            for (k, t) in g.iter() {
                if t.values().iter().any(|v| *v != 0.0) {
                    out.push((g.name().to_string(), k.to_string()));
                }
            }
        }
        out
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant (no gradient is reported for it).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records `group[key]` as a differentiable parameter. Registering the same
    /// entry twice returns the same node.
    pub fn param(&mut self, group: &ParamGroup, key: &str) -> Result<Var> {
        let r = ParamRef {
            group: group.name().to_string(),
            key: key.to_string(),
        };
        if let Some(v) = self.param_lookup.get(&r) {
            return Ok(*v);
        }
        let value = group.require(key)?.clone();
        let v = self.push(value, Op::Leaf);
        self.params.push((r.clone(), v));
        self.param_lookup.insert(r, v);
        Ok(v)
    }

    /// Registers every entry of a group, in insertion order.
    pub fn register_group(&mut self, group: &ParamGroup) -> Result<()> {
        let keys: Vec<String> = group.keys().map(str::to_string).collect();
        for k in keys {
            self.param(group, &k)?;
        }
        Ok(())
    }

    /// `x @ w^T + b` with `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if wv.shape().len() != 2 || bv.shape().len() != 1 || bv.shape()[0] != wv.shape()[0] {
            return Err(Error::Dimension(format!(
                "linear weight {:?} / bias {:?} do not form a layer",
                wv.shape(),
                bv.shape()
            )));
        }
        let (out, inp) = (wv.shape()[0], wv.shape()[1]);
        if xv.last_dim() != inp || xv.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "linear expects input [n, {inp}], got {:?}",
                xv.shape()
            )));
        }
        let n = xv.rows();
        let mut data = vec![0.0; n * out];
        for r in 0..n {
            kernels::linear_row(
                xv.row(r),
                wv.values(),
                bv.values(),
                &mut data[r * out..(r + 1) * out],
            );
        }
        let value = Tensor::matrix(n, out, data)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    pub fn activate(&mut self, x: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return x;
        }
        let mut value = self.value(x).clone();
        let c = value.last_dim();
        if c > 0 {
            for row in value.values_mut().chunks_mut(c) {
                kernels::activate_row(act, row);
            }
        }
        self.push(value, Op::Activate { x, act })
    }

    /// Column-wise concatenation of two `[n, *]` matrices.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.rows() != bv.rows() {
            return Err(Error::Dimension(format!(
                "cannot concatenate {:?} with {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (n, ca, cb) = (av.rows(), av.last_dim(), bv.last_dim());
        let mut data = Vec::with_capacity(n * (ca + cb));
        for r in 0..n {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let value = Tensor::matrix(n, ca + cb, data)?;
        Ok(self.push(value, Op::Concat { a, b }))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(Error::Dimension(format!(
                "{name}: shapes {:?} and {:?} differ",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av
            .values()
            .iter()
            .zip(bv.values())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let mut value = self.value(x).clone();
        for v in value.values_mut() {
            *v = scale * *v + shift;
        }
        self.push(value, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// Elementwise product with a constant tensor of the same size.
    pub fn weighted(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "weighted: {} weights for {} values",
                weights.len(),
                xv.len()
            )));
        }
        let mut value = xv.clone();
        for (v, w) in value.values_mut().iter_mut().zip(&weights) {
            *v *= w;
        }
        Ok(self.push(value, Op::Weighted { x, weights }))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln_clamped(&mut self, x: Var, floor: f64) -> Var {
        let mut value = self.value(x).clone();
        for v in value.values_mut() {
            *v = v.max(floor).ln();
        }
        self.push(value, Op::Ln { x, floor })
    }

    pub fn square(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for v in value.values_mut() {
            *v *= *v;
        }
        self.push(value, Op::Square(x))
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).values().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Gathers rows of a matrix (indices may repeat).
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = (xv.rows(), xv.last_dim());
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= n {
                return Err(Error::Dimension(format!("row {r} out of range for {n} rows")));
            }
            data.extend_from_slice(xv.row(r));
        }
        let value = Tensor::matrix(rows.len(), c, data)?;
        Ok(self.push(
            value,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Picks one column per row: `out[i, 0] = x[i, cols[i]]`.
    pub fn pick(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = (xv.rows(), xv.last_dim());
        if cols.len() != n {
            return Err(Error::Dimension(format!(
                "pick: {} column indices for {n} rows",
                cols.len()
            )));
        }
        let mut data = Vec::with_capacity(n);
        for (r, &col) in cols.iter().enumerate() {
            if col >= c {
                return Err(Error::Dimension(format!("column {col} out of range for width {c}")));
            }
            data.push(xv.row(r)[col]);
        }
        let value = Tensor::matrix(n, 1, data)?;
        Ok(self.push(
            value,
            Op::Pick {
                x,
                cols: cols.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a rank-0 node. Every registered parameter gets an
    /// entry; parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Linear { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (out, inp) = (wv.shape()[0], wv.shape()[1]);
                    let n = xv.rows();
                    let mut dx = vec![0.0; n * inp];
                    let mut dw = vec![0.0; out * inp];
                    let mut db = vec![0.0; out];
                    let gv = g.values();
                    for r in 0..n {
                        let xr = xv.row(r);
                        for o in 0..out {
                            let go = gv[r * out + o];
                            if go == 0.0 {
                                continue;
                            }
                            db[o] += go;
                            let wrow = &wv.values()[o * inp..(o + 1) * inp];
                            let dwrow = &mut dw[o * inp..(o + 1) * inp];
                            let dxrow = &mut dx[r * inp..(r + 1) * inp];
                            for k in 0..inp {
                                dwrow[k] += go * xr[k];
                                dxrow[k] += go * wrow[k];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, xv.shape(), dx);
                    accumulate(&mut grads, *w, wv.shape(), dw);
                    accumulate(&mut grads, *b, &[out], db);
                }
                Op::Activate { x, act } => {
                    let y = &node.value;
                    let c = y.last_dim();
                    let mut dz = g.into_values();
                    for (yr, gr) in y.values().chunks(c).zip(dz.chunks_mut(c)) {
                        kernels::activate_backward_row(*act, yr, gr);
                    }
                    accumulate(&mut grads, *x, y.shape(), dz);
                }
                Op::Concat { a, b } => {
                    let ca = self.value(*a).last_dim();
                    let cb = self.value(*b).last_dim();
                    let n = node.value.rows();
                    let mut da = Vec::with_capacity(n * ca);
                    let mut dbv = Vec::with_capacity(n * cb);
                    for r in 0..n {
                        let gr = g.row(r);
                        da.extend_from_slice(&gr[..ca]);
                        dbv.extend_from_slice(&gr[ca..]);
                    }
                    accumulate(&mut grads, *a, &[n, ca], da);
                    accumulate(&mut grads, *b, &[n, cb], dbv);
                }
                Op::Add(a, b) => {
                    let shape = g.shape().to_vec();
                    accumulate(&mut grads, *a, &shape, g.values().to_vec());
                    accumulate(&mut grads, *b, &shape, g.into_values());
                }
                Op::Sub(a, b) => {
                    let neg = g.values().iter().map(|v| -v).collect();
                    accumulate(&mut grads, *a, g.shape(), g.values().to_vec());
                    accumulate(&mut grads, *b, g.shape(), neg);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = g.values().iter().zip(bv.values()).map(|(g, y)| g * y).collect();
                    let db = g.values().iter().zip(av.values()).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads, *a, g.shape(), da);
                    accumulate(&mut grads, *b, g.shape(), db);
                }
                Op::Affine { x, scale } => {
                    let dx = g.values().iter().map(|v| v * scale).collect();
                    accumulate(&mut grads, *x, g.shape(), dx);
                }
                Op::Weighted { x, weights } => {
                    let dx = g.values().iter().zip(weights).map(|(v, w)| v * w).collect();
                    accumulate(&mut grads, *x, g.shape(), dx);
                }
                Op::Ln { x, floor } => {
                    let xv = self.value(*x);
                    let dx = g
                        .values()
                        .iter()
                        .zip(xv.values())
                        .map(|(gv, xv)| if *xv < *floor { 0.0 } else { gv / xv })
                        .collect();
                    accumulate(&mut grads, *x, g.shape(), dx);
                }
                Op::Square(x) => {
                    let xv = self.value(*x);
                    let dx = g
                        .values()
                        .iter()
                        .zip(xv.values())
                        .map(|(gv, xv)| 2.0 * xv * gv)
                        .collect();
                    accumulate(&mut grads, *x, g.shape(), dx);
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    let dx = vec![g.item(); xv.len()];
                    accumulate(&mut grads, *x, xv.shape(), dx);
                }
                Op::SelectRows { x, rows } => {
                    let xv = self.value(*x);
                    let c = xv.last_dim();
                    let mut dx = vec![0.0; xv.len()];
                    for (i, &r) in rows.iter().enumerate() {
                        for k in 0..c {
                            dx[r * c + k] += g.values()[i * c + k];
                        }
                    }
                    accumulate(&mut grads, *x, xv.shape(), dx);
                }
                Op::Pick { x, cols } => {
                    let xv = self.value(*x);
                    let c = xv.last_dim();
                    let mut dx = vec![0.0; xv.len()];
                    for (r, &col) in cols.iter().enumerate() {
                        dx[r * c + col] += g.values()[r];
                    }
                    accumulate(&mut grads, *x, xv.shape(), dx);
                }
            }
        }

        let mut out: BTreeMap<String, ParamGroup> = BTreeMap::new();
        for (r, v) in &self.params {
            let shape = self.value(*v).shape().to_vec();
            let grad = grads
                .get(v.0)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| Tensor::zeros(&shape));
            out.entry(r.group.clone())
                .or_insert_with(|| ParamGroup::new(r.group.clone()))
                .insert(r.key.clone(), grad)?;
        }
        Ok(Gradients { groups: out })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, shape: &[usize], delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(t) => {
            for (a, d) in t.values_mut().iter_mut().zip(delta) {
                *a += d;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), delta).expect("gradient shape"));
        }
    }
}

/// Row kernels shared by the tape and the graph-free evaluation path, so the
/// two produce bit-identical numbers.
pub(crate) mod kernels {
    use super::Activation;

    pub fn linear_row(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
        let inp = x.len();
        for (o, slot) in out.iter_mut().enumerate() {
            let wrow = &w[o * inp..(o + 1) * inp];
            let mut acc = b[o];
            for k in 0..inp {
                acc += wrow[k] * x[k];
            }
            *slot = acc;
        }
    }

    pub fn sigmoid(z: f64) -> f64 {
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }

    pub fn activate_row(act: Activation, row: &mut [f64]) {
        match act {
            Activation::Identity => {}
            Activation::Relu => row.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => row.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => row.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    s += *v;
                }
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }

    /// Turns upstream gradient `g` into the pre-activation gradient in place.
    pub fn activate_backward_row(act: Activation, y: &[f64], g: &mut [f64]) {
        match act {
            Activation::Identity => {}
            Activation::Relu => {
                for (gv, yv) in g.iter_mut().zip(y) {
                    if *yv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (gv, yv) in g.iter_mut().zip(y) {
                    *gv *= 1.0 - yv * yv;
                }
            }
            Activation::Sigmoid => {
                for (gv, yv) in g.iter_mut().zip(y) {
                    *gv *= yv * (1.0 - yv);
                }
            }
            Activation::Softmax => {
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                for (gv, yv) in g.iter_mut().zip(y) {
                    *gv = yv * (*gv - dot);
                }
            }
        }
    }
}
