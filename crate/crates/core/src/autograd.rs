//! A small reverse-mode differentiation tape over dense `f64` matrices.
//!
//! Every value is a 2-D array; vectors are `1×d` rows and scalars are `1×1`.
//! A [`Graph`] records operations as they are applied and [`Graph::backward`]
//! walks the record in reverse, accumulating gradients for every node and for
//! each [`ParamId`] that entered the graph.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Logits are clamped to this magnitude before the loss is evaluated.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
}

/// Named parameter tensors. Names are dotted paths (`map.text.l1.weight`);
/// the first component is the parameter group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "parameter {name} registered twice");
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Ids of every parameter whose name starts with `prefix` followed by `.`
    pub fn group(&self, prefix: &str) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| group_of(&p.name) == prefix)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.params {
            let g = group_of(&p.name);
            if !out.iter().any(|x| x == g) {
                out.push(g.to_string());
            }
        }
        out
    }

    /// SHA-256 over names, shapes and the exact bits of every value in the
    /// given parameters.
    pub fn fingerprint(&self, ids: &[ParamId]) -> String {
        let mut h = Sha256::new();
        for &id in ids {
            let p = &self.params[id.0];
            h.update(p.name.as_bytes());
            h.update((p.value.nrows() as u64).to_le_bytes());
            h.update((p.value.ncols() as u64).to_le_bytes());
            for v in p.value.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Fingerprint per parameter group, in registration order.
    pub fn group_fingerprints(&self) -> BTreeMap<String, String> {
        self.groups()
            .into_iter()
            .map(|g| {
                let ids = self.group(&g);
                let fp = self.fingerprint(&ids);
                (g, fp)
            })
            .collect()
    }
}

pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    MulConst(Var, Array2<f64>),
    Scale(Var, f64),
    Transpose(Var),
    SoftmaxRows(Var),
    WeightedRows(Var, Vec<(usize, f64)>),
    MaxRows { input: Var, winners: Vec<usize> },
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Bce { logits: Var, labels: Array2<f64>, norm: f64 },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: BTreeMap<ParamId, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input.
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// The parameter as a graph node; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// `a` (n×m) plus the `1×m` row `row`, broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // NaN must survive so non-finite losses are detected.
        let value = self.value(a).mapv(|x| if x > 0.0 || x.is_nan() { x } else { 0.0 });
        self.push(value, Op::Relu(a))
    }

    /// Elementwise product with a constant (used for dropout masks).
    pub fn mul_const(&mut self, a: Var, mask: Array2<f64>) -> Var {
        let value = self.value(a) * &mask;
        self.push(value, Op::MulConst(a, mask))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a) * s;
        self.push(value, Op::Scale(a, s))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// `1×d` weighted sum of the selected rows of `a`.
    pub fn weighted_rows(&mut self, a: Var, weights: Vec<(usize, f64)>) -> Var {
        let src = self.value(a);
        let mut value = Array2::zeros((1, src.ncols()));
        for &(i, w) in &weights {
            value.row_mut(0).scaled_add(w, &src.row(i));
        }
        self.push(value, Op::WeightedRows(a, weights))
    }

    /// `1×d` mean of the selected rows of `a`.
    pub fn mean_rows(&mut self, a: Var, rows: impl IntoIterator<Item = usize>) -> Var {
        let rows: Vec<usize> = rows.into_iter().collect();
        assert!(!rows.is_empty(), "mean over zero rows");
        let w = 1.0 / rows.len() as f64;
        self.weighted_rows(a, rows.into_iter().map(|i| (i, w)).collect())
    }

    /// `1×d` elementwise maximum of the selected rows. Ties go to the earliest
    /// row in `rows`.
    pub fn max_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        assert!(!rows.is_empty(), "max over zero rows");
        let src = self.value(a);
        let mut value = Array2::zeros((1, src.ncols()));
        let mut winners = Vec::with_capacity(src.ncols());
        for c in 0..src.ncols() {
            let mut best = rows[0];
            for &r in &rows[1..] {
                let (x, b) = (src[[r, c]], src[[best, c]]);
                if !b.is_nan() && (x > b || x.is_nan()) {
                    best = r;
                }
            }
            value[[0, c]] = src[[best, c]];
            winners.push(best);
        }
        self.push(value, Op::MaxRows { input: a, winners })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    /// Stacks `1×d` rows into an `n×d` matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(value, Op::StackRows(parts.to_vec()))
    }

    /// Two-sided binary cross-entropy on logits, summed over all entries and
    /// divided by `norm`. Logits are clamped to `±LOGIT_CLAMP`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Array2<f64>, norm: f64) -> Result<Var> {
        let z = self.value(logits);
        if z.dim() != labels.dim() {
            return Err(Error::Shape(format!("logits {:?} vs labels {:?}", z.dim(), labels.dim())));
        }
        let total: f64 = z
            .iter()
            .zip(labels.iter())
            .map(|(&z, &y)| bce_term(z, y))
            .sum();
        let value = Array2::from_elem((1, 1), total / norm);
        Ok(self.push(value, Op::Bce { logits, labels, norm }))
    }

    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let mut value = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            value += self.value(p);
        }
        self.push(value, Op::Sum(parts.to_vec()))
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Array2::ones((1, 1)));

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *row, gr);
                }
                Op::Relu(a) => {
                    let mut ga = g.clone();
                    ndarray::Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::MulConst(a, mask) => accumulate(&mut grads, *a, &g * mask),
                Op::Scale(a, s) => accumulate(&mut grads, *a, &g * *s),
                Op::Transpose(a) => accumulate(&mut grads, *a, g.t().to_owned()),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot: f64 = g.row(r).dot(&y.row(r));
                        for c in 0..y.ncols() {
                            ga[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::WeightedRows(a, weights) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for &(r, w) in weights {
                        ga.row_mut(r).scaled_add(w, &g.row(0));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MaxRows { input, winners } => {
                    let mut ga = Array2::zeros(self.value(*input).dim());
                    for (c, &r) in winners.iter().enumerate() {
                        ga[[r, c]] += g[[0, c]];
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        let gp = g.slice(ndarray::s![.., offset..offset + w]).to_owned();
                        accumulate(&mut grads, p, gp);
                        offset += w;
                    }
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        let gp = g.slice(ndarray::s![offset..offset + h, ..]).to_owned();
                        accumulate(&mut grads, p, gp);
                        offset += h;
                    }
                }
                Op::Bce { logits, labels, norm } => {
                    let scale = g[[0, 0]] / norm;
                    let z = self.value(*logits);
                    let mut gz = Array2::zeros(z.dim());
                    ndarray::Zip::from(&mut gz).and(z).and(labels).for_each(|d, &z, &y| {
                        if z.abs() < LOGIT_CLAMP {
                            *d = (sigmoid(z) - y) * scale;
                        }
                    });
                    accumulate(&mut grads, *logits, gz);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        accumulate(&mut grads, p, g.clone());
                    }
                }
            }
            grads[i] = Some(g);
        }

        let mut params = BTreeMap::new();
        for (&id, &v) in &self.param_vars {
            if let Some(g) = &grads[v.0] {
                params.insert(id, g.clone());
            }
        }
        Gradients { nodes: grads, params }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Array2<f64>>>,
    params: BTreeMap<ParamId, Array2<f64>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Array2<f64>> {
        self.nodes[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.params.get(&id)
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Array2<f64>> {
        self.params
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

/// `-[y log σ(z) + (1-y) log(1-σ(z))]` evaluated stably, with `z` clamped.
pub fn bce_term(z: f64, y: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}
