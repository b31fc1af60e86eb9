//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied to its variables. Values are
//! computed eagerly when a node is pushed; [`Tape::backward`] then walks the
//! nodes in reverse insertion order (which is a reverse topological order)
//! and accumulates adjoints. Nodes that do not depend on any differentiable
//! leaf are skipped entirely, so constants never pay for their adjoints.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::linalg::{self, SpectralDecomposition};

pub type Matrix = DMatrix<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Ln(Var),
    Exp(Var),
    Sqrt(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Trace(Var),
    RowSums(Var),
    Gather(Var, Vec<(usize, usize)>),
    PairDot(Var, Var, Vec<(usize, usize)>),
    HCat(Vec<Var>),
    Scatter(Var, Vec<Vec<(usize, usize)>>),
    Solve { gram: Var, rhs: Var, inverse: Matrix },
    SymExp { input: Var, eig: SpectralDecomposition },
    SignedCounts(Var, Arc<SignedCountPlan>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Recording of a differentiable computation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`; zero when `v` did not
    /// contribute.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.adjoints[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len` nodes. Used to discard
    /// a rejected trial step; handles created after `len` become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Differentiable input.
    pub fn var(&mut self, value: Matrix) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(Matrix::from_element(1, 1, value))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m[(0, 0)]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push_raw(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Matrix, op: Op, parents: &[Var]) -> Var {
        let needs = parents.iter().any(|&p| self.needs(p));
        self.push_raw(value, op, needs)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "shape mismatch in {what}: {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let value = self.value(a).component_mul(self.value(b));
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "div");
        let value = self.value(a).component_div(self.value(b));
        self.push(value, Op::Div(a, b), &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a).1, self.shape(b).0, "matmul inner dimension");
        let value = self.value(a) * self.value(b);
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).add_scalar(c);
        self.push(value, Op::AddScalar(a), &[a])
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        self.add_scalar(n, 1.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a), &[a])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Ln(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        self.push(value, Op::Sqrt(a), &[a])
    }

    /// Clips every entry to `[lo, hi]`; the gradient is zero outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi), &[a])
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.clamp(a, lo, f64::INFINITY)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::from_element(1, 1, self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    pub fn trace(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(r, c, "trace of non-square matrix");
        let value = Matrix::from_element(1, 1, self.value(a).trace());
        self.push(value, Op::Trace(a), &[a])
    }

    /// Column vector of row sums.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::from_fn(m.nrows(), 1, |i, _| m.row(i).sum());
        self.push(value, Op::RowSums(a), &[a])
    }

    /// Column vector `[a[i0,j0], a[i1,j1], ...]`.
    pub fn gather(&mut self, a: Var, entries: &[(usize, usize)]) -> Var {
        let m = self.value(a);
        let value = Matrix::from_fn(entries.len(), 1, |k, _| m[entries[k]]);
        self.push(value, Op::Gather(a, entries.to_vec()), &[a])
    }

    /// Column vector of selected entries of `a·b`, i.e. `(a·b)[u,v]` for each
    /// pair, without forming the full product.
    pub fn pair_dot(&mut self, a: Var, b: Var, pairs: &[(usize, usize)]) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        assert_eq!(am.ncols(), bm.nrows(), "pair_dot inner dimension mismatch");
        let at = am.transpose();
        let value = Matrix::from_fn(pairs.len(), 1, |k, _| {
            let (u, v) = pairs[k];
            at.column(u).dot(&bm.column(v))
        });
        self.push(value, Op::PairDot(a, b, pairs.to_vec()), &[a, b])
    }

    /// Signed neighbourhood counts of `plan`'s links on the graph whose edge
    /// `e` carries the sign `s[e]`. See [`SignedCountPlan`].
    pub fn signed_counts(&mut self, s: Var, plan: &Arc<SignedCountPlan>) -> Var {
        assert_eq!(self.shape(s), (plan.edges, 1), "signed_counts needs one value per edge");
        let x = self.value(s);
        let p: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let q: Vec<f64> = x.iter().map(|v| (-v).max(0.0)).collect();
        let deg = |node: usize, w: &[f64]| plan.adj[node].iter().map(|&(_, e)| w[e]).sum::<f64>();
        let mut value = Matrix::zeros(plan.links.len(), 8);
        for (k, &(u, v)) in plan.links.iter().enumerate() {
            value[(k, 0)] = deg(u, &p);
            value[(k, 1)] = deg(u, &q);
            value[(k, 2)] = deg(v, &p);
            value[(k, 3)] = deg(v, &q);
            for &(a, b) in &plan.common[k] {
                value[(k, 4)] += p[a] * p[b];
                value[(k, 5)] += p[a] * q[b];
                value[(k, 6)] += q[a] * p[b];
                value[(k, 7)] += q[a] * q[b];
            }
        }
        self.push(value, Op::SignedCounts(s, Arc::clone(plan)), &[s])
    }

    /// Horizontal concatenation; every part must have the same row count.
    pub fn hcat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "hcat of nothing");
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.nrows(), rows, "hcat row mismatch");
            value.columns_mut(offset, m.ncols()).copy_from(m);
            offset += m.ncols();
        }
        self.push(value, Op::HCat(parts.to_vec()), parts)
    }

    /// Copy of `base` in which every cell of `targets[k]` holds `values[k]`
    /// (`values` is a column vector). Only `values` is differentiable.
    pub fn scatter(&mut self, values: Var, targets: &[Vec<(usize, usize)>], base: &Matrix) -> Var {
        assert_eq!(self.shape(values), (targets.len(), 1), "scatter needs one value per target");
        let mut value = base.clone();
        let v = self.value(values);
        for (k, cells) in targets.iter().enumerate() {
            for &cell in cells {
                value[cell] = v[(k, 0)];
            }
        }
        self.push(value, Op::Scatter(values, targets.to_vec()), &[values])
    }

    /// `gram⁻¹ · rhs` for a square, invertible `gram`.
    pub fn solve(&mut self, gram: Var, rhs: Var) -> Option<Var> {
        let g = self.value(gram);
        assert_eq!(g.nrows(), g.ncols(), "solve needs a square system");
        let inverse = g.clone().try_inverse()?;
        if inverse.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let value = &inverse * self.value(rhs);
        Some(self.push(value, Op::Solve { gram, rhs, inverse }, &[gram, rhs]))
    }

    /// Exponential of the symmetric part of `s` via its eigendecomposition.
    /// The adjoint follows the Daleckii–Krein divided-difference rule.
    pub fn sym_exp(&mut self, s: Var) -> crate::Result<Var> {
        let eig = linalg::sym_eig(self.value(s))?;
        let value = eig.map_spectrum(f64::exp);
        Ok(self.push(value, Op::SymExp { input: s, eig }, &[s]))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut adj: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Matrix::from_element(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                adj[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut adj);
            adj[idx] = Some(g);
        }

        let shapes = self.nodes[..=output.0].iter().map(|n| n.value.shape()).collect();
        Gradients { adjoints: adj, shapes }
    }

    fn propagate(&self, node: &Node, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, contrib: Matrix| match &mut adj[v.0] {
            Some(existing) => *existing += contrib,
            slot => *slot = Some(contrib),
        };
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let val = |v: Var| &self.nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone());
                }
                if needs(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone());
                }
                if needs(*b) {
                    acc(*b, -g);
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    acc(*a, g.component_mul(val(*b)));
                }
                if needs(*b) {
                    acc(*b, g.component_mul(val(*a)));
                }
            }
            Op::Div(a, b) => {
                let bv = val(*b);
                if needs(*a) {
                    acc(*a, g.component_div(bv));
                }
                if needs(*b) {
                    let av = val(*a);
                    let contrib = Matrix::from_fn(g.nrows(), g.ncols(), |i, j| {
                        -g[(i, j)] * av[(i, j)] / (bv[(i, j)] * bv[(i, j)])
                    });
                    acc(*b, contrib);
                }
            }
            Op::MatMul(a, b) => {
                if needs(*a) {
                    acc(*a, g * val(*b).transpose());
                }
                if needs(*b) {
                    acc(*b, val(*a).tr_mul(g));
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => {
                let av = val(*a);
                acc(*a, g.zip_map(av, |gi, x| if x > 0.0 { gi } else { 0.0 }));
            }
            Op::Sigmoid(_) => {
                let y = &node.value;
                let Op::Sigmoid(a) = &node.op else { unreachable!() };
                acc(*a, g.zip_map(y, |gi, yi| gi * yi * (1.0 - yi)));
            }
            Op::Ln(a) => acc(*a, g.component_div(val(*a))),
            Op::Exp(a) => acc(*a, g.component_mul(&node.value)),
            Op::Sqrt(a) => acc(*a, g.zip_map(&node.value, |gi, y| gi / (2.0 * y))),
            Op::Clamp(a, lo, hi) => {
                let av = val(*a);
                acc(
                    *a,
                    g.zip_map(av, |gi, x| if x >= *lo && x <= *hi { gi } else { 0.0 }),
                );
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::from_element(r, c, g[(0, 0)]));
            }
            Op::Trace(a) => {
                let n = val(*a).nrows();
                acc(*a, Matrix::identity(n, n) * g[(0, 0)]);
            }
            Op::RowSums(a) => {
                let slot = zeroed_slot(adj, *a, val(*a).shape());
                for mut col in slot.column_iter_mut() {
                    col += g.column(0);
                }
            }
            Op::Gather(a, entries) => {
                let slot = zeroed_slot(adj, *a, val(*a).shape());
                for (k, &e) in entries.iter().enumerate() {
                    slot[e] += g[(k, 0)];
                }
            }
            Op::PairDot(a, b, pairs) => {
                let (am, bm) = (val(*a), val(*b));
                if needs(*a) {
                    // row u of ā collects Σ g_k b[:, v_k] over the pairs with that u
                    let mut order: Vec<usize> = (0..pairs.len()).collect();
                    order.sort_by_key(|&k| pairs[k].0);
                    let slot = zeroed_slot(adj, *a, am.shape());
                    let mut row = DVector::zeros(bm.nrows());
                    let mut i = 0;
                    while i < order.len() {
                        let u = pairs[order[i]].0;
                        row.fill(0.0);
                        while i < order.len() && pairs[order[i]].0 == u {
                            let k = order[i];
                            row.axpy(g[(k, 0)], &bm.column(pairs[k].1), 1.0);
                            i += 1;
                        }
                        for (w, x) in row.iter().enumerate() {
                            slot[(u, w)] += x;
                        }
                    }
                }
                if needs(*b) {
                    let at = am.transpose();
                    let slot = zeroed_slot(adj, *b, bm.shape());
                    for (k, &(u, v)) in pairs.iter().enumerate() {
                        slot.column_mut(v).axpy(g[(k, 0)], &at.column(u), 1.0);
                    }
                }
            }
            Op::HCat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).ncols();
                    if needs(p) {
                        acc(p, g.columns(offset, w).into_owned());
                    }
                    offset += w;
                }
            }
            Op::Scatter(values, targets) => {
                let contrib = Matrix::from_fn(targets.len(), 1, |k, _| {
                    targets[k].iter().map(|&cell| g[cell]).sum()
                });
                acc(*values, contrib);
            }
            Op::Solve { gram, rhs, inverse } => {
                let rhs_bar = inverse.tr_mul(g);
                if needs(*gram) {
                    acc(*gram, -(&rhs_bar * node.value.transpose()));
                }
                if needs(*rhs) {
                    acc(*rhs, rhs_bar);
                }
            }
            Op::SymExp { input, eig } => {
                let s_bar = eig.exp_adjoint(g);
                let sym = (&s_bar + s_bar.transpose()) * 0.5;
                acc(*input, sym);
            }
            Op::SignedCounts(s, plan) => {
                let x = val(*s);
                let p: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
                let q: Vec<f64> = x.iter().map(|v| (-v).max(0.0)).collect();
                let (mut gp, mut gq) = (vec![0.0; plan.edges], vec![0.0; plan.edges]);
                for (k, &(u, v)) in plan.links.iter().enumerate() {
                    for &(_, e) in &plan.adj[u] {
                        gp[e] += g[(k, 0)];
                        gq[e] += g[(k, 1)];
                    }
                    for &(_, e) in &plan.adj[v] {
                        gp[e] += g[(k, 2)];
                        gq[e] += g[(k, 3)];
                    }
                    let (pp, pn, np, nn) = (g[(k, 4)], g[(k, 5)], g[(k, 6)], g[(k, 7)]);
                    for &(a, b) in &plan.common[k] {
                        gp[a] += pp * p[b] + pn * q[b];
                        gq[a] += np * p[b] + nn * q[b];
                        gp[b] += pp * p[a] + np * q[a];
                        gq[b] += pn * p[a] + nn * q[a];
                    }
                }
                let contrib = Matrix::from_fn(plan.edges, 1, |e, _| {
                    let xe = x[(e, 0)];
                    if xe > 0.0 {
                        gp[e]
                    } else if xe < 0.0 {
                        -gq[e]
                    } else {
                        0.0
                    }
                });
                acc(*s, contrib);
            }
        }
    }
}

/// Index structure for [`Tape::signed_counts`] on an undirected graph whose
/// edges are numbered `0..edges`.
///
/// Each output row holds, for a link `(u, v)`, the positive and negative
/// degrees of `u` and of `v`, followed by `Σ_w f(A_uw)·h(A_wv)` for
/// `(f, h)` in `(+,+), (+,−), (−,+), (−,−)`, where `+` is `relu(x)` and
/// `−` is `relu(−x)`.
#[derive(Debug, Clone)]
pub struct SignedCountPlan {
    edges: usize,
    /// `(neighbour, edge)` per node.
    adj: Vec<Vec<(usize, usize)>>,
    links: Vec<(usize, usize)>,
    /// `(edge u–w, edge w–v)` per common neighbour `w` of each link.
    common: Vec<Vec<(usize, usize)>>,
}

impl SignedCountPlan {
    pub fn new(n: usize, edges: &[(usize, usize)], links: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (e, &(u, v)) in edges.iter().enumerate() {
            adj[u].push((v, e));
            adj[v].push((u, e));
        }
        let mut mark = vec![usize::MAX; n];
        let common = links
            .iter()
            .map(|&(u, v)| {
                for &(w, e) in &adj[v] {
                    mark[w] = e;
                }
                let out = adj[u]
                    .iter()
                    .filter(|&&(w, _)| mark[w] != usize::MAX)
                    .map(|&(w, e)| (e, mark[w]))
                    .collect();
                for &(w, _) in &adj[v] {
                    mark[w] = usize::MAX;
                }
                out
            })
            .collect();
        Self { edges: edges.len(), adj, links: links.to_vec(), common }
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }
}

/// The adjoint of `v`, created as zeros on first use.
fn zeroed_slot(adj: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    adj[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
