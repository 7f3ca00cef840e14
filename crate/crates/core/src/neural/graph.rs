//! Tape-based reverse-mode automatic differentiation.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is
//! a valid reverse topological order. Shape errors inside ops are programmer
//! errors and panic; numeric domain errors from the losses are returned.

use crate::par::Exec;

use super::loss;
use super::params::{ParamGrads, ParameterSet};
use super::tensor::Tensor;
use super::NeuralError;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var },
    Relu(Var),
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Reshape(Var),
    Linear { x: Var, w: Var, b: Var },
    Sigmoid(Var),
    Softmax(Var),
    Scale(Var, f64),
    Add(Var, Var),
    LossDis { d_e: Var, d_r: Var },
    LossId { p_e: Var, p_r: Var, labels_e: Vec<usize>, labels_r: Vec<usize> },
    LossCt { f_e: Var, f_r: Var, same: Vec<f64>, margin: f64 },
    LossBce { logits: Var, targets: Vec<f64> },
    LossDisLogits { z_e: Var, z_r: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Parameter leaves bound onto a graph, indexed like the [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    trainable: Vec<bool>,
}

impl Bound {
    pub fn var(&self, i: usize) -> Var {
        self.vars[i]
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    exec: Exec,
}

impl Graph {
    pub fn new() -> Self {
        Self::with_exec(Exec::default())
    }

    pub fn with_exec(exec: Exec) -> Self {
        Self {
            nodes: Vec::new(),
            exec,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds every parameter; only those selected by `trainable` receive gradients.
    pub fn bind_with(&mut self, params: &ParameterSet, trainable: impl Fn(usize) -> bool) -> Bound {
        let mut vars = Vec::with_capacity(params.len());
        let mut flags = Vec::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            let t = trainable(i);
            vars.push(if t {
                self.leaf(p.value.clone())
            } else {
                self.input(p.value.clone())
            });
            flags.push(t);
        }
        Bound {
            vars,
            trainable: flags,
        }
    }

    pub fn bind(&mut self, params: &ParameterSet) -> Bound {
        self.bind_with(params, |_| true)
    }

    /// 3x3-style same-padded convolution: `x [n, cin, h, w]`, `w [cout, cin, k, k]`, `b [cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let out = conv2d_forward(self.value(x), self.value(w), self.value(b), self.exec);
        self.push(out, Op::Conv2d { x, w, b }, &[x, w, b])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a.max(0.0)).collect());
        self.push(out, Op::Relu(x), &[x])
    }

    /// 2x2 max-pool with stride 2 over `[n, c, h, w]` (even `h`, `w`).
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let (n, c, h, w) = dims4(v);
        assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even spatial dims, got {h}x{w}");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        let d = v.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if d[i] > d[best] {
                            best = i;
                        }
                    }
                    out.push(d[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::new(vec![n, c, oh, ow], out);
        self.push(out, Op::MaxPool2 { x, argmax }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let out = self.value(x).clone().reshaped(shape);
        self.push(out, Op::Reshape(x), &[x])
    }

    /// `x [n, in] · wᵀ + b` with `w [out, in]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, k) = (xv.shape()[0], xv.shape()[1]);
        let (o, k2) = (wv.shape()[0], wv.shape()[1]);
        assert_eq!(k, k2, "linear: input width {k} vs weight width {k2}");
        assert_eq!(bv.len(), o);
        let mut out = Vec::with_capacity(n * o);
        for i in 0..n {
            let xr = xv.row(i);
            for j in 0..o {
                let wr = &wv.data()[j * k..(j + 1) * k];
                out.push(bv.data()[j] + dot(xr, wr));
            }
        }
        let out = Tensor::new(vec![n, o], out);
        self.push(out, Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| sigmoid(a)).collect());
        self.push(out, Op::Sigmoid(x), &[x])
    }

    /// Row-wise softmax over `[n, k]`.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let k = v.shape()[1];
        let mut out = Vec::with_capacity(v.len());
        for row in v.data().chunks(k) {
            out.extend(softmax(row));
        }
        let out = Tensor::new(v.shape().to_vec(), out);
        self.push(out, Op::Softmax(x), &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a * c).collect());
        self.push(out, Op::Scale(x, c), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), self.value(b).shape(), "add shape mismatch");
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn loss_discriminator(&mut self, d_e: Var, d_r: Var) -> Result<Var, NeuralError> {
        let v = loss::loss_discriminator(self.value(d_e).data(), self.value(d_r).data())?;
        Ok(self.push(Tensor::scalar(v), Op::LossDis { d_e, d_r }, &[d_e, d_r]))
    }

    pub fn loss_identity(
        &mut self,
        p_e: Var,
        p_r: Var,
        labels_e: &[usize],
        labels_r: &[usize],
    ) -> Result<Var, NeuralError> {
        let v = loss::loss_identity(self.value(p_e), self.value(p_r), labels_e, labels_r)?;
        Ok(self.push(
            Tensor::scalar(v),
            Op::LossId {
                p_e,
                p_r,
                labels_e: labels_e.to_vec(),
                labels_r: labels_r.to_vec(),
            },
            &[p_e, p_r],
        ))
    }

    pub fn loss_contrastive(
        &mut self,
        f_e: Var,
        f_r: Var,
        same: &[f64],
        margin: f64,
    ) -> Result<Var, NeuralError> {
        let v = loss::loss_contrastive(self.value(f_e), self.value(f_r), same, margin)?;
        Ok(self.push(
            Tensor::scalar(v),
            Op::LossCt {
                f_e,
                f_r,
                same: same.to_vec(),
                margin,
            },
            &[f_e, f_r],
        ))
    }

    /// The discriminator objective from pre-sigmoid outputs,
    /// `(1/n) Σ [softplus(-z_e,i) + softplus(z_r,i)]`. Equal to
    /// [`Graph::loss_discriminator`] on `σ(z)` but finite for any logits.
    pub fn loss_discriminator_logits(&mut self, z_e: Var, z_r: Var) -> Result<Var, NeuralError> {
        let (ze, zr) = (self.value(z_e).data(), self.value(z_r).data());
        if ze.is_empty() || ze.len() != zr.len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "discriminator batches of size {} and {}",
                ze.len(),
                zr.len()
            )));
        }
        let sum: f64 = ze.iter().zip(zr).map(|(e, r)| softplus(-e) + softplus(*r)).sum();
        let v = sum / ze.len() as f64;
        if !v.is_finite() {
            return Err(NeuralError::Domain(format!("discriminator loss {v}")));
        }
        Ok(self.push(Tensor::scalar(v), Op::LossDisLogits { z_e, z_r }, &[z_e, z_r]))
    }

    /// Mean binary cross-entropy on raw logits, `mean(softplus(z) - t z)`.
    pub fn loss_bce_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, NeuralError> {
        let z = self.value(logits).data();
        if z.is_empty() || z.len() != targets.len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} logits with {} targets",
                z.len(),
                targets.len()
            )));
        }
        let sum: f64 = z
            .iter()
            .zip(targets)
            .map(|(z, t)| softplus(*z) - t * z)
            .sum();
        let v = sum / z.len() as f64;
        Ok(self.push(
            Tensor::scalar(v),
            Op::LossBce {
                logits,
                targets: targets.to_vec(),
            },
            &[logits],
        ))
    }

    /// `Σ weight · term`, skipping terms with zero weight entirely.
    pub fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Var {
        let mut acc: Option<Var> = None;
        for &(w, t) in terms {
            if w == 0.0 {
                continue;
            }
            let s = if w == 1.0 { t } else { self.scale(t, w) };
            acc = Some(match acc {
                None => s,
                Some(a) => self.add(a, s),
            });
        }
        acc.unwrap_or_else(|| self.input(Tensor::scalar(0.0)))
    }

    /// Reverse pass from a scalar node. Returns the gradient of every node
    /// that the output depends on and that requires a gradient.
    pub fn backward(&self, output: Var) -> Vec<Option<Tensor>> {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::new(
            self.value(output).shape().to_vec(),
            vec![1.0],
        ));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        grads
    }

    /// Gradients for the bound parameters.
    pub fn param_grads(&self, output: Var, bound: &Bound, params: &ParameterSet) -> ParamGrads {
        let mut all = self.backward(output);
        let mut disconnected = Vec::new();
        let grads = bound
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| match all[v.0].take() {
                Some(g) if bound.trainable[i] => g,
                _ => {
                    if bound.trainable[i] {
                        disconnected.push(i);
                    }
                    Tensor::zeros(params.get(i).value.shape().to_vec())
                }
            })
            .collect();
        ParamGrads {
            grads,
            disconnected,
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b } => {
                let need_x = self.nodes[x.0].needs_grad;
                let (dx, dw, db) = conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    need_x,
                    self.exec,
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *w, dw);
                self.accumulate(grads, *b, db);
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let d = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(a, gi)| if *a > 0.0 { *gi } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), d));
            }
            Op::MaxPool2 { x, argmax } => {
                let xv = self.value(*x);
                let mut d = Tensor::zeros(xv.shape().to_vec());
                for (gi, &src) in g.data().iter().zip(argmax) {
                    d.data_mut()[src] += gi;
                }
                self.accumulate(grads, *x, d);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.clone().reshaped(shape));
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k) = (xv.shape()[0], xv.shape()[1]);
                let o = wv.shape()[0];
                if self.nodes[x.0].needs_grad {
                    let mut dx = vec![0.0; n * k];
                    for i in 0..n {
                        let dxr = &mut dx[i * k..(i + 1) * k];
                        for j in 0..o {
                            let gij = g.data()[i * o + j];
                            let wr = &wv.data()[j * k..(j + 1) * k];
                            axpy(gij, wr, dxr);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(vec![n, k], dx));
                }
                let mut dw = vec![0.0; o * k];
                let mut db = vec![0.0; o];
                for i in 0..n {
                    let xr = xv.row(i);
                    for j in 0..o {
                        let gij = g.data()[i * o + j];
                        db[j] += gij;
                        axpy(gij, xr, &mut dw[j * k..(j + 1) * k]);
                    }
                }
                self.accumulate(grads, *w, Tensor::new(vec![o, k], dw));
                self.accumulate(grads, *b, Tensor::new(vec![o], db));
            }
            Op::Sigmoid(x) => {
                let d = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(s, gi)| gi * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), d));
            }
            Op::Softmax(x) => {
                let k = node.value.shape()[1];
                let mut d = Vec::with_capacity(node.value.len());
                for (p, gr) in node.value.data().chunks(k).zip(g.data().chunks(k)) {
                    let inner = dot(p, gr);
                    d.extend(p.iter().zip(gr).map(|(pi, gi)| pi * (gi - inner)));
                }
                self.accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), d));
            }
            Op::Scale(x, c) => {
                let d = g.data().iter().map(|v| v * c).collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), d));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::LossDis { d_e, d_r } => {
                let (ve, vr) = (self.value(*d_e), self.value(*d_r));
                let (ge, gr) = loss::loss_discriminator_grad(ve.data(), vr.data());
                let s = g.item();
                let scaled = |t: &Tensor, v: Vec<f64>| {
                    Tensor::new(t.shape().to_vec(), v.into_iter().map(|a| a * s).collect())
                };
                self.accumulate(grads, *d_e, scaled(ve, ge));
                self.accumulate(grads, *d_r, scaled(vr, gr));
            }
            Op::LossId {
                p_e,
                p_r,
                labels_e,
                labels_r,
            } => {
                let s = g.item();
                for (p, labels) in [(p_e, labels_e), (p_r, labels_r)] {
                    let mut d = loss::loss_identity_grad(self.value(*p), labels);
                    d.data_mut().iter_mut().for_each(|v| *v *= s);
                    self.accumulate(grads, *p, d);
                }
            }
            Op::LossCt {
                f_e,
                f_r,
                same,
                margin,
            } => {
                let s = g.item();
                let mut de =
                    loss::loss_contrastive_grad(self.value(*f_e), self.value(*f_r), same, *margin);
                de.data_mut().iter_mut().for_each(|v| *v *= s);
                let dr = Tensor::new(
                    de.shape().to_vec(),
                    de.data().iter().map(|v| -v).collect(),
                );
                self.accumulate(grads, *f_e, de);
                self.accumulate(grads, *f_r, dr);
            }
            Op::LossDisLogits { z_e, z_r } => {
                let (ve, vr) = (self.value(*z_e), self.value(*z_r));
                let s = g.item() / ve.len() as f64;
                let de = ve.data().iter().map(|z| -s * sigmoid(-z)).collect();
                let dr = vr.data().iter().map(|z| s * sigmoid(*z)).collect();
                self.accumulate(grads, *z_e, Tensor::new(ve.shape().to_vec(), de));
                self.accumulate(grads, *z_r, Tensor::new(vr.shape().to_vec(), dr));
            }
            Op::LossBce { logits, targets } => {
                let zv = self.value(*logits);
                let s = g.item() / targets.len() as f64;
                let d = zv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(z, t)| s * (sigmoid(*z) - t))
                    .collect();
                self.accumulate(grads, *logits, Tensor::new(zv.shape().to_vec(), d));
            }
        }
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row.
pub(crate) fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    match t.shape() {
        &[n, c, h, w] => (n, c, h, w),
        s => panic!("expected a 4-D tensor, got {s:?}"),
    }
}

/// Adds `wv * src` shifted by `(oy, ox)` into `dst`, both `h x w` planes,
/// skipping samples that fall outside the plane.
#[inline]
fn shifted_axpy(wv: f64, src: &[f64], dst: &mut [f64], h: usize, w: usize, oy: isize, ox: isize) {
    // dst[y][x] += wv * src[y + oy][x + ox]
    let y0 = (-oy).max(0) as usize;
    let y1 = (h as isize - oy).min(h as isize).max(0) as usize;
    let x0 = (-ox).max(0) as usize;
    let x1 = (w as isize - ox).min(w as isize).max(0) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + oy) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let s = &src[sy * w + (x0 as isize + ox) as usize..sy * w + (x1 as isize + ox) as usize];
        axpy(wv, s, d);
    }
}

fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, exec: Exec) -> Tensor {
    let (n, cin, h, wd) = dims4(x);
    let (cout, cin2, k, k2) = dims4(w);
    assert_eq!(cin, cin2, "conv2d: input has {cin} channels, kernel expects {cin2}");
    assert!(k == k2 && k % 2 == 1, "conv2d needs an odd square kernel");
    assert_eq!(b.len(), cout);
    let pad = (k / 2) as isize;
    let plane = h * wd;
    let mut out = vec![0.0; n * cout * plane];
    exec.for_each_chunk_mut(&mut out, cout * plane, |s, o| {
        let xs = &x.data()[s * cin * plane..(s + 1) * cin * plane];
        for co in 0..cout {
            let dst = &mut o[co * plane..(co + 1) * plane];
            dst.fill(b.data()[co]);
            for ci in 0..cin {
                let src = &xs[ci * plane..(ci + 1) * plane];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = w.data()[((co * cin + ci) * k + ky) * k + kx];
                        shifted_axpy(wv, src, dst, h, wd, ky as isize - pad, kx as isize - pad);
                    }
                }
            }
        }
    });
    Tensor::new(vec![n, cout, h, wd], out)
}

fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    need_x: bool,
    exec: Exec,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (n, cin, h, wd) = dims4(x);
    let (cout, _, k, _) = dims4(w);
    let pad = (k / 2) as isize;
    let plane = h * wd;

    let dx = need_x.then(|| {
        let mut dx = vec![0.0; n * cin * plane];
        exec.for_each_chunk_mut(&mut dx, cin * plane, |s, d| {
            let gs = &g.data()[s * cout * plane..(s + 1) * cout * plane];
            for co in 0..cout {
                let src = &gs[co * plane..(co + 1) * plane];
                for ci in 0..cin {
                    let dst = &mut d[ci * plane..(ci + 1) * plane];
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = w.data()[((co * cin + ci) * k + ky) * k + kx];
                            // out[y][x] used in[y+ky-pad][x+kx-pad]
                            shifted_axpy(wv, src, dst, h, wd, pad - ky as isize, pad - kx as isize);
                        }
                    }
                }
            }
        });
        Tensor::new(vec![n, cin, h, wd], dx)
    });

    // per-sample partial sums, reduced in sample order for determinism
    let partials = exec.map_range(n, |s| {
        let xs = &x.data()[s * cin * plane..(s + 1) * cin * plane];
        let gs = &g.data()[s * cout * plane..(s + 1) * cout * plane];
        let mut dw = vec![0.0; cout * cin * k * k];
        let mut db = vec![0.0; cout];
        for co in 0..cout {
            let gp = &gs[co * plane..(co + 1) * plane];
            db[co] = gp.iter().sum();
            for ci in 0..cin {
                let xp = &xs[ci * plane..(ci + 1) * plane];
                for ky in 0..k {
                    for kx in 0..k {
                        let (oy, ox) = (ky as isize - pad, kx as isize - pad);
                        let y0 = (-oy).max(0) as usize;
                        let y1 = (h as isize - oy).min(h as isize).max(0) as usize;
                        let x0 = (-ox).max(0) as usize;
                        let x1 = (wd as isize - ox).min(wd as isize).max(0) as usize;
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let sy = (y as isize + oy) as usize;
                            let gr = &gp[y * wd + x0..y * wd + x1];
                            let xr = &xp[sy * wd + (x0 as isize + ox) as usize
                                ..sy * wd + (x1 as isize + ox) as usize];
                            acc += dot(gr, xr);
                        }
                        dw[((co * cin + ci) * k + ky) * k + kx] = acc;
                    }
                }
            }
        }
        (dw, db)
    });
    let mut dw = vec![0.0; cout * cin * k * k];
    let mut db = vec![0.0; cout];
    for (pw, pb) in partials {
        axpy(1.0, &pw, &mut dw);
        axpy(1.0, &pb, &mut db);
    }
    (
        dx,
        Tensor::new(w.shape().to_vec(), dw),
        Tensor::new(vec![cout], db),
    )
}
