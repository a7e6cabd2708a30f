use super::{Gradients, NumericError, ParamId, ParamSet, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Lookup(ParamId, usize),
    Affine(Var, Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Dot(Var, Var),
    Sum(Var),
    Pick(Var, usize),
    SumScalars(Vec<Var>),
    SoftmaxXent { logits: Var, gold: usize, probs: Vec<f64> },
    Hinge { scores: Var, good: usize, bad: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
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

/// A computation tape. Nodes are appended in evaluation order, so the tape
/// is acyclic by construction and reverse order is a topological order.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    input_grads: Vec<(Var, Vec<f64>)>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            input_grads: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var, NumericError> {
        if !value.is_finite() {
            return Err(NumericError::NonFinite(name));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id).data(),
            _ => self.nodes[v.0].value.data(),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id).shape(),
            _ => self.nodes[v.0].value.shape(),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    /// Probabilities computed by a `softmax_xent` node.
    pub fn probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::SoftmaxXent { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Gradient of the last `backward` loss with respect to an input node.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.input_grads
            .iter()
            .find(|(var, _)| *var == v)
            .map(|(_, g)| g.as_slice())
    }

    pub fn input(&mut self, t: Tensor) -> Result<Var, NumericError> {
        self.push(Op::Input, t, "input")
    }

    pub fn vector(&mut self, data: Vec<f64>) -> Result<Var, NumericError> {
        self.input(Tensor::vector(data))
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.push(Op::Input, Tensor::zeros(&[len]), "zeros")
            .expect("zeros are finite")
    }

    /// A dense parameter. Sparse tables must be read through `lookup`.
    pub fn param(&mut self, id: ParamId) -> Result<Var, NumericError> {
        if self.params.is_sparse(id) {
            return Err(NumericError::Usage(format!(
                "parameter `{}` is a lookup table",
                self.params.name(id)
            )));
        }
        self.push(Op::Param(id), Tensor::default(), "param")
    }

    pub fn lookup(&mut self, id: ParamId, row: usize) -> Result<Var, NumericError> {
        let table = self.params.get(id);
        let (rows, _) = table.rows_cols();
        if row >= rows {
            return Err(NumericError::Shape {
                op: "lookup",
                left: table.shape().to_vec(),
                right: vec![row],
            });
        }
        let value = Tensor::vector(table.row(row).to_vec());
        self.push(Op::Lookup(id, row), value, "lookup")
    }

    fn check_matvec(&self, op: &'static str, w: Var, x: Var) -> Result<(usize, usize), NumericError> {
        let ws = self.shape(w);
        match ws {
            [m, n] if *n == self.value(x).len() => Ok((*m, *n)),
            _ => Err(NumericError::Shape {
                op,
                left: ws.to_vec(),
                right: self.shape(x).to_vec(),
            }),
        }
    }

    fn matvec_value(&self, w: Var, x: Var, rows: usize, cols: usize) -> Vec<f64> {
        let wv = self.value(w);
        let xv = self.value(x);
        (0..rows)
            .map(|r| dot(&wv[r * cols..(r + 1) * cols], xv))
            .collect()
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var, NumericError> {
        let (m, n) = self.check_matvec("affine", w, x)?;
        if self.value(b).len() != m {
            return Err(NumericError::Shape {
                op: "affine",
                left: self.shape(w).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let mut y = self.matvec_value(w, x, m, n);
        y.iter_mut().zip(self.value(b)).for_each(|(yi, bi)| *yi += bi);
        self.push(Op::Affine(w, x, b), Tensor::vector(y), "affine")
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, NumericError> {
        let (m, n) = self.check_matvec("matvec", w, x)?;
        let y = self.matvec_value(w, x, m, n);
        self.push(Op::MatVec(w, x), Tensor::vector(y), "matvec")
    }

    fn same_len(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericError> {
        if self.value(a).len() != self.value(b).len() {
            return Err(NumericError::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, op: Op, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var, NumericError> {
        self.same_len(name, a, b)?;
        let y: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        let t = Tensor::new(shape, y)?;
        self.push(op, t, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_with(Op::Add(a, b), a, b, "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_with(Op::Sub(a, b), a, b, "sub", |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_with(Op::Mul(a, b), a, b, "mul", |x, y| x * y)
    }

    fn map(&mut self, op: Op, a: Var, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var, NumericError> {
        let y: Vec<f64> = self.value(a).iter().map(|x| f(*x)).collect();
        let t = Tensor::new(self.shape(a).to_vec(), y)?;
        self.push(op, t, name)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var, NumericError> {
        self.map(Op::Scale(a, k), a, "scale", |x| k * x)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericError> {
        self.map(Op::Tanh(a), a, "tanh", f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericError> {
        self.map(Op::Sigmoid(a), a, "sigmoid", sigmoid)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::Usage("concat of nothing".to_owned()));
        }
        let total = parts.iter().map(|p| self.value(*p).len()).sum();
        let mut y = Vec::with_capacity(total);
        for p in parts {
            y.extend_from_slice(self.value(*p));
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(y), "concat")
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericError> {
        let av = self.value(a);
        if start + len > av.len() {
            return Err(NumericError::Shape {
                op: "slice",
                left: self.shape(a).to_vec(),
                right: vec![start, len],
            });
        }
        let y = av[start..start + len].to_vec();
        self.push(Op::Slice(a, start), Tensor::vector(y), "slice")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.same_len("dot", a, b)?;
        let y = dot(self.value(a), self.value(b));
        self.push(Op::Dot(a, b), Tensor::scalar(y), "dot")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericError> {
        let y = self.value(a).iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(y), "sum")
    }

    pub fn pick(&mut self, a: Var, idx: usize) -> Result<Var, NumericError> {
        let av = self.value(a);
        if idx >= av.len() {
            return Err(NumericError::Shape {
                op: "pick",
                left: self.shape(a).to_vec(),
                right: vec![idx],
            });
        }
        let y = av[idx];
        self.push(Op::Pick(a, idx), Tensor::scalar(y), "pick")
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, xs: &[Var]) -> Result<Var, NumericError> {
        let mut y = 0.0;
        for x in xs {
            let v = self.value(*x);
            if v.len() != 1 {
                return Err(NumericError::Shape {
                    op: "sum_scalars",
                    left: vec![1],
                    right: self.shape(*x).to_vec(),
                });
            }
            y += v[0];
        }
        self.push(Op::SumScalars(xs.to_vec()), Tensor::scalar(y), "sum_scalars")
    }

    /// Negative log-likelihood of `gold` under softmax(logits).
    pub fn softmax_xent(&mut self, logits: Var, gold: usize) -> Result<Var, NumericError> {
        let lv = self.value(logits);
        if gold >= lv.len() {
            return Err(NumericError::Shape {
                op: "softmax_xent",
                left: self.shape(logits).to_vec(),
                right: vec![gold],
            });
        }
        let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lv.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let loss = -(lv[gold] - max - z.ln());
        self.push(
            Op::SoftmaxXent { logits, gold, probs },
            Tensor::scalar(loss),
            "softmax_xent",
        )
    }

    /// `max(0, margin - max_{g in good} s_g + max_{b in bad} s_b)`. An empty
    /// side makes the loss zero.
    pub fn hinge(&mut self, scores: Var, good: &[usize], bad: &[usize], margin: f64) -> Result<Var, NumericError> {
        let sv = self.value(scores);
        if let Some(&idx) = good.iter().chain(bad).find(|&&i| i >= sv.len()) {
            return Err(NumericError::Shape {
                op: "hinge",
                left: self.shape(scores).to_vec(),
                right: vec![idx],
            });
        }
        let argmax = |set: &[usize]| {
            set.iter()
                .copied()
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if sv[b] >= sv[i] => Some(b),
                    _ => Some(i),
                })
        };
        let (g, b) = match (argmax(good), argmax(bad)) {
            (Some(g), Some(b)) => (g, b),
            _ => (0, 0),
        };
        let loss = if good.is_empty() || bad.is_empty() {
            0.0
        } else {
            (margin - sv[g] + sv[b]).max(0.0)
        };
        self.push(
            Op::Hinge {
                scores,
                good: g,
                bad: b,
            },
            Tensor::scalar(loss),
            "hinge",
        )
    }

    /// Reverse-mode accumulation from a scalar `loss` into `grads`.
    pub fn backward(&mut self, loss: Var, grads: &mut Gradients) -> Result<(), NumericError> {
        if self.value(loss).len() != 1 {
            return Err(NumericError::Usage(format!(
                "backward from non-scalar node of shape {:?}",
                self.shape(loss)
            )));
        }

        let mut node_grads: Vec<Option<Vec<f64>>> = Vec::new();
        node_grads.resize_with(loss.0 + 1, || None);
        node_grads[loss.0] = Some(vec![1.0]);
        self.input_grads.clear();

        for i in (0..=loss.0).rev() {
            let gy = match node_grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_node(i, &gy, &mut node_grads, grads);
            if let Op::Input = self.nodes[i].op {
                self.input_grads.push((Var(i), gy));
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, gy: &[f64], node_grads: &mut [Option<Vec<f64>>], grads: &mut Gradients) {
        let slot = |v: Var, node_grads: &mut [Option<Vec<f64>>], grads: &mut Gradients, f: &mut dyn FnMut(&mut [f64])| {
            self.with_slot(v, node_grads, grads, f)
        };

        match &self.nodes[i].op {
            Op::Input => {}
            Op::Param(id) => axpy(1.0, gy, grads.dense_mut(*id)),
            Op::Lookup(id, row) => axpy(1.0, gy, grads.row_mut(*id, *row)),
            Op::Affine(w, x, b) => {
                self.backward_matvec(*w, *x, gy, node_grads, grads);
                slot(*b, node_grads, grads, &mut |g| axpy(1.0, gy, g));
            }
            Op::MatVec(w, x) => self.backward_matvec(*w, *x, gy, node_grads, grads),
            Op::Add(a, b) => {
                slot(*a, node_grads, grads, &mut |g| axpy(1.0, gy, g));
                slot(*b, node_grads, grads, &mut |g| axpy(1.0, gy, g));
            }
            Op::Sub(a, b) => {
                slot(*a, node_grads, grads, &mut |g| axpy(1.0, gy, g));
                slot(*b, node_grads, grads, &mut |g| axpy(-1.0, gy, g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                slot(*a, node_grads, grads, &mut |g| {
                    g.iter_mut().zip(gy).zip(bv).for_each(|((gi, y), v)| *gi += y * v)
                });
                slot(*b, node_grads, grads, &mut |g| {
                    g.iter_mut().zip(gy).zip(av).for_each(|((gi, y), v)| *gi += y * v)
                });
            }
            Op::Scale(a, k) => slot(*a, node_grads, grads, &mut |g| axpy(*k, gy, g)),
            Op::Tanh(a) => {
                let yv = self.nodes[i].value.data();
                slot(*a, node_grads, grads, &mut |g| {
                    g.iter_mut()
                        .zip(gy)
                        .zip(yv)
                        .for_each(|((gi, d), y)| *gi += d * (1.0 - y * y))
                });
            }
            Op::Sigmoid(a) => {
                let yv = self.nodes[i].value.data();
                slot(*a, node_grads, grads, &mut |g| {
                    g.iter_mut()
                        .zip(gy)
                        .zip(yv)
                        .for_each(|((gi, d), y)| *gi += d * y * (1.0 - y))
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    slot(*p, node_grads, grads, &mut |g| axpy(1.0, &gy[offset..offset + len], g));
                    offset += len;
                }
            }
            Op::Slice(a, start) => {
                let start = *start;
                slot(*a, node_grads, grads, &mut |g| {
                    axpy(1.0, gy, &mut g[start..start + gy.len()])
                });
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                slot(*a, node_grads, grads, &mut |g| axpy(gy[0], bv, g));
                slot(*b, node_grads, grads, &mut |g| axpy(gy[0], av, g));
            }
            Op::Sum(a) => slot(*a, node_grads, grads, &mut |g| g.iter_mut().for_each(|gi| *gi += gy[0])),
            Op::Pick(a, idx) => slot(*a, node_grads, grads, &mut |g| g[*idx] += gy[0]),
            Op::SumScalars(xs) => {
                for x in xs {
                    slot(*x, node_grads, grads, &mut |g| g[0] += gy[0]);
                }
            }
            Op::SoftmaxXent { logits, gold, probs } => {
                slot(*logits, node_grads, grads, &mut |g| {
                    for (k, (gi, p)) in g.iter_mut().zip(probs).enumerate() {
                        let target = if k == *gold { 1.0 } else { 0.0 };
                        *gi += gy[0] * (p - target);
                    }
                });
            }
            Op::Hinge { scores, good, bad } => {
                if self.nodes[i].value.data()[0] > 0.0 {
                    slot(*scores, node_grads, grads, &mut |g| {
                        g[*good] -= gy[0];
                        g[*bad] += gy[0];
                    });
                }
            }
        }
    }

    /// Run `f` on the gradient buffer that receives contributions for `v`:
    /// the optimizer buffer for parameters, a per-node buffer otherwise.
    fn with_slot(&self, v: Var, node_grads: &mut [Option<Vec<f64>>], grads: &mut Gradients, f: &mut dyn FnMut(&mut [f64])) {
        match self.nodes[v.0].op {
            Op::Param(id) => f(grads.dense_mut(id)),
            _ => {
                let len = self.value(v).len();
                f(node_grads[v.0].get_or_insert_with(|| vec![0.0; len]))
            }
        }
    }

    fn backward_matvec(
        &self,
        w: Var,
        x: Var,
        gy: &[f64],
        node_grads: &mut [Option<Vec<f64>>],
        grads: &mut Gradients,
    ) {
        let (wv, xv) = (self.value(w), self.value(x));
        let cols = xv.len();
        self.with_slot(w, node_grads, grads, &mut |g| {
            for (r, gr) in gy.iter().enumerate() {
                if *gr != 0.0 {
                    axpy(*gr, xv, &mut g[r * cols..(r + 1) * cols]);
                }
            }
        });
        self.with_slot(x, node_grads, grads, &mut |g| {
            for (r, gr) in gy.iter().enumerate() {
                if *gr != 0.0 {
                    axpy(*gr, &wv[r * cols..(r + 1) * cols], g);
                }
            }
        });
    }
}
