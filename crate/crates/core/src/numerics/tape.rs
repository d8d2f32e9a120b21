use super::scalar::{c, Scalar};
use super::tensor::{matmul_a_bt, matmul_at_b, matmul_raw, Tensor};
use crate::error::{Error, Result};

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Gelu(Var),
    Relu(Var),
    Embedding { table: Var, ids: Vec<u32> },
    MaskedMeanRows { x: Var, mask: Vec<u8>, count: usize },
    Concat { parts: Vec<Var>, axis: Axis },
    SliceCols { x: Var, start: usize },
    Transpose(Var),
    CrossEntropyRows { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    L2NormalizeRows { x: Var, norms: Vec<T> },
    SigmoidBce { logits: Var, targets: Vec<T> },
    Mse { pred: Var, targets: Vec<T> },
    SumAll(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Define-by-run record of primitive applications for reverse-mode
/// differentiation. Nodes are appended in evaluation order, which is a
/// topological order; `backward` walks them in reverse once.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("operand shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2(op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a, "matmul")?;
        let (k2, n) = self.dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("inner dimensions differ: {m}x{k} · {k2}x{n}")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), needs))
    }

    /// Elementwise sum of equal shapes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.shape(a), self.shape(b))?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    /// Adds a `1 × c` bias to every row of an `r × c` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, cols) = self.dims(a, "add")?;
        let (br, bc) = self.dims(bias, "add")?;
        if br != 1 || bc != cols {
            return Err(Error::shape("add", format!("bias {br}x{bc} does not broadcast over {r}x{cols}")));
        }
        let b = self.value(bias).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(cols) {
            for (x, &y) in row.iter_mut().zip(&b) {
                *x += y;
            }
        }
        let needs = self.needs(&[a, bias]);
        Ok(self.push(Tensor::matrix(r, cols, data)?, Op::AddRow(a, bias), needs))
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.shape(a), self.shape(b))?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let data = self.value(a).data().iter().map(|&x| x * s).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).expect("same shape");
        let needs = self.needs(&[a]);
        self.push(t, Op::Scale(a, s), needs)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (r, cols) = self.dims(a, "softmax-rows")?;
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let needs = self.needs(&[a]);
        Ok(self.push(Tensor::matrix(r, cols, data)?, Op::SoftmaxRows(a), needs))
    }

    /// Row-wise layer normalization followed by the `gamma`/`beta` affine
    /// (both `1 × c`).
    pub fn layernorm_rows(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, cols) = self.dims(x, "layernorm-rows")?;
        for p in [gamma, beta] {
            if self.shape(p) != [1, cols] {
                return Err(Error::shape(
                    "layernorm-rows",
                    format!("affine shape {:?} does not match {cols} columns", self.shape(p)),
                ));
            }
        }
        let n = c::<T>(cols as f64);
        let eps = c::<T>(LAYERNORM_EPS);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Vec::with_capacity(r * cols);
        let mut inv_std = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r * cols);
        for row in self.value(x).data().chunks(cols) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let needs = self.needs(&[x, gamma, beta]);
        Ok(self.push(Tensor::matrix(r, cols, out)?, Op::LayerNormRows { x, gamma, beta, xhat, inv_std }, needs))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| gelu(x).0).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).expect("same shape");
        let needs = self.needs(&[a]);
        self.push(t, Op::Gelu(a), needs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| x.max(T::zero())).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).expect("same shape");
        let needs = self.needs(&[a]);
        self.push(t, Op::Relu(a), needs)
    }

    /// Gathers rows of `table` (V × d) for `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let (v, d) = self.dims(table, "embedding-lookup")?;
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            if id >= v {
                return Err(Error::Vocab { id, vocab_size: v });
            }
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let needs = self.needs(&[table]);
        Ok(self.push(Tensor::matrix(ids.len(), d, out)?, Op::Embedding { table, ids: ids.to_vec() }, needs))
    }

    /// Mean of the rows whose mask entry is 1, as a `1 × c` tensor.
    pub fn masked_mean_rows(&mut self, x: Var, mask: &[u8]) -> Result<Var> {
        let (r, cols) = self.dims(x, "masked-mean-rows")?;
        if mask.len() != r {
            return Err(Error::shape("masked-mean-rows", format!("mask length {} for {r} rows", mask.len())));
        }
        let count = mask.iter().filter(|&&m| m != 0).count();
        if count == 0 {
            return Err(Error::degenerate("masked-mean-rows: every row is masked"));
        }
        let inv = T::one() / c::<T>(count as f64);
        let mut out = vec![T::zero(); cols];
        for (row, &m) in self.value(x).data().chunks(cols).zip(mask) {
            if m != 0 {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        out.iter_mut().for_each(|o| *o *= inv);
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::row_vector(out), Op::MaskedMeanRows { x, mask: mask.to_vec(), count }, needs))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let (r0, c0) = self.dims(first, "concat")?;
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, cols) = self.dims(p, "concat")?;
            match axis {
                Axis::Rows if cols != c0 => {
                    return Err(Error::shape("concat", format!("row concat needs equal columns: {c0} vs {cols}")))
                }
                Axis::Cols if r != r0 => {
                    return Err(Error::shape("concat", format!("column concat needs equal rows: {r0} vs {r}")))
                }
                _ => {}
            }
            dims.push((r, cols));
        }
        let t = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                let rows = dims.iter().map(|d| d.0).sum();
                Tensor::matrix(rows, c0, data)?
            }
            Axis::Cols => {
                let total: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(r0 * total);
                for i in 0..r0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(i));
                    }
                }
                Tensor::matrix(r0, total, data)?
            }
        };
        let needs = self.needs(parts);
        Ok(self.push(t, Op::Concat { parts: parts.to_vec(), axis }, needs))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, cols) = self.dims(x, "slice-cols")?;
        if start + len > cols {
            return Err(Error::shape("slice-cols", format!("columns {start}..{} out of {cols}", start + len)));
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src.row(i)[start..start + len]);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(r, len, data)?, Op::SliceCols { x, start }, needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, cols) = self.dims(a, "transpose")?;
        let t = transpose_raw(self.value(a).data(), r, cols);
        let needs = self.needs(&[a]);
        Ok(self.push(Tensor::matrix(cols, r, t)?, Op::Transpose(a), needs))
    }

    /// Mean over rows of `-log softmax(logits_i)[targets_i]`, as `1 × 1`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, cols) = self.dims(logits, "cross-entropy-rows")?;
        if targets.len() != r {
            return Err(Error::shape("cross-entropy-rows", format!("{} targets for {r} rows", targets.len())));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::shape("cross-entropy-rows", format!("target class {t} out of {cols} columns")));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = T::zero();
        for (i, row) in probs.chunks_mut(cols).enumerate() {
            let lse = log_sum_exp(row);
            loss += lse - row[targets[i]];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        loss /= c::<T>(r as f64);
        let needs = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropyRows { logits, targets: targets.to_vec(), probs },
            needs,
        ))
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (r, cols) = self.dims(x, "l2-normalize-rows")?;
        let mut data = self.value(x).data().to_vec();
        let mut norms = Vec::with_capacity(r);
        for (i, row) in data.chunks_mut(cols).enumerate() {
            let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if n == T::zero() || !n.is_finite() {
                return Err(Error::degenerate(format!("l2-normalize-rows: row {i} has norm {n}")));
            }
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(r, cols, data)?, Op::L2NormalizeRows { x, norms }, needs))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against targets in [0, 1].
    pub fn sigmoid_bce(&mut self, logits: Var, targets: &[T]) -> Result<Var> {
        if targets.len() != self.value(logits).len() {
            return Err(Error::shape("sigmoid-bce", format!("{} targets for {} logits", targets.len(), self.value(logits).len())));
        }
        let n = c::<T>(targets.len().max(1) as f64);
        // max(x,0) - x*y + log(1 + exp(-|x|))
        let loss = self
            .value(logits)
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| x.max(T::zero()) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<T>()
            / n;
        let needs = self.needs(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::SigmoidBce { logits, targets: targets.to_vec() }, needs))
    }

    /// Mean squared error against fixed targets.
    pub fn mse(&mut self, pred: Var, targets: &[T]) -> Result<Var> {
        if targets.len() != self.value(pred).len() {
            return Err(Error::shape("mse", format!("{} targets for {} predictions", targets.len(), self.value(pred).len())));
        }
        let n = c::<T>(targets.len().max(1) as f64);
        let loss = self.value(pred).data().iter().zip(targets).map(|(&p, &y)| (p - y) * (p - y)).sum::<T>() / n;
        let needs = self.needs(&[pred]);
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, targets: targets.to_vec() }, needs))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let needs = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), needs)
    }

    /// Reverse pass from a `1 × 1` output.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>> {
        if self.value(out).len() != 1 {
            return Err(Error::shape("backward", format!("output must be a scalar, got {:?}", self.shape(out))));
        }
        self.backward_with(&[(out, Tensor::full(self.shape(out), T::one()))])
    }

    /// Reverse pass seeded with explicit output gradients.
    pub fn backward_with(&self, seeds: &[(Var, Tensor<T>)]) -> Result<Gradients<T>> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, g) in seeds {
            same_shape("backward", self.shape(*v), g.shape())?;
            accumulate(&mut grads[v.0], g.clone());
            last = last.max(v.0);
        }
        for idx in (0..=last).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let gd = g.data();
        let mut send = |v: Var, data: Vec<T>, shape: &[usize]| {
            if self.nodes[v.0].needs_grad {
                accumulate(&mut grads[v.0], Tensor::new(shape.to_vec(), data).expect("grad shape"));
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2("matmul")?;
                let (_, n) = self.value(*b).dims2("matmul")?;
                if self.nodes[a.0].needs_grad {
                    send(*a, matmul_a_bt(gd, self.value(*b).data(), m, n, k), &[m, k]);
                }
                if self.nodes[b.0].needs_grad {
                    send(*b, matmul_at_b(self.value(*a).data(), gd, m, k, n), &[k, n]);
                }
            }
            Op::Add(a, b) => {
                send(*a, gd.to_vec(), g.shape());
                send(*b, gd.to_vec(), g.shape());
            }
            Op::AddRow(a, bias) => {
                send(*a, gd.to_vec(), g.shape());
                let cols = g.cols();
                let mut gb = vec![T::zero(); cols];
                for row in gd.chunks(cols) {
                    for (o, &v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                send(*bias, gb, &[1, cols]);
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                send(*a, gd.iter().zip(bv).map(|(&g, &y)| g * y).collect(), g.shape());
                send(*b, gd.iter().zip(av).map(|(&g, &x)| g * x).collect(), g.shape());
            }
            Op::Scale(a, s) => send(*a, gd.iter().map(|&v| v * *s).collect(), g.shape()),
            Op::SoftmaxRows(a) => {
                let cols = g.cols();
                let y = node.value.data();
                let mut out = Vec::with_capacity(gd.len());
                for (gr, yr) in gd.chunks(cols).zip(y.chunks(cols)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    out.extend(gr.iter().zip(yr).map(|(&gv, &yv)| yv * (gv - dot)));
                }
                send(*a, out, g.shape());
            }
            Op::LayerNormRows { x, gamma, beta, xhat, inv_std } => {
                let cols = g.cols();
                let n = c::<T>(cols as f64);
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); cols];
                let mut dbeta = vec![T::zero(); cols];
                let mut dx = Vec::with_capacity(gd.len());
                for ((gr, hr), &is) in gd.chunks(cols).zip(xhat.chunks(cols)).zip(inv_std) {
                    let mut sum_dh = T::zero();
                    let mut sum_dh_h = T::zero();
                    for j in 0..cols {
                        dgamma[j] += gr[j] * hr[j];
                        dbeta[j] += gr[j];
                        let dh = gr[j] * gam[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                    }
                    for j in 0..cols {
                        let dh = gr[j] * gam[j];
                        dx.push(is / n * (n * dh - sum_dh - hr[j] * sum_dh_h));
                    }
                }
                send(*x, dx, g.shape());
                send(*gamma, dgamma, &[1, cols]);
                send(*beta, dbeta, &[1, cols]);
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                send(*a, gd.iter().zip(x).map(|(&gv, &xv)| gv * gelu(xv).1).collect(), g.shape());
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                send(*a, gd.iter().zip(x).map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() }).collect(), g.shape());
            }
            Op::Embedding { table, ids } => {
                let shape = self.shape(*table).to_vec();
                let d = shape[1];
                let mut gt = vec![T::zero(); shape[0] * d];
                for (row, &id) in gd.chunks(d).zip(ids) {
                    let dst = &mut gt[id as usize * d..(id as usize + 1) * d];
                    for (o, &v) in dst.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                send(*table, gt, &shape);
            }
            Op::MaskedMeanRows { x, mask, count } => {
                let shape = self.shape(*x).to_vec();
                let inv = T::one() / c::<T>(*count as f64);
                let mut out = Vec::with_capacity(shape[0] * shape[1]);
                for &m in mask {
                    if m != 0 {
                        out.extend(gd.iter().map(|&v| v * inv));
                    } else {
                        out.extend(std::iter::repeat_n(T::zero(), shape[1]));
                    }
                }
                send(*x, out, &shape);
            }
            Op::Concat { parts, axis } => {
                let cols = g.cols();
                match axis {
                    Axis::Rows => {
                        let mut offset = 0;
                        for p in parts {
                            let shape = self.shape(*p).to_vec();
                            let n = shape[0] * shape[1];
                            send(*p, gd[offset..offset + n].to_vec(), &shape);
                            offset += n;
                        }
                    }
                    Axis::Cols => {
                        let mut start = 0;
                        for p in parts {
                            let shape = self.shape(*p).to_vec();
                            let w = shape[1];
                            let mut out = Vec::with_capacity(shape[0] * w);
                            for row in gd.chunks(cols) {
                                out.extend_from_slice(&row[start..start + w]);
                            }
                            send(*p, out, &shape);
                            start += w;
                        }
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let shape = self.shape(*x).to_vec();
                let w = g.cols();
                let mut out = vec![T::zero(); shape[0] * shape[1]];
                for (i, row) in gd.chunks(w).enumerate() {
                    out[i * shape[1] + start..i * shape[1] + start + w].copy_from_slice(row);
                }
                send(*x, out, &shape);
            }
            Op::Transpose(a) => {
                let (r, cols) = (g.rows(), g.cols());
                send(*a, transpose_raw(gd, r, cols), &[cols, r]);
            }
            Op::CrossEntropyRows { logits, targets, probs } => {
                let shape = self.shape(*logits).to_vec();
                let cols = shape[1];
                let scale = gd[0] / c::<T>(shape[0] as f64);
                let mut out = probs.clone();
                for (i, row) in out.chunks_mut(cols).enumerate() {
                    row[targets[i]] -= T::one();
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                send(*logits, out, &shape);
            }
            Op::L2NormalizeRows { x, norms } => {
                let cols = g.cols();
                let y = node.value.data();
                let mut out = Vec::with_capacity(gd.len());
                for ((gr, yr), &n) in gd.chunks(cols).zip(y.chunks(cols)).zip(norms) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    out.extend(gr.iter().zip(yr).map(|(&gv, &yv)| (gv - yv * dot) / n));
                }
                send(*x, out, g.shape());
            }
            Op::SigmoidBce { logits, targets } => {
                let shape = self.shape(*logits).to_vec();
                let scale = gd[0] / c::<T>(targets.len().max(1) as f64);
                let x = self.value(*logits).data();
                send(*logits, x.iter().zip(targets).map(|(&xv, &y)| (sigmoid(xv) - y) * scale).collect(), &shape);
            }
            Op::Mse { pred, targets } => {
                let shape = self.shape(*pred).to_vec();
                let scale = gd[0] * c::<T>(2.0) / c::<T>(targets.len().max(1) as f64);
                let p = self.value(*pred).data();
                send(*pred, p.iter().zip(targets).map(|(&pv, &y)| (pv - y) * scale).collect(), &shape);
            }
            Op::SumAll(a) => {
                let shape = self.shape(*a).to_vec();
                send(*a, vec![gd[0]; shape.iter().product()], &shape);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b),
        None => *slot = Some(g),
    }
}

pub(crate) fn transpose_raw<T: Scalar>(a: &[T], r: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for i in 0..r {
        for j in 0..cols {
            out[j * r + i] = a[i * cols + j];
        }
    }
    out
}

pub(crate) fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    row.iter_mut().for_each(|v| *v /= s);
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// GELU (tanh form) and its derivative.
pub(crate) fn gelu<T: Scalar>(x: T) -> (T, T) {
    let k = c::<T>((2.0 / std::f64::consts::PI).sqrt());
    let a = c::<T>(0.044715);
    let half = c::<T>(0.5);
    let u = k * (x + a * x * x * x);
    let t = u.tanh();
    let y = half * x * (T::one() + t);
    let du = k * (T::one() + c::<T>(3.0) * a * x * x);
    let dy = half * (T::one() + t) + half * x * (T::one() - t * t) * du;
    (y, dy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(r: usize, cols: usize, d: &[f64]) -> Tensor<f64> {
        Tensor::matrix(r, cols, d.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(1, 3, &[0.0, 0.0, 0.0]));
        let y = tape.softmax_rows(x).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn layernorm_of_constant_row_is_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(1, 4, &[2.5; 4]));
        let g = tape.constant(t(1, 4, &[1.0; 4]));
        let b = tape.constant(t(1, 4, &[0.0; 4]));
        let y = tape.layernorm_rows(x, g, b).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(2, 3, &[0.0; 6]));
        let b = tape.constant(t(2, 3, &[0.0; 6]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("2x3"), "{msg}");
        let v = tape.constant(t(1, 2, &[0.0; 2]));
        assert!(tape.add_row(a, v).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn embedding_rejects_out_of_range_ids() {
        let mut tape = Tape::<f64>::new();
        let table = tape.param(t(3, 2, &[0.0; 6]));
        assert!(matches!(tape.embedding(table, &[0, 3]), Err(Error::Vocab { id: 3, vocab_size: 3 })));
    }

    #[test]
    fn masked_mean_routes_no_gradient_to_pads() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(3, 2, &[1.0, 2.0, 3.0, 4.0, 100.0, 100.0]));
        let m = tape.masked_mean_rows(x, &[1, 1, 0]).unwrap();
        assert_eq!(tape.value(m).data(), &[2.0, 3.0]);
        let s = tape.sum_all(m);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.5, 0.5, 0.5, 0.0, 0.0]);
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(1, 2, &[1.0, 2.0]));
        assert!(matches!(tape.masked_mean_rows(x, &[0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn softmax_with_neg_infinity_mask() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(1, 3, &[1.0, f64::NEG_INFINITY, 1.0]));
        let y = tape.softmax_rows(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn cross_entropy_and_normalize_invariants() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(2, 3, &[0.3, -1.0, 2.0, 5.0, 0.0, 0.0]));
        let ce = tape.cross_entropy_rows(x, &[2, 1]).unwrap();
        assert!(tape.value(ce).item() >= 0.0);
        let n = tape.l2_normalize_rows(x).unwrap();
        for r in 0..2 {
            let norm: f64 = tape.value(n).row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let z = tape.constant(t(1, 2, &[0.0, 0.0]));
        assert!(matches!(tape.l2_normalize_rows(z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(1, 2, &[1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }
}
