//! The computation tape: records primitive ops during a forward pass and
//! replays them in reverse to accumulate gradients.

use super::tensor::{matmul_nt_acc, matmul_raw, matmul_tn_acc, Tensor};

const GELU_C0: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C1: f64 = 0.044_715;

fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C0 * (x + GELU_C1 * x * x * x)).tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_C0 * (x + GELU_C1 * x * x * x);
    let t = u.tanh();
    let du = GELU_C0 * (1.0 + 3.0 * GELU_C1 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Handle to a value recorded on a [`Tape`]. Only meaningful for the tape
/// that produced it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(usize);

enum Op {
    Input,
    Matmul(usize, usize),
    Add(usize, usize),
    /// `[m x n] + [1 x n]`, the bias add of a batched linear layer.
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Gelu(usize),
    Sum(usize),
    /// Columnwise max over rows; ties broken toward the lowest row index.
    MaxRows { src: usize, argmax: Vec<usize> },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows { src: usize, start: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Wengert list of recorded operations. One tape per training step or
/// forward pass; values are immutable once recorded.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite tensor produced on tape");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Record a leaf value (parameter or data).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.check(v).value
    }

    fn check(&self, v: Var) -> &Node {
        self.nodes.get(v.0).expect("Var not recorded on this tape")
    }

    /// `a[m x k] * b[k x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, ka) = self.value(a).dims2();
        let (kb, n) = self.value(b).dims2();
        assert_eq!(ka, kb, "matmul inner dimensions {ka} vs {kb}");
        let mut out = vec![0.0; m * n];
        matmul_raw(m, ka, n, self.value(a).data(), self.value(b).data(), &mut out);
        self.push(Tensor::matrix(m, n, out), Op::Matmul(a.0, b.0))
    }

    fn binary_elementwise(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Broadcast a `[1 x n]` row across every row of `[m x n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        let (rm, rn) = self.value(row).dims2();
        assert_eq!((rm, rn), (1, n), "add_row wants [1 x {n}], got [{rm} x {rn}]");
        let mut data = self.value(a).data().to_vec();
        let r = self.value(row).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += r[j];
            }
        }
        self.push(Tensor::matrix(m, n, data), Op::AddRow(a.0, row.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x * c).collect());
        self.push(out, Op::Scale(a.0, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x.max(0.0)).collect());
        self.push(out, Op::Relu(a.0))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| gelu_scalar(*x)).collect());
        self.push(out, Op::Gelu(a.0))
    }

    /// Full reduction to a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0))
    }

    /// Mean over all elements.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Columnwise max over the rows of `[m x n]`, giving `[1 x n]`.
    /// Gradient flows only to the argmax row of each column (lowest index on ties).
    pub fn max_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        assert!(m >= 1, "max_rows over empty tensor");
        let data = self.value(a).data();
        let mut out = data[..n].to_vec();
        let mut argmax = vec![0usize; n];
        for i in 1..m {
            for j in 0..n {
                let v = data[i * n + j];
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = i;
                }
            }
        }
        self.push(Tensor::row(out), Op::MaxRows { src: a.0, argmax })
    }

    /// Stack along axis 0; all parts must have the same column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let (_, n) = self.value(parts[0]).dims2();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pm, pn) = self.value(p).dims2();
            assert_eq!(pn, n, "concat_rows column mismatch: {pn} vs {n}");
            rows += pm;
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::matrix(rows, n, data), Op::ConcatRows(parts.iter().map(|v| v.0).collect()))
    }

    /// Concatenate along axis 1; all parts must have the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let (m, _) = self.value(parts[0]).dims2();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (pm, pn) = self.value(p).dims2();
                assert_eq!(pm, m, "concat_cols row mismatch: {pm} vs {m}");
                pn
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; m * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data().to_vec();
            for i in 0..m {
                data[i * total + off..i * total + off + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            off += w;
        }
        self.push(Tensor::matrix(m, total, data), Op::ConcatCols(parts.iter().map(|v| v.0).collect()))
    }

    /// Rows `start..start+rows` of a rank-2 value.
    pub fn slice_rows(&mut self, a: Var, start: usize, rows: usize) -> Var {
        let (m, n) = self.value(a).dims2();
        assert!(start + rows <= m, "slice_rows {start}..{} out of {m}", start + rows);
        let data = self.value(a).data()[start * n..(start + rows) * n].to_vec();
        self.push(Tensor::matrix(rows, n, data), Op::SliceRows { src: a.0, start })
    }

    /// Reverse pass. `loss` must be scalar; returns `d loss / d w` for every
    /// `w` in `wrt`, zeros for parameters the loss never touched.
    pub fn grad(&self, loss: Var, wrt: &[Var]) -> Vec<Tensor> {
        assert_eq!(
            self.check(loss).value.numel(),
            1,
            "grad of non-scalar loss (shape {:?})",
            self.check(loss).value.shape()
        );
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {
                    grads[idx] = Some(g); // keep for extraction
                    continue;
                }
                Op::Matmul(a, b) => {
                    let (m, k) = self.nodes[*a].value.dims2();
                    let (_, n) = self.nodes[*b].value.dims2();
                    {
                        let ga = self.grad_buf(&mut grads, *a);
                        matmul_nt_acc(m, n, k, &g, self.nodes[*b].value.data(), ga);
                    }
                    let gb = self.grad_buf(&mut grads, *b);
                    matmul_tn_acc(m, k, n, self.nodes[*a].value.data(), &g, gb);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, &g, 1.0);
                    self.accumulate(&mut grads, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, &g, 1.0);
                    self.accumulate(&mut grads, *b, &g, -1.0);
                }
                Op::AddRow(a, row) => {
                    self.accumulate(&mut grads, *a, &g, 1.0);
                    let (m, n) = self.nodes[*a].value.dims2();
                    let gr = self.grad_buf(&mut grads, *row);
                    for i in 0..m {
                        for j in 0..n {
                            gr[j] += g[i * n + j];
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.nodes[*a].value.data().to_vec(), self.nodes[*b].value.data().to_vec());
                    {
                        let ga = self.grad_buf(&mut grads, *a);
                        for (i, gi) in g.iter().enumerate() {
                            ga[i] += gi * bv[i];
                        }
                    }
                    let gb = self.grad_buf(&mut grads, *b);
                    for (i, gi) in g.iter().enumerate() {
                        gb[i] += gi * av[i];
                    }
                }
                Op::Scale(a, c) => self.accumulate(&mut grads, *a, &g, *c),
                Op::Relu(a) => {
                    let av = self.nodes[*a].value.data().to_vec();
                    let ga = self.grad_buf(&mut grads, *a);
                    for (i, gi) in g.iter().enumerate() {
                        if av[i] > 0.0 {
                            ga[i] += gi;
                        }
                    }
                }
                Op::Gelu(a) => {
                    let av = self.nodes[*a].value.data().to_vec();
                    let ga = self.grad_buf(&mut grads, *a);
                    for (i, gi) in g.iter().enumerate() {
                        ga[i] += gi * gelu_grad_scalar(av[i]);
                    }
                }
                Op::Sum(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                }
                Op::MaxRows { src, argmax } => {
                    let (_, n) = self.nodes[*src].value.dims2();
                    let gs = self.grad_buf(&mut grads, *src);
                    for j in 0..n {
                        gs[argmax[j] * n + j] += g[j];
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.numel();
                        let gp = self.grad_buf(&mut grads, p);
                        for (i, x) in g[off..off + len].iter().enumerate() {
                            gp[i] += x;
                        }
                        off += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let m = self.nodes[parts[0]].value.dims2().0;
                    let total: usize = parts.iter().map(|&p| self.nodes[p].value.dims2().1).sum();
                    let mut off = 0;
                    for &p in parts {
                        let (_, w) = self.nodes[p].value.dims2();
                        let gp = self.grad_buf(&mut grads, p);
                        for i in 0..m {
                            for j in 0..w {
                                gp[i * w + j] += g[i * total + off + j];
                            }
                        }
                        off += w;
                    }
                }
                Op::SliceRows { src, start } => {
                    // Row slices of a row-major matrix are contiguous.
                    let (_, n) = self.nodes[*src].value.dims2();
                    let gs = self.grad_buf(&mut grads, *src);
                    for (i, x) in g.iter().enumerate() {
                        gs[start * n + i] += x;
                    }
                }
            }
        }

        wrt.iter()
            .map(|w| {
                let node = self.check(*w);
                match &grads[w.0] {
                    Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone()),
                    None => Tensor::zeros(node.value.shape().to_vec()),
                }
            })
            .collect()
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Vec<f64>>], idx: usize) -> &'g mut Vec<f64> {
        grads[idx].get_or_insert_with(|| vec![0.0; self.nodes[idx].value.numel()])
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], idx: usize, g: &[f64], factor: f64) {
        let buf = self.grad_buf(grads, idx);
        for (b, x) in buf.iter_mut().zip(g) {
            *b += factor * x;
        }
    }
}
