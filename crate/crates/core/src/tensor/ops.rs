// Differentiable operations. Each forward method records one node; the
// matching arm of `Op::backward` accumulates vector-Jacobian products into
// the node's inputs.

use rand::Rng;

use super::kernels::{gemm_nn, gemm_nt, gemm_tn, sigmoid, softmax_rows};
use super::tape::{GradSink, Node, Tape, Var};
use crate::error::{Error, Result};
use crate::JobRng;

/// Additive bias used for disallowed attention positions.
pub(crate) const MASK_BIAS: f64 = -1e30;

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Tile(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    AddMask(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Dropout {
        x: Var,
        keep: Vec<f64>,
    },
    SplitHeads {
        x: Var,
        heads: usize,
    },
    MergeHeads {
        x: Var,
        heads: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    MseHalf {
        pred: Var,
        target: Var,
    },
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddBias(a, b) => vec![*a, *b],
            BatchMatMul { a, b, .. } => vec![*a, *b],
            MseHalf { pred, target } => vec![*pred, *target],
            LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Transpose(x)
            | Reshape(x)
            | Scale(x, _)
            | Relu(x)
            | Sigmoid(x)
            | Tanh(x)
            | Softmax(x)
            | AddMask(x)
            | Sum(x)
            | Mean(x) => vec![*x],
            Tile(x) | Dropout { x, .. } | SplitHeads { x, .. } | MergeHeads { x, .. } | SliceCols { x, .. } => vec![*x],
        }
    }

    pub(crate) fn backward(&self, tape: &Tape, node: &Node, g: &[f64], sink: &mut GradSink<'_>) {
        match self {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(tape.shape(*a));
                let n = node.shape[1];
                let (av, bv) = (tape.value(*a), tape.value(*b));
                sink.add_with(*a, |ga| gemm_nt(m, n, k, g, bv, ga));
                sink.add_with(*b, |gb| gemm_tn(k, m, n, av, g, gb));
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (batch, m, k) = dims3(tape.shape(*a));
                let n = node.shape[2];
                let (av, bv) = (tape.value(*a), tape.value(*b));
                sink.add_with(*a, |ga| {
                    for s in 0..batch {
                        let gs = &g[s * m * n..(s + 1) * m * n];
                        let bs = &bv[s * k * n..(s + 1) * k * n];
                        let out = &mut ga[s * m * k..(s + 1) * m * k];
                        if *trans_b {
                            // b is n×k
                            gemm_nn(m, n, k, gs, bs, out);
                        } else {
                            gemm_nt(m, n, k, gs, bs, out);
                        }
                    }
                });
                sink.add_with(*b, |gb| {
                    for s in 0..batch {
                        let gs = &g[s * m * n..(s + 1) * m * n];
                        let as_ = &av[s * m * k..(s + 1) * m * k];
                        let out = &mut gb[s * k * n..(s + 1) * k * n];
                        if *trans_b {
                            // d(bᵀ) = aᵀ g, so d(b) = gᵀ a  (n×k)
                            gemm_tn(n, m, k, gs, as_, out);
                        } else {
                            gemm_tn(k, m, n, as_, gs, out);
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let (r, c) = dims2(tape.shape(*x));
                let gt = super::kernels::transpose(c, r, g);
                sink.add(*x, &gt);
            }
            Op::Reshape(x) => sink.add(*x, g),
            Op::Add(a, b) => {
                sink.add(*a, g);
                sink.add(*b, g);
            }
            Op::Sub(a, b) => {
                sink.add(*a, g);
                sink.add_with(*b, |gb| gb.iter_mut().zip(g).for_each(|(d, v)| *d -= v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (tape.value(*a), tape.value(*b));
                sink.add_with(*a, |ga| {
                    for ((d, gv), bx) in ga.iter_mut().zip(g).zip(bv) {
                        *d += gv * bx;
                    }
                });
                sink.add_with(*b, |gb| {
                    for ((d, gv), ax) in gb.iter_mut().zip(g).zip(av) {
                        *d += gv * ax;
                    }
                });
            }
            Op::Scale(x, s) => sink.add_with(*x, |gx| gx.iter_mut().zip(g).for_each(|(d, v)| *d += s * v)),
            Op::AddBias(x, bias) => {
                sink.add(*x, g);
                let w = tape.value(*bias).len();
                sink.add_with(*bias, |gb| {
                    for row in g.chunks_exact(w) {
                        gb.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                });
            }
            Op::Tile(x) => {
                let w = tape.value(*x).len();
                sink.add_with(*x, |gx| {
                    for block in g.chunks_exact(w) {
                        gx.iter_mut().zip(block).for_each(|(d, v)| *d += v);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = tape.value(*x);
                sink.add_with(*x, |gx| {
                    for ((d, gv), xi) in gx.iter_mut().zip(g).zip(xv) {
                        if *xi > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => sink.add_with(*x, |gx| {
                for ((d, gv), y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * y * (1.0 - y);
                }
            }),
            Op::Tanh(x) => sink.add_with(*x, |gx| {
                for ((d, gv), y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * (1.0 - y * y);
                }
            }),
            Op::Softmax(x) => {
                let w = *node.shape.last().unwrap();
                sink.add_with(*x, |gx| {
                    for ((gs, ys), dst) in g
                        .chunks_exact(w)
                        .zip(node.value.chunks_exact(w))
                        .zip(gx.chunks_exact_mut(w))
                    {
                        let dot: f64 = gs.iter().zip(ys).map(|(a, b)| a * b).sum();
                        for ((d, gv), y) in dst.iter_mut().zip(gs).zip(ys) {
                            *d += y * (gv - dot);
                        }
                    }
                });
            }
            Op::AddMask(x) => sink.add(*x, g),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let w = tape.value(*gain).len();
                let gainv = tape.value(*gain);
                sink.add_with(*x, |gx| {
                    let mut dxhat = vec![0.0; w];
                    for (r, ((gs, xs), dst)) in g
                        .chunks_exact(w)
                        .zip(xhat.chunks_exact(w))
                        .zip(gx.chunks_exact_mut(w))
                        .enumerate()
                    {
                        for ((d, gv), gn) in dxhat.iter_mut().zip(gs).zip(gainv) {
                            *d = gv * gn;
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / w as f64;
                        let mean_dx = dxhat.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() / w as f64;
                        for ((d, dh), xh) in dst.iter_mut().zip(&dxhat).zip(xs) {
                            *d += rstd[r] * (dh - mean_d - xh * mean_dx);
                        }
                    }
                });
                sink.add_with(*gain, |gg| {
                    for (gs, xs) in g.chunks_exact(w).zip(xhat.chunks_exact(w)) {
                        for ((d, gv), xh) in gg.iter_mut().zip(gs).zip(xs) {
                            *d += gv * xh;
                        }
                    }
                });
                sink.add_with(*bias, |gb| {
                    for gs in g.chunks_exact(w) {
                        gb.iter_mut().zip(gs).for_each(|(d, v)| *d += v);
                    }
                });
            }
            Op::Dropout { x, keep } => sink.add_with(*x, |gx| {
                for ((d, gv), k) in gx.iter_mut().zip(g).zip(keep) {
                    *d += gv * k;
                }
            }),
            Op::SplitHeads { x, heads } => {
                // node is [B·h, L, dk], input is [B, L, d]
                let (bh, l, dk) = dims3(&node.shape);
                let merged = merge_heads(g, bh / heads, *heads, l, dk);
                sink.add(*x, &merged);
            }
            Op::MergeHeads { x, heads } => {
                let (b, l, d) = dims3(&node.shape);
                let split = split_heads(g, b, *heads, l, d / heads);
                sink.add(*x, &split);
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = dims2(tape.shape(*x));
                let w = node.shape[1];
                sink.add_with(*x, |gx| {
                    for r in 0..rows {
                        let dst = &mut gx[r * cols + start..r * cols + start + w];
                        dst.iter_mut().zip(&g[r * w..(r + 1) * w]).for_each(|(d, v)| *d += v);
                    }
                });
            }
            Op::Sum(x) => sink.add_with(*x, |gx| gx.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(x) => {
                let n = tape.value(*x).len() as f64;
                sink.add_with(*x, |gx| gx.iter_mut().for_each(|d| *d += g[0] / n))
            }
            Op::MseHalf { pred, target } => {
                let (p, t) = (tape.value(*pred), tape.value(*target));
                let n = p.len() as f64;
                sink.add_with(*pred, |gp| {
                    for ((d, a), b) in gp.iter_mut().zip(p).zip(t) {
                        *d += g[0] * (a - b) / n;
                    }
                });
                sink.add_with(*target, |gt| {
                    for ((d, a), b) in gt.iter_mut().zip(p).zip(t) {
                        *d += g[0] * (b - a) / n;
                    }
                });
            }
        }
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1])
}

fn dims3(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2])
}

/// [B, L, h·dk] → [B·h, L, dk]
fn split_heads(x: &[f64], b: usize, h: usize, l: usize, dk: usize) -> Vec<f64> {
    let d = h * dk;
    let mut out = vec![0.0; x.len()];
    for s in 0..b {
        for t in 0..l {
            let src = &x[(s * l + t) * d..(s * l + t + 1) * d];
            for head in 0..h {
                let dst = ((s * h + head) * l + t) * dk;
                out[dst..dst + dk].copy_from_slice(&src[head * dk..(head + 1) * dk]);
            }
        }
    }
    out
}

/// [B·h, L, dk] → [B, L, h·dk]
fn merge_heads(x: &[f64], b: usize, h: usize, l: usize, dk: usize) -> Vec<f64> {
    let d = h * dk;
    let mut out = vec![0.0; x.len()];
    for s in 0..b {
        for t in 0..l {
            let dst = &mut out[(s * l + t) * d..(s * l + t + 1) * d];
            for head in 0..h {
                let src = ((s * h + head) * l + t) * dk;
                dst[head * dk..(head + 1) * dk].copy_from_slice(&x[src..src + dk]);
            }
        }
    }
    out
}

fn same_shape(op: &'static str, tape: &Tape, a: Var, b: Var) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::shape(op, tape.shape(a), tape.shape(b)));
    }
    Ok(())
}

fn rank(op: &'static str, tape: &Tape, x: Var, r: usize) -> Result<()> {
    if tape.shape(x).len() != r {
        return Err(Error::contract(format!(
            "{op} expects a rank-{r} tensor, got shape {:?}",
            tape.shape(x)
        )));
    }
    Ok(())
}

impl Tape {
    /// Matrix product of a[m×k] and b[k×n].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm_nn(m, k, n, self.value(a), self.value(b), &mut out);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    /// Batched product: a[B×m×k] · b[B×k×n], or a · bᵀ per batch when
    /// `trans_b` (b is then B×n×k).
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let bad = || Error::shape("batch_matmul", sa, sb);
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(bad());
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; batch * m * n];
        for s in 0..batch {
            let as_ = &av[s * m * k..(s + 1) * m * k];
            let bs = &bv[s * k * n..(s + 1) * k * n];
            let os = &mut out[s * m * n..(s + 1) * m * n];
            if trans_b {
                gemm_nt(m, k, n, as_, bs, os);
            } else {
                gemm_nn(m, k, n, as_, bs, os);
            }
        }
        Ok(self.push(vec![batch, m, n], out, Op::BatchMatMul { a, b, trans_b }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        rank("transpose", self, x, 2)?;
        let (r, c) = dims2(self.shape(x));
        let out = super::kernels::transpose(r, c, self.value(x));
        Ok(self.push(vec![c, r], out, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(x), shape));
        }
        let v = self.value(x).to_vec();
        Ok(self.push(shape.to_vec(), v, Op::Reshape(x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self, a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self, a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Sub(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self, a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * s).collect();
        self.push(self.shape(x).to_vec(), out, Op::Scale(x, s))
    }

    /// Adds a bias vector along the last dimension. This is the only
    /// broadcasting operation on the tape.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let w = *self.shape(x).last().unwrap();
        if self.shape(bias).len() != 1 || self.shape(bias)[0] != w {
            return Err(Error::shape("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(w) {
            row.iter_mut().zip(b).for_each(|(o, bv)| *o += bv);
        }
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias(x, bias)))
    }

    /// Stacks `times` copies of a 2-D tensor along the first axis:
    /// [n×d] → [times·n × d].
    pub fn tile_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        rank("tile_rows", self, x, 2)?;
        if times == 0 {
            return Err(Error::contract("tile_rows needs times ≥ 1"));
        }
        let (n, d) = dims2(self.shape(x));
        let out = self.value(x).repeat(times);
        Ok(self.push(vec![times * n, d], out, Op::Tile(x)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        self.push(self.shape(x).to_vec(), out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(self.shape(x).to_vec(), out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push(self.shape(x).to_vec(), out, Op::Tanh(x))
    }

    /// Softmax over the last dimension with max subtraction.
    pub fn softmax_lastdim(&mut self, x: Var) -> Var {
        let w = *self.shape(x).last().unwrap();
        let out = softmax_rows(self.value(x), w);
        self.push(self.shape(x).to_vec(), out, Op::Softmax(x))
    }

    /// Adds a large negative bias to every disallowed position of the
    /// trailing [rows×cols] matrices of `x`.
    pub(crate) fn add_mask(&mut self, x: Var, allowed: &[bool], rows: usize, cols: usize) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() < 2 || shape[shape.len() - 2] != rows || shape[shape.len() - 1] != cols {
            return Err(Error::shape("mask", shape, &[rows, cols]));
        }
        let mut out = self.value(x).to_vec();
        for block in out.chunks_exact_mut(rows * cols) {
            for (v, ok) in block.iter_mut().zip(allowed) {
                if !ok {
                    *v += MASK_BIAS;
                }
            }
        }
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddMask(x)))
    }

    /// Normalizes each last-dimension slice to zero mean and unit variance,
    /// then applies `gain ⊙ y + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let w = *self.shape(x).last().unwrap();
        for p in [gain, bias] {
            if self.shape(p) != [w] {
                return Err(Error::shape("layer_norm", self.shape(x), self.shape(p)));
            }
        }
        let xv = self.value(x);
        let (gv, bv) = (self.value(gain), self.value(bias));
        let rows = xv.len() / w;
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let s = &xv[r * w..(r + 1) * w];
            let mean = s.iter().sum::<f64>() / w as f64;
            let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let inv = 1.0 / (var + eps).sqrt();
            rstd[r] = inv;
            for j in 0..w {
                let h = (s[j] - mean) * inv;
                xhat[r * w + j] = h;
                out[r * w + j] = gv[j] * h + bv[j];
            }
        }
        Ok(self.push(
            self.shape(x).to_vec(),
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Inverted dropout. Identity when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut JobRng) -> Result<Var> {
        check_dropout(p)?;
        if p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let keep: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
            .collect();
        let out = zip_map(self.value(x), &keep, |v, k| v * k);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Dropout { x, keep }))
    }

    /// [B, L, h·dk] → [B·h, L, dk]
    pub fn split_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        rank("split_heads", self, x, 3)?;
        let (b, l, d) = dims3(self.shape(x));
        if heads == 0 || d % heads != 0 {
            return Err(Error::config(format!("{heads} heads do not divide width {d}")));
        }
        let out = split_heads(self.value(x), b, heads, l, d / heads);
        Ok(self.push(vec![b * heads, l, d / heads], out, Op::SplitHeads { x, heads }))
    }

    /// [B·h, L, dk] → [B, L, h·dk]
    pub fn merge_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        rank("merge_heads", self, x, 3)?;
        let (bh, l, dk) = dims3(self.shape(x));
        if heads == 0 || bh % heads != 0 {
            return Err(Error::config(format!("{heads} heads do not divide batch {bh}")));
        }
        let out = merge_heads(self.value(x), bh / heads, heads, l, dk);
        Ok(self.push(vec![bh / heads, l, dk * heads], out, Op::MergeHeads { x, heads }))
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        rank("slice_cols", self, x, 2)?;
        let (rows, cols) = dims2(self.shape(x));
        if len == 0 || start + len > cols {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, len]));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv[r * cols + start..r * cols + start + len]);
        }
        Ok(self.push(vec![rows, len], out, Op::SliceCols { x, start }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push(vec![1], vec![s], Op::Mean(x))
    }

    /// mean(½(pred − target)²) over every element.
    pub fn mse_half(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape("mse_loss", self, pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let s = p.iter().zip(t).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        Ok(self.push(vec![1], vec![s], Op::MseHalf { pred, target }))
    }
}

pub(crate) fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!("dropout probability {p} outside [0, 1)")));
    }
    Ok(())
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

/// Whether a forward pass is training (dropout active) or evaluating.
pub struct ForwardCtx<'a> {
    rng: Option<&'a mut JobRng>,
}

impl<'a> ForwardCtx<'a> {
    pub fn train(rng: &'a mut JobRng) -> Self {
        ForwardCtx { rng: Some(rng) }
    }

    pub fn eval() -> Self {
        ForwardCtx { rng: None }
    }

    pub fn training(&self) -> bool {
        self.rng.is_some()
    }

    /// Applies dropout in training mode; identity otherwise.
    pub fn dropout(&mut self, tape: &mut Tape, x: Var, p: f64) -> Result<Var> {
        check_dropout(p)?;
        match self.rng.as_deref_mut() {
            Some(rng) => tape.dropout(x, p, rng),
            None => Ok(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_examples() {
        let mut t = Tape::new();
        let eye = t.leaf(&Tensor::eye(3).unwrap());
        let m: Vec<f64> = (0..9).map(f64::from).collect();
        let mv = t.constant(&[3, 3], m.clone()).unwrap();
        let out = t.matmul(eye, mv).unwrap();
        assert_eq!(t.value(out), &m[..]);

        let a = t.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = t.constant(&[2, 1], vec![0.0, 1.0]).unwrap();
        let out = t.matmul(a, b).unwrap();
        assert_eq!(t.value(out), &[2.0, 4.0]);
        assert_eq!(t.shape(out), &[2, 1]);

        let z = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let any = t.constant(&[3, 4], (0..12).map(f64::from).collect()).unwrap();
        let out = t.matmul(z, any).unwrap();
        assert_eq!(t.value(out), &[0.0; 8]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let b = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let msg = t.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_backward_rule() {
        let mut t = Tape::new();
        let a = t.variable(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = t.variable(&[2, 1], vec![3.0, 4.0]).unwrap();
        let y = t.matmul(a, b).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap(), &[3.0, 4.0]);
        assert_eq!(g.get(b).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let x = t.constant(&[3], vec![0.0; 3]).unwrap();
        let y = t.softmax_lastdim(x);
        assert!(close(t.value(y), &[1.0 / 3.0; 3], 1e-15));

        let x = t.constant(&[2], vec![2f64.ln(), 0.0]).unwrap();
        let y = t.softmax_lastdim(x);
        assert!(close(t.value(y), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));

        let x = t.constant(&[2], vec![1000.0, 0.0]).unwrap();
        let y = t.softmax_lastdim(x);
        let v = t.value(y);
        assert!(v.iter().all(|p| p.is_finite()));
        // exp(-1000) is below the smallest subnormal, so the tail is exactly 0.
        assert_eq!(v, &[1.0, 0.0]);
    }

    #[test]
    fn layer_norm_examples() {
        let mut t = Tape::new();
        let gain = t.constant(&[4], vec![1.0; 4]).unwrap();
        let bias = t.constant(&[4], vec![0.0; 4]).unwrap();
        let x = t.constant(&[1, 4], vec![5.0; 4]).unwrap();
        let y = t.layer_norm(x, gain, bias, 1e-5).unwrap();
        assert_eq!(t.value(y), &[0.0; 4]);

        let gain = t.constant(&[2], vec![1.0; 2]).unwrap();
        let bias = t.constant(&[2], vec![0.0; 2]).unwrap();
        let x = t.constant(&[1, 2], vec![1.0, -1.0]).unwrap();
        let y = t.layer_norm(x, gain, bias, 1e-5).unwrap();
        // mean 0, variance 1: 1/sqrt(1 + 1e-5)
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!(close(t.value(y), &[expect, -expect], 1e-15));

        let gain = t.constant(&[3], vec![0.0; 3]).unwrap();
        let bias = t.constant(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let x = t.constant(&[2, 3], vec![1.0, 7.0, -2.0, 0.3, 0.1, 9.0]).unwrap();
        let y = t.layer_norm(x, gain, bias, 1e-5).unwrap();
        assert_eq!(t.value(y), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn layer_norm_moments() {
        let mut t = Tape::new();
        let gain = t.constant(&[5], vec![1.0; 5]).unwrap();
        let bias = t.constant(&[5], vec![0.0; 5]).unwrap();
        let x = t.constant(&[1, 5], vec![3.0, -1.5, 0.2, 8.0, 2.2]).unwrap();
        let y = t.layer_norm(x, gain, bias, 1e-12).unwrap();
        let v = t.value(y);
        let mean = v.iter().sum::<f64>() / 5.0;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn relu_forward_and_gate() {
        let mut t = Tape::new();
        let x = t.variable(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = t.relu(x);
        assert_eq!(t.value(y), &[0.0, 0.0, 2.0]);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        // subgradient 0 at exactly 0
        assert_eq!(g.get(x).unwrap(), &[0.0, 0.0, 1.0]);

        let x = t.variable(&[2], vec![-1.0, 2.0]).unwrap();
        let y = t.relu(x);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[0.0, 1.0]);

        let x = t.constant(&[3], vec![-1.0, -0.5, -3.0]).unwrap();
        let y = t.relu(x);
        assert_eq!(t.value(y), &[0.0; 3]);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = JobRng::seed_from_u64(1);
        let mut t = Tape::new();
        let x = t.constant(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.dropout(x, 0.0, &mut rng).unwrap(), x);
        assert!(t.dropout(x, 1.0, &mut rng).is_err());
        assert!(t.dropout(x, -0.1, &mut rng).is_err());
        let mut ctx = ForwardCtx::eval();
        assert_eq!(ctx.dropout(&mut t, x, 0.5).unwrap(), x);
        assert!(ctx.dropout(&mut t, x, 1.5).is_err());
    }

    #[test]
    fn dropout_statistics() {
        let n = 100_000;
        let mut rng = JobRng::seed_from_u64(42);
        let mut t = Tape::new();
        let x = t.constant(&[n], vec![1.0; n]).unwrap();
        let y = t.dropout(x, 0.5, &mut rng).unwrap();
        let v = t.value(y);
        let survivors = v.iter().filter(|&&a| a != 0.0).count() as f64 / n as f64;
        let mean = v.iter().sum::<f64>() / n as f64;
        assert!((survivors - 0.5).abs() < 0.01, "survivor fraction {survivors}");
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(v.iter().all(|&a| a == 0.0 || a == 2.0));
    }

    #[test]
    fn backward_examples() {
        let mut t = Tape::new();
        let x = t.variable(&[3], vec![0.3, -2.0, 5.0]).unwrap();
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 1.0, 1.0]);

        let x = t.variable(&[1], vec![2.0]).unwrap();
        let w = t.variable(&[1], vec![3.0]).unwrap();
        let p = t.mul(x, w).unwrap();
        let g = t.backward(p).unwrap();
        assert_eq!(g.get(w).unwrap(), &[2.0]);
        assert_eq!(g.get(x).unwrap(), &[3.0]);

        assert!(t.backward(x).is_ok());
        let v = t.variable(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(t.backward(v), Err(Error::Contract(_))));
    }

    #[test]
    fn gradients_skip_constants() {
        let mut t = Tape::new();
        let c = t.constant(&[2], vec![1.0, 2.0]).unwrap();
        let x = t.variable(&[2], vec![3.0, 4.0]).unwrap();
        let y = t.mul(c, x).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn split_merge_heads_roundtrip() {
        let mut t = Tape::new();
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let x = t.constant(&[2, 3, 4], data.clone()).unwrap();
        let s = t.split_heads(x, 2).unwrap();
        assert_eq!(t.shape(s), &[4, 3, 2]);
        // batch 0, head 1, time 0 holds columns 2..4 of row 0
        assert_eq!(&t.value(s)[6..8], &[2.0, 3.0]);
        let m = t.merge_heads(s, 2).unwrap();
        assert_eq!(t.value(m), &data[..]);
        assert!(t.split_heads(x, 3).is_err());
    }

    #[test]
    fn batch_matmul_matches_per_slice_matmul() {
        let mut t = Tape::new();
        let a: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect();
        let b: Vec<f64> = (0..12).map(|v| (v as f64).cos()).collect();
        let av = t.constant(&[2, 2, 3], a.clone()).unwrap();
        let bv = t.constant(&[2, 3, 2], b.clone()).unwrap();
        let out = t.batch_matmul(av, bv, false).unwrap();
        for s in 0..2 {
            let a2 = t.constant(&[2, 3], a[s * 6..(s + 1) * 6].to_vec()).unwrap();
            let b2 = t.constant(&[3, 2], b[s * 6..(s + 1) * 6].to_vec()).unwrap();
            let o2 = t.matmul(a2, b2).unwrap();
            assert_eq!(&t.value(out)[s * 4..(s + 1) * 4], t.value(o2));
        }
        let bt = t.constant(&[2, 2, 3], b.clone()).unwrap();
        let out = t.batch_matmul(av, bt, true).unwrap();
        assert_eq!(t.shape(out), &[2, 2, 2]);
        assert!(t.batch_matmul(av, av, false).is_err());
    }
}
