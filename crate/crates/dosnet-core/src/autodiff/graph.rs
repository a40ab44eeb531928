//! Tape-based reverse-mode differentiation over the closed op set the
//! network needs: circular convolutions (1D/2D, real or complex), dense
//! square layers, the PDE-derived activations, ReLU, sign alignment,
//! spatial cropping, and a mean-square loss.
//!
//! Complex tensors follow the split real/imaginary convention: the loss is
//! always a real scalar, and the gradient stored for a complex tensor is
//! the pair of partial derivatives with respect to its real and imaginary
//! parts. Backward visits each node exactly once in reverse tape order.

use num_complex::Complex64;

use super::conv;
use super::tensor::{Tensor, TensorData};
use crate::error::{DosnetError, Result};
use crate::pde;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Elementwise nonlinearity applied by [`Graph::activation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActKind {
    /// Exact Allen-Cahn reaction flow over time `tau` (real input).
    AcFlow,
    /// Kerr phase rotation over distance `tau` (complex input); the phase
    /// coefficient is `sign * gamma * tau * |u|^2` with `sign = -1` for
    /// backward propagation.
    NlsePhase { gamma: f64, backward: bool },
    /// Rectified linear unit (real input); the flow time is ignored.
    Relu,
}

/// Flow-time argument of an activation: a fixed constant or a learnable
/// scalar node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauInput {
    Const(f64),
    Node(NodeId),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv1d { x: NodeId, k: NodeId },
    Conv2d { x: NodeId, k: NodeId },
    Dense { x: NodeId, w: NodeId },
    Act { x: NodeId, kind: ActKind, tau: TauInput },
    SignAlign { cur: NodeId, signs: Vec<f64> },
    Crop1d { x: NodeId, start: usize, len: usize },
    Mse { pred: NodeId, target: Tensor },
    ScalarAdd { a: NodeId, b: NodeId },
    ScalarScale { x: NodeId, c: f64 },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    trainable: bool,
}

/// The computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op, trainable: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Non-trainable leaf (network input or constant).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf (parameter).
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated on `id`, if backward reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Gradient on `id`, or zeros when unreachable from the loss.
    pub fn grad_or_zeros(&self, id: NodeId) -> Tensor {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => Tensor::zeros_like(&self.nodes[id.0].value),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    // -- op builders ----------------------------------------------------

    /// Circular 1D convolution: input `[B, Cin, N]`, kernel `[Cout, Cin, K]`
    /// with odd `K <= N`, output `[B, Cout, N]`.
    pub fn conv1d(&mut self, x: NodeId, k: NodeId) -> Result<NodeId> {
        let (xs, ks) = (self.value(x), self.value(k));
        if xs.shape().len() != 3 || ks.shape().len() != 3 {
            return Err(DosnetError::dim("conv1d expects [B,C,N] and [O,C,K]"));
        }
        let (b, cin, n) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
        let (cout, kc, ksize) = (ks.shape()[0], ks.shape()[1], ks.shape()[2]);
        if kc != cin {
            return Err(DosnetError::dim(format!(
                "conv1d channel mismatch: input {}, kernel {}",
                cin, kc
            )));
        }
        if ksize % 2 == 0 {
            return Err(DosnetError::arg("conv1d kernel size must be odd"));
        }
        if ksize > n {
            return Err(DosnetError::dim("conv1d kernel larger than signal"));
        }
        if xs.dtype() != ks.dtype() {
            return Err(DosnetError::DtypeMismatch("conv1d dtype mismatch".into()));
        }
        let out_shape = vec![b, cout, n];
        let value = match (xs.data(), ks.data()) {
            (TensorData::Real(xv), TensorData::Real(kv)) => {
                let mut out = vec![0.0; b * cout * n];
                conv::conv1d_forward(xv, kv, &mut out, b, cin, cout, n, ksize);
                Tensor::new_real(out_shape, out)?
            }
            (TensorData::Complex(xv), TensorData::Complex(kv)) => {
                let mut out = vec![Complex64::new(0.0, 0.0); b * cout * n];
                if conv::use_fft_path(n, ksize) {
                    conv::conv1d_forward_fft(xv, kv, &mut out, b, cin, cout, n, ksize);
                } else {
                    conv::conv1d_forward(xv, kv, &mut out, b, cin, cout, n, ksize);
                }
                Tensor::new_complex(out_shape, out)?
            }
            _ => unreachable!("dtype checked above"),
        };
        Ok(self.push(value, Op::Conv1d { x, k }, false))
    }

    /// Circular 2D convolution: input `[B, Cin, H, W]`, kernel
    /// `[Cout, Cin, Kh, Kw]` with odd kernel sides.
    pub fn conv2d(&mut self, x: NodeId, k: NodeId) -> Result<NodeId> {
        let (xs, ks) = (self.value(x), self.value(k));
        if xs.shape().len() != 4 || ks.shape().len() != 4 {
            return Err(DosnetError::dim("conv2d expects [B,C,H,W] and [O,C,Kh,Kw]"));
        }
        let (b, cin, h, w) = (
            xs.shape()[0],
            xs.shape()[1],
            xs.shape()[2],
            xs.shape()[3],
        );
        let (cout, kc, kh, kw) = (
            ks.shape()[0],
            ks.shape()[1],
            ks.shape()[2],
            ks.shape()[3],
        );
        if kc != cin {
            return Err(DosnetError::dim("conv2d channel mismatch"));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(DosnetError::arg("conv2d kernel sides must be odd"));
        }
        if kh > h || kw > w {
            return Err(DosnetError::dim("conv2d kernel larger than field"));
        }
        if xs.dtype() != ks.dtype() {
            return Err(DosnetError::DtypeMismatch("conv2d dtype mismatch".into()));
        }
        let out_shape = vec![b, cout, h, w];
        let value = match (xs.data(), ks.data()) {
            (TensorData::Real(xv), TensorData::Real(kv)) => {
                let mut out = vec![0.0; b * cout * h * w];
                conv::conv2d_forward(xv, kv, &mut out, b, cin, cout, (h, w), (kh, kw));
                Tensor::new_real(out_shape, out)?
            }
            (TensorData::Complex(xv), TensorData::Complex(kv)) => {
                let mut out = vec![Complex64::new(0.0, 0.0); b * cout * h * w];
                conv::conv2d_forward(xv, kv, &mut out, b, cin, cout, (h, w), (kh, kw));
                Tensor::new_complex(out_shape, out)?
            }
            _ => unreachable!("dtype checked above"),
        };
        Ok(self.push(value, Op::Conv2d { x, k }, false))
    }

    /// Dense square layer along the last axis: input `[B, C, N]`, weight
    /// `[N, N]`.
    pub fn dense(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (xs, ws) = (self.value(x), self.value(w));
        if xs.shape().len() != 3 || ws.shape().len() != 2 {
            return Err(DosnetError::dim("dense expects [B,C,N] and [N,N]"));
        }
        let n = xs.shape()[2];
        if ws.shape() != [n, n] {
            return Err(DosnetError::dim("dense weight must be square of size N"));
        }
        if xs.dtype() != ws.dtype() {
            return Err(DosnetError::DtypeMismatch("dense dtype mismatch".into()));
        }
        let rows = xs.shape()[0] * xs.shape()[1];
        let shape = xs.shape().to_vec();
        let value = match (xs.data(), ws.data()) {
            (TensorData::Real(xv), TensorData::Real(wv)) => {
                let mut out = vec![0.0; rows * n];
                conv::dense_forward(xv, wv, &mut out, rows, n);
                Tensor::new_real(shape, out)?
            }
            (TensorData::Complex(xv), TensorData::Complex(wv)) => {
                let mut out = vec![Complex64::new(0.0, 0.0); rows * n];
                conv::dense_forward(xv, wv, &mut out, rows, n);
                Tensor::new_complex(shape, out)?
            }
            _ => unreachable!("dtype checked above"),
        };
        Ok(self.push(value, Op::Dense { x, w }, false))
    }

    /// Elementwise activation; see [`ActKind`] for dtype requirements.
    pub fn activation(&mut self, x: NodeId, kind: ActKind, tau: TauInput) -> Result<NodeId> {
        let tau_val = self.tau_value(tau)?;
        let xs = self.value(x);
        let value = match (kind, xs.data()) {
            (ActKind::AcFlow, TensorData::Real(v)) => Tensor::new_real(
                xs.shape().to_vec(),
                v.iter().map(|&u| pde::ac_flow(u, tau_val)).collect(),
            )?,
            (ActKind::Relu, TensorData::Real(v)) => Tensor::new_real(
                xs.shape().to_vec(),
                v.iter().map(|&u| u.max(0.0)).collect(),
            )?,
            (ActKind::NlsePhase { gamma, backward }, TensorData::Complex(v)) => {
                let c = phase_coeff(gamma, backward, tau_val);
                Tensor::new_complex(
                    xs.shape().to_vec(),
                    v.iter().map(|&z| pde::nlse_phase(z, c)).collect(),
                )?
            }
            (ActKind::AcFlow, _) | (ActKind::Relu, _) => {
                return Err(DosnetError::DtypeMismatch(
                    "activation needs a real input".into(),
                ))
            }
            (ActKind::NlsePhase { .. }, _) => {
                return Err(DosnetError::DtypeMismatch(
                    "phase rotation needs a complex input".into(),
                ))
            }
        };
        Ok(self.push(value, Op::Act { x, kind, tau }, false))
    }

    /// Per-batch-item sign alignment of `cur` against `prev`:
    /// `cur * sign(mean(prev dot cur))` with `sign(0) = +1`. Real only;
    /// the sign is treated as a constant in backward, so no gradient
    /// reaches `prev`.
    pub fn sign_align(&mut self, prev: NodeId, cur: NodeId) -> Result<NodeId> {
        let (pv, cv) = (self.value(prev), self.value(cur));
        if pv.shape() != cv.shape() {
            return Err(DosnetError::dim("sign_align shape mismatch"));
        }
        let (p, c) = match (pv.data(), cv.data()) {
            (TensorData::Real(p), TensorData::Real(c)) => (p, c),
            _ => {
                return Err(DosnetError::DtypeMismatch(
                    "sign_align needs real tensors".into(),
                ))
            }
        };
        let batch = pv.shape()[0];
        let per = pv.numel() / batch;
        let mut signs = Vec::with_capacity(batch);
        let mut out = vec![0.0; c.len()];
        for b in 0..batch {
            let dot: f64 = p[b * per..(b + 1) * per]
                .iter()
                .zip(&c[b * per..(b + 1) * per])
                .map(|(a, b)| a * b)
                .sum();
            let s = if dot / (per as f64) < 0.0 { -1.0 } else { 1.0 };
            signs.push(s);
            for i in 0..per {
                out[b * per + i] = s * c[b * per + i];
            }
        }
        let value = Tensor::new_real(cv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::SignAlign { cur, signs }, false))
    }

    /// Spatial crop of a 1D signal: keeps `[start, start + len)`.
    pub fn crop1d(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xs = self.value(x);
        if xs.shape().len() != 3 {
            return Err(DosnetError::dim("crop1d expects [B,C,N]"));
        }
        let (b, c, n) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
        if start + len > n {
            return Err(DosnetError::dim("crop window out of range"));
        }
        let shape = vec![b, c, len];
        let value = match xs.data() {
            TensorData::Real(v) => {
                let mut out = Vec::with_capacity(b * c * len);
                for row in 0..b * c {
                    out.extend_from_slice(&v[row * n + start..row * n + start + len]);
                }
                Tensor::new_real(shape, out)?
            }
            TensorData::Complex(v) => {
                let mut out = Vec::with_capacity(b * c * len);
                for row in 0..b * c {
                    out.extend_from_slice(&v[row * n + start..row * n + start + len]);
                }
                Tensor::new_complex(shape, out)?
            }
        };
        Ok(self.push(value, Op::Crop1d { x, start, len }, false))
    }

    /// Mean squared error against a constant target, averaged over all
    /// real scalar components (a complex element contributes two).
    pub fn mse_loss(&mut self, pred: NodeId, target: &Tensor) -> Result<NodeId> {
        let ps = self.value(pred);
        if ps.shape() != target.shape() || ps.dtype() != target.dtype() {
            return Err(DosnetError::dim("mse_loss shape/dtype mismatch"));
        }
        let n = ps.real_scalar_count() as f64;
        let sum = match (ps.data(), target.data()) {
            (TensorData::Real(a), TensorData::Real(b)) => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>(),
            (TensorData::Complex(a), TensorData::Complex(b)) => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>(),
            _ => unreachable!("dtype checked above"),
        };
        let value = Tensor::scalar(sum / n);
        Ok(self.push(
            value,
            Op::Mse {
                pred,
                target: target.clone(),
            },
            false,
        ))
    }

    /// Sum of two real scalar nodes.
    pub fn scalar_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a).scalar_value()?, self.value(b).scalar_value()?);
        Ok(self.push(Tensor::scalar(av + bv), Op::ScalarAdd { a, b }, false))
    }

    /// Real scalar node scaled by a constant.
    pub fn scalar_scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(x).scalar_value()?;
        Ok(self.push(Tensor::scalar(c * v), Op::ScalarScale { x, c }, false))
    }

    fn tau_value(&self, tau: TauInput) -> Result<f64> {
        match tau {
            TauInput::Const(v) => Ok(v),
            TauInput::Node(id) => self.value(id).scalar_value(),
        }
    }

    // -- backward --------------------------------------------------------

    /// Reverse pass from a real scalar loss. Populates gradients on every
    /// node reachable from `loss`; unreachable nodes keep `None` (read as
    /// zeros through [`Graph::grad_or_zeros`]).
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(DosnetError::DtypeMismatch(
                "backward needs a real scalar loss".into(),
            ));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.clone() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Conv1d { x, k } => self.backward_conv1d(i, x, k, &g)?,
                Op::Conv2d { x, k } => self.backward_conv2d(i, x, k, &g)?,
                Op::Dense { x, w } => self.backward_dense(x, w, &g)?,
                Op::Act { x, kind, tau } => self.backward_act(i, x, kind, tau, &g)?,
                Op::SignAlign { cur, signs } => {
                    let gv = g.as_real().expect("sign_align is real");
                    let per = g.numel() / signs.len();
                    let mut gc = vec![0.0; gv.len()];
                    for (b, &s) in signs.iter().enumerate() {
                        for j in 0..per {
                            gc[b * per + j] = s * gv[b * per + j];
                        }
                    }
                    let t = Tensor::new_real(g.shape().to_vec(), gc)?;
                    self.accumulate(cur, t)?;
                }
                Op::Crop1d { x, start, len } => {
                    let xs = self.value(x);
                    let (b, c, n) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
                    let mut gx = Tensor::zeros_like(xs);
                    match (g.data(), &mut gx) {
                        (TensorData::Real(gv), t) => {
                            let tv = t.as_real_mut().unwrap();
                            for row in 0..b * c {
                                tv[row * n + start..row * n + start + len]
                                    .copy_from_slice(&gv[row * len..(row + 1) * len]);
                            }
                        }
                        (TensorData::Complex(gv), t) => {
                            let tv = t.as_complex_mut().unwrap();
                            for row in 0..b * c {
                                tv[row * n + start..row * n + start + len]
                                    .copy_from_slice(&gv[row * len..(row + 1) * len]);
                            }
                        }
                    }
                    self.accumulate(x, gx)?;
                }
                Op::Mse { pred, target } => {
                    let upstream = g.scalar_value()?;
                    let ps = self.value(pred);
                    let scale = 2.0 * upstream / ps.real_scalar_count() as f64;
                    let gp = match (ps.data(), target.data()) {
                        (TensorData::Real(a), TensorData::Real(b)) => Tensor::new_real(
                            ps.shape().to_vec(),
                            a.iter().zip(b).map(|(x, y)| scale * (x - y)).collect(),
                        )?,
                        (TensorData::Complex(a), TensorData::Complex(b)) => Tensor::new_complex(
                            ps.shape().to_vec(),
                            a.iter().zip(b).map(|(x, y)| scale * (x - y)).collect(),
                        )?,
                        _ => unreachable!("checked at construction"),
                    };
                    self.accumulate(pred, gp)?;
                }
                Op::ScalarAdd { a, b } => {
                    self.accumulate(a, g.clone())?;
                    self.accumulate(b, g)?;
                }
                Op::ScalarScale { x, c } => {
                    let v = g.scalar_value()?;
                    self.accumulate(x, Tensor::scalar(c * v))?;
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor) -> Result<()> {
        match &mut self.nodes[id.0].grad {
            Some(g) => g.add_assign(&delta),
            slot @ None => {
                *slot = Some(delta);
                Ok(())
            }
        }
    }

    fn backward_conv1d(&mut self, _out: usize, x: NodeId, k: NodeId, g: &Tensor) -> Result<()> {
        let xs = self.value(x);
        let ks = self.value(k);
        let (b, cin, n) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
        let (cout, ksize) = (ks.shape()[0], ks.shape()[2]);
        let (gx, gk) = match (xs.data(), ks.data(), g.data()) {
            (TensorData::Real(xv), TensorData::Real(kv), TensorData::Real(gv)) => {
                let mut gx = vec![0.0; xv.len()];
                let mut gk = vec![0.0; kv.len()];
                conv::conv1d_backward_input(gv, kv, &mut gx, b, cin, cout, n, ksize);
                conv::conv1d_backward_kernel(xv, gv, &mut gk, b, cin, cout, n, ksize);
                (
                    Tensor::new_real(xs.shape().to_vec(), gx)?,
                    Tensor::new_real(ks.shape().to_vec(), gk)?,
                )
            }
            (TensorData::Complex(xv), TensorData::Complex(kv), TensorData::Complex(gv)) => {
                let mut gx = vec![Complex64::new(0.0, 0.0); xv.len()];
                let mut gk = vec![Complex64::new(0.0, 0.0); kv.len()];
                if conv::use_fft_path(n, ksize) {
                    conv::conv1d_backward_input_fft(gv, kv, &mut gx, b, cin, cout, n, ksize);
                    conv::conv1d_backward_kernel_fft(xv, gv, &mut gk, b, cin, cout, n, ksize);
                } else {
                    conv::conv1d_backward_input(gv, kv, &mut gx, b, cin, cout, n, ksize);
                    conv::conv1d_backward_kernel(xv, gv, &mut gk, b, cin, cout, n, ksize);
                }
                (
                    Tensor::new_complex(xs.shape().to_vec(), gx)?,
                    Tensor::new_complex(ks.shape().to_vec(), gk)?,
                )
            }
            _ => unreachable!("dtypes checked at construction"),
        };
        self.accumulate(x, gx)?;
        self.accumulate(k, gk)
    }

    fn backward_conv2d(&mut self, _out: usize, x: NodeId, k: NodeId, g: &Tensor) -> Result<()> {
        let xs = self.value(x);
        let ks = self.value(k);
        let (b, cin, h, w) = (
            xs.shape()[0],
            xs.shape()[1],
            xs.shape()[2],
            xs.shape()[3],
        );
        let (cout, kh, kw) = (ks.shape()[0], ks.shape()[2], ks.shape()[3]);
        let (gx, gk) = match (xs.data(), ks.data(), g.data()) {
            (TensorData::Real(xv), TensorData::Real(kv), TensorData::Real(gv)) => {
                let mut gx = vec![0.0; xv.len()];
                let mut gk = vec![0.0; kv.len()];
                conv::conv2d_backward_input(gv, kv, &mut gx, b, cin, cout, (h, w), (kh, kw));
                conv::conv2d_backward_kernel(xv, gv, &mut gk, b, cin, cout, (h, w), (kh, kw));
                (
                    Tensor::new_real(xs.shape().to_vec(), gx)?,
                    Tensor::new_real(ks.shape().to_vec(), gk)?,
                )
            }
            (TensorData::Complex(xv), TensorData::Complex(kv), TensorData::Complex(gv)) => {
                let mut gx = vec![Complex64::new(0.0, 0.0); xv.len()];
                let mut gk = vec![Complex64::new(0.0, 0.0); kv.len()];
                conv::conv2d_backward_input(gv, kv, &mut gx, b, cin, cout, (h, w), (kh, kw));
                conv::conv2d_backward_kernel(xv, gv, &mut gk, b, cin, cout, (h, w), (kh, kw));
                (
                    Tensor::new_complex(xs.shape().to_vec(), gx)?,
                    Tensor::new_complex(ks.shape().to_vec(), gk)?,
                )
            }
            _ => unreachable!("dtypes checked at construction"),
        };
        self.accumulate(x, gx)?;
        self.accumulate(k, gk)
    }

    fn backward_dense(&mut self, x: NodeId, w: NodeId, g: &Tensor) -> Result<()> {
        let xs = self.value(x);
        let ws = self.value(w);
        let n = ws.shape()[0];
        let rows = xs.shape()[0] * xs.shape()[1];
        let (gx, gw) = match (xs.data(), ws.data(), g.data()) {
            (TensorData::Real(xv), TensorData::Real(wv), TensorData::Real(gv)) => {
                let mut gx = vec![0.0; xv.len()];
                let mut gw = vec![0.0; wv.len()];
                conv::dense_backward_input(gv, wv, &mut gx, rows, n);
                conv::dense_backward_weight(xv, gv, &mut gw, rows, n);
                (
                    Tensor::new_real(xs.shape().to_vec(), gx)?,
                    Tensor::new_real(ws.shape().to_vec(), gw)?,
                )
            }
            (TensorData::Complex(xv), TensorData::Complex(wv), TensorData::Complex(gv)) => {
                let mut gx = vec![Complex64::new(0.0, 0.0); xv.len()];
                let mut gw = vec![Complex64::new(0.0, 0.0); wv.len()];
                conv::dense_backward_input(gv, wv, &mut gx, rows, n);
                conv::dense_backward_weight(xv, gv, &mut gw, rows, n);
                (
                    Tensor::new_complex(xs.shape().to_vec(), gx)?,
                    Tensor::new_complex(ws.shape().to_vec(), gw)?,
                )
            }
            _ => unreachable!("dtypes checked at construction"),
        };
        self.accumulate(x, gx)?;
        self.accumulate(w, gw)
    }

    fn backward_act(
        &mut self,
        out: usize,
        x: NodeId,
        kind: ActKind,
        tau: TauInput,
        g: &Tensor,
    ) -> Result<()> {
        let tau_val = self.tau_value(tau)?;
        let xs = self.value(x);
        let (gx, gtau): (Tensor, Option<f64>) = match kind {
            ActKind::AcFlow => {
                let xv = xs.as_real().expect("checked at construction");
                let gv = g.as_real().expect("real grad");
                let gx: Vec<f64> = xv
                    .iter()
                    .zip(gv)
                    .map(|(&u, &gu)| gu * pde::ac_flow_du(u, tau_val))
                    .collect();
                let gt: f64 = xv
                    .iter()
                    .zip(gv)
                    .map(|(&u, &gu)| gu * pde::ac_flow_dtau(u, tau_val))
                    .sum();
                (Tensor::new_real(xs.shape().to_vec(), gx)?, Some(gt))
            }
            ActKind::Relu => {
                let xv = xs.as_real().expect("checked at construction");
                let gv = g.as_real().expect("real grad");
                let gx: Vec<f64> = xv
                    .iter()
                    .zip(gv)
                    .map(|(&u, &gu)| if u > 0.0 { gu } else { 0.0 })
                    .collect();
                (Tensor::new_real(xs.shape().to_vec(), gx)?, None)
            }
            ActKind::NlsePhase { gamma, backward } => {
                let signed_gamma = if backward { -gamma } else { gamma };
                let c = signed_gamma * tau_val;
                let xv = xs.as_complex().expect("checked at construction");
                let yv = self.nodes[out].value.as_complex().expect("complex out");
                let gv = g.as_complex().expect("complex grad");
                let mut gx = Vec::with_capacity(xv.len());
                let mut gtau_sum = 0.0;
                for ((&z, &y), &gz) in xv.iter().zip(yv).zip(gv) {
                    let r2 = z.norm_sqr();
                    let phase = Complex64::new(0.0, c * r2).exp();
                    let im_part = y.re * gz.im - y.im * gz.re; // Im(conj(y) g)
                    gx.push(phase.conj() * gz + 2.0 * c * im_part * z);
                    gtau_sum += signed_gamma * r2 * im_part;
                }
                (
                    Tensor::new_complex(xs.shape().to_vec(), gx)?,
                    Some(gtau_sum),
                )
            }
        };
        if let (TauInput::Node(tid), Some(gt)) = (tau, gtau) {
            self.accumulate(tid, Tensor::scalar(gt))?;
        }
        self.accumulate(x, gx)
    }
}

fn phase_coeff(gamma: f64, backward: bool, tau: f64) -> f64 {
    let sign = if backward { -1.0 } else { 1.0 };
    sign * gamma * tau
}

impl Graph {
    pub fn is_trainable(&self, id: NodeId) -> bool {
        self.nodes[id.0].trainable
    }

    /// Trainable leaves in tape order.
    pub fn trainable_leaves(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.trainable)
            .map(|(i, _)| NodeId(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::DType;

    #[test]
    fn square_loss_gradient() {
        // loss = x^2 at x = 3 via mse against zero
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let loss = g.mse_loss(x, &Tensor::scalar(0.0)).unwrap();
        assert!((g.value(loss).scalar_value().unwrap() - 9.0).abs() < 1e-12);
        g.backward(loss).unwrap();
        let grad = g.grad(x).unwrap().scalar_value().unwrap();
        assert!((grad - 6.0).abs() < 1e-12);
    }

    #[test]
    fn identity_conv_with_ac_activation_keeps_fixed_points() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new_real(vec![1, 1, 4], vec![1.0, -1.0, 1.0, -1.0]).unwrap());
        let k = g.param(Tensor::new_real(vec![1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap());
        let c = g.conv1d(x, k).unwrap();
        let a = g
            .activation(c, ActKind::AcFlow, TauInput::Const(0.8))
            .unwrap();
        assert_eq!(
            g.value(a).as_real().unwrap(),
            &[1.0, -1.0, 1.0, -1.0]
        );
    }

    #[test]
    fn relu_zeroes_negatives() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new_real(vec![1, 1, 3], vec![-2.0, 0.5, 0.0]).unwrap());
        let a = g.activation(x, ActKind::Relu, TauInput::Const(0.0)).unwrap();
        assert_eq!(g.value(a).as_real().unwrap(), &[0.0, 0.5, 0.0]);
    }

    #[test]
    fn even_kernel_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(vec![1, 1, 8], DType::Real));
        let k = g.param(Tensor::zeros(vec![1, 1, 4], DType::Real));
        assert!(g.conv1d(x, k).is_err());
    }

    #[test]
    fn unreachable_params_read_as_zero_grad() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let unused = g.param(Tensor::scalar(5.0));
        let loss = g.mse_loss(x, &Tensor::scalar(0.0)).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(unused).is_none());
        assert_eq!(g.grad_or_zeros(unused).scalar_value().unwrap(), 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(vec![1, 1, 4], DType::Real));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        // grad(a*f + b*g) = a*grad(f) + b*grad(g)
        let build = |ga: f64, gb: f64| -> (f64, f64) {
            let mut g = Graph::new();
            let x = g.param(Tensor::scalar(1.7));
            let f = g.mse_loss(x, &Tensor::scalar(0.0)).unwrap(); // x^2
            let h = g.mse_loss(x, &Tensor::scalar(5.0)).unwrap(); // (x-5)^2
            let sf = g.scalar_scale(f, ga).unwrap();
            let sh = g.scalar_scale(h, gb).unwrap();
            let loss = g.scalar_add(sf, sh).unwrap();
            g.backward(loss).unwrap();
            (
                g.value(loss).scalar_value().unwrap(),
                g.grad(x).unwrap().scalar_value().unwrap(),
            )
        };
        let (_, gf) = build(1.0, 0.0);
        let (_, gh) = build(0.0, 1.0);
        let (_, gmix) = build(2.0, -3.0);
        assert!((gmix - (2.0 * gf - 3.0 * gh)).abs() < 1e-12);
    }

    #[test]
    fn sign_align_flips_anticorrelated_items() {
        let mut g = Graph::new();
        let prev = g.input(Tensor::new_real(vec![2, 1, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap());
        let cur = g.input(Tensor::new_real(vec![2, 1, 2], vec![1.0, 2.0, -1.0, -2.0]).unwrap());
        let out = g.sign_align(prev, cur).unwrap();
        assert_eq!(g.value(out).as_real().unwrap(), &[1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn sign_align_treats_zero_dot_as_positive() {
        let mut g = Graph::new();
        let prev = g.input(Tensor::new_real(vec![1, 1, 2], vec![1.0, -1.0]).unwrap());
        let cur = g.input(Tensor::new_real(vec![1, 1, 2], vec![1.0, 1.0]).unwrap());
        let out = g.sign_align(prev, cur).unwrap();
        assert_eq!(g.value(out).as_real().unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn crop_backward_scatters() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new_real(vec![1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let c = g.crop1d(x, 1, 2).unwrap();
        assert_eq!(g.value(c).as_real().unwrap(), &[2.0, 3.0]);
        let loss = g.mse_loss(c, &Tensor::new_real(vec![1, 1, 2], vec![0.0, 0.0]).unwrap()).unwrap();
        g.backward(loss).unwrap();
        let gx = g.grad(x).unwrap().as_real().unwrap().to_vec();
        assert_eq!(gx[0], 0.0);
        assert!((gx[1] - 2.0).abs() < 1e-12);
        assert!((gx[2] - 3.0).abs() < 1e-12);
        assert_eq!(gx[3], 0.0);
    }
}
