//! The learnable architecture: operator splitting blocks composed into an
//! autonomous-flow network, the baseline DNN configuration, weight
//! initialization, the unitary variant, sign alignment, parameter
//! counting, and the training loop.
//!
//! A block maps a state to a state of the same shape (composability of
//! the flow), and is a short chain of circular convolutions or dense
//! layers interleaved with activations derived from the PDE's exact
//! nonlinear sub-flow. Convolutions carry no bias terms.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{
    batch_loss, dataset_loss, train, EpochStats, TrainConfig, TrainOutcome, TrainSamples,
    VecSamples,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ActKind, DType, Graph, NodeId, TauInput, Tensor};
use crate::error::{DosnetError, Result};
use crate::field::Field;
use crate::rng::SeedRng;

/// Flow-time of a PDE-derived activation: frozen or trainable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauSpec {
    Fixed(f64),
    Learnable(f64),
}

impl TauSpec {
    pub fn initial(&self) -> f64 {
        match *self {
            TauSpec::Fixed(v) | TauSpec::Learnable(v) => v,
        }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, TauSpec::Learnable(_))
    }
}

/// Activation choice for a layer position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActivationSpec {
    /// Exact Allen-Cahn reaction flow over `tau`.
    Ac { tau: TauSpec },
    /// Kerr phase rotation over distance `xi` with coefficient `gamma`;
    /// `backward` selects the compensating sign.
    Nlse {
        xi: TauSpec,
        gamma: f64,
        backward: bool,
    },
    Relu,
}

/// One layer inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
    },
    /// Dense square layer along the spatial axis.
    Dense { n: usize },
    Activation(ActivationSpec),
}

/// Ordered layer plan of one operator splitting block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub layers: Vec<LayerSpec>,
}

impl BlockPlan {
    /// Channel count entering / leaving the block, when convolutional.
    fn channel_flow(&self) -> Option<(usize, usize)> {
        let mut first = None;
        let mut last = None;
        for l in &self.layers {
            if let LayerSpec::Conv1d { in_ch, out_ch, .. }
            | LayerSpec::Conv2d { in_ch, out_ch, .. } = l
            {
                if first.is_none() {
                    first = Some(*in_ch);
                }
                last = Some(*out_ch);
            }
        }
        match (first, last) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    /// Composition of state-to-state blocks.
    Autoflow,
    /// Single feature-space chain (the baseline DNN factor level).
    BaselineDnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// Every kernel entry set to `1/k`.
    ConstantInvK,
    /// (Semi-)orthogonal rows/columns on the flattened `(out, in*k)`
    /// matrix.
    Orthogonal,
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    KaimingUniform,
}

/// Architecture description; fully determines the parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoflowConfig {
    pub arch: ArchKind,
    pub dtype: DType,
    pub blocks: Vec<BlockPlan>,
    pub init: InitScheme,
    /// Align each block output's sign with its input (real states only).
    pub sign_align: bool,
    /// Re-unitarize dense weights after every optimizer step.
    pub unitary: bool,
}

impl AutoflowConfig {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Whether every block maps the state space to itself (equal channel
    /// counts in and out).
    pub fn state_preserving(&self) -> bool {
        self.blocks.iter().all(|b| match b.channel_flow() {
            Some((i, o)) => i == o,
            None => true,
        })
    }

    /// Linear toy: `n_blocks` single-convolution blocks, kernel `k`,
    /// constant `1/k` initialization, no activations.
    pub fn toy_linear(n_blocks: usize, kernel: usize) -> AutoflowConfig {
        AutoflowConfig {
            arch: ArchKind::Autoflow,
            dtype: DType::Real,
            blocks: vec![
                BlockPlan {
                    layers: vec![LayerSpec::Conv1d {
                        in_ch: 1,
                        out_ch: 1,
                        kernel,
                    }],
                };
                n_blocks
            ],
            init: InitScheme::ConstantInvK,
            sign_align: false,
            unitary: false,
        }
    }

    /// Dense linear toy on complex states (`n` grid points per block),
    /// optionally constrained to unitary weights.
    pub fn dense_toy(n_blocks: usize, n: usize, unitary: bool) -> AutoflowConfig {
        AutoflowConfig {
            arch: ArchKind::Autoflow,
            dtype: DType::Complex,
            blocks: vec![
                BlockPlan {
                    layers: vec![LayerSpec::Dense { n }],
                };
                n_blocks
            ],
            init: InitScheme::Orthogonal,
            sign_align: false,
            unitary,
        }
    }

    /// Allen-Cahn network: `n_blocks` blocks of conv-act-conv-act with
    /// channels 1-16-1, kernel 11x11, and the reaction flow over `tau` as
    /// activation.
    pub fn ac_dosnet(n_blocks: usize, tau: f64) -> AutoflowConfig {
        let act = ActivationSpec::Ac {
            tau: TauSpec::Fixed(tau),
        };
        AutoflowConfig::ac_autoflow(n_blocks, act)
    }

    /// Allen-Cahn Autoflow with an arbitrary activation (the network
    /// factor level of the two-level design).
    pub fn ac_autoflow(n_blocks: usize, act: ActivationSpec) -> AutoflowConfig {
        let block = BlockPlan {
            layers: vec![
                LayerSpec::Conv2d {
                    in_ch: 1,
                    out_ch: 16,
                    kernel: 11,
                },
                LayerSpec::Activation(act),
                LayerSpec::Conv2d {
                    in_ch: 16,
                    out_ch: 1,
                    kernel: 11,
                },
                LayerSpec::Activation(act),
            ],
        };
        AutoflowConfig {
            arch: ArchKind::Autoflow,
            dtype: DType::Real,
            blocks: vec![block; n_blocks],
            init: InitScheme::KaimingUniform,
            sign_align: true,
            unitary: false,
        }
    }

    /// Baseline DNN factor level: conv(1-16), act, three (conv(16-16),
    /// act), final conv(16-1), all kernel 11.
    pub fn baseline_dnn(act: ActivationSpec) -> AutoflowConfig {
        let mut layers = vec![
            LayerSpec::Conv2d {
                in_ch: 1,
                out_ch: 16,
                kernel: 11,
            },
            LayerSpec::Activation(act),
        ];
        for _ in 0..3 {
            layers.push(LayerSpec::Conv2d {
                in_ch: 16,
                out_ch: 16,
                kernel: 11,
            });
            layers.push(LayerSpec::Activation(act));
        }
        layers.push(LayerSpec::Conv2d {
            in_ch: 16,
            out_ch: 1,
            kernel: 11,
        });
        AutoflowConfig {
            arch: ArchKind::BaselineDnn,
            dtype: DType::Real,
            blocks: vec![BlockPlan { layers }],
            init: InitScheme::KaimingUniform,
            sign_align: false,
            unitary: false,
        }
    }

    /// Fiber compensation network: two blocks of one complex convolution
    /// (kernel `kernel`, channels alternating 1-2-1) and one backward
    /// Kerr-phase activation over `xi` km.
    pub fn nlse_dosnet(kernel: usize, xi: f64, gamma: f64) -> AutoflowConfig {
        let act = |_: usize| {
            LayerSpec::Activation(ActivationSpec::Nlse {
                xi: TauSpec::Fixed(xi),
                gamma,
                backward: true,
            })
        };
        AutoflowConfig {
            arch: ArchKind::Autoflow,
            dtype: DType::Complex,
            blocks: vec![
                BlockPlan {
                    layers: vec![
                        LayerSpec::Conv1d {
                            in_ch: 1,
                            out_ch: 2,
                            kernel,
                        },
                        act(0),
                    ],
                },
                BlockPlan {
                    layers: vec![
                        LayerSpec::Conv1d {
                            in_ch: 2,
                            out_ch: 1,
                            kernel,
                        },
                        act(1),
                    ],
                },
            ],
            init: InitScheme::Orthogonal,
            sign_align: false,
            unitary: false,
        }
    }
}

/// What a parameter parameterizes; drives projection and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    ConvKernel,
    DenseWeight,
    FlowTime,
}

/// Named parameter tensor.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
    pub trainable: bool,
}

/// The network: a configuration plus its parameter list.
#[derive(Debug, Clone)]
pub struct AutoflowModel {
    pub config: AutoflowConfig,
    pub params: Vec<Param>,
}

/// Result of a graph forward pass.
pub struct ForwardPass {
    pub output: NodeId,
    /// Input state followed by the state after each block (`M + 1`
    /// entries for an `M`-block model).
    pub intermediates: Vec<NodeId>,
    /// One node per model parameter, in `params` order.
    pub param_nodes: Vec<NodeId>,
}

impl AutoflowModel {
    /// Builds a model with freshly initialized weights.
    pub fn init(config: AutoflowConfig, rng: &mut SeedRng) -> Result<AutoflowModel> {
        let mut params = Vec::new();
        for (bi, block) in config.blocks.iter().enumerate() {
            for (li, layer) in block.layers.iter().enumerate() {
                match *layer {
                    LayerSpec::Conv1d {
                        in_ch,
                        out_ch,
                        kernel,
                    } => {
                        let shape = vec![out_ch, in_ch, kernel];
                        params.push(Param {
                            name: format!("block{}.layer{}.kernel", bi, li),
                            kind: ParamKind::ConvKernel,
                            value: init_weights(config.init, &shape, config.dtype, rng)?,
                            trainable: true,
                        });
                    }
                    LayerSpec::Conv2d {
                        in_ch,
                        out_ch,
                        kernel,
                    } => {
                        let shape = vec![out_ch, in_ch, kernel, kernel];
                        params.push(Param {
                            name: format!("block{}.layer{}.kernel", bi, li),
                            kind: ParamKind::ConvKernel,
                            value: init_weights(config.init, &shape, config.dtype, rng)?,
                            trainable: true,
                        });
                    }
                    LayerSpec::Dense { n } => {
                        let shape = vec![n, n];
                        params.push(Param {
                            name: format!("block{}.layer{}.weight", bi, li),
                            kind: ParamKind::DenseWeight,
                            value: init_weights(InitScheme::Orthogonal, &shape, config.dtype, rng)?,
                            trainable: true,
                        });
                    }
                    LayerSpec::Activation(spec) => {
                        let tau = match spec {
                            ActivationSpec::Ac { tau } => Some(tau),
                            ActivationSpec::Nlse { xi, .. } => Some(xi),
                            ActivationSpec::Relu => None,
                        };
                        if let Some(t) = tau {
                            if t.is_learnable() {
                                params.push(Param {
                                    name: format!("block{}.layer{}.tau", bi, li),
                                    kind: ParamKind::FlowTime,
                                    value: Tensor::scalar(t.initial()),
                                    trainable: true,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(AutoflowModel { config, params })
    }

    /// Total count of trainable scalars; a complex parameter counts two.
    pub fn count_params(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.real_scalar_count())
            .sum()
    }

    /// Registers parameters and unrolls the block chain onto `graph`.
    pub fn forward(&self, graph: &mut Graph, input: NodeId) -> Result<ForwardPass> {
        let param_nodes: Vec<NodeId> = self
            .params
            .iter()
            .map(|p| {
                if p.trainable {
                    graph.param(p.value.clone())
                } else {
                    graph.input(p.value.clone())
                }
            })
            .collect();

        let input_shape = graph.value(input).shape().to_vec();
        let state_preserving = self.config.state_preserving();
        let mut intermediates = vec![input];
        let mut state = input;
        let mut pi = 0usize;
        for block in &self.config.blocks {
            let block_in = state;
            for layer in &block.layers {
                match *layer {
                    LayerSpec::Conv1d { .. } => {
                        state = graph.conv1d(state, param_nodes[pi])?;
                        pi += 1;
                    }
                    LayerSpec::Conv2d { .. } => {
                        state = graph.conv2d(state, param_nodes[pi])?;
                        pi += 1;
                    }
                    LayerSpec::Dense { .. } => {
                        state = graph.dense(state, param_nodes[pi])?;
                        pi += 1;
                    }
                    LayerSpec::Activation(spec) => {
                        let (kind, tau) = match spec {
                            ActivationSpec::Ac { tau } => (
                                ActKind::AcFlow,
                                self.tau_input(tau, &param_nodes, &mut pi),
                            ),
                            ActivationSpec::Nlse {
                                xi,
                                gamma,
                                backward,
                            } => (
                                ActKind::NlsePhase { gamma, backward },
                                self.tau_input(xi, &param_nodes, &mut pi),
                            ),
                            ActivationSpec::Relu => (ActKind::Relu, TauInput::Const(0.0)),
                        };
                        state = graph.activation(state, kind, tau)?;
                    }
                }
            }
            if self.config.sign_align {
                state = graph.sign_align(block_in, state)?;
            }
            if state_preserving && graph.value(state).shape() != input_shape.as_slice() {
                return Err(DosnetError::dim(
                    "block broke the state-dimension invariant",
                ));
            }
            intermediates.push(state);
        }
        Ok(ForwardPass {
            output: state,
            intermediates,
            param_nodes,
        })
    }

    fn tau_input(&self, spec: TauSpec, nodes: &[NodeId], pi: &mut usize) -> TauInput {
        if spec.is_learnable() {
            let id = nodes[*pi];
            *pi += 1;
            TauInput::Node(id)
        } else {
            TauInput::Const(spec.initial())
        }
    }

    /// Forward pass on a batch tensor, values only.
    pub fn apply_batch(&self, input: &Tensor) -> Result<Tensor> {
        let mut graph = Graph::new();
        let x = graph.input(input.clone());
        let pass = self.forward(&mut graph, x)?;
        Ok(graph.value(pass.output).clone())
    }

    /// Forward pass on a batch, also returning per-block intermediate
    /// values.
    pub fn apply_batch_with_intermediates(&self, input: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut graph = Graph::new();
        let x = graph.input(input.clone());
        let pass = self.forward(&mut graph, x)?;
        let inter = pass
            .intermediates
            .iter()
            .map(|&id| graph.value(id).clone())
            .collect();
        Ok((graph.value(pass.output).clone(), inter))
    }

    /// Single-field forward (for rollout and evaluation).
    pub fn apply_field(&self, u: &Field) -> Result<Field> {
        let input = Tensor::from_field(u);
        let out = self.apply_batch(&input)?;
        out.to_field(u.grid())
    }

    /// Re-unitarizes every dense weight (used after optimizer steps when
    /// the unitary flag is set).
    pub fn project_dense_unitary(&mut self) -> Result<()> {
        for p in &mut self.params {
            if p.kind == ParamKind::DenseWeight {
                p.value = unitary_project(&p.value)?;
            }
        }
        Ok(())
    }
}

/// One-horizon evolution map: a trained model, or an exact propagator
/// wrapped in a closure.
pub trait EvolveMap {
    fn evolve(&self, u: &Field) -> Result<Field>;
}

impl EvolveMap for AutoflowModel {
    fn evolve(&self, u: &Field) -> Result<Field> {
        self.apply_field(u)
    }
}

impl<F> EvolveMap for F
where
    F: Fn(&Field) -> Result<Field>,
{
    fn evolve(&self, u: &Field) -> Result<Field> {
        self(u)
    }
}

/// Per-batch-item sign alignment on plain tensors:
/// `cur * sign(mean(prev . cur))` with `sign(0) = +1`.
pub fn sign_align(prev: &Tensor, cur: &Tensor) -> Result<Tensor> {
    let mut graph = Graph::new();
    let p = graph.input(prev.clone());
    let c = graph.input(cur.clone());
    let out = graph.sign_align(p, c)?;
    Ok(graph.value(out).clone())
}

/// Fresh weights for the given scheme, shape and dtype.
pub fn init_weights(
    scheme: InitScheme,
    shape: &[usize],
    dtype: DType,
    rng: &mut SeedRng,
) -> Result<Tensor> {
    if shape.is_empty() {
        return Err(DosnetError::arg("empty weight shape"));
    }
    let numel: usize = shape.iter().product();
    match scheme {
        InitScheme::ConstantInvK => {
            let k = *shape.last().expect("non-empty shape") as f64;
            match dtype {
                DType::Real => Tensor::new_real(shape.to_vec(), vec![1.0 / k; numel]),
                DType::Complex => Tensor::new_complex(
                    shape.to_vec(),
                    vec![Complex64::new(1.0 / k, 0.0); numel],
                ),
            }
        }
        InitScheme::KaimingUniform => {
            let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
            let b = (6.0 / fan_in as f64).sqrt();
            match dtype {
                DType::Real => Tensor::new_real(
                    shape.to_vec(),
                    (0..numel).map(|_| rng.uniform(-b, b)).collect(),
                ),
                DType::Complex => Tensor::new_complex(
                    shape.to_vec(),
                    (0..numel)
                        .map(|_| Complex64::new(rng.uniform(-b, b), rng.uniform(-b, b)))
                        .collect(),
                ),
            }
        }
        InitScheme::Orthogonal => {
            let rows = shape[0];
            let cols: usize = shape[1..].iter().product::<usize>().max(1);
            match dtype {
                DType::Real => {
                    let w = orthogonal_matrix_real(rows, cols, rng);
                    Tensor::new_real(shape.to_vec(), w)
                }
                DType::Complex => {
                    let w = orthogonal_matrix_complex(rows, cols, rng);
                    Tensor::new_complex(shape.to_vec(), w)
                }
            }
        }
    }
}

/// Row-major (rows x cols) semi-orthogonal matrix: orthonormal rows when
/// rows <= cols, orthonormal columns otherwise.
fn orthogonal_matrix_real(rows: usize, cols: usize, rng: &mut SeedRng) -> Vec<f64> {
    let big = rows.max(cols);
    let small = rows.min(cols);
    let a = DMatrix::<f64>::from_fn(big, small, |_, _| rng.normal());
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            for i in 0..big {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = if rows <= cols { q[(j, i)] } else { q[(i, j)] };
        }
    }
    out
}

fn orthogonal_matrix_complex(rows: usize, cols: usize, rng: &mut SeedRng) -> Vec<Complex64> {
    let big = rows.max(cols);
    let small = rows.min(cols);
    let a = DMatrix::<Complex64>::from_fn(big, small, |_, _| {
        Complex64::new(rng.normal(), rng.normal())
    });
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..small {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..big {
                q[(i, j)] *= phase.conj();
            }
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = if rows <= cols {
                q[(j, i)].conj()
            } else {
                q[(i, j)]
            };
        }
    }
    out
}

/// Nearest unitary matrix in Frobenius norm (polar factor `U V^H` of the
/// SVD). Errors on non-square or numerically rank-deficient input.
pub fn unitary_project(w: &Tensor) -> Result<Tensor> {
    if w.shape().len() != 2 || w.shape()[0] != w.shape()[1] {
        return Err(DosnetError::dim("unitary projection needs a square matrix"));
    }
    let n = w.shape()[0];
    let data = w
        .as_complex()
        .ok_or_else(|| DosnetError::DtypeMismatch("unitary projection is complex".into()))?;
    let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| data[i * n + j]);
    let svd = m.svd(true, true);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smin < 1e-12 {
        return Err(DosnetError::Numeric(format!(
            "rank-deficient matrix (sigma_min = {:.3e})",
            smin
        )));
    }
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let polar = u * vt;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = polar[(i, j)];
        }
    }
    Tensor::new_complex(vec![n, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts_match_the_reference_architectures() {
        let mut rng = SeedRng::new(1);
        let ac = AutoflowModel::init(AutoflowConfig::ac_dosnet(5, 1.0), &mut rng).unwrap();
        assert_eq!(ac.count_params(), 19360);

        let nlse =
            AutoflowModel::init(AutoflowConfig::nlse_dosnet(3001, 160.0, 1.66), &mut rng).unwrap();
        assert_eq!(nlse.count_params(), 24008);

        let toy = AutoflowModel::init(AutoflowConfig::toy_linear(1, 7), &mut rng).unwrap();
        assert_eq!(toy.count_params(), 7);

        let dnn = AutoflowModel::init(
            AutoflowConfig::baseline_dnn(ActivationSpec::Relu),
            &mut rng,
        )
        .unwrap();
        assert_eq!(dnn.count_params(), 96800);
    }

    #[test]
    fn constant_init_fills_inverse_kernel_size() {
        let mut rng = SeedRng::new(2);
        let t = init_weights(InitScheme::ConstantInvK, &[1, 1, 21], DType::Real, &mut rng).unwrap();
        for &v in t.as_real().unwrap() {
            assert!((v - 1.0 / 21.0).abs() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_init_square_has_orthonormal_columns() {
        let mut rng = SeedRng::new(3);
        let t = init_weights(InitScheme::Orthogonal, &[8, 8], DType::Real, &mut rng).unwrap();
        let w = t.as_real().unwrap();
        for a in 0..8 {
            for b in 0..8 {
                let dot: f64 = (0..8).map(|i| w[i * 8 + a] * w[i * 8 + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "({}, {}) -> {}", a, b, dot);
            }
        }
    }

    #[test]
    fn kaiming_bounds_and_variance() {
        let mut rng = SeedRng::new(4);
        let fan_in = 1936;
        let t = init_weights(
            InitScheme::KaimingUniform,
            &[64, 16, 11, 11],
            DType::Real,
            &mut rng,
        )
        .unwrap();
        let b = (6.0 / fan_in as f64).sqrt();
        let vals = t.as_real().unwrap();
        assert!(vals.iter().all(|v| v.abs() <= b));
        let var = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
        assert!((var - b * b / 3.0).abs() < 0.05 * b * b / 3.0);
    }

    #[test]
    fn unitary_projection_properties() {
        let mut rng = SeedRng::new(5);
        // Scaling of the identity projects back to the identity.
        let two_i = Tensor::new_complex(
            vec![3, 3],
            (0..9)
                .map(|i| {
                    if i % 4 == 0 {
                        Complex64::new(2.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect(),
        )
        .unwrap();
        let p = unitary_project(&two_i).unwrap();
        for (idx, z) in p.as_complex().unwrap().iter().enumerate() {
            let want = if idx % 4 == 0 { 1.0 } else { 0.0 };
            assert!((z - Complex64::new(want, 0.0)).norm() < 1e-12);
        }

        // Random matrix: projected result is unitary and norm-preserving.
        let n = 12;
        let w = Tensor::new_complex(
            vec![n, n],
            (0..n * n)
                .map(|_| Complex64::new(rng.normal(), rng.normal()))
                .collect(),
        )
        .unwrap();
        let u = unitary_project(&w).unwrap();
        let uv = u.as_complex().unwrap();
        for a in 0..n {
            for b in 0..n {
                let dot: Complex64 = (0..n).map(|i| uv[i * n + a].conj() * uv[i * n + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - Complex64::new(want, 0.0)).norm() < 1e-10);
            }
        }
        // Idempotence: projecting a unitary matrix returns it.
        let again = unitary_project(&u).unwrap();
        for (a, b) in again.as_complex().unwrap().iter().zip(uv) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_conv_model_preserves_phase_fixed_points() {
        // Convs set to the identity kernel; the activation alone acts, so
        // the constant states +-1 are mapped to themselves exactly.
        let cfg = AutoflowConfig::ac_dosnet(2, 0.9);
        let mut rng = SeedRng::new(6);
        let mut model = AutoflowModel::init(cfg, &mut rng).unwrap();
        for p in &mut model.params {
            let shape = p.value.shape().to_vec();
            let (o, c, kh, kw) = (shape[0], shape[1], shape[2], shape[3]);
            let mut vals = vec![0.0; o * c * kh * kw];
            for oc in 0..o.min(c) {
                vals[oc * c * kh * kw + oc * kh * kw + (kh / 2) * kw + kw / 2] = 1.0;
            }
            // route channel 0 through; a 1->16 conv replicates into ch 0
            if c == 1 {
                for oc in 0..o {
                    vals[oc * kh * kw + (kh / 2) * kw + kw / 2] = if oc == 0 { 1.0 } else { 0.0 };
                }
            }
            p.value = Tensor::new_real(shape, vals).unwrap();
        }
        for value in [1.0f64, -1.0] {
            let input = Tensor::new_real(vec![1, 1, 16, 16], vec![value; 256]).unwrap();
            let out = model.apply_batch(&input).unwrap();
            assert_eq!(out.as_real().unwrap(), &vec![value; 256][..]);
        }
    }

    #[test]
    fn autoflow_intermediates_keep_state_dims() {
        let cfg = AutoflowConfig::toy_linear(3, 5);
        let mut rng = SeedRng::new(7);
        let model = AutoflowModel::init(cfg, &mut rng).unwrap();
        let input = Tensor::new_real(vec![2, 1, 16], vec![0.3; 32]).unwrap();
        let (out, inter) = model.apply_batch_with_intermediates(&input).unwrap();
        assert_eq!(inter.len(), 4);
        for t in &inter {
            assert_eq!(t.shape(), input.shape());
        }
        assert_eq!(out.shape(), input.shape());
        assert_eq!(inter.last().unwrap(), &out);
    }

    #[test]
    fn single_block_forward_equals_block_application() {
        let cfg = AutoflowConfig::toy_linear(1, 5);
        let mut rng = SeedRng::new(8);
        let model = AutoflowModel::init(cfg, &mut rng).unwrap();
        let input = Tensor::new_real(vec![1, 1, 12], (0..12).map(|i| i as f64).collect()).unwrap();
        let out = model.apply_batch(&input).unwrap();
        let (_, inter) = model.apply_batch_with_intermediates(&input).unwrap();
        assert_eq!(inter[1], out);
    }
}
