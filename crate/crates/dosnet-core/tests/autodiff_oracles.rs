//! Oracle checks for the numeric substrate and the reverse-mode engine:
//! a brute-force DFT, a brute-force circular convolution, and central
//! finite differences. The oracles only use forward evaluation and direct
//! summation, independent of the implementation paths they check.

use num_complex::Complex64;
use std::f64::consts::PI;

use dosnet_core::autodiff::{
    gradcheck, ActKind, AdamState, DType, Graph, NodeId, TauInput, Tensor,
};
use dosnet_core::field::{dft_forward, dft_inverse, Field, Grid};
use dosnet_core::rng::SeedRng;

/// O(n^2) DFT by direct summation.
fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let angle = -2.0 * PI * (j * k % n) as f64 / n as f64;
                acc += v * Complex64::new(angle.cos(), angle.sin());
            }
            acc
        })
        .collect()
}

#[test]
fn fft_matches_naive_dft_for_n200() {
    let mut rng = SeedRng::new(101);
    let grid = Grid::new_1d(200, -PI, PI).unwrap();
    let values: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
    let field = Field::new_real(grid, values.clone()).unwrap();
    let fast = dft_forward(&field);
    let slow = naive_dft(
        &values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect::<Vec<_>>(),
    );
    let max_diff = fast
        .coeffs()
        .iter()
        .zip(&slow)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(max_diff < 1e-10, "max diff {}", max_diff);
}

#[test]
fn parseval_holds_under_the_unnormalized_convention() {
    let mut rng = SeedRng::new(102);
    for &n in &[64usize, 200, 301] {
        let grid = Grid::new_1d(n, -PI, PI).unwrap();
        let values: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let field = Field::new_complex(grid, values).unwrap();
        let spec = dft_forward(&field);
        let lhs = field.l2_norm().powi(2);
        let rhs = spec.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        assert!((lhs - rhs).abs() < 1e-10 * lhs);
    }
}

#[test]
fn round_trip_is_identity_for_2d_fields() {
    let mut rng = SeedRng::new(103);
    let grid = Grid::new_2d([24, 40], [(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let values: Vec<f64> = (0..24 * 40).map(|_| rng.normal()).collect();
    let field = Field::new_real(grid, values).unwrap();
    let back = dft_inverse(&dft_forward(&field)).try_into_real(1e-12).unwrap();
    let err = dosnet_core::field::l2_relative(&back, &field).unwrap();
    assert!(err < 1e-12);
}

/// O(n k) circular cross-correlation by direct index-wrapped summation.
fn naive_circ_conv(x: &[f64], k: &[f64], n: usize) -> Vec<f64> {
    let c0 = k.len() / 2;
    (0..n)
        .map(|pos| {
            k.iter()
                .enumerate()
                .map(|(j, &kv)| kv * x[(pos + j + n - c0) % n])
                .sum()
        })
        .collect()
}

#[test]
fn graph_conv_matches_naive_convolution() {
    let (n, ksize) = (16, 5);
    let mut rng = SeedRng::new(104);
    let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let k: Vec<f64> = (0..ksize).map(|_| rng.normal()).collect();

    let mut g = Graph::new();
    let xid = g.input(Tensor::new_real(vec![1, 1, n], x.clone()).unwrap());
    let kid = g.param(Tensor::new_real(vec![1, 1, ksize], k.clone()).unwrap());
    let out = g.conv1d(xid, kid).unwrap();
    let got = g.value(out).as_real().unwrap();
    let want = naive_circ_conv(&x, &k, n);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------------
// Finite-difference gradient checks across the whole op set
// ---------------------------------------------------------------------

struct FdCase {
    name: &'static str,
    /// Builds the graph from parameter tensors and returns the loss node.
    /// Tensors at `trainable` indices must be registered via `g.param`,
    /// in increasing index order; the rest via `g.input`.
    build: fn(&mut Graph, &[Tensor]) -> NodeId,
    params: Vec<Tensor>,
    trainable: Vec<usize>,
}

fn rand_real(rng: &mut SeedRng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new_real(shape, (0..n).map(|_| scale * rng.normal()).collect()).unwrap()
}

fn rand_complex(rng: &mut SeedRng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new_complex(
        shape,
        (0..n)
            .map(|_| scale * Complex64::new(rng.normal(), rng.normal()))
            .collect(),
    )
    .unwrap()
}

fn fd_cases(rng: &mut SeedRng) -> Vec<FdCase> {
    vec![
        FdCase {
            name: "real conv1d + ac activation + conv1d, mse",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let k1 = g.param(p[1].clone());
                let k2 = g.param(p[2].clone());
                let c1 = g.conv1d(x, k1).unwrap();
                let a1 = g
                    .activation(c1, ActKind::AcFlow, TauInput::Const(0.7))
                    .unwrap();
                let c2 = g.conv1d(a1, k2).unwrap();
                let target = Tensor::zeros(g.value(c2).shape().to_vec(), DType::Real);
                g.mse_loss(c2, &target).unwrap()
            },
            params: vec![
                rand_real(rng, vec![2, 1, 12], 0.5),
                rand_real(rng, vec![3, 1, 5], 0.4),
                rand_real(rng, vec![1, 3, 5], 0.4),
            ],
            trainable: vec![1, 2],
        },
        FdCase {
            name: "learnable tau in ac activation",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let k = g.param(p[1].clone());
                let tau = g.param(p[2].clone());
                let c = g.conv1d(x, k).unwrap();
                let a = g
                    .activation(c, ActKind::AcFlow, TauInput::Node(tau))
                    .unwrap();
                let target = Tensor::zeros(g.value(a).shape().to_vec(), DType::Real);
                g.mse_loss(a, &target).unwrap()
            },
            params: vec![
                rand_real(rng, vec![1, 1, 10], 0.5),
                rand_real(rng, vec![1, 1, 3], 0.6),
                Tensor::scalar(0.45),
            ],
            trainable: vec![1, 2],
        },
        FdCase {
            name: "relu chain",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let k = g.param(p[1].clone());
                let c = g.conv1d(x, k).unwrap();
                let a = g.activation(c, ActKind::Relu, TauInput::Const(0.0)).unwrap();
                let target = Tensor::zeros(g.value(a).shape().to_vec(), DType::Real);
                g.mse_loss(a, &target).unwrap()
            },
            params: vec![
                rand_real(rng, vec![2, 1, 9], 1.0),
                rand_real(rng, vec![2, 1, 3], 0.8),
            ],
            trainable: vec![1],
        },
        FdCase {
            name: "complex conv1d + kerr phase + crop, mse",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let k1 = g.param(p[1].clone());
                let k2 = g.param(p[2].clone());
                let c1 = g.conv1d(x, k1).unwrap();
                let a1 = g
                    .activation(
                        c1,
                        ActKind::NlsePhase {
                            gamma: 1.3,
                            backward: true,
                        },
                        TauInput::Const(0.9),
                    )
                    .unwrap();
                let c2 = g.conv1d(a1, k2).unwrap();
                let cropped = g.crop1d(c2, 3, 4).unwrap();
                let target = Tensor::zeros(g.value(cropped).shape().to_vec(), DType::Complex);
                g.mse_loss(cropped, &target).unwrap()
            },
            params: vec![
                rand_complex(rng, vec![2, 1, 11], 0.5),
                rand_complex(rng, vec![2, 1, 3], 0.5),
                rand_complex(rng, vec![1, 2, 3], 0.5),
            ],
            trainable: vec![1, 2],
        },
        FdCase {
            name: "learnable xi in kerr phase",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let xi = g.param(p[1].clone());
                let a = g
                    .activation(
                        x,
                        ActKind::NlsePhase {
                            gamma: 0.8,
                            backward: false,
                        },
                        TauInput::Node(xi),
                    )
                    .unwrap();
                let target = Tensor::zeros(g.value(a).shape().to_vec(), DType::Complex);
                g.mse_loss(a, &target).unwrap()
            },
            params: vec![rand_complex(rng, vec![1, 1, 8], 0.7), Tensor::scalar(0.6)],
            trainable: vec![1],
        },
        FdCase {
            name: "real conv2d + ac activation, mse",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let k1 = g.param(p[1].clone());
                let k2 = g.param(p[2].clone());
                let c1 = g.conv2d(x, k1).unwrap();
                let a1 = g
                    .activation(c1, ActKind::AcFlow, TauInput::Const(0.3))
                    .unwrap();
                let c2 = g.conv2d(a1, k2).unwrap();
                let target = Tensor::zeros(g.value(c2).shape().to_vec(), DType::Real);
                g.mse_loss(c2, &target).unwrap()
            },
            params: vec![
                rand_real(rng, vec![1, 1, 6, 5], 0.5),
                rand_real(rng, vec![2, 1, 3, 3], 0.4),
                rand_real(rng, vec![1, 2, 3, 3], 0.4),
            ],
            trainable: vec![1, 2],
        },
        FdCase {
            name: "complex dense layer",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let w = g.param(p[1].clone());
                let y = g.dense(x, w).unwrap();
                let target = Tensor::zeros(g.value(y).shape().to_vec(), DType::Complex);
                g.mse_loss(y, &target).unwrap()
            },
            params: vec![
                rand_complex(rng, vec![2, 1, 6], 0.5),
                rand_complex(rng, vec![6, 6], 0.4),
            ],
            trainable: vec![1],
        },
        FdCase {
            name: "sign-aligned two-block chain",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let k1 = g.param(p[1].clone());
                let k2 = g.param(p[2].clone());
                let b1 = g.conv1d(x, k1).unwrap();
                let aligned = g.sign_align(x, b1).unwrap();
                let b2 = g.conv1d(aligned, k2).unwrap();
                let target = Tensor::zeros(g.value(b2).shape().to_vec(), DType::Real);
                g.mse_loss(b2, &target).unwrap()
            },
            params: vec![
                rand_real(rng, vec![3, 1, 8], 0.8),
                rand_real(rng, vec![1, 1, 5], 0.7),
                rand_real(rng, vec![1, 1, 5], 0.7),
            ],
            trainable: vec![1, 2],
        },
        FdCase {
            name: "large complex conv (fft path)",
            build: |g, p| {
                let x = g.input(p[0].clone());
                let k = g.param(p[1].clone());
                let c = g.conv1d(x, k).unwrap();
                let target = Tensor::zeros(g.value(c).shape().to_vec(), DType::Complex);
                g.mse_loss(c, &target).unwrap()
            },
            params: vec![
                rand_complex(rng, vec![1, 1, 700], 0.3),
                rand_complex(rng, vec![1, 1, 101], 0.3),
            ],
            trainable: vec![1],
        },
    ]
}

fn loss_of(case: &FdCase, params: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let loss = (case.build)(&mut g, params);
    g.value(loss).scalar_value().unwrap()
}

#[test]
fn every_op_passes_finite_difference_check() {
    let mut rng = SeedRng::new(2024);
    for case in fd_cases(&mut rng) {
        let mut g = Graph::new();
        let loss = (case.build)(&mut g, &case.params);
        g.backward(loss).unwrap();

        // Analytic grads of the trainable leaves, in tape order (the
        // builders register them in increasing param-index order).
        let leaves = g.trainable_leaves();
        assert_eq!(leaves.len(), case.trainable.len(), "{}", case.name);
        let analytic: Vec<Tensor> = leaves.iter().map(|&id| g.grad_or_zeros(id)).collect();

        let trainable_params: Vec<Tensor> = case
            .trainable
            .iter()
            .map(|&i| case.params[i].clone())
            .collect();
        let numeric = gradcheck::finite_difference_grads(
            |perturbed| {
                let mut assembled = case.params.clone();
                for (slot, t) in case.trainable.iter().zip(perturbed) {
                    assembled[*slot] = t.clone();
                }
                loss_of(&case, &assembled)
            },
            &trainable_params,
            1e-6,
        );
        let err = gradcheck::max_relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "{}: max rel err {}", case.name, err);
    }
}

#[test]
fn gradients_are_deterministic_across_parallel_modes() {
    let mut rng = SeedRng::new(77);
    let x = rand_real(&mut rng, vec![4, 1, 64], 0.5);
    let k1 = rand_real(&mut rng, vec![8, 1, 11], 0.3);
    let k2 = rand_real(&mut rng, vec![1, 8, 11], 0.3);

    let run = || {
        let mut g = Graph::new();
        let xid = g.input(x.clone());
        let k1id = g.param(k1.clone());
        let k2id = g.param(k2.clone());
        let c1 = g.conv1d(xid, k1id).unwrap();
        let a = g
            .activation(c1, ActKind::AcFlow, TauInput::Const(0.2))
            .unwrap();
        let c2 = g.conv1d(a, k2id).unwrap();
        let target = Tensor::zeros(g.value(c2).shape().to_vec(), DType::Real);
        let loss = g.mse_loss(c2, &target).unwrap();
        g.backward(loss).unwrap();
        (g.grad_or_zeros(k1id), g.grad_or_zeros(k2id))
    };

    let (a1, a2) = run();
    dosnet_core::exec::force_sequential(true);
    let (b1, b2) = run();
    dosnet_core::exec::force_sequential(false);
    assert_eq!(a1, b1);
    assert_eq!(a2, b2);
}

#[test]
fn adam_drives_one_conv_to_fit_a_shift() {
    // Single (input, target) pair; the kernel should learn the shift map.
    let mut rng = SeedRng::new(55);
    let x = rand_real(&mut rng, vec![1, 1, 16], 1.0);
    let xv = x.as_real().unwrap().to_vec();
    let shifted: Vec<f64> = (0..16).map(|i| xv[(i + 15) % 16]).collect();
    let target = Tensor::new_real(vec![1, 1, 16], shifted).unwrap();

    let mut kernel = Tensor::zeros(vec![1, 1, 5], DType::Real);
    let mut adam = AdamState::new(0.05, 0.0);
    let mut last = f64::INFINITY;
    for _ in 0..400 {
        let mut g = Graph::new();
        let xid = g.input(x.clone());
        let kid = g.param(kernel.clone());
        let out = g.conv1d(xid, kid).unwrap();
        let loss = g.mse_loss(out, &target).unwrap();
        g.backward(loss).unwrap();
        last = g.value(loss).scalar_value().unwrap();
        let grads = vec![g.grad_or_zeros(kid)];
        let mut params = vec![kernel.clone()];
        adam.step(&mut params, &grads).unwrap();
        kernel = params.pop().unwrap();
    }
    assert!(last < 1e-8, "loss {}", last);
}
