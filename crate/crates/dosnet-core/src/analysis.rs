//! Quantitative diagnostics: two-level factorial effect estimation,
//! matching of intermediate network states to solver trajectories,
//! long-horizon rollout error measurement, and the linear-network weight
//! theory checks (gradient-flow fixed points and converged-weekly
//! relations).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{DosnetError, Result};
use crate::field::{relative_error, Field};
use crate::model::EvolveMap;
use crate::solvers::Trajectory;

// ---------------------------------------------------------------------
// 2^2 factorial design
// ---------------------------------------------------------------------

/// One cell of a two-level, two-factor experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorialCell {
    /// Level of factor A (+1 or -1).
    pub x_a: i8,
    /// Level of factor B (+1 or -1).
    pub x_b: i8,
    /// Positive response (an error measurement).
    pub y: f64,
}

/// Estimated effects of the regression
/// `ln(y) = q0 + qa x_a + qb x_b + qab x_a x_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    pub q0: f64,
    pub qa: f64,
    pub qb: f64,
    pub qab: f64,
}

impl Effects {
    /// Reconstructs `ln(y)` for the given levels.
    pub fn log_response(&self, x_a: i8, x_b: i8) -> f64 {
        self.q0
            + self.qa * x_a as f64
            + self.qb * x_b as f64
            + self.qab * (x_a * x_b) as f64
    }
}

/// Exact solve of the four-cell system by signed quarter-sums (natural
/// logarithm). The four cells must cover all level combinations exactly
/// once and every response must be positive.
pub fn factorial_effects(cells: &[FactorialCell; 4]) -> Result<Effects> {
    let mut seen = [false; 4];
    for c in cells {
        if c.y <= 0.0 {
            return Err(DosnetError::arg(format!(
                "response must be positive, got {}",
                c.y
            )));
        }
        let idx = match (c.x_a, c.x_b) {
            (1, 1) => 0,
            (1, -1) => 1,
            (-1, 1) => 2,
            (-1, -1) => 3,
            _ => return Err(DosnetError::arg("levels must be +1 or -1")),
        };
        if seen[idx] {
            return Err(DosnetError::arg("duplicate factorial cell"));
        }
        seen[idx] = true;
    }
    let quarter = |f: &dyn Fn(&FactorialCell) -> f64| -> f64 {
        cells.iter().map(|c| f(c) * c.y.ln()).sum::<f64>() / 4.0
    };
    Ok(Effects {
        q0: quarter(&|_| 1.0),
        qa: quarter(&|c| c.x_a as f64),
        qb: quarter(&|c| c.x_b as f64),
        qab: quarter(&|c| (c.x_a * c.x_b) as f64),
    })
}

// ---------------------------------------------------------------------
// Intermediate-state time matching and rollout
// ---------------------------------------------------------------------

/// For each intermediate state, the trajectory time whose state is
/// closest in L2 (ties broken toward the earlier time).
pub fn match_times(intermediates: &[Field], trajectory: &Trajectory) -> Result<Vec<f64>> {
    if trajectory.is_empty() {
        return Err(DosnetError::arg("empty trajectory"));
    }
    let mut out = Vec::with_capacity(intermediates.len());
    for state in intermediates {
        let mut best_t = trajectory.times[0];
        let mut best_d = f64::INFINITY;
        for (t, y) in trajectory.times.iter().zip(&trajectory.states) {
            if y.grid() != state.grid() {
                return Err(DosnetError::dim("state grids differ"));
            }
            let sv = state.to_complex_vec();
            let yv = y.to_complex_vec();
            let d: f64 = sv.iter().zip(&yv).map(|(a, b)| (a - b).norm_sqr()).sum();
            if d < best_d {
                best_d = d;
                best_t = *t;
            }
        }
        out.push(best_t);
    }
    Ok(out)
}

/// Applies a one-horizon model repeatedly and reports the relative error
/// against the reference state after each step. `reference[k]` must hold
/// the true state after `k + 1` horizons.
pub fn rollout(model: &dyn EvolveMap, u0: &Field, reference: &[Field]) -> Result<Vec<f64>> {
    let mut state = u0.clone();
    let mut errors = Vec::with_capacity(reference.len());
    for target in reference {
        state = model.evolve(&state)?;
        if state.grid() != target.grid() {
            return Err(DosnetError::dim("rollout state grid changed"));
        }
        errors.push(relative_error(&state, target)?.value);
    }
    Ok(errors)
}

/// Norms of the rolled-out states themselves (drift diagnostics for
/// norm-preserving models).
pub fn rollout_norms(model: &dyn EvolveMap, u0: &Field, n_steps: usize) -> Result<Vec<f64>> {
    let mut state = u0.clone();
    let mut norms = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        state = model.evolve(&state)?;
        norms.push(state.l2_norm());
    }
    Ok(norms)
}

// ---------------------------------------------------------------------
// Two-layer linear network gradient flow
// ---------------------------------------------------------------------

/// Result of integrating the two-layer weight dynamics.
#[derive(Debug, Clone)]
pub struct GradFlowResult {
    pub w21: DMatrix<f64>,
    pub w32: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Loss-energy trace, one entry per iteration.
    pub energy: Vec<f64>,
}

/// Explicit-Euler integration of the coupled weight dynamics of a
/// two-layer linear network with unit input covariance:
///
/// `dW21 = lambda ((W32)^T (S31 - W32 W21) - beta W21)`
/// `dW32 = lambda ((S31 - W32 W21) (W21)^T - beta W32)`
///
/// The step size must satisfy `lambda (s_max + beta) < 1` for stability;
/// the run stops when both update norms fall below 1e-10 or after
/// `max_iters`. Divergence (any weight norm above 1e6) is an error.
pub fn two_layer_gradient_flow(
    sigma31: &DMatrix<f64>,
    beta: f64,
    lambda: f64,
    init: (DMatrix<f64>, DMatrix<f64>),
    max_iters: usize,
) -> Result<GradFlowResult> {
    let s_max = sigma31
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    if lambda * (s_max + beta) >= 1.0 {
        return Err(DosnetError::arg(format!(
            "unstable step size: lambda ({}) * (s_max + beta) ({}) >= 1",
            lambda,
            s_max + beta
        )));
    }
    let (mut w21, mut w32) = init;
    let mut energy = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..max_iters {
        iterations = it + 1;
        let residual = sigma31 - &w32 * &w21;
        energy.push(
            0.5 * residual.norm_squared()
                + 0.5 * beta * (w21.norm_squared() + w32.norm_squared()),
        );
        let d21 = (w32.transpose() * &residual - beta * &w21) * lambda;
        let d32 = (&residual * w21.transpose() - beta * &w32) * lambda;
        w21 += &d21;
        w32 += &d32;
        if w21.norm() > 1e6 || w32.norm() > 1e6 {
            return Err(DosnetError::Numeric(
                "gradient flow diverged (weight norm above 1e6)".into(),
            ));
        }
        if d21.norm() < 1e-10 && d32.norm() < 1e-10 {
            converged = true;
            break;
        }
    }
    Ok(GradFlowResult {
        w21,
        w32,
        iterations,
        converged,
        energy,
    })
}

/// Scalar convenience wrapper: converged `(a, b)` for a single singular
/// value `s`.
pub fn scalar_gradient_flow(
    s: f64,
    beta: f64,
    lambda: f64,
    init: (f64, f64),
    max_iters: usize,
) -> Result<(f64, f64)> {
    let res = two_layer_gradient_flow(
        &DMatrix::from_element(1, 1, s),
        beta,
        lambda,
        (
            DMatrix::from_element(1, 1, init.0),
            DMatrix::from_element(1, 1, init.1),
        ),
        max_iters,
    )?;
    Ok((res.w21[(0, 0)], res.w32[(0, 0)]))
}

// ---------------------------------------------------------------------
// Converged-weight diagnostics
// ---------------------------------------------------------------------

/// Residuals of the converged-weight relations and symmetry scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightReport {
    /// Relative residual of `W21 = (W32)^T U33 sgn(S31) (V11)^T`.
    pub relation_residual: f64,
    /// `||W - W^T|| / ||W||` for each weight.
    pub w21_symmetry: f64,
    pub w32_symmetry: f64,
    /// `||Sigma31 - Sigma31^T|| / ||Sigma31||`.
    pub sigma31_symmetry: f64,
    /// `||U33 - V11||` relative, when the symmetric eigen-path was taken.
    pub u33_v11_residual: Option<f64>,
    /// Count of singular values below 1e-12 (reported, sign treated as +).
    pub zero_singular_values: usize,
    pub singular_values: Vec<f64>,
}

fn symmetry_score(w: &DMatrix<f64>) -> f64 {
    let norm = w.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (w - w.transpose()).norm() / norm
}

/// Decomposes `sigma31` (the eigen-path with `U33 = V11` when it is
/// symmetric, otherwise an SVD) and reports the residual of the
/// converged-weight relation together with symmetry scores.
pub fn weight_diagnostics(
    w21: &DMatrix<f64>,
    w32: &DMatrix<f64>,
    sigma31: &DMatrix<f64>,
) -> Result<WeightReport> {
    let n = sigma31.nrows();
    if sigma31.ncols() != n || w21.nrows() != n || w21.ncols() != n || w32.nrows() != n {
        return Err(DosnetError::dim("diagnostics expect square n x n inputs"));
    }
    let sigma31_symmetry = symmetry_score(sigma31);
    let symmetric = sigma31_symmetry < 1e-10;

    let (u33, v11, svals, u33_v11_residual) = if symmetric {
        let eig = SymmetricEigen::new(sigma31.clone());
        // order modes by descending |eigenvalue| so sgn carries the signs
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .abs()
                .total_cmp(&eig.eigenvalues[a].abs())
        });
        let mut q = DMatrix::zeros(n, n);
        let mut s = Vec::with_capacity(n);
        for (col, &src) in idx.iter().enumerate() {
            q.set_column(col, &eig.eigenvectors.column(src));
            s.push(eig.eigenvalues[src]);
        }
        (q.clone(), q, s, Some(0.0))
    } else {
        let svd = sigma31.clone().svd(true, true);
        let u = svd.u.expect("requested");
        let vt = svd.v_t.expect("requested");
        let s: Vec<f64> = svd.singular_values.iter().cloned().collect();
        (u, vt.transpose(), s, None)
    };

    let zero_singular_values = svals.iter().filter(|s| s.abs() < 1e-12).count();
    let sgn = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        svals.iter().map(|&s| if s < 0.0 { -1.0 } else { 1.0 }),
    ));

    let predicted_w21 = w32.transpose() * &u33 * &sgn * v11.transpose();
    let denom = w21.norm().max(1e-300);
    let relation_residual = (w21 - predicted_w21).norm() / denom;

    Ok(WeightReport {
        relation_residual,
        w21_symmetry: symmetry_score(w21),
        w32_symmetry: symmetry_score(w32),
        sigma31_symmetry,
        u33_v11_residual,
        zero_singular_values,
        singular_values: svals,
    })
}

/// Circulant matrix of a centered circular-convolution kernel: row `m`
/// holds `k[j]` at column `(m + j - K/2) mod n`.
pub fn circulant_from_kernel(kernel: &[f64], n: usize) -> DMatrix<f64> {
    let k = kernel.len();
    let c = k / 2;
    let mut w = DMatrix::zeros(n, n);
    for m in 0..n {
        for (j, &v) in kernel.iter().enumerate() {
            w[(m, (m + j + n - c) % n)] += v;
        }
    }
    w
}

/// Empirical input covariance and input-output cross-covariance of a
/// field dataset: `Sigma11 = mean(u0 u0^T)`, `Sigma31 = mean(uT u0^T)`.
pub fn covariance_matrices(
    inputs: &[Field],
    targets: &[Field],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let first = inputs
        .first()
        .ok_or_else(|| DosnetError::arg("empty dataset"))?;
    let n = first.len();
    let mut s11 = DMatrix::zeros(n, n);
    let mut s31 = DMatrix::zeros(n, n);
    for (u0, ut) in inputs.iter().zip(targets) {
        let x = u0
            .as_real()
            .ok_or_else(|| DosnetError::DtypeMismatch("real fields expected".into()))?;
        let y = ut
            .as_real()
            .ok_or_else(|| DosnetError::DtypeMismatch("real fields expected".into()))?;
        for i in 0..n {
            for j in 0..n {
                s11[(i, j)] += x[i] * x[j];
                s31[(i, j)] += y[i] * x[j];
            }
        }
    }
    let m = inputs.len() as f64;
    Ok((s11 / m, s31 / m))
}
