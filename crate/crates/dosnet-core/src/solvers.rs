//! Splitting-scheme drivers built from the operator catalog: the Strang
//! solver for Allen-Cahn, plain single steps, the split-step Fourier
//! method for the fiber equation, convergence-order measurement, and a
//! numerical probe of the commutator between the two sub-flows.

use crate::error::{DosnetError, Result};
use crate::field::{dft_forward, dft_inverse, l2_relative, spectral_derivative, Field};
use crate::pde::{
    ac_nonlinear_step, linear_propagator, nlse_nonlinear_step, AllenCahnParams, LinearEq,
    NlseParams,
};

/// Time series of states produced by a solver.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub scheme: String,
    pub tau: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State at the final time.
    pub fn last(&self) -> &Field {
        self.states.last().expect("trajectory is never empty")
    }
}

fn check_step(total: f64, tau: f64) -> Result<usize> {
    if tau <= 0.0 {
        return Err(DosnetError::arg("step size must be positive"));
    }
    let n = (total / tau).round();
    if n < 1.0 || (total - n * tau).abs() > 1e-12 * total.max(1.0) {
        return Err(DosnetError::arg(format!(
            "duration {} is not an integer multiple of step {}",
            total, tau
        )));
    }
    Ok(n as usize)
}

/// Symmetrized Strang splitting for the Allen-Cahn equation: per step, a
/// linear half-step, the full analytic reaction step, and another linear
/// half-step. States are recorded every `record_stride` steps plus both
/// endpoints.
pub fn strang_allen_cahn(
    u0: &Field,
    total_time: f64,
    tau: f64,
    params: AllenCahnParams,
    record_stride: usize,
) -> Result<Trajectory> {
    if !u0.is_real() {
        return Err(DosnetError::DtypeMismatch(
            "Allen-Cahn state must be real".into(),
        ));
    }
    let n_steps = check_step(total_time, tau)?;
    let stride = record_stride.max(1);
    let eq = LinearEq::AcLinear(params);

    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    let mut u = u0.clone();
    for step in 1..=n_steps {
        u = strang_ac_step(&u, tau, eq)?;
        if step % stride == 0 || step == n_steps {
            times.push(step as f64 * tau);
            states.push(u.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        scheme: "strang".into(),
        tau,
    })
}

fn strang_ac_step(u: &Field, tau: f64, eq: LinearEq) -> Result<Field> {
    let half = linear_field(u, eq, tau / 2.0)?;
    let reacted = ac_nonlinear_step(&half, tau)?;
    linear_field(&reacted, eq, tau / 2.0)
}

fn linear_field(u: &Field, eq: LinearEq, t: f64) -> Result<Field> {
    let spec = dft_forward(u);
    let out = dft_inverse(&linear_propagator(&spec, eq, t)?);
    if u.is_real() {
        out.try_into_real(1e-8)
    } else {
        Ok(out)
    }
}

/// One plain (non-symmetric) split step `e^{tau N} e^{tau L}` for the
/// Allen-Cahn equation: full linear step, then full reaction step.
pub fn plain_split_step(u: &Field, tau: f64, params: AllenCahnParams) -> Result<Field> {
    if tau < 0.0 {
        return Err(DosnetError::arg("step size must be nonnegative"));
    }
    if tau == 0.0 {
        return Ok(u.clone());
    }
    let lin = linear_field(u, LinearEq::AcLinear(params), tau)?;
    ac_nonlinear_step(&lin, tau)
}

/// Plain splitting driven to `total_time` with step `tau`.
pub fn plain_allen_cahn(
    u0: &Field,
    total_time: f64,
    tau: f64,
    params: AllenCahnParams,
) -> Result<Field> {
    let n_steps = check_step(total_time, tau)?;
    let mut u = u0.clone();
    for _ in 0..n_steps {
        u = plain_split_step(&u, tau, params)?;
    }
    Ok(u)
}

/// Split-step Fourier propagation of a complex signal over one span.
///
/// Each sub-step applies the linear propagator and then the Kerr phase
/// rotation over `xi = span_km / steps_per_span`. The `symmetric` flag
/// switches to the Strang arrangement (linear half-step on both sides).
/// Deterministic; amplifier noise is injected by the link layer, not here.
pub fn ssfm_propagate(
    signal: &Field,
    params: NlseParams,
    span_km: f64,
    steps_per_span: usize,
    symmetric: bool,
) -> Result<Field> {
    if steps_per_span < 1 {
        return Err(DosnetError::arg("steps_per_span must be >= 1"));
    }
    if signal.is_real() {
        return Err(DosnetError::DtypeMismatch(
            "fiber signal must be complex".into(),
        ));
    }
    let xi = span_km / steps_per_span as f64;
    let eq = LinearEq::NlseLinear(params);
    let mut u = signal.clone();
    for _ in 0..steps_per_span {
        if symmetric {
            u = linear_field(&u, eq, xi / 2.0)?;
            u = nlse_nonlinear_step(&u, xi, params.gamma, params.direction)?;
            u = linear_field(&u, eq, xi / 2.0)?;
        } else {
            u = linear_field(&u, eq, xi)?;
            u = nlse_nonlinear_step(&u, xi, params.gamma, params.direction)?;
        }
    }
    Ok(u)
}

/// Least-squares fit of `ln(error)` against `ln(tau)`.
#[derive(Debug, Clone)]
pub struct OrderEstimate {
    pub order: f64,
    pub errors: Vec<f64>,
    pub taus: Vec<f64>,
    /// Step sizes whose error sat at rounding level and was excluded.
    pub saturated: Vec<f64>,
}

/// Measures the convergence order of `solve(u0, tau) -> state at T`
/// against a fine-step reference produced by the same solver.
///
/// Points with error below `100 * machine epsilon` are excluded from the
/// fit as saturated; the fit needs at least three surviving points.
pub fn convergence_order<F>(solve: F, u0: &Field, taus: &[f64]) -> Result<OrderEstimate>
where
    F: Fn(&Field, f64) -> Result<Field>,
{
    if taus.len() < 3 {
        return Err(DosnetError::arg("need at least 3 step sizes"));
    }
    let finest = taus.iter().cloned().fold(f64::INFINITY, f64::min);
    let reference = solve(u0, finest / 50.0)?;

    let floor = 100.0 * f64::EPSILON;
    let mut pts = Vec::new();
    let mut errors = Vec::new();
    let mut saturated = Vec::new();
    for &tau in taus {
        let approx = solve(u0, tau)?;
        let err = l2_relative(&approx, &reference)?;
        errors.push(err);
        if err < floor {
            saturated.push(tau);
        } else {
            pts.push((tau.ln(), err.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(DosnetError::Numeric(format!(
            "only {} unsaturated points; errors are at rounding level",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(OrderEstimate {
        order,
        errors,
        taus: taus.to_vec(),
        saturated,
    })
}

/// Output of [`lie_bracket_probe`].
#[derive(Debug, Clone)]
pub struct BracketProbe {
    /// Numerical commutator of the two sub-flows at step `h`.
    pub bracket: Field,
    /// Closed-form leading term `-6 eps^2 u0 (du0/dx)^2 h^2`.
    pub predicted: Field,
    /// Projection `<bracket, predicted> / ||predicted||^2`, or `None` when
    /// the predicted field vanishes identically.
    pub ratio: Option<f64>,
}

/// Probes the commutator between the diffusion half-flow `W_h` and the
/// reaction flow `S_h` of the Allen-Cahn equation on a smooth 1D field.
///
/// The commutator is evaluated as `W_h(S_h u0) - S_h(W_h u0)`, the
/// ordering under which its leading term is `-6 eps^2 u0 (du0/dx)^2 h^2`
/// (the reversed ordering flips the sign). The returned ratio tends to 1
/// as `h -> 0`.
pub fn lie_bracket_probe(u0: &Field, h: f64, params: AllenCahnParams) -> Result<BracketProbe> {
    if h <= 0.0 {
        return Err(DosnetError::arg("h must be positive"));
    }
    if !u0.is_real() || u0.grid().rank() != 1 {
        return Err(DosnetError::arg("bracket probe expects a real 1D field"));
    }
    let eq = LinearEq::AcLinear(params);
    let sw = linear_field(&ac_nonlinear_step(u0, h)?, eq, h)?;
    let ws = ac_nonlinear_step(&linear_field(u0, eq, h)?, h)?;
    let bracket = Field::new_real(
        u0.grid().clone(),
        sw.as_real()
            .unwrap()
            .iter()
            .zip(ws.as_real().unwrap())
            .map(|(a, b)| a - b)
            .collect(),
    )?;

    let du = spectral_derivative(u0, 0)?;
    let e2 = params.epsilon * params.epsilon;
    let predicted = Field::new_real(
        u0.grid().clone(),
        u0.as_real()
            .unwrap()
            .iter()
            .zip(du.as_real().unwrap())
            .map(|(&u, &d)| -6.0 * e2 * u * d * d * h * h)
            .collect(),
    )?;

    let pred_sq: f64 = predicted.as_real().unwrap().iter().map(|x| x * x).sum();
    let ratio = if pred_sq < 1e-300 {
        None
    } else {
        let inner: f64 = bracket
            .as_real()
            .unwrap()
            .iter()
            .zip(predicted.as_real().unwrap())
            .map(|(a, b)| a * b)
            .sum();
        Some(inner / pred_sq)
    };
    Ok(BracketProbe {
        bracket,
        predicted,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use std::f64::consts::PI;

    fn grid128() -> Grid {
        Grid::new_1d(128, -PI, PI).unwrap()
    }

    #[test]
    fn constant_states_are_fixed_points() {
        let grid = grid128();
        for value in [1.0, 0.0, -1.0] {
            let u0 = Field::new_real(grid.clone(), vec![value; 128]).unwrap();
            let traj =
                strang_allen_cahn(&u0, 0.1, 0.01, AllenCahnParams::default(), 1).unwrap();
            for state in &traj.states {
                for &x in state.as_real().unwrap() {
                    assert!((x - value).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn recording_stride_covers_endpoints() {
        let grid = grid128();
        let u0 = Field::from_fn_1d(grid, |x| 0.3 * x.sin());
        let traj = strang_allen_cahn(&u0, 0.1, 0.01, AllenCahnParams::default(), 3).unwrap();
        assert_eq!(traj.times.first(), Some(&0.0));
        assert!((traj.times.last().unwrap() - 0.1).abs() < 1e-12);
        // steps 3, 6, 9 plus endpoints 0 and 10
        assert_eq!(traj.times.len(), 5);
    }

    #[test]
    fn non_divisible_duration_is_rejected() {
        let grid = grid128();
        let u0 = Field::from_fn_1d(grid, |x| x.sin());
        let err = strang_allen_cahn(&u0, 1.0, 0.3, AllenCahnParams::default(), 1);
        assert!(err.is_err());
    }

    #[test]
    fn strang_matches_fine_step_reference() {
        let grid = grid128();
        let u0 = Field::from_fn_1d(grid, |x| 0.1 * x.sin());
        let p = AllenCahnParams::default();
        let coarse = strang_allen_cahn(&u0, 1.0, 1e-2, p, usize::MAX).unwrap();
        let fine = strang_allen_cahn(&u0, 1.0, 1e-4, p, usize::MAX).unwrap();
        let diff = l2_relative(coarse.last(), fine.last()).unwrap();
        assert!(diff < 1e-3, "coarse vs fine: {}", diff);
    }

    #[test]
    fn plain_step_with_zero_tau_is_identity() {
        let grid = grid128();
        let u0 = Field::from_fn_1d(grid, |x| 0.5 * (2.0 * x).cos());
        let out = plain_split_step(&u0, 0.0, AllenCahnParams::default()).unwrap();
        assert_eq!(out, u0);
    }

    #[test]
    fn strang_keeps_states_in_unit_band() {
        let grid = grid128();
        let u0 = Field::from_fn_1d(grid, |x| (3.0 * x).sin().clamp(-1.0, 1.0));
        let p = AllenCahnParams::new(0.05).unwrap();
        let traj = strang_allen_cahn(&u0, 0.5, 1e-3, p, 50).unwrap();
        for state in &traj.states {
            for &x in state.as_real().unwrap() {
                assert!((-1.001..=1.001).contains(&x));
            }
        }
    }

    #[test]
    fn ssfm_without_nonlinearity_is_single_linear_pass() {
        let grid = Grid::new_1d(256, 0.0, 256.0).unwrap();
        let mut rng = crate::rng::SeedRng::new(9);
        let v: Vec<num_complex::Complex64> = (0..256)
            .map(|_| num_complex::Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let u0 = Field::new_complex(grid, v).unwrap();
        let p = NlseParams::new(0.063, -21.68, 0.0, crate::pde::Direction::Forward).unwrap();
        let multi = ssfm_propagate(&u0, p, 80.0, 17, false).unwrap();
        let single = linear_field(&u0, LinearEq::NlseLinear(p), 80.0).unwrap();
        assert!(l2_relative(&multi, &single).unwrap() < 1e-12);
    }

    #[test]
    fn ssfm_without_linear_terms_is_single_kerr_pass() {
        let grid = Grid::new_1d(128, 0.0, 128.0).unwrap();
        let mut rng = crate::rng::SeedRng::new(10);
        let v: Vec<num_complex::Complex64> = (0..128)
            .map(|_| 0.3 * num_complex::Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let u0 = Field::new_complex(grid, v).unwrap();
        let p = NlseParams::new(0.0, 0.0, 1.66, crate::pde::Direction::Forward).unwrap();
        let multi = ssfm_propagate(&u0, p, 80.0, 13, false).unwrap();
        let single = nlse_nonlinear_step(&u0, 80.0, 1.66, crate::pde::Direction::Forward).unwrap();
        assert!(l2_relative(&multi, &single).unwrap() < 1e-12);
    }

    #[test]
    fn lossless_linear_ssfm_conserves_energy() {
        let grid = Grid::new_1d(128, 0.0, 128.0).unwrap();
        let mut rng = crate::rng::SeedRng::new(11);
        let v: Vec<num_complex::Complex64> = (0..128)
            .map(|_| num_complex::Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let u0 = Field::new_complex(grid, v).unwrap();
        let p = NlseParams::new(0.0, -21.68, 0.0, crate::pde::Direction::Forward).unwrap();
        let out = ssfm_propagate(&u0, p, 80.0, 25, false).unwrap();
        assert!((out.l2_norm() - u0.l2_norm()).abs() < 1e-10 * u0.l2_norm());
    }

    #[test]
    fn semigroup_property_of_exact_propagator() {
        let grid = grid128();
        let u0 = Field::from_fn_1d(grid, |x| x.sin() + 0.2 * (4.0 * x).cos());
        let eq = LinearEq::Diffusion;
        let one = linear_field(&u0, eq, 0.05).unwrap();
        let two = linear_field(&one, eq, 0.03).unwrap();
        let direct = linear_field(&u0, eq, 0.08).unwrap();
        assert!(l2_relative(&two, &direct).unwrap() < 1e-12);
    }

    #[test]
    fn exact_propagator_saturates_order_fit() {
        let grid = grid128();
        let u0 = Field::from_fn_1d(grid, |x| x.sin());
        let solve = |u: &Field, _tau: f64| linear_field(u, LinearEq::Diffusion, 0.2);
        let res = convergence_order(solve, &u0, &[0.04, 0.02, 0.01]);
        assert!(res.is_err());
    }

    #[test]
    fn bracket_probe_matches_leading_term_for_sine() {
        let grid = Grid::new_1d(256, -PI, PI).unwrap();
        let u0 = Field::from_fn_1d(grid, |x| x.sin());
        let p = AllenCahnParams::new(1.0).unwrap();
        let probe = lie_bracket_probe(&u0, 1e-3, p).unwrap();
        let ratio = probe.ratio.unwrap();
        assert!((0.95..=1.05).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn bracket_scales_quadratically_in_h() {
        let grid = Grid::new_1d(256, -PI, PI).unwrap();
        let u0 = Field::from_fn_1d(grid, |x| x.sin());
        let p = AllenCahnParams::new(1.0).unwrap();
        let b1 = lie_bracket_probe(&u0, 1e-3, p).unwrap().bracket.l2_norm();
        let b2 = lie_bracket_probe(&u0, 5e-4, p).unwrap().bracket.l2_norm();
        let factor = b1 / b2;
        assert!((factor - 4.0).abs() < 0.4, "factor {}", factor);
    }

    #[test]
    fn bracket_vanishes_for_constant_state() {
        let grid = grid128();
        let u0 = Field::new_real(grid, vec![0.4; 128]).unwrap();
        let p = AllenCahnParams::new(1.0).unwrap();
        let probe = lie_bracket_probe(&u0, 1e-3, p).unwrap();
        assert!(probe.ratio.is_none());
        // The two flows commute exactly on constants, so the numerical
        // bracket sits at rounding level rather than following the O(h^3)
        // decay of the generic gradient-free case.
        assert!(probe.bracket.l2_norm() < 1e-12 * u0.l2_norm());
    }
}
