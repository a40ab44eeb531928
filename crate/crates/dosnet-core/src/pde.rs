//! The operator catalog: exact solutions of the linear and nonlinear
//! sub-equations of each supported PDE.
//!
//! These closed forms serve double duty. Splitting solvers in
//! [`crate::solvers`] compose them as numerical propagators, and the
//! network in [`crate::model`] uses the nonlinear flows as activation
//! functions. The scalar forms ([`ac_flow`], [`nlse_phase`]) and their
//! derivatives live here so that solver and network share one
//! implementation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DosnetError, Result};
use crate::field::{dft_forward, dft_inverse, Field, Spectrum};

/// Allen-Cahn interface-width parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllenCahnParams {
    pub epsilon: f64,
}

impl AllenCahnParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 {
            return Err(DosnetError::arg("epsilon must be positive"));
        }
        Ok(AllenCahnParams { epsilon })
    }
}

impl Default for AllenCahnParams {
    fn default() -> Self {
        AllenCahnParams { epsilon: 0.02 }
    }
}

/// Propagation direction for the fiber equation. Backward propagation
/// solves the equation with all three parameters negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Fiber parameters: attenuation `alpha` [1/km], group-velocity dispersion
/// `beta2` [ps^2/km], Kerr coefficient `gamma` [1/(W km)].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlseParams {
    pub alpha: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub direction: Direction,
}

impl NlseParams {
    pub fn new(alpha: f64, beta2: f64, gamma: f64, direction: Direction) -> Result<Self> {
        if alpha < 0.0 {
            return Err(DosnetError::arg("alpha must be nonnegative"));
        }
        Ok(NlseParams {
            alpha,
            beta2,
            gamma,
            direction,
        })
    }

    pub fn reversed(&self) -> NlseParams {
        NlseParams {
            direction: match self.direction {
                Direction::Forward => Direction::Backward,
                Direction::Backward => Direction::Forward,
            },
            ..*self
        }
    }

    /// Sign applied to all three parameters: +1 forward, -1 backward.
    fn sign(&self) -> f64 {
        match self.direction {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Which linear sub-equation a spectral propagator solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearEq {
    /// Transport `u_t + u_x = 0` (1D): multiplier `exp(-i k t)`.
    Advection,
    /// Heat `u_t = u_xx`: multiplier `exp(-|k|^2 t)`.
    Diffusion,
    /// Free Schrodinger `i u_t = -u_xx`: multiplier `exp(-i |k|^2 t)`.
    Schrodinger,
    /// Allen-Cahn linear part `u_t = eps^2 Lap u`: `exp(-eps^2 |k|^2 t)`.
    AcLinear(AllenCahnParams),
    /// Fiber attenuation + dispersion over distance `xi`:
    /// `exp(xi (-alpha/2 + i beta2 w^2 / 2))` forward, signs flipped
    /// backward.
    NlseLinear(NlseParams),
}

/// Exact solution of the linear sub-equation over time (or distance)
/// `t_or_xi`, applied mode by mode in the Fourier domain.
pub fn linear_propagator(spectrum: &Spectrum, eq: LinearEq, t_or_xi: f64) -> Result<Spectrum> {
    if t_or_xi < 0.0 {
        return Err(DosnetError::arg("propagation time must be nonnegative"));
    }
    let t = t_or_xi;
    let out = match eq {
        LinearEq::Advection => {
            if spectrum.grid().rank() != 1 {
                return Err(DosnetError::dim("advection propagator is 1D"));
            }
            spectrum.scale_modes(|k| (Complex64::new(0.0, -k[0] * t)).exp())
        }
        LinearEq::Diffusion => {
            spectrum.scale_modes(|k| Complex64::new((-(k[0] * k[0] + k[1] * k[1]) * t).exp(), 0.0))
        }
        LinearEq::Schrodinger => {
            spectrum.scale_modes(|k| (Complex64::new(0.0, -(k[0] * k[0] + k[1] * k[1]) * t)).exp())
        }
        LinearEq::AcLinear(p) => {
            let e2 = p.epsilon * p.epsilon;
            spectrum
                .scale_modes(|k| Complex64::new((-e2 * (k[0] * k[0] + k[1] * k[1]) * t).exp(), 0.0))
        }
        LinearEq::NlseLinear(p) => {
            if spectrum.grid().rank() != 1 {
                return Err(DosnetError::dim("fiber propagator is 1D"));
            }
            let s = p.sign();
            spectrum.scale_modes(|k| {
                let w2 = k[0] * k[0];
                Complex64::new(-s * p.alpha / 2.0 * t, s * p.beta2 * w2 / 2.0 * t).exp()
            })
        }
    };
    Ok(out)
}

/// Applies [`linear_propagator`] to a field (forward DFT, multiply,
/// inverse DFT). Real inputs come back real for real multipliers.
pub fn linear_propagate_field(field: &Field, eq: LinearEq, t_or_xi: f64) -> Result<Field> {
    let spec = dft_forward(field);
    let out = dft_inverse(&linear_propagator(&spec, eq, t_or_xi)?);
    let real_multiplier = matches!(eq, LinearEq::Diffusion | LinearEq::AcLinear(_));
    if field.is_real() && real_multiplier {
        out.try_into_real(1e-9)
    } else {
        Ok(out)
    }
}

/// Exact flow of the Allen-Cahn reaction `du/dt = u - u^3` over time
/// `tau`:  `u / sqrt(exp(-2 tau) + (1 - exp(-2 tau)) u^2)`.
///
/// The radicand is bounded below by `exp(-2 tau) > 0` for real `u`, so no
/// stabilizer term is needed and the fixed points 0 and +-1 are preserved
/// exactly.
#[inline]
pub fn ac_flow(u: f64, tau: f64) -> f64 {
    let e = (-2.0 * tau).exp();
    u / (e + (1.0 - e) * u * u).sqrt()
}

/// Derivative of [`ac_flow`] with respect to `u`:
/// `exp(-2 tau) / (exp(-2 tau) + (1 - exp(-2 tau)) u^2)^(3/2)`.
#[inline]
pub fn ac_flow_du(u: f64, tau: f64) -> f64 {
    let e = (-2.0 * tau).exp();
    let d2 = e + (1.0 - e) * u * u;
    e / (d2 * d2.sqrt())
}

/// Derivative of [`ac_flow`] with respect to `tau`:
/// `u exp(-2 tau) (1 - u^2) / (...)^(3/2)`.
#[inline]
pub fn ac_flow_dtau(u: f64, tau: f64) -> f64 {
    let e = (-2.0 * tau).exp();
    let d2 = e + (1.0 - e) * u * u;
    u * e * (1.0 - u * u) / (d2 * d2.sqrt())
}

/// Exact flow of the Allen-Cahn reaction applied elementwise to a real
/// field.
pub fn ac_nonlinear_step(u: &Field, tau: f64) -> Result<Field> {
    if tau < 0.0 {
        return Err(DosnetError::arg("tau must be nonnegative"));
    }
    if !u.is_real() {
        return Err(DosnetError::DtypeMismatch(
            "Allen-Cahn reaction step needs a real field".into(),
        ));
    }
    u.map_real(|x| ac_flow(x, tau))
}

/// Exact flow of the Kerr nonlinearity: intensity-dependent phase
/// rotation `u exp(+- i gamma xi |u|^2)` (+ forward, - backward).
#[inline]
pub fn nlse_phase(u: Complex64, gamma_xi_signed: f64) -> Complex64 {
    u * Complex64::new(0.0, gamma_xi_signed * u.norm_sqr()).exp()
}

/// Exact flow of the Kerr nonlinearity applied elementwise to a complex
/// field over distance `xi`. Preserves the modulus of every sample.
pub fn nlse_nonlinear_step(u: &Field, xi: f64, gamma: f64, direction: Direction) -> Result<Field> {
    if xi < 0.0 {
        return Err(DosnetError::arg("xi must be nonnegative"));
    }
    if u.is_real() {
        return Err(DosnetError::DtypeMismatch(
            "Kerr phase rotation needs a complex field".into(),
        ));
    }
    let s = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    u.map_complex(|z| nlse_phase(z, s * gamma * xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{l2_relative, Grid};
    use std::f64::consts::PI;

    fn sine_field(n: usize) -> Field {
        let grid = Grid::new_1d(n, -PI, PI).unwrap();
        Field::from_fn_1d(grid, |x| x.sin())
    }

    #[test]
    fn diffusion_decays_single_mode() {
        let u0 = sine_field(128);
        let out = linear_propagate_field(&u0, LinearEq::Diffusion, 0.03).unwrap();
        let expected = u0.map_real(|v| v * (-0.03f64).exp()).unwrap();
        assert!(l2_relative(&out, &expected).unwrap() < 1e-12);
        let peak = out.as_real().unwrap().iter().cloned().fold(0.0, f64::max);
        assert!((peak - 0.970446) < 1e-4);
    }

    #[test]
    fn advection_shifts_sine() {
        let grid = Grid::new_1d(200, -PI, PI).unwrap();
        let u0 = Field::from_fn_1d(grid.clone(), |x| (2.0 * x).sin());
        let t = 0.3;
        let out = linear_propagate_field(&u0, LinearEq::Advection, t).unwrap();
        let expected = Field::from_fn_1d(grid, move |x| (2.0 * (x - t)).sin());
        let out_re = out.try_into_real(1e-9).unwrap();
        assert!(l2_relative(&out_re, &expected).unwrap() < 1e-11);
    }

    #[test]
    fn advection_preserves_mode_amplitudes() {
        let u0 = sine_field(64);
        let out = linear_propagate_field(&u0, LinearEq::Advection, 0.7).unwrap();
        assert!((out.l2_norm() - u0.l2_norm()).abs() < 1e-10 * u0.l2_norm());
    }

    #[test]
    fn schrodinger_conserves_norm() {
        let grid = Grid::new_1d(100, -PI, PI).unwrap();
        let mut rng = crate::rng::SeedRng::new(5);
        let v: Vec<Complex64> = (0..100)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let u0 = Field::new_complex(grid, v).unwrap();
        let out = linear_propagate_field(&u0, LinearEq::Schrodinger, 0.13).unwrap();
        assert!((out.l2_norm() - u0.l2_norm()).abs() < 1e-10 * u0.l2_norm());
    }

    #[test]
    fn nlse_linear_without_dispersion_is_pure_gain() {
        let grid = Grid::new_1d(64, 0.0, 64.0).unwrap();
        let mut rng = crate::rng::SeedRng::new(6);
        let v: Vec<Complex64> = (0..64)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let u0 = Field::new_complex(grid, v).unwrap();
        let p = NlseParams::new(0.063, 0.0, 0.0, Direction::Backward).unwrap();
        let xi = 10.0;
        let out = linear_propagate_field(&u0, LinearEq::NlseLinear(p), xi).unwrap();
        let expected = u0.map_complex(|z| z * (0.063 * xi / 2.0).exp()).unwrap();
        assert!(l2_relative(&out, &expected).unwrap() < 1e-12);
    }

    #[test]
    fn ac_flow_fixed_points_are_exact() {
        for tau in [0.1, 1.0, 17.0] {
            assert_eq!(ac_flow(1.0, tau), 1.0);
            assert_eq!(ac_flow(-1.0, tau), -1.0);
            assert_eq!(ac_flow(0.0, tau), 0.0);
        }
    }

    #[test]
    fn ac_flow_matches_rk4_integration() {
        // Independent oracle: RK4 on du/dt = u - u^3 with tiny steps.
        let rk4 = |u0: f64, t: f64, steps: usize| -> f64 {
            let h = t / steps as f64;
            let f = |u: f64| u - u * u * u;
            let mut u = u0;
            for _ in 0..steps {
                let k1 = f(u);
                let k2 = f(u + 0.5 * h * k1);
                let k3 = f(u + 0.5 * h * k2);
                let k4 = f(u + h * k3);
                u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            u
        };
        let got = ac_flow(0.5, 0.5);
        let want = rk4(0.5, 0.5, 4000);
        assert!((got - want).abs() < 1e-6, "{} vs {}", got, want);
        assert!((got - 0.6895).abs() < 1e-3);
    }

    #[test]
    fn ac_flow_is_monotone_and_saturates() {
        let tau = 0.7;
        let mut prev = ac_flow(-2.0, tau);
        let mut u = -2.0 + 1e-2;
        while u <= 2.0 {
            let cur = ac_flow(u, tau);
            assert!(cur > prev);
            prev = cur;
            u += 1e-2;
        }
        for u in [0.1, -0.1, 0.5, -2.0, 3.0] {
            assert!((ac_flow(u, 50.0) - u.signum()).abs() < 1e-12);
        }
    }

    #[test]
    fn kerr_phase_preserves_modulus_and_rotates() {
        let one = Complex64::new(1.0, 0.0);
        let rotated = nlse_phase(one, -PI);
        assert!((rotated - Complex64::new(-1.0, 0.0)).norm() < 1e-12);

        let grid = Grid::new_1d(32, 0.0, 32.0).unwrap();
        let mut rng = crate::rng::SeedRng::new(7);
        let v: Vec<Complex64> = (0..32)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let u = Field::new_complex(grid, v).unwrap();
        let out = nlse_nonlinear_step(&u, 3.0, 1.66, Direction::Forward).unwrap();
        for (a, b) in out
            .as_complex()
            .unwrap()
            .iter()
            .zip(u.as_complex().unwrap())
        {
            assert!((a.norm() - b.norm()).abs() < 1e-15 * b.norm().max(1.0));
        }
        // Forward then backward with equal xi is the identity.
        let back = nlse_nonlinear_step(&out, 3.0, 1.66, Direction::Backward).unwrap();
        assert!(l2_relative(&back, &u).unwrap() < 1e-12);
    }

    #[test]
    fn kerr_phase_leaves_zeros_alone() {
        let z = Complex64::new(0.0, 0.0);
        assert_eq!(nlse_phase(z, 2.5), z);
    }

    #[test]
    fn ac_derivatives_match_finite_differences() {
        let h = 1e-6;
        for &(u, tau) in &[(0.3, 0.4), (-0.8, 1.2), (1.5, 0.1)] {
            let du = (ac_flow(u + h, tau) - ac_flow(u - h, tau)) / (2.0 * h);
            assert!((du - ac_flow_du(u, tau)).abs() < 1e-8);
            let dt = (ac_flow(u, tau + h) - ac_flow(u, tau - h)) / (2.0 * h);
            assert!((dt - ac_flow_dtau(u, tau)).abs() < 1e-8);
        }
    }
}
