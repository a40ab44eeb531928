//! Periodic grids, sampled fields, and discrete Fourier transforms.
//!
//! A [`Grid`] is a uniform periodic mesh over a 1D or 2D box (the last
//! point of each axis is excluded, so spacing is `(max - min) / n`). A
//! [`Field`] holds real or complex samples on a grid in row-major order,
//! and a [`Spectrum`] holds its DFT coefficients.
//!
//! Convention: the forward transform is unnormalized,
//! `X[k] = sum_j x[j] exp(-2*pi*i*j*k/n)`, and the inverse carries the
//! `1/n` factor, so Parseval reads `||x||^2 = ||X||^2 / n`. Wavenumbers
//! follow the standard DFT layout with negative frequencies in the upper
//! half of each axis.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{DosnetError, Result};

/// Uniform periodic grid, 1D or 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: Vec<usize>,
    domain: Vec<(f64, f64)>,
}

impl Grid {
    pub fn new_1d(n: usize, min: f64, max: f64) -> Result<Grid> {
        Grid::new(vec![n], vec![(min, max)])
    }

    pub fn new_2d(dims: [usize; 2], domain: [(f64, f64); 2]) -> Result<Grid> {
        Grid::new(dims.to_vec(), domain.to_vec())
    }

    pub fn new(dims: Vec<usize>, domain: Vec<(f64, f64)>) -> Result<Grid> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(DosnetError::arg("grid rank must be 1 or 2"));
        }
        if dims.len() != domain.len() {
            return Err(DosnetError::dim("dims/domain length mismatch"));
        }
        if dims.iter().any(|&n| n < 2) {
            return Err(DosnetError::arg("all grid dims must be >= 2"));
        }
        if domain.iter().any(|&(lo, hi)| !(hi > lo)) {
            return Err(DosnetError::arg("each axis needs max > min"));
        }
        Ok(Grid { dims, domain })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Axis length `max - min`.
    pub fn extent(&self, axis: usize) -> f64 {
        let (lo, hi) = self.domain[axis];
        hi - lo
    }

    /// Sample spacing along `axis` (periodic convention).
    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent(axis) / self.dims[axis] as f64
    }

    /// Sample coordinates along `axis` (last point excluded).
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let (lo, _) = self.domain[axis];
        let dx = self.spacing(axis);
        (0..self.dims[axis]).map(|j| lo + j as f64 * dx).collect()
    }

    /// Angular wavenumbers along `axis` in DFT order: index `j` maps to
    /// `2*pi*m/L` with `m = j` in the lower half and `m = j - n` in the
    /// upper half.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.dims[axis];
        let scale = 2.0 * std::f64::consts::PI / self.extent(axis);
        (0..n)
            .map(|j| {
                let m = if j < n.div_ceil(2) {
                    j as i64
                } else {
                    j as i64 - n as i64
                };
                scale * m as f64
            })
            .collect()
    }
}

/// Field samples: real or complex.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// A real- or complex-valued function sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: FieldData,
}

impl Field {
    pub fn new_real(grid: Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(DosnetError::dim(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid,
            data: FieldData::Real(values),
        })
    }

    pub fn new_complex(grid: Grid, values: Vec<Complex64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(DosnetError::dim(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid,
            data: FieldData::Complex(values),
        })
    }

    pub fn zeros_real(grid: Grid) -> Field {
        let n = grid.len();
        Field {
            grid,
            data: FieldData::Real(vec![0.0; n]),
        }
    }

    pub fn zeros_complex(grid: Grid) -> Field {
        let n = grid.len();
        Field {
            grid,
            data: FieldData::Complex(vec![Complex64::new(0.0, 0.0); n]),
        }
    }

    /// Real 1D field from a function of the coordinate.
    pub fn from_fn_1d(grid: Grid, f: impl Fn(f64) -> f64) -> Field {
        let values = grid.coords(0).iter().map(|&x| f(x)).collect();
        Field {
            grid,
            data: FieldData::Real(values),
        }
    }

    /// Real 2D field from a function of both coordinates.
    pub fn from_fn_2d(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Field {
        let xs0 = grid.coords(0);
        let xs1 = grid.coords(1);
        let mut values = Vec::with_capacity(grid.len());
        for &x0 in &xs0 {
            for &x1 in &xs1 {
                values.push(f(x0, x1));
            }
        }
        Field {
            grid,
            data: FieldData::Real(values),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &FieldData {
        &self.data
    }

    pub fn is_real(&self) -> bool {
        matches!(self.data, FieldData::Real(_))
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.data {
            FieldData::Real(v) => Some(v),
            FieldData::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&[Complex64]> {
        match &self.data {
            FieldData::Complex(v) => Some(v),
            FieldData::Real(_) => None,
        }
    }

    /// Samples widened to complex regardless of kind.
    pub fn to_complex_vec(&self) -> Vec<Complex64> {
        match &self.data {
            FieldData::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            FieldData::Complex(v) => v.clone(),
        }
    }

    /// Drops an imaginary part that is negligible relative to the field
    /// norm (tolerance `tol`, relative).
    pub fn try_into_real(self, tol: f64) -> Result<Field> {
        match self.data {
            FieldData::Real(_) => Ok(self),
            FieldData::Complex(v) => {
                let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let imag: f64 = v.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
                if norm > 0.0 && imag > tol * norm {
                    return Err(DosnetError::Numeric(format!(
                        "imaginary residue {:.3e} exceeds {:.1e} of norm {:.3e}",
                        imag, tol, norm
                    )));
                }
                Field::new_real(self.grid, v.iter().map(|z| z.re).collect())
            }
        }
    }

    /// `sqrt(sum |values|^2)`.
    pub fn l2_norm(&self) -> f64 {
        match &self.data {
            FieldData::Real(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            FieldData::Complex(v) => v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        }
    }

    /// Elementwise map for real fields.
    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        let v = self
            .as_real()
            .ok_or_else(|| DosnetError::DtypeMismatch("expected real field".into()))?;
        Field::new_real(self.grid.clone(), v.iter().map(|&x| f(x)).collect())
    }

    /// Elementwise map for complex fields.
    pub fn map_complex(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Field> {
        let v = self
            .as_complex()
            .ok_or_else(|| DosnetError::DtypeMismatch("expected complex field".into()))?;
        Field::new_complex(self.grid.clone(), v.iter().map(|&z| f(z)).collect())
    }
}

/// DFT coefficients of a field (unnormalized-forward convention).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Spectrum> {
        if coeffs.len() != grid.len() {
            return Err(DosnetError::dim(format!(
                "spectrum has {} coefficients, grid expects {}",
                coeffs.len(),
                grid.len()
            )));
        }
        Ok(Spectrum { grid, coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Multiplies each coefficient by `f(k)` where `k` is the wavenumber
    /// vector of the mode (`k[1] = 0` for 1D grids).
    pub fn scale_modes(&self, f: impl Fn([f64; 2]) -> Complex64) -> Spectrum {
        let k0 = self.grid.wavenumbers(0);
        let mut out = self.clone();
        match self.grid.rank() {
            1 => {
                for (c, &k) in out.coeffs.iter_mut().zip(&k0) {
                    *c *= f([k, 0.0]);
                }
            }
            _ => {
                let k1 = self.grid.wavenumbers(1);
                let n1 = self.grid.dims()[1];
                for (idx, c) in out.coeffs.iter_mut().enumerate() {
                    *c *= f([k0[idx / n1], k1[idx % n1]]);
                }
            }
        }
        out
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let plan: Arc<dyn rustfft::Fft<f64>> = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        }
    });
    plan.process(buf);
}

fn fft_axis0(buf: &mut [Complex64], n0: usize, n1: usize, inverse: bool) {
    let mut col = vec![Complex64::new(0.0, 0.0); n0];
    for j in 0..n1 {
        for i in 0..n0 {
            col[i] = buf[i * n1 + j];
        }
        fft_in_place(&mut col, inverse);
        for i in 0..n0 {
            buf[i * n1 + j] = col[i];
        }
    }
}

/// Forward DFT (unnormalized).
pub fn dft_forward(field: &Field) -> Spectrum {
    let mut buf = field.to_complex_vec();
    let dims = field.grid().dims();
    match dims.len() {
        1 => fft_in_place(&mut buf, false),
        _ => {
            let (n0, n1) = (dims[0], dims[1]);
            for row in buf.chunks_mut(n1) {
                fft_in_place(row, false);
            }
            fft_axis0(&mut buf, n0, n1, false);
        }
    }
    Spectrum {
        grid: field.grid().clone(),
        coeffs: buf,
    }
}

/// Inverse DFT (scaled by `1/n` per axis). Always returns a complex field;
/// use [`Field::try_into_real`] to recover a real one.
pub fn dft_inverse(spectrum: &Spectrum) -> Field {
    let mut buf = spectrum.coeffs.clone();
    let dims = spectrum.grid.dims();
    match dims.len() {
        1 => fft_in_place(&mut buf, true),
        _ => {
            let (n0, n1) = (dims[0], dims[1]);
            for row in buf.chunks_mut(n1) {
                fft_in_place(row, true);
            }
            fft_axis0(&mut buf, n0, n1, true);
        }
    }
    let scale = 1.0 / spectrum.grid.len() as f64;
    for c in buf.iter_mut() {
        *c *= scale;
    }
    Field {
        grid: spectrum.grid.clone(),
        data: FieldData::Complex(buf),
    }
}

/// Spectral derivative along `axis` (exact for band-limited fields).
pub fn spectral_derivative(field: &Field, axis: usize) -> Result<Field> {
    if axis >= field.grid().rank() {
        return Err(DosnetError::arg("axis out of range"));
    }
    let spec = dft_forward(field);
    let scaled = spec.scale_modes(|k| Complex64::new(0.0, k[axis]));
    let out = dft_inverse(&scaled);
    if field.is_real() {
        out.try_into_real(1e-9)
    } else {
        Ok(out)
    }
}

/// Result of [`relative_error`]: the value plus a flag noting whether the
/// denominator underflowed and the L2-relative fallback was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeError {
    pub value: f64,
    pub fallback: bool,
}

/// Mean squared pointwise relative error,
/// `(1/N) sum_i |(pred_i - truth_i) / truth_i|^2`.
///
/// If any `|truth_i|` falls below `1e-12` the pointwise form is undefined;
/// the result falls back to the L2-relative norm
/// `||pred - truth|| / ||truth||` and is flagged.
pub fn relative_error(pred: &Field, truth: &Field) -> Result<RelativeError> {
    if pred.grid() != truth.grid() {
        return Err(DosnetError::dim("relative_error: grids differ"));
    }
    let p = pred.to_complex_vec();
    let t = truth.to_complex_vec();
    let underflow = t.iter().any(|z| z.norm() < 1e-12);
    if underflow {
        let num: f64 = p
            .iter()
            .zip(&t)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if den == 0.0 {
            return Err(DosnetError::Numeric(
                "relative_error: truth is identically zero".into(),
            ));
        }
        return Ok(RelativeError {
            value: num / den,
            fallback: true,
        });
    }
    let n = p.len() as f64;
    let sum: f64 = p
        .iter()
        .zip(&t)
        .map(|(a, b)| ((a - b) / b).norm_sqr())
        .sum();
    Ok(RelativeError {
        value: sum / n,
        fallback: false,
    })
}

/// L2-relative difference `||a - b|| / ||b||`.
pub fn l2_relative(a: &Field, b: &Field) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(DosnetError::dim("l2_relative: grids differ"));
    }
    let av = a.to_complex_vec();
    let bv = b.to_complex_vec();
    let num: f64 = av
        .iter()
        .zip(&bv)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den: f64 = bv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(DosnetError::Numeric("l2_relative: zero reference".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn impulse_has_flat_spectrum() {
        let grid = Grid::new_1d(8, -PI, PI).unwrap();
        let mut v = vec![0.0; 8];
        v[0] = 1.0;
        let f = Field::new_real(grid, v).unwrap();
        let s = dft_forward(&f);
        for c in s.coeffs() {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn sine_occupies_two_bins() {
        let grid = Grid::new_1d(200, -PI, PI).unwrap();
        let f = Field::from_fn_1d(grid, |x| (3.0 * x).sin());
        let s = dft_forward(&f);
        let k = s.grid().wavenumbers(0);
        for (j, c) in s.coeffs().iter().enumerate() {
            let expected = (k[j] - 3.0).abs() < 0.5 || (k[j] + 3.0).abs() < 0.5;
            if expected {
                assert!(c.norm() > 1.0);
            } else {
                assert!(c.norm() < 1e-10, "bin {} = {}", j, c.norm());
            }
        }
    }

    #[test]
    fn real_round_trip_has_tiny_imaginary_residue() {
        let grid = Grid::new_1d(200, -PI, PI).unwrap();
        let mut rng = crate::rng::SeedRng::new(11);
        let v: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
        let f = Field::new_real(grid, v).unwrap();
        let back = dft_inverse(&dft_forward(&f));
        let real = back.try_into_real(1e-12).unwrap();
        let err = l2_relative(&real, &f).unwrap();
        assert!(err < 1e-12);
    }

    #[test]
    fn norm_of_three_four_is_five() {
        let grid = Grid::new_1d(2, 0.0, 1.0).unwrap();
        let f = Field::new_complex(
            grid,
            vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)],
        )
        .unwrap();
        assert!((f.l2_norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn relative_error_doubled_field_is_one() {
        let grid = Grid::new_1d(50, -PI, PI).unwrap();
        let truth = Field::from_fn_1d(grid, |x| 1.5 + x.sin().abs());
        let pred = truth.map_real(|u| 2.0 * u).unwrap();
        let e = relative_error(&pred, &truth).unwrap();
        assert!(!e.fallback);
        assert!((e.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_error_underflow_falls_back() {
        let grid = Grid::new_1d(4, 0.0, 1.0).unwrap();
        let truth = Field::new_real(grid.clone(), vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let pred = Field::new_real(grid, vec![1.0, 0.1, 1.0, 1.0]).unwrap();
        let e = relative_error(&pred, &truth).unwrap();
        assert!(e.fallback);
        assert!((e.value - 0.1 / 3.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wavenumber_layout_matches_fft_order() {
        let grid = Grid::new_1d(8, -PI, PI).unwrap();
        assert_eq!(
            grid.wavenumbers(0),
            vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]
        );
    }
}
