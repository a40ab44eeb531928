//! Dense real/complex tensors for the reverse-mode engine.
//!
//! Layout conventions: data tensors are `[batch, channels, spatial...]`
//! (rank 3 for 1D signals, rank 4 for 2D fields), convolution kernels are
//! `[out_ch, in_ch, k]` or `[out_ch, in_ch, kh, kw]`, dense weights are
//! `[n, n]`, and scalars are `[1]`. Complex values are stored as `(re,
//! im)` pairs; a complex tensor counts two real scalars per element.

use num_complex::Complex64;

use crate::error::{DosnetError, Result};
use crate::field::{Field, FieldData, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DType {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new_real(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(DosnetError::dim(format!(
                "shape {:?} does not match {} values",
                shape,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: TensorData::Real(data),
        })
    }

    pub fn new_complex(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(DosnetError::dim(format!(
                "shape {:?} does not match {} values",
                shape,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: TensorData::Complex(data),
        })
    }

    pub fn zeros(shape: Vec<usize>, dtype: DType) -> Tensor {
        let n = shape.iter().product();
        let data = match dtype {
            DType::Real => TensorData::Real(vec![0.0; n]),
            DType::Complex => TensorData::Complex(vec![Complex64::new(0.0, 0.0); n]),
        };
        Tensor { shape, data }
    }

    pub fn zeros_like(other: &Tensor) -> Tensor {
        Tensor::zeros(other.shape.clone(), other.dtype())
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: TensorData::Real(vec![v]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Number of real scalars (complex elements count twice).
    pub fn real_scalar_count(&self) -> usize {
        match self.data {
            TensorData::Real(_) => self.numel(),
            TensorData::Complex(_) => 2 * self.numel(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::Real(_) => DType::Real,
            TensorData::Complex(_) => DType::Complex,
        }
    }

    pub fn is_real(&self) -> bool {
        self.dtype() == DType::Real
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1 && self.is_real()
    }

    pub fn scalar_value(&self) -> Result<f64> {
        match (&self.data, self.numel()) {
            (TensorData::Real(v), 1) => Ok(v[0]),
            _ => Err(DosnetError::DtypeMismatch(
                "expected a real scalar tensor".into(),
            )),
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.data {
            TensorData::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_real_mut(&mut self) -> Option<&mut [f64]> {
        match &mut self.data {
            TensorData::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_complex(&self) -> Option<&[Complex64]> {
        match &self.data {
            TensorData::Complex(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_complex_mut(&mut self) -> Option<&mut [Complex64]> {
        match &mut self.data {
            TensorData::Complex(v) => Some(v),
            _ => None,
        }
    }

    /// `self += other`, elementwise; shapes and dtypes must match.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(DosnetError::dim("add_assign shape mismatch"));
        }
        match (&mut self.data, &other.data) {
            (TensorData::Real(a), TensorData::Real(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            (TensorData::Complex(a), TensorData::Complex(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            _ => return Err(DosnetError::DtypeMismatch("add_assign dtype mismatch".into())),
        }
        Ok(())
    }

    /// Largest absolute real scalar (complex: max of |re|, |im|).
    pub fn max_abs_scalar(&self) -> f64 {
        match &self.data {
            TensorData::Real(v) => v.iter().fold(0.0, |acc, x| acc.max(x.abs())),
            TensorData::Complex(v) => v
                .iter()
                .fold(0.0, |acc, z| acc.max(z.re.abs()).max(z.im.abs())),
        }
    }

    pub fn has_nan(&self) -> bool {
        match &self.data {
            TensorData::Real(v) => v.iter().any(|x| x.is_nan()),
            TensorData::Complex(v) => v.iter().any(|z| z.re.is_nan() || z.im.is_nan()),
        }
    }

    /// Real scalar at flat position `i` in (re, im)-interleaved order.
    pub fn real_scalar(&self, i: usize) -> f64 {
        match &self.data {
            TensorData::Real(v) => v[i],
            TensorData::Complex(v) => {
                let z = v[i / 2];
                if i % 2 == 0 {
                    z.re
                } else {
                    z.im
                }
            }
        }
    }

    /// Mutates the real scalar at flat position `i` (see [`Tensor::real_scalar`]).
    pub fn set_real_scalar(&mut self, i: usize, value: f64) {
        match &mut self.data {
            TensorData::Real(v) => v[i] = value,
            TensorData::Complex(v) => {
                let z = &mut v[i / 2];
                if i % 2 == 0 {
                    z.re = value;
                } else {
                    z.im = value;
                }
            }
        }
    }

    /// Stacks single-sample tensors `[1, C, sp..]` into a batch `[B, C, sp..]`.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| DosnetError::arg("cannot stack an empty list"))?;
        if first.shape.is_empty() || first.shape[0] != 1 {
            return Err(DosnetError::dim("stack expects leading batch dim of 1"));
        }
        let mut shape = first.shape.clone();
        shape[0] = items.len();
        match &first.data {
            TensorData::Real(_) => {
                let mut data = Vec::with_capacity(first.numel() * items.len());
                for it in items {
                    if it.shape != first.shape {
                        return Err(DosnetError::dim("stack shape mismatch"));
                    }
                    data.extend_from_slice(it.as_real().ok_or_else(|| {
                        DosnetError::DtypeMismatch("stack dtype mismatch".into())
                    })?);
                }
                Tensor::new_real(shape, data)
            }
            TensorData::Complex(_) => {
                let mut data = Vec::with_capacity(first.numel() * items.len());
                for it in items {
                    if it.shape != first.shape {
                        return Err(DosnetError::dim("stack shape mismatch"));
                    }
                    data.extend_from_slice(it.as_complex().ok_or_else(|| {
                        DosnetError::DtypeMismatch("stack dtype mismatch".into())
                    })?);
                }
                Tensor::new_complex(shape, data)
            }
        }
    }

    /// Extracts batch item `b` as a `[1, C, sp..]` tensor.
    pub fn batch_item(&self, b: usize) -> Result<Tensor> {
        let bsz = self.shape[0];
        if b >= bsz {
            return Err(DosnetError::arg("batch index out of range"));
        }
        let per = self.numel() / bsz;
        let mut shape = self.shape.clone();
        shape[0] = 1;
        match &self.data {
            TensorData::Real(v) => Tensor::new_real(shape, v[b * per..(b + 1) * per].to_vec()),
            TensorData::Complex(v) => {
                Tensor::new_complex(shape, v[b * per..(b + 1) * per].to_vec())
            }
        }
    }

    /// Wraps a field as a single-sample, single-channel tensor.
    pub fn from_field(field: &Field) -> Tensor {
        let mut shape = vec![1, 1];
        shape.extend_from_slice(field.grid().dims());
        match field.data() {
            FieldData::Real(v) => Tensor {
                shape,
                data: TensorData::Real(v.clone()),
            },
            FieldData::Complex(v) => Tensor {
                shape,
                data: TensorData::Complex(v.clone()),
            },
        }
    }

    /// Interprets a `[1, 1, sp..]` tensor as a field on `grid`.
    pub fn to_field(&self, grid: &Grid) -> Result<Field> {
        if self.shape.len() < 2 || self.shape[0] != 1 || self.shape[1] != 1 {
            return Err(DosnetError::dim(
                "to_field expects a [1, 1, spatial..] tensor",
            ));
        }
        if self.shape[2..] != *grid.dims() {
            return Err(DosnetError::dim("to_field spatial dims do not match grid"));
        }
        match &self.data {
            TensorData::Real(v) => Field::new_real(grid.clone(), v.clone()),
            TensorData::Complex(v) => Field::new_complex(grid.clone(), v.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_scalar_indexing_interleaves_complex_parts() {
        let t = Tensor::new_complex(
            vec![1, 1, 2],
            vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)],
        )
        .unwrap();
        assert_eq!(t.real_scalar_count(), 4);
        assert_eq!(
            (0..4).map(|i| t.real_scalar(i)).collect::<Vec<_>>(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn stack_and_split_round_trip() {
        let a = Tensor::new_real(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::new_real(vec![1, 1, 3], vec![4.0, 5.0, 6.0]).unwrap();
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 3]);
        assert_eq!(s.batch_item(0).unwrap(), a);
        assert_eq!(s.batch_item(1).unwrap(), b);
    }
}
