//! Synthetic dataset construction for the linear toys and Allen-Cahn,
//! plus the on-disk dataset format.
//!
//! Binary layout ("DOSD", little-endian):
//!
//! ```text
//! magic "DOSD" | version u32 = 1 | eq u32 | dtype u32 (1 f64, 2 c128)
//! pair count u64 | rank u32 | dims u32 x rank | (min f64, max f64) x rank
//! horizon f64 | train count u64
//! payload: all inputs then all targets, row-major f64
//!          (complex samples interleaved re, im)
//! ```

use num_complex::Complex64;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::binio::*;
use crate::error::{DosnetError, Result};
use crate::exec;
use crate::field::{dft_inverse, Field, FieldData, Grid, Spectrum};
use crate::model::TrainSamples;
use crate::pde::{linear_propagate_field, AllenCahnParams, LinearEq};
use crate::rng::SeedRng;
use crate::solvers::strang_allen_cahn;

/// Which evolution produced a dataset's targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EqTag {
    Advection,
    Diffusion,
    Schrodinger,
    AllenCahn,
    /// Fiber waveforms (receiver input, transmitter target).
    FiberSignal,
}

impl EqTag {
    fn code(self) -> u32 {
        match self {
            EqTag::Advection => 0,
            EqTag::Diffusion => 1,
            EqTag::Schrodinger => 2,
            EqTag::AllenCahn => 3,
            EqTag::FiberSignal => 4,
        }
    }

    fn from_code(code: u32) -> Result<EqTag> {
        Ok(match code {
            0 => EqTag::Advection,
            1 => EqTag::Diffusion,
            2 => EqTag::Schrodinger,
            3 => EqTag::AllenCahn,
            4 => EqTag::FiberSignal,
            other => {
                return Err(DosnetError::Format(format!(
                    "unknown equation tag {}",
                    other
                )))
            }
        })
    }
}

/// Input/target field pairs with a train/test split (the first `n_train`
/// pairs are the training set).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub eq: EqTag,
    pub horizon: f64,
    pub grid: Grid,
    pub inputs: Vec<Field>,
    pub targets: Vec<Field>,
    pub n_train: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn train_view(&self) -> DatasetView<'_> {
        DatasetView {
            dataset: self,
            offset: 0,
            count: self.n_train,
        }
    }

    pub fn test_view(&self) -> DatasetView<'_> {
        DatasetView {
            dataset: self,
            offset: self.n_train,
            count: self.len() - self.n_train,
        }
    }
}

/// A contiguous slice of a dataset exposed as training samples.
pub struct DatasetView<'a> {
    dataset: &'a Dataset,
    offset: usize,
    count: usize,
}

impl DatasetView<'_> {
    pub fn input(&self, idx: usize) -> &Field {
        &self.dataset.inputs[self.offset + idx]
    }

    pub fn target(&self, idx: usize) -> &Field {
        &self.dataset.targets[self.offset + idx]
    }
}

impl TrainSamples for DatasetView<'_> {
    fn len(&self) -> usize {
        self.count
    }

    fn sample(&self, idx: usize) -> Result<(Tensor, Tensor)> {
        if idx >= self.count {
            return Err(DosnetError::arg("sample index out of range"));
        }
        let i = self.offset + idx;
        Ok((
            Tensor::from_field(&self.dataset.inputs[i]),
            Tensor::from_field(&self.dataset.targets[i]),
        ))
    }
}

/// Random band-limited 1D initial condition
/// `sum_{k=1..m} c_k sin(kx) + q_k cos(kx)` with standard normal
/// coefficients. Zero-mean by construction (no k = 0 term).
pub fn sample_fourier_ic(m: usize, rng: &mut SeedRng, grid: &Grid) -> Result<Field> {
    if grid.rank() != 1 {
        return Err(DosnetError::dim("1D grid expected"));
    }
    if m < 1 || 2 * m >= grid.dims()[0] {
        return Err(DosnetError::arg(format!(
            "mode count {} out of range for {} points",
            m,
            grid.dims()[0]
        )));
    }
    let coeffs: Vec<(f64, f64)> = (0..m).map(|_| (rng.normal(), rng.normal())).collect();
    let base = 2.0 * std::f64::consts::PI / grid.extent(0);
    Ok(Field::from_fn_1d(grid.clone(), move |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &(c, q))| {
                let k = (i + 1) as f64 * base;
                c * (k * x).sin() + q * (k * x).cos()
            })
            .sum()
    }))
}

/// Random band-limited 2D initial condition built from a Hermitian
/// spectrum over modes with both frequency indices below
/// `max_freq_exclusive`, normalized to unit pointwise variance and then
/// saturated into `(-1, 1)` with tanh.
///
/// The smooth saturation (rather than a hard clamp) keeps the sampled
/// field free of derivative kinks; a hard clamp leaves Gibbs overshoot of
/// around 1% in the spectral solver, which would break the phase-field
/// band the targets are expected to stay in.
pub fn sample_fourier_ic_2d(
    max_freq_exclusive: usize,
    rng: &mut SeedRng,
    grid: &Grid,
) -> Result<Field> {
    if grid.rank() != 2 {
        return Err(DosnetError::dim("2D grid expected"));
    }
    let maxf = max_freq_exclusive as i64;
    let (n0, n1) = (grid.dims()[0], grid.dims()[1]);
    if maxf as usize >= n0.div_ceil(2) || maxf as usize >= n1.div_ceil(2) {
        return Err(DosnetError::arg("band limit too large for grid"));
    }
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n0 * n1];
    let wrap = |m: i64, n: usize| -> usize {
        if m >= 0 {
            m as usize
        } else {
            (n as i64 + m) as usize
        }
    };
    let mut n_modes = 0usize;
    for m0 in -(maxf - 1)..maxf {
        for m1 in -(maxf - 1)..maxf {
            // assign each conjugate pair once
            if (m0, m1) < (-m0, -m1) {
                continue;
            }
            let idx = wrap(m0, n0) * n1 + wrap(m1, n1);
            if m0 == 0 && m1 == 0 {
                coeffs[idx] = Complex64::new(rng.normal(), 0.0);
                n_modes += 1;
            } else {
                let z = Complex64::new(rng.normal(), rng.normal()) / 2f64.sqrt();
                let conj_idx = wrap(-m0, n0) * n1 + wrap(-m1, n1);
                coeffs[idx] = z;
                coeffs[conj_idx] = z.conj();
                n_modes += 2;
            }
        }
    }
    // The inverse transform divides by n0*n1; rescale so the field keeps
    // unit pointwise variance before clamping.
    let scale = (n0 * n1) as f64 / (n_modes as f64).sqrt();
    for c in coeffs.iter_mut() {
        *c *= scale;
    }
    let spec = Spectrum::new(grid.clone(), coeffs)?;
    let field = dft_inverse(&spec).try_into_real(1e-9)?;
    field.map_real(f64::tanh)
}

/// Which linear toy problem to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyEq {
    Advection,
    Diffusion,
    Schrodinger,
}

impl ToyEq {
    fn tag(self) -> EqTag {
        match self {
            ToyEq::Advection => EqTag::Advection,
            ToyEq::Diffusion => EqTag::Diffusion,
            ToyEq::Schrodinger => EqTag::Schrodinger,
        }
    }

    fn linear_eq(self) -> LinearEq {
        match self {
            ToyEq::Advection => LinearEq::Advection,
            ToyEq::Diffusion => LinearEq::Diffusion,
            ToyEq::Schrodinger => LinearEq::Schrodinger,
        }
    }
}

/// Linear-toy dataset: band-limited random inputs (10 modes) paired with
/// the exact spectral solution at time `horizon`.
pub fn build_linear_dataset(
    eq: ToyEq,
    n_pairs: usize,
    horizon: f64,
    grid: &Grid,
    split_frac: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..1.0).contains(&split_frac) || split_frac == 0.0 {
        return Err(DosnetError::arg("split fraction must be in (0, 1)"));
    }
    let base = SeedRng::new(seed);
    let pairs: Vec<Result<(Field, Field)>> = exec::map_indexed(n_pairs, |i| {
        let mut rng = base.substream(i as u64);
        let u0 = sample_fourier_ic(10, &mut rng, grid)?;
        let target = linear_propagate_field(&u0, eq.linear_eq(), horizon)?;
        match eq {
            ToyEq::Schrodinger => {
                let u0c = Field::new_complex(grid.clone(), u0.to_complex_vec())?;
                Ok((u0c, target))
            }
            ToyEq::Advection => Ok((u0, target.try_into_real(1e-9)?)),
            ToyEq::Diffusion => Ok((u0, target)),
        }
    });
    let mut inputs = Vec::with_capacity(n_pairs);
    let mut targets = Vec::with_capacity(n_pairs);
    for p in pairs {
        let (i, t) = p?;
        inputs.push(i);
        targets.push(t);
    }
    Ok(Dataset {
        eq: eq.tag(),
        horizon,
        grid: grid.clone(),
        inputs,
        targets,
        n_train: (split_frac * n_pairs as f64).floor() as usize,
    })
}

/// Allen-Cahn dataset: clamped band-limited 2D inputs paired with the
/// Strang-splitting solution at time `horizon` computed with step
/// `tau_ref`.
pub fn build_ac_dataset(
    n_pairs: usize,
    horizon: f64,
    tau_ref: f64,
    params: AllenCahnParams,
    grid: &Grid,
    split_frac: f64,
    seed: u64,
) -> Result<Dataset> {
    if grid.rank() != 2 {
        return Err(DosnetError::dim("Allen-Cahn dataset needs a 2D grid"));
    }
    if !(0.0..1.0).contains(&split_frac) || split_frac == 0.0 {
        return Err(DosnetError::arg("split fraction must be in (0, 1)"));
    }
    let base = SeedRng::new(seed);
    let pairs: Vec<Result<(Field, Field)>> = exec::map_indexed(n_pairs, |i| {
        let mut rng = base.substream(i as u64);
        let u0 = sample_fourier_ic_2d(8, &mut rng, grid)?;
        let traj = strang_allen_cahn(&u0, horizon, tau_ref, params, usize::MAX)?;
        Ok((u0, traj.last().clone()))
    });
    let mut inputs = Vec::with_capacity(n_pairs);
    let mut targets = Vec::with_capacity(n_pairs);
    for p in pairs {
        let (i, t) = p?;
        inputs.push(i);
        targets.push(t);
    }
    Ok(Dataset {
        eq: EqTag::AllenCahn,
        horizon,
        grid: grid.clone(),
        inputs,
        targets,
        n_train: (split_frac * n_pairs as f64).floor() as usize,
    })
}

const MAGIC: &[u8; 4] = b"DOSD";
const VERSION: u32 = 1;

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    if ds.inputs.len() != ds.targets.len() {
        return Err(DosnetError::dim("inputs/targets length mismatch"));
    }
    let dtype = match ds.inputs.first().map(|f| f.is_real()) {
        Some(true) => 1u32,
        Some(false) => 2u32,
        None => 1u32,
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, ds.eq.code())?;
    write_u32(&mut w, dtype)?;
    write_u64(&mut w, ds.inputs.len() as u64)?;
    write_u32(&mut w, ds.grid.rank() as u32)?;
    for &d in ds.grid.dims() {
        write_u32(&mut w, d as u32)?;
    }
    for &(lo, hi) in ds.grid.domain() {
        write_f64(&mut w, lo)?;
        write_f64(&mut w, hi)?;
    }
    write_f64(&mut w, ds.horizon)?;
    write_u64(&mut w, ds.n_train as u64)?;
    for field in ds.inputs.iter().chain(&ds.targets) {
        if field.grid() != &ds.grid {
            return Err(DosnetError::dim("all fields must share the dataset grid"));
        }
        match field.data() {
            FieldData::Real(v) => {
                if dtype != 1 {
                    return Err(DosnetError::DtypeMismatch("mixed dtypes in dataset".into()));
                }
                for &x in v {
                    write_f64(&mut w, x)?;
                }
            }
            FieldData::Complex(v) => {
                if dtype != 2 {
                    return Err(DosnetError::DtypeMismatch("mixed dtypes in dataset".into()));
                }
                for z in v {
                    write_f64(&mut w, z.re)?;
                    write_f64(&mut w, z.im)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| DosnetError::Format("truncated dataset header".into()))?;
    if &magic != MAGIC {
        return Err(DosnetError::Format(format!("bad dataset magic {:?}", magic)));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(DosnetError::Format(format!(
            "unsupported dataset version {}",
            version
        )));
    }
    let eq = EqTag::from_code(read_u32(&mut r)?)?;
    let dtype = read_u32(&mut r)?;
    let n_pairs = read_u64(&mut r)? as usize;
    let rank = read_u32(&mut r)? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(read_u32(&mut r)? as usize);
    }
    let mut domain = Vec::with_capacity(rank);
    for _ in 0..rank {
        let lo = read_f64(&mut r)?;
        let hi = read_f64(&mut r)?;
        domain.push((lo, hi));
    }
    let horizon = read_f64(&mut r)?;
    let n_train = read_u64(&mut r)? as usize;
    let grid = Grid::new(dims, domain)?;
    let numel = grid.len();

    let read_field = |r: &mut BufReader<File>| -> Result<Field> {
        match dtype {
            1 => Field::new_real(grid.clone(), read_f64_vec(r, numel)?),
            2 => {
                let raw = read_f64_vec(r, 2 * numel)?;
                Field::new_complex(
                    grid.clone(),
                    raw.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
                )
            }
            other => Err(DosnetError::Format(format!("unknown dtype code {}", other))),
        }
    };
    let mut inputs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        inputs.push(read_field(&mut r)?);
    }
    let mut targets = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        targets.push(read_field(&mut r)?);
    }
    Ok(Dataset {
        eq,
        horizon,
        grid,
        inputs,
        targets,
        n_train,
    })
}
