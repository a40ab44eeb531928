//! Circular convolution and dense matmul kernels shared by the graph's
//! forward and backward passes.
//!
//! Convolutions are cross-correlations with a centered, odd-sized kernel
//! and periodic index wrapping, matching circular padding:
//!
//! `out[b,o,n] = sum_{c,j} k[o,c,j] * x[b,c,(n + j - K/2) mod N]`
//!
//! The complex case uses true complex multiply-accumulate. Large 1D
//! complex convolutions take an FFT path (pointwise products of length-N
//! transforms); the direct path is kept for small kernels and as the
//! reference the FFT path is tested against. Parallel execution always
//! splits over disjoint output slices with fixed-order inner sums, so
//! results are bit-identical across thread counts.

use num_complex::Complex64;

use crate::exec;
use crate::field::{dft_forward, dft_inverse, Field, Grid};

/// Scalar abstraction so the same loops serve f64 and Complex64.
pub trait ConvScalar: Copy + Send + Sync + std::ops::AddAssign + std::ops::Mul<Output = Self> {
    fn zero() -> Self;
    /// Complex conjugate (identity for reals).
    fn conj_val(self) -> Self;
}

impl ConvScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn conj_val(self) -> Self {
        self
    }
}

impl ConvScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn conj_val(self) -> Self {
        self.conj()
    }
}

/// When `k * n` exceeds this, complex 1D convolutions go through the FFT.
const FFT_THRESHOLD: usize = 1 << 15;

// ---------------------------------------------------------------------
// 1D
// ---------------------------------------------------------------------

pub fn conv1d_forward<S: ConvScalar>(
    x: &[S],
    k: &[S],
    out: &mut [S],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    n: usize,
    ksize: usize,
) {
    let c0 = ksize / 2;
    exec::for_each_chunk_mut(out, n, |chunk_idx, slot| {
        let b = chunk_idx / out_ch;
        let o = chunk_idx % out_ch;
        for (pos, item) in slot.iter_mut().enumerate() {
            let mut acc = S::zero();
            for c in 0..in_ch {
                let xrow = &x[(b * in_ch + c) * n..(b * in_ch + c + 1) * n];
                let krow = &k[(o * in_ch + c) * ksize..(o * in_ch + c + 1) * ksize];
                for (j, &kv) in krow.iter().enumerate() {
                    let src = (pos + j + n - c0) % n;
                    acc += kv * xrow[src];
                }
            }
            *item = acc;
        }
    });
    let _ = batch;
}

/// Gradient with respect to the input:
/// `gx[b,c,m] = sum_{o,j} conj(k[o,c,j]) * g[b,o,(m - j + K/2) mod N]`.
pub fn conv1d_backward_input<S: ConvScalar>(
    g: &[S],
    k: &[S],
    gx: &mut [S],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    n: usize,
    ksize: usize,
) {
    let c0 = ksize / 2;
    exec::for_each_chunk_mut(gx, n, |chunk_idx, slot| {
        let b = chunk_idx / in_ch;
        let c = chunk_idx % in_ch;
        for (pos, item) in slot.iter_mut().enumerate() {
            let mut acc = S::zero();
            for o in 0..out_ch {
                let grow = &g[(b * out_ch + o) * n..(b * out_ch + o + 1) * n];
                let krow = &k[(o * in_ch + c) * ksize..(o * in_ch + c + 1) * ksize];
                for (j, &kv) in krow.iter().enumerate() {
                    let dst = (pos + n + c0 - j) % n;
                    acc += kv.conj_val() * grow[dst];
                }
            }
            *item = acc;
        }
    });
    let _ = batch;
}

/// Gradient with respect to the kernel:
/// `gk[o,c,j] = sum_{b,n} conj(x[b,c,(n + j - K/2) mod N]) * g[b,o,n]`.
pub fn conv1d_backward_kernel<S: ConvScalar>(
    x: &[S],
    g: &[S],
    gk: &mut [S],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    n: usize,
    ksize: usize,
) {
    let c0 = ksize / 2;
    exec::for_each_chunk_mut(gk, ksize, |chunk_idx, slot| {
        let o = chunk_idx / in_ch;
        let c = chunk_idx % in_ch;
        for (j, item) in slot.iter_mut().enumerate() {
            let mut acc = S::zero();
            for b in 0..batch {
                let xrow = &x[(b * in_ch + c) * n..(b * in_ch + c + 1) * n];
                let grow = &g[(b * out_ch + o) * n..(b * out_ch + o + 1) * n];
                for (pos, &gv) in grow.iter().enumerate() {
                    let src = (pos + j + n - c0) % n;
                    acc += xrow[src].conj_val() * gv;
                }
            }
            *item = acc;
        }
    });
}

// ---------------------------------------------------------------------
// 1D complex FFT path
// ---------------------------------------------------------------------

fn unit_grid(n: usize) -> Grid {
    Grid::new_1d(n, 0.0, n as f64).expect("n >= 2")
}

fn fft_vec(v: Vec<Complex64>) -> Vec<Complex64> {
    let n = v.len();
    let f = Field::new_complex(unit_grid(n), v).expect("length matches grid");
    dft_forward(&f).coeffs().to_vec()
}

fn ifft_vec(v: Vec<Complex64>) -> Vec<Complex64> {
    let n = v.len();
    let s = crate::field::Spectrum::new(unit_grid(n), v).expect("length matches grid");
    dft_inverse(&s).as_complex().unwrap().to_vec()
}

/// Embeds the centered kernel row into a reversed length-`n` circular
/// buffer so that pointwise spectral products implement the centered
/// cross-correlation above.
fn kernel_spectrum(krow: &[Complex64], n: usize, conjugate: bool) -> Vec<Complex64> {
    let ksize = krow.len();
    let c0 = ksize / 2;
    let mut kc = vec![Complex64::new(0.0, 0.0); n];
    for (j, &kv) in krow.iter().enumerate() {
        let d = (j + n - c0) % n; // centered circular embedding
        let rev = (n - d) % n; // index reversal turns correlation into convolution
        kc[rev] = if conjugate { kv.conj() } else { kv };
    }
    fft_vec(kc)
}

pub fn use_fft_path(n: usize, ksize: usize) -> bool {
    n * ksize > FFT_THRESHOLD
}

pub fn conv1d_forward_fft(
    x: &[Complex64],
    k: &[Complex64],
    out: &mut [Complex64],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    n: usize,
    ksize: usize,
) {
    let kspec: Vec<Vec<Complex64>> = exec::map_indexed(out_ch * in_ch, |oc| {
        kernel_spectrum(&k[oc * ksize..(oc + 1) * ksize], n, false)
    });
    let xspec: Vec<Vec<Complex64>> = exec::map_indexed(batch * in_ch, |bc| {
        fft_vec(x[bc * n..(bc + 1) * n].to_vec())
    });
    exec::for_each_chunk_mut(out, n, |chunk_idx, slot| {
        let b = chunk_idx / out_ch;
        let o = chunk_idx % out_ch;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..in_ch {
            let xs = &xspec[b * in_ch + c];
            let ks = &kspec[o * in_ch + c];
            for i in 0..n {
                acc[i] += xs[i] * ks[i];
            }
        }
        slot.copy_from_slice(&ifft_vec(acc));
    });
}

pub fn conv1d_backward_input_fft(
    g: &[Complex64],
    k: &[Complex64],
    gx: &mut [Complex64],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    n: usize,
    ksize: usize,
) {
    // gx[b,c] = sum_o g[b,o] (*) flip(conj(k[o,c])): the adjoint of the
    // forward correlation is a plain circular convolution with the
    // conjugated kernel, i.e. the un-reversed centered embedding.
    let c0 = ksize / 2;
    let kspec: Vec<Vec<Complex64>> = exec::map_indexed(out_ch * in_ch, |oc| {
        let krow = &k[oc * ksize..(oc + 1) * ksize];
        let mut kc = vec![Complex64::new(0.0, 0.0); n];
        for (j, &kv) in krow.iter().enumerate() {
            kc[(j + n - c0) % n] = kv.conj();
        }
        fft_vec(kc)
    });
    let gspec: Vec<Vec<Complex64>> = exec::map_indexed(batch * out_ch, |bo| {
        fft_vec(g[bo * n..(bo + 1) * n].to_vec())
    });
    exec::for_each_chunk_mut(gx, n, |chunk_idx, slot| {
        let b = chunk_idx / in_ch;
        let c = chunk_idx % in_ch;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for o in 0..out_ch {
            let gs = &gspec[b * out_ch + o];
            let ks = &kspec[o * in_ch + c];
            for i in 0..n {
                acc[i] += gs[i] * ks[i];
            }
        }
        slot.copy_from_slice(&ifft_vec(acc));
    });
}

pub fn conv1d_backward_kernel_fft(
    x: &[Complex64],
    g: &[Complex64],
    gk: &mut [Complex64],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    n: usize,
    ksize: usize,
) {
    let c0 = ksize / 2;
    let xspec: Vec<Vec<Complex64>> = exec::map_indexed(batch * in_ch, |bc| {
        fft_vec(x[bc * n..(bc + 1) * n].to_vec())
    });
    let gspec: Vec<Vec<Complex64>> = exec::map_indexed(batch * out_ch, |bo| {
        fft_vec(g[bo * n..(bo + 1) * n].to_vec())
    });
    // r[d] = sum_{b,pos} conj(x[b,c,pos+d]) g[b,o,pos] is the circular
    // cross-correlation of g against x; in the spectral domain it is
    // IFFT(conj(FFT(x)) . FFT(g)) read at -d.
    exec::for_each_chunk_mut(gk, ksize, |chunk_idx, slot| {
        let o = chunk_idx / in_ch;
        let c = chunk_idx % in_ch;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for b in 0..batch {
            let xs = &xspec[b * in_ch + c];
            let gs = &gspec[b * out_ch + o];
            for i in 0..n {
                acc[i] += xs[i].conj() * gs[i];
            }
        }
        let r = ifft_vec(acc);
        for (j, item) in slot.iter_mut().enumerate() {
            let d = (j + n - c0) % n;
            *item = r[(n - d) % n];
        }
    });
}

// ---------------------------------------------------------------------
// 2D
// ---------------------------------------------------------------------

pub fn conv2d_forward<S: ConvScalar>(
    x: &[S],
    k: &[S],
    out: &mut [S],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    hw: (usize, usize),
    ksz: (usize, usize),
) {
    let (h, w) = hw;
    let (kh, kw) = ksz;
    let (ch, cw) = (kh / 2, kw / 2);
    let plane = h * w;
    exec::for_each_chunk_mut(out, plane, |chunk_idx, slot| {
        let b = chunk_idx / out_ch;
        let o = chunk_idx % out_ch;
        for i in 0..h {
            for j in 0..w {
                let mut acc = S::zero();
                for c in 0..in_ch {
                    let xplane = &x[(b * in_ch + c) * plane..(b * in_ch + c + 1) * plane];
                    let kplane = &k[(o * in_ch + c) * kh * kw..(o * in_ch + c + 1) * kh * kw];
                    for p in 0..kh {
                        let row = (i + p + h - ch) % h;
                        for q in 0..kw {
                            let col = (j + q + w - cw) % w;
                            acc += kplane[p * kw + q] * xplane[row * w + col];
                        }
                    }
                }
                slot[i * w + j] = acc;
            }
        }
    });
    let _ = batch;
}

pub fn conv2d_backward_input<S: ConvScalar>(
    g: &[S],
    k: &[S],
    gx: &mut [S],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    hw: (usize, usize),
    ksz: (usize, usize),
) {
    let (h, w) = hw;
    let (kh, kw) = ksz;
    let (ch, cw) = (kh / 2, kw / 2);
    let plane = h * w;
    exec::for_each_chunk_mut(gx, plane, |chunk_idx, slot| {
        let b = chunk_idx / in_ch;
        let c = chunk_idx % in_ch;
        for u in 0..h {
            for v in 0..w {
                let mut acc = S::zero();
                for o in 0..out_ch {
                    let gplane = &g[(b * out_ch + o) * plane..(b * out_ch + o + 1) * plane];
                    let kplane = &k[(o * in_ch + c) * kh * kw..(o * in_ch + c + 1) * kh * kw];
                    for p in 0..kh {
                        let row = (u + h + ch - p) % h;
                        for q in 0..kw {
                            let col = (v + w + cw - q) % w;
                            acc += kplane[p * kw + q].conj_val() * gplane[row * w + col];
                        }
                    }
                }
                slot[u * w + v] = acc;
            }
        }
    });
    let _ = batch;
}

pub fn conv2d_backward_kernel<S: ConvScalar>(
    x: &[S],
    g: &[S],
    gk: &mut [S],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    hw: (usize, usize),
    ksz: (usize, usize),
) {
    let (h, w) = hw;
    let (kh, kw) = ksz;
    let (ch, cw) = (kh / 2, kw / 2);
    let plane = h * w;
    exec::for_each_chunk_mut(gk, kh * kw, |chunk_idx, slot| {
        let o = chunk_idx / in_ch;
        let c = chunk_idx % in_ch;
        for p in 0..kh {
            for q in 0..kw {
                let mut acc = S::zero();
                for b in 0..batch {
                    let xplane = &x[(b * in_ch + c) * plane..(b * in_ch + c + 1) * plane];
                    let gplane = &g[(b * out_ch + o) * plane..(b * out_ch + o + 1) * plane];
                    for i in 0..h {
                        let row = (i + p + h - ch) % h;
                        for j in 0..w {
                            let col = (j + q + w - cw) % w;
                            acc += xplane[row * w + col].conj_val() * gplane[i * w + j];
                        }
                    }
                }
                slot[p * kw + q] = acc;
            }
        }
    });
}

// ---------------------------------------------------------------------
// Dense (square matrix applied along the last axis)
// ---------------------------------------------------------------------

/// `y[r, :] = W x[r, :]` for each leading row `r` (batch x channel).
pub fn dense_forward<S: ConvScalar>(x: &[S], w: &[S], out: &mut [S], rows: usize, n: usize) {
    exec::for_each_chunk_mut(out, n, |r, slot| {
        let xrow = &x[r * n..(r + 1) * n];
        for (m, item) in slot.iter_mut().enumerate() {
            let wrow = &w[m * n..(m + 1) * n];
            let mut acc = S::zero();
            for i in 0..n {
                acc += wrow[i] * xrow[i];
            }
            *item = acc;
        }
    });
    let _ = rows;
}

/// `gx[r, :] = W^H g[r, :]`.
pub fn dense_backward_input<S: ConvScalar>(g: &[S], w: &[S], gx: &mut [S], rows: usize, n: usize) {
    exec::for_each_chunk_mut(gx, n, |r, slot| {
        let grow = &g[r * n..(r + 1) * n];
        for (i, item) in slot.iter_mut().enumerate() {
            let mut acc = S::zero();
            for m in 0..n {
                acc += w[m * n + i].conj_val() * grow[m];
            }
            *item = acc;
        }
    });
    let _ = rows;
}

/// `gW[m, i] = sum_r g[r, m] conj(x[r, i])`.
pub fn dense_backward_weight<S: ConvScalar>(x: &[S], g: &[S], gw: &mut [S], rows: usize, n: usize) {
    exec::for_each_chunk_mut(gw, n, |m, slot| {
        for (i, item) in slot.iter_mut().enumerate() {
            let mut acc = S::zero();
            for r in 0..rows {
                acc += g[r * n + m] * x[r * n + i].conj_val();
            }
            *item = acc;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    fn random_complex(rng: &mut SeedRng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect()
    }

    #[test]
    fn fft_paths_match_direct_paths() {
        let (batch, in_ch, out_ch, n, ksize) = (3, 2, 2, 40, 7);
        let mut rng = SeedRng::new(21);
        let x = random_complex(&mut rng, batch * in_ch * n);
        let k = random_complex(&mut rng, out_ch * in_ch * ksize);
        let g = random_complex(&mut rng, batch * out_ch * n);

        let mut direct = vec![Complex64::new(0.0, 0.0); batch * out_ch * n];
        conv1d_forward(&x, &k, &mut direct, batch, in_ch, out_ch, n, ksize);
        let mut fast = direct.clone();
        conv1d_forward_fft(&x, &k, &mut fast, batch, in_ch, out_ch, n, ksize);
        for (a, b) in direct.iter().zip(&fast) {
            assert!((a - b).norm() < 1e-10);
        }

        let mut gx_direct = vec![Complex64::new(0.0, 0.0); batch * in_ch * n];
        conv1d_backward_input(&g, &k, &mut gx_direct, batch, in_ch, out_ch, n, ksize);
        let mut gx_fast = gx_direct.clone();
        conv1d_backward_input_fft(&g, &k, &mut gx_fast, batch, in_ch, out_ch, n, ksize);
        for (a, b) in gx_direct.iter().zip(&gx_fast) {
            assert!((a - b).norm() < 1e-10);
        }

        let mut gk_direct = vec![Complex64::new(0.0, 0.0); out_ch * in_ch * ksize];
        conv1d_backward_kernel(&x, &g, &mut gk_direct, batch, in_ch, out_ch, n, ksize);
        let mut gk_fast = gk_direct.clone();
        conv1d_backward_kernel_fft(&x, &g, &mut gk_fast, batch, in_ch, out_ch, n, ksize);
        for (a, b) in gk_direct.iter().zip(&gk_fast) {
            assert!((a - b).norm() < 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn identity_kernel_copies_input_1d_and_2d() {
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let k = vec![0.0, 1.0, 0.0];
        let mut out = vec![0.0; 12];
        conv1d_forward(&x, &k, &mut out, 1, 1, 1, 12, 3);
        assert_eq!(out, x);

        let x2: Vec<f64> = (0..16).map(|i| (i * i) as f64).collect();
        let mut k2 = vec![0.0; 9];
        k2[4] = 1.0;
        let mut out2 = vec![0.0; 16];
        conv2d_forward(&x2, &k2, &mut out2, 1, 1, 1, (4, 4), (3, 3));
        assert_eq!(out2, x2);
    }

    #[test]
    fn shift_kernel_rotates_input() {
        let x: Vec<f64> = vec![10.0, 20.0, 30.0, 40.0];
        let k = vec![1.0, 0.0, 0.0]; // j=0 reads x[(n-1) mod n]
        let mut out = vec![0.0; 4];
        conv1d_forward(&x, &k, &mut out, 1, 1, 1, 4, 3);
        assert_eq!(out, vec![40.0, 10.0, 20.0, 30.0]);
    }
}
