//! End-to-end optical transmission simulation: 16-QAM transmitter with
//! root-raised-cosine pulse shaping, a noisy multi-span fiber channel,
//! the matched-filter receiver front-end, segmentation of long signals
//! into padded windows for the compensation network, and BER scoring.
//!
//! Units: time in ps, distance in km, power in W. The waveform grid
//! covers `[0, n_samples * dt)` ps with periodic wrap, so all filtering
//! is circular.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{DosnetError, Result};
use crate::field::{dft_forward, dft_inverse, Field, Grid, Spectrum};
use crate::model::TrainSamples;
use crate::pde::{Direction, NlseParams};
use crate::rng::SeedRng;
use crate::solvers::ssfm_propagate;

/// Planck constant [J s].
const PLANCK: f64 = 6.62607015e-34;

/// Full physical description of the transmission system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Attenuation [1/km].
    pub alpha: f64,
    /// Group-velocity dispersion [ps^2/km].
    pub beta2: f64,
    /// Kerr coefficient [1/(W km)].
    pub gamma: f64,
    pub span_km: f64,
    pub n_spans: usize,
    /// Amplifier noise figure [dB]; `None` disables amplifier noise.
    pub noise_figure_db: Option<f64>,
    /// Carrier frequency [Hz].
    pub carrier_freq_hz: f64,
    /// Symbol rate [Hz].
    pub baud_hz: f64,
    /// Samples per symbol at the transmitter.
    pub sps_tx: usize,
    /// Samples per symbol after receiver downsampling.
    pub sps_rx: usize,
    /// Root-raised-cosine roll-off.
    pub rolloff: f64,
    pub launch_power_dbm: f64,
    /// Pulse-shaping filter length (odd).
    pub rrc_taps: usize,
    /// Reference noise bandwidth [Hz].
    pub noise_bandwidth_hz: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            alpha: 0.063,
            beta2: -21.68,
            gamma: 1.66,
            span_km: 80.0,
            n_spans: 20,
            noise_figure_db: Some(4.5),
            carrier_freq_hz: 193.1e12,
            baud_hz: 100e9,
            sps_tx: 4,
            sps_rx: 2,
            rolloff: 0.1,
            launch_power_dbm: 0.0,
            rrc_taps: 257,
            noise_bandwidth_hz: 50e9,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.span_km <= 0.0 {
            return Err(DosnetError::arg("span length must be positive"));
        }
        if self.sps_rx == 0 || self.sps_tx % self.sps_rx != 0 {
            return Err(DosnetError::arg("sps_tx must be a multiple of sps_rx"));
        }
        if self.rrc_taps % 2 == 0 {
            return Err(DosnetError::arg("rrc_taps must be odd"));
        }
        if !(0.0..=1.0).contains(&self.rolloff) || self.rolloff == 0.0 {
            return Err(DosnetError::arg("roll-off must be in (0, 1]"));
        }
        Ok(())
    }

    /// Launch power in watts: `10^(dBm/10)` mW.
    pub fn launch_power_w(&self) -> f64 {
        1e-3 * 10f64.powf(self.launch_power_dbm / 10.0)
    }

    /// Symbol period [ps].
    pub fn symbol_period_ps(&self) -> f64 {
        1e12 / self.baud_hz
    }

    /// Sample period at the transmitter rate [ps].
    pub fn sample_period_ps(&self) -> f64 {
        self.symbol_period_ps() / self.sps_tx as f64
    }

    /// Fiber parameters for forward propagation.
    pub fn fiber_params(&self) -> Result<NlseParams> {
        NlseParams::new(self.alpha, self.beta2, self.gamma, Direction::Forward)
    }

    /// Amplifier power gain restoring one span's loss.
    pub fn span_gain(&self) -> f64 {
        (self.alpha * self.span_km).exp()
    }

    /// Waveform grid for `n` samples at `sps` samples per symbol.
    pub fn waveform_grid(&self, n: usize, sps: usize) -> Result<Grid> {
        let dt = self.symbol_period_ps() / sps as f64;
        Grid::new_1d(n, 0.0, n as f64 * dt)
    }

    /// Matched-filter amplitude of a transmitted symbol at its center
    /// sample (receiver side, after [`receiver_frontend`]).
    pub fn matched_symbol_scale(&self) -> f64 {
        (self.launch_power_w() * self.sps_tx as f64).sqrt() / 10f64.sqrt()
    }

    /// Amplitude of a symbol's center sample in the transmitted waveform
    /// itself (used when deciding directly on a recovered waveform).
    pub fn waveform_symbol_scale(&self) -> f64 {
        let proto = unit_energy_rrc(self);
        let center = proto[(self.rrc_taps - 1) / 2];
        (self.launch_power_w() * self.sps_tx as f64).sqrt() * center / 10f64.sqrt()
    }
}

// ---------------------------------------------------------------------
// 16-QAM with per-axis Gray labeling
// ---------------------------------------------------------------------

/// Per-axis 2-bit Gray code: bits 00, 01, 11, 10 map to levels -3, -1,
/// +1, +3. The in-phase axis takes the first two bits of each 4-bit
/// group.
const GRAY_LEVELS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 1), (1, 0)];

fn bits_to_level(b0: u8, b1: u8) -> f64 {
    let idx = GRAY_LEVELS
        .iter()
        .position(|&(a, b)| a == b0 && b == b1)
        .expect("two bits always match");
    -3.0 + 2.0 * idx as f64
}

fn level_to_bits(level: f64) -> (u8, u8) {
    let idx = (((level + 3.0) / 2.0).round() as isize).clamp(0, 3) as usize;
    GRAY_LEVELS[idx]
}

/// Nearest constellation level on one axis.
fn quantize_level(x: f64) -> f64 {
    if x < -2.0 {
        -3.0
    } else if x < 0.0 {
        -1.0
    } else if x < 2.0 {
        1.0
    } else {
        3.0
    }
}

/// Bits and the 16-QAM symbols they encode (4 bits per symbol, in-phase
/// bits first).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    pub bits: Vec<u8>,
    pub symbols: Vec<Complex64>,
}

impl SymbolStream {
    pub fn from_bits(bits: Vec<u8>) -> Result<SymbolStream> {
        let symbols = gray_map(&bits)?;
        Ok(SymbolStream { bits, symbols })
    }

    pub fn random(n_symbols: usize, rng: &mut SeedRng) -> SymbolStream {
        let bits: Vec<u8> = (0..4 * n_symbols).map(|_| rng.bit()).collect();
        SymbolStream::from_bits(bits).expect("length is a multiple of 4")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Maps bits to 16-QAM points `{-3,-1,1,3}^2`, Gray-labeled per axis.
pub fn gray_map(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 4 != 0 {
        return Err(DosnetError::arg("bit count must be a multiple of 4"));
    }
    Ok(bits
        .chunks(4)
        .map(|b| Complex64::new(bits_to_level(b[0], b[1]), bits_to_level(b[2], b[3])))
        .collect())
}

/// Inverse of [`gray_map`] for exact constellation points; arbitrary
/// complex inputs are first quantized to the nearest point.
pub fn gray_demap(symbols: &[Complex64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(4 * symbols.len());
    for s in symbols {
        let (i0, i1) = level_to_bits(quantize_level(s.re));
        let (q0, q1) = level_to_bits(quantize_level(s.im));
        bits.extend_from_slice(&[i0, i1, q0, q1]);
    }
    bits
}

// ---------------------------------------------------------------------
// Root-raised-cosine pulse
// ---------------------------------------------------------------------

/// Root-raised-cosine impulse response sampled at `sps` points per
/// symbol period `ts`, including the exact values at the removable
/// singularities `t = 0` and `|t| = ts / (4 rho)`. Taps are symmetric
/// about the center; `n_taps` must be odd.
pub fn rrc_filter_taps(rho: f64, ts: f64, n_taps: usize, sps: usize) -> Result<Vec<f64>> {
    if n_taps % 2 == 0 {
        return Err(DosnetError::arg("n_taps must be odd"));
    }
    if !(0.0..=1.0).contains(&rho) || rho == 0.0 {
        return Err(DosnetError::arg("rho must be in (0, 1]"));
    }
    let c = (n_taps - 1) / 2;
    let dt = ts / sps as f64;
    let mut taps = Vec::with_capacity(n_taps);
    for i in 0..n_taps {
        let t = (i as f64 - c as f64) * dt;
        taps.push(rrc_value(rho, ts, t));
    }
    Ok(taps)
}

fn rrc_value(rho: f64, ts: f64, t: f64) -> f64 {
    use std::f64::consts::PI;
    if t == 0.0 {
        return (1.0 + rho * (4.0 / PI - 1.0)) / ts;
    }
    let x = t / ts;
    let denom = PI * x * (1.0 - (4.0 * rho * x) * (4.0 * rho * x));
    if denom.abs() < 1e-9 / ts {
        // removable singularity at |t| = ts / (4 rho)
        let a = PI / (4.0 * rho);
        return rho / (ts * 2f64.sqrt())
            * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    ((PI * x * (1.0 - rho)).sin() + 4.0 * rho * x * (PI * x * (1.0 + rho)).cos()) / (denom * ts)
}

/// RRC taps normalized to unit energy.
fn unit_energy_rrc(cfg: &LinkConfig) -> Vec<f64> {
    let taps = rrc_filter_taps(
        cfg.rolloff,
        cfg.symbol_period_ps(),
        cfg.rrc_taps,
        cfg.sps_tx,
    )
    .expect("validated config");
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = energy.sqrt();
    taps.iter().map(|h| h / scale).collect()
}

/// Circular filtering with real taps. With `compensate_delay` the taps
/// are embedded centered, so a symmetric filter adds no group delay.
pub fn circular_filter(x: &[Complex64], taps: &[f64], compensate_delay: bool) -> Vec<Complex64> {
    let n = x.len();
    assert!(taps.len() <= n, "filter longer than signal");
    let grid = Grid::new_1d(n, 0.0, n as f64).expect("n >= 2");
    let mut embedded = vec![Complex64::new(0.0, 0.0); n];
    let c = if compensate_delay { (taps.len() - 1) / 2 } else { 0 };
    for (i, &h) in taps.iter().enumerate() {
        let pos = (i + n - c) % n;
        embedded[pos] += Complex64::new(h, 0.0);
    }
    let xs = dft_forward(&Field::new_complex(grid.clone(), x.to_vec()).expect("len matches"));
    let hs = dft_forward(&Field::new_complex(grid.clone(), embedded).expect("len matches"));
    let prod: Vec<Complex64> = xs
        .coeffs()
        .iter()
        .zip(hs.coeffs())
        .map(|(a, b)| a * b)
        .collect();
    dft_inverse(&Spectrum::new(grid, prod).expect("len matches"))
        .as_complex()
        .unwrap()
        .to_vec()
}

/// Pulse-shapes a symbol stream into the launch waveform at `sps_tx`
/// samples per symbol: `u0(t) = sqrt(P_L) sum_n a_n h(t - n T_s)` with
/// the constellation pre-scaled to unit average power. Symbol `n` is
/// centered at sample `n * sps_tx`.
pub fn modulate(stream: &SymbolStream, cfg: &LinkConfig) -> Result<Field> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(DosnetError::arg("empty symbol stream"));
    }
    let n = stream.len() * cfg.sps_tx;
    if cfg.rrc_taps > n {
        return Err(DosnetError::arg("signal shorter than the pulse filter"));
    }
    let amp = (cfg.launch_power_w() * cfg.sps_tx as f64).sqrt() / 10f64.sqrt();
    let mut impulses = vec![Complex64::new(0.0, 0.0); n];
    for (i, &a) in stream.symbols.iter().enumerate() {
        impulses[i * cfg.sps_tx] = a * amp;
    }
    let proto = unit_energy_rrc(cfg);
    let samples = circular_filter(&impulses, &proto, true);
    Field::new_complex(cfg.waveform_grid(n, cfg.sps_tx)?, samples)
}

/// One amplifier stage: amplitude gain `sqrt(G)` with
/// `G = exp(alpha * span_km)`, then white complex Gaussian noise of
/// total variance `sigma^2 = F h nu0 (G - 1) dnu` split equally between
/// the quadratures. With the noise figure disabled only the gain acts.
pub fn oa_stage(signal: &Field, cfg: &LinkConfig, rng: &mut SeedRng) -> Result<Field> {
    let g = cfg.span_gain();
    let amp = g.sqrt();
    let sigma2 = match cfg.noise_figure_db {
        Some(nf_db) => {
            let f_lin = 10f64.powf(nf_db / 10.0);
            f_lin * PLANCK * cfg.carrier_freq_hz * (g - 1.0) * cfg.noise_bandwidth_hz
        }
        None => 0.0,
    };
    let sq = (sigma2 / 2.0).sqrt();
    let values = signal
        .as_complex()
        .ok_or_else(|| DosnetError::DtypeMismatch("amplifier input must be complex".into()))?;
    let out: Vec<Complex64> = values
        .iter()
        .map(|&z| z * amp + Complex64::new(rng.normal_scaled(sq), rng.normal_scaled(sq)))
        .collect();
    Field::new_complex(signal.grid().clone(), out)
}

/// Propagates the waveform through `n_spans` spans of fiber, each
/// followed by an amplifier stage. Deterministic for a given seed.
pub fn propagate_link(
    signal: &Field,
    cfg: &LinkConfig,
    steps_per_span: usize,
    rng: &mut SeedRng,
) -> Result<Field> {
    cfg.validate()?;
    let params = cfg.fiber_params()?;
    let mut u = signal.clone();
    for _ in 0..cfg.n_spans {
        u = ssfm_propagate(&u, params, cfg.span_km, steps_per_span, false)?;
        u = oa_stage(&u, cfg, rng)?;
    }
    Ok(u)
}

/// Matched filter plus downsampling to `sps_rx` samples per symbol,
/// delay-compensated so symbol `n` sits at sample `n * sps_rx`.
pub fn receiver_frontend(signal: &Field, cfg: &LinkConfig) -> Result<Field> {
    cfg.validate()?;
    let values = signal
        .as_complex()
        .ok_or_else(|| DosnetError::DtypeMismatch("receiver input must be complex".into()))?;
    let step = cfg.sps_tx / cfg.sps_rx;
    if values.len() % step != 0 {
        return Err(DosnetError::dim(
            "signal length not divisible by the downsampling factor",
        ));
    }
    let proto = unit_energy_rrc(cfg);
    let filtered = circular_filter(values, &proto, true);
    let down: Vec<Complex64> = filtered.iter().step_by(step).copied().collect();
    Field::new_complex(cfg.waveform_grid(down.len(), cfg.sps_rx)?, down)
}

/// Plain downsampling of a transmitter waveform to `sps_rx` (the clean
/// compensation target).
pub fn downsample_to_rx(signal: &Field, cfg: &LinkConfig) -> Result<Field> {
    let values = signal
        .as_complex()
        .ok_or_else(|| DosnetError::DtypeMismatch("waveform must be complex".into()))?;
    let step = cfg.sps_tx / cfg.sps_rx;
    let down: Vec<Complex64> = values.iter().step_by(step).copied().collect();
    Field::new_complex(cfg.waveform_grid(down.len(), cfg.sps_rx)?, down)
}

// ---------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------

/// Window geometry for cropping long signals: `pad` samples on each side
/// of a `valid_len`-sample window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub pad: usize,
    pub valid_len: usize,
    pub stride: usize,
}

impl Default for SegmentSpec {
    fn default() -> Self {
        SegmentSpec {
            pad: 3000,
            valid_len: 16,
            stride: 8,
        }
    }
}

impl SegmentSpec {
    pub fn segment_len(&self) -> usize {
        2 * self.pad + self.valid_len
    }

    pub fn valid_range(&self) -> (usize, usize) {
        (self.pad, self.valid_len)
    }
}

/// Lazy view of a long signal cut into overlapping circular windows.
/// Segment `i` covers source samples `[i*stride - pad, i*stride + valid
/// + pad)` modulo the signal length; its valid window starts at `pad`.
#[derive(Debug, Clone)]
pub struct SegmentSet {
    source: Field,
    pub spec: SegmentSpec,
    pub n_segments: usize,
}

impl SegmentSet {
    pub fn segment_values(&self, i: usize) -> Vec<Complex64> {
        let v = self.source.as_complex().expect("validated complex");
        let n = v.len();
        let len = self.spec.segment_len();
        let start = (i * self.spec.stride + n - self.spec.pad) % n;
        (0..len).map(|j| v[(start + j) % n]).collect()
    }

    /// Segment `i` as a `[1, 1, L]` tensor.
    pub fn segment_tensor(&self, i: usize) -> Tensor {
        Tensor::new_complex(
            vec![1, 1, self.spec.segment_len()],
            self.segment_values(i),
        )
        .expect("shape matches")
    }

    pub fn source(&self) -> &Field {
        &self.source
    }
}

/// Cuts a 2-sps signal into circular segments. The stride must divide
/// the signal length so the segment count `len / stride` tiles exactly.
pub fn segment(signal: &Field, spec: SegmentSpec) -> Result<SegmentSet> {
    let values = signal
        .as_complex()
        .ok_or_else(|| DosnetError::DtypeMismatch("segments need a complex signal".into()))?;
    let n = values.len();
    if n < spec.segment_len() {
        return Err(DosnetError::dim(format!(
            "signal of {} samples shorter than segment length {}",
            n,
            spec.segment_len()
        )));
    }
    if spec.stride == 0 || n % spec.stride != 0 {
        return Err(DosnetError::arg(
            "stride must divide the signal length (circular tiling)",
        ));
    }
    Ok(SegmentSet {
        source: signal.clone(),
        spec,
        n_segments: n / spec.stride,
    })
}

/// Reassembles a full signal from per-segment valid windows. Defined for
/// non-overlapping tiling (`stride == valid_len`).
pub fn stitch(windows: &[Vec<Complex64>], spec: SegmentSpec, grid: &Grid) -> Result<Field> {
    if spec.stride != spec.valid_len {
        return Err(DosnetError::arg(
            "stitching requires stride == valid window length",
        ));
    }
    let mut out = Vec::with_capacity(windows.len() * spec.valid_len);
    for w in windows {
        if w.len() != spec.valid_len {
            return Err(DosnetError::dim("window length mismatch"));
        }
        out.extend_from_slice(w);
    }
    Field::new_complex(grid.clone(), out)
}

/// Paired (received, clean) segments exposed as training samples; the
/// two sources must be equally long 2-sps signals.
pub struct SegmentPairs {
    pub rx: SegmentSet,
    pub tx: SegmentSet,
    /// Index window into the segment list (train/validation split).
    pub offset: usize,
    pub count: usize,
}

impl SegmentPairs {
    pub fn new(rx: &Field, tx: &Field, spec: SegmentSpec) -> Result<SegmentPairs> {
        if rx.grid() != tx.grid() {
            return Err(DosnetError::dim("rx/tx grids differ"));
        }
        let rx_set = segment(rx, spec)?;
        let tx_set = segment(tx, spec)?;
        let count = rx_set.n_segments;
        Ok(SegmentPairs {
            rx: rx_set,
            tx: tx_set,
            offset: 0,
            count,
        })
    }

    pub fn slice(&self, offset: usize, count: usize) -> Result<SegmentPairs> {
        if offset + count > self.rx.n_segments {
            return Err(DosnetError::arg("segment slice out of range"));
        }
        Ok(SegmentPairs {
            rx: self.rx.clone(),
            tx: self.tx.clone(),
            offset,
            count,
        })
    }
}

impl TrainSamples for SegmentPairs {
    fn len(&self) -> usize {
        self.count
    }

    fn sample(&self, idx: usize) -> Result<(Tensor, Tensor)> {
        if idx >= self.count {
            return Err(DosnetError::arg("segment index out of range"));
        }
        let i = self.offset + idx;
        Ok((self.rx.segment_tensor(i), self.tx.segment_tensor(i)))
    }
}

// ---------------------------------------------------------------------
// Decision and BER
// ---------------------------------------------------------------------

/// Hard decision and bit-error rate. `rx_symbols` must already be
/// normalized to constellation scale (levels +-1, +-3).
pub fn decide_and_ber(rx_symbols: &[Complex64], tx_bits: &[u8]) -> Result<f64> {
    if 4 * rx_symbols.len() != tx_bits.len() {
        return Err(DosnetError::dim(format!(
            "{} symbols vs {} bits",
            rx_symbols.len(),
            tx_bits.len()
        )));
    }
    let decided = gray_demap(rx_symbols);
    let errors = decided
        .iter()
        .zip(tx_bits)
        .filter(|(a, b)| a != b)
        .count();
    Ok(errors as f64 / tx_bits.len() as f64)
}

/// Extracts the per-symbol center samples of an `sps`-rate signal and
/// rescales them by `1/scale` to constellation units.
pub fn symbol_samples(signal: &Field, sps: usize, scale: f64) -> Result<Vec<Complex64>> {
    let values = signal
        .as_complex()
        .ok_or_else(|| DosnetError::DtypeMismatch("complex signal expected".into()))?;
    Ok(values.iter().step_by(sps).map(|z| z / scale).collect())
}
