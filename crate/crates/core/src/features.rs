//! Magnitude-spectrogram features: analysis, pruning and overlap-add resynthesis.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ShapeBuilder};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::AudioSignal;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_FRAME_MS: f64 = 60.0;
pub const DEFAULT_HOP_MS: f64 = 15.0;
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.001;

const ENVELOPE_FLOOR: f64 = 1e-8;

/// Frame and hop lengths in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub frame_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl FrameLayout {
    pub fn from_ms(frame_ms: f64, hop_ms: f64, sample_rate: u32) -> Result<Self> {
        if !(hop_ms > 0.0 && frame_ms > hop_ms) {
            return Err(invalid(format!("need frame_ms > hop_ms > 0, got {frame_ms}/{hop_ms}")));
        }
        let frame_length = (frame_ms * sample_rate as f64 / 1000.0).round() as usize;
        let hop = (hop_ms * sample_rate as f64 / 1000.0).round() as usize;
        if hop == 0 || frame_length <= hop {
            return Err(invalid("frame/hop too small for the sample rate"));
        }
        Ok(Self { frame_length, hop, sample_rate })
    }

    pub fn standard(sample_rate: u32) -> Self {
        Self::from_ms(DEFAULT_FRAME_MS, DEFAULT_HOP_MS, sample_rate).expect("default layout is valid")
    }

    pub fn fft_size(&self) -> usize {
        self.frame_length.next_power_of_two()
    }

    pub fn bins(&self) -> usize {
        self.fft_size() / 2 + 1
    }

    /// `floor((len - W) / H) + 1`, or 0 when the signal is shorter than a frame.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            (len - self.frame_length) / self.hop + 1
        }
    }

    pub fn hop_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    /// Time of the midpoint of frame `i`.
    pub fn frame_midpoint_s(&self, i: usize) -> f64 {
        (i as f64 * self.hop as f64 + self.frame_length as f64 / 2.0) / self.sample_rate as f64
    }

    /// Number of frames spanning `seconds`, rounded.
    pub fn frames_for(&self, seconds: f64) -> usize {
        (seconds / self.hop_s()).round() as usize
    }
}

/// MATLAB-style `hanning(N)`: symmetric, without zero end points.
pub fn hanning(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / (n as f64 + 1.0)).cos())).collect()
}

/// Non-negative magnitude frames (bins x frames, column-major) with energies and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: Array2<f64>,
    energies: Vec<f64>,
    layout: FrameLayout,
    phase: Option<Array2<f64>>,
}

pub(crate) fn col_major(a: Array2<f64>) -> Array2<f64> {
    if a.t().is_standard_layout() {
        a
    } else {
        a.t().as_standard_layout().into_owned().reversed_axes()
    }
}

pub(crate) fn col_major_zeros(rows: usize, cols: usize) -> Array2<f64> {
    Array2::zeros((rows, cols).f())
}

impl FeatureMatrix {
    /// Build from an arbitrary non-negative matrix; energies are recomputed.
    pub fn from_frames(frames: Array2<f64>, layout: FrameLayout) -> Result<Self> {
        if frames.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("feature entries must be finite and non-negative"));
        }
        let frames = col_major(frames);
        let energies = frames.columns().into_iter().map(|c| c.dot(&c)).collect();
        Ok(Self { frames, energies, layout, phase: None })
    }

    pub fn with_phase(mut self, phase: Array2<f64>) -> Result<Self> {
        if phase.dim() != self.frames.dim() {
            return Err(Error::DimensionMismatch { expected: self.frames.ncols(), found: phase.ncols() });
        }
        self.phase = Some(col_major(phase));
        Ok(self)
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> ArrayView1<'_, f64> {
        self.frames.column(i)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn phase(&self) -> Option<&Array2<f64>> {
        self.phase.as_ref()
    }

    pub fn layout(&self) -> FrameLayout {
        self.layout
    }

    pub fn bins(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.ncols()
    }

    /// Columns at `indices`, in the given order, phase included.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut frames = col_major_zeros(self.bins(), indices.len());
        for (k, &i) in indices.iter().enumerate() {
            frames.column_mut(k).assign(&self.frames.column(i));
        }
        let phase = self.phase.as_ref().map(|ph| {
            let mut out = col_major_zeros(self.bins(), indices.len());
            for (k, &i) in indices.iter().enumerate() {
                out.column_mut(k).assign(&ph.column(i));
            }
            out
        });
        FeatureMatrix {
            frames,
            energies: indices.iter().map(|&i| self.energies[i]).collect(),
            layout: self.layout,
            phase,
        }
    }

    pub fn range(&self, start: usize, end: usize) -> FeatureMatrix {
        let idx: Vec<usize> = (start..end.min(self.n_frames())).collect();
        self.select(&idx)
    }

    /// Column-wise concatenation; phase is kept only when every part has it.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or(Error::NoFeaturesRemain)?;
        let bins = first.bins();
        let total: usize = parts.iter().map(|p| p.n_frames()).sum();
        let keep_phase = parts.iter().all(|p| p.phase.is_some());
        let mut frames = col_major_zeros(bins, total);
        let mut phase = keep_phase.then(|| col_major_zeros(bins, total));
        let mut energies = Vec::with_capacity(total);
        let mut at = 0;
        for p in parts {
            if p.bins() != bins {
                return Err(Error::DimensionMismatch { expected: bins, found: p.bins() });
            }
            let n = p.n_frames();
            frames.slice_mut(ndarray::s![.., at..at + n]).assign(&p.frames);
            if let (Some(dst), Some(src)) = (phase.as_mut(), p.phase.as_ref()) {
                dst.slice_mut(ndarray::s![.., at..at + n]).assign(src);
            }
            energies.extend_from_slice(&p.energies);
            at += n;
        }
        Ok(FeatureMatrix { frames, energies, layout: first.layout, phase })
    }
}

/// Hanning-windowed, zero-padded STFT magnitudes of `signal`.
pub fn extract_features(signal: &AudioSignal, frame_ms: f64, hop_ms: f64, keep_phase: bool) -> Result<FeatureMatrix> {
    let layout = FrameLayout::from_ms(frame_ms, hop_ms, signal.sample_rate())?;
    extract_with_layout(signal, layout, keep_phase)
}

pub fn extract_with_layout(signal: &AudioSignal, layout: FrameLayout, keep_phase: bool) -> Result<FeatureMatrix> {
    let n = layout.frame_count(signal.len());
    if n == 0 {
        return Err(Error::SignalTooShort { len: signal.len(), frame: layout.frame_length });
    }
    let nfft = layout.fft_size();
    let bins = layout.bins();
    let window = hanning(layout.frame_length);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut frames = col_major_zeros(bins, n);
    let mut phase = keep_phase.then(|| col_major_zeros(bins, n));
    let x = signal.samples();
    for i in 0..n {
        let start = i * layout.hop;
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = if k < layout.frame_length {
                Complex::new(x[start + k] * window[k], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let mut col = frames.column_mut(i);
        for b in 0..bins {
            col[b] = buf[b].norm();
        }
        if let Some(ph) = phase.as_mut() {
            let mut pc = ph.column_mut(i);
            for b in 0..bins {
                pc[b] = buf[b].arg();
            }
        }
    }
    let energies = frames.columns().into_iter().map(|c| c.dot(&c)).collect();
    Ok(FeatureMatrix { frames, energies, layout, phase })
}

/// Drop frames whose energy is below `rel_threshold` times the mean frame energy.
pub fn prune_low_energy(fm: &FeatureMatrix, rel_threshold: f64) -> Result<FeatureMatrix> {
    if !(rel_threshold > 0.0) {
        return Err(invalid("prune threshold must be positive"));
    }
    if fm.n_frames() == 0 {
        return Err(Error::NoFeaturesRemain);
    }
    let mean = fm.energies.iter().sum::<f64>() / fm.n_frames() as f64;
    let cut = rel_threshold * mean;
    let keep: Vec<usize> = (0..fm.n_frames()).filter(|&i| fm.energies[i] >= cut && fm.energies[i] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::NoFeaturesRemain);
    }
    Ok(fm.select(&keep))
}

/// Overlap-add resynthesis from magnitudes and the stored phase.
///
/// Each frame is inverse-transformed, windowed again and accumulated; the sum is
/// divided by the accumulated squared-window envelope. The output has
/// `(n - 1) * hop + frame_length` samples.
pub fn reconstruct(fm: &FeatureMatrix) -> Result<AudioSignal> {
    let phase = fm.phase.as_ref().ok_or(Error::PhaseRequired)?;
    let layout = fm.layout;
    let nfft = layout.fft_size();
    if fm.bins() != layout.bins() {
        return Err(Error::DimensionMismatch { expected: layout.bins(), found: fm.bins() });
    }
    if fm.frames.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite magnitude"));
    }
    let n = fm.n_frames();
    if n == 0 {
        return Ok(AudioSignal::zeros(0, layout.sample_rate));
    }
    let w = layout.frame_length;
    let out_len = (n - 1) * layout.hop + w;
    let window = hanning(w);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut out = vec![0.0; out_len];
    let mut envelope = vec![0.0; out_len];
    let bins = layout.bins();
    for i in 0..n {
        let mag = fm.frames.column(i);
        let ph = phase.column(i);
        for b in 0..bins {
            buf[b] = Complex::from_polar(mag[b], ph[b]);
        }
        for b in bins..nfft {
            buf[b] = buf[nfft - b].conj();
        }
        ifft.process(&mut buf);
        let start = i * layout.hop;
        for k in 0..w {
            out[start + k] += buf[k].re / nfft as f64 * window[k];
            envelope[start + k] += window[k] * window[k];
        }
    }
    for (o, e) in out.iter_mut().zip(&envelope) {
        *o /= e.max(ENVELOPE_FLOOR);
    }
    AudioSignal::new(out, layout.sample_rate)
}
