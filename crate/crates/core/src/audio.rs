//! Time-domain signals and 16-bit PCM WAV ingestion/emission.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{invalid, Result};

/// Internal sample rate for every signal that enters the pipeline.
pub const CANONICAL_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Copy of `[start, end)`, clipped to the signal.
    pub fn slice(&self, start: usize, end: usize) -> AudioSignal {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        AudioSignal { samples: self.samples[start..end].to_vec(), sample_rate: self.sample_rate }
    }

    pub fn scaled(&self, gain: f64) -> AudioSignal {
        AudioSignal {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Read a WAV file, average channels to mono and resample to 16 kHz.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = hound::WavReader::open(path.as_ref())?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()?
            }
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<_, _>>()?,
        };
        let mono: Vec<f64> = interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect();
        let signal = AudioSignal::new(mono, spec.sample_rate)?;
        Ok(signal.resample(CANONICAL_RATE))
    }

    /// Write 16-bit PCM mono. Samples are clipped to [-1, 1).
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
        for &s in &self.samples {
            writer.write_sample(quantize_i16(s))?;
        }
        writer.finalize()?;
        Ok(())
    }

    /// Windowed-sinc resampling. Identity when the rate already matches.
    pub fn resample(&self, target_rate: u32) -> AudioSignal {
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return AudioSignal { samples: self.samples.clone(), sample_rate: target_rate };
        }
        const HALF_TAPS: i64 = 32;
        let ratio = target_rate as f64 / self.sample_rate as f64;
        let cutoff = ratio.min(1.0);
        let out_len = ((self.samples.len() as f64) * ratio).round() as usize;
        let n = self.samples.len() as i64;
        let mut out = Vec::with_capacity(out_len);
        for i in 0..out_len {
            let pos = i as f64 / ratio;
            let center = pos.floor() as i64;
            let mut acc = 0.0;
            for j in (center - HALF_TAPS + 1)..=(center + HALF_TAPS) {
                if j < 0 || j >= n {
                    continue;
                }
                let t = pos - j as f64;
                let window = 0.5 + 0.5 * (PI * t / HALF_TAPS as f64).cos();
                acc += self.samples[j as usize] * cutoff * sinc(cutoff * t) * window;
            }
            out.push(acc);
        }
        AudioSignal { samples: out, sample_rate: target_rate }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub(crate) fn quantize_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Round a sample onto the 16-bit PCM grid.
pub fn snap_to_pcm16(s: f64) -> f64 {
    quantize_i16(s) as f64 / 32768.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_signals() {
        assert!(AudioSignal::new(vec![0.0], 0).is_err());
        assert!(AudioSignal::new(vec![f64::NAN], 16_000).is_err());
    }

    #[test]
    fn wav_round_trip_on_pcm_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..400).map(|i| snap_to_pcm16(((i as f64) * 0.05).sin() * 0.5)).collect();
        let sig = AudioSignal::new(samples, 16_000).unwrap();
        sig.write_wav(&path).unwrap();
        let back = AudioSignal::read_wav(&path).unwrap();
        assert_eq!(back, sig);
    }

    #[test]
    fn stereo_is_averaged_and_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..800 {
            w.write_sample(8192i16).unwrap();
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let sig = AudioSignal::read_wav(&path).unwrap();
        assert_eq!(sig.sample_rate(), 16_000);
        assert_eq!(sig.len(), 1600);
        // interior of a constant 0.125 stays constant after resampling
        for &s in &sig.samples()[200..1400] {
            assert!((s - 0.125).abs() < 2e-3, "{s}");
        }
    }

    #[test]
    fn resampled_tone_keeps_frequency() {
        let sr = 22_050;
        let f = 440.0;
        let x: Vec<f64> = (0..sr).map(|i| (2.0 * PI * f * i as f64 / sr as f64).sin()).collect();
        let y = AudioSignal::new(x, sr as u32).unwrap().resample(16_000);
        for i in 1000..15000 {
            let expect = (2.0 * PI * f * i as f64 / 16_000.0).sin();
            assert!((y.samples()[i] - expect).abs() < 5e-3);
        }
    }
}
