//! Deterministic desk-scale corpus: four generated noise types and four
//! harmonic "speakers" with distinct pitch ranges and formant envelopes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};

use super::corpus::{Corpus, NoiseAudio, SpeakerAudio};
use crate::audio::{AudioSignal, CANONICAL_RATE};

pub const SYNTH_NOISES: [&str; 4] = ["rumble", "hiss", "clatter", "hum"];
pub const SYNTH_SPEAKERS: [&str; 4] = ["bass", "baritone", "alto", "soprano"];
/// Base pitch (Hz) and formant scale per speaker, in `SYNTH_SPEAKERS` order.
const VOICES: [(f64, f64); 4] = [(100.0, 1.0), (135.0, 1.07), (185.0, 1.15), (235.0, 1.24)];
/// F1, F2, F3 (Hz) of the vowel set before speaker scaling.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];

pub const NOISE_SECONDS: f64 = 40.0;
pub const TEST_SECONDS: f64 = 20.0;
pub const TRAIN_UTTERANCES: usize = 8;
const NOISE_RMS: f64 = 0.1;
const UTTERANCE_PEAK: f64 = 0.5;

fn rng_for(seed: u64, stream: &str) -> ChaCha8Rng {
    let tag = stream.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    ChaCha8Rng::seed_from_u64(seed ^ tag)
}

fn white(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Filter `x` by a zero-phase magnitude response `gain(f_hz)`.
fn shape(x: &[f64], gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let sr = CANONICAL_RATE as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * sr / n as f64;
        *c *= gain(f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn bump(f: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((f - centre) / width).powi(2)).exp()
}

fn normalise_rms(mut x: Vec<f64>, rms: f64) -> Vec<f64> {
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if cur > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / cur);
    }
    x
}

/// One of the `SYNTH_NOISES` types, `seconds` long at 16 kHz.
pub fn synth_noise(label: &str, seconds: f64, seed: u64) -> AudioSignal {
    let sr = CANONICAL_RATE as f64;
    let n = (seconds * sr).round() as usize;
    let mut rng = rng_for(seed, label);
    let samples = match label {
        "rumble" => shape(&white(n, &mut rng), |f| 1.0 / (1.0 + (f / 250.0).powi(2)) + 0.6 * bump(f, 700.0, 150.0)),
        "hiss" => {
            let base = shape(&white(n, &mut rng), |f| bump(f, 4500.0, 1000.0) + 0.3 * bump(f, 6800.0, 400.0));
            let rate = 3.1;
            base.iter().enumerate().map(|(i, v)| v * (1.0 + 0.6 * (2.0 * PI * rate * i as f64 / sr).sin())).collect()
        }
        "clatter" => {
            let mut excitation = vec![0.0; n];
            let mut t = 0usize;
            loop {
                let gap: f64 = rng.random_range(0.05..0.3);
                t += (gap * sr) as usize;
                if t >= n {
                    break;
                }
                let amp: f64 = rng.random_range(0.5..1.5);
                let tau = rng.random_range(0.008..0.025) * sr;
                for (k, e) in excitation[t..n.min(t + (6.0 * tau) as usize)].iter_mut().enumerate() {
                    *e += amp * (-(k as f64) / tau).exp() * { let z: f64 = StandardNormal.sample(&mut rng); z };
                }
            }
            let floor = white(n, &mut rng);
            let mixed: Vec<f64> = excitation.iter().zip(&floor).map(|(e, w)| e + 0.03 * w).collect();
            shape(&mixed, |f| bump(f, 1800.0, 300.0) + 0.8 * bump(f, 3300.0, 500.0) + 0.1)
        }
        "hum" => {
            let drift: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let floor = white(n, &mut rng);
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let tone: f64 = (1..=20)
                        .map(|k| {
                            let a = (1.0 + 0.3 * (2.0 * PI * 0.2 * t + drift[k - 1]).sin()) / k as f64;
                            a * (2.0 * PI * 120.0 * k as f64 * t + drift[k - 1]).sin()
                        })
                        .sum();
                    tone + 0.01 * floor[i]
                })
                .collect()
        }
        other => panic!("unknown synthetic noise {other:?}"),
    };
    AudioSignal::new(normalise_rms(samples, NOISE_RMS), CANONICAL_RATE).expect("finite synthesis")
}

fn voice_for(label: &str) -> (f64, f64) {
    let k = SYNTH_SPEAKERS.iter().position(|s| *s == label).unwrap_or_else(|| panic!("unknown synthetic speaker {label:?}"));
    VOICES[k]
}

/// Harmonic amplitude of a vowel envelope at `f` Hz.
fn envelope(f: f64, formants: &[f64; 3], scale: f64) -> f64 {
    let widths = [90.0, 120.0, 170.0];
    let gains = [1.0, 0.6, 0.35];
    let peaks: f64 = (0..3).map(|i| gains[i] / (1.0 + ((f - formants[i] * scale) / (widths[i] * scale)).powi(2))).sum();
    peaks / (1.0 + f / 2000.0)
}

/// Utterance `index` of a `SYNTH_SPEAKERS` voice: 2.5-3.5 s of voiced syllables separated by short pauses.
pub fn synth_utterance(label: &str, index: usize, seed: u64) -> AudioSignal {
    let sr = CANONICAL_RATE as f64;
    let (f0_base, scale) = voice_for(label);
    let mut rng = rng_for(seed, &format!("{label}/{index}"));
    let target = (rng.random_range(2.5..3.5) * sr) as usize;
    let mut out = vec![0.0; target];
    let mut at = (0.05 * sr) as usize;
    let mut phase = 0.0;
    while at < target {
        let dur = (rng.random_range(0.18..0.32) * sr) as usize;
        let end = (at + dur).min(target);
        let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
        let f0 = f0_base * rng.random_range(0.92..1.08);
        let glide = rng.random_range(-0.06..0.06);
        let loud = rng.random_range(0.6..1.0);
        let harmonics = ((7600.0 / (f0 * 1.1)) as usize).max(1);
        let amps: Vec<f64> = (1..=harmonics).map(|h| envelope(h as f64 * f0, &vowel, scale)).collect();
        let ramp = (0.02 * sr) as usize;
        let len = end - at;
        for (k, o) in out[at..end].iter_mut().enumerate() {
            let frac = k as f64 / len as f64;
            let f = f0 * (1.0 + glide * (frac - 0.5));
            phase += 2.0 * PI * f / sr;
            let edge = (k.min(len - 1 - k) as f64 / ramp as f64).min(1.0);
            let gain = loud * (0.5 - 0.5 * (PI * edge).cos());
            let v: f64 = amps.iter().enumerate().map(|(h, a)| a * ((h + 1) as f64 * phase).sin()).sum();
            *o = gain * v;
        }
        at = end + (rng.random_range(0.04..0.12) * sr) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.iter_mut().for_each(|v| *v *= UTTERANCE_PEAK / peak);
    AudioSignal::new(out, CANONICAL_RATE).expect("finite synthesis")
}

/// The full desk-scale corpus: 40 s per noise (first 20 s test) and ten
/// utterances per speaker (eight train, one update, one test).
pub fn synthetic_corpus(seed: u64) -> Corpus {
    let test_len = (TEST_SECONDS * CANONICAL_RATE as f64) as usize;
    let noises = SYNTH_NOISES
        .iter()
        .map(|&label| {
            let full = synth_noise(label, NOISE_SECONDS, seed);
            NoiseAudio { label: label.into(), test: full.slice(0, test_len), train: full.slice(test_len, full.len()) }
        })
        .collect();
    let speakers = SYNTH_SPEAKERS
        .iter()
        .map(|&label| {
            let utt: Vec<AudioSignal> = (0..TRAIN_UTTERANCES + 2).map(|i| synth_utterance(label, i, seed)).collect();
            SpeakerAudio {
                label: label.into(),
                train: utt[..TRAIN_UTTERANCES].to_vec(),
                update: vec![utt[TRAIN_UTTERANCES].clone()],
                test: vec![utt[TRAIN_UTTERANCES + 1].clone()],
            }
        })
        .collect();
    Corpus { noises, speakers }
}
