//! Two-party noisy conversation scenarios: pairing, placement and mixing.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::Corpus;
use crate::audio::{snap_to_pcm16, AudioSignal, CANONICAL_RATE};
use crate::error::{Error, Result};

pub const TOTAL_SECONDS: f64 = 20.0;
pub const TRANSITION_RANGE: (f64, f64) = (9.0, 11.0);
pub const MAX_UTTERANCE_SECONDS: f64 = 4.0;
pub const MIN_GAP_SECONDS: f64 = 2.0;
/// Distance kept between an utterance and the ends of the signal.
const EDGE_MARGIN_SECONDS: f64 = 0.25;
/// Mixture peak after headroom scaling.
const HEADROOM_PEAK: f64 = 0.9;

/// Where one utterance is placed; `speaker` is a corpus label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub speaker: String,
    pub start_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixScenario {
    pub id: String,
    pub noise_a: String,
    pub noise_b: String,
    pub speaker_a: String,
    pub speaker_b: String,
    pub transition_s: f64,
    pub total_s: f64,
    pub snr_db: f64,
    pub utterances: Vec<Placement>,
    pub seed: u64,
}

impl MixScenario {
    pub fn at_snr(&self, snr_db: f64) -> Self {
        Self { snr_db, ..self.clone() }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serialises");
        hex(&Sha256::digest(json))
    }

    /// Checks the timing constraints (transition window, duration, gaps, maximum utterance length).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("scenario {}: {m}", self.id)));
        if !(TRANSITION_RANGE.0..=TRANSITION_RANGE.1).contains(&self.transition_s) {
            return bad(format!("transition {} s outside [9, 11]", self.transition_s));
        }
        if self.total_s != TOTAL_SECONDS {
            return bad(format!("total {} s", self.total_s));
        }
        if self.noise_a == self.noise_b || self.speaker_a == self.speaker_b {
            return bad("sources must differ between the two parts".into());
        }
        let mut starts: Vec<f64> = self.utterances.iter().map(|u| u.start_s).collect();
        starts.sort_by(f64::total_cmp);
        for w in starts.windows(2) {
            if w[1] - (w[0] + MAX_UTTERANCE_SECONDS) < MIN_GAP_SECONDS - 1e-9 {
                return bad("utterances closer than the minimum gap".into());
            }
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pair noises and speakers: every noise leads `floor(N_sp / 2)` scenarios,
/// the first part drawing from the first half of the sorted speaker labels
/// and the second part from the other half, so each leading noise gets
/// distinct speaker pairs. Transition instants and placements are drawn from `seed`.
pub fn build_scenarios(noise_labels: &[String], speaker_labels: &[String], seed: u64) -> Result<Vec<MixScenario>> {
    if noise_labels.len() < 2 {
        return Err(Error::InsufficientSources(format!("{} noise labels, need 2", noise_labels.len())));
    }
    if speaker_labels.len() < 2 {
        return Err(Error::InsufficientSources(format!("{} speaker labels, need 2", speaker_labels.len())));
    }
    let mut speakers = speaker_labels.to_vec();
    speakers.sort();
    let (first, second) = speakers.split_at(speakers.len() / 2);
    let pairs = speakers.len() / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(noise_labels.len() * pairs);
    for (i, noise_a) in noise_labels.iter().enumerate() {
        let others: Vec<&String> = noise_labels.iter().filter(|n| *n != noise_a).collect();
        for j in 0..pairs {
            let noise_b = others[(i + j) % others.len()].clone();
            let speaker_a = first[j % first.len()].clone();
            let speaker_b = second[(i + j) % second.len()].clone();
            let transition_s = rng.random_range(TRANSITION_RANGE.0..=TRANSITION_RANGE.1);
            let lo_a = EDGE_MARGIN_SECONDS;
            let hi_a = transition_s - MIN_GAP_SECONDS / 2.0 - MAX_UTTERANCE_SECONDS;
            let lo_b = transition_s + MIN_GAP_SECONDS / 2.0;
            let hi_b = TOTAL_SECONDS - EDGE_MARGIN_SECONDS - MAX_UTTERANCE_SECONDS;
            let utterances = vec![
                Placement { speaker: speaker_a.clone(), start_s: rng.random_range(lo_a..=hi_a) },
                Placement { speaker: speaker_b.clone(), start_s: rng.random_range(lo_b..=hi_b) },
            ];
            let scenario_seed = rng.random::<u64>();
            out.push(MixScenario {
                id: format!("s{:03}-{noise_a}-{noise_b}-{speaker_a}-{speaker_b}", out.len()),
                noise_a: noise_a.clone(),
                noise_b,
                speaker_a,
                speaker_b,
                transition_s,
                total_s: TOTAL_SECONDS,
                snr_db: 0.0,
                utterances,
                seed: scenario_seed,
            });
        }
    }
    Ok(out)
}

/// Energy window used to set the noise gain of each part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrReference {
    /// Samples covered by the utterance.
    #[default]
    SpeechActive,
    /// The whole noise segment the utterance sits in.
    WholeSegment,
}

/// Noise gain `g` with `10 log10(E_speech / (g^2 E_noise)) = snr_db`, energies over `span`.
pub fn noise_gain(speech: &[f64], noise: &[f64], snr_db: f64, span: Range<usize>) -> Result<f64> {
    let es: f64 = speech[span.clone()].iter().map(|v| v * v).sum();
    let en: f64 = noise[span].iter().map(|v| v * v).sum();
    if es == 0.0 {
        return Err(Error::ZeroEnergy("speech"));
    }
    if en == 0.0 {
        return Err(Error::ZeroEnergy("noise"));
    }
    Ok((es / (en * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// `speech + g noise` with `g` from [`noise_gain`] over the whole signal; returns the mixture and `g`.
pub fn mix(speech: &AudioSignal, noise: &AudioSignal, snr_db: f64) -> Result<(AudioSignal, f64)> {
    if noise.len() < speech.len() {
        return Err(Error::LengthMismatch { left: speech.len(), right: noise.len() });
    }
    let noise = &noise.samples()[..speech.len()];
    let g = noise_gain(speech.samples(), noise, snr_db, 0..speech.len())?;
    let out = speech.samples().iter().zip(noise).map(|(s, n)| s + g * n).collect();
    Ok((AudioSignal::new(out, speech.sample_rate())?, g))
}

/// A realised scenario with its ground-truth components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSignal {
    pub mixture: AudioSignal,
    pub speech: AudioSignal,
    pub noise: AudioSignal,
    /// Sample ranges of the utterances, in placement order.
    pub utterances: Vec<Range<usize>>,
    pub transition_sample: usize,
    pub noise_gains: [f64; 2],
}

impl MixedSignal {
    /// Utterance spans in seconds.
    pub fn utterance_intervals(&self) -> Vec<(f64, f64)> {
        let sr = self.mixture.sample_rate() as f64;
        self.utterances.iter().map(|r| (r.start as f64 / sr, r.end as f64 / sr)).collect()
    }

    /// SNR of one part recomputed from the stored components over its utterance span.
    pub fn measured_snr_db(&self, part: usize) -> f64 {
        let r = self.utterances[part].clone();
        let es: f64 = self.speech.samples()[r.clone()].iter().map(|v| v * v).sum();
        let en: f64 = self.noise.samples()[r].iter().map(|v| v * v).sum();
        10.0 * (es / en).log10()
    }
}

/// Build the mixture: noise A up to the transition, noise B after it, one test
/// utterance per part, each part's noise scaled to the scenario SNR. The
/// components are scaled together for headroom and snapped to the 16-bit grid
/// so the stored mixture is exactly their sum.
pub fn realize(scenario: &MixScenario, corpus: &Corpus, reference: SnrReference) -> Result<MixedSignal> {
    let sr = CANONICAL_RATE as f64;
    let n = (scenario.total_s * sr).round() as usize;
    let t = (scenario.transition_s * sr).round() as usize;
    let lookup_noise = |l: &str| corpus.noise(l).ok_or_else(|| Error::InvalidInput(format!("noise {l:?} not in corpus")));
    let (na, nb) = (lookup_noise(&scenario.noise_a)?, lookup_noise(&scenario.noise_b)?);
    if na.test.len() < t || nb.test.len() < n - t {
        return Err(Error::InvalidInput("noise test parts too short for the scenario".into()));
    }
    let mut noise = na.test.samples()[..t].to_vec();
    noise.extend_from_slice(&nb.test.samples()[..n - t]);

    let mut speech = vec![0.0; n];
    let mut spans = Vec::with_capacity(scenario.utterances.len());
    for p in &scenario.utterances {
        let spk = corpus.speaker(&p.speaker).ok_or_else(|| Error::InvalidInput(format!("speaker {:?} not in corpus", p.speaker)))?;
        let utt = spk.test.first().ok_or(Error::EmptySegment)?;
        let start = (p.start_s * sr).round() as usize;
        let len = utt.len().min((MAX_UTTERANCE_SECONDS * sr) as usize).min(n.saturating_sub(start));
        speech[start..start + len].copy_from_slice(&utt.samples()[..len]);
        spans.push(start..start + len);
    }

    let parts = [0..t, t..n];
    let mut gains = [1.0; 2];
    for (k, part) in parts.iter().enumerate() {
        let active: Vec<&Range<usize>> = spans.iter().filter(|s| part.contains(&s.start)).collect();
        let window = match (reference, active.first()) {
            (SnrReference::SpeechActive, Some(s)) => (*s).clone(),
            _ => part.clone(),
        };
        gains[k] = noise_gain(&speech, &noise, scenario.snr_db, window)?;
        noise[part.clone()].iter_mut().for_each(|v| *v *= gains[k]);
    }

    let peak = speech.iter().zip(&noise).fold(0.0f64, |m, (s, v)| m.max((s + v).abs()));
    let scale = if peak > HEADROOM_PEAK { HEADROOM_PEAK / peak } else { 1.0 };
    let speech: Vec<f64> = speech.iter().map(|v| snap_to_pcm16(v * scale)).collect();
    let noise: Vec<f64> = noise.iter().map(|v| snap_to_pcm16(v * scale)).collect();
    let mixture: Vec<f64> = speech.iter().zip(&noise).map(|(s, v)| s + v).collect();
    Ok(MixedSignal {
        mixture: AudioSignal::new(mixture, CANONICAL_RATE)?,
        speech: AudioSignal::new(speech, CANONICAL_RATE)?,
        noise: AudioSignal::new(noise, CANONICAL_RATE)?,
        utterances: spans,
        transition_sample: t,
        noise_gains: gains.map(|g| g * scale),
    })
}
