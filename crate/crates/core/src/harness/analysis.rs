//! Classification and separation of a single recording against a full bank,
//! without ground truth.

use std::ops::Range;

use ndarray::Array2;
use serde::Serialize;

use super::pipeline::PipelineParams;
use crate::audio::AudioSignal;
use crate::dictionary::{Dictionary, DictionaryBank};
use crate::error::Result;
use crate::features::{extract_with_layout, FeatureMatrix};
use crate::noise::segment_noise;
use crate::separation::{resynthesize, separate, FeatureSeparation, SeparationResult};
use crate::speaker::identify_speaker;

/// Decisions for one noise region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentAnalysis {
    pub frames: Range<usize>,
    pub start_s: f64,
    pub end_s: f64,
    pub noise: String,
    pub noise_index: usize,
    /// Absent when speaker identification failed for the segment.
    pub speaker: Option<String>,
    pub speaker_index: Option<usize>,
    /// Total speaker weight per speaker label, in bank order.
    pub speaker_scores: Vec<(String, f64)>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalAnalysis {
    pub duration_s: f64,
    /// Start of the second region, or the end of the signal when only one noise was found.
    pub transition_s: f64,
    pub degenerate: bool,
    pub segments: Vec<SegmentAnalysis>,
}

/// Segment the noise of `signal` and identify the speaker of each region using every dictionary of `bank`.
pub fn analyze_signal(signal: &AudioSignal, bank: &DictionaryBank, params: &PipelineParams) -> Result<SignalAnalysis> {
    let layout = params.layout;
    let fm = extract_with_layout(signal, layout, false)?;
    let noise: Vec<&Dictionary> = (0..bank.n_noise()).map(|i| bank.noise(i)).collect();
    let speakers: Vec<&Dictionary> = (0..bank.n_speakers()).map(|i| bank.speaker(i)).collect();
    let seg = segment_noise(&fm, &noise, &params.segmentation)?;
    let noise_labels = bank.noise_labels();
    let speaker_labels = bank.speaker_labels();
    let sr = signal.sample_rate() as f64;
    let mut segments = Vec::new();
    for (k, (frames, class)) in seg.segments().into_iter().zip(seg.classes()).enumerate() {
        if frames.is_empty() {
            continue;
        }
        let (speaker_index, speaker_scores, low_confidence) =
            match identify_speaker(&fm, frames.clone(), k, Some(noise[class]), &speakers, &params.speaker) {
                Ok(ev) => {
                    let scores = speaker_labels.iter().zip(&ev.tsw).map(|(l, &w)| (l.to_string(), w)).collect();
                    (Some(ev.best()), scores, ev.low_confidence)
                }
                Err(e) => {
                    log::warn!("segment {k}: speaker identification failed: {e}");
                    (None, Vec::new(), true)
                }
            };
        segments.push(SegmentAnalysis {
            start_s: (frames.start * layout.hop) as f64 / sr,
            end_s: if frames.end == fm.n_frames() {
                signal.duration_s()
            } else {
                (frames.end * layout.hop) as f64 / sr
            },
            frames,
            noise: noise_labels[class].to_string(),
            noise_index: class,
            speaker: speaker_index.map(|i| speaker_labels[i].to_string()),
            speaker_index,
            speaker_scores,
            low_confidence,
        });
    }
    let transition_s = if seg.degenerate { signal.duration_s() } else { seg.transition_time };
    Ok(SignalAnalysis { duration_s: signal.duration_s(), transition_s, degenerate: seg.degenerate, segments })
}

/// Analyse `signal`, then split each region with its estimated noise and speaker dictionaries.
/// Regions without a speaker decision are assigned entirely to noise.
pub fn separate_signal(
    signal: &AudioSignal,
    bank: &DictionaryBank,
    params: &PipelineParams,
) -> Result<(SignalAnalysis, SeparationResult)> {
    let analysis = analyze_signal(signal, bank, params)?;
    let fm = extract_with_layout(signal, params.layout, true)?;
    let parts = analysis
        .segments
        .iter()
        .map(|s| {
            let seg = fm.range(s.frames.start, s.frames.end);
            let noise = bank.noise(s.noise_index);
            match s.speaker_index {
                Some(i) => separate(&seg, noise, bank.speaker(i), &params.solver),
                None => Ok(FeatureSeparation {
                    speech: FeatureMatrix::from_frames(Array2::zeros((seg.bins(), seg.n_frames())), seg.layout())?
                        .with_phase(seg.phase().expect("extracted with phase").clone())?,
                    noise: seg.clone(),
                    weights: Array2::zeros((noise.n_atoms(), seg.n_frames())),
                    failed_frames: 0,
                }),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let result = resynthesize(signal, &parts)?;
    Ok((analysis, result))
}
