//! One scenario through segmentation, speaker identification, optional
//! dictionary update, separation and scoring, under a dictionary regime.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::corpus::{training_features, Corpus};
use super::scenario::{MixScenario, MixedSignal};
use crate::dictionary::{update_dictionary, Dictionary, DictionaryBank};
use crate::error::{invalid, Error, Result};
use crate::features::{extract_with_layout, prune_low_energy, FeatureMatrix, FrameLayout, DEFAULT_PRUNE_THRESHOLD};
use crate::metrics::{detect_speech_segments, miss_false_rates, sdr, segmental_snr_error};
use crate::noise::{segment_noise, SegmentationParams};
use crate::recovery::AsnaParams;
use crate::separation::{resynthesize, separate, FeatureSeparation};
use crate::speaker::{identify_speaker, top_k, SpeakerParams};

/// Which dictionaries a run may consult.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Every dictionary in the bank.
    Complete,
    /// The true noise and speaker dictionaries and the true transition; separation only.
    GroundTruth,
    /// The scenario's two noise dictionaries removed.
    OutOfSetNoise,
    /// The scenario's two speaker dictionaries removed.
    OutOfSetSpeaker,
    /// As `OutOfSetNoise`, then the estimated noise dictionaries are updated with noise-only frames.
    UpdatedNoise,
    /// As `OutOfSetSpeaker`, then the estimated speaker dictionaries are updated with held-out utterances.
    UpdatedSpeaker,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::Complete,
        Regime::GroundTruth,
        Regime::OutOfSetNoise,
        Regime::OutOfSetSpeaker,
        Regime::UpdatedNoise,
        Regime::UpdatedSpeaker,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Regime::Complete => "complete",
            Regime::GroundTruth => "ground-truth",
            Regime::OutOfSetNoise => "out-of-set-noise",
            Regime::OutOfSetSpeaker => "out-of-set-speaker",
            Regime::UpdatedNoise => "updated-noise",
            Regime::UpdatedSpeaker => "updated-speaker",
        }
    }

    fn removes_noise(&self) -> bool {
        matches!(self, Regime::OutOfSetNoise | Regime::UpdatedNoise)
    }

    fn removes_speakers(&self) -> bool {
        matches!(self, Regime::OutOfSetSpeaker | Regime::UpdatedSpeaker)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL.into_iter().find(|r| r.tag() == s).ok_or_else(|| invalid(format!("unknown regime {s:?}")))
    }
}

/// How far down the pipeline a run goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Noise segmentation and classification only.
    Noise,
    /// Noise and speaker classification.
    Classify,
    /// Everything, including separation and all metrics.
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub layout: FrameLayout,
    pub segmentation: SegmentationParams,
    pub speaker: SpeakerParams,
    pub solver: AsnaParams,
    /// Cluster counts for speech-segment detection.
    pub detection_ks: [usize; 2],
    pub stage: Stage,
}

impl PipelineParams {
    pub fn standard(sample_rate: u32) -> Self {
        let layout = FrameLayout::standard(sample_rate);
        Self {
            layout,
            segmentation: SegmentationParams::for_hop(layout.hop_s()),
            speaker: SpeakerParams::for_hop(layout.hop_s()),
            solver: AsnaParams::default(),
            detection_ks: [2, 4],
            stage: Stage::Full,
        }
    }
}

/// Outcome of one (scenario, regime, SNR, method) run. Unset fields were not
/// reached, either because of the stage or because an earlier stage failed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenario_id: String,
    pub scenario_hash: String,
    pub method: String,
    pub regime: String,
    pub snr_db: f64,
    /// `ok`, or `failed:<stage>: <error>`.
    pub status: String,
    pub noise_est: [Option<String>; 2],
    pub noise_correct: [Option<bool>; 2],
    pub transition_true_s: f64,
    pub transition_est_s: Option<f64>,
    /// Estimated minus true transition time.
    pub transition_err_s: Option<f64>,
    pub speaker_est: [Option<String>; 2],
    pub speaker_correct: [Option<bool>; 2],
    pub speaker_top3: [Option<bool>; 2],
    pub low_confidence: [Option<bool>; 2],
    pub sdr_db: Option<f64>,
    pub snr_err_mean_abs: Option<f64>,
    pub snr_err_std: Option<f64>,
    pub miss_rate: [Option<f64>; 2],
    pub false_alarm_rate: [Option<f64>; 2],
    pub failed_frames: Option<usize>,
}

impl EvaluationReport {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// First frame whose midpoint is at or after `t_s`.
fn frame_at(layout: FrameLayout, t_s: f64) -> usize {
    let x = (t_s * layout.sample_rate as f64 - layout.frame_length as f64 / 2.0) / layout.hop as f64;
    x.ceil().max(0.0) as usize
}

/// Frames whose midpoint falls inside a sample range.
fn frames_within(layout: FrameLayout, r: &Range<usize>, n: usize) -> Range<usize> {
    let sr = layout.sample_rate as f64;
    let a = frame_at(layout, r.start as f64 / sr).min(n);
    let b = frame_at(layout, r.end as f64 / sr).min(n);
    a..b.max(a)
}

/// Frames that overlap no utterance sample.
fn noise_only_frames(layout: FrameLayout, utterances: &[Range<usize>], frames: Range<usize>) -> Vec<usize> {
    frames
        .filter(|&i| {
            let (a, b) = (i * layout.hop, i * layout.hop + layout.frame_length);
            utterances.iter().all(|u| b <= u.start || a >= u.end)
        })
        .collect()
}

struct Stage1 {
    segments: [Range<usize>; 2],
    /// Bank index of the noise estimated for each segment.
    noise: [usize; 2],
    degenerate: bool,
}

/// Run `scenario` under `regime`. Stage errors are recorded in `status`, never returned.
pub fn run_scenario(
    scenario: &MixScenario,
    mixed: &MixedSignal,
    corpus: &Corpus,
    bank: &DictionaryBank,
    regime: Regime,
    params: &PipelineParams,
) -> EvaluationReport {
    let mut report = EvaluationReport {
        scenario_id: scenario.id.clone(),
        scenario_hash: scenario.content_hash(),
        method: bank.method().map_or_else(|| "mixed".into(), |m| m.tag()),
        regime: regime.tag().into(),
        snr_db: scenario.snr_db,
        status: "ok".into(),
        transition_true_s: scenario.transition_s,
        ..Default::default()
    };
    if let Err((stage, e)) = run_stages(scenario, mixed, corpus, bank, regime, params, &mut report) {
        report.status = format!("failed:{stage}: {e}");
    }
    report
}

fn run_stages(
    scenario: &MixScenario,
    mixed: &MixedSignal,
    corpus: &Corpus,
    bank: &DictionaryBank,
    regime: Regime,
    params: &PipelineParams,
    report: &mut EvaluationReport,
) -> std::result::Result<(), (&'static str, Error)> {
    let layout = params.layout;
    let at = |stage: &'static str| move |e: Error| (stage, e);
    let true_noise = [&scenario.noise_a, &scenario.noise_b].map(|l| bank.noise_index(l));
    let true_speaker = [&scenario.speaker_a, &scenario.speaker_b].map(|l| bank.speaker_index(l));
    let fm = extract_with_layout(&mixed.mixture, layout, true).map_err(at("features"))?;
    let n = fm.n_frames();

    let noise_avail: Vec<usize> =
        (0..bank.n_noise()).filter(|i| !(regime.removes_noise() && true_noise.contains(&Some(*i)))).collect();
    let speaker_avail: Vec<usize> =
        (0..bank.n_speakers()).filter(|i| !(regime.removes_speakers() && true_speaker.contains(&Some(*i)))).collect();
    if noise_avail.is_empty() || speaker_avail.is_empty() {
        return Err(("regime", Error::InsufficientSources("regime leaves no dictionaries".into())));
    }

    // stage 1: noise segmentation
    let s1 = if regime == Regime::GroundTruth {
        let missing = || ("ground-truth", Error::InsufficientSources("true source missing from bank".into()));
        let t = frame_at(layout, scenario.transition_s).min(n);
        Stage1 { segments: [0..t, t..n], noise: [true_noise[0].ok_or_else(missing)?, true_noise[1].ok_or_else(missing)?], degenerate: false }
    } else {
        let dicts: Vec<&Dictionary> = noise_avail.iter().map(|&i| bank.noise(i)).collect();
        let seg = segment_noise(&fm, &dicts, &params.segmentation).map_err(at("segmentation"))?;
        Stage1 { segments: seg.segments(), noise: [noise_avail[seg.class_1], noise_avail[seg.class_2]], degenerate: seg.degenerate }
    };
    let transition_est = if s1.degenerate { layout.frame_midpoint_s(n) } else { layout.frame_midpoint_s(s1.segments[1].start) };
    report.transition_est_s = Some(if regime == Regime::GroundTruth { scenario.transition_s } else { transition_est });
    report.transition_err_s = report.transition_est_s.map(|t| t - scenario.transition_s);
    let labels = bank.noise_labels();
    for k in 0..2 {
        report.noise_est[k] = Some(labels[s1.noise[k]].to_string());
        report.noise_correct[k] = Some(Some(s1.noise[k]) == true_noise[k]);
    }
    if params.stage == Stage::Noise {
        return Ok(());
    }
    let live: Vec<usize> = (0..2).filter(|&k| !s1.segments[k].is_empty()).collect();

    // noise dictionaries per segment, refreshed from noise-only frames when the regime asks for it
    let mut noise_dicts: [Option<Dictionary>; 2] = [None, None];
    for &k in &live {
        noise_dicts[k] = Some(bank.noise(s1.noise[k]).clone());
    }
    if regime == Regime::UpdatedNoise {
        for &k in &live {
            let same: Vec<usize> = live.iter().copied().filter(|&j| s1.noise[j] == s1.noise[k]).collect();
            if same[0] != k {
                noise_dicts[k] = noise_dicts[same[0]].clone();
                continue;
            }
            let frames: Vec<usize> =
                same.iter().flat_map(|&j| noise_only_frames(layout, &mixed.utterances, s1.segments[j].clone())).collect();
            if frames.is_empty() {
                continue;
            }
            let feats = prune_low_energy(&fm.select(&frames), DEFAULT_PRUNE_THRESHOLD).map_err(at("noise-update"))?;
            let old = bank.noise(s1.noise[k]);
            let priors: Vec<&Dictionary> = noise_avail
                .iter()
                .filter(|&&i| i != s1.noise[k])
                .map(|&i| bank.noise(i))
                .chain(speaker_avail.iter().map(|&i| bank.speaker(i)))
                .collect();
            let upd = update_dictionary(old, feats.frames().view(), old.n_atoms(), &priors).map_err(at("noise-update"))?;
            noise_dicts[k] = Some(upd);
        }
    }

    // stage 2: speaker identification per segment
    let mut speaker_est: [Option<usize>; 2] = [None, None];
    let speaker_labels = bank.speaker_labels();
    let speaker_refs: Vec<&Dictionary> = speaker_avail.iter().map(|&i| bank.speaker(i)).collect();
    for &k in &live {
        let (est, top3, low) = if regime == Regime::GroundTruth {
            let truth = true_speaker[k].ok_or(("ground-truth", Error::InsufficientSources("true speaker missing".into())))?;
            (truth, true, false)
        } else {
            let ev = identify_speaker(&fm, s1.segments[k].clone(), k, noise_dicts[k].as_ref(), &speaker_refs, &params.speaker)
                .map_err(at("speaker"))?;
            let top3 = top_k(&ev, 3.min(speaker_refs.len())).iter().any(|&r| Some(speaker_avail[r]) == true_speaker[k]);
            (speaker_avail[ev.best()], top3, ev.low_confidence)
        };
        speaker_est[k] = Some(est);
        report.speaker_est[k] = Some(speaker_labels[est].to_string());
        report.speaker_correct[k] = Some(Some(est) == true_speaker[k]);
        report.speaker_top3[k] = Some(top3);
        report.low_confidence[k] = Some(low);
    }
    if params.stage == Stage::Classify {
        return Ok(());
    }

    // speaker dictionaries per segment, refreshed from held-out utterances when the regime asks for it
    let mut speaker_dicts: [Option<Dictionary>; 2] = [None, None];
    for &k in &live {
        let est = speaker_est[k].expect("identified above");
        let base = bank.speaker(est);
        speaker_dicts[k] = Some(if regime == Regime::UpdatedSpeaker {
            let label = [&scenario.speaker_a, &scenario.speaker_b][k];
            let update = corpus.speaker(label).map(|s| s.update.clone()).unwrap_or_default();
            if update.is_empty() {
                base.clone()
            } else {
                let feats = training_features(&update, layout).map_err(at("speaker-update"))?;
                let priors: Vec<&Dictionary> = noise_avail
                    .iter()
                    .map(|&i| bank.noise(i))
                    .chain(speaker_avail.iter().filter(|&&i| i != est).map(|&i| bank.speaker(i)))
                    .collect();
                update_dictionary(base, feats.frames().view(), base.n_atoms(), &priors).map_err(at("speaker-update"))?
            }
        } else {
            base.clone()
        });
    }

    // stage 3: separation
    let parts: Vec<FeatureSeparation> = live
        .iter()
        .map(|&k| {
            let seg = fm.range(s1.segments[k].start, s1.segments[k].end);
            separate(&seg, noise_dicts[k].as_ref().expect("set"), speaker_dicts[k].as_ref().expect("set"), &params.solver)
        })
        .collect::<Result<_>>()
        .map_err(at("separation"))?;
    let result = resynthesize(&mixed.mixture, &parts).map_err(at("separation"))?;
    report.failed_frames = Some(result.failed_frames);

    // stage 4: metrics
    report.sdr_db =
        Some(sdr(mixed.speech.samples(), result.speech_signal.samples(), Some(&mixed.utterances)).map_err(at("sdr"))?);
    let truth_sp = extract_with_layout(&mixed.speech, layout, false).map_err(at("snr-error"))?;
    let truth_ns = extract_with_layout(&mixed.noise, layout, false).map_err(at("snr-error"))?;
    let segs: Vec<Range<usize>> = mixed.utterances.iter().map(|u| frames_within(layout, u, n)).collect();
    let snr = segmental_snr_error(
        truth_sp.frames(),
        truth_ns.frames(),
        result.speech_features.frames(),
        result.noise_features.frames(),
        &segs,
    )
    .map_err(at("snr-error"))?;
    report.snr_err_mean_abs = Some(snr.mean_abs);
    report.snr_err_std = Some(snr.std);
    let ranges: Vec<Range<usize>> = live.iter().map(|&k| s1.segments[k].clone()).collect();
    let intervals = mixed.utterance_intervals();
    for (slot, &k) in params.detection_ks.iter().enumerate() {
        let det = detect_speech_segments(result.speech_features.energies(), &ranges, k, layout);
        let rates = miss_false_rates(&det.cluster_frames, &intervals, layout);
        report.miss_rate[slot] = Some(rates.miss_rate);
        report.false_alarm_rate[slot] = Some(rates.false_alarm_rate);
    }
    Ok(())
}

/// Speech features of the mixture's utterances only; convenient for diagnostics.
pub fn utterance_features(mixed: &MixedSignal, layout: FrameLayout) -> Result<FeatureMatrix> {
    let fm = extract_with_layout(&mixed.speech, layout, false)?;
    let idx: Vec<usize> = mixed.utterances.iter().flat_map(|u| frames_within(layout, u, fm.n_frames())).collect();
    Ok(fm.select(&idx))
}
