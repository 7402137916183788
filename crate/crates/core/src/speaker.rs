//! Speaker identification inside one noise segment: pick high-energy frames,
//! decompose them on `[speakers | noise]`, gate frames dominated by noise and
//! rank speakers by their total sum of weights.

use std::ops::Range;

use ndarray::Array2;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::recovery::{solve_asna, AsnaParams, BlockDictionary, RecoveryProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeakerParams {
    /// Fraction of the segment's frames, by descending energy, that are decomposed.
    pub fraction: f64,
    pub fac: f64,
    pub fac_step: f64,
    pub fac_cap: f64,
    /// Gate keeps escalating while fewer frames than this pass.
    pub min_gated_frames: usize,
    /// Top TSW below `confidence_ratio` x runner-up marks the decision low-confidence.
    pub confidence_ratio: f64,
    pub solver: AsnaParams,
}

impl SpeakerParams {
    pub fn for_hop(hop_s: f64) -> Self {
        Self {
            fraction: 0.30,
            fac: 4.0,
            fac_step: 1.0,
            fac_cap: 64.0,
            min_gated_frames: (0.7 / hop_s).round() as usize,
            confidence_ratio: 1.05,
            solver: AsnaParams::default(),
        }
    }
}

/// Frames admitted by the noise gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    /// Row indices into the SW matrix, ascending.
    pub passed: Vec<usize>,
    pub fac_used: f64,
    /// The cap was reached and every frame was admitted.
    pub fail_open: bool,
}

/// Evidence gathered for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEvidence {
    pub segment_index: usize,
    /// Absolute frame indices, ascending.
    pub selected_frames: Vec<usize>,
    /// Selected frames whose decomposition succeeded; rows of `per_frame_sw`.
    pub solved_frames: Vec<usize>,
    /// Subset of `solved_frames` admitted by the gate.
    pub gated_frames: Vec<usize>,
    /// Solved frames x (speakers, then noise when present).
    pub per_frame_sw: Array2<f64>,
    pub tsw: Vec<f64>,
    pub fac_used: f64,
    pub fail_open: bool,
    /// Speaker indices by descending TSW, lower index first on ties.
    pub ranking: Vec<usize>,
    pub low_confidence: bool,
    pub failed_frames: usize,
}

impl SpeakerEvidence {
    pub fn best(&self) -> usize {
        self.ranking[0]
    }
}

/// `ceil(fraction * len)` frames of `segment` with the highest energy, ascending.
pub fn select_high_energy(energies: &[f64], segment: Range<usize>, fraction: f64) -> Result<Vec<usize>> {
    if segment.is_empty() || segment.end > energies.len() {
        return Err(Error::EmptySegment);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(crate::error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let count = ((fraction * segment.len() as f64).ceil() as usize).clamp(1, segment.len());
    let mut idx: Vec<usize> = segment.collect();
    idx.sort_by(|&i, &j| energies[j].total_cmp(&energies[i]).then(i.cmp(&j)));
    idx.truncate(count);
    idx.sort_unstable();
    Ok(idx)
}

fn passing(sw: &Array2<f64>, noise_col: usize, fac: f64) -> Vec<usize> {
    let n_sp = sw.ncols() - 1;
    (0..sw.nrows())
        .filter(|&r| {
            let row = sw.row(r);
            let speakers: f64 = (0..sw.ncols()).filter(|&c| c != noise_col).map(|c| row[c]).sum();
            row[noise_col] < fac * speakers / n_sp as f64
        })
        .collect()
}

/// Admit rows whose noise SW is below `fac` x the mean speaker SW, raising
/// `fac` by `step` while fewer than `min_frames` pass; past `cap` every row passes.
pub fn gate_frames(sw: &Array2<f64>, noise_col: usize, fac: f64, step: f64, cap: f64, min_frames: usize) -> GateOutcome {
    let need = min_frames.min(sw.nrows());
    let mut fac = fac;
    loop {
        let passed = passing(sw, noise_col, fac);
        if passed.len() >= need {
            return GateOutcome { passed, fac_used: fac, fail_open: false };
        }
        if fac >= cap {
            return GateOutcome { passed: (0..sw.nrows()).collect(), fac_used: fac, fail_open: true };
        }
        fac = (fac + step).min(cap);
    }
}

/// Speaker indices by descending TSW; ties keep the lower index first.
pub fn rank(tsw: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tsw.len()).collect();
    order.sort_by(|&a, &b| tsw[b].total_cmp(&tsw[a]).then(a.cmp(&b)));
    order
}

/// First `k` entries of the ranking.
pub fn top_k(evidence: &SpeakerEvidence, k: usize) -> Vec<usize> {
    evidence.ranking.iter().take(k).copied().collect()
}

/// Rank `speaker_dicts` on the high-energy frames of `segment`.
///
/// Without a noise dictionary the decomposition uses speakers only and every
/// solved frame is admitted.
pub fn identify_speaker(
    fm: &FeatureMatrix,
    segment: Range<usize>,
    segment_index: usize,
    noise_dict: Option<&Dictionary>,
    speaker_dicts: &[&Dictionary],
    params: &SpeakerParams,
) -> Result<SpeakerEvidence> {
    if speaker_dicts.is_empty() {
        return Err(Error::InsufficientSources("no speaker dictionaries".into()));
    }
    let selected = select_high_energy(fm.energies(), segment, params.fraction)?;
    let labels: Vec<String> = (0..speaker_dicts.len()).map(|k| format!("speaker-{k}")).collect();
    let mut parts: Vec<(&str, &Dictionary)> = labels.iter().map(String::as_str).zip(speaker_dicts.iter().copied()).collect();
    if let Some(nd) = noise_dict {
        parts.push(("noise", nd));
    }
    let dict = BlockDictionary::concat(&parts)?;
    if dict.rows() != fm.bins() {
        return Err(Error::DimensionMismatch { expected: dict.rows(), found: fm.bins() });
    }
    let n_cols = parts.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(selected.len());
    let mut solved = Vec::with_capacity(selected.len());
    let mut failed = 0;
    for &i in &selected {
        let outcome = RecoveryProblem::new(fm.frame(i), &dict).and_then(|p| solve_asna(&p, &params.solver));
        match outcome {
            Ok(sol) => {
                rows.push(sol.block_sums);
                solved.push(i);
            }
            Err(e) => {
                log::debug!("frame {i} dropped from speaker evidence: {e}");
                failed += 1;
            }
        }
    }
    if solved.is_empty() {
        return Err(Error::NoUsableFrames);
    }
    let sw = Array2::from_shape_fn((rows.len(), n_cols), |(r, c)| rows[r][c]);
    let gate = if noise_dict.is_some() {
        gate_frames(&sw, n_cols - 1, params.fac, params.fac_step, params.fac_cap, params.min_gated_frames)
    } else {
        GateOutcome { passed: (0..sw.nrows()).collect(), fac_used: params.fac, fail_open: false }
    };
    let n_sp = speaker_dicts.len();
    let mut tsw = vec![0.0; n_sp];
    for &r in &gate.passed {
        for (k, t) in tsw.iter_mut().enumerate() {
            *t += sw[[r, k]];
        }
    }
    let ranking = rank(&tsw);
    let top = tsw[ranking[0]];
    let second = ranking.get(1).map_or(0.0, |&k| tsw[k]);
    Ok(SpeakerEvidence {
        segment_index,
        selected_frames: selected,
        gated_frames: gate.passed.iter().map(|&r| solved[r]).collect(),
        solved_frames: solved,
        per_frame_sw: sw,
        low_confidence: gate.fail_open || top < params.confidence_ratio * second,
        tsw,
        fac_used: gate.fac_used,
        fail_open: gate.fail_open,
        ranking,
        failed_frames: failed,
    })
}
