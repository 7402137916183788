//! Speech/noise separation on a two-block dictionary and time-domain resynthesis.

use ndarray::Array2;

use crate::audio::AudioSignal;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::features::{col_major_zeros, reconstruct, FeatureMatrix};
use crate::recovery::{solve_asna, AsnaParams, BlockDictionary, RecoveryProblem};

/// Feature-domain split of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeparation {
    /// Speech estimate `D_sp x_sp`, carrying the mixture phase when it had one.
    pub speech: FeatureMatrix,
    /// Noise estimate `D_ns x_ns`.
    pub noise: FeatureMatrix,
    /// Solver weights, `[noise | speaker]` columns x frames.
    pub weights: Array2<f64>,
    /// Frames whose solve failed; their energy went entirely to noise.
    pub failed_frames: usize,
}

/// Time-domain estimates for a whole mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub speech_features: FeatureMatrix,
    pub noise_features: FeatureMatrix,
    pub speech_signal: AudioSignal,
    /// `mixture - speech_signal`, sample for sample.
    pub noise_signal: AudioSignal,
    pub failed_frames: usize,
}

/// Decompose every frame on `[noise | speaker]` and split the model by block.
pub fn separate(fm: &FeatureMatrix, noise_dict: &Dictionary, speaker_dict: &Dictionary, params: &AsnaParams) -> Result<FeatureSeparation> {
    let dict = BlockDictionary::concat(&[("noise", noise_dict), ("speaker", speaker_dict)])?;
    if dict.rows() != fm.bins() {
        return Err(Error::DimensionMismatch { expected: dict.rows(), found: fm.bins() });
    }
    let (p, n) = (fm.bins(), fm.n_frames());
    let mut speech = col_major_zeros(p, n);
    let mut noise = col_major_zeros(p, n);
    let mut weights = Array2::zeros((dict.cols(), n));
    let mut failed = 0;
    for i in 0..n {
        let y = fm.frame(i);
        if y.iter().all(|&v| v == 0.0) {
            continue;
        }
        match RecoveryProblem::new(y, &dict).and_then(|prob| solve_asna(&prob, params)) {
            Ok(sol) => {
                weights.column_mut(i).assign(&ndarray::ArrayView1::from(&sol.weights));
                noise.column_mut(i).assign(&ndarray::ArrayView1::from(&dict.reconstruct(&sol.weights, Some(0))));
                speech.column_mut(i).assign(&ndarray::ArrayView1::from(&dict.reconstruct(&sol.weights, Some(1))));
            }
            Err(e) => {
                log::debug!("frame {i} not separated: {e}");
                failed += 1;
                noise.column_mut(i).assign(&y);
            }
        }
    }
    let layout = fm.layout();
    let mut speech = FeatureMatrix::from_frames(speech, layout)?;
    if let Some(ph) = fm.phase() {
        speech = speech.with_phase(ph.clone())?;
    }
    Ok(FeatureSeparation { speech, noise: FeatureMatrix::from_frames(noise, layout)?, weights, failed_frames: failed })
}

/// Overlap-add the speech estimate with the mixture phase; noise by subtraction.
pub fn resynthesize(mixture: &AudioSignal, parts: &[FeatureSeparation]) -> Result<SeparationResult> {
    let speech_features = FeatureMatrix::concat(&parts.iter().map(|p| p.speech.clone()).collect::<Vec<_>>())?;
    let noise_features = FeatureMatrix::concat(&parts.iter().map(|p| p.noise.clone()).collect::<Vec<_>>())?;
    let mut speech = reconstruct(&speech_features)?.into_samples();
    speech.resize(mixture.len(), 0.0);
    let noise: Vec<f64> = mixture.samples().iter().zip(&speech).map(|(m, s)| m - s).collect();
    let rate = mixture.sample_rate();
    Ok(SeparationResult {
        speech_signal: AudioSignal::new(speech, rate)?,
        noise_signal: AudioSignal::new(noise, rate)?,
        speech_features,
        noise_features,
        failed_frames: parts.iter().map(|p| p.failed_frames).sum(),
    })
}

/// `D x` for the full two-block model, frame by frame (for additivity checks).
pub fn model_sum(sep: &FeatureSeparation) -> Array2<f64> {
    sep.speech.frames() + sep.noise.frames()
}
