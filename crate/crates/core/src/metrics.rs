//! Separation quality (SDR, segmental-SNR error) and speech-segment detection scores.

use std::ops::Range;

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::features::FrameLayout;

/// Ceiling reported when the error norm vanishes.
pub const SDR_CAP_DB: f64 = 100.0;
const KMEANS_MAX_ITERS: usize = 100;

/// `20 log10(|s| / |s - s_hat|)` over the samples in `mask` (all samples when `None`).
pub fn sdr(reference: &[f64], estimate: &[f64], mask: Option<&[Range<usize>]>) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch { left: reference.len(), right: estimate.len() });
    }
    let full = [0..reference.len()];
    let ranges = mask.unwrap_or(&full);
    let (mut num, mut den) = (0.0, 0.0);
    for r in ranges {
        let r = r.start.min(reference.len())..r.end.min(reference.len());
        for i in r {
            num += reference[i] * reference[i];
            den += (reference[i] - estimate[i]).powi(2);
        }
    }
    if num == 0.0 {
        return Err(Error::ZeroEnergy("reference"));
    }
    if den == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (num / den).log10()).min(SDR_CAP_DB))
}

/// Per-segment `SNR_o - SNR_e` and its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrErrorStats {
    pub errors: Vec<f64>,
    pub mean_abs: f64,
    /// Sample standard deviation (n - 1); 0 for a single segment.
    pub std: f64,
    /// Segments dropped for a zero-energy denominator or numerator.
    pub skipped: usize,
}

fn energy(m: &Array2<f64>, r: &Range<usize>) -> f64 {
    m.slice(s![.., r.start..r.end]).iter().map(|v| v * v).sum()
}

/// Segmental SNR error over frame ranges: `10 log10(|Y_sp|^2/|Y_ns|^2)` from the
/// ground truth minus the same ratio from the estimates.
pub fn segmental_snr_error(
    true_sp: &Array2<f64>,
    true_ns: &Array2<f64>,
    est_sp: &Array2<f64>,
    est_ns: &Array2<f64>,
    segments: &[Range<usize>],
) -> Result<SnrErrorStats> {
    let shape = true_sp.dim();
    for m in [true_ns, est_sp, est_ns] {
        if m.dim() != shape {
            return Err(Error::DimensionMismatch { expected: shape.1, found: m.ncols() });
        }
    }
    if segments.is_empty() {
        return Err(Error::EmptySegment);
    }
    let mut errors = Vec::with_capacity(segments.len());
    let mut skipped = 0;
    for seg in segments {
        let seg = seg.start.min(shape.1)..seg.end.min(shape.1);
        let energies = [true_sp, true_ns, est_sp, est_ns].map(|m| energy(m, &seg));
        if seg.is_empty() || energies.contains(&0.0) {
            log::debug!("segment {seg:?} skipped: zero energy");
            skipped += 1;
            continue;
        }
        let snr_o = 10.0 * (energies[0] / energies[1]).log10();
        let snr_e = 10.0 * (energies[2] / energies[3]).log10();
        errors.push(snr_o - snr_e);
    }
    if errors.is_empty() {
        return Err(Error::ZeroEnergy("speech segments"));
    }
    let n = errors.len() as f64;
    let mean_abs = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mean = errors.iter().sum::<f64>() / n;
    let std = if errors.len() > 1 {
        (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SnrErrorStats { errors, mean_abs, std, skipped })
}

/// Frames of the top-centroid cluster of local energy maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSegments {
    /// Absolute frame indices, ascending.
    pub cluster_frames: Vec<usize>,
    /// Frame extents of the cluster frames merged into disjoint `(start_s, end_s)` intervals.
    pub intervals: Vec<(f64, f64)>,
    /// Clusters used per range (reduced when a range has fewer maxima than `k`).
    pub k_used: Vec<usize>,
    /// Some range had fewer local maxima than `k`.
    pub reduced: bool,
}

/// Interior frames strictly above both neighbours.
pub fn local_maxima(energies: &[f64], range: Range<usize>) -> Vec<usize> {
    let r = range.start..range.end.min(energies.len());
    if r.len() < 3 {
        return Vec::new();
    }
    (r.start + 1..r.end - 1).filter(|&i| energies[i] > energies[i - 1] && energies[i] > energies[i + 1]).collect()
}

fn nearest(centroids: &[f64], v: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, &m) in centroids.iter().enumerate() {
        let d = (v - m).abs();
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// 1-D k-means from centroids spread evenly over `[min, max]`; returns assignments and centroids.
pub fn kmeans_1d(values: &[f64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let k = k.min(values.len()).max(1);
    if values.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if k == 1 || lo == hi {
        return (vec![0; values.len()], vec![values.iter().sum::<f64>() / values.len() as f64]);
    }
    let mut centroids: Vec<f64> = (0..k).map(|c| lo + (hi - lo) * c as f64 / (k - 1) as f64).collect();
    let mut assign: Vec<usize> = values.iter().map(|&v| nearest(&centroids, v)).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&v, &a) in values.iter().zip(&assign) {
            sums[a] += v;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            } else {
                // reseed at the largest value not already sitting on a centroid
                let taken = |v: f64| centroids.contains(&v);
                if let Some(v) = values.iter().copied().filter(|&v| !taken(v)).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))) {
                    centroids[c] = v;
                }
            }
        }
        let next: Vec<usize> = values.iter().map(|&v| nearest(&centroids, v)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    (assign, centroids)
}

/// Cluster the local energy maxima of every range independently into `k`
/// groups and keep the members of the highest-centroid group.
pub fn detect_speech_segments(energies: &[f64], ranges: &[Range<usize>], k: usize, layout: FrameLayout) -> SpeechSegments {
    let mut frames = Vec::new();
    let mut k_used = Vec::with_capacity(ranges.len());
    let mut reduced = false;
    for r in ranges {
        let maxima = local_maxima(energies, r.clone());
        if maxima.len() < k {
            reduced = true;
        }
        let kk = k.min(maxima.len());
        k_used.push(kk);
        if maxima.is_empty() {
            continue;
        }
        let values: Vec<f64> = maxima.iter().map(|&i| energies[i]).collect();
        let (assign, centroids) = kmeans_1d(&values, kk);
        let top = (0..centroids.len()).fold(0, |b, c| if centroids[c] > centroids[b] { c } else { b });
        frames.extend(maxima.iter().zip(&assign).filter(|(_, &a)| a == top).map(|(&i, _)| i));
    }
    frames.sort_unstable();
    let sr = layout.sample_rate as f64;
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for &i in &frames {
        let (a, b) = ((i * layout.hop) as f64 / sr, (i * layout.hop + layout.frame_length) as f64 / sr);
        match intervals.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => intervals.push((a, b)),
        }
    }
    SpeechSegments { cluster_frames: frames, intervals, k_used, reduced }
}

/// Miss rate and false-alarm rate in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRates {
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    /// No cluster frames: FAR reported as 0.
    pub no_detections: bool,
    /// No true segments: MR reported as 0.
    pub no_segments: bool,
}

/// MR: share of true intervals holding no cluster-frame midpoint. FAR: share of
/// cluster frames whose midpoint lies outside every true interval.
pub fn miss_false_rates(cluster_frames: &[usize], true_intervals: &[(f64, f64)], layout: FrameLayout) -> DetectionRates {
    let mids: Vec<f64> = cluster_frames.iter().map(|&i| layout.frame_midpoint_s(i)).collect();
    miss_false_rates_at(&mids, true_intervals)
}

/// Same as [`miss_false_rates`] with detections given directly as times.
pub fn miss_false_rates_at(times: &[f64], true_intervals: &[(f64, f64)]) -> DetectionRates {
    let inside = |t: f64, (a, b): (f64, f64)| t >= a && t <= b;
    let missed = true_intervals.iter().filter(|&&iv| !times.iter().any(|&t| inside(t, iv))).count();
    let strays = times.iter().filter(|&&t| !true_intervals.iter().any(|&iv| inside(t, iv))).count();
    DetectionRates {
        miss_rate: if true_intervals.is_empty() { 0.0 } else { 100.0 * missed as f64 / true_intervals.len() as f64 },
        false_alarm_rate: if times.is_empty() { 0.0 } else { 100.0 * strays as f64 / times.len() as f64 },
        no_detections: times.is_empty(),
        no_segments: true_intervals.is_empty(),
    }
}
