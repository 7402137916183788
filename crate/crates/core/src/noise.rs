//! Frame-wise noise labelling by block cosine scores, recursive divide-and-conquer
//! segmentation into two noise regions and refinement of the transition frame.

use ndarray::{Array2, Axis};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const DEFAULT_PURITY: f64 = 0.90;
/// Frames consulted by the low-energy vote of short impure spans.
pub const LOW_ENERGY_VOTERS: usize = 10;
const MAX_REFINE_PASSES: usize = 8;

/// Initial per-frame noise labels with their scores and energies.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabelTrack {
    /// `labels[i] = argmax_j scores[[i, j]]`, lowest index on ties.
    pub labels: Vec<usize>,
    /// Frames x noise dictionaries.
    pub scores: Array2<f64>,
    pub energies: Vec<f64>,
}

impl FrameLabelTrack {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationParams {
    pub purity: f64,
    /// Spans at most this long are labelled by their lowest-energy frames (2 s).
    pub min_frames: usize,
    /// Half-width of the refinement search and length of each balance window (1 s).
    pub window: usize,
}

impl SegmentationParams {
    pub fn for_hop(hop_s: f64) -> Self {
        Self {
            purity: DEFAULT_PURITY,
            min_frames: (2.0 / hop_s).round() as usize,
            window: (1.0 / hop_s).round() as usize,
        }
    }
}

/// Outcome of two-class noise segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSegmentation {
    /// Class of the first region.
    pub class_1: usize,
    /// Class of the second region; equal to `class_1` when degenerate.
    pub class_2: usize,
    /// First frame of the second region; `n` when degenerate.
    pub transition_frame: usize,
    /// Midpoint of the transition frame, in seconds.
    pub transition_time: f64,
    /// Segment-level labels after consolidation.
    pub labels: Vec<usize>,
    /// Fewer than two classes survived.
    pub degenerate: bool,
    pub track: FrameLabelTrack,
}

impl NoiseSegmentation {
    /// Frame ranges of the two regions (the second is empty when degenerate).
    pub fn segments(&self) -> [std::ops::Range<usize>; 2] {
        let n = self.labels.len();
        [0..self.transition_frame.min(n), self.transition_frame.min(n)..n]
    }

    pub fn classes(&self) -> [usize; 2] {
        [self.class_1, self.class_2]
    }
}

/// Result of keeping the two most frequent labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Consolidation {
    pub class_1: usize,
    pub class_2: usize,
    pub labels: Vec<usize>,
    pub degenerate: bool,
}

fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (j, v);
        }
    }
    best.0
}

/// Most frequent label, lowest label on ties; returns `(label, count)`.
fn modal_label(labels: impl IntoIterator<Item = usize>) -> (usize, usize) {
    let mut counts: Vec<usize> = Vec::new();
    for l in labels {
        if l >= counts.len() {
            counts.resize(l + 1, 0);
        }
        counts[l] += 1;
    }
    let mut best = (0, 0);
    for (l, &c) in counts.iter().enumerate() {
        if c > best.1 {
            best = (l, c);
        }
    }
    best
}

/// `scores[[i, j]] = |D_j^T y_i|_1` with each frame scaled to unit L2 norm.
pub fn frame_scores(fm: &FeatureMatrix, noise_dicts: &[&Dictionary]) -> Result<FrameLabelTrack> {
    let n = fm.n_frames();
    let mut scores = Array2::zeros((n, noise_dicts.len()));
    let mut normed = fm.frames().clone();
    for mut col in normed.axis_iter_mut(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
    for (j, d) in noise_dicts.iter().enumerate() {
        if d.dim() != fm.bins() {
            return Err(Error::DimensionMismatch { expected: fm.bins(), found: d.dim() });
        }
        // frames and atoms are non-negative, so the L1 norm is a plain sum
        let proj = d.atoms().t().dot(&normed);
        for (i, col) in proj.axis_iter(Axis(1)).enumerate() {
            scores[[i, j]] = col.iter().map(|v| v.abs()).sum();
        }
    }
    let labels = scores.rows().into_iter().map(|r| argmax_lowest(r.iter().copied())).collect();
    Ok(FrameLabelTrack { labels, scores, energies: fm.energies().to_vec() })
}

/// Segment labels for frames `a..=b` by recursive halving.
pub fn divide_recursive(track: &FrameLabelTrack, a: usize, b: usize, purity: f64, min_frames: usize) -> Vec<usize> {
    let mut out = vec![0; b + 1 - a];
    divide_into(track, a, b, purity, min_frames, a, &mut out);
    out
}

fn divide_into(
    track: &FrameLabelTrack,
    a: usize,
    b: usize,
    purity: f64,
    min_frames: usize,
    origin: usize,
    out: &mut [usize],
) {
    let len = b + 1 - a;
    let (label, count) = modal_label(track.labels[a..=b].iter().copied());
    let fill = if count as f64 >= purity * len as f64 {
        Some(label)
    } else if len <= min_frames {
        let mut idx: Vec<usize> = (a..=b).collect();
        idx.sort_by(|&i, &j| track.energies[i].total_cmp(&track.energies[j]).then(i.cmp(&j)));
        idx.truncate(LOW_ENERGY_VOTERS);
        Some(modal_label(idx.iter().map(|&i| track.labels[i])).0)
    } else {
        None
    };
    match fill {
        Some(l) => out[a - origin..=b - origin].fill(l),
        None => {
            let m = (a + b) / 2;
            divide_into(track, a, m, purity, min_frames, origin, out);
            divide_into(track, m + 1, b, purity, min_frames, origin, out);
        }
    }
}

/// Keep the two most frequent labels and fold every other run into the one
/// whose index centroid is nearer. `class_1` is the class of frame 0 afterwards.
pub fn consolidate_two_classes(labels: &[usize]) -> Result<Consolidation> {
    if labels.is_empty() {
        return Err(Error::EmptySegment);
    }
    let max_label = *labels.iter().max().expect("non-empty");
    let mut counts = vec![0usize; max_label + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let mut order: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] > 0).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    if order.len() < 2 {
        return Ok(Consolidation { class_1: order[0], class_2: order[0], labels: labels.to_vec(), degenerate: true });
    }
    let (p, q) = (order[0], order[1]);
    let centroid = |c: usize| {
        let (s, k) = labels.iter().enumerate().filter(|(_, &l)| l == c).fold((0.0, 0.0), |(s, k), (i, _)| (s + i as f64, k + 1.0));
        s / k
    };
    let (cp, cq) = (centroid(p), centroid(q));
    let mut out = labels.to_vec();
    let mut i = 0;
    while i < labels.len() {
        let mut j = i;
        while j < labels.len() && labels[j] == labels[i] {
            j += 1;
        }
        if labels[i] != p && labels[i] != q {
            let mid = (i + j - 1) as f64 / 2.0;
            let (dp, dq) = ((mid - cp).abs(), (mid - cq).abs());
            let target = if dp < dq || (dp == dq && p < q) { p } else { q };
            out[i..j].fill(target);
        }
        i = j;
    }
    let class_1 = out[0];
    let class_2 = if class_1 == p { q } else { p };
    if !out.contains(&class_2) {
        return Ok(Consolidation { class_1, class_2: class_1, labels: out, degenerate: true });
    }
    Ok(Consolidation { class_1, class_2, labels: out, degenerate: false })
}

/// Candidate `t` within `window` frames of `i_init` (clipped to `1..=n-1`)
/// minimising `|#class_1 in [t, t+window) - #class_2 in [t-window, t)|` over
/// the initial frame labels. Ties go to the candidate nearest `i_init`, then
/// to the lower index.
pub fn refine_transition(track: &FrameLabelTrack, class_1: usize, class_2: usize, i_init: usize, window: usize) -> usize {
    let n = track.len();
    if n < 2 {
        return i_init;
    }
    let lo = i_init.saturating_sub(window).max(1);
    let hi = (i_init + window).min(n - 1);
    let count = |c: usize, from: usize, to: usize| track.labels[from..to].iter().filter(|&&l| l == c).count() as i64;
    let mut best: Option<(i64, usize, usize)> = None;
    for t in lo..=hi {
        let after = count(class_1, t, (t + window).min(n));
        let before = count(class_2, t.saturating_sub(window), t);
        let key = ((after - before).abs(), t.abs_diff(i_init), t);
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    }
    best.map_or(i_init, |b| b.2)
}

/// Label frames, divide, consolidate to two classes and refine the transition.
pub fn segment_noise(fm: &FeatureMatrix, noise_dicts: &[&Dictionary], params: &SegmentationParams) -> Result<NoiseSegmentation> {
    if fm.n_frames() == 0 {
        return Err(Error::EmptySegment);
    }
    if noise_dicts.is_empty() {
        return Err(Error::InsufficientSources("no noise dictionaries".into()));
    }
    let track = frame_scores(fm, noise_dicts)?;
    let n = track.len();
    let c_lab = divide_recursive(&track, 0, n - 1, params.purity, params.min_frames);
    let cons = consolidate_two_classes(&c_lab)?;
    let layout = fm.layout();
    if cons.degenerate {
        return Ok(NoiseSegmentation {
            class_1: cons.class_1,
            class_2: cons.class_2,
            transition_frame: n,
            transition_time: layout.frame_midpoint_s(n),
            labels: cons.labels,
            degenerate: true,
            track,
        });
    }
    let i_init = (1..n).find(|&i| cons.labels[i] != cons.labels[i - 1]).expect("two classes present");
    // re-centre until stable: the initial change can sit further than one window from the optimum
    let mut i_t = i_init;
    for _ in 0..MAX_REFINE_PASSES {
        let next = refine_transition(&track, cons.class_1, cons.class_2, i_t, params.window);
        if next == i_t {
            break;
        }
        i_t = next;
    }
    let labels = (0..n).map(|i| if i < i_t { cons.class_1 } else { cons.class_2 }).collect();
    Ok(NoiseSegmentation {
        class_1: cons.class_1,
        class_2: cons.class_2,
        transition_frame: i_t,
        transition_time: layout.frame_midpoint_s(i_t),
        labels,
        degenerate: false,
        track,
    })
}
