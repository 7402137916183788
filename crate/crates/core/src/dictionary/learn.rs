use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dictionary, LearningMethod};
use crate::error::{invalid, Error, Result};
use crate::features::col_major_zeros;

pub const DEFAULT_KMEANS_ITERS: usize = 100;
pub const DEFAULT_KMEDOID_ROUNDS: usize = 50;

const DISTANCE_BLOCK: usize = 256;

/// Indices of the non-zero columns; rejects negative or non-finite entries.
fn usable_columns(features: ArrayView2<f64>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(features.ncols());
    for (j, col) in features.columns().into_iter().enumerate() {
        if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid(format!("feature {j} has a negative or non-finite entry")));
        }
        if col.iter().any(|&v| v > 0.0) {
            out.push(j);
        }
    }
    Ok(out)
}

fn gather(features: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = col_major_zeros(features.nrows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        out.column_mut(k).assign(&features.column(j));
    }
    out
}

fn check_budget(n_atoms: usize, available: usize) -> Result<()> {
    if n_atoms == 0 {
        return Err(invalid("atom count must be positive"));
    }
    if available < n_atoms {
        return Err(Error::TooFewFeatures { needed: n_atoms, available });
    }
    Ok(())
}

/// Squared Euclidean distances between every column of `x` and every column of `c` (|x| x |c|).
fn sq_distances(x: ArrayView2<f64>, x_norms: &[f64], c: ArrayView2<f64>) -> Array2<f64> {
    let c_norms: Vec<f64> = c.columns().into_iter().map(|v| v.dot(&v)).collect();
    let mut d = x.t().dot(&c);
    for ((i, j), v) in d.indexed_iter_mut() {
        *v = (x_norms[i] + c_norms[j] - 2.0 * *v).max(0.0);
    }
    d
}

/// Uniformly sampled distinct features, each L2-normalised.
pub fn learn_random(features: ArrayView2<f64>, n_atoms: usize, seed: u64) -> Result<Dictionary> {
    let usable = usable_columns(features)?;
    check_budget(n_atoms, usable.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> =
        rand::seq::index::sample(&mut rng, usable.len(), n_atoms).into_iter().map(|k| usable[k]).collect();
    picked.sort_unstable();
    Dictionary::from_atoms(gather(features, &picked), "", LearningMethod::Random, 0, seed)
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// Raw (unnormalised) centroids, one per column.
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid after each iteration.
    pub objective_trace: Vec<f64>,
}

/// Lloyd iterations with k-means++ seeding. Empty clusters are reseeded with
/// the feature farthest from its centroid.
pub fn kmeans_clustering(x: ArrayView2<f64>, k: usize, seed: u64, max_iters: usize) -> Result<KMeansFit> {
    let n = x.ncols();
    check_budget(k, n)?;
    let norms: Vec<f64> = x.columns().into_iter().map(|c| c.dot(&c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut chosen = vec![rng.random_range(0..n)];
    let mut closest = sq_distances(x, &norms, x.slice(s![.., chosen[0]..chosen[0] + 1])).column(0).to_vec();
    while chosen.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            // all remaining features coincide with a centre
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        let d = sq_distances(x, &norms, x.slice(s![.., next..next + 1]));
        for (c, v) in closest.iter_mut().zip(d.column(0)) {
            *c = c.min(*v);
        }
    }
    let mut centroids = gather(x, &chosen);
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();

    for _ in 0..max_iters.max(1) {
        let d = sq_distances(x, &norms, centroids.view());
        let mut changed = false;
        for (i, row) in d.rows().into_iter().enumerate() {
            let best = argmin(row.iter().copied());
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        let mut sums = col_major_zeros(x.nrows(), k);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            let mut col = sums.column_mut(a);
            col += &x.column(i);
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mean = sums.column(j).mapv(|v| v / counts[j] as f64);
                centroids.column_mut(j).assign(&mean);
            }
        }
        let dist_to_own: Vec<f64> = (0..n)
            .map(|i| {
                let diff = &x.column(i) - &centroids.column(assignments[i]);
                diff.dot(&diff)
            })
            .collect();
        trace.push(dist_to_own.iter().sum());
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dist_to_own[b].total_cmp(&dist_to_own[a]).then(a.cmp(&b)));
            for (j, &i) in empty.iter().zip(order.iter()) {
                centroids.column_mut(*j).assign(&x.column(i));
            }
            continue;
        }
        if !changed {
            break;
        }
    }
    Ok(KMeansFit { centroids, assignments, objective_trace: trace })
}

pub fn learn_kmeans(features: ArrayView2<f64>, n_atoms: usize, seed: u64, max_iters: usize) -> Result<Dictionary> {
    let usable = usable_columns(features)?;
    check_budget(n_atoms, usable.len())?;
    let x = gather(features, &usable);
    let fit = kmeans_clustering(x.view(), n_atoms, seed, max_iters)?;
    Dictionary::from_atoms(fit.centroids, "", LearningMethod::KMeans, 0, seed)
}

#[derive(Debug, Clone)]
pub struct KMedoidFit {
    /// Column indices (into the clustered matrix) of the medoids.
    pub medoids: Vec<usize>,
    pub assignments: Vec<usize>,
    pub cost: f64,
    pub rounds: usize,
}

/// Euclidean distances from columns `rows` of `x` to every column of `x`.
fn distance_block(x: ArrayView2<f64>, norms: &[f64], rows: std::ops::Range<usize>) -> Array2<f64> {
    let block = x.slice(s![.., rows.clone()]);
    let mut d = block.t().dot(&x);
    for ((i, j), v) in d.indexed_iter_mut() {
        *v = (norms[rows.start + i] + norms[j] - 2.0 * *v).max(0.0).sqrt();
    }
    d
}

/// Park & Jun style k-medoids: central-object initialisation followed by
/// alternating assignment and within-cluster medoid update rounds.
pub fn kmedoid_clustering(x: ArrayView2<f64>, k: usize, max_rounds: usize) -> Result<KMedoidFit> {
    let n = x.ncols();
    check_budget(k, n)?;
    let norms: Vec<f64> = x.columns().into_iter().map(|c| c.dot(&c)).collect();

    // v_j = sum_i d_ij / sum_l d_il, computed in blocks without storing the full matrix.
    let mut row_sums = vec![0.0; n];
    for start in (0..n).step_by(DISTANCE_BLOCK) {
        let end = (start + DISTANCE_BLOCK).min(n);
        let d = distance_block(x, &norms, start..end);
        for (i, row) in d.rows().into_iter().enumerate() {
            row_sums[start + i] = row.sum();
        }
    }
    let mut v = vec![0.0; n];
    for start in (0..n).step_by(DISTANCE_BLOCK) {
        let end = (start + DISTANCE_BLOCK).min(n);
        let d = distance_block(x, &norms, start..end);
        for (i, row) in d.rows().into_iter().enumerate() {
            let s = row_sums[start + i];
            if s > 0.0 {
                for (j, dij) in row.iter().enumerate() {
                    v[j] += dij / s;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut medoids: Vec<usize> = order[..k].to_vec();

    let assign = |medoids: &[usize]| -> (Vec<usize>, f64) {
        let d = sq_distances(x, &norms, gather(x, medoids).view());
        let mut cost = 0.0;
        let a = d
            .rows()
            .into_iter()
            .map(|row| {
                let best = argmin(row.iter().copied());
                cost += row[best].sqrt();
                best
            })
            .collect();
        (a, cost)
    };

    let (mut assignments, mut cost) = assign(&medoids);
    let mut rounds = 0;
    while rounds < max_rounds {
        rounds += 1;
        let mut next = medoids.clone();
        for (c, slot) in next.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == c).collect();
            if members.len() < 2 {
                continue;
            }
            let sub = gather(x, &members);
            let sub_norms: Vec<f64> = members.iter().map(|&i| norms[i]).collect();
            let d = distance_block(sub.view(), &sub_norms, 0..members.len());
            let totals: Vec<f64> = d.sum_axis(Axis(1)).to_vec();
            let current = members.iter().position(|&i| i == *slot);
            let mut best = argmin(totals.iter().copied());
            if let Some(cur) = current {
                if totals[cur] <= totals[best] {
                    best = cur;
                }
            }
            *slot = members[best];
        }
        if next == medoids {
            break;
        }
        let (a, c) = assign(&next);
        if c > cost {
            break;
        }
        medoids = next;
        assignments = a;
        let stalled = c == cost;
        cost = c;
        if stalled {
            break;
        }
    }
    Ok(KMedoidFit { medoids, assignments, cost, rounds })
}

pub fn learn_kmedoid(features: ArrayView2<f64>, n_atoms: usize, seed: u64, max_rounds: usize) -> Result<Dictionary> {
    let usable = usable_columns(features)?;
    check_budget(n_atoms, usable.len())?;
    let x = gather(features, &usable);
    let fit = kmedoid_clustering(x.view(), n_atoms, max_rounds)?;
    Dictionary::from_atoms(gather(x.view(), &fit.medoids), "", LearningMethod::KMedoid, 0, seed)
}

/// Threshold-dependent cosine-similarity selection.
///
/// Features are scanned once in a seeded random order. A candidate becomes an
/// atom when its largest cosine similarity to the atoms accepted so far is at
/// most `t_w` and, against every atom of `prior_dicts`, at most `t_b`. Missing
/// atoms are then filled from the rejected candidates in increasing order of
/// their largest similarity to the accepted atoms.
pub fn learn_tdcs(
    features: ArrayView2<f64>,
    n_atoms: usize,
    t_w: f64,
    t_b: f64,
    prior_dicts: &[&Dictionary],
    seed: u64,
) -> Result<Dictionary> {
    if !(t_w > 0.0 && t_w <= 1.0 && t_b > 0.0 && t_b <= 1.0) {
        return Err(invalid(format!("thresholds must lie in (0, 1], got {t_w}/{t_b}")));
    }
    if n_atoms == 0 {
        return Err(invalid("atom count must be positive"));
    }
    let usable = usable_columns(features)?;
    if usable.is_empty() {
        return Err(Error::TooFewFeatures { needed: 1, available: 0 });
    }
    let p = features.nrows();
    let mut unit = gather(features, &usable);
    for mut col in unit.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
    }
    let n = unit.ncols();

    let between_max: Vec<f64> = if prior_dicts.is_empty() {
        vec![0.0; n]
    } else {
        let mut best = vec![f64::NEG_INFINITY; n];
        for d in prior_dicts {
            if d.dim() != p {
                return Err(Error::DimensionMismatch { expected: p, found: d.dim() });
            }
            if d.n_atoms() == 0 {
                continue;
            }
            let cs = unit.t().dot(d.atoms());
            for (b, row) in best.iter_mut().zip(cs.rows()) {
                *b = row.iter().copied().fold(*b, f64::max);
            }
        }
        best.into_iter().map(|b| if b.is_finite() { b } else { 0.0 }).collect()
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let max_within = |t: usize, accepted: &[usize]| -> f64 {
        let cand = unit.column(t);
        accepted.iter().map(|&a| cand.dot(&unit.column(a))).fold(0.0, f64::max)
    };

    let mut accepted: Vec<usize> = Vec::with_capacity(n_atoms);
    let mut rejected: Vec<usize> = Vec::new();
    for &t in &order {
        if accepted.len() == n_atoms {
            break;
        }
        if max_within(t, &accepted) <= t_w && between_max[t] <= t_b {
            accepted.push(t);
        } else {
            rejected.push(t);
        }
    }

    let mut chosen = accepted.clone();
    let mut appended = 0;
    if chosen.len() < n_atoms && !rejected.is_empty() {
        let mut scored: Vec<(f64, usize)> = rejected.iter().map(|&t| (max_within(t, &accepted), t)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, t) in scored.iter().take(n_atoms - chosen.len()) {
            chosen.push(t);
            appended += 1;
        }
    }
    let atoms = gather(unit.view(), &chosen);
    Ok(Dictionary::from_raw_parts(atoms, String::new(), LearningMethod::Tdcs { t_w, t_b }, appended, seed))
}

fn argmin(it: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in it.enumerate() {
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::cosine_similarity;
    use ndarray::array;
    use rand::Rng;

    fn cloud(center: &[f64], count: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..count).map(|_| center.iter().map(|c| c + rng.random_range(-spread..spread)).collect()).collect()
    }

    fn to_matrix(cols: &[Vec<f64>]) -> Array2<f64> {
        Array2::from_shape_fn((cols[0].len(), cols.len()), |(i, j)| cols[j][i])
    }

    fn normalized(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    fn assert_unit_nonneg(d: &Dictionary) {
        for col in d.atoms().columns() {
            assert!((col.dot(&col).sqrt() - 1.0).abs() <= 1e-9);
            assert!(col.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn random_selects_everything_when_budget_equals_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cols: Vec<Vec<f64>> = (0..500).map(|_| (0..6).map(|_| rng.random_range(0.01..1.0)).collect()).collect();
        let x = to_matrix(&cols);
        let d = learn_random(x.view(), 500, 9).unwrap();
        assert_unit_nonneg(&d);
        for (j, c) in cols.iter().enumerate() {
            let target = normalized(c);
            assert!((d.atom(j).to_vec().iter().zip(&target)).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn random_is_deterministic_and_normalises() {
        let x = array![[3.0], [4.0]];
        let d = learn_random(x.view(), 1, 0).unwrap();
        assert!((d.atom(0)[0] - 0.6).abs() < 1e-15 && (d.atom(0)[1] - 0.8).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = Array2::from_shape_fn((5, 40), |_| rng.random_range(0.0..1.0));
        assert_eq!(learn_random(y.view(), 10, 4).unwrap(), learn_random(y.view(), 10, 4).unwrap());
        assert!(matches!(learn_random(y.view(), 41, 4), Err(Error::TooFewFeatures { .. })));
    }

    #[test]
    fn kmeans_recovers_cloud_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = cloud(&[10.0, 1.0, 1.0], 50, 0.3, &mut rng);
        let b = cloud(&[1.0, 1.0, 10.0], 70, 0.3, &mut rng);
        let mean = |c: &[Vec<f64>]| normalized(&(0..3).map(|i| c.iter().map(|v| v[i]).sum::<f64>() / c.len() as f64).collect::<Vec<_>>());
        let (ma, mb) = (mean(&a), mean(&b));
        let x = to_matrix(&[a, b].concat());
        let d = learn_kmeans(x.view(), 2, 11, 100).unwrap();
        assert_unit_nonneg(&d);
        for target in [ma, mb] {
            let hit = (0..2).any(|k| d.atom(k).iter().zip(&target).all(|(p, q)| (p - q).abs() < 1e-6));
            assert!(hit);
        }
    }

    #[test]
    fn kmeans_one_atom_per_feature_and_duplicates() {
        let x = array![[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]];
        let fit = kmeans_clustering(x.view(), 3, 0, 100).unwrap();
        assert!(*fit.objective_trace.last().unwrap() < 1e-20);
        let dup = array![[2.0, 2.0, 2.0, 2.0], [1.0, 1.0, 1.0, 1.0]];
        let fit = kmeans_clustering(dup.view(), 3, 0, 100).unwrap();
        assert_eq!(*fit.objective_trace.last().unwrap(), 0.0);
        let d = learn_kmeans(dup.view(), 3, 0, 100).unwrap();
        for k in 0..3 {
            assert!((d.atom(k)[0] - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((8, 300), |_| rng.random_range(0.0..1.0));
        let fit = kmeans_clustering(x.view(), 12, 1, 100).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    fn brute_medoid_cost(x: &Array2<f64>, medoids: &[usize]) -> f64 {
        (0..x.ncols())
            .map(|i| {
                medoids
                    .iter()
                    .map(|&m| (&x.column(i) - &x.column(m)).mapv(|v| v * v).sum().sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }

    #[test]
    fn kmedoid_picks_the_central_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pts = cloud(&[5.0, 5.0], 30, 1.0, &mut rng);
        pts.push(vec![5.0, 5.0]);
        let x = to_matrix(&pts);
        let brute = (0..x.ncols())
            .min_by(|&a, &b| brute_medoid_cost(&x, &[a]).total_cmp(&brute_medoid_cost(&x, &[b])))
            .unwrap();
        let fit = kmedoid_clustering(x.view(), 1, 50).unwrap();
        assert_eq!(fit.medoids, vec![brute]);
    }

    #[test]
    fn kmedoid_one_medoid_per_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = cloud(&[1.0, 8.0], 15, 0.8, &mut rng);
        let b = cloud(&[8.0, 1.0], 15, 0.8, &mut rng);
        let x = to_matrix(&[a, b].concat());
        let fit = kmedoid_clustering(x.view(), 2, 50).unwrap();
        let mut m = fit.medoids.clone();
        m.sort();
        assert!(m[0] < 15 && m[1] >= 15);
        // matches the brute-force optimum over all pairs
        let mut best = f64::INFINITY;
        for i in 0..30 {
            for j in i + 1..30 {
                best = best.min(brute_medoid_cost(&x, &[i, j]));
            }
        }
        assert!((brute_medoid_cost(&x, &m) - best).abs() < 1e-9);
        let all = kmedoid_clustering(x.view(), 30, 50).unwrap();
        let mut all_m = all.medoids.clone();
        all_m.sort();
        assert_eq!(all_m, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn tdcs_orthogonal_features_all_accepted() {
        let x = Array2::from_shape_fn((6, 6), |(i, j)| if i == j { 1.0 + j as f64 } else { 0.0 });
        for t in [0.05, 0.5, 1.0] {
            let d = learn_tdcs(x.view(), 6, t, t, &[], 3).unwrap();
            assert_eq!(d.n_atoms(), 6);
            assert_eq!(d.appended_count(), 0);
        }
    }

    #[test]
    fn tdcs_identical_features_fall_back() {
        let x = Array2::from_shape_fn((4, 10), |(i, _)| 1.0 + i as f64);
        let d = learn_tdcs(x.view(), 3, 0.8, 0.8, &[], 0).unwrap();
        assert_eq!(d.n_atoms(), 3);
        assert_eq!(d.appended_count(), 2);
        assert!(matches!(
            learn_tdcs(Array2::<f64>::zeros((4, 0)).view(), 3, 0.8, 0.8, &[], 0),
            Err(Error::TooFewFeatures { .. })
        ));
    }

    #[test]
    fn tdcs_thresholds_hold_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((12, 400), |_| rng.random_range(0.0..1.0f64).powi(4));
        let first = learn_tdcs(x.view(), 30, 0.8, 0.8, &[], 1).unwrap();
        let y = Array2::from_shape_fn((12, 400), |_| rng.random_range(0.0..1.0f64).powi(4));
        let second = learn_tdcs(y.view(), 30, 0.8, 0.8, &[&first], 2).unwrap();
        for d in [&first, &second] {
            assert_unit_nonneg(d);
            let kept = d.n_atoms() - d.appended_count();
            for i in 0..kept {
                for j in i + 1..kept {
                    assert!(cosine_similarity(d.atom(i), d.atom(j)).unwrap() <= 0.8);
                }
            }
        }
        let kept = second.n_atoms() - second.appended_count();
        for i in 0..kept {
            for j in 0..first.n_atoms() {
                assert!(cosine_similarity(second.atom(i), first.atom(j)).unwrap() <= 0.8);
            }
        }
    }

    #[test]
    fn every_method_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((10, 120), |_| rng.random_range(0.0..1.0));
        for m in LearningMethod::standard_set() {
            let a = crate::dictionary::learn(m, x.view(), 16, 42, "s", &[]).unwrap();
            let b = crate::dictionary::learn(m, x.view(), 16, 42, "s", &[]).unwrap();
            assert_eq!(a, b);
            assert_unit_nonneg(&a);
        }
    }

    #[test]
    fn kmeans_update_tracks_new_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let old_feats = to_matrix(&cloud(&[5.0, 5.0, 0.5, 0.5], 60, 0.5, &mut rng));
        let old = learn_kmeans(old_feats.view(), 4, 3, 100).unwrap();
        let fresh = cloud(&[0.4, 0.4, 9.0, 6.0], 40, 0.3, &mut rng);
        let mean = normalized(&(0..4).map(|i| fresh.iter().map(|v| v[i]).sum::<f64>() / 40.0).collect::<Vec<_>>());
        let upd = crate::dictionary::update_dictionary(&old, to_matrix(&fresh).view(), 4, &[]).unwrap();
        assert_unit_nonneg(&upd);
        let m = ndarray::Array1::from(mean);
        assert!((0..4).any(|k| cosine_similarity(upd.atom(k), m.view()).unwrap() >= 0.99));
    }
}
