//! Per-source non-negative dictionaries: learning, adaptive update and persistence.

mod bank;
mod learn;

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::col_major;

pub use bank::{load_bank, save_bank, BankAccessLog, DictionaryBank, SourceKind, BANK_FORMAT_VERSION};
pub use learn::{
    kmeans_clustering, kmedoid_clustering, learn_kmeans, learn_kmedoid, learn_random, learn_tdcs, KMeansFit,
    KMedoidFit, DEFAULT_KMEANS_ITERS, DEFAULT_KMEDOID_ROUNDS,
};

/// How the atoms of a dictionary were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum LearningMethod {
    Random,
    KMeans,
    KMedoid,
    Tdcs { t_w: f64, t_b: f64 },
}

impl LearningMethod {
    /// Random, k-means, k-medoid, TDCS-0.9 and TDCS-0.8.
    pub fn standard_set() -> [LearningMethod; 5] {
        [
            LearningMethod::Random,
            LearningMethod::KMeans,
            LearningMethod::KMedoid,
            LearningMethod::Tdcs { t_w: 0.9, t_b: 0.9 },
            LearningMethod::Tdcs { t_w: 0.8, t_b: 0.8 },
        ]
    }

    /// Short name used in reports, e.g. `tdcs-0.8`.
    pub fn tag(&self) -> String {
        match self {
            LearningMethod::Random => "random".into(),
            LearningMethod::KMeans => "kmeans".into(),
            LearningMethod::KMedoid => "kmedoid".into(),
            LearningMethod::Tdcs { t_w, t_b } if t_w == t_b => format!("tdcs-{t_w}"),
            LearningMethod::Tdcs { t_w, t_b } => format!("tdcs-{t_w}-{t_b}"),
        }
    }
}

impl fmt::Display for LearningMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// Parses `random`, `kmeans`, `kmedoid`, `tdcs` (0.8 thresholds) or `tdcs-<T>`.
impl FromStr for LearningMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(LearningMethod::Random),
            "kmeans" => Ok(LearningMethod::KMeans),
            "kmedoid" => Ok(LearningMethod::KMedoid),
            "tdcs" => Ok(LearningMethod::Tdcs { t_w: 0.8, t_b: 0.8 }),
            other => {
                let t = other
                    .strip_prefix("tdcs-")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| invalid(format!("unknown learning method {other:?}")))?;
                Ok(LearningMethod::Tdcs { t_w: t, t_b: t })
            }
        }
    }
}

/// Unit-norm non-negative atoms (columns) for one source.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
    source_label: String,
    method: LearningMethod,
    appended_count: usize,
    seed: u64,
}

impl Dictionary {
    /// Wraps atoms, normalising every column to unit L2 norm.
    pub fn from_atoms(
        atoms: Array2<f64>,
        source_label: impl Into<String>,
        method: LearningMethod,
        appended_count: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut atoms = col_major(atoms);
        for mut col in atoms.columns_mut() {
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid("atoms must be finite and non-negative"));
            }
            let norm = col.dot(&col).sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateAtom);
            }
            col.mapv_inplace(|v| v / norm);
        }
        Ok(Self { atoms, source_label: source_label.into(), method, appended_count, seed })
    }

    /// Wraps atoms that are already unit norm, bit-for-bit.
    pub(crate) fn from_raw_parts(
        atoms: Array2<f64>,
        source_label: String,
        method: LearningMethod,
        appended_count: usize,
        seed: u64,
    ) -> Self {
        Self { atoms: col_major(atoms), source_label, method, appended_count, seed }
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn atom(&self, k: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(k)
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn method(&self) -> LearningMethod {
        self.method
    }

    pub fn appended_count(&self) -> usize {
        self.appended_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.source_label = label.into();
        self
    }
}

/// `a.b / (|a| |b|)`.
pub fn cosine_similarity(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateAtom);
    }
    Ok(a.dot(&b) / (na * nb))
}

/// Learn a dictionary with any of the supported methods.
pub fn learn(
    method: LearningMethod,
    features: ArrayView2<f64>,
    n_atoms: usize,
    seed: u64,
    label: &str,
    prior_dicts: &[&Dictionary],
) -> Result<Dictionary> {
    let dict = match method {
        LearningMethod::Random => learn_random(features, n_atoms, seed)?,
        LearningMethod::KMeans => learn_kmeans(features, n_atoms, seed, DEFAULT_KMEANS_ITERS)?,
        LearningMethod::KMedoid => learn_kmedoid(features, n_atoms, seed, DEFAULT_KMEDOID_ROUNDS)?,
        LearningMethod::Tdcs { t_w, t_b } => learn_tdcs(features, n_atoms, t_w, t_b, prior_dicts, seed)?,
    };
    Ok(dict.with_label(label))
}

/// Re-learn `old` from `[old.atoms | new_features]` with its own method, seed and atom budget.
///
/// `prior_dicts` only matters for TDCS: the other dictionaries of the bank at update time.
pub fn update_dictionary(
    old: &Dictionary,
    new_features: ArrayView2<f64>,
    budget: usize,
    prior_dicts: &[&Dictionary],
) -> Result<Dictionary> {
    if new_features.ncols() > 0 && new_features.nrows() != old.dim() {
        return Err(Error::DimensionMismatch { expected: old.dim(), found: new_features.nrows() });
    }
    let pool = if new_features.ncols() == 0 {
        old.atoms.clone()
    } else {
        concatenate(Axis(1), &[old.atoms.view(), new_features]).expect("row counts checked")
    };
    let budget = budget.min(pool.ncols());
    learn(old.method, pool.view(), budget, old.seed, &old.source_label, prior_dicts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cosine_examples() {
        let v = array![0.3, 2.0, 1.0];
        assert!((cosine_similarity(v.view(), v.view()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(array![1.0, 0.0].view(), array![0.0, 1.0].view()).unwrap(), 0.0);
        let s = 0.5f64.sqrt();
        let c = cosine_similarity(array![s, s].view(), array![1.0, 0.0].view()).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
        assert!(matches!(
            cosine_similarity(array![0.0, 0.0].view(), array![1.0, 0.0].view()),
            Err(Error::DegenerateAtom)
        ));
    }

    #[test]
    fn method_names_parse() {
        for m in LearningMethod::standard_set() {
            assert_eq!(m.tag().parse::<LearningMethod>().unwrap(), m);
        }
        assert_eq!("tdcs".parse::<LearningMethod>().unwrap(), LearningMethod::Tdcs { t_w: 0.8, t_b: 0.8 });
        assert!("ksvd".parse::<LearningMethod>().is_err());
    }

    #[test]
    fn update_with_nothing_new_keeps_random_atoms() {
        let feats = array![[1.0, 0.0, 2.0], [0.0, 3.0, 2.0]];
        let old = learn_random(feats.view(), 3, 5).unwrap();
        let empty = Array2::<f64>::zeros((2, 0));
        let upd = update_dictionary(&old, empty.view(), 3, &[]).unwrap();
        assert_eq!(upd.n_atoms(), 3);
        for k in 0..3 {
            let a = old.atom(k);
            assert!((0..3).any(|j| (&upd.atom(j) - &a).iter().all(|d| d.abs() < 1e-12)));
        }
    }

    #[test]
    fn update_random_exhausts_pool() {
        let old = Dictionary::from_atoms(
            array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]],
            "s",
            LearningMethod::Random,
            0,
            1,
        )
        .unwrap();
        let novel = array![[0.0, 0.0], [0.0, 0.0], [2.0, 0.0], [0.0, 5.0]];
        let upd = update_dictionary(&old, novel.view(), 4, &[]).unwrap();
        assert_eq!(upd.n_atoms(), 4);
        for axis in 0..4 {
            assert!((0..4).any(|k| (upd.atom(k)[axis] - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn update_rejects_dimension_mismatch() {
        let old = Dictionary::from_atoms(array![[1.0], [1.0]], "s", LearningMethod::Random, 0, 1).unwrap();
        let bad = Array2::<f64>::ones((3, 2));
        assert!(matches!(update_dictionary(&old, bad.view(), 1, &[]), Err(Error::DimensionMismatch { .. })));
    }
}
