use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use super::{Dictionary, LearningMethod};
use crate::error::{invalid, Error, Result};

pub const BANK_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8] = b"SPARSESCENE-BANK\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Noise,
    Speaker,
}

/// Read counters per dictionary, used to prove which dictionaries a run consulted.
#[derive(Debug, Default)]
pub struct BankAccessLog {
    noise: Vec<AtomicUsize>,
    speaker: Vec<AtomicUsize>,
}

impl BankAccessLog {
    fn sized(noise: usize, speaker: usize) -> Self {
        Self {
            noise: (0..noise).map(|_| AtomicUsize::new(0)).collect(),
            speaker: (0..speaker).map(|_| AtomicUsize::new(0)).collect(),
        }
    }

    pub fn noise_reads(&self, i: usize) -> usize {
        self.noise[i].load(Ordering::Relaxed)
    }

    pub fn speaker_reads(&self, i: usize) -> usize {
        self.speaker[i].load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        for c in self.noise.iter().chain(&self.speaker) {
            c.store(0, Ordering::Relaxed);
        }
    }
}

/// Noise and speaker dictionaries sharing one feature dimension.
///
/// Dictionaries are learned noise-first (in list order) and then speakers; the
/// TDCS between-class check of each dictionary runs against everything before it.
#[derive(Debug)]
pub struct DictionaryBank {
    noise: Vec<Dictionary>,
    speakers: Vec<Dictionary>,
    atom_count: usize,
    dim: usize,
    access: BankAccessLog,
}

impl Clone for DictionaryBank {
    fn clone(&self) -> Self {
        Self {
            noise: self.noise.clone(),
            speakers: self.speakers.clone(),
            atom_count: self.atom_count,
            dim: self.dim,
            access: BankAccessLog::sized(self.noise.len(), self.speakers.len()),
        }
    }
}

impl PartialEq for DictionaryBank {
    fn eq(&self, other: &Self) -> bool {
        self.noise == other.noise
            && self.speakers == other.speakers
            && self.atom_count == other.atom_count
            && self.dim == other.dim
    }
}

impl DictionaryBank {
    pub fn new(noise: Vec<Dictionary>, speakers: Vec<Dictionary>, atom_count: usize) -> Result<Self> {
        let dim = noise.iter().chain(&speakers).map(|d| d.dim()).next().unwrap_or(0);
        for d in noise.iter().chain(&speakers) {
            if d.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: d.dim() });
            }
        }
        for list in [&noise, &speakers] {
            let mut seen = HashSet::new();
            for d in list {
                if !seen.insert(d.source_label()) {
                    return Err(invalid(format!("duplicate source label {:?}", d.source_label())));
                }
            }
        }
        let access = BankAccessLog::sized(noise.len(), speakers.len());
        Ok(Self { noise, speakers, atom_count, dim, access })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    pub fn n_noise(&self) -> usize {
        self.noise.len()
    }

    pub fn n_speakers(&self) -> usize {
        self.speakers.len()
    }

    /// Noise dictionary `i`; counted in the access log.
    pub fn noise(&self, i: usize) -> &Dictionary {
        self.access.noise[i].fetch_add(1, Ordering::Relaxed);
        &self.noise[i]
    }

    /// Speaker dictionary `i`; counted in the access log.
    pub fn speaker(&self, i: usize) -> &Dictionary {
        self.access.speaker[i].fetch_add(1, Ordering::Relaxed);
        &self.speakers[i]
    }

    pub fn noise_labels(&self) -> Vec<&str> {
        self.noise.iter().map(|d| d.source_label()).collect()
    }

    pub fn speaker_labels(&self) -> Vec<&str> {
        self.speakers.iter().map(|d| d.source_label()).collect()
    }

    pub fn noise_index(&self, label: &str) -> Option<usize> {
        self.noise.iter().position(|d| d.source_label() == label)
    }

    pub fn speaker_index(&self, label: &str) -> Option<usize> {
        self.speakers.iter().position(|d| d.source_label() == label)
    }

    pub fn access_log(&self) -> &BankAccessLog {
        &self.access
    }

    /// Learning method of the first dictionary, if any.
    pub fn method(&self) -> Option<LearningMethod> {
        self.noise.iter().chain(&self.speakers).map(|d| d.method()).next()
    }

    fn ordered(&self) -> impl Iterator<Item = (SourceKind, &Dictionary)> {
        self.noise
            .iter()
            .map(|d| (SourceKind::Noise, d))
            .chain(self.speakers.iter().map(|d| (SourceKind::Speaker, d)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    p: usize,
    atom_count: usize,
    dictionaries: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    kind: SourceKind,
    source_label: String,
    #[serde(flatten)]
    method: LearningMethod,
    appended_count: usize,
    seed: u64,
    rows: usize,
    n_atoms: usize,
}

/// Writes the magic line, a one-line JSON header, then each atom matrix as
/// little-endian f64 in column-major order, in header order.
pub fn save_bank(bank: &DictionaryBank, path: impl AsRef<Path>) -> Result<()> {
    let header = Header {
        format_version: BANK_FORMAT_VERSION,
        p: bank.dim,
        atom_count: bank.atom_count,
        dictionaries: bank
            .ordered()
            .map(|(kind, d)| Entry {
                kind,
                source_label: d.source_label().to_owned(),
                method: d.method(),
                appended_count: d.appended_count(),
                seed: d.seed(),
                rows: d.dim(),
                n_atoms: d.n_atoms(),
            })
            .collect(),
    };
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    serde_json::to_writer(&mut buf, &header)?;
    buf.push(b'\n');
    for (_, d) in bank.ordered() {
        for col in d.atoms().columns() {
            for v in col {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<DictionaryBank> {
    let bytes = fs::read(path)?;
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| Error::CorruptBank("missing magic line".into()))?;
    let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| Error::CorruptBank("unterminated header".into()))?;
    let header: serde_json::Value =
        serde_json::from_slice(&rest[..nl]).map_err(|e| Error::CorruptBank(format!("header: {e}")))?;
    let version = header.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != BANK_FORMAT_VERSION {
        return Err(Error::BankVersion { found: version, expected: BANK_FORMAT_VERSION });
    }
    let header: Header = serde_json::from_value(header).map_err(|e| Error::CorruptBank(format!("header: {e}")))?;
    let mut body = &rest[nl + 1..];
    let mut noise = Vec::new();
    let mut speakers = Vec::new();
    for e in header.dictionaries {
        if e.rows != header.p {
            return Err(Error::DimensionMismatch { expected: header.p, found: e.rows });
        }
        let count = e.rows * e.n_atoms;
        let need = count * 8;
        if body.len() < need {
            return Err(Error::CorruptBank(format!("truncated atoms for {:?}", e.source_label)));
        }
        let data: Vec<f64> =
            body[..need].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        body = &body[need..];
        let atoms = Array2::from_shape_vec((e.rows, e.n_atoms).f(), data).expect("size checked");
        let d = Dictionary::from_raw_parts(atoms, e.source_label, e.method, e.appended_count, e.seed);
        match e.kind {
            SourceKind::Noise => noise.push(d),
            SourceKind::Speaker => speakers.push(d),
        }
    }
    if !body.is_empty() {
        return Err(Error::CorruptBank(format!("{} trailing bytes", body.len())));
    }
    let bank = DictionaryBank::new(noise, speakers, header.atom_count)?;
    if bank.dim != header.p && bank.n_noise() + bank.n_speakers() > 0 {
        return Err(Error::DimensionMismatch { expected: header.p, found: bank.dim });
    }
    Ok(DictionaryBank { dim: header.p, ..bank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::learn_random;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_bank(n_noise: usize, n_speakers: usize, seed: u64) -> DictionaryBank {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mk = |label: String, method: LearningMethod| {
            let x = Array2::from_shape_fn((7, 20), |_| rng.random_range(0.0..1.0));
            let d = learn_random(x.view(), 5, seed).unwrap().with_label(label);
            Dictionary::from_raw_parts(d.atoms().clone(), d.source_label().into(), method, 1, seed)
        };
        let noise = (0..n_noise).map(|i| mk(format!("noise/n{i}"), LearningMethod::Tdcs { t_w: 0.8, t_b: 0.9 })).collect();
        let speakers = (0..n_speakers).map(|i| mk(format!("speaker/s{i}"), LearningMethod::KMeans)).collect();
        DictionaryBank::new(noise, speakers, 5).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn save_load_is_bit_exact(n_noise in 0usize..4, n_speakers in 0usize..4, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("bank.bin");
            let bank = sample_bank(n_noise, n_speakers, seed);
            save_bank(&bank, &path).unwrap();
            let back = load_bank(&path).unwrap();
            prop_assert_eq!(&back, &bank);
            for i in 0..bank.n_noise() {
                let a = bank.noise(i).atoms().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                let b = back.noise(i).atoms().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(a, b);
            }
        }
    }

    /// Same-length substitution inside the header line only.
    fn patch_header(bytes: &[u8], from: &str, to: &str) -> Vec<u8> {
        assert_eq!(from.len(), to.len());
        let hdr_start = MAGIC.len();
        let hdr_end = hdr_start + bytes[hdr_start..].iter().position(|&b| b == b'\n').unwrap();
        let header = std::str::from_utf8(&bytes[hdr_start..hdr_end]).unwrap().replacen(from, to, 1);
        let mut out = bytes.to_vec();
        out[hdr_start..hdr_end].copy_from_slice(header.as_bytes());
        out
    }

    #[test]
    fn truncated_and_versioned_files_fail_distinctly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        save_bank(&sample_bank(2, 1, 3), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_bank(&path), Err(Error::CorruptBank(_))));

        fs::write(&path, patch_header(&bytes, "\"format_version\":1", "\"format_version\":7")).unwrap();
        assert!(matches!(load_bank(&path), Err(Error::BankVersion { found: 7, .. })));

        fs::write(&path, b"not a bank").unwrap();
        assert!(matches!(load_bank(&path), Err(Error::CorruptBank(_))));
    }

    #[test]
    fn header_dimension_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        save_bank(&sample_bank(1, 0, 4), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let out = patch_header(&bytes, "\"p\":7", "\"p\":8");
        fs::write(&path, &out).unwrap();
        assert!(matches!(load_bank(&path), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn access_log_counts_reads() {
        let bank = sample_bank(2, 2, 5);
        bank.noise(1);
        bank.speaker(0);
        bank.speaker(0);
        assert_eq!(bank.access_log().noise_reads(0), 0);
        assert_eq!(bank.access_log().noise_reads(1), 1);
        assert_eq!(bank.access_log().speaker_reads(0), 2);
        bank.access_log().reset();
        assert_eq!(bank.access_log().speaker_reads(0), 0);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let bank = sample_bank(1, 0, 6);
        let d = bank.noise(0).clone();
        assert!(DictionaryBank::new(vec![d.clone(), d], vec![], 5).is_err());
    }
}
