//! Corpus layout on disk and learning a dictionary bank from its training split.
//!
//! ```text
//! <root>/noise/<label>.wav            first 20 s test, remainder train
//! <root>/speaker/<label>/<utt>.wav
//! <root>/speaker/<label>/{train,update,test}.txt   one utterance file name per line
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::{AudioSignal, CANONICAL_RATE};
use crate::dictionary::{learn, Dictionary, DictionaryBank, LearningMethod};
use crate::error::{Error, Result};
use crate::features::{extract_with_layout, prune_low_energy, FeatureMatrix, FrameLayout, DEFAULT_PRUNE_THRESHOLD};

use super::synth::TEST_SECONDS;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseAudio {
    pub label: String,
    pub train: AudioSignal,
    pub test: AudioSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerAudio {
    pub label: String,
    pub train: Vec<AudioSignal>,
    pub update: Vec<AudioSignal>,
    pub test: Vec<AudioSignal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub noises: Vec<NoiseAudio>,
    pub speakers: Vec<SpeakerAudio>,
}

const SPLITS: [&str; 3] = ["train", "update", "test"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    out.sort();
    Ok(out)
}

fn read_split(dir: &Path, split: &str) -> Result<Vec<AudioSignal>> {
    let list = dir.join(format!("{split}.txt"));
    if !list.exists() {
        return Err(Error::MissingPath(list));
    }
    let mut out = Vec::new();
    for name in fs::read_to_string(&list)?.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        match AudioSignal::read_wav(dir.join(name)) {
            Ok(s) => out.push(s),
            Err(e) => log::warn!("skipping {}/{name}: {e}", dir.display()),
        }
    }
    Ok(out)
}

impl Corpus {
    /// Read a corpus laid out as described in the module docs. Unreadable audio is skipped with a warning.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let noise_dir = root.join("noise");
        let speaker_dir = root.join("speaker");
        for d in [&noise_dir, &speaker_dir] {
            if !d.is_dir() {
                return Err(Error::MissingPath(d.clone()));
            }
        }
        let test_len = (TEST_SECONDS * CANONICAL_RATE as f64) as usize;
        let mut noises = Vec::new();
        for path in sorted_entries(&noise_dir)? {
            if path.extension().and_then(|e| e.to_str()) != Some("wav") {
                continue;
            }
            let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            match AudioSignal::read_wav(&path) {
                Ok(full) if full.len() > test_len => {
                    noises.push(NoiseAudio { label, test: full.slice(0, test_len), train: full.slice(test_len, full.len()) })
                }
                Ok(_) => log::warn!("skipping {}: shorter than the {TEST_SECONDS} s test part", path.display()),
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        let mut speakers = Vec::new();
        for dir in sorted_entries(&speaker_dir)? {
            if !dir.is_dir() {
                continue;
            }
            let label = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let [train, update, test] = SPLITS.map(|s| read_split(&dir, s));
            let (train, update, test) = (train?, update?, test?);
            if train.is_empty() || test.is_empty() {
                log::warn!("skipping speaker {label}: empty train or test split");
                continue;
            }
            speakers.push(SpeakerAudio { label, train, update, test });
        }
        Ok(Self { noises, speakers })
    }

    /// Write the corpus in the layout [`Corpus::load`] reads (16-bit PCM).
    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        fs::create_dir_all(root.join("noise"))?;
        for n in &self.noises {
            let mut full = n.test.samples().to_vec();
            full.extend_from_slice(n.train.samples());
            AudioSignal::new(full, CANONICAL_RATE)?.write_wav(root.join("noise").join(format!("{}.wav", n.label)))?;
        }
        for s in &self.speakers {
            let dir = root.join("speaker").join(&s.label);
            fs::create_dir_all(&dir)?;
            let mut k = 0;
            for (split, utts) in SPLITS.iter().zip([&s.train, &s.update, &s.test]) {
                let mut names = String::new();
                for u in utts {
                    let name = format!("u{k:02}.wav");
                    u.write_wav(dir.join(&name))?;
                    names.push_str(&name);
                    names.push('\n');
                    k += 1;
                }
                fs::write(dir.join(format!("{split}.txt")), names)?;
            }
        }
        Ok(())
    }

    pub fn noise_labels(&self) -> Vec<String> {
        self.noises.iter().map(|n| n.label.clone()).collect()
    }

    pub fn speaker_labels(&self) -> Vec<String> {
        self.speakers.iter().map(|s| s.label.clone()).collect()
    }

    pub fn noise(&self, label: &str) -> Option<&NoiseAudio> {
        self.noises.iter().find(|n| n.label == label)
    }

    pub fn speaker(&self, label: &str) -> Option<&SpeakerAudio> {
        self.speakers.iter().find(|s| s.label == label)
    }
}

/// Pruned magnitude features of several signals, concatenated.
pub fn training_features(signals: &[AudioSignal], layout: FrameLayout) -> Result<FeatureMatrix> {
    let parts = signals
        .iter()
        .map(|s| extract_with_layout(s, layout, false).and_then(|fm| prune_low_energy(&fm, DEFAULT_PRUNE_THRESHOLD)))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::concat(&parts)
}

/// Learn one dictionary per noise and per speaker from the training split.
///
/// Noise dictionaries are learned first, then speakers; every TDCS dictionary
/// is checked against all dictionaries learned before it.
pub fn learn_bank(corpus: &Corpus, method: LearningMethod, atoms: usize, seed: u64, layout: FrameLayout) -> Result<DictionaryBank> {
    let mut learned: Vec<Dictionary> = Vec::new();
    let sources = corpus
        .noises
        .iter()
        .map(|n| (n.label.as_str(), std::slice::from_ref(&n.train)))
        .chain(corpus.speakers.iter().map(|s| (s.label.as_str(), s.train.as_slice())));
    for (k, (label, audio)) in sources.enumerate() {
        let feats = training_features(audio, layout)?;
        let priors: Vec<&Dictionary> = learned.iter().collect();
        let d = learn(method, feats.frames().view(), atoms, seed.wrapping_add(k as u64), label, &priors)?;
        learned.push(d);
    }
    let speakers = learned.split_off(corpus.noises.len());
    DictionaryBank::new(learned, speakers, atoms)
}
