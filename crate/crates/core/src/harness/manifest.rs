//! TOML experiment manifests: scenarios x regimes x SNRs, with resumable
//! per-row result files and a CSV plus JSON summary.
//!
//! ```toml
//! corpus = "synthetic"        # or a corpus directory
//! corpus_seed = 1
//! # bank = "banks/kmeans.bank"  # omit to learn from the corpus
//! method = "kmeans"
//! atoms = 32
//! seed = 7
//! scenario_seed = 3
//! scenario_count = 8
//! regimes = ["complete", "ground-truth"]
//! snrs = [0.0, 10.0]
//! stage = "full"
//! snr_reference = "speech-active"
//! output = "results"
//! parallelism = 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::{learn_bank, Corpus};
use super::pipeline::{run_scenario, EvaluationReport, PipelineParams, Regime, Stage};
use super::report::{summarize, to_csv, GroupSummary};
use super::scenario::{build_scenarios, hex, realize, MixScenario, SnrReference};
use super::synth::synthetic_corpus;
use crate::audio::CANONICAL_RATE;
use crate::dictionary::{load_bank, DictionaryBank, LearningMethod};
use crate::error::{Error, Result};

pub const SYNTHETIC_CORPUS: &str = "synthetic";
pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const ROWS_DIR: &str = "rows";
/// Version of the row and summary layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn default_corpus() -> String {
    SYNTHETIC_CORPUS.into()
}
fn default_corpus_seed() -> u64 {
    1
}
fn default_method() -> String {
    "kmeans".into()
}
fn default_atoms() -> usize {
    32
}
fn default_seed() -> u64 {
    7
}
fn default_scenario_seed() -> u64 {
    3
}
fn default_regimes() -> Vec<Regime> {
    vec![Regime::Complete]
}
fn default_snrs() -> Vec<f64> {
    vec![-10.0, 0.0, 10.0, 20.0]
}
fn default_parallelism() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// `synthetic` or a corpus directory.
    #[serde(default = "default_corpus")]
    pub corpus: String,
    /// Seed of the synthetic corpus.
    #[serde(default = "default_corpus_seed")]
    pub corpus_seed: u64,
    /// Bank file to load; the bank is learned from the corpus when absent.
    #[serde(default)]
    pub bank: Option<PathBuf>,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    /// Dictionary-learning seed.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_scenario_seed")]
    pub scenario_seed: u64,
    /// Keep only the first scenarios; all when absent.
    #[serde(default)]
    pub scenario_count: Option<usize>,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default = "default_snrs")]
    pub snrs: Vec<f64>,
    #[serde(default)]
    pub stage: Stage,
    #[serde(default)]
    pub snr_reference: SnrReference,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads for scenario runs.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl Default for Manifest {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Parse a manifest file; relative paths in it are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut m = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if m.corpus != SYNTHETIC_CORPUS && Path::new(&m.corpus).is_relative() {
            m.corpus = base.join(&m.corpus).to_string_lossy().into_owned();
        }
        if let Some(b) = m.bank.as_mut().filter(|b| b.is_relative()) {
            *b = base.join(&*b);
        }
        if m.output.is_relative() {
            m.output = base.join(&m.output);
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.learning_method()?;
        if self.atoms == 0 {
            return Err(Error::Config("atoms must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be positive".into()));
        }
        if self.regimes.is_empty() || self.snrs.is_empty() {
            return Err(Error::Config("regimes and snrs must be non-empty".into()));
        }
        if let Some(s) = self.snrs.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("non-finite snr {s}")));
        }
        Ok(())
    }

    /// Referenced corpus directory and bank file must exist.
    pub fn check_paths(&self) -> Result<()> {
        if self.corpus != SYNTHETIC_CORPUS && !Path::new(&self.corpus).is_dir() {
            return Err(Error::MissingPath(PathBuf::from(&self.corpus)));
        }
        match &self.bank {
            Some(b) if !b.is_file() => Err(Error::MissingPath(b.clone())),
            _ => Ok(()),
        }
    }

    pub fn learning_method(&self) -> Result<LearningMethod> {
        self.method.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        if self.corpus == SYNTHETIC_CORPUS {
            Ok(synthetic_corpus(self.corpus_seed))
        } else {
            Corpus::load(&self.corpus)
        }
    }

    /// The bank file when given, otherwise a bank learned from `corpus`.
    pub fn load_bank(&self, corpus: &Corpus) -> Result<DictionaryBank> {
        match &self.bank {
            Some(p) => load_bank(p),
            None => learn_bank(corpus, self.learning_method()?, self.atoms, self.seed, PipelineParams::standard(CANONICAL_RATE).layout),
        }
    }

    /// Identity of everything besides the scenario that shapes a row.
    fn context_hash(&self) -> Result<String> {
        let bank = match &self.bank {
            Some(p) => hex(&Sha256::digest(fs::read(p)?)),
            None => format!("learn/{}/{}/{}", self.method, self.atoms, self.seed),
        };
        let corpus = if self.corpus == SYNTHETIC_CORPUS { format!("synthetic/{}", self.corpus_seed) } else { self.corpus.clone() };
        let ctx = serde_json::json!({
            "bank": bank,
            "corpus": corpus,
            "stage": self.stage,
            "snr_reference": self.snr_reference,
            "schema": REPORT_SCHEMA_VERSION,
        });
        Ok(hex(&Sha256::digest(ctx.to_string())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub groups: Vec<GroupSummary>,
}

/// What a manifest run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<EvaluationReport>,
    /// Rows taken from earlier runs instead of being recomputed.
    pub reused: usize,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

fn row_key(context: &str, scenario_hash: &str, regime: Regime) -> String {
    hex(&Sha256::digest(format!("{context}/{scenario_hash}/{regime}")))
}

fn read_row(path: &Path) -> Option<EvaluationReport> {
    serde_json::from_slice(&fs::read(path).ok()?).ok()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One (scenario, SNR) unit of work.
struct Task {
    scenario: MixScenario,
    hash: String,
}

/// Run all regimes of one task, reusing finished rows. Returns `(reports, reused)`.
fn run_task(
    task: &Task,
    manifest: &Manifest,
    corpus: &Corpus,
    bank: &DictionaryBank,
    params: &PipelineParams,
    context: &str,
    rows_dir: &Path,
) -> (Vec<(PathBuf, EvaluationReport, bool)>, usize) {
    let mut out = Vec::new();
    let mut reused = 0;
    let mut mixed = None;
    for &regime in &manifest.regimes {
        let path = rows_dir.join(format!("{}.json", row_key(context, &task.hash, regime)));
        if let Some(r) = read_row(&path) {
            reused += 1;
            out.push((path, r, false));
            continue;
        }
        if mixed.is_none() {
            match realize(&task.scenario, corpus, manifest.snr_reference) {
                Ok(m) => mixed = Some(m),
                Err(e) => {
                    log::warn!("skipping scenario {}: {e}", task.scenario.id);
                    break;
                }
            }
        }
        let r = run_scenario(&task.scenario, mixed.as_ref().expect("realized"), corpus, bank, regime, params);
        log::info!("{} {regime} snr {}: {}", task.scenario.id, task.scenario.snr_db, r.status);
        out.push((path, r, true));
    }
    (out, reused)
}

/// Run every scenario x SNR x regime of `manifest`. Rows already present under
/// `<output>/rows` are reused. Tasks run on up to `parallelism` threads; only
/// the calling thread writes files. Fails when no row could be produced.
pub fn run_manifest(manifest: &Manifest) -> Result<RunOutput> {
    manifest.validate()?;
    manifest.check_paths()?;
    let corpus = manifest.load_corpus()?;
    let bank = manifest.load_bank(&corpus)?;
    let context = manifest.context_hash()?;
    let mut scenarios = build_scenarios(&corpus.noise_labels(), &corpus.speaker_labels(), manifest.scenario_seed)?;
    if let Some(n) = manifest.scenario_count {
        scenarios.truncate(n);
    }
    let rows_dir = manifest.output.join(ROWS_DIR);
    fs::create_dir_all(&rows_dir)?;
    let mut params = PipelineParams::standard(CANONICAL_RATE);
    params.stage = manifest.stage;

    let tasks: Vec<Task> = scenarios
        .iter()
        .flat_map(|base| manifest.snrs.iter().map(move |&snr| base.at_snr(snr)))
        .map(|scenario| Task { hash: scenario.content_hash(), scenario })
        .collect();
    let next = AtomicUsize::new(0);
    let mut done: Vec<Option<Vec<EvaluationReport>>> = vec![None; tasks.len()];
    let mut reused = 0;
    let workers = manifest.parallelism.clamp(1, tasks.len().max(1));
    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (tasks, next, corpus, bank, params, context, rows_dir) = (&tasks, &next, &corpus, &bank, &params, &context, &rows_dir);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                if tx.send((i, run_task(task, manifest, corpus, bank, params, context, rows_dir))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // single writer: rows are persisted here, in arrival order
        for (i, (rows, r)) in rx {
            reused += r;
            let mut reports = Vec::with_capacity(rows.len());
            for (path, report, fresh) in rows {
                if fresh {
                    write_atomic(&path, &serde_json::to_vec_pretty(&report)?)?;
                }
                reports.push(report);
            }
            done[i] = Some(reports);
        }
        Ok(())
    })?;
    let reports: Vec<EvaluationReport> = done.into_iter().flatten().flatten().collect();
    if reports.is_empty() {
        return Err(Error::InsufficientSources("the manifest produced no results".into()));
    }
    let csv_path = manifest.output.join(RESULTS_CSV);
    let summary_path = manifest.output.join(SUMMARY_JSON);
    write_atomic(&csv_path, to_csv(&reports).as_bytes())?;
    let summary = Summary { schema_version: REPORT_SCHEMA_VERSION, groups: summarize(&reports) };
    write_atomic(&summary_path, &serde_json::to_vec_pretty(&summary)?)?;
    Ok(RunOutput { reports, reused, csv_path, summary_path })
}

/// Ground truth written next to each simulated mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub scenario: MixScenario,
    pub scenario_hash: String,
    /// Utterance sample ranges as `[start, end)`.
    pub utterances: Vec<[usize; 2]>,
    pub transition_sample: usize,
    pub noise_gains: [f64; 2],
    pub measured_snr_db: [f64; 2],
}

/// Realise every scenario x SNR of `manifest` under `out/<id>_snr<snr>/` as
/// `mixture.wav`, `speech.wav`, `noise.wav` and `scenario.json`. Returns the number written.
pub fn simulate_manifest(manifest: &Manifest, out: &Path) -> Result<usize> {
    manifest.validate()?;
    manifest.check_paths()?;
    let corpus = manifest.load_corpus()?;
    let mut scenarios = build_scenarios(&corpus.noise_labels(), &corpus.speaker_labels(), manifest.scenario_seed)?;
    if let Some(n) = manifest.scenario_count {
        scenarios.truncate(n);
    }
    let mut written = 0;
    for base in &scenarios {
        for &snr in &manifest.snrs {
            let scenario = base.at_snr(snr);
            let mixed = match realize(&scenario, &corpus, manifest.snr_reference) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("skipping scenario {}: {e}", scenario.id);
                    continue;
                }
            };
            let dir = out.join(format!("{}_snr{snr}", scenario.id));
            fs::create_dir_all(&dir)?;
            mixed.mixture.write_wav(dir.join("mixture.wav"))?;
            mixed.speech.write_wav(dir.join("speech.wav"))?;
            mixed.noise.write_wav(dir.join("noise.wav"))?;
            let record = SimulationRecord {
                scenario_hash: scenario.content_hash(),
                utterances: mixed.utterances.iter().map(|r| [r.start, r.end]).collect(),
                transition_sample: mixed.transition_sample,
                noise_gains: mixed.noise_gains,
                measured_snr_db: [0, 1].map(|k| mixed.measured_snr_db(k)),
                scenario,
            };
            write_atomic(&dir.join("scenario.json"), &serde_json::to_vec_pretty(&record)?)?;
            written += 1;
        }
    }
    if written == 0 {
        return Err(Error::InsufficientSources("the manifest produced no mixtures".into()));
    }
    Ok(written)
}
