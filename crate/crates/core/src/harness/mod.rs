//! Corpus ingestion, scenario simulation, regime runs and report emission.

pub mod analysis;
pub mod corpus;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod synth;

pub use analysis::{analyze_signal, separate_signal, SegmentAnalysis, SignalAnalysis};
pub use corpus::{learn_bank, training_features, Corpus, NoiseAudio, SpeakerAudio};
pub use manifest::{run_manifest, simulate_manifest, Manifest, RunOutput, SimulationRecord, Summary};
pub use pipeline::{run_scenario, EvaluationReport, PipelineParams, Regime, Stage};
pub use report::{csv_row, summarize, to_csv, GroupSummary, CSV_COLUMNS};
pub use scenario::{build_scenarios, mix, realize, MixScenario, MixedSignal, SnrReference};
pub use synth::{synthetic_corpus, SYNTH_NOISES, SYNTH_SPEAKERS};
