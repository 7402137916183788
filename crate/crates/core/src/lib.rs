//! Sparse non-negative dictionary toolkit for noisy two-party conversations.
//!
//! The pipeline learns one non-negative spectral dictionary per noise type and
//! per speaker, locates the change of background noise, identifies the speaker
//! in each noise segment, separates speech from noise with a KL-divergence
//! active-set Newton solver and scores the result.

pub mod audio;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod recovery;
pub mod separation;
pub mod speaker;

pub use audio::AudioSignal;
pub use error::{Error, Result};
pub use features::{extract_features, prune_low_energy, reconstruct, FeatureMatrix, FrameLayout};
pub use dictionary::{Dictionary, DictionaryBank, LearningMethod};
pub use recovery::{solve_asna, AsnaParams, BlockDictionary, RecoveryProblem, RecoverySolution};
