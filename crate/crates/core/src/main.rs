use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparsescene::config::{config_overrides, CONFIG_ENV};
use sparsescene::dictionary::{load_bank, save_bank};
use sparsescene::harness::manifest::SYNTHETIC_CORPUS;
use sparsescene::harness::{
    analyze_signal, learn_bank, run_manifest, separate_signal, simulate_manifest, synthetic_corpus, Corpus, Manifest,
    PipelineParams, Regime,
};
use sparsescene::{AudioSignal, Error, FrameLayout, LearningMethod, Result};

/// Sparse dictionary noise and speaker classification, segmentation and separation.
///
/// Every flag can also be set through a `SPARSESCENE_<FLAG>` environment
/// variable or a `key = value` line in the file given by `--config`.
#[derive(Parser, Debug)]
#[command(name = "sparsescene", version)]
struct Cli {
    /// Plain `key = value` file; keys are flag names.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a dictionary bank from a corpus directory (or `synthetic`).
    LearnDict(LearnArgs),
    /// Write the mixtures of a manifest with their ground truth.
    Simulate {
        #[arg(long, env = "SPARSESCENE_MANIFEST")]
        manifest: PathBuf,
        #[arg(long, env = "SPARSESCENE_OUT")]
        out: PathBuf,
    },
    /// Segment the noise of a recording and identify the speaker of each region.
    Classify {
        #[arg(long, env = "SPARSESCENE_BANK")]
        bank: PathBuf,
        #[arg(long, env = "SPARSESCENE_WAV")]
        wav: PathBuf,
    },
    /// Classify, then write `<prefix>speech.wav` and `<prefix>noise.wav`.
    Separate {
        #[arg(long, env = "SPARSESCENE_BANK")]
        bank: PathBuf,
        #[arg(long, env = "SPARSESCENE_WAV")]
        wav: PathBuf,
        #[arg(long, env = "SPARSESCENE_OUT_PREFIX")]
        out_prefix: String,
    },
    /// Run a manifest and write `results.csv`, `summary.json` and per-row files.
    Evaluate {
        #[arg(long, env = "SPARSESCENE_MANIFEST")]
        manifest: PathBuf,
        /// Bank file overriding the manifest.
        #[arg(long, env = "SPARSESCENE_BANK")]
        bank: Option<PathBuf>,
        /// Comma-separated regimes overriding the manifest.
        #[arg(long, env = "SPARSESCENE_REGIMES", value_delimiter = ',')]
        regimes: Vec<Regime>,
        /// Output directory overriding the manifest.
        #[arg(long, env = "SPARSESCENE_OUT")]
        out: Option<PathBuf>,
        #[arg(long, env = "SPARSESCENE_PARALLELISM")]
        parallelism: Option<usize>,
    },
    /// Write the generated desk-scale corpus in the on-disk corpus layout.
    MakeCorpus {
        #[arg(long, env = "SPARSESCENE_OUT")]
        out: PathBuf,
        #[arg(long, env = "SPARSESCENE_SEED", default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct LearnArgs {
    /// Corpus directory, or `synthetic` for the generated corpus.
    #[arg(long, env = "SPARSESCENE_CORPUS")]
    corpus: String,
    /// random, kmeans, kmedoid or tdcs.
    #[arg(long, env = "SPARSESCENE_METHOD", default_value = "kmeans")]
    method: String,
    /// Within-dictionary coherence threshold for tdcs.
    #[arg(long, env = "SPARSESCENE_TW", default_value_t = 0.8)]
    tw: f64,
    /// Between-dictionary coherence threshold for tdcs.
    #[arg(long, env = "SPARSESCENE_TB", default_value_t = 0.8)]
    tb: f64,
    #[arg(long, env = "SPARSESCENE_ATOMS", default_value_t = 32)]
    atoms: usize,
    #[arg(long, env = "SPARSESCENE_SEED", default_value_t = 7)]
    seed: u64,
    /// Seed of the generated corpus when `--corpus synthetic`.
    #[arg(long, env = "SPARSESCENE_CORPUS_SEED", default_value_t = 1)]
    corpus_seed: u64,
    #[arg(long, env = "SPARSESCENE_OUT")]
    out: PathBuf,
}

fn learning_method(args: &LearnArgs) -> Result<LearningMethod> {
    match args.method.as_str() {
        "tdcs" => Ok(LearningMethod::Tdcs { t_w: args.tw, t_b: args.tb }),
        other => other.parse().map_err(|e: Error| Error::Config(e.to_string())),
    }
}

fn existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingPath(path.to_path_buf()))
    }
}

fn read_input(path: &Path) -> Result<AudioSignal> {
    AudioSignal::read_wav(existing(path)?)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let params = PipelineParams::standard(sparsescene::audio::CANONICAL_RATE);
    match cli.command {
        Command::LearnDict(args) => {
            let method = learning_method(&args)?;
            let corpus =
                if args.corpus == SYNTHETIC_CORPUS { synthetic_corpus(args.corpus_seed) } else { Corpus::load(&args.corpus)? };
            let bank = learn_bank(&corpus, method, args.atoms, args.seed, FrameLayout::standard(sparsescene::audio::CANONICAL_RATE))?;
            save_bank(&bank, &args.out)?;
            eprintln!("wrote {} noise and {} speaker dictionaries to {}", bank.n_noise(), bank.n_speakers(), args.out.display());
        }
        Command::Simulate { manifest, out } => {
            let m = Manifest::load(existing(&manifest)?)?;
            let n = simulate_manifest(&m, &out)?;
            eprintln!("wrote {n} mixtures to {}", out.display());
        }
        Command::Classify { bank, wav } => {
            let bank = load_bank(existing(&bank)?)?;
            print_json(&analyze_signal(&read_input(&wav)?, &bank, &params)?)?;
        }
        Command::Separate { bank, wav, out_prefix } => {
            let bank = load_bank(existing(&bank)?)?;
            let (analysis, result) = separate_signal(&read_input(&wav)?, &bank, &params)?;
            result.speech_signal.write_wav(format!("{out_prefix}speech.wav"))?;
            result.noise_signal.write_wav(format!("{out_prefix}noise.wav"))?;
            print_json(&analysis)?;
        }
        Command::Evaluate { manifest, bank, regimes, out, parallelism } => {
            let mut m = Manifest::load(existing(&manifest)?)?;
            if bank.is_some() {
                m.bank = bank;
            }
            if !regimes.is_empty() {
                m.regimes = regimes;
            }
            if let Some(out) = out {
                m.output = out;
            }
            if let Some(p) = parallelism {
                m.parallelism = p;
            }
            let run = run_manifest(&m)?;
            let failed = run.reports.iter().filter(|r| !r.is_ok()).count();
            eprintln!(
                "{} rows ({} reused, {failed} failed); wrote {} and {}",
                run.reports.len(),
                run.reused,
                run.csv_path.display(),
                run.summary_path.display()
            );
        }
        Command::MakeCorpus { out, seed } => {
            synthetic_corpus(seed).write(&out)?;
            eprintln!("wrote corpus to {}", out.display());
        }
    }
    Ok(())
}

/// `--config FILE`, `--config=FILE` or the config variable, before clap sees the arguments.
fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    std::env::var_os(CONFIG_ENV).map(PathBuf::from)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if let Some(path) = config_path(&args) {
        match config_overrides(&path, |k| std::env::var(k).ok()) {
            // set before any thread starts; flags still take precedence through clap
            Ok(pairs) => pairs.into_iter().for_each(|(k, v)| std::env::set_var(k, v)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
