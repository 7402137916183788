use std::fs;
use std::sync::OnceLock;

use sparsescene::dictionary::DictionaryBank;
use sparsescene::harness::{
    build_scenarios, learn_bank, realize, run_manifest, run_scenario, summarize, synthetic_corpus, Corpus, Manifest,
    MixScenario, PipelineParams, Regime, SnrReference, Stage,
};
use sparsescene::{FrameLayout, LearningMethod};

struct Fixture {
    corpus: Corpus,
    bank: DictionaryBank,
    scenarios: Vec<MixScenario>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = synthetic_corpus(1);
        let bank = learn_bank(&corpus, LearningMethod::KMeans, 16, 7, FrameLayout::standard(16_000)).unwrap();
        let scenarios = build_scenarios(&corpus.noise_labels(), &corpus.speaker_labels(), 3).unwrap();
        Fixture { corpus, bank, scenarios }
    })
}

fn params(stage: Stage) -> PipelineParams {
    PipelineParams { stage, ..PipelineParams::standard(16_000) }
}

#[test]
fn realized_mixtures_keep_exact_ground_truth() {
    let f = fixture();
    for s in f.scenarios.iter().take(4) {
        for snr in [-10.0, 0.0, 20.0] {
            for reference in [SnrReference::SpeechActive, SnrReference::WholeSegment] {
                let m = realize(&s.at_snr(snr), &f.corpus, reference).unwrap();
                assert!(m.mixture.samples().iter().zip(m.speech.samples()).zip(m.noise.samples()).all(|((x, s), n)| *x == s + n));
                assert_eq!(m.mixture.len(), 320_000);
                if reference == SnrReference::SpeechActive {
                    for part in 0..2 {
                        assert!((m.measured_snr_db(part) - snr).abs() <= 0.01, "{} part {part}: {}", s.id, m.measured_snr_db(part));
                    }
                }
            }
        }
    }
}

#[test]
fn generated_scenarios_are_valid() {
    let f = fixture();
    assert_eq!(f.scenarios.len(), 8);
    for s in &f.scenarios {
        s.validate().unwrap();
        assert_ne!(s.noise_a, s.noise_b);
        assert_ne!(s.speaker_a, s.speaker_b);
    }
}

#[test]
fn ground_truth_regime_marks_every_decision_correct() {
    let f = fixture();
    let s = f.scenarios[1].at_snr(10.0);
    let m = realize(&s, &f.corpus, SnrReference::SpeechActive).unwrap();
    let r = run_scenario(&s, &m, &f.corpus, &f.bank, Regime::GroundTruth, &params(Stage::Full));
    assert!(r.is_ok(), "{}", r.status);
    assert_eq!(r.noise_correct, [Some(true); 2]);
    assert_eq!(r.speaker_correct, [Some(true); 2]);
    assert_eq!(r.transition_err_s, Some(0.0));
    assert!(r.sdr_db.unwrap() > 3.0, "{:?}", r.sdr_db);
    assert!(r.miss_rate.iter().all(|m| m.is_some()));
}

#[test]
fn out_of_set_noise_is_never_correct_but_still_scored() {
    let f = fixture();
    let s = f.scenarios[2].at_snr(10.0);
    let m = realize(&s, &f.corpus, SnrReference::SpeechActive).unwrap();
    f.bank.access_log().reset();
    let r = run_scenario(&s, &m, &f.corpus, &f.bank, Regime::OutOfSetNoise, &params(Stage::Full));
    assert!(r.is_ok(), "{}", r.status);
    assert_eq!(r.noise_correct, [Some(false); 2]);
    assert!(r.sdr_db.is_some());
    assert!(r.speaker_est.iter().all(|e| e.is_some()));
    for label in [&s.noise_a, &s.noise_b] {
        assert_eq!(f.bank.access_log().noise_reads(f.bank.noise_index(label).unwrap()), 0);
    }
}

#[test]
fn noise_stage_stops_after_segmentation() {
    let f = fixture();
    let s = f.scenarios[0].at_snr(0.0);
    let m = realize(&s, &f.corpus, SnrReference::SpeechActive).unwrap();
    let r = run_scenario(&s, &m, &f.corpus, &f.bank, Regime::Complete, &params(Stage::Noise));
    assert!(r.is_ok());
    assert!(r.noise_est.iter().all(|e| e.is_some()));
    assert!(r.transition_err_s.unwrap().abs() < 0.3);
    assert_eq!(r.speaker_est, [None, None]);
    assert_eq!(r.sdr_db, None);
}

#[test]
fn missing_sources_fail_the_run_not_the_harness() {
    let f = fixture();
    let mut s = f.scenarios[0].at_snr(0.0);
    let m = realize(&s, &f.corpus, SnrReference::SpeechActive).unwrap();
    s.noise_a = "absent".into();
    let r = run_scenario(&s, &m, &f.corpus, &f.bank, Regime::GroundTruth, &params(Stage::Noise));
    assert!(r.status.starts_with("failed:ground-truth"), "{}", r.status);
}

#[test]
fn manifest_rows_resume_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let text = "atoms = 16\nscenario_count = 3\nregimes = [\"complete\", \"out-of-set-noise\"]\nsnrs = [0.0]\nstage = \"noise\"\n";
    let mut m = Manifest::from_toml(text).unwrap();
    m.output = dir.path().to_path_buf();

    let first = run_manifest(&m).unwrap();
    assert_eq!(first.reports.len(), 6);
    assert_eq!(first.reused, 0);
    let csv = fs::read_to_string(&first.csv_path).unwrap();
    assert_eq!(csv.lines().count(), 7);

    // one row lost, as after an interruption
    let rows: Vec<_> = fs::read_dir(dir.path().join("rows")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(rows.len(), 6);
    fs::remove_file(&rows[0]).unwrap();
    let second = run_manifest(&m).unwrap();
    assert_eq!(second.reused, 5);
    assert_eq!(fs::read_to_string(&second.csv_path).unwrap(), csv);

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(&second.summary_path).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    for g in summarize(&second.reports) {
        let flags: Vec<bool> = second
            .reports
            .iter()
            .filter(|r| r.regime == g.regime)
            .flat_map(|r| r.noise_correct.iter().map(|c| c.unwrap()))
            .collect();
        let expected = 100.0 * flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64;
        assert_eq!(g.noise_accuracy, Some(expected));
    }
}

#[test]
fn single_run_manifest_emits_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::from_toml("atoms = 8\nscenario_count = 1\nsnrs = [10.0]\nstage = \"noise\"\n").unwrap();
    m.output = dir.path().to_path_buf();
    let out = run_manifest(&m).unwrap();
    assert_eq!(out.reports.len(), 1);
    assert_eq!(fs::read_to_string(out.csv_path).unwrap().lines().count(), 2);
}

#[test]
fn parallel_runs_match_sequential_runs() {
    let text = "atoms = 8\nscenario_count = 4\nsnrs = [0.0, 10.0]\nstage = \"noise\"\n";
    let mut csv = Vec::new();
    for jobs in [1, 3] {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::from_toml(text).unwrap();
        m.output = dir.path().to_path_buf();
        m.parallelism = jobs;
        csv.push(fs::read(run_manifest(&m).unwrap().csv_path).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn empty_manifest_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::from_toml("atoms = 8\nscenario_count = 0\nsnrs = [0.0]\n").unwrap();
    m.output = dir.path().to_path_buf();
    let e = run_manifest(&m).unwrap_err();
    assert_ne!(e.exit_code(), 0);
}
