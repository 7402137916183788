use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparsescene"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("SPARSESCENE_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn learn(out: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let mut args = vec!["learn-dict", "--corpus", "synthetic", "--atoms", "4", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cli(&args, env)
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&cli(&[], &[])), 1);
    assert_eq!(code(&cli(&["frobnicate"], &[])), 1);
    assert_eq!(code(&cli(&["learn-dict", "--corpus", "synthetic"], &[])), 1);
    assert_eq!(code(&cli(&["--help"], &[])), 0);
}

#[test]
fn bad_config_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    assert_eq!(code(&learn(&out, &["--method", "nope"], &[])), 1);
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "this is not a pair\n").unwrap();
    assert_eq!(code(&cli(&["--config", conf.to_str().unwrap(), "make-corpus", "--out", "x"], &[])), 1);
    let manifest = dir.path().join("m.toml");
    std::fs::write(&manifest, "unknown_key = 1\n").unwrap();
    assert_eq!(code(&cli(&["evaluate", "--manifest", manifest.to_str().unwrap()], &[])), 1);
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let o = cli(&["classify", "--bank", missing.to_str().unwrap(), "--wav", "absent.wav"], &[]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&cli(&["evaluate", "--manifest", "absent.toml"], &[])), 2);
    let out = dir.path().join("b.json");
    let o = cli(&["learn-dict", "--corpus", "absent-dir", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn learned_bank_classifies_and_separates_a_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("bank.json");
    let o = learn(&bank, &[], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let manifest = dir.path().join("m.toml");
    std::fs::write(&manifest, "scenario_count = 1\nsnrs = [10.0]\n").unwrap();
    let sims = dir.path().join("sims");
    let o = cli(&["simulate", "--manifest", manifest.to_str().unwrap(), "--out", sims.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let case = std::fs::read_dir(&sims).unwrap().map(|e| e.unwrap().path()).find(|p| p.is_dir()).unwrap();
    let wav = case.join("mixture.wav");
    assert!(case.join("speech.wav").exists() && case.join("noise.wav").exists());

    let o = cli(&["classify", "--bank", bank.to_str().unwrap(), "--wav", wav.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!v["segments"].as_array().unwrap().is_empty());

    let prefix = dir.path().join("out_").to_str().unwrap().to_string();
    let o = cli(&["separate", "--bank", bank.to_str().unwrap(), "--wav", wav.to_str().unwrap(), "--out-prefix", &prefix], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out_speech.wav").exists() && dir.path().join("out_noise.wav").exists());
}

#[test]
fn flags_beat_environment_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    let from_file = dir.path().join("file.json");
    let from_env = dir.path().join("env.json");
    let from_flag = dir.path().join("flag.json");
    std::fs::write(&conf, format!("corpus = synthetic\natoms = 4\nout = {}\n", from_file.display())).unwrap();
    let c = conf.to_str().unwrap();

    assert_eq!(code(&cli(&["--config", c, "learn-dict"], &[])), 0);
    assert!(from_file.exists());

    let env = [("SPARSESCENE_OUT", from_env.to_str().unwrap())];
    assert_eq!(code(&cli(&["--config", c, "learn-dict"], &env)), 0);
    assert!(from_env.exists());

    let o = cli(&["--config", c, "learn-dict", "--out", from_flag.to_str().unwrap()], &env);
    assert_eq!(code(&o), 0);
    assert!(from_flag.exists());

    // config named by the environment
    std::fs::remove_file(&from_file).unwrap();
    assert_eq!(code(&cli(&["learn-dict"], &[("SPARSESCENE_CONFIG", c)])), 0);
    assert!(from_file.exists());
}
