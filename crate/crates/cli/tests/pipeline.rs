use std::path::{Path, PathBuf};
use std::process::Command;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/euro2020").canonicalize().unwrap()
}

fn light_config(dir: &Path, with_odds: bool) -> PathBuf {
    let f = fixtures();
    let odds = if with_odds { f.join("odds.csv") } else { dir.join("no_such_odds.csv") };
    let text = format!(
        r#"seed = 7
out_dir = "out"

[inputs]
matches = "{m}"
segments = "{s}"
odds = "{o}"
spec = "{sp}"
covariates = "{c}"
squads = "{sq}"
pool = "{p}"
results = "{r}"
threeway = "{t}"

[consensus]
runs = 2000
tolerance = 0.01

[fit]
folds = 4
n_lambda = 12

[simulate]
runs = 4000
"#,
        m = f.join("matches.csv").display(),
        s = f.join("segments.csv").display(),
        o = odds.display(),
        sp = f.join("spec.txt").display(),
        c = f.join("covariates.csv").display(),
        sq = f.join("squads.csv").display(),
        p = f.join("pool.csv").display(),
        r = f.join("results.csv").display(),
        t = f.join("threeway.csv").display(),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn cupcast(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cupcast")).args(args).output().unwrap()
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = light_config(dir.path(), true);
    let cfg = cfg.to_str().unwrap();
    let first = cupcast(&["pipeline", "--config", cfg]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let out = dir.path().join("out");
    let manifest_a = std::fs::read_to_string(out.join("manifest.sha256")).unwrap();
    let probs_a = std::fs::read_to_string(out.join("stage_probs.csv")).unwrap();
    assert!(probs_a.starts_with("# stage=simulate\n# config_digest="));
    for name in ["ratings.csv", "consensus.csv", "pm_players.csv", "features.csv", "model.csv", "intensities.csv", "evaluation.csv"] {
        assert!(manifest_a.contains(name), "{name} missing from manifest");
    }

    let second = cupcast(&["pipeline", "--config", cfg, "--threads", "2"]);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    let manifest_b = std::fs::read_to_string(out.join("manifest.sha256")).unwrap();
    assert_eq!(manifest_a, manifest_b);
}

#[test]
fn changing_the_seed_changes_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = light_config(dir.path(), true);
    let cfg = cfg.to_str().unwrap();
    let run = |seed: &str| {
        let o = cupcast(&["consensus", "--config", cfg, "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join("out/consensus.csv")).unwrap()
    };
    let a = run("1");
    let b = run("2");
    assert_ne!(a.lines().nth(1), b.lines().nth(1));
}

#[test]
fn missing_odds_names_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = light_config(dir.path(), false);
    let o = cupcast(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage `consensus` failed"), "{err}");
    assert!(err.contains("no_such_odds.csv"), "{err}");
}

#[test]
fn ingest_check_rejects_a_malformed_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("matches.csv");
    std::fs::write(&bad, "date,home\n2020-01-01,GER\n").unwrap();
    let o = cupcast(&["ingest-check", "--matches", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("matches.csv"));
}
