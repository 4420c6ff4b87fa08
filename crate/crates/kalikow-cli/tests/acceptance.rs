//! CLI acceptance: full-pipeline determinism (byte-identical reruns) and
//! the documented exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kalikow"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("kalikow-cli-tests")
        .join(format!("{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

const HAWKES_MODEL: &str = r#"[hawkes]
neurons = [1, 2]
nu = [0.5, 0.5]
interactions = [
  { from = 1, to = 2, lag = 1, weight = 0.2 },
  { from = 2, to = 2, lag = 2, weight = -0.2 },
]
"#;

const EXPERIMENT: &str = r#"schema = 1

[model]
file = "model.toml"

[simulation]
neurons = [1, 2]
m = 3
t = 500
seed = 42

[dictionary]
kind = "hawkes_spont"

[estimator]
target = 2
gamma = 2.0
delta = 0.1

[diagnostics]
kappa = [0.001]
re_c = 1.0
re_s = 1
re_mode = "exact"
mu = 0.3
theta = 0.25

[output]
dir = "out"
"#;

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                entries.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

/// Criterion 13: identical config and seed produce byte-identical output
/// trees across full pipeline reruns, for every subcommand in the chain.
#[test]
fn acceptance_13_cli_determinism() {
    let dir = scratch("determinism");
    write(&dir.join("model.toml"), HAWKES_MODEL);
    write(&dir.join("exp.toml"), EXPERIMENT);

    // replicate: the whole pipeline, twice.
    for out in ["a", "b"] {
        let status = bin()
            .args([
                "replicate",
                "--config",
                dir.join("exp.toml").to_str().unwrap(),
                "-n",
                "2",
                "--base-seed",
                "7",
                "--out",
                dir.join(out).to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = dir_snapshot(&dir.join("a"));
    let b = dir_snapshot(&dir.join("b"));
    assert_eq!(a.len(), b.len());
    let files = a.len();
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "{name_a} differs between reruns");
    }

    // simulate + estimate, twice each.
    for run in ["s1", "s2"] {
        let status = bin()
            .args([
                "simulate",
                "--model",
                dir.join("model.toml").to_str().unwrap(),
                "--neurons",
                "1,2",
                "--m",
                "3",
                "--T",
                "400",
                "--seed",
                "9",
                "--format",
                "both",
                "--out",
                dir.join(run).join("sample").to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let status = bin()
            .args([
                "estimate",
                "--sample",
                dir.join(run).join("sample.csv").to_str().unwrap(),
                "--dict",
                "hawkes_spont",
                "--target",
                "2",
                "--gamma",
                "2.0",
                "--delta",
                "0.1",
                "--out",
                dir.join(run).join("solution.json").to_str().unwrap(),
                "--gram-out",
                dir.join(run).join("gram.json").to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["sample.csv", "sample.bin", "solution.json", "gram.json"] {
        let x = std::fs::read(dir.join("s1").join(file)).unwrap();
        let y = std::fs::read(dir.join("s2").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between reruns");
    }
    println!(
        "acceptance 13 cli-determinism: PASS ({files} replicate artifacts plus \
         simulate/estimate outputs byte-identical)"
    );
}

/// Config round trip: parse(serialize(config)) equals the original.
#[test]
fn config_round_trip() {
    use kalikow_cli::config::ExperimentConfig;
    let parsed = ExperimentConfig::parse(EXPERIMENT).unwrap();
    let serialized = toml::to_string_pretty(&parsed).unwrap();
    let again = ExperimentConfig::parse(&serialized).unwrap();
    assert_eq!(parsed, again);
}

/// A failing stage leaves a `.partial` marker naming it.
#[test]
fn stage_failure_leaves_partial_marker() {
    let dir = scratch("partial");
    // Supercritical explicit model: every neighborhood has two sites, so
    // genealogies explode and the simulate stage hits the cap.
    write(
        &dir.join("model.toml"),
        "atoms v1\n0, 0.0, [], const:0.5\n0, 1.0, [(0,-1),(0,-2)], bit:0\n",
    );
    write(
        &dir.join("exp.toml"),
        "[model]\nfile = \"model.toml\"\n\n[simulation]\nneurons = [0]\nm = 2\nt = 200\nseed = 3\ngenealogy_cap = 1000\n\n[output]\ndir = \"out\"\n",
    );
    let status = bin()
        .current_dir(&dir)
        .args(["replicate", "--config", "exp.toml", "-n", "1", "--base-seed", "0"])
        .status()
        .unwrap();
    // Replicate records per-seed errors and still aggregates.
    assert!(status.success());
    let marker = dir.join("out").join("seed_0").join("report.json.partial");
    let text = std::fs::read_to_string(marker).unwrap();
    assert!(text.contains("\"failed_stage\": \"simulate\""), "{text}");
    let aggregate =
        std::fs::read_to_string(dir.join("out").join("aggregate.json")).unwrap();
    assert!(aggregate.contains("\"errored\": 1"));
}

/// A minimal config (no estimator) simulates and reports summary stats.
#[test]
fn minimal_config_simulate_only() {
    let dir = scratch("minimal");
    write(&dir.join("model.toml"), "[markov]\np1 = 0.3\np0 = 0.6\n");
    write(
        &dir.join("exp.toml"),
        "[model]\nfile = \"model.toml\"\n\n[simulation]\nneurons = [0]\nm = 2\nt = 300\nseed = 1\n\n[output]\ndir = \"out\"\n",
    );
    let status = bin()
        .current_dir(&dir)
        .args(["replicate", "--config", "exp.toml", "-n", "1", "--base-seed", "5"])
        .status()
        .unwrap();
    assert!(status.success());
    let seed_dir = dir.join("out").join("seed_5");
    assert!(seed_dir.join("sample.csv").exists());
    assert!(seed_dir.join("sample.bin").exists());
    assert!(!seed_dir.join("solution.json").exists());
    let report = std::fs::read_to_string(seed_dir.join("report.json")).unwrap();
    assert!(report.contains("\"rates\""));
}

/// Replicated Markov runs: the fraction of seeds where `|b - b_bar|` stays
/// within `d_delta` is at least `1 - delta - 3 sigma`.
#[test]
fn replicate_threshold_coverage() {
    let dir = scratch("coverage");
    write(&dir.join("model.toml"), "[markov]\np1 = 0.3\np0 = 0.6\n");
    write(
        &dir.join("exp.toml"),
        "[model]\nfile = \"model.toml\"\n\n[simulation]\nneurons = [0]\nm = 2\nt = 2000\nseed = 1\n\n[dictionary]\nkind = \"hawkes_spont\"\n\n[estimator]\ntarget = 0\ngamma = 2.0\ndelta = 0.1\n\n[output]\ndir = \"out\"\n",
    );
    let n = 40u64;
    let status = bin()
        .current_dir(&dir)
        .args(["replicate", "--config", "exp.toml", "-n", &n.to_string(), "--base-seed", "0"])
        .status()
        .unwrap();
    assert!(status.success());
    let aggregate: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out").join("aggregate.json")).unwrap())
            .unwrap();
    let coverage = aggregate["aggregate"]["compensator_coverage"]
        .as_f64()
        .unwrap();
    let delta = 0.1;
    let sigma = (delta * (1.0 - delta) / n as f64).sqrt();
    assert!(
        coverage >= 1.0 - delta - 3.0 * sigma,
        "coverage {coverage} below {}",
        1.0 - delta - 3.0 * sigma
    );
}

/// Cross-section consistency is validated before anything runs.
#[test]
fn config_cross_section_checks() {
    let dir = scratch("cross-section");
    write(&dir.join("model.toml"), HAWKES_MODEL);
    // Dictionary deeper than the simulated past.
    write(
        &dir.join("deep.toml"),
        "[model]\nfile = \"model.toml\"\n\n[simulation]\nneurons = [1, 2]\nm = 2\nt = 100\nseed = 1\n\n[dictionary]\nkind = \"hawkes\"\nm = 5\n\n[output]\ndir = \"out\"\n",
    );
    // Target not among the simulated neurons.
    write(
        &dir.join("target.toml"),
        "[model]\nfile = \"model.toml\"\n\n[simulation]\nneurons = [1, 2]\nm = 2\nt = 100\nseed = 1\n\n[dictionary]\nkind = \"hawkes\"\n\n[estimator]\ntarget = 9\ngamma = 2.0\ndelta = 0.1\n\n[output]\ndir = \"out\"\n",
    );
    // Bin width not dividing the window.
    write(
        &dir.join("eta.toml"),
        "[model]\nfile = \"model.toml\"\n\n[simulation]\nneurons = [1, 2]\nm = 3\nt = 100\nseed = 1\n\n[dictionary]\nkind = \"cumulative\"\neta = 2\n\n[output]\ndir = \"out\"\n",
    );
    for config in ["deep.toml", "target.toml", "eta.toml"] {
        let status = bin()
            .current_dir(&dir)
            .args(["replicate", "--config", config, "-n", "1"])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(2), "{config} should be a config error");
    }
}

#[test]
fn exit_code_config_error() {
    let dir = scratch("config-error");
    write(&dir.join("bad.toml"), "[markov]\np1 = 0.3\n"); // missing p0
    let status = bin()
        .args([
            "simulate",
            "--model",
            dir.join("bad.toml").to_str().unwrap(),
            "--neurons",
            "0",
            "--m",
            "1",
            "--T",
            "10",
            "--seed",
            "0",
            "--out",
            dir.join("x.csv").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn exit_code_validation_failure() {
    let dir = scratch("validation");
    write(&dir.join("model.toml"), HAWKES_MODEL);
    // mu = 0.4 is outside the model's randomness band (0.3).
    let status = bin()
        .args([
            "validate-model",
            "--model",
            dir.join("model.toml").to_str().unwrap(),
            "--theta",
            "0.25",
            "--mu",
            "0.4",
            "--out",
            dir.join("report.json").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    // And passes at the true band.
    let status = bin()
        .args([
            "validate-model",
            "--model",
            dir.join("model.toml").to_str().unwrap(),
            "--theta",
            "0.25",
            "--mu",
            "0.3",
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
}

#[test]
fn exit_code_convergence_failure() {
    let dir = scratch("convergence");
    write(&dir.join("model.toml"), HAWKES_MODEL);
    let status = bin()
        .args([
            "simulate",
            "--model",
            dir.join("model.toml").to_str().unwrap(),
            "--neurons",
            "1,2",
            "--m",
            "2",
            "--T",
            "300",
            "--seed",
            "1",
            "--out",
            dir.join("sample.csv").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let status = bin()
        .args([
            "estimate",
            "--sample",
            dir.join("sample.csv").to_str().unwrap(),
            "--dict",
            "hawkes",
            "--target",
            "2",
            "--gamma",
            "2.0",
            "--delta",
            "0.1",
            "--max-iter",
            "0",
            "--out",
            dir.join("solution.json").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn exit_code_check_failure() {
    let dir = scratch("check");
    write(&dir.join("model.toml"), HAWKES_MODEL);
    for args in [
        vec![
            "simulate",
            "--model",
            "model.toml",
            "--neurons",
            "1,2",
            "--m",
            "2",
            "--T",
            "300",
            "--seed",
            "1",
            "--out",
            "sample.csv",
        ],
        vec![
            "estimate",
            "--sample",
            "sample.csv",
            "--dict",
            "hawkes",
            "--target",
            "2",
            "--gamma",
            "2.0",
            "--delta",
            "0.1",
            "--out",
            "solution.json",
            "--gram-out",
            "gram.json",
        ],
    ] {
        let status = bin().current_dir(&dir).args(args).status().unwrap();
        assert!(status.success());
    }
    // An unattainable Inv target fails the check.
    let status = bin()
        .current_dir(&dir)
        .args(["gram-check", "--in", "gram.json", "--kappa", "10.0"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(5));
    // An attainable one passes.
    let status = bin()
        .current_dir(&dir)
        .args(["gram-check", "--in", "gram.json", "--kappa", "0.0001"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn oracle_eval_round_trip() {
    let dir = scratch("oracle-eval");
    write(&dir.join("model.toml"), HAWKES_MODEL);
    let run = |args: &[&str]| {
        let status = bin().current_dir(&dir).args(args).status().unwrap();
        assert!(status.success(), "failed: {args:?}");
    };
    run(&[
        "simulate",
        "--model",
        "model.toml",
        "--neurons",
        "1,2",
        "--m",
        "3",
        "--T",
        "2000",
        "--seed",
        "3",
        "--out",
        "sample.csv",
    ]);
    run(&[
        "estimate",
        "--sample",
        "sample.csv",
        "--dict",
        "hawkes_spont",
        "--target",
        "2",
        "--gamma",
        "2.0",
        "--delta",
        "0.1",
        "--out",
        "solution.json",
    ]);
    let output = bin()
        .current_dir(&dir)
        .args([
            "oracle-eval",
            "--sample",
            "sample.csv",
            "--model",
            "model.toml",
            "--dict",
            "hawkes_spont",
            "--target",
            "2",
            "--solution",
            "solution.json",
            "--kappa",
            "0.05",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("norm_sq_vs_model"));
    assert!(text.contains("oracle_bound_at_candidate"));
}

#[test]
fn explain_config_prints_template() {
    let output = bin()
        .args(["replicate", "--explain-config"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("[simulation]"));
    assert!(text.contains("[estimator]"));
}

#[test]
fn concentration_subcommand_runs() {
    let dir = scratch("concentration");
    write(&dir.join("model.toml"), "[markov]\np1 = 0.3\np0 = 0.6\n");
    let status = bin()
        .current_dir(&dir)
        .args([
            "concentration",
            "--model",
            "model.toml",
            "--mode",
            "scalar",
            "--dict",
            "hawkes",
            "--m",
            "1",
            "--T",
            "2000",
            "--x",
            "3.0",
            "--replicas",
            "30",
            "--theta",
            "0.5",
            "--out",
            "report.json",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = std::fs::read_to_string(dir.join("report.json")).unwrap();
    assert!(report.contains("\"verdict\": \"Pass\""), "{report}");
}
