use std::path::Path;
use std::process::{Command, Output};

use rhomix::mixture::MixtureCandidate;
use rhomix::{rng, EmissionParams, EmissionSpec};

fn rhomix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhomix"))
        .args(args)
        .env("RHOMIX_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_normal_sample(path: &Path, n: usize, seed: u64) {
    let c =
        MixtureCandidate::single(EmissionSpec::gaussian(), EmissionParams::new(0.0, 1.0)).unwrap();
    let x = c.sample(n, &mut rng::from_seed(seed));
    let mut text = String::from("# seeded N(0,1)\n");
    for v in x {
        text.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn fit_recovers_a_standard_normal() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.txt");
    write_normal_sample(&data, 1000, 11);
    let out = dir.path().join("out");
    let o = rhomix(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    let loc = report["chosen"]["components"][0][1]["location"]
        .as_f64()
        .unwrap();
    assert!(loc.abs() < 0.1, "{loc}");
}

#[test]
fn empty_data_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.txt");
    std::fs::write(&data, "").unwrap();
    let o = rhomix(&["fit", "--data", data.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let o = rhomix(&[
        "fit",
        "--data",
        dir.path().join("missing.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn delta_above_one_over_k_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.txt");
    write_normal_sample(&data, 50, 2);
    let o = rhomix(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--delta",
        "0.6",
    ]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("1/K"), "{err}");
}

#[test]
fn spike_alpha_outside_unit_interval_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spike.toml");
    let text = rhomix(&["study", "spike-0.5", "--print-config"]);
    assert_eq!(code(&text), 0);
    let toml = String::from_utf8(text.stdout)
        .unwrap()
        .replace("alpha = 0.5", "alpha = 1.5");
    std::fs::write(&cfg, toml).unwrap();
    let o = rhomix(&["study", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let data = dir.path().join("x.txt");
    std::fs::write(&data, "0.1\n0.2\n").unwrap();
    let o = rhomix(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--family",
        "spike",
        "--alpha",
        "1.0",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unknown_study_and_flags_fail() {
    assert_eq!(code(&rhomix(&["study", "no-such-study"])), 3);
    assert_eq!(code(&rhomix(&["fit", "--no-such-flag"])), 3);
    let help = rhomix(&["fit", "--help"]);
    let text = String::from_utf8_lossy(&help.stdout);
    for flag in [
        "--config",
        "--seed",
        "--threads",
        "--out",
        "--data",
        "--delta",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rate.toml");
    let text = rhomix(&["study", "rate-gmm", "--print-config"]);
    let toml = String::from_utf8(text.stdout)
        .unwrap()
        .replace("n_grid = [250, 500, 1000]", "n_grid = [100, 200, 400]")
        .replace("replications = 5", "replications = 2");
    std::fs::write(&cfg, toml).unwrap();
    let mut csv = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = rhomix(&[
            "study",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            matches!(code(&o), 0 | 4),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(out.join("summary.json").exists());
        csv.push(std::fs::read(out.join("records.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn selection_subcommands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.txt");
    write_normal_sample(&data, 200, 5);
    let out = dir.path().join("out");
    let o = rhomix(&[
        "select-k",
        "--data",
        data.to_str().unwrap(),
        "--k-range",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sel: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("select-k.json")).unwrap()).unwrap();
    assert_eq!(sel["k_hat"].as_u64(), Some(1));
    let o = rhomix(&[
        "select-family",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("select-family.json").exists());
}
