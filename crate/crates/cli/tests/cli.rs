use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kinetic_uq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinetic-uq"))
        .args(args)
        .env_remove("KINETIC_UQ_THREADS")
        .output()
        .expect("binary runs")
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL_SAMPLING: &str = "\
[scenario]
name = small
[model]
kind = linear_fp
[grid]
n_cells = 20
[time]
horizon = 0.2
dt = dw^2/2
outputs = 0, 0.1, 0.2
[flux]
kind = cc
quadrature = gauss4
[uq]
methods = mc, m3c
samples = 4, 8
equilibrium = sampled:16
repetitions = 2
seed = 11
";

#[test]
fn list_shows_every_bundled_scenario() {
    let out = kinetic_uq(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["fig1", "fig2", "fig3_mc", "fig4_m3c", "fig5_fm3c", "fig6_gpc", "ex1_opinion", "ex2_wealth", "ex3_swarming"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id} missing from\n{text}");
    }
}

#[test]
fn bundled_scenarios_validate() {
    for id in ["fig1", "fig1_maxwellian", "fig6_gpc", "ex3_swarming"] {
        let out = kinetic_uq(&["validate", "--config", id]);
        assert!(out.status.success(), "{id}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn invalid_grid_reports_key_and_line() {
    let dir = scratch_dir("invalid_grid");
    let path = dir.join("bad.ini");
    fs::write(&path, SMALL_SAMPLING.replace("n_cells = 20", "n_cells = 0")).unwrap();
    let out = kinetic_uq(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("grid.n_cells") && err.contains("bad.ini:6"), "{err}");
}

#[test]
fn malformed_dt_rule_is_a_configuration_error() {
    let dir = scratch_dir("malformed_dt");
    let path = dir.join("bad.ini");
    fs::write(&path, SMALL_SAMPLING.replace("dt = dw^2/2", "dt = dw^^2")).unwrap();
    let out = kinetic_uq(&["run", "--config", path.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("time.dt"), "{err}");
}

#[test]
fn missing_scenario_is_a_configuration_error() {
    let out = kinetic_uq(&["validate", "--config", "no_such_scenario"]);
    assert_eq!(out.status.code(), Some(2));
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let dir = scratch_dir("reproducible");
    let config = dir.join("small.ini");
    fs::write(&config, SMALL_SAMPLING).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let out_dir = dir.join(format!("threads{threads}"));
        let out = kinetic_uq(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
        assert!(manifest.contains("status = complete"), "{manifest}");
        assert!(manifest.contains(&format!("threads = {threads}")), "{manifest}");
        outputs.push(csv_files(&out_dir));
    }
    assert!(outputs[0].len() >= 5);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_override_changes_sampled_output() {
    let dir = scratch_dir("seeded");
    let config = dir.join("small.ini");
    fs::write(&config, SMALL_SAMPLING).unwrap();
    let mut means = Vec::new();
    for seed in ["11", "12"] {
        let out_dir = dir.join(format!("seed{seed}"));
        let out = kinetic_uq(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            seed,
            "--threads",
            "1",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
        assert!(manifest.contains(&format!("seed = {seed}")), "{manifest}");
        means.push(fs::read(out_dir.join("mean_mc_cc_gauss4_m8.csv")).unwrap());
    }
    assert_ne!(means[0], means[1]);
}
