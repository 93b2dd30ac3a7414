//! End-to-end checks of the run/sweep layer: byte-for-byte determinism,
//! manifest re-runs, snapshot mass audits, sweep aggregation and the CLI
//! surface (config files, flag overrides, exit codes).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use waterflood::pressure::Scheme;
use waterflood::runner::{
    parse_config_str, read_snapshot, run, sweep, RunOptions, ScenarioParams,
};
use waterflood::scenario::{five_spot_scenario, radial_scenario, ScenarioConfig};
use waterflood::transport::water_mass;

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("waterflood_test_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn short_radial(n: usize, steps: u64) -> ScenarioConfig {
    let mut config = radial_scenario(n, 10.0, Scheme::nine_point(), true).unwrap();
    let dt = config.dt_rule.base_dt(config.grid.dx);
    config.t_end = steps as f64 * dt;
    config.snapshot_times = vec![0.0, config.t_end / 2.0, config.t_end];
    config
}

fn dir_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn identical_configs_give_byte_identical_snapshots() {
    let config = short_radial(13, 12);
    let dir_a = temp_dir("det_a");
    let dir_b = temp_dir("det_b");
    run(&config, &RunOptions { out_dir: Some(dir_a.clone()), progress_every: 0 }).unwrap();
    run(&config, &RunOptions { out_dir: Some(dir_b.clone()), progress_every: 0 }).unwrap();
    let names = dir_files(&dir_a);
    assert_eq!(names, dir_files(&dir_b));
    for name in names.iter().filter(|n| n.starts_with("saturation")) {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let _ = fs::remove_dir_all(&dir_a);
    let _ = fs::remove_dir_all(&dir_b);
}

#[test]
fn manifest_is_a_config_that_reproduces_every_snapshot() {
    let config = short_radial(11, 9);
    let dir_a = temp_dir("manifest_a");
    run(&config, &RunOptions { out_dir: Some(dir_a.clone()), progress_every: 0 }).unwrap();
    let manifest_text = fs::read_to_string(dir_a.join("manifest.txt")).unwrap();
    let params = parse_config_str(&manifest_text, "manifest.txt").unwrap();
    let rebuilt = params.build().unwrap();
    let dir_b = temp_dir("manifest_b");
    run(&rebuilt, &RunOptions { out_dir: Some(dir_b.clone()), progress_every: 0 }).unwrap();
    for name in dir_files(&dir_a).iter().filter(|n| n.starts_with("saturation")) {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs after a manifest re-run");
    }
    let _ = fs::remove_dir_all(&dir_a);
    let _ = fs::remove_dir_all(&dir_b);
}

#[test]
fn snapshot_files_preserve_the_mass_ledger() {
    let config = short_radial(13, 10);
    let dir = temp_dir("mass");
    let outcome = run(&config, &RunOptions { out_dir: Some(dir.clone()), progress_every: 0 }).unwrap();
    let last = outcome.manifest.snapshots.last().unwrap();
    let snap = read_snapshot(&dir.join(last.file.as_deref().unwrap())).unwrap();
    assert_eq!(snap.nx, config.grid.nx);
    // Inactive cells stay zero, so the plain file sum is the active mass.
    let file_mass: f64 =
        snap.data.iter().sum::<f64>() * config.grid.cell_volume() * config.phi;
    let mem_mass = water_mass(&config.grid, &outcome.s_final, config.phi);
    assert!(
        (file_mass - mem_mass).abs() <= 1e-12 * mem_mass.max(1e-12),
        "file {file_mass} vs memory {mem_mass}"
    );
    assert_eq!(snap.header_value("scheme"), Some("9p"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn sweep_runs_the_figure_matrix_and_pairs_schemes() {
    // Layout of the first figure: 2 schemes x 3 grids x 2 ratios = 12 runs.
    let mut configs = Vec::new();
    for n in [11usize, 13, 15] {
        for m in [1.0, 2.0] {
            for scheme in [Scheme::five_point(), Scheme::nine_point()] {
                let mut c = radial_scenario(n, m, scheme, false).unwrap();
                let dt = c.dt_rule.base_dt(c.grid.dx);
                c.t_end = 6.0 * dt;
                c.snapshot_times = vec![c.t_end];
                configs.push(c);
            }
        }
    }
    let summary = sweep(&configs, None, 2).unwrap();
    assert_eq!(summary.rows.len(), 12);
    assert!(summary.rows.iter().all(|r| r.status == "ok"));
    // Every row got its 5P/9P partner discrepancy, symmetric within the pair.
    for row in &summary.rows {
        let d = row.report.as_ref().unwrap().scheme_discrepancy_l1;
        assert!(d.is_some(), "row {} {} missing discrepancy", row.scheme, row.n);
    }
    // Rows are sorted deterministically.
    let keys: Vec<(String, usize, u64, String)> = summary
        .rows
        .iter()
        .map(|r| (r.scenario.clone(), r.n, r.m.to_bits(), r.scheme.clone()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn sweep_parallelism_does_not_change_the_table() {
    let mut configs = Vec::new();
    for scheme in [Scheme::five_point(), Scheme::nine_point()] {
        for viscosity in [false, true] {
            let mut c = five_spot_scenario(11, 10.0, scheme, viscosity).unwrap();
            let dt = c.dt_rule.base_dt(c.grid.dx);
            c.t_end = 5.0 * dt;
            c.snapshot_times = vec![c.t_end];
            configs.push(c);
        }
    }
    let serial = sweep(&configs, None, 1).unwrap();
    let parallel = sweep(&configs, None, 4).unwrap();
    assert_eq!(serial.to_tsv(), parallel.to_tsv());
}

#[test]
fn sweep_records_failures_without_aborting() {
    let good = short_radial(11, 3);
    let mut bad = short_radial(11, 3);
    bad.solver_tol = f64::MIN_POSITIVE; // unreachable tolerance
    bad.visc.c_override = Some(f64::NAN);
    let summary = sweep(&[bad, good], None, 2).unwrap();
    assert_eq!(summary.rows.len(), 2);
    let ok = summary.rows.iter().filter(|r| r.status == "ok").count();
    assert_eq!(ok, 1, "{:?}", summary.rows.iter().map(|r| &r.status).collect::<Vec<_>>());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_waterflood"))
}

#[test]
fn cli_run_writes_manifest_and_is_deterministic() {
    let dir_a = temp_dir("cli_a");
    let dir_b = temp_dir("cli_b");
    for dir in [&dir_a, &dir_b] {
        let status = cli()
            .args([
                "run",
                "--scenario",
                "radial",
                "--n",
                "11",
                "--M",
                "5",
                "--scheme",
                "5p",
                "--viscosity",
                "on",
                "--t-end",
                "0.004",
                "--progress-every",
                "0",
                "--out",
            ])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert!(dir_a.join("manifest.txt").exists());
    let a = fs::read(dir_a.join("saturation_000.txt")).unwrap();
    let b = fs::read(dir_b.join("saturation_000.txt")).unwrap();
    assert_eq!(a, b);
    let _ = fs::remove_dir_all(&dir_a);
    let _ = fs::remove_dir_all(&dir_b);
}

#[test]
fn cli_flags_override_config_file() {
    let dir = temp_dir("cli_cfg");
    let cfg_path = dir.join("case.cfg");
    fs::write(
        &cfg_path,
        "scenario = radial\nn = 11\nm = 3\nscheme = 9p\nviscosity = off\nt_end = 0.002\n",
    )
    .unwrap();
    let out = dir.join("out");
    let status = cli()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--M", "7", "--progress-every", "0", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("m = 7"), "flag did not override file:\n{manifest}");
    assert!(manifest.contains("scheme = 9p"), "file value lost:\n{manifest}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn cli_reports_usage_errors_with_exit_code_2() {
    let status = cli().args(["run", "--bogus-flag", "1"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = cli().args(["run", "--scheme", "7p"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = cli().arg("frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn cli_sweep_builds_the_cross_product() {
    let dir = temp_dir("cli_sweep");
    let status = cli()
        .args([
            "sweep",
            "--scenario",
            "radial",
            "--n",
            "11,13",
            "--M",
            "2",
            "--scheme",
            "5p,9p",
            "--viscosity",
            "off",
            "--t-end",
            "0.002",
            "--parallelism",
            "2",
            "--out",
        ])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let tsv = fs::read_to_string(dir.join("summary.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 4, "{tsv}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn scenario_params_merge_priority() {
    let file = parse_config_str("n = 21\nm = 3\nscheme = 9p", "f").unwrap();
    let flags = ScenarioParams { m: Some(7.0), ..Default::default() };
    let merged = file.merged(&flags);
    assert_eq!(merged.n, Some(21));
    assert_eq!(merged.m, Some(7.0));
    assert_eq!(merged.scheme.as_deref(), Some("9p"));
}
