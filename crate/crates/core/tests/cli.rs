//! End-to-end checks of the command-line interface: exit codes, output
//! determinism, and the documented file formats.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rsma-cran"))
}

fn small_config(dir: &Path, seed: u64) -> PathBuf {
    let text = format!(
        r#"num_bs = 2
num_users = 3
antennas_per_bs = 1
fronthaul_capacity_mbps = 20.0
max_power_dbm = 28.0
bandwidth_mhz = 10.0
noise_psd_dbm_per_hz = -168.0
area_side_m = 500.0
alpha = 0.5
desired_rates_mbps = [12.0, 6.0, 3.0]
criticality_levels = ["HI", "ME", "LO"]
circuit_power_dbm = 38.0
seed = {seed}
"#
    );
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn oracle_config(dir: &Path) -> PathBuf {
    let text = r#"num_bs = 1
num_users = 2
antennas_per_bs = 1
fronthaul_capacity_mbps = 20.0
max_power_dbm = 28.0
bandwidth_mhz = 10.0
noise_psd_dbm_per_hz = -168.0
area_side_m = 150.0
alpha = 0.5
desired_rates_mbps = [10.0, 6.0]
criticality_levels = ["ME", "LO"]
circuit_power_dbm = 38.0
seed = 3
"#;
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let render = |out: &str, log: &str| {
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--seed", "7", "--out"])
            .arg(dir.path().join(out))
            .arg("--log")
            .arg(dir.path().join(log))
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(dir.path().join(out)).unwrap(),
            std::fs::read(dir.path().join(log)).unwrap(),
        )
    };
    let (report_a, log_a) = render("a.toml", "a.csv");
    let (report_b, log_b) = render("b.toml", "b.csv");
    assert_eq!(report_a, report_b);
    assert_eq!(log_a, log_b);

    let report = String::from_utf8(report_a).unwrap();
    assert!(report.contains("seed = 7"));
    assert!(report.contains("psi ="));
    let log = String::from_utf8(log_a).unwrap();
    assert!(log.starts_with("iteration,psi,mse,power_w,status"));
}

#[test]
fn run_dumps_loadable_structure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2);
    let dump = dir.path().join("structure.toml");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--dump-structure")
        .arg(&dump)
        .arg("--out")
        .arg(dir.path().join("r.toml"))
        .status()
        .unwrap();
    assert!(status.success());
    let loaded = rsma_cran::structure::RsmaStructure::from_file(&dump).unwrap();
    loaded.decode.validate().unwrap();
}

#[test]
fn sweep_has_expected_cardinality_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let render = |name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["sweep", "--config"])
            .arg(&cfg)
            .args([
                "--param",
                "fronthaul",
                "--grid",
                "10,20",
                "--schemes",
                "rsma,tin",
                "--seed-list",
                "1,2,3",
                "--out",
            ])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let a = render("sweep_a.csv");
    let b = render("sweep_b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 2); // header + grid*seeds*schemes
    assert!(text.starts_with("param,value,seed,scheme,variant,psi,"));

    // Aggregation: 2 grid points x 2 schemes -> 4 series rows.
    let series = dir.path().join("series.csv");
    let status = bin()
        .args(["plotdata", "--input"])
        .arg(dir.path().join("sweep_a.csv"))
        .arg("--out")
        .arg(&series)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(series).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(4) == Some("3"))); // n = 3 seeds
}

#[test]
fn plotdata_rejects_empty_csv_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "param,value,seed,scheme,variant,psi,mse,power_w,phi,iterations,status\n")
        .unwrap();
    let status = bin().args(["plotdata", "--input"]).arg(&empty).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn config_errors_exit_1() {
    let status = bin().args(["run", "--config", "/nonexistent/path.toml"]).status().unwrap();
    assert_eq!(status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--scheme", "bogus"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // Invalid field values are config errors too.
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("alpha = 0.5", "alpha = 1.5");
    std::fs::write(&bad, text).unwrap();
    let status = bin().args(["run", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn oracle_subcommand_compares_against_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = oracle_config(dir.path());
    let out = bin()
        .args(["oracle", "--config"])
        .arg(&cfg)
        .args(["--points", "41"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("psi_algorithm"));
    assert!(text.contains("psi_oracle"));

    // Oversized instances are refused as config errors.
    let big = small_config(dir.path(), 1);
    let status = bin().args(["oracle", "--config"]).arg(&big).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn env_seed_override_applies_under_cli_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let out = dir.path().join("env.toml");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("RSMA_CRAN_SEED", "99")
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("seed = 99"), "env override ignored: {text}");

    // The explicit flag wins over the environment.
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "5", "--out"])
        .arg(&out)
        .env("RSMA_CRAN_SEED", "99")
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("seed = 5"));
}
