use std::path::Path;
use std::process::Command;

use entrynav::config::{parse_config, ConfigError};
use entrynav::report::{emit_histories, emit_report, fmt_num, STATE_COLUMNS};
use entrynav::scenario::DEFAULT_PRESET;
use entrynav::{load_config, run_campaign, run_paired, GainMode, ScenarioConfig};

fn short_scenario() -> ScenarioConfig {
    ScenarioConfig {
        horizon: 3.0,
        runs: 4,
        ..ScenarioConfig::mars_entry()
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn preset_with(replace: &str, with: &str) -> String {
    assert!(DEFAULT_PRESET.contains(replace));
    DEFAULT_PRESET.replacen(replace, with, 1)
}

#[test]
fn rmse_table_has_one_row_per_mode_and_epoch() {
    let cfg = short_scenario();
    let report = run_campaign(&cfg, &[GainMode::Ekf, GainMode::Adekf]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();

    let (header, rows) = read_csv(&dir.path().join("rmse.csv"));
    assert_eq!(header.len(), 2 + STATE_COLUMNS.len());
    assert_eq!(&header[..2], ["mode", "epoch_s"]);
    assert_eq!(rows.len(), 2 * cfg.epoch_count());

    // values read back to the written precision
    for (m, stats) in report.modes.iter().enumerate() {
        for k in 0..cfg.epoch_count() {
            let row = &rows[m * cfg.epoch_count() + k];
            assert_eq!(row[0], stats.mode.name());
            for i in 0..6 {
                let back: f64 = row[2 + i].parse().unwrap();
                assert_eq!(row[2 + i], fmt_num(stats.rmse[k][i]));
                assert!((back - stats.rmse[k][i]).abs() <= 1e-11 * stats.rmse[k][i].abs());
            }
        }
    }
    for name in ["nme.csv", "capture.csv", "mean_sensitivity.csv", "mean_perturbation.csv", "summary.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn histories_round_trip_through_csv() {
    let cfg = short_scenario();
    let run = run_paired(&cfg, 1, &[GainMode::Adekf]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_histories(&run.histories, dir.path()).unwrap();
    let trajectory = files
        .iter()
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("trajectory_"))
        .unwrap();
    let (header, rows) = read_csv(trajectory);
    let h = &run.histories[0];
    assert_eq!(rows.len(), h.len());
    let col = |name: &str| header.iter().position(|c| c == name).unwrap();
    let (t, r) = (col("epoch_s"), col("est_r_m"));
    for (k, row) in rows.iter().enumerate() {
        assert!((row[t].parse::<f64>().unwrap() - h.times[k]).abs() <= 1e-11 * h.times[k].max(1.0));
        let back: f64 = row[r].parse().unwrap();
        assert!((back - h.estimate[k][0]).abs() <= 1e-11 * h.estimate[k][0]);
    }
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let cfg = short_scenario();
    let write = || {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&run_campaign(&cfg, &[GainMode::Ekf, GainMode::Adekf]).unwrap(), dir.path()).unwrap();
        std::fs::read(dir.path().join("summary.csv")).unwrap()
            .into_iter()
            .chain(std::fs::read(dir.path().join("nme.csv")).unwrap())
            .collect::<Vec<u8>>()
    };
    assert_eq!(write(), write());
}

#[test]
fn shipped_preset_matches_the_built_in_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mars.toml");
    std::fs::write(&path, DEFAULT_PRESET).unwrap();
    assert_eq!(load_config(&path).unwrap(), ScenarioConfig::mars_entry());
}

#[test]
fn bad_configs_are_rejected() {
    assert!(matches!(load_config("/nonexistent/entry.toml"), Err(ConfigError::Io { .. })));
    assert!(matches!(parse_config("seed = ["), Err(ConfigError::Parse(_))));
    assert!(matches!(
        parse_config(&format!("{DEFAULT_PRESET}\nunknown_key = 1\n")),
        Err(ConfigError::Parse(_))
    ));
    for (from, to) in [
        ("dt_s = 0.1", "dt_s = -0.1"),
        ("runs = 200", "runs = 0"),
        ("measurement_noise_diag = [1e-6,", "measurement_noise_diag = [-1e-6,"),
        ("initial_latitude_deg = -28.22", "initial_latitude_deg = 95.0"),
    ] {
        let err = parse_config(&preset_with(from, to));
        assert!(matches!(err, Err(ConfigError::Invalid { .. })), "{to}: {err:?}");
    }
}

fn entrynav(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_entrynav")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn cli_montecarlo_writes_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &preset_with("horizon_s = 400.0", "horizon_s = 2.0"));
    let out = dir.path().join("out");
    let status = entrynav(&["montecarlo", "--config", &cfg, "--runs", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let (_, rows) = read_csv(&out.join("rmse.csv"));
    assert_eq!(rows.len(), 2 * 21);
}

#[test]
fn cli_simulate_honours_mode_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &preset_with("horizon_s = 400.0", "horizon_s = 1.0"));
    let out = dir.path().join("out");
    let status = entrynav(&[
        "simulate", "--config", &cfg, "--mode", "adekf", "--weights", "0.5,0.5", "--run-index", "2",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(out.join("trajectory_adekf_run2.csv").is_file());
    assert!(!out.join("trajectory_ekf_run2.csv").exists());
}

#[test]
fn cli_exit_codes() {
    assert_eq!(entrynav(&["validate"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "seed = 1\n");
    assert_eq!(entrynav(&["validate", "--config", &bad]).status.code(), Some(2));
    assert_eq!(entrynav(&["montecarlo", "--runs", "0"]).status.code(), Some(2));
    assert_eq!(entrynav(&["simulate", "--dt", "0.3"]).status.code(), Some(2));
    assert_eq!(entrynav(&["montecarlo", "--weights", "-1,0"]).status.code(), Some(2));
    assert_eq!(entrynav(&["montecarlo", "--weights", "1,2,3"]).status.code(), Some(2));

    // an estimate started 108° of latitude away from the truth cannot recover
    let lost = preset_with("initial_latitude_deg = -28.22", "initial_latitude_deg = 80.0")
        .replace("horizon_s = 400.0", "horizon_s = 5.0");
    let lost = write_config(dir.path(), &lost);
    let out = dir.path().join("lost");
    let run = entrynav(&["simulate", "--config", &lost, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(3));
}
