//! CSV output for trajectories and campaign statistics.
//!
//! Numbers are written with 12 significant digits in scientific notation,
//! independent of locale.

use std::fs::File;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dynamics::STATE_DIM;
use crate::montecarlo::{three_sigma_capture, MonteCarloReport, RunHistory};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Column stems in state order, with units.
pub const STATE_COLUMNS: [&str; STATE_DIM] =
    ["r_m", "v_m_s", "fpa_rad", "lon_rad", "lat_rad", "azimuth_rad"];
pub const PARAM_NAMES: [&str; 2] = ["c1", "c2"];

/// 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: Vec<String>) -> Result<Self, ReportError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        let mut table = Table {
            writer: csv::Writer::from_writer(file),
            path,
        };
        table.row(header)?;
        Ok(table)
    }

    fn row<I, S>(&mut self, fields: I) -> Result<(), ReportError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|source| ReportError::Csv {
                path: self.path.clone(),
                source,
            })
    }

    fn finish(mut self) -> Result<PathBuf, ReportError> {
        self.writer.flush().map_err(|source| ReportError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(self.path)
    }
}

fn header(prefix: &[&str], stems: impl IntoIterator<Item = String>) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain(stems)
        .collect()
}

fn states(prefix: &str) -> impl Iterator<Item = String> + '_ {
    STATE_COLUMNS.iter().map(move |s| format!("{prefix}{s}"))
}

fn per_param(prefix: &str) -> Vec<String> {
    PARAM_NAMES
        .iter()
        .flat_map(|p| STATE_COLUMNS.iter().map(move |s| format!("{prefix}{p}_{s}")))
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Campaign statistics: `rmse.csv`, `nme.csv`, `capture.csv`,
/// `mean_sensitivity.csv`, `mean_perturbation.csv`, `summary.csv`.
/// Rows are in mode order, then epoch order.
pub fn emit_report(report: &MonteCarloReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    ensure_dir(dir)?;
    let mut rmse = Table::create(dir, "rmse.csv", header(&["mode", "epoch_s"], states("")))?;
    let mut nme = Table::create(
        dir,
        "nme.csv",
        header(&["mode", "epoch_s"], states("").chain(["threshold".to_string()])),
    )?;
    let mut capture = Table::create(dir, "capture.csv", header(&["mode"], states("")))?;
    let mut sens = Table::create(
        dir,
        "mean_sensitivity.csv",
        header(&["mode", "epoch_s"], per_param("abs_s_")),
    )?;
    let mut pert = Table::create(
        dir,
        "mean_perturbation.csv",
        header(&["mode", "epoch_s"], per_param("abs_gamma_")),
    )?;
    let mut summary = Table::create(
        dir,
        "summary.csv",
        [
            "mode",
            "seed",
            "runs",
            "runs_used",
            "runs_diverged",
            "nme_threshold",
            "worst_stationarity",
            "worst_asymmetry",
            "min_eigenvalue_ratio",
        ]
            .map(String::from)
            .to_vec(),
    )?;

    for stats in &report.modes {
        let mode = stats.mode.name().to_string();
        for (k, t) in report.times.iter().enumerate() {
            let lead = [mode.clone(), fmt_num(*t)];
            rmse.row(lead.iter().cloned().chain(stats.rmse[k].iter().map(|v| fmt_num(*v))))?;
            nme.row(
                lead.iter()
                    .cloned()
                    .chain(stats.nme[k].iter().map(|v| fmt_num(*v)))
                    .chain([fmt_num(stats.nme_threshold)]),
            )?;
            sens.row(lead.iter().cloned().chain(stats.mean_abs_sensitivity[k].iter().map(|v| fmt_num(*v))))?;
            pert.row(lead.iter().cloned().chain(stats.mean_abs_perturbation[k].iter().map(|v| fmt_num(*v))))?;
        }
        capture.row([mode.clone()].into_iter().chain(stats.capture.iter().map(|v| fmt_num(*v))))?;
        summary.row([
            mode,
            report.seed.to_string(),
            report.runs.to_string(),
            stats.runs_used.to_string(),
            stats.runs_diverged.to_string(),
            fmt_num(stats.nme_threshold),
            fmt_num(stats.worst_stationarity),
            fmt_num(stats.worst_covariance.asymmetry),
            fmt_num(stats.worst_covariance.min_eigenvalue_ratio),
        ])?;
    }
    [rmse, nme, capture, sens, pert, summary]
        .into_iter()
        .map(Table::finish)
        .collect()
}

/// Per-run traces: `trajectory_<tag>.csv`, `sensitivity_<tag>.csv`,
/// `perturbation_<tag>.csv` and `errors_<tag>.csv` (errors with 3σ bounds),
/// where `tag` is `<mode>_run<index>`.
pub fn emit_histories(histories: &[RunHistory], dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for h in histories {
        let tag = format!("{}_run{}", h.mode.name(), h.run_index);
        let mut traj = Table::create(
            dir,
            &format!("trajectory_{tag}.csv"),
            header(&["epoch_s"], states("truth_").chain(states("est_")).chain(states("sigma_"))),
        )?;
        let mut sens = Table::create(dir, &format!("sensitivity_{tag}.csv"), header(&["epoch_s"], per_param("s_")))?;
        let mut pert = Table::create(
            dir,
            &format!("perturbation_{tag}.csv"),
            header(&["epoch_s"], per_param("gamma_")),
        )?;
        let mut errs = Table::create(
            dir,
            &format!("errors_{tag}.csv"),
            header(&["epoch_s"], states("err_").chain(states("bound3_"))),
        )?;
        for k in 0..h.len() {
            let t = fmt_num(h.times[k]);
            let sigma = h.covariance_diag[k].map(|v| v.max(0.0).sqrt());
            traj.row(
                [t.clone()].into_iter().chain(
                    h.truth[k]
                        .iter()
                        .chain(h.estimate[k].iter())
                        .chain(sigma.iter())
                        .map(|v| fmt_num(*v)),
                ),
            )?;
            sens.row([t.clone()].into_iter().chain(h.sensitivity[k].iter().map(|v| fmt_num(*v))))?;
            pert.row([t.clone()].into_iter().chain(h.perturbation[k].iter().map(|v| fmt_num(*v))))?;
            errs.row(
                [t].into_iter().chain(
                    h.error(k)
                        .iter()
                        .copied()
                        .chain(sigma.iter().map(|s| 3.0 * s))
                        .map(fmt_num),
                ),
            )?;
        }
        for table in [traj, sens, pert, errs] {
            written.push(table.finish()?);
        }
    }
    if !histories.is_empty() {
        let mut cap = Table::create(dir, "capture_runs.csv", header(&["mode", "run"], states("")))?;
        for h in histories {
            cap.row(
                [h.mode.name().to_string(), h.run_index.to_string()]
                    .into_iter()
                    .chain(three_sigma_capture(h).iter().map(|v| fmt_num(*v))),
            )?;
        }
        written.push(cap.finish()?);
    }
    Ok(written)
}

/// Writes both the campaign statistics and any per-run histories.
pub fn emit_reports(
    report: &MonteCarloReport,
    histories: &[RunHistory],
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let mut files = emit_report(report, dir)?;
    files.extend(emit_histories(histories, dir)?);
    Ok(files)
}
