//! Truth simulation, paired filter runs and Monte Carlo statistics.
//!
//! Each run draws its parameters and its measurement noise from two ChaCha
//! streams keyed by the run index, so a run's realization does not depend on
//! how many runs precede it or on the number of worker threads. All filter
//! modes of one run consume the same measurement sequence.

use nalgebra::{DVector, Matrix3, Matrix6x2, SymmetricEigen, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{rk4_step_vector, EntryState, ModelError, UncertainParams, PARAM_DIM};
use crate::filter::{
    gain_stationarity_residual, measurement_update, perturbation_matrix, time_update,
    CovarianceHealth, FilterError, FilterState, GainMode, GainProblem, SensitivityWeights,
};
use crate::measurement::{measurement_predict, MeasurementBundle};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("truth trajectory of run {run} failed at t = {epoch} s: {source}")]
    Truth {
        run: usize,
        epoch: f64,
        source: ModelError,
    },
    #[error("measurement sequence has {got} epochs, expected {expected}")]
    EpochGrid { got: usize, expected: usize },
    #[error("no usable {mode} runs: every run diverged")]
    EmptyReport { mode: GainMode },
    #[error("nonpositive variance {variance} for state {state} at epoch {epoch} of run {run}")]
    InvalidCovariance {
        run: usize,
        epoch: usize,
        state: usize,
        variance: f64,
    },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Generator for run `run_index`'s parameter draws.
pub fn param_rng(seed: u64, run_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * run_index as u64);
    rng
}

/// Generator for run `run_index`'s measurement noise.
pub fn noise_rng(seed: u64, run_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * run_index as u64 + 1);
    rng
}

/// Independent draws `c_i ~ U(−w_i, w_i)`.
pub fn sample_params(rng: &mut impl Rng, half_widths: &[f64; PARAM_DIM]) -> UncertainParams {
    let mut draw = |hw: f64| rng.random_range(-hw..=hw);
    let density = draw(half_widths[0]);
    let lift_to_drag = draw(half_widths[1]);
    UncertainParams::new(density, lift_to_drag)
}

/// Truth trajectory and the measurements it produces. `measurements[k - 1]`
/// belongs to epoch `k`; epoch 0 carries no measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRun {
    pub params: UncertainParams,
    pub states: Vec<EntryState>,
    pub measurements: Vec<MeasurementBundle>,
}

/// `L` with `L Lᵀ = cov` for a PSD covariance.
fn psd_sqrt(cov: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Matrix3::from_diagonal(&roots)
}

pub fn simulate_truth(
    cfg: &ScenarioConfig,
    params: UncertainParams,
    rng: &mut impl Rng,
    run: usize,
) -> Result<TruthRun> {
    let steps = cfg.steps();
    let accel_sqrt = psd_sqrt(&cfg.imu.accel_noise_cov);
    let range_sigma = Vector3::new(
        cfg.measurement_noise[3].sqrt(),
        cfg.measurement_noise[4].sqrt(),
        cfg.measurement_noise[5].sqrt(),
    );

    let mut states = Vec::with_capacity(steps + 1);
    let mut measurements = Vec::with_capacity(steps);
    let mut x = cfg.truth_initial.to_vector();
    states.push(cfg.truth_initial);
    for k in 1..=steps {
        let t = cfg.epoch_time(k);
        x = rk4_step_vector(&x, &params, cfg.dt, &cfg.truth_vehicle, &cfg.planet).map_err(
            |source| HarnessError::Truth {
                run,
                epoch: t,
                source,
            },
        )?;
        let state = EntryState::from_vector(&x);
        let exact = measurement_predict(
            &state,
            &params,
            t,
            &cfg.beacons,
            &cfg.truth_vehicle,
            &cfg.planet,
        );
        let mut normals = [0.0; 6];
        for n in normals.iter_mut() {
            *n = rng.sample(StandardNormal);
        }
        let accel_noise = accel_sqrt * Vector3::new(normals[0], normals[1], normals[2]);
        let range_noise = range_sigma.component_mul(&Vector3::new(normals[3], normals[4], normals[5]));
        measurements.push(MeasurementBundle {
            epoch: t,
            accel: exact.fixed_rows::<3>(0) + cfg.imu.accel_bias + accel_noise,
            ranges: exact.fixed_rows::<3>(3) + range_noise,
        });
        states.push(state);
    }
    Ok(TruthRun {
        params,
        states,
        measurements,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochDiagnostics {
    /// Relative norm of the cost gradient at the applied gain.
    pub stationarity: f64,
    pub covariance: CovarianceHealth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub epoch: f64,
    pub message: String,
}

/// Everything recorded by one filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub mode: GainMode,
    pub run_index: usize,
    pub params: UncertainParams,
    pub times: Vec<f64>,
    pub truth: Vec<Vector6<f64>>,
    pub estimate: Vec<Vector6<f64>>,
    pub covariance_diag: Vec<Vector6<f64>>,
    pub sensitivity: Vec<Matrix6x2<f64>>,
    pub perturbation: Vec<Matrix6x2<f64>>,
    /// `z − h(x̂⁻)`; zero at epoch 0.
    pub innovation: Vec<Vector6<f64>>,
    pub diagnostics: Vec<EpochDiagnostics>,
    pub divergence: Option<Divergence>,
}

impl RunHistory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn error(&self, k: usize) -> Vector6<f64> {
        self.estimate[k] - self.truth[k]
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    fn record(
        &mut self,
        truth: &EntryState,
        state: &FilterState,
        sigmas: &[f64; PARAM_DIM],
        innovation: Vector6<f64>,
        stationarity: f64,
    ) -> std::result::Result<(), FilterError> {
        let sensitivity = Matrix6x2::from_column_slice(state.sensitivity.as_slice());
        let perturbation = perturbation_matrix(&state.sensitivity, sigmas)?;
        self.times.push(state.epoch);
        self.truth.push(truth.to_vector());
        self.estimate.push(Vector6::from_column_slice(state.estimate.as_slice()));
        self.covariance_diag
            .push(Vector6::from_iterator(state.covariance.diagonal().iter().copied()));
        self.sensitivity.push(sensitivity);
        self.perturbation
            .push(Matrix6x2::from_column_slice(perturbation.values.as_slice()));
        self.innovation.push(innovation);
        self.diagnostics.push(EpochDiagnostics {
            stationarity,
            covariance: state.covariance_health(),
        });
        Ok(())
    }
}

/// Runs one filter over a truth realization. Filter failures do not abort:
/// the history is truncated and flagged.
pub fn run_filter(cfg: &ScenarioConfig, truth: &TruthRun, mode: GainMode, run_index: usize) -> Result<RunHistory> {
    let steps = cfg.steps();
    if truth.measurements.len() != steps || truth.states.len() != steps + 1 {
        return Err(HarnessError::EpochGrid {
            got: truth.measurements.len(),
            expected: steps,
        });
    }
    let weights = match mode {
        GainMode::Ekf => SensitivityWeights::zeros(PARAM_DIM),
        _ => SensitivityWeights::diagonal(&cfg.weights)?,
    };
    let process = cfg.process_model();
    let sensor = cfg.measurement_model();

    let mut history = RunHistory {
        mode,
        run_index,
        params: truth.params,
        times: Vec::with_capacity(steps + 1),
        truth: Vec::with_capacity(steps + 1),
        estimate: Vec::with_capacity(steps + 1),
        covariance_diag: Vec::with_capacity(steps + 1),
        sensitivity: Vec::with_capacity(steps + 1),
        perturbation: Vec::with_capacity(steps + 1),
        innovation: Vec::with_capacity(steps + 1),
        diagnostics: Vec::with_capacity(steps + 1),
        divergence: None,
    };

    let mut state = FilterState::new(
        0.0,
        DVector::from_column_slice(cfg.filter_initial.to_vector().as_slice()),
        cfg.initial_covariance_matrix(),
        PARAM_DIM,
    )?;
    history.record(&truth.states[0], &state, &cfg.param_sigmas, Vector6::zeros(), 0.0)?;

    for k in 1..=steps {
        let t = cfg.epoch_time(k);
        let step = |state: &FilterState| -> std::result::Result<(FilterState, Vector6<f64>, f64), FilterError> {
            let mut prior = time_update(state, &process, cfg.dt)?;
            prior.epoch = t;
            let z = DVector::from_column_slice(truth.measurements[k - 1].to_vector().as_slice());
            let update = measurement_update(&prior, &sensor, &z, mode, &weights)?;
            let lin = &update.linearization;
            let residual = gain_stationarity_residual(
                &update.gain,
                &GainProblem {
                    p_prior: &prior.covariance,
                    h: &lin.state_jacobian,
                    y: &lin.noise_coeff,
                    r: &lin.noise_cov,
                    s_prior: &prior.sensitivity,
                    gamma: &update.gamma,
                    weights: &weights.diag,
                },
            )?;
            let innovation = Vector6::from_column_slice(update.innovation.as_slice());
            Ok((update.posterior, innovation, residual.relative()))
        };
        match step(&state).and_then(|(posterior, innovation, stationarity)| {
            history.record(&truth.states[k], &posterior, &cfg.param_sigmas, innovation, stationarity)?;
            Ok(posterior)
        }) {
            Ok(posterior) => state = posterior,
            Err(e) => {
                history.divergence = Some(Divergence {
                    epoch: t,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(history)
}

/// One truth realization filtered by several gain policies.
#[derive(Debug, Clone)]
pub struct PairedRun {
    pub truth: TruthRun,
    pub histories: Vec<RunHistory>,
}

/// Run `run_index` of a campaign. Parameters come from `cfg.fixed_params` when
/// set, otherwise from the run's parameter stream.
pub fn run_paired(cfg: &ScenarioConfig, run_index: usize, modes: &[GainMode]) -> Result<PairedRun> {
    let params = match cfg.fixed_params {
        Some(c) => c,
        None => sample_params(&mut param_rng(cfg.seed, run_index), &cfg.param_half_widths),
    };
    let truth = simulate_truth(cfg, params, &mut noise_rng(cfg.seed, run_index), run_index)?;
    let histories = modes
        .iter()
        .map(|mode| run_filter(cfg, &truth, *mode, run_index))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairedRun { truth, histories })
}

/// Fraction of epochs with `|e_i| ≤ 3 σ_i`, per state.
pub fn three_sigma_capture(history: &RunHistory) -> Vector6<f64> {
    if history.is_empty() {
        return Vector6::zeros();
    }
    let mut inside = Vector6::zeros();
    for k in 0..history.len() {
        let e = history.error(k);
        for i in 0..6 {
            if e[i].abs() <= 3.0 * history.covariance_diag[k][i].max(0.0).sqrt() {
                inside[i] += 1.0;
            }
        }
    }
    inside / history.len() as f64
}

/// `1.96/√M`: two-sided 95% bound on the mean of `M` standardized errors.
pub fn nme_threshold(runs: usize) -> f64 {
    1.96 / (runs as f64).sqrt()
}

/// Running sums over the runs of one gain mode.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    mode: GainMode,
    runs: usize,
    diverged: usize,
    sum_sq_error: Vec<Vector6<f64>>,
    sum_std_error: Vec<Vector6<f64>>,
    sum_capture: Vector6<f64>,
    sum_abs_sensitivity: Vec<Matrix6x2<f64>>,
    sum_abs_perturbation: Vec<Matrix6x2<f64>>,
    worst_stationarity: f64,
    worst_covariance: CovarianceHealth,
}

impl StatsAccumulator {
    pub fn new(mode: GainMode, epochs: usize) -> Self {
        Self {
            mode,
            runs: 0,
            diverged: 0,
            sum_sq_error: vec![Vector6::zeros(); epochs],
            sum_std_error: vec![Vector6::zeros(); epochs],
            sum_capture: Vector6::zeros(),
            sum_abs_sensitivity: vec![Matrix6x2::zeros(); epochs],
            sum_abs_perturbation: vec![Matrix6x2::zeros(); epochs],
            worst_stationarity: 0.0,
            worst_covariance: CovarianceHealth {
                asymmetry: 0.0,
                min_eigenvalue_ratio: f64::INFINITY,
            },
        }
    }

    /// Adds one run. Diverged or truncated runs only contribute their
    /// per-epoch diagnostics.
    pub fn push(&mut self, history: &RunHistory) -> Result<()> {
        for d in &history.diagnostics {
            self.worst_stationarity = self.worst_stationarity.max(d.stationarity);
            let w = &mut self.worst_covariance;
            w.asymmetry = w.asymmetry.max(d.covariance.asymmetry);
            w.min_eigenvalue_ratio = w.min_eigenvalue_ratio.min(d.covariance.min_eigenvalue_ratio);
        }
        if history.diverged() || history.len() != self.sum_sq_error.len() {
            self.diverged += 1;
            return Ok(());
        }
        let mut standardized = Vec::with_capacity(history.len());
        for k in 0..history.len() {
            let var = history.covariance_diag[k];
            if let Some(i) = var.iter().position(|v| !(*v > 0.0)) {
                return Err(HarnessError::InvalidCovariance {
                    run: history.run_index,
                    epoch: k,
                    state: i,
                    variance: var[i],
                });
            }
            standardized.push(history.error(k).component_div(&var.map(f64::sqrt)));
        }
        for (k, z) in standardized.into_iter().enumerate() {
            let e = history.error(k);
            self.sum_sq_error[k] += e.component_mul(&e);
            self.sum_std_error[k] += z;
            self.sum_abs_sensitivity[k] += history.sensitivity[k].abs();
            self.sum_abs_perturbation[k] += history.perturbation[k].abs();
        }
        self.sum_capture += three_sigma_capture(history);
        self.runs += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<ModeStatistics> {
        if self.runs == 0 {
            return Err(HarnessError::EmptyReport { mode: self.mode });
        }
        let m = self.runs as f64;
        Ok(ModeStatistics {
            mode: self.mode,
            runs_used: self.runs,
            runs_diverged: self.diverged,
            rmse: self.sum_sq_error.iter().map(|s| (s / m).map(f64::sqrt)).collect(),
            nme: self.sum_std_error.iter().map(|s| s / m).collect(),
            nme_threshold: nme_threshold(self.runs),
            capture: self.sum_capture / m,
            mean_abs_sensitivity: self.sum_abs_sensitivity.iter().map(|s| s / m).collect(),
            mean_abs_perturbation: self.sum_abs_perturbation.iter().map(|s| s / m).collect(),
            worst_stationarity: self.worst_stationarity,
            worst_covariance: self.worst_covariance,
        })
    }
}

/// Campaign statistics for one gain mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeStatistics {
    pub mode: GainMode,
    pub runs_used: usize,
    pub runs_diverged: usize,
    pub rmse: Vec<Vector6<f64>>,
    /// Mean standardized error per epoch and state.
    pub nme: Vec<Vector6<f64>>,
    pub nme_threshold: f64,
    /// Mean over runs of the per-run 3σ capture fraction.
    pub capture: Vector6<f64>,
    pub mean_abs_sensitivity: Vec<Matrix6x2<f64>>,
    pub mean_abs_perturbation: Vec<Matrix6x2<f64>>,
    /// Largest relative gain-stationarity residual over all epochs and runs.
    pub worst_stationarity: f64,
    /// Largest asymmetry and smallest eigenvalue ratio over all epochs and runs.
    pub worst_covariance: CovarianceHealth,
}

impl ModeStatistics {
    pub fn nme_pass(&self, k: usize) -> [bool; 6] {
        std::array::from_fn(|i| self.nme[k][i].abs() <= self.nme_threshold)
    }
}

fn accumulate(histories: &[RunHistory], mode: GainMode) -> Result<ModeStatistics> {
    let selected: Vec<_> = histories.iter().filter(|h| h.mode == mode).collect();
    let epochs = selected
        .iter()
        .filter(|h| !h.diverged())
        .map(|h| h.len())
        .max()
        .unwrap_or(0);
    let mut acc = StatsAccumulator::new(mode, epochs);
    for h in selected {
        acc.push(h)?;
    }
    acc.finish()
}

/// `RMSE_i(k) = sqrt(mean_m e_i(k)²)` over the non-diverged runs of `mode`.
pub fn rmse(histories: &[RunHistory], mode: GainMode) -> Result<Vec<Vector6<f64>>> {
    Ok(accumulate(histories, mode)?.rmse)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmeResult {
    pub statistic: Vec<Vector6<f64>>,
    pub threshold: f64,
    pub pass: Vec<[bool; 6]>,
}

/// Normalized mean error test: the mean over runs of `e_i / sqrt(P_ii)`,
/// compared against `1.96/√M`. Meaningful for `M ≥ 30`.
pub fn nme_test(histories: &[RunHistory], mode: GainMode) -> Result<NmeResult> {
    let stats = accumulate(histories, mode)?;
    let pass = (0..stats.nme.len()).map(|k| stats.nme_pass(k)).collect();
    Ok(NmeResult {
        statistic: stats.nme,
        threshold: stats.nme_threshold,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub seed: u64,
    pub runs: usize,
    pub times: Vec<f64>,
    pub modes: Vec<ModeStatistics>,
    pub params: Vec<UncertainParams>,
}

impl MonteCarloReport {
    pub fn mode(&self, mode: GainMode) -> Option<&ModeStatistics> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

const CHUNK: usize = 32;

/// Runs `cfg.runs` paired runs in parallel and reduces them in run order.
pub fn run_campaign(cfg: &ScenarioConfig, modes: &[GainMode]) -> Result<MonteCarloReport> {
    let epochs = cfg.epoch_count();
    let mut accumulators: Vec<_> = modes.iter().map(|m| StatsAccumulator::new(*m, epochs)).collect();
    let mut params = Vec::with_capacity(cfg.runs);
    let indices: Vec<usize> = (0..cfg.runs).collect();
    for chunk in indices.chunks(CHUNK) {
        let results: Vec<Result<PairedRun>> = chunk
            .par_iter()
            .map(|&i| run_paired(cfg, i, modes))
            .collect();
        for paired in results {
            let paired = paired?;
            params.push(paired.truth.params);
            for (acc, history) in accumulators.iter_mut().zip(&paired.histories) {
                acc.push(history)?;
            }
        }
    }
    let modes = accumulators
        .into_iter()
        .map(StatsAccumulator::finish)
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloReport {
        seed: cfg.seed,
        runs: cfg.runs,
        times: (0..epochs).map(|k| cfg.epoch_time(k)).collect(),
        modes,
        params,
    })
}

/// Named single-scenario and campaign settings behind each reproduced figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigurePreset {
    /// Sensitivity to density: `c = (7.5%, 0)`, `W = diag(0.01, 0)`.
    DensitySensitivity,
    /// Sensitivity to lift-to-drag ratio: `c = (0, 5%)`, `W = diag(0, 0.1)`.
    LiftToDragSensitivity,
    /// Perturbation traces: `c = (7.5%, −5%)`, `W = diag(0.01, 0.1)`.
    Perturbation,
    /// Errors against 3σ bounds, same settings as `Perturbation`.
    ErrorBounds,
    /// Monte Carlo RMSE and NME with sampled parameters.
    Campaign,
}

impl FigurePreset {
    pub const ALL: [FigurePreset; 5] = [
        FigurePreset::DensitySensitivity,
        FigurePreset::LiftToDragSensitivity,
        FigurePreset::Perturbation,
        FigurePreset::ErrorBounds,
        FigurePreset::Campaign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigurePreset::DensitySensitivity => "fig2_density_sensitivity",
            FigurePreset::LiftToDragSensitivity => "fig3_ldr_sensitivity",
            FigurePreset::Perturbation => "fig4_perturbation",
            FigurePreset::ErrorBounds => "fig5_error_bounds",
            FigurePreset::Campaign => "fig6_fig7_campaign",
        }
    }

    /// `(fixed parameters, weights)`
    pub fn settings(self) -> (Option<UncertainParams>, [f64; PARAM_DIM]) {
        match self {
            FigurePreset::DensitySensitivity => (Some(UncertainParams::new(0.075, 0.0)), [0.01, 0.0]),
            FigurePreset::LiftToDragSensitivity => (Some(UncertainParams::new(0.0, 0.05)), [0.0, 0.1]),
            FigurePreset::Perturbation | FigurePreset::ErrorBounds => {
                (Some(UncertainParams::new(0.075, -0.05)), [0.01, 0.1])
            }
            FigurePreset::Campaign => (None, [0.01, 0.1]),
        }
    }

    /// `base` with this preset's parameters and weights applied.
    pub fn apply(self, base: &ScenarioConfig) -> ScenarioConfig {
        let (fixed, weights) = self.settings();
        ScenarioConfig {
            fixed_params: fixed,
            weights,
            ..base.clone()
        }
    }
}
