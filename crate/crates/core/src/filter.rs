//! Extended Kalman filter recursions with parameter sensitivity propagation.
//!
//! Three gain policies share one recursion:
//!
//! * `Ekf` - the variance-optimal gain.
//! * `Adekf` - the closed-form desensitized gain obtained from a cost that
//!   penalizes `Tr(S W Sᵀ)` with a diagonal `W` (one scalar per parameter).
//! * `Dekf` - the desensitized gain with one full `n×n` weight per parameter,
//!   found by solving the vectorized linear matrix equation. With `W_i = w_i I`
//!   it reproduces `Adekf`, which makes it a useful oracle.
//!
//! The filter is model agnostic: callers supply linearizations through the
//! [`ProcessModel`] and [`MeasurementModel`] traits. Covariance updates always
//! use the Joseph form because the desensitized gains are not variance optimal.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("dimension mismatch in {context}: {detail}")]
    DimensionMismatch {
        context: &'static str,
        detail: String,
    },
    #[error("numerical divergence at t = {epoch} s: non-finite {what}")]
    Divergence { epoch: f64, what: &'static str },
    #[error("singular innovation matrix (condition estimate {condition:e})")]
    SingularInnovation { condition: f64 },
    #[error("singular desensitized gain system (residual norm {residual:e})")]
    SingularGainSystem { residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model evaluation failed at t = {epoch} s: {message}")]
    Model { epoch: f64, message: String },
}

pub type Result<T> = std::result::Result<T, FilterError>;

fn mismatch(context: &'static str, detail: String) -> FilterError {
    FilterError::DimensionMismatch { context, detail }
}

fn expect_shape(
    context: &'static str,
    name: &str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(mismatch(
            context,
            format!(
                "{name} is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            ),
        ));
    }
    Ok(())
}

/// `(A + Aᵀ) / 2`
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Estimate, covariance and sensitivity matrix at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub epoch: f64,
    pub estimate: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Columns are `∂x̂/∂c_i`.
    pub sensitivity: DMatrix<f64>,
}

/// Symmetry and definiteness figures for a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceHealth {
    /// `‖P − Pᵀ‖ / ‖P‖` (Frobenius).
    pub asymmetry: f64,
    /// Smallest eigenvalue divided by the trace.
    pub min_eigenvalue_ratio: f64,
}

impl CovarianceHealth {
    pub fn of(p: &DMatrix<f64>) -> Self {
        let norm = p.norm();
        let asymmetry = if norm > 0.0 {
            (p - p.transpose()).norm() / norm
        } else {
            0.0
        };
        let trace = p.trace();
        let min_eig = symmetrize(p).symmetric_eigenvalues().min();
        let min_eigenvalue_ratio = if trace > 0.0 { min_eig / trace } else { min_eig };
        Self {
            asymmetry,
            min_eigenvalue_ratio,
        }
    }

    pub fn is_healthy(&self) -> bool {
        self.asymmetry <= 1e-12 && self.min_eigenvalue_ratio >= -1e-12
    }
}

impl FilterState {
    /// Builds a state with a zero sensitivity matrix for `num_params` parameters.
    pub fn new(
        epoch: f64,
        estimate: DVector<f64>,
        covariance: DMatrix<f64>,
        num_params: usize,
    ) -> Result<Self> {
        let n = estimate.len();
        expect_shape("FilterState::new", "covariance", &covariance, n, n)?;
        Ok(Self {
            epoch,
            estimate,
            covariance,
            sensitivity: DMatrix::zeros(n, num_params),
        })
    }

    pub fn dim(&self) -> usize {
        self.estimate.len()
    }

    pub fn num_params(&self) -> usize {
        self.sensitivity.ncols()
    }

    pub fn covariance_health(&self) -> CovarianceHealth {
        CovarianceHealth::of(&self.covariance)
    }

    fn check_finite(&self) -> Result<()> {
        let divergence = |what| FilterError::Divergence {
            epoch: self.epoch,
            what,
        };
        if self.estimate.iter().any(|v| !v.is_finite()) {
            return Err(divergence("state estimate"));
        }
        if self.covariance.iter().any(|v| !v.is_finite()) {
            return Err(divergence("covariance"));
        }
        if self.sensitivity.iter().any(|v| !v.is_finite()) {
            return Err(divergence("sensitivity"));
        }
        Ok(())
    }
}

/// Linearized process model about the current estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessLinearization {
    /// `f(x̂⁺, c̄, 0)`
    pub next_state: DVector<f64>,
    /// `Φ = ∂f/∂x`
    pub state_jacobian: DMatrix<f64>,
    /// `Ψ = ∂f/∂c`
    pub param_jacobian: DMatrix<f64>,
    /// `Γ = ∂f/∂w`
    pub noise_coeff: DMatrix<f64>,
    /// `Q`
    pub noise_cov: DMatrix<f64>,
}

/// Linearized measurement model about the prior estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLinearization {
    /// `h(x̂⁻, c̄, 0)`
    pub predicted: DVector<f64>,
    /// `H = ∂h/∂x`
    pub state_jacobian: DMatrix<f64>,
    /// `Hᶜ = ∂h/∂c`
    pub param_jacobian: DMatrix<f64>,
    /// `Y = ∂h/∂v`
    pub noise_coeff: DMatrix<f64>,
    /// `R`
    pub noise_cov: DMatrix<f64>,
}

pub trait ProcessModel {
    fn linearize(&self, x: &DVector<f64>, t: f64, dt: f64) -> Result<ProcessLinearization>;
}

pub trait MeasurementModel {
    fn linearize(&self, x: &DVector<f64>, t: f64) -> Result<MeasurementLinearization>;
}

/// Sensitivity weights: the diagonal of `W` for the analytic gain and,
/// optionally, one full `n×n` weight per parameter for the linear-solve gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityWeights {
    pub diag: DVector<f64>,
    pub full: Option<Vec<DMatrix<f64>>>,
}

impl SensitivityWeights {
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(FilterError::InvalidArgument(format!(
                "sensitivity weight {w} is not a finite nonnegative number"
            )));
        }
        Ok(Self {
            diag: DVector::from_column_slice(weights),
            full: None,
        })
    }

    pub fn zeros(num_params: usize) -> Self {
        Self {
            diag: DVector::zeros(num_params),
            full: None,
        }
    }

    /// Full weights `W_i`; each must be square, symmetric and PSD.
    pub fn full(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        for (i, w) in blocks.iter().enumerate() {
            if !w.is_square() {
                return Err(FilterError::InvalidArgument(format!(
                    "weight W_{i} is not square"
                )));
            }
            let scale = w.norm().max(f64::MIN_POSITIVE);
            if (w - w.transpose()).norm() > 1e-12 * scale {
                return Err(FilterError::InvalidArgument(format!(
                    "weight W_{i} is not symmetric"
                )));
            }
            if w.nrows() > 0 && w.clone().symmetric_eigenvalues().min() < -1e-12 * scale {
                return Err(FilterError::InvalidArgument(format!(
                    "weight W_{i} is not positive semi-definite"
                )));
            }
        }
        // the diagonal view is only meaningful for scaled identities
        let diag = DVector::from_iterator(
            blocks.len(),
            blocks.iter().map(|w| if w.nrows() > 0 { w[(0, 0)] } else { 0.0 }),
        );
        Ok(Self {
            diag,
            full: Some(blocks),
        })
    }

    /// Expands the diagonal weights into `W_i = w_i·I_n`.
    pub fn identity_blocks(&self, n: usize) -> Vec<DMatrix<f64>> {
        self.diag
            .iter()
            .map(|w| DMatrix::identity(n, n) * *w)
            .collect()
    }

    fn blocks(&self, n: usize) -> Vec<DMatrix<f64>> {
        match &self.full {
            Some(b) => b.clone(),
            None => self.identity_blocks(n),
        }
    }
}

/// Which gain the measurement update uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GainMode {
    Ekf,
    Adekf,
    Dekf,
}

impl GainMode {
    pub fn name(self) -> &'static str {
        match self {
            GainMode::Ekf => "ekf",
            GainMode::Adekf => "adekf",
            GainMode::Dekf => "dekf",
        }
    }
}

impl std::fmt::Display for GainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Propagates estimate, covariance and sensitivity across one step.
pub fn time_update(state: &FilterState, model: &impl ProcessModel, dt: f64) -> Result<FilterState> {
    if !(dt > 0.0) {
        return Err(FilterError::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let n = state.dim();
    let l = state.num_params();
    let lin = model.linearize(&state.estimate, state.epoch, dt)?;
    const CTX: &str = "time_update";
    if lin.next_state.len() != n {
        return Err(mismatch(CTX, format!("next state has {} entries", lin.next_state.len())));
    }
    expect_shape(CTX, "state jacobian", &lin.state_jacobian, n, n)?;
    expect_shape(CTX, "param jacobian", &lin.param_jacobian, n, l)?;
    expect_shape(CTX, "noise coefficient", &lin.noise_coeff, n, lin.noise_cov.nrows())?;
    expect_shape(
        CTX,
        "process noise",
        &lin.noise_cov,
        lin.noise_coeff.ncols(),
        lin.noise_coeff.ncols(),
    )?;

    let phi = &lin.state_jacobian;
    let gamma = &lin.noise_coeff;
    let covariance = phi * &state.covariance * phi.transpose()
        + gamma * &lin.noise_cov * gamma.transpose();
    let sensitivity = phi * &state.sensitivity + &lin.param_jacobian;

    let prior = FilterState {
        epoch: state.epoch + dt,
        estimate: lin.next_state,
        covariance: symmetrize(&covariance),
        sensitivity,
    };
    prior.check_finite()?;
    Ok(prior)
}

/// `γ = H S⁻ + Hᶜ`
pub fn gamma_matrix(
    h: &DMatrix<f64>,
    s_prior: &DMatrix<f64>,
    hc: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    const CTX: &str = "gamma_matrix";
    if h.ncols() != s_prior.nrows() {
        return Err(mismatch(
            CTX,
            format!("H has {} columns but S has {} rows", h.ncols(), s_prior.nrows()),
        ));
    }
    expect_shape(CTX, "Hc", hc, h.nrows(), s_prior.ncols())?;
    Ok(h * s_prior + hc)
}

/// `H P Hᵀ + Y R Yᵀ`
pub fn innovation_covariance(
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    h * p * h.transpose() + y * r * y.transpose()
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let eig = symmetrize(a).symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `K = N A⁻¹` through a Cholesky factorization of the symmetric `A`.
fn solve_gain(numerator: &DMatrix<f64>, innovation: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = symmetrize(&innovation);
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| FilterError::SingularInnovation {
            condition: condition_estimate(&a),
        })?;
    Ok(chol.solve(&numerator.transpose()).transpose())
}

fn check_gain_inputs(
    ctx: &'static str,
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(usize, usize)> {
    let n = p.nrows();
    let m = h.nrows();
    expect_shape(ctx, "P", p, n, n)?;
    expect_shape(ctx, "H", h, m, n)?;
    expect_shape(ctx, "Y", y, m, r.nrows())?;
    expect_shape(ctx, "R", r, y.ncols(), y.ncols())?;
    Ok((n, m))
}

/// Variance-optimal gain `K = P Hᵀ (H P Hᵀ + Y R Yᵀ)⁻¹`.
pub fn ekf_gain(
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_gain_inputs("ekf_gain", p, h, y, r)?;
    let pht = p * h.transpose();
    let innovation = h * &pht + y * r * y.transpose();
    solve_gain(&pht, innovation)
}

/// Closed-form desensitized gain
/// `K = (P Hᵀ + S W γᵀ)(H P Hᵀ + γ W γᵀ + Y R Yᵀ)⁻¹` with diagonal `W`.
///
/// With `W = 0` every extra term is an exact zero, so the result is
/// bit-identical to [`ekf_gain`].
#[allow(clippy::too_many_arguments)]
pub fn adekf_gain(
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s_prior: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    weights: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    const CTX: &str = "adekf_gain";
    let (n, m) = check_gain_inputs(CTX, p, h, y, r)?;
    let l = weights.len();
    expect_shape(CTX, "S", s_prior, n, l)?;
    expect_shape(CTX, "gamma", gamma, m, l)?;
    let w = DMatrix::from_diagonal(weights);
    let pht = p * h.transpose();
    let numerator = &pht + s_prior * &w * gamma.transpose();
    let innovation = h * &pht + gamma * &w * gamma.transpose() + y * r * y.transpose();
    solve_gain(&numerator, innovation)
}

/// Desensitized gain with full weights, from the linear matrix equation
/// `K A + Σ W_i K γ_i γ_iᵀ = P Hᵀ + Σ W_i s_i γ_iᵀ`, `A = H P Hᵀ + Y R Yᵀ`.
///
/// The equation is vectorized column-major into an `(n·m)×(n·m)` dense system.
#[allow(clippy::too_many_arguments)]
pub fn dekf_gain_linear(
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s_prior: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    weights: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    const CTX: &str = "dekf_gain_linear";
    let (n, m) = check_gain_inputs(CTX, p, h, y, r)?;
    let l = weights.len();
    expect_shape(CTX, "S", s_prior, n, l)?;
    expect_shape(CTX, "gamma", gamma, m, l)?;
    for w in weights {
        expect_shape(CTX, "W_i", w, n, n)?;
    }

    let a = innovation_covariance(p, h, y, r);
    let mut rhs = p * h.transpose();
    let mut system = a.transpose().kronecker(&DMatrix::<f64>::identity(n, n));
    for (i, w) in weights.iter().enumerate() {
        let g = gamma.column(i);
        let ggt = g * g.transpose();
        system += ggt.transpose().kronecker(w);
        rhs += w * s_prior.column(i) * g.transpose();
    }
    let b = DVector::from_column_slice(rhs.as_slice());

    let solution = system.clone().lu().solve(&b).filter(|x| x.iter().all(|v| v.is_finite()));
    match solution {
        Some(x) => Ok(DMatrix::from_column_slice(n, m, x.as_slice())),
        None => {
            let residual = system
                .clone()
                .svd(true, true)
                .solve(&b, 0.0)
                .map(|x| (&system * x - &b).norm())
                .unwrap_or(f64::INFINITY);
            Err(FilterError::SingularGainSystem { residual })
        }
    }
}

/// Joseph-form covariance `(I − K H) P (I − K H)ᵀ + K Y R Yᵀ Kᵀ`, valid for any gain.
pub fn joseph_covariance(
    p: &DMatrix<f64>,
    k: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = p.nrows();
    let ikh = DMatrix::<f64>::identity(n, n) - k * h;
    let kyr = k * y;
    symmetrize(&(&ikh * p * ikh.transpose() + &kyr * r * kyr.transpose()))
}

/// Result of one measurement update.
#[derive(Debug, Clone)]
pub struct MeasurementUpdate {
    pub posterior: FilterState,
    pub gain: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    /// `z − h(x̂⁻)`
    pub innovation: DVector<f64>,
    pub linearization: MeasurementLinearization,
}

/// Applies an arbitrary gain to a prior state.
pub fn apply_gain(
    prior: &FilterState,
    lin: &MeasurementLinearization,
    gamma: &DMatrix<f64>,
    innovation: &DVector<f64>,
    gain: &DMatrix<f64>,
) -> Result<FilterState> {
    expect_shape(
        "apply_gain",
        "K",
        gain,
        prior.dim(),
        lin.state_jacobian.nrows(),
    )?;
    let posterior = FilterState {
        epoch: prior.epoch,
        estimate: &prior.estimate + gain * innovation,
        covariance: joseph_covariance(
            &prior.covariance,
            gain,
            &lin.state_jacobian,
            &lin.noise_coeff,
            &lin.noise_cov,
        ),
        // ∂K/∂c is taken as zero
        sensitivity: &prior.sensitivity - gain * gamma,
    };
    posterior.check_finite()?;
    Ok(posterior)
}

/// Linearizes the measurement, computes the gain for `mode` and applies it.
pub fn measurement_update(
    prior: &FilterState,
    model: &impl MeasurementModel,
    z: &DVector<f64>,
    mode: GainMode,
    weights: &SensitivityWeights,
) -> Result<MeasurementUpdate> {
    const CTX: &str = "measurement_update";
    if z.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::InvalidArgument(format!(
            "non-finite measurement at t = {} s",
            prior.epoch
        )));
    }
    let n = prior.dim();
    let lin = model.linearize(&prior.estimate, prior.epoch)?;
    let m = lin.predicted.len();
    if z.len() != m {
        return Err(mismatch(CTX, format!("z has {} entries, model predicts {m}", z.len())));
    }
    expect_shape(CTX, "H", &lin.state_jacobian, m, n)?;

    let gamma = gamma_matrix(&lin.state_jacobian, &prior.sensitivity, &lin.param_jacobian)?;
    let (p, h, y, r) = (
        &prior.covariance,
        &lin.state_jacobian,
        &lin.noise_coeff,
        &lin.noise_cov,
    );
    let gain = match mode {
        GainMode::Ekf => ekf_gain(p, h, y, r)?,
        GainMode::Adekf => adekf_gain(p, h, y, r, &prior.sensitivity, &gamma, &weights.diag)?,
        GainMode::Dekf => {
            dekf_gain_linear(p, h, y, r, &prior.sensitivity, &gamma, &weights.blocks(n))?
        }
    };
    let innovation = z - &lin.predicted;
    let posterior = apply_gain(prior, &lin, &gamma, &innovation, &gain)?;
    Ok(MeasurementUpdate {
        posterior,
        gain,
        gamma,
        innovation,
        linearization: lin,
    })
}

/// `Γ = S·diag(σ_c)`: state error caused by a 1σ error in each parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMatrix {
    pub values: DMatrix<f64>,
    pub param_sigmas: DVector<f64>,
}

pub fn perturbation_matrix(s: &DMatrix<f64>, sigmas: &[f64]) -> Result<PerturbationMatrix> {
    if sigmas.len() != s.ncols() {
        return Err(mismatch(
            "perturbation_matrix",
            format!("{} sigmas for {} sensitivity columns", sigmas.len(), s.ncols()),
        ));
    }
    if let Some(bad) = sigmas.iter().find(|v| !(**v >= 0.0)) {
        return Err(FilterError::InvalidArgument(format!(
            "parameter sigma {bad} is negative"
        )));
    }
    let mut values = s.clone();
    for (mut col, sigma) in values.column_iter_mut().zip(sigmas) {
        col *= *sigma;
    }
    Ok(PerturbationMatrix {
        values,
        param_sigmas: DVector::from_column_slice(sigmas),
    })
}

/// Inputs of the desensitized cost at one measurement epoch.
#[derive(Debug, Clone, Copy)]
pub struct GainProblem<'a> {
    pub p_prior: &'a DMatrix<f64>,
    pub h: &'a DMatrix<f64>,
    pub y: &'a DMatrix<f64>,
    pub r: &'a DMatrix<f64>,
    pub s_prior: &'a DMatrix<f64>,
    pub gamma: &'a DMatrix<f64>,
    pub weights: &'a DVector<f64>,
}

impl GainProblem<'_> {
    /// `J_a(K) = Tr(P⁺) + Tr(S⁺ W S⁺ᵀ)` with Joseph-form `P⁺` and `S⁺ = S⁻ − Kγ`.
    pub fn cost(&self, k: &DMatrix<f64>) -> f64 {
        let p_post = joseph_covariance(self.p_prior, k, self.h, self.y, self.r);
        let s_post = self.s_prior - k * self.gamma;
        let w = DMatrix::from_diagonal(self.weights);
        p_post.trace() + (&s_post * w * s_post.transpose()).trace()
    }

    /// The positive and negative parts of `∂J_a/∂K`:
    /// `2K(HPHᵀ + YRYᵀ) + 2KγWγᵀ` and `2PHᵀ + 2SWγᵀ`.
    fn gradient_terms(&self, k: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let w = DMatrix::from_diagonal(self.weights);
        let a = innovation_covariance(self.p_prior, self.h, self.y, self.r);
        let gwg = self.gamma * &w * self.gamma.transpose();
        (
            k * a * 2.0,
            k * gwg * 2.0,
            self.p_prior * self.h.transpose() * 2.0,
            self.s_prior * w * self.gamma.transpose() * 2.0,
        )
    }

    /// Closed-form `∂J_a/∂K`.
    pub fn cost_gradient(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let (ka, kgwg, pht, swg) = self.gradient_terms(k);
        ka - pht - swg + kgwg
    }
}

/// Magnitude of `∂J_a/∂K` at a given gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityResidual {
    /// Frobenius norm of the gradient.
    pub norm: f64,
    /// Sum of the norms of the gradient's positive terms.
    pub scale: f64,
}

impl StationarityResidual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.norm / self.scale
        } else {
            self.norm
        }
    }
}

pub fn gain_stationarity_residual(
    k: &DMatrix<f64>,
    problem: &GainProblem<'_>,
) -> Result<StationarityResidual> {
    const CTX: &str = "gain_stationarity_residual";
    let (n, m) = check_gain_inputs(CTX, problem.p_prior, problem.h, problem.y, problem.r)?;
    let l = problem.weights.len();
    expect_shape(CTX, "K", k, n, m)?;
    expect_shape(CTX, "S", problem.s_prior, n, l)?;
    expect_shape(CTX, "gamma", problem.gamma, m, l)?;
    let (ka, kgwg, pht, swg) = problem.gradient_terms(k);
    let scale = ka.norm() + kgwg.norm();
    let norm = (ka - pht - swg + kgwg).norm();
    Ok(StationarityResidual { norm, scale })
}
