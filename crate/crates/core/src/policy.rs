//! Transmission power controllers.
//!
//! The data-driven controller sends the local estimate with power
//!
//! ```text
//! ω_k = (N₀W / 2α) · εᵀ (Ψ_τ⁺ - Σ_τ⁺) ε + ω
//! ```
//!
//! where `ε` is the incremental innovation, `Σ_τ` its prior covariance at
//! holding time `τ` and `Ψ_τ ⪯ Σ_τ` the covariance the receiver will hold
//! after a drop. Because the drop probability is `exp(-α ω_k / N₀W)`, a
//! drop multiplies the Gaussian prior by another Gaussian kernel and the
//! posterior stays `N(0, Ψ_τ)`. The pair `(Σ_τ, Ψ_τ)` is therefore the
//! whole controller state; the weight `Q_τ = Ψ_τ⁺ - Σ_τ⁺` is never stored
//! separately from it.
//!
//! The budget-optimal choice shrinks `Σ_τ` uniformly, `Ψ_τ = Σ_τ / λ*`,
//! with `λ*` and the constant term `ω` given in closed form by
//! [`optimal_parameters`].

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelParams};
use crate::plant::{lyapunov_power, SteadyState, SystemModel};
use crate::psdlin::{
    dominance_from_spectra, numerical_rank, LinalgError, Matrix, PsdMatrix, SpectralFactorization,
    Vector,
};

/// Relative size of the component of `ε` orthogonal to `Im(Σ_τ)` above
/// which the innovation is rejected.
pub const SUPPORT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("innovation leaves the support of Σ_τ: off-support norm {off_support:e} of {norm:e}")]
    SupportViolation { off_support: f64, norm: f64 },
    #[error("budget must be nonnegative and finite, got {0}")]
    InvalidBudget(f64),
    #[error("truncated inversion calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("invalid policy parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Constant power `ω̄` in every slot.
    ConstantBaseline,
    /// Quadratic controller with an explicit weight schedule.
    DataDriven,
    /// Budget-optimal quadratic controller for a constant budget.
    OptimalDataDriven,
    /// Budget-optimal quadratic controller for a per-slot budget.
    TimeVaryingOptimal,
    /// Truncated channel inversion.
    TruncatedInversion,
}

impl PolicyKind {
    pub fn tag(self) -> &'static str {
        match self {
            PolicyKind::ConstantBaseline => "constant_baseline",
            PolicyKind::DataDriven => "data_driven",
            PolicyKind::OptimalDataDriven => "optimal_data_driven",
            PolicyKind::TimeVaryingOptimal => "time_varying_optimal",
            PolicyKind::TruncatedInversion => "truncated_inversion",
        }
    }

    /// Whether drops carry information about `ε`.
    pub fn is_data_driven(self) -> bool {
        matches!(
            self,
            PolicyKind::DataDriven | PolicyKind::OptimalDataDriven | PolicyKind::TimeVaryingOptimal
        )
    }
}

/// Controller state at one holding time: the prior/posterior pair and
/// everything derived from it.
#[derive(Debug, Clone)]
pub struct PolicyState {
    tau: usize,
    sigma: PsdMatrix,
    psi: PsdMatrix,
    sigma_spec: SpectralFactorization,
    sigma_pinv: PsdMatrix,
    psi_pinv: PsdMatrix,
    weight: Matrix,
    /// Nonzero eigenvalues of Φ, ascending.
    shape: Vec<f64>,
}

impl PolicyState {
    /// Pairs `Σ_τ` with `Ψ_τ`; the pair must be dominant.
    pub fn new(tau: usize, sigma: PsdMatrix, psi: PsdMatrix) -> Result<Self, PolicyError> {
        if sigma.dim() != psi.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: sigma.dim(),
                found: psi.dim(),
            }
            .into());
        }
        let sigma_spec = sigma.spectral();
        let psi_spec = psi.spectral();
        let report = dominance_from_spectra(&sigma, &psi, &sigma_spec, &psi_spec);
        if !report.holds {
            return Err(report.violation().into());
        }
        let sigma_pinv = sigma_spec.pseudo_inverse();
        let psi_pinv = psi_spec.pseudo_inverse();
        let root = sigma_spec.support_factor();
        let phi_support = root.transpose() * psi_pinv.as_matrix() * &root;
        let mut shape: Vec<f64> = if phi_support.is_empty() {
            Vec::new()
        } else {
            SymmetricEigen::new((&phi_support + phi_support.transpose()) * 0.5)
                .eigenvalues
                .iter()
                .copied()
                .collect()
        };
        shape.sort_by(f64::total_cmp);
        let weight = psi_pinv.as_matrix() - sigma_pinv.as_matrix();
        Ok(Self {
            tau,
            sigma,
            psi,
            sigma_spec,
            sigma_pinv,
            psi_pinv,
            weight,
            shape,
        })
    }

    /// `Ψ = Σ`: drops carry no information.
    pub fn unshaped(tau: usize, sigma: PsdMatrix) -> Self {
        let psi = sigma.clone();
        Self::new(tau, sigma, psi).expect("a matrix dominates itself")
    }

    /// `Ψ = Σ / λ` with `λ ≥ 1`.
    pub fn shrunk(tau: usize, sigma: PsdMatrix, lambda: f64) -> Result<Self, PolicyError> {
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return Err(PolicyError::InvalidParameter(format!(
                "shrink factor must be >= 1, got {lambda}"
            )));
        }
        let psi = sigma.scaled(1.0 / lambda);
        Self::new(tau, sigma, psi)
    }

    /// State before the first slot: `τ = 0`, `Σ = Ψ = 0`.
    pub fn initial(n: usize) -> Self {
        Self::unshaped(0, PsdMatrix::zeros(n))
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn sigma(&self) -> &PsdMatrix {
        &self.sigma
    }

    pub fn psi(&self) -> &PsdMatrix {
        &self.psi
    }

    pub fn sigma_pinv(&self) -> &PsdMatrix {
        &self.sigma_pinv
    }

    pub fn psi_pinv(&self) -> &PsdMatrix {
        &self.psi_pinv
    }

    /// `Q_τ = Ψ⁺ - Σ⁺`.
    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    /// `n_τ = rank(Σ_τ) = rank(Ψ_τ)`.
    pub fn rank(&self) -> usize {
        self.sigma_spec.rank
    }

    /// Nonzero eigenvalues of `Φ_τ = (Σ^{1/2})ᵀ Ψ⁺ Σ^{1/2}` in ascending order.
    pub fn shape_eigenvalues(&self) -> &[f64] {
        &self.shape
    }

    pub fn phi_trace(&self) -> f64 {
        self.shape.iter().sum()
    }

    pub fn phi_pseudo_det(&self) -> Result<f64, LinalgError> {
        if self.shape.is_empty() {
            return Err(LinalgError::ZeroMatrix);
        }
        Ok(self.shape.iter().product())
    }

    /// `ε_τ = 1 / λ₁(Φ_τ)`, the smallest `ε` with `Ψ_τ ⪯ ε Σ_τ`.
    pub fn threshold(&self) -> Option<f64> {
        self.shape.first().map(|l| 1.0 / l)
    }

    /// Projects `ε` onto `Im(Σ_τ)`, rejecting vectors that are not
    /// numerically inside it.
    pub fn project_to_support(&self, eps: &Vector) -> Result<Vector, PolicyError> {
        let basis = self.sigma_spec.support_basis();
        let coords = basis.transpose() * eps;
        let inside = &basis * coords;
        let off = (eps - &inside).norm();
        let norm = eps.norm();
        if off > SUPPORT_TOL * norm && off > f64::EPSILON {
            return Err(PolicyError::SupportViolation {
                off_support: off,
                norm,
            });
        }
        Ok(inside)
    }

    /// `εᵀ (Ψ⁺ - Σ⁺) ε`, clamped at zero.
    pub fn weighted_form(&self, eps: &Vector) -> Result<f64, PolicyError> {
        let e = self.project_to_support(eps)?;
        Ok((e.transpose() * &self.weight * &e)[(0, 0)].max(0.0))
    }

    /// `εᵀ Σ⁺ ε`.
    pub fn information_form(&self, eps: &Vector) -> Result<f64, PolicyError> {
        let e = self.project_to_support(eps)?;
        Ok((e.transpose() * self.sigma_pinv.as_matrix() * &e)[(0, 0)].max(0.0))
    }
}

/// `ω_k = (N₀W/2α) εᵀ(Ψ⁺ - Σ⁺)ε + ω`.
pub fn power_ef(
    eps: &Vector,
    state: &PolicyState,
    base_power: f64,
    params: &ChannelParams,
) -> Result<f64, PolicyError> {
    if !(base_power >= 0.0) {
        return Err(ChannelError::NegativePower(base_power).into());
    }
    Ok(0.5 * params.noise_ratio() * state.weighted_form(eps)? + base_power)
}

/// `Σ_τ = A Ψ_{τ-1} Aᵀ + (h(P̄) - P̄)`.
pub fn sigma_recursion(
    psi_prev: &PsdMatrix,
    model: &SystemModel,
    steady: &SteadyState,
) -> Result<PsdMatrix, LinalgError> {
    if psi_prev.dim() != model.state_dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: model.state_dim(),
            found: psi_prev.dim(),
        });
    }
    let a = model.a();
    Ok(PsdMatrix::from_psd_unchecked(
        a * psi_prev.as_matrix() * a.transpose() + steady.increment.as_matrix(),
    ))
}

/// Closed-form optimum of the budget-constrained drop-bound problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalParameters {
    /// Common eigenvalue `λ*` of `Φ_τ`, so `Ψ_τ = Σ_τ / λ*`.
    pub lambda: f64,
    /// Constant power term `ω`.
    pub base_power: f64,
}

/// With `c = N₀W/α`: if `ω̄ > c` then `λ* = 1 + 2/n_τ`, `ω = ω̄ - c`;
/// otherwise `λ* = 1 + 2ω̄/(n_τ c)`, `ω = 0`. The two branches agree at
/// `ω̄ = c`.
pub fn optimal_parameters(budget: f64, rank: usize, params: &ChannelParams) -> OptimalParameters {
    debug_assert!(budget >= 0.0);
    if rank == 0 {
        return OptimalParameters {
            lambda: 1.0,
            base_power: budget,
        };
    }
    let c = params.noise_ratio();
    let n = rank as f64;
    if budget > c {
        OptimalParameters {
            lambda: 1.0 + 2.0 / n,
            base_power: budget - c,
        }
    } else {
        OptimalParameters {
            lambda: 1.0 + 2.0 * budget / (n * c),
            base_power: 0.0,
        }
    }
}

/// Objective of the drop-bound problem for a given eigenvalue profile of
/// `Φ_τ` and constant term `ω`:
/// `exp(-αω/N₀W) / (λ_min · Π λ_i^{1/2})`.
pub fn drop_bound_objective(eigenvalues: &[f64], base_power: f64, params: &ChannelParams) -> f64 {
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let log_det: f64 = eigenvalues.iter().map(|l| l.ln()).sum();
    (-base_power / params.noise_ratio() - min.ln() - 0.5 * log_det).exp()
}

/// Budget-optimal power for the current slot. Returns the power and the
/// posterior covariance `Ψ_τ = Σ_τ / λ*` used if the packet is lost.
pub fn optimal_policy_step(
    state: &PolicyState,
    eps: &Vector,
    budget: f64,
    params: &ChannelParams,
) -> Result<(f64, PsdMatrix), PolicyError> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(PolicyError::InvalidBudget(budget));
    }
    let n = state.rank();
    if n == 0 {
        return Ok((budget, state.sigma().clone()));
    }
    let opt = optimal_parameters(budget, n, params);
    let info = state.information_form(eps)?;
    let c = params.noise_ratio();
    let power = if budget > c {
        c / n as f64 * info + budget - c
    } else {
        budget / n as f64 * info
    };
    Ok((power, state.sigma().scaled(1.0 / opt.lambda)))
}

/// `E[ω_k | I_{k-1}] = (N₀W/2α)(Tr(Σ Ψ⁺) - n_τ) + ω`.
pub fn expected_power(
    sigma: &PsdMatrix,
    psi: &PsdMatrix,
    base_power: f64,
    params: &ChannelParams,
) -> Result<f64, PolicyError> {
    let state = PolicyState::new(0, sigma.clone(), psi.clone())?;
    Ok(0.5 * params.noise_ratio() * (state.phi_trace() - state.rank() as f64) + base_power)
}

/// `Pr(γ_k = 0 | I_{k-1}) = (det Σ · det Ψ⁺)^{-1/2} exp(-αω/N₀W)`, with the
/// pseudo-determinant product evaluated as `det Φ`.
pub fn drop_rate_formula(
    sigma: &PsdMatrix,
    psi: &PsdMatrix,
    base_power: f64,
    params: &ChannelParams,
) -> Result<f64, PolicyError> {
    let state = PolicyState::new(0, sigma.clone(), psi.clone())?;
    let det = state.phi_pseudo_det()?;
    Ok(det.powf(-0.5) * (-base_power / params.noise_ratio()).exp())
}

/// `n_τ = rank(h^τ(P̄) - P̄)`, which is constant for `τ ≥ n`.
pub fn n_tau_offline(model: &SystemModel, p_bar: &PsdMatrix, tau: usize) -> usize {
    let steps = tau.clamp(1, model.state_dim().max(1));
    let h = lyapunov_power(p_bar, model, steps).expect("P̄ matches the model dimension");
    numerical_rank(&(h.as_matrix() - p_bar.as_matrix()))
}

/// `ω = v/h` above the cutoff `h*`, `v/h*` below it.
pub fn truncated_inversion_power(gain: f64, v: f64, h_star: f64) -> f64 {
    if gain > h_star {
        v / gain
    } else {
        v / h_star
    }
}

/// `E[min(1/h, 1/h*)]` for `h ~ Exp(mean h̄)`, by quadrature. The mean
/// power of truncated inversion is `v` times this factor.
pub fn inversion_mean_factor(mean_gain: f64, h_star: f64) -> f64 {
    // ∫_{h*}^∞ e^{-h/h̄}/(h h̄) dh with h = h* + t h̄, composite Simpson on
    // t ∈ [0, 60]; the tail beyond is below e^{-60}.
    let head = (1.0 - (-h_star / mean_gain).exp()) / h_star;
    let upper = 60.0;
    let intervals = 60_000;
    let step = upper / intervals as f64;
    let f = |t: f64| (-(h_star / mean_gain) - t).exp() / (h_star + t * mean_gain);
    let mut acc = f(0.0) + f(upper);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * step);
    }
    head + acc * step / 3.0
}

/// Chooses `v` so that truncated inversion spends `budget` on average
/// under Rayleigh fading with mean gain `h̄` and cutoff `h*`.
pub fn calibrate_inversion(budget: f64, mean_gain: f64, h_star: f64) -> Result<f64, PolicyError> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(PolicyError::CalibrationFailure(format!(
            "budget must be positive, got {budget}"
        )));
    }
    if !(h_star > 0.0 && mean_gain > 0.0) {
        return Err(PolicyError::CalibrationFailure(format!(
            "cutoff {h_star} and mean gain {mean_gain} must be positive"
        )));
    }
    let factor = inversion_mean_factor(mean_gain, h_star);
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(PolicyError::CalibrationFailure(format!(
            "mean power factor {factor} is not usable"
        )));
    }
    // The mean power is linear in v.
    let v = budget / factor;
    let achieved = v * factor;
    if (achieved - budget).abs() > 0.01 * budget {
        return Err(PolicyError::CalibrationFailure(format!(
            "achieved mean power {achieved} misses budget {budget}"
        )));
    }
    Ok(v)
}

/// Prior covariance for the current slot under a per-slot budget:
/// `Σ_k = (1 - γ_{k-1}) A Ψ_{k-1} Aᵀ + h(P̄) - P̄`.
pub fn time_varying_prior(
    prev: &PolicyState,
    gamma_prev: bool,
    model: &SystemModel,
    steady: &SteadyState,
) -> Result<PolicyState, PolicyError> {
    let (tau, sigma) = if gamma_prev {
        (1, steady.increment.clone())
    } else {
        (prev.tau() + 1, sigma_recursion(prev.psi(), model, steady)?)
    };
    Ok(PolicyState::unshaped(tau, sigma))
}

/// One slot of the per-slot-budget optimal controller. Returns the power
/// and the state whose `Ψ` the receiver uses on a drop and that feeds the
/// next slot's prior.
pub fn time_varying_step(
    prev: &PolicyState,
    gamma_prev: bool,
    eps: &Vector,
    budget: f64,
    params: &ChannelParams,
    model: &SystemModel,
    steady: &SteadyState,
) -> Result<(f64, PolicyState), PolicyError> {
    let prior = time_varying_prior(prev, gamma_prev, model, steady)?;
    let (power, psi) = optimal_policy_step(&prior, eps, budget, params)?;
    let tau = prior.tau();
    let sigma = prior.sigma.clone();
    Ok((power, PolicyState::new(tau, sigma, psi)?))
}

/// Per-τ controller states for a stationary data-driven policy,
/// precomputed once and shared read-only across trials.
#[derive(Debug, Clone)]
pub struct StationarySchedule {
    states: Vec<PolicyState>,
    base_power: f64,
}

impl StationarySchedule {
    /// `Ψ_τ = Σ_τ` for every `τ`; the prior covariances are then
    /// `Σ_τ = h^τ(P̄) - P̄`.
    pub fn unshaped(max_tau: usize, model: &SystemModel, steady: &SteadyState) -> Self {
        let mut states = Vec::with_capacity(max_tau);
        let mut psi = PsdMatrix::zeros(model.state_dim());
        for tau in 1..=max_tau {
            let sigma = sigma_recursion(&psi, model, steady).expect("dimensions checked by model");
            psi = sigma.clone();
            states.push(PolicyState::unshaped(tau, sigma));
        }
        Self {
            states,
            base_power: 0.0,
        }
    }

    /// The budget-optimal schedule for a constant budget.
    pub fn optimal(
        budget: f64,
        params: &ChannelParams,
        max_tau: usize,
        model: &SystemModel,
        steady: &SteadyState,
    ) -> Result<Self, PolicyError> {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(PolicyError::InvalidBudget(budget));
        }
        let mut states = Vec::with_capacity(max_tau);
        let mut psi = PsdMatrix::zeros(model.state_dim());
        let mut base_power = optimal_parameters(budget, 1, params).base_power;
        for tau in 1..=max_tau {
            let sigma = sigma_recursion(&psi, model, steady)?;
            let rank = sigma.rank();
            let opt = optimal_parameters(budget, rank, params);
            base_power = opt.base_power;
            let state = PolicyState::shrunk(tau, sigma, opt.lambda)?;
            psi = state.psi().clone();
            states.push(state);
        }
        Ok(Self { states, base_power })
    }

    /// Builds `Ψ_τ = (Q_τ + Σ_τ⁺)⁺` from weights `Q_τ` restricted to
    /// `Im(Σ_τ)`. The last weight is reused for larger `τ`.
    pub fn from_weights(
        weights: &[PsdMatrix],
        base_power: f64,
        max_tau: usize,
        model: &SystemModel,
        steady: &SteadyState,
    ) -> Result<Self, PolicyError> {
        if weights.is_empty() {
            return Err(PolicyError::InvalidParameter("empty weight schedule".into()));
        }
        if !(base_power >= 0.0) {
            return Err(ChannelError::NegativePower(base_power).into());
        }
        let mut states = Vec::with_capacity(max_tau);
        let mut psi = PsdMatrix::zeros(model.state_dim());
        for tau in 1..=max_tau {
            let sigma = sigma_recursion(&psi, model, steady)?;
            let weight = &weights[(tau - 1).min(weights.len() - 1)];
            if weight.dim() != sigma.dim() {
                return Err(LinalgError::DimensionMismatch {
                    expected: sigma.dim(),
                    found: weight.dim(),
                }
                .into());
            }
            let spec = sigma.spectral();
            let proj = spec.projector();
            let precision = &proj * weight.as_matrix() * &proj + spec.pseudo_inverse().as_matrix();
            let new_psi = PsdMatrix::from_psd_unchecked(precision).pseudo_inverse();
            let state = PolicyState::new(tau, sigma, new_psi)?;
            psi = state.psi().clone();
            states.push(state);
        }
        Ok(Self { states, base_power })
    }

    pub fn base_power(&self) -> f64 {
        self.base_power
    }

    pub fn with_base_power(mut self, base_power: f64) -> Self {
        self.base_power = base_power;
        self
    }

    pub fn max_tau(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, tau: usize) -> Option<&PolicyState> {
        tau.checked_sub(1).and_then(|i| self.states.get(i))
    }

    pub fn states(&self) -> &[PolicyState] {
        &self.states
    }

    /// Power for holding time `τ` under channel parameters `params`.
    pub fn power(&self, tau: usize, eps: &Vector, params: &ChannelParams) -> Result<f64, PolicyError> {
        let state = self.state(tau).ok_or_else(|| {
            PolicyError::InvalidParameter(format!(
                "holding time {tau} beyond precomputed schedule of {}",
                self.states.len()
            ))
        })?;
        power_ef(eps, state, self.base_power, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::SteadyState;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ratio3() -> ChannelParams {
        ChannelParams::with_noise_ratio(3.0).unwrap()
    }

    fn example_pair() -> (PsdMatrix, PsdMatrix) {
        (
            PsdMatrix::from_diagonal(&[5.0, 5.0, 0.0]).unwrap(),
            PsdMatrix::from_row_slice(3, &[3.0, -1.0, 0.0, -1.0, 3.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
        )
    }

    fn benchmark() -> (SystemModel, SteadyState) {
        let model = SystemModel::two_state_benchmark();
        let ss = SteadyState::compute(&model).unwrap();
        (model, ss)
    }

    #[test]
    fn power_examples() {
        let p = ratio3();
        let sigma = PsdMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let state = PolicyState::shrunk(1, sigma.clone(), 2.0).unwrap();
        assert_eq!(power_ef(&Vector::zeros(2), &state, 1.25, &p).unwrap(), 1.25);

        let flat = PolicyState::unshaped(1, sigma);
        let eps = Vector::from_vec(vec![3.0, -7.0]);
        assert_relative_eq!(power_ef(&eps, &flat, 4.0, &p).unwrap(), 4.0, epsilon = 1e-12);

        // Scalar: (3/2)(1/1 - 1/2)·2² = 3.
        let s = PolicyState::new(
            1,
            PsdMatrix::from_diagonal(&[2.0]).unwrap(),
            PsdMatrix::from_diagonal(&[1.0]).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(
            power_ef(&Vector::from_vec(vec![2.0]), &s, 0.0, &p).unwrap(),
            3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn power_rejects_off_support_innovation() {
        let (sigma, psi) = example_pair();
        let state = PolicyState::new(1, sigma, psi).unwrap();
        let eps = Vector::from_vec(vec![1.0, 1.0, 0.5]);
        assert!(matches!(
            power_ef(&eps, &state, 0.0, &ratio3()),
            Err(PolicyError::SupportViolation { .. })
        ));
        // Rounding-level excursions are projected away.
        let eps = Vector::from_vec(vec![1.0, 1.0, 1e-12]);
        assert!(power_ef(&eps, &state, 0.0, &ratio3()).is_ok());
    }

    #[test]
    fn sigma_recursion_cases() {
        let (model, ss) = benchmark();
        let s1 = sigma_recursion(&PsdMatrix::zeros(2), &model, &ss).unwrap();
        assert_eq!(s1.as_matrix(), ss.increment.as_matrix());

        // Ψ = Σ chain: Σ_τ = h^τ(P̄) - P̄.
        let mut psi = PsdMatrix::zeros(2);
        for tau in 1..=20 {
            let sigma = sigma_recursion(&psi, &model, &ss).unwrap();
            let h = lyapunov_power(&ss.p_bar, &model, tau).unwrap();
            let expected = h.as_matrix() - ss.p_bar.as_matrix();
            assert!(
                (sigma.as_matrix() - &expected).norm() <= 1e-9 * (1.0 + expected.norm()),
                "tau {tau}"
            );
            psi = sigma;
        }

        let nil = SystemModel::new(
            Matrix::zeros(2, 2),
            Matrix::identity(2, 2),
            PsdMatrix::from_diagonal(&[1.5, 0.5]).unwrap(),
            PsdMatrix::identity(2),
            None,
        )
        .unwrap();
        let nil_ss = SteadyState::compute(&nil).unwrap();
        let mut psi = PsdMatrix::identity(2).scaled(3.0);
        for _ in 0..5 {
            let sigma = sigma_recursion(&psi, &nil, &nil_ss).unwrap();
            // With A = 0, h(P̄) = Q.
            assert!((sigma.as_matrix() - (nil.q().as_matrix() - nil_ss.p_bar.as_matrix())).norm() < 1e-12);
            psi = sigma;
        }
    }

    #[test]
    fn optimal_parameter_examples() {
        let p = ratio3();
        let o = optimal_parameters(5.0, 2, &p);
        assert_relative_eq!(o.lambda, 2.0);
        assert_relative_eq!(o.base_power, 2.0);

        let o = optimal_parameters(3.0, 2, &p);
        assert_relative_eq!(o.lambda, 2.0);
        assert_eq!(o.base_power, 0.0);

        let o = optimal_parameters(0.0, 2, &p);
        assert_eq!(o.lambda, 1.0);
        assert_eq!(o.base_power, 0.0);
    }

    #[test]
    fn branches_meet_at_boundary() {
        let p = ratio3();
        for n in 1..=6 {
            let at = optimal_parameters(3.0, n, &p);
            let above = optimal_parameters(3.0 + 1e-12, n, &p);
            assert_relative_eq!(at.lambda, above.lambda, epsilon = 1e-9);
            assert_relative_eq!(at.base_power, above.base_power, epsilon = 1e-9);
        }
    }

    #[test]
    fn optimal_step_examples() {
        let p = ratio3();
        let (_, ss) = benchmark();
        let state = PolicyState::unshaped(1, ss.increment.clone());
        let (power, psi) = optimal_policy_step(&state, &Vector::zeros(2), 5.0, &p).unwrap();
        assert_relative_eq!(power, 2.0, epsilon = 1e-12);
        assert!((psi.as_matrix() * 2.0 - ss.increment.as_matrix()).norm() < 1e-12);

        let (power, _) = optimal_policy_step(&state, &Vector::zeros(2), 1.0, &p).unwrap();
        assert_eq!(power, 0.0);
    }

    #[test]
    fn optimal_step_matches_generic_controller() {
        let p = ratio3();
        let (_, ss) = benchmark();
        let state = PolicyState::unshaped(1, ss.increment.clone());
        let eps = Vector::from_vec(vec![0.7, -1.1]);
        for budget in [0.5, 2.0, 3.0, 5.0, 9.0] {
            let (power, psi) = optimal_policy_step(&state, &eps, budget, &p).unwrap();
            let opt = optimal_parameters(budget, 2, &p);
            let shaped = PolicyState::new(1, ss.increment.clone(), psi).unwrap();
            let generic = power_ef(&eps, &shaped, opt.base_power, &p).unwrap();
            assert_relative_eq!(power, generic, max_relative = 1e-10);
        }
    }

    #[test]
    fn expected_power_examples() {
        let p = ratio3();
        let (sigma, psi) = example_pair();
        assert_relative_eq!(expected_power(&sigma, &sigma, 1.75, &p).unwrap(), 1.75, epsilon = 1e-12);
        // N₀W/2α = 1.5, Tr Φ = 3.75, n = 2.
        assert_relative_eq!(expected_power(&sigma, &psi, 0.0, &p).unwrap(), 2.625, epsilon = 1e-12);
        for n in 1..=4 {
            let lambda = 1.0 + 2.0 / n as f64;
            let s = PsdMatrix::identity(n);
            let e = expected_power(&s, &s.scaled(1.0 / lambda), 0.4, &p).unwrap();
            assert_relative_eq!(e, 3.0 + 0.4, epsilon = 1e-12);
        }
    }

    #[test]
    fn drop_rate_examples() {
        let p = ratio3();
        let s = PsdMatrix::from_row_slice(2, &[1.0, 0.2, 0.2, 0.5]).unwrap();
        assert_relative_eq!(drop_rate_formula(&s, &s, 0.0, &p).unwrap(), 1.0, epsilon = 1e-12);
        let d = drop_rate_formula(&s, &s.scaled(0.5), 2.0, &p).unwrap();
        assert_relative_eq!(d, 0.5 * (-2.0f64 / 3.0).exp(), epsilon = 1e-12);
        assert_relative_eq!(d, 0.256_71, epsilon = 1e-5);
        let (sigma, psi) = example_pair();
        let d = drop_rate_formula(&sigma, &psi, 0.0, &p).unwrap();
        assert_relative_eq!(d, (25.0f64 / 8.0).powf(-0.5), epsilon = 1e-12);
    }

    #[test]
    fn dominance_errors_propagate() {
        let p = ratio3();
        let s = PsdMatrix::identity(2);
        assert!(matches!(
            expected_power(&s, &s.scaled(2.0), 0.0, &p),
            Err(PolicyError::Linalg(LinalgError::DominanceViolation { .. }))
        ));
        assert!(matches!(
            drop_rate_formula(&s, &s.scaled(2.0), 0.0, &p),
            Err(PolicyError::Linalg(LinalgError::DominanceViolation { .. }))
        ));
    }

    #[test]
    fn rank_table_benchmark() {
        let (model, ss) = benchmark();
        for tau in 1..=10 {
            assert_eq!(n_tau_offline(&model, &ss.p_bar, tau), 2);
        }
    }

    #[test]
    fn rank_table_degenerate_noise() {
        let model = SystemModel::new(
            Matrix::from_diagonal(&Vector::from_vec(vec![0.99, 0.7])),
            Matrix::from_row_slice(2, 2, &[2.3, 1.0, 1.0, 1.8]),
            PsdMatrix::from_diagonal(&[1.0, 0.0]).unwrap(),
            PsdMatrix::identity(2),
            None,
        )
        .unwrap();
        let ss = SteadyState::compute(&model).unwrap();
        assert_eq!(n_tau_offline(&model, &ss.p_bar, 1), 1);
        assert_eq!(n_tau_offline(&model, &ss.p_bar, 2), n_tau_offline(&model, &ss.p_bar, 7));
    }

    #[test]
    fn truncated_inversion_cases() {
        let (v, h_star) = (10.0, 5.0);
        assert_relative_eq!(truncated_inversion_power(2.0 * h_star, v, h_star), v / (2.0 * h_star));
        assert_eq!(truncated_inversion_power(0.0, v, h_star), v / h_star);
        assert_eq!(truncated_inversion_power(h_star, v, h_star), v / h_star);
        assert_relative_eq!(
            truncated_inversion_power(h_star * (1.0 + 1e-12), v, h_star),
            v / h_star,
            max_relative = 1e-11
        );
        for g in [0.1, 1.0, 4.9, 5.1, 100.0] {
            assert!(truncated_inversion_power(g, v, h_star) <= v / h_star);
        }
    }

    #[test]
    fn inversion_calibration_against_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Exp};
        let budget = 5.0;
        let v = calibrate_inversion(budget, 1.0, 5.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let exp = Exp::new(1.0).unwrap();
        let n = 400_000;
        let mean = (0..n)
            .map(|_| truncated_inversion_power(exp.sample(&mut rng), v, 5.0))
            .sum::<f64>()
            / n as f64;
        assert!((mean - budget).abs() < 0.01 * budget, "{mean}");
        assert!(calibrate_inversion(0.0, 1.0, 5.0).is_err());
        assert!(calibrate_inversion(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn time_varying_reduces_to_stationary() {
        let (model, ss) = benchmark();
        let p = ratio3();
        let schedule = StationarySchedule::optimal(5.0, &p, 10, &model, &ss).unwrap();
        let mut prev = PolicyState::initial(2);
        let mut gamma_prev = true;
        let eps = Vector::from_vec(vec![0.3, 0.2]);
        // Drop burst of 10 slots.
        for tau in 1..=10 {
            let (power, state) =
                time_varying_step(&prev, gamma_prev, &eps, 5.0, &p, &model, &ss).unwrap();
            let reference = schedule.state(tau).unwrap();
            assert_eq!(state.tau(), tau);
            assert!((state.psi().as_matrix() - reference.psi().as_matrix()).norm() < 1e-12);
            let ref_power = schedule.power(tau, &eps, &p).unwrap();
            assert_relative_eq!(power, ref_power, max_relative = 1e-10);
            prev = state;
            gamma_prev = false;
        }
        // A receipt resets the prior.
        let prior = time_varying_prior(&prev, true, &model, &ss).unwrap();
        assert_eq!(prior.tau(), 1);
        assert_eq!(prior.sigma().as_matrix(), ss.increment.as_matrix());
    }

    #[test]
    fn time_varying_alternating_budgets() {
        let (model, ss) = benchmark();
        let p = ratio3();
        let mut prev = PolicyState::initial(2);
        let zero = Vector::zeros(2);
        for (i, budget) in [1.0, 5.0, 1.0, 5.0].into_iter().enumerate() {
            let (power, state) =
                time_varying_step(&prev, i == 0, &zero, budget, &p, &model, &ss).unwrap();
            let e = expected_power(state.sigma(), state.psi(), optimal_parameters(budget, 2, &p).base_power, &p)
                .unwrap();
            assert_relative_eq!(e, budget, epsilon = 1e-10);
            // Low budget: no constant term; high budget: ω̄ - N₀W/α.
            let expected_base = if budget > 3.0 { budget - 3.0 } else { 0.0 };
            assert_relative_eq!(power, expected_base, epsilon = 1e-12);
            prev = state;
        }
    }

    #[test]
    fn optimal_schedule_contracts() {
        let (model, ss) = benchmark();
        let schedule = StationarySchedule::optimal(5.0, &ratio3(), 100, &model, &ss).unwrap();
        let mut max_eig: f64 = 0.0;
        for state in schedule.states() {
            let spec = state.sigma().spectral();
            assert!(spec.values.iter().all(|&v| v >= 0.0));
            max_eig = max_eig.max(spec.max_eigenvalue());
            for l in state.shape_eigenvalues() {
                assert_relative_eq!(*l, 2.0, epsilon = 1e-9);
            }
            assert_relative_eq!(state.threshold().unwrap(), 0.5, epsilon = 1e-9);
        }
        assert!(max_eig < 10.0, "{max_eig}");
    }

    #[test]
    fn weight_schedule_round_trip() {
        let (model, ss) = benchmark();
        let p = ratio3();
        // Q_τ = Σ_τ⁺ gives Ψ_τ = Σ_τ / 2, same as λ = 2.
        let optimal = StationarySchedule::optimal(5.0, &p, 1, &model, &ss).unwrap();
        let s1 = optimal.state(1).unwrap();
        let weights = vec![s1.sigma_pinv().clone()];
        let from_w = StationarySchedule::from_weights(&weights, 2.0, 1, &model, &ss).unwrap();
        assert!((from_w.state(1).unwrap().psi().as_matrix() - s1.psi().as_matrix()).norm() < 1e-10);
    }

    proptest! {
        #[test]
        fn baseline_point_is_feasible_and_dominated(n in 1usize..=6, budget in 0.0f64..15.0) {
            let p = ratio3();
            let opt = optimal_parameters(budget, n, &p);
            let constraint = 0.5 * p.noise_ratio() * n as f64 * (opt.lambda - 1.0) + opt.base_power;
            prop_assert!((constraint - budget).abs() <= 1e-10 * (1.0 + budget));
            let at_opt = drop_bound_objective(&vec![opt.lambda; n], opt.base_power, &p);
            let at_baseline = drop_bound_objective(&vec![1.0; n], budget, &p);
            prop_assert!(at_opt <= at_baseline * (1.0 + 1e-12));
        }

        #[test]
        fn power_never_below_base(x in -5.0f64..5.0, y in -5.0f64..5.0, lambda in 1.0f64..4.0) {
            let sigma = PsdMatrix::from_row_slice(2, &[1.2, 0.3, 0.3, 0.8]).unwrap();
            let state = PolicyState::shrunk(1, sigma, lambda).unwrap();
            let power = power_ef(&Vector::from_vec(vec![x, y]), &state, 0.7, &ratio3()).unwrap();
            prop_assert!(power >= 0.7);
        }
    }
}
