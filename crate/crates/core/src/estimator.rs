//! Remote MMSE estimator.
//!
//! The receiver's information set is summarised by the last delivered
//! local estimate and the holding time `τ`. On a drop the estimate is the
//! open-loop prediction `A^τ x̂ˢ_{k-τ}` under every policy; only the
//! reported covariance depends on whether drops are informative.

use crate::plant::{lyapunov_step, MatrixPowers, SteadyState, SystemModel};
use crate::psdlin::{PsdMatrix, Vector};

/// `τ_{k+1}`: reset to 1 on receipt, otherwise one more slot.
pub fn holding_time_update(tau: usize, gamma: bool) -> usize {
    debug_assert!(tau >= 1);
    if gamma {
        1
    } else {
        tau + 1
    }
}

#[derive(Debug, Clone)]
pub struct RemoteState {
    pub estimate: Vector,
    pub covariance: PsdMatrix,
    /// Holding time the next slot will see.
    pub tau: usize,
    pub last_rx: Vector,
}

impl RemoteState {
    /// `γ₀ = 1` with a zero delivered estimate.
    pub fn new(steady: &SteadyState) -> Self {
        Self::after_receipt(Vector::zeros(steady.p_bar.dim()), steady)
    }

    /// State right after `x̂ˢ` was delivered.
    pub fn after_receipt(local: Vector, steady: &SteadyState) -> Self {
        Self {
            estimate: local.clone(),
            covariance: steady.p_bar.clone(),
            tau: 1,
            last_rx: local,
        }
    }

    /// `γ_k = 1`: `x̂ = x̂ˢ`, `P = P̄`.
    pub fn on_receipt(&mut self, local: &Vector, steady: &SteadyState) {
        self.estimate.copy_from(local);
        self.last_rx.copy_from(local);
        self.covariance = steady.p_bar.clone();
        self.tau = holding_time_update(self.tau, true);
    }

    /// `γ_k = 0` under an informative-drop policy: `x̂ = A^τ x̂ˢ_{k-τ}`,
    /// `P = P̄ + Ψ_τ`.
    pub fn on_drop(&mut self, psi: &PsdMatrix, powers: &MatrixPowers, steady: &SteadyState) {
        self.predict(powers);
        self.covariance =
            PsdMatrix::from_psd_unchecked(steady.p_bar.as_matrix() + psi.as_matrix());
        self.tau = holding_time_update(self.tau, false);
    }

    /// `γ_k = 0` under a policy whose power ignores the state:
    /// `P = h(P_{k-1})`.
    pub fn on_drop_baseline(&mut self, model: &SystemModel, powers: &MatrixPowers) {
        self.predict(powers);
        self.covariance =
            lyapunov_step(&self.covariance, model).expect("covariance matches the model");
        self.tau = holding_time_update(self.tau, false);
    }

    fn predict(&mut self, powers: &MatrixPowers) {
        self.estimate = &*powers.get(self.tau) * &self.last_rx;
    }
}
