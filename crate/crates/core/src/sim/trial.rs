//! One Monte Carlo trial: plant, local filter, power controller, channel
//! and remote estimator stepped together.
//!
//! Slot order: plant step, local filter update, incremental innovation,
//! fading draw, power, channel draw, estimator update. Every slot consumes
//! the same random numbers whatever the policy, so two policies run on
//! the same trial index see identical noise, gains and uniforms.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig, PolicyConfig};
use super::seeding::{stream_rng, Stream};
use crate::channel::{drop_probability, sample_fading_gain, ChannelError, ChannelParams};
use crate::estimator::RemoteState;
use crate::plant::{
    incremental_innovation, sample_initial_state, simulate_step, LocalFilter, MatrixPowers,
    ModelError, SteadyState, SystemModel,
};
use crate::policy::{
    calibrate_inversion, power_ef, time_varying_step, truncated_inversion_power, PolicyError,
    PolicyKind, PolicyState, StationarySchedule,
};
use crate::psdlin::{LinalgError, Vector};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("trial {trial}, slot {k}: {source}")]
    Step {
        trial: u64,
        k: usize,
        source: PolicyError,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Test seam replacing the random channel outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelOverride {
    #[default]
    Random,
    AlwaysReceive,
    AlwaysDrop,
}

/// Where the per-slot budget of the time-varying controller comes from.
#[derive(Debug, Clone)]
enum BudgetSource {
    /// Cycles over the horizon.
    Sequence(Vec<f64>),
    /// The power truncated inversion would spend on this slot's gain.
    Inversion { v: f64, h_star: f64 },
}

#[derive(Debug, Clone)]
enum Runtime {
    Constant { budget: f64 },
    Inversion { v: f64, h_star: f64 },
    Stationary { schedule: StationarySchedule },
    TimeVarying { budgets: BudgetSource },
}

impl Runtime {
    fn informative_drops(&self) -> bool {
        matches!(self, Runtime::Stationary { .. } | Runtime::TimeVarying { .. })
    }
}

/// Everything a visitor can see about one slot.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub trial: u64,
    pub k: usize,
    pub tau: usize,
    pub gamma: bool,
    pub power: f64,
    pub gain: f64,
    pub drop_probability: f64,
    pub state: &'a Vector,
    pub local_estimate: &'a Vector,
    pub innovation: &'a Vector,
    pub remote: &'a RemoteState,
    /// Controller state for data-driven policies; its `Ψ` is the receiver's
    /// posterior covariance of `ε` on a drop.
    pub policy_state: Option<&'a PolicyState>,
}

impl StepRecord<'_> {
    pub fn squared_error(&self) -> f64 {
        (self.state - &self.remote.estimate).norm_squared()
    }

    pub fn covariance_trace(&self) -> f64 {
        self.remote.covariance.trace()
    }
}

/// Flattened per-slot output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub trial: u64,
    pub k: usize,
    pub gamma: u8,
    pub tau: usize,
    pub power: f64,
    pub gain: f64,
    pub trace_p: f64,
    pub squared_error: f64,
    pub policy: &'static str,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    model: SystemModel,
    steady: SteadyState,
    channel: ChannelParams,
    powers: MatrixPowers,
    horizon: usize,
    burn_in: usize,
    seed: u64,
    kind: PolicyKind,
    runtime: Runtime,
    channel_override: ChannelOverride,
}

impl Simulator {
    /// Prepares `policy` under the model, channel, horizon and seed of `cfg`.
    pub fn new(cfg: &ExperimentConfig, policy: &PolicyConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let model = cfg.build_model()?;
        Self::from_parts(model, cfg.channel, policy, cfg.horizon, cfg.burn_in, cfg.seed)
    }

    pub fn from_parts(
        model: SystemModel,
        channel: ChannelParams,
        policy: &PolicyConfig,
        horizon: usize,
        burn_in: usize,
        seed: u64,
    ) -> Result<Self, SimError> {
        policy.validate()?;
        channel.validate()?;
        if horizon == 0 {
            return Err(SimError::Invalid("horizon must be at least 1".into()));
        }
        let steady = SteadyState::compute(&model)?;
        let mean_gain = || {
            channel
                .fading
                .map(|f| f.mean_gain)
                .ok_or(ChannelError::FadingNotConfigured)
        };
        let runtime = match policy {
            PolicyConfig::ConstantBaseline { budget } => Runtime::Constant { budget: *budget },
            PolicyConfig::TruncatedInversion { budget, h_star } => Runtime::Inversion {
                v: calibrate_inversion(*budget, mean_gain()?, *h_star)?,
                h_star: *h_star,
            },
            PolicyConfig::OptimalDataDriven { budget } => {
                if channel.fading.is_some() {
                    // The optimum depends on the slot's gain.
                    Runtime::TimeVarying {
                        budgets: BudgetSource::Sequence(vec![*budget]),
                    }
                } else {
                    Runtime::Stationary {
                        schedule: StationarySchedule::optimal(*budget, &channel, horizon, &model, &steady)?,
                    }
                }
            }
            PolicyConfig::DataDriven { base_power, .. } => Runtime::Stationary {
                schedule: StationarySchedule::from_weights(
                    &policy.weight_matrices()?,
                    *base_power,
                    horizon,
                    &model,
                    &steady,
                )?,
            },
            PolicyConfig::TimeVaryingOptimal {
                budgets,
                match_inversion,
            } => Runtime::TimeVarying {
                budgets: match match_inversion {
                    Some(spec) => BudgetSource::Inversion {
                        v: calibrate_inversion(spec.budget, mean_gain()?, spec.h_star)?,
                        h_star: spec.h_star,
                    },
                    None => BudgetSource::Sequence(budgets.clone()),
                },
            },
        };
        let powers = MatrixPowers::new(model.a(), horizon + 1);
        Ok(Self {
            model,
            steady,
            channel,
            powers,
            horizon,
            burn_in,
            seed,
            kind: policy.kind(),
            runtime,
            channel_override: ChannelOverride::Random,
        })
    }

    pub fn with_channel_override(mut self, o: ChannelOverride) -> Self {
        self.channel_override = o;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn steady(&self) -> &SteadyState {
        &self.steady
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn tag(&self) -> &'static str {
        self.kind.tag()
    }

    /// Precomputed per-τ states of a stationary data-driven policy.
    pub fn schedule(&self) -> Option<&StationarySchedule> {
        match &self.runtime {
            Runtime::Stationary { schedule } => Some(schedule),
            _ => None,
        }
    }

    /// Calibrated inversion level `v`, if the policy uses one.
    pub fn inversion_level(&self) -> Option<f64> {
        match &self.runtime {
            Runtime::Inversion { v, .. }
            | Runtime::TimeVarying {
                budgets: BudgetSource::Inversion { v, .. },
            } => Some(*v),
            _ => None,
        }
    }

    /// Runs trial `trial`, handing every scored slot to `visit`.
    pub fn run_trial_with<F>(&self, trial: u64, mut visit: F) -> Result<(), SimError>
    where
        F: FnMut(&StepRecord<'_>),
    {
        let mut plant_rng = stream_rng(self.seed, trial, Stream::Plant);
        let mut channel_rng = stream_rng(self.seed, trial, Stream::Channel);
        let mut fading_rng = stream_rng(self.seed, trial, Stream::Fading);
        let model = &self.model;
        let steady = &self.steady;

        let mut x = sample_initial_state(model, &mut plant_rng);
        let mut filter = LocalFilter::new(model);
        for _ in 0..self.burn_in {
            let (xn, y) = simulate_step(&x, model, &mut plant_rng);
            x = xn;
            filter = filter.kalman_update(&y, model, steady);
        }
        let mut filter = filter.freeze(steady);
        // γ₀ = 1: the receiver starts from the sensor's current estimate.
        let mut remote = RemoteState::after_receipt(filter.estimate.clone(), steady);
        let mut tv_state = PolicyState::initial(model.state_dim());
        let mut gamma_prev = true;

        for k in 1..=self.horizon {
            let (xn, y) = simulate_step(&x, model, &mut plant_rng);
            x = xn;
            filter = filter.kalman_update(&y, model, steady);
            let tau = remote.tau;
            let eps = incremental_innovation(&filter.estimate, &remote.last_rx, tau, &self.powers);

            let gain = if self.channel.fading.is_some() {
                sample_fading_gain(&self.channel, &mut fading_rng)?.max(f64::MIN_POSITIVE)
            } else {
                1.0
            };
            let u: f64 = channel_rng.random();

            let step_err = |source| SimError::Step { trial, k, source };
            let power = match &self.runtime {
                Runtime::Constant { budget } => *budget,
                Runtime::Inversion { v, h_star } => truncated_inversion_power(gain, *v, *h_star),
                Runtime::Stationary { schedule } => {
                    let state = schedule.state(tau).ok_or_else(|| {
                        SimError::Invalid(format!("holding time {tau} beyond schedule"))
                    })?;
                    let eff = self.channel.effective(gain)?;
                    power_ef(&eps, state, schedule.base_power(), &eff).map_err(step_err)?
                }
                Runtime::TimeVarying { budgets } => {
                    let budget = match budgets {
                        BudgetSource::Sequence(seq) => seq[(k - 1) % seq.len()],
                        BudgetSource::Inversion { v, h_star } => truncated_inversion_power(gain, *v, *h_star),
                    };
                    let eff = self.channel.effective(gain)?;
                    let (power, next) =
                        time_varying_step(&tv_state, gamma_prev, &eps, budget, &eff, model, steady)
                            .map_err(step_err)?;
                    tv_state = next;
                    power
                }
            };

            let p_drop = drop_probability(power, gain, &self.channel)?;
            let gamma = match self.channel_override {
                ChannelOverride::Random => u >= p_drop,
                ChannelOverride::AlwaysReceive => true,
                ChannelOverride::AlwaysDrop => false,
            };

            let policy_state = match &self.runtime {
                Runtime::Stationary { schedule } => schedule.state(tau),
                Runtime::TimeVarying { .. } => Some(&tv_state),
                _ => None,
            };
            if gamma {
                remote.on_receipt(&filter.estimate, steady);
            } else if self.runtime.informative_drops() {
                let psi = policy_state.expect("data-driven policies carry Ψ").psi();
                remote.on_drop(psi, &self.powers, steady);
            } else {
                remote.on_drop_baseline(model, &self.powers);
            }
            gamma_prev = gamma;

            visit(&StepRecord {
                trial,
                k,
                tau,
                gamma,
                power,
                gain,
                drop_probability: p_drop,
                state: &x,
                local_estimate: &filter.estimate,
                innovation: &eps,
                remote: &remote,
                policy_state,
            });
        }
        Ok(())
    }

    pub fn run_trial(&self, trial: u64) -> Result<Vec<TraceRow>, SimError> {
        let mut rows = Vec::with_capacity(self.horizon);
        let tag = self.tag();
        self.run_trial_with(trial, |r| {
            rows.push(TraceRow {
                trial: r.trial,
                k: r.k,
                gamma: r.gamma as u8,
                tau: r.tau,
                power: r.power,
                gain: r.gain,
                trace_p: r.covariance_trace(),
                squared_error: r.squared_error(),
                policy: tag,
            })
        })?;
        Ok(rows)
    }
}
