//! Aggregate metrics over many trials.
//!
//! `J_k = (1/k) Σ_{i≤k} Tr(P_i)` is computed per trial and then averaged,
//! so the standard error is the spread of per-trial `J_k` over `√trials`.
//! Trials are processed in fixed-size chunks in parallel and the chunk
//! accumulators are merged in chunk order, which makes every number
//! independent of the thread count.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, InversionSpec, PolicyConfig};
use super::trial::{SimError, Simulator};

pub const CHUNK: u64 = 256;

/// Running first and second moments of per-k quantities.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    n: u64,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; len],
            sumsq: vec![0.0; len],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.n += 1;
        for (i, v) in values.iter().enumerate() {
            self.sum[i] += v;
            self.sumsq[i] += v * v;
        }
    }

    fn merge(&mut self, other: &Self) {
        self.n += other.n;
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sumsq[i] += other.sumsq[i];
        }
    }

    fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }

    fn standard_error(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.sumsq)
            .map(|(s, ss)| {
                if self.n < 2 {
                    return f64::NAN;
                }
                let mean = s / n;
                let var = ((ss - n * mean * mean) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Accumulator {
    j: Moments,
    mse: Moments,
    power_sum: f64,
    drops: u64,
    slots: u64,
}

impl Accumulator {
    fn new(horizon: usize) -> Self {
        Self {
            j: Moments::new(horizon),
            mse: Moments::new(horizon),
            power_sum: 0.0,
            drops: 0,
            slots: 0,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.j.merge(&other.j);
        self.mse.merge(&other.mse);
        self.power_sum += other.power_sum;
        self.drops += other.drops;
        self.slots += other.slots;
    }
}

/// Per-k estimates for one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JEstimate {
    pub policy: &'static str,
    pub trials: u64,
    /// `J_k` from reported covariances, `k = 1..=K`.
    pub j: Vec<f64>,
    pub j_se: Vec<f64>,
    /// The same average built from squared errors `‖x_i - x̂_i‖²`.
    pub mse: Vec<f64>,
    pub mse_se: Vec<f64>,
    pub mean_power: f64,
    pub drop_rate: f64,
}

impl JEstimate {
    /// `J_K` at the horizon.
    pub fn final_j(&self) -> f64 {
        *self.j.last().expect("horizon >= 1")
    }

    pub fn final_se(&self) -> f64 {
        *self.j_se.last().expect("horizon >= 1")
    }

    pub fn final_mse(&self) -> f64 {
        *self.mse.last().expect("horizon >= 1")
    }
}

/// `√(se_a² + se_b²)`.
pub fn combined_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

fn run_chunk(sim: &Simulator, first: u64, last: u64) -> Result<Accumulator, SimError> {
    let horizon = sim.horizon();
    let mut acc = Accumulator::new(horizon);
    let mut j = vec![0.0; horizon];
    let mut mse = vec![0.0; horizon];
    for trial in first..last {
        let mut cum_p = 0.0;
        let mut cum_e = 0.0;
        sim.run_trial_with(trial, |r| {
            cum_p += r.covariance_trace();
            cum_e += r.squared_error();
            j[r.k - 1] = cum_p / r.k as f64;
            mse[r.k - 1] = cum_e / r.k as f64;
            acc.power_sum += r.power;
            acc.drops += u64::from(!r.gamma);
            acc.slots += 1;
        })?;
        acc.j.push(&j);
        acc.mse.push(&mse);
    }
    Ok(acc)
}

/// Runs trials `first_trial .. first_trial + trials`.
pub fn monte_carlo_j_range(sim: &Simulator, first_trial: u64, trials: u64) -> Result<JEstimate, SimError> {
    if trials == 0 {
        return Err(SimError::Invalid("at least one trial is required".into()));
    }
    let chunks = trials.div_ceil(CHUNK);
    let end = first_trial + trials;
    let parts: Vec<Accumulator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = first_trial + c * CHUNK;
            run_chunk(sim, lo, (lo + CHUNK).min(end))
        })
        .collect::<Result<_, _>>()?;
    let mut total = Accumulator::new(sim.horizon());
    for p in &parts {
        total.merge(p);
    }
    Ok(JEstimate {
        policy: sim.tag(),
        trials,
        j: total.j.mean(),
        j_se: total.j.standard_error(),
        mse: total.mse.mean(),
        mse_se: total.mse.standard_error(),
        mean_power: total.power_sum / total.slots as f64,
        drop_rate: total.drops as f64 / total.slots as f64,
    })
}

pub fn monte_carlo_j(sim: &Simulator, trials: u64) -> Result<JEstimate, SimError> {
    monte_carlo_j_range(sim, 0, trials)
}

/// Estimates for every policy in `cfg`, all on the same trial indices.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<JEstimate>, SimError> {
    cfg.policy
        .iter()
        .map(|p| monte_carlo_j(&Simulator::new(cfg, p)?, cfg.trials as u64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub policy: &'static str,
    pub budget: f64,
    pub j: f64,
    pub se: f64,
    pub mse: f64,
    pub mean_power: f64,
    pub drop_rate: f64,
}

/// `J_K` for each policy of `cfg` at every budget of `grid`.
pub fn sweep_budget(cfg: &ExperimentConfig, grid: &[f64]) -> Result<Vec<SweepRow>, SimError> {
    let mut rows = Vec::with_capacity(grid.len() * cfg.policy.len());
    for &budget in grid {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(SimError::Invalid(format!("budget {budget} must be nonnegative")));
        }
        for template in &cfg.policy {
            let policy = template.with_budget(budget).ok_or_else(|| {
                SimError::Invalid(format!("policy `{}` has no scalar budget to sweep", template.kind().tag()))
            })?;
            let est = monte_carlo_j(&Simulator::new(cfg, &policy)?, cfg.trials as u64)?;
            rows.push(SweepRow {
                policy: est.policy,
                budget,
                j: est.final_j(),
                se: est.final_se(),
                mse: est.final_mse(),
                mean_power: est.mean_power,
                drop_rate: est.drop_rate,
            });
        }
    }
    Ok(rows)
}

/// One slot of the shared-realization comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FadingTraceRow {
    pub k: usize,
    pub gain: f64,
    pub power_ef: f64,
    pub power_inv: f64,
    pub gamma_ef: u8,
    pub gamma_inv: u8,
    pub trace_p_ef: f64,
    pub trace_p_inv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FadingReport {
    pub budget: f64,
    pub h_star: f64,
    pub mean_gain: f64,
    pub v: f64,
    pub data_driven: JEstimate,
    pub inversion: JEstimate,
    pub trace: Vec<FadingTraceRow>,
}

/// The inversion policy of `cfg` and its data-driven counterpart, which
/// spends in each slot what inversion would.
pub fn fading_policies(cfg: &ExperimentConfig) -> Result<(PolicyConfig, PolicyConfig), SimError> {
    let (budget, h_star) = cfg
        .policy
        .iter()
        .find_map(|p| match p {
            PolicyConfig::TruncatedInversion { budget, h_star } => Some((*budget, *h_star)),
            _ => None,
        })
        .ok_or_else(|| SimError::Invalid("fading comparison needs a truncated_inversion policy".into()))?;
    Ok((
        PolicyConfig::TimeVaryingOptimal {
            budgets: Vec::new(),
            match_inversion: Some(InversionSpec { budget, h_star }),
        },
        PolicyConfig::TruncatedInversion { budget, h_star },
    ))
}

/// Aggregate comparison under Rayleigh fading plus one realization
/// (trial 0) on identical gains and plant noise.
pub fn fading_comparison(cfg: &ExperimentConfig) -> Result<FadingReport, SimError> {
    let mean_gain = cfg
        .channel
        .fading
        .map(|f| f.mean_gain)
        .ok_or(crate::channel::ChannelError::FadingNotConfigured)?;
    let (ef_cfg, inv_cfg) = fading_policies(cfg)?;
    let (budget, h_star) = match inv_cfg {
        PolicyConfig::TruncatedInversion { budget, h_star } => (budget, h_star),
        _ => unreachable!(),
    };
    let ef = Simulator::new(cfg, &ef_cfg)?;
    let inv = Simulator::new(cfg, &inv_cfg)?;
    let trials = cfg.trials as u64;
    let data_driven = monte_carlo_j(&ef, trials)?;
    let inversion = monte_carlo_j(&inv, trials)?;

    let mut trace: Vec<FadingTraceRow> = Vec::with_capacity(cfg.horizon);
    ef.run_trial_with(0, |r| {
        trace.push(FadingTraceRow {
            k: r.k,
            gain: r.gain,
            power_ef: r.power,
            power_inv: 0.0,
            gamma_ef: r.gamma as u8,
            gamma_inv: 0,
            trace_p_ef: r.covariance_trace(),
            trace_p_inv: 0.0,
        })
    })?;
    inv.run_trial_with(0, |r| {
        let row = &mut trace[r.k - 1];
        debug_assert_eq!(row.gain, r.gain);
        row.power_inv = r.power;
        row.gamma_inv = r.gamma as u8;
        row.trace_p_inv = r.covariance_trace();
    })?;

    Ok(FadingReport {
        budget,
        h_star,
        mean_gain,
        v: inv.inversion_level().expect("inversion policy has a level"),
        data_driven,
        inversion,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trial::ChannelOverride;

    fn small(trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            trials,
            seed: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn always_receive_gives_p_bar() {
        let cfg = small(300);
        let sim = Simulator::new(&cfg, &PolicyConfig::OptimalDataDriven { budget: 5.0 })
            .unwrap()
            .with_channel_override(ChannelOverride::AlwaysReceive);
        let est = monte_carlo_j(&sim, 300).unwrap();
        let tr = sim.steady().p_bar.trace();
        for (j, se) in est.j.iter().zip(&est.j_se) {
            assert!((j - tr).abs() < 1e-12);
            assert!(*se < 1e-12);
        }
        assert_eq!(est.drop_rate, 0.0);
    }

    #[test]
    fn chunking_does_not_change_results() {
        let cfg = small(600);
        let sim = Simulator::new(&cfg, &PolicyConfig::OptimalDataDriven { budget: 5.0 }).unwrap();
        let whole = monte_carlo_j(&sim, 600).unwrap();
        let again = monte_carlo_j(&sim, 600).unwrap();
        assert_eq!(whole, again);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| monte_carlo_j(&sim, 600).unwrap());
        assert_eq!(whole, single);
    }

    #[test]
    fn zero_budget_policies_coincide() {
        let cfg = small(2000);
        let rows = sweep_budget(&cfg, &[0.0]).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.mean_power, 0.0);
            assert_eq!(r.drop_rate, 1.0);
        }
        // Both report h^τ(P̄) on the same all-drop trace.
        assert!((rows[0].j - rows[1].j).abs() <= 1e-9 * rows[0].j);
    }

    #[test]
    fn disjoint_trial_sets_agree() {
        let cfg = small(4000);
        let sim = Simulator::new(&cfg, &PolicyConfig::ConstantBaseline { budget: 5.0 }).unwrap();
        let a = monte_carlo_j_range(&sim, 0, 4000).unwrap();
        let b = monte_carlo_j_range(&sim, 4000, 4000).unwrap();
        assert!((a.final_j() - b.final_j()).abs() <= 3.0 * combined_se(a.final_se(), b.final_se()));
    }

    #[test]
    fn constant_baseline_matches_geometric_oracle() {
        // Independent oracle: with constant drop probability p the holding
        // time is a renewal process started at τ = 1, and on a drop at
        // holding time τ the reported trace is Tr(h^τ(P̄)). Iterate the
        // exact distribution of τ over the horizon.
        let cfg = small(20_000);
        let budget = 2.0;
        let sim = Simulator::new(&cfg, &PolicyConfig::ConstantBaseline { budget }).unwrap();
        let est = monte_carlo_j(&sim, cfg.trials as u64).unwrap();
        let p = (-budget / cfg.channel.noise_ratio()).exp();
        let model = sim.model();
        let p_bar = sim.steady().p_bar.as_matrix().clone();
        let a = model.a();
        let mut traces = vec![p_bar.trace()];
        let mut h = p_bar.clone();
        for _ in 0..40 {
            h = a * &h * a.transpose() + model.q().as_matrix();
            traces.push(h.trace());
        }
        let mut dist = vec![0.0; 42];
        dist[1] = 1.0;
        let mut cum = 0.0;
        for k in 1..=cfg.horizon {
            let mut expected = 0.0;
            let mut next = vec![0.0; 42];
            for tau in 1..=40 {
                let m = dist[tau];
                if m == 0.0 {
                    continue;
                }
                expected += m * ((1.0 - p) * traces[0] + p * traces[tau]);
                next[1] += m * (1.0 - p);
                next[(tau + 1).min(40)] += m * p;
            }
            dist = next;
            cum += expected;
            let oracle = cum / k as f64;
            let got = est.j[k - 1];
            assert!((got - oracle).abs() <= 0.02 * oracle, "k {k}: {got} vs {oracle}");
        }
    }

    #[test]
    fn fading_report_shares_gains() {
        let mut cfg = small(200);
        cfg.channel = cfg.channel.with_fading(1.0).unwrap();
        cfg.policy = vec![PolicyConfig::TruncatedInversion { budget: 5.0, h_star: 5.0 }];
        let report = fading_comparison(&cfg).unwrap();
        assert_eq!(report.trace.len(), cfg.horizon);
        assert!((report.v - 25.03).abs() < 0.05, "{}", report.v);
        // Budget below the cutoff is v/h*, above it v/h.
        for row in &report.trace {
            let expected = if row.gain > 5.0 { report.v / row.gain } else { report.v / 5.0 };
            assert_eq!(row.power_inv, expected);
        }
        let again = fading_comparison(&cfg).unwrap();
        assert_eq!(report, again);
    }
}
