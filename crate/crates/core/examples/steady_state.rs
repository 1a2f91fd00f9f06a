//! Steady-state filter of the two-state benchmark and the stationary
//! schedule of the budget-optimal controller: per holding time, the
//! innovation covariance, the posterior kept on a drop and the drop rate.
//!
//! cargo run --example steady_state -- [budget]

use ddpc::channel::ChannelParams;
use ddpc::plant::{SteadyState, SystemModel};
use ddpc::policy::{drop_rate_formula, expected_power, optimal_parameters, StationarySchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5.0);
    let model = SystemModel::two_state_benchmark();
    let ss = SteadyState::compute(&model)?;
    let params = ChannelParams::new(1.0, 3.0)?;
    println!("spectral radius of A: {:.4} (stable: {})", model.spectral_radius(), model.is_stable());
    println!("P̄ = {:.5}", ss.p_bar.as_matrix());
    println!("Σ₁ = h(P̄) - P̄ = {:.5}", ss.increment.as_matrix());

    let opt = optimal_parameters(budget, model.state_dim(), &params);
    println!("budget {budget}: λ* = {:.4}, ω = {:.4}", opt.lambda, opt.base_power);
    let schedule = StationarySchedule::optimal(budget, &params, 8, &model, &ss)?;
    println!("{:>3} {:>10} {:>10} {:>6} {:>10} {:>10}", "tau", "tr Σ", "tr Ψ", "rank", "E[power]", "drop rate");
    for s in schedule.states() {
        println!(
            "{:>3} {:>10.5} {:>10.5} {:>6} {:>10.5} {:>10.5}",
            s.tau(),
            s.sigma().as_matrix().trace(),
            s.psi().as_matrix().trace(),
            s.rank(),
            expected_power(s.sigma(), s.psi(), schedule.base_power(), &params)?,
            drop_rate_formula(s.sigma(), s.psi(), schedule.base_power(), &params)?
        );
    }
    Ok(())
}
