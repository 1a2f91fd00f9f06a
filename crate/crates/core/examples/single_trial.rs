//! One trial of the data-driven controller, slot by slot: the power it
//! spends, whether the packet arrives and how the remote covariance grows
//! through a run of losses.
//!
//! cargo run --example single_trial -- [trial]

use ddpc::sim::config::{ExperimentConfig, PolicyConfig};
use ddpc::sim::trial::Simulator;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trial: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = ExperimentConfig::default();
    let sim = Simulator::new(&cfg, &PolicyConfig::OptimalDataDriven { budget: 5.0 })?;
    println!("{:>3} {:>4} {:>8} {:>6} {:>9} {:>9} {:>9}", "k", "tau", "power", "rx", "P(drop)", "tr P", "|e|²");
    sim.run_trial_with(trial, |r| {
        println!(
            "{:>3} {:>4} {:>8.3} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            r.k,
            r.tau,
            r.power,
            r.gamma,
            r.drop_probability,
            r.covariance_trace(),
            r.squared_error()
        );
    })?;
    Ok(())
}
