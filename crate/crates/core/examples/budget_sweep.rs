//! `J_30` of the budget-optimal data-driven controller against constant
//! power, over a grid of average power budgets.
//!
//! cargo run --release --example budget_sweep -- [trials]

use ddpc::sim::config::ExperimentConfig;
use ddpc::sim::montecarlo::{combined_se, sweep_budget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let cfg = ExperimentConfig {
        trials,
        seed: 2024,
        ..ExperimentConfig::default()
    };
    let grid: Vec<f64> = (1..=10).map(f64::from).collect();
    let rows = sweep_budget(&cfg, &grid)?;
    println!("{:>6} {:>22} {:>22} {:>8}", "budget", "data-driven J (se)", "constant J (se)", "gap/se");
    for pair in rows.chunks(2) {
        let (ef, base) = (&pair[0], &pair[1]);
        let se = combined_se(ef.se, base.se);
        println!(
            "{:>6.1} {:>13.4} ({:.4}) {:>13.4} ({:.4}) {:>8.2}",
            ef.budget,
            ef.j,
            ef.se,
            base.j,
            base.se,
            (base.j - ef.j) / se
        );
    }
    Ok(())
}
