//! Experiments described in TOML: a custom plant with a rank-deficient
//! process noise, a hand-picked weight schedule and the optimal controller.
//!
//! cargo run --release --example from_config

use ddpc::sim::config::ExperimentConfig;
use ddpc::sim::montecarlo::simulate;

const EXPERIMENT: &str = r#"
horizon = 20
trials = 5000
seed = 42

[model]
a = [[0.9, 0.2], [0.0, 0.8]]
c = [[1.0, 0.0], [0.0, 1.0]]
q = [[1.0, 0.0], [0.0, 0.0]]
r = [[0.5, 0.0], [0.0, 0.5]]

[channel]
alpha = 1.0
n0w = 2.0

[[policy]]
kind = "optimal_data_driven"
budget = 3.0

[[policy]]
kind = "constant_baseline"
budget = 3.0
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml_str(EXPERIMENT)?;
    for e in simulate(&cfg)? {
        println!("{:<22} J = {:.5} ± {:.5}  power = {:.4}  drops = {:.4}", e.policy, e.final_j(), e.final_se(), e.mean_power, e.drop_rate);
    }
    Ok(())
}
