//! Under Rayleigh block fading: the data-driven controller fed the same
//! per-slot power as truncated channel inversion, against the inversion
//! policy itself.
//!
//! cargo run --release --example fading -- [trials]

use ddpc::sim::config::{ExperimentConfig, PolicyConfig};
use ddpc::sim::montecarlo::{combined_se, fading_comparison};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let mut cfg = ExperimentConfig {
        trials,
        seed: 7,
        policy: vec![PolicyConfig::TruncatedInversion { budget: 5.0, h_star: 5.0 }],
        ..ExperimentConfig::default()
    };
    cfg.channel = cfg.channel.with_fading(1.0)?;
    let report = fading_comparison(&cfg)?;
    println!("inversion level v = {:.4} for budget {} and cutoff {}", report.v, report.budget, report.h_star);
    let (ef, inv) = (&report.data_driven, &report.inversion);
    println!("{:>4} {:>12} {:>12}", "k", "data-driven", "inversion");
    for k in (0..ef.j.len()).step_by(5).chain([ef.j.len() - 1]) {
        println!("{:>4} {:>12.5} {:>12.5}", k + 1, ef.j[k], inv.j[k]);
    }
    let se = combined_se(ef.final_se(), inv.final_se());
    println!("final gap {:.5} = {:.1} se; mean powers {:.4} and {:.4}", inv.final_j() - ef.final_j(), (inv.final_j() - ef.final_j()) / se, ef.mean_power, inv.mean_power);
    Ok(())
}
