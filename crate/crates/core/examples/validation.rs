//! The statistical self-check suite at a reduced sample size, with an
//! optional fault injected into the posterior the oracles expect.
//!
//! cargo run --release --example validation -- [psi_scale]

use ddpc::sim::config::ExperimentConfig;
use ddpc::sim::validate::{validate, ValidateOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let psi_scale = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let opts = ValidateOptions {
        samples: 30_000,
        deep_samples: 20_000,
        power_slots: 30_000,
        psi_scale,
        ..ValidateOptions::default()
    };
    let report = validate(&ExperimentConfig::default(), &opts)?;
    for o in &report.oracles {
        println!(
            "{} {:<40} observed {:<12.6} expected {:<12.6} {}",
            if o.passed { "ok  " } else { "FAIL" },
            o.name,
            o.observed,
            o.expected,
            o.detail
        );
    }
    println!("all passed: {}", report.passed);
    Ok(())
}
