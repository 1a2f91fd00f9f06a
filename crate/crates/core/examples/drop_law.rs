//! The packet-loss law of the physical channel: closed form against a
//! Monte Carlo frequency at a few transmit powers and fading gains.
//!
//! cargo run --release --example drop_law

use ddpc::channel::{drop_probability, transmit, ChannelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ChannelParams::new(1.0, 3.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    println!("{:>6} {:>6} {:>10} {:>10}", "power", "gain", "formula", "empirical");
    for &gain in &[0.5, 1.0, 2.0] {
        for &power in &[0.0, 1.0, 3.0, 6.0] {
            let lost = (0..n).filter(|_| !transmit(power, gain, &params, &mut rng).unwrap()).count();
            println!(
                "{power:>6.1} {gain:>6.1} {:>10.5} {:>10.5}",
                drop_probability(power, gain, &params)?,
                lost as f64 / n as f64
            );
        }
    }
    Ok(())
}
