//! One-epoch wall time across sizes.
//!
//! `cargo run --release --example timing`

use iada_core::config::TheoryConfig;
use iada_core::theory::timing_scaling_check;
use iada_core::trainer::TrainConfig;

fn main() -> iada_core::Result<()> {
    let th = TheoryConfig::default();
    let cfg = TrainConfig {
        hidden: th.timing_hidden,
        ..TrainConfig::default()
    };
    let r = timing_scaling_check(&th.timing_sizes, th.timing_repeats, &cfg, 0)?;
    for p in &r.points {
        println!("n {:>6}  d {:>3}  {:.4}s", p.n, p.d, p.seconds);
    }
    println!("slope {:.3}", r.slope);
    Ok(())
}
