//! Target AUC across a coefficient grid.
//!
//! `cargo run --release --example sweep -- <lambda_adv|lambda_reg> [preset]`

use iada_core::config::preset;
use iada_core::trainer::{ablation_sweep, SweepAxis};

fn main() -> iada_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let axis = args
        .get(1)
        .and_then(|a| SweepAxis::parse(a))
        .expect("axis lambda_adv or lambda_reg");
    let cfg = preset(args.get(2).map_or("ed4-ed1", String::as_str)).expect("known preset");
    let ds = cfg.domains.generate()?;
    let grid = [1e-4, 1e-3, 1e-2, 1e-1];
    for r in ablation_sweep(&ds.train, &ds.val, &ds.target, &cfg.train, axis, &grid)? {
        println!(
            "{:>8.0e}  auc {:.4}  balanced-f1 {:.4}",
            r.value, r.auc.mean, r.balanced_f1.mean
        );
    }
    Ok(())
}
