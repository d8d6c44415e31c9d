//! Target metrics of the full model against its single-component ablations.
//!
//! `cargo run --release --example ablation -- [preset] [overlay.toml]`

use std::time::Instant;

use iada_core::config::{preset, ExperimentConfig};
use iada_core::trainer::{train, ThresholdMode, TrainConfig};

fn main() -> iada_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("ed4-ed3", String::as_str);
    let mut cfg = preset(name).expect("known preset");
    if let Some(path) = args.get(2) {
        let text = std::fs::read_to_string(path).expect("readable overlay");
        cfg = ExperimentConfig::parse(&text, cfg)?;
    }
    let ds = cfg.domains.generate()?;
    let target = ds.target.reveal();
    let variants: Vec<(&str, Box<dyn Fn(&mut TrainConfig)>)> = vec![
        ("full", Box::new(|_| {})),
        ("no-attention", Box::new(|c| c.use_attention = false)),
        ("unit-weights", Box::new(|c| c.use_class_weights = false)),
        (
            "no-thresholds",
            Box::new(|c| c.threshold_mode = ThresholdMode::Off),
        ),
        ("no-adversary", Box::new(|c| c.loss.lambda0 = 0.0)),
    ];
    for (label, f) in &variants {
        let mut c = cfg.train.clone();
        f(&mut c);
        let t0 = Instant::now();
        let (_, rec) = train(&ds.train, &ds.val, &ds.target, &c, &[("target", &target)])?;
        let agg = rec.aggregate("target")?;
        println!(
            "{label:>14}  acc {:.4}  auc {:.4}  balanced-f1 {:.4}  ({:.1}s)",
            agg[0].mean,
            agg[1].mean,
            agg[5].mean,
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
