use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use iada_core::checkpoint::save_checkpoint;
use iada_core::config::{Dataset, ExperimentConfig};
use iada_core::domains::{generate_pair, load_labeled, load_unlabeled, save_pair};
use iada_core::trainer::{
    ablation_sweep, train as train_seeds, write_sweep_csv, SweepAxis, METRIC_NAMES,
};

use crate::{CmdResult, Failure};

pub const MANIFEST: &str = "manifest.toml";

pub fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Appends a timestamped line to `run.log`; outputs proper never carry times.
pub fn log_line(out: &Path, msg: &str) {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    if let Ok(mut f) = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("run.log"))
    {
        let _ = writeln!(f, "{secs} {msg}");
    }
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> CmdResult {
    ensure_dir(out)?;
    let (src, tgt) = generate_pair(&cfg.domains.source_spec(), &cfg.domains.target_spec())?;
    save_pair(out, &src, &tgt)?;
    write_text(&out.join(MANIFEST), &cfg.to_toml())?;
    log_line(out, "gen");
    println!(
        "wrote {} source and {} target rows to {}",
        src.len(),
        tgt.len(),
        out.display()
    );
    Ok(())
}

pub fn dataset(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<Dataset, Failure> {
    match data {
        None => Ok(cfg.domains.generate()?),
        Some(dir) => {
            let c = cfg.domains.classes;
            let src = load_labeled(&dir.join("source.csv"), c)?;
            let tgt = load_unlabeled(&dir.join("target.csv"), c)?;
            Ok(cfg.domains.split(&src, tgt)?)
        }
    }
}

pub fn train(cfg: &ExperimentConfig, data: Option<&Path>, out: &Path) -> CmdResult {
    let ds = dataset(cfg, data)?;
    ensure_dir(out)?;
    let target = ds.target.reveal();
    let eval = [("val", &ds.val), ("target", &target)];
    let (runs, record) = train_seeds(&ds.train, &ds.val, &ds.target, &cfg.train, &eval)?;
    record.write_metrics_csv(&out.join("metrics.csv"))?;
    record.write_summary_csv(&out.join("summary.csv"))?;
    for r in &runs {
        save_checkpoint(
            &out.join("checkpoint").join(format!("seed-{}", r.seed)),
            &r.params,
        )?;
    }
    write_text(&out.join(MANIFEST), &cfg.to_toml())?;
    log_line(out, "train");
    print_aggregates(
        &record
            .aggregate("target")?
            .iter()
            .map(|a| (a.mean, a.cv_percent))
            .collect::<Vec<_>>(),
    );
    Ok(())
}

fn print_aggregates(rows: &[(f64, Option<f64>)]) {
    for (name, (mean, cv)) in METRIC_NAMES.iter().zip(rows) {
        let cv = cv.map_or("n/a".to_string(), |c| format!("{c:.2}%"));
        println!("{name:>12}  {mean:.4}  cv {cv}");
    }
}

fn parse_grid(grid: &str) -> Result<Vec<f64>, Failure> {
    let values: Vec<f64> = grid
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Failure::Usage(format!("grid value `{s}` is not a number")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(Failure::Usage("sweep grid is empty".into()));
    }
    Ok(values)
}

pub fn sweep(
    cfg: &ExperimentConfig,
    axis: &str,
    grid: &str,
    data: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let axis = SweepAxis::parse(axis).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown sweep axis `{axis}`; valid axes: lambda_reg, lambda_adv"
        ))
    })?;
    let grid = parse_grid(grid)?;
    let ds = dataset(cfg, data)?;
    ensure_dir(out)?;
    let rows = ablation_sweep(&ds.train, &ds.val, &ds.target, &cfg.train, axis, &grid)?;
    write_sweep_csv(&out.join(format!("sweep_{}.csv", axis.name())), axis, &rows)?;
    write_text(&out.join(MANIFEST), &cfg.to_toml())?;
    log_line(out, &format!("sweep {}", axis.name()));
    for r in &rows {
        println!(
            "{:>10}  auc {:.4}  balanced_f1 {:.4}",
            r.value, r.auc.mean, r.balanced_f1.mean
        );
    }
    Ok(())
}

pub fn report(run: &Path) -> CmdResult {
    let path = run.join("summary.csv");
    let mut reader = csv::Reader::from_path(&path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        .clone();
    let mut lines = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        if &rec[0] == "mean" || &rec[0] == "cv_percent" {
            lines.push(rec);
        }
    }
    if lines.is_empty() {
        return Err(Failure::Usage(format!(
            "{}: no aggregate rows",
            path.display()
        )));
    }
    for pair in lines.chunks(2) {
        println!("[{}]", &pair[0][1]);
        for (j, name) in header.iter().enumerate().skip(2) {
            let mean: f64 = pair[0][j].parse().unwrap_or(f64::NAN);
            let cv = pair.get(1).map(|r| r[j].to_string()).unwrap_or_default();
            let cv = cv
                .parse::<f64>()
                .map_or("n/a".to_string(), |c| format!("{c:.2}%"));
            println!("{name:>12}  {mean:.4}  cv {cv}");
        }
    }
    Ok(())
}
