//! Wall-clock scaling of one training epoch in `n * d`.

use std::path::Path;
use std::time::Instant;

use crate::domains::{fmt_f64, generate, write_rows, DomainSpec, UnlabeledDomain};
use crate::error::{Error, Result};
use crate::model::IadaParams;
use crate::trainer::{run_epoch, TrainConfig};

/// Shortest median epoch time that is trusted, in seconds.
pub const MIN_MEASURABLE_SECONDS: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingPoint {
    pub n: usize,
    pub d: usize,
    /// Median over repeats.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    pub points: Vec<TimingPoint>,
    /// Least-squares slope of `ln seconds` against `ln (n d)`.
    pub slope: f64,
    pub intercept: f64,
}

impl TimingReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = ["n", "d", "nd", "seconds"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        write_rows(
            path,
            &header,
            self.points.iter().map(|p| {
                vec![
                    p.n.to_string(),
                    p.d.to_string(),
                    (p.n * p.d).to_string(),
                    fmt_f64(p.seconds),
                ]
            }),
        )
    }
}

fn synthetic(n: usize, d: usize, pi: &[f64], shift: f64, seed: u64) -> DomainSpec {
    let classes = pi.len();
    let class_means = (0..classes)
        .map(|c| {
            (0..d)
                .map(|k| if k % classes == c { 1.5 } else { 0.0 })
                .collect()
        })
        .collect();
    DomainSpec {
        n,
        d,
        classes,
        pi: pi.to_vec(),
        class_means,
        class_scales: vec![1.0; classes],
        mean_shift: vec![shift; d],
        noise_scale: 0.0,
        concept_rotation: 0.0,
        seed,
    }
}

/// Ordinary least squares `y = a + b x`.
fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Times one epoch (`ceil(n / batch_budget)` steps on an `n x d` source and
/// an `n x d` target) per size and fits the log-log slope. Runs on the
/// calling thread only; sizes are measured one after another.
pub fn timing_scaling_check(
    sizes: &[(usize, usize)],
    repeats: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TimingReport> {
    if sizes.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "timing needs at least 4 sizes, got {}",
            sizes.len()
        )));
    }
    let nd: Vec<f64> = sizes.iter().map(|&(n, d)| (n * d) as f64).collect();
    let lo = nd.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = nd.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0) || hi < 8.0 * lo {
        return Err(Error::InvalidArgument(format!(
            "sizes must span at least 8x in n*d, got {lo} to {hi}"
        )));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument(
            "timing needs at least one repeat".into(),
        ));
    }
    let pi = [0.289, 0.711];
    let mut points = Vec::with_capacity(sizes.len());
    for &(n, d) in sizes {
        let src = generate(&synthetic(n, d, &pi, 0.0, seed))?;
        let tgt = UnlabeledDomain::from_labeled(generate(&synthetic(
            n,
            d,
            &[0.453, 0.547],
            0.5,
            seed + 1,
        ))?);
        let mut times = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let mut params = IadaParams::init(d, cfg.hidden, pi.len(), seed + r as u64)?;
            let t0 = Instant::now();
            run_epoch(&src, &tgt, cfg, &mut params, seed + r as u64)?;
            times.push(t0.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        let seconds = times[times.len() / 2];
        if seconds < MIN_MEASURABLE_SECONDS {
            return Err(Error::InvalidArgument(format!(
                "epoch at n = {n}, d = {d} took {seconds:.2e} s, below timer resolution; use larger sizes"
            )));
        }
        points.push(TimingPoint { n, d, seconds });
    }
    let lx: Vec<f64> = nd.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.seconds.ln()).collect();
    let (intercept, slope) = fit_line(&lx, &ly);
    Ok(TimingReport {
        points,
        slope,
        intercept,
    })
}
