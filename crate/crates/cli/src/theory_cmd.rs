use std::fs;
use std::path::Path;

use iada_core::config::ExperimentConfig;
use iada_core::sampling::allocate_batches;
use iada_core::theory::{
    complexity_estimate, empirical_bound, gradient_norm_check, timing_scaling_check,
    verify_convergence, ProbeConfig, QuadraticProblem,
};
use iada_core::trainer::{evaluate, prediction_thresholds, train_seed, TrainConfig};

use crate::commands::{ensure_dir, log_line};
use crate::{CmdResult, Failure};

pub const CHECKS: [&str; 5] = ["bound", "convergence", "gradnorm", "complexity", "alloc"];

/// Accepted range for the fitted log-log slope of epoch time in `n * d`.
pub const SLOPE_RANGE: (f64, f64) = (0.8, 1.2);

/// PASS/FAIL lines of one check.
struct Verdicts(Vec<(bool, String)>);

impl Verdicts {
    fn push(&mut self, ok: bool, msg: String) {
        self.0.push((ok, msg));
    }

    fn render(&self) -> String {
        self.0
            .iter()
            .map(|(ok, m)| format!("{} {m}\n", if *ok { "PASS" } else { "FAIL" }))
            .collect()
    }
}

pub fn run(cfg: &ExperimentConfig, check: &str, out: &Path) -> CmdResult {
    if !CHECKS.contains(&check) {
        return Err(Failure::Usage(format!(
            "unknown theory check `{check}`; valid checks: {}",
            CHECKS.join(", ")
        )));
    }
    ensure_dir(out)?;
    let mut v = Verdicts(Vec::new());
    match check {
        "bound" => bound(cfg, out, &mut v)?,
        "convergence" => convergence(cfg, out, &mut v)?,
        "gradnorm" => gradnorm(cfg, out, &mut v)?,
        "complexity" => complexity(cfg, out, &mut v)?,
        _ => alloc(cfg, out, &mut v)?,
    }
    let text = v.render();
    print!("{text}");
    let path = out.join(format!("theory_{check}.txt"));
    fs::write(&path, &text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    log_line(out, &format!("theory {check}"));
    if v.0.iter().all(|(ok, _)| *ok) {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

fn bound(cfg: &ExperimentConfig, out: &Path, v: &mut Verdicts) -> CmdResult {
    let ds = cfg.domains.generate()?;
    let target = ds.target.reveal();
    let seed = cfg.train.seeds[0];
    let run = train_seed(&ds.train, &ds.val, &ds.target, &cfg.train, seed, &[], None)?;
    let tau = prediction_thresholds(
        &run.params,
        &ds.train.class_counts,
        cfg.train.threshold_mode,
    )?;
    let eps =
        |dom| evaluate(&run.params, dom, &tau, cfg.train.use_attention).map(|m| 1.0 - m.accuracy);
    let probe = ProbeConfig {
        folds: cfg.theory.probe_folds,
        seed,
        ..ProbeConfig::default()
    };
    let r = empirical_bound(eps(&ds.val)?, eps(&target)?, &ds.train, &target, &probe)?;
    r.write_csv(&out.join("bound.csv"))?;
    let eps_t = r.eps_t_observed.unwrap_or(f64::NAN);
    v.push(
        r.holds() == Some(true),
        format!(
            "target error {eps_t:.4} <= bound {:.4} (eps_s {:.4}, gap {:.4}, discrepancy {:.4}, lambda {:.4})",
            r.bound, r.eps_s, r.proportion_gap, r.discrepancy_term, r.lambda_joint
        ),
    );
    Ok(())
}

fn problems(cfg: &ExperimentConfig) -> Result<Vec<(usize, QuadraticProblem)>, Failure> {
    let th = &cfg.theory;
    th.dims
        .iter()
        .map(|&d| {
            let p = QuadraticProblem::random(
                d,
                th.pi_source.len(),
                th.mu,
                th.beta_smooth,
                cfg.domains.seed + d as u64,
            )?;
            Ok((d, p))
        })
        .collect()
}

fn convergence(cfg: &ExperimentConfig, out: &Path, v: &mut Verdicts) -> CmdResult {
    let th = &cfg.theory;
    let (pi_s, pi_t) = (&th.pi_source, &th.pi_target);
    let c = pi_s.len();
    let uniform = vec![1.0 / c as f64; c];
    for (d, p) in problems(cfg)? {
        for (label, a, b) in [("imbalanced", pi_s, pi_t), ("balanced", &uniform, &uniform)] {
            let r = verify_convergence(
                &p,
                a,
                b,
                th.seeds,
                th.iterations,
                th.log_every,
                cfg.domains.seed,
            )?;
            r.write_csv(&out.join(format!("convergence_{label}_d{d}.csv")))?;
            let last = r.trajectory.last().expect("nonempty trajectory");
            v.push(
                r.passed(),
                format!(
                    "{label} d={d}: {} violations over {} logged steps; C_pi {:.4}, final suboptimality {:.3e} vs bound {:.3e}",
                    r.violations.len(),
                    r.trajectory.len(),
                    r.c_pi,
                    last.mean_suboptimality,
                    last.bound
                ),
            );
            if label == "balanced" {
                v.push(r.c_pi == 1.0, format!("balanced d={d}: C_pi = {}", r.c_pi));
            }
        }
    }
    Ok(())
}

fn gradnorm(cfg: &ExperimentConfig, out: &Path, v: &mut Verdicts) -> CmdResult {
    let (pi_s, pi_t) = (&cfg.theory.pi_source, &cfg.theory.pi_target);
    for (d, p) in problems(cfg)? {
        let r = gradient_norm_check(
            &p,
            pi_s,
            pi_t,
            10,
            cfg.theory.gradnorm_samples,
            cfg.domains.seed,
        )?;
        r.write_csv(&out.join(format!("gradnorm_d{d}.csv")))?;
        v.push(
            r.passed(),
            format!(
                "d={d}: max E||g||^2 {:.4} <= C_pi G^2 {:.4}",
                r.max_observed(),
                r.bound
            ),
        );
    }
    Ok(())
}

fn complexity(cfg: &ExperimentConfig, out: &Path, v: &mut Verdicts) -> CmdResult {
    let dm = &cfg.domains;
    let e = complexity_estimate(dm.source_n, dm.target_n, dm.d, &dm.source_pi, &dm.target_pi)?;
    e.write_csv(&out.join("complexity.csv"))?;
    println!(
        "time term {:.0}, space term {:.0}, balanced-form time {:.0}",
        e.time, e.space, e.time_balanced_form
    );
    let th = &cfg.theory;
    let tc = TrainConfig {
        hidden: th.timing_hidden,
        ..cfg.train.clone()
    };
    let r = timing_scaling_check(&th.timing_sizes, th.timing_repeats, &tc, dm.seed)?;
    r.write_csv(&out.join("timing.csv"))?;
    v.push(
        (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&r.slope),
        format!(
            "epoch time vs n*d slope {:.3} in [{}, {}]",
            r.slope, SLOPE_RANGE.0, SLOPE_RANGE.1
        ),
    );
    Ok(())
}

fn alloc(cfg: &ExperimentConfig, out: &Path, v: &mut Verdicts) -> CmdResult {
    let (pi_s, pi_t) = (&cfg.domains.source_pi, &cfg.domains.target_pi);
    let budget = cfg.train.batch_budget;
    let raw = allocate_batches(pi_s, pi_t, budget, false)?;
    let norm = allocate_batches(pi_s, pi_t, budget, true)?;
    let formula_sum: f64 = raw.formula.iter().sum();
    let mut text = String::from("class,formula,raw,normalized\n");
    for c in 0..pi_s.len() {
        text.push_str(&format!(
            "{},{:.16e},{},{}\n",
            c + 1,
            raw.formula[c],
            raw.counts[c],
            norm.counts[c]
        ));
    }
    let path = out.join("alloc.csv");
    fs::write(&path, &text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    println!("formula {:?} (sum {formula_sum:.4})", raw.formula);
    println!("raw {:?} (sum {})", raw.counts, raw.total());
    println!("normalized {:?} (sum {})", norm.counts, norm.total());
    if (formula_sum - budget as f64).abs() > 1e-9 {
        println!("note: the formula sizes sum to {formula_sum:.4}, not the budget {budget}");
    }
    v.push(
        norm.total() == budget,
        format!("normalized allocation sums to the budget {budget}"),
    );
    Ok(())
}
