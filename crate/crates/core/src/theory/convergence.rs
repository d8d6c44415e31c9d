//! SGD on class-weighted quadratics with step size `2 / (mu (t + gamma))`, and
//! the expected stochastic-gradient norm.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cpi;
use crate::domains::{fmt_f64, write_rows};
use crate::error::{Error, Result};
use crate::proportions;

/// Per-class gradient fields with a known norm bound `G` on a region that
/// [`ClassGradients::sample_point`] draws from.
pub trait ClassGradients: Sync {
    fn dim(&self) -> usize;
    fn classes(&self) -> usize;
    fn grad(&self, class: usize, w: &[f64], out: &mut [f64]);
    fn grad_bound(&self) -> f64;
    fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// `f_i(w) = 1/2 sum_k a_ik (w_k - c_ik)^2` for every class `i`, with all
/// curvatures `a_ik` in `[mu, beta]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    pub curvature: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    pub w0: Vec<f64>,
    pub mu: f64,
    pub beta: f64,
}

impl QuadraticProblem {
    pub fn new(
        curvature: Vec<Vec<f64>>,
        centers: Vec<Vec<f64>>,
        w0: Vec<f64>,
        mu: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(mu > 0.0) || !(beta >= mu) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need 0 < mu <= beta, got mu = {mu}, beta = {beta}"
            )));
        }
        let d = w0.len();
        if d == 0 || curvature.is_empty() || curvature.len() != centers.len() {
            return Err(Error::DimensionMismatch(
                "quadratic problem needs matching, nonempty class lists".into(),
            ));
        }
        for (a, c) in curvature.iter().zip(&centers) {
            if a.len() != d || c.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "class rows must have length {d}"
                )));
            }
            if let Some(v) = a.iter().find(|v| !(mu..=beta).contains(*v)) {
                return Err(Error::InvalidArgument(format!(
                    "curvature {v} is outside [{mu}, {beta}]"
                )));
            }
        }
        Ok(Self {
            curvature,
            centers,
            w0,
            mu,
            beta,
        })
    }

    /// Curvatures uniform in `[mu, beta]`, centers standard normal,
    /// start at `(2, .., 2)`.
    pub fn random(dim: usize, classes: usize, mu: f64, beta: f64, seed: u64) -> Result<Self> {
        if !(mu > 0.0) || !(beta >= mu) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < mu <= beta, got mu = {mu}, beta = {beta}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut curvature = Vec::with_capacity(classes);
        let mut centers = Vec::with_capacity(classes);
        for _ in 0..classes {
            curvature.push((0..dim).map(|_| rng.random_range(mu..=beta)).collect());
            centers.push(
                (0..dim)
                    .map(|_| rng.sample(rand_distr::StandardNormal))
                    .collect(),
            );
        }
        Self::new(curvature, centers, vec![2.0; dim], mu, beta)
    }

    /// `L(w) = 1/2 mu w^2` from `w0 = 1`: one class, so every stochastic
    /// gradient is the exact one.
    pub fn one_dim(mu: f64) -> Result<Self> {
        Self::new(vec![vec![mu]], vec![vec![0.0]], vec![1.0], mu, mu)
    }

    /// Per-coordinate hull of the start and all centers. Steps with
    /// `eta * a <= 1` keep the iterates inside it.
    pub fn region(&self) -> Vec<(f64, f64)> {
        (0..self.w0.len())
            .map(|k| {
                self.centers
                    .iter()
                    .fold((self.w0[k], self.w0[k]), |(lo, hi), c| {
                        (lo.min(c[k]), hi.max(c[k]))
                    })
            })
            .collect()
    }

    /// Class mixture `(pi_s + pi_t) / 2` that the stochastic gradient is
    /// unbiased for.
    pub fn mixture(pi_s: &[f64], pi_t: &[f64]) -> Vec<f64> {
        pi_s.iter().zip(pi_t).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn loss(&self, rho: &[f64], w: &[f64]) -> f64 {
        rho.iter()
            .zip(self.curvature.iter().zip(&self.centers))
            .map(|(r, (a, c))| {
                r * 0.5
                    * a.iter()
                        .zip(c)
                        .zip(w)
                        .map(|((a, c), w)| a * (w - c) * (w - c))
                        .sum::<f64>()
            })
            .sum()
    }

    pub fn optimum(&self, rho: &[f64]) -> Vec<f64> {
        (0..self.w0.len())
            .map(|k| {
                let (num, den) = rho
                    .iter()
                    .zip(self.curvature.iter().zip(&self.centers))
                    .fold((0.0, 0.0), |(n, d), (r, (a, c))| {
                        (n + r * a[k] * c[k], d + r * a[k])
                    });
                num / den
            })
            .collect()
    }
}

impl ClassGradients for QuadraticProblem {
    fn dim(&self) -> usize {
        self.w0.len()
    }

    fn classes(&self) -> usize {
        self.curvature.len()
    }

    fn grad(&self, class: usize, w: &[f64], out: &mut [f64]) {
        let (a, c) = (&self.curvature[class], &self.centers[class]);
        for k in 0..out.len() {
            out[k] = a[k] * (w[k] - c[k]);
        }
    }

    /// Largest class-gradient norm over [`QuadraticProblem::region`].
    fn grad_bound(&self) -> f64 {
        let region = self.region();
        self.curvature
            .iter()
            .zip(&self.centers)
            .map(|(a, c)| {
                region
                    .iter()
                    .enumerate()
                    .map(|(k, (lo, hi))| {
                        let far = (lo - c[k]).abs().max((hi - c[k]).abs());
                        (a[k] * far).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.region()
            .iter()
            .map(|&(lo, hi)| {
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect()
    }
}

/// Draws the domain with probability 1/2, then a class from its proportions.
fn sample_class(pi_s: &[f64], pi_t: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let pi = if rng.random_bool(0.5) { pi_s } else { pi_t };
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pi.len() - 1
}

/// `2 beta Delta0 / (mu t + 4 beta) + C_pi G^2 / (2 mu^2 t)` for `t >= 1`.
pub fn convergence_bound(mu: f64, beta: f64, delta0: f64, c_pi: f64, g: f64, t: usize) -> f64 {
    let t = t as f64;
    2.0 * beta * delta0 / (mu * t + 4.0 * beta) + c_pi * g * g / (2.0 * mu * mu * t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub mean_suboptimality: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub mu: f64,
    pub beta_smooth: f64,
    pub g: f64,
    pub gamma_lr: f64,
    pub c_pi: f64,
    pub delta0: f64,
    pub seeds: usize,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Logged iterations where the mean suboptimality exceeds the bound.
    pub violations: Vec<usize>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Step size `2 / (mu (t + gamma))`.
    pub fn learning_rate(&self, t: usize) -> f64 {
        2.0 / (self.mu * (t as f64 + self.gamma_lr))
    }

    /// Bound with the class-proportion factor set to 1.
    pub fn balanced_bound(&self, t: usize) -> f64 {
        convergence_bound(self.mu, self.beta_smooth, self.delta0, 1.0, self.g, t)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = ["t", "mean_suboptimality", "bound", "balanced_bound", "lr"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        write_rows(
            path,
            &header,
            self.trajectory.iter().map(|p| {
                vec![
                    p.t.to_string(),
                    fmt_f64(p.mean_suboptimality),
                    fmt_f64(p.bound),
                    fmt_f64(self.balanced_bound(p.t)),
                    fmt_f64(self.learning_rate(p.t)),
                ]
            }),
        )
    }
}

/// Runs projected SGD with `eta_t = 2 / (mu (t + gamma))`,
/// `gamma = max(4 beta / mu, 1)`, from `problem.w0` for `seeds` independent
/// noise streams. The suboptimality is averaged over seeds at `t = 1` and
/// every multiple of `log_every` up to `iterations`.
pub fn verify_convergence(
    problem: &QuadraticProblem,
    pi_s: &[f64],
    pi_t: &[f64],
    seeds: usize,
    iterations: usize,
    log_every: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    proportions::validate_pair(pi_s, pi_t)?;
    if pi_s.len() != problem.classes() {
        return Err(Error::DimensionMismatch(format!(
            "{} proportions for {} classes",
            pi_s.len(),
            problem.classes()
        )));
    }
    if seeds == 0 || iterations == 0 || log_every == 0 {
        return Err(Error::InvalidArgument(
            "seeds, iterations and log_every must be positive".into(),
        ));
    }
    let (mu, beta) = (problem.mu, problem.beta);
    let gamma = (4.0 * beta / mu).max(1.0);
    let c_pi = cpi(pi_s, pi_t)?;
    let g = problem.grad_bound();
    let rho = QuadraticProblem::mixture(pi_s, pi_t);
    let w_star = problem.optimum(&rho);
    let l_star = problem.loss(&rho, &w_star);
    let delta0: f64 = problem
        .w0
        .iter()
        .zip(&w_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let mut logged: Vec<usize> = (1..=iterations)
        .filter(|t| *t == 1 || t % log_every == 0)
        .collect();
    if logged.last() != Some(&iterations) {
        logged.push(iterations);
    }

    let runs: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut w = problem.w0.clone();
            let mut grad = vec![0.0; w.len()];
            let mut out = Vec::with_capacity(logged.len());
            let mut next = 0;
            for t in 0..iterations {
                let class = sample_class(pi_s, pi_t, &mut rng);
                problem.grad(class, &w, &mut grad);
                let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = if norm > g { g / norm } else { 1.0 };
                let eta = 2.0 / (mu * (t as f64 + gamma));
                for (wk, gk) in w.iter_mut().zip(&grad) {
                    *wk -= eta * scale * gk;
                }
                if t + 1 == logged[next] {
                    out.push(problem.loss(&rho, &w) - l_star);
                    next += 1;
                }
            }
            out
        })
        .collect();

    let mut trajectory = Vec::with_capacity(logged.len());
    let mut violations = Vec::new();
    for (j, &t) in logged.iter().enumerate() {
        let mean = runs.iter().map(|r| r[j]).sum::<f64>() / seeds as f64;
        let bound = convergence_bound(mu, beta, delta0, c_pi, g, t);
        if mean > bound {
            violations.push(t);
        }
        trajectory.push(TrajectoryPoint {
            t,
            mean_suboptimality: mean,
            bound,
        });
    }
    Ok(ConvergenceReport {
        mu,
        beta_smooth: beta,
        g,
        gamma_lr: gamma,
        c_pi,
        delta0,
        seeds,
        trajectory,
        violations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradNormPoint {
    pub monte_carlo: f64,
    /// Standard error of the Monte-Carlo mean.
    pub stderr: f64,
    /// Exact expectation over the finite set of (domain, class) draws.
    pub enumerated: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradNormReport {
    pub c_pi: f64,
    pub g: f64,
    /// `C_pi G^2`.
    pub bound: f64,
    pub points: Vec<GradNormPoint>,
}

impl GradNormReport {
    pub fn max_observed(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.monte_carlo)
            .fold(0.0, f64::max)
    }

    /// Every estimate lies within three standard errors of the bound and
    /// every exact value lies below it.
    pub fn passed(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.monte_carlo <= self.bound + 3.0 * p.stderr && p.enumerated <= self.bound)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = ["point", "monte_carlo", "stderr", "enumerated", "bound"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        write_rows(
            path,
            &header,
            self.points.iter().enumerate().map(|(i, p)| {
                vec![
                    i.to_string(),
                    fmt_f64(p.monte_carlo),
                    fmt_f64(p.stderr),
                    fmt_f64(p.enumerated),
                    fmt_f64(self.bound),
                ]
            }),
        )
    }
}

/// Estimates `E ||g(w)||^2` of the domain-then-class stochastic gradient at
/// `points` random locations, each from `samples` draws.
pub fn gradient_norm_check<P: ClassGradients>(
    problem: &P,
    pi_s: &[f64],
    pi_t: &[f64],
    points: usize,
    samples: usize,
    seed: u64,
) -> Result<GradNormReport> {
    proportions::validate_pair(pi_s, pi_t)?;
    if pi_s.len() != problem.classes() {
        return Err(Error::DimensionMismatch(format!(
            "{} proportions for {} classes",
            pi_s.len(),
            problem.classes()
        )));
    }
    if points == 0 || samples < 2 {
        return Err(Error::InvalidArgument(
            "need at least one point and two samples".into(),
        ));
    }
    let c_pi = cpi(pi_s, pi_t)?;
    let g = problem.grad_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grad = vec![0.0; problem.dim()];
    let mut sq = |class: usize, w: &[f64]| {
        problem.grad(class, w, &mut grad);
        grad.iter().map(|v| v * v).sum::<f64>()
    };
    let mut out = Vec::with_capacity(points);
    for _ in 0..points {
        let w = problem.sample_point(&mut rng);
        let per_class: Vec<f64> = (0..problem.classes()).map(|c| sq(c, &w)).collect();
        let mut enumerated = 0.0;
        for pi in [pi_s, pi_t] {
            for (p, v) in pi.iter().zip(&per_class) {
                enumerated += 0.5 * p * v;
            }
        }
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..samples {
            let v = per_class[sample_class(pi_s, pi_t, &mut rng)];
            sum += v;
            sum2 += v * v;
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
        out.push(GradNormPoint {
            monte_carlo: mean,
            stderr: (var / n).sqrt(),
            enumerated,
        });
    }
    Ok(GradNormReport {
        c_pi,
        g,
        bound: c_pi * g * g,
        points: out,
    })
}
