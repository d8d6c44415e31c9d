//! Numerical evaluation of the generalization, convergence and complexity
//! results, with empirical checks against the synthetic benchmark.

mod convergence;
mod probe;
mod timing;

use std::path::Path;

pub use convergence::{
    convergence_bound, gradient_norm_check, verify_convergence, ClassGradients, ConvergenceReport,
    GradNormPoint, GradNormReport, QuadraticProblem, TrajectoryPoint,
};
pub use probe::{estimate_class_discrepancy, estimate_joint_error, ProbeConfig, SoftmaxProbe};
pub use timing::{timing_scaling_check, TimingPoint, TimingReport};

use crate::domains::{fmt_f64, write_rows, LabeledDomain};
use crate::error::{Error, Result};
use crate::proportions;

/// Terms of the class-imbalance generalization bound.
#[derive(Clone, Debug, PartialEq)]
pub struct GenBoundReport {
    pub eps_s: f64,
    /// `sum |pi_s - pi_t|`.
    pub proportion_gap: f64,
    /// `sum min(pi_s, pi_t) d_i`.
    pub discrepancy_term: f64,
    pub lambda_joint: f64,
    pub bound: f64,
    /// Measured target error, when the caller has one.
    pub eps_t_observed: Option<f64>,
}

impl GenBoundReport {
    /// `sum pi_s d_i + eps_s + lambda`, the form taken when both domains
    /// share their class proportions.
    pub fn balanced_form(eps_s: f64, pi: &[f64], d_per_class: &[f64], lambda_joint: f64) -> f64 {
        pi.iter().zip(d_per_class).map(|(p, d)| p * d).sum::<f64>() + eps_s + lambda_joint
    }

    /// Whether the observed target error respects the bound.
    pub fn holds(&self) -> Option<bool> {
        self.eps_t_observed.map(|e| e <= self.bound)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut rows = vec![
            ("eps_s", self.eps_s),
            ("proportion_gap", self.proportion_gap),
            ("discrepancy_term", self.discrepancy_term),
            ("lambda_joint", self.lambda_joint),
            ("bound", self.bound),
        ];
        if let Some(e) = self.eps_t_observed {
            rows.push(("eps_t_observed", e));
        }
        write_rows(
            path,
            &["term".into(), "value".into()],
            rows.into_iter()
                .map(|(k, v)| vec![k.to_string(), fmt_f64(v)]),
        )
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be a finite nonnegative number, got {v}"
        )))
    }
}

/// `eps_t <= eps_s + sum|pi_s - pi_t| + sum min(pi_s, pi_t) d_i + lambda`.
pub fn generalization_bound(
    eps_s: f64,
    pi_s: &[f64],
    pi_t: &[f64],
    d_per_class: &[f64],
    lambda_joint: f64,
) -> Result<GenBoundReport> {
    proportions::validate_pair(pi_s, pi_t)?;
    if d_per_class.len() != pi_s.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} discrepancies for {} classes",
            d_per_class.len(),
            pi_s.len()
        )));
    }
    if let Some(d) = d_per_class.iter().find(|d| !(0.0..=2.0).contains(*d)) {
        return Err(Error::InvalidArgument(format!(
            "class discrepancy {d} is outside [0, 2]"
        )));
    }
    check_nonneg("eps_s", eps_s)?;
    check_nonneg("lambda_joint", lambda_joint)?;
    let proportion_gap = proportions::l1_gap(pi_s, pi_t);
    let discrepancy_term = pi_s
        .iter()
        .zip(pi_t)
        .zip(d_per_class)
        .map(|((a, b), d)| a.min(*b) * d)
        .sum();
    Ok(GenBoundReport {
        eps_s,
        proportion_gap,
        discrepancy_term,
        lambda_joint,
        bound: eps_s + proportion_gap + discrepancy_term + lambda_joint,
        eps_t_observed: None,
    })
}

/// Bound for a trained classifier with errors `eps_s` (held-out source) and
/// `eps_t` (target). Proportions are the empirical ones; discrepancies and
/// the joint error come from affine probes on the input features.
pub fn empirical_bound(
    eps_s: f64,
    eps_t: f64,
    src: &LabeledDomain,
    tgt: &LabeledDomain,
    probe: &ProbeConfig,
) -> Result<GenBoundReport> {
    let d = (0..src.classes)
        .map(|c| estimate_class_discrepancy(src, tgt, c, probe))
        .collect::<Result<Vec<_>>>()?;
    let lambda = estimate_joint_error(src, tgt, probe)?;
    let mut r = generalization_bound(eps_s, &src.pi_empirical, &tgt.pi_empirical, &d, lambda)?;
    r.eps_t_observed = Some(eps_t);
    Ok(r)
}

/// Class-proportion factor `sum max(pi_s, pi_t)`, in `[1, 2]`.
pub fn cpi(pi_s: &[f64], pi_t: &[f64]) -> Result<f64> {
    proportions::validate_pair(pi_s, pi_t)?;
    Ok(pi_s.iter().zip(pi_t).map(|(a, b)| a.max(*b)).sum())
}

/// Dominant-term cost values for one epoch. Logarithms are natural.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityEstimate {
    /// `C max_i max(pi_s_i, pi_t_i) (n_s + n_t) d + C^2 ln C`.
    pub time: f64,
    /// `sum_i (pi_s_i n_s + pi_t_i n_t) d + C^2`.
    pub space: f64,
    /// Balanced-case form `(n_s + n_t) d / C + C ln C`, evaluated as written
    /// whatever the proportions.
    pub time_balanced_form: f64,
    /// True when both vectors are uniform.
    pub balanced: bool,
}

pub fn complexity_estimate(
    n_s: usize,
    n_t: usize,
    d: usize,
    pi_s: &[f64],
    pi_t: &[f64],
) -> Result<ComplexityEstimate> {
    proportions::validate_pair(pi_s, pi_t)?;
    let c = pi_s.len() as f64;
    let n = (n_s + n_t) as f64;
    let d = d as f64;
    let max_pi = pi_s.iter().chain(pi_t).fold(0.0f64, |m, &p| m.max(p));
    let space = pi_s
        .iter()
        .zip(pi_t)
        .map(|(a, b)| (a * n_s as f64 + b * n_t as f64) * d)
        .sum::<f64>()
        + c * c;
    let uniform = 1.0 / c;
    let balanced = pi_s
        .iter()
        .chain(pi_t)
        .all(|p| (p - uniform).abs() <= proportions::SUM_TOLERANCE);
    Ok(ComplexityEstimate {
        time: c * max_pi * n * d + c * c * c.ln(),
        space,
        time_balanced_form: n * d / c + c * c.ln(),
        balanced,
    })
}

impl ComplexityEstimate {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = [
            ("time", self.time),
            ("space", self.space),
            ("time_balanced_form", self.time_balanced_form),
            ("balanced", if self.balanced { 1.0 } else { 0.0 }),
        ];
        write_rows(
            path,
            &["term".into(), "value".into()],
            rows.iter().map(|(k, v)| vec![k.to_string(), fmt_f64(*v)]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_terms() {
        let r =
            generalization_bound(0.1, &[0.289, 0.711], &[0.453, 0.547], &[0.5, 0.2], 0.05).unwrap();
        assert!((r.proportion_gap - 0.328).abs() < 1e-12);
        let disc = 0.289 * 0.5 + 0.547 * 0.2;
        assert!((r.discrepancy_term - disc).abs() < 1e-12);
        assert!((r.bound - (0.1 + 0.328 + disc + 0.05)).abs() < 1e-12);
        let zero =
            generalization_bound(0.2, &[0.289, 0.711], &[0.453, 0.547], &[0.0, 0.0], 0.0).unwrap();
        assert!((zero.bound - (0.2 + 0.328)).abs() < 1e-12);
    }

    #[test]
    fn bound_equal_proportions() {
        let pi = [0.3, 0.7];
        let d = [1.2, 0.4];
        let r = generalization_bound(0.15, &pi, &pi, &d, 0.02).unwrap();
        assert_eq!(r.proportion_gap, 0.0);
        assert_eq!(r.bound, GenBoundReport::balanced_form(0.15, &pi, &d, 0.02));
    }

    #[test]
    fn bound_rejects_bad_input() {
        assert!(generalization_bound(0.1, &[0.5, 0.6], &[0.5, 0.5], &[0.0, 0.0], 0.0).is_err());
        assert!(generalization_bound(0.1, &[0.5, 0.5], &[0.5, 0.5], &[2.5, 0.0], 0.0).is_err());
        assert!(generalization_bound(-0.1, &[0.5, 0.5], &[0.5, 0.5], &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn cpi_fixtures() {
        assert!((cpi(&[0.289, 0.711], &[0.453, 0.547]).unwrap() - 1.164).abs() < 1e-12);
        assert_eq!(cpi(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 1.0);
        let e = 1e-9;
        assert!((cpi(&[1.0 - e, e], &[e, 1.0 - e]).unwrap() - 2.0).abs() < 1e-8);
        assert!(cpi(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn complexity_forms() {
        let b = complexity_estimate(100, 60, 8, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(b.balanced);
        assert!((b.time - (160.0 * 8.0 + 4.0 * 2f64.ln())).abs() < 1e-9);
        assert!((b.time_balanced_form - (160.0 * 8.0 / 2.0 + 2.0 * 2f64.ln())).abs() < 1e-9);
        assert!((b.space - (160.0 * 8.0 + 4.0)).abs() < 1e-9);
        let pi_s = [0.289, 0.711];
        let pi_t = [0.453, 0.547];
        let e1 = complexity_estimate(100, 60, 8, &pi_s, &pi_t).unwrap();
        let e2 = complexity_estimate(100, 60, 16, &pi_s, &pi_t).unwrap();
        let fixed = 4.0 * 2f64.ln();
        assert!(((e2.time - fixed) - 2.0 * (e1.time - fixed)).abs() < 1e-9);
        assert!(!e1.balanced);
        let empty = complexity_estimate(0, 0, 8, &pi_s, &pi_t).unwrap();
        assert_eq!(empty.time, fixed);
    }
}
