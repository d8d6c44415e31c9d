//! Loss terms, regularizers and the adversarial warm-up schedule.
//!
//! Scalar functions on plain slices are the reference definitions; the
//! `*_graph` variants build the same quantities as differentiable nodes.

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::proportions;

/// Lower clamp for probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub focal_gamma: f64,
    pub lambda0: f64,
    pub warmup_tau: usize,
    /// Weight on the squared norm of the feature-extractor parameters.
    pub lambda1: f64,
    /// Consistency weight.
    pub lambda2: f64,
    /// Head-diversity weight.
    pub lambda3: f64,
    pub lambda_reg: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            focal_gamma: 2.0,
            lambda0: 0.1,
            warmup_tau: 1000,
            lambda1: 5e-4,
            lambda2: 0.1,
            lambda3: 0.1,
            lambda_reg: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("focal_gamma", self.focal_gamma),
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda_reg", self.lambda_reg),
        ];
        for (name, v) in weights {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a finite value >= 0, got {v}"
                )));
            }
        }
        if self.warmup_tau == 0 {
            return Err(Error::InvalidArgument(
                "warmup_tau must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `omega_c = 1 / (C * pi_c)`.
pub fn class_weights(pi: &[f64]) -> Result<Vec<f64>> {
    proportions::validate(pi)?;
    let c = pi.len() as f64;
    Ok(pi.iter().map(|p| 1.0 / (c * p)).collect())
}

/// Class weights from raw tallies; classes with no observations keep weight 1.
pub fn class_weights_from_counts(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let c = counts.len() as f64;
    counts
        .iter()
        .map(|&n| {
            if n == 0 {
                1.0
            } else {
                total as f64 / (c * n as f64)
            }
        })
        .collect()
}

/// `-(1/n) sum w (1 - p)^gamma ln p`, with `p` clamped below at [`PROB_FLOOR`].
pub fn focal_loss(p: &[f64], omega: &[f64], gamma: f64) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidArgument(
            "focal loss of an empty batch".into(),
        ));
    }
    if p.len() != omega.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities, {} weights",
            p.len(),
            omega.len()
        )));
    }
    let s: f64 = p
        .iter()
        .zip(omega)
        .map(|(&p, &w)| {
            let p = p.max(PROB_FLOOR);
            w * (1.0 - p).powf(gamma) * p.ln()
        })
        .sum();
    Ok(-s / p.len() as f64)
}

/// `mean(w * ln D_s) + mean(ln(1 - D_t))`, outputs clamped into
/// `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub fn adversarial_loss(d_src: &[f64], d_tgt: &[f64], omega_src: &[f64]) -> Result<f64> {
    if d_src.is_empty() || d_tgt.is_empty() {
        return Err(Error::InvalidArgument(
            "adversarial loss needs both source and target outputs".into(),
        ));
    }
    if d_src.len() != omega_src.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source outputs, {} weights",
            d_src.len(),
            omega_src.len()
        )));
    }
    let clamp = |d: f64| d.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let s: f64 = d_src
        .iter()
        .zip(omega_src)
        .map(|(&d, &w)| w * clamp(d).ln())
        .sum::<f64>();
    let t: f64 = d_tgt.iter().map(|&d| (1.0 - clamp(d)).ln()).sum::<f64>();
    Ok(s / d_src.len() as f64 + t / d_tgt.len() as f64)
}

/// Sum of squared entries over all tensors.
pub fn l2_penalty(params: &[&Tensor]) -> f64 {
    params.iter().map(|t| t.sq_norm()).sum()
}

/// Mean over rows of the squared distance between two views.
pub fn consistency(z_clean: &Tensor, z_aug: &Tensor) -> Result<f64> {
    if z_clean.shape() != z_aug.shape() || z_clean.rank() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "views of shape {:?} and {:?}",
            z_clean.shape(),
            z_aug.shape()
        )));
    }
    let d: f64 = z_clean
        .data()
        .iter()
        .zip(z_aug.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(d / z_clean.rows().max(1) as f64)
}

/// Small constant inside the norm used to unit-normalize head means.
pub const NORM_EPS: f64 = 1e-12;

/// Mean squared off-diagonal entry of the Gram matrix of unit-normalized
/// per-head batch means. Zero for a single head.
pub fn diversity(head_means: &[Vec<f64>]) -> f64 {
    let c = head_means.len();
    if c < 2 {
        return 0.0;
    }
    let units: Vec<Vec<f64>> = head_means
        .iter()
        .map(|m| {
            let n = (m.iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt();
            m.iter().map(|v| v / n).collect()
        })
        .collect();
    let mut s = 0.0;
    for i in 0..c {
        for j in 0..c {
            if i != j {
                let g: f64 = units[i].iter().zip(&units[j]).map(|(a, b)| a * b).sum();
                s += g * g;
            }
        }
    }
    s / (c * (c - 1)) as f64
}

/// `lambda0 * min(1, t / tau)`.
pub fn lambda_schedule(t: usize, lambda0: f64, warmup_tau: usize) -> f64 {
    lambda0 * (t as f64 / warmup_tau.max(1) as f64).min(1.0)
}

/// Component values that make up the reported objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveParts {
    pub l_cls: f64,
    pub l_adv: f64,
    pub lambda_adv: f64,
    pub reg: f64,
    pub lambda_reg: f64,
}

/// `L_cls - lambda_adv * L_adv + lambda_reg * R`. Any non-finite input is
/// reported by name.
pub fn total_objective(p: &ObjectiveParts) -> Result<f64> {
    let named = [
        ("l_cls", p.l_cls),
        ("l_adv", p.l_adv),
        ("lambda_adv", p.lambda_adv),
        ("reg", p.reg),
        ("lambda_reg", p.lambda_reg),
    ];
    for (name, v) in named {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                component: name.to_string(),
            });
        }
    }
    Ok(p.l_cls - p.lambda_adv * p.l_adv + p.lambda_reg * p.reg)
}

// ----- graph versions -----

fn autodiff<T>(
    component: &str,
    r: std::result::Result<T, crate::autodiff::AutodiffError>,
) -> Result<T> {
    r.map_err(|e| match e {
        crate::autodiff::AutodiffError::NonFinite { op } => Error::NonFinite {
            component: format!("{component} ({op})"),
        },
        other => Error::Autodiff(other),
    })
}

/// Weighted focal loss of `[n, C]` probabilities against `labels`.
pub fn focal_loss_graph(
    g: &mut Graph,
    probs: Var,
    labels: &[usize],
    omega: &[f64],
    gamma: f64,
) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "focal loss of an empty batch".into(),
        ));
    }
    if labels.len() != omega.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels, {} weights",
            labels.len(),
            omega.len()
        )));
    }
    let f = |r| autodiff("focal loss", r);
    let py = f(g.take_along_rows(probs, labels))?;
    let py = f(g.clamp(py, PROB_FLOOR, 1.0))?;
    let logp = f(g.log(py))?;
    let w = g.leaf(Tensor::vector(omega.to_vec()));
    let mut term = f(g.mul(w, logp))?;
    if gamma != 0.0 {
        let q = f(g.affine(py, -1.0, 1.0))?;
        // keep the derivative of q^gamma finite at q = 0 when gamma < 1
        let q = f(g.clamp(q, PROB_FLOOR, 1.0))?;
        let m = f(g.pow(q, gamma))?;
        term = f(g.mul(term, m))?;
    }
    let mean = f(g.mean(term))?;
    f(g.neg(mean))
}

/// Adversarial log-likelihood from `[n, 1]` discriminator outputs.
pub fn adversarial_loss_graph(
    g: &mut Graph,
    d_src: Var,
    d_tgt: Var,
    omega_src: &[f64],
) -> Result<Var> {
    let f = |r| autodiff("adversarial loss", r);
    let (ns, nt) = (g.value(d_src).len(), g.value(d_tgt).len());
    if ns == 0 || nt == 0 {
        return Err(Error::InvalidArgument(
            "adversarial loss needs both source and target outputs".into(),
        ));
    }
    if ns != omega_src.len() {
        return Err(Error::DimensionMismatch(format!(
            "{ns} source outputs, {} weights",
            omega_src.len()
        )));
    }
    let ds = f(g.clamp(d_src, PROB_FLOOR, 1.0 - PROB_FLOOR))?;
    let dt = f(g.clamp(d_tgt, PROB_FLOOR, 1.0 - PROB_FLOOR))?;
    let w = g.leaf(Tensor::new(
        g.value(d_src).shape().to_vec(),
        omega_src.to_vec(),
    )?);
    let ls = f(g.log(ds))?;
    let ws = f(g.mul(w, ls))?;
    let src = f(g.mean(ws))?;
    let one_minus = f(g.affine(dt, -1.0, 1.0))?;
    let lt = f(g.log(one_minus))?;
    let tgt = f(g.mean(lt))?;
    f(g.add(src, tgt))
}

pub fn l2_penalty_graph(g: &mut Graph, params: &[Var]) -> Result<Var> {
    let f = |r| autodiff("weight penalty", r);
    let mut acc = None;
    for &p in params {
        let sq = f(g.mul(p, p))?;
        let s = f(g.sum(sq))?;
        acc = Some(match acc {
            None => s,
            Some(a) => f(g.add(a, s))?,
        });
    }
    Ok(match acc {
        Some(a) => a,
        None => g.leaf(Tensor::scalar(0.0)),
    })
}

pub fn consistency_graph(g: &mut Graph, z_clean: Var, z_aug: Var) -> Result<Var> {
    let (a, b) = (
        g.value(z_clean).shape().to_vec(),
        g.value(z_aug).shape().to_vec(),
    );
    if a != b || a.len() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "views of shape {a:?} and {b:?}"
        )));
    }
    let f = |r| autodiff("consistency", r);
    let d = f(g.sub(z_clean, z_aug))?;
    let sq = f(g.mul(d, d))?;
    let s = f(g.sum(sq))?;
    f(g.affine(s, 1.0 / a[0].max(1) as f64, 0.0))
}

/// Graph version of [`diversity`] over `[n, h]` head outputs.
pub fn diversity_graph(g: &mut Graph, heads: &[Var]) -> Result<Var> {
    let c = heads.len();
    if c < 2 {
        return Ok(g.leaf(Tensor::scalar(0.0)));
    }
    let f = |r| autodiff("diversity", r);
    let mut rows = Vec::with_capacity(c);
    for &hc in heads {
        let m = f(g.mean_axis(hc, 0, true))?;
        let sq = f(g.mul(m, m))?;
        let n2 = f(g.sum(sq))?;
        let n2 = f(g.affine(n2, 1.0, NORM_EPS))?;
        let n = f(g.pow(n2, 0.5))?;
        rows.push(f(g.div(m, n))?);
    }
    let u = f(g.concat(&rows, 0))?;
    let ut = f(g.transpose(u))?;
    let gram = f(g.matmul(u, ut))?;
    let mut mask = Tensor::ones(&[c, c]);
    for i in 0..c {
        mask.row_mut(i)[i] = 0.0;
    }
    let mask = g.leaf(mask);
    let sq = f(g.mul(gram, gram))?;
    let off = f(g.mul(sq, mask))?;
    let s = f(g.sum(off))?;
    f(g.affine(s, 1.0 / (c * (c - 1)) as f64, 0.0))
}

#[derive(Clone, Copy, Debug)]
pub struct RegularizerVars {
    pub l2: Var,
    pub cons: Var,
    pub div: Var,
    pub total: Var,
}

/// `lambda1 * ||theta||^2 + lambda2 * L_cons + lambda3 * L_div`.
pub fn regularizer_graph(
    g: &mut Graph,
    theta: &[Var],
    z_clean: Var,
    z_aug: Var,
    heads: &[Var],
    cfg: &LossConfig,
) -> Result<RegularizerVars> {
    let l2 = l2_penalty_graph(g, theta)?;
    let cons = consistency_graph(g, z_clean, z_aug)?;
    let div = diversity_graph(g, heads)?;
    let f = |r| autodiff("regularizer", r);
    let a = f(g.affine(l2, cfg.lambda1, 0.0))?;
    let b = f(g.affine(cons, cfg.lambda2, 0.0))?;
    let c = f(g.affine(div, cfg.lambda3, 0.0))?;
    let ab = f(g.add(a, b))?;
    let total = f(g.add(ab, c))?;
    Ok(RegularizerVars {
        l2,
        cons,
        div,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn weights_for_reported_proportions() {
        let w = class_weights(&[0.289, 0.711]).unwrap();
        assert!(close(w[0], 1.7301, 1e-4) && close(w[1], 0.7032, 1e-4));
        assert_eq!(class_weights(&[0.25; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(class_weights(&[0.5, 0.5]).unwrap(), vec![1.0, 1.0]);
        assert!(class_weights(&[0.0, 1.0]).is_err());
        assert!(class_weights(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn weights_from_tallies() {
        assert_eq!(class_weights_from_counts(&[16, 16]), vec![1.0, 1.0]);
        let w = class_weights_from_counts(&[8, 24]);
        assert!(close(w[0], 2.0, 1e-15) && close(w[1], 2.0 / 3.0, 1e-15));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn focal_fixtures() {
        assert!(close(
            focal_loss(&[0.5], &[1.0], 0.0).unwrap(),
            0.6931,
            1e-4
        ));
        assert_eq!(focal_loss(&[1.0, 1.0], &[1.0, 2.0], 2.0).unwrap(), 0.0);
        assert!(close(
            focal_loss(&[0.9], &[1.0], 2.0).unwrap(),
            0.001054,
            1e-6
        ));
        assert!(focal_loss(&[], &[], 2.0).is_err());
        assert!(focal_loss(&[0.0], &[1.0], 0.0).unwrap().is_finite());
    }

    #[test]
    fn adversarial_fixtures() {
        let l = adversarial_loss(&[0.5, 0.5], &[0.5, 0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert!(close(l, -1.3863, 1e-4));
        let eps = 1e-9;
        let near = adversarial_loss(&[1.0 - eps], &[eps], &[1.0]).unwrap();
        assert!(near < 0.0 && near > -1e-8);
        assert!(adversarial_loss(&[], &[0.5], &[]).is_err());
        assert!(adversarial_loss(&[0.5], &[], &[1.0]).is_err());
    }

    #[test]
    fn doubled_weights_double_source_term() {
        let ds = [0.3, 0.8, 0.6];
        let dt = [0.2, 0.7];
        let w = [0.5, 1.5, 1.0];
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let tgt = adversarial_loss(&ds, &dt, &[0.0; 3]).unwrap();
        let src = adversarial_loss(&ds, &dt, &w).unwrap() - tgt;
        let src2 = adversarial_loss(&ds, &dt, &w2).unwrap() - tgt;
        assert!(close(src2, 2.0 * src, 1e-15));
    }

    #[test]
    fn regularizer_fixtures() {
        let z = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(consistency(&z, &z).unwrap(), 0.0);
        assert_eq!(
            l2_penalty(&[&Tensor::zeros(&[3, 2]), &Tensor::zeros(&[4])]),
            0.0
        );
        assert_eq!(diversity(&[vec![1.0, 0.0], vec![0.0, 1.0]]), 0.0);
        assert!(close(
            diversity(&[vec![1.0, 0.0], vec![2.0, 0.0]]),
            1.0,
            1e-10
        ));
        assert_eq!(diversity(&[vec![1.0, 2.0]]), 0.0);
        assert!(consistency(&z, &Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn schedule_fixtures() {
        assert_eq!(lambda_schedule(0, 0.01, 1000), 0.0);
        assert!(close(lambda_schedule(500, 0.01, 1000), 0.005, 1e-15));
        assert_eq!(lambda_schedule(1000, 0.01, 1000), 0.01);
        assert_eq!(lambda_schedule(5000, 0.01, 1000), 0.01);
    }

    #[test]
    fn objective_fixtures() {
        let parts = ObjectiveParts {
            l_cls: 0.7,
            l_adv: -1.0,
            lambda_adv: 0.01,
            reg: 0.2,
            lambda_reg: 0.1,
        };
        assert!(close(total_objective(&parts).unwrap(), 0.73, 1e-12));
        let only_cls = ObjectiveParts {
            lambda_adv: 0.0,
            lambda_reg: 0.0,
            ..parts
        };
        assert_eq!(total_objective(&only_cls).unwrap(), 0.7);
        let zero = ObjectiveParts {
            l_cls: 0.0,
            l_adv: 0.0,
            lambda_adv: 0.0,
            reg: 0.0,
            lambda_reg: 0.0,
        };
        assert_eq!(total_objective(&zero).unwrap(), 0.0);
        let bad = ObjectiveParts {
            reg: f64::NAN,
            ..parts
        };
        match total_objective(&bad) {
            Err(Error::NonFinite { component }) => assert_eq!(component, "reg"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn graph_versions_match_scalar_definitions() {
        let mut g = Graph::new();
        let probs = g.leaf(Tensor::from_rows(&[[0.2, 0.8], [0.6, 0.4], [0.9, 0.1]]).unwrap());
        let labels = [1, 0, 1];
        let omega = [0.7, 1.3, 0.7];
        let fl = focal_loss_graph(&mut g, probs, &labels, &omega, 2.0).unwrap();
        let want = focal_loss(&[0.8, 0.6, 0.1], &omega, 2.0).unwrap();
        assert!(close(g.value(fl).item().unwrap(), want, 1e-14));

        let ds = g.leaf(Tensor::from_rows(&[[0.3], [0.8]]).unwrap());
        let dt = g.leaf(Tensor::from_rows(&[[0.4], [0.1], [0.55]]).unwrap());
        let al = adversarial_loss_graph(&mut g, ds, dt, &[1.5, 0.5]).unwrap();
        let want = adversarial_loss(&[0.3, 0.8], &[0.4, 0.1, 0.55], &[1.5, 0.5]).unwrap();
        assert!(close(g.value(al).item().unwrap(), want, 1e-14));

        let h1 = g.leaf(Tensor::from_rows(&[[1.0, 2.0, 0.0], [3.0, 0.0, 1.0]]).unwrap());
        let h2 = g.leaf(Tensor::from_rows(&[[0.0, 1.0, 1.0], [2.0, 2.0, 0.5]]).unwrap());
        let dv = diversity_graph(&mut g, &[h1, h2]).unwrap();
        let want = diversity(&[vec![2.0, 1.0, 0.5], vec![1.0, 1.5, 0.75]]);
        assert!(close(g.value(dv).item().unwrap(), want, 1e-14));

        let cv = consistency_graph(&mut g, h1, h2).unwrap();
        let want = consistency(g.value(h1), g.value(h2)).unwrap();
        assert!(close(g.value(cv).item().unwrap(), want, 1e-14));
    }
}
