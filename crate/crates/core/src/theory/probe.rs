//! Affine probe classifiers standing in for the hypothesis class: one
//! separates domains within a class, one is fit on pooled labeled data to
//! estimate the ideal joint error.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::domains::LabeledDomain;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            learning_rate: 0.5,
            l2: 1e-4,
            folds: 5,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression on standardized features, fit by
/// full-batch gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `[d, k]`, row-major.
    w: Vec<f64>,
    b: Vec<f64>,
    classes: usize,
}

impl SoftmaxProbe {
    pub fn fit(x: &Tensor, y: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n == 0 || n != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{n} rows for {} labels",
                y.len()
            )));
        }
        if classes < 2 || y.iter().any(|&c| c >= classes) {
            return Err(Error::InvalidArgument("probe labels out of range".into()));
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n as f64;
            }
        }
        let mut scale = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in scale.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut probe = Self {
            mean,
            scale,
            w: vec![0.0; d * classes],
            b: vec![0.0; classes],
            classes,
        };
        let z: Vec<Vec<f64>> = (0..n).map(|i| probe.standardize(x.row(i))).collect();
        let mut gw = vec![0.0; d * classes];
        let mut gb = vec![0.0; classes];
        let mut p = vec![0.0; classes];
        for _ in 0..cfg.iterations {
            gw.iter_mut().for_each(|v| *v = 0.0);
            gb.iter_mut().for_each(|v| *v = 0.0);
            for (zi, &yi) in z.iter().zip(y) {
                probe.probs_std(zi, &mut p);
                p[yi] -= 1.0;
                for (j, zj) in zi.iter().enumerate() {
                    for c in 0..classes {
                        gw[j * classes + c] += zj * p[c];
                    }
                }
                for c in 0..classes {
                    gb[c] += p[c];
                }
            }
            let step = cfg.learning_rate / n as f64;
            for (w, g) in probe.w.iter_mut().zip(&gw) {
                *w -= step * g + cfg.learning_rate * cfg.l2 * *w;
            }
            for (b, g) in probe.b.iter_mut().zip(&gb) {
                *b -= step * g;
            }
        }
        Ok(probe)
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn probs_std(&self, z: &[f64], out: &mut [f64]) {
        let k = self.classes;
        for c in 0..k {
            out[c] = self.b[c]
                + z.iter()
                    .enumerate()
                    .map(|(j, zj)| zj * self.w[j * k + c])
                    .sum::<f64>();
        }
        let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in out.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        out.iter_mut().for_each(|v| *v /= s);
    }

    pub fn predict(&self, x: &Tensor) -> Vec<usize> {
        let mut p = vec![0.0; self.classes];
        (0..x.rows())
            .map(|i| {
                self.probs_std(&self.standardize(x.row(i)), &mut p);
                // lowest index wins ties
                (0..self.classes).fold(0, |best, c| if p[c] > p[best] { c } else { best })
            })
            .collect()
    }
}

fn rows_of_class(dom: &LabeledDomain, class: usize) -> Vec<usize> {
    (0..dom.len()).filter(|&i| dom.y[i] == class).collect()
}

/// Stacks two row blocks into one probe data set tagged 0 and 1.
fn stack(a: &Tensor, ia: &[usize], b: &Tensor, ib: &[usize]) -> (Tensor, Vec<usize>) {
    let d = a.cols();
    let mut data = Vec::with_capacity((ia.len() + ib.len()) * d);
    for &i in ia {
        data.extend_from_slice(a.row(i));
    }
    for &i in ib {
        data.extend_from_slice(b.row(i));
    }
    let mut y = vec![0; ia.len()];
    y.resize(ia.len() + ib.len(), 1);
    let x = Tensor::new(vec![ia.len() + ib.len(), d], data).expect("row-major block");
    (x, y)
}

/// Held-out balanced error of a probe telling rows of `a` from rows of `b`,
/// by stratified k-fold cross-validation, mapped to `2 (1 - 2 BER)` and
/// clamped to `[0, 2]`.
pub fn probe_discrepancy(a: &Tensor, b: &Tensor, cfg: &ProbeConfig) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} features",
            a.cols(),
            b.cols()
        )));
    }
    let k = cfg.folds;
    if k < 2 || a.rows() < k || b.rows() < k {
        return Err(Error::InvalidArgument(format!(
            "{k}-fold probe needs at least {k} rows per side, got {} and {}",
            a.rows(),
            b.rows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut fold_of = |n: usize| {
        let mut f: Vec<usize> = (0..n).map(|i| i % k).collect();
        f.shuffle(&mut rng);
        f
    };
    let (fa, fb) = (fold_of(a.rows()), fold_of(b.rows()));
    let mut wrong = [0usize; 2];
    for fold in 0..k {
        let split = |f: &[usize], test: bool| -> Vec<usize> {
            (0..f.len()).filter(|&i| (f[i] == fold) == test).collect()
        };
        let (x, y) = stack(a, &split(&fa, false), b, &split(&fb, false));
        let probe = SoftmaxProbe::fit(&x, &y, 2, cfg)?;
        let (xt, yt) = stack(a, &split(&fa, true), b, &split(&fb, true));
        for (p, t) in probe.predict(&xt).iter().zip(&yt) {
            if p != t {
                wrong[*t] += 1;
            }
        }
    }
    let ber = 0.5 * (wrong[0] as f64 / a.rows() as f64 + wrong[1] as f64 / b.rows() as f64);
    Ok((2.0 * (1.0 - 2.0 * ber)).clamp(0.0, 2.0))
}

/// Class-conditional discrepancy between a source and a labeled target
/// (labels from the evaluation quarantine; harness use only).
pub fn estimate_class_discrepancy(
    src: &LabeledDomain,
    tgt: &LabeledDomain,
    class: usize,
    cfg: &ProbeConfig,
) -> Result<f64> {
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} features",
            src.dim(),
            tgt.dim()
        )));
    }
    let is = rows_of_class(src, class);
    let it = rows_of_class(tgt, class);
    if is.is_empty() || it.is_empty() {
        return Err(Error::EmptyClass { class: class + 1 });
    }
    probe_discrepancy(&src.x.select_rows(&is), &tgt.x.select_rows(&it), cfg)
}

/// `eps_s(h) + eps_t(h)` for one probe fit on the pooled labeled source and
/// target, both errors measured in-sample.
pub fn estimate_joint_error(
    src: &LabeledDomain,
    tgt: &LabeledDomain,
    cfg: &ProbeConfig,
) -> Result<f64> {
    if src.dim() != tgt.dim() || src.classes != tgt.classes {
        return Err(Error::DimensionMismatch(
            "source and target shapes differ".into(),
        ));
    }
    let all_s: Vec<usize> = (0..src.len()).collect();
    let all_t: Vec<usize> = (0..tgt.len()).collect();
    let (x, _) = stack(&src.x, &all_s, &tgt.x, &all_t);
    let y: Vec<usize> = src.y.iter().chain(&tgt.y).copied().collect();
    let probe = SoftmaxProbe::fit(&x, &y, src.classes, cfg)?;
    let err = |dom: &LabeledDomain| {
        let wrong = probe
            .predict(&dom.x)
            .iter()
            .zip(&dom.y)
            .filter(|(p, t)| p != t)
            .count();
        wrong as f64 / dom.len() as f64
    };
    Ok(err(src) + err(tgt))
}
