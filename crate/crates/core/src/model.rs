//! Attention-fused feature extractor, domain discriminator and
//! threshold-adjusted classifier.
//!
//! Parameters live in plain tensors ([`IadaParams`]). A training step copies
//! them into a fresh [`Graph`] with [`IadaParams::bind`], builds the loss from
//! the `*_graph` functions and writes the update back with
//! [`IadaParams::sgd_step`]. The tensor-level functions
//! ([`extract_features`], [`classify`], ...) are plain inference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Lower clamp applied to the temperature.
pub const MIN_TEMPERATURE: f64 = 1e-3;
pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 20.0);
pub const TEMPERATURE_TOL: f64 = 1e-4;

fn at<T>(layer: &str, r: std::result::Result<T, AutodiffError>) -> Result<T> {
    r.map_err(|e| match e {
        AutodiffError::NonFinite { op } => Error::NonFinite {
            component: format!("{layer} ({op})"),
        },
        other => Error::Autodiff(other),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `[fan_in, fan_out]`
    pub w: Tensor,
    /// `[fan_out]`
    pub b: Tensor,
}

impl Linear {
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let r = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-r..=r)).collect::<Vec<_>>();
        let w = Tensor::new(vec![fan_in, fan_out], draw(fan_in * fan_out)).expect("sized");
        let b = Tensor::vector(draw(fan_out));
        Self { w, b }
    }

    pub fn filled(fan_in: usize, fan_out: usize, w: f64, b: f64) -> Self {
        Self {
            w: Tensor::filled(&[fan_in, fan_out], w),
            b: Tensor::filled(&[fan_out], b),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.w.shape()[1]
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let mut out = crate::autodiff::matmul_raw(x, &self.w);
        let n = self.fan_out();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(self.b.data()) {
                *o += b;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

impl BoundLinear {
    fn forward(&self, g: &mut Graph, x: Var) -> std::result::Result<Var, AutodiffError> {
        let xw = g.matmul(x, self.w)?;
        g.add(xw, self.b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IadaParams {
    /// Two layers, `d -> h -> h`.
    pub backbone: Vec<Linear>,
    /// One `h -> h` layer per class.
    pub heads: Vec<Linear>,
    /// `[h, C]`; column `c` is the attention vector of class `c`.
    pub attention: Tensor,
    /// `h -> h/2 -> 1`.
    pub discriminator: Vec<Linear>,
    /// `h -> C`.
    pub classifier: Linear,
    pub beta: f64,
    pub threshold_gamma: f64,
    pub temperature: f64,
}

/// Which parameter group a named tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    /// Feature extractor (backbone, heads, attention).
    Theta,
    /// Discriminator.
    Phi,
    /// Classifier and threshold parameters.
    Psi,
    /// Post-hoc calibration; never trained by gradient.
    Calibration,
}

impl IadaParams {
    /// Fan-in uniform initialization from `seed`; `beta = 1`,
    /// `threshold_gamma = 0`, `temperature = 1`.
    pub fn init(d: usize, h: usize, classes: usize, seed: u64) -> Result<Self> {
        if d == 0 || h == 0 || classes == 0 {
            return Err(Error::InvalidArgument(format!(
                "model sizes must be positive (d={d}, h={h}, C={classes})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = vec![Linear::init(d, h, &mut rng), Linear::init(h, h, &mut rng)];
        let heads = (0..classes).map(|_| Linear::init(h, h, &mut rng)).collect();
        let r = 1.0 / (h as f64).sqrt();
        let attention = Tensor::new(
            vec![h, classes],
            (0..h * classes).map(|_| rng.random_range(-r..=r)).collect(),
        )
        .expect("sized");
        let hd = (h / 2).max(1);
        let discriminator = vec![Linear::init(h, hd, &mut rng), Linear::init(hd, 1, &mut rng)];
        let classifier = Linear::init(h, classes, &mut rng);
        Ok(Self {
            backbone,
            heads,
            attention,
            discriminator,
            classifier,
            beta: 1.0,
            threshold_gamma: 0.0,
            temperature: 1.0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.backbone[0].fan_in()
    }

    pub fn hidden(&self) -> usize {
        self.backbone[0].fan_out()
    }

    pub fn classes(&self) -> usize {
        self.heads.len()
    }

    /// Every parameter as `(name, group, tensor)` in a fixed order. Scalars
    /// appear as rank-0 tensors.
    pub fn named(&self) -> Vec<(String, Group, Tensor)> {
        let mut out = Vec::new();
        let mut lin = |prefix: String, group: Group, l: &Linear| {
            out.push((format!("{prefix}.w"), group, l.w.clone()));
            out.push((format!("{prefix}.b"), group, l.b.clone()));
        };
        for (i, l) in self.backbone.iter().enumerate() {
            lin(format!("backbone.{i}"), Group::Theta, l);
        }
        for (i, l) in self.heads.iter().enumerate() {
            lin(format!("head.{i}"), Group::Theta, l);
        }
        for (i, l) in self.discriminator.iter().enumerate() {
            lin(format!("discriminator.{i}"), Group::Phi, l);
        }
        lin("classifier".into(), Group::Psi, &self.classifier);
        out.push(("attention".into(), Group::Theta, self.attention.clone()));
        out.push(("beta".into(), Group::Psi, Tensor::scalar(self.beta)));
        out.push((
            "threshold_gamma".into(),
            Group::Psi,
            Tensor::scalar(self.threshold_gamma),
        ));
        out.push((
            "temperature".into(),
            Group::Calibration,
            Tensor::scalar(self.temperature),
        ));
        out
    }

    /// Rebuilds parameters from the output of [`IadaParams::named`] (in any
    /// order) by overwriting the tensors of a template with matching layout.
    pub fn from_named(
        d: usize,
        h: usize,
        classes: usize,
        tensors: &[(String, Tensor)],
    ) -> Result<Self> {
        let mut p = Self::init(d, h, classes, 0)?;
        for (name, _, like) in p.clone().named() {
            let t = tensors
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {name}")))?;
            if t.shape() != like.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    like.shape()
                )));
            }
            p.set(&name, t.clone());
        }
        if tensors.len() != p.named().len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                p.named().len(),
                tensors.len()
            )));
        }
        Ok(p)
    }

    fn linear_mut(&mut self, layer: &str) -> Option<&mut Linear> {
        if layer == "classifier" {
            return Some(&mut self.classifier);
        }
        let (group, idx) = layer.split_once('.')?;
        let idx: usize = idx.parse().ok()?;
        match group {
            "backbone" => self.backbone.get_mut(idx),
            "head" => self.heads.get_mut(idx),
            "discriminator" => self.discriminator.get_mut(idx),
            _ => None,
        }
    }

    fn set(&mut self, name: &str, t: Tensor) {
        if let Some((layer, field)) = name.rsplit_once('.') {
            if let Some(l) = self.linear_mut(layer) {
                match field {
                    "w" => l.w = t,
                    _ => l.b = t,
                }
                return;
            }
        }
        let v = t.item().unwrap_or(f64::NAN);
        match name {
            "attention" => self.attention = t,
            "beta" => self.beta = v,
            "threshold_gamma" => self.threshold_gamma = v,
            "temperature" => self.temperature = v.max(MIN_TEMPERATURE),
            _ => {}
        }
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, _, t)| t.is_finite())
    }

    /// Copies every trainable parameter into `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let mut lin = |l: &Linear| BoundLinear {
            w: g.leaf(l.w.clone()),
            b: g.leaf(l.b.clone()),
        };
        let backbone = self.backbone.iter().map(&mut lin).collect();
        let heads = self.heads.iter().map(&mut lin).collect();
        let discriminator = self.discriminator.iter().map(&mut lin).collect();
        let classifier = lin(&self.classifier);
        BoundParams {
            backbone,
            heads,
            discriminator,
            classifier,
            attention: g.leaf(self.attention.clone()),
            beta: g.leaf(Tensor::scalar(self.beta)),
            threshold_gamma: g.leaf(Tensor::scalar(self.threshold_gamma)),
        }
    }

    /// `p -= lr * grad` for every group in `groups`.
    pub fn sgd_step(&mut self, g: &Graph, bound: &BoundParams, lr: f64, groups: &[Group]) {
        let upd = |t: &mut Tensor, v: Var| {
            for (x, d) in t.data_mut().iter_mut().zip(g.grad(v).data()) {
                *x -= lr * d;
            }
        };
        let lin = |l: &mut Linear, b: &BoundLinear| {
            upd(&mut l.w, b.w);
            upd(&mut l.b, b.b);
        };
        if groups.contains(&Group::Theta) {
            for (l, b) in self.backbone.iter_mut().zip(&bound.backbone) {
                lin(l, b);
            }
            for (l, b) in self.heads.iter_mut().zip(&bound.heads) {
                lin(l, b);
            }
            upd(&mut self.attention, bound.attention);
        }
        if groups.contains(&Group::Phi) {
            for (l, b) in self.discriminator.iter_mut().zip(&bound.discriminator) {
                lin(l, b);
            }
        }
        if groups.contains(&Group::Psi) {
            lin(&mut self.classifier, &bound.classifier);
            self.beta -= lr * g.grad(bound.beta).item().unwrap_or(0.0);
            self.threshold_gamma -= lr * g.grad(bound.threshold_gamma).item().unwrap_or(0.0);
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundParams {
    pub backbone: Vec<BoundLinear>,
    pub heads: Vec<BoundLinear>,
    pub discriminator: Vec<BoundLinear>,
    pub classifier: BoundLinear,
    pub attention: Var,
    pub beta: Var,
    pub threshold_gamma: Var,
}

impl BoundParams {
    /// Feature-extractor tensors, the ones the weight penalty covers.
    pub fn theta(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self
            .backbone
            .iter()
            .chain(&self.heads)
            .flat_map(|l| [l.w, l.b])
            .collect();
        v.push(self.attention);
        v
    }

    pub fn phi(&self) -> Vec<Var> {
        self.discriminator.iter().flat_map(|l| [l.w, l.b]).collect()
    }

    pub fn psi(&self) -> Vec<Var> {
        vec![
            self.classifier.w,
            self.classifier.b,
            self.beta,
            self.threshold_gamma,
        ]
    }

    /// Nodes in the order of [`IadaParams::named`], which lists the
    /// temperature last; it is never bound.
    pub fn ordered(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self
            .backbone
            .iter()
            .chain(&self.heads)
            .chain(&self.discriminator)
            .chain(std::iter::once(&self.classifier))
            .flat_map(|l| [l.w, l.b])
            .collect();
        v.extend([self.attention, self.beta, self.threshold_gamma]);
        v
    }
}

/// Graph nodes produced by the feature extractor.
#[derive(Clone, Debug)]
pub struct FeatureVars {
    /// `[n, h]` fused features.
    pub z: Var,
    /// `[n, C]` attention weights.
    pub alpha: Var,
    /// `C` nodes of shape `[n, h]`.
    pub heads: Vec<Var>,
}

/// Backbone, class heads and attention fusion. With `use_attention = false`
/// the weights are fixed at `1/C`.
pub fn features_graph(
    g: &mut Graph,
    p: &BoundParams,
    x: Var,
    use_attention: bool,
) -> Result<FeatureVars> {
    let mut a = x;
    for (i, l) in p.backbone.iter().enumerate() {
        let layer = format!("backbone.{i}");
        let lin = at(&layer, l.forward(g, a))?;
        a = at(&layer, g.relu(lin))?;
    }
    let n = g.value(x).rows();
    let classes = p.heads.len();
    let mut heads = Vec::with_capacity(classes);
    for (c, l) in p.heads.iter().enumerate() {
        let layer = format!("head.{c}");
        let lin = at(&layer, l.forward(g, a))?;
        heads.push(at(&layer, g.relu(lin))?);
    }
    let alpha = if use_attention {
        let scores = at("attention", g.matmul(a, p.attention))?;
        at("attention", g.softmax(scores))?
    } else {
        g.leaf(Tensor::filled(&[n, classes], 1.0 / classes as f64))
    };
    let mut z = None;
    for (c, &hc) in heads.iter().enumerate() {
        let w = at("fusion", g.slice_last(alpha, c, c + 1))?;
        let term = at("fusion", g.mul(w, hc))?;
        z = Some(match z {
            None => term,
            Some(acc) => at("fusion", g.add(acc, term))?,
        });
    }
    Ok(FeatureVars {
        z: z.expect("at least one class"),
        alpha,
        heads,
    })
}

/// Domain probabilities `[n, 1]` behind a gradient reversal of strength
/// `lambda_adv`.
pub fn discriminator_graph(g: &mut Graph, p: &BoundParams, z: Var, lambda_adv: f64) -> Result<Var> {
    let r = at("reversal", g.grad_reverse(z, lambda_adv))?;
    let l0 = at("discriminator.0", p.discriminator[0].forward(g, r))?;
    let a0 = at("discriminator.0", g.relu(l0))?;
    let l1 = at("discriminator.1", p.discriminator[1].forward(g, a0))?;
    at("discriminator.1", g.sigmoid(l1))
}

pub fn logits_graph(g: &mut Graph, p: &BoundParams, z: Var) -> Result<Var> {
    at("classifier", p.classifier.forward(g, z))
}

/// `tau = beta * log_ratio + threshold_gamma` as a `[C]` node.
pub fn thresholds_graph(g: &mut Graph, p: &BoundParams, log_ratio: &[f64]) -> Result<Var> {
    let lr = g.leaf(Tensor::vector(log_ratio.to_vec()));
    let scaled = at("thresholds", g.mul(lr, p.beta))?;
    at("thresholds", g.add(scaled, p.threshold_gamma))
}

// ----- inference -----

#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub z: Tensor,
    pub alpha: Tensor,
}

fn check_input(params: &IadaParams, x: &Tensor) -> Result<()> {
    if x.rank() != 2 || x.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, got shape {:?}",
            params.input_dim(),
            x.shape()
        )));
    }
    Ok(())
}

fn relu_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

fn finite(layer: &str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            component: layer.to_string(),
        })
    }
}

pub fn extract_features(params: &IadaParams, x: &Tensor, use_attention: bool) -> Result<Features> {
    check_input(params, x)?;
    let mut a = x.clone();
    for (i, l) in params.backbone.iter().enumerate() {
        a = l.forward(&a);
        relu_in_place(&mut a);
        finite(&format!("backbone.{i}"), &a)?;
    }
    let (n, h, classes) = (a.rows(), params.hidden(), params.classes());
    let alpha = if use_attention {
        let mut s = crate::autodiff::matmul_raw(&a, &params.attention);
        for row in s.data_mut().chunks_mut(classes) {
            crate::autodiff::softmax_in_place(row);
        }
        finite("attention", &s)?;
        s
    } else {
        Tensor::filled(&[n, classes], 1.0 / classes as f64)
    };
    let mut z = Tensor::zeros(&[n, h]);
    for (c, l) in params.heads.iter().enumerate() {
        let mut hc = l.forward(&a);
        relu_in_place(&mut hc);
        finite(&format!("head.{c}"), &hc)?;
        for i in 0..n {
            let w = alpha.get2(i, c);
            for (zv, hv) in z.row_mut(i).iter_mut().zip(hc.row(i)) {
                *zv += w * hv;
            }
        }
    }
    Ok(Features { z, alpha })
}

/// Domain probabilities for fused features. The reversal strength only
/// affects gradients, so inference ignores it beyond validation.
pub fn discriminate(params: &IadaParams, z: &Tensor, lambda_adv: f64) -> Result<Vec<f64>> {
    if !(lambda_adv >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_adv must be non-negative, got {lambda_adv}"
        )));
    }
    let mut a = params.discriminator[0].forward(z);
    relu_in_place(&mut a);
    let out = params.discriminator[1].forward(&a);
    finite("discriminator", &out)?;
    Ok(out
        .data()
        .iter()
        .map(|&v| crate::autodiff::sigmoid(v))
        .collect())
}

pub fn logits(params: &IadaParams, z: &Tensor) -> Result<Tensor> {
    let out = params.classifier.forward(z);
    finite("classifier", &out)?;
    Ok(out)
}

/// `ln(n_c / min_k n_k)` per class.
pub fn log_count_ratio(counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass { class: c + 1 });
    }
    let min = *counts
        .iter()
        .min()
        .ok_or_else(|| Error::InvalidArgument("thresholds need at least one class".into()))?
        as f64;
    Ok(counts.iter().map(|&n| (n as f64 / min).ln()).collect())
}

/// `tau_c = beta * ln(n_c / min_k n_k) + gamma`.
pub fn compute_thresholds(counts: &[usize], beta: f64, gamma: f64) -> Result<Vec<f64>> {
    Ok(log_count_ratio(counts)?
        .into_iter()
        .map(|r| beta * r + gamma)
        .collect())
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Predicted classes (0-based) from `argmax(logits - tau)` and the adjusted
/// logits themselves.
pub fn classify_logits(logits: &Tensor, tau: &[f64]) -> Result<(Vec<usize>, Tensor)> {
    if logits.rank() != 2 || logits.cols() != tau.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} thresholds for logits of shape {:?}",
            tau.len(),
            logits.shape()
        )));
    }
    let mut adj = logits.clone();
    let c = tau.len();
    for row in adj.data_mut().chunks_mut(c) {
        for (v, t) in row.iter_mut().zip(tau) {
            *v -= t;
        }
    }
    let labels = adj.data().chunks(c).map(argmax).collect();
    Ok((labels, adj))
}

pub fn classify(params: &IadaParams, z: &Tensor, tau: &[f64]) -> Result<(Vec<usize>, Tensor)> {
    classify_logits(&logits(params, z)?, tau)
}

/// Row-wise `softmax(logits / t)`.
pub fn temperature_softmax(logits: &Tensor, t: f64) -> Tensor {
    let mut out = logits.map(|v| v / t);
    let c = out.cols();
    for row in out.data_mut().chunks_mut(c) {
        crate::autodiff::softmax_in_place(row);
    }
    out
}

pub fn calibrated_probs(params: &IadaParams, z: &Tensor) -> Result<Tensor> {
    if !(params.temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {}",
            params.temperature
        )));
    }
    Ok(temperature_softmax(&logits(params, z)?, params.temperature))
}

/// Mean negative log-likelihood of `labels` under `softmax(logits / t)`.
pub fn temperature_nll(logits: &Tensor, labels: &[usize], t: f64) -> f64 {
    let c = logits.cols();
    let mut total = 0.0;
    for (row, &y) in logits.data().chunks(c).zip(labels) {
        let k = argmax(row);
        let m = row[k] / t;
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &v)| (v / t - m).exp())
            .sum();
        total += (m - row[y] / t) + rest.ln_1p();
    }
    total / labels.len() as f64
}

/// Temperature minimizing validation NLL, by golden-section search over
/// `log t` in [`TEMPERATURE_RANGE`]. The interval endpoints are compared
/// against the interior optimum, so a monotone likelihood returns the
/// boundary exactly.
pub fn fit_temperature(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "temperature fit needs validation data".into(),
        ));
    }
    if logits.rank() != 2 || logits.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for logits of shape {:?}",
            labels.len(),
            logits.shape()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    let f = |u: f64| temperature_nll(logits, labels, u.exp());
    let (mut a, mut b) = (TEMPERATURE_RANGE.0.ln(), TEMPERATURE_RANGE.1.ln());
    let (lo, hi) = (a, b);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > TEMPERATURE_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (f(mid), mid.exp());
    for (u, t) in [(lo, TEMPERATURE_RANGE.0), (hi, TEMPERATURE_RANGE.1)] {
        let v = f(u);
        if v < best.0 {
            best = (v, t);
        }
    }
    Ok(best.1.max(MIN_TEMPERATURE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_model(d: usize, h: usize, c: usize) -> IadaParams {
        let mut p = IadaParams::init(d, h, c, 0).unwrap();
        let fill = |l: &mut Linear| *l = Linear::filled(l.fan_in(), l.fan_out(), 1.0, 1.0);
        p.backbone.iter_mut().for_each(fill);
        p.heads.iter_mut().for_each(fill);
        p.discriminator.iter_mut().for_each(fill);
        fill(&mut p.classifier);
        p.attention = Tensor::ones(&[h, c]);
        p
    }

    #[test]
    fn hand_sized_forward() {
        // x=[1,0]: backbone [2,2] -> [5,5]; heads [11,11]; scores [10,10]
        let p = ones_model(2, 2, 2);
        let x = Tensor::from_rows(&[[1.0, 0.0]]).unwrap();
        let f = extract_features(&p, &x, true).unwrap();
        assert_eq!(f.alpha.data(), &[0.5, 0.5]);
        assert_eq!(f.z.data(), &[11.0, 11.0]);
    }

    #[test]
    fn hand_sized_forward_with_unequal_attention() {
        let mut p = ones_model(2, 2, 2);
        p.attention = Tensor::from_rows(&[[0.1, 0.0], [0.0, 0.0]]).unwrap();
        p.heads[1] = Linear::filled(2, 2, 0.5, 0.0);
        let x = Tensor::from_rows(&[[1.0, 0.0]]).unwrap();
        let f = extract_features(&p, &x, true).unwrap();
        // scores [0.5, 0]; heads [11, 11] and [5, 5]
        let a0 = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((f.alpha.get2(0, 0) - a0).abs() < 1e-15);
        let z = a0 * 11.0 + (1.0 - a0) * 5.0;
        assert!((f.z.get2(0, 0) - z).abs() < 1e-12);
    }

    #[test]
    fn equal_attention_vectors_average_heads() {
        let mut p = IadaParams::init(3, 4, 3, 7).unwrap();
        p.attention = Tensor::filled(&[4, 3], 0.3);
        let x = Tensor::from_rows(&[[0.2, -1.0, 0.5], [1.0, 1.0, 1.0]]).unwrap();
        let f = extract_features(&p, &x, true).unwrap();
        for v in f.alpha.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let off = extract_features(&p, &x, false).unwrap();
        for (a, b) in f.z.data().iter().zip(off.z.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_uses_its_head() {
        let p = IadaParams::init(3, 4, 1, 1).unwrap();
        let x = Tensor::from_rows(&[[0.3, 0.1, -0.2]]).unwrap();
        let f = extract_features(&p, &x, true).unwrap();
        assert_eq!(f.alpha.data(), &[1.0]);
        let mut a = x.clone();
        for l in &p.backbone {
            a = l.forward(&a);
            relu_in_place(&mut a);
        }
        let mut h = p.heads[0].forward(&a);
        relu_in_place(&mut h);
        assert_eq!(f.z, h);
    }

    #[test]
    fn graph_and_inference_forward_agree() {
        let p = IadaParams::init(3, 5, 2, 11).unwrap();
        let x = Tensor::from_rows(&[[0.3, 0.1, -0.2], [1.0, -1.0, 2.0]]).unwrap();
        let f = extract_features(&p, &x, true).unwrap();
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let xv = g.leaf(x.clone());
        let fv = features_graph(&mut g, &b, xv, true).unwrap();
        for (a, c) in f.z.data().iter().zip(g.value(fv.z).data()) {
            assert!((a - c).abs() < 1e-12);
        }
        let d = discriminate(&p, &f.z, 0.3).unwrap();
        let dv = discriminator_graph(&mut g, &b, fv.z, 0.3).unwrap();
        for (a, c) in d.iter().zip(g.value(dv).data()) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_discriminator_outputs_half() {
        let mut p = IadaParams::init(2, 4, 2, 3).unwrap();
        for l in &mut p.discriminator {
            *l = Linear::filled(l.fan_in(), l.fan_out(), 0.0, 0.0);
        }
        let z = Tensor::from_rows(&[[1.0, 2.0, 3.0, 4.0], [-5.0, 0.0, 1.0, 9.0]]).unwrap();
        assert_eq!(discriminate(&p, &z, 1.0).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn discriminator_forward_ignores_reversal_scale() {
        let p = IadaParams::init(2, 4, 2, 3).unwrap();
        let z = Tensor::from_rows(&[[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let zv = g.leaf(z);
        let d0 = discriminator_graph(&mut g, &b, zv, 0.0).unwrap();
        let d1 = discriminator_graph(&mut g, &b, zv, 1.0).unwrap();
        assert_eq!(g.value(d0), g.value(d1));
        assert!(discriminate(&p, g.value(zv), -1.0).is_err());
    }

    #[test]
    fn zero_reversal_blocks_extractor_gradient() {
        let p = IadaParams::init(3, 4, 2, 5).unwrap();
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let x = g.leaf(Tensor::from_rows(&[[0.5, -0.2, 1.0], [0.1, 0.1, 0.1]]).unwrap());
        let f = features_graph(&mut g, &b, x, true).unwrap();
        let d = discriminator_graph(&mut g, &b, f.z, 0.0).unwrap();
        let loss = g.sum(d).unwrap();
        g.backward(loss).unwrap();
        for v in b.theta() {
            assert!(g.grad(v).data().iter().all(|&x| x == 0.0));
        }
        assert!(b
            .phi()
            .iter()
            .any(|&v| g.grad(v).data().iter().any(|&x| x != 0.0)));
    }

    #[test]
    fn thresholds_from_counts() {
        let t = compute_thresholds(&[1207, 491], 1.0, 0.0).unwrap();
        assert!((t[0] - 0.8994).abs() < 1e-4);
        assert_eq!(t[1], 0.0);
        assert_eq!(
            compute_thresholds(&[7, 7, 7], 2.0, 0.3).unwrap(),
            vec![0.3; 3]
        );
        assert_eq!(
            compute_thresholds(&[10, 3], 0.0, -0.5).unwrap(),
            vec![-0.5; 2]
        );
        assert!(matches!(
            compute_thresholds(&[4, 0], 1.0, 0.0),
            Err(Error::EmptyClass { class: 2 })
        ));
    }

    #[test]
    fn graph_thresholds_match() {
        let p = IadaParams {
            beta: 0.7,
            threshold_gamma: 0.2,
            ..IadaParams::init(2, 2, 2, 0).unwrap()
        };
        let ratio = log_count_ratio(&[30, 10]).unwrap();
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let t = thresholds_graph(&mut g, &b, &ratio).unwrap();
        let want = compute_thresholds(&[30, 10], 0.7, 0.2).unwrap();
        for (a, w) in g.value(t).data().iter().zip(&want) {
            assert!((a - w).abs() < 1e-15);
        }
    }

    #[test]
    fn thresholds_shift_decisions() {
        let l = Tensor::from_rows(&[[2.0, 1.0]]).unwrap();
        let (y, adj) = classify_logits(&l, &[0.5, 0.0]).unwrap();
        assert_eq!((y[0], adj.data()), (0, &[1.5, 1.0][..]));
        let (y, adj) = classify_logits(&l, &[1.5, 0.0]).unwrap();
        assert_eq!((y[0], adj.data()), (1, &[0.5, 1.0][..]));
    }

    #[test]
    fn ties_break_toward_lower_index() {
        let l = Tensor::from_rows(&[[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]]).unwrap();
        assert_eq!(classify_logits(&l, &[0.0; 3]).unwrap().0, vec![0, 1]);
    }

    #[test]
    fn calibrated_probabilities() {
        let l = Tensor::from_rows(&[[2.0, 0.0]]).unwrap();
        let p = temperature_softmax(&l, 2.0);
        assert!((p.get2(0, 0) - 0.7311).abs() < 1e-4);
        assert!((p.get2(0, 1) - 0.2689).abs() < 1e-4);
        let flat = temperature_softmax(&Tensor::from_rows(&[[5.0, -3.0, 1.0]]).unwrap(), 1e6);
        assert!(flat.data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-4));
    }

    #[test]
    fn temperature_of_degenerate_validation_hits_boundary() {
        let l = Tensor::from_rows(&[[2.0, 0.0], [1.0, -1.0], [3.0, 1.0]]).unwrap();
        let y = [0, 0, 0];
        let ts = [0.05, 0.1, 1.0, 5.0, 20.0];
        let nll: Vec<f64> = ts.iter().map(|&t| temperature_nll(&l, &y, t)).collect();
        assert!(nll.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(fit_temperature(&l, &y).unwrap(), 0.05);
        assert!(fit_temperature(&Tensor::zeros(&[0, 2]), &[]).is_err());
    }
}
