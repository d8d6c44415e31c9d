//! Experiment configuration: a sectioned key/value document (TOML syntax)
//! with `[domains]`, `[train]`, `[loss]` and `[theory]` tables, plus the
//! named presets.
//!
//! Parsing overlays the document on a base configuration (the defaults or a
//! preset). Unknown sections and keys are rejected, and every problem is
//! reported with the offending key and its line.

use std::ops::Range;

use serde::Deserialize;
use toml::Spanned;

use crate::domains::{generate_pair, stratified_split, DomainSpec, LabeledDomain, UnlabeledDomain};
use crate::error::{Error, Result};
use crate::proportions;
use crate::trainer::{ThresholdMode, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct DomainsConfig {
    pub seed: u64,
    pub d: usize,
    pub classes: usize,
    /// Distance between class means when `class_means` is absent.
    pub separation: f64,
    pub class_means: Option<Vec<Vec<f64>>>,
    pub class_scales: Vec<f64>,
    pub source_n: usize,
    pub source_pi: Vec<f64>,
    pub source_noise: f64,
    pub target_n: usize,
    pub target_pi: Vec<f64>,
    pub target_noise: f64,
    /// Covariate shift of the target; zeros when absent.
    pub target_shift: Option<Vec<f64>>,
    pub target_rotation: f64,
    /// Fraction of the source held out for calibration.
    pub val_fraction: f64,
}

impl Default for DomainsConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            d: 8,
            classes: 2,
            separation: 3.0,
            class_means: None,
            class_scales: vec![1.0, 1.0],
            source_n: 1698,
            source_pi: vec![0.289, 0.711],
            source_noise: 0.0,
            target_n: 1698,
            target_pi: vec![0.289, 0.711],
            target_noise: 0.0,
            target_shift: None,
            target_rotation: 0.0,
            val_fraction: 0.2,
        }
    }
}

/// Source training split, source validation split and the target domain.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: LabeledDomain,
    pub val: LabeledDomain,
    pub target: UnlabeledDomain,
}

impl DomainsConfig {
    /// Means on scaled unit axes: `separation / sqrt(2) * e_c`, so every pair
    /// of classes sits `separation` apart. With one feature the classes are
    /// spaced along the line instead.
    pub fn means(&self) -> Vec<Vec<f64>> {
        if let Some(m) = &self.class_means {
            return m.clone();
        }
        (0..self.classes)
            .map(|c| {
                let mut m = vec![0.0; self.d];
                if self.d == 1 {
                    m[0] = self.separation * c as f64;
                } else {
                    m[c % self.d] = self.separation / std::f64::consts::SQRT_2;
                }
                m
            })
            .collect()
    }

    pub fn source_spec(&self) -> DomainSpec {
        DomainSpec {
            n: self.source_n,
            d: self.d,
            classes: self.classes,
            pi: self.source_pi.clone(),
            class_means: self.means(),
            class_scales: self.class_scales.clone(),
            mean_shift: vec![0.0; self.d],
            noise_scale: self.source_noise,
            concept_rotation: 0.0,
            seed: self.seed,
        }
    }

    pub fn target_spec(&self) -> DomainSpec {
        DomainSpec {
            n: self.target_n,
            pi: self.target_pi.clone(),
            mean_shift: self
                .target_shift
                .clone()
                .unwrap_or_else(|| vec![0.0; self.d]),
            noise_scale: self.target_noise,
            concept_rotation: self.target_rotation,
            seed: self.seed.wrapping_add(1),
            ..self.source_spec()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source_spec().validate()?;
        self.target_spec().validate()?;
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let (src, target) = generate_pair(&self.source_spec(), &self.target_spec())?;
        self.split(&src, target)
    }

    /// Holds out the validation part of a full source domain, exactly as
    /// [`DomainsConfig::generate`] does. Errors when the data do not match
    /// the configured feature or class counts.
    pub fn split(&self, src: &LabeledDomain, target: UnlabeledDomain) -> Result<Dataset> {
        for (name, d, c) in [
            ("source", src.dim(), src.classes),
            ("target", target.features().cols(), target.classes()),
        ] {
            if d != self.d || c != self.classes {
                return Err(Error::DimensionMismatch(format!(
                    "{name} data has {d} features and {c} classes, config expects d = {} and classes = {}",
                    self.d, self.classes
                )));
            }
        }
        let mut parts = stratified_split(
            src,
            &[1.0 - self.val_fraction, self.val_fraction],
            self.seed.wrapping_add(2),
        )?;
        let val = parts.pop().expect("two parts");
        let train = parts.pop().expect("two parts");
        Ok(Dataset { train, val, target })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryConfig {
    /// Class proportions of the two domains in the convergence and
    /// gradient-norm problems.
    pub pi_source: Vec<f64>,
    pub pi_target: Vec<f64>,
    pub mu: f64,
    pub beta_smooth: f64,
    pub dims: Vec<usize>,
    pub seeds: usize,
    pub iterations: usize,
    pub log_every: usize,
    pub gradnorm_samples: usize,
    /// `(n, d)` pairs for the timing check.
    pub timing_sizes: Vec<(usize, usize)>,
    pub timing_repeats: usize,
    pub timing_hidden: usize,
    pub probe_folds: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            pi_source: vec![0.289, 0.711],
            pi_target: vec![0.453, 0.547],
            mu: 0.5,
            beta_smooth: 1.0,
            dims: vec![1, 5],
            seeds: 20,
            iterations: 10_000,
            log_every: 100,
            gradnorm_samples: 20_000,
            timing_sizes: vec![
                (1000, 128),
                (2000, 256),
                (4000, 256),
                (8000, 512),
                (16000, 512),
            ],
            timing_repeats: 5,
            timing_hidden: 4,
            probe_folds: 5,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        proportions::validate_pair(&self.pi_source, &self.pi_target)?;
        if !(self.mu > 0.0) || !(self.beta_smooth >= self.mu) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < mu <= beta_smooth, got mu = {}, beta_smooth = {}",
                self.mu, self.beta_smooth
            )));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::InvalidArgument("dims must be positive".into()));
        }
        if self.seeds == 0 || self.iterations == 0 || self.log_every == 0 {
            return Err(Error::InvalidArgument(
                "seeds, iterations and log_every must be at least 1".into(),
            ));
        }
        if self.probe_folds < 2 {
            return Err(Error::InvalidArgument(
                "probe_folds must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ExperimentConfig {
    pub domains: DomainsConfig,
    pub train: TrainConfig,
    pub theory: TheoryConfig,
}

pub const PRESETS: [&str; 4] = ["ed4-ed3", "ed4-ed2", "ed4-ed1", "ed4-ed4"];

/// Desk-scale stand-ins for one source and four target acquisition settings.
/// Targets differ in size, class mix and image-quality noise
/// (ed4-ed3 < ed4-ed2 < ed4-ed1); ed4-ed4 is the unshifted pair.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let d = cfg.domains.d;
    // class means sit on features 0 and 1; the rest carry no label signal
    let shift = |a: f64, b: f64, nuisance: f64| {
        let mut v = vec![nuisance; d];
        v[0] = a;
        v[1] = b;
        v
    };
    let dm = &mut cfg.domains;
    match name {
        "ed4-ed4" => {}
        "ed4-ed3" => {
            dm.target_n = 258;
            dm.target_pi = vec![0.453, 0.547];
            dm.target_noise = 0.3;
            dm.target_shift = Some(shift(-1.0, 1.0, 3.0));
        }
        "ed4-ed2" => {
            dm.target_n = 69;
            dm.target_pi = vec![0.812, 0.188];
            dm.target_noise = 0.6;
            dm.target_shift = Some(shift(-1.5, 1.5, 3.0));
        }
        "ed4-ed1" => {
            dm.target_n = 296;
            dm.target_pi = vec![0.666, 0.334];
            dm.target_noise = 0.9;
            dm.target_shift = Some(shift(-2.0, 2.0, 3.0));
        }
        _ => return None,
    }
    Some(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.domains.validate()?;
        self.train.validate()?;
        self.theory.validate()
    }

    pub fn from_preset_or_default(name: Option<&str>) -> Result<Self> {
        match name {
            None => Ok(Self::default()),
            Some(n) => preset(n).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown preset `{n}`; valid presets: {}",
                    PRESETS.join(", ")
                ))
            }),
        }
    }

    /// Overlays `text` on `base` and validates the result.
    pub fn parse(text: &str, base: Self) -> Result<Self> {
        let raw: RawDoc = toml::from_str(text).map_err(|e| {
            let span = e.span();
            let key = span.clone().map_or_else(String::new, |s| key_at(text, s));
            Error::Config {
                line: span.map(|s| line_of(text, s.start)),
                key,
                msg: e.message().to_string(),
            }
        })?;
        let mut cfg = base;
        let mut o = Overlay { text, first: None };
        if let Some(r) = raw.domains {
            o.domains(r, &mut cfg.domains);
        }
        if let Some(r) = raw.train {
            o.train(r, &mut cfg.train);
        }
        if let Some(r) = raw.loss {
            o.loss(r, &mut cfg.train);
        }
        if let Some(r) = raw.theory {
            o.theory(r, &mut cfg.theory);
        }
        if let Some(e) = o.first {
            return Err(e);
        }
        cfg.cross_check(text)?;
        cfg.validate().map_err(|e| Error::Config {
            line: None,
            key: String::new(),
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    fn cross_check(&self, text: &str) -> Result<()> {
        let dm = &self.domains;
        let c = dm.classes;
        let err = |key: &str, msg: String| Error::Config {
            line: find_key_line(text, key),
            key: key.to_string(),
            msg,
        };
        for (key, pi) in [("source_pi", &dm.source_pi), ("target_pi", &dm.target_pi)] {
            if pi.len() != c {
                return Err(err(
                    key,
                    format!("has {} entries for {c} classes", pi.len()),
                ));
            }
            proportions::validate(pi).map_err(|e| err(key, e.to_string()))?;
        }
        if dm.class_scales.len() != c {
            return Err(err(
                "class_scales",
                format!("has {} entries for {c} classes", dm.class_scales.len()),
            ));
        }
        if let Some(m) = &dm.class_means {
            if m.len() != c || m.iter().any(|r| r.len() != dm.d) {
                return Err(err(
                    "class_means",
                    format!("must be {c} rows of {} values", dm.d),
                ));
            }
        }
        if let Some(s) = &dm.target_shift {
            if s.len() != dm.d {
                return Err(err(
                    "target_shift",
                    format!("has {} entries for d = {}", s.len(), dm.d),
                ));
            }
        }
        if dm.source_n < c || dm.target_n < c {
            let key = if dm.source_n < c {
                "source_n"
            } else {
                "target_n"
            };
            return Err(err(key, format!("must be at least the class count {c}")));
        }
        let th = &self.theory;
        for (key, pi) in [("pi_source", &th.pi_source), ("pi_target", &th.pi_target)] {
            proportions::validate(pi).map_err(|e| err(key, e.to_string()))?;
        }
        if th.pi_source.len() != th.pi_target.len() {
            return Err(err(
                "pi_target",
                "must have as many entries as pi_source".into(),
            ));
        }
        if let Some(p) = &self.train.target_prior {
            if p.len() != c {
                return Err(err(
                    "target_prior",
                    format!("has {} entries for {c} classes", p.len()),
                ));
            }
            proportions::validate(p).map_err(|e| err("target_prior", e.to_string()))?;
        }
        Ok(())
    }

    /// The resolved configuration in the same document format.
    pub fn to_toml(&self) -> String {
        let dm = &self.domains;
        let tr = &self.train;
        let l = &tr.loss;
        let th = &self.theory;
        let vec = |v: &[f64]| {
            format!(
                "[{}]",
                v.iter()
                    .map(|x| format!("{x:?}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        };
        let mut out = String::new();
        out.push_str("[domains]\n");
        out.push_str(&format!(
            "seed = {}\nd = {}\nclasses = {}\nseparation = {:?}\n",
            dm.seed, dm.d, dm.classes, dm.separation
        ));
        if let Some(m) = &dm.class_means {
            let rows: Vec<String> = m.iter().map(|r| vec(r)).collect();
            out.push_str(&format!("class_means = [{}]\n", rows.join(", ")));
        }
        out.push_str(&format!("class_scales = {}\n", vec(&dm.class_scales)));
        out.push_str(&format!(
            "source_n = {}\nsource_pi = {}\nsource_noise = {:?}\n",
            dm.source_n,
            vec(&dm.source_pi),
            dm.source_noise
        ));
        out.push_str(&format!(
            "target_n = {}\ntarget_pi = {}\ntarget_noise = {:?}\n",
            dm.target_n,
            vec(&dm.target_pi),
            dm.target_noise
        ));
        if let Some(s) = &dm.target_shift {
            out.push_str(&format!("target_shift = {}\n", vec(s)));
        }
        out.push_str(&format!(
            "target_rotation = {:?}\nval_fraction = {:?}\n",
            dm.target_rotation, dm.val_fraction
        ));
        out.push_str("\n[train]\n");
        out.push_str(&format!(
            "learning_rate = {:?}\nbatch_budget = {}\niterations = {}\nseeds = [{}]\n",
            tr.learning_rate,
            tr.batch_budget,
            tr.iterations,
            tr.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ));
        out.push_str(&format!(
            "weight_decay = {:?}\nthreshold_mode = \"{}\"\neval_every = {}\nhidden = {}\n",
            l.lambda1,
            tr.threshold_mode.name(),
            tr.eval_every,
            tr.hidden
        ));
        out.push_str(&format!(
            "use_attention = {}\nuse_class_weights = {}\nnormalized_allocation = {}\n",
            tr.use_attention, tr.use_class_weights, tr.normalized_allocation
        ));
        if let Some(p) = &tr.target_prior {
            out.push_str(&format!("target_prior = {}\n", vec(p)));
        }
        out.push_str(&format!(
            "augment_std = {:?}\nparallel_seeds = {}\n",
            tr.augment_std, tr.parallel_seeds
        ));
        out.push_str("\n[loss]\n");
        out.push_str(&format!(
            "focal_gamma = {:?}\nlambda0 = {:?}\nwarmup_tau = {}\nlambda2 = {:?}\nlambda3 = {:?}\nlambda_reg = {:?}\n",
            l.focal_gamma, l.lambda0, l.warmup_tau, l.lambda2, l.lambda3, l.lambda_reg
        ));
        out.push_str("\n[theory]\n");
        out.push_str(&format!(
            "pi_source = {}\npi_target = {}\n",
            vec(&th.pi_source),
            vec(&th.pi_target)
        ));
        out.push_str(&format!(
            "mu = {:?}\nbeta_smooth = {:?}\ndims = [{}]\nseeds = {}\niterations = {}\nlog_every = {}\n",
            th.mu,
            th.beta_smooth,
            th.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "),
            th.seeds,
            th.iterations,
            th.log_every
        ));
        let sizes: Vec<String> = th
            .timing_sizes
            .iter()
            .map(|(n, d)| format!("[{n}, {d}]"))
            .collect();
        out.push_str(&format!(
            "gradnorm_samples = {}\ntiming_sizes = [{}]\ntiming_repeats = {}\ntiming_hidden = {}\nprobe_folds = {}\n",
            th.gradnorm_samples,
            sizes.join(", "),
            th.timing_repeats,
            th.timing_hidden,
            th.probe_folds
        ));
        out
    }
}

// ----- raw document -----

type S<T> = Option<Spanned<T>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    domains: Option<RawDomains>,
    train: Option<RawTrain>,
    loss: Option<RawLoss>,
    theory: Option<RawTheory>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomains {
    seed: S<u64>,
    d: S<usize>,
    classes: S<usize>,
    separation: S<f64>,
    class_means: S<Vec<Vec<f64>>>,
    class_scales: S<Vec<f64>>,
    source_n: S<usize>,
    source_pi: S<Vec<f64>>,
    source_noise: S<f64>,
    target_n: S<usize>,
    target_pi: S<Vec<f64>>,
    target_noise: S<f64>,
    target_shift: S<Vec<f64>>,
    target_rotation: S<f64>,
    val_fraction: S<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    learning_rate: S<f64>,
    batch_budget: S<usize>,
    iterations: S<usize>,
    seeds: S<Vec<u64>>,
    weight_decay: S<f64>,
    threshold_mode: S<String>,
    eval_every: S<usize>,
    hidden: S<usize>,
    use_attention: S<bool>,
    use_class_weights: S<bool>,
    normalized_allocation: S<bool>,
    target_prior: S<Vec<f64>>,
    augment_std: S<f64>,
    parallel_seeds: S<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoss {
    focal_gamma: S<f64>,
    lambda0: S<f64>,
    warmup_tau: S<usize>,
    lambda1: S<f64>,
    lambda2: S<f64>,
    lambda3: S<f64>,
    lambda_reg: S<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTheory {
    pi_source: S<Vec<f64>>,
    pi_target: S<Vec<f64>>,
    mu: S<f64>,
    beta_smooth: S<f64>,
    dims: S<Vec<usize>>,
    seeds: S<usize>,
    iterations: S<usize>,
    log_every: S<usize>,
    gradnorm_samples: S<usize>,
    timing_sizes: S<Vec<(usize, usize)>>,
    timing_repeats: S<usize>,
    timing_hidden: S<usize>,
    probe_folds: S<usize>,
}

type Check<T> = fn(&T) -> std::result::Result<(), String>;

fn any<T>(_: &T) -> std::result::Result<(), String> {
    Ok(())
}

fn positive_f(v: &f64) -> std::result::Result<(), String> {
    if *v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn nonneg_f(v: &f64) -> std::result::Result<(), String> {
    if *v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("must be >= 0, got {v}"))
    }
}

fn finite_f(v: &f64) -> std::result::Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err("must be finite".into())
    }
}

fn positive_u(v: &usize) -> std::result::Result<(), String> {
    if *v >= 1 {
        Ok(())
    } else {
        Err("must be at least 1".into())
    }
}

fn nonempty<T>(v: &Vec<T>) -> std::result::Result<(), String> {
    if v.is_empty() {
        Err("must not be empty".into())
    } else {
        Ok(())
    }
}

fn all_positive(v: &Vec<f64>) -> std::result::Result<(), String> {
    nonempty(v)?;
    if v.iter().all(|x| *x > 0.0 && x.is_finite()) {
        Ok(())
    } else {
        Err("entries must be positive".into())
    }
}

fn all_finite(v: &Vec<f64>) -> std::result::Result<(), String> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err("entries must be finite".into())
    }
}

fn unit_open(v: &f64) -> std::result::Result<(), String> {
    if *v > 0.0 && *v < 1.0 {
        Ok(())
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

struct Overlay<'a> {
    text: &'a str,
    first: Option<Error>,
}

impl Overlay<'_> {
    fn set<T>(&mut self, key: &str, raw: S<T>, check: Check<T>, dst: &mut T) {
        if let Some(sp) = raw {
            let span = sp.span();
            let v = sp.into_inner();
            match check(&v) {
                Ok(()) => *dst = v,
                Err(msg) => self.fail(key, span, msg),
            }
        }
    }

    fn set_opt<T>(&mut self, key: &str, raw: S<T>, check: Check<T>, dst: &mut Option<T>) {
        if let Some(sp) = raw {
            let span = sp.span();
            let v = sp.into_inner();
            match check(&v) {
                Ok(()) => *dst = Some(v),
                Err(msg) => self.fail(key, span, msg),
            }
        }
    }

    fn fail(&mut self, key: &str, span: Range<usize>, msg: String) {
        if self.first.is_none() {
            self.first = Some(Error::Config {
                line: Some(line_of(self.text, span.start)),
                key: key.to_string(),
                msg,
            });
        }
    }

    fn domains(&mut self, r: RawDomains, d: &mut DomainsConfig) {
        self.set("seed", r.seed, any, &mut d.seed);
        self.set("d", r.d, positive_u, &mut d.d);
        self.set("classes", r.classes, positive_u, &mut d.classes);
        self.set("separation", r.separation, nonneg_f, &mut d.separation);
        self.set_opt(
            "class_means",
            r.class_means,
            |m| {
                if m.iter().flatten().all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err("entries must be finite".into())
                }
            },
            &mut d.class_means,
        );
        self.set(
            "class_scales",
            r.class_scales,
            all_positive,
            &mut d.class_scales,
        );
        self.set("source_n", r.source_n, positive_u, &mut d.source_n);
        self.set("source_pi", r.source_pi, nonempty, &mut d.source_pi);
        self.set(
            "source_noise",
            r.source_noise,
            nonneg_f,
            &mut d.source_noise,
        );
        self.set("target_n", r.target_n, positive_u, &mut d.target_n);
        self.set("target_pi", r.target_pi, nonempty, &mut d.target_pi);
        self.set(
            "target_noise",
            r.target_noise,
            nonneg_f,
            &mut d.target_noise,
        );
        self.set_opt(
            "target_shift",
            r.target_shift,
            all_finite,
            &mut d.target_shift,
        );
        self.set(
            "target_rotation",
            r.target_rotation,
            finite_f,
            &mut d.target_rotation,
        );
        self.set(
            "val_fraction",
            r.val_fraction,
            unit_open,
            &mut d.val_fraction,
        );
    }

    fn train(&mut self, r: RawTrain, t: &mut TrainConfig) {
        self.set(
            "learning_rate",
            r.learning_rate,
            positive_f,
            &mut t.learning_rate,
        );
        self.set(
            "batch_budget",
            r.batch_budget,
            positive_u,
            &mut t.batch_budget,
        );
        self.set("iterations", r.iterations, any, &mut t.iterations);
        self.set("seeds", r.seeds, nonempty, &mut t.seeds);
        self.set(
            "weight_decay",
            r.weight_decay,
            nonneg_f,
            &mut t.loss.lambda1,
        );
        if let Some(sp) = r.threshold_mode {
            let span = sp.span();
            match ThresholdMode::parse(sp.get_ref()) {
                Some(m) => t.threshold_mode = m,
                None => self.fail(
                    "threshold_mode",
                    span,
                    format!(
                        "unknown mode `{}`; expected margin, frozen or off",
                        sp.get_ref()
                    ),
                ),
            }
        }
        self.set("eval_every", r.eval_every, positive_u, &mut t.eval_every);
        self.set("hidden", r.hidden, positive_u, &mut t.hidden);
        self.set("use_attention", r.use_attention, any, &mut t.use_attention);
        self.set(
            "use_class_weights",
            r.use_class_weights,
            any,
            &mut t.use_class_weights,
        );
        self.set(
            "normalized_allocation",
            r.normalized_allocation,
            any,
            &mut t.normalized_allocation,
        );
        self.set_opt(
            "target_prior",
            r.target_prior,
            nonempty,
            &mut t.target_prior,
        );
        self.set("augment_std", r.augment_std, nonneg_f, &mut t.augment_std);
        self.set(
            "parallel_seeds",
            r.parallel_seeds,
            any,
            &mut t.parallel_seeds,
        );
    }

    fn loss(&mut self, r: RawLoss, t: &mut TrainConfig) {
        let l = &mut t.loss;
        self.set("focal_gamma", r.focal_gamma, nonneg_f, &mut l.focal_gamma);
        self.set("lambda0", r.lambda0, nonneg_f, &mut l.lambda0);
        self.set("warmup_tau", r.warmup_tau, positive_u, &mut l.warmup_tau);
        self.set("lambda1", r.lambda1, nonneg_f, &mut l.lambda1);
        self.set("lambda2", r.lambda2, nonneg_f, &mut l.lambda2);
        self.set("lambda3", r.lambda3, nonneg_f, &mut l.lambda3);
        self.set("lambda_reg", r.lambda_reg, nonneg_f, &mut l.lambda_reg);
    }

    fn theory(&mut self, r: RawTheory, t: &mut TheoryConfig) {
        self.set("pi_source", r.pi_source, nonempty, &mut t.pi_source);
        self.set("pi_target", r.pi_target, nonempty, &mut t.pi_target);
        self.set("mu", r.mu, positive_f, &mut t.mu);
        self.set("beta_smooth", r.beta_smooth, positive_f, &mut t.beta_smooth);
        self.set("dims", r.dims, nonempty, &mut t.dims);
        self.set("seeds", r.seeds, positive_u, &mut t.seeds);
        self.set("iterations", r.iterations, positive_u, &mut t.iterations);
        self.set("log_every", r.log_every, positive_u, &mut t.log_every);
        self.set(
            "gradnorm_samples",
            r.gradnorm_samples,
            positive_u,
            &mut t.gradnorm_samples,
        );
        self.set(
            "timing_sizes",
            r.timing_sizes,
            nonempty,
            &mut t.timing_sizes,
        );
        self.set(
            "timing_repeats",
            r.timing_repeats,
            positive_u,
            &mut t.timing_repeats,
        );
        self.set(
            "timing_hidden",
            r.timing_hidden,
            positive_u,
            &mut t.timing_hidden,
        );
        self.set("probe_folds", r.probe_folds, positive_u, &mut t.probe_folds);
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Key name on the line containing `span`, if the line looks like `key = ...`.
fn key_at(text: &str, span: Range<usize>) -> String {
    let start = text[..span.start.min(text.len())]
        .rfind('\n')
        .map_or(0, |i| i + 1);
    let line = text[start..].lines().next().unwrap_or("");
    match line.split_once('=') {
        Some((k, _)) => k.trim().to_string(),
        None => line.trim().trim_matches(['[', ']']).to_string(),
    }
}

fn find_key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| l.split_once('=').is_some_and(|(k, _)| k.trim() == key))
        .map(|i| i + 1)
}
