//! Multi-seed training loop, evaluation and hyper-parameter sweeps.
//!
//! Each step draws a class-balanced source batch and a uniform target batch,
//! builds the composite objective in a fresh graph and applies one plain SGD
//! update to every trainable parameter. The adversarial min-max is realized by
//! the gradient reversal in front of the discriminator.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Graph, Tensor, Var};
use crate::domains::{fmt_f64, write_rows, Augmenter, LabeledDomain, UnlabeledDomain};
use crate::error::{Error, Result};
use crate::metrics::{metric_row, seed_aggregate, Aggregate, MetricRow};
use crate::model::{
    self, classify, compute_thresholds, discriminator_graph, extract_features, features_graph,
    logits_graph, thresholds_graph, BoundParams, Group, IadaParams,
};
use crate::objectives::{
    adversarial_loss_graph, class_weights_from_counts, focal_loss_graph, lambda_schedule,
    regularizer_graph, total_objective, LossConfig, ObjectiveParts, RegularizerVars,
};
use crate::sampling::{
    allocate_batches, sample_balanced_batch, sample_uniform_batch, BatchAllocation, ClassIndex,
};

/// How the class thresholds enter training and prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdMode {
    /// `beta` and `threshold_gamma` are trained through the margin-adjusted
    /// logits inside the classification loss.
    Margin,
    /// Thresholds fixed from the source counts with the initial `beta`,
    /// `threshold_gamma`; training sees raw logits.
    Frozen,
    /// No thresholds anywhere.
    Off,
}

impl ThresholdMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "margin" => Some(Self::Margin),
            "frozen" => Some(Self::Frozen),
            "off" => Some(Self::Off),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Margin => "margin",
            Self::Frozen => "frozen",
            Self::Off => "off",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_budget: usize,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub loss: LossConfig,
    pub threshold_mode: ThresholdMode,
    pub eval_every: usize,
    pub hidden: usize,
    pub use_attention: bool,
    /// With `false` every class weight is 1.
    pub use_class_weights: bool,
    /// Rescale the per-class batch sizes so they sum to the budget.
    pub normalized_allocation: bool,
    /// Prior assumed for the unlabeled domain when allocating batches;
    /// uniform when absent.
    pub target_prior: Option<Vec<f64>>,
    /// Standard deviation of the Gaussian jitter producing the second view.
    pub augment_std: f64,
    /// Run seeds on the rayon pool.
    pub parallel_seeds: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            batch_budget: 32,
            iterations: 5000,
            seeds: vec![1, 2, 3, 4, 5],
            loss: LossConfig::default(),
            threshold_mode: ThresholdMode::Frozen,
            eval_every: 500,
            hidden: 32,
            use_attention: true,
            use_class_weights: true,
            normalized_allocation: true,
            target_prior: None,
            augment_std: 0.1,
            parallel_seeds: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one seed is required".into(),
            ));
        }
        if self.batch_budget == 0 {
            return Err(Error::InvalidArgument(
                "batch_budget must be at least 1".into(),
            ));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidArgument(
                "eval_every must be at least 1".into(),
            ));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden must be at least 1".into()));
        }
        if !(self.augment_std >= 0.0) {
            return Err(Error::InvalidArgument(
                "augment_std must be non-negative".into(),
            ));
        }
        self.loss.validate()
    }
}

/// Everything a single step consumes besides the parameters.
#[derive(Clone, Debug)]
pub struct StepInputs {
    pub xs: Tensor,
    pub ys: Vec<usize>,
    pub xs_aug: Tensor,
    pub xt: Tensor,
    /// Per-class weights.
    pub omega: Vec<f64>,
    /// `ln(n_c / min n)` from the source counts.
    pub log_ratio: Vec<f64>,
    pub lambda_adv: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct StepVars {
    /// Scalar that is differentiated. It equals the reported objective up to
    /// the sign conventions of the reversal.
    pub surrogate: Var,
    pub l_cls: Var,
    pub l_adv: Option<Var>,
    pub reg: RegularizerVars,
}

/// Builds the composite objective for one step.
///
/// The differentiated scalar is `L_cls - L_adv(D(R(Z))) + lambda_reg * R`
/// where `R(.)` reverses gradients with strength `lambda_adv`. The
/// discriminator therefore ascends `L_adv` while the extractor descends
/// `lambda_adv * L_adv`. The adversarial branch is skipped entirely when
/// `lambda_adv = 0`.
pub fn build_objective(
    g: &mut Graph,
    p: &BoundParams,
    inp: &StepInputs,
    cfg: &TrainConfig,
) -> Result<StepVars> {
    let xs = g.leaf(inp.xs.clone());
    let xa = g.leaf(inp.xs_aug.clone());
    let fs = features_graph(g, p, xs, cfg.use_attention)?;
    let fa = features_graph(g, p, xa, cfg.use_attention)?;
    let logits = logits_graph(g, p, fs.z)?;
    let adjusted = match cfg.threshold_mode {
        ThresholdMode::Margin => {
            let tau = thresholds_graph(g, p, &inp.log_ratio)?;
            g.sub(logits, tau)?
        }
        ThresholdMode::Frozen | ThresholdMode::Off => logits,
    };
    let probs = g.softmax(adjusted)?;
    let omega_y: Vec<f64> = inp.ys.iter().map(|&y| inp.omega[y]).collect();
    let l_cls = focal_loss_graph(g, probs, &inp.ys, &omega_y, cfg.loss.focal_gamma)?;
    let reg = regularizer_graph(g, &p.theta(), fs.z, fa.z, &fs.heads, &cfg.loss)?;
    let scaled_reg = g.affine(reg.total, cfg.loss.lambda_reg, 0.0)?;
    let mut surrogate = g.add(l_cls, scaled_reg)?;
    let mut l_adv = None;
    if inp.lambda_adv > 0.0 {
        let xt = g.leaf(inp.xt.clone());
        let ft = features_graph(g, p, xt, cfg.use_attention)?;
        let ds = discriminator_graph(g, p, fs.z, inp.lambda_adv)?;
        let dt = discriminator_graph(g, p, ft.z, inp.lambda_adv)?;
        let adv = adversarial_loss_graph(g, ds, dt, &omega_y)?;
        surrogate = g.sub(surrogate, adv)?;
        l_adv = Some(adv);
    }
    Ok(StepVars {
        surrogate,
        l_cls,
        l_adv,
        reg,
    })
}

/// Scalar components of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepValues {
    pub l_cls: f64,
    pub l_adv: f64,
    pub reg: f64,
    pub objective: f64,
    pub lambda_adv: f64,
}

impl StepValues {
    pub fn read(g: &Graph, v: &StepVars, lambda_adv: f64, lambda_reg: f64) -> Result<Self> {
        let get = |x: Var| g.value(x).item().unwrap_or(f64::NAN);
        let l_cls = get(v.l_cls);
        let l_adv = v.l_adv.map_or(0.0, get);
        let reg = get(v.reg.total);
        let objective = total_objective(&ObjectiveParts {
            l_cls,
            l_adv,
            lambda_adv,
            reg,
            lambda_reg,
        })?;
        Ok(Self {
            l_cls,
            l_adv,
            reg,
            objective,
            lambda_adv,
        })
    }
}

/// Thresholds used at prediction time for the given mode.
pub fn prediction_thresholds(
    params: &IadaParams,
    counts: &[usize],
    mode: ThresholdMode,
) -> Result<Vec<f64>> {
    match mode {
        ThresholdMode::Off => Ok(vec![0.0; counts.len()]),
        _ => compute_thresholds(counts, params.beta, params.threshold_gamma),
    }
}

/// Metric row for a labeled set under the current parameters.
pub fn evaluate(
    params: &IadaParams,
    dom: &LabeledDomain,
    tau: &[f64],
    use_attention: bool,
) -> Result<MetricRow> {
    if dom.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate an empty domain".into(),
        ));
    }
    let f = extract_features(params, &dom.x, use_attention)?;
    let (pred, _) = classify(params, &f.z, tau)?;
    let probs = model::calibrated_probs(params, &f.z)?;
    metric_row(&pred, &probs, &dom.y, dom.classes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub seed: u64,
    pub iteration: usize,
    pub split: String,
    pub metrics: MetricRow,
    /// Means over the training steps since the previous row.
    pub losses: StepValues,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub split: String,
    pub metrics: MetricRow,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub params: IadaParams,
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<SeedSummary>,
}

/// Called with the per-class counts of every sampled source batch.
pub type BatchHook<'a> = &'a (dyn Fn(usize, &[usize]) + Sync);

fn check_compat(src: &LabeledDomain, val: &LabeledDomain, tgt: &UnlabeledDomain) -> Result<()> {
    let d = src.dim();
    if val.dim() != d || tgt.features().cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "feature dimensions differ: source {d}, validation {}, target {}",
            val.dim(),
            tgt.features().cols()
        )));
    }
    if val.classes != src.classes || tgt.classes() != src.classes {
        return Err(Error::DimensionMismatch(
            "class counts differ between domains".into(),
        ));
    }
    if let Some(c) = src.class_counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass { class: c + 1 });
    }
    if tgt.is_empty() {
        return Err(Error::InvalidArgument("target domain is empty".into()));
    }
    Ok(())
}

/// Sampling state and per-step bookkeeping shared by the training loop and
/// the epoch timer.
pub struct Stepper<'a> {
    src: &'a LabeledDomain,
    tgt: &'a UnlabeledDomain,
    cfg: &'a TrainConfig,
    alloc: BatchAllocation,
    index: ClassIndex,
    log_ratio: Vec<f64>,
    augmenter: Augmenter,
    rng: ChaCha8Rng,
    /// Current per-class weights.
    pub omega: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        src: &'a LabeledDomain,
        tgt: &'a UnlabeledDomain,
        cfg: &'a TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        let classes = src.classes;
        let uniform = vec![1.0 / classes as f64; classes];
        let pi_t = cfg.target_prior.as_deref().unwrap_or(&uniform);
        let alloc = allocate_batches(
            &src.pi_empirical,
            pi_t,
            cfg.batch_budget.max(classes),
            cfg.normalized_allocation,
        )?;
        let omega = if cfg.use_class_weights {
            class_weights_from_counts(&alloc.counts)
        } else {
            vec![1.0; classes]
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            src,
            tgt,
            cfg,
            index: ClassIndex::new(&src.y, classes),
            log_ratio: model::log_count_ratio(&src.class_counts)?,
            augmenter: Augmenter::new(cfg.augment_std),
            alloc,
            rng,
            omega,
        })
    }

    pub fn allocation(&self) -> &BatchAllocation {
        &self.alloc
    }

    /// One SGD update at iteration `t`. Returns the step's losses and the
    /// per-class counts of the source batch.
    pub fn step(&mut self, params: &mut IadaParams, t: usize) -> Result<(StepValues, Vec<usize>)> {
        let (src, cfg) = (self.src, self.cfg);
        let lambda_adv = lambda_schedule(t, cfg.loss.lambda0, cfg.loss.warmup_tau);
        let sb = sample_balanced_batch(&self.index, &self.alloc, &mut self.rng)?;
        let tb = sample_uniform_batch(self.tgt.len(), cfg.batch_budget, &mut self.rng);
        let ys: Vec<usize> = sb.iter().map(|&i| src.y[i]).collect();
        let mut per_class = vec![0usize; src.classes];
        for &y in &ys {
            per_class[y] += 1;
        }
        debug_assert_eq!(
            per_class, self.alloc.counts,
            "source batch deviates from the allocation"
        );
        let xs = src.x.select_rows(&sb);
        let xs_aug = self.augmenter.apply(&xs, &mut self.rng);
        let inp = StepInputs {
            xs,
            ys,
            xs_aug,
            xt: self.tgt.features().select_rows(&tb),
            omega: self.omega.clone(),
            log_ratio: self.log_ratio.clone(),
            lambda_adv,
        };
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let vars = build_objective(&mut g, &bound, &inp, cfg).map_err(|e| diverged(t, e))?;
        let values = StepValues::read(&g, &vars, lambda_adv, cfg.loss.lambda_reg)
            .map_err(|e| diverged(t, e))?;
        g.backward(vars.surrogate)
            .map_err(|e| diverged(t, e.into()))?;
        params.sgd_step(
            &g,
            &bound,
            cfg.learning_rate,
            &[Group::Theta, Group::Phi, Group::Psi],
        );
        if !params.is_finite() {
            return Err(Error::Diverged {
                iteration: t,
                reason: "parameters became non-finite".into(),
            });
        }
        Ok((values, per_class))
    }
}

/// One pass over the source domain: `ceil(n_s / batch_budget)` steps.
/// Returns the number of steps taken.
pub fn run_epoch(
    src: &LabeledDomain,
    tgt: &UnlabeledDomain,
    cfg: &TrainConfig,
    params: &mut IadaParams,
    seed: u64,
) -> Result<usize> {
    check_compat(src, src, tgt)?;
    let mut stepper = Stepper::new(src, tgt, cfg, seed)?;
    let steps = src.len().div_ceil(cfg.batch_budget.max(1));
    for t in 0..steps {
        stepper.step(params, t)?;
    }
    Ok(steps)
}

/// Trains one seed. `eval_sets` are labeled sets the harness wants tracked;
/// the loop itself only ever reads the target features.
pub fn train_seed(
    src: &LabeledDomain,
    val: &LabeledDomain,
    tgt: &UnlabeledDomain,
    cfg: &TrainConfig,
    seed: u64,
    eval_sets: &[(&str, &LabeledDomain)],
    hook: Option<BatchHook<'_>>,
) -> Result<SeedRun> {
    cfg.validate()?;
    check_compat(src, val, tgt)?;
    let classes = src.classes;
    let mut params = IadaParams::init(src.dim(), cfg.hidden, classes, seed)?;
    if cfg.iterations == 0 {
        return Ok(SeedRun {
            seed,
            params,
            rows: Vec::new(),
            summaries: Vec::new(),
        });
    }
    let frozen_tau = compute_thresholds(&src.class_counts, params.beta, params.threshold_gamma)?;
    let mut stepper = Stepper::new(src, tgt, cfg, seed)?;
    let mut window_counts = vec![0usize; classes];
    let mut window_sum = [0.0f64; 4];
    let mut window_len = 0usize;
    let mut rows = Vec::new();

    for t in 0..cfg.iterations {
        let (values, per_class) = stepper.step(&mut params, t)?;
        if let Some(h) = hook {
            h(t, &per_class);
        }
        for (w, c) in window_counts.iter_mut().zip(&per_class) {
            *w += c;
        }
        window_sum[0] += values.l_cls;
        window_sum[1] += values.l_adv;
        window_sum[2] += values.reg;
        window_sum[3] += values.objective;
        window_len += 1;

        let step = t + 1;
        if step % cfg.eval_every == 0 || step == cfg.iterations {
            if cfg.use_class_weights {
                stepper.omega = class_weights_from_counts(&window_counts);
            }
            window_counts.iter_mut().for_each(|c| *c = 0);
            let n = window_len as f64;
            let losses = StepValues {
                l_cls: window_sum[0] / n,
                l_adv: window_sum[1] / n,
                reg: window_sum[2] / n,
                objective: window_sum[3] / n,
                lambda_adv: values.lambda_adv,
            };
            window_sum = [0.0; 4];
            window_len = 0;
            let tau = match cfg.threshold_mode {
                ThresholdMode::Frozen => frozen_tau.clone(),
                m => prediction_thresholds(&params, &src.class_counts, m)?,
            };
            for (name, dom) in eval_sets {
                rows.push(EvalRow {
                    seed,
                    iteration: step,
                    split: name.to_string(),
                    metrics: evaluate(&params, dom, &tau, cfg.use_attention)?,
                    losses,
                });
            }
        }
    }

    let vf = extract_features(&params, &val.x, cfg.use_attention)?;
    let val_logits = model::logits(&params, &vf.z)?;
    params.temperature = model::fit_temperature(&val_logits, &val.y)?;
    let tau = match cfg.threshold_mode {
        ThresholdMode::Frozen => frozen_tau,
        m => prediction_thresholds(&params, &src.class_counts, m)?,
    };
    let summaries = eval_sets
        .iter()
        .map(|(name, dom)| {
            Ok(SeedSummary {
                seed,
                split: name.to_string(),
                metrics: evaluate(&params, dom, &tau, cfg.use_attention)?,
                temperature: params.temperature,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SeedRun {
        seed,
        params,
        rows,
        summaries,
    })
}

fn diverged(iteration: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { component } => Error::Diverged {
            iteration,
            reason: format!("non-finite value in {component}"),
        },
        Error::Autodiff(crate::autodiff::AutodiffError::NonFinite { op }) => Error::Diverged {
            iteration,
            reason: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Names of the aggregated metrics, in CSV order.
pub const METRIC_NAMES: [&str; 6] = [
    "accuracy",
    "auc",
    "f1",
    "precision",
    "recall",
    "balanced_f1",
];

fn metric_values(m: &MetricRow) -> [f64; 6] {
    [
        m.accuracy,
        m.auc,
        m.f1,
        m.precision,
        m.recall,
        m.balanced_f1,
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<SeedSummary>,
}

impl RunRecord {
    pub fn from_runs(runs: &[SeedRun]) -> Self {
        Self {
            rows: runs.iter().flat_map(|r| r.rows.clone()).collect(),
            summaries: runs.iter().flat_map(|r| r.summaries.clone()).collect(),
        }
    }

    pub fn splits(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.summaries {
            if !out.contains(&s.split) {
                out.push(s.split.clone());
            }
        }
        out
    }

    pub fn summaries_for<'a>(
        &'a self,
        split: &'a str,
    ) -> impl Iterator<Item = &'a SeedSummary> + 'a {
        self.summaries.iter().filter(move |s| s.split == split)
    }

    /// Seed mean and %CV of every metric on `split`, in [`METRIC_NAMES`] order.
    pub fn aggregate(&self, split: &str) -> Result<Vec<Aggregate>> {
        let per: Vec<[f64; 6]> = self
            .summaries_for(split)
            .map(|s| metric_values(&s.metrics))
            .collect();
        (0..METRIC_NAMES.len())
            .map(|k| seed_aggregate(&per.iter().map(|v| v[k]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn metric_header() -> Vec<String> {
        let mut h: Vec<String> = ["seed", "iteration", "split"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        h.extend(
            ["l_cls", "l_adv", "reg", "objective", "lambda_adv"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    pub fn write_metrics_csv(&self, path: &Path) -> Result<()> {
        let rows = self.rows.iter().map(|r| {
            let mut v = vec![r.seed.to_string(), r.iteration.to_string(), r.split.clone()];
            v.extend(metric_values(&r.metrics).iter().map(|&x| fmt_f64(x)));
            let l = &r.losses;
            v.extend(
                [l.l_cls, l.l_adv, l.reg, l.objective, l.lambda_adv]
                    .iter()
                    .map(|&x| fmt_f64(x)),
            );
            v
        });
        write_rows(path, &Self::metric_header(), rows)
    }

    pub fn summary_header() -> Vec<String> {
        let mut h: Vec<String> = ["row", "split"].iter().map(|s| s.to_string()).collect();
        h.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        h.push("temperature".into());
        h
    }

    /// One row per seed and split, then `mean` and `cv_percent` rows per split.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<Vec<String>> = Vec::new();
        for s in &self.summaries {
            let mut v = vec![s.seed.to_string(), s.split.clone()];
            v.extend(metric_values(&s.metrics).iter().map(|&x| fmt_f64(x)));
            v.push(fmt_f64(s.temperature));
            rows.push(v);
        }
        for split in self.splits() {
            let agg = self.aggregate(&split)?;
            let temps: Vec<f64> = self.summaries_for(&split).map(|s| s.temperature).collect();
            let t = seed_aggregate(&temps)?;
            let mut mean = vec!["mean".to_string(), split.clone()];
            mean.extend(agg.iter().map(|a| fmt_f64(a.mean)));
            mean.push(fmt_f64(t.mean));
            let cv = |a: &Aggregate| a.cv_percent.map_or(String::new(), fmt_f64);
            let mut cvr = vec!["cv_percent".to_string(), split.clone()];
            cvr.extend(agg.iter().map(cv));
            cvr.push(cv(&t));
            rows.push(mean);
            rows.push(cvr);
        }
        write_rows(path, &Self::summary_header(), rows)
    }
}

/// Runs every seed of `cfg` and merges the records in seed order.
pub fn train(
    src: &LabeledDomain,
    val: &LabeledDomain,
    tgt: &UnlabeledDomain,
    cfg: &TrainConfig,
    eval_sets: &[(&str, &LabeledDomain)],
) -> Result<(Vec<SeedRun>, RunRecord)> {
    cfg.validate()?;
    check_compat(src, val, tgt)?;
    let one = |&seed: &u64| train_seed(src, val, tgt, cfg, seed, eval_sets, None);
    let runs: Vec<SeedRun> = if cfg.parallel_seeds {
        cfg.seeds.par_iter().map(one).collect::<Result<_>>()?
    } else {
        cfg.seeds.iter().map(one).collect::<Result<_>>()?
    };
    let record = RunRecord::from_runs(&runs);
    Ok((runs, record))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    LambdaReg,
    LambdaAdv,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lambda_reg" => Some(Self::LambdaReg),
            "lambda_adv" => Some(Self::LambdaAdv),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LambdaReg => "lambda_reg",
            Self::LambdaAdv => "lambda_adv",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, value: f64) {
        match self {
            Self::LambdaReg => cfg.loss.lambda_reg = value,
            Self::LambdaAdv => cfg.loss.lambda0 = value,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub auc: Aggregate,
    pub balanced_f1: Aggregate,
}

/// One multi-seed run per grid value, reporting the target AUC.
pub fn ablation_sweep(
    src: &LabeledDomain,
    val: &LabeledDomain,
    tgt: &UnlabeledDomain,
    cfg: &TrainConfig,
    axis: SweepAxis,
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let target = tgt.reveal();
    let eval = [("target", &target)];
    grid.iter()
        .map(|&v| {
            let mut c = cfg.clone();
            axis.apply(&mut c, v);
            let (_, rec) = train(src, val, tgt, &c, &eval)?;
            let agg = rec.aggregate("target")?;
            Ok(SweepRow {
                value: v,
                auc: agg[1],
                balanced_f1: agg[5],
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, axis: SweepAxis, rows: &[SweepRow]) -> Result<()> {
    let header: Vec<String> = [
        axis.name(),
        "auc_mean",
        "auc_cv_percent",
        "balanced_f1_mean",
        "balanced_f1_cv_percent",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let cv = |a: &Aggregate| a.cv_percent.map_or(String::new(), fmt_f64);
    let body = rows.iter().map(|r| {
        vec![
            fmt_f64(r.value),
            fmt_f64(r.auc.mean),
            cv(&r.auc),
            fmt_f64(r.balanced_f1.mean),
            cv(&r.balanced_f1),
        ]
    });
    write_rows(path, &header, body)
}
