//! Synthetic source/target domains with controllable covariate, label and
//! concept shift.
//!
//! Each class is an isotropic Gaussian. Class counts are fixed by
//! largest-remainder rounding of `n * pi`, so the empirical proportions are
//! known exactly rather than sampled.
//!
//! Labels are 0-based in memory (`0..C`) and 1-based in CSV files.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::proportions::{self, largest_remainder};

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub pi: Vec<f64>,
    /// `classes` rows of length `d`.
    pub class_means: Vec<Vec<f64>>,
    pub class_scales: Vec<f64>,
    /// Added to every sample (covariate shift).
    pub mean_shift: Vec<f64>,
    /// Added to every class scale (quality degradation).
    pub noise_scale: f64,
    /// Rotation of the class means in the plane of the first two features
    /// (concept shift).
    pub concept_rotation: f64,
    pub seed: u64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let c = self.classes;
        if c == 0 || self.d == 0 {
            return Err(Error::InvalidArgument(
                "domain needs at least one class and one feature".into(),
            ));
        }
        if self.pi.len() != c {
            return Err(Error::DimensionMismatch(format!(
                "pi has {} entries for {c} classes",
                self.pi.len()
            )));
        }
        proportions::validate(&self.pi)?;
        if self.n < c {
            return Err(Error::InvalidArgument(format!(
                "n = {} is below the class count {c}",
                self.n
            )));
        }
        if self.class_means.len() != c || self.class_means.iter().any(|m| m.len() != self.d) {
            return Err(Error::DimensionMismatch(format!(
                "class_means must be {c} x {}",
                self.d
            )));
        }
        if self.class_scales.len() != c || self.class_scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "class_scales must be {c} positive values"
            )));
        }
        if self.mean_shift.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "mean_shift has {} entries for d = {}",
                self.mean_shift.len(),
                self.d
            )));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::InvalidArgument("noise_scale must be >= 0".into()));
        }
        if self.concept_rotation != 0.0 && self.d < 2 {
            return Err(Error::InvalidArgument(
                "concept_rotation needs at least two features".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic per-class sample counts.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let counts = largest_remainder(&self.pi, self.n);
        if let Some(c) = counts.iter().position(|&k| k == 0) {
            return Err(Error::EmptyClass { class: c + 1 });
        }
        Ok(counts)
    }

    /// Class means after the concept rotation and the covariate shift.
    pub fn effective_means(&self) -> Vec<Vec<f64>> {
        let (s, c) = self.concept_rotation.sin_cos();
        self.class_means
            .iter()
            .map(|m| {
                let mut out = m.clone();
                if self.d >= 2 {
                    out[0] = c * m[0] - s * m[1];
                    out[1] = s * m[0] + c * m[1];
                }
                for (o, sh) in out.iter_mut().zip(&self.mean_shift) {
                    *o += sh;
                }
                out
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDomain {
    pub x: Tensor,
    pub y: Vec<usize>,
    pub classes: usize,
    pub class_counts: Vec<usize>,
    pub pi_empirical: Vec<f64>,
}

impl LabeledDomain {
    pub fn new(x: Tensor, y: Vec<usize>, classes: usize) -> Result<Self> {
        if x.rank() != 2 || x.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for features of shape {:?}",
                y.len(),
                x.shape()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {} outside 1..={classes}",
                bad + 1
            )));
        }
        let mut class_counts = vec![0; classes];
        for &c in &y {
            class_counts[c] += 1;
        }
        let n = y.len().max(1) as f64;
        let pi_empirical = class_counts.iter().map(|&k| k as f64 / n).collect();
        Ok(Self {
            x,
            y,
            classes,
            class_counts,
            pi_empirical,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Self::new(self.x.select_rows(idx), y, self.classes).expect("subset of a valid domain")
    }
}

/// Target domain. Training code only ever sees [`UnlabeledDomain::features`];
/// the labels are reachable solely through [`UnlabeledDomain::evaluation_labels`].
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledDomain {
    x: Tensor,
    hidden_y: Vec<usize>,
    classes: usize,
    pub pi_true: Vec<f64>,
}

impl UnlabeledDomain {
    pub fn from_labeled(dom: LabeledDomain) -> Self {
        Self {
            x: dom.x,
            hidden_y: dom.y,
            classes: dom.classes,
            pi_true: dom.pi_empirical,
        }
    }

    pub fn features(&self) -> &Tensor {
        &self.x
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.hidden_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden_y.is_empty()
    }

    /// Ground truth for the evaluation harness only.
    pub fn evaluation_labels(&self) -> &[usize] {
        &self.hidden_y
    }

    /// Labeled view of the target, for evaluation and harness-only estimates.
    pub fn reveal(&self) -> LabeledDomain {
        LabeledDomain::new(self.x.clone(), self.hidden_y.clone(), self.classes)
            .expect("target built from a valid domain")
    }
}

/// Draws one labeled domain from `spec`. Row order is shuffled.
pub fn generate(spec: &DomainSpec) -> Result<LabeledDomain> {
    spec.validate()?;
    let counts = spec.class_counts()?;
    let means = spec.effective_means();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(spec.n * spec.d);
    for &c in &labels {
        let sd = spec.class_scales[c] + spec.noise_scale;
        for m in &means[c] {
            let z: f64 = rng.sample(StandardNormal);
            data.push(m + sd * z);
        }
    }
    let x = Tensor::new(vec![spec.n, spec.d], data)?;
    LabeledDomain::new(x, labels, spec.classes)
}

pub fn generate_pair(
    src: &DomainSpec,
    tgt: &DomainSpec,
) -> Result<(LabeledDomain, UnlabeledDomain)> {
    if src.d != tgt.d {
        return Err(Error::DimensionMismatch(format!(
            "source d = {} but target d = {}",
            src.d, tgt.d
        )));
    }
    if src.classes != tgt.classes {
        return Err(Error::DimensionMismatch(format!(
            "source has {} classes but target has {}",
            src.classes, tgt.classes
        )));
    }
    let s = generate(src)?;
    let t = generate(tgt)?;
    Ok((s, UnlabeledDomain::from_labeled(t)))
}

/// Per-class stratified split into `fractions.len()` disjoint parts that
/// together cover the domain.
pub fn stratified_split(
    dom: &LabeledDomain,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<LabeledDomain>> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::InvalidArgument(
            "split fractions must be positive".into(),
        ));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > proportions::SUM_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "split fractions sum to {total}"
        )));
    }
    let k = fractions.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k];
    for c in 0..dom.classes {
        let mut members: Vec<usize> = (0..dom.len()).filter(|&i| dom.y[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {} has {} samples, fewer than {k} splits",
                c + 1,
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let sizes = proportions::largest_remainder_at_least_one(fractions, members.len());
        let mut start = 0;
        for (part, size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    Ok(parts
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            dom.subset(&idx)
        })
        .collect())
}

/// Second view for the consistency term: additive isotropic Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmenter {
    pub std: f64,
}

impl Augmenter {
    pub fn new(std: f64) -> Self {
        Self { std }
    }

    pub fn apply<R: Rng + ?Sized>(&self, x: &Tensor, rng: &mut R) -> Tensor {
        if self.std == 0.0 {
            return x.clone();
        }
        let mut out = x.clone();
        for v in out.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += self.std * z;
        }
        out
    }
}

// ----- CSV persistence -----

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(d: usize) -> Vec<String> {
    let mut cols: Vec<String> = (1..=d).map(|j| format!("f{j}")).collect();
    cols.push("label".into());
    cols.push("domain".into());
    cols
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => {
            let msg = format!("{other:?}");
            match line {
                Some(l) => Error::format(path, format!("line {l}: {msg}")),
                None => Error::format(path, msg),
            }
        }
    }
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `f1..fd,label,domain`. `labels = None` leaves the label column empty.
pub fn write_domain_csv(
    path: &Path,
    x: &Tensor,
    labels: Option<&[usize]>,
    domain: &str,
) -> Result<()> {
    let rows = (0..x.rows()).map(|i| {
        let mut line: Vec<String> = x.row(i).iter().map(|&v| fmt_f64(v)).collect();
        line.push(labels.map_or(String::new(), |l| (l[i] + 1).to_string()));
        line.push(domain.to_string());
        line
    });
    write_rows(path, &header(x.cols()), rows)
}

/// Sibling file holding the quarantined target labels: `x.csv -> x.labels.csv`.
pub fn labels_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("domain");
    path.with_file_name(format!("{stem}.labels.csv"))
}

pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    write_rows(
        path,
        &["label".to_string()],
        labels.iter().map(|l| [(l + 1).to_string()]),
    )
}

pub struct DomainRows {
    pub x: Tensor,
    pub labels: Vec<Option<usize>>,
    pub domain: Vec<String>,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

pub fn read_domain_csv(path: &Path) -> Result<DomainRows> {
    let mut r = csv_reader(path)?;
    let head: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let d = head.len().saturating_sub(2);
    if d == 0 || head != header(d) {
        return Err(Error::format(
            path,
            format!("unexpected header `{}`", head.join(",")),
        ));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut domain = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::format(path, format!("line {line}: {msg}"));
        for f in rec.iter().take(d) {
            data.push(
                f.parse::<f64>()
                    .map_err(|_| bad(format!("bad number `{f}`")))?,
            );
        }
        labels.push(match &rec[d] {
            "" => None,
            s => Some(parse_label(s).map_err(bad)?),
        });
        domain.push(rec[d + 1].to_string());
    }
    let n = labels.len();
    Ok(DomainRows {
        x: Tensor::new(vec![n, d], data)?,
        labels,
        domain,
    })
}

fn parse_label(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(l) if l >= 1 => Ok(l - 1),
        _ => Err(format!("bad label `{s}`")),
    }
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv_reader(path)?;
    let head = r.headers().map_err(|e| csv_err(path, e))?;
    if head.len() != 1 || &head[0] != "label" {
        return Err(Error::format(
            path,
            format!(
                "unexpected header `{}`",
                head.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(
            parse_label(&rec[0]).map_err(|m| Error::format(path, format!("line {line}: {m}")))?,
        );
    }
    Ok(out)
}

pub fn load_labeled(path: &Path, classes: usize) -> Result<LabeledDomain> {
    let rows = read_domain_csv(path)?;
    let y = rows
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::format(path, format!("row {} has no label", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    LabeledDomain::new(rows.x, y, classes)
}

/// Loads a training-visible target file plus its `.labels.csv` sibling.
pub fn load_unlabeled(path: &Path, classes: usize) -> Result<UnlabeledDomain> {
    let rows = read_domain_csv(path)?;
    if rows.labels.iter().any(Option::is_some) {
        return Err(Error::format(path, "target file must not carry labels"));
    }
    let lp = labels_path(path);
    let y = read_labels_csv(&lp)?;
    if y.len() != rows.x.rows() {
        return Err(Error::format(
            &lp,
            format!("{} labels for {} rows", y.len(), rows.x.rows()),
        ));
    }
    Ok(UnlabeledDomain::from_labeled(LabeledDomain::new(
        rows.x, y, classes,
    )?))
}

pub fn save_pair(dir: &Path, src: &LabeledDomain, tgt: &UnlabeledDomain) -> Result<()> {
    write_domain_csv(&dir.join("source.csv"), &src.x, Some(&src.y), "source")?;
    let tp = dir.join("target.csv");
    write_domain_csv(&tp, tgt.features(), None, "target")?;
    write_labels_csv(&labels_path(&tp), tgt.evaluation_labels())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(n: usize, pi: Vec<f64>, seed: u64) -> DomainSpec {
        let c = pi.len();
        DomainSpec {
            n,
            d: 2,
            classes: c,
            pi,
            class_means: (0..c).map(|k| vec![k as f64 * 2.0, 0.0]).collect(),
            class_scales: vec![1.0; c],
            mean_shift: vec![0.0, 0.0],
            noise_scale: 0.0,
            concept_rotation: 0.0,
            seed,
        }
    }

    #[test]
    fn reported_source_counts() {
        let d = generate(&spec(1698, vec![0.289, 0.711], 1)).unwrap();
        assert_eq!(d.class_counts, vec![491, 1207]);
        assert_eq!(d.pi_empirical[0], 491.0 / 1698.0);
        assert!(d.y.iter().all(|&c| c < 2));
    }

    #[test]
    fn zero_count_class_is_named() {
        let err = generate(&spec(5, vec![0.05, 0.95], 1)).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { class: 1 }));
    }

    #[test]
    fn pair_requires_matching_dims() {
        let mut t = spec(10, vec![0.5, 0.5], 2);
        t.d = 3;
        t.mean_shift = vec![0.0; 3];
        t.class_means = vec![vec![0.0; 3]; 2];
        assert!(matches!(
            generate_pair(&spec(10, vec![0.5, 0.5], 1), &t),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let s = spec(200, vec![0.3, 0.7], 9);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let mut other = s.clone();
        other.seed = 10;
        assert_ne!(generate(&s).unwrap().x, generate(&other).unwrap().x);
    }

    #[test]
    fn no_shift_target_matches_source_in_mean() {
        let s = spec(2000, vec![0.3, 0.7], 1);
        let mut t = s.clone();
        t.seed = 2;
        let (a, b) = generate_pair(&s, &t).unwrap();
        assert_eq!(a.pi_empirical, b.pi_true);
        // two-sample z test per feature at alpha = 0.01 (two-sided, z < 2.576)
        for j in 0..2 {
            let col = |x: &Tensor| (0..x.rows()).map(|i| x.get2(i, j)).collect::<Vec<_>>();
            let (ca, cb) = (col(&a.x), col(b.features()));
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64], m: f64| {
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
            };
            let (ma, mb) = (mean(&ca), mean(&cb));
            let se = (var(&ca, ma) / ca.len() as f64 + var(&cb, mb) / cb.len() as f64).sqrt();
            assert!(((ma - mb) / se).abs() < 2.576, "feature {j}");
        }
    }

    #[test]
    fn shift_knobs_act_on_the_intended_factor() {
        let base = spec(400, vec![0.4, 0.6], 3);
        let mut cov = base.clone();
        cov.mean_shift = vec![1.5, -0.5];
        assert_eq!(
            generate(&cov).unwrap().class_counts,
            generate(&base).unwrap().class_counts
        );
        let m = cov.effective_means();
        assert_eq!(m[1], vec![3.5, -0.5]);

        let mut label = base.clone();
        label.pi = vec![0.7, 0.3];
        assert_eq!(label.effective_means(), base.effective_means());
        assert_ne!(
            generate(&label).unwrap().class_counts,
            generate(&base).unwrap().class_counts
        );

        let mut concept = base.clone();
        concept.concept_rotation = std::f64::consts::FRAC_PI_2;
        let m = concept.effective_means();
        assert!((m[1][0]).abs() < 1e-12 && (m[1][1] - 2.0).abs() < 1e-12);
        assert_eq!(
            generate(&concept).unwrap().class_counts,
            generate(&base).unwrap().class_counts
        );
    }

    #[test]
    fn split_of_balanced_hundred() {
        let d = generate(&spec(100, vec![0.5, 0.5], 4)).unwrap();
        let parts = stratified_split(&d, &[0.6, 0.2, 0.2], 0).unwrap();
        let counts: Vec<Vec<usize>> = parts.iter().map(|p| p.class_counts.clone()).collect();
        assert_eq!(counts, vec![vec![30, 30], vec![10, 10], vec![10, 10]]);
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_within_one() {
        let d = generate(&spec(1698, vec![0.289, 0.711], 5)).unwrap();
        // tag every row by its first feature to track identity through the split
        let parts = stratified_split(&d, &[0.6, 0.2, 0.2], 7).unwrap();
        let train = &parts[0];
        assert!(train.class_counts[0] == 294 || train.class_counts[0] == 295);
        let mut seen: Vec<u64> = parts
            .iter()
            .flat_map(|p| (0..p.len()).map(move |i| p.x.get2(i, 0).to_bits()))
            .collect();
        seen.sort_unstable();
        let mut all: Vec<u64> = (0..d.len()).map(|i| d.x.get2(i, 0).to_bits()).collect();
        all.sort_unstable();
        assert_eq!(seen, all);
        for (p, f) in parts.iter().zip([0.6, 0.2, 0.2]) {
            for c in 0..2 {
                let ideal = d.class_counts[c] as f64 * f;
                assert!((p.class_counts[c] as f64 - ideal).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn single_class_split() {
        let d = generate(&spec(20, vec![1.0], 4)).unwrap();
        let parts = stratified_split(&d, &[0.6, 0.2, 0.2], 0).unwrap();
        assert!(parts
            .iter()
            .all(|p| p.class_counts == vec![p.len()] && !p.is_empty()));
    }

    #[test]
    fn split_errors() {
        let d = generate(&spec(4, vec![0.5, 0.5], 4)).unwrap();
        assert!(stratified_split(&d, &[0.6, 0.2, 0.2], 0).is_err());
        assert!(stratified_split(&d, &[0.6, 0.3], 0).is_err());
    }

    #[test]
    fn augmentation_contracts() {
        let x = Tensor::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(Augmenter::new(0.0).apply(&x, &mut rng), x);

        let aug = Augmenter::new(0.1);
        let a = aug.apply(&x, &mut ChaCha8Rng::seed_from_u64(3));
        let b = aug.apply(&x, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );

        let reps = 10_000;
        let mut sum = [0.0; 3];
        for _ in 0..reps {
            for (s, v) in sum.iter_mut().zip(aug.apply(&x, &mut rng).data()) {
                *s += v;
            }
        }
        for (s, v) in sum.iter().zip(x.data()) {
            assert!((s / reps as f64 - v).abs() < 3.0 * 0.1 / 100.0);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate(&spec(30, vec![0.4, 0.6], 1)).unwrap();
        let t = UnlabeledDomain::from_labeled(generate(&spec(20, vec![0.5, 0.5], 2)).unwrap());
        save_pair(dir.path(), &s, &t).unwrap();
        assert_eq!(load_labeled(&dir.path().join("source.csv"), 2).unwrap(), s);
        assert_eq!(
            load_unlabeled(&dir.path().join("target.csv"), 2).unwrap(),
            t
        );
        let text = std::fs::read_to_string(dir.path().join("target.csv")).unwrap();
        assert!(text.starts_with("f1,f2,label,domain\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",,target"));
        assert!(dir.path().join("target.labels.csv").exists());
    }
}
