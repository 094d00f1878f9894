//! Experiment protocols E1-E4, the best-k fusion study, and report output.
//!
//! A run walks each configured protocol through: subject sampling, per-subject
//! train/test split, canonicalization, PCA/LDA fitting on the training images,
//! nearest-neighbour classification under every configured metric plus the
//! SVM, and best-k fusion of the normalized metric matrices. Trials repeat the
//! whole chain with seed `seed + trial`.
//!
//! Wall-clock timings are kept out of the main report so that reports are
//! byte-identical across runs; [`emit_report`] writes them to a sidecar file.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{self, Prediction, Standardizer};
use crate::dataset::{self, Dataset, SamplingSpec, SplitRatio};
use crate::error::{Error, Result};
use crate::features::{self, FeatureKind, DEFAULT_COMPONENTS};
use crate::fusion::{self, FusionKind, FusionScheme};
use crate::metrics::{self, DistanceMatrix, MetricKind, DEFAULT_RIDGE};

/// Subject selections. `Custom` takes explicit gender counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    E1,
    E2,
    E3Male,
    E3Female,
    E3Mixed,
    #[serde(rename = "E4_120")]
    E4_120,
    #[serde(rename = "E4_240")]
    E4_240,
    #[serde(rename = "E4_360")]
    E4_360,
    #[serde(rename = "E4_480")]
    E4_480,
    Custom { n_female: usize, n_male: usize },
}

impl Protocol {
    /// (females, males)
    pub fn counts(self) -> (usize, usize) {
        match self {
            Protocol::E1 => (83, 83),
            Protocol::E2 => (83, 461),
            Protocol::E3Male => (0, 82),
            Protocol::E3Female => (82, 0),
            Protocol::E3Mixed => (41, 41),
            Protocol::E4_120 => (20, 100),
            Protocol::E4_240 => (40, 200),
            Protocol::E4_360 => (60, 300),
            Protocol::E4_480 => (80, 400),
            Protocol::Custom { n_female, n_male } => (n_female, n_male),
        }
    }

    pub fn n_subjects(self) -> usize {
        let (f, m) = self.counts();
        f + m
    }

    pub fn name(self) -> String {
        match self {
            Protocol::E1 => "E1".into(),
            Protocol::E2 => "E2".into(),
            Protocol::E3Male => "E3_MALE".into(),
            Protocol::E3Female => "E3_FEMALE".into(),
            Protocol::E3Mixed => "E3_MIXED".into(),
            Protocol::E4_120 => "E4_120".into(),
            Protocol::E4_240 => "E4_240".into(),
            Protocol::E4_360 => "E4_360".into(),
            Protocol::E4_480 => "E4_480".into(),
            Protocol::Custom { n_female, n_male } => format!("CUSTOM_{n_female}F_{n_male}M"),
        }
    }

    /// Expands `e1`, `e2`, `e3`, `e4` (or a single protocol name such as
    /// `e3_male`) into protocols. `custom` needs explicit counts and is not
    /// accepted here.
    pub fn family(name: &str) -> Result<Vec<Protocol>> {
        match name.trim().to_ascii_lowercase().as_str() {
            "e1" => Ok(vec![Protocol::E1]),
            "e2" => Ok(vec![Protocol::E2]),
            "e3" => Ok(vec![Protocol::E3Male, Protocol::E3Female, Protocol::E3Mixed]),
            "e4" => Ok(vec![Protocol::E4_120, Protocol::E4_240, Protocol::E4_360, Protocol::E4_480]),
            "e3_male" => Ok(vec![Protocol::E3Male]),
            "e3_female" => Ok(vec![Protocol::E3Female]),
            "e3_mixed" => Ok(vec![Protocol::E3Mixed]),
            "e4_120" => Ok(vec![Protocol::E4_120]),
            "e4_240" => Ok(vec![Protocol::E4_240]),
            "e4_360" => Ok(vec![Protocol::E4_360]),
            "e4_480" => Ok(vec![Protocol::E4_480]),
            "custom" => Err(Error::invalid("the custom protocol needs explicit female and male counts")),
            other => Err(Error::invalid(format!(
                "unknown protocol {other:?} (expected e1, e2, e3, e4 or custom)"
            ))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A nearest-neighbour metric or the SVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Classifier {
    Nn(MetricKind),
    Svm,
}

impl Classifier {
    /// The eight metrics in numbering order, then the SVM.
    pub fn all() -> Vec<Classifier> {
        MetricKind::ALL
            .iter()
            .map(|&m| Classifier::Nn(m))
            .chain([Classifier::Svm])
            .collect()
    }

    pub fn metric(self) -> Option<MetricKind> {
        match self {
            Classifier::Nn(m) => Some(m),
            Classifier::Svm => None,
        }
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classifier::Nn(m) => write!(f, "{m}"),
            Classifier::Svm => f.write_str("SVM"),
        }
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("svm") {
            return Ok(Classifier::Svm);
        }
        s.parse::<MetricKind>().map(Classifier::Nn)
    }
}

impl TryFrom<String> for Classifier {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Classifier> for String {
    fn from(c: Classifier) -> String {
        c.to_string()
    }
}

/// Fuse the `k` best-ranked metrics under `scheme`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    pub k: usize,
    pub scheme: FusionScheme,
}

impl FusionSpec {
    /// Every combination of `ks` and `kinds`; `Weighted` expands to the
    /// default weight tuples for each k.
    pub fn expand(ks: &[usize], kinds: &[FusionKind]) -> Result<Vec<FusionSpec>> {
        let mut out = Vec::new();
        for &k in ks {
            for &kind in kinds {
                if kind == FusionKind::Weighted {
                    let tuples = fusion::default_weight_tuples(k);
                    if tuples.is_empty() {
                        return Err(Error::invalid(format!(
                            "no default weight tuples for k = {k}; pass weights explicitly"
                        )));
                    }
                    for w in tuples {
                        out.push(FusionSpec {
                            k,
                            scheme: FusionScheme::weighted(w)?,
                        });
                    }
                } else {
                    out.push(FusionSpec {
                        k,
                        scheme: FusionScheme::new(kind)?,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Best-2, -3 and -4 fusion under all five schemes with the default weights.
    pub fn study_defaults() -> Vec<FusionSpec> {
        FusionSpec::expand(&[2, 3, 4], &FusionKind::ALL).expect("default tuples exist for k = 2..4")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSettings {
    pub c: f64,
    /// `None` means `1 / n_features`.
    pub gamma: Option<f64>,
    /// Pick (C, gamma) by cross-validated grid search on the training images.
    pub tune: bool,
    pub folds: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        SvmSettings {
            c: 10.0,
            gamma: None,
            tune: false,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocols: Vec<Protocol>,
    pub ratio: SplitRatio,
    pub features: Vec<FeatureKind>,
    pub classifiers: Vec<Classifier>,
    pub fusion: Vec<FusionSpec>,
    pub seed: u64,
    pub n_trials: usize,
    pub n_components: usize,
    pub images_per_subject: usize,
    pub svm: SvmSettings,
    pub mahalanobis_ridge: f64,
    /// Min-Max normalize each probe row instead of the whole matrix before fusion.
    pub per_row_normalization: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocols: vec![Protocol::E1],
            ratio: SplitRatio::R9_1,
            features: FeatureKind::ALL.to_vec(),
            classifiers: Classifier::all(),
            fusion: Vec::new(),
            seed: 0,
            n_trials: 1,
            n_components: DEFAULT_COMPONENTS,
            images_per_subject: 10,
            svm: SvmSettings::default(),
            mahalanobis_ridge: DEFAULT_RIDGE,
            per_row_normalization: false,
        }
    }
}

fn has_duplicates<T: Ord>(items: &[T]) -> bool {
    items.iter().collect::<BTreeSet<_>>().len() != items.len()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() {
            return Err(Error::invalid("no protocols configured"));
        }
        if self.features.is_empty() {
            return Err(Error::invalid("no feature kinds configured"));
        }
        if self.classifiers.is_empty() {
            return Err(Error::invalid("no classifiers configured"));
        }
        if has_duplicates(&self.protocols) || has_duplicates(&self.features) || has_duplicates(&self.classifiers) {
            return Err(Error::invalid("protocols, features and classifiers must not repeat"));
        }
        for p in &self.protocols {
            if p.n_subjects() < 2 {
                return Err(Error::invalid(format!("protocol {p} selects fewer than 2 subjects")));
            }
        }
        if self.n_trials == 0 {
            return Err(Error::invalid("n_trials must be at least 1"));
        }
        if self.n_components == 0 {
            return Err(Error::invalid("n_components must be at least 1"));
        }
        if self.ratio.counts(self.images_per_subject).is_none() {
            return Err(Error::invalid(format!(
                "{} images per subject cannot be split {}",
                self.images_per_subject, self.ratio
            )));
        }
        if !(self.mahalanobis_ridge >= 0.0 && self.mahalanobis_ridge.is_finite()) {
            return Err(Error::invalid("mahalanobis_ridge must be >= 0"));
        }
        if self.classifiers.contains(&Classifier::Svm) {
            if !(self.svm.c > 0.0 && self.svm.c.is_finite()) {
                return Err(Error::invalid("svm.c must be > 0"));
            }
            if let Some(g) = self.svm.gamma {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::invalid("svm.gamma must be > 0"));
                }
            }
            if self.svm.tune && self.svm.folds < 2 {
                return Err(Error::invalid("svm.folds must be at least 2"));
            }
        }
        let n_metrics = self.classifiers.iter().filter(|c| c.metric().is_some()).count();
        for spec in &self.fusion {
            if spec.k == 0 {
                return Err(Error::invalid("fusion k must be at least 1"));
            }
            if spec.k > n_metrics {
                return Err(Error::invalid(format!(
                    "fusion of the best {} metrics exceeds the {n_metrics} configured metrics",
                    spec.k
                )));
            }
            if let Some(w) = spec.scheme.weights() {
                if w.len() != spec.k {
                    return Err(Error::invalid(format!(
                        "fusion weights {:?} do not match k = {}",
                        w, spec.k
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Percentage of predictions whose label matches the truth.
pub fn accuracy<T: AsRef<str>>(preds: &[Prediction], truth: &[T]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction set"));
    }
    let correct = preds.iter().zip(truth).filter(|(p, t)| p.predicted == t.as_ref()).count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

/// Runs `f` and returns its result with the elapsed wall-clock seconds.
pub fn time_section<T>(label: &str, f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    log::debug!("{label}: {secs:.3}s");
    (out, secs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

#[derive(Debug, Default)]
struct Timings(Vec<Timing>);

impl Timings {
    fn time<T>(&mut self, label: String, f: impl FnOnce() -> T) -> T {
        debug_assert!(self.0.iter().all(|t| t.label != label), "duplicate timing label {label}");
        let (out, seconds) = time_section(&label, f);
        self.0.push(Timing { label, seconds });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentInfo {
    pub feature: FeatureKind,
    pub requested: usize,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub feature: FeatureKind,
    pub classifier: Classifier,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmChoice {
    pub feature: FeatureKind,
    pub c: f64,
    pub gamma: f64,
    pub cv_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub feature: FeatureKind,
    pub k: usize,
    pub scheme: String,
    /// Constituent metrics, best first.
    pub members: Vec<MetricKind>,
    pub accuracy: f64,
    /// Accuracy of the best single metric of this run.
    pub best_individual: f64,
    pub at_least_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    /// SHA-256 of the sorted selected subject ids, newline-joined.
    pub subjects_sha256: String,
    pub n_female: usize,
    pub n_male: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub components: Vec<ComponentInfo>,
    pub cells: Vec<CellResult>,
    pub svm: Vec<SvmChoice>,
    pub fusion: Vec<FusionResult>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub feature: FeatureKind,
    pub classifier: Classifier,
    pub mean: f64,
    /// Sample standard deviation over trials (0 for a single trial).
    pub sd: f64,
    pub per_trial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSummary {
    pub feature: FeatureKind,
    pub k: usize,
    pub scheme: String,
    pub mean: f64,
    pub sd: f64,
    pub per_trial: Vec<f64>,
    pub members_per_trial: Vec<Vec<MetricKind>>,
    /// Trials in which the fused accuracy reached the best single metric.
    pub trials_at_least_best: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub protocol: Protocol,
    pub n_female: usize,
    pub n_male: usize,
    pub trials: Vec<TrialReport>,
    pub cells: Vec<CellSummary>,
    pub fusion: Vec<FusionSummary>,
}

impl SectionReport {
    pub fn cell(&self, feature: FeatureKind, classifier: Classifier) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.feature == feature && c.classifier == classifier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub sections: Vec<SectionReport>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl ExperimentReport {
    pub fn section(&self, protocol: Protocol) -> Option<&SectionReport> {
        self.sections.iter().find(|s| s.protocol == protocol)
    }

    /// Total wall-clock seconds of all timed sections whose label starts with
    /// `prefix`.
    pub fn seconds(&self, prefix: &str) -> f64 {
        self.timings
            .iter()
            .filter(|t| t.label.starts_with(prefix))
            .map(|t| t.seconds)
            .sum()
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn subjects_hash(d: &Dataset) -> String {
    let mut ids: Vec<&str> = d.subject_ids().collect();
    ids.sort_unstable();
    let digest = Sha256::digest(ids.join("\n").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct TrialContext<'a> {
    cfg: &'a ExperimentConfig,
    protocol: Protocol,
    trial: usize,
}

impl TrialContext<'_> {
    fn label(&self, rest: &str) -> String {
        format!("{}/trial{}/{}", self.protocol, self.trial, rest)
    }
}

fn run_trial(pool: &Dataset, tc: &TrialContext<'_>, timings: &mut Timings) -> Result<TrialReport> {
    let cfg = tc.cfg;
    let seed = cfg.seed.wrapping_add(tc.trial as u64);
    let (n_female, n_male) = tc.protocol.counts();
    let sample = dataset::sample_subjects(
        pool,
        &SamplingSpec {
            n_female,
            n_male,
            images_per_subject: cfg.images_per_subject,
            seed,
        },
    )?;
    let split = dataset::split_train_test(&sample, cfg.ratio, seed)?;
    let (x_train, x_test) = timings.time(tc.label("preprocess"), || -> Result<_> {
        Ok((dataset::face_matrix(&split.train)?, dataset::face_matrix(&split.test)?))
    })?;
    let y_train: Vec<&str> = split.train.iter().map(|r| r.subject_id()).collect();
    let y_test: Vec<&str> = split.test.iter().map(|r| r.subject_id()).collect();
    let n_classes = sample.n_subjects();

    let mut report = TrialReport {
        trial: tc.trial,
        seed,
        subjects_sha256: subjects_hash(&sample),
        n_female: sample.count_gender(dataset::Gender::Female),
        n_male: sample.count_gender(dataset::Gender::Male),
        n_train: split.train.len(),
        n_test: split.test.len(),
        components: Vec::new(),
        cells: Vec::new(),
        svm: Vec::new(),
        fusion: Vec::new(),
        warnings: Vec::new(),
    };

    let pca_full = timings.time(tc.label("PCA/fit"), || features::fit_pca_full(x_train.view()))?;
    for &feature in &cfg.features {
        let model = match feature {
            FeatureKind::Pca => {
                let used = cfg.n_components.min(pca_full.n_components());
                report.components.push(ComponentInfo {
                    feature,
                    requested: cfg.n_components,
                    used,
                });
                pca_full.truncated(used)?
            }
            FeatureKind::Lda => {
                let used = cfg.n_components.min(n_classes - 1);
                report.components.push(ComponentInfo {
                    feature,
                    requested: cfg.n_components,
                    used,
                });
                timings
                    .time(tc.label("LDA/fit"), || {
                        features::fit_lda_with_pca(&pca_full, x_train.view(), &y_train, used)
                    })?
                    .model
            }
        };
        if let Some(info) = report.components.last() {
            if info.used < info.requested {
                report.warnings.push(format!(
                    "{feature}: {} components requested, {} available",
                    info.requested, info.used
                ));
            }
        }
        let gallery = model.project(x_train.view())?;
        let probes = model.project(x_test.view())?;
        let ctx = if cfg.classifiers.contains(&Classifier::Nn(MetricKind::Mc)) {
            metrics::fit_metric_context(gallery.view(), cfg.mahalanobis_ridge)?
        } else {
            metrics::MetricContext::empty()
        };

        let mut normalized: Vec<(MetricKind, DistanceMatrix)> = Vec::new();
        let mut metric_acc: Vec<(MetricKind, f64)> = Vec::new();
        for &classifier in &cfg.classifiers {
            let acc = match classifier {
                Classifier::Nn(kind) => timings.time(tc.label(&format!("{feature}/{classifier}")), || -> Result<f64> {
                    let d = metrics::pairwise(kind, gallery.view(), probes.view(), &ctx)?;
                    let acc = accuracy(&classify::nn_classify(&d, &y_train)?, &y_test)?;
                    if !cfg.fusion.is_empty() {
                        let n = if cfg.per_row_normalization {
                            fusion::minmax_normalize_rows(&d)
                        } else {
                            fusion::minmax_normalize(&d)
                        };
                        normalized.push((kind, n));
                    }
                    Ok(acc)
                })?,
                Classifier::Svm => {
                    let (acc, choice, warnings) = timings.time(tc.label(&format!("{feature}/SVM")), || {
                        run_svm(cfg, feature, gallery.view(), probes.view(), &y_train, &y_test, seed)
                    })?;
                    report.svm.push(choice);
                    report.warnings.extend(warnings);
                    acc
                }
            };
            if let Some(kind) = classifier.metric() {
                metric_acc.push((kind, acc));
            }
            log::info!("{} trial {} {feature} {classifier}: {acc:.2}%", tc.protocol, tc.trial);
            report.cells.push(CellResult {
                feature,
                classifier,
                accuracy: acc,
            });
        }

        if cfg.fusion.is_empty() {
            continue;
        }
        let ranked = fusion::rank_metrics(&metric_acc);
        let best_individual = metric_acc.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        for spec in &cfg.fusion {
            if spec.k > ranked.len() {
                return Err(Error::invalid(format!(
                    "fusion of the best {} metrics exceeds the {} available",
                    spec.k,
                    ranked.len()
                )));
            }
            let members: Vec<MetricKind> = ranked[..spec.k].to_vec();
            let inputs: Vec<DistanceMatrix> = members
                .iter()
                .map(|m| normalized.iter().find(|(k, _)| k == m).expect("matrix kept").1.clone())
                .collect();
            let label = tc.label(&format!("{feature}/fusion/k{}/{}", spec.k, spec.scheme.label()));
            let acc = timings.time(label, || -> Result<f64> {
                let fused = fusion::fuse(&inputs, &spec.scheme)?;
                accuracy(&classify::nn_classify(&fused, &y_train)?, &y_test)
            })?;
            report.fusion.push(FusionResult {
                feature,
                k: spec.k,
                scheme: spec.scheme.label(),
                members,
                accuracy: acc,
                best_individual,
                at_least_best: acc >= best_individual,
            });
        }
    }
    Ok(report)
}

fn run_svm(
    cfg: &ExperimentConfig,
    feature: FeatureKind,
    gallery: ndarray::ArrayView2<'_, f64>,
    probes: ndarray::ArrayView2<'_, f64>,
    y_train: &[&str],
    y_test: &[&str],
    seed: u64,
) -> Result<(f64, SvmChoice, Vec<String>)> {
    let scaler = Standardizer::fit(gallery)?;
    let g = scaler.transform(gallery)?;
    let p = scaler.transform(probes)?;
    let mut warnings = Vec::new();
    let (c, gamma, cv_accuracy) = if cfg.svm.tune {
        let grid = classify::grid_search_svm(
            g.view(),
            y_train,
            &classify::default_c_grid(),
            &classify::default_gamma_grid(),
            cfg.svm.folds,
            seed,
        )?;
        warnings.extend(grid.warnings);
        (grid.c, grid.gamma, Some(100.0 * grid.cv_accuracy))
    } else {
        (cfg.svm.c, cfg.svm.gamma.unwrap_or(1.0 / g.ncols() as f64), None)
    };
    let model = classify::svm_train(g.view(), y_train, c, gamma)?;
    warnings.extend(model.flags().iter().cloned());
    let acc = accuracy(&classify::svm_predict(&model, p.view())?, y_test)?;
    Ok((
        acc,
        SvmChoice {
            feature,
            c,
            gamma,
            cv_accuracy,
        },
        warnings,
    ))
}

fn summarize(protocol: Protocol, trials: Vec<TrialReport>) -> SectionReport {
    let first = &trials[0];
    let cells = first
        .cells
        .iter()
        .map(|c| {
            let per_trial: Vec<f64> = trials
                .iter()
                .map(|t| {
                    t.cells
                        .iter()
                        .find(|x| x.feature == c.feature && x.classifier == c.classifier)
                        .expect("every trial has every cell")
                        .accuracy
                })
                .collect();
            let (mean, sd) = mean_sd(&per_trial);
            CellSummary {
                feature: c.feature,
                classifier: c.classifier,
                mean,
                sd,
                per_trial,
            }
        })
        .collect();
    let fusion = (0..first.fusion.len())
        .map(|i| {
            let rows: Vec<&FusionResult> = trials.iter().map(|t| &t.fusion[i]).collect();
            let per_trial: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            let (mean, sd) = mean_sd(&per_trial);
            FusionSummary {
                feature: rows[0].feature,
                k: rows[0].k,
                scheme: rows[0].scheme.clone(),
                mean,
                sd,
                per_trial,
                members_per_trial: rows.iter().map(|r| r.members.clone()).collect(),
                trials_at_least_best: rows.iter().filter(|r| r.at_least_best).count(),
            }
        })
        .collect();
    let (n_female, n_male) = protocol.counts();
    SectionReport {
        protocol,
        n_female,
        n_male,
        trials,
        cells,
        fusion,
    }
}

/// Runs every configured protocol for `n_trials` trials.
pub fn run_experiment(data: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pool = dataset::filter_min_images(data, cfg.images_per_subject)?;
    let mut timings = Timings::default();
    let mut sections = Vec::with_capacity(cfg.protocols.len());
    for &protocol in &cfg.protocols {
        let mut trials = Vec::with_capacity(cfg.n_trials);
        for trial in 0..cfg.n_trials {
            let tc = TrialContext { cfg, protocol, trial };
            trials.push(run_trial(&pool, &tc, &mut timings)?);
        }
        sections.push(summarize(protocol, trials));
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        sections,
        timings: timings.0,
    })
}

/// [`run_experiment`] for configurations that must include fusion rows.
pub fn run_fusion_study(data: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.fusion.is_empty() {
        return Err(Error::invalid("the fusion study needs at least one fusion spec"));
    }
    run_experiment(data, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// From a `.csv` or `.json` extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(e) if e == "csv" => Ok(ReportFormat::Csv),
            Some(e) if e == "json" => Ok(ReportFormat::Json),
            _ => Err(Error::invalid(format!(
                "report path {} must end in .csv or .json",
                path.display()
            ))),
        }
    }

    fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// `report.csv` -> `report.timings.csv`
pub fn timings_path(path: &Path, format: ReportFormat) -> PathBuf {
    path.with_extension(format!("timings.{}", format.extension()))
}

/// CSV header of the report rows.
pub const REPORT_COLUMNS: [&str; 9] = [
    "record",
    "protocol",
    "feature",
    "method",
    "members",
    "accuracy",
    "sd",
    "per_trial",
    "at_least_best",
];

fn pct(v: f64) -> String {
    format!("{v:.2}")
}

fn members_label(members: &[MetricKind]) -> String {
    members
        .iter()
        .map(|m| format!("{}({})", m.code(), m.number()))
        .collect::<Vec<_>>()
        .join("+")
}

fn write_csv(r: &ExperimentReport, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let config = serde_json::to_string(&r.config)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "# facebench experiment report").map_err(io)?;
    writeln!(out, "# config: {config}").map_err(io)?;
    for s in &r.sections {
        for t in &s.trials {
            writeln!(
                out,
                "# {} trial {}: seed {}, {} F + {} M, {} train / {} test images, subjects sha256 {}",
                s.protocol, t.trial, t.seed, t.n_female, t.n_male, t.n_train, t.n_test, t.subjects_sha256
            )
            .map_err(io)?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    let joined = |v: &[f64]| v.iter().map(|x| pct(*x)).collect::<Vec<_>>().join(";");
    for s in &r.sections {
        let protocol = s.protocol.name();
        for c in &s.cells {
            w.write_record([
                "cell",
                &protocol,
                c.feature.name(),
                &c.classifier.to_string(),
                "",
                &pct(c.mean),
                &pct(c.sd),
                &joined(&c.per_trial),
                "",
            ])?;
        }
        for f in &s.fusion {
            let mut sets: Vec<String> = f.members_per_trial.iter().map(|m| members_label(m)).collect();
            sets.dedup();
            w.write_record([
                "fusion",
                &protocol,
                f.feature.name(),
                &format!("k{}:{}", f.k, f.scheme),
                &sets.join("|"),
                &pct(f.mean),
                &pct(f.sd),
                &joined(&f.per_trial),
                &format!("{}/{}", f.trials_at_least_best, f.per_trial.len()),
            ])?;
        }
    }
    w.flush().map_err(io)
}

fn write_timings(r: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::invalid(format!("{other:?}")),
            })?;
            w.write_record(["label", "seconds"])?;
            for t in &r.timings {
                w.write_record([t.label.as_str(), &format!("{:.6}", t.seconds)])?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        ReportFormat::Json => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            serde_json::to_writer_pretty(BufWriter::new(file), &r.timings)?;
            Ok(())
        }
    }
}

/// Writes the report (accuracies at 2 d.p. in CSV, full precision in JSON,
/// config echo in both) and its timings sidecar; returns the sidecar path.
pub fn emit_report(r: &ExperimentReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    match format {
        ReportFormat::Csv => write_csv(r, path)?,
        ReportFormat::Json => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut out = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut out, r)?;
            writeln!(out).map_err(|e| Error::io(path, e))?;
            out.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    let sidecar = timings_path(path, format);
    write_timings(r, format, &sidecar)?;
    Ok(sidecar)
}
