use std::fs;
use std::path::{Path, PathBuf};

use facebench::classify::{self, Prediction, Standardizer};
use facebench::dataset::{self, Dataset, ImageRecord, SyntheticSpec};
use facebench::experiments::{
    self, Classifier, ExperimentConfig, ExperimentReport, FusionSpec, Protocol, ReportFormat,
};
use facebench::features::{self, FeatureKind, FeatureModel};
use facebench::fusion::{self, FusionKind, FusionScheme};
use facebench::metrics::{self, DistanceMatrix, MetricContext, MetricKind, DEFAULT_RIDGE};
use facebench::preprocess;
use facebench::{Error, Result};

use crate::args::{
    parse_weight_tuples, ClassifyArgs, Cli, Command, ExperimentArgs, FeaturesArgs, FuseArgs, FusionStudyArgs,
    GlobalArgs, PreprocessArgs, SynthArgs,
};

/// 3 for missing or unusable input data, 2 for configuration errors.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_data_error() {
        3
    } else {
        2
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let Cli { global, command } = cli;
    if global.config.is_some() && !matches!(command, Command::Experiment(_) | Command::FusionStudy(_)) {
        return Err(Error::invalid("--config applies only to experiment and fusion-study"));
    }
    match global.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| dispatch(&global, command))
        }
        None => dispatch(&global, command),
    }
}

fn dispatch(global: &GlobalArgs, command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Features(a) => features_cmd(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Fuse(a) => fuse_cmd(a),
        Command::Experiment(a) => experiment_cmd(global, a),
        Command::FusionStudy(a) => fusion_study_cmd(global, a),
        Command::Synth(a) => synth_cmd(global, a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `<subject>_<nn>.pgm`, numbering each subject's images in dataset order.
fn image_names(records: &[ImageRecord]) -> Vec<String> {
    let mut seen = std::collections::HashMap::new();
    records
        .iter()
        .map(|r| {
            let n = seen.entry(r.subject_id().to_string()).or_insert(0usize);
            *n += 1;
            format!("{}_{:02}.pgm", r.subject_id(), *n - 1)
        })
        .collect()
}

fn write_images(records: &[ImageRecord], out_dir: &Path, canonical: bool) -> Result<()> {
    let images = out_dir.join("images");
    create_dir(&images)?;
    let mut listed = Vec::with_capacity(records.len());
    for (rec, name) in records.iter().zip(image_names(records)) {
        let (img, eyes) = if canonical {
            (rec.canonical_face()?, None)
        } else {
            (rec.load_image()?, rec.eyes())
        };
        preprocess::write_pgm(&img, images.join(&name))?;
        let out = ImageRecord::new(
            rec.subject_id(),
            rec.gender(),
            dataset::ImageSource::Path(images.join(&name)),
            eyes,
        )?;
        listed.push((out, PathBuf::from("images").join(&name)));
    }
    dataset::write_manifest(&listed, out_dir.join("manifest.csv"))
}

fn preprocess_cmd(a: PreprocessArgs) -> Result<()> {
    let data = dataset::load_manifest(&a.manifest)?;
    create_dir(&a.out_dir)?;
    write_images(data.records(), &a.out_dir, true)?;
    println!(
        "wrote {} canonical images to {}",
        data.len(),
        a.out_dir.join("manifest.csv").display()
    );
    Ok(())
}

fn synth_cmd(global: &GlobalArgs, a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        seed: global.seed.unwrap_or(a.spec.seed),
        ..a.spec
    };
    let data = dataset::generate_synthetic(&spec)?;
    create_dir(&a.out_dir)?;
    write_images(data.records(), &a.out_dir, false)?;
    println!(
        "wrote {} images of {} subjects to {}",
        data.len(),
        data.n_subjects(),
        a.out_dir.join("manifest.csv").display()
    );
    Ok(())
}

fn features_cmd(a: FeaturesArgs) -> Result<()> {
    let data = dataset::load_manifest(&a.manifest)?;
    let x = dataset::face_matrix(data.records())?;
    let model = match a.kind {
        FeatureKind::Pca => features::fit_pca(x.view(), a.components)?,
        FeatureKind::Lda => {
            let labels: Vec<&str> = data.records().iter().map(|r| r.subject_id()).collect();
            let k = a.components.min(data.n_subjects().saturating_sub(1));
            if k < a.components {
                log::warn!("LDA keeps {k} components (n_subjects - 1)");
            }
            features::fit_lda(x.view(), &labels, k)?
        }
    };
    model.save(&a.out)?;
    println!(
        "wrote {} model with {} components to {}",
        model.kind(),
        model.n_components(),
        a.out.display()
    );
    Ok(())
}

fn write_predictions(path: &Path, probe_ids: &[String], truth: &[&str], preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["probe_id", "truth", "predicted", "score", "runner_up"])?;
    for ((id, t), p) in probe_ids.iter().zip(truth).zip(preds) {
        w.write_record([
            id.as_str(),
            t,
            p.predicted.as_str(),
            &format!("{:?}", p.score),
            p.runner_up.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn classify_cmd(a: ClassifyArgs) -> Result<()> {
    let model = FeatureModel::load(&a.model)?;
    let gallery = dataset::load_manifest(&a.gallery)?;
    let probes = dataset::load_manifest(&a.probes)?;
    let g = model.project(dataset::face_matrix(gallery.records())?.view())?;
    let p = model.project(dataset::face_matrix(probes.records())?.view())?;
    let gallery_labels: Vec<&str> = gallery.records().iter().map(|r| r.subject_id()).collect();
    let truth: Vec<&str> = probes.records().iter().map(|r| r.subject_id()).collect();
    let probe_ids: Vec<String> = probes.records().iter().map(|r| r.label()).collect();

    let preds = match a.method {
        Classifier::Nn(kind) => {
            let ctx = if kind == MetricKind::Mc {
                metrics::fit_metric_context(g.view(), DEFAULT_RIDGE)?
            } else {
                MetricContext::empty()
            };
            let d = metrics::pairwise(kind, g.view(), p.view(), &ctx)?;
            if let Some(path) = &a.matrix_out {
                let ids: Vec<String> = gallery_labels.iter().map(|s| s.to_string()).collect();
                d.write_csv(&probe_ids, &ids, path)?;
            }
            classify::nn_classify(&d, &gallery_labels)?
        }
        Classifier::Svm => {
            if a.matrix_out.is_some() {
                return Err(Error::invalid("--matrix-out needs a distance metric, not svm"));
            }
            let scaler = Standardizer::fit(g.view())?;
            let gs = scaler.transform(g.view())?;
            let ps = scaler.transform(p.view())?;
            let gamma = a.svm_gamma.unwrap_or(1.0 / gs.ncols() as f64);
            let svm = classify::svm_train(gs.view(), &gallery_labels, a.svm_c, gamma)?;
            for flag in svm.flags() {
                log::warn!("{flag}");
            }
            classify::svm_predict(&svm, ps.view())?
        }
    };
    write_predictions(&a.out, &probe_ids, &truth, &preds)?;
    let acc = experiments::accuracy(&preds, &truth)?;
    println!("{}: accuracy {acc:.2}% over {} probes", a.method, preds.len());
    Ok(())
}

fn fuse_cmd(a: FuseArgs) -> Result<()> {
    let scheme = match (a.scheme, a.weights) {
        (FusionKind::Weighted, Some(w)) => FusionScheme::weighted(w)?,
        (FusionKind::Weighted, None) => return Err(Error::invalid("--scheme weighted needs --weights")),
        (_, Some(_)) => return Err(Error::invalid("--weights applies only to --scheme weighted")),
        (kind, None) => FusionScheme::new(kind)?,
    };
    let mut matrices = Vec::with_capacity(a.matrices.len());
    let mut ids: Option<(Vec<String>, Vec<String>)> = None;
    for path in &a.matrices {
        let (d, probes, gallery) = DistanceMatrix::read_csv(path)?;
        match &ids {
            None => ids = Some((probes, gallery)),
            Some((p, g)) if *p != probes || *g != gallery => {
                return Err(Error::invalid(format!(
                    "{}: probe or gallery ids differ from {}",
                    path.display(),
                    a.matrices[0].display()
                )))
            }
            Some(_) => {}
        }
        matrices.push(if a.per_row {
            fusion::minmax_normalize_rows(&d)
        } else {
            fusion::minmax_normalize(&d)
        });
    }
    let fused = fusion::fuse(&matrices, &scheme)?;
    let (probes, gallery) = ids.expect("at least one matrix");
    fused.write_csv(&probes, &gallery, &a.out)?;
    println!(
        "wrote {} fusion of {} matrices to {}",
        scheme,
        matrices.len(),
        a.out.display()
    );
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "toml" => toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display()))),
        "json" => serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display()))),
        _ => Err(Error::invalid(format!(
            "config file {} must end in .toml or .json",
            path.display()
        ))),
    }
}

/// Config file values overridden by explicit flags.
fn experiment_config(global: &GlobalArgs, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &a.protocol {
        cfg.protocols = if name.eq_ignore_ascii_case("custom") {
            match (a.n_female, a.n_male) {
                (Some(n_female), Some(n_male)) => vec![Protocol::Custom { n_female, n_male }],
                _ => return Err(Error::invalid("--protocol custom needs --n-female and --n-male")),
            }
        } else {
            if a.n_female.is_some() || a.n_male.is_some() {
                return Err(Error::invalid("--n-female/--n-male apply only to --protocol custom"));
            }
            Protocol::family(name)?
        };
    } else if a.n_female.is_some() || a.n_male.is_some() {
        return Err(Error::invalid("--n-female/--n-male apply only to --protocol custom"));
    }
    if let Some(r) = a.ratio {
        cfg.ratio = r;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trials {
        cfg.n_trials = t;
    }
    if let Some(f) = &a.features {
        cfg.features = f.clone();
    }
    if let Some(c) = &a.classifiers {
        cfg.classifiers = c.clone();
    }
    if let Some(k) = a.components {
        cfg.n_components = k;
    }
    if let Some(c) = a.svm_c {
        cfg.svm.c = c;
    }
    if let Some(g) = a.svm_gamma {
        cfg.svm.gamma = Some(g);
    }
    if a.tune_svm {
        cfg.svm.tune = true;
    }
    Ok(cfg)
}

fn load_pool(a: &ExperimentArgs) -> Result<Dataset> {
    match (&a.manifest, &a.synthetic) {
        (Some(path), None) => dataset::load_manifest(path),
        (None, Some(spec)) => dataset::generate_synthetic(spec),
        _ => Err(Error::invalid("exactly one of --manifest or --synthetic is required")),
    }
}

fn finish(report: &ExperimentReport, out: &Path, format: ReportFormat, verbose: bool) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let sidecar = experiments::emit_report(report, format, out)?;
    if verbose {
        for s in &report.sections {
            for c in &s.cells {
                println!(
                    "{} {} {}: {:.2}% (sd {:.2})",
                    s.protocol, c.feature, c.classifier, c.mean, c.sd
                );
            }
            for f in &s.fusion {
                println!(
                    "{} {} fusion k={} {}: {:.2}% (sd {:.2})",
                    s.protocol, f.feature, f.k, f.scheme, f.mean, f.sd
                );
            }
        }
    }
    println!("wrote {} (timings in {})", out.display(), sidecar.display());
    Ok(())
}

fn experiment_cmd(global: &GlobalArgs, a: ExperimentArgs) -> Result<()> {
    let cfg = experiment_config(global, &a)?;
    cfg.validate()?;
    let format = ReportFormat::from_path(&a.out)?;
    let pool = load_pool(&a)?;
    let report = experiments::run_experiment(&pool, &cfg)?;
    finish(&report, &a.out, format, global.verbose)
}

fn fusion_specs(a: &FusionStudyArgs) -> Result<Option<Vec<FusionSpec>>> {
    if a.best_k.is_none() && a.schemes.is_none() && a.weights.is_none() {
        return Ok(None);
    }
    let ks = a.best_k.clone().unwrap_or_else(|| vec![2, 3, 4]);
    let kinds = a.schemes.clone().unwrap_or_else(|| FusionKind::ALL.to_vec());
    let given = match &a.weights {
        Some(s) => parse_weight_tuples(s).map_err(Error::invalid)?,
        None => Vec::new(),
    };
    let mut specs = Vec::new();
    for &k in &ks {
        for &kind in &kinds {
            if kind != FusionKind::Weighted {
                specs.extend(FusionSpec::expand(&[k], &[kind])?);
                continue;
            }
            let mut tuples: Vec<Vec<f64>> = given.iter().filter(|w| w.len() == k).cloned().collect();
            if tuples.is_empty() {
                tuples = fusion::default_weight_tuples(k);
            }
            if tuples.is_empty() {
                return Err(Error::invalid(format!("no weight tuple of length {k}; pass one with --weights")));
            }
            for w in tuples {
                specs.push(FusionSpec {
                    k,
                    scheme: FusionScheme::weighted(w)?,
                });
            }
        }
    }
    if let Some(w) = given.iter().find(|w| !ks.contains(&w.len())) {
        return Err(Error::invalid(format!("weight tuple {w:?} matches none of --best-k {ks:?}")));
    }
    Ok(Some(specs))
}

fn fusion_study_cmd(global: &GlobalArgs, a: FusionStudyArgs) -> Result<()> {
    let mut cfg = experiment_config(global, &a.experiment)?;
    if let Some(specs) = fusion_specs(&a)? {
        cfg.fusion = specs;
    } else if cfg.fusion.is_empty() {
        cfg.fusion = FusionSpec::study_defaults();
    }
    if a.per_row {
        cfg.per_row_normalization = true;
    }
    cfg.validate()?;
    let format = ReportFormat::from_path(&a.experiment.out)?;
    let pool = load_pool(&a.experiment)?;
    let report = experiments::run_fusion_study(&pool, &cfg)?;
    finish(&report, &a.experiment.out, format, global.verbose)
}
