use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use facebench::dataset::{SplitRatio, SyntheticSpec};
use facebench::experiments::Classifier;
use facebench::features::FeatureKind;
use facebench::fusion::FusionKind;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (build ", env!("FACEBENCH_BUILD_HASH"), ")");

#[derive(Debug, Parser)]
#[command(
    name = "facebench",
    version = VERSION,
    about = "Face identification toolkit and experiment harness",
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for subject sampling, splits, cross-validation and synthetic data.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this. Defaults to all cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..=1024))]
    pub threads: Option<u64>,
    /// Log progress and print a summary line per report cell.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    /// TOML or JSON file of experiment settings (experiment and fusion-study
    /// only). Explicit flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align, crop to 70x60 and histogram-equalize every image of a manifest.
    Preprocess(PreprocessArgs),
    /// Fit an Eigenfaces (PCA) or Fisherfaces (LDA) model on a manifest.
    Features(FeaturesArgs),
    /// Identify probe images against a gallery with one metric or the SVM.
    Classify(ClassifyArgs),
    /// Min-Max normalize and combine distance matrices.
    Fuse(FuseArgs),
    /// Run the E1-E4 protocols and write an accuracy report.
    Experiment(ExperimentArgs),
    /// Run a protocol and fuse its best-k metrics.
    FusionStudy(FusionStudyArgs),
    /// Write a synthetic face dataset (PGM images plus manifest).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Input manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the canonical images and their manifest.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Training manifest; labels are subject ids.
    #[arg(long)]
    pub manifest: PathBuf,
    /// pca or lda.
    #[arg(long, value_parser = parse_feature)]
    pub kind: FeatureKind,
    /// Components to keep (LDA is capped at n_subjects - 1).
    #[arg(long, default_value_t = facebench::features::DEFAULT_COMPONENTS)]
    pub components: usize,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Feature model written by `facebench features`.
    #[arg(long)]
    pub model: PathBuf,
    /// Manifest of labelled gallery images.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Manifest of probe images (their subject ids are used for scoring).
    #[arg(long)]
    pub probes: PathBuf,
    /// Metric (euc, cb, cos, mc, bc, can, corr, cheb or 1-8) or svm.
    #[arg(long, value_parser = parse_classifier)]
    pub method: Classifier,
    /// SVM box constraint.
    #[arg(long, default_value_t = 10.0)]
    pub svm_c: f64,
    /// SVM RBF width; defaults to 1 / n_components.
    #[arg(long)]
    pub svm_gamma: Option<f64>,
    /// Predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the probe x gallery distance matrix (metrics only).
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Comma-separated distance matrix CSVs with identical probe and gallery ids.
    #[arg(long, value_delimiter = ',', required = true)]
    pub matrices: Vec<PathBuf>,
    /// avg, min, med, wmp or weighted.
    #[arg(long, value_parser = parse_fusion_kind)]
    pub scheme: FusionKind,
    /// Weights for the weighted scheme, one per matrix, e.g. 0.8,0.1,0.1.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Normalize each probe row separately instead of each whole matrix.
    #[arg(long)]
    pub per_row: bool,
    /// Fused matrix CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["manifest", "synthetic"])))]
pub struct ExperimentArgs {
    /// e1, e2, e3, e4, a single subset such as e4_240, or custom.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Females for --protocol custom.
    #[arg(long)]
    pub n_female: Option<usize>,
    /// Males for --protocol custom.
    #[arg(long)]
    pub n_male: Option<usize>,
    /// Manifest CSV of the image pool.
    #[arg(long, conflicts_with = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Generated pool: `default` or `key=value` pairs (n_female, n_male,
    /// images, noise, height, width, seed), e.g. `default,noise=0`.
    #[arg(long, value_parser = parse_synthetic)]
    pub synthetic: Option<SyntheticSpec>,
    /// Per-subject train:test split, 9:1 or 5:5.
    #[arg(long, value_parser = parse_ratio)]
    pub ratio: Option<SplitRatio>,
    /// Repetitions with seeds seed, seed+1, ...
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated feature kinds.
    #[arg(long, value_delimiter = ',', value_parser = parse_feature)]
    pub features: Option<Vec<FeatureKind>>,
    /// Comma-separated classifiers (metric names or numbers, svm).
    #[arg(long, value_delimiter = ',', value_parser = parse_classifier)]
    pub classifiers: Option<Vec<Classifier>>,
    /// Feature components (default 100).
    #[arg(long)]
    pub components: Option<usize>,
    /// SVM box constraint (default 10).
    #[arg(long)]
    pub svm_c: Option<f64>,
    /// SVM RBF width (default 1 / n_components).
    #[arg(long)]
    pub svm_gamma: Option<f64>,
    /// Choose SVM (C, gamma) by 5-fold grid search on the training images.
    #[arg(long)]
    pub tune_svm: bool,
    /// Report path ending in .csv or .json; timings go to a `.timings` sidecar.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FusionStudyArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Numbers of best metrics to fuse.
    #[arg(long, value_delimiter = ',')]
    pub best_k: Option<Vec<usize>>,
    /// Comma-separated fusion schemes.
    #[arg(long, value_delimiter = ',', value_parser = parse_fusion_kind)]
    pub schemes: Option<Vec<FusionKind>>,
    /// Weight tuples for the weighted scheme, separated by `;`, e.g.
    /// `0.8,0.1,0.1;0.4,0.3,0.3`. Replace the default tuples of the same length.
    #[arg(long)]
    pub weights: Option<String>,
    /// Normalize each probe row separately before fusing.
    #[arg(long)]
    pub per_row: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `default` or `key=value` pairs (n_female, n_male, images, noise, height,
    /// width, seed). --seed overrides the spec's seed.
    #[arg(long, default_value = "default", value_parser = parse_synthetic)]
    pub spec: SyntheticSpec,
    /// Directory for images/ and manifest.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_ratio(s: &str) -> Result<SplitRatio, String> {
    s.parse().map_err(|e: facebench::Error| e.to_string())
}

fn parse_feature(s: &str) -> Result<FeatureKind, String> {
    s.parse().map_err(|e: facebench::Error| e.to_string())
}

fn parse_classifier(s: &str) -> Result<Classifier, String> {
    s.parse().map_err(|e: facebench::Error| e.to_string())
}

fn parse_fusion_kind(s: &str) -> Result<FusionKind, String> {
    s.parse().map_err(|e: facebench::Error| e.to_string())
}

pub fn parse_synthetic(s: &str) -> Result<SyntheticSpec, String> {
    let mut spec = SyntheticSpec::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "default" {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected `default` or key=value, got {part:?}"))?;
        let int = || value.parse::<usize>().map_err(|e| format!("{key}: {e}"));
        match key {
            "n_female" => spec.n_female = int()?,
            "n_male" => spec.n_male = int()?,
            "images" => spec.images_per_subject = int()?,
            "height" => spec.image_height = int()?,
            "width" => spec.image_width = int()?,
            "noise" => spec.intra_noise = value.parse().map_err(|e| format!("noise: {e}"))?,
            "seed" => spec.seed = value.parse().map_err(|e| format!("seed: {e}"))?,
            other => return Err(format!("unknown synthetic key {other:?}")),
        }
    }
    Ok(spec)
}

pub fn parse_weight_tuples(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.split(',')
                .map(|w| w.trim().parse::<f64>().map_err(|e| format!("weight {w:?}: {e}")))
                .collect()
        })
        .collect()
}
