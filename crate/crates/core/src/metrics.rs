//! The eight dissimilarity measures and probe × gallery distance matrices.
//!
//! Conventions:
//! - `Corr` is `1 - r` with `r` the Pearson correlation, range `[0, 2]`.
//! - `Mc` is the Mahalanobis distance `sqrt((x-y) V⁻¹ (x-y)ᵀ)`.
//! - Canberra terms with `x_i = y_i = 0` contribute 0.
//! - Bray-Curtis of two all-zero vectors is 0.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Distance measures, numbered 1-8 in the order used by the fusion tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "EUC")]
    Euc,
    #[serde(rename = "CB")]
    Cb,
    #[serde(rename = "COS")]
    Cos,
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "BC")]
    Bc,
    #[serde(rename = "CAN")]
    Can,
    #[serde(rename = "CORR")]
    Corr,
    #[serde(rename = "CHEB")]
    Cheb,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Euc,
        MetricKind::Cb,
        MetricKind::Cos,
        MetricKind::Mc,
        MetricKind::Bc,
        MetricKind::Can,
        MetricKind::Corr,
        MetricKind::Cheb,
    ];

    /// 1-based number: EUC=1, CB=2, COS=3, MC=4, BC=5, CAN=6, CORR=7, CHEB=8.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<MetricKind> {
        Self::ALL.get((n as usize).checked_sub(1)?).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            MetricKind::Euc => "EUC",
            MetricKind::Cb => "CB",
            MetricKind::Cos => "COS",
            MetricKind::Mc => "MC",
            MetricKind::Bc => "BC",
            MetricKind::Can => "CAN",
            MetricKind::Corr => "CORR",
            MetricKind::Cheb => "CHEB",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            MetricKind::Euc => "Euclidean",
            MetricKind::Cb => "CityBlock",
            MetricKind::Cos => "Cosine",
            MetricKind::Mc => "Mahal Cos",
            MetricKind::Bc => "BrayCurtis",
            MetricKind::Can => "Canberra",
            MetricKind::Corr => "Correlation",
            MetricKind::Cheb => "Chebyshev",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Ok(n) = lower.parse::<u8>() {
            return MetricKind::from_number(n).ok_or_else(|| Error::invalid(format!("metric number {n} not in 1..=8")));
        }
        Ok(match lower.as_str() {
            "euc" | "l2" | "euclidean" => MetricKind::Euc,
            "cb" | "l1" | "cityblock" | "manhattan" => MetricKind::Cb,
            "cos" | "cosine" => MetricKind::Cos,
            "mc" | "mahalanobis" => MetricKind::Mc,
            "bc" | "braycurtis" => MetricKind::Bc,
            "can" | "canberra" => MetricKind::Can,
            "corr" | "correlation" => MetricKind::Corr,
            "cheb" | "chebyshev" => MetricKind::Cheb,
            _ => return Err(Error::invalid(format!("unknown metric {s:?}"))),
        })
    }
}

/// Side information for metrics that need it (the inverse covariance for `Mc`).
#[derive(Debug, Clone, Default)]
pub struct MetricContext {
    covariance_inverse: Option<Array2<f64>>,
    ridge: f64,
    // L with V⁻¹ = L Lᵀ; Mahalanobis is Euclidean after x ↦ Lᵀx.
    whitener: Option<Array2<f64>>,
}

impl MetricContext {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Uses a caller-provided inverse covariance. It must be symmetric and
    /// positive definite.
    pub fn with_covariance_inverse(v_inv: Array2<f64>, ridge: f64) -> Result<Self> {
        let n = v_inv.nrows();
        if v_inv.ncols() != n || n == 0 {
            return Err(Error::Dimension(format!("inverse covariance is {:?}", v_inv.dim())));
        }
        let scale = v_inv.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (v_inv[[i, j]] - v_inv[[j, i]]).abs() > 1e-8 * scale {
                    return Err(Error::invalid("inverse covariance is not symmetric"));
                }
            }
        }
        let v_inv = linalg::symmetrize(v_inv);
        let (vals, vecs) = linalg::sym_eigen_desc(v_inv.view())?;
        if vals.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Numerical("inverse covariance is not positive definite".into()));
        }
        let mut whitener = vecs;
        for (k, mut col) in whitener.columns_mut().into_iter().enumerate() {
            let f = vals[k].sqrt();
            col.mapv_inplace(|v| v * f);
        }
        Ok(MetricContext {
            covariance_inverse: Some(v_inv),
            ridge,
            whitener: Some(whitener),
        })
    }

    pub fn covariance_inverse(&self) -> Option<ArrayView2<'_, f64>> {
        self.covariance_inverse.as_ref().map(|m| m.view())
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }
}

/// Default ridge for [`fit_metric_context`].
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Sample covariance of `train` (rows are samples) plus
/// `ridge · (trace / dim) · I`, inverted.
pub fn fit_metric_context(train: ArrayView2<'_, f64>, ridge: f64) -> Result<MetricContext> {
    let (n, d) = train.dim();
    if n < 2 {
        return Err(Error::invalid(format!("covariance needs at least 2 rows, got {n}")));
    }
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge must be >= 0"));
    }
    let mean = train.mean_axis(Axis(0)).expect("non-empty");
    let centered = &train - &mean;
    let mut cov = linalg::gram_cols(centered.view());
    cov.mapv_inplace(|v| v / (n - 1) as f64);
    let shift = ridge * cov.diag().sum() / d as f64;
    for i in 0..d {
        cov[[i, i]] += shift;
    }
    let inv = linalg::spd_inverse(cov.view())
        .map_err(|e| Error::Numerical(format!("covariance not invertible after ridge: {e}")))?;
    MetricContext::with_covariance_inverse(inv, ridge)
}

fn check_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::invalid("vectors must be non-empty"));
    }
    Ok(())
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn city_block(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

fn chebyshev(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let xx: f64 = x.iter().map(|a| a * a).sum();
    let yy: f64 = y.iter().map(|b| b * b).sum();
    if !(xx > 0.0 && yy > 0.0) {
        return Err(Error::invalid("cosine distance of a zero-norm vector"));
    }
    Ok((1.0 - xy / (xx * yy).sqrt()).max(0.0))
}

fn bray_curtis(x: &[f64], y: &[f64]) -> Result<f64> {
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = x.iter().zip(y).map(|(a, b)| (a + b).abs()).sum();
    if den == 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Degenerate("Bray-Curtis distance undefined for y = -x".into()));
    }
    Ok(num / den)
}

fn canberra(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let den = a.abs() + b.abs();
            if den == 0.0 {
                0.0
            } else {
                (a - b).abs() / den
            }
        })
        .sum()
}

fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::invalid("correlation distance of a constant vector"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(1.0 - r)
}

fn mahalanobis(x: &[f64], y: &[f64], v_inv: ArrayView2<'_, f64>) -> Result<f64> {
    let d = x.len();
    if v_inv.dim() != (d, d) {
        return Err(Error::Dimension(format!("V⁻¹ is {:?} for vectors of length {d}", v_inv.dim())));
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut q = 0.0;
    for i in 0..d {
        let row = v_inv.row(i);
        let mut acc = 0.0;
        for j in 0..d {
            acc += row[j] * diff[j];
        }
        q += diff[i] * acc;
    }
    Ok(q.max(0.0).sqrt())
}

/// Distance between two vectors under `kind`.
pub fn distance(kind: MetricKind, x: &[f64], y: &[f64], ctx: &MetricContext) -> Result<f64> {
    check_len(x, y)?;
    match kind {
        MetricKind::Euc => Ok(euclidean(x, y)),
        MetricKind::Cb => Ok(city_block(x, y)),
        MetricKind::Cos => cosine(x, y),
        MetricKind::Mc => {
            let v_inv = ctx
                .covariance_inverse()
                .ok_or_else(|| Error::invalid("Mahalanobis distance needs a covariance matrix"))?;
            mahalanobis(x, y, v_inv)
        }
        MetricKind::Bc => bray_curtis(x, y),
        MetricKind::Can => Ok(canberra(x, y)),
        MetricKind::Corr => correlation(x, y),
        MetricKind::Cheb => Ok(chebyshev(x, y)),
    }
}

/// What a distance matrix was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceSource {
    Metric(MetricKind),
    /// A fusion of other matrices, described by scheme and members.
    Fused(String),
    /// Read back from a file without provenance.
    External,
}

impl fmt::Display for DistanceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceSource::Metric(m) => write!(f, "{m}"),
            DistanceSource::Fused(s) => f.write_str(s),
            DistanceSource::External => f.write_str("external"),
        }
    }
}

/// `n_probes x n_gallery` matrix of finite, non-negative dissimilarities.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
    source: DistanceSource,
}

impl DistanceMatrix {
    pub fn new(values: Array2<f64>, source: DistanceSource) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("distance matrix entry {v} is not finite and non-negative")));
        }
        Ok(DistanceMatrix { values, source })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn source(&self) -> &DistanceSource {
        &self.source
    }

    pub fn n_probes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_gallery(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn with_source(mut self, source: DistanceSource) -> Self {
        self.source = source;
        self
    }

    /// Writes CSV: header `probe_id,<gallery ids...>`, then one row per probe
    /// with full-precision values.
    pub fn write_csv(&self, probe_ids: &[String], gallery_ids: &[String], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if probe_ids.len() != self.n_probes() || gallery_ids.len() != self.n_gallery() {
            return Err(Error::Dimension(format!(
                "{} probe ids and {} gallery ids for a {:?} matrix",
                probe_ids.len(),
                gallery_ids.len(),
                self.shape()
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["probe_id".to_string()];
        header.extend(gallery_ids.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in probe_ids.iter().zip(self.values.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a matrix written by [`DistanceMatrix::write_csv`]; returns it with
    /// its probe and gallery ids.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<(DistanceMatrix, Vec<String>, Vec<String>)> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let header = r.headers()?.clone();
        if header.get(0) != Some("probe_id") || header.len() < 2 {
            return Err(Error::invalid(format!("{}: not a distance matrix csv", path.display())));
        }
        let gallery: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut probes = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::invalid(format!("{}: ragged row for probe {:?}", path.display(), rec.get(0))));
            }
            probes.push(rec[0].to_string());
            for v in rec.iter().skip(1) {
                values.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("{}: bad value {v:?}", path.display())))?,
                );
            }
        }
        let m = Array2::from_shape_vec((probes.len(), gallery.len()), values).map_err(|e| Error::invalid(e.to_string()))?;
        Ok((DistanceMatrix::new(m, DistanceSource::External)?, probes, gallery))
    }
}

fn check_pairwise(gallery: ArrayView2<'_, f64>, probes: ArrayView2<'_, f64>) -> Result<()> {
    if gallery.nrows() == 0 {
        return Err(Error::invalid("gallery is empty"));
    }
    if gallery.ncols() != probes.ncols() {
        return Err(Error::Dimension(format!(
            "gallery has {} features, probes have {}",
            gallery.ncols(),
            probes.ncols()
        )));
    }
    Ok(())
}

fn rows_as_vecs(m: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// `values[i][j] = distance(kind, probes[i], gallery[j])`, parallel over probe
/// rows. Mahalanobis is evaluated as Euclidean distance after whitening both
/// sides with the Cholesky-like factor of `V⁻¹`.
pub fn pairwise(
    kind: MetricKind,
    gallery: ArrayView2<'_, f64>,
    probes: ArrayView2<'_, f64>,
    ctx: &MetricContext,
) -> Result<DistanceMatrix> {
    check_pairwise(gallery, probes)?;
    let (g_rows, p_rows, effective) = match kind {
        MetricKind::Mc => {
            let w = ctx
                .whitener
                .as_ref()
                .ok_or_else(|| Error::invalid("Mahalanobis distance needs a covariance matrix"))?;
            if w.nrows() != gallery.ncols() {
                return Err(Error::Dimension(format!(
                    "V⁻¹ is {:?} for {} features",
                    w.dim(),
                    gallery.ncols()
                )));
            }
            (
                rows_as_vecs(linalg::matmul(gallery, w.view()).view()),
                rows_as_vecs(linalg::matmul(probes, w.view()).view()),
                MetricKind::Euc,
            )
        }
        other => (rows_as_vecs(gallery), rows_as_vecs(probes), other),
    };
    let n_gallery = g_rows.len();
    let rows: Vec<Vec<f64>> = p_rows
        .par_iter()
        .map(|p| {
            g_rows
                .iter()
                .map(|g| distance(effective, p, g, ctx))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((p_rows.len(), n_gallery), flat).expect("shape matches");
    DistanceMatrix::new(values, DistanceSource::Metric(kind))
}

/// Straight per-cell evaluation with [`distance`]; the reference the fast path
/// in [`pairwise`] must agree with.
pub fn pairwise_reference(
    kind: MetricKind,
    gallery: ArrayView2<'_, f64>,
    probes: ArrayView2<'_, f64>,
    ctx: &MetricContext,
) -> Result<DistanceMatrix> {
    check_pairwise(gallery, probes)?;
    let mut values = Array2::zeros((probes.nrows(), gallery.nrows()));
    for (i, p) in probes.rows().into_iter().enumerate() {
        let p = p.to_vec();
        for (j, g) in gallery.rows().into_iter().enumerate() {
            values[[i, j]] = distance(kind, &p, &g.to_vec(), ctx)?;
        }
    }
    DistanceMatrix::new(values, DistanceSource::Metric(kind))
}
