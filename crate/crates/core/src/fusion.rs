//! Score-level fusion: Min-Max normalization of distance matrices and the
//! average / minimum / median / weighted-max-pooling / weighted-average
//! combiners.
//!
//! WMP weights are computed per cell: the k distances of one probe-gallery
//! pair get softmax weights, which are then handed out in reverse order so the
//! smallest distance receives the largest weight. The fused cell is the
//! weighted sum.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{DistanceMatrix, DistanceSource, MetricKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Avg,
    Min,
    Med,
    Wmp,
    Weighted,
}

impl FusionKind {
    pub const ALL: [FusionKind; 5] = [
        FusionKind::Avg,
        FusionKind::Min,
        FusionKind::Med,
        FusionKind::Wmp,
        FusionKind::Weighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionKind::Avg => "avg",
            FusionKind::Min => "min",
            FusionKind::Med => "med",
            FusionKind::Wmp => "wmp",
            FusionKind::Weighted => "weighted",
        }
    }
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "avg" | "average" | "mean" => Ok(FusionKind::Avg),
            "min" | "minimum" => Ok(FusionKind::Min),
            "med" | "median" => Ok(FusionKind::Med),
            "wmp" => Ok(FusionKind::Wmp),
            "weighted" | "wavg" => Ok(FusionKind::Weighted),
            other => Err(Error::invalid(format!(
                "unknown fusion scheme {other:?} (expected avg, min, med, wmp or weighted)"
            ))),
        }
    }
}

/// A combiner plus its weight vector; only `Weighted` carries weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionScheme {
    kind: FusionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl FusionScheme {
    /// An unweighted scheme. Use [`FusionScheme::weighted`] for `Weighted`.
    pub fn new(kind: FusionKind) -> Result<Self> {
        if kind == FusionKind::Weighted {
            return Err(Error::invalid("weighted fusion needs a weight vector"));
        }
        Ok(FusionScheme { kind, weights: None })
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("empty weight vector"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("weights must be non-negative, got {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights must sum to 1, got {sum}")));
        }
        Ok(FusionScheme {
            kind: FusionKind::Weighted,
            weights: Some(weights),
        })
    }

    pub fn kind(&self) -> FusionKind {
        self.kind
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// `avg`, `wmp`, `weighted(0.8,0.1,0.1)`, ...
    pub fn label(&self) -> String {
        match &self.weights {
            None => self.kind.name().to_string(),
            Some(w) => {
                let parts: Vec<String> = w.iter().map(|v| v.to_string()).collect();
                format!("weighted({})", parts.join(","))
            }
        }
    }
}

impl fmt::Display for FusionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Weight tuples evaluated by default for best-2, best-3 and best-4 fusion.
pub fn default_weight_tuples(k: usize) -> Vec<Vec<f64>> {
    match k {
        2 => vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        3 => vec![vec![0.8, 0.1, 0.1], vec![0.4, 0.3, 0.3], vec![0.1, 0.1, 0.8]],
        4 => vec![
            vec![0.4, 0.4, 0.1, 0.1],
            vec![0.3, 0.3, 0.2, 0.2],
            vec![0.1, 0.1, 0.4, 0.4],
        ],
        _ => Vec::new(),
    }
}

fn rescale(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    for v in values.iter_mut() {
        *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
    }
}

/// `(d - min) / (max - min)` with one min and max over the whole matrix; a
/// constant matrix maps to zeros.
pub fn minmax_normalize(d: &DistanceMatrix) -> DistanceMatrix {
    let mut values = d.values().to_owned();
    if let Some(slice) = values.as_slice_mut() {
        rescale(slice);
    } else {
        let mut flat: Vec<f64> = values.iter().copied().collect();
        rescale(&mut flat);
        values = Array2::from_shape_vec(values.dim(), flat).expect("same shape");
    }
    DistanceMatrix::new(values, d.source().clone()).expect("rescaled values lie in [0, 1]")
}

/// Min-Max normalization applied to each probe row separately.
pub fn minmax_normalize_rows(d: &DistanceMatrix) -> DistanceMatrix {
    let mut values = d.values().to_owned();
    for mut row in values.rows_mut() {
        let mut r: Vec<f64> = row.to_vec();
        rescale(&mut r);
        row.assign(&ndarray::ArrayView1::from(&r));
    }
    DistanceMatrix::new(values, d.source().clone()).expect("rescaled values lie in [0, 1]")
}

/// Softmax of the distances, reassigned so that the largest weight goes to the
/// smallest distance (ties in distance by position).
pub fn wmp_weights(d: &[f64]) -> Vec<f64> {
    if d.is_empty() {
        return Vec::new();
    }
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = d.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let mut soft: Vec<f64> = exp.iter().map(|e| e / total).collect();
    soft.sort_by(|a, b| b.total_cmp(a));

    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; d.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = soft[rank];
    }
    out
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Combines k same-shaped matrices cell by cell. Inputs are expected to be
/// Min-Max normalized already.
pub fn fuse(ds: &[DistanceMatrix], scheme: &FusionScheme) -> Result<DistanceMatrix> {
    let first = ds.first().ok_or_else(|| Error::invalid("nothing to fuse"))?;
    let shape = first.shape();
    if let Some(bad) = ds.iter().find(|d| d.shape() != shape) {
        return Err(Error::Dimension(format!(
            "cannot fuse a {:?} matrix with a {:?} matrix",
            shape,
            bad.shape()
        )));
    }
    if let Some(w) = scheme.weights() {
        if w.len() != ds.len() {
            return Err(Error::invalid(format!("{} weights for {} matrices", w.len(), ds.len())));
        }
    }
    let k = ds.len();
    let views: Vec<_> = ds.iter().map(|d| d.values()).collect();
    let mut out = Array2::zeros(shape);
    let mut cell = vec![0.0; k];
    for ((i, j), o) in out.indexed_iter_mut() {
        for (c, v) in cell.iter_mut().zip(&views) {
            *c = v[[i, j]];
        }
        *o = match scheme.kind() {
            FusionKind::Avg => cell.iter().sum::<f64>() / k as f64,
            FusionKind::Min => cell.iter().copied().fold(f64::INFINITY, f64::min),
            FusionKind::Med => median(&mut cell),
            FusionKind::Weighted => {
                let w = scheme.weights().expect("weighted scheme has weights");
                cell.iter().zip(w).map(|(c, w)| c * w).sum()
            }
            FusionKind::Wmp => {
                let w = wmp_weights(&cell);
                cell.iter().zip(&w).map(|(c, w)| c * w).sum()
            }
        };
    }
    // A convex combination can overshoot the largest input by an ulp.
    Zip::from(&mut out).for_each(|v| *v = v.max(0.0));
    let members: Vec<String> = ds.iter().map(|d| d.source().to_string()).collect();
    DistanceMatrix::new(
        out,
        DistanceSource::Fused(format!("{}[{}]", scheme.label(), members.join("+"))),
    )
}

/// Metrics ordered by accuracy, best first; equal accuracies keep metric
/// numbering order.
pub fn rank_metrics(accuracies: &[(MetricKind, f64)]) -> Vec<MetricKind> {
    let mut v = accuracies.to_vec();
    v.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.number().cmp(&b.0.number()))
    });
    v.into_iter().map(|(m, _)| m).collect()
}
