//! Nearest-neighbour identification over distance matrices and an RBF-kernel
//! support vector machine.

mod svm;

pub use svm::{
    default_c_grid, default_gamma_grid, grid_search_svm, rbf_kernel, svm_predict, svm_train, svm_train_with,
    BinaryMachine, GridSearchResult, SvmModel, SvmParams, Standardizer,
};

use crate::error::{Error, Result};
use crate::metrics::DistanceMatrix;

/// One identification decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Row of the probe in the input.
    pub probe: usize,
    pub predicted: String,
    /// Negative distance for nearest neighbour, decision value for the SVM.
    pub score: f64,
    /// Best-scoring label other than `predicted`, if any.
    pub runner_up: Option<String>,
}

/// Rank-1 nearest neighbour: each probe takes the label of its closest
/// gallery column, ties resolved towards the lowest column index.
pub fn nn_classify<L: AsRef<str>>(d: &DistanceMatrix, gallery_labels: &[L]) -> Result<Vec<Prediction>> {
    if d.n_gallery() == 0 {
        return Err(Error::invalid("empty gallery"));
    }
    if gallery_labels.len() != d.n_gallery() {
        return Err(Error::Dimension(format!(
            "{} gallery labels for {} gallery columns",
            gallery_labels.len(),
            d.n_gallery()
        )));
    }
    let values = d.values();
    Ok(values
        .rows()
        .into_iter()
        .enumerate()
        .map(|(probe, row)| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v < row[best] {
                    best = j;
                }
            }
            let predicted = gallery_labels[best].as_ref();
            let runner_up = row
                .iter()
                .enumerate()
                .filter(|(j, _)| gallery_labels[*j].as_ref() != predicted)
                .fold(None::<(usize, f64)>, |acc, (j, &v)| match acc {
                    Some((_, bv)) if bv <= v => acc,
                    _ => Some((j, v)),
                })
                .map(|(j, _)| gallery_labels[j].as_ref().to_string());
            Prediction {
                probe,
                predicted: predicted.to_string(),
                score: -row[best],
                runner_up,
            }
        })
        .collect())
}
