//! C-SVM with an RBF kernel, trained one-vs-rest. Each binary dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ α_i ≤ C,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! is solved by sequential minimal optimization with maximal-violating-pair
//! working-set selection. The kernel matrix of the training rows is computed
//! once and shared by all binary problems.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::Prediction;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Stream};

/// `exp(-gamma · ‖x − y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma must be >= 0"));
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-gamma * sq).exp())
}

/// `2^-5, 2^-3, ..., 2^15`
pub fn default_c_grid() -> Vec<f64> {
    (-5..=15).step_by(2).map(|e| 2f64.powi(e)).collect()
}

/// `2^-15, 2^-13, ..., 2^3`
pub fn default_gamma_grid() -> Vec<f64> {
    (-15..=3).step_by(2).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    /// KKT violation tolerance of the SMO stopping rule.
    pub tol: f64,
    /// Budget of kernel-entry reads per binary problem (each SMO step reads two
    /// kernel rows).
    pub max_kernel_evals: u64,
}

impl SvmParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        SvmParams {
            c,
            gamma,
            tol: 1e-3,
            max_kernel_evals: 10_000_000,
        }
    }
}

/// Per-feature standardization fitted on training rows; zero-variance
/// features are only centred.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::invalid("cannot standardize zero rows"));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let var = x.var_axis(Axis(0), 0.0);
        let scale = var.mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Dimension(format!("expected {} features, got {}", self.mean.len(), x.ncols())));
        }
        Ok((&x - &self.mean) / &self.scale)
    }
}

/// One "class vs. rest" machine. `alpha` and `signs` cover every training row.
#[derive(Debug, Clone)]
pub struct BinaryMachine {
    pub positive_class: usize,
    pub alpha: Vec<f64>,
    pub signs: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// (row in `SvmModel::support_vectors`, α_i·y_i)
    coefficients: Vec<(usize, f64)>,
}

impl BinaryMachine {
    pub fn n_support(&self) -> usize {
        self.coefficients.len()
    }

    /// `Σ α_i y_i`, zero at a feasible point.
    pub fn equality_residual(&self) -> f64 {
        self.alpha.iter().zip(&self.signs).map(|(a, y)| a * y).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SvmModel {
    classes: Vec<String>,
    params: SvmParams,
    support_vectors: Array2<f64>,
    machines: Vec<BinaryMachine>,
    flags: Vec<String>,
}

impl SvmModel {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn c(&self) -> f64 {
        self.params.c
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn strategy(&self) -> &'static str {
        "one-vs-rest"
    }

    pub fn machines(&self) -> &[BinaryMachine] {
        &self.machines
    }

    pub fn support_vectors(&self) -> ArrayView2<'_, f64> {
        self.support_vectors.view()
    }

    /// Warnings raised during training (degenerate classes, empty machines).
    pub fn flags(&self) -> &[String] {
        &self.flags
    }

    pub fn input_dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// Decision value of every machine for every row of `x` (`n x n_classes`).
    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let k = rbf_cross(x, self.support_vectors.view(), self.params.gamma);
        let mut out = Array2::zeros((x.nrows(), self.machines.len()));
        for (m, machine) in self.machines.iter().enumerate() {
            for i in 0..x.nrows() {
                let row = k.row(i);
                let s: f64 = machine.coefficients.iter().map(|&(sv, coef)| coef * row[sv]).sum();
                out[[i, m]] = s - machine.bias;
            }
        }
        Ok(out)
    }
}

fn squared_norms(x: ArrayView2<'_, f64>) -> Vec<f64> {
    x.rows().into_iter().map(|r| r.dot(&r)).collect()
}

/// RBF kernel between every row of `a` and every row of `b`.
fn rbf_cross(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, gamma: f64) -> Array2<f64> {
    let na = squared_norms(a);
    let nb = squared_norms(b);
    let mut k = if a.nrows() == 0 || b.nrows() == 0 {
        Array2::zeros((a.nrows(), b.nrows()))
    } else {
        linalg::matmul(a, b.t())
    };
    for ((i, j), v) in k.indexed_iter_mut() {
        let sq = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        *v = (-gamma * sq).exp();
    }
    k
}

/// Kernel restricted to a subset of rows of a precomputed matrix.
struct KernelView<'a> {
    gram: &'a Array2<f64>,
    rows: &'a [usize],
}

impl KernelView<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn at(&self, a: usize, b: usize) -> f64 {
        self.gram[[self.rows[a], self.rows[b]]]
    }
}

struct BinarySolution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

fn solve_binary(kernel: &KernelView<'_>, y: &[f64], params: &SvmParams) -> Result<BinarySolution> {
    let n = kernel.len();
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|t| kernel.at(t, t)).collect();
    let mut evals: u64 = 0;
    let mut iterations = 0;
    const TAU: f64 = 1e-12;

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            break;
        }
        evals += 2 * n as u64;
        if evals > params.max_kernel_evals {
            return Err(Error::Numerical(format!(
                "SMO exceeded {} kernel evaluations (violation {:.3e})",
                params.max_kernel_evals,
                gmax - gmin
            )));
        }
        iterations += 1;

        let k_ij = kernel.at(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * (y[i] * y[j] * k_ij)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * (y[i] * y[j] * k_ij)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kernel.at(i, t) * di + y[j] * kernel.at(j, t) * dj);
        }
    }

    // Bias: average of y_t ∇_t over free variables, midpoint of the feasible
    // interval otherwise.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    Ok(BinarySolution { alpha, rho, iterations })
}

/// Class list (sorted) and the class index of every row.
fn encode_labels<L: AsRef<str>>(labels: &[L]) -> (Vec<String>, Vec<usize>) {
    let classes: Vec<String> = labels
        .iter()
        .map(|l| l.as_ref().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let encoded = labels.iter().map(|l| index[l.as_ref()]).collect();
    (classes, encoded)
}

fn validate_params(params: &SvmParams) -> Result<()> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::invalid(format!("C must be > 0, got {}", params.c)));
    }
    if !(params.gamma > 0.0 && params.gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be > 0, got {}", params.gamma)));
    }
    if !(params.tol > 0.0) {
        return Err(Error::invalid("SMO tolerance must be > 0"));
    }
    Ok(())
}

/// Trains one-vs-rest machines on the rows `subset` of a precomputed kernel.
fn train_on_gram(
    x: ArrayView2<'_, f64>,
    gram: &Array2<f64>,
    subset: &[usize],
    class_of: &[usize],
    n_classes: usize,
    classes: Vec<String>,
    params: &SvmParams,
) -> Result<SvmModel> {
    let view = KernelView { gram, rows: subset };
    let solutions: Vec<(usize, Vec<f64>, BinarySolution)> = (0..n_classes)
        .into_par_iter()
        .map(|cls| {
            let y: Vec<f64> = subset
                .iter()
                .map(|&r| if class_of[r] == cls { 1.0 } else { -1.0 })
                .collect();
            solve_binary(&view, &y, params).map(|s| (cls, y, s))
        })
        .collect::<Result<_>>()?;

    let mut flags = Vec::new();
    let first = x.row(subset[0]);
    if subset.iter().all(|&r| x.row(r) == first) {
        flags.push("all training rows are identical; decision values are constant".to_string());
    }
    let mut sv_slot: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, _, s) in &solutions {
        for (t, &a) in s.alpha.iter().enumerate() {
            if a > 0.0 {
                let next = sv_slot.len();
                sv_slot.entry(t).or_insert(next);
            }
        }
    }
    // slot numbers in training-row order
    for (slot, v) in sv_slot.values_mut().enumerate() {
        *v = slot;
    }
    let mut support_vectors = Array2::zeros((sv_slot.len(), x.ncols()));
    for (&t, &slot) in &sv_slot {
        support_vectors.row_mut(slot).assign(&x.row(subset[t]));
    }
    let machines = solutions
        .into_iter()
        .map(|(cls, y, s)| {
            let coefficients: Vec<(usize, f64)> = s
                .alpha
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > 0.0)
                .map(|(t, &a)| (sv_slot[&t], a * y[t]))
                .collect();
            if coefficients.is_empty() {
                flags.push(format!("machine for class {} has no support vectors", classes[cls]));
            }
            BinaryMachine {
                positive_class: cls,
                alpha: s.alpha,
                signs: y,
                bias: s.rho,
                iterations: s.iterations,
                coefficients,
            }
        })
        .collect();
    Ok(SvmModel {
        classes,
        params: *params,
        support_vectors,
        machines,
        flags,
    })
}

fn gram_matrix(x: ArrayView2<'_, f64>, gamma: f64) -> Array2<f64> {
    let mut k = rbf_cross(x, x, gamma);
    for i in 0..k.nrows() {
        k[[i, i]] = 1.0;
        for j in 0..i {
            let v = k[[j, i]];
            k[[i, j]] = v;
        }
    }
    k
}

/// Trains with the default SMO tolerance (1e-3) and evaluation budget.
pub fn svm_train<L: AsRef<str>>(x: ArrayView2<'_, f64>, labels: &[L], c: f64, gamma: f64) -> Result<SvmModel> {
    svm_train_with(x, labels, &SvmParams::new(c, gamma))
}

pub fn svm_train_with<L: AsRef<str>>(x: ArrayView2<'_, f64>, labels: &[L], params: &SvmParams) -> Result<SvmModel> {
    validate_params(params)?;
    if labels.len() != x.nrows() {
        return Err(Error::Dimension(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    let (classes, class_of) = encode_labels(labels);
    if classes.len() < 2 {
        return Err(Error::invalid("need ≥ 2 classes"));
    }
    let gram = gram_matrix(x, params.gamma);
    let subset: Vec<usize> = (0..x.nrows()).collect();
    let n_classes = classes.len();
    train_on_gram(x, &gram, &subset, &class_of, n_classes, classes, params)
}

/// Label of the largest one-vs-rest decision value (ties to the first class
/// in sorted label order).
pub fn svm_predict(m: &SvmModel, x: ArrayView2<'_, f64>) -> Result<Vec<Prediction>> {
    let values = m.decision_values(x)?;
    Ok(values
        .rows()
        .into_iter()
        .enumerate()
        .map(|(probe, row)| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            Prediction {
                probe,
                predicted: m.classes[order[0]].clone(),
                score: row[order[0]],
                runner_up: order.get(1).map(|&k| m.classes[k].clone()),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub c: f64,
    pub gamma: f64,
    /// Cross-validated accuracy of the chosen point, in [0, 1].
    pub cv_accuracy: f64,
    /// (C, gamma, accuracy) for every grid point, C-major.
    pub scores: Vec<(f64, f64, f64)>,
    pub warnings: Vec<String>,
}

/// Fold assignment: stratified round-robin over shuffled class members, or a
/// plain shuffled round-robin when some class has fewer than `folds` rows.
fn assign_folds(class_of: &[usize], n_classes: usize, folds: usize, seed: u64, warnings: &mut Vec<String>) -> Vec<usize> {
    let mut rng = rng::stream(seed, Stream::CrossValidation);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in class_of.iter().enumerate() {
        members[c].push(i);
    }
    let mut fold_of = vec![0; class_of.len()];
    if members.iter().any(|m| m.len() < folds) {
        warnings.push(format!(
            "a class has fewer than {folds} samples; using unstratified folds"
        ));
        let mut all: Vec<usize> = (0..class_of.len()).collect();
        all.shuffle(&mut rng);
        for (pos, i) in all.into_iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    } else {
        let mut next = 0;
        for mut m in members {
            m.shuffle(&mut rng);
            for i in m {
                fold_of[i] = next % folds;
                next += 1;
            }
        }
    }
    fold_of
}

/// Cross-validated grid search over (C, gamma) on training data only. Returns
/// the most accurate point, preferring smaller C and then smaller gamma on ties.
pub fn grid_search_svm<L: AsRef<str>>(
    x: ArrayView2<'_, f64>,
    labels: &[L],
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::invalid("C and gamma grids must be non-empty"));
    }
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if labels.len() != x.nrows() {
        return Err(Error::Dimension(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    if x.nrows() < folds {
        return Err(Error::invalid(format!("{} rows cannot fill {folds} folds", x.nrows())));
    }
    let (classes, class_of) = encode_labels(labels);
    if classes.len() < 2 {
        return Err(Error::invalid("need ≥ 2 classes"));
    }
    let mut cs = c_grid.to_vec();
    let mut gammas = gamma_grid.to_vec();
    for v in cs.iter().chain(&gammas) {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("grid values must be positive, got {v}")));
        }
    }
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();

    let mut warnings = Vec::new();
    let fold_of = assign_folds(&class_of, classes.len(), folds, seed, &mut warnings);

    // correct[c][g]
    let mut correct = vec![vec![0usize; gammas.len()]; cs.len()];
    for (gi, &gamma) in gammas.iter().enumerate() {
        let gram = gram_matrix(x, gamma);
        for fold in 0..folds {
            let train: Vec<usize> = (0..x.nrows()).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..x.nrows()).filter(|&i| fold_of[i] == fold).collect();
            let present: std::collections::BTreeSet<usize> = train.iter().map(|&i| class_of[i]).collect();
            if present.len() < 2 {
                return Err(Error::invalid("a training fold contains a single class"));
            }
            // machines only for classes present in this fold's training part
            let local: Vec<usize> = present.iter().copied().collect();
            let remap: BTreeMap<usize, usize> = local.iter().enumerate().map(|(k, &c)| (c, k)).collect();
            let local_class_of: Vec<usize> = class_of.iter().map(|c| remap.get(c).copied().unwrap_or(usize::MAX)).collect();
            let names: Vec<String> = local.iter().map(|&c| classes[c].clone()).collect();
            for (ci, &c) in cs.iter().enumerate() {
                let params = SvmParams::new(c, gamma);
                let model = train_on_gram(x, &gram, &train, &local_class_of, local.len(), names.clone(), &params)?;
                let test_rows = x.select(Axis(0), &test);
                let preds = svm_predict(&model, test_rows.view())?;
                correct[ci][gi] += preds
                    .iter()
                    .zip(&test)
                    .filter(|(p, &t)| p.predicted == classes[class_of[t]])
                    .count();
            }
        }
    }

    let n = x.nrows() as f64;
    let mut scores = Vec::with_capacity(cs.len() * gammas.len());
    let mut best = (0usize, 0usize);
    let mut best_correct = None;
    for (ci, &c) in cs.iter().enumerate() {
        for (gi, &gamma) in gammas.iter().enumerate() {
            scores.push((c, gamma, correct[ci][gi] as f64 / n));
            if best_correct.is_none_or(|b| correct[ci][gi] > b) {
                best_correct = Some(correct[ci][gi]);
                best = (ci, gi);
            }
        }
    }
    Ok(GridSearchResult {
        c: cs[best.0],
        gamma: gammas[best.1],
        cv_accuracy: correct[best.0][best.1] as f64 / n,
        scores,
        warnings,
    })
}
