//! Eigenfaces (PCA) and Fisherfaces (PCA followed by LDA) projections.
//!
//! PCA works on whichever of the covariance (`dim x dim`) or Gram
//! (`n x n`, snapshot method) matrices is smaller. Eigenvalues below
//! `1e-10 * max` are treated as zero. Each basis column is signed so that its
//! largest-magnitude entry is positive.
//!
//! Fisherfaces first reduces to `n_samples - n_classes` principal components
//! (fewer if the data rank is lower), then solves `S_B w = λ S_W w` in that
//! subspace by whitening `S_W`. When the reduced `S_W` is numerically
//! singular (e.g. noise-free data) it is ridge-stabilized and the ridge is
//! reported in [`LdaFit::ridge`].
//!
//! # Model file layout
//!
//! All integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..8   | magic `FBFEATUR` |
//! | 8..12  | format version (`u32`, currently 1) |
//! | 12..16 | reserved, zero |
//! | u64    | kind (0 = PCA, 1 = LDA) |
//! | u64    | input dimension `d` |
//! | u64    | component count `k` |
//! | d × f64 | mean |
//! | d·k × f64 | basis, row-major (`d` rows of `k`) |
//! | k × f64 | eigenvalues |

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Component count used throughout the experiments.
pub const DEFAULT_COMPONENTS: usize = 100;
/// Relative threshold under which an eigenvalue counts as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

const MAGIC: &[u8; 8] = b"FBFEATUR";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "PCA")]
    Pca,
    #[serde(rename = "LDA")]
    Lda,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 2] = [FeatureKind::Pca, FeatureKind::Lda];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Pca => "PCA",
            FeatureKind::Lda => "LDA",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" | "eigenfaces" => Ok(FeatureKind::Pca),
            "lda" | "fisherfaces" => Ok(FeatureKind::Lda),
            _ => Err(Error::invalid(format!("unknown feature kind {s:?} (expected pca or lda)"))),
        }
    }
}

/// A fitted linear projection `(x - mean) · basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureModel {
    kind: FeatureKind,
    mean: Array1<f64>,
    basis: Array2<f64>,
    eigenvalues: Array1<f64>,
}

impl FeatureModel {
    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    /// `input_dim x n_components`, one unit-norm direction per column.
    pub fn basis(&self) -> ArrayView2<'_, f64> {
        self.basis.view()
    }

    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigenvalues.view()
    }

    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Keeps the leading `k` components.
    pub fn truncated(&self, k: usize) -> Result<FeatureModel> {
        if k == 0 || k > self.n_components() {
            return Err(Error::invalid(format!(
                "cannot keep {k} of {} components",
                self.n_components()
            )));
        }
        Ok(FeatureModel {
            kind: self.kind,
            mean: self.mean.clone(),
            basis: self.basis.slice(s![.., ..k]).to_owned(),
            eigenvalues: self.eigenvalues.slice(s![..k]).to_owned(),
        })
    }

    pub fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        project(self, x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (d, k) = self.basis.dim();
        let mut out = Vec::with_capacity(40 + 8 * (d + d * k + k));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        let kind: u64 = match self.kind {
            FeatureKind::Pca => 0,
            FeatureKind::Lda => 1,
        };
        for v in [kind, d as u64, k as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let floats = self
            .mean
            .iter()
            .chain(self.basis.iter())
            .chain(self.eigenvalues.iter());
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FeatureModel> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        if bytes.len() < 40 || &bytes[..8] != MAGIC {
            return Err(bad("not a feature model (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().expect("8 bytes"));
        let kind = match word(0) {
            0 => FeatureKind::Pca,
            1 => FeatureKind::Lda,
            other => return Err(Error::ModelFormat(format!("unknown kind tag {other}"))),
        };
        let d = usize::try_from(word(1)).map_err(|_| bad("dimension overflow"))?;
        let k = usize::try_from(word(2)).map_err(|_| bad("component count overflow"))?;
        let n_floats = d
            .checked_mul(k)
            .and_then(|dk| dk.checked_add(d))
            .and_then(|v| v.checked_add(k))
            .ok_or_else(|| bad("size overflow"))?;
        let body = &bytes[40..];
        if body.len() != n_floats * 8 {
            return Err(Error::ModelFormat(format!(
                "expected {} payload bytes, found {}",
                n_floats * 8,
                body.len()
            )));
        }
        let mut floats = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mean: Array1<f64> = floats.by_ref().take(d).collect();
        let basis = Array2::from_shape_vec((d, k), floats.by_ref().take(d * k).collect())
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let eigenvalues: Array1<f64> = floats.collect();
        Ok(FeatureModel {
            kind,
            mean,
            basis,
            eigenvalues,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureModel> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn center(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty rows");
    let centered = &x - &mean;
    (mean, centered)
}

/// All principal components with non-negligible variance, descending.
fn principal_components(x: ArrayView2<'_, f64>) -> Result<FeatureModel> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 samples, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("PCA input contains non-finite values"));
    }
    let (mean, centered) = center(x);
    let denom = (n - 1) as f64;

    let (values, mut basis) = if d <= n {
        let mut cov = linalg::gram_cols(centered.view());
        cov.mapv_inplace(|v| v / denom);
        linalg::sym_eigen_desc(cov.view())?
    } else {
        let mut gram = linalg::gram_rows(centered.view());
        gram.mapv_inplace(|v| v / denom);
        let (values, vectors) = linalg::sym_eigen_desc(gram.view())?;
        let max = values.first().copied().unwrap_or(0.0);
        let rank = values.iter().take_while(|&&v| v > max * ZERO_EIGENVALUE_TOL && v > 0.0).count();
        let lifted = linalg::matmul(centered.t(), vectors.slice(s![.., ..rank]));
        (values, lifted)
    };

    let max = values.first().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return Err(Error::Degenerate("all samples are identical (zero covariance)".into()));
    }
    let rank = values.iter().take_while(|&&v| v > max * ZERO_EIGENVALUE_TOL).count();
    basis = basis.slice(s![.., ..rank]).to_owned();
    for mut col in basis.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
    }
    linalg::fix_column_signs(&mut basis);
    Ok(FeatureModel {
        kind: FeatureKind::Pca,
        mean,
        basis,
        eigenvalues: values.slice(s![..rank]).to_owned(),
    })
}

/// Fits Eigenfaces with every component the data supports (its numerical
/// rank), for callers that truncate later.
pub fn fit_pca_full(x: ArrayView2<'_, f64>) -> Result<FeatureModel> {
    principal_components(x)
}

/// Fits Eigenfaces keeping `n_components` leading components.
pub fn fit_pca(x: ArrayView2<'_, f64>, n_components: usize) -> Result<FeatureModel> {
    let (n, d) = x.dim();
    if n_components == 0 || n < 2 || n_components > (n - 1).min(d) {
        return Err(Error::invalid(format!(
            "n_components {n_components} must be in 1..=min(n_samples - 1, dim) = {}",
            n.saturating_sub(1).min(d)
        )));
    }
    let full = principal_components(x)?;
    if n_components > full.n_components() {
        return Err(Error::invalid(format!(
            "n_components {n_components} exceeds the data rank {}",
            full.n_components()
        )));
    }
    full.truncated(n_components)
}

/// `(x - mean) · basis`.
pub fn project(m: &FeatureModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != m.input_dim() {
        return Err(Error::Dimension(format!(
            "model expects {} columns, got {}",
            m.input_dim(),
            x.ncols()
        )));
    }
    let centered = &x - &m.mean;
    Ok(linalg::matmul(centered.view(), m.basis.view()))
}

/// Groups row indices by label; classes ordered by label.
fn class_rows<L: Ord>(labels: &[L]) -> BTreeMap<&L, Vec<usize>> {
    let mut map: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        map.entry(l).or_default().push(i);
    }
    map
}

/// Between-class (`S_B = Σ n_j (μ_j - μ)(μ_j - μ)ᵀ`) and within-class
/// (`S_W = Σ_j Σ_{i∈j} (x_i - μ_j)(x_i - μ_j)ᵀ`) scatter matrices.
pub fn scatter_matrices<L: Ord>(x: ArrayView2<'_, f64>, labels: &[L]) -> Result<(Array2<f64>, Array2<f64>)> {
    if labels.len() != x.nrows() {
        return Err(Error::Dimension(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("no samples"));
    }
    let classes = class_rows(labels);
    let overall = x.mean_axis(Axis(0)).expect("non-empty");
    let d = x.ncols();
    let mut weighted_means = Array2::<f64>::zeros((classes.len(), d));
    let mut within = Array2::<f64>::zeros(x.raw_dim());
    for (c, rows) in classes.values().enumerate() {
        let mut mu = Array1::<f64>::zeros(d);
        for &r in rows {
            mu += &x.row(r);
        }
        mu /= rows.len() as f64;
        for &r in rows {
            within.row_mut(r).assign(&(&x.row(r) - &mu));
        }
        let scale = (rows.len() as f64).sqrt();
        weighted_means.row_mut(c).assign(&((&mu - &overall) * scale));
    }
    Ok((
        linalg::gram_cols(weighted_means.view()),
        linalg::gram_cols(within.view()),
    ))
}

/// Rayleigh quotient `J(w) = wᵀ S_B w / wᵀ S_W w`.
pub fn fisher_criterion(w: ArrayView1<'_, f64>, s_b: ArrayView2<'_, f64>, s_w: ArrayView2<'_, f64>) -> Result<f64> {
    let d = w.len();
    if s_b.dim() != (d, d) || s_w.dim() != (d, d) {
        return Err(Error::Dimension(format!(
            "w has length {d}, S_B is {:?}, S_W is {:?}",
            s_b.dim(),
            s_w.dim()
        )));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("w must be non-zero"));
    }
    let num = w.dot(&s_b.dot(&w));
    let den = w.dot(&s_w.dot(&w));
    if !(den > 0.0) {
        return Err(Error::Numerical(format!("wᵀ S_W w = {den} is not positive")));
    }
    Ok(num / den)
}

/// Fisherfaces fit together with the intermediate quantities in the reduced
/// PCA subspace.
#[derive(Debug, Clone)]
pub struct LdaFit {
    pub model: FeatureModel,
    /// The PCA stage (its components span the reduced subspace).
    pub pca: FeatureModel,
    /// Between-class scatter in the reduced subspace.
    pub between: Array2<f64>,
    /// Within-class scatter in the reduced subspace (without ridge).
    pub within: Array2<f64>,
    /// Discriminant directions in reduced coordinates, unit norm, one per column.
    pub directions: Array2<f64>,
    /// Ridge added to the within-class spectrum; zero unless it was singular.
    pub ridge: f64,
}

fn validate_lda<L: Ord>(n: usize, labels: &[L], n_components: usize) -> Result<usize> {
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
    }
    let classes = class_rows(labels);
    if classes.len() < 2 {
        return Err(Error::invalid(format!("LDA needs at least 2 classes, got {}", classes.len())));
    }
    if let Some((_, rows)) = classes.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(Error::invalid(format!(
            "every class needs at least 2 samples (found a class with {})",
            rows.len()
        )));
    }
    if n_components == 0 || n_components > classes.len() - 1 {
        return Err(Error::invalid(format!(
            "n_components {n_components} must be in 1..=n_classes - 1 = {}",
            classes.len() - 1
        )));
    }
    Ok(classes.len())
}

/// Fits Fisherfaces keeping `n_components` discriminant directions.
pub fn fit_lda<L: Ord>(x: ArrayView2<'_, f64>, labels: &[L], n_components: usize) -> Result<FeatureModel> {
    Ok(fit_lda_detailed(x, labels, n_components)?.model)
}

pub fn fit_lda_detailed<L: Ord>(x: ArrayView2<'_, f64>, labels: &[L], n_components: usize) -> Result<LdaFit> {
    validate_lda(x.nrows(), labels, n_components)?;
    let pca = principal_components(x)?;
    fit_lda_with_pca(&pca, x, labels, n_components)
}

/// Fisherfaces reusing an already fitted PCA of the same training rows (with
/// at least `n_samples - n_classes` components, or all the data supports).
pub fn fit_lda_with_pca<L: Ord>(
    pca: &FeatureModel,
    x: ArrayView2<'_, f64>,
    labels: &[L],
    n_components: usize,
) -> Result<LdaFit> {
    let n_classes = validate_lda(x.nrows(), labels, n_components)?;
    if pca.kind() != FeatureKind::Pca || pca.input_dim() != x.ncols() {
        return Err(Error::invalid("LDA needs a PCA model fitted on the same feature space"));
    }
    let reduced_dim = (x.nrows() - n_classes).min(pca.n_components());
    if reduced_dim == 0 {
        return Err(Error::Degenerate("PCA reduction leaves no dimensions for LDA".into()));
    }
    let pca = pca.truncated(reduced_dim)?;
    let y = project(&pca, x)?;
    let (between, within) = scatter_matrices(y.view(), labels)?;

    // Whiten S_W = Q D Qᵀ, then S_B w = λ S_W w becomes an ordinary symmetric
    // problem for Wᵀ S_B W with W = Q D^{-1/2}.
    let (mut d_vals, q) = linalg::sym_eigen_desc(within.view())?;
    let d_max = d_vals.first().copied().unwrap_or(0.0).max(0.0);
    let d_min = d_vals.last().copied().unwrap_or(0.0);
    let mut ridge = 0.0;
    if !(d_min > d_max * ZERO_EIGENVALUE_TOL) {
        let scale = d_max.max(between.diag().sum() / reduced_dim as f64);
        if !(scale > 0.0) {
            return Err(Error::Degenerate("zero between- and within-class scatter".into()));
        }
        ridge = 1e-8 * scale;
        d_vals.mapv_inplace(|v| v.max(0.0) + ridge);
    }
    let mut whitener = q;
    for (k, mut col) in whitener.columns_mut().into_iter().enumerate() {
        let f = 1.0 / d_vals[k].sqrt();
        col.mapv_inplace(|v| v * f);
    }
    let reduced_between = linalg::symmetrize(linalg::matmul(
        whitener.t(),
        linalg::matmul(between.view(), whitener.view()).view(),
    ));
    let (lambdas, z) = linalg::sym_eigen_desc(reduced_between.view())?;
    let mut directions = linalg::matmul(whitener.view(), z.slice(s![.., ..n_components]));
    for mut col in directions.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
    }
    let mut basis = linalg::matmul(pca.basis(), directions.view());
    for (k, mut col) in basis.columns_mut().into_iter().enumerate() {
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
        // sign convention on the lifted direction, mirrored on the reduced one
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
            directions.column_mut(k).mapv_inplace(|v| -v);
        }
    }
    let model = FeatureModel {
        kind: FeatureKind::Lda,
        mean: pca.mean.clone(),
        basis,
        eigenvalues: lambdas.slice(s![..n_components]).mapv(|v| v.max(0.0)),
    };
    Ok(LdaFit {
        model,
        pca,
        between,
        within,
        directions,
        ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn pca_first_component_on_diagonal_line() {
        let mut rows = Vec::new();
        for t in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            rows.push([t + 1e-3, t - 1e-3]);
            rows.push([t - 1e-3, t + 1e-3]);
        }
        let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        let m = fit_pca(x.view(), 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.basis()[[0, 0]] - h).abs() < 1e-6);
        assert!((m.basis()[[1, 0]] - h).abs() < 1e-6);
    }

    #[test]
    fn projecting_mean_gives_zero() {
        let x = random_matrix(10, 6, 1);
        let m = fit_pca(x.view(), 4).unwrap();
        let mean = m.mean().to_owned().insert_axis(Axis(0));
        let p = project(&m, mean.view()).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_point_pca_is_symmetric() {
        let x = array![[1.0, 2.0, 3.0], [3.0, 0.0, 1.0]];
        let m = fit_pca(x.view(), 1).unwrap();
        let p = project(&m, x.view()).unwrap();
        assert!((p[[0, 0]] + p[[1, 0]]).abs() < 1e-12);
        assert!(p[[0, 0]].abs() > 0.1);
    }

    #[test]
    fn snapshot_path_is_orthonormal() {
        let x = random_matrix(50, 4200, 2);
        let m = fit_pca(x.view(), 49).unwrap();
        let gram = m.basis().t().dot(&m.basis());
        for ((i, j), v) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((v - target).abs() < 1e-8, "({i},{j}) = {v}");
        }
        assert!(m.eigenvalues().windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn snapshot_matches_covariance_route() {
        // d > n uses the Gram matrix; compare with a brute-force covariance eigendecomposition
        let x = random_matrix(12, 30, 3);
        let m = fit_pca(x.view(), 5).unwrap();
        let (_, centered) = center(x.view());
        let cov = centered.t().dot(&centered) / 11.0;
        let (vals, _) = linalg::sym_eigen_desc(cov.view()).unwrap();
        for k in 0..5 {
            assert!((vals[k] - m.eigenvalues()[k]).abs() < 1e-10 * vals[0]);
        }
    }

    #[test]
    fn pca_errors() {
        let x = random_matrix(5, 3, 4);
        assert!(fit_pca(x.view(), 4).is_err());
        assert!(fit_pca(x.view(), 0).is_err());
        let same = Array2::from_elem((4, 3), 2.5);
        assert!(matches!(fit_pca(same.view(), 1), Err(Error::Degenerate(_))));
        let m = fit_pca(x.view(), 2).unwrap();
        assert!(matches!(project(&m, random_matrix(2, 4, 0).view()), Err(Error::Dimension(_))));
    }

    #[test]
    fn truncation_is_consistent() {
        let x = random_matrix(20, 8, 5);
        let m = fit_pca(x.view(), 6).unwrap();
        let full = project(&m, x.view()).unwrap();
        let small = project(&m.truncated(3).unwrap(), x.view()).unwrap();
        assert_eq!(small, full.slice(s![.., ..3]));
    }

    #[test]
    fn lda_rank_bound_and_validation() {
        let x = random_matrix(12, 2, 6);
        let labels = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
        let m = fit_lda(x.view(), &labels, 2).unwrap();
        assert_eq!(m.n_components(), 2);
        assert!(fit_lda(x.view(), &labels, 3).is_err());
        let singletons: Vec<usize> = (0..12).collect();
        assert!(fit_lda(x.view(), &singletons, 1).is_err());
        assert!(fit_lda(x.view(), &[0; 12], 1).is_err());
    }

    #[test]
    fn lda_handles_noise_free_classes() {
        // every class collapses to a point: S_W = 0 in the reduced space
        let centers = random_matrix(4, 10, 7);
        let x = Array2::from_shape_fn((12, 10), |(i, j)| centers[[i / 3, j]]);
        let labels: Vec<usize> = (0..12).map(|i| i / 3).collect();
        let fit = fit_lda_detailed(x.view(), &labels, 3).unwrap();
        assert!(fit.ridge > 0.0);
        let p = project(&fit.model, x.view()).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn fisher_criterion_basics() {
        let eye = Array2::<f64>::eye(3);
        let w = array![0.6, 0.8, 0.0];
        assert!((fisher_criterion(w.view(), eye.view(), eye.view()).unwrap() - 1.0).abs() < 1e-15);
        let sb = array![[2.0, 0.3], [0.3, 1.0]];
        let sw = array![[1.0, 0.1], [0.1, 3.0]];
        let w = array![0.4, -1.3];
        let j = fisher_criterion(w.view(), sb.view(), sw.view()).unwrap();
        let j2 = fisher_criterion((&w * -3.5).view(), sb.view(), sw.view()).unwrap();
        assert!((j - j2).abs() < 1e-12 * j.abs());
        let zero = Array2::<f64>::zeros((2, 2));
        assert!(fisher_criterion(w.view(), sb.view(), zero.view()).is_err());
        assert!(fisher_criterion(array![0.0, 0.0].view(), sb.view(), sw.view()).is_err());
    }

    #[test]
    fn model_bytes_round_trip() {
        let x = random_matrix(9, 5, 8);
        let m = fit_pca(x.view(), 3).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..8], b"FBFEATUR");
        assert_eq!(bytes.len(), 40 + 8 * (5 + 15 + 3));
        assert_eq!(FeatureModel::from_bytes(&bytes).unwrap(), m);
        assert!(FeatureModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
