//! Covariance eigenspaces over flattened MVFI templates.
//!
//! Linear PCA is trained through the N_T x N_T surrogate matrix instead of the
//! full pixel-space covariance; polynomial KPCA goes through a double-centered
//! Gram matrix. Both routes share the same input scaling and mean subtraction,
//! which makes a degree-1, offset-0 kernel model reproduce linear PCA
//! projections up to per-axis sign.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default retained eigenspace dimensions.
pub const DEFAULT_K: usize = 10;

/// Eigenvalues below this fraction of the leading one are treated as zero.
const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub vector: Vec<f64>,
    pub label: String,
    pub clip_id: String,
}

/// Labeled flattened-template vectors, all of the same dimension.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    samples: Vec<TrainingSample>,
}

impl TrainingSet {
    pub fn new(samples: Vec<TrainingSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let d = samples[0].vector.len();
        if d == 0 {
            return Err(Error::InvalidConfig("zero-dimensional samples".into()));
        }
        for s in &samples[1..] {
            if s.vector.len() != d {
                return Err(Error::VectorDimension {
                    got: s.vector.len(),
                    expected: d,
                });
            }
        }
        Ok(TrainingSet { samples })
    }

    pub fn samples(&self) -> &[TrainingSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].vector.len()
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.label.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Polynomial { degree: u32, offset: f64 },
}

/// A trained projection model.
///
/// `eigenvalues` holds the top `min(k_requested, N_T)` covariance eigenvalues
/// in descending magnitude order; the projection dimension `k` counts only
/// those above the numerical floor, so degenerate directions are reported but
/// never projected onto.
#[derive(Debug, Clone)]
pub struct EigenModel {
    pub kind: ModelKind,
    pub dim: usize,
    pub k: usize,
    pub scale: f64,
    pub eigenvalues: Vec<f64>,
    mean: DVector<f64>,
    /// k x dim orthonormal basis (linear models).
    basis: Option<DMatrix<f64>>,
    /// k x N_T kernel coefficients (kernel models).
    coeffs: Option<DMatrix<f64>>,
    /// N_T x dim scaled centered training vectors (kernel models).
    train_vectors: Option<DMatrix<f64>>,
    gram_col_mean: Option<DVector<f64>>,
    gram_mean: f64,
}

/// One point per template in the reduced eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    pub frame_indices: Vec<usize>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn pixel_scale(dim: usize) -> f64 {
    1.0 / (255.0 * (dim as f64).sqrt())
}

/// Rows are scaled, mean-subtracted samples; also returns the raw mean.
fn centered_matrix(data: &TrainingSet) -> (DMatrix<f64>, DVector<f64>, f64) {
    let n = data.len();
    let d = data.dim();
    let scale = pixel_scale(d);
    let mut mean = DVector::zeros(d);
    for s in data.samples() {
        for (i, &v) in s.vector.iter().enumerate() {
            mean[i] += v;
        }
    }
    mean /= n as f64;
    let mut xbar = DMatrix::zeros(n, d);
    for (r, s) in data.samples().iter().enumerate() {
        for (c, &v) in s.vector.iter().enumerate() {
            xbar[(r, c)] = scale * (v - mean[c]);
        }
    }
    (xbar, mean, scale)
}

/// Descending-|lambda| eigenpairs of a symmetric matrix, deterministic order.
fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Flip so the largest-magnitude component is positive.
fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v = -&*v;
    }
}

/// Train a linear PCA model via the N_T x N_T surrogate eigenproblem.
pub fn train_pca(data: &TrainingSet, k: usize) -> Result<EigenModel> {
    let n = data.len();
    if k < 2 {
        return Err(Error::InvalidConfig("k must be >= 2".into()));
    }
    if k > n {
        return Err(Error::TooManyComponents { k, available: n });
    }
    let (xbar, mean, scale) = centered_matrix(data);
    let surrogate = &xbar * xbar.transpose();
    let (values, vectors) = sorted_symmetric_eigen(surrogate);
    let lead = values[0].abs();
    if lead <= 0.0 || !lead.is_finite() {
        return Err(Error::NoVariance);
    }
    let retained = values
        .iter()
        .take(k)
        .filter(|v| v.abs() > EIGEN_FLOOR * lead)
        .count();
    if retained == 0 {
        return Err(Error::NoVariance);
    }
    let mut basis = DMatrix::zeros(retained, data.dim());
    for i in 0..retained {
        let surrogate_vec = vectors.column(i);
        let mut u = xbar.transpose() * surrogate_vec;
        let norm = u.norm();
        if norm == 0.0 {
            return Err(Error::NoVariance);
        }
        u /= norm;
        fix_sign(&mut u);
        basis.set_row(i, &u.transpose());
    }
    let eigenvalues = values.iter().take(k).map(|v| v / n as f64).collect();
    Ok(EigenModel {
        kind: ModelKind::Linear,
        dim: data.dim(),
        k: retained,
        scale,
        eigenvalues,
        mean,
        basis: Some(basis),
        coeffs: None,
        train_vectors: None,
        gram_col_mean: None,
        gram_mean: 0.0,
    })
}

/// Train a polynomial-kernel KPCA model on the double-centered Gram matrix.
pub fn train_kpca(data: &TrainingSet, k: usize, degree: u32, offset: f64) -> Result<EigenModel> {
    let n = data.len();
    if k < 2 || degree < 1 {
        return Err(Error::InvalidConfig("k must be >= 2 and degree >= 1".into()));
    }
    if k > n {
        return Err(Error::TooManyComponents { k, available: n });
    }
    let (xbar, mean, scale) = centered_matrix(data);
    let dots = &xbar * xbar.transpose();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = (dots[(i, j)] + offset).powi(degree as i32);
        }
    }
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteKernel);
    }
    let col_mean: DVector<f64> = DVector::from_iterator(
        n,
        (0..n).map(|j| gram.column(j).sum() / n as f64),
    );
    let grand_mean = col_mean.sum() / n as f64;
    let mut centered = gram;
    for i in 0..n {
        for j in 0..n {
            centered[(i, j)] += grand_mean - col_mean[i] - col_mean[j];
        }
    }
    let (values, vectors) = sorted_symmetric_eigen(centered);
    let lead = values[0].abs();
    if lead <= 0.0 || !lead.is_finite() {
        return Err(Error::NoVariance);
    }
    let retained = values
        .iter()
        .take(k)
        .filter(|v| **v > EIGEN_FLOOR * lead)
        .count();
    if retained == 0 {
        return Err(Error::NoVariance);
    }
    let mut coeffs = DMatrix::zeros(retained, n);
    for i in 0..retained {
        // normalization 1 = lambda'_i * N_T * a_i . a_i with lambda' = mu / N_T
        let mut a: DVector<f64> = vectors.column(i) / values[i].sqrt();
        fix_sign(&mut a);
        coeffs.set_row(i, &a.transpose());
    }
    let eigenvalues = values.iter().take(k).map(|v| v / n as f64).collect();
    Ok(EigenModel {
        kind: ModelKind::Polynomial { degree, offset },
        dim: data.dim(),
        k: retained,
        scale,
        eigenvalues,
        mean,
        basis: None,
        coeffs: None::<DMatrix<f64>>.or(Some(coeffs)),
        train_vectors: Some(xbar),
        gram_col_mean: Some(col_mean),
        gram_mean: grand_mean,
    })
}

impl EigenModel {
    /// Project one flattened template into the eigenspace.
    pub fn project(&self, vector: &[f64]) -> Result<Vec<f64>> {
        if vector.len() != self.dim {
            return Err(Error::VectorDimension {
                got: vector.len(),
                expected: self.dim,
            });
        }
        let xb = DVector::from_iterator(
            self.dim,
            vector
                .iter()
                .zip(self.mean.iter())
                .map(|(&v, &m)| self.scale * (v - m)),
        );
        let out = match &self.kind {
            ModelKind::Linear => {
                let basis = self.basis.as_ref().expect("linear model has basis");
                basis * xb
            }
            ModelKind::Polynomial { degree, offset } => {
                let train = self.train_vectors.as_ref().expect("kernel model vectors");
                let coeffs = self.coeffs.as_ref().expect("kernel model coeffs");
                let col_mean = self.gram_col_mean.as_ref().expect("kernel gram stats");
                let n = train.nrows();
                let raw = train * &xb;
                let mut kvec = DVector::zeros(n);
                for j in 0..n {
                    kvec[j] = (raw[j] + offset).powi(*degree as i32);
                }
                let test_mean = kvec.sum() / n as f64;
                for j in 0..n {
                    kvec[j] += self.gram_mean - test_mean - col_mean[j];
                }
                coeffs * kvec
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteKernel);
        }
        Ok(out.iter().copied().collect())
    }

    /// Pointwise projection of a template sequence, preserving order.
    pub fn project_sequence<'a, I>(&self, templates: I) -> Result<Trajectory>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut points = Vec::new();
        let mut frame_indices = Vec::new();
        for (i, t) in templates.into_iter().enumerate() {
            points.push(self.project(t)?);
            frame_indices.push(i);
        }
        Ok(Trajectory {
            points,
            frame_indices,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

/// Mean inter-class over mean intra-class pairwise distance of projected
/// training points. Returns +inf when the in-class spread is zero.
pub fn class_separation_ratio(model: &EigenModel, data: &TrainingSet) -> Result<f64> {
    if data.labels().len() < 2 {
        return Err(Error::TooFewClasses { need: 2 });
    }
    let projected: Vec<(Vec<f64>, &str)> = data
        .samples()
        .iter()
        .map(|s| Ok((model.project(&s.vector)?, s.label.as_str())))
        .collect::<Result<_>>()?;
    let mut out_sum = 0.0;
    let mut out_n = 0u64;
    let mut in_sum = 0.0;
    let mut in_n = 0u64;
    for i in 0..projected.len() {
        for j in (i + 1)..projected.len() {
            let d: f64 = projected[i]
                .0
                .iter()
                .zip(&projected[j].0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if projected[i].1 == projected[j].1 {
                in_sum += d;
                in_n += 1;
            } else {
                out_sum += d;
                out_n += 1;
            }
        }
    }
    let s_out = if out_n > 0 { out_sum / out_n as f64 } else { 0.0 };
    let s_in = if in_n > 0 { in_sum / in_n as f64 } else { 0.0 };
    if s_in == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(s_out / s_in)
}

/// Sweep polynomial degrees and keep the argmax separation ratio.
/// Ties break toward the smaller degree.
pub fn tune_kernel_degree(
    data: &TrainingSet,
    k: usize,
    offset: f64,
    degrees: &[u32],
) -> Result<(u32, Vec<(u32, f64)>)> {
    if degrees.is_empty() {
        return Err(Error::InvalidConfig("empty degree range".into()));
    }
    let mut curve = Vec::with_capacity(degrees.len());
    let mut best: Option<(u32, f64)> = None;
    let mut sorted = degrees.to_vec();
    sorted.sort_unstable();
    for &d in &sorted {
        let model = train_kpca(data, k, d, offset)?;
        let ratio = class_separation_ratio(&model, data)?;
        curve.push((d, ratio));
        match best {
            Some((_, r)) if ratio <= r => {}
            _ => best = Some((d, ratio)),
        }
    }
    Ok((best.unwrap().0, curve))
}

// ---------------------------------------------------------------------------
// Persistence

const SIDEC_MAGIC: &[u8; 4] = b"MCEM";
const SIDEC_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    #[serde(flatten)]
    kind: ModelKind,
    dim: usize,
    k: usize,
    scale: f64,
    eigenvalues: Vec<f64>,
    gram_mean: f64,
}

fn push_block(out: &mut Vec<u8>, width: usize, rows: &[DVector<f64>]) {
    out.extend_from_slice(SIDEC_MAGIC);
    out.extend_from_slice(&SIDEC_VERSION.to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    for row in rows {
        debug_assert_eq!(row.len(), width);
        for &v in row.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

fn read_block(data: &[u8], pos: &mut usize) -> Result<(usize, Vec<DVector<f64>>)> {
    let corrupt = |m: &str| Error::MalformedModel(m.to_string());
    if data.len() < *pos + 12 {
        return Err(corrupt("truncated block header"));
    }
    if &data[*pos..*pos + 4] != SIDEC_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([data[*pos + 4], data[*pos + 5]]);
    if version != SIDEC_VERSION {
        return Err(Error::ModelVersion {
            got: version,
            expected: SIDEC_VERSION,
        });
    }
    let width = u32::from_le_bytes(data[*pos + 6..*pos + 10].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(data[*pos + 10..*pos + 14].try_into().unwrap()) as usize;
    *pos += 14;
    let need = width * rows * 4;
    if data.len() < *pos + need {
        return Err(corrupt("truncated block payload"));
    }
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut row = DVector::zeros(width);
        for c in 0..width {
            let off = *pos + (r * width + c) * 4;
            row[c] = f32::from_le_bytes(data[off..off + 4].try_into().unwrap()) as f64;
        }
        out.push(row);
    }
    *pos += need;
    Ok((width, out))
}

impl EigenModel {
    /// Write `manifest.json` and the `model.bin` sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            kind: self.kind.clone(),
            dim: self.dim,
            k: self.k,
            scale: self.scale,
            eigenvalues: self.eigenvalues.clone(),
            gram_mean: self.gram_mean,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;

        let mut bin = Vec::new();
        match &self.kind {
            ModelKind::Linear => {
                let basis = self.basis.as_ref().unwrap();
                let mut rows = vec![self.mean.clone()];
                for i in 0..basis.nrows() {
                    rows.push(basis.row(i).transpose());
                }
                push_block(&mut bin, self.dim, &rows);
            }
            ModelKind::Polynomial { .. } => {
                let train = self.train_vectors.as_ref().unwrap();
                let coeffs = self.coeffs.as_ref().unwrap();
                let col_mean = self.gram_col_mean.as_ref().unwrap();
                let mut rows = vec![self.mean.clone()];
                for i in 0..train.nrows() {
                    rows.push(train.row(i).transpose());
                }
                push_block(&mut bin, self.dim, &rows);
                let mut rows2 = Vec::with_capacity(coeffs.nrows() + 1);
                for i in 0..coeffs.nrows() {
                    rows2.push(coeffs.row(i).transpose());
                }
                rows2.push(col_mean.clone());
                push_block(&mut bin, train.nrows(), &rows2);
            }
        }
        let path = dir.join("model.bin");
        fs::write(&path, bin).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let manifest: Manifest =
            serde_json::from_slice(&fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?)?;
        let bpath = dir.join("model.bin");
        let bin = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        let mut pos = 0usize;
        let (width, rows) = read_block(&bin, &mut pos)?;
        if width != manifest.dim || rows.is_empty() {
            return Err(Error::MalformedModel("dimension mismatch".into()));
        }
        let mean = rows[0].clone();
        match manifest.kind {
            ModelKind::Linear => {
                if rows.len() != manifest.k + 1 {
                    return Err(Error::MalformedModel("basis row count".into()));
                }
                let mut basis = DMatrix::zeros(manifest.k, manifest.dim);
                for i in 0..manifest.k {
                    basis.set_row(i, &rows[i + 1].transpose());
                }
                Ok(EigenModel {
                    kind: ModelKind::Linear,
                    dim: manifest.dim,
                    k: manifest.k,
                    scale: manifest.scale,
                    eigenvalues: manifest.eigenvalues,
                    mean,
                    basis: Some(basis),
                    coeffs: None,
                    train_vectors: None,
                    gram_col_mean: None,
                    gram_mean: 0.0,
                })
            }
            ModelKind::Polynomial { degree, offset } => {
                let n = rows.len() - 1;
                let mut train = DMatrix::zeros(n, manifest.dim);
                for i in 0..n {
                    train.set_row(i, &rows[i + 1].transpose());
                }
                let (width2, rows2) = read_block(&bin, &mut pos)?;
                if width2 != n || rows2.len() != manifest.k + 1 {
                    return Err(Error::MalformedModel("coefficient block shape".into()));
                }
                let mut coeffs = DMatrix::zeros(manifest.k, n);
                for i in 0..manifest.k {
                    coeffs.set_row(i, &rows2[i].transpose());
                }
                let col_mean = rows2[manifest.k].clone();
                Ok(EigenModel {
                    kind: ModelKind::Polynomial { degree, offset },
                    dim: manifest.dim,
                    k: manifest.k,
                    scale: manifest.scale,
                    eigenvalues: manifest.eigenvalues,
                    mean,
                    basis: None,
                    coeffs: Some(coeffs),
                    train_vectors: Some(train),
                    gram_col_mean: Some(col_mean),
                    gram_mean: manifest.gram_mean,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(seed: u64, n: usize, d: usize, classes: usize) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|i| {
                let c = i % classes;
                let vector = (0..d)
                    .map(|j| {
                        let center = 60.0 + 40.0 * c as f64 * ((j % 7) as f64 / 7.0);
                        center + rng.gen_range(-25.0..25.0)
                    })
                    .collect();
                TrainingSample {
                    vector,
                    label: format!("c{c}"),
                    clip_id: format!("clip{i}"),
                }
            })
            .collect();
        TrainingSet::new(samples).unwrap()
    }

    fn max_abs_diff_up_to_sign(a: &[Vec<f64>], b: &[Vec<f64>], k: usize) -> f64 {
        // per-axis sign chosen from the first sample with a non-tiny entry
        let mut signs = vec![1.0f64; k];
        for axis in 0..k {
            for (pa, pb) in a.iter().zip(b) {
                if pa[axis].abs() > 1e-8 {
                    signs[axis] = (pa[axis] * pb[axis]).signum();
                    break;
                }
            }
        }
        let mut worst: f64 = 0.0;
        for (pa, pb) in a.iter().zip(b) {
            for axis in 0..k {
                worst = worst.max((pa[axis] - signs[axis] * pb[axis]).abs());
            }
        }
        worst
    }

    #[test]
    fn rank_one_data_has_single_direction() {
        let samples = (0..6)
            .map(|i| TrainingSample {
                vector: vec![i as f64 * 3.0, i as f64 * 4.0],
                label: "a".into(),
                clip_id: format!("{i}"),
            })
            .collect();
        let data = TrainingSet::new(samples).unwrap();
        let model = train_pca(&data, 2).unwrap();
        assert_eq!(model.k, 1);
        assert!(model.eigenvalues[1].abs() < 1e-9);
        let basis = model.basis.as_ref().unwrap();
        let dir = [3.0 / 5.0, 4.0 / 5.0];
        let dot = basis[(0, 0)] * dir[0] + basis[(0, 1)] * dir[1];
        assert!(dot.abs() > 1.0 - 1e-9);
    }

    #[test]
    fn projecting_the_mean_is_zero() {
        let data = random_set(1, 20, 16, 2);
        let model = train_pca(&data, 5).unwrap();
        let mean: Vec<f64> = model.mean().iter().copied().collect();
        let y = model.project(&mean).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn all_identical_data_is_rejected() {
        let samples = (0..5)
            .map(|i| TrainingSample {
                vector: vec![9.0; 8],
                label: "a".into(),
                clip_id: format!("{i}"),
            })
            .collect();
        let data = TrainingSet::new(samples).unwrap();
        assert!(matches!(train_pca(&data, 3), Err(Error::NoVariance)));
    }

    #[test]
    fn k_larger_than_sample_count_is_rejected() {
        let data = random_set(2, 8, 6, 2);
        assert!(matches!(
            train_pca(&data, 9),
            Err(Error::TooManyComponents { .. })
        ));
    }

    #[test]
    fn linear_basis_is_orthonormal() {
        let data = random_set(3, 30, 24, 3);
        let model = train_pca(&data, 8).unwrap();
        let basis = model.basis.as_ref().unwrap();
        for i in 0..model.k {
            for j in 0..model.k {
                let dot = basis.row(i).dot(&basis.row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-6, "gram[{i}][{j}]={dot}");
            }
        }
    }

    #[test]
    fn eigenvalues_are_non_increasing_in_magnitude() {
        let data = random_set(4, 25, 20, 2);
        for model in [
            train_pca(&data, 10).unwrap(),
            train_kpca(&data, 10, 3, 1.0).unwrap(),
        ] {
            for w in model.eigenvalues.windows(2) {
                assert!(w[0].abs() >= w[1].abs() - 1e-12);
            }
        }
    }

    #[test]
    fn kpca_coefficient_normalization() {
        let data = random_set(5, 20, 16, 2);
        let model = train_kpca(&data, 6, 2, 1.0).unwrap();
        let coeffs = model.coeffs.as_ref().unwrap();
        let n = data.len() as f64;
        for i in 0..model.k {
            // eigenvalues stored as lambda' = mu / N_T
            let check = model.eigenvalues[i] * n * coeffs.row(i).dot(&coeffs.row(i));
            assert!((check - 1.0).abs() < 1e-6, "axis {i}: {check}");
        }
    }

    #[test]
    fn centered_gram_rows_sum_to_zero() {
        let data = random_set(6, 15, 12, 2);
        let (xbar, _, _) = centered_matrix(&data);
        let n = data.len();
        let dots = &xbar * xbar.transpose();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] = (dots[(i, j)] + 1.0).powi(3);
            }
        }
        let col_mean: DVector<f64> =
            DVector::from_iterator(n, (0..n).map(|j| gram.column(j).sum() / n as f64));
        let grand = col_mean.sum() / n as f64;
        for i in 0..n {
            let row_sum: f64 = (0..n)
                .map(|j| gram[(i, j)] + grand - col_mean[i] - col_mean[j])
                .sum();
            assert!(row_sum.abs() < 1e-6 * n as f64);
        }
    }

    #[test]
    fn linear_kernel_kpca_matches_pca() {
        let data = random_set(7, 24, 18, 3);
        let pca = train_pca(&data, 6).unwrap();
        let kpca = train_kpca(&data, 6, 1, 0.0).unwrap();
        assert_eq!(pca.k, kpca.k);
        let a: Vec<Vec<f64>> = data
            .samples()
            .iter()
            .map(|s| pca.project(&s.vector).unwrap())
            .collect();
        let b: Vec<Vec<f64>> = data
            .samples()
            .iter()
            .map(|s| kpca.project(&s.vector).unwrap())
            .collect();
        let scale = a
            .iter()
            .flat_map(|p| p.iter().map(|v| v.abs()))
            .fold(0.0f64, f64::max);
        assert!(max_abs_diff_up_to_sign(&a, &b, pca.k) < 1e-6 * scale.max(1.0));
    }

    #[test]
    fn projection_is_translation_invariant() {
        let base = random_set(8, 18, 10, 2);
        let shifted = TrainingSet::new(
            base.samples()
                .iter()
                .map(|s| TrainingSample {
                    vector: s.vector.iter().map(|v| v + 37.0).collect(),
                    label: s.label.clone(),
                    clip_id: s.clip_id.clone(),
                })
                .collect(),
        )
        .unwrap();
        let m1 = train_pca(&base, 4).unwrap();
        let m2 = train_pca(&shifted, 4).unwrap();
        let a: Vec<Vec<f64>> = base
            .samples()
            .iter()
            .map(|s| m1.project(&s.vector).unwrap())
            .collect();
        let b: Vec<Vec<f64>> = shifted
            .samples()
            .iter()
            .map(|s| m2.project(&s.vector).unwrap())
            .collect();
        assert!(max_abs_diff_up_to_sign(&a, &b, m1.k) < 1e-6);
    }

    #[test]
    fn project_sequence_preserves_order() {
        let data = random_set(9, 12, 8, 2);
        let model = train_pca(&data, 3).unwrap();
        let vectors: Vec<&[f64]> = data.samples().iter().map(|s| s.vector.as_slice()).collect();
        let traj = model.project_sequence(vectors.iter().copied()).unwrap();
        assert_eq!(traj.len(), 12);
        let rev = model
            .project_sequence(vectors.iter().rev().copied())
            .unwrap();
        let fwd_rev: Vec<_> = traj.points.iter().rev().cloned().collect();
        assert_eq!(rev.points, fwd_rev);
    }

    fn ring_set() -> TrainingSet {
        let mut samples = Vec::new();
        for i in 0..36 {
            let a = i as f64 / 36.0 * std::f64::consts::TAU;
            samples.push(TrainingSample {
                vector: vec![90.0 * a.cos(), 90.0 * a.sin()],
                label: "inner".into(),
                clip_id: format!("i{i}"),
            });
            samples.push(TrainingSample {
                vector: vec![250.0 * (a + 0.05).cos(), 250.0 * (a + 0.05).sin()],
                label: "outer".into(),
                clip_id: format!("o{i}"),
            });
        }
        TrainingSet::new(samples).unwrap()
    }

    #[test]
    fn ring_data_prefers_quadratic_kernel() {
        let data = ring_set();
        let m1 = train_kpca(&data, 2, 1, 1.0).unwrap();
        let m2 = train_kpca(&data, 2, 2, 1.0).unwrap();
        let r1 = class_separation_ratio(&m1, &data).unwrap();
        let r2 = class_separation_ratio(&m2, &data).unwrap();
        assert!(r2 > r1, "r1={r1} r2={r2}");
        let (best, curve) = tune_kernel_degree(&data, 2, 1.0, &[1, 2, 3, 4]).unwrap();
        assert!(best > 1, "curve: {curve:?}");
        assert_eq!(curve.len(), 4);
    }

    #[test]
    fn degenerate_in_class_spread_returns_infinity() {
        let mut samples = Vec::new();
        for i in 0..4 {
            samples.push(TrainingSample {
                vector: vec![0.0, 0.0, 200.0],
                label: "a".into(),
                clip_id: format!("a{i}"),
            });
            samples.push(TrainingSample {
                vector: vec![200.0, 0.0, 0.0],
                label: "b".into(),
                clip_id: format!("b{i}"),
            });
        }
        let data = TrainingSet::new(samples).unwrap();
        let model = train_pca(&data, 2).unwrap();
        let r = class_separation_ratio(&model, &data).unwrap();
        assert!(r.is_infinite());
    }

    #[test]
    fn singleton_degree_range() {
        let data = random_set(10, 16, 8, 2);
        let (best, curve) = tune_kernel_degree(&data, 4, 1.0, &[1]).unwrap();
        assert_eq!(best, 1);
        assert_eq!(curve.len(), 1);
    }

    #[test]
    fn save_load_roundtrip_linear_and_kernel() {
        let data = random_set(11, 20, 14, 2);
        let dir = tempfile::tempdir().unwrap();
        for (name, model) in [
            ("lin", train_pca(&data, 5).unwrap()),
            ("ker", train_kpca(&data, 5, 3, 1.0).unwrap()),
        ] {
            let path = dir.path().join(name);
            model.save(&path).unwrap();
            let loaded = EigenModel::load(&path).unwrap();
            assert_eq!(loaded.k, model.k);
            assert_eq!(loaded.kind, model.kind);
            for s in data.samples() {
                let a = model.project(&s.vector).unwrap();
                let b = loaded.project(&s.vector).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    // sidecar stores f32
                    assert!((x - y).abs() < 1e-4 * x.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn truncated_model_file_is_rejected() {
        let data = random_set(12, 10, 8, 2);
        let dir = tempfile::tempdir().unwrap();
        let model = train_pca(&data, 3).unwrap();
        model.save(dir.path()).unwrap();
        let bin_path = dir.path().join("model.bin");
        let bytes = std::fs::read(&bin_path).unwrap();
        std::fs::write(&bin_path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(EigenModel::load(dir.path()).is_err());
    }

    #[test]
    fn training_projection_consistency() {
        // projecting a training sample reproduces the decomposition's own
        // coordinates for that sample
        let data = random_set(13, 18, 12, 2);
        let model = train_kpca(&data, 5, 2, 1.0).unwrap();
        for s in data.samples() {
            let once = model.project(&s.vector).unwrap();
            let twice = model.project(&s.vector).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
