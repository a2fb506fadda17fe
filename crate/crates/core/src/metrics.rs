//! Objective evaluation: Fréchet audio distance, KL divergence and the
//! embedding cosine score, plus the Gaussian fitting and PSD square root
//! they rely on.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pairing::PairingManifest;
use crate::scalar::Scalar;

/// Eigenvalues below this are treated as a genuinely indefinite input.
pub const NEGATIVE_EIGEN_TOL: f64 = -1e-8;
/// Diagonal offset added to both covariances when that happens.
pub const FAD_JITTER: f64 = 1e-6;
/// Additive smoothing applied to distributions before KL.
pub const KL_SMOOTHING: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-9;

/// Sample mean and unbiased covariance of an embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats<T> {
    pub mean: Vec<T>,
    pub cov: Matrix<T>,
    pub n: usize,
}

impl<T: Scalar> GaussianStats<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// A point mass at `mean` (zero covariance).
    pub fn point(mean: Vec<T>) -> Self {
        let d = mean.len();
        Self {
            mean,
            cov: Matrix::zeros(d, d),
            n: 1,
        }
    }
}

/// Fits mean and `(n-1)`-normalized covariance, symmetrized.
pub fn fit_gaussian_rows<T: Scalar>(rows: &[&[T]]) -> Result<GaussianStats<T>> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Sample { needed: 2, actual: n });
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::Shape("zero-dimensional embeddings".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::Dim {
            expected: d,
            actual: r.len(),
        });
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut mean = vec![T::zero(); d];
    for r in rows {
        for (m, &x) in mean.iter_mut().zip(*r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_n);

    let mut cov = Matrix::zeros(d, d);
    let mut centred = vec![T::zero(); d];
    for r in rows {
        for ((c, &x), &m) in centred.iter_mut().zip(*r).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centred[i];
            for (o, &cj) in cov.row_mut(i)[i..].iter_mut().zip(&centred[i..]) {
                *o += ci * cj;
            }
        }
    }
    let denom = T::of((n - 1) as f64);
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(GaussianStats { mean, cov, n })
}

pub fn fit_gaussian(embs: &EmbeddingMatrix) -> Result<GaussianStats<f64>> {
    let rows: Vec<Vec<f64>> = embs.rows().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    fit_gaussian_rows(&refs)
}

fn to_nalgebra<T: Scalar>(a: &Matrix<T>) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)].as_f64())
}

fn check_symmetric<T: Scalar>(a: &Matrix<T>) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::Shape(format!("matrix is {}x{}, expected square", a.rows(), a.cols())));
    }
    let scale = a
        .as_slice()
        .iter()
        .fold(1.0f64, |m, x| m.max(x.as_f64().abs()));
    let asym = a.asymmetry().as_f64();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Symmetry(asym));
    }
    Ok(())
}

/// Eigenvalues (ascending order not guaranteed) and eigenvectors of the
/// symmetrized input, computed in f64.
fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let m = to_nalgebra(&a.symmetrized());
    SymmetricEigen::new(m)
}

/// Principal square root of a symmetric PSD matrix via
/// eigendecomposition; negative eigenvalues are clamped to zero.
pub fn matrix_sqrt_psd<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    check_symmetric(a)?;
    let eig = symmetric_eigen(a);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    let out = Matrix::from_fn(a.rows(), a.cols(), |i, j| T::of(0.5 * (s[(i, j)] + s[(j, i)])));
    Ok(out)
}

/// `‖μ_b − μ_e‖² + Tr(Σ_b + Σ_e − 2 (Σ_b^½ Σ_e Σ_b^½)^½)`, clamped at zero.
pub fn fad<T: Scalar>(b: &GaussianStats<T>, e: &GaussianStats<T>) -> Result<T> {
    let d = b.dim();
    if e.dim() != d || b.cov.shape() != (d, d) || e.cov.shape() != (d, d) {
        return Err(Error::Dim {
            expected: d,
            actual: e.dim(),
        });
    }
    check_symmetric(&b.cov)?;
    check_symmetric(&e.cov)?;
    let mean_term: f64 = b
        .mean
        .iter()
        .zip(&e.mean)
        .map(|(&x, &y)| {
            let diff = x.as_f64() - y.as_f64();
            diff * diff
        })
        .sum();

    let mut cb = to_nalgebra(&b.cov.symmetrized());
    let mut ce = to_nalgebra(&e.cov.symmetrized());
    let min_eig = |m: &DMatrix<f64>| m.clone().symmetric_eigenvalues().min();
    if d > 0 && (min_eig(&cb) < NEGATIVE_EIGEN_TOL || min_eig(&ce) < NEGATIVE_EIGEN_TOL) {
        let jitter = DMatrix::<f64>::identity(d, d) * FAD_JITTER;
        cb += &jitter;
        ce += jitter;
    }

    let eb = SymmetricEigen::new(cb.clone());
    let root_b = &eb.eigenvectors
        * DMatrix::from_diagonal(&eb.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eb.eigenvectors.transpose();
    let inner = &root_b * &ce * &root_b;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = inner.symmetric_eigenvalues().iter().map(|&l| l.max(0.0).sqrt()).sum();

    let value = mean_term + cb.trace() + ce.trace() - 2.0 * tr_sqrt;
    Ok(T::of(value.max(0.0)))
}

/// Non-negative entries summing to one within `1e-9`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<T>(Vec<T>);

impl<T: Scalar> ProbabilityVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Probability("empty distribution".into()));
        }
        if let Some(i) = values.iter().position(|&p| !p.is_finite() || p < T::zero()) {
            return Err(Error::Probability(format!("entry {i} is negative or non-finite")));
        }
        let total: f64 = values.iter().map(|p| p.as_f64()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Probability(format!("entries sum to {total}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(p + ε) / Σ(p + ε)`
    pub fn smoothed(&self, eps: T) -> Self {
        let total: T = self.0.iter().map(|&p| p + eps).sum();
        Self(self.0.iter().map(|&p| (p + eps) / total).collect())
    }
}

/// `Σ p_i ln(p_i / q_i)` in nats, with `0 · ln(0 / q) = 0`.
pub fn kl_div<T: Scalar>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::Dim {
            expected: p.len(),
            actual: q.len(),
        });
    }
    let mut total = T::zero();
    for (i, (&pi, &qi)) in p.as_slice().iter().zip(q.as_slice()).enumerate() {
        if pi == T::zero() {
            continue;
        }
        if qi == T::zero() {
            return Err(Error::Support(i));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total.max(T::zero()))
}

/// `softmax(v / temperature)`, max-subtracted.
pub fn to_distribution<T: Scalar>(v: &[T], temperature: T) -> Result<ProbabilityVector<T>> {
    if !(temperature > T::zero()) || !temperature.is_finite() {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    if v.is_empty() {
        return Err(Error::EmptyInput("distribution of an empty vector"));
    }
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = v.iter().map(|&x| ((x - max) / temperature).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(ProbabilityVector(exps.into_iter().map(|e| e / total).collect()))
}

/// Embedding cosine score between a reference and a generated track.
pub fn ibsc<T: Scalar>(reference: &[T], generated: &[T]) -> Result<f64> {
    cosine_similarity(reference, generated)
}

/// Averages over a manifest, serialized with the evaluation table's column
/// names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fad: f64,
    pub kl_div: f64,
    #[serde(rename = "ibsc_artw_gemus")]
    pub ibsc_artwork: f64,
    #[serde(rename = "ibsc_gtmus_gemus")]
    pub ibsc_groundtruth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub temperature: f64,
    pub smoothing: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            smoothing: KL_SMOOTHING,
        }
    }
}

/// Per-pair and set-level metrics for a manifest.
///
/// Generated tracks are looked up by `artwork_id` (one generation per
/// artwork), ground-truth tracks by `music_id`, artworks by `artwork_id`.
/// KL compares the ground-truth distribution `P` against the generated `Q`.
/// A single-pair manifest has no covariance, so its FAD is the distance
/// between point masses, `‖μ_b − μ_e‖²`.
pub fn evaluate_manifest(
    manifest: &PairingManifest,
    generated: &EmbeddingMatrix,
    groundtruth: &EmbeddingMatrix,
    artworks: &EmbeddingMatrix,
    options: &EvalOptions,
) -> Result<MetricReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no records"));
    }
    let lookup = |store: &'static str, m: &EmbeddingMatrix, id: &str| -> Result<Vec<f64>> {
        m.get(id)
            .map(|r| r.iter().map(|&x| x as f64).collect())
            .ok_or_else(|| Error::Lookup {
                id: id.to_owned(),
                store,
            })
    };

    let mut gen_rows = Vec::with_capacity(manifest.len());
    let mut gt_rows = Vec::with_capacity(manifest.len());
    let (mut kl, mut ib_art, mut ib_gt) = (0.0, 0.0, 0.0);
    for r in &manifest.records {
        let gen = lookup("generated", generated, &r.artwork_id)?;
        let gt = lookup("groundtruth", groundtruth, &r.music_id)?;
        let art = lookup("artworks", artworks, &r.artwork_id)?;

        let p = to_distribution(&gt, options.temperature)?.smoothed(options.smoothing);
        let q = to_distribution(&gen, options.temperature)?.smoothed(options.smoothing);
        kl += kl_div(&p, &q)?;
        ib_art += ibsc(&art, &gen)?;
        ib_gt += ibsc(&gt, &gen)?;
        gen_rows.push(gen);
        gt_rows.push(gt);
    }
    let n = manifest.len() as f64;

    let fit = |rows: &[Vec<f64>]| -> Result<GaussianStats<f64>> {
        if rows.len() == 1 {
            Ok(GaussianStats::point(rows[0].clone()))
        } else {
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            fit_gaussian_rows(&refs)
        }
    };
    let fad_value = fad(&fit(&gen_rows)?, &fit(&gt_rows)?)?;

    Ok(MetricReport {
        fad: fad_value,
        kl_div: kl / n,
        ibsc_artwork: ib_art / n,
        ibsc_groundtruth: ib_gt / n,
    })
}
