use super::linalg::{matrix_sqrt_psd, psd_eigen, Matrix};
use crate::error::{Error, Result};

/// Empirical mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub n: usize,
}

impl GaussianStats {
    pub fn new(mean: Vec<f64>, cov: Matrix, n: usize) -> Result<Self> {
        if cov.dim() != mean.len() {
            return Err(Error::dim("covariance size", mean.len(), cov.dim()));
        }
        if n < 2 {
            return Err(Error::InsufficientData { need: 2, got: n });
        }
        Ok(Self { mean, cov, n })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Pairwise (tree) summation of equally sized vectors.
fn tree_sum(items: &[Vec<f64>], width: usize) -> Vec<f64> {
    match items.len() {
        0 => vec![0.0; width],
        1 => items[0].clone(),
        n => {
            let (l, r) = items.split_at(n / 2);
            let mut a = tree_sum(l, width);
            for (x, y) in a.iter_mut().zip(tree_sum(r, width)) {
                *x += y;
            }
            a
        }
    }
}

/// Sample mean and `n - 1` covariance. Reductions use pairwise summation in
/// input order, so results do not depend on thread scheduling.
pub fn gaussian_stats(features: &[Vec<f64>]) -> Result<GaussianStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(Error::dim("feature vector", d, bad.len()));
    }
    let mean: Vec<f64> = tree_sum(features, d).into_iter().map(|s| s / n as f64).collect();
    let outer: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            let c: Vec<f64> = f.iter().zip(&mean).map(|(x, m)| x - m).collect();
            let mut o = Vec::with_capacity(d * d);
            for i in 0..d {
                for j in 0..d {
                    o.push(c[i] * c[j]);
                }
            }
            o
        })
        .collect();
    let cov: Vec<f64> = tree_sum(&outer, d * d)
        .into_iter()
        .map(|s| s / (n - 1) as f64)
        .collect();
    GaussianStats::new(mean, Matrix::from_vec(d, cov)?.symmetrized(), n)
}

/// `‖μ₁-μ₂‖² + Tr(Σ₁ + Σ₂ - 2 (Σ₁Σ₂)^{1/2})`.
///
/// The trace of the product root is taken as `Σ √λᵢ` over the eigenvalues of
/// the symmetric matrix `√Σ₁ Σ₂ √Σ₁`, which shares them with `Σ₁Σ₂`.
pub fn frechet_distance(s1: &GaussianStats, s2: &GaussianStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::param(format!(
            "Fréchet distance between {}-d and {}-d statistics",
            s1.dim(),
            s2.dim()
        )));
    }
    let mean_term: f64 = s1.mean.iter().zip(&s2.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let root1 = matrix_sqrt_psd(&s1.cov)?;
    let inner = root1.matmul(&s2.cov).matmul(&root1).symmetrized();
    let tr_root: f64 = psd_eigen(&inner)?.values.iter().map(|v| v.sqrt()).sum();
    let fd = mean_term + s1.cov.trace() + s2.cov.trace() - 2.0 * tr_root;
    if fd < 0.0 {
        let scale = 1.0 + s1.cov.trace() + s2.cov.trace() + mean_term;
        if fd < -1e-8 * scale {
            return Err(Error::Numeric(format!("Fréchet distance came out negative ({fd:e})")));
        }
        return Ok(0.0);
    }
    Ok(fd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(mean: f64, var: f64) -> GaussianStats {
        GaussianStats::new(vec![mean], Matrix::from_diag(&[var]), 100).unwrap()
    }

    #[test]
    fn two_point_formula() {
        let s = gaussian_stats(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(s.mean, vec![1.0, 1.0]);
        assert_eq!(s.cov.as_slice(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn identical_vectors_have_zero_covariance() {
        let s = gaussian_stats(&vec![vec![3.0, -1.0, 2.0]; 7]).unwrap();
        assert!(s.cov.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(gaussian_stats(&[vec![1.0]]), Err(Error::InsufficientData { .. })));
        assert!(matches!(gaussian_stats(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Dimension { .. })));
        let a = scalar(0.0, 1.0);
        let b = GaussianStats::new(vec![0.0, 0.0], Matrix::identity(2), 3).unwrap();
        assert!(matches!(frechet_distance(&a, &b), Err(Error::Parameter(_))));
    }

    #[test]
    fn scalar_closed_forms() {
        assert!((frechet_distance(&scalar(0.0, 1.0), &scalar(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        let (s1, s2) = (0.7f64, 2.3f64);
        let fd = frechet_distance(&scalar(0.0, s1 * s1), &scalar(0.0, s2 * s2)).unwrap();
        assert!((fd - (s1 - s2).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn zero_for_identical_stats() {
        let s = gaussian_stats(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5], vec![1.0, 3.0]]).unwrap();
        assert!(frechet_distance(&s, &s).unwrap().abs() < 1e-8);
    }
}
