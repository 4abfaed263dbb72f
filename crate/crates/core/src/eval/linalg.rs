//! Dense symmetric linear algebra: cyclic Jacobi eigendecomposition and the
//! PSD square root built on it.

use crate::error::{Error, Result};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::dim("matrix row", n, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::dim("matrix data", n * n, data.len()));
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.n, other.n, "matrix dimension mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let mut s = self.clone();
        for i in 0..self.n {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Convergence threshold on the off-diagonal norm relative to the input norm.
pub const JACOBI_TOL: f64 = 1e-12;

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Unsorted eigenvalues.
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: Matrix,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `JACOBI_TOL * ‖A‖_F`, capped at `100 d²` rotations.
pub fn jacobi_eigen(a: &Matrix) -> Result<SymEigen> {
    let n = a.dim();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius();
    if scale == 0.0 || n < 2 {
        return Ok(SymEigen {
            values: (0..n).map(|i| m[(i, i)]).collect(),
            vectors: v,
        });
    }
    let threshold = JACOBI_TOL * scale;
    let max_rotations = 100 * n * n;
    let mut rotations = 0;
    loop {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        if rotations >= max_rotations {
            return Err(Error::Numeric(format!(
                "Jacobi did not converge in {max_rotations} rotations (off-diagonal {off:e})"
            )));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
                rotations += 1;
            }
        }
    }
    Ok(SymEigen {
        values: (0..n).map(|i| m[(i, i)]).collect(),
        vectors: v,
    })
}

/// Eigenvalues below `-NOT_PSD_REL * λ_max` reject the input.
pub const NOT_PSD_REL: f64 = 1e-6;
/// Eigenvalues below `CLAMP_REL * λ_max` are treated as zero.
pub const CLAMP_REL: f64 = 1e-10;

fn check_symmetric(a: &Matrix) -> Result<()> {
    let tol = 1e-10 * a.max_abs().max(1.0);
    let asym = a.max_asymmetry();
    if asym > tol {
        return Err(Error::param(format!("matrix is not symmetric (max |a_ij - a_ji| = {asym:e})")));
    }
    Ok(())
}

/// Clamped eigenvalues of a symmetric PSD matrix.
pub fn psd_eigen(a: &Matrix) -> Result<SymEigen> {
    check_symmetric(a)?;
    let mut eig = jacobi_eigen(a)?;
    let max = eig.values.iter().cloned().fold(0.0f64, f64::max);
    for v in &mut eig.values {
        if *v < -NOT_PSD_REL * max {
            return Err(Error::NotPsd { eigenvalue: *v, max });
        }
        if *v < CLAMP_REL * max {
            *v = 0.0;
        }
    }
    Ok(eig)
}

/// Principal square root `S` with `S S = A` for symmetric PSD `A`.
pub fn matrix_sqrt_psd(a: &Matrix) -> Result<Matrix> {
    let eig = psd_eigen(a)?;
    let n = a.dim();
    let roots: Vec<f64> = eig.values.iter().map(|v| v.sqrt()).collect();
    let mut s = Matrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..n)
                .map(|k| eig.vectors[(i, k)] * roots[k] * eig.vectors[(j, k)])
                .sum();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(matrix_sqrt_psd(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let s = matrix_sqrt_psd(&Matrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-15 && (s[(1, 1)] - 3.0).abs() < 1e-15);
        assert_eq!(s[(0, 1)], 0.0);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(matrix_sqrt_psd(&a), Err(Error::Parameter(_))));
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(matrix_sqrt_psd(&b), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let b = Matrix::from_diag(&[1.0, -1e-12]);
        let s = matrix_sqrt_psd(&b).unwrap();
        assert_eq!(s[(1, 1)], 0.0);
    }

    #[test]
    fn eigen_reconstructs() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 3.0, 0.5],
            vec![-2.0, 0.5, 5.0],
        ])
        .unwrap();
        let e = jacobi_eigen(&a).unwrap();
        let rebuilt = e
            .vectors
            .matmul(&Matrix::from_diag(&e.values))
            .matmul(&e.vectors.transpose());
        assert!(rebuilt.sub(&a).frobenius() < 1e-12);
        assert!((e.values.iter().sum::<f64>() - a.trace()).abs() < 1e-12);
    }
}
