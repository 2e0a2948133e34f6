//! Dense Hermitian generalized eigenproblems A v = μ B v with B positive definite.

use faer::{c64, Mat, Side};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("mass matrix is not positive definite")]
    MassNotDefinite,
    #[error("eigensolver failed")]
    Eigensolver,
    #[error("sparse factorization failed")]
    Factorization,
}

pub struct RealEig {
    pub values: Vec<f64>,
    /// B-orthonormal eigenvectors as columns (present when requested).
    pub vectors: Option<Mat<f64>>,
}

pub struct ComplexEig {
    pub values: Vec<f64>,
    pub vectors: Option<Mat<c64>>,
}

/// Solves the real symmetric-definite problem.
pub fn gen_eigh(a: &Mat<f64>, b: &Mat<f64>, vectors: bool) -> Result<RealEig, LinalgError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(RealEig { values: vec![], vectors: vectors.then(|| Mat::zeros(0, 0)) });
    }
    let llt = b.llt(Side::Lower).map_err(|_| LinalgError::MassNotDefinite)?;
    let l = llt.L().to_owned();
    let mut x = a.clone();
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut y = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(y.as_mut());
    let c = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (y[(i, j)] + y[(j, i)]));
    if vectors {
        let e = c.self_adjoint_eigen(Side::Lower).map_err(|_| LinalgError::Eigensolver)?;
        let values: Vec<f64> = (0..n).map(|k| e.S().column_vector()[k]).collect();
        let mut v = e.U().to_owned();
        l.transpose().solve_upper_triangular_in_place(v.as_mut());
        Ok(RealEig { values, vectors: Some(v) })
    } else {
        let values = c.self_adjoint_eigenvalues(Side::Lower).map_err(|_| LinalgError::Eigensolver)?;
        Ok(RealEig { values, vectors: None })
    }
}

/// Solves the complex Hermitian-definite problem.
pub fn gen_eigh_complex(a: &Mat<c64>, b: &Mat<c64>, vectors: bool) -> Result<ComplexEig, LinalgError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(ComplexEig { values: vec![], vectors: vectors.then(|| Mat::zeros(0, 0)) });
    }
    let llt = b.llt(Side::Lower).map_err(|_| LinalgError::MassNotDefinite)?;
    let l = llt.L().to_owned();
    let mut x = a.clone();
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut y = x.adjoint().to_owned();
    l.solve_lower_triangular_in_place(y.as_mut());
    let c = Mat::<c64>::from_fn(n, n, |i, j| (y[(i, j)] + y[(j, i)].conj()) * 0.5);
    if vectors {
        let e = c.self_adjoint_eigen(Side::Lower).map_err(|_| LinalgError::Eigensolver)?;
        let values: Vec<f64> = (0..n).map(|k| e.S().column_vector()[k].re).collect();
        let mut v = e.U().to_owned();
        l.adjoint().solve_upper_triangular_in_place(v.as_mut());
        Ok(ComplexEig { values, vectors: Some(v) })
    } else {
        let values = c.self_adjoint_eigenvalues(Side::Lower).map_err(|_| LinalgError::Eigensolver)?;
        Ok(ComplexEig { values, vectors: None })
    }
}

/// max_k ‖(A − μ_k B) v_k‖ / (1 + |μ_k|) over the first `count` pairs.
pub fn residual_real(a: &Mat<f64>, b: &Mat<f64>, vals: &[f64], v: &Mat<f64>, count: usize) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..count.min(vals.len()) {
        let col = v.col(k);
        let r = a * col - (b * col) * vals[k];
        worst = worst.max(r.norm_l2() / (1.0 + vals[k].abs()));
    }
    worst
}

pub fn residual_complex(a: &Mat<c64>, b: &Mat<c64>, vals: &[f64], v: &Mat<c64>, count: usize) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..count.min(vals.len()) {
        let col = v.col(k);
        let bc = b * col;
        let ac = a * col;
        let mut s = 0.0;
        for i in 0..ac.nrows() {
            let d = ac[i] - bc[i] * vals[k];
            s += d.re * d.re + d.im * d.im;
        }
        worst = worst.max(s.sqrt() / (1.0 + vals[k].abs()));
    }
    worst
}
