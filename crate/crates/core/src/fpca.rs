//! Weighted functional principal component analysis in coefficient space.
//!
//! With coefficients `Γ` in a basis with Gram matrix `W` and weights `τ`
//! (responsibilities of one group), the weighted covariance operator reduces
//! to the symmetric `p × p` matrix
//!
//! ```text
//! M = (1/n_g) · W^{1/2} Γ_cᵀ diag(τ) Γ_c W^{1/2},    n_g = Σ τ_i
//! ```
//!
//! where `Γ_c` holds the coefficients centred at the `τ`-weighted mean. Its
//! unit eigenvectors `u_j` map back to eigenfunction coefficients
//! `β_j = W^{-1/2} u_j`, which satisfy `βᵀ W β = I`.

use nalgebra::{DMatrix, DVector};

use crate::basis::GramMatrix;
use crate::error::{Result, RfcError};
use crate::linalg::sym_eigen_desc;

#[derive(Clone, Debug)]
pub struct FpcaResult {
    /// Nonincreasing, nonnegative.
    pub eigenvalues: DVector<f64>,
    /// Column `j` is the coefficient vector of eigenfunction `j`.
    pub beta: DMatrix<f64>,
    /// `n × p`; row `i` holds the scores of curve `i`.
    pub scores: DMatrix<f64>,
    /// Weighted mean coefficients.
    pub mean: DVector<f64>,
    /// `trace(M)`, the total weighted variance.
    pub total_variance: f64,
    /// `n_g = Σ τ_i`.
    pub mass: f64,
}

fn check_weights(tau: &[f64], n: usize) -> Result<f64> {
    if tau.len() != n {
        return Err(RfcError::Domain(format!("{} weights for {} curves", tau.len(), n)));
    }
    if tau.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
        return Err(RfcError::Domain("weights must lie in [0, 1]".into()));
    }
    let mass: f64 = tau.iter().sum();
    if !(mass > 0.0) {
        return Err(RfcError::DegenerateGroup { group: 0, mass });
    }
    Ok(mass)
}

/// Subtracts the `τ`-weighted mean from every row (zero-weight rows included).
pub fn weighted_center(gamma: &DMatrix<f64>, tau: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mass = check_weights(tau, gamma.nrows())?;
    let p = gamma.ncols();
    let mut mean = DVector::zeros(p);
    for (i, &t) in tau.iter().enumerate() {
        if t != 0.0 {
            mean.axpy(t, &gamma.row(i).transpose(), 1.0);
        }
    }
    mean /= mass;
    let mut centered = gamma.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    Ok((centered, mean))
}

pub fn weighted_fpca(gamma: &DMatrix<f64>, tau: &[f64], gram: &GramMatrix) -> Result<FpcaResult> {
    if gram.dim() != gamma.ncols() {
        return Err(RfcError::Domain(format!(
            "Gram matrix is {0}×{0} but curves have {1} coefficients",
            gram.dim(),
            gamma.ncols()
        )));
    }
    let (centered, mean) = weighted_center(gamma, tau)?;
    let mass: f64 = tau.iter().sum();
    let y = &centered * gram.half();

    // M = (1/n_g) Yᵀ diag(τ) Y, accumulated from weighted rows only
    let p = gamma.ncols();
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (i, &t) in tau.iter().enumerate() {
        if t != 0.0 {
            let row = y.row(i);
            m.ger(t / mass, &row.transpose(), &row.transpose(), 1.0);
        }
    }
    let total_variance = m.trace();
    let (mut eigenvalues, u) = sym_eigen_desc(&m);
    eigenvalues.iter_mut().for_each(|v| *v = v.max(0.0));
    let beta = gram.inv_half() * &u;
    let scores = y * &u;
    Ok(FpcaResult { eigenvalues, beta, scores, mean, total_variance, mass })
}
