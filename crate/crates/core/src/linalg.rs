use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order
/// and each eigenvector signed so that its largest-magnitude entry is positive.
pub(crate) fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let p = m.nrows();
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let mut best = 0usize;
        for r in 1..p {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Numerically stable `log(sum(exp(x)))`.
pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
