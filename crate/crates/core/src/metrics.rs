//! Classification rate, trimmed-curve reassignment and outlier reports.

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::basis::GramMatrix;
use crate::em::{log_densities, FitResult};
use crate::error::{Result, RfcError};

fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (g, v) in row.enumerate() {
        if v > best.1 {
            best = (g, v);
        }
    }
    best.0
}

/// Zero-based cluster label of every curve. Retained curves take the
/// posterior argmax; trimmed curves the argmax of `D_g(x_i)` at the fitted
/// parameters. Ties go to the lower group.
pub fn reassign_trimmed(fit: &FitResult, gamma: &DMatrix<f64>, gram: &GramMatrix) -> Result<Vec<usize>> {
    let logs = log_densities(gamma, &fit.params, gram)?;
    Ok((0..gamma.nrows())
        .map(|i| {
            if fit.trimmed.contains(i) {
                argmax(logs.row(i).iter().copied())
            } else {
                argmax(fit.posteriors.tau.row(i).iter().copied())
            }
        })
        .collect())
}

/// Zero-based labels for retained curves, `None` for trimmed ones.
pub fn hard_labels(fit: &FitResult) -> Vec<Option<usize>> {
    (0..fit.trimmed.n)
        .map(|i| {
            if fit.trimmed.contains(i) {
                None
            } else {
                Some(argmax(fit.posteriors.tau.row(i).iter().copied()))
            }
        })
        .collect()
}

/// Correct classification rate maximized over the `K!` relabelings of the
/// prediction. Rows whose truth is `None` (planted outliers) are excluded.
pub fn ccr(predicted: &[usize], truth: &[Option<usize>], k: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(RfcError::Domain(format!(
            "{} predicted labels for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    if let Some(&l) = predicted.iter().chain(truth.iter().flatten()).find(|&&l| l >= k) {
        return Err(RfcError::Domain(format!("label {} outside 1..={k}", l + 1)));
    }
    let rows: Vec<(usize, usize)> = predicted
        .iter()
        .zip(truth)
        .filter_map(|(&p, t)| t.map(|t| (p, t)))
        .collect();
    if rows.is_empty() {
        return Err(RfcError::Domain("no labelled rows to score".into()));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for &(p, t) in &rows {
        confusion[p][t] += 1;
    }
    let best = (0..k)
        .permutations(k)
        .map(|perm| (0..k).map(|p| confusion[p][perm[p]]).sum::<usize>())
        .max()
        .unwrap_or(0);
    Ok(best as f64 / rows.len() as f64)
}

/// Rate where planted outliers count as correct only when trimmed and clean
/// curves only when retained with a matching (relabelled) cluster.
pub fn ccr_with_outlier_class(predicted: &[Option<usize>], truth: &[Option<usize>], k: usize) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(RfcError::Domain("label vectors must be nonempty and of equal length".into()));
    }
    let best = (0..k)
        .permutations(k)
        .map(|perm| {
            predicted
                .iter()
                .zip(truth)
                .filter(|(p, t)| match (p, t) {
                    (None, None) => true,
                    (Some(p), Some(t)) => perm[*p] == *t,
                    _ => false,
                })
                .count()
        })
        .max()
        .unwrap_or(0);
    Ok(best as f64 / truth.len() as f64)
}

/// Identifiers of the trimmed curves, least likely first.
pub fn outlier_report<'a>(fit: &FitResult, ids: &'a [String]) -> Vec<&'a str> {
    fit.trimmed
        .indices
        .iter()
        .copied()
        .sorted_by(|&a, &b| {
            fit.log_density[a]
                .partial_cmp(&fit.log_density[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        })
        .map(|i| ids[i].as_str())
        .collect()
}
