//! BIC-driven choice of the per-group dimensions `(q_1, …, q_K)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::GramMatrix;
use crate::em::{fit, FitConfig, FitResult};
use crate::error::{Result, RfcError};
use crate::rng::derive_seed;

/// Candidate dimension tuples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimGrid {
    pub candidates: Vec<Vec<usize>>,
}

impl DimGrid {
    /// Full product grid `{q_min, …, q_max}^K`, lexicographic order.
    pub fn product(k: usize, q_min: usize, q_max: usize) -> Self {
        let mut candidates: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..k {
            candidates = candidates
                .into_iter()
                .flat_map(|prefix| {
                    (q_min..=q_max).map(move |q| {
                        let mut c = prefix.clone();
                        c.push(q);
                        c
                    })
                })
                .collect();
        }
        Self { candidates }
    }

    pub fn single(dims: Vec<usize>) -> Self {
        Self { candidates: vec![dims] }
    }

    pub fn validate(&self, k: usize, p: usize) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(RfcError::Config("dimension grid is empty".into()));
        }
        for c in &self.candidates {
            if c.len() != k {
                return Err(RfcError::Config(format!("candidate {c:?} does not have {k} entries")));
            }
            if c.iter().any(|&q| q == 0 || q >= p) {
                return Err(RfcError::Config(format!("candidate {c:?} must satisfy 1 <= q < {p}")));
            }
        }
        Ok(())
    }
}

/// Number of free parameters `κ = ρ + ν + 2K + Q` with `ρ = Kp + K - 1`,
/// `ν = Σ q_g (2p - q_g - 1) / 2` and `Q = Σ q_g`.
pub fn count_free_params(k: usize, p: usize, dims: &[usize]) -> usize {
    let rho = k * p + k - 1;
    // q(2p - q - 1) is always even
    let nu: usize = dims.iter().map(|&q| q * (2 * p - q - 1) / 2).sum();
    let q_sum: usize = dims.iter().sum();
    rho + nu + 2 * k + q_sum
}

pub fn bic_score(loglik: f64, n: usize, kappa: usize) -> f64 {
    -2.0 * loglik + kappa as f64 * (n as f64).ln()
}

/// One row of the BIC table; `loglik` is `-∞` and `bic` is `+∞` for failed fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub dims: Vec<usize>,
    pub loglik: f64,
    pub kappa: usize,
    pub bic: f64,
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub best: FitResult,
    pub best_index: usize,
    pub table: Vec<BicRow>,
    /// Fit of every candidate, `None` where it failed.
    pub fits: Vec<Option<FitResult>>,
}

/// Fits every candidate with the same trimming and constraint settings and
/// returns the BIC minimizer. Ties go to the smaller `Σ q_g`, then to the
/// lexicographically smaller tuple.
pub fn select_dimensions(gamma: &DMatrix<f64>, gram: &GramMatrix, grid: &DimGrid, base: &FitConfig) -> Result<Selection> {
    let (n, p) = gamma.shape();
    grid.validate(base.k, p)?;
    let fits: Vec<Result<FitResult>> = grid
        .candidates
        .par_iter()
        .enumerate()
        .map(|(c, dims)| {
            let cfg = FitConfig { dims: dims.clone(), seed: derive_seed(base.seed, c as u64), ..base.clone() };
            fit(gamma, gram, &cfg)
        })
        .collect();

    let mut table = Vec::with_capacity(fits.len());
    let mut best: Option<(usize, FitResult)> = None;
    let mut last_err = String::new();
    let mut kept = Vec::with_capacity(fits.len());
    for (c, res) in fits.into_iter().enumerate() {
        let dims = grid.candidates[c].clone();
        let kappa = count_free_params(base.k, p, &dims);
        match res {
            Ok(f) => {
                let bic = bic_score(f.loglik, n, kappa);
                table.push(BicRow { dims, loglik: f.loglik, kappa, bic });
                let better = match &best {
                    None => true,
                    Some((b, _)) => is_better(&table[c], &table[*b]),
                };
                if better {
                    best = Some((c, f.clone()));
                }
                kept.push(Some(f));
            }
            Err(e) => {
                last_err = e.to_string();
                table.push(BicRow { dims, loglik: f64::NEG_INFINITY, kappa, bic: f64::INFINITY });
                kept.push(None);
            }
        }
    }
    match best {
        Some((best_index, best)) => Ok(Selection { best, best_index, table, fits: kept }),
        None => Err(RfcError::FitFailed { attempts: grid.candidates.len(), last: last_err }),
    }
}

fn is_better(a: &BicRow, b: &BicRow) -> bool {
    if a.bic != b.bic {
        return a.bic < b.bic;
    }
    let (qa, qb): (usize, usize) = (a.dims.iter().sum(), b.dims.iter().sum());
    if qa != qb {
        return qa < qb;
    }
    a.dims < b.dims
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Recount by parameter family: means, weights, orthonormal frames of
    /// `q` eigenfunctions in a `p`-space, main variances, one noise variance
    /// and one dimension per group.
    fn recount(k: usize, p: usize, dims: &[usize]) -> f64 {
        let means = (k * p) as f64;
        let weights = (k - 1) as f64;
        let frames: f64 = dims.iter().map(|&q| q as f64 * p as f64 - (q * (q + 1)) as f64 / 2.0).sum();
        let main: f64 = dims.iter().map(|&q| q as f64).sum();
        let noise = k as f64;
        let dims_param = k as f64;
        means + weights + frames + main + noise + dims_param
    }

    #[test]
    fn kappa_hand_values() {
        assert_eq!(count_free_params(2, 21, &[2, 3]), 148);
        assert_eq!(count_free_params(1, 2, &[1]), 6);
    }

    #[test]
    fn kappa_matches_recount_and_grows() {
        for k in 1..4 {
            for p in 2..25 {
                let grid = DimGrid::product(k, 1, (p - 1).min(5));
                for dims in &grid.candidates {
                    assert_relative_eq!(count_free_params(k, p, dims) as f64, recount(k, p, dims));
                    for g in 0..k {
                        if dims[g] < p - 1 {
                            let mut bigger = dims.clone();
                            bigger[g] += 1;
                            assert!(count_free_params(k, p, &bigger) > count_free_params(k, p, dims));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bic_arithmetic() {
        assert_relative_eq!(bic_score(0.0, 100, 1), 4.605_170_185_988_091, epsilon = 1e-12);
        assert!(bic_score(-10.0, 50, 5) > bic_score(-10.0, 50, 4));
        assert!(bic_score(-9.0, 50, 5) < bic_score(-10.0, 50, 5));
    }

    #[test]
    fn product_grid() {
        let g = DimGrid::product(2, 1, 3);
        assert_eq!(g.candidates.len(), 9);
        assert_eq!(g.candidates[0], vec![1, 1]);
        assert_eq!(g.candidates[5], vec![2, 3]);
        assert!(g.validate(2, 4).is_ok());
        assert!(g.validate(2, 3).is_err());
        assert!(DimGrid { candidates: vec![] }.validate(2, 5).is_err());
    }

    #[test]
    fn tie_breaks() {
        let a = BicRow { dims: vec![1, 3], loglik: 0.0, kappa: 1, bic: 5.0 };
        let b = BicRow { dims: vec![2, 3], loglik: 0.0, kappa: 1, bic: 5.0 };
        let c = BicRow { dims: vec![3, 1], loglik: 0.0, kappa: 1, bic: 5.0 };
        assert!(is_better(&a, &b));
        assert!(is_better(&a, &c));
        assert!(!is_better(&c, &a));
    }
}
