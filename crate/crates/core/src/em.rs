//! Trimmed, constrained EM for functional mixtures.
//!
//! Group `g` models the principal component scores `c_jg(x)` of a curve as
//! independent centred Gaussians with variances `a_1g, …, a_{q_g}g` on the
//! leading `q_g` components and a shared `b_g` on the remaining ones. Every
//! iteration
//!
//! 1. evaluates `D_g(x_i) = π_g · Π_j N(c_ijg; 0, σ²_jg)` and trims the
//!    `n - ⌊n(1-α)⌋` curves with the smallest `D(x_i) = Σ_g D_g(x_i)`;
//! 2. sets posteriors `τ_ig = D_g / D` on retained curves and `0` on trimmed ones;
//! 3. re-estimates weights, means and eigenfunctions by weighted FPCA and
//!    projects the scatter parameters onto the ratio constraints.
//!
//! Starts are drawn from small random subsets and the best trimmed
//! log-likelihood over all starts is returned.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::GramMatrix;
use crate::constraints::{enforce, ScatterSet};
use crate::error::{Result, RfcError};
use crate::fpca::weighted_fpca;
use crate::linalg::log_sum_exp;
use crate::rng::{derive_seed, rng_from_seed, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative mass below which a group counts as empty.
pub const MIN_GROUP_MASS: f64 = 1e-6;

/// Slack allowed before a decrease of the target counts as a violation.
pub const MONOTONICITY_SLACK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub k: usize,
    pub p: usize,
    pub dims: Vec<usize>,
    pub pi: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    /// Per group, column `j` holds the coefficients `β_j` of eigenfunction `j`.
    pub eigen: Vec<DMatrix<f64>>,
    pub scatter: ScatterSet,
}

/// `n × K` responsibilities; trimmed rows are exactly zero.
#[derive(Clone, Debug)]
pub struct Posteriors {
    pub tau: DMatrix<f64>,
}

impl Posteriors {
    pub fn column(&self, g: usize) -> Vec<f64> {
        self.tau.column(g).iter().copied().collect()
    }
}

/// Indices of trimmed observations, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimSet {
    pub indices: Vec<usize>,
    pub n: usize,
}

impl TrimSet {
    pub fn none(n: usize) -> Self {
        Self { indices: Vec::new(), n }
    }

    /// `η(x_i)`: `false` for trimmed curves.
    pub fn eta(&self) -> Vec<bool> {
        let mut eta = vec![true; self.n];
        for &i in &self.indices {
            eta[i] = false;
        }
        eta
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `⌊n(1-α)⌋`, the number of curves kept by the trimming step.
pub fn retained_count(n: usize, alpha: f64) -> usize {
    // the 1e-9 guards against products such as 10 * (1 - 0.3) = 6.999...
    let kept = ((n as f64) * (1.0 - alpha) + 1e-9).floor() as usize;
    kept.min(n)
}

pub fn trim_count(n: usize, alpha: f64) -> usize {
    n - retained_count(n, alpha)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub dims: Vec<usize>,
    pub alpha: f64,
    pub d1: f64,
    pub d2: f64,
    pub nstart: usize,
    pub iter_max: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 2,
            dims: vec![2, 2],
            alpha: 0.1,
            d1: 10.0,
            d2: 10.0,
            nstart: 100,
            iter_max: 20,
            tol: 1e-8,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.k == 0 {
            return Err(RfcError::Config("K must be at least 1".into()));
        }
        if self.dims.len() != self.k {
            return Err(RfcError::Config(format!("{} dimensions given for K = {}", self.dims.len(), self.k)));
        }
        if let Some(&q) = self.dims.iter().find(|&&q| q == 0 || q > p) {
            return Err(RfcError::Config(format!("dimension {q} outside 1..={p}")));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(RfcError::Config(format!("alpha = {} outside [0, 1)", self.alpha)));
        }
        if !(self.d1 >= 1.0 && self.d2 >= 1.0) {
            return Err(RfcError::Config("d1 and d2 must be >= 1".into()));
        }
        if self.nstart == 0 {
            return Err(RfcError::Config("nstart must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(RfcError::Config("tol must be nonnegative".into()));
        }
        let h = init_subset_size(&self.dims);
        if n < self.k * h {
            return Err(RfcError::TooFewCurves { needed: self.k * h, got: n });
        }
        if retained_count(n, self.alpha) == 0 {
            return Err(RfcError::Config("trimming level discards every curve".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: ModelParams,
    pub posteriors: Posteriors,
    pub trimmed: TrimSet,
    /// Trimmed log-likelihood at the returned state.
    pub loglik: f64,
    /// `log D(x_i)` for every curve at the returned parameters.
    pub log_density: Vec<f64>,
    /// M-steps performed by the winning start.
    pub iterations: usize,
    pub converged: bool,
    /// Target after every T/E evaluation of the winning start.
    pub trace: Vec<f64>,
    /// Decreases of the target beyond [`MONOTONICITY_SLACK`], over all starts.
    pub monotonicity_violations: usize,
    pub best_start: usize,
    pub failed_starts: usize,
}

/// Score-space projection of a group: `(W β_g, constant part of log D_g, variances)`.
struct GroupKernel {
    proj: DMatrix<f64>,
    offset: f64,
    inv_var: Vec<f64>,
}

fn kernels(params: &ModelParams, gram: &GramMatrix) -> Result<Vec<GroupKernel>> {
    (0..params.k)
        .map(|g| {
            let vars: Vec<f64> = (0..params.p).map(|j| params.scatter.variance(g, j)).collect();
            if let Some(v) = vars.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(RfcError::Numerical(format!("group {g} has invalid variance {v}")));
            }
            let log_det: f64 = vars.iter().map(|v| LN_2PI + v.ln()).sum();
            Ok(GroupKernel {
                proj: gram.w() * &params.eigen[g],
                offset: params.pi[g].ln() - 0.5 * log_det,
                inv_var: vars.iter().map(|v| 1.0 / v).collect(),
            })
        })
        .collect()
}

/// `log D_g(x)` for a single coefficient vector.
pub fn log_group_density(x: &DVector<f64>, g: usize, params: &ModelParams, gram: &GramMatrix) -> Result<f64> {
    let mut log = params.pi[g].ln();
    let centered = x - &params.means[g];
    let scores = (centered.transpose() * gram.w() * &params.eigen[g]).transpose();
    for j in 0..params.p {
        let v = params.scatter.variance(g, j);
        if !(v > 0.0) {
            return Err(RfcError::Numerical(format!("group {g} has nonpositive variance")));
        }
        log -= 0.5 * (LN_2PI + v.ln() + scores[j] * scores[j] / v);
    }
    Ok(log)
}

/// `n × K` matrix of `log D_g(x_i)`.
pub fn log_densities(gamma: &DMatrix<f64>, params: &ModelParams, gram: &GramMatrix) -> Result<DMatrix<f64>> {
    let n = gamma.nrows();
    let ks = kernels(params, gram)?;
    let mut out = DMatrix::zeros(n, params.k);
    let mut centered = gamma.clone();
    for (g, kern) in ks.iter().enumerate() {
        centered.copy_from(gamma);
        let mean_t = params.means[g].transpose();
        for mut row in centered.row_iter_mut() {
            row -= &mean_t;
        }
        let scores = &centered * &kern.proj;
        for i in 0..n {
            let quad: f64 = scores.row(i).iter().zip(&kern.inv_var).map(|(c, iv)| c * c * iv).sum();
            out[(i, g)] = kern.offset - 0.5 * quad;
        }
    }
    Ok(out)
}

struct EStep {
    posteriors: Posteriors,
    trimmed: TrimSet,
    log_total: Vec<f64>,
    loglik: f64,
}

fn e_step_from_logs(log_dens: &DMatrix<f64>, alpha: f64) -> Result<EStep> {
    let (n, k) = log_dens.shape();
    let log_total: Vec<f64> = (0..n)
        .map(|i| {
            let row: Vec<f64> = log_dens.row(i).iter().copied().collect();
            log_sum_exp(&row)
        })
        .collect();
    if let Some(i) = log_total.iter().position(|v| v.is_nan()) {
        return Err(RfcError::Numerical(format!("density of observation {i} is NaN")));
    }
    let n_trim = trim_count(n, alpha);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| log_total[a].partial_cmp(&log_total[b]).unwrap().then(a.cmp(&b)));
    let mut indices = order[..n_trim].to_vec();
    indices.sort_unstable();
    let trimmed = TrimSet { indices, n };

    let mut tau = DMatrix::zeros(n, k);
    let mut loglik = 0.0;
    let mut is_trimmed = vec![false; n];
    for &i in &trimmed.indices {
        is_trimmed[i] = true;
    }
    for i in 0..n {
        if is_trimmed[i] {
            continue;
        }
        let total = log_total[i];
        if total == f64::NEG_INFINITY {
            return Err(RfcError::DegenerateModel(i));
        }
        loglik += total;
        let mut row_sum = 0.0;
        for g in 0..k {
            let t = (log_dens[(i, g)] - total).exp();
            tau[(i, g)] = t;
            row_sum += t;
        }
        for g in 0..k {
            tau[(i, g)] /= row_sum;
        }
    }
    Ok(EStep { posteriors: Posteriors { tau }, trimmed, log_total, loglik })
}

/// Trimming and posterior computation at fixed parameters.
///
/// The trimmed set holds the `n - ⌊n(1-α)⌋` curves with the smallest mixture
/// density, ties going to the lower index.
pub fn t_and_e_step(
    gamma: &DMatrix<f64>,
    params: &ModelParams,
    alpha: f64,
    gram: &GramMatrix,
) -> Result<(Posteriors, TrimSet)> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(RfcError::Config(format!("alpha = {alpha} outside [0, 1)")));
    }
    let e = e_step_from_logs(&log_densities(gamma, params, gram)?, alpha)?;
    Ok((e.posteriors, e.trimmed))
}

/// `π_g = Σ_i τ_ig / ⌊n(1-α)⌋`.
pub fn update_weights(posteriors: &Posteriors, n: usize, alpha: f64) -> Vec<f64> {
    let denom = retained_count(n, alpha) as f64;
    (0..posteriors.tau.ncols())
        .map(|g| posteriors.tau.column(g).sum() / denom)
        .collect()
}

/// Means, eigenfunctions and constrained scatter of every group.
#[derive(Clone, Debug)]
pub struct GroupUpdate {
    pub means: Vec<DVector<f64>>,
    pub eigen: Vec<DMatrix<f64>>,
    pub scatter: ScatterSet,
}

pub fn update_group_model(
    gamma: &DMatrix<f64>,
    posteriors: &Posteriors,
    gram: &GramMatrix,
    dims: &[usize],
    d1: f64,
    d2: f64,
) -> Result<GroupUpdate> {
    let (n, p) = gamma.shape();
    let k = dims.len();
    let mut means = Vec::with_capacity(k);
    let mut eigen = Vec::with_capacity(k);
    let mut a = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    for (g, &q) in dims.iter().enumerate() {
        let tau = posteriors.column(g);
        let mass: f64 = tau.iter().sum();
        if !(mass >= MIN_GROUP_MASS * n as f64) {
            return Err(RfcError::DegenerateGroup { group: g, mass });
        }
        let f = weighted_fpca(gamma, &tau, gram)?;
        let ag: Vec<f64> = f.eigenvalues.iter().take(q).copied().collect();
        let bg = if q < p {
            ((f.total_variance - ag.iter().sum::<f64>()) / (p - q) as f64).max(0.0)
        } else {
            ag[q - 1]
        };
        means.push(f.mean);
        eigen.push(f.beta);
        a.push(ag);
        b.push(bg);
        counts.push(mass);
    }
    let raw = ScatterSet { a, b, counts, dims: dims.to_vec(), p };
    let scatter = enforce(&raw, d1, d2)?;
    Ok(GroupUpdate { means, eigen, scatter })
}

/// `Σ_{i ∉ I} log Σ_g D_g(x_i)`.
pub fn trimmed_loglik(gamma: &DMatrix<f64>, params: &ModelParams, trimmed: &TrimSet, gram: &GramMatrix) -> Result<f64> {
    let logs = log_densities(gamma, params, gram)?;
    let eta = trimmed.eta();
    Ok((0..gamma.nrows())
        .filter(|&i| eta[i])
        .map(|i| {
            let row: Vec<f64> = logs.row(i).iter().copied().collect();
            log_sum_exp(&row)
        })
        .sum())
}

/// Size of each random starting subset: `max_g q_g + 2`.
pub fn init_subset_size(dims: &[usize]) -> usize {
    dims.iter().copied().max().unwrap_or(0) + 2
}

/// Random initial parameters from `K` disjoint subsets of size `max q + 2`.
pub fn random_init(
    gamma: &DMatrix<f64>,
    gram: &GramMatrix,
    dims: &[usize],
    d1: f64,
    d2: f64,
    rng: &mut Rng,
) -> Result<ModelParams> {
    let (n, p) = gamma.shape();
    let k = dims.len();
    let h = init_subset_size(dims);
    if n < k * h {
        return Err(RfcError::TooFewCurves { needed: k * h, got: n });
    }
    let picked = sample(rng, n, k * h).into_vec();
    let mut tau = DMatrix::zeros(n, k);
    for (pos, &i) in picked.iter().enumerate() {
        tau[(i, pos / h)] = 1.0;
    }
    let upd = update_group_model(gamma, &Posteriors { tau }, gram, dims, d1, d2)?;
    Ok(ModelParams {
        k,
        p,
        dims: dims.to_vec(),
        pi: vec![1.0 / k as f64; k],
        means: upd.means,
        eigen: upd.eigen,
        scatter: upd.scatter,
    })
}

/// Outcome of a single start of the EM.
#[derive(Clone, Debug)]
pub struct StartOutcome {
    pub result: FitResult,
    pub violations: usize,
}

/// Runs one start: random initialization followed by T/E/M iterations.
pub fn run_start(gamma: &DMatrix<f64>, gram: &GramMatrix, cfg: &FitConfig, start: usize) -> Result<StartOutcome> {
    let n = gamma.nrows();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, start as u64));
    let mut params = random_init(gamma, gram, &cfg.dims, cfg.d1, cfg.d2, &mut rng)?;
    let mut e = e_step_from_logs(&log_densities(gamma, &params, gram)?, cfg.alpha)?;
    let mut trace = vec![e.loglik];
    let mut violations = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.iter_max {
        let pi = update_weights(&e.posteriors, n, cfg.alpha);
        let upd = update_group_model(gamma, &e.posteriors, gram, &cfg.dims, cfg.d1, cfg.d2)?;
        let next = ModelParams { pi, means: upd.means, eigen: upd.eigen, scatter: upd.scatter, ..params };
        let next_e = e_step_from_logs(&log_densities(gamma, &next, gram)?, cfg.alpha)?;
        iterations += 1;
        let prev = e.loglik;
        let curr = next_e.loglik;
        trace.push(curr);
        if curr < prev - MONOTONICITY_SLACK {
            violations += 1;
            log::debug!("start {start}, iteration {iterations}: target fell from {prev} to {curr}");
        }
        params = next;
        e = next_e;
        if (curr - prev).abs() <= cfg.tol * (1.0 + prev.abs()) {
            converged = true;
            break;
        }
    }

    let result = FitResult {
        params,
        posteriors: e.posteriors,
        trimmed: e.trimmed,
        loglik: e.loglik,
        log_density: e.log_total,
        iterations,
        converged,
        trace,
        monotonicity_violations: violations,
        best_start: start,
        failed_starts: 0,
    };
    Ok(StartOutcome { result, violations })
}

/// Multi-start trimmed constrained EM. Starts run in parallel; the one with
/// the highest target wins, ties going to the lower start index.
pub fn fit(gamma: &DMatrix<f64>, gram: &GramMatrix, cfg: &FitConfig) -> Result<FitResult> {
    let (n, p) = gamma.shape();
    cfg.validate(n, p)?;
    if gram.dim() != p {
        return Err(RfcError::Domain(format!("Gram matrix is {0}×{0}, curves have {p} coefficients", gram.dim())));
    }
    let outcomes: Vec<Result<StartOutcome>> =
        (0..cfg.nstart).into_par_iter().map(|s| run_start(gamma, gram, cfg, s)).collect();

    let mut best: Option<FitResult> = None;
    let mut failed = 0;
    let mut violations = 0;
    let mut last_err = String::new();
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                violations += o.violations;
                let better = match &best {
                    None => true,
                    Some(b) => o.result.loglik > b.loglik,
                };
                if better {
                    best = Some(o.result);
                }
            }
            Err(e) => {
                failed += 1;
                last_err = e.to_string();
            }
        }
    }
    match best {
        Some(mut r) => {
            r.monotonicity_violations = violations;
            r.failed_starts = failed;
            if violations > 0 {
                log::warn!("{violations} decreases of the trimmed log-likelihood observed across starts");
            }
            Ok(r)
        }
        None => Err(RfcError::FitFailed { attempts: cfg.nstart, last: last_err }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use itertools::Itertools;

    fn unit_params(k: usize, p: usize, q: usize) -> ModelParams {
        ModelParams {
            k,
            p,
            dims: vec![q; k],
            pi: vec![1.0 / k as f64; k],
            means: vec![DVector::zeros(p); k],
            eigen: vec![DMatrix::identity(p, p); k],
            scatter: ScatterSet {
                a: vec![vec![1.0; q]; k],
                b: vec![1.0; k],
                counts: vec![1.0; k],
                dims: vec![q; k],
                p,
            },
        }
    }

    #[test]
    fn retained_counts() {
        assert_eq!(retained_count(115, 0.1), 103);
        assert_eq!(trim_count(115, 0.1), 12);
        assert_eq!(trim_count(10, 0.2), 2);
        assert_eq!(trim_count(10, 0.3), 3);
        assert_eq!(trim_count(222, 0.1), 23);
        assert_eq!(trim_count(200, 0.0), 0);
    }

    #[test]
    fn standard_normal_log_density() {
        let p = 4;
        let params = unit_params(1, p, p);
        let v = log_group_density(&DVector::zeros(p), 0, &params, &GramMatrix::identity(p)).unwrap();
        assert_relative_eq!(v, -(p as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-13);
    }

    #[test]
    fn density_decreases_with_score() {
        let params = unit_params(1, 3, 1);
        let gram = GramMatrix::identity(3);
        let x1 = DVector::from_vec(vec![0.5, -0.2, 0.1]);
        let x2 = &x1 * 2.0;
        assert!(log_group_density(&x2, 0, &params, &gram).unwrap() < log_group_density(&x1, 0, &params, &gram).unwrap());
        // batch and single-curve forms agree
        let gamma = DMatrix::from_rows(&[x1.transpose(), x2.transpose()]);
        let logs = log_densities(&gamma, &params, &gram).unwrap();
        assert_relative_eq!(logs[(1, 0)], log_group_density(&x2, 0, &params, &gram).unwrap(), epsilon = 1e-13);
    }

    #[test]
    fn identical_groups_split_evenly() {
        let params = unit_params(2, 3, 1);
        let gamma = DMatrix::from_row_slice(2, 3, &[0.3, 0.1, -1.0, 2.0, 0.0, 0.5]);
        let (post, trim) = t_and_e_step(&gamma, &params, 0.0, &GramMatrix::identity(3)).unwrap();
        assert!(trim.is_empty());
        for v in post.tau.iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn trimming_zeroes_rows() {
        let params = unit_params(2, 2, 1);
        let gamma = DMatrix::from_fn(10, 2, |i, j| (i as f64 * 0.3 - 1.0) * (j as f64 + 1.0));
        let (post, trim) = t_and_e_step(&gamma, &params, 0.2, &GramMatrix::identity(2)).unwrap();
        assert_eq!(trim.len(), 2);
        let zero_rows = (0..10).filter(|&i| post.tau.row(i).iter().all(|&v| v == 0.0)).count();
        assert_eq!(zero_rows, 2);
        for i in 0..10 {
            if !trim.contains(i) {
                assert!((post.tau.row(i).sum() - 1.0).abs() < 1e-12);
            }
        }
        let (post, trim) = t_and_e_step(&gamma, &params, 0.0, &GramMatrix::identity(2)).unwrap();
        assert!(trim.is_empty());
        assert!((0..10).all(|i| (post.tau.row(i).sum() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn translated_curve_is_trimmed() {
        let mut rng = rng_from_seed(3);
        use rand_distr::{Distribution, StandardNormal};
        let mut gamma = DMatrix::from_fn(20, 3, |_, _| StandardNormal.sample(&mut rng));
        gamma[(7, 0)] += 1000.0;
        let params = unit_params(1, 3, 1);
        let (_, trim) = t_and_e_step(&gamma, &params, 0.1, &GramMatrix::identity(3)).unwrap();
        assert!(trim.contains(7));
    }

    #[test]
    fn ties_trim_lower_index() {
        let params = unit_params(1, 2, 1);
        let gamma = DMatrix::from_element(5, 2, 1.0);
        let (_, trim) = t_and_e_step(&gamma, &params, 0.4, &GramMatrix::identity(2)).unwrap();
        assert_eq!(trim.indices, vec![0, 1]);
    }

    #[test]
    fn weights_from_hand_posteriors() {
        let tau = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0]);
        let pi = update_weights(&Posteriors { tau }, 5, 0.2);
        assert_relative_eq!(pi[0], 0.75);
        assert_relative_eq!(pi[1], 0.25);
        let single = update_weights(&Posteriors { tau: DMatrix::from_element(4, 1, 1.0) }, 4, 0.0);
        assert_eq!(single, vec![1.0]);
    }

    #[test]
    fn scatter_from_trace_formula() {
        // M = diag(4, 1.5, 0.5) from three points on the axes
        let s = 3f64.sqrt();
        let rows = [
            [2.0 * s, 0.0, 0.0],
            [-2.0 * s, 0.0, 0.0],
            [0.0, 1.5f64.sqrt() * s, 0.0],
            [0.0, -(1.5f64.sqrt()) * s, 0.0],
            [0.0, 0.0, 0.5f64.sqrt() * s],
            [0.0, 0.0, -(0.5f64.sqrt()) * s],
        ];
        let gamma = DMatrix::from_fn(6, 3, |i, j| rows[i][j]);
        let post = Posteriors { tau: DMatrix::from_element(6, 1, 1.0) };
        let upd = update_group_model(&gamma, &post, &GramMatrix::identity(3), &[1], 1e10, 1e10).unwrap();
        assert_relative_eq!(upd.scatter.a[0][0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(upd.scatter.b[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_group_signals_restart() {
        let gamma = DMatrix::from_fn(6, 2, |i, j| (i + j) as f64);
        let mut tau = DMatrix::zeros(6, 2);
        tau.column_mut(0).fill(1.0);
        let err = update_group_model(&gamma, &Posteriors { tau }, &GramMatrix::identity(2), &[1, 1], 10.0, 10.0);
        assert!(matches!(err, Err(RfcError::DegenerateGroup { group: 1, .. })));
    }

    #[test]
    fn single_trimmed_point_loglik() {
        let params = unit_params(1, 1, 1);
        let gamma = DMatrix::from_column_slice(2, 1, &[0.0, 5.0]);
        let trim = TrimSet { indices: vec![1], n: 2 };
        let ll = trimmed_loglik(&gamma, &params, &trim, &GramMatrix::identity(1)).unwrap();
        assert_relative_eq!(ll, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-14);
    }

    #[test]
    fn best_trim_set_keeps_largest_densities() {
        // exhaustive check: keeping the ⌊n(1-α)⌋ largest densities maximizes the
        // target over all subsets of that size, and with unit-variance groups
        // (every density below one) trimming one more curve never lowers the optimum
        let mut rng = rng_from_seed(11);
        use rand_distr::{Distribution, StandardNormal};
        let n = 8;
        let gamma = DMatrix::from_fn(n, 2, |i, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (1.0 + i as f64)
        });
        let params = unit_params(2, 2, 1);
        let gram = GramMatrix::identity(2);
        let mut previous_best = f64::NEG_INFINITY;
        for trimmed in 0..n {
            let mut best = f64::NEG_INFINITY;
            for subset in (0..n).combinations(trimmed) {
                let ll = trimmed_loglik(&gamma, &params, &TrimSet { indices: subset, n }, &gram).unwrap();
                best = best.max(ll);
            }
            let alpha = trimmed as f64 / n as f64;
            let (_, trim) = t_and_e_step(&gamma, &params, alpha, &gram).unwrap();
            assert_eq!(trim.len(), trimmed);
            let ours = trimmed_loglik(&gamma, &params, &trim, &gram).unwrap();
            assert_relative_eq!(ours, best, epsilon = 1e-12);
            assert!(best >= previous_best);
            previous_best = best;
        }
    }

    #[test]
    fn init_subsets() {
        assert_eq!(init_subset_size(&[2, 3]), 5);
        let gamma = DMatrix::from_fn(30, 4, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let gram = GramMatrix::identity(4);
        let mut r1 = rng_from_seed(5);
        let mut r2 = rng_from_seed(5);
        let a = random_init(&gamma, &gram, &[1, 2], 10.0, 10.0, &mut r1).unwrap();
        let b = random_init(&gamma, &gram, &[1, 2], 10.0, 10.0, &mut r2).unwrap();
        assert_eq!(a.means, b.means);
        assert_eq!(a.pi, vec![0.5, 0.5]);
        let small = DMatrix::zeros(5, 4);
        assert!(matches!(
            random_init(&small, &gram, &[1, 2], 10.0, 10.0, &mut r1),
            Err(RfcError::TooFewCurves { needed: 8, got: 5 })
        ));
    }

    #[test]
    fn separable_constant_curves() {
        use rand_distr::{Distribution, Normal};
        let mut rng = rng_from_seed(21);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let n = 40;
        let p = 5;
        let gamma = DMatrix::from_fn(n, p, |i, j| {
            let level = if i < n / 2 { 0.0 } else { 10.0 };
            (if j == 0 { level } else { 0.0 }) + noise.sample(&mut rng)
        });
        let cfg = FitConfig { k: 2, dims: vec![1, 1], alpha: 0.0, d1: 1.0, d2: 1.0, nstart: 10, iter_max: 20, tol: 1e-8, seed: 4 };
        let r = fit(&gamma, &GramMatrix::identity(p), &cfg).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| if r.posteriors.tau[(i, 0)] > 0.5 { 0 } else { 1 }).collect();
        assert!(labels[..n / 2].iter().all(|&l| l == labels[0]));
        assert!(labels[n / 2..].iter().all(|&l| l == labels[n - 1]));
        assert_ne!(labels[0], labels[n - 1]);

        let again = fit(&gamma, &GramMatrix::identity(p), &cfg).unwrap();
        assert_eq!(again.loglik.to_bits(), r.loglik.to_bits());
        assert_eq!(again.posteriors.tau, r.posteriors.tau);
        let recomputed = trimmed_loglik(&gamma, &r.params, &r.trimmed, &GramMatrix::identity(p)).unwrap();
        assert!((recomputed - r.loglik).abs() < 1e-9);
    }

    #[test]
    fn single_group_fit() {
        let gamma = DMatrix::from_fn(30, 3, |i, j| ((i * 13 + j * 5) % 17) as f64 / 3.0);
        let cfg = FitConfig { k: 1, dims: vec![1], alpha: 0.0, d1: 1e10, d2: 1e10, nstart: 3, iter_max: 5, tol: 1e-8, seed: 1 };
        let r = fit(&gamma, &GramMatrix::identity(3), &cfg).unwrap();
        assert_eq!(r.params.pi, vec![1.0]);
        assert!(r.converged);
    }

    #[test]
    fn config_validation() {
        let cfg = FitConfig { dims: vec![2], ..Default::default() };
        assert!(matches!(cfg.validate(100, 5), Err(RfcError::Config(_))));
        let cfg = FitConfig { alpha: 1.0, ..Default::default() };
        assert!(cfg.validate(100, 5).is_err());
        let cfg = FitConfig { d1: 0.5, ..Default::default() };
        assert!(cfg.validate(100, 5).is_err());
        let cfg = FitConfig::default();
        assert!(matches!(cfg.validate(6, 5), Err(RfcError::TooFewCurves { .. })));
    }
}
