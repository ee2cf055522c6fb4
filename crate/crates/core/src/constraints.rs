//! Eigenvalue-ratio constraints on the scatter parameters.
//!
//! Raw variances are replaced by their truncations to `[m, d·m]`, where the
//! threshold `m` minimizes the weighted negative Gaussian log-likelihood
//!
//! ```text
//! f(m) = Σ_i w_i · ( log v_i^m + v_i / v_i^m ),     v^m = clamp(v, m, d·m)
//! ```
//!
//! `f` is smooth between the breakpoints `{v_i, v_i/d}`. On each piece the
//! clamped-below set `L` and clamped-above set `H` are fixed and the stationary
//! point is `m* = (Σ_L w v + Σ_H w v/d) / (Σ_L w + Σ_H w)`, so the minimum is
//! found among the breakpoints and the admissible stationary points.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RfcError};

/// Main variances `a_jg` and noise variances `b_g` of all groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterSet {
    /// `a[g][j]`, `j < q_g`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Group masses `n_g`.
    pub counts: Vec<f64>,
    pub dims: Vec<usize>,
    pub p: usize,
}

impl ScatterSet {
    pub fn groups(&self) -> usize {
        self.b.len()
    }

    /// Variance attached to score `j` of group `g`.
    pub fn variance(&self, g: usize, j: usize) -> f64 {
        if j < self.dims[g] {
            self.a[g][j]
        } else {
            self.b[g]
        }
    }

    pub fn ratio_a(&self) -> f64 {
        ratio(self.a.iter().flatten().copied())
    }

    /// Ratio over groups that own at least one noise dimension.
    pub fn ratio_b(&self) -> f64 {
        ratio(self.noise_groups().map(|g| self.b[g]))
    }

    fn noise_groups(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.b.len()).filter(|&g| self.dims[g] < self.p)
    }
}

fn ratio(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == f64::INFINITY {
        1.0
    } else {
        hi / lo
    }
}

pub fn truncate_value(v: f64, m: f64, d: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(RfcError::Domain(format!("truncation threshold must be positive, got {m}")));
    }
    if !(d >= 1.0) {
        return Err(RfcError::Domain(format!("ratio bound must be >= 1, got {d}")));
    }
    Ok(v.clamp(m, d * m))
}

/// `f(m)` for weighted values `(v_i, w_i)`.
pub fn truncation_objective(items: &[(f64, f64)], m: f64, d: f64) -> f64 {
    items
        .iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|&(v, w)| {
            let t = v.clamp(m, d * m);
            w * (t.ln() + v / t)
        })
        .sum()
}

/// Minimizer of [`truncation_objective`] over `m > 0`.
///
/// When the values already satisfy `max/min ≤ d` the smallest value is
/// returned, which leaves every value untouched.
pub fn optimal_threshold(items: &[(f64, f64)], d: f64) -> Result<f64> {
    if items.is_empty() {
        return Err(RfcError::Domain("empty scatter set".into()));
    }
    if !(d >= 1.0) {
        return Err(RfcError::Domain(format!("ratio bound must be >= 1, got {d}")));
    }
    if items.iter().any(|&(v, w)| !(v > 0.0) || !v.is_finite() || w < 0.0 || !w.is_finite()) {
        return Err(RfcError::Domain("variances must be positive and weights nonnegative".into()));
    }
    let lo = items.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let hi = items.iter().map(|x| x.0).fold(0.0, f64::max);
    if hi <= d * lo {
        return Ok(lo);
    }

    let mut breaks: Vec<f64> = items.iter().flat_map(|&(v, _)| [v, v / d]).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let mut candidates = breaks.clone();
    // one representative per open piece: below the first break, between, above the last
    let mut pieces = Vec::with_capacity(breaks.len() + 1);
    pieces.push((0.0, breaks[0]));
    pieces.extend(breaks.windows(2).map(|w| (w[0], w[1])));
    pieces.push((breaks[breaks.len() - 1], f64::INFINITY));
    for (left, right) in pieces {
        let probe = if right.is_infinite() { 2.0 * left } else if left == 0.0 { 0.5 * right } else { 0.5 * (left + right) };
        let (mut num, mut den) = (0.0, 0.0);
        for &(v, w) in items {
            if v < probe {
                num += w * v;
                den += w;
            } else if v > d * probe {
                num += w * v / d;
                den += w;
            }
        }
        if den > 0.0 {
            let m = num / den;
            if m > left && m < right {
                candidates.push(m);
            }
        }
    }

    let mut best = (f64::INFINITY, candidates[0]);
    for &m in &candidates {
        let f = truncation_objective(items, m, d);
        if f < best.0 || (f == best.0 && m < best.1) {
            best = (f, m);
        }
    }
    Ok(best.1)
}

fn floor_zeros(values: &mut [f64], floor_ref: f64) {
    let floor = 1e-12 * floor_ref;
    for v in values.iter_mut() {
        if !(*v > floor) {
            *v = floor;
        }
    }
}

/// Threshold for the main variances; weights are the group masses `n_g`.
pub fn optimal_threshold_a(a: &[Vec<f64>], counts: &[f64], d1: f64) -> Result<f64> {
    let items: Vec<(f64, f64)> = a
        .iter()
        .zip(counts)
        .flat_map(|(ag, &n)| ag.iter().map(move |&v| (v, n)))
        .collect();
    optimal_threshold(&items, d1)
}

/// Threshold for the noise variances; weights are `n_g (p - q_g)`.
/// `None` when no group has a noise dimension.
pub fn optimal_threshold_b(b: &[f64], counts: &[f64], dims: &[usize], p: usize, d2: f64) -> Result<Option<f64>> {
    let items: Vec<(f64, f64)> = (0..b.len())
        .filter(|&g| dims[g] < p)
        .map(|g| (b[g], counts[g] * (p - dims[g]) as f64))
        .collect();
    if items.is_empty() {
        return Ok(None);
    }
    optimal_threshold(&items, d2).map(Some)
}

/// Projects raw scatter estimates onto the constraint set `max/min ≤ d`.
///
/// Nonpositive raw variances are first floored at `1e-12` times the largest raw
/// variance. Noise variances of groups with `q_g = p` are left untouched.
pub fn enforce(scatter: &ScatterSet, d1: f64, d2: f64) -> Result<ScatterSet> {
    let k = scatter.b.len();
    if scatter.a.len() != k || scatter.counts.len() != k || scatter.dims.len() != k {
        return Err(RfcError::Domain("inconsistent scatter set shapes".into()));
    }
    let mut out = scatter.clone();
    let largest = scatter
        .a
        .iter()
        .flatten()
        .chain(scatter.b.iter())
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    if !(largest > 0.0) {
        return Err(RfcError::Numerical("all raw variances vanish".into()));
    }
    for ag in out.a.iter_mut() {
        floor_zeros(ag, largest);
    }
    floor_zeros(&mut out.b, largest);

    if out.a.iter().any(|ag| !ag.is_empty()) {
        let m1 = optimal_threshold_a(&out.a, &out.counts, d1)?;
        for ag in out.a.iter_mut() {
            for v in ag.iter_mut() {
                *v = truncate_value(*v, m1, d1)?;
            }
        }
    }
    if let Some(m2) = optimal_threshold_b(&out.b, &out.counts, &out.dims, out.p, d2)? {
        for g in 0..k {
            if out.dims[g] < out.p {
                out.b[g] = truncate_value(out.b[g], m2, d2)?;
            }
        }
    }
    for g in 0..k {
        if out.dims[g] < out.p && out.a[g].iter().any(|&a| a <= out.b[g]) {
            log::warn!("group {g}: a main variance does not exceed the noise variance after truncation");
        }
    }
    Ok(out)
}

/// Threshold objective of the main variances.
pub fn scatter_objective_a(scatter: &ScatterSet, m1: f64, d1: f64) -> f64 {
    let items: Vec<(f64, f64)> = scatter
        .a
        .iter()
        .zip(&scatter.counts)
        .flat_map(|(ag, &n)| ag.iter().map(move |&v| (v, n)))
        .collect();
    truncation_objective(&items, m1, d1)
}

/// Threshold objective of the noise variances.
pub fn scatter_objective_b(scatter: &ScatterSet, m2: f64, d2: f64) -> f64 {
    let items: Vec<(f64, f64)> = scatter
        .noise_groups()
        .map(|g| (scatter.b[g], scatter.counts[g] * (scatter.p - scatter.dims[g]) as f64))
        .collect();
    truncation_objective(&items, m2, d2)
}
