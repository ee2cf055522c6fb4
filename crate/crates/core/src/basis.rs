//! Functional bases, their Gram matrix and coefficient fitting.
//!
//! Two families are supported. The Fourier system on `[lo, hi]` is
//! `1, √2 sin(2πjx), √2 cos(2πjx), …` with `x = (t - lo) / (hi - lo)`, so its
//! Gram matrix is `(hi - lo)·I`. B-splines use a clamped knot vector built from
//! a sequence of breakpoints; `order = degree + 1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RfcError};
use crate::linalg::sym_eigen_desc;
use crate::quadrature;

#[derive(Clone, Debug, PartialEq)]
pub enum BasisKind {
    Fourier,
    /// `breaks` holds the distinct knots including both domain endpoints.
    BSpline { order: usize, breaks: Vec<f64> },
}

/// A finite functional basis on a closed interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisConfig", into = "BasisConfig")]
pub struct BasisSpec {
    kind: BasisKind,
    p: usize,
    lo: f64,
    hi: f64,
}

/// Serialized form of a [`BasisSpec`], as it appears in run configurations.
///
/// ```json
/// {"kind": "bspline", "p": 15, "order": 3, "domain": [0, 23]}
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisConfig {
    pub kind: String,
    pub p: usize,
    pub domain: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Interior knots; equispaced when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<f64>>,
}

impl TryFrom<BasisConfig> for BasisSpec {
    type Error = RfcError;

    fn try_from(c: BasisConfig) -> Result<Self> {
        let (lo, hi) = (c.domain[0], c.domain[1]);
        match c.kind.to_ascii_lowercase().as_str() {
            "fourier" => BasisSpec::fourier(c.p, lo, hi),
            "bspline" | "b-spline" => {
                let order = c
                    .order
                    .ok_or_else(|| RfcError::Config("bspline basis needs an order".into()))?;
                match c.knots {
                    Some(interior) => {
                        let spec = BasisSpec::bspline_with_knots(order, lo, hi, &interior)?;
                        if spec.p != c.p {
                            return Err(RfcError::Config(format!(
                                "bspline with {} interior knots and order {order} has {} functions, not {}",
                                interior.len(),
                                spec.p,
                                c.p
                            )));
                        }
                        Ok(spec)
                    }
                    None => BasisSpec::bspline(c.p, order, lo, hi),
                }
            }
            other => Err(RfcError::Config(format!("unknown basis kind `{other}`"))),
        }
    }
}

impl From<BasisSpec> for BasisConfig {
    fn from(s: BasisSpec) -> Self {
        match &s.kind {
            BasisKind::Fourier => BasisConfig {
                kind: "fourier".into(),
                p: s.p,
                domain: [s.lo, s.hi],
                order: None,
                knots: None,
            },
            BasisKind::BSpline { order, breaks } => BasisConfig {
                kind: "bspline".into(),
                p: s.p,
                domain: [s.lo, s.hi],
                order: Some(*order),
                knots: Some(breaks[1..breaks.len() - 1].to_vec()),
            },
        }
    }
}

fn check_domain(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(RfcError::Domain(format!("invalid domain [{lo}, {hi}]")));
    }
    Ok(())
}

impl BasisSpec {
    pub fn fourier(p: usize, lo: f64, hi: f64) -> Result<Self> {
        check_domain(lo, hi)?;
        if p == 0 {
            return Err(RfcError::Domain("basis needs at least one function".into()));
        }
        Ok(Self { kind: BasisKind::Fourier, p, lo, hi })
    }

    /// B-spline basis with `p` functions and equispaced interior knots.
    pub fn bspline(p: usize, order: usize, lo: f64, hi: f64) -> Result<Self> {
        check_domain(lo, hi)?;
        if order == 0 || p < order {
            return Err(RfcError::Domain(format!(
                "bspline needs p >= order >= 1 (p={p}, order={order})"
            )));
        }
        let segments = p - order + 1;
        let breaks: Vec<f64> = (0..=segments)
            .map(|i| {
                if i == segments {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / segments as f64
                }
            })
            .collect();
        Ok(Self { kind: BasisKind::BSpline { order, breaks }, p, lo, hi })
    }

    pub fn bspline_with_knots(order: usize, lo: f64, hi: f64, interior: &[f64]) -> Result<Self> {
        check_domain(lo, hi)?;
        if order == 0 {
            return Err(RfcError::Domain("bspline order must be >= 1".into()));
        }
        let mut breaks = Vec::with_capacity(interior.len() + 2);
        breaks.push(lo);
        breaks.extend_from_slice(interior);
        breaks.push(hi);
        if breaks.windows(2).any(|w| w[1] < w[0]) || interior.iter().any(|&k| k <= lo || k >= hi) {
            return Err(RfcError::Domain("interior knots must be nondecreasing and inside the domain".into()));
        }
        let p = interior.len() + order;
        Ok(Self { kind: BasisKind::BSpline { order, breaks }, p, lo, hi })
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    /// Number of basis functions.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn check_point(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * (self.hi - self.lo);
        if !t.is_finite() || t < self.lo - slack || t > self.hi + slack {
            return Err(RfcError::Domain(format!(
                "t = {t} outside basis domain [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(t.clamp(self.lo, self.hi))
    }

    /// Values `(φ_1(t), …, φ_p(t))`.
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>> {
        let t = self.check_point(t)?;
        let mut out = DVector::zeros(self.p);
        self.evaluate_into(t, out.as_mut_slice());
        Ok(out)
    }

    fn evaluate_into(&self, t: f64, out: &mut [f64]) {
        match &self.kind {
            BasisKind::Fourier => {
                let x = (t - self.lo) / (self.hi - self.lo);
                out[0] = 1.0;
                for k in 1..self.p {
                    let j = k.div_ceil(2) as f64;
                    let arg = 2.0 * PI * j * x;
                    out[k] = if k % 2 == 1 { 2f64.sqrt() * arg.sin() } else { 2f64.sqrt() * arg.cos() };
                }
            }
            BasisKind::BSpline { order, breaks } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                bspline_nonzero(*order, breaks, self.p, t, out);
            }
        }
    }

    /// `m × p` matrix whose row `l` holds the basis evaluated at `grid[l]`.
    pub fn design_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let mut b = DMatrix::zeros(grid.len(), self.p);
        let mut row = vec![0.0; self.p];
        for (l, &t) in grid.iter().enumerate() {
            let t = self.check_point(t)?;
            self.evaluate_into(t, &mut row);
            for (k, v) in row.iter().enumerate() {
                b[(l, k)] = *v;
            }
        }
        Ok(b)
    }
}

/// Cox-de Boor recursion for the `order` nonzero B-splines at `t`, written
/// into their global positions in `out`.
fn bspline_nonzero(order: usize, breaks: &[f64], p: usize, t: f64, out: &mut [f64]) {
    let degree = order - 1;
    // clamped knot vector: endpoints repeated `order` times
    let mut knots = Vec::with_capacity(p + order);
    knots.extend(std::iter::repeat_n(breaks[0], order));
    knots.extend_from_slice(&breaks[1..breaks.len() - 1]);
    knots.extend(std::iter::repeat_n(breaks[breaks.len() - 1], order));

    // span s with knots[s] <= t < knots[s+1]; right endpoint uses the last nonempty span
    let mut span = degree;
    for s in degree..p {
        if knots[s] <= t && knots[s] < knots[s + 1] {
            span = s;
        }
        if t < knots[s + 1] {
            break;
        }
    }

    let mut n = vec![0.0; order];
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    for (r, v) in n.iter().enumerate() {
        out[span - degree + r] = *v;
    }
}

/// Symmetric positive-definite matrix of basis inner products together with
/// its symmetric square root and inverse square root.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    w: DMatrix<f64>,
    half: DMatrix<f64>,
    inv_half: DMatrix<f64>,
}

impl GramMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(RfcError::Numerical("Gram matrix must be square".into()));
        }
        let w = 0.5 * (&w + w.transpose());
        let (half, inv_half) = half_powers(&w)?;
        Ok(Self { w, half, inv_half })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            w: DMatrix::identity(p, p),
            half: DMatrix::identity(p, p),
            inv_half: DMatrix::identity(p, p),
        }
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn half(&self) -> &DMatrix<f64> {
        &self.half
    }

    pub fn inv_half(&self) -> &DMatrix<f64> {
        &self.inv_half
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

/// `W_jl = ∫ φ_j φ_l` over the basis domain.
///
/// Fourier: closed form. B-spline: composite Gauss-Legendre with `order + 2`
/// nodes per knot interval, which is exact for the piecewise polynomial
/// products.
pub fn gram_matrix(spec: &BasisSpec) -> Result<GramMatrix> {
    let p = spec.p;
    match &spec.kind {
        BasisKind::Fourier => {
            let len = spec.hi - spec.lo;
            let w = DMatrix::identity(p, p) * len;
            let s = len.sqrt();
            let half = DMatrix::identity(p, p) * s;
            let inv_half = DMatrix::identity(p, p) / s;
            Ok(GramMatrix { w, half, inv_half })
        }
        BasisKind::BSpline { order, breaks } => {
            let (nodes, weights) = quadrature::composite(breaks, order + 2);
            let b = spec.design_matrix(&nodes)?;
            let mut w = DMatrix::zeros(p, p);
            for j in 0..p {
                for l in j..p {
                    let v: f64 = (0..nodes.len()).map(|q| weights[q] * b[(q, j)] * b[(q, l)]).sum();
                    w[(j, l)] = v;
                    w[(l, j)] = v;
                }
            }
            let (half, inv_half) = half_powers(&w)?;
            Ok(GramMatrix { w, half, inv_half })
        }
    }
}

/// Symmetric `W^{1/2}` and `W^{-1/2}` via eigendecomposition.
pub fn half_powers(w: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = sym_eigen_desc(w);
    let p = vals.len();
    if p == 0 {
        return Err(RfcError::Numerical("empty matrix".into()));
    }
    let largest = vals[0];
    let smallest = vals[p - 1];
    if !(largest > 0.0) || smallest <= 1e-13 * largest {
        return Err(RfcError::Numerical(format!(
            "matrix is not positive definite (eigenvalues in [{smallest:e}, {largest:e}])"
        )));
    }
    let sqrt = vals.map(f64::sqrt);
    let half = &vecs * DMatrix::from_diagonal(&sqrt) * vecs.transpose();
    let inv_half = &vecs * DMatrix::from_diagonal(&sqrt.map(|v| 1.0 / v)) * vecs.transpose();
    let half = 0.5 * (&half + half.transpose());
    let inv_half = 0.5 * (&inv_half + inv_half.transpose());
    Ok((half, inv_half))
}

/// Raw observations of `n` curves on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSamples {
    grid: Vec<f64>,
    values: DMatrix<f64>,
}

impl GridSamples {
    pub fn new(grid: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if grid.len() != values.ncols() {
            return Err(RfcError::Domain(format!(
                "grid has {} points but values have {} columns",
                grid.len(),
                values.ncols()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RfcError::Domain("grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RfcError::Domain("sample values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// `n × p` coefficient matrix of curves expanded in one basis.
#[derive(Clone, Debug)]
pub struct CurveSet {
    gamma: DMatrix<f64>,
    basis: BasisSpec,
}

impl CurveSet {
    pub fn new(gamma: DMatrix<f64>, basis: BasisSpec) -> Result<Self> {
        if gamma.ncols() != basis.p() {
            return Err(RfcError::Domain(format!(
                "coefficient matrix has {} columns, basis has {} functions",
                gamma.ncols(),
                basis.p()
            )));
        }
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(RfcError::Domain("coefficients must be finite".into()));
        }
        Ok(Self { gamma, basis })
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.nrows() == 0
    }

    /// Curve values on `grid`, one row per curve.
    pub fn evaluate_on(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let b = self.basis.design_matrix(grid)?;
        Ok(&self.gamma * b.transpose())
    }

    pub(crate) fn append_rows(&mut self, rows: &DMatrix<f64>) {
        let n = self.gamma.nrows();
        let extra = rows.nrows();
        let mut g = self.gamma.clone().resize_vertically(n + extra, 0.0);
        g.rows_mut(n, extra).copy_from(rows);
        self.gamma = g;
    }
}

/// Least-squares coefficients of every sampled curve in `spec`.
///
/// Solved through the SVD of the `m × p` design matrix rather than the normal
/// equations. Fails when the design has numerically dependent columns.
pub fn fit_coefficients(samples: &GridSamples, spec: &BasisSpec) -> Result<CurveSet> {
    let m = samples.grid.len();
    let p = spec.p();
    if m < p {
        return Err(RfcError::RankDeficient { deficient: p - m, columns: p });
    }
    let b = spec.design_matrix(&samples.grid)?;
    let svd = b.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = (m.max(p) as f64) * f64::EPSILON * smax * 16.0;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < p {
        return Err(RfcError::RankDeficient { deficient: p - rank, columns: p });
    }
    let rhs = samples.values.transpose();
    let coeffs = svd
        .solve(&rhs, tol)
        .map_err(|e| RfcError::Numerical(e.to_string()))?;
    CurveSet::new(coeffs.transpose(), spec.clone())
}
