//! Synthetic curve datasets from a Karhunen-Loève scheme in the Fourier basis.
//!
//! A clean curve of group `g` has coefficients
//!
//! ```text
//! μ_g + Σ_{j ≤ q_g} √a_jg z_ij ψ_j + Σ_{j > q_g} √b_g z_ij ψ_j,   z_ij iid N(0, 1)
//! ```
//!
//! The `p` expansion terms use `ψ_1, …, ψ_{p-1}` in order and then the
//! constant `ψ_0`, so all basis directions carry variance. Mean functions
//! `cos(t) + c` are projected onto the basis by least squares on a dense grid.
//!
//! Contamination appends planted outliers: noisy constant levels interpolated
//! on a periodic grid, either far from the data or inside its range, or
//! heavy-tailed curves drawn with Cauchy scores.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Cauchy, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{fit_coefficients, BasisSpec, CurveSet, GridSamples};
use crate::error::{Result, RfcError};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Points of the dense grid used to project mean functions.
const MEAN_GRID: usize = 1001;
/// Points of the grid on which the clean range is measured.
const RANGE_GRID: usize = 201;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFunction {
    /// `cos(t) + shift`.
    CosPlus { shift: f64 },
    Coefficients(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub means: Vec<MeanFunction>,
    pub dims: Vec<usize>,
    pub main_variances: Vec<Vec<f64>>,
    pub noise_variances: Vec<f64>,
    pub n_per_group: Vec<usize>,
    pub p: usize,
}

impl ScenarioSpec {
    /// Equal means `cos(t)`, `q = (2, 3)`, `a_1 = (60, 30)`, `b_1 = 0.5`,
    /// `a_2 = (170, 140, 120)`, `b_2 = 1`.
    pub fn scenario1() -> Self {
        Self {
            name: "scenario1".into(),
            means: vec![MeanFunction::CosPlus { shift: 0.0 }, MeanFunction::CosPlus { shift: 0.0 }],
            dims: vec![2, 3],
            main_variances: vec![vec![60.0, 30.0], vec![170.0, 140.0, 120.0]],
            noise_variances: vec![0.5, 1.0],
            n_per_group: vec![100, 100],
            p: 21,
        }
    }

    /// Means `cos(t) + 3` and `cos(t) + 1`, `q = (2, 3)`, `a_1 = (60, 30)`,
    /// `a_2 = (60, 30, 20)`, `b = (0.5, 1)`.
    pub fn scenario2() -> Self {
        Self {
            name: "scenario2".into(),
            means: vec![MeanFunction::CosPlus { shift: 3.0 }, MeanFunction::CosPlus { shift: 1.0 }],
            dims: vec![2, 3],
            main_variances: vec![vec![60.0, 30.0], vec![60.0, 30.0, 20.0]],
            noise_variances: vec![0.5, 1.0],
            n_per_group: vec![100, 100],
            p: 21,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "scenario1" => Ok(Self::scenario1()),
            "scenario2" => Ok(Self::scenario2()),
            other => Err(RfcError::Config(format!("unknown scenario `{other}`"))),
        }
    }

    pub fn groups(&self) -> usize {
        self.dims.len()
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        BasisSpec::fourier(self.p, 0.0, 1.0)
    }

    /// Checks shapes and the model ordering `a_jg > b_g > 0`.
    pub fn validate(&self) -> Result<()> {
        let k = self.dims.len();
        if k == 0
            || self.means.len() != k
            || self.main_variances.len() != k
            || self.noise_variances.len() != k
            || self.n_per_group.len() != k
        {
            return Err(RfcError::Config("scenario fields must all have one entry per group".into()));
        }
        for g in 0..k {
            if self.dims[g] > self.p || self.main_variances[g].len() != self.dims[g] {
                return Err(RfcError::Config(format!("group {g}: need q_g <= p and q_g main variances")));
            }
            let b = self.noise_variances[g];
            if !(b > 0.0) || self.main_variances[g].iter().any(|&a| !(a > b)) {
                return Err(RfcError::Config(format!("group {g}: variances must satisfy a > b > 0")));
            }
            if let MeanFunction::Coefficients(c) = &self.means[g] {
                if c.len() != self.p {
                    return Err(RfcError::Config(format!("group {g}: mean needs {} coefficients", self.p)));
                }
            }
        }
        Ok(())
    }

    pub fn mean_coefficients(&self, g: usize) -> Result<DVector<f64>> {
        match &self.means[g] {
            MeanFunction::Coefficients(c) => Ok(DVector::from_column_slice(c)),
            MeanFunction::CosPlus { shift } => {
                let grid: Vec<f64> = (0..MEAN_GRID).map(|l| l as f64 / (MEAN_GRID - 1) as f64).collect();
                let values = DMatrix::from_fn(1, MEAN_GRID, |_, l| grid[l].cos() + shift);
                let fitted = fit_coefficients(&GridSamples::new(grid, values)?, &self.basis()?)?;
                Ok(fitted.gamma().row(0).transpose())
            }
        }
    }

    fn variance(&self, g: usize, term: usize) -> f64 {
        if term < self.dims[g] {
            self.main_variances[g][term]
        } else {
            self.noise_variances[g]
        }
    }
}

/// Basis index carrying expansion term `term` (zero-based) out of `p`.
pub fn expansion_basis_index(term: usize, p: usize) -> usize {
    if term + 1 < p {
        term + 1
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationScheme {
    None,
    FarLevel,
    InrangeLevel,
    Cauchy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub scheme: ContaminationScheme,
    pub count: usize,
    /// Level interval for [`ContaminationScheme::FarLevel`]; ignored otherwise.
    pub level_interval: Option<(f64, f64)>,
    pub noise_variance: f64,
    pub grid_size: usize,
}

impl ContaminationSpec {
    pub fn none() -> Self {
        Self { scheme: ContaminationScheme::None, count: 0, level_interval: None, noise_variance: 10.0, grid_size: 21 }
    }

    /// `cont-i` … `cont-iv`; the contaminated presets add 22 curves.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self { count: 22, ..Self::none() };
        match name {
            "cont-i" => Ok(Self::none()),
            "cont-ii" => Ok(Self { scheme: ContaminationScheme::FarLevel, level_interval: Some((150.0, 180.0)), ..base }),
            "cont-iii" => Ok(Self { scheme: ContaminationScheme::InrangeLevel, ..base }),
            "cont-iv" => Ok(Self { scheme: ContaminationScheme::Cauchy, ..base }),
            other => Err(RfcError::Config(format!("unknown contamination scheme `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance >= 0.0) {
            return Err(RfcError::Config("noise variance must be nonnegative".into()));
        }
        match self.scheme {
            ContaminationScheme::None if self.count > 0 => {
                Err(RfcError::Config("contamination scheme `none` cannot add curves".into()))
            }
            ContaminationScheme::FarLevel => match self.level_interval {
                Some((a, b)) if a <= b => Ok(()),
                _ => Err(RfcError::Config("far-level contamination needs an interval with a <= b".into())),
            },
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    /// Zero-based group.
    Group(usize),
    Outlier,
}

impl Label {
    pub fn group(self) -> Option<usize> {
        match self {
            Label::Group(g) => Some(g),
            Label::Outlier => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Group(g) => write!(f, "{}", g + 1),
            Label::Outlier => f.write_str("outlier"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub curves: CurveSet,
    pub labels: Vec<Label>,
}

impl LabeledDataset {
    /// Group truth with planted outliers as `None`.
    pub fn truth(&self) -> Vec<Option<usize>> {
        self.labels.iter().map(|l| l.group()).collect()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Outlier).count()
    }
}

#[derive(Clone, Copy)]
enum ScoreLaw {
    Normal,
    Cauchy,
}

fn draw_group(spec: &ScenarioSpec, g: usize, mean: &DVector<f64>, count: usize, law: ScoreLaw, rng: &mut Rng) -> DMatrix<f64> {
    let p = spec.p;
    let cauchy = Cauchy::new(0.0, 1.0).expect("unit Cauchy");
    let mut out = DMatrix::zeros(count, p);
    for i in 0..count {
        for k in 0..p {
            out[(i, k)] = mean[k];
        }
        for term in 0..p {
            let z: f64 = match law {
                ScoreLaw::Normal => StandardNormal.sample(rng),
                ScoreLaw::Cauchy => cauchy.sample(rng),
            };
            out[(i, expansion_basis_index(term, p))] += spec.variance(g, term).sqrt() * z;
        }
    }
    out
}

/// Clean curves, groups in order. Variances need only be nonnegative here.
pub fn generate_clean(spec: &ScenarioSpec, seed: u64) -> Result<LabeledDataset> {
    let k = spec.groups();
    let mut rng = rng_from_seed(seed);
    let total: usize = spec.n_per_group.iter().sum();
    let mut gamma = DMatrix::zeros(total, spec.p);
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for g in 0..k {
        let mean = spec.mean_coefficients(g)?;
        let block = draw_group(spec, g, &mean, spec.n_per_group[g], ScoreLaw::Normal, &mut rng);
        gamma.rows_mut(row, block.nrows()).copy_from(&block);
        row += block.nrows();
        labels.extend(std::iter::repeat_n(Label::Group(g), spec.n_per_group[g]));
    }
    Ok(LabeledDataset { curves: CurveSet::new(gamma, spec.basis()?)?, labels })
}

/// `grid_size` equispaced points of the periodic grid `l / grid_size` on `[0, 1)`.
pub fn periodic_grid(grid_size: usize) -> Vec<f64> {
    (0..grid_size).map(|l| l as f64 / grid_size as f64).collect()
}

/// Smallest and largest clean curve value on a 201-point grid of `[0, 1]`.
pub fn clean_range(clean: &LabeledDataset) -> Result<(f64, f64)> {
    let (lo, hi) = clean.curves.basis().domain();
    let grid: Vec<f64> = (0..RANGE_GRID).map(|l| lo + (hi - lo) * l as f64 / (RANGE_GRID - 1) as f64).collect();
    let values = clean.curves.evaluate_on(&grid)?;
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, label) in clean.labels.iter().enumerate() {
        if *label == Label::Outlier {
            continue;
        }
        for v in values.row(i).iter() {
            range.0 = range.0.min(*v);
            range.1 = range.1.max(*v);
        }
    }
    Ok(range)
}

fn level_curves(spec: &ContaminationSpec, interval: (f64, f64), basis: &BasisSpec, rng: &mut Rng) -> Result<DMatrix<f64>> {
    let grid = periodic_grid(spec.grid_size);
    let noise = Normal::new(0.0, spec.noise_variance.sqrt()).map_err(|e| RfcError::Config(e.to_string()))?;
    let (a, b) = interval;
    let mut values = DMatrix::zeros(spec.count, spec.grid_size);
    for i in 0..spec.count {
        let u = if b > a { rng.random_range(a..=b) } else { a };
        for l in 0..spec.grid_size {
            values[(i, l)] = u + noise.sample(rng);
        }
    }
    let fitted = fit_coefficients(&GridSamples::new(grid, values)?, basis)?;
    Ok(fitted.gamma().clone())
}

/// Appends `spec.count` outliers to `clean`. The Cauchy scheme draws from the
/// scenario model, splitting the outliers evenly across groups.
pub fn generate_contaminated(
    spec: &ContaminationSpec,
    clean: &LabeledDataset,
    scenario: &ScenarioSpec,
    seed: u64,
) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut out = clean.clone();
    if spec.count == 0 {
        return Ok(out);
    }
    let mut rng = rng_from_seed(seed);
    let basis = clean.curves.basis().clone();
    let rows = match spec.scheme {
        ContaminationScheme::None => unreachable!("validated"),
        ContaminationScheme::FarLevel => {
            let interval = spec.level_interval.expect("validated");
            level_curves(spec, interval, &basis, &mut rng)?
        }
        ContaminationScheme::InrangeLevel => {
            let interval = clean_range(clean)?;
            level_curves(spec, interval, &basis, &mut rng)?
        }
        ContaminationScheme::Cauchy => {
            let k = scenario.groups();
            let mut rows = DMatrix::zeros(spec.count, scenario.p);
            for g in 0..k {
                let start = g * spec.count / k;
                let end = (g + 1) * spec.count / k;
                let mean = scenario.mean_coefficients(g)?;
                let block = draw_group(scenario, g, &mean, end - start, ScoreLaw::Cauchy, &mut rng);
                rows.rows_mut(start, end - start).copy_from(&block);
            }
            rows
        }
    };
    if rows.ncols() != basis.p() {
        return Err(RfcError::Config("contamination and clean data use different bases".into()));
    }
    out.curves.append_rows(&rows);
    out.labels.extend(std::iter::repeat_n(Label::Outlier, spec.count));
    Ok(out)
}

/// Clean scenario followed by its contamination.
pub fn make_dataset(scenario: &ScenarioSpec, contamination: &ContaminationSpec, seed: u64) -> Result<LabeledDataset> {
    let clean = generate_clean(scenario, derive_seed(seed, 0))?;
    generate_contaminated(contamination, &clean, scenario, derive_seed(seed, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expansion_index_map() {
        assert_eq!(expansion_basis_index(0, 21), 1);
        assert_eq!(expansion_basis_index(19, 21), 20);
        assert_eq!(expansion_basis_index(20, 21), 0);
    }

    #[test]
    fn presets_valid() {
        ScenarioSpec::scenario1().validate().unwrap();
        ScenarioSpec::scenario2().validate().unwrap();
        for name in ["cont-i", "cont-ii", "cont-iii", "cont-iv"] {
            ContaminationSpec::preset(name).unwrap().validate().unwrap();
        }
        assert!(ScenarioSpec::preset("scenario3").is_err());
        let bad = ContaminationSpec { count: 3, ..ContaminationSpec::none() };
        assert!(matches!(bad.validate(), Err(RfcError::Config(_))));
    }

    #[test]
    fn first_score_variance() {
        let mut spec = ScenarioSpec::scenario1();
        spec.n_per_group = vec![1000, 0];
        let d = generate_clean(&spec, 17).unwrap();
        let mean = spec.mean_coefficients(0).unwrap();
        let scores: Vec<f64> = (0..1000).map(|i| d.curves.gamma()[(i, 1)] - mean[1]).collect();
        let var = scores.iter().map(|s| s * s).sum::<f64>() / 1000.0;
        assert!((55.0..=65.0).contains(&var), "variance {var}");
    }

    #[test]
    fn zero_variance_reproduces_mean() {
        let mut spec = ScenarioSpec::scenario2();
        spec.main_variances = vec![vec![0.0; 2], vec![0.0; 3]];
        spec.noise_variances = vec![0.0, 0.0];
        spec.n_per_group = vec![5, 5];
        let d = generate_clean(&spec, 1).unwrap();
        for i in 0..10 {
            let g = if i < 5 { 0 } else { 1 };
            let mean = spec.mean_coefficients(g).unwrap();
            assert_eq!(d.curves.gamma().row(i).transpose(), mean);
        }
    }

    #[test]
    fn scenario2_mean_gap() {
        let spec = ScenarioSpec::scenario2();
        let gap = spec.mean_coefficients(0).unwrap() - spec.mean_coefficients(1).unwrap();
        let basis = spec.basis().unwrap();
        for l in 0..=50 {
            let t = l as f64 / 50.0;
            let v = basis.evaluate(t).unwrap().dot(&gap);
            assert_relative_eq!(v, 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn far_level_outliers() {
        let scenario = ScenarioSpec::scenario1();
        let d = make_dataset(&scenario, &ContaminationSpec::preset("cont-ii").unwrap(), 3).unwrap();
        assert_eq!(d.curves.len(), 222);
        let slack = 3.0 * (10.0f64 / 21.0).sqrt();
        for i in 200..222 {
            let level = d.curves.gamma()[(i, 0)];
            assert!(level >= 150.0 - slack && level <= 180.0 + slack, "level {level}");
            assert_eq!(d.labels[i], Label::Outlier);
        }
    }

    #[test]
    fn inrange_interval_matches_clean_range() {
        let scenario = ScenarioSpec::scenario1();
        let clean = generate_clean(&scenario, derive_seed(9, 0)).unwrap();
        let (lo, hi) = clean_range(&clean).unwrap();
        let d = make_dataset(&scenario, &ContaminationSpec::preset("cont-iii").unwrap(), 9).unwrap();
        assert_eq!(d.outlier_count(), 22);
        let slack = 5.0 * (10.0f64 / 21.0).sqrt();
        for i in 200..222 {
            let level = d.curves.gamma()[(i, 0)];
            assert!(level >= lo - slack && level <= hi + slack);
        }
        assert!(lo < 0.0 && hi > 0.0);
    }

    #[test]
    fn level_curves_interpolate() {
        let basis = BasisSpec::fourier(21, 0.0, 1.0).unwrap();
        let spec = ContaminationSpec { count: 3, ..ContaminationSpec::preset("cont-ii").unwrap() };
        let mut rng = rng_from_seed(2);
        let grid = periodic_grid(21);
        let values_rng = &mut rng_from_seed(2);
        let gamma = level_curves(&spec, (150.0, 180.0), &basis, &mut rng).unwrap();
        // rebuild the noisy samples with the same stream
        let noise = Normal::new(0.0, 10f64.sqrt()).unwrap();
        let b = basis.design_matrix(&grid).unwrap();
        for i in 0..3 {
            let u = values_rng.random_range(150.0..=180.0);
            let samples: Vec<f64> = (0..21).map(|_| u + noise.sample(values_rng)).collect();
            let fitted = &b * gamma.row(i).transpose();
            for l in 0..21 {
                assert!((fitted[l] - samples[l]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cauchy_tails_are_heavy() {
        let scenario = ScenarioSpec::scenario2();
        let clean = generate_clean(&ScenarioSpec { n_per_group: vec![0, 0], ..scenario.clone() }, 0).unwrap();
        let spec = ContaminationSpec { count: 480, ..ContaminationSpec::preset("cont-iv").unwrap() };
        let d = generate_contaminated(&spec, &clean, &scenario, 5).unwrap();
        let mut draws = 0usize;
        let mut extreme = 0usize;
        for i in 0..480 {
            let g = if i < 240 { 0 } else { 1 };
            let mean = scenario.mean_coefficients(g).unwrap();
            for term in 0..21 {
                let k = expansion_basis_index(term, 21);
                let z = (d.curves.gamma()[(i, k)] - mean[k]) / scenario.variance(g, term).sqrt();
                draws += 1;
                if z.abs() > 3.0 {
                    extreme += 1;
                }
            }
        }
        assert!(draws >= 10_000);
        let frac = extreme as f64 / draws as f64;
        assert!(frac >= 10.0 * 0.0027, "fraction {frac}");
    }

    #[test]
    fn no_contamination_is_identity_and_determinism() {
        let scenario = ScenarioSpec::scenario2();
        let d = make_dataset(&scenario, &ContaminationSpec::preset("cont-i").unwrap(), 4).unwrap();
        assert_eq!(d.curves.len(), 200);
        let again = make_dataset(&scenario, &ContaminationSpec::preset("cont-i").unwrap(), 4).unwrap();
        assert_eq!(d.curves.gamma(), again.curves.gamma());
        let d3 = make_dataset(&ScenarioSpec::scenario1(), &ContaminationSpec::preset("cont-iii").unwrap(), 4).unwrap();
        assert_eq!(d3.curves.len(), 222);
        assert_eq!(d3.outlier_count(), 22);
    }
}
