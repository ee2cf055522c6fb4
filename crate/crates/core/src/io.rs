//! Datasets on disk, run configuration and run results.
//!
//! Curves are stored as grid samples:
//!
//! ```text
//! t,0,0.5,1,label
//! day1,3.1,2.0,4.4,working
//! ```
//!
//! The first column holds curve ids; the header row holds the sampling grid.
//! A trailing `label` column is optional. Lines starting with `#` are
//! comments; result files written here begin with a provenance comment
//! `# config_hash=<sha256> seed=<n>`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{fit_coefficients, BasisSpec, CurveSet, GridSamples};
use crate::error::{Result, RfcError};
use crate::em::FitConfig;

/// Curves read from disk together with their ids and optional truth.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub samples: GridSamples,
    pub curves: CurveSet,
    /// Zero-based classes; `None` for curves labelled `outlier` or left blank.
    pub labels: Option<Vec<Option<usize>>>,
    /// Class names in label order.
    pub label_names: Vec<String>,
}

/// Raw contents of a grid-sample CSV.
#[derive(Clone, Debug)]
pub struct GridTable {
    pub ids: Vec<String>,
    pub samples: GridSamples,
    pub labels: Option<Vec<String>>,
}

fn parse_f64(s: &str, row: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| RfcError::Parse { row, msg: format!("`{s}` is not a number") })
}

/// Parses grid-sample CSV text. Row numbers in errors count physical lines
/// from 1, the header included.
pub fn parse_grid_csv<R: Read>(reader: R) -> Result<GridTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(RfcError::Parse { row: 1, msg: "missing header".into() }),
    };
    let header_row = header.position().map_or(1, |p| p.line() as usize);
    let has_label = header.iter().last().is_some_and(|c| c.eq_ignore_ascii_case("label"));
    let value_cols = header.len() - 1 - usize::from(has_label);
    if value_cols == 0 {
        return Err(RfcError::Parse { row: header_row, msg: "header has no grid points".into() });
    }
    let grid = header
        .iter()
        .skip(1)
        .take(value_cols)
        .map(|c| parse_f64(c, header_row))
        .collect::<Result<Vec<f64>>>()?;

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec?;
        let row = rec.position().map_or(ids.len() + 2, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(RfcError::Parse { row, msg: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        ids.push(rec[0].to_string());
        for c in 1..=value_cols {
            values.push(parse_f64(&rec[c], row)?);
        }
        if has_label {
            labels.push(rec[header.len() - 1].to_string());
        }
    }
    if ids.is_empty() {
        return Err(RfcError::Parse { row: header_row + 1, msg: "no curves".into() });
    }
    let values = DMatrix::from_row_slice(ids.len(), value_cols, &values);
    Ok(GridTable { ids, samples: GridSamples::new(grid, values)?, labels: has_label.then_some(labels) })
}

pub fn read_grid_csv(path: &Path) -> Result<GridTable> {
    parse_grid_csv(File::open(path)?)
}

/// Maps raw labels to zero-based classes. If every label is a positive
/// integer the integers are used 1-based; otherwise classes are the distinct
/// names in sorted order. `outlier` and blank labels become `None`.
pub fn encode_labels(raw: &[String]) -> (Vec<Option<usize>>, Vec<String>) {
    let is_missing = |s: &str| s.is_empty() || s.eq_ignore_ascii_case("outlier");
    let present: Vec<&str> = raw.iter().map(|s| s.as_str()).filter(|s| !is_missing(s)).collect();
    let numeric: Option<Vec<usize>> = present.iter().map(|s| s.parse::<usize>().ok().filter(|&v| v >= 1)).collect();
    if let Some(nums) = numeric {
        let k = nums.iter().copied().max().unwrap_or(0);
        let labels = raw
            .iter()
            .map(|s| if is_missing(s) { None } else { s.parse::<usize>().ok().map(|v| v - 1) })
            .collect();
        return (labels, (1..=k).map(|v| v.to_string()).collect());
    }
    let names: Vec<String> = present.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw
        .iter()
        .map(|s| if is_missing(s) { None } else { names.iter().position(|n| n == s) })
        .collect();
    (labels, names)
}

/// Reads a grid-sample CSV and fits basis coefficients to every row.
pub fn load_dataset(path: &Path, basis: &BasisSpec) -> Result<Dataset> {
    let table = read_grid_csv(path)?;
    dataset_from_table(table, basis)
}

pub fn dataset_from_table(table: GridTable, basis: &BasisSpec) -> Result<Dataset> {
    let curves = fit_coefficients(&table.samples, basis)?;
    let (labels, label_names) = match &table.labels {
        Some(raw) => {
            let (l, names) = encode_labels(raw);
            (Some(l), names)
        }
        None => (None, Vec::new()),
    };
    Ok(Dataset { ids: table.ids, samples: table.samples, curves, labels, label_names })
}

fn provenance_line(w: &mut impl Write, provenance: Option<&Provenance>) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(w, "{}", p.comment())?;
    }
    Ok(())
}

/// Writes grid samples in the format read by [`parse_grid_csv`].
pub fn write_grid_csv(
    w: &mut impl Write,
    ids: &[String],
    samples: &GridSamples,
    labels: Option<&[String]>,
    provenance: Option<&Provenance>,
) -> Result<()> {
    provenance_line(w, provenance)?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(samples.grid().iter().map(|t| t.to_string()));
    if labels.is_some() {
        header.push("label".into());
    }
    out.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(samples.values().row(i).iter().map(|v| v.to_string()));
        if let Some(l) = labels {
            rec.push(l[i].clone());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One row per curve: `id,c_1,…,c_p`.
pub fn write_coefficients_csv(w: &mut impl Write, ids: &[String], curves: &CurveSet, provenance: Option<&Provenance>) -> Result<()> {
    provenance_line(w, provenance)?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend((1..=curves.basis().p()).map(|j| format!("c_{j}")));
    out.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(curves.gamma().row(i).iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_coefficients_csv`].
pub fn read_coefficients_csv<R: Read>(reader: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let width = rdr.headers()?.len();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(RfcError::Parse { row, msg: format!("expected {width} fields, found {}", rec.len()) });
        }
        ids.push(rec[0].to_string());
        for c in 1..width {
            values.push(parse_f64(&rec[c], row)?);
        }
    }
    Ok((ids.clone(), DMatrix::from_row_slice(ids.len(), width - 1, &values)))
}

/// Config hash and seed embedded in every result file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

/// A full run description. Every field has a default, so a JSON document
/// only needs the fields it changes; command-line flags override it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub alpha: f64,
    pub d1: f64,
    pub d2: f64,
    /// Fixed dimensions; when absent, dimensions are chosen by BIC over
    /// `{q_min, …, q_max}^K`.
    pub dims: Option<Vec<usize>>,
    pub q_min: usize,
    pub q_max: usize,
    /// Basis for input files; simulated data always use the scenario basis.
    pub basis: Option<BasisSpec>,
    pub nstart: usize,
    pub iter_max: usize,
    pub tol: f64,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub scenario: String,
    pub contamination: String,
    pub replicates: usize,
    /// Trimming levels swept by `bench` and `nox`.
    pub alphas: Option<Vec<f64>>,
    /// Values of `d1 = d2` swept by `bench` and `nox`.
    pub constraint_levels: Option<Vec<f64>>,
    /// Grid points per curve in simulated grid-sample output.
    pub sample_points: usize,
    /// Score planted outliers as their own class.
    pub outlier_class: bool,
    /// Record wall-clock time in `result.json`; breaks byte-identical reruns.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            k: fit.k,
            alpha: fit.alpha,
            d1: fit.d1,
            d2: fit.d2,
            dims: None,
            q_min: 1,
            q_max: 5,
            basis: None,
            nstart: fit.nstart,
            iter_max: fit.iter_max,
            tol: fit.tol,
            seed: fit.seed,
            input: None,
            out: PathBuf::from("out"),
            scenario: "scenario2".into(),
            contamination: "cont-ii".into(),
            replicates: 10,
            alphas: None,
            constraint_levels: None,
            sample_points: 101,
            outlier_class: false,
            timing: false,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(RfcError::Config(m));
        if self.k == 0 {
            return err("k must be at least 1".into());
        }
        let alphas = self.alphas.iter().flatten().chain(std::iter::once(&self.alpha));
        for &a in alphas {
            if !(0.0..0.5).contains(&a) {
                return err(format!("alpha = {a} outside [0, 0.5)"));
            }
        }
        let levels = self.constraint_levels.iter().flatten().chain([&self.d1, &self.d2]);
        for &d in levels {
            if !(d >= 1.0) {
                return err(format!("constraint level {d} is below 1"));
            }
        }
        if self.nstart == 0 {
            return err("nstart must be at least 1".into());
        }
        if self.q_min == 0 || self.q_min > self.q_max {
            return err(format!("need 1 <= q_min <= q_max, got {}..{}", self.q_min, self.q_max));
        }
        if let Some(d) = &self.dims {
            if d.len() != self.k {
                return err(format!("{} dimensions given for k = {}", d.len(), self.k));
            }
        }
        if self.replicates == 0 {
            return err("replicates must be at least 1".into());
        }
        if self.sample_points < 2 {
            return err("sample_points must be at least 2".into());
        }
        Ok(())
    }

    pub fn fit_config(&self, dims: Vec<usize>) -> FitConfig {
        FitConfig {
            k: self.k,
            dims,
            alpha: self.alpha,
            d1: self.d1,
            d2: self.d2,
            nstart: self.nstart,
            iter_max: self.iter_max,
            tol: self.tol,
            seed: self.seed,
        }
    }

    /// SHA-256 of the canonical JSON encoding, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { config_hash: self.hash(), seed: self.seed }
    }
}

/// Summary of a single fit as stored in `result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub seed: u64,
    pub k: usize,
    pub dims: Vec<usize>,
    pub alpha: f64,
    pub d1: f64,
    pub d2: f64,
    pub pi: Vec<f64>,
    pub main_variances: Vec<Vec<f64>>,
    pub noise_variances: Vec<f64>,
    /// One-based cluster of every curve, trimmed curves reassigned.
    pub labels: Vec<usize>,
    pub trimmed_ids: Vec<String>,
    pub loglik: f64,
    pub kappa: usize,
    pub bic: f64,
    pub ccr: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub monotonicity_violations: usize,
    pub timing_secs: Option<f64>,
}

impl RunResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
