//! The `rfc` command line: `simulate`, `fit`, `select`, `bench` and `nox`.
//!
//! Every subcommand reads an optional JSON [`RunConfig`] (`--config`) and
//! applies flag overrides on top. Output files are deterministic for a given
//! configuration and start with a provenance comment.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::basis::{gram_matrix, BasisSpec, CurveSet, GramMatrix, GridSamples};
use crate::em::{fit, FitResult};
use crate::error::{Result, RfcError};
use crate::io::{self, Provenance, RunConfig, RunResult};
use crate::metrics::{ccr, ccr_with_outlier_class, hard_labels, outlier_report, reassign_trimmed};
use crate::rng::derive_seed;
use crate::selection::{bic_score, count_free_params, select_dimensions, DimGrid};
use crate::simulate::{make_dataset, ContaminationSpec, ScenarioSpec};

#[derive(Parser, Debug)]
#[command(name = "rfc", version, about = "Robust clustering of curves with trimming and scatter constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a scenario dataset (grid samples, coefficients, labels).
    Simulate(Flags),
    /// One fit with fixed dimensions.
    Fit(Flags),
    /// BIC search over the dimension grid.
    Select(Flags),
    /// Replicated sweep over trimming and constraint levels.
    Bench(Flags),
    /// CCR and trimmed days over trimming and constraint levels for a labelled file.
    Nox(Flags),
}

#[derive(clap::Args, Debug, Default, Clone)]
pub struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub d1: Option<f64>,
    #[arg(long)]
    pub d2: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma separated, e.g. `2,3`.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub q_min: Option<usize>,
    #[arg(long)]
    pub q_max: Option<usize>,
    #[arg(long)]
    pub nstart: Option<usize>,
    #[arg(long)]
    pub iter_max: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid-sample CSV; without it a scenario is simulated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `scenario1` or `scenario2`.
    #[arg(long)]
    pub scenario: Option<String>,
    /// `cont-i` … `cont-iv`.
    #[arg(long)]
    pub contamination: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Trimming levels for `bench` and `nox`.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Values of `d1 = d2` for `bench` and `nox`.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Count planted outliers as a class of their own in the CCR.
    #[arg(long)]
    pub outlier_class: bool,
    /// Store wall-clock time in result.json.
    #[arg(long)]
    pub timing: bool,
}

impl Flags {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = &self.$field { c.$target = v.clone(); })*
            };
        }
        set!(seed => seed, alpha => alpha, d1 => d1, d2 => d2, k => k, q_min => q_min, q_max => q_max,
             nstart => nstart, iter_max => iter_max, out => out, scenario => scenario,
             contamination => contamination, replicates => replicates);
        if let Some(d) = &self.dims {
            c.k = self.k.unwrap_or(d.len());
            c.dims = Some(d.clone());
        }
        if self.input.is_some() {
            c.input = self.input.clone();
        }
        if self.alphas.is_some() {
            c.alphas = self.alphas.clone();
        }
        if self.levels.is_some() {
            c.constraint_levels = self.levels.clone();
        }
        c.outlier_class |= self.outlier_class;
        c.timing |= self.timing;
        c.validate()?;
        Ok(c)
    }
}

/// Parses arguments and runs the chosen subcommand. Returns the files written.
pub fn run<I, T>(args: I) -> Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| RfcError::Config(e.to_string()))?;
    match &cli.command {
        Command::Simulate(f) => run_simulate(&f.resolve()?),
        Command::Fit(f) => run_fit(&f.resolve()?),
        Command::Select(f) => run_select(&f.resolve()?),
        Command::Bench(f) => run_bench(&f.resolve()?),
        Command::Nox(f) => run_nox(&f.resolve()?),
    }
}

/// Entry point of the `rfc` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let res = match &cli.command {
        Command::Simulate(f) => f.resolve().and_then(|c| run_simulate(&c)),
        Command::Fit(f) => f.resolve().and_then(|c| run_fit(&c)),
        Command::Select(f) => f.resolve().and_then(|c| run_select(&c)),
        Command::Bench(f) => f.resolve().and_then(|c| run_bench(&c)),
        Command::Nox(f) => f.resolve().and_then(|c| run_nox(&c)),
    };
    match res {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Curves to cluster, from a file or a simulated scenario.
pub struct Input {
    pub ids: Vec<String>,
    pub curves: CurveSet,
    pub truth: Option<Vec<Option<usize>>>,
}

fn data_seed(seed: u64) -> u64 {
    derive_seed(seed, 0)
}

fn fit_seed(seed: u64) -> u64 {
    derive_seed(seed, 1)
}

fn simulated(cfg: &RunConfig, seed: u64) -> Result<(Input, ScenarioSpec)> {
    let scenario = ScenarioSpec::preset(&cfg.scenario)?;
    scenario.validate()?;
    let contamination = ContaminationSpec::preset(&cfg.contamination)?;
    let data = make_dataset(&scenario, &contamination, seed)?;
    let ids = (1..=data.curves.len()).map(|i| format!("curve_{i}")).collect();
    let truth = Some(data.truth());
    Ok((Input { ids, curves: data.curves, truth }, scenario))
}

/// Loads `cfg.input` with `cfg.basis` (or `default_basis` of the file's
/// grid), or simulates the configured scenario.
pub fn load_input(cfg: &RunConfig, default_basis: Option<fn(&GridSamples) -> Result<BasisSpec>>) -> Result<Input> {
    match &cfg.input {
        Some(path) => {
            let table = io::read_grid_csv(path)?;
            let basis = match (&cfg.basis, default_basis) {
                (Some(b), _) => b.clone(),
                (None, Some(f)) => f(&table.samples)?,
                (None, None) => return Err(RfcError::Config("an input file needs a `basis` in the config".into())),
            };
            let ds = io::dataset_from_table(table, &basis)?;
            Ok(Input { ids: ds.ids, curves: ds.curves, truth: ds.labels })
        }
        None => Ok(simulated(cfg, data_seed(cfg.seed))?.0),
    }
}

/// B-spline of order 3 with 15 elements spanning the sampling grid.
pub fn nox_basis(samples: &GridSamples) -> Result<BasisSpec> {
    let grid = samples.grid();
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    BasisSpec::bspline(15, 3, lo, hi)
}

fn create(out: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    let f = BufWriter::new(File::create(&path)?);
    Ok((path, f))
}

fn score(cfg: &RunConfig, fit: &FitResult, curves: &CurveSet, gram: &GramMatrix, truth: Option<&[Option<usize>]>) -> Result<Option<f64>> {
    let Some(truth) = truth else { return Ok(None) };
    if cfg.outlier_class {
        Ok(Some(ccr_with_outlier_class(&hard_labels(fit), truth, cfg.k)?))
    } else {
        let labels = reassign_trimmed(fit, curves.gamma(), gram)?;
        Ok(Some(ccr(&labels, truth, cfg.k)?))
    }
}

fn fmt_dims(dims: &[usize]) -> String {
    dims.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(",")
}

fn dims_header(k: usize) -> Vec<String> {
    (1..=k).map(|g| format!("q_{g}")).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn write_fit_outputs(
    cfg: &RunConfig,
    input: &Input,
    gram: &GramMatrix,
    fit: &FitResult,
    dims: &[usize],
    started: Option<Instant>,
) -> Result<Vec<PathBuf>> {
    let prov = cfg.provenance();
    let (n, p) = input.curves.gamma().shape();
    let labels = reassign_trimmed(fit, input.curves.gamma(), gram)?;
    let kappa = count_free_params(cfg.k, p, dims);
    let result = RunResult {
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        k: cfg.k,
        dims: dims.to_vec(),
        alpha: cfg.alpha,
        d1: cfg.d1,
        d2: cfg.d2,
        pi: fit.params.pi.clone(),
        main_variances: fit.params.scatter.a.clone(),
        noise_variances: fit.params.scatter.b.clone(),
        labels: labels.iter().map(|l| l + 1).collect(),
        trimmed_ids: fit.trimmed.indices.iter().map(|&i| input.ids[i].clone()).collect(),
        loglik: fit.loglik,
        kappa,
        bic: bic_score(fit.loglik, n, kappa),
        ccr: score(cfg, fit, &input.curves, gram, input.truth.as_deref())?,
        iterations: fit.iterations,
        converged: fit.converged,
        monotonicity_violations: fit.monotonicity_violations,
        timing_secs: started.map(|s| s.elapsed().as_secs_f64()),
    };
    let (json_path, mut w) = create(&cfg.out, "result.json")?;
    w.write_all(result.to_json()?.as_bytes())?;
    w.flush()?;

    let (labels_path, mut w) = create(&cfg.out, "labels.csv")?;
    writeln!(w, "{}", prov.comment())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "cluster", "trimmed", "log_density"])?;
    for (i, id) in input.ids.iter().enumerate() {
        let trimmed = if fit.trimmed.contains(i) { "1" } else { "0" };
        out.write_record([id.as_str(), &(labels[i] + 1).to_string(), trimmed, &fit.log_density[i].to_string()])?;
    }
    out.flush()?;
    Ok(vec![json_path, labels_path])
}

pub fn run_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let scenario = ScenarioSpec::preset(&cfg.scenario)?;
    scenario.validate()?;
    let contamination = ContaminationSpec::preset(&cfg.contamination)?;
    let data = make_dataset(&scenario, &contamination, data_seed(cfg.seed))?;
    let prov = cfg.provenance();
    let ids: Vec<String> = (1..=data.curves.len()).map(|i| format!("curve_{i}")).collect();
    let labels: Vec<String> = data.labels.iter().map(|l| l.to_string()).collect();

    let (lo, hi) = data.curves.basis().domain();
    let m = cfg.sample_points;
    let grid: Vec<f64> = (0..m).map(|l| lo + (hi - lo) * l as f64 / (m - 1) as f64).collect();
    let samples = GridSamples::new(grid.clone(), data.curves.evaluate_on(&grid)?)?;
    let (curves_path, mut w) = create(&cfg.out, "curves.csv")?;
    io::write_grid_csv(&mut w, &ids, &samples, Some(&labels), Some(&prov))?;
    w.flush()?;

    let (coef_path, mut w) = create(&cfg.out, "coefficients.csv")?;
    io::write_coefficients_csv(&mut w, &ids, &data.curves, Some(&prov))?;
    w.flush()?;

    let (labels_path, mut w) = create(&cfg.out, "labels.csv")?;
    writeln!(w, "{}", prov.comment())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "label"])?;
    for (id, l) in ids.iter().zip(&labels) {
        out.write_record([id, l])?;
    }
    out.flush()?;
    Ok(vec![curves_path, coef_path, labels_path])
}

pub fn run_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let started = cfg.timing.then(Instant::now);
    let dims = cfg
        .dims
        .clone()
        .ok_or_else(|| RfcError::Config("`fit` needs --dims (or use `select`)".into()))?;
    let input = load_input(cfg, None)?;
    let gram = gram_matrix(input.curves.basis())?;
    let mut fit_cfg = cfg.fit_config(dims.clone());
    fit_cfg.seed = fit_seed(cfg.seed);
    let result = fit(input.curves.gamma(), &gram, &fit_cfg)?;
    write_fit_outputs(cfg, &input, &gram, &result, &dims, started)
}

fn dim_grid(cfg: &RunConfig) -> DimGrid {
    match &cfg.dims {
        Some(d) => DimGrid::single(d.clone()),
        None => DimGrid::product(cfg.k, cfg.q_min, cfg.q_max),
    }
}

pub fn run_select(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let started = cfg.timing.then(Instant::now);
    let input = load_input(cfg, None)?;
    let gram = gram_matrix(input.curves.basis())?;
    let mut base = cfg.fit_config(vec![1; cfg.k]);
    base.seed = fit_seed(cfg.seed);
    let sel = select_dimensions(input.curves.gamma(), &gram, &dim_grid(cfg), &base)?;

    let prov = cfg.provenance();
    let (table_path, mut w) = create(&cfg.out, "bic_table.csv")?;
    writeln!(w, "{}", prov.comment())?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = dims_header(cfg.k);
    header.extend(["loglik", "kappa", "bic", "ccr"].map(String::from));
    out.write_record(&header)?;
    for (row, f) in sel.table.iter().zip(&sel.fits) {
        let rate = match f {
            Some(f) => score(cfg, f, &input.curves, &gram, input.truth.as_deref())?,
            None => None,
        };
        let mut rec: Vec<String> = row.dims.iter().map(|q| q.to_string()).collect();
        rec.extend([row.loglik.to_string(), row.kappa.to_string(), row.bic.to_string(), fmt_opt(rate)]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    let dims = sel.table[sel.best_index].dims.clone();
    let mut files = vec![table_path];
    files.extend(write_fit_outputs(cfg, &input, &gram, &sel.best, &dims, started)?);
    Ok(files)
}

/// Fit with `cfg.dims`, or select dimensions by BIC when they are absent.
fn fit_or_select(cfg: &RunConfig, curves: &CurveSet, gram: &GramMatrix, seed: u64) -> Result<(FitResult, Vec<usize>)> {
    match &cfg.dims {
        Some(d) => {
            let mut c = cfg.fit_config(d.clone());
            c.seed = seed;
            Ok((fit(curves.gamma(), gram, &c)?, d.clone()))
        }
        None => {
            let mut base = cfg.fit_config(vec![1; cfg.k]);
            base.seed = seed;
            let sel = select_dimensions(curves.gamma(), gram, &dim_grid(cfg), &base)?;
            let dims = sel.table[sel.best_index].dims.clone();
            Ok((sel.best, dims))
        }
    }
}

fn settings(cfg: &RunConfig, default_alphas: &[f64], default_levels: &[f64]) -> Vec<(f64, f64)> {
    let alphas = cfg.alphas.clone().unwrap_or_else(|| default_alphas.to_vec());
    let levels = cfg.constraint_levels.clone().unwrap_or_else(|| default_levels.to_vec());
    alphas.iter().flat_map(|&a| levels.iter().map(move |&d| (a, d))).collect()
}

/// One row of `ccr_bench.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub replicate: usize,
    pub alpha: f64,
    pub d: f64,
    pub dims: Vec<usize>,
    pub ccr: f64,
}

/// CCR of every replicate under every `(alpha, d1 = d2)` setting. Replicate
/// `r` simulates with seed `derive_seed(seed, 2r)` and fits with
/// `derive_seed(seed, 2r + 1)`, so rows do not depend on the sweep shape.
pub fn bench_rows(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let grid = settings(cfg, &[0.0, 0.1], &[1.0, 10.0, 1e10]);
    let jobs: Vec<(usize, usize)> = (0..cfg.replicates).flat_map(|r| (0..grid.len()).map(move |s| (r, s))).collect();
    let datasets: Vec<(Input, GramMatrix)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (input, scenario) = simulated(cfg, derive_seed(cfg.seed, 2 * r as u64))?;
            let gram = gram_matrix(&scenario.basis()?)?;
            Ok((input, gram))
        })
        .collect::<Result<_>>()?;
    jobs.par_iter()
        .map(|&(r, s)| {
            let (alpha, d) = grid[s];
            let run = RunConfig { alpha, d1: d, d2: d, ..cfg.clone() };
            let (input, gram) = &datasets[r];
            let (f, dims) = fit_or_select(&run, &input.curves, gram, derive_seed(cfg.seed, 2 * r as u64 + 1))?;
            let rate = score(&run, &f, &input.curves, gram, input.truth.as_deref())?.expect("simulated truth");
            Ok(BenchRow { replicate: r + 1, alpha, d, dims, ccr: rate })
        })
        .collect()
}

pub fn run_bench(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let rows = bench_rows(cfg)?;
    let prov = cfg.provenance();
    let (path, mut w) = create(&cfg.out, "ccr_bench.csv")?;
    writeln!(w, "{}", prov.comment())?;
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["scenario", "contamination", "replicate", "alpha", "d1", "d2"].map(String::from).to_vec();
    header.extend(dims_header(cfg.k));
    header.push("ccr".into());
    out.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![
            cfg.scenario.clone(),
            cfg.contamination.clone(),
            r.replicate.to_string(),
            r.alpha.to_string(),
            r.d.to_string(),
            r.d.to_string(),
        ];
        rec.extend(r.dims.iter().map(|q| q.to_string()));
        rec.push(r.ccr.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(vec![path])
}

/// Result of one `nox` setting.
#[derive(Clone, Debug)]
pub struct NoxRow {
    pub alpha: f64,
    pub d: f64,
    pub dims: Vec<usize>,
    pub ccr: Option<f64>,
    /// Trimmed ids, least likely first.
    pub outliers: Vec<String>,
}

pub fn nox_rows(cfg: &RunConfig) -> Result<(Input, Vec<NoxRow>)> {
    if cfg.input.is_none() {
        return Err(RfcError::Config("`nox` needs --input".into()));
    }
    let input = load_input(cfg, Some(nox_basis))?;
    let gram = gram_matrix(input.curves.basis())?;
    let grid = settings(cfg, &[0.0, 0.1, 0.15], &[1.0, 10.0, 1e10]);
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(s, &(alpha, d))| {
            let run = RunConfig { alpha, d1: d, d2: d, ..cfg.clone() };
            let (f, dims) = fit_or_select(&run, &input.curves, &gram, derive_seed(fit_seed(cfg.seed), s as u64))?;
            let rate = score(&run, &f, &input.curves, &gram, input.truth.as_deref())?;
            let outliers = outlier_report(&f, &input.ids).into_iter().map(String::from).collect();
            Ok(NoxRow { alpha, d, dims, ccr: rate, outliers })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((input, rows))
}

pub fn run_nox(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (_, rows) = nox_rows(cfg)?;
    let prov: Provenance = cfg.provenance();
    let (table_path, mut w) = create(&cfg.out, "nox_summary.csv")?;
    writeln!(w, "{}", prov.comment())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["dims", "alpha", "d1", "d2", "ccr"])?;
    for r in &rows {
        out.write_record([fmt_dims(&r.dims), r.alpha.to_string(), r.d.to_string(), r.d.to_string(), fmt_opt(r.ccr)])?;
    }
    out.flush()?;

    let (outliers_path, mut w) = create(&cfg.out, "nox_outliers.csv")?;
    writeln!(w, "{}", prov.comment())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["alpha", "d1", "d2", "rank", "id"])?;
    for r in &rows {
        for (rank, id) in r.outliers.iter().enumerate() {
            out.write_record([r.alpha.to_string(), r.d.to_string(), r.d.to_string(), (rank + 1).to_string(), id.clone()])?;
        }
    }
    out.flush()?;
    Ok(vec![table_path, outliers_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"alpha": 0.2, "seed": 5, "nstart": 7}"#).unwrap();
        let flags = Flags { config: Some(path), seed: Some(9), dims: Some(vec![2, 3]), ..Flags::default() };
        let c = flags.resolve().unwrap();
        assert_eq!((c.alpha, c.seed, c.nstart), (0.2, 9, 7));
        assert_eq!(c.dims, Some(vec![2, 3]));
        assert_eq!(c.k, 2);
    }

    #[test]
    fn invalid_flags_rejected() {
        assert!(Flags { alpha: Some(0.6), ..Flags::default() }.resolve().is_err());
        assert!(Flags { nstart: Some(0), ..Flags::default() }.resolve().is_err());
        assert!(run(["rfc", "fit", "--d1", "0.5"]).is_err());
        assert!(run(["rfc", "frobnicate"]).is_err());
    }

    #[test]
    fn fit_needs_dims_and_nox_needs_input() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert!(matches!(run(["rfc", "fit", "--out", out]), Err(RfcError::Config(_))));
        assert!(matches!(run(["rfc", "nox", "--out", out]), Err(RfcError::Config(_))));
    }

    #[test]
    fn settings_grid() {
        let cfg = RunConfig::default();
        assert_eq!(settings(&cfg, &[0.0, 0.1], &[1.0, 10.0, 1e10]).len(), 6);
        let cfg = RunConfig { alphas: Some(vec![0.1]), ..cfg };
        assert_eq!(settings(&cfg, &[0.0, 0.1], &[1.0]), vec![(0.1, 1.0)]);
    }
}
