//! Reading labelled curves from CSV and listing the trimmed ones.
//!
//! Usage: `cargo run --example outlier_report [file.csv]`. Without an
//! argument a small synthetic hourly dataset is written to a temp file.

use std::path::PathBuf;

use rfclust::basis::{gram_matrix, BasisSpec};
use rfclust::em::{fit, FitConfig};
use rfclust::io::load_dataset;
use rfclust::metrics::{ccr, outlier_report, reassign_trimmed};

fn synthetic() -> std::io::Result<PathBuf> {
    let path = std::env::temp_dir().join("rfclust_outlier_report.csv");
    let mut text = String::from("t");
    for h in 0..24 {
        text += &format!(",{h}");
    }
    text += ",label\n";
    for day in 0..60 {
        let working = day % 3 != 0;
        let spike = if day == 17 || day == 42 { 150.0 } else { 0.0 };
        text += &format!("day{day:02}");
        for h in 0..24 {
            let base = if working { 90.0 * (-((h as f64 - 8.0) / 2.5f64).powi(2)).exp() } else { 10.0 };
            let noise = ((day * 31 + h * 17) % 13) as f64 - 6.0;
            let extra = if h == 20 { spike } else { 0.0 };
            text += &format!(",{}", 60.0 + base + noise + extra);
        }
        text += if working { ",working\n" } else { ",nonworking\n" };
    }
    std::fs::write(&path, text)?;
    Ok(path)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => synthetic()?,
    };
    let basis = BasisSpec::bspline(15, 3, 0.0, 23.0)?;
    let ds = load_dataset(&path, &basis)?;
    let gram = gram_matrix(&basis)?;
    let cfg = FitConfig { dims: vec![2, 2], alpha: 0.1, d1: 1.0, d2: 1.0, nstart: 50, ..FitConfig::default() };
    let res = fit(ds.curves.gamma(), &gram, &cfg)?;
    println!("{} curves, {} trimmed (least likely first):", ds.ids.len(), res.trimmed.len());
    for id in outlier_report(&res, &ds.ids) {
        println!("  {id}");
    }
    if let Some(truth) = &ds.labels {
        let labels = reassign_trimmed(&res, ds.curves.gamma(), &gram)?;
        println!("CCR against {:?}: {:.3}", ds.label_names, ccr(&labels, truth, 2)?);
    }
    Ok(())
}
