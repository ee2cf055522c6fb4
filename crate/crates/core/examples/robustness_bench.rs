//! A small replicated sweep over trimming and constraint levels.

use std::collections::BTreeMap;

use rfclust::cli::bench_rows;
use rfclust::io::RunConfig;

fn main() -> rfclust::Result<()> {
    let cfg = RunConfig {
        scenario: "scenario2".into(),
        contamination: "cont-iv".into(),
        dims: Some(vec![2, 3]),
        replicates: 4,
        nstart: 20,
        alphas: Some(vec![0.0, 0.1]),
        constraint_levels: Some(vec![1.0, 10.0, 1e10]),
        ..RunConfig::default()
    };
    let mut by_setting: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in bench_rows(&cfg)? {
        by_setting.entry(format!("alpha={} d={:e}", row.alpha, row.d)).or_default().push(row.ccr);
    }
    for (setting, rates) in by_setting {
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        println!("{setting:20} mean CCR {mean:.3}  {rates:.3?}");
    }
    Ok(())
}
