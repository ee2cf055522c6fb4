//! Choosing per-group dimensions by BIC.

use rfclust::basis::gram_matrix;
use rfclust::em::FitConfig;
use rfclust::selection::{select_dimensions, DimGrid};
use rfclust::simulate::{make_dataset, ContaminationSpec, ScenarioSpec};

fn main() -> rfclust::Result<()> {
    let data = make_dataset(&ScenarioSpec::scenario1(), &ContaminationSpec::none(), 8)?;
    let gram = gram_matrix(data.curves.basis())?;
    let base = FitConfig { alpha: 0.1, d1: 10.0, d2: 10.0, nstart: 30, seed: 2, ..FitConfig::default() };
    let sel = select_dimensions(data.curves.gamma(), &gram, &DimGrid::product(2, 1, 4), &base)?;
    println!("{:>6} {:>12} {:>6} {:>12}", "dims", "loglik", "kappa", "bic");
    for row in &sel.table {
        let mark = if row.dims == sel.table[sel.best_index].dims { " <" } else { "" };
        println!("{:>6} {:>12.2} {:>6} {:>12.2}{mark}", format!("{:?}", row.dims), row.loglik, row.kappa, row.bic);
    }
    Ok(())
}
