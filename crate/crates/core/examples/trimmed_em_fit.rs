//! A trimmed, constrained fit with fixed dimensions.

use rfclust::basis::gram_matrix;
use rfclust::em::{fit, FitConfig};
use rfclust::metrics::{ccr, reassign_trimmed};
use rfclust::simulate::{make_dataset, ContaminationSpec, ScenarioSpec};

fn main() -> rfclust::Result<()> {
    let scenario = ScenarioSpec::scenario2();
    let data = make_dataset(&scenario, &ContaminationSpec::preset("cont-iv")?, 21)?;
    let gram = gram_matrix(data.curves.basis())?;
    let cfg = FitConfig { dims: vec![2, 3], alpha: 0.1, d1: 10.0, d2: 10.0, seed: 4, ..FitConfig::default() };
    let res = fit(data.curves.gamma(), &gram, &cfg)?;

    println!("trimmed log-likelihood {:.2} after {} iterations (converged: {})", res.loglik, res.iterations, res.converged);
    println!("weights {:.3?}", res.params.pi);
    println!("main variances {:.2?}", res.params.scatter.a);
    println!("noise variances {:.3?}", res.params.scatter.b);
    let planted = res.trimmed.indices.iter().filter(|&&i| data.truth()[i].is_none()).count();
    println!("trimmed {} curves, {planted} of them planted outliers", res.trimmed.len());
    let labels = reassign_trimmed(&res, data.curves.gamma(), &gram)?;
    println!("CCR {:.3}", ccr(&labels, &data.truth(), 2)?);
    Ok(())
}
