//! Weighted functional PCA of one simulated group.

use rfclust::basis::gram_matrix;
use rfclust::fpca::weighted_fpca;
use rfclust::simulate::{generate_clean, ScenarioSpec};

fn main() -> rfclust::Result<()> {
    let spec = ScenarioSpec::scenario1();
    let data = generate_clean(&spec, 5)?;
    let gram = gram_matrix(data.curves.basis())?;

    // indicator weights of the second group
    let tau: Vec<f64> = data.truth().iter().map(|l| if *l == Some(1) { 1.0 } else { 0.0 }).collect();
    let res = weighted_fpca(data.curves.gamma(), &tau, &gram)?;
    let top: Vec<String> = res.eigenvalues.iter().take(5).map(|v| format!("{v:.1}")).collect();
    println!("group 2 leading eigenvalues: {}", top.join(", "));
    println!("true main variances: {:?}, noise {}", spec.main_variances[1], spec.noise_variances[1]);
    println!("total variance {:.1} over mass {}", res.total_variance, res.mass);
    Ok(())
}
