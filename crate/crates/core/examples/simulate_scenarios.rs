//! Scenario datasets with each contamination scheme.

use rfclust::simulate::{clean_range, make_dataset, ContaminationSpec, ScenarioSpec};

fn main() -> rfclust::Result<()> {
    for scenario in [ScenarioSpec::scenario1(), ScenarioSpec::scenario2()] {
        for scheme in ["cont-i", "cont-ii", "cont-iii", "cont-iv"] {
            let data = make_dataset(&scenario, &ContaminationSpec::preset(scheme)?, 1)?;
            let (lo, hi) = clean_range(&data)?;
            println!(
                "{} {scheme:8}: n = {}, outliers = {}, clean range [{lo:.1}, {hi:.1}]",
                scenario.name,
                data.curves.len(),
                data.outlier_count()
            );
        }
    }
    Ok(())
}
