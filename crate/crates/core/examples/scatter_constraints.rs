//! Projecting raw variance estimates onto the ratio-constrained set.

use rfclust::constraints::{enforce, optimal_threshold_a, ScatterSet};

fn main() -> rfclust::Result<()> {
    let raw = ScatterSet {
        a: vec![vec![250.0, 40.0], vec![3.0, 1.5, 0.9]],
        b: vec![0.02, 1.0],
        counts: vec![80.0, 120.0],
        dims: vec![2, 3],
        p: 21,
    };
    println!("raw ratios: a {:.1}, b {:.1}", raw.ratio_a(), raw.ratio_b());
    for d in [1.0, 10.0, 1e10] {
        let m = optimal_threshold_a(&raw.a, &raw.counts, d)?;
        let out = enforce(&raw, d, d)?;
        println!("d = {d:e}: m_a = {m:.3}, a = {:?}, b = {:?}", out.a, out.b);
    }
    Ok(())
}
