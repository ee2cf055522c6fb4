//! Fourier and B-spline bases: Gram matrix, half powers and a least-squares
//! coefficient fit of sampled curves.

use nalgebra::DMatrix;
use rfclust::basis::{fit_coefficients, gram_matrix, BasisSpec, GridSamples};

fn main() -> rfclust::Result<()> {
    let fourier = BasisSpec::fourier(5, 0.0, 1.0)?;
    let w = gram_matrix(&fourier)?;
    println!("Fourier p=5 Gram diagonal: {:?}", w.w().diagonal().as_slice());

    let spline = BasisSpec::bspline(15, 3, 0.0, 23.0)?;
    let w = gram_matrix(&spline)?;
    let check = w.half() * w.half() - w.w();
    println!("B-spline order 3, p=15: |W^1/2 W^1/2 - W| = {:.2e}", check.amax());

    // two hourly curves
    let grid: Vec<f64> = (0..24).map(f64::from).collect();
    let values = DMatrix::from_fn(2, 24, |i, h| {
        let t = h as f64;
        50.0 + 40.0 * (-((t - 8.0 - i as f64) / 3.0).powi(2)).exp()
    });
    let curves = fit_coefficients(&GridSamples::new(grid.clone(), values.clone())?, &spline)?;
    let fitted = curves.evaluate_on(&grid)?;
    println!("fitted {} curves, max residual {:.3}", curves.len(), (fitted - values).amax());
    Ok(())
}
