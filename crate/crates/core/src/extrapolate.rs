//! Linear extrapolation of energies against the normalized energy variance.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub variance: f64,
    pub energy: f64,
    pub stderr: Option<f64>,
}

impl Point {
    pub fn new(variance: f64, energy: f64) -> Self {
        Self { variance, energy, stderr: None }
    }

    pub fn with_stderr(variance: f64, energy: f64, stderr: f64) -> Self {
        Self { variance, energy, stderr: Some(stderr) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    /// Zero-variance estimate.
    pub intercept: f64,
    pub slope: f64,
    /// From the inverse normal matrix when point errors are given; from the
    /// residual scatter for unweighted fits with more than two points.
    pub intercept_stderr: Option<f64>,
    pub r_squared: f64,
    /// `energy − fit` at each input point.
    pub residuals: Vec<f64>,
    pub weighted: bool,
}

/// Weighted least squares `E = a + b·Δ`. Weights are `1/σ²` when every
/// point carries a positive error, uniform otherwise.
pub fn fit_linear(points: &[Point]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: points.len() });
    }
    for p in points {
        if !(p.variance > 0.0) || !p.variance.is_finite() || !p.energy.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "variance must be positive and finite, got {}",
                p.variance
            )));
        }
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.variance).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateFit("duplicate variances".into()));
    }
    let weighted = points.iter().all(|p| p.stderr.is_some_and(|s| s > 0.0));
    let w: Vec<f64> = points
        .iter()
        .map(|p| if weighted { 1.0 / (p.stderr.unwrap() * p.stderr.unwrap()) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let xm = points.iter().zip(&w).map(|(p, w)| w * p.variance).sum::<f64>() / sw;
    let ym = points.iter().zip(&w).map(|(p, w)| w * p.energy).sum::<f64>() / sw;
    let sxx: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.variance - xm) * (p.variance - xm)).sum();
    let sxy: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.variance - xm) * (p.energy - ym)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("variances span no range".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = points.iter().map(|p| p.energy - (intercept + slope * p.variance)).collect();
    let ss_res: f64 = residuals.iter().zip(&w).map(|(r, w)| w * r * r).sum();
    let ss_tot: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.energy - ym) * (p.energy - ym)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    // var(a) = (1/Σw + x̄²/Sxx) · s², s² = 1 for absolute weights
    let leverage = 1.0 / sw + xm * xm / sxx;
    let intercept_stderr = if weighted {
        Some(math::sqrt(leverage))
    } else if points.len() > 2 {
        Some(math::sqrt(leverage * ss_res / (points.len() - 2) as f64))
    } else {
        None
    };
    Ok(LinearFit { intercept, slope, intercept_stderr, r_squared, residuals, weighted })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<Point> = [1e-3, 2e-3, 4e-3].iter().map(|&x| Point::new(x, -1.5 + 3.0 * x)).collect();
        let f = fit_linear(&pts).unwrap();
        assert!((f.intercept + 1.5).abs() < 1e-14);
        assert!((f.slope - 3.0).abs() < 1e-10);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn two_points_interpolate() {
        let f = fit_linear(&[Point::new(1.0, 2.0), Point::new(3.0, 8.0)]).unwrap();
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert_eq!(f.intercept_stderr, None);
    }

    #[test]
    fn duplicates_rejected() {
        let e = fit_linear(&[Point::new(1.0, 2.0), Point::new(1.0, 3.0)]);
        assert!(matches!(e, Err(Error::DegenerateFit(_))));
    }
}
