use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points per rolling-band window, centered and truncated at the ends.
pub const BAND_WINDOW: usize = 10;

/// Least-squares polynomial in the standardized variable `(x - center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub center: f64,
    pub scale: f64,
    /// Lowest order first.
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }
}

/// Ordinary least squares on standardized `x`.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Polynomial> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Contract("x and y lengths differ".into()));
    }
    if n <= degree {
        return Err(Error::Rejected(format!("degree-{degree} fit needs more than {degree} points, got {n}")));
    }
    let center = x.iter().sum::<f64>() / n as f64;
    let spread = x.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let k = degree + 1;
    let vander = DMatrix::from_fn(n, k, |r, c| ((x[r] - center) / scale).powi(c as i32));
    let rhs = DVector::from_column_slice(y);
    let svd = vander.svd(true, true);
    if svd.rank(1e-12 * svd.singular_values.max()) < k {
        return Err(Error::Numeric { step: 0, what: format!("degree-{degree} trend fit is rank deficient") });
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Numeric { step: 0, what: format!("trend fit: {e}") })?;
    let coefficients = sol.iter().copied().collect();
    Ok(Polynomial { center, scale, coefficients })
}

/// Population standard deviation of `values` over a centered window of
/// [`BAND_WINDOW`] points, truncated at both ends.
pub fn rolling_band(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let half = BAND_WINDOW / 2;
    (0..n)
        .map(|i| {
            let w = &values[i.saturating_sub(half)..(i + BAND_WINDOW - half).min(n)];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    /// Slope and intercept of the straight-line fit, in raw `x` units.
    pub slope: f64,
    pub intercept: f64,
    pub fit: Polynomial,
    pub fitted: Vec<f64>,
    /// Rolling dispersion of the residuals about `fit`.
    pub band: Vec<f64>,
    /// Cubic fit kept for comparison when `fit` is not already cubic.
    pub cubic: Option<Polynomial>,
}

pub fn trend_fit(x: &[f64], y: &[f64], degree: usize) -> Result<Trend> {
    if x.len() < 3 {
        return Err(Error::Rejected(format!("trend fit needs at least 3 points, got {}", x.len())));
    }
    if degree == 0 {
        return Err(Error::Config("trend degree must be at least 1".into()));
    }
    let line = polyfit(x, y, 1)?;
    let slope = line.coefficients[1] / line.scale;
    let intercept = line.coefficients[0] - slope * line.center;
    let fit = if degree == 1 { line } else { polyfit(x, y, degree)? };
    let fitted: Vec<f64> = x.iter().map(|&v| fit.eval(v)).collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let cubic = if degree != 3 && x.len() > 3 { Some(polyfit(x, y, 3)?) } else { None };
    Ok(Trend { slope, intercept, fit, band: rolling_band(&residuals), fitted, cubic })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_band() {
        let x: Vec<f64> = (0..20).map(|k| 2.5 + 5.0 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|a| -0.01 * a + 2.0).collect();
        let t = trend_fit(&x, &y, 1).unwrap();
        assert!((t.slope + 0.01).abs() < 1e-12);
        assert!((t.intercept - 2.0).abs() < 1e-12);
        assert!(t.band.iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn constant_points() {
        let t = trend_fit(&[0.0, 1.0, 2.0, 3.0], &[4.0; 4], 1).unwrap();
        assert!(t.slope.abs() < 1e-15);
        assert!(t.band.iter().all(|b| b.abs() < 1e-15));
    }

    #[test]
    fn three_point_normal_equations() {
        let t = trend_fit(&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0], 1).unwrap();
        assert!(t.slope.abs() < 1e-12);
        assert!((t.intercept - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_recovers_cubic() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v * v).collect();
        let t = trend_fit(&x, &y, 3).unwrap();
        assert!(t.band.iter().all(|b| b.abs() < 1e-9));
        assert!((t.fit.eval(11.0) - (1.0 - 22.0 + 0.5 * 1331.0)).abs() < 1e-8);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(trend_fit(&[0.0, 1.0], &[0.0, 1.0], 1), Err(Error::Rejected(_))));
    }

    #[test]
    fn band_window_is_truncated_at_ends() {
        let v: Vec<f64> = (0..12).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let b = rolling_band(&v);
        assert_eq!(b.len(), 12);
        // first window covers indices 0..5: three +1 and two -1
        let mean = 0.2;
        let want = ((3.0 * (1.0f64 - mean).powi(2) + 2.0 * (1.0f64 + mean).powi(2)) / 5.0).sqrt();
        assert!((b[0] - want).abs() < 1e-12);
        assert!((b[5] - 1.0).abs() < 1e-12);
    }
}
