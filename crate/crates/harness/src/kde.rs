//! Gaussian kernel density estimates with Silverman's bandwidth.

use crate::bands::quantile;
use crate::error::{HarnessError, Result};

/// `0.9 · min(sd, IQR / 1.34) · n^(-1/5)`, falling back to whichever
/// spread is positive.
pub fn silverman_bandwidth(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(HarnessError::Degenerate("density needs at least 2 points".into()));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = (quantile(&s, 0.75) - quantile(&s, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return Err(HarnessError::Degenerate("all values are equal".into())),
    };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Density of `x` evaluated at each grid point.
pub fn gaussian_kde(x: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::Degenerate("non-finite value in density input".into()));
    }
    let h = silverman_bandwidth(x)?;
    let norm = 1.0 / (x.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| norm * x.iter().map(|&v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>())
        .collect())
}

/// `n` evenly spaced points from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use stcv_core::rng::stream;

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(&[seed]);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn bandwidth_of_normal_sample() {
        let x = normal_sample(4000, 1);
        let h = silverman_bandwidth(&x).unwrap();
        let expected = 0.9 * 4000f64.powf(-0.2);
        assert!((h / expected - 1.0).abs() < 0.05, "{h} vs {expected}");
    }

    #[test]
    fn integrates_to_one_and_tracks_normal_density() {
        let x = normal_sample(4000, 2);
        let grid = linspace(-6.0, 6.0, 1201);
        let d = gaussian_kde(&x, &grid).unwrap();
        let step = grid[1] - grid[0];
        let mass: f64 = d.iter().sum::<f64>() * step;
        assert!((mass - 1.0).abs() < 1e-3);
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((d[600] - phi0).abs() < 0.03, "{}", d[600]);
    }

    #[test]
    fn hand_computed_two_points() {
        // values 0 and 2: sd = √2, IQR / 1.34 = 1 / 1.34
        let h = silverman_bandwidth(&[0.0, 2.0]).unwrap();
        let expected = 0.9 * (1.0f64 / 1.34) * 2f64.powf(-0.2);
        assert!((h - expected).abs() < 1e-12);
        let d = gaussian_kde(&[0.0, 2.0], &[1.0]).unwrap()[0];
        let k = (-0.5 * (1.0 / h).powi(2)).exp() / (h * (2.0 * std::f64::consts::PI).sqrt());
        assert!((d - k).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(silverman_bandwidth(&[1.0]).is_err());
        assert!(silverman_bandwidth(&[3.0, 3.0, 3.0]).is_err());
        assert!(gaussian_kde(&[1.0, f64::NAN], &[0.0]).is_err());
    }
}
