//! Locally weighted linear regression with robustness iterations.

use crate::error::{HarnessError, Result};

pub const ROBUSTNESS_ITERATIONS: usize = 2;

fn tricube(u: f64) -> f64 {
    let a = u.abs();
    if a >= 1.0 {
        0.0
    } else {
        let t = 1.0 - a * a * a;
        t * t * t
    }
}

fn bisquare(u: f64) -> f64 {
    let a = u.abs();
    if a >= 1.0 {
        0.0
    } else {
        let t = 1.0 - a * a;
        t * t
    }
}

/// Weighted linear fit over `xs[lo..hi]` evaluated at `x0`.
fn local_fit(xs: &[f64], ys: &[f64], robust: &[f64], lo: usize, hi: usize, x0: f64, h: f64) -> f64 {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let mut w = Vec::with_capacity(hi - lo);
    for j in lo..hi {
        let wj = if h > 0.0 { tricube((xs[j] - x0) / h) } else { 1.0 } * robust[j];
        w.push(wj);
        sw += wj;
        sx += wj * xs[j];
        sy += wj * ys[j];
    }
    if sw <= 0.0 {
        // every neighbour down-weighted to zero; fall back to the plain mean
        return ys[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (k, j) in (lo..hi).enumerate() {
        let dx = xs[j] - mx;
        sxx += w[k] * dx * dx;
        sxy += w[k] * dx * (ys[j] - my);
    }
    let range = xs[hi - 1] - xs[lo];
    if sxx <= 1e-12 * sw * range * range || range == 0.0 {
        return my;
    }
    my + sxy / sxx * (x0 - mx)
}

/// Smooths `y` against `x` with span `fraction` (share of points in each
/// local neighbourhood), tricube distance weights and two bisquare
/// robustness passes. Returns `(x, fitted)` at the sorted unique `x`.
pub fn lowess(x: &[f64], y: &[f64], fraction: f64) -> Result<Vec<(f64, f64)>> {
    if x.len() != y.len() {
        return Err(HarnessError::Degenerate(format!("x has {} values, y has {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(HarnessError::Degenerate(format!("lowess needs at least 3 points, got {n}")));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(HarnessError::Degenerate(format!("fraction {fraction} outside (0, 1]")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(HarnessError::Degenerate("non-finite input".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    if xs[0] == xs[n - 1] {
        return Err(HarnessError::Degenerate("all x values are equal".into()));
    }
    let q = ((fraction * n as f64).ceil() as usize).clamp(2, n);

    let mut robust = vec![1.0; n];
    let mut fitted = vec![0.0; n];
    for iter in 0..=ROBUSTNESS_ITERATIONS {
        // window of q nearest neighbours slides monotonically with x
        let mut lo = 0;
        for i in 0..n {
            if i > 0 && xs[i] == xs[i - 1] {
                fitted[i] = fitted[i - 1];
                continue;
            }
            while lo + q < n && xs[i] - xs[lo] > xs[lo + q] - xs[i] {
                lo += 1;
            }
            let hi = lo + q;
            let h = (xs[i] - xs[lo]).max(xs[hi - 1] - xs[i]);
            // extend over ties at the window edges
            let (mut a, mut b) = (lo, hi);
            while a > 0 && xs[i] - xs[a - 1] <= h {
                a -= 1;
            }
            while b < n && xs[b] - xs[i] <= h {
                b += 1;
            }
            fitted[i] = local_fit(&xs, &ys, &robust, a, b, xs[i], h * 1.000_001);
        }
        if iter == ROBUSTNESS_ITERATIONS {
            break;
        }
        let mut abs_res: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| (y - f).abs()).collect();
        let res = abs_res.clone();
        abs_res.sort_by(f64::total_cmp);
        let s = crate::bands::quantile(&abs_res, 0.5);
        if s <= 1e-12 * ys.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300) {
            break;
        }
        for (r, e) in robust.iter_mut().zip(&res) {
            *r = bisquare(e / (6.0 * s));
        }
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        if i == 0 || xs[i] != xs[i - 1] {
            out.push((xs[i], fitted[i]));
        }
    }
    Ok(out)
}

/// Linear interpolation of a curve sorted by `x`, held constant beyond
/// its ends.
pub fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    match curve.partition_point(|&(cx, _)| cx < x) {
        0 => curve[0].1,
        k if k == curve.len() => curve[k - 1].1,
        k => {
            let (x0, y0) = curve[k - 1];
            let (x1, y1) = curve[k];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use stcv_core::rng::stream;

    #[test]
    fn reproduces_lines() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        for frac in [0.2, 0.5, 1.0] {
            for (xv, f) in lowess(&x, &y, frac).unwrap() {
                assert!((f - (2.5 * xv - 1.0)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn constant_stays_constant() {
        let x: Vec<f64> = (0..25).map(f64::from).collect();
        let curve = lowess(&x, &[4.2; 25], 0.3).unwrap();
        assert_eq!(curve.len(), 25);
        assert!(curve.iter().all(|&(_, f)| (f - 4.2).abs() < 1e-12));
    }

    #[test]
    fn smooths_noisy_sine() {
        let mut rng = stream(&[4]);
        let n = 300;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 2.0 * std::f64::consts::PI / n as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin() + 0.4 * rng.sample::<f64, _>(StandardNormal)).collect();
        let curve = lowess(&x, &y, 0.3).unwrap();
        let rmse = |f: &dyn Fn(usize) -> f64| ((0..n).map(|i| (f(i) - x[i].sin()).powi(2)).sum::<f64>() / n as f64).sqrt();
        let smooth = rmse(&|i| curve[i].1);
        let raw = rmse(&|i| y[i]);
        assert!(smooth < raw, "{smooth} vs {raw}");
        assert!(smooth < 0.15);
    }

    #[test]
    fn robust_to_outliers() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v + 0.1 * (3.0 * v).sin()).collect();
        y[15] = 100.0;
        let curve = lowess(&x, &y, 0.5).unwrap();
        assert!((curve[15].1 - 7.5).abs() < 0.5, "{}", curve[15].1);
    }

    #[test]
    fn ties_give_one_output_per_unique_x() {
        let x = [1.0, 1.0, 2.0, 3.0, 3.0, 4.0];
        let y = [1.0, 3.0, 4.0, 5.0, 7.0, 8.0];
        let curve = lowess(&x, &y, 0.8).unwrap();
        assert_eq!(curve.iter().map(|c| c.0).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(lowess(&[1.0, 2.0], &[1.0, 2.0], 0.5).is_err());
        assert!(lowess(&[2.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).is_err());
        assert!(lowess(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.0).is_err());
        assert!(lowess(&[1.0, 2.0, 3.0], &[1.0, f64::NAN, 3.0], 0.5).is_err());
    }

    #[test]
    fn interpolation_clamps_at_ends() {
        let c = [(0.0, 1.0), (2.0, 3.0)];
        assert_eq!(interpolate(&c, -1.0), 1.0);
        assert_eq!(interpolate(&c, 1.0), 2.0);
        assert_eq!(interpolate(&c, 5.0), 3.0);
    }
}
