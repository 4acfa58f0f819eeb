//! Pointwise bootstrap bands over simulation replicates.

use rand::Rng;
use stcv_core::rng::stream;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub mid: f64,
    pub hi: f64,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Quantile of sorted data with linear interpolation between order
/// statistics (`(n - 1) q` positions).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Resamples `n_replicates` replicate indices with replacement `b` times,
/// evaluates `statistic` on each resample and returns the pointwise 2.5%,
/// 50% and 97.5% percentiles of the resulting curves. Non-finite curve
/// points are ignored; a point with no finite value yields NaN.
pub fn bootstrap_bands<F>(n_replicates: usize, b: usize, seed: u64, statistic: F) -> Result<Vec<Band>>
where
    F: Fn(&[usize]) -> Vec<f64>,
{
    if n_replicates < 2 {
        return Err(HarnessError::Degenerate(format!(
            "bootstrap bands need at least 2 replicates, got {n_replicates}"
        )));
    }
    if b == 0 {
        return Err(HarnessError::config("bootstrap count must be at least 1"));
    }
    let mut rng = stream(&[seed]);
    let mut draw = vec![0usize; n_replicates];
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(b);
    for _ in 0..b {
        for d in draw.iter_mut() {
            *d = rng.random_range(0..n_replicates);
        }
        curves.push(statistic(&draw));
    }
    let len = curves[0].len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(HarnessError::Degenerate("statistic returned curves of differing length".into()));
    }
    Ok((0..len)
        .map(|i| {
            let mut col: Vec<f64> = curves.iter().map(|c| c[i]).filter(|v| v.is_finite()).collect();
            if col.is_empty() {
                return Band {
                    lo: f64::NAN,
                    mid: f64::NAN,
                    hi: f64::NAN,
                };
            }
            col.sort_by(f64::total_cmp);
            Band {
                lo: quantile(&col, 0.025),
                mid: quantile(&col, 0.5),
                hi: quantile(&col, 0.975),
            }
        })
        .collect())
}

/// Bands for the pointwise mean curve of a replicate table (one curve per
/// replicate, all of equal length).
pub fn bootstrap_mean_bands(table: &[Vec<f64>], b: usize, seed: u64) -> Result<Vec<Band>> {
    let len = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != len) {
        return Err(HarnessError::Degenerate("replicate curves differ in length".into()));
    }
    bootstrap_bands(table.len(), b, seed, |idx| {
        (0..len)
            .map(|i| {
                let vals: Vec<f64> = idx.iter().map(|&r| table[r][i]).filter(|v| v.is_finite()).collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect()
    })
}
