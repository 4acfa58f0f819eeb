use crate::error::{Error, Result};

/// Aggregated loss over `n` test points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub n: usize,
}

/// Mean squared error.
pub fn mse_loss(y_true: &[f64], y_pred: &[f64]) -> Result<LossValue> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} outcomes vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("loss over an empty set"));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in loss input"));
    }
    let sum: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(LossValue {
        value: sum / y_true.len() as f64,
        n: y_true.len(),
    })
}
