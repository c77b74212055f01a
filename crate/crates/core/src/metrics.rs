//! Per-demonstration prediction quality: MSE, RMSE and the evaluation score
//! of MSE against the truth-mean predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoMetrics {
    pub demo_id: u64,
    pub eps_mse: f64,
    pub eps_rmse: f64,
    pub eps_mse_ref: f64,
    /// `None` when the truth series is constant and the score is undefined.
    pub beta_mse: Option<f64>,
}

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "metric series lengths {} and {} must match and be non-zero",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// `(mse, rmse)`.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    check(pred, truth)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok((mse, mse.sqrt()))
}

/// MSE of always predicting the mean of the truth.
pub fn reference_mse(truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    truth.iter().map(|t| (mean - t).powi(2)).sum::<f64>() / n
}

/// `(mse - mse_ref) / (0 - mse_ref)`.
pub fn eval_score(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let (mse, _) = rmse(pred, truth)?;
    let r = reference_mse(truth);
    if r == 0.0 {
        return Err(Error::UndefinedScore);
    }
    Ok((mse - r) / (0.0 - r))
}

pub fn demo_metrics(demo_id: u64, pred: &[f64], truth: &[f64]) -> Result<DemoMetrics> {
    let (eps_mse, eps_rmse) = rmse(pred, truth)?;
    let beta_mse = match eval_score(pred, truth) {
        Ok(b) => Some(b),
        Err(Error::UndefinedScore) => None,
        Err(e) => return Err(e),
    };
    Ok(DemoMetrics {
        demo_id,
        eps_mse,
        eps_rmse,
        eps_mse_ref: reference_mse(truth),
        beta_mse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub beta_bar: f64,
    pub rmse_bar: f64,
    pub n_valid: usize,
    pub n_excluded: usize,
}

/// Means over demonstrations with a defined score; the rest are counted.
pub fn aggregate(metrics: &[DemoMetrics]) -> Result<Aggregate> {
    let valid: Vec<&DemoMetrics> = metrics.iter().filter(|m| m.beta_mse.is_some()).collect();
    if valid.is_empty() {
        return Err(Error::Rejected(format!(
            "no demonstration has a defined evaluation score ({} excluded)",
            metrics.len()
        )));
    }
    let n = valid.len() as f64;
    Ok(Aggregate {
        beta_bar: valid.iter().filter_map(|m| m.beta_mse).sum::<f64>() / n,
        rmse_bar: valid.iter().map(|m| m.eps_rmse).sum::<f64>() / n,
        n_valid: valid.len(),
        n_excluded: metrics.len() - valid.len(),
    })
}
