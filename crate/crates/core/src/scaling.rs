//! Power-law exponents from log-log least squares.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Values below this are floored before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Ordinary least squares of `ln value` against `ln n`.
pub fn fit_log_log(ns: &[usize], values: &[f64]) -> Result<LogLogFit> {
    if ns.len() != values.len() {
        return Err(Error::Dimension(format!("{} sizes vs {} values", ns.len(), values.len())));
    }
    if ns.len() < 2 {
        return Err(Error::InvalidParam("need at least two points for a fit".into()));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.max(LOG_FLOOR).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParam("all sizes identical".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual =
        (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / m).sqrt();
    Ok(LogLogFit { slope, intercept, residual })
}

/// Result of a sweep over system sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub family: String,
    pub measure: String,
    pub n_grid: Vec<usize>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_hat: Option<f64>,
    /// Sizes at which an optimizer stopped on its iteration budget.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unconverged: Vec<usize>,
}

impl ScalingFit {
    pub fn from_values(family: &str, measure: &str, n_grid: &[usize], values: Vec<f64>) -> Result<Self> {
        let fit = fit_log_log(n_grid, &values)?;
        Ok(ScalingFit {
            family: family.to_string(),
            measure: measure.to_string(),
            n_grid: n_grid.to_vec(),
            values,
            slope: fit.slope,
            intercept: fit.intercept,
            residual: fit.residual,
            p_hat: None,
            q_hat: None,
            unconverged: Vec::new(),
        })
    }
}
