//! Per-pipeline runtime prediction from dataset size.
//!
//! Runtimes are regressed on all monomials of total degree at most 3 in
//! `(n, p, ln n, ln p)`, where `n` is the number of data points and `p` the
//! number of features. Each variable is centered and scaled by its training
//! mean and standard deviation before the monomials are formed; this spans the
//! same polynomial space with far better conditioning.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq_min_norm;

/// Predictions never fall below this many seconds.
pub const RUNTIME_FLOOR: f64 = 1e-3;

const MAX_DEGREE: u8 = 3;
const VARS: [&str; 4] = ["n", "p", "ln_n", "ln_p"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeObservation {
    pub n_points: u64,
    pub n_features: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimePredictor {
    /// Coefficients over the standardized monomials, in [`basis_signature`] order.
    coefficients: Vec<f64>,
    center: [f64; 4],
    scale: [f64; 4],
}

/// Exponents of `(n, p, ln n, ln p)`, by degree then lexicographically.
fn exponents() -> Vec<[u8; 4]> {
    let mut out = Vec::new();
    for deg in 0..=MAX_DEGREE {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                for c in (0..=deg - a - b).rev() {
                    out.push([a, b, c, deg - a - b - c]);
                }
            }
        }
    }
    out
}

/// Names of the basis monomials in coefficient order, e.g. `n^2*ln_p`.
pub fn basis_signature() -> Vec<String> {
    exponents()
        .iter()
        .map(|e| {
            let parts: Vec<String> = e
                .iter()
                .zip(VARS)
                .filter(|(&k, _)| k > 0)
                .map(|(&k, v)| if k == 1 { v.to_string() } else { format!("{v}^{k}") })
                .collect();
            if parts.is_empty() {
                "1".to_string()
            } else {
                parts.join("*")
            }
        })
        .collect()
}

pub fn basis_size() -> usize {
    exponents().len()
}

fn raw_variables(n_points: u64, n_features: u64) -> Result<[f64; 4]> {
    if n_points == 0 || n_features == 0 {
        return Err(Error::arg("dataset dimensions must be positive"));
    }
    let (n, p) = (n_points as f64, n_features as f64);
    Ok([n, p, n.ln(), p.ln()])
}

fn monomials(z: [f64; 4], center: &[f64; 4], scale: &[f64; 4]) -> Vec<f64> {
    let base: Vec<f64> = (0..4).map(|i| (z[i] - center[i]) / scale[i]).collect();
    exponents()
        .iter()
        .map(|e| e.iter().zip(&base).map(|(&k, b)| b.powi(k as i32)).product())
        .collect()
}

/// Residual measure minimized by [`fit_runtime_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `sum ((t_i - f(x_i)) / t_i)^2`. Runtimes span orders of magnitude, and
    /// accuracy is judged by ratios.
    #[default]
    Relative,
    /// `sum (t_i - f(x_i))^2`.
    Absolute,
}

/// [`fit_runtime_with`] using [`Weighting::Relative`].
pub fn fit_runtime(observations: &[RuntimeObservation]) -> Result<RuntimePredictor> {
    fit_runtime_with(observations, Weighting::Relative)
}

/// Least-squares fit of seconds on the monomial basis; columns are scaled to
/// unit norm before a minimum-norm solve.
pub fn fit_runtime_with(observations: &[RuntimeObservation], weighting: Weighting) -> Result<RuntimePredictor> {
    if observations.is_empty() {
        return Err(Error::arg("no runtime observations"));
    }
    let vars: Vec<[f64; 4]> = observations
        .iter()
        .map(|o| {
            if !(o.seconds.is_finite() && o.seconds > 0.0) {
                return Err(Error::arg(format!("runtime {} is not positive", o.seconds)));
            }
            raw_variables(o.n_points, o.n_features)
        })
        .collect::<Result<_>>()?;
    let count = vars.len() as f64;
    let mut center = [0.0; 4];
    let mut scale = [1.0; 4];
    for i in 0..4 {
        center[i] = vars.iter().map(|z| z[i]).sum::<f64>() / count;
        let var = vars.iter().map(|z| (z[i] - center[i]).powi(2)).sum::<f64>() / count;
        if var > 0.0 {
            scale[i] = var.sqrt();
        }
    }
    let rows: Vec<Vec<f64>> = vars.iter().map(|&z| monomials(z, &center, &scale)).collect();
    let nb = basis_size();
    let weight = |i: usize| match weighting {
        Weighting::Relative => 1.0 / observations[i].seconds,
        Weighting::Absolute => 1.0,
    };
    let mut a = DMatrix::from_fn(rows.len(), nb, |i, j| rows[i][j] * weight(i));
    let scales: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let norm = c.norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col /= scales[j];
    }
    let b = DVector::from_fn(observations.len(), |i, _| observations[i].seconds * weight(i));
    let w = lstsq_min_norm(&a, &b)?;
    Ok(RuntimePredictor {
        coefficients: w.iter().zip(&scales).map(|(w, s)| w / s).collect(),
        center,
        scale,
    })
}

impl RuntimePredictor {
    /// Predictor over unstandardized monomials of `(n, p, ln n, ln p)`.
    pub fn from_coefficients(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis_size() {
            return Err(Error::arg(format!(
                "expected {} coefficients, got {}",
                basis_size(),
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("coefficients must be finite"));
        }
        Ok(RuntimePredictor { coefficients, center: [0.0; 4], scale: [1.0; 4] })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Unfloored polynomial value.
    pub fn raw(&self, n_points: u64, n_features: u64) -> Result<f64> {
        let f = monomials(raw_variables(n_points, n_features)?, &self.center, &self.scale);
        Ok(f.iter().zip(&self.coefficients).map(|(x, c)| x * c).sum())
    }

    pub fn predict(&self, n_points: u64, n_features: u64) -> Result<f64> {
        let v = self.raw(n_points, n_features)?;
        Ok(if v.is_finite() { v.max(RUNTIME_FLOOR) } else { RUNTIME_FLOOR })
    }
}

pub fn predict_runtime(p: &RuntimePredictor, n_points: u64, n_features: u64) -> Result<f64> {
    p.predict(n_points, n_features)
}

/// Fraction of indices where `max(pred / truth, truth / pred) <= factor`.
pub fn within_factor_accuracy(truth: &[f64], pred: &[f64], factor: f64) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::arg("truth and prediction lengths differ"));
    }
    if truth.is_empty() {
        return Err(Error::arg("no values to compare"));
    }
    if !(factor >= 1.0) {
        return Err(Error::arg(format!("factor {factor} below 1")));
    }
    if truth.iter().chain(pred).any(|v| !(*v > 0.0)) {
        return Err(Error::arg("runtimes must be positive"));
    }
    let hits = truth
        .iter()
        .zip(pred)
        .filter(|(t, p)| (*p / *t).max(*t / *p) <= factor)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}
