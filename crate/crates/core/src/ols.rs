//! Ordinary least squares with an intercept and homoskedastic standard errors.
//!
//! Works on centered cross-products and a Cholesky factorization, which is
//! plenty for the handful of regressors used here. A column whose residual
//! variance after projecting on the earlier columns is negligible makes the
//! design rank deficient and is reported by name.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SMALL_SAMPLE: usize = 30;
const COLLINEARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: IndexMap<String, f64>,
    pub std_errors: IndexMap<String, f64>,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_obs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RegressionResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.coefficients.get(name).copied()
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.std_errors.get(name).copied()
    }
}

/// Regresses `y` on the named columns plus a constant.
pub fn ols(y: &[f64], regressors: &[(&str, &[f64])]) -> Result<RegressionResult> {
    let n = y.len();
    let p = regressors.len();
    if let Some((name, _)) = regressors.iter().find(|(_, x)| x.len() != n) {
        return Err(Error::Argument(format!("column {name} has a different length than y")));
    }
    if n < p + 2 {
        return Err(Error::InsufficientData(format!(
            "{n} observations cannot identify {p} slopes, an intercept and a residual variance"
        )));
    }
    let nf = n as f64;
    let ymean = y.iter().sum::<f64>() / nf;
    let xmean: Vec<f64> = regressors
        .iter()
        .map(|(_, x)| x.iter().sum::<f64>() / nf)
        .collect();

    // Centered cross-products.
    let mut sxx = vec![0.0; p * p];
    let mut sxy = vec![0.0; p];
    let mut syy = 0.0;
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (j, (_, x)) in regressors.iter().enumerate() {
            row[j] = x[i] - xmean[j];
        }
        let yc = y[i] - ymean;
        syy += yc * yc;
        for a in 0..p {
            sxy[a] += row[a] * yc;
            for b in 0..=a {
                sxx[a * p + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            sxx[b * p + a] = sxx[a * p + b];
        }
    }

    let chol = cholesky(&sxx, p).map_err(|j| Error::RankDeficient {
        column: regressors[j].0.to_string(),
        against: regressors[..j].iter().map(|(s, _)| s.to_string()).collect(),
    })?;
    let beta = chol_solve(&chol, p, &sxy);

    let mut ssr = 0.0;
    for i in 0..n {
        let mut fit = 0.0;
        for (j, (_, x)) in regressors.iter().enumerate() {
            fit += beta[j] * (x[i] - xmean[j]);
        }
        let r = y[i] - ymean - fit;
        ssr += r * r;
    }
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 0.0 };
    let sigma2 = ssr / (n - p - 1) as f64;

    let mut coefficients = IndexMap::with_capacity(p);
    let mut std_errors = IndexMap::with_capacity(p);
    for (j, (name, _)) in regressors.iter().enumerate() {
        // Diagonal of the inverse: solve against the unit vector.
        let mut unit = vec![0.0; p];
        unit[j] = 1.0;
        let inv_jj = chol_solve(&chol, p, &unit)[j];
        coefficients.insert(name.to_string(), beta[j]);
        std_errors.insert(name.to_string(), (sigma2 * inv_jj).sqrt());
    }
    let intercept = ymean - beta.iter().zip(&xmean).map(|(b, m)| b * m).sum::<f64>();

    let mut warnings = Vec::new();
    if n < SMALL_SAMPLE {
        warnings.push(format!("small sample: only {n} observations"));
    }
    Ok(RegressionResult {
        coefficients,
        std_errors,
        intercept,
        r_squared,
        n_obs: n,
        warnings,
    })
}

/// Lower-triangular factor, or the index of the first dependent column.
fn cholesky(a: &[f64], p: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let diag = a[j * p + j];
        let mut d = diag;
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(diag > 0.0) || d <= COLLINEARITY_TOL * diag {
            return Err(j);
        }
        let ljj = d.sqrt();
        l[j * p + j] = ljj;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / ljj;
        }
    }
    Ok(l)
}

fn chol_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    x
}
