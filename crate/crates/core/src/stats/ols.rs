//! Ordinary least squares on z-scored features with classical t-tests.

use serde::Serialize;

use super::dist::student_t_sf;
use super::linalg::{cholesky, cholesky_inverse_diagonal, cholesky_solve, condition_number, Matrix};
use super::StatsError;

/// Gram matrices with a larger condition number get a ridge term.
pub const RIDGE_CONDITION: f64 = 1e12;
/// Ridge strength relative to `trace(G) / p`.
pub const RIDGE_SCALE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearModel {
    /// Coefficients of the standardized features.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// RSS / (n - p - 1).
    pub residual_variance: f64,
    /// Intercept first, then one entry per feature.
    pub standard_errors: Vec<f64>,
    pub t_statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    pub degrees_of_freedom: usize,
    pub feature_means: Vec<f64>,
    /// Standard deviations used for scaling; 1 for zero-variance columns.
    pub feature_scales: Vec<f64>,
    /// Columns with zero variance (centered only).
    pub zero_variance: Vec<bool>,
    /// Whether the ridge fallback was applied.
    pub regularized: bool,
    pub condition_number: f64,
}

impl LinearModel {
    pub fn num_features(&self) -> usize {
        self.coefficients.len()
    }

    /// p-values of the features (without the intercept).
    pub fn feature_p_values(&self) -> &[f64] {
        &self.p_values[1..]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut s = self.intercept;
        for j in 0..self.coefficients.len() {
            s += self.coefficients[j] * (x[j] - self.feature_means[j]) / self.feature_scales[j];
        }
        s
    }

    pub fn predict_rows(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict(x.row(r))).collect()
    }

    /// Intercept and coefficients expressed on the original feature scale.
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        let beta: Vec<f64> = self.coefficients.iter().zip(&self.feature_scales).map(|(b, s)| b / s).collect();
        let shift: f64 = beta.iter().zip(&self.feature_means).map(|(b, m)| b * m).sum();
        (self.intercept - shift, beta)
    }
}

/// Fit `y ≈ intercept + Σ β_j z_j` where `z_j` is feature `j` z-scored with
/// the sample mean and standard deviation of `x`. `y` holds 0/1 labels.
pub fn fit_linear_model(x: &Matrix, y: &[f64]) -> Result<LinearModel, StatsError> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(StatsError::Input(format!("{} labels for {n} rows", y.len())));
    }
    if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(StatsError::Input(format!("labels must be 0 or 1, found {v}")));
    }
    let positives = y.iter().filter(|v| **v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(StatsError::DegenerateLabels("only one class present in y".into()));
    }
    if p == 0 {
        return Err(StatsError::Input("no features".into()));
    }
    if n <= p + 1 {
        return Err(StatsError::Underdetermined { n, p });
    }
    if (0..n).any(|r| x.row(r).iter().any(|v| !v.is_finite())) {
        return Err(StatsError::Numeric("feature matrix has non-finite entries".into()));
    }

    let mut feature_means = Vec::with_capacity(p);
    let mut feature_scales = Vec::with_capacity(p);
    let mut zero_variance = Vec::with_capacity(p);
    for c in 0..p {
        let mean = x.column(c).sum::<f64>() / n as f64;
        let var = x.column(c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        feature_means.push(mean);
        feature_scales.push(if sd > 0.0 { sd } else { 1.0 });
        zero_variance.push(!(sd > 0.0));
    }

    // Design [1 | Z]
    let d = p + 1;
    let design = |r: usize, c: usize| -> f64 {
        if c == 0 {
            1.0
        } else {
            (x.get(r, c - 1) - feature_means[c - 1]) / feature_scales[c - 1]
        }
    };
    let mut gram = Matrix::zeros(d, d);
    let mut rhs = vec![0.0; d];
    for r in 0..n {
        for i in 0..d {
            let di = design(r, i);
            rhs[i] += di * y[r];
            for j in i..d {
                gram.set(i, j, gram.get(i, j) + di * design(r, j));
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram.set(i, j, gram.get(j, i));
        }
    }

    let cond = condition_number(&gram);
    let regularized = !(cond <= RIDGE_CONDITION);
    if regularized {
        let lambda = RIDGE_SCALE * gram.trace() / p as f64;
        for i in 0..d {
            gram.set(i, i, gram.get(i, i) + lambda);
        }
    }
    let chol = cholesky(&gram).ok_or_else(|| StatsError::Numeric("Gram matrix is not positive definite".into()))?;
    let beta = cholesky_solve(&chol, &rhs);

    let rss: f64 = (0..n)
        .map(|r| {
            let fit: f64 = (0..d).map(|c| beta[c] * design(r, c)).sum();
            (y[r] - fit) * (y[r] - fit)
        })
        .sum();
    let df = n - p - 1;
    let residual_variance = rss / df as f64;

    let inv_diag = cholesky_inverse_diagonal(&chol);
    let mut standard_errors = Vec::with_capacity(d);
    let mut t_statistics = Vec::with_capacity(d);
    let mut p_values = Vec::with_capacity(d);
    for j in 0..d {
        let se = (residual_variance * inv_diag[j]).max(0.0).sqrt();
        let (t, pv) = if se > 0.0 && (beta[j] / se).is_finite() {
            let t = beta[j] / se;
            (t, student_t_sf(t, df)?)
        } else if beta[j] == 0.0 {
            (0.0, 1.0)
        } else {
            (beta[j].signum() * f64::INFINITY, 0.0)
        };
        standard_errors.push(se);
        t_statistics.push(t);
        p_values.push(pv);
    }

    Ok(LinearModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        residual_variance,
        standard_errors,
        t_statistics,
        p_values,
        degrees_of_freedom: df,
        feature_means,
        feature_scales,
        zero_variance,
        regularized,
        condition_number: cond,
    })
}
