//! Logistic regression by damped Newton iterations (IRLS).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::continuous::logistic;

/// Rows per accumulation chunk. Chunks are summed in a fixed order so fits
/// do not depend on thread scheduling.
const CHUNK: usize = 8192;

/// Coefficient norm beyond which the data are treated as separable.
pub const SEPARATION_NORM: f64 = 1e3;

/// Logit assigned to a probability of exactly 0 or 1.
pub const SATURATED_LOGIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Bound on the Euclidean norm of the mean log-likelihood gradient.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Added to the Hessian diagonal before solving.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-8,
            max_iter: 100,
            ridge: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub n_rows: usize,
}

/// Row-major design matrix with labels in [0, 1].
#[derive(Debug, Clone, Default)]
pub struct Design {
    names: Vec<String>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Design {
    pub fn new(names: &[&str]) -> Self {
        Design {
            names: names.iter().map(|s| s.to_string()).collect(),
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn push(&mut self, features: &[f64], label: f64) {
        assert_eq!(features.len(), self.names.len(), "feature count mismatch");
        self.x.extend_from_slice(features);
        self.y.push(label);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn mean_label(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub component: String,
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub fitted: bool,
    pub diagnostics: FitDiagnostics,
    /// Inverse observed information (row-major), for delta-method errors.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariance: Vec<f64>,
}

impl LogisticModel {
    /// Intercept-only model reproducing probability `p`, used when every
    /// label is identical and the likelihood has no finite maximizer.
    pub fn constant(component: &str, feature_names: &[String], p: f64, n_rows: usize) -> Self {
        let mut coefficients = vec![0.0; feature_names.len()];
        coefficients[0] = clamped_logit(p);
        LogisticModel {
            component: component.to_string(),
            feature_names: feature_names.to_vec(),
            coefficients,
            fitted: true,
            diagnostics: FitDiagnostics {
                iterations: 0,
                gradient_norm: 0.0,
                converged: true,
                n_rows,
            },
            covariance: Vec::new(),
        }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        logistic(self.linear_predictor(x))
    }

    /// Delta-method standard error of the predicted probability.
    pub fn predict_se(&self, x: &[f64]) -> f64 {
        let p = self.predict(x);
        let n = x.len();
        if self.covariance.len() != n * n {
            return 0.0;
        }
        let mut var = 0.0;
        for i in 0..n {
            for j in 0..n {
                var += x[i] * self.covariance[i * n + j] * x[j];
            }
        }
        p * (1.0 - p) * var.max(0.0).sqrt()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }
}

pub(crate) fn clamped_logit(p: f64) -> f64 {
    if p <= 0.0 {
        -SATURATED_LOGIT
    } else if p >= 1.0 {
        SATURATED_LOGIT
    } else {
        (p / (1.0 - p)).ln().clamp(-SATURATED_LOGIT, SATURATED_LOGIT)
    }
}

struct Pieces {
    loglik: f64,
    gradient: Vec<f64>,
    hessian: Vec<f64>,
}

fn log1pexp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn accumulate(d: &Design, beta: &[f64], with_derivatives: bool) -> Pieces {
    let p = d.n_features();
    let chunks: Vec<Pieces> = d
        .y
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, ys)| {
            let mut out = Pieces {
                loglik: 0.0,
                gradient: vec![0.0; if with_derivatives { p } else { 0 }],
                hessian: vec![0.0; if with_derivatives { p * p } else { 0 }],
            };
            for (r, &y) in ys.iter().enumerate() {
                let x = d.row(c * CHUNK + r);
                let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                out.loglik += y * eta - log1pexp(eta);
                if with_derivatives {
                    let mu = logistic(eta);
                    let w = mu * (1.0 - mu);
                    for i in 0..p {
                        out.gradient[i] += x[i] * (y - mu);
                        let wxi = w * x[i];
                        if wxi != 0.0 {
                            for j in 0..=i {
                                out.hessian[i * p + j] += wxi * x[j];
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut total = Pieces {
        loglik: 0.0,
        gradient: vec![0.0; p],
        hessian: vec![0.0; p * p],
    };
    for c in chunks {
        total.loglik += c.loglik;
        for (a, b) in total.gradient.iter_mut().zip(&c.gradient) {
            *a += b;
        }
        for (a, b) in total.hessian.iter_mut().zip(&c.hessian) {
            *a += b;
        }
    }
    let n = d.len() as f64;
    total.loglik /= n;
    total.gradient.iter_mut().for_each(|g| *g /= n);
    for i in 0..p {
        for j in 0..=i {
            let v = total.hessian[i * p + j] / n;
            total.hessian[i * p + j] = v;
            total.hessian[j * p + i] = v;
        }
    }
    total
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn solve(hessian: &[f64], rhs: &[f64], ridge: f64) -> Option<DVector<f64>> {
    let p = rhs.len();
    let mut h = DMatrix::from_row_slice(p, p, hessian);
    for i in 0..p {
        h[(i, i)] += ridge;
    }
    let b = DVector::from_column_slice(rhs);
    match h.clone().cholesky() {
        Some(ch) => Some(ch.solve(&b)),
        None => h.lu().solve(&b),
    }
}

fn invert(hessian: &[f64], ridge: f64, n: usize) -> Vec<f64> {
    let p = (hessian.len() as f64).sqrt() as usize;
    let mut h = DMatrix::from_row_slice(p, p, hessian);
    for i in 0..p {
        h[(i, i)] += ridge;
    }
    match h.try_inverse() {
        Some(inv) => {
            let inv = inv / n as f64;
            (0..p)
                .flat_map(|i| (0..p).map(move |j| (i, j)))
                .map(|(i, j)| inv[(i, j)])
                .collect()
        }
        None => Vec::new(),
    }
}

/// Maximum-likelihood logistic fit. Labels may be fractional (quasi-binomial).
pub fn fit_logistic(component: &str, design: &Design, options: &FitOptions) -> Result<LogisticModel> {
    let n = design.len();
    if n == 0 {
        return Err(Error::Degenerate {
            component: component.to_string(),
            message: "no rows".into(),
        });
    }
    if let Some(bad) = design.y.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::Degenerate {
            component: component.to_string(),
            message: format!("label {bad} outside [0, 1]"),
        });
    }
    if design.y.iter().all(|&y| y == 0.0) || design.y.iter().all(|&y| y == 1.0) {
        return Err(Error::Degenerate {
            component: component.to_string(),
            message: format!("all {n} labels are equal to {}", design.y[0]),
        });
    }
    let p = design.n_features();
    let mut beta = vec![0.0; p];
    let mut current = accumulate(design, &beta, true);
    let mut iterations = 0;
    while norm(&current.gradient) > options.tolerance {
        if iterations == options.max_iter {
            return Err(Error::NonConvergence {
                component: component.to_string(),
                iterations,
                gradient_norm: norm(&current.gradient),
            });
        }
        iterations += 1;
        let step = solve(&current.hessian, &current.gradient, options.ridge).ok_or_else(|| {
            Error::NonConvergence {
                component: component.to_string(),
                iterations,
                gradient_norm: norm(&current.gradient),
            }
        })?;
        // Halve the Newton step until the log-likelihood does not decrease.
        let mut t = 1.0;
        let mut candidate;
        loop {
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect::<Vec<_>>();
            let ll = accumulate(design, &candidate, false).loglik;
            if ll >= current.loglik - 1e-14 * current.loglik.abs() || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        beta = candidate;
        let beta_norm = norm(&beta);
        if beta_norm > SEPARATION_NORM || !beta_norm.is_finite() {
            return Err(Error::Separation {
                component: component.to_string(),
                norm: beta_norm,
            });
        }
        current = accumulate(design, &beta, true);
    }
    // Complete separation can also end with a vanishing gradient before the
    // norm bound is reached. With binary labels that shows up as a fit that
    // classifies every row correctly, which no finite maximizer can do.
    let binary = design.y.iter().all(|&y| y == 0.0 || y == 1.0);
    let separated = binary
        && (0..n).all(|i| {
            let eta: f64 = design.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
            (2.0 * design.y[i] - 1.0) * eta > 0.0
        });
    if separated {
        return Err(Error::Separation {
            component: component.to_string(),
            norm: norm(&beta),
        });
    }
    Ok(LogisticModel {
        component: component.to_string(),
        feature_names: design.names.clone(),
        coefficients: beta,
        fitted: true,
        diagnostics: FitDiagnostics {
            iterations,
            gradient_norm: norm(&current.gradient),
            converged: true,
            n_rows: n,
        },
        covariance: invert(&current.hessian, options.ridge, n),
    })
}

/// Like [`fit_logistic`], but identical labels yield the constant model
/// instead of an error.
pub fn fit_logistic_or_constant(
    component: &str,
    design: &Design,
    options: &FitOptions,
) -> Result<LogisticModel> {
    if design.is_empty() {
        return fit_logistic(component, design, options);
    }
    let first = design.y[0];
    if (first == 0.0 || first == 1.0) && design.y.iter().all(|&y| y == first) {
        return Ok(LogisticModel::constant(component, &design.names, first, design.len()));
    }
    fit_logistic(component, design, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_recovers_the_mean() {
        let mut d = Design::new(&["intercept"]);
        for i in 0..1000 {
            d.push(&[1.0], f64::from(u8::from(i % 4 == 0)));
        }
        let m = fit_logistic("test", &d, &FitOptions::default()).unwrap();
        assert!((m.predict(&[1.0]) - 0.25).abs() < 1e-8);
        assert!(m.diagnostics.gradient_norm <= 1e-8);
    }

    #[test]
    fn separable_data_are_reported() {
        let mut d = Design::new(&["intercept", "x"]);
        for i in 0..100 {
            let x = f64::from(i) - 50.0;
            d.push(&[1.0, x], f64::from(u8::from(x > 0.0)));
        }
        let err = fit_logistic("sep", &d, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Separation { .. } | Error::NonConvergence { .. }), "{err}");
    }

    #[test]
    fn constant_labels_are_degenerate() {
        let mut d = Design::new(&["intercept"]);
        d.push(&[1.0], 0.0);
        d.push(&[1.0], 0.0);
        assert!(matches!(
            fit_logistic("deg", &d, &FitOptions::default()),
            Err(Error::Degenerate { .. })
        ));
        let m = fit_logistic_or_constant("deg", &d, &FitOptions::default()).unwrap();
        assert!(m.predict(&[1.0]) < 1e-12);
    }
}
