//! Unpenalized logistic regression by Newton–Raphson (IRLS) with per-
//! coefficient Wald tests.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::numcore::{cholesky, cholesky_solve, normal_sf, spd_inverse, Standardizer, SymmetricMatrix};

pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100;
/// Coefficient magnitude treated as divergence to infinity.
const SEPARATION_NORM: f64 = 1e4;
/// Linear predictors beyond this saturate the fitted probabilities.
const SATURATED_ETA: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    /// Names of the slope terms, in design order.
    pub names: Vec<String>,
    /// `[intercept, slopes...]`
    pub beta: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub wald_z: Vec<f64>,
    pub p_values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub gradient_max_norm: f64,
    pub standardized: bool,
}

impl LogitFit {
    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.beta[1..]
    }
}

fn design_row(x: &[f64]) -> impl Iterator<Item = f64> + '_ {
    std::iter::once(1.0).chain(x.iter().copied())
}

fn eta(x: &[f64], beta: &[f64]) -> f64 {
    design_row(x).zip(beta).map(|(a, b)| a * b).sum()
}

fn sigmoid(e: f64) -> f64 {
    if e >= 0.0 {
        1.0 / (1.0 + (-e).exp())
    } else {
        let t = e.exp();
        t / (1.0 + t)
    }
}

/// `log(1 + e^η)` without overflow.
fn softplus(e: f64) -> f64 {
    e.max(0.0) + (-e.abs()).exp().ln_1p()
}

/// Bernoulli log-likelihood at `beta = [intercept, slopes...]`.
pub fn log_likelihood(x: &[Vec<f64>], y: &[bool], beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, &l)| {
            let e = eta(row, beta);
            (if l { e } else { 0.0 }) - softplus(e)
        })
        .sum()
}

/// Gradient of [`log_likelihood`]: `Xᵀ(y − p)`.
pub fn gradient(x: &[Vec<f64>], y: &[bool], beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for (row, &l) in x.iter().zip(y) {
        let r = f64::from(u8::from(l)) - sigmoid(eta(row, beta));
        for (gk, xk) in g.iter_mut().zip(design_row(row)) {
            *gk += r * xk;
        }
    }
    g
}

/// Observed information `XᵀWX`, `W = diag(p(1 − p))`.
fn information(x: &[Vec<f64>], beta: &[f64]) -> SymmetricMatrix {
    let k = beta.len();
    let mut h = vec![0.0; k * k];
    for row in x {
        let p = sigmoid(eta(row, beta));
        let w = p * (1.0 - p);
        let d: Vec<f64> = design_row(row).collect();
        for a in 0..k {
            for b in 0..=a {
                h[a * k + b] += w * d[a] * d[b];
            }
        }
    }
    SymmetricMatrix::from_fn(k, |a, b| h[a * k + b])
}

fn direction(names: &[String], beta: &[f64]) -> String {
    let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    std::iter::once("intercept")
        .chain(names.iter().map(String::as_str))
        .zip(beta)
        .map(|(n, b)| format!("{n}: {:.3}", b / norm))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Maximum-likelihood fit. `names` labels the slope columns of `x`.
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], names: &[String]) -> Result<LogitFit> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos < 2 || y.len() - pos < 2 {
        return Err(Error::InsufficientData(format!(
            "logistic regression needs at least 2 samples per class (got {pos} and {})",
            y.len() - pos
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) || names.len() != d {
        return Err(Error::Shape("design rows and names must share one width".into()));
    }
    let k = d + 1;

    // rank check at β = 0, where every weight is 1/4
    let mut beta = vec![0.0; k];
    if cholesky(&information(x, &beta)).is_none() {
        return Err(Error::Collinearity(
            "design matrix (with intercept) is rank deficient".into(),
        ));
    }

    let mut ll = log_likelihood(x, y, &beta);
    let mut g = gradient(x, y, &beta);
    let mut iterations = 0;
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let saturated = |beta: &[f64]| x.iter().any(|r| eta(r, beta).abs() > SATURATED_ETA);

    while max_abs(&g) > GRADIENT_TOL && iterations < MAX_ITER {
        iterations += 1;
        let Some(l) = cholesky(&information(x, &beta)) else {
            if saturated(&beta) {
                return Err(Error::Separation {
                    direction: direction(names, &beta),
                });
            }
            return Err(Error::Collinearity("information matrix became singular".into()));
        };
        let step = cholesky_solve(&l, &g);
        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_ll;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            cand_ll = log_likelihood(x, y, &candidate);
            if cand_ll >= ll || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        beta = candidate;
        ll = cand_ll;
        g = gradient(x, y, &beta);
        if max_abs(&beta) > SEPARATION_NORM {
            return Err(Error::Separation {
                direction: direction(names, &beta),
            });
        }
    }
    let gradient_max_norm = max_abs(&g);
    let converged = gradient_max_norm <= GRADIENT_TOL;
    // under separation the gradient decays geometrically while β runs off,
    // so a met tolerance alone does not rule it out
    if saturated(&beta) {
        return Err(Error::Separation {
            direction: direction(names, &beta),
        });
    }

    let l = cholesky(&information(x, &beta))
        .ok_or_else(|| Error::Collinearity("information matrix singular at the optimum".into()))?;
    let cov = spd_inverse(&l, k);
    let standard_errors: Vec<f64> = (0..k).map(|j| cov[j * k + j].sqrt()).collect();
    let wald_z: Vec<f64> = beta.iter().zip(&standard_errors).map(|(b, s)| b / s).collect();
    let p_values = wald_z.iter().map(|z| (2.0 * normal_sf(z.abs())).min(1.0)).collect();
    Ok(LogitFit {
        names: names.to_vec(),
        beta,
        standard_errors,
        wald_z,
        p_values,
        converged,
        iterations,
        log_likelihood: ll,
        gradient_max_norm,
        standardized: false,
    })
}

/// Fits PD (1) vs non-PD (0) on a feature table, z-scoring columns first
/// when `standardize` is set.
pub fn fit_table(table: &FeatureTable, standardize: bool) -> Result<LogitFit> {
    let raw = table.matrix();
    let x = if standardize {
        Standardizer::fit(&raw)?.transform(&raw)
    } else {
        raw
    };
    let names: Vec<String> = table.features.iter().map(|f| f.name()).collect();
    let mut fit = fit_logistic(&x, &table.labels(), &names)?;
    fit.standardized = standardize;
    Ok(fit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub feature: String,
    pub weight: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    /// `p < 0.05`
    pub significant: bool,
}

pub const SIGNIFICANCE: f64 = 0.05;

/// Slope weights in design order with significance flags.
pub fn figure1_report(fit: &LogitFit) -> Result<Vec<WeightRow>> {
    if !fit.converged {
        return Err(Error::NotConverged(format!(
            "logistic fit stopped after {} iterations with gradient {:.3e}",
            fit.iterations, fit.gradient_max_norm
        )));
    }
    Ok(fit
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| WeightRow {
            feature: name.clone(),
            weight: fit.beta[j + 1],
            se: fit.standard_errors[j + 1],
            z: fit.wald_z[j + 1],
            p: fit.p_values[j + 1],
            significant: fit.p_values[j + 1] < SIGNIFICANCE,
        })
        .collect())
}

pub fn write_figure1_csv<W: Write>(rows: &[WeightRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "weight", "se", "z", "p", "significant"])?;
    for r in rows {
        w.write_record([
            r.feature.clone(),
            r.weight.to_string(),
            r.se.to_string(),
            r.z.to_string(),
            r.p.to_string(),
            r.significant.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<figure1 csv>", e))?;
    Ok(())
}
