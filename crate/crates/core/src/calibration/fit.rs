//! Least-squares building blocks: polynomials in one variable, multilinear
//! maps and piecewise-linear interpolation tables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("{what}: need at least {need} samples, got {got}")]
    TooFewSamples { what: String, need: usize, got: usize },
    #[error("{what}: samples span {span:.3}, need at least {need:.3}")]
    InsufficientSpan { what: String, span: f64, need: f64 },
    #[error("{what}: system is ill-conditioned")]
    IllConditioned { what: String },
    #[error("{what}: non-finite sample")]
    NonFinite { what: String },
    #[error("{what}: breakpoints must be strictly monotone, violated at index {index}")]
    NonMonotone { what: String, index: usize },
    #[error("{what}: expected {expected} samples, got {got}")]
    WrongCount { what: String, expected: usize, got: usize },
}

/// Ridge weight used when the unregularized system is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;
/// Singular-value ratio below which a design matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// `c[0] + c[1]·x + … + c[n]·xⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Polynomial { coefficients }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }
}

/// Outcome of a least-squares fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub samples: usize,
    /// In-sample root-mean-square residual.
    pub rmse: f64,
    /// The ridge fallback was used.
    pub regularized: bool,
}

fn check_finite(what: &str, xs: &[f64]) -> Result<(), FitError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FitError::NonFinite { what: what.to_string() })
    }
}

/// Solves `min ‖y − A·β‖²`, falling back to a ridge solve that leaves the
/// first (intercept) column unpenalized when `A` is rank deficient.
fn least_squares(what: &str, a: DMatrix<f64>, y: DVector<f64>) -> Result<(DVector<f64>, bool), FitError> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax > 0.0 && smin / smax > RANK_TOL {
        let beta = svd
            .solve(&y, 0.0)
            .map_err(|_| FitError::IllConditioned { what: what.to_string() })?;
        return Ok((beta, false));
    }
    log::warn!("{what}: rank-deficient design, using ridge fallback");
    let mut ata = a.transpose() * &a;
    for i in 1..ata.nrows() {
        ata[(i, i)] += RIDGE_LAMBDA;
    }
    if ata[(0, 0)] == 0.0 {
        ata[(0, 0)] += RIDGE_LAMBDA;
    }
    let aty = a.transpose() * y;
    let beta = ata
        .lu()
        .solve(&aty)
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .ok_or_else(|| FitError::IllConditioned { what: what.to_string() })?;
    Ok((beta, true))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares polynomial of the given degree.
///
/// `x` is centred and scaled before building the Vandermonde matrix; the
/// returned coefficients are expanded back to powers of the raw `x`.
pub fn fit_polynomial(
    what: &str,
    x: &[f64],
    y: &[f64],
    degree: usize,
) -> Result<(Polynomial, FitDiagnostics), FitError> {
    assert_eq!(x.len(), y.len(), "x and y lengths differ");
    check_finite(what, x)?;
    check_finite(what, y)?;
    let n = x.len();
    if n < degree + 1 {
        return Err(FitError::TooFewSamples { what: what.to_string(), need: degree + 1, got: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };

    let a = DMatrix::from_fn(n, degree + 1, |r, c| ((x[r] - mean) / scale).powi(c as i32));
    let (beta, regularized) = least_squares(what, a, DVector::from_column_slice(y))?;

    // p(x) = Σ_k β_k ((x − μ)/s)^k, expanded by the binomial theorem
    let mut coefficients = vec![0.0; degree + 1];
    for (k, &bk) in beta.iter().enumerate() {
        let f = bk / scale.powi(k as i32);
        for (j, c) in coefficients.iter_mut().enumerate().take(k + 1) {
            *c += f * binomial(k, j) * (-mean).powi((k - j) as i32);
        }
    }
    let poly = Polynomial::new(coefficients);
    let rmse = (x.iter().zip(y).map(|(&xi, &yi)| (poly.eval(xi) - yi).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok((poly, FitDiagnostics { samples: n, rmse, regularized }))
}

/// `bias + Σ weights[j]·x_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multilinear {
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl Multilinear {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

pub fn fit_multilinear(what: &str, rows: &[Vec<f64>], y: &[f64]) -> Result<(Multilinear, FitDiagnostics), FitError> {
    assert_eq!(rows.len(), y.len(), "row and target counts differ");
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n < k + 1 {
        return Err(FitError::TooFewSamples { what: what.to_string(), need: k + 1, got: n });
    }
    check_finite(what, y)?;
    for r in rows {
        check_finite(what, r)?;
    }
    let a = DMatrix::from_fn(n, k + 1, |r, c| if c == 0 { 1.0 } else { rows[r][c - 1] });
    let (beta, regularized) = least_squares(what, a, DVector::from_column_slice(y))?;
    let model = Multilinear { bias: beta[0], weights: beta.iter().skip(1).copied().collect() };
    let rmse = (rows.iter().zip(y).map(|(r, &yi)| (model.eval(r) - yi).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok((model, FitDiagnostics { samples: n, rmse, regularized }))
}

/// `y = alpha·x + beta` on one interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub alpha: f64,
    pub beta: f64,
}

/// Interpolating piecewise-linear map through ordered knots. Outside the
/// knot range the end segments are extended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    /// Strictly increasing knot abscissae.
    pub breakpoints: Vec<f64>,
    /// `segments[n]` covers `[breakpoints[n], breakpoints[n + 1]]`.
    pub segments: Vec<Segment>,
}

impl PiecewiseLinear {
    /// Builds the interpolant through `(x, y)` pairs. Pairs may be given in
    /// either order of `x` but must be strictly monotone.
    pub fn through(what: &str, points: &[(f64, f64)]) -> Result<Self, FitError> {
        if points.len() < 2 {
            return Err(FitError::TooFewSamples { what: what.to_string(), need: 2, got: points.len() });
        }
        for &(x, y) in points {
            if !(x.is_finite() && y.is_finite()) {
                return Err(FitError::NonFinite { what: what.to_string() });
            }
        }
        let mut pts = points.to_vec();
        if pts[0].0 > pts[1].0 {
            pts.reverse();
        }
        for (i, w) in pts.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(FitError::NonMonotone { what: what.to_string(), index: i + 1 });
            }
        }
        let segments = pts
            .windows(2)
            .map(|w| {
                let alpha = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                Segment { alpha, beta: w[0].1 - alpha * w[0].0 }
            })
            .collect();
        Ok(PiecewiseLinear { breakpoints: pts.iter().map(|p| p.0).collect(), segments })
    }

    pub fn segment_index(&self, x: f64) -> usize {
        let last = self.segments.len() - 1;
        // partition_point gives the first knot strictly above x
        self.breakpoints.partition_point(|&b| b <= x).saturating_sub(1).min(last)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = self.segments[self.segment_index(x)];
        s.alpha * x + s.beta
    }

    /// Largest jump between adjacent segments at interior knots.
    pub fn continuity_defect(&self) -> f64 {
        self.segments
            .windows(2)
            .zip(&self.breakpoints[1..])
            .map(|(s, &b)| ((s[0].alpha * b + s[0].beta) - (s[1].alpha * b + s[1].beta)).abs())
            .fold(0.0, f64::max)
    }
}
