//! Classical OLS standard errors and two-sided t-test p-values.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::Error;
use crate::matrix::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTest {
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p: f64,
}

/// One entry per coefficient, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub df: usize,
    pub coefficients: Vec<CoefficientTest>,
}

/// Tests each coefficient of an unpenalized fit `c` against zero.
pub fn coeff_significance(
    a: &Grid<f64>,
    b: &[f64],
    c: &[f64],
) -> Result<SignificanceReport, Error> {
    let n = a.nrows();
    let k = a.ncols();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if c.len() != k + 1 {
        return Err(Error::DimensionMismatch {
            expected: k + 1,
            found: c.len(),
        });
    }
    if n <= k + 1 {
        return Err(Error::InsufficientDegreesOfFreedom);
    }
    let df = n - k - 1;
    let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { a.get(i, j - 1) });

    let svd = x.clone().svd(false, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = top * f64::EPSILON * n as f64;
    if svd.singular_values.iter().any(|s| *s <= tol) {
        return Err(Error::RankDeficient);
    }
    // (XᵀX)⁻¹ = V Σ⁻² Vᵀ
    let v_t = svd.v_t.expect("requested");
    let inv_sq = svd.singular_values.map(|s| 1.0 / (s * s));

    let sse: f64 = (0..n)
        .map(|i| {
            let fitted: f64 = (0..=k).map(|j| x[(i, j)] * c[j]).sum();
            (b[i] - fitted) * (b[i] - fitted)
        })
        .sum();
    let sigma2 = sse / df as f64;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df is positive");

    let coefficients = (0..=k)
        .map(|j| {
            let var: f64 = (0..=k).map(|m| v_t[(m, j)] * v_t[(m, j)] * inv_sq[m]).sum();
            let std_error = libm::sqrt(sigma2 * var);
            let estimate = c[j];
            let t = if std_error > 0.0 {
                estimate / std_error
            } else if estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(estimate)
            };
            let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
            CoefficientTest {
                estimate,
                std_error,
                t,
                p,
            }
        })
        .collect();
    Ok(SignificanceReport { df, coefficients })
}
