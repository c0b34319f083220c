//! The linear outcome model `b̂ = c₀ + Σ cⱼ aᵢⱼ` and its quality measures.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::matrix::{DesignMatrix, Grid};
use crate::model::{QuestionId, Timestamp};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// Output of one modeling run. `c[0]` is the intercept and `c[j + 1]`,
/// `d[j]` belong to `col_ids[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub built_at: Timestamp,
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
    pub col_ids: Vec<QuestionId>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub model_r2: f64,
}

impl ModelArtifact {
    /// Canonical serialized form; the digest and byte comparisons use this.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("artifact fields are always serializable")
    }

    /// Hex SHA-256 of [`ModelArtifact::to_json`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json()))
    }

    pub fn intercept(&self) -> f64 {
        self.c[0]
    }

    pub fn power_of(&self, question: QuestionId) -> Option<f64> {
        self.col_ids
            .iter()
            .position(|q| *q == question)
            .map(|j| self.d[j])
    }

    pub fn coefficient_of(&self, question: QuestionId) -> Option<f64> {
        self.col_ids
            .iter()
            .position(|q| *q == question)
            .map(|j| self.c[j + 1])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Least-squares fit of `b ≈ c₀ + A c₁..ₖ` with an optional ridge penalty on
/// the slopes (the intercept is never penalized).
///
/// With `lambda = 0` a rank-deficient problem returns the slope vector of
/// minimum norm, so columns that carry no information get coefficient 0.
pub fn fit_least_squares(a: &Grid<f64>, b: &[f64], lambda: f64) -> Result<Vec<f64>, Error> {
    let n = a.nrows();
    let k = a.ncols();
    if n == 0 {
        return Err(Error::EmptyDesign);
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let b_mean = mean(b);
    let col_means: Vec<f64> = (0..k)
        .map(|j| a.column(j).sum::<f64>() / n as f64)
        .collect();
    if k == 0 {
        return Ok(alloc::vec![b_mean]);
    }

    // Centering removes the intercept from the problem; it is recovered below.
    let x = DMatrix::from_fn(n, k, |i, j| a.get(i, j) - col_means[j]);
    let y = DVector::from_iterator(n, b.iter().map(|v| v - b_mean));

    let slopes = if lambda > 0.0 {
        let mut gram = x.tr_mul(&x);
        for j in 0..k {
            gram[(j, j)] += lambda;
        }
        let rhs = x.tr_mul(&y);
        gram.cholesky().ok_or(Error::RankDeficient)?.solve(&rhs)
    } else {
        let svd = x.svd(true, true);
        let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let tol = top * f64::EPSILON * n.max(k) as f64;
        if top == 0.0 {
            DVector::zeros(k)
        } else {
            svd.solve(&y, tol).map_err(|_| Error::RankDeficient)?
        }
    };

    let intercept = b_mean
        - slopes
            .iter()
            .zip(&col_means)
            .map(|(s, m)| s * m)
            .sum::<f64>();
    let mut c = Vec::with_capacity(k + 1);
    c.push(intercept);
    c.extend(slopes.iter().copied());
    Ok(c)
}

/// `c₀ + Σ cⱼ aⱼ`, counting unanswered entries as zero.
pub fn predict_outcome(c: &[f64], row: &[f64], answered: &[bool]) -> Result<f64, Error> {
    if c.len() != row.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: c.len().saturating_sub(1),
            found: row.len(),
        });
    }
    if answered.len() != row.len() {
        return Err(Error::DimensionMismatch {
            expected: row.len(),
            found: answered.len(),
        });
    }
    let mut total = c[0];
    for ((coef, value), seen) in c[1..].iter().zip(row).zip(answered) {
        if *seen {
            total += coef * value;
        }
    }
    Ok(total)
}

/// Univariate r² of one column against the outcome, over the rows that
/// answered it.
///
/// Returns 0 when fewer than `min_samples` rows answered or when either the
/// answered column values or their outcomes are constant.
pub fn question_power<I>(pairs: I, min_samples: usize) -> f64
where
    I: IntoIterator<Item = (f64, f64, bool)>,
{
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs
        .into_iter()
        .filter(|p| p.2)
        .map(|(x, y, _)| (x, y))
        .unzip();
    if xs.len() < min_samples.max(2) {
        return 0.0;
    }
    let mx = mean(&xs);
    let my = mean(&ys);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
}

/// Predictive power of column `j` of a design matrix.
pub fn column_power(design: &DesignMatrix, j: usize, min_samples: usize) -> f64 {
    question_power(
        design
            .a
            .column(j)
            .zip(design.b.iter().copied())
            .zip(design.answered_mask.column(j))
            .map(|((x, y), m)| (x, y, m)),
        min_samples,
    )
}

/// Coefficient of determination `1 − SSE/SST` on the given rows, clamped to [0, 1].
pub fn model_r2(c: &[f64], a: &Grid<f64>, b: &[f64]) -> Result<f64, Error> {
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if c.len() != a.ncols() + 1 {
        return Err(Error::DimensionMismatch {
            expected: a.ncols() + 1,
            found: c.len(),
        });
    }
    if n < 2 {
        return Err(Error::DegenerateOutcome);
    }
    let b_mean = mean(b);
    let sst: f64 = b.iter().map(|v| (v - b_mean) * (v - b_mean)).sum();
    if sst == 0.0 {
        return Err(Error::DegenerateOutcome);
    }
    let sse: f64 = (0..n)
        .map(|i| {
            let fitted = c[0]
                + a.row(i)
                    .iter()
                    .zip(&c[1..])
                    .map(|(x, w)| x * w)
                    .sum::<f64>();
            (b[i] - fitted) * (b[i] - fitted)
        })
        .sum();
    Ok((1.0 - sse / sst).clamp(0.0, 1.0))
}

/// Fits a design matrix and packages the result.
///
/// A design whose outcome has no variance (including a single row) gets
/// `model_r2 = 0`.
pub fn fit_design(
    design: &DesignMatrix,
    lambda: f64,
    min_samples: usize,
) -> Result<ModelArtifact, Error> {
    if design.n() == 0 || design.k() == 0 {
        return Err(Error::EmptyDesign);
    }
    let c = fit_least_squares(&design.a, &design.b, lambda)?;
    let d = (0..design.k())
        .map(|j| column_power(design, j, min_samples))
        .collect();
    let model_r2 = match model_r2(&c, &design.a, &design.b) {
        Ok(r2) => r2,
        Err(Error::DegenerateOutcome) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(ModelArtifact {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        built_at: design.built_at,
        n: design.n(),
        k: design.k(),
        lambda,
        col_ids: design.cols.clone(),
        c,
        d,
        model_r2,
    })
}
