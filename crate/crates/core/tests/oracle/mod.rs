//! Independent reference computations used by the integration tests.
//!
//! Nothing here shares code with the crate under test.

#![allow(dead_code)]

/// Exact solution of the integer system `m x = v` by Cramer's rule, with
/// determinants from fraction-free Bareiss elimination in `i128`.
/// Returns `None` when `m` is singular.
pub fn cramer_exact(m: &[Vec<i128>], v: &[i128]) -> Option<Vec<f64>> {
    let det = bareiss_det(m.to_vec());
    if det == 0 {
        return None;
    }
    let k = m.len();
    let x = (0..k)
        .map(|j| {
            let mut mj = m.to_vec();
            for (i, row) in mj.iter_mut().enumerate() {
                row[j] = v[i];
            }
            bareiss_det(mj) as f64 / det as f64
        })
        .collect();
    Some(x)
}

fn bareiss_det(mut m: Vec<Vec<i128>>) -> i128 {
    let n = m.len();
    let mut sign = 1;
    let mut prev = 1i128;
    for p in 0..n {
        if m[p][p] == 0 {
            let Some(swap) = (p + 1..n).find(|&r| m[r][p] != 0) else {
                return 0;
            };
            m.swap(p, swap);
            sign = -sign;
        }
        for i in p + 1..n {
            for j in p + 1..n {
                m[i][j] = (m[i][j] * m[p][p] - m[i][p] * m[p][j]) / prev;
            }
        }
        prev = m[p][p];
    }
    sign * m[n - 1][n - 1]
}

/// Brute-force least squares with intercept through the normal equations
/// of `[1 A]`, solved exactly. Integer data only.
pub fn ols_normal_equations(a: &[Vec<i64>], b: &[i64]) -> Option<Vec<f64>> {
    let k = a[0].len() + 1;
    let aug: Vec<Vec<i128>> = a
        .iter()
        .map(|r| {
            core::iter::once(1)
                .chain(r.iter().map(|v| *v as i128))
                .collect()
        })
        .collect();
    let mut gram = vec![vec![0i128; k]; k];
    let mut rhs = vec![0i128; k];
    for (row, y) in aug.iter().zip(b) {
        for i in 0..k {
            rhs[i] += row[i] * *y as i128;
            for j in 0..k {
                gram[i][j] += row[i] * row[j];
            }
        }
    }
    cramer_exact(&gram, &rhs)
}

/// Ridge slopes with an unpenalized intercept, solved exactly for an
/// integer `lambda`: `(n XᵀX − s sᵀ + n λ I) β = n Xᵀy − s Σy`, where `s`
/// holds the column sums. Returns `[intercept, slopes…]`.
pub fn ridge_exact(a: &[Vec<i64>], b: &[i64], lambda: i64) -> Option<Vec<f64>> {
    let n = a.len() as i128;
    let k = a[0].len();
    let s: Vec<i128> = (0..k)
        .map(|j| a.iter().map(|r| r[j] as i128).sum())
        .collect();
    let sy: i128 = b.iter().map(|v| *v as i128).sum();
    let mut m = vec![vec![0i128; k]; k];
    let mut v = vec![0i128; k];
    for i in 0..k {
        for j in 0..k {
            let xtx: i128 = a.iter().map(|r| r[i] as i128 * r[j] as i128).sum();
            m[i][j] = n * xtx - s[i] * s[j];
        }
        m[i][i] += n * lambda as i128;
        let xty: i128 = a
            .iter()
            .zip(b)
            .map(|(r, y)| r[i] as i128 * *y as i128)
            .sum();
        v[i] = n * xty - s[i] * sy;
    }
    let slopes = cramer_exact(&m, &v)?;
    let intercept = (sy as f64
        - slopes
            .iter()
            .zip(&s)
            .map(|(w, s)| w * *s as f64)
            .sum::<f64>())
        / n as f64;
    Some(std::iter::once(intercept).chain(slopes).collect())
}

/// r² of the simple regression `y = α + βx`, computed from its residuals.
pub fn univariate_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let beta = (n * sxy - sx * sy) / denom;
    let alpha = (sy - beta * sx) / n;
    let ybar = sy / n;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - alpha - beta * x).powi(2))
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    1.0 - sse / sst
}

/// Pearson correlation straight from its textbook sum formula.
pub fn pearson_naive(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let num = got
        .iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    let den = want.iter().map(|w| w.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
