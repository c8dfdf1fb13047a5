//! One-way ANOVA and the F-distribution survival function.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

const BETA_EPS: f64 = 1e-10;
const BETA_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("degrees of freedom must be >= 1 (got {df1}, {df2})")]
    InvalidDf { df1: f64, df2: f64 },
    #[error("F statistic must be a non-negative number (got {0})")]
    InvalidStatistic(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate data: all observations are identical")]
    DegenerateData,
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < BETA_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x` in `[0, 1]`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges fast only below the mean; use the symmetry
    // I_x(a, b) = 1 - I_{1-x}(b, a) above it.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Upper tail `P(X > f)` of the F distribution with `(df1, df2)` degrees of
/// freedom: `I_x(df2/2, df1/2)` with `x = df2 / (df2 + df1 f)`.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> Result<f64, StatsError> {
    if !(df1 >= 1.0 && df2 >= 1.0) || !df1.is_finite() || !df2.is_finite() {
        return Err(StatsError::InvalidDf { df1, df2 });
    }
    if f.is_nan() || f < 0.0 {
        return Err(StatsError::InvalidStatistic(f));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let x = df2 / (df2 + df1 * f);
    Ok(regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, x).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df1: u32,
    pub df2: u32,
    pub p: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub group_means: Vec<f64>,
}

/// Standard one-way (between-groups) ANOVA.
pub fn anova_one_way<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::InsufficientData(format!(
            "need at least 2 groups, got {k}"
        )));
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().is_empty()) {
        return Err(StatsError::InsufficientData(format!(
            "group {} is empty",
            i + 1
        )));
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    if n <= k {
        return Err(StatsError::InsufficientData(format!(
            "need more observations ({n}) than groups ({k})"
        )));
    }
    let group_means: Vec<f64> = groups
        .iter()
        .map(|g| g.as_ref().iter().sum::<f64>() / g.as_ref().len() as f64)
        .collect();
    let grand = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / n as f64;
    let ss_between: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.as_ref().len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.as_ref().iter().map(|y| (y - m).powi(2)).sum::<f64>())
        .sum();
    let df1 = (k - 1) as u32;
    let df2 = (n - k) as u32;
    if ss_within == 0.0 && ss_between == 0.0 {
        return Err(StatsError::DegenerateData);
    }
    let f = if ss_within == 0.0 {
        f64::INFINITY
    } else {
        (ss_between / f64::from(df1)) / (ss_within / f64::from(df2))
    };
    let p = f_sf(f, f64::from(df1), f64::from(df2))?;
    Ok(AnovaResult {
        f,
        df1,
        df2,
        p,
        ss_between,
        ss_within,
        group_means,
    })
}
