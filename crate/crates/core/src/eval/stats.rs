use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{validation, Result};
use crate::math::{mean, sample_variance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided Student-t tail probability `P(|T_df| >= |t|)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(validation!("paired samples differ in length: {} vs {}", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(validation!("paired test needs at least 2 pairs"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    let d = differences(a, b)?;
    let n = d.len() as f64;
    let m = mean(&d);
    let sd = sample_variance(&d).sqrt();
    let df = n - 1.0;
    let t = if sd == 0.0 {
        if m == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(m)
        }
    } else {
        m / (sd / n.sqrt())
    };
    Ok(TTest {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// Paired effect size `mean(d) / sd(d)`, sample sd.
pub fn cohens_d_paired(a: &[f64], b: &[f64]) -> Result<f64> {
    let d = differences(a, b)?;
    let m = mean(&d);
    let sd = sample_variance(&d).sqrt();
    Ok(if sd == 0.0 {
        if m == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(m)
        }
    } else {
        m / sd
    })
}
