//! Small descriptive statistics used across metrics and experiment analysis.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Two-pass population variance.
pub fn population_variance(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64
}

pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mu = mean(xs);
    Some((xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Mean with a two-sided Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub n: usize,
    /// `None` when fewer than two values are available.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl Estimate {
    pub fn of(xs: &[f64], level: f64) -> Self {
        let mu = mean(xs);
        let half = sample_sd(xs).map(|sd| {
            let dof = (xs.len() - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, dof)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.5 + level / 2.0);
            t * sd / (xs.len() as f64).sqrt()
        });
        Self {
            mean: mu,
            n: xs.len(),
            ci_low: half.map(|h| mu - h),
            ci_high: half.map(|h| mu + h),
        }
    }

    /// Whether this interval lies entirely below `other`'s.
    pub fn below(&self, other: &Estimate) -> bool {
        matches!((self.ci_high, other.ci_low), (Some(h), Some(l)) if h < l)
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        match (self.ci_low, self.ci_high, other.ci_low, other.ci_high) {
            (Some(a), Some(b), Some(c), Some(d)) => a <= d && c <= b,
            _ => false,
        }
    }
}

/// Pearson correlation; `None` for fewer than three points or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Kendall's tau-b; `None` when either ranking is entirely tied.
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for a in 0..xs.len() {
        for b in a + 1..xs.len() {
            let dx = xs[a].total_cmp(&xs[b]) as i64;
            let dy = ys[a].total_cmp(&ys[b]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => ties_x += 1,
                (_, 0) => ties_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = concordant + discordant;
    let denom = (((n0 + ties_x) * (n0 + ties_y)) as f64).sqrt();
    (denom > 0.0).then(|| (concordant - discordant) as f64 / denom)
}
