//! Column standardisation and the shared least-squares utility estimator.

use crate::error::{Error, Result};
use crate::signals::FeatureMatrix;

/// Columns whose population standard deviation falls below this are degenerate.
pub const DEGENERATE_SD: f64 = 1e-9;
/// Ridge penalty used when the Gram matrix is singular.
pub const RIDGE_LAMBDA: f64 = 1e-8;
/// Relative pivot below which the Gram matrix counts as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStat {
    pub mean: f64,
    pub sd: f64,
    pub degenerate: bool,
}

impl ColumnStat {
    pub fn standardize(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (x - self.mean) / self.sd
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats(pub Vec<ColumnStat>);

impl ColumnStats {
    pub fn of(matrix: &FeatureMatrix) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::Usage("cannot standardize an empty feature matrix".into()));
        }
        let n = matrix.len() as f64;
        let stats = (0..matrix.width())
            .map(|c| {
                let mean = matrix.column(c).sum::<f64>() / n;
                let var = matrix.column(c).map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                ColumnStat { mean, sd, degenerate: sd < DEGENERATE_SD }
            })
            .collect();
        Ok(Self(stats))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, matrix: &mut FeatureMatrix) {
        let width = matrix.width();
        for row in matrix.values_mut().chunks_exact_mut(width.max(1)) {
            for (x, stat) in row.iter_mut().zip(&self.0) {
                *x = stat.standardize(*x);
            }
        }
    }
}

/// Z-scores every column by its own population mean and standard deviation.
///
/// Degenerate (near-constant) columns become exactly zero.
pub fn standardize(mut matrix: FeatureMatrix) -> Result<(FeatureMatrix, ColumnStats)> {
    let stats = ColumnStats::of(&matrix)?;
    stats.apply(&mut matrix);
    Ok((matrix, stats))
}

/// Affine model `w0 + w·z` over standardised features.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub columns: Vec<String>,
    pub stats: ColumnStats,
    /// Set when the ridge fallback was needed.
    pub ridge: bool,
}

impl Weights {
    /// Prediction for an already standardised row.
    pub fn score(&self, z: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(z).map(|(w, x)| w * x).sum::<f64>()
    }

    /// Prediction for a raw row, standardised with the fit-time statistics.
    pub fn predict(&self, raw: &[f64]) -> Result<f64> {
        if raw.len() != self.coefficients.len() {
            return Err(Error::Internal(format!(
                "row has {} features, model expects {}",
                raw.len(),
                self.coefficients.len()
            )));
        }
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .zip(raw)
                .zip(&self.stats.0)
                .map(|((w, x), stat)| w * stat.standardize(*x))
                .sum::<f64>())
    }

    /// Coefficient for the named column, if present.
    pub fn coefficient(&self, column: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == column).map(|i| self.coefficients[i])
    }
}

/// Ordinary least squares with intercept on a standardised matrix.
///
/// Solves the normal equations by Cholesky; if the Gram matrix is singular
/// the coefficients (not the intercept) get a `RIDGE_LAMBDA` penalty.
pub fn fit_least_squares(x: &FeatureMatrix, y: &[f64], stats: ColumnStats) -> Result<Weights> {
    let p = x.width();
    if x.len() != y.len() {
        return Err(Error::Fit(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if x.len() < p + 1 {
        return Err(Error::Fit(format!(
            "{} rows cannot determine {} parameters",
            x.len(),
            p + 1
        )));
    }
    if stats.len() != p {
        return Err(Error::Internal("column statistics do not match matrix".into()));
    }
    let dim = p + 1;
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut augmented = vec![1.0; dim];
    for (row, &target) in x.rows().zip(y) {
        augmented[1..].copy_from_slice(row);
        for a in 0..dim {
            rhs[a] += augmented[a] * target;
            for b in 0..=a {
                gram[a * dim + b] += augmented[a] * augmented[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            gram[b * dim + a] = gram[a * dim + b];
        }
    }

    let (solution, ridge) = match cholesky_solve(&gram, &rhs, dim, PIVOT_TOLERANCE) {
        Some(s) => (s, false),
        None => {
            let mut penalised = gram.clone();
            for a in 1..dim {
                penalised[a * dim + a] += RIDGE_LAMBDA;
            }
            let s = cholesky_solve(&penalised, &rhs, dim, 0.0)
                .ok_or_else(|| Error::Fit("normal equations singular even with ridge".into()))?;
            (s, true)
        }
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite coefficients".into()));
    }
    Ok(Weights {
        intercept: solution[0],
        coefficients: solution[1..].to_vec(),
        columns: x.columns().to_vec(),
        stats,
        ridge,
    })
}

/// Solves `A s = b` for symmetric `A`; `None` when a pivot is not clearly positive.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize, rel_tol: f64) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > rel_tol * scale) || sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * z[k];
        }
        z[i] = sum / l[i * n + i];
    }
    let mut s = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * s[k];
        }
        s[i] = sum / l[i * n + i];
    }
    Some(s)
}
