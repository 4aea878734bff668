//! Forecast-error covariance estimators for reconciliation weights.
//!
//! Estimation works on a [`ResidualPanel`]: `R` rows of stacked in-sample
//! one-step errors, one column per `(node, variable)` pair in the same
//! variable-major order as [`crate::panel::MultiPanel`]. Available weights:
//!
//! * sample covariance `W1 = (1/R) sum e_t e_t'` of mean-centered rows,
//! * shrinkage of `W1` toward its diagonal with a data-driven intensity,
//! * the diagonal of `W1`,
//! * the identity (no weighting).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stacked residual rows used for covariance estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    rows: DMatrix<f64>,
    labels: Vec<String>,
}

impl ResidualPanel {
    /// Wraps an `R x d` residual matrix with per-column labels.
    pub fn new(rows: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InsufficientData(
                "residual panel has no rows".into(),
            ));
        }
        if labels.len() != rows.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} residual columns",
                labels.len(),
                rows.ncols()
            )));
        }
        for r in 0..rows.nrows() {
            for c in 0..rows.ncols() {
                if !rows[(r, c)].is_finite() {
                    return Err(Error::NonFinite(format!(
                        "residual for {} at row {r} is not finite",
                        labels[c]
                    )));
                }
            }
        }
        Ok(Self { rows, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    /// Column count `d` (usually `n * m`).
    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// A panel restricted to the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<ResidualPanel> {
        let mut rows = DMatrix::<f64>::zeros(self.n_rows(), cols.len());
        let mut labels = Vec::with_capacity(cols.len());
        for (k, &c) in cols.iter().enumerate() {
            if c >= self.dim() {
                return Err(Error::InvalidArgument(format!(
                    "column {c} out of range for residual panel of width {}",
                    self.dim()
                )));
            }
            rows.set_column(k, &self.rows.column(c));
            labels.push(self.labels[c].clone());
        }
        ResidualPanel::new(rows, labels)
    }

    /// Column means.
    fn means(&self) -> Vec<f64> {
        let r = self.n_rows() as f64;
        (0..self.dim())
            .map(|c| self.rows.column(c).sum() / r)
            .collect()
    }

    /// Mean-centered copy of the rows.
    fn centered(&self) -> DMatrix<f64> {
        let means = self.means();
        let mut x = self.rows.clone();
        for c in 0..x.ncols() {
            for r in 0..x.nrows() {
                x[(r, c)] -= means[c];
            }
        }
        x
    }
}

/// Which estimator produced a weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Sample,
    Shrinkage,
    Diagonal,
    Identity,
}

impl CovarianceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CovarianceKind::Sample => "sample",
            CovarianceKind::Shrinkage => "shrinkage",
            CovarianceKind::Diagonal => "diagonal",
            CovarianceKind::Identity => "identity",
        }
    }
}

impl std::str::FromStr for CovarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(CovarianceKind::Sample),
            "shrinkage" => Ok(CovarianceKind::Shrinkage),
            "diagonal" => Ok(CovarianceKind::Diagonal),
            "identity" => Ok(CovarianceKind::Identity),
            other => Err(Error::InvalidArgument(format!(
                "unknown covariance estimator {other:?} (expected sample, shrinkage, diagonal, or identity)"
            ))),
        }
    }
}

/// An estimated weight matrix plus provenance needed by callers.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// Symmetric `d x d` weight matrix.
    pub w: DMatrix<f64>,
    pub kind: CovarianceKind,
    /// Shrinkage intensity in `[0, 1]`; set only for [`CovarianceKind::Shrinkage`].
    pub lambda: Option<f64>,
    /// True when the row count is below the dimension, so the sample
    /// estimate cannot have full rank.
    pub rank_deficient_possible: bool,
}

/// Sample covariance `(1/R) sum e_t e_t'` of mean-centered residuals.
pub fn sample_covariance(panel: &ResidualPanel) -> Result<CovarianceEstimate> {
    if panel.n_rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "sample covariance needs at least 2 residual rows, got {}",
            panel.n_rows()
        )));
    }
    let x = panel.centered();
    let w = x.transpose() * &x / panel.n_rows() as f64;
    let w = symmetrize(w);
    Ok(CovarianceEstimate {
        rank_deficient_possible: panel.n_rows() < panel.dim(),
        w,
        kind: CovarianceKind::Sample,
        lambda: None,
    })
}

/// Diagonal of the sample covariance.
pub fn diagonal_covariance(panel: &ResidualPanel) -> Result<CovarianceEstimate> {
    let sample = sample_covariance(panel)?;
    let mut w = DMatrix::<f64>::zeros(panel.dim(), panel.dim());
    for i in 0..panel.dim() {
        w[(i, i)] = sample.w[(i, i)];
    }
    Ok(CovarianceEstimate {
        w,
        kind: CovarianceKind::Diagonal,
        lambda: None,
        rank_deficient_possible: false,
    })
}

/// Identity weights of the given dimension.
pub fn identity_covariance(dim: usize) -> CovarianceEstimate {
    CovarianceEstimate {
        w: DMatrix::identity(dim, dim),
        kind: CovarianceKind::Identity,
        lambda: None,
        rank_deficient_possible: false,
    }
}

/// Shrinkage estimate `lambda * diag(W1) + (1 - lambda) * W1`.
///
/// The intensity is estimated from the data as
/// `lambda = sum_{i!=j} var(r_ij) / sum_{i!=j} r_ij^2` over the sample
/// correlations `r_ij`, clamped to `[0, 1]`. When `W1` is already diagonal
/// both sums vanish and `lambda` is taken as 1, which leaves the diagonal
/// target. Columns with zero variance cannot be standardized and are
/// rejected.
pub fn shrinkage_covariance(panel: &ResidualPanel) -> Result<CovarianceEstimate> {
    let r_rows = panel.n_rows();
    if r_rows < 2 {
        return Err(Error::InsufficientData(format!(
            "shrinkage estimation needs at least 2 residual rows, got {}",
            r_rows
        )));
    }
    let d = panel.dim();
    let x = panel.centered();
    let w1 = symmetrize(x.transpose() * &x / r_rows as f64);

    let mut sd = vec![0.0; d];
    for i in 0..d {
        let v = w1[(i, i)];
        if v <= 0.0 {
            return Err(Error::ZeroVariance(format!(
                "residual column {} has zero variance; cannot standardize for shrinkage",
                panel.labels()[i]
            )));
        }
        sd[i] = v.sqrt();
    }

    // Standardized residuals; column i now has unit sample variance.
    let mut z = x;
    for c in 0..d {
        for t in 0..r_rows {
            z[(t, c)] /= sd[c];
        }
    }

    // Sample correlations r_ij and the variance of each r_ij, computed from
    // the per-time products w_ijt = z_ti * z_tj with mean w_bar_ij = r_ij.
    let rf = r_rows as f64;
    let var_scale = rf / ((rf - 1.0).powi(3));
    let mut num = 0.0; // sum of var(r_ij) over i != j
    let mut den = 0.0; // sum of r_ij^2 over i != j
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let mut mean_prod = 0.0;
            for t in 0..r_rows {
                mean_prod += z[(t, i)] * z[(t, j)];
            }
            mean_prod /= rf;
            let mut ss = 0.0;
            for t in 0..r_rows {
                let dev = z[(t, i)] * z[(t, j)] - mean_prod;
                ss += dev * dev;
            }
            num += var_scale * ss;
            den += mean_prod * mean_prod;
        }
    }

    let lambda = if den == 0.0 {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    };

    let mut w = w1;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                w[(i, j)] *= 1.0 - lambda;
            }
        }
    }

    Ok(CovarianceEstimate {
        w,
        kind: CovarianceKind::Shrinkage,
        lambda: Some(lambda),
        rank_deficient_possible: false,
    })
}

/// Dispatches to the estimator named by `kind`.
pub fn estimate(panel: &ResidualPanel, kind: CovarianceKind) -> Result<CovarianceEstimate> {
    match kind {
        CovarianceKind::Sample => sample_covariance(panel),
        CovarianceKind::Shrinkage => shrinkage_covariance(panel),
        CovarianceKind::Diagonal => diagonal_covariance(panel),
        CovarianceKind::Identity => Ok(identity_covariance(panel.dim())),
    }
}

fn symmetrize(w: DMatrix<f64>) -> DMatrix<f64> {
    let wt = w.transpose();
    (w + wt) * 0.5
}
