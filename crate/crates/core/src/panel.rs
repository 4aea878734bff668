//! Time-indexed panels of multivariate hierarchical observations.
//!
//! A [`MultiPanel`] stores `T` rows of stacked observations. Row `t` is
//! `vec(Y_t)` laid out variable-major: column `j * n + i` holds variable `j`
//! at node `i`, so the first `n` entries of a row are variable 0 at every
//! node. All matrix code in this crate assumes that ordering.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

/// Time labelling for panel rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeAxis {
    /// Plain integer index starting at `start`.
    Index { start: i64 },
    /// Calendar months starting at `year`-`month` (month in 1..=12).
    Monthly { year: i32, month: u32 },
}

impl TimeAxis {
    pub fn index(start: i64) -> Self {
        TimeAxis::Index { start }
    }

    pub fn monthly(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidArgument(format!(
                "month must be in 1..=12, got {month}"
            )));
        }
        Ok(TimeAxis::Monthly { year, month })
    }

    /// Label for row offset `t`: the integer itself, or `YYYY-MM`.
    pub fn label(&self, t: usize) -> String {
        match *self {
            TimeAxis::Index { start } => (start + t as i64).to_string(),
            TimeAxis::Monthly { year, month } => {
                let total = (month as i64 - 1) + t as i64;
                let y = year as i64 + total.div_euclid(12);
                let m = total.rem_euclid(12) + 1;
                format!("{y:04}-{m:02}")
            }
        }
    }

    /// The axis shifted forward by `by` steps.
    pub fn advanced(&self, by: usize) -> TimeAxis {
        match *self {
            TimeAxis::Index { start } => TimeAxis::Index {
                start: start + by as i64,
            },
            TimeAxis::Monthly { year, month } => {
                let total = (month as i64 - 1) + by as i64;
                TimeAxis::Monthly {
                    year: (year as i64 + total.div_euclid(12)) as i32,
                    month: (total.rem_euclid(12) + 1) as u32,
                }
            }
        }
    }
}

/// Result of checking a panel against the aggregation constraints.
#[derive(Debug, Clone, Copy)]
pub struct CoherenceCheck {
    /// Largest `|C* vec(Y_t)|` entry over all rows.
    pub max_violation: f64,
    /// Scale-aware tolerance the violation was compared against.
    pub threshold: f64,
    /// Whether `max_violation <= threshold`.
    pub pass: bool,
}

/// A rectangular panel of `m` variables observed on `n` hierarchy nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPanel {
    values: DMatrix<f64>,
    node_order: Vec<String>,
    var_order: Vec<String>,
    axis: TimeAxis,
}

impl MultiPanel {
    /// Wraps a `T x (n*m)` value matrix. Rejects empty node or variable
    /// lists, shape mismatches, and non-finite entries.
    pub fn new(
        values: DMatrix<f64>,
        node_order: Vec<String>,
        var_order: Vec<String>,
        axis: TimeAxis,
    ) -> Result<Self> {
        if node_order.is_empty() || var_order.is_empty() {
            return Err(Error::InvalidArgument(
                "panel needs at least one node and one variable".into(),
            ));
        }
        let width = node_order.len() * var_order.len();
        if values.ncols() != width {
            return Err(Error::ShapeMismatch(format!(
                "panel has {} columns, expected n*m = {}",
                values.ncols(),
                width
            )));
        }
        for t in 0..values.nrows() {
            for c in 0..values.ncols() {
                if !values[(t, c)].is_finite() {
                    let n = node_order.len();
                    return Err(Error::NonFinite(format!(
                        "panel value at time {t}, node {}, variable {} is not finite",
                        node_order[c % n],
                        var_order[c / n]
                    )));
                }
            }
        }
        Ok(Self {
            values,
            node_order,
            var_order,
            axis,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_nodes(&self) -> usize {
        self.node_order.len()
    }

    pub fn n_vars(&self) -> usize {
        self.var_order.len()
    }

    /// Stacked width `n * m`.
    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn node_order(&self) -> &[String] {
        &self.node_order
    }

    pub fn var_order(&self) -> &[String] {
        &self.var_order
    }

    pub fn axis(&self) -> TimeAxis {
        self.axis
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Stacked column index of `(node_i, var_j)`.
    pub fn col(&self, node_i: usize, var_j: usize) -> usize {
        var_j * self.node_order.len() + node_i
    }

    pub fn value(&self, t: usize, node_i: usize, var_j: usize) -> f64 {
        self.values[(t, self.col(node_i, var_j))]
    }

    /// `vec(Y_t)` as a column vector.
    pub fn vec_at(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// One series over time.
    pub fn series(&self, node_i: usize, var_j: usize) -> DVector<f64> {
        self.values.column(self.col(node_i, var_j)).into_owned()
    }

    /// Labels in stacked column order, formatted `node:variable`.
    pub fn vec_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width());
        for var in &self.var_order {
            for node in &self.node_order {
                out.push(format!("{node}:{var}"));
            }
        }
        out
    }

    /// Contiguous time window `[start, start+len)` with the axis advanced.
    pub fn window(&self, start: usize, len: usize) -> Result<MultiPanel> {
        if start + len > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window {start}..{} exceeds panel length {}",
                start + len,
                self.len()
            )));
        }
        Ok(MultiPanel {
            values: self.values.rows(start, len).into_owned(),
            node_order: self.node_order.clone(),
            var_order: self.var_order.clone(),
            axis: self.axis.advanced(start),
        })
    }

    /// Splits into `[0, train_len)` and `[train_len, T)`.
    pub fn split(&self, train_len: usize) -> Result<(MultiPanel, MultiPanel)> {
        if train_len == 0 || train_len >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "split point {train_len} must lie strictly inside 0..{}",
                self.len()
            )));
        }
        Ok((
            self.window(0, train_len)?,
            self.window(train_len, self.len() - train_len)?,
        ))
    }

    fn check_hierarchy(&self, h: &Hierarchy) -> Result<()> {
        if self.node_order != h.tree().node_ids() {
            return Err(Error::ShapeMismatch(
                "panel node order does not match hierarchy node order".into(),
            ));
        }
        Ok(())
    }

    /// Per-row constraint violations `|C* vec(Y_t)|_max`.
    pub fn constraint_violations(&self, h: &Hierarchy) -> Result<Vec<f64>> {
        self.check_hierarchy(h)?;
        let kron = h.kron_extend(self.n_vars())?;
        Ok((0..self.len())
            .map(|t| kron.constraint_violation(&self.vec_at(t)))
            .collect())
    }

    /// Largest violation over all rows (0 for an empty panel).
    pub fn max_constraint_violation(&self, h: &Hierarchy) -> f64 {
        match self.constraint_violations(h) {
            Ok(v) => v.into_iter().fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        }
    }

    /// Checks aggregation coherence with the scale-aware tolerance
    /// `1e-8 * (1 + max |Y|)`.
    pub fn coherence(&self, h: &Hierarchy) -> Result<CoherenceCheck> {
        self.check_hierarchy(h)?;
        let max_violation = self
            .constraint_violations(h)?
            .into_iter()
            .fold(0.0, f64::max);
        let scale = if self.values.is_empty() {
            0.0
        } else {
            self.values.amax()
        };
        let threshold = 1e-8 * (1.0 + scale);
        Ok(CoherenceCheck {
            max_violation,
            threshold,
            pass: max_violation <= threshold,
        })
    }
}
