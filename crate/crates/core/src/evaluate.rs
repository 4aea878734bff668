//! Forecast accuracy metrics and the evaluation protocol.
//!
//! Errors are organized in an [`ErrorCube`]: signed forecast errors indexed
//! by method, replicate (or cross-validation origin), series, and horizon,
//! plus per-replicate scale denominators for scaled metrics. Metric
//! definitions:
//!
//! * RMSE per (method, series, horizon): root mean square over replicates,
//! * relative RMSE against a reference method: `1 - rmse / rmse_ref`,
//!   positive when the method improves on the reference; an exact zero
//!   reference yields an explicit undefined marker rather than a NaN,
//! * RMSSE per horizon: squared errors are scaled per series by the
//!   training mean square of the seasonal-naive difference, averaged over
//!   series, rooted, then averaged over replicates.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::baseforecast::{fit_forecast, ForecasterSpec};
use crate::covariance::{estimate, CovarianceKind};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::panel::MultiPanel;
use crate::reconcile::{reconcile_per_variable, reconcile_rows, ReconcileMethod};

/// Root mean square of a slice.
pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// `1 - num / den`, or `None` when the reference is exactly zero.
pub fn rel_rmse(num: f64, den: f64) -> Option<f64> {
    if den == 0.0 {
        None
    } else {
        Some(1.0 - num / den)
    }
}

/// Per-series scale denominators: the training mean square of the
/// seasonal-naive difference `y_t - y_{t-p}`. A zero denominator (an
/// exactly periodic training series) is reported as an error naming the
/// series, since scaled errors would be undefined.
pub fn seasonal_naive_denoms(train: &MultiPanel, period: usize) -> Result<Vec<f64>> {
    let t_len = train.len();
    if period == 0 || t_len <= period {
        return Err(Error::InsufficientData(format!(
            "seasonal-naive scaling needs more than {period} training rows, got {t_len}"
        )));
    }
    let labels = train.vec_labels();
    let mut out = Vec::with_capacity(train.width());
    for c in 0..train.width() {
        let col = train.values().column(c);
        let mut acc = 0.0;
        for t in period..t_len {
            let d = col[t] - col[t - period];
            acc += d * d;
        }
        let denom = acc / (t_len - period) as f64;
        if denom == 0.0 {
            return Err(Error::ZeroVariance(format!(
                "series {} is exactly periodic in training; scaled errors are undefined",
                labels[c]
            )));
        }
        out.push(denom);
    }
    Ok(out)
}

/// Signed forecast errors for every method of one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateErrors {
    /// Replicate id (simulation index or cross-validation origin).
    pub rep_id: usize,
    /// Per method, an `H x (n*m)` matrix of signed errors, in the cube's
    /// method order.
    pub per_method: Vec<DMatrix<f64>>,
    /// Per-series scale denominators from this replicate's training window.
    pub scale_denoms: Vec<f64>,
}

/// Signed errors for several methods over replicates, series, and horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCube {
    methods: Vec<String>,
    series_labels: Vec<String>,
    horizon: usize,
    rep_ids: Vec<usize>,
    /// `errors[method][rep]` is `H x n_series`.
    errors: Vec<Vec<DMatrix<f64>>>,
    /// `scale_denoms[rep][series]`.
    scale_denoms: Vec<Vec<f64>>,
}

impl ErrorCube {
    pub fn new(methods: Vec<String>, series_labels: Vec<String>, horizon: usize) -> Result<Self> {
        if methods.is_empty() || series_labels.is_empty() || horizon == 0 {
            return Err(Error::InvalidArgument(
                "error cube needs methods, series, and a positive horizon".into(),
            ));
        }
        let n_methods = methods.len();
        Ok(Self {
            methods,
            series_labels,
            horizon,
            rep_ids: Vec::new(),
            errors: vec![Vec::new(); n_methods],
            scale_denoms: Vec::new(),
        })
    }

    pub fn push_replicate(&mut self, rep: ReplicateErrors) -> Result<()> {
        if rep.per_method.len() != self.methods.len() {
            return Err(Error::ShapeMismatch(format!(
                "replicate has {} method matrices, cube expects {}",
                rep.per_method.len(),
                self.methods.len()
            )));
        }
        for m in &rep.per_method {
            if m.nrows() != self.horizon || m.ncols() != self.series_labels.len() {
                return Err(Error::ShapeMismatch(format!(
                    "error matrix is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    self.horizon,
                    self.series_labels.len()
                )));
            }
        }
        if rep.scale_denoms.len() != self.series_labels.len() {
            return Err(Error::ShapeMismatch(
                "scale denominator count does not match series count".into(),
            ));
        }
        self.rep_ids.push(rep.rep_id);
        for (k, m) in rep.per_method.into_iter().enumerate() {
            self.errors[k].push(m);
        }
        self.scale_denoms.push(rep.scale_denoms);
        Ok(())
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn series_labels(&self) -> &[String] {
        &self.series_labels
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_replicates(&self) -> usize {
        self.rep_ids.len()
    }

    pub fn rep_ids(&self) -> &[usize] {
        &self.rep_ids
    }

    pub fn method_index(&self, method: &str) -> Result<usize> {
        self.methods
            .iter()
            .position(|m| m == method)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method {method:?}; cube has {:?}",
                    self.methods
                ))
            })
    }

    /// Signed error for one cell.
    pub fn error(&self, method_idx: usize, rep_idx: usize, h: usize, series: usize) -> f64 {
        self.errors[method_idx][rep_idx][(h, series)]
    }

    /// RMSE over replicates for every (series, horizon) of one method;
    /// result is `n_series x H`.
    pub fn rmse_matrix(&self, method: &str) -> Result<DMatrix<f64>> {
        let k = self.method_index(method)?;
        if self.rep_ids.is_empty() {
            return Err(Error::InsufficientData("error cube is empty".into()));
        }
        let n_s = self.series_labels.len();
        let reps = self.rep_ids.len() as f64;
        let mut out = DMatrix::<f64>::zeros(n_s, self.horizon);
        for mat in &self.errors[k] {
            for h in 0..self.horizon {
                for s in 0..n_s {
                    let e = mat[(h, s)];
                    out[(s, h)] += e * e;
                }
            }
        }
        out.apply(|v| *v = (*v / reps).sqrt());
        Ok(out)
    }

    /// Relative RMSE of `method` against `reference`, per series and
    /// horizon. `None` marks cells with a zero reference RMSE.
    pub fn rel_rmse_matrix(
        &self,
        method: &str,
        reference: &str,
    ) -> Result<Vec<Vec<Option<f64>>>> {
        let num = self.rmse_matrix(method)?;
        let den = self.rmse_matrix(reference)?;
        let mut out = vec![vec![None; self.horizon]; self.series_labels.len()];
        for s in 0..self.series_labels.len() {
            for h in 0..self.horizon {
                out[s][h] = rel_rmse(num[(s, h)], den[(s, h)]);
            }
        }
        Ok(out)
    }

    /// Mean over series of the per-series relative RMSE, per horizon.
    /// Undefined cells are skipped; a horizon where every cell is undefined
    /// yields `None`.
    pub fn mean_rel_rmse_by_horizon(
        &self,
        method: &str,
        reference: &str,
    ) -> Result<Vec<Option<f64>>> {
        let cells = self.rel_rmse_matrix(method, reference)?;
        let mut out = Vec::with_capacity(self.horizon);
        for h in 0..self.horizon {
            let defined: Vec<f64> = cells.iter().filter_map(|row| row[h]).collect();
            if defined.is_empty() {
                out.push(None);
            } else {
                out.push(Some(defined.iter().sum::<f64>() / defined.len() as f64));
            }
        }
        Ok(out)
    }

    /// Fraction of defined (series, horizon) cells with a non-negative
    /// relative RMSE; `None` when no cell is defined.
    pub fn pct_nonnegative_cells(&self, method: &str, reference: &str) -> Result<Option<f64>> {
        let cells = self.rel_rmse_matrix(method, reference)?;
        let mut defined = 0usize;
        let mut nonneg = 0usize;
        for row in &cells {
            for cell in row.iter().flatten() {
                defined += 1;
                if *cell >= 0.0 {
                    nonneg += 1;
                }
            }
        }
        Ok((defined > 0).then(|| nonneg as f64 / defined as f64))
    }

    /// RMSSE per horizon: for each replicate, scale each squared error by
    /// its series denominator, average over series, take the root, then
    /// average over replicates.
    pub fn rmsse_by_horizon(&self, method: &str) -> Result<Vec<f64>> {
        let k = self.method_index(method)?;
        if self.rep_ids.is_empty() {
            return Err(Error::InsufficientData("error cube is empty".into()));
        }
        let n_s = self.series_labels.len();
        for (r, denoms) in self.scale_denoms.iter().enumerate() {
            for (s, d) in denoms.iter().enumerate() {
                if *d <= 0.0 {
                    return Err(Error::ZeroVariance(format!(
                        "replicate {} has a non-positive scale denominator for series {}",
                        self.rep_ids[r], self.series_labels[s]
                    )));
                }
            }
        }
        let mut out = vec![0.0; self.horizon];
        for (r, mat) in self.errors[k].iter().enumerate() {
            for h in 0..self.horizon {
                let mut acc = 0.0;
                for s in 0..n_s {
                    let e = mat[(h, s)];
                    acc += e * e / self.scale_denoms[r][s];
                }
                out[h] += (acc / n_s as f64).sqrt();
            }
        }
        let reps = self.rep_ids.len() as f64;
        for v in &mut out {
            *v /= reps;
        }
        Ok(out)
    }
}

/// Configuration for rolling-origin evaluation on a fixed panel.
#[derive(Debug, Clone)]
pub struct CvConfig {
    pub forecaster: ForecasterSpec,
    pub estimators: Vec<CovarianceKind>,
    pub method: ReconcileMethod,
    pub horizon: usize,
    /// Number of forecast origins; training windows expand from
    /// `T - horizon - n_origins + 1` up to `T - horizon`.
    pub n_origins: usize,
    /// Seasonal period used for scale denominators.
    pub period: usize,
}

/// Method labels for a base + (multi, uni) estimator layout.
pub fn method_labels(estimators: &[CovarianceKind]) -> Vec<String> {
    let mut out = vec!["base".to_string()];
    for est in estimators {
        out.push(format!("{}:multi", est.as_str()));
        out.push(format!("{}:uni", est.as_str()));
    }
    out
}

/// Fits, reconciles, and scores one training/test split. Returns errors in
/// [`method_labels`] order.
pub fn evaluate_split(
    h: &Hierarchy,
    train: &MultiPanel,
    test: &MultiPanel,
    forecaster: &ForecasterSpec,
    estimators: &[CovarianceKind],
    method: ReconcileMethod,
    period: usize,
    rep_id: usize,
) -> Result<ReplicateErrors> {
    let horizon = test.len();
    let base = fit_forecast(forecaster, train, horizon)?;
    let n = h.n();
    let m = train.n_vars();

    let mut per_method = Vec::with_capacity(1 + 2 * estimators.len());
    let actual = test.values();
    per_method.push(&base.forecasts - actual);

    for est in estimators {
        let weight = estimate(&base.residuals, *est)?;
        let reconciled = reconcile_rows(h, m, &weight.w, &base.forecasts, method)?;
        per_method.push(&reconciled - actual);

        // Univariate treatment: each variable gets its own weight estimated
        // from that variable's residual columns alone.
        let mut weights = Vec::with_capacity(m);
        for j in 0..m {
            let cols: Vec<usize> = (j * n..(j + 1) * n).collect();
            let sub = base.residuals.select_columns(&cols)?;
            weights.push(estimate(&sub, *est)?.w);
        }
        let uni = reconcile_per_variable(h, &base.forecasts, &weights)?;
        per_method.push(&uni - actual);
    }

    Ok(ReplicateErrors {
        rep_id,
        per_method,
        scale_denoms: seasonal_naive_denoms(train, period)?,
    })
}

/// Expanding-window evaluation over the last feasible origins of a panel.
///
/// Origin `k` trains on the first `T - horizon - n_origins + 1 + k` rows and
/// scores the following `horizon` rows. Origins run in parallel; results
/// are merged in origin order, so the output does not depend on the thread
/// count. Any origin failure aborts with its diagnostic.
pub fn rolling_origin_cv(h: &Hierarchy, panel: &MultiPanel, cfg: &CvConfig) -> Result<ErrorCube> {
    if panel.node_order() != h.tree().node_ids() {
        return Err(Error::ShapeMismatch(
            "panel node order does not match hierarchy node order".into(),
        ));
    }
    if cfg.horizon == 0 || cfg.n_origins == 0 {
        return Err(Error::InvalidArgument(
            "horizon and origin count must be positive".into(),
        ));
    }
    let t_len = panel.len();
    let first_train = (t_len + 1)
        .checked_sub(cfg.horizon + cfg.n_origins)
        .filter(|v| *v >= 2)
        .ok_or_else(|| {
            Error::InsufficientData(format!(
                "panel of length {t_len} cannot host {} origins at horizon {}",
                cfg.n_origins, cfg.horizon
            ))
        })?;

    let mut cube = ErrorCube::new(
        method_labels(&cfg.estimators),
        panel.vec_labels(),
        cfg.horizon,
    )?;

    let results: Vec<Result<ReplicateErrors>> = (0..cfg.n_origins)
        .into_par_iter()
        .map(|k| {
            let train_len = first_train + k;
            let train = panel.window(0, train_len)?;
            let test = panel.window(train_len, cfg.horizon)?;
            evaluate_split(
                h,
                &train,
                &test,
                &cfg.forecaster,
                &cfg.estimators,
                cfg.method,
                cfg.period,
                train_len,
            )
        })
        .collect();

    for res in results {
        cube.push_replicate(res?)?;
    }
    Ok(cube)
}
