//! Base (unreconciled) forecasters and their in-sample residuals.
//!
//! Reconciliation is agnostic to how base forecasts are produced; it only
//! needs the stacked forecast rows and a panel of in-sample one-step errors
//! to estimate weights from. This module provides three deterministic
//! reference forecasters plus an import path for forecasts produced by
//! external tooling:
//!
//! * `SeasonalMean`: per-series mean of each seasonal phase,
//! * `Arx`: per-series least squares on lags and seasonal dummies,
//! * `Var1`: per-node first-order vector autoregression across variables.
//!
//! All three fit each replicate independently and involve no randomness, so
//! repeated runs are bit-identical.

use nalgebra::{DMatrix, DVector};

use crate::covariance::ResidualPanel;
use crate::error::{Error, Result};
use crate::panel::{MultiPanel, TimeAxis};

/// Which base forecaster to fit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForecasterSpec {
    /// Mean of the training values sharing each seasonal phase.
    SeasonalMean { period: usize },
    /// Per-series regression on an intercept, `lags` autoregressive terms,
    /// and `period - 1` seasonal dummies. Forecasts iterate on their own
    /// predictions.
    Arx { lags: usize, period: usize },
    /// Per-node VAR(1) across the panel's variables.
    Var1,
}

impl ForecasterSpec {
    /// Parses a forecaster name: `seasonal-mean`, `arx`, `arx:<lags>`, or
    /// `var1`. `period` supplies the seasonal period where one is needed.
    pub fn parse(name: &str, period: usize) -> Result<Self> {
        if name == "seasonal-mean" {
            return Ok(ForecasterSpec::SeasonalMean { period });
        }
        if name == "var1" {
            return Ok(ForecasterSpec::Var1);
        }
        if name == "arx" {
            return Ok(ForecasterSpec::Arx { lags: 2, period });
        }
        if let Some(rest) = name.strip_prefix("arx:") {
            let lags: usize = rest.parse().map_err(|_| {
                Error::InvalidArgument(format!("invalid lag count in forecaster {name:?}"))
            })?;
            return Ok(ForecasterSpec::Arx { lags, period });
        }
        Err(Error::InvalidArgument(format!(
            "unknown forecaster {name:?} (expected seasonal-mean, arx, arx:<lags>, or var1)"
        )))
    }

    /// Stable label used in output tables.
    pub fn label(&self) -> String {
        match self {
            ForecasterSpec::SeasonalMean { .. } => "seasonal-mean".to_string(),
            ForecasterSpec::Arx { lags, .. } => format!("arx{lags}"),
            ForecasterSpec::Var1 => "var1".to_string(),
        }
    }

    /// Rows consumed before residuals become available.
    fn warmup(&self) -> usize {
        match self {
            ForecasterSpec::SeasonalMean { .. } => 0,
            ForecasterSpec::Arx { lags, .. } => *lags,
            ForecasterSpec::Var1 => 1,
        }
    }
}

/// Base forecasts plus the residual panel they were fitted with.
#[derive(Debug, Clone)]
pub struct BaseForecastSet {
    /// `H x (n*m)` forecast rows in variable-major stacked order.
    pub forecasts: DMatrix<f64>,
    /// In-sample one-step errors, one column per stacked series. Rows start
    /// after the forecaster's warmup so the panel is rectangular.
    pub residuals: ResidualPanel,
    pub node_order: Vec<String>,
    pub var_order: Vec<String>,
    /// Axis of the first forecast row (one step past the training window).
    pub forecast_axis: TimeAxis,
    /// Label of the last training time, i.e. the forecast origin.
    pub origin: String,
    /// Forecaster label for reporting.
    pub forecaster: String,
}

/// Seasonal phase of the panel's first row, so that rolling windows of the
/// same underlying series agree on phase labels.
fn phase_offset(axis: TimeAxis, period: usize) -> usize {
    let raw = match axis {
        TimeAxis::Index { start } => start,
        TimeAxis::Monthly { year, month } => year as i64 * 12 + (month as i64 - 1),
    };
    raw.rem_euclid(period as i64) as usize
}

/// Fits the forecaster to every series of the training panel and forecasts
/// `horizon` steps past its end.
pub fn fit_forecast(
    spec: &ForecasterSpec,
    train: &MultiPanel,
    horizon: usize,
) -> Result<BaseForecastSet> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let t_len = train.len();
    let width = train.width();
    let labels = train.vec_labels();

    let residual_rows = t_len
        .checked_sub(spec.warmup())
        .filter(|r| *r >= 2)
        .ok_or_else(|| {
            Error::InsufficientData(format!(
                "training length {t_len} leaves fewer than 2 residual rows after warmup {}",
                spec.warmup()
            ))
        })?;

    let mut forecasts = DMatrix::<f64>::zeros(horizon, width);
    let mut residuals = DMatrix::<f64>::zeros(residual_rows, width);

    match spec {
        ForecasterSpec::SeasonalMean { period } => {
            let period = (*period).max(1);
            if t_len < period {
                return Err(Error::InsufficientData(format!(
                    "seasonal mean needs at least one full period ({period}), got {t_len} rows"
                )));
            }
            let offset = phase_offset(train.axis(), period);
            for c in 0..width {
                let series = train.values().column(c);
                let mut sums = vec![0.0; period];
                let mut counts = vec![0usize; period];
                for t in 0..t_len {
                    let ph = (offset + t) % period;
                    sums[ph] += series[t];
                    counts[ph] += 1;
                }
                let means: Vec<f64> = sums
                    .iter()
                    .zip(&counts)
                    .map(|(s, &k)| s / k as f64)
                    .collect();
                for t in 0..t_len {
                    residuals[(t, c)] = series[t] - means[(offset + t) % period];
                }
                for h in 0..horizon {
                    forecasts[(h, c)] = means[(offset + t_len + h) % period];
                }
            }
        }
        ForecasterSpec::Arx { lags, period } => {
            let period = (*period).max(1);
            let offset = phase_offset(train.axis(), period);
            let n_dummies = period - 1;
            let n_cols = 1 + lags + n_dummies;
            let n_rows = t_len - lags;
            if n_rows < n_cols + 2 {
                return Err(Error::InsufficientData(format!(
                    "regression needs at least {} rows after {lags} lags, got {n_rows}",
                    n_cols + 2
                )));
            }
            for c in 0..width {
                let series: Vec<f64> = train.values().column(c).iter().copied().collect();
                let (beta, res) = fit_arx_series(
                    &series, *lags, period, offset, n_cols, &labels[c],
                )?;
                for (k, r) in res.iter().enumerate() {
                    residuals[(k, c)] = *r;
                }
                // Iterated forecasting: later horizons feed on predictions.
                let mut history = series;
                for h in 0..horizon {
                    let t_abs = t_len + h;
                    let mut acc = beta[0];
                    for l in 1..=*lags {
                        acc += beta[l] * history[t_abs - l];
                    }
                    let ph = (offset + t_abs) % period;
                    if ph >= 1 {
                        acc += beta[1 + lags + (ph - 1)];
                    }
                    history.push(acc);
                    forecasts[(h, c)] = acc;
                }
            }
        }
        ForecasterSpec::Var1 => {
            let n = train.n_nodes();
            let m = train.n_vars();
            let n_rows = t_len - 1;
            if n_rows < m + 3 {
                return Err(Error::InsufficientData(format!(
                    "VAR(1) needs at least {} rows, got {t_len}",
                    m + 4
                )));
            }
            for node in 0..n {
                let node_label = &train.node_order()[node];
                // Stack this node's variables: z_t in R^m.
                let z = DMatrix::<f64>::from_fn(t_len, m, |t, j| train.value(t, node, j));
                let mut x = DMatrix::<f64>::zeros(n_rows, m + 1);
                let mut y = DMatrix::<f64>::zeros(n_rows, m);
                for t in 1..t_len {
                    x[(t - 1, 0)] = 1.0;
                    for j in 0..m {
                        x[(t - 1, 1 + j)] = z[(t - 1, j)];
                        y[(t - 1, j)] = z[(t, j)];
                    }
                }
                let b = solve_least_squares(&x, &y, node_label)?;
                // b is (m+1) x m: row 0 intercepts, rows 1.. the transition
                // matrix transposed.
                let a = b.rows(1, m).transpose();
                let c_vec = b.row(0).transpose();
                let rho = spectral_radius(&a);
                if rho >= 1.0 {
                    log::warn!(
                        "VAR(1) for node {node_label} is non-stationary (spectral radius {rho:.3}); forecasts may diverge"
                    );
                }
                let fitted = &x * &b;
                for t in 0..n_rows {
                    for j in 0..m {
                        residuals[(t, j * n + node)] = y[(t, j)] - fitted[(t, j)];
                    }
                }
                let mut state = z.row(t_len - 1).transpose();
                for h in 0..horizon {
                    state = &c_vec + &a * state;
                    for j in 0..m {
                        forecasts[(h, j * n + node)] = state[j];
                    }
                }
            }
        }
    }

    for v in forecasts.iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite(
                "forecaster produced a non-finite forecast".into(),
            ));
        }
    }

    Ok(BaseForecastSet {
        forecasts,
        residuals: ResidualPanel::new(residuals, labels)?,
        node_order: train.node_order().to_vec(),
        var_order: train.var_order().to_vec(),
        forecast_axis: train.axis().advanced(t_len),
        origin: train.axis().label(t_len - 1),
        forecaster: spec.label(),
    })
}

fn fit_arx_series(
    series: &[f64],
    lags: usize,
    period: usize,
    offset: usize,
    n_cols: usize,
    label: &str,
) -> Result<(DVector<f64>, Vec<f64>)> {
    let t_len = series.len();
    let n_rows = t_len - lags;
    let mut x = DMatrix::<f64>::zeros(n_rows, n_cols);
    let mut y = DVector::<f64>::zeros(n_rows);
    for (row, t) in (lags..t_len).enumerate() {
        x[(row, 0)] = 1.0;
        for l in 1..=lags {
            x[(row, l)] = series[t - l];
        }
        let ph = (offset + t) % period;
        if ph >= 1 {
            x[(row, 1 + lags + (ph - 1))] = 1.0;
        }
        y[row] = series[t];
    }
    let beta = solve_least_squares(&x, &DMatrix::from_column_slice(n_rows, 1, y.as_slice()), label)?
        .column(0)
        .into_owned();
    let fitted = &x * &beta;
    let res: Vec<f64> = (0..n_rows).map(|t| y[t] - fitted[t]).collect();
    Ok((beta, res))
}

/// Least squares via SVD with an explicit rank check; a rank-deficient
/// design is a fit failure naming the offending series.
fn solve_least_squares(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    label: &str,
) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = 1e-10 * max_sv.max(1e-300);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < x.ncols() {
        return Err(Error::FitFailed {
            series: label.to_string(),
            reason: format!(
                "design matrix is rank deficient (rank {rank} of {})",
                x.ncols()
            ),
        });
    }
    svd.solve(y, tol).map_err(|e| Error::FitFailed {
        series: label.to_string(),
        reason: format!("least squares solve failed: {e}"),
    })
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Validates externally produced forecasts and residuals into a
/// [`BaseForecastSet`], checking stacked order and shapes.
pub fn import_external(
    forecasts: DMatrix<f64>,
    residuals: ResidualPanel,
    node_order: Vec<String>,
    var_order: Vec<String>,
    forecast_axis: TimeAxis,
    origin: String,
    forecaster: String,
) -> Result<BaseForecastSet> {
    let width = node_order.len() * var_order.len();
    if forecasts.ncols() != width {
        return Err(Error::ShapeMismatch(format!(
            "imported forecasts have width {}, expected n*m = {width}",
            forecasts.ncols()
        )));
    }
    if forecasts.nrows() == 0 {
        return Err(Error::InvalidInput("imported forecasts have no rows".into()));
    }
    if residuals.dim() != width {
        return Err(Error::ShapeMismatch(format!(
            "imported residuals have width {}, expected n*m = {width}",
            residuals.dim()
        )));
    }
    let mut expected = Vec::with_capacity(width);
    for var in &var_order {
        for node in &node_order {
            expected.push(format!("{node}:{var}"));
        }
    }
    if residuals.labels() != expected.as_slice() {
        return Err(Error::InvalidInput(
            "imported residual columns are not in variable-major node order".into(),
        ));
    }
    for v in forecasts.iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite("imported forecast is not finite".into()));
        }
    }
    Ok(BaseForecastSet {
        forecasts,
        residuals,
        node_order,
        var_order,
        forecast_axis,
        origin,
        forecaster,
    })
}
