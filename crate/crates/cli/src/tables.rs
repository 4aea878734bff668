//! CSV and TOML formats used by the command-line tool.
//!
//! Long ("tidy") CSVs carry observations, residuals, and forecasts:
//!
//! * panel:     `time,node,variable,value`
//! * residuals: `time,node,variable,value`
//! * forecasts: `origin,horizon,node,variable,value`
//!
//! Time labels are either plain integers or `YYYY-MM` months; a file must
//! use one style throughout and cover a complete, gap-free grid. Output
//! tables are written with fixed column and row orders so identical inputs
//! produce byte-identical files.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use mvrec_core::error::{Error, Result};
use mvrec_core::panel::{MultiPanel, TimeAxis};
use mvrec_core::ResidualPanel;

/// A parsed time label: integer index or calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeLabel {
    Index(i64),
    Month { year: i32, month: u32 },
}

fn parse_time_label(s: &str) -> Result<TimeLabel> {
    if let Ok(v) = s.parse::<i64>() {
        return Ok(TimeLabel::Index(v));
    }
    if let Some((y, m)) = s.split_once('-') {
        let year: i32 = y.parse().map_err(|_| bad_time(s))?;
        let month: u32 = m.parse().map_err(|_| bad_time(s))?;
        if (1..=12).contains(&month) {
            return Ok(TimeLabel::Month { year, month });
        }
    }
    Err(bad_time(s))
}

fn bad_time(s: &str) -> Error {
    Error::InvalidInput(format!(
        "time label {s:?} is neither an integer nor YYYY-MM"
    ))
}

fn successor(label: TimeLabel) -> TimeLabel {
    match label {
        TimeLabel::Index(v) => TimeLabel::Index(v + 1),
        TimeLabel::Month { year, month } => {
            if month == 12 {
                TimeLabel::Month {
                    year: year + 1,
                    month: 1,
                }
            } else {
                TimeLabel::Month {
                    year,
                    month: month + 1,
                }
            }
        }
    }
}

fn axis_from(label: TimeLabel) -> Result<TimeAxis> {
    match label {
        TimeLabel::Index(v) => Ok(TimeAxis::index(v)),
        TimeLabel::Month { year, month } => TimeAxis::monthly(year, month),
    }
}

#[derive(Debug, Deserialize)]
struct LongRow {
    time: String,
    node: String,
    variable: String,
    value: f64,
}

/// Shared reader for `time,node,variable,value` files. Returns the time
/// labels in order, the variable order of first appearance, and the value
/// matrix (rows = times, columns variable-major over `node_order`).
fn read_long_grid(
    path: &Path,
    node_order: &[String],
) -> Result<(Vec<TimeLabel>, Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let node_index: HashMap<&str, usize> = node_order
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let mut times: Vec<TimeLabel> = Vec::new();
    let mut time_index: HashMap<String, usize> = HashMap::new();
    let mut vars: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new(); // (t, node, var, value)

    for row in reader.deserialize() {
        let row: LongRow = row?;
        let t = match time_index.get(&row.time) {
            Some(&t) => t,
            None => {
                let label = parse_time_label(&row.time)?;
                times.push(label);
                time_index.insert(row.time.clone(), times.len() - 1);
                times.len() - 1
            }
        };
        let node = *node_index.get(row.node.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!(
                "{}: node {:?} is not part of the hierarchy",
                path.display(),
                row.node
            ))
        })?;
        let var = match vars.iter().position(|v| v == &row.variable) {
            Some(v) => v,
            None => {
                vars.push(row.variable.clone());
                vars.len() - 1
            }
        };
        if !row.value.is_finite() {
            return Err(Error::NonFinite(format!(
                "{}: value for {} {} at {} is not finite",
                path.display(),
                row.node,
                row.variable,
                row.time
            )));
        }
        cells.push((t, node, var, row.value));
    }

    if times.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    // Time labels must advance step by step in file order.
    for w in times.windows(2) {
        if successor(w[0]) != w[1] {
            return Err(Error::InvalidInput(format!(
                "{}: time labels are not consecutive and ascending",
                path.display()
            )));
        }
    }

    let n = node_order.len();
    let width = n * vars.len();
    let mut seen = vec![false; times.len() * width];
    let mut values = DMatrix::<f64>::zeros(times.len(), width);
    for (t, node, var, value) in cells {
        let col = var * n + node;
        let flat = t * width + col;
        if seen[flat] {
            return Err(Error::InvalidInput(format!(
                "{}: duplicate entry for node {}, variable {}, time index {t}",
                path.display(),
                node_order[node],
                vars[var]
            )));
        }
        seen[flat] = true;
        values[(t, col)] = value;
    }
    if let Some(flat) = seen.iter().position(|s| !s) {
        let t = flat / width;
        let col = flat % width;
        return Err(Error::InvalidInput(format!(
            "{}: missing entry for node {}, variable {}, time index {t}",
            path.display(),
            node_order[col % n],
            vars[col / n]
        )));
    }
    Ok((times, vars, values))
}

/// Reads a complete observation panel whose node set matches the hierarchy.
pub fn read_panel_csv(path: &Path, node_order: &[String]) -> Result<MultiPanel> {
    let (times, vars, values) = read_long_grid(path, node_order)?;
    MultiPanel::new(values, node_order.to_vec(), vars, axis_from(times[0])?)
}

/// Writes a panel in the long format, rows ordered time, variable, node.
#[allow(dead_code)]
pub fn write_panel_csv(path: &Path, panel: &MultiPanel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "node", "variable", "value"])?;
    for t in 0..panel.len() {
        let label = panel.axis().label(t);
        for (j, var) in panel.var_order().iter().enumerate() {
            for (i, node) in panel.node_order().iter().enumerate() {
                w.write_record([
                    label.as_str(),
                    node.as_str(),
                    var.as_str(),
                    &panel.value(t, i, j).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a residual panel; variables must match `var_order` when given.
pub fn read_residuals_csv(
    path: &Path,
    node_order: &[String],
    var_order: Option<&[String]>,
) -> Result<ResidualPanel> {
    let (_, vars, values) = read_long_grid(path, node_order)?;
    if let Some(want) = var_order {
        if vars != want {
            return Err(Error::InvalidInput(format!(
                "{}: variables {:?} do not match the forecast variables {:?}",
                path.display(),
                vars,
                want
            )));
        }
    }
    let mut labels = Vec::with_capacity(values.ncols());
    for var in &vars {
        for node in node_order {
            labels.push(format!("{node}:{var}"));
        }
    }
    ResidualPanel::new(values, labels)
}

/// A forecast table parsed from `origin,horizon,node,variable,value`.
#[derive(Debug, Clone)]
pub struct ForecastTable {
    pub origin: String,
    /// `H x (n*m)` forecast rows, horizon ascending from 1.
    pub values: DMatrix<f64>,
    pub var_order: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ForecastRow {
    origin: String,
    horizon: usize,
    node: String,
    variable: String,
    value: f64,
}

/// Reads a single-origin forecast table with horizons `1..=H` complete.
pub fn read_forecasts_csv(path: &Path, node_order: &[String]) -> Result<ForecastTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let node_index: HashMap<&str, usize> = node_order
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut origin: Option<String> = None;
    let mut vars: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut max_h = 0usize;

    for row in reader.deserialize() {
        let row: ForecastRow = row?;
        match &origin {
            None => origin = Some(row.origin.clone()),
            Some(o) if *o != row.origin => {
                return Err(Error::InvalidInput(format!(
                    "{}: multiple origins present ({o:?} and {:?}); reconcile one origin at a time",
                    path.display(),
                    row.origin
                )));
            }
            _ => {}
        }
        if row.horizon == 0 {
            return Err(Error::InvalidInput(format!(
                "{}: horizons are 1-based, got 0",
                path.display()
            )));
        }
        let node = *node_index.get(row.node.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!(
                "{}: node {:?} is not part of the hierarchy",
                path.display(),
                row.node
            ))
        })?;
        let var = match vars.iter().position(|v| v == &row.variable) {
            Some(v) => v,
            None => {
                vars.push(row.variable.clone());
                vars.len() - 1
            }
        };
        if !row.value.is_finite() {
            return Err(Error::NonFinite(format!(
                "{}: forecast for {} {} at horizon {} is not finite",
                path.display(),
                row.node,
                row.variable,
                row.horizon
            )));
        }
        max_h = max_h.max(row.horizon);
        cells.push((row.horizon - 1, node, var, row.value));
    }

    let origin = origin.ok_or_else(|| {
        Error::InvalidInput(format!("{}: no data rows", path.display()))
    })?;
    let n = node_order.len();
    let width = n * vars.len();
    let mut seen = vec![false; max_h * width];
    let mut values = DMatrix::<f64>::zeros(max_h, width);
    for (h, node, var, value) in cells {
        let col = var * n + node;
        let flat = h * width + col;
        if seen[flat] {
            return Err(Error::InvalidInput(format!(
                "{}: duplicate forecast for node {}, variable {}, horizon {}",
                path.display(),
                node_order[node],
                vars[var],
                h + 1
            )));
        }
        seen[flat] = true;
        values[(h, col)] = value;
    }
    if let Some(flat) = seen.iter().position(|s| !s) {
        let h = flat / width;
        let col = flat % width;
        return Err(Error::InvalidInput(format!(
            "{}: missing forecast for node {}, variable {}, horizon {}",
            path.display(),
            node_order[col % n],
            vars[col / n],
            h + 1
        )));
    }
    Ok(ForecastTable {
        origin,
        values,
        var_order: vars,
    })
}

/// External forecast bundle manifest: file paths relative to the manifest.
#[derive(Debug, Deserialize)]
pub struct BundleManifest {
    /// Free-text description of the producing tool.
    #[serde(default)]
    pub provenance: Option<String>,
    pub forecasts: String,
    pub residuals: String,
}

impl BundleManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn forecasts_path(&self, manifest_path: &Path) -> std::path::PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.forecasts)
    }

    pub fn residuals_path(&self, manifest_path: &Path) -> std::path::PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.residuals)
    }
}

/// Formats an optional metric cell; undefined values become empty fields.
pub fn metric_field(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => String::new(),
    }
}
