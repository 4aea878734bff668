//! Implementations of the four subcommands.
//!
//! Every output table has a fixed column order and a fixed row order, and
//! no output embeds wall-clock information, so a command re-run with the
//! same inputs and seed produces byte-identical files regardless of the
//! thread count.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mvrec_core::baseforecast::{import_external, ForecasterSpec};
use mvrec_core::covariance::{estimate, CovarianceKind};
use mvrec_core::error::{Error, Result};
use mvrec_core::evaluate::{rolling_origin_cv, CvConfig, ErrorCube};
use mvrec_core::hierarchy::{Hierarchy, NodeTree};
use mvrec_core::reconcile::{reconcile_per_variable, reconcile_rows, ReconcileMethod};
use mvrec_core::simulate::{
    benchmark_hierarchy, builtin_scenario, run_study, ScenarioSpec, StudyConfig,
};

use crate::tables::{
    metric_field, read_forecasts_csv, read_panel_csv, read_residuals_csv, BundleManifest,
};

/// How forecasts are projected: one of the joint forms, or each variable
/// independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Joint(ReconcileMethod),
    Univariate,
}

impl MethodChoice {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "univariate" {
            return Ok(MethodChoice::Univariate);
        }
        Ok(MethodChoice::Joint(s.parse()?))
    }

    fn label(&self) -> String {
        match self {
            MethodChoice::Joint(m) => m.as_str().to_string(),
            MethodChoice::Univariate => "univariate".to_string(),
        }
    }
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario_id: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    forecaster: Option<String>,
    estimators: Vec<String>,
    method: String,
    horizon: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    origins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    replicates_completed: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    replicates_failed: Option<usize>,
    outputs: Vec<String>,
}

fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization failed: {e}")))?;
    fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// Splits a stacked series index into (node, variable) indices.
fn split_series(s: usize, n: usize) -> (usize, usize) {
    (s % n, s / n)
}

fn horizon_header(prefix: &str, horizon: usize) -> Vec<String> {
    let mut head = vec![prefix.to_string()];
    head.extend((1..=horizon).map(|h| format!("h{h}")));
    head
}

/// Writes `name,h1..hH` rows of optional metrics.
fn write_by_horizon_csv(
    path: &Path,
    prefix: &str,
    rows: &[(String, Vec<Option<f64>>)],
    horizon: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(horizon_header(prefix, horizon))?;
    for (name, vals) in rows {
        let mut record = vec![name.clone()];
        record.extend(vals.iter().map(|v| metric_field(*v)));
        w.write_record(record)?;
    }
    w.flush()?;
    Ok(())
}

/// Long relative-RMSE table: one row per (method, series, horizon) with a
/// negativity flag; undefined cells have empty value and flag fields.
fn write_rel_rmse_long(
    path: &Path,
    cube: &ErrorCube,
    methods: &[String],
    reference: &str,
    node_order: &[String],
    var_order: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "node", "variable", "horizon", "value", "negative"])?;
    let n = node_order.len();
    for method in methods {
        let cells = cube.rel_rmse_matrix(method, reference)?;
        for (s, row) in cells.iter().enumerate() {
            let (node, var) = split_series(s, n);
            for (h, cell) in row.iter().enumerate() {
                let negative = match cell {
                    Some(v) => (*v < 0.0).to_string(),
                    None => String::new(),
                };
                w.write_record([
                    method.as_str(),
                    node_order[node].as_str(),
                    var_order[var].as_str(),
                    &(h + 1).to_string(),
                    &metric_field(*cell),
                    &negative,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Signed error dump for audits: one row per (replicate, series, horizon).
fn write_error_dump(
    path: &Path,
    cube: &ErrorCube,
    method: &str,
    node_order: &[String],
    var_order: &[String],
) -> Result<()> {
    let k = cube.method_index(method)?;
    let n = node_order.len();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["replicate", "node", "variable", "horizon", "error"])?;
    for (r, rep_id) in cube.rep_ids().iter().enumerate() {
        for s in 0..cube.series_labels().len() {
            let (node, var) = split_series(s, n);
            for h in 0..cube.horizon() {
                w.write_record([
                    rep_id.to_string().as_str(),
                    node_order[node].as_str(),
                    var_order[var].as_str(),
                    &(h + 1).to_string(),
                    &cube.error(k, r, h, s).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub struct SimulateStudyOpts {
    pub scenario: Option<u32>,
    pub spec_path: Option<PathBuf>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub forecaster: String,
    pub estimators: Vec<String>,
    pub method: String,
    pub out: PathBuf,
    pub dump_errors: bool,
}

pub fn cmd_simulate_study(opts: &SimulateStudyOpts) -> Result<()> {
    let mut scenario: ScenarioSpec = match (&opts.scenario, &opts.spec_path) {
        (Some(id), None) => builtin_scenario(*id)?,
        (None, Some(path)) => ScenarioSpec::from_toml_str(&fs::read_to_string(path)?)?,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "pass either --scenario or --spec, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidArgument(
                "one of --scenario or --spec is required".into(),
            ))
        }
    };
    if let Some(reps) = opts.reps {
        scenario.reps = reps;
    }
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }

    let forecaster = ForecasterSpec::parse(&opts.forecaster, scenario.period)?;
    let estimators = parse_estimators(&opts.estimators)?;
    let method = match MethodChoice::parse(&opts.method)? {
        MethodChoice::Joint(m) => m,
        MethodChoice::Univariate => {
            return Err(Error::InvalidArgument(
                "the study always includes the univariate treatment; --method selects the joint form (direct, proj-j, proj-m)".into(),
            ))
        }
    };

    let config_toml = scenario.to_toml_string()?;
    let config = StudyConfig {
        scenario,
        forecaster,
        estimators: estimators.clone(),
        method,
    };
    let result = run_study(&config)?;
    let cube = &result.cube;

    ensure_out_dir(&opts.out)?;
    let hierarchy = benchmark_hierarchy();
    let node_order = hierarchy.tree().node_ids().to_vec();
    let var_order: Vec<String> = (1..=config.scenario.n_vars())
        .map(|j| format!("var{j}"))
        .collect();
    let horizon = config.scenario.horizon;
    let mut outputs = Vec::new();

    let reconciled_methods: Vec<String> = cube
        .methods()
        .iter()
        .filter(|m| m.as_str() != "base")
        .cloned()
        .collect();

    let rel_base_rows: Vec<(String, Vec<Option<f64>>)> = reconciled_methods
        .iter()
        .map(|m| Ok((m.clone(), cube.mean_rel_rmse_by_horizon(m, "base")?)))
        .collect::<Result<_>>()?;
    write_by_horizon_csv(
        &opts.out.join("summary_relrmse_base.csv"),
        "method",
        &rel_base_rows,
        horizon,
    )?;
    outputs.push("summary_relrmse_base.csv".to_string());

    let rel_uni_rows: Vec<(String, Vec<Option<f64>>)> = estimators
        .iter()
        .map(|est| {
            let multi = format!("{}:multi", est.as_str());
            let uni = format!("{}:uni", est.as_str());
            Ok((
                est.as_str().to_string(),
                cube.mean_rel_rmse_by_horizon(&multi, &uni)?,
            ))
        })
        .collect::<Result<_>>()?;
    write_by_horizon_csv(
        &opts.out.join("summary_relrmse_uni.csv"),
        "estimator",
        &rel_uni_rows,
        horizon,
    )?;
    outputs.push("summary_relrmse_uni.csv".to_string());

    let rmsse_rows: Vec<(String, Vec<Option<f64>>)> = cube
        .methods()
        .iter()
        .map(|m| {
            Ok((
                m.clone(),
                cube.rmsse_by_horizon(m)?.into_iter().map(Some).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    write_by_horizon_csv(
        &opts.out.join("summary_rmsse.csv"),
        "method",
        &rmsse_rows,
        horizon,
    )?;
    outputs.push("summary_rmsse.csv".to_string());

    write_rel_rmse_long(
        &opts.out.join("relrmse_base_long.csv"),
        cube,
        &reconciled_methods,
        "base",
        &node_order,
        &var_order,
    )?;
    outputs.push("relrmse_base_long.csv".to_string());

    {
        let mut w = csv::Writer::from_path(opts.out.join("pct_nonnegative.csv"))?;
        w.write_record(["method", "share_nonnegative"])?;
        for m in &reconciled_methods {
            let share = cube.pct_nonnegative_cells(m, "base")?;
            w.write_record([m.as_str(), &metric_field(share)])?;
        }
        w.flush()?;
        outputs.push("pct_nonnegative.csv".to_string());
    }

    {
        let mut w = csv::Writer::from_path(opts.out.join("failures.csv"))?;
        w.write_record(["replicate", "reason"])?;
        for (rep, reason) in &result.failures {
            w.write_record([rep.to_string().as_str(), reason.as_str()])?;
        }
        w.flush()?;
        outputs.push("failures.csv".to_string());
    }

    if opts.dump_errors {
        for m in cube.methods() {
            let file = format!("errors_{}.csv", m.replace(':', "_"));
            write_error_dump(&opts.out.join(&file), cube, m, &node_order, &var_order)?;
            outputs.push(file);
        }
    }

    write_manifest(
        &opts.out,
        &Manifest {
            command: "simulate-study",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(&[config_toml.as_bytes()]),
            scenario_id: config.scenario.scenario_id,
            seed: Some(config.scenario.seed),
            reps: Some(config.scenario.reps),
            forecaster: Some(config.forecaster.label()),
            estimators: estimators.iter().map(|e| e.as_str().to_string()).collect(),
            method: method.as_str().to_string(),
            horizon,
            origins: None,
            replicates_completed: Some(cube.n_replicates()),
            replicates_failed: Some(result.failures.len()),
            outputs: {
                let mut o = outputs.clone();
                o.push("manifest.json".to_string());
                o
            },
        },
    )?;
    Ok(())
}

fn parse_estimators(names: &[String]) -> Result<Vec<CovarianceKind>> {
    if names.is_empty() {
        return Ok(vec![CovarianceKind::Shrinkage]);
    }
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let kind: CovarianceKind = name.parse()?;
        if out.contains(&kind) {
            return Err(Error::InvalidArgument(format!(
                "estimator {name} given more than once"
            )));
        }
        out.push(kind);
    }
    Ok(out)
}

fn load_hierarchy(path: &Path) -> Result<Hierarchy> {
    let tree = NodeTree::from_toml_str(&fs::read_to_string(path)?)?;
    Hierarchy::build(tree)
}

pub struct ReconcileOpts {
    pub hierarchy: PathBuf,
    pub bundle: PathBuf,
    pub estimator: String,
    pub method: String,
    pub out: PathBuf,
}

pub fn cmd_reconcile(opts: &ReconcileOpts) -> Result<()> {
    let hierarchy = load_hierarchy(&opts.hierarchy)?;
    let node_order = hierarchy.tree().node_ids().to_vec();
    let bundle = BundleManifest::load(&opts.bundle)?;
    let forecasts = read_forecasts_csv(&bundle.forecasts_path(&opts.bundle), &node_order)?;
    let residuals = read_residuals_csv(
        &bundle.residuals_path(&opts.bundle),
        &node_order,
        Some(&forecasts.var_order),
    )?;
    let estimator: CovarianceKind = opts.estimator.parse()?;
    let method = MethodChoice::parse(&opts.method)?;

    let base = import_external(
        forecasts.values.clone(),
        residuals,
        node_order.clone(),
        forecasts.var_order.clone(),
        mvrec_core::panel::TimeAxis::index(0),
        forecasts.origin.clone(),
        bundle
            .provenance
            .clone()
            .unwrap_or_else(|| "external".to_string()),
    )?;

    let m = base.var_order.len();
    let n = hierarchy.n();
    let reconciled = match method {
        MethodChoice::Joint(joint) => {
            let weight = estimate(&base.residuals, estimator)?;
            reconcile_rows(&hierarchy, m, &weight.w, &base.forecasts, joint)?
        }
        MethodChoice::Univariate => {
            let mut weights = Vec::with_capacity(m);
            for j in 0..m {
                let cols: Vec<usize> = (j * n..(j + 1) * n).collect();
                let sub = base.residuals.select_columns(&cols)?;
                weights.push(estimate(&sub, estimator)?.w);
            }
            reconcile_per_variable(&hierarchy, &base.forecasts, &weights)?
        }
    };

    ensure_out_dir(&opts.out)?;
    let horizon = reconciled.nrows();
    {
        let mut w = csv::Writer::from_path(opts.out.join("reconciled.csv"))?;
        w.write_record(["origin", "horizon", "node", "variable", "base", "reconciled"])?;
        for h in 0..horizon {
            for (j, var) in base.var_order.iter().enumerate() {
                for (i, node) in node_order.iter().enumerate() {
                    let col = j * n + i;
                    w.write_record([
                        base.origin.as_str(),
                        &(h + 1).to_string(),
                        node.as_str(),
                        var.as_str(),
                        &base.forecasts[(h, col)].to_string(),
                        &reconciled[(h, col)].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
    }

    {
        let kron = hierarchy.kron_extend(m)?;
        let scale = if reconciled.is_empty() {
            0.0
        } else {
            reconciled.amax()
        };
        let threshold = 1e-8 * (1.0 + scale);
        let mut w = csv::Writer::from_path(opts.out.join("coherence_report.csv"))?;
        w.write_record(["horizon", "max_abs_violation", "threshold", "pass"])?;
        for h in 0..horizon {
            let violation = kron.constraint_violation(&reconciled.row(h).transpose());
            w.write_record([
                (h + 1).to_string().as_str(),
                &violation.to_string(),
                &threshold.to_string(),
                &(violation <= threshold).to_string(),
            ])?;
        }
        w.flush()?;
    }

    let hierarchy_bytes = fs::read(&opts.hierarchy)?;
    let bundle_bytes = fs::read(&opts.bundle)?;
    write_manifest(
        &opts.out,
        &Manifest {
            command: "reconcile",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(&[&hierarchy_bytes, &bundle_bytes]),
            scenario_id: None,
            seed: None,
            reps: None,
            forecaster: Some(base.forecaster.clone()),
            estimators: vec![estimator.as_str().to_string()],
            method: method.label(),
            horizon,
            origins: None,
            replicates_completed: None,
            replicates_failed: None,
            outputs: vec![
                "reconciled.csv".to_string(),
                "coherence_report.csv".to_string(),
                "manifest.json".to_string(),
            ],
        },
    )?;
    Ok(())
}

pub struct EvaluateOpts {
    pub hierarchy: PathBuf,
    pub panel: PathBuf,
    pub horizons: usize,
    pub origins: usize,
    pub period: usize,
    pub forecaster: String,
    pub estimator: String,
    pub method: String,
    pub out: PathBuf,
}

fn file_token(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub fn cmd_evaluate(opts: &EvaluateOpts) -> Result<()> {
    let hierarchy = load_hierarchy(&opts.hierarchy)?;
    let node_order = hierarchy.tree().node_ids().to_vec();
    let panel = read_panel_csv(&opts.panel, &node_order)?;
    let forecaster = ForecasterSpec::parse(&opts.forecaster, opts.period)?;
    let estimator: CovarianceKind = opts.estimator.parse()?;
    let method = match MethodChoice::parse(&opts.method)? {
        MethodChoice::Joint(m) => m,
        MethodChoice::Univariate => {
            return Err(Error::InvalidArgument(
                "evaluation always includes the univariate treatment; --method selects the joint form".into(),
            ))
        }
    };

    let cfg = CvConfig {
        forecaster,
        estimators: vec![estimator],
        method,
        horizon: opts.horizons,
        n_origins: opts.origins,
        period: opts.period,
    };
    let cube = rolling_origin_cv(&hierarchy, &panel, &cfg)?;

    ensure_out_dir(&opts.out)?;
    let var_order = panel.var_order().to_vec();
    let n = node_order.len();
    let mut outputs = Vec::new();

    let multi = format!("{}:multi", estimator.as_str());
    let uni = format!("{}:uni", estimator.as_str());

    // Per-variable wide tables of relative RMSE against the base forecasts.
    for (tag, method_name) in [("multi", multi.as_str()), ("uni", uni.as_str())] {
        let cells = cube.rel_rmse_matrix(method_name, "base")?;
        for (j, var) in var_order.iter().enumerate() {
            let file = format!("relrmse_{}_{}.csv", tag, file_token(var));
            let mut w = csv::Writer::from_path(opts.out.join(&file))?;
            w.write_record(horizon_header("node", opts.horizons))?;
            for (i, node) in node_order.iter().enumerate() {
                let s = j * n + i;
                let mut record = vec![node.clone()];
                record.extend(cells[s].iter().map(|c| metric_field(*c)));
                w.write_record(record)?;
            }
            w.flush()?;
            outputs.push(file);
        }
    }

    write_rel_rmse_long(
        &opts.out.join("relrmse_long.csv"),
        &cube,
        &[multi.clone(), uni.clone()],
        "base",
        &node_order,
        &var_order,
    )?;
    outputs.push("relrmse_long.csv".to_string());

    let rmsse_rows: Vec<(String, Vec<Option<f64>>)> = cube
        .methods()
        .iter()
        .map(|m| {
            Ok((
                m.clone(),
                cube.rmsse_by_horizon(m)?.into_iter().map(Some).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    write_by_horizon_csv(
        &opts.out.join("summary_rmsse.csv"),
        "method",
        &rmsse_rows,
        opts.horizons,
    )?;
    outputs.push("summary_rmsse.csv".to_string());

    {
        let mut w = csv::Writer::from_path(opts.out.join("origins.csv"))?;
        w.write_record(["origin_index", "train_length", "origin_label"])?;
        for (k, train_len) in cube.rep_ids().iter().enumerate() {
            w.write_record([
                k.to_string().as_str(),
                &train_len.to_string(),
                &panel.axis().label(train_len - 1),
            ])?;
        }
        w.flush()?;
        outputs.push("origins.csv".to_string());
    }

    let hierarchy_bytes = fs::read(&opts.hierarchy)?;
    let panel_bytes = fs::read(&opts.panel)?;
    write_manifest(
        &opts.out,
        &Manifest {
            command: "evaluate",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(&[&hierarchy_bytes, &panel_bytes]),
            scenario_id: None,
            seed: None,
            reps: None,
            forecaster: Some(cfg.forecaster.label()),
            estimators: vec![estimator.as_str().to_string()],
            method: method.as_str().to_string(),
            horizon: opts.horizons,
            origins: Some(opts.origins),
            replicates_completed: Some(cube.n_replicates()),
            replicates_failed: Some(0),
            outputs: {
                let mut o = outputs.clone();
                o.push("manifest.json".to_string());
                o
            },
        },
    )?;
    Ok(())
}

pub struct ScenarioInfoOpts {
    pub scenario: u32,
    pub out: Option<PathBuf>,
}

pub fn cmd_scenario_info(opts: &ScenarioInfoOpts) -> Result<()> {
    let spec = builtin_scenario(opts.scenario)?;
    let text = spec.to_toml_string()?;
    match &opts.out {
        Some(path) => fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
