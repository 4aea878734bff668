//! Synthetic data generation and the simulation study driver.
//!
//! Bottom-level series follow a seasonal signal plus correlated VAR(1)
//! noise: for node `i` the `m`-vector observation at time `t` is
//!
//! ```text
//! b_{i,t} = alpha_i * sin(2 pi t / p) * 1_m + eta_{i,t}
//! eta_{i,t} = Phi eta_{i,t-1} + eps_{i,t}
//! ```
//!
//! with `alpha_i` drawn uniformly per node and replicate, and the stacked
//! innovations distributed as `vec(E_t) ~ N(0, V (x) Sigma)`: `Sigma`
//! correlates nodes, `V` correlates variables. The recursion starts at zero
//! and discards a burn-in before observations begin. Aggregates are summed
//! from the bottom level, so simulated panels are coherent by construction.
//!
//! Each replicate draws from its own counter-based RNG stream, which makes
//! runs reproducible and independent of the parallel schedule: results are
//! merged in replicate order.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseforecast::ForecasterSpec;
use crate::covariance::CovarianceKind;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_split, method_labels, seasonal_naive_denoms, ErrorCube};
use crate::hierarchy::{Hierarchy, NodeTree};
use crate::panel::{MultiPanel, TimeAxis};
use crate::reconcile::ReconcileMethod;

/// Full description of a synthetic data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Preset number when this configuration came from [`builtin_scenario`].
    pub scenario_id: Option<u32>,
    /// `m x m` cross-variable innovation covariance.
    pub v: DMatrix<f64>,
    /// `n_b x n_b` cross-node innovation covariance.
    pub sigma: DMatrix<f64>,
    /// `m x m` noise transition matrix.
    pub phi: DMatrix<f64>,
    /// Seasonal period of the signal.
    pub period: usize,
    /// Observed training length.
    pub t_len: usize,
    /// Forecast horizon appended after the training window.
    pub horizon: usize,
    /// Uniform range for the per-node signal amplitude.
    pub alpha_range: (f64, f64),
    /// Replicate count.
    pub reps: usize,
    /// Base RNG seed; replicate `r` uses stream `r` of this seed.
    pub seed: u64,
    /// Recursion steps discarded before observations start.
    pub burn_in: usize,
}

impl ScenarioSpec {
    pub fn n_vars(&self) -> usize {
        self.v.nrows()
    }

    pub fn n_bottom(&self) -> usize {
        self.sigma.nrows()
    }

    fn validate(&self) -> Result<()> {
        for (name, mat) in [("v", &self.v), ("sigma", &self.sigma), ("phi", &self.phi)] {
            if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
                return Err(Error::InvalidArgument(format!(
                    "matrix {name} must be square and non-empty, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        if self.phi.nrows() != self.v.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "phi is {}x{} but v implies {} variables",
                self.phi.nrows(),
                self.phi.ncols(),
                self.v.nrows()
            )));
        }
        for (name, mat) in [("v", &self.v), ("sigma", &self.sigma)] {
            for i in 0..mat.nrows() {
                for j in 0..i {
                    if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 {
                        return Err(Error::InvalidArgument(format!(
                            "matrix {name} is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        if self.period == 0 || self.t_len == 0 || self.horizon == 0 || self.reps == 0 {
            return Err(Error::InvalidArgument(
                "period, t_len, horizon, and reps must be positive".into(),
            ));
        }
        if self.alpha_range.0 > self.alpha_range.1 {
            return Err(Error::InvalidArgument(format!(
                "alpha range ({}, {}) is inverted",
                self.alpha_range.0, self.alpha_range.1
            )));
        }
        Ok(())
    }
}

/// Disk form of a [`ScenarioSpec`] (TOML, matrices as row lists).
#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    scenario_id: Option<u32>,
    v: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    period: usize,
    t_len: usize,
    horizon: usize,
    alpha_range: [f64; 2],
    reps: usize,
    seed: u64,
    burn_in: usize,
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::InvalidArgument(format!("matrix {name} is empty")));
    }
    let ncols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::InvalidArgument(format!(
                "matrix {name} row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows())
        .map(|i| (0..mat.ncols()).map(|j| mat[(i, j)]).collect())
        .collect()
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        let spec = ScenarioSpec {
            scenario_id: file.scenario_id,
            v: rows_to_matrix("v", &file.v)?,
            sigma: rows_to_matrix("sigma", &file.sigma)?,
            phi: rows_to_matrix("phi", &file.phi)?,
            period: file.period,
            t_len: file.t_len,
            horizon: file.horizon,
            alpha_range: (file.alpha_range[0], file.alpha_range[1]),
            reps: file.reps,
            seed: file.seed,
            burn_in: file.burn_in,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let file = ScenarioFile {
            scenario_id: self.scenario_id,
            v: matrix_to_rows(&self.v),
            sigma: matrix_to_rows(&self.sigma),
            phi: matrix_to_rows(&self.phi),
            period: self.period,
            t_len: self.t_len,
            horizon: self.horizon,
            alpha_range: [self.alpha_range.0, self.alpha_range.1],
            reps: self.reps,
            seed: self.seed,
            burn_in: self.burn_in,
        };
        Ok(toml::to_string(&file)?)
    }
}

/// The two-level benchmark tree: a total, two groups, and five bottom
/// nodes split 2/3 between them.
pub fn benchmark_tree() -> NodeTree {
    NodeTree::from_edges(&[
        ("Total", None),
        ("A", Some("Total")),
        ("B", Some("Total")),
        ("AA", Some("A")),
        ("AB", Some("A")),
        ("BA", Some("B")),
        ("BB", Some("B")),
        ("BC", Some("B")),
    ])
    .expect("benchmark tree is valid")
}

/// Hierarchy over [`benchmark_tree`].
pub fn benchmark_hierarchy() -> Hierarchy {
    Hierarchy::build(benchmark_tree()).expect("benchmark hierarchy builds")
}

/// Variable names used for simulated bivariate panels.
pub fn benchmark_var_names() -> Vec<String> {
    vec!["var1".to_string(), "var2".to_string()]
}

/// One of the nine preset scenarios: cross-variable covariance
/// `V_{ceil(id/3)}` paired with cross-node covariance `Sigma_{((id-1)%3)+1}`.
///
/// * `V1 = I`; `V2`, `V3` have off-diagonals `+0.7` / `-0.7`.
/// * `Sigma1 = I`; `Sigma2`, `Sigma3` correlate nodes within the two
///   groups (`{AA, AB}` and `{BA, BB, BC}`) with `+0.7` / `-0.4`.
///
/// Defaults: `Phi` with 0.7 diagonal and 0.2 off-diagonal, period 4,
/// 108 training steps, horizon 12, 1000 replicates, burn-in 200, and
/// amplitudes uniform on (0, 4).
pub fn builtin_scenario(id: u32) -> Result<ScenarioSpec> {
    if !(1..=9).contains(&id) {
        return Err(Error::InvalidArgument(format!(
            "scenario id must be in 1..=9, got {id}"
        )));
    }
    let v = match (id - 1) / 3 {
        0 => DMatrix::identity(2, 2),
        1 => DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 1.0]),
        _ => DMatrix::from_row_slice(2, 2, &[1.0, -0.7, -0.7, 1.0]),
    };
    let sigma = match (id - 1) % 3 {
        0 => DMatrix::identity(5, 5),
        1 => group_sigma(0.7),
        _ => group_sigma(-0.4),
    };
    let spec = ScenarioSpec {
        scenario_id: Some(id),
        v,
        sigma,
        phi: DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.2, 0.7]),
        period: 4,
        t_len: 108,
        horizon: 12,
        alpha_range: (0.0, 4.0),
        reps: 1000,
        seed: 0,
        burn_in: 200,
    };
    spec.validate()?;
    Ok(spec)
}

/// Within-group correlation pattern over the 2/3 bottom split.
fn group_sigma(rho: f64) -> DMatrix<f64> {
    let mut s = DMatrix::<f64>::identity(5, 5);
    s[(0, 1)] = rho;
    s[(1, 0)] = rho;
    for i in 2..5 {
        for j in 2..5 {
            if i != j {
                s[(i, j)] = rho;
            }
        }
    }
    s
}

/// A scenario bound to a hierarchy, with the innovation factor precomputed.
#[derive(Debug, Clone)]
pub struct ScenarioSampler {
    spec: ScenarioSpec,
    hierarchy: Hierarchy,
    var_names: Vec<String>,
    /// Lower Cholesky factor of `V (x) Sigma`.
    noise_factor: DMatrix<f64>,
}

impl ScenarioSampler {
    pub fn new(spec: ScenarioSpec, hierarchy: Hierarchy) -> Result<Self> {
        spec.validate()?;
        if spec.n_bottom() != hierarchy.n_bottom() {
            return Err(Error::ShapeMismatch(format!(
                "sigma is {}x{} but the hierarchy has {} bottom nodes",
                spec.n_bottom(),
                spec.n_bottom(),
                hierarchy.n_bottom()
            )));
        }
        let kron_cov = spec.v.kronecker(&spec.sigma);
        let chol = nalgebra::Cholesky::new(kron_cov).ok_or_else(|| {
            Error::Factorization(
                "V (x) Sigma is not positive definite; check the scenario covariances".into(),
            )
        })?;
        let m = spec.n_vars();
        let var_names = (1..=m).map(|j| format!("var{j}")).collect();
        Ok(Self {
            spec,
            hierarchy,
            var_names,
            noise_factor: chol.l(),
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    /// Lower Cholesky factor of the stacked innovation covariance.
    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.noise_factor
    }

    /// Simulates replicate `rep`: a coherent panel of `t_len + horizon`
    /// rows, time labels starting at 1.
    ///
    /// Draw order is fixed: the per-node amplitudes first (node order),
    /// then one stacked innovation vector per recursion step (time order,
    /// entries in stacked order). Changing the parallel schedule cannot
    /// change the panel because the stream is keyed by `rep`.
    pub fn replicate(&self, rep: usize) -> Result<MultiPanel> {
        let spec = &self.spec;
        let n_b = spec.n_bottom();
        let m = spec.n_vars();
        let width = n_b * m;
        let total = spec.t_len + spec.horizon;

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(rep as u64);

        let (lo, hi) = spec.alpha_range;
        let alphas: Vec<f64> = (0..n_b)
            .map(|_| if lo == hi { lo } else { rng.gen_range(lo..hi) })
            .collect();

        let mut eta = vec![0.0f64; width];
        let mut next_eta = vec![0.0f64; width];
        let mut z = vec![0.0f64; width];
        let mut bottom = DMatrix::<f64>::zeros(total, width);

        for step in 0..spec.burn_in + total {
            for slot in z.iter_mut() {
                *slot = rng.sample(StandardNormal);
            }
            // eps = L z, then eta <- (per node) Phi eta + eps in stacked
            // (variable-major) coordinates.
            for idx in 0..width {
                let mut eps = 0.0;
                for (k, zk) in z.iter().enumerate() {
                    eps += self.noise_factor[(idx, k)] * zk;
                }
                let i = idx % n_b;
                let j = idx / n_b;
                let mut acc = eps;
                for k in 0..m {
                    acc += spec.phi[(j, k)] * eta[k * n_b + i];
                }
                next_eta[idx] = acc;
            }
            std::mem::swap(&mut eta, &mut next_eta);

            if step >= spec.burn_in {
                let t_obs = step - spec.burn_in;
                let t_label = (t_obs + 1) as f64;
                let signal = (2.0 * std::f64::consts::PI * t_label / spec.period as f64).sin();
                for idx in 0..width {
                    let i = idx % n_b;
                    bottom[(t_obs, idx)] = alphas[i] * signal + eta[idx];
                }
            }
        }

        self.hierarchy
            .aggregate_bottom(&bottom, &self.var_names, TimeAxis::index(1))
    }
}

/// What to run over each simulated replicate.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub scenario: ScenarioSpec,
    pub forecaster: ForecasterSpec,
    pub estimators: Vec<CovarianceKind>,
    pub method: ReconcileMethod,
}

/// Outcome of a simulation study.
#[derive(Debug, Clone)]
pub struct StudyResult {
    /// Errors for the replicates that completed, pushed in replicate order.
    pub cube: ErrorCube,
    /// Replicates dropped with their diagnostics. A dropped replicate is
    /// excluded for every method so comparisons stay paired.
    pub failures: Vec<(usize, String)>,
}

/// Runs the full study: simulate, fit, reconcile, and score each replicate
/// in parallel, then merge in replicate order.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    run_study_on(config, benchmark_hierarchy())
}

/// [`run_study`] against a caller-provided hierarchy.
pub fn run_study_on(config: &StudyConfig, hierarchy: Hierarchy) -> Result<StudyResult> {
    let sampler = ScenarioSampler::new(config.scenario.clone(), hierarchy)?;
    let spec = sampler.spec();
    let t_len = spec.t_len;
    let labels = {
        // Stacked labels come from any replicate's panel layout.
        let mut out = Vec::new();
        for var in sampler.var_names() {
            for node in sampler.hierarchy().tree().node_ids() {
                out.push(format!("{node}:{var}"));
            }
        }
        out
    };
    let mut cube = ErrorCube::new(method_labels(&config.estimators), labels, spec.horizon)?;

    let outcomes: Vec<(usize, std::result::Result<crate::evaluate::ReplicateErrors, String>)> =
        (0..spec.reps)
            .into_par_iter()
            .map(|rep| {
                let run = || -> Result<crate::evaluate::ReplicateErrors> {
                    let panel = sampler.replicate(rep)?;
                    let (train, test) = panel.split(t_len)?;
                    evaluate_split(
                        sampler.hierarchy(),
                        &train,
                        &test,
                        &config.forecaster,
                        &config.estimators,
                        config.method,
                        spec.period,
                        rep,
                    )
                };
                (rep, run().map_err(|e| e.to_string()))
            })
            .collect();

    let mut failures = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(errors) => cube.push_replicate(errors)?,
            Err(reason) => failures.push((rep, reason)),
        }
    }
    if cube.n_replicates() == 0 {
        let detail = failures
            .first()
            .map(|(rep, reason)| format!("first failure (replicate {rep}): {reason}"))
            .unwrap_or_default();
        return Err(Error::InsufficientData(format!(
            "every replicate failed; {detail}"
        )));
    }
    Ok(StudyResult { cube, failures })
}

/// Convenience re-export of the training-window scale denominators for
/// simulated panels.
pub fn training_denoms(panel: &MultiPanel, t_len: usize, period: usize) -> Result<Vec<f64>> {
    let (train, _) = panel.split(t_len)?;
    seasonal_naive_denoms(&train, period)
}
