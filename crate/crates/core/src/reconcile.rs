//! Minimum-trace forecast reconciliation.
//!
//! Given stacked base forecasts `yhat = vec(Yhat)` and a weight matrix `W`,
//! the reconciled forecast is the coherent point closest to `yhat` in the
//! `W^{-1}` metric. Three algebraically equivalent forms are provided:
//!
//! * `Direct`: `S* (S*' W^{-1} S*)^{-1} S*' W^{-1} yhat`,
//! * `ProjectionJ`: `S* [J* - J* W C*' (C* W C*')^{-1} C*] yhat`,
//! * `ProjectionM`: `[I - W C*' (C* W C*')^{-1} C*] yhat`.
//!
//! The projection forms only require `C* W C*'` to be positive definite,
//! so they tolerate a rank-deficient `W`; the direct form needs `W` itself
//! to be invertible. All solves go through Cholesky factorizations. A
//! system whose eigenvalue ratio exceeds [`CONDITION_LIMIT`] is rejected
//! with a diagnostic instead of being silently regularized.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, KronMatrices};

/// Largest acceptable eigenvalue ratio for an SPD solve.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Which algebraic form carries out the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconcileMethod {
    Direct,
    ProjectionJ,
    ProjectionM,
}

impl ReconcileMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReconcileMethod::Direct => "direct",
            ReconcileMethod::ProjectionJ => "proj-j",
            ReconcileMethod::ProjectionM => "proj-m",
        }
    }
}

impl std::str::FromStr for ReconcileMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ReconcileMethod::Direct),
            "proj-j" => Ok(ReconcileMethod::ProjectionJ),
            "proj-m" => Ok(ReconcileMethod::ProjectionM),
            other => Err(Error::InvalidArgument(format!(
                "unknown reconciliation method {other:?} (expected direct, proj-j, or proj-m)"
            ))),
        }
    }
}

/// Cholesky of a symmetric matrix after an explicit conditioning check.
///
/// `context` names the system for diagnostics. Eigenvalues are computed
/// symmetrically; a non-positive minimum or a ratio beyond
/// [`CONDITION_LIMIT`] is an error.
fn checked_spd_cholesky(mat: DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    let eig = SymmetricEigen::new(mat.clone());
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        min = min.min(v);
        max = max.max(v);
    }
    if min <= 0.0 {
        return Err(Error::IllConditioned(format!(
            "{context} is not positive definite (smallest eigenvalue {min:.3e})"
        )));
    }
    if max / min > CONDITION_LIMIT {
        return Err(Error::IllConditioned(format!(
            "{context} is numerically singular: condition number {:.3e} exceeds {CONDITION_LIMIT:.0e}; \
             consider a shrinkage or diagonal weight estimate",
            max / min
        )));
    }
    Cholesky::new(mat).ok_or_else(|| {
        Error::Factorization(format!("Cholesky factorization of {context} failed"))
    })
}

fn check_weight_shape(w: &DMatrix<f64>, dim: usize) -> Result<()> {
    if w.nrows() != dim || w.ncols() != dim {
        return Err(Error::ShapeMismatch(format!(
            "weight matrix is {}x{}, expected {dim}x{dim}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

/// A reusable reconciliation operator for one hierarchy, variable count,
/// and weight matrix.
///
/// Construction factors `C* W C*'` once (the `ProjectionM` form) and stores
/// the dense projection matrix `M*`, so applying it to a batch of forecast
/// rows is a single matrix product.
#[derive(Debug, Clone)]
pub struct MintOperator {
    kron: KronMatrices,
    m_star: DMatrix<f64>,
}

impl MintOperator {
    pub fn new(h: &Hierarchy, m: usize, w: &DMatrix<f64>) -> Result<Self> {
        let kron = h.kron_extend(m)?;
        let dim = kron.s_star.nrows();
        check_weight_shape(w, dim)?;
        let cw = &kron.c_star * w; // (n_a m) x (nm)
        let cwc = &cw * kron.c_star.transpose();
        let chol = checked_spd_cholesky(symmetrize(cwc), "C* W C*'")?;
        // M* = I - W C*' (C* W C*')^{-1} C* computed column-block wise:
        // solve (C* W C*') X = C*, then M* = I - (C* W)' X.
        let x = chol.solve(&kron.c_star);
        let m_star = DMatrix::<f64>::identity(dim, dim) - cw.transpose() * x;
        Ok(Self { kron, m_star })
    }

    /// The dense projection matrix `M*`.
    pub fn m_star(&self) -> &DMatrix<f64> {
        &self.m_star
    }

    /// The bottom-level mapping `G = J* M*` with `G S* = I`.
    pub fn g_matrix(&self) -> DMatrix<f64> {
        &self.kron.j_star * &self.m_star
    }

    pub fn kron(&self) -> &KronMatrices {
        &self.kron
    }

    /// Reconciles one stacked forecast vector.
    pub fn apply_vec(&self, yhat: &DVector<f64>) -> Result<DVector<f64>> {
        if yhat.len() != self.m_star.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "forecast vector has length {}, expected {}",
                yhat.len(),
                self.m_star.ncols()
            )));
        }
        Ok(&self.m_star * yhat)
    }

    /// Reconciles a batch: each row of `rows` is one stacked forecast.
    pub fn apply_rows(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != self.m_star.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "forecast rows have width {}, expected {}",
                rows.ncols(),
                self.m_star.ncols()
            )));
        }
        Ok(rows * self.m_star.transpose())
    }
}

/// One-shot reconciliation of forecast rows by the chosen form.
pub fn reconcile_rows(
    h: &Hierarchy,
    m: usize,
    w: &DMatrix<f64>,
    rows: &DMatrix<f64>,
    method: ReconcileMethod,
) -> Result<DMatrix<f64>> {
    match method {
        ReconcileMethod::Direct => direct_rows(h, m, w, rows),
        ReconcileMethod::ProjectionJ => projection_j_rows(h, m, w, rows),
        ReconcileMethod::ProjectionM => MintOperator::new(h, m, w)?.apply_rows(rows),
    }
}

fn direct_rows(
    h: &Hierarchy,
    m: usize,
    w: &DMatrix<f64>,
    rows: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let kron = h.kron_extend(m)?;
    let dim = kron.s_star.nrows();
    check_weight_shape(w, dim)?;
    if rows.ncols() != dim {
        return Err(Error::ShapeMismatch(format!(
            "forecast rows have width {}, expected {dim}",
            rows.ncols()
        )));
    }
    let chol_w = checked_spd_cholesky(symmetrize(w.clone()), "W")?;
    let winv_s = chol_w.solve(&kron.s_star); // W^{-1} S*
    let gram = kron.s_star.transpose() * &winv_s; // S*' W^{-1} S*
    let chol_g = checked_spd_cholesky(symmetrize(gram), "S*' W^{-1} S*")?;
    // For each row: b = (S*' W^{-1} S*)^{-1} S*' W^{-1} yhat, result S* b.
    let rhs = &winv_s.transpose() * rows.transpose(); // (n_b m) x H
    let b = chol_g.solve(&rhs);
    Ok((&kron.s_star * b).transpose())
}

fn projection_j_rows(
    h: &Hierarchy,
    m: usize,
    w: &DMatrix<f64>,
    rows: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let kron = h.kron_extend(m)?;
    let dim = kron.s_star.nrows();
    check_weight_shape(w, dim)?;
    if rows.ncols() != dim {
        return Err(Error::ShapeMismatch(format!(
            "forecast rows have width {}, expected {dim}",
            rows.ncols()
        )));
    }
    let cw = &kron.c_star * w;
    let cwc = &cw * kron.c_star.transpose();
    let chol = checked_spd_cholesky(symmetrize(cwc), "C* W C*'")?;
    // Per row: b = J* yhat - J* W C*' (C* W C*')^{-1} C* yhat, result S* b.
    let c_rows = &kron.c_star * rows.transpose(); // (n_a m) x H
    let solved = chol.solve(&c_rows);
    let jwc = &kron.j_star * w * kron.c_star.transpose(); // (n_b m) x (n_a m)
    let b = &kron.j_star * rows.transpose() - jwc * solved;
    Ok((&kron.s_star * b).transpose())
}

/// Reconciles each variable independently with its own `n x n` weight.
///
/// `rows` is `H x (n*m)` in variable-major order; `weights[j]` applies to
/// variable `j`. This is the univariate treatment of a multivariate panel:
/// cross-variable error covariance is ignored by construction.
pub fn reconcile_per_variable(
    h: &Hierarchy,
    rows: &DMatrix<f64>,
    weights: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    let n = h.n();
    let m = weights.len();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "per-variable reconciliation needs at least one weight matrix".into(),
        ));
    }
    if rows.ncols() != n * m {
        return Err(Error::ShapeMismatch(format!(
            "forecast rows have width {}, expected n*m = {}",
            rows.ncols(),
            n * m
        )));
    }
    let mut out = DMatrix::<f64>::zeros(rows.nrows(), rows.ncols());
    for (j, w_j) in weights.iter().enumerate() {
        let op = MintOperator::new(h, 1, w_j)?;
        let block = rows.columns(j * n, n).into_owned();
        let rec = op.apply_rows(&block)?;
        out.columns_mut(j * n, n).copy_from(&rec);
    }
    Ok(out)
}

fn symmetrize(w: DMatrix<f64>) -> DMatrix<f64> {
    let wt = w.transpose();
    (w + wt) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::NodeTree;
    use crate::testutil::{random_spd, random_tree, rel_diff_mat, rel_diff_vec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig1() -> Hierarchy {
        Hierarchy::build(
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
            .unwrap(),
        )
        .unwrap()
    }

    fn chain() -> Hierarchy {
        Hierarchy::build(NodeTree::from_edges(&[("T", None), ("X", Some("T"))]).unwrap())
            .unwrap()
    }

    // Oracle: solve the equality-constrained least squares problem
    //   min (y - yhat)' W^{-1} (y - yhat)  s.t.  C* y = 0
    // through its stationarity system
    //   [ W^{-1}  C*' ] [ y      ]   [ W^{-1} yhat ]
    //   [ C*      0   ] [ lambda ] = [ 0           ]
    // with a dense LU factorization, nothing shared with the main path.
    fn lagrange_oracle(
        h: &Hierarchy,
        m: usize,
        w: &DMatrix<f64>,
        yhat: &DVector<f64>,
    ) -> DVector<f64> {
        let kron = h.kron_extend(m).unwrap();
        let dim = kron.s_star.nrows();
        let k = kron.c_star.nrows();
        let w_inv = w
            .clone()
            .try_inverse()
            .expect("oracle weight must be invertible");
        let mut kkt = DMatrix::<f64>::zeros(dim + k, dim + k);
        kkt.view_mut((0, 0), (dim, dim)).copy_from(&w_inv);
        kkt.view_mut((0, dim), (dim, k))
            .copy_from(&kron.c_star.transpose());
        kkt.view_mut((dim, 0), (k, dim)).copy_from(&kron.c_star);
        let mut rhs = DVector::<f64>::zeros(dim + k);
        rhs.rows_mut(0, dim).copy_from(&(&w_inv * yhat));
        let sol = kkt.lu().solve(&rhs).expect("KKT system solvable");
        sol.rows(0, dim).into_owned()
    }

    #[test]
    fn unit_weight_chain_splits_difference() {
        // With W = I and yhat = (3, 1) on a two-node chain, the closest
        // coherent point is (2, 2).
        let h = chain();
        let w = DMatrix::<f64>::identity(2, 2);
        let rows = DMatrix::from_row_slice(1, 2, &[3.0, 1.0]);
        for method in [
            ReconcileMethod::Direct,
            ReconcileMethod::ProjectionJ,
            ReconcileMethod::ProjectionM,
        ] {
            let rec = reconcile_rows(&h, 1, &w, &rows, method).unwrap();
            assert!((rec[(0, 0)] - 2.0).abs() < 1e-12, "{method:?}");
            assert!((rec[(0, 1)] - 2.0).abs() < 1e-12, "{method:?}");
        }
    }

    #[test]
    fn formulations_agree_and_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for case in 0..60 {
            let tree = random_tree(&mut rng, 10);
            let h = Hierarchy::build(tree).unwrap();
            let m = 1 + (case % 3);
            let dim = h.n() * m;
            let w = random_spd(&mut rng, dim);
            let rows = DMatrix::from_fn(3, dim, |_, _| rng.gen_range(-5.0..5.0));

            let direct = reconcile_rows(&h, m, &w, &rows, ReconcileMethod::Direct).unwrap();
            let pj = reconcile_rows(&h, m, &w, &rows, ReconcileMethod::ProjectionJ).unwrap();
            let pm = reconcile_rows(&h, m, &w, &rows, ReconcileMethod::ProjectionM).unwrap();
            assert!(rel_diff_mat(&direct, &pj) <= 1e-9, "case {case}");
            assert!(rel_diff_mat(&direct, &pm) <= 1e-9, "case {case}");

            let kron = h.kron_extend(m).unwrap();
            for t in 0..direct.nrows() {
                let viol = kron.constraint_violation(&direct.row(t).transpose());
                let scale = 1.0 + direct.row(t).amax();
                assert!(viol <= 1e-9 * scale, "case {case} violation {viol}");
            }
        }
    }

    #[test]
    fn matches_lagrange_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..30 {
            let tree = random_tree(&mut rng, 9);
            let h = Hierarchy::build(tree).unwrap();
            let m = 1 + (case % 2);
            let dim = h.n() * m;
            let w = random_spd(&mut rng, dim);
            let yhat = DVector::from_fn(dim, |_, _| rng.gen_range(-4.0..4.0));

            let op = MintOperator::new(&h, m, &w).unwrap();
            let got = op.apply_vec(&yhat).unwrap();
            let want = lagrange_oracle(&h, m, &w, &yhat);
            assert!(
                rel_diff_vec(&got, &want) <= 1e-9,
                "case {case}: {:.3e}",
                rel_diff_vec(&got, &want)
            );
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..30 {
            let h = Hierarchy::build(random_tree(&mut rng, 10)).unwrap();
            let m = 2;
            let dim = h.n() * m;
            let w = random_spd(&mut rng, dim);
            let op = MintOperator::new(&h, m, &w).unwrap();
            let yhat = DVector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
            let once = op.apply_vec(&yhat).unwrap();
            let twice = op.apply_vec(&once).unwrap();
            assert!(rel_diff_vec(&once, &twice) <= 1e-10);
        }
    }

    #[test]
    fn weight_scale_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..30 {
            let h = Hierarchy::build(random_tree(&mut rng, 10)).unwrap();
            let dim = h.n() * 2;
            let w = random_spd(&mut rng, dim);
            let scaled = &w * 37.5;
            let rows = DMatrix::from_fn(2, dim, |_, _| rng.gen_range(-5.0..5.0));
            let a = reconcile_rows(&h, 2, &w, &rows, ReconcileMethod::ProjectionM).unwrap();
            let b =
                reconcile_rows(&h, 2, &scaled, &rows, ReconcileMethod::ProjectionM).unwrap();
            assert!(rel_diff_mat(&a, &b) <= 1e-10);
        }
    }

    #[test]
    fn coherent_input_is_fixed_point_and_g_left_inverts_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let h = fig1();
        let m = 2;
        let dim = h.n() * m;
        let w = random_spd(&mut rng, dim);
        let op = MintOperator::new(&h, m, &w).unwrap();
        let kron = h.kron_extend(m).unwrap();

        // M* S* = S*: coherent points are untouched.
        let ms = op.m_star() * &kron.s_star;
        assert!(rel_diff_mat(&ms, &kron.s_star) <= 1e-12);

        // G S* = I: the bottom-level mapping is unbiased.
        let gs = op.g_matrix() * &kron.s_star;
        let eye = DMatrix::<f64>::identity(h.n_bottom() * m, h.n_bottom() * m);
        assert!(rel_diff_mat(&gs, &eye) <= 1e-12);
    }

    #[test]
    fn block_diagonal_weight_decouples_into_per_variable_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for _ in 0..15 {
            let h = Hierarchy::build(random_tree(&mut rng, 8)).unwrap();
            let (n, m) = (h.n(), 3);
            let blocks: Vec<DMatrix<f64>> =
                (0..m).map(|_| random_spd(&mut rng, n)).collect();
            let mut w = DMatrix::<f64>::zeros(n * m, n * m);
            for (j, b) in blocks.iter().enumerate() {
                w.view_mut((j * n, j * n), (n, n)).copy_from(b);
            }
            let rows = DMatrix::from_fn(2, n * m, |_, _| rng.gen_range(-5.0..5.0));
            let joint = reconcile_rows(&h, m, &w, &rows, ReconcileMethod::ProjectionM).unwrap();
            let split = reconcile_per_variable(&h, &rows, &blocks).unwrap();
            assert!(rel_diff_mat(&joint, &split) <= 1e-9);
        }
    }

    #[test]
    fn trace_of_reconciled_covariance_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let h = fig1();
        let m = 2;
        let dim = h.n() * m;
        let w = random_spd(&mut rng, dim);
        let op = MintOperator::new(&h, m, &w).unwrap();
        let kron = h.kron_extend(m).unwrap();
        let g_mint = op.g_matrix();

        let reconciled_trace = |g: &DMatrix<f64>| -> f64 {
            let cov = &kron.s_star * g * &w * g.transpose() * kron.s_star.transpose();
            cov.trace()
        };
        let base = reconciled_trace(&g_mint);

        // Any G + Z (I - S*(S*'S*)^{-1}S*') keeps G S* = I.
        let gram = kron.s_star.transpose() * &kron.s_star;
        let gram_inv = gram.try_inverse().unwrap();
        let annihilator = DMatrix::<f64>::identity(dim, dim)
            - &kron.s_star * gram_inv * kron.s_star.transpose();
        let mut strict = 0;
        for _ in 0..25 {
            let z = DMatrix::from_fn(g_mint.nrows(), dim, |_, _| rng.gen_range(-1.0..1.0));
            let g_alt = &g_mint + z * &annihilator;
            let gs = &g_alt * &kron.s_star;
            let eye = DMatrix::<f64>::identity(gs.nrows(), gs.ncols());
            assert!(rel_diff_mat(&gs, &eye) <= 1e-9, "alternative not unbiased");
            let alt = reconciled_trace(&g_alt);
            assert!(alt >= base - 1e-9 * base.abs(), "trace {alt} < {base}");
            if alt > base + 1e-9 * base.abs() {
                strict += 1;
            }
        }
        assert!(strict >= 20, "only {strict} strict improvements");
    }

    #[test]
    fn near_singular_weight_is_rejected_with_diagnostic() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let h = fig1();
        let dim = h.n();
        // Nearly rank-one weight: condition number far beyond the limit.
        let v = DVector::from_fn(dim, |_, _| rng.gen_range(0.5..1.5f64));
        let mut w = &v * v.transpose();
        for i in 0..dim {
            w[(i, i)] += 1e-16;
        }
        let err = MintOperator::new(&h, 1, &w).unwrap_err();
        match &err {
            Error::IllConditioned(msg) => {
                assert!(
                    msg.contains("condition number") || msg.contains("positive definite"),
                    "got: {msg}"
                );
            }
            other => panic!("expected IllConditioned, got {other:?}"),
        }
    }

    #[test]
    fn direct_form_requires_invertible_weight() {
        let h = fig1();
        let dim = h.n();
        // Rank-deficient W: direct fails, projections still work.
        let mut w = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            w[(i, i)] = if i < 2 { 0.0 } else { 1.0 };
        }
        let rows = DMatrix::from_element(1, dim, 1.0);
        assert!(matches!(
            reconcile_rows(&h, 1, &w, &rows, ReconcileMethod::Direct),
            Err(Error::IllConditioned(_)) | Err(Error::Factorization(_))
        ));
    }

    #[test]
    fn shape_errors_are_reported() {
        let h = chain();
        let w3 = DMatrix::<f64>::identity(3, 3);
        let rows = DMatrix::<f64>::zeros(1, 2);
        assert!(matches!(
            reconcile_rows(&h, 1, &w3, &rows, ReconcileMethod::ProjectionM),
            Err(Error::ShapeMismatch(_))
        ));
        let w2 = DMatrix::<f64>::identity(2, 2);
        let op = MintOperator::new(&h, 1, &w2).unwrap();
        assert!(op.apply_vec(&DVector::zeros(3)).is_err());
        assert!(op.apply_rows(&DMatrix::zeros(1, 3)).is_err());
        assert!(reconcile_per_variable(&h, &rows, &[]).is_err());
        assert!(reconcile_per_variable(&h, &rows, &[w3]).is_err());
    }

    #[test]
    fn method_parsing_round_trip() {
        for method in [
            ReconcileMethod::Direct,
            ReconcileMethod::ProjectionJ,
            ReconcileMethod::ProjectionM,
        ] {
            let parsed: ReconcileMethod = method.as_str().parse().unwrap();
            assert_eq!(parsed, method);
        }
        assert!("bogus".parse::<ReconcileMethod>().is_err());
    }
}
