//! Randomized generators and comparison helpers shared by the test suites.
//!
//! Kept in the library proper so integration tests and downstream crates can
//! exercise the same structures; not intended for production use.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::hierarchy::NodeTree;

/// Draws a random tree with between 2 and `max_nodes` nodes.
///
/// Node `k` attaches to a uniformly chosen earlier node, so every shape from
/// a chain to a star is reachable. The result always has at least one
/// aggregate and one bottom node.
pub fn random_tree<R: Rng>(rng: &mut R, max_nodes: usize) -> NodeTree {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let mut edges: Vec<(String, Option<String>)> = vec![("n0".to_string(), None)];
    for k in 1..n {
        let p = rng.gen_range(0..k);
        edges.push((format!("n{k}"), Some(format!("n{p}"))));
    }
    let borrowed: Vec<(&str, Option<&str>)> = edges
        .iter()
        .map(|(id, p)| (id.as_str(), p.as_deref()))
        .collect();
    NodeTree::from_edges(&borrowed).expect("generated tree is structurally valid")
}

/// Draws a well-conditioned random SPD matrix: `A A' / dim + 0.5 I` with
/// `A` entries uniform on (-1, 1). Eigenvalues are bounded below by 0.5.
pub fn random_spd<R: Rng>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let mut w = (&a * a.transpose()) / dim as f64;
    for i in 0..dim {
        w[(i, i)] += 0.5;
    }
    // Symmetrize away last-bit asymmetry from the product.
    let wt = w.transpose();
    (w + wt) * 0.5
}

/// Scale-aware max-norm difference: `|a - b|_max / (1 + max(|a|, |b|))`.
pub fn rel_diff_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_diff_mat shape mismatch");
    let diff = (a - b).amax();
    diff / (1.0 + a.amax().max(b.amax()))
}

/// Vector counterpart of [`rel_diff_mat`].
pub fn rel_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len(), "rel_diff_vec length mismatch");
    let diff = (a - b).amax();
    diff / (1.0 + a.amax().max(b.amax()))
}
