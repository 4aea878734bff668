//! Aggregation trees, summing matrices, and their Kronecker extension to
//! multiple variables.
//!
//! A hierarchy of `n` series is generated by `n_b` bottom-level series via
//! the binary summing matrix `S` (`n x n_b`): `y = S b`. The constraint
//! matrices `J = [0 I]` and `C = [I -A]` select bottom series and express
//! the aggregation constraint `C y = 0`. For `m` variables the structures
//! extend as `S* = I_m (x) S`, `C* = I_m (x) C`, `J* = I_m (x) J`.

use std::collections::{HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{MultiPanel, TimeAxis};

/// An aggregation tree over named nodes.
///
/// Nodes are kept in level-major order: every aggregate (internal) node
/// precedes every bottom (leaf) node. Within a segment the order is the
/// caller's input order, which fixes the matrix layouts reproducibly.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTree {
    nodes: Vec<String>,
    parent: HashMap<String, String>,
    labels: HashMap<String, String>,
    n_bottom: usize,
}

impl NodeTree {
    /// Validates and constructs a tree from a node ordering and parent map.
    ///
    /// Checks: unique ids, exactly one root, all parents exist, no cycles,
    /// and level-major ordering (a node with children may not sit in the
    /// bottom segment and vice versa).
    pub fn new(
        nodes: Vec<String>,
        parent: HashMap<String, String>,
        labels: HashMap<String, String>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Structure("tree has no nodes".into()));
        }
        let index: HashMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        if index.len() != nodes.len() {
            let dup = nodes
                .iter()
                .find(|id| nodes.iter().filter(|o| o == id).count() > 1)
                .unwrap();
            return Err(Error::Structure(format!("duplicate node id {dup}")));
        }

        let mut roots = Vec::new();
        for id in &nodes {
            match parent.get(id) {
                None => roots.push(id.clone()),
                Some(p) => {
                    if !index.contains_key(p.as_str()) {
                        return Err(Error::Structure(format!(
                            "node {id} references unknown parent {p}"
                        )));
                    }
                    if p == id {
                        return Err(Error::Structure(format!("node {id} is its own parent")));
                    }
                }
            }
        }
        for extra in parent.keys() {
            if !index.contains_key(extra.as_str()) {
                return Err(Error::Structure(format!(
                    "parent map references unknown node {extra}"
                )));
            }
        }
        if roots.len() != 1 {
            return Err(Error::Structure(format!(
                "expected exactly one root, found {}: {}",
                roots.len(),
                roots.join(", ")
            )));
        }

        // Cycle check: every parent chain must reach the root within n steps.
        for id in &nodes {
            let mut cur = id;
            let mut steps = 0;
            while let Some(p) = parent.get(cur) {
                cur = p;
                steps += 1;
                if steps > nodes.len() {
                    return Err(Error::Structure(format!(
                        "cycle detected in parent chain of node {id}"
                    )));
                }
            }
        }

        let mut has_children: HashSet<&str> = HashSet::new();
        for p in parent.values() {
            has_children.insert(p.as_str());
        }
        let n_bottom = nodes
            .iter()
            .filter(|id| !has_children.contains(id.as_str()))
            .count();
        let n_aggregate = nodes.len() - n_bottom;
        for (i, id) in nodes.iter().enumerate() {
            let internal = has_children.contains(id.as_str());
            if i < n_aggregate && !internal {
                return Err(Error::Structure(format!(
                    "bottom node {id} appears before an aggregate node; ordering must be level-major"
                )));
            }
            if i >= n_aggregate && internal {
                return Err(Error::Structure(format!(
                    "bottom-ordered node {id} has children"
                )));
            }
        }

        Ok(Self {
            nodes,
            parent,
            labels,
            n_bottom,
        })
    }

    /// Builds a tree from `(id, parent)` pairs, reordering level-major
    /// (aggregates in input order, then bottoms in input order).
    pub fn from_edges(edges: &[(&str, Option<&str>)]) -> Result<Self> {
        let mut parent = HashMap::new();
        for (id, p) in edges {
            if let Some(p) = p {
                parent.insert((*id).to_string(), (*p).to_string());
            }
        }
        let with_children: HashSet<&str> = edges
            .iter()
            .filter_map(|(_, p)| *p)
            .collect();
        let mut ordered: Vec<String> = edges
            .iter()
            .filter(|(id, _)| with_children.contains(*id))
            .map(|(id, _)| (*id).to_string())
            .collect();
        ordered.extend(
            edges
                .iter()
                .filter(|(id, _)| !with_children.contains(*id))
                .map(|(id, _)| (*id).to_string()),
        );
        Self::new(ordered, parent, HashMap::new())
    }

    pub fn node_ids(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_bottom(&self) -> usize {
        self.n_bottom
    }

    /// Bottom-level node ids, in column order of `S`.
    pub fn bottom_ids(&self) -> &[String] {
        &self.nodes[self.nodes.len() - self.n_bottom..]
    }

    pub fn parent_of(&self, id: &str) -> Option<&str> {
        self.parent.get(id).map(String::as_str)
    }

    /// Display label for a node, falling back to its id.
    pub fn label<'a>(&'a self, id: &'a str) -> &'a str {
        self.labels.get(id).map(String::as_str).unwrap_or(id)
    }
}

/// Serialized form of a hierarchy config file.
#[derive(Debug, Serialize, Deserialize)]
struct TreeFile {
    #[serde(rename = "node")]
    nodes: Vec<TreeFileNode>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeFileNode {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl NodeTree {
    /// Parses a hierarchy config (TOML `[[node]]` entries with optional
    /// `parent` and `label`). Nodes may appear in any order; they are
    /// re-ordered level-major with input order preserved within a level.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TreeFile = toml::from_str(text)?;
        let mut parent = HashMap::new();
        let mut labels = HashMap::new();
        for node in &file.nodes {
            if let Some(p) = &node.parent {
                parent.insert(node.id.clone(), p.clone());
            }
            if let Some(l) = &node.label {
                labels.insert(node.id.clone(), l.clone());
            }
        }
        let with_children: HashSet<&str> = parent.values().map(String::as_str).collect();
        let mut ordered: Vec<String> = Vec::with_capacity(file.nodes.len());
        ordered.extend(
            file.nodes
                .iter()
                .filter(|n| with_children.contains(n.id.as_str()))
                .map(|n| n.id.clone()),
        );
        ordered.extend(
            file.nodes
                .iter()
                .filter(|n| !with_children.contains(n.id.as_str()))
                .map(|n| n.id.clone()),
        );
        Self::new(ordered, parent, labels)
    }

    /// Serializes the tree back to the config format.
    pub fn to_toml_string(&self) -> Result<String> {
        let nodes = self
            .nodes
            .iter()
            .map(|id| TreeFileNode {
                id: id.clone(),
                parent: self.parent.get(id).cloned(),
                label: self.labels.get(id).cloned(),
            })
            .collect();
        Ok(toml::to_string(&TreeFile { nodes })?)
    }
}

/// A validated hierarchy: tree plus summing matrix and its partitions.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    tree: NodeTree,
    s: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl Hierarchy {
    /// Builds the summing matrix `S` from a tree.
    ///
    /// Row `i` of `S` has a one in column `j` exactly when bottom node `j`
    /// is node `i` or one of its descendants, so `y = S b` reproduces the
    /// aggregation equations of the tree.
    pub fn build(tree: NodeTree) -> Result<Self> {
        let n = tree.n_nodes();
        let n_b = tree.n_bottom();
        let n_a = n - n_b;
        let index: HashMap<&str, usize> = tree
            .node_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();

        let mut s = DMatrix::<f64>::zeros(n, n_b);
        for (j, bottom) in tree.bottom_ids().iter().enumerate() {
            s[(index[bottom.as_str()], j)] = 1.0;
            let mut cur = bottom.as_str();
            while let Some(p) = tree.parent_of(cur) {
                s[(index[p], j)] = 1.0;
                cur = p;
            }
        }
        let a = s.rows(0, n_a).into_owned();
        Ok(Self { tree, s, a })
    }

    pub fn tree(&self) -> &NodeTree {
        &self.tree
    }

    /// The `n x n_b` summing matrix.
    pub fn s_matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// The aggregation rows of `S` (`n_a x n_b`).
    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn n_bottom(&self) -> usize {
        self.s.ncols()
    }

    pub fn n_aggregate(&self) -> usize {
        self.n() - self.n_bottom()
    }

    /// Constraint matrices `J = [0 I_{n_b}]` and `C = [I_{n_a} -A]`.
    ///
    /// Both identities `C S = 0` and `J S = I` hold exactly in integer
    /// arithmetic.
    pub fn constraint_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n();
        let n_b = self.n_bottom();
        let n_a = self.n_aggregate();

        let mut j = DMatrix::<f64>::zeros(n_b, n);
        for k in 0..n_b {
            j[(k, n_a + k)] = 1.0;
        }
        let mut c = DMatrix::<f64>::zeros(n_a, n);
        for k in 0..n_a {
            c[(k, k)] = 1.0;
        }
        for r in 0..n_a {
            for q in 0..n_b {
                c[(r, n_a + q)] = -self.a[(r, q)];
            }
        }
        (j, c)
    }

    /// Kronecker extension of `S`, `C`, `J` to `m` variables.
    pub fn kron_extend(&self, m: usize) -> Result<KronMatrices> {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "variable count m must be at least 1".into(),
            ));
        }
        let eye = DMatrix::<f64>::identity(m, m);
        let (j, c) = self.constraint_matrices();
        Ok(KronMatrices {
            s_star: eye.kronecker(&self.s),
            c_star: eye.kronecker(&c),
            j_star: eye.kronecker(&j),
            m,
        })
    }

    /// Aggregates bottom-level data into a full coherent panel.
    ///
    /// `bottom` has `T` rows and `n_b * m` columns in vec order (variable
    /// blocks outer, node index inner). The result stacks `vec(Y_t) =
    /// (I_m (x) S) vec(B_t)` row by row and is coherent by construction.
    pub fn aggregate_bottom(
        &self,
        bottom: &DMatrix<f64>,
        var_order: &[String],
        axis: TimeAxis,
    ) -> Result<MultiPanel> {
        let m = var_order.len();
        if bottom.ncols() != self.n_bottom() * m {
            return Err(Error::ShapeMismatch(format!(
                "bottom panel has {} columns, expected n_b*m = {}",
                bottom.ncols(),
                self.n_bottom() * m
            )));
        }
        let kron = self.kron_extend(m)?;
        let t_len = bottom.nrows();
        let mut values = DMatrix::<f64>::zeros(t_len, self.n() * m);
        for t in 0..t_len {
            let b_vec = bottom.row(t).transpose();
            let y_vec = &kron.s_star * b_vec;
            values.row_mut(t).copy_from(&y_vec.transpose());
        }
        MultiPanel::new(
            values,
            self.tree.node_ids().to_vec(),
            var_order.to_vec(),
            axis,
        )
    }
}

/// The Kronecker-extended matrices for `m` variables.
#[derive(Debug, Clone)]
pub struct KronMatrices {
    /// `I_m (x) S`, shape `nm x n_b m`.
    pub s_star: DMatrix<f64>,
    /// `I_m (x) C`, shape `n_a m x nm`.
    pub c_star: DMatrix<f64>,
    /// `I_m (x) J`, shape `n_b m x nm`.
    pub j_star: DMatrix<f64>,
    /// Variable count.
    pub m: usize,
}

impl KronMatrices {
    /// Max-norm of the constraint residual `C* y`.
    pub fn constraint_violation(&self, y: &DVector<f64>) -> f64 {
        (&self.c_star * y).amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fig1_tree() -> NodeTree {
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
        .unwrap()
    }

    fn chain_tree() -> NodeTree {
        NodeTree::from_edges(&[("Total", None), ("X", Some("Total"))]).unwrap()
    }

    #[test]
    fn summing_matrix_matches_two_level_example() {
        let h = Hierarchy::build(fig1_tree()).unwrap();
        assert_eq!(h.n(), 8);
        assert_eq!(h.n_bottom(), 5);
        assert_eq!(h.n_aggregate(), 3);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(8, 5, &[
            1., 1., 1., 1., 1.,
            1., 1., 0., 0., 0.,
            0., 0., 1., 1., 1.,
            1., 0., 0., 0., 0.,
            0., 1., 0., 0., 0.,
            0., 0., 1., 0., 0.,
            0., 0., 0., 1., 0.,
            0., 0., 0., 0., 1.,
        ]);
        assert_eq!(h.s_matrix(), &expected);
    }

    #[test]
    fn summing_matrix_degenerate_chain() {
        let h = Hierarchy::build(chain_tree()).unwrap();
        assert_eq!(h.s_matrix(), &DMatrix::from_row_slice(2, 1, &[1., 1.]));
        assert_eq!(h.n(), 2);
        assert_eq!(h.n_bottom(), 1);
        assert_eq!(h.n_aggregate(), 1);
    }

    // Oracle: S[i][j] = 1 iff node i is an ancestor-or-self of bottom j,
    // found by walking every bottom node's ancestor chain independently.
    fn ancestor_oracle(tree: &NodeTree) -> DMatrix<f64> {
        let ids = tree.node_ids();
        let bottoms = tree.bottom_ids();
        let mut s = DMatrix::<f64>::zeros(ids.len(), bottoms.len());
        for (j, b) in bottoms.iter().enumerate() {
            let mut chain = vec![b.clone()];
            let mut cur = b.as_str();
            while let Some(p) = tree.parent_of(cur) {
                chain.push(p.to_string());
                cur = p;
            }
            for (i, id) in ids.iter().enumerate() {
                if chain.contains(id) {
                    s[(i, j)] = 1.0;
                }
            }
        }
        s
    }

    #[test]
    fn summing_matrix_three_level_oracle() {
        let tree = NodeTree::from_edges(&[
            ("Total", None),
            ("A", Some("Total")),
            ("B", Some("Total")),
            ("A1", Some("A")),
            ("A2", Some("A")),
            ("B1", Some("B")),
        ])
        .unwrap();
        let h = Hierarchy::build(tree.clone()).unwrap();
        assert_eq!(h.s_matrix(), &ancestor_oracle(&tree));
    }

    #[test]
    fn structural_errors_name_offender() {
        // multiple roots
        let err = NodeTree::from_edges(&[("R1", None), ("R2", None), ("X", Some("R1"))])
            .unwrap_err();
        assert!(err.to_string().contains("root"));

        // cycle
        let mut parent = HashMap::new();
        parent.insert("A".to_string(), "B".to_string());
        parent.insert("B".to_string(), "A".to_string());
        let err = NodeTree::new(
            vec!["R".into(), "A".into(), "B".into()],
            parent,
            HashMap::new(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle") || err.to_string().contains("root"));

        // internal node ordered into the bottom segment
        let mut parent = HashMap::new();
        parent.insert("A".to_string(), "R".to_string());
        parent.insert("B".to_string(), "A".to_string());
        let err = NodeTree::new(
            vec!["R".into(), "B".into(), "A".into()],
            parent,
            HashMap::new(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("node A") || msg.contains("node B"),
            "got: {err}"
        );

        // unknown parent
        let err =
            NodeTree::from_edges(&[("R", None), ("X", Some("nope"))]).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn constraint_matrices_identities() {
        let h = Hierarchy::build(fig1_tree()).unwrap();
        let (j, c) = h.constraint_matrices();
        assert_eq!(c.nrows(), 3);
        assert_eq!(c.ncols(), 8);
        let cs = &c * h.s_matrix();
        assert!(cs.iter().all(|&v| v == 0.0), "C*S must vanish exactly");
        let js = &j * h.s_matrix();
        assert_eq!(js, DMatrix::<f64>::identity(5, 5));
    }

    #[test]
    fn constraint_matrices_chain() {
        let h = Hierarchy::build(chain_tree()).unwrap();
        let (j, c) = h.constraint_matrices();
        assert_eq!(c, DMatrix::from_row_slice(1, 2, &[1., -1.]));
        assert_eq!(j, DMatrix::from_row_slice(1, 2, &[0., 1.]));
    }

    #[test]
    fn random_trees_coherent_under_c() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1701);
        for _ in 0..50 {
            let tree = crate::testutil::random_tree(&mut rng, 12);
            let h = Hierarchy::build(tree).unwrap();
            let (_, c) = h.constraint_matrices();
            let b = DVector::from_fn(h.n_bottom(), |_, _| rng.gen_range(-5.0..5.0));
            let y = h.s_matrix() * b;
            let viol = (&c * y).amax();
            assert!(viol <= 1e-12, "violation {viol}");
        }
    }

    // Oracle: elementwise Kronecker product by explicit double loop.
    fn naive_kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                for k in 0..b.nrows() {
                    for l in 0..b.ncols() {
                        out[(i * b.nrows() + k, j * b.ncols() + l)] = a[(i, j)] * b[(k, l)];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn kron_extend_matches_worked_bivariate_example() {
        let h = Hierarchy::build(fig1_tree()).unwrap();
        let kron = h.kron_extend(2).unwrap();
        assert_eq!(kron.s_star.nrows(), 16);
        assert_eq!(kron.s_star.ncols(), 10);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(16, 10, &[
            1., 1., 1., 1., 1., 0., 0., 0., 0., 0.,
            1., 1., 0., 0., 0., 0., 0., 0., 0., 0.,
            0., 0., 1., 1., 1., 0., 0., 0., 0., 0.,
            1., 0., 0., 0., 0., 0., 0., 0., 0., 0.,
            0., 1., 0., 0., 0., 0., 0., 0., 0., 0.,
            0., 0., 1., 0., 0., 0., 0., 0., 0., 0.,
            0., 0., 0., 1., 0., 0., 0., 0., 0., 0.,
            0., 0., 0., 0., 1., 0., 0., 0., 0., 0.,
            0., 0., 0., 0., 0., 1., 1., 1., 1., 1.,
            0., 0., 0., 0., 0., 1., 1., 0., 0., 0.,
            0., 0., 0., 0., 0., 0., 0., 1., 1., 1.,
            0., 0., 0., 0., 0., 1., 0., 0., 0., 0.,
            0., 0., 0., 0., 0., 0., 1., 0., 0., 0.,
            0., 0., 0., 0., 0., 0., 0., 1., 0., 0.,
            0., 0., 0., 0., 0., 0., 0., 0., 1., 0.,
            0., 0., 0., 0., 0., 0., 0., 0., 0., 1.,
        ]);
        assert_eq!(kron.s_star, expected);
        let prod = &kron.c_star * &kron.s_star;
        assert!(prod.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kron_extend_m1_is_identity_factor() {
        let h = Hierarchy::build(fig1_tree()).unwrap();
        let kron = h.kron_extend(1).unwrap();
        let (j, c) = h.constraint_matrices();
        assert_eq!(&kron.s_star, h.s_matrix());
        assert_eq!(kron.c_star, c);
        assert_eq!(kron.j_star, j);
    }

    #[test]
    fn kron_extend_m0_rejected() {
        let h = Hierarchy::build(chain_tree()).unwrap();
        assert!(matches!(
            h.kron_extend(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn kron_extend_chain_against_naive_oracle() {
        let h = Hierarchy::build(chain_tree()).unwrap();
        let kron = h.kron_extend(3).unwrap();
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(kron.s_star, naive_kron(&eye, h.s_matrix()));
        let (j, c) = h.constraint_matrices();
        assert_eq!(kron.c_star, naive_kron(&eye, &c));
        assert_eq!(kron.j_star, naive_kron(&eye, &j));
    }

    #[test]
    fn aggregate_bottom_all_ones() {
        let h = Hierarchy::build(fig1_tree()).unwrap();
        let bottom = DMatrix::from_element(4, 10, 1.0);
        let vars = vec!["adm".to_string(), "dis".to_string()];
        let panel = h
            .aggregate_bottom(&bottom, &vars, TimeAxis::index(0))
            .unwrap();
        for t in 0..4 {
            for j in 0..2 {
                assert_eq!(panel.value(t, 0, j), 5.0); // Total
                assert_eq!(panel.value(t, 1, j), 2.0); // A
                assert_eq!(panel.value(t, 2, j), 3.0); // B
            }
        }
        assert!(panel.max_constraint_violation(&h) <= 1e-12);
    }

    #[test]
    fn aggregate_bottom_matches_descendant_sum_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let h = Hierarchy::build(fig1_tree()).unwrap();
        let (n, n_b, m, t_len) = (h.n(), h.n_bottom(), 2usize, 6usize);
        let bottom = DMatrix::from_fn(t_len, n_b * m, |_, _| rng.gen_range(-10.0..10.0));
        let vars = vec!["v1".to_string(), "v2".to_string()];
        let panel = h
            .aggregate_bottom(&bottom, &vars, TimeAxis::index(0))
            .unwrap();

        // Oracle: per (t, node, var), sum bottom descendants by scalar loop.
        let s = ancestor_oracle(h.tree());
        for t in 0..t_len {
            for i in 0..n {
                for j in 0..m {
                    let mut acc = 0.0;
                    for q in 0..n_b {
                        if s[(i, q)] == 1.0 {
                            acc += bottom[(t, j * n_b + q)];
                        }
                    }
                    let got = panel.value(t, i, j);
                    assert!((got - acc).abs() <= 1e-12 * (1.0 + acc.abs()));
                }
            }
        }
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
[[node]]
id = "Total"
label = "Brazil"

[[node]]
id = "AA"
parent = "A"

[[node]]
id = "A"
parent = "Total"

[[node]]
id = "AB"
parent = "A"
"#;
        let tree = NodeTree::from_toml_str(text).unwrap();
        assert_eq!(tree.node_ids(), &["Total", "A", "AA", "AB"]);
        assert_eq!(tree.label("Total"), "Brazil");
        let rendered = tree.to_toml_string().unwrap();
        let again = NodeTree::from_toml_str(&rendered).unwrap();
        assert_eq!(tree, again);
        // and the hierarchy built from both is identical
        let h1 = Hierarchy::build(tree).unwrap();
        let h2 = Hierarchy::build(again).unwrap();
        assert_eq!(h1.s_matrix(), h2.s_matrix());
    }
}
