//! Edge universe, graphs, graph groups and patterns.
//!
//! All graphs in a dataset share the node set `0..n`. An edge is a
//! `(src, dst, weight category)` triple; undirected datasets store edges in
//! canonical `src <= dst` form. Patterns are connected edge sets.

mod binning;
mod index;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GragraError, Result};

pub use binning::{bin_weights, RawEdge, WeightBinning};
pub use index::{GraphBits, SupportIndex};

/// One element of the weighted edge universe `V x V x W`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(u32, u32, u16)", into = "(u32, u32, u16)")]
pub struct EdgeKey {
    pub src: u32,
    pub dst: u32,
    pub weight: u16,
}

impl EdgeKey {
    pub const fn new(src: u32, dst: u32, weight: u16) -> Self {
        EdgeKey { src, dst, weight }
    }

    /// Canonical form: undirected edges are stored with `src <= dst`.
    pub fn canonical(self, directed: bool) -> Self {
        if !directed && self.src > self.dst {
            EdgeKey::new(self.dst, self.src, self.weight)
        } else {
            self
        }
    }

    pub fn endpoints(&self) -> (u32, u32) {
        (self.src, self.dst)
    }

    pub fn is_loop(&self) -> bool {
        self.src == self.dst
    }

    pub fn touches(&self, node: u32) -> bool {
        self.src == node || self.dst == node
    }

    /// True iff both edges share at least one incident node.
    pub fn shares_node(&self, other: &EdgeKey) -> bool {
        self.touches(other.src) || self.touches(other.dst)
    }
}

impl From<(u32, u32, u16)> for EdgeKey {
    fn from((src, dst, weight): (u32, u32, u16)) -> Self {
        EdgeKey::new(src, dst, weight)
    }
}

impl From<EdgeKey> for (u32, u32, u16) {
    fn from(e: EdgeKey) -> Self {
        (e.src, e.dst, e.weight)
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.src, self.dst, self.weight)
    }
}

/// A graph over the shared node set. Edges are sorted and unique, with at
/// most one weight category per endpoint pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub id: String,
    edges: Vec<EdgeKey>,
}

impl Graph {
    /// Builds a graph, canonicalizing and sorting edges. Rejects two edges on
    /// the same endpoint pair.
    pub fn new(id: impl Into<String>, edges: impl IntoIterator<Item = EdgeKey>, directed: bool) -> Result<Self> {
        let id = id.into();
        let mut edges: Vec<EdgeKey> = edges.into_iter().map(|e| e.canonical(directed)).collect();
        edges.sort_unstable();
        edges.dedup();
        for w in edges.windows(2) {
            if w[0].endpoints() == w[1].endpoints() {
                return Err(GragraError::InvalidDataset(format!(
                    "graph {id}: endpoint pair ({}, {}) carries more than one weight",
                    w[0].src, w[0].dst
                )));
            }
        }
        Ok(Graph { id, edges })
    }

    pub fn edges(&self) -> &[EdgeKey] {
        &self.edges
    }

    pub fn contains(&self, e: &EdgeKey) -> bool {
        self.edges.binary_search(e).is_ok()
    }

    pub fn contains_all<'a>(&self, x: impl IntoIterator<Item = &'a EdgeKey>) -> bool {
        x.into_iter().all(|e| self.contains(e))
    }

    fn retain(&mut self, keep: impl Fn(&EdgeKey) -> bool) {
        self.edges.retain(|e| keep(e));
    }
}

/// Header-level properties shared by every graph of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: u32,
    pub directed: bool,
    #[serde(default)]
    pub loops: bool,
    /// Number of weight categories `|W|`.
    pub weight_categories: u16,
}

/// Support threshold used to sparsify the edge universe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportThreshold {
    /// Keep edges contained in at least `s` graphs of some group.
    MinSupport(u32),
    /// Keep edges whose support in some group reaches `f * min_i c_i`.
    Adaptive(f64),
}

impl SupportThreshold {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SupportThreshold::MinSupport(0) => Err(GragraError::Config("minimum support must be >= 1".into())),
            SupportThreshold::Adaptive(f) if !(f > 0.0 && f <= 1.0) => {
                Err(GragraError::Config(format!("adaptive fraction {f} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// The real-valued support an edge must reach in at least one group.
    pub fn cutoff(&self, group_sizes: &[usize]) -> f64 {
        match *self {
            SupportThreshold::MinSupport(s) => s as f64,
            SupportThreshold::Adaptive(f) => {
                let smallest = group_sizes.iter().copied().min().unwrap_or(0);
                f * smallest as f64
            }
        }
    }
}

impl fmt::Display for SupportThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupportThreshold::MinSupport(s) => write!(f, "min-support {s}"),
            SupportThreshold::Adaptive(x) => write!(f, "adaptive {x}"),
        }
    }
}

/// Node-aligned graphs partitioned into `k` ordered, non-empty groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphGroupDataset {
    pub meta: DatasetMeta,
    pub group_labels: Vec<String>,
    pub groups: Vec<Vec<Graph>>,
    /// Sorted edge universe; every graph edge is drawn from it.
    pub universe: Vec<EdgeKey>,
}

impl GraphGroupDataset {
    /// Validates groups and graphs and sets the universe to every observed edge.
    pub fn new(meta: DatasetMeta, group_labels: Vec<String>, groups: Vec<Vec<Graph>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(GragraError::InvalidDataset("dataset has no graph groups".into()));
        }
        if group_labels.len() != groups.len() {
            return Err(GragraError::InvalidDataset("group label count differs from group count".into()));
        }
        if meta.weight_categories == 0 {
            return Err(GragraError::InvalidDataset("at least one weight category is required".into()));
        }
        let mut seen_labels = BTreeSet::new();
        let mut universe = BTreeSet::new();
        for (label, group) in group_labels.iter().zip(&groups) {
            if !seen_labels.insert(label) {
                return Err(GragraError::InvalidDataset(format!("duplicate group label {label}")));
            }
            if group.is_empty() {
                return Err(GragraError::InvalidDataset(format!("group {label} is empty")));
            }
            for g in group {
                for e in g.edges() {
                    if e.src >= meta.n || e.dst >= meta.n {
                        return Err(GragraError::InvalidDataset(format!(
                            "graph {}: edge {e} references a node outside 0..{}",
                            g.id, meta.n
                        )));
                    }
                    if e.weight >= meta.weight_categories {
                        return Err(GragraError::InvalidDataset(format!(
                            "graph {}: edge {e} weight category outside 0..{}",
                            g.id, meta.weight_categories
                        )));
                    }
                    if e.is_loop() && !meta.loops {
                        return Err(GragraError::InvalidDataset(format!(
                            "graph {}: self-loop {e} in a dataset without loops",
                            g.id
                        )));
                    }
                    if !meta.directed && e.src > e.dst {
                        return Err(GragraError::InvalidDataset(format!(
                            "graph {}: undirected edge {e} not in canonical form",
                            g.id
                        )));
                    }
                    universe.insert(*e);
                }
            }
        }
        Ok(GraphGroupDataset {
            meta,
            group_labels,
            groups,
            universe: universe.into_iter().collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn total_graphs(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Per-group support counts of every edge appearing in the dataset.
    pub fn edge_supports(&self) -> BTreeMap<EdgeKey, Vec<u32>> {
        let k = self.k();
        let mut support: BTreeMap<EdgeKey, Vec<u32>> = BTreeMap::new();
        for (i, group) in self.groups.iter().enumerate() {
            for g in group {
                for e in g.edges() {
                    support.entry(*e).or_insert_with(|| vec![0; k])[i] += 1;
                }
            }
        }
        support
    }

    /// Restricts the universe to edges meeting `threshold` in at least one
    /// group and rewrites every graph to universe edges only. Returns the
    /// surviving universe size.
    pub fn sparsify(&mut self, threshold: SupportThreshold) -> Result<usize> {
        threshold.validate()?;
        let cutoff = threshold.cutoff(&self.group_sizes());
        let supports = self.edge_supports();
        let universe: Vec<EdgeKey> = supports
            .into_iter()
            .filter(|(_, s)| s.iter().any(|&c| c as f64 >= cutoff))
            .map(|(e, _)| e)
            .collect();
        if universe.is_empty() {
            return Err(GragraError::EmptyUniverse {
                threshold: threshold.to_string(),
            });
        }
        for group in &mut self.groups {
            for g in group.iter_mut() {
                g.retain(|e| universe.binary_search(e).is_ok());
            }
        }
        self.universe = universe;
        Ok(self.universe.len())
    }
}

/// Fraction of graphs in `group` containing every edge of `x`; 1 for empty `x`.
pub fn empirical_frequency(group: &[Graph], x: &[EdgeKey]) -> f64 {
    if group.is_empty() {
        return 0.0;
    }
    let hits = group.iter().filter(|g| g.contains_all(x)).count();
    hits as f64 / group.len() as f64
}

/// Whether the undirected incidence graph of `x` has exactly one component.
pub fn is_connected(x: &[EdgeKey]) -> bool {
    if x.is_empty() {
        return false;
    }
    let mut nodes: Vec<u32> = x.iter().flat_map(|e| [e.src, e.dst]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let idx = |v: u32| nodes.binary_search(&v).unwrap();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    let mut components = nodes.len();
    for e in x {
        let (a, b) = (find(&mut parent, idx(e.src)), find(&mut parent, idx(e.dst)));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components == 1
}

/// Nodes incident to at least one edge of `x`, sorted.
pub fn incident_nodes(x: &[EdgeKey]) -> Vec<u32> {
    let mut nodes: Vec<u32> = x.iter().flat_map(|e| [e.src, e.dst]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// A connected edge set mined as one unit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    edges: Vec<EdgeKey>,
}

impl Pattern {
    /// Builds a pattern from at least two edges forming a connected set with
    /// distinct endpoint pairs.
    pub fn new(edges: impl IntoIterator<Item = EdgeKey>) -> Result<Self> {
        let mut edges: Vec<EdgeKey> = edges.into_iter().collect();
        edges.sort_unstable();
        edges.dedup();
        if edges.len() < 2 {
            return Err(GragraError::InvalidDataset("a pattern needs at least two edges".into()));
        }
        for w in edges.windows(2) {
            if w[0].endpoints() == w[1].endpoints() {
                return Err(GragraError::InvalidDataset(format!(
                    "pattern repeats endpoint pair ({}, {})",
                    w[0].src, w[0].dst
                )));
            }
        }
        if !is_connected(&edges) {
            return Err(GragraError::InvalidDataset("pattern is not connected".into()));
        }
        Ok(Pattern { edges })
    }

    pub fn edges(&self) -> &[EdgeKey] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn nodes(&self) -> Vec<u32> {
        incident_nodes(&self.edges)
    }
}

/// Binary `k x |S|` matrix assigning patterns to groups.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    rows: Vec<Vec<bool>>,
}

impl AssociationMatrix {
    pub fn new(k: usize) -> Self {
        AssociationMatrix { rows: vec![Vec::new(); k] }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Appends a column. Every column must flag at least one group.
    pub fn push_column(&mut self, column: &[bool]) -> Result<()> {
        if column.len() != self.rows.len() {
            return Err(GragraError::Mismatch(format!(
                "association column has {} entries, expected {}",
                column.len(),
                self.rows.len()
            )));
        }
        if !column.iter().any(|&b| b) {
            return Err(GragraError::Mismatch("association column assigns no group".into()));
        }
        for (row, &b) in self.rows.iter_mut().zip(column) {
            row.push(b);
        }
        Ok(())
    }

    pub fn get(&self, group: usize, pattern: usize) -> bool {
        self.rows[group][pattern]
    }

    pub fn column(&self, pattern: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r[pattern]).collect()
    }

    pub fn row(&self, group: usize) -> &[bool] {
        &self.rows[group]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: u32, d: u32, w: u16) -> EdgeKey {
        EdgeKey::new(s, d, w)
    }

    fn meta(n: u32) -> DatasetMeta {
        DatasetMeta {
            n,
            directed: false,
            loops: false,
            weight_categories: 1,
        }
    }

    fn graph(id: &str, edges: &[(u32, u32)]) -> Graph {
        Graph::new(id, edges.iter().map(|&(s, d)| e(s, d, 0)), false).unwrap()
    }

    #[test]
    fn frequency_counts_containing_graphs() {
        let group = vec![
            graph("a", &[(0, 1), (1, 2)]),
            graph("b", &[(0, 1), (1, 2), (2, 3)]),
            graph("c", &[(0, 1)]),
        ];
        let x = [e(0, 1, 0), e(1, 2, 0)];
        assert_eq!(empirical_frequency(&group, &x), 2.0 / 3.0);
        assert_eq!(empirical_frequency(&group, &[]), 1.0);
        assert_eq!(empirical_frequency(&group, &[e(5, 6, 0)]), 0.0);
    }

    #[test]
    fn connectivity() {
        assert!(is_connected(&[e(0, 1, 0), e(1, 2, 0)]));
        assert!(!is_connected(&[e(0, 1, 0), e(2, 3, 0)]));
        assert!(is_connected(&[e(0, 1, 0)]));
        // direction is ignored
        assert!(is_connected(&[e(1, 0, 0), e(2, 0, 0)]));
    }

    #[test]
    fn graph_rejects_two_weights_on_one_pair() {
        assert!(Graph::new("g", [e(0, 1, 0), e(1, 0, 1)], false).is_err());
        // directed: (0,1) and (1,0) are different pairs
        assert!(Graph::new("g", [e(0, 1, 0), e(1, 0, 1)], true).is_ok());
    }

    #[test]
    fn dataset_rejects_loops_unless_declared() {
        let g = Graph::new("g", [e(2, 2, 0)], false).unwrap();
        assert!(GraphGroupDataset::new(meta(3), vec!["a".into()], vec![vec![g.clone()]]).is_err());
        let mut m = meta(3);
        m.loops = true;
        assert!(GraphGroupDataset::new(m, vec!["a".into()], vec![vec![g]]).is_ok());
    }

    #[test]
    fn dataset_rejects_empty_group() {
        let g = graph("g", &[(0, 1)]);
        let err = GraphGroupDataset::new(meta(3), vec!["a".into(), "b".into()], vec![vec![g], vec![]]);
        assert!(err.is_err());
    }

    #[test]
    fn min_support_two_drops_singletons() {
        let groups = vec![vec![
            graph("a", &[(0, 1), (1, 2)]),
            graph("b", &[(0, 1)]),
            graph("c", &[(0, 1), (2, 3)]),
        ]];
        let mut ds = GraphGroupDataset::new(meta(4), vec!["g".into()], groups).unwrap();
        assert_eq!(ds.universe.len(), 3);
        ds.sparsify(SupportThreshold::MinSupport(2)).unwrap();
        assert_eq!(ds.universe, vec![e(0, 1, 0)]);
        assert!(ds.groups[0].iter().all(|g| g.edges() == [e(0, 1, 0)]));
    }

    #[test]
    fn adaptive_threshold_is_real_valued() {
        // smallest group has 50 graphs -> cutoff 5.0; support 5 is kept, 4 is not
        let mut g1 = Vec::new();
        for i in 0..50 {
            let mut edges = vec![];
            if i < 5 {
                edges.push((0, 1));
            }
            if i < 4 {
                edges.push((1, 2));
            }
            edges.push((3, 4));
            g1.push(graph(&format!("a{i}"), &edges));
        }
        let g2: Vec<Graph> = (0..60).map(|i| graph(&format!("b{i}"), &[(3, 4)])).collect();
        let mut ds = GraphGroupDataset::new(meta(5), vec!["a".into(), "b".into()], vec![g1, g2]).unwrap();
        assert_eq!(SupportThreshold::Adaptive(0.1).cutoff(&ds.group_sizes()), 5.0);
        ds.sparsify(SupportThreshold::Adaptive(0.1)).unwrap();
        assert_eq!(ds.universe, vec![e(0, 1, 0), e(3, 4, 0)]);
    }

    #[test]
    fn over_aggressive_threshold_is_an_error() {
        let groups = vec![vec![graph("a", &[(0, 1)])]];
        let mut ds = GraphGroupDataset::new(meta(2), vec!["g".into()], groups).unwrap();
        assert!(matches!(
            ds.sparsify(SupportThreshold::MinSupport(2)),
            Err(GragraError::EmptyUniverse { .. })
        ));
    }

    #[test]
    fn pattern_invariants() {
        assert!(Pattern::new([e(0, 1, 0)]).is_err());
        assert!(Pattern::new([e(0, 1, 0), e(2, 3, 0)]).is_err());
        assert!(Pattern::new([e(0, 1, 0), e(0, 1, 1)]).is_err());
        let p = Pattern::new([e(1, 2, 0), e(0, 1, 0)]).unwrap();
        assert_eq!(p.nodes(), vec![0, 1, 2]);
        assert_eq!(p.edges()[0], e(0, 1, 0));
    }

    #[test]
    fn association_columns_need_a_group() {
        let mut a = AssociationMatrix::new(2);
        assert!(a.push_column(&[false, false]).is_err());
        a.push_column(&[false, true]).unwrap();
        assert_eq!(a.columns(), 1);
        assert!(a.get(1, 0));
        assert_eq!(a.column(0), vec![false, true]);
    }
}
