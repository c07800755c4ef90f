use std::collections::HashMap;
use std::ops::Range;

use super::{EdgeKey, GraphGroupDataset};

/// Occurrence bitset over all graphs of a dataset. Every group starts on a
/// fresh 64-bit word so per-group counts are plain popcounts.
pub type GraphBits = Vec<u64>;

/// Indexed, read-only view of a sparsified dataset used by the model and the
/// search: dense edge ids, per-edge occurrence bitsets, and node incidence.
#[derive(Clone, Debug)]
pub struct SupportIndex {
    edges: Vec<EdgeKey>,
    ids: HashMap<EdgeKey, u32>,
    occurrence: Vec<GraphBits>,
    group_words: Vec<Range<usize>>,
    group_sizes: Vec<usize>,
    incident: Vec<Vec<u32>>,
    edge_support: Vec<Vec<u32>>,
    largest_component: usize,
    directed: bool,
    weight_categories: u16,
}

impl SupportIndex {
    pub fn build(ds: &GraphGroupDataset) -> Self {
        let edges = ds.universe.clone();
        let ids: HashMap<EdgeKey, u32> = edges.iter().enumerate().map(|(i, e)| (*e, i as u32)).collect();
        let group_sizes = ds.group_sizes();
        let mut group_words = Vec::with_capacity(group_sizes.len());
        let mut offset = 0;
        for &c in &group_sizes {
            let words = c.div_ceil(64);
            group_words.push(offset..offset + words);
            offset += words;
        }
        let total_words = offset;
        let mut occurrence = vec![vec![0u64; total_words]; edges.len()];
        let mut edge_support = vec![vec![0u32; group_sizes.len()]; edges.len()];
        let mut largest_component = 0;
        for (gi, group) in ds.groups.iter().enumerate() {
            let base = group_words[gi].start;
            for (j, graph) in group.iter().enumerate() {
                for e in graph.edges() {
                    if let Some(&id) = ids.get(e) {
                        occurrence[id as usize][base + j / 64] |= 1u64 << (j % 64);
                        edge_support[id as usize][gi] += 1;
                    }
                }
                largest_component = largest_component.max(largest_component_size(graph.edges()));
            }
        }
        let mut incident = vec![Vec::new(); ds.meta.n as usize];
        for (i, e) in edges.iter().enumerate() {
            incident[e.src as usize].push(i as u32);
            if e.dst != e.src {
                incident[e.dst as usize].push(i as u32);
            }
        }
        SupportIndex {
            edges,
            ids,
            occurrence,
            group_words,
            group_sizes,
            incident,
            edge_support,
            largest_component,
            directed: ds.meta.directed,
            weight_categories: ds.meta.weight_categories,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn k(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn total_graphs(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn weight_categories(&self) -> u16 {
        self.weight_categories
    }

    pub fn edge(&self, id: u32) -> EdgeKey {
        self.edges[id as usize]
    }

    pub fn edges(&self) -> &[EdgeKey] {
        &self.edges
    }

    pub fn id(&self, e: &EdgeKey) -> Option<u32> {
        self.ids.get(e).copied()
    }

    /// Maps edge keys to sorted ids; `None` if any edge is outside the universe.
    pub fn ids_of(&self, x: &[EdgeKey]) -> Option<Vec<u32>> {
        let mut ids = x.iter().map(|e| self.id(e)).collect::<Option<Vec<u32>>>()?;
        ids.sort_unstable();
        ids.dedup();
        Some(ids)
    }

    pub fn keys_of(&self, ids: &[u32]) -> Vec<EdgeKey> {
        ids.iter().map(|&i| self.edge(i)).collect()
    }

    /// Universe edges incident to `node` (as source or destination).
    pub fn incident(&self, node: u32) -> &[u32] {
        &self.incident[node as usize]
    }

    /// Support count of edge `id` in group `group`.
    pub fn edge_support(&self, id: u32, group: usize) -> u32 {
        self.edge_support[id as usize][group]
    }

    /// Size (in nodes) of the largest connected component in any input graph.
    pub fn largest_component(&self) -> usize {
        self.largest_component
    }

    pub fn occurrence(&self, id: u32) -> &[u64] {
        &self.occurrence[id as usize]
    }

    /// Graphs containing every edge of `ids` (all graphs for an empty set).
    pub fn support_bits(&self, ids: &[u32]) -> GraphBits {
        match ids.split_first() {
            None => {
                let mut all = vec![0u64; self.group_words.last().map_or(0, |r| r.end)];
                for (gi, range) in self.group_words.iter().enumerate() {
                    let c = self.group_sizes[gi];
                    for j in 0..c {
                        all[range.start + j / 64] |= 1u64 << (j % 64);
                    }
                }
                all
            }
            Some((first, rest)) => {
                let mut bits = self.occurrence[*first as usize].clone();
                for id in rest {
                    for (w, o) in bits.iter_mut().zip(&self.occurrence[*id as usize]) {
                        *w &= *o;
                    }
                }
                bits
            }
        }
    }

    /// Per-group popcounts of a bitset.
    pub fn group_counts(&self, bits: &[u64]) -> Vec<u32> {
        self.group_words
            .iter()
            .map(|r| bits[r.clone()].iter().map(|w| w.count_ones()).sum())
            .collect()
    }

    /// Per-group counts of `bits AND occurrence(extra)` without allocating the intersection.
    pub fn group_counts_with(&self, bits: &[u64], extra: u32, out: &mut Vec<u32>) {
        let occ = &self.occurrence[extra as usize];
        out.clear();
        for r in &self.group_words {
            out.push(bits[r.clone()].iter().zip(&occ[r.clone()]).map(|(a, b)| (a & b).count_ones()).sum());
        }
    }

    /// Per-group support counts of the edge set `ids`.
    pub fn support(&self, ids: &[u32]) -> Vec<u32> {
        self.group_counts(&self.support_bits(ids))
    }

    /// Empirical frequencies `q_i(X)` for every group.
    pub fn frequencies(&self, ids: &[u32]) -> Vec<f64> {
        self.support(ids)
            .iter()
            .zip(&self.group_sizes)
            .map(|(&s, &c)| s as f64 / c as f64)
            .collect()
    }
}

fn largest_component_size(edges: &[EdgeKey]) -> usize {
    if edges.is_empty() {
        return 0;
    }
    let mut nodes: Vec<u32> = edges.iter().flat_map(|e| [e.src, e.dst]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let idx = |v: u32| nodes.binary_search(&v).unwrap();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    let mut size = vec![1usize; nodes.len()];
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for e in edges {
        let (a, b) = (find(&mut parent, idx(e.src)), find(&mut parent, idx(e.dst)));
        if a != b {
            parent[a] = b;
            size[b] += size[a];
        }
    }
    (0..nodes.len())
        .filter(|&i| parent[i] == i)
        .map(|i| size[i])
        .max()
        .unwrap_or(0)
}
