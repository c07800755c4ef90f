//! Candidate pool with lazily invalidated priority queues.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Status {
    Live,
    /// Selected by the growth procedure or consumed as a seed; never re-added.
    Retired,
    /// Filtered out as non-significant; may be re-created by a later expansion.
    Dead,
}

#[derive(Clone, Debug)]
pub(crate) struct Candidate {
    pub edges: Arc<[u32]>,
    pub h: f64,
    pub seed: bool,
    pub significant: bool,
    pub status: Status,
    pub version: u32,
    pub expanded_epoch: Option<u64>,
}

#[derive(Clone, Debug)]
struct Entry {
    h: f64,
    edges: Arc<[u32]>,
    id: u32,
    version: u32,
}

/// Larger `h` first, then fewer edges, then lexicographically smaller edge ids.
fn rank(a_h: f64, a: &[u32], b_h: f64, b: &[u32]) -> Ordering {
    a_h.total_cmp(&b_h)
        .then_with(|| b.len().cmp(&a.len()))
        .then_with(|| b.cmp(a))
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        rank(self.h, &self.edges, other.h, &other.edges).then_with(|| other.id.cmp(&self.id))
    }
}

#[derive(Debug, Default)]
pub(crate) struct Pool {
    cands: Vec<Candidate>,
    grown: HashMap<Arc<[u32]>, u32>,
    by_edge: Vec<Vec<u32>>,
    significant: BinaryHeap<Entry>,
    seeds: BinaryHeap<Entry>,
}

impl Pool {
    pub fn new(universe: usize) -> Self {
        Pool {
            by_edge: vec![Vec::new(); universe],
            ..Pool::default()
        }
    }

    pub fn get(&self, id: u32) -> &Candidate {
        &self.cands[id as usize]
    }

    pub fn len(&self) -> usize {
        self.cands.len()
    }

    /// Whether `edges` is a live or retired grown candidate.
    pub fn blocks(&self, edges: &[u32]) -> bool {
        self.grown.contains_key(edges)
    }

    /// Adds a candidate. Seeds are the initial edge pairs.
    pub fn insert(&mut self, edges: Vec<u32>, h: f64, seed: bool, significant: bool, seed_eligible: bool) -> u32 {
        let id = self.cands.len() as u32;
        let edges: Arc<[u32]> = edges.into();
        for &e in edges.iter() {
            self.by_edge[e as usize].push(id);
        }
        if !seed {
            self.grown.insert(edges.clone(), id);
        }
        self.cands.push(Candidate {
            edges,
            h,
            seed,
            significant,
            status: Status::Live,
            version: 0,
            expanded_epoch: None,
        });
        self.enqueue(id, seed_eligible);
        id
    }

    fn enqueue(&mut self, id: u32, seed_eligible: bool) {
        let c = &self.cands[id as usize];
        let entry = Entry {
            h: c.h,
            edges: c.edges.clone(),
            id,
            version: c.version,
        };
        if c.significant {
            self.significant.push(entry);
        } else if c.seed && seed_eligible {
            self.seeds.push(entry);
        }
    }

    fn is_current(&self, e: &Entry) -> bool {
        let c = &self.cands[e.id as usize];
        c.status == Status::Live && c.version == e.version
    }

    /// Best live significant candidate, without removing it.
    pub fn best_significant(&mut self) -> Option<u32> {
        while let Some(top) = self.significant.peek() {
            if self.is_current(top) {
                return Some(top.id);
            }
            self.significant.pop();
        }
        None
    }

    /// Removes and returns the best live seed from the fallback queue.
    pub fn pop_seed(&mut self) -> Option<u32> {
        while let Some(top) = self.seeds.pop() {
            if self.is_current(&top) {
                return Some(top.id);
            }
        }
        None
    }

    pub fn retire(&mut self, id: u32) {
        self.cands[id as usize].status = Status::Retired;
    }

    pub fn kill(&mut self, id: u32) {
        let c = &mut self.cands[id as usize];
        c.status = Status::Dead;
        if !c.seed {
            let edges = c.edges.clone();
            self.grown.remove(&edges);
        }
    }

    /// Stores a re-evaluated score and requeues the candidate.
    pub fn update(&mut self, id: u32, h: f64, significant: bool, seed_eligible: bool) {
        let c = &mut self.cands[id as usize];
        c.h = h;
        c.significant = significant;
        c.version += 1;
        self.enqueue(id, seed_eligible);
    }

    pub fn mark_expanded(&mut self, id: u32, epoch: u64) {
        self.cands[id as usize].expanded_epoch = Some(epoch);
    }

    /// Live candidates containing any of `edges`, in id order.
    pub fn touching(&self, edges: &[u32]) -> Vec<u32> {
        let mut ids: Vec<u32> = edges
            .iter()
            .flat_map(|&e| self.by_edge[e as usize].iter().copied())
            .filter(|&id| self.cands[id as usize].status == Status::Live)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Drops index entries of candidates that can no longer change state.
    pub fn compact_edge_index(&mut self, edges: &[u32]) {
        for &e in edges {
            let cands = &self.cands;
            self.by_edge[e as usize].retain(|&id| cands[id as usize].status == Status::Live);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_prefers_gain_then_size_then_lexicographic() {
        let mut pool = Pool::new(10);
        let a = pool.insert(vec![0, 1, 2], 5.0, false, true, false);
        let b = pool.insert(vec![3, 4], 5.0, true, true, false);
        assert_eq!(pool.best_significant(), Some(b));
        pool.retire(b);
        let c = pool.insert(vec![0, 1, 3], 5.0, false, true, false);
        assert_eq!(pool.best_significant(), Some(a));
        pool.retire(a);
        assert_eq!(pool.best_significant(), Some(c));
        pool.insert(vec![5, 6, 7], 6.0, false, true, false);
        assert_ne!(pool.best_significant(), Some(c));
    }

    #[test]
    fn stale_entries_are_skipped() {
        let mut pool = Pool::new(4);
        let a = pool.insert(vec![0, 1], 9.0, true, true, true);
        let b = pool.insert(vec![1, 2], 3.0, true, true, true);
        pool.update(a, 1.0, false, true);
        assert_eq!(pool.best_significant(), Some(b));
        pool.retire(b);
        assert_eq!(pool.best_significant(), None);
        assert_eq!(pool.pop_seed(), Some(a));
        assert_eq!(pool.pop_seed(), None);
    }

    #[test]
    fn dead_grown_candidates_unblock() {
        let mut pool = Pool::new(4);
        let a = pool.insert(vec![0, 1, 2], 9.0, false, true, false);
        assert!(pool.blocks(&[0, 1, 2]));
        pool.kill(a);
        assert!(!pool.blocks(&[0, 1, 2]));
        let r = pool.insert(vec![1, 2, 3], 9.0, false, true, false);
        pool.retire(r);
        assert!(pool.blocks(&[1, 2, 3]));
        assert!(pool.touching(&[1]).is_empty());
    }
}
