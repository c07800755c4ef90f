//! Per-group factorized maximum-entropy models over edge configurations.
//!
//! A [`GroupModel`] starts from independent Bernoulli edges matched to the
//! group's edge frequencies. Inserting a pattern constraint merges it with
//! every factor it overlaps and refits that factor by iterative scaling;
//! edges outside all factors stay independent.

mod factor;

use serde::{Deserialize, Serialize};

use crate::error::{GragraError, Result};
use crate::model::SupportIndex;

pub use factor::{Factor, FactorConstraint, FactorEdge};
use factor::compensated_sum;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log or odds.
pub const PROB_EPS: f64 = 1e-9;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

const NO_FACTOR: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Largest admissible `|p(c) - q(c)|` over a factor's constraints.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub max_factor_patterns: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-6,
            max_sweeps: 1000,
            max_factor_patterns: 16,
        }
    }
}

/// Maximum-entropy model of one graph group.
#[derive(Clone, Debug)]
pub struct GroupModel {
    group: usize,
    size: usize,
    edge_target: Vec<f64>,
    edge_p: Vec<f64>,
    edge_factor: Vec<u32>,
    factors: Vec<Option<Factor>>,
    free_slots: Vec<u32>,
    pattern_count: usize,
    opts: FitOptions,
}

/// A fitted but not yet committed pattern insertion.
#[derive(Clone, Debug)]
pub struct PendingInsert {
    group: usize,
    replaced: Vec<u32>,
    factor: Factor,
    gain: f64,
    sweeps: usize,
}

impl PendingInsert {
    /// Log-likelihood improvement `ℓ_i(S_i) - ℓ_i(S_i ∪ {X})` in nats.
    pub fn log_likelihood_gain(&self) -> f64 {
        self.gain
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn residual(&self) -> f64 {
        self.factor.residual()
    }

    pub fn group(&self) -> usize {
        self.group
    }

    /// Edges whose expectations may change once committed.
    pub fn touched_edges(&self) -> &[u32] {
        self.factor.edges()
    }
}

impl GroupModel {
    /// Baseline model: every universe edge independent with `p_e = clamp(q_i({e}))`.
    pub fn fit_baseline(index: &SupportIndex, group: usize, opts: FitOptions) -> Self {
        let size = index.group_sizes()[group];
        let freqs: Vec<f64> = (0..index.len() as u32)
            .map(|e| index.edge_support(e, group) as f64 / size as f64)
            .collect();
        Self::from_frequencies(group, size, freqs, opts)
    }

    /// Baseline model from explicit edge frequencies.
    pub fn from_frequencies(group: usize, size: usize, freqs: Vec<f64>, opts: FitOptions) -> Self {
        let edge_p = freqs.iter().map(|&q| clamp_prob(q)).collect();
        GroupModel {
            group,
            size,
            edge_factor: vec![NO_FACTOR; freqs.len()],
            edge_target: freqs,
            edge_p,
            factors: Vec::new(),
            free_slots: Vec::new(),
            pattern_count: 0,
            opts,
        }
    }

    pub fn group(&self) -> usize {
        self.group
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn universe_len(&self) -> usize {
        self.edge_target.len()
    }

    pub fn options(&self) -> &FitOptions {
        &self.opts
    }

    pub fn pattern_count(&self) -> usize {
        self.pattern_count
    }

    pub fn factors(&self) -> impl Iterator<Item = &Factor> {
        self.factors.iter().flatten()
    }

    pub fn factor_of(&self, edge: u32) -> Option<&Factor> {
        match self.edge_factor[edge as usize] {
            NO_FACTOR => None,
            slot => self.factors[slot as usize].as_ref(),
        }
    }

    /// Independent-edge probability (baseline coefficient) of an edge outside all factors.
    pub fn independent_p(&self, edge: u32) -> Option<f64> {
        (self.edge_factor[edge as usize] == NO_FACTOR).then(|| self.edge_p[edge as usize])
    }

    /// Expected frequency `p_i(Y | S_i)`: the probability that every edge of
    /// `y` is present. Edges must be universe ids.
    pub fn query(&self, y: &[u32]) -> f64 {
        let mut prob = 1.0;
        let mut grouped: Vec<(u32, u32)> = Vec::new();
        for &e in y {
            match self.edge_factor[e as usize] {
                NO_FACTOR => prob *= self.edge_p[e as usize],
                slot => {
                    let f = self.factors[slot as usize].as_ref().expect("live factor");
                    grouped.push((slot, f.local_index(e).expect("factor edge") as u32));
                }
            }
        }
        if grouped.is_empty() {
            return prob;
        }
        grouped.sort_unstable();
        grouped.dedup();
        let mut start = 0;
        let mut locals = Vec::new();
        while start < grouped.len() {
            let slot = grouped[start].0;
            let end = grouped[start..].iter().position(|g| g.0 != slot).map_or(grouped.len(), |o| start + o);
            locals.clear();
            locals.extend(grouped[start..end].iter().map(|g| g.1));
            prob *= self.factors[slot as usize].as_ref().unwrap().marginal(&locals);
            start = end;
        }
        prob
    }

    /// Fits `x` (with target frequency `target`) into a scratch factor
    /// without modifying the model.
    /// Whether inserting `x` would keep the merged factor within capacity.
    /// Factors only grow, so a `false` answer is permanent.
    pub fn has_capacity_for(&self, x: &[u32]) -> bool {
        let mut slots: Vec<u32> = Vec::new();
        let mut count = 1;
        for &e in x {
            let s = self.edge_factor[e as usize];
            if s != NO_FACTOR && !slots.contains(&s) {
                slots.push(s);
                count += self.factors[s as usize].as_ref().unwrap().pattern_count();
                if count > self.opts.max_factor_patterns {
                    return false;
                }
            }
        }
        true
    }

    pub fn prepare_insert(&self, x: &[u32], target: f64) -> Result<PendingInsert> {
        let mut x: Vec<u32> = x.to_vec();
        x.sort_unstable();
        x.dedup();
        if x.is_empty() || x.iter().any(|&e| e as usize >= self.edge_target.len()) {
            return Err(GragraError::OutsideUniverse);
        }
        if !(0.0..=1.0).contains(&target) {
            return Err(GragraError::Config(format!("pattern target {target} outside [0, 1]")));
        }
        let mut replaced: Vec<u32> = x
            .iter()
            .map(|&e| self.edge_factor[e as usize])
            .filter(|&s| s != NO_FACTOR)
            .collect();
        replaced.sort_unstable();
        replaced.dedup();
        let existing: usize = replaced
            .iter()
            .map(|&s| self.factors[s as usize].as_ref().unwrap().pattern_count())
            .sum();
        if existing + 1 > self.opts.max_factor_patterns {
            return Err(GragraError::FactorCapacity {
                needed: existing + 1,
                cap: self.opts.max_factor_patterns,
            });
        }

        let c = self.size as f64;
        let mut edges = Vec::new();
        let mut constraints = Vec::new();
        let mut before = Vec::new();
        for &slot in &replaced {
            let f = self.factors[slot as usize].as_ref().unwrap();
            for (l, &id) in f.edges().iter().enumerate() {
                edges.push(FactorEdge {
                    id,
                    target: f.edge_target(l),
                    p: f.edge_p(l),
                });
            }
            for p in f.patterns() {
                constraints.push(FactorConstraint {
                    edges: p.edges.clone(),
                    target: p.target,
                    log_theta: p.log_theta,
                });
            }
            before.push(f.log_likelihood(self.size));
        }
        for &e in &x {
            if self.edge_factor[e as usize] == NO_FACTOR {
                let (p, q) = (self.edge_p[e as usize], self.edge_target[e as usize]);
                edges.push(FactorEdge { id: e, target: q, p });
                let s = q * c;
                before.push(s * p.ln() + (c - s) * (1.0 - p).ln());
            }
        }
        constraints.push(FactorConstraint {
            edges: x,
            target,
            log_theta: 0.0,
        });
        let mut factor = Factor::new(edges, constraints)?;
        let sweeps = factor.fit(&self.opts)?;
        let gain = factor.log_likelihood(self.size) - compensated_sum(before);
        Ok(PendingInsert {
            group: self.group,
            replaced,
            factor,
            gain,
            sweeps,
        })
    }

    /// Applies a pending insertion. Returns the edges of the new factor.
    pub fn commit(&mut self, pending: PendingInsert) -> Vec<u32> {
        assert_eq!(pending.group, self.group, "pending insertion belongs to another group");
        for &slot in &pending.replaced {
            self.factors[slot as usize] = None;
            self.free_slots.push(slot);
        }
        let slot = match self.free_slots.pop() {
            Some(s) => s,
            None => {
                self.factors.push(None);
                (self.factors.len() - 1) as u32
            }
        };
        let touched = pending.factor.edges().to_vec();
        for &e in &touched {
            self.edge_factor[e as usize] = slot;
        }
        self.factors[slot as usize] = Some(pending.factor);
        self.pattern_count += 1;
        touched
    }

    /// Inserts `x` with target frequency `target` and refits the affected factor.
    pub fn insert_pattern(&mut self, x: &[u32], target: f64) -> Result<Vec<u32>> {
        let pending = self.prepare_insert(x, target)?;
        Ok(self.commit(pending))
    }

    /// Log-probability (nats) of a graph given by its sorted universe edge ids.
    pub fn graph_log_prob(&self, graph: &[u32]) -> f64 {
        let present = |e: u32| graph.binary_search(&e).is_ok();
        let independent = compensated_sum((0..self.edge_p.len()).filter(|&e| self.edge_factor[e] == NO_FACTOR).map(|e| {
            let p = self.edge_p[e];
            if present(e as u32) {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        }));
        let factors = compensated_sum(self.factors().map(|f| f.log_prob(present)));
        independent + factors
    }

    /// `ℓ_i = -Σ_G log p_i(G | S_i)`, evaluated from support counts.
    pub fn log_likelihood(&self) -> f64 {
        let c = self.size as f64;
        let independent = compensated_sum((0..self.edge_p.len()).filter(|&e| self.edge_factor[e] == NO_FACTOR).map(|e| {
            let (p, s) = (self.edge_p[e], self.edge_target[e] * c);
            s * p.ln() + (c - s) * (1.0 - p).ln()
        }));
        let factors = compensated_sum(self.factors().map(|f| f.log_likelihood(self.size)));
        -(independent + factors)
    }

    /// Largest constraint residual over all factors.
    pub fn max_residual(&self) -> f64 {
        self.factors().map(Factor::residual).fold(0.0, f64::max)
    }
}

/// The models of all `k` groups together with `|𝒢|`.
#[derive(Clone, Debug)]
pub struct ModelSet {
    pub models: Vec<GroupModel>,
    total_graphs: usize,
}

impl ModelSet {
    pub fn baseline(index: &SupportIndex, opts: FitOptions) -> Self {
        let models = (0..index.k()).map(|i| GroupModel::fit_baseline(index, i, opts)).collect();
        ModelSet {
            models,
            total_graphs: index.total_graphs(),
        }
    }

    pub fn from_models(models: Vec<GroupModel>) -> Self {
        let total_graphs = models.iter().map(GroupModel::size).sum();
        ModelSet { models, total_graphs }
    }

    pub fn k(&self) -> usize {
        self.models.len()
    }

    pub fn total_graphs(&self) -> usize {
        self.total_graphs
    }

    /// Model cost of one additional constraint: `k/2 · ln|𝒢|`.
    pub fn penalty(&self) -> f64 {
        model_penalty(self.k(), self.total_graphs)
    }

    /// `ℓ = Σ_i ℓ_i`.
    pub fn log_likelihood(&self) -> f64 {
        compensated_sum(self.models.iter().map(GroupModel::log_likelihood))
    }

    /// `BIC = ℓ + k·|S|/2 · ln|𝒢|`, where `|S|` counts every constraint,
    /// including the singleton-edge baseline.
    pub fn bic(&self, constraint_count: usize) -> f64 {
        self.log_likelihood() + constraint_count as f64 * self.penalty()
    }

    /// Exact `Δ(X)`: inserts `x` into every group (targets `q_i(X)`) on
    /// scratch copies and returns the likelihood gain minus the penalty.
    pub fn delta_exact(&self, x: &[u32], targets: &[f64]) -> Result<f64> {
        if targets.len() != self.k() {
            return Err(GragraError::Mismatch("one target per group is required".into()));
        }
        let mut gain = Vec::with_capacity(self.k());
        for (m, &q) in self.models.iter().zip(targets) {
            gain.push(m.prepare_insert(x, q)?.log_likelihood_gain());
        }
        Ok(compensated_sum(gain) - self.penalty())
    }

    /// Exact partial gain `Δ_i(X)` for group `i` alone.
    pub fn delta_partial_exact(&self, group: usize, x: &[u32], target: f64) -> Result<f64> {
        Ok(self.models[group].prepare_insert(x, target)?.log_likelihood_gain() - self.penalty())
    }
}

pub fn model_penalty(k: usize, total_graphs: usize) -> f64 {
    k as f64 / 2.0 * (total_graphs as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(freqs: &[f64], size: usize) -> GroupModel {
        GroupModel::from_frequencies(0, size, freqs.to_vec(), FitOptions::default())
    }

    #[test]
    fn baseline_odds() {
        let m = model(&[0.5, 0.0, 1.0], 4);
        assert_eq!(m.independent_p(0), Some(0.5));
        assert_eq!(m.independent_p(1), Some(PROB_EPS));
        assert_eq!(m.independent_p(2), Some(1.0 - PROB_EPS));
    }

    #[test]
    fn baseline_queries_are_products() {
        let m = model(&[0.5, 0.2, 0.9], 10);
        assert_eq!(m.query(&[]), 1.0);
        assert_eq!(m.query(&[0, 1, 2]), 0.5 * 0.2 * 0.9);
    }

    #[test]
    fn baseline_likelihood_single_edge() {
        // 4 graphs, edge in 2 of them: ℓ = -4·ln 0.5
        let m = model(&[0.5], 4);
        assert!((m.log_likelihood() - 4.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn baseline_log_prob_of_graphs() {
        let m = model(&[0.5, 0.5, 0.5], 4);
        assert!((m.graph_log_prob(&[0, 2]) - 3.0 * 0.5f64.ln()).abs() < 1e-12);
        let m = model(&[0.2, 0.7], 4);
        assert!((m.graph_log_prob(&[]) - (0.8f64.ln() + 0.3f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn clamped_certainty_gives_near_zero_likelihood() {
        let ms = ModelSet::from_models(vec![
            GroupModel::from_frequencies(0, 1, vec![1.0], FitOptions::default()),
            GroupModel::from_frequencies(1, 1, vec![1.0], FitOptions::default()),
        ]);
        assert!(ms.log_likelihood().abs() < 1e-8);
    }

    #[test]
    fn insert_disjoint_pattern_matches_target() {
        let mut m = model(&[0.5, 0.5, 0.3], 10);
        m.insert_pattern(&[0, 1], 0.4).unwrap();
        assert!((m.query(&[0, 1]) - 0.4).abs() <= 1e-6);
        assert!((m.query(&[0]) - 0.5).abs() <= 1e-6);
        assert_eq!(m.query(&[2]), 0.3);
        assert!((m.query(&[0, 1, 2]) - 0.4 * 0.3).abs() <= 1e-6);
        assert!(m.max_residual() <= 1e-6);
    }

    #[test]
    fn capacity_is_enforced() {
        let opts = FitOptions {
            max_factor_patterns: 1,
            ..FitOptions::default()
        };
        let mut m = GroupModel::from_frequencies(0, 10, vec![0.5; 3], opts);
        m.insert_pattern(&[0, 1], 0.4).unwrap();
        let err = m.insert_pattern(&[1, 2], 0.3).unwrap_err();
        assert!(matches!(err, GragraError::FactorCapacity { needed: 2, cap: 1 }));
        // the failed insertion leaves the model untouched
        assert_eq!(m.pattern_count(), 1);
        assert_eq!(m.independent_p(2), Some(0.5));
    }

    #[test]
    fn penalty_only_change_for_satisfied_pattern() {
        let ms = ModelSet::from_models(vec![model(&[0.5, 0.5], 8)]);
        let d = ms.delta_exact(&[0, 1], &[0.25]).unwrap();
        assert!((d + ms.penalty()).abs() < 1e-9);
    }

    #[test]
    fn delta_is_additive_over_groups() {
        let ms = ModelSet::from_models(vec![
            GroupModel::from_frequencies(0, 10, vec![0.5, 0.6], FitOptions::default()),
            GroupModel::from_frequencies(1, 20, vec![0.3, 0.4], FitOptions::default()),
        ]);
        let joint = ms.delta_exact(&[0, 1], &[0.45, 0.05]).unwrap();
        let g0 = ms.delta_partial_exact(0, &[0, 1], 0.45).unwrap();
        let g1 = ms.delta_partial_exact(1, &[0, 1], 0.05).unwrap();
        assert!((joint - (g0 + g1 + ms.penalty())).abs() < 1e-9);
    }

    #[test]
    fn merging_overlapping_patterns() {
        let mut m = model(&[0.6, 0.5, 0.4, 0.2], 20);
        m.insert_pattern(&[0, 1], 0.4).unwrap();
        m.insert_pattern(&[2, 3], 0.15).unwrap();
        assert_eq!(m.factors().count(), 2);
        m.insert_pattern(&[1, 2], 0.3).unwrap();
        assert_eq!(m.factors().count(), 1);
        assert_eq!(m.pattern_count(), 3);
        for (x, q) in [(&[0u32, 1][..], 0.4), (&[2, 3], 0.15), (&[1, 2], 0.3), (&[0], 0.6), (&[3], 0.2)] {
            assert!((m.query(x) - q).abs() <= 1e-6, "{x:?}");
        }
    }
}
