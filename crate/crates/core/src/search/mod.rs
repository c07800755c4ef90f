//! Greedy discovery of significant subgraph patterns and their group
//! associations.

mod heuristic;
mod pool;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GragraError, Result};
use crate::maxent::{FitOptions, ModelSet, PendingInsert};
use crate::model::{AssociationMatrix, EdgeKey, GraphGroupDataset, Pattern, SupportIndex};
use crate::stats::{vuong_significant, CriticalValues, SignificanceConfig};

pub use heuristic::{floor_pattern_p, gain_term, heuristic_h, heuristic_h_partial, PATTERN_P_FLOOR};
use heuristic::{heuristic_from_counts, placeable_heuristic};
use pool::Pool;

/// BIC must drop by more than this for the BIC variant to accept.
const BIC_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Vuong's test on the heuristic gain (jointly and per group).
    Test,
    /// Positive penalized gain only, no statistical test.
    Bic,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Test => "test",
            Variant::Bic => "bic",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = GragraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Variant::Test),
            "bic" => Ok(Variant::Bic),
            other => Err(GragraError::Config(format!("unknown variant '{other}' (expected test or bic)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub variant: Variant,
    pub significance: SignificanceConfig,
    /// Level at which an initial edge pair may still be grown when no
    /// candidate is significant. `None` disables the fallback.
    pub seed_alpha: Option<f64>,
    pub fit: FitOptions,
    /// Upper bound on accepted patterns; `None` runs until the pool empties.
    pub max_patterns: Option<usize>,
    /// Worker threads for candidate evaluation; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Echoed into results; the search itself is deterministic.
    pub seed: u64,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig {
            variant: Variant::Test,
            significance: SignificanceConfig::default(),
            seed_alpha: Some(1e-2),
            fit: FitOptions::default(),
            max_patterns: None,
            threads: None,
            seed: 0,
        }
    }
}

impl MineConfig {
    pub fn validate(&self) -> Result<()> {
        self.significance.validate()?;
        if let Some(s) = self.seed_alpha {
            if !(s > 0.0 && s < 1.0) {
                return Err(GragraError::Config(format!("seed alpha {s} outside (0, 1)")));
            }
        }
        let fit = &self.fit;
        if !(fit.tolerance > 0.0) || fit.max_sweeps == 0 {
            return Err(GragraError::Config("fit tolerance and sweep limit must be positive".into()));
        }
        if fit.max_factor_patterns == 0 || fit.max_factor_patterns > 24 {
            return Err(GragraError::Config(format!(
                "max factor patterns must be in 1..=24, got {}",
                fit.max_factor_patterns
            )));
        }
        if self.threads == Some(0) {
            return Err(GragraError::Config("thread count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Statistics recorded when a pattern is accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternDiagnostics {
    pub h: f64,
    pub h_per_group: Vec<f64>,
    pub p_value: f64,
    pub p_values: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Exact log-likelihood gain per group; `None` where not inserted.
    pub likelihood_gain: Vec<Option<f64>>,
    pub bic_before: f64,
    pub bic_after: f64,
    pub bic_delta: f64,
    pub fit_sweeps: usize,
    pub max_residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub initial_pairs: usize,
    pub retained_pairs: usize,
    pub evaluations: usize,
    pub grow_calls: usize,
    pub grow_steps: usize,
    pub seed_fallbacks: usize,
    pub rejected: usize,
    pub capacity_skips: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningResult {
    pub group_labels: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub universe_size: usize,
    pub patterns: Vec<Pattern>,
    pub association: AssociationMatrix,
    pub diagnostics: Vec<PatternDiagnostics>,
    pub baseline_bic: f64,
    pub final_bic: f64,
    pub warnings: Vec<String>,
    pub stats: SearchStats,
    pub config: MineConfig,
}

impl MiningResult {
    /// Patterns associated with more than one group.
    pub fn shared_count(&self) -> usize {
        (0..self.association.columns())
            .filter(|&j| self.association.column(j).iter().filter(|&&b| b).count() > 1)
            .count()
    }

    /// Union of the edges of all patterns associated with `group`.
    pub fn group_edges(&self, group: usize) -> std::collections::BTreeSet<EdgeKey> {
        self.patterns
            .iter()
            .enumerate()
            .filter(|(j, _)| self.association.get(group, *j))
            .flat_map(|(_, p)| p.edges().iter().copied())
            .collect()
    }
}

/// Per-group significance of a pattern: Vuong's test on `h_i` with the
/// group size as sample count (test variant), or `h_i > 0` (BIC variant).
pub fn assign_groups(index: &SupportIndex, models: &ModelSet, x: &[u32], cfg: &MineConfig) -> Vec<bool> {
    (0..index.k())
        .map(|i| {
            let hi = heuristic_h_partial(index, models, i, x);
            match cfg.variant {
                Variant::Test => vuong_significant(hi, x.len(), index.group_sizes()[i], &cfg.significance).significant,
                Variant::Bic => hi > 0.0,
            }
        })
        .collect()
}

/// All unordered pairs of distinct universe edges sharing a node, except
/// pairs on the same endpoints, with their heuristic gains.
pub fn initial_candidates(index: &SupportIndex, models: &ModelSet) -> Vec<(Vec<u32>, f64)> {
    pair_scores(index, models)
        .into_iter()
        .map(|(a, b, h)| (vec![a, b], h))
        .collect()
}

fn pair_scores(index: &SupportIndex, models: &ModelSet) -> Vec<(u32, u32, f64)> {
    (0..index.len() as u32)
        .into_par_iter()
        .flat_map_iter(|a| {
            let ea = index.edge(a);
            let (s, d) = ea.endpoints();
            let mut partners: Vec<u32> = index
                .incident(s)
                .iter()
                .chain(index.incident(d))
                .copied()
                .filter(|&b| b > a && index.edge(b).endpoints() != (s, d))
                .collect();
            partners.sort_unstable();
            partners.dedup();
            let occ = index.occurrence(a);
            let mut counts = Vec::new();
            partners
                .into_iter()
                .map(|b| {
                    index.group_counts_with(occ, b, &mut counts);
                    (a, b, heuristic_from_counts(index, models, &[a, b], &counts))
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Significance gates used while growing.
struct Gate {
    variant: Variant,
    alpha: f64,
    seed_alpha: Option<f64>,
    critical: CriticalValues,
}

impl Gate {
    fn significant(&self, h: f64, len: usize) -> bool {
        match self.variant {
            Variant::Test => self.critical.passes(h, len, self.alpha),
            Variant::Bic => h > 0.0,
        }
    }

    fn seed_eligible(&self, h: f64, len: usize) -> bool {
        match (self.variant, self.seed_alpha) {
            (Variant::Test, Some(a)) => self.critical.passes(h, len, a),
            _ => false,
        }
    }
}

enum Grown {
    Exhausted,
    NoSignificant,
    Found(u32),
}

struct Miner<'a> {
    index: &'a SupportIndex,
    models: ModelSet,
    cfg: &'a MineConfig,
    gate: Gate,
    pool: Pool,
    epoch: u64,
    constraints: usize,
    patterns: Vec<Pattern>,
    association: AssociationMatrix,
    diagnostics: Vec<PatternDiagnostics>,
    warnings: Vec<String>,
    stats: SearchStats,
}

impl<'a> Miner<'a> {
    fn new(index: &'a SupportIndex, cfg: &'a MineConfig) -> Self {
        let models = ModelSet::baseline(index, cfg.fit);
        let alpha = cfg.significance.alpha_for(index.total_graphs());
        Miner {
            index,
            models,
            cfg,
            gate: Gate {
                variant: cfg.variant,
                alpha,
                seed_alpha: cfg.seed_alpha.map(|s| s.max(alpha)),
                critical: CriticalValues::new(),
            },
            pool: Pool::new(index.len()),
            epoch: 0,
            constraints: index.len(),
            patterns: Vec::new(),
            association: AssociationMatrix::new(index.k()),
            diagnostics: Vec::new(),
            warnings: Vec::new(),
            stats: SearchStats::default(),
        }
    }

    fn seed_pool(&mut self) {
        let pairs = pair_scores(self.index, &self.models);
        self.stats.initial_pairs = pairs.len();
        self.stats.evaluations += pairs.len();
        for (a, b, h) in pairs {
            let significant = self.gate.significant(h, 2);
            let seed_ok = self.gate.seed_eligible(h, 2);
            if significant || seed_ok {
                self.pool.insert(vec![a, b], h, true, significant, seed_ok);
            }
        }
        self.stats.retained_pairs = self.pool.len();
    }

    fn run(mut self) -> Result<MiningResult> {
        let baseline_bic = self.models.bic(self.constraints);
        self.seed_pool();
        loop {
            if self.cfg.max_patterns.is_some_and(|m| self.patterns.len() >= m) {
                break;
            }
            match self.grow() {
                Grown::Exhausted => break,
                Grown::NoSignificant => continue,
                Grown::Found(id) => self.consider(id)?,
            }
        }
        let final_bic = self.models.bic(self.constraints);
        Ok(MiningResult {
            group_labels: Vec::new(),
            group_sizes: self.index.group_sizes().to_vec(),
            universe_size: self.index.len(),
            patterns: self.patterns,
            association: self.association,
            diagnostics: self.diagnostics,
            baseline_bic,
            final_bic,
            warnings: self.warnings,
            stats: self.stats,
            config: self.cfg.clone(),
        })
    }

    fn grow(&mut self) -> Grown {
        let mut x = match self.pool.best_significant() {
            Some(id) => id,
            None => match self.pool.pop_seed() {
                Some(id) => {
                    self.stats.seed_fallbacks += 1;
                    id
                }
                None => return Grown::Exhausted,
            },
        };
        self.stats.grow_calls += 1;
        loop {
            self.expand(x);
            let hx = self.pool.get(x).h;
            if !self.pool.get(x).significant {
                self.pool.retire(x);
            }
            let Some(best) = self.pool.best_significant() else {
                return Grown::NoSignificant;
            };
            if self.pool.get(best).h > hx {
                self.stats.grow_steps += 1;
                x = best;
                continue;
            }
            self.pool.retire(best);
            return Grown::Found(best);
        }
    }

    /// Adds every significant single-edge expansion of candidate `id` that
    /// stays within `γ` nodes.
    fn expand(&mut self, id: u32) {
        if self.pool.get(id).expanded_epoch == Some(self.epoch) {
            return;
        }
        self.pool.mark_expanded(id, self.epoch);
        let index = self.index;
        let x: Vec<u32> = self.pool.get(id).edges.to_vec();
        let keys = index.keys_of(&x);
        let mut nodes: Vec<u32> = keys.iter().flat_map(|e| [e.src, e.dst]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut pairs: Vec<(u32, u32)> = keys.iter().map(EdgeKey::endpoints).collect();
        pairs.sort_unstable();
        let gamma = index.largest_component();
        let mut extra: Vec<u32> = nodes
            .iter()
            .flat_map(|&v| index.incident(v).iter().copied())
            .filter(|e| x.binary_search(e).is_err())
            .filter(|&e| {
                let k = index.edge(e);
                if pairs.binary_search(&k.endpoints()).is_ok() {
                    return false;
                }
                let fresh = [k.src, k.dst]
                    .iter()
                    .filter(|v| nodes.binary_search(v).is_err())
                    .count()
                    .min(if k.is_loop() { 1 } else { 2 });
                nodes.len() + fresh <= gamma
            })
            .collect();
        extra.sort_unstable();
        extra.dedup();
        let children: Vec<Vec<u32>> = extra
            .into_iter()
            .map(|e| {
                let mut c = x.clone();
                let pos = c.binary_search(&e).unwrap_err();
                c.insert(pos, e);
                c
            })
            .filter(|c| !self.pool.blocks(c))
            .collect();
        if children.is_empty() {
            return;
        }
        let bits = index.support_bits(&x);
        let models = &self.models;
        let scores: Vec<Option<f64>> = children
            .par_iter()
            .map_init(Vec::new, |counts, child| {
                let added = *child.iter().find(|e| x.binary_search(e).is_err()).unwrap();
                index.group_counts_with(&bits, added, counts);
                let (h, open) = placeable_heuristic(index, models, child, counts);
                open.then_some(h)
            })
            .collect();
        self.stats.evaluations += children.len();
        for (child, h) in children.into_iter().zip(scores) {
            let len = child.len();
            if let Some(h) = h.filter(|&h| self.gate.significant(h, len)) {
                self.pool.insert(child, h, false, true, false);
            }
        }
    }

    /// Tests a grown pattern per group and, if accepted, inserts it into
    /// the models of its associated groups.
    fn consider(&mut self, id: u32) -> Result<()> {
        let index = self.index;
        let x: Vec<u32> = self.pool.get(id).edges.to_vec();
        let k = index.k();
        let sizes = index.group_sizes();
        let counts = index.support(&x);
        let penalty = self.models.penalty();
        let q: Vec<f64> = counts.iter().zip(sizes).map(|(&s, &c)| s as f64 / c as f64).collect();
        let p: Vec<f64> = self.models.models.iter().map(|m| floor_pattern_p(m.query(&x))).collect();
        let h_per_group: Vec<f64> = (0..k).map(|i| gain_term(counts[i], sizes[i], p[i]) - penalty).collect();
        let h = (0..k).map(|i| gain_term(counts[i], sizes[i], p[i])).sum::<f64>() - penalty;
        let sig = &self.cfg.significance;
        let p_value = vuong_significant(h, x.len(), index.total_graphs(), sig).p_value;
        let tests: Vec<_> = (0..k).map(|i| vuong_significant(h_per_group[i], x.len(), sizes[i], sig)).collect();
        let assigned: Vec<bool> = match self.cfg.variant {
            Variant::Test => tests.iter().map(|t| t.significant).collect(),
            Variant::Bic => h_per_group.iter().map(|&hi| hi > 0.0).collect(),
        };
        if (self.cfg.variant == Variant::Bic && !(h > 0.0)) || !assigned.iter().any(|&a| a) {
            self.stats.rejected += 1;
            return Ok(());
        }

        let prepared: Vec<Option<Result<PendingInsert>>> = (0..k)
            .into_par_iter()
            .map(|i| assigned[i].then(|| self.models.models[i].prepare_insert(&x, q[i])))
            .collect();
        let mut pending = Vec::new();
        let mut likelihood_gain = vec![None; k];
        for (i, outcome) in prepared.into_iter().enumerate() {
            match outcome {
                None => {}
                Some(Ok(pi)) => {
                    likelihood_gain[i] = Some(pi.log_likelihood_gain());
                    pending.push(pi);
                }
                Some(Err(e @ (GragraError::FactorCapacity { .. } | GragraError::NonConvergence { .. } | GragraError::Numerical(_)))) => {
                    self.stats.capacity_skips += 1;
                    self.warnings.push(format!(
                        "skipped insertion of {} into group {}: {e}",
                        format_edges(&index.keys_of(&x)),
                        i
                    ));
                }
                Some(Err(e)) => return Err(e),
            }
        }
        if pending.is_empty() {
            self.stats.rejected += 1;
            return Ok(());
        }
        let gain: f64 = likelihood_gain.iter().flatten().sum();
        let predicted_delta = penalty - gain;
        if self.cfg.variant == Variant::Bic && !(predicted_delta < -BIC_MARGIN) {
            self.stats.rejected += 1;
            return Ok(());
        }

        let bic_before = self.models.bic(self.constraints);
        let mut column = vec![false; k];
        let mut touched = Vec::new();
        let mut sweeps = 0;
        for pi in pending {
            let g = pi.group();
            column[g] = true;
            sweeps += pi.sweeps();
            touched.extend(self.models.models[g].commit(pi));
        }
        touched.sort_unstable();
        touched.dedup();
        self.constraints += 1;
        self.epoch += 1;
        let bic_after = self.models.bic(self.constraints);
        let max_residual = self.models.models.iter().map(|m| m.max_residual()).fold(0.0, f64::max);
        let pattern = Pattern::new(index.keys_of(&x))?;
        self.association.push_column(&column)?;
        self.patterns.push(pattern);
        self.diagnostics.push(PatternDiagnostics {
            h,
            h_per_group,
            p_value,
            p_values: tests.iter().map(|t| t.p_value).collect(),
            q,
            p,
            likelihood_gain,
            bic_before,
            bic_after,
            bic_delta: bic_after - bic_before,
            fit_sweeps: sweeps,
            max_residual,
        });
        self.refresh(&touched);
        Ok(())
    }

    /// Re-scores live candidates whose expectations may have changed and
    /// drops those that no group can take any more.
    fn refresh(&mut self, touched: &[u32]) {
        let ids = self.pool.touching(touched);
        let index = self.index;
        let models = &self.models;
        let pool = &self.pool;
        let scores: Vec<Option<f64>> = ids
            .par_iter()
            .map(|&id| {
                let x = &pool.get(id).edges;
                let counts = index.support(x);
                let (h, open) = placeable_heuristic(index, models, x, &counts);
                open.then_some(h)
            })
            .collect();
        self.stats.evaluations += ids.len();
        for (id, h) in ids.into_iter().zip(scores) {
            let Some(h) = h else {
                self.pool.kill(id);
                continue;
            };
            let (seed, len) = {
                let c = self.pool.get(id);
                (c.seed, c.edges.len())
            };
            let significant = self.gate.significant(h, len);
            let seed_ok = seed && self.gate.seed_eligible(h, len);
            if significant || seed_ok {
                self.pool.update(id, h, significant, seed_ok);
            } else {
                self.pool.kill(id);
            }
        }
        self.pool.compact_edge_index(touched);
    }
}

/// Edge list for warnings, shortened after a few entries.
fn format_edges(edges: &[EdgeKey]) -> String {
    const SHOWN: usize = 6;
    let parts: Vec<String> = edges.iter().take(SHOWN).map(|e| e.to_string()).collect();
    if edges.len() > SHOWN {
        format!("{{{}, ... ({} edges)}}", parts.join(", "), edges.len())
    } else {
        format!("{{{}}}", parts.join(", "))
    }
}

/// Mines patterns from a sparsified dataset.
pub fn mine(dataset: &GraphGroupDataset, cfg: &MineConfig) -> Result<MiningResult> {
    cfg.validate()?;
    if dataset.universe.is_empty() {
        return Err(GragraError::EmptyUniverse {
            threshold: "n/a".into(),
        });
    }
    let run = || {
        let index = SupportIndex::build(dataset);
        let mut result = Miner::new(&index, cfg).run()?;
        result.group_labels = dataset.group_labels.clone();
        Ok(result)
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| GragraError::Config(format!("cannot start thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

