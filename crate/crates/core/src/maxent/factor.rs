//! A factor: a group of overlapping pattern constraints whose edges are
//! modeled jointly.
//!
//! With edge odds `θ_e` and pattern coefficients `θ_j`, the factor density
//! over its edge union `U` is
//!
//! ```text
//! f(x) ∝ ∏_e θ_e^{x_e} ∏_j θ_j^{[X_j ⊆ x]}
//! ```
//!
//! Writing `θ_j^{[X_j ⊆ x]} = 1 + (θ_j - 1)[X_j ⊆ x]` and expanding the
//! product over pattern subsets `A` gives, after dividing by `∏_e (1 + θ_e)`,
//!
//! ```text
//! Z' = Σ_A ∏_{j∈A} (θ_j - 1) · ∏_{e ∈ U_A} p_e,   p_e = θ_e / (1 + θ_e)
//! ```
//!
//! with `U_A` the union of the patterns in `A`. Edges contained in exactly
//! the same patterns form an atom; `U_A` is a union of atoms, so every term
//! only needs the atom products `π_a = ∏_{e∈a} p_e`. Marginals follow by
//! forcing the queried edges into every union. The terms carry signs; they
//! are built in log space and stored scaled by their largest magnitude.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{GragraError, Result};

use super::{clamp_prob, FitOptions};

const EDGE_LOGIT_BOUND: f64 = 34.5;
const PATTERN_LOG_BOUND: f64 = 5000.0;
const GAP_FLOOR: f64 = 1e-3;
const TINY_EXPECTATION: f64 = 1e-12;
const SLOW_PROGRESS: f64 = 0.5;
const NEWTON_BUDGET: f64 = 1e9;
const NEWTON_MAX_DIM: usize = 1200;
const NEWTON_MAX_FAILURES: usize = 2;
const LINE_SEARCH_STEPS: usize = 30;
const INNER_TOL: f64 = 1e-10;
const INNER_PASSES: usize = 50;
const PROJECTION_MIN_PATTERNS: usize = 8;
const PROJECTION_MAX_BITS: u32 = 12;
const PROJECTION_CACHE_FLOATS: usize = 1 << 22;
const MAX_PATTERNS: usize = 30;

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Compensated::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

fn max_live(sign: &[i8], log_mag: &[f64]) -> f64 {
    sign.iter()
        .zip(log_mag)
        .filter(|(&s, _)| s != 0)
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `ln Σ sign·exp(log_mag)`, or `None` if the sum is not positive.
fn signed_log_sum(sign: &[i8], log_mag: &[f64]) -> Option<f64> {
    let scale = max_live(sign, log_mag);
    if !scale.is_finite() {
        return None;
    }
    let sum = compensated_sum(
        sign.iter()
            .zip(log_mag)
            .filter(|(&s, _)| s != 0)
            .map(|(&s, &l)| s as f64 * (l - scale).exp()),
    );
    (sum > 0.0).then(|| sum.ln() + scale)
}

/// Sign and log magnitude of `θ - 1` from `ln θ`.
fn log_gap(log_theta: f64) -> (i8, f64) {
    if log_theta > 0.0 {
        (1, log_theta + (-(-log_theta).exp_m1()).ln())
    } else if log_theta < 0.0 {
        (-1, (-log_theta.exp_m1()).ln())
    } else {
        (0, f64::NEG_INFINITY)
    }
}

/// Spreads the low bits of `idx` over the set bits of `mask`.
#[inline]
fn deposit(mut idx: usize, mut mask: u32) -> u32 {
    let mut out = 0;
    while mask != 0 && idx != 0 {
        let bit = mask & mask.wrapping_neg();
        if idx & 1 == 1 {
            out |= bit;
        }
        idx >>= 1;
        mask &= mask - 1;
    }
    out
}

#[derive(Clone, Debug)]
pub(crate) struct FactorPattern {
    pub(crate) edges: Vec<u32>,
    locals: Vec<u32>,
    atoms: Vec<u32>,
    pub(crate) log_theta: f64,
    pub(crate) target: f64,
}

#[derive(Clone, Debug)]
struct Atom {
    sig: u32,
    edges: Vec<u32>,
    log_pi: f64,
}

/// Term sums grouped by their intersection with a pattern subset `T`,
/// cached per `T` for repeated queries.
#[derive(Debug, Default)]
struct Projections(RwLock<ProjectionTables>);

#[derive(Debug, Default)]
struct ProjectionTables {
    tables: HashMap<u32, Arc<Vec<f64>>>,
    floats: usize,
}

impl Clone for Projections {
    fn clone(&self) -> Self {
        Projections::default()
    }
}

impl Projections {
    fn clear(&mut self) {
        let inner = self.0.get_mut().unwrap_or_else(|e| e.into_inner());
        inner.tables.clear();
        inner.floats = 0;
    }
}

/// Initial state of one factor edge.
#[derive(Clone, Copy, Debug)]
pub struct FactorEdge {
    pub id: u32,
    pub target: f64,
    pub p: f64,
}

/// Initial state of one pattern constraint.
#[derive(Clone, Debug)]
pub struct FactorConstraint {
    pub edges: Vec<u32>,
    pub target: f64,
    /// `ln θ_j`; zero leaves the pattern without effect.
    pub log_theta: f64,
}

#[derive(Clone, Debug)]
pub struct Factor {
    edges: Vec<u32>,
    edge_target: Vec<f64>,
    edge_p: Vec<f64>,
    edge_atom: Vec<u32>,
    atoms: Vec<Atom>,
    patterns: Vec<FactorPattern>,
    terms: Vec<f64>,
    z: f64,
    log_scale: f64,
    edge_marginal: Vec<f64>,
    pattern_marginal: Vec<f64>,
    projections: Projections,
}

impl Factor {
    /// Builds a factor over the given edges and pattern constraints. Edge
    /// ids must be unique; every pattern edge must be one of `edges`.
    pub fn new(edges: Vec<FactorEdge>, constraints: Vec<FactorConstraint>) -> Result<Self> {
        let mut edges = edges;
        edges.sort_by_key(|e| e.id);
        if edges.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(GragraError::Numerical("duplicate factor edge".into()));
        }
        if constraints.len() > MAX_PATTERNS {
            return Err(GragraError::FactorCapacity {
                needed: constraints.len(),
                cap: MAX_PATTERNS,
            });
        }
        let ids: Vec<u32> = edges.iter().map(|e| e.id).collect();
        let mut sigs = vec![0u32; ids.len()];
        let mut patterns = Vec::with_capacity(constraints.len());
        for (j, c) in constraints.into_iter().enumerate() {
            let mut global = c.edges.clone();
            global.sort_unstable();
            global.dedup();
            let mut locals = Vec::with_capacity(global.len());
            for e in &global {
                let l = ids.binary_search(e).map_err(|_| GragraError::OutsideUniverse)?;
                sigs[l] |= 1 << j;
                locals.push(l as u32);
            }
            patterns.push(FactorPattern {
                edges: global,
                locals,
                atoms: Vec::new(),
                log_theta: c.log_theta,
                target: c.target,
            });
        }
        let mut atoms: Vec<Atom> = Vec::new();
        let mut by_sig: HashMap<u32, u32> = HashMap::new();
        let mut edge_atom = Vec::with_capacity(ids.len());
        for (l, &sig) in sigs.iter().enumerate() {
            let a = *by_sig.entry(sig).or_insert_with(|| {
                atoms.push(Atom {
                    sig,
                    edges: Vec::new(),
                    log_pi: 0.0,
                });
                atoms.len() as u32 - 1
            });
            atoms[a as usize].edges.push(l as u32);
            edge_atom.push(a);
        }
        for (j, p) in patterns.iter_mut().enumerate() {
            p.atoms = (0..atoms.len() as u32).filter(|&a| atoms[a as usize].sig >> j & 1 == 1).collect();
        }
        let mut factor = Factor {
            edge_target: edges.iter().map(|e| e.target).collect(),
            edge_p: edges.iter().map(|e| e.p.clamp(1e-15, 1.0 - 1e-15)).collect(),
            edges: ids,
            edge_atom,
            atoms,
            patterns,
            terms: Vec::new(),
            z: 1.0,
            log_scale: 0.0,
            edge_marginal: Vec::new(),
            pattern_marginal: Vec::new(),
            projections: Projections::default(),
        };
        factor.rebuild_terms()?;
        factor.refresh_marginals();
        Ok(factor)
    }

    pub fn edges(&self) -> &[u32] {
        &self.edges
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    /// Number of distinct edge classes by pattern membership.
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn pattern_edges(&self, j: usize) -> &[u32] {
        &self.patterns[j].edges
    }

    pub fn pattern_log_theta(&self, j: usize) -> f64 {
        self.patterns[j].log_theta
    }

    pub(crate) fn patterns(&self) -> &[FactorPattern] {
        &self.patterns
    }

    pub fn edge_p(&self, local: usize) -> f64 {
        self.edge_p[local]
    }

    pub(crate) fn edge_target(&self, local: usize) -> f64 {
        self.edge_target[local]
    }

    pub fn local_index(&self, id: u32) -> Option<usize> {
        self.edges.binary_search(&id).ok()
    }

    /// `ln Z'`, the log normalizer relative to the independent-edge product.
    pub fn log_z(&self) -> f64 {
        self.z.ln() + self.log_scale
    }

    fn full_mask(&self) -> u32 {
        ((1u64 << self.patterns.len()) - 1) as u32
    }

    /// Sign and log magnitude of every term.
    fn log_terms(&self) -> (Vec<i8>, Vec<f64>) {
        let t = self.patterns.len();
        let n = 1usize << t;
        let mut log_mag = vec![0.0f64; n];
        let mut sign = vec![0i8; n];
        sign[0] = 1;
        for a in 1..n {
            let j = a.trailing_zeros() as usize;
            let prev = a & (a - 1);
            let (d_sign, d_log) = log_gap(self.patterns[j].log_theta);
            if sign[prev] == 0 || d_sign == 0 {
                continue;
            }
            let add: f64 = self.patterns[j]
                .atoms
                .iter()
                .map(|&x| &self.atoms[x as usize])
                .filter(|atom| atom.sig as usize & prev == 0)
                .map(|atom| atom.log_pi)
                .sum();
            sign[a] = d_sign * sign[prev];
            log_mag[a] = log_mag[prev] + d_log + add;
        }
        (sign, log_mag)
    }

    /// Recomputes atom products, all scaled terms and `Z'`.
    fn rebuild_terms(&mut self) -> Result<()> {
        for atom in &mut self.atoms {
            atom.log_pi = compensated_sum(atom.edges.iter().map(|&l| self.edge_p[l as usize].ln()));
        }
        let (sign, log_mag) = self.log_terms();
        let scale = max_live(&sign, &log_mag);
        self.terms = sign
            .iter()
            .zip(&log_mag)
            .map(|(&s, &l)| if s == 0 { 0.0 } else { s as f64 * (l - scale).exp() })
            .collect();
        self.log_scale = scale;
        self.z = compensated_sum(self.terms.iter().copied());
        self.projections.clear();
        self.check_z()
    }

    /// `ln p(X_j)` evaluated entirely in log space, for expectations too
    /// small to survive the scaled terms.
    fn log_pattern_prob(&self, j: usize) -> Option<f64> {
        let (sign, log_mag) = self.log_terms();
        let atoms = &self.patterns[j].atoms;
        let forced: Vec<f64> = log_mag
            .iter()
            .enumerate()
            .map(|(a, &l)| {
                let missing: f64 = atoms
                    .iter()
                    .map(|&x| &self.atoms[x as usize])
                    .filter(|atom| atom.sig as usize & a == 0)
                    .map(|atom| atom.log_pi)
                    .sum();
                l + missing
            })
            .collect();
        Some(signed_log_sum(&sign, &forced)? - signed_log_sum(&sign, &log_mag)?)
    }

    fn check_z(&self) -> Result<()> {
        if !(self.z > 0.0) || !self.z.is_finite() {
            return Err(GragraError::Numerical(format!(
                "factor normalizer lost positivity (scaled Z = {:e})",
                self.z
            )));
        }
        Ok(())
    }

    /// Multiplies every term whose pattern set meets `sig` by `r`.
    fn scale_terms(&mut self, sig: u32, r: f64) -> Result<()> {
        if !(r.is_finite() && r > 1e-150 && r < 1e150) {
            return self.rebuild_terms();
        }
        for (a, term) in self.terms.iter_mut().enumerate() {
            if a as u32 & sig != 0 {
                *term *= r;
            }
        }
        self.z = compensated_sum(self.terms.iter().copied());
        self.projections.clear();
        if !(self.z > 0.0) || !self.z.is_finite() {
            self.rebuild_terms()?;
        }
        Ok(())
    }

    /// Sums of the terms meeting and missing `sig`.
    fn split_by(&self, sig: u32) -> (f64, f64) {
        let mut hit = Compensated::default();
        let mut miss = Compensated::default();
        for (a, &term) in self.terms.iter().enumerate() {
            if a as u32 & sig != 0 {
                hit.add(term);
            } else {
                miss.add(term);
            }
        }
        (hit.value(), miss.value())
    }

    /// `Σ_A term_A ∏_{(sig, w) : sig ∩ A = ∅} w`: scaled mass of the event
    /// whose uncovered atoms contribute the given weights.
    fn weighted_scan(&self, parts: &[(u32, f64)]) -> f64 {
        let mut acc = Compensated::default();
        for (a, &term) in self.terms.iter().enumerate() {
            if term == 0.0 {
                continue;
            }
            let mut prod = term;
            for &(sig, w) in parts {
                if a as u32 & sig == 0 {
                    prod *= w;
                }
            }
            acc.add(prod);
        }
        acc.value()
    }

    fn projection(&self, mask: u32) -> Arc<Vec<f64>> {
        if let Some(table) = self.projections.0.read().unwrap_or_else(|e| e.into_inner()).tables.get(&mask) {
            return table.clone();
        }
        let free = self.full_mask() & !mask;
        let table: Vec<f64> = (0..1usize << mask.count_ones())
            .map(|idx| {
                let base = deposit(idx, mask);
                let mut acc = Compensated::default();
                let mut c = 0u32;
                loop {
                    acc.add(self.terms[(base | c) as usize]);
                    c = c.wrapping_sub(free) & free;
                    if c == 0 {
                        break;
                    }
                }
                acc.value()
            })
            .collect();
        let table = Arc::new(table);
        let mut cache = self.projections.0.write().unwrap_or_else(|e| e.into_inner());
        if cache.floats + table.len() > PROJECTION_CACHE_FLOATS {
            cache.tables.clear();
            cache.floats = 0;
        }
        cache.floats += table.len();
        cache.tables.insert(mask, table.clone());
        table
    }

    /// Probability of the event described by `parts` (see `weighted_scan`),
    /// through the projection cache when the factor is large.
    fn expect_parts(&self, parts: &[(u32, f64)]) -> f64 {
        let mask = parts.iter().fold(0u32, |m, &(sig, _)| m | sig);
        let sum = if self.patterns.len() >= PROJECTION_MIN_PATTERNS && mask.count_ones() <= PROJECTION_MAX_BITS {
            let table = self.projection(mask);
            let mut acc = Compensated::default();
            for (idx, &v) in table.iter().enumerate() {
                let b = deposit(idx, mask);
                let mut prod = v;
                for &(sig, w) in parts {
                    if b & sig == 0 {
                        prod *= w;
                    }
                }
                acc.add(prod);
            }
            acc.value()
        } else {
            self.weighted_scan(parts)
        };
        sum / self.z
    }

    /// Probability that every listed atom is complete.
    fn expect_atoms(&self, atoms: &[u32]) -> f64 {
        let parts: Vec<(u32, f64)> = atoms
            .iter()
            .map(|&a| {
                let atom = &self.atoms[a as usize];
                (atom.sig, atom.log_pi.exp())
            })
            .collect();
        self.expect_parts(&parts)
    }

    /// Probability that every listed local edge is present.
    fn expect_locals(&self, locals: &[u32]) -> f64 {
        let mut parts: Vec<(u32, u32, f64)> = Vec::with_capacity(locals.len());
        for &l in locals {
            let a = self.edge_atom[l as usize];
            let p = self.edge_p[l as usize];
            match parts.iter_mut().find(|x| x.0 == a) {
                Some(x) => x.2 *= p,
                None => parts.push((a, self.atoms[a as usize].sig, p)),
            }
        }
        let parts: Vec<(u32, f64)> = parts.into_iter().map(|(_, sig, w)| (sig, w)).collect();
        self.expect_parts(&parts)
    }

    /// Recomputes cached marginals; returns the largest constraint residual.
    fn refresh_marginals(&mut self) -> f64 {
        let mut edge_marginal = vec![0.0; self.edges.len()];
        for atom in &self.atoms {
            let (hit, _) = self.split_by(atom.sig);
            let share = hit / self.z;
            for &l in &atom.edges {
                let p = self.edge_p[l as usize];
                edge_marginal[l as usize] = p + (1.0 - p) * share;
            }
        }
        self.edge_marginal = edge_marginal;
        self.pattern_marginal = (0..self.patterns.len())
            .map(|j| {
                let parts: Vec<(u32, f64)> = self.patterns[j]
                    .atoms
                    .iter()
                    .map(|&a| (self.atoms[a as usize].sig, self.atoms[a as usize].log_pi.exp()))
                    .collect();
                self.weighted_scan(&parts) / self.z
            })
            .collect();
        self.residual()
    }

    /// Largest `|p(c) - q(c)|` over all constraints, from cached marginals.
    pub fn residual(&self) -> f64 {
        let edges = self
            .edge_marginal
            .iter()
            .zip(&self.edge_target)
            .map(|(p, q)| (p - clamp_prob(*q)).abs());
        let pats = self
            .pattern_marginal
            .iter()
            .zip(&self.patterns)
            .map(|(p, c)| (p - clamp_prob(c.target)).abs());
        edges.chain(pats).fold(0.0, f64::max)
    }

    /// Fits the edges of one atom exactly with the patterns held fixed. The
    /// edges interact only through the atom product, so the block reduces
    /// to odds updates against a closed-form marginal.
    fn fit_atom(&mut self, a: usize) -> Result<()> {
        let sig = self.atoms[a].sig;
        let (hit, miss) = self.split_by(sig);
        let mut shift = 0.0f64;
        for _ in 0..INNER_PASSES {
            let mut worst = 0.0f64;
            for i in 0..self.atoms[a].edges.len() {
                let l = self.atoms[a].edges[i] as usize;
                let covered = hit * shift.exp();
                let total = miss + covered;
                if !(total > 0.0) || !total.is_finite() {
                    break;
                }
                let old = self.edge_p[l];
                let p = clamp_prob(old + (1.0 - old) * covered / total);
                let q = clamp_prob(self.edge_target[l]);
                worst = worst.max((p - q).abs());
                let ratio = q * (1.0 - p) / (p * (1.0 - q));
                let updated = (old * ratio / (1.0 - old + old * ratio)).clamp(1e-15, 1.0 - 1e-15);
                shift += updated.ln() - old.ln();
                self.edge_p[l] = updated;
            }
            if worst < INNER_TOL {
                break;
            }
        }
        if shift != 0.0 {
            self.atoms[a].log_pi += shift;
            self.scale_terms(sig, shift.exp())?;
        }
        Ok(())
    }

    /// One iterative-scaling sweep: every atom block, then every pattern
    /// with the odds ratio `q(1-p) / (p(1-q))` against its fresh
    /// expectation. Returns the post-sweep residual.
    pub fn sweep(&mut self) -> Result<f64> {
        for a in 0..self.atoms.len() {
            self.fit_atom(a)?;
        }
        for j in 0..self.patterns.len() {
            let raw = self.expect_atoms(&self.patterns[j].atoms.clone());
            let q = clamp_prob(self.patterns[j].target);
            let log_p = match (raw < TINY_EXPECTATION).then(|| self.log_pattern_prob(j)).flatten() {
                Some(lp) => lp,
                None => clamp_prob(raw).ln(),
            };
            let p = log_p.exp();
            let step = q.ln() + (-p).ln_1p() - log_p - (-q).ln_1p();
            let old = self.patterns[j].log_theta;
            let updated = old + step;
            self.patterns[j].log_theta = updated;
            let (s_old, l_old) = log_gap(old);
            let (s_new, l_new) = log_gap(updated);
            if s_old != 0 && s_new != 0 && l_old > GAP_FLOOR.ln() {
                self.scale_terms(1 << j, (s_old * s_new) as f64 * (l_new - l_old).exp())?;
            } else {
                self.rebuild_terms()?;
            }
        }
        self.rebuild_terms()?;
        Ok(self.refresh_marginals())
    }

    /// Log-odds of the edge coefficients followed by the log pattern coefficients.
    fn params(&self) -> Vec<f64> {
        self.edge_p
            .iter()
            .map(|p| (p / (1.0 - p)).ln())
            .chain(self.patterns.iter().map(|c| c.log_theta))
            .collect()
    }

    /// Installs parameters and rebuilds the terms; cached marginals are
    /// left stale.
    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let m = self.edge_p.len();
        for (p, &phi) in self.edge_p.iter_mut().zip(params) {
            let phi = phi.clamp(-EDGE_LOGIT_BOUND, EDGE_LOGIT_BOUND);
            *p = 1.0 / (1.0 + (-phi).exp());
        }
        for (c, &phi) in self.patterns.iter_mut().zip(&params[m..]) {
            c.log_theta = phi.clamp(-PATTERN_LOG_BOUND, PATTERN_LOG_BOUND);
        }
        self.rebuild_terms()
    }

    /// Concave dual objective (per-graph log-likelihood at the clamped targets).
    fn dual(&self) -> f64 {
        let edges = compensated_sum(self.edge_p.iter().zip(&self.edge_target).map(|(&p, &q)| {
            let q = clamp_prob(q);
            q * p.ln() + (1.0 - q) * (1.0 - p).ln()
        }));
        let pats = compensated_sum(self.patterns.iter().map(|c| clamp_prob(c.target) * c.log_theta));
        edges + pats - self.log_z()
    }

    fn newton_cost(&self) -> f64 {
        let units = (self.atoms.len() + self.patterns.len()) as f64;
        units * units * (1u64 << self.patterns.len()) as f64
    }

    /// Covariance of the sufficient statistics (edge indicators, then
    /// pattern indicators). Edges of one atom are exchangeable given whether
    /// the atom is complete, so only atom- and pattern-level joint
    /// probabilities need the term expansion.
    fn covariance(&self) -> DMatrix<f64> {
        let m = self.edges.len();
        let t = self.patterns.len();
        let na = self.atoms.len();
        let full: Vec<f64> = (0..na as u32).map(|a| self.expect_atoms(&[a])).collect();
        let mut pair = DMatrix::<f64>::zeros(na, na);
        for a in 0..na {
            pair[(a, a)] = full[a];
            for b in a + 1..na {
                let v = self.expect_atoms(&[a as u32, b as u32]);
                pair[(a, b)] = v;
                pair[(b, a)] = v;
            }
        }
        let with_pattern = |atoms: &[u32], extra: &[u32]| -> f64 {
            let mut all = atoms.to_vec();
            all.extend_from_slice(extra);
            all.sort_unstable();
            all.dedup();
            self.expect_atoms(&all)
        };
        let mut atom_pat = DMatrix::<f64>::zeros(na, t);
        for a in 0..na {
            for j in 0..t {
                atom_pat[(a, j)] = if self.atoms[a].sig >> j & 1 == 1 {
                    self.pattern_marginal[j]
                } else {
                    with_pattern(&self.patterns[j].atoms, &[a as u32])
                };
            }
        }
        let mut pat_pat = DMatrix::<f64>::zeros(t, t);
        for i in 0..t {
            pat_pat[(i, i)] = self.pattern_marginal[i];
            for j in i + 1..t {
                let v = with_pattern(&self.patterns[i].atoms, &self.patterns[j].atoms);
                pat_pat[(i, j)] = v;
                pat_pat[(j, i)] = v;
            }
        }
        // Probability that an edge is present while its atom is incomplete,
        // relative to the incomplete mass.
        let rest = |l: usize| -> f64 {
            let atom = &self.atoms[self.edge_atom[l] as usize];
            let gap = -atom.log_pi.exp_m1();
            if atom.edges.len() == 1 || gap <= 0.0 {
                0.0
            } else {
                ((self.edge_p[l] - atom.log_pi.exp()) / gap).clamp(0.0, 1.0)
            }
        };
        let v: Vec<f64> = (0..m).map(rest).collect();
        let n = m + t;
        let mean: Vec<f64> = self.edge_marginal.iter().chain(&self.pattern_marginal).copied().collect();
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for e in 0..m {
            let a = self.edge_atom[e] as usize;
            for f in e..m {
                let b = self.edge_atom[f] as usize;
                let joint = if e == f {
                    mean[e]
                } else if a == b {
                    let atom = &self.atoms[a];
                    let gap = -atom.log_pi.exp_m1();
                    let both = if gap > 0.0 {
                        ((self.edge_p[e] * self.edge_p[f] - atom.log_pi.exp()) / gap).clamp(0.0, 1.0)
                    } else {
                        1.0
                    };
                    full[a] + (1.0 - full[a]) * both
                } else {
                    v[e] * v[f] + v[e] * (1.0 - v[f]) * full[b] + v[f] * (1.0 - v[e]) * full[a]
                        + (1.0 - v[e]) * (1.0 - v[f]) * pair[(a, b)]
                };
                let c = joint - mean[e] * mean[f];
                cov[(e, f)] = c;
                cov[(f, e)] = c;
            }
            for j in 0..t {
                let joint = if self.atoms[a].sig >> j & 1 == 1 {
                    self.pattern_marginal[j]
                } else {
                    v[e] * self.pattern_marginal[j] + (1.0 - v[e]) * atom_pat[(a, j)]
                };
                let c = joint - mean[e] * mean[m + j];
                cov[(e, m + j)] = c;
                cov[(m + j, e)] = c;
            }
        }
        for i in 0..t {
            for j in i..t {
                let c = pat_pat[(i, j)] - mean[m + i] * mean[m + j];
                cov[(m + i, m + j)] = c;
                cov[(m + j, m + i)] = c;
            }
        }
        cov
    }

    /// One damped Newton step on the dual, using the covariance of the
    /// sufficient statistics as curvature and a backtracking line search.
    /// Leaves the factor unchanged unless the dual improves.
    fn newton_step(&mut self) -> Result<bool> {
        let n = self.edges.len() + self.patterns.len();
        let target: Vec<f64> = self
            .edge_target
            .iter()
            .copied()
            .chain(self.patterns.iter().map(|c| c.target))
            .map(clamp_prob)
            .collect();
        let mean: Vec<f64> = self.edge_marginal.iter().chain(&self.pattern_marginal).copied().collect();
        let cov = self.covariance();
        let grad = DVector::from_iterator(n, target.iter().zip(&mean).map(|(q, p)| q - p));
        let scale = (0..n).map(|a| cov[(a, a)]).fold(0.0, f64::max).max(1e-300);
        let mut damping = 1e-12 * scale;
        let step = loop {
            let mut h = cov.clone();
            for a in 0..n {
                h[(a, a)] += damping;
            }
            if let Some(ch) = h.cholesky() {
                break ch.solve(&grad);
            }
            damping *= 100.0;
            if damping > scale {
                return Ok(false);
            }
        };
        let base = self.dual();
        let start = self.params();
        let saved = self.clone();
        let mut t = 1.0;
        for _ in 0..LINE_SEARCH_STEPS {
            let trial: Vec<f64> = start.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
            if self.set_params(&trial).is_ok() && self.dual() > base {
                self.refresh_marginals();
                return Ok(true);
            }
            t *= 0.5;
        }
        *self = saved;
        Ok(false)
    }

    /// Sweeps until every constraint is within tolerance. Returns the sweep
    /// count.
    ///
    /// A sweep that shrinks the residual by less than half is followed by a
    /// Newton step on the dual, kept only if it improves the fit.
    /// Constraints whose solution lies on the boundary (an edge that never
    /// occurs without a pattern) otherwise converge only sublinearly.
    pub fn fit(&mut self, opts: &FitOptions) -> Result<usize> {
        if self.residual() <= opts.tolerance {
            return Ok(0);
        }
        let mut residual = f64::INFINITY;
        let newton_ok =
            self.edges.len() + self.patterns.len() <= NEWTON_MAX_DIM && self.newton_cost() <= NEWTON_BUDGET;
        let mut newton_failures = if newton_ok { 0 } else { NEWTON_MAX_FAILURES };
        for sweep in 1..=opts.max_sweeps {
            let previous = residual;
            residual = self.sweep()?;
            if residual <= opts.tolerance {
                return Ok(sweep);
            }
            let slow = residual > SLOW_PROGRESS * previous;
            if newton_failures < NEWTON_MAX_FAILURES && slow {
                if self.newton_step()? {
                    residual = self.residual();
                    if residual <= opts.tolerance {
                        return Ok(sweep);
                    }
                } else {
                    newton_failures += 1;
                }
            }
        }
        Err(GragraError::NonConvergence {
            sweeps: opts.max_sweeps,
            residual,
        })
    }

    /// Probability that all listed local edges are present.
    pub fn marginal(&self, locals: &[u32]) -> f64 {
        match locals {
            [] => 1.0,
            [l] => self.edge_marginal[*l as usize],
            _ => {
                if let Some(j) = self.patterns.iter().position(|p| p.locals == locals) {
                    return self.pattern_marginal[j];
                }
                self.expect_locals(locals)
            }
        }
    }

    /// Log-likelihood of `size` graphs whose per-edge and per-pattern
    /// support counts equal `target * size`.
    pub fn log_likelihood(&self, size: usize) -> f64 {
        let c = size as f64;
        let edges = compensated_sum(self.edge_p.iter().zip(&self.edge_target).map(|(&p, &q)| {
            let s = q * c;
            s * p.ln() + (c - s) * (1.0 - p).ln()
        }));
        let pats = compensated_sum(self.patterns.iter().map(|pat| pat.target * c * pat.log_theta));
        edges + pats - c * self.log_z()
    }

    /// Log-probability of the configuration of this factor's edges given by
    /// `present` (called with global edge ids).
    pub fn log_prob(&self, present: impl Fn(u32) -> bool) -> f64 {
        let on: Vec<bool> = self.edges.iter().map(|&id| present(id)).collect();
        let mut lp = 0.0;
        for (l, &x) in on.iter().enumerate() {
            lp += if x {
                self.edge_p[l].ln()
            } else {
                (1.0 - self.edge_p[l]).ln()
            };
        }
        for p in &self.patterns {
            if p.locals.iter().all(|&l| on[l as usize]) {
                lp += p.log_theta;
            }
        }
        lp - self.log_z()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_edge_factor(target: f64) -> Factor {
        Factor::new(
            vec![
                FactorEdge { id: 0, target: 0.5, p: 0.5 },
                FactorEdge { id: 1, target: 0.5, p: 0.5 },
            ],
            vec![FactorConstraint {
                edges: vec![0, 1],
                target,
                log_theta: 0.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn fresh_pattern_at_current_expectation_is_already_fit() {
        let mut f = two_edge_factor(0.25);
        assert_eq!(f.fit(&FitOptions::default()).unwrap(), 0);
        assert_eq!(f.pattern_log_theta(0), 0.0);
    }

    #[test]
    fn fitting_reaches_targets() {
        let mut f = two_edge_factor(0.4);
        f.fit(&FitOptions::default()).unwrap();
        assert!(f.residual() <= 1e-6);
        assert!((f.marginal(&[0, 1]) - 0.4).abs() <= 1e-6);
        assert!((f.marginal(&[0]) - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn factor_distribution_sums_to_one() {
        let mut f = two_edge_factor(0.4);
        f.fit(&FitOptions::default()).unwrap();
        let total: f64 = (0..4u32)
            .map(|cfg| f.log_prob(|id| cfg >> id & 1 == 1).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_cancels() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    /// Unfitted factor with `t` overlapping patterns over `m` edges.
    fn scrambled(m: u32, t: usize, seed: u64) -> Factor {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let edges = (0..m)
            .map(|id| FactorEdge {
                id,
                target: 0.5,
                p: 0.1 + 0.8 * next(),
            })
            .collect();
        let constraints = (0..t)
            .map(|j| {
                let start = (j as u32 * 3) % (m - 3);
                let mut edges: Vec<u32> = (start..start + 3).collect();
                edges.push(((next() * m as f64) as u32).min(m - 1));
                FactorConstraint {
                    edges,
                    target: 0.3,
                    log_theta: (0.3 + 4.0 * next()).ln(),
                }
            })
            .collect();
        Factor::new(edges, constraints).unwrap()
    }

    fn enumerate(f: &Factor) -> Vec<f64> {
        let m = f.edges().len();
        let mut w: Vec<f64> = (0..1u32 << m).map(|cfg| f.log_prob(|id| cfg >> id & 1 == 1).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }

    fn brute(w: &[f64], locals: &[u32]) -> f64 {
        let mask: u32 = locals.iter().fold(0, |m, l| m | 1u32 << l);
        w.iter().enumerate().filter(|(c, _)| *c as u32 & mask == mask).map(|(_, x)| x).sum()
    }

    #[test]
    fn queries_match_enumeration() {
        for (t, seed) in [(2, 1), (4, 2), (9, 3)] {
            let f = scrambled(13, t, seed);
            let w = enumerate(&f);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let queries: [&[u32]; 6] = [&[0], &[5], &[0, 1], &[2, 7, 11], &[3, 4, 5, 6], &[0, 12]];
            for q in queries {
                let got = f.marginal(q);
                let want = brute(&w, q);
                assert!((got - want).abs() < 1e-12, "t={t} {q:?}: {got} vs {want}");
            }
            for j in 0..t {
                let q = f.patterns[j].locals.clone();
                assert!((f.marginal(&q) - brute(&w, &q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_matches_enumeration() {
        let f = scrambled(11, 4, 7);
        let w = enumerate(&f);
        let m = f.edges().len();
        let stats: Vec<Vec<u32>> = (0..m as u32)
            .map(|l| vec![l])
            .chain(f.patterns.iter().map(|p| p.locals.clone()))
            .collect();
        let cov = f.covariance();
        for (i, a) in stats.iter().enumerate() {
            for (j, b) in stats.iter().enumerate() {
                let mut ab = a.clone();
                ab.extend(b);
                let want = brute(&w, &ab) - brute(&w, a) * brute(&w, b);
                assert!((cov[(i, j)] - want).abs() < 1e-12, "{i},{j}: {} vs {want}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn boundary_targets_converge() {
        let mut f = Factor::new(
            vec![
                FactorEdge { id: 0, target: 0.3, p: 0.3 },
                FactorEdge { id: 1, target: 0.6, p: 0.6 },
                FactorEdge { id: 2, target: 0.5, p: 0.5 },
            ],
            vec![
                FactorConstraint {
                    edges: vec![0, 1],
                    target: 0.3,
                    log_theta: 0.0,
                },
                FactorConstraint {
                    edges: vec![1, 2],
                    target: 0.35,
                    log_theta: 0.0,
                },
            ],
        )
        .unwrap();
        f.fit(&FitOptions::default()).unwrap();
        assert!(f.residual() <= 1e-6);
    }
}
