#![allow(dead_code)]

use gragra::maxent::{FitOptions, GroupModel, ModelSet};
use gragra::model::{GraphGroupDataset, SupportIndex};
use gragra::search::MiningResult;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Maximum-entropy distribution over all `2^m` edge configurations that
/// matches `edge_targets` and every `(edges, target)` pattern constraint,
/// fitted by iterative proportional scaling on the explicit table.
pub struct Enumerated {
    pub m: usize,
    pub probs: Vec<f64>,
}

fn mask_of(edges: &[u32]) -> usize {
    edges.iter().fold(0usize, |acc, &e| acc | (1 << e))
}

impl Enumerated {
    pub fn fit(m: usize, edge_targets: &[f64], patterns: &[(Vec<u32>, f64)]) -> Self {
        assert!(m <= 16);
        let mut constraints: Vec<(usize, f64)> = (0..m).map(|e| (1usize << e, edge_targets[e])).collect();
        constraints.extend(patterns.iter().map(|(x, q)| (mask_of(x), *q)));
        let size = 1usize << m;
        let mut probs = vec![1.0 / size as f64; size];
        for _ in 0..200_000 {
            let mut worst: f64 = 0.0;
            for &(mask, q) in &constraints {
                let p: f64 = (0..size).filter(|w| w & mask == mask).map(|w| probs[w]).sum();
                worst = worst.max((p - q).abs());
                let (up, down) = (q / p, (1.0 - q) / (1.0 - p));
                for (w, pr) in probs.iter_mut().enumerate() {
                    *pr *= if w & mask == mask { up } else { down };
                }
            }
            if worst < 1e-13 {
                break;
            }
        }
        Enumerated { m, probs }
    }

    /// Probability that every edge of `y` is present.
    pub fn query(&self, y: &[u32]) -> f64 {
        let mask = mask_of(y);
        self.probs
            .iter()
            .enumerate()
            .filter(|(w, _)| w & mask == mask)
            .map(|(_, p)| p)
            .sum()
    }
}

/// A random strictly positive distribution over `2^m` configurations,
/// returned as edge marginals and pattern marginals, which are therefore
/// jointly feasible.
pub struct RandomInstance {
    pub m: usize,
    pub edge_targets: Vec<f64>,
    pub patterns: Vec<(Vec<u32>, f64)>,
}

impl RandomInstance {
    pub fn draw(seed: u64, max_m: usize, max_patterns: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(3..=max_m);
        let size = 1usize << m;
        // skew toward sparse configurations so marginals are varied
        let density: f64 = rng.gen_range(0.15..0.6);
        let mut weights: Vec<f64> = (0..size)
            .map(|w: usize| {
                let ones = w.count_ones() as i32;
                rng.gen_range(0.05..1.0) * (density / (1.0 - density)).powi(ones)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let marginal = |mask: usize| -> f64 { (0..size).filter(|w| w & mask == mask).map(|w| weights[w]).sum() };
        let edge_targets = (0..m).map(|e| marginal(1 << e)).collect();
        let t = rng.gen_range(1..=max_patterns);
        let mut patterns = Vec::new();
        while patterns.len() < t {
            let len = rng.gen_range(2..=m.min(5));
            let mut x: Vec<u32> = rand::seq::index::sample(&mut rng, m, len).into_iter().map(|e| e as u32).collect();
            x.sort_unstable();
            if patterns.iter().any(|(y, _)| *y == x) {
                continue;
            }
            let q = marginal(mask_of(&x));
            patterns.push((x, q));
        }
        RandomInstance {
            m,
            edge_targets,
            patterns,
        }
    }

    pub fn model(&self) -> GroupModel {
        let mut model = GroupModel::from_frequencies(0, 1000, self.edge_targets.clone(), FitOptions::default());
        for (x, q) in &self.patterns {
            model.insert_pattern(x, *q).expect("feasible insertion");
        }
        model
    }
}

/// `ln Γ(k/2)` for a positive integer `k`, from factorials.
fn ln_gamma_half(k: u32) -> f64 {
    if k % 2 == 0 {
        (1..k / 2).map(|i| (i as f64).ln()).sum()
    } else {
        // Γ(n + 1/2) = (2n)! √π / (4^n n!)
        let n = (k / 2) as u64;
        let ln_fact = |x: u64| -> f64 { (1..=x).map(|i| (i as f64).ln()).sum() };
        ln_fact(2 * n) + 0.5 * std::f64::consts::PI.ln() - n as f64 * 4f64.ln() - ln_fact(n)
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol.max(1e-14 * (left + right).abs()) {
        return left + right + diff / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Upper tail of the χ² distribution by numerical integration of the
/// density, written as `f(x) · ∫_0^∞ f(x + u) / f(x) du` so the tolerance
/// is relative.
pub fn chi2_sf_oracle(x: f64, df: u32) -> f64 {
    assert!(x > 0.0);
    let half = df as f64 / 2.0;
    let log_density = |t: f64| (half - 1.0) * t.ln() - t / 2.0 - half * 2f64.ln() - ln_gamma_half(df);
    let base = log_density(x);
    let ratio = move |u: f64| ((half - 1.0) * (1.0 + u / x).ln() - u / 2.0).exp();
    let mut total = 0.0;
    let mut a = 0.0;
    let mut width = 0.25;
    while a < 200.0 + 4.0 * df as f64 {
        let b = a + width;
        let (fa, fm, fb) = (ratio(a), ratio(0.5 * (a + b)), ratio(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        total += adaptive_simpson(&ratio, a, b, fa, fm, fb, whole, 1e-13 * whole.abs(), 30);
        a = b;
        width = (width * 1.5).min(4.0);
    }
    base.exp() * total
}

pub fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + c
}

/// Exact BIC after each accepted pattern, recomputed by replaying the
/// insertions on fresh baseline models and summing graph log-probabilities.
/// Element 0 is the baseline. Also returns the largest constraint residual
/// seen after any replayed insertion.
pub fn replay_bic(dataset: &GraphGroupDataset, result: &MiningResult) -> (Vec<f64>, f64) {
    let index = SupportIndex::build(dataset);
    let mut models = ModelSet::baseline(&index, result.config.fit);
    let graphs: Vec<Vec<Vec<u32>>> = dataset
        .groups
        .iter()
        .map(|group| {
            group
                .iter()
                .map(|g| {
                    let mut ids = index.ids_of(g.edges()).expect("universe edges");
                    ids.sort_unstable();
                    ids
                })
                .collect()
        })
        .collect();
    let bic = |models: &ModelSet, patterns: usize| -> f64 {
        let terms = models
            .models
            .iter()
            .zip(&graphs)
            .flat_map(|(m, group)| group.iter().map(move |g| -m.graph_log_prob(g)));
        neumaier(terms) + (index.len() + patterns) as f64 * models.penalty()
    };
    let mut out = vec![bic(&models, 0)];
    let mut residual: f64 = 0.0;
    for (j, pattern) in result.patterns.iter().enumerate() {
        let ids = index.ids_of(pattern.edges()).expect("pattern in universe");
        let q = index.frequencies(&ids);
        for (g, model) in models.models.iter_mut().enumerate() {
            if result.association.get(g, j) {
                model.insert_pattern(&ids, q[g]).expect("replayed insertion");
            }
        }
        residual = models.models.iter().map(|m| m.max_residual()).fold(residual, f64::max);
        out.push(bic(&models, j + 1));
    }
    (out, residual)
}
