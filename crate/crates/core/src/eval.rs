//! Scoring mined patterns against planted ground truth, and seeded sweeps.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GragraError, Result};
use crate::model::{EdgeKey, SupportThreshold};
use crate::search::{mine, MineConfig, MiningResult, Variant};
use crate::synth::{generate, GroundTruth, SynthConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl GroupScore {
    /// Edge-set precision, recall and F1. Empty prediction and empty truth
    /// score 1; empty prediction against non-empty truth scores 0; a
    /// non-empty prediction against empty truth has recall 1, precision 0.
    pub fn from_sets(pred: &BTreeSet<EdgeKey>, truth: &BTreeSet<EdgeKey>) -> Self {
        match (pred.is_empty(), truth.is_empty()) {
            (true, true) => GroupScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            },
            (true, false) => GroupScore {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            },
            (false, true) => GroupScore {
                precision: 0.0,
                recall: 1.0,
                f1: 0.0,
            },
            (false, false) => {
                let hit = pred.intersection(truth).count() as f64;
                let precision = hit / pred.len() as f64;
                let recall = hit / truth.len() as f64;
                let f1 = if hit == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                GroupScore { precision, recall, f1 }
            }
        }
    }
}

/// Scores each group's predicted edges (union of its associated patterns).
pub fn score(result: &MiningResult, truth: &GroundTruth) -> Result<Vec<GroupScore>> {
    let k = result.association.k();
    if truth.groups.len() != k {
        return Err(GragraError::Mismatch(format!(
            "result has {k} groups, ground truth has {}",
            truth.groups.len()
        )));
    }
    Ok((0..k)
        .map(|g| {
            let truth: BTreeSet<EdgeKey> = truth.groups[g].iter().copied().collect();
            GroupScore::from_sets(&result.group_edges(g), &truth)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub group: usize,
    pub variant: Variant,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub runtime_ms: u64,
    pub n_patterns: usize,
    #[serde(skip)]
    pub error: Option<String>,
}

/// Everything needed to run one benchmark sweep.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub config: SynthConfig,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub threshold: SupportThreshold,
    pub mine: MineConfig,
}

/// Generates, mines and scores one seed.
pub fn run_one(spec: &SweepSpec, seed: u64, variant: Variant) -> Result<(MiningResult, Vec<GroupScore>, u64)> {
    let cfg = SynthConfig {
        seed,
        ..spec.config.clone()
    };
    let out = generate(&cfg)?;
    let mut dataset = out.dataset;
    dataset.sparsify(spec.threshold)?;
    let mine_cfg = MineConfig {
        variant,
        seed,
        ..spec.mine.clone()
    };
    let start = Instant::now();
    let result = mine(&dataset, &mine_cfg)?;
    let ms = start.elapsed().as_millis() as u64;
    let scores = score(&result, &out.truth)?;
    Ok((result, scores, ms))
}

/// Long-format table with one row per seed, group and variant. A failing
/// run yields rows with empty metrics and the sweep continues.
pub fn sweep(spec: &SweepSpec) -> Vec<SweepRow> {
    let jobs: Vec<(u64, Variant)> = spec
        .seeds
        .iter()
        .flat_map(|&s| spec.variants.iter().map(move |&v| (s, v)))
        .collect();
    let runs: Vec<_> = jobs.par_iter().map(|&(s, v)| (s, v, run_one(spec, s, v))).collect();
    let mut rows = Vec::new();
    for (seed, variant, run) in runs {
        match run {
            Ok((result, scores, ms)) => {
                for (group, sc) in scores.into_iter().enumerate() {
                    rows.push(SweepRow {
                        seed,
                        group,
                        variant,
                        precision: Some(sc.precision),
                        recall: Some(sc.recall),
                        f1: Some(sc.f1),
                        runtime_ms: ms,
                        n_patterns: result.patterns.len(),
                        error: None,
                    });
                }
            }
            Err(e) => {
                for group in 0..spec.config.k {
                    rows.push(SweepRow {
                        seed,
                        group,
                        variant,
                        precision: None,
                        recall: None,
                        f1: None,
                        runtime_ms: 0,
                        n_patterns: 0,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    rows
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub variant: Variant,
    pub metric: String,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub runs: usize,
}

/// Quartiles of precision, recall and F1 per variant over successful rows.
pub fn summarize(rows: &[SweepRow]) -> Vec<MetricSummary> {
    let mut variants: Vec<Variant> = rows.iter().map(|r| r.variant).collect();
    variants.dedup();
    let mut seen = Vec::new();
    variants.retain(|v| {
        let fresh = !seen.contains(v);
        seen.push(*v);
        fresh
    });
    let mut out = Vec::new();
    for v in variants {
        for (name, get) in [
            ("precision", (|r: &SweepRow| r.precision) as fn(&SweepRow) -> Option<f64>),
            ("recall", |r: &SweepRow| r.recall),
            ("f1", |r: &SweepRow| r.f1),
        ] {
            let vals: Vec<f64> = rows.iter().filter(|r| r.variant == v).filter_map(get).collect();
            if vals.is_empty() {
                continue;
            }
            out.push(MetricSummary {
                variant: v,
                metric: name.to_string(),
                q1: quantile(&vals, 0.25).unwrap(),
                median: median(&vals).unwrap(),
                q3: quantile(&vals, 0.75).unwrap(),
                runs: vals.len(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(edges: &[(u32, u32)]) -> BTreeSet<EdgeKey> {
        edges.iter().map(|&(a, b)| EdgeKey::new(a, b, 0)).collect()
    }

    #[test]
    fn score_conventions() {
        let t = set(&[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let s = GroupScore::from_sets(&t, &t);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = GroupScore::from_sets(&set(&[(0, 1), (1, 2)]), &t);
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        let s = GroupScore::from_sets(&set(&[]), &set(&[]));
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = GroupScore::from_sets(&set(&[]), &t);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = GroupScore::from_sets(&t, &set(&[]));
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 1.0, 0.0));
    }

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(4.0));
        assert_eq!(median(&[]), None);
    }
}
