//! Synthetic graph groups: G(n, p) noise with planted cliques, stars and
//! bicliques.
//!
//! Draw order from one ChaCha8 stream seeded with `seed`: groups in order,
//! graphs in order, then per graph every node pair `u < v` in
//! lexicographic order (one uniform each, edge iff `< p`), then one uniform
//! per plant in list order (planted iff `< prevalence`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GragraError, Result};
use crate::model::{DatasetMeta, EdgeKey, Graph, GraphGroupDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Clique,
    Star,
    Biclique,
}

/// How the size parameter of stars and bicliques is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeReading {
    /// Total node count: a star of size s has s-1 spokes, a biclique has
    /// sides of s/2 (rounded down) and s - s/2.
    #[default]
    TotalNodes,
    /// Size of each node class: a star has s spokes, a biclique two sides of s.
    PerClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPattern {
    pub kind: PlantKind,
    pub size: u32,
    pub position: u32,
    /// Occurrence probability per group.
    pub prevalence: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub k: usize,
    pub n: u32,
    pub graphs_per_group: usize,
    pub p: f64,
    pub plants: Vec<PlantedPattern>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub size_reading: SizeReading,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GragraError::Config(m));
        if self.k == 0 || self.graphs_per_group == 0 || self.n < 2 {
            return bad("need k >= 1, at least one graph per group and n >= 2".into());
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad(format!("edge probability {} outside (0, 1)", self.p));
        }
        for (i, plant) in self.plants.iter().enumerate() {
            if plant.prevalence.len() != self.k {
                return bad(format!("plant {i}: {} prevalences for {} groups", plant.prevalence.len(), self.k));
            }
            if plant.prevalence.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad(format!("plant {i}: prevalence outside [0, 1]"));
            }
            pattern_edges(plant.kind, plant.size, plant.position, self.size_reading, self.n)?;
        }
        Ok(())
    }
}

/// Edge set of one planted pattern (undirected, weight category 0).
pub fn pattern_edges(kind: PlantKind, size: u32, position: u32, reading: SizeReading, n: u32) -> Result<Vec<EdgeKey>> {
    let (span, edges): (u32, Vec<(u32, u32)>) = match (kind, reading) {
        (PlantKind::Clique, _) => {
            let nodes: Vec<u32> = (0..size).collect();
            let pairs = nodes
                .iter()
                .flat_map(|&a| nodes.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
                .collect();
            (size, pairs)
        }
        (PlantKind::Star, reading) => {
            let spokes = match reading {
                SizeReading::TotalNodes => size.saturating_sub(1),
                SizeReading::PerClass => size,
            };
            (spokes + 1, (1..=spokes).map(|s| (0, s)).collect())
        }
        (PlantKind::Biclique, reading) => {
            let (a, b) = match reading {
                SizeReading::TotalNodes => (size / 2, size - size / 2),
                SizeReading::PerClass => (size, size),
            };
            (a + b, (0..a).flat_map(|x| (a..a + b).map(move |y| (x, y))).collect())
        }
    };
    if edges.is_empty() {
        return Err(GragraError::Config(format!("{kind:?} of size {size} has no edges")));
    }
    if position.checked_add(span).is_none_or(|end| end > n) {
        return Err(GragraError::Config(format!(
            "{kind:?} of size {size} at position {position} does not fit {n} nodes"
        )));
    }
    let mut out: Vec<EdgeKey> = edges
        .into_iter()
        .map(|(a, b)| EdgeKey::new(position + a, position + b, 0))
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Planted edges per group: the union over plants with positive prevalence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub group_labels: Vec<String>,
    pub groups: Vec<Vec<EdgeKey>>,
}

impl GroundTruth {
    pub fn from_config(cfg: &SynthConfig) -> Result<Self> {
        let mut groups = vec![std::collections::BTreeSet::new(); cfg.k];
        for plant in &cfg.plants {
            let edges = pattern_edges(plant.kind, plant.size, plant.position, cfg.size_reading, cfg.n)?;
            for (g, &prev) in plant.prevalence.iter().enumerate() {
                if prev > 0.0 {
                    groups[g].extend(edges.iter().copied());
                }
            }
        }
        Ok(GroundTruth {
            group_labels: group_labels(cfg.k),
            groups: groups.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }
}

fn group_labels(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("g{i}")).collect()
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: GraphGroupDataset,
    pub truth: GroundTruth,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let plants: Vec<Vec<EdgeKey>> = cfg
        .plants
        .iter()
        .map(|p| pattern_edges(p.kind, p.size, p.position, cfg.size_reading, cfg.n))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let width = (cfg.k * cfg.graphs_per_group).to_string().len();
    let mut groups = Vec::with_capacity(cfg.k);
    for g in 0..cfg.k {
        let mut graphs = Vec::with_capacity(cfg.graphs_per_group);
        for j in 0..cfg.graphs_per_group {
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen::<f64>() < cfg.p {
                        edges.push(EdgeKey::new(u, v, 0));
                    }
                }
            }
            for (plant, plant_edges) in cfg.plants.iter().zip(&plants) {
                if rng.gen::<f64>() < plant.prevalence[g] {
                    edges.extend(plant_edges.iter().copied());
                }
            }
            edges.sort_unstable();
            edges.dedup();
            graphs.push(Graph::new(format!("g{g}-{j:0width$}"), edges, false)?);
        }
        groups.push(graphs);
    }
    let meta = DatasetMeta {
        n,
        directed: false,
        loops: false,
        weight_categories: 1,
    };
    let dataset = GraphGroupDataset::new(meta, group_labels(cfg.k), groups)?;
    Ok(SynthOutput {
        dataset,
        truth: GroundTruth::from_config(cfg)?,
    })
}

pub const PRESETS: &[&str] = &[
    "synthetic/1g/2",
    "synthetic/1g/noise",
    "synthetic/2g/contrastive",
    "synthetic/2g/shared",
    "synthetic/4g/overlap",
];

fn plant(kind: PlantKind, size: u32, position: u32, prevalence: &[f64]) -> PlantedPattern {
    PlantedPattern {
        kind,
        size,
        position,
        prevalence: prevalence.to_vec(),
    }
}

/// Named configurations; all use 100 graphs of 100 nodes per group.
pub fn preset(name: &str, seed: u64) -> Result<SynthConfig> {
    let (k, plants) = match name {
        "synthetic/1g/2" => (
            1,
            vec![
                plant(PlantKind::Clique, 5, 0, &[0.1]),
                plant(PlantKind::Star, 10, 5, &[0.2]),
                plant(PlantKind::Biclique, 10, 15, &[0.3]),
            ],
        ),
        "synthetic/1g/noise" => (1, vec![]),
        "synthetic/2g/contrastive" => (2, vec![plant(PlantKind::Clique, 5, 0, &[0.5, 0.0])]),
        "synthetic/2g/shared" => (2, vec![plant(PlantKind::Clique, 5, 0, &[0.5, 0.5])]),
        "synthetic/4g/overlap" => (4, vec![plant(PlantKind::Clique, 5, 0, &[0.5, 0.5, 0.0, 0.0])]),
        other => {
            return Err(GragraError::Config(format!(
                "unknown preset '{other}'; available: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(SynthConfig {
        k,
        n: 100,
        graphs_per_group: 100,
        p: 0.1,
        plants,
        seed,
        size_reading: SizeReading::TotalNodes,
    })
}
