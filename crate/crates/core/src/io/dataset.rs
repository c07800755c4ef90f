use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GragraError, Result};
use crate::model::{DatasetMeta, EdgeKey, Graph, GraphGroupDataset, WeightBinning};

/// Header fields shared by the text and JSON dataset formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Header {
    n: u32,
    directed: bool,
    bins: u16,
    loops: bool,
    /// Weights are already category indices in `0..bins`.
    binned: bool,
}

struct RawGraph {
    id: String,
    group: String,
    line: usize,
    edges: Vec<(u32, u32, Option<f64>, usize)>,
}

/// Reads a dataset in either format; JSON is recognized by a leading `{`.
/// `bins` overrides the header's bin count when given.
pub fn parse_dataset(text: &str, bins: Option<u16>) -> Result<GraphGroupDataset> {
    if text.trim_start().starts_with('{') {
        parse_json(text, bins)
    } else {
        parse_text(text, bins)
    }
}

pub fn read_dataset(path: &std::path::Path, bins: Option<u16>) -> Result<GraphGroupDataset> {
    let text = super::read_file(path)?;
    parse_dataset(&text, bins)
}

fn parse_header(line: &str, lineno: usize) -> Result<Header> {
    let mut n = None;
    let mut directed = None;
    let mut bins = None;
    let mut loops = false;
    let mut binned = false;
    for tok in line.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| GragraError::parse(lineno, format!("expected key=value in header, got '{tok}'")))?;
        let num = |what: &str| -> Result<u64> {
            value
                .parse::<u64>()
                .map_err(|_| GragraError::parse(lineno, format!("{what} must be a nonnegative integer, got '{value}'")))
        };
        let flag = |what: &str| -> Result<bool> {
            match value {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(GragraError::parse(lineno, format!("{what} must be 0 or 1, got '{value}'"))),
            }
        };
        match key {
            "n" => n = Some(u32::try_from(num("n")?).map_err(|_| GragraError::parse(lineno, "n too large"))?),
            "directed" => directed = Some(flag("directed")?),
            "bins" => bins = Some(u16::try_from(num("bins")?).map_err(|_| GragraError::parse(lineno, "bins too large"))?),
            "loops" => loops = flag("loops")?,
            "binned" => binned = flag("binned")?,
            other => return Err(GragraError::parse(lineno, format!("unknown header key '{other}'"))),
        }
    }
    let missing = |k: &str| GragraError::parse(lineno, format!("header is missing '{k}'"));
    Ok(Header {
        n: n.ok_or_else(|| missing("n"))?,
        directed: directed.ok_or_else(|| missing("directed"))?,
        bins: bins.ok_or_else(|| missing("bins"))?,
        loops,
        binned,
    })
}

fn parse_text(text: &str, bins: Option<u16>) -> Result<GraphGroupDataset> {
    let mut header = None;
    let mut graphs: Vec<RawGraph> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if header.is_none() {
            header = Some(parse_header(line, lineno)?);
            continue;
        }
        let mut toks = line.split_whitespace();
        let first = toks.next().unwrap_or_default();
        if first == "graph" {
            let id = toks
                .next()
                .ok_or_else(|| GragraError::parse(lineno, "graph line needs an id"))?;
            let group = toks
                .next()
                .and_then(|t| t.strip_prefix("group="))
                .filter(|g| !g.is_empty())
                .ok_or_else(|| GragraError::parse(lineno, "graph line needs group=<label>"))?;
            if toks.next().is_some() {
                return Err(GragraError::parse(lineno, "trailing tokens after group label"));
            }
            graphs.push(RawGraph {
                id: id.to_string(),
                group: group.to_string(),
                line: lineno,
                edges: Vec::new(),
            });
            continue;
        }
        let graph = graphs
            .last_mut()
            .ok_or_else(|| GragraError::parse(lineno, "edge line before any graph line"))?;
        let node = |t: Option<&str>| -> Result<u32> {
            let t = t.ok_or_else(|| GragraError::parse(lineno, "edge line needs 'src dst [weight]'"))?;
            t.parse()
                .map_err(|_| GragraError::parse(lineno, format!("node '{t}' is not a nonnegative integer")))
        };
        let src = node(Some(first))?;
        let dst = node(toks.next())?;
        let weight = match toks.next() {
            Some(t) => Some(
                t.parse::<f64>()
                    .map_err(|_| GragraError::parse(lineno, format!("weight '{t}' is not a number")))?,
            ),
            None => None,
        };
        if toks.next().is_some() {
            return Err(GragraError::parse(lineno, "trailing tokens after edge weight"));
        }
        graph.edges.push((src, dst, weight, lineno));
    }
    let header = header.ok_or_else(|| GragraError::parse(1, "empty dataset: missing header"))?;
    assemble(header, bins, graphs)
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    n: u32,
    directed: bool,
    bins: u16,
    #[serde(default)]
    loops: bool,
    #[serde(default)]
    binned: bool,
    graphs: Vec<JsonGraph>,
}

#[derive(Serialize, Deserialize)]
struct JsonGraph {
    id: String,
    group: String,
    /// `[src, dst]` or `[src, dst, weight]`.
    edges: Vec<Vec<f64>>,
}

fn parse_json(text: &str, bins: Option<u16>) -> Result<GraphGroupDataset> {
    let doc: JsonDataset = serde_json::from_str(text).map_err(|e| GragraError::parse(e.line(), e.to_string()))?;
    let header = Header {
        n: doc.n,
        directed: doc.directed,
        bins: doc.bins,
        loops: doc.loops,
        binned: doc.binned,
    };
    let mut graphs = Vec::with_capacity(doc.graphs.len());
    for (gi, g) in doc.graphs.into_iter().enumerate() {
        let mut edges = Vec::with_capacity(g.edges.len());
        for (ei, e) in g.edges.iter().enumerate() {
            let node = |v: f64| -> Result<u32> {
                if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) {
                    Ok(v as u32)
                } else {
                    Err(GragraError::parse(0, format!("graph #{gi} edge #{ei}: node {v} is not a nonnegative integer")))
                }
            };
            match e.as_slice() {
                [s, d] => edges.push((node(*s)?, node(*d)?, None, 0)),
                [s, d, w] => edges.push((node(*s)?, node(*d)?, Some(*w), 0)),
                _ => {
                    return Err(GragraError::parse(
                        0,
                        format!("graph #{gi} edge #{ei}: expected [src, dst] or [src, dst, weight]"),
                    ))
                }
            }
        }
        graphs.push(RawGraph {
            id: g.id,
            group: g.group,
            line: 0,
            edges,
        });
    }
    assemble(header, bins, graphs)
}

/// Validates nodes and weights, bins weights over the whole dataset and
/// groups graphs by label in order of first appearance.
fn assemble(header: Header, bins: Option<u16>, graphs: Vec<RawGraph>) -> Result<GraphGroupDataset> {
    let bins = bins.unwrap_or(header.bins);
    if bins == 0 {
        return Err(GragraError::Config("at least one weight bin is required".into()));
    }
    let mut weighted = None;
    for g in &graphs {
        for &(src, dst, w, line) in &g.edges {
            if src >= header.n || dst >= header.n {
                return Err(GragraError::parse(
                    line,
                    format!("graph {}: edge ({src}, {dst}) references a node outside 0..{}", g.id, header.n),
                ));
            }
            if src == dst && !header.loops {
                return Err(GragraError::parse(
                    line,
                    format!("graph {}: self-loop on {src} but the header does not declare loops=1", g.id),
                ));
            }
            match (weighted, w) {
                (None, _) => weighted = Some(w.is_some()),
                (Some(was), w) if was != w.is_some() => {
                    return Err(GragraError::parse(line, "either every edge carries a weight or none does"));
                }
                _ => {}
            }
            if let Some(w) = w {
                if !w.is_finite() {
                    return Err(GragraError::NonFiniteWeight(w));
                }
                if header.binned && (w.fract() != 0.0 || w < 0.0 || w >= bins as f64) {
                    return Err(GragraError::parse(
                        line,
                        format!("binned weight {w} is not a category in 0..{bins}"),
                    ));
                }
            }
        }
    }
    let binning = if header.binned {
        None
    } else {
        Some(WeightBinning::fit(
            graphs.iter().flat_map(|g| g.edges.iter().filter_map(|e| e.2)),
            bins,
        )?)
    };
    let category = |w: Option<f64>| -> u16 {
        match (w, &binning) {
            (None, _) => 0,
            (Some(w), None) => w as u16,
            (Some(w), Some(b)) => b.bin(w),
        }
    };
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<Graph>> = Vec::new();
    for g in graphs {
        let edges = g
            .edges
            .iter()
            .map(|&(s, d, w, _)| EdgeKey::new(s, d, category(w)));
        let graph = Graph::new(g.id, edges, header.directed).map_err(|e| match (e, g.line) {
            (GragraError::InvalidDataset(m), line) if line > 0 => GragraError::parse(line, m),
            (e, _) => e,
        })?;
        match labels.iter().position(|l| *l == g.group) {
            Some(i) => groups[i].push(graph),
            None => {
                labels.push(g.group);
                groups.push(vec![graph]);
            }
        }
    }
    let meta = DatasetMeta {
        n: header.n,
        directed: header.directed,
        loops: header.loops,
        weight_categories: bins,
    };
    GraphGroupDataset::new(meta, labels, groups)
}

/// Canonical text form. Weighted datasets are written with `binned=1` so
/// that reading the output back reproduces the categories exactly.
pub fn write_text(ds: &GraphGroupDataset) -> String {
    let weighted = ds.meta.weight_categories > 1;
    let mut out = String::new();
    let _ = write!(
        out,
        "n={} directed={} bins={}",
        ds.meta.n,
        u8::from(ds.meta.directed),
        ds.meta.weight_categories
    );
    if ds.meta.loops {
        out.push_str(" loops=1");
    }
    if weighted {
        out.push_str(" binned=1");
    }
    out.push('\n');
    for (label, group) in ds.group_labels.iter().zip(&ds.groups) {
        for g in group {
            let _ = writeln!(out, "graph {} group={label}", g.id);
            for e in g.edges() {
                if weighted {
                    let _ = writeln!(out, "{} {} {}", e.src, e.dst, e.weight);
                } else {
                    let _ = writeln!(out, "{} {}", e.src, e.dst);
                }
            }
        }
    }
    out
}

/// JSON form with the same fields as the text form.
pub fn write_json(ds: &GraphGroupDataset) -> Result<String> {
    let weighted = ds.meta.weight_categories > 1;
    let doc = JsonDataset {
        n: ds.meta.n,
        directed: ds.meta.directed,
        bins: ds.meta.weight_categories,
        loops: ds.meta.loops,
        binned: weighted,
        graphs: ds
            .group_labels
            .iter()
            .zip(&ds.groups)
            .flat_map(|(label, group)| {
                group.iter().map(move |g| JsonGraph {
                    id: g.id.clone(),
                    group: label.clone(),
                    edges: g
                        .edges()
                        .iter()
                        .map(|e| {
                            let mut v = vec![e.src as f64, e.dst as f64];
                            if weighted {
                                v.push(e.weight as f64);
                            }
                            v
                        })
                        .collect(),
                })
            })
            .collect(),
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Hex SHA-256 of the canonical text form.
pub fn fingerprint(ds: &GraphGroupDataset) -> String {
    hex::encode(Sha256::digest(write_text(ds).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
# two groups
n=4 directed=0 bins=1
graph a group=x
0 1
2 1
graph b group=y
0 1
";

    #[test]
    fn reads_text() {
        let ds = parse_dataset(SMALL, None).unwrap();
        assert_eq!(ds.group_labels, ["x", "y"]);
        assert_eq!(ds.groups[0][0].edges(), [EdgeKey::new(0, 1, 0), EdgeKey::new(1, 2, 0)]);
        assert_eq!(ds.universe.len(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "n=4 directed=0 bins=1\ngraph a group=x\n0 1\n0 9\n";
        match parse_dataset(bad, None) {
            Err(GragraError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        match parse_dataset("n=4 bins=1\n", None) {
            Err(GragraError::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("directed"));
            }
            other => panic!("{other:?}"),
        }
        match parse_dataset("n=4 directed=0 bins=1\n0 1\n", None) {
            Err(GragraError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_are_binned_globally() {
        let text = "n=3 directed=1 bins=4\ngraph a group=x\n0 1 0.0\n1 2 10\ngraph b group=x\n2 0 5\n";
        let ds = parse_dataset(text, None).unwrap();
        assert_eq!(ds.groups[0][0].edges(), [EdgeKey::new(0, 1, 0), EdgeKey::new(1, 2, 3)]);
        assert_eq!(ds.groups[0][1].edges(), [EdgeKey::new(2, 0, 2)]);
        let back = parse_dataset(&write_text(&ds), None).unwrap();
        assert_eq!(back, ds);
        let over = parse_dataset(text, Some(2)).unwrap();
        assert_eq!(over.groups[0][1].edges(), [EdgeKey::new(2, 0, 1)]);
    }

    #[test]
    fn mixed_weights_rejected() {
        let text = "n=3 directed=0 bins=2\ngraph a group=x\n0 1 1.5\n1 2\n";
        assert!(matches!(parse_dataset(text, None), Err(GragraError::Parse { line: 4, .. })));
    }

    #[test]
    fn json_matches_text() {
        let ds = parse_dataset(SMALL, None).unwrap();
        let json = write_json(&ds).unwrap();
        assert_eq!(parse_dataset(&json, None).unwrap(), ds);
        assert_eq!(fingerprint(&ds), fingerprint(&parse_dataset(&json, None).unwrap()));
    }
}
