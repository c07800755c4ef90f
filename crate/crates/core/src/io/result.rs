use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GragraError, Result};
use crate::model::SupportThreshold;
use crate::search::MiningResult;
use crate::synth::{GroundTruth, SynthConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A mining result together with what is needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub tool_version: String,
    pub dataset_fingerprint: String,
    pub n: u32,
    pub directed: bool,
    pub bins: u16,
    pub threshold: SupportThreshold,
    pub result: MiningResult,
}

impl ResultDocument {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GragraError::parse(e.line(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&super::read_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Planted edges written next to a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub dataset_fingerprint: String,
    pub config: SynthConfig,
    pub truth: GroundTruth,
}

impl TruthDocument {
    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&super::read_file(path)?).map_err(|e| GragraError::parse(e.line(), e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
    Dot,
}

impl std::str::FromStr for ExportFormat {
    type Err = GragraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            "dot" => Ok(ExportFormat::Dot),
            other => Err(GragraError::Config(format!("unknown export format '{other}' (expected json, csv or dot)"))),
        }
    }
}

/// One row per pattern: length, gain, overall p-value, then a membership
/// flag and p-value per group, then the edges.
pub fn export_csv<W: std::io::Write>(doc: &ResultDocument, out: W) -> Result<()> {
    let r = &doc.result;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["pattern".to_string(), "length".into(), "h".into(), "p_value".into(), "bic_delta".into()];
    for label in &r.group_labels {
        header.push(format!("in_{label}"));
        header.push(format!("p_{label}"));
    }
    header.push("edges".into());
    w.write_record(&header)?;
    for (j, pattern) in r.patterns.iter().enumerate() {
        let d = &r.diagnostics[j];
        let mut row = vec![
            j.to_string(),
            pattern.len().to_string(),
            d.h.to_string(),
            format!("{:e}", d.p_value),
            d.bic_delta.to_string(),
        ];
        for g in 0..r.group_labels.len() {
            row.push(u8::from(r.association.get(g, j)).to_string());
            row.push(d.p_values.get(g).map(|p| format!("{p:e}")).unwrap_or_default());
        }
        let edges: Vec<String> = pattern
            .edges()
            .iter()
            .map(|e| {
                if doc.bins > 1 {
                    format!("{}-{}:{}", e.src, e.dst, e.weight)
                } else {
                    format!("{}-{}", e.src, e.dst)
                }
            })
            .collect();
        row.push(edges.join(" "));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// DOT source for pattern `j`, one edge statement per pattern edge.
pub fn pattern_dot(doc: &ResultDocument, j: usize) -> String {
    let r = &doc.result;
    let groups: Vec<&str> = r
        .group_labels
        .iter()
        .enumerate()
        .filter(|(g, _)| r.association.get(*g, j))
        .map(|(_, l)| l.as_str())
        .collect();
    let (kind, arrow) = if doc.directed { ("digraph", "->") } else { ("graph", "--") };
    let mut s = format!(
        "{kind} pattern_{j} {{\n  label=\"pattern {j}; groups: {}; h={:.3}\";\n",
        groups.join(", "),
        r.diagnostics[j].h
    );
    for e in r.patterns[j].edges() {
        if doc.bins > 1 {
            s.push_str(&format!("  {} {arrow} {} [label=\"{}\"];\n", e.src, e.dst, e.weight));
        } else {
            s.push_str(&format!("  {} {arrow} {};\n", e.src, e.dst));
        }
    }
    s.push_str("}\n");
    s
}

/// Writes the export into `out_dir` and returns the files created.
pub fn export(doc: &ResultDocument, format: ExportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    match format {
        ExportFormat::Json => {
            let path = out_dir.join("result.json");
            doc.save(&path)?;
            Ok(vec![path])
        }
        ExportFormat::Csv => {
            let path = out_dir.join("patterns.csv");
            export_csv(doc, std::fs::File::create(&path)?)?;
            Ok(vec![path])
        }
        ExportFormat::Dot => {
            let width = doc.result.patterns.len().max(1).to_string().len();
            (0..doc.result.patterns.len())
                .map(|j| {
                    let path = out_dir.join(format!("pattern_{j:0width$}.dot"));
                    std::fs::write(&path, pattern_dot(doc, j))?;
                    Ok(path)
                })
                .collect()
        }
    }
}
