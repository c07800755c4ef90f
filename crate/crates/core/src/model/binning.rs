use serde::{Deserialize, Serialize};

use super::EdgeKey;
use crate::error::{GragraError, Result};

/// An edge as read from input, before its weight is binned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEdge {
    pub src: u32,
    pub dst: u32,
    pub weight: f64,
}

/// Equal-width binning over a dataset-wide weight range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightBinning {
    pub min: f64,
    pub max: f64,
    pub bins: u16,
}

impl WeightBinning {
    pub fn fit(weights: impl IntoIterator<Item = f64>, bins: u16) -> Result<Self> {
        if bins == 0 {
            return Err(GragraError::Config("at least one weight bin is required".into()));
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for w in weights {
            if !w.is_finite() {
                return Err(GragraError::NonFiniteWeight(w));
            }
            min = min.min(w);
            max = max.max(w);
        }
        if min > max {
            min = 0.0;
            max = 0.0;
        }
        Ok(WeightBinning { min, max, bins })
    }

    /// `floor(bins * (w - min) / (max - min))`, clamped to the top bin.
    /// A degenerate range puts everything into bin 0.
    pub fn bin(&self, w: f64) -> u16 {
        let range = self.max - self.min;
        if range <= 0.0 {
            return 0;
        }
        let raw = (self.bins as f64 * (w - self.min) / range).floor();
        raw.clamp(0.0, (self.bins - 1) as f64) as u16
    }
}

/// Bins every raw edge weight using the min/max over the whole list.
pub fn bin_weights(raw_edges: &[RawEdge], bins: u16) -> Result<Vec<EdgeKey>> {
    let binning = WeightBinning::fit(raw_edges.iter().map(|e| e.weight), bins)?;
    Ok(raw_edges
        .iter()
        .map(|e| EdgeKey::new(e.src, e.dst, binning.bin(e.weight)))
        .collect())
}
