//! Attention scores per cluster, ROI ranking and fixed-size VOI boxes.
//!
//! A cluster's attention level is `a_i = exp(N_i^2 C_i)`; it is stored as its
//! exact logarithm `N_i^2 C_i` because it overflows `f64` for modest clusters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GazeGraph;
use crate::ingest::{ScreenDescriptor, StimulusBounds};

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_VOI_SIZE: VoiSize = VoiSize { w: 40, h: 40, d: 6 };

/// Log attention level of a cluster with `n` members and `c` self-loops.
pub fn attention_log_score(n: usize, c: u64) -> f64 {
    (n as f64) * (n as f64) * (c as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    TopK(usize),
    /// Clusters whose score is at least the nearest-rank `p`-th percentile
    /// of all scores, `p` in `[0, 100]`.
    MinPercentile(f64),
}

impl Default for Selection {
    fn default() -> Self {
        Selection::TopK(DEFAULT_TOP_K)
    }
}

impl Selection {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Selection::TopK(0) => Err(Error::Argument("top_k must be >= 1".into())),
            Selection::MinPercentile(p) if !(0.0..=100.0).contains(&p) => {
                Err(Error::Argument(format!("percentile {p} outside [0, 100]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoiSize {
    pub w: u32,
    pub h: u32,
    pub d: u32,
}

impl VoiSize {
    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.d == 0 {
            return Err(Error::Argument(format!("VOI size {}x{}x{} must be positive", self.w, self.h, self.d)));
        }
        Ok(())
    }
}

impl std::str::FromStr for VoiSize {
    type Err = Error;

    /// Parses `WxHxD`, e.g. `40x40x6`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
        let bad = || Error::Config(format!("VOI size `{s}` is not of the form WxHxD"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<u32> = parts.iter().map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let size = VoiSize { w: v[0], h: v[1], d: v[2] };
        size.validate()?;
        Ok(size)
    }
}

/// Half-open voxel box `[x0, x1) x [y0, y1) x [z0, z1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Voi {
    pub x0: i64,
    pub x1: i64,
    pub y0: i64,
    pub y1: i64,
    pub z0: i64,
    pub z1: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiCentroid {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub screen_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRoi {
    pub cluster_id: usize,
    pub rank: usize,
    pub log_attention: f64,
    pub centroid: RoiCentroid,
    pub voi: Voi,
    pub screen_id: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoiSelection {
    pub rois: Vec<AttentionRoi>,
    /// Set when `top_k` asked for more clusters than exist.
    pub truncated: bool,
}

/// Window of `size` voxels centred on `c` (rounded to the nearest voxel),
/// shifted back inside `[0, extent)` without shrinking.
fn clamp_window(c: f64, size: u32, extent: u32) -> (i64, i64) {
    let size = size as i64;
    let extent = extent as i64;
    let mut lo = c.round() as i64 - size / 2;
    if lo + size > extent {
        lo = extent - size;
    }
    lo = lo.max(0);
    (lo, lo + size)
}

pub fn voi_box(centroid: [f64; 3], size: VoiSize, bounds: &StimulusBounds) -> Voi {
    let (x0, x1) = clamp_window(centroid[0], size.w, bounds.width);
    let (y0, y1) = clamp_window(centroid[1], size.h, bounds.height);
    let (z0, z1) = clamp_window(centroid[2], size.d, bounds.depth);
    Voi { x0, x1, y0, y1, z0, z1 }
}

/// Nearest-rank percentile: the smallest score with at least `p` percent of
/// scores at or below it.
pub fn nearest_rank_percentile(scores: &[f64], p: f64) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * s.len() as f64).ceil() as usize;
    Some(s[rank.clamp(1, s.len()) - 1])
}

/// Ranks clusters by log attention (ties: larger `N` first, then lower id),
/// keeps the selected ones and attaches VOI boxes clamped to each cluster's
/// screen.
pub fn extract_rois(
    graph: &GazeGraph,
    selection: Selection,
    voi_size: VoiSize,
    screens: &[ScreenDescriptor],
) -> Result<RoiSelection> {
    selection.validate()?;
    voi_size.validate()?;
    let scores: Vec<f64> = (0..graph.node_count())
        .map(|k| attention_log_score(graph.nodes()[k].size, graph.self_loops()[k]))
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(graph.nodes()[b].size.cmp(&graph.nodes()[a].size))
            .then(a.cmp(&b))
    });
    let (take, truncated) = match selection {
        Selection::TopK(k) => (k.min(order.len()), k > order.len()),
        Selection::MinPercentile(p) => match nearest_rank_percentile(&scores, p) {
            Some(cut) => (order.iter().filter(|&&k| scores[k] >= cut).count(), false),
            None => (0, false),
        },
    };
    let mut rois = Vec::with_capacity(take);
    for (r, &k) in order[..take].iter().enumerate() {
        let node = graph.nodes()[k];
        let screen = screens
            .iter()
            .find(|s| s.id == node.screen_id)
            .ok_or_else(|| Error::Config(format!("cluster {k} is on undeclared screen {}", node.screen_id)))?;
        rois.push(AttentionRoi {
            cluster_id: k,
            rank: r + 1,
            log_attention: scores[k],
            centroid: RoiCentroid { x: node.pos[0], y: node.pos[1], z: node.pos[2], screen_id: node.screen_id },
            voi: voi_box(node.pos, voi_size, &screen.stimulus),
            screen_id: node.screen_id,
        });
    }
    if truncated {
        log::warn!("top_k exceeds the {} available clusters; returning all", order.len());
    }
    Ok(RoiSelection { rois, truncated })
}
