//! BIRCH clustering of gaze samples and contraction of the sample chain onto
//! cluster centroids.

mod birch;
mod contract;

use serde::{Deserialize, Serialize};

pub use birch::{birch_cluster, CfTree};
pub use contract::{cluster_graph, contract_graph, ClusterJson, ClusteredGraph};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 25.0;
pub const DEFAULT_BRANCHING: usize = 50;

/// BIRCH summary of a point set: count, linear sum and sum of squared norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeature {
    pub n: usize,
    pub ls: [f64; 3],
    pub ss: f64,
}

impl ClusterFeature {
    pub fn singleton(p: [f64; 3]) -> Self {
        ClusterFeature { n: 1, ls: p, ss: p.iter().map(|v| v * v).sum() }
    }

    /// CF of a non-empty point set; `None` for an empty one.
    pub fn of_points(points: &[[f64; 3]]) -> Option<Self> {
        points.iter().copied().map(Self::singleton).reduce(|a, b| cf_merge(&a, &b))
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.n as f64;
        [self.ls[0] / n, self.ls[1] / n, self.ls[2] / n]
    }

    pub fn radius(&self) -> f64 {
        cluster_radius(self)
    }

    fn add_point(&mut self, p: [f64; 3]) {
        self.n += 1;
        for (acc, v) in self.ls.iter_mut().zip(p) {
            *acc += v;
        }
        self.ss += p.iter().map(|v| v * v).sum::<f64>();
    }
}

pub fn cf_merge(a: &ClusterFeature, b: &ClusterFeature) -> ClusterFeature {
    ClusterFeature {
        n: a.n + b.n,
        ls: [a.ls[0] + b.ls[0], a.ls[1] + b.ls[1], a.ls[2] + b.ls[2]],
        ss: a.ss + b.ss,
    }
}

/// Root-mean-square distance of the members to their centroid,
/// `sqrt(max(0, SS/N - |LS/N|^2))`.
pub fn cluster_radius(cf: &ClusterFeature) -> f64 {
    debug_assert!(cf.n >= 1);
    let c = cf.centroid();
    let c2: f64 = c.iter().map(|v| v * v).sum();
    (cf.ss / cf.n as f64 - c2).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    pub cf: ClusterFeature,
    /// Centroid in clustering space (slice axis scaled).
    pub centroid: [f64; 3],
    /// Raw node ids in ascending order.
    pub member_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub threshold: f64,
    pub branching: usize,
    pub slice_scale: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams { threshold: DEFAULT_THRESHOLD, branching: DEFAULT_BRANCHING, slice_scale: 1.0 }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::Argument("BIRCH threshold must be > 0".into()));
        }
        if self.branching < 2 {
            return Err(Error::Argument("BIRCH branching factor must be >= 2".into()));
        }
        if !(self.slice_scale.is_finite() && self.slice_scale > 0.0) {
            return Err(Error::Argument("slice scale must be > 0".into()));
        }
        Ok(())
    }
}
