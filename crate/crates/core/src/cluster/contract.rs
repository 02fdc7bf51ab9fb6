use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{birch_cluster, Cluster, ClusterParams};
use crate::error::{Error, Result};
use crate::graph::{GazeGraph, GraphEdge, GraphNode};
use crate::sparsify::edge_log_weight;

/// The contracted graph: one node per cluster carrying `N` (members) and `C`
/// (intra-cluster edges, stored as self-loops), inter-cluster edges carrying
/// their raw multiplicity and attention log weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredGraph {
    pub graph: GazeGraph,
    pub clusters: Vec<Cluster>,
}

impl ClusteredGraph {
    pub fn cluster_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.clusters[cluster].member_ids
    }

    pub fn total_self_loops(&self) -> u64 {
        self.graph.self_loops().iter().sum()
    }

    pub fn total_multiplicity(&self) -> u64 {
        self.graph.edges().iter().map(|e| e.multiplicity).sum()
    }

    /// Induced subgraph on the clusters of one screen, with cluster ids
    /// renumbered in order.
    pub fn screen_subgraph(&self, screen_id: u32) -> Result<ClusteredGraph> {
        let keep: Vec<usize> = (0..self.cluster_count())
            .filter(|&k| self.graph.nodes()[k].screen_id == screen_id)
            .collect();
        let mut remap = vec![usize::MAX; self.cluster_count()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let nodes = keep.iter().map(|&k| self.graph.nodes()[k]).collect();
        let loops = keep.iter().map(|&k| self.graph.self_loops()[k]).collect();
        let edges = self
            .graph
            .edges()
            .iter()
            .filter(|e| remap[e.i] != usize::MAX && remap[e.j] != usize::MAX)
            .map(|e| GraphEdge { i: remap[e.i], j: remap[e.j], ..*e })
            .collect();
        let clusters = keep
            .iter()
            .enumerate()
            .map(|(new, &old)| Cluster { id: new, ..self.clusters[old].clone() })
            .collect();
        Ok(ClusteredGraph { graph: GazeGraph::new(nodes, loops, edges)?, clusters })
    }

    pub fn to_cluster_json(&self) -> Vec<ClusterJson> {
        self.clusters
            .iter()
            .map(|c| {
                let n = &self.graph.nodes()[c.id];
                ClusterJson {
                    id: c.id,
                    centroid: CentroidJson { x: n.pos[0], y: n.pos[1], z: n.pos[2], screen_id: n.screen_id },
                    n: n.size,
                    c: self.graph.self_loops()[c.id],
                    radius: c.cf.radius(),
                    member_count: c.member_ids.len(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidJson {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub screen_id: u32,
}

/// Cluster export row: `{id, centroid:{x,y,z,screen_id}, N, C, radius, member_count}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterJson {
    pub id: usize,
    pub centroid: CentroidJson,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "C")]
    pub c: u64,
    pub radius: f64,
    pub member_count: usize,
}

/// Contracts `raw` onto `clusters`, which must partition its nodes.
///
/// Centroid positions are member means in stimulus coordinates. Edges between
/// clusters merge into one edge whose multiplicity counts the raw edges;
/// edges inside a cluster become self-loops. Edge log weights follow the
/// attention formula `N_i^2 C_i + N_j^2 C_j`.
pub fn contract_graph(raw: &GazeGraph, clusters: &[Cluster]) -> Result<ClusteredGraph> {
    let n = raw.node_count();
    let mut owner = vec![usize::MAX; n];
    for (k, c) in clusters.iter().enumerate() {
        if c.member_ids.is_empty() {
            return Err(Error::Partition(format!("cluster {k} has no members")));
        }
        for &m in &c.member_ids {
            if m >= n {
                return Err(Error::Partition(format!("cluster {k} references unknown node {m}")));
            }
            if owner[m] != usize::MAX {
                return Err(Error::Partition(format!("node {m} is in clusters {} and {k}", owner[m])));
            }
            owner[m] = k;
        }
    }
    if let Some(m) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::Partition(format!("node {m} is not covered by any cluster")));
    }

    let mut self_loops = vec![0u64; clusters.len()];
    let mut inter: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for e in raw.edges() {
        let (a, b) = (owner[e.i], owner[e.j]);
        if a == b {
            self_loops[a] += e.multiplicity;
        } else {
            *inter.entry((a.min(b), a.max(b))).or_insert(0) += e.multiplicity;
        }
    }
    // raw self-loops (already-contracted input) stay with their cluster
    for (v, &c) in raw.self_loops().iter().enumerate() {
        self_loops[owner[v]] += c;
    }

    let nodes: Vec<GraphNode> = clusters
        .iter()
        .map(|c| {
            let mut pos = [0.0; 3];
            let mut size = 0;
            for &m in &c.member_ids {
                let node = &raw.nodes()[m];
                for (acc, v) in pos.iter_mut().zip(node.pos) {
                    *acc += v;
                }
                size += node.size;
            }
            let cnt = c.member_ids.len() as f64;
            GraphNode {
                pos: pos.map(|v| v / cnt),
                screen_id: raw.nodes()[c.member_ids[0]].screen_id,
                size,
            }
        })
        .collect();

    let edges = inter
        .into_iter()
        .map(|((i, j), mult)| GraphEdge {
            i,
            j,
            log_weight: edge_log_weight(nodes[i].size, self_loops[i], nodes[j].size, self_loops[j]),
            multiplicity: mult,
        })
        .collect();

    let clusters = clusters.iter().enumerate().map(|(k, c)| Cluster { id: k, ..c.clone() }).collect();
    Ok(ClusteredGraph { graph: GazeGraph::new(nodes, self_loops, edges)?, clusters })
}

/// Clusters the raw graph's nodes screen by screen (a cluster never spans
/// screens) and contracts. Cluster ids follow the smallest raw member id.
pub fn cluster_graph(raw: &GazeGraph, params: &ClusterParams) -> Result<ClusteredGraph> {
    params.validate()?;
    if raw.node_count() == 0 {
        return Err(Error::EmptySession);
    }
    let screens: BTreeSet<u32> = raw.nodes().iter().map(|n| n.screen_id).collect();
    let mut clusters = Vec::new();
    for screen in screens {
        let ids: Vec<usize> = (0..raw.node_count()).filter(|&v| raw.nodes()[v].screen_id == screen).collect();
        let pts: Vec<[f64; 3]> = ids
            .iter()
            .map(|&v| {
                let p = raw.nodes()[v].pos;
                [p[0], p[1], p[2] * params.slice_scale]
            })
            .collect();
        for mut c in birch_cluster(&pts, params.threshold, params.branching)? {
            for m in &mut c.member_ids {
                *m = ids[*m];
            }
            clusters.push(c);
        }
    }
    clusters.sort_by_key(|c| c.member_ids[0]);
    contract_graph(raw, &clusters)
}
