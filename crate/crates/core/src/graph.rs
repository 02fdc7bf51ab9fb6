//! Weighted undirected gaze graphs and their Laplacians.
//!
//! Edge weights are stored as natural logarithms. Attention weights grow like
//! `exp(N^2 C)`, which leaves the `f64` range for clusters of a few dozen
//! samples, so every conversion to linear weights goes through a
//! [`WeightMode`].

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::GazeSession;

/// Largest log weight that still converts to a finite `f64`.
pub const MAX_LINEAR_LOG_WEIGHT: f64 = 709.0;

/// How log-domain weights become linear weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `w = exp(log_w - max log_w)`; the heaviest edge gets weight 1.
    #[default]
    Normalized,
    /// `w = exp(log_w)`; fails if any log weight exceeds
    /// [`MAX_LINEAR_LOG_WEIGHT`].
    RawLogCapped,
}

impl WeightMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightMode::Normalized => "normalized",
            WeightMode::RawLogCapped => "raw-log-capped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    /// `(x_vox, y_vox, z)`; `z` is the slice index for raw samples and the
    /// mean slice for cluster centroids.
    pub pos: [f64; 3],
    pub screen_id: u32,
    /// Number of raw samples represented (`N`); 1 for raw nodes.
    pub size: usize,
}

/// Undirected edge with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub log_weight: f64,
    pub multiplicity: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazeGraph {
    nodes: Vec<GraphNode>,
    self_loops: Vec<u64>,
    edges: Vec<GraphEdge>,
}

impl GazeGraph {
    /// Builds a graph, canonicalizing each edge to `i < j`.
    ///
    /// Rejects out-of-range endpoints, self edges (self-loops are counted in
    /// `self_loops`), repeated pairs and non-finite log weights.
    pub fn new(nodes: Vec<GraphNode>, self_loops: Vec<u64>, edges: Vec<GraphEdge>) -> Result<Self> {
        let n = nodes.len();
        if self_loops.len() != n {
            return Err(Error::Data(format!(
                "self-loop vector has {} entries for {n} nodes",
                self_loops.len()
            )));
        }
        let mut seen = HashMap::with_capacity(edges.len());
        let mut out = Vec::with_capacity(edges.len());
        for (k, e) in edges.into_iter().enumerate() {
            if e.i >= n || e.j >= n {
                return Err(Error::Data(format!("edge {k} ({}, {}) out of range for {n} nodes", e.i, e.j)));
            }
            if e.i == e.j {
                return Err(Error::Data(format!("edge {k} is a self edge on node {}", e.i)));
            }
            if !e.log_weight.is_finite() {
                return Err(Error::Numeric(format!("edge {k} ({}, {}) has non-finite log weight", e.i, e.j)));
            }
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            if seen.insert((i, j), k).is_some() {
                return Err(Error::Data(format!("duplicate edge ({i}, {j})")));
            }
            out.push(GraphEdge { i, j, ..e });
        }
        Ok(GazeGraph { nodes, self_loops, edges: out })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn self_loops(&self) -> &[u64] {
        &self.self_loops
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.i] += 1;
            d[e.j] += 1;
        }
        d
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn max_log_weight(&self) -> Option<f64> {
        self.edges.iter().map(|e| e.log_weight).reduce(f64::max)
    }

    /// Same nodes, different edge set.
    pub fn with_edges(&self, edges: Vec<GraphEdge>) -> Result<GazeGraph> {
        GazeGraph::new(self.nodes.clone(), self.self_loops.clone(), edges)
    }

    /// Unweighted adjacency lists, neighbours in ascending order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Connected component label per node (labels ordered by smallest
    /// member) and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.nodes.len();
        let mut uf = UnionFind::new(n);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        let mut label = vec![usize::MAX; n];
        let mut root_label = HashMap::new();
        for (v, l) in label.iter_mut().enumerate() {
            let r = uf.find(v);
            let next = root_label.len();
            *l = *root_label.entry(r).or_insert(next);
        }
        (label, root_label.len())
    }

    /// Linear weights under `mode`, in edge order.
    pub fn linear_weights(&self, mode: WeightMode) -> Result<Vec<f64>> {
        match mode {
            WeightMode::Normalized => {
                let shift = self.max_log_weight().unwrap_or(0.0);
                Ok(self.shifted_weights(shift))
            }
            WeightMode::RawLogCapped => self
                .edges
                .iter()
                .map(|e| {
                    if e.log_weight > MAX_LINEAR_LOG_WEIGHT {
                        Err(Error::Numeric(format!(
                            "edge ({}, {}) has log weight {} which overflows in raw mode; use normalized weights",
                            e.i, e.j, e.log_weight
                        )))
                    } else {
                        Ok(e.log_weight.exp())
                    }
                })
                .collect(),
        }
    }

    /// `exp(log_w - shift)` per edge.
    pub fn shifted_weights(&self, shift: f64) -> Vec<f64> {
        self.edges.iter().map(|e| (e.log_weight - shift).exp()).collect()
    }
}

/// Chain graph over the session's points: one unit-weight edge per
/// consecutive pair inside a segment.
pub fn build_raw_graph(session: &GazeSession) -> Result<GazeGraph> {
    if session.points.is_empty() {
        return Err(Error::EmptySession);
    }
    let nodes = session
        .points
        .iter()
        .map(|p| GraphNode {
            pos: [p.x_vox, p.y_vox, p.z_slice as f64],
            screen_id: p.screen_id,
            size: 1,
        })
        .collect::<Vec<_>>();
    let edges = session
        .consecutive_pairs()
        .map(|p| GraphEdge { i: p.from, j: p.to, log_weight: 0.0, multiplicity: 1 })
        .collect();
    let n = nodes.len();
    GazeGraph::new(nodes, vec![0; n], edges)
}

fn laplacian_from(n: usize, edges: &[GraphEdge], weights: &[f64]) -> Result<DMatrix<f64>> {
    let mut l = DMatrix::zeros(n, n);
    for (e, &w) in edges.iter().zip(weights) {
        if !w.is_finite() {
            return Err(Error::Numeric(format!("edge ({}, {}) has non-finite linear weight", e.i, e.j)));
        }
        l[(e.i, e.j)] -= w;
        l[(e.j, e.i)] -= w;
        l[(e.i, e.i)] += w;
        l[(e.j, e.j)] += w;
    }
    Ok(l)
}

/// Dense Laplacian: `L(i,j) = -w_ij`, `L(i,i) = sum_z w_iz`. Self-loops do
/// not contribute.
pub fn laplacian(g: &GazeGraph, mode: WeightMode) -> Result<DMatrix<f64>> {
    let w = g.linear_weights(mode)?;
    laplacian_from(g.node_count(), g.edges(), &w)
}

/// Laplacian with weights `exp(log_w - shift)`, for comparing graphs on a
/// shared scale.
pub fn laplacian_shifted(g: &GazeGraph, shift: f64) -> Result<DMatrix<f64>> {
    laplacian_from(g.node_count(), g.edges(), &g.shifted_weights(shift))
}

/// `sum over edges of w_ij (x_i - x_j)^2`.
pub fn quadratic_form(g: &GazeGraph, x: &[f64], mode: WeightMode) -> Result<f64> {
    if x.len() != g.node_count() {
        return Err(Error::Argument(format!(
            "probe has length {} for a graph with {} nodes",
            x.len(),
            g.node_count()
        )));
    }
    let w = g.linear_weights(mode)?;
    Ok(g.edges().iter().zip(&w).map(|(e, w)| w * (x[e.i] - x[e.j]).powi(2)).sum())
}

/// Natural log of the quadratic form with the raw (unnormalized) weights,
/// evaluated by log-sum-exp so it never overflows. `-inf` when the form is 0.
pub fn log_quadratic_form(g: &GazeGraph, x: &[f64]) -> Result<f64> {
    if x.len() != g.node_count() {
        return Err(Error::Argument(format!(
            "probe has length {} for a graph with {} nodes",
            x.len(),
            g.node_count()
        )));
    }
    let terms = g.edges().iter().filter_map(|e| {
        let d = (x[e.i] - x[e.j]).abs();
        (d > 0.0).then(|| e.log_weight + 2.0 * d.ln())
    });
    Ok(log_sum_exp(terms))
}

pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub(crate) fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub screen_id: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "C")]
    pub c: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub i: usize,
    pub j: usize,
    pub log_w: f64,
    pub mult: u64,
}

/// On-disk graph: `{nodes:[{id,x,y,z,screen_id,N,C}], edges:[{i,j,log_w,mult}], self_loops:{id:count}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
    pub self_loops: BTreeMap<usize, u64>,
}

impl From<&GazeGraph> for GraphJson {
    fn from(g: &GazeGraph) -> Self {
        GraphJson {
            nodes: g
                .nodes
                .iter()
                .zip(&g.self_loops)
                .enumerate()
                .map(|(id, (n, &c))| NodeJson {
                    id,
                    x: n.pos[0],
                    y: n.pos[1],
                    z: n.pos[2],
                    screen_id: n.screen_id,
                    n: n.size,
                    c,
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|e| EdgeJson { i: e.i, j: e.j, log_w: e.log_weight, mult: e.multiplicity })
                .collect(),
            self_loops: g
                .self_loops
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(id, &c)| (id, c))
                .collect(),
        }
    }
}

impl TryFrom<GraphJson> for GazeGraph {
    type Error = Error;

    fn try_from(j: GraphJson) -> Result<Self> {
        for (k, n) in j.nodes.iter().enumerate() {
            if n.id != k {
                return Err(Error::Data(format!("node ids must be 0..n in order; found {} at {k}", n.id)));
            }
            if j.self_loops.get(&k).copied().unwrap_or(0) != n.c {
                return Err(Error::Data(format!("node {k}: C does not match self_loops entry")));
            }
        }
        if let Some((&id, _)) = j.self_loops.iter().find(|(&id, _)| id >= j.nodes.len()) {
            return Err(Error::Data(format!("self_loops references unknown node {id}")));
        }
        let self_loops = j.nodes.iter().map(|n| n.c).collect();
        let nodes = j
            .nodes
            .into_iter()
            .map(|n| GraphNode { pos: [n.x, n.y, n.z], screen_id: n.screen_id, size: n.n })
            .collect();
        let edges = j
            .edges
            .into_iter()
            .map(|e| GraphEdge { i: e.i, j: e.j, log_weight: e.log_w, multiplicity: e.mult })
            .collect();
        GazeGraph::new(nodes, self_loops, edges)
    }
}


#[cfg(test)]
mod tests {
    use super::test_graphs::*;
    use super::*;
    use crate::ingest::{generate_synthetic_gaze, Segment, SynthBounds};
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn chain_session(sizes: &[usize]) -> GazeSession {
        let total: usize = sizes.iter().sum();
        let mut s = generate_synthetic_gaze(total, SynthBounds::default(), 0.1, 1).unwrap();
        let mut start = 0;
        s.segments = sizes
            .iter()
            .map(|&len| {
                let seg = Segment { start, end: start + len };
                start += len;
                seg
            })
            .collect();
        s
    }

    #[test]
    fn raw_graph_of_three_point_chain() {
        let g = build_raw_graph(&chain_session(&[3])).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn raw_graph_respects_segments() {
        let g = build_raw_graph(&chain_session(&[2, 2])).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 2));
        assert_eq!(g.components().1, 2);
    }

    #[test]
    fn raw_graph_rejects_empty_session() {
        let mut s = chain_session(&[2]);
        s.points.clear();
        s.segments.clear();
        assert!(matches!(build_raw_graph(&s), Err(Error::EmptySession)));
    }

    #[test]
    fn graph_rejects_bad_edges() {
        let nodes = vec![node(0.0), node(1.0)];
        let e = |i, j, lw| GraphEdge { i, j, log_weight: lw, multiplicity: 1 };
        assert!(GazeGraph::new(nodes.clone(), vec![0, 0], vec![e(0, 0, 0.0)]).is_err());
        assert!(GazeGraph::new(nodes.clone(), vec![0, 0], vec![e(0, 2, 0.0)]).is_err());
        assert!(GazeGraph::new(nodes.clone(), vec![0, 0], vec![e(0, 1, 0.0), e(1, 0, 1.0)]).is_err());
        assert!(matches!(
            GazeGraph::new(nodes.clone(), vec![0, 0], vec![e(0, 1, f64::NAN)]),
            Err(Error::Numeric(_))
        ));
        let g = GazeGraph::new(nodes, vec![0, 0], vec![e(1, 0, 0.5)]).unwrap();
        assert_eq!((g.edges()[0].i, g.edges()[0].j), (0, 1));
    }

    #[test]
    fn laplacian_small_cases() {
        let l = laplacian(&unit_graph(2, &[(0, 1)]), WeightMode::Normalized).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));

        let l = laplacian(&unit_graph(3, &[(0, 1), (1, 2), (0, 2)]), WeightMode::RawLogCapped).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[(i, j)], if i == j { 2.0 } else { -1.0 });
            }
        }

        let l = laplacian(&unit_graph(3, &[(0, 1)]), WeightMode::Normalized).unwrap();
        assert!(l.row(2).iter().chain(l.column(2).iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn raw_mode_refuses_overflowing_weights() {
        let g = weighted_graph(2, &[(0, 1, 800.0)]);
        let err = laplacian(&g, WeightMode::RawLogCapped).unwrap_err();
        assert!(matches!(err, Error::Numeric(ref m) if m.contains("(0, 1)") && m.contains("normalized")));
        let l = laplacian(&g, WeightMode::Normalized).unwrap();
        assert_eq!(l[(0, 0)], 1.0);
    }

    #[test]
    fn quadratic_form_basics() {
        let g = unit_graph(2, &[(0, 1)]);
        assert_eq!(quadratic_form(&g, &[1.0, 0.0], WeightMode::Normalized).unwrap(), 1.0);
        let k = complete(5);
        assert_eq!(quadratic_form(&k, &[3.0; 5], WeightMode::Normalized).unwrap(), 0.0);
        assert!(matches!(quadratic_form(&g, &[1.0], WeightMode::Normalized), Err(Error::Argument(_))));
        assert_eq!(log_quadratic_form(&k, &[3.0; 5]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn quadratic_form_matches_matrix_product_on_random_graph() {
        let mut rng = seed::rng(5);
        let g = random_graph(10, 0.4, 2.0, &mut rng);
        let l = laplacian(&g, WeightMode::RawLogCapped).unwrap();
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xv = nalgebra::DVector::from_column_slice(&x);
        let direct = (xv.transpose() * &l * &xv)[(0, 0)];
        let q = quadratic_form(&g, &x, WeightMode::RawLogCapped).unwrap();
        assert!((q - direct).abs() < 1e-9);
        let lq = log_quadratic_form(&g, &x).unwrap();
        assert!((lq.exp() - q).abs() < 1e-9 * q.max(1.0));
    }

    #[test]
    fn json_round_trip_preserves_graph() {
        let mut rng = seed::rng(9);
        let g = random_graph(12, 0.3, 5.0, &mut rng);
        let g = GazeGraph::new(g.nodes().to_vec(), (0..12).map(|k| k % 3).collect(), g.edges().to_vec()).unwrap();
        let text = crate::jsonfmt::to_string(&GraphJson::from(&g)).unwrap();
        let back: GraphJson = serde_json::from_str(&text).unwrap();
        assert_eq!(GazeGraph::try_from(back).unwrap(), g);
    }

    proptest! {
        #[test]
        fn laplacian_invariants(n in 1usize..50, p in 0.05f64..0.9, lw in 0.0f64..4.0, seed in any::<u64>()) {
            let mut rng = crate::seed::rng(seed);
            let g = random_graph(n, p, lw, &mut rng);
            let l = laplacian(&g, WeightMode::Normalized).unwrap();
            prop_assert_eq!(&l, &l.transpose());
            for i in 0..n {
                prop_assert!(l.row(i).sum().abs() < 1e-9);
            }
            for _ in 0..5 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let xv = nalgebra::DVector::from_column_slice(&x);
                let direct = (xv.transpose() * &l * &xv)[(0, 0)];
                prop_assert!(direct >= -1e-9);
                let q = quadratic_form(&g, &x, WeightMode::Normalized).unwrap();
                prop_assert!((q - direct).abs() < 1e-9);
            }
        }

        #[test]
        fn raw_graph_is_a_chain(sizes in proptest::collection::vec(1usize..40, 1..6)) {
            let g = build_raw_graph(&chain_session(&sizes)).unwrap();
            prop_assert_eq!(g.node_count(), sizes.iter().sum::<usize>());
            prop_assert_eq!(g.edge_count(), sizes.iter().map(|s| s - 1).sum::<usize>());
            prop_assert!(g.max_degree() <= 2);
        }
    }
}
