//! Effective resistances and leverage scores (`w_e * r_e`).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{GazeGraph, UnionFind, WeightMode};

/// Per-edge effective resistance, in the linear units of `weight_mode`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveResistanceMap {
    pub weight_mode: WeightMode,
    /// Log weight subtracted before exponentiation (0 in raw mode).
    pub shift: f64,
    pub weights: Vec<f64>,
    pub resistances: Vec<f64>,
}

impl EffectiveResistanceMap {
    /// `sum_e w_e r_e`; equals `|V| - #components` (Foster).
    pub fn foster_sum(&self) -> f64 {
        self.weights.iter().zip(&self.resistances).map(|(w, r)| w * r).sum()
    }
}

/// Pseudoinverse of a connected Laplacian block: `(L + J/k)^-1 - J/k`.
/// Falls back to an eigendecomposition when Cholesky breaks down.
fn pinv_connected(l: DMatrix<f64>) -> DMatrix<f64> {
    let k = l.nrows();
    let j = 1.0 / k as f64;
    let shifted = l.map(|v| v + j);
    match shifted.clone().cholesky() {
        Some(ch) => ch.inverse().map(|v| v - j),
        None => {
            let eig = SymmetricEigen::new(l);
            let tol = eig.eigenvalues.amax() * k as f64 * f64::EPSILON;
            let mut p = DMatrix::zeros(k, k);
            for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > tol {
                    let v = eig.eigenvectors.column(idx);
                    p += (v * v.transpose()) / lam;
                }
            }
            p
        }
    }
}

struct Block {
    nodes: Vec<usize>,
    /// (local i, local j, weight, caller tag)
    edges: Vec<(usize, usize, f64, usize)>,
}

/// Splits an edge list over `n` nodes into connected blocks.
fn blocks(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Block> {
    let mut uf = UnionFind::new(n);
    for &(i, j, _) in edges {
        uf.union(i, j);
    }
    let mut root_block = std::collections::HashMap::new();
    let mut local = vec![usize::MAX; n];
    let mut out: Vec<Block> = Vec::new();
    for (tag, &(i, j, w)) in edges.iter().enumerate() {
        let r = uf.find(i);
        let b = *root_block.entry(r).or_insert_with(|| {
            out.push(Block { nodes: Vec::new(), edges: Vec::new() });
            out.len() - 1
        });
        for v in [i, j] {
            if local[v] == usize::MAX {
                local[v] = out[b].nodes.len();
                out[b].nodes.push(v);
            }
        }
        out[b].edges.push((local[i], local[j], w, tag));
    }
    out
}

/// Resistance for every edge of every block, returned by caller tag.
fn block_resistances(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut r = vec![0.0; edges.len()];
    for b in blocks(n, edges) {
        let k = b.nodes.len();
        let mut l = DMatrix::zeros(k, k);
        for &(i, j, w, _) in &b.edges {
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
        let p = pinv_connected(l);
        for &(i, j, _, tag) in &b.edges {
            r[tag] = (p[(i, i)] + p[(j, j)] - 2.0 * p[(i, j)]).max(0.0);
        }
    }
    r
}

/// Exact effective resistances `(e_i - e_j)^T L^+ (e_i - e_j)` via a dense
/// pseudoinverse of each connected component's Laplacian.
///
/// In normalized mode an edge whose weight underflows to zero makes the
/// Laplacian numerically disconnected; that is reported as a numeric error
/// (use [`leverage_scores`] for such graphs).
pub fn effective_resistances(g: &GazeGraph, mode: WeightMode) -> Result<EffectiveResistanceMap> {
    let weights = g.linear_weights(mode)?;
    if let Some((e, _)) = g.edges().iter().zip(&weights).find(|(_, &w)| !(w > 0.0 && w.is_finite())) {
        return Err(Error::Numeric(format!(
            "edge ({}, {}) weight is not representable after {} conversion; resistances need a finite positive weight",
            e.i,
            e.j,
            mode.as_str()
        )));
    }
    let list: Vec<_> = g.edges().iter().zip(&weights).map(|(e, &w)| (e.i, e.j, w)).collect();
    let resistances = block_resistances(g.node_count(), &list);
    let shift = match mode {
        WeightMode::Normalized => g.max_log_weight().unwrap_or(0.0),
        WeightMode::RawLogCapped => 0.0,
    };
    Ok(EffectiveResistanceMap { weight_mode: mode, shift, weights, resistances })
}

/// Log-weight gap beyond which two weight scales are treated as separated:
/// `exp(-36)` is below `f64` resolution.
pub const SCALE_GAP: f64 = 36.0;

/// Widest log-weight span solved jointly. Wider bands are cut at their
/// largest internal gap so relative weights stay far from underflow.
pub const MAX_BAND_WIDTH: f64 = 600.0;

/// Effective resistances of a connected conductance network by
/// subtraction-free Gaussian elimination.
///
/// Pivots are recomputed as sums of the remaining conductances instead of by
/// subtracting fill from the diagonal, and `(I - P)^-1` of the strictly upper
/// transition matrix is accumulated from non-negative terms only. Both stay
/// accurate when conductances span hundreds of orders of magnitude, where a
/// shifted Cholesky loses the light edges entirely.
fn eliminate_resistances(k: usize, pairs: &[(usize, usize, f64)]) -> Vec<f64> {
    if k < 2 {
        return vec![0.0; pairs.len()];
    }
    // ground the node with the largest weighted degree: eliminate it last
    let mut deg = vec![0.0; k];
    for &(i, j, w) in pairs {
        deg[i] += w;
        deg[j] += w;
    }
    let ground = (0..k).fold(0, |best, v| if deg[v] > deg[best] { v } else { best });
    let mut pos: Vec<usize> = (0..k).collect();
    pos.swap(ground, k - 1);
    // pos is an involution: old index <-> new index
    let mut c = DMatrix::<f64>::zeros(k, k);
    for &(i, j, w) in pairs {
        let (a, b) = (pos[i], pos[j]);
        c[(a, b)] += w;
        c[(b, a)] += w;
    }
    let r = k - 1;
    let mut d = vec![0.0; r];
    let mut p = DMatrix::<f64>::zeros(r, k);
    for i in 0..r {
        let di: f64 = (i + 1..k).map(|j| c[(i, j)]).sum();
        d[i] = di;
        if di <= 0.0 {
            continue;
        }
        let nbrs: Vec<usize> = (i + 1..k).filter(|&j| c[(i, j)] > 0.0).collect();
        for &a in &nbrs {
            p[(i, a)] = c[(i, a)] / di;
        }
        for (x, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[x + 1..] {
                let fill = c[(i, a)] * (c[(i, b)] / di);
                c[(a, b)] += fill;
                c[(b, a)] += fill;
            }
        }
    }
    // V = (I - P)^-1 restricted to the non-ground coordinates, row by row
    let mut v = DMatrix::<f64>::zeros(r, r);
    for i in (0..r).rev() {
        v[(i, i)] = 1.0;
        for j in i + 1..r {
            let pij = p[(i, j)];
            if pij > 0.0 {
                for t in j..r {
                    v[(i, t)] += pij * v[(j, t)];
                }
            }
        }
    }
    pairs
        .iter()
        .map(|&(i, j, _)| {
            let (a, b) = (pos[i], pos[j]);
            (0..r)
                .filter(|&t| d[t] > 0.0)
                .map(|t| {
                    let va = if a < r { v[(a, t)] } else { 0.0 };
                    let vb = if b < r { v[(b, t)] } else { 0.0 };
                    (va - vb).powi(2) / d[t]
                })
                .sum()
        })
        .collect()
}

/// Splits the heaviest-first edge order into weight bands.
fn bands(g: &GazeGraph, order: &[usize]) -> Vec<std::ops::Range<usize>> {
    let lw = |k: usize| g.edges()[order[k]].log_weight;
    let mut out = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && lw(end - 1) - lw(end) <= SCALE_GAP {
            end += 1;
        }
        let mut stack: Vec<std::ops::Range<usize>> = Vec::new();
        stack.push(start..end);
        while let Some(range) = stack.pop() {
            if lw(range.start) - lw(range.end - 1) <= MAX_BAND_WIDTH {
                out.push(range);
                continue;
            }
            let cut = (range.start + 1..range.end)
                .max_by(|&a, &b| (lw(a - 1) - lw(a)).total_cmp(&(lw(b - 1) - lw(b))).then(b.cmp(&a)))
                .expect("wide band has at least two edges");
            // lighter half first on the stack so the heavier half pops first
            stack.push(cut..range.end);
            stack.push(range.start..cut);
        }
        start = end;
    }
    out
}

/// Leverage scores `w_e r_e` in `[0, 1]` for graphs whose log weights span
/// far more than the `f64` range.
///
/// Edges are processed from heaviest to lightest in bands of log weights
/// whose consecutive gaps are at most [`SCALE_GAP`]. For each band, the
/// components formed by all heavier bands are contracted to single nodes
/// (their internal resistance is negligible at this scale), lighter edges
/// are left open, and the band's own edges are solved exactly with weights
/// relative to the band maximum. An edge whose endpoints are already joined
/// by heavier edges has leverage 0 to within `exp(-SCALE_GAP)`.
pub fn leverage_scores(g: &GazeGraph) -> Vec<f64> {
    let m = g.edge_count();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| g.edges()[b].log_weight.total_cmp(&g.edges()[a].log_weight).then(a.cmp(&b)));

    let mut lev = vec![0.0; m];
    let mut uf = UnionFind::new(g.node_count());
    for range in bands(g, &order) {
        let band = &order[range];
        let top = g.edges()[band[0]].log_weight;

        // contract heavier components; parallel band edges add up
        let mut super_id = std::collections::HashMap::new();
        let mut pair_weight: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
        let mut live = Vec::new();
        for &e in band {
            let edge = &g.edges()[e];
            let (a, b) = (uf.find(edge.i), uf.find(edge.j));
            if a == b {
                continue;
            }
            let next = super_id.len();
            let sa = *super_id.entry(a).or_insert(next);
            let next = super_id.len();
            let sb = *super_id.entry(b).or_insert(next);
            let key = (sa.min(sb), sa.max(sb));
            let w = (edge.log_weight - top).exp();
            *pair_weight.entry(key).or_insert(0.0) += w;
            live.push((e, key, w));
        }
        if !live.is_empty() {
            let pairs: Vec<_> = pair_weight.iter().map(|(&(i, j), &w)| (i, j, w)).collect();
            let mut r = vec![0.0; pairs.len()];
            for b in blocks(super_id.len(), &pairs) {
                let local: Vec<_> = b.edges.iter().map(|&(i, j, w, _)| (i, j, w)).collect();
                let rb = eliminate_resistances(b.nodes.len(), &local);
                for (&(_, _, _, tag), rv) in b.edges.iter().zip(rb) {
                    r[tag] = rv;
                }
            }
            let index: std::collections::HashMap<(usize, usize), usize> =
                pair_weight.keys().enumerate().map(|(k, &key)| (key, k)).collect();
            for (e, key, w) in live {
                lev[e] = (w * r[index[&key]]).clamp(0.0, 1.0);
            }
        }
        for &e in band {
            uf.union(g.edges()[e].i, g.edges()[e].j);
        }
    }
    lev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::*;
    use crate::seed;
    use rand::Rng;

    /// Independent oracle: resistance from one linear solve with node `j`
    /// grounded, `L_red x = e_i`, `r = x_i`.
    fn grounded_resistance(g: &GazeGraph, i: usize, j: usize) -> f64 {
        let l = crate::graph::laplacian(g, WeightMode::RawLogCapped).unwrap();
        let n = l.nrows();
        let keep: Vec<usize> = (0..n).filter(|&v| v != j).collect();
        // restrict to j's component
        let (label, _) = g.components();
        let keep: Vec<usize> = keep.into_iter().filter(|&v| label[v] == label[j]).collect();
        let red = DMatrix::from_fn(keep.len(), keep.len(), |a, b| l[(keep[a], keep[b])]);
        let pos = keep.iter().position(|&v| v == i).unwrap();
        let mut rhs = nalgebra::DVector::zeros(keep.len());
        rhs[pos] = 1.0;
        let x = red.lu().solve(&rhs).unwrap();
        x[pos]
    }

    #[test]
    fn bridge_has_unit_resistance() {
        let r = effective_resistances(&unit_graph(2, &[(0, 1)]), WeightMode::Normalized).unwrap();
        assert!((r.resistances[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_resistances_two_thirds() {
        let g = unit_graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let r = effective_resistances(&g, WeightMode::RawLogCapped).unwrap();
        for &v in &r.resistances {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        for e in g.edges() {
            assert!((grounded_resistance(&g, e.i, e.j) - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resistances_match_grounded_solves() {
        let mut rng = seed::rng(17);
        for _ in 0..10 {
            let g = random_graph(25, 0.2, 2.0, &mut rng);
            let r = effective_resistances(&g, WeightMode::RawLogCapped).unwrap();
            for (k, e) in g.edges().iter().enumerate() {
                let oracle = grounded_resistance(&g, e.i, e.j);
                assert!((r.resistances[k] - oracle).abs() < 1e-9 * oracle.max(1.0));
                assert!(r.resistances[k] <= 1.0 / r.weights[k] + 1e-9);
            }
            let (_, comps) = g.components();
            let isolated = g.degrees().iter().filter(|&&d| d == 0).count();
            assert!((r.foster_sum() - (g.node_count() - comps) as f64).abs() < 1e-6, "isolated={isolated}");
        }
    }

    #[test]
    fn bridge_resistance_is_inverse_weight() {
        // two triangles joined by a bridge of weight e^1.5
        let g = weighted_graph(
            6,
            &[(0, 1, 0.0), (1, 2, 0.3), (0, 2, -0.2), (2, 3, 1.5), (3, 4, 0.0), (4, 5, 0.1), (3, 5, 0.0)],
        );
        let r = effective_resistances(&g, WeightMode::RawLogCapped).unwrap();
        assert!((r.resistances[3] - (-1.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn removing_edges_never_lowers_resistance() {
        let mut rng = seed::rng(23);
        for _ in 0..5 {
            let g = random_connected(15, 20, 1.0, &mut rng);
            let base = effective_resistances(&g, WeightMode::RawLogCapped).unwrap();
            for drop in 0..g.edge_count() {
                let kept: Vec<_> = g.edges().iter().enumerate().filter(|(k, _)| *k != drop).map(|(_, e)| *e).collect();
                let h = g.with_edges(kept).unwrap();
                let r = effective_resistances(&h, WeightMode::RawLogCapped).unwrap();
                let mut k2 = 0;
                for k in 0..g.edge_count() {
                    if k == drop {
                        continue;
                    }
                    assert!(r.resistances[k2] >= base.resistances[k] - 1e-9);
                    k2 += 1;
                }
            }
        }
    }

    #[test]
    fn underflowing_weights_are_a_numeric_error() {
        let g = weighted_graph(3, &[(0, 1, 0.0), (1, 2, 5000.0)]);
        assert!(matches!(effective_resistances(&g, WeightMode::Normalized), Err(Error::Numeric(_))));
        assert!(matches!(effective_resistances(&g, WeightMode::RawLogCapped), Err(Error::Numeric(_))));
    }

    #[test]
    fn leverage_agrees_with_direct_route_on_well_scaled_graphs() {
        let mut rng = seed::rng(29);
        for _ in 0..10 {
            let g = random_graph(30, 0.2, 3.0, &mut rng);
            let r = effective_resistances(&g, WeightMode::RawLogCapped).unwrap();
            let lev = leverage_scores(&g);
            for ((l, w), res) in lev.iter().zip(&r.weights).zip(&r.resistances) {
                assert!((l - w * res).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn elimination_matches_pseudoinverse() {
        let mut rng = seed::rng(37);
        for _ in 0..10 {
            let g = random_connected(40, 60, 2.0, &mut rng);
            let direct = effective_resistances(&g, WeightMode::RawLogCapped).unwrap();
            let pairs: Vec<_> =
                g.edges().iter().zip(&direct.weights).map(|(e, &w)| (e.i, e.j, w)).collect();
            let r = eliminate_resistances(g.node_count(), &pairs);
            for (got, want) in r.iter().zip(&direct.resistances) {
                assert!((got - want).abs() < 1e-9 * want.max(1.0));
            }
        }
    }

    #[test]
    fn elimination_keeps_light_bridges_exact() {
        // heavy triangle plus a bridge 1e-200 times lighter
        let pairs = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (2, 3, 1e-200), (3, 4, 1e-200)];
        let r = eliminate_resistances(5, &pairs);
        assert!((r[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r[3] * 1e-200 - 1.0).abs() < 1e-12);
        assert!((r[4] * 1e-200 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leverage_handles_widely_separated_scales() {
        // heavy triangle 0-1-2, light chord 0-2 parallel to heavy path, and a light bridge 2-3
        let g = weighted_graph(4, &[(0, 1, 5000.0), (1, 2, 5000.0), (0, 2, 10.0), (2, 3, 0.0)]);
        let lev = leverage_scores(&g);
        assert!((lev[0] - 1.0).abs() < 1e-12);
        assert!((lev[1] - 1.0).abs() < 1e-12);
        assert_eq!(lev[2], 0.0);
        assert!((lev[3] - 1.0).abs() < 1e-12);
        let total: f64 = lev.iter().sum();
        assert!((total - 3.0).abs() < 1e-9);
    }

    #[test]
    fn leverage_foster_on_attention_like_weights() {
        let mut rng = seed::rng(31);
        for _ in 0..5 {
            let g0 = random_connected(120, 600, 0.0, &mut rng);
            // a band hundreds of e-folds wide, solved jointly
            let attn: Vec<f64> = (0..120)
                .map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..280.0) })
                .collect();
            let edges = g0
                .edges()
                .iter()
                .map(|e| crate::graph::GraphEdge { log_weight: attn[e.i] + attn[e.j], ..*e })
                .collect();
            let g = g0.with_edges(edges).unwrap();
            let lev = leverage_scores(&g);
            let total: f64 = lev.iter().sum();
            assert!((total - 119.0).abs() < 1e-6, "total {total}");
        }
    }
}
