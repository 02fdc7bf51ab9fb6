//! Topology comparison between a clustered graph and its sparsifiers:
//! hop diameter, betweenness rank correlation and Laplacian MSE, plus
//! edge-ratio sweeps over seeds.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{laplacian_shifted, GazeGraph};
use crate::jsonfmt::fmt_f64;
use crate::sparsify::{Sparsifier, SparsifyConfig};

pub const METRICS_CSV_HEADER: &str = "edge_ratio,seed,diameter_ratio,betweenness_spearman,laplacian_mse";
pub const DEFAULT_RATIOS: [f64; 6] = [1.0, 0.9, 0.7, 0.5, 0.3, 0.2];

/// Spearman correlation, or `Undefined` when either input is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spearman {
    Value(f64),
    Undefined,
}

impl Spearman {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Spearman::Value(v) => Some(v),
            Spearman::Undefined => None,
        }
    }
}

impl std::fmt::Display for Spearman {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Spearman::Value(v) => f.write_str(&fmt_f64(*v)),
            Spearman::Undefined => f.write_str("NA"),
        }
    }
}

fn bfs_distances(adj: &[Vec<usize>], src: usize, dist: &mut [usize]) {
    dist.fill(usize::MAX);
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
}

/// Hop-count diameter of the largest connected component (ties go to the
/// component containing the smallest node id). 0 for a single node or an
/// empty graph.
pub fn diameter(g: &GazeGraph) -> usize {
    let n = g.node_count();
    if n == 0 {
        return 0;
    }
    let (labels, count) = g.components();
    let mut sizes = vec![0usize; count];
    for &l in &labels {
        sizes[l] += 1;
    }
    // labels are numbered by smallest member, so the first maximum wins ties
    let largest = (0..count).fold(0, |best, l| if sizes[l] > sizes[best] { l } else { best });
    let adj = g.adjacency();
    let mut dist = vec![0; n];
    let mut diam = 0;
    for v in (0..n).filter(|&v| labels[v] == largest) {
        bfs_distances(&adj, v, &mut dist);
        diam = diam.max(dist.iter().filter(|&&d| d != usize::MAX).copied().max().unwrap_or(0));
    }
    diam
}

/// `diameter(reference) / diameter(sparse)`. Removing edges can only grow
/// hop distances or split off nodes, so this drops below 1 as a sparsifier
/// loses structure. A sparse diameter of 0 gives 0 (or 1 when the reference
/// diameter is also 0).
pub fn diameter_ratio(reference: &GazeGraph, sparse: &GazeGraph) -> f64 {
    ratio_of_diameters(diameter(reference), diameter(sparse))
}

fn ratio_of_diameters(reference: usize, sparse: usize) -> f64 {
    match (reference, sparse) {
        (0, 0) => 1.0,
        (_, 0) => 0.0,
        (r, s) => r as f64 / s as f64,
    }
}

/// Exact node betweenness over unweighted shortest paths (Brandes), each
/// unordered pair counted once.
pub fn betweenness(g: &GazeGraph) -> Vec<f64> {
    let n = g.node_count();
    let adj = g.adjacency();
    let mut cb = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        preds.iter_mut().for_each(Vec::clear);
        stack.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    cb.iter_mut().for_each(|c| *c /= 2.0);
    cb
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Spearman> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!("rank vectors differ in length ({} vs {})", a.len(), b.len())));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(Spearman::Undefined);
    }
    Ok(Spearman::Value((cov / (va * vb).sqrt()).clamp(-1.0, 1.0)))
}

fn same_nodes(a: &GazeGraph, b: &GazeGraph) -> Result<()> {
    if a.node_count() != b.node_count() {
        return Err(Error::Argument(format!(
            "graphs have different node counts ({} vs {})",
            a.node_count(),
            b.node_count()
        )));
    }
    Ok(())
}

pub fn betweenness_spearman(reference: &GazeGraph, sparse: &GazeGraph) -> Result<Spearman> {
    same_nodes(reference, sparse)?;
    spearman(&betweenness(reference), &betweenness(sparse))
}

/// Mean of `(L_ref - L_sparse)^2` over all `n^2` entries, both Laplacians
/// built from weights divided by the largest weight in either graph.
pub fn laplacian_mse(reference: &GazeGraph, sparse: &GazeGraph) -> Result<f64> {
    same_nodes(reference, sparse)?;
    let n = reference.node_count();
    if n == 0 {
        return Ok(0.0);
    }
    let shift = match (reference.max_log_weight(), sparse.max_log_weight()) {
        (None, None) => return Ok(0.0),
        (a, b) => a.unwrap_or(f64::NEG_INFINITY).max(b.unwrap_or(f64::NEG_INFINITY)),
    };
    let diff = laplacian_shifted(reference, shift)? - laplacian_shifted(sparse, shift)?;
    Ok(diff.norm_squared() / (n * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub edge_ratio: f64,
    pub seed: u64,
    pub diameter_ratio: f64,
    pub betweenness_spearman: Spearman,
    pub laplacian_mse: f64,
    pub ratio_achieved: f64,
    #[serde(with = "crate::jsonfmt::lenient_f64")]
    pub sigma: f64,
    #[serde(with = "crate::jsonfmt::lenient_f64")]
    pub alpha: f64,
}

/// Per-ratio means over seeds. Spearman is averaged over the seeds where it
/// is defined and is `None` when it is defined for none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub edge_ratio: f64,
    pub seeds: usize,
    pub diameter_ratio: f64,
    pub betweenness_spearman: Option<f64>,
    pub spearman_defined: usize,
    pub laplacian_mse: f64,
    pub ratio_achieved: f64,
    /// Median rather than mean: a single structure-losing draw makes the
    /// estimate infinite.
    #[serde(with = "crate::jsonfmt::lenient_f64")]
    pub sigma_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<MetricsRow>,
    pub means: Vec<SweepMean>,
}

/// Per-seed rows plus per-ratio means, in grid order (ratio-major).
pub fn sweep(g: &GazeGraph, ratios: &[f64], seeds: &[u64], template: &SparsifyConfig) -> Result<SweepResult> {
    if ratios.is_empty() || seeds.is_empty() {
        return Err(Error::Argument("sweep needs at least one ratio and one seed".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::Argument(format!("sweep ratio {r} outside (0, 1]")));
    }
    let sparsifier = Sparsifier::new(g);
    let ref_betweenness = betweenness(g);
    let ref_diameter = diameter(g);
    let cells: Vec<(f64, u64)> = ratios.iter().flat_map(|&r| seeds.iter().map(move |&s| (r, s))).collect();
    let rows = cells
        .par_iter()
        .map(|&(ratio, seed)| {
            let cfg = SparsifyConfig { target_edge_ratio: ratio, seed, ..*template };
            let s = sparsifier.sample(&cfg)?;
            Ok(MetricsRow {
                edge_ratio: ratio,
                seed,
                diameter_ratio: ratio_of_diameters(ref_diameter, diameter(&s.graph)),
                betweenness_spearman: spearman(&ref_betweenness, &betweenness(&s.graph))?,
                laplacian_mse: laplacian_mse(g, &s.graph)?,
                ratio_achieved: s.report.ratio_achieved,
                sigma: s.report.sigma,
                alpha: s.report.alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let means = rows.chunks(seeds.len()).map(mean_of).collect();
    Ok(SweepResult { rows, means })
}

fn mean_of(rows: &[MetricsRow]) -> SweepMean {
    let k = rows.len() as f64;
    let defined: Vec<f64> = rows.iter().filter_map(|r| r.betweenness_spearman.value()).collect();
    let mut sigmas: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    let mid = sigmas.len() / 2;
    let sigma_median = if sigmas.len() % 2 == 1 { sigmas[mid] } else { 0.5 * (sigmas[mid - 1] + sigmas[mid]) };
    SweepMean {
        edge_ratio: rows[0].edge_ratio,
        seeds: rows.len(),
        diameter_ratio: rows.iter().map(|r| r.diameter_ratio).sum::<f64>() / k,
        betweenness_spearman: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        spearman_defined: defined.len(),
        laplacian_mse: rows.iter().map(|r| r.laplacian_mse).sum::<f64>() / k,
        ratio_achieved: rows.iter().map(|r| r.ratio_achieved).sum::<f64>() / k,
        sigma_median,
    }
}

/// Metrics CSV with the fixed header; undefined Spearman is written `NA`.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.edge_ratio),
            r.seed,
            fmt_f64(r.diameter_ratio),
            r.betweenness_spearman,
            fmt_f64(r.laplacian_mse)
        );
    }
    out
}

/// Reads back a metrics CSV written by [`metrics_csv`]; only the CSV columns
/// are restored (achieved ratio, sigma and alpha are NaN).
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_CSV_HEADER => {}
        other => {
            return Err(Error::Parse { line: 1, msg: format!("expected header `{METRICS_CSV_HEADER}`, found {other:?}") })
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, l)| {
            let line = k as u64 + 2;
            let f: Vec<&str> = l.split(',').collect();
            let err = |msg: String| Error::Parse { line, msg };
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            Ok(MetricsRow {
                edge_ratio: num(f[0])?,
                seed: f[1].parse().map_err(|_| err(format!("bad seed `{}`", f[1])))?,
                diameter_ratio: num(f[2])?,
                betweenness_spearman: if f[3] == "NA" { Spearman::Undefined } else { Spearman::Value(num(f[3])?) },
                laplacian_mse: num(f[4])?,
                ratio_achieved: f64::NAN,
                sigma: f64::NAN,
                alpha: f64::NAN,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::*;
    use crate::sparsify::SampleMode;
    use approx::assert_abs_diff_eq;

    fn path(n: usize) -> GazeGraph {
        let pairs: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
        unit_graph(n, &pairs)
    }

    /// Betweenness by listing every simple path between each pair and
    /// keeping the shortest ones.
    fn betweenness_by_enumeration(g: &GazeGraph) -> Vec<f64> {
        fn walk(adj: &[Vec<usize>], t: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            let v = *path.last().unwrap();
            if v == t {
                out.push(path.clone());
                return;
            }
            for &w in &adj[v] {
                if !path.contains(&w) {
                    path.push(w);
                    walk(adj, t, path, out);
                    path.pop();
                }
            }
        }
        let n = g.node_count();
        let adj = g.adjacency();
        let mut cb = vec![0.0; n];
        for s in 0..n {
            for t in s + 1..n {
                let mut paths = Vec::new();
                walk(&adj, t, &mut vec![s], &mut paths);
                let Some(best) = paths.iter().map(Vec::len).min() else { continue };
                let shortest: Vec<_> = paths.iter().filter(|p| p.len() == best).collect();
                for p in &shortest {
                    for &v in &p[1..p.len() - 1] {
                        cb[v] += 1.0 / shortest.len() as f64;
                    }
                }
            }
        }
        cb
    }

    #[test]
    fn diameters() {
        assert_eq!(diameter(&path(3)), 2);
        assert_eq!(diameter(&complete(5)), 1);
        assert_eq!(diameter(&unit_graph(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (5, 6)])), 4);
        assert_eq!(diameter(&unit_graph(7, &[(0, 1), (2, 3), (3, 4), (4, 5), (5, 6)])), 4);
        assert_eq!(diameter(&unit_graph(1, &[])), 0);
        // equal-sized components: the one holding node 0 wins
        assert_eq!(diameter(&unit_graph(6, &[(0, 1), (1, 2), (3, 4), (4, 5), (3, 5)])), 2);
    }

    #[test]
    fn diameter_ratio_edge_cases() {
        assert_eq!(diameter_ratio(&path(4), &path(4)), 1.0);
        assert_eq!(diameter_ratio(&path(3), &unit_graph(3, &[])), 0.0);
        assert_eq!(diameter_ratio(&unit_graph(2, &[]), &unit_graph(2, &[])), 1.0);
        assert_abs_diff_eq!(diameter_ratio(&complete(4), &path(4)), 1.0 / 3.0);
    }

    #[test]
    fn brandes_matches_enumeration() {
        assert_eq!(betweenness(&path(5)), vec![0.0, 3.0, 4.0, 3.0, 0.0]);
        let mut rng = crate::seed::rng(21);
        for _ in 0..20 {
            let g = random_graph(9, 0.35, 0.0, &mut rng);
            let fast = betweenness(&g);
            let slow = betweenness_by_enumeration(&g);
            for (a, b) in fast.iter().zip(&slow) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
            assert!(fast.iter().all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn spearman_path_missing_end_edge() {
        let reference = path(5);
        let sparse = unit_graph(5, &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(betweenness_by_enumeration(&reference), vec![0.0, 3.0, 4.0, 3.0, 0.0]);
        assert_eq!(betweenness_by_enumeration(&sparse), vec![0.0, 2.0, 2.0, 0.0, 0.0]);
        // average ranks by hand: (1.5, 3.5, 5, 3.5, 1.5) and (2, 4.5, 4.5, 2, 2)
        let ra = [1.5, 3.5, 5.0, 3.5, 1.5];
        let rb = [2.0, 4.5, 4.5, 2.0, 2.0];
        assert_eq!(average_ranks(&betweenness(&reference)), ra);
        assert_eq!(average_ranks(&betweenness(&sparse)), rb);
        let expected = 6.25 / (9.0f64 * 7.5).sqrt();
        match betweenness_spearman(&reference, &sparse).unwrap() {
            Spearman::Value(v) => assert_abs_diff_eq!(v, expected, epsilon = 1e-12),
            Spearman::Undefined => panic!("defined correlation expected"),
        }
        assert_eq!(betweenness_spearman(&reference, &reference).unwrap(), Spearman::Value(1.0));
    }

    #[test]
    fn spearman_undefined_for_constant_betweenness() {
        assert_eq!(betweenness_spearman(&complete(5), &complete(5)).unwrap(), Spearman::Undefined);
        assert_eq!(Spearman::Undefined.to_string(), "NA");
        assert!(spearman(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_values() {
        let two = unit_graph(2, &[(0, 1)]);
        let none = unit_graph(2, &[]);
        assert_eq!(laplacian_mse(&two, &none).unwrap(), 1.0);
        assert_eq!(laplacian_mse(&none, &two).unwrap(), 1.0);
        assert_eq!(laplacian_mse(&two, &two).unwrap(), 0.0);
        let mut rng = crate::seed::rng(2);
        let a = random_connected(12, 20, 3.0, &mut rng);
        let b = random_connected(12, 10, 1.0, &mut rng);
        assert_abs_diff_eq!(laplacian_mse(&a, &b).unwrap(), laplacian_mse(&b, &a).unwrap(), epsilon = 1e-15);
        assert!(laplacian_mse(&a, &path(3)).is_err());
    }

    #[test]
    fn mse_survives_huge_log_weights() {
        let a = weighted_graph(3, &[(0, 1, 5000.0), (1, 2, 4999.0)]);
        let b = weighted_graph(3, &[(0, 1, 5000.0)]);
        let w = (-1.0f64).exp();
        // difference Laplacian is w on the (1,2) block
        assert_abs_diff_eq!(laplacian_mse(&a, &b).unwrap(), 4.0 * w * w / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn full_ratio_row_is_identity() {
        let mut rng = crate::seed::rng(6);
        let g = random_connected(30, 40, 0.0, &mut rng);
        let cfg = SparsifyConfig { mode: SampleMode::Bernoulli, ..Default::default() };
        let res = sweep(&g, &[1.0], &[0, 1], &cfg).unwrap();
        assert_eq!(res.rows.len(), 2);
        for r in &res.rows {
            assert_eq!(r.diameter_ratio, 1.0);
            assert_eq!(r.laplacian_mse, 0.0);
            assert_eq!(r.betweenness_spearman, Spearman::Value(1.0));
        }
        assert_eq!(res.means.len(), 1);
    }

    #[test]
    fn sweep_mse_grows_as_edges_drop() {
        let mut rng = crate::seed::rng(7);
        let g = random_connected(60, 240, 3.0, &mut rng);
        let seeds: Vec<u64> = (0..10).collect();
        for mode in [SampleMode::Bernoulli, SampleMode::WithReplacement] {
            let cfg = SparsifyConfig { mode, ..Default::default() };
            let res = sweep(&g, &[0.9, 0.5, 0.2], &seeds, &cfg).unwrap();
            let mse: Vec<f64> = res.means.iter().map(|m| m.laplacian_mse).collect();
            assert!(mse[0] <= mse[1] && mse[1] <= mse[2], "{mode:?} {mse:?}");
        }
        assert!(sweep(&g, &[0.0], &seeds, &SparsifyConfig::default()).is_err());
        assert!(sweep(&g, &[0.5], &[], &SparsifyConfig::default()).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![
            MetricsRow {
                edge_ratio: 0.5,
                seed: 3,
                diameter_ratio: 0.75,
                betweenness_spearman: Spearman::Undefined,
                laplacian_mse: 0.01,
                ratio_achieved: 0.5,
                sigma: 2.0,
                alpha: 0.5,
            },
            MetricsRow {
                edge_ratio: 0.9,
                seed: 4,
                diameter_ratio: 1.0,
                betweenness_spearman: Spearman::Value(0.8),
                laplacian_mse: 0.0,
                ratio_achieved: 0.9,
                sigma: 1.1,
                alpha: 0.1,
            },
        ];
        let text = metrics_csv(&rows);
        assert!(text.starts_with("edge_ratio,seed,diameter_ratio,betweenness_spearman,laplacian_mse\n"));
        assert!(text.contains(",NA,"));
        let back = parse_metrics_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].betweenness_spearman, Spearman::Undefined);
        assert_eq!(back[1].betweenness_spearman, Spearman::Value(0.8));
        assert_eq!(back[0].laplacian_mse, 0.01);
        assert!(parse_metrics_csv("wrong\n").is_err());
    }
}
