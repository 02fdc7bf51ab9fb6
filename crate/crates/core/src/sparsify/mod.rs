//! Attention-weighted spectral sparsification.
//!
//! Edge `(i, j)` of a clustered graph carries the attention weight
//! `w_ij = exp(N_i^2 C_i) * exp(N_j^2 C_j)`, stored as its logarithm. Edges
//! are sampled with probability proportional to `w_ij * r_ij` (weight times
//! effective resistance, i.e. the edge's leverage) and reweighted so the
//! sparsified Laplacian is an unbiased estimate of the original one.

mod resistance;
mod sigma;

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

pub use resistance::{effective_resistances, leverage_scores, EffectiveResistanceMap, MAX_BAND_WIDTH, SCALE_GAP};
pub use sigma::{spectral_sigma, SigmaEstimate};

use crate::error::{Error, Result};
use crate::graph::{GazeGraph, GraphEdge, WeightMode};
use crate::roi::attention_log_score;
use crate::seed;

pub const DEFAULT_PROBES: usize = 32;

/// Log of the attention edge weight: `N_i^2 C_i + N_j^2 C_j`.
pub fn edge_log_weight(n_i: usize, c_i: u64, n_j: usize, c_j: u64) -> f64 {
    attention_log_score(n_i, c_i) + attention_log_score(n_j, c_j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// `q = round(ratio |E|)` independent draws; each draw adds
    /// `w_e / (q p_e)` to the drawn edge.
    WithReplacement,
    /// Edge `e` kept independently with probability `min(1, q p_e)` and
    /// reweighted by its inverse.
    #[default]
    Bernoulli,
}

impl SampleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleMode::WithReplacement => "with-replacement",
            SampleMode::Bernoulli => "bernoulli",
        }
    }
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with-replacement" => Ok(SampleMode::WithReplacement),
            "bernoulli" => Ok(SampleMode::Bernoulli),
            other => Err(Error::Config(format!("unknown sampling mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsifyConfig {
    pub target_edge_ratio: f64,
    pub mode: SampleMode,
    pub seed: u64,
    pub alpha_report_probes: usize,
    /// `false` keeps sampled edges at their original weight.
    pub reweight: bool,
    pub weight_mode: WeightMode,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        SparsifyConfig {
            target_edge_ratio: 0.5,
            mode: SampleMode::Bernoulli,
            seed: 0,
            alpha_report_probes: DEFAULT_PROBES,
            reweight: true,
            weight_mode: WeightMode::Normalized,
        }
    }
}

impl SparsifyConfig {
    pub fn with_ratio(ratio: f64, seed: u64) -> Self {
        SparsifyConfig { target_edge_ratio: ratio, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_edge_ratio > 0.0 && self.target_edge_ratio <= 1.0) {
            return Err(Error::Argument(format!(
                "target edge ratio {} outside (0, 1]",
                self.target_edge_ratio
            )));
        }
        if self.alpha_report_probes == 0 {
            return Err(Error::Argument("alpha_report_probes must be >= 1".into()));
        }
        Ok(())
    }
}

pub const WEIGHT_POLICY: &str =
    "attention weights kept as logarithms; sampling normalized by log-sum-exp; linear weights max-normalized";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifyReport {
    pub ratio_target: f64,
    pub ratio_achieved: f64,
    #[serde(with = "crate::jsonfmt::lenient_f64")]
    pub sigma: f64,
    #[serde(with = "crate::jsonfmt::lenient_f64")]
    pub alpha: f64,
    pub seed: u64,
    pub mode: SampleMode,
    pub weight_mode: WeightMode,
    pub reweighted: bool,
    pub draws: usize,
    pub edges_total: usize,
    pub edges_kept: usize,
    pub weight_policy: String,
}

/// Sparsified graph over the same nodes, plus which original edges survived.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifiedGraph {
    pub graph: GazeGraph,
    /// Indices into the input graph's edge list, ascending.
    pub kept: Vec<usize>,
    pub report: SparsifyReport,
}

/// Sampling state for one graph. Leverage scores are computed once and
/// reused for every draw.
#[derive(Debug, Clone)]
pub struct Sparsifier<'a> {
    graph: &'a GazeGraph,
    leverage: Vec<f64>,
    log_p: Vec<f64>,
}

impl<'a> Sparsifier<'a> {
    pub fn new(graph: &'a GazeGraph) -> Self {
        let leverage = leverage_scores(graph);
        let total: f64 = leverage.iter().sum();
        let log_p = leverage
            .iter()
            .map(|&l| if total > 0.0 { l.ln() - total.ln() } else { f64::NEG_INFINITY })
            .collect();
        Sparsifier { graph, leverage, log_p }
    }

    pub fn graph(&self) -> &GazeGraph {
        self.graph
    }

    /// `w_e r_e` per edge.
    pub fn leverage(&self) -> &[f64] {
        &self.leverage
    }

    /// Log sampling probability per edge (`-inf` for zero leverage).
    pub fn log_probabilities(&self) -> &[f64] {
        &self.log_p
    }

    fn identity(&self, cfg: &SparsifyConfig) -> SparsifiedGraph {
        let m = self.graph.edge_count();
        SparsifiedGraph {
            graph: self.graph.clone(),
            kept: (0..m).collect(),
            report: SparsifyReport {
                ratio_target: cfg.target_edge_ratio,
                ratio_achieved: 1.0,
                sigma: 1.0,
                alpha: 0.0,
                seed: cfg.seed,
                mode: cfg.mode,
                weight_mode: cfg.weight_mode,
                reweighted: false,
                draws: 0,
                edges_total: m,
                edges_kept: m,
                weight_policy: WEIGHT_POLICY.into(),
            },
        }
    }

    pub fn sample(&self, cfg: &SparsifyConfig) -> Result<SparsifiedGraph> {
        cfg.validate()?;
        let g = self.graph;
        let m = g.edge_count();
        if m == 0 || g.node_count() <= 1 || cfg.target_edge_ratio >= 1.0 {
            return Ok(self.identity(cfg));
        }
        let q = (cfg.target_edge_ratio * m as f64).round() as usize;
        if q == 0 {
            return Err(Error::Argument(format!(
                "ratio {} of {m} edges rounds to zero samples",
                cfg.target_edge_ratio
            )));
        }
        let mut rng = seed::rng(cfg.seed);
        let ln_q = (q as f64).ln();
        let mut kept = Vec::new();
        let mut edges = Vec::new();
        match cfg.mode {
            SampleMode::WithReplacement => {
                let probs: Vec<f64> = self.log_p.iter().map(|lp| lp.exp()).collect();
                let dist = WeightedIndex::new(&probs)
                    .map_err(|e| Error::Numeric(format!("sampling distribution: {e}")))?;
                let mut counts = vec![0u32; m];
                for _ in 0..q {
                    counts[dist.sample(&mut rng)] += 1;
                }
                for (k, &c) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
                    let e = g.edges()[k];
                    let log_weight = if cfg.reweight {
                        e.log_weight + (c as f64).ln() - ln_q - self.log_p[k]
                    } else {
                        e.log_weight
                    };
                    kept.push(k);
                    edges.push(GraphEdge { log_weight, ..e });
                }
            }
            SampleMode::Bernoulli => {
                for (k, e) in g.edges().iter().enumerate() {
                    let log_pi = (ln_q + self.log_p[k]).min(0.0);
                    let u: f64 = rng.random();
                    if u < log_pi.exp() {
                        let log_weight = if cfg.reweight { e.log_weight - log_pi } else { e.log_weight };
                        kept.push(k);
                        edges.push(GraphEdge { log_weight, ..*e });
                    }
                }
            }
        }
        let graph = g.with_edges(edges)?;
        let est = spectral_sigma(g, &graph, cfg.alpha_report_probes, seed::derive(cfg.seed, 0x5167))?;
        let report = SparsifyReport {
            ratio_target: cfg.target_edge_ratio,
            ratio_achieved: kept.len() as f64 / m as f64,
            sigma: est.sigma,
            alpha: est.alpha,
            seed: cfg.seed,
            mode: cfg.mode,
            weight_mode: cfg.weight_mode,
            reweighted: cfg.reweight,
            draws: q,
            edges_total: m,
            edges_kept: kept.len(),
            weight_policy: WEIGHT_POLICY.into(),
        };
        Ok(SparsifiedGraph { graph, kept, report })
    }
}

/// One-shot sparsification of `g` (typically a clustered graph).
pub fn sparsify(g: &GazeGraph, cfg: &SparsifyConfig) -> Result<SparsifiedGraph> {
    Sparsifier::new(g).sample(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::laplacian;
    use crate::graph::test_graphs::*;
    use nalgebra::DMatrix;

    #[test]
    fn attention_log_weights() {
        assert_eq!(edge_log_weight(1, 0, 1, 0), 0.0);
        assert_eq!(edge_log_weight(2, 1, 1, 0), 4.0);
        assert_eq!(edge_log_weight(3, 2, 5, 7), edge_log_weight(5, 7, 3, 2));
        // far beyond exp's range, still exact as a logarithm
        assert_eq!(edge_log_weight(100, 50, 1, 0), 500_000.0);
    }

    #[test]
    fn full_ratio_is_identity() {
        let mut rng = seed::rng(4);
        let g = random_connected(30, 80, 2.0, &mut rng);
        for mode in [SampleMode::WithReplacement, SampleMode::Bernoulli] {
            let cfg = SparsifyConfig { target_edge_ratio: 1.0, mode, ..Default::default() };
            let s = sparsify(&g, &cfg).unwrap();
            assert_eq!(s.graph, g);
            assert_eq!(s.kept.len(), g.edge_count());
            assert!((s.report.sigma - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_graphs_pass_through() {
        let g = unit_graph(4, &[]);
        let s = sparsify(&g, &SparsifyConfig::with_ratio(0.3, 1)).unwrap();
        assert_eq!(s.graph, g);
        assert_eq!(s.report.sigma, 1.0);
        let single = unit_graph(1, &[]);
        assert_eq!(sparsify(&single, &SparsifyConfig::with_ratio(0.3, 1)).unwrap().graph, single);
    }

    #[test]
    fn too_small_ratio_is_an_argument_error() {
        let g = complete(4);
        assert!(matches!(sparsify(&g, &SparsifyConfig::with_ratio(0.01, 1)), Err(Error::Argument(_))));
        assert!(matches!(sparsify(&g, &SparsifyConfig::with_ratio(0.0, 1)), Err(Error::Argument(_))));
        assert!(matches!(sparsify(&g, &SparsifyConfig::with_ratio(1.5, 1)), Err(Error::Argument(_))));
    }

    #[test]
    fn deterministic_and_subset() {
        let mut rng = seed::rng(8);
        let g = random_connected(40, 200, 5.0, &mut rng);
        for mode in [SampleMode::WithReplacement, SampleMode::Bernoulli] {
            let cfg = SparsifyConfig { target_edge_ratio: 0.4, mode, seed: 77, ..Default::default() };
            let a = sparsify(&g, &cfg).unwrap();
            let b = sparsify(&g, &cfg).unwrap();
            assert_eq!(a, b);
            for (&k, e) in a.kept.iter().zip(a.graph.edges()) {
                assert_eq!((g.edges()[k].i, g.edges()[k].j), (e.i, e.j));
                assert!(e.log_weight.is_finite());
            }
            assert!(a.kept.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(a.graph.node_count(), g.node_count());
        }
    }

    #[test]
    fn no_reweight_keeps_original_weights() {
        let mut rng = seed::rng(10);
        let g = random_connected(25, 60, 1.0, &mut rng);
        let cfg = SparsifyConfig { target_edge_ratio: 0.5, reweight: false, seed: 3, ..Default::default() };
        let s = sparsify(&g, &cfg).unwrap();
        for (&k, e) in s.kept.iter().zip(s.graph.edges()) {
            assert_eq!(g.edges()[k].log_weight, e.log_weight);
        }
        assert!(!s.report.reweighted);
    }

    #[test]
    fn bridges_are_always_kept() {
        // two K5s joined by one bridge: the bridge has leverage 1
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    pairs.push((base + i, base + j));
                }
            }
        }
        pairs.push((4, 5));
        let g = unit_graph(10, &pairs);
        let sp = Sparsifier::new(&g);
        let bridge = g.edges().iter().position(|e| (e.i, e.j) == (4, 5)).unwrap();
        assert!((sp.leverage()[bridge] - 1.0).abs() < 1e-12);
        let s = sp
            .sample(&SparsifyConfig { target_edge_ratio: 0.9, mode: SampleMode::Bernoulli, seed: 5, ..Default::default() })
            .unwrap();
        assert!(s.kept.contains(&bridge));
    }

    #[test]
    fn k5_mean_laplacian_is_unbiased() {
        let g = complete(5);
        let l = laplacian(&g, WeightMode::RawLogCapped).unwrap();
        let sp = Sparsifier::new(&g);
        let mut mean = DMatrix::<f64>::zeros(5, 5);
        let runs = 1000;
        for seed in 0..runs {
            let cfg = SparsifyConfig { mode: SampleMode::WithReplacement, ..SparsifyConfig::with_ratio(0.5, seed) };
            let s = sp.sample(&cfg).unwrap();
            mean += laplacian(&s.graph, WeightMode::RawLogCapped).unwrap();
        }
        mean /= runs as f64;
        let rel = (&mean - &l).norm() / l.norm();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
    }

    #[test]
    fn k8_sigma_is_bounded_by_generalized_eigenvalues() {
        let g = complete(8);
        for seed in 0..20 {
            for mode in [SampleMode::WithReplacement, SampleMode::Bernoulli] {
                let cfg = SparsifyConfig { target_edge_ratio: 0.7, mode, seed, ..Default::default() };
                let s = sparsify(&g, &cfg).unwrap();
                // on the complement of the ones vector L_G = 8 I, so the
                // generalized eigenvalues are those of L_S / 8 there
                let ls = laplacian(&s.graph, WeightMode::RawLogCapped).unwrap();
                let mut ev: Vec<f64> = ls.symmetric_eigen().eigenvalues.iter().map(|l| l / 8.0).collect();
                ev.sort_by(f64::total_cmp);
                let (lo, hi) = (ev[1], ev[7]);
                let bound = if lo <= 1e-12 { f64::INFINITY } else { hi.max(1.0 / lo) };
                let est = s.report.sigma;
                assert!(est >= 1.0 - 1e-12, "sigma {est}");
                assert!(est <= bound * (1.0 + 1e-9), "sigma {est} above bound {bound}");
                if bound.is_finite() {
                    assert!(est.is_finite());
                }
            }
        }
    }

    #[test]
    fn sigma_grows_as_ratio_drops() {
        let mut rng = seed::rng(13);
        let g = random_connected(40, 160, 0.0, &mut rng);
        let sp = Sparsifier::new(&g);
        let mean_sigma = |ratio: f64| -> f64 {
            (0..10)
                .map(|seed| {
                    let cfg = SparsifyConfig { mode: SampleMode::WithReplacement, ..SparsifyConfig::with_ratio(ratio, seed) };
                    sp.sample(&cfg).unwrap().report.sigma
                })
                .sum::<f64>()
                / 10.0
        };
        let (low, high) = (mean_sigma(0.3), mean_sigma(0.8));
        assert!(low >= high, "sigma at 0.3 = {low}, at 0.8 = {high}");
    }

    #[test]
    fn bernoulli_keeps_roughly_the_target_count() {
        let mut rng = seed::rng(12);
        let g = random_connected(60, 900, 0.0, &mut rng);
        let sp = Sparsifier::new(&g);
        let cfg = SparsifyConfig { target_edge_ratio: 0.3, mode: SampleMode::Bernoulli, seed: 1, ..Default::default() };
        let s = sp.sample(&cfg).unwrap();
        assert!((s.report.ratio_achieved - 0.3).abs() < 0.05, "{}", s.report.ratio_achieved);
    }

    #[test]
    fn report_json_handles_infinite_sigma() {
        let mut r = sparsify(&complete(4), &SparsifyConfig::with_ratio(1.0, 0)).unwrap().report;
        r.sigma = f64::INFINITY;
        let text = crate::jsonfmt::to_string(&r).unwrap();
        assert!(text.contains("\"sigma\": \"inf\""));
        let back: SparsifyReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.sigma, f64::INFINITY);
        assert!(text.contains("\"mode\": \"bernoulli\""));
    }
}
