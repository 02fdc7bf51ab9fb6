//! End-to-end runs: ingest or synthesize a session, build the raw graph,
//! cluster, sparsify, sweep metrics, extract ROIs and write every artifact.
//!
//! All randomness derives from [`PipelineConfig::seed`] through
//! [`seed::derive`] with the stage indices in [`seed::stage`]. Artifacts other
//! than `timings.json` are byte-identical for identical configurations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_graph, ClusterParams, ClusteredGraph};
use crate::error::{Error, Result};
use crate::graph::{build_raw_graph, GazeGraph, GraphJson};
use crate::ingest::{
    generate_multiscreen_synthetic, generate_synthetic_gaze, parse_gaze_csv, GazeSession, MultiScreenSynth,
    SessionConfig, SynthBounds, ViewportLog,
};
use crate::jsonfmt;
use crate::metrics::{laplacian_mse, metrics_csv, sweep, SweepMean, SweepResult, DEFAULT_RATIOS};
use crate::roi::{extract_rois, RoiSelection, Selection, VoiSize, DEFAULT_VOI_SIZE};
use crate::seed::{self, stage};
use crate::sparsify::{sparsify, SparsifiedGraph, SparsifyConfig};

/// Environment variable that overrides the output directory in the CLI.
pub const OUTPUT_DIR_ENV: &str = "GAZESPARSE_OUT";

pub const RAW_GRAPH: &str = "raw_graph.json";
pub const CLUSTERED_GRAPH: &str = "clustered_graph.json";
pub const SPARSIFIED_GRAPH: &str = "sparsified_graph.json";
pub const CLUSTERS: &str = "clusters.json";
pub const SPARSIFY_REPORT: &str = "sparsify_report.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_PLOT: &str = "metrics_plot.json";
pub const ROIS: &str = "rois.json";
pub const TRANSITIONS: &str = "cross_screen_transitions.json";
pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";
pub const SCREENS_DIR: &str = "screens";

pub const DEFAULT_TARGET_RATIO: f64 = 0.12;
pub const DEFAULT_SWEEP_SEEDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n: usize,
    /// Random-walk step sd as a fraction of the box extent; 1.0 gives
    /// near-uniform locations.
    pub step_scale: f64,
    /// 1 for a single screen; 4 uses the multi-parametric reading profile;
    /// other counts read all screens equally.
    pub screens: usize,
    pub switch_prob: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { n: 5000, step_scale: 1.0, screens: 1, switch_prob: 0.01 }
    }
}

impl SynthParams {
    pub fn generate(&self, seed: u64) -> Result<GazeSession> {
        if self.screens <= 1 {
            return generate_synthetic_gaze(self.n, SynthBounds::default(), self.step_scale, seed);
        }
        let mut cfg = MultiScreenSynth::four_screen(self.n);
        if self.screens != 4 {
            cfg.screen_weights = vec![1.0; self.screens];
        }
        cfg.step_scale = self.step_scale;
        cfg.switch_prob = self.switch_prob;
        generate_multiscreen_synthetic(&cfg, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputSource {
    Files {
        gaze_csv: PathBuf,
        #[serde(default)]
        viewport_csv: Option<PathBuf>,
        session_json: PathBuf,
    },
    Synth(SynthParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub ratios: Vec<f64>,
    pub seeds: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid { ratios: DEFAULT_RATIOS.to_vec(), seeds: DEFAULT_SWEEP_SEEDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub cluster: ClusterParams,
    /// The `seed` field is replaced by the derived sparsification seed.
    pub sparsify: SparsifyConfig,
    pub sweep: SweepGrid,
    pub roi_selection: Selection,
    pub voi_size: VoiSize,
    pub seed: u64,
    pub reader_id: Option<String>,
    pub session_label: Option<String>,
    /// Not echoed into the manifest, so runs into different directories
    /// produce identical artifacts.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: InputSource::Synth(SynthParams::default()),
            cluster: ClusterParams::default(),
            sparsify: SparsifyConfig { target_edge_ratio: DEFAULT_TARGET_RATIO, ..Default::default() },
            sweep: SweepGrid::default(),
            roi_selection: Selection::default(),
            voi_size: DEFAULT_VOI_SIZE,
            seed: 0,
            reader_id: None,
            session_label: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Argument(m) => Error::Config(m),
            other => other,
        };
        self.cluster.validate().map_err(cfg_err)?;
        self.sparsify.validate().map_err(cfg_err)?;
        self.roi_selection.validate().map_err(cfg_err)?;
        self.voi_size.validate().map_err(cfg_err)?;
        if self.sweep.seeds == 0 || self.sweep.ratios.is_empty() {
            return Err(Error::Config("sweep needs at least one ratio and one seed".into()));
        }
        if let Some(r) = self.sweep.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("sweep ratio {r} outside (0, 1]")));
        }
        if let InputSource::Synth(p) = &self.input {
            if p.n == 0 {
                return Err(Error::Config("synthetic session needs n >= 1".into()));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output directory is empty".into()));
        }
        Ok(())
    }

    pub fn sweep_seeds(&self) -> Vec<u64> {
        let base = seed::derive(self.seed, stage::METRICS);
        (0..self.sweep.seeds as u64).map(|k| seed::derive(base, k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub synth: Option<u64>,
    pub sparsify: u64,
    pub sweep: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub raw_nodes: usize,
    pub raw_edges: usize,
    pub segments: usize,
    pub clusters: usize,
    pub clustered_edges: usize,
    pub self_loops: u64,
    pub kept_edges: usize,
    pub rois: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSummary {
    pub id: u32,
    pub modality: String,
    pub raw_nodes: usize,
    pub clusters: usize,
    pub clustered_edges: usize,
    pub kept_edges: usize,
    pub laplacian_mse: f64,
    #[serde(with = "crate::jsonfmt::lenient_f64")]
    pub sigma: f64,
    /// Sweep ratios skipped because they round to zero samples on this
    /// screen's few edges.
    pub skipped_ratios: Vec<f64>,
    pub dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCount {
    pub from: u32,
    pub to: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub seeds: StageSeeds,
    pub counts: Counts,
    /// `1 - (clusters + kept_edges) / (raw_nodes + raw_edges)`.
    pub data_reduction: f64,
    pub node_reduction: f64,
    pub edge_reduction: f64,
    pub ratio_achieved: f64,
    /// Clustered vs. sparsified graph.
    pub laplacian_mse: f64,
    #[serde(with = "crate::jsonfmt::lenient_f64")]
    pub sigma: f64,
    #[serde(with = "crate::jsonfmt::lenient_f64")]
    pub alpha: f64,
    pub sweep: Vec<SweepMean>,
    pub screens: Vec<ScreenSummary>,
    pub cross_screen_transitions: Vec<TransitionCount>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

/// Reads a session from a gaze CSV, an optional viewport CSV and a session
/// config JSON.
pub fn load_session(gaze_csv: &Path, viewport_csv: Option<&Path>, session_json: &Path) -> Result<GazeSession> {
    let config: SessionConfig = jsonfmt::read_file(session_json).map_err(|e| match e {
        Error::Json(j) => Error::Config(format!("{}: {j}", session_json.display())),
        other => other,
    })?;
    let viewport = match viewport_csv {
        Some(p) => ViewportLog::parse_csv(std::fs::File::open(p).map_err(|e| Error::io(p, e))?)?,
        None => ViewportLog::default(),
    };
    let file = std::fs::File::open(gaze_csv).map_err(|e| Error::io(gaze_csv, e))?;
    parse_gaze_csv(std::io::BufReader::new(file), &config, &viewport)
}

pub fn write_graph(path: &Path, g: &GazeGraph) -> Result<()> {
    jsonfmt::write_file(path, &GraphJson::from(g))
}

pub fn read_graph(path: &Path) -> Result<GazeGraph> {
    let j: GraphJson = jsonfmt::read_file(path)?;
    GazeGraph::try_from(j)
}

fn in_stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
}

/// Files and directories written by one run, removed again on failure.
struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        let mut out = Outputs { root: root.to_path_buf(), files: Vec::new(), created_dirs: Vec::new() };
        out.ensure_dir(root)?;
        Ok(out)
    }

    fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut d = Some(dir);
        while let Some(p) = d.filter(|p| !p.as_os_str().is_empty() && !p.exists()) {
            missing.push(p.to_path_buf());
            d = p.parent();
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        missing.reverse();
        self.created_dirs.extend(missing);
        Ok(())
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            self.ensure_dir(parent)?;
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write_text(rel, &jsonfmt::to_string(value)?)
    }

    fn relative_names(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|p| p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect()
    }

    fn remove_all(&self) {
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        for d in self.created_dirs.iter().rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}

/// Plot-ready series of the sweep means, one array per metric.
pub fn metrics_plot_json(result: &SweepResult) -> serde_json::Value {
    serde_json::json!({
        "x": "edge_ratio",
        "series": {
            "edge_ratio": result.means.iter().map(|m| m.edge_ratio).collect::<Vec<_>>(),
            "diameter_ratio": result.means.iter().map(|m| m.diameter_ratio).collect::<Vec<_>>(),
            "betweenness_spearman": result.means.iter().map(|m| m.betweenness_spearman).collect::<Vec<_>>(),
            "laplacian_mse": result.means.iter().map(|m| m.laplacian_mse).collect::<Vec<_>>(),
            "ratio_achieved": result.means.iter().map(|m| m.ratio_achieved).collect::<Vec<_>>(),
        },
        "means": result.means,
    })
}

/// Sweep restricted to ratios that leave at least one draw on `g`.
fn sweep_feasible(
    g: &GazeGraph,
    ratios: &[f64],
    seeds: &[u64],
    template: &SparsifyConfig,
) -> Result<(SweepResult, Vec<f64>)> {
    let m = g.edge_count() as f64;
    let (ok, skipped): (Vec<f64>, Vec<f64>) =
        ratios.iter().partition(|&&r| r >= 1.0 || m == 0.0 || (r * m).round() >= 1.0);
    if !skipped.is_empty() {
        log::warn!("skipping sweep ratios {skipped:?}: fewer than one draw on {m} edges");
    }
    if ok.is_empty() {
        return Ok((SweepResult { rows: vec![], means: vec![] }, skipped));
    }
    Ok((sweep(g, &ok, seeds, template)?, skipped))
}

/// Runs every stage and writes the artifacts into `cfg.output_dir`. On error
/// the files written so far are removed and the error names the failing
/// stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    in_stage("config", || cfg.validate())?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    match execute(cfg, &mut out) {
        Ok(m) => Ok(m),
        Err(e) => {
            out.remove_all();
            Err(e)
        }
    }
}

fn execute(cfg: &PipelineConfig, out: &mut Outputs) -> Result<RunManifest> {
    let mut timings: Vec<StageTiming> = Vec::new();
    let mut timed = |name: &str, start: Instant| {
        timings.push(StageTiming { stage: name.to_string(), ms: start.elapsed().as_secs_f64() * 1e3 })
    };
    let synth_seed = seed::derive(cfg.seed, stage::SYNTH);
    let sparsify_seed = seed::derive(cfg.seed, stage::SPARSIFY);
    let sweep_seeds = cfg.sweep_seeds();

    let t = Instant::now();
    let session = in_stage("ingest", || match &cfg.input {
        InputSource::Synth(p) => p.generate(synth_seed),
        InputSource::Files { gaze_csv, viewport_csv, session_json } => {
            load_session(gaze_csv, viewport_csv.as_deref(), session_json)
        }
    })?;
    timed("ingest", t);

    let t = Instant::now();
    let raw = in_stage("graph", || build_raw_graph(&session))?;
    timed("graph", t);

    let t = Instant::now();
    let clustered = in_stage("cluster", || cluster_graph(&raw, &cfg.cluster))?;
    timed("cluster", t);

    let t = Instant::now();
    let sp_cfg = SparsifyConfig { seed: sparsify_seed, ..cfg.sparsify };
    let sparse = in_stage("sparsify", || sparsify(&clustered.graph, &sp_cfg))?;
    timed("sparsify", t);

    let t = Instant::now();
    let mse = in_stage("metrics", || laplacian_mse(&clustered.graph, &sparse.graph))?;
    let (swept, _) =
        in_stage("metrics", || sweep_feasible(&clustered.graph, &cfg.sweep.ratios, &sweep_seeds, &cfg.sparsify))?;
    timed("metrics", t);

    let t = Instant::now();
    let rois = in_stage("rois", || extract_rois(&clustered.graph, cfg.roi_selection, cfg.voi_size, &session.screens))?;
    timed("rois", t);

    let t = Instant::now();
    let (screens, transitions) = if session.screens.len() > 1 {
        in_stage("screens", || per_screen(cfg, out, &session, &raw, &clustered, sparsify_seed, &sweep_seeds))?
    } else {
        (Vec::new(), Vec::new())
    };
    timed("screens", t);

    let t = Instant::now();
    in_stage("write", || {
        out.write_json(RAW_GRAPH, &GraphJson::from(&raw))?;
        out.write_json(CLUSTERED_GRAPH, &GraphJson::from(&clustered.graph))?;
        out.write_json(SPARSIFIED_GRAPH, &GraphJson::from(&sparse.graph))?;
        out.write_json(CLUSTERS, &clustered.to_cluster_json())?;
        out.write_json(SPARSIFY_REPORT, &sparse.report)?;
        out.write_text(METRICS_CSV, &metrics_csv(&swept.rows))?;
        out.write_json(METRICS_PLOT, &metrics_plot_json(&swept))?;
        out.write_json(ROIS, &rois.rois)?;
        if session.screens.len() > 1 {
            out.write_json(TRANSITIONS, &transitions)?;
        }
        Ok(())
    })?;
    timed("write", t);

    let manifest = build_manifest(
        cfg,
        StageSeeds {
            synth: matches!(cfg.input, InputSource::Synth(_)).then_some(synth_seed),
            sparsify: sparsify_seed,
            sweep: sweep_seeds,
        },
        &session,
        &raw,
        &clustered,
        &sparse,
        &rois,
        mse,
        swept.means,
        screens,
        transitions,
        {
            let mut names = out.relative_names();
            names.push(MANIFEST.to_string());
            names.sort();
            names
        },
    );
    in_stage("write", || {
        out.write_json(MANIFEST, &manifest)?;
        out.write_json(TIMINGS, &timings)
    })?;
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn build_manifest(
    cfg: &PipelineConfig,
    seeds: StageSeeds,
    session: &GazeSession,
    raw: &GazeGraph,
    clustered: &ClusteredGraph,
    sparse: &SparsifiedGraph,
    rois: &RoiSelection,
    mse: f64,
    sweep: Vec<SweepMean>,
    screens: Vec<ScreenSummary>,
    transitions: Vec<TransitionCount>,
    artifacts: Vec<String>,
) -> RunManifest {
    let counts = Counts {
        raw_nodes: raw.node_count(),
        raw_edges: raw.edge_count(),
        segments: session.segments.len(),
        clusters: clustered.cluster_count(),
        clustered_edges: clustered.graph.edge_count(),
        self_loops: clustered.total_self_loops(),
        kept_edges: sparse.graph.edge_count(),
        rois: rois.rois.len(),
    };
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { 1.0 - a as f64 / b as f64 };
    RunManifest {
        tool: "gazesparse".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seeds,
        counts,
        data_reduction: frac(counts.clusters + counts.kept_edges, counts.raw_nodes + counts.raw_edges),
        node_reduction: frac(counts.clusters, counts.raw_nodes),
        edge_reduction: frac(counts.kept_edges, counts.raw_edges),
        ratio_achieved: sparse.report.ratio_achieved,
        laplacian_mse: mse,
        sigma: sparse.report.sigma,
        alpha: sparse.report.alpha,
        sweep,
        screens,
        cross_screen_transitions: transitions,
        artifacts,
    }
}

fn per_screen(
    cfg: &PipelineConfig,
    out: &mut Outputs,
    session: &GazeSession,
    raw: &GazeGraph,
    clustered: &ClusteredGraph,
    sparsify_seed: u64,
    sweep_seeds: &[u64],
) -> Result<(Vec<ScreenSummary>, Vec<TransitionCount>)> {
    let mut summaries = Vec::new();
    for screen in &session.screens {
        let sub = clustered.screen_subgraph(screen.id)?;
        let dir = format!("{SCREENS_DIR}/screen_{}", screen.id);
        let sp_cfg = SparsifyConfig { seed: seed::derive(sparsify_seed, 1 + screen.id as u64), ..cfg.sparsify };
        let m = sub.graph.edge_count();
        // too few edges for the configured ratio: keep the screen unsparsified
        let ratio = cfg.sparsify.target_edge_ratio;
        let sparse = if m > 0 && ratio < 1.0 && (ratio * m as f64).round() < 1.0 {
            log::warn!("screen {} has {m} edges; ratio {ratio} leaves no draws", screen.id);
            sparsify(&sub.graph, &SparsifyConfig { target_edge_ratio: 1.0, ..sp_cfg })?
        } else {
            sparsify(&sub.graph, &sp_cfg)?
        };
        let (swept, skipped) = sweep_feasible(&sub.graph, &cfg.sweep.ratios, sweep_seeds, &cfg.sparsify)?;
        out.write_json(&format!("{dir}/{CLUSTERED_GRAPH}"), &GraphJson::from(&sub.graph))?;
        out.write_json(&format!("{dir}/{SPARSIFIED_GRAPH}"), &GraphJson::from(&sparse.graph))?;
        out.write_json(&format!("{dir}/{SPARSIFY_REPORT}"), &sparse.report)?;
        out.write_text(&format!("{dir}/{METRICS_CSV}"), &metrics_csv(&swept.rows))?;
        summaries.push(ScreenSummary {
            id: screen.id,
            modality: screen.modality.clone(),
            raw_nodes: raw.nodes().iter().filter(|n| n.screen_id == screen.id).count(),
            clusters: sub.cluster_count(),
            clustered_edges: m,
            kept_edges: sparse.graph.edge_count(),
            laplacian_mse: laplacian_mse(&sub.graph, &sparse.graph)?,
            sigma: sparse.report.sigma,
            skipped_ratios: skipped,
            dir,
        });
    }
    let transitions = session
        .cross_screen_transitions()
        .into_iter()
        .map(|((from, to), count)| TransitionCount { from, to, count })
        .collect();
    Ok((summaries, transitions))
}

/// One session's Laplacian MSE at the comparison ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMse {
    pub session: String,
    pub reader: String,
    pub laplacian_mse: f64,
}

/// Mean and population variance of the per-session MSE for one reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderSummary {
    pub reader: String,
    pub sessions: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub edge_ratio: f64,
    pub sessions: Vec<SessionMse>,
    pub readers: Vec<ReaderSummary>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("session,reader,edge_ratio,laplacian_mse\n");
        for r in &self.sessions {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.session,
                r.reader,
                jsonfmt::fmt_f64(self.edge_ratio),
                jsonfmt::fmt_f64(r.laplacian_mse)
            ));
        }
        s
    }
}

/// Per-session sweep MSE at `fixed_ratio` and per-reader mean/variance.
/// All manifests must share the same sweep grid (ratios and seed count).
pub fn compare_sessions(manifests: &[RunManifest], fixed_ratio: f64) -> Result<Comparison> {
    if manifests.len() < 2 {
        return Err(Error::Config(format!("comparison needs at least 2 manifests, got {}", manifests.len())));
    }
    let grid = |m: &RunManifest| (m.sweep.iter().map(|s| s.edge_ratio.to_bits()).collect::<Vec<_>>(), m.config.sweep.seeds);
    let first = grid(&manifests[0]);
    for (k, m) in manifests.iter().enumerate().skip(1) {
        if grid(m) != first {
            return Err(Error::Config(format!("manifest {k} was swept on a different grid than manifest 0")));
        }
    }
    let mut sessions = Vec::with_capacity(manifests.len());
    for (k, m) in manifests.iter().enumerate() {
        let cell = m
            .sweep
            .iter()
            .find(|s| (s.edge_ratio - fixed_ratio).abs() < 1e-12)
            .ok_or_else(|| Error::Config(format!("ratio {fixed_ratio} is not on the sweep grid")))?;
        sessions.push(SessionMse {
            session: m.config.session_label.clone().unwrap_or_else(|| format!("session-{k}")),
            reader: m.config.reader_id.clone().unwrap_or_else(|| "unknown".into()),
            laplacian_mse: cell.laplacian_mse,
        });
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in &sessions {
        groups.entry(&s.reader).or_default().push(s.laplacian_mse);
    }
    let readers = groups
        .into_iter()
        .map(|(reader, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let variance = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            ReaderSummary { reader: reader.to_string(), sessions: v.len(), mean, variance }
        })
        .collect();
    Ok(Comparison { edge_ratio: fixed_ratio, sessions, readers })
}
