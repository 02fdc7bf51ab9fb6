//! `gazesparse`: command-line front end for the gaze graph pipeline.
//!
//! Every stage reads the previous stage's files, so any suffix of the
//! pipeline can be rerun on its own. `run` executes all stages at once.
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gazesparse_core::cluster::{cluster_graph, ClusterParams};
use gazesparse_core::graph::build_raw_graph;
use gazesparse_core::ingest::{session_to_csv, SessionConfig};
use gazesparse_core::jsonfmt;
use gazesparse_core::metrics::{metrics_csv, sweep, DEFAULT_RATIOS};
use gazesparse_core::pipeline::{
    compare_sessions, load_session, metrics_plot_json, read_graph, run_pipeline, write_graph, InputSource,
    PipelineConfig, RunManifest, SweepGrid, SynthParams, CLUSTERED_GRAPH, CLUSTERS, DEFAULT_SWEEP_SEEDS,
    DEFAULT_TARGET_RATIO, METRICS_CSV, METRICS_PLOT, OUTPUT_DIR_ENV, RAW_GRAPH, ROIS, SPARSIFIED_GRAPH,
    SPARSIFY_REPORT,
};
use gazesparse_core::roi::{extract_rois, Selection, VoiSize};
use gazesparse_core::seed::{self, stage};
use gazesparse_core::sparsify::{sparsify, SampleMode, SparsifyConfig};
use gazesparse_core::{Error, Result};

#[derive(Parser)]
#[command(name = "gazesparse", version, about = "Attention-annotated sparse graphs from eye-tracking recordings")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic reading session as gaze.csv, viewport.csv and session.json.
    Synth(SynthArgs),
    /// Parse a recorded session into the raw gaze graph.
    Ingest(InputArgs),
    /// Cluster a raw graph with BIRCH and contract it onto the clusters.
    Cluster(ClusterCmd),
    /// Sample and reweight the edges of a clustered graph.
    Sparsify(SparsifyCmd),
    /// Sweep edge ratios and seeds, comparing sparsified to clustered topology.
    Metrics(MetricsCmd),
    /// Rank clusters by attention and emit fixed-size VOIs.
    Rois(RoisCmd),
    /// Run every stage and write all artifacts plus a manifest.
    Run(Box<RunCmd>),
    /// Compare the sweep MSE of several runs at one edge ratio.
    Compare(CompareCmd),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of gaze samples.
    #[arg(long, default_value_t = SynthParams::default().n)]
    n: usize,
    /// Random-walk step as a fraction of the volume extent.
    #[arg(long, default_value_t = SynthParams::default().step_scale)]
    step_scale: f64,
    /// Number of screens; 4 uses the multi-parametric reading profile.
    #[arg(long, default_value_t = SynthParams::default().screens)]
    screens: usize,
    /// Per-sample probability of switching screens.
    #[arg(long, default_value_t = SynthParams::default().switch_prob)]
    switch_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InputArgs {
    /// Gaze samples CSV (`t_ms,screen_id,x_px,y_px,valid`).
    #[arg(long)]
    gaze: PathBuf,
    /// Viewport log CSV; screens without entries use the identity mapping.
    #[arg(long)]
    viewport: Option<PathBuf>,
    /// Session JSON declaring screens and stimulus bounds.
    #[arg(long)]
    session: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct ClusterArgs {
    /// BIRCH radius threshold in voxel units.
    #[arg(long)]
    threshold: Option<f64>,
    /// BIRCH branching factor.
    #[arg(long)]
    branching: Option<usize>,
    /// Scale applied to the slice axis before clustering.
    #[arg(long)]
    slice_scale: Option<f64>,
}

impl ClusterArgs {
    fn apply(&self, p: &mut ClusterParams) {
        if let Some(v) = self.threshold {
            p.threshold = v;
        }
        if let Some(v) = self.branching {
            p.branching = v;
        }
        if let Some(v) = self.slice_scale {
            p.slice_scale = v;
        }
    }
}

#[derive(Args, Clone, Copy)]
struct SparsifyArgs {
    /// Target fraction of edges to keep.
    #[arg(long)]
    ratio: Option<f64>,
    /// Sampling mode: `bernoulli` or `with-replacement`.
    #[arg(long)]
    mode: Option<SampleMode>,
    /// Probe count for the reported relative condition number.
    #[arg(long)]
    probes: Option<usize>,
    /// Keep sampled edges at their original weight.
    #[arg(long)]
    no_reweight: bool,
}

impl SparsifyArgs {
    fn apply(&self, c: &mut SparsifyConfig) {
        if let Some(v) = self.ratio {
            c.target_edge_ratio = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.probes {
            c.alpha_report_probes = v;
        }
        if self.no_reweight {
            c.reweight = false;
        }
    }
}

#[derive(Args, Clone, Copy)]
struct RoiArgs {
    /// Keep the k highest-attention clusters.
    #[arg(long, conflicts_with = "min_percentile")]
    top_k: Option<usize>,
    /// Keep clusters at or above this attention percentile (0-100).
    #[arg(long)]
    min_percentile: Option<f64>,
    /// VOI size as WxHxD, e.g. 40x40x6.
    #[arg(long)]
    voi_size: Option<VoiSize>,
}

impl RoiArgs {
    fn selection(&self, default: Selection) -> Selection {
        match (self.top_k, self.min_percentile) {
            (Some(k), _) => Selection::TopK(k),
            (None, Some(p)) => Selection::MinPercentile(p),
            (None, None) => default,
        }
    }
}

#[derive(Args)]
struct ClusterCmd {
    /// Raw graph JSON.
    #[arg(long)]
    raw: PathBuf,
    #[command(flatten)]
    params: ClusterArgs,
}

#[derive(Args)]
struct SparsifyCmd {
    /// Clustered graph JSON.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    params: SparsifyArgs,
}

#[derive(Args)]
struct MetricsCmd {
    /// Clustered graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Comma-separated edge ratios.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RATIOS.to_vec())]
    ratios: Vec<f64>,
    /// Number of seeds per ratio.
    #[arg(long, default_value_t = DEFAULT_SWEEP_SEEDS)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    params: SparsifyArgs,
}

#[derive(Args)]
struct RoisCmd {
    /// Clustered graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Session JSON with the stimulus bounds of every screen.
    #[arg(long)]
    session: PathBuf,
    #[command(flatten)]
    params: RoiArgs,
}

#[derive(Args)]
struct RunCmd {
    /// Pipeline configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gaze CSV; when absent the session is synthesized.
    #[arg(long, requires = "session")]
    gaze: Option<PathBuf>,
    #[arg(long, requires = "gaze")]
    viewport: Option<PathBuf>,
    #[arg(long, requires = "gaze")]
    session: Option<PathBuf>,
    /// Synthetic sample count.
    #[arg(long, conflicts_with = "gaze")]
    n: Option<usize>,
    /// Synthetic screen count.
    #[arg(long, conflicts_with = "gaze")]
    screens: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated sweep ratios.
    #[arg(long, value_delimiter = ',')]
    sweep_ratios: Option<Vec<f64>>,
    /// Seeds per sweep ratio.
    #[arg(long)]
    sweep_seeds: Option<usize>,
    #[arg(long)]
    reader: Option<String>,
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    sparsify: SparsifyArgs,
    #[command(flatten)]
    roi: RoiArgs,
}

#[derive(Args)]
struct CompareCmd {
    /// Manifest JSON files of the runs to compare.
    #[arg(required = true, num_args = 1..)]
    manifests: Vec<PathBuf>,
    /// Edge ratio at which to compare; must be on every sweep grid.
    #[arg(long, default_value_t = 0.9)]
    ratio: f64,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn synth(out: &Path, args: &SynthArgs) -> Result<()> {
    let params = SynthParams { n: args.n, step_scale: args.step_scale, screens: args.screens, switch_prob: args.switch_prob };
    let session = params.generate(seed::derive(args.seed, stage::SYNTH))?;
    let (gaze, viewport) = session_to_csv(&session)?;
    let config = SessionConfig { screens: session.screens.clone(), ..SessionConfig::single_screen(1, 1, session.screens[0].stimulus) };
    create_dir(out)?;
    write_text(&out.join("gaze.csv"), &gaze)?;
    write_text(&out.join("viewport.csv"), &viewport)?;
    jsonfmt::write_file(&out.join("session.json"), &config)?;
    log::info!("wrote {} samples on {} screen(s) to {}", session.points.len(), session.screens.len(), out.display());
    Ok(())
}

fn ingest(out: &Path, args: &InputArgs) -> Result<()> {
    let session = load_session(&args.gaze, args.viewport.as_deref(), &args.session)?;
    let raw = build_raw_graph(&session)?;
    create_dir(out)?;
    write_graph(&out.join(RAW_GRAPH), &raw)?;
    println!("raw graph: {} nodes, {} edges, {} segments", raw.node_count(), raw.edge_count(), session.segments.len());
    Ok(())
}

fn cluster(out: &Path, cmd: &ClusterCmd) -> Result<()> {
    let raw = read_graph(&cmd.raw)?;
    let mut params = ClusterParams::default();
    cmd.params.apply(&mut params);
    params.validate().map_err(to_config)?;
    let clustered = cluster_graph(&raw, &params)?;
    create_dir(out)?;
    write_graph(&out.join(CLUSTERED_GRAPH), &clustered.graph)?;
    jsonfmt::write_file(&out.join(CLUSTERS), &clustered.to_cluster_json())?;
    println!(
        "{} raw nodes -> {} clusters, {} edges, {} self-loops",
        raw.node_count(),
        clustered.cluster_count(),
        clustered.graph.edge_count(),
        clustered.total_self_loops()
    );
    Ok(())
}

fn sparsify_cfg(params: &SparsifyArgs, seed: u64) -> Result<SparsifyConfig> {
    let mut cfg = SparsifyConfig { target_edge_ratio: DEFAULT_TARGET_RATIO, seed, ..Default::default() };
    params.apply(&mut cfg);
    cfg.validate().map_err(to_config)?;
    Ok(cfg)
}

fn sparsify_cmd(out: &Path, cmd: &SparsifyCmd) -> Result<()> {
    let g = read_graph(&cmd.graph)?;
    let cfg = sparsify_cfg(&cmd.params, seed::derive(cmd.seed, stage::SPARSIFY))?;
    let sparse = sparsify(&g, &cfg)?;
    create_dir(out)?;
    write_graph(&out.join(SPARSIFIED_GRAPH), &sparse.graph)?;
    jsonfmt::write_file(&out.join(SPARSIFY_REPORT), &sparse.report)?;
    let r = &sparse.report;
    println!(
        "kept {} of {} edges (ratio {:.4}), sigma {}, alpha {}",
        r.edges_kept, r.edges_total, r.ratio_achieved, r.sigma, r.alpha
    );
    Ok(())
}

fn metrics_cmd(out: &Path, cmd: &MetricsCmd) -> Result<()> {
    let g = read_graph(&cmd.graph)?;
    let template = sparsify_cfg(&cmd.params, 0)?;
    let base = seed::derive(cmd.seed, stage::METRICS);
    let seeds: Vec<u64> = (0..cmd.seeds as u64).map(|k| seed::derive(base, k)).collect();
    let result = sweep(&g, &cmd.ratios, &seeds, &template).map_err(to_config)?;
    create_dir(out)?;
    write_text(&out.join(METRICS_CSV), &metrics_csv(&result.rows))?;
    jsonfmt::write_file(&out.join(METRICS_PLOT), &metrics_plot_json(&result))?;
    println!("ratio  diameter_ratio  spearman  laplacian_mse");
    for m in &result.means {
        let rho = m.betweenness_spearman.map_or("NA".to_string(), |v| format!("{v:.4}"));
        println!("{:<6} {:<15.4} {:<9} {:.4e}", m.edge_ratio, m.diameter_ratio, rho, m.laplacian_mse);
    }
    Ok(())
}

fn rois_cmd(out: &Path, cmd: &RoisCmd) -> Result<()> {
    let g = read_graph(&cmd.graph)?;
    let session: SessionConfig = jsonfmt::read_file(&cmd.session)?;
    let selection = cmd.params.selection(Selection::default());
    let voi = cmd.params.voi_size.unwrap_or(PipelineConfig::default().voi_size);
    let sel = extract_rois(&g, selection, voi, &session.screens).map_err(to_config)?;
    create_dir(out)?;
    jsonfmt::write_file(&out.join(ROIS), &sel.rois)?;
    println!("{} ROIs{}", sel.rois.len(), if sel.truncated { " (fewer clusters than requested)" } else { "" });
    Ok(())
}

fn run_cmd(out: PathBuf, cmd: &RunCmd) -> Result<()> {
    let mut cfg: PipelineConfig = match &cmd.config {
        Some(p) => jsonfmt::read_file(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => PipelineConfig::default(),
    };
    cfg.output_dir = out;
    if let (Some(gaze), Some(session)) = (&cmd.gaze, &cmd.session) {
        cfg.input =
            InputSource::Files { gaze_csv: gaze.clone(), viewport_csv: cmd.viewport.clone(), session_json: session.clone() };
    }
    if cmd.n.is_some() || cmd.screens.is_some() {
        let mut p = match cfg.input {
            InputSource::Synth(p) => p,
            InputSource::Files { .. } => SynthParams::default(),
        };
        p.n = cmd.n.unwrap_or(p.n);
        p.screens = cmd.screens.unwrap_or(p.screens);
        cfg.input = InputSource::Synth(p);
    }
    if let Some(s) = cmd.seed {
        cfg.seed = s;
    }
    if let Some(r) = &cmd.sweep_ratios {
        cfg.sweep = SweepGrid { ratios: r.clone(), ..cfg.sweep };
    }
    if let Some(s) = cmd.sweep_seeds {
        cfg.sweep.seeds = s;
    }
    if cmd.reader.is_some() {
        cfg.reader_id = cmd.reader.clone();
    }
    if cmd.label.is_some() {
        cfg.session_label = cmd.label.clone();
    }
    cmd.cluster.apply(&mut cfg.cluster);
    cmd.sparsify.apply(&mut cfg.sparsify);
    cfg.roi_selection = cmd.roi.selection(cfg.roi_selection);
    if let Some(v) = cmd.roi.voi_size {
        cfg.voi_size = v;
    }
    let m = run_pipeline(&cfg)?;
    println!(
        "{} samples -> {} clusters, {} -> {} edges; data reduction {:.2}%, Laplacian MSE {:.4e}, {} ROIs",
        m.counts.raw_nodes,
        m.counts.clusters,
        m.counts.clustered_edges,
        m.counts.kept_edges,
        100.0 * m.data_reduction,
        m.laplacian_mse,
        m.counts.rois
    );
    println!("artifacts written to {}", cfg.output_dir.display());
    Ok(())
}

fn compare_cmd(out: &Path, cmd: &CompareCmd) -> Result<()> {
    let manifests = cmd
        .manifests
        .iter()
        .map(|p| jsonfmt::read_file::<RunManifest>(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let table = compare_sessions(&manifests, cmd.ratio)?;
    create_dir(out)?;
    write_text(&out.join("comparison.csv"), &table.to_csv())?;
    jsonfmt::write_file(&out.join("comparison.json"), &table)?;
    for r in &table.readers {
        println!("{}: {} sessions, mean MSE {:.4e}, variance {:.4e}", r.reader, r.sessions, r.mean, r.variance);
    }
    Ok(())
}

/// Invalid user-supplied parameters are configuration errors at the CLI.
fn to_config(e: Error) -> Error {
    match e {
        Error::Argument(m) => Error::Config(m),
        other => other,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(&cli.out, a),
        Command::Ingest(a) => ingest(&cli.out, a),
        Command::Cluster(c) => cluster(&cli.out, c),
        Command::Sparsify(c) => sparsify_cmd(&cli.out, c),
        Command::Metrics(c) => metrics_cmd(&cli.out, c),
        Command::Rois(c) => rois_cmd(&cli.out, c),
        Command::Run(c) => run_cmd(cli.out.clone(), c),
        Command::Compare(c) => compare_cmd(&cli.out, c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
