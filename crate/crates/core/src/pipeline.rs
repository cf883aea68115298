//! Stage orchestration with persisted, hash-audited intermediates.
//!
//! Every artifact `foo` is written next to a sidecar `foo.meta.json` that
//! records the producing stage, tool version, seed, parameters, and SHA-256
//! of every input and of the artifact itself. When a stage reads an input
//! that has a sidecar, the content hash is checked first so a hand-edited or
//! half-rewritten intermediate is reported as stale instead of silently used.
//!
//! Full runs take one master seed and derive per-stage seeds from it with
//! [`stage_seed`]: the first eight bytes (little-endian) of
//! `SHA-256(master_seed as u64 LE || stage name)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generators::{generate_cnn, generate_hk, CnnParams, HkParams};
use crate::graph::Graph;
use crate::metrics::{self, NodeFeatures, FEATURE_NAMES};
use crate::sir::{run_sir_with_state, Health, SirOutcome, SirParams, SnapshotTimes};
use crate::som::{
    assign_nodes, cell_stats, normalize_features, parse_log_features, train_som_with_summary,
    CellAssignment, CellStats, SomConfig, SomGrid, TrainingSummary,
};
use crate::spd::{
    run_spd_with_state, SpdConfig, SpdInit, SpdOutcome, SpdParams, Strategy, TieBreak,
};
use crate::stats::{mean, spearman};
use crate::trace::{format_time, SimTrace};
use crate::viz::{render_heatmaps, render_pie_lattice, render_timeline, PieOptions};

pub const TOOL_VERSION: &str = concat!("netsom ", env!("CARGO_PKG_VERSION"));

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "NETSOM_THREADS";

/// Sizes the global worker pool from `NETSOM_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::Config(format!(
                    "{THREADS_ENV} must be a positive integer, got {value:?}"
                ))
            })?;
        // A pool that is already initialized keeps its size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-stage seed derived from the master seed.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub stage: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub parameters: Value,
    /// Input file name → SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
    pub output: String,
    pub output_sha256: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// An input file read for a stage, with its content hash.
#[derive(Debug, Clone)]
pub struct Input {
    pub path: PathBuf,
    pub text: String,
    pub sha256: String,
}

/// Reads an input, verifying it against its sidecar when one exists.
pub fn read_input(path: &Path) -> Result<Input> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sha256 = sha256_hex(text.as_bytes());
    let meta_file = meta_path(path);
    if meta_file.exists() {
        let meta = read_meta(path)?;
        if meta.output_sha256 != sha256 {
            return Err(Error::StaleInput {
                path: path.to_path_buf(),
            });
        }
    }
    Ok(Input {
        path: path.to_path_buf(),
        text,
        sha256,
    })
}

pub fn read_meta(artifact: &Path) -> Result<ArtifactMeta> {
    let meta_file = meta_path(artifact);
    let text = fs::read_to_string(&meta_file).map_err(|e| Error::io(&meta_file, e))?;
    Ok(serde_json::from_str(&text)?)
}

struct ArtifactInfo<'a> {
    stage: &'a str,
    seed: Option<u64>,
    parameters: Value,
    inputs: &'a [&'a Input],
    details: Value,
}

fn write_artifact(path: &Path, content: &str, info: ArtifactInfo<'_>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))?;
    let meta = ArtifactMeta {
        stage: info.stage.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        seed: info.seed,
        parameters: info.parameters,
        inputs: info
            .inputs
            .iter()
            .map(|i| (file_name(&i.path), i.sha256.clone()))
            .collect(),
        output: file_name(path),
        output_sha256: sha256_hex(content.as_bytes()),
        details: info.details,
    };
    let meta_file = meta_path(path);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&meta_file, text).map_err(|e| Error::io(&meta_file, e))
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Hk,
    Cnn,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Hk => "hk",
            Model::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub model: Model,
    pub n: usize,
    /// HK edges per arriving node.
    pub m: usize,
    /// HK triad-formation probability.
    pub pt: f64,
    /// CNN conversion probability.
    pub u: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            model: Model::Hk,
            n: 10_000,
            m: 4,
            pt: 0.9,
            u: 0.75,
        }
    }
}

impl GenerateConfig {
    pub fn generate(&self, seed: u64) -> Result<Graph> {
        match self.model {
            Model::Hk => generate_hk(
                &HkParams {
                    n: self.n,
                    m: self.m,
                    triad_prob: self.pt,
                },
                seed,
            ),
            Model::Cnn => generate_cnn(
                &CnnParams {
                    n: self.n,
                    conversion_prob: self.u,
                },
                seed,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SomSection {
    /// `"WxH"`.
    pub grid: String,
    pub epochs: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    pub sigma1: f64,
    /// Features passed through `log10(1 + x)` before scaling, e.g. `["k", "b"]`.
    pub log_features: Vec<String>,
}

impl Default for SomSection {
    fn default() -> Self {
        let d = SomConfig::default();
        SomSection {
            grid: format!("{}x{}", d.width, d.height),
            epochs: d.epochs,
            alpha0: d.alpha_start,
            alpha1: d.alpha_end,
            sigma0: d.sigma_start,
            sigma1: d.sigma_end,
            log_features: Vec::new(),
        }
    }
}

/// Parses `"WxH"` lattice dimensions.
pub fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let parsed = text
        .split_once(['x', 'X'])
        .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)));
    match parsed {
        Some((w, h)) if w >= 1 && h >= 1 && w * h >= 2 => Ok((w, h)),
        _ => Err(Error::Config(format!(
            "bad grid {text:?}; expected WxH with at least 2 cells"
        ))),
    }
}

impl SomSection {
    pub fn som_config(&self) -> Result<SomConfig> {
        let (width, height) = parse_grid(&self.grid)?;
        Ok(SomConfig {
            width,
            height,
            epochs: self.epochs,
            alpha_start: self.alpha0,
            alpha_end: self.alpha1,
            sigma_start: self.sigma0,
            sigma_end: self.sigma1,
        })
    }

    pub fn log_mask(&self) -> Result<[bool; 5]> {
        parse_log_features(&self.log_features.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SirSection {
    pub lambda: f64,
    pub mu: f64,
    pub dt: f64,
    pub initial: usize,
    /// Spacing of recorded snapshots in time units.
    pub snapshot_interval: f64,
}

impl Default for SirSection {
    fn default() -> Self {
        let p = SirParams::default();
        SirSection {
            lambda: p.lambda,
            mu: p.mu,
            dt: p.dt,
            initial: 10,
            snapshot_interval: 0.5,
        }
    }
}

impl SirSection {
    pub fn params(&self) -> SirParams {
        SirParams {
            lambda: self.lambda,
            mu: self.mu,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieMode {
    #[default]
    LowestId,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    #[default]
    Random,
    AllC,
    AllD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdSection {
    pub temptation: f64,
    pub epsilon: f64,
    pub max_rounds: usize,
    pub tie: TieMode,
    pub init: InitMode,
}

impl Default for SpdSection {
    fn default() -> Self {
        let p = SpdParams::default();
        SpdSection {
            temptation: p.temptation,
            epsilon: p.punishment,
            max_rounds: 100,
            tie: TieMode::LowestId,
            init: InitMode::Random,
        }
    }
}

impl SpdSection {
    pub fn spd_config(&self) -> SpdConfig {
        SpdConfig {
            params: SpdParams {
                temptation: self.temptation,
                punishment: self.epsilon,
            },
            init: match self.init {
                InitMode::Random => SpdInit::Random,
                InitMode::AllC => SpdInit::AllCooperate,
                InitMode::AllD => SpdInit::AllDefect,
            },
            tie: match self.tie {
                TieMode::LowestId => TieBreak::LowestId,
                TieMode::Random => TieBreak::Random,
            },
            max_rounds: self.max_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    /// SIR instants to draw; evenly spaced over the run when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sir_times: Option<Vec<f64>>,
    /// SPD rounds to draw; evenly spaced over the run when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spd_rounds: Option<Vec<f64>>,
    /// Number of evenly spaced panels when times are not given.
    pub panels: usize,
    pub columns: usize,
    pub scale_pies: bool,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            sir_times: None,
            spd_rounds: None,
            panels: 6,
            columns: 3,
            scale_pies: false,
        }
    }
}

impl RenderSection {
    pub fn pie_options(&self) -> PieOptions {
        PieOptions {
            scale_by_population: self.scale_pies,
        }
    }
}

/// Full-run configuration. Every field defaults; when neither `sir` nor
/// `spd` is present both simulations run with defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub generate: GenerateConfig,
    pub som: SomSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sir: Option<SirSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spd: Option<SpdSection>,
    pub render: RenderSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            generate: GenerateConfig::default(),
            som: SomSection::default(),
            sir: None,
            spd: None,
            render: RenderSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.sir.is_none() && cfg.spd.is_none() {
            cfg.sir = Some(SirSection::default());
            cfg.spd = Some(SpdSection::default());
        }
        cfg.som.som_config()?;
        cfg.som.log_mask()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

// ---------------------------------------------------------------------------
// Stages

pub fn cmd_generate(cfg: &GenerateConfig, seed: u64, out: &Path) -> Result<Graph> {
    let graph = cfg.generate(seed)?;
    write_artifact(
        out,
        &graph.to_edge_list(),
        ArtifactInfo {
            stage: "generate",
            seed: Some(seed),
            parameters: serde_json::to_value(cfg)?,
            inputs: &[],
            details: json!({
                "nodes": graph.node_count(),
                "edges": graph.edge_count(),
                "mean_degree": graph.mean_degree(),
            }),
        },
    )?;
    Ok(graph)
}

pub fn load_graph(path: &Path) -> Result<(Graph, Input)> {
    let input = read_input(path)?;
    let graph = Graph::parse_edge_list(&input.text, path)?;
    Ok((graph, input))
}

pub fn cmd_metrics(graph_path: &Path, out: &Path) -> Result<NodeFeatures> {
    let (graph, input) = load_graph(graph_path)?;
    let features = metrics::compute_all(&graph)?;
    write_artifact(
        out,
        &features.to_csv()?,
        ArtifactInfo {
            stage: "metrics",
            seed: None,
            parameters: Value::Null,
            inputs: &[&input],
            details: json!({ "graph_hash": graph.content_hash() }),
        },
    )?;
    Ok(features)
}

pub fn load_features(path: &Path) -> Result<(NodeFeatures, Input)> {
    let input = read_input(path)?;
    let features = NodeFeatures::from_csv(&input.text, path)?;
    Ok((features, input))
}

#[derive(Debug, Clone)]
pub struct CategorizePaths {
    pub assignment: PathBuf,
    pub cells: PathBuf,
    pub grid: PathBuf,
}

impl CategorizePaths {
    /// `<stem>.assign.csv`, `<stem>.cells.csv`, `<stem>.som.json` in `dir`.
    pub fn with_stem(dir: &Path, stem: &str) -> Self {
        CategorizePaths {
            assignment: dir.join(format!("{stem}.assign.csv")),
            cells: dir.join(format!("{stem}.cells.csv")),
            grid: dir.join(format!("{stem}.som.json")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Categorized {
    pub grid: SomGrid,
    pub assignment: CellAssignment,
    pub stats: CellStats,
    pub training: TrainingSummary,
}

/// Normalize, train, assign, and aggregate, in memory.
pub fn categorize(features: &NodeFeatures, som: &SomSection, seed: u64) -> Result<Categorized> {
    let config = som.som_config()?;
    let raw = features.rows();
    let (scaled, norm) = normalize_features(&raw, som.log_mask()?)?;
    let (grid, training) = train_som_with_summary(&scaled, norm, &config, seed)?;
    let assignment = assign_nodes(&grid, &scaled);
    let stats = cell_stats(&assignment, &raw)?;
    Ok(Categorized {
        grid,
        assignment,
        stats,
        training,
    })
}

pub fn cmd_categorize(
    features_path: &Path,
    som: &SomSection,
    seed: u64,
    out: &CategorizePaths,
) -> Result<Categorized> {
    let (features, input) = load_features(features_path)?;
    let result = categorize(&features, som, seed)?;
    let parameters = serde_json::to_value(som)?;
    let details = json!({
        "grid": [result.grid.width, result.grid.height],
        "initial_quantization_error": result.training.initial_quantization_error,
        "final_quantization_error": result.training.final_quantization_error,
    });
    let inputs = [&input];
    let info = |details: Value| ArtifactInfo {
        stage: "categorize",
        seed: Some(seed),
        parameters: parameters.clone(),
        inputs: &inputs,
        details,
    };
    write_artifact(
        &out.grid,
        &(result.grid.to_json()? + "\n"),
        info(details.clone()),
    )?;
    write_artifact(
        &out.assignment,
        &result.assignment.to_csv()?,
        info(details.clone()),
    )?;
    write_artifact(&out.cells, &result.stats.to_csv()?, info(details))?;
    Ok(result)
}

/// Loads an assignment. Lattice dimensions come from `dims`, else from the
/// file's sidecar, else from the largest coordinates present.
pub fn load_assignment(
    path: &Path,
    dims: Option<(usize, usize)>,
) -> Result<(CellAssignment, Input)> {
    let input = read_input(path)?;
    let dims = dims.or_else(|| {
        let meta = read_meta(path).ok()?;
        let grid = meta.details.get("grid")?.as_array()?;
        Some((
            grid.first()?.as_u64()? as usize,
            grid.get(1)?.as_u64()? as usize,
        ))
    });
    let assignment = CellAssignment::from_csv(&input.text, dims, path)?;
    Ok((assignment, input))
}

fn check_sizes(graph: &Graph, assignment: &CellAssignment) -> Result<()> {
    if graph.node_count() != assignment.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: assignment.node_count(),
        });
    }
    Ok(())
}

pub fn cmd_simulate_sir(
    graph_path: &Path,
    assignment_path: &Path,
    dims: Option<(usize, usize)>,
    cfg: &SirSection,
    seed: u64,
    out: &Path,
) -> Result<SirOutcome> {
    let (graph, graph_in) = load_graph(graph_path)?;
    let (assignment, assign_in) = load_assignment(assignment_path, dims)?;
    check_sizes(&graph, &assignment)?;
    let outcome = run_sir_with_state(
        &graph,
        &assignment,
        &cfg.params(),
        cfg.initial,
        seed,
        &SnapshotTimes::Every(cfg.snapshot_interval),
    )?;
    write_artifact(
        out,
        &outcome.trace.to_csv()?,
        ArtifactInfo {
            stage: "simulate-sir",
            seed: Some(seed),
            parameters: serde_json::to_value(cfg)?,
            inputs: &[&graph_in, &assign_in],
            details: json!({
                "graph_hash": graph.content_hash(),
                "terminal_time": outcome.trace.terminal_time,
                "final_counts": outcome.final_state.counts(),
            }),
        },
    )?;
    Ok(outcome)
}

pub fn cmd_simulate_spd(
    graph_path: &Path,
    assignment_path: &Path,
    dims: Option<(usize, usize)>,
    cfg: &SpdSection,
    seed: u64,
    out: &Path,
) -> Result<SpdOutcome> {
    let (graph, graph_in) = load_graph(graph_path)?;
    let (assignment, assign_in) = load_assignment(assignment_path, dims)?;
    check_sizes(&graph, &assignment)?;
    let outcome = run_spd_with_state(&graph, &assignment, &cfg.spd_config(), seed)?;
    write_artifact(
        out,
        &outcome.trace.to_csv()?,
        ArtifactInfo {
            stage: "simulate-spd",
            seed: Some(seed),
            parameters: serde_json::to_value(cfg)?,
            inputs: &[&graph_in, &assign_in],
            details: json!({
                "graph_hash": graph.content_hash(),
                "terminal_time": outcome.trace.terminal_time,
                "rounds": outcome.final_state.round,
                "final_cooperators": outcome.final_state.cooperators(),
            }),
        },
    )?;
    Ok(outcome)
}

pub fn cmd_render_heatmap(cells_path: &Path, title: &str, out: &Path) -> Result<()> {
    let input = read_input(cells_path)?;
    let stats = CellStats::from_csv(&input.text, cells_path)?;
    let svg = render_heatmaps(&stats, title)?;
    write_artifact(
        out,
        &svg,
        ArtifactInfo {
            stage: "render-heatmap",
            seed: None,
            parameters: json!({ "title": title }),
            inputs: &[&input],
            details: Value::Null,
        },
    )
}

pub fn load_trace(path: &Path) -> Result<(SimTrace, Input)> {
    let input = read_input(path)?;
    let trace = SimTrace::from_csv(&input.text, path)?;
    Ok((trace, input))
}

pub fn cmd_render_pies(
    trace_path: &Path,
    time: f64,
    options: &PieOptions,
    out: &Path,
) -> Result<f64> {
    let (trace, input) = load_trace(trace_path)?;
    let snap = trace
        .nearest(time)
        .ok_or_else(|| Error::EmptyRender("trace has no snapshots".into()))?;
    let svg = render_pie_lattice(snap, trace.kind, trace.width, trace.height, options);
    write_artifact(
        out,
        &svg,
        ArtifactInfo {
            stage: "render-pies",
            seed: None,
            parameters: json!({ "requested_time": time, "scale_pies": options.scale_by_population }),
            inputs: &[&input],
            details: json!({ "snapshot_time": snap.time }),
        },
    )?;
    Ok(snap.time)
}

pub fn cmd_render_timeline(
    trace_path: &Path,
    times: Option<&[f64]>,
    panels: usize,
    columns: usize,
    options: &PieOptions,
    out: &Path,
) -> Result<()> {
    let (trace, input) = load_trace(trace_path)?;
    let times = match times {
        Some(t) => t.to_vec(),
        None => even_times(&trace, panels),
    };
    let svg = render_timeline(&trace, &times, columns, options)?;
    write_artifact(
        out,
        &svg,
        ArtifactInfo {
            stage: "render-timeline",
            seed: None,
            parameters: json!({ "times": times, "columns": columns, "scale_pies": options.scale_by_population }),
            inputs: &[&input],
            details: Value::Null,
        },
    )
}

/// `panels` instants evenly spread from 0 to the last snapshot, snapped to
/// recorded snapshots with duplicates removed.
pub fn even_times(trace: &SimTrace, panels: usize) -> Vec<f64> {
    let end = trace.last().time;
    let panels = panels.max(1);
    let mut out: Vec<f64> = Vec::new();
    for j in 0..panels {
        let target = if panels == 1 {
            end
        } else {
            end * j as f64 / (panels - 1) as f64
        };
        if let Some(s) = trace.nearest(target) {
            if out.last() != Some(&s.time) {
                out.push(s.time);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Summaries

/// Spearman correlation, across populated cells, between each cell-mean
/// feature and the per-cell fraction of `state` in the last snapshot.
pub fn outcome_correlations(
    stats: &CellStats,
    trace: &SimTrace,
    state: usize,
) -> BTreeMap<String, Option<f64>> {
    let last = trace.last();
    let cells: Vec<usize> = (0..stats.cell_count())
        .filter(|&c| stats.counts[c] > 0 && last.cell_total(c) > 0)
        .collect();
    let outcome: Vec<f64> = cells
        .iter()
        .map(|&c| last.fraction(c, state).unwrap())
        .collect();
    FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let feature: Vec<f64> = cells.iter().map(|&c| stats.means[c].unwrap()[f]).collect();
            (name.to_string(), spearman(&feature, &outcome))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdStrategyProfile {
    pub final_cooperator_fraction: f64,
    pub mean_knn_cooperators: Option<f64>,
    pub mean_knn_defectors: Option<f64>,
}

/// Mean neighbor degree of final cooperators versus final defectors.
pub fn spd_profile(features: &NodeFeatures, strategies: &[Strategy]) -> SpdStrategyProfile {
    let pick = |s: Strategy| -> Vec<f64> {
        strategies
            .iter()
            .zip(&features.avg_neighbor_degree)
            .filter(|(st, _)| **st == s)
            .map(|(_, k)| *k)
            .collect()
    };
    let coop = pick(Strategy::Cooperate);
    SpdStrategyProfile {
        final_cooperator_fraction: coop.len() as f64 / strategies.len().max(1) as f64,
        mean_knn_cooperators: mean(&coop),
        mean_knn_defectors: mean(&pick(Strategy::Defect)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRow {
    pub x: usize,
    pub y: usize,
    pub count: usize,
    pub means: Option<[f64; 5]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sir_terminal_removed_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spd_final_cooperator_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub tool_version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub graph: Value,
    pub som: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sir: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spd: Option<Value>,
    pub cells: Vec<CellRow>,
}

// ---------------------------------------------------------------------------
// Full run

/// Runs every stage into `report_dir` and writes `summary.json`.
pub fn cmd_full_run(config: &RunConfig, report_dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(report_dir).map_err(|e| Error::io(report_dir, e))?;
    let model = config.generate.model.name();
    let seeds: BTreeMap<String, u64> = ["generate", "som", "sir", "spd"]
        .iter()
        .map(|s| (s.to_string(), stage_seed(config.seed, s)))
        .collect();

    let graph_path = report_dir.join(format!("{model}.edges"));
    let graph = cmd_generate(&config.generate, seeds["generate"], &graph_path)
        .map_err(|e| e.in_stage("generate"))?;

    let features_path = report_dir.join(format!("{model}.features.csv"));
    let features = cmd_metrics(&graph_path, &features_path).map_err(|e| e.in_stage("metrics"))?;

    let paths = CategorizePaths::with_stem(report_dir, model);
    let cat = cmd_categorize(&features_path, &config.som, seeds["som"], &paths)
        .map_err(|e| e.in_stage("categorize"))?;
    cmd_render_heatmap(
        &paths.cells,
        &format!(
            "{} network, {} nodes",
            model.to_uppercase(),
            graph.node_count()
        ),
        &report_dir.join(format!("heatmap_{model}.svg")),
    )
    .map_err(|e| e.in_stage("render"))?;

    let mut cells: Vec<CellRow> = (0..cat.stats.cell_count())
        .map(|c| CellRow {
            x: c % cat.stats.width,
            y: c / cat.stats.width,
            count: cat.stats.counts[c],
            means: cat.stats.means[c],
            sir_terminal_removed_fraction: None,
            spd_final_cooperator_fraction: None,
        })
        .collect();

    let mut sir_summary = None;
    if let Some(sir_cfg) = &config.sir {
        let trace_path = report_dir.join("sir.trace.csv");
        let out = cmd_simulate_sir(
            &graph_path,
            &paths.assignment,
            None,
            sir_cfg,
            seeds["sir"],
            &trace_path,
        )
        .map_err(|e| e.in_stage("simulate"))?;
        render_sim(
            &trace_path,
            &out.trace,
            config.render.sir_times.as_deref(),
            config,
            report_dir,
        )
        .map_err(|e| e.in_stage("render"))?;
        let last = out.trace.last();
        for (c, row) in cells.iter_mut().enumerate() {
            row.sir_terminal_removed_fraction = last.fraction(c, Health::Removed as usize);
        }
        let counts = out.final_state.counts();
        sir_summary = Some(json!({
            "terminal_time": out.trace.terminal_time,
            "final_counts": counts,
            "terminal_removed_fraction": counts[2] as f64 / graph.node_count() as f64,
            "removed_fraction_vs_cell_means_spearman": outcome_correlations(&cat.stats, &out.trace, 2),
        }));
    }

    let mut spd_summary = None;
    if let Some(spd_cfg) = &config.spd {
        let trace_path = report_dir.join("spd.trace.csv");
        let out = cmd_simulate_spd(
            &graph_path,
            &paths.assignment,
            None,
            spd_cfg,
            seeds["spd"],
            &trace_path,
        )
        .map_err(|e| e.in_stage("simulate"))?;
        render_sim(
            &trace_path,
            &out.trace,
            config.render.spd_rounds.as_deref(),
            config,
            report_dir,
        )
        .map_err(|e| e.in_stage("render"))?;
        let last = out.trace.last();
        for (c, row) in cells.iter_mut().enumerate() {
            row.spd_final_cooperator_fraction = last.fraction(c, Strategy::Cooperate as usize);
        }
        spd_summary = Some(json!({
            "rounds": out.final_state.round,
            "fixed_point": out.trace.terminal_time.is_some(),
            "profile": spd_profile(&features, &out.final_state.strategies),
            "cooperator_fraction_vs_cell_means_spearman": outcome_correlations(&cat.stats, &out.trace, 0),
        }));
    }

    let summary = RunSummary {
        tool_version: TOOL_VERSION.to_string(),
        config: config.clone(),
        seeds,
        graph: json!({
            "model": model,
            "nodes": graph.node_count(),
            "edges": graph.edge_count(),
            "mean_degree": graph.mean_degree(),
            "degree_assortativity": metrics::degree_assortativity(&graph),
            "content_hash": graph.content_hash(),
        }),
        som: json!({
            "grid": [cat.grid.width, cat.grid.height],
            "initial_quantization_error": cat.training.initial_quantization_error,
            "final_quantization_error": cat.training.final_quantization_error,
            "empty_cells": cat.stats.counts.iter().filter(|&&c| c == 0).count(),
        }),
        sir: sir_summary,
        spd: spd_summary,
        cells,
    };
    let summary_path = report_dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}

fn render_sim(
    trace_path: &Path,
    trace: &SimTrace,
    times: Option<&[f64]>,
    config: &RunConfig,
    report_dir: &Path,
) -> Result<()> {
    let sim = trace.kind.name();
    let times = times.map_or_else(|| even_times(trace, config.render.panels), <[f64]>::to_vec);
    let options = config.render.pie_options();
    for &t in &times {
        let snap_t = trace.nearest(t).map(|s| s.time).unwrap_or(t);
        let out = report_dir.join(format!("pies_{sim}_{}.svg", format_time(snap_t)));
        cmd_render_pies(trace_path, t, &options, &out)?;
    }
    cmd_render_timeline(
        trace_path,
        Some(&times),
        config.render.panels,
        config.render.columns,
        &options,
        &report_dir.join(format!("timeline_{sim}.svg")),
    )
}

/// `runs` independent full runs in `report_dir/run_NNN`, executed
/// concurrently; run `i` uses master seed `stage_seed(config.seed, "run<i>")`.
pub fn cmd_ensemble(config: &RunConfig, runs: usize, report_dir: &Path) -> Result<Vec<RunSummary>> {
    if runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()));
    }
    let summaries: Vec<RunSummary> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.clone();
            cfg.seed = stage_seed(config.seed, &format!("run{i}"));
            cmd_full_run(&cfg, &report_dir.join(format!("run_{i:03}")))
        })
        .collect::<Result<_>>()?;
    let index: Vec<Value> = summaries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "run": format!("run_{i:03}"),
                "seed": s.config.seed,
                "sir": s.sir.as_ref().map(|v| v["terminal_removed_fraction"].clone()),
                "spd": s.spd.as_ref().map(|v| v["profile"]["final_cooperator_fraction"].clone()),
            })
        })
        .collect();
    let path = report_dir.join("ensemble.json");
    let mut text = serde_json::to_string_pretty(&index)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(summaries)
}
