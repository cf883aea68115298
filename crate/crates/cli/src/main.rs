use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netsom_core::pipeline::{
    self, parse_grid, stage_seed, CategorizePaths, InitMode, Model, RunConfig, TieMode,
};
use netsom_core::trace::format_time;
use netsom_core::viz::PieOptions;
use netsom_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "netsom",
    version,
    about = "Categorize network nodes on a self-organizing map and watch simulations unfold per category"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a Holme-Kim or connecting-nearest-neighbor network.
    Generate(GenerateArgs),
    /// Compute per-node features (k, k_nn, b, L, C).
    Metrics(MetricsArgs),
    /// Train a SOM on node features and assign nodes to lattice cells.
    Categorize(CategorizeArgs),
    /// Run an agent simulation on a categorized network.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Draw SVG figures from stage outputs.
    #[command(subcommand)]
    Render(RenderCommand),
    /// Run every stage from one JSON config into a report directory.
    Run(RunArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// JSON run config supplying defaults; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => load_config(path),
            None => Ok(RunConfig::default()),
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    pt: Option<f64>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output edge list [default: <model>.edges]
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    match s {
        "hk" => Ok(Model::Hk),
        "cnn" => Ok(Model::Cnn),
        _ => Err(format!("unknown model {s:?}; expected hk or cnn")),
    }
}

#[derive(Args)]
struct MetricsArgs {
    graph: PathBuf,
    /// Output feature CSV [default: <graph stem>.features.csv]
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CategorizeArgs {
    features: PathBuf,
    /// Lattice size as WxH.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long)]
    sigma1: Option<f64>,
    /// Comma-separated features to pass through log10(1 + x) before scaling.
    #[arg(long)]
    log_features: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the outputs [default: next to the input]
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output file stem [default: input name without .features.csv]
    #[arg(long)]
    stem: Option<String>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Asynchronous SIR epidemic.
    Sir(SirArgs),
    /// Synchronous spatial prisoner's dilemma.
    Spd(SpdArgs),
}

#[derive(Args)]
struct SimInputs {
    graph: PathBuf,
    assignment: PathBuf,
    /// Lattice size as WxH when the assignment has no metadata.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output trace CSV [default: <assignment stem>.<sim>.trace.csv]
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

impl SimInputs {
    fn dims(&self) -> Result<Option<(usize, usize)>> {
        self.grid.as_deref().map(parse_grid).transpose()
    }

    fn out_path(&self, sim: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let stem = strip_suffixes(&self.assignment, &[".assign.csv", ".csv"]);
            sibling(&self.assignment, &format!("{stem}.{sim}.trace.csv"))
        })
    }
}

#[derive(Args)]
struct SirArgs {
    #[command(flatten)]
    inputs: SimInputs,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Number of initially infectious agents.
    #[arg(long)]
    initial: Option<usize>,
    /// Time between recorded snapshots.
    #[arg(long)]
    interval: Option<f64>,
}

#[derive(Args)]
struct SpdArgs {
    #[command(flatten)]
    inputs: SimInputs,
    #[arg(long)]
    temptation: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// lowest-id or random
    #[arg(long, value_parser = parse_tie)]
    tie: Option<TieMode>,
    /// random, all-c or all-d
    #[arg(long, value_parser = parse_init)]
    init: Option<InitMode>,
}

fn parse_tie(s: &str) -> std::result::Result<TieMode, String> {
    match s {
        "lowest-id" => Ok(TieMode::LowestId),
        "random" => Ok(TieMode::Random),
        _ => Err(format!(
            "unknown tie rule {s:?}; expected lowest-id or random"
        )),
    }
}

fn parse_init(s: &str) -> std::result::Result<InitMode, String> {
    match s {
        "random" => Ok(InitMode::Random),
        "all-c" => Ok(InitMode::AllC),
        "all-d" => Ok(InitMode::AllD),
        _ => Err(format!(
            "unknown init {s:?}; expected random, all-c or all-d"
        )),
    }
}

#[derive(Subcommand)]
enum RenderCommand {
    /// Per-feature heat maps from a cell-stats CSV.
    Heatmap(HeatmapArgs),
    /// One pie-chart lattice at a single instant.
    Pies(PiesArgs),
    /// Pie-chart lattices at several instants.
    Timeline(TimelineArgs),
}

#[derive(Args)]
struct HeatmapArgs {
    cells: PathBuf,
    #[arg(long)]
    title: Option<String>,
    /// Output SVG [default: heatmap_<graph>.svg]
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PiesArgs {
    trace: PathBuf,
    /// Instant to draw; the nearest recorded snapshot is used.
    #[arg(long)]
    time: f64,
    /// Scale pie radius by sqrt(cell population).
    #[arg(long)]
    scale_pies: bool,
    /// Output SVG [default: pies_<sim>_<t>.svg]
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TimelineArgs {
    trace: PathBuf,
    /// Comma-separated instants [default: evenly spaced]
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long, default_value_t = 6)]
    panels: usize,
    #[arg(long, default_value_t = 3)]
    columns: usize,
    #[arg(long)]
    scale_pies: bool,
    /// Output SVG [default: timeline_<sim>.svg]
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; omitted sections take defaults.
    config: Option<PathBuf>,
    /// Report directory.
    #[arg(short, long, default_value = "report")]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Independent runs executed concurrently, each in its own subdirectory.
    #[arg(long)]
    runs: Option<usize>,
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.with_file_name(name)
}

fn strip_suffixes(path: &Path, suffixes: &[&str]) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for s in suffixes {
        if let Some(stem) = name.strip_suffix(s) {
            if !stem.is_empty() {
                return stem.to_string();
            }
        }
    }
    name
}

fn generate(args: GenerateArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut gen = cfg.generate;
    if let Some(v) = args.model {
        gen.model = v;
    }
    if let Some(v) = args.n {
        gen.n = v;
    }
    if let Some(v) = args.m {
        gen.m = v;
    }
    if let Some(v) = args.pt {
        gen.pt = v;
    }
    if let Some(v) = args.u {
        gen.u = v;
    }
    let seed = args
        .seed
        .unwrap_or_else(|| stage_seed(cfg.seed, "generate"));
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}.edges", gen.model.name())));
    let graph = pipeline::cmd_generate(&gen, seed, &out)?;
    eprintln!(
        "{}: {} nodes, {} edges, mean degree {:.4}",
        out.display(),
        graph.node_count(),
        graph.edge_count(),
        graph.mean_degree()
    );
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(|| {
        let stem = strip_suffixes(&args.graph, &[".edges", ".txt"]);
        sibling(&args.graph, &format!("{stem}.features.csv"))
    });
    let features = pipeline::cmd_metrics(&args.graph, &out)?;
    eprintln!("{}: {} nodes", out.display(), features.len());
    Ok(())
}

fn categorize(args: CategorizeArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut som = cfg.som;
    if let Some(v) = args.grid {
        parse_grid(&v)?;
        som.grid = v;
    }
    if let Some(v) = args.epochs {
        som.epochs = v;
    }
    if let Some(v) = args.alpha0 {
        som.alpha0 = v;
    }
    if let Some(v) = args.alpha1 {
        som.alpha1 = v;
    }
    if let Some(v) = args.sigma0 {
        som.sigma0 = Some(v);
    }
    if let Some(v) = args.sigma1 {
        som.sigma1 = v;
    }
    if let Some(v) = args.log_features {
        som.log_features = v
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        som.log_mask()?;
    }
    let seed = args.seed.unwrap_or_else(|| stage_seed(cfg.seed, "som"));
    let stem = args
        .stem
        .unwrap_or_else(|| strip_suffixes(&args.features, &[".features.csv", ".csv"]));
    let dir = args.out_dir.unwrap_or_else(|| {
        args.features
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    let paths = CategorizePaths::with_stem(&dir, &stem);
    let result = pipeline::cmd_categorize(&args.features, &som, seed, &paths)?;
    eprintln!(
        "{}: {} nodes on a {}x{} lattice, quantization error {:.4} -> {:.4}",
        paths.assignment.display(),
        result.assignment.node_count(),
        result.grid.width,
        result.grid.height,
        result.training.initial_quantization_error,
        result.training.final_quantization_error
    );
    Ok(())
}

fn simulate_sir(args: SirArgs) -> Result<()> {
    let inputs = &args.inputs;
    let cfg = inputs.config.load()?;
    let mut sir = cfg.sir.unwrap_or_default();
    if let Some(v) = args.lambda {
        sir.lambda = v;
    }
    if let Some(v) = args.mu {
        sir.mu = v;
    }
    if let Some(v) = args.dt {
        sir.dt = v;
    }
    if let Some(v) = args.initial {
        sir.initial = v;
    }
    if let Some(v) = args.interval {
        sir.snapshot_interval = v;
    }
    let seed = inputs.seed.unwrap_or_else(|| stage_seed(cfg.seed, "sir"));
    let out = inputs.out_path("sir");
    let outcome = pipeline::cmd_simulate_sir(
        &inputs.graph,
        &inputs.assignment,
        inputs.dims()?,
        &sir,
        seed,
        &out,
    )?;
    let [s, i, r] = outcome.final_state.counts();
    eprintln!(
        "{}: terminated at t = {} with S={s} I={i} R={r}",
        out.display(),
        format_time(outcome.trace.last().time)
    );
    Ok(())
}

fn simulate_spd(args: SpdArgs) -> Result<()> {
    let inputs = &args.inputs;
    let cfg = inputs.config.load()?;
    let mut spd = cfg.spd.unwrap_or_default();
    if let Some(v) = args.temptation {
        spd.temptation = v;
    }
    if let Some(v) = args.epsilon {
        spd.epsilon = v;
    }
    if let Some(v) = args.max_rounds {
        spd.max_rounds = v;
    }
    if let Some(v) = args.tie {
        spd.tie = v;
    }
    if let Some(v) = args.init {
        spd.init = v;
    }
    let seed = inputs.seed.unwrap_or_else(|| stage_seed(cfg.seed, "spd"));
    let out = inputs.out_path("spd");
    let outcome = pipeline::cmd_simulate_spd(
        &inputs.graph,
        &inputs.assignment,
        inputs.dims()?,
        &spd,
        seed,
        &out,
    )?;
    let n = outcome.final_state.strategies.len();
    eprintln!(
        "{}: {} rounds{}, {} of {n} cooperating",
        out.display(),
        outcome.final_state.round,
        if outcome.trace.terminal_time.is_some() {
            " (fixed point)"
        } else {
            ""
        },
        outcome.final_state.cooperators()
    );
    Ok(())
}

fn trace_sim_name(trace: &Path) -> Result<&'static str> {
    let (trace, _) = pipeline::load_trace(trace)?;
    Ok(trace.kind.name())
}

fn render(cmd: RenderCommand) -> Result<()> {
    match cmd {
        RenderCommand::Heatmap(args) => {
            let graph = strip_suffixes(&args.cells, &[".cells.csv", ".csv"]);
            let out = args
                .out
                .unwrap_or_else(|| sibling(&args.cells, &format!("heatmap_{graph}.svg")));
            let title = args.title.unwrap_or(graph);
            pipeline::cmd_render_heatmap(&args.cells, &title, &out)?;
            eprintln!("{}", out.display());
        }
        RenderCommand::Pies(args) => {
            let options = PieOptions {
                scale_by_population: args.scale_pies,
            };
            let out = match args.out {
                Some(out) => out,
                None => {
                    let (trace, _) = pipeline::load_trace(&args.trace)?;
                    let t = trace.nearest(args.time).map_or(args.time, |s| s.time);
                    sibling(
                        &args.trace,
                        &format!("pies_{}_{}.svg", trace.kind.name(), format_time(t)),
                    )
                }
            };
            let t = pipeline::cmd_render_pies(&args.trace, args.time, &options, &out)?;
            eprintln!("{}: snapshot at {}", out.display(), format_time(t));
        }
        RenderCommand::Timeline(args) => {
            let options = PieOptions {
                scale_by_population: args.scale_pies,
            };
            let out = match args.out {
                Some(out) => out,
                None => sibling(
                    &args.trace,
                    &format!("timeline_{}.svg", trace_sim_name(&args.trace)?),
                ),
            };
            pipeline::cmd_render_timeline(
                &args.trace,
                args.times.as_deref(),
                args.panels,
                args.columns,
                &options,
                &out,
            )?;
            eprintln!("{}", out.display());
        }
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::from_json("{}")?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    match args.runs {
        Some(k) => {
            let summaries = pipeline::cmd_ensemble(&cfg, k, &args.out)?;
            eprintln!("{}: {} runs", args.out.display(), summaries.len());
        }
        None => {
            let summary = pipeline::cmd_full_run(&cfg, &args.out)?;
            eprintln!(
                "{}: {} nodes, {} edges",
                args.out.display(),
                summary.graph["nodes"],
                summary.graph["edges"]
            );
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    pipeline::configure_threads()?;
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Metrics(a) => metrics(a),
        Command::Categorize(a) => categorize(a),
        Command::Simulate(SimulateCommand::Sir(a)) => simulate_sir(a),
        Command::Simulate(SimulateCommand::Spd(a)) => simulate_spd(a),
        Command::Render(c) => render(c),
        Command::Run(a) => run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
