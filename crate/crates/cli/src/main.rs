use std::fs;
use std::io::{self, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use petwalk_core::config::Config;
use petwalk_core::engine::{replay, Setup};
use petwalk_core::feed::{gen_sensor_grid, parse_trace, BBox};
use petwalk_core::notify::Templates;
use petwalk_core::profile::{load_catalog, load_profiles};
use petwalk_core::scenario::{canned_trace, to_jsonl, Canned};
use petwalk_service::{Mode, ServeOptions};

mod stats;

#[derive(Parser)]
#[command(name = "petwalk", version, about = "Context-aware, pet-mediated notifications for walking tourists")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Replay a trace through the engine and write the notification log.
    Simulate(SimulateArgs),
    /// Generate sensor grids or demonstration traces.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Evaluation statistics over CSV tables.
    #[command(subcommand)]
    Stats(StatsCmd),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "PETWALK_CONFIG")]
    config: Option<PathBuf>,
    /// Directory for the event journal and snapshots; in-memory when absent.
    #[arg(long, env = "PETWALK_DATA")]
    data: Option<PathBuf>,
    #[arg(long, env = "PETWALK_MODE", default_value = "virtual")]
    mode: ModeArg,
    /// POI catalog; overrides `service.pois` from the config.
    #[arg(long)]
    pois: Option<PathBuf>,
    /// Listen address; overrides `service.bind` (default 127.0.0.1:8080).
    #[arg(long)]
    bind: Option<SocketAddr>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Virtual,
    Wall,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    pois: PathBuf,
    /// One profile object or an array of profiles.
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Notification log destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenCmd {
    /// Uniformly placed sensor descriptors.
    Grid {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// min_lat,min_lon,max_lat,max_lon
        #[arg(long, default_value = "41.10,-8.70,41.20,-8.55")]
        bbox: String,
        #[arg(long, default_value_t = 100)]
        air: usize,
        #[arg(long, default_value_t = 50)]
        noise: usize,
        #[arg(long, default_value_t = 0)]
        precip: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A canned demonstration trace.
    Trace {
        #[arg(long)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    S1,
    S2,
    S3,
    Vehicle,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Exact Wilcoxon signed-rank test with rank-biserial effect size.
    Wilcoxon(StatsArgs),
    /// UEQ-S pragmatic/hedonic aggregation of item means.
    Ueqs(StatsArgs),
    /// Q13 utility/acceptance/pet-mediation aggregation of item means.
    Q13(StatsArgs),
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    json: bool,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn load_setup(config: Config, pois: Option<&Path>) -> anyhow::Result<Arc<Setup>> {
    let templates = match &config.notify.templates {
        Some(p) => Templates::load(p).with_context(|| format!("loading templates {p}"))?,
        None => Templates::builtin(),
    };
    let catalog = match pois {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            load_catalog(&text, &config.profile).with_context(|| format!("POI catalog {}", p.display()))?
        }
        None => Vec::new(),
    };
    Ok(Setup::new(config, templates, catalog)?)
}

fn write_out(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing stdout"),
    }
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let config = load_config(args.config.as_deref())?;
    let setup = load_setup(config, Some(&args.pois))?;
    let profiles_text = fs::read_to_string(&args.profile).with_context(|| format!("reading {}", args.profile.display()))?;
    let profiles = load_profiles(&profiles_text, &setup.config.profile)
        .with_context(|| format!("profiles {}", args.profile.display()))?;
    let file = fs::File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let events = parse_trace(BufReader::new(file), &setup.config.feed).with_context(|| format!("trace {}", args.trace.display()))?;
    let sim = replay(setup, &profiles, &events).with_context(|| format!("replaying {}", args.trace.display()))?;
    for r in &sim.rejected {
        eprintln!("warning: line {}: response ignored: {}", r.line, r.error);
    }
    write_out(args.out.as_deref(), &sim.log_jsonl())
}

fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let config = load_config(args.config.as_deref())?;
    let pois = args.pois.clone().or_else(|| config.service.pois.as_ref().map(PathBuf::from));
    let bind = match args.bind {
        Some(b) => b,
        None => config
            .service
            .bind
            .as_deref()
            .unwrap_or("127.0.0.1:8080")
            .parse()
            .context("service.bind")?,
    };
    let setup = load_setup(config, pois.as_deref())?;
    let mode = match args.mode {
        ModeArg::Virtual => Mode::Virtual,
        ModeArg::Wall => Mode::Wall,
    };
    let options = ServeOptions {
        bind,
        mode,
        data_dir: args.data.clone(),
    };
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime
        .block_on(petwalk_service::serve(setup, options))
        .map_err(|e| anyhow::anyhow!(e))
}

fn gen(cmd: &GenCmd) -> anyhow::Result<()> {
    match cmd {
        GenCmd::Grid {
            seed,
            bbox,
            air,
            noise,
            precip,
            out,
        } => {
            let bbox: BBox = bbox.parse()?;
            let grid = gen_sensor_grid(*seed, bbox, *air, *noise, *precip)?;
            let mut text = serde_json::to_string_pretty(&grid)?;
            text.push('\n');
            write_out(out.as_deref(), &text)
        }
        GenCmd::Trace { scenario, seed, out } => {
            let which = match scenario {
                ScenarioArg::S1 => Canned::S1,
                ScenarioArg::S2 => Canned::S2,
                ScenarioArg::S3 => Canned::S3,
                ScenarioArg::Vehicle => Canned::Vehicle,
            };
            write_out(out.as_deref(), &to_jsonl(&canned_trace(which, *seed)))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Cmd::Serve(args) => serve(&args),
        Cmd::Simulate(args) => simulate(&args),
        Cmd::Gen(cmd) => gen(&cmd),
        Cmd::Stats(cmd) => {
            let (kind, args) = match &cmd {
                StatsCmd::Wilcoxon(a) => (stats::Kind::Wilcoxon, a),
                StatsCmd::Ueqs(a) => (stats::Kind::Ueqs, a),
                StatsCmd::Q13(a) => (stats::Kind::Q13, a),
            };
            if !args.input.exists() {
                bail!("input {} does not exist", args.input.display());
            }
            let text = stats::run(kind, &args.input, args.json)?;
            write_out(None, &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
