use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use civitas_core::analysis::{
    compare_days, daily_link_volumes, eval_stats, link_flow_report, CompareOptions, EvalCounts, EvalOptions, Metric, RunData,
    SnapshotFormat, SnapshotRequest, TieHandling,
};
use civitas_core::sim::{BackendChoice, Checkpoint, SimConfig, World};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "civitas", version, about = "Generative-agent urban mobility simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured cognition backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Run directory: written by `run`/`resume`, read by the report commands.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Stub,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation to the end of its horizon.
    Run {
        /// Override the number of days.
        #[arg(long)]
        days: Option<u32>,
        /// Keep only the first N agents.
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Continue a run from its last checkpoint.
    Resume {
        /// Checkpoint file; defaults to `<out-dir>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Start the HTTP control service over a fresh, paused world.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Export congestion snapshots of a finished run.
    Snapshot {
        /// Times of day, `HH:MM`.
        #[arg(long, value_delimiter = ',', default_value = "07:00,07:30,08:00,08:30")]
        times: Vec<String>,
        /// 0-based days; all days when omitted.
        #[arg(long, value_delimiter = ',')]
        days: Vec<u32>,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Destination directory; defaults to `<out-dir>/snapshots`.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Daily entry counts on one link, or on every link with `--all`.
    Flows {
        #[arg(long, required_unless_present = "all")]
        link: Option<String>,
        /// 0-based days; all days when omitted.
        #[arg(long, value_delimiter = ',')]
        days: Vec<u32>,
        #[arg(long)]
        all: bool,
    },
    /// Sign test, decisive-outcome tests and Beta posterior for pairwise evaluation counts.
    Stats {
        wins_a: u64,
        wins_b: u64,
        ties: u64,
        #[arg(long, default_value_t = 1.0)]
        prior_alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        prior_beta: f64,
        #[arg(long, value_enum, default_value = "favor-a")]
        tie_handling: Ties,
    },
    /// A per-day metric series.
    Compare {
        /// mean_arrival_delay, punctual_count or peak_onset.
        #[arg(long)]
        metric: String,
        /// Non-free share of road links that starts the peak.
        #[arg(long, default_value_t = 0.25)]
        peak_threshold: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Ties {
    Exclude,
    FavorA,
    Split,
}

fn load_config(g: &Global) -> Result<SimConfig> {
    let path = g.config.as_deref().context("--config is required for this command")?;
    let mut c = SimConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = g.seed {
        c.seed = seed;
    }
    if let Some(b) = g.backend {
        c.backend = match b {
            Backend::Stub => BackendChoice::Stub,
            Backend::Remote => BackendChoice::Remote,
        };
    }
    c.validate()?;
    tracing::info!(config = %path.display(), seed = c.seed, days = c.days, "configuration loaded");
    Ok(c)
}

fn run_dir(g: &Global) -> Result<&Path> {
    g.out_dir.as_deref().context("--out-dir (the run directory) is required for this command")
}

fn finish(mut w: World, out: Option<&Path>) -> Result<()> {
    w.set_out_dir(out.map(Path::to_path_buf));
    let started = std::time::Instant::now();
    w.run()?;
    let log = w.log();
    let arrived = log.trips.iter().filter(|t| t.arrive.is_some()).count();
    println!("finished {} day(s) in {:.1}s", w.config().days, started.elapsed().as_secs_f64());
    println!("trips: {} ({arrived} arrived)", log.trips.len());
    println!("final hash: {}", w.state.hash());
    if let Some(dir) = out {
        println!("output: {}", dir.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn"))).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let g = &cli.global;
    match cli.command {
        Command::Run { days, agents } => {
            let mut c = load_config(g)?;
            if let Some(d) = days {
                c.days = d;
            }
            if agents.is_some() {
                c.agent_limit = agents;
            }
            finish(World::new(c)?, g.out_dir.as_deref())
        }
        Command::Resume { checkpoint } => {
            let path = match checkpoint {
                Some(p) => p,
                None => run_dir(g)?.join("checkpoint.json"),
            };
            let cp = Checkpoint::load(&path)?;
            if g.seed.is_some() || g.backend.is_some() {
                bail!("--seed and --backend cannot change a checkpointed run");
            }
            let w = World::restore(cp)?;
            println!("resuming at tick {}", w.tick());
            let out = g.out_dir.clone().or_else(|| path.parent().map(Path::to_path_buf));
            finish(w, out.as_deref())
        }
        Command::Serve { addr, agents } => {
            let mut c = load_config(g)?;
            if agents.is_some() {
                c.agent_limit = agents;
            }
            let w = World::new(c)?;
            let rt = tokio::runtime::Runtime::new()?;
            println!("control service on http://{addr} (paused; POST /command {{\"kind\":\"start\"}} to run)");
            rt.block_on(civitas_server::serve(w, addr))?;
            Ok(())
        }
        Command::Snapshot { times, days, format, dest } => {
            let dir = run_dir(g)?;
            let run = RunData::load(dir)?;
            let format: SnapshotFormat = format.parse()?;
            let times: Vec<&str> = times.iter().map(String::as_str).collect();
            let req = SnapshotRequest::new(days, &times, format)?;
            let dest = dest.unwrap_or_else(|| dir.join("snapshots"));
            for p in civitas_core::analysis::snapshot_export(&run, &req, &dest)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Flows { link, days, all } => {
            let run = RunData::load(run_dir(g)?)?;
            let days: Vec<u32> = if days.is_empty() { (0..run.days()).collect() } else { days };
            if let Some(&d) = days.iter().find(|d| **d >= run.days()) {
                bail!("day {d} is outside the run ({} days)", run.days());
            }
            if all {
                println!("day,link,entries");
                for d in days {
                    for (l, n) in daily_link_volumes(&run.log, &run.graph, d) {
                        println!("{d},{l},{n}");
                    }
                }
            } else {
                let link = link.expect("clap enforces --link without --all");
                println!("day,link,entries,agents");
                for d in days {
                    let r = link_flow_report(&run.log, &run.graph, &link, d)?;
                    println!("{d},{},{},{}", r.link, r.entries, r.agents);
                }
            }
            Ok(())
        }
        Command::Stats { wins_a, wins_b, ties, prior_alpha, prior_beta, tie_handling } => {
            let counts = EvalCounts::new(wins_a, wins_b, ties)?;
            let ties = match tie_handling {
                Ties::Exclude => TieHandling::Exclude,
                Ties::FavorA => TieHandling::FavorA,
                Ties::Split => TieHandling::Split,
            };
            let opts = EvalOptions { prior_alpha, prior_beta, ties, ..EvalOptions::default() };
            let s = eval_stats(&counts, &opts)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(())
        }
        Command::Compare { metric, peak_threshold } => {
            let metric: Metric = metric.parse()?;
            if !(0.0..=1.0).contains(&peak_threshold) {
                bail!("--peak-threshold must be within [0, 1]");
            }
            let run = RunData::load(run_dir(g)?)?;
            let s = compare_days(&run, metric, &CompareOptions { peak_threshold });
            println!("day,{}", metric.as_str());
            for (d, v) in s.values.iter().enumerate() {
                match v {
                    Some(v) => println!("{d},{v:.3}"),
                    None => println!("{d},"),
                }
            }
            Ok(())
        }
    }
}
