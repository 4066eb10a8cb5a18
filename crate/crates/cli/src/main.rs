use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use wayguide_core::encoders::{distance_interval, distance_pulse, encode_direction_a, encode_direction_b};
use wayguide_core::fsm::{GuidanceMode, GuidanceParams};
use wayguide_core::map::{load_map, search_destinations};
use wayguide_core::metrics::metrics;
use wayguide_core::sim::{self, RunOptions, WalkerModel};
use wayguide_core::trace::{read_trace, write_trace};
use wayguide_core::{DirectionConfig, DistanceConfig, Route, TurnClassification};
use wayguide_cli::serve::{self, App};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "wayguide", version, about = "Indoor navigation guidance engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Walk a simulated pedestrian along a route and record the trace.
    Simulate(SimulateArgs),
    /// Print the pulse train for a turn or a remaining distance.
    #[command(subcommand)]
    Encode(EncodeCommand),
    /// Score a trace file and print the report as JSON.
    Metrics { trace: PathBuf },
    /// List destinations, optionally filtered by name.
    Destinations {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value = "")]
        query: String,
        /// POI ids visited recently, most recent first.
        #[arg(long, value_delimiter = ',')]
        recent: Vec<String>,
    },
    /// Run the guidance service for the steering UI.
    Serve {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Static UI files to serve at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    #[arg(long, value_parser = parse_mode)]
    mode: GuidanceMode,
    #[arg(long)]
    voice: bool,
    /// Stay silent at doors instead of announcing them.
    #[arg(long)]
    no_door_announcements: bool,
    #[arg(long, value_enum)]
    walker: Walker,
    #[arg(long)]
    speed: Option<f64>,
    /// Reaction latency in seconds.
    #[arg(long)]
    latency: Option<f64>,
    /// Heading noise standard deviation in degrees.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    tick: f64,
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Walker {
    Ideal,
    Reactive,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptionArg {
    A,
    B,
}

#[derive(Subcommand)]
enum EncodeCommand {
    Direction {
        /// Turn angle in degrees, clockwise positive.
        #[arg(long, allow_hyphen_values = true)]
        angle: f64,
        #[arg(long, value_enum, ignore_case = true, default_value = "a")]
        option: OptionArg,
    },
    Distance {
        #[arg(long, allow_hyphen_values = true)]
        remaining: f64,
    },
}

fn parse_mode(s: &str) -> Result<GuidanceMode, String> {
    s.parse().map_err(|e: wayguide_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain on one line, skipping causes a message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// I/O failures are runtime errors; everything the core rejects is a
/// validation error.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<wayguide_core::Error>()) {
        Some(wayguide_core::Error::Io { .. }) => EXIT_RUNTIME,
        Some(_) => EXIT_VALIDATION,
        None if e.chain().any(|c| c.is::<std::io::Error>()) => EXIT_RUNTIME,
        None => EXIT_VALIDATION,
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Encode(EncodeCommand::Direction { angle, option }) => {
            let cfg = DirectionConfig::default();
            let train = match option {
                OptionArg::A => encode_direction_a(&TurnClassification::from_angle(angle)?, &cfg)?,
                OptionArg::B => encode_direction_b(&cfg)?,
            };
            emit(&serde_json::to_string_pretty(&train)?)
        }
        Command::Encode(EncodeCommand::Distance { remaining }) => {
            let cfg = DistanceConfig::default();
            let interval = distance_interval(remaining, &cfg)?;
            let report = json!({
                "remaining_m": remaining,
                "interval_ms": interval,
                "train": interval.map(|_| distance_pulse(&cfg)).transpose()?,
            });
            emit(&serde_json::to_string_pretty(&report)?)
        }
        Command::Metrics { trace } => {
            let trace = read_trace(&trace)?;
            let route = Route::try_from(trace.header.route_def.to_parts())?;
            let report = metrics(&trace, &route)?;
            emit(&serde_json::to_string_pretty(&report)?)
        }
        Command::Destinations { map, query, recent } => {
            let map = load_map(&map)?;
            let lines: Vec<String> = search_destinations(&map, &query, &recent)
                .iter()
                .map(|p| format!("{}\t{}", p.id, p.name))
                .collect();
            emit(&lines.join("\n"))
        }
        Command::Serve {
            map,
            port,
            host,
            assets,
        } => {
            let map = load_map(&map)?;
            if let Some(dir) = &assets {
                if !dir.is_dir() {
                    bail!("assets directory {} does not exist", dir.display());
                }
            }
            let addr = SocketAddr::new(host, port);
            let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                eprintln!("serving {} on http://{}", map.name, listener.local_addr()?);
                let app = App {
                    map,
                    params: GuidanceParams::default(),
                    assets,
                };
                serve::serve(listener, app).await.context("service stopped")
            })
        }
    }
}

/// Writes to stdout, reporting a closed pipe as an error rather than panicking.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    if !text.is_empty() {
        writeln!(out, "{text}")?;
    }
    out.flush()?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let map = load_map(&args.map)?;
    let route = map.route_between(&args.from, &args.to)?;
    let mut walker = match args.walker {
        Walker::Ideal => WalkerModel::ideal(),
        Walker::Reactive => WalkerModel::reactive(args.seed),
    };
    walker.rng_seed = args.seed;
    if let Some(v) = args.speed {
        walker.speed_mps = v;
    }
    if let Some(l) = args.latency {
        walker.reaction_latency_s = l;
    }
    if let Some(n) = args.noise {
        walker.heading_noise_deg_std = n;
    }
    let mode = args
        .mode
        .with_voice(args.voice)
        .with_door_announcements(!args.no_door_announcements);
    let opts = RunOptions {
        tick_s: args.tick,
        timeout_s: args.timeout,
        map_name: map.name.clone(),
    };
    let trace = sim::run(route, &walker, mode, &GuidanceParams::default(), &opts)?;
    write_trace(&trace, &args.out)?;
    let end = trace.events.last().map_or(0.0, |e| e.t());
    if trace.arrived() {
        emit(&format!("arrived after {end:.1} s; trace written to {}", args.out.display()))
    } else {
        emit(&format!("timed out at {end:.1} s; trace written to {}", args.out.display()))
    }
}
