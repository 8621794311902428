use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use incubator_bus::{broker_serve, BusClient};
use incubator_core::calibration::{calibrate, CalibrationProblem, ModelKind};
use incubator_core::controller::ControllerConfig;
use incubator_twin::calibration::{calibration_service, fit_csv, load_input};
use incubator_twin::config::TwinConfig;
use incubator_twin::controller::controller_run;
use incubator_twin::datalog::{record, replay, Datalog};
use incubator_twin::demo::{run_demo, DemoOptions};
use incubator_twin::estimator::estimator_run;
use incubator_twin::gateway::gateway_serve;
use incubator_twin::messages::{Candidates, ScenarioSpec, WhatifRequest};
use incubator_twin::orchestrator::orchestrator_run;
use incubator_twin::plant::{plant_run, ScheduledDisturbance};
use incubator_twin::whatif::{evaluate, whatif_service, LiveContext};
use serde_json::json;

/// Incubator digital twin.
#[derive(Debug, Parser)]
#[command(name = "incubator", version, arg_required_else_help = true)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Broker address (overrides the config file and INCUBATOR_BUS_ADDR).
    #[arg(long, global = true)]
    bus: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the message broker.
    Broker,
    /// Run the virtual plant.
    Plant(PlantArgs),
    /// Run the bang-bang controller.
    Controller(ControllerArgs),
    /// Run the Kalman state estimator.
    Estimator,
    /// Calibrate a model from a recording, or serve calibration requests.
    Calibrate(CalibrateArgs),
    /// Evaluate a scenario or a candidate grid, or serve what-if requests.
    Whatif(WhatifArgs),
    /// Run the self-adaptation supervisor.
    Orchestrator(OrchestratorArgs),
    /// Record all bus traffic to a new run directory.
    Record(RunsDirArg),
    /// Republish a recording.
    Replay(ReplayArgs),
    /// Serve the dashboard HTTP/WebSocket API.
    Gateway(GatewayArgs),
    /// Run every service in one process with accelerated time.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
struct PlantOpts {
    /// Wall seconds per simulated second.
    #[arg(long)]
    time_scale: Option<f64>,
    /// Simulated seconds to run; unbounded if absent.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sensor noise standard deviation, K.
    #[arg(long)]
    sigma: Option<f64>,
    /// Epoch seconds of simulated time zero.
    #[arg(long)]
    start_epoch: Option<f64>,
    /// Disturbance as kind:magnitude:duration@time, e.g. lid_open:2:600@1500.
    #[arg(long = "inject")]
    inject: Vec<ScheduledDisturbance>,
}

impl PlantOpts {
    fn apply(&self, cfg: &mut TwinConfig) {
        let p = &mut cfg.plant;
        if let Some(v) = self.time_scale {
            p.time_scale = v;
        }
        if let Some(v) = self.duration {
            p.duration = Some(v);
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.sigma {
            p.sigma = v;
        }
        if let Some(v) = self.start_epoch {
            p.start_epoch = Some(v);
        }
        p.schedule.extend(self.inject.iter().cloned());
    }
}

#[derive(Debug, Args)]
struct PlantArgs {
    #[command(flatten)]
    opts: PlantOpts,
    /// Wait for the controller's answer to each sample before the next.
    #[arg(long)]
    lockstep: bool,
}

#[derive(Debug, Args)]
struct ControllerArgs {
    #[arg(long)]
    ll: Option<f64>,
    #[arg(long)]
    ul: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Serve requests from the bus instead of a one-off fit.
    #[arg(long, conflicts_with_all = ["model", "input", "theta0", "csv"])]
    serve: bool,
    #[arg(long, value_parser = parse_model, required_unless_present = "serve")]
    model: Option<ModelKind>,
    /// Trajectory JSONL, recorded driver-state JSONL, or run directory.
    #[arg(long, required_unless_present = "serve")]
    input: Option<PathBuf>,
    /// Initial guess, comma separated.
    #[arg(long, value_delimiter = ',')]
    theta0: Option<Vec<f64>>,
    /// Write t,measured,simulated rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Recordings used when serving.
    #[arg(long)]
    runs_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WhatifArgs {
    #[arg(long)]
    serve: bool,
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "serve")]
    scenario: Option<PathBuf>,
    /// Candidate grid JSON file.
    #[arg(long, conflicts_with = "serve")]
    grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OrchestratorArgs {
    /// Wait for operator confirmation before applying a controller.
    #[arg(long)]
    propose: bool,
}

#[derive(Debug, Args)]
struct RunsDirArg {
    #[arg(long)]
    runs_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Run directory or JSONL file.
    path: PathBuf,
    /// Playback speed relative to recorded time.
    #[arg(long, default_value_t = 1.0, conflicts_with = "as_fast_as_possible")]
    speed: f64,
    #[arg(long)]
    as_fast_as_possible: bool,
}

#[derive(Debug, Args)]
struct GatewayArgs {
    #[arg(long)]
    bind: Option<String>,
    /// Recordings served by /api/history.
    #[arg(long)]
    runs_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[command(flatten)]
    opts: PlantOpts,
    #[arg(long)]
    runs_dir: Option<PathBuf>,
    /// Gateway address.
    #[arg(long)]
    gateway_bind: Option<String>,
    #[arg(long)]
    no_gateway: bool,
    #[arg(long)]
    propose: bool,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn connect(cfg: &TwinConfig) -> anyhow::Result<BusClient> {
    Ok(BusClient::connect(&cfg.bus.addr).await?)
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn batch_calibrate(args: &CalibrateArgs) -> anyhow::Result<()> {
    let kind = args.model.context("--model is required")?;
    let input = args.input.as_deref().context("--input is required")?;
    let data = load_input(input)?;
    let n_samples = data.len();
    let theta0 = args.theta0.clone().unwrap_or_else(|| kind.default_theta0());
    let problem = CalibrationProblem::new(kind, data, theta0)?;
    let result = calibrate(&problem)?;
    if let Some(csv) = &args.csv {
        std::fs::write(csv, fit_csv(kind, &result.theta, &problem.data)?)?;
    }
    let params: serde_json::Map<String, serde_json::Value> =
        kind.param_names().iter().zip(&result.theta).map(|(n, v)| ((*n).to_owned(), json!(v))).collect();
    print_json(&json!({
        "model": kind,
        "theta": result.theta,
        "params": params,
        "cost": result.cost,
        "iterations": result.iterations,
        "converged": result.converged,
        "n_samples": n_samples,
    }))
}

fn batch_whatif(args: &WhatifArgs) -> anyhow::Result<()> {
    anyhow::ensure!(args.scenario.is_some() || args.grid.is_some(), "give --scenario, --grid or --serve");
    let scenario: ScenarioSpec = match &args.scenario {
        Some(p) => read_json(p)?,
        None => ScenarioSpec::default(),
    };
    let grid: Option<Candidates> = args.grid.as_deref().map(read_json).transpose()?;
    let req = WhatifRequest { id: String::new(), scenario, grid, weights: None };
    let result = evaluate(&req, &LiveContext::default());
    print_json(&result)?;
    anyhow::ensure!(result.ok, "{}", result.error.unwrap_or_default());
    Ok(())
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = TwinConfig::load(cli.config.as_deref())?;
    if let Some(addr) = cli.bus {
        cfg.bus.addr = addr;
    }
    match cli.command {
        Command::Broker => {
            let broker = broker_serve(&cfg.bus.addr).await?;
            eprintln!("broker listening on {}", broker.local_addr());
            ctrl_c().await;
            broker.shutdown().await;
        }
        Command::Plant(args) => {
            args.opts.apply(&mut cfg);
            cfg.plant.lockstep |= args.lockstep;
            let bus = connect(&cfg).await?;
            let handle = plant_run(cfg.plant, bus).await?;
            tokio::select! {
                r = handle.task => r??,
                _ = ctrl_c() => {}
            }
        }
        Command::Controller(args) => {
            let d = cfg.controller;
            let config = ControllerConfig::new(
                args.ll.unwrap_or(d.ll),
                args.ul.unwrap_or(d.ul),
                args.h.unwrap_or(d.h),
                args.c.unwrap_or(d.c),
            )?;
            let task = controller_run(config, connect(&cfg).await?).await?;
            serve_until_stopped(task).await;
        }
        Command::Estimator => {
            let task = estimator_run(cfg.estimator.clone(), connect(&cfg).await?).await?;
            serve_until_stopped(task).await;
        }
        Command::Calibrate(args) if args.serve => {
            let runs = args.runs_dir.unwrap_or(cfg.datalog.runs_dir.clone());
            let task = calibration_service(connect(&cfg).await?, Datalog::open(runs)).await?;
            serve_until_stopped(task).await;
        }
        Command::Calibrate(args) => batch_calibrate(&args)?,
        Command::Whatif(args) if args.serve => {
            let task = whatif_service(connect(&cfg).await?).await?;
            serve_until_stopped(task).await;
        }
        Command::Whatif(args) => batch_whatif(&args)?,
        Command::Orchestrator(args) => {
            cfg.orchestrator.propose |= args.propose;
            let task = orchestrator_run(cfg.orchestrator.clone(), connect(&cfg).await?).await?;
            serve_until_stopped(task).await;
        }
        Command::Record(args) => {
            let runs = args.runs_dir.unwrap_or(cfg.datalog.runs_dir.clone());
            let recorder = record(connect(&cfg).await?, &runs).await?;
            eprintln!("recording to {}", recorder.run_dir().display());
            ctrl_c().await;
            let n = recorder.stop().await;
            eprintln!("{n} messages recorded");
        }
        Command::Replay(args) => {
            let speed = (!args.as_fast_as_possible).then_some(args.speed);
            let summary = replay(&args.path, &connect(&cfg).await?, speed).await?;
            print_json(&summary)?;
        }
        Command::Gateway(args) => {
            let bind = args.bind.unwrap_or(cfg.gateway.bind.clone());
            let runs = args.runs_dir.unwrap_or(cfg.datalog.runs_dir.clone());
            let gw = gateway_serve(connect(&cfg).await?, Some(Datalog::open(runs)), &bind).await?;
            eprintln!("gateway listening on {}", gw.addr);
            serve_until_stopped(gw.task).await;
        }
        Command::Demo(args) => {
            args.opts.apply(&mut cfg);
            if let Some(r) = args.runs_dir {
                cfg.datalog.runs_dir = r;
            }
            cfg.orchestrator.propose |= args.propose;
            let gateway = (!args.no_gateway).then(|| args.gateway_bind.unwrap_or(cfg.gateway.bind.clone()));
            let summary = run_demo(DemoOptions { config: cfg, gateway }, ctrl_c()).await?;
            print_json(&summary)?;
        }
    }
    Ok(())
}

async fn serve_until_stopped(task: tokio::task::JoinHandle<()>) {
    tokio::select! {
        _ = task => {}
        _ = ctrl_c() => {}
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
