use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use webgym_core::agent::{
    Agent, AgentConfig, HttpClient, ModelClient, OracleClient, RecordingClient, ReplayClient, ScriptedClient,
};
use webgym_core::driver::{LaunchOptions, Session};
use webgym_core::env::Env;
use webgym_core::harness::interactive::{run_interactive, serve_hub, ChatHub};
use webgym_core::harness::{
    report, run_suite, search, ClientFactory, ReportFormat, ResultSet, RunOptions, SearchSpace, Suite, SuiteEvaluator,
    DEFAULT_N_BOOT, MAX_STEPS, SEEDS_PER_TASK,
};
use webgym_core::tasks::{self, FixtureServer, Manifest};

#[derive(Parser)]
#[command(name = "webgym", version, about = "Evaluate LLM web agents on a local task suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suite with one agent configuration.
    Run(RunArgs),
    /// Success rate and standard error of a results file.
    Bootstrap {
        results: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_BOOT)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Random search over agent flags.
    Search {
        /// JSON object mapping flag names to candidate values; defaults to every flag.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Write the leaderboard here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Per-category success-rate table.
    Report {
        results: PathBuf,
        /// Results of a reference configuration; adds a delta column.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        #[arg(long, default_value_t = DEFAULT_N_BOOT)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the task pages until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8000")]
        addr: SocketAddr,
    },
    /// Print the task manifest as JSON.
    Manifest,
    /// Run one open-ended episode driven from the chat panel.
    Interactive(InteractiveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ClientKind {
    /// Chat-completions endpoint configured by environment variables.
    Http,
    /// Emits each task's scripted solution.
    Oracle,
    /// Always answers noop().
    Noop,
    /// Replays completions from per-episode traces in --replay-dir.
    Replay,
}

#[derive(Args, Clone)]
struct BrowserArgs {
    /// Browser binary; defaults to WEBGYM_BROWSER, CHROME_PATH or PATH lookup.
    #[arg(long, env = "WEBGYM_BROWSER")]
    browser: Option<PathBuf>,
    /// Attach to a running browser's DevTools endpoint.
    #[arg(long)]
    browser_endpoint: Option<String>,
    #[arg(long)]
    headed: bool,
    #[arg(long, default_value_t = 1280)]
    width: u32,
    #[arg(long, default_value_t = 720)]
    height: u32,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
}

impl BrowserArgs {
    fn launch_options(&self) -> LaunchOptions {
        let mut options = LaunchOptions::default()
            .headless(!self.headed)
            .viewport(self.width, self.height);
        options.binary = self.browser.clone();
        options.endpoint = self.browser_endpoint.clone();
        options.command_timeout_ms = self.timeout_ms;
        options.navigation_timeout_ms = self.timeout_ms;
        options
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Comma-separated task names, or "all".
    #[arg(long, default_value = "all")]
    suite: String,
    /// Agent configuration as JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named configuration preset, used when --config is absent.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = SEEDS_PER_TASK)]
    seeds: u64,
    #[arg(long, default_value_t = MAX_STEPS)]
    max_steps: u32,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value = "http")]
    client: ClientKind,
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    /// Record every model exchange to <dir>/<task>-<seed>.jsonl.
    #[arg(long)]
    record_dir: Option<PathBuf>,
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Use task pages served elsewhere instead of starting a local server.
    #[arg(long)]
    base_url: Option<String>,
    #[command(flatten)]
    browser: BrowserArgs,
}

#[derive(Args)]
struct InteractiveArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value = "default")]
    episode: String,
    /// Page to open before the goal arrives.
    #[arg(long)]
    start_url: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = MAX_STEPS)]
    max_steps: u32,
    #[command(flatten)]
    browser: BrowserArgs,
}

fn load_config(path: Option<&Path>, preset: Option<&str>) -> Result<AgentConfig> {
    let config = match (path, preset) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        (None, Some(name)) => AgentConfig::preset(name)?,
        (None, None) => AgentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn suite_tasks(spec: &str) -> Result<Vec<String>> {
    if spec == "all" {
        return Ok(tasks::registry().iter().map(|d| d.name.to_string()).collect());
    }
    let names: Vec<String> = spec.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    for n in &names {
        if tasks::definition(n).is_none() {
            bail!("unknown task {n:?}");
        }
    }
    Ok(names)
}

fn client_factory(args: &RunArgs) -> Result<ClientFactory> {
    let base: ClientFactory = match args.client {
        ClientKind::Oracle => Arc::new(|instance| Arc::new(OracleClient::new(instance.oracle_steps()))),
        ClientKind::Noop => Arc::new(|_| Arc::new(ScriptedClient::constant("<action>noop()</action>"))),
        ClientKind::Http => {
            let client: Arc<dyn ModelClient> = Arc::new(HttpClient::from_env()?);
            Arc::new(move |_| client.clone())
        }
        ClientKind::Replay => {
            let dir = args.replay_dir.clone().context("--client replay needs --replay-dir")?;
            Arc::new(move |instance| {
                let path = dir.join(format!("{}-{}.jsonl", instance.name, instance.seed));
                match ReplayClient::from_trace(&path) {
                    Ok(c) => Arc::new(c) as Arc<dyn ModelClient>,
                    Err(e) => {
                        tracing::warn!("no replay for {}: {e}", path.display());
                        Arc::new(ReplayClient::new(Vec::new()))
                    }
                }
            })
        }
    };
    let Some(dir) = args.record_dir.clone() else {
        return Ok(base);
    };
    std::fs::create_dir_all(&dir)?;
    Ok(Arc::new(move |instance| {
        let inner = base(instance);
        let path = dir.join(format!("{}-{}.jsonl", instance.name, instance.seed));
        match RecordingClient::create(inner.clone(), &path) {
            Ok(c) => Arc::new(c) as Arc<dyn ModelClient>,
            Err(e) => {
                tracing::warn!("cannot record to {}: {e}", path.display());
                inner
            }
        }
    }))
}

fn run_options(args: &RunArgs) -> RunOptions {
    RunOptions {
        seeds_per_task: args.seeds,
        max_steps: args.max_steps,
        workers: args.workers,
        results_path: args.results.clone(),
        resume: args.resume,
        trace_dir: args.trace_dir.clone(),
        launch: args.browser.launch_options(),
    }
}

/// The suite and, when no base URL was given, the local server backing it.
async fn suite(args: &RunArgs) -> Result<(Suite, Option<FixtureServer>)> {
    let tasks = suite_tasks(&args.suite)?;
    Ok(match &args.base_url {
        Some(url) => (Suite { base_url: url.clone(), tasks }, None),
        None => {
            let server = FixtureServer::start().await?;
            (Suite { base_url: server.base_url(), tasks }, Some(server))
        }
    })
}

async fn cmd_run(args: RunArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), args.preset.as_deref())?;
    let clients = client_factory(&args)?;
    let (suite, server) = suite(&args).await?;
    let results = run_suite(&suite, &config, clients, &run_options(&args)).await?;
    let stats = results.stats(DEFAULT_N_BOOT, 0)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    if let Some(s) = server {
        s.shutdown().await;
    }
    Ok(())
}

async fn cmd_search(space: Option<PathBuf>, budget: usize, rng_seed: u64, out: Option<PathBuf>, args: RunArgs) -> Result<()> {
    let space = match space {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => SearchSpace::default(),
    };
    let base = load_config(args.config.as_deref(), args.preset.as_deref())?;
    let clients = client_factory(&args)?;
    let (suite, server) = suite(&args).await?;
    let evaluator = SuiteEvaluator {
        suite,
        clients,
        options: run_options(&args),
    };
    let board = search(&space, &base, budget, &evaluator, rng_seed, DEFAULT_N_BOOT).await?;
    let text = serde_json::to_string_pretty(&board)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    if let Some(s) = server {
        s.shutdown().await;
    }
    Ok(())
}

async fn cmd_interactive(args: InteractiveArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), None)?;
    let client: Arc<dyn ModelClient> = Arc::new(HttpClient::from_env()?);
    let hub = ChatHub::new();
    let channel = hub.open(&args.episode);
    let (addr, _server) = serve_hub(hub.clone(), args.addr).await?;
    println!("chat panel: http://{addr}/ui?episode={}", args.episode);

    let session = Session::launch(args.browser.launch_options()).await?;
    let mut env = Env::new(session, config.catalog(), config.env_config()).with_chat(channel.chat());
    let mut agent = Agent::new(config, client)?;
    let record = run_interactive(&mut agent, &mut env, &channel, args.start_url, args.max_steps).await;
    println!("{}", serde_json::to_string_pretty(&record)?);
    env.close().await;
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args).await,
        Command::Bootstrap { results, n_boot, seed } => {
            let set = ResultSet::load(&results)?;
            println!("{}", serde_json::to_string_pretty(&set.stats(n_boot, seed)?)?);
            Ok(())
        }
        Command::Search {
            space,
            budget,
            rng_seed,
            out,
            run,
        } => cmd_search(space, budget, rng_seed, out, run).await,
        Command::Report {
            results,
            baseline,
            format,
            n_boot,
            seed,
        } => {
            let set = ResultSet::load(&results)?;
            let base = baseline.map(ResultSet::load).transpose()?;
            print!("{}", report(&set, base.as_ref(), format, n_boot, seed)?);
            Ok(())
        }
        Command::Serve { addr } => {
            let server = FixtureServer::bind(addr).await?;
            println!("serving tasks at {}", server.base_url());
            server.wait().await;
            Ok(())
        }
        Command::Manifest => {
            println!("{}", serde_json::to_string_pretty(&Manifest::build())?);
            Ok(())
        }
        Command::Interactive(args) => cmd_interactive(args).await,
    }
}
