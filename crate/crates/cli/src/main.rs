mod remote;

use std::net::{IpAddr, SocketAddr};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use neurowarp_core::train::TrainEvent;
use neurowarp_pipeline::stages::{
    cmd_ablate, cmd_fit, cmd_metrics, cmd_morph, cmd_paths, cmd_transfer, cmd_warp, cmd_warp_widths,
    compare_sequences, StageRun,
};
use neurowarp_pipeline::{Progress, Project};
use neurowarp_service::ServiceConfig;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "neurowarp", version, about = "Neural image warping and morphing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit both input images.
    Fit(ProjectArgs),
    /// Train the warp between the landmark sets.
    Warp {
        #[command(flatten)]
        project: ProjectArgs,
        /// Also train single-layer warps of these widths, e.g. `--width 32,64,128`.
        #[arg(long, value_delimiter = ',')]
        width: Vec<usize>,
    },
    /// Render the morph sequence with the configured blend mode.
    Morph(ProjectArgs),
    /// Copy the region from one image into the other in the gradient domain.
    Transfer(ProjectArgs),
    /// Retrain the warp with each loss term disabled, plus a width sweep.
    Ablate {
        #[command(flatten)]
        project: ProjectArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 128])]
        width: Vec<usize>,
    },
    /// Draw landmark trajectories over the first frame.
    Paths(ProjectArgs),
    /// Summarize a project's reports, or compare two frame directories.
    Metrics(MetricsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Talk to a running service.
    Remote(remote::RemoteArgs),
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Project config file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set warp.steps=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Recompute even when the stage is up to date.
    #[arg(long)]
    force: bool,
    /// Artifact directory, overriding `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print only the report.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Project config whose stage reports are summarized.
    #[arg(short, long, conflicts_with_all = ["a", "b"])]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE", requires = "config")]
    set: Vec<String>,
    #[arg(long, requires = "config")]
    out: Option<PathBuf>,
    /// First frame directory.
    #[arg(requires = "b")]
    a: Option<PathBuf>,
    /// Second frame directory.
    b: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Directory holding the service's projects.
    #[arg(long, default_value = "neurowarp-projects")]
    root: PathBuf,
    /// Allowed browser origin; repeat for several. Any origin when absent.
    #[arg(long = "cors-origin", value_name = "ORIGIN")]
    cors_origins: Vec<String>,
    /// Override the config defaults for new projects.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Pipeline(#[from] neurowarp_pipeline::Error),

    #[error(transparent)]
    Service(#[from] neurowarp_service::ServiceError),

    #[error(transparent)]
    Client(#[from] neurowarp_client::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(e) => e.exit_code() as u8,
            CliError::Usage(_) => 2,
            CliError::Client(e) if e.status().is_some_and(|s| s.is_client_error()) => 2,
            CliError::Runtime(message) if message.contains("numeric failure") => 3,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Prints training progress to stderr.
struct Console {
    quiet: bool,
}

impl Progress for Console {
    fn event(&mut self, stage: &str, event: &TrainEvent) -> ControlFlow<()> {
        if !self.quiet {
            let terms: Vec<String> = event.terms.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
            eprintln!("{stage} {}/{} {}", event.step, event.total_steps, terms.join(" "));
        }
        ControlFlow::Continue(())
    }

    fn message(&mut self, text: &str) {
        if !self.quiet {
            eprintln!("{text}");
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn absolute(path: &Path) -> Result<PathBuf> {
    if path.is_absolute() {
        return Ok(path.to_path_buf());
    }
    let cwd = std::env::current_dir().map_err(|e| CliError::Runtime(format!("current directory: {e}")))?;
    Ok(cwd.join(path))
}

fn load(config: &Path, set: &[String], out: Option<&Path>) -> Result<Project> {
    let mut overrides = set.to_vec();
    if let Some(out) = out {
        let out = absolute(out)?;
        overrides.push(format!("output = {}", serde_json::to_string(&out.display().to_string()).unwrap()));
    }
    Ok(Project::load(config, &overrides)?)
}

impl ProjectArgs {
    fn project(&self) -> Result<Project> {
        load(&self.config, &self.set, self.out.as_deref())
    }

    fn console(&self) -> Console {
        Console { quiet: self.quiet }
    }
}

fn finish<T: Serialize>(stage: &str, run: StageRun<T>, quiet: bool) {
    if !quiet {
        let state = if run.skipped { "up to date" } else { "done" };
        eprintln!("{stage}: {state} ({})", run.dir.display());
    }
    print_json(&run.report);
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("NEUROWARP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("NEUROWARP_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Fit(args) => finish("fit", cmd_fit(&args.project()?, args.force, &mut args.console())?, args.quiet),
        Command::Warp { project: args, width } => {
            let p = args.project()?;
            let mut console = args.console();
            finish("warp", cmd_warp(&p, args.force, &mut console)?, args.quiet);
            for (w, run) in cmd_warp_widths(&p, &width, args.force, &mut console)? {
                finish(&format!("warp width {w}"), run, args.quiet);
            }
        }
        Command::Morph(args) => {
            finish("morph", cmd_morph(&args.project()?, args.force, &mut args.console())?, args.quiet)
        }
        Command::Transfer(args) => finish(
            "transfer",
            cmd_transfer(&args.project()?, args.force, &mut args.console())?,
            args.quiet,
        ),
        Command::Ablate { project: args, width } => {
            let report = cmd_ablate(&args.project()?, &width, args.force, &mut args.console())?;
            if !args.quiet {
                for row in report.variants.iter().chain(&report.widths) {
                    match (&row.diagnostics, &row.error) {
                        (Some(d), _) => eprintln!(
                            "{:<14} endpoint {:.3e}  thin-plate {:.3e}",
                            row.name, d.endpoint_error, d.thin_plate_energy
                        ),
                        (None, e) => eprintln!("{:<14} failed: {}", row.name, e.as_deref().unwrap_or("?")),
                    }
                }
            }
            print_json(&report);
        }
        Command::Paths(args) => finish("paths", cmd_paths(&args.project()?, args.force, &mut args.console())?, args.quiet),
        Command::Metrics(args) => match (&args.config, &args.a, &args.b) {
            (Some(config), _, _) => print_json(&cmd_metrics(&load(config, &args.set, args.out.as_deref())?)?),
            (None, Some(a), Some(b)) => print_json(&compare_sequences(a, b)?),
            _ => return Err(CliError::Usage("metrics needs --config or two frame directories".into())),
        },
        Command::Serve(args) => serve(args)?,
        Command::Remote(args) => remote::run(args)?,
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let config = ServiceConfig {
        addr: SocketAddr::new(args.host, args.port),
        root: args.root,
        cors_origins: args.cors_origins,
        defaults: args.set,
    };
    runtime()?.block_on(async {
        let service = neurowarp_service::start(&config).await?;
        eprintln!("serving {} on {}", config.root.display(), service.url());
        service.wait().await.map_err(|e| CliError::Runtime(e.to_string()))
    })
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
