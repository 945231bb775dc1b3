use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Subcommand};
use neurowarp_client::api::{CreateProject, Phase, Stage, TrainRequest};
use neurowarp_client::Client;
use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_pipeline::BlendMode;
use serde::Deserialize;

use crate::{print_json, runtime, CliError, Result};

#[derive(Debug, Args)]
pub struct RemoteArgs {
    /// Service root URL.
    #[arg(long, env = "NEUROWARP_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[command(subcommand)]
    command: RemoteCommand,
}

#[derive(Debug, Subcommand)]
enum RemoteCommand {
    /// Create a project and print it.
    Create {
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Region polygon file (`{"polygon": [[x, y], ...]}`).
        #[arg(long)]
        region: Option<PathBuf>,
    },
    /// Print a project record.
    Show { id: String },
    /// Upload image 0 or 1.
    Upload { id: String, index: u8, file: PathBuf },
    /// Upload a landmark file, or print the stored one when no file is given.
    Landmarks { id: String, file: Option<PathBuf> },
    /// Start a training job and follow it until it finishes.
    Train {
        id: String,
        #[arg(long, value_delimiter = ',', value_parser = parse_stage)]
        stages: Vec<Stage>,
        /// Gradient modes to train in the blend stage.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<BlendMode>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Return once the job is accepted.
        #[arg(long)]
        detach: bool,
    },
    /// Print the current job.
    Job { id: String },
    /// Save a preview frame as PNG.
    Frame {
        id: String,
        #[arg(short)]
        t: f64,
        #[arg(long, default_value = "linear")]
        mode: BlendMode,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print landmark trajectories as JSON.
    Paths {
        id: String,
        #[arg(long, default_value_t = 33)]
        samples: usize,
    },
}

fn parse_stage(s: &str) -> std::result::Result<Stage, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown stage {s:?} (expected fit, warp, blend or render)"))
}

fn read(path: &PathBuf) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn run(args: RemoteArgs) -> Result<()> {
    let client = Client::new(args.url);
    runtime()?.block_on(async move {
        match args.command {
            RemoteCommand::Create { set, region } => {
                let region = match region {
                    Some(path) => {
                        #[derive(Deserialize)]
                        struct Polygon {
                            polygon: Vec<[f64; 2]>,
                        }
                        let doc: Polygon = serde_json::from_slice(&read(&path)?)
                            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                        Some(doc.polygon)
                    }
                    None => None,
                };
                print_json(&client.create_project(&CreateProject { set, region }).await?);
            }
            RemoteCommand::Show { id } => print_json(&client.project(&id).await?),
            RemoteCommand::Upload { id, index, file } => {
                print_json(&client.put_image(&id, index, read(&file)?).await?);
            }
            RemoteCommand::Landmarks { id, file: Some(file) } => {
                let pairs = LandmarkPairs::load(&file).map_err(|e| CliError::Usage(e.to_string()))?;
                print_json(&client.put_landmarks(&id, &pairs.to_file()).await?);
            }
            RemoteCommand::Landmarks { id, file: None } => print_json(&client.landmarks(&id).await?),
            RemoteCommand::Train {
                id,
                stages,
                modes,
                set,
                detach,
            } => {
                let request = TrainRequest {
                    stages: (!stages.is_empty()).then_some(stages),
                    set,
                    modes,
                };
                let job = client.train(&id, &request).await?;
                if detach {
                    print_json(&job);
                    return Ok(());
                }
                let mut shown = (Phase::Idle, 0);
                let job = client
                    .wait(&id, Duration::from_millis(500), |job| {
                        let pct = (job.progress * 100.0).round() as u32;
                        if (job.phase, pct / 10) != shown {
                            shown = (job.phase, pct / 10);
                            eprintln!("{} {pct}%", job.phase);
                        }
                    })
                    .await?;
                print_json(&job);
                if job.phase == Phase::Failed {
                    return Err(CliError::Runtime(format!(
                        "job failed: {}",
                        job.error.as_deref().unwrap_or("no reason given")
                    )));
                }
            }
            RemoteCommand::Job { id } => print_json(&client.job(&id).await?),
            RemoteCommand::Frame {
                id,
                t,
                mode,
                size,
                output,
            } => {
                let frame = client.frame(&id, t, mode, size).await?;
                std::fs::write(&output, &frame.png)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", output.display())))?;
                eprintln!("{} (version {})", output.display(), frame.version);
            }
            RemoteCommand::Paths { id, samples } => print_json(&client.paths(&id, samples).await?),
        }
        Ok(())
    })
}
