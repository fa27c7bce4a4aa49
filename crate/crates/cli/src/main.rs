//! `latent-manifold`: command-line access to geodesics, transport, and
//! manifold statistics for generator networks and analytic surfaces.

mod commands;
mod error;
mod io;
mod manifest;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::manifest::{Recorder, Status};

/// Exit code for runs that finished but did not meet a convergence target.
const EXIT_WARNING: u8 = 3;
const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "latent-manifold", version, about = "Riemannian geometry of generator networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Directory for outputs and manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for every random draw in the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ModelArgs {
    /// Generator network in the model JSON format.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Built-in surface instead of a model file: paraboloid, sphere[:RADIUS].
    #[arg(long, conflicts_with = "model")]
    surface: Option<String>,
    /// Encoder network; surfaces use their coordinate chart when omitted.
    #[arg(long)]
    encoder: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Exact,
    Encoder,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GeodesicArgs {
    /// Number of path segments T.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Initial gradient step size.
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    /// Stop once the summed squared gradient norm drops below this (default 1e-6 * T).
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    gradient_mode: ModeArg,
    /// Keep the step size fixed even when the energy rises.
    #[arg(long)]
    no_backtracking: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum DistanceArg {
    Linear,
    Geodesic,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Sample points of c = a^2 - b^2 with a, b ~ N(0, 1).
    SampleParaboloid {
        #[arg(long, default_value_t = 50_000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train the small VAE on a point CSV; writes encoder.json and decoder.json.
    TrainVae {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
        preset: PresetArg,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Fixed variance of the Gaussian likelihood.
        #[arg(long)]
        variance: Option<f64>,
        /// Gradient norm clip; 0 disables clipping.
        #[arg(long)]
        clip: Option<f64>,
        /// Linear learning-rate decay to zero.
        #[arg(long)]
        lr_decay: Option<bool>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        latent_dim: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Discrete geodesic between two latent points.
    Geodesic {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        geodesic: GeodesicArgs,
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        /// Treat --from/--to as ambient points and encode them first.
        #[arg(long)]
        project: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Geodesic shooting from a point and an initial velocity.
    Shoot {
        #[command(flatten)]
        model: ModelArgs,
        /// Shoot with the initial point and velocity of this path.
        #[arg(long, conflicts_with_all = ["from", "velocity", "latent_velocity"])]
        path: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<String>,
        /// Ambient initial velocity.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "latent_velocity")]
        velocity: Option<String>,
        /// Latent initial velocity, pushed forward by the Jacobian.
        #[arg(long, allow_hyphen_values = true)]
        latent_velocity: Option<String>,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Abort once ||g(h(x)) - x|| exceeds this after a step.
        #[arg(long)]
        max_round_trip: Option<f64>,
        #[arg(long)]
        project: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Parallel translation of a latent vector along a path CSV.
    Translate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        vector: String,
        #[command(flatten)]
        common: Common,
    },
    /// Solve a : b :: c : ? with geodesics and parallel translation.
    Analogy {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        geodesic: GeodesicArgs,
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long, allow_hyphen_values = true)]
        b: String,
        #[arg(long, allow_hyphen_values = true)]
        c: String,
        #[arg(long)]
        project: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Fréchet mean of a point set under geodesic distance.
    FrechetMean {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        geodesic: GeodesicArgs,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        mean_step: f64,
        #[arg(long, default_value_t = 100)]
        mean_iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        mean_tolerance: f64,
        #[arg(long)]
        project: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Pairwise linear or geodesic distances of a point set.
    DistanceMatrix {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        geodesic: GeodesicArgs,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_enum, default_value_t = DistanceArg::Geodesic)]
        mode: DistanceArg,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        project: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Grouping score 1 - intra-group / total squared distance.
    R2 {
        #[arg(long)]
        distances: PathBuf,
        /// Point CSV whose label column gives the groups.
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Classical MDS and its eigenvalue spectrum.
    Mds {
        #[arg(long)]
        distances: PathBuf,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rank checks of a generator's weights and Jacobians.
    CheckImmersion {
        #[arg(long)]
        model: PathBuf,
        /// Latent points to test; prior samples are drawn otherwise.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SampleParaboloid { .. } => "sample-paraboloid",
            Command::TrainVae { .. } => "train-vae",
            Command::Geodesic { .. } => "geodesic",
            Command::Shoot { .. } => "shoot",
            Command::Translate { .. } => "translate",
            Command::Analogy { .. } => "analogy",
            Command::FrechetMean { .. } => "frechet-mean",
            Command::DistanceMatrix { .. } => "distance-matrix",
            Command::R2 { .. } => "r2",
            Command::Mds { .. } => "mds",
            Command::CheckImmersion { .. } => "check-immersion",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::SampleParaboloid { common, .. }
            | Command::TrainVae { common, .. }
            | Command::Geodesic { common, .. }
            | Command::Shoot { common, .. }
            | Command::Translate { common, .. }
            | Command::Analogy { common, .. }
            | Command::FrechetMean { common, .. }
            | Command::DistanceMatrix { common, .. }
            | Command::R2 { common, .. }
            | Command::Mds { common, .. }
            | Command::CheckImmersion { common, .. } => common,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let report = serde_json::json!({ "error": "usage", "message": e.render().to_string() });
            eprintln!("{report}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let common = cli.command.common().clone();
    let config = serde_json::to_value(&cli.command).unwrap_or(serde_json::Value::Null);
    let mut recorder = Recorder::new(cli.command.name(), config, common.seed, &common.out);
    if let Err(e) = std::fs::create_dir_all(&common.out)
        .map_err(error::CliError::from)
        .and_then(|_| commands::run(&cli.command, &mut recorder))
    {
        let report = e.to_json();
        eprintln!("{report}");
        recorder.fail(report);
    }
    match recorder.finish() {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Warning) => ExitCode::from(EXIT_WARNING),
        Ok(Status::Failed) => ExitCode::from(EXIT_FAILURE),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
