use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isomesh::fixtures::Shape;
use isomesh::pipeline::{Stage, TauE};

#[derive(Debug, Parser)]
#[command(name = "isomesh", version, about = "Isomorphic surface meshes from point clouds")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the spherical reference mesh.
    GenRef {
        /// Subdivision frequency, 1..=64 (16 gives 2,562 vertices).
        frequency: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a point cloud sampled from an analytic shape.
    MakeFixture {
        #[arg(value_parser = parse_shape)]
        shape: Shape,
        count: usize,
        /// Size of the shape: sphere radius, longest semi-axis or half-extent.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Only the box fixture is random.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the matching ground-truth mesh here.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb a percentage of the points by uniform per-coordinate offsets.
    ///
    /// DELTA is read as the percentage of points moved: exactly
    /// ceil(delta * n / 100) distinct points, chosen uniformly, each get
    /// independent offsets from U[-sigma, sigma] on x, y and z.
    AddNoise {
        cloud: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the three mapping stages on a point cloud.
    Fit(FitArgs),
    /// PM distance between a mesh and a ground-truth mesh.
    Evaluate {
        mesh: PathBuf,
        truth: PathBuf,
        /// Per-vertex distance CSV (default: next to MESH).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub cloud: PathBuf,
    /// TOML config; omitted keys take the profile defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Flags that replace single config values after the file is read.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frequency: Option<usize>,
    #[arg(long)]
    pub tau_a: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub beta3: Option<f64>,
    /// Block fit tolerance in cloud units, or "auto".
    #[arg(long)]
    pub tau_e: Option<TauE>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub global_epochs: Option<usize>,
    /// First-phase epochs of both local stages.
    #[arg(long)]
    pub local_epochs: Option<usize>,
    /// Retraining epochs of both local stages.
    #[arg(long)]
    pub retrain_epochs: Option<usize>,
    #[arg(long, value_parser = parse_stage)]
    pub stop_after: Option<Stage>,
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    s.parse()
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    match s {
        "global" => Ok(Stage::Global),
        "coarse" => Ok(Stage::Coarse),
        "fine" => Ok(Stage::Fine),
        other => Err(format!("unknown stage '{other}' (expected global, coarse or fine)")),
    }
}
