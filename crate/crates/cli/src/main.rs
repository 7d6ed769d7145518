mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pcup", version, about = "Internal upsampling of a single point cloud")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by commands that train. Flags override the config file.
#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Flat TOML config; see `pcup default-config`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ratio: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Downsampling kernel for training pairs: random or fps.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub no_discriminator: bool,
    /// Reconstruction loss: emd or cd.
    #[arg(long)]
    pub reconstruction: Option<String>,
    /// Number of training pairs.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Ops,
    Losses,
    End2end,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on pairs built from the input and write a checkpoint and log.
    Train {
        /// Point cloud (.xyz, .ply) or mesh (.obj, .off, .ply with faces).
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Upsample a cloud with a trained checkpoint.
    Upsample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output cloud; .xyz or .ply.
        #[arg(long)]
        out: PathBuf,
        /// Must match the checkpoint when given.
        #[arg(long)]
        ratio: Option<usize>,
    },
    /// Compare a generated cloud against a reference cloud or mesh.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// CSV report.
        #[arg(long)]
        out: PathBuf,
        /// Row name; defaults to the input file stem.
        #[arg(long)]
        name: Option<String>,
        /// Surface samples used when the reference is a mesh.
        #[arg(long, default_value_t = 8192)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample points from a mesh surface.
    SampleMesh {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, short = 'n', default_value_t = 16384)]
        points: usize,
        /// uniform or poisson.
        #[arg(long, default_value = "uniform")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference gradient checks; exits 4 if any row fails.
    Gradcheck {
        #[arg(value_enum)]
        scope: Scope,
        /// Text report.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and evaluate several configuration variants.
    Ablation {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated: full, wo-d, wo-self-att, wo-pm, wo-uni, wo-rep,
        /// full-cd, bN, fps-bN, random-bN.
        #[arg(long, value_delimiter = ',', default_value = "full,wo-uni,wo-rep,full-cd")]
        variants: Vec<String>,
        /// Reference cloud or mesh; defaults to the input itself.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// CSV table, one row per variant.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Print the default configuration file.
    DefaultConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { input, out, flags } => commands::train(&input, &out, &flags),
        Command::Upsample {
            input,
            checkpoint,
            out,
            ratio,
        } => commands::upsample(&input, &checkpoint, &out, ratio),
        Command::Eval {
            input,
            reference,
            out,
            name,
            samples,
            seed,
        } => commands::eval(&input, &reference, &out, name, samples, seed),
        Command::SampleMesh {
            input,
            out,
            points,
            mode,
            seed,
        } => commands::sample_mesh_cmd(&input, &out, points, &mode, seed),
        Command::Gradcheck {
            scope,
            out,
            instances,
            seed,
        } => commands::gradcheck(scope, &out, instances, seed),
        Command::Ablation {
            input,
            variants,
            reference,
            out,
            flags,
        } => commands::ablation(&input, &variants, reference.as_deref(), &out, &flags),
        Command::DefaultConfig { out } => commands::default_config(out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcup: {e}");
            e.exit_code()
        }
    }
}
