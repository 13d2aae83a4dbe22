use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use surfel_avatar::density::EccentricityDefinition;
use surfel_avatar::geometry::sh::degree_of;
use surfel_avatar::geometry::Camera;
use surfel_avatar::raster::{Precision, RenderSettings};
use surfel_avatar::skinning::PoseParams;
use surfel_avatar::synthetic::{generate_rig, RigConfig};
use surfel_avatar::train::dataset::read_json;
use surfel_avatar::train::{evaluate, load_dataset, render_pose, train, Checkpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "surfel-avatar", version, about = "Train and render animatable 2D Gaussian surfel avatars")]
struct Cli {
    /// Random seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Force the deterministic mode on.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Float precision of the render kernel: f32 or f64.
    #[arg(long, global = true)]
    precision: Option<Precision>,
    /// Eccentricity used by the prune filter: axis-ratio or focal-ratio.
    #[arg(long, global = true)]
    eccentricity_definition: Option<EccentricityDefinition>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit surfels to a dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render a checkpoint for a sequence of poses and cameras (JSON arrays).
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked PSNR and SSIM of a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the synthetic two-bone cylinder dataset.
    GenRig {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        views: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 96)]
        size: usize,
    },
}

fn render_settings(cli: &Cli, checkpoint: &Checkpoint) -> RenderSettings {
    RenderSettings {
        sh_degree: degree_of(checkpoint.optimizer.sh_coeffs),
        precision: cli.precision.unwrap_or_default(),
        ..RenderSettings::default()
    }
}

fn run(cli: &Cli) -> surfel_avatar::Result<()> {
    match &cli.command {
        Command::Train { config, iterations, output } => {
            let mut cfg = TrainConfig::load(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if cli.deterministic {
                cfg.deterministic = true;
            }
            if let Some(p) = cli.precision {
                cfg.precision = p;
            }
            if let Some(e) = cli.eccentricity_definition {
                cfg.densify.eccentricity_definition = e;
            }
            if let Some(n) = iterations {
                cfg.iterations = *n;
            }
            if let Some(o) = output {
                cfg.output = o.clone();
            }
            let total = cfg.iterations;
            let outcome = train(&cfg, |row| {
                if row.iteration % 100 == 0 || row.iteration == total {
                    eprintln!(
                        "iteration {:6}/{total}  loss {:.5}  psnr {:6.2}  surfels {}",
                        row.iteration, row.loss.total, row.psnr, row.surfels
                    );
                }
            })?;
            println!(
                "wrote {} ({} surfels)",
                cfg.output.join("checkpoint.bin").display(),
                outcome.checkpoint.surfels.len()
            );
        }
        Command::Render { checkpoint, poses, cameras, out } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let poses: Vec<PoseParams> = read_json(poses)?;
            let cameras: Vec<Camera> = read_json(cameras)?;
            let seq = render_pose(&ckpt, &poses, &cameras, &render_settings(cli, &ckpt))?;
            seq.write(out)?;
            println!("rendered {} images in {:.3}s ({:.1} FPS)", seq.image_count(), seq.seconds, seq.fps());
        }
        Command::Eval { checkpoint, dataset, split, csv } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let ds = load_dataset(dataset)?;
            let report = evaluate(&ckpt, &ds, split, &render_settings(cli, &ckpt))?;
            print!("{}", report.to_table());
            if let Some(path) = csv {
                std::fs::write(path, report.to_csv())?;
            }
        }
        Command::GenRig { out, views, frames, size } => {
            let cfg = RigConfig {
                views: *views,
                frames: *frames,
                width: *size,
                height: *size,
                seed: cli.seed.unwrap_or(0),
                ..RigConfig::default()
            };
            let s = generate_rig(out, &cfg)?;
            println!(
                "wrote {} views x {} frames to {} ({} template vertices, {} ground-truth surfels)",
                s.views,
                s.frames,
                out.display(),
                s.template_vertices,
                s.ground_truth_surfels
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
