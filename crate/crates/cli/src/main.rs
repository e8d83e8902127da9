use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod failure;

use failure::Failure;
use jigsaw3d::config::{RunConfig, ViewSpec};
use jigsaw3d::jigsaw::Mode;

#[derive(Debug, Parser)]
#[command(name = "jigsaw3d", version, about = "Jigsaw style pairs, rendering, style baking and checks")]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "TOML")]
    pub config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shuffle (and in train mode mask) the patches of an image.
    Jigsaw(JigsawArgs),
    /// Render color, position, normal and depth maps of a mesh.
    Render(RenderArgs),
    /// Build style–texture training pairs from a directory of textured meshes.
    Pairs(PairsArgs),
    /// Gram and AdaIN style distances of views against a reference image.
    Metrics(MetricsArgs),
    /// Run the attention invariant and gradient suite.
    AttnCheck(AttnCheckArgs),
    /// Bake rendered or stylized views into a UV texture.
    Bake(BakeArgs),
    /// Render a textured mesh, bake it back and report the texture error.
    Roundtrip(RoundtripArgs),
}

#[derive(Debug, Args)]
pub struct JigsawArgs {
    #[arg(long = "in", value_name = "PNG")]
    pub input: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub out: PathBuf,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub mask_ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Fill value for masked patches, one per channel or a single value.
    #[arg(long, value_delimiter = ',')]
    pub background: Option<Vec<f64>>,
    /// Center-crop to a multiple of the patch size instead of rejecting.
    #[arg(long)]
    pub crop: bool,
    /// Write the permutation and mask as JSON.
    #[arg(long, value_name = "JSON")]
    pub dump_perm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, value_name = "OBJ")]
    pub mesh: PathBuf,
    /// `ortho6` or `random:<n>`.
    #[arg(long)]
    pub views: Option<ViewSpec>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub half_extent: Option<f64>,
    /// Color texture; a checkerboard is used for meshes with UVs otherwise.
    #[arg(long, value_name = "PNG")]
    pub texture: Option<PathBuf>,
    /// 2×2 supersampling for color renders.
    #[arg(long)]
    pub supersample: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[arg(long, value_name = "DIR")]
    pub meshes: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub refs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mask_ratio_max: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long = "ref", value_name = "PNG")]
    pub reference: PathBuf,
    /// A directory of PNGs or a list of image files.
    #[arg(long, num_args = 1.., required = true, value_name = "PATH")]
    pub views: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttnCheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BakeArgs {
    #[arg(long, value_name = "OBJ")]
    pub mesh: PathBuf,
    /// Directory holding `view_<k>_color.png` and optionally `view_<k>_depth.png`.
    #[arg(long, value_name = "DIR")]
    pub views: PathBuf,
    #[arg(long, value_name = "JSON")]
    pub cameras: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub out: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub normals: Option<PathBuf>,
    /// Coverage report; defaults to stdout only.
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub depth_eps: Option<f64>,
    #[arg(long)]
    pub cos_cutoff: Option<f64>,
    #[arg(long)]
    pub blend_power: Option<f64>,
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub margin: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(long, value_name = "OBJ")]
    pub mesh: PathBuf,
    /// Source texture; defaults to a checkerboard.
    #[arg(long, value_name = "PNG")]
    pub texture: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub view_size: Option<usize>,
    /// Directory for the baked texture, report and resolved config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Clap's message reduced to one line, e.g. "unexpected argument '--foo' found".
fn usage_failure(e: &clap::Error) -> Failure {
    let text = e.to_string();
    let first = text.lines().next().unwrap_or("invalid arguments");
    Failure::validation("cli::Usage", first.trim_start_matches("error: "))
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.threads {
        cfg.threads = Some(n);
    }
    cfg.verbosity = cfg.verbosity.raised(cli.verbose);
    if cfg.threads == Some(0) {
        return Err(Failure::validation("config::Invalid", "threads must be at least 1"));
    }
    Ok(cfg)
}

/// Resolves relative output paths against the configured output root.
pub fn output_path(cfg: &RunConfig, path: &Path) -> PathBuf {
    match &cfg.output_root {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli)?;
    env_logger::Builder::new()
        .filter_level(cfg.verbosity.level())
        .format_timestamp(None)
        .try_init()
        .ok();
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::internal("cli::ThreadPool", e))?;
    }
    match &cli.command {
        Command::Jigsaw(a) => commands::jigsaw(&mut cfg, a),
        Command::Render(a) => commands::render(&mut cfg, a),
        Command::Pairs(a) => commands::pairs(&mut cfg, a),
        Command::Metrics(a) => commands::metrics(&mut cfg, a),
        Command::AttnCheck(a) => commands::attn_check(&mut cfg, a),
        Command::Bake(a) => commands::bake(&mut cfg, a),
        Command::Roundtrip(a) => commands::roundtrip(&mut cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = usage_failure(&e);
            eprintln!("{}", f.line());
            return ExitCode::from(f.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
