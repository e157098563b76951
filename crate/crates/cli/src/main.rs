use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crownmerge::raster::write_text_grid;
use crownmerge::{
    generate_random, generate_ring, run_pipeline, trace_command, ParamChoice, PipelineConfig, PipelineError,
    RasterFormat, ScoreKey, SynthScene,
};

#[derive(Parser, Debug)]
#[command(
    name = "crownmerge",
    version,
    about = "Find oversegmented crown groups in labeled rasters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline and write reports to the output directory.
    Run {
        #[command(flatten)]
        opts: PipelineOpts,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write every connective link to links.csv.
        #[arg(long)]
        links: bool,
    },
    /// Print the path trace that starts at one ISOL.
    Trace {
        #[command(flatten)]
        opts: PipelineOpts,
        /// ISOL label whose path is traced.
        #[arg(long)]
        isol: u32,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic scene with ground truth.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Args, Debug)]
struct PipelineOpts {
    /// Labeled raster (text grid or PGM).
    #[arg(long)]
    input: PathBuf,
    /// Raster format; guessed from the extension by default.
    #[arg(long)]
    format: Option<RasterFormat>,
    /// Termination parameter: a_merge, l_hat, lw_ratio, n_pix, n_edge,
    /// a_cumulative, lw_over_acum or a ratio such as lw_ratio/a_cumulative.
    #[arg(long, default_value_t = ParamChoice::default())]
    param: ParamChoice,
    /// Right-tail fraction of the break count histogram that is trimmed.
    #[arg(long, default_value_t = 0.25)]
    significance_p: f64,
    /// Smallest candidate group, in ISOLs.
    #[arg(long, default_value_t = 7)]
    min_size: usize,
    /// Longest connective link in pixels; unlimited by default.
    #[arg(long)]
    max_ray: Option<usize>,
    /// Ranking key: mean or sum.
    #[arg(long, default_value_t = ScoreKey::default())]
    score: ScoreKey,
}

impl PipelineOpts {
    fn config(self, out: PathBuf) -> PipelineConfig {
        PipelineConfig {
            input: self.input,
            format: self.format,
            param: self.param,
            significance_p: self.significance_p,
            min_group_size: self.min_size,
            max_ray: self.max_ray,
            score: self.score,
            out_dir: out,
            write_links: false,
        }
    }
}

#[derive(Subcommand, Debug)]
enum SynthKind {
    /// A ring of small ISOLs plus large outliers.
    Ring {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        gap: usize,
        #[arg(long, default_value_t = 4)]
        outliers: usize,
        #[arg(long, default_value_t = 192)]
        size: usize,
        #[command(flatten)]
        dest: SynthDest,
    },
    /// Randomly placed rectangles and plus shapes.
    Random {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 40)]
        size: usize,
        #[command(flatten)]
        dest: SynthDest,
    },
}

#[derive(Args, Debug)]
struct SynthDest {
    /// Text grid destination.
    #[arg(long)]
    out: PathBuf,
    /// Truth sidecar; defaults to the raster path with a .truth.json suffix.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Other(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Other(format!("{}: {e}", path.display()))
}

fn write_scene(scene: &SynthScene, dest: &SynthDest) -> Result<(), Failure> {
    let truth = dest
        .truth
        .clone()
        .unwrap_or_else(|| dest.out.with_extension("truth.json"));
    let mut grid = BufWriter::new(File::create(&dest.out).map_err(|e| io_failure(&dest.out, e))?);
    write_text_grid(&scene.raster, &mut grid)
        .and_then(|_| grid.flush())
        .map_err(|e| io_failure(&dest.out, e))?;
    let mut sidecar = BufWriter::new(File::create(&truth).map_err(|e| io_failure(&truth, e))?);
    scene.write_truth(&mut sidecar).map_err(|e| io_failure(&truth, e))?;
    sidecar.flush().map_err(|e| io_failure(&truth, e))?;
    println!(
        "wrote {} ({}x{}, {} ISOLs) and {}",
        dest.out.display(),
        scene.raster.width(),
        scene.raster.height(),
        scene.raster.isol_ids().len(),
        truth.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { opts, out, links } => {
            let mut config = opts.config(out);
            config.write_links = links;
            let report = run_pipeline(&config)?;
            println!(
                "{} ISOLs, {} terminals, {} candidates (F_sig = {})",
                report.isol_count,
                report.terminal_count,
                report.candidates.len(),
                report.significance_count
            );
            for c in &report.candidates {
                println!(
                    "rank {:>3}  node {:>5}  members {:>4}  pixels {:>7}  S {:.4}  ratio {:.1}",
                    c.rank, c.node_id, c.member_count, c.pixel_count, c.s, c.ratio_table
                );
            }
            Ok(())
        }
        Command::Trace { opts, isol, out } => {
            let config = opts.config(PathBuf::new());
            match out {
                Some(path) => {
                    let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
                    trace_command(&config, isol, BufWriter::new(file))?;
                }
                None => {
                    trace_command(&config, isol, io::stdout().lock())?;
                }
            }
            Ok(())
        }
        Command::Synth { kind } => {
            let (scene, dest) = match kind {
                SynthKind::Ring {
                    seed,
                    k,
                    gap,
                    outliers,
                    size,
                    dest,
                } => (generate_ring(seed, k, gap, outliers, size), dest),
                SynthKind::Random { seed, n, size, dest } => (generate_random(seed, n, size), dest),
            };
            let scene = scene.map_err(|e| Failure::Input(e.to_string()))?;
            write_scene(&scene, &dest)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
