//! `cyclefuse` — reorder repetitive video (or a 1D signal) into a single
//! fine-detail template cycle.
//!
//! Subcommands: `period` (fundamental period only), `analyze` (full phase
//! analysis, JSON), `synthesize` (write the template frames), `eval` (run
//! the corruption benchmark grid).
//!
//! Exit codes: 0 success, 1 I/O or argument problems, 2 aperiodic input,
//! 3 no recoverable cycle.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cyclefuse_core::error::Error;
use cyclefuse_core::geometry::PointCloud;
use cyclefuse_core::pipeline::{
    analyze_cloud, analyze_sequence, estimate_period_of_sequence, synthesize_template,
    AnalysisResult, PipelineConfig,
};
use cyclefuse_core::spectral::{AdjacencyMode, KernelShape};
use cyclefuse_core::synth::{run_benchmark, BenchmarkRow, ScenarioSpec};
use cyclefuse_core::videoio::{self, FrameSequence};

mod jsonfmt;

#[derive(Parser)]
#[command(name = "cyclefuse", version, about = "Single-cycle motion templates from repetitive video")]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Base seed for every randomized stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Gaussian pyramid level applied before analysis (clamped to the frame size).
    #[arg(long, global = true, default_value_t = 2)]
    pyramid_level: u32,

    /// Blend between the birth (1.0) and death (0.0) scale of the dominant cycle.
    #[arg(long, global = true, default_value_t = 0.5)]
    alpha: f64,

    /// Prime field characteristic for persistence.
    #[arg(long, global = true, default_value_t = 47)]
    field_char: u64,

    /// Laplacian adjacency mode.
    #[arg(long, global = true, value_enum, default_value_t = LaplacianArg::Weighted)]
    laplacian: LaplacianArg,

    /// Weighted-kernel shape: gaussian uses exp(-d^2/2s^2), raw exp(-d/2s^2).
    #[arg(long, global = true, value_enum, default_value_t = KernelArg::Gaussian)]
    kernel: KernelArg,

    /// Template frame count M (default: 4x the estimated samples per period).
    #[arg(long = "frames", global = true)]
    frames: Option<usize>,

    /// Ghosting gap F in frame-times (default: T/4).
    #[arg(long = "ghost-gap", global = true)]
    ghost_gap: Option<f64>,

    /// Point cap for the persistence stage.
    #[arg(long, global = true, default_value_t = 400)]
    subsample_cap: usize,

    /// Tolerance of the periodicity self-consistency check.
    #[arg(long, global = true, default_value_t = 0.1)]
    cycle_drift_tolerance: f64,

    /// Force the sliding-window dimension (1 disables the embedding).
    #[arg(long, global = true)]
    window_dim: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LaplacianArg {
    Weighted,
    Unweighted,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    Raw,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the fundamental period; prints {"T", "confidence"}.
    Period {
        /// Frame directory or CSV signal (one sample per line).
        input: PathBuf,
    },
    /// Run the full analysis; prints or writes the analysis JSON.
    Analyze {
        /// Frame directory, CSV signal, or (with --point-cloud-csv) a CSV of
        /// point coordinates.
        input: PathBuf,
        /// Write the analysis JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Treat the input as a point cloud (one comma-separated row per
        /// point) and skip ingestion, projection, and windowing.
        #[arg(long)]
        point_cloud_csv: bool,
    },
    /// Synthesize the template cycle into a frame directory.
    Synthesize {
        input: PathBuf,
        /// Reuse a previously written analysis JSON.
        #[arg(long)]
        analysis: Option<PathBuf>,
        /// Output directory for template frames and template.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the corruption benchmark over a scenario grid.
    Eval {
        /// JSON array of scenario specifications.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn pipeline_config(opts: &GlobalOpts) -> PipelineConfig {
    PipelineConfig {
        alpha: opts.alpha,
        field_char: opts.field_char,
        mode: match opts.laplacian {
            LaplacianArg::Weighted => AdjacencyMode::Weighted,
            LaplacianArg::Unweighted => AdjacencyMode::Unweighted,
        },
        kernel: match opts.kernel {
            KernelArg::Gaussian => KernelShape::Gaussian,
            KernelArg::Raw => KernelShape::Raw,
        },
        pyramid_level: opts.pyramid_level,
        template_frames: opts.frames,
        ghost_gap: opts.ghost_gap,
        subsample_cap: opts.subsample_cap,
        seed: opts.seed,
        cycle_drift_tolerance: opts.cycle_drift_tolerance,
        window_dim: opts.window_dim,
        n_neighbors: 10,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.opts.threads > 0 {
        // Ignore failure: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.opts.threads)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Aperiodic => 2,
                Error::NoCycles(_) => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = pipeline_config(&cli.opts);
    match &cli.command {
        Command::Period { input } => {
            let seq = load_input(input)?;
            let estimate = estimate_period_of_sequence(&seq, &cfg)?;
            let value = serde_json::json!({
                "T": estimate.period,
                "confidence": estimate.confidence,
            });
            println!("{}", jsonfmt::to_string(&value));
            Ok(())
        }
        Command::Analyze {
            input,
            out,
            point_cloud_csv,
        } => {
            let analysis = if *point_cloud_csv {
                let cloud = load_point_cloud_csv(input)?;
                analyze_cloud(&cloud, &cfg)?
            } else {
                let seq = load_input(input)?;
                analyze_sequence(&seq, &cfg)?
            };
            let text = analysis_to_json(&analysis);
            match out {
                Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Synthesize {
            input,
            analysis,
            out,
        } => {
            let seq = load_input(input)?;
            let analysis = match analysis {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    AnalysisResult::from_json(&text)?
                }
                None => analyze_sequence(&seq, &cfg)?,
            };
            let template = synthesize_template(&seq, &analysis, &cfg)?;
            videoio::write_frames(&template.frames, out)?;
            let t_est = analysis
                .t_est
                .unwrap_or(analysis.frame_count as f64 / analysis.k_est);
            let meta = serde_json::json!({
                "schema": "1",
                "M": template.frames.len(),
                "F": cfg.ghost_gap.unwrap_or(t_est / 4.0),
                "k_est": template.cycle_count,
                "contributors": template.contributors,
                "phases": template.phases,
            });
            let path = out.join("template.json");
            std::fs::write(&path, jsonfmt::to_string_pretty(&meta)).map_err(|e| Error::Io {
                path,
                source: e,
            })?;
            Ok(())
        }
        Command::Eval { grid, trials, out } => {
            let text = std::fs::read_to_string(grid).map_err(|e| Error::Io {
                path: grid.clone(),
                source: e,
            })?;
            let specs: Vec<ScenarioSpec> = serde_json::from_str(&text).map_err(|e| {
                Error::Malformed {
                    path: grid.clone(),
                    reason: e.to_string(),
                }
            })?;
            let rows = run_benchmark(&specs, &cfg, *trials);
            let mut csv = String::from(BenchmarkRow::csv_header());
            csv.push('\n');
            for row in &rows {
                csv.push_str(&row.to_csv());
                csv.push('\n');
            }
            std::fs::write(out, csv).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            Ok(())
        }
    }
}

fn analysis_to_json(analysis: &AnalysisResult) -> String {
    let value = serde_json::to_value(analysis).expect("analysis serializes");
    let mut text = jsonfmt::to_string_pretty(&value);
    text.push('\n');
    text
}

/// A directory is a frame sequence; a file is a one-sample-per-line CSV.
fn load_input(path: &Path) -> Result<FrameSequence, Error> {
    if path.is_dir() {
        videoio::load_frame_dir(path)
    } else if path.exists() {
        Ok(videoio::load_signal_csv(path)?.into_frames())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        })
    }
}

fn load_point_cloud_csv(path: &Path) -> Result<PointCloud, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("line {}: expected comma-separated numbers", lineno + 1),
        })?;
        rows.push(row);
    }
    if rows.len() < 3 {
        return Err(Error::InvalidArgument(
            "point cloud needs at least 3 points".into(),
        ));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: "rows have differing dimensions".into(),
        });
    }
    let points = nalgebra::DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    PointCloud::from_rows(points)
}
