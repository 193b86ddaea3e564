//! Command-line front end: mask construction, single training runs,
//! sweeps, report generation, generated-sample dumps, and synthetic data.
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gpmvc::checkpoint::load_checkpoint;
use gpmvc::dataio::{self, load_dataset, make_partial_split, PartialSplit};
use gpmvc::error::{Error, Result};
use gpmvc::report::{self, Metric};
use gpmvc::synth;
use gpmvc::trainer::{
    read_run_config, run_mean_impute_baseline, run_pipeline_with_split, RunSink, TrainConfig,
};
use gpmvc::viz;

#[derive(Parser)]
#[command(
    name = "gpmvc",
    about = "Partial multi-view clustering with adversarial generation of missing views",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a reproducible paired/unpaired mask for a dataset.
    Mask {
        /// Dataset manifest.json.
        #[arg(long)]
        data: PathBuf,
        /// Fraction of samples kept fully paired, in [0, 1].
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output mask file (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the full pipeline for one mask and write a run directory.
    Run {
        #[arg(long)]
        data: PathBuf,
        /// Mask file from `gpmvc mask`.
        #[arg(long)]
        mask: PathBuf,
        /// Training config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Run the mean-impute + autoencoder + k-means reference instead of
        /// the adversarial pipeline; writes metrics.json only.
        #[arg(long, default_value_t = false)]
        baseline: bool,
    },
    /// Execute a (ratio x repeat x mode) grid and aggregate the results.
    Sweep {
        /// Sweep spec (JSON): data, ratios, repeats, base_seed, modes,
        /// config, out.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Aggregate finished run directories into tables and curves.
    Report {
        /// Directory scanned recursively for run metrics.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_parser = ["csv", "md"], default_value = "csv")]
        format: String,
        /// Also write NMI / Purity curve SVGs.
        #[arg(long, default_value_t = false)]
        plots: bool,
        /// Output directory (defaults to the runs directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a real/generated/target sample grid from a finished run.
    DumpGenerated {
        /// Run directory with checkpoint.bin and config.json.
        #[arg(long)]
        run: PathBuf,
        /// Target view to generate.
        #[arg(long)]
        view: usize,
        /// Source view supplying the latent code (defaults to the first
        /// other view).
        #[arg(long)]
        source: Option<usize>,
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Dataset manifest; defaults to the path recorded in the run.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output PNG path (defaults inside the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic benchmark dataset directory.
    SynthData {
        /// Preset: `hw` (three views, 10 classes) or `image` (two 8x8
        /// views).
        #[arg(long, value_parser = ["hw", "image"], default_value = "hw")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn warn_overwrite(path: &Path) {
    if path.exists() {
        eprintln!("warning: {} exists and will be overwritten", path.display());
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let config: TrainConfig = serde_json::from_slice(&bytes)?;
            Ok(config)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    // GPMVC_DETERMINISTIC is honored for parity with accelerator backends;
    // this implementation is deterministic unconditionally.
    match cli.command {
        Command::Mask {
            data,
            ratio,
            seed,
            out,
        } => {
            let dataset = load_dataset(&data)?;
            let split = make_partial_split(&dataset, ratio, seed)?;
            warn_overwrite(&out);
            split.save(&out)?;
            println!(
                "mask: {} paired / {} unpaired -> {}",
                split.paired_idx.len(),
                split.unpaired.len(),
                out.display()
            );
        }
        Command::Run {
            data,
            mask,
            config,
            out,
            baseline,
        } => {
            let dataset = load_dataset(&data)?;
            let split = PartialSplit::load(&mask)?;
            if split.num_samples() != dataset.num_samples() {
                return Err(Error::Invalid(format!(
                    "mask covers {} samples but dataset has {}",
                    split.num_samples(),
                    dataset.num_samples()
                )));
            }
            let config = load_config(config.as_deref())?;
            warn_overwrite(&out);
            if baseline {
                let result = run_mean_impute_baseline(&dataset, &split, &config)?;
                std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                let metrics = gpmvc::trainer::MetricsFile {
                    acc: result.acc,
                    nmi: result.nmi,
                    purity: result.purity,
                    ratio: result.ratio,
                    seed: result.seed,
                    mode: result.mode.clone(),
                    beta: vec![],
                };
                let path = out.join("metrics.json");
                let mut bytes = serde_json::to_vec_pretty(&metrics)?;
                bytes.push(b'\n');
                std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                println!(
                    "baseline: acc {:.4} nmi {:.4} purity {:.4}",
                    result.acc, result.nmi, result.purity
                );
            } else {
                let sink = RunSink {
                    dir: out.clone(),
                    dataset_path: Some(data.clone()),
                };
                let outcome = run_pipeline_with_split(&dataset, &split, &config, Some(&sink))?;
                println!(
                    "run: acc {:.4} nmi {:.4} purity {:.4} -> {}",
                    outcome.result.acc,
                    outcome.result.nmi,
                    outcome.result.purity,
                    out.display()
                );
            }
        }
        Command::Sweep { spec } => {
            let bytes = std::fs::read(&spec).map_err(|e| Error::io(&spec, e))?;
            let spec = report::parse_sweep_spec(&bytes)?;
            let outcome = report::run_sweep(&spec)?;
            for failure in &outcome.failures {
                eprintln!("failed: {}: {}", failure.dir.display(), failure.error);
            }
            let cells = report::aggregate(&outcome.metrics);
            let written = report::write_report(&spec.out, &cells, false, true)?;
            print!("{}", report::metric_table(&cells, Metric::Acc, false));
            println!(
                "sweep: {} runs aggregated, {} failed; wrote {}",
                outcome.metrics.len(),
                outcome.failures.len(),
                written
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        Command::Report {
            runs,
            format,
            plots,
            out,
        } => {
            let metrics = report::collect_metrics(&runs)?;
            if metrics.is_empty() {
                return Err(Error::Invalid(format!(
                    "no metrics.json found under {}",
                    runs.display()
                )));
            }
            let cells = report::aggregate(&metrics);
            let out = out.unwrap_or_else(|| runs.clone());
            let written = report::write_report(&out, &cells, format == "md", plots)?;
            print!("{}", report::metric_table(&cells, Metric::Acc, format == "md"));
            println!(
                "report: {} runs -> {}",
                metrics.len(),
                written
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        Command::DumpGenerated {
            run,
            view,
            source,
            count,
            data,
            out,
        } => {
            if count == 0 {
                return Err(Error::Invalid(
                    "count must be >= 1; nothing to render".into(),
                ));
            }
            let info = read_run_config(&run.join("config.json"))?;
            let data_path = data.or(info.dataset_path).ok_or_else(|| {
                Error::Invalid("run config records no dataset path; pass --data".into())
            })?;
            let dataset = load_dataset(&data_path)?;
            let ckpt = load_checkpoint(&run.join("checkpoint.bin"))?;
            let source = source.unwrap_or(usize::from(view == 0));
            if source == view || source >= dataset.num_views() || view >= dataset.num_views() {
                return Err(Error::Invalid(format!(
                    "bad view pair: target {view}, source {source}"
                )));
            }
            let grid = viz::generation_grid(&dataset, &ckpt.model, view, source, count)?;
            let out = out.unwrap_or_else(|| {
                run.join(format!("generated_samples/view_{view}_from_{source}.png"))
            });
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            warn_overwrite(&out);
            viz::save_gray_png(&out, &grid)?;
            println!(
                "grid ({} columns) -> {}",
                count.min(dataset.num_samples()),
                out.display()
            );
        }
        Command::SynthData { preset, seed, out } => {
            warn_overwrite(&out);
            let (dataset, shapes) = match preset.as_str() {
                "hw" => (synth::hw_like(seed).generate()?, None),
                _ => {
                    let ds = synth::image_like(seed)?;
                    let shapes = Some(ds.image_shapes.clone());
                    (ds, shapes)
                }
            };
            dataio::write_dataset_dir(
                &out,
                &dataset.name,
                &dataset.views,
                &dataset.labels,
                dataset.k,
                shapes,
            )?;
            println!(
                "dataset {}: {} samples, {} views -> {}",
                dataset.name,
                dataset.num_samples(),
                dataset.num_views(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
