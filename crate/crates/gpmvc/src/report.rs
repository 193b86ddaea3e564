//! Sweep execution and result aggregation: run grids of (ratio, seed, mode)
//! pipelines in parallel worker threads, then reduce their `metrics.json`
//! files into mean +/- std tables and metric-vs-ratio curves.
//!
//! Aggregation always re-reads the per-run `metrics.json` from disk, so a
//! report over a finished sweep directory reproduces the sweep's own summary
//! exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataio::{load_dataset, make_partial_split, MultiViewDataset};
use crate::error::{Error, Result};
use crate::trainer::{
    read_metrics, run_pipeline_with_split, AblationMode, MetricsFile, RunSink, TrainConfig,
};
use crate::viz::{line_chart_svg, Series};

fn default_ratios() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

fn default_repeats() -> usize {
    10
}

fn default_modes() -> Vec<AblationMode> {
    vec![AblationMode::All]
}

/// Sweep definition: a dataset, the impartial-ratio grid, seeded repeats,
/// and the ablation modes to cover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Path to the dataset `manifest.json`.
    pub data: PathBuf,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_modes")]
    pub modes: Vec<AblationMode>,
    #[serde(default)]
    pub config: TrainConfig,
    /// Output directory for run subdirectories and the summary artifacts.
    pub out: PathBuf,
    /// Worker threads; defaults to the machine's available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
}

pub fn parse_sweep_spec(bytes: &[u8]) -> Result<SweepSpec> {
    let spec: SweepSpec = serde_json::from_slice(bytes)?;
    if spec.ratios.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one ratio".into()));
    }
    for &r in &spec.ratios {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::RatioOutOfRange(r));
        }
    }
    if spec.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()));
    }
    if spec.modes.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one mode".into()));
    }
    Ok(spec)
}

/// One (mode, ratio, seed) cell of a sweep.
#[derive(Debug, Clone)]
struct RunTask {
    mode: AblationMode,
    ratio: f64,
    seed: u64,
    dir: PathBuf,
}

/// A failed run, kept alongside the aggregate rather than aborting the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct FailedRun {
    pub dir: PathBuf,
    pub error: String,
}

pub struct SweepOutcome {
    pub metrics: Vec<MetricsFile>,
    pub failures: Vec<FailedRun>,
}

/// Execute every (mode, ratio, repeat) cell with `seed = base_seed + repeat`,
/// writing one run directory per cell under `out/runs`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    let dataset = load_dataset(&spec.data)?;
    let runs_dir = spec.out.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;

    let mut tasks = Vec::new();
    for &mode in &spec.modes {
        for &ratio in &spec.ratios {
            for rep in 0..spec.repeats {
                let seed = spec.base_seed + rep as u64;
                let dir = runs_dir.join(format!("{}_r{}_s{}", mode.as_str(), ratio, seed));
                tasks.push(RunTask {
                    mode,
                    ratio,
                    seed,
                    dir,
                });
            }
        }
    }

    let workers = spec
        .workers
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .clamp(1, tasks.len().max(1));

    let queue: Mutex<Vec<RunTask>> = Mutex::new(tasks);
    let failures: Mutex<Vec<FailedRun>> = Mutex::new(Vec::new());
    let data_path = spec.data.clone();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let task = match queue.lock().unwrap().pop() {
                    Some(t) => t,
                    None => break,
                };
                let result = run_one(&dataset, &data_path, spec, &task);
                if let Err(e) = result {
                    failures.lock().unwrap().push(FailedRun {
                        dir: task.dir.clone(),
                        error: e.to_string(),
                    });
                }
            });
        }
    });

    let failures = failures.into_inner().unwrap();
    let metrics = collect_metrics(&runs_dir)?;
    if metrics.is_empty() {
        return Err(Error::Invalid(format!(
            "no run completed; first failure: {}",
            failures
                .first()
                .map(|f| f.error.clone())
                .unwrap_or_default()
        )));
    }
    Ok(SweepOutcome { metrics, failures })
}

fn run_one(
    dataset: &MultiViewDataset,
    data_path: &Path,
    spec: &SweepSpec,
    task: &RunTask,
) -> Result<()> {
    let split = make_partial_split(dataset, task.ratio, task.seed)?;
    let config = TrainConfig {
        seed: task.seed,
        ablation_mode: task.mode,
        ..spec.config.clone()
    };
    let sink = RunSink {
        dir: task.dir.clone(),
        dataset_path: Some(data_path.to_path_buf()),
    };
    run_pipeline_with_split(dataset, &split, &config, Some(&sink))?;
    Ok(())
}

/// Recursively gather `metrics.json` files under a directory (one per run).
pub fn collect_metrics(root: &Path) -> Result<Vec<MetricsFile>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "metrics.json") {
                found.push(read_metrics(&path)?);
            }
        }
    }
    found.sort_by(|a, b| {
        (a.mode.as_str(), a.ratio.to_bits(), a.seed).cmp(&(
            b.mode.as_str(),
            b.ratio.to_bits(),
            b.seed,
        ))
    });
    Ok(found)
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One aggregated cell: metric mean +/- std over the repeats of a
/// (mode, ratio) pair.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub mode: String,
    pub ratio: f64,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    pub purity_mean: f64,
    pub purity_std: f64,
}

/// Group per-run metrics into (mode, ratio) cells.
pub fn aggregate(metrics: &[MetricsFile]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(String, u64), Vec<&MetricsFile>> = BTreeMap::new();
    for m in metrics {
        groups
            .entry((m.mode.clone(), m.ratio.to_bits()))
            .or_default()
            .push(m);
    }
    groups
        .into_iter()
        .map(|((mode, ratio_bits), runs)| {
            let acc: Vec<f64> = runs.iter().map(|m| m.acc).collect();
            let nmi: Vec<f64> = runs.iter().map(|m| m.nmi).collect();
            let purity: Vec<f64> = runs.iter().map(|m| m.purity).collect();
            let (acc_mean, acc_std) = mean_std(&acc);
            let (nmi_mean, nmi_std) = mean_std(&nmi);
            let (purity_mean, purity_std) = mean_std(&purity);
            CellSummary {
                mode,
                ratio: f64::from_bits(ratio_bits),
                runs: runs.len(),
                acc_mean,
                acc_std,
                nmi_mean,
                nmi_std,
                purity_mean,
                purity_std,
            }
        })
        .collect()
}

/// Raw per-cell summary CSV.
pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from(
        "mode,ratio,runs,acc_mean,acc_std,nmi_mean,nmi_std,purity_mean,purity_std\n",
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.mode,
            c.ratio,
            c.runs,
            c.acc_mean,
            c.acc_std,
            c.nmi_mean,
            c.nmi_std,
            c.purity_mean,
            c.purity_std
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Acc,
    Nmi,
    Purity,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Acc => "ACC",
            Metric::Nmi => "NMI",
            Metric::Purity => "Purity",
        }
    }

    fn pick(&self, c: &CellSummary) -> (f64, f64) {
        match self {
            Metric::Acc => (c.acc_mean, c.acc_std),
            Metric::Nmi => (c.nmi_mean, c.nmi_std),
            Metric::Purity => (c.purity_mean, c.purity_std),
        }
    }
}

/// A mode-by-ratio table of `mean+/-std` cells for one metric, in the
/// benchmark-table style: one row per mode, one column per ratio.
pub fn metric_table(cells: &[CellSummary], metric: Metric, markdown: bool) -> String {
    let mut ratios: Vec<f64> = cells.iter().map(|c| c.ratio).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ratios.dedup();
    let mut modes: Vec<String> = cells.iter().map(|c| c.mode.clone()).collect();
    modes.sort();
    modes.dedup();

    let cell_text = |mode: &str, ratio: f64| -> String {
        cells
            .iter()
            .find(|c| c.mode == mode && c.ratio == ratio)
            .map(|c| {
                let (mean, std) = metric.pick(c);
                format!("{mean:.4}\u{00b1}{std:.4}")
            })
            .unwrap_or_else(|| "-".into())
    };

    let mut out = String::new();
    if markdown {
        let _ = write!(out, "| {} |", metric.name());
        for r in &ratios {
            let _ = write!(out, " {r} |");
        }
        out.push('\n');
        let _ = write!(out, "|---|");
        for _ in &ratios {
            let _ = write!(out, "---|");
        }
        out.push('\n');
        for mode in &modes {
            let _ = write!(out, "| {mode} |");
            for &r in &ratios {
                let _ = write!(out, " {} |", cell_text(mode, r));
            }
            out.push('\n');
        }
    } else {
        let _ = write!(out, "{}", metric.name().to_lowercase());
        for r in &ratios {
            let _ = write!(out, ",{r}");
        }
        out.push('\n');
        for mode in &modes {
            let _ = write!(out, "{mode}");
            for &r in &ratios {
                let _ = write!(out, ",{}", cell_text(mode, r));
            }
            out.push('\n');
        }
    }
    out
}

/// Metric-vs-ratio curves, one series per mode.
pub fn metric_chart(cells: &[CellSummary], metric: Metric) -> String {
    let mut modes: Vec<String> = cells.iter().map(|c| c.mode.clone()).collect();
    modes.sort();
    modes.dedup();
    let series: Vec<Series> = modes
        .iter()
        .map(|mode| Series {
            name: mode.clone(),
            points: cells
                .iter()
                .filter(|c| &c.mode == mode)
                .map(|c| (c.ratio, metric.pick(c).0))
                .collect(),
        })
        .collect();
    line_chart_svg(
        &format!("mean {} by impartial ratio", metric.name()),
        "impartial ratio",
        metric.name(),
        &series,
    )
}

/// Write the summary artifacts for a set of per-run metrics: the per-cell
/// CSV, an ACC table (CSV or markdown), and NMI / Purity curve SVGs.
pub fn write_report(
    dir: &Path,
    cells: &[CellSummary],
    markdown: bool,
    plots: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let summary = dir.join("summary.csv");
    std::fs::write(&summary, summary_csv(cells)).map_err(|e| Error::io(&summary, e))?;
    written.push(summary);

    let table_name = if markdown { "acc_table.md" } else { "acc_table.csv" };
    let table = dir.join(table_name);
    std::fs::write(&table, metric_table(cells, Metric::Acc, markdown))
        .map_err(|e| Error::io(&table, e))?;
    written.push(table);

    if plots {
        for metric in [Metric::Nmi, Metric::Purity] {
            let path = dir.join(format!("{}.svg", metric.name().to_lowercase()));
            std::fs::write(&path, metric_chart(cells, metric)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
