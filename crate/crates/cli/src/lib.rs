//! Command implementations behind the `online-spo` binary: run an experiment
//! grid from a TOML config into a CSV, plot a CSV as SVG, and run the fast
//! self-check suite.

pub mod config;
pub mod output;
pub mod plot;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use online_spo::simulate::run_trials;
use online_spo::verify::{format_report, run_verify, VerifyHooks};

pub use config::RunConfig;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "ONLINE_SPO_WORKERS";

pub const DEFAULT_OUTPUT: &str = "results.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{0}")]
    Empty(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    CsvLib(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] online_spo::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Command-line overrides for `run`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output: PathBuf,
    pub rows: usize,
    pub undefined_regret: usize,
}

pub fn run_config(config: &RunConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let seed = opts.seed.unwrap_or(config.seed);
    let plan = config.plan(seed)?;
    let workers = opts.workers.or(config.workers).unwrap_or(0);
    let rows = run_trials(&plan, workers)?;
    let output = opts
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(&output).map_err(io_err(&output))?;
    let undefined = output::write_rows(
        BufWriter::new(file),
        plan.instance.name(),
        &plan.arms,
        &rows,
        config.record_timing,
    )?;
    Ok(RunReport {
        output,
        rows: rows.len(),
        undefined_regret: undefined,
    })
}

pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let text = fs::read_to_string(config_path).map_err(io_err(config_path))?;
    let config = RunConfig::parse(&text)?;
    run_config(&config, opts)
}

fn instance_path(svg: &Path, instance: &str) -> PathBuf {
    let stem = svg.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    svg.with_file_name(format!("{stem}_{instance}.svg"))
}

/// Writes one SVG per instance in the CSV. With a single instance the SVG goes
/// to `svg`; otherwise to `<stem>_<instance>.svg` beside it.
pub fn cmd_plot(csv: &Path, svg: &Path) -> Result<Vec<PathBuf>, CliError> {
    let file = File::open(csv).map_err(io_err(csv))?;
    let rows = output::read_rows(file)?;
    if rows.is_empty() {
        return Err(CliError::Empty(format!("{}: no data rows", csv.display())));
    }
    let groups = plot::by_instance(&rows);
    let single = groups.len() == 1;
    let mut written = Vec::new();
    for (instance, group) in &groups {
        let Some(doc) = plot::render_svg(instance, group) else {
            continue;
        };
        let path = if single { svg.to_path_buf() } else { instance_path(svg, instance) };
        let mut f = File::create(&path).map_err(io_err(&path))?;
        f.write_all(doc.as_bytes()).map_err(io_err(&path))?;
        written.push(path);
    }
    if written.is_empty() {
        return Err(CliError::Empty(format!("{}: no plottable values", csv.display())));
    }
    Ok(written)
}

/// Runs the self-check suite and returns whether every check passed along
/// with the printed table.
pub fn cmd_verify(hooks: &VerifyHooks) -> (bool, String) {
    let results = run_verify(hooks);
    (results.iter().all(|r| r.passed), format_report(&results))
}
