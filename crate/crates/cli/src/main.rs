use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rssaoa::bench::{self, BenchError};
use rssaoa::config::{self, presets, ConfigError, CrlbMapConfig, LoadError, ScenarioConfig, SimulationConfig};
use rssaoa::synthesis::SeriesCsvError;
use rssaoa::{Method, MeasurementSeries, Stage};

#[derive(Parser)]
#[command(name = "rssaoa", version, about = "Hybrid RSS-AOA localization toolkit")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one measurement series and write it as CSV.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the target position from a series CSV.
    Estimate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        series: PathBuf,
        #[arg(long, default_value = "proposed")]
        method: Method,
        /// Also write the estimate as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo RMSE report (CSV, plus JSON next to it).
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// CRLB heatmaps, one CSV and one matrix file per mode.
    CrlbMap {
        #[command(flatten)]
        source: Source,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-fix runtime of each method.
    Bench {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a bundled configuration.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte-Carlo runs per point.
    #[arg(long)]
    mc: Option<usize>,
    /// Restrict to one method.
    #[arg(long)]
    method: Option<Method>,
}

enum Failure {
    Config(String),
    Csv(String),
    Other(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Csv(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Csv(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io(..) => Failure::Other(e.to_string()),
            LoadError::Config(c) => c.into(),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(c) => c.into(),
            BenchError::Simulation(e) => Failure::Other(e.to_string()),
        }
    }
}

impl From<rssaoa::Error> for Failure {
    fn from(e: rssaoa::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Other(format!("{}: {e}", path.display()))
}

fn load<T: serde::de::DeserializeOwned>(source: &Source) -> CliResult<T> {
    match (&source.config, &source.preset) {
        (Some(path), _) => Ok(config::load_json(path)?),
        (None, Some(name)) => {
            let text = presets::text(name).ok_or_else(|| {
                let names: Vec<&str> = presets::ALL.iter().map(|(n, _, _)| *n).collect();
                Failure::Config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
            })?;
            Ok(config::parse_json(text)?)
        }
        (None, None) => unreachable!("clap requires a source"),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(io_err(path))
}

fn csv_write_err(path: &Path) -> impl FnOnce(csv::Error) -> Failure + '_ {
    move |e| Failure::Other(format!("{}: {e}", path.display()))
}

fn apply_mc(config: &mut ScenarioConfig, mc: &McArgs) -> CliResult<()> {
    if let Some(seed) = mc.seed {
        config.seed = seed;
    }
    if let Some(runs) = mc.mc {
        config.mc_runs = runs;
    }
    if let Some(method) = mc.method {
        config.methods = vec![method];
    }
    config.validate()?;
    Ok(())
}

fn simulate(source: &Source, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut cfg: SimulationConfig = load(source)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let series = cfg.simulate()?;
    let w = create(out)?;
    series
        .write_csv(w)
        .map_err(|e| Failure::Other(format!("{}: {e}", out.display())))?;
    log::info!(
        "wrote {} anchors x {} steps to {}",
        series.n_anchors(),
        series.t_steps(),
        out.display()
    );
    Ok(())
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Stage1 => "stage1",
        Stage::Stage2 => "stage2",
        Stage::Baseline => "baseline",
    }
}

fn estimate(source: &Source, series_path: &Path, method: Method, out: Option<&Path>) -> CliResult<()> {
    let cfg: SimulationConfig = load(source)?;
    cfg.validate_layout()?;
    let anchors = cfg.anchor_points()?;
    let file = File::open(series_path).map_err(io_err(series_path))?;
    let series = MeasurementSeries::read_csv(BufReader::new(file)).map_err(|e| match e {
        SeriesCsvError::Io(e) => Failure::Other(format!("{}: {e}", series_path.display())),
        e => Failure::Csv(format!("{}: {e}", series_path.display())),
    })?;
    if series.n_anchors() != anchors.len() {
        return Err(Failure::Csv(format!(
            "{}: series has {} anchors but the config lists {}",
            series_path.display(),
            series.n_anchors(),
            anchors.len()
        )));
    }
    let est = method.estimate(&series, &anchors, &cfg.path_loss)?;
    let p = est.position;
    let mut report = json!({
        "method": method.name(),
        "position": [p.x, p.y, p.z],
        "stage": stage_name(est.stage),
        "condition_flag": est.condition_flag,
        "condition_number": est.condition_number,
    });
    if let Some(t) = cfg.target_point()? {
        report["error_m"] = json!((p - t).norm());
    }
    println!("method: {}", method.name());
    println!("position: {:.6} {:.6} {:.6}", p.x, p.y, p.z);
    println!("stage: {}", stage_name(est.stage));
    println!("condition_flag: {}", est.condition_flag);
    println!("{report}");
    if let Some(path) = out {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Other(e.to_string()))?;
        writeln!(w).map_err(io_err(path))?;
        finish(w, path)?;
    }
    Ok(())
}

fn sweep(source: &Source, mc: &McArgs, out: &Path) -> CliResult<()> {
    let mut cfg: ScenarioConfig = load(source)?;
    apply_mc(&mut cfg, mc)?;
    let report = bench::run(&cfg)?;
    let w = create(out)?;
    report.write_csv(w).map_err(csv_write_err(out))?;
    let json_path = out.with_extension("json");
    let mut w = create(&json_path)?;
    report
        .write_json(&mut w)
        .map_err(|e| Failure::Other(format!("{}: {e}", json_path.display())))?;
    writeln!(w).map_err(io_err(&json_path))?;
    finish(w, &json_path)?;
    for point in &report.points {
        for m in &point.methods {
            log::info!(
                "{} {:?}: rmse {:.4} m, crlb {:?}, failures {}",
                m.method,
                point.sweep_value,
                m.rmse_m,
                point.crlb_m,
                m.failures
            );
        }
    }
    Ok(())
}

fn crlb_map(source: &Source, out: &Path) -> CliResult<()> {
    let cfg: CrlbMapConfig = load(source)?;
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    for grid in cfg.compute()? {
        let mode = grid.mode;
        let csv_path = out.join(format!("crlb_{}.csv", mode.name()));
        grid.write_csv(create(&csv_path)?).map_err(csv_write_err(&csv_path))?;
        let txt_path = out.join(format!("crlb_{}.txt", mode.name()));
        let mut w = create(&txt_path)?;
        grid.write_matrix(&mut w).map_err(io_err(&txt_path))?;
        finish(w, &txt_path)?;
        log::info!(
            "{}: {} points, {} masked",
            mode.name(),
            grid.values.len(),
            grid.masked_count()
        );
    }
    Ok(())
}

fn bench_cmd(source: &Source, mc: &McArgs, out: &Path) -> CliResult<()> {
    let mut cfg: ScenarioConfig = load(source)?;
    apply_mc(&mut cfg, mc)?;
    let entries = bench::runtime_profile(&cfg)?;
    bench::write_runtime_csv(&entries, create(out)?).map_err(csv_write_err(out))?;
    for e in &entries {
        println!(
            "{} N={} T={}: {:.3e} s per fix",
            e.method, e.n_anchors, e.t_steps, e.mean_runtime_s
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate { source, out, seed } => simulate(source, out, *seed),
        Command::Estimate {
            source,
            series,
            method,
            out,
        } => estimate(source, series, *method, out.as_deref()),
        Command::Sweep { source, mc, out } => sweep(source, mc, out),
        Command::CrlbMap { source, out } => crlb_map(source, out),
        Command::Bench { source, mc, out } => bench_cmd(source, mc, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
