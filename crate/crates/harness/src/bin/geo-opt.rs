use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geo_core::metrics::metric_report;
use geo_core::portfolio::{
    compute_returns, read_orlib_port, read_price_csv, FrontierKind, FrontierSet, Objective, PortfolioInstance,
};
use geo_harness::experiment::{check_parity, run_cells, run_experiment_with, RunOptions};
use geo_harness::report::MetricRow;
use geo_harness::spec::build_instance;
use geo_harness::{EmitFormat, ExperimentSpec, HarnessError, Result};

/// Generator-enhanced portfolio optimization experiments.
#[derive(Parser)]
#[command(name = "geo-opt", version)]
struct Cli {
    /// Experiment spec (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the root seed of the spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the spec's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an instance from price or OR-Library data.
    Ingest(IngestArgs),
    /// Unconstrained efficient frontier of an instance.
    Frontier {
        /// Instance JSON; defaults to the spec's instance.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Run experiment cells and write their manifests.
    Run {
        /// Only this roster label.
        #[arg(long)]
        solver: Option<String>,
        /// Only this repetition.
        #[arg(long)]
        repetition: Option<usize>,
    },
    /// Frontier metrics of a heuristic frontier against a standard one.
    Metrics {
        #[arg(long)]
        standard: PathBuf,
        #[arg(long)]
        heuristic: PathBuf,
    },
    /// Run (or resume) the whole experiment and emit the report.
    Compare {
        #[arg(long, value_enum, default_value_t = EmitFormat::Csv)]
        format: EmitFormat,
    },
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false)]
struct IngestSource {
    /// Price CSV: a date column followed by one column per asset.
    #[arg(long, group = "source")]
    prices: Option<PathBuf>,
    /// OR-Library port file.
    #[arg(long, group = "source")]
    orlib: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    source: IngestSource,
    #[arg(long)]
    kappa: usize,
    /// Return target (default: mean asset return).
    #[arg(long, conflicts_with = "lambda")]
    rho: Option<f64>,
    /// Risk aversion in [0, 1].
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    lower: f64,
    #[arg(long, default_value_t = 1.0)]
    upper: f64,
}

fn out_dir(cli: &Cli, spec: Option<&ExperimentSpec>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| spec.and_then(|s| s.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_spec(cli: &Cli) -> Result<ExperimentSpec> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::Config("this command needs --config".into()))?;
    let mut spec = ExperimentSpec::load(path)?;
    if let Some(s) = cli.seed {
        spec.root_seed = s;
    }
    spec.output_dir = Some(out_dir(cli, Some(&spec)));
    Ok(spec)
}

fn write(path: &Path, bytes: Vec<u8>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.into(), source })?;
    }
    fs::write(path, bytes).map_err(|source| HarnessError::Io { path: path.into(), source })
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    write(path, b)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| HarnessError::Io { path: path.into(), source })
}

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<()> {
    let stats = match (&a.source.prices, &a.source.orlib) {
        (Some(p), _) => compute_returns(&read_price_csv(open(p)?, "prices")?)?,
        (_, Some(p)) => read_orlib_port(open(p)?)?,
        _ => unreachable!("clap requires one source"),
    };
    let objective = match (a.rho, a.lambda) {
        (Some(rho), _) => Some(Objective::ReturnTarget { rho }),
        (_, Some(lambda)) => Some(Objective::RiskAversion { lambda }),
        _ => None,
    };
    let inst = build_instance(stats, a.kappa, objective, a.lower, a.upper)?;
    let path = out_dir(cli, None).join("instance.json");
    write_json(&path, &inst)?;
    println!("{} assets, kappa {}: {}", inst.n_assets(), inst.cardinality(), path.display());
    Ok(())
}

fn frontier(cli: &Cli, instance: &Option<PathBuf>, points: usize) -> Result<()> {
    let (inst, out) = match instance {
        Some(p) => {
            let inst: PortfolioInstance = serde_json::from_reader(open(p)?)?;
            (inst, out_dir(cli, None))
        }
        None => {
            let spec = load_spec(cli)?;
            (spec.load_instance()?, out_dir(cli, Some(&spec)))
        }
    };
    let f = inst.standard_frontier(points)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in f.points() {
        w.serialize(p)?;
    }
    let csv = w.into_inner().map_err(|e| HarnessError::Config(format!("csv buffer: {e}")))?;
    write(&out.join("frontier.csv"), csv)?;
    write_json(&out.join("frontier.json"), &f)?;
    println!("{} frontier points in {}", f.len(), out.display());
    Ok(())
}

fn run(cli: &Cli, solver: &Option<String>, repetition: Option<usize>) -> Result<()> {
    let spec = load_spec(cli)?;
    let inst = spec.load_instance()?;
    let opts = RunOptions {
        jobs: cli.jobs,
        only_label: solver.clone(),
        only_repetition: repetition,
    };
    let cells = run_cells(&spec, &inst, &opts)?;
    check_parity(&spec, &cells)?;
    for c in &cells {
        let best = c.runs.iter().map(|r| r.final_cost()).fold(f64::INFINITY, f64::min);
        let calls: usize = c.runs.iter().map(|r| r.evaluations).sum();
        println!("{}\tseed {}\tcalls {calls}\tbest {best}", c.cell_name(), c.seed);
    }
    Ok(())
}

fn metrics(cli: &Cli, standard: &Path, heuristic: &Path) -> Result<()> {
    let s: FrontierSet = serde_json::from_reader(open(standard)?)?;
    let h: FrontierSet = serde_json::from_reader(open(heuristic)?)?;
    if s.kind != FrontierKind::Standard {
        log::warn!("{} is not marked as a standard frontier", standard.display());
    }
    let report = metric_report(&s.efficient_branch(), &h)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let out = out_dir(cli, None);
    let row = MetricRow::new("heuristic", 0, &report);
    write_json(&out.join("metrics.json"), &[&row])?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(&row)?;
    let csv = w.into_inner().map_err(|e| HarnessError::Config(format!("csv buffer: {e}")))?;
    write(&out.join("metrics.csv"), csv)?;
    let [mean, median, min, max, meucd, vre, mre] = report.row();
    println!("mean {mean}\tmedian {median}\tmin {min}\tmax {max}\tmeucd {meucd}\tvre {vre}\tmre {mre}");
    Ok(())
}

fn compare(cli: &Cli, format: EmitFormat) -> Result<()> {
    let spec = load_spec(cli)?;
    let summary = run_experiment_with(&spec, cli.jobs, format)?;
    for s in &summary.solvers {
        match (&s.final_cost, &s.pde_mean) {
            (Some(b), _) => println!("{}\tmedian {}\t[{}, {}]", s.label, b.median, b.lo, b.hi),
            (_, Some(b)) => println!("{}\tpde_mean {}\t[{}, {}]", s.label, b.median, b.lo, b.hi),
            _ => println!("{}", s.label),
        }
    }
    for e in &summary.enhancements {
        if let Some(p) = e.percent {
            println!("{} over {}: {p:.4}%", e.geo, e.classical);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GEO_OPT_LOG", "warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Ingest(a) => ingest(&cli, a),
        Command::Frontier { instance, points } => frontier(&cli, instance, *points),
        Command::Run { solver, repetition } => run(&cli, solver, *repetition),
        Command::Metrics { standard, heuristic } => metrics(&cli, standard, heuristic),
        Command::Compare { format } => compare(&cli, *format),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
