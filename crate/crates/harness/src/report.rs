//! Cross-solver summary and the emitted data files.

use std::fs;
use std::path::{Path, PathBuf};

use geo_core::baselines::{CONDITIONED_RANDOM_SOLVER, RANDOM_SOLVER, SA_SOLVER};
use geo_core::engine::{HistoryPoint, Origin, BOOSTER_SOLVER, STANDALONE_SOLVER};
use geo_core::metrics::{relative_enhancement, MetricReport};
use geo_core::portfolio::{FrontierSet, PortfolioInstance};
use geo_core::rng::derive_seed;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_median_ci, Band};
use crate::error::{io_err, HarnessError, Result};
use crate::experiment::{CellManifest, HistogramBin};
use crate::spec::ExperimentSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmitFormat {
    Csv,
    Json,
}

impl EmitFormat {
    fn ext(self) -> &'static str {
        match self {
            EmitFormat::Csv => "csv",
            EmitFormat::Json => "json",
        }
    }
}

/// Median best cost across repetitions after `evals_used` calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBand {
    pub evals_used: usize,
    #[serde(flatten)]
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub repetition: usize,
    pub seed: u64,
    /// Oracle calls summed over the repetition's runs.
    pub oracle_calls: usize,
    /// Absent in sweep mode.
    pub final_cost: Option<Cost>,
    pub seed_best: Option<Cost>,
    pub outstanding_count: usize,
    pub history: Vec<HistoryPoint>,
    pub histogram: Vec<HistogramBin>,
    pub metrics: Option<MetricReport>,
}

/// A cost that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost(#[serde(with = "geo_core::serde_cost")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub label: String,
    pub solver: String,
    pub final_cost: Option<Band>,
    pub trace: Vec<TraceBand>,
    /// Sweep mode: band of the per-repetition mean PDE.
    pub pde_mean: Option<Band>,
    pub repetitions: Vec<RepetitionSummary>,
}

/// Enhancement of a GEO entry over a classical one, on median final costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enhancement {
    pub classical: String,
    pub geo: String,
    pub c_classical: Cost,
    pub c_geo: Cost,
    /// Percent; absent when undefined (zero or infinite classical cost).
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub name: String,
    pub instance_fingerprint: String,
    pub budget: usize,
    pub repetitions: usize,
    pub root_seed: u64,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub solvers: Vec<SolverSummary>,
    pub enhancements: Vec<Enhancement>,
    /// Sweep mode: efficient branch of the unconstrained frontier.
    pub standard_frontier: Option<FrontierSet>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub solver: String,
    pub repetition: usize,
    pub evals_used: usize,
    #[serde(with = "geo_core::serde_cost")]
    pub best_cost: f64,
}

/// One metric-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub solver: String,
    pub repetition: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub meucd: f64,
    pub vre: f64,
    pub mre: f64,
}

impl MetricRow {
    pub fn new(solver: &str, repetition: usize, m: &MetricReport) -> Self {
        let [mean, median, min, max, meucd, vre, mre] = m.row();
        MetricRow {
            solver: solver.to_string(),
            repetition,
            mean,
            median,
            min,
            max,
            meucd,
            vre,
            mre,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub solver: String,
    pub repetition: usize,
    #[serde(with = "geo_core::serde_cost")]
    pub cost: f64,
    pub origin: Origin,
    pub count: usize,
}

const GPYOPT_NOTE: &str =
    "the Bayesian-optimization (GPyOpt) reference strategy is not part of the registry and is excluded";

fn is_classical(solver: &str) -> bool {
    matches!(solver, SA_SOLVER | CONDITIONED_RANDOM_SOLVER | RANDOM_SOLVER)
}

fn is_geo(solver: &str) -> bool {
    matches!(solver, STANDALONE_SOLVER | BOOSTER_SOLVER)
}

/// Budget checkpoints `ceil(k B / points)` for `k = 1..=points`, deduplicated.
pub fn checkpoints(budget: usize, points: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=points).map(|k| (k * budget).div_ceil(points)).collect();
    out.dedup();
    out
}

/// Aggregates cell manifests (in roster then repetition order) per roster label.
pub fn summarize(spec: &ExperimentSpec, instance: &PortfolioInstance, cells: &[CellManifest]) -> Result<ComparisonSummary> {
    let sweep = spec.sweep.is_some();
    let marks = checkpoints(spec.budget, spec.trace_points);
    let band = |label: &str, what: &str, idx: usize, xs: &[f64]| {
        let seed = derive_seed(spec.root_seed, &format!("bootstrap/{label}/{what}"), idx as u64);
        bootstrap_median_ci(xs, spec.bootstrap_resamples, spec.confidence, seed)
    };
    let mut solvers = Vec::new();
    for s in &spec.solvers {
        let label = s.label();
        let mine: Vec<&CellManifest> = cells.iter().filter(|c| c.label == label).collect();
        if mine.is_empty() {
            continue;
        }
        let repetitions: Vec<RepetitionSummary> = mine
            .iter()
            .map(|c| {
                let single = (!sweep).then(|| &c.runs[0]);
                RepetitionSummary {
                    repetition: c.repetition,
                    seed: c.seed,
                    oracle_calls: c.runs.iter().map(|r| r.evaluations).sum(),
                    final_cost: single.map(|r| Cost(r.final_cost())),
                    seed_best: single.and_then(|r| r.seed_best).map(Cost),
                    outstanding_count: c.runs.iter().map(|r| r.outstanding_count).sum(),
                    history: single.map(|r| r.history.clone()).unwrap_or_default(),
                    histogram: single.map(|r| r.histogram.clone()).unwrap_or_default(),
                    metrics: c.metrics.clone(),
                }
            })
            .collect();
        let (final_cost, trace, pde_mean) = if sweep {
            let pdes: Vec<f64> = repetitions.iter().filter_map(|r| r.metrics.as_ref().map(|m| m.pde_mean)).collect();
            let pde_mean = if pdes.is_empty() { None } else { Some(band(label, "pde", 0, &pdes)?) };
            (None, Vec::new(), pde_mean)
        } else {
            let finals: Vec<f64> = mine.iter().map(|c| c.runs[0].final_cost()).collect();
            let trace = marks
                .iter()
                .enumerate()
                .map(|(k, &e)| {
                    let xs: Vec<f64> = mine.iter().map(|c| c.runs[0].best_at(e)).collect();
                    Ok(TraceBand {
                        evals_used: e,
                        band: band(label, "trace", k, &xs)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(band(label, "final", 0, &finals)?), trace, None)
        };
        solvers.push(SolverSummary {
            label: label.to_string(),
            solver: mine[0].solver.clone(),
            final_cost,
            trace,
            pde_mean,
            repetitions,
        });
    }
    let mut enhancements = Vec::new();
    for cl in solvers.iter().filter(|s| is_classical(&s.solver)) {
        for geo in solvers.iter().filter(|s| is_geo(&s.solver)) {
            if let (Some(a), Some(b)) = (cl.final_cost, geo.final_cost) {
                enhancements.push(Enhancement {
                    classical: cl.label.clone(),
                    geo: geo.label.clone(),
                    c_classical: Cost(a.median),
                    c_geo: Cost(b.median),
                    percent: relative_enhancement(a.median, b.median).ok(),
                });
            }
        }
    }
    let standard_frontier = match spec.sweep {
        Some(_) => Some(instance.standard_frontier(spec.frontier_points)?.efficient_branch()),
        None => None,
    };
    Ok(ComparisonSummary {
        name: spec.name.clone(),
        instance_fingerprint: instance.fingerprint(),
        budget: spec.budget,
        repetitions: spec.repetitions,
        root_seed: spec.root_seed,
        bootstrap_resamples: spec.bootstrap_resamples,
        confidence: spec.confidence,
        solvers,
        enhancements,
        standard_frontier,
        notes: vec![GPYOPT_NOTE.to_string()],
    })
}

impl ComparisonSummary {
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.solvers
            .iter()
            .flat_map(|s| {
                s.repetitions.iter().flat_map(move |r| {
                    r.history.iter().map(move |h| TraceRow {
                        solver: s.label.clone(),
                        repetition: r.repetition,
                        evals_used: h.evals_used,
                        best_cost: h.best_cost,
                    })
                })
            })
            .collect()
    }

    pub fn metric_rows(&self) -> Vec<MetricRow> {
        self.solvers
            .iter()
            .flat_map(|s| {
                s.repetitions
                    .iter()
                    .filter_map(move |r| r.metrics.as_ref().map(|m| MetricRow::new(&s.label, r.repetition, m)))
            })
            .collect()
    }

    pub fn histogram_rows(&self) -> Vec<HistogramRow> {
        self.solvers
            .iter()
            .flat_map(|s| {
                s.repetitions.iter().flat_map(move |r| {
                    r.histogram.iter().map(move |b| HistogramRow {
                        solver: s.label.clone(),
                        repetition: r.repetition,
                        cost: b.cost,
                        origin: b.origin,
                        count: b.count,
                    })
                })
            })
            .collect()
    }
}

fn write_bytes(path: &Path, bytes: Vec<u8>) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn table_bytes<T: Serialize>(rows: &[T], format: EmitFormat, header: &[&str]) -> Result<Vec<u8>> {
    match format {
        EmitFormat::Json => json_bytes(rows),
        EmitFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if rows.is_empty() {
                w.write_record(header)?;
            }
            for r in rows {
                w.serialize(r)?;
            }
            w.into_inner().map_err(|e| HarnessError::Config(format!("csv buffer: {e}")))
        }
    }
}

/// Writes `summary.json` and the trace, metric and histogram tables into
/// `dir`. An empty roster is an error and writes nothing. Returns the paths
/// written.
pub fn emit_report(summary: &ComparisonSummary, dir: &Path, format: EmitFormat) -> Result<Vec<PathBuf>> {
    write_report(summary, dir, format, None)
}

pub(crate) fn write_report(
    summary: &ComparisonSummary,
    dir: &Path,
    format: EmitFormat,
    timings: Option<&[(String, usize, Option<f64>)]>,
) -> Result<Vec<PathBuf>> {
    if summary.solvers.is_empty() {
        return Err(HarnessError::Config("the summary has no solvers; nothing to emit".into()));
    }
    // Render everything before touching the file system.
    let ext = format.ext();
    let mut files = vec![
        ("summary.json".to_string(), json_bytes(summary)?),
        (
            format!("traces.{ext}"),
            table_bytes(&summary.trace_rows(), format, &["solver", "repetition", "evals_used", "best_cost"])?,
        ),
        (
            format!("metrics.{ext}"),
            table_bytes(
                &summary.metric_rows(),
                format,
                &["solver", "repetition", "mean", "median", "min", "max", "meucd", "vre", "mre"],
            )?,
        ),
        (
            format!("histogram.{ext}"),
            table_bytes(&summary.histogram_rows(), format, &["solver", "repetition", "cost", "origin", "count"])?,
        ),
    ];
    if let Some(t) = timings {
        let rows: Vec<serde_json::Value> = t
            .iter()
            .map(|(label, rep, s)| serde_json::json!({"solver": label, "repetition": rep, "seconds": s}))
            .collect();
        files.push(("timing.json".to_string(), json_bytes(&rows)?));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        write_bytes(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a metric table written by [`emit_report`].
pub fn read_metric_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_slice(&bytes)?)
    } else {
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
    }
}
