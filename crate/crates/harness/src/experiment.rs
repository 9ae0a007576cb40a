//! Seeded experiment cells, their manifests and resumption.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use geo_core::engine::{count_outstanding, GeoRunResult, HistoryPoint, Origin};
use geo_core::metrics::{metric_report, MetricReport};
use geo_core::portfolio::{EvaluatedCandidate, FrontierKind, FrontierPoint, FrontierSet, PortfolioInstance};
use geo_core::rng::derive_seed;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, HarnessError, Result};
use crate::registry::Solver;
use crate::report::{summarize, write_report, ComparisonSummary, EmitFormat};
use crate::spec::{ExperimentSpec, SolverSpec};

/// Archive costs of one origin, binned by exact value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    #[serde(with = "geo_core::serde_cost")]
    pub cost: f64,
    pub origin: Origin,
    pub count: usize,
}

/// Compact outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Sweep value the run was made at, if any.
    pub sweep_value: Option<f64>,
    pub best: EvaluatedCandidate,
    /// `(risk, return)` of the best weights; absent when nothing feasible was found.
    pub risk_return: Option<(f64, f64)>,
    /// Best-cost trace reduced to its change points.
    pub history: Vec<HistoryPoint>,
    pub evaluations: usize,
    #[serde(with = "opt_cost")]
    pub seed_best: Option<f64>,
    pub outstanding_count: usize,
    /// Seed- and generator-origin archive costs.
    pub histogram: Vec<HistogramBin>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn from_result(result: &GeoRunResult, inst: &PortfolioInstance, sweep_value: Option<f64>) -> Self {
        let mut history: Vec<HistoryPoint> = Vec::new();
        for h in &result.history {
            if history.last().is_none_or(|l| l.best_cost != h.best_cost) {
                history.push(*h);
            }
        }
        let mut bins: BTreeMap<(Origin, u64), usize> = BTreeMap::new();
        for e in &result.archive {
            if matches!(e.origin, Origin::Seed | Origin::Generator) {
                *bins.entry((e.origin, cost_key(e.candidate.cost))).or_default() += 1;
            }
        }
        let mut histogram: Vec<HistogramBin> = bins
            .into_iter()
            .map(|((origin, key), count)| HistogramBin {
                cost: f64::from_bits(key),
                origin,
                count,
            })
            .collect();
        histogram.sort_by(|a, b| a.origin.cmp(&b.origin).then(a.cost.total_cmp(&b.cost)));
        let outstanding_count = match result.seed_best {
            Some(s) => count_outstanding(result, s),
            None => 0,
        };
        RunRecord {
            sweep_value,
            best: result.best.clone(),
            risk_return: result.best.feasible.then(|| result.best.risk_return(inst)),
            history,
            evaluations: result.evaluations,
            seed_best: result.seed_best,
            outstanding_count,
            histogram,
            warnings: result.warnings.clone(),
        }
    }

    /// Best cost after at most `evals` oracle calls; `+inf` before the first.
    pub fn best_at(&self, evals: usize) -> f64 {
        self.history
            .iter()
            .take_while(|h| h.evals_used <= evals)
            .last()
            .map_or(f64::INFINITY, |h| h.best_cost)
    }

    pub fn final_cost(&self) -> f64 {
        self.history.last().map_or(self.best.cost, |h| h.best_cost.min(self.best.cost))
    }
}

fn cost_key(c: f64) -> u64 {
    // Collapse -0.0 and NaN payloads so equal costs share a bin.
    if c == 0.0 {
        0
    } else if c.is_nan() {
        f64::NAN.to_bits()
    } else {
        c.to_bits()
    }
}

mod opt_cost {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Cost(#[serde(with = "geo_core::serde_cost")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Cost).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Cost>::deserialize(d)?.map(|c| c.0))
    }
}

/// Everything one `(solver, repetition)` cell produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellManifest {
    pub label: String,
    pub solver: String,
    pub repetition: usize,
    pub seed: u64,
    pub instance_fingerprint: String,
    /// Hash of the solver entry, budget, bounds and sweep grid.
    pub config_digest: String,
    pub budget: usize,
    pub runs: Vec<RunRecord>,
    /// Sweep mode: metrics of this repetition's heuristic frontier.
    pub metrics: Option<MetricReport>,
}

impl CellManifest {
    pub fn cell_name(&self) -> String {
        cell_name(&self.label, self.repetition)
    }
}

fn cell_name(label: &str, repetition: usize) -> String {
    format!("{label}/rep-{repetition:04}")
}

/// Where the manifest of a cell lives under `out`.
pub fn manifest_path(out: &Path, label: &str, repetition: usize) -> PathBuf {
    out.join("cells").join(label).join(format!("rep-{repetition:04}.json"))
}

fn timing_path(out: &Path, label: &str, repetition: usize) -> PathBuf {
    out.join("cells").join(label).join(format!("rep-{repetition:04}.timing.json"))
}

/// Seed of a cell; depends only on the root seed, label and repetition.
pub fn cell_seed(root_seed: u64, label: &str, repetition: usize) -> u64 {
    derive_seed(root_seed, label, repetition as u64)
}

pub fn config_digest(spec: &ExperimentSpec, solver: &SolverSpec) -> String {
    let v = serde_json::json!({
        "solver": solver,
        "budget": spec.budget,
        "lower_bound": spec.lower_bound,
        "upper_bound": spec.upper_bound,
        "sweep": spec.sweep,
    });
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

/// Shared inputs of every cell of an experiment.
pub struct Context<'a> {
    pub spec: &'a ExperimentSpec,
    pub instance: &'a PortfolioInstance,
    /// Efficient branch of the standard frontier; sweep mode only.
    pub standard: Option<&'a FrontierSet>,
}

/// Runs one cell from scratch.
pub fn run_cell(ctx: &Context<'_>, solver_spec: &SolverSpec, repetition: usize) -> Result<CellManifest> {
    let solver = Solver::from_spec(solver_spec)?;
    let label = solver_spec.label();
    let seed = cell_seed(ctx.spec.root_seed, label, repetition);
    let budget = ctx.spec.budget;
    let (runs, metrics) = match &ctx.spec.sweep {
        None => {
            let result = solver.run(ctx.instance, budget, seed)?;
            (vec![RunRecord::from_result(&result, ctx.instance, None)], None)
        }
        Some(sweep) => {
            let mut runs = Vec::with_capacity(sweep.values().len());
            for (i, &v) in sweep.values().iter().enumerate() {
                let inst = ctx.instance.with_objective(sweep.objective(v))?;
                let result = solver.run(&inst, budget, derive_seed(seed, "sweep", i as u64))?;
                runs.push(RunRecord::from_result(&result, &inst, Some(v)));
            }
            let points: Vec<FrontierPoint> = runs
                .iter()
                .filter_map(|r| r.risk_return.map(|(risk, ret)| FrontierPoint { risk, ret }))
                .collect();
            let heuristic = FrontierSet::from_unsorted(FrontierKind::Heuristic, points)?;
            let standard = ctx
                .standard
                .ok_or_else(|| HarnessError::Config("sweep mode needs a standard frontier".into()))?;
            (runs, Some(metric_report(standard, &heuristic)?))
        }
    };
    Ok(CellManifest {
        label: label.to_string(),
        solver: solver.name().to_string(),
        repetition,
        seed,
        instance_fingerprint: ctx.instance.fingerprint(),
        config_digest: config_digest(ctx.spec, solver_spec),
        budget,
        runs,
        metrics,
    })
}

/// Reads a completed cell, checking it belongs to this experiment.
/// `Ok(None)` when the cell has not been run yet.
pub fn load_cell(ctx: &Context<'_>, out: &Path, solver_spec: &SolverSpec, repetition: usize) -> Result<Option<CellManifest>> {
    let label = solver_spec.label();
    let path = manifest_path(out, label, repetition);
    if !path.exists() {
        return Ok(None);
    }
    let resume_err = |message: String| HarnessError::Resume {
        cell: cell_name(label, repetition),
        message,
    };
    let bytes = fs::read(&path).map_err(|e| resume_err(format!("{}: {e}", path.display())))?;
    let m: CellManifest =
        serde_json::from_slice(&bytes).map_err(|e| resume_err(format!("{}: {e}", path.display())))?;
    let expected_seed = cell_seed(ctx.spec.root_seed, label, repetition);
    let checks = [
        (m.label == label, "label"),
        (m.repetition == repetition, "repetition"),
        (m.seed == expected_seed, "seed"),
        (m.instance_fingerprint == ctx.instance.fingerprint(), "instance fingerprint"),
        (m.config_digest == config_digest(ctx.spec, solver_spec), "configuration"),
        (!m.runs.is_empty(), "run list"),
    ];
    if let Some((_, what)) = checks.iter().find(|(ok, _)| !ok) {
        return Err(resume_err(format!("{what} does not match the experiment")));
    }
    Ok(Some(m))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

/// Wall time of a cell; kept apart from the manifest so that manifests stay
/// byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub label: String,
    pub repetition: usize,
    pub seconds: f64,
}

/// Which cells to execute and how.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Restrict to one roster label.
    pub only_label: Option<String>,
    /// Restrict to one repetition.
    pub only_repetition: Option<usize>,
}

/// Runs (or resumes) the selected cells, in roster then repetition order.
/// With an output directory, completed cells are reused and new ones
/// written as they finish.
pub fn run_cells(spec: &ExperimentSpec, instance: &PortfolioInstance, opts: &RunOptions) -> Result<Vec<CellManifest>> {
    spec.validate()?;
    if let Some(l) = &opts.only_label {
        if !spec.solvers.iter().any(|s| s.label() == l) {
            return Err(HarnessError::Config(format!("no roster entry labelled {l:?}")));
        }
    }
    if let Some(r) = opts.only_repetition {
        if r >= spec.repetitions {
            return Err(HarnessError::Config(format!("repetition {r} outside 0..{}", spec.repetitions)));
        }
    }
    let standard = match spec.sweep {
        Some(_) => Some(instance.standard_frontier(spec.frontier_points)?.efficient_branch()),
        None => None,
    };
    let ctx = Context {
        spec,
        instance,
        standard: standard.as_ref(),
    };
    let cells: Vec<(&SolverSpec, usize)> = spec
        .solvers
        .iter()
        .filter(|s| opts.only_label.as_deref().is_none_or(|l| l == s.label()))
        .flat_map(|s| {
            (0..spec.repetitions)
                .filter(|r| opts.only_repetition.is_none_or(|o| o == *r))
                .map(move |r| (s, r))
        })
        .collect();
    let out = spec.output_dir.as_deref();
    let work = |&(s, r): &(&SolverSpec, usize)| -> Result<CellManifest> {
        if let Some(out) = out {
            if let Some(m) = load_cell(&ctx, out, s, r)? {
                info!("reusing cell {}", m.cell_name());
                return Ok(m);
            }
        }
        let start = Instant::now();
        let m = run_cell(&ctx, s, r)?;
        let seconds = start.elapsed().as_secs_f64();
        info!("cell {} done in {seconds:.2}s", m.cell_name());
        if let Some(out) = out {
            write_json(&manifest_path(out, &m.label, r), &m)?;
            let timing = CellTiming {
                label: m.label.clone(),
                repetition: r,
                seconds,
            };
            write_json(&timing_path(out, &m.label, r), &timing)?;
        }
        Ok(m)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    pool.install(|| cells.par_iter().map(work).collect())
}

/// Fails unless every run made exactly the budgeted number of oracle calls.
pub fn check_parity(spec: &ExperimentSpec, cells: &[CellManifest]) -> Result<()> {
    let mut off = Vec::new();
    for c in cells {
        for r in &c.runs {
            if r.evaluations != spec.budget {
                off.push(format!("{} made {} calls", c.cell_name(), r.evaluations));
            }
        }
    }
    if off.is_empty() {
        return Ok(());
    }
    let msg = format!("budget {}: {}", spec.budget, off.join("; "));
    if spec.allow_unequal_budgets {
        warn!("{msg}");
        Ok(())
    } else {
        Err(HarnessError::BudgetParity(msg))
    }
}

/// Collected per-cell wall times, `None` for cells without a timing file.
pub fn read_timings(out: &Path, cells: &[CellManifest]) -> Vec<(String, usize, Option<f64>)> {
    cells
        .iter()
        .map(|c| {
            let t = fs::read(timing_path(out, &c.label, c.repetition))
                .ok()
                .and_then(|b| serde_json::from_slice::<CellTiming>(&b).ok())
                .map(|t| t.seconds);
            (c.label.clone(), c.repetition, t)
        })
        .collect()
}

/// Runs every cell, checks budget parity and summarizes. With an output
/// directory the cell manifests and the report in `format` are written too.
pub fn run_experiment_with(spec: &ExperimentSpec, jobs: Option<usize>, format: EmitFormat) -> Result<ComparisonSummary> {
    spec.validate()?;
    let instance = spec.load_instance()?;
    let opts = RunOptions {
        jobs,
        ..RunOptions::default()
    };
    let cells = run_cells(spec, &instance, &opts)?;
    check_parity(spec, &cells)?;
    let summary = summarize(spec, &instance, &cells)?;
    if let Some(out) = &spec.output_dir {
        let timings = read_timings(out, &cells);
        write_report(&summary, out, format, Some(&timings))?;
    }
    Ok(summary)
}

/// [`run_experiment_with`] on all cores with CSV tables.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ComparisonSummary> {
    run_experiment_with(spec, None, EmitFormat::Csv)
}
