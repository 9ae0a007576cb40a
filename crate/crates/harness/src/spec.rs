//! Declarative experiment description, loaded from JSON.

use std::collections::HashSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use geo_core::portfolio::{
    compute_returns, generate_synthetic_instance, read_orlib_port, read_price_csv, Objective, PortfolioInstance,
    ReturnStats,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, HarnessError, Result};
use crate::registry::Solver;

/// Where the portfolio instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    Synthetic { n_assets: usize, kappa: usize, seed: u64 },
    PriceCsv { path: PathBuf, kappa: usize },
    Orlib { path: PathBuf, kappa: usize },
    /// A serialized [`PortfolioInstance`], e.g. written by `geo-opt ingest`.
    InstanceFile { path: PathBuf },
}

/// One roster entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    /// Registered solver name.
    pub name: String,
    /// Distinguishes several entries of the same solver; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Solver settings; missing fields take their defaults.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl SolverSpec {
    pub fn new(name: &str) -> Self {
        SolverSpec {
            name: name.to_string(),
            label: None,
            config: serde_json::Value::Null,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

/// Objective grid traced to build a heuristic frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sweep {
    Lambda { values: Vec<f64> },
    Rho { values: Vec<f64> },
}

impl Sweep {
    pub fn values(&self) -> &[f64] {
        match self {
            Sweep::Lambda { values } | Sweep::Rho { values } => values,
        }
    }

    pub fn objective(&self, value: f64) -> Objective {
        match self {
            Sweep::Lambda { .. } => Objective::RiskAversion { lambda: value },
            Sweep::Rho { .. } => Objective::ReturnTarget { rho: value },
        }
    }

    /// `count` evenly spaced risk-aversion values over `[0, 1]`.
    pub fn lambda_grid(count: usize) -> Sweep {
        Sweep::Lambda {
            values: (0..count)
                .map(|i| if count == 1 { 0.5 } else { i as f64 / (count - 1) as f64 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub instance: InstanceSource,
    /// Defaults to a return target at the mean asset return.
    #[serde(default)]
    pub objective: Option<Objective>,
    #[serde(default)]
    pub lower_bound: f64,
    #[serde(default = "one")]
    pub upper_bound: f64,
    pub solvers: Vec<SolverSpec>,
    #[serde(default = "one_usize")]
    pub repetitions: usize,
    /// Oracle calls per run (per sweep point in sweep mode).
    pub budget: usize,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_frontier_points")]
    pub frontier_points: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Budget checkpoints in the summary traces.
    #[serde(default = "default_trace_points")]
    pub trace_points: usize,
    /// Accept runs whose oracle counters differ (e.g. an exhausted search space).
    #[serde(default)]
    pub allow_unequal_budgets: bool,
}

fn default_name() -> String {
    "experiment".into()
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_frontier_points() -> usize {
    100
}
fn default_resamples() -> usize {
    10_000
}
fn default_confidence() -> f64 {
    0.95
}
fn default_trace_points() -> usize {
    50
}

impl ExperimentSpec {
    /// Spec with defaults for everything but the instance, roster and budget.
    pub fn new(instance: InstanceSource, solvers: Vec<SolverSpec>, budget: usize) -> Self {
        ExperimentSpec {
            name: default_name(),
            instance,
            objective: None,
            lower_bound: 0.0,
            upper_bound: 1.0,
            solvers,
            repetitions: 1,
            budget,
            sweep: None,
            frontier_points: default_frontier_points(),
            output_dir: None,
            root_seed: 0,
            bootstrap_resamples: default_resamples(),
            confidence: default_confidence(),
            trace_points: default_trace_points(),
            allow_unequal_budgets: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(io_err(path))?;
        let spec: ExperimentSpec = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the roster and numeric settings; unknown solver names list the
    /// registered ones.
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(HarnessError::Config("the solver roster is empty".into()));
        }
        if self.repetitions == 0 {
            return Err(HarnessError::Config("repetitions must be at least 1".into()));
        }
        if self.budget == 0 {
            return Err(HarnessError::Config("budget must be at least 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(HarnessError::Config(format!("confidence {} outside (0, 1)", self.confidence)));
        }
        if self.bootstrap_resamples == 0 || self.trace_points == 0 {
            return Err(HarnessError::Config("bootstrap_resamples and trace_points must be positive".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values().is_empty() {
                return Err(HarnessError::Config("the sweep grid is empty".into()));
            }
        }
        let mut labels = HashSet::new();
        for s in &self.solvers {
            Solver::from_spec(s)?;
            if !labels.insert(s.label()) {
                return Err(HarnessError::Config(format!("duplicate solver label {:?}", s.label())));
            }
            if s.label().is_empty() || s.label().contains(['/', '\\']) {
                return Err(HarnessError::Config(format!("invalid solver label {:?}", s.label())));
            }
        }
        Ok(())
    }

    /// Loads and validates the instance.
    pub fn load_instance(&self) -> Result<PortfolioInstance> {
        let (stats, kappa) = match &self.instance {
            InstanceSource::Synthetic { n_assets, kappa, seed } => {
                let inst = generate_synthetic_instance(*n_assets, *kappa, *seed)?;
                (inst.stats().clone(), *kappa)
            }
            InstanceSource::PriceCsv { path, kappa } => {
                let f = File::open(path).map_err(io_err(path))?;
                let prices = read_price_csv(BufReader::new(f), "price-csv")?;
                (compute_returns(&prices)?, *kappa)
            }
            InstanceSource::Orlib { path, kappa } => {
                let f = File::open(path).map_err(io_err(path))?;
                (read_orlib_port(BufReader::new(f))?, *kappa)
            }
            InstanceSource::InstanceFile { path } => {
                let f = File::open(path).map_err(io_err(path))?;
                let inst: PortfolioInstance = serde_json::from_reader(BufReader::new(f))?;
                if self.objective.is_none() && self.lower_bound == 0.0 && self.upper_bound == 1.0 {
                    return Ok(inst);
                }
                (inst.stats().clone(), inst.cardinality())
            }
        };
        build_instance(stats, kappa, self.objective, self.lower_bound, self.upper_bound)
    }
}

/// Instance with uniform bounds; the objective defaults to a return target
/// at the mean asset return.
pub fn build_instance(
    stats: ReturnStats,
    kappa: usize,
    objective: Option<Objective>,
    lower: f64,
    upper: f64,
) -> Result<PortfolioInstance> {
    let n = stats.n_assets();
    let objective = objective.unwrap_or_else(|| Objective::ReturnTarget {
        rho: stats.mean_returns.mean(),
    });
    Ok(PortfolioInstance::with_bounds(
        stats,
        kappa,
        objective,
        DVector::from_element(n, lower),
        DVector::from_element(n, upper),
    )?)
}
