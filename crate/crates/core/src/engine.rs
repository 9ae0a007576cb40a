//! The GEO loops.
//!
//! Both modes repeat the same cycle: turn the costs seen so far into a
//! softmax surrogate, draw a training set from it, fit a fresh MPS Born
//! machine, sample the model and send new cardinality-valid samples to the
//! [`CostOracle`]. The booster starts from data produced by another solver;
//! the stand-alone mode starts from a random pool and spends a fixed budget.

use std::collections::{HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{binomial, enumerate_weight, random_weight, Selection};
use crate::born::{init_mps, train, TrainConfig};
use crate::error::{GeoError, Result};
use crate::portfolio::{EvaluatedCandidate, PortfolioInstance};
use crate::rng::{derive_seed, rng_from_seed, GeoRng};
use crate::surrogate::{
    build_softmax, cold_start, default_temperature, reference_cost, sample_training_set, DEFAULT_N_TRAIN,
};

/// Black-box cost function over bitstrings with a call counter.
pub trait CostOracle {
    fn n_vars(&self) -> usize;

    /// Hamming weight of valid candidates.
    fn cardinality(&self) -> usize;

    fn calls(&self) -> usize;

    fn budget(&self) -> Option<usize>;

    fn remaining(&self) -> Option<usize> {
        self.budget().map(|b| b.saturating_sub(self.calls()))
    }

    /// Prices one candidate. Every successful call counts once against the
    /// budget; calls beyond it fail with [`GeoError::BudgetExhausted`].
    fn evaluate(&mut self, sel: &Selection) -> Result<EvaluatedCandidate>;
}

/// [`CostOracle`] backed by the inner portfolio QP. Candidates of the wrong
/// weight are priced as infeasible and still count as a call.
#[derive(Debug, Clone)]
pub struct PortfolioOracle<'a> {
    inst: &'a PortfolioInstance,
    calls: usize,
    budget: Option<usize>,
}

impl<'a> PortfolioOracle<'a> {
    pub fn new(inst: &'a PortfolioInstance, budget: Option<usize>) -> Self {
        PortfolioOracle { inst, calls: 0, budget }
    }

    pub fn instance(&self) -> &PortfolioInstance {
        self.inst
    }
}

impl CostOracle for PortfolioOracle<'_> {
    fn n_vars(&self) -> usize {
        self.inst.n_assets()
    }

    fn cardinality(&self) -> usize {
        self.inst.cardinality()
    }

    fn calls(&self) -> usize {
        self.calls
    }

    fn budget(&self) -> Option<usize> {
        self.budget
    }

    fn evaluate(&mut self, sel: &Selection) -> Result<EvaluatedCandidate> {
        if let Some(b) = self.budget {
            if self.calls >= b {
                return Err(GeoError::BudgetExhausted { budget: b });
            }
        }
        if sel.len() != self.n_vars() {
            return Err(GeoError::invalid(format!(
                "selection has length {}, expected {}",
                sel.len(),
                self.n_vars()
            )));
        }
        self.calls += 1;
        if sel.count_ones() != self.cardinality() {
            return Ok(EvaluatedCandidate::infeasible(sel.clone()));
        }
        self.inst.evaluate(sel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoMode {
    Booster,
    Standalone,
}

/// Settings for both GEO modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoConfig {
    pub mode: GeoMode,
    /// Stand-alone: size of the random seed pool.
    pub n_seed: usize,
    /// Booster: fraction of the lowest-cost initial data kept as seeds.
    pub seed_percentile: f64,
    pub n_train: usize,
    pub n_mps: usize,
    pub n_select_standalone: usize,
    /// Bond dimension of the fresh MPS trained in every iteration.
    pub init_bond_dim: usize,
    pub train: TrainConfig,
    /// `None` runs until the budget is spent.
    pub max_iterations: Option<usize>,
    pub eval_budget: Option<usize>,
    pub rng_seed: u64,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig::booster()
    }
}

impl GeoConfig {
    pub fn booster() -> Self {
        GeoConfig {
            mode: GeoMode::Booster,
            n_seed: 2000,
            seed_percentile: 0.1,
            n_train: DEFAULT_N_TRAIN,
            n_mps: 4000,
            n_select_standalone: 2,
            init_bond_dim: 2,
            train: TrainConfig::default(),
            max_iterations: Some(1),
            eval_budget: None,
            rng_seed: 0,
        }
    }

    /// Booster defaults scaled to the problem size: fewer MPS samples and a
    /// larger bond cap for the 500-asset universe.
    pub fn booster_for_size(n_vars: usize) -> Self {
        let mut c = Self::booster();
        if n_vars >= 500 {
            c.n_mps = 400;
            c.train.max_bond_dim = 64;
        }
        c
    }

    pub fn standalone(eval_budget: usize) -> Self {
        GeoConfig {
            mode: GeoMode::Standalone,
            max_iterations: None,
            eval_budget: Some(eval_budget),
            ..Self::booster()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.seed_percentile > 0.0 && self.seed_percentile <= 1.0) {
            return Err(GeoError::invalid(format!(
                "seed_percentile {} outside (0, 1]",
                self.seed_percentile
            )));
        }
        if self.n_select_standalone == 0 {
            return Err(GeoError::invalid("n_select_standalone must be at least 1"));
        }
        if self.n_train == 0 || self.n_mps == 0 || self.n_seed == 0 || self.init_bond_dim == 0 {
            return Err(GeoError::invalid("n_train, n_mps, n_seed and init_bond_dim must be positive"));
        }
        self.train.validate()
    }
}

/// Where an archived candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Booster input outside the seed set.
    Initial,
    /// Booster input inside the seed set.
    Seed,
    /// Proposed by the trained generative model.
    Generator,
    /// The single evaluation of the stand-alone cold start.
    ColdStart,
    /// Unevaluated seed-pool entry used when the model proposed nothing new.
    PoolFallback,
    /// Uniformly random unseen selection used when the pool was exhausted.
    RandomFallback,
    /// Produced by a baseline solver.
    Baseline,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Initial => "initial",
            Origin::Seed => "seed",
            Origin::Generator => "generator",
            Origin::ColdStart => "cold_start",
            Origin::PoolFallback => "pool_fallback",
            Origin::RandomFallback => "random_fallback",
            Origin::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub candidate: EvaluatedCandidate,
    pub origin: Origin,
    pub iteration: usize,
}

/// Best cost after `evals_used` oracle calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub iteration: usize,
    pub evals_used: usize,
    #[serde(with = "crate::serde_cost")]
    pub best_cost: f64,
}

/// Diagnostics of one GEO cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub temperature: f64,
    /// Stand-alone only: the cost assigned to unevaluated pool entries.
    pub sigma_ref: Option<f64>,
    pub surrogate_size: usize,
    pub train_rows_distinct: usize,
    #[serde(with = "crate::serde_cost")]
    pub nll_initial: f64,
    #[serde(with = "crate::serde_cost")]
    pub nll_final: f64,
    pub max_bond: usize,
    /// Distinct valid samples not evaluated before this cycle.
    pub new_valid_samples: usize,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoRunResult {
    /// Registry name of the solver that produced the result.
    pub solver: String,
    pub best: EvaluatedCandidate,
    pub history: Vec<HistoryPoint>,
    pub archive: Vec<ArchiveEntry>,
    /// Booster: best cost of the seed set.
    pub seed_best: Option<f64>,
    pub outstanding_count: usize,
    pub iterations: Vec<IterationRecord>,
    /// Oracle calls made by this run.
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

/// Generator-origin archive entries with cost strictly below `seed_best`.
pub fn count_outstanding(result: &GeoRunResult, seed_best: f64) -> usize {
    result
        .archive
        .iter()
        .filter(|e| e.origin == Origin::Generator && e.candidate.cost < seed_best)
        .count()
}

/// A failed run with whatever state it had accumulated.
#[derive(Debug, thiserror::Error)]
#[error("GEO run failed: {error}")]
pub struct RunError {
    pub error: GeoError,
    pub partial: Option<Box<GeoRunResult>>,
}

impl From<RunError> for GeoError {
    fn from(e: RunError) -> Self {
        e.error
    }
}

impl From<GeoError> for RunError {
    fn from(error: GeoError) -> Self {
        RunError { error, partial: None }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: GeoConfig,
    pub instance: PortfolioInstance,
    pub instance_fingerprint: String,
    pub rng_seed: u64,
    pub result: GeoRunResult,
}

impl RunManifest {
    pub fn new(config: GeoConfig, instance: PortfolioInstance, result: GeoRunResult) -> Self {
        RunManifest {
            instance_fingerprint: instance.fingerprint(),
            rng_seed: config.rng_seed,
            config,
            instance,
            result,
        }
    }
}

pub const BOOSTER_SOLVER: &str = "tn-geo-booster";

/// Consecutive booster cycles without a new candidate before the loop stops.
pub const MAX_EMPTY_CYCLES: usize = 3;
pub const STANDALONE_SOLVER: &str = "tn-geo";

/// Mutable bookkeeping shared by the engine and the baselines.
pub(crate) struct RunState {
    solver: String,
    archive: Vec<ArchiveEntry>,
    index: HashMap<Selection, usize>,
    pub(crate) history: Vec<HistoryPoint>,
    iterations: Vec<IterationRecord>,
    warnings: Vec<String>,
    best: Option<usize>,
    pub(crate) calls_at_start: usize,
    seed_best: Option<f64>,
}

impl RunState {
    pub(crate) fn new(solver: &str, calls_at_start: usize) -> Self {
        RunState {
            solver: solver.to_string(),
            archive: Vec::new(),
            index: HashMap::new(),
            history: Vec::new(),
            iterations: Vec::new(),
            warnings: Vec::new(),
            best: None,
            calls_at_start,
            seed_best: None,
        }
    }

    pub(crate) fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn contains(&self, sel: &Selection) -> bool {
        self.index.contains_key(sel)
    }

    pub(crate) fn best_cost(&self) -> f64 {
        self.best.map_or(f64::INFINITY, |i| self.archive[i].candidate.cost)
    }

    pub(crate) fn push(&mut self, candidate: EvaluatedCandidate, origin: Origin, iteration: usize) {
        let i = self.archive.len();
        let better = candidate.cost < self.best_cost() || self.best.is_none();
        self.index.insert(candidate.selection.clone(), i);
        self.archive.push(ArchiveEntry {
            candidate,
            origin,
            iteration,
        });
        if better {
            self.best = Some(i);
        }
    }

    /// Evaluates through the oracle, archives, and extends the history.
    pub(crate) fn evaluate<O: CostOracle + ?Sized>(
        &mut self,
        oracle: &mut O,
        sel: &Selection,
        origin: Origin,
        iteration: usize,
    ) -> Result<f64> {
        let c = oracle.evaluate(sel)?;
        let cost = c.cost;
        self.push(c, origin, iteration);
        self.history.push(HistoryPoint {
            iteration,
            evals_used: oracle.calls() - self.calls_at_start,
            best_cost: self.best_cost(),
        });
        Ok(cost)
    }

    pub(crate) fn finish(self, evaluations: usize) -> Result<GeoRunResult> {
        let best = self
            .best
            .map(|i| self.archive[i].candidate.clone())
            .ok_or_else(|| GeoError::invalid("run produced no candidates"))?;
        let mut r = GeoRunResult {
            solver: self.solver,
            best,
            history: self.history,
            archive: self.archive,
            seed_best: self.seed_best,
            outstanding_count: 0,
            iterations: self.iterations,
            evaluations,
            warnings: self.warnings,
        };
        if let Some(s) = r.seed_best {
            r.outstanding_count = count_outstanding(&r, s);
        }
        Ok(r)
    }
}

pub(crate) fn fail(state: RunState, error: GeoError, evaluations: usize) -> RunError {
    RunError {
        error,
        partial: state.finish(evaluations).ok().map(Box::new),
    }
}

/// Calls still allowed by both the config and the oracle.
fn remaining<O: CostOracle + ?Sized>(oracle: &O, cfg: &GeoConfig, used: usize) -> usize {
    let by_cfg = cfg.eval_budget.map_or(usize::MAX, |b| b.saturating_sub(used));
    by_cfg.min(oracle.remaining().unwrap_or(usize::MAX))
}

/// Output of one train-and-sample step.
struct Proposal {
    /// Distinct valid unseen samples with their frequencies, most frequent
    /// first and ties in lexicographic order.
    ranked: Vec<(Selection, usize)>,
    record: IterationRecord,
}

/// Steps 1 to 5 of a cycle: surrogate, training set, fresh MPS, samples,
/// post-selection against the archive.
fn propose(
    state: &RunState,
    support: &[Selection],
    costs: &[f64],
    temperature: f64,
    n_vars: usize,
    kappa: usize,
    cfg: &GeoConfig,
    iteration: usize,
) -> Result<Proposal> {
    let sur = build_softmax(support, costs, temperature)?;
    let it = iteration as u64;
    let data = sample_training_set(&sur, cfg.n_train, derive_seed(cfg.rng_seed, "train-data", it))?;
    let init_bond = cfg.init_bond_dim.min(cfg.train.max_bond_dim);
    let model = init_mps(n_vars, init_bond, derive_seed(cfg.rng_seed, "mps-init", it))?;
    let report = train(&model, &data, &cfg.train)?;
    let samples = report
        .model
        .sample(cfg.n_mps, derive_seed(cfg.rng_seed, "mps-sample", it))?;
    let mut freq: HashMap<Selection, usize> = HashMap::new();
    for s in samples {
        if s.count_ones() == kappa && !state.contains(&s) {
            *freq.entry(s).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(Selection, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let record = IterationRecord {
        iteration,
        temperature,
        sigma_ref: None,
        surrogate_size: sur.len(),
        train_rows_distinct: data.n_distinct(),
        nll_initial: report.initial_nll,
        nll_final: report.final_nll,
        max_bond: report.model.max_bond(),
        new_valid_samples: ranked.len(),
        evaluated: 0,
    };
    Ok(Proposal { ranked, record })
}

/// Booster mode: improve on data from another solver.
///
/// The lowest-cost `seed_percentile` share of `initial_data` (deduplicated,
/// non-finite costs dropped) forms the seed set. Each cycle evaluates the
/// model's new valid samples in order of decreasing sample frequency and
/// merges them into the seed set for the next cycle. The loop ends after
/// `max_iterations` cycles, when the budget is spent, or after
/// [`MAX_EMPTY_CYCLES`] consecutive cycles that proposed nothing new.
pub fn run_booster<O: CostOracle + ?Sized>(
    oracle: &mut O,
    initial_data: &[EvaluatedCandidate],
    cfg: &GeoConfig,
) -> std::result::Result<GeoRunResult, RunError> {
    cfg.validate()?;
    let (n, kappa) = (oracle.n_vars(), oracle.cardinality());
    let mut state = RunState::new(BOOSTER_SOLVER, oracle.calls());

    let mut dedup: Vec<EvaluatedCandidate> = Vec::new();
    let mut pos: HashMap<&Selection, usize> = HashMap::new();
    for c in initial_data {
        if c.selection.len() != n {
            return Err(GeoError::invalid(format!("initial candidate {} has the wrong length", c.selection)).into());
        }
        match pos.get(&c.selection) {
            Some(&i) if dedup[i].cost <= c.cost => {}
            Some(&i) => dedup[i] = c.clone(),
            None => {
                pos.insert(&c.selection, dedup.len());
                dedup.push(c.clone());
            }
        }
    }
    if dedup.len() < initial_data.len() {
        state.warn(format!(
            "{} duplicate initial candidates collapsed",
            initial_data.len() - dedup.len()
        ));
    }
    let (mut finite, infinite): (Vec<_>, Vec<_>) = dedup.into_iter().partition(|c| c.cost.is_finite());
    if !infinite.is_empty() {
        state.warn(format!("{} initial candidates with non-finite cost left out of the seed set", infinite.len()));
    }
    if finite.is_empty() {
        return Err(GeoError::invalid("booster needs at least one initial candidate with a finite cost").into());
    }
    finite.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.selection.cmp(&b.selection)));
    let n_seed = ((cfg.seed_percentile * finite.len() as f64).ceil() as usize).clamp(1, finite.len());
    let mut seeds: Vec<(Selection, f64)> = finite[..n_seed].iter().map(|c| (c.selection.clone(), c.cost)).collect();
    for (i, c) in finite.into_iter().enumerate() {
        let origin = if i < n_seed { Origin::Seed } else { Origin::Initial };
        state.push(c, origin, 0);
    }
    for c in infinite {
        state.push(c, Origin::Initial, 0);
    }
    state.seed_best = Some(seeds[0].1);
    state.history.push(HistoryPoint {
        iteration: 0,
        evals_used: 0,
        best_cost: state.best_cost(),
    });

    let max_it = cfg.max_iterations.unwrap_or(usize::MAX);
    let mut it = 0;
    let mut empty_cycles = 0;
    while it < max_it {
        if empty_cycles == MAX_EMPTY_CYCLES {
            state.warn(format!("stopping after {MAX_EMPTY_CYCLES} cycles without new candidates"));
            break;
        }
        it += 1;
        let used = oracle.calls() - state.calls_at_start;
        if remaining(oracle, cfg, used) == 0 {
            break;
        }
        let costs: Vec<f64> = seeds.iter().map(|s| s.1).collect();
        let temperature = if costs.len() >= 2 {
            match default_temperature(&costs) {
                Ok(t) => {
                    if let Some(w) = t.warning {
                        state.warn(format!("iteration {it}: {w}"));
                    }
                    t.value
                }
                Err(e) => return Err(fail(state, e, used)),
            }
        } else {
            state.warn(format!("iteration {it}: single seed; using temperature 1.0"));
            1.0
        };
        let support: Vec<Selection> = seeds.iter().map(|s| s.0.clone()).collect();
        let mut prop = match propose(&state, &support, &costs, temperature, n, kappa, cfg, it) {
            Ok(p) => p,
            Err(e) => return Err(fail(state, e, used)),
        };
        let mut evaluated = 0;
        for (sel, _) in &prop.ranked {
            let used = oracle.calls() - state.calls_at_start;
            if remaining(oracle, cfg, used) == 0 {
                break;
            }
            match state.evaluate(oracle, sel, Origin::Generator, it) {
                Ok(cost) => {
                    if cost.is_finite() {
                        seeds.push((sel.clone(), cost));
                    }
                    evaluated += 1;
                }
                Err(e) => return Err(fail(state, e, used)),
            }
        }
        if evaluated == 0 {
            state.warn(format!("iteration {it}: post-selection left no new valid candidates"));
            empty_cycles += 1;
        } else {
            empty_cycles = 0;
        }
        prop.record.evaluated = evaluated;
        state.iterations.push(prop.record);
    }
    let used = oracle.calls() - state.calls_at_start;
    Ok(state.finish(used)?)
}

/// Stand-alone mode: optimise from scratch within `cfg.eval_budget` calls.
///
/// After the cold start, each cycle fits a fresh MPS to the surrogate over
/// the pool (evaluated entries at their costs, the rest at the reference
/// cost `T ln 2 + best`) and evaluates the most and the least frequent new
/// valid samples. Shortfalls are filled from unevaluated pool entries and
/// then from uniformly random unseen selections. The temperature is
/// recomputed from the evaluated finite costs after every cycle.
pub fn run_standalone<O: CostOracle + ?Sized>(
    oracle: &mut O,
    inst: &PortfolioInstance,
    cfg: &GeoConfig,
) -> std::result::Result<GeoRunResult, RunError> {
    cfg.validate()?;
    let (n, kappa) = (inst.n_assets(), inst.cardinality());
    let budget = cfg
        .eval_budget
        .or(oracle.remaining())
        .ok_or_else(|| GeoError::invalid("stand-alone runs need an evaluation budget"))?;
    if budget < 1 {
        return Err(GeoError::invalid("evaluation budget must be at least 1").into());
    }
    let mut state = RunState::new(STANDALONE_SOLVER, oracle.calls());
    let cold = cold_start(oracle, inst, cfg.n_seed, cfg.rng_seed)?;
    state.warnings.extend(cold.warnings.iter().cloned());
    let first = cold.evaluated.candidate.clone();
    state.push(first, Origin::ColdStart, 0);
    state.history.push(HistoryPoint {
        iteration: 0,
        evals_used: oracle.calls() - state.calls_at_start,
        best_cost: state.best_cost(),
    });

    let mut pool = cold.seed_pool;
    let mut in_pool: HashSet<Selection> = pool.iter().cloned().collect();
    let mut temperature = cold.temperature;
    let mut rng: GeoRng = rng_from_seed(derive_seed(cfg.rng_seed, "standalone-select", 0));
    let space = binomial(n, kappa);
    let max_it = cfg.max_iterations.unwrap_or(usize::MAX);
    let mut it = 0;

    while it < max_it {
        let used = oracle.calls() - state.calls_at_start;
        let left = remaining(oracle, cfg, used).min(budget.saturating_sub(used));
        if left == 0 {
            break;
        }
        if state.archive.len() as u128 >= space {
            state.warn("every valid selection has been evaluated".into());
            break;
        }
        it += 1;
        let best = state.best_cost();
        let sigma_ref = reference_cost(temperature, best);
        let costs: Vec<f64> = pool
            .iter()
            .map(|s| state.index.get(s).map_or(sigma_ref, |&i| state.archive[i].candidate.cost))
            .collect();
        let mut prop = match propose(&state, &pool, &costs, temperature, n, kappa, cfg, it) {
            Ok(p) => p,
            Err(e) => return Err(fail(state, e, used)),
        };
        prop.record.sigma_ref = Some(sigma_ref);

        let want = cfg.n_select_standalone.min(left);
        let mut picks: Vec<(Selection, Origin)> = pick_extremes(&prop.ranked, want, &mut rng)
            .into_iter()
            .map(|s| (s, Origin::Generator))
            .collect();
        if picks.len() < want {
            let chosen: HashSet<Selection> = picks.iter().map(|p| p.0.clone()).collect();
            let unevaluated: Vec<&Selection> = pool
                .iter()
                .filter(|s| !state.contains(s) && !chosen.contains(*s))
                .collect();
            let mut extra: Vec<&Selection> = unevaluated
                .choose_multiple(&mut rng, want - picks.len())
                .copied()
                .collect();
            extra.sort();
            picks.extend(extra.into_iter().map(|s| (s.clone(), Origin::PoolFallback)));
        }
        while picks.len() < want {
            let taken: HashSet<&Selection> = picks.iter().map(|p| &p.0).collect();
            match random_unseen(n, kappa, &state, &taken, &mut rng) {
                Some(s) => picks.push((s, Origin::RandomFallback)),
                None => break,
            }
        }
        if picks.is_empty() {
            state.warn(format!("iteration {it}: no unseen valid selection left"));
            state.iterations.push(prop.record);
            break;
        }
        let mut evaluated = 0;
        for (sel, origin) in picks {
            let used = oracle.calls() - state.calls_at_start;
            if let Err(e) = state.evaluate(oracle, &sel, origin, it) {
                return Err(fail(state, e, used));
            }
            evaluated += 1;
            if in_pool.insert(sel.clone()) {
                pool.push(sel);
            }
        }
        prop.record.evaluated = evaluated;
        state.iterations.push(prop.record);

        let finite: Vec<f64> = state
            .archive
            .iter()
            .map(|e| e.candidate.cost)
            .filter(|c| c.is_finite())
            .collect();
        if finite.len() >= 2 {
            if let Ok(t) = default_temperature(&finite) {
                if t.warning.is_none() {
                    temperature = t.value;
                }
            }
        }
    }
    let used = oracle.calls() - state.calls_at_start;
    Ok(state.finish(used)?)
}

/// The most frequent and the least frequent entries of a frequency ranking
/// (ties broken uniformly at random), then alternately the next most and
/// least frequent, up to `want` distinct selections.
fn pick_extremes(ranked: &[(Selection, usize)], want: usize, rng: &mut GeoRng) -> Vec<Selection> {
    let mut rest: Vec<&(Selection, usize)> = ranked.iter().collect();
    let mut out = Vec::new();
    let mut take_most = true;
    while out.len() < want && !rest.is_empty() {
        let target = if take_most {
            rest.iter().map(|e| e.1).max()
        } else {
            rest.iter().map(|e| e.1).min()
        }
        .expect("nonempty");
        let tied: Vec<usize> = (0..rest.len()).filter(|&i| rest[i].1 == target).collect();
        let k = tied[rng.random_range(0..tied.len())];
        out.push(rest.remove(k).0.clone());
        take_most = !take_most;
    }
    out
}

/// A uniformly random valid selection that is neither archived nor in
/// `taken`, or `None` when the space is exhausted.
fn random_unseen(
    n: usize,
    kappa: usize,
    state: &RunState,
    taken: &HashSet<&Selection>,
    rng: &mut GeoRng,
) -> Option<Selection> {
    for _ in 0..10_000 {
        let s = random_weight(n, kappa, rng);
        if !state.contains(&s) && !taken.contains(&s) {
            return Some(s);
        }
    }
    if binomial(n, kappa) > 5_000_000 {
        return None;
    }
    let unseen: Vec<Selection> = enumerate_weight(n, kappa)
        .into_iter()
        .filter(|s| !state.contains(s) && !taken.contains(s))
        .collect();
    unseen.choose(rng).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::generate_synthetic_instance;

    fn small_cfg() -> GeoConfig {
        let mut c = GeoConfig::standalone(30);
        c.n_seed = 40;
        c.n_train = 500;
        c.n_mps = 200;
        c.train.n_sweeps = 2;
        c.train.grad_steps_per_bond = 2;
        c.train.max_bond_dim = 4;
        c
    }

    #[test]
    fn oracle_counts_and_enforces_budget() {
        let inst = generate_synthetic_instance(6, 3, 1).unwrap();
        let mut o = PortfolioOracle::new(&inst, Some(2));
        let bad: Selection = "110000".parse().unwrap();
        let c = o.evaluate(&bad).unwrap();
        assert!(!c.feasible && c.cost.is_infinite());
        assert_eq!(o.calls(), 1);
        o.evaluate(&"111000".parse().unwrap()).unwrap();
        assert!(matches!(
            o.evaluate(&"000111".parse().unwrap()),
            Err(GeoError::BudgetExhausted { budget: 2 })
        ));
        assert_eq!(o.calls(), 2);
    }

    #[test]
    fn config_validation() {
        let mut c = GeoConfig::booster();
        assert!(c.validate().is_ok());
        c.seed_percentile = 0.0;
        assert!(c.validate().is_err());
        let mut c = GeoConfig::standalone(10);
        c.n_select_standalone = 0;
        assert!(c.validate().is_err());
        assert_eq!(GeoConfig::booster_for_size(500).n_mps, 400);
    }

    #[test]
    fn standalone_spends_exactly_the_budget() {
        let inst = generate_synthetic_instance(10, 5, 2).unwrap();
        let cfg = small_cfg();
        let mut o = PortfolioOracle::new(&inst, None);
        let r = run_standalone(&mut o, &inst, &cfg).unwrap();
        assert_eq!(o.calls(), 30);
        assert_eq!(r.evaluations, 30);
        assert_eq!(r.history.len(), 30);
        assert!(r.history.windows(2).all(|w| w[1].best_cost <= w[0].best_cost));
        let distinct: HashSet<_> = r.archive.iter().map(|e| &e.candidate.selection).collect();
        assert_eq!(distinct.len(), 30);
    }

    #[test]
    fn standalone_rejects_zero_budget() {
        let inst = generate_synthetic_instance(6, 3, 2).unwrap();
        let mut cfg = small_cfg();
        cfg.eval_budget = Some(0);
        let mut o = PortfolioOracle::new(&inst, None);
        assert!(run_standalone(&mut o, &inst, &cfg).is_err());
    }

    #[test]
    fn count_outstanding_fixture() {
        let mk = |cost: f64, origin| ArchiveEntry {
            candidate: EvaluatedCandidate {
                selection: Selection::zeros(2),
                weights: vec![0.0; 2],
                cost,
                feasible: true,
            },
            origin,
            iteration: 1,
        };
        let archive = vec![
            mk(0.5, Origin::Seed),
            mk(0.1, Origin::Generator),
            mk(0.2, Origin::Generator),
            mk(0.3, Origin::Generator),
            mk(0.6, Origin::Generator),
            mk(0.1, Origin::Initial),
        ];
        let r = GeoRunResult {
            solver: BOOSTER_SOLVER.into(),
            best: archive[1].candidate.clone(),
            history: vec![],
            archive,
            seed_best: Some(0.5),
            outstanding_count: 0,
            iterations: vec![],
            evaluations: 4,
            warnings: vec![],
        };
        assert_eq!(count_outstanding(&r, 0.5), 3);
        assert_eq!(count_outstanding(&r, 0.1), 0);
    }

    #[test]
    fn pick_extremes_takes_both_ends() {
        let s = |t: &str| t.parse::<Selection>().unwrap();
        let ranked = vec![(s("1100"), 9), (s("1010"), 4), (s("0011"), 1)];
        let mut rng = rng_from_seed(0);
        let p = pick_extremes(&ranked, 2, &mut rng);
        assert_eq!(p, vec![s("1100"), s("0011")]);
        assert_eq!(pick_extremes(&ranked, 5, &mut rng).len(), 3);
    }
}
