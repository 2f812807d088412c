//! The two-stage game: operators decide entry by iterated elimination of
//! dominated strategies for a given partition, and the regulator grid
//! searches the partition `(M, P)` that maximises expected utilisation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, MarketScenario, OperatorId, OperatorProfile};
use crate::montecarlo::{estimate, objective_and_revenues, revenue_std_errors, McConfig};

/// Number of epochs the partition is kept for. It scales the objective and
/// every revenue uniformly, so it never changes an optimum.
pub const EPOCHS: u32 = 1;

/// Objective and revenues for one (partition, interested sets) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub u: f64,
    pub u_std_error: f64,
    pub revenues: BTreeMap<OperatorId, f64>,
    pub revenue_std_errors: BTreeMap<OperatorId, f64>,
    pub converged: bool,
    pub samples: u64,
}

impl Evaluation {
    /// Exact values, no sampling error.
    pub fn exact(u: f64, revenues: BTreeMap<OperatorId, f64>) -> Self {
        let revenue_std_errors = revenues.keys().map(|&k| (k, 0.0)).collect();
        Evaluation { u, u_std_error: 0.0, revenues, revenue_std_errors, converged: true, samples: 0 }
    }

    pub fn revenue(&self, k: OperatorId) -> Result<f64> {
        self.revenues.get(&k).copied().ok_or(Error::UnknownOperator(k))
    }
}

/// Source of `U(M, P, S_L, S_U)` and `R_k(M, P, S_L, S_U)`.
pub trait RevenueOracle {
    fn evaluate(
        &self,
        params: &MarketParams,
        s_l: &BTreeSet<OperatorId>,
        s_u: &BTreeSet<OperatorId>,
    ) -> Result<Arc<Evaluation>>;
}

/// Monte Carlo oracle with a cache keyed by the partition and the sets.
pub struct McRevenueOracle {
    scenario: MarketScenario,
    config: McConfig,
    cache: Mutex<HashMap<CacheKey, Arc<Evaluation>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    params: [u64; 8],
    s_l: Vec<OperatorId>,
    s_u: Vec<OperatorId>,
}

impl CacheKey {
    fn new(params: &MarketParams, s_l: &BTreeSet<OperatorId>, s_u: &BTreeSet<OperatorId>) -> Self {
        let p = [
            u64::from(params.m),
            u64::from(params.p),
            u64::from(params.t_slots),
            params.d_total.to_bits(),
            u64::from(params.phi),
            params.alpha_l.to_bits(),
            params.alpha_u.to_bits(),
            params.osa as u64,
        ];
        CacheKey { params: p, s_l: s_l.iter().copied().collect(), s_u: s_u.iter().copied().collect() }
    }
}

impl McRevenueOracle {
    pub fn new(scenario: MarketScenario, config: McConfig) -> Self {
        McRevenueOracle { scenario, config, cache: Mutex::new(HashMap::new()) }
    }

    pub fn scenario(&self) -> &MarketScenario {
        &self.scenario
    }

    pub fn config(&self) -> &McConfig {
        &self.config
    }

    pub fn cached_evaluations(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }
}

impl RevenueOracle for McRevenueOracle {
    fn evaluate(
        &self,
        params: &MarketParams,
        s_l: &BTreeSet<OperatorId>,
        s_u: &BTreeSet<OperatorId>,
    ) -> Result<Arc<Evaluation>> {
        let key = CacheKey::new(params, s_l, s_u);
        if let Some(hit) = self.cache.lock().expect("oracle cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        // Computed outside the lock. Two workers racing on one key compute the
        // same value because the seed depends only on the key.
        let est = estimate(&self.scenario, s_l, s_u, params, &self.config)?;
        let (u, revenues) = objective_and_revenues(&est, &self.scenario, s_l, s_u, params)?;
        let revenue_std_errors = revenue_std_errors(&est, &self.scenario, params);
        let eval = Arc::new(Evaluation {
            u,
            u_std_error: est.u_hat.std_error(),
            revenues,
            revenue_std_errors,
            converged: est.converged,
            samples: est.samples_used,
        });
        let mut cache = self.cache.lock().expect("oracle cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(eval)))
    }
}

/// Oracle backed by a closure; used for deterministic synthetic markets.
pub struct FnRevenueOracle<F>(pub F);

impl<F> RevenueOracle for FnRevenueOracle<F>
where
    F: Fn(&MarketParams, &BTreeSet<OperatorId>, &BTreeSet<OperatorId>) -> Evaluation,
{
    fn evaluate(
        &self,
        params: &MarketParams,
        s_l: &BTreeSet<OperatorId>,
        s_u: &BTreeSet<OperatorId>,
    ) -> Result<Arc<Evaluation>> {
        Ok(Arc::new((self.0)(params, s_l, s_u)))
    }
}

/// Sets after one elimination round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IesdsStep {
    pub joined_licensed: BTreeSet<OperatorId>,
    pub confused_licensed: BTreeSet<OperatorId>,
    pub joined_unlicensed: BTreeSet<OperatorId>,
    pub confused_unlicensed: BTreeSet<OperatorId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Solution {
    pub s_l: BTreeSet<OperatorId>,
    pub s_u: BTreeSet<OperatorId>,
    /// Entry 0 is the initial state; entry `l` the state after round `l`.
    pub trace: Vec<IesdsStep>,
    /// Still undecided at the fixed point; pessimistic operators stay out.
    pub confused_at_convergence: BTreeSet<OperatorId>,
}

impl Stage2Solution {
    pub fn rounds(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

fn union(a: &BTreeSet<OperatorId>, b: &BTreeSet<OperatorId>) -> BTreeSet<OperatorId> {
    a.union(b).copied().collect()
}

fn with(a: &BTreeSet<OperatorId>, k: OperatorId) -> BTreeSet<OperatorId> {
    let mut s = a.clone();
    s.insert(k);
    s
}

/// Market entry for a fixed partition. With `max_rounds = Some(1)` only the
/// first round runs, which yields the dominant-strategy entrants.
pub fn solve_stage2<O: RevenueOracle + ?Sized>(
    scenario: &MarketScenario,
    params: &MarketParams,
    oracle: &O,
) -> Result<Stage2Solution> {
    solve_stage2_rounds(scenario, params, oracle, None)
}

pub fn solve_stage2_rounds<O: RevenueOracle + ?Sized>(
    scenario: &MarketScenario,
    params: &MarketParams,
    oracle: &O,
    max_rounds: Option<usize>,
) -> Result<Stage2Solution> {
    params.validate()?;
    let mer: BTreeMap<OperatorId, f64> = scenario.operators().map(|p| (p.id, p.mer(params.t_slots))).collect();

    let mut state = IesdsStep {
        joined_licensed: BTreeSet::new(),
        confused_licensed: scenario.licensed_ids().into_iter().collect(),
        joined_unlicensed: BTreeSet::new(),
        confused_unlicensed: scenario.unlicensed_ids().into_iter().collect(),
    };
    let mut trace = vec![state.clone()];

    loop {
        if max_rounds.is_some_and(|n| trace.len() > n) {
            break;
        }
        let prev = state.clone();
        let mut changed = false;
        let largest_l = union(&prev.joined_licensed, &prev.confused_licensed);
        let largest_u = union(&prev.joined_unlicensed, &prev.confused_unlicensed);
        let mut largest: Option<Arc<Evaluation>> = None;
        let mut largest_eval = || -> Result<Arc<Evaluation>> {
            if largest.is_none() {
                largest = Some(oracle.evaluate(params, &largest_l, &largest_u)?);
            }
            Ok(Arc::clone(largest.as_ref().expect("just set")))
        };

        for &k in &prev.confused_licensed {
            let lambda = mer[&k];
            if largest_eval()?.revenue(k)? > lambda {
                state.joined_licensed.insert(k);
                state.confused_licensed.remove(&k);
                changed = true;
            } else if oracle.evaluate(params, &with(&prev.joined_licensed, k), &prev.joined_unlicensed)?.revenue(k)?
                <= lambda
            {
                state.confused_licensed.remove(&k);
                changed = true;
            }
        }
        for &k in &prev.confused_unlicensed {
            let lambda = mer[&k];
            if largest_eval()?.revenue(k)? > lambda {
                state.joined_unlicensed.insert(k);
                state.confused_unlicensed.remove(&k);
                changed = true;
            } else if oracle.evaluate(params, &prev.joined_licensed, &with(&prev.joined_unlicensed, k))?.revenue(k)?
                <= lambda
            {
                state.confused_unlicensed.remove(&k);
                changed = true;
            }
        }
        if !changed {
            break;
        }
        trace.push(state.clone());
    }

    Ok(Stage2Solution {
        s_l: state.joined_licensed.clone(),
        s_u: state.joined_unlicensed.clone(),
        confused_at_convergence: union(&state.confused_licensed, &state.confused_unlicensed),
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub m: u32,
    pub p: u32,
    pub u: f64,
    pub s_l: BTreeSet<OperatorId>,
    pub s_u: BTreeSet<OperatorId>,
    #[serde(skip)]
    pub u_std_error: f64,
}

impl GridCell {
    pub fn entrants(&self) -> usize {
        self.s_l.len() + self.s_u.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Solution {
    pub m_star: u32,
    pub p_star: u32,
    pub s_l_star: BTreeSet<OperatorId>,
    pub s_u_star: BTreeSet<OperatorId>,
    pub u_star: f64,
    pub grid: Vec<GridCell>,
}

/// Grid bound used when none is given: twice the number of candidates, or
/// twice the number of mean-demand-sized channels that fit in the band,
/// whichever is larger.
pub fn default_m_max(scenario: &MarketScenario, d_total: f64) -> u32 {
    let by_count = 2 * scenario.len() as u32;
    let theta = scenario.mean_demand();
    let by_size = if theta > 0.0 { (2.0 * d_total / theta).ceil().min(f64::from(u32::MAX / 2)) as u32 } else { 0 };
    by_count.max(by_size).max(1)
}

/// All `(M, P)` cells of the search grid in scan order.
pub fn grid_cells(scenario: &MarketScenario, m_max: u32) -> Vec<(u32, u32)> {
    let n_lic = scenario.licensed_candidates.len() as u32;
    (1..=m_max).flat_map(|m| (0..=n_lic.min(m)).map(move |p| (m, p))).collect()
}

/// Evaluates one grid cell: Stage-2 entry, then the objective at the entrants.
pub fn evaluate_cell<O: RevenueOracle + ?Sized>(
    scenario: &MarketScenario,
    template: &MarketParams,
    oracle: &O,
    m: u32,
    p: u32,
) -> Result<GridCell> {
    let params = template.with_partition(m, p);
    let stage2 = solve_stage2(scenario, &params, oracle)?;
    let eval = oracle.evaluate(&params, &stage2.s_l, &stage2.s_u)?;
    Ok(GridCell { m, p, u: eval.u, s_l: stage2.s_l, s_u: stage2.s_u, u_std_error: eval.u_std_error })
}

/// Best cell by strict improvement in scan order.
pub fn best_cell<'a, I: IntoIterator<Item = &'a GridCell>>(cells: I) -> Option<&'a GridCell> {
    let mut best: Option<&GridCell> = None;
    for c in cells {
        if best.is_none_or(|b| c.u > b.u) {
            best = Some(c);
        }
    }
    best
}

/// Regulator's grid search over `M = 1..=m_max`, `P = 0..=min(|S_L^C|, M)`.
pub fn solve_stage1<O: RevenueOracle + Sync + ?Sized>(
    scenario: &MarketScenario,
    template: &MarketParams,
    oracle: &O,
    m_max: u32,
) -> Result<Stage1Solution> {
    if m_max == 0 {
        return Err(Error::InvalidParams("m_max must be at least 1".into()));
    }
    scenario.validate()?;
    template.with_partition(1, 0).validate()?;
    let cells = grid_cells(scenario, m_max);
    let grid = map_cells(&cells, |&(m, p)| evaluate_cell(scenario, template, oracle, m, p))?;
    let best = best_cell(&grid).expect("grid has at least one cell").clone();
    Ok(Stage1Solution {
        m_star: best.m,
        p_star: best.p,
        s_l_star: best.s_l,
        s_u_star: best.s_u,
        u_star: best.u,
        grid,
    })
}

#[cfg(feature = "parallel")]
fn map_cells<T, F>(cells: &[(u32, u32)], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&(u32, u32)) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    cells.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_cells<T, F>(cells: &[(u32, u32)], f: F) -> Result<Vec<T>>
where
    F: Fn(&(u32, u32)) -> Result<T>,
{
    cells.iter().map(f).collect()
}

/// Who holds a set of beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Holder {
    Regulator,
    Operator(OperatorId),
}

/// Point estimates of every candidate's profile held by one party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSet {
    pub holder: Holder,
    pub estimates: BTreeMap<OperatorId, OperatorProfile>,
}

impl BeliefSet {
    /// Exact beliefs: every estimate equals the truth.
    pub fn exact(holder: Holder, truth: &MarketScenario) -> Self {
        BeliefSet { holder, estimates: truth.operators().map(|p| (p.id, p.clone())).collect() }
    }

    /// The market as this holder sees it. An operator always knows its own
    /// profile, whatever its estimate map says.
    pub fn believed_scenario(&self, truth: &MarketScenario) -> Result<MarketScenario> {
        let lookup = |p: &OperatorProfile| -> Result<OperatorProfile> {
            if self.holder == Holder::Operator(p.id) {
                return Ok(p.clone());
            }
            let est = self
                .estimates
                .get(&p.id)
                .ok_or_else(|| Error::MissingBelief(format!("{:?} has no estimate for operator {}", self.holder, p.id)))?;
            Ok(OperatorProfile { id: p.id, ..est.clone() })
        };
        Ok(MarketScenario {
            licensed_candidates: truth.licensed_candidates.iter().map(lookup).collect::<Result<_>>()?,
            unlicensed_candidates: truth.unlicensed_candidates.iter().map(lookup).collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompleteSolution {
    /// The regulator's solve under its own beliefs.
    pub regulator: Stage1Solution,
    pub s_l_true: BTreeSet<OperatorId>,
    pub s_u_true: BTreeSet<OperatorId>,
    /// Objective at the regulator's partition and the actual entrants, under the true profiles.
    pub u_true: f64,
}

/// Incomplete-information solve with Monte Carlo oracles.
pub fn solve_incomplete(
    truth: &MarketScenario,
    beliefs: &[BeliefSet],
    template: &MarketParams,
    config: &McConfig,
    m_max: u32,
) -> Result<IncompleteSolution> {
    solve_incomplete_with(truth, beliefs, template, m_max, |s| McRevenueOracle::new(s.clone(), config.clone()))
}

/// [`solve_incomplete`] with a caller-supplied oracle per believed market.
pub fn solve_incomplete_with<O, F>(
    truth: &MarketScenario,
    beliefs: &[BeliefSet],
    template: &MarketParams,
    m_max: u32,
    make_oracle: F,
) -> Result<IncompleteSolution>
where
    O: RevenueOracle + Sync,
    F: Fn(&MarketScenario) -> O,
{
    truth.validate()?;
    let find = |h: Holder| {
        beliefs.iter().find(|b| b.holder == h).ok_or_else(|| Error::MissingBelief(format!("{h:?}")))
    };
    let regulator_view = find(Holder::Regulator)?.believed_scenario(truth)?;
    let regulator = solve_stage1(&regulator_view, template, &make_oracle(&regulator_view), m_max)?;
    let params = template.with_partition(regulator.m_star, regulator.p_star);

    let mut s_l_true = BTreeSet::new();
    let mut s_u_true = BTreeSet::new();
    for op in truth.operators() {
        let view = find(Holder::Operator(op.id))?.believed_scenario(truth)?;
        let own = solve_stage2(&view, &params, &make_oracle(&view))?;
        if own.s_l.contains(&op.id) {
            s_l_true.insert(op.id);
        }
        if own.s_u.contains(&op.id) {
            s_u_true.insert(op.id);
        }
    }
    let u_true = make_oracle(truth).evaluate(&params, &s_l_true, &s_u_true)?.u;
    Ok(IncompleteSolution { regulator, s_l_true, s_u_true, u_true })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub operator: OperatorId,
    pub added: OperatorId,
    pub s_l: BTreeSet<OperatorId>,
    pub s_u: BTreeSet<OperatorId>,
    pub revenue_smaller: f64,
    pub revenue_larger: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub comparisons: usize,
    pub violations: Vec<MonotonicityViolation>,
}

/// Checks that adding one operator never raises another's revenue beyond
/// three combined standard errors, over every nested pair of interested sets.
pub fn check_monotonicity<O: RevenueOracle + ?Sized>(
    scenario: &MarketScenario,
    params: &MarketParams,
    oracle: &O,
) -> Result<MonotonicityReport> {
    let ids: Vec<(OperatorId, bool)> = scenario
        .licensed_ids()
        .into_iter()
        .map(|k| (k, true))
        .chain(scenario.unlicensed_ids().into_iter().map(|k| (k, false)))
        .collect();
    if ids.len() > 16 {
        return Err(Error::InvalidScenario("monotonicity check enumerates subsets; use at most 16 operators".into()));
    }
    let split = |mask: u32| {
        let mut l = BTreeSet::new();
        let mut u = BTreeSet::new();
        for (i, &(k, lic)) in ids.iter().enumerate() {
            if mask & (1 << i) != 0 {
                if lic {
                    l.insert(k);
                } else {
                    u.insert(k);
                }
            }
        }
        (l, u)
    };
    let mut report = MonotonicityReport::default();
    for mask in 1u32..(1 << ids.len()) {
        let (s_l, s_u) = split(mask);
        let small = oracle.evaluate(params, &s_l, &s_u)?;
        for (j, &(added, _)) in ids.iter().enumerate() {
            if mask & (1 << j) != 0 {
                continue;
            }
            let (big_l, big_u) = split(mask | (1 << j));
            let large = oracle.evaluate(params, &big_l, &big_u)?;
            for (&k, &r_small) in &small.revenues {
                let r_large = large.revenue(k)?;
                let se_s = small.revenue_std_errors.get(&k).copied().unwrap_or(0.0);
                let se_l = large.revenue_std_errors.get(&k).copied().unwrap_or(0.0);
                let tolerance = 3.0 * (se_s * se_s + se_l * se_l).sqrt();
                report.comparisons += 1;
                if r_large > r_small + tolerance + 1e-12 * r_small.abs() {
                    report.violations.push(MonotonicityViolation {
                        operator: k,
                        added,
                        s_l: s_l.clone(),
                        s_u: s_u.clone(),
                        revenue_smaller: r_small,
                        revenue_larger: r_large,
                        tolerance,
                    });
                }
            }
        }
    }
    Ok(report)
}
