//! Sample-driven estimation of the objective (expected per-slot served
//! demand) and of every interested operator's revenue components, with
//! recursive means and variances and a Chebyshev-style stopping rule.
//!
//! Samples are produced in fixed-size blocks. Each block owns independent
//! per-operator streams, runs the per-sample recursions, and is folded into
//! the running totals with the exact pairwise combination. The stop rule is
//! checked after every block in block order, so the result is a function of
//! the seed alone, not of how many workers computed the blocks.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::allocation::{mark_winners, waterfill_into};
use crate::error::{Error, Result};
use crate::market::{
    joint_sampler_params, licensed_served_moments, sample_joint, JointSamplerParams, MarketParams, MarketScenario,
    OperatorId, Osa,
};
use crate::rng::{cell_seed, operator_stream, SampleStream};

/// Running mean and unbiased variance of a sample stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningStat {
    pub count: u64,
    pub mean: f64,
    pub var: f64,
}

/// `mean' = ((r − 1)·mean + z) / r` with `r` the new sample count.
pub fn update_mean(stat: RunningStat, z: f64) -> RunningStat {
    let r = stat.count + 1;
    let rf = r as f64;
    RunningStat { count: r, mean: ((rf - 1.0) * stat.mean + z) / rf, var: stat.var }
}

/// Unbiased recursion `δ^r = (r−2)/(r−1)·δ^{r−1} + r·(ẑ^r − ẑ^{r−1})²`,
/// applied after [`update_mean`]. The first sample initialises δ to 0.
pub fn update_variance(stat: RunningStat, prev_mean: f64, new_mean: f64) -> RunningStat {
    let var = unbiased_variance_step(stat.var, stat.count, prev_mean, new_mean);
    RunningStat { var, ..stat }
}

pub fn unbiased_variance_step(prev_var: f64, r: u64, prev_mean: f64, new_mean: f64) -> f64 {
    if r <= 1 {
        return 0.0;
    }
    let rf = r as f64;
    let d = new_mean - prev_mean;
    (rf - 2.0) / (rf - 1.0) * prev_var + rf * d * d
}

/// Biased (divide-by-r) recursion `δ^r = (r−1)/r·δ^{r−1} + (r−1)·(ẑ^r − ẑ^{r−1})²`.
pub fn biased_variance_step(prev_var: f64, r: u64, prev_mean: f64, new_mean: f64) -> f64 {
    if r <= 1 {
        return 0.0;
    }
    let rf = r as f64;
    let d = new_mean - prev_mean;
    (rf - 1.0) / rf * prev_var + (rf - 1.0) * d * d
}

impl RunningStat {
    pub fn push(&mut self, z: f64) {
        let prev = self.mean;
        let next = update_mean(*self, z);
        *self = update_variance(next, prev, next.mean);
    }

    /// Exact pairwise combination of two disjoint sample sets.
    pub fn merge(&self, other: &RunningStat) -> RunningStat {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n;
        let m2 = self.var * (na - 1.0) + other.var * (nb - 1.0) + delta * delta * na * nb / n;
        RunningStat { count: self.count + other.count, mean, var: m2 / (n - 1.0) }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.var / self.count as f64).sqrt()
    }

    /// `100²·δ ≤ r·β₁²·ẑ²·(1 − β₂)`; a statistic with zero sample variance is
    /// always accepted.
    pub fn meets_tolerance(&self, beta1: f64, beta2: f64) -> bool {
        self.var == 0.0 || 1e4 * self.var <= self.count as f64 * beta1 * beta1 * self.mean * self.mean * (1.0 - beta2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Maximum acceptable percentage error.
    pub beta1: f64,
    /// Minimum probability of meeting `beta1`.
    pub beta2: f64,
    pub r_min: u64,
    pub r_max: u64,
    pub seed: u64,
    #[serde(default = "default_block_size")]
    pub block_size: u64,
}

fn default_block_size() -> u64 {
    1024
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { beta1: 1.0, beta2: 0.99, r_min: 10_000, r_max: 10_000_000, seed: 0, block_size: 1024 }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::ConfigInvalid(s.into()));
        if !(self.beta1 > 0.0 && self.beta1.is_finite()) {
            return bad("beta1 must be positive");
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta2 must lie in (0, 1)");
        }
        if self.r_min < 1 || self.r_min > self.r_max {
            return bad("need 1 <= r_min <= r_max");
        }
        if self.block_size == 0 {
            return bad("block_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimates {
    /// Per-slot total served demand.
    pub u_hat: RunningStat,
    /// Per-slot opportunistically served demand, every interested operator.
    pub u_op_hat: BTreeMap<OperatorId, RunningStat>,
    /// Per-epoch licensed revenue (0 when the auction is lost), interested licensed operators.
    pub r_lc_hat: BTreeMap<OperatorId, RunningStat>,
    pub converged: bool,
    pub samples_used: u64,
}

impl McEstimates {
    fn empty() -> Self {
        McEstimates {
            u_hat: RunningStat::default(),
            u_op_hat: BTreeMap::new(),
            r_lc_hat: BTreeMap::new(),
            converged: true,
            samples_used: 0,
        }
    }

    fn stats(&self) -> impl Iterator<Item = &RunningStat> {
        std::iter::once(&self.u_hat).chain(self.u_op_hat.values()).chain(self.r_lc_hat.values())
    }
}

/// True once `r ≥ r_min` and every tracked statistic meets the tolerance.
pub fn stop_criteria_met(estimates: &McEstimates, config: &McConfig) -> bool {
    estimates.samples_used >= config.r_min && estimates.stats().all(|s| s.meets_tolerance(config.beta1, config.beta2))
}

/// [`stop_criteria_met`], or the sample budget is exhausted.
pub fn should_stop(estimates: &McEstimates, config: &McConfig) -> bool {
    estimates.samples_used >= config.r_max || stop_criteria_met(estimates, config)
}

/// Objective value and per-operator expected revenue from finished estimates.
pub fn objective_and_revenues(
    estimates: &McEstimates,
    scenario: &MarketScenario,
    s_l: &BTreeSet<OperatorId>,
    s_u: &BTreeSet<OperatorId>,
    params: &MarketParams,
) -> Result<(f64, BTreeMap<OperatorId, f64>)> {
    let t = f64::from(params.t_slots);
    let mut revenues = BTreeMap::new();
    for &k in s_l.iter().chain(s_u) {
        let profile = scenario.profile(k).ok_or(Error::UnknownOperator(k))?;
        let op = estimates.u_op_hat.get(&k).map_or(0.0, |s| s.mean);
        let lc = if s_l.contains(&k) { estimates.r_lc_hat.get(&k).map_or(0.0, |s| s.mean) } else { 0.0 };
        revenues.insert(k, lc + profile.revenue(op * t));
    }
    Ok((estimates.u_hat.mean, revenues))
}

/// Standard errors of the revenue estimates, treating the licensed and
/// opportunistic components as independent.
pub fn revenue_std_errors(
    estimates: &McEstimates,
    scenario: &MarketScenario,
    params: &MarketParams,
) -> BTreeMap<OperatorId, f64> {
    let t = f64::from(params.t_slots);
    estimates
        .u_op_hat
        .iter()
        .map(|(&k, op)| {
            let slope = scenario.profile(k).map_or(0.0, |p| p.revenue_slope) * t;
            let lc = estimates.r_lc_hat.get(&k).map_or(0.0, |s| s.std_error());
            (k, (lc * lc + (slope * op.std_error()).powi(2)).sqrt())
        })
        .collect()
}

enum DemandModel {
    Joint(JointSamplerParams),
    Marginal { mu: f64, sigma: f64 },
}

/// Per-sample values, optionally recorded for debugging and oracle tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub r: u64,
    pub served_total: f64,
    /// (operator, licensed service, opportunistic service, licensed revenue)
    pub operators: Vec<(OperatorId, f64, f64, f64)>,
}

/// Retained per-sample log; enables sequential evaluation.
#[derive(Debug, Clone, Default)]
pub struct SampleLog {
    pub records: Vec<SampleRecord>,
}

impl SampleLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let Some(first) = self.records.first() else {
            return writeln!(out, "r,served_total");
        };
        write!(out, "r,served_total")?;
        for (k, ..) in &first.operators {
            write!(out, ",lc_{k},op_{k},rev_lc_{k}")?;
        }
        writeln!(out)?;
        for rec in &self.records {
            write!(out, "{},{}", rec.r, rec.served_total)?;
            for (_, lc, op, rev) in &rec.operators {
                write!(out, ",{lc},{op},{rev}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

struct BlockStats {
    u: RunningStat,
    u_op: Vec<RunningStat>,
    r_lc: Vec<RunningStat>,
}

impl BlockStats {
    fn new(n: usize, n_lic: usize) -> Self {
        BlockStats { u: RunningStat::default(), u_op: vec![RunningStat::default(); n], r_lc: vec![RunningStat::default(); n_lic] }
    }

    fn merge(&mut self, other: &BlockStats) {
        self.u = self.u.merge(&other.u);
        for (a, b) in self.u_op.iter_mut().zip(&other.u_op) {
            *a = a.merge(b);
        }
        for (a, b) in self.r_lc.iter_mut().zip(&other.r_lc) {
            *a = a.merge(b);
        }
    }
}

/// Welford accumulators for many statistics that see the same number of
/// samples, sharing one reciprocal per sample. Algebraically identical to
/// [`RunningStat::push`].
struct BlockAccumulator {
    count: u64,
    inv_r: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl BlockAccumulator {
    fn new(len: usize) -> Self {
        BlockAccumulator { count: 0, inv_r: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    #[inline]
    fn begin_sample(&mut self) {
        self.count += 1;
        self.inv_r = 1.0 / self.count as f64;
    }

    #[inline]
    fn push(&mut self, i: usize, z: f64) {
        let d = z - self.mean[i];
        self.mean[i] += d * self.inv_r;
        self.m2[i] += d * (z - self.mean[i]);
    }

    fn finish(&self) -> Vec<RunningStat> {
        let denom = self.count.saturating_sub(1).max(1) as f64;
        self.mean
            .iter()
            .zip(&self.m2)
            .map(|(&mean, &m2)| RunningStat {
                count: self.count,
                mean,
                var: if self.count > 1 { m2.max(0.0) / denom } else { 0.0 },
            })
            .collect()
    }
}

/// Prepared sampling problem for one (scenario, sets, params) combination.
struct Estimator<'a> {
    params: &'a MarketParams,
    ids: Vec<OperatorId>,
    models: Vec<DemandModel>,
    /// Positions in `ids` of the interested licensed operators.
    licensed: Vec<usize>,
    seed: u64,
}

impl<'a> Estimator<'a> {
    fn new(
        scenario: &MarketScenario,
        s_l: &BTreeSet<OperatorId>,
        s_u: &BTreeSet<OperatorId>,
        params: &'a MarketParams,
        config: &McConfig,
    ) -> Result<Self> {
        let mut entries: Vec<(OperatorId, bool)> =
            s_l.iter().map(|&k| (k, true)).chain(s_u.iter().map(|&k| (k, false))).collect();
        entries.sort();
        let mut ids = Vec::with_capacity(entries.len());
        let mut models = Vec::with_capacity(entries.len());
        let mut licensed = Vec::new();
        for (pos, &(k, is_lic)) in entries.iter().enumerate() {
            if ids.last() == Some(&k) {
                return Err(Error::InvalidScenario(format!("operator {k} is in both interested sets")));
            }
            let profile = scenario.profile(k).ok_or(Error::UnknownOperator(k))?;
            if is_lic != scenario.is_licensed(k) {
                return Err(Error::InvalidScenario(format!("operator {k} is in the wrong interested set")));
            }
            profile.validate()?;
            ids.push(k);
            if is_lic {
                let moments = licensed_served_moments(profile, params)?;
                models.push(DemandModel::Joint(joint_sampler_params(profile, params, &moments)?));
                licensed.push(pos);
            } else {
                models.push(DemandModel::Marginal { mu: profile.mu_theta, sigma: profile.sigma_theta });
            }
        }
        Ok(Estimator { params, ids, models, licensed, seed: cell_seed(config.seed, params.m, params.p) })
    }

    fn run_block(&self, block: u64, len: u64, first_r: u64, mut log: Option<&mut SampleLog>) -> BlockStats {
        let n = self.ids.len();
        let n_lic = self.licensed.len();
        let params = self.params;
        let cap = params.channel_capacity();
        let phi = f64::from(params.phi);
        let effective_p = n_lic.min(params.p as usize);
        let unlicensed_pool = params.alpha_u * (f64::from(params.m) - effective_p as f64) * cap;
        let interweave_residual = params.alpha_l * cap;

        let mut streams: Vec<SampleStream> =
            self.ids.iter().map(|&k| operator_stream(self.seed, k, block)).collect();
        // Slot 0 is the objective, then one slot per operator for the
        // opportunistic service, then one per licensed bidder.
        let mut acc = BlockAccumulator::new(1 + n + n_lic);
        let mut demand = vec![0.0; n];
        let mut revenue = vec![0.0; n];
        let mut bid_of = vec![0.0; n];
        let mut bids = vec![0.0; n_lic];
        let mut winner = vec![false; n_lic];
        let mut tier1 = vec![false; n];
        let mut modified = vec![0.0; n];
        let mut served_lc = vec![0.0; n];
        let mut served_op = vec![0.0; n];
        let mut order = Vec::with_capacity(n);

        for i in 0..len {
            for (j, model) in self.models.iter().enumerate() {
                match model {
                    DemandModel::Joint(s) => {
                        let (theta, r_lc, bid) = sample_joint(s, &mut streams[j]);
                        demand[j] = theta.max(0.0);
                        revenue[j] = r_lc;
                        bid_of[j] = bid;
                    }
                    DemandModel::Marginal { mu, sigma } => {
                        let z: f64 = streams[j].sample(StandardNormal);
                        demand[j] = (mu + sigma * z).max(0.0);
                    }
                }
            }
            for (slot, &j) in self.licensed.iter().enumerate() {
                bids[slot] = bid_of[j];
            }
            mark_winners(&bids, effective_p, &mut order, &mut winner);
            tier1.iter_mut().for_each(|t| *t = false);
            for (slot, &j) in self.licensed.iter().enumerate() {
                tier1[j] = winner[slot];
            }

            let mut pool = unlicensed_pool;
            let mut licensed_total = 0.0;
            for j in 0..n {
                let x = demand[j];
                if tier1[j] {
                    served_lc[j] = x.min(cap);
                    licensed_total += served_lc[j];
                    modified[j] = phi * (x - cap).max(0.0);
                    pool += match params.osa {
                        Osa::Overlay => params.alpha_l * (cap - x).max(0.0),
                        Osa::Interweave => {
                            if x == 0.0 {
                                interweave_residual
                            } else {
                                0.0
                            }
                        }
                    };
                } else {
                    served_lc[j] = 0.0;
                    modified[j] = x;
                }
            }
            waterfill_into(pool, &modified, &mut order, &mut served_op);
            let op_total: f64 = served_op.iter().sum();
            debug_assert!(op_total <= pool + 1e-9);
            debug_assert!(served_lc.iter().all(|&v| v <= cap));

            acc.begin_sample();
            acc.push(0, licensed_total + op_total);
            for j in 0..n {
                acc.push(1 + j, served_op[j]);
            }
            for (slot, &j) in self.licensed.iter().enumerate() {
                acc.push(1 + n + slot, if tier1[j] { revenue[j] } else { 0.0 });
            }
            if let Some(log) = log.as_deref_mut() {
                log.records.push(SampleRecord {
                    r: first_r + i + 1,
                    served_total: licensed_total + op_total,
                    operators: (0..n)
                        .map(|j| {
                            let rev = if tier1[j] { revenue[j] } else { 0.0 };
                            (self.ids[j], served_lc[j], served_op[j], rev)
                        })
                        .collect(),
                });
            }
        }
        let stats = acc.finish();
        BlockStats { u: stats[0], u_op: stats[1..1 + n].to_vec(), r_lc: stats[1 + n..].to_vec() }
    }

    fn to_estimates(&self, totals: &BlockStats, converged: bool) -> McEstimates {
        McEstimates {
            u_hat: totals.u,
            u_op_hat: self.ids.iter().copied().zip(totals.u_op.iter().copied()).collect(),
            r_lc_hat: self.licensed.iter().map(|&j| self.ids[j]).zip(totals.r_lc.iter().copied()).collect(),
            converged,
            samples_used: totals.u.count,
        }
    }

    fn run(&self, config: &McConfig, mut log: Option<&mut SampleLog>) -> McEstimates {
        let mut totals = BlockStats::new(self.ids.len(), self.licensed.len());
        let mut next_block = 0u64;
        let mut done = 0u64;
        loop {
            // Plan a wave of blocks. The first wave covers r_min outright; later
            // waves are sized to the worker pool. Waves only decide which blocks
            // get computed early, never which ones are merged.
            let wanted = if done < config.r_min {
                (config.r_min - done).div_ceil(config.block_size)
            } else if log.is_some() {
                1
            } else {
                workers() as u64
            };
            let mut wave = Vec::new();
            let mut planned = done;
            for _ in 0..wanted.max(1) {
                if planned >= config.r_max {
                    break;
                }
                let len = config.block_size.min(config.r_max - planned);
                wave.push((next_block, len, planned));
                next_block += 1;
                planned += len;
            }
            let results: Vec<BlockStats> = match log.as_deref_mut() {
                Some(log) => wave.iter().map(|&(b, len, first)| self.run_block(b, len, first, Some(log))).collect(),
                None => map_blocks(&wave, |&(b, len, first)| self.run_block(b, len, first, None)),
            };
            for block in &results {
                totals.merge(block);
                done = totals.u.count;
                let est = self.to_estimates(&totals, false);
                if stop_criteria_met(&est, config) {
                    if let Some(log) = log.as_deref_mut() {
                        log.records.truncate(done as usize);
                    }
                    return self.to_estimates(&totals, true);
                }
                if done >= config.r_max {
                    return est;
                }
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn workers() -> usize {
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
fn workers() -> usize {
    1
}

#[cfg(feature = "parallel")]
fn map_blocks<T, F>(wave: &[(u64, u64, u64)], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&(u64, u64, u64)) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if wave.len() == 1 {
        return vec![f(&wave[0])];
    }
    wave.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_blocks<T, F>(wave: &[(u64, u64, u64)], f: F) -> Vec<T>
where
    F: Fn(&(u64, u64, u64)) -> T,
{
    wave.iter().map(f).collect()
}

/// Runs the integrator for fixed interested sets.
pub fn estimate(
    scenario: &MarketScenario,
    s_l: &BTreeSet<OperatorId>,
    s_u: &BTreeSet<OperatorId>,
    params: &MarketParams,
    config: &McConfig,
) -> Result<McEstimates> {
    estimate_inner(scenario, s_l, s_u, params, config, None)
}

/// [`estimate`] with every sample retained in `log`.
pub fn estimate_logged(
    scenario: &MarketScenario,
    s_l: &BTreeSet<OperatorId>,
    s_u: &BTreeSet<OperatorId>,
    params: &MarketParams,
    config: &McConfig,
    log: &mut SampleLog,
) -> Result<McEstimates> {
    estimate_inner(scenario, s_l, s_u, params, config, Some(log))
}

fn estimate_inner(
    scenario: &MarketScenario,
    s_l: &BTreeSet<OperatorId>,
    s_u: &BTreeSet<OperatorId>,
    params: &MarketParams,
    config: &McConfig,
    log: Option<&mut SampleLog>,
) -> Result<McEstimates> {
    config.validate()?;
    params.validate()?;
    if s_l.is_empty() && s_u.is_empty() {
        return Ok(McEstimates::empty());
    }
    let est = Estimator::new(scenario, s_l, s_u, params, config)?;
    Ok(est.run(config, log))
}
