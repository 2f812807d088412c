//! Random market generation, the benchmark against sub-optimal partition
//! rules, interference sweeps, and tabular output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, MarketScenario, OperatorId, OperatorProfile, Osa};
use crate::montecarlo::McConfig;
use crate::rng::combine;
use crate::stackelberg::{best_cell, default_m_max, grid_cells, evaluate_cell, GridCell, McRevenueOracle};

/// Lease duration used by every generated market: weekly slots, yearly leases.
pub const DEFAULT_T_SLOTS: u32 = 52;

/// Closed interval `[lo, hi]`, serialised as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Range {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Range { lo, hi }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }

    fn within(&self, lo: f64, hi: f64, hi_open: bool) -> bool {
        self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo <= self.hi
            && self.lo >= lo
            && if hi_open { self.hi < hi } else { self.hi <= hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRanges {
    pub mu_theta: Range,
    pub sigma_theta: Range,
    pub revenue_slope: Range,
    pub revenue_cv: Range,
    pub rho: Range,
    pub omega: Range,
    pub mer_fraction: Range,
    /// Capacity as a fraction of the summed mean demands.
    pub upsilon: Range,
    pub alpha_l: Range,
    pub alpha_u: Range,
}

impl Default for GenRanges {
    fn default() -> Self {
        GenRanges {
            mu_theta: Range::new(0.75, 1.0),
            sigma_theta: Range::new(0.25, 0.75),
            revenue_slope: Range::new(0.9, 1.1),
            revenue_cv: Range::new(0.25, 0.75),
            rho: Range::new(0.5, 0.9),
            omega: Range::new(0.85, 0.95),
            mer_fraction: Range::new(0.25, 1.0),
            upsilon: Range::new(0.5, 1.0),
            alpha_l: Range::new(0.75, 1.0),
            alpha_u: Range::new(0.75, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGenSpec {
    pub n_licensed: u32,
    pub n_unlicensed: u32,
    #[serde(default)]
    pub ranges: GenRanges,
    /// Swap the two interference parameters when `alpha_l > alpha_u`.
    #[serde(default = "yes")]
    pub enforce_alpha_order: bool,
    pub n_markets: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t")]
    pub t_slots: u32,
}

fn yes() -> bool {
    true
}

fn default_t() -> u32 {
    DEFAULT_T_SLOTS
}

impl ScenarioGenSpec {
    /// Four licensed candidates, no unlicensed ones.
    pub fn benchmark(n_markets: u32, seed: u64) -> Self {
        ScenarioGenSpec {
            n_licensed: 4,
            n_unlicensed: 0,
            ranges: GenRanges::default(),
            enforce_alpha_order: true,
            n_markets,
            seed,
            t_slots: DEFAULT_T_SLOTS,
        }
    }

    /// Three licensed and three unlicensed candidates.
    pub fn competition(n_markets: u32, seed: u64) -> Self {
        ScenarioGenSpec { n_licensed: 3, n_unlicensed: 3, ..Self::benchmark(n_markets, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.ranges;
        let checks = [
            ("mu_theta", r.mu_theta.within(0.0, f64::INFINITY, true)),
            ("sigma_theta", r.sigma_theta.within(f64::MIN_POSITIVE, f64::INFINITY, true)),
            ("revenue_slope", r.revenue_slope.within(f64::MIN_POSITIVE, f64::INFINITY, true)),
            ("revenue_cv", r.revenue_cv.within(0.0, f64::INFINITY, true)),
            ("rho", r.rho.within(0.0, 1.0, true)),
            ("omega", r.omega.within(0.0, 1.0, true)),
            ("mer_fraction", r.mer_fraction.within(0.0, 1.0, false)),
            ("upsilon", r.upsilon.within(f64::MIN_POSITIVE, f64::INFINITY, true)),
            ("alpha_l", r.alpha_l.within(0.0, 1.0, false)),
            ("alpha_u", r.alpha_u.within(0.0, 1.0, false)),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(Error::InvalidScenario(format!("range for {name} is empty or outside its domain")));
        }
        if self.n_licensed + self.n_unlicensed == 0 {
            return Err(Error::InvalidScenario("a market needs at least one candidate".into()));
        }
        if self.t_slots == 0 {
            return Err(Error::InvalidScenario("t_slots must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedMarket {
    pub index: u32,
    pub scenario: MarketScenario,
    pub upsilon: f64,
    pub d_total: f64,
    pub alpha_l: f64,
    pub alpha_u: f64,
    pub t_slots: u32,
}

impl GeneratedMarket {
    /// Parameters at the smallest partition, ready for `with_partition`.
    pub fn params(&self, osa: Osa, phi: u8) -> MarketParams {
        MarketParams {
            m: 1,
            p: 0,
            t_slots: self.t_slots,
            d_total: self.d_total,
            phi,
            alpha_l: self.alpha_l,
            alpha_u: self.alpha_u,
            osa,
            bandwidth_hz: None,
        }
    }
}

/// Draws `n_markets` markets. Market `i` uses its own generator seeded from
/// `(seed, i)`, so any market can be regenerated alone. Licensed candidates get
/// ids `1..=n_licensed` and unlicensed ones the following ids.
pub fn generate_markets(spec: &ScenarioGenSpec) -> Result<Vec<GeneratedMarket>> {
    spec.validate()?;
    let r = &spec.ranges;
    Ok((0..spec.n_markets)
        .map(|index| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(combine(spec.seed, u64::from(index)));
            let mut draw = |id: u32| OperatorProfile {
                id: OperatorId(id),
                mu_theta: r.mu_theta.sample(&mut rng),
                sigma_theta: r.sigma_theta.sample(&mut rng),
                revenue_slope: r.revenue_slope.sample(&mut rng),
                revenue_cv: r.revenue_cv.sample(&mut rng),
                rho: r.rho.sample(&mut rng),
                omega: r.omega.sample(&mut rng),
                mer_fraction: r.mer_fraction.sample(&mut rng),
            };
            let licensed: Vec<_> = (1..=spec.n_licensed).map(&mut draw).collect();
            let unlicensed: Vec<_> =
                (spec.n_licensed + 1..=spec.n_licensed + spec.n_unlicensed).map(&mut draw).collect();
            let scenario = MarketScenario { licensed_candidates: licensed, unlicensed_candidates: unlicensed };
            let upsilon = r.upsilon.sample(&mut rng);
            let mut alpha_l = r.alpha_l.sample(&mut rng);
            let mut alpha_u = r.alpha_u.sample(&mut rng);
            if spec.enforce_alpha_order && alpha_l > alpha_u {
                std::mem::swap(&mut alpha_l, &mut alpha_u);
            }
            let d_total = upsilon * scenario.operators().map(|p| p.mu_theta).sum::<f64>();
            GeneratedMarket { index, scenario, upsilon, d_total, alpha_l, alpha_u, t_slots: spec.t_slots }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkMode {
    /// Licence every candidate (`P = |S_L^C|`), search `M`.
    FixedP,
    /// One mean-demand-sized channel per unit of capacity (`M = ⌊D/ϑ⌋`), search `P`.
    FixedM,
    /// Partition that attracts the most entrants, ties broken by the objective.
    MaxEntrants,
}

impl fmt::Display for BenchmarkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchmarkMode::FixedP => "fixed-p",
            BenchmarkMode::FixedM => "fixed-m",
            BenchmarkMode::MaxEntrants => "max-entrants",
        })
    }
}

/// `M = max(1, ⌊D/ϑ⌋)` with ϑ the candidates' average mean demand.
pub fn fixed_m(scenario: &MarketScenario, d_total: f64) -> u32 {
    let theta = scenario.mean_demand();
    if theta <= 0.0 {
        return 1;
    }
    ((d_total / theta).floor() as u32).max(1)
}

/// The sub-optimal rule's choice among the joint grid's cells.
pub fn suboptimal_cell<'a>(
    grid: &'a [GridCell],
    mode: BenchmarkMode,
    scenario: &MarketScenario,
    d_total: f64,
) -> Option<&'a GridCell> {
    match mode {
        BenchmarkMode::FixedP => {
            let p = scenario.licensed_candidates.len() as u32;
            best_cell(grid.iter().filter(|c| c.p == p))
        }
        BenchmarkMode::FixedM => {
            let m = fixed_m(scenario, d_total);
            best_cell(grid.iter().filter(|c| c.m == m))
        }
        BenchmarkMode::MaxEntrants => {
            let mut best: Option<&GridCell> = None;
            for c in grid {
                let better = best.is_none_or(|b| (c.entrants(), c.u) > (b.entrants(), b.u));
                if better {
                    best = Some(c);
                }
            }
            best
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub market_index: u32,
    pub u_opt: f64,
    pub u_subopt: f64,
    pub delta_u_pct: f64,
    pub osa: Osa,
    pub phi: u8,
    #[serde(skip)]
    pub u_opt_std_error: f64,
    #[serde(skip)]
    pub u_subopt_std_error: f64,
    #[serde(skip)]
    pub d_total: f64,
}

impl BenchmarkRow {
    /// Three combined standard errors, in the units of `delta_u_pct`.
    pub fn noise_band_pct(&self) -> f64 {
        3.0 * self.u_opt_std_error.hypot(self.u_subopt_std_error) * 100.0 / self.d_total
    }

    /// Strictly better than the sub-optimal rule beyond Monte Carlo noise.
    pub fn significant(&self) -> bool {
        self.delta_u_pct > self.noise_band_pct()
    }
}

/// Full joint grid for one market, evaluated with common random numbers.
pub fn market_grid(market: &GeneratedMarket, osa: Osa, phi: u8, config: &McConfig, m_max: u32) -> Result<Vec<GridCell>> {
    let template = market.params(osa, phi);
    let config = McConfig { seed: combine(config.seed, u64::from(market.index)), ..config.clone() };
    let oracle = McRevenueOracle::new(market.scenario.clone(), config);
    grid_cells(&market.scenario, m_max)
        .iter()
        .map(|&(m, p)| evaluate_cell(&market.scenario, &template, &oracle, m, p))
        .collect()
}

/// Grid bound for the benchmark: the default bound, raised if needed so the
/// fixed-`M` rule's channel count is on the grid.
pub fn benchmark_m_max(market: &GeneratedMarket, m_max: Option<u32>) -> u32 {
    let base = m_max.unwrap_or_else(|| default_m_max(&market.scenario, market.d_total));
    base.max(fixed_m(&market.scenario, market.d_total))
}

/// Compares the joint optimum with each requested sub-optimal rule. Every rule
/// picks from the same evaluated grid, so the comparison carries no
/// between-run sampling noise.
pub fn run_benchmarks(
    markets: &[GeneratedMarket],
    modes: &[BenchmarkMode],
    osa: Osa,
    phi: u8,
    config: &McConfig,
    m_max: Option<u32>,
) -> Result<BTreeMap<BenchmarkMode, Vec<BenchmarkRow>>> {
    config.validate()?;
    let per_market = map_markets(markets, |market| -> Result<Vec<(BenchmarkMode, BenchmarkRow)>> {
        let grid = market_grid(market, osa, phi, config, benchmark_m_max(market, m_max))?;
        let opt = best_cell(&grid).expect("grid is never empty");
        modes
            .iter()
            .map(|&mode| {
                let sub = suboptimal_cell(&grid, mode, &market.scenario, market.d_total)
                    .ok_or_else(|| Error::InvalidScenario(format!("no grid cell matches the {mode} rule")))?;
                Ok((
                    mode,
                    BenchmarkRow {
                        market_index: market.index,
                        u_opt: opt.u,
                        u_subopt: sub.u,
                        delta_u_pct: 100.0 * (opt.u - sub.u) / market.d_total,
                        osa,
                        phi,
                        u_opt_std_error: opt.u_std_error,
                        u_subopt_std_error: sub.u_std_error,
                        d_total: market.d_total,
                    },
                ))
            })
            .collect()
    })?;
    let mut out: BTreeMap<BenchmarkMode, Vec<BenchmarkRow>> = modes.iter().map(|&m| (m, Vec::new())).collect();
    for rows in per_market {
        for (mode, row) in rows {
            out.get_mut(&mode).expect("mode listed").push(row);
        }
    }
    Ok(out)
}

pub fn run_benchmark(
    markets: &[GeneratedMarket],
    mode: BenchmarkMode,
    osa: Osa,
    phi: u8,
    config: &McConfig,
    m_max: Option<u32>,
) -> Result<Vec<BenchmarkRow>> {
    Ok(run_benchmarks(markets, &[mode], osa, phi, config, m_max)?.remove(&mode).unwrap_or_default())
}

#[cfg(feature = "parallel")]
fn map_markets<T, F>(markets: &[GeneratedMarket], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&GeneratedMarket) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    markets.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_markets<T, F>(markets: &[GeneratedMarket], f: F) -> Result<Vec<T>>
where
    F: Fn(&GeneratedMarket) -> Result<T>,
{
    markets.iter().map(f).collect()
}

/// One point of an empirical CDF for one access configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub osa: Osa,
    pub phi: u8,
    pub value: f64,
    pub cumulative_probability: f64,
}

/// Empirical CDF: sorted values with `i/n` at the `i`-th point.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

/// CDF of `delta_u_pct` per (OSA, φ) combination present in `rows`.
pub fn benchmark_cdfs(rows: &[BenchmarkRow]) -> Vec<CdfPoint> {
    let mut groups: BTreeMap<(String, u8), (Osa, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        groups.entry((r.osa.to_string(), r.phi)).or_insert((r.osa, Vec::new())).1.push(r.delta_u_pct);
    }
    groups
        .into_iter()
        .flat_map(|((_, phi), (osa, values))| {
            empirical_cdf(&values).into_iter().map(move |(value, cumulative_probability)| CdfPoint {
                osa,
                phi,
                value,
                cumulative_probability,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// `α_L = α_U = α`.
    AlphaJoint,
    /// `α_U` held at 0.9, `α_L` swept.
    AlphaL,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub m_star: u32,
    pub p_star: u32,
    pub unlicensed_share: f64,
    pub u_star: f64,
}

/// Interference-sweep market with homogeneous operators (`μ_θ = 1`,
/// `σ_θ = 0.5`, `a = 1`, `η = 0.5`, `ρ = 0.8`, `ω = 0.9`, no minimum revenue)
/// and capacity 0.8 of the summed mean demand. Opportunistic access is
/// overlay with Tier-1 participation.
pub fn sweep_market(n_licensed: u32, n_unlicensed: u32) -> (MarketScenario, MarketParams) {
    let op = |id: u32| OperatorProfile {
        id: OperatorId(id),
        mu_theta: 1.0,
        sigma_theta: 0.5,
        revenue_slope: 1.0,
        revenue_cv: 0.5,
        rho: 0.8,
        omega: 0.9,
        mer_fraction: 0.0,
    };
    let scenario = MarketScenario {
        licensed_candidates: (1..=n_licensed).map(op).collect(),
        unlicensed_candidates: (n_licensed + 1..=n_licensed + n_unlicensed).map(op).collect(),
    };
    let params = MarketParams {
        m: 1,
        p: 0,
        t_slots: DEFAULT_T_SLOTS,
        d_total: 0.8 * f64::from(n_licensed + n_unlicensed),
        phi: 1,
        alpha_l: 1.0,
        alpha_u: 1.0,
        osa: Osa::Overlay,
        bandwidth_hz: None,
    };
    (scenario, params)
}

/// Preset market and grid for a sweep kind: eight licensed candidates for the
/// joint sweep, four plus four for the licensed-only sweep.
pub fn sweep_preset(kind: SweepKind) -> (MarketScenario, MarketParams, Vec<f64>) {
    match kind {
        SweepKind::AlphaJoint => {
            let (s, p) = sweep_market(8, 0);
            (s, p, vec![0.2, 0.4, 0.6, 0.8, 1.0])
        }
        SweepKind::AlphaL => {
            let (s, p) = sweep_market(4, 4);
            (s, p, vec![0.0, 0.3, 0.6, 0.9])
        }
    }
}

pub fn run_sweep(
    scenario: &MarketScenario,
    template: &MarketParams,
    kind: SweepKind,
    grid: &[f64],
    config: &McConfig,
    m_max: Option<u32>,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("sweep grid is empty".into()));
    }
    let m_max = m_max.unwrap_or_else(|| default_m_max(scenario, template.d_total));
    grid.iter()
        .map(|&alpha| {
            let params = match kind {
                SweepKind::AlphaJoint => MarketParams { alpha_l: alpha, alpha_u: alpha, ..template.clone() },
                SweepKind::AlphaL => MarketParams { alpha_l: alpha, alpha_u: 0.9, ..template.clone() },
            };
            let oracle = McRevenueOracle::new(scenario.clone(), config.clone());
            let sol = crate::stackelberg::solve_stage1(scenario, &params, &oracle, m_max)?;
            Ok(SweepRow {
                alpha,
                m_star: sol.m_star,
                p_star: sol.p_star,
                unlicensed_share: f64::from(sol.m_star - sol.p_star) / f64::from(sol.m_star),
                u_star: sol.u_star,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A row type with a fixed CSV layout.
pub trait CsvRecord {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRecord for BenchmarkRow {
    const HEADER: &'static [&'static str] = &["market_index", "u_opt", "u_subopt", "delta_u_pct", "osa", "phi"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.market_index.to_string(),
            self.u_opt.to_string(),
            self.u_subopt.to_string(),
            self.delta_u_pct.to_string(),
            self.osa.to_string(),
            self.phi.to_string(),
        ]
    }
}

impl CsvRecord for CdfPoint {
    const HEADER: &'static [&'static str] = &["osa", "phi", "value", "cumulative_probability"];
    fn fields(&self) -> Vec<String> {
        vec![self.osa.to_string(), self.phi.to_string(), self.value.to_string(), self.cumulative_probability.to_string()]
    }
}

impl CsvRecord for SweepRow {
    const HEADER: &'static [&'static str] = &["alpha", "m_star", "p_star", "unlicensed_share", "u_star"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.alpha.to_string(),
            self.m_star.to_string(),
            self.p_star.to_string(),
            self.unlicensed_share.to_string(),
            self.u_star.to_string(),
        ]
    }
}

impl CsvRecord for GridCell {
    const HEADER: &'static [&'static str] = &["m", "p", "u", "s_l", "s_u"];
    fn fields(&self) -> Vec<String> {
        let ids = |s: &std::collections::BTreeSet<OperatorId>| {
            s.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ")
        };
        vec![self.m.to_string(), self.p.to_string(), self.u.to_string(), ids(&self.s_l), ids(&self.s_u)]
    }
}

/// Writes rows in the given format. CSV output always has a header line;
/// JSON output is a pretty-printed array.
pub fn write_rows<T: CsvRecord + Serialize, W: Write>(rows: &[T], format: Format, mut out: W) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "{}", T::HEADER.join(","))?;
            for r in rows {
                writeln!(out, "{}", r.fields().join(","))?;
            }
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    out.flush()
}

pub fn emit<T: CsvRecord + Serialize>(rows: &[T], format: Format, path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_owned(), source };
    let file = File::create(path).map_err(io)?;
    write_rows(rows, format, BufWriter::new(file)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_ranges_give_identical_markets() {
        let mut spec = ScenarioGenSpec::benchmark(5, 3);
        spec.ranges = GenRanges {
            mu_theta: Range::point(1.0),
            sigma_theta: Range::point(0.5),
            revenue_slope: Range::point(1.0),
            revenue_cv: Range::point(0.5),
            rho: Range::point(0.8),
            omega: Range::point(0.9),
            mer_fraction: Range::point(0.5),
            upsilon: Range::point(0.8),
            alpha_l: Range::point(0.8),
            alpha_u: Range::point(0.9),
        };
        let markets = generate_markets(&spec).unwrap();
        for m in &markets[1..] {
            assert_eq!(m.scenario, markets[0].scenario);
            assert_eq!(m.d_total, markets[0].d_total);
        }
        assert!((markets[0].d_total - 3.2).abs() < 1e-12);
    }

    #[test]
    fn alpha_order_is_enforced_by_swap() {
        let mut spec = ScenarioGenSpec::benchmark(200, 11);
        spec.ranges.alpha_l = Range::new(0.0, 1.0);
        spec.ranges.alpha_u = Range::new(0.0, 1.0);
        assert!(generate_markets(&spec).unwrap().iter().all(|m| m.alpha_l <= m.alpha_u));
    }

    #[test]
    fn rejects_out_of_domain_ranges() {
        let mut spec = ScenarioGenSpec::benchmark(1, 0);
        spec.ranges.rho = Range::new(0.5, 1.0);
        assert!(spec.validate().is_err());
        spec.ranges.rho = Range::new(0.6, 0.5);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn fixed_m_rule() {
        let (s, _) = sweep_market(4, 0);
        assert_eq!(fixed_m(&s, 3.2), 3);
        assert_eq!(fixed_m(&s, 0.4), 1);
    }

    #[test]
    fn cdf_ends_at_one() {
        let cdf = empirical_cdf(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(cdf.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1.0, 2.0, 2.0, 3.0]);
        assert_eq!(cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_rows::<BenchmarkRow, _>(&[], Format::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "market_index,u_opt,u_subopt,delta_u_pct,osa,phi\n");
    }

    #[test]
    fn max_entrants_breaks_ties_by_objective() {
        let cell = |m, p, u, n: u32| GridCell {
            m,
            p,
            u,
            s_l: (1..=n).map(OperatorId).collect(),
            s_u: Default::default(),
            u_std_error: 0.0,
        };
        let grid = vec![cell(1, 0, 5.0, 1), cell(1, 1, 2.0, 2), cell(2, 0, 3.0, 2), cell(2, 1, 9.0, 1)];
        let (s, _) = sweep_market(2, 0);
        let pick = suboptimal_cell(&grid, BenchmarkMode::MaxEntrants, &s, 1.6).unwrap();
        assert_eq!((pick.m, pick.p), (2, 0));
    }
}
