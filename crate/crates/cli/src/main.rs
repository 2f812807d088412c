use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spectrum_partition::experiments::{
    self, benchmark_cdfs, generate_markets, run_benchmark, run_sweep, sweep_preset, BenchmarkMode, CsvRecord, Format,
    GeneratedMarket, ScenarioGenSpec, SweepKind,
};
use spectrum_partition::io::{load_scenario, read_json};
use spectrum_partition::montecarlo::{estimate, estimate_logged, McConfig, SampleLog};
use spectrum_partition::stackelberg::{default_m_max, solve_stage1, solve_stage2, McRevenueOracle};
use spectrum_partition::{OperatorId, Osa};

/// Joint spectrum partitioning and licensing solver.
///
/// Every option can also be set through an environment variable named
/// `SPECPART_<OPTION>`, e.g. `SPECPART_SEED=7` or `SPECPART_RMAX=1000000`.
/// Command-line flags take precedence.
#[derive(Parser, Debug)]
#[command(name = "specpart", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment seed.
    #[arg(long, global = true, env = "SPECPART_SEED", default_value_t = 0)]
    seed: u64,
    /// Maximum acceptable percentage error of the estimator.
    #[arg(long, global = true, env = "SPECPART_BETA1", default_value_t = 1.0)]
    beta1: f64,
    /// Minimum probability of meeting the error bound.
    #[arg(long, global = true, env = "SPECPART_BETA2", default_value_t = 0.99)]
    beta2: f64,
    /// Minimum number of samples per estimate.
    #[arg(long, global = true, env = "SPECPART_RMIN", default_value_t = 10_000)]
    rmin: u64,
    /// Sample budget per estimate.
    #[arg(long, global = true, env = "SPECPART_RMAX", default_value_t = 10_000_000)]
    rmax: u64,
    /// Largest channel count searched (default: derived from the market).
    #[arg(long, global = true, env = "SPECPART_MMAX")]
    mmax: Option<u32>,
    /// Output file (default: standard output).
    #[arg(long, global = true, env = "SPECPART_OUT")]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, env = "SPECPART_FORMAT", value_enum)]
    format: Option<OutFormat>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPECPART_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    FixedP,
    FixedM,
    MaxEntrants,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    AlphaJoint,
    AlphaL,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum OsaArg {
    Overlay,
    Interweave,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum PhiArg {
    #[value(name = "0")]
    Zero,
    #[value(name = "1")]
    One,
    All,
}

#[derive(Args, Debug)]
struct MarketSource {
    /// Markets written by `gen`.
    #[arg(long, conflicts_with = "spec")]
    markets: Option<PathBuf>,
    /// Generation spec (JSON); the seed comes from `--seed`.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of markets to generate when no file is given.
    #[arg(long, default_value_t = 200)]
    n_markets: u32,
    /// Licensed candidates per generated market (default depends on the mode).
    #[arg(long)]
    licensed: Option<u32>,
    /// Unlicensed candidates per generated market (default depends on the mode).
    #[arg(long)]
    unlicensed: Option<u32>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate random markets.
    Gen {
        #[command(flatten)]
        source: MarketSource,
    },
    /// Optimise (M, P) for one scenario.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Market entry at a fixed partition.
    Stage2 {
        #[arg(long)]
        scenario: PathBuf,
        /// Channel count (default: the scenario's `m`).
        #[arg(long)]
        m: Option<u32>,
        /// Licensed channel count (default: the scenario's `p`).
        #[arg(long)]
        p: Option<u32>,
    },
    /// Estimate utilisation and revenues for fixed interested sets.
    Estimate {
        #[arg(long)]
        scenario: PathBuf,
        /// Interested licensed operators (default: every licensed candidate).
        #[arg(long, value_delimiter = ',')]
        licensed: Option<Vec<u32>>,
        /// Interested unlicensed operators (default: every unlicensed candidate).
        #[arg(long, value_delimiter = ',')]
        unlicensed: Option<Vec<u32>>,
        /// Also write every sample to this CSV file.
        #[arg(long)]
        sample_log: Option<PathBuf>,
    },
    /// Compare the joint optimum with a sub-optimal partition rule.
    Benchmark {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[command(flatten)]
        source: MarketSource,
        #[arg(long, value_enum, default_value = "all")]
        osa: OsaArg,
        #[arg(long, value_enum, default_value = "all")]
        phi: PhiArg,
        /// Also write the per-configuration CDFs of the improvement here.
        #[arg(long)]
        cdf_out: Option<PathBuf>,
    },
    /// Sweep the interference parameters on the preset homogeneous markets.
    Sweep {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Sweep values (default: the preset grid).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    run(&cli)
}

impl Common {
    fn mc(&self) -> McConfig {
        McConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            r_min: self.rmin,
            r_max: self.rmax,
            seed: self.seed,
            ..McConfig::default()
        }
    }

    fn format(&self, default: Format) -> Format {
        self.format.map_or(default, Format::from)
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(std::io::BufWriter::new(
                std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
            )),
            None => Box::new(std::io::stdout().lock()),
        })
    }

    fn json<T: Serialize>(&self, value: &T) -> Result<()> {
        if matches!(self.format, Some(OutFormat::Csv)) {
            bail!("this command only writes JSON");
        }
        let mut out = self.sink()?;
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    fn table<T: CsvRecord + Serialize>(&self, rows: &[T], default: Format) -> Result<()> {
        let out = self.sink()?;
        experiments::write_rows(rows, self.format(default), out).context("writing output")
    }
}

fn ids(list: Option<&Vec<u32>>, all: Vec<OperatorId>) -> BTreeSet<OperatorId> {
    match list {
        Some(v) => v.iter().map(|&k| OperatorId(k)).collect(),
        None => all.into_iter().collect(),
    }
}

fn markets(source: &MarketSource, seed: u64, default_shape: (u32, u32)) -> Result<Vec<GeneratedMarket>> {
    if let Some(path) = &source.markets {
        return Ok(read_json(path)?);
    }
    let mut spec = match &source.spec {
        Some(path) => read_json::<ScenarioGenSpec>(path)?,
        None => ScenarioGenSpec {
            n_licensed: default_shape.0,
            n_unlicensed: default_shape.1,
            ..ScenarioGenSpec::benchmark(source.n_markets, seed)
        },
    };
    spec.seed = seed;
    if let Some(n) = source.licensed {
        spec.n_licensed = n;
    }
    if let Some(n) = source.unlicensed {
        spec.n_unlicensed = n;
    }
    Ok(generate_markets(&spec)?)
}

fn write_file<T: CsvRecord + Serialize>(path: &Path, rows: &[T], format: Format) -> Result<()> {
    Ok(experiments::emit(rows, format, path)?)
}

fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Gen { source } => {
            let markets = markets(source, c.seed, (4, 0))?;
            c.json(&markets)
        }
        Command::Solve { scenario } => {
            let doc = load_scenario(scenario)?;
            let s = doc.scenario();
            let m_max = c.mmax.unwrap_or_else(|| default_m_max(&s, doc.market.d_total));
            let oracle = McRevenueOracle::new(s.clone(), c.mc());
            let sol = solve_stage1(&s, &doc.market, &oracle, m_max)?;
            match c.format(Format::Json) {
                Format::Json => c.json(&sol),
                Format::Csv => c.table(&sol.grid, Format::Csv),
            }
        }
        Command::Stage2 { scenario, m, p } => {
            let doc = load_scenario(scenario)?;
            let s = doc.scenario();
            let params = doc.market.with_partition(m.unwrap_or(doc.market.m), p.unwrap_or(doc.market.p));
            let oracle = McRevenueOracle::new(s.clone(), c.mc());
            c.json(&solve_stage2(&s, &params, &oracle)?)
        }
        Command::Estimate { scenario, licensed, unlicensed, sample_log } => {
            let doc = load_scenario(scenario)?;
            let s = doc.scenario();
            let s_l = ids(licensed.as_ref(), s.licensed_ids());
            let s_u = ids(unlicensed.as_ref(), s.unlicensed_ids());
            let est = match sample_log {
                Some(path) => {
                    let mut log = SampleLog::default();
                    let est = estimate_logged(&s, &s_l, &s_u, &doc.market, &c.mc(), &mut log)?;
                    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    log.write_csv(std::io::BufWriter::new(file))
                        .with_context(|| format!("writing {}", path.display()))?;
                    est
                }
                None => estimate(&s, &s_l, &s_u, &doc.market, &c.mc())?,
            };
            c.json(&est)
        }
        Command::Benchmark { mode, source, osa, phi, cdf_out } => {
            let (mode, shape) = match mode {
                ModeArg::FixedP => (BenchmarkMode::FixedP, (4, 0)),
                ModeArg::FixedM => (BenchmarkMode::FixedM, (4, 0)),
                ModeArg::MaxEntrants => (BenchmarkMode::MaxEntrants, (3, 3)),
            };
            let markets = markets(source, c.seed, shape)?;
            let osas: Vec<Osa> = [(OsaArg::Overlay, Osa::Overlay), (OsaArg::Interweave, Osa::Interweave)]
                .into_iter()
                .filter(|(a, _)| *osa == OsaArg::All || osa == a)
                .map(|(_, o)| o)
                .collect();
            let phis: Vec<u8> = [(PhiArg::Zero, 0), (PhiArg::One, 1)]
                .into_iter()
                .filter(|(a, _)| *phi == PhiArg::All || phi == a)
                .map(|(_, v)| v)
                .collect();
            let mut rows = Vec::new();
            for &o in &osas {
                for &f in &phis {
                    rows.extend(run_benchmark(&markets, mode, o, f, &c.mc(), c.mmax)?);
                }
            }
            if let Some(path) = cdf_out {
                write_file(path, &benchmark_cdfs(&rows), c.format(Format::Csv))?;
            }
            c.table(&rows, Format::Csv)
        }
        Command::Sweep { kind, grid } => {
            let kind = match kind {
                KindArg::AlphaJoint => SweepKind::AlphaJoint,
                KindArg::AlphaL => SweepKind::AlphaL,
            };
            let (scenario, template, preset) = sweep_preset(kind);
            let grid = grid.clone().unwrap_or(preset);
            let rows = run_sweep(&scenario, &template, kind, &grid, &c.mc(), c.mmax)?;
            c.table(&rows, Format::Csv)
        }
    }
}
