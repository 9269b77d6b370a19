//! Command-line front end: `ingest`, `train`, `backtest`, `bench` and `report`.
//!
//! One TOML file configures a run; command-line flags override it, and the
//! `FACTOR_MCLS_OUT` environment variable overrides the output directory
//! unless `--out` is given.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{self, Agent, AgentConfig, AgentSpec, Mode, TrainingTrace};
use crate::backtest::{self, BenchConfig, EquityCurve, MetricReport, Report, AGENT_NAME};
use crate::baselines::{BaselineProvider, Strategy, StrategyKind, WeightsProvider};
use crate::data::{self, PeriodGrid, PriceTable};
use crate::env::{EnvConfig, TradingEnv};
use crate::error::Error;
use crate::seed;
use crate::synthetic::{self, MarketSpec};

pub const OUT_ENV: &str = "FACTOR_MCLS_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Built-in price sources for offline runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSource {
    /// 29 large caps driven by a one-factor model.
    Djia { seed: u64 },
    /// One asset compounding at `drift` per day, the rest flat.
    Drift {
        n: usize,
        k: usize,
        m: usize,
        horizon: usize,
        drift: f64,
    },
}

impl SyntheticSource {
    pub fn build(&self) -> PriceTable {
        match *self {
            SyntheticSource::Djia { seed } => MarketSpec::djia_like(seed).build(),
            SyntheticSource::Drift { n, k, m, horizon, drift } => synthetic::drift_table(n, k, m, horizon, drift),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `date,ticker,adj_close` file.
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSource>,
    /// Ticker allow-list; empty keeps every ticker.
    pub tickers: Vec<String>,
    /// Date of the first training rebalance; overrides `env.first_decision_index`.
    pub first_decision_date: Option<NaiveDate>,
}

/// Where the baseline weights in the agent's state come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSource {
    EqualWeight,
    Momentum {
        #[serde(default)]
        window: usize,
        #[serde(default = "one")]
        temperature: f64,
    },
    /// `period_index,w_1..w_n` rows, periods numbered from 1 within each window.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl Default for BaselineSource {
    fn default() -> Self {
        BaselineSource::EqualWeight
    }
}

impl BaselineSource {
    pub fn provider(&self) -> Result<BaselineProvider, Error> {
        match self {
            BaselineSource::EqualWeight => Ok(BaselineProvider::EqualWeight),
            BaselineSource::Momentum { window, temperature } => Ok(BaselineProvider::Momentum {
                window: *window,
                temperature: *temperature,
            }),
            BaselineSource::File { path } => BaselineProvider::read_rows(open(path)?),
        }
    }
}

/// Held-out evaluation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// First rebalance date; defaults to the day training ends.
    pub start: Option<NaiveDate>,
    pub periods: usize,
    pub risk_free: f64,
    pub min_acceptable: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            start: None,
            periods: 24,
            risk_free: 0.0,
            min_acceptable: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Not part of the config hash.
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub baseline: BaselineSource,
    pub backtest: BacktestConfig,
    pub bench: BenchConfig,
    /// Per-strategy parameter overrides keyed by strategy name.
    pub benchmarks: BTreeMap<String, serde_json::Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            baseline: BaselineSource::default(),
            backtest: BacktestConfig::default(),
            bench: BenchConfig::default(),
            benchmarks: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 over the canonical JSON form, with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.env.validate()?;
        if self.data.path.is_some() == self.data.synthetic.is_some() {
            return Err(Error::Config("set exactly one of data.path and data.synthetic".into()));
        }
        if self.backtest.periods == 0 {
            return Err(Error::Config("backtest.periods must be positive".into()));
        }
        self.strategies()?;
        Ok(())
    }

    /// Every benchmark strategy with the configured overrides applied.
    pub fn strategies(&self) -> Result<Vec<Strategy>, Error> {
        for name in self.benchmarks.keys() {
            StrategyKind::from_name(name)?;
        }
        StrategyKind::ALL
            .into_iter()
            .map(|kind| {
                let base = Strategy::default_for(kind);
                let over = self
                    .benchmarks
                    .iter()
                    .find(|(name, _)| name.eq_ignore_ascii_case(kind.name()))
                    .map(|(_, v)| v);
                match over {
                    Some(v) => base.with_overrides(v),
                    None => Ok(base),
                }
            })
            .collect()
    }

    pub fn agent_seed(&self) -> u64 {
        seed::derive(self.seed, "agent")
    }

    pub fn stamp(&self) -> Vec<String> {
        vec![format!("schema=1 config_hash={} seed={}", self.hash(), self.seed)]
    }
}

/// Training and backtest windows laid over one table.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    pub train: EnvConfig,
    pub backtest: EnvConfig,
}

/// Splits the table into a training window and a disjoint backtest window
/// that starts where training ends.
pub fn windows(cfg: &RunConfig, table: &PriceTable) -> Result<Windows, Error> {
    let mut train = cfg.env.clone();
    if let Some(date) = cfg.data.first_decision_date {
        train.first_decision_index = Some(first_on_or_after(table, date)?);
    }
    let fitted = PeriodGrid::fit(table.num_days(), train.k, train.m, train.first_decision_index)?;
    let first = fitted.first_decision_index();
    let k = train.k;
    let bt_periods = cfg.backtest.periods;
    let bt_first = match cfg.backtest.start {
        Some(date) => {
            let idx = first_on_or_after(table, date)?;
            if train.horizon == 0 {
                if idx < first + k {
                    return Err(Error::Config("backtest starts before one training period fits".into()));
                }
                train.horizon = (idx - first) / k;
            }
            idx
        }
        None => {
            if train.horizon == 0 {
                train.horizon = fitted.num_periods().checked_sub(bt_periods).filter(|h| *h > 0).ok_or_else(|| {
                    Error::InsufficientHistory(format!(
                        "{} periods cannot hold training plus a {bt_periods}-period backtest",
                        fitted.num_periods()
                    ))
                })?;
            }
            first + train.horizon * k
        }
    };
    if first + train.horizon * k > bt_first {
        return Err(Error::Config("backtest window overlaps the training window".into()));
    }
    train.first_decision_index = Some(first);
    train.grid(table.num_days())?;
    let mut backtest = train.clone();
    backtest.first_decision_index = Some(bt_first);
    backtest.horizon = bt_periods;
    backtest.grid(table.num_days())?;
    Ok(Windows { train, backtest })
}

fn first_on_or_after(table: &PriceTable, date: NaiveDate) -> Result<usize, Error> {
    table
        .dates()
        .iter()
        .position(|d| *d >= date)
        .ok_or_else(|| Error::OutOfRange(format!("no trading day on or after {date}")))
}

#[derive(Debug, Parser)]
#[command(name = "factor-mcls", version, about = "Multi-critic portfolio agent with factor-decomposed rewards")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config and the environment).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Price file, replacing the configured data source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated ticker allow-list.
    #[arg(long, value_delimiter = ',')]
    pub tickers: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a price file and write a normalized cache.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Train the agent; writes a checkpoint and the training trace.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a checkpoint over the backtest window.
    Backtest {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory; defaults to `<out>/checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the benchmark strategies (and optionally the agent) over the backtest window.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of strategy names.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Turn traces, reports and equity curves into plot-ready series.
    Report {
        /// Directory holding trace.csv, report.csv and equity_*.csv; defaults to the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Destination of the series; defaults to `<input>/plots`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::UnknownStrategy(_) => EXIT_CONFIG,
            Error::NonFinite(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest { common } => cmd_ingest(&resolve(&common, |_| {})?),
        Command::Train { common, mode, episodes } => {
            let cfg = resolve(&common, |c| {
                if let Some(m) = mode {
                    c.agent.mode = m;
                }
                if let Some(e) = episodes {
                    c.agent.episodes = e;
                }
            })?;
            cmd_train(&cfg)
        }
        Command::Backtest { common, checkpoint } => {
            let cfg = resolve(&common, |_| {})?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.out_dir.join("checkpoint"));
            cmd_backtest(&cfg, &ckpt)
        }
        Command::Bench { common, only, checkpoint } => {
            let cfg = resolve(&common, |_| {})?;
            cmd_bench(&cfg, only.as_deref(), checkpoint.as_deref())
        }
        Command::Report { input, out } => {
            let input = input.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
            let out = out.unwrap_or_else(|| input.join("plots"));
            cmd_report(&input, &out)
        }
    }
}

/// Config file, then environment, then flags.
pub fn resolve(common: &Common, extra: impl FnOnce(&mut RunConfig)) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = std::env::var_os(OUT_ENV) {
        cfg.out_dir = PathBuf::from(dir);
    }
    if let Some(dir) = &common.out {
        cfg.out_dir = dir.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = &common.data {
        cfg.data.path = Some(p.clone());
        cfg.data.synthetic = None;
    }
    if let Some(t) = &common.tickers {
        cfg.data.tickers = t.clone();
    }
    extra(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Loads the configured price table, applying the ticker allow-list.
pub fn load_table(cfg: &RunConfig) -> Result<data::LoadedTable, Error> {
    let allow = (!cfg.data.tickers.is_empty()).then_some(cfg.data.tickers.as_slice());
    match (&cfg.data.path, &cfg.data.synthetic) {
        (Some(p), _) => data::load_price_table(open(p)?, allow),
        (None, Some(s)) => {
            let table = s.build();
            let table = match allow {
                Some(list) => {
                    let idx = list
                        .iter()
                        .map(|t| {
                            table
                                .tickers()
                                .iter()
                                .position(|x| x == t)
                                .ok_or_else(|| Error::Config(format!("ticker {t} not in synthetic source")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    table.select(&idx)?
                }
                None => table,
            };
            Ok(data::LoadedTable {
                table,
                dropped: Vec::new(),
            })
        }
        (None, None) => Err(Error::Config("no data source configured".into())),
    }
}

/// The stored config is the hashed form, so `out_dir` is blank.
fn write_run_stamp(cfg: &RunConfig, dir: &Path) -> Result<(), Error> {
    let mut hashed = cfg.clone();
    hashed.out_dir = PathBuf::new();
    let doc = serde_json::json!({
        "schema": 1,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "config": hashed,
    });
    let mut f = create(&dir.join("run.json"))?;
    serde_json::to_writer_pretty(&mut f, &doc)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn cmd_ingest(cfg: &RunConfig) -> CliResult<()> {
    let loaded = load_table(cfg)?;
    let t = &loaded.table;
    println!(
        "n={} days={} first={} last={}",
        t.num_assets(),
        t.num_days(),
        t.dates()[0],
        t.dates()[t.num_days() - 1]
    );
    for d in &loaded.dropped {
        println!("dropped {} (missing {} of {} dates)", d.ticker, d.missing_dates, d.total_dates);
    }
    let path = cfg.out_dir.join("prices.csv");
    let mut f = create(&path)?;
    t.write_csv(&mut f).map_err(CliError::from)?;
    f.flush().map_err(Error::from)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn build_env(table: Arc<PriceTable>, env_cfg: EnvConfig, cfg: &RunConfig) -> Result<TradingEnv, Error> {
    let provider: Arc<dyn WeightsProvider> = Arc::new(cfg.baseline.provider()?);
    TradingEnv::new(table, env_cfg, provider)
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let table = Arc::new(load_table(cfg)?.table);
    let w = windows(cfg, &table)?;
    let mut env = build_env(table.clone(), w.train.clone(), cfg)?;
    let spec = AgentSpec::from_env(&w.train, table.num_assets());
    let mut agent = Agent::new(cfg.agent.clone(), spec, cfg.agent_seed())?;
    let outcome = agent::train(&mut agent, &mut env)?;
    write_run_stamp(cfg, &cfg.out_dir)?;
    let mut f = create(&cfg.out_dir.join("trace.csv"))?;
    outcome.trace.write_csv(&mut f, &cfg.stamp())?;
    f.flush().map_err(Error::from)?;
    if let Some(msg) = outcome.aborted {
        return Err(CliError {
            code: EXIT_NUMERIC,
            message: msg,
        });
    }
    let ckpt = cfg.out_dir.join("checkpoint");
    agent.save(&ckpt)?;
    write_run_stamp(cfg, &ckpt)?;
    if let Some(last) = outcome.trace.records.last() {
        println!(
            "episodes={} AR={} ARD={} AV={} NPRW={}/{}",
            agent.episodes_done(),
            last.ar,
            last.ard,
            last.av,
            last.nprw,
            w.train.horizon
        );
    }
    Ok(())
}

fn write_curve(cfg: &RunConfig, name: &str, curve: &EquityCurve) -> Result<(), Error> {
    let mut f = create(&cfg.out_dir.join(format!("equity_{name}.csv")))?;
    curve.write_csv(&mut f, &cfg.stamp())?;
    f.flush()?;
    Ok(())
}

fn write_report(cfg: &RunConfig, report: &Report) -> Result<(), Error> {
    let mut f = create(&cfg.out_dir.join("report.csv"))?;
    report.write_csv(&mut f, &cfg.stamp())?;
    f.flush()?;
    let mut j = create(&cfg.out_dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut j, &report.document(&cfg.hash(), cfg.seed))?;
    writeln!(j)?;
    j.flush()?;
    Ok(())
}

fn curve_metrics(cfg: &RunConfig, curve: &EquityCurve) -> Result<MetricReport, Error> {
    backtest::metrics(&backtest::daily_returns(curve)?, cfg.backtest.risk_free, cfg.backtest.min_acceptable)
}

fn agent_curve(cfg: &RunConfig, table: Arc<PriceTable>, w: &Windows, ckpt: &Path) -> Result<EquityCurve, Error> {
    let agent = Agent::load(ckpt)?;
    if agent.spec().n != table.num_assets() || agent.spec().k != w.backtest.k || agent.spec().m != w.backtest.m {
        return Err(Error::dim("checkpoint was trained for a different asset count or grid"));
    }
    let env = build_env(table, w.backtest.clone(), cfg)?;
    let mut policy = &agent;
    backtest::run_backtest(&mut policy, &env)
}

pub fn cmd_backtest(cfg: &RunConfig, ckpt: &Path) -> CliResult<()> {
    let table = Arc::new(load_table(cfg)?.table);
    let w = windows(cfg, &table)?;
    let curve = agent_curve(cfg, table, &w, ckpt)?;
    write_run_stamp(cfg, &cfg.out_dir)?;
    write_curve(cfg, AGENT_NAME, &curve)?;
    let mut trades = create(&cfg.out_dir.join(format!("trades_{AGENT_NAME}.csv")))?;
    curve.write_trades_csv(&mut trades)?;
    trades.flush().map_err(Error::from)?;
    let m = curve_metrics(cfg, &curve)?;
    let mut report = Report::default();
    report.rows.insert(AGENT_NAME.to_string(), m);
    write_report(cfg, &report)?;
    println!("{AGENT_NAME}: AR={} DR={} Std={} days={}", m.ar, m.dr, m.std, m.days);
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig, only: Option<&[String]>, ckpt: Option<&Path>) -> CliResult<()> {
    let table = Arc::new(load_table(cfg)?.table);
    let w = windows(cfg, &table)?;
    let grid = w.backtest.grid(table.num_days())?;
    let mut strategies = cfg.strategies()?;
    if let Some(names) = only {
        let kinds = names.iter().map(|n| StrategyKind::from_name(n)).collect::<Result<Vec<_>, _>>()?;
        strategies.retain(|s| kinds.contains(&s.kind()));
    }
    let curves: Vec<(String, EquityCurve)> = strategies
        .par_iter()
        .map(|s| backtest::run_benchmark(s, &table, &grid, &cfg.bench).map(|c| (s.name().to_string(), c)))
        .collect::<Result<_, _>>()?;
    let mut all = curves;
    if let Some(dir) = ckpt {
        all.push((AGENT_NAME.to_string(), agent_curve(cfg, table.clone(), &w, dir)?));
    }
    write_run_stamp(cfg, &cfg.out_dir)?;
    let mut report = Report::default();
    for (name, curve) in &all {
        write_curve(cfg, name, curve)?;
        report.rows.insert(name.clone(), curve_metrics(cfg, curve)?);
    }
    write_report(cfg, &report)?;
    for row in report.rows_ordered() {
        println!("{:<12} AR={:.5} SR={}", row.strategy, row.metrics.ar, row.metrics.sr.map_or("undefined".into(), |v| format!("{v:.5}")));
    }
    Ok(())
}

/// Reads an equity dump back into `(date, total_value)` rows.
pub fn read_equity(path: &Path) -> Result<Vec<(String, f64)>, Error> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v = rec[1].parse().map_err(|e| Error::Parse {
            line: out.len() + 2,
            msg: format!("total_value: {e}"),
        })?;
        out.push((rec[0].to_string(), v));
    }
    Ok(out)
}

pub fn cmd_report(input: &Path, out: &Path) -> CliResult<()> {
    let trace_path = input.join("trace.csv");
    let report_path = input.join("report.csv");
    let mut curves: Vec<(String, PathBuf)> = Vec::new();
    if input.is_dir() {
        for entry in fs::read_dir(input).map_err(Error::from)? {
            let path = entry.map_err(Error::from)?.path();
            let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            if let Some(strategy) = name.strip_prefix("equity_").and_then(|s| s.strip_suffix(".csv")) {
                curves.push((strategy.to_string(), path));
            }
        }
    }
    curves.sort();
    if !trace_path.exists() && !report_path.exists() && curves.is_empty() {
        return Err(CliError {
            code: EXIT_DATA,
            message: format!("no trace, report or equity files in {}", input.display()),
        });
    }
    fs::create_dir_all(out).map_err(Error::from)?;
    if trace_path.exists() {
        let trace = TrainingTrace::read_csv(open(&trace_path)?)?;
        let mut f = create(&out.join("training_returns.csv"))?;
        writeln!(f, "stage,ar,ard,av,npr,nprw").map_err(Error::from)?;
        for r in &trace.records {
            writeln!(f, "{},{},{},{},{},{}", r.stage, r.ar, r.ard, r.av, r.npr, r.nprw).map_err(Error::from)?;
        }
        f.flush().map_err(Error::from)?;
        let mut f = create(&out.join("training_losses.csv"))?;
        writeln!(f, "stage,l_pi,l_pi_wr,pi,lq_total,lq_re,lq_va,lq_co,lq_ts,l_phi").map_err(Error::from)?;
        for r in &trace.records {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{}",
                r.stage, r.l_pi, r.l_pi_wr, r.pi, r.lq_total, r.lq_re, r.lq_va, r.lq_co, r.lq_ts, r.l_phi
            )
            .map_err(Error::from)?;
        }
        f.flush().map_err(Error::from)?;
    }
    if report_path.exists() {
        let report = Report::read_csv(open(&report_path)?)?;
        let mut f = create(&out.join("risk_return.csv"))?;
        writeln!(f, "strategy,std,lstd,dr,sr,str").map_err(Error::from)?;
        for name in report.ordered_names() {
            let m = &report.rows[name];
            let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
            writeln!(f, "{name},{},{},{},{},{}", m.std, m.lstd, m.dr, opt(m.sr), opt(m.str)).map_err(Error::from)?;
        }
        f.flush().map_err(Error::from)?;
    }
    if !curves.is_empty() {
        let mut f = create(&out.join("equity_curves.csv"))?;
        writeln!(f, "strategy,day,date,total_value").map_err(Error::from)?;
        for (name, path) in &curves {
            for (day, (date, v)) in read_equity(path)?.into_iter().enumerate() {
                writeln!(f, "{name},{},{date},{v}", day + 1).map_err(Error::from)?;
            }
        }
        f.flush().map_err(Error::from)?;
    }
    println!("wrote plot series to {}", out.display());
    Ok(())
}
