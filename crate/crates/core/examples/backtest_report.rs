//! Trains briefly on the early part of a synthetic market, then backtests
//! the agent and a few benchmarks on the held-out tail and prints the report.
//!
//! `cargo run --release --example backtest_report`

use std::sync::Arc;

use factor_mcls::agent::{self, Agent, AgentConfig, AgentSpec};
use factor_mcls::backtest::{self, BenchConfig, Report, AGENT_NAME};
use factor_mcls::baselines::{BaselineProvider, Strategy};
use factor_mcls::env::{EnvConfig, TradingEnv};
use factor_mcls::synthetic::MarketSpec;

fn main() -> factor_mcls::Result<()> {
    let table = Arc::new(MarketSpec::djia_like(5).build().select(&[0, 3, 9, 16, 20])?);
    let train_cfg = EnvConfig {
        k: 5,
        m: 4,
        horizon: 120,
        first_decision_index: Some(20),
        ..EnvConfig::default()
    };
    let mut test_cfg = train_cfg.clone();
    test_cfg.first_decision_index = Some(20 + 120 * 5);
    test_cfg.horizon = 24;

    let provider = Arc::new(BaselineProvider::EqualWeight);
    let mut train_env = TradingEnv::new(table.clone(), train_cfg.clone(), provider.clone())?;
    let cfg = AgentConfig {
        hidden: vec![32, 32],
        batch_size: 32,
        warmup_episodes: 2,
        episodes: 8,
        ..AgentConfig::default()
    };
    let mut a = Agent::new(cfg, AgentSpec::from_env(&train_cfg, table.num_assets()), 1)?;
    agent::train(&mut a, &mut train_env)?;

    let test_env = TradingEnv::new(table.clone(), test_cfg.clone(), provider)?;
    let mut report = Report::default();
    let mut policy = &a;
    let curve = backtest::run_backtest(&mut policy, &test_env)?;
    report.rows.insert(AGENT_NAME.into(), backtest::metrics(&backtest::daily_returns(&curve)?, 0.0, 0.0)?);

    let grid = test_cfg.grid(table.num_days())?;
    for s in Strategy::all_defaults().into_iter().filter(|s| ["UBAH", "CRP", "OLMAR", "PAMR"].contains(&s.name())) {
        let c = backtest::run_benchmark(&s, &table, &grid, &BenchConfig::default())?;
        report.rows.insert(s.name().into(), backtest::metrics(&backtest::daily_returns(&c)?, 0.0, 0.0)?);
    }
    let mut out = std::io::stdout().lock();
    report.write_csv(&mut out, &["backtest over 24 held-out periods".into()])?;
    Ok(())
}
