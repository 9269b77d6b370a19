//! Runs every benchmark strategy over a synthetic 29-asset market and prints
//! a metric table.
//!
//! `cargo run --release --example benchmark_suite -- [seed] [periods]`

use std::time::Instant;

use factor_mcls::backtest::{self, BenchConfig, Report};
use factor_mcls::baselines::Strategy;
use factor_mcls::data::PeriodGrid;
use factor_mcls::synthetic::MarketSpec;

fn main() -> factor_mcls::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let periods: Option<usize> = args.next().map(|s| s.parse().expect("periods"));

    let table = MarketSpec::djia_like(seed).build();
    let fitted = PeriodGrid::fit(table.num_days(), 5, 10, None)?;
    let grid = match periods {
        Some(p) => PeriodGrid::new(5, 10, fitted.first_decision_index(), p, table.num_days())?,
        None => fitted,
    };
    println!("{} assets, {} periods of 5 days", table.num_assets(), grid.num_periods());

    let mut report = Report::default();
    for strategy in Strategy::all_defaults() {
        let t0 = Instant::now();
        let curve = backtest::run_benchmark(&strategy, &table, &grid, &BenchConfig::default())?;
        let m = backtest::metrics(&backtest::daily_returns(&curve)?, 0.0, 0.0)?;
        println!("{:<8} {:>8.2}s", strategy.name(), t0.elapsed().as_secs_f64());
        report.rows.insert(strategy.name().to_string(), m);
    }
    report.write_csv(std::io::stdout().lock(), &[])?;
    Ok(())
}
