//! Parses a run configuration, prints its hash and the training and
//! backtest windows it lays over the data.
//!
//! `cargo run --example run_config -- [path/to/config.toml]`

use factor_mcls::cli::{self, RunConfig};

fn main() -> factor_mcls::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/djia.toml").into());
    let cfg = RunConfig::load(path.as_ref())?;
    cfg.validate()?;
    println!("config hash {}", cfg.hash());
    println!("agent seed  {}", cfg.agent_seed());

    let table = cli::load_table(&cfg)?.table;
    let w = cli::windows(&cfg, &table)?;
    let dates = table.dates();
    for (name, env) in [("train", &w.train), ("backtest", &w.backtest)] {
        let grid = env.grid(table.num_days())?;
        let first = grid.first_decision_index();
        let last = first + env.horizon * env.k;
        println!("{name:<9} {} periods, {} .. {}", env.horizon, dates[first], dates[last]);
    }
    let names: Vec<&str> = cfg.strategies()?.iter().map(|s| s.name()).collect();
    println!("benchmarks: {}", names.join(" "));
    Ok(())
}
