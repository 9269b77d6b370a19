//! Train on a two-asset market where one asset drifts upward and the other is flat.
//!
//! Run with `cargo run --release --example train_drift -- [episodes] [mode]`.

use std::sync::Arc;
use std::time::Instant;

use factor_mcls::agent::{train, Agent, AgentConfig, AgentSpec, Mode};
use factor_mcls::baselines::BaselineProvider;
use factor_mcls::env::{EnvConfig, TradingEnv};
use factor_mcls::synthetic;

fn main() -> factor_mcls::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map(|s| s.parse().expect("episode count")).unwrap_or(60);
    let mode: Mode = args.next().map(|s| s.parse()).transpose()?.unwrap_or(Mode::Full);

    let table = Arc::new(synthetic::drift_table(2, 5, 4, 100, 0.002));
    let env_cfg = EnvConfig {
        k: 5,
        m: 4,
        horizon: 100,
        ..EnvConfig::default()
    };
    let mut env = TradingEnv::new(table, env_cfg.clone(), Arc::new(BaselineProvider::EqualWeight))?;
    let cfg = AgentConfig {
        hidden: vec![64, 64],
        batch_size: 32,
        episodes,
        warmup_episodes: 10,
        actor_lr: 1e-3,
        mode,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(cfg, AgentSpec::from_env(&env_cfg, 2), 42)?;

    let start = Instant::now();
    let outcome = train(&mut agent, &mut env)?;
    let first = &outcome.trace.records[0];
    let last = outcome.trace.records.last().expect("at least the initial record");
    println!("mode={mode} episodes={episodes} elapsed={:.1?}", start.elapsed());
    println!("initial: ARD={:.5} AR={:.5} NPRW={} AV={:e}", first.ard, first.ar, first.nprw, first.av);
    println!("final:   ARD={:.5} AR={:.5} NPRW={} AV={:e}", last.ard, last.ar, last.nprw, last.av);
    if let Some(msg) = outcome.aborted {
        println!("aborted: {msg}");
    }
    Ok(())
}
