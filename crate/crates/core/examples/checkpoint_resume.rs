//! Trains for a few episodes, saves a checkpoint, reloads it and keeps
//! training up to a larger episode budget.
//!
//! `cargo run --release --example checkpoint_resume`

use std::sync::Arc;

use factor_mcls::agent::{self, Agent, AgentConfig, AgentSpec};
use factor_mcls::baselines::BaselineProvider;
use factor_mcls::env::{EnvConfig, TradingEnv};
use factor_mcls::synthetic;

fn env() -> factor_mcls::Result<TradingEnv> {
    let cfg = EnvConfig {
        k: 5,
        m: 4,
        horizon: 20,
        ..EnvConfig::default()
    };
    let table = Arc::new(synthetic::gbm_table(3, 5 * 4 + 20 * 5 + 1, 0.0004, 0.015, 2));
    TradingEnv::new(table, cfg, Arc::new(BaselineProvider::EqualWeight))
}

fn main() -> factor_mcls::Result<()> {
    let dir = std::env::temp_dir().join("factor-mcls-checkpoint-example");
    let mut e = env()?;
    let cfg = AgentConfig {
        hidden: vec![32, 32],
        batch_size: 16,
        warmup_episodes: 1,
        episodes: 3,
        ..AgentConfig::default()
    };
    let mut a = Agent::new(cfg, AgentSpec::from_env(e.config(), e.num_assets()), 99)?;
    let first = agent::train(&mut a, &mut e)?.trace;
    a.save(&dir)?;
    println!("saved after {} episodes to {}", a.episodes_done(), dir.display());

    let mut resumed = Agent::load(&dir)?;
    let s = e.reset()?;
    assert_eq!(resumed.act_greedy(&s)?, a.act_greedy(&s)?);
    resumed.set_episode_budget(6);
    let mut e2 = env()?;
    let more = agent::train(&mut resumed, &mut e2)?.trace;
    for r in first.records.iter().chain(&more.records) {
        println!("stage {:>2}  updates {:>4}  ARD {:+.5}  AV {:.3e}  L_Q {:.5}", r.stage, r.updates, r.ard, r.av, r.lq_total);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
