//! Steps the trading environment with a fixed long/short action and prints
//! the per-asset reward factors next to the scalar reward they add up to.
//!
//! `cargo run --example reward_factors`

use std::sync::Arc;

use factor_mcls::accounting::WeightVector;
use factor_mcls::baselines::BaselineProvider;
use factor_mcls::env::{EnvConfig, TradingEnv};
use factor_mcls::synthetic;

fn main() -> factor_mcls::Result<()> {
    let cfg = EnvConfig {
        k: 5,
        m: 4,
        horizon: 3,
        ..EnvConfig::default()
    };
    let table = Arc::new(synthetic::gbm_table(3, 5 * 4 + 3 * 5 + 1, 0.0005, 0.02, 11));
    let mut env = TradingEnv::new(table, cfg.clone(), Arc::new(BaselineProvider::EqualWeight))?;
    let action = WeightVector::new(vec![0.5, -0.2, 0.3], cfg.leverage_limit)?;

    let state = env.reset()?;
    println!("state: {} history entries, baseline {:?}", state.history.matrix().len(), state.baseline);
    while !env.is_done() {
        let tr = env.step(&action)?;
        let f = &tr.factors;
        println!("period {}  value {:.2}  cost {:.2}", tr.info.period, tr.info.total_value, tr.info.cost);
        println!("  {:>5} {:>12} {:>12} {:>12} {:>12}", "asset", "Re", "Va", "Co", "Ts");
        for i in 0..env.num_assets() {
            println!("  {:>5} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", i, f.re[i], f.va[i], f.co[i], f.ts[i]);
        }
        let re: f64 = f.re.iter().sum();
        let vc: f64 = f.va.iter().chain(&f.co).sum();
        let ts: f64 = f.ts.iter().sum();
        let rebuilt = re / 100.0 - cfg.lambda1 * vc / 1e4 - cfg.lambda2 * ts;
        println!("  reward {:.10}  rebuilt from factors {:.10}", tr.reward, rebuilt);
    }
    println!("positions {:?}, cash {:.2}", env.snapshot().positions.0, env.snapshot().cash);
    Ok(())
}
