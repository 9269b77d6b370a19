mod common;

use std::sync::Arc;

use factor_mcls::agent::{self, Agent, AgentConfig, AgentSpec, Batch, Mode, TrainingTrace};
use factor_mcls::baselines::{BaselineProvider, WeightsProvider};
use factor_mcls::data::{self, ScaleMode};
use factor_mcls::env::{EnvConfig, TradingEnv};
use factor_mcls::nn::Activation;
use factor_mcls::synthetic;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::Sink;

fn env(horizon: usize) -> TradingEnv {
    let table = Arc::new(synthetic::gbm_table(3, 4 * 3 + horizon * 4 + 1, 0.0005, 0.02, 17));
    let cfg = EnvConfig {
        k: 4,
        m: 3,
        horizon,
        ..EnvConfig::default()
    };
    let provider: Arc<dyn WeightsProvider> = Arc::new(BaselineProvider::EqualWeight);
    TradingEnv::new(table, cfg, provider).unwrap()
}

fn config(mode: Mode, episodes: usize) -> AgentConfig {
    AgentConfig {
        hidden: vec![16, 16],
        batch_size: 8,
        warmup_episodes: 1,
        episodes,
        mode,
        ..AgentConfig::default()
    }
}

fn agent_for(env: &TradingEnv, cfg: AgentConfig, seed: u64) -> Agent {
    Agent::new(cfg, AgentSpec::from_env(env.config(), env.num_assets()), seed).unwrap()
}

fn frozen_batch(spec: &AgentSpec, seed: u64, b: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.state_dim();
    let n = spec.n;
    let m = |rng: &mut ChaCha8Rng, c: usize, s: f64| Array2::from_shape_fn((b, c), |_| rng.random_range(-s..s));
    Batch {
        states: m(&mut rng, d, 2.0),
        actions: m(&mut rng, n, 0.3),
        factors: [m(&mut rng, n, 0.5), m(&mut rng, n, 0.5), m(&mut rng, n, 0.5), m(&mut rng, n, 0.1)],
        rewards: Array1::from_shape_fn(b, |_| rng.random_range(-0.05..0.05)),
        next_states: m(&mut rng, d, 2.0),
        done: vec![false; b],
    }
}

#[test]
fn critic_step_reduces_loss_on_a_frozen_batch() {
    let e = env(4);
    let mut cfg = config(Mode::Full, 1);
    cfg.critic_lr = 1e-4;
    let mut a = agent_for(&e, cfg, 1);
    let batch = frozen_batch(a.spec(), 2, 32);
    let before = a.update_critics(&batch).unwrap();
    let targets = agent::critic_targets(&batch, &a.critics, &a.actor_target, a.gamma(), 1.0).unwrap();
    for f in 0..4 {
        let (after, _) = agent::critic_loss(&a.critics.online[f], batch.states.view(), batch.actions.view(), &targets[f]).unwrap();
        assert!(after < before[f], "critic {f}: {after} !< {}", before[f]);
    }
}

#[test]
fn huge_lambda3_shrinks_an_active_constraint() {
    let e = env(4);
    let mut cfg = config(Mode::Full, 1);
    cfg.lambda3 = 1e6;
    cfg.actor_lr = 1e-4;
    cfg.xi = vec![20.0; 3];
    let mut a = agent_for(&e, cfg, 3);
    let batch = frozen_batch(a.spec(), 4, 32);
    let xi = a.xi().to_vec();
    let (before, _) = agent::risk_constraint(&a.actor, &a.critics, batch.states.view(), &xi, 1.0).unwrap();
    assert!(before > 0.0);
    a.update_actor(&batch).unwrap();
    let (after, _) = agent::risk_constraint(&a.actor, &a.critics, batch.states.view(), &xi, 1.0).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn lsv2_still_trains_the_factor_critics() {
    let e = env(4);
    let mut a = agent_for(&e, config(Mode::Lsv2, 1), 5);
    let batch = frozen_batch(a.spec(), 6, 16);
    let before: Vec<Vec<f64>> = a.critics.online.iter().map(|c| c.params_flat()).collect();
    let stats = a.update(&batch).unwrap();
    assert!(stats.critic_losses.iter().all(|l| l.is_finite() && *l > 0.0));
    for (c, b) in a.critics.online.iter().zip(&before) {
        assert_ne!(&c.params_flat(), b);
    }
}

#[test]
fn greedy_policy_is_pure() {
    let mut e = env(3);
    let a = agent_for(&e, config(Mode::Full, 1), 7);
    let s = e.reset().unwrap();
    let w1 = a.act_greedy(&s).unwrap();
    let w2 = a.act_greedy(&s).unwrap();
    assert_eq!(w1, w2);
    assert!(w1.gross() <= 1.0 + 1e-12);
}

#[test]
fn trace_bookkeeping_identities() {
    let mut e = env(6);
    let mut a = agent_for(&e, config(Mode::Full, 4), 8);
    let out = agent::train(&mut a, &mut e).unwrap();
    assert!(out.aborted.is_none());
    let trace = out.trace;
    assert_eq!(trace.records.len(), 5);
    assert_eq!(trace.records[0].updates, 0);
    assert_eq!(trace.records[1].updates, 0, "warmup episodes do not update");
    assert!(trace.records[2].updates > 0);
    let lambda3 = a.config().lambda3;
    for r in &trace.records {
        assert_eq!(r.lq_total, r.lq_re + r.lq_va + r.lq_co + r.lq_ts);
        assert!((r.l_pi - (r.l_pi_wr + lambda3 * r.pi)).abs() <= 1e-10);
        let wr = r.l_pi_re - a.spec().lambda1 / 100.0 * (r.l_pi_va + r.l_pi_co) - 100.0 * a.spec().lambda2 * r.l_pi_ts;
        assert!((r.l_pi_wr - wr).abs() <= 1e-10);
    }
    let mut buf = Vec::new();
    trace.write_csv(&mut buf, &["run".into()]).unwrap();
    assert_eq!(TrainingTrace::read_csv(buf.as_slice()).unwrap(), trace);
}

#[test]
fn lsv1_trace_reports_pi_without_adding_it() {
    let mut e = env(6);
    let mut a = agent_for(&e, config(Mode::Lsv1, 3), 9);
    let trace = agent::train(&mut a, &mut e).unwrap().trace;
    let last = trace.records.last().unwrap();
    assert!(last.updates > 0);
    assert_eq!(last.l_pi, last.l_pi_wr);
}

#[test]
fn zero_episodes_give_one_record() {
    let mut e = env(3);
    let mut a = agent_for(&e, config(Mode::Full, 0), 10);
    let trace = agent::train(&mut a, &mut e).unwrap().trace;
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].stage, 0);
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut e = env(5);
        let mut a = agent_for(&e, config(Mode::Full, 3), 11);
        let trace = agent::train(&mut a, &mut e).unwrap().trace;
        (trace, a)
    };
    let (t1, a1) = run();
    let (t2, a2) = run();
    assert_eq!(t1, t2);
    assert!(a1.same_state(&a2));
}

#[test]
fn checkpoint_resume() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = env(5);
    let mut a = agent_for(&e, config(Mode::Full, 2), 12);
    agent::train(&mut a, &mut e).unwrap();
    a.save(dir.path()).unwrap();
    let loaded = Agent::load(dir.path()).unwrap();
    assert!(loaded.same_state(&a));
    assert_eq!(loaded.episodes_done(), 2);
    let s = e.reset().unwrap();
    assert_eq!(loaded.act_greedy(&s).unwrap(), a.act_greedy(&s).unwrap());

    let resume = || {
        let mut r = Agent::load(dir.path()).unwrap();
        r.set_episode_budget(4);
        let mut env2 = env(5);
        let trace = agent::train(&mut r, &mut env2).unwrap().trace;
        (trace, r)
    };
    let (t1, r1) = resume();
    let (t2, r2) = resume();
    assert_eq!(t1, t2);
    assert!(r1.same_state(&r2));
    assert_eq!(t1.records.len(), 2, "no initial record on resume");
    assert_eq!(t1.records[0].stage, 3);
    assert_eq!(r1.episodes_done(), 4);
}

#[test]
fn evaluation_matches_log_replay() {
    let mut e = env(8);
    let a = agent_for(&e, config(Mode::Full, 0), 13);
    let sink = Sink::default();
    e.set_transition_log(Box::new(sink.clone()));
    let rec = agent::evaluate(&a, &mut e).unwrap();

    let text = sink.text();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 8);

    let table = e.table().clone();
    let grid = *e.grid();
    let t_amt = e.config().invest_amount;
    let alpha = e.config().alpha;
    let n = 3;
    let (mut ard, mut av, mut nprw, mut npr, mut growth) = (0.0, 0.0, 0usize, 0usize, 1.0);
    let mut cash = t_amt;
    let mut q = vec![0i64; n];
    for (idx, line) in lines.iter().enumerate() {
        let t = idx as i64 + 1;
        let reward = line["reward"].as_f64().unwrap();
        let w: Vec<f64> = line["action"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        ard += reward;
        nprw += usize::from(reward > 0.0);
        let h = data::history_matrix(&table, &grid, t).unwrap();
        av += data::covariance(&h, ScaleMode::Raw).unwrap().quadratic_form(&w);

        let p_prev = data::period_end_prices(&table, &grid, t - 1).unwrap();
        let p_now = data::period_end_prices(&table, &grid, t).unwrap();
        let v_prev = cash + (0..n).map(|i| q[i] as f64 * p_prev[i]).sum::<f64>();
        for i in 0..n {
            let target = (t_amt * w[i] / p_prev[i]).floor() as i64;
            let dq = target - q[i];
            cash -= dq as f64 * p_prev[i] + alpha * dq.abs() as f64 * p_prev[i];
            q[i] = target;
        }
        let v_now = cash + (0..n).map(|i| q[i] as f64 * p_now[i]).sum::<f64>();
        npr += usize::from(v_now > v_prev);
        growth *= v_now / v_prev;
    }
    assert_eq!(rec.periods, 8);
    assert!((rec.ard - ard).abs() <= 1e-12);
    assert!((rec.av - av).abs() <= 1e-12 * av.max(1e-12));
    assert_eq!(rec.nprw, nprw);
    assert_eq!(rec.npr, npr);
    assert!((rec.ar - (growth - 1.0)).abs() <= 1e-10);
}

#[test]
fn tanh_hidden_layers_train_too() {
    let mut e = env(4);
    let mut cfg = config(Mode::Full, 3);
    cfg.activation = Activation::Tanh;
    let mut a = agent_for(&e, cfg, 14);
    let out = agent::train(&mut a, &mut e).unwrap();
    assert!(out.aborted.is_none());
    assert_eq!(a.episodes_done(), 3);
}
