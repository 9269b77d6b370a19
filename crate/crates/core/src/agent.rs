//! The multi-critic learner.
//!
//! One actor maps an encoded state to bounded raw weights which are then
//! scaled into the leverage limit. Four vector-valued critics learn the
//! discounted sums of the reward factor columns (return, variance,
//! covariance, transaction scale) and a scalar critic learns the plain
//! reward. The actor ascends a calibrated combination of the factor critics
//! and is pushed away from risk-constraint violations.

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::accounting::WeightVector;
use crate::env::{EnvConfig, State, TradingEnv, Transition};
use crate::error::{Error, Result};
use crate::nn::{adam_step, smooth_l1, soft_update, Activation, AdamState, Grads, Mlp, OutputMap, Tape};
use crate::seed;

pub const FACTOR_NAMES: [&str; 4] = ["re", "va", "co", "ts"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Factor critics with the risk constraint.
    #[default]
    Full,
    /// Factor critics without the risk constraint.
    Lsv1,
    /// Actor trained from the scalar critic only.
    Lsv2,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Mode::Full),
            "lsv1" => Ok(Mode::Lsv1),
            "lsv2" => Ok(Mode::Lsv2),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected full, lsv1 or lsv2)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Lsv1 => "lsv1",
            Mode::Lsv2 => "lsv2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Per-asset risk aversion; empty means 0.1 for every asset.
    pub xi: Vec<f64>,
    pub lambda3: f64,
    /// Discount factor; `None` uses the environment's.
    pub gamma: Option<f64>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Exploration noise at the start of training, decayed linearly to `noise_sigma_final`.
    pub noise_sigma: f64,
    pub noise_sigma_final: f64,
    /// Episodes of uniformly random actions before any update.
    pub warmup_episodes: usize,
    pub mode: Mode,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub episodes: usize,
    pub updates_per_step: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            xi: Vec::new(),
            lambda3: 1.0,
            gamma: None,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.005,
            buffer_capacity: 100_000,
            batch_size: 64,
            noise_sigma: 0.1,
            noise_sigma_final: 0.01,
            warmup_episodes: 10,
            mode: Mode::Full,
            hidden: vec![128, 128],
            activation: Activation::Relu,
            episodes: 200,
            updates_per_step: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !self.xi.is_empty() && self.xi.len() != n {
            return bad(format!("xi has {} entries for {n} assets", self.xi.len()));
        }
        if self.xi.iter().any(|v| !(*v >= 0.0)) {
            return bad("xi entries must be >= 0".into());
        }
        if !(self.lambda3 >= 0.0) {
            return bad(format!("lambda3 {} must be >= 0", self.lambda3));
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return bad(format!("gamma {g} must lie in [0, 1)"));
            }
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} must lie in (0, 1]", self.tau));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch size must be positive and no larger than the buffer".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma_final >= 0.0) {
            return bad("noise scales must be >= 0".into());
        }
        if self.hidden.iter().any(|h| *h == 0) {
            return bad("hidden widths must be positive".into());
        }
        if self.updates_per_step == 0 {
            return bad("updates_per_step must be positive".into());
        }
        Ok(())
    }

    pub fn xi_for(&self, n: usize) -> Vec<f64> {
        if self.xi.is_empty() {
            vec![0.1; n]
        } else {
            self.xi.clone()
        }
    }
}

/// What the agent needs to know about its environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub leverage_limit: f64,
}

impl AgentSpec {
    pub fn from_env(cfg: &EnvConfig, n: usize) -> Self {
        Self {
            n,
            k: cfg.k,
            m: cfg.m,
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
            gamma: cfg.gamma,
            leverage_limit: cfg.leverage_limit,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n * self.k * self.m + self.n
    }
}

/// Row-major flatten of `(X - 1) * 100` followed by the baseline weights.
pub fn encode_state(state: &State, spec: &AgentSpec) -> Result<Vec<f64>> {
    let h = &state.history;
    if h.num_assets() != spec.n || h.k() != spec.k || h.m() != spec.m || state.baseline.len() != spec.n {
        return Err(Error::dim(format!(
            "state is n={} K={} M={} with {} baseline weights, agent expects n={} K={} M={}",
            h.num_assets(),
            h.k(),
            h.m(),
            state.baseline.len(),
            spec.n,
            spec.k,
            spec.m
        )));
    }
    let mut out = Vec::with_capacity(spec.state_dim());
    out.extend(h.matrix().iter().map(|x| (x - 1.0) * 100.0));
    out.extend_from_slice(&state.baseline);
    Ok(out)
}

/// Scales `u` down to gross exposure `limit` when it exceeds it.
pub fn project_leverage(u: &[f64], limit: f64) -> Vec<f64> {
    let gross: f64 = u.iter().map(|v| v.abs()).sum();
    if gross > limit {
        u.iter().map(|v| v * limit / gross).collect()
    } else {
        u.to_vec()
    }
}

fn project_leverage_backward(u: &[f64], da: &[f64], limit: f64) -> Vec<f64> {
    let gross: f64 = u.iter().map(|v| v.abs()).sum();
    if gross <= limit {
        return da.to_vec();
    }
    let inner: f64 = u.iter().zip(da).map(|(ui, di)| ui * di).sum();
    u.iter()
        .zip(da)
        .map(|(uj, dj)| limit / gross * dj - limit * inner * uj.signum() / (gross * gross))
        .collect()
}

/// Replay record with pre-encoded states.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub factors: [Vec<f64>; 4],
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

impl Experience {
    pub fn from_transition(tr: &Transition, spec: &AgentSpec) -> Result<Self> {
        let f = &tr.factors;
        Ok(Self {
            state: encode_state(&tr.state, spec)?,
            action: tr.action.as_slice().to_vec(),
            factors: [f.re.clone(), f.va.clone(), f.co.clone(), f.ts.clone()],
            reward: tr.reward,
            next_state: encode_state(&tr.next_state, spec)?,
            done: tr.done,
        })
    }
}

/// FIFO ring of experiences with a seeded uniform sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, idx: usize) -> Option<&Experience> {
        self.items.get(idx)
    }

    /// `size` records drawn uniformly with replacement.
    pub fn sample(&mut self, size: usize) -> Result<Batch> {
        if size == 0 || self.items.len() < size {
            return Err(Error::InsufficientHistory(format!(
                "buffer holds {} records, batch needs {size}",
                self.items.len()
            )));
        }
        let picks: Vec<&Experience> = (0..size).map(|_| &self.items[self.rng.random_range(0..self.items.len())]).collect();
        Batch::from_experiences(&picks)
    }
}

/// A minibatch laid out as `batch x feature` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub factors: [Array2<f64>; 4],
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_experiences(items: &[&Experience]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Empty("batch".into()))?;
        let (b, d, n) = (items.len(), first.state.len(), first.action.len());
        let stack = |width: usize, get: &dyn Fn(&Experience) -> &[f64]| -> Result<Array2<f64>> {
            let mut flat = Vec::with_capacity(b * width);
            for e in items {
                let row = get(e);
                if row.len() != width {
                    return Err(Error::dim("ragged experiences in one batch"));
                }
                flat.extend_from_slice(row);
            }
            Array2::from_shape_vec((b, width), flat).map_err(|e| Error::dim(e.to_string()))
        };
        Ok(Self {
            states: stack(d, &|e| &e.state)?,
            actions: stack(n, &|e| &e.action)?,
            factors: [
                stack(n, &|e| &e.factors[0])?,
                stack(n, &|e| &e.factors[1])?,
                stack(n, &|e| &e.factors[2])?,
                stack(n, &|e| &e.factors[3])?,
            ],
            rewards: items.iter().map(|e| e.reward).collect(),
            next_states: stack(d, &|e| &e.next_state)?,
            done: items.iter().map(|e| e.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }
}

/// Online and target critics in `[re, va, co, ts]` order, plus the scalar critic.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticBank {
    pub online: [Mlp; 4],
    pub target: [Mlp; 4],
    pub scalar: Mlp,
    pub scalar_target: Mlp,
}

impl CriticBank {
    pub fn new<R: Rng>(input: usize, n: usize, hidden: &[usize], act: Activation, mut make_rng: impl FnMut(&str) -> R) -> Self {
        let sizes = |out: usize| -> Vec<usize> {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let online = FACTOR_NAMES.map(|f| Mlp::new(&sizes(n), act, OutputMap::Linear, &mut make_rng(&format!("critic.{f}"))));
        let scalar = Mlp::new(&sizes(1), act, OutputMap::Linear, &mut make_rng("critic.scalar"));
        Self {
            target: online.clone(),
            online,
            scalar_target: scalar.clone(),
            scalar,
        }
    }
}

fn critic_input(states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if states.nrows() != actions.nrows() {
        return Err(Error::dim("states and actions differ in batch size"));
    }
    concatenate(Axis(1), &[states, actions]).map_err(|e| Error::dim(e.to_string()))
}

/// Actor forward pass followed by the leverage projection of every row.
pub fn policy_actions(actor: &Mlp, states: ArrayView2<'_, f64>, limit: f64) -> Result<(Tape, Array2<f64>)> {
    let tape = actor.forward(states)?;
    let mut a = tape.output().clone();
    for mut row in a.rows_mut() {
        let projected = project_leverage(row.as_slice().expect("standard layout"), limit);
        row.iter_mut().zip(projected).for_each(|(r, p)| *r = p);
    }
    Ok((tape, a))
}

fn to_array(dim: (usize, usize), v: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec(dim, v).expect("gradient has the output shape")
}

fn bootstrap(base: &Array2<f64>, q_next: &Array2<f64>, done: &[bool], gamma: f64) -> Array2<f64> {
    let mut y = base.clone();
    for (b, mut row) in y.rows_mut().into_iter().enumerate() {
        if !done[b] {
            row.zip_mut_with(&q_next.row(b), |y, q| *y += gamma * q);
        }
    }
    y
}

/// Bellman targets `f + γ(1 - done) Q'_f(s', π'(s'))` for the four factor critics.
pub fn critic_targets(batch: &Batch, bank: &CriticBank, target_actor: &Mlp, gamma: f64, limit: f64) -> Result<[Array2<f64>; 4]> {
    let (_, a_next) = policy_actions(target_actor, batch.next_states.view(), limit)?;
    let input = critic_input(batch.next_states.view(), a_next.view())?;
    let mut out = Vec::with_capacity(4);
    for f in 0..4 {
        let q = bank.target[f].forward(input.view())?.output().clone();
        if q.dim() != batch.factors[f].dim() {
            return Err(Error::dim(format!("{} critic emits {:?}, factors are {:?}", FACTOR_NAMES[f], q.dim(), batch.factors[f].dim())));
        }
        out.push(bootstrap(&batch.factors[f], &q, &batch.done, gamma));
    }
    Ok(out.try_into().expect("four factors"))
}

/// Bellman targets `r + γ(1 - done) Q'_φ(s', π'(s'))`, shape `batch x 1`.
pub fn scalar_targets(batch: &Batch, bank: &CriticBank, target_actor: &Mlp, gamma: f64, limit: f64) -> Result<Array2<f64>> {
    let (_, a_next) = policy_actions(target_actor, batch.next_states.view(), limit)?;
    let input = critic_input(batch.next_states.view(), a_next.view())?;
    let q = bank.scalar_target.forward(input.view())?.output().clone();
    if q.ncols() != 1 {
        return Err(Error::dim("scalar critic must emit one value"));
    }
    let r = batch.rewards.clone().insert_axis(Axis(1));
    Ok(bootstrap(&r, &q, &batch.done, gamma))
}

/// Mean SmoothL1 (β = 1) between `critic(s, a)` and `targets`, with its parameter gradient.
pub fn critic_loss(critic: &Mlp, states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>, targets: &Array2<f64>) -> Result<(f64, Grads)> {
    let input = critic_input(states, actions)?;
    let tape = critic.forward(input.view())?;
    let pred = tape.output();
    if pred.dim() != targets.dim() {
        return Err(Error::dim(format!("critic emits {:?}, targets are {:?}", pred.dim(), targets.dim())));
    }
    let p: Vec<f64> = pred.iter().copied().collect();
    let t: Vec<f64> = targets.iter().copied().collect();
    let (loss, g) = smooth_l1(&p, &t, 1.0)?;
    let (grads, _) = critic.backward(&tape, to_array(pred.dim(), g).view())?;
    Ok((loss, grads))
}

/// Calibration of the actor objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub xi: Vec<f64>,
}

/// Actor-side quantities of one batch, all evaluated at `a = π(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActorTerms {
    /// Means of `Q_Re`, `Q_Va`, `Q_Co`, `Q_Ts` over batch and assets.
    pub q_re: f64,
    pub q_va: f64,
    pub q_co: f64,
    pub q_ts: f64,
    /// `q_re - (λ1/100)(q_va + q_co) - (100 λ2) q_ts`.
    pub without_constraint: f64,
    pub constraint: f64,
    /// `without_constraint + λ3 Π`, λ3 taken as 0 when the mode ignores the constraint.
    pub total: f64,
    /// Mean `Q_φ(s, π(s))`.
    pub policy_value: f64,
    /// The value whose gradient the actor descends.
    pub descended: f64,
}

struct ActorPass {
    u: Array2<f64>,
    actor_tape: Tape,
    input: Array2<f64>,
    tapes: Vec<Tape>,
    scalar_tape: Tape,
}

fn actor_pass(actor: &Mlp, bank: &CriticBank, states: ArrayView2<'_, f64>, limit: f64) -> Result<ActorPass> {
    let (actor_tape, a) = policy_actions(actor, states, limit)?;
    let input = critic_input(states, a.view())?;
    let tapes = bank.online.iter().map(|c| c.forward(input.view())).collect::<Result<Vec<_>>>()?;
    let scalar_tape = bank.scalar.forward(input.view())?;
    Ok(ActorPass {
        u: actor_tape.output().clone(),
        actor_tape,
        input,
        tapes,
        scalar_tape,
    })
}

/// `Π` and its cotangents with respect to `Q_Re` and `Q_Va` (= `Q_Co`).
fn constraint_parts(pass: &ActorPass, xi: &[f64]) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let (re, va, co) = (pass.tapes[0].output(), pass.tapes[1].output(), pass.tapes[2].output());
    let dim = re.dim();
    if xi.len() != dim.1 {
        return Err(Error::dim(format!("xi has {} entries for {} assets", xi.len(), dim.1)));
    }
    let mut margin = Vec::with_capacity(re.len());
    for b in 0..dim.0 {
        for i in 0..dim.1 {
            margin.push(re[[b, i]] - xi[i] * (va[[b, i]] + co[[b, i]]));
        }
    }
    let h: Vec<f64> = margin.iter().map(|m| m.min(0.0)).collect();
    let (pi, dh) = smooth_l1(&h, &vec![0.0; h.len()], 1.0)?;
    let d_re: Vec<f64> = dh.iter().zip(&margin).map(|(g, m)| if *m < 0.0 { *g } else { 0.0 }).collect();
    let d_risk: Vec<f64> = d_re.iter().enumerate().map(|(idx, g)| -xi[idx % dim.1] * g).collect();
    Ok((pi, to_array(dim, d_re), to_array(dim, d_risk)))
}

fn backprop_to_actor(actor: &Mlp, bank: &CriticBank, pass: &ActorPass, dq: [Option<Array2<f64>>; 4], dphi: Option<Array2<f64>>, limit: f64) -> Result<Grads> {
    let (b, n) = pass.u.dim();
    let d = pass.input.ncols() - n;
    let mut da = Array2::<f64>::zeros((b, n));
    for (f, g) in dq.iter().enumerate() {
        if let Some(g) = g {
            let (_, dx) = bank.online[f].backward(&pass.tapes[f], g.view())?;
            da += &dx.slice(ndarray::s![.., d..]);
        }
    }
    if let Some(g) = dphi {
        let (_, dx) = bank.scalar.backward(&pass.scalar_tape, g.view())?;
        da += &dx.slice(ndarray::s![.., d..]);
    }
    let mut du = Array2::<f64>::zeros((b, n));
    for row in 0..b {
        let u = pass.u.row(row).to_vec();
        let g = project_leverage_backward(&u, &da.row(row).to_vec(), limit);
        du.row_mut(row).iter_mut().zip(g).for_each(|(o, v)| *o = v);
    }
    let (grads, _) = actor.backward(&pass.actor_tape, du.view())?;
    Ok(grads)
}

/// Risk constraint `Π = mean SmoothL1(min(Q_Re - ξ(Q_Va + Q_Co), 0), 0)` at `a = π(s)`
/// and its gradient with respect to the actor parameters (critics held fixed).
pub fn risk_constraint(actor: &Mlp, bank: &CriticBank, states: ArrayView2<'_, f64>, xi: &[f64], limit: f64) -> Result<(f64, Grads)> {
    let pass = actor_pass(actor, bank, states, limit)?;
    let (pi, d_re, d_risk) = constraint_parts(&pass, xi)?;
    let grads = backprop_to_actor(actor, bank, &pass, [Some(d_re), Some(d_risk.clone()), Some(d_risk), None], None, limit)?;
    Ok((pi, grads))
}

/// Every actor-side term of one batch and the gradient of [`ActorTerms::descended`].
pub fn actor_objective(
    actor: &Mlp,
    bank: &CriticBank,
    states: ArrayView2<'_, f64>,
    w: &ObjectiveWeights,
    mode: Mode,
    limit: f64,
) -> Result<(ActorTerms, Grads)> {
    let pass = actor_pass(actor, bank, states, limit)?;
    let (b, n) = pass.u.dim();
    let count = (b * n) as f64;
    let mean = |a: &Array2<f64>| a.iter().sum::<f64>() / a.len() as f64;
    let q = [0, 1, 2, 3].map(|f| mean(pass.tapes[f].output()));
    let c1 = w.lambda1 / 100.0;
    let c2 = w.lambda2 * 100.0;
    let without = q[0] - c1 * (q[1] + q[2]) - c2 * q[3];
    let (pi, d_re_pi, d_risk_pi) = constraint_parts(&pass, &w.xi)?;
    let policy_value = mean(pass.scalar_tape.output());
    let lambda3 = if mode == Mode::Full { w.lambda3 } else { 0.0 };

    let terms = ActorTerms {
        q_re: q[0],
        q_va: q[1],
        q_co: q[2],
        q_ts: q[3],
        without_constraint: without,
        constraint: pi,
        total: without + lambda3 * pi,
        policy_value,
        descended: match mode {
            Mode::Full => -without + lambda3 * pi,
            Mode::Lsv1 => -without,
            Mode::Lsv2 => -policy_value,
        },
    };

    let grads = match mode {
        Mode::Lsv2 => {
            let g = Array2::from_elem((b, 1), -1.0 / b as f64);
            backprop_to_actor(actor, bank, &pass, [None, None, None, None], Some(g), limit)?
        }
        Mode::Full | Mode::Lsv1 => {
            let mut d_re = Array2::from_elem((b, n), -1.0 / count);
            let mut d_risk = Array2::from_elem((b, n), c1 / count);
            if lambda3 != 0.0 {
                d_re.scaled_add(lambda3, &d_re_pi);
                d_risk.scaled_add(lambda3, &d_risk_pi);
            }
            let d_ts = Array2::from_elem((b, n), c2 / count);
            backprop_to_actor(actor, bank, &pass, [Some(d_re), Some(d_risk.clone()), Some(d_risk), Some(d_ts)], None, limit)?
        }
    };
    Ok((terms, grads))
}

/// Losses of one full update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_losses: [f64; 4],
    pub actor: ActorTerms,
    pub scalar_loss: f64,
}

pub struct Agent {
    cfg: AgentConfig,
    spec: AgentSpec,
    seed: u64,
    xi: Vec<f64>,
    gamma: f64,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: CriticBank,
    actor_opt: AdamState,
    critic_opts: [AdamState; 4],
    scalar_opt: AdamState,
    noise_rng: ChaCha8Rng,
    steps: u64,
    explore_steps: u64,
    updates: u64,
    episodes_done: u64,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("cfg", &self.cfg)
            .field("spec", &self.spec)
            .field("seed", &self.seed)
            .field("steps", &self.steps)
            .field("updates", &self.updates)
            .field("episodes_done", &self.episodes_done)
            .finish_non_exhaustive()
    }
}

impl Agent {
    pub fn new(cfg: AgentConfig, spec: AgentSpec, seed: u64) -> Result<Self> {
        cfg.validate(spec.n)?;
        if !(0.0..1.0).contains(&spec.gamma) && cfg.gamma.is_none() {
            return Err(Error::Config(format!("gamma {} must lie in [0, 1)", spec.gamma)));
        }
        let d = spec.state_dim();
        let mut sizes = vec![d];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(spec.n);
        let actor = Mlp::new(&sizes, cfg.activation, OutputMap::Bounded, &mut seed::rng(seed, "actor"));
        let critics = CriticBank::new(d + spec.n, spec.n, &cfg.hidden, cfg.activation, |label| seed::rng(seed, label));
        let critic_opts = [0, 1, 2, 3].map(|f| AdamState::new(&critics.online[f], cfg.critic_lr));
        Ok(Self {
            xi: cfg.xi_for(spec.n),
            gamma: cfg.gamma.unwrap_or(spec.gamma),
            actor_opt: AdamState::new(&actor, cfg.actor_lr),
            scalar_opt: AdamState::new(&critics.scalar, cfg.critic_lr),
            critic_opts,
            actor_target: actor.clone(),
            actor,
            critics,
            noise_rng: seed::rng(seed, "noise"),
            steps: 0,
            explore_steps: 0,
            updates: 0,
            episodes_done: 0,
            cfg,
            spec,
            seed,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn env_steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    /// Total episode budget for [`train`], e.g. to continue a loaded checkpoint.
    pub fn set_episode_budget(&mut self, episodes: usize) {
        self.cfg.episodes = episodes;
    }

    pub fn objective_weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            lambda1: self.spec.lambda1,
            lambda2: self.spec.lambda2,
            lambda3: self.cfg.lambda3,
            xi: self.xi.clone(),
        }
    }

    /// Noise-free action; a pure function of the parameters and the state.
    pub fn act_greedy(&self, state: &State) -> Result<WeightVector> {
        let u = self.actor.forward_one(&encode_state(state, &self.spec)?)?;
        WeightVector::new(project_leverage(&u, self.spec.leverage_limit), self.spec.leverage_limit)
    }

    /// Action with optional Gaussian exploration of scale `sigma` added to the raw output.
    pub fn act(&mut self, state: &State, explore: bool, sigma: f64) -> Result<WeightVector> {
        let mut u = self.actor.forward_one(&encode_state(state, &self.spec)?)?;
        if explore && sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
            for v in &mut u {
                *v = (*v + noise.sample(&mut self.noise_rng)).clamp(-1.0, 1.0);
            }
        }
        WeightVector::new(project_leverage(&u, self.spec.leverage_limit), self.spec.leverage_limit)
    }

    /// Uniform raw weights in `[-1, 1]^n`, scaled into the leverage limit.
    pub fn random_action(&mut self) -> Result<WeightVector> {
        let u: Vec<f64> = (0..self.spec.n).map(|_| self.noise_rng.random_range(-1.0..=1.0)).collect();
        WeightVector::new(project_leverage(&u, self.spec.leverage_limit), self.spec.leverage_limit)
    }

    /// Exploration scale after `explore_steps` noisy steps out of `planned`.
    pub fn noise_sigma(&self, planned: u64) -> f64 {
        let frac = if planned <= 1 {
            1.0
        } else {
            (self.explore_steps as f64 / (planned - 1) as f64).min(1.0)
        };
        self.cfg.noise_sigma + (self.cfg.noise_sigma_final - self.cfg.noise_sigma) * frac
    }

    /// One optimizer step per factor critic; returns the pre-step losses.
    pub fn update_critics(&mut self, batch: &Batch) -> Result<[f64; 4]> {
        let targets = critic_targets(batch, &self.critics, &self.actor_target, self.gamma, self.spec.leverage_limit)?;
        let mut losses = [0.0; 4];
        for f in 0..4 {
            let (loss, grads) = critic_loss(&self.critics.online[f], batch.states.view(), batch.actions.view(), &targets[f])?;
            adam_step(&mut self.critics.online[f], &grads, &mut self.critic_opts[f]);
            losses[f] = loss;
        }
        Ok(losses)
    }

    /// One optimizer step on the actor according to the configured mode.
    pub fn update_actor(&mut self, batch: &Batch) -> Result<ActorTerms> {
        let (terms, grads) = actor_objective(
            &self.actor,
            &self.critics,
            batch.states.view(),
            &self.objective_weights(),
            self.cfg.mode,
            self.spec.leverage_limit,
        )?;
        adam_step(&mut self.actor, &grads, &mut self.actor_opt);
        Ok(terms)
    }

    pub fn update_scalar_critic(&mut self, batch: &Batch) -> Result<f64> {
        let targets = scalar_targets(batch, &self.critics, &self.actor_target, self.gamma, self.spec.leverage_limit)?;
        let (loss, grads) = critic_loss(&self.critics.scalar, batch.states.view(), batch.actions.view(), &targets)?;
        adam_step(&mut self.critics.scalar, &grads, &mut self.scalar_opt);
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        let tau = self.cfg.tau;
        soft_update(&mut self.actor_target, &self.actor, tau)?;
        for f in 0..4 {
            soft_update(&mut self.critics.target[f], &self.critics.online[f], tau)?;
        }
        soft_update(&mut self.critics.scalar_target, &self.critics.scalar, tau)
    }

    /// Critics, actor, scalar critic, then targets.
    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        let critic_losses = self.update_critics(batch)?;
        let actor = self.update_actor(batch)?;
        let scalar_loss = self.update_scalar_critic(batch)?;
        self.soft_update_targets()?;
        self.updates += 1;
        Ok(UpdateStats {
            critic_losses,
            actor,
            scalar_loss,
        })
    }

    /// Writes `checkpoint.bin` and `checkpoint.meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(dir.join("checkpoint.bin"))?);
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&1u32.to_le_bytes())?;
        for c in [self.steps, self.explore_steps, self.updates, self.episodes_done] {
            out.write_all(&c.to_le_bytes())?;
        }
        out.write_all(&self.noise_rng.get_seed())?;
        out.write_all(&self.noise_rng.get_stream().to_le_bytes())?;
        out.write_all(&self.noise_rng.get_word_pos().to_le_bytes())?;
        for net in self.networks() {
            net.write_to(&mut out)?;
        }
        self.actor_opt.write_to(&mut out)?;
        for o in &self.critic_opts {
            o.write_to(&mut out)?;
        }
        self.scalar_opt.write_to(&mut out)?;
        out.flush()?;
        let meta = self.metadata();
        let mut m = File::create(dir.join("checkpoint.meta.json"))?;
        serde_json::to_writer_pretty(&mut m, &meta)?;
        writeln!(m)?;
        Ok(())
    }

    pub fn metadata(&self) -> CheckpointMeta {
        CheckpointMeta {
            schema: 1,
            config: self.cfg.clone(),
            spec: self.spec.clone(),
            seed: self.seed,
            env_steps: self.steps,
            updates: self.updates,
            episodes_done: self.episodes_done,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_reader(BufReader::new(File::open(dir.join("checkpoint.meta.json"))?))?;
        if meta.schema != 1 {
            return Err(Error::Checkpoint(format!("unsupported metadata schema {}", meta.schema)));
        }
        let mut agent = Agent::new(meta.config, meta.spec, meta.seed)?;
        let mut src = BufReader::new(File::open(dir.join("checkpoint.bin"))?);
        let mut magic = [0u8; 8];
        src.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not an agent checkpoint".into()));
        }
        let mut word = [0u8; 4];
        src.read_exact(&mut word)?;
        if u32::from_le_bytes(word) != 1 {
            return Err(Error::Checkpoint("unsupported checkpoint version".into()));
        }
        let mut counters = [0u64; 4];
        for c in &mut counters {
            let mut buf = [0u8; 8];
            src.read_exact(&mut buf)?;
            *c = u64::from_le_bytes(buf);
        }
        [agent.steps, agent.explore_steps, agent.updates, agent.episodes_done] = counters;
        let mut rng_seed = [0u8; 32];
        src.read_exact(&mut rng_seed)?;
        let mut stream = [0u8; 8];
        src.read_exact(&mut stream)?;
        let mut pos = [0u8; 16];
        src.read_exact(&mut pos)?;
        agent.noise_rng = ChaCha8Rng::from_seed(rng_seed);
        agent.noise_rng.set_stream(u64::from_le_bytes(stream));
        agent.noise_rng.set_word_pos(u128::from_le_bytes(pos));

        let mut nets = Vec::with_capacity(12);
        for _ in 0..12 {
            nets.push(Mlp::read_from(&mut src)?);
        }
        let mut it = nets.into_iter();
        let mut next = || it.next().expect("twelve networks");
        agent.actor = next();
        agent.actor_target = next();
        for f in 0..4 {
            agent.critics.online[f] = next();
        }
        for f in 0..4 {
            agent.critics.target[f] = next();
        }
        agent.critics.scalar = next();
        agent.critics.scalar_target = next();
        agent.actor_opt = AdamState::read_from(&mut src)?;
        for f in 0..4 {
            agent.critic_opts[f] = AdamState::read_from(&mut src)?;
        }
        agent.scalar_opt = AdamState::read_from(&mut src)?;
        let mut rest = Vec::new();
        src.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Ok(agent)
    }

    fn networks(&self) -> Vec<&Mlp> {
        let mut v = vec![&self.actor, &self.actor_target];
        v.extend(self.critics.online.iter());
        v.extend(self.critics.target.iter());
        v.push(&self.critics.scalar);
        v.push(&self.critics.scalar_target);
        v
    }

    /// Exact equality of every parameter, optimizer moment and counter.
    pub fn same_state(&self, other: &Agent) -> bool {
        self.networks() == other.networks()
            && self.actor_opt == other.actor_opt
            && self.critic_opts == other.critic_opts
            && self.scalar_opt == other.scalar_opt
            && self.noise_rng == other.noise_rng
            && (self.steps, self.explore_steps, self.updates, self.episodes_done)
                == (other.steps, other.explore_steps, other.updates, other.episodes_done)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"FMCLSCKP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema: u32,
    pub config: AgentConfig,
    pub spec: AgentSpec,
    pub seed: u64,
    pub env_steps: u64,
    pub updates: u64,
    pub episodes_done: u64,
}

/// In-sample indices of one deterministic rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// `prod(1 + r_ta) - 1` over the periods.
    pub ar: f64,
    /// Sum of rewards.
    pub ard: f64,
    /// Sum of `w'Σw`.
    pub av: f64,
    /// Periods with a positive total-asset return.
    pub npr: usize,
    /// Periods with a positive reward.
    pub nprw: usize,
    pub periods: usize,
}

impl EvalRecord {
    pub fn from_transitions(trs: &[Transition]) -> Self {
        let mut growth = 1.0;
        let (mut ard, mut av, mut npr, mut nprw) = (0.0, 0.0, 0, 0);
        for tr in trs {
            growth *= 1.0 + tr.info.period_return;
            ard += tr.reward;
            av += tr.info.portfolio_variance;
            npr += usize::from(tr.info.period_return > 0.0);
            nprw += usize::from(tr.reward > 0.0);
        }
        Self {
            ar: growth - 1.0,
            ard,
            av,
            npr,
            nprw,
            periods: trs.len(),
        }
    }
}

/// A full noise-free episode from `reset`.
pub fn rollout(agent: &Agent, env: &mut TradingEnv) -> Result<Vec<Transition>> {
    let mut state = env.reset()?;
    let mut out = Vec::with_capacity(env.horizon());
    while !env.is_done() {
        let tr = env.step(&agent.act_greedy(&state)?)?;
        state = tr.next_state.clone();
        out.push(tr);
    }
    Ok(out)
}

pub fn evaluate(agent: &Agent, env: &mut TradingEnv) -> Result<EvalRecord> {
    Ok(EvalRecord::from_transitions(&rollout(agent, env)?))
}

/// One row of the training trace. Loss columns are means over the stage's
/// updates and zero when `updates` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: u64,
    pub env_steps: u64,
    pub updates: u64,
    pub ar: f64,
    pub ard: f64,
    pub av: f64,
    pub npr: usize,
    pub nprw: usize,
    pub l_pi: f64,
    pub l_pi_wr: f64,
    pub l_pi_re: f64,
    pub l_pi_va: f64,
    pub l_pi_co: f64,
    pub l_pi_ts: f64,
    pub pi: f64,
    pub lq_total: f64,
    pub lq_re: f64,
    pub lq_va: f64,
    pub lq_co: f64,
    pub lq_ts: f64,
    pub l_phi: f64,
    pub policy_value: f64,
    pub status: String,
}

#[derive(Debug, Clone, Copy, Default)]
struct StageAccumulator {
    count: u64,
    actor: [f64; 8],
    critics: [f64; 4],
    scalar: f64,
}

impl StageAccumulator {
    fn add(&mut self, s: &UpdateStats) {
        self.count += 1;
        let a = &s.actor;
        let vals = [a.total, a.without_constraint, a.q_re, a.q_va, a.q_co, a.q_ts, a.constraint, a.policy_value];
        for (acc, v) in self.actor.iter_mut().zip(vals) {
            *acc += v;
        }
        for (acc, v) in self.critics.iter_mut().zip(s.critic_losses) {
            *acc += v;
        }
        self.scalar += s.scalar_loss;
    }

    fn record(&self, stage: u64, env_steps: u64, eval: &EvalRecord, lambda3_eff: f64, status: &str) -> TraceRecord {
        let mean = |v: f64| if self.count == 0 { 0.0 } else { v / self.count as f64 };
        let a = self.actor.map(mean);
        let c = self.critics.map(mean);
        let l_pi_wr = a[1];
        let pi = a[6];
        TraceRecord {
            stage,
            env_steps,
            updates: self.count,
            ar: eval.ar,
            ard: eval.ard,
            av: eval.av,
            npr: eval.npr,
            nprw: eval.nprw,
            l_pi: l_pi_wr + lambda3_eff * pi,
            l_pi_wr,
            l_pi_re: a[2],
            l_pi_va: a[3],
            l_pi_co: a[4],
            l_pi_ts: a[5],
            pi,
            lq_total: c[0] + c[1] + c[2] + c[3],
            lq_re: c[0],
            lq_va: c[1],
            lq_co: c[2],
            lq_ts: c[3],
            l_phi: mean(self.scalar),
            policy_value: a[7],
            status: status.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
}

const TRACE_COLUMNS: [&str; 23] = [
    "stage", "env_steps", "updates", "ar", "ard", "av", "npr", "nprw", "l_pi", "l_pi_wr", "l_pi_re", "l_pi_va", "l_pi_co", "l_pi_ts", "pi",
    "lq_total", "lq_re", "lq_va", "lq_co", "lq_ts", "l_phi", "policy_value", "status",
];

impl TrainingTrace {
    /// CSV with `# `-prefixed comment lines first, then a header row.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{}", TRACE_COLUMNS.join(","))?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.stage,
                r.env_steps,
                r.updates,
                r.ar,
                r.ard,
                r.av,
                r.npr,
                r.nprw,
                r.l_pi,
                r.l_pi_wr,
                r.l_pi_re,
                r.l_pi_va,
                r.l_pi_co,
                r.l_pi_ts,
                r.pi,
                r.lq_total,
                r.lq_re,
                r.lq_va,
                r.lq_co,
                r.lq_ts,
                r.l_phi,
                r.policy_value,
                r.status
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(source);
        let records = rdr.deserialize().collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
        Ok(Self { records })
    }
}

/// Result of [`train`]; `aborted` carries the diagnostic when a non-finite value stopped training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trace: TrainingTrace,
    pub aborted: Option<String>,
}

fn stats_finite(s: &UpdateStats) -> bool {
    s.critic_losses.iter().all(|v| v.is_finite())
        && s.scalar_loss.is_finite()
        && [s.actor.total, s.actor.descended, s.actor.constraint, s.actor.policy_value].iter().all(|v| v.is_finite())
}

/// Runs `agent.config().episodes` episodes (counting those already done).
///
/// A trace record is appended after every episode, preceded by one record of
/// the untrained policy when training starts from scratch. The replay buffer
/// lives only for the duration of the call.
pub fn train(agent: &mut Agent, env: &mut TradingEnv) -> Result<TrainOutcome> {
    if env.num_assets() != agent.spec.n || env.grid().k() != agent.spec.k || env.grid().m() != agent.spec.m {
        return Err(Error::dim("environment and agent disagree on n, K or M"));
    }
    let lambda3_eff = if agent.cfg.mode == Mode::Full { agent.cfg.lambda3 } else { 0.0 };
    let mut trace = TrainingTrace::default();
    let total = agent.cfg.episodes as u64;
    let warmup = agent.cfg.warmup_episodes as u64;
    let planned = total.saturating_sub(warmup) * env.horizon() as u64;
    let mut buffer = ReplayBuffer::new(agent.cfg.buffer_capacity, seed::derive(agent.seed, &format!("replay.{}", agent.episodes_done)));

    if agent.episodes_done == 0 {
        let eval = evaluate(agent, env)?;
        trace.records.push(StageAccumulator::default().record(0, agent.steps, &eval, lambda3_eff, "ok"));
    }

    while agent.episodes_done < total {
        let exploring = agent.episodes_done >= warmup;
        let mut acc = StageAccumulator::default();
        let mut state = env.reset()?;
        while !env.is_done() {
            let action = if exploring {
                let sigma = agent.noise_sigma(planned);
                agent.explore_steps += 1;
                agent.act(&state, true, sigma)?
            } else {
                agent.random_action()?
            };
            let tr = env.step(&action)?;
            agent.steps += 1;
            buffer.push(Experience::from_transition(&tr, &agent.spec)?);
            state = tr.next_state;
            if exploring && buffer.len() >= agent.cfg.batch_size {
                for _ in 0..agent.cfg.updates_per_step {
                    let batch = buffer.sample(agent.cfg.batch_size)?;
                    let stats = agent.update(&batch)?;
                    if !stats_finite(&stats) {
                        let msg = format!(
                            "non-finite loss at update {} (critics {:?}, actor {:?}, scalar {})",
                            agent.updates, stats.critic_losses, stats.actor, stats.scalar_loss
                        );
                        let eval = EvalRecord::from_transitions(&[]);
                        trace
                            .records
                            .push(acc.record(agent.episodes_done + 1, agent.steps, &eval, lambda3_eff, "nonfinite"));
                        return Ok(TrainOutcome { trace, aborted: Some(msg) });
                    }
                    acc.add(&stats);
                }
            }
        }
        agent.episodes_done += 1;
        let eval = evaluate(agent, env)?;
        trace.records.push(acc.record(agent.episodes_done, agent.steps, &eval, lambda3_eff, "ok"));
    }
    Ok(TrainOutcome { trace, aborted: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HistoryMatrix;
    use ndarray::array;

    fn spec(n: usize, k: usize, m: usize) -> AgentSpec {
        AgentSpec {
            n,
            k,
            m,
            lambda1: 0.5,
            lambda2: 0.01,
            gamma: 0.9,
            leverage_limit: 1.0,
        }
    }

    #[test]
    fn encode_examples() {
        let s = State {
            period: 1,
            history: HistoryMatrix::new(array![[1.02]], 1, 1).unwrap(),
            baseline: vec![0.3],
        };
        let e = encode_state(&s, &spec(1, 1, 1)).unwrap();
        assert!((e[0] - 2.0).abs() < 1e-12 && e[1] == 0.3);
        let ones = State {
            period: 1,
            history: HistoryMatrix::new(Array2::ones((2, 6)), 3, 2).unwrap(),
            baseline: vec![0.0; 2],
        };
        assert_eq!(encode_state(&ones, &spec(2, 3, 2)).unwrap(), vec![0.0; 14]);
        assert!(encode_state(&ones, &spec(2, 2, 3)).is_err());
    }

    #[test]
    fn leverage_projection() {
        assert_eq!(project_leverage(&[0.8, 0.8], 1.0), vec![0.5, 0.5]);
        assert_eq!(project_leverage(&[0.3, -0.2], 1.0), vec![0.3, -0.2]);
    }

    #[test]
    fn leverage_projection_backward_matches_finite_differences() {
        let u = [0.7, -0.6, 0.4];
        let da = [0.3, -1.2, 0.5];
        let g = project_leverage_backward(&u, &da, 1.0);
        let f = |u: &[f64]| -> f64 { project_leverage(u, 1.0).iter().zip(&da).map(|(a, d)| a * d).sum() };
        for j in 0..3 {
            let mut up = u;
            up[j] += 1e-6;
            let mut dn = u;
            dn[j] -= 1e-6;
            assert!(((f(&up) - f(&dn)) / 2e-6 - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn replay_is_fifo_and_guards_small_samples() {
        let e = |r: f64| Experience {
            state: vec![r],
            action: vec![0.0],
            factors: [vec![0.0], vec![0.0], vec![0.0], vec![0.0]],
            reward: r,
            next_state: vec![r],
            done: false,
        };
        let mut buf = ReplayBuffer::new(2, 1);
        assert!(buf.sample(1).is_err());
        for r in [1.0, 2.0, 3.0] {
            buf.push(e(r));
        }
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.get(0).unwrap().reward, 2.0);
        assert!(buf.sample(3).is_err());
        let b = buf.sample(2).unwrap();
        assert!(b.rewards.iter().all(|r| *r == 2.0 || *r == 3.0));
    }

    #[test]
    fn zero_actor_gives_zero_action() {
        let mut agent = Agent::new(
            AgentConfig {
                hidden: vec![4],
                ..Default::default()
            },
            spec(2, 2, 2),
            3,
        )
        .unwrap();
        let zeros = vec![0.0; agent.actor.num_params()];
        agent.actor.set_params_flat(&zeros).unwrap();
        let s = State {
            period: 1,
            history: HistoryMatrix::new(Array2::from_elem((2, 4), 1.01), 2, 2).unwrap(),
            baseline: vec![0.5, 0.5],
        };
        assert_eq!(agent.act_greedy(&s).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(agent.act(&s, false, 0.1).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("LSV1".parse::<Mode>().unwrap(), Mode::Lsv1);
        assert!("x".parse::<Mode>().is_err());
        assert_eq!(Mode::Lsv2.to_string(), "lsv2");
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate(3).is_ok());
        assert!(AgentConfig { xi: vec![0.1; 2], ..Default::default() }.validate(3).is_err());
        assert!(AgentConfig { gamma: Some(1.0), ..Default::default() }.validate(3).is_err());
        assert!(AgentConfig { lambda3: -1.0, ..Default::default() }.validate(3).is_err());
    }
}
