//! Fixed-horizon trading MDP.
//!
//! Each step rebalances at the decision close `p_{t-1}`, holds for `K` days,
//! and returns the scalar risk-adjusted reward together with the `n x 4`
//! reward factor matrix (return, variance, covariance and transaction-scale
//! contributions per asset).

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::accounting::{self, PortfolioSnapshot, PositionVector, WeightVector};
use crate::baselines::{ProviderContext, WeightsProvider};
use crate::data::{self, CovarianceEstimate, HistoryMatrix, PeriodGrid, PriceTable, ScaleMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Proportional transaction cost rate.
    pub alpha: f64,
    pub k: usize,
    pub m: usize,
    /// Investment amount `T` per period.
    pub invest_amount: f64,
    pub gamma: f64,
    /// Episode length in periods; 0 means every whole period the table holds.
    pub horizon: usize,
    pub leverage_limit: f64,
    /// Day index of the first rebalance; `None` starts at the earliest day with full lookback.
    pub first_decision_index: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 0.01,
            alpha: 0.001,
            k: 5,
            m: 10,
            invest_amount: 1e6,
            gamma: 0.99,
            horizon: 0,
            leverage_limit: 1.0,
            first_decision_index: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return Err(Error::Config(format!(
                "lambda1 and lambda2 must be positive (got {}, {})",
                self.lambda1, self.lambda2
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha {} must be >= 0", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} must lie in [0, 1)", self.gamma)));
        }
        if !(self.invest_amount > 0.0 && self.invest_amount.is_finite()) {
            return Err(Error::Config(format!("investment amount {} must be positive", self.invest_amount)));
        }
        if !(self.leverage_limit > 0.0) {
            return Err(Error::Config(format!("leverage limit {} must be positive", self.leverage_limit)));
        }
        Ok(())
    }

    /// The period grid this configuration lays over a table of `num_days` days.
    pub fn grid(&self, num_days: usize) -> Result<PeriodGrid> {
        let fitted = PeriodGrid::fit(num_days, self.k, self.m, self.first_decision_index)?;
        let periods = match self.horizon {
            0 => fitted.num_periods(),
            h if h <= fitted.num_periods() => h,
            h => {
                return Err(Error::InsufficientHistory(format!(
                    "horizon {h} exceeds the {} periods available",
                    fitted.num_periods()
                )))
            }
        };
        PeriodGrid::new(self.k, self.m, fitted.first_decision_index(), periods, num_days)
    }
}

/// `⟨X_t, w_au_t⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub period: i64,
    pub history: HistoryMatrix,
    pub baseline: Vec<f64>,
}

impl State {
    pub fn num_assets(&self) -> usize {
        self.baseline.len()
    }
}

/// Per-asset reward factors. `re` is in percent per day, `va`/`co` in
/// percent-squared, `ts` a fraction of the investment amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFactorMatrix {
    pub re: Vec<f64>,
    pub va: Vec<f64>,
    pub co: Vec<f64>,
    pub ts: Vec<f64>,
}

impl RewardFactorMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            va: vec![0.0; n],
            co: vec![0.0; n],
            ts: vec![0.0; n],
        }
    }

    pub fn num_assets(&self) -> usize {
        self.re.len()
    }

    /// The four factor columns in `[re, va, co, ts]` order.
    pub fn columns(&self) -> [&[f64]; 4] {
        [&self.re, &self.va, &self.co, &self.ts]
    }

    /// Column sums `[Σre, Σva, Σco, Σts]`.
    pub fn sums(&self) -> [f64; 4] {
        self.columns().map(|c| c.iter().sum())
    }
}

/// Everything the reward and its factor decomposition need about one period.
#[derive(Debug, Clone)]
pub struct PeriodContext {
    pub k: usize,
    pub invest_amount: f64,
    pub alpha: f64,
    /// Positions held through the period.
    pub positions: PositionVector,
    pub order: PositionVector,
    pub p_prev: Vec<f64>,
    pub p_now: Vec<f64>,
    /// Portfolio value at the period's last close.
    pub portfolio_value: f64,
    pub sigma_raw: CovarianceEstimate,
    pub sigma_percent: CovarianceEstimate,
}

impl PeriodContext {
    /// `|Δq|' p_{t-1} / T`.
    pub fn transaction_scale(&self) -> f64 {
        self.order.gross_notional(&self.p_prev) / self.invest_amount
    }
}

/// `(1/K)(v_p/T - 1) - λ1 w'Σw - λ2 |Δq|'p_{t-1}/T`.
pub fn reward(w: &WeightVector, ctx: &PeriodContext, lambda1: f64, lambda2: f64) -> f64 {
    (ctx.portfolio_value / ctx.invest_amount - 1.0) / ctx.k as f64
        - lambda1 * ctx.sigma_raw.quadratic_form(w.as_slice())
        - lambda2 * ctx.transaction_scale()
}

pub fn reward_factors(w: &WeightVector, ctx: &PeriodContext) -> RewardFactorMatrix {
    let w = w.as_slice();
    let n = w.len();
    let t = ctx.invest_amount;
    let sigma = &ctx.sigma_percent.sigma;
    let mut out = RewardFactorMatrix::zeros(n);
    for i in 0..n {
        let q = ctx.positions.0[i] as f64;
        let dq = ctx.order.0[i].unsigned_abs() as f64;
        let pnl = q * (ctx.p_now[i] - ctx.p_prev[i]) - ctx.alpha * dq * ctx.p_prev[i];
        out.re[i] = pnl / t / ctx.k as f64 * 100.0;
        let sigma_w: f64 = (0..n).map(|j| sigma[[i, j]] * w[j]).sum();
        out.va[i] = w[i] * w[i] * sigma[[i, i]];
        out.co[i] = w[i] * sigma_w - out.va[i];
        out.ts[i] = dq * ctx.p_prev[i] / t;
    }
    out
}

/// Diagnostics of one step beyond the replay-buffer record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub period: i64,
    /// `w'Σw` on raw returns.
    pub portfolio_variance: f64,
    /// `v_total(t_K) / v_total((t-1)_K) - 1`.
    pub period_return: f64,
    pub total_value: f64,
    pub prev_total_value: f64,
    pub portfolio_value: f64,
    pub cost: f64,
    pub transaction_scale: f64,
}

/// Replay-buffer record `(s, a, r_elem, r, s')`.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Arc<State>,
    pub action: WeightVector,
    pub factors: RewardFactorMatrix,
    pub reward: f64,
    pub next_state: Arc<State>,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Serialize)]
struct LogRecord<'a> {
    period: i64,
    action: &'a [f64],
    reward: f64,
    re_sum: f64,
    va_sum: f64,
    co_sum: f64,
    ts_sum: f64,
}

pub struct TradingEnv {
    table: Arc<PriceTable>,
    grid: PeriodGrid,
    cfg: EnvConfig,
    provider: Arc<dyn WeightsProvider>,
    period: i64,
    snapshot: PortfolioSnapshot,
    state: Option<Arc<State>>,
    log: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for TradingEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TradingEnv")
            .field("grid", &self.grid)
            .field("cfg", &self.cfg)
            .field("period", &self.period)
            .field("snapshot", &self.snapshot)
            .finish_non_exhaustive()
    }
}

impl TradingEnv {
    pub fn new(table: Arc<PriceTable>, cfg: EnvConfig, provider: Arc<dyn WeightsProvider>) -> Result<Self> {
        cfg.validate()?;
        if table.num_days() < cfg.k * cfg.m + cfg.k + 1 {
            return Err(Error::InsufficientHistory(format!(
                "table of {} days is shorter than K*M + K + 1 = {}",
                table.num_days(),
                cfg.k * cfg.m + cfg.k + 1
            )));
        }
        let grid = cfg.grid(table.num_days())?;
        if grid.num_periods() == 0 {
            return Err(Error::InsufficientHistory("no whole trading period in the table".into()));
        }
        let n = table.num_assets();
        Ok(Self {
            snapshot: PortfolioSnapshot::initial(n, cfg.invest_amount),
            table,
            grid,
            cfg,
            provider,
            period: 1,
            state: None,
            log: None,
        })
    }

    /// Emit one JSON line per step (period, action, reward and factor sums).
    pub fn set_transition_log(&mut self, out: Box<dyn Write + Send>) {
        self.log = Some(out);
    }

    pub fn table(&self) -> &Arc<PriceTable> {
        &self.table
    }

    pub fn grid(&self) -> &PeriodGrid {
        &self.grid
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn provider(&self) -> &Arc<dyn WeightsProvider> {
        &self.provider
    }

    pub fn num_assets(&self) -> usize {
        self.table.num_assets()
    }

    pub fn horizon(&self) -> usize {
        self.grid.num_periods()
    }

    /// Current period index (1-based); `horizon + 1` once the episode is over.
    pub fn period(&self) -> i64 {
        self.period
    }

    pub fn snapshot(&self) -> &PortfolioSnapshot {
        &self.snapshot
    }

    pub fn is_done(&self) -> bool {
        self.period > self.grid.num_periods() as i64
    }

    /// State of period `t`, built from the price table and the baseline provider.
    pub fn observe(&self, t: i64) -> Result<State> {
        let history = data::history_matrix(&self.table, &self.grid, t)?;
        let baseline = self.provider.weights(&ProviderContext {
            period: t,
            history: &history,
        })?;
        if baseline.len() != self.num_assets() || baseline.iter().any(|w| !w.is_finite()) {
            return Err(Error::dim(format!(
                "provider returned {} weights for {} assets (or non-finite values)",
                baseline.len(),
                self.num_assets()
            )));
        }
        Ok(State {
            period: t,
            history,
            baseline,
        })
    }

    pub fn reset(&mut self) -> Result<Arc<State>> {
        self.period = 1;
        self.snapshot = PortfolioSnapshot::initial(self.num_assets(), self.cfg.invest_amount);
        let state = Arc::new(self.observe(1)?);
        self.state = Some(state.clone());
        Ok(state)
    }

    pub fn step(&mut self, action: &WeightVector) -> Result<Transition> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let state = match &self.state {
            Some(s) => s.clone(),
            None => self.reset()?,
        };
        let n = self.num_assets();
        if action.len() != n {
            return Err(Error::dim(format!("action has {} weights, expected {n}", action.len())));
        }
        if action.gross() > self.cfg.leverage_limit + 1e-12 {
            return Err(Error::Config(format!(
                "action gross exposure {} exceeds leverage limit {}",
                action.gross(),
                self.cfg.leverage_limit
            )));
        }
        let t = self.period;
        let p_prev = data::period_end_prices(&self.table, &self.grid, t - 1)?.to_vec();
        let p_now = data::period_end_prices(&self.table, &self.grid, t)?.to_vec();
        let sigma_raw = data::covariance(&state.history, ScaleMode::Raw)?;
        let sigma_percent = data::covariance(&state.history, ScaleMode::Percent)?;

        let prev_total = accounting::total_value(&self.snapshot, &p_prev);
        let rebalance = accounting::apply_rebalance(
            &self.snapshot,
            action,
            &p_prev,
            self.cfg.invest_amount,
            self.cfg.alpha,
        )?;
        let total = accounting::total_value(&rebalance.snapshot, &p_now);
        let ctx = PeriodContext {
            k: self.grid.k(),
            invest_amount: self.cfg.invest_amount,
            alpha: self.cfg.alpha,
            positions: rebalance.snapshot.positions.clone(),
            order: rebalance.order.clone(),
            p_prev,
            p_now,
            portfolio_value: accounting::portfolio_value(self.cfg.invest_amount, total, prev_total),
            sigma_raw,
            sigma_percent,
        };
        let r = reward(action, &ctx, self.cfg.lambda1, self.cfg.lambda2);
        let factors = reward_factors(action, &ctx);
        if !r.is_finite() || factors.columns().iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("reward or factors in period {t}")));
        }

        let info = StepInfo {
            period: t,
            portfolio_variance: ctx.sigma_raw.quadratic_form(action.as_slice()),
            period_return: total / prev_total - 1.0,
            total_value: total,
            prev_total_value: prev_total,
            portfolio_value: ctx.portfolio_value,
            cost: rebalance.cost,
            transaction_scale: ctx.transaction_scale(),
        };

        self.snapshot = PortfolioSnapshot {
            period: t,
            ..rebalance.snapshot
        };
        self.period += 1;
        let done = self.is_done();
        let next_state = Arc::new(self.observe(t + 1)?);
        self.state = Some(next_state.clone());

        if let Some(log) = self.log.as_mut() {
            let [re_sum, va_sum, co_sum, ts_sum] = factors.sums();
            let record = LogRecord {
                period: t,
                action: action.as_slice(),
                reward: r,
                re_sum,
                va_sum,
                co_sum,
                ts_sum,
            };
            serde_json::to_writer(&mut *log, &record)?;
            writeln!(log)?;
        }

        Ok(Transition {
            state,
            action: action.clone(),
            factors,
            reward: r,
            next_state,
            done,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineProvider;
    use crate::synthetic;

    fn drift_env(horizon: usize) -> TradingEnv {
        let table = Arc::new(synthetic::drift_table(2, 5, 4, horizon, 0.002));
        let cfg = EnvConfig {
            k: 5,
            m: 4,
            horizon,
            ..EnvConfig::default()
        };
        TradingEnv::new(table, cfg, Arc::new(BaselineProvider::EqualWeight)).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let mut env = drift_env(3);
        let a = env.reset().unwrap();
        let b = env.reset().unwrap();
        assert_eq!(a, b);
        assert_eq!(env.snapshot().cash, env.config().invest_amount);
    }

    #[test]
    fn zero_action_earns_zero() {
        let mut env = drift_env(3);
        env.reset().unwrap();
        let tr = env.step(&WeightVector::zeros(2)).unwrap();
        assert_eq!(tr.reward, 0.0);
        assert_eq!(tr.factors, RewardFactorMatrix::zeros(2));
    }

    #[test]
    fn horizon_one_finishes_immediately() {
        let mut env = drift_env(1);
        env.reset().unwrap();
        let tr = env.step(&WeightVector::zeros(2)).unwrap();
        assert!(tr.done);
        assert!(matches!(env.step(&WeightVector::zeros(2)), Err(Error::EpisodeDone)));
    }

    #[test]
    fn single_asset_has_no_cross_terms() {
        let table = Arc::new(synthetic::gbm_table(1, 120, 0.0005, 0.02, 7));
        let cfg = EnvConfig {
            k: 5,
            m: 4,
            horizon: 3,
            ..EnvConfig::default()
        };
        let mut env = TradingEnv::new(table, cfg, Arc::new(BaselineProvider::EqualWeight)).unwrap();
        env.reset().unwrap();
        let tr = env.step(&WeightVector::new(vec![1.0], 1.0).unwrap()).unwrap();
        assert_eq!(tr.factors.co, vec![0.0]);
        assert!(tr.factors.va[0] > 0.0);
    }

    #[test]
    fn holding_steady_at_flat_prices_trades_nothing() {
        let table = Arc::new(synthetic::drift_table(2, 5, 4, 4, 0.0));
        let cfg = EnvConfig {
            k: 5,
            m: 4,
            horizon: 4,
            ..EnvConfig::default()
        };
        let mut env = TradingEnv::new(table, cfg, Arc::new(BaselineProvider::EqualWeight)).unwrap();
        env.reset().unwrap();
        let w = WeightVector::new(vec![0.3, -0.6], 1.0).unwrap();
        env.step(&w).unwrap();
        let tr = env.step(&w).unwrap();
        assert_eq!(tr.factors.ts, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_excess_leverage() {
        let mut env = drift_env(2);
        env.reset().unwrap();
        let w = WeightVector::new(vec![0.9, 0.9], 2.0).unwrap();
        assert!(matches!(env.step(&w), Err(Error::Config(_))));
    }

    #[test]
    fn transition_log_lines() {
        #[derive(Clone, Default)]
        struct Sink(Arc<std::sync::Mutex<Vec<u8>>>);
        impl Write for Sink {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let sink = Sink::default();
        let mut env = drift_env(2);
        env.set_transition_log(Box::new(sink.clone()));
        env.reset().unwrap();
        env.step(&WeightVector::new(vec![0.5, 0.0], 1.0).unwrap()).unwrap();
        env.step(&WeightVector::new(vec![0.5, 0.0], 1.0).unwrap()).unwrap();
        let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v["period"], 2);
        assert!(v["re_sum"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn validates_penalties() {
        let cfg = EnvConfig {
            lambda1: 0.0,
            ..EnvConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
