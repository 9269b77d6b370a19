//! Out-of-sample evaluation: equity curves, base-2 log returns and the
//! metric battery (AR, DR, Var, Std, LStd, SR, STR).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::accounting::{self, PortfolioSnapshot, PositionVector, WeightVector};
use crate::agent::Agent;
use crate::baselines::{run_strategy, Strategy};
use crate::data::{self, PeriodGrid, PriceTable};
use crate::env::{State, TradingEnv};
use crate::error::{Error, Result};

/// Row label of the learned policy in reports.
pub const AGENT_NAME: &str = "Factor-MCLS";

/// A policy that rebalances once per trading period.
pub trait PeriodicPolicy {
    fn weights(&mut self, state: &State) -> Result<WeightVector>;
}

impl PeriodicPolicy for Agent {
    fn weights(&mut self, state: &State) -> Result<WeightVector> {
        self.act_greedy(state)
    }
}

impl PeriodicPolicy for &Agent {
    fn weights(&mut self, state: &State) -> Result<WeightVector> {
        self.act_greedy(state)
    }
}

/// Adapts a closure into a [`PeriodicPolicy`].
pub struct FnPolicy<F>(pub F);

impl<F: FnMut(&State) -> Result<WeightVector>> PeriodicPolicy for FnPolicy<F> {
    fn weights(&mut self, state: &State) -> Result<WeightVector> {
        (self.0)(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    /// Period index for periodic policies, day offset for daily ones.
    pub period: i64,
    pub order: Vec<i64>,
    pub cost: f64,
}

/// Daily marked-to-market values over a backtest window.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    pub initial_date: NaiveDate,
    pub initial_value: f64,
    pub dates: Vec<NaiveDate>,
    pub total_value: Vec<f64>,
    pub portfolio_value: Vec<f64>,
    pub cash: Vec<f64>,
    pub trades: Vec<TradeRecord>,
}

impl EquityCurve {
    pub fn len(&self) -> usize {
        self.total_value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_value.is_empty()
    }

    /// `date,total_value,portfolio_value,cash` rows after `# `-prefixed comments.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "# initial_date={} initial_value={}", self.initial_date, self.initial_value)?;
        writeln!(out, "date,total_value,portfolio_value,cash")?;
        for i in 0..self.len() {
            writeln!(out, "{},{},{},{}", self.dates[i], self.total_value[i], self.portfolio_value[i], self.cash[i])?;
        }
        Ok(())
    }

    pub fn write_trades_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "period,cost,order")?;
        for t in &self.trades {
            let order: Vec<String> = t.order.iter().map(|q| q.to_string()).collect();
            writeln!(out, "{},{},{}", t.period, t.cost, order.join(" "))?;
        }
        Ok(())
    }
}

/// Runs `policy` over every period of `env`'s grid, rebalancing to integer
/// shares of the constant investment amount at each decision close and
/// marking to market on every day in between.
pub fn run_backtest(policy: &mut dyn PeriodicPolicy, env: &TradingEnv) -> Result<EquityCurve> {
    let table = env.table();
    let grid = *env.grid();
    let cfg = env.config();
    let n = env.num_assets();
    let start = grid.decision_day(1)?;
    let mut snap = PortfolioSnapshot::initial(n, cfg.invest_amount);
    let initial_value = accounting::total_value(&snap, &table.day(start)?.to_vec());
    let days = grid.num_periods() * grid.k();
    let mut curve = EquityCurve {
        initial_date: table.dates()[start],
        initial_value,
        dates: Vec::with_capacity(days),
        total_value: Vec::with_capacity(days),
        portfolio_value: Vec::with_capacity(days),
        cash: Vec::with_capacity(days),
        trades: Vec::new(),
    };
    for t in 1..=grid.num_periods() as i64 {
        let state = env.observe(t)?;
        let w = policy.weights(&state)?;
        if w.len() != n || w.gross() > cfg.leverage_limit + 1e-12 {
            return Err(Error::Config(format!("policy weights for period {t} are infeasible")));
        }
        let p_prev = data::period_end_prices(table, &grid, t - 1)?.to_vec();
        let v_prev_end = accounting::total_value(&snap, &p_prev);
        let r = accounting::apply_rebalance(&snap, &w, &p_prev, cfg.invest_amount, cfg.alpha)?;
        snap = PortfolioSnapshot { period: t, ..r.snapshot };
        curve.trades.push(TradeRecord {
            period: t,
            order: r.order.0,
            cost: r.cost,
        });
        for k in 1..=grid.k() {
            let day = grid.day_index(t, k)?;
            let p = table.day(day)?.to_vec();
            let v = accounting::total_value(&snap, &p);
            curve.dates.push(table.dates()[day]);
            curve.total_value.push(v);
            curve.portfolio_value.push(accounting::portfolio_value(cfg.invest_amount, v, v_prev_end));
            curve.cash.push(snap.cash);
        }
    }
    Ok(curve)
}

/// Execution settings of the daily benchmark strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub initial_capital: f64,
    /// Proportional cost rate charged to benchmarks.
    pub alpha: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            initial_capital: 1e6,
            alpha: 0.0,
        }
    }
}

/// Runs a daily-rebalancing strategy over the days of `grid`. Each close the
/// whole current value is reinvested into integer shares of the strategy's weights.
pub fn run_benchmark(strategy: &Strategy, table: &PriceTable, grid: &PeriodGrid, cfg: &BenchConfig) -> Result<EquityCurve> {
    let run = run_strategy(strategy, table, grid)?;
    replay_daily(&run.weights, table, grid, cfg)
}

/// Daily execution of a precomputed weight sequence, one vector per window day.
pub fn replay_daily(weights: &[Vec<f64>], table: &PriceTable, grid: &PeriodGrid, cfg: &BenchConfig) -> Result<EquityCurve> {
    if !(cfg.initial_capital > 0.0) || cfg.alpha < 0.0 {
        return Err(Error::Config("benchmark capital must be positive and alpha >= 0".into()));
    }
    let n = table.num_assets();
    let start = grid.decision_day(1)?;
    let days = grid.num_periods() * grid.k();
    if weights.len() != days {
        return Err(Error::dim(format!("{} weight vectors for {days} days", weights.len())));
    }
    let mut snap = PortfolioSnapshot::initial(n, cfg.initial_capital);
    let mut curve = EquityCurve {
        initial_date: table.dates()[start],
        initial_value: cfg.initial_capital,
        dates: Vec::with_capacity(days),
        total_value: Vec::with_capacity(days),
        portfolio_value: Vec::with_capacity(days),
        cash: Vec::with_capacity(days),
        trades: Vec::new(),
    };
    for (j, w) in weights.iter().enumerate() {
        let day = start + 1 + j;
        let p_prev = table.day(day - 1)?.to_vec();
        let value = accounting::total_value(&snap, &p_prev);
        if !(value > 0.0) {
            return Err(Error::NonFinite(format!("benchmark wealth {value} on day {}", day - 1)));
        }
        let wv = WeightVector::new(w.clone(), 1.0 + 1e-9)?;
        let r = accounting::apply_rebalance(&snap, &wv, &p_prev, value, cfg.alpha)?;
        snap = r.snapshot;
        curve.trades.push(TradeRecord {
            period: j as i64,
            order: r.order.0,
            cost: r.cost,
        });
        let p = table.day(day)?.to_vec();
        let v = accounting::total_value(&snap, &p);
        curve.dates.push(table.dates()[day]);
        curve.total_value.push(v);
        curve.portfolio_value.push(v);
        curve.cash.push(snap.cash);
    }
    Ok(curve)
}

/// Zero weights: the curve stays at its initial value.
pub fn hold_cash(n: usize) -> impl PeriodicPolicy {
    FnPolicy(move |_: &State| Ok(WeightVector::zeros(n)))
}

/// `log2(v_j / v_{j-1})`, the first day chained to the initial value.
pub fn daily_returns(curve: &EquityCurve) -> Result<Vec<f64>> {
    let mut prev = curve.initial_value;
    if !(prev > 0.0) {
        return Err(Error::NonFinite(format!("non-positive initial value {prev}")));
    }
    let mut out = Vec::with_capacity(curve.len());
    for (idx, v) in curve.total_value.iter().enumerate() {
        if !(*v > 0.0) {
            return Err(Error::NonFinite(format!("non-positive total value {v} at index {idx}")));
        }
        out.push((v / prev).log2());
        prev = *v;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ar: f64,
    pub dr: f64,
    pub var: f64,
    pub std: f64,
    pub lstd: f64,
    /// `None` when `std` is zero.
    pub sr: Option<f64>,
    /// `None` when `lstd` is zero.
    pub str: Option<f64>,
    pub r_f: f64,
    pub m_ac: f64,
    pub days: usize,
}

pub fn metrics(returns: &[f64], r_f: f64, m_ac: f64) -> Result<MetricReport> {
    if returns.is_empty() {
        return Err(Error::Empty("return series".into()));
    }
    let count = returns.len() as f64;
    let ar: f64 = returns.iter().sum();
    let dr = ar / count;
    let var = returns.iter().map(|r| (r - dr).powi(2)).sum::<f64>() / count;
    let std = var.sqrt();
    let lstd = (returns.iter().map(|r| (r - m_ac).min(0.0).powi(2)).sum::<f64>() / count).sqrt();
    Ok(MetricReport {
        ar,
        dr,
        var,
        std,
        lstd,
        sr: (std > 0.0).then(|| (dr - r_f) / std),
        str: (lstd > 0.0).then(|| (dr - m_ac) / lstd),
        r_f,
        m_ac,
        days: returns.len(),
    })
}

/// The displayed metric columns, in order.
pub const REPORT_COLUMNS: [&str; 6] = ["AR", "DR", "Std", "SR", "LStd", "STR"];

fn column_value(m: &MetricReport, col: &str) -> Option<f64> {
    match col {
        "AR" => Some(m.ar),
        "DR" => Some(m.dr),
        "Std" => Some(m.std),
        "SR" => m.sr,
        "LStd" => Some(m.lstd),
        "STR" => m.str,
        _ => None,
    }
}

fn lower_is_better(col: &str) -> bool {
    matches!(col, "Std" | "LStd")
}

/// Metric reports keyed by strategy name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: BTreeMap<String, MetricReport>,
}

/// One emitted row with its best-value flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub metrics: MetricReport,
    pub best: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

impl Report {
    /// Strategy names with the learned policy first, the rest alphabetical.
    pub fn ordered_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.rows.keys().map(String::as_str).filter(|n| *n != AGENT_NAME).collect();
        if self.rows.contains_key(AGENT_NAME) {
            names.insert(0, AGENT_NAME);
        }
        names
    }

    /// Whether `name` holds the best value of `col` (ties all count as best).
    pub fn is_best(&self, name: &str, col: &str) -> bool {
        let Some(mine) = self.rows.get(name).and_then(|m| column_value(m, col)) else {
            return false;
        };
        let values = self.rows.values().filter_map(|m| column_value(m, col));
        let best = if lower_is_better(col) {
            values.fold(f64::INFINITY, f64::min)
        } else {
            values.fold(f64::NEG_INFINITY, f64::max)
        };
        mine == best
    }

    pub fn rows_ordered(&self) -> Vec<ReportRow> {
        self.ordered_names()
            .into_iter()
            .map(|name| ReportRow {
                strategy: name.to_string(),
                metrics: self.rows[name],
                best: REPORT_COLUMNS.iter().map(|c| (c.to_string(), self.is_best(name, c))).collect(),
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(
            out,
            "strategy,AR,DR,Std,SR,LStd,STR,Var,r_f,M_ac,days,best_AR,best_DR,best_Std,best_SR,best_LStd,best_STR"
        )?;
        for row in self.rows_ordered() {
            let m = row.metrics;
            let best: Vec<String> = REPORT_COLUMNS.iter().map(|c| row.best[*c].to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                row.strategy,
                m.ar,
                m.dr,
                m.std,
                fmt_opt(m.sr),
                m.lstd,
                fmt_opt(m.str),
                m.var,
                m.r_f,
                m.m_ac,
                m.days,
                best.join(",")
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(source);
        let mut rows = BTreeMap::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = idx + 2;
            let field = |i: usize| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("missing column {i}"),
                })
            };
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|e| Error::Parse {
                    line,
                    msg: format!("column {i}: {e}"),
                })
            };
            let opt = |i: usize| -> Result<Option<f64>> {
                match field(i)? {
                    "undefined" => Ok(None),
                    _ => num(i).map(Some),
                }
            };
            let m = MetricReport {
                ar: num(1)?,
                dr: num(2)?,
                std: num(3)?,
                sr: opt(4)?,
                lstd: num(5)?,
                str: opt(6)?,
                var: num(7)?,
                r_f: num(8)?,
                m_ac: num(9)?,
                days: field(10)?.parse().map_err(|e| Error::Parse {
                    line,
                    msg: format!("days: {e}"),
                })?,
            };
            rows.insert(field(0)?.to_string(), m);
        }
        Ok(Self { rows })
    }

    pub fn document(&self, config_hash: &str, seed: u64) -> ReportDocument {
        ReportDocument {
            schema: 1,
            config_hash: config_hash.to_string(),
            seed,
            rows: self.rows_ordered(),
        }
    }

    pub fn from_document(doc: &ReportDocument) -> Self {
        Self {
            rows: doc.rows.iter().map(|r| (r.strategy.clone(), r.metrics)).collect(),
        }
    }
}

/// Positions implied by a curve's trade log, for cross-checks.
pub fn replay_positions(curve: &EquityCurve, n: usize) -> PositionVector {
    let mut q = vec![0i64; n];
    for t in &curve.trades {
        for (a, d) in q.iter_mut().zip(&t.order) {
            *a += d;
        }
    }
    PositionVector(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(values: &[f64]) -> EquityCurve {
        let d = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
        EquityCurve {
            initial_date: d,
            initial_value: values[0],
            dates: vec![d; values.len() - 1],
            total_value: values[1..].to_vec(),
            portfolio_value: values[1..].to_vec(),
            cash: vec![0.0; values.len() - 1],
            trades: Vec::new(),
        }
    }

    #[test]
    fn doubling_is_one() {
        assert_eq!(daily_returns(&curve(&[100.0, 200.0])).unwrap(), vec![1.0]);
        assert_eq!(daily_returns(&curve(&[5.0, 5.0, 5.0])).unwrap(), vec![0.0, 0.0]);
        assert!(daily_returns(&curve(&[5.0, 0.0])).is_err());
    }

    #[test]
    fn zero_returns_have_undefined_ratios() {
        let m = metrics(&[0.0; 10], 0.0, 0.0).unwrap();
        assert_eq!((m.ar, m.dr, m.var, m.std, m.lstd), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(m.sr.is_none() && m.str.is_none());
        assert!(metrics(&[], 0.0, 0.0).is_err());
    }

    #[test]
    fn two_point_series() {
        let m = metrics(&[0.01, -0.01], 0.0, 0.0).unwrap();
        assert_eq!(m.ar, 0.0);
        assert_eq!(m.dr, 0.0);
        assert!((m.std - 0.01).abs() < 1e-15);
        assert!((m.lstd - 0.00005f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.sr, Some(0.0));
        assert_eq!(m.str, Some(0.0));
    }

    #[test]
    fn ties_are_all_best() {
        let a = metrics(&[0.01, 0.02], 0.0, 0.0).unwrap();
        let mut b = a;
        b.std = 1.0;
        let mut r = Report::default();
        r.rows.insert("A".into(), a);
        r.rows.insert("B".into(), b);
        assert!(r.is_best("A", "AR") && r.is_best("B", "AR"));
        assert!(r.is_best("A", "Std") && !r.is_best("B", "Std"));
    }

    #[test]
    fn agent_row_comes_first() {
        let m = metrics(&[0.01], 0.0, 0.0).unwrap();
        let mut r = Report::default();
        for name in ["UBAH", AGENT_NAME, "CRP"] {
            r.rows.insert(name.into(), m);
        }
        assert_eq!(r.ordered_names(), vec![AGENT_NAME, "CRP", "UBAH"]);
    }
}
