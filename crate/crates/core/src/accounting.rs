//! Share-level bookkeeping: integer target positions, market orders, cash and
//! transaction costs. Cash may go negative (shorts and flooring are settled
//! against an implicit margin account).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target weights; negative entries are shorts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates finiteness and `sum |w_i| <= leverage_limit` (with 1e-12 slack).
    pub fn new(w: Vec<f64>, leverage_limit: f64) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight vector".into()));
        }
        let gross: f64 = w.iter().map(|v| v.abs()).sum();
        if gross > leverage_limit + 1e-12 {
            return Err(Error::Config(format!(
                "gross exposure {gross} exceeds leverage limit {leverage_limit}"
            )));
        }
        Ok(Self(w))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn gross(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Integer share counts; negative entries are shorts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PositionVector(pub Vec<i64>);

impl PositionVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|q|' p`.
    pub fn gross_notional(&self, prices: &[f64]) -> f64 {
        self.0.iter().zip(prices).map(|(q, p)| q.unsigned_abs() as f64 * p).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSnapshot {
    pub cash: f64,
    pub positions: PositionVector,
    pub invest_amount: f64,
    pub period: i64,
}

impl PortfolioSnapshot {
    /// All cash, no positions.
    pub fn initial(n: usize, invest_amount: f64) -> Self {
        Self {
            cash: invest_amount,
            positions: PositionVector::zeros(n),
            invest_amount,
            period: 0,
        }
    }
}

/// `floor(T * w_i / p_i)`, flooring toward negative infinity.
pub fn target_positions(w: &WeightVector, invest_amount: f64, p_prev: &[f64]) -> PositionVector {
    debug_assert_eq!(w.len(), p_prev.len());
    PositionVector(
        w.as_slice()
            .iter()
            .zip(p_prev)
            .map(|(wi, pi)| (invest_amount * wi / pi).floor() as i64)
            .collect(),
    )
}

pub fn market_order(q_new: &PositionVector, q_old: &PositionVector) -> Result<PositionVector> {
    if q_new.len() != q_old.len() {
        return Err(Error::dim(format!(
            "position lengths differ: {} vs {}",
            q_new.len(),
            q_old.len()
        )));
    }
    Ok(PositionVector(
        q_new.0.iter().zip(&q_old.0).map(|(a, b)| a - b).collect(),
    ))
}

/// Cash plus marked-to-market positions.
pub fn total_value(snap: &PortfolioSnapshot, prices: &[f64]) -> f64 {
    snap.cash
        + snap
            .positions
            .0
            .iter()
            .zip(prices)
            .map(|(q, p)| *q as f64 * p)
            .sum::<f64>()
}

/// Investment amount plus the change in total value since the previous period's close.
pub fn portfolio_value(invest_amount: f64, v_now: f64, v_prev_end: f64) -> f64 {
    invest_amount + (v_now - v_prev_end)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rebalance {
    pub snapshot: PortfolioSnapshot,
    pub order: PositionVector,
    pub cost: f64,
}

/// Moves the book to the integer target positions of `w` at prices `p_prev`,
/// paying `alpha * |Δq|' p_prev` out of cash.
pub fn apply_rebalance(
    snap: &PortfolioSnapshot,
    w: &WeightVector,
    p_prev: &[f64],
    invest_amount: f64,
    alpha: f64,
) -> Result<Rebalance> {
    if w.len() != snap.positions.len() || p_prev.len() != w.len() {
        return Err(Error::dim("weights, positions and prices must share a length"));
    }
    if alpha < 0.0 {
        return Err(Error::Config(format!("cost rate {alpha} is negative")));
    }
    let target = target_positions(w, invest_amount, p_prev);
    let order = market_order(&target, &snap.positions)?;
    let traded: f64 = order.0.iter().zip(p_prev).map(|(d, p)| *d as f64 * p).sum();
    let cost = alpha * order.gross_notional(p_prev);
    Ok(Rebalance {
        snapshot: PortfolioSnapshot {
            cash: snap.cash - traded - cost,
            positions: target,
            invest_amount,
            period: snap.period,
        },
        order,
        cost,
    })
}
