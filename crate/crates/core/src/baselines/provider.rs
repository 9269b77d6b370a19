//! Baseline (auxiliary) weights that enter the agent's state next to the
//! price-ratio history.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::HistoryMatrix;
use crate::error::{Error, Result};

/// What a provider sees when asked for the weights of period `period`.
#[derive(Debug, Clone, Copy)]
pub struct ProviderContext<'a> {
    pub period: i64,
    pub history: &'a HistoryMatrix,
}

/// Source of the baseline weights `w_au`. Implement this to plug in a
/// pre-trained auxiliary agent.
pub trait WeightsProvider: Send + Sync {
    fn weights(&self, ctx: &ProviderContext<'_>) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineProvider {
    EqualWeight,
    /// Softmax over the trailing mean percent return of each asset.
    Momentum {
        /// Number of most recent history columns averaged; 0 means all of them.
        #[serde(default)]
        window: usize,
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    FileLoaded {
        rows: BTreeMap<i64, Vec<f64>>,
    },
}

fn default_temperature() -> f64 {
    1.0
}

impl BaselineProvider {
    pub fn baseline_weights(&self, ctx: &ProviderContext<'_>) -> Result<Vec<f64>> {
        let n = ctx.history.num_assets();
        match self {
            BaselineProvider::EqualWeight => Ok(vec![1.0 / n as f64; n]),
            BaselineProvider::Momentum { window, temperature } => {
                if !(*temperature > 0.0) {
                    return Err(Error::Config(format!("momentum temperature {temperature} must be positive")));
                }
                let x = ctx.history.matrix();
                let cols = x.ncols();
                let used = if *window == 0 { cols } else { (*window).min(cols) };
                let scores: Vec<f64> = x
                    .rows()
                    .into_iter()
                    .map(|row| {
                        row.iter().skip(cols - used).map(|r| (r - 1.0) * 100.0).sum::<f64>() / used as f64 / temperature
                    })
                    .collect();
                Ok(softmax(&scores))
            }
            BaselineProvider::FileLoaded { rows } => {
                let row = rows.get(&ctx.period).ok_or(Error::MissingPeriod(ctx.period))?;
                if row.len() != n {
                    return Err(Error::dim(format!(
                        "baseline row for period {} has {} weights, expected {n}",
                        ctx.period,
                        row.len()
                    )));
                }
                Ok(row.clone())
            }
        }
    }

    /// Parses `period_index,w_1,...,w_n` rows. A non-numeric first line is
    /// treated as a header; `#` lines are comments.
    pub fn read_rows<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(source);
        let mut rows = BTreeMap::new();
        let mut width = None;
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
            let Ok(period) = record[0].parse::<i64>() else {
                if idx == 0 {
                    continue;
                }
                return Err(Error::Parse {
                    line,
                    msg: format!("bad period index {:?}", &record[0]),
                });
            };
            let weights = record
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("bad weight: {e}"),
                })?;
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Parse {
                    line,
                    msg: "non-finite weight".into(),
                });
            }
            match width {
                None => width = Some(weights.len()),
                Some(w) if w != weights.len() => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("expected {w} weights, found {}", weights.len()),
                    })
                }
                _ => {}
            }
            if rows.insert(period, weights).is_some() {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate period {period}"),
                });
            }
        }
        Ok(BaselineProvider::FileLoaded { rows })
    }

    /// Writes the rows of a file-backed provider in the format [`read_rows`](Self::read_rows) accepts.
    pub fn write_rows<W: Write>(&self, mut out: W) -> Result<()> {
        let BaselineProvider::FileLoaded { rows } = self else {
            return Err(Error::Config("only file-backed providers have rows".into()));
        };
        for (period, weights) in rows {
            write!(out, "{period}")?;
            for w in weights {
                write!(out, ",{w}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

impl WeightsProvider for BaselineProvider {
    fn weights(&self, ctx: &ProviderContext<'_>) -> Result<Vec<f64>> {
        self.baseline_weights(ctx)
    }
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
