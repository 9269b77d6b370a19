//! Price ingestion and the period grid.
//!
//! Prices are adjusted closes laid out assets × days. A [`PeriodGrid`] carves
//! the day axis into trading periods of `K` days: period `t` covers the day
//! indices `first_decision_index + (t-1)K + 1 ..= first_decision_index + tK`,
//! and the rebalance for period `t` happens at the close of day
//! `first_decision_index + (t-1)K`. Period indices are signed so that the
//! lookback periods `1-M ..= 0` can be addressed with the same arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDate;
use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Aligned adjusted-close prices, `closes[[i, d]]` for asset `i` on day `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    closes: Array2<f64>,
}

impl PriceTable {
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, closes: Array2<f64>) -> Result<Self> {
        if closes.nrows() != tickers.len() || closes.ncols() != dates.len() {
            return Err(Error::dim(format!(
                "closes are {}x{} but there are {} tickers and {} dates",
                closes.nrows(),
                closes.ncols(),
                tickers.len(),
                dates.len()
            )));
        }
        if tickers.is_empty() || dates.is_empty() {
            return Err(Error::Empty("price table has no tickers or no dates".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("dates must be strictly increasing".into()));
        }
        if let Some(((i, d), p)) = closes.indexed_iter().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::NonPositivePrice {
                line: 0,
                ticker: tickers[i].clone(),
                date: dates[d].to_string(),
                price: *p,
            });
        }
        Ok(Self {
            tickers,
            dates,
            closes,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &Array2<f64> {
        &self.closes
    }

    pub fn num_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }

    /// Prices of every asset on day index `day`.
    pub fn day(&self, day: usize) -> Result<Array1<f64>> {
        if day >= self.num_days() {
            return Err(Error::OutOfRange(format!(
                "day {day} beyond table of {} days",
                self.num_days()
            )));
        }
        Ok(self.closes.column(day).to_owned())
    }

    /// Index of the first date on or after `date`.
    pub fn position_of(&self, date: NaiveDate) -> Option<usize> {
        let idx = self.dates.partition_point(|d| *d < date);
        (idx < self.dates.len()).then_some(idx)
    }

    /// Price relatives `p_d / p_{d-1}` for every day `d >= 1`, one row per day.
    pub fn daily_ratios(&self) -> Vec<Vec<f64>> {
        (1..self.num_days())
            .map(|d| {
                (0..self.num_assets())
                    .map(|i| self.closes[[i, d]] / self.closes[[i, d - 1]])
                    .collect()
            })
            .collect()
    }

    /// Keep only the assets at the given indices (order preserved).
    pub fn select(&self, assets: &[usize]) -> Result<Self> {
        let tickers = assets.iter().map(|&i| self.tickers[i].clone()).collect();
        let closes = self.closes.select(Axis(0), assets);
        Self::new(tickers, self.dates.clone(), closes)
    }

    /// Writes the table in the long `date,ticker,adj_close` layout the loader reads.
    ///
    /// Prices use the shortest representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "date,ticker,adj_close")?;
        for (d, date) in self.dates.iter().enumerate() {
            for (i, ticker) in self.tickers.iter().enumerate() {
                writeln!(out, "{date},{ticker},{}", self.closes[[i, d]])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropReport {
    pub ticker: String,
    pub missing_dates: usize,
    pub total_dates: usize,
}

impl fmt::Display for DropReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DROPPED {} missing_dates={}/{}",
            self.ticker, self.missing_dates, self.total_dates
        )
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTable {
    pub table: PriceTable,
    pub dropped: Vec<DropReport>,
}

/// Reads `date,ticker,adj_close` rows.
///
/// The date axis is the union of all dates seen; any ticker lacking one of
/// them is dropped and reported. Tickers come out in lexicographic order.
pub fn load_price_table<R: Read>(source: R, allow: Option<&[String]>) -> Result<LoadedTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let expected = ["date", "ticker", "adj_close"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `date,ticker,adj_close`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let allow: Option<BTreeSet<&str>> = allow.map(|a| a.iter().map(String::as_str).collect());
    let mut series: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut all_dates = BTreeSet::new();
    let mut rows = 0usize;

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            msg: format!("bad date {:?}: {e}", &record[0]),
        })?;
        let ticker = record[1].to_string();
        if ticker.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty ticker".into(),
            });
        }
        let price: f64 = record[2].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad price {:?}: {e}", &record[2]),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::NonPositivePrice {
                line,
                ticker,
                date: date.to_string(),
                price,
            });
        }
        rows += 1;
        if let Some(allow) = &allow {
            if !allow.contains(ticker.as_str()) {
                continue;
            }
        }
        all_dates.insert(date);
        if series.entry(ticker.clone()).or_default().insert(date, price).is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate row for {ticker} on {date}"),
            });
        }
    }

    if rows == 0 {
        return Err(Error::Empty("input contains no price rows".into()));
    }

    let dates: Vec<NaiveDate> = all_dates.into_iter().collect();
    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for (ticker, by_date) in series {
        if by_date.len() < dates.len() {
            dropped.push(DropReport {
                ticker,
                missing_dates: dates.len() - by_date.len(),
                total_dates: dates.len(),
            });
        } else {
            kept.push((ticker, by_date));
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty("no ticker covers every date".into()));
    }

    let mut closes = Array2::zeros((kept.len(), dates.len()));
    for (i, (_, by_date)) in kept.iter().enumerate() {
        for (d, price) in by_date.values().enumerate() {
            closes[[i, d]] = *price;
        }
    }
    let tickers = kept.into_iter().map(|(t, _)| t).collect();
    Ok(LoadedTable {
        table: PriceTable::new(tickers, dates, closes)?,
        dropped,
    })
}

/// Day-axis layout of trading periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PeriodGrid {
    k: usize,
    m: usize,
    first_decision_index: usize,
    num_periods: usize,
    num_days: usize,
}

impl PeriodGrid {
    pub fn new(k: usize, m: usize, first_decision_index: usize, num_periods: usize, num_days: usize) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::Config(format!("K and M must be positive (K={k}, M={m})")));
        }
        if first_decision_index < k * m {
            return Err(Error::InsufficientHistory(format!(
                "first decision day {first_decision_index} leaves less than K*M = {} days of lookback",
                k * m
            )));
        }
        if first_decision_index + num_periods * k >= num_days {
            return Err(Error::OutOfRange(format!(
                "{num_periods} periods of {k} days from day {first_decision_index} exceed {num_days} days"
            )));
        }
        Ok(Self {
            k,
            m,
            first_decision_index,
            num_periods,
            num_days,
        })
    }

    /// Grid starting at `first_decision_index` (default: the earliest day with
    /// full lookback) with as many whole periods as the table holds.
    pub fn fit(num_days: usize, k: usize, m: usize, first_decision_index: Option<usize>) -> Result<Self> {
        let first = first_decision_index.unwrap_or(k * m);
        if num_days <= first + k {
            return Err(Error::InsufficientHistory(format!(
                "{num_days} days cannot hold lookback {} plus one period of {k} days",
                k * m
            )));
        }
        let periods = (num_days - 1 - first) / k;
        Self::new(k, m, first, periods, num_days)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn first_decision_index(&self) -> usize {
        self.first_decision_index
    }

    pub fn num_periods(&self) -> usize {
        self.num_periods
    }

    pub fn num_days(&self) -> usize {
        self.num_days
    }

    /// Same layout restricted to `periods` periods starting at the close of period `start - 1`.
    pub fn sub_grid(&self, start: usize, periods: usize) -> Result<Self> {
        let first = self.decision_day(start as i64)?;
        Self::new(self.k, self.m, first, periods, self.num_days)
    }

    /// Day index of day `k` (1-based) of period `t`.
    pub fn day_index(&self, t: i64, k: usize) -> Result<usize> {
        if k == 0 || k > self.k {
            return Err(Error::OutOfRange(format!("day-in-period {k} outside 1..={}", self.k)));
        }
        let day = self.first_decision_index as i64 + (t - 1) * self.k as i64 + k as i64;
        if day < 0 || day as usize >= self.num_days {
            return Err(Error::OutOfRange(format!("period {t} day {k} maps to day {day}")));
        }
        Ok(day as usize)
    }

    /// Day index of the close at which period `t` is entered, i.e. the last day of period `t-1`.
    pub fn decision_day(&self, t: i64) -> Result<usize> {
        let day = self.first_decision_index as i64 + (t - 1) * self.k as i64;
        if day < 0 || day as usize >= self.num_days {
            return Err(Error::OutOfRange(format!("decision day of period {t} is day {day}")));
        }
        Ok(day as usize)
    }
}

/// Price vector on day `k` of period `t`.
pub fn price_vector(table: &PriceTable, grid: &PeriodGrid, t: i64, k: usize) -> Result<Array1<f64>> {
    table.day(grid.day_index(t, k)?)
}

/// Price vector on the last day of period `t` (`t = 0` gives the first decision close).
pub fn period_end_prices(table: &PriceTable, grid: &PeriodGrid, t: i64) -> Result<Array1<f64>> {
    table.day(grid.decision_day(t + 1)?)
}

/// Element-wise ratio of day `k` of period `t` to the trading day before it.
pub fn relative_ratios(table: &PriceTable, grid: &PeriodGrid, t: i64, k: usize) -> Result<Array1<f64>> {
    let day = grid.day_index(t, k)?;
    if day == 0 {
        return Err(Error::InsufficientHistory(format!(
            "period {t} day {k} is the first day of the table"
        )));
    }
    let closes = table.closes();
    Ok(&closes.column(day) / &closes.column(day - 1))
}

/// The `n x K` block of price relatives of one period.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioBlock(Array2<f64>);

impl RatioBlock {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }
}

pub fn fluctuation_matrix(table: &PriceTable, grid: &PeriodGrid, t: i64) -> Result<RatioBlock> {
    let mut block = Array2::zeros((table.num_assets(), grid.k()));
    for k in 1..=grid.k() {
        block.column_mut(k - 1).assign(&relative_ratios(table, grid, t, k)?);
    }
    Ok(RatioBlock(block))
}

/// The `n x KM` lookback of price relatives, oldest period first.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HistoryMatrix {
    x: Array2<f64>,
    k: usize,
    m: usize,
}

impl HistoryMatrix {
    pub fn new(x: Array2<f64>, k: usize, m: usize) -> Result<Self> {
        if x.ncols() != k * m {
            return Err(Error::dim(format!("history has {} columns, expected K*M = {}", x.ncols(), k * m)));
        }
        if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonFinite("history ratios must be finite and positive".into()));
        }
        Ok(Self { x, k, m })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn num_assets(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

pub fn history_matrix(table: &PriceTable, grid: &PeriodGrid, t: i64) -> Result<HistoryMatrix> {
    let (k, m) = (grid.k(), grid.m());
    let first_day = grid.first_decision_index() as i64 + (t - 1 - m as i64) * k as i64 + 1;
    if first_day < 1 {
        return Err(Error::InsufficientHistory(format!(
            "period {t} needs {m} periods of lookback before day {}",
            grid.first_decision_index() as i64 + (t - 1) * k as i64
        )));
    }
    let mut x = Array2::zeros((table.num_assets(), k * m));
    for (j, back) in (1..=m as i64).rev().enumerate() {
        let block = fluctuation_matrix(table, grid, t - back)?;
        x.slice_mut(s![.., j * k..(j + 1) * k]).assign(block.matrix());
    }
    HistoryMatrix::new(x, k, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// Returns as fractions, `r - 1`.
    Raw,
    /// Returns in percent, `(r - 1) * 100`.
    Percent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma: Array2<f64>,
    pub mode: ScaleMode,
}

impl CovarianceEstimate {
    /// `w' Σ w`.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let n = w.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += w[i] * self.sigma[[i, j]] * w[j];
            }
        }
        acc
    }
}

/// Window covariance of returns with the `KM - n - 1` denominator.
pub fn covariance(history: &HistoryMatrix, mode: ScaleMode) -> Result<CovarianceEstimate> {
    let x = history.matrix();
    let (n, cols) = x.dim();
    let denom = cols as i64 - n as i64 - 1;
    if denom <= 0 {
        return Err(Error::InsufficientHistory(format!(
            "covariance denominator K*M - n - 1 = {cols} - {n} - 1 is not positive"
        )));
    }
    let scale = match mode {
        ScaleMode::Raw => 1.0,
        ScaleMode::Percent => 100.0,
    };
    let returns = x.mapv(|r| (r - 1.0) * scale);
    let means = returns.mean_axis(Axis(1)).expect("non-empty window");
    let centered = &returns - &means.insert_axis(Axis(1));
    let mut sigma = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = centered.row(i).dot(&centered.row(j)) / denom as f64;
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
    }
    Ok(CovarianceEstimate { sigma, mode })
}
