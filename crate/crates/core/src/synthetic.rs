//! Deterministic price tables for tests, examples and offline runs.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::PriceTable;

/// The 29 Dow Jones constituents with continuous history since 2000.
pub const DJIA_TICKERS: [&str; 29] = [
    "AAPL", "AMGN", "AXP", "BA", "CAT", "CRM", "CSCO", "CVX", "DIS", "GS", "HD", "HON", "IBM", "INTC", "JNJ", "JPM",
    "KO", "MCD", "MMM", "MRK", "MSFT", "NKE", "PG", "TRV", "UNH", "V", "VZ", "WBA", "WMT",
];

/// `count` weekdays starting at `start` (or the next weekday).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 2).expect("valid date")
}

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("ASSET{i:02}")).collect()
}

/// Asset 0 compounds at `daily_drift`, every other asset stays at 100.
///
/// Holds exactly `k*m + horizon*k + 1` days, enough for `horizon` periods
/// after a full lookback window.
pub fn drift_table(n: usize, k: usize, m: usize, horizon: usize, daily_drift: f64) -> PriceTable {
    let days = k * m + horizon * k + 1;
    let closes = Array2::from_shape_fn((n, days), |(i, d)| {
        if i == 0 {
            100.0 * (1.0 + daily_drift).powi(d as i32)
        } else {
            100.0
        }
    });
    PriceTable::new(tickers(n), business_days(start_date(), days), closes).expect("well-formed synthetic table")
}

/// Independent geometric Brownian motions starting at 100.
pub fn gbm_table(n: usize, days: usize, mu: f64, sigma: f64, seed: u64) -> PriceTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut closes = Array2::zeros((n, days));
    for i in 0..n {
        let mut p = 100.0;
        for d in 0..days {
            if d > 0 {
                p *= (mu - 0.5 * sigma * sigma + sigma * noise.sample(&mut rng)).exp();
            }
            closes[[i, d]] = p;
        }
    }
    PriceTable::new(tickers(n), business_days(start_date(), days), closes).expect("well-formed synthetic table")
}

/// One-factor market: every asset loads on a common daily shock plus its own noise.
#[derive(Debug, Clone)]
pub struct MarketSpec {
    pub tickers: Vec<String>,
    pub start: NaiveDate,
    pub days: usize,
    pub market_drift: f64,
    pub market_vol: f64,
    pub idio_vol: f64,
    pub seed: u64,
}

impl MarketSpec {
    /// 29 large-cap names, 1008 weekday closes from 2019-01-02 (through 2022-11-11).
    pub fn djia_like(seed: u64) -> Self {
        Self {
            tickers: DJIA_TICKERS.iter().map(|s| s.to_string()).collect(),
            start: start_date(),
            days: 1008,
            market_drift: 0.0003,
            market_vol: 0.011,
            idio_vol: 0.014,
            seed,
        }
    }

    pub fn build(&self) -> PriceTable {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let n = self.tickers.len();
        let betas: Vec<f64> = (0..n).map(|i| 0.7 + 0.6 * (i as f64 + 0.5) / n as f64).collect();
        let alphas: Vec<f64> = (0..n).map(|_| 0.0002 * noise.sample(&mut rng)).collect();
        let mut closes = Array2::zeros((n, self.days));
        let mut log_p: Vec<f64> = (0..n).map(|_| (20.0 + 180.0 * (0.5 + 0.15 * noise.sample(&mut rng)).clamp(0.05, 1.0)).ln()).collect();
        for d in 0..self.days {
            if d > 0 {
                let market = self.market_drift + self.market_vol * noise.sample(&mut rng);
                for i in 0..n {
                    let r = alphas[i] + betas[i] * market + self.idio_vol * noise.sample(&mut rng);
                    log_p[i] += r.clamp(-0.4, 0.4);
                }
            }
            for i in 0..n {
                closes[[i, d]] = log_p[i].exp();
            }
        }
        PriceTable::new(self.tickers.clone(), business_days(self.start, self.days), closes)
            .expect("well-formed synthetic table")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn business_days_skip_weekends() {
        let d = business_days(NaiveDate::from_ymd_opt(2024, 1, 5).unwrap(), 3);
        assert_eq!(d.iter().map(|d| d.day()).collect::<Vec<_>>(), vec![5, 8, 9]);
    }

    #[test]
    fn drift_table_shape() {
        let t = drift_table(2, 5, 4, 3, 0.01);
        assert_eq!(t.num_days(), 36);
        assert_eq!(t.closes()[[1, 35]], 100.0);
        assert!((t.closes()[[0, 1]] - 101.0).abs() < 1e-12);
    }

    #[test]
    fn market_is_reproducible() {
        let mut spec = MarketSpec::djia_like(3);
        spec.days = 50;
        assert_eq!(spec.build().closes(), spec.build().closes());
        assert_eq!(spec.build().num_assets(), 29);
    }
}
