//! Classical online portfolio selection strategies.
//!
//! Every strategy consumes one vector of daily price relatives at a time and
//! emits the long-only weights it holds over the next day. Strategies that
//! need more history than has been seen return the uniform portfolio; those
//! steps are counted in [`OlpsState::warmup_steps`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::{PeriodGrid, PriceTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StrategyKind {
    Ubah,
    Crp,
    M0,
    Bk,
    Up,
    Eg,
    Ons,
    Anticor,
    Pamr,
    Cwmr,
    Olmar,
    Rmr,
    Wmamr,
    Corn,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 14] = [
        StrategyKind::Ubah,
        StrategyKind::Crp,
        StrategyKind::M0,
        StrategyKind::Bk,
        StrategyKind::Up,
        StrategyKind::Eg,
        StrategyKind::Ons,
        StrategyKind::Anticor,
        StrategyKind::Pamr,
        StrategyKind::Cwmr,
        StrategyKind::Olmar,
        StrategyKind::Rmr,
        StrategyKind::Wmamr,
        StrategyKind::Corn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Ubah => "UBAH",
            StrategyKind::Crp => "CRP",
            StrategyKind::M0 => "M0",
            StrategyKind::Bk => "BK",
            StrategyKind::Up => "UP",
            StrategyKind::Eg => "EG",
            StrategyKind::Ons => "ONS",
            StrategyKind::Anticor => "ANTICOR",
            StrategyKind::Pamr => "PAMR",
            StrategyKind::Cwmr => "CWMR",
            StrategyKind::Olmar => "OLMAR",
            StrategyKind::Rmr => "RMR",
            StrategyKind::Wmamr => "WMAMR",
            StrategyKind::Corn => "CORN",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A strategy together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum Strategy {
    Ubah,
    Crp {
        /// Fixed portfolio; uniform when absent.
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    M0 {
        beta: f64,
    },
    Bk {
        max_window: usize,
        max_ell: usize,
        c: f64,
        solver_iters: usize,
    },
    Up {
        samples: usize,
        seed: u64,
    },
    Eg {
        eta: f64,
    },
    Ons {
        eta: f64,
        beta: f64,
        delta: f64,
        projection_iters: usize,
    },
    Anticor {
        window: usize,
    },
    Pamr {
        epsilon: f64,
    },
    Cwmr {
        phi: f64,
        epsilon: f64,
    },
    Olmar {
        window: usize,
        epsilon: f64,
    },
    Rmr {
        window: usize,
        epsilon: f64,
    },
    Wmamr {
        window: usize,
        epsilon: f64,
    },
    Corn {
        window: usize,
        rho: f64,
        solver_iters: usize,
    },
}

impl Strategy {
    pub fn default_for(kind: StrategyKind) -> Self {
        match kind {
            StrategyKind::Ubah => Strategy::Ubah,
            StrategyKind::Crp => Strategy::Crp { weights: None },
            StrategyKind::M0 => Strategy::M0 { beta: 0.5 },
            StrategyKind::Bk => Strategy::Bk {
                max_window: 5,
                max_ell: 10,
                c: 1.0,
                solver_iters: 10,
            },
            StrategyKind::Up => Strategy::Up {
                samples: 10_000,
                seed: 0x5eed,
            },
            StrategyKind::Eg => Strategy::Eg { eta: 0.05 },
            StrategyKind::Ons => Strategy::Ons {
                eta: 0.0,
                beta: 1.0,
                delta: 0.125,
                projection_iters: 200,
            },
            StrategyKind::Anticor => Strategy::Anticor { window: 30 },
            StrategyKind::Pamr => Strategy::Pamr { epsilon: 0.5 },
            StrategyKind::Cwmr => Strategy::Cwmr { phi: 2.0, epsilon: 0.5 },
            StrategyKind::Olmar => Strategy::Olmar {
                window: 5,
                epsilon: 10.0,
            },
            StrategyKind::Rmr => Strategy::Rmr {
                window: 5,
                epsilon: 10.0,
            },
            StrategyKind::Wmamr => Strategy::Wmamr {
                window: 5,
                epsilon: 0.5,
            },
            StrategyKind::Corn => Strategy::Corn {
                window: 5,
                rho: 0.1,
                solver_iters: 10,
            },
        }
    }

    pub fn all_defaults() -> Vec<Self> {
        StrategyKind::ALL.into_iter().map(Self::default_for).collect()
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Ubah => StrategyKind::Ubah,
            Strategy::Crp { .. } => StrategyKind::Crp,
            Strategy::M0 { .. } => StrategyKind::M0,
            Strategy::Bk { .. } => StrategyKind::Bk,
            Strategy::Up { .. } => StrategyKind::Up,
            Strategy::Eg { .. } => StrategyKind::Eg,
            Strategy::Ons { .. } => StrategyKind::Ons,
            Strategy::Anticor { .. } => StrategyKind::Anticor,
            Strategy::Pamr { .. } => StrategyKind::Pamr,
            Strategy::Cwmr { .. } => StrategyKind::Cwmr,
            Strategy::Olmar { .. } => StrategyKind::Olmar,
            Strategy::Rmr { .. } => StrategyKind::Rmr,
            Strategy::Wmamr { .. } => StrategyKind::Wmamr,
            Strategy::Corn { .. } => StrategyKind::Corn,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    /// Replaces the parameters named in `overrides` (a JSON object); unknown keys are errors.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        let (Some(base), Some(extra)) = (value.as_object_mut(), overrides.as_object()) else {
            return Err(Error::Config(format!("overrides for {} must be a table", self.name())));
        };
        for (k, v) in extra {
            if k == "name" {
                continue;
            }
            base.insert(k.clone(), v.clone());
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", self.name())))
    }

    fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.name())));
        match self {
            Strategy::Crp { weights: Some(w) } => {
                if w.len() != n {
                    return bad(format!("{} fixed weights for {n} assets", w.len()));
                }
                if w.iter().any(|v| *v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("fixed weights must lie on the simplex".into());
                }
            }
            Strategy::Bk { max_window, max_ell, c, .. } if *max_window == 0 || *max_ell == 0 || *c <= 0.0 => {
                return bad("window and ell grids must be non-empty and c positive".into())
            }
            Strategy::Up { samples, .. } if *samples == 0 => return bad("needs at least one sample".into()),
            Strategy::Ons { beta, delta, eta, .. } if *beta <= 0.0 || *delta <= 0.0 || !(0.0..=1.0).contains(eta) => {
                return bad("beta and delta must be positive, eta in [0, 1]".into())
            }
            Strategy::Anticor { window } if *window < 2 => return bad("window must be at least 2".into()),
            Strategy::Olmar { window, .. } | Strategy::Rmr { window, .. } | Strategy::Wmamr { window, .. } | Strategy::Corn { window, .. }
                if *window == 0 =>
            {
                return bad("window must be positive".into())
            }
            Strategy::Cwmr { phi, .. } if *phi <= 0.0 => return bad("phi must be positive".into()),
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Expert {
    weights: Vec<f64>,
    log_wealth: f64,
}

impl Expert {
    fn uniform(n: usize) -> Self {
        Self {
            weights: uniform(n),
            log_wealth: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Plain,
    M0 { counts: Vec<f64> },
    Up { portfolios: Vec<Vec<f64>>, log_wealth: Vec<f64> },
    Ons { a: DMatrix<f64>, b: DVector<f64>, p: Vec<f64> },
    Cwmr { mu: Vec<f64>, sigma: DMatrix<f64> },
    Rmr { prices: Vec<Vec<f64>> },
    Experts(Vec<Expert>),
}

/// Running state of one strategy.
#[derive(Debug, Clone)]
pub struct OlpsState {
    strategy: Strategy,
    n: usize,
    ratios: Vec<Vec<f64>>,
    weights: Vec<f64>,
    inner: Inner,
    warmup_steps: usize,
}

impl OlpsState {
    pub fn new(strategy: Strategy, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::dim("a strategy needs at least one asset"));
        }
        strategy.validate(n)?;
        let weights = match &strategy {
            Strategy::Crp { weights: Some(w) } => w.clone(),
            _ => uniform(n),
        };
        let inner = match &strategy {
            Strategy::M0 { .. } => Inner::M0 { counts: vec![0.0; n] },
            Strategy::Up { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let portfolios = (0..*samples)
                    .map(|_| {
                        let e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
                        let s: f64 = e.iter().sum();
                        e.into_iter().map(|v: f64| v / s).collect()
                    })
                    .collect();
                Inner::Up {
                    portfolios,
                    log_wealth: vec![0.0; *samples],
                }
            }
            Strategy::Ons { .. } => Inner::Ons {
                a: DMatrix::identity(n, n),
                b: DVector::zeros(n),
                p: uniform(n),
            },
            Strategy::Cwmr { .. } => Inner::Cwmr {
                mu: uniform(n),
                sigma: DMatrix::identity(n, n) / (n * n) as f64,
            },
            Strategy::Rmr { .. } => Inner::Rmr {
                prices: vec![vec![1.0; n]],
            },
            Strategy::Bk { max_window, max_ell, .. } => Inner::Experts(vec![Expert::uniform(n); max_window * max_ell]),
            Strategy::Anticor { window } => Inner::Experts(vec![Expert::uniform(n); window - 1]),
            Strategy::Corn { window, .. } => Inner::Experts(vec![Expert::uniform(n); *window]),
            _ => Inner::Plain,
        };
        Ok(Self {
            strategy,
            n,
            ratios: Vec::new(),
            weights,
            inner,
            warmup_steps: 0,
        })
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    /// Weights held over the next day.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of relatives observed so far.
    pub fn observed(&self) -> usize {
        self.ratios.len()
    }

    /// Steps at which the strategy lacked history and returned the uniform portfolio.
    pub fn warmup_steps(&self) -> usize {
        self.warmup_steps
    }
}

/// Feeds the realised relatives `x` of the day just held and returns the next weights.
pub fn olps_step(state: &mut OlpsState, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != state.n {
        return Err(Error::dim(format!("{} relatives for {} assets", x.len(), state.n)));
    }
    if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonFinite("price relatives must be positive and finite".into()));
    }
    let n = state.n;
    let prev = state.weights.clone();
    state.ratios.push(x.to_vec());
    let hist = &state.ratios;
    let t = hist.len();
    let mut warm = false;

    let next = match (&state.strategy, &mut state.inner) {
        (Strategy::Ubah, _) => {
            let wealth = dot(&prev, x);
            prev.iter().zip(x).map(|(b, r)| b * r / wealth).collect()
        }
        (Strategy::Crp { .. }, _) => prev,
        (Strategy::M0 { beta }, Inner::M0 { counts }) => {
            counts[argmax(x)] += 1.0;
            let total: f64 = counts.iter().sum();
            counts.iter().map(|c| (c + beta) / (total + n as f64 * beta)).collect()
        }
        (Strategy::Up { .. }, Inner::Up { portfolios, log_wealth }) => {
            for (p, lw) in portfolios.iter().zip(log_wealth.iter_mut()) {
                *lw += dot(p, x).ln();
            }
            mix(portfolios.iter().map(Vec::as_slice), log_wealth, n)
        }
        (Strategy::Eg { eta }, _) => {
            let wealth = dot(&prev, x);
            let raw: Vec<f64> = prev.iter().zip(x).map(|(b, r)| b * (eta * r / wealth).exp()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        }
        (
            Strategy::Ons {
                eta,
                beta,
                delta,
                projection_iters,
            },
            Inner::Ons { a, b, p },
        ) => {
            let wealth = dot(p, x);
            let grad = DVector::from_iterator(n, x.iter().map(|r| r / wealth));
            *a += &grad * grad.transpose();
            *b += &grad * (1.0 + 1.0 / beta);
            let target = match a.clone().cholesky() {
                Some(ch) => ch.solve(b) * *delta,
                None => return Err(Error::NonFinite("ONS matrix lost positive definiteness".into())),
            };
            *p = project_simplex_in_norm(a, target.as_slice(), p, *projection_iters);
            p.iter().map(|v| (1.0 - eta) * v + eta / n as f64).collect()
        }
        (Strategy::Anticor { .. }, Inner::Experts(experts)) => {
            for (idx, e) in experts.iter_mut().enumerate() {
                let w = idx + 2;
                e.log_wealth += dot(&e.weights, x).ln();
                e.weights = anticor_update(&e.weights, hist, w);
            }
            warm = t < 4;
            mix(experts.iter().map(|e| e.weights.as_slice()), &log_wealths(experts), n)
        }
        (Strategy::Pamr { epsilon }, _) => pamr_update(&prev, x, *epsilon),
        (Strategy::Cwmr { phi, epsilon }, Inner::Cwmr { mu, sigma }) => {
            cwmr_update(mu, sigma, x, *phi, *epsilon);
            mu.clone()
        }
        (Strategy::Olmar { window, epsilon }, _) => {
            if t < *window {
                warm = true;
                uniform(n)
            } else {
                let predicted = olmar_prediction(hist, *window);
                reversion_update(&prev, &predicted, *epsilon)
            }
        }
        (Strategy::Rmr { window, epsilon }, Inner::Rmr { prices }) => {
            let last = prices.last().expect("seeded with unit prices");
            let now: Vec<f64> = last.iter().zip(x).map(|(p, r)| p * r).collect();
            prices.push(now);
            if t < *window {
                warm = true;
                uniform(n)
            } else {
                let predicted = rmr_prediction(&prices[prices.len() - window..]);
                reversion_update(&prev, &predicted, *epsilon)
            }
        }
        (Strategy::Wmamr { window, epsilon }, _) => {
            if t < *window {
                warm = true;
                uniform(n)
            } else {
                let avg = mean_rows(&hist[t - window..]);
                pamr_update(&prev, &avg, *epsilon)
            }
        }
        (
            Strategy::Bk {
                max_window,
                max_ell,
                c,
                solver_iters,
            },
            Inner::Experts(experts),
        ) => {
            for e in experts.iter_mut() {
                e.log_wealth += dot(&e.weights, x).ln();
            }
            for k in 1..=*max_window {
                let distances = window_distances(hist, k);
                let mut last: Option<(Vec<usize>, Vec<f64>)> = None;
                for ell in 1..=*max_ell {
                    let radius = c / ell as f64;
                    let matches: Vec<usize> = distances.iter().filter(|(_, d)| *d <= radius).map(|(i, _)| *i).collect();
                    let e = &mut experts[(k - 1) * max_ell + (ell - 1)];
                    e.weights = match &last {
                        Some((m, w)) if *m == matches => w.clone(),
                        _ if matches.is_empty() => uniform(n),
                        _ => {
                            let samples: Vec<&[f64]> = matches.iter().map(|i| hist[*i].as_slice()).collect();
                            log_optimal(&samples, &e.weights, *solver_iters)
                        }
                    };
                    last = Some((matches, e.weights.clone()));
                }
            }
            warm = t < 2;
            mix(experts.iter().map(|e| e.weights.as_slice()), &log_wealths(experts), n)
        }
        (
            Strategy::Corn {
                rho, solver_iters, ..
            },
            Inner::Experts(experts),
        ) => {
            for (idx, e) in experts.iter_mut().enumerate() {
                let w = idx + 1;
                e.log_wealth += dot(&e.weights, x).ln();
                let matches = correlated_windows(hist, w, *rho);
                e.weights = if matches.is_empty() {
                    uniform(n)
                } else {
                    let samples: Vec<&[f64]> = matches.iter().map(|i| hist[*i].as_slice()).collect();
                    log_optimal(&samples, &e.weights, *solver_iters)
                };
            }
            warm = t < 2;
            mix(experts.iter().map(|e| e.weights.as_slice()), &log_wealths(experts), n)
        }
        _ => unreachable!("state built for a different strategy"),
    };

    let next = clean_simplex(next)?;
    if warm {
        state.warmup_steps += 1;
    }
    state.weights = next.clone();
    Ok(next)
}

/// Weight sequences of one strategy over a backtest window.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub name: String,
    /// `weights[j]` is held over day `first_decision_index + 1 + j`.
    pub weights: Vec<Vec<f64>>,
    pub warmup_steps: usize,
}

/// Runs `strategy` over every day of `grid`. The relatives before the window
/// are fed first so that windowed strategies start with history.
pub fn run_strategy(strategy: &Strategy, table: &PriceTable, grid: &PeriodGrid) -> Result<StrategyRun> {
    let ratios = table.daily_ratios();
    let mut state = OlpsState::new(strategy.clone(), table.num_assets())?;
    let start = grid.first_decision_index();
    let end = start + grid.num_periods() * grid.k();
    if end >= table.num_days() {
        return Err(Error::OutOfRange(format!("window ends at day {end}, table has {}", table.num_days())));
    }
    for day in 1..=start {
        olps_step(&mut state, &ratios[day - 1])?;
    }
    let mut weights = Vec::with_capacity(end - start);
    for day in start + 1..=end {
        weights.push(state.weights.clone());
        olps_step(&mut state, &ratios[day - 1])?;
    }
    Ok(StrategyRun {
        name: strategy.name().to_string(),
        weights,
        warmup_steps: state.warmup_steps,
    })
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows[0].len();
    let mut out = vec![0.0; n];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= rows.len() as f64);
    out
}

fn log_wealths(experts: &[Expert]) -> Vec<f64> {
    experts.iter().map(|e| e.log_wealth).collect()
}

/// Wealth-weighted average of portfolios.
fn mix<'a>(portfolios: impl Iterator<Item = &'a [f64]>, log_wealth: &[f64], n: usize) -> Vec<f64> {
    let top = log_wealth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; n];
    let mut total = 0.0;
    for (p, lw) in portfolios.zip(log_wealth) {
        let s = (lw - top).exp();
        total += s;
        for (o, v) in out.iter_mut().zip(p) {
            *o += s * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Checks the simplex invariant, then clamps rounding noise and renormalises.
fn clean_simplex(w: Vec<f64>) -> Result<Vec<f64>> {
    let sum: f64 = w.iter().sum();
    if w.iter().any(|v| !v.is_finite()) || (sum - 1.0).abs() > 1e-9 || w.iter().any(|v| *v < -1e-12) {
        return Err(Error::NonFinite(format!("strategy emitted a non-simplex vector (sum {sum})")));
    }
    let clamped: Vec<f64> = w.into_iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clamped.iter().sum();
    Ok(clamped.into_iter().map(|v| v / s).collect())
}

/// Passive-aggressive step away from a relative vector that would have paid more than `epsilon`.
fn pamr_update(b: &[f64], x: &[f64], epsilon: f64) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm2: f64 = dev.iter().map(|d| d * d).sum();
    let loss = (dot(b, x) - epsilon).max(0.0);
    let tau = if norm2 > 0.0 { loss / norm2 } else { 0.0 };
    project_simplex(&b.iter().zip(&dev).map(|(b, d)| b - tau * d).collect::<Vec<_>>())
}

/// Step toward a predicted relative vector until its expected return reaches `epsilon`.
fn reversion_update(b: &[f64], predicted: &[f64], epsilon: f64) -> Vec<f64> {
    let mean = predicted.iter().sum::<f64>() / predicted.len() as f64;
    let dev: Vec<f64> = predicted.iter().map(|v| v - mean).collect();
    let norm2: f64 = dev.iter().map(|d| d * d).sum();
    let lambda = if norm2 > 0.0 {
        ((epsilon - dot(b, predicted)) / norm2).max(0.0)
    } else {
        0.0
    };
    project_simplex(&b.iter().zip(&dev).map(|(b, d)| b + lambda * d).collect::<Vec<_>>())
}

/// Moving-average prediction: mean of `p_{t-i} / p_t` for `i = 0..window`.
fn olmar_prediction(hist: &[Vec<f64>], window: usize) -> Vec<f64> {
    let n = hist[0].len();
    let t = hist.len();
    let mut out = vec![1.0; n];
    let mut inv = vec![1.0; n];
    for i in 1..window {
        for (j, v) in inv.iter_mut().enumerate() {
            *v /= hist[t - i][j];
        }
        for (o, v) in out.iter_mut().zip(&inv) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= window as f64);
    out
}

/// L1 median of the window prices divided by the latest price.
fn rmr_prediction(prices: &[Vec<f64>]) -> Vec<f64> {
    let last = prices.last().expect("non-empty window");
    let median = l1_median(prices, 200, 1e-9);
    median.iter().zip(last).map(|(m, p)| m / p).collect()
}

/// Weiszfeld iterations for the geometric median, started at the coordinate mean.
pub fn l1_median(points: &[Vec<f64>], max_iter: usize, tol: f64) -> Vec<f64> {
    let mut y = mean_rows(points);
    for _ in 0..max_iter {
        let mut num = vec![0.0; y.len()];
        let mut den = 0.0;
        for p in points {
            let d = p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d < 1e-12 {
                continue;
            }
            for (acc, v) in num.iter_mut().zip(p) {
                *acc += v / d;
            }
            den += 1.0 / d;
        }
        if den == 0.0 {
            break;
        }
        let next: Vec<f64> = num.iter().map(|v| v / den).collect();
        let moved: f64 = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
        let scale: f64 = y.iter().map(|v| v.abs()).sum();
        y = next;
        if moved <= tol * scale.max(1.0) {
            break;
        }
    }
    y
}

/// Confidence-weighted mean reversion with the variance constraint.
fn cwmr_update(mu: &mut Vec<f64>, sigma: &mut DMatrix<f64>, x: &[f64], phi: f64, epsilon: f64) {
    let n = x.len();
    let xv = DVector::from_column_slice(x);
    let ones = DVector::from_element(n, 1.0);
    let sx = &*sigma * &xv;
    let m = dot(mu, x);
    let v = xv.dot(&sx);
    let w = ones.dot(&sx);
    let x_bar = w / ones.dot(&(&*sigma * &ones));
    let a = 2.0 * phi * v * (v - x_bar * w);
    let b = v - x_bar * w + 2.0 * phi * v * (epsilon - m);
    let c = epsilon - m - phi * v;
    let lambda = if a.abs() > 1e-15 {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            0.0
        } else {
            let s = disc.sqrt();
            ((-b + s) / (2.0 * a)).max((-b - s) / (2.0 * a)).max(0.0)
        }
    } else if b.abs() > 1e-15 {
        (-c / b).max(0.0)
    } else {
        0.0
    };
    if lambda > 0.0 {
        let shift = &*sigma * (&xv - &ones * x_bar);
        let moved: Vec<f64> = mu.iter().zip(shift.iter()).map(|(m, s)| m - lambda * s).collect();
        let k = 2.0 * lambda * phi;
        *sigma -= (&sx * sx.transpose()) * (k / (1.0 + k * v));
        *mu = project_simplex(&moved);
    }
    let trace = sigma.trace();
    if trace > 0.0 {
        *sigma /= n as f64 * trace;
    }
}

/// One Borodin anti-correlation transfer step for lookback `w`.
fn anticor_update(prev: &[f64], hist: &[Vec<f64>], w: usize) -> Vec<f64> {
    let n = prev.len();
    let t = hist.len();
    let x = &hist[t - 1];
    let wealth = dot(prev, x);
    let drifted: Vec<f64> = prev.iter().zip(x).map(|(b, r)| b * r / wealth).collect();
    if t < 2 * w {
        return drifted;
    }
    let log_window = |from: usize| -> Vec<Vec<f64>> { hist[from..from + w].iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect() };
    let lx1 = log_window(t - 2 * w);
    let lx2 = log_window(t - w);
    let mu1 = mean_rows(&lx1);
    let mu2 = mean_rows(&lx2);
    let std = |lx: &[Vec<f64>], mu: &[f64], j: usize| -> f64 {
        (lx.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / (w - 1) as f64).sqrt()
    };
    let sd1: Vec<f64> = (0..n).map(|j| std(&lx1, &mu1, j)).collect();
    let sd2: Vec<f64> = (0..n).map(|j| std(&lx2, &mu2, j)).collect();
    let mut cor = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if sd1[i] > 0.0 && sd2[j] > 0.0 {
                let cov: f64 = (0..w).map(|k| (lx1[k][i] - mu1[i]) * (lx2[k][j] - mu2[j])).sum::<f64>() / (w - 1) as f64;
                cor[i][j] = cov / (sd1[i] * sd2[j]);
            }
        }
    }
    let mut claim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && mu2[i] > mu2[j] && cor[i][j] > 0.0 {
                claim[i][j] = cor[i][j] + (-cor[i][i]).max(0.0) + (-cor[j][j]).max(0.0);
            }
        }
    }
    let mut next = drifted.clone();
    for i in 0..n {
        let total: f64 = claim[i].iter().sum();
        if total <= 0.0 {
            continue;
        }
        for j in 0..n {
            let transfer = drifted[i] * claim[i][j] / total;
            next[i] -= transfer;
            next[j] += transfer;
        }
    }
    next
}

/// `(i, ||window before day i - latest window||)` for every past day `i` whose
/// preceding `k` relatives exist.
fn window_distances(hist: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let t = hist.len();
    if t < k + 1 {
        return Vec::new();
    }
    let latest = &hist[t - k..];
    (k..t)
        .map(|i| {
            let d2: f64 = hist[i - k..i]
                .iter()
                .zip(latest)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>())
                .sum();
            (i, d2.sqrt())
        })
        .collect()
}

/// Days `i` whose preceding `w` relatives correlate with the latest `w` at least `rho`.
fn correlated_windows(hist: &[Vec<f64>], w: usize, rho: f64) -> Vec<usize> {
    let t = hist.len();
    if t < w + 1 {
        return Vec::new();
    }
    let flat = |rows: &[Vec<f64>]| -> Vec<f64> { rows.iter().flatten().copied().collect() };
    let latest = flat(&hist[t - w..]);
    let centered = |v: &[f64]| -> (Vec<f64>, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let c: Vec<f64> = v.iter().map(|x| x - m).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        (c, norm)
    };
    let (lc, ln) = centered(&latest);
    if ln == 0.0 {
        return Vec::new();
    }
    (w..t)
        .filter(|i| {
            let (c, norm) = centered(&flat(&hist[i - w..*i]));
            norm > 0.0 && dot(&c, &lc) / (norm * ln) >= rho
        })
        .collect()
}

/// Approximate `argmax_b sum log(b . x)` over the simplex by multiplicative
/// fixed-point iterations started at `start`.
pub fn log_optimal(samples: &[&[f64]], start: &[f64], iters: usize) -> Vec<f64> {
    let n = start.len();
    let mut b: Vec<f64> = if start.iter().all(|v| *v > 0.0) {
        start.to_vec()
    } else {
        start.iter().map(|v| 0.5 * v + 0.5 / n as f64).collect()
    };
    for _ in 0..iters {
        let mut next = vec![0.0; n];
        for x in samples {
            let r = dot(&b, x);
            for (o, v) in next.iter_mut().zip(x.iter()) {
                *o += v / r;
            }
        }
        for (bi, g) in b.iter_mut().zip(&next) {
            *bi *= g / samples.len() as f64;
        }
        let s: f64 = b.iter().sum();
        b.iter_mut().for_each(|v| *v /= s);
    }
    b
}

/// Projection of `y` onto the simplex in the norm induced by `a`, by
/// accelerated projected gradient from `start`.
fn project_simplex_in_norm(a: &DMatrix<f64>, y: &[f64], start: &[f64], iters: usize) -> Vec<f64> {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    // power iteration for the step size
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lmax = 1.0;
    for _ in 0..30 {
        let av = a * &v;
        lmax = av.norm();
        if lmax == 0.0 {
            break;
        }
        v = av / lmax;
    }
    let step = 1.0 / (1.05 * lmax.max(1e-12));
    let mut p = DVector::from_column_slice(start);
    let mut z = p.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = a * (&z - &yv);
        let cand = z - grad * step;
        let next = DVector::from_vec(project_simplex(cand.as_slice()));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &p) * ((t - 1.0) / t_next);
        p = next;
        t = t_next;
    }
    p.as_slice().to_vec()
}
