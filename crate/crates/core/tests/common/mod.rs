//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::io::Write;
use std::sync::{Arc, Mutex};

use factor_mcls::nn::Mlp;
use ndarray::Array2;

/// Simplex projection by bisection on the shift, independent of the sort-based routine.
pub fn project_bisect(v: &[f64]) -> Vec<f64> {
    let mass = |theta: f64| v.iter().map(|x| (x - theta).max(0.0)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `b - τ(x - x̄)` with `τ = max(0, b·x - ε) / |x - x̄|²`, projected.
pub fn pamr_oracle(b: &[f64], x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let xbar = x.iter().sum::<f64>() / n;
    let loss = (b.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - eps).max(0.0);
    let norm: f64 = x.iter().map(|v| (v - xbar).powi(2)).sum();
    let tau = loss / norm;
    project_bisect(&b.iter().zip(x).map(|(p, q)| p - tau * (q - xbar)).collect::<Vec<_>>())
}

/// `b + λ(x̃ - x̄̃)` with `λ = max(0, ε - b·x̃) / |x̃ - x̄̃|²`, projected.
pub fn reversion_oracle(b: &[f64], xt: &[f64], eps: f64) -> Vec<f64> {
    let n = xt.len() as f64;
    let m = xt.iter().sum::<f64>() / n;
    let norm: f64 = xt.iter().map(|v| (v - m).powi(2)).sum();
    let lam = ((eps - b.iter().zip(xt).map(|(p, q)| p * q).sum::<f64>()) / norm).max(0.0);
    project_bisect(&b.iter().zip(xt).map(|(p, q)| p + lam * (q - m)).collect::<Vec<_>>())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// AR, DR, Var, Std, LStd, SR, STR by straight loops.
pub fn flat_loop_metrics(r: &[f64], rf: f64, mac: f64) -> [Option<f64>; 7] {
    let n = r.len() as f64;
    let mut ar = 0.0;
    for v in r {
        ar += v;
    }
    let dr = ar / n;
    let mut var = 0.0;
    for v in r {
        var += (v - dr) * (v - dr);
    }
    var /= n;
    let std = var.sqrt();
    let mut down = 0.0;
    for v in r {
        if *v < mac {
            down += (v - mac) * (v - mac);
        }
    }
    let lstd = (down / n).sqrt();
    let sr = if std > 0.0 { Some((dr - rf) / std) } else { None };
    let st = if lstd > 0.0 { Some((dr - mac) / lstd) } else { None };
    [Some(ar), Some(dr), Some(var), Some(std), Some(lstd), sr, st]
}

pub fn close_opt(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0),
        (None, None) => true,
        _ => false,
    }
}

pub fn concat(states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    let (b, d) = states.dim();
    let n = actions.ncols();
    Array2::from_shape_fn((b, d + n), |(r, c)| if c < d { states[[r, c]] } else { actions[[r, c - d]] })
}

/// Central differences of `loss` with respect to every parameter of `net`.
pub fn finite_diff(net: &Mlp, mut loss: impl FnMut(&Mlp) -> f64) -> Vec<f64> {
    let base = net.params_flat();
    let h = 1e-6;
    let mut out = Vec::with_capacity(base.len());
    let mut probe = net.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params_flat(&p).unwrap();
        let up = loss(&probe);
        p[i] = base[i] - h;
        probe.set_params_flat(&p).unwrap();
        let down = loss(&probe);
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Largest relative gap between analytic and numeric gradients.
pub fn worst_relative_gap(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| (a - f).abs() / (a.abs().max(f.abs()) + 1e-5))
        .fold(0.0, f64::max)
}

pub fn grads_close(a: f64, f: f64) -> bool {
    (a - f).abs() <= 1e-4 * a.abs().max(f.abs()) + 1e-9
}

pub fn smooth_l1_mean(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let d = (p - t).abs();
        acc += if d < 1.0 { 0.5 * d * d } else { d - 0.5 };
    }
    acc / pred.len() as f64
}

/// Shared in-memory writer for transition logs.
#[derive(Clone, Default)]
pub struct Sink(pub Arc<Mutex<Vec<u8>>>);

impl Sink {
    pub fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
