//! Small dense networks with hand-written reverse mode.
//!
//! Batches are row-major `batch x features` matrices. A [`Tape`] keeps the
//! per-layer inputs and pre-activations of one forward pass so that
//! [`Mlp::backward`] can return exact parameter gradients plus the cotangent
//! of the input (needed to chain the actor through the critics).

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMap {
    Linear,
    /// `tanh`, bounded to (-1, 1).
    Bounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
    output: OutputMap,
}

/// Activations cached by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Per-layer `(dW, db)`, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.raw_dim())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            *w *= factor;
            *b *= factor;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: OutputMap, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output size");
        let layers = sizes
            .windows(2)
            .map(|io| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_fn((io[1], io[0]), |_| rng.random_range(-bound..bound)),
                    bias: Array1::from_shape_fn(io[1], |_| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Self { layers, hidden, output }
    }

    pub fn from_layers(layers: Vec<Dense>, hidden: Activation, output: OutputMap) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::dim("bias length differs from layer width"));
            }
        }
        Ok(Self { layers, hidden, output })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn output_map(&self) -> OutputMap {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Tape> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (idx, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weight.t()) + &layer.bias;
            let next = if idx == last {
                match self.output {
                    OutputMap::Linear => z.clone(),
                    OutputMap::Bounded => z.mapv(f64::tanh),
                }
            } else {
                match self.hidden {
                    Activation::Relu => z.mapv(|v| v.max(0.0)),
                    Activation::Tanh => z.mapv(f64::tanh),
                }
            };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(Tape {
            inputs,
            pre,
            output: a,
        })
    }

    /// Output for a single input vector.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::dim(e.to_string()))?;
        Ok(self.forward(view)?.output.row(0).to_vec())
    }

    /// Gradients of `sum(dy * y)` with respect to the parameters and the input.
    pub fn backward(&self, tape: &Tape, dy: ArrayView2<'_, f64>) -> Result<(Grads, Array2<f64>)> {
        if tape.inputs.len() != self.layers.len() || dy.dim() != tape.output.dim() {
            return Err(Error::dim("tape or output cotangent does not match this network"));
        }
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dy.to_owned();
        for idx in (0..self.layers.len()).rev() {
            let z = &tape.pre[idx];
            if idx == last {
                if self.output == OutputMap::Bounded {
                    Zip::from(&mut delta).and(&tape.output).for_each(|d, y| *d *= 1.0 - y * y);
                }
            } else {
                match self.hidden {
                    Activation::Relu => Zip::from(&mut delta).and(z).for_each(|d, z| {
                        if *z <= 0.0 {
                            *d = 0.0
                        }
                    }),
                    Activation::Tanh => Zip::from(&mut delta).and(&tape.inputs[idx + 1]).for_each(|d, a| *d *= 1.0 - a * a),
                }
            }
            let layer = &self.layers[idx];
            let dw = delta.t().dot(&tape.inputs[idx]);
            let db = delta.sum_axis(Axis(0));
            let dx = delta.dot(&layer.weight);
            grads.push((dw, db));
            delta = dx;
        }
        grads.reverse();
        Ok((Grads { layers: grads }, delta))
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::dim(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.num_params()
            )));
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().expect("length checked"));
        }
        Ok(())
    }

    fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(MLP_MAGIC)?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&[activation_tag(self.hidden), output_tag(self.output)])?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            out.write_all(&(l.out_dim() as u32).to_le_bytes())?;
            out.write_all(&(l.in_dim() as u32).to_le_bytes())?;
            write_f64s(out, l.weight.iter())?;
            write_f64s(out, l.bias.iter())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(src: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        src.read_exact(&mut magic)?;
        if &magic != MLP_MAGIC {
            return Err(Error::Checkpoint("not an MLP block".into()));
        }
        let version = read_u32(src)?;
        if version != 1 {
            return Err(Error::Checkpoint(format!("unsupported MLP block version {version}")));
        }
        let mut tags = [0u8; 2];
        src.read_exact(&mut tags)?;
        let hidden = match tags[0] {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
        };
        let output = match tags[1] {
            0 => OutputMap::Linear,
            1 => OutputMap::Bounded,
            t => return Err(Error::Checkpoint(format!("unknown output tag {t}"))),
        };
        let count = read_u32(src)? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let out_dim = read_u32(src)? as usize;
            let in_dim = read_u32(src)? as usize;
            let weight = Array2::from_shape_vec((out_dim, in_dim), read_f64s(src, out_dim * in_dim)?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let bias = Array1::from_vec(read_f64s(src, out_dim)?);
            layers.push(Dense { weight, bias });
        }
        Self::from_layers(layers, hidden, output)
    }
}

const MLP_MAGIC: &[u8; 4] = b"MLP\x01";
const ADAM_MAGIC: &[u8; 4] = b"ADM\x01";

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    }
}

fn output_tag(o: OutputMap) -> u8 {
    match o {
        OutputMap::Linear => 0,
        OutputMap::Bounded => 1,
    }
}

fn write_f64s<'a, W: Write>(out: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(src: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    src.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s<R: Read>(src: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..count)
        .map(|_| {
            src.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

/// Mean SmoothL1 loss and its gradient with respect to `pred`.
pub fn smooth_l1(pred: &[f64], target: &[f64], beta: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::dim(format!(
            "prediction has {} entries, target {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let scale = 1.0 / pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            if d.abs() < beta {
                loss += 0.5 * d * d / beta;
                d / beta * scale
            } else {
                loss += d.abs() - 0.5 * beta;
                d.signum() * scale
            }
        })
        .collect();
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Grads,
    second: Grads,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Grads::zeros_like(net),
            second: Grads::zeros_like(net),
        }
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(ADAM_MAGIC)?;
        write_f64s(out, [self.lr, self.beta1, self.beta2, self.eps].iter())?;
        out.write_all(&self.step.to_le_bytes())?;
        out.write_all(&(self.first.layers.len() as u32).to_le_bytes())?;
        for moments in [&self.first, &self.second] {
            for (w, b) in &moments.layers {
                out.write_all(&(w.nrows() as u32).to_le_bytes())?;
                out.write_all(&(w.ncols() as u32).to_le_bytes())?;
                write_f64s(out, w.iter())?;
                write_f64s(out, b.iter())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(src: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        src.read_exact(&mut magic)?;
        if &magic != ADAM_MAGIC {
            return Err(Error::Checkpoint("not an optimizer block".into()));
        }
        let h = read_f64s(src, 4)?;
        let mut step = [0u8; 8];
        src.read_exact(&mut step)?;
        let count = read_u32(src)? as usize;
        let read_moments = |src: &mut R| -> Result<Grads> {
            let mut layers = Vec::with_capacity(count);
            for _ in 0..count {
                let rows = read_u32(src)? as usize;
                let cols = read_u32(src)? as usize;
                let w = Array2::from_shape_vec((rows, cols), read_f64s(src, rows * cols)?)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                let b = Array1::from_vec(read_f64s(src, rows)?);
                layers.push((w, b));
            }
            Ok(Grads { layers })
        };
        let first = read_moments(src)?;
        let second = read_moments(src)?;
        Ok(Self {
            lr: h[0],
            beta1: h[1],
            beta2: h[2],
            eps: h[3],
            step: u64::from_le_bytes(step),
            first,
            second,
        })
    }
}

/// One bias-corrected adaptive-moment descent step.
pub fn adam_step(net: &mut Mlp, grads: &Grads, opt: &mut AdamState) {
    opt.step += 1;
    let t = opt.step as i32;
    let (b1, b2) = (opt.beta1, opt.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (opt.lr, opt.eps);
    for (idx, layer) in net.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[idx];
        let (mw, mb) = &mut opt.first.layers[idx];
        let (vw, vb) = &mut opt.second.layers[idx];
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        Zip::from(&mut layer.weight).and(gw).and(mw).and(vw).for_each(update);
        Zip::from(&mut layer.bias).and(gb).and(mb).and(vb).for_each(update);
    }
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::dim("soft update between differently shaped networks"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("tau {tau} must lie in (0, 1]")));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weight).and(&o.weight).for_each(|t, o| *t = tau * o + (1.0 - tau) * *t);
        Zip::from(&mut t.bias).and(&o.bias).for_each(|t, o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::new(&[3, 4, 2], Activation::Relu, OutputMap::Linear, &mut rng());
        let zeros = vec![0.0; net.num_params()];
        net.set_params_flat(&zeros).unwrap();
        assert_eq!(net.forward_one(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let layer = Dense {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let net = Mlp::from_layers(vec![layer], Activation::Relu, OutputMap::Linear).unwrap();
        assert_eq!(net.forward_one(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn forward_matches_matvec_loop() {
        let net = Mlp::new(&[4, 5, 3], Activation::Tanh, OutputMap::Bounded, &mut rng());
        let x = [0.3, -1.2, 0.8, 2.0];
        let mut a = x.to_vec();
        for (idx, l) in net.layers().iter().enumerate() {
            let mut z = vec![0.0; l.out_dim()];
            for o in 0..l.out_dim() {
                z[o] = l.bias[o];
                for i in 0..l.in_dim() {
                    z[o] += l.weight[[o, i]] * a[i];
                }
            }
            a = z.into_iter().map(f64::tanh).collect();
            let _ = idx;
        }
        let y = net.forward_one(&x).unwrap();
        for (p, q) in y.iter().zip(&a) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let net = Mlp::new(&[3, 2], Activation::Relu, OutputMap::Linear, &mut rng());
        assert!(net.forward_one(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let net = Mlp::new(&[3, 4, 2], Activation::Relu, OutputMap::Bounded, &mut rng());
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        let tape = net.forward(x.view()).unwrap();
        let (g, dx) = net.backward(&tape, Array2::zeros((2, 2)).view()).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    fn quad_loss(net: &Mlp, x: &Array2<f64>) -> f64 {
        let y = net.forward(x.view()).unwrap().output;
        0.5 * y.iter().map(|v| v * v).sum::<f64>()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        diff / scale.max(1e-12)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (hidden, output) in [
            (Activation::Tanh, OutputMap::Linear),
            (Activation::Tanh, OutputMap::Bounded),
            (Activation::Relu, OutputMap::Bounded),
        ] {
            let mut net = Mlp::new(&[3, 6, 5, 2], hidden, output, &mut rng());
            let x = array![[0.4, -0.7, 1.1], [-0.2, 0.9, 0.3], [1.5, 0.1, -0.6]];
            let tape = net.forward(x.view()).unwrap();
            let (g, dx) = net.backward(&tape, tape.output().view()).unwrap();

            let base = net.params_flat();
            let h = 1e-5;
            let mut fd = Vec::with_capacity(base.len());
            for i in 0..base.len() {
                let mut p = base.clone();
                p[i] += h;
                net.set_params_flat(&p).unwrap();
                let up = quad_loss(&net, &x);
                p[i] -= 2.0 * h;
                net.set_params_flat(&p).unwrap();
                let down = quad_loss(&net, &x);
                fd.push((up - down) / (2.0 * h));
            }
            net.set_params_flat(&base).unwrap();
            assert!(rel_err(&g.flatten(), &fd) <= 1e-5, "{hidden:?}/{output:?}");

            let mut fd_x = Vec::new();
            for idx in 0..x.len() {
                let mut xp = x.clone();
                xp.as_slice_mut().unwrap()[idx] += h;
                let up = quad_loss(&net, &xp);
                xp.as_slice_mut().unwrap()[idx] -= 2.0 * h;
                let down = quad_loss(&net, &xp);
                fd_x.push((up - down) / (2.0 * h));
            }
            assert!(rel_err(dx.as_slice().unwrap(), &fd_x) <= 1e-5);
        }
    }

    #[test]
    fn smooth_l1_cases() {
        let (l, g) = smooth_l1(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let (l, g) = smooth_l1(&[2.0], &[0.0], 1.0).unwrap();
        assert_eq!(l, 1.5);
        assert_eq!(g, vec![1.0]);
        let (l, g) = smooth_l1(&[-0.5], &[0.0], 1.0).unwrap();
        assert_eq!(l, 0.125);
        assert_eq!(g, vec![-0.5]);
        assert!(smooth_l1(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn smooth_l1_gradient_matches_finite_differences() {
        let pred = [0.3, -2.2, 0.95, 4.0, -0.1];
        let target = [0.0, 0.5, 0.2, 1.0, 0.4];
        let (_, g) = smooth_l1(&pred, &target, 1.0).unwrap();
        let h = 1e-6;
        for i in 0..pred.len() {
            let mut p = pred;
            p[i] += h;
            let up = smooth_l1(&p, &target, 1.0).unwrap().0;
            p[i] -= 2.0 * h;
            let down = smooth_l1(&p, &target, 1.0).unwrap().0;
            assert!(((up - down) / (2.0 * h) - g[i]).abs() <= 1e-6);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut net = Mlp::new(&[2, 3, 1], Activation::Relu, OutputMap::Linear, &mut rng());
        let before = net.clone();
        let mut opt = AdamState::new(&net, 1e-2);
        adam_step(&mut net, &Grads::zeros_like(&before), &mut opt);
        assert_eq!(net, before);
    }

    #[test]
    fn adam_moves_against_constant_gradient() {
        let mut net = Mlp::new(&[1, 1], Activation::Relu, OutputMap::Linear, &mut rng());
        let start = net.params_flat();
        let mut opt = AdamState::new(&net, 1e-3);
        let mut g = Grads::zeros_like(&net);
        g.layers[0].0[[0, 0]] = 0.7;
        g.layers[0].1[0] = -0.3;
        for _ in 0..50 {
            adam_step(&mut net, &g, &mut opt);
        }
        let end = net.params_flat();
        assert!(end[0] < start[0]);
        assert!(end[1] > start[1]);
    }

    #[test]
    fn adam_scalar_trajectory() {
        let mut net = Mlp::new(&[1, 1], Activation::Relu, OutputMap::Linear, &mut rng());
        let mut opt = AdamState::new(&net, 0.05);
        let gradients = [0.5, -1.0, 2.0, 0.25, 0.0, -0.75];
        let (mut p, mut m, mut v) = (net.params_flat()[0], 0.0f64, 0.0f64);
        for (t, gv) in gradients.iter().enumerate() {
            let mut g = Grads::zeros_like(&net);
            g.layers[0].0[[0, 0]] = *gv;
            adam_step(&mut net, &g, &mut opt);
            m = 0.9 * m + 0.1 * gv;
            v = 0.999 * v + 0.001 * gv * gv;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            p -= 0.05 * mh / (vh.sqrt() + 1e-8);
            assert!((net.params_flat()[0] - p).abs() <= 1e-12);
        }
    }

    #[test]
    fn soft_update_cases() {
        let mut r = rng();
        let online = Mlp::new(&[2, 3, 1], Activation::Relu, OutputMap::Linear, &mut r);
        let mut target = Mlp::new(&[2, 3, 1], Activation::Relu, OutputMap::Linear, &mut r);
        let mut t1 = target.clone();
        soft_update(&mut t1, &online, 1.0).unwrap();
        assert_eq!(t1, online);

        let mut zero = online.clone();
        zero.set_params_flat(&vec![0.0; online.num_params()]).unwrap();
        let mut two = online.clone();
        two.set_params_flat(&vec![2.0; online.num_params()]).unwrap();
        soft_update(&mut zero, &two, 0.5).unwrap();
        assert!(zero.params_flat().iter().all(|v| *v == 1.0));

        let gap0: Vec<f64> = online.params_flat().iter().zip(target.params_flat()).map(|(o, t)| o - t).collect();
        let tau = 0.1;
        for _ in 0..20 {
            soft_update(&mut target, &online, tau).unwrap();
        }
        let factor = (1.0 - tau as f64).powi(20);
        for ((o, t), g) in online.params_flat().iter().zip(target.params_flat()).zip(gap0) {
            assert!(((o - t) - factor * g).abs() < 1e-12);
        }
        let other = Mlp::new(&[2, 4, 1], Activation::Relu, OutputMap::Linear, &mut r);
        assert!(soft_update(&mut target, &other, 0.5).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = Mlp::new(&[3, 7, 2], Activation::Tanh, OutputMap::Bounded, &mut rng());
        let mut opt = AdamState::new(&net, 3e-4);
        let mut n2 = net.clone();
        let mut g = Grads::zeros_like(&net);
        g.layers[1].0.fill(0.1);
        adam_step(&mut n2, &g, &mut opt);

        let mut buf = Vec::new();
        n2.write_to(&mut buf).unwrap();
        opt.write_to(&mut buf).unwrap();
        let mut cur = buf.as_slice();
        let back = Mlp::read_from(&mut cur).unwrap();
        let opt_back = AdamState::read_from(&mut cur).unwrap();
        assert!(cur.is_empty());
        assert_eq!(
            back.params_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            n2.params_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back, n2);
        assert_eq!(opt_back, opt);
    }

    #[test]
    fn forward_is_repeatable() {
        let net = Mlp::new(&[3, 8, 2], Activation::Relu, OutputMap::Bounded, &mut rng());
        let a = net.forward_one(&[0.1, 0.2, 0.3]).unwrap();
        let b = net.forward_one(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
