//! Batched fully connected networks with exact reverse-mode gradients.
//!
//! Rows are samples. Every forward pass that will be differentiated returns a
//! [`Tape`]; the tape records the parameter version it was taken at so a
//! backward pass after an update is refused rather than silently mixing
//! parameters.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => x.mapv_inplace(f64::tanh),
        }
    }

    /// Multiplies `grad` by the derivative, given the pre-activation and activation.
    fn backprop(self, grad: &mut Array2<f64>, pre: &Array2<f64>, post: &Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(grad).and(pre).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad).and(post).for_each(|g, &y| *g *= 1.0 - y * y),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Checkpoint(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[inputs, outputs]`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
    hidden: Activation,
    output: Activation,
    version: u64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
    version: u64,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Parameter gradients laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            w: net.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            b: net.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.w.iter_mut().for_each(|w| *w *= s);
        self.b.iter_mut().for_each(|b| *b *= s);
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: f64 = self.w.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
            + self.b.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>()).sum::<f64>();
        sq.sqrt()
    }

    /// Rescales so the global norm does not exceed `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.l2_norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
    }
}

impl DenseNet {
    /// Layer widths `sizes[0] → … → sizes[n]`; weights and biases drawn from
    /// `U(−1/√fan_in, 1/√fan_in)`, with the last layer further multiplied by
    /// `final_scale`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        final_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let bound = 1.0 / (pair[0] as f64).sqrt() * if i + 1 == n { final_scale } else { 1.0 };
                let mut draw = || if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
                let w = Array2::from_shape_simple_fn((pair[0], pair[1]), &mut draw);
                let b = Array1::from_shape_simple_fn(pair[1], &mut draw);
                Dense { w, b }
            })
            .collect();
        Ok(Self { layers, hidden, output, version: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn activation(&self, i: usize) -> Activation {
        if i + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::InvalidArgument(format!("input has {} columns, network expects {}", x.ncols(), self.input_dim())));
        }
        Ok(())
    }

    /// Forward pass without recording intermediates.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.w) + &layer.b;
            self.activation(i).apply(&mut h);
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Tape> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w) + &layer.b;
            inputs.push(h);
            let mut a = z.clone();
            self.activation(i).apply(&mut a);
            pre.push(z);
            h = a;
        }
        Ok(Tape { inputs, pre, output: h, version: self.version })
    }

    /// Pulls `d_out = ∂L/∂output` back through the tape, returning parameter
    /// gradients and `∂L/∂input`.
    pub fn backward(&self, tape: &Tape, d_out: &Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if tape.version != self.version {
            return Err(Error::InvalidState(format!(
                "tape recorded at parameter version {} but network is at {}",
                tape.version, self.version
            )));
        }
        if d_out.dim() != tape.output.dim() {
            return Err(Error::InvalidArgument(format!("gradient shape {:?} != output shape {:?}", d_out.dim(), tape.output.dim())));
        }
        let n = self.layers.len();
        let mut gw = vec![Array2::zeros((0, 0)); n];
        let mut gb = vec![Array1::zeros(0); n];
        let mut grad = d_out.clone();
        for i in (0..n).rev() {
            let post = if i + 1 == n { &tape.output } else { &tape.inputs[i + 1] };
            self.activation(i).backprop(&mut grad, &tape.pre[i], post);
            gw[i] = tape.inputs[i].t().dot(&grad);
            gb[i] = grad.sum_axis(Axis(0));
            grad = grad.dot(&self.layers[i].w.t());
        }
        Ok((Gradients { w: gw, b: gb }, grad))
    }

    /// Polyak averaging `θ ← τ θ_source + (1 − τ) θ`.
    pub fn soft_update_from(&mut self, source: &DenseNet, tau: f64) -> Result<()> {
        if !self.same_architecture(source) {
            return Err(Error::InvalidArgument("soft update between different architectures".into()));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")));
        }
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut t.w).and(&s.w).for_each(|a, &b| *a = tau * b + (1.0 - tau) * *a);
            Zip::from(&mut t.b).and(&s.b).for_each(|a, &b| *a = tau * b + (1.0 - tau) * *a);
        }
        self.version += 1;
        Ok(())
    }

    /// Mutable parameter access; bumps the version so outstanding tapes become stale.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        writeln!(w, "net {} {} {}", self.layers.len(), self.hidden.name(), self.output.name()).map_err(io)?;
        for l in &self.layers {
            writeln!(w, "layer {} {}", l.w.nrows(), l.w.ncols()).map_err(io)?;
            write_values(w, l.w.iter()).map_err(io)?;
            write_values(w, l.b.iter()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(lines: &mut std::io::Lines<R>) -> Result<Self> {
        let header = next_line(lines)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "net" {
            return Err(Error::Checkpoint(format!("expected network header, found `{header}`")));
        }
        let n: usize = parse_num(parts[1])?;
        let hidden = Activation::parse(parts[2])?;
        let output = Activation::parse(parts[3])?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next_line(lines)?;
            let p: Vec<&str> = line.split_whitespace().collect();
            if p.len() != 3 || p[0] != "layer" {
                return Err(Error::Checkpoint(format!("expected layer header, found `{line}`")));
            }
            let (rows, cols): (usize, usize) = (parse_num(p[1])?, parse_num(p[2])?);
            let w = read_values(&next_line(lines)?, rows * cols)?;
            let b = read_values(&next_line(lines)?, cols)?;
            let w = Array2::from_shape_vec((rows, cols), w).map_err(|e| Error::Checkpoint(e.to_string()))?;
            layers.push(Dense { w, b: Array1::from(b) });
        }
        for pair in layers.windows(2) {
            if pair[0].w.ncols() != pair[1].w.nrows() {
                return Err(Error::Checkpoint("consecutive layer widths disagree".into()));
            }
        }
        Ok(Self { layers, hidden, output, version: 0 })
    }

    /// Whether `other` has identical layer shapes and activations.
    pub fn same_architecture(&self, other: &DenseNet) -> bool {
        self.hidden == other.hidden
            && self.output == other.output
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.w.dim() == b.w.dim())
    }
}

fn write_values<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        first = false;
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")
}

fn next_line<R: BufRead>(lines: &mut std::io::Lines<R>) -> Result<String> {
    match lines.next() {
        Some(Ok(l)) => Ok(l),
        Some(Err(e)) => Err(Error::Checkpoint(e.to_string())),
        None => Err(Error::Checkpoint("unexpected end of checkpoint".into())),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Checkpoint(format!("bad number `{s}`")))
}

fn read_values(line: &str, expected: usize) -> Result<Vec<f64>> {
    let v = line.split_whitespace().map(parse_num::<f64>).collect::<Result<Vec<_>>>()?;
    if v.len() != expected {
        return Err(Error::Checkpoint(format!("expected {expected} values, found {}", v.len())));
    }
    Ok(v)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Gradients::zeros_like(net), v: Gradients::zeros_like(net) }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Descends along `grads`; pass `ascend = true` to climb instead.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients, ascend: bool) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let sign = if ascend { 1.0 } else { -1.0 };
        let lr = self.lr;
        let eps = self.eps;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p += sign * lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        let layers = net.layers_mut();
        for (i, layer) in layers.iter_mut().enumerate() {
            Zip::from(&mut layer.w).and(&mut self.m.w[i]).and(&mut self.v.w[i]).and(&grads.w[i]).for_each(
                |p, m, v, &g| update(p, m, v, g),
            );
            Zip::from(&mut layer.b).and(&mut self.m.b[i]).and(&mut self.v.b[i]).and(&grads.b[i]).for_each(
                |p, m, v, &g| update(p, m, v, g),
            );
        }
    }
}
