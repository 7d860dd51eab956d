//! Fully connected networks evaluated on the AD tape.

use std::f64::consts::PI;

use crate::numkit::{DenseMatrix, Gradients, RngStream, Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Tanh,
    Sine,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sine => "sine",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sine" | "sin" => Some(Activation::Sine),
            "identity" | "linear" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Layer widths `[in, hidden…, out]`, hidden activation, identity output.
///
/// The first hidden layer may use its own activation. With `Sine` its
/// weights are drawn from U(−ω₀, ω₀) and biases from U(−π, π), which lets a
/// small network represent many oscillation periods over a normalized input.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub first_activation: Activation,
    pub first_omega: f64,
}

impl MlpSpec {
    pub fn new(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::InvalidParam(format!("need at least one hidden layer, got widths {widths:?}")));
        }
        if widths.iter().any(|w| *w == 0) {
            return Err(Error::InvalidParam(format!("layer widths must be positive: {widths:?}")));
        }
        Ok(Self { widths: widths.to_vec(), activation, first_activation: activation, first_omega: 1.0 })
    }

    /// `depth` hidden layers of `width` units.
    pub fn uniform(input: usize, width: usize, depth: usize, output: usize, activation: Activation) -> Result<Self> {
        let mut w = vec![input];
        w.extend(std::iter::repeat_n(width, depth));
        w.push(output);
        Self::new(&w, activation)
    }

    pub fn with_sine_first(mut self, omega0: f64) -> Self {
        self.first_activation = Activation::Sine;
        self.first_omega = omega0;
        self
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// (out, in) of layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l + 1], self.widths[l])
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        (0..self.n_layers()).map(|l| {
            let (o, i) = self.layer_shape(l);
            o * i + o
        }).sum()
    }

    pub fn activation_of(&self, l: usize) -> Activation {
        if l + 1 == self.n_layers() {
            Activation::Identity
        } else if l == 0 {
            self.first_activation
        } else {
            self.activation
        }
    }

    /// Offsets of (weight, bias) blocks of layer `l` in the flat vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for j in 0..l {
            let (o, i) = self.layer_shape(j);
            off += o * i + o;
        }
        let (o, i) = self.layer_shape(l);
        (off, off + o * i)
    }

    /// Names as used in checkpoints: `layer{l}.weight`, `layer{l}.bias`.
    pub fn tensor_names(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for l in 0..self.n_layers() {
            let (o, i) = self.layer_shape(l);
            out.push((format!("layer{l}.weight"), o, i));
            out.push((format!("layer{l}.bias"), 1, o));
        }
        out
    }

    /// Weights: sine first layer U(−ω₀, ω₀) with U(−π, π) biases; other
    /// layers Xavier-normal with zero biases.
    pub fn init(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_params());
        for l in 0..self.n_layers() {
            let (o, i) = self.layer_shape(l);
            if l == 0 && self.first_activation == Activation::Sine && self.n_layers() > 1 {
                let w0 = self.first_omega;
                theta.extend((0..o * i).map(|_| rng.uniform_in(-w0, w0)));
                theta.extend((0..o).map(|_| rng.uniform_in(-PI, PI)));
            } else {
                let sd = (2.0 / (i + o) as f64).sqrt();
                theta.extend((0..o * i).map(|_| sd * rng.normal()));
                theta.extend(std::iter::repeat_n(0.0, o));
            }
        }
        theta
    }
}

/// Tape handles for every layer's (weight, bias).
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

fn push_params(tape: &mut Tape, spec: &MlpSpec, theta: &[f64], leaf: bool) -> MlpVars {
    assert_eq!(theta.len(), spec.n_params(), "parameter vector length");
    let mut layers = Vec::with_capacity(spec.n_layers());
    for l in 0..spec.n_layers() {
        let (o, i) = spec.layer_shape(l);
        let (wo, bo) = spec.layer_offsets(l);
        let w = DenseMatrix::from_vec(o, i, theta[wo..wo + o * i].to_vec());
        let b = DenseMatrix::from_vec(1, o, theta[bo..bo + o].to_vec());
        let (wv, bv) = if leaf { (tape.leaf(w), tape.leaf(b)) } else { (tape.constant(w), tape.constant(b)) };
        layers.push((wv, bv));
    }
    MlpVars { layers }
}

impl MlpVars {
    /// Parameters as differentiable leaves.
    pub fn leaves(tape: &mut Tape, spec: &MlpSpec, theta: &[f64]) -> Self {
        push_params(tape, spec, theta, true)
    }

    /// Parameters as constants (evaluation only).
    pub fn constants(tape: &mut Tape, spec: &MlpSpec, theta: &[f64]) -> Self {
        push_params(tape, spec, theta, false)
    }

    /// Flat gradient in the same layout as the parameter vector.
    pub fn flat_grad(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            grads.extend_flat(*w, &mut out);
            grads.extend_flat(*b, &mut out);
        }
        out
    }
}

fn activate(tape: &mut Tape, act: Activation, a: Var) -> Var {
    match act {
        Activation::Tanh => tape.tanh(a),
        Activation::Sine => tape.sin(a),
        Activation::Identity => a,
    }
}

/// N(x) for a batch `x` of shape n×in.
pub fn mlp_forward(tape: &mut Tape, spec: &MlpSpec, vars: &MlpVars, x: Var) -> Var {
    let mut h = x;
    for (l, (w, b)) in vars.layers.iter().enumerate() {
        let a = tape.affine(h, *w, Some(*b));
        h = activate(tape, spec.activation_of(l), a);
    }
    h
}

/// N(x) together with the directional derivative J_N(x)·dx, both built from
/// tape operations so they can be differentiated again.
pub fn mlp_forward_tangent(tape: &mut Tape, spec: &MlpSpec, vars: &MlpVars, x: Var, dx: Var) -> (Var, Var) {
    let mut h = x;
    let mut dh = dx;
    for (l, (w, b)) in vars.layers.iter().enumerate() {
        let a = tape.affine(h, *w, Some(*b));
        let da = tape.affine(dh, *w, None);
        match spec.activation_of(l) {
            Activation::Tanh => {
                h = tape.tanh(a);
                let h2 = tape.square(h);
                let one_minus = tape.neg(h2);
                let deriv = tape.offset(one_minus, 1.0);
                dh = tape.mul(deriv, da);
            }
            Activation::Sine => {
                h = tape.sin(a);
                let c = tape.cos(a);
                dh = tape.mul(c, da);
            }
            Activation::Identity => {
                h = a;
                dh = da;
            }
        }
    }
    (h, dh)
}

/// Evaluates the network on a batch without recording gradients of interest.
pub fn mlp_eval(spec: &MlpSpec, theta: &[f64], x: &DenseMatrix) -> DenseMatrix {
    let mut tape = Tape::new();
    let vars = MlpVars::constants(&mut tape, spec, theta);
    let xv = tape.constant(x.clone());
    let y = mlp_forward(&mut tape, spec, &vars, xv);
    tape.value(y).clone()
}

/// (1/N)·Σ‖pred − obs‖² over rows.
pub fn observation_loss(tape: &mut Tape, pred: Var, obs: &DenseMatrix) -> Result<Var> {
    if obs.rows() == 0 {
        return Err(Error::EmptySelection("observation loss over an empty domain".into()));
    }
    if tape.shape(pred) != obs.shape() {
        return Err(Error::Mode(format!("prediction shape {:?} vs observations {:?}", tape.shape(pred), obs.shape())));
    }
    let o = tape.constant(obs.clone());
    let d = tape.sub(pred, o);
    Ok(tape.mean_sq_norm(d))
}

/// Affine map of an input interval onto [−1, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputMap {
    pub lo: f64,
    pub hi: f64,
}

impl InputMap {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidParam(format!("degenerate input interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn apply(&self, t: f64) -> f64 {
        2.0 * (t - self.lo) / (self.hi - self.lo) - 1.0
    }

    /// dx/dt.
    pub fn slope(&self) -> f64 {
        2.0 / (self.hi - self.lo)
    }

    pub fn column(&self, ts: &[f64]) -> DenseMatrix {
        DenseMatrix::column(&ts.iter().map(|t| self.apply(*t)).collect::<Vec<_>>())
    }
}

/// Per-output z-scoring: physical = mean + sd·network.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputScale {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl OutputScale {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], sd: vec![1.0; dim] }
    }

    /// Mean and standard deviation of each column; zero spread maps to 1.
    pub fn from_columns(cols: &[&[f64]]) -> Self {
        let mut mean = Vec::new();
        let mut sd = Vec::new();
        for c in cols {
            let m = crate::metrics::mean(c);
            let s = crate::metrics::std_dev(c);
            mean.push(m);
            sd.push(if s > 0.0 { s } else { 1.0 });
        }
        Self { mean, sd }
    }

    pub fn mean_row(&self) -> DenseMatrix {
        DenseMatrix::from_vec(1, self.mean.len(), self.mean.clone())
    }

    pub fn sd_row(&self) -> DenseMatrix {
        DenseMatrix::from_vec(1, self.sd.len(), self.sd.clone())
    }

    /// mean + sd ⊙ y on the tape.
    pub fn denormalize(&self, tape: &mut Tape, y: Var) -> Var {
        let sd = tape.constant(self.sd_row());
        let mu = tape.constant(self.mean_row());
        let s = tape.mul(y, sd);
        tape.add(s, mu)
    }

    /// sd ⊙ dy (derivatives carry no offset).
    pub fn denormalize_tangent(&self, tape: &mut Tape, dy: Var) -> Var {
        let sd = tape.constant(self.sd_row());
        tape.mul(dy, sd)
    }
}
