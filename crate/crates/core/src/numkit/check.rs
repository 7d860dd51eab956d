//! Finite-difference gradient checks and random scalar computation graphs.

use super::rng::RngStream;
use super::tape::{grad, Tape, Var};
use super::NumError;

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// ‖a − b‖∞ / max(‖a‖∞, ‖b‖∞), or the absolute error when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let inf = |x: &[f64]| x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = inf(a).max(inf(b));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphOp {
    Add,
    Mul,
    Tanh,
    Sin,
    Pow(i32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphNode {
    pub op: GraphOp,
    pub a: usize,
    pub b: usize,
}

/// A random scalar expression over `n_inputs` leaves; node `i` of the
/// combined list is leaf `i` for `i < n_inputs`, then `nodes[i − n_inputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomGraph {
    pub n_inputs: usize,
    pub nodes: Vec<GraphNode>,
}

impl RandomGraph {
    /// Up to `max_nodes` operations with no path longer than `max_depth`.
    pub fn generate(rng: &mut RngStream, n_inputs: usize, max_nodes: usize, max_depth: usize) -> Self {
        let mut depth = vec![0usize; n_inputs];
        let mut nodes = Vec::new();
        let ops = [GraphOp::Add, GraphOp::Mul, GraphOp::Tanh, GraphOp::Sin, GraphOp::Pow(2), GraphOp::Pow(3)];
        for _ in 0..max_nodes {
            let open: Vec<usize> = (0..depth.len()).filter(|&i| depth[i] < max_depth).collect();
            if open.is_empty() {
                break;
            }
            let op = ops[rng.index(ops.len())];
            let a = open[rng.index(open.len())];
            let b = open[rng.index(open.len())];
            let d = 1 + match op {
                GraphOp::Add | GraphOp::Mul => depth[a].max(depth[b]),
                _ => depth[a],
            };
            depth.push(d);
            nodes.push(GraphNode { op, a, b });
        }
        Self { n_inputs, nodes }
    }

    /// Output: the sum of every node, so each leaf contributes.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = x.to_vec();
        for n in &self.nodes {
            let (a, b) = (v[n.a], v[n.b]);
            v.push(match n.op {
                GraphOp::Add => a + b,
                GraphOp::Mul => a * b,
                GraphOp::Tanh => a.tanh(),
                GraphOp::Sin => a.sin(),
                GraphOp::Pow(k) => a.powi(k),
            });
        }
        v.iter().sum()
    }

    /// Builds the expression on `tape` from the given input nodes.
    pub fn build(&self, tape: &mut Tape, inputs: &[Var]) -> Var {
        let mut v = inputs.to_vec();
        for n in &self.nodes {
            let (a, b) = (v[n.a], v[n.b]);
            let out = match n.op {
                GraphOp::Add => tape.add(a, b),
                GraphOp::Mul => tape.mul(a, b),
                GraphOp::Tanh => tape.tanh(a),
                GraphOp::Sin => tape.sin(a),
                GraphOp::Pow(k) => tape.powi(a, k),
            };
            v.push(out);
        }
        let mut total = v[0];
        for &x in &v[1..] {
            total = tape.add(total, x);
        }
        total
    }

    /// Value and reverse-mode gradient at `x`.
    pub fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), NumError> {
        let mut tape = Tape::new();
        let inputs: Vec<Var> = x.iter().map(|&xi| tape.scalar_leaf(xi)).collect();
        let out = self.build(&mut tape, &inputs);
        let g = grad(&tape, out)?;
        Ok((tape.scalar(out), inputs.iter().map(|&i| g.scalar(i)).collect()))
    }
}

/// Worst relative gradient error over `count` random graphs of depth at most
/// `max_depth`, against central differences with step `h`.
pub fn random_graph_suite(seed: u64, count: usize, max_depth: usize, h: f64) -> Result<f64, NumError> {
    let mut rng = RngStream::new(seed).substream("random-graphs");
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n_inputs = 1 + rng.index(4);
        let n_nodes = 1 + rng.index(12);
        let g = RandomGraph::generate(&mut rng, n_inputs, n_nodes, max_depth);
        let x: Vec<f64> = (0..n_inputs).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let (_, ad) = g.value_and_grad(&x)?;
        let fd = central_difference(|y| g.eval(y), &x, h);
        worst = worst.max(relative_error(&ad, &fd));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tape_value_matches_plain_evaluation() {
        let mut rng = RngStream::new(9);
        for _ in 0..20 {
            let g = RandomGraph::generate(&mut rng, 3, 10, 6);
            let x = [0.3, -0.7, 0.45];
            let (v, _) = g.value_and_grad(&x).unwrap();
            assert!((v - g.eval(&x)).abs() <= 1e-14 * v.abs().max(1.0));
        }
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert!((relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }
}
