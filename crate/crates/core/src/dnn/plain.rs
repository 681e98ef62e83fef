//! Double-precision forward and backward passes.

use super::{Dataset, Matrix, NetworkConfig, Weights};

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// Weighted sums of every hidden layer.
    pub z: Vec<Vec<f64>>,
    /// Activations of every hidden layer.
    pub a: Vec<Vec<f64>>,
    pub z_out: f64,
    pub o: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackpropTrace {
    pub delta_o: Vec<f64>,
    /// `delta[s][l][k]`: error signal of neuron `k` in hidden layer `l` for sample `s`.
    pub delta: Vec<Vec<Vec<f64>>>,
    /// Sum over samples of the per-sample derivatives `∂C/∂w`.
    pub gradient: Weights<f64>,
    /// `-(η/N)` times the gradient.
    pub increments: Weights<f64>,
}

/// `Σ_j input_j * m[j][k]` for every column `k`, in ascending `j`.
pub(crate) fn weighted_sums(input: &[f64], m: &Matrix<f64>) -> Vec<f64> {
    let mut z = vec![0.0; m.cols()];
    for (j, &x) in input.iter().enumerate() {
        for (k, zk) in z.iter_mut().enumerate() {
            *zk += x * m.get(j, k);
        }
    }
    z
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn feedforward(w: &Weights<f64>, config: &NetworkConfig, x: &[f64]) -> ForwardTrace {
    let act = config.activation;
    let mut z = Vec::with_capacity(w.hidden.len());
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(w.hidden.len());
    for m in &w.hidden {
        let input = a.last().map_or(x, |v| v.as_slice());
        let zl = weighted_sums(input, m);
        a.push(zl.iter().map(|&v| act.apply(v)).collect());
        z.push(zl);
    }
    let z_out = dot(a.last().expect("at least one hidden layer"), &w.output);
    ForwardTrace { z, a, z_out, o: act.apply(z_out) }
}

/// `½ (y - o)²`.
pub fn cost(o: f64, y: f64) -> f64 {
    0.5 * (y - o) * (y - o)
}

/// Mean per-sample cost.
pub fn dataset_error(w: &Weights<f64>, config: &NetworkConfig, data: &Dataset) -> f64 {
    let total = data.samples.iter().fold(0.0, |acc, s| acc + cost(feedforward(w, config, &s.features).o, s.label));
    total / data.len() as f64
}

pub fn backprop(w: &Weights<f64>, config: &NetworkConfig, traces: &[ForwardTrace], data: &Dataset) -> BackpropTrace {
    let act = config.activation;
    let depth = w.hidden.len();
    let mut gradient = w.map(|_| 0.0);
    let mut delta_o = Vec::with_capacity(data.len());
    let mut delta = Vec::with_capacity(data.len());
    for (t, s) in traces.iter().zip(&data.samples) {
        let d_o = (t.o - s.label) * act.derivative(t.z_out);
        let mut ds = vec![Vec::new(); depth];
        ds[depth - 1] = t.z[depth - 1].iter().zip(&w.output).map(|(&z, &wo)| act.derivative(z) * wo * d_o).collect();
        for l in (0..depth - 1).rev() {
            let next = &w.hidden[l + 1];
            ds[l] = t.z[l]
                .iter()
                .enumerate()
                .map(|(j, &z)| {
                    let back = (0..next.cols()).fold(0.0, |acc, k| acc + next.get(j, k) * ds[l + 1][k]);
                    act.derivative(z) * back
                })
                .collect();
        }
        for (j, g) in gradient.output.iter_mut().enumerate() {
            *g += t.a[depth - 1][j] * d_o;
        }
        for l in 0..depth {
            let input = if l == 0 { &s.features } else { &t.a[l - 1] };
            let g = &mut gradient.hidden[l];
            for (j, &x) in input.iter().enumerate() {
                for (k, &d) in ds[l].iter().enumerate() {
                    *g.get_mut(j, k) += x * d;
                }
            }
        }
        delta_o.push(d_o);
        delta.push(ds);
    }
    let step = config.learning_rate / data.len() as f64;
    let increments = gradient.map(|g| -step * g);
    BackpropTrace { delta_o, delta, gradient, increments }
}

/// `w + Δw`, elementwise.
pub fn apply_update(w: &Weights<f64>, increments: &Weights<f64>) -> Weights<f64> {
    w.zip_with(increments, |a, b| a + b)
}

/// One full-batch epoch: returns the error at `w` and the backprop result.
pub fn epoch(w: &Weights<f64>, config: &NetworkConfig, data: &Dataset) -> (f64, BackpropTrace) {
    let traces: Vec<_> = data.samples.iter().map(|s| feedforward(w, config, &s.features)).collect();
    let error = traces.iter().zip(&data.samples).fold(0.0, |acc, (t, s)| acc + cost(t.o, s.label)) / data.len() as f64;
    (error, backprop(w, config, &traces, data))
}
