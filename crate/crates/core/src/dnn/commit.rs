//! The quantized training round shared by prover and verifier.
//!
//! With `F = 2^L` and all weights `W` held as scale-1 integers:
//!
//! * `z1_k = Σ_j f(x_j) W1_jk` is exact (scale 2). Hidden layers above the
//!   first and the output are evaluated in `f64` with `w = W / F`, in a fixed
//!   index order, so both parties reproduce them bit for bit.
//! * `q = f(y) - f(o)`, and the error aggregate is `S = Σ q²` (scale 2),
//!   i.e. `E = S / (2 N F²)`.
//! * `δo = (f(o) - f(y)) f(σ'(z_out))` (scale 2) and, for every last-layer
//!   neuron, `δL_k = W_out_k f(σ'(zL_k)) δo` (scale 4).
//! * Inner error signals are `f64` again, seeded with `δL / F⁴`, and the
//!   first-layer increment numerator is `A_jk = Σ_s f(x_j) f(η δ1_k)`
//!   (scale 2), giving `W1 += round(-A / (N F))`.
//! * All other weights move by `round(F (w - η G / N))` with `G` the usual
//!   gradient accumulated in ascending sample order.

use crate::codec::{div_round_half_even, encode, split_dot, CodecError, CodecParams, ScaledInt, SplitSum};

use super::plain::{dot, weighted_sums};
use super::{DnnError, Matrix, NetworkConfig, QuantizedDataset, QuantizedSample, QuantizedWeights};

/// Replaces hidden activations, modelling faulty hardware on the prover.
pub trait NeuronFault {
    /// Called once per sample and hidden layer, right after the activations
    /// of that layer are computed.
    fn perturb(&self, sample: usize, layer: usize, activations: &mut [f64]);
}

/// Forward state of one sample from its exact first-layer sums on.
#[derive(Clone, Debug, PartialEq)]
pub struct CommitForward {
    /// `z1` at scale 2.
    pub z1: Vec<i128>,
    /// Decoded weighted sums of every hidden layer (`z[0] = z1 / F²`).
    pub z: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub z_out: f64,
    pub o: f64,
    /// `f(o)`.
    pub fo: i128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBackward {
    /// `δo` at scale 2.
    pub delta_o: i128,
    /// `δL` at scale 4.
    pub delta_l: Vec<i128>,
    /// Decoded error signals of every hidden layer.
    pub delta: Vec<Vec<f64>>,
    /// `f(η δ1_k)` at scale 1.
    pub scaled_delta1: Vec<i128>,
}

/// A forward-only pass over the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct CommitEval {
    pub weights: QuantizedWeights,
    pub z1_split: Vec<Vec<SplitSum>>,
    pub forward: Vec<CommitForward>,
    /// `q = f(y) - f(o)` per sample.
    pub residual: Vec<i128>,
    /// `S = Σ q²` at scale 2.
    pub error_sum: i128,
}

/// A full round: forward pass, backward pass and the resulting update.
#[derive(Clone, Debug, PartialEq)]
pub struct CommitRound {
    pub eval: CommitEval,
    pub backward: Vec<SampleBackward>,
    /// `A_jk` split by product sign, `m × d1`.
    pub numerators: Matrix<SplitSum>,
    pub next: QuantizedWeights,
}

fn overflow(what: &str) -> DnnError {
    DnnError::Codec(CodecError::Overflow(what.into()))
}

fn encode_value(x: f64, params: &CodecParams) -> Result<i128, DnnError> {
    Ok(encode(x, params)?.value)
}

/// `split_dot` of a sample's features against every first-layer column.
pub fn commitment_layer1_sums(
    w: &QuantizedWeights,
    config: &NetworkConfig,
    sample: &QuantizedSample,
    params: &CodecParams,
) -> Result<Vec<SplitSum>, DnnError> {
    w.check_shape(config)?;
    if sample.features.len() != config.input_dim {
        return Err(DnnError::Shape(format!(
            "sample has {} features, expected {}",
            sample.features.len(),
            config.input_dim
        )));
    }
    let x: Vec<ScaledInt> = sample.features.iter().map(|&v| ScaledInt { value: v, scale: 1 }).collect();
    let w1 = &w.hidden[0];
    (0..w1.cols())
        .map(|k| {
            let col: Vec<ScaledInt> = (0..w1.rows()).map(|j| ScaledInt { value: *w1.get(j, k), scale: 1 }).collect();
            Ok(split_dot(&x, &col, params)?)
        })
        .collect()
}

/// Everything above the first-layer sums.
pub fn forward_from_first_sums(
    config: &NetworkConfig,
    params: &CodecParams,
    w: &QuantizedWeights,
    z1: &[i128],
    fault: Option<(&dyn NeuronFault, usize)>,
) -> Result<CommitForward, DnnError> {
    let act = config.activation;
    let unit = params.unit(1);
    let unit2 = params.unit(2);
    let depth = w.hidden.len();
    let mut z = Vec::with_capacity(depth);
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(depth);
    for l in 0..depth {
        let zl = if l == 0 {
            z1.iter().map(|&v| v as f64 / unit2).collect()
        } else {
            let m = w.hidden[l].map(|&v| v as f64 / unit);
            weighted_sums(&a[l - 1], &m)
        };
        let mut al: Vec<f64> = zl.iter().map(|&v| act.apply(v)).collect();
        if let Some((f, sample)) = fault {
            f.perturb(sample, l, &mut al);
        }
        z.push(zl);
        a.push(al);
    }
    let out: Vec<f64> = w.output.iter().map(|&v| v as f64 / unit).collect();
    let z_out = dot(&a[depth - 1], &out);
    let o = act.apply(z_out);
    Ok(CommitForward { z1: z1.to_vec(), z, a, z_out, o, fo: encode_value(o, params)? })
}

/// `f(σ'(z_out))`.
pub fn output_slope(config: &NetworkConfig, params: &CodecParams, fwd: &CommitForward) -> Result<i128, DnnError> {
    encode_value(config.activation.derivative(fwd.z_out), params)
}

/// `c_k = W_out_k f(σ'(zL_k))` (scale 2), so that `δL_k = c_k δo`.
pub fn last_layer_coefficients(
    config: &NetworkConfig,
    params: &CodecParams,
    w: &QuantizedWeights,
    fwd: &CommitForward,
) -> Result<Vec<i128>, DnnError> {
    let zl = fwd.z.last().expect("at least one hidden layer");
    zl.iter()
        .zip(&w.output)
        .map(|(&z, &wo)| {
            let slope = encode_value(config.activation.derivative(z), params)?;
            wo.checked_mul(slope).ok_or_else(|| overflow("last-layer coefficient"))
        })
        .collect()
}

/// Inner error signals and `f(η δ1)` from the exact last-layer signals.
pub fn backward_from_last_signals(
    config: &NetworkConfig,
    params: &CodecParams,
    w: &QuantizedWeights,
    fwd: &CommitForward,
    delta_l: &[i128],
) -> Result<(Vec<Vec<f64>>, Vec<i128>), DnnError> {
    let act = config.activation;
    let unit = params.unit(1);
    let unit4 = params.unit(4);
    let depth = w.hidden.len();
    let mut delta = vec![Vec::new(); depth];
    delta[depth - 1] = delta_l.iter().map(|&d| d as f64 / unit4).collect();
    for l in (0..depth - 1).rev() {
        let next = &w.hidden[l + 1];
        delta[l] = fwd.z[l]
            .iter()
            .enumerate()
            .map(|(j, &z)| {
                let back = (0..next.cols()).fold(0.0, |acc, k| acc + (*next.get(j, k) as f64 / unit) * delta[l + 1][k]);
                act.derivative(z) * back
            })
            .collect();
    }
    let scaled = delta[0].iter().map(|&d| encode_value(config.learning_rate * d, params)).collect::<Result<_, _>>()?;
    Ok((delta, scaled))
}

/// `A_jk = Σ_s f(x_{s,j}) f(η δ1_{s,k})`, split by product sign.
pub fn first_layer_numerators(
    data: &QuantizedDataset,
    scaled_delta1: &[Vec<i128>],
    params: &CodecParams,
) -> Result<Matrix<SplitSum>, DnnError> {
    let m = data.input_dim().ok_or(DnnError::EmptyDataset)?;
    let d1 = scaled_delta1.first().map_or(0, |v| v.len());
    let mut out = Vec::with_capacity(m * d1);
    for j in 0..m {
        let x: Vec<ScaledInt> = data.samples.iter().map(|s| ScaledInt { value: s.features[j], scale: 1 }).collect();
        for k in 0..d1 {
            let e: Vec<ScaledInt> = scaled_delta1.iter().map(|v| ScaledInt { value: v[k], scale: 1 }).collect();
            out.push(split_dot(&x, &e, params)?);
        }
    }
    Matrix::from_vec(m, d1, out)
}

/// Applies one round's update. `numerators` are the `A_jk` totals, `delta_o`
/// and `delta` the per-sample error signals, `forward` the per-sample states.
pub fn updated_weights(
    config: &NetworkConfig,
    params: &CodecParams,
    w: &QuantizedWeights,
    forward: &[CommitForward],
    delta_o: &[i128],
    delta: &[Vec<Vec<f64>>],
    numerators: &Matrix<i128>,
) -> Result<QuantizedWeights, DnnError> {
    let n = forward.len();
    if n == 0 {
        return Err(DnnError::EmptyDataset);
    }
    let unit = params.unit(1);
    let unit2 = params.unit(2);
    let step = config.learning_rate / n as f64;
    let depth = w.hidden.len();
    let mut next = w.clone();

    let denom =
        (n as i128).checked_mul(1i128 << params.fractional_bits).ok_or_else(|| overflow("update denominator"))?;
    let w1 = &mut next.hidden[0];
    for j in 0..w1.rows() {
        for k in 0..w1.cols() {
            let inc = div_round_half_even(-numerators.get(j, k), denom);
            let v = w1.get_mut(j, k);
            *v = v.checked_add(inc).ok_or_else(|| overflow("first-layer weight"))?;
        }
    }

    let moved = |old: i128, grad: f64| encode_value(old as f64 / unit - step * grad, params);
    for l in 1..depth {
        let m = &mut next.hidden[l];
        for j in 0..m.rows() {
            for k in 0..m.cols() {
                let g = forward.iter().zip(delta).fold(0.0, |acc, (f, d)| acc + f.a[l - 1][j] * d[l][k]);
                let v = m.get_mut(j, k);
                *v = moved(*v, g)?;
            }
        }
    }
    for j in 0..next.output.len() {
        let g = forward.iter().zip(delta_o).fold(0.0, |acc, (f, &d)| acc + f.a[depth - 1][j] * (d as f64 / unit2));
        next.output[j] = moved(next.output[j], g)?;
    }
    Ok(next)
}

/// Forward pass over the whole batch.
pub fn commit_eval(
    config: &NetworkConfig,
    params: &CodecParams,
    w: &QuantizedWeights,
    data: &QuantizedDataset,
    fault: Option<&dyn NeuronFault>,
) -> Result<CommitEval, DnnError> {
    if data.is_empty() {
        return Err(DnnError::EmptyDataset);
    }
    let mut z1_split = Vec::with_capacity(data.len());
    let mut forward = Vec::with_capacity(data.len());
    let mut residual = Vec::with_capacity(data.len());
    let mut error_sum = 0i128;
    for (i, s) in data.samples.iter().enumerate() {
        let sums = commitment_layer1_sums(w, config, s, params)?;
        let z1: Vec<i128> = sums.iter().map(|t| t.total.value).collect();
        let fwd = forward_from_first_sums(config, params, w, &z1, fault.map(|f| (f, i)))?;
        let q = s.label.checked_sub(fwd.fo).ok_or_else(|| overflow("residual"))?;
        error_sum =
            q.checked_mul(q).and_then(|q2| error_sum.checked_add(q2)).ok_or_else(|| overflow("error aggregate"))?;
        z1_split.push(sums);
        forward.push(fwd);
        residual.push(q);
    }
    Ok(CommitEval { weights: w.clone(), z1_split, forward, residual, error_sum })
}

/// Forward pass, backward pass and update.
pub fn commit_round(
    config: &NetworkConfig,
    params: &CodecParams,
    w: &QuantizedWeights,
    data: &QuantizedDataset,
    fault: Option<&dyn NeuronFault>,
) -> Result<CommitRound, DnnError> {
    let eval = commit_eval(config, params, w, data, fault)?;
    commit_backward(config, params, data, eval)
}

/// Backward pass and update on top of a forward pass. The residuals in
/// `eval` drive the error signals, so an altered `eval` yields a round that
/// is internally consistent with the alteration.
pub fn commit_backward(
    config: &NetworkConfig,
    params: &CodecParams,
    data: &QuantizedDataset,
    eval: CommitEval,
) -> Result<CommitRound, DnnError> {
    let w = &eval.weights;
    let mut backward = Vec::with_capacity(data.len());
    for (fwd, &q) in eval.forward.iter().zip(&eval.residual) {
        let delta_o = q
            .checked_neg()
            .and_then(|nq| nq.checked_mul(output_slope(config, params, fwd).ok()?))
            .ok_or_else(|| overflow("output error signal"))?;
        let delta_l = last_layer_coefficients(config, params, w, fwd)?
            .into_iter()
            .map(|c| c.checked_mul(delta_o).ok_or_else(|| overflow("last-layer error signal")))
            .collect::<Result<Vec<_>, _>>()?;
        let (delta, scaled_delta1) = backward_from_last_signals(config, params, w, fwd, &delta_l)?;
        backward.push(SampleBackward { delta_o, delta_l, delta, scaled_delta1 });
    }
    let scaled: Vec<Vec<i128>> = backward.iter().map(|b| b.scaled_delta1.clone()).collect();
    let numerators = first_layer_numerators(data, &scaled, params)?;
    let delta_o: Vec<i128> = backward.iter().map(|b| b.delta_o).collect();
    let delta: Vec<Vec<Vec<f64>>> = backward.iter().map(|b| b.delta.clone()).collect();
    let next = updated_weights(config, params, w, &eval.forward, &delta_o, &delta, &numerators.map(|s| s.total.value))?;
    Ok(CommitRound { eval, backward, numerators, next })
}

/// `E = S / (2 N F²)`.
pub fn error_from_sum(error_sum: i128, n: usize, params: &CodecParams) -> f64 {
    error_sum as f64 / (2.0 * n as f64 * params.unit(2))
}
