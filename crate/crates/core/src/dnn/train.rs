//! Training until two consecutive epoch errors differ by at most `θ`.

use crate::codec::{abs_diff_within, CodecParams};

use super::commit::{commit_eval, commit_round, error_from_sum, CommitEval, CommitRound, NeuronFault};
use super::plain::{apply_update, epoch};
use super::{DnnError, NetworkConfig, QuantizedDataset, QuantizedWeights, Weights};

/// Restricts the weights after every update (used to model compressed training).
pub trait WeightConstraint {
    fn apply(&self, w: &mut Weights<f64>);
}

#[derive(Clone, Copy, Default)]
pub struct TrainHooks<'a> {
    pub constraint: Option<&'a dyn WeightConstraint>,
    /// Applied during the two certified rounds only.
    pub fault: Option<&'a dyn NeuronFault>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// The model training started from.
    pub initial: QuantizedWeights,
    /// `W_conv`: the model at the first certified round.
    pub converged: QuantizedWeights,
    pub plain_epochs: usize,
    pub commit_epochs: usize,
    pub round1: CommitRound,
    pub round2: CommitEval,
}

impl TrainOutcome {
    /// `ΔW = W_conv - W_0`.
    pub fn update(&self) -> QuantizedWeights {
        self.converged.checked_sub(&self.initial).expect("both derived from in-range weights")
    }

    pub fn e1(&self, params: &CodecParams) -> f64 {
        error_from_sum(self.round1.eval.error_sum, self.round1.eval.forward.len(), params)
    }

    pub fn e2(&self, params: &CodecParams) -> f64 {
        error_from_sum(self.round2.error_sum, self.round2.forward.len(), params)
    }

    pub fn epochs(&self) -> usize {
        self.plain_epochs + self.commit_epochs
    }
}

/// `|S1 - S2| / (2 N F²) <= θ`, evaluated exactly.
pub fn errors_converged(s1: i128, s2: i128, n: usize, threshold: f64, params: &CodecParams) -> bool {
    let denom = 2u128 * n as u128 * (1u128 << (2 * params.fractional_bits));
    abs_diff_within(s1, s2, threshold, denom)
}

fn constrained(w: &QuantizedWeights, hooks: &TrainHooks, params: &CodecParams) -> Result<QuantizedWeights, DnnError> {
    match hooks.constraint {
        None => Ok(w.clone()),
        Some(c) => {
            let mut plain = w.dequantize(params);
            c.apply(&mut plain);
            Ok(plain.quantize(params)?)
        }
    }
}

/// Runs the two certified rounds starting at `w`.
pub fn certified_rounds(
    config: &NetworkConfig,
    params: &CodecParams,
    w: &QuantizedWeights,
    data: &QuantizedDataset,
    hooks: &TrainHooks,
) -> Result<(CommitRound, CommitEval), DnnError> {
    let mut round1 = commit_round(config, params, w, data, hooks.fault)?;
    round1.next = constrained(&round1.next, hooks, params)?;
    let round2 = commit_eval(config, params, &round1.next, data, hooks.fault)?;
    Ok((round1, round2))
}

/// Full-batch gradient descent in `f64` until `|E_t - E_{t+1}| <= θ`, then
/// the two certified rounds from `W_t`. If the certified errors are not yet
/// within `θ`, training continues in the quantized pipeline until they are.
pub fn train_to_convergence(
    config: &NetworkConfig,
    params: &CodecParams,
    w0: &QuantizedWeights,
    data: &QuantizedDataset,
    hooks: &TrainHooks,
) -> Result<TrainOutcome, DnnError> {
    config.validate()?;
    w0.check_shape(config)?;
    if data.is_empty() {
        return Err(DnnError::EmptyDataset);
    }
    let initial = constrained(w0, hooks, params)?;
    let plain_data = data.dequantize(params);
    let n = data.len();

    let mut w = initial.dequantize(params);
    let (mut e_prev, mut bt) = epoch(&w, config, &plain_data);
    let mut plain_epochs = 0;
    let mut converged = None;
    while plain_epochs < config.max_epochs {
        plain_epochs += 1;
        let mut next = apply_update(&w, &bt.increments);
        if let Some(c) = hooks.constraint {
            c.apply(&mut next);
        }
        let (e_next, bt_next) = epoch(&next, config, &plain_data);
        if !e_next.is_finite() {
            return Err(DnnError::NoConvergence(plain_epochs));
        }
        if (e_prev - e_next).abs() <= config.threshold {
            converged = Some(w);
            break;
        }
        w = next;
        e_prev = e_next;
        bt = bt_next;
    }
    let Some(w_conv) = converged else {
        return Err(DnnError::NoConvergence(plain_epochs));
    };

    let mut wq = constrained(&w_conv.quantize(params)?, hooks, params)?;
    let mut commit_epochs = 0;
    loop {
        let (round1, round2) = certified_rounds(config, params, &wq, data, hooks)?;
        commit_epochs += 1;
        if errors_converged(round1.eval.error_sum, round2.error_sum, n, config.threshold, params) {
            return Ok(TrainOutcome { initial, converged: wq, plain_epochs, commit_epochs, round1, round2 });
        }
        if plain_epochs + commit_epochs >= config.max_epochs {
            return Err(DnnError::NoConvergence(plain_epochs + commit_epochs));
        }
        wq = round1.next;
    }
}
