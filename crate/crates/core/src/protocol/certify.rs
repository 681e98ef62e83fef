use std::collections::HashMap;

use crate::codec::{CodecParams, ScaledInt, SignFlag};
use crate::dnn::commit::{last_layer_coefficients, CommitEval, CommitRound};
use crate::dnn::train::TrainOutcome;
use crate::dnn::{NetworkConfig, QuantizedDataset};
use crate::pairing::GroupElement;

use super::proof::{DictEntry, DigestTable, Mode, Proof, ProofHeader, SampleIndices, SampleWitness, ValueDictionary};
use super::setup::{commit_feature, commit_label, digest_dataset};
use super::{malformed, ProtocolError};

fn u32_of(v: usize, what: &str) -> Result<u32, ProtocolError> {
    u32::try_from(v).map_err(|_| malformed(format!("{what} does not fit in 32 bits")))
}

fn dictionary(data: &QuantizedDataset) -> Result<ValueDictionary, ProtocolError> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut feature_index: HashMap<i128, u32> = HashMap::new();
    let mut label_index: HashMap<i128, u32> = HashMap::new();
    let mut samples = Vec::with_capacity(data.len());
    for s in &data.samples {
        let mut idx = Vec::with_capacity(s.features.len());
        for &x in &s.features {
            let next = u32_of(features.len(), "dictionary size")?;
            let i = *feature_index.entry(x).or_insert_with(|| {
                features.push(DictEntry { commitment: commit_feature(x), sign: SignFlag::of(x) });
                next
            });
            idx.push(i);
        }
        let next = u32_of(labels.len(), "dictionary size")?;
        let label = *label_index.entry(s.label).or_insert_with(|| {
            labels.push(DictEntry { commitment: commit_label(s.label), sign: SignFlag::of(s.label) });
            next
        });
        samples.push(SampleIndices { features: idx, label });
    }
    Ok(ValueDictionary { features, labels, samples })
}

/// Builds `π = {π_E, π_T, π_W}` from the two certified rounds.
pub fn certify(
    config: &NetworkConfig,
    params: &CodecParams,
    data: &QuantizedDataset,
    round1: &CommitRound,
    round2: &CommitEval,
    mode: Mode,
) -> Result<Proof, ProtocolError> {
    let n = data.len();
    if n == 0 {
        return Err(ProtocolError::EmptyDataset);
    }
    if round1.eval.forward.len() != n || round2.forward.len() != n || round1.backward.len() != n {
        return Err(malformed("training traces do not cover the dataset"));
    }
    let header = ProofHeader {
        mode,
        fractional_bits: params.fractional_bits,
        samples: u32_of(n, "sample count")?,
        input_dim: u32_of(config.input_dim, "input dimension")?,
        hidden: config.hidden.iter().map(|&d| u32_of(d, "layer width")).collect::<Result<_, _>>()?,
    };
    let digests = match mode {
        Mode::Basic => DigestTable::Basic(digest_dataset(data)),
        Mode::UniqueValue => DigestTable::UniqueValue(dictionary(data)?),
    };
    let witnesses = (0..n)
        .map(|i| {
            let b = &round1.backward[i];
            let coeffs = last_layer_coefficients(config, params, &round1.eval.weights, &round1.eval.forward[i])?;
            let delta_o_opening =
                if coeffs.iter().all(|&c| c == 0) { Some(ScaledInt::new(b.delta_o, 2)?) } else { None };
            Ok(SampleWitness {
                z: round1.eval.z1_split[i].clone(),
                z_hat: round2.z1_split[i].clone(),
                delta_o: GroupElement::exp_right_int(b.delta_o),
                delta_l: b.delta_l.iter().map(|&v| ScaledInt::new(v, 4)).collect::<Result<_, _>>()?,
                delta_o_opening,
            })
        })
        .collect::<Result<_, ProtocolError>>()?;
    Ok(Proof {
        header,
        s1: ScaledInt::new(round1.eval.error_sum, 2)?,
        s2: ScaledInt::new(round2.error_sum, 2)?,
        digests,
        witnesses,
        numerators: round1.numerators.clone(),
    })
}

pub fn certify_outcome(
    config: &NetworkConfig,
    params: &CodecParams,
    data: &QuantizedDataset,
    outcome: &TrainOutcome,
    mode: Mode,
) -> Result<Proof, ProtocolError> {
    certify(config, params, data, &outcome.round1, &outcome.round2, mode)
}
