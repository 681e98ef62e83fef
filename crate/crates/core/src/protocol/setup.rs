use std::collections::HashMap;

use crate::codec::SignFlag;
use crate::dnn::{QuantizedDataset, QuantizedSample};
use crate::pairing::{aggregate, hash_to_scalar, GroupElement, PublicKey, Scalar, SecretKey};

use super::ProtocolError;

/// Commitments to one sample plus the sign of every committed value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleDigest {
    /// `g^[f(x_i)]`, `G1` form only.
    pub features: Vec<GroupElement>,
    /// `g^[f(y)]` in both forms; it is paired with itself in the error check.
    pub label: GroupElement,
    pub feature_signs: Vec<SignFlag>,
    pub label_sign: SignFlag,
}

impl SampleDigest {
    pub fn synopsis(&self) -> Scalar {
        synopsis(self.features.iter(), &self.label)
    }
}

/// `d = H(g^x_1 || ... || g^x_m || g^y)` over the canonical encodings.
pub fn synopsis<'a>(features: impl IntoIterator<Item = &'a GroupElement>, label: &GroupElement) -> Scalar {
    let mut bytes = Vec::new();
    for c in features {
        bytes.extend(c.to_bytes());
    }
    bytes.extend(label.to_bytes());
    hash_to_scalar(&bytes)
}

pub fn commit_feature(value: i128) -> GroupElement {
    GroupElement::exp_left_int(value)
}

pub fn commit_label(value: i128) -> GroupElement {
    GroupElement::exp_g_int(value)
}

pub fn digest_sample(sample: &QuantizedSample) -> SampleDigest {
    SampleDigest {
        features: sample.features.iter().map(|&x| commit_feature(x)).collect(),
        label: commit_label(sample.label),
        feature_signs: sample.feature_signs().collect(),
        label_sign: sample.label_sign(),
    }
}

/// Digests of every sample; equal values share one exponentiation.
pub fn digest_dataset(data: &QuantizedDataset) -> Vec<SampleDigest> {
    let mut features: HashMap<i128, GroupElement> = HashMap::new();
    let mut labels: HashMap<i128, GroupElement> = HashMap::new();
    data.samples
        .iter()
        .map(|s| SampleDigest {
            features: s.features.iter().map(|&x| *features.entry(x).or_insert_with(|| commit_feature(x))).collect(),
            label: *labels.entry(s.label).or_insert_with(|| commit_label(s.label)),
            feature_signs: s.feature_signs().collect(),
            label_sign: s.label_sign(),
        })
        .collect()
}

/// `γ`, the product of the per-sample signatures `τ_i = (g^d_i)^s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSignature {
    pub gamma: GroupElement,
}

pub fn setup(
    data: &QuantizedDataset,
    secret: &SecretKey,
    public: &PublicKey,
) -> Result<DatasetSignature, ProtocolError> {
    if data.is_empty() {
        return Err(ProtocolError::EmptyDataset);
    }
    if public.v != GroupElement::exp_g(&secret.secret) {
        return Err(ProtocolError::KeyMismatch);
    }
    let taus: Vec<GroupElement> =
        digest_dataset(data).iter().map(|d| GroupElement::exp_left(&d.synopsis().mul(&secret.secret))).collect();
    Ok(DatasetSignature { gamma: aggregate(&taus)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecParams;
    use crate::dnn::synthetic::linearly_separable;
    use crate::pairing::{genkey, pair, Scalar};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn data(n: usize, seed: u64) -> QuantizedDataset {
        linearly_separable(n, 3, seed).quantize(&CodecParams::default()).unwrap()
    }

    #[test]
    fn single_sample_signature() {
        let (sk, pk) = genkey(128, 1).unwrap();
        let d = data(1, 1);
        let sig = setup(&d, &sk, &pk).unwrap();
        let d1 = digest_sample(&d.samples[0]).synopsis();
        assert_eq!(sig.gamma.left(), GroupElement::exp_g(&d1.mul(&sk.secret)).left());
        assert_eq!(
            pair(&GroupElement::exp_g(&d1), &pk.v).unwrap(),
            pair(&sig.gamma, &GroupElement::generator()).unwrap()
        );
    }

    #[test]
    fn duplicate_samples_double_the_exponent() {
        let (sk, pk) = genkey(128, 2).unwrap();
        let mut d = data(1, 3);
        d.samples.push(d.samples[0].clone());
        let sig = setup(&d, &sk, &pk).unwrap();
        let two_d = digest_sample(&d.samples[0]).synopsis().mul(&Scalar::from_u64(2));
        assert_eq!(sig.gamma.left(), GroupElement::exp_g(&two_d.mul(&sk.secret)).left());
    }

    #[test]
    fn permutation_invariant() {
        let (sk, pk) = genkey(128, 3).unwrap();
        let mut d = data(12, 4);
        let sig = setup(&d, &sk, &pk).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..3 {
            d.samples.shuffle(&mut rng);
            assert_eq!(setup(&d, &sk, &pk).unwrap(), sig);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched_keys() {
        let (sk, pk) = genkey(128, 4).unwrap();
        let (_, other) = genkey(128, 5).unwrap();
        let mut d = data(2, 5);
        assert_eq!(setup(&d, &sk, &other), Err(ProtocolError::KeyMismatch));
        d.samples.clear();
        assert_eq!(setup(&d, &sk, &pk), Err(ProtocolError::EmptyDataset));
    }

    #[test]
    fn cached_digests_match_direct_ones() {
        let d = data(10, 6);
        let all = digest_dataset(&d);
        for (s, dig) in d.samples.iter().zip(&all) {
            assert_eq!(&digest_sample(s), dig);
        }
    }
}
