use crate::codec::{CodecParams, ScaledInt, SignFlag, SplitSum};
use crate::dnn::{Matrix, NetworkConfig};
use crate::pairing::GroupElement;

use super::setup::SampleDigest;
use super::{malformed, ProtocolError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Every sample carries its own commitments.
    Basic,
    /// Each distinct value is committed once; samples refer to it by index.
    UniqueValue,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::Basic => 0,
            Mode::UniqueValue => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Mode::Basic),
            1 => Some(Mode::UniqueValue),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Basic => "basic",
            Mode::UniqueValue => "unique-value",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Mode::Basic),
            "unique-value" | "unique" => Ok(Mode::UniqueValue),
            other => Err(format!("unknown proof mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofHeader {
    pub mode: Mode,
    pub fractional_bits: u32,
    pub samples: u32,
    pub input_dim: u32,
    pub hidden: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DictEntry {
    pub commitment: GroupElement,
    pub sign: SignFlag,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleIndices {
    pub features: Vec<u32>,
    pub label: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValueDictionary {
    pub features: Vec<DictEntry>,
    pub labels: Vec<DictEntry>,
    pub samples: Vec<SampleIndices>,
}

/// `π_T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DigestTable {
    Basic(Vec<SampleDigest>),
    UniqueValue(ValueDictionary),
}

impl DigestTable {
    pub fn sample_count(&self) -> usize {
        match self {
            DigestTable::Basic(d) => d.len(),
            DigestTable::UniqueValue(v) => v.samples.len(),
        }
    }

    /// Number of feature commitments physically stored.
    pub fn feature_commitment_count(&self) -> usize {
        match self {
            DigestTable::Basic(d) => d.iter().map(|s| s.features.len()).sum(),
            DigestTable::UniqueValue(v) => v.features.len(),
        }
    }

    /// Per-sample digests, with dictionary indices resolved.
    pub fn resolve(&self) -> Result<Vec<SampleDigest>, ProtocolError> {
        match self {
            DigestTable::Basic(d) => Ok(d.clone()),
            DigestTable::UniqueValue(v) => v
                .samples
                .iter()
                .map(|idx| {
                    let lookup = |table: &[DictEntry], i: u32| {
                        table
                            .get(i as usize)
                            .cloned()
                            .ok_or_else(|| malformed(format!("dictionary index {i} out of range")))
                    };
                    let mut features = Vec::with_capacity(idx.features.len());
                    let mut feature_signs = Vec::with_capacity(idx.features.len());
                    for &i in &idx.features {
                        let e = lookup(&v.features, i)?;
                        features.push(e.commitment);
                        feature_signs.push(e.sign);
                    }
                    let label = lookup(&v.labels, idx.label)?;
                    Ok(SampleDigest { features, label: label.commitment, feature_signs, label_sign: label.sign })
                })
                .collect(),
        }
    }
}

/// Per-sample part of `π_W`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleWitness {
    /// `z1_k` at the converged model.
    pub z: Vec<SplitSum>,
    /// `ẑ1_k` after one more update.
    pub z_hat: Vec<SplitSum>,
    /// `g^[δo]`, `G2` form only.
    pub delta_o: GroupElement,
    /// `δL_k` in plaintext.
    pub delta_l: Vec<ScaledInt>,
    /// `δo` in plaintext, present exactly when every last-layer coefficient
    /// `f(w^o_k) f(σ'(z^L_k))` is zero and `δL` therefore does not determine it.
    pub delta_o_opening: Option<ScaledInt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub header: ProofHeader,
    /// `π_E`: `S1`, `S2` with `E = S / (2 N 2^(2L))`.
    pub s1: ScaledInt,
    pub s2: ScaledInt,
    pub digests: DigestTable,
    pub witnesses: Vec<SampleWitness>,
    /// `A_jk`, `m × d1`.
    pub numerators: Matrix<SplitSum>,
}

impl Proof {
    pub fn mode(&self) -> Mode {
        self.header.mode
    }

    pub fn samples(&self) -> usize {
        self.witnesses.len()
    }

    /// Checks counts, scales, element forms and the header against the
    /// verifier's configuration. Failures here are malformed proofs rather
    /// than rejections.
    pub fn validate(&self, config: &NetworkConfig, params: &CodecParams) -> Result<(), ProtocolError> {
        let h = &self.header;
        let n = self.witnesses.len();
        let m = config.input_dim;
        if h.fractional_bits != params.fractional_bits {
            return Err(malformed("fractional bits differ from the verifier's"));
        }
        if h.input_dim as usize != m
            || h.hidden.len() != config.hidden.len()
            || h.hidden.iter().zip(&config.hidden).any(|(&a, &b)| a as usize != b)
        {
            return Err(malformed("network shape differs from the verifier's configuration"));
        }
        if n == 0 || h.samples as usize != n || self.digests.sample_count() != n {
            return Err(malformed("sample counts disagree"));
        }
        let kind_matches = matches!(
            (&self.digests, h.mode),
            (DigestTable::Basic(_), Mode::Basic) | (DigestTable::UniqueValue(_), Mode::UniqueValue)
        );
        if !kind_matches {
            return Err(malformed("digest table does not match the proof mode"));
        }
        if self.s1.scale != 2 || self.s2.scale != 2 {
            return Err(malformed("error aggregates must have scale 2"));
        }
        match &self.digests {
            DigestTable::Basic(d) => {
                for s in d {
                    check_sample_digest(s, m)?;
                }
            }
            DigestTable::UniqueValue(v) => {
                if v.features.iter().any(|e| !e.commitment.has_left())
                    || v.labels.iter().any(|e| !(e.commitment.has_left() && e.commitment.has_right()))
                {
                    return Err(malformed("dictionary entry lacks a required group form"));
                }
                if v.samples.iter().any(|s| s.features.len() != m) {
                    return Err(malformed("wrong number of feature indices"));
                }
                for s in self.digests.resolve()? {
                    check_sample_digest(&s, m)?;
                }
            }
        }
        let d1 = config.first_width();
        let dl = config.last_width();
        for w in &self.witnesses {
            if w.z.len() != d1 || w.z_hat.len() != d1 || w.delta_l.len() != dl {
                return Err(malformed("witness entry counts disagree with the network"));
            }
            if w.z.iter().chain(&w.z_hat).any(|s| !split_scales(s, 2)) {
                return Err(malformed("first-layer sums must have scale 2"));
            }
            if w.delta_l.iter().any(|d| d.scale != 4) {
                return Err(malformed("last-layer error signals must have scale 4"));
            }
            if w.delta_o_opening.is_some_and(|d| d.scale != 2) {
                return Err(malformed("output error opening must have scale 2"));
            }
            if !w.delta_o.has_right() {
                return Err(malformed("output error commitment lacks its G2 form"));
            }
        }
        if self.numerators.rows() != m || self.numerators.cols() != d1 {
            return Err(malformed("increment numerator matrix has the wrong shape"));
        }
        if self.numerators.as_slice().iter().any(|s| !split_scales(s, 2)) {
            return Err(malformed("increment numerators must have scale 2"));
        }
        Ok(())
    }
}

fn split_scales(s: &SplitSum, scale: u8) -> bool {
    s.pos_sum.scale == scale && s.neg_sum.scale == scale && s.total.scale == scale
}

fn check_sample_digest(s: &SampleDigest, m: usize) -> Result<(), ProtocolError> {
    if s.features.len() != m || s.feature_signs.len() != m {
        return Err(malformed("wrong number of feature commitments"));
    }
    if s.features.iter().any(|c| !c.has_left()) {
        return Err(malformed("feature commitment lacks its G1 form"));
    }
    if !(s.label.has_left() && s.label.has_right()) {
        return Err(malformed("label commitment needs both group forms"));
    }
    Ok(())
}
