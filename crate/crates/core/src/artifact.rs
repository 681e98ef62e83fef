//! Binary file format shared by every party.
//!
//! ```text
//! "VDL1" | version u8 | kind u8 | body
//! ```
//!
//! Integers are big-endian. A scalar is 32 bytes. A [`ScaledInt`] is the
//! 32-byte residue `[v] mod p` followed by its scale byte, and decodes by
//! the centered lift. Group elements are their canonical compressed bytes
//! behind a `u16` length; sequences whose length the header does not fix
//! carry a `u32` count.

use num_bigint::BigUint;
use thiserror::Error;

use crate::codec::{centered_lift, ScaledInt, SignFlag, SplitSum, MAX_SCALE};
use crate::dnn::{Matrix, QuantizedWeights, Weights};
use crate::pairing::{forms_agree_all, GroupElement, PublicKey, Scalar, SecretKey, SCALAR_BYTES};
use crate::protocol::{
    DatasetSignature, DictEntry, DigestTable, FailedStep, Failure, Mode, Proof, ProofHeader, SampleDigest,
    SampleIndices, SampleWitness, ValueDictionary, VerificationReport,
};

pub const MAGIC: &[u8; 4] = b"VDL1";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArtifactKind {
    SecretKey = 1,
    PublicKey = 2,
    Signature = 3,
    Proof = 4,
    InitialModel = 5,
    ModelUpdate = 6,
    Report = 7,
}

impl ArtifactKind {
    pub fn from_code(code: u8) -> Option<Self> {
        use ArtifactKind::*;
        [SecretKey, PublicKey, Signature, Proof, InitialModel, ModelUpdate, Report]
            .into_iter()
            .find(|k| *k as u8 == code)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArtifactError {
    #[error("not a VDL1 artifact")]
    Magic,
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("expected a {expected:?} artifact, found type byte {found}")]
    Kind { expected: ArtifactKind, found: u8 },
    #[error("truncated artifact")]
    Truncated,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid artifact: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ArtifactError {
    ArtifactError::Invalid(msg.into())
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("sequence longer than u32::MAX"));
    }

    fn scalar(&mut self, s: &Scalar) {
        self.buf.extend_from_slice(&s.to_bytes());
    }

    fn scaled(&mut self, v: &ScaledInt) {
        self.scalar(&Scalar::from_i128(v.value));
        self.u8(v.scale);
    }

    fn split(&mut self, s: &SplitSum) {
        self.scaled(&s.pos_sum);
        self.scaled(&s.neg_sum);
        self.scaled(&s.total);
        self.u32(s.neg_count);
    }

    fn element(&mut self, e: &GroupElement) {
        let bytes = e.to_bytes();
        self.u16(bytes.len() as u16);
        self.buf.extend_from_slice(&bytes);
    }

    fn string(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

pub struct Reader<'a> {
    rest: &'a [u8],
    /// Elements carrying both forms; their agreement is checked once at the end.
    dual: Vec<GroupElement>,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        if self.rest.len() < n {
            return Err(ArtifactError::Truncated);
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ArtifactError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ArtifactError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    /// A count, sanity-bounded by the bytes left (each item takes at least `min` bytes).
    fn len(&mut self, min: usize) -> Result<usize, ArtifactError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min) > self.rest.len() {
            return Err(ArtifactError::Truncated);
        }
        Ok(n)
    }

    fn scalar(&mut self) -> Result<Scalar, ArtifactError> {
        Scalar::from_bytes(self.take(SCALAR_BYTES)?).map_err(|e| invalid(e.to_string()))
    }

    fn scaled(&mut self) -> Result<ScaledInt, ArtifactError> {
        let residue = self.scalar()?;
        let scale = self.u8()?;
        if scale == 0 || scale > MAX_SCALE {
            return Err(invalid(format!("scale {scale}")));
        }
        let p: BigUint = scalar_field_order();
        let value = centered_lift(&residue.to_biguint(), &p)
            .ok_or_else(|| invalid("scaled integer outside the supported range"))?;
        Ok(ScaledInt { value, scale })
    }

    fn split(&mut self) -> Result<SplitSum, ArtifactError> {
        Ok(SplitSum { pos_sum: self.scaled()?, neg_sum: self.scaled()?, total: self.scaled()?, neg_count: self.u32()? })
    }

    fn element(&mut self) -> Result<GroupElement, ArtifactError> {
        let n = self.u16()? as usize;
        let e = GroupElement::from_bytes_unpaired(self.take(n)?).map_err(|e| invalid(e.to_string()))?;
        if e.has_left() && e.has_right() {
            self.dual.push(e);
        }
        Ok(e)
    }

    fn sign(&mut self) -> Result<SignFlag, ArtifactError> {
        let b = self.u8()?;
        SignFlag::from_byte(b).ok_or_else(|| invalid(format!("sign byte {b}")))
    }

    fn string(&mut self) -> Result<String, ArtifactError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| invalid("detail is not UTF-8"))
    }
}

fn scalar_field_order() -> BigUint {
    // p - 1 encodes as the largest canonical scalar
    Scalar::from_i128(-1).to_biguint() + 1u32
}

/// A value with a canonical artifact encoding.
pub trait Artifact: Sized {
    const KIND: ArtifactKind;

    fn write_body(&self, w: &mut Writer);

    fn read_body(r: &mut Reader) -> Result<Self, ArtifactError>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u8(FORMAT_VERSION);
        w.u8(Self::KIND as u8);
        self.write_body(&mut w);
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, ArtifactError> {
        let mut r = Reader { rest: bytes, dual: Vec::new() };
        if r.take(4).map_err(|_| ArtifactError::Magic)? != MAGIC {
            return Err(ArtifactError::Magic);
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(ArtifactError::Version(version));
        }
        let kind = r.u8()?;
        if kind != Self::KIND as u8 {
            return Err(ArtifactError::Kind { expected: Self::KIND, found: kind });
        }
        let value = Self::read_body(&mut r)?;
        if !r.rest.is_empty() {
            return Err(ArtifactError::Trailing(r.rest.len()));
        }
        if !forms_agree_all(&r.dual) {
            return Err(invalid("G1 and G2 forms of an element disagree"));
        }
        Ok(value)
    }
}

/// Reads the artifact kind from a header without decoding the body.
pub fn peek_kind(bytes: &[u8]) -> Result<ArtifactKind, ArtifactError> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(ArtifactError::Magic);
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(ArtifactError::Version(bytes[4]));
    }
    ArtifactKind::from_code(bytes[5]).ok_or_else(|| invalid(format!("unknown type byte {}", bytes[5])))
}

impl Artifact for SecretKey {
    const KIND: ArtifactKind = ArtifactKind::SecretKey;

    fn write_body(&self, w: &mut Writer) {
        w.scalar(&self.secret);
    }

    fn read_body(r: &mut Reader) -> Result<Self, ArtifactError> {
        Ok(SecretKey { secret: r.scalar()? })
    }
}

impl Artifact for PublicKey {
    const KIND: ArtifactKind = ArtifactKind::PublicKey;

    fn write_body(&self, w: &mut Writer) {
        w.u16(self.security_bits);
        w.element(&self.v);
    }

    fn read_body(r: &mut Reader) -> Result<Self, ArtifactError> {
        let security_bits = r.u16()?;
        let v = r.element()?;
        if !(v.has_left() && v.has_right()) {
            return Err(invalid("public value needs both group forms"));
        }
        Ok(PublicKey { security_bits, v })
    }
}

impl Artifact for DatasetSignature {
    const KIND: ArtifactKind = ArtifactKind::Signature;

    fn write_body(&self, w: &mut Writer) {
        w.element(&self.gamma);
    }

    fn read_body(r: &mut Reader) -> Result<Self, ArtifactError> {
        Ok(DatasetSignature { gamma: r.element()? })
    }
}

fn write_weights(w: &mut Writer, weights: &QuantizedWeights) {
    let first = weights.hidden.first().map_or(0, |m| m.rows());
    w.u32(first as u32);
    w.len(weights.hidden.len());
    for m in &weights.hidden {
        w.u32(m.cols() as u32);
    }
    for x in weights.iter() {
        w.scaled(&ScaledInt { value: *x, scale: 1 });
    }
}

fn read_weights(r: &mut Reader) -> Result<QuantizedWeights, ArtifactError> {
    let input = r.u32()? as usize;
    let layers = r.len(4)?;
    let widths = (0..layers).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
    if layers == 0 || input == 0 || widths.contains(&0) {
        return Err(invalid("empty layer"));
    }
    let mut weight = || -> Result<i128, ArtifactError> {
        let v = r.scaled()?;
        if v.scale != 1 {
            return Err(invalid("weights must have scale 1"));
        }
        Ok(v.value)
    };
    let mut hidden = Vec::with_capacity(layers);
    let mut rows = input;
    for &cols in &widths {
        let data = (0..rows * cols).map(|_| weight()).collect::<Result<Vec<_>, _>>()?;
        hidden.push(Matrix::from_vec(rows, cols, data).map_err(|e| invalid(e.to_string()))?);
        rows = cols;
    }
    let output = (0..rows).map(|_| weight()).collect::<Result<Vec<_>, _>>()?;
    Ok(Weights { hidden, output })
}

/// `W_0` as published by the client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InitialModel(pub QuantizedWeights);

/// `ΔW` as returned by the server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelUpdate(pub QuantizedWeights);

impl Artifact for InitialModel {
    const KIND: ArtifactKind = ArtifactKind::InitialModel;

    fn write_body(&self, w: &mut Writer) {
        write_weights(w, &self.0);
    }

    fn read_body(r: &mut Reader) -> Result<Self, ArtifactError> {
        read_weights(r).map(InitialModel)
    }
}

impl Artifact for ModelUpdate {
    const KIND: ArtifactKind = ArtifactKind::ModelUpdate;

    fn write_body(&self, w: &mut Writer) {
        write_weights(w, &self.0);
    }

    fn read_body(r: &mut Reader) -> Result<Self, ArtifactError> {
        read_weights(r).map(ModelUpdate)
    }
}

impl Artifact for VerificationReport {
    const KIND: ArtifactKind = ArtifactKind::Report;

    fn write_body(&self, w: &mut Writer) {
        match &self.failure {
            None => w.u8(0),
            Some(f) => {
                let code = FailedStep::ALL.iter().position(|s| *s == f.step).expect("listed step");
                w.u8(code as u8 + 1);
                w.string(&f.detail);
            }
        }
    }

    fn read_body(r: &mut Reader) -> Result<Self, ArtifactError> {
        let code = r.u8()?;
        if code == 0 {
            return Ok(VerificationReport { failure: None });
        }
        let step =
            *FailedStep::ALL.get(code as usize - 1).ok_or_else(|| invalid(format!("failed step code {code}")))?;
        Ok(VerificationReport { failure: Some(Failure { step, detail: r.string()? }) })
    }
}

impl Artifact for Proof {
    const KIND: ArtifactKind = ArtifactKind::Proof;

    fn write_body(&self, w: &mut Writer) {
        let h = &self.header;
        w.u8(h.mode.code());
        w.u32(h.fractional_bits);
        w.u32(h.samples);
        w.u32(h.input_dim);
        w.len(h.hidden.len());
        for &d in &h.hidden {
            w.u32(d);
        }
        w.scaled(&self.s1);
        w.scaled(&self.s2);
        match &self.digests {
            DigestTable::Basic(digests) => {
                for d in digests {
                    for c in d.features.iter().chain([&d.label]) {
                        w.element(c);
                    }
                    for s in d.feature_signs.iter().chain([&d.label_sign]) {
                        w.u8(s.to_byte());
                    }
                }
            }
            DigestTable::UniqueValue(dict) => {
                for table in [&dict.features, &dict.labels] {
                    w.len(table.len());
                    for e in table {
                        w.element(&e.commitment);
                        w.u8(e.sign.to_byte());
                    }
                }
                for s in &dict.samples {
                    for &i in s.features.iter().chain([&s.label]) {
                        w.u32(i);
                    }
                }
            }
        }
        for sw in &self.witnesses {
            for s in sw.z.iter().chain(&sw.z_hat) {
                w.split(s);
            }
            w.element(&sw.delta_o);
            for d in &sw.delta_l {
                w.scaled(d);
            }
            match &sw.delta_o_opening {
                None => w.u8(0),
                Some(d) => {
                    w.u8(1);
                    w.scaled(d);
                }
            }
        }
        for s in self.numerators.as_slice() {
            w.split(s);
        }
    }

    fn read_body(r: &mut Reader) -> Result<Self, ArtifactError> {
        let code = r.u8()?;
        let mode = Mode::from_code(code).ok_or_else(|| invalid(format!("mode byte {code}")))?;
        let fractional_bits = r.u32()?;
        let samples = r.u32()?;
        let input_dim = r.u32()?;
        let layers = r.len(4)?;
        let hidden = (0..layers).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if layers == 0 || samples == 0 {
            return Err(invalid("empty proof header"));
        }
        let header = ProofHeader { mode, fractional_bits, samples, input_dim, hidden };
        let (n, m) = (samples as usize, input_dim as usize);
        let (d1, dl) = (header.hidden[0] as usize, *header.hidden.last().expect("non-empty") as usize);
        // every sample takes at least its first-layer sums
        if n.saturating_mul(d1).saturating_mul(2 * 3 * (SCALAR_BYTES + 1)) > r.rest.len() {
            return Err(ArtifactError::Truncated);
        }
        let s1 = r.scaled()?;
        let s2 = r.scaled()?;
        let digests = match mode {
            Mode::Basic => DigestTable::Basic(
                (0..n)
                    .map(|_| {
                        let mut commitments = (0..=m).map(|_| r.element()).collect::<Result<Vec<_>, _>>()?;
                        let mut signs = (0..=m).map(|_| r.sign()).collect::<Result<Vec<_>, _>>()?;
                        let label = commitments.pop().expect("m + 1 entries");
                        let label_sign = signs.pop().expect("m + 1 entries");
                        Ok(SampleDigest { features: commitments, label, feature_signs: signs, label_sign })
                    })
                    .collect::<Result<_, ArtifactError>>()?,
            ),
            Mode::UniqueValue => {
                let table = |r: &mut Reader| -> Result<Vec<DictEntry>, ArtifactError> {
                    let count = r.len(3)?;
                    (0..count).map(|_| Ok(DictEntry { commitment: r.element()?, sign: r.sign()? })).collect()
                };
                let features = table(r)?;
                let labels = table(r)?;
                let samples = (0..n)
                    .map(|_| {
                        let features = (0..m).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
                        Ok(SampleIndices { features, label: r.u32()? })
                    })
                    .collect::<Result<_, ArtifactError>>()?;
                DigestTable::UniqueValue(ValueDictionary { features, labels, samples })
            }
        };
        let witnesses = (0..n)
            .map(|_| {
                let z = (0..d1).map(|_| r.split()).collect::<Result<Vec<_>, _>>()?;
                let z_hat = (0..d1).map(|_| r.split()).collect::<Result<Vec<_>, _>>()?;
                let delta_o = r.element()?;
                let delta_l = (0..dl).map(|_| r.scaled()).collect::<Result<Vec<_>, _>>()?;
                let delta_o_opening = match r.u8()? {
                    0 => None,
                    1 => Some(r.scaled()?),
                    b => return Err(invalid(format!("opening flag {b}"))),
                };
                Ok(SampleWitness { z, z_hat, delta_o, delta_l, delta_o_opening })
            })
            .collect::<Result<_, ArtifactError>>()?;
        let cells = (0..m * d1).map(|_| r.split()).collect::<Result<Vec<_>, _>>()?;
        let numerators = Matrix::from_vec(m, d1, cells).map_err(|e| invalid(e.to_string()))?;
        Ok(Proof { header, s1, s2, digests, witnesses, numerators })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecParams;
    use crate::dnn::synthetic::{few_values, linearly_separable};
    use crate::dnn::train::{train_to_convergence, TrainHooks};
    use crate::dnn::{Activation, NetworkConfig};
    use crate::pairing::genkey;
    use crate::protocol::{certify_outcome, setup};

    fn fixture(mode: Mode) -> (PublicKey, SecretKey, DatasetSignature, QuantizedWeights, QuantizedWeights, Proof) {
        let params = CodecParams::default();
        let config = NetworkConfig::new(3, vec![3, 2], Activation::Sigmoid);
        let data = linearly_separable(6, 3, 4).quantize(&params).unwrap();
        let (sk, pk) = genkey(128, 4).unwrap();
        let sig = setup(&data, &sk, &pk).unwrap();
        let w0 = Weights::random(&config, &params, 4).quantize(&params).unwrap();
        let out = train_to_convergence(&config, &params, &w0, &data, &TrainHooks::default()).unwrap();
        let proof = certify_outcome(&config, &params, &data, &out, mode).unwrap();
        (pk, sk, sig, w0, out.update(), proof)
    }

    fn roundtrip<T: Artifact + PartialEq + std::fmt::Debug>(v: &T) {
        let bytes = v.to_bytes();
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(bytes[4], FORMAT_VERSION);
        assert_eq!(bytes[5], T::KIND as u8);
        assert_eq!(&T::from_bytes(&bytes).unwrap(), v);
        assert_eq!(peek_kind(&bytes).unwrap(), T::KIND);
    }

    #[test]
    fn every_kind_roundtrips() {
        for mode in [Mode::Basic, Mode::UniqueValue] {
            let (pk, sk, sig, w0, dw, proof) = fixture(mode);
            roundtrip(&pk);
            roundtrip(&sk);
            roundtrip(&sig);
            roundtrip(&InitialModel(w0));
            roundtrip(&ModelUpdate(dw));
            roundtrip(&proof);
        }
        roundtrip(&VerificationReport { failure: None });
        for step in FailedStep::ALL {
            roundtrip(&VerificationReport { failure: Some(Failure { step, detail: "sample 3".into() }) });
        }
    }

    #[test]
    fn header_errors() {
        let (pk, ..) = fixture(Mode::Basic);
        let bytes = pk.to_bytes();
        assert_eq!(
            SecretKey::from_bytes(&bytes),
            Err(ArtifactError::Kind { expected: ArtifactKind::SecretKey, found: 2 })
        );
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(PublicKey::from_bytes(&bad), Err(ArtifactError::Magic));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(PublicKey::from_bytes(&bad), Err(ArtifactError::Version(9)));
        assert_eq!(PublicKey::from_bytes(&bytes[..bytes.len() - 1]), Err(ArtifactError::Truncated));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(PublicKey::from_bytes(&long), Err(ArtifactError::Trailing(1)));
    }

    #[test]
    fn negative_values_use_the_field_residue() {
        let (.., mut dw, _) = fixture(Mode::Basic);
        dw.output[0] = -5;
        let bytes = ModelUpdate(dw.clone()).to_bytes();
        // the last output weight record: 32-byte residue then scale
        let n = dw.output.len();
        let at = bytes.len() - n * 33;
        let residue = BigUint::from_bytes_be(&bytes[at..at + 32]);
        assert_eq!(residue, scalar_field_order() - 5u32);
        assert_eq!(bytes[at + 32], 1);
    }

    #[test]
    fn disagreeing_forms_are_rejected() {
        let pk = PublicKey { security_bits: 128, v: GroupElement::exp_g_int(7) };
        let mut bytes = pk.to_bytes();
        let swapped = GroupElement::exp_g_int(7).left_only().to_bytes();
        let other = GroupElement::exp_g_int(8).left_only().to_bytes();
        let at = bytes.windows(swapped.len()).position(|w| w == swapped.as_slice()).unwrap();
        bytes[at..at + other.len()].copy_from_slice(&other);
        assert!(matches!(PublicKey::from_bytes(&bytes), Err(ArtifactError::Invalid(_))));
    }

    #[test]
    fn dictionary_proof_is_smaller_on_repeated_values() {
        let params = CodecParams::default();
        let config = NetworkConfig::new(4, vec![3], Activation::Sigmoid);
        let data = few_values(20, 4, &[-0.5, 0.25, 1.0], 2).quantize(&params).unwrap();
        let w0 = Weights::random(&config, &params, 2).quantize(&params).unwrap();
        let out = train_to_convergence(&config, &params, &w0, &data, &TrainHooks::default()).unwrap();
        let basic = certify_outcome(&config, &params, &data, &out, Mode::Basic).unwrap();
        let unique = certify_outcome(&config, &params, &data, &out, Mode::UniqueValue).unwrap();
        assert!(unique.to_bytes().len() < basic.to_bytes().len());
    }
}
