//! The four protocol algorithms: key generation (in [`crate::pairing`]),
//! dataset signing, proof construction and verification.

mod certify;
mod proof;
mod setup;
mod verify;

pub use certify::{certify, certify_outcome};
pub use proof::{DictEntry, DigestTable, Mode, Proof, ProofHeader, SampleIndices, SampleWitness, ValueDictionary};
pub use setup::{
    commit_feature, commit_label, digest_dataset, digest_sample, setup, synopsis, DatasetSignature, SampleDigest,
};
pub use verify::{
    verify, verify_step1, verify_step2, verify_step3, FailedStep, Failure, ForwardState, Verdict, VerificationReport,
    VerifyContext,
};

use thiserror::Error;

use crate::codec::CodecError;
use crate::dnn::DnnError;
use crate::pairing::PairingError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("malformed proof: {0}")]
    Malformed(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("secret key does not match the public key")]
    KeyMismatch,
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Dnn(#[from] DnnError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

pub(crate) fn malformed(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed(msg.into())
}
