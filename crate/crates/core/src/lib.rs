//! Verifiable outsourced training of fully connected networks.
//!
//! A data owner signs a dataset ([`protocol::setup`]), a server trains to
//! convergence and certifies the result ([`protocol::certify`]), and a client
//! holding only the public key, the initial model and the update checks the
//! proof ([`protocol::verify`]) without retraining.

pub mod adversary;
pub mod artifact;
pub mod codec;
pub mod dnn;
pub mod pairing;
pub mod protocol;

pub use adversary::{apply_attack, AttackKind, AttackSpec, Instance, ServerRun, TamperCase};
pub use artifact::{Artifact, ArtifactError, ArtifactKind, InitialModel, ModelUpdate};
pub use codec::{CodecError, CodecParams, ScaledInt, SignFlag, SplitSum};
pub use dnn::train::{train_to_convergence, TrainHooks, TrainOutcome};
pub use dnn::{Activation, Dataset, DnnError, NetworkConfig, QuantizedDataset, QuantizedWeights, Sample, Weights};
pub use pairing::{genkey, GroupElement, PairingError, PublicKey, Scalar, SecretKey, SECURITY_BITS};
pub use protocol::{
    certify, certify_outcome, setup, verify, DatasetSignature, FailedStep, Mode, Proof, ProtocolError, Verdict,
    VerificationReport, VerifyContext,
};
