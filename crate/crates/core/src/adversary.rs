//! Seeded misbehaving servers: each attack turns an honest instance into a
//! tampered `(ΔW', π')` pair, and each tamper case breaks one specific part
//! of an otherwise honest proof.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{CodecParams, ScaledInt, SplitSum};
use crate::dnn::commit::{commit_backward, commit_eval, error_from_sum, NeuronFault};
use crate::dnn::synthetic::linearly_separable;
use crate::dnn::train::{certified_rounds, train_to_convergence, TrainHooks, TrainOutcome, WeightConstraint};
use crate::dnn::{Activation, DnnError, NetworkConfig, QuantizedDataset, QuantizedWeights, Weights};
use crate::pairing::{genkey, GroupElement, PairingError, PublicKey, SecretKey, SECURITY_BITS};
use crate::protocol::{
    certify, certify_outcome, setup, verify, DatasetSignature, FailedStep, ForwardState, Mode, Proof, ProtocolError,
    VerificationReport, VerifyContext,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("unknown attack kind {0:?}")]
    UnknownKind(String),
    #[error("attack parameter out of range: {0}")]
    Parameter(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Dnn(#[from] DnnError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    ByzantineNeurons,
    WrongE1KeepProof,
    WrongE1RebuildProof,
    WrongE2,
    CompressLowPrecision,
    CompressPrune,
    ArbitraryWeights,
    PoisonCrafted,
}

impl AttackKind {
    pub const ALL: [AttackKind; 8] = [
        AttackKind::ByzantineNeurons,
        AttackKind::WrongE1KeepProof,
        AttackKind::WrongE1RebuildProof,
        AttackKind::WrongE2,
        AttackKind::CompressLowPrecision,
        AttackKind::CompressPrune,
        AttackKind::ArbitraryWeights,
        AttackKind::PoisonCrafted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::ByzantineNeurons => "byzantine-neurons",
            AttackKind::WrongE1KeepProof => "wrong-E1-keep-proof",
            AttackKind::WrongE1RebuildProof => "wrong-E1-rebuild-proof",
            AttackKind::WrongE2 => "wrong-E2",
            AttackKind::CompressLowPrecision => "compress-lowprec",
            AttackKind::CompressPrune => "compress-prune",
            AttackKind::ArbitraryWeights => "arbitrary-weights",
            AttackKind::PoisonCrafted => "poison-crafted",
        }
    }

    /// Steps at which the verifier may legitimately catch this attack.
    pub fn expected_steps(self) -> &'static [FailedStep] {
        match self {
            AttackKind::ByzantineNeurons | AttackKind::WrongE1KeepProof | AttackKind::WrongE1RebuildProof => {
                &[FailedStep::Step2E1]
            }
            AttackKind::WrongE2 => &[FailedStep::Step3E2],
            AttackKind::CompressLowPrecision | AttackKind::CompressPrune | AttackKind::ArbitraryWeights => {
                &[FailedStep::Step2Z, FailedStep::Step2E1]
            }
            AttackKind::PoisonCrafted => &FailedStep::ALL,
        }
    }

    pub fn is_compression(self) -> bool {
        matches!(self, AttackKind::CompressLowPrecision | AttackKind::CompressPrune)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| AdversaryError::UnknownKind(s.into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Mantissa bits kept by `compress-lowprec` (8 or 16).
    pub bits: u32,
    /// Fraction of weights zeroed by `compress-prune`, in `[0.10, 0.25]`.
    pub prune_fraction: f64,
    /// Fraction of hidden neurons faulted per sample by `byzantine-neurons`.
    pub neuron_fraction: f64,
    /// Fraction of weights perturbed by `arbitrary-weights`.
    pub weight_fraction: f64,
    /// Magnitude multiplier of `poison-crafted`.
    pub boost: i128,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, seed: u64) -> Self {
        Self { kind, bits: 8, prune_fraction: 0.1, neuron_fraction: 0.01, weight_fraction: 0.1, boost: 10, seed }
    }

    pub fn validate(&self) -> Result<(), AdversaryError> {
        let bad = |m: String| Err(AdversaryError::Parameter(m));
        if self.kind == AttackKind::CompressLowPrecision && !matches!(self.bits, 8 | 16) {
            return bad(format!("bits must be 8 or 16, got {}", self.bits));
        }
        if self.kind == AttackKind::CompressPrune && !(0.10..=0.25).contains(&self.prune_fraction) {
            return bad(format!("prune fraction {} outside [0.10, 0.25]", self.prune_fraction));
        }
        if !(self.neuron_fraction > 0.0 && self.neuron_fraction <= 1.0) {
            return bad(format!("neuron fraction {}", self.neuron_fraction));
        }
        if !(self.weight_fraction > 0.0 && self.weight_fraction <= 1.0) {
            return bad(format!("weight fraction {}", self.weight_fraction));
        }
        if self.boost < 2 {
            return bad(format!("boost {}", self.boost));
        }
        Ok(())
    }

    /// Short parameter description, e.g. `k=8`.
    pub fn label(&self) -> String {
        match self.kind {
            AttackKind::CompressLowPrecision => format!("{}(k={})", self.kind, self.bits),
            AttackKind::CompressPrune => format!("{}({:.2})", self.kind, self.prune_fraction),
            k => k.name().to_string(),
        }
    }
}

/// What the server holds after training and certifying: enough to mount
/// any attack, but no secret key.
#[derive(Clone, Debug)]
pub struct ServerRun {
    pub config: NetworkConfig,
    pub params: CodecParams,
    pub data: QuantizedDataset,
    pub initial: QuantizedWeights,
    pub outcome: TrainOutcome,
    pub update: QuantizedWeights,
    pub proof: Proof,
    pub mode: Mode,
}

impl ServerRun {
    /// Trains from `initial` to convergence and certifies the result.
    pub fn train(
        config: &NetworkConfig,
        params: &CodecParams,
        data: QuantizedDataset,
        initial: QuantizedWeights,
        mode: Mode,
    ) -> Result<Self, AdversaryError> {
        let outcome = train_to_convergence(config, params, &initial, &data, &TrainHooks::default())?;
        let proof = certify_outcome(config, params, &data, &outcome, mode)?;
        Ok(Self {
            config: config.clone(),
            params: params.clone(),
            update: outcome.update(),
            data,
            initial,
            outcome,
            proof,
            mode,
        })
    }

    pub fn e1(&self) -> f64 {
        self.outcome.e1(&self.params)
    }

    /// The same run with the proof rebuilt in another mode.
    pub fn with_mode(&self, mode: Mode) -> Result<Self, AdversaryError> {
        let mut other = self.clone();
        other.proof = certify_outcome(&self.config, &self.params, &self.data, &self.outcome, mode)?;
        other.mode = mode;
        Ok(other)
    }

    /// Error the verifier would compute for `W_0 + update`.
    pub fn verifier_side_error(&self, update: &QuantizedWeights) -> Result<f64, AdversaryError> {
        let w = self.initial.checked_add(update).ok_or_else(|| AdversaryError::Parameter("update overflows".into()))?;
        self.error_at(&w)
    }

    fn error_at(&self, w: &QuantizedWeights) -> Result<f64, AdversaryError> {
        let eval = commit_eval(&self.config, &self.params, w, &self.data, None)?;
        Ok(error_from_sum(eval.error_sum, self.data.len(), &self.params))
    }

    fn certify_rounds_at(&self, w: &QuantizedWeights, hooks: &TrainHooks) -> Result<Proof, AdversaryError> {
        let (r1, r2) = certified_rounds(&self.config, &self.params, w, &self.data, hooks)?;
        Ok(certify(&self.config, &self.params, &self.data, &r1, &r2, self.mode)?)
    }
}

/// Everything the three parties hold after an honest run.
#[derive(Clone, Debug)]
pub struct Instance {
    pub run: ServerRun,
    pub secret_key: SecretKey,
    pub public_key: PublicKey,
    pub signature: DatasetSignature,
}

impl Deref for Instance {
    type Target = ServerRun;

    fn deref(&self) -> &ServerRun {
        &self.run
    }
}

impl Instance {
    /// Signs `data`, trains from a seeded initial model and certifies.
    pub fn honest(
        config: &NetworkConfig,
        params: &CodecParams,
        data: QuantizedDataset,
        seed: u64,
        mode: Mode,
    ) -> Result<Self, AdversaryError> {
        let (secret_key, public_key) = genkey(SECURITY_BITS, seed)?;
        let signature = setup(&data, &secret_key, &public_key)?;
        let initial = Weights::random(config, params, seed).quantize(params).map_err(DnnError::from)?;
        let run = ServerRun::train(config, params, data, initial, mode)?;
        Ok(Self { run, secret_key, public_key, signature })
    }

    pub fn context(&self) -> VerifyContext<'_> {
        VerifyContext { config: &self.config, params: &self.params, public_key: &self.public_key }
    }

    pub fn verify(&self, update: &QuantizedWeights, proof: &Proof) -> Result<VerificationReport, ProtocolError> {
        verify(&self.context(), &self.initial, update, proof, &self.signature)
    }

    pub fn with_mode(&self, mode: Mode) -> Result<Self, AdversaryError> {
        Ok(Self { run: self.run.with_mode(mode)?, ..self.clone() })
    }
}

/// The output of an attack.
#[derive(Clone, Debug, PartialEq)]
pub struct Tampered {
    pub update: QuantizedWeights,
    pub proof: Proof,
    /// `E1'`, the error the tampered proof claims.
    pub claimed_e1: f64,
    /// `E1`, the error of `W_0 + ΔW'` as the verifier computes it.
    pub reference_e1: f64,
    /// For compression attacks, the error change caused by compressing the
    /// initial model, before any retraining.
    pub pre_retrain_diff: Option<f64>,
}

impl Tampered {
    pub fn e1_diff(&self) -> f64 {
        (self.claimed_e1 - self.reference_e1).abs()
    }
}

/// Replaces a seeded selection of hidden activations with uniform `[-1, 1]` values.
struct RandomNeuronFaults {
    /// `faults[sample]` lists `(layer, neuron, value)`.
    faults: Vec<Vec<(usize, usize, f64)>>,
}

impl RandomNeuronFaults {
    fn new(config: &NetworkConfig, samples: usize, fraction: f64, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let total: usize = config.hidden.iter().sum();
        let per_sample = ((total as f64 * fraction).ceil() as usize).clamp(1, total);
        let faults = (0..samples)
            .map(|_| {
                sample_indices(&mut rng, total, per_sample)
                    .into_iter()
                    .map(|flat| {
                        let (mut layer, mut neuron) = (0, flat);
                        while neuron >= config.hidden[layer] {
                            neuron -= config.hidden[layer];
                            layer += 1;
                        }
                        (layer, neuron, rng.gen_range(-1.0..=1.0))
                    })
                    .collect()
            })
            .collect();
        Self { faults }
    }
}

impl NeuronFault for RandomNeuronFaults {
    fn perturb(&self, sample: usize, layer: usize, activations: &mut [f64]) {
        for &(l, k, v) in &self.faults[sample] {
            if l == layer {
                activations[k] = v;
            }
        }
    }
}

/// Keeps `bits` significant bits of every weight's binary mantissa.
pub struct TruncateMantissa {
    pub bits: u32,
}

impl WeightConstraint for TruncateMantissa {
    fn apply(&self, w: &mut Weights<f64>) {
        let drop = 53 - self.bits.clamp(1, 53);
        let mask = !((1u64 << drop) - 1);
        for x in w.iter_mut() {
            *x = f64::from_bits(x.to_bits() & mask);
        }
    }
}

/// Holds a fixed set of weights at zero.
pub struct PruneMask {
    pub zeroed: Vec<usize>,
}

impl PruneMask {
    pub fn random(weights: usize, fraction: f64, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let count = ((weights as f64 * fraction).round() as usize).clamp(1, weights);
        let mut zeroed = sample_indices(&mut rng, weights, count).into_vec();
        zeroed.sort_unstable();
        Self { zeroed }
    }
}

impl WeightConstraint for PruneMask {
    fn apply(&self, w: &mut Weights<f64>) {
        let mut next = self.zeroed.iter().peekable();
        for (i, x) in w.iter_mut().enumerate() {
            if next.peek() == Some(&&i) {
                *x = 0.0;
                next.next();
            }
        }
    }
}

fn random_offset(rng: &mut ChaCha20Rng, params: &CodecParams) -> i128 {
    let unit = 1i128 << (2 * params.fractional_bits);
    rng.gen_range(1..=unit)
}

pub fn apply_attack(spec: &AttackSpec, run: &ServerRun) -> Result<Tampered, AdversaryError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let params = &run.params;
    let n = run.data.len();
    let honest_e1 = run.e1();
    let honest = |proof: Proof, claimed: f64| -> Result<Tampered, AdversaryError> {
        Ok(Tampered {
            reference_e1: run.verifier_side_error(&run.update)?,
            update: run.update.clone(),
            proof,
            claimed_e1: claimed,
            pre_retrain_diff: None,
        })
    };
    match spec.kind {
        AttackKind::WrongE1KeepProof => {
            let mut proof = run.proof.clone();
            proof.s1.value += random_offset(&mut rng, params);
            let claimed = error_from_sum(proof.s1.value, n, params);
            honest(proof, claimed)
        }
        AttackKind::WrongE2 => {
            let mut proof = run.proof.clone();
            proof.s2.value += random_offset(&mut rng, params);
            honest(proof, honest_e1)
        }
        AttackKind::WrongE1RebuildProof => {
            let (proof, _) = rebuild_with_shifted_outputs(run, spec.seed)?;
            let claimed = error_from_sum(proof.s1.value, n, params);
            honest(proof, claimed)
        }
        AttackKind::ByzantineNeurons => {
            let faults = RandomNeuronFaults::new(&run.config, n, spec.neuron_fraction, spec.seed);
            let hooks = TrainHooks { constraint: None, fault: Some(&faults) };
            let proof = run.certify_rounds_at(&run.outcome.converged, &hooks)?;
            let claimed = error_from_sum(proof.s1.value, n, params);
            honest(proof, claimed)
        }
        AttackKind::CompressLowPrecision | AttackKind::CompressPrune => {
            let truncate = TruncateMantissa { bits: spec.bits };
            let prune = PruneMask::random(run.initial.len(), spec.prune_fraction, spec.seed);
            let constraint: &dyn WeightConstraint =
                if spec.kind == AttackKind::CompressPrune { &prune } else { &truncate };
            let hooks = TrainHooks { constraint: Some(constraint), fault: None };
            let outcome = train_to_convergence(&run.config, params, &run.initial, &run.data, &hooks)?;
            let update = outcome.update();
            let proof = certify_outcome(&run.config, params, &run.data, &outcome, run.mode)?;
            let pre = (run.error_at(&outcome.initial)? - run.error_at(&run.initial)?).abs();
            Ok(Tampered {
                reference_e1: run.verifier_side_error(&update)?,
                claimed_e1: outcome.e1(params),
                update,
                proof,
                pre_retrain_diff: Some(pre),
            })
        }
        AttackKind::ArbitraryWeights => {
            let mut update = run.update.clone();
            let total = update.len();
            let count = ((total as f64 * spec.weight_fraction).ceil() as usize).clamp(1, total);
            let chosen = sample_indices(&mut rng, total, count).into_vec();
            let unit = 1i128 << params.fractional_bits;
            for (i, w) in update.iter_mut().enumerate() {
                if chosen.contains(&i) {
                    let mut noise = 0;
                    while noise == 0 {
                        noise = rng.gen_range(-unit / 2..=unit / 2);
                    }
                    *w += noise;
                }
            }
            Ok(Tampered {
                reference_e1: run.verifier_side_error(&update)?,
                claimed_e1: honest_e1,
                update,
                proof: run.proof.clone(),
                pre_retrain_diff: None,
            })
        }
        AttackKind::PoisonCrafted => {
            let update = run.update.map(|&d| -spec.boost * d);
            let w = run
                .initial
                .checked_add(&update)
                .ok_or_else(|| AdversaryError::Parameter("poisoned model overflows".into()))?;
            let proof = run.certify_rounds_at(&w, &TrainHooks::default())?;
            Ok(Tampered {
                reference_e1: run.verifier_side_error(&update)?,
                claimed_e1: error_from_sum(proof.s1.value, n, params),
                update,
                proof,
                pre_retrain_diff: None,
            })
        }
    }
}

/// Shifts every claimed output and rebuilds everything downstream of it so
/// that the proof is internally consistent around the wrong residuals.
/// Also returns the forward state the prover claims for the converged model.
pub fn rebuild_with_shifted_outputs(run: &ServerRun, seed: u64) -> Result<(Proof, ForwardState), AdversaryError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let (config, params) = (&run.config, &run.params);
    let mut eval = run.outcome.round1.eval.clone();
    let spread = 1i128 << params.fractional_bits.saturating_sub(4);
    let mut error_sum = 0i128;
    for ((f, q), s) in eval.forward.iter_mut().zip(&mut eval.residual).zip(&run.data.samples) {
        let mut shift = 0;
        while shift == 0 {
            shift = rng.gen_range(-spread..=spread);
        }
        f.fo += shift;
        *q = s.label - f.fo;
        error_sum += *q * *q;
    }
    eval.error_sum = error_sum;
    let round1 = commit_backward(config, params, &run.data, eval)?;
    let round2 = commit_eval(config, params, &round1.next, &run.data, None)?;
    let proof = certify(config, params, &run.data, &round1, &round2, run.mode)?;
    let state = ForwardState { weights: round1.eval.weights.clone(), forward: round1.eval.forward.clone(), error_sum };
    Ok((proof, state))
}

/// The case analysis behind soundness: each case tampers with one part of
/// the model or proof.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TamperCase {
    /// Wrong first-layer update, honest proof.
    WrongUpdateHonestProof,
    /// Wrong model with a proof built for it, honest error aggregates.
    RebuiltProofHonestErrors,
    WrongE1,
    WrongE2,
    WrongZ,
    WrongZHat,
    WrongDeltaO,
    WrongDeltaL,
    WrongIncrement,
    /// Training on data scaled by a constant while committing to the scaled values.
    ScaledData,
}

impl TamperCase {
    pub const ALL: [TamperCase; 10] = [
        TamperCase::WrongUpdateHonestProof,
        TamperCase::RebuiltProofHonestErrors,
        TamperCase::WrongE1,
        TamperCase::WrongE2,
        TamperCase::WrongZ,
        TamperCase::WrongZHat,
        TamperCase::WrongDeltaO,
        TamperCase::WrongDeltaL,
        TamperCase::WrongIncrement,
        TamperCase::ScaledData,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TamperCase::WrongUpdateHonestProof => "wrong-update",
            TamperCase::RebuiltProofHonestErrors => "rebuilt-proof",
            TamperCase::WrongE1 => "wrong-E1",
            TamperCase::WrongE2 => "wrong-E2",
            TamperCase::WrongZ => "wrong-z",
            TamperCase::WrongZHat => "wrong-zhat",
            TamperCase::WrongDeltaO => "wrong-delta-o",
            TamperCase::WrongDeltaL => "wrong-delta-L",
            TamperCase::WrongIncrement => "wrong-increment",
            TamperCase::ScaledData => "scaled-data",
        }
    }

    pub fn expected_step(self) -> FailedStep {
        match self {
            TamperCase::WrongUpdateHonestProof | TamperCase::WrongZ => FailedStep::Step2Z,
            TamperCase::RebuiltProofHonestErrors | TamperCase::WrongE1 => FailedStep::Step2E1,
            TamperCase::WrongE2 => FailedStep::Step3E2,
            TamperCase::WrongZHat => FailedStep::Step3ZHat,
            TamperCase::WrongDeltaO => FailedStep::Step3DeltaO,
            TamperCase::WrongDeltaL => FailedStep::Step3DeltaL,
            TamperCase::WrongIncrement => FailedStep::Step3DeltaW,
            // the synopsis binds the commitments, so the signature check catches it
            TamperCase::ScaledData => FailedStep::Step1Signature,
        }
    }
}

fn bump(s: &mut SplitSum, by: i128) {
    s.pos_sum.value += by;
    s.total.value += by;
}

/// Applies a tamper case, returning the update and proof the verifier receives.
pub fn apply_tamper(case: TamperCase, run: &ServerRun, seed: u64) -> Result<(QuantizedWeights, Proof), AdversaryError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = run.data.len();
    let d1 = run.config.first_width();
    let mut update = run.update.clone();
    let mut proof = run.proof.clone();
    let sample = rng.gen_range(0..n);
    match case {
        TamperCase::WrongUpdateHonestProof => {
            let j = rng.gen_range(0..run.config.input_dim);
            let k = rng.gen_range(0..d1);
            // a feature column that is zero everywhere cannot expose the change
            let j = (0..run.config.input_dim)
                .map(|o| (j + o) % run.config.input_dim)
                .find(|&j| run.data.samples.iter().any(|s| s.features[j] != 0))
                .unwrap_or(j);
            *update.hidden[0].get_mut(j, k) += 1 + rng.gen_range(0..1 << 10);
        }
        TamperCase::RebuiltProofHonestErrors => {
            let total = run.outcome.converged.len();
            let width = run.outcome.converged.output.len();
            let start = rng.gen_range(0..width);
            let step = 1i128 << (run.params.fractional_bits - 2);
            // a change that leaves every output alone (dead or clamped neurons)
            // gives a different model with genuinely equal errors; skip those.
            // Output weights first, then the hidden layers.
            let order = (0..width).map(|o| total - width + (start + o) % width).chain(0..total - width);
            let mut chosen = None;
            'search: for k in order {
                for delta in [step, -step] {
                    let mut w = run.outcome.converged.clone();
                    *w.iter_mut().nth(k).expect("index in range") += delta;
                    let rebuilt = run.certify_rounds_at(&w, &TrainHooks::default())?;
                    let moved = rebuilt.s1 != proof.s1;
                    if moved || chosen.is_none() {
                        chosen = Some((w, rebuilt));
                    }
                    if moved {
                        break 'search;
                    }
                }
            }
            let (w, rebuilt) = chosen.expect("output layer is non-empty");
            update = w.checked_sub(&run.initial).expect("in range");
            proof = Proof { s1: proof.s1, s2: proof.s2, ..rebuilt };
        }
        TamperCase::WrongE1 => proof.s1.value += 1,
        TamperCase::WrongE2 => proof.s2.value += 1,
        TamperCase::WrongZ => bump(&mut proof.witnesses[sample].z[rng.gen_range(0..d1)], 1),
        TamperCase::WrongZHat => bump(&mut proof.witnesses[sample].z_hat[rng.gen_range(0..d1)], 1),
        TamperCase::WrongDeltaO => {
            // needs a sample whose true δo is nonzero
            let target = (0..n)
                .map(|o| (sample + o) % n)
                .find(|&i| run.outcome.round1.backward[i].delta_o != 0)
                .unwrap_or(sample);
            proof.witnesses[target].delta_o = GroupElement::exp_right_int(0);
        }
        TamperCase::WrongDeltaL => {
            let w = &mut proof.witnesses[sample];
            let k = rng.gen_range(0..w.delta_l.len());
            w.delta_l[k] = ScaledInt { value: w.delta_l[k].value + 1, scale: 4 };
        }
        TamperCase::WrongIncrement => {
            let a = &mut proof.numerators;
            let cells = a.rows() * a.cols();
            let start = rng.gen_range(0..cells);
            let idx = (0..cells).map(|o| (start + o) % cells).find(|&i| a.as_slice()[i].total.value != 0);
            match idx {
                Some(idx) => {
                    let s = &mut a.as_mut_slice()[idx];
                    *s = SplitSum {
                        pos_sum: ScaledInt { value: -s.neg_sum.value, scale: 2 },
                        neg_sum: ScaledInt { value: -s.pos_sum.value, scale: 2 },
                        total: ScaledInt { value: -s.total.value, scale: 2 },
                        neg_count: s.neg_count,
                    };
                }
                // first layer never moved; negating zero would change nothing
                None => bump(&mut a.as_mut_slice()[start], 1),
            }
        }
        TamperCase::ScaledData => {
            let factor = 2 + rng.gen_range(0..3) as i128;
            let mut fake = run.data.clone();
            for s in &mut fake.samples {
                for x in &mut s.features {
                    *x *= factor;
                }
            }
            let outcome = train_to_convergence(&run.config, &run.params, &run.initial, &fake, &TrainHooks::default())?;
            update = outcome.update();
            proof = certify_outcome(&run.config, &run.params, &fake, &outcome, run.mode)?;
        }
    }
    Ok((update, proof))
}

/// One network/dataset shape used by the soundness matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixConfig {
    pub id: String,
    pub config: NetworkConfig,
    pub samples: usize,
}

impl MatrixConfig {
    pub fn new(id: &str, input_dim: usize, hidden: Vec<usize>, activation: Activation, samples: usize) -> Self {
        Self { id: id.into(), config: NetworkConfig::new(input_dim, hidden, activation), samples }
    }

    pub fn instance(&self, params: &CodecParams, seed: u64, mode: Mode) -> Result<Instance, AdversaryError> {
        let data = linearly_separable(self.samples, self.config.input_dim, seed).quantize(params)?;
        Instance::honest(&self.config, params, data, seed, mode)
    }
}

/// The three shapes the soundness matrix runs by default, with the
/// threshold tightened to `1e-6` so that training runs well past its first
/// few epochs.
pub fn standard_matrix_configs() -> Vec<MatrixConfig> {
    let mut configs = vec![
        MatrixConfig::new("A", 4, vec![8], Activation::Sigmoid, 40),
        MatrixConfig::new("B", 3, vec![4, 4], Activation::Tanh, 30),
        MatrixConfig::new("C", 6, vec![8], Activation::Relu, 50),
    ];
    for mc in &mut configs {
        mc.config.threshold = 1e-6;
    }
    configs
}

/// One line of the soundness report.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixRow {
    pub kind: String,
    pub config_id: String,
    pub trial: usize,
    pub report: VerificationReport,
    pub e1_diff: Option<f64>,
    pub pre_retrain_diff: Option<f64>,
    /// Whether the outcome is what the attack kind predicts.
    pub as_expected: bool,
}

impl MatrixRow {
    pub const CSV_HEADER: &'static str = "kind,config-id,trial,verdict,failed_step,|E1'-E1|,pre-retrain |E1'-E1|";

    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        format!(
            "{},{},{},{},{},{},{}",
            self.kind,
            self.config_id,
            self.trial,
            self.report.verdict().name(),
            self.report.failed_step_name(),
            num(self.e1_diff),
            num(self.pre_retrain_diff)
        )
    }
}

/// The default attack list of the matrix: every kind, with both truncation
/// widths and the two ends of the pruning range.
pub fn matrix_attacks() -> Vec<AttackSpec> {
    let mut specs = Vec::new();
    for kind in AttackKind::ALL {
        match kind {
            AttackKind::CompressLowPrecision => {
                for bits in [8, 16] {
                    specs.push(AttackSpec { bits, ..AttackSpec::new(kind, 0) });
                }
            }
            AttackKind::CompressPrune => {
                for f in [0.10, 0.25] {
                    specs.push(AttackSpec { prune_fraction: f, ..AttackSpec::new(kind, 0) });
                }
            }
            _ => specs.push(AttackSpec::new(kind, 0)),
        }
    }
    specs
}

/// Builds an honest instance per `(config, trial)`, checks it is accepted
/// (control row), then runs every attack against it.
pub fn run_soundness_matrix(
    configs: &[MatrixConfig],
    trials: usize,
    attacks: &[AttackSpec],
    params: &CodecParams,
    mode: Mode,
    base_seed: u64,
) -> Result<Vec<MatrixRow>, AdversaryError> {
    let mut rows = Vec::new();
    for (ci, mc) in configs.iter().enumerate() {
        for trial in 0..trials {
            let seed = base_seed ^ ((ci as u64) << 32) ^ trial as u64;
            let inst = mc.instance(params, seed, mode)?;
            let control = inst.verify(&inst.update, &inst.proof)?;
            rows.push(MatrixRow {
                kind: "honest".into(),
                config_id: mc.id.clone(),
                trial,
                as_expected: control.is_accept(),
                report: control,
                e1_diff: None,
                pre_retrain_diff: None,
            });
            for (ai, spec) in attacks.iter().enumerate() {
                let spec = AttackSpec { seed: seed.wrapping_mul(31).wrapping_add(ai as u64), ..spec.clone() };
                let t = apply_attack(&spec, &inst)?;
                let report = inst.verify(&t.update, &t.proof)?;
                let as_expected = report.failed_step().is_some_and(|s| spec.kind.expected_steps().contains(&s));
                rows.push(MatrixRow {
                    kind: spec.label(),
                    config_id: mc.id.clone(),
                    trial,
                    report,
                    e1_diff: Some(t.e1_diff()),
                    pre_retrain_diff: t.pre_retrain_diff,
                    as_expected,
                });
            }
        }
    }
    Ok(rows)
}
