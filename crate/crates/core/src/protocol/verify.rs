use std::collections::HashMap;
use std::fmt;

use ark_bls12_381::G1Affine;

use crate::codec::{CodecParams, SignFlag, SplitSum};
use crate::dnn::commit::{
    backward_from_last_signals, forward_from_first_sums, last_layer_coefficients, output_slope, updated_weights,
    CommitForward,
};
use crate::dnn::train::errors_converged;
use crate::dnn::{Matrix, NetworkConfig, QuantizedWeights};
use crate::pairing::{BatchCheck, GroupElement, PairingEquation, PublicKey, Scalar};

use super::proof::Proof;
use super::setup::{DatasetSignature, SampleDigest};
use super::{malformed, ProtocolError};

/// Verification steps in the order they run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FailedStep {
    Step1Signature,
    Step2Z,
    Step2E1,
    Step3DeltaO,
    Step3DeltaL,
    Step3DeltaW,
    Step3ZHat,
    Step3E2,
    Step4Convergence,
}

impl FailedStep {
    pub const ALL: [FailedStep; 9] = [
        FailedStep::Step1Signature,
        FailedStep::Step2Z,
        FailedStep::Step2E1,
        FailedStep::Step3DeltaO,
        FailedStep::Step3DeltaL,
        FailedStep::Step3DeltaW,
        FailedStep::Step3ZHat,
        FailedStep::Step3E2,
        FailedStep::Step4Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailedStep::Step1Signature => "step1-signature",
            FailedStep::Step2Z => "step2-z",
            FailedStep::Step2E1 => "step2-E1",
            FailedStep::Step3DeltaO => "step3-delta-o",
            FailedStep::Step3DeltaL => "step3-delta-L",
            FailedStep::Step3DeltaW => "step3-deltaw",
            FailedStep::Step3ZHat => "step3-zhat",
            FailedStep::Step3E2 => "step3-E2",
            FailedStep::Step4Convergence => "step4-convergence",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for FailedStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub step: FailedStep,
    /// Indices of the first failing sample/neuron, if any.
    pub detail: String,
}

impl Failure {
    fn new(step: FailedStep, detail: impl Into<String>) -> Self {
        Self { step, detail: detail.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationReport {
    pub failure: Option<Failure>,
}

impl VerificationReport {
    pub fn verdict(&self) -> Verdict {
        if self.failure.is_none() {
            Verdict::Accept
        } else {
            Verdict::Reject
        }
    }

    pub fn is_accept(&self) -> bool {
        self.failure.is_none()
    }

    pub fn failed_step(&self) -> Option<FailedStep> {
        self.failure.as_ref().map(|f| f.step)
    }

    /// `"none"` on accept.
    pub fn failed_step_name(&self) -> &'static str {
        self.failed_step().map_or("none", FailedStep::name)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            None => write!(f, "accept"),
            Some(x) if x.detail.is_empty() => write!(f, "reject {}", x.step),
            Some(x) => write!(f, "reject {} ({})", x.step, x.detail),
        }
    }
}

#[derive(Clone, Copy)]
pub struct VerifyContext<'a> {
    pub config: &'a NetworkConfig,
    pub params: &'a CodecParams,
    pub public_key: &'a PublicKey,
}

/// What the verifier knows after checking one round's first-layer sums.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardState {
    pub weights: QuantizedWeights,
    pub forward: Vec<CommitForward>,
    pub error_sum: i128,
}

/// `Π_i e(g^d_i, v) = e(γ, g)`.
pub fn verify_step1(digests: &[SampleDigest], signature: &DatasetSignature, public_key: &PublicKey) -> bool {
    let d = digests.iter().fold(Scalar::zero(), |acc, s| acc.add(&s.synopsis()));
    let mut eq = PairingEquation::new();
    // e(g^d, v) = e(v, g^d), and e(γ, g) has the public exponent 1 on g
    eq.lhs.pair_with_known_scalar(&public_key.v, &d).expect("public key has both forms");
    if eq.rhs.pair_with_known(&signature.gamma, 1).is_err() {
        return false;
    }
    eq.holds()
}

/// Splits the terms of a dot product with public right operands into the
/// positive and negative product classes, dropping zero exponents.
fn sign_classes<'a>(
    terms: impl Iterator<Item = (&'a GroupElement, SignFlag, i128)>,
) -> [Vec<(&'a GroupElement, i128)>; 2] {
    let mut classes = [Vec::new(), Vec::new()];
    for (c, flag, k) in terms {
        if k != 0 {
            let negative = (flag == SignFlag::Negative) == (k > 0);
            classes[usize::from(negative)].push((c, k));
        }
    }
    classes
}

/// Plaintext checks of a split dot product, then both partial products as
/// batch equations. `false` means a plaintext check failed.
fn batch_split_sum<'a>(
    batch: &mut BatchCheck,
    terms: impl Iterator<Item = (&'a GroupElement, SignFlag, i128)>,
    sum: &SplitSum,
) -> bool {
    if !sum.is_consistent() {
        return false;
    }
    let classes = sign_classes(terms);
    if sum.neg_count as usize > classes[1].len() {
        return false;
    }
    for (class, total) in classes.iter().zip([sum.pos_sum.value, sum.neg_sum.value]) {
        batch.begin();
        for (c, k) in class {
            if batch.add_left(c, &Scalar::from_i128(*k)).is_err() {
                return false;
            }
        }
        batch.add_left_generator(&Scalar::from_i128(-total));
    }
    true
}

/// The same checks as [`batch_split_sum`], evaluated on their own.
fn split_sum_holds<'a>(terms: impl Iterator<Item = (&'a GroupElement, SignFlag, i128)>, sum: &SplitSum) -> bool {
    let mut batch = BatchCheck::from_entropy();
    batch_split_sum(&mut batch, terms, sum) && batch.holds()
}

fn first_layer_terms<'a>(
    d: &'a SampleDigest,
    w1: &'a Matrix<i128>,
    k: usize,
) -> impl Iterator<Item = (&'a GroupElement, SignFlag, i128)> + 'a {
    d.features.iter().zip(&d.feature_signs).enumerate().map(move |(j, (c, &flag))| (c, flag, *w1.get(j, k)))
}

/// `Π_i e(g^[q_i], g^[q_i]) = e(g, g)^[S]` with `g^[q_i] = g^[f(y_i)] g^[-f(o_i)]`.
///
/// By bilinearity the product expands to
/// `Π_y e(g^y, g^y)^(n_y) · e(g^y, g)^(-2 Σ f(o_i)) · e(g, g)^(Σ f(o_i)²)`,
/// grouped over distinct label commitments, so the pairing count is the
/// number of distinct labels plus one rather than `N`.
fn error_aggregate_holds(digests: &[SampleDigest], forward: &[CommitForward], claimed: i128) -> bool {
    let mut labels: HashMap<G1Affine, (GroupElement, u64, Scalar)> = HashMap::new();
    let mut squares = Scalar::zero();
    for (d, f) in digests.iter().zip(forward) {
        let Some(key) = d.label.left() else {
            return false;
        };
        let fo = Scalar::from_i128(f.fo);
        let e = labels.entry(*key).or_insert((d.label, 0, Scalar::zero()));
        e.1 += 1;
        e.2 = e.2.add(&fo);
        squares = squares.add(&fo.mul(&fo));
    }
    let mut eq = PairingEquation::new();
    for (label, count, fo_sum) in labels.into_values() {
        let left = label.left_only();
        if eq.lhs.pair(&left.pow(&Scalar::from_u64(count)), &label).is_err() {
            return false;
        }
        let k = Scalar::from_i128(-2).mul(&fo_sum);
        eq.lhs.pair_with_known_scalar(&left, &k).expect("left form present");
    }
    eq.lhs.target_scalar(&squares);
    eq.rhs.target(claimed);
    eq.holds()
}

/// First-layer sums, forward pass and error aggregate for one round.
fn check_round(
    digests: &[SampleDigest],
    sums: &[&[SplitSum]],
    ctx: &VerifyContext,
    w: &QuantizedWeights,
    claimed_error: i128,
    steps: (FailedStep, FailedStep),
) -> Result<ForwardState, Failure> {
    let (sum_step, error_step) = steps;
    let w1 = &w.hidden[0];
    let mut batch = BatchCheck::from_entropy();
    let mut forward = Vec::with_capacity(digests.len());
    for (i, (d, s)) in digests.iter().zip(sums).enumerate() {
        for (k, sum) in s.iter().enumerate() {
            if !batch_split_sum(&mut batch, first_layer_terms(d, w1, k), sum) {
                return Err(Failure::new(sum_step, format!("sample {i}, neuron {k}")));
            }
        }
        let z1: Vec<i128> = s.iter().map(|t| t.total.value).collect();
        let fwd = forward_from_first_sums(ctx.config, ctx.params, w, &z1, None)
            .map_err(|e| Failure::new(sum_step, format!("sample {i}: {e}")))?;
        forward.push(fwd);
    }
    if !batch.holds() {
        let detail = digests
            .iter()
            .zip(sums)
            .enumerate()
            .find_map(|(i, (d, s))| {
                let k = s.iter().enumerate().position(|(k, sum)| !split_sum_holds(first_layer_terms(d, w1, k), sum))?;
                Some(format!("sample {i}, neuron {k}"))
            })
            .unwrap_or_default();
        return Err(Failure::new(sum_step, detail));
    }
    if !error_aggregate_holds(digests, &forward, claimed_error) {
        return Err(Failure::new(error_step, ""));
    }
    Ok(ForwardState { weights: w.clone(), forward, error_sum: claimed_error })
}

/// Step 2: the converged model's first-layer sums and `E1`.
pub fn verify_step2(
    ctx: &VerifyContext,
    proof: &Proof,
    digests: &[SampleDigest],
    converged: &QuantizedWeights,
) -> Result<ForwardState, Failure> {
    let sums: Vec<&[SplitSum]> = proof.witnesses.iter().map(|w| w.z.as_slice()).collect();
    check_round(digests, &sums, ctx, converged, proof.s1.value, (FailedStep::Step2Z, FailedStep::Step2E1))
}

/// Group checks on one sample's output error signal.
struct OutputCheck {
    slope: i128,
    fo: i128,
    /// `δo` as recovered from `δL` or opened, once known.
    delta_o: Option<i128>,
}

impl OutputCheck {
    /// `g^[δo] = g^[-s_o q]` with `g^[q] = g^[f(y)] g^[-f(o)]`, in `G2`.
    fn add_signal(&self, batch: &mut BatchCheck, label: &GroupElement, committed: &GroupElement) {
        let s = Scalar::from_i128(self.slope);
        batch.begin();
        batch.add_right(label, &s.neg()).expect("label commitments carry both forms");
        batch.add_right_generator(&s.mul(&Scalar::from_i128(self.fo)));
        batch.add_right(committed, &Scalar::from_i128(-1)).expect("validated G2 form");
    }

    /// The commitment opens to the recovered `δo`.
    fn add_opening(&self, batch: &mut BatchCheck, committed: &GroupElement) {
        if let Some(d) = self.delta_o {
            batch.begin();
            batch.add_right(committed, &Scalar::from_u64(1)).expect("validated G2 form");
            batch.add_right_generator(&Scalar::from_i128(-d));
        }
    }

    /// Evaluates both checks on their own, in protocol order.
    fn failure(&self, i: usize, label: &GroupElement, committed: &GroupElement) -> Option<Failure> {
        let mut batch = BatchCheck::from_entropy();
        self.add_signal(&mut batch, label, committed);
        if !batch.holds() {
            return Some(Failure::new(FailedStep::Step3DeltaO, format!("sample {i}")));
        }
        let mut batch = BatchCheck::from_entropy();
        self.add_opening(&mut batch, committed);
        (!batch.holds()).then(|| Failure::new(FailedStep::Step3DeltaL, format!("sample {i}")))
    }
}

/// Step 3: error signals, first-layer increments, the update, and the
/// post-update sums and `E2`. Returns the post-update state.
pub fn verify_step3(
    ctx: &VerifyContext,
    proof: &Proof,
    digests: &[SampleDigest],
    state: &ForwardState,
) -> Result<ForwardState, Failure> {
    let (config, params) = (ctx.config, ctx.params);
    let w = &state.weights;
    let n = digests.len();
    let mut checks: Vec<OutputCheck> = Vec::with_capacity(n);
    // a plaintext failure only counts once every earlier group check passed
    let first_failure = |checks: &[OutputCheck], fallback: Failure| {
        checks
            .iter()
            .enumerate()
            .find_map(|(i, c)| c.failure(i, &digests[i].label, &proof.witnesses[i].delta_o))
            .unwrap_or(fallback)
    };
    let mut deltas = Vec::with_capacity(n);
    let mut scaled = Vec::with_capacity(n);
    for (i, (fwd, witness)) in state.forward.iter().zip(&proof.witnesses).enumerate() {
        let at = |step, msg: &str| Failure::new(step, format!("sample {i}{msg}"));

        let slope = output_slope(config, params, fwd)
            .map_err(|e| first_failure(&checks, at(FailedStep::Step3DeltaO, &format!(": {e}"))))?;
        checks.push(OutputCheck { slope, fo: fwd.fo, delta_o: None });

        let coeffs = last_layer_coefficients(config, params, w, fwd)
            .map_err(|e| first_failure(&checks, at(FailedStep::Step3DeltaL, &format!(": {e}"))))?;
        let delta_l: Vec<i128> = witness.delta_l.iter().map(|d| d.value).collect();
        let opening = witness.delta_o_opening.map(|d| d.value);
        match (coeffs.iter().position(|&c| c != 0), opening) {
            (Some(k), None) => {
                // δL_k = c_k δo pins δo down; then every other δL_j must be c_j δo
                if delta_l[k] % coeffs[k] != 0 {
                    return Err(first_failure(&checks, at(FailedStep::Step3DeltaL, &format!(", neuron {k}"))));
                }
                let d = delta_l[k] / coeffs[k];
                if let Some(j) = coeffs.iter().zip(&delta_l).position(|(c, l)| c.checked_mul(d) != Some(*l)) {
                    return Err(first_failure(&checks, at(FailedStep::Step3DeltaL, &format!(", neuron {j}"))));
                }
                checks[i].delta_o = Some(d);
            }
            (None, Some(d)) => {
                if let Some(j) = delta_l.iter().position(|&l| l != 0) {
                    return Err(first_failure(&checks, at(FailedStep::Step3DeltaL, &format!(", neuron {j}"))));
                }
                checks[i].delta_o = Some(d);
            }
            (Some(_), Some(_)) => {
                let f = at(FailedStep::Step3DeltaL, ": output error opening where none is due");
                return Err(first_failure(&checks, f));
            }
            (None, None) => {
                let f = at(FailedStep::Step3DeltaL, ": output error opening missing");
                return Err(first_failure(&checks, f));
            }
        }
        let (delta, e) = backward_from_last_signals(config, params, w, fwd, &delta_l)
            .map_err(|e| first_failure(&checks, at(FailedStep::Step3DeltaL, &format!(": {e}"))))?;
        deltas.push(delta);
        scaled.push(e);
    }
    let mut batch = BatchCheck::from_entropy();
    for (c, (d, witness)) in checks.iter().zip(digests.iter().zip(&proof.witnesses)) {
        c.add_signal(&mut batch, &d.label, &witness.delta_o);
        c.add_opening(&mut batch, &witness.delta_o);
    }
    if !batch.holds() {
        return Err(first_failure(&checks, Failure::new(FailedStep::Step3DeltaO, "")));
    }
    let delta_os: Vec<i128> = checks.iter().map(|c| c.delta_o.expect("set for every sample")).collect();

    let numerators = &proof.numerators;
    let increment_terms =
        |j: usize, k: usize| digests.iter().zip(&scaled).map(move |(d, e)| (&d.features[j], d.feature_signs[j], e[k]));
    let mut batch = BatchCheck::from_entropy();
    for j in 0..numerators.rows() {
        for k in 0..numerators.cols() {
            if !batch_split_sum(&mut batch, increment_terms(j, k), numerators.get(j, k)) {
                return Err(Failure::new(FailedStep::Step3DeltaW, format!("feature {j}, neuron {k}")));
            }
        }
    }
    if !batch.holds() {
        let cells = (0..numerators.rows()).flat_map(|j| (0..numerators.cols()).map(move |k| (j, k)));
        let detail = cells
            .into_iter()
            .find(|&(j, k)| !split_sum_holds(increment_terms(j, k), numerators.get(j, k)))
            .map(|(j, k)| format!("feature {j}, neuron {k}"))
            .unwrap_or_default();
        return Err(Failure::new(FailedStep::Step3DeltaW, detail));
    }
    let next =
        updated_weights(config, params, w, &state.forward, &delta_os, &deltas, &numerators.map(|s| s.total.value))
            .map_err(|e| Failure::new(FailedStep::Step3DeltaW, e.to_string()))?;

    let sums: Vec<&[SplitSum]> = proof.witnesses.iter().map(|w| w.z_hat.as_slice()).collect();
    check_round(digests, &sums, ctx, &next, proof.s2.value, (FailedStep::Step3ZHat, FailedStep::Step3E2))
}

/// Runs steps 1 to 4. `Err` means the inputs are malformed, which is
/// distinct from a rejection.
pub fn verify(
    ctx: &VerifyContext,
    initial: &QuantizedWeights,
    update: &QuantizedWeights,
    proof: &Proof,
    signature: &DatasetSignature,
) -> Result<VerificationReport, ProtocolError> {
    ctx.config.validate()?;
    if !initial.matches(ctx.config) || !update.matches(ctx.config) {
        return Err(malformed("model shape differs from the configuration"));
    }
    proof.validate(ctx.config, ctx.params)?;
    if !signature.gamma.has_left() {
        return Err(malformed("signature lacks its G1 form"));
    }
    let converged = initial.checked_add(update).ok_or_else(|| malformed("model update overflows"))?;
    let digests = proof.digests.resolve()?;
    let report = |failure| Ok(VerificationReport { failure });

    if !verify_step1(&digests, signature, ctx.public_key) {
        return report(Some(Failure::new(FailedStep::Step1Signature, "")));
    }
    let round1 = match verify_step2(ctx, proof, &digests, &converged) {
        Ok(s) => s,
        Err(f) => return report(Some(f)),
    };
    let round2 = match verify_step3(ctx, proof, &digests, &round1) {
        Ok(s) => s,
        Err(f) => return report(Some(f)),
    };
    if !errors_converged(round1.error_sum, round2.error_sum, digests.len(), ctx.config.threshold, ctx.params) {
        return report(Some(Failure::new(FailedStep::Step4Convergence, "")));
    }
    report(None)
}
