//! Bilinear group interface over BLS12-381.
//!
//! The protocol is written against a symmetric pairing `e: G x G -> G_T`.
//! BLS12-381 is asymmetric, so a [`GroupElement`] carries the same exponent
//! in `G1` (its *left* form), `G2` (its *right* form), or both. [`pair`]
//! uses whichever combination is available; since both forms share the
//! exponent, `e(g^a, g^b) = e(g, g)^(ab)` holds for any choice.
//!
//! Verification equations are evaluated through [`PairingEquation`], which
//! folds every pairing with a publicly known exponent into a single group
//! accumulator and runs one multi-Miller loop and one final exponentiation
//! per equation.

use std::collections::HashMap;
use std::sync::LazyLock;

use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{AffineRepr, CurveGroup, PrimeGroup, VariableBaseMSM};
use ark_ff::{BigInteger, Field, PrimeField, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha512};
use thiserror::Error;

/// Domain separation tag prefixed to every hash-to-scalar input.
pub const HASH_DOMAIN: &[u8] = b"VERIDL-H2S-V1";
/// The only supported security level.
pub const SECURITY_BITS: u16 = 128;

pub const SCALAR_BYTES: usize = 32;
pub const LEFT_BYTES: usize = 48;
pub const RIGHT_BYTES: usize = 96;

static GT_GENERATOR: LazyLock<PairingOutput<Bls12_381>> =
    LazyLock::new(|| Bls12_381::pairing(G1Affine::generator(), G2Affine::generator()));

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PairingError {
    #[error("unsupported security parameter {0}")]
    UnsupportedSecurity(u16),
    #[error("neither operand has the source-group form the pairing needs")]
    MissingForm,
    #[error("aggregate of an empty sequence")]
    EmptyAggregate,
    #[error("malformed encoding: {0}")]
    Encoding(String),
}

/// An element of `Z_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(pub(crate) Fr);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(Fr::zero())
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(Fr::from(v))
    }

    /// The residue `[v] = v mod p`.
    pub fn from_i128(v: i128) -> Self {
        Scalar(Fr::from(v))
    }

    pub fn to_biguint(&self) -> BigUint {
        self.0.into()
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        let bytes = self.0.into_bigint().to_bytes_be();
        let mut out = [0u8; SCALAR_BYTES];
        out[SCALAR_BYTES - bytes.len()..].copy_from_slice(&bytes);
        out
    }

    /// Parses a canonical 32-byte big-endian scalar; values `>= p` are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PairingError> {
        if bytes.len() != SCALAR_BYTES {
            return Err(PairingError::Encoding(format!("scalar of {} bytes", bytes.len())));
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= Fr::MODULUS.into() {
            return Err(PairingError::Encoding("scalar not reduced".into()));
        }
        Ok(Scalar(Fr::from_be_bytes_mod_order(bytes)))
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 + other.0)
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 * other.0)
    }

    pub fn neg(&self) -> Scalar {
        Scalar(-self.0)
    }

    pub fn inverse(&self) -> Option<Scalar> {
        self.0.inverse().map(Scalar)
    }
}

/// `g^a` for some exponent `a`, in `G1`, `G2`, or both.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupElement {
    left: Option<G1Affine>,
    right: Option<G2Affine>,
}

impl GroupElement {
    pub fn identity() -> Self {
        Self { left: Some(G1Affine::zero()), right: Some(G2Affine::zero()) }
    }

    pub fn generator() -> Self {
        Self { left: Some(G1Affine::generator()), right: Some(G2Affine::generator()) }
    }

    /// `g^a` in both source groups.
    pub fn exp_g(a: &Scalar) -> Self {
        Self { left: Some(mul_g1(a)), right: Some(mul_g2(a)) }
    }

    /// `g^a` in `G1` only.
    pub fn exp_left(a: &Scalar) -> Self {
        Self { left: Some(mul_g1(a)), right: None }
    }

    /// `g^a` in `G2` only.
    pub fn exp_right(a: &Scalar) -> Self {
        Self { left: None, right: Some(mul_g2(a)) }
    }

    /// `g^[v]` for a small signed integer, in `G1` only.
    pub fn exp_left_int(v: i128) -> Self {
        let p = mul_signed_g1(&G1Affine::generator(), v);
        Self { left: Some(p.into_affine()), right: None }
    }

    /// `g^[v]` for a small signed integer, in both source groups.
    pub fn exp_g_int(v: i128) -> Self {
        Self {
            left: Some(mul_signed_g1(&G1Affine::generator(), v).into_affine()),
            right: Some(mul_signed_g2(&G2Affine::generator(), v).into_affine()),
        }
    }

    /// `g^[v]` for a small signed integer, in `G2` only.
    pub fn exp_right_int(v: i128) -> Self {
        let p = mul_signed_g2(&G2Affine::generator(), v);
        Self { left: None, right: Some(p.into_affine()) }
    }

    pub fn left(&self) -> Option<&G1Affine> {
        self.left.as_ref()
    }

    pub fn right(&self) -> Option<&G2Affine> {
        self.right.as_ref()
    }

    pub fn has_left(&self) -> bool {
        self.left.is_some()
    }

    pub fn has_right(&self) -> bool {
        self.right.is_some()
    }

    /// Drops the `G2` form, keeping only what a left operand needs.
    pub fn left_only(&self) -> Self {
        Self { left: self.left, right: None }
    }

    /// The group law. Only forms present in both operands survive.
    pub fn combine(&self, other: &Self) -> Result<Self, PairingError> {
        let left = self.left.zip(other.left).map(|(a, b)| (a + b).into_affine());
        let right = self.right.zip(other.right).map(|(a, b)| (a + b).into_affine());
        if left.is_none() && right.is_none() {
            return Err(PairingError::MissingForm);
        }
        Ok(Self { left, right })
    }

    pub fn inverse(&self) -> Self {
        Self { left: self.left.map(|p| -p), right: self.right.map(|p| -p) }
    }

    pub fn pow(&self, k: &Scalar) -> Self {
        Self { left: self.left.map(|p| (p * k.0).into_affine()), right: self.right.map(|p| (p * k.0).into_affine()) }
    }

    /// `self * g^[v]` for a small signed integer, preserving available forms.
    pub fn shift_int(&self, v: i128) -> Self {
        Self {
            left: self.left.map(|p| (p.into_group() + mul_signed_g1(&G1Affine::generator(), v)).into_affine()),
            right: self.right.map(|p| (p.into_group() + mul_signed_g2(&G2Affine::generator(), v)).into_affine()),
        }
    }

    /// Canonical encoding: compressed `G1` form (48 bytes) followed by the
    /// compressed `G2` form (96 bytes), each present only if the element has it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LEFT_BYTES + RIGHT_BYTES);
        if let Some(p) = &self.left {
            p.serialize_compressed(&mut out).expect("writing to a Vec");
        }
        if let Some(p) = &self.right {
            p.serialize_compressed(&mut out).expect("writing to a Vec");
        }
        out
    }

    /// Parses [`Self::to_bytes`] output. An element carrying both forms must
    /// carry the same exponent in each, which is checked with one pairing.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PairingError> {
        let el = Self::from_bytes_unpaired(bytes)?;
        if !el.forms_agree() {
            return Err(PairingError::Encoding("G1 and G2 forms disagree".into()));
        }
        Ok(el)
    }

    /// [`Self::from_bytes`] without the form agreement check, for callers
    /// that check many elements at once with [`forms_agree_all`].
    pub fn from_bytes_unpaired(bytes: &[u8]) -> Result<Self, PairingError> {
        let bad = |e: ark_serialize::SerializationError| PairingError::Encoding(e.to_string());
        let el = match bytes.len() {
            LEFT_BYTES => Self { left: Some(G1Affine::deserialize_compressed(bytes).map_err(bad)?), right: None },
            RIGHT_BYTES => Self { left: None, right: Some(G2Affine::deserialize_compressed(bytes).map_err(bad)?) },
            n if n == LEFT_BYTES + RIGHT_BYTES => Self {
                left: Some(G1Affine::deserialize_compressed(&bytes[..LEFT_BYTES]).map_err(bad)?),
                right: Some(G2Affine::deserialize_compressed(&bytes[LEFT_BYTES..]).map_err(bad)?),
            },
            n => return Err(PairingError::Encoding(format!("group element of {n} bytes"))),
        };
        Ok(el)
    }

    /// Whether the `G1` and `G2` forms (when both present) share an exponent.
    pub fn forms_agree(&self) -> bool {
        match (self.left, self.right) {
            (Some(l), Some(r)) => {
                let mut eq = PairingEquation::new();
                eq.lhs.pair_raw(l, G2Affine::generator());
                eq.rhs.pair_raw(G1Affine::generator(), r);
                eq.holds()
            }
            _ => true,
        }
    }
}

/// Whether every element carrying both forms has the same exponent in each.
/// Checks `e(Σ r_i P_i, g) = e(g, Σ r_i Q_i)` for random 128-bit `r_i`, one
/// pairing equation in total.
pub fn forms_agree_all<'a>(elements: impl IntoIterator<Item = &'a GroupElement>) -> bool {
    let mut rng = ChaCha20Rng::from_seed(rand::random());
    let (mut ls, mut rs, mut ks) = (Vec::new(), Vec::new(), Vec::new());
    for e in elements {
        if let (Some(l), Some(r)) = (e.left, e.right) {
            ls.push(l);
            rs.push(r);
            ks.push(Fr::from(rng.gen::<u128>()));
        }
    }
    if ls.is_empty() {
        return true;
    }
    let (Ok(a), Ok(b)) = (G1Projective::msm(&ls, &ks), G2Projective::msm(&rs, &ks)) else {
        return false;
    };
    let mut eq = PairingEquation::new();
    eq.lhs.pair_raw(a.into_affine(), G2Affine::generator());
    eq.rhs.pair_raw(G1Affine::generator(), b.into_affine());
    eq.holds()
}

/// An element of the target group `G_T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TargetElement(PairingOutput<Bls12_381>);

impl TargetElement {
    pub fn identity() -> Self {
        TargetElement(PairingOutput::zero())
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_zero()
    }

    /// The group law of `G_T`, written multiplicatively.
    pub fn mul(&self, other: &Self) -> Self {
        TargetElement(self.0 + other.0)
    }

    pub fn pow(&self, k: &Scalar) -> Self {
        TargetElement(self.0 * k.0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.0.serialize_compressed(&mut out).expect("writing to a Vec");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PairingError> {
        PairingOutput::deserialize_compressed(bytes)
            .map(TargetElement)
            .map_err(|e| PairingError::Encoding(e.to_string()))
    }
}

/// `g^a` in both source groups.
pub fn exp_g(a: &Scalar) -> GroupElement {
    GroupElement::exp_g(a)
}

/// `e(A, B)`.
pub fn pair(a: &GroupElement, b: &GroupElement) -> Result<TargetElement, PairingError> {
    let (l, r) = operands(a, b)?;
    Ok(TargetElement(Bls12_381::pairing(l, r)))
}

/// `e(g, g)^a`.
pub fn gt_exp(a: &Scalar) -> TargetElement {
    TargetElement(*GT_GENERATOR * a.0)
}

/// Hashes `HASH_DOMAIN || bytes` with SHA-512 and reduces the 512-bit digest mod `p`.
pub fn hash_to_scalar(bytes: &[u8]) -> Scalar {
    let mut h = Sha512::new();
    h.update(HASH_DOMAIN);
    h.update(bytes);
    Scalar(Fr::from_be_bytes_mod_order(&h.finalize()))
}

/// Product of all elements.
pub fn aggregate(elements: &[GroupElement]) -> Result<GroupElement, PairingError> {
    let (first, rest) = elements.split_first().ok_or(PairingError::EmptyAggregate)?;
    rest.iter().try_fold(*first, |acc, e| acc.combine(e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    pub secret: Scalar,
}

/// `p_k = {g, G, G_T, e, v, H}`; everything except `v` is fixed by the backend.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub security_bits: u16,
    /// `v = g^s`, in both source groups.
    pub v: GroupElement,
}

/// Samples `s` uniformly from `[1, p)` with a ChaCha20 stream seeded by `seed`.
pub fn genkey(security_bits: u16, seed: u64) -> Result<(SecretKey, PublicKey), PairingError> {
    if security_bits != SECURITY_BITS {
        return Err(PairingError::UnsupportedSecurity(security_bits));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let secret = loop {
        let s = Fr::rand(&mut rng);
        if !s.is_zero() {
            break Scalar(s);
        }
    };
    let v = GroupElement::exp_g(&secret);
    Ok((SecretKey { secret }, PublicKey { security_bits, v }))
}

/// One side of a pairing-product equation.
#[derive(Clone, Debug)]
pub struct Side {
    left_acc: G1Projective,
    right_acc: G2Projective,
    constant: Fr,
    pairs: Vec<(G1Affine, G2Affine)>,
    /// Known-exponent terms whose element has both forms; folded into
    /// whichever accumulator avoids a pairing.
    flexible: Vec<(G1Affine, G2Affine, i128)>,
}

impl Default for Side {
    fn default() -> Self {
        Self {
            left_acc: G1Projective::zero(),
            right_acc: G2Projective::zero(),
            constant: Fr::zero(),
            pairs: Vec::new(),
            flexible: Vec::new(),
        }
    }
}

impl Side {
    /// Multiplies this side by `e(a, b)`.
    pub fn pair(&mut self, a: &GroupElement, b: &GroupElement) -> Result<&mut Self, PairingError> {
        let (l, r) = operands(a, b)?;
        self.pairs.push((l, r));
        Ok(self)
    }

    fn pair_raw(&mut self, l: G1Affine, r: G2Affine) -> &mut Self {
        self.pairs.push((l, r));
        self
    }

    /// Multiplies this side by `e(a, g^[k])` for a public exponent `k`.
    pub fn pair_with_known(&mut self, a: &GroupElement, k: i128) -> Result<&mut Self, PairingError> {
        if let (Some(l), Some(r)) = (a.left, a.right) {
            self.flexible.push((l, r, k));
        } else if let Some(l) = &a.left {
            self.left_acc += mul_signed_g1(l, k);
        } else if let Some(r) = &a.right {
            self.right_acc += mul_signed_g2(r, k);
        } else {
            return Err(PairingError::MissingForm);
        }
        Ok(self)
    }

    /// Multiplies this side by `e(a, g^k)` for a public field element `k`.
    pub fn pair_with_known_scalar(&mut self, a: &GroupElement, k: &Scalar) -> Result<&mut Self, PairingError> {
        if let Some(l) = &a.left {
            self.left_acc += *l * k.0;
        } else if let Some(r) = &a.right {
            self.right_acc += *r * k.0;
        } else {
            return Err(PairingError::MissingForm);
        }
        Ok(self)
    }

    /// Multiplies this side by `e(g, g)^[c]`.
    pub fn target(&mut self, c: i128) -> &mut Self {
        self.constant += Fr::from(c);
        self
    }

    pub fn target_scalar(&mut self, c: &Scalar) -> &mut Self {
        self.constant += c.0;
        self
    }
}

/// `lhs ?= rhs` where each side is a product of pairings and powers of `e(g, g)`.
#[derive(Clone, Debug, Default)]
pub struct PairingEquation {
    pub lhs: Side,
    pub rhs: Side,
}

impl PairingEquation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn holds(self) -> bool {
        let Self { lhs, rhs } = self;
        let mut left = lhs.left_acc - rhs.left_acc;
        let mut right = lhs.right_acc - rhs.right_acc;
        let constant = lhs.constant - rhs.constant;
        let mut pairs = lhs.pairs;
        pairs.extend(rhs.pairs.into_iter().map(|(l, r)| (-l, r)));
        let flexible = lhs.flexible.into_iter().chain(rhs.flexible.into_iter().map(|(l, r, k)| (-l, r, k)));
        if pairs.is_empty() && left.is_zero() && !right.is_zero() {
            for (_, r, k) in flexible {
                right += mul_signed_g2(&r, k);
            }
        } else {
            for (l, _, k) in flexible {
                left += mul_signed_g1(&l, k);
            }
        }

        // e(P, g) = 1 iff P = O, so equations with a single hidden group
        // reduce to a group identity.
        if pairs.is_empty() {
            if right.is_zero() {
                return (left + mul_centered_g1(constant)).is_zero();
            }
            if left.is_zero() {
                return (right + mul_centered_g2(constant)).is_zero();
            }
        }
        left += mul_centered_g1(constant);
        if !left.is_zero() {
            pairs.push((left.into_affine(), G2Affine::generator()));
        }
        if !right.is_zero() {
            pairs.push((G1Affine::generator(), right.into_affine()));
        }
        if pairs.is_empty() {
            return true;
        }
        let (ls, rs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Bls12_381::multi_pairing(ls, rs).is_zero()
    }
}

/// Many identity checks `Σ k_t·P_t = O` within `G1` or `G2`, folded into one
/// random linear combination per group (small-exponent batch verification).
///
/// Each equation gets a fresh 128-bit weight, so a batch containing a false
/// equation passes with probability at most `2^-128`. Equal points are merged
/// before the final multi-scalar multiplication, which makes repeated
/// commitments (few distinct data values) nearly free.
#[derive(Clone, Debug)]
pub struct BatchCheck {
    rng: ChaCha20Rng,
    weight: Fr,
    left: HashMap<G1Affine, Fr>,
    right: HashMap<G2Affine, Fr>,
}

impl BatchCheck {
    pub fn new(seed: [u8; 32]) -> Self {
        Self { rng: ChaCha20Rng::from_seed(seed), weight: Fr::zero(), left: HashMap::new(), right: HashMap::new() }
    }

    /// Seeded from the OS, so a prover cannot predict the weights.
    pub fn from_entropy() -> Self {
        Self::new(rand::random())
    }

    /// Starts a new equation.
    pub fn begin(&mut self) -> &mut Self {
        self.weight = Fr::zero();
        while self.weight.is_zero() {
            self.weight = Fr::from(self.rng.gen::<u128>());
        }
        self
    }

    /// Adds `k·a` (left form) to the current equation.
    pub fn add_left(&mut self, a: &GroupElement, k: &Scalar) -> Result<&mut Self, PairingError> {
        let p = a.left.ok_or(PairingError::MissingForm)?;
        *self.left.entry(p).or_insert_with(Fr::zero) += self.weight * k.0;
        Ok(self)
    }

    /// Adds `k·a` (right form) to the current equation.
    pub fn add_right(&mut self, a: &GroupElement, k: &Scalar) -> Result<&mut Self, PairingError> {
        let p = a.right.ok_or(PairingError::MissingForm)?;
        *self.right.entry(p).or_insert_with(Fr::zero) += self.weight * k.0;
        Ok(self)
    }

    /// Adds `k·g` in `G1`.
    pub fn add_left_generator(&mut self, k: &Scalar) -> &mut Self {
        *self.left.entry(G1Affine::generator()).or_insert_with(Fr::zero) += self.weight * k.0;
        self
    }

    /// Adds `k·g` in `G2`.
    pub fn add_right_generator(&mut self, k: &Scalar) -> &mut Self {
        *self.right.entry(G2Affine::generator()).or_insert_with(Fr::zero) += self.weight * k.0;
        self
    }

    pub fn holds(self) -> bool {
        fn msm_is_zero<G: VariableBaseMSM>(terms: HashMap<G::MulBase, G::ScalarField>) -> bool {
            let (bases, scalars): (Vec<_>, Vec<_>) = terms.into_iter().filter(|(_, k)| !k.is_zero()).unzip();
            bases.is_empty() || G::msm(&bases, &scalars).is_ok_and(|s| s.is_zero())
        }
        msm_is_zero::<G1Projective>(self.left) && msm_is_zero::<G2Projective>(self.right)
    }
}

fn operands(a: &GroupElement, b: &GroupElement) -> Result<(G1Affine, G2Affine), PairingError> {
    match (a.left, b.right, b.left, a.right) {
        (Some(l), Some(r), _, _) => Ok((l, r)),
        (_, _, Some(l), Some(r)) => Ok((l, r)),
        _ => Err(PairingError::MissingForm),
    }
}

fn mul_g1(a: &Scalar) -> G1Affine {
    mul_centered_g1(a.0).into_affine()
}

fn mul_g2(a: &Scalar) -> G2Affine {
    mul_centered_g2(a.0).into_affine()
}

fn magnitude_limbs(v: u128) -> [u64; 2] {
    [v as u64, (v >> 64) as u64]
}

/// `[v] * P`, computed from `|v|` so small negative exponents stay cheap.
fn mul_signed_g1(p: &G1Affine, v: i128) -> G1Projective {
    let m = p.mul_bigint(magnitude_limbs(v.unsigned_abs()));
    if v < 0 {
        -m
    } else {
        m
    }
}

fn mul_signed_g2(p: &G2Affine, v: i128) -> G2Projective {
    let m = p.mul_bigint(magnitude_limbs(v.unsigned_abs()));
    if v < 0 {
        -m
    } else {
        m
    }
}

/// `c * g1`, using the representative of `c` closest to zero.
fn mul_centered_g1(c: Fr) -> G1Projective {
    let g = G1Projective::generator();
    if c.into_bigint() > Fr::MODULUS_MINUS_ONE_DIV_TWO {
        -(g * (-c))
    } else {
        g * c
    }
}

fn mul_centered_g2(c: Fr) -> G2Projective {
    let g = G2Projective::generator();
    if c.into_bigint() > Fr::MODULUS_MINUS_ONE_DIV_TWO {
        -(g * (-c))
    } else {
        g * c
    }
}
