//! Hashing, key stretching, key combination and secret storage.
//!
//! One hash (SHA-256) is used everywhere. Every use site prepends its own
//! ASCII domain tag from [`tags`], so a digest computed for one purpose can
//! never be replayed as a digest for another.

use std::fmt;

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;
use zeroize::Zeroize;

use crate::error::{Error, Result};

pub const DIGEST_LEN: usize = 32;

/// Domain-separation tags, one per hash use site.
pub mod tags {
    pub const RS1: &[u8] = b"itschan/rs1";
    pub const RS2: &[u8] = b"itschan/rs2";
    pub const RS2_NONCES_X: &[u8] = b"itschan/rs2-nonces-x";
    pub const RS3: &[u8] = b"itschan/rs3";
    pub const SMP_SECRET: &[u8] = b"itschan/smp-secret";
    pub const SMP_PROOF: &[u8] = b"itschan/smp-proof";
    pub const FINGERPRINT: &[u8] = b"itschan/fingerprint";
    pub const OAEP_LABEL: &[u8] = b"itschan/oaep";
    /// Public identifier of a secret, safe to print or log.
    pub const KEY_ID: &[u8] = b"itschan/key-id";
    /// Running hash over every frame a session sends or receives.
    pub const TRANSCRIPT: &[u8] = b"itschan/transcript";
}

/// A 32-byte SHA-256 output. Equality is constant time.
#[derive(Clone, Copy, Serialize, Deserialize)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        to_hex(&self.0)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|_| Error::InvalidParameter(format!("digest must be 32 bytes, got {}", bytes.len())))?;
        Ok(Digest(arr))
    }
}

impl PartialEq for Digest {
    fn eq(&self, other: &Self) -> bool {
        ct_equal(&self.0, &other.0)
    }
}

impl Eq for Digest {}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_hex(s: &str) -> Result<Vec<u8>> {
    if s.len() % 2 != 0 {
        return Err(Error::Malformed("odd-length hex".into()));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| Error::Malformed(format!("bad hex at {i}")))
        })
        .collect()
}

pub fn hash(input: &[u8]) -> Digest {
    Digest(Sha256::digest(input).into())
}

/// `hash(tag ∥ parts[0] ∥ parts[1] ∥ …)`.
pub fn tagged_hash(tag: &[u8], parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    h.update(tag);
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// PBKDF2-HMAC-SHA256 with a single 32-byte output block.
pub fn kdf_stretch(secret: &[u8], salt: &[u8], iterations: u32) -> Result<Digest> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("kdf iterations must be >= 1".into()));
    }
    let mut out = [0u8; DIGEST_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(secret, salt, iterations, &mut out);
    Ok(Digest(out))
}

/// RS3 = hash(tag ∥ rs1 ∥ rs2).
///
/// A hash of the tagged concatenation rather than an XOR: knowing RS1 gives
/// no bit-for-bit handle on RS3 from partial RS2 knowledge.
pub fn combine_keys(rs1: &SecretBuffer, rs2: &SecretBuffer) -> Result<SecretBuffer> {
    let a = rs1.expose()?;
    let b = rs2.expose()?;
    if a.len() != DIGEST_LEN || b.len() != DIGEST_LEN {
        return Err(Error::InvalidParameter("key inputs must be 32 bytes".into()));
    }
    let d = tagged_hash(tags::RS3, &[a, b]);
    Ok(SecretBuffer::new(SecretLabel::RS3, d.0.to_vec()))
}

/// True iff `a` and `b` have the same length and contents. The comparison
/// touches every byte regardless of where the first difference sits.
pub fn ct_equal(a: &[u8], b: &[u8]) -> bool {
    a.ct_eq(b).into()
}

pub fn random_bytes(n: usize, rng: &mut (impl RngCore + CryptoRng)) -> Result<Vec<u8>> {
    if n == 0 {
        return Err(Error::InvalidParameter("random_bytes: n must be >= 1".into()));
    }
    let mut out = vec![0u8; n];
    rng.fill_bytes(&mut out);
    Ok(out)
}

/// Names of the secrets a party holds. Each label occurs at most once per
/// party per session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SecretLabel {
    X,
    X2,
    RA1,
    RB1,
    RS1,
    RS2,
    RS3,
    KA1priv,
    KB1priv,
}

impl fmt::Display for SecretLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Secret octets with an erasure flag.
///
/// After [`SecretBuffer::erase`] every byte is zero and [`SecretBuffer::expose`]
/// fails with [`Error::UseAfterErase`]. Erasure is logical plus best-effort
/// zeroization; copies the allocator or the OS made earlier are out of reach.
pub struct SecretBuffer {
    bytes: Vec<u8>,
    erased: bool,
    label: SecretLabel,
}

impl SecretBuffer {
    pub fn new(label: SecretLabel, bytes: Vec<u8>) -> Self {
        SecretBuffer { bytes, erased: false, label }
    }

    pub fn label(&self) -> SecretLabel {
        self.label
    }

    pub fn is_erased(&self) -> bool {
        self.erased
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn expose(&self) -> Result<&[u8]> {
        if self.erased {
            return Err(Error::UseAfterErase(self.label));
        }
        Ok(&self.bytes)
    }

    /// Raw storage, readable even after erasure (then all zero).
    pub fn raw(&self) -> &[u8] {
        &self.bytes
    }

    /// Idempotent.
    pub fn erase(&mut self) {
        self.bytes.as_mut_slice().zeroize();
        self.erased = true;
    }

    /// Public identifier: hash(KEY_ID tag ∥ label ∥ bytes).
    pub fn key_id(&self) -> Result<Digest> {
        let b = self.expose()?;
        Ok(tagged_hash(tags::KEY_ID, &[self.label.to_string().as_bytes(), b]))
    }

    /// Copy into a fresh buffer under another label.
    pub fn duplicate_as(&self, label: SecretLabel) -> Result<SecretBuffer> {
        Ok(SecretBuffer::new(label, self.expose()?.to_vec()))
    }
}

/// Consuming form of [`SecretBuffer::erase`].
pub fn secure_erase(mut buf: SecretBuffer) -> SecretBuffer {
    buf.erase();
    buf
}

impl Drop for SecretBuffer {
    fn drop(&mut self) {
        self.bytes.zeroize();
    }
}

impl fmt::Debug for SecretBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretBuffer")
            .field("label", &self.label)
            .field("len", &self.bytes.len())
            .field("erased", &self.erased)
            .finish()
    }
}

/// Randomness for a party: a seeded ChaCha20 stream for reproducible
/// simulations, or the operating system's generator.
pub enum EntropySource {
    Seeded(Box<ChaCha20Rng>),
    System,
}

impl EntropySource {
    pub fn seeded(seed: u64) -> Self {
        EntropySource::Seeded(Box::new(ChaCha20Rng::seed_from_u64(seed)))
    }

    pub fn system() -> Self {
        EntropySource::System
    }

    /// Independent child source. Seeded sources derive the child seed from
    /// their own stream, so forks are reproducible too.
    pub fn fork(&mut self) -> Self {
        match self {
            EntropySource::Seeded(r) => {
                let mut seed = [0u8; 32];
                r.fill_bytes(&mut seed);
                EntropySource::Seeded(Box::new(ChaCha20Rng::from_seed(seed)))
            }
            EntropySource::System => EntropySource::System,
        }
    }
}

impl RngCore for EntropySource {
    fn next_u32(&mut self) -> u32 {
        match self {
            EntropySource::Seeded(r) => r.next_u32(),
            EntropySource::System => rand::rngs::OsRng.next_u32(),
        }
    }

    fn next_u64(&mut self) -> u64 {
        match self {
            EntropySource::Seeded(r) => r.next_u64(),
            EntropySource::System => rand::rngs::OsRng.next_u64(),
        }
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        match self {
            EntropySource::Seeded(r) => r.fill_bytes(dest),
            EntropySource::System => rand::rngs::OsRng.fill_bytes(dest),
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

impl CryptoRng for EntropySource {}
