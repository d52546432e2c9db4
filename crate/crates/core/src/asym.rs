//! Ephemeral RSA key pairs for the channel that exists before the session
//! key does.
//!
//! Key transport encodings (all integers big-endian):
//!
//! ```text
//! public  = [u16 modulus bit-length][modulus, ceil(bits/8) bytes]
//!           [u16 exponent byte-length][exponent]
//! private = public
//!           [u16 k/2][p, k/2 bytes][u16 k/2][q, k/2 bytes][u16 k][d, k bytes]
//! ```
//!
//! where `k` is the modulus length in bytes. The private layout is fixed
//! width, so a 512-bit key always exports to 205 bytes and a 2048-bit key
//! to 781.
//!
//! Encryption uses OAEP-style padding with a 16-byte seed and a 16-byte label
//! check, MGF1 over SHA-256:
//!
//! ```text
//! EM = 0x00 ∥ (seed ⊕ MGF(maskedDB, 16)) ∥ maskedDB
//! DB = lhash[..16] ∥ 0x00… ∥ 0x01 ∥ M,   maskedDB = DB ⊕ MGF(seed, |DB|)
//! ```
//!
//! The short seed keeps the 512-bit test profile usable (30-byte blocks);
//! longer payloads go through [`encrypt_stream`], which pads each chunk
//! independently.

use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

use crate::codec::{to_fixed_be, Reader};
use crate::error::{Error, Result};
use crate::primitives::{tagged_hash, tags, Digest, SecretBuffer, SecretLabel};

pub const SUPPORTED_BITS: [usize; 2] = [512, 2048];
pub const PUBLIC_EXPONENT: u32 = 65_537;
/// Miller-Rabin rounds for the 256-bit primes of a 512-bit key.
pub const MILLER_RABIN_ROUNDS: usize = 64;
/// Rounds for 1024-bit random candidates (error below 2^-100).
pub const MILLER_RABIN_ROUNDS_1024: usize = 5;

const SEED_LEN: usize = 16;
const LHASH_LEN: usize = 16;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PublicKey {
    n: BigUint,
    e: BigUint,
}

impl PublicKey {
    pub fn bits(&self) -> usize {
        self.n.bits() as usize
    }

    /// Modulus length in bytes; also the ciphertext block size.
    pub fn modulus_len(&self) -> usize {
        self.bits().div_ceil(8)
    }

    pub fn max_plaintext_len(&self) -> usize {
        self.modulus_len().saturating_sub(2 * SEED_LEN + 2)
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn exponent(&self) -> &BigUint {
        &self.e
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.modulus_len() + 7);
        out.extend_from_slice(&(self.bits() as u16).to_be_bytes());
        out.extend_from_slice(&to_fixed_be(&self.n, self.modulus_len()).expect("fits by construction"));
        let e = self.e.to_bytes_be();
        out.extend_from_slice(&(e.len() as u16).to_be_bytes());
        out.extend_from_slice(&e);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<PublicKey> {
        let mut r = Reader::new(bytes);
        let pk = Self::read(&mut r)?;
        r.finish()?;
        Ok(pk)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<PublicKey> {
        let bits = r.u16()? as usize;
        let n = BigUint::from_bytes_be(r.take(bits.div_ceil(8))?);
        if n.bits() as usize != bits {
            return Err(Error::Malformed(format!("modulus has {} bits, header says {bits}", n.bits())));
        }
        let e = BigUint::from_bytes_be(r.prefixed()?);
        if n.is_even() || e < BigUint::from(3u8) || e >= n {
            return Err(Error::Malformed("not an RSA public key".into()));
        }
        Ok(PublicKey { n, e })
    }
}

/// Hash of the canonical public-key encoding.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Fingerprint(pub Digest);

impl Fingerprint {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0 .0
    }
}

pub fn fingerprint(public: &PublicKey) -> Fingerprint {
    Fingerprint(tagged_hash(tags::FINGERPRINT, &[&public.encode()]))
}

/// Private half. The only copy of `p`, `q` and `d` lives in the secret buffer
/// as the canonical private encoding.
#[derive(Debug)]
pub struct PrivateKey {
    public: PublicKey,
    secret: SecretBuffer,
}

struct PrivateParts {
    p: BigUint,
    q: BigUint,
    d: BigUint,
}

impl PrivateKey {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn label(&self) -> SecretLabel {
        self.secret.label()
    }

    pub fn is_erased(&self) -> bool {
        self.secret.is_erased()
    }

    pub fn erase(&mut self) {
        self.secret.erase();
    }

    pub fn secret(&self) -> &SecretBuffer {
        &self.secret
    }

    fn parts(&self) -> Result<PrivateParts> {
        let (_, parts) = parse_private(self.secret.expose()?)?;
        Ok(parts)
    }
}

#[derive(Debug)]
pub struct AsymKeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

impl AsymKeyPair {
    pub fn bits(&self) -> usize {
        self.public.bits()
    }
}

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        const LIMIT: usize = 2000;
        let mut sieve = vec![true; LIMIT];
        let mut out = Vec::new();
        for i in 2..LIMIT {
            if sieve[i] {
                out.push(i as u32);
                (i * i..LIMIT).step_by(i).for_each(|j| sieve[j] = false);
            }
        }
        out
    })
}

/// Probabilistic primality test with `rounds` random witnesses.
pub fn miller_rabin(n: &BigUint, rounds: usize, rng: &mut (impl RngCore + CryptoRng)) -> bool {
    let two = BigUint::from(2u8);
    if *n < two {
        return false;
    }
    for &sp in small_primes() {
        let sp_big = BigUint::from(sp);
        if *n == sp_big {
            return true;
        }
        if (n % sp).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().expect("n > 2");
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Random prime with exactly `bits` bits and the top two bits set, so the
/// product of two such primes has exactly `2 * bits` bits.
fn gen_prime(bits: u64, rng: &mut (impl RngCore + CryptoRng)) -> BigUint {
    loop {
        let mut c = rng.gen_biguint(bits);
        c.set_bit(bits - 1, true);
        c.set_bit(bits - 2, true);
        c.set_bit(0, true);
        if small_primes().iter().any(|&sp| (&c % sp).is_zero()) {
            continue;
        }
        let rounds = if bits >= 1024 { MILLER_RABIN_ROUNDS_1024 } else { MILLER_RABIN_ROUNDS };
        if miller_rabin(&c, rounds, rng) {
            return c;
        }
    }
}

pub fn keygen(bits: usize, rng: &mut (impl RngCore + CryptoRng)) -> Result<AsymKeyPair> {
    keygen_labeled(bits, SecretLabel::KA1priv, rng)
}

/// As [`keygen`], naming the private half (`KA1priv` for the initiator,
/// `KB1priv` for the responder).
pub fn keygen_labeled(bits: usize, label: SecretLabel, rng: &mut (impl RngCore + CryptoRng)) -> Result<AsymKeyPair> {
    if !SUPPORTED_BITS.contains(&bits) {
        return Err(Error::InvalidParameter(format!("unsupported modulus size {bits}")));
    }
    let e = BigUint::from(PUBLIC_EXPONENT);
    let half = (bits / 2) as u64;
    loop {
        let p = gen_prime(half, rng);
        let q = gen_prime(half, rng);
        if p == q {
            continue;
        }
        let (pm1, qm1) = (&p - 1u8, &q - 1u8);
        if !e.gcd(&pm1).is_one() || !e.gcd(&qm1).is_one() {
            continue;
        }
        let n = &p * &q;
        debug_assert_eq!(n.bits() as usize, bits);
        let lambda = pm1.lcm(&qm1);
        let d = e.modinv(&lambda).expect("gcd(e, lambda) = 1");
        let public = PublicKey { n, e: e.clone() };
        let secret = SecretBuffer::new(label, encode_private(&public, &p, &q, &d)?);
        return Ok(AsymKeyPair { public: public.clone(), private: PrivateKey { public, secret } });
    }
}

fn encode_private(public: &PublicKey, p: &BigUint, q: &BigUint, d: &BigUint) -> Result<Vec<u8>> {
    let k = public.modulus_len();
    let h = k / 2;
    let mut out = public.encode();
    for (x, w) in [(p, h), (q, h), (d, k)] {
        out.extend_from_slice(&(w as u16).to_be_bytes());
        out.extend_from_slice(&to_fixed_be(x, w)?);
    }
    Ok(out)
}

fn parse_private(bytes: &[u8]) -> Result<(PublicKey, PrivateParts)> {
    let mut r = Reader::new(bytes);
    let public = PublicKey::read(&mut r)?;
    let p = BigUint::from_bytes_be(r.prefixed()?);
    let q = BigUint::from_bytes_be(r.prefixed()?);
    let d = BigUint::from_bytes_be(r.prefixed()?);
    r.finish()?;
    Ok((public, PrivateParts { p, q, d }))
}

/// Exact byte length of an exported private key of the given size.
pub fn private_export_len(bits: usize) -> usize {
    let k = bits.div_ceil(8);
    let e_len = BigUint::from(PUBLIC_EXPONENT).to_bytes_be().len();
    (2 + k + 2 + e_len) + (2 + k / 2) * 2 + (2 + k)
}

pub fn export_private(private: &PrivateKey) -> Result<Vec<u8>> {
    Ok(private.secret.expose()?.to_vec())
}

/// Inverse of [`export_private`]. Rejects encodings whose primes do not
/// multiply to the modulus or whose exponent does not invert `e`.
pub fn import_private(bytes: &[u8], label: SecretLabel) -> Result<PrivateKey> {
    let (public, parts) = parse_private(bytes)?;
    if &parts.p * &parts.q != public.n {
        return Err(Error::Malformed("p*q does not match modulus".into()));
    }
    let lambda = (&parts.p - 1u8).lcm(&(&parts.q - 1u8));
    if !((&parts.d * &public.e) % &lambda).is_one() {
        return Err(Error::Malformed("private exponent does not invert e".into()));
    }
    let canonical = encode_private(&public, &parts.p, &parts.q, &parts.d)?;
    Ok(PrivateKey { public, secret: SecretBuffer::new(label, canonical) })
}

fn mgf1(seed: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut counter = 0u32;
    while out.len() < len {
        out.extend_from_slice(&tagged_hash(seed, &[&counter.to_be_bytes()]).0);
        counter += 1;
    }
    out.truncate(len);
    out
}

fn label_hash() -> [u8; LHASH_LEN] {
    let d = tagged_hash(tags::OAEP_LABEL, &[]);
    d.0[..LHASH_LEN].try_into().expect("16 <= 32")
}

/// One padded block of exactly `modulus_len` bytes.
pub fn encrypt(public: &PublicKey, plaintext: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> Result<Vec<u8>> {
    let k = public.modulus_len();
    if plaintext.len() > public.max_plaintext_len() {
        return Err(Error::MessageTooLong);
    }
    let db_len = k - 1 - SEED_LEN;
    let mut db = Vec::with_capacity(db_len);
    db.extend_from_slice(&label_hash());
    db.resize(db_len - plaintext.len() - 1, 0);
    db.push(0x01);
    db.extend_from_slice(plaintext);

    let mut seed = [0u8; SEED_LEN];
    rng.fill_bytes(&mut seed);
    let db_mask = mgf1(&seed, db_len);
    db.iter_mut().zip(&db_mask).for_each(|(b, m)| *b ^= m);
    let seed_mask = mgf1(&db, SEED_LEN);
    seed.iter_mut().zip(&seed_mask).for_each(|(b, m)| *b ^= m);

    let mut em = Vec::with_capacity(k);
    em.push(0);
    em.extend_from_slice(&seed);
    em.extend_from_slice(&db);
    let c = BigUint::from_bytes_be(&em).modpow(&public.e, &public.n);
    to_fixed_be(&c, k)
}

pub fn decrypt(private: &PrivateKey, ciphertext: &[u8]) -> Result<Vec<u8>> {
    let parts = private.parts()?;
    let public = &private.public;
    let k = public.modulus_len();
    if ciphertext.len() != k {
        return Err(Error::PaddingFailure);
    }
    let c = BigUint::from_bytes_be(ciphertext);
    if c >= public.n {
        return Err(Error::PaddingFailure);
    }
    let m = crt_power(&c, &parts);
    let em = to_fixed_be(&m, k)?;
    unpad(&em)
}

fn crt_power(c: &BigUint, parts: &PrivateParts) -> BigUint {
    let PrivateParts { p, q, d } = parts;
    let dp = d % (p - 1u8);
    let dq = d % (q - 1u8);
    let q_inv = q.modinv(p).expect("p, q distinct primes");
    let m1 = c.modpow(&dp, p);
    let m2 = c.modpow(&dq, q);
    let diff = if m1 >= (&m2 % p) { &m1 - (&m2 % p) } else { &m1 + p - (&m2 % p) };
    let h = (q_inv * diff) % p;
    m2 + h * q
}

fn unpad(em: &[u8]) -> Result<Vec<u8>> {
    let mut bad = em[0] != 0;
    let (masked_seed, masked_db) = em[1..].split_at(SEED_LEN);
    let seed_mask = mgf1(masked_db, SEED_LEN);
    let seed: Vec<u8> = masked_seed.iter().zip(&seed_mask).map(|(a, b)| a ^ b).collect();
    let db_mask = mgf1(&seed, masked_db.len());
    let db: Vec<u8> = masked_db.iter().zip(&db_mask).map(|(a, b)| a ^ b).collect();
    bad |= !crate::primitives::ct_equal(&db[..LHASH_LEN], &label_hash());
    // Scan every byte of the padding string so failure position is not timed.
    let mut sep: Option<usize> = None;
    for (i, &b) in db.iter().enumerate().skip(LHASH_LEN) {
        if sep.is_none() {
            if b == 0x01 {
                sep = Some(i);
            } else if b != 0 {
                bad = true;
            }
        }
    }
    match (bad, sep) {
        (false, Some(i)) => Ok(db[i + 1..].to_vec()),
        _ => Err(Error::PaddingFailure),
    }
}

/// Encrypt a payload of any length as a sequence of independently padded
/// blocks. An empty payload still produces one block.
pub fn encrypt_stream(public: &PublicKey, plaintext: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> Result<Vec<u8>> {
    let chunk = public.max_plaintext_len();
    if chunk == 0 {
        return Err(Error::MessageTooLong);
    }
    let mut out = Vec::new();
    if plaintext.is_empty() {
        out.extend(encrypt(public, &[], rng)?);
    }
    for part in plaintext.chunks(chunk) {
        out.extend(encrypt(public, part, rng)?);
    }
    Ok(out)
}

pub fn decrypt_stream(private: &PrivateKey, ciphertext: &[u8]) -> Result<Vec<u8>> {
    let k = private.public.modulus_len();
    if ciphertext.is_empty() || ciphertext.len() % k != 0 {
        return Err(Error::PaddingFailure);
    }
    let mut out = Vec::new();
    for block in ciphertext.chunks(k) {
        out.extend(decrypt(private, block)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{from_hex, EntropySource};

    const ORACLE_PRIVATE: &str = "0200baca6bab35c994e32a9d7817d3fe5417592a0ef551ef33ae7bd053221c907fbafdf69a42f0f5821b682e6f9d33b49e82d6a23aa368eb29df2cb778bcf3b2eb1f00030100010020ceaf72c95edbee2e992003d4433f35fabbf467fee95568d17a2234be610d4a650020e75bc98d227f4ceebd9103e14904a744920578a6daa12f1f9414c1a16a12a53300401a22501b783f129c65f8a4e0d096f8dfa613585c6d1b9be381b737ffc1ccb07cbfd9e7c8e379cbb7a86d74a82dfe7ca11cf1a65af29ab555823700b1000845e1";
    const ORACLE_FINGERPRINT: &str = "7b838336f57c03f952309011f5806bd747c88bf7d6f85eac075a5b63e6ce90f2";
    const ORACLE_CIPHERTEXT: &str = "aa52dd12e70751b0174bce4ab390a2927ed0cf36ff764ca04fc0e6e959066bcc06bf5a49a02680cb362efd814c49cee2de57f6c81bf1e9e17baaa52ab8f4b185";

    fn oracle_key() -> PrivateKey {
        import_private(&from_hex(ORACLE_PRIVATE).unwrap(), SecretLabel::KA1priv).unwrap()
    }

    /// Deterministic Miller–Rabin over the first 40 primes as fixed bases;
    /// shares nothing with the randomized implementation above.
    fn oracle_is_prime(n: &BigUint) -> bool {
        let bases: Vec<u32> = (2u32..).filter(|&a| (2..a).all(|b| a % b != 0)).take(40).collect();
        let one = BigUint::from(1u8);
        let nm1 = n - &one;
        let mut d = nm1.clone();
        let mut s = 0;
        while d.is_even() {
            d >>= 1;
            s += 1;
        }
        bases.iter().all(|&a| {
            let mut x = BigUint::from(a).modpow(&d, n);
            if x == one || x == nm1 {
                return true;
            }
            for _ in 1..s {
                x = (&x * &x) % n;
                if x == nm1 {
                    return true;
                }
            }
            false
        })
    }

    #[test]
    fn keygen_is_deterministic_under_seed() {
        let a = keygen(512, &mut EntropySource::seeded(7)).unwrap();
        let b = keygen(512, &mut EntropySource::seeded(7)).unwrap();
        assert_eq!(a.public, b.public);
        assert_eq!(export_private(&a.private).unwrap(), export_private(&b.private).unwrap());
        assert_eq!(a.bits(), 512);
    }

    #[test]
    fn keygen_rejects_unsupported_sizes() {
        assert!(matches!(keygen(1024, &mut EntropySource::seeded(1)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn generated_primes_pass_independent_oracle() {
        for seed in 0..3 {
            let kp = keygen(512, &mut EntropySource::seeded(seed)).unwrap();
            let parts = kp.private.parts().unwrap();
            assert!(oracle_is_prime(&parts.p));
            assert!(oracle_is_prime(&parts.q));
            assert_eq!(parts.p.bits(), 256);
            assert_eq!(&parts.p * &parts.q, kp.public.n);
        }
    }

    #[test]
    fn miller_rabin_rejects_carmichael_and_accepts_primes() {
        let mut rng = EntropySource::seeded(3);
        assert!(!miller_rabin(&BigUint::from(561u32), 20, &mut rng));
        assert!(!miller_rabin(&BigUint::from(1u32), 20, &mut rng));
        assert!(miller_rabin(&BigUint::from(2u32), 20, &mut rng));
        let m61 = (BigUint::one() << 61u32) - 1u8;
        assert!(miller_rabin(&m61, 20, &mut rng));
        assert!(!miller_rabin(&(&m61 * &m61), 20, &mut rng));
    }

    #[test]
    fn fingerprint_matches_oracle_and_canonicalizes() {
        let key = oracle_key();
        let fp = fingerprint(key.public());
        assert_eq!(fp.0.to_hex(), ORACLE_FINGERPRINT);
        // Same key with a zero-padded exponent field.
        let mut alt = Vec::new();
        let enc = key.public().encode();
        alt.extend_from_slice(&enc[..2 + 64]);
        alt.extend_from_slice(&[0, 4, 0, 1, 0, 1]);
        let reparsed = PublicKey::decode(&alt).unwrap();
        assert_eq!(fingerprint(&reparsed), fp);
        let other = keygen(512, &mut EntropySource::seeded(99)).unwrap();
        assert_ne!(fingerprint(&other.public), fp);
    }

    #[test]
    fn decrypts_oracle_ciphertext() {
        let key = oracle_key();
        let pt = decrypt(&key, &from_hex(ORACLE_CIPHERTEXT).unwrap()).unwrap();
        assert_eq!(pt, b"attack at dawn");
    }

    #[test]
    fn round_trip_and_randomized() {
        let mut rng = EntropySource::seeded(11);
        let kp = keygen(512, &mut rng).unwrap();
        assert_eq!(kp.public.max_plaintext_len(), 30);
        for i in 0..100 {
            let len = i % 31;
            let m = crate::primitives::random_bytes(len.max(1), &mut rng).unwrap()[..len].to_vec();
            let c = encrypt(&kp.public, &m, &mut rng).unwrap();
            assert_eq!(c.len(), 64);
            assert_eq!(decrypt(&kp.private, &c).unwrap(), m);
        }
        let c1 = encrypt(&kp.public, b"same", &mut rng).unwrap();
        let c2 = encrypt(&kp.public, b"same", &mut rng).unwrap();
        assert_ne!(c1, c2);
        assert_eq!(encrypt(&kp.public, &[0u8; 31], &mut rng), Err(Error::MessageTooLong));
    }

    #[test]
    fn single_byte_corruption_never_yields_plaintext() {
        let mut rng = EntropySource::seeded(12);
        let kp = keygen(512, &mut rng).unwrap();
        let c = encrypt(&kp.public, b"sixteen byte msg", &mut rng).unwrap();
        for i in 0..1000 {
            let mut t = c.clone();
            let pos = i % t.len();
            t[pos] ^= 1 + (i / t.len()) as u8;
            assert_eq!(decrypt(&kp.private, &t), Err(Error::PaddingFailure), "corruption {i}");
        }
    }

    #[test]
    fn wrong_key_and_erased_key_fail() {
        let mut rng = EntropySource::seeded(13);
        let a = keygen(512, &mut rng).unwrap();
        let mut b = keygen(512, &mut rng).unwrap();
        let c = encrypt(&a.public, b"hello", &mut rng).unwrap();
        assert_eq!(decrypt(&b.private, &c), Err(Error::PaddingFailure));
        b.private.erase();
        assert_eq!(decrypt(&b.private, &c), Err(Error::UseAfterErase(SecretLabel::KA1priv)));
        assert_eq!(export_private(&b.private), Err(Error::UseAfterErase(SecretLabel::KA1priv)));
    }

    #[test]
    fn export_import_round_trip_and_layout_size() {
        let mut rng = EntropySource::seeded(14);
        let kp = keygen_labeled(512, SecretLabel::KB1priv, &mut rng).unwrap();
        let bytes = export_private(&kp.private).unwrap();
        assert_eq!(bytes, export_private(&kp.private).unwrap());
        assert_eq!(bytes.len(), 205);
        assert_eq!(private_export_len(512), 205);
        assert_eq!(private_export_len(2048), 781);
        let imported = import_private(&bytes, SecretLabel::KB1priv).unwrap();
        let c = encrypt(&kp.public, b"via import", &mut rng).unwrap();
        assert_eq!(decrypt(&imported, &c).unwrap(), b"via import");
        let mut broken = bytes.clone();
        broken[100] ^= 0x40;
        assert!(import_private(&broken, SecretLabel::KB1priv).is_err());
    }

    #[test]
    fn stream_round_trip() {
        let mut rng = EntropySource::seeded(15);
        let kp = keygen(512, &mut rng).unwrap();
        for len in [0usize, 1, 30, 31, 200] {
            let m = vec![0x5Au8; len];
            let c = encrypt_stream(&kp.public, &m, &mut rng).unwrap();
            assert_eq!(c.len() % 64, 0);
            assert_eq!(decrypt_stream(&kp.private, &c).unwrap(), m);
        }
        assert_eq!(decrypt_stream(&kp.private, &[0u8; 63]), Err(Error::PaddingFailure));
    }
}
