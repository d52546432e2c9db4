//! Socialist Millionaire Protocol over a safe-prime group.
//!
//! Four messages, OTR-style. The initiator holds `x`, the responder `y`;
//! both learn only whether `x == y`. Every exponent published is covered by a
//! Fiat–Shamir Schnorr proof whose challenge is
//!
//! ```text
//! c = int(SHA-256("itschan/smp-proof" ∥ tag ∥ mpi(v1) ∥ mpi(v2) ∥ …)) mod q
//! ```
//!
//! with `mpi(v) = [u16 w][v big-endian, w bytes]` and `w` the byte length of
//! `p`. Responses are `D = r − secret·c mod q`.
//!
//! | tag | statement                 | hashed values                          |
//! |-----|---------------------------|----------------------------------------|
//! | 1,2 | log_g g2a, log_g g3a      | g2a, g^r  /  g3a, g^r                  |
//! | 3,4 | log_g g2b, log_g g3b      | g2b, g^r  /  g3b, g^r                  |
//! | 5   | Pb = g3^r, Qb = g^r g2^y  | Pb, Qb, g3^r4, g^r4 g2^r5              |
//! | 6   | Pa = g3^s, Qa = g^s g2^x  | Pa, Qa, g3^r4, g^r4 g2^r5              |
//! | 7   | Ra = (Qa/Qb)^a3           | Ra, g^r7, (Qa/Qb)^r7                   |
//! | 8   | Rb = (Qa/Qb)^b3           | Rb, g^r7, (Qa/Qb)^r7                   |
//!
//! Scalars are drawn from a [`ScalarSource`] in a fixed order per message:
//! msg1 `a2 a3 r2 r3`; msg2 `b2 b3 r2 r3 r r4 r5`; msg3 `s r4 r5 r7`;
//! msg4 `r7`. In a small group an honest draw can make `Q` the identity or
//! `Qa == Qb`, which the peer would reject; the blinding exponent (`r` or
//! `s`) is then drawn again from the same source.

use std::collections::VecDeque;
use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};

use crate::asym::Fingerprint;
use crate::codec::{get_mpi, put_mpi, Reader};
use crate::error::{Error, Result};
use crate::primitives::{kdf_stretch, tagged_hash, tags, EntropySource, SecretBuffer};

/// 1536-bit MODP group (RFC 3526 group 5); 2 generates the order-q subgroup.
const MODP_1536_HEX: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA237327FFFFFFFFFFFFFFFF";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    pub name: &'static str,
    pub p: BigUint,
    pub q: BigUint,
    pub g: BigUint,
}

impl GroupParams {
    pub fn modp1536() -> &'static GroupParams {
        static G: OnceLock<GroupParams> = OnceLock::new();
        G.get_or_init(|| {
            let p = BigUint::parse_bytes(MODP_1536_HEX.as_bytes(), 16).expect("valid hex");
            let q = (&p - 1u8) >> 1;
            GroupParams { name: "modp1536", p, q, g: BigUint::from(2u8) }
        })
    }

    /// p = 2579 = 2·1289 + 1, g = 4. Only for reproducible vectors and fast
    /// tests: discrete logs here are trivial.
    pub fn tiny() -> &'static GroupParams {
        static G: OnceLock<GroupParams> = OnceLock::new();
        G.get_or_init(|| GroupParams {
            name: "tiny2579",
            p: BigUint::from(2579u32),
            q: BigUint::from(1289u32),
            g: BigUint::from(4u32),
        })
    }

    pub fn by_name(name: &str) -> Option<&'static GroupParams> {
        match name {
            "modp1536" => Some(Self::modp1536()),
            "tiny2579" => Some(Self::tiny()),
            _ => None,
        }
    }

    /// Byte width used for every element and scalar on the wire.
    pub fn width(&self) -> usize {
        (self.p.bits() as usize).div_ceil(8)
    }

    /// `1 < e < p` and `e^q = 1 (mod p)`.
    pub fn is_valid_element(&self, e: &BigUint) -> bool {
        !e.is_zero() && !e.is_one() && *e < self.p && e.modpow(&self.q, &self.p).is_one()
    }

    fn check(&self, e: &BigUint) -> Result<()> {
        if self.is_valid_element(e) {
            Ok(())
        } else {
            Err(Error::BadGroupElement)
        }
    }

    fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        base.modpow(exp, &self.p)
    }

    fn gpow(&self, exp: &BigUint) -> BigUint {
        self.g.modpow(exp, &self.p)
    }

    fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p
    }

    fn div(&self, a: &BigUint, b: &BigUint) -> BigUint {
        let inv = b.modpow(&(&self.p - 2u8), &self.p);
        self.mul(a, &inv)
    }

    /// `(r − a·c) mod q`.
    fn response(&self, r: &BigUint, a: &BigUint, c: &BigUint) -> BigUint {
        let ac = (a * c) % &self.q;
        ((r % &self.q) + &self.q - ac) % &self.q
    }

    fn challenge(&self, tag: u8, values: &[&BigUint]) -> BigUint {
        let mut buf = Vec::new();
        for v in values {
            put_mpi(&mut buf, v, self.width()).expect("reduced mod p");
        }
        let d = tagged_hash(tags::SMP_PROOF, &[&[tag], &buf]);
        BigUint::from_bytes_be(&d.0) % &self.q
    }
}

/// Supplier of exponents in `[1, q)`.
pub trait ScalarSource {
    fn next_scalar(&mut self, q: &BigUint) -> BigUint;
}

impl ScalarSource for EntropySource {
    fn next_scalar(&mut self, q: &BigUint) -> BigUint {
        self.gen_biguint_range(&BigUint::one(), q)
    }
}

/// Pre-chosen exponents, consumed front to back. Used to reproduce fixed
/// transcripts.
#[derive(Debug, Clone, Default)]
pub struct FixedScalars(pub VecDeque<BigUint>);

impl FixedScalars {
    pub fn new(values: &[u64]) -> Self {
        FixedScalars(values.iter().map(|&v| BigUint::from(v)).collect())
    }
}

impl ScalarSource for FixedScalars {
    fn next_scalar(&mut self, q: &BigUint) -> BigUint {
        self.0.pop_front().expect("fixed scalar list exhausted") % q
    }
}

/// `x = int(hash(tag ∥ fp_initiator ∥ fp_responder ∥ kdf(X, salt, n))) mod q`.
pub fn derive_smp_secret(
    fp_initiator: &Fingerprint,
    fp_responder: &Fingerprint,
    x_secret: &SecretBuffer,
    salt: &[u8],
    iterations: u32,
    group: &GroupParams,
) -> Result<BigUint> {
    let stretched = kdf_stretch(x_secret.expose()?, salt, iterations)?;
    let d = tagged_hash(
        tags::SMP_SECRET,
        &[fp_initiator.as_bytes(), fp_responder.as_bytes(), stretched.as_bytes()],
    );
    Ok(BigUint::from_bytes_be(&d.0) % &group.q)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Smp1 {
    pub g2a: BigUint,
    pub g3a: BigUint,
    pub c2: BigUint,
    pub d2: BigUint,
    pub c3: BigUint,
    pub d3: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Smp2 {
    pub g2b: BigUint,
    pub g3b: BigUint,
    pub c2: BigUint,
    pub d2: BigUint,
    pub c3: BigUint,
    pub d3: BigUint,
    pub pb: BigUint,
    pub qb: BigUint,
    pub cp: BigUint,
    pub d5: BigUint,
    pub d6: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Smp3 {
    pub pa: BigUint,
    pub qa: BigUint,
    pub cp: BigUint,
    pub d5: BigUint,
    pub d6: BigUint,
    pub ra: BigUint,
    pub cr: BigUint,
    pub d7: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Smp4 {
    pub rb: BigUint,
    pub cr: BigUint,
    pub d7: BigUint,
}

macro_rules! mpi_message {
    ($ty:ident { $($field:ident),+ }) => {
        impl $ty {
            pub fn encode(&self, group: &GroupParams) -> Result<Vec<u8>> {
                let mut out = Vec::new();
                $( put_mpi(&mut out, &self.$field, group.width())?; )+
                Ok(out)
            }

            pub fn decode(bytes: &[u8]) -> Result<Self> {
                let mut r = Reader::new(bytes);
                let msg = $ty { $( $field: get_mpi(&mut r)?, )+ };
                r.finish()?;
                Ok(msg)
            }

            /// All fields in wire order.
            pub fn values(&self) -> Vec<&BigUint> {
                vec![$( &self.$field ),+]
            }
        }
    };
}

mpi_message!(Smp1 { g2a, g3a, c2, d2, c3, d3 });
mpi_message!(Smp2 { g2b, g3b, c2, d2, c3, d3, pb, qb, cp, d5, d6 });
mpi_message!(Smp3 { pa, qa, cp, d5, d6, ra, cr, d7 });
mpi_message!(Smp4 { rb, cr, d7 });

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmpPhase {
    Idle,
    Expect2,
    Expect3,
    Expect4,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmpOutcome {
    Pending,
    Match,
    NoMatch,
    ProofFailure,
}

/// One party's view of an SMP run.
#[derive(Debug)]
pub struct SmpState {
    group: &'static GroupParams,
    phase: SmpPhase,
    outcome: SmpOutcome,
    secret: BigUint,
    exp2: BigUint,
    exp3: BigUint,
    g3_peer: BigUint,
    g2: BigUint,
    g3: BigUint,
    p_own: BigUint,
    q_own: BigUint,
    p_peer: BigUint,
    q_peer: BigUint,
}

impl SmpState {
    pub fn new(group: &'static GroupParams, secret: BigUint) -> Self {
        let z = BigUint::zero;
        SmpState {
            group,
            phase: SmpPhase::Idle,
            outcome: SmpOutcome::Pending,
            secret: secret % &group.q,
            exp2: z(),
            exp3: z(),
            g3_peer: z(),
            g2: z(),
            g3: z(),
            p_own: z(),
            q_own: z(),
            p_peer: z(),
            q_peer: z(),
        }
    }

    pub fn phase(&self) -> SmpPhase {
        self.phase
    }

    pub fn outcome(&self) -> SmpOutcome {
        self.outcome
    }

    pub fn group(&self) -> &'static GroupParams {
        self.group
    }

    fn expect(&self, phase: SmpPhase) -> Result<()> {
        if self.phase != phase || self.outcome != SmpOutcome::Pending {
            return Err(Error::WrongPhase(format!("smp {:?}", self.phase)));
        }
        Ok(())
    }

    /// Runs `f`; any verification failure moves the state to
    /// `ProofFailure` and is reported as [`Error::ProofFailure`] (or
    /// [`Error::BadGroupElement`]).
    fn guarded<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let r = f(self);
        if let Err(e) = &r {
            if matches!(e, Error::ProofFailure | Error::BadGroupElement) {
                self.fail();
            }
        }
        r
    }

    fn fail(&mut self) {
        self.outcome = SmpOutcome::ProofFailure;
        self.phase = SmpPhase::Done;
        self.wipe();
    }

    fn finish(&mut self, matched: bool) -> SmpOutcome {
        self.outcome = if matched { SmpOutcome::Match } else { SmpOutcome::NoMatch };
        self.phase = SmpPhase::Done;
        self.wipe();
        self.outcome
    }

    /// Exponents and the secret are dropped once the outcome is known.
    fn wipe(&mut self) {
        for v in [&mut self.secret, &mut self.exp2, &mut self.exp3] {
            v.set_zero();
        }
    }

    fn verify_pok(&self, tag: u8, value: &BigUint, c: &BigUint, d: &BigUint) -> Result<()> {
        let g = self.group;
        g.check(value)?;
        let comm = g.mul(&g.gpow(d), &g.pow(value, c));
        if g.challenge(tag, &[value, &comm]) != *c {
            return Err(Error::ProofFailure);
        }
        Ok(())
    }

    fn prove_pok(&self, tag: u8, secret: &BigUint, value: &BigUint, r: &BigUint) -> (BigUint, BigUint) {
        let g = self.group;
        let c = g.challenge(tag, &[value, &g.gpow(r)]);
        let d = g.response(r, secret, &c);
        (c, d)
    }

    /// `g^k g2^secret`.
    fn blinded_q(&self, k: &BigUint) -> BigUint {
        let g = self.group;
        g.mul(&g.gpow(k), &g.pow(&self.g2, &self.secret))
    }

    /// Proof that `p = g3^k` and `q = g^k g2^secret` share `k`.
    fn prove_pq(&self, tag: u8, k: &BigUint, p: &BigUint, q: &BigUint, r4: &BigUint, r5: &BigUint) -> [BigUint; 3] {
        let g = self.group;
        let t1 = g.pow(&self.g3, r4);
        let t2 = g.mul(&g.gpow(r4), &g.pow(&self.g2, r5));
        let c = g.challenge(tag, &[p, q, &t1, &t2]);
        [c.clone(), g.response(r4, k, &c), g.response(r5, &self.secret, &c)]
    }

    fn verify_pq(&self, tag: u8, p: &BigUint, q: &BigUint, c: &BigUint, d5: &BigUint, d6: &BigUint) -> Result<()> {
        let g = self.group;
        g.check(p)?;
        g.check(q)?;
        let t1 = g.mul(&g.pow(&self.g3, d5), &g.pow(p, c));
        let t2 = g.mul(&g.mul(&g.gpow(d5), &g.pow(&self.g2, d6)), &g.pow(q, c));
        if g.challenge(tag, &[p, q, &t1, &t2]) != *c {
            return Err(Error::ProofFailure);
        }
        Ok(())
    }

    /// Proof that `r = (Qa/Qb)^exp3` with `g3_own = g^exp3`.
    fn prove_r(&self, tag: u8, r_val: &BigUint, ratio: &BigUint, r7: &BigUint) -> (BigUint, BigUint) {
        let g = self.group;
        let c = g.challenge(tag, &[r_val, &g.gpow(r7), &g.pow(ratio, r7)]);
        let d = g.response(r7, &self.exp3, &c);
        (c, d)
    }

    fn verify_r(&self, tag: u8, r_val: &BigUint, ratio: &BigUint, c: &BigUint, d: &BigUint) -> Result<()> {
        let g = self.group;
        g.check(r_val)?;
        let t1 = g.mul(&g.gpow(d), &g.pow(&self.g3_peer, c));
        let t2 = g.mul(&g.pow(ratio, d), &g.pow(r_val, c));
        if g.challenge(tag, &[r_val, &t1, &t2]) != *c {
            return Err(Error::ProofFailure);
        }
        Ok(())
    }

    /// Initiator: first message.
    pub fn msg1(&mut self, src: &mut dyn ScalarSource) -> Result<Smp1> {
        self.expect(SmpPhase::Idle)?;
        let g = self.group;
        let (a2, a3, r2, r3) = (src.next_scalar(&g.q), src.next_scalar(&g.q), src.next_scalar(&g.q), src.next_scalar(&g.q));
        let g2a = g.gpow(&a2);
        let g3a = g.gpow(&a3);
        let (c2, d2) = self.prove_pok(1, &a2, &g2a, &r2);
        let (c3, d3) = self.prove_pok(2, &a3, &g3a, &r3);
        self.exp2 = a2;
        self.exp3 = a3;
        self.phase = SmpPhase::Expect2;
        Ok(Smp1 { g2a, g3a, c2, d2, c3, d3 })
    }

    /// Responder: answer the first message.
    pub fn msg2(&mut self, m: &Smp1, src: &mut dyn ScalarSource) -> Result<Smp2> {
        self.expect(SmpPhase::Idle)?;
        self.guarded(|s| {
            s.verify_pok(1, &m.g2a, &m.c2, &m.d2)?;
            s.verify_pok(2, &m.g3a, &m.c3, &m.d3)?;
            let g = s.group;
            let q = &g.q;
            let (b2, b3, r2, r3) = (src.next_scalar(q), src.next_scalar(q), src.next_scalar(q), src.next_scalar(q));
            let mut r = src.next_scalar(q);
            let (r4, r5) = (src.next_scalar(q), src.next_scalar(q));
            let g2b = g.gpow(&b2);
            let g3b = g.gpow(&b3);
            let (c2, d2) = s.prove_pok(3, &b2, &g2b, &r2);
            let (c3, d3) = s.prove_pok(4, &b3, &g3b, &r3);
            s.g2 = g.pow(&m.g2a, &b2);
            s.g3 = g.pow(&m.g3a, &b3);
            s.g3_peer = m.g3a.clone();
            let mut qb = s.blinded_q(&r);
            while qb.is_one() {
                r = src.next_scalar(q);
                qb = s.blinded_q(&r);
            }
            let pb = g.pow(&s.g3, &r);
            let [cp, d5, d6] = s.prove_pq(5, &r, &pb, &qb, &r4, &r5);
            s.exp2 = b2;
            s.exp3 = b3;
            s.p_own = pb.clone();
            s.q_own = qb.clone();
            s.phase = SmpPhase::Expect3;
            Ok(Smp2 { g2b, g3b, c2, d2, c3, d3, pb, qb, cp, d5, d6 })
        })
    }

    /// Initiator: answer the second message.
    pub fn msg3(&mut self, m: &Smp2, src: &mut dyn ScalarSource) -> Result<Smp3> {
        self.expect(SmpPhase::Expect2)?;
        self.guarded(|s| {
            s.verify_pok(3, &m.g2b, &m.c2, &m.d2)?;
            s.verify_pok(4, &m.g3b, &m.c3, &m.d3)?;
            let g = s.group;
            s.g2 = g.pow(&m.g2b, &s.exp2);
            s.g3 = g.pow(&m.g3b, &s.exp3);
            s.g3_peer = m.g3b.clone();
            s.verify_pq(5, &m.pb, &m.qb, &m.cp, &m.d5, &m.d6)?;
            let q = &g.q;
            let (mut k, r4, r5, r7) = (src.next_scalar(q), src.next_scalar(q), src.next_scalar(q), src.next_scalar(q));
            let mut qa = s.blinded_q(&k);
            while qa.is_one() || qa == m.qb {
                k = src.next_scalar(q);
                qa = s.blinded_q(&k);
            }
            let pa = g.pow(&s.g3, &k);
            let [cp, d5, d6] = s.prove_pq(6, &k, &pa, &qa, &r4, &r5);
            let ratio = g.div(&qa, &m.qb);
            let ra = g.pow(&ratio, &s.exp3);
            let (cr, d7) = s.prove_r(7, &ra, &ratio, &r7);
            s.p_own = pa.clone();
            s.q_own = qa.clone();
            s.p_peer = m.pb.clone();
            s.q_peer = m.qb.clone();
            s.phase = SmpPhase::Expect4;
            Ok(Smp3 { pa, qa, cp, d5, d6, ra, cr, d7 })
        })
    }

    /// Responder: answer the third message and learn the outcome.
    pub fn msg4(&mut self, m: &Smp3, src: &mut dyn ScalarSource) -> Result<(Smp4, SmpOutcome)> {
        self.expect(SmpPhase::Expect3)?;
        self.guarded(|s| {
            s.verify_pq(6, &m.pa, &m.qa, &m.cp, &m.d5, &m.d6)?;
            let g = s.group;
            let ratio = g.div(&m.qa, &s.q_own);
            s.verify_r(7, &m.ra, &ratio, &m.cr, &m.d7)?;
            let r7 = src.next_scalar(&g.q);
            let rb = g.pow(&ratio, &s.exp3);
            let (cr, d7) = s.prove_r(8, &rb, &ratio, &r7);
            let rab = g.pow(&m.ra, &s.exp3);
            let matched = rab == g.div(&m.pa, &s.p_own);
            let outcome = s.finish(matched);
            Ok((Smp4 { rb, cr, d7 }, outcome))
        })
    }

    /// Initiator: check the last message and learn the outcome.
    pub fn finish_initiator(&mut self, m: &Smp4) -> Result<SmpOutcome> {
        self.expect(SmpPhase::Expect4)?;
        self.guarded(|s| {
            let g = s.group;
            let ratio = g.div(&s.q_own, &s.q_peer);
            s.verify_r(8, &m.rb, &ratio, &m.cr, &m.d7)?;
            let rab = g.pow(&m.rb, &s.exp3);
            let matched = rab == g.div(&s.p_own, &s.p_peer);
            Ok(s.finish(matched))
        })
    }
}

/// Plays both sides of a full run in memory; handy for tests and vectors.
pub fn run_pair(
    group: &'static GroupParams,
    x_initiator: BigUint,
    x_responder: BigUint,
    src_initiator: &mut dyn ScalarSource,
    src_responder: &mut dyn ScalarSource,
) -> Result<(SmpOutcome, SmpOutcome, [Vec<u8>; 4])> {
    let mut a = SmpState::new(group, x_initiator);
    let mut b = SmpState::new(group, x_responder);
    let m1 = a.msg1(src_initiator)?;
    let m2 = b.msg2(&m1, src_responder)?;
    let m3 = a.msg3(&m2, src_initiator)?;
    let (m4, ob) = b.msg4(&m3, src_responder)?;
    let oa = a.finish_initiator(&m4)?;
    Ok((oa, ob, [m1.encode(group)?, m2.encode(group)?, m3.encode(group)?, m4.encode(group)?]))
}
