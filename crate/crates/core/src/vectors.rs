//! Test vectors for cross-implementation checks: hashes, the KDF, key
//! derivations, the tiny-group SMP transcript, and timing-pipeline examples.
//! [`generate`] computes them with this crate; [`verify`] recomputes every
//! entry of a parsed set and reports mismatches.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::asym::Fingerprint;
use crate::error::{Error, Result};
use crate::primitives::{from_hex, hash, kdf_stretch, tagged_hash, tags, to_hex, SecretBuffer, SecretLabel};
use crate::smp::{derive_smp_secret, FixedScalars, GroupParams, SmpOutcome, SmpState};
use crate::timing::{agree_indices, quantize, reconcile, BitString, LeakLedger, ProbeTrace, TraceVantage};

pub const FORMAT: &str = "itschan-vectors/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashVector {
    pub input_hex: String,
    pub digest_hex: String,
}

/// `hash(tag ∥ parts…)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedVector {
    pub name: String,
    pub tag: String,
    pub parts_hex: Vec<String>,
    pub digest_hex: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdfVector {
    pub secret_hex: String,
    pub salt_hex: String,
    pub iterations: u32,
    pub output_hex: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmpSecretVector {
    pub group: String,
    pub fingerprint_initiator_hex: String,
    pub fingerprint_responder_hex: String,
    pub secret_hex: String,
    pub salt_hex: String,
    pub iterations: u32,
    pub x: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmpTranscriptVector {
    pub group: String,
    pub p: u64,
    pub q: u64,
    pub g: u64,
    pub secret: u64,
    /// Scalars in the order each side consumes them.
    pub initiator_scalars: Vec<u64>,
    pub responder_scalars: Vec<u64>,
    pub messages: Vec<Vec<u64>>,
    pub encoded_hex: Vec<String>,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeVector {
    pub delays: Vec<f64>,
    pub guard_fraction: f64,
    pub bits: String,
    pub kept: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreeVector {
    pub a_bits: String,
    pub a_kept: Vec<u32>,
    pub b_bits: String,
    pub b_kept: Vec<u32>,
    pub a_out: String,
    pub b_out: String,
    pub common: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconcileVector {
    pub a: String,
    pub b: String,
    pub block_size: usize,
    pub a_out: String,
    pub b_out: String,
    pub parity_bits_disclosed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSet {
    pub format: String,
    pub hash: Vec<HashVector>,
    pub tagged: Vec<TaggedVector>,
    pub kdf: Vec<KdfVector>,
    pub smp_secret: Vec<SmpSecretVector>,
    pub smp_transcript: SmpTranscriptVector,
    pub quantize: Vec<QuantizeVector>,
    pub agree: Vec<AgreeVector>,
    pub reconcile: Vec<ReconcileVector>,
}

fn bitstr(b: &[bool]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Error::Malformed(format!("bit string {s:?}"))),
        })
        .collect()
}

fn small(v: &BigUint) -> Result<u64> {
    v.to_u64().ok_or_else(|| Error::Internal("value exceeds 64 bits".into()))
}

fn compute_tagged(tag: &str, parts_hex: &[String]) -> Result<String> {
    let parts: Vec<Vec<u8>> = parts_hex.iter().map(|p| from_hex(p)).collect::<Result<_>>()?;
    let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
    Ok(tagged_hash(tag.as_bytes(), &refs).to_hex())
}

fn compute_smp_secret(v: &SmpSecretVector) -> Result<u64> {
    let group = GroupParams::by_name(&v.group).ok_or_else(|| Error::Malformed(format!("group {:?}", v.group)))?;
    let fp = |h: &str| -> Result<Fingerprint> { Ok(Fingerprint(crate::primitives::Digest::from_slice(&from_hex(h)?)?)) };
    let x = SecretBuffer::new(SecretLabel::X, from_hex(&v.secret_hex)?);
    let s = derive_smp_secret(
        &fp(&v.fingerprint_initiator_hex)?,
        &fp(&v.fingerprint_responder_hex)?,
        &x,
        &from_hex(&v.salt_hex)?,
        v.iterations,
        group,
    )?;
    small(&s)
}

/// Runs the SMP exchange with fixed scalars; returns the four messages as
/// numbers and as encoded bytes, plus the outcome at both ends.
fn compute_smp_transcript(v: &SmpTranscriptVector) -> Result<(Vec<Vec<u64>>, Vec<String>, String)> {
    let g = GroupParams::by_name(&v.group).ok_or_else(|| Error::Malformed(format!("group {:?}", v.group)))?;
    let mut sa = FixedScalars::new(&v.initiator_scalars);
    let mut sb = FixedScalars::new(&v.responder_scalars);
    let mut a = SmpState::new(g, BigUint::from(v.secret));
    let mut b = SmpState::new(g, BigUint::from(v.secret));
    let m1 = a.msg1(&mut sa)?;
    let m2 = b.msg2(&m1, &mut sb)?;
    let m3 = a.msg3(&m2, &mut sa)?;
    let (m4, ob) = b.msg4(&m3, &mut sb)?;
    let oa = a.finish_initiator(&m4)?;
    let nums = |vals: Vec<&BigUint>| vals.into_iter().map(small).collect::<Result<Vec<_>>>();
    let messages = vec![nums(m1.values())?, nums(m2.values())?, nums(m3.values())?, nums(m4.values())?];
    let encoded = vec![to_hex(&m1.encode(g)?), to_hex(&m2.encode(g)?), to_hex(&m3.encode(g)?), to_hex(&m4.encode(g)?)];
    let outcome = match (oa, ob) {
        (SmpOutcome::Match, SmpOutcome::Match) => "match",
        (SmpOutcome::NoMatch, SmpOutcome::NoMatch) => "no-match",
        _ => "inconsistent",
    };
    Ok((messages, encoded, outcome.to_string()))
}

fn compute_quantize(delays: &[f64], guard: f64) -> Result<(String, Vec<u32>)> {
    let trace = ProbeTrace::new(TraceVantage::Initiator, delays.iter().enumerate().map(|(i, &d)| (i as u32, d)).collect())?;
    let q = quantize(&trace, guard)?;
    Ok((bitstr(q.bits()), q.kept().to_vec()))
}

fn compute_agree(v: &AgreeVector) -> Result<(String, String, Vec<u32>)> {
    let a = BitString::new(parse_bits(&v.a_bits)?, v.a_kept.clone())?;
    let b = BitString::new(parse_bits(&v.b_bits)?, v.b_kept.clone())?;
    let (x, y) = agree_indices(&a, &b, &mut LeakLedger::default())?;
    Ok((bitstr(x.bits()), bitstr(y.bits()), x.kept().to_vec()))
}

fn compute_reconcile(a: &str, b: &str, block: usize) -> Result<(String, String, usize)> {
    let (x, y, l) =
        reconcile(&BitString::from_bits(parse_bits(a)?), &BitString::from_bits(parse_bits(b)?), block)?;
    Ok((bitstr(x.bits()), bitstr(y.bits()), l.parity_bits_disclosed()))
}

fn hx(b: &[u8]) -> String {
    to_hex(b)
}

/// The full vector set, computed by this implementation.
pub fn generate() -> Result<VectorSet> {
    let secret = b"correct horse".to_vec();
    let salt: Vec<u8> = (0u8..16).collect();
    let ra: Vec<u8> = (0u8..32).collect();
    let rb: Vec<u8> = (32u8..64).collect();
    let amp_bits: Vec<bool> = (0..300).map(|i| (i * 7 + 3) % 5 < 2).collect();

    let hash_vectors: Vec<HashVector> = [&b"abc"[..], b"", b"itschan"]
        .iter()
        .map(|m| HashVector { input_hex: hx(m), digest_hex: crate::primitives::hash(m).to_hex() })
        .collect();

    let tagged_specs: Vec<(&str, &[u8], Vec<Vec<u8>>)> = vec![
        ("combine_keys", tags::RS3, vec![vec![0x11; 32], vec![0x22; 32]]),
        ("rs1", tags::RS1, vec![ra.clone(), rb.clone()]),
        ("rs2_from_nonces", tags::RS2_NONCES_X, vec![ra.clone(), rb.clone(), secret.clone()]),
        ("privacy_amplify", tags::RS2, vec![(amp_bits.len() as u32).to_be_bytes().to_vec(), crate::timing::pack_bits(&amp_bits)]),
    ];
    let mut tagged = Vec::new();
    for (name, tag, parts) in tagged_specs {
        let tag = std::str::from_utf8(tag).map_err(|_| Error::Internal("non-ASCII tag".into()))?.to_string();
        let parts_hex: Vec<String> = parts.iter().map(|p| hx(p)).collect();
        let digest_hex = compute_tagged(&tag, &parts_hex)?;
        tagged.push(TaggedVector { name: name.into(), tag, parts_hex, digest_hex });
    }

    let kdf = [1u32, 1000]
        .iter()
        .map(|&it| {
            Ok(KdfVector {
                secret_hex: hx(&secret),
                salt_hex: hx(&salt),
                iterations: it,
                output_hex: kdf_stretch(&secret, &salt, it)?.to_hex(),
            })
        })
        .collect::<Result<_>>()?;

    let fi = hash(b"initiator-key").to_hex();
    let fr = hash(b"responder-key").to_hex();
    let mut smp_secret = Vec::new();
    for (a, b) in [(&fi, &fr), (&fr, &fi)] {
        let mut v = SmpSecretVector {
            group: GroupParams::tiny().name.into(),
            fingerprint_initiator_hex: a.clone(),
            fingerprint_responder_hex: b.clone(),
            secret_hex: hx(&secret),
            salt_hex: hx(&salt),
            iterations: 1000,
            x: 0,
        };
        v.x = compute_smp_secret(&v)?;
        smp_secret.push(v);
    }

    let g = GroupParams::tiny();
    let mut smp_transcript = SmpTranscriptVector {
        group: g.name.into(),
        p: small(&g.p)?,
        q: small(&g.q)?,
        g: small(&g.g)?,
        secret: smp_secret[0].x,
        initiator_scalars: vec![17, 101, 33, 250, 444, 12, 1000, 321],
        responder_scalars: vec![5, 999, 77, 1200, 345, 61, 812, 99],
        messages: Vec::new(),
        encoded_hex: Vec::new(),
        outcome: String::new(),
    };
    let (m, e, o) = compute_smp_transcript(&smp_transcript)?;
    (smp_transcript.messages, smp_transcript.encoded_hex, smp_transcript.outcome) = (m, e, o);

    let quantize_specs: Vec<(Vec<f64>, f64)> = vec![
        (vec![1.0, 9.0, 2.0, 8.0], 0.0),
        (vec![1.0, 4.5, 5.5, 9.0, 2.0, 8.0], 0.4),
        (vec![5.0, 3.0, 7.0, 5.0, 1.0, 9.0, 4.0, 6.0], 0.25),
    ];
    let quantize = quantize_specs
        .into_iter()
        .map(|(delays, guard)| {
            let (bits, kept) = compute_quantize(&delays, guard)?;
            Ok(QuantizeVector { delays, guard_fraction: guard, bits, kept })
        })
        .collect::<Result<_>>()?;

    let mut agree = vec![AgreeVector {
        a_bits: "0110".into(),
        a_kept: vec![0, 1, 2, 3],
        b_bits: "10".into(),
        b_kept: vec![1, 3],
        a_out: String::new(),
        b_out: String::new(),
        common: Vec::new(),
    }];
    for v in &mut agree {
        (v.a_out, v.b_out, v.common) = compute_agree(v)?;
    }

    let reconcile = [("0101", "0111", 2), ("1100101", "1100101", 3), ("1011001110", "1011101100", 4)]
        .iter()
        .map(|&(a, b, k)| {
            let (a_out, b_out, p) = compute_reconcile(a, b, k)?;
            Ok(ReconcileVector { a: a.into(), b: b.into(), block_size: k, a_out, b_out, parity_bits_disclosed: p })
        })
        .collect::<Result<_>>()?;

    Ok(VectorSet {
        format: FORMAT.into(),
        hash: hash_vectors,
        tagged,
        kdf,
        smp_secret,
        smp_transcript,
        quantize,
        agree,
        reconcile,
    })
}

pub fn to_json(v: &VectorSet) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Internal(format!("serialize vectors: {e}")))
}

pub fn from_json(s: &str) -> Result<VectorSet> {
    serde_json::from_str(s).map_err(|e| Error::Malformed(format!("vector file: {e}")))
}

/// Recomputes every vector. Returns the names of the ones that disagree.
pub fn verify(v: &VectorSet) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    if v.format != FORMAT {
        bad.push(format!("format {:?}", v.format));
    }
    for (i, h) in v.hash.iter().enumerate() {
        if hash(&from_hex(&h.input_hex)?).to_hex() != h.digest_hex {
            bad.push(format!("hash[{i}]"));
        }
    }
    for t in &v.tagged {
        if compute_tagged(&t.tag, &t.parts_hex)? != t.digest_hex {
            bad.push(format!("tagged {}", t.name));
        }
    }
    for (i, k) in v.kdf.iter().enumerate() {
        if kdf_stretch(&from_hex(&k.secret_hex)?, &from_hex(&k.salt_hex)?, k.iterations)?.to_hex() != k.output_hex {
            bad.push(format!("kdf[{i}]"));
        }
    }
    for (i, s) in v.smp_secret.iter().enumerate() {
        if compute_smp_secret(s)? != s.x {
            bad.push(format!("smp_secret[{i}]"));
        }
    }
    let t = &v.smp_transcript;
    let (m, e, o) = compute_smp_transcript(t)?;
    if (m, e, o) != (t.messages.clone(), t.encoded_hex.clone(), t.outcome.clone()) {
        bad.push("smp_transcript".into());
    }
    for (i, q) in v.quantize.iter().enumerate() {
        if compute_quantize(&q.delays, q.guard_fraction)? != (q.bits.clone(), q.kept.clone()) {
            bad.push(format!("quantize[{i}]"));
        }
    }
    for (i, a) in v.agree.iter().enumerate() {
        if compute_agree(a)? != (a.a_out.clone(), a.b_out.clone(), a.common.clone()) {
            bad.push(format!("agree[{i}]"));
        }
    }
    for (i, r) in v.reconcile.iter().enumerate() {
        if compute_reconcile(&r.a, &r.b, r.block_size)? != (r.a_out.clone(), r.b_out.clone(), r.parity_bits_disclosed) {
            bad.push(format!("reconcile[{i}]"));
        }
    }
    Ok(bad)
}
