//! Transcript forging and frame-level validation.
//!
//! After the reveal, anyone holding RS3 can decrypt both private keys and
//! therefore re-create every RSA-encrypted frame and every sealed data
//! frame with contents of their choosing. Nothing in a transcript is signed,
//! so the checks a third party can run from the transcript alone accept the
//! forgery exactly as they accept the original.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use super::wire::{self, Frame, FrameType};
use super::{Role, NONCE_LEN, SALT_LEN};
use crate::asym::{decrypt_stream, encrypt_stream, import_private, PrivateKey, PublicKey};
use crate::error::{Error, Result};
use crate::primitives::SecretBuffer;
use crate::smp::{Smp1, Smp2, Smp3, Smp4};

/// One frame as it crossed the wire, tagged with its sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub from: Role,
    pub bytes: Vec<u8>,
}

pub type Transcript = Vec<TranscriptEntry>;

/// Result of [`validate_transcript`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Verdict {
    pub frame_counts: BTreeMap<FrameType, usize>,
    pub well_formed: bool,
    pub hello_keys_valid: bool,
    pub reveals_match_hellos: bool,
    pub asym_frames_decrypt: bool,
    pub sealed_frames_authentic: bool,
    pub problems: Vec<String>,
}

impl Verdict {
    pub fn valid(&self) -> bool {
        self.well_formed
            && self.hello_keys_valid
            && self.reveals_match_hellos
            && self.asym_frames_decrypt
            && self.sealed_frames_authentic
    }
}

fn decode_all(t: &Transcript) -> Result<Vec<(Role, Frame)>> {
    t.iter().map(|e| Frame::decode(&e.bytes).map(|f| (e.from, f))).collect()
}

fn role_index(r: Role) -> usize {
    match r {
        Role::Initiator => 0,
        Role::Responder => 1,
    }
}

/// Private keys recovered from the two REVEAL frames.
fn revealed_keys(frames: &[(Role, Frame)], rs3: &[u8]) -> Result<[PrivateKey; 2]> {
    let mut keys: [Option<PrivateKey>; 2] = [None, None];
    for (from, f) in frames.iter().filter(|(_, f)| f.kind == FrameType::Reveal) {
        let opened = wire::open(rs3, f.kind, &f.payload)?;
        keys[role_index(*from)] = Some(import_private(&opened.plaintext, from.key_label())?);
    }
    match keys {
        [Some(a), Some(b)] => Ok([a, b]),
        _ => Err(Error::CannotForge("transcript lacks reveal frames from both parties".into())),
    }
}

fn parse_asym_plaintext(kind: FrameType, pt: &[u8]) -> Result<()> {
    match kind {
        FrameType::Smp1 => {
            if pt.len() < SALT_LEN {
                return Err(Error::Malformed("short SMP1".into()));
            }
            Smp1::decode(&pt[SALT_LEN..]).map(drop)
        }
        FrameType::Smp2 => Smp2::decode(pt).map(drop),
        FrameType::Smp3 => Smp3::decode(pt).map(drop),
        FrameType::Smp4 => Smp4::decode(pt).map(drop),
        FrameType::Nonce if pt.len() == NONCE_LEN => Ok(()),
        _ => Err(Error::Malformed(format!("{kind:?} plaintext"))),
    }
}

/// Every check a third party holding the published RS3 can run.
pub fn validate_transcript(transcript: &Transcript, rs3: &SecretBuffer) -> Verdict {
    let mut v = Verdict::default();
    let frames = match decode_all(transcript) {
        Ok(f) => f,
        Err(e) => {
            v.problems.push(format!("decode: {e}"));
            return v;
        }
    };
    v.well_formed = true;
    for (_, f) in &frames {
        *v.frame_counts.entry(f.kind).or_default() += 1;
    }
    let Ok(key) = rs3.expose() else {
        v.problems.push("session key erased".into());
        return v;
    };

    let mut hellos: [Option<PublicKey>; 2] = [None, None];
    v.hello_keys_valid = true;
    for (from, f) in frames.iter().filter(|(_, f)| f.kind == FrameType::Hello) {
        match PublicKey::decode(&f.payload) {
            Ok(k) if hellos[role_index(*from)].is_none() => hellos[role_index(*from)] = Some(k),
            _ => {
                v.hello_keys_valid = false;
                v.problems.push(format!("bad HELLO from {from}"));
            }
        }
    }
    if hellos.iter().any(Option::is_none) {
        v.hello_keys_valid = false;
        v.problems.push("missing HELLO".into());
    }

    let keys = match revealed_keys(&frames, key) {
        Ok(k) => k,
        Err(e) => {
            v.problems.push(format!("reveal: {e}"));
            return v;
        }
    };
    v.reveals_match_hellos = keys.iter().zip(&hellos).all(|(k, h)| h.as_ref() == Some(k.public()));

    v.asym_frames_decrypt = true;
    for (from, f) in frames.iter().filter(|(_, f)| f.kind.is_asym()) {
        let recipient = &keys[role_index(from.peer())];
        let ok = decrypt_stream(recipient, &f.payload).and_then(|pt| parse_asym_plaintext(f.kind, &pt));
        if let Err(e) = ok {
            v.asym_frames_decrypt = false;
            v.problems.push(format!("{:?} from {from}: {e}", f.kind));
        }
    }

    v.sealed_frames_authentic = true;
    let mut next = [0u64; 2];
    for (from, f) in frames.iter().filter(|(_, f)| f.kind.is_sealed()) {
        match wire::open(key, f.kind, &f.payload) {
            Ok(o) if o.direction == from.direction() && o.counter >= next[role_index(*from)] => {
                next[role_index(*from)] = o.counter + 1;
            }
            _ => {
                v.sealed_frames_authentic = false;
                v.problems.push(format!("{:?} from {from} fails authentication", f.kind));
            }
        }
    }
    v
}

/// Rewrites `transcript` so that its data frames carry `fake_plaintexts`
/// (in order) and every RSA-encrypted frame is freshly re-encrypted. Needs
/// the session key and the two reveal frames.
pub fn forge_transcript(
    transcript: &Transcript,
    rs3: &SecretBuffer,
    fake_plaintexts: &[Vec<u8>],
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Transcript> {
    let frames = decode_all(transcript)?;
    let key = rs3.expose()?;
    let keys = revealed_keys(&frames, key)?;
    let n_data = frames.iter().filter(|(_, f)| f.kind == FrameType::Data).count();
    if n_data != fake_plaintexts.len() {
        return Err(Error::CannotForge(format!("{n_data} data frames but {} replacements", fake_plaintexts.len())));
    }
    let mut fakes = fake_plaintexts.iter();
    let mut out = Transcript::with_capacity(frames.len());
    for (from, f) in frames {
        let payload = match f.kind {
            k if k.is_asym() => {
                let recipient = &keys[role_index(from.peer())];
                let pt = decrypt_stream(recipient, &f.payload)?;
                encrypt_stream(recipient.public(), &pt, rng)?
            }
            FrameType::Data => {
                let o = wire::open(key, f.kind, &f.payload)?;
                wire::seal(key, f.kind, o.direction, o.counter, fakes.next().expect("counted"))?
            }
            _ => f.payload,
        };
        out.push(TranscriptEntry { from, bytes: Frame::new(f.kind, payload).encode() });
    }
    Ok(out)
}
