//! Adversaries: passive taps, the active man in the middle, and the oracle
//! toggles that stand in for broken RSA or a broken KDF.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;

use super::channel::{ChannelConfig, Hops, Link, Tap, Vantage};
use super::sim::{derive_seed, Behavior, Engine, RunOptions, TimingTruth};
use crate::asym::{decrypt_stream, fingerprint, import_private, PrivateKey, PublicKey};
use crate::error::{Error, Result};
use crate::primitives::{ct_equal, EntropySource, SecretBuffer, SecretLabel};
use crate::session::deniability::Transcript;
use crate::session::wire::{self, Frame, FrameType, IndicesMsg};
use crate::session::{derive_rs1, session_start, Role, Session, SessionConfig, SALT_LEN};
use crate::smp::{derive_smp_secret, GroupParams};
use crate::timing::{discard_mismatched, quantize, restrict_to_peer, BitString, ProbeTrace, TimingParams, TraceVantage};

/// Size of the memorable-secret space the dictionary attack walks.
pub const X_SPACE: u32 = 1024;

/// The `n`-th memorable secret: four decimal digits.
pub fn x_candidate(n: u32) -> String {
    format!("{n:04}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryMode {
    None,
    /// Packet mirroring at the midpoint with coarse clocks.
    Mirror,
    /// Hardware timestamping at the configured vantage.
    Timestamp,
    /// Active interception: Eve runs one session towards each party.
    Mitm { knows_x: bool },
}

impl AdversaryMode {
    pub fn is_passive(self) -> bool {
        !matches!(self, AdversaryMode::Mitm { .. })
    }
}

impl fmt::Display for AdversaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryMode::None => f.write_str("none"),
            AdversaryMode::Mirror => f.write_str("mirror"),
            AdversaryMode::Timestamp => f.write_str("timestamp"),
            AdversaryMode::Mitm { .. } => f.write_str("mitm"),
        }
    }
}

impl FromStr for AdversaryMode {
    type Err = Error;

    /// `none`, `mirror`, `timestamp` or `mitm`; a MITM parsed this way does
    /// not know X.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AdversaryMode::None),
            "mirror" => Ok(AdversaryMode::Mirror),
            "timestamp" => Ok(AdversaryMode::Timestamp),
            "mitm" => Ok(AdversaryMode::Mitm { knows_x: false }),
            _ => Err(Error::InvalidParameter(format!("unknown adversary mode {s:?}"))),
        }
    }
}

pub fn parse_vantage(s: &str) -> Result<Vantage> {
    match s {
        "midpoint" => Ok(Vantage::Midpoint),
        "both-endpoints" | "both_endpoints" => Ok(Vantage::BothEndpoints),
        _ => Err(Error::InvalidParameter(format!("unknown vantage {s:?}"))),
    }
}

pub fn vantage_name(v: Vantage) -> &'static str {
    match v {
        Vantage::Midpoint => "midpoint",
        Vantage::BothEndpoints => "both-endpoints",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryConfig {
    pub mode: AdversaryMode,
    pub vantage: Vantage,
    /// Standard deviation of Eve's clock noise, µs.
    pub sigma_e: f64,
    /// Eve is handed both ephemeral private keys.
    pub break_rsa: bool,
    /// Eve is handed the SMP secret and may invert the KDF by dictionary.
    pub break_kdf: bool,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig { mode: AdversaryMode::None, vantage: Vantage::Midpoint, sigma_e: 0.0, break_rsa: false, break_kdf: false }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return Err(Error::InvalidParameter("sigma_e must be >= 0".into()));
        }
        if self.mode == AdversaryMode::Mirror && self.vantage != Vantage::Midpoint {
            return Err(Error::InvalidParameter("a mirror port sits at the midpoint".into()));
        }
        Ok(())
    }

    /// The passive tap this adversary places on the link, if any.
    pub fn tap(&self, seed: u64) -> Result<Option<Tap>> {
        match self.mode {
            AdversaryMode::Mirror | AdversaryMode::Timestamp => Ok(Some(Tap::new(self.vantage, self.sigma_e, seed)?)),
            _ => Ok(None),
        }
    }
}

/// The cleartext reconciliation frames of one timing exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Overheard {
    pub initiator_indices: IndicesMsg,
    pub responder_indices: IndicesMsg,
    pub initiator_parity: Vec<bool>,
    pub responder_parity: Vec<bool>,
}

impl Overheard {
    /// `None` unless both INDICES and both PARITY frames crossed the wire.
    pub fn from_transcript(t: &Transcript) -> Option<Self> {
        let mut idx: [Option<IndicesMsg>; 2] = [None, None];
        let mut par: [Option<Vec<bool>>; 2] = [None, None];
        for e in t {
            let Ok(f) = Frame::decode(&e.bytes) else { continue };
            let slot = usize::from(e.from == Role::Responder);
            match f.kind {
                FrameType::Indices => idx[slot] = IndicesMsg::decode(&f.payload).ok().filter(|m| !m.is_give_up()),
                FrameType::Parity => par[slot] = wire::parse_parity(&f.payload).ok(),
                _ => {}
            }
        }
        let [Some(ii), Some(ri)] = idx else { return None };
        let [Some(ip), Some(rp)] = par else { return None };
        Some(Overheard { initiator_indices: ii, responder_indices: ri, initiator_parity: ip, responder_parity: rp })
    }

    /// Probe ids surviving index agreement and parity discard, which both
    /// parties amplify.
    pub fn final_ids(&self, block_size: usize) -> Result<Vec<u32>> {
        let placeholder = BitString::new(vec![false; self.initiator_indices.kept.len()], self.initiator_indices.kept.clone())?;
        let common = restrict_to_peer(&placeholder, &self.responder_indices.kept)?;
        let kept = discard_mismatched(&common, &self.initiator_parity, &self.responder_parity, block_size)?;
        Ok(kept.kept().to_vec())
    }
}

/// The initiator's final bits, rebuilt from simulator ground truth and the
/// public reconciliation frames. Used as the scoring reference.
pub fn reference_bits(truth: &TimingTruth, overheard: &Overheard, params: &TimingParams) -> Result<BitString> {
    let own = quantize(&truth.initiator_trace()?, params.guard_fraction)?;
    let common = restrict_to_peer(&own, &overheard.responder_indices.kept)?;
    discard_mismatched(&common, &overheard.initiator_parity, &overheard.responder_parity, params.block_size)
}

/// Eve's estimate of the final bits: her own trace quantized without a
/// guard band, aligned to the publicly agreed positions. Positions she never
/// observed are absent from the result.
pub fn eve_timing_pipeline(trace: &ProbeTrace, overheard: Option<&Overheard>, block_size: usize) -> Result<BitString> {
    let Some(o) = overheard else { return Ok(BitString::default()) };
    if trace.is_empty() {
        return Ok(BitString::default());
    }
    let bits = match quantize(trace, 0.0) {
        Ok(b) => b,
        Err(Error::InsufficientEntropy(_)) => return Ok(BitString::default()),
        Err(e) => return Err(e),
    };
    Ok(bits.restrict(&o.final_ids(block_size)?))
}

/// Eve's best full-length guess at `ids`: her bit where she has one, zero
/// elsewhere.
pub fn fill_guess(eve: &BitString, ids: &[u32]) -> Result<BitString> {
    let bits = ids
        .iter()
        .map(|id| eve.kept().binary_search(id).map(|k| eve.bits()[k]).unwrap_or(false))
        .collect();
    BitString::new(bits, ids.to_vec())
}

/// An empty trace, for an adversary without a tap.
pub fn no_trace() -> ProbeTrace {
    ProbeTrace::empty(TraceVantage::Eavesdropper)
}

/// What a broken RSA instance yields: the decrypted nonces and RS1.
pub struct RsaBreak {
    pub keys: [PrivateKey; 2],
    pub ra1: Vec<u8>,
    pub rb1: Vec<u8>,
    pub rs1: SecretBuffer,
}

/// Imports the two exported ephemeral private keys.
pub fn import_keys(exported: &[Vec<u8>; 2]) -> Result<[PrivateKey; 2]> {
    Ok([import_private(&exported[0], SecretLabel::KA1priv)?, import_private(&exported[1], SecretLabel::KB1priv)?])
}

fn find_frames(t: &Transcript, kind: FrameType) -> Vec<(Role, Frame)> {
    t.iter()
        .filter_map(|e| Frame::decode(&e.bytes).ok().map(|f| (e.from, f)))
        .filter(|(_, f)| f.kind == kind)
        .collect()
}

/// Decrypts both NONCE frames with the handed-over keys and derives RS1.
pub fn break_rsa(t: &Transcript, keys: [PrivateKey; 2]) -> Result<RsaBreak> {
    let mut ra1 = None;
    let mut rb1 = None;
    for (from, f) in find_frames(t, FrameType::Nonce) {
        match from {
            Role::Initiator => ra1 = Some(decrypt_stream(&keys[1], &f.payload)?),
            Role::Responder => rb1 = Some(decrypt_stream(&keys[0], &f.payload)?),
        }
    }
    let (Some(ra1), Some(rb1)) = (ra1, rb1) else {
        return Err(Error::Malformed("transcript lacks NONCE frames".into()));
    };
    let rs1 = derive_rs1(&ra1, &rb1, Role::Initiator)?;
    Ok(RsaBreak { keys, ra1, rb1, rs1 })
}

/// Dictionary inversion of the SMP secret derivation. Needs the salt, which
/// only a reader of SMP1 has, so it builds on an RSA break.
pub fn break_kdf(
    t: &Transcript,
    rsa: &RsaBreak,
    smp_secret: &BigUint,
    iterations: u32,
    group: &GroupParams,
) -> Result<Option<String>> {
    let hellos = find_frames(t, FrameType::Hello);
    let key = |r: Role| -> Result<PublicKey> {
        let (_, f) = hellos.iter().find(|(from, _)| *from == r).ok_or_else(|| Error::Malformed("missing HELLO".into()))?;
        PublicKey::decode(&f.payload)
    };
    let (fi, fr) = (fingerprint(&key(Role::Initiator)?), fingerprint(&key(Role::Responder)?));
    let smp1 = find_frames(t, FrameType::Smp1);
    let (_, f) = smp1.first().ok_or_else(|| Error::Malformed("missing SMP1".into()))?;
    let pt = decrypt_stream(&rsa.keys[1], &f.payload)?;
    if pt.len() < SALT_LEN {
        return Err(Error::Malformed("short SMP1".into()));
    }
    let salt = &pt[..SALT_LEN];
    for n in 0..X_SPACE {
        let cand = x_candidate(n);
        let x = SecretBuffer::new(SecretLabel::X, cand.clone().into_bytes());
        if derive_smp_secret(&fi, &fr, &x, salt, iterations, group)? == *smp_secret {
            return Ok(Some(cand));
        }
    }
    Ok(None)
}

/// True if `key` authenticates any sealed frame in the transcript.
pub fn key_opens_transcript(t: &Transcript, key: &SecretBuffer) -> bool {
    let Ok(k) = key.expose() else { return false };
    t.iter().filter_map(|e| Frame::decode(&e.bytes).ok()).filter(|f| f.kind.is_sealed()).any(|f| wire::open(k, f.kind, &f.payload).is_ok())
}

/// Node indices of a man-in-the-middle run.
pub const ALICE: usize = 0;
pub const EVE_R: usize = 1;
pub const EVE_I: usize = 2;
pub const BOB: usize = 3;

/// A finished man-in-the-middle run. Alice talks to Eve's responder over
/// the first hop; Eve's initiator talks to Bob over the second.
pub struct MitmRun {
    pub engine: Engine,
}

impl MitmRun {
    pub fn session(&self, node: usize) -> &Session {
        &self.engine.nodes[node].session
    }

    fn leg_keys_equal(&self, honest: usize, eve: usize) -> bool {
        let (h, e) = (&self.engine.nodes[honest], &self.engine.nodes[eve]);
        match (&h.rs3_at_data, &e.rs3_at_data) {
            (Some(a), Some(b)) => match (a.expose(), b.expose()) {
                (Ok(a), Ok(b)) => ct_equal(a, b),
                _ => false,
            },
            _ => false,
        }
    }

    /// Eve holds the session key of both legs.
    pub fn eve_holds_both_keys(&self) -> bool {
        self.leg_keys_equal(ALICE, EVE_R) && self.leg_keys_equal(BOB, EVE_I)
    }

    pub fn eve_knows_both_rs1(&self) -> bool {
        let same = |h: usize, e: usize| {
            let (a, b) = (self.session(h).diagnostics().rs1_id, self.session(e).diagnostics().rs1_id);
            a.is_some() && a == b
        };
        same(ALICE, EVE_R) && same(BOB, EVE_I)
    }

    /// Per leg, 1.0 when Eve's RS2 equals the honest party's, else 0.5
    /// (no timing exchange took place, or it failed). Minimum over legs.
    pub fn eve_rs2_recovery(&self) -> f64 {
        let leg = |h: usize, e: usize| {
            let (a, b) = (self.session(h).diagnostics().rs2_id, self.session(e).diagnostics().rs2_id);
            if a.is_some() && a == b {
                1.0
            } else {
                0.5
            }
        };
        f64::min(leg(ALICE, EVE_R), leg(BOB, EVE_I))
    }

    /// Either honest party saw the secret comparison fail.
    pub fn detected(&self) -> bool {
        [ALICE, BOB].iter().any(|&n| self.session(n).abort_reason().is_some_and(Error::is_auth_failure))
    }

    pub fn honest_aborted(&self) -> bool {
        [ALICE, BOB].iter().any(|&n| self.session(n).abort_reason().is_some())
    }

    /// Every data message arrived end to end exactly as sent.
    pub fn end_to_end_intact(&self) -> bool {
        let n = &self.engine.nodes;
        n[BOB].received == n[ALICE].sent && n[ALICE].received == n[BOB].sent
    }
}

/// Runs Alice and Bob with Eve spliced in between. Eve uses `eve_x` in both
/// of her sessions and, with `tamper`, alters every relayed message.
pub fn run_mitm(
    channel: ChannelConfig,
    config: &SessionConfig,
    honest_x: [SecretBuffer; 2],
    eve_x: &SecretBuffer,
    opts: RunOptions,
    tamper: bool,
    seed: u64,
) -> Result<MitmRun> {
    let [xa, xb] = honest_x;
    let start = |role, x, i| session_start(role, x, config.clone(), EntropySource::seeded(derive_seed(seed, i)));
    let (alice, ha) = start(Role::Initiator, xa, 1)?;
    let (eve_r, her) = start(Role::Responder, eve_x.duplicate_as(eve_x.label())?, 5)?;
    let (eve_i, hei) = start(Role::Initiator, eve_x.duplicate_as(eve_x.label())?, 6)?;
    let (bob, hb) = start(Role::Responder, xb, 2)?;
    let mut engine = Engine::new();
    let first = engine.add_edge(ALICE, EVE_R, Link::new(channel.clone(), Hops::First, 0)?, None);
    let second = engine.add_edge(EVE_I, BOB, Link::new(channel, Hops::Second, 1)?, None);
    engine.add_node(
        alice,
        ha,
        first,
        Behavior::Endpoint {
            payloads: opts.initiator_payloads,
            expect: opts.responder_payloads.len(),
            closer: true,
            renew_before_close: opts.renew_x,
        },
    );
    engine.add_node(eve_r, her, first, Behavior::Relay { partner: EVE_I, tamper });
    engine.add_node(eve_i, hei, second, Behavior::Relay { partner: EVE_R, tamper });
    engine.add_node(
        bob,
        hb,
        second,
        Behavior::Endpoint { payloads: opts.responder_payloads, expect: 0, closer: false, renew_before_close: false },
    );
    engine.run();
    Ok(MitmRun { engine })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::sim::default_payloads;
    use crate::session::{Phase, Rs2Mode};

    fn x(s: &str) -> SecretBuffer {
        SecretBuffer::new(SecretLabel::X, s.as_bytes().to_vec())
    }

    fn opts() -> RunOptions {
        let (i, r) = default_payloads();
        RunOptions { initiator_payloads: i, responder_payloads: r, ..Default::default() }
    }

    #[test]
    fn mitm_with_x_owns_both_legs() {
        let cfg = SessionConfig { rs2_mode: Rs2Mode::HashNoncesX, ..SessionConfig::test() };
        let run = run_mitm(ChannelConfig::default(), &cfg, [x("0042"), x("0042")], &x("0042"), opts(), true, 1).unwrap();
        assert!(run.eve_holds_both_keys());
        assert!(run.eve_knows_both_rs1());
        assert!(!run.detected());
        assert!(!run.end_to_end_intact());
        assert_eq!(run.engine.nodes[BOB].received[0], b"hello bob [altered]");
        for n in [ALICE, BOB] {
            assert_eq!(run.session(n).phase(), Phase::Terminated);
        }
    }

    #[test]
    fn mitm_without_x_is_detected_at_both_ends() {
        let cfg = SessionConfig::test();
        let run = run_mitm(ChannelConfig::default(), &cfg, [x("0042"), x("0042")], &x("0000"), opts(), false, 2).unwrap();
        assert!(run.detected());
        assert!(!run.eve_holds_both_keys());
        for n in [ALICE, BOB] {
            assert_eq!(run.session(n).abort_reason(), Some(&Error::AuthFailed));
        }
        assert!(run.engine.wire.iter().all(|w| w.bytes[0] != FrameType::Nonce as u8));
        assert_eq!(run.eve_rs2_recovery(), 0.5);
    }

    #[test]
    fn mode_and_vantage_parse() {
        assert_eq!("mirror".parse::<AdversaryMode>().unwrap(), AdversaryMode::Mirror);
        assert!("sniffer".parse::<AdversaryMode>().is_err());
        assert_eq!(parse_vantage("both-endpoints").unwrap(), Vantage::BothEndpoints);
        let bad = AdversaryConfig { mode: AdversaryMode::Mirror, vantage: Vantage::BothEndpoints, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(AdversaryConfig { sigma_e: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn fill_guess_pads_with_zero() {
        let eve = BitString::new(vec![true, true], vec![3, 9]).unwrap();
        let g = fill_guess(&eve, &[1, 3, 5]).unwrap();
        assert_eq!(g.bits(), &[false, true, false]);
    }
}
