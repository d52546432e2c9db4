//! Per-party protocol state machine.
//!
//! A session is driven from outside: [`Session::handle_frame`] and
//! [`Session::handle_timer`] consume input and return a [`Step`] with frames
//! to send, events and timers to arm. Nothing blocks and nothing reads a
//! clock; the caller passes the current time.
//!
//! Flow: HELLO both ways, SMP1..SMP4 (RSA-encrypted), NONCE both ways
//! (RSA-encrypted, only after a match), probe exchange, INDICES and PARITY
//! both ways, then REVEAL both ways under RS3 and the data phase.

pub mod deniability;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;

use crate::asym::{
    decrypt_stream, encrypt_stream, export_private, fingerprint, import_private, keygen_labeled, AsymKeyPair,
    Fingerprint, PublicKey, SUPPORTED_BITS,
};
use crate::error::{Error, Result};
use crate::primitives::{
    combine_keys, random_bytes, tagged_hash, tags, Digest, EntropySource, SecretBuffer, SecretLabel,
};
use crate::smp::{derive_smp_secret, GroupParams, Smp1, Smp2, Smp3, Smp4, SmpOutcome, SmpState};
use crate::timing::{
    block_parities, discard_mismatched, entropy_budget, privacy_amplify, quantize, random_probe_base,
    restrict_to_peer, BitString, LeakLedger, ProbeTrace, TimingParams, TraceVantage, MIN_PROBES,
};
use wire::{Frame, FrameType, IndicesMsg};

pub const NONCE_LEN: usize = 32;
pub const SALT_LEN: usize = 16;
pub const X2_LEN: usize = 32;

/// Timer armed by the initiator for the end of the probe window.
pub const TIMER_PROBE_DEADLINE: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }

    /// Direction byte in sealed-frame nonces.
    pub fn direction(self) -> u8 {
        match self {
            Role::Initiator => wire::DIR_INITIATOR,
            Role::Responder => wire::DIR_RESPONDER,
        }
    }

    pub fn nonce_label(self) -> SecretLabel {
        match self {
            Role::Initiator => SecretLabel::RA1,
            Role::Responder => SecretLabel::RB1,
        }
    }

    pub fn key_label(self) -> SecretLabel {
        match self {
            Role::Initiator => SecretLabel::KA1priv,
            Role::Responder => SecretLabel::KB1priv,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Initiator => "initiator",
            Role::Responder => "responder",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Init,
    KeysExchanged,
    Authenticating,
    Authenticated,
    TimingKeygen,
    Secured,
    Data,
    Terminated,
    Aborted,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rs2Mode {
    /// RS2 from probe-timing jitter.
    Timing,
    /// `RS2 = hash(tag ∥ RA1 ∥ RB1 ∥ X)`, no probe exchange.
    HashNoncesX,
}

impl std::str::FromStr for Rs2Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timing" => Ok(Rs2Mode::Timing),
            "hash_nonces_x" => Ok(Rs2Mode::HashNoncesX),
            _ => Err(Error::InvalidParameter(format!("rs2 mode {s:?}"))),
        }
    }
}

impl fmt::Display for Rs2Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rs2Mode::Timing => "timing",
            Rs2Mode::HashNoncesX => "hash_nonces_x",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Small keys and group; fast, not secure.
    Test,
    Default,
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Profile::Test),
            "default" => Ok(Profile::Default),
            _ => Err(Error::InvalidParameter(format!("profile {s:?}"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Test => "test",
            Profile::Default => "default",
        })
    }
}

/// When the initiator replaces X on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenewalPolicy {
    Off,
    /// Renew as soon as the data phase starts.
    EverySession,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub profile: Profile,
    pub rsa_bits: usize,
    pub group: &'static GroupParams,
    pub kdf_iterations: u32,
    pub rs2_mode: Rs2Mode,
    pub timing: TimingParams,
    pub renewal: RenewalPolicy,
    /// Keep the SMP secret in [`Diagnostics`] for attack harnesses.
    pub oracle_hooks: bool,
}

impl SessionConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (rsa_bits, group, kdf_iterations) = match profile {
            Profile::Test => (512, GroupParams::tiny(), 1000),
            Profile::Default => (2048, GroupParams::modp1536(), 10_000),
        };
        SessionConfig {
            profile,
            rsa_bits,
            group,
            kdf_iterations,
            rs2_mode: Rs2Mode::Timing,
            timing: TimingParams::default(),
            renewal: RenewalPolicy::Off,
            oracle_hooks: false,
        }
    }

    pub fn test() -> Self {
        Self::for_profile(Profile::Test)
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_BITS.contains(&self.rsa_bits) {
            return Err(Error::InvalidParameter(format!("rsa_bits must be one of {SUPPORTED_BITS:?}")));
        }
        if self.kdf_iterations == 0 {
            return Err(Error::InvalidParameter("kdf iterations must be >= 1".into()));
        }
        self.timing.validate()
    }
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Default)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Phase(Phase),
    AuthSucceeded,
    AuthFailed,
    Secured,
    PeerRevealed,
    DataReady,
    DataReceived(Vec<u8>),
    XRenewed,
    Terminated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub frame: Frame,
    /// Send this long after the current time, µs.
    pub delay_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerRequest {
    pub token: u64,
    pub delay_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub outbound: Vec<Outbound>,
    pub events: Vec<Event>,
    pub timers: Vec<TimerRequest>,
}

impl Step {
    fn send(&mut self, frame: Frame) {
        self.outbound.push(Outbound { frame, delay_us: 0.0 });
    }
}

/// Public identifiers of derived keys and timing statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub rs1_id: Option<Digest>,
    pub rs2_id: Option<Digest>,
    pub rs3_id: Option<Digest>,
    pub probes_sent: usize,
    pub samples: usize,
    pub kept_bits: usize,
    pub agreed_bits: usize,
    pub final_bits: usize,
    pub ledger: LeakLedger,
    pub entropy_budget: i64,
    /// Only filled with `oracle_hooks`.
    pub smp_secret: Option<BigUint>,
}

#[derive(Debug, Default)]
struct ProbeState {
    first_id: u32,
    n: u32,
    departures: Vec<f64>,
    arrivals: BTreeMap<u32, f64>,
    deadline_passed: bool,
    own: Option<BitString>,
    common: Option<BitString>,
    own_parities: Option<Vec<bool>>,
    ledger: LeakLedger,
}

pub struct Session {
    role: Role,
    phase: Phase,
    config: SessionConfig,
    rng: EntropySource,
    x: SecretBuffer,
    keypair: AsymKeyPair,
    own_hello: Vec<u8>,
    peer_hello: Option<Vec<u8>>,
    peer_public: Option<PublicKey>,
    smp: Option<SmpState>,
    own_nonce: Option<SecretBuffer>,
    peer_nonce: Option<SecretBuffer>,
    rs1: Option<SecretBuffer>,
    rs2: Option<SecretBuffer>,
    rs3: Option<SecretBuffer>,
    probes: Option<ProbeState>,
    send_counter: u64,
    recv_next: u64,
    own_reveal_sent: bool,
    peer_revealed: bool,
    transcript_hash: Digest,
    abort_reason: Option<Error>,
    diagnostics: Diagnostics,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("role", &self.role)
            .field("phase", &self.phase)
            .field("live", &self.live_secrets())
            .finish_non_exhaustive()
    }
}

/// Starts a session: generates the ephemeral keypair and returns the HELLO
/// frame to send.
pub fn session_start(role: Role, x: SecretBuffer, config: SessionConfig, mut rng: EntropySource) -> Result<(Session, Frame)> {
    config.validate()?;
    if x.is_empty() || x.is_erased() {
        return Err(Error::InvalidParameter("shared secret must be non-empty".into()));
    }
    if !matches!(x.label(), SecretLabel::X | SecretLabel::X2) {
        return Err(Error::InvalidParameter(format!("shared secret labelled {}", x.label())));
    }
    let keypair = keygen_labeled(config.rsa_bits, role.key_label(), &mut rng)?;
    let hello = Frame::new(FrameType::Hello, keypair.public.encode());
    let own_hello = hello.encode();
    let mut s = Session {
        role,
        phase: Phase::Init,
        config,
        rng,
        x,
        keypair,
        own_hello: own_hello.clone(),
        peer_hello: None,
        peer_public: None,
        smp: None,
        own_nonce: None,
        peer_nonce: None,
        rs1: None,
        rs2: None,
        rs3: None,
        probes: None,
        send_counter: 0,
        recv_next: 0,
        own_reveal_sent: false,
        peer_revealed: false,
        transcript_hash: tagged_hash(tags::TRANSCRIPT, &[]),
        abort_reason: None,
        diagnostics: Diagnostics::default(),
    };
    s.absorb(b'>', &own_hello);
    Ok((s, hello))
}

/// `hash(tag ∥ initiator nonce ∥ responder nonce)`, the same on both sides.
pub fn derive_rs1(own_nonce: &[u8], peer_nonce: &[u8], role: Role) -> Result<SecretBuffer> {
    if own_nonce.len() != NONCE_LEN || peer_nonce.len() != NONCE_LEN {
        return Err(Error::InvalidParameter(format!("nonces must be {NONCE_LEN} bytes")));
    }
    let (ra, rb) = match role {
        Role::Initiator => (own_nonce, peer_nonce),
        Role::Responder => (peer_nonce, own_nonce),
    };
    Ok(SecretBuffer::new(SecretLabel::RS1, tagged_hash(tags::RS1, &[ra, rb]).0.to_vec()))
}

/// Alternative RS2: `hash(tag ∥ RA1 ∥ RB1 ∥ X)`.
pub fn derive_rs2_from_nonces(ra1: &[u8], rb1: &[u8], x: &[u8]) -> SecretBuffer {
    SecretBuffer::new(SecretLabel::RS2, tagged_hash(tags::RS2_NONCES_X, &[ra1, rb1, x]).0.to_vec())
}

fn wrong_phase(kind: FrameType, phase: Phase) -> Error {
    Error::WrongPhase(format!("{kind:?} frame in {phase}"))
}

fn erase_opt(slot: &mut Option<SecretBuffer>) {
    if let Some(b) = slot.as_mut() {
        b.erase();
    }
}

impl Session {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn abort_reason(&self) -> Option<&Error> {
        self.abort_reason.as_ref()
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn transcript_hash(&self) -> Digest {
        self.transcript_hash
    }

    pub fn own_public(&self) -> &PublicKey {
        &self.keypair.public
    }

    pub fn peer_public(&self) -> Option<&PublicKey> {
        self.peer_public.as_ref()
    }

    pub fn hello_frame(&self) -> &[u8] {
        &self.own_hello
    }

    pub fn smp_outcome(&self) -> Option<SmpOutcome> {
        self.smp.as_ref().map(SmpState::outcome)
    }

    /// Labels of every secret currently held and not erased.
    pub fn live_secrets(&self) -> BTreeSet<SecretLabel> {
        let mut out = BTreeSet::new();
        let bufs = [&self.own_nonce, &self.peer_nonce, &self.rs1, &self.rs2, &self.rs3];
        for b in bufs.into_iter().flatten().chain([&self.x]) {
            if !b.is_erased() {
                out.insert(b.label());
            }
        }
        if !self.keypair.private.is_erased() {
            out.insert(self.keypair.private.label());
        }
        out
    }

    /// A copy of the current long-term secret (X or X2) for the next session.
    pub fn current_x(&self) -> Result<SecretBuffer> {
        self.x.duplicate_as(self.x.label())
    }

    /// Exports this party's ephemeral private key while it is still held.
    /// Used by attack harnesses to model a broken RSA instance.
    pub fn export_ephemeral_private(&self) -> Result<Vec<u8>> {
        export_private(&self.keypair.private)
    }

    /// A copy of RS3, which either party may publish after the fact.
    pub fn export_session_key(&self) -> Result<SecretBuffer> {
        match &self.rs3 {
            Some(k) => k.duplicate_as(SecretLabel::RS3),
            None => Err(Error::WrongPhase(format!("no session key in {}", self.phase))),
        }
    }

    fn absorb(&mut self, dir: u8, frame: &[u8]) {
        self.transcript_hash = tagged_hash(tags::TRANSCRIPT, &[&self.transcript_hash.0, &[dir], frame]);
    }

    fn set_phase(&mut self, step: &mut Step, phase: Phase) {
        if self.phase != phase {
            self.phase = phase;
            step.events.push(Event::Phase(phase));
        }
    }

    fn erase_all_but_x(&mut self) {
        for slot in [&mut self.own_nonce, &mut self.peer_nonce, &mut self.rs1, &mut self.rs2, &mut self.rs3] {
            erase_opt(slot);
        }
        self.keypair.private.erase();
        self.probes = None;
        if self.smp_outcome() == Some(SmpOutcome::Pending) {
            self.smp = None;
        }
        self.diagnostics.smp_secret = None;
    }

    fn abort(&mut self, step: &mut Step, err: Error) {
        if matches!(self.phase, Phase::Aborted | Phase::Terminated) {
            return;
        }
        self.erase_all_but_x();
        self.abort_reason = Some(err);
        self.set_phase(step, Phase::Aborted);
    }

    /// Outbound frame bookkeeping.
    fn emit(&mut self, step: &mut Step, frame: Frame) {
        let bytes = frame.encode();
        self.absorb(b'>', &bytes);
        step.send(frame);
    }

    fn peer_key(&self) -> Result<&PublicKey> {
        self.peer_public.as_ref().ok_or_else(|| Error::Internal("peer key missing".into()))
    }

    fn asym_frame(&mut self, kind: FrameType, plaintext: &[u8]) -> Result<Frame> {
        let peer = self.peer_public.clone().ok_or_else(|| Error::Internal("peer key missing".into()))?;
        Ok(Frame::new(kind, encrypt_stream(&peer, plaintext, &mut self.rng)?))
    }

    fn asym_open(&self, frame: &Frame) -> Result<Vec<u8>> {
        decrypt_stream(&self.keypair.private, &frame.payload)
    }

    fn fingerprints(&self) -> Result<(Fingerprint, Fingerprint)> {
        let own = fingerprint(&self.keypair.public);
        let peer = fingerprint(self.peer_key()?);
        Ok(match self.role {
            Role::Initiator => (own, peer),
            Role::Responder => (peer, own),
        })
    }

    fn smp_secret(&mut self, salt: &[u8]) -> Result<BigUint> {
        let (fi, fr) = self.fingerprints()?;
        let x = derive_smp_secret(&fi, &fr, &self.x, salt, self.config.kdf_iterations, self.config.group)?;
        if self.config.oracle_hooks {
            self.diagnostics.smp_secret = Some(x.clone());
        }
        Ok(x)
    }

    /// Processes one received frame at simulated time `now_us`.
    ///
    /// Recoverable errors ([`Error::is_recoverable`]) leave the session as it
    /// was. Any other error aborts it. Some failures still produce frames for
    /// the peer (the last SMP message, a give-up INDICES); those come back as
    /// `Ok` with the session already in [`Phase::Aborted`].
    pub fn handle_frame(&mut self, bytes: &[u8], now_us: f64) -> Result<Step> {
        if matches!(self.phase, Phase::Aborted | Phase::Terminated) {
            return Err(Error::WrongPhase(format!("session is {}", self.phase)));
        }
        let mut step = Step::default();
        let result = Frame::decode(bytes).and_then(|frame| {
            if frame.kind == FrameType::Hello {
                if let Some(prev) = &self.peer_hello {
                    return Err(if prev == bytes { Error::DuplicateFrame } else { wrong_phase(frame.kind, self.phase) });
                }
            }
            let before = self.transcript_hash;
            self.absorb(b'<', bytes);
            let r = self.dispatch(&frame, now_us, &mut step);
            if matches!(&r, Err(e) if e.is_recoverable()) {
                self.transcript_hash = before;
            }
            r
        });
        match result {
            Ok(()) => Ok(step),
            Err(e) if e.is_recoverable() => Err(e),
            Err(e) => {
                self.abort(&mut Step::default(), e.clone());
                Err(e)
            }
        }
    }

    fn dispatch(&mut self, frame: &Frame, now: f64, step: &mut Step) -> Result<()> {
        use FrameType as T;
        let (role, phase) = (self.role, self.phase);
        let bad = || Err(wrong_phase(frame.kind, phase));
        match (frame.kind, role, phase) {
            (T::Hello, _, Phase::Init) => self.on_hello(frame, step),
            (T::Smp1, Role::Responder, Phase::KeysExchanged) => self.on_smp1(frame, step),
            (T::Smp2, Role::Initiator, Phase::Authenticating) => self.on_smp2(frame, step),
            (T::Smp3, Role::Responder, Phase::Authenticating) => self.on_smp3(frame, step),
            (T::Smp4, Role::Initiator, Phase::Authenticating) => self.on_smp4(frame, step),
            (T::Nonce, _, Phase::Authenticated) => self.on_nonce(frame, now, step),
            (T::Probe, Role::Responder, Phase::TimingKeygen) => self.on_probe(frame, now, step),
            (T::Echo, Role::Initiator, Phase::TimingKeygen) => self.on_echo(frame, now),
            (T::Indices, _, Phase::TimingKeygen) => self.on_indices(frame, step),
            (T::Parity, _, Phase::TimingKeygen) => self.on_parity(frame, step),
            (T::Reveal, _, Phase::Secured) => self.on_reveal(frame, step),
            (T::Data, _, Phase::Data) => {
                let pt = self.open_sealed(frame)?;
                step.events.push(Event::DataReceived(pt));
                Ok(())
            }
            (T::Renew, Role::Responder, Phase::Data) => self.on_renew(frame, step),
            (T::Term, _, Phase::Data) => {
                self.open_sealed(frame)?;
                self.finish_termination(step);
                Ok(())
            }
            _ => bad(),
        }
    }

    fn on_hello(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        let peer = PublicKey::decode(&frame.payload)?;
        if peer.bits() != self.config.rsa_bits {
            return Err(Error::InvalidParameter(format!("peer key is {} bits, expected {}", peer.bits(), self.config.rsa_bits)));
        }
        if peer == self.keypair.public {
            return Err(Error::Malformed("peer echoed our own key".into()));
        }
        self.peer_hello = Some(frame.encode());
        self.peer_public = Some(peer);
        self.set_phase(step, Phase::KeysExchanged);
        if self.role == Role::Initiator {
            let salt = random_bytes(SALT_LEN, &mut self.rng)?;
            let secret = self.smp_secret(&salt)?;
            let mut smp = SmpState::new(self.config.group, secret);
            let m1 = smp.msg1(&mut self.rng)?;
            self.smp = Some(smp);
            let mut pt = salt;
            pt.extend_from_slice(&m1.encode(self.config.group)?);
            let f = self.asym_frame(FrameType::Smp1, &pt)?;
            self.set_phase(step, Phase::Authenticating);
            self.emit(step, f);
        }
        Ok(())
    }

    fn on_smp1(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        let pt = self.asym_open(frame)?;
        if pt.len() < SALT_LEN {
            return Err(Error::Malformed("SMP1 shorter than its salt".into()));
        }
        let m1 = Smp1::decode(&pt[SALT_LEN..])?;
        let secret = self.smp_secret(&pt[..SALT_LEN])?;
        let mut smp = SmpState::new(self.config.group, secret);
        let m2 = smp.msg2(&m1, &mut self.rng)?;
        self.smp = Some(smp);
        self.set_phase(step, Phase::Authenticating);
        let f = self.asym_frame(FrameType::Smp2, &m2.encode(self.config.group)?)?;
        self.emit(step, f);
        Ok(())
    }

    fn on_smp2(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        let m2 = Smp2::decode(&self.asym_open(frame)?)?;
        let smp = self.smp.as_mut().ok_or_else(|| Error::Internal("smp state missing".into()))?;
        let m3 = smp.msg3(&m2, &mut self.rng)?;
        let f = self.asym_frame(FrameType::Smp3, &m3.encode(self.config.group)?)?;
        self.emit(step, f);
        Ok(())
    }

    fn on_smp3(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        let m3 = Smp3::decode(&self.asym_open(frame)?)?;
        let smp = self.smp.as_mut().ok_or_else(|| Error::Internal("smp state missing".into()))?;
        let (m4, outcome) = smp.msg4(&m3, &mut self.rng)?;
        let f = self.asym_frame(FrameType::Smp4, &m4.encode(self.config.group)?)?;
        self.emit(step, f);
        self.settle_smp(outcome, step);
        Ok(())
    }

    fn on_smp4(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        let m4 = Smp4::decode(&self.asym_open(frame)?)?;
        let smp = self.smp.as_mut().ok_or_else(|| Error::Internal("smp state missing".into()))?;
        let outcome = smp.finish_initiator(&m4)?;
        self.settle_smp(outcome, step);
        if outcome == SmpOutcome::Match {
            let nonce = random_bytes(NONCE_LEN, &mut self.rng)?;
            let f = self.asym_frame(FrameType::Nonce, &nonce)?;
            self.own_nonce = Some(SecretBuffer::new(SecretLabel::RA1, nonce));
            self.emit(step, f);
        }
        Ok(())
    }

    fn settle_smp(&mut self, outcome: SmpOutcome, step: &mut Step) {
        self.diagnostics.smp_secret = None;
        if outcome == SmpOutcome::Match {
            step.events.push(Event::AuthSucceeded);
            self.set_phase(step, Phase::Authenticated);
        } else {
            step.events.push(Event::AuthFailed);
            self.abort(step, Error::AuthFailed);
        }
    }

    fn on_nonce(&mut self, frame: &Frame, now: f64, step: &mut Step) -> Result<()> {
        let peer_nonce = self.asym_open(frame)?;
        if peer_nonce.len() != NONCE_LEN {
            return Err(Error::Malformed(format!("nonce of {} bytes", peer_nonce.len())));
        }
        match self.role {
            Role::Responder => {
                if self.own_nonce.is_some() {
                    return Err(wrong_phase(frame.kind, self.phase));
                }
                let nonce = random_bytes(NONCE_LEN, &mut self.rng)?;
                let f = self.asym_frame(FrameType::Nonce, &nonce)?;
                self.own_nonce = Some(SecretBuffer::new(SecretLabel::RB1, nonce));
                self.emit(step, f);
            }
            Role::Initiator => {
                if self.own_nonce.is_none() || self.peer_nonce.is_some() {
                    return Err(wrong_phase(frame.kind, self.phase));
                }
            }
        }
        let own = self.own_nonce.as_ref().expect("set above").expose()?.to_vec();
        let rs1 = derive_rs1(&own, &peer_nonce, self.role)?;
        self.diagnostics.rs1_id = Some(rs1.key_id()?);
        self.rs1 = Some(rs1);
        self.peer_nonce = Some(SecretBuffer::new(self.role.peer().nonce_label(), peer_nonce));
        match self.config.rs2_mode {
            Rs2Mode::HashNoncesX => {
                let (own, peer) = (self.own_nonce.as_ref().unwrap(), self.peer_nonce.as_ref().unwrap());
                let (ra, rb) = match self.role {
                    Role::Initiator => (own.expose()?, peer.expose()?),
                    Role::Responder => (peer.expose()?, own.expose()?),
                };
                self.rs2 = Some(derive_rs2_from_nonces(ra, rb, self.x.expose()?));
                self.enter_secured(step)
            }
            Rs2Mode::Timing => {
                self.set_phase(step, Phase::TimingKeygen);
                self.probes = Some(ProbeState::default());
                if self.role == Role::Initiator {
                    self.schedule_probes(now, step)?;
                }
                Ok(())
            }
        }
    }

    fn schedule_probes(&mut self, now: f64, step: &mut Step) -> Result<()> {
        let t = self.config.timing;
        if t.n_probes < MIN_PROBES {
            let err = Error::InsufficientEntropy(format!("{} probes requested, at least {MIN_PROBES} needed", t.n_probes));
            return self.give_up(step, err);
        }
        let first_id = random_probe_base(t.n_probes, &mut self.rng);
        let st = self.probes.as_mut().expect("probe state");
        st.first_id = first_id;
        st.n = t.n_probes as u32;
        st.departures = (0..t.n_probes).map(|i| now + i as f64 * t.spacing_us).collect();
        for i in 0..t.n_probes {
            let f = Frame::new(FrameType::Probe, wire::probe_payload(first_id + i as u32));
            self.absorb(b'>', &f.encode());
            step.outbound.push(Outbound { frame: f, delay_us: i as f64 * t.spacing_us });
        }
        self.diagnostics.probes_sent = t.n_probes;
        let deadline = (t.n_probes - 1) as f64 * t.spacing_us + t.grace_us;
        step.timers.push(TimerRequest { token: TIMER_PROBE_DEADLINE, delay_us: deadline });
        Ok(())
    }

    /// Tells the peer the timing exchange failed, then aborts.
    fn give_up(&mut self, step: &mut Step, err: Error) -> Result<()> {
        self.emit(step, Frame::new(FrameType::Indices, IndicesMsg::give_up().encode()?));
        self.abort(step, err);
        Ok(())
    }

    fn on_probe(&mut self, frame: &Frame, now: f64, step: &mut Step) -> Result<()> {
        let id = wire::parse_probe(&frame.payload)?;
        let st = self.probes.as_mut().expect("probe state");
        if st.arrivals.insert(id, now).is_some() {
            return Err(Error::DuplicateFrame);
        }
        self.emit(step, Frame::new(FrameType::Echo, wire::probe_payload(id)));
        Ok(())
    }

    fn on_echo(&mut self, frame: &Frame, now: f64) -> Result<()> {
        let id = wire::parse_probe(&frame.payload)?;
        let st = self.probes.as_mut().expect("probe state");
        if st.deadline_passed {
            return Ok(());
        }
        if id.wrapping_sub(st.first_id) >= st.n {
            return Err(Error::FrameRejected(format!("echo for unknown probe {id}")));
        }
        if st.arrivals.contains_key(&id) {
            return Err(Error::DuplicateFrame);
        }
        st.arrivals.insert(id, now);
        Ok(())
    }

    /// Handles an expired timer.
    pub fn handle_timer(&mut self, token: u64, _now_us: f64) -> Result<Step> {
        let mut step = Step::default();
        if token != TIMER_PROBE_DEADLINE || self.phase != Phase::TimingKeygen || self.role != Role::Initiator {
            return Ok(step);
        }
        let t = self.config.timing;
        let st = self.probes.as_mut().expect("probe state");
        if st.deadline_passed {
            return Ok(step);
        }
        st.deadline_passed = true;
        let samples: Vec<(u32, f64)> =
            st.arrivals.iter().map(|(&id, &at)| (id, at - st.departures[(id - st.first_id) as usize])).collect();
        let (first_id, n) = (st.first_id, st.n);
        self.diagnostics.samples = samples.len();
        let own = ProbeTrace::new(TraceVantage::Initiator, samples).and_then(|trace| {
            if trace.len() < MIN_PROBES {
                return Err(Error::InsufficientEntropy(format!("{} of {n} probes returned", trace.len())));
            }
            quantize(&trace, t.guard_fraction)
        });
        match own {
            Ok(bits) => {
                self.diagnostics.kept_bits = bits.len();
                let msg = IndicesMsg { first_id, n_probes: n, kept: bits.kept().to_vec() };
                self.probes.as_mut().unwrap().own = Some(bits);
                self.emit(&mut step, Frame::new(FrameType::Indices, msg.encode()?));
            }
            Err(e) => self.give_up(&mut step, e)?,
        }
        Ok(step)
    }

    /// The peer went silent; abort.
    pub fn handle_timeout(&mut self) -> Step {
        let mut step = Step::default();
        self.abort(&mut step, Error::Timeout);
        step
    }

    fn on_indices(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        let msg = IndicesMsg::decode(&frame.payload)?;
        if msg.is_give_up() {
            return Err(Error::InsufficientEntropy("peer abandoned the timing exchange".into()));
        }
        let t = self.config.timing;
        match self.role {
            Role::Responder => {
                let st = self.probes.as_mut().expect("probe state");
                if st.own.is_some() {
                    return Err(wrong_phase(frame.kind, self.phase));
                }
                let end = u64::from(msg.first_id) + u64::from(msg.n_probes);
                let arrivals: Vec<(u32, f64)> =
                    st.arrivals.iter().filter(|(&id, _)| u64::from(id) < end && id >= msg.first_id).map(|(&i, &a)| (i, a)).collect();
                self.diagnostics.samples = arrivals.len();
                let res = ProbeTrace::responder(&arrivals, t.spacing_us).and_then(|trace| {
                    if trace.len() < MIN_PROBES {
                        return Err(Error::InsufficientEntropy(format!("{} probes arrived", trace.len())));
                    }
                    let own = quantize(&trace, t.guard_fraction)?;
                    let common = restrict_to_peer(&own, &msg.kept)?;
                    Ok((own, common))
                });
                let (own, common) = match res {
                    Ok(v) => v,
                    Err(e) => return self.give_up(step, e),
                };
                let parities = block_parities(&common, t.block_size);
                let reply = IndicesMsg { first_id: msg.first_id, n_probes: msg.n_probes, kept: own.kept().to_vec() };
                self.diagnostics.kept_bits = own.len();
                self.diagnostics.agreed_bits = common.len();
                let st = self.probes.as_mut().unwrap();
                st.ledger.record_index_messages(2);
                st.ledger.record_parities(parities.len());
                st.own = Some(own);
                st.common = Some(common);
                st.own_parities = Some(parities.clone());
                self.emit(step, Frame::new(FrameType::Indices, reply.encode()?));
                self.emit(step, Frame::new(FrameType::Parity, wire::parity_payload(&parities)));
                Ok(())
            }
            Role::Initiator => {
                let st = self.probes.as_mut().expect("probe state");
                let Some(own) = st.own.as_ref() else {
                    return Err(wrong_phase(frame.kind, self.phase));
                };
                if st.common.is_some() || msg.first_id != st.first_id || msg.n_probes != st.n {
                    return Err(Error::Malformed("unexpected INDICES".into()));
                }
                let common = restrict_to_peer(own, &msg.kept)?;
                st.ledger.record_index_messages(2);
                self.diagnostics.agreed_bits = common.len();
                st.common = Some(common);
                Ok(())
            }
        }
    }

    fn on_parity(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        let peer = wire::parse_parity(&frame.payload)?;
        let block = self.config.timing.block_size;
        let st = self.probes.as_mut().expect("probe state");
        let Some(common) = st.common.as_ref() else {
            return Err(wrong_phase(frame.kind, self.phase));
        };
        let own = match (self.role, st.own_parities.as_ref()) {
            (Role::Initiator, None) => block_parities(common, block),
            (Role::Responder, Some(p)) => p.clone(),
            _ => return Err(wrong_phase(frame.kind, self.phase)),
        };
        let kept = discard_mismatched(common, &own, &peer, block)?;
        if self.role == Role::Initiator {
            st.ledger.record_parities(own.len());
            st.own_parities = Some(own.clone());
        }
        let ledger = st.ledger;
        if self.role == Role::Initiator {
            self.emit(step, Frame::new(FrameType::Parity, wire::parity_payload(&own)));
        }
        let margin = self.config.timing.safety_margin;
        self.diagnostics.final_bits = kept.len();
        self.diagnostics.ledger = ledger;
        self.diagnostics.entropy_budget = entropy_budget(&kept, &ledger, margin);
        match privacy_amplify(&kept, &ledger, margin) {
            Ok(rs2) => {
                self.rs2 = Some(rs2);
                self.enter_secured(step)
            }
            Err(e) => {
                self.abort(step, e);
                Ok(())
            }
        }
    }

    fn enter_secured(&mut self, step: &mut Step) -> Result<()> {
        let rs1 = self.rs1.as_ref().ok_or_else(|| Error::Internal("RS1 missing".into()))?;
        let rs2 = self.rs2.as_ref().ok_or_else(|| Error::Internal("RS2 missing".into()))?;
        if self.smp_outcome() != Some(SmpOutcome::Match) {
            return Err(Error::Internal("securing without an SMP match".into()));
        }
        let rs3 = combine_keys(rs1, rs2)?;
        self.diagnostics.rs2_id = Some(rs2.key_id()?);
        self.diagnostics.rs3_id = Some(rs3.key_id()?);
        self.rs3 = Some(rs3);
        self.set_phase(step, Phase::Secured);
        step.events.push(Event::Secured);
        for slot in [&mut self.own_nonce, &mut self.peer_nonce, &mut self.rs1, &mut self.rs2] {
            erase_opt(slot);
        }
        self.probes = None;
        let mut exported = export_private(&self.keypair.private)?;
        let f = self.seal_frame(FrameType::Reveal, &exported)?;
        zeroize::Zeroize::zeroize(&mut exported);
        self.emit(step, f);
        self.keypair.private.erase();
        self.own_reveal_sent = true;
        self.maybe_enter_data(step);
        Ok(())
    }

    fn maybe_enter_data(&mut self, step: &mut Step) {
        if !(self.own_reveal_sent && self.peer_revealed && self.phase == Phase::Secured) {
            return;
        }
        self.set_phase(step, Phase::Data);
        step.events.push(Event::DataReady);
        if self.config.renewal == RenewalPolicy::EverySession && self.role == Role::Initiator {
            if let Ok(renew) = self.renew_x() {
                step.outbound.extend(renew.outbound);
                step.events.extend(renew.events);
            }
        }
    }

    fn on_reveal(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        if self.peer_revealed {
            return Err(Error::FrameRejected("second REVEAL".into()));
        }
        let mut pt = self.open_sealed(frame)?;
        let revealed = import_private(&pt, self.role.peer().key_label());
        zeroize::Zeroize::zeroize(&mut pt);
        let revealed = revealed?;
        if revealed.public() != self.peer_key()? {
            return Err(Error::AuthFailed);
        }
        drop(revealed);
        self.peer_revealed = true;
        step.events.push(Event::PeerRevealed);
        self.maybe_enter_data(step);
        Ok(())
    }

    fn on_renew(&mut self, frame: &Frame, step: &mut Step) -> Result<()> {
        let pt = self.open_sealed(frame)?;
        if pt.len() != X2_LEN {
            return Err(Error::FrameRejected(format!("X2 of {} bytes", pt.len())));
        }
        self.x.erase();
        self.x = SecretBuffer::new(SecretLabel::X2, pt);
        step.events.push(Event::XRenewed);
        Ok(())
    }

    fn rs3_key(&self) -> Result<&[u8]> {
        match &self.rs3 {
            Some(k) => k.expose(),
            None => Err(Error::WrongPhase(format!("no session key in {}", self.phase))),
        }
    }

    fn seal_frame(&mut self, kind: FrameType, plaintext: &[u8]) -> Result<Frame> {
        let payload = wire::seal(self.rs3_key()?, kind, self.role.direction(), self.send_counter, plaintext)?;
        self.send_counter += 1;
        Ok(Frame::new(kind, payload))
    }

    fn open_sealed(&mut self, frame: &Frame) -> Result<Vec<u8>> {
        let opened = wire::open(self.rs3_key()?, frame.kind, &frame.payload)?;
        if opened.direction != self.role.peer().direction() {
            return Err(Error::FrameRejected("reflected frame".into()));
        }
        if opened.counter < self.recv_next {
            return Err(Error::FrameRejected(format!("counter {} replayed or regressed", opened.counter)));
        }
        self.recv_next = opened.counter + 1;
        Ok(opened.plaintext)
    }

    /// Encrypts a data message under RS3. Returns the encoded frame.
    pub fn seal_data(&mut self, plaintext: &[u8]) -> Result<Vec<u8>> {
        if let Some(k) = &self.rs3 {
            if k.is_erased() {
                return Err(Error::UseAfterErase(SecretLabel::RS3));
            }
        }
        if self.phase != Phase::Data {
            return Err(Error::WrongPhase(format!("seal_data in {}", self.phase)));
        }
        let bytes = self.seal_frame(FrameType::Data, plaintext)?.encode();
        self.absorb(b'>', &bytes);
        Ok(bytes)
    }

    /// Decrypts a data frame. Authentication failures and replays are
    /// rejected without aborting.
    pub fn open_data(&mut self, bytes: &[u8]) -> Result<Vec<u8>> {
        let step = self.handle_frame(bytes, 0.0)?;
        step.events
            .into_iter()
            .find_map(|e| match e {
                Event::DataReceived(pt) => Some(pt),
                _ => None,
            })
            .ok_or_else(|| Error::Malformed("not a data frame".into()))
    }

    /// Initiator only: sends a fresh 32-byte X2 and replaces X with it.
    pub fn renew_x(&mut self) -> Result<Step> {
        if self.role != Role::Initiator {
            return Err(Error::WrongPhase("only the initiator renews X".into()));
        }
        if self.phase != Phase::Data {
            return Err(Error::WrongPhase(format!("renew_x in {}", self.phase)));
        }
        let mut step = Step::default();
        let x2 = random_bytes(X2_LEN, &mut self.rng)?;
        let f = self.seal_frame(FrameType::Renew, &x2)?;
        self.emit(&mut step, f);
        self.x.erase();
        self.x = SecretBuffer::new(SecretLabel::X2, x2);
        step.events.push(Event::XRenewed);
        Ok(step)
    }

    /// Ends the session from any phase. In the data phase the peer is told
    /// with a sealed TERM frame. Everything but X (or X2) is erased.
    pub fn terminate(&mut self) -> Step {
        let mut step = Step::default();
        if self.phase == Phase::Terminated {
            return step;
        }
        if self.phase == Phase::Data {
            if let Ok(f) = self.seal_frame(FrameType::Term, &[]) {
                self.emit(&mut step, f);
            }
        }
        self.finish_termination(&mut step);
        step
    }

    fn finish_termination(&mut self, step: &mut Step) {
        self.erase_all_but_x();
        self.set_phase(step, Phase::Terminated);
        step.events.push(Event::Terminated);
    }
}
