//! Discrete-event engine: sessions joined by links, driven by a virtual
//! clock. Frames are put on a link when their send time comes up, so link
//! randomness is consumed in wire order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use num_bigint::BigUint;

use super::channel::{ChannelConfig, Direction, Hops, Link, Tap};
use crate::error::{Error, Result};
use crate::primitives::{ct_equal, EntropySource, SecretBuffer, SecretLabel};
use crate::session::deniability::{Transcript, TranscriptEntry};
use crate::session::wire::{self, Frame, FrameType};
use crate::session::{session_start, Event, Phase, Role, Session, SessionConfig, Step};
use crate::timing::{ProbeTrace, TraceVantage};

/// Simulated time after which every unfinished session is timed out, µs.
pub const MAX_SIM_TIME_US: f64 = 3_600e6;

/// Independent 64-bit seed for sub-stream `i` of `seed`.
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogKind {
    Event(Event),
    Rejected(Error),
    Fatal(Error),
    TimedOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub t_us: f64,
    pub node: usize,
    pub kind: LogKind,
}

/// One frame put on a link.
#[derive(Debug, Clone, PartialEq)]
pub struct WireRecord {
    pub edge: usize,
    pub from: Role,
    pub depart_us: f64,
    pub arrive_us: Option<f64>,
    pub bytes: Vec<u8>,
}

/// Passive tap timestamps of probes and echoes, by probe id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TapRecord {
    pub probe: BTreeMap<u32, f64>,
    pub echo: BTreeMap<u32, f64>,
}

impl TapRecord {
    /// The adversary's delay trace: echo stamp minus probe stamp.
    pub fn trace(&self) -> Result<ProbeTrace> {
        let samples = self.probe.iter().filter_map(|(id, p)| self.echo.get(id).map(|e| (*id, e - p))).collect();
        ProbeTrace::from_shifted(TraceVantage::Eavesdropper, samples)
    }
}

/// What the initiator end of an edge saw, exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimingTruth {
    pub depart: BTreeMap<u32, f64>,
    pub arrive: BTreeMap<u32, f64>,
    pub deadline_us: Option<f64>,
}

impl TimingTruth {
    /// The initiator's round-trip trace as its session recorded it.
    pub fn initiator_trace(&self) -> Result<ProbeTrace> {
        let cutoff = self.deadline_us.unwrap_or(f64::INFINITY);
        let samples = self
            .arrive
            .iter()
            .filter(|(_, &a)| a < cutoff)
            .filter_map(|(id, a)| self.depart.get(id).map(|d| (*id, a - d)))
            .collect();
        ProbeTrace::new(TraceVantage::Initiator, samples)
    }
}

#[derive(Debug, Clone)]
pub enum Behavior {
    /// An honest party: sends `payloads` once in the data phase. The closer
    /// terminates once `expect` messages have arrived.
    Endpoint { payloads: Vec<Vec<u8>>, expect: usize, closer: bool, renew_before_close: bool },
    /// One leg of a man in the middle: re-sends every received data message
    /// through `partner`, optionally altered.
    Relay { partner: usize, tamper: bool },
}

pub struct Node {
    pub session: Session,
    pub edge: usize,
    pub behavior: Behavior,
    pub received: Vec<Vec<u8>>,
    pub live_at_data: Option<BTreeSet<SecretLabel>>,
    /// Copy of RS3 taken on entering the data phase, for comparisons.
    pub rs3_at_data: Option<SecretBuffer>,
    /// Data messages this node sealed and sent, in order.
    pub sent: Vec<Vec<u8>>,
    /// SMP secret captured through the oracle hook, if enabled.
    pub oracle_smp_secret: Option<BigUint>,
    pending: Vec<Vec<u8>>,
    sent_payloads: bool,
}

pub struct Edge {
    /// Node on the initiator side.
    pub a: usize,
    pub b: usize,
    pub link: Link,
    pub tap: Option<Tap>,
    pub tapped: TapRecord,
    pub truth: TimingTruth,
}

#[derive(Debug, Clone, PartialEq)]
enum EvKind {
    Transmit(Vec<u8>),
    Deliver(Vec<u8>),
    Timer(u64),
}

#[derive(Debug, Clone, PartialEq)]
struct Ev {
    t: f64,
    seq: u64,
    node: usize,
    kind: EvKind,
}

impl Eq for Ev {}

impl Ord for Ev {
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct Engine {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub log: Vec<LogEntry>,
    pub wire: Vec<WireRecord>,
    queue: BinaryHeap<Ev>,
    seq: u64,
    now: f64,
}

impl Engine {
    pub fn new() -> Self {
        Engine { nodes: Vec::new(), edges: Vec::new(), log: Vec::new(), wire: Vec::new(), queue: BinaryHeap::new(), seq: 0, now: 0.0 }
    }

    pub fn add_edge(&mut self, a: usize, b: usize, link: Link, tap: Option<Tap>) -> usize {
        self.edges.push(Edge { a, b, link, tap, tapped: TapRecord::default(), truth: TimingTruth::default() });
        self.edges.len() - 1
    }

    /// Adds a started session; `hello` goes out at time zero.
    pub fn add_node(&mut self, session: Session, hello: Frame, edge: usize, behavior: Behavior) -> usize {
        self.nodes.push(Node {
            session,
            edge,
            behavior,
            received: Vec::new(),
            live_at_data: None,
            rs3_at_data: None,
            sent: Vec::new(),
            oracle_smp_secret: None,
            pending: Vec::new(),
            sent_payloads: false,
        });
        let id = self.nodes.len() - 1;
        self.push(0.0, id, EvKind::Transmit(hello.encode()));
        id
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    fn push(&mut self, t: f64, node: usize, kind: EvKind) {
        self.seq += 1;
        self.queue.push(Ev { t, seq: self.seq, node, kind });
    }

    fn log(&mut self, node: usize, kind: LogKind) {
        self.log.push(LogEntry { t_us: self.now, node, kind });
    }

    /// Runs until no events remain, then times out unfinished sessions.
    pub fn run(&mut self) {
        while let Some(ev) = self.queue.pop() {
            if ev.t > MAX_SIM_TIME_US {
                break;
            }
            self.now = ev.t;
            match ev.kind {
                EvKind::Transmit(bytes) => self.transmit(ev.node, bytes),
                EvKind::Deliver(bytes) => {
                    let n = &mut self.nodes[ev.node];
                    let r = n.session.handle_frame(&bytes, self.now);
                    if let Some(s) = &n.session.diagnostics().smp_secret {
                        n.oracle_smp_secret = Some(s.clone());
                    }
                    self.absorb(ev.node, r);
                }
                EvKind::Timer(token) => {
                    let edge = self.nodes[ev.node].edge;
                    if token == crate::session::TIMER_PROBE_DEADLINE && self.edges[edge].a == ev.node {
                        self.edges[edge].truth.deadline_us = Some(self.now);
                    }
                    let r = self.nodes[ev.node].session.handle_timer(token, self.now);
                    self.absorb(ev.node, r);
                }
            }
        }
        for i in 0..self.nodes.len() {
            if !matches!(self.nodes[i].session.phase(), Phase::Aborted | Phase::Terminated) {
                self.log(i, LogKind::TimedOut);
                let step = self.nodes[i].session.handle_timeout();
                self.apply(i, step);
            }
        }
    }

    fn transmit(&mut self, node: usize, bytes: Vec<u8>) {
        let e = self.nodes[node].edge;
        let from_a = self.edges[e].a == node;
        let (dir, from, to) = if from_a {
            (Direction::Forward, Role::Initiator, self.edges[e].b)
        } else {
            (Direction::Reverse, Role::Responder, self.edges[e].a)
        };
        let kind = bytes.first().and_then(|&b| FrameType::from_u8(b).ok());
        let datagram = kind.is_some_and(FrameType::is_datagram);
        let edge = &mut self.edges[e];
        let transit = if datagram {
            edge.link.send_datagram(dir, self.now)
        } else {
            edge.link.send_reliable(dir, self.now)
        };
        if datagram {
            let id = wire::parse_probe(&bytes[wire::HEADER_LEN..]).unwrap_or(0);
            match (kind, from_a) {
                (Some(FrameType::Probe), true) => {
                    edge.truth.depart.insert(id, self.now);
                    if let (Some(tap), Some(tr)) = (edge.tap.as_mut(), transit.as_ref()) {
                        edge.tapped.probe.insert(id, tap.stamp_probe(tr));
                    }
                }
                (Some(FrameType::Echo), false) => {
                    if let Some(tr) = transit.as_ref() {
                        edge.truth.arrive.insert(id, tr.arrive);
                        if let Some(tap) = edge.tap.as_mut() {
                            edge.tapped.echo.insert(id, tap.stamp_echo(tr));
                        }
                    }
                }
                _ => {}
            }
        }
        self.wire.push(WireRecord { edge: e, from, depart_us: self.now, arrive_us: transit.map(|t| t.arrive), bytes: bytes.clone() });
        if let Some(tr) = transit {
            self.push(tr.arrive, to, EvKind::Deliver(bytes));
        }
    }

    fn absorb(&mut self, node: usize, r: Result<Step>) {
        match r {
            Ok(step) => self.apply(node, step),
            Err(e) if e.is_recoverable() => self.log(node, LogKind::Rejected(e)),
            Err(e) => {
                if matches!(self.nodes[node].session.phase(), Phase::Aborted | Phase::Terminated)
                    && self.nodes[node].session.abort_reason() != Some(&e)
                {
                    // late frame for a finished session
                    self.log(node, LogKind::Rejected(e));
                } else {
                    self.log(node, LogKind::Fatal(e));
                }
            }
        }
    }

    fn apply(&mut self, node: usize, step: Step) {
        for out in step.outbound {
            self.push(self.now + out.delay_us, node, EvKind::Transmit(out.frame.encode()));
        }
        for t in step.timers {
            self.push(self.now + t.delay_us, node, EvKind::Timer(t.token));
        }
        for ev in step.events {
            self.log(node, LogKind::Event(ev.clone()));
            self.react(node, ev);
        }
    }

    fn send_data(&mut self, node: usize, pt: &[u8]) {
        match self.nodes[node].session.seal_data(pt) {
            Ok(bytes) => {
                self.nodes[node].sent.push(pt.to_vec());
                self.push(self.now, node, EvKind::Transmit(bytes));
            }
            Err(e) => self.log(node, LogKind::Rejected(e)),
        }
    }

    fn react(&mut self, node: usize, ev: Event) {
        match ev {
            Event::DataReady => {
                let n = &mut self.nodes[node];
                n.live_at_data = Some(n.session.live_secrets());
                n.rs3_at_data = n.session.export_session_key().ok();
                match n.behavior.clone() {
                    Behavior::Endpoint { payloads, .. } => {
                        if !n.sent_payloads {
                            n.sent_payloads = true;
                            for p in &payloads {
                                self.send_data(node, p);
                            }
                        }
                        self.maybe_close(node);
                    }
                    Behavior::Relay { .. } => {
                        for p in std::mem::take(&mut self.nodes[node].pending) {
                            self.send_data(node, &p);
                        }
                    }
                }
            }
            Event::DataReceived(pt) => {
                self.nodes[node].received.push(pt.clone());
                match self.nodes[node].behavior.clone() {
                    Behavior::Endpoint { .. } => self.maybe_close(node),
                    Behavior::Relay { partner, tamper } => {
                        let mut out = pt;
                        if tamper {
                            out.extend_from_slice(b" [altered]");
                        }
                        if self.nodes[partner].session.phase() == Phase::Data {
                            self.send_data(partner, &out);
                        } else {
                            self.nodes[partner].pending.push(out);
                        }
                    }
                }
            }
            Event::Terminated => {
                if let Behavior::Relay { partner, .. } = self.nodes[node].behavior {
                    if self.nodes[partner].session.phase() != Phase::Terminated {
                        let step = self.nodes[partner].session.terminate();
                        self.apply(partner, step);
                    }
                }
            }
            _ => {}
        }
    }

    fn maybe_close(&mut self, node: usize) {
        let n = &self.nodes[node];
        let Behavior::Endpoint { expect, closer, renew_before_close, .. } = n.behavior else {
            return;
        };
        if !closer || n.received.len() < expect || n.session.phase() != Phase::Data || !n.sent_payloads {
            return;
        }
        if renew_before_close {
            match self.nodes[node].session.renew_x() {
                Ok(step) => self.apply(node, step),
                Err(e) => self.log(node, LogKind::Rejected(e)),
            }
        }
        let step = self.nodes[node].session.terminate();
        self.apply(node, step);
    }

    /// Delivered frames on `edge`, in departure order.
    pub fn transcript(&self, edge: usize) -> Transcript {
        self.wire
            .iter()
            .filter(|w| w.edge == edge && w.arrive_us.is_some())
            .map(|w| TranscriptEntry { from: w.from, bytes: w.bytes.clone() })
            .collect()
    }
}

impl Default for Engine {
    fn default() -> Self {
        Self::new()
    }
}

/// Options for [`run_honest`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub initiator_payloads: Vec<Vec<u8>>,
    pub responder_payloads: Vec<Vec<u8>>,
    pub renew_x: bool,
    pub tap: Option<Tap>,
}

/// Outcome of a two-party run.
pub struct HonestRun {
    pub engine: Engine,
    pub duration_us: f64,
}

impl HonestRun {
    pub fn session(&self, role: Role) -> &Session {
        &self.engine.nodes[role_node(role)].session
    }

    pub fn session_mut(&mut self, role: Role) -> &mut Session {
        &mut self.engine.nodes[role_node(role)].session
    }

    pub fn party(&self, role: Role) -> &Node {
        &self.engine.nodes[role_node(role)]
    }

    pub fn reached_data(&self, role: Role) -> bool {
        self.party(role).live_at_data.is_some()
    }

    /// RS3 of both parties compared byte for byte when each entered the data
    /// phase. `None` unless both did.
    pub fn rs3_equal(&self) -> Option<bool> {
        let a = self.party(Role::Initiator).rs3_at_data.as_ref()?;
        let b = self.party(Role::Responder).rs3_at_data.as_ref()?;
        Some(ct_equal(a.expose().ok()?, b.expose().ok()?))
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.engine.log
    }

    pub fn transcript(&self) -> Transcript {
        self.engine.transcript(0)
    }

    pub fn tapped(&self) -> &TapRecord {
        &self.engine.edges[0].tapped
    }

    pub fn truth(&self) -> &TimingTruth {
        &self.engine.edges[0].truth
    }
}

fn role_node(role: Role) -> usize {
    match role {
        Role::Initiator => 0,
        Role::Responder => 1,
    }
}

/// Builds the two-party engine of [`run_honest`] without running it.
pub fn honest_engine(
    channel: ChannelConfig,
    configs: [SessionConfig; 2],
    xs: [SecretBuffer; 2],
    opts: RunOptions,
    seed: u64,
) -> Result<Engine> {
    let [ci, cr] = configs;
    let [xi, xr] = xs;
    let (si, hi) = session_start(Role::Initiator, xi, ci, EntropySource::seeded(derive_seed(seed, 1)))?;
    let (sr, hr) = session_start(Role::Responder, xr, cr, EntropySource::seeded(derive_seed(seed, 2)))?;
    let mut engine = Engine::new();
    let link = Link::new(channel, Hops::Both, 0)?;
    let edge = engine.add_edge(0, 1, link, opts.tap);
    engine.add_node(
        si,
        hi,
        edge,
        Behavior::Endpoint {
            payloads: opts.initiator_payloads,
            expect: opts.responder_payloads.len(),
            closer: true,
            renew_before_close: opts.renew_x,
        },
    );
    engine.add_node(
        sr,
        hr,
        edge,
        Behavior::Endpoint { payloads: opts.responder_payloads, expect: 0, closer: false, renew_before_close: false },
    );
    Ok(engine)
}

/// Runs one initiator and one responder over a single link until both
/// finish. Each side sends its payloads in the data phase; the initiator
/// terminates once it has the responder's, renewing X first if asked.
pub fn run_honest(
    channel: ChannelConfig,
    configs: [SessionConfig; 2],
    xs: [SecretBuffer; 2],
    opts: RunOptions,
    seed: u64,
) -> Result<HonestRun> {
    let mut engine = honest_engine(channel, configs, xs, opts, seed)?;
    engine.run();
    let duration_us = engine.now();
    Ok(HonestRun { engine, duration_us })
}

/// Default payloads used by runs that do not specify their own.
pub fn default_payloads() -> (Vec<Vec<u8>>, Vec<Vec<u8>>) {
    (vec![b"hello bob".to_vec(), b"meet at noon".to_vec()], vec![b"hello alice".to_vec()])
}

/// Applies `f` to every item on a pool of scoped threads, one per available
/// core. Results come back in input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut mine = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let Some(item) = items.get(i) else { break };
                        mine.push((i, f(item)));
                    }
                    mine
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|r| r.0);
    out.into_iter().map(|r| r.1).collect()
}

/// Standard channel for a seed.
pub fn channel_for_seed(base: ChannelConfig, seed: u64) -> ChannelConfig {
    ChannelConfig { seed: derive_seed(seed, 0), ..base }
}
