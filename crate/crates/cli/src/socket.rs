//! Handshake between two OS processes over loopback TCP. Frames are sent
//! with a 4-byte big-endian length prefix, probes included. Timing comes
//! from the wall clock, so runs are not reproducible.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use itschan::netsim::scenario::secret_for_seed;
use itschan::netsim::sim::default_payloads;
use itschan::session::wire::Frame;
use itschan::session::Step;
use itschan::{session_start, EntropySource, Event, Phase, Role, Session, SessionConfig};

use crate::commands::{event_text, header, write_report, xbuf};
use crate::{Failure, HandshakeArgs};

/// Probe spacing used over sockets unless configured, µs.
pub const DEFAULT_SPACING_US: f64 = 1000.0;
const RUN_LIMIT: Duration = Duration::from_secs(300);
const ACCEPT_LIMIT: Duration = Duration::from_secs(30);
const MAX_FRAME: usize = 1 << 20;

fn write_frame(w: &mut impl Write, bytes: &[u8]) -> std::io::Result<()> {
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(bytes)
}

fn read_frame(r: &mut impl Read) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "frame too long"));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

enum Action {
    Send(Vec<u8>),
    Timer(u64),
}

struct Driver {
    session: Session,
    start: Instant,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    actions: HashMap<u64, Action>,
    seq: u64,
    payloads: Vec<Vec<u8>>,
    expect: usize,
    closer: bool,
    received: usize,
    sent_payloads: bool,
    rs3_fp: Option<String>,
    timeline: Vec<String>,
}

impl Driver {
    fn now_us(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e6
    }

    fn schedule(&mut self, delay_us: f64, a: Action) {
        let due = (self.now_us() + delay_us.max(0.0)) as u64;
        self.seq += 1;
        self.queue.push(Reverse((due, self.seq)));
        self.actions.insert(self.seq, a);
    }

    fn note(&mut self, what: String) {
        let t = self.now_us() / 1000.0;
        self.timeline.push(format!("  {t:>12.3} ms  {what}"));
    }

    fn done(&self) -> bool {
        matches!(self.session.phase(), Phase::Aborted | Phase::Terminated)
    }

    fn absorb(&mut self, r: itschan::Result<Step>) {
        match r {
            Ok(step) => self.apply(step),
            Err(e) if e.is_recoverable() => self.note(format!("rejected frame: {e}")),
            Err(e) => self.note(format!("abort: {e}")),
        }
    }

    fn apply(&mut self, step: Step) {
        for o in step.outbound {
            self.schedule(o.delay_us, Action::Send(o.frame.encode()));
        }
        for t in step.timers {
            self.schedule(t.delay_us, Action::Timer(t.token));
        }
        for ev in step.events {
            self.note(event_text(&ev));
            match ev {
                Event::DataReady => {
                    self.rs3_fp = self.session.export_session_key().and_then(|k| k.key_id()).ok().map(|d| d.to_hex());
                    if !self.sent_payloads {
                        self.sent_payloads = true;
                        for p in std::mem::take(&mut self.payloads) {
                            match self.session.seal_data(&p) {
                                Ok(b) => self.schedule(0.0, Action::Send(b)),
                                Err(e) => self.note(format!("seal failed: {e}")),
                            }
                        }
                    }
                    self.maybe_close();
                }
                Event::DataReceived(_) => {
                    self.received += 1;
                    self.maybe_close();
                }
                _ => {}
            }
        }
    }

    fn maybe_close(&mut self) {
        if self.closer && self.sent_payloads && self.received >= self.expect && self.session.phase() == Phase::Data {
            let step = self.session.terminate();
            self.apply(step);
        }
    }

    fn run(&mut self, stream: TcpStream, hello: Frame) -> anyhow::Result<()> {
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let mut writer = stream;
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            while let Ok(f) = read_frame(&mut reader) {
                if tx.send(f).is_err() {
                    break;
                }
            }
        });
        self.schedule(0.0, Action::Send(hello.encode()));
        loop {
            let now = self.now_us() as u64;
            while let Some(&Reverse((due, id))) = self.queue.peek() {
                if due > now {
                    break;
                }
                self.queue.pop();
                match self.actions.remove(&id) {
                    Some(Action::Send(b)) => write_frame(&mut writer, &b)?,
                    Some(Action::Timer(t)) => {
                        let r = self.session.handle_timer(t, self.now_us());
                        self.absorb(r);
                    }
                    None => {}
                }
            }
            if self.done() {
                break;
            }
            if self.start.elapsed() > RUN_LIMIT {
                let step = self.session.handle_timeout();
                self.apply(step);
                break;
            }
            let wait = self.queue.peek().map_or(100_000, |Reverse((due, _))| due.saturating_sub(self.now_us() as u64));
            match rx.recv_timeout(Duration::from_micros(wait.min(100_000))) {
                Ok(bytes) => {
                    let r = self.session.handle_frame(&bytes, self.now_us());
                    self.absorb(r);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    if !self.done() {
                        self.note("peer closed the connection".into());
                        let step = self.session.handle_timeout();
                        self.apply(step);
                    }
                    break;
                }
            }
        }
        // flush the last frames (CLOSE or a final ack)
        let mut pending: Vec<_> = self.queue.drain().map(|Reverse(k)| k).collect();
        pending.sort_unstable();
        for (_, id) in pending {
            if let Some(Action::Send(b)) = self.actions.remove(&id) {
                let _ = write_frame(&mut writer, &b);
            }
        }
        let _ = writer.flush();
        Ok(())
    }
}

fn driver(role: Role, cfg: SessionConfig, seed: u64) -> anyhow::Result<(Driver, Frame)> {
    let x = secret_for_seed(seed);
    let (session, hello) = session_start(role, xbuf(&x), cfg, EntropySource::system())?;
    let (pi, pr) = default_payloads();
    let (payloads, expect, closer) = match role {
        Role::Initiator => (pi, pr.len(), true),
        Role::Responder => (pr, 0, false),
    };
    Ok((
        Driver {
            session,
            start: Instant::now(),
            queue: BinaryHeap::new(),
            actions: HashMap::new(),
            seq: 0,
            payloads,
            expect,
            closer,
            received: 0,
            sent_payloads: false,
            rs3_fp: None,
            timeline: Vec::new(),
        },
        hello,
    ))
}

fn status_line(d: &Driver) -> String {
    let diag = d.session.diagnostics();
    format!(
        "phase={} final_bits={} entropy_budget={} rs3_fp={} abort_reason=\"{}\"",
        d.session.phase(),
        diag.final_bits,
        diag.entropy_budget,
        d.rs3_fp.as_deref().unwrap_or("none"),
        d.session.abort_reason().map_or_else(|| "none".to_string(), |e| e.to_string().replace('"', "'"))
    )
}

/// Child side: connect, run as responder, print one status line.
pub fn responder(addr: &str, cfg: SessionConfig, seed: u64) -> Result<(), Failure> {
    let go = || -> anyhow::Result<Driver> {
        let stream = TcpStream::connect(addr).with_context(|| format!("connect {addr}"))?;
        let (mut d, hello) = driver(Role::Responder, cfg, seed)?;
        d.run(stream, hello)?;
        Ok(d)
    };
    let d = go().map_err(|e| Failure::Abort(format!("{e:#}")))?;
    println!("{}", status_line(&d));
    if d.rs3_fp.is_some() {
        Ok(())
    } else {
        Err(Failure::Abort(d.session.abort_reason().map_or_else(|| "no session key".into(), ToString::to_string)))
    }
}

fn accept(listener: &TcpListener) -> anyhow::Result<TcpStream> {
    listener.set_nonblocking(true)?;
    let start = Instant::now();
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                return Ok(s);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if start.elapsed() > ACCEPT_LIMIT {
                    bail!("responder process never connected");
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Parent side: listen, spawn the responder process, run as initiator.
pub fn initiator(a: &HandshakeArgs, cfg: SessionConfig, seed: u64, config: Option<&Path>) -> Result<(), Failure> {
    let abort = |e: anyhow::Error| Failure::Abort(format!("{e:#}"));
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| abort(e.into()))?;
    let addr = listener.local_addr().map_err(|e| abort(e.into()))?.to_string();
    let exe = std::env::current_exe().map_err(|e| abort(e.into()))?;
    let mut cmd = Command::new(exe);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.args(["handshake", "--transport", "socket", "--socket-peer", &addr])
        .args(["--seed", &seed.to_string(), "--profile", &cfg.profile.to_string()])
        .args(["--rs2-mode", &cfg.rs2_mode.to_string(), "--probes", &cfg.timing.n_probes.to_string()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    let mut child = cmd.spawn().map_err(|e| abort(e.into()))?;
    let run = || -> anyhow::Result<Driver> {
        let stream = accept(&listener)?;
        let (mut d, hello) = driver(Role::Initiator, cfg.clone(), seed)?;
        d.run(stream, hello)?;
        Ok(d)
    };
    let result = run();
    let mut peer_line = String::new();
    if let Some(out) = child.stdout.take() {
        let _ = BufReader::new(out).read_line(&mut peer_line);
    }
    if result.is_err() {
        let _ = child.kill();
    }
    let _ = child.wait();
    let d = result.map_err(abort)?;
    let peer_line = peer_line.trim();
    let peer_fp = peer_line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("rs3_fp="))
        .filter(|fp| *fp != "none");
    let secured = d.rs3_fp.is_some() && d.rs3_fp.as_deref() == peer_fp;

    println!("{}", header(&cfg, seed, "socket"));
    println!("initiator timeline (wall clock):");
    for l in &d.timeline {
        println!("{l}");
    }
    println!("wall-clock duration  {:.3} ms", d.start.elapsed().as_secs_f64() * 1000.0);
    println!("initiator  {}", status_line(&d));
    println!("responder  {}", if peer_line.is_empty() { "no status (process failed)" } else { peer_line });
    if secured {
        println!("RS3 fingerprint      {}  (equal on both sides)", d.rs3_fp.as_deref().unwrap_or_default());
    } else {
        println!("no shared session key");
    }
    let record = format!(
        "{} initiator_{} outcome={}",
        header(&cfg, seed, "socket"),
        status_line(&d),
        if secured { "secured" } else { "aborted" }
    );
    write_report(a.report.as_deref(), &[record])?;
    if secured {
        Ok(())
    } else {
        Err(Failure::Abort(d.session.abort_reason().map_or_else(|| "session keys differ".into(), ToString::to_string)))
    }
}
