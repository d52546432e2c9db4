use std::fmt::Write as _;
use std::path::Path;

use itschan::netsim::adversary::parse_vantage;
use itschan::netsim::scenario::{describe, secret_for_seed, summarize};
use itschan::netsim::sim::{channel_for_seed, default_payloads, LogKind};
use itschan::{
    par_map, run_honest, run_seeds, vectors as vecs, ChannelConfig, Event, Profile, Role, RunOptions,
    SecretBuffer, SecretLabel, SessionConfig, Settings,
};

use crate::{socket, AttackArgs, Failure, HandshakeArgs, SweepArgs, Transport, VectorsArgs};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_ATTACK_SEEDS: usize = 10;
pub const DEFAULT_SWEEP_SEEDS: usize = 20;
pub const DEFAULT_SWEEP_SCENARIO: u8 = 3;

pub fn xbuf(s: &str) -> SecretBuffer {
    SecretBuffer::new(SecretLabel::X, s.as_bytes().to_vec())
}

pub fn write_report(path: Option<&Path>, lines: &[String]) -> Result<(), Failure> {
    let Some(path) = path else { return Ok(()) };
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "'"))
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Initiator => "initiator",
        Role::Responder => "responder",
    }
}

/// Timeline wording for an event. Received plaintexts are shown by length.
pub fn event_text(e: &Event) -> String {
    match e {
        Event::Phase(p) => format!("-> {p}"),
        Event::DataReceived(pt) => format!("data received ({} bytes)", pt.len()),
        other => format!("{other:?}"),
    }
}

pub fn handshake(a: &HandshakeArgs, file: Settings, config: Option<&Path>) -> Result<(), Failure> {
    let mut s = file;
    s.merge(&Settings {
        profile: a.profile.map(Into::into),
        seed: a.seed,
        rs2_mode: a.rs2_mode.map(Into::into),
        probes: a.probes,
        ..Default::default()
    });
    let seed = s.seed.unwrap_or(DEFAULT_SEED);
    let mut cfg = s.session_config(Profile::Default)?;
    let channel = s.channel_config()?;
    if a.transport == Transport::Socket && s.spacing_us.is_none() {
        cfg.timing.spacing_us = socket::DEFAULT_SPACING_US;
    }
    if let Some(addr) = &a.socket_peer {
        return socket::responder(addr, cfg, seed);
    }
    match a.transport {
        Transport::Sim => handshake_sim(a, cfg, channel, seed),
        Transport::Socket => socket::initiator(a, cfg, seed, config),
    }
}

pub fn header(cfg: &SessionConfig, seed: u64, transport: &str) -> String {
    format!(
        "handshake transport={transport} profile={} seed={seed} rs2_mode={} probes={}",
        cfg.profile, cfg.rs2_mode, cfg.timing.n_probes
    )
}

fn handshake_sim(a: &HandshakeArgs, cfg: SessionConfig, channel: ChannelConfig, seed: u64) -> Result<(), Failure> {
    let x = secret_for_seed(seed);
    let (pi, pr) = default_payloads();
    let opts = RunOptions { initiator_payloads: pi, responder_payloads: pr, ..Default::default() };
    let run = run_honest(channel_for_seed(channel, seed), [cfg.clone(), cfg.clone()], [xbuf(&x), xbuf(&x)], opts, seed)?;

    let mut out = String::new();
    let _ = writeln!(out, "{}", header(&cfg, seed, "sim"));
    let _ = writeln!(out, "timeline (simulated clock):");
    for e in run.log() {
        let who = role_name(if e.node == 0 { Role::Initiator } else { Role::Responder });
        let what = match &e.kind {
            LogKind::Event(ev) => event_text(ev),
            LogKind::Fatal(err) => format!("abort: {err}"),
            LogKind::Rejected(err) => format!("rejected frame: {err}"),
            LogKind::TimedOut => "timed out".to_string(),
        };
        let _ = writeln!(out, "  {:>12.3} ms  {who:<9}  {what}", e.t_us / 1000.0);
    }
    let _ = writeln!(out, "simulated duration  {:.3} ms", run.duration_us / 1000.0);

    let mut record = vec![header(&cfg, seed, "sim")];
    for r in [Role::Initiator, Role::Responder] {
        let sess = run.session(r);
        let d = sess.diagnostics();
        let reason = sess.abort_reason().map(ToString::to_string);
        let _ = writeln!(
            out,
            "{:<9}  phase {}  final bits {}  entropy budget {}{}",
            role_name(r),
            sess.phase(),
            d.final_bits,
            d.entropy_budget,
            reason.as_ref().map(|m| format!("  ({m})")).unwrap_or_default()
        );
        let n = role_name(r);
        record.push(format!(
            "{n}_phase={} {n}_final_bits={} {n}_entropy_budget={} {n}_abort_reason={}",
            sess.phase(),
            d.final_bits,
            d.entropy_budget,
            quoted(reason.as_deref().unwrap_or("none"))
        ));
    }
    let fp = run.party(Role::Initiator).rs3_at_data.as_ref().and_then(|k| k.key_id().ok());
    let secured = run.rs3_equal() == Some(true);
    match (&fp, secured) {
        (Some(d), true) => {
            let _ = writeln!(out, "RS3 fingerprint     {}  (equal on both sides)", d.to_hex());
        }
        _ => {
            let _ = writeln!(out, "no shared session key");
        }
    }
    record.push(format!(
        "duration_us={:.3} rs3_fp={} outcome={}",
        run.duration_us,
        fp.map_or_else(|| "none".to_string(), |d| d.to_hex()),
        if secured { "secured" } else { "aborted" }
    ));
    print!("{out}");
    write_report(a.report.as_deref(), &[record.join(" ")])?;
    if secured {
        Ok(())
    } else {
        let reason = [Role::Initiator, Role::Responder]
            .iter()
            .find_map(|&r| run.session(r).abort_reason().map(ToString::to_string))
            .unwrap_or_else(|| "session key mismatch".into());
        Err(Failure::Abort(reason))
    }
}

pub fn attack(a: &AttackArgs, file: Settings) -> Result<(), Failure> {
    let mut s = file;
    s.merge(&Settings {
        scenario: a.scenario,
        seeds: a.seeds,
        profile: a.profile.map(Into::into),
        sigma_e: a.sigma_e,
        knows_x: a.knows_x,
        vantage: a.vantage.as_deref().map(parse_vantage).transpose()?,
        renew_x: a.renew_x,
        break_rsa: a.break_rsa,
        break_kdf: a.break_kdf,
        ..Default::default()
    });
    let cfg = s.scenario_config()?;
    let n = s.seeds.unwrap_or(DEFAULT_ATTACK_SEEDS);
    if n == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| a.first_seed + i).collect();
    let reports = run_seeds(&cfg, &seeds)?;
    let summary = summarize(&reports)?;
    println!("adversary: {}", describe(&cfg));
    print!("{summary}");
    let mut lines: Vec<String> = reports.iter().map(|r| r.to_line()).collect();
    lines.push(summary.to_line());
    write_report(a.report.as_deref(), &lines)
}

/// Initiator-side statistics of one honest run under a scenario's settings.
struct HonestStats {
    kept_fraction: f64,
    final_bits: usize,
    secured: bool,
}

fn honest_stats(cfg: &itschan::ScenarioConfig, seed: u64) -> Result<HonestStats, itschan::Error> {
    let x = secret_for_seed(seed);
    let run = run_honest(
        channel_for_seed(cfg.channel.clone(), seed),
        [cfg.session.clone(), cfg.session.clone()],
        [xbuf(&x), xbuf(&x)],
        RunOptions::default(),
        seed,
    )?;
    let d = run.session(Role::Initiator).diagnostics();
    Ok(HonestStats {
        kept_fraction: if d.samples == 0 { 0.0 } else { d.kept_bits as f64 / d.samples as f64 },
        final_bits: d.final_bits,
        secured: run.rs3_equal() == Some(true),
    })
}

pub fn sweep(a: &SweepArgs, file: Settings) -> Result<(), Failure> {
    let mut s = file;
    s.merge(&Settings { scenario: a.scenario, seeds: a.seeds, profile: a.profile.map(Into::into), ..Default::default() });
    if s.scenario.is_none() {
        s.scenario = Some(DEFAULT_SWEEP_SCENARIO);
    }
    let values: Vec<&str> = a.values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Usage("--values needs at least one value".into()));
    }
    let n = s.seeds.unwrap_or(DEFAULT_SWEEP_SEEDS);
    if n == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| a.first_seed + i).collect();
    let key = a.param.key();
    let mut configs = Vec::new();
    for v in &values {
        let mut row = s.clone();
        row.set(key, v)?;
        configs.push(row.scenario_config()?);
    }

    let mut table = format!(
        "{key:>10}  {:>5}  {:>12}  {:>8}  {:>13}  {:>10}  {:>8}\n",
        "runs", "eve_recovery", "sd", "kept_fraction", "final_bits", "secured"
    );
    let mut rows = Vec::new();
    for (v, cfg) in values.iter().zip(&configs) {
        let summary = summarize(&run_seeds(cfg, &seeds)?)?;
        let stats = par_map(&seeds, |&seed| honest_stats(cfg, seed)).into_iter().collect::<Result<Vec<_>, _>>()?;
        let m = stats.len() as f64;
        let kept = stats.iter().map(|h| h.kept_fraction).sum::<f64>() / m;
        let bits = stats.iter().map(|h| h.final_bits as f64).sum::<f64>() / m;
        let secured = stats.iter().filter(|h| h.secured).count() as f64 / m;
        let _ = writeln!(
            table,
            "{v:>10}  {:>5}  {:>12.4}  {:>8.4}  {kept:>13.4}  {bits:>10.1}  {secured:>8.3}",
            summary.runs, summary.eve_rs2_recovery_mean, summary.eve_rs2_recovery_std
        );
        rows.push(format!(
            "sweep scenario={} param={key} value={v} runs={} eve_rs2_recovery_mean={:.6} eve_rs2_recovery_std={:.6} \
             kept_fraction={kept:.6} final_bits_mean={bits:.3} secured_rate={secured:.4}",
            cfg.scenario, summary.runs, summary.eve_rs2_recovery_mean, summary.eve_rs2_recovery_std
        ));
    }
    print!("{table}");
    if a.report.is_some() {
        write_report(a.report.as_deref(), &rows)
    } else {
        for r in rows {
            println!("{r}");
        }
        Ok(())
    }
}

pub fn vectors(a: &VectorsArgs) -> Result<(), Failure> {
    let json = vecs::to_json(&vecs::generate()?)?;
    match &a.out {
        Some(path) => std::fs::write(path, json.as_bytes() as &[u8])
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}
