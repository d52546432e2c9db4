//! The five attack scenarios, each run on one seed and summarised as an
//! [`AttackReport`].

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::adversary::{
    break_kdf, break_rsa, eve_timing_pipeline, fill_guess, import_keys, key_opens_transcript, no_trace, reference_bits,
    run_mitm, vantage_name, x_candidate, AdversaryConfig, AdversaryMode, MitmRun, Overheard, X_SPACE,
};
use super::channel::{ChannelConfig, Vantage};
use super::sim::{channel_for_seed, default_payloads, derive_seed, honest_engine, par_map, Engine, RunOptions};
use crate::error::{Error, Result};
use crate::primitives::{combine_keys, random_bytes, EntropySource, SecretBuffer, SecretLabel};
use crate::session::wire::{self, FrameType};
use crate::session::{derive_rs2_from_nonces, Role, Rs2Mode, SessionConfig};
use crate::smp::GroupParams;
use crate::timing::{estimate_recovery, privacy_amplify, LeakLedger};

/// Eve's guess at X when she does not know it.
pub const MITM_GUESS: u32 = 0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub scenario: u8,
    pub seed: u64,
    pub smp_detected_mitm: bool,
    pub eve_rs1_known: bool,
    pub eve_rs2_recovery: f64,
    pub eve_rs3_recovered: bool,
    pub integrity_preserved: bool,
    pub x_recovered: bool,
    /// Scenarios 4 and 5 only.
    pub next_session_mitm_success: Option<bool>,
    pub honest_aborted: bool,
    pub notes: Vec<String>,
}

fn opt_bool(v: Option<bool>) -> String {
    v.map_or_else(|| "na".to_string(), |b| b.to_string())
}

impl AttackReport {
    /// One `key=value` record.
    pub fn to_line(&self) -> String {
        format!(
            "scenario={} seed={} smp_detected_mitm={} eve_rs1_known={} eve_rs2_recovery={:.6} eve_rs3_recovered={} \
             integrity_preserved={} x_recovered={} next_session_mitm_success={} honest_aborted={} notes=\"{}\"",
            self.scenario,
            self.seed,
            self.smp_detected_mitm,
            self.eve_rs1_known,
            self.eve_rs2_recovery,
            self.eve_rs3_recovered,
            self.integrity_preserved,
            self.x_recovered,
            opt_bool(self.next_session_mitm_success),
            self.honest_aborted,
            self.notes.join("; ").replace('"', "'"),
        )
    }
}

impl fmt::Display for AttackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (seed {})", self.scenario, self.seed)?;
        writeln!(f, "  SMP detected MITM        {}", self.smp_detected_mitm)?;
        writeln!(f, "  Eve knows RS1            {}", self.eve_rs1_known)?;
        writeln!(f, "  Eve RS2 bit recovery     {:.4}", self.eve_rs2_recovery)?;
        writeln!(f, "  Eve recovered RS3        {}", self.eve_rs3_recovered)?;
        writeln!(f, "  integrity preserved      {}", self.integrity_preserved)?;
        writeln!(f, "  X recovered              {}", self.x_recovered)?;
        writeln!(f, "  next-session MITM        {}", opt_bool(self.next_session_mitm_success))?;
        writeln!(f, "  honest party aborted     {}", self.honest_aborted)?;
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

/// Everything a scenario run depends on besides the seed.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: u8,
    /// Channel parameters; the seed field is replaced per run.
    pub channel: ChannelConfig,
    pub session: SessionConfig,
    pub adversary: AdversaryConfig,
    /// Scenario 4: the honest initiator renews X before closing.
    pub renew_x: bool,
}

impl ScenarioConfig {
    /// Defaults for scenario `n` on the test profile.
    pub fn for_scenario(n: u8) -> Result<Self> {
        let mut session = SessionConfig::test();
        let adversary = match n {
            1 => AdversaryConfig {
                mode: AdversaryMode::Mitm { knows_x: true },
                vantage: Vantage::BothEndpoints,
                ..Default::default()
            },
            2 => AdversaryConfig { mode: AdversaryMode::Timestamp, ..Default::default() },
            3 => AdversaryConfig { mode: AdversaryMode::Mirror, sigma_e: 50.0, ..Default::default() },
            4 => AdversaryConfig::default(),
            5 => {
                // the dictionary needs a group larger than the secret space
                session.group = GroupParams::modp1536();
                AdversaryConfig { break_rsa: true, break_kdf: true, ..Default::default() }
            }
            _ => return Err(Error::InvalidParameter(format!("scenario must be 1..5, got {n}"))),
        };
        Ok(ScenarioConfig { scenario: n, channel: ChannelConfig::default(), session, adversary, renew_x: false })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.scenario) {
            return Err(Error::InvalidParameter(format!("scenario must be 1..5, got {}", self.scenario)));
        }
        self.channel.validate()?;
        self.session.validate()?;
        self.adversary.validate()?;
        if self.scenario == 1 && self.adversary.mode.is_passive() {
            return Err(Error::InvalidParameter("scenario 1 needs an active adversary".into()));
        }
        if self.scenario != 1 && !self.adversary.mode.is_passive() {
            return Err(Error::InvalidParameter(format!("scenario {} has a passive adversary", self.scenario)));
        }
        Ok(())
    }
}

/// The memorable secret Alice and Bob share in run `seed`.
pub fn secret_for_seed(seed: u64) -> String {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 3));
    x_candidate(rng.gen_range(0..X_SPACE))
}

fn xbuf(s: &str) -> SecretBuffer {
    SecretBuffer::new(SecretLabel::X, s.as_bytes().to_vec())
}

fn payload_opts() -> RunOptions {
    let (i, r) = default_payloads();
    RunOptions { initiator_payloads: i, responder_payloads: r, ..Default::default() }
}

pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<AttackReport> {
    cfg.validate()?;
    let mut report = AttackReport {
        scenario: cfg.scenario,
        seed,
        smp_detected_mitm: false,
        eve_rs1_known: false,
        eve_rs2_recovery: 0.5,
        eve_rs3_recovered: false,
        integrity_preserved: true,
        x_recovered: false,
        next_session_mitm_success: None,
        honest_aborted: false,
        notes: Vec::new(),
    };
    let x = secret_for_seed(seed);
    let channel = channel_for_seed(cfg.channel.clone(), seed);
    match cfg.scenario {
        1 => {
            let AdversaryMode::Mitm { knows_x } = cfg.adversary.mode else { unreachable!("validated") };
            let eve_x = if knows_x { x.clone() } else { x_candidate(MITM_GUESS) };
            let run = run_mitm(channel, &cfg.session, [xbuf(&x), xbuf(&x)], &xbuf(&eve_x), payload_opts(), true, seed)?;
            fill_from_mitm(&mut report, &run);
            if cfg.adversary.sigma_e != 0.0 {
                report.notes.push("sigma_e unused: Eve terminates both timing exchanges".into());
            }
        }
        2 | 3 => {
            let past = run_passive(cfg, &channel, &x, None, seed)?;
            past.fill(&mut report);
        }
        4 => {
            let past = run_passive(cfg, &channel, &x, Some(&x), seed)?;
            past.fill(&mut report);
            report.x_recovered = true;
            report.notes.push("X and plaintexts leaked after the session".into());
            let next = next_session(cfg, &past, &x, seed)?;
            report.smp_detected_mitm = next.detected();
            report.next_session_mitm_success = Some(next.eve_holds_both_keys());
        }
        5 => {
            let past = run_passive(cfg, &channel, &x, None, seed)?;
            past.fill(&mut report);
            let recovered = past.recovered_x.clone();
            report.x_recovered = recovered.as_deref() == Some(x.as_str());
            let eve_x = recovered.unwrap_or_else(|| x_candidate(MITM_GUESS));
            let next = next_session(cfg, &past, &eve_x, seed)?;
            report.smp_detected_mitm = next.detected();
            report.next_session_mitm_success = Some(next.eve_holds_both_keys());
        }
        _ => unreachable!("validated"),
    }
    Ok(report)
}

fn fill_from_mitm(report: &mut AttackReport, run: &MitmRun) {
    report.smp_detected_mitm = run.detected();
    report.eve_rs1_known = run.eve_knows_both_rs1();
    report.eve_rs2_recovery = run.eve_rs2_recovery();
    report.eve_rs3_recovered = run.eve_holds_both_keys();
    report.integrity_preserved = run.end_to_end_intact();
    report.honest_aborted = run.honest_aborted();
}

/// A second session between the same parties, now with Eve in the middle
/// using `eve_x`.
fn next_session(cfg: &ScenarioConfig, past: &PassiveOutcome, eve_x: &str, seed: u64) -> Result<MitmRun> {
    let next_seed = derive_seed(seed, 7);
    let channel = channel_for_seed(cfg.channel.clone(), next_seed);
    let xs = [past.engine.nodes[0].session.current_x()?, past.engine.nodes[1].session.current_x()?];
    run_mitm(channel, &cfg.session, xs, &xbuf(eve_x), payload_opts(), true, next_seed)
}

struct PassiveOutcome {
    engine: Engine,
    eve_rs1_known: bool,
    eve_rs2_recovery: f64,
    eve_rs3_recovered: bool,
    integrity_preserved: bool,
    recovered_x: Option<String>,
    notes: Vec<String>,
}

impl PassiveOutcome {
    fn fill(&self, r: &mut AttackReport) {
        r.eve_rs1_known = self.eve_rs1_known;
        r.eve_rs2_recovery = self.eve_rs2_recovery;
        r.eve_rs3_recovered = self.eve_rs3_recovered;
        r.integrity_preserved = self.integrity_preserved;
        r.honest_aborted = self.engine.nodes.iter().any(|n| n.session.abort_reason().is_some());
        r.notes.extend(self.notes.iter().cloned());
    }
}

/// One honest session watched by a passive Eve, then Eve's offline
/// analysis of what she captured. `leaked_x` is X handed to her afterwards.
fn run_passive(
    cfg: &ScenarioConfig,
    channel: &ChannelConfig,
    x: &str,
    leaked_x: Option<&str>,
    seed: u64,
) -> Result<PassiveOutcome> {
    let adv = cfg.adversary;
    let mut session = cfg.session.clone();
    session.oracle_hooks = adv.break_kdf;
    let opts = RunOptions { tap: adv.tap(derive_seed(seed, 4))?, renew_x: cfg.renew_x, ..payload_opts() };
    let mut engine = honest_engine(channel.clone(), [session.clone(), session.clone()], [xbuf(x), xbuf(x)], opts, seed)?;
    let exported = if adv.break_rsa {
        Some([engine.nodes[0].session.export_ephemeral_private()?, engine.nodes[1].session.export_ephemeral_private()?])
    } else {
        None
    };
    engine.run();

    let mut notes = Vec::new();
    let transcript = engine.transcript(0);
    let alice = engine.nodes[0].session.diagnostics().clone();

    let rsa = match exported {
        Some(k) => match break_rsa(&transcript, import_keys(&k)?) {
            Ok(b) => Some(b),
            Err(e) => {
                notes.push(format!("RSA break yielded nothing: {e}"));
                None
            }
        },
        None => None,
    };
    let eve_rs1_known = match (&rsa, alice.rs1_id) {
        (Some(b), Some(id)) => b.rs1.key_id()? == id,
        _ => false,
    };

    let mut recovered_x = leaked_x.map(str::to_string);
    if adv.break_kdf {
        match (&rsa, &engine.nodes[0].oracle_smp_secret) {
            (Some(b), Some(secret)) => {
                recovered_x = break_kdf(&transcript, b, secret, session.kdf_iterations, session.group)?;
            }
            _ => notes.push("KDF break needs the SMP1 salt, which needs the RSA break".into()),
        }
    }

    // timing side
    let overheard = Overheard::from_transcript(&transcript);
    let eve_trace = if engine.edges[0].tap.is_some() { engine.edges[0].tapped.trace()? } else { no_trace() };
    let block = session.timing.block_size;
    let eve_bits = eve_timing_pipeline(&eve_trace, overheard.as_ref(), block)?;
    let mut eve_rs2_recovery = 0.5;
    let mut rs2_guesses: Vec<SecretBuffer> = Vec::new();
    if let (Some(o), Some(rs2_id)) = (&overheard, alice.rs2_id) {
        let reference = reference_bits(&engine.edges[0].truth, o, &session.timing)?;
        if privacy_amplify(&reference, &LeakLedger::default(), 0)?.key_id()? != rs2_id {
            return Err(Error::Internal("rebuilt reference bits disagree with the initiator's RS2".into()));
        }
        eve_rs2_recovery = estimate_recovery(&reference, &eve_bits);
        let guess = fill_guess(&eve_bits, reference.kept())?;
        rs2_guesses.push(privacy_amplify(&guess, &LeakLedger::default(), 0)?);
    }
    if let (Some(b), Some(xs)) = (&rsa, &recovered_x) {
        rs2_guesses.push(derive_rs2_from_nonces(&b.ra1, &b.rb1, xs.as_bytes()));
        if session.rs2_mode == Rs2Mode::HashNoncesX && x == xs {
            eve_rs2_recovery = 1.0;
        }
    }

    // Eve's key candidates need RS1; without it she has nothing to try
    let candidates: Vec<SecretBuffer> = match &rsa {
        Some(b) => rs2_guesses.iter().map(|g| combine_keys(&b.rs1, g)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let eve_rs3_recovered = candidates.iter().any(|k| key_opens_transcript(&transcript, k));

    // Integrity: deliveries intact, and a frame sealed under Eve's best key
    // does not authenticate under the real one.
    let (a, b) = (&engine.nodes[0], &engine.nodes[1]);
    let mut intact = a.received == b.sent && b.received == a.sent;
    if let Some(rs3) = &a.rs3_at_data {
        let mut rng = EntropySource::seeded(derive_seed(seed, 8));
        let forge_key = match candidates.first() {
            Some(k) => k.expose()?.to_vec(),
            None => random_bytes(32, &mut rng)?,
        };
        let forged = wire::seal(&forge_key, FrameType::Data, Role::Initiator.direction(), 1 << 20, b"wire the funds")?;
        if wire::open(rs3.expose()?, FrameType::Data, &forged).is_ok() {
            intact = false;
            notes.push("forged frame accepted".into());
        }
    }
    if leaked_x.is_some() && rsa.is_none() {
        notes.push("past nonces were encrypted to erased ephemeral keys".into());
    }
    Ok(PassiveOutcome {
        engine,
        eve_rs1_known,
        eve_rs2_recovery,
        eve_rs3_recovered,
        integrity_preserved: intact,
        recovered_x,
        notes,
    })
}

/// [`run_scenario`] over `seeds`, in parallel, reports in seed order.
pub fn run_seeds(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<AttackReport>> {
    par_map(seeds, |&s| run_scenario(cfg, s)).into_iter().collect()
}

/// Per-field rates over a batch of reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSummary {
    pub scenario: u8,
    pub runs: usize,
    pub smp_detected_mitm: f64,
    pub eve_rs1_known: f64,
    pub eve_rs2_recovery_mean: f64,
    pub eve_rs2_recovery_std: f64,
    pub eve_rs3_recovered: f64,
    pub integrity_preserved: f64,
    pub x_recovered: f64,
    pub next_session_mitm_success: Option<f64>,
    pub honest_aborted: f64,
}

pub fn summarize(reports: &[AttackReport]) -> Result<AttackSummary> {
    let first = reports.first().ok_or_else(|| Error::InvalidParameter("no reports".into()))?;
    let n = reports.len() as f64;
    let rate = |f: fn(&AttackReport) -> bool| reports.iter().filter(|r| f(r)).count() as f64 / n;
    let mean = reports.iter().map(|r| r.eve_rs2_recovery).sum::<f64>() / n;
    let var = reports.iter().map(|r| (r.eve_rs2_recovery - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let next: Vec<bool> = reports.iter().filter_map(|r| r.next_session_mitm_success).collect();
    Ok(AttackSummary {
        scenario: first.scenario,
        runs: reports.len(),
        smp_detected_mitm: rate(|r| r.smp_detected_mitm),
        eve_rs1_known: rate(|r| r.eve_rs1_known),
        eve_rs2_recovery_mean: mean,
        eve_rs2_recovery_std: var.sqrt(),
        eve_rs3_recovered: rate(|r| r.eve_rs3_recovered),
        integrity_preserved: rate(|r| r.integrity_preserved),
        x_recovered: rate(|r| r.x_recovered),
        next_session_mitm_success: (!next.is_empty())
            .then(|| next.iter().filter(|&&b| b).count() as f64 / next.len() as f64),
        honest_aborted: rate(|r| r.honest_aborted),
    })
}

impl AttackSummary {
    pub fn to_line(&self) -> String {
        let next = self.next_session_mitm_success.map_or_else(|| "na".to_string(), |v| format!("{v:.4}"));
        format!(
            "scenario={} runs={} smp_detected_mitm={:.4} eve_rs1_known={:.4} eve_rs2_recovery_mean={:.6} \
             eve_rs2_recovery_std={:.6} eve_rs3_recovered={:.4} integrity_preserved={:.4} x_recovered={:.4} \
             next_session_mitm_success={} honest_aborted={:.4}",
            self.scenario,
            self.runs,
            self.smp_detected_mitm,
            self.eve_rs1_known,
            self.eve_rs2_recovery_mean,
            self.eve_rs2_recovery_std,
            self.eve_rs3_recovered,
            self.integrity_preserved,
            self.x_recovered,
            next,
            self.honest_aborted
        )
    }
}

impl fmt::Display for AttackSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} over {} seeds", self.scenario, self.runs);
        let _ = writeln!(s, "  SMP detected MITM        {:.4}", self.smp_detected_mitm);
        let _ = writeln!(s, "  Eve knows RS1            {:.4}", self.eve_rs1_known);
        let _ = writeln!(s, "  Eve RS2 bit recovery     {:.4} (sd {:.4})", self.eve_rs2_recovery_mean, self.eve_rs2_recovery_std);
        let _ = writeln!(s, "  Eve recovered RS3        {:.4}", self.eve_rs3_recovered);
        let _ = writeln!(s, "  integrity preserved      {:.4}", self.integrity_preserved);
        let _ = writeln!(s, "  X recovered              {:.4}", self.x_recovered);
        if let Some(v) = self.next_session_mitm_success {
            let _ = writeln!(s, "  next-session MITM        {v:.4}");
        }
        let _ = writeln!(s, "  honest party aborted     {:.4}", self.honest_aborted);
        f.write_str(&s)
    }
}

/// Adversary label used in summaries.
pub fn describe(cfg: &ScenarioConfig) -> String {
    let a = &cfg.adversary;
    let mut s = format!("{} at {} sigma_e={}us", a.mode, vantage_name(a.vantage), a.sigma_e);
    if let AdversaryMode::Mitm { knows_x } = a.mode {
        let _ = write!(s, " knows_x={knows_x}");
    }
    if a.break_rsa {
        s.push_str(" break_rsa");
    }
    if a.break_kdf {
        s.push_str(" break_kdf");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_defaults_validate() {
        for n in 1..=5 {
            ScenarioConfig::for_scenario(n).unwrap().validate().unwrap();
        }
        assert!(ScenarioConfig::for_scenario(0).is_err());
        assert!(ScenarioConfig::for_scenario(6).is_err());
        let mut c = ScenarioConfig::for_scenario(3).unwrap();
        c.adversary.mode = AdversaryMode::Mitm { knows_x: true };
        assert!(c.validate().is_err());
    }

    #[test]
    fn report_line_shape() {
        let r = run_scenario(&ScenarioConfig::for_scenario(3).unwrap(), 1).unwrap();
        let line = r.to_line();
        assert!(line.starts_with("scenario=3 seed=1 "));
        assert!(line.contains("next_session_mitm_success=na"));
        assert!(!line.contains('\n'));
        assert!(r.to_string().contains("integrity preserved"));
    }

    #[test]
    fn secrets_are_four_digits_in_range() {
        for s in 0..50 {
            let x = secret_for_seed(s);
            assert_eq!(x.len(), 4);
            assert!(x.parse::<u32>().unwrap() < X_SPACE);
        }
    }
}
