//! Plain-text run configuration: one `key = value` per line, `#` comments.
//!
//! ```text
//! scenario = 3
//! sigma_e = 50
//! jitter = lognormal:1.609,0.5
//! ```

use std::collections::BTreeSet;

use super::adversary::{parse_vantage, AdversaryMode};
use super::channel::{ChannelConfig, JitterModel, Vantage};
use super::scenario::ScenarioConfig;
use crate::error::{Error, Result};
use crate::session::{Profile, Rs2Mode, SessionConfig};
use crate::smp::GroupParams;

pub const KEYS: &[&str] = &[
    "scenario",
    "seed",
    "seeds",
    "profile",
    "rs2_mode",
    "probes",
    "guard",
    "block",
    "margin",
    "spacing_us",
    "base_delay_us",
    "jitter",
    "packet_noise_us",
    "loss",
    "mode",
    "vantage",
    "sigma_e",
    "knows_x",
    "break_rsa",
    "break_kdf",
    "renew_x",
];

/// Every setting is optional; unset ones keep the caller's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub scenario: Option<u8>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub profile: Option<Profile>,
    pub rs2_mode: Option<Rs2Mode>,
    pub probes: Option<usize>,
    pub guard: Option<f64>,
    pub block: Option<usize>,
    pub margin: Option<usize>,
    pub spacing_us: Option<f64>,
    pub base_delay_us: Option<f64>,
    pub jitter: Option<JitterModel>,
    pub packet_noise_us: Option<f64>,
    pub loss: Option<f64>,
    pub mode: Option<AdversaryMode>,
    pub vantage: Option<Vantage>,
    pub sigma_e: Option<f64>,
    pub knows_x: Option<bool>,
    pub break_rsa: Option<bool>,
    pub break_kdf: Option<bool>,
    pub renew_x: Option<bool>,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// `uniform:A,B`, `exponential:LAMBDA` or `lognormal:MU,SIGMA`.
pub fn parse_jitter(v: &str) -> Result<JitterModel> {
    let (kind, args) = v.split_once(':').ok_or_else(|| Error::InvalidParameter(format!("jitter: {v:?}")))?;
    let args: Vec<f64> = args.split(',').map(|a| num("jitter", a.trim())).collect::<Result<_>>()?;
    let m = match (kind.trim(), args.as_slice()) {
        ("uniform", [a, b]) => JitterModel::Uniform { a: *a, b: *b },
        ("exponential", [l]) => JitterModel::Exponential { lambda: *l },
        ("lognormal", [mu, sigma]) => JitterModel::LogNormal { mu: *mu, sigma: *sigma },
        _ => return Err(Error::InvalidParameter(format!("jitter: {v:?}"))),
    };
    m.validate()?;
    Ok(m)
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::InvalidParameter(format!("line {}: {k} set twice", n + 1)));
            }
            s.set(k, v.trim()).map_err(|e| Error::InvalidParameter(format!("line {}: {e}", n + 1)))?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "scenario" => self.scenario = Some(num(key, v)?),
            "seed" => self.seed = Some(num(key, v)?),
            "seeds" => self.seeds = Some(num(key, v)?),
            "profile" => self.profile = Some(v.parse()?),
            "rs2_mode" => self.rs2_mode = Some(v.parse()?),
            "probes" => self.probes = Some(num(key, v)?),
            "guard" => self.guard = Some(num(key, v)?),
            "block" => self.block = Some(num(key, v)?),
            "margin" => self.margin = Some(num(key, v)?),
            "spacing_us" => self.spacing_us = Some(num(key, v)?),
            "base_delay_us" => self.base_delay_us = Some(num(key, v)?),
            "jitter" => self.jitter = Some(parse_jitter(v)?),
            "packet_noise_us" => self.packet_noise_us = Some(num(key, v)?),
            "loss" => self.loss = Some(num(key, v)?),
            "mode" => self.mode = Some(v.parse()?),
            "vantage" => self.vantage = Some(parse_vantage(v)?),
            "sigma_e" => self.sigma_e = Some(num(key, v)?),
            "knows_x" => self.knows_x = Some(boolean(key, v)?),
            "break_rsa" => self.break_rsa = Some(boolean(key, v)?),
            "break_kdf" => self.break_kdf = Some(boolean(key, v)?),
            "renew_x" => self.renew_x = Some(boolean(key, v)?),
            _ => return Err(Error::InvalidParameter(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Fields set in `over` replace those set here.
    pub fn merge(&mut self, over: &Settings) {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            scenario, seed, seeds, profile, rs2_mode, probes, guard, block, margin, spacing_us, base_delay_us, jitter,
            packet_noise_us, loss, mode, vantage, sigma_e, knows_x, break_rsa, break_kdf, renew_x
        );
    }

    pub fn apply_channel(&self, c: &mut ChannelConfig) {
        if let Some(v) = self.base_delay_us {
            c.base_delay_us = v;
        }
        if let Some(v) = self.jitter {
            c.jitter = v;
        }
        if let Some(v) = self.packet_noise_us {
            c.packet_noise_us = v;
        }
        if let Some(v) = self.loss {
            c.loss = v;
        }
    }

    /// Timing and RS2 overrides; the profile is handled by the callers.
    pub fn apply_session(&self, c: &mut SessionConfig) {
        if let Some(v) = self.rs2_mode {
            c.rs2_mode = v;
        }
        let t = &mut c.timing;
        if let Some(v) = self.probes {
            t.n_probes = v;
        }
        if let Some(v) = self.guard {
            t.guard_fraction = v;
        }
        if let Some(v) = self.block {
            t.block_size = v;
        }
        if let Some(v) = self.margin {
            t.safety_margin = v;
        }
        if let Some(v) = self.spacing_us {
            t.spacing_us = v;
        }
    }

    /// Session config for `fallback` unless a profile is set, with overrides.
    pub fn session_config(&self, fallback: Profile) -> Result<SessionConfig> {
        let mut c = SessionConfig::for_profile(self.profile.unwrap_or(fallback));
        self.apply_session(&mut c);
        c.validate()?;
        Ok(c)
    }

    pub fn channel_config(&self) -> Result<ChannelConfig> {
        let mut c = ChannelConfig::default();
        self.apply_channel(&mut c);
        c.validate()?;
        Ok(c)
    }

    /// Scenario defaults overlaid with these settings.
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let n = self.scenario.ok_or_else(|| Error::InvalidParameter("no scenario given".into()))?;
        let mut c = ScenarioConfig::for_scenario(n)?;
        if let Some(p) = self.profile {
            let group = c.session.group;
            c.session = SessionConfig::for_profile(p);
            if n == 5 {
                c.session.group = group;
            }
        }
        if n == 5 && c.session.group != GroupParams::modp1536() {
            c.session.group = GroupParams::modp1536();
        }
        self.apply_session(&mut c.session);
        self.apply_channel(&mut c.channel);
        let a = &mut c.adversary;
        if let Some(m) = self.mode {
            a.mode = m;
        }
        if let (Some(k), AdversaryMode::Mitm { knows_x }) = (self.knows_x, &mut a.mode) {
            *knows_x = k;
        }
        if let Some(v) = self.vantage {
            a.vantage = v;
        }
        if let Some(v) = self.sigma_e {
            a.sigma_e = v;
        }
        if let Some(v) = self.break_rsa {
            a.break_rsa = v;
        }
        if let Some(v) = self.break_kdf {
            a.break_kdf = v;
        }
        if let Some(v) = self.renew_x {
            c.renew_x = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_jitter() {
        let s = Settings::parse("# scenario file\nscenario = 3\nsigma_e=12.5  # noisy clock\n\njitter = uniform:0,10\nknows_x = yes\n").unwrap();
        assert_eq!(s.scenario, Some(3));
        assert_eq!(s.sigma_e, Some(12.5));
        assert_eq!(s.jitter, Some(JitterModel::Uniform { a: 0.0, b: 10.0 }));
        assert_eq!(s.knows_x, Some(true));
        let c = s.scenario_config().unwrap();
        assert_eq!(c.adversary.sigma_e, 12.5);
        assert_eq!(c.channel.jitter, JitterModel::Uniform { a: 0.0, b: 10.0 });
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["scenario", "colour = red", "scenario = x", "loss = 1\nloss = 0", "jitter = gamma:1", "knows_x = maybe"] {
            assert!(Settings::parse(bad).is_err(), "{bad}");
        }
        assert!(Settings::parse("scenario = 9").unwrap().scenario_config().is_err());
        assert!(Settings::parse("loss = 2").unwrap().channel_config().is_err());
    }

    #[test]
    fn merge_prefers_override() {
        let mut base = Settings::parse("scenario = 1\nseeds = 5").unwrap();
        base.merge(&Settings::parse("seeds = 9\nknows_x = false").unwrap());
        assert_eq!((base.scenario, base.seeds, base.knows_x), (Some(1), Some(9), Some(false)));
        let c = base.scenario_config().unwrap();
        assert_eq!(c.adversary.mode, AdversaryMode::Mitm { knows_x: false });
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let sample = |k: &str| match k {
            "profile" => "test",
            "rs2_mode" => "timing",
            "jitter" => "exponential:0.2",
            "mode" => "mirror",
            "vantage" => "midpoint",
            "knows_x" | "break_rsa" | "break_kdf" | "renew_x" => "false",
            "guard" | "loss" => "0.1",
            _ => "3",
        };
        for k in KEYS {
            Settings::default().set(k, sample(k)).unwrap();
        }
    }
}
