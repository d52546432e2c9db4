//! Two-hop link model with reciprocal block fading, loss and taps.
//!
//! A link is two hops of `base_delay / 2` each. Every forward transmission
//! (initiator to responder) draws a fresh jitter value per hop from the
//! configured model; reverse packets reuse the current values, so a probe and
//! its echo see the same fading. Each hop also adds half-normal per-packet
//! noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};

use crate::error::{Error, Result};

/// Attempts per reliable frame before it is given up.
pub const MAX_ATTEMPTS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JitterModel {
    /// Uniform on `[a, b]` µs.
    Uniform { a: f64, b: f64 },
    /// Exponential with rate `lambda` per µs.
    Exponential { lambda: f64 },
    /// `exp(N(mu, sigma))` µs.
    LogNormal { mu: f64, sigma: f64 },
}

impl JitterModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            JitterModel::Uniform { a, b } => a >= 0.0 && b >= a && b.is_finite(),
            JitterModel::Exponential { lambda } => lambda > 0.0 && lambda.is_finite(),
            JitterModel::LogNormal { mu, sigma } => mu.is_finite() && sigma >= 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("jitter model {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> f64 {
        match *self {
            JitterModel::Uniform { a, b } => {
                if a == b {
                    a
                } else {
                    rng.gen_range(a..=b)
                }
            }
            JitterModel::Exponential { lambda } => Exp::new(lambda).expect("validated").sample(rng),
            JitterModel::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// One-way propagation delay, µs.
    pub base_delay_us: f64,
    pub jitter: JitterModel,
    /// Standard deviation of the half-normal per-hop packet noise, µs.
    pub packet_noise_us: f64,
    pub loss: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            base_delay_us: 2000.0,
            jitter: JitterModel::LogNormal { mu: 5f64.ln(), sigma: 0.5 },
            packet_noise_us: 0.1,
            loss: 0.0,
            seed: 1,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_delay_us >= 0.0 && self.base_delay_us.is_finite()) {
            return Err(Error::InvalidParameter("base_delay must be >= 0".into()));
        }
        if !(self.packet_noise_us >= 0.0 && self.packet_noise_us.is_finite()) {
            return Err(Error::InvalidParameter("packet_noise must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(Error::InvalidParameter("loss must lie in [0, 1]".into()));
        }
        self.jitter.validate()
    }

    /// Round trip without jitter.
    pub fn base_rtt_us(&self) -> f64 {
        2.0 * self.base_delay_us
    }

    /// Retransmission timeout for reliable frames.
    pub fn rto_us(&self) -> f64 {
        3.0 * self.base_rtt_us()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Initiator towards responder.
    Forward,
    Reverse,
}

/// Which hops a link spans. A MITM splits the path at the midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hops {
    Both,
    First,
    Second,
}

impl Hops {
    fn list(self) -> &'static [usize] {
        match self {
            Hops::Both => &[0, 1],
            Hops::First => &[0],
            Hops::Second => &[1],
        }
    }
}

/// Timestamps of one delivered packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transit {
    pub depart: f64,
    /// Passage through the midpoint between the hops. Equals `depart` or
    /// `arrive` on single-hop links.
    pub mid: f64,
    pub arrive: f64,
}

#[derive(Debug, Clone)]
pub struct Link {
    cfg: ChannelConfig,
    hops: Hops,
    rng: ChaCha20Rng,
    fade: [f64; 2],
    last_reliable: [f64; 2],
}

impl Link {
    pub fn new(cfg: ChannelConfig, hops: Hops, stream: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        Ok(Link { cfg, hops, rng, fade: [0.0; 2], last_reliable: [f64::NEG_INFINITY; 2] })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    fn hop_delay(&mut self, hop: usize) -> f64 {
        let noise: f64 = self.rng.sample::<f64, _>(StandardNormal).abs() * self.cfg.packet_noise_us;
        self.cfg.base_delay_us / 2.0 + self.fade[hop] + noise
    }

    fn lost(&mut self) -> bool {
        self.cfg.loss > 0.0 && self.rng.gen::<f64>() < self.cfg.loss
    }

    /// Carries one packet sent at `depart`, ignoring loss.
    pub fn transit(&mut self, dir: Direction, depart: f64) -> Transit {
        let hops = self.hops.list();
        if dir == Direction::Forward {
            for &h in hops {
                self.fade[h] = self.cfg.jitter.sample(&mut self.rng);
            }
        }
        let order: Vec<usize> = match dir {
            Direction::Forward => hops.to_vec(),
            Direction::Reverse => hops.iter().rev().copied().collect(),
        };
        let first = self.hop_delay(order[0]);
        let mid = depart + first;
        let arrive = match order.get(1) {
            Some(&h) => mid + self.hop_delay(h),
            None => mid,
        };
        let mid = match (self.hops, dir) {
            (Hops::Second, Direction::Forward) | (Hops::First, Direction::Reverse) => depart,
            _ => mid,
        };
        Transit { depart, mid, arrive }
    }

    /// A datagram: one attempt, no ordering guarantee.
    pub fn send_datagram(&mut self, dir: Direction, depart: f64) -> Option<Transit> {
        if self.lost() {
            return None;
        }
        Some(self.transit(dir, depart))
    }

    /// A reliable frame: lost attempts are retried after the RTO and
    /// arrivals keep per-direction FIFO order. `None` once every attempt is
    /// lost.
    pub fn send_reliable(&mut self, dir: Direction, depart: f64) -> Option<Transit> {
        let mut t = depart;
        for _ in 0..MAX_ATTEMPTS {
            if self.lost() {
                t += self.cfg.rto_us();
                continue;
            }
            let mut tr = self.transit(dir, t);
            tr.depart = depart;
            let slot = &mut self.last_reliable[dir as usize];
            tr.arrive = tr.arrive.max(*slot);
            *slot = tr.arrive;
            return Some(tr);
        }
        None
    }
}

/// Where a passive adversary timestamps traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vantage {
    Midpoint,
    BothEndpoints,
}

/// A passive timestamping tap with Gaussian clock noise.
#[derive(Debug, Clone)]
pub struct Tap {
    pub vantage: Vantage,
    pub sigma_e: f64,
    rng: ChaCha20Rng,
}

impl Tap {
    pub fn new(vantage: Vantage, sigma_e: f64, seed: u64) -> Result<Self> {
        if !(sigma_e >= 0.0 && sigma_e.is_finite()) {
            return Err(Error::InvalidParameter("sigma_e must be >= 0".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(0xE7E);
        Ok(Tap { vantage, sigma_e, rng })
    }

    fn noise(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * self.sigma_e
    }

    /// Eve's timestamp of a probe on its way out.
    pub fn stamp_probe(&mut self, t: &Transit) -> f64 {
        let at = match self.vantage {
            Vantage::Midpoint => t.mid,
            Vantage::BothEndpoints => t.depart,
        };
        at + self.noise()
    }

    /// Eve's timestamp of the matching echo.
    pub fn stamp_echo(&mut self, t: &Transit) -> f64 {
        let at = match self.vantage {
            Vantage::Midpoint => t.mid,
            Vantage::BothEndpoints => t.arrive,
        };
        at + self.noise()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_never_below_base() {
        for jitter in [
            JitterModel::Uniform { a: 0.0, b: 10.0 },
            JitterModel::Exponential { lambda: 0.2 },
            JitterModel::LogNormal { mu: 1.0, sigma: 0.5 },
        ] {
            let cfg = ChannelConfig { jitter, ..Default::default() };
            let mut link = Link::new(cfg, Hops::Both, 0).unwrap();
            for i in 0..1000 {
                let t = link.transit(Direction::Forward, i as f64);
                assert!(t.arrive - t.depart >= cfg.base_delay_us);
                assert!(t.depart <= t.mid && t.mid <= t.arrive);
            }
        }
    }

    #[test]
    fn echo_reuses_forward_fading() {
        let cfg = ChannelConfig { packet_noise_us: 0.0, ..Default::default() };
        let mut link = Link::new(cfg, Hops::Both, 0).unwrap();
        let f = link.transit(Direction::Forward, 0.0);
        let r = link.transit(Direction::Reverse, f.arrive);
        assert!(((f.arrive - f.depart) - (r.arrive - r.depart)).abs() < 1e-9);
        assert!(((f.mid - f.depart) - (r.arrive - r.mid)).abs() < 1e-9);
    }

    #[test]
    fn reliable_frames_keep_order_and_retry() {
        let cfg = ChannelConfig { loss: 0.5, ..Default::default() };
        let mut link = Link::new(cfg, Hops::Both, 0).unwrap();
        let mut last = f64::NEG_INFINITY;
        let mut delivered = 0;
        for i in 0..20_000 {
            if let Some(t) = link.send_reliable(Direction::Forward, i as f64 * 10.0) {
                assert!(t.arrive >= last);
                last = t.arrive;
                delivered += 1;
            }
        }
        // all 8 attempts lost with probability 2^-8: 78 ± 9 expected drops
        let dropped = 20_000 - delivered;
        assert!((40..=120).contains(&dropped), "{dropped}");
        let cfg = ChannelConfig { loss: 1.0, ..Default::default() };
        let mut link = Link::new(cfg, Hops::Both, 0).unwrap();
        assert!(link.send_reliable(Direction::Forward, 0.0).is_none());
        assert!(link.send_datagram(Direction::Forward, 0.0).is_none());
    }

    #[test]
    fn rejects_bad_config() {
        let bad = ChannelConfig { loss: 1.5, ..Default::default() };
        assert!(Link::new(bad, Hops::Both, 0).is_err());
        let bad = ChannelConfig { jitter: JitterModel::Uniform { a: 3.0, b: 1.0 }, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(Tap::new(Vantage::Midpoint, -1.0, 0).is_err());
    }

    #[test]
    fn split_links_cover_one_hop_each() {
        let cfg = ChannelConfig { jitter: JitterModel::Uniform { a: 0.0, b: 0.0 }, packet_noise_us: 0.0, ..Default::default() };
        let mut a = Link::new(cfg, Hops::First, 0).unwrap();
        let t = a.transit(Direction::Forward, 0.0);
        assert_eq!(t.arrive, 1000.0);
        assert_eq!(t.mid, 1000.0);
        let mut b = Link::new(cfg, Hops::Second, 0).unwrap();
        let t = b.transit(Direction::Forward, 0.0);
        assert_eq!((t.mid, t.arrive), (0.0, 1000.0));
    }
}
