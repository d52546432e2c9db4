//! Shared bits from packet-timing jitter.
//!
//! Pipeline: probe exchange, median/guard-band quantization, index
//! agreement, parity-discard reconciliation, hashing into RS2. The
//! [`LeakLedger`] counts what the public messages disclose so the final hash
//! is only taken when enough undisclosed bits remain.
//!
//! The initiator observes round-trip time. The responder observes the
//! arrival offset of each probe against the fixed send schedule.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netsim::channel::{Direction, Link, Tap};
use crate::primitives::{tagged_hash, tags, SecretBuffer, SecretLabel};

/// Smallest probe count accepted by the exchange.
pub const MIN_PROBES: usize = 64;

/// RS2 requires at least this many undisclosed bits beyond the margin.
pub const MIN_BUDGET_BITS: i64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingParams {
    pub guard_fraction: f64,
    pub block_size: usize,
    pub safety_margin: usize,
    pub n_probes: usize,
    /// Gap between successive probes, µs.
    pub spacing_us: f64,
    /// Extra wait after the last probe before quantizing, µs.
    pub grace_us: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            guard_fraction: 0.25,
            block_size: 8,
            safety_margin: 128,
            n_probes: 4096,
            spacing_us: 10_000.0,
            grace_us: 100_000.0,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.guard_fraction) {
            return Err(Error::InvalidParameter("guard_fraction must lie in [0, 0.5)".into()));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidParameter("block_size must be >= 1".into()));
        }
        if !(self.spacing_us > 0.0 && self.spacing_us.is_finite()) {
            return Err(Error::InvalidParameter("probe spacing must be > 0".into()));
        }
        if !(self.grace_us >= 0.0 && self.grace_us.is_finite()) {
            return Err(Error::InvalidParameter("probe grace must be >= 0".into()));
        }
        if self.n_probes > u32::MAX as usize / 2 {
            return Err(Error::InvalidParameter("too many probes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TraceVantage {
    Initiator,
    Responder,
    Eavesdropper,
}

/// Delay samples keyed by probe id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeTrace {
    pub vantage: TraceVantage,
    samples: Vec<(u32, f64)>,
}

impl ProbeTrace {
    /// Ids must be strictly increasing and delays finite and non-negative.
    pub fn new(vantage: TraceVantage, samples: Vec<(u32, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidParameter("probe ids must be strictly increasing".into()));
        }
        if samples.iter().any(|&(_, d)| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidParameter("delays must be finite and non-negative".into()));
        }
        Ok(ProbeTrace { vantage, samples })
    }

    pub fn empty(vantage: TraceVantage) -> Self {
        ProbeTrace { vantage, samples: Vec::new() }
    }

    /// Sorts by id and shifts so the smallest delay is zero. Quantization
    /// is shift-invariant, so this only serves the non-negativity rule.
    pub fn from_shifted(vantage: TraceVantage, mut samples: Vec<(u32, f64)>) -> Result<Self> {
        samples.sort_by_key(|s| s.0);
        let min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        for s in &mut samples {
            s.1 -= min;
        }
        Self::new(vantage, samples)
    }

    /// Responder view: arrival time minus the scheduled send offset.
    pub fn responder(arrivals: &[(u32, f64)], spacing_us: f64) -> Result<Self> {
        let Some(first) = arrivals.iter().map(|a| a.0).min() else {
            return Ok(Self::empty(TraceVantage::Responder));
        };
        let samples = arrivals.iter().map(|&(id, t)| (id, t - (id - first) as f64 * spacing_us)).collect();
        Self::from_shifted(TraceVantage::Responder, samples)
    }

    pub fn samples(&self) -> &[(u32, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }
}

/// Bits with the probe ids they came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BitString {
    bits: Vec<bool>,
    kept: Vec<u32>,
}

impl BitString {
    pub fn new(bits: Vec<bool>, kept: Vec<u32>) -> Result<Self> {
        if bits.len() != kept.len() {
            return Err(Error::InvalidParameter("bits and kept indices differ in length".into()));
        }
        if kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("kept indices must be strictly increasing".into()));
        }
        Ok(BitString { bits, kept })
    }

    /// Bits at consecutive positions `0..n`.
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let kept = (0..bits.len() as u32).collect();
        BitString { bits, kept }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept(&self) -> &[u32] {
        &self.kept
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits packed MSB-first, zero-padded to whole bytes.
    pub fn packed(&self) -> Vec<u8> {
        pack_bits(&self.bits)
    }

    /// Keeps only positions whose id is in `ids` (sorted).
    pub fn restrict(&self, ids: &[u32]) -> BitString {
        let mut out = BitString::default();
        for (b, id) in self.bits.iter().zip(&self.kept) {
            if ids.binary_search(id).is_ok() {
                out.bits.push(*b);
                out.kept.push(*id);
            }
        }
        out
    }
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], n: usize) -> Result<Vec<bool>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::Malformed(format!("{} bytes cannot hold exactly {n} bits", bytes.len())));
    }
    let bits: Vec<bool> = (0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
    if n % 8 != 0 && bytes[n / 8] & (0xFF >> (n % 8)) != 0 {
        return Err(Error::Malformed("non-zero padding bits".into()));
    }
    Ok(bits)
}

/// Public disclosures made while extracting RS2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LeakLedger {
    parity_bits: usize,
    index_messages: usize,
}

impl LeakLedger {
    pub fn parity_bits_disclosed(&self) -> usize {
        self.parity_bits
    }

    pub fn index_messages_disclosed(&self) -> usize {
        self.index_messages
    }

    pub fn record_parities(&mut self, n: usize) {
        self.parity_bits += n;
    }

    pub fn record_index_messages(&mut self, n: usize) {
        self.index_messages += n;
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median threshold with a guard band of `guard_fraction × IQR` centred on
/// it. Samples strictly inside the band are dropped.
///
/// The 64-sample floor is enforced by the probe exchange, not here.
pub fn quantize(trace: &ProbeTrace, guard_fraction: f64) -> Result<BitString> {
    if !(0.0..0.5).contains(&guard_fraction) {
        return Err(Error::InvalidParameter("guard_fraction must lie in [0, 0.5)".into()));
    }
    let delays = trace.delays();
    if delays.is_empty() {
        return Err(Error::InsufficientEntropy("empty trace".into()));
    }
    if delays.iter().all(|&d| d == delays[0]) {
        return Err(Error::InsufficientEntropy("all delays equal".into()));
    }
    let s = sorted(&delays);
    let median = quantile(&s, 0.5);
    let half_band = guard_fraction * (quantile(&s, 0.75) - quantile(&s, 0.25)) / 2.0;
    let mut out = BitString::default();
    for &(id, d) in trace.samples() {
        if (d - median).abs() < half_band {
            continue;
        }
        out.bits.push(d > median);
        out.kept.push(id);
    }
    Ok(out)
}

/// Restricts both strings to their common ids. Each side publishes its kept
/// set once, so two index messages are recorded.
pub fn agree_indices(a: &BitString, b: &BitString, ledger: &mut LeakLedger) -> Result<(BitString, BitString)> {
    ledger.record_index_messages(2);
    let common = intersect(a.kept(), b.kept());
    if common.is_empty() {
        return Err(Error::InsufficientEntropy("no common probe indices".into()));
    }
    Ok((a.restrict(&common), b.restrict(&common)))
}

/// One side of [`agree_indices`]: own string restricted to the peer's ids.
pub fn restrict_to_peer(own: &BitString, peer_kept: &[u32]) -> Result<BitString> {
    let common = intersect(own.kept(), peer_kept);
    if common.is_empty() {
        return Err(Error::InsufficientEntropy("no common probe indices".into()));
    }
    Ok(own.restrict(&common))
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// XOR parity of each block; the last block may be short.
pub fn block_parities(bits: &BitString, block_size: usize) -> Vec<bool> {
    assert!(block_size > 0, "block_size must be >= 1");
    bits.bits().chunks(block_size).map(|c| c.iter().fold(false, |p, &b| p ^ b)).collect()
}

/// Drops every block whose two parities differ.
pub fn discard_mismatched(bits: &BitString, own: &[bool], peer: &[bool], block_size: usize) -> Result<BitString> {
    let nblocks = bits.len().div_ceil(block_size);
    if own.len() != nblocks || peer.len() != nblocks {
        return Err(Error::Malformed(format!("expected {nblocks} parities")));
    }
    let mut out = BitString::default();
    for (k, (bc, ic)) in bits.bits().chunks(block_size).zip(bits.kept().chunks(block_size)).enumerate() {
        if own[k] == peer[k] {
            out.bits.extend_from_slice(bc);
            out.kept.extend_from_slice(ic);
        }
    }
    Ok(out)
}

/// Parity-discard reconciliation of two aligned strings.
pub fn reconcile(a: &BitString, b: &BitString, block_size: usize) -> Result<(BitString, BitString, LeakLedger)> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter("strings differ in length".into()));
    }
    if block_size == 0 {
        return Err(Error::InvalidParameter("block_size must be >= 1".into()));
    }
    let pa = block_parities(a, block_size);
    let pb = block_parities(b, block_size);
    let mut ledger = LeakLedger::default();
    ledger.record_parities(pa.len());
    Ok((discard_mismatched(a, &pa, &pb, block_size)?, discard_mismatched(b, &pb, &pa, block_size)?, ledger))
}

/// Undisclosed bits left after parities and the margin.
pub fn entropy_budget(bits: &BitString, ledger: &LeakLedger, safety_margin: usize) -> i64 {
    bits.len() as i64 - ledger.parity_bits_disclosed() as i64 - safety_margin as i64
}

/// `RS2 = hash(tag ∥ u32 bit count ∥ packed bits)`.
pub fn privacy_amplify(bits: &BitString, ledger: &LeakLedger, safety_margin: usize) -> Result<SecretBuffer> {
    let budget = entropy_budget(bits, ledger, safety_margin);
    if budget < MIN_BUDGET_BITS {
        return Err(Error::InsufficientEntropy(format!(
            "{} bits, {} disclosed, margin {safety_margin}: budget {budget} < {MIN_BUDGET_BITS}",
            bits.len(),
            ledger.parity_bits_disclosed()
        )));
    }
    let n = (bits.len() as u32).to_be_bytes();
    let d = tagged_hash(tags::RS2, &[&n, &bits.packed()]);
    Ok(SecretBuffer::new(SecretLabel::RS2, d.0.to_vec()))
}

/// Fraction of reference positions the adversary got right. A position
/// missing from the adversary string counts as half right.
pub fn estimate_recovery(reference: &BitString, adversary: &BitString) -> f64 {
    if reference.is_empty() {
        return 0.5;
    }
    let mut score = 0.0;
    for (b, id) in reference.bits().iter().zip(reference.kept()) {
        score += match adversary.kept().binary_search(id) {
            Ok(k) => f64::from(u8::from(adversary.bits()[k] == *b)),
            Err(_) => 0.5,
        };
    }
    score / reference.len() as f64
}

/// Traces from a standalone probe exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeTraces {
    pub initiator: ProbeTrace,
    pub responder: ProbeTrace,
    pub eavesdropper: ProbeTrace,
    pub first_id: u32,
}

/// Sends `n_probes` probes at the given spacing over `link`; the responder
/// echoes each on arrival. Lost probes or echoes leave gaps in the traces.
pub fn run_probe_exchange(
    link: &mut Link,
    n_probes: usize,
    spacing_us: f64,
    mut tap: Option<&mut Tap>,
    rng: &mut impl Rng,
) -> Result<ExchangeTraces> {
    if n_probes < MIN_PROBES {
        return Err(Error::InvalidParameter(format!("n_probes must be >= {MIN_PROBES}")));
    }
    let first_id = random_probe_base(n_probes, rng);
    let mut init = Vec::new();
    let mut resp = Vec::new();
    let mut eve = Vec::new();
    for i in 0..n_probes {
        let id = first_id + i as u32;
        let Some(fwd) = link.send_datagram(Direction::Forward, i as f64 * spacing_us) else {
            continue;
        };
        resp.push((id, fwd.arrive));
        let Some(back) = link.send_datagram(Direction::Reverse, fwd.arrive) else {
            continue;
        };
        init.push((id, back.arrive - fwd.depart));
        if let Some(tap) = tap.as_deref_mut() {
            let out = tap.stamp_probe(&fwd);
            let ret = tap.stamp_echo(&back);
            eve.push((id, ret - out));
        }
    }
    if init.is_empty() && resp.is_empty() {
        return Err(Error::ChannelClosed);
    }
    Ok(ExchangeTraces {
        initiator: ProbeTrace::new(TraceVantage::Initiator, init)?,
        responder: ProbeTrace::responder(&resp, spacing_us)?,
        eavesdropper: ProbeTrace::from_shifted(TraceVantage::Eavesdropper, eve)?,
        first_id,
    })
}

/// Random first probe id, leaving room for `n` consecutive ids.
pub fn random_probe_base(n: usize, rng: &mut impl Rng) -> u32 {
    rng.gen_range(0..=u32::MAX - n as u32)
}

/// Both parties' pipeline on a pair of traces, as run by a session pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub initiator_bits: BitString,
    pub responder_bits: BitString,
    pub ledger: LeakLedger,
}

pub fn run_pipeline(init: &ProbeTrace, resp: &ProbeTrace, params: &TimingParams) -> Result<PipelineOutcome> {
    let a = quantize(init, params.guard_fraction)?;
    let b = quantize(resp, params.guard_fraction)?;
    let mut ledger = LeakLedger::default();
    let (a, b) = agree_indices(&a, &b, &mut ledger)?;
    let (a, b, rec) = reconcile(&a, &b, params.block_size)?;
    ledger.record_parities(rec.parity_bits_disclosed());
    Ok(PipelineOutcome { initiator_bits: a, responder_bits: b, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::channel::{ChannelConfig, Hops, JitterModel, Vantage};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn trace(delays: &[f64]) -> ProbeTrace {
        ProbeTrace::new(TraceVantage::Initiator, delays.iter().enumerate().map(|(i, &d)| (i as u32, d)).collect())
            .unwrap()
    }

    fn bits(s: &str) -> BitString {
        BitString::from_bits(s.chars().map(|c| c == '1').collect())
    }

    #[test]
    fn quantize_small_example() {
        let q = quantize(&trace(&[1.0, 9.0, 2.0, 8.0]), 0.0).unwrap();
        assert_eq!(q.bits(), &[false, true, false, true]);
        assert_eq!(q.kept(), &[0, 1, 2, 3]);
        let err = quantize(&trace(&[3.0; 100]), 0.25).unwrap_err();
        assert!(matches!(err, Error::InsufficientEntropy(_)));
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 8.0, 9.0];
        assert_eq!(quantile(&s, 0.5), 5.0);
        assert_eq!(quantile(&s, 0.25), 1.75);
        assert_eq!(quantile(&s, 0.75), 8.25);
    }

    #[test]
    fn guard_band_drops_near_median() {
        // median 5, IQR 4.5, half band at guard 0.4 is 0.9
        let q = quantize(&trace(&[1.0, 4.5, 5.5, 9.0, 2.0, 8.0]), 0.4).unwrap();
        assert_eq!(q.kept(), &[0, 3, 4, 5]);
    }

    #[test]
    fn trace_invariants() {
        assert!(ProbeTrace::new(TraceVantage::Initiator, vec![(2, 1.0), (2, 1.0)]).is_err());
        assert!(ProbeTrace::new(TraceVantage::Initiator, vec![(1, -1.0)]).is_err());
        let r = ProbeTrace::responder(&[(10, 5.0), (11, 107.0), (12, 203.0)], 100.0).unwrap();
        assert_eq!(r.delays(), vec![2.0, 4.0, 0.0]);
    }

    #[test]
    fn agree_indices_examples() {
        let mut ledger = LeakLedger::default();
        let a = bits("0110");
        let (x, y) = agree_indices(&a, &a, &mut ledger).unwrap();
        assert_eq!((x, y), (a.clone(), a.clone()));
        assert_eq!(ledger.index_messages_disclosed(), 2);
        let b = BitString::new(vec![true], vec![9]).unwrap();
        assert!(matches!(agree_indices(&a, &b, &mut ledger), Err(Error::InsufficientEntropy(_))));
        let c = BitString::new(vec![true, false], vec![1, 3]).unwrap();
        let (x, y) = agree_indices(&a, &c, &mut ledger).unwrap();
        assert_eq!(x.kept(), &[1, 3]);
        assert_eq!(x.bits(), &[true, false]);
        assert_eq!(y, c);
    }

    #[test]
    fn agree_indices_matches_set_arithmetic() {
        use std::collections::BTreeSet;
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pick = |rng: &mut ChaCha20Rng| -> BitString {
                let ids: Vec<u32> = (0..1024).filter(|_| rng.gen::<f64>() >= 0.3).collect();
                let b = ids.iter().map(|_| rng.gen()).collect();
                BitString::new(b, ids).unwrap()
            };
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            let sa: BTreeSet<u32> = a.kept().iter().copied().collect();
            let sb: BTreeSet<u32> = b.kept().iter().copied().collect();
            let (x, y) = agree_indices(&a, &b, &mut LeakLedger::default()).unwrap();
            assert_eq!(x.len(), sa.intersection(&sb).count());
            assert_eq!(x.kept(), y.kept());
        }
    }

    #[test]
    fn reconcile_examples() {
        let (x, y, l) = reconcile(&bits("0101"), &bits("0111"), 2).unwrap();
        assert_eq!(x.bits(), &[false, true]);
        assert_eq!(x, y);
        assert_eq!(l.parity_bits_disclosed(), 2);
        let a = bits("1100101");
        let (x, y, l) = reconcile(&a, &a, 3).unwrap();
        assert_eq!((&x, &y), (&a, &a));
        assert_eq!(l.parity_bits_disclosed(), 3);
        assert!(reconcile(&bits("01"), &bits("0"), 2).is_err());
        let (x, _, _) = reconcile(&BitString::default(), &BitString::default(), 8).unwrap();
        assert!(x.is_empty());
    }

    /// Against the per-block enumeration of even-error survival at p = 0.05,
    /// block 8: disagreement 0.0182354, surviving fraction 0.7152336.
    #[test]
    fn reconcile_matches_enumeration() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (mut kept, mut wrong, mut total) = (0usize, 0usize, 0usize);
        for _ in 0..10_000 {
            let a: Vec<bool> = (0..64).map(|_| rng.gen()).collect();
            let b: Vec<bool> = a.iter().map(|&x| x ^ (rng.gen::<f64>() < 0.05)).collect();
            let (x, y, _) = reconcile(&BitString::from_bits(a), &BitString::from_bits(b), 8).unwrap();
            total += 64;
            kept += x.len();
            wrong += x.bits().iter().zip(y.bits()).filter(|(p, q)| p != q).count();
        }
        let err = wrong as f64 / kept as f64;
        let surv = kept as f64 / total as f64;
        // 640k bits: binomial standard errors are ~0.0003 and ~0.0006
        assert!((err - 0.018235409254854573).abs() < 0.0015, "{err}");
        assert!((surv - 0.7152336).abs() < 0.005, "{surv}");
    }

    #[test]
    fn privacy_amplify_budget() {
        let mut ledger = LeakLedger::default();
        ledger.record_parities(64);
        let b600 = BitString::from_bits(vec![true; 600]);
        assert!(privacy_amplify(&b600, &ledger, 128).is_ok());
        let b300 = BitString::from_bits(vec![true; 300]);
        assert!(matches!(privacy_amplify(&b300, &ledger, 128), Err(Error::InsufficientEntropy(_))));
        let r1 = privacy_amplify(&b600, &ledger, 128).unwrap();
        let r2 = privacy_amplify(&b600.clone(), &ledger, 128).unwrap();
        assert_eq!(r1.expose().unwrap(), r2.expose().unwrap());
        assert_eq!(r1.label(), SecretLabel::RS2);
    }

    #[test]
    fn privacy_amplify_vector() {
        let b = BitString::from_bits((0..300).map(|i| (i * 7 + 3) % 5 < 2).collect());
        let rs2 = privacy_amplify(&b, &LeakLedger::default(), 0).unwrap();
        assert_eq!(
            crate::primitives::to_hex(rs2.expose().unwrap()),
            "c49fbffc24ef500e993cd48b5041e2ba67e24448dc1c49e578d44a79988988df"
        );
    }

    #[test]
    fn bit_packing_round_trips() {
        let b: Vec<bool> = (0..13).map(|i| i % 3 == 0).collect();
        let p = pack_bits(&b);
        assert_eq!(p, vec![0b1001_0010, 0b0100_1000]);
        assert_eq!(unpack_bits(&p, 13).unwrap(), b);
        assert!(unpack_bits(&[0b1001_0010, 0b0100_1001], 13).is_err());
        assert!(unpack_bits(&p, 17).is_err());
    }

    #[test]
    fn recovery_scores() {
        let r = bits("0110100111");
        assert_eq!(estimate_recovery(&r, &r), 1.0);
        let c = BitString::from_bits(r.bits().iter().map(|b| !b).collect());
        assert_eq!(estimate_recovery(&r, &c), 0.0);
        assert_eq!(estimate_recovery(&r, &BitString::default()), 0.5);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a = BitString::from_bits((0..10_000).map(|_| rng.gen()).collect());
        let e = BitString::from_bits((0..10_000).map(|_| rng.gen()).collect());
        assert!((estimate_recovery(&a, &e) - 0.5).abs() < 0.02);
    }

    #[test]
    fn probe_exchange_shapes() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut link = Link::new(ChannelConfig::default(), Hops::Both, 0).unwrap();
        let t = run_probe_exchange(&mut link, 100, 10_000.0, None, &mut rng).unwrap();
        assert_eq!((t.initiator.len(), t.responder.len(), t.eavesdropper.len()), (100, 100, 0));
        assert!(run_probe_exchange(&mut link, 10, 10_000.0, None, &mut rng).is_err());

        let flat = ChannelConfig {
            jitter: JitterModel::Uniform { a: 0.0, b: 0.0 },
            packet_noise_us: 0.0,
            ..Default::default()
        };
        let mut link = Link::new(flat, Hops::Both, 0).unwrap();
        let t = run_probe_exchange(&mut link, 100, 10_000.0, None, &mut rng).unwrap();
        let d = t.initiator.delays();
        assert!(d.iter().all(|&x| x == d[0]));

        let run = || {
            let mut rng = ChaCha20Rng::seed_from_u64(9);
            let mut link = Link::new(ChannelConfig::default(), Hops::Both, 0).unwrap();
            let mut tap = Tap::new(Vantage::Midpoint, 50.0, 9).unwrap();
            run_probe_exchange(&mut link, 256, 10_000.0, Some(&mut tap), &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn endpoint_tap_without_noise_recovers_everything() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut link = Link::new(ChannelConfig::default(), Hops::Both, 0).unwrap();
        let mut tap = Tap::new(Vantage::BothEndpoints, 0.0, 4).unwrap();
        let t = run_probe_exchange(&mut link, 1024, 10_000.0, Some(&mut tap), &mut rng).unwrap();
        let a = quantize(&t.initiator, 0.0).unwrap();
        let e = quantize(&t.eavesdropper, 0.0).unwrap();
        assert_eq!(estimate_recovery(&a, &e), 1.0);
    }

    #[test]
    fn honest_pipeline_agrees_on_default_channel() {
        let params = TimingParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut link = Link::new(ChannelConfig { seed: 2, ..Default::default() }, Hops::Both, 0).unwrap();
        let t = run_probe_exchange(&mut link, params.n_probes, params.spacing_us, None, &mut rng).unwrap();
        let out = run_pipeline(&t.initiator, &t.responder, &params).unwrap();
        assert_eq!(out.initiator_bits, out.responder_bits);
        assert!(entropy_budget(&out.initiator_bits, &out.ledger, params.safety_margin) >= MIN_BUDGET_BITS);
    }
}
