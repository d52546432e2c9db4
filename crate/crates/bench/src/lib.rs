//! Fixtures shared by the benchmarks.

use itschan::asym::{fingerprint, keygen};
use itschan::netsim::channel::{Hops, Link};
use itschan::smp::{derive_smp_secret, GroupParams};
use itschan::timing::{run_probe_exchange, ExchangeTraces};
use itschan::{ChannelConfig, EntropySource, Result, SecretBuffer, SecretLabel};
use num_bigint::BigUint;

/// Probe traces from the default channel.
pub fn exchange(n_probes: usize, seed: u64) -> Result<ExchangeTraces> {
    let mut link = Link::new(ChannelConfig { seed, ..Default::default() }, Hops::Both, 0)?;
    run_probe_exchange(&mut link, n_probes, 10_000.0, None, &mut EntropySource::seeded(seed))
}

/// An SMP secret as a session would derive it, for `group`.
pub fn smp_secret(group: &GroupParams, x: &str, seed: u64) -> Result<BigUint> {
    let mut rng = EntropySource::seeded(seed);
    let a = fingerprint(&keygen(512, &mut rng)?.public);
    let b = fingerprint(&keygen(512, &mut rng)?.public);
    let x = SecretBuffer::new(SecretLabel::X, x.as_bytes().to_vec());
    derive_smp_secret(&a, &b, &x, b"0123456789abcdef", 1, group)
}
