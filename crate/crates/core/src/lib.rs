//! Bootstraps a forward-secret session key from a short memorized secret.
//!
//! Two parties exchange ephemeral RSA keys, prove they hold the same secret
//! with a socialist millionaire exchange, agree on nonces (RS1), distil
//! further key material from packet-timing jitter (RS2) and combine both
//! into the session key RS3. [`netsim`] runs the protocol over a simulated
//! network against passive and active adversaries.

pub mod asym;
pub(crate) mod codec;
pub mod error;
pub mod netsim;
pub mod primitives;
pub mod session;
pub mod smp;
pub mod timing;
pub mod vectors;

pub use error::{Error, Result};
pub use netsim::adversary::{AdversaryConfig, AdversaryMode};
pub use netsim::channel::{ChannelConfig, JitterModel, Vantage};
pub use netsim::config::Settings;
pub use netsim::scenario::{run_scenario, run_seeds, AttackReport, AttackSummary, ScenarioConfig};
pub use netsim::sim::{par_map, run_honest, HonestRun, RunOptions};
pub use primitives::{Digest, EntropySource, SecretBuffer, SecretLabel};
pub use session::{session_start, Event, Phase, Profile, Role, Rs2Mode, Session, SessionConfig};
pub use timing::{BitString, LeakLedger, ProbeTrace, TimingParams};
