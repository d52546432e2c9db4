use itschan::netsim::channel::Tap;
use itschan::netsim::scenario::{run_seeds, secret_for_seed, summarize};
use itschan::netsim::sim::{channel_for_seed, default_payloads, LogKind};
use itschan::smp::GroupParams;
use itschan::*;
use proptest::prelude::*;

fn x(s: &str) -> SecretBuffer {
    SecretBuffer::new(SecretLabel::X, s.as_bytes().to_vec())
}

fn payloads() -> RunOptions {
    let (i, r) = default_payloads();
    RunOptions { initiator_payloads: i, responder_payloads: r, ..Default::default() }
}

fn honest(seed: u64, tap: Option<Tap>) -> HonestRun {
    let c = SessionConfig::test();
    let s = secret_for_seed(seed);
    run_honest(
        channel_for_seed(ChannelConfig::default(), seed),
        [c.clone(), c],
        [x(&s), x(&s)],
        RunOptions { tap, ..payloads() },
        seed,
    )
    .unwrap()
}

#[test]
fn reports_are_deterministic() {
    for n in 1..=4 {
        let cfg = ScenarioConfig::for_scenario(n).unwrap();
        let a = run_scenario(&cfg, 77).unwrap();
        let b = run_scenario(&cfg, 77).unwrap();
        assert_eq!(a.to_line(), b.to_line());
    }
}

#[test]
fn total_loss_times_out() {
    let c = SessionConfig::test();
    let run = run_honest(
        ChannelConfig { loss: 1.0, ..Default::default() },
        [c.clone(), c],
        [x("0001"), x("0001")],
        RunOptions::default(),
        3,
    )
    .unwrap();
    for r in [Role::Initiator, Role::Responder] {
        assert_eq!(run.session(r).phase(), Phase::Aborted);
        assert_eq!(run.session(r).abort_reason(), Some(&Error::Timeout));
    }
}

#[test]
fn taps_never_disturb_honest_runs() {
    for seed in 0..1000u64 {
        let vantage = if seed % 2 == 0 { Vantage::Midpoint } else { Vantage::BothEndpoints };
        let tap = Tap::new(vantage, (seed % 5) as f64 * 20.0, seed).unwrap();
        let plain = honest(seed, None);
        let tapped = honest(seed, Some(tap));
        assert_eq!(plain.engine.wire, tapped.engine.wire, "seed {seed}");
        for r in [Role::Initiator, Role::Responder] {
            assert_eq!(plain.session(r).phase(), tapped.session(r).phase(), "seed {seed}");
        }
        assert!(!tapped.tapped().probe.is_empty());
    }
}

#[test]
fn passive_scenarios_do_not_abort_honest_parties() {
    let seeds: Vec<u64> = (0..100).collect();
    for n in [2, 3] {
        let reports = run_seeds(&ScenarioConfig::for_scenario(n).unwrap(), &seeds).unwrap();
        assert!(reports.iter().all(|r| !r.honest_aborted), "scenario {n}");
    }
}

#[test]
fn log_clock_never_goes_back() {
    for seed in 0..20 {
        let run = honest(seed, None);
        assert!(run.log().windows(2).all(|w| w[0].t_us <= w[1].t_us));
        assert!(run.log().iter().all(|e| e.kind != LogKind::TimedOut));
        assert!(run.duration_us >= run.log().last().unwrap().t_us);
    }
}

#[test]
fn recovery_falls_as_eve_clock_gets_noisier() {
    let seeds: Vec<u64> = (0..40).collect();
    let mut prev = f64::INFINITY;
    for sigma in [0.0, 10.0, 50.0, 200.0, 1000.0] {
        let mut cfg = ScenarioConfig::for_scenario(3).unwrap();
        cfg.adversary.sigma_e = sigma;
        let mean = summarize(&run_seeds(&cfg, &seeds).unwrap()).unwrap().eve_rs2_recovery_mean;
        assert!(mean <= prev, "sigma {sigma}: {mean} > {prev}");
        prev = mean;
    }
    assert!(prev > 0.45);
}

#[test]
fn renewed_secret_defeats_next_session_mitm() {
    let mut cfg = ScenarioConfig::for_scenario(4).unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let leaked = run_seeds(&cfg, &seeds).unwrap();
    assert!(leaked.iter().all(|r| r.next_session_mitm_success == Some(true)));
    cfg.renew_x = true;
    let renewed = run_seeds(&cfg, &seeds).unwrap();
    assert!(renewed.iter().all(|r| r.next_session_mitm_success == Some(false)));
    assert!(renewed.iter().all(|r| !r.eve_rs3_recovered));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn full_knowledge_mitm_always_wins(seed in any::<u64>(), knows_x: bool, sigma in 0.0f64..100.0, both: bool) {
        let mut cfg = ScenarioConfig::for_scenario(1).unwrap();
        cfg.adversary.mode = AdversaryMode::Mitm { knows_x };
        cfg.adversary.sigma_e = if seed % 2 == 0 { 0.0 } else { sigma };
        cfg.adversary.vantage = if both { Vantage::BothEndpoints } else { Vantage::Midpoint };
        if !knows_x {
            // no accidental secret collisions mod a small q
            cfg.session.group = GroupParams::modp1536();
        }
        let r = run_scenario(&cfg, seed).unwrap();
        if knows_x && cfg.adversary.sigma_e == 0.0 && both {
            prop_assert!(r.eve_rs3_recovered);
        }
        if !knows_x && secret_for_seed(seed) != "0000" {
            prop_assert!(r.smp_detected_mitm);
            prop_assert!(!r.eve_rs3_recovered);
        }
    }
}
