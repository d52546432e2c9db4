use std::collections::HashSet;
use std::time::Instant;

use itschan::asym::{fingerprint, keygen};
use itschan::netsim::channel::{Hops, Link};
use itschan::netsim::scenario::secret_for_seed;
use itschan::netsim::sim::{channel_for_seed, default_payloads};
use itschan::primitives::{combine_keys, ct_equal, kdf_stretch};
use itschan::session::deniability::validate_transcript;
use itschan::session::wire::{FrameType, HEADER_LEN};
use itschan::smp::{derive_smp_secret, run_pair, GroupParams, SmpOutcome};
use itschan::timing::{entropy_budget, privacy_amplify, run_pipeline, run_probe_exchange, MIN_BUDGET_BITS};
use itschan::*;
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn x(s: &str) -> SecretBuffer {
    SecretBuffer::new(SecretLabel::X, s.as_bytes().to_vec())
}

fn honest(seed: u64, secret: &str) -> HonestRun {
    let c = SessionConfig::test();
    let (i, r) = default_payloads();
    run_honest(
        channel_for_seed(ChannelConfig::default(), seed),
        [c.clone(), c],
        [x(secret), x(secret)],
        RunOptions { initiator_payloads: i, responder_payloads: r, ..Default::default() },
        seed,
    )
    .unwrap()
}

fn hamming(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[test]
fn combine_keys_avalanche() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut total = 0u32;
    for i in 0..100 {
        let mut a = [0u8; 32];
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut a);
        rng.fill_bytes(&mut b);
        let k = |a: &[u8], b: &[u8]| {
            combine_keys(&SecretBuffer::new(SecretLabel::RS1, a.to_vec()), &SecretBuffer::new(SecretLabel::RS2, b.to_vec()))
                .unwrap()
                .raw()
                .to_vec()
        };
        let base = k(&a, &b);
        assert_eq!(base, k(&a, &b));
        let bit = rng.gen_range(0..256);
        if i % 2 == 0 {
            a[bit / 8] ^= 1 << (bit % 8);
        } else {
            b[bit / 8] ^= 1 << (bit % 8);
        }
        let flipped = k(&a, &b);
        assert_ne!(base, flipped);
        total += hamming(&base, &flipped);
    }
    let mean = f64::from(total) / 100.0;
    assert!(mean > 80.0, "mean distance {mean}");
}

fn best_of(reps: usize, f: impl Fn()) -> f64 {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn kdf_cost_is_linear_in_iterations() {
    let salt = b"0123456789abcdef";
    let t1k = best_of(20, || {
        std::hint::black_box(kdf_stretch(b"0421", salt, 1_000).unwrap());
    });
    let t10k = best_of(5, || {
        std::hint::black_box(kdf_stretch(b"0421", salt, 10_000).unwrap());
    });
    assert!(t10k >= 0.9 * 10.0 * t1k, "10000 iterations {t10k:e}s vs 1000 iterations {t1k:e}s");
}

#[test]
fn ct_equal_time_does_not_depend_on_mismatch_position() {
    let a = vec![0x5au8; 1 << 16];
    let mut early = a.clone();
    early[0] ^= 1;
    let mut late = a.clone();
    *late.last_mut().unwrap() ^= 1;
    let same = a.clone();
    let time = |b: &[u8]| {
        best_of(200, || {
            std::hint::black_box(ct_equal(std::hint::black_box(&a), std::hint::black_box(b)));
        })
    };
    let (t_early, t_late, t_same) = (time(&early), time(&late), time(&same));
    for (name, t) in [("early", t_early), ("late", t_late)] {
        let r = t / t_same;
        assert!((0.5..2.0).contains(&r), "{name}: {t:e}s vs equal {t_same:e}s");
    }
}

#[test]
fn smp_soundness_against_one_guess() {
    let group = GroupParams::tiny();
    let mut rng = EntropySource::seeded(99);
    let fa = fingerprint(&keygen(512, &mut rng).unwrap().public);
    let fb = fingerprint(&keygen(512, &mut rng).unwrap().public);
    let salt = b"fixed-salt-16byt";
    let secret = |s: &str| derive_smp_secret(&fa, &fb, &x(s), salt, 1, group).unwrap();
    let guess = secret("0000");
    let mut matches = 0;
    for seed in 0..1000u64 {
        let real = secret(&secret_for_seed(seed));
        let mut sa = EntropySource::seeded(seed);
        let mut sb = EntropySource::seeded(seed + 10_000);
        let (oa, ob, _) = run_pair(group, real.clone(), guess.clone(), &mut sa, &mut sb).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(oa == SmpOutcome::Match, real == guess, "seed {seed}");
        matches += usize::from(oa == SmpOutcome::Match);
    }
    let p = 2f64.powi(-10);
    let bound = 2.0 * p + 3.0 * (p / 1000.0).sqrt();
    assert!(matches as f64 / 1000.0 <= bound, "{matches} matches");
}

#[test]
fn timing_pipeline_agrees_or_reports_insufficient_entropy() {
    let params = TimingParams::default();
    let mut ok = 0;
    for seed in 0..1000u64 {
        let mut link = Link::new(ChannelConfig { seed, ..Default::default() }, Hops::Both, 0).unwrap();
        let t = run_probe_exchange(&mut link, params.n_probes, params.spacing_us, None, &mut EntropySource::seeded(seed)).unwrap();
        let out = match run_pipeline(&t.initiator, &t.responder, &params) {
            Ok(o) => o,
            Err(Error::InsufficientEntropy(_)) => continue,
            Err(e) => panic!("seed {seed}: {e}"),
        };
        let a = privacy_amplify(&out.initiator_bits, &out.ledger, params.safety_margin);
        let b = privacy_amplify(&out.responder_bits, &out.ledger, params.safety_margin);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a.raw(), b.raw(), "seed {seed}");
                assert!(entropy_budget(&out.initiator_bits, &out.ledger, params.safety_margin) >= MIN_BUDGET_BITS);
                ok += 1;
            }
            (Err(Error::InsufficientEntropy(_)), Err(Error::InsufficientEntropy(_))) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
    }
    assert!(ok >= 990, "{ok}");
}

#[test]
fn reveals_follow_asym_use_and_match_hellos() {
    for seed in 0..20u64 {
        let run = honest(seed, "0007");
        let t = run.transcript();
        let kinds: Vec<FrameType> = t.iter().map(|e| FrameType::from_u8(e.bytes[0]).unwrap()).collect();
        let last_asym = kinds.iter().rposition(|k| k.is_asym()).unwrap();
        let first_sealed = kinds.iter().position(|k| k.is_sealed()).unwrap();
        assert!(last_asym < first_sealed);
        assert_eq!(kinds.iter().filter(|&&k| k == FrameType::Reveal).count(), 2);
        assert!(!kinds.contains(&FrameType::Data) || kinds.iter().position(|&k| k == FrameType::Data).unwrap() > last_asym);
        let rs3 = run.party(Role::Initiator).rs3_at_data.as_ref().unwrap();
        let v = validate_transcript(&t, rs3);
        assert!(v.valid() && v.reveals_match_hellos, "{:?}", v.problems);
        for r in [Role::Initiator, Role::Responder] {
            let live = run.party(r).live_at_data.as_ref().unwrap();
            assert!(!live.contains(&SecretLabel::KA1priv) && !live.contains(&SecretLabel::KB1priv));
        }
    }
}

/// 8-byte windows of a session's frames, skipping fixed layout bytes: frame
/// headers, the key size and exponent around each modulus, explicit nonces
/// of sealed frames, and runs of one repeated byte.
fn windows(run: &HonestRun) -> HashSet<[u8; 8]> {
    let mut out = HashSet::new();
    for w in &run.engine.wire {
        let kind = FrameType::from_u8(w.bytes[0]).unwrap();
        let body = &w.bytes[HEADER_LEN..];
        let body = match kind {
            FrameType::Hello => &body[2..body.len() - 5],
            k if k.is_sealed() => &body[8..],
            _ => body,
        };
        for win in body.windows(8) {
            if win.iter().all(|&b| b == win[0]) {
                continue;
            }
            out.insert(win.try_into().unwrap());
        }
    }
    out
}

#[test]
fn sessions_with_the_same_secret_share_no_material() {
    for pair in 0..100u64 {
        let secret = secret_for_seed(pair);
        let a = windows(&honest(2 * pair + 1000, &secret));
        let b = windows(&honest(2 * pair + 1001, &secret));
        let shared = a.intersection(&b).count();
        assert_eq!(shared, 0, "pair {pair}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn combine_keys_never_reproduced_from_one_side(rs1 in any::<[u8; 32]>(), rs2 in any::<[u8; 32]>(), guess in any::<[u8; 32]>()) {
        prop_assume!(guess != rs1 && guess != rs2);
        let b = |l, v: [u8; 32]| SecretBuffer::new(l, v.to_vec());
        let k = combine_keys(&b(SecretLabel::RS1, rs1), &b(SecretLabel::RS2, rs2)).unwrap();
        let only_rs1 = combine_keys(&b(SecretLabel::RS1, rs1), &b(SecretLabel::RS2, guess)).unwrap();
        let only_rs2 = combine_keys(&b(SecretLabel::RS1, guess), &b(SecretLabel::RS2, rs2)).unwrap();
        prop_assert_ne!(k.raw(), only_rs1.raw());
        prop_assert_ne!(k.raw(), only_rs2.raw());
    }

    #[test]
    fn ct_equal_agrees_with_eq(a in proptest::collection::vec(any::<u8>(), 0..64), b in proptest::collection::vec(any::<u8>(), 0..64)) {
        prop_assert_eq!(ct_equal(&a, &b), a == b);
        prop_assert!(ct_equal(&a, &a.clone()));
    }
}
