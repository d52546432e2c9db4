use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use itschan::asym::{decrypt, encrypt, keygen};
use itschan::netsim::scenario::secret_for_seed;
use itschan::netsim::sim::channel_for_seed;
use itschan::primitives::kdf_stretch;
use itschan::smp::{run_pair, GroupParams};
use itschan::timing::{privacy_amplify, run_pipeline, TimingParams};
use itschan::{run_honest, run_scenario, ChannelConfig, EntropySource, RunOptions, ScenarioConfig, SecretBuffer, SecretLabel, SessionConfig};
use itschan_bench::{exchange, smp_secret};

fn primitives(c: &mut Criterion) {
    c.bench_function("kdf_stretch_1000", |b| b.iter(|| kdf_stretch(black_box(b"0421"), b"salt-salt-salt-s", 1000)));
    c.bench_function("kdf_stretch_10000", |b| b.iter(|| kdf_stretch(black_box(b"0421"), b"salt-salt-salt-s", 10_000)));
}

fn asym(c: &mut Criterion) {
    let mut rng = EntropySource::seeded(1);
    c.bench_function("keygen_512", |b| b.iter(|| keygen(512, &mut rng).unwrap()));
    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("keygen_2048", |b| b.iter(|| keygen(2048, &mut rng).unwrap()));
    g.finish();
    let kp = keygen(2048, &mut rng).unwrap();
    let ct = encrypt(&kp.public, b"sixteen byte msg", &mut rng).unwrap();
    c.bench_function("encrypt_2048", |b| b.iter(|| encrypt(&kp.public, black_box(b"sixteen byte msg"), &mut rng).unwrap()));
    c.bench_function("decrypt_2048", |b| b.iter(|| decrypt(&kp.private, black_box(&ct)).unwrap()));
}

fn smp(c: &mut Criterion) {
    for (name, group) in [("smp_tiny", GroupParams::tiny()), ("smp_modp1536", GroupParams::modp1536())] {
        let x = smp_secret(group, "0421", 3).unwrap();
        let mut sa = EntropySource::seeded(4);
        let mut sb = EntropySource::seeded(5);
        c.bench_function(name, |b| b.iter(|| run_pair(group, x.clone(), x.clone(), &mut sa, &mut sb).unwrap()));
    }
}

fn timing(c: &mut Criterion) {
    let t = exchange(4096, 7).unwrap();
    let params = TimingParams::default();
    c.bench_function("pipeline_4096", |b| b.iter(|| run_pipeline(black_box(&t.initiator), &t.responder, &params).unwrap()));
    let out = run_pipeline(&t.initiator, &t.responder, &params).unwrap();
    c.bench_function("privacy_amplify", |b| b.iter(|| privacy_amplify(&out.initiator_bits, &out.ledger, 128).unwrap()));
    c.bench_function("probe_exchange_4096", |b| b.iter(|| exchange(4096, black_box(7)).unwrap()));
}

fn end_to_end(c: &mut Criterion) {
    let mut g = c.benchmark_group("end_to_end");
    g.sample_size(10);
    let xb = |s: &str| SecretBuffer::new(SecretLabel::X, s.as_bytes().to_vec());
    for (name, cfg) in [("honest_test_profile", SessionConfig::test()), ("honest_default_profile", SessionConfig::default())] {
        g.bench_function(name, |b| {
            b.iter_batched(
                || (cfg.clone(), secret_for_seed(9)),
                |(cfg, x)| {
                    run_honest(channel_for_seed(ChannelConfig::default(), 9), [cfg.clone(), cfg], [xb(&x), xb(&x)], RunOptions::default(), 9)
                        .unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
    for n in [1u8, 3] {
        let cfg = ScenarioConfig::for_scenario(n).unwrap();
        g.bench_function(format!("scenario_{n}"), |b| b.iter(|| run_scenario(&cfg, black_box(11)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, primitives, asym, smp, timing, end_to_end);
criterion_main!(benches);
