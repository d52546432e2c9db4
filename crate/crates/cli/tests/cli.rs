use std::path::Path;
use std::process::{Command, Output};

use itschan::netsim::scenario::secret_for_seed;
use itschan::netsim::sim::{channel_for_seed, default_payloads};
use itschan::primitives::to_hex;
use itschan::{run_honest, ChannelConfig, Profile, Role, RunOptions, SecretBuffer, SecretLabel, SessionConfig};

fn itschan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itschan")).args(args).env_remove("ITSCHAN_PROFILE").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(line: &str, key: &str) -> String {
    let prefix = format!("{key}=");
    line.split_whitespace().find_map(|kv| kv.strip_prefix(prefix.as_str())).unwrap_or_else(|| panic!("{key} in {line}")).to_string()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn default_handshake_secures() {
    let o = itschan(&["handshake", "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("profile=default"));
    assert!(out.contains("-> Secured"));
    assert!(out.contains("equal on both sides"));
}

#[test]
fn too_few_probes_is_a_protocol_abort() {
    let o = itschan(&["handshake", "--profile", "test", "--probes", "10"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient entropy"));
}

#[test]
fn same_seed_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    for p in [&a, &b] {
        let o = itschan(&["handshake", "--profile", "test", "--seed", "9", "--report", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let ra = read(&a);
    assert_eq!(ra, read(&b));
    assert_eq!(ra.lines().count(), 1);
    assert_eq!(field(&ra, "outcome"), "secured");
}

#[test]
fn hash_mode_skips_probes() {
    let o = itschan(&["handshake", "--profile", "test", "--rs2-mode", "hash_nonces_x"]);
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("TimingKeygen"));
}

#[test]
fn profile_from_environment_and_flag() {
    let run = |env: &str, extra: &[&str]| {
        let mut args = vec!["handshake", "--rs2-mode", "hash_nonces_x"];
        args.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_itschan")).args(&args).env("ITSCHAN_PROFILE", env).output().unwrap();
        assert_eq!(code(&o), 0);
        stdout(&o)
    };
    assert!(run("test", &[]).contains("profile=test"));
    assert!(run("test", &["--profile", "default"]).contains("profile=default"));
    let o = Command::new(env!("CARGO_BIN_EXE_itschan")).args(["handshake"]).env("ITSCHAN_PROFILE", "huge").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# short run\nprofile = test\nprobes = 2048\nseed = 4\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = itschan(&["--config", c, "handshake"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("profile=test seed=4 rs2_mode=timing probes=2048"));
    let o = itschan(&["handshake", "--config", c, "--seed", "5"]);
    assert!(stdout(&o).contains("seed=5"));

    std::fs::write(&cfg, "probes = lots\n").unwrap();
    assert_eq!(code(&itschan(&["--config", c, "handshake"])), 2);
    assert_eq!(code(&itschan(&["--config", "/no/such/file", "handshake"])), 2);
}

#[test]
fn exit_code_matrix() {
    let cases: &[(&[&str], i32)] = &[
        (&[], 2),
        (&["frobnicate"], 2),
        (&["handshake", "--bogus"], 2),
        (&["handshake", "--profile", "huge"], 2),
        (&["handshake", "--seed", "-3"], 2),
        (&["handshake", "--profile", "test", "--seed", "2"], 0),
        (&["handshake", "--profile", "test", "--probes", "63"], 1),
        (&["attack"], 2),
        (&["attack", "--scenario", "0"], 2),
        (&["attack", "--scenario", "6"], 2),
        (&["attack", "--scenario", "2", "--seeds", "0"], 2),
        (&["attack", "--scenario", "3", "--sigma-e", "-1"], 2),
        (&["attack", "--scenario", "3", "--vantage", "moon"], 2),
        (&["attack", "--scenario", "2", "--seeds", "2"], 0),
        (&["sweep", "--param", "guard"], 2),
        (&["sweep", "--param", "colour", "--values", "1"], 2),
        (&["sweep", "--param", "guard", "--values", "0.7"], 2),
        (&["sweep", "--param", "block", "--values", "2", "--seeds", "1"], 0),
        (&["vectors", "--out", "/no/such/dir/v.json"], 2),
        (&["--help"], 0),
    ];
    for (args, want) in cases {
        assert_eq!(code(&itschan(args)), *want, "{args:?}");
    }
}

#[test]
fn scenario_one_always_breaks() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.txt");
    let o = itschan(&["attack", "--scenario", "1", "--seeds", "50", "--report", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = read(&rep);
    assert_eq!(text.lines().count(), 51);
    assert_eq!(field(text.lines().last().unwrap(), "eve_rs3_recovered"), "1.0000");
}

#[test]
fn mirror_keeps_integrity() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.txt");
    let o = itschan(&["attack", "--scenario", "3", "--seeds", "200", "--report", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary = read(&rep).lines().last().unwrap().to_string();
    assert_eq!(field(&summary, "integrity_preserved"), "1.0000");
    assert_eq!(field(&summary, "runs"), "200");
}

#[test]
fn renewal_gate() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.txt");
    let r = rep.to_str().unwrap();
    assert_eq!(code(&itschan(&["attack", "--scenario", "4", "--seeds", "5", "--report", r])), 0);
    assert_eq!(field(read(&rep).lines().last().unwrap(), "next_session_mitm_success"), "1.0000");
    assert_eq!(code(&itschan(&["attack", "--scenario", "4", "--seeds", "5", "--renew-x", "--report", r])), 0);
    assert_eq!(field(read(&rep).lines().last().unwrap(), "next_session_mitm_success"), "0.0000");
}

fn sweep_rows(param: &str, values: &str, seeds: &str) -> Vec<String> {
    let o = itschan(&["sweep", "--param", param, "--values", values, "--seeds", seeds]);
    assert_eq!(code(&o), 0);
    stdout(&o).lines().filter(|l| l.starts_with("sweep ")).map(String::from).collect()
}

fn column(rows: &[String], key: &str) -> Vec<f64> {
    rows.iter().map(|r| field(r, key).parse().unwrap()).collect()
}

#[test]
fn sigma_sweep_recovery_never_rises() {
    let rows = sweep_rows("sigma_e", "0,10,50,200,1000", "30");
    let rec = column(&rows, "eve_rs2_recovery_mean");
    assert_eq!(rec.len(), 5);
    assert!(rec.windows(2).all(|w| w[1] <= w[0]), "{rec:?}");
}

#[test]
fn guard_sweep_keeps_fewer_samples() {
    let rows = sweep_rows("guard", "0,0.1,0.2,0.3,0.4", "5");
    let kept = column(&rows, "kept_fraction");
    assert!(kept.windows(2).all(|w| w[1] < w[0]), "{kept:?}");
}

#[test]
fn single_value_sweep_has_one_row() {
    let o = itschan(&["sweep", "--param", "block", "--values", "8", "--seeds", "2"]);
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("sweep ")).count(), 1);
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn sweep_report_file_gets_rows() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("s.txt");
    let o = itschan(&["sweep", "--param", "sigma_e", "--values", "0,50", "--seeds", "2", "--report", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("sweep "));
    assert_eq!(read(&rep).lines().count(), 2);
}

#[test]
fn vectors_round_trip_and_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        assert_eq!(code(&itschan(&["vectors", "--out", p.to_str().unwrap()])), 0);
    }
    let text = read(&a);
    assert_eq!(text, read(&b));
    let set = itschan::vectors::from_json(&text).unwrap();
    assert!(itschan::vectors::verify(&set).unwrap().is_empty());
    assert_eq!(stdout(&itschan(&["vectors"])).trim_end(), text.trim_end());
}

#[test]
fn socket_transport_between_two_processes() {
    let o = itschan(&["handshake", "--transport", "socket", "--profile", "test", "--rs2-mode", "hash_nonces_x"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    let fps: Vec<String> = out.lines().filter(|l| l.contains("rs3_fp=")).map(|l| field(l, "rs3_fp")).collect();
    assert_eq!(fps.len(), 2);
    assert_eq!(fps[0], fps[1]);
}

#[test]
fn outputs_carry_no_secrets() {
    let seed = 12u64;
    let x = secret_for_seed(seed);
    let c = SessionConfig::for_profile(Profile::Test);
    let (pi, pr) = default_payloads();
    let xb = || SecretBuffer::new(SecretLabel::X, x.as_bytes().to_vec());
    let run = run_honest(
        channel_for_seed(ChannelConfig::default(), seed),
        [c.clone(), c],
        [xb(), xb()],
        RunOptions { initiator_payloads: pi, responder_payloads: pr, ..Default::default() },
        seed,
    )
    .unwrap();
    let rs3 = to_hex(run.party(Role::Initiator).rs3_at_data.as_ref().unwrap().raw());

    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.txt");
    let r = rep.to_str().unwrap();
    let s = seed.to_string();
    let mut all = String::new();
    for args in [
        vec!["handshake", "--profile", "test", "--seed", &s, "--report", r],
        vec!["attack", "--scenario", "1", "--first-seed", &s, "--seeds", "1", "--report", r],
        vec!["attack", "--scenario", "5", "--first-seed", &s, "--seeds", "1", "--report", r],
        vec!["sweep", "--param", "sigma_e", "--values", "0", "--first-seed", &s, "--seeds", "1", "--report", r],
    ] {
        let o = itschan(&args);
        all.push_str(&stdout(&o));
        all.push_str(&String::from_utf8_lossy(&o.stderr));
        all.push_str(&read(&rep));
    }
    assert!(all.contains("RS3 fingerprint"));
    assert!(!all.contains(&rs3));
    assert!(!all.contains(&rs3[..16]));
    assert!(all.split(|ch: char| !ch.is_ascii_alphanumeric()).all(|tok| tok != x), "X {x} printed");
}
