use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use aas_cli::config::ClauseConfig;
use aas_cli::generate::{generate, GeneratorSpec, Scenario};
use aas_cli::pipeline::run_pipeline;
use aas_cli::report::Report;
use aas_cli::session::{read_sessions, write_sessions, SessionFile};

fn aas(args: &[&str], stdin: Option<&[u8]>, envs: &[(&str, &str)]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_aas"))
        .args(args)
        .envs(envs.iter().copied())
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn aas");
    if let Some(bytes) = stdin {
        child.stdin.take().unwrap().write_all(bytes).unwrap();
    }
    child.wait_with_output().unwrap()
}

fn session_bytes(file: &SessionFile) -> Vec<u8> {
    let mut out = Vec::new();
    write_sessions(&mut out, file).unwrap();
    out
}

fn score(file: &SessionFile, config: &ClauseConfig) -> Report {
    let plan = config.resolve(file.header.channels, file.header.epsilon, 0).unwrap();
    run_pipeline(file, &plan, false).unwrap()
}

fn spec(scenario: Scenario, seed: u64) -> GeneratorSpec {
    GeneratorSpec { scenario, seed, ..GeneratorSpec::default() }
}

#[test]
fn generated_sessions_round_trip() {
    for scenario in [Scenario::Appetition, Scenario::LatentDriver, Scenario::Clones] {
        let g = generate(&spec(scenario, 3)).unwrap();
        let bytes = session_bytes(&g.file);
        let back = read_sessions(&bytes[..], Path::new("mem")).unwrap();
        assert_eq!(back, g.file);
    }
}

#[test]
fn generator_is_seeded() {
    let a = generate(&spec(Scenario::DiffuseDizziness, 11)).unwrap();
    let b = generate(&spec(Scenario::DiffuseDizziness, 11)).unwrap();
    let c = generate(&spec(Scenario::DiffuseDizziness, 12)).unwrap();
    assert_eq!(session_bytes(&a.file), session_bytes(&b.file));
    assert_ne!(session_bytes(&a.file), session_bytes(&c.file));
}

#[test]
fn shared_maps_close_harmony() {
    let mut config = ClauseConfig::default();
    config.harmony.enabled = true;
    let shared = score(&generate(&spec(Scenario::LatentDriver, 5)).unwrap().file, &config);
    for s in &shared.sessions {
        assert_eq!(s.penalties.harmony.as_ref().unwrap().harm, 0.0, "t = {}", s.t);
    }
    let distinct = GeneratorSpec { shared_maps: false, ..spec(Scenario::LatentDriver, 5) };
    let split = score(&generate(&distinct).unwrap().file, &config);
    assert!(split.sessions.iter().any(|s| s.penalties.harmony.as_ref().unwrap().harm > 0.0));
}

#[test]
fn dedup_finds_planted_clones() {
    let mut config = ClauseConfig::default();
    config.audit.enabled = true;
    for seed in 0..10 {
        let g = generate(&GeneratorSpec { channels: 9, ..spec(Scenario::Clones, seed) }).unwrap();
        assert!(!g.planted.is_empty());
        let report = score(&g.file, &config);
        let found: Vec<Vec<usize>> =
            report.audit.unwrap().dedup.unwrap().into_iter().map(|g| g.members).collect();
        assert_eq!(found, g.planted, "seed {seed}");
    }
}

#[test]
fn empty_clause_set_scores_only() {
    let g = generate(&spec(Scenario::Appetition, 1)).unwrap();
    let report = score(&g.file, &ClauseConfig::default());
    assert_eq!(report.sessions.len(), g.file.snapshots.len());
    for s in &report.sessions {
        assert!(s.penalties.pc.is_none() && s.penalties.psr.is_none());
        assert!(s.penalties.harmony.is_none() && s.penalties.alignment.is_none());
        assert!(s.representation.is_none() && s.hierarchy.is_none() && s.perfection.is_none());
    }
    assert!(report.audit.is_none() && report.hierarchy.is_none() && report.drift.is_none());
    let trajectory = report.trajectory.unwrap();
    assert!(trajectory.metrics.is_none() && trajectory.law_fixity.is_none());
    assert!(report.checks.passed);
}

#[test]
fn penalties_leave_base_score_alone() {
    let g = generate(&spec(Scenario::Degradation, 2)).unwrap();
    let plain = score(&g.file, &ClauseConfig::default());
    let full = score(&g.file, &ClauseConfig::preset("all-clauses").unwrap());
    for (a, b) in plain.sessions.iter().zip(&full.sessions) {
        assert_eq!(a.breakdown, b.breakdown);
        let pc = b.penalties.pc.as_ref().unwrap();
        assert_eq!(pc.base_total, a.breakdown.total);
        assert_eq!(pc.adjusted_total, pc.base_total + pc.penalty);
    }
}

#[test]
fn report_round_trips_through_subcommand() {
    let g = generate(&spec(Scenario::Appetition, 9)).unwrap();
    let bytes = session_bytes(&g.file);
    let scored = aas(&["--config", "all-clauses", "score"], Some(&bytes), &[]);
    assert!(scored.status.success());
    let again = aas(&["report"], Some(&scored.stdout), &[]);
    assert!(again.status.success());
    assert_eq!(again.stdout, scored.stdout);
    let parsed = Report::read(&scored.stdout[..]).unwrap();
    assert_eq!(parsed.sessions.len(), g.file.snapshots.len());
}

#[test]
fn table_output() {
    let g = generate(&spec(Scenario::Appetition, 9)).unwrap();
    let out = aas(&["--config", "all-clauses", "--format", "table", "score"], Some(&session_bytes(&g.file)), &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() > g.file.snapshots.len());
    assert!(text.contains("verdict"));
    assert!(text.contains("checks"));
}

#[test]
fn serial_and_parallel_agree() {
    let g = generate(&spec(Scenario::Clones, 4)).unwrap();
    let bytes = session_bytes(&g.file);
    let args = ["--config", "all-clauses", "score"];
    let par = aas(&args, Some(&bytes), &[]);
    let ser = aas(&args, Some(&bytes), &[("AAS_NO_PARALLEL", "1")]);
    assert!(par.status.success() && ser.status.success());
    assert_eq!(par.stdout, ser.stdout);
}

#[test]
fn epsilon_flag_overrides_header() {
    let g = generate(&spec(Scenario::Appetition, 1)).unwrap();
    let out = aas(&["--epsilon", "0.05", "score"], Some(&session_bytes(&g.file)), &[]);
    assert!(out.status.success());
    let report = Report::read(&out.stdout[..]).unwrap();
    assert_eq!(report.config.epsilon, 0.05);
    assert_eq!(report.sessions[0].breakdown.epsilon, 0.05);
}

#[test]
fn exit_codes() {
    let ok = "{\"kind\":\"header\",\"channels\":2,\"ids\":[\"a\",\"b\"],\"weights\":[0.5,0.5],\"epsilon\":0.01}\n\
              {\"t\":0,\"x\":[0.5,0.5],\"r\":[0,0]}\n{\"t\":1,\"x\":[0.55,0.5],\"r\":[0,0]}\n";
    assert_eq!(aas(&["score"], Some(ok.as_bytes()), &[]).status.code(), Some(0));

    let bad_weights = ok.replace("[0.5,0.5],\"epsilon\"", "[0.5,0.6],\"epsilon\"");
    let out = aas(&["score"], Some(bad_weights.as_bytes()), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weight sum"));

    let bad_x = ok.replace("[0.55,0.5]", "[1.5,0.5]");
    let out = aas(&["score"], Some(bad_x.as_bytes()), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    assert_eq!(aas(&["--config", "no-such-preset", "score"], Some(ok.as_bytes()), &[]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let tight = dir.path().join("tight.toml");
    std::fs::write(&tight, "[dynamics]\nlx = 0.001\nlr = 0.0\n").unwrap();
    let jump = ok.replace("[0.55,0.5]", "[1.0,0.0]");
    let out = aas(&["--config", tight.to_str().unwrap(), "audit"], Some(jump.as_bytes()), &[]);
    assert_eq!(out.status.code(), Some(2));
    let report = Report::read(&out.stdout[..]).unwrap();
    assert!(!report.audit.unwrap().rate.unwrap().violations.is_empty());

    assert_eq!(aas(&["score", "/no/such/file.jsonl"], None, &[]).status.code(), Some(3));
}

#[test]
fn govern_emits_verdict() {
    let g = generate(&GeneratorSpec { steps: 12, ..spec(Scenario::Degradation, 6) }).unwrap();
    let out = aas(&["govern"], Some(&session_bytes(&g.file)), &[]);
    assert!(out.status.success());
    let drift = Report::read(&out.stdout[..]).unwrap().drift.unwrap();
    assert_eq!(drift.verdict.decision, aas_core::teleology::Decision::Rollback);
}

#[test]
fn generate_writes_planted_groups() {
    let dir = tempfile::tempdir().unwrap();
    let sessions = dir.path().join("s.jsonl");
    let planted = dir.path().join("p.json");
    let out = aas(
        &[
            "--seed",
            "8",
            "generate",
            "--scenario",
            "clones",
            "--channels",
            "8",
            "--out",
            sessions.to_str().unwrap(),
            "--planted",
            planted.to_str().unwrap(),
        ],
        None,
        &[],
    );
    assert!(out.status.success());
    let groups: Vec<Vec<usize>> = serde_json::from_str(&std::fs::read_to_string(&planted).unwrap()).unwrap();
    let expect = generate(&GeneratorSpec { channels: 8, ..spec(Scenario::Clones, 8) }).unwrap();
    assert_eq!(groups, expect.planted);
    assert_eq!(std::fs::read(&sessions).unwrap(), session_bytes(&expect.file));
}
