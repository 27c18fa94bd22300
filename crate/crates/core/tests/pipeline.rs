use mcm_core::identity_verifier::Verdict;
use mcm_core::pipeline::{make_witness, replay, run_pipeline, FamilyKind, RunConfig, Stage, Unit, Witness};
use mcm_core::schedule::{FormFamily, ProblemShape};
use mcm_core::{Error, Field};

fn fermat(n: usize, c: usize, lambda: u32, degrees: Vec<u32>, p: u32, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        shape: ProblemShape { dim: n, c, r: 0 },
        family: FamilyKind::GeneralFermat { lambda: vec![lambda; n + 1], degrees },
        field: Field::Prime(p),
        seed,
        ..RunConfig::default()
    };
    cfg.census.shapes.truncate(1);
    cfg.census.agreement_samples = 2000;
    cfg
}

fn quick_mcm(seed: u64) -> RunConfig {
    let mut cfg = RunConfig { seed, ..RunConfig::default() };
    cfg.verify.trials = 3;
    cfg.scan.crosscheck_samples = 500;
    cfg.census.shapes.truncate(1);
    cfg.census.agreement_samples = 1000;
    cfg
}

#[test]
fn mcm_run_is_deterministic() {
    let cfg = quick_mcm(21);
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    assert!(a.pass);
    assert_eq!(a.stages.len(), 10);
    assert_eq!(a.canonical_json().unwrap(), b.canonical_json().unwrap());
    assert!(!a.canonical_json().unwrap().contains("timings_ms"));
    let other = run_pipeline(&quick_mcm(22)).unwrap();
    assert_ne!(a.canonical_json().unwrap(), other.canonical_json().unwrap());
}

#[test]
fn fermat_run_passes_every_applicable_stage() {
    let r = run_pipeline(&fermat(3, 2, 2, vec![3, 2], 7, 4)).unwrap();
    assert!(r.pass);
    for s in &r.stages {
        let expected = if s.stage == Stage::Crosscheck { Verdict::Skip } else { Verdict::Pass };
        assert_eq!(s.verdict, expected, "{:?}", s.stage);
    }
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn schedule_only_run() {
    let cfg = RunConfig::from_toml("seed = 1\nstages = [\"schedule\"]\nfield = { kind = \"prime\", p = 5 }\n[shape]\nN = 4\nc = 3\nr = 0\n").unwrap();
    let r = run_pipeline(&cfg).unwrap();
    assert_eq!(r.stages.len(), 1);
    let d = &r.stages[0].summary["schedule"]["d"];
    assert_eq!(d, "64845");
}

#[test]
fn failure_halts_dependents_only() {
    let mut cfg = quick_mcm(3);
    cfg.twists = Some(vec![2, 0, 0]);
    let r = run_pipeline(&cfg).unwrap();
    assert!(!r.pass);
    assert_eq!(r.exit_code(), 1);
    assert_eq!(r.stage(Stage::Schedule).unwrap().verdict, Verdict::Pass);
    assert_eq!(r.stage(Stage::Build).unwrap().verdict, Verdict::Fail);
    for s in [Stage::Divisibility, Stage::Gluing, Stage::Transition, Stage::Smoothness, Stage::BaseLocus, Stage::Crosscheck] {
        let st = r.stage(s).unwrap();
        assert_eq!(st.verdict, Verdict::Skip, "{s:?}");
        assert!(st.reason.as_deref().unwrap().starts_with("dependency"));
    }
    assert_eq!(r.stage(Stage::Census).unwrap().verdict, Verdict::Pass);
}

#[test]
fn characteristic_guard_skips_differential_scan() {
    let r = run_pipeline(&fermat(2, 1, 3, vec![3], 3, 1)).unwrap();
    let base = r.stage(Stage::BaseLocus).unwrap();
    if r.stage(Stage::Smoothness).unwrap().verdict == Verdict::Pass {
        assert_eq!(base.verdict, Verdict::Skip);
        assert!(base.notes[0].contains("divides lambda"));
    }
}

#[test]
fn budget_exhaustion_skips_with_reason() {
    let mut cfg = quick_mcm(5);
    cfg.budgets.max_points = 10;
    cfg.stages = vec![Stage::Schedule, Stage::Build, Stage::Smoothness, Stage::BaseLocus];
    let r = run_pipeline(&cfg).unwrap();
    let s = r.stage(Stage::Smoothness).unwrap();
    assert_eq!(s.verdict, Verdict::Skip);
    assert!(s.reason.as_deref().unwrap().contains("budget exceeded"));
    assert_eq!(r.stage(Stage::BaseLocus).unwrap().verdict, Verdict::Skip);
    assert!(r.pass);
}

#[test]
fn replay_reruns_one_unit() {
    let cfg = fermat(3, 2, 2, vec![3, 2], 7, 4);
    let w = make_witness(&cfg, Stage::Transition, Unit::Transition { family: None, vanishing: vec![], selection: vec![1], omit: 2, l1: 0, l2: 3 });
    let text = serde_json::to_string(&w).unwrap();
    let r = replay(&Witness::parse(&text).unwrap()).unwrap();
    assert_eq!(r.stages.len(), 1);
    assert_eq!(r.stages[0].summary["checks"], 1);
    assert!(r.pass);

    let mcm = quick_mcm(21);
    let w = make_witness(
        &mcm,
        Stage::Gluing,
        Unit::Gluing { family: Some(FormFamily::TauRho { tau: 1, rho: 3 }), vanishing: vec![], selection: vec![2], j1: 0, j2: 4 },
    );
    let r = replay(&w).unwrap();
    assert_eq!(r.stages[0].summary["checks"], 1);
    assert_eq!(r.stages[0].verdict, Verdict::Pass);
}

#[test]
fn failing_smoothness_witness_replays_to_the_same_failure() {
    let mut found = 0;
    for seed in 0..40 {
        let mut cfg = fermat(2, 1, 2, vec![4], 2, seed);
        cfg.scan.reseeds = 1;
        cfg.stages = vec![Stage::Schedule, Stage::Build, Stage::Smoothness];
        let r = run_pipeline(&cfg).unwrap();
        let s = r.stage(Stage::Smoothness).unwrap();
        if s.verdict != Verdict::Fail {
            continue;
        }
        found += 1;
        let w = &s.failures[0];
        let again = replay(&Witness::parse(&serde_json::to_string(w).unwrap()).unwrap()).unwrap();
        assert_eq!(again.stages[0].verdict, Verdict::Fail);
        assert_eq!(again.stages[0].summary, s.summary);
    }
    assert!(found > 0);
}

#[test]
fn stale_witness_is_rejected() {
    let w = make_witness(&RunConfig::default(), Stage::Schedule, Unit::Schedule);
    let mut v = serde_json::to_value(&w).unwrap();
    v["version"] = serde_json::json!(7);
    assert!(matches!(Witness::parse(&v.to_string()), Err(Error::WitnessVersion { .. })));
    let stale = Witness { version: 0, ..w };
    assert!(matches!(replay(&stale), Err(Error::WitnessVersion { .. })));
}
