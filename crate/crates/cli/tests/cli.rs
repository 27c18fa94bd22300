use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcm")).args(args).output().expect("spawn mcm")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mcm-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn schedule_report() {
    let dir = scratch("schedule");
    let out = dir.join("s.json");
    let o = mcm(&["schedule", "--N", "4", "--c", "3", "--r", "0", "--heart", "2", "--json", s(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("d = 64845"));
    let v = read_json(&out);
    for key in ["shape", "delta", "mu", "d", "ledger", "bounds"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["d"], "64845");
    assert_eq!(v["first_level"], 4);
    assert_eq!(v["mu"][0][4], "12969");
    assert_eq!(v["ledger"]["all_negative"], true);
}

#[test]
fn build_verify_scan() {
    let dir = scratch("family");
    let fq = dir.join("fq.json");
    let f5 = dir.join("f5.json");
    assert!(mcm(&["build", "--N", "3", "--c", "2", "--mode", "fermat", "--lambda", "2,2,2,2", "--degrees", "3,2", "--seed", "9", "--out", s(&fq)])
        .status
        .success());
    assert!(mcm(&["build", "--N", "3", "--c", "2", "--mode", "fermat", "--lambda", "2,2,2,2", "--degrees", "3,2", "--p", "7", "--seed", "9", "--out", s(&f5)])
        .status
        .success());

    let rep = dir.join("v.json");
    let o = mcm(&["verify", "forms", "--family", s(&fq), "--json", s(&rep)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&rep);
    let checks = v["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        assert_eq!(c["verdict"], "pass");
        for key in ["id", "mode", "trials", "verdict", "witness"] {
            assert!(c.get(key).is_some(), "{key}");
        }
    }
    assert!(mcm(&["verify", "transition", "--family", s(&fq)]).status.success());
    assert!(mcm(&["verify", "cramer", "--rows", "4"]).status.success());
    assert!(mcm(&["verify", "surjectivity", "--family", s(&fq), "--d", "3"]).status.success());

    assert!(mcm(&["scan", "smooth", "--family", s(&f5), "--q", "7"]).status.code().is_some());
    let bl = dir.join("bl.json");
    let o = mcm(&["scan", "base-locus", "--family", s(&f5), "--q", "7", "--json", s(&bl)]);
    assert!(o.status.code() != Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read_json(&bl).is_array());
    // Field mismatch is a usage error.
    assert_eq!(mcm(&["scan", "smooth", "--family", s(&f5), "--q", "5"]).status.code(), Some(2));
}

#[test]
fn census_fields() {
    let dir = scratch("census");
    let out = dir.join("c.json");
    assert!(mcm(&["scan", "census", "--a", "2", "--b", "2", "--q", "2", "--json", s(&out)]).status.success());
    let v = read_json(&out);
    for key in ["a", "b", "q", "ambient_dim", "count", "implied_codim", "bound", "verdict"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["ambient_dim"], 12);
    assert_eq!(v["verdict"], true);
}

#[test]
fn coup_commands() {
    let o = mcm(&["coup", "split", "--d", "100", "--s", "7"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("100 = 12*7 + 2*8"));
    // 1 has no split for s = 2.
    assert_eq!(mcm(&["coup", "split", "--d", "1", "--s", "2"]).status.code(), Some(2));
    assert!(mcm(&["coup", "bound", "--N", "4", "--horizon", "500"]).status.success());
    let o = mcm(&["coup", "decompose", "--N", "2", "--c", "1", "--p", "3", "--factors", "z0+z1,z1+2*z2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

const CONFIG: &str = r#"schema = "mcm-run/1"
seed = 4
field = { kind = "prime", p = 7 }
family = { mode = "general_fermat", lambda = [2, 2, 2, 2], degrees = [3, 2] }

[shape]
N = 3
c = 2
r = 0

[census]
shapes = [{ a = 2, b = 2, q = 2 }]
agreement_samples = 2000
"#;

#[test]
fn run_is_deterministic_and_replayable() {
    let dir = scratch("run");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let (a, b) = (dir.join("a.json"), dir.join("b.json"));
    let o = mcm(&["run", "--config", s(&cfg), "--json", s(&a)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(mcm(&["run", "--config", s(&cfg), "--json", s(&b)]).status.success());
    let (mut va, mut vb) = (read_json(&a), read_json(&b));
    assert!(va.get("timings_ms").is_some());
    va.as_object_mut().unwrap().remove("timings_ms");
    vb.as_object_mut().unwrap().remove("timings_ms");
    assert_eq!(va, vb);
    assert_eq!(va["schema"], "mcm-report/1");

    let w = serde_json::json!({
        "version": 1,
        "config": va["config"],
        "stage": "gluing",
        "unit": { "kind": "gluing", "family": null, "vanishing": [], "selection": [0], "j1": 1, "j2": 3 },
    });
    let wp = dir.join("w.json");
    std::fs::write(&wp, w.to_string()).unwrap();
    let out = dir.join("replay.json");
    assert!(mcm(&["replay", "--witness", s(&wp), "--json", s(&out)]).status.success());
    let r = read_json(&out);
    assert_eq!(r["stages"].as_array().unwrap().len(), 1);
    assert_eq!(r["stages"][0]["summary"]["checks"], 1);

    let mut stale = w.clone();
    stale["version"] = 0.into();
    std::fs::write(&wp, stale.to_string()).unwrap();
    let o = mcm(&["replay", "--witness", s(&wp)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
}

#[test]
fn failing_stage_sets_exit_code() {
    let dir = scratch("fail");
    let cfg = dir.join("run.toml");
    // twist 2 is not below the heart 2, so the build stage fails.
    std::fs::write(&cfg, "seed = 1\nstages = [\"schedule\", \"build\", \"census\"]\ntwists = [2, 0, 0]\nfield = { kind = \"prime\", p = 5 }\n[shape]\nN = 4\nc = 3\nr = 0\n[census]\nshapes = [{ a = 2, b = 2, q = 2 }]\nagreement_samples = 100\n").unwrap();
    let o = mcm(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("build         FAIL"));
    assert!(text.contains("census        PASS"));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = scratch("badcfg");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "seed = 1\nstages = [\"gluing\"]\nfield = { kind = \"prime\", p = 5 }\n[shape]\nN = 4\nc = 3\nr = 0\n").unwrap();
    assert_eq!(mcm(&["run", "--config", s(&cfg)]).status.code(), Some(2));
}
