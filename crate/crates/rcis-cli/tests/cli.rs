use std::path::Path;
use std::process::{Command, Output};

use rcis::bundle::Bundle;
use rcis::harness::{build_scenario_1, Scenario};
use rcis::planner::{Side, Waypoint};

fn rcis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcis")).args(args).output().expect("spawn rcis")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn short() -> Scenario {
    let mut scn = build_scenario_1();
    scn.name = "short".into();
    scn.duration = 2.0;
    scn.ego.x0 = [0.0, 0.0, 0.0, 0.0, -2.0, 40.0];
    scn.waypoints.initial = vec![Waypoint::at(-2.0, 40.0, vec![]), Waypoint::at(-2.0, 50.0, vec![Side::Ahead])];
    scn
}

fn write_scenario(dir: &Path, name: &str, scn: &Scenario) -> String {
    let p = dir.join(name);
    std::fs::write(&p, scn.to_toml().unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn synthesize_verify_run_and_failure_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scn = write_scenario(d, "short.toml", &short());
    let bundle = d.join("b.json");
    let bundle_s = bundle.to_str().unwrap();

    let o = rcis(&["synthesize", "--scenario", &scn, "--out", bundle_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("shrink factors"));

    let o = rcis(&["verify", "--bundle", bundle_s, "--samples", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&rcis(&["verify", "--bundle", bundle_s, "--samples", "0"])), 64);

    let out1 = d.join("run1");
    let out2 = d.join("run2");
    for out in [&out1, &out2] {
        let o = rcis(&["run", "--scenario", &scn, "--bundle", bundle_s, "--out", out.to_str().unwrap(), "--seed", "5", "--noise"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let t1 = std::fs::read(out1.join("trace.csv")).unwrap();
    assert_eq!(t1, std::fs::read(out2.join("trace.csv")).unwrap());
    for f in ["timing.csv", "summary.json", "x5.svg", "x6.svg", "u.svg", "i.svg", "plane.svg"] {
        assert!(out1.join(f).exists(), "{f}");
    }
    let o = rcis(&["run", "--scenario", &scn, "--bundle", bundle_s, "--out", d.join("np").to_str().unwrap(), "--no-plots"]);
    assert_eq!(code(&o), 0);
    assert!(!d.join("np/x5.svg").exists());

    let mut other = short();
    other.disturbance.longitudinal = 1.4;
    let other = write_scenario(d, "other.toml", &other);
    assert_eq!(code(&rcis(&["run", "--scenario", &other, "--bundle", bundle_s, "--out", d.join("x").to_str().unwrap()])), 65);

    let mut b = Bundle::load(&bundle).unwrap();
    let f = b.path.families.last_mut().unwrap();
    let k = f.chain.len() - 1;
    f.chain[k] = f.chain[k].scaled(4.0).unwrap();
    let bad = d.join("bad.json");
    b.save(&bad).unwrap();
    assert_eq!(code(&rcis(&["verify", "--bundle", bad.to_str().unwrap(), "--samples", "50"])), 4);
}

#[test]
fn infeasible_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short();
    s.disturbance.lateral = 0.5;
    let scn = write_scenario(dir.path(), "blocked.toml", &s);
    let o = rcis(&["synthesize", "--scenario", &scn, "--out", dir.path().join("b.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nduration = [").unwrap();
    let out = dir.path().join("o.json");
    assert_eq!(code(&rcis(&["synthesize", "--scenario", bad.to_str().unwrap(), "--out", out.to_str().unwrap()])), 64);
    assert_eq!(code(&rcis(&["synthesize", "--scenario", "/nonexistent.toml", "--out", out.to_str().unwrap()])), 64);
    assert_eq!(code(&rcis(&["frobnicate"])), 64);
    assert_eq!(code(&rcis(&["verify"])), 64);
    assert_eq!(code(&rcis(&["scenario", "3", "--out", out.to_str().unwrap()])), 64);
}

#[test]
fn exported_scenario_loads() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s2.toml");
    assert_eq!(code(&rcis(&["scenario", "2", "--out", p.to_str().unwrap()])), 0);
    assert_eq!(Scenario::load(&p).unwrap(), rcis::harness::build_scenario_2());
}
