use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use indefinite_cli::config::{BValue, Profiles, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_indefinite"))
}

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

fn run(args: &[&str], out: &Path) -> Output {
    let o = bin()
        .arg("--config")
        .arg(reference_config())
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs");
    if !o.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&o.stderr));
    }
    o
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest_without_timings(dir: &Path) -> serde_json::Value {
    let mut m = json(&dir.join("manifest.json"));
    m.as_object_mut().unwrap().remove("timings");
    m
}

#[test]
fn config_round_trip() {
    let text = std::fs::read_to_string(reference_config()).unwrap();
    let cfg = RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, RunConfig::default());
    let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(again, cfg);

    let mut other = cfg.clone();
    other.params.b = BValue::Star(1.75);
    other.params.nu = 1.05;
    other.grids.b_range = [0.9, 1.1];
    other.outputs.profiles = Profiles::None;
    assert_eq!(RunConfig::from_toml(&other.to_toml()).unwrap(), other);
    other.params.b = BValue::Absolute(31000.5);
    assert_eq!(RunConfig::from_toml(&other.to_toml()).unwrap(), other);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[params]\nlambda = -1.0\nunknown = 3\n", "unknown"),
        ("[grid]\nn_b = 5\n", "unknown"),
        ("[params]\nlambda = 1.0\n", "lambda"),
        ("[params]\nalpha = 0.6\n", "alpha"),
        ("[params]\nM = inf\n", "M"),
        ("[params]\nb = \"twice bstar\"\n", "bstar"),
        ("[grids]\nb_range = [2.0, 1.0]\n", "b_range"),
    ];
    for (k, (text, needle)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{k}.toml"));
        std::fs::write(&path, text).unwrap();
        let o = bin().arg("--config").arg(&path).arg("config").output().unwrap();
        assert_eq!(o.status.code(), Some(2), "case {k}: {text}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("config error"), "case {k}: {err}");
        assert!(err.contains(needle), "case {k}: {err}");
    }
    let o = bin().args(["--b", "-3", "config"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["--config", "/nonexistent/x.toml", "config"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // far below b* the closed orbits leave the default curve range
    let o = run(&["--b", "0.05*bstar", "solve"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("numerical failure") || err.contains("domain error"), "{err}");
}

#[test]
fn solve_at_b_star_finds_at_least_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--b", "bstar", "--nu", "1", "solve"], dir.path());
    assert!(o.status.success());
    let sols = json(&dir.path().join("solutions.json"));
    let sols = sols.as_array().unwrap();
    assert!(sols.len() >= 4, "{} solutions", sols.len());
    for s in sols {
        for key in ["x_alpha", "x_1ma", "j", "slope0", "residual", "profile"] {
            assert!(s.get(key).is_some(), "missing {key}");
        }
        assert!(s["residual"].as_f64().unwrap() < 1e-5);
        let profile = s["profile"].as_array().unwrap();
        assert_eq!(profile.len(), 101);
        assert!(profile.iter().all(|r| r[1].as_f64().unwrap() > 0.0));
    }

    let m = json(&dir.path().join("manifest.json"));
    let d = &m["derived"];
    let (m0, b_star, omega) = (
        d["m0"].as_f64().unwrap(),
        d["b_star"].as_f64().unwrap(),
        d["center_at_b_star"].as_f64().unwrap(),
    );
    assert!((omega - m0).abs() <= 1e-12 * m0);
    assert!(b_star > 0.0);
    assert_eq!(d["lambda_thresholds"].as_array().unwrap().len(), 4);
    assert_eq!(m["artifacts"][0]["file"], "solutions.json");
}

#[test]
fn profiles_flag_controls_samples() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["--profiles", "none", "solve"], dir.path()).status.success());
    let sols = json(&dir.path().join("solutions.json"));
    assert!(sols.as_array().unwrap().iter().all(|s| s["profile"].as_array().unwrap().is_empty()));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cmd in ["gamma", "timemap", "solve", "phase"] {
        assert!(run(&[cmd], a.path()).status.success());
        assert!(run(&["--threads", "1", cmd], b.path()).status.success());
        let m = manifest_without_timings(a.path());
        assert_eq!(m, manifest_without_timings(b.path()), "{cmd}");
        for art in m["artifacts"].as_array().unwrap() {
            let f = art["file"].as_str().unwrap();
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert!(x == y, "{cmd}: {f} differs");
        }
    }
}

#[test]
fn manifest_hash_tracks_the_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["gamma"], a.path()).status.success());
    assert!(run(&["--nu", "1.05", "gamma"], b.path()).status.success());
    let (ma, mb) = (json(&a.path().join("manifest.json")), json(&b.path().join("manifest.json")));
    assert_ne!(ma["config_sha256"], mb["config_sha256"]);
    // Γ₀ does not depend on ν, Γ₁ does
    assert_eq!(ma["artifacts"][0]["sha256"], mb["artifacts"][0]["sha256"]);
    assert_ne!(ma["artifacts"][1]["sha256"], mb["artifacts"][1]["sha256"]);
}

#[test]
fn csv_headers_are_fixed() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gamma", "timemap", "phase"] {
        assert!(run(&[cmd], dir.path()).status.success());
    }
    let first = |f: &str| {
        std::fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(first("gamma0.csv"), "x,y,slope0");
    assert_eq!(first("gamma1.csv"), "x,y,slope0");
    assert_eq!(first("timemap.csv"), "x,j,kind,value,E");
    assert_eq!(first("phase.csv"), "kind,E,u,v");
}

#[test]
fn bifpoint_report_has_the_plus_point() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["bifpoint"], dir.path()).status.success());
    let r = json(&dir.path().join("report.json"));
    let b_star = r["b_star"].as_f64().unwrap();
    let plus = r["points"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["sign"] == "+")
        .expect("b_b^(1,+) exists");
    let b = plus["b"].as_f64().unwrap();
    assert!(b > b_star && b < r["b_h"]["effective"].as_f64().unwrap());
    assert_eq!(r["classification"]["kind"], "transcritical-nondegenerate-pitchfork");
}

#[test]
fn verify_passes_on_the_reference_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify"], dir.path());
    let table = String::from_utf8_lossy(&o.stdout);
    println!("{table}");
    assert!(o.status.success());
    assert_eq!(table.lines().filter(|l| l.starts_with("[PASS]")).count(), 10);
}

#[test]
fn diagram_over_a_fold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("narrow.toml");
    std::fs::write(&cfg, "[grids]\nb_range = [0.5, 0.6]\nn_b = 9\n").unwrap();
    let o = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .arg("diagram")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("diagram.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("b,u_alpha,j,branch_id,component_id"));
    let r = json(&dir.path().join("report.json"));
    let b_star = r["b_star"].as_f64().unwrap();
    let tps = r["turning_points"].as_array().unwrap();
    assert_eq!(tps.len(), 1);
    assert_eq!(tps[0]["kind"], "supercritical");
    let at = tps[0]["b"].as_f64().unwrap() / b_star;
    assert!(at > 0.52 && at < 0.54, "fold at {at} b*");
}
