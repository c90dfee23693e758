use std::path::PathBuf;
use std::process::{Command, Output};

fn expmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expmix")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config_path(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    p.to_string_lossy().into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("expmix-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn constants_for_wmap_pass() {
    let o = expmix(&["constants", "wmap"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("PASS c_eps0"));
    assert!(out.contains("PASS n_delta"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn unknown_map_is_an_input_error() {
    let o = expmix(&["constants", "no-such-map"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn unknown_hypothesis_is_an_input_error() {
    let o = expmix(&["check", "doubling", "--hypothesis", "h9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(expmix(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(expmix(&["mix", "wmap", "--steps", "many"]).status.code(), Some(2));
}

#[test]
fn config_file_runs_like_a_fixture() {
    let o = expmix(&["constants", &config_path("doubling.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let from_config: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("eps0 ")).map(String::from).collect();
    let fixture = stdout(&expmix(&["constants", "doubling"]));
    assert_eq!(from_config.len(), 1);
    assert!(fixture.lines().any(|l| l == from_config[0]));
}

#[test]
fn overlapping_branches_report_the_pointer() {
    let text = std::fs::read_to_string(config_path("doubling.json")).unwrap();
    let bad = text.replacen(r#"["1/2", 1]"#, r#"["0.4", 1]"#, 1);
    assert_ne!(bad, text);
    let path = scratch("overlap.json");
    std::fs::write(&path, bad).unwrap();
    let o = expmix(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("/branches/1/domain"), "{err}");
    assert!(err.contains("overlaps"), "{err}");
}

#[test]
fn couple_writes_the_series() {
    let csv = scratch("couple.csv");
    let o = expmix(&["couple", "doubling", "--rounds", "3", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("round,uncoupled,l1,bound"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() > 3);
    assert!(rows[0].starts_with("0,"));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["bound_violations"], 0);
}

#[test]
fn mix_decreases() {
    let o = expmix(&["mix", "doubling", "--steps", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let s: Vec<f64> = v["series"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(s.len(), 7);
    assert!(s.last().unwrap() < &s[0]);
}

#[test]
fn second_skew_scheme_is_aperiodic() {
    let o = expmix(&["induce", "skew2d", "--scheme", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["gcd"], 1);
    assert!(v["cells"].as_array().unwrap().iter().all(|c| c["positive"] == true));
}

#[test]
fn json_goes_to_the_requested_file() {
    let path = scratch("check.json");
    let o = expmix(&["check", "wmap", "--hypothesis", "h1", "--json", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v.get("lambda").is_some());
}

#[test]
fn reports_are_byte_stable() {
    let a = expmix(&["report", "wmap", "--seed", "11"]);
    let b = expmix(&["report", "wmap", "--seed", "11"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}
