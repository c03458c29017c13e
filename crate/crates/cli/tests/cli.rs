use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mdag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdag")).args(args).env_remove("MDAG_CACHE_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const BELL: &str = r#"{"n":4,"edges":[[0,2],[1,3]],"facets":[[2,3]]}"#;
const PR_BOX: &str =
    r#"{"cards":[2,2,2,2],"events":[[0,0,0,0],[0,0,1,1],[0,1,0,0],[0,1,1,1],[1,0,0,0],[1,0,1,1],[1,1,1,0],[1,1,0,1]]}"#;

#[test]
fn census_prints_table() {
    let o = mdag(&["census", "--nodes", "3", "--format", "markdown", "--jobs", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("| Total Count | 46 |"));
    assert!(text.contains("| remaining # for which the HLP criterion does not apply | 5 |"));
}

#[test]
fn census_csv_with_cache_dir_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().to_str().unwrap();
    let o = mdag(&["census", "--nodes", "3", "--format", "csv", "--cache-dir", cache]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("row,count\ntotal,46\n"));
    let store = fs::read_dir(dir.path().join("v1"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("verdicts-n3"))
        .unwrap();
    let o = mdag(&["verify", "--store", store.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("0 failed verification"));

    let text = fs::read_to_string(&store).unwrap();
    fs::write(&store, text.replacen("\"NonAlgebraic\"", "\"Algebraic\"", 1)).unwrap();
    assert_eq!(mdag(&["verify", "--store", store.to_str().unwrap()]).status.code(), Some(1));
    let o = mdag(&["census", "--nodes", "3", "--cache-dir", cache]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(mdag(&["census"]).status.code(), Some(2));
    assert_eq!(mdag(&["census", "--nodes", "3", "--stages", "bogus"]).status.code(), Some(2));
    assert_eq!(mdag(&["census", "--nodes", "9"]).status.code(), Some(2));
    assert_eq!(mdag(&["census", "--nodes", "3", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(mdag(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mdag(&["classify-one", "--graph", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn classify_one_resolves_four_node_example_by_supports() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.json", r#"{"n":4,"edges":[[1,2],[0,3],[2,3]],"facets":[[1,3],[0,1],[0,2]]}"#);
    let o = mdag(&["classify-one", "--graph", &g, "--schedule", "2222"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "NonAlgebraic");
    assert_eq!(v["stage"], "supports");
    assert_eq!(v["witness"]["type"], "SupportWitness");
}

#[test]
fn classify_one_accepts_explicit_latents() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.json", r#"{"n_obs":3,"n_lat":1,"edges":[[0,1],[1,2],[3,1],[3,2]]}"#);
    let o = mdag(&["classify-one", "--graph", &g, "--stages", "hlp,nonmaximal,setwise"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "NonAlgebraic");
    assert_eq!(v["stage"], "nonmaximal");
    let o = mdag(&["classify-one", "--graph", &g, "--stages", "hlp"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "Unresolved");
}

#[test]
fn check_support_reports_incompatibility() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "bell.json", BELL);
    let s = write(dir.path(), "pr.json", PR_BOX);
    let o = mdag(&["check-support", "--graph", &g, "--support", &s]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("Incompatible\n"));
    let o = mdag(&["check-support", "--graph", &g, "--support", &s, "--engine", "backtrack", "--bound", "8"]);
    assert!(stdout(&o).starts_with("Incompatible\n"));
    let full = write(dir.path(), "full.json", r#"{"cards":[2,2,2,2],"events":[[0,0,0,0],[1,1,1,1]]}"#);
    let o = mdag(&["check-support", "--graph", &g, "--support", &full]);
    assert!(stdout(&o).starts_with("Incompatible (trivially)\n"));
    let ok = write(dir.path(), "ok.json", r#"{"cards":[2,2,2,2],"events":[[0,0,0,0],[0,0,1,1]]}"#);
    assert!(stdout(&mdag(&["check-support", "--graph", &g, "--support", &ok])).starts_with("Compatible\n"));
    let o = mdag(&["check-support", "--graph", &g, "--support", &s, "--engine", "magic"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn patterns_dump_and_validate() {
    let o = mdag(&["patterns"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 18);
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "p.jsonl", &text);
    let o = mdag(&["patterns", "--check", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("18 patterns valid"));
    let bad = write(dir.path(), "bad.jsonl", &text.lines().skip(1).collect::<Vec<_>>().join("\n"));
    assert_eq!(mdag(&["patterns", "--check", &bad]).status.code(), Some(1));
}

#[test]
fn enumerate_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdag(&["enumerate", "--nodes", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("mdags-n3.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 46);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["n"], 3);
    }
}
