use std::fs;

use mdag_core::classify::{Stage, Status};
use mdag_core::error::Error;
use mdag_core::pipeline::*;

fn cfg(dir: Option<&std::path::Path>) -> CensusConfig {
    CensusConfig { cache_dir: dir.map(|d| d.to_path_buf()), jobs: 1, ..Default::default() }
}

#[test]
fn single_node_census_is_all_algebraic() {
    let r = run_census(1, &cfg(None)).unwrap();
    assert_eq!(r.total, 1);
    assert_eq!(r.with_status(Status::Algebraic).count(), 1);
}

#[test]
fn three_node_census_counts() {
    let r = run_census(3, &cfg(None)).unwrap();
    assert_eq!(r.total, 46);
    assert_eq!(r.remaining_after(Stage::Hlp), Some(5));
    assert_eq!(r.remaining_after(Stage::Nonmaximal), Some(1));
    assert_eq!(r.remaining_after(Stage::Setwise), Some(0));
    assert_eq!(r.remaining_after(Stage::Subgraph), None);
    assert_eq!(r.verdicts.len(), r.total);
    let counts: Vec<usize> = r.survivors_after.iter().map(|c| c.remaining).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    assert!(verify_store(&r.verdicts).is_empty());
}

#[test]
fn markdown_report_uses_table_labels() {
    let r = run_census(3, &cfg(None)).unwrap();
    let md = String::from_utf8(emit_report(&r, ReportFormat::Markdown).unwrap()).unwrap();
    assert!(md.contains("| Total Count | 46 |"));
    assert!(md.contains("| remaining # for which the HLP criterion does not apply | 5 |"));
    let csv = String::from_utf8(emit_report(&r, ReportFormat::Csv).unwrap()).unwrap();
    assert!(csv.starts_with("row,count\ntotal,46\nhlp,5\n"));
}

#[test]
fn empty_stage_list_reports_total_only() {
    let c = CensusConfig { stages: Vec::new(), ..cfg(None) };
    let r = run_census(3, &c).unwrap();
    assert_eq!(r.total, 46);
    assert!(r.survivors_after.is_empty());
    assert_eq!(r.with_status(Status::Unresolved).count(), 46);
    let md = String::from_utf8(emit_report(&r, ReportFormat::Markdown).unwrap()).unwrap();
    assert_eq!(md.lines().count(), 3);
}

#[test]
fn json_report_round_trips() {
    let r = run_census(3, &cfg(None)).unwrap();
    let bytes = emit_report(&r, ReportFormat::Json).unwrap();
    assert_eq!(read_report(&bytes).unwrap(), r);
    assert_eq!(emit_report(&read_report(&bytes).unwrap(), ReportFormat::Json).unwrap(), bytes);
}

#[test]
fn report_bytes_do_not_depend_on_worker_count() {
    let one = run_census(3, &cfg(None)).unwrap();
    let four = run_census(3, &CensusConfig { jobs: 4, ..cfg(None) }).unwrap();
    for f in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        assert_eq!(emit_report(&one, f).unwrap(), emit_report(&four, f).unwrap());
    }
}

#[test]
fn interrupted_census_resumes_to_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(Some(dir.path()));
    let full = run_census(3, &c).unwrap();
    let path = store_path(dir.path(), 3, &c);
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 47);
    let mut torn = lines[..20].join("\n");
    torn.push('\n');
    torn.push_str(&lines[20][..lines[20].len() / 2]);
    fs::write(&path, torn).unwrap();
    assert!(matches!(read_store(&path).unwrap(), StoreState::Partial(v) if v.len() == 20));
    let resumed = run_census(3, &c).unwrap();
    assert_eq!(emit_report(&resumed, ReportFormat::Json).unwrap(), emit_report(&full, ReportFormat::Json).unwrap());
    assert_eq!(fs::read_to_string(&path).unwrap(), text);
    let again = run_census(3, &c).unwrap();
    assert_eq!(again, full);
}

#[test]
fn tampered_store_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(Some(dir.path()));
    run_census(3, &c).unwrap();
    let path = store_path(dir.path(), 3, &c);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("\"NonAlgebraic\"", "\"Algebraic\"", 1)).unwrap();
    assert!(matches!(read_store(&path), Err(Error::CacheCorruption { .. })));
    assert!(matches!(run_census(3, &c), Err(Error::CacheCorruption { .. })));
}

#[test]
fn altered_witness_fails_verification() {
    let r = run_census(3, &cfg(None)).unwrap();
    let mut verdicts = r.verdicts.clone();
    let i = verdicts.iter().position(|v| v.stage == Some(Stage::Nonmaximal)).unwrap();
    let mut text = serde_json::to_string(&verdicts[i]).unwrap();
    text = text.replace("\"type\":\"NonmaximalPair\",\"a\":1", "\"type\":\"NonmaximalPair\",\"a\":2");
    text = text.replace("\"type\":\"NonmaximalPair\",\"a\":0", "\"type\":\"NonmaximalPair\",\"a\":1");
    verdicts[i] = serde_json::from_str(&text).unwrap();
    assert_eq!(verify_store(&verdicts), vec![verdicts[i].code]);
}

#[test]
fn out_of_range_sizes_are_rejected() {
    assert!(matches!(run_census(0, &cfg(None)), Err(Error::Range { .. })));
    assert!(matches!(run_census(6, &cfg(None)), Err(Error::Range { .. })));
}
