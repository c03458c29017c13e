//! Census orchestration: enumeration, classification, resumable verdict stores
//! and reports.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{classify_timed, Context, Stage, StageConfig, Status, Verdict, VerdictStore, Witness};
use crate::enumeration::{load_or_enumerate_mdags, versioned_dir, write_atomic, FingerprintIndex};
use crate::error::{Error, Result};
use crate::graph::{CanonicalCode, MDag};
use crate::supports::CardSpec;

/// Per-graph time budget used when none is given.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Graphs classified between two journal flushes.
const CHUNK: usize = 64;

/// Everything a census run needs besides the node count.
#[derive(Clone, Debug)]
pub struct CensusConfig {
    pub stages: Vec<Stage>,
    /// Cardinality schedule; empty means all-binary.
    pub schedule: Vec<CardSpec>,
    /// Per-graph wall-time budget.
    pub timeout: Option<Duration>,
    /// Worker threads; `0` uses every core.
    pub jobs: usize,
    pub cache_dir: Option<PathBuf>,
    /// Sampler seed for targeted schedule entries.
    pub seed: u64,
    /// Random supports added to each targeted entry.
    pub samples: usize,
}

impl Default for CensusConfig {
    fn default() -> Self {
        CensusConfig {
            stages: Stage::ALL.to_vec(),
            schedule: Vec::new(),
            timeout: Some(DEFAULT_TIMEOUT),
            jobs: 0,
            cache_dir: None,
            seed: 0,
            samples: 0,
        }
    }
}

impl CensusConfig {
    /// Default schedule for `n` nodes: exhaustive binary, then the targeted
    /// ternary-first fixtures.
    pub fn default_schedule(n: usize) -> Vec<CardSpec> {
        let mut ternary = vec![2u8; n];
        if n > 0 {
            ternary[0] = 3;
        }
        vec![CardSpec::binary(n), CardSpec::auto(ternary)]
    }

    fn schedule_for(&self, n: usize) -> Vec<CardSpec> {
        if self.schedule.is_empty() {
            Self::default_schedule(n)
        } else {
            self.schedule.iter().filter(|s| s.cards.len() == n).cloned().collect()
        }
    }

    fn stage_config(&self, n: usize, deadline: Option<Instant>) -> StageConfig {
        StageConfig {
            stages: self.stages.clone(),
            schedule: self.schedule_for(n),
            deadline,
            samples: self.samples,
            seed: self.seed,
            parallel: false,
        }
    }

    /// Short digest of the settings that affect verdicts; names the store file.
    fn key(&self, n: usize) -> String {
        let stages: Vec<&str> = self.stages.iter().map(|s| s.name()).collect();
        let schedule: Vec<String> = self.schedule_for(n).iter().map(|s| s.to_string()).collect();
        let text = format!("{}|{}|{}|{}", stages.join(","), schedule.join(","), self.seed, self.samples);
        hex::encode(&Sha256::digest(text.as_bytes())[..6])
    }
}

/// Unresolved graphs remaining after a stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: Stage,
    pub remaining: usize,
}

/// Wall time spent in one stage over the whole census.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Outcome of a census over all mDAGs with `n` observed nodes.
///
/// Timings are kept out of the serialized forms and out of equality, so that
/// reports are byte-identical across runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CensusReport {
    pub n: usize,
    pub total: usize,
    pub survivors_after: Vec<StageCount>,
    /// Sorted by canonical code.
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl PartialEq for CensusReport {
    fn eq(&self, o: &Self) -> bool {
        (self.n, self.total, &self.survivors_after, &self.verdicts) == (o.n, o.total, &o.survivors_after, &o.verdicts)
    }
}

impl CensusReport {
    /// Builds the survivor counts from verdicts; the subgraph stage only counts from five nodes up.
    pub fn from_verdicts(n: usize, stages: &[Stage], mut verdicts: Vec<Verdict>) -> Self {
        verdicts.sort_by_key(|v| v.code);
        let mut remaining = verdicts.len();
        let survivors_after = stages
            .iter()
            .filter(|&&s| s != Stage::Subgraph || n >= 5)
            .map(|&stage| {
                remaining -= verdicts.iter().filter(|v| v.stage == Some(stage)).count();
                StageCount { stage, remaining }
            })
            .collect();
        CensusReport { n, total: verdicts.len(), survivors_after, verdicts, timings: Vec::new() }
    }

    /// Unresolved graphs after `stage`, if it ran.
    pub fn remaining_after(&self, stage: Stage) -> Option<usize> {
        self.survivors_after.iter().find(|c| c.stage == stage).map(|c| c.remaining)
    }

    /// Verdicts with the given status.
    pub fn with_status(&self, status: Status) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(move |v| v.status == status)
    }
}

/// Output encodings of [`emit_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Parse(format!("unknown format {s:?}"))),
        }
    }
}

/// Row label for the count remaining after `stage`.
pub fn row_label(stage: Stage) -> &'static str {
    match stage {
        Stage::Hlp => "remaining # for which the HLP criterion does not apply",
        Stage::Nonmaximal => "remaining # for which the nonmaximality condition does not apply",
        Stage::Setwise => "remaining # for which the setwise nonmaximality condition does not apply",
        Stage::Subgraph => "remaining # which do not contain a Non-Algebraic subgraph",
        Stage::Dsep => "remaining # for which the d-separation condition does not apply",
        Stage::Esep => "remaining # for which the e-separation condition does not apply",
        Stage::Supports => "remaining # not resolved by the supports test",
    }
}

/// Label of the first row.
pub const TOTAL_LABEL: &str = "Total Count";

/// Deterministic serialization of a report.
pub fn emit_report(r: &CensusReport, fmt: ReportFormat) -> Result<Vec<u8>> {
    let mut out = String::new();
    match fmt {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(r)?;
            out.push('\n');
        }
        ReportFormat::Csv => {
            out.push_str("row,count\n");
            writeln!(out, "total,{}", r.total).expect("string write");
            for c in &r.survivors_after {
                writeln!(out, "{},{}", c.stage, c.remaining).expect("string write");
            }
        }
        ReportFormat::Markdown => {
            writeln!(out, "| | {} observed nodes |", r.n).expect("string write");
            out.push_str("|---|---|\n");
            writeln!(out, "| {TOTAL_LABEL} | {} |", r.total).expect("string write");
            for c in &r.survivors_after {
                writeln!(out, "| {} | {} |", row_label(c.stage), c.remaining).expect("string write");
            }
        }
    }
    Ok(out.into_bytes())
}

/// Parses JSON produced by [`emit_report`].
pub fn read_report(bytes: &[u8]) -> Result<CensusReport> {
    Ok(serde_json::from_slice(bytes)?)
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    sha256: String,
}

/// State of a verdict store on disk.
#[derive(Debug)]
pub enum StoreState {
    /// Finished, hash verified; verdicts sorted by code.
    Complete(Vec<Verdict>),
    /// Journal of a run that did not finish.
    Partial(Vec<Verdict>),
}

/// Reads a verdict store: JSONL verdicts, then a `{"sha256": ...}` line once complete.
///
/// A torn final line of an unfinished journal is dropped; any other
/// malformed line, or a trailer whose hash does not match, is corruption.
pub fn read_store(path: &Path) -> Result<StoreState> {
    let text = fs::read_to_string(path)?;
    let corrupt = || Error::CacheCorruption { path: path.to_path_buf() };
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    if let Some(last) = lines.last() {
        if let Ok(t) = serde_json::from_str::<Trailer>(last.trim_end()) {
            let body = &text[..text.len() - last.len()];
            if hex::encode(Sha256::digest(body.as_bytes())) != t.sha256 {
                return Err(corrupt());
            }
            let verdicts = body.lines().map(serde_json::from_str).collect::<std::result::Result<Vec<Verdict>, _>>();
            return verdicts.map(StoreState::Complete).map_err(|_| corrupt());
        }
    }
    let mut verdicts = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<Verdict>(line.trim_end()) {
            Ok(v) => verdicts.push(v),
            Err(_) if i + 1 == lines.len() && !line.ends_with('\n') => {}
            Err(_) => return Err(corrupt()),
        }
    }
    Ok(StoreState::Partial(verdicts))
}

/// Writes a complete store: sorted verdicts plus hash trailer.
pub fn write_store(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    let mut body = String::new();
    for v in verdicts {
        body.push_str(&serde_json::to_string(v)?);
        body.push('\n');
    }
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    body.push_str(&serde_json::to_string(&Trailer { sha256: digest })?);
    body.push('\n');
    write_atomic(path, body.as_bytes())
}

/// Path of the verdict store for `n` nodes under `cfg`.
pub fn store_path(dir: &Path, n: usize, cfg: &CensusConfig) -> PathBuf {
    versioned_dir(dir).join(format!("verdicts-n{n}-{}.jsonl", cfg.key(n)))
}

/// Whether a stored verdict is final under `cfg`, needs its supports stage
/// continued from the recorded schedule position, or must be redone.
enum Reuse {
    Keep,
    Continue(Vec<CardSpec>),
    Redo,
}

fn reuse(v: &Verdict, cfg: &StageConfig) -> Reuse {
    match &v.witness {
        Witness::Unresolved { completed, schedule, note } => {
            if note.is_some() || *completed != cfg.stages {
                return Reuse::Redo;
            }
            if *schedule == cfg.schedule {
                Reuse::Keep
            } else if cfg.schedule.starts_with(schedule) {
                Reuse::Continue(cfg.schedule[schedule.len()..].to_vec())
            } else {
                Reuse::Redo
            }
        }
        _ if v.stage.is_some_and(|s| cfg.stages.contains(&s)) => Reuse::Keep,
        _ => Reuse::Redo,
    }
}

type Timed = (Verdict, Vec<(Stage, Duration)>);

fn classify_one(m: &MDag, prior: Option<&Verdict>, cfg: &CensusConfig, ctx: &Context<'_>) -> Result<Timed> {
    let n = m.n_observed();
    let deadline = cfg.timeout.map(|t| Instant::now() + t);
    let stage_cfg = cfg.stage_config(n, deadline);
    match prior.map(|v| (v, reuse(v, &stage_cfg))) {
        Some((v, Reuse::Keep)) => Ok((v.clone(), Vec::new())),
        Some((_, Reuse::Continue(rest))) => {
            let tail = StageConfig { stages: vec![Stage::Supports], schedule: rest, ..stage_cfg.clone() };
            let (mut v, t) = classify_timed(m, &tail, ctx)?;
            if let Witness::Unresolved { completed, schedule, .. } = &mut v.witness {
                *completed = stage_cfg.stages.clone();
                *schedule = stage_cfg.schedule.clone();
            }
            Ok((v, t))
        }
        _ => classify_timed(m, &stage_cfg, ctx),
    }
}

fn lower_store(n: usize, cfg: &CensusConfig) -> Result<Option<VerdictStore>> {
    if n < 5 || !cfg.stages.contains(&Stage::Subgraph) {
        return Ok(None);
    }
    let mut store = VerdictStore::new();
    for k in 3..n {
        store.insert_size(k, run_census(k, cfg)?.verdicts);
    }
    Ok(Some(store))
}

/// Enumerates and classifies every mDAG on `n` observed nodes.
///
/// With a cache directory, verdicts are journaled as they are produced and a
/// rerun resumes from the journal; a finished store is reused as is.
pub fn run_census(n: usize, cfg: &CensusConfig) -> Result<CensusReport> {
    if !(1..=5).contains(&n) {
        return Err(Error::Range { what: "census node count", value: n, range: "1..=5" });
    }
    let cache = cfg.cache_dir.as_deref();
    let path = cache.map(|d| store_path(d, n, cfg));
    let mut prior: std::collections::HashMap<CanonicalCode, Verdict> = Default::default();
    if let Some(p) = path.as_deref().filter(|p| p.exists()) {
        match read_store(p)? {
            StoreState::Complete(vs) | StoreState::Partial(vs) => prior.extend(vs.into_iter().map(|v| (v.code, v))),
        }
        info!("loaded {} stored verdicts from {}", prior.len(), p.display());
    }
    let mdags = load_or_enumerate_mdags(n, cache)?;
    let index = FingerprintIndex::load_or_build(n, cache)?;
    let lower = lower_store(n, cfg)?;
    let ctx = Context { index: &index, lower: lower.as_ref() };
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build().map_err(|e| Error::Parse(e.to_string()))?;

    let mut journal = match path.as_deref() {
        Some(p) => {
            let fresh: Vec<&Verdict> =
                mdags.iter().filter_map(|m| prior.get(&crate::graph::canonical_form(m))).collect();
            let mut body = String::new();
            for v in fresh {
                body.push_str(&serde_json::to_string(v)?);
                body.push('\n');
            }
            write_atomic(p, body.as_bytes())?;
            Some(OpenOptions::new().append(true).open(p)?)
        }
        None => None,
    };

    let mut verdicts = Vec::with_capacity(mdags.len());
    let mut totals: Vec<(Stage, Duration)> = cfg.stages.iter().map(|&s| (s, Duration::ZERO)).collect();
    let start = Instant::now();
    for chunk in mdags.chunks(CHUNK) {
        let results: Vec<Result<Timed>> = pool.install(|| {
            chunk.par_iter().map(|m| classify_one(m, prior.get(&crate::graph::canonical_form(m)), cfg, &ctx)).collect()
        });
        let mut lines = String::new();
        for (m, r) in chunk.iter().zip(results) {
            let (v, t) = r?;
            for (stage, d) in t {
                if let Some(slot) = totals.iter_mut().find(|(s, _)| *s == stage) {
                    slot.1 += d;
                }
            }
            if let Some(old) = prior.get(&v.code) {
                if *old == v {
                    verdicts.push(v);
                    continue;
                }
            }
            if v.status == Status::Unresolved {
                warn!("{} unresolved", v.code);
            }
            debug_assert_eq!(v.code, crate::graph::canonical_form(m));
            lines.push_str(&serde_json::to_string(&v)?);
            lines.push('\n');
            verdicts.push(v);
        }
        if let Some(j) = journal.as_mut() {
            j.write_all(lines.as_bytes())?;
            j.flush()?;
        }
        info!("n={n}: {}/{} classified ({:.1?})", verdicts.len(), mdags.len(), start.elapsed());
    }
    drop(journal);
    let mut report = CensusReport::from_verdicts(n, &cfg.stages, verdicts);
    if let Some(p) = path.as_deref() {
        write_store(p, &report.verdicts)?;
    }
    report.timings = totals.into_iter().map(|(stage, d)| StageTiming { stage, seconds: d.as_secs_f64() }).collect();
    Ok(report)
}

/// Re-verifies every verdict of a store; returns the codes that fail.
pub fn verify_store(verdicts: &[Verdict]) -> Vec<CanonicalCode> {
    verdicts
        .par_iter()
        .filter(|v| !v.code.decode().is_ok_and(|m| crate::classify::verify_witness(&m, v)))
        .map(|v| v.code)
        .collect()
}
