//! Enumeration of mDAGs and latent-free DAGs, the latent-free fingerprint
//! index, and the four-node pattern test.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{all_permutations, canonical_bits, canonical_form, CanonicalCode, Dag, MDag, NodeSet};
use crate::separation::{dsep_fingerprint, is_maximal, AsDag, Fingerprint, Maximality, SepRelation};

/// On-disk format version of cache files.
pub const CACHE_FORMAT_VERSION: u32 = 1;

fn check_range(n: usize, max: usize, range: &'static str) -> Result<()> {
    if n == 0 || n > max {
        return Err(Error::Range { what: "n", value: n, range });
    }
    Ok(())
}

/// Parent masks of every labeled acyclic digraph on `n` nodes, sorted by edge bits.
fn labeled_dag_parents(n: usize) -> Vec<Vec<NodeSet>> {
    let perms = all_permutations(n);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut out: Vec<(u64, Vec<NodeSet>)> = perms
        .par_iter()
        .flat_map_iter(|order| {
            let pairs = &pairs;
            (0u64..1 << pairs.len()).filter_map(move |mask| {
                let mut parents = vec![NodeSet::EMPTY; n];
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        parents[order[j]] = parents[order[j]].with(order[i]);
                    }
                }
                (min_topological_order(&parents) == *order).then(|| {
                    let bits =
                        (0..n).flat_map(|v| parents[v].iter().map(move |u| u * n + v)).fold(0u64, |b, e| b | 1 << e);
                    (bits, parents)
                })
            })
        })
        .collect();
    out.sort_unstable_by_key(|(b, _)| *b);
    out.into_iter().map(|(_, p)| p).collect()
}

fn min_topological_order(parents: &[NodeSet]) -> Vec<usize> {
    let n = parents.len();
    let mut placed = NodeSet::EMPTY;
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let v = (0..n).find(|&v| !placed.contains(v) && parents[v].is_subset(placed)).expect("input is acyclic");
        order.push(v);
        placed = placed.with(v);
    }
    order
}

/// All labeled latent-free DAGs on `n` nodes, `1 ≤ n ≤ 6`.
pub fn enumerate_latent_free(n: usize) -> Result<Vec<Dag>> {
    check_range(n, 6, "1..=6")?;
    Ok(labeled_dag_parents(n)
        .into_iter()
        .map(|p| Dag::from_parents(n, 0, p).expect("generated parents are acyclic"))
        .collect())
}

/// Family bitmasks of every antichain of subsets of `{0..n-1}` with size ≥ 2.
pub fn facet_antichains(n: usize) -> Vec<u64> {
    let subsets: Vec<u32> = (0u32..1 << n).filter(|m| m.count_ones() >= 2).collect();
    let mut out = Vec::new();
    fn rec(subsets: &[u32], start: usize, chosen: &mut Vec<u32>, out: &mut Vec<u64>) {
        out.push(chosen.iter().fold(0u64, |b, &f| b | 1 << f));
        for i in start..subsets.len() {
            let s = subsets[i];
            if chosen.iter().all(|&c| c & s != c && c & s != s) {
                chosen.push(s);
                rec(subsets, i + 1, chosen, out);
                chosen.pop();
            }
        }
    }
    rec(&subsets, 0, &mut Vec::new(), &mut out);
    out.sort_unstable();
    out
}

/// One canonical representative per isomorphism class of mDAGs on `n`
/// observed nodes, `1 ≤ n ≤ 5`, sorted by canonical code.
pub fn enumerate_mdags(n: usize) -> Result<Vec<MDag>> {
    check_range(n, 5, "1..=5")?;
    let dags = labeled_dag_parents(n);
    let families = facet_antichains(n);
    let codes: HashSet<CanonicalCode> = dags
        .par_iter()
        .flat_map_iter(|parents| {
            let edges = (0..n).flat_map(|v| parents[v].iter().map(move |u| u * n + v)).fold(0u64, |b, e| b | 1 << e);
            families.iter().map(move |&fam| canonical_bits(n, edges, fam).0)
        })
        .collect();
    let mut codes: Vec<CanonicalCode> = codes.into_iter().collect();
    codes.sort_unstable();
    codes.into_iter().map(|c| c.decode()).collect()
}

/// Loads `mdags-n{N}.jsonl` from the cache, or enumerates and writes it.
pub fn load_or_enumerate_mdags(n: usize, cache_dir: Option<&Path>) -> Result<Vec<MDag>> {
    let Some(dir) = cache_dir else { return enumerate_mdags(n) };
    let path = versioned_dir(dir).join(format!("mdags-n{n}.jsonl"));
    if path.exists() {
        let text = fs::read_to_string(&path)?;
        let (body, ok) = split_hash_trailer(&text);
        if !ok {
            return Err(Error::CacheCorruption { path });
        }
        return body.lines().map(|l| Ok(serde_json::from_str(l)?)).collect();
    }
    let mdags = enumerate_mdags(n)?;
    let mut body = String::new();
    for m in &mdags {
        body.push_str(&serde_json::to_string(m)?);
        body.push('\n');
    }
    write_atomic(&path, with_hash_trailer(body).as_bytes())?;
    Ok(mdags)
}

pub(crate) fn versioned_dir(dir: &Path) -> PathBuf {
    dir.join(format!("v{CACHE_FORMAT_VERSION}"))
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Appends a `{"sha256": ...}` line covering all preceding bytes.
pub(crate) fn with_hash_trailer(mut body: String) -> String {
    let digest = sha256_hex(body.as_bytes());
    body.push_str(&format!("{{\"sha256\":\"{digest}\"}}\n"));
    body
}

/// Splits off a hash trailer; returns the body and whether the hash matched.
pub(crate) fn split_hash_trailer(text: &str) -> (&str, bool) {
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let cut = trimmed.rfind('\n').map(|i| i + 1).unwrap_or(0);
    let (body, last) = trimmed.split_at(cut);
    #[derive(Deserialize)]
    struct Trailer {
        sha256: String,
    }
    match serde_json::from_str::<Trailer>(last) {
        Ok(t) => (body, t.sha256 == sha256_hex(body.as_bytes())),
        Err(_) => (text, false),
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialized d-separation fingerprints of all labeled latent-free DAGs on `n` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FingerprintIndex {
    n: usize,
    entries: BTreeMap<String, Vec<(usize, usize)>>,
}

const INDEX_MAGIC: &[u8; 8] = b"MDAGLFIX";

impl FingerprintIndex {
    /// Fingerprints every labeled latent-free DAG on `n` nodes; each entry keeps
    /// the first DAG (in enumeration order) realizing it.
    pub fn build(n: usize) -> Result<Self> {
        let dags = enumerate_latent_free(n)?;
        let fps: Vec<String> = dags.par_iter().map(|d| dsep_fingerprint(d).to_json()).collect();
        let mut entries = BTreeMap::new();
        for (d, fp) in dags.iter().zip(fps) {
            entries.entry(fp).or_insert_with(|| d.edges());
        }
        Ok(FingerprintIndex { n, entries })
    }

    /// Loads `lfdsep-index-n{N}.bin` from the cache, or builds and writes it.
    pub fn load_or_build(n: usize, cache_dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = cache_dir else { return Self::build(n) };
        let path = versioned_dir(dir).join(format!("lfdsep-index-n{n}.bin"));
        if path.exists() {
            let bytes = fs::read(&path)?;
            return Self::from_bytes(&bytes).map_err(|_| Error::CacheCorruption { path });
        }
        let idx = Self::build(n)?;
        write_atomic(&path, &idx.to_bytes())?;
        Ok(idx)
    }

    /// Observed node count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinct fingerprints.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Whether the index is empty.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Membership of a labeled fingerprint.
    pub fn contains(&self, fp: &Fingerprint) -> bool {
        self.entries.contains_key(&fp.to_json())
    }

    /// A latent-free DAG with this fingerprint.
    pub fn partner(&self, fp: &Fingerprint) -> Option<Dag> {
        self.entries.get(&fp.to_json()).map(|e| Dag::new(self.n, 0, e).expect("stored partner is acyclic"))
    }

    /// Serialized fingerprints in sorted order.
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Binary form: magic, version, n, count, length-prefixed blobs with
    /// partner edges, then a SHA-256 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (fp, edges) in &self.entries {
            out.extend_from_slice(&(fp.len() as u32).to_le_bytes());
            out.extend_from_slice(fp.as_bytes());
            out.push(edges.len() as u8);
            for &(u, v) in edges {
                out.push(u as u8);
                out.push(v as u8);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Parses [`FingerprintIndex::to_bytes`], verifying the trailing hash.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("fingerprint index: {m}"));
        if bytes.len() < 20 + 32 {
            return Err(bad("truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("hash mismatch"));
        }
        if &body[..8] != INDEX_MAGIC {
            return Err(bad("bad magic"));
        }
        let word = |at: usize| -> Result<u32> {
            body.get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
                .ok_or_else(|| bad("truncated"))
        };
        if word(8)? != CACHE_FORMAT_VERSION {
            return Err(bad("version mismatch"));
        }
        let n = word(12)? as usize;
        let count = word(16)? as usize;
        let mut at = 20;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = word(at)? as usize;
            at += 4;
            let fp = body.get(at..at + len).ok_or_else(|| bad("truncated"))?;
            let fp = String::from_utf8(fp.to_vec()).map_err(|_| bad("non-utf8 key"))?;
            at += len;
            let ne = *body.get(at).ok_or_else(|| bad("truncated"))? as usize;
            at += 1;
            let raw = body.get(at..at + 2 * ne).ok_or_else(|| bad("truncated"))?;
            at += 2 * ne;
            let edges = raw.chunks(2).map(|c| (c[0] as usize, c[1] as usize)).collect();
            entries.insert(fp, edges);
        }
        if at != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(FingerprintIndex { n, entries })
    }

    /// SHA-256 of the binary form, identifying this index build.
    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

/// Builds the index for `n` nodes.
pub fn build_fingerprint_index(n: usize) -> Result<FingerprintIndex> {
    FingerprintIndex::build(n)
}

/// Whether no labeled latent-free DAG shares the d-separation fingerprint of `g`.
pub fn nalf_dsep<G: AsDag>(g: &G, idx: &FingerprintIndex) -> Result<bool> {
    let n = g.dag().n_observed();
    if idx.n() != n {
        return Err(Error::Precondition(format!("index built for {} nodes, graph has {n}", idx.n())));
    }
    Ok(!idx.contains(&dsep_fingerprint(g)))
}

/// Role indices for the four pattern nodes.
const X: usize = 0;
const Y: usize = 1;
const A: usize = 2;
const B: usize = 3;

/// The five relation sets over roles `X, Y, A, B`, each as `(x, y, Z)` triples.
pub const RELATION_FAMILIES: [&[(usize, usize, &[usize])]; 5] = [
    &[(A, Y, &[]), (A, Y, &[X]), (B, X, &[]), (B, X, &[Y]), (X, Y, &[]), (X, Y, &[A]), (X, Y, &[B])],
    &[(A, Y, &[X]), (B, X, &[Y])],
    &[(A, Y, &[]), (B, X, &[])],
    &[(B, X, &[]), (A, Y, &[X])],
    &[(B, X, &[]), (X, Y, &[A])],
];

/// Role pairs that must be adjacent in every pattern.
const REQUIRED_ADJACENT: [(usize, usize); 3] = [(X, A), (A, B), (B, Y)];

/// Relation set `family` (0-based) with role `r` placed on node `nodes[r]`.
pub fn family_relations(family: usize, nodes: &[usize; 4]) -> Vec<SepRelation> {
    let mut out: Vec<SepRelation> = RELATION_FAMILIES[family]
        .iter()
        .map(|&(x, y, z)| SepRelation::dsep(nodes[x], nodes[y], NodeSet::from_nodes(z.iter().map(|&r| nodes[r]))))
        .collect();
    out.sort_unstable();
    out
}

/// One entry of the pattern fixture.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Pattern {
    pub name: String,
    /// 1-based relation-set family.
    pub family: usize,
    #[serde(flatten)]
    pub graph: MDag,
}

/// The eighteen four-node patterns, labeled `X=0, Y=1, A=2, B=3`.
#[derive(Clone, Debug)]
pub struct PatternLibrary {
    pub patterns: Vec<Pattern>,
}

const PATTERN_FIXTURE: &str = include_str!("../data/patterns.jsonl");

impl PatternLibrary {
    /// Parses and validates the bundled fixture.
    pub fn load() -> Result<Self> {
        Self::parse(PATTERN_FIXTURE)
    }

    /// Parses and validates fixture text.
    pub fn parse(text: &str) -> Result<Self> {
        let patterns = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str::<Pattern>(l)?))
            .collect::<Result<Vec<_>>>()?;
        let lib = PatternLibrary { patterns };
        lib.validate()?;
        Ok(lib)
    }

    /// The fixture as JSONL.
    pub fn to_jsonl(&self) -> String {
        self.patterns.iter().map(|p| serde_json::to_string(p).expect("pattern serializes") + "\n").collect()
    }

    /// Checks count, declared families and pairwise non-isomorphism.
    pub fn validate(&self) -> Result<()> {
        if self.patterns.len() != 18 {
            return Err(Error::Precondition(format!("expected 18 patterns, found {}", self.patterns.len())));
        }
        let mut codes = HashSet::new();
        let mut seen_families = [false; 5];
        for p in &self.patterns {
            if p.graph.n_observed() != 4 || !(1..=5).contains(&p.family) {
                return Err(Error::Precondition(format!("pattern {} is malformed", p.name)));
            }
            let fp = dsep_fingerprint(&p.graph);
            if fp.relations != family_relations(p.family - 1, &[X, Y, A, B]) {
                return Err(Error::Precondition(format!(
                    "pattern {} has relations {} instead of family {}",
                    p.name,
                    fp.to_json(),
                    p.family
                )));
            }
            if !REQUIRED_ADJACENT.iter().all(|&(u, v)| p.graph.adjacent_unchecked(u, v)) {
                return Err(Error::Precondition(format!("pattern {} lacks a required adjacency", p.name)));
            }
            if !codes.insert(canonical_form(&p.graph)) {
                return Err(Error::Precondition(format!("pattern {} duplicates another", p.name)));
            }
            seen_families[p.family - 1] = true;
        }
        if !seen_families.iter().all(|&s| s) {
            return Err(Error::Precondition("some relation family has no pattern".into()));
        }
        Ok(())
    }

    /// Canonical codes of the patterns.
    pub fn codes(&self) -> HashSet<CanonicalCode> {
        self.patterns.iter().map(|p| canonical_form(&p.graph)).collect()
    }
}

/// A four-node match found by [`rapid_nalf_match`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMatch {
    /// 1-based relation-set family.
    pub family: usize,
    /// Graph nodes playing roles `X, Y, A, B`.
    pub nodes: [usize; 4],
}

/// Finds four nodes whose restricted relations equal one of the five families,
/// with the required adjacencies.
pub fn rapid_nalf_match(m: &MDag) -> Result<Option<PatternMatch>> {
    if let Maximality::Nonmaximal(a, b) = is_maximal(m) {
        return Err(Error::Precondition(format!("graph is nonmaximal (pair {a},{b})")));
    }
    let n = m.n_observed();
    if n < 4 {
        return Ok(None);
    }
    let fp = dsep_fingerprint(m);
    let roles = all_permutations(4);
    for q in m.observed().subsets().filter(|s| s.len() == 4) {
        let qn: Vec<usize> = q.iter().collect();
        let restricted: Vec<SepRelation> = fp
            .relations
            .iter()
            .filter(|r| q.contains(r.x as usize) && q.contains(r.y as usize) && r.z.is_subset(q))
            .copied()
            .collect();
        for sigma in &roles {
            let nodes = [qn[sigma[0]], qn[sigma[1]], qn[sigma[2]], qn[sigma[3]]];
            if !REQUIRED_ADJACENT.iter().all(|&(u, v)| m.adjacent_unchecked(nodes[u], nodes[v])) {
                continue;
            }
            for family in 0..5 {
                if family_relations(family, &nodes) == restricted {
                    return Ok(Some(PatternMatch { family: family + 1, nodes }));
                }
            }
        }
    }
    Ok(None)
}

/// Four-node pattern test for NALF d-separation on maximal mDAGs.
pub fn rapid_nalf_dsep(m: &MDag) -> Result<bool> {
    Ok(rapid_nalf_match(m)?.is_some())
}
