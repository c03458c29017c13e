//! The verdict cascade and witness verification.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::enumeration::{build_fingerprint_index, nalf_dsep, rapid_nalf_match, FingerprintIndex, PatternMatch};
use crate::error::{Error, Result};
use crate::graph::{canonical_form, CanonicalCode, MDag, NodeSet};
use crate::separation::{
    dsep_fingerprint, esep_fingerprint, is_maximal, is_setwise_maximal, pair_d_separable, setwise_adjacent,
    setwise_d_unrestricted, Fingerprint, Maximality, SepRelation, SetwiseMaximality,
};
use crate::supports::{
    rapid_supports_test, solve, trivially_incompatible, CardSpec, RapidOptions, RapidOutcome, SolverConfig, Support,
};

/// Classification outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Algebraic,
    NonAlgebraic,
    Unresolved,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Algebraic => "Algebraic",
            Status::NonAlgebraic => "NonAlgebraic",
            Status::Unresolved => "Unresolved",
        };
        f.write_str(s)
    }
}

/// A test of the cascade.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Hlp,
    Nonmaximal,
    Setwise,
    Subgraph,
    Dsep,
    Esep,
    Supports,
}

impl Stage {
    /// Every stage in default order.
    pub const ALL: [Stage; 7] =
        [Stage::Hlp, Stage::Nonmaximal, Stage::Setwise, Stage::Subgraph, Stage::Dsep, Stage::Esep, Stage::Supports];

    /// Lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            Stage::Hlp => "hlp",
            Stage::Nonmaximal => "nonmaximal",
            Stage::Setwise => "setwise",
            Stage::Subgraph => "subgraph",
            Stage::Dsep => "dsep",
            Stage::Esep => "esep",
            Stage::Supports => "supports",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown stage {s:?}")))
    }
}

/// One graph transformation that can only shrink the compatible set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum HlpStep {
    RemoveEdge { from: usize, to: usize },
    RemoveFacetMember { facet: NodeSet, member: usize },
    AddEdge { from: usize, to: usize },
}

impl HlpStep {
    /// Applies the step, checking its precondition.
    pub fn apply(&self, m: &MDag) -> Result<MDag> {
        let n = m.n_observed();
        let mut parents = m.parent_sets().to_vec();
        let mut facets = m.facets().to_vec();
        match *self {
            HlpStep::RemoveEdge { from, to } => {
                if from >= n || to >= n || !m.has_edge(from, to) {
                    return Err(Error::Precondition(format!("no edge {from}->{to}")));
                }
                parents[to] = parents[to].without(from);
            }
            HlpStep::RemoveFacetMember { facet, member } => {
                let i = facets
                    .iter()
                    .position(|&f| f == facet)
                    .filter(|_| facet.contains(member))
                    .ok_or_else(|| Error::Precondition(format!("{member} is not in a facet {facet}")))?;
                facets[i] = facet.without(member);
            }
            HlpStep::AddEdge { from, to } => {
                if !add_edge_allowed(m, from, to) {
                    return Err(Error::Precondition(format!("edge {from}->{to} may not be added")));
                }
                parents[to] = parents[to].with(from);
            }
        }
        MDag::from_masks(n, parents, facets)
    }
}

/// Whether `from -> to` may be added: absent, acyclic, parents of `from`
/// (observed and latent) among those of `to`, and `from` has a latent parent.
fn add_edge_allowed(m: &MDag, from: usize, to: usize) -> bool {
    let n = m.n_observed();
    if from >= n || to >= n || from == to || m.has_edge(from, to) {
        return false;
    }
    if m.as_dag().ancestors(from).contains(to) {
        return false;
    }
    let containing: Vec<NodeSet> = m.facets().iter().copied().filter(|f| f.contains(from)).collect();
    !containing.is_empty() && containing.iter().all(|f| f.contains(to)) && m.parents(from).is_subset(m.parents(to))
}

/// All graphs reachable by one transformation, in a fixed order.
pub fn hlp_neighbors(m: &MDag) -> Vec<(HlpStep, MDag)> {
    let n = m.n_observed();
    let mut steps = Vec::new();
    for (from, to) in m.edges() {
        steps.push(HlpStep::RemoveEdge { from, to });
    }
    for &facet in m.facets() {
        for member in facet.iter() {
            steps.push(HlpStep::RemoveFacetMember { facet, member });
        }
    }
    for from in 0..n {
        for to in 0..n {
            if add_edge_allowed(m, from, to) {
                steps.push(HlpStep::AddEdge { from, to });
            }
        }
    }
    steps.into_iter().map(|s| (s, s.apply(m).expect("enumerated steps are valid"))).collect()
}

fn labeled_key(m: &MDag) -> (u64, u64) {
    (m.edge_bits(), m.family_bits())
}

/// Labeled graph key: edge bits and facet-family bits.
type GraphKey = (u64, u64);

/// A latent-free partner's edges and the first relation the two graphs disagree on.
pub type EsepWitness = (Vec<(usize, usize)>, SepRelation);

fn bfs_path(m: &MDag, prune: bool) -> Option<Vec<HlpStep>> {
    let target = dsep_fingerprint(m);
    if m.is_latent_free() {
        return Some(Vec::new());
    }
    let mut prev: HashMap<GraphKey, Option<(GraphKey, HlpStep)>> = HashMap::new();
    prev.insert(labeled_key(m), None);
    let mut queue = VecDeque::from([m.clone()]);
    while let Some(g) = queue.pop_front() {
        let gk = labeled_key(&g);
        for (step, h) in hlp_neighbors(&g) {
            let hk = labeled_key(&h);
            if prev.contains_key(&hk) {
                continue;
            }
            let same = dsep_fingerprint(&h) == target;
            if prune && !same {
                continue;
            }
            prev.insert(hk, Some((gk, step)));
            if same && h.is_latent_free() {
                let mut path = Vec::new();
                let mut k = hk;
                while let Some(Some((p, s))) = prev.get(&k) {
                    path.push(*s);
                    k = *p;
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(h);
        }
    }
    None
}

/// Breadth-first search for a latent-free graph with the same d-separation
/// relations, reachable by compatible-set-shrinking steps.
///
/// Each step can only add d-separation relations, so only neighbors keeping
/// the fingerprint are expanded.
pub fn hlp_criterion(m: &MDag) -> Option<Vec<HlpStep>> {
    bfs_path(m, true)
}

/// [`hlp_criterion`] without fingerprint pruning; explores every reachable graph.
pub fn hlp_criterion_exhaustive(m: &MDag) -> Option<Vec<HlpStep>> {
    bfs_path(m, false)
}

/// Whether the e-separation relations differ from those of a latent-free
/// graph with the same d-separation relations; returns the partner edges and
/// the first differing relation.
pub fn nalf_esep_witness(m: &MDag, idx: &FingerprintIndex) -> Result<Option<EsepWitness>> {
    let fp = dsep_fingerprint(m);
    let partner = idx.partner(&fp).ok_or(Error::NoPartner)?;
    let mine = esep_fingerprint(m);
    let theirs = esep_fingerprint(&partner);
    let a: BTreeSet<_> = mine.relations.iter().collect();
    let b: BTreeSet<_> = theirs.relations.iter().collect();
    Ok(a.symmetric_difference(&b).next().map(|r| (partner.edges(), **r)))
}

/// Boolean form of [`nalf_esep_witness`].
pub fn nalf_esep(m: &MDag, idx: &FingerprintIndex) -> Result<bool> {
    Ok(nalf_esep_witness(m, idx)?.is_some())
}

/// Verdicts of smaller graphs, keyed by canonical code.
#[derive(Clone, Debug, Default)]
pub struct VerdictStore {
    sizes: BTreeSet<usize>,
    verdicts: HashMap<CanonicalCode, Verdict>,
}

impl VerdictStore {
    /// Empty store.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every verdict of one graph size.
    pub fn insert_size(&mut self, n: usize, verdicts: impl IntoIterator<Item = Verdict>) {
        self.sizes.insert(n);
        for v in verdicts {
            self.verdicts.insert(v.code, v);
        }
    }

    /// Whether verdicts for size `n` are present.
    pub fn has_size(&self, n: usize) -> bool {
        self.sizes.contains(&n)
    }

    /// Stored verdict for a code.
    pub fn get(&self, code: &CanonicalCode) -> Option<&Verdict> {
        self.verdicts.get(code)
    }
}

/// Smallest graph size whose verdicts the subgraph stage consults.
const SUBGRAPH_MIN: usize = 3;

/// Deleting observed nodes from a Non-Algebraic subgraph's complement.
pub fn subgraph_nonalgebraic(m: &MDag, lower: &VerdictStore) -> Result<Option<(NodeSet, Verdict)>> {
    let n = m.n_observed();
    for size in SUBGRAPH_MIN..n {
        if !lower.has_size(size) {
            return Err(Error::MissingStore(size));
        }
    }
    let mut subsets: Vec<NodeSet> =
        m.observed().subsets().filter(|w| !w.is_empty() && n - w.len() >= SUBGRAPH_MIN).collect();
    subsets.sort_by_key(|w| (w.len(), w.0));
    for w in subsets {
        let sub = m.delete_observed(w);
        if let Some(v) = lower.get(&canonical_form(&sub)) {
            if v.status == Status::NonAlgebraic {
                return Ok(Some((w, v.clone())));
            }
        }
    }
    Ok(None)
}

/// Evidence attached to a verdict.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Witness {
    HlpPath { steps: Vec<HlpStep> },
    NonmaximalPair { a: usize, b: usize },
    SetwiseSet { set: NodeSet },
    NalfDsepProof { fingerprint: Fingerprint, index_digest: String, pattern: Option<PatternMatch> },
    NalfEsepProof { partner_edges: Vec<(usize, usize)>, relation: SepRelation },
    SupportWitness { support: Support },
    SubgraphWitness { deleted: NodeSet, inner: Box<Verdict> },
    Unresolved { completed: Vec<Stage>, schedule: Vec<CardSpec>, note: Option<String> },
}

/// Classification of one graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub code: CanonicalCode,
    pub status: Status,
    /// The stage that fired; `None` when unresolved.
    pub stage: Option<Stage>,
    pub witness: Witness,
}

/// Which stages run, in which order, and how the supports stage searches.
#[derive(Clone, Debug)]
pub struct StageConfig {
    pub stages: Vec<Stage>,
    /// Cardinality schedule; empty means all-binary.
    pub schedule: Vec<CardSpec>,
    pub deadline: Option<Instant>,
    pub samples: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            stages: Stage::ALL.to_vec(),
            schedule: Vec::new(),
            deadline: None,
            samples: 0,
            seed: 0,
            parallel: false,
        }
    }
}

impl StageConfig {
    /// The schedule for `n` nodes.
    pub fn schedule_for(&self, n: usize) -> Vec<CardSpec> {
        if self.schedule.is_empty() {
            vec![CardSpec::binary(n)]
        } else {
            self.schedule.iter().filter(|s| s.cards.len() == n).cloned().collect()
        }
    }
}

/// Read-only inputs shared by every classification.
pub struct Context<'a> {
    pub index: &'a FingerprintIndex,
    pub lower: Option<&'a VerdictStore>,
}

/// Runs the enabled stages in order; the first that fires decides.
pub fn classify(m: &MDag, cfg: &StageConfig, ctx: &Context<'_>) -> Result<Verdict> {
    classify_timed(m, cfg, ctx).map(|(v, _)| v)
}

enum StageOutcome {
    Fired(Witness),
    Passed,
    TimedOut(String),
}

fn run_stage(m: &MDag, stage: Stage, cfg: &StageConfig, ctx: &Context<'_>) -> Result<StageOutcome> {
    let n = m.n_observed();
    let fired = |w| Ok(StageOutcome::Fired(w));
    match stage {
        Stage::Hlp => {
            if let Some(steps) = hlp_criterion(m) {
                return fired(Witness::HlpPath { steps });
            }
        }
        Stage::Nonmaximal => {
            if let Maximality::Nonmaximal(a, b) = is_maximal(m) {
                return fired(Witness::NonmaximalPair { a, b });
            }
        }
        Stage::Setwise => {
            if let SetwiseMaximality::Nonmaximal(set) = is_setwise_maximal(m) {
                return fired(Witness::SetwiseSet { set });
            }
        }
        Stage::Subgraph => {
            if n >= 5 {
                let lower = ctx.lower.ok_or(Error::MissingStore(n - 1))?;
                if let Some((deleted, inner)) = subgraph_nonalgebraic(m, lower)? {
                    return fired(Witness::SubgraphWitness { deleted, inner: Box::new(inner) });
                }
            }
        }
        Stage::Dsep => {
            if nalf_dsep(m, ctx.index)? {
                let pattern = match is_maximal(m) {
                    Maximality::Maximal => rapid_nalf_match(m)?,
                    Maximality::Nonmaximal(..) => None,
                };
                let fingerprint = dsep_fingerprint(m);
                return fired(Witness::NalfDsepProof { fingerprint, index_digest: ctx.index.digest(), pattern });
            }
        }
        Stage::Esep => {
            if !nalf_dsep(m, ctx.index)? {
                if let Some((partner_edges, relation)) = nalf_esep_witness(m, ctx.index)? {
                    return fired(Witness::NalfEsepProof { partner_edges, relation });
                }
            }
        }
        Stage::Supports => {
            let opts =
                RapidOptions { deadline: cfg.deadline, samples: cfg.samples, seed: cfg.seed, parallel: cfg.parallel };
            match rapid_supports_test(m, &cfg.schedule_for(n), &opts)? {
                RapidOutcome::Witness { support, .. } => return fired(Witness::SupportWitness { support }),
                RapidOutcome::Exhausted => {}
                RapidOutcome::TimedOut(p) => {
                    let done: Vec<String> = p.completed.iter().map(|c| c.to_string()).collect();
                    return Ok(StageOutcome::TimedOut(format!(
                        "supports stage timed out after {} supports; completed schedule entries [{}]",
                        p.examined,
                        done.join(",")
                    )));
                }
            }
        }
    }
    Ok(StageOutcome::Passed)
}

/// [`classify`] plus the wall time spent in each stage that ran.
pub fn classify_timed(m: &MDag, cfg: &StageConfig, ctx: &Context<'_>) -> Result<(Verdict, Vec<(Stage, Duration)>)> {
    let code = canonical_form(m);
    let mut timings = Vec::new();
    let mut completed = Vec::new();
    let mut note = None;
    for &stage in &cfg.stages {
        let start = Instant::now();
        let outcome = run_stage(m, stage, cfg, ctx)?;
        timings.push((stage, start.elapsed()));
        match outcome {
            StageOutcome::Fired(witness) => {
                let status = if stage == Stage::Hlp { Status::Algebraic } else { Status::NonAlgebraic };
                return Ok((Verdict { code, status, stage: Some(stage), witness }, timings));
            }
            StageOutcome::Passed => completed.push(stage),
            StageOutcome::TimedOut(reason) => note = Some(reason),
        }
    }
    let witness = Witness::Unresolved { completed, schedule: cfg.schedule_for(m.n_observed()), note };
    Ok((Verdict { code, status: Status::Unresolved, stage: None, witness }, timings))
}

/// Re-checks a verdict from scratch against `m`; false on any mismatch.
pub fn verify_witness(m: &MDag, v: &Verdict) -> bool {
    if canonical_form(m) != v.code {
        return false;
    }
    let expected = match v.stage {
        Some(Stage::Hlp) => Status::Algebraic,
        Some(_) => Status::NonAlgebraic,
        None => Status::Unresolved,
    };
    if v.status != expected {
        return false;
    }
    let n = m.n_observed();
    match (&v.witness, v.stage) {
        (Witness::HlpPath { steps }, Some(Stage::Hlp)) => {
            let mut g = m.clone();
            for s in steps {
                match s.apply(&g) {
                    Ok(h) => g = h,
                    Err(_) => return false,
                }
            }
            g.is_latent_free() && dsep_fingerprint(&g) == dsep_fingerprint(m)
        }
        (&Witness::NonmaximalPair { a, b }, Some(Stage::Nonmaximal)) => {
            a < n
                && b < n
                && a != b
                && matches!(m.adjacent(a, b), Ok(false))
                && matches!(pair_d_separable(m, a, b), Ok(false))
        }
        (&Witness::SetwiseSet { set }, Some(Stage::Setwise)) => {
            matches!(setwise_d_unrestricted(m, set), Ok(true)) && matches!(setwise_adjacent(m, set), Ok(false))
        }
        (Witness::NalfDsepProof { fingerprint, .. }, Some(Stage::Dsep)) => {
            *fingerprint == dsep_fingerprint(m)
                && build_fingerprint_index(n).is_ok_and(|idx| !idx.contains(fingerprint))
        }
        (Witness::NalfEsepProof { partner_edges, relation }, Some(Stage::Esep)) => {
            let Ok(partner) = MDag::latent_free(n, partner_edges) else { return false };
            if dsep_fingerprint(&partner) != dsep_fingerprint(m) {
                return false;
            }
            let mine = esep_fingerprint(m).contains(relation);
            let theirs = esep_fingerprint(&partner).contains(relation);
            mine != theirs
        }
        (Witness::SupportWitness { support }, Some(Stage::Supports)) => {
            support.n() == n
                && matches!(trivially_incompatible(support, m), Ok(None))
                && matches!(solve(support, m, &SolverConfig::alternate()), Ok(c) if !c.is_compatible())
        }
        (Witness::SubgraphWitness { deleted, inner }, Some(Stage::Subgraph)) => {
            if deleted.is_empty() || !deleted.is_subset(m.observed()) || inner.status != Status::NonAlgebraic {
                return false;
            }
            let sub = m.delete_observed(*deleted);
            let Ok(rep) = inner.code.decode() else { return false };
            canonical_form(&sub) == inner.code && verify_witness(&rep, inner)
        }
        (Witness::Unresolved { completed, .. }, None) => {
            let unique: HashSet<_> = completed.iter().collect();
            unique.len() == completed.len()
        }
        _ => false,
    }
}
