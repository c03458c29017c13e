//! d-separation, e-separation, maximality and separation fingerprints.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{Dag, MDag, NodeSet};

/// Anything that exposes an underlying [`Dag`] with latents after observed nodes.
pub trait AsDag {
    /// The underlying DAG.
    fn dag(&self) -> &Dag;
}

impl AsDag for Dag {
    fn dag(&self) -> &Dag {
        self
    }
}

impl AsDag for MDag {
    fn dag(&self) -> &Dag {
        self.as_dag()
    }
}

/// A separation query `X ⟂ Y | Z` evaluated after deleting `W`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SepQuery {
    pub x: NodeSet,
    pub y: NodeSet,
    pub z: NodeSet,
    pub w: NodeSet,
}

impl SepQuery {
    /// A d-separation query.
    pub fn new(x: NodeSet, y: NodeSet, z: NodeSet) -> Self {
        SepQuery { x, y, z, w: NodeSet::EMPTY }
    }

    /// An e-separation query.
    pub fn with_deletion(x: NodeSet, y: NodeSet, z: NodeSet, w: NodeSet) -> Self {
        SepQuery { x, y, z, w }
    }

    /// Singleton-pair d-separation query.
    pub fn pair(x: usize, y: usize, z: NodeSet) -> Self {
        SepQuery::new(NodeSet::singleton(x), NodeSet::singleton(y), z)
    }

    fn validate(&self, universe: NodeSet) -> Result<()> {
        let sets = [self.x, self.y, self.z, self.w];
        if self.x.is_empty() || self.y.is_empty() {
            return Err(Error::Disjointness);
        }
        for (i, a) in sets.iter().enumerate() {
            if !a.is_subset(universe) {
                let bad = a.minus(universe).iter().next().unwrap_or(0);
                return Err(Error::Index { index: bad, len: universe.len() });
            }
            for b in &sets[i + 1..] {
                if !a.is_disjoint(*b) {
                    return Err(Error::Disjointness);
                }
            }
        }
        Ok(())
    }
}

/// Ancestors of `z` in the subgraph induced by `alive`, including `z`.
fn ancestors_within(g: &Dag, z: NodeSet, alive: NodeSet) -> NodeSet {
    let mut anc = z;
    let mut frontier = z;
    while !frontier.is_empty() {
        let mut next = NodeSet::EMPTY;
        for v in frontier.iter() {
            next = next.union(g.parents(v));
        }
        next = next.inter(alive).minus(anc);
        anc = anc.union(next);
        frontier = next;
    }
    anc
}

/// Reachability test for `x ⟂ y | z` in the subgraph induced by `alive`.
pub(crate) fn dsep_in(g: &Dag, x: NodeSet, y: NodeSet, z: NodeSet, alive: NodeSet) -> bool {
    let anc = ancestors_within(g, z, alive);
    let mut up = x;
    let mut down = NodeSet::EMPTY;
    let mut f_up = x;
    let mut f_down = NodeSet::EMPTY;
    loop {
        let mut n_up = NodeSet::EMPTY;
        let mut n_down = NodeSet::EMPTY;
        for v in f_up.minus(z).iter() {
            n_up = n_up.union(g.parents(v));
            n_down = n_down.union(g.children(v));
        }
        for v in f_down.iter() {
            if !z.contains(v) {
                n_down = n_down.union(g.children(v));
            }
            if anc.contains(v) {
                n_up = n_up.union(g.parents(v));
            }
        }
        n_up = n_up.inter(alive).minus(up);
        n_down = n_down.inter(alive).minus(down);
        if n_up.is_empty() && n_down.is_empty() {
            break;
        }
        up = up.union(n_up);
        down = down.union(n_down);
        f_up = n_up;
        f_down = n_down;
    }
    up.union(down).minus(z).is_disjoint(y)
}

/// Whether `X ⟂ Y | Z` holds; latents may appear in the query sets.
pub fn d_separated<G: AsDag>(g: &G, q: &SepQuery) -> Result<bool> {
    let d = g.dag();
    if !q.w.is_empty() {
        return Err(Error::Precondition("d-separation query carries a deletion set".into()));
    }
    q.validate(NodeSet::full(d.n_total()))?;
    Ok(dsep_in(d, q.x, q.y, q.z, NodeSet::full(d.n_total())))
}

/// Whether `X ⟂ Y | Z` holds after deleting the observed nodes `W`.
pub fn e_separated<G: AsDag>(g: &G, q: &SepQuery) -> Result<bool> {
    let d = g.dag();
    q.validate(d.observed())?;
    Ok(dsep_in(d, q.x, q.y, q.z, NodeSet::full(d.n_total()).minus(q.w)))
}

/// Which separation notion a [`Fingerprint`] records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerprintKind {
    Dsep,
    Esep,
}

/// One singleton-pair relation `x ⟂ y | z` after deleting `w` (empty for d-separation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SepRelation {
    pub x: u8,
    pub y: u8,
    pub z: NodeSet,
    pub w: NodeSet,
}

impl SepRelation {
    /// A d-separation relation, normalized so that `x < y`.
    pub fn dsep(x: usize, y: usize, z: NodeSet) -> Self {
        let (x, y) = if x < y { (x, y) } else { (y, x) };
        SepRelation { x: x as u8, y: y as u8, z, w: NodeSet::EMPTY }
    }

    /// Relabels every node through `perm`, keeping `x < y`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let map = |s: NodeSet| NodeSet::from_nodes(s.iter().map(|v| perm[v]));
        let (a, b) = (perm[self.x as usize], perm[self.y as usize]);
        let (x, y) = if a < b { (a, b) } else { (b, a) };
        SepRelation { x: x as u8, y: y as u8, z: map(self.z), w: map(self.w) }
    }
}

/// The sorted set of all holding singleton-pair relations of one kind.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    pub kind: FingerprintKind,
    pub relations: Vec<SepRelation>,
}

impl Fingerprint {
    /// Builds a fingerprint, sorting and deduplicating relations.
    pub fn new(kind: FingerprintKind, mut relations: Vec<SepRelation>) -> Self {
        relations.sort_unstable();
        relations.dedup();
        Fingerprint { kind, relations }
    }

    /// Number of relations.
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    /// Whether no relation holds.
    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Membership test.
    pub fn contains(&self, r: &SepRelation) -> bool {
        self.relations.binary_search(r).is_ok()
    }

    /// Relabels every relation through `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Fingerprint::new(self.kind, self.relations.iter().map(|r| r.permuted(perm)).collect())
    }

    fn rows(&self) -> Vec<Vec<u32>> {
        self.relations
            .iter()
            .map(|r| {
                let mut row = vec![r.x as u32, r.y as u32, r.z.0];
                if self.kind == FingerprintKind::Esep {
                    row.push(r.w.0);
                }
                row
            })
            .collect()
    }

    /// Compact JSON array serialization; the byte string is the index key.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.rows()).expect("integer rows serialize")
    }

    /// Parses the output of [`Fingerprint::to_json`].
    pub fn from_json(kind: FingerprintKind, text: &str) -> Result<Self> {
        let rows: Vec<Vec<u32>> = serde_json::from_str(text)?;
        Fingerprint::from_rows(kind, rows)
    }

    fn from_rows(kind: FingerprintKind, rows: Vec<Vec<u32>>) -> Result<Self> {
        let width = if kind == FingerprintKind::Esep { 4 } else { 3 };
        let mut rels = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != width || row[0] >= 32 || row[1] >= 32 {
                return Err(Error::Parse(format!("bad fingerprint row {row:?}")));
            }
            rels.push(SepRelation {
                x: row[0] as u8,
                y: row[1] as u8,
                z: NodeSet(row[2]),
                w: NodeSet(row.get(3).copied().unwrap_or(0)),
            });
        }
        Ok(Fingerprint::new(kind, rels))
    }
}

#[derive(Serialize, Deserialize)]
struct FingerprintJson {
    kind: FingerprintKind,
    relations: Vec<Vec<u32>>,
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FingerprintJson { kind: self.kind, relations: self.rows() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = FingerprintJson::deserialize(d)?;
        Fingerprint::from_rows(j.kind, j.relations).map_err(serde::de::Error::custom)
    }
}

/// All holding `x ⟂ y | Z` with `x < y` observed and `Z ⊆ observed ∖ {x, y}`.
pub fn dsep_fingerprint<G: AsDag>(g: &G) -> Fingerprint {
    let d = g.dag();
    let n = d.n_observed();
    let all = NodeSet::full(d.n_total());
    let mut rels = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            let rest = d.observed().without(x).without(y);
            for z in rest.subsets() {
                if dsep_in(d, NodeSet::singleton(x), NodeSet::singleton(y), z, all) {
                    rels.push(SepRelation::dsep(x, y, z));
                }
            }
        }
    }
    Fingerprint::new(FingerprintKind::Dsep, rels)
}

/// All holding `(x, y, Z, W)` with `Z`, `W` disjoint subsets of `observed ∖ {x, y}`.
pub fn esep_fingerprint<G: AsDag>(g: &G) -> Fingerprint {
    let d = g.dag();
    let n = d.n_observed();
    let all = NodeSet::full(d.n_total());
    let mut rels = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            let rest = d.observed().without(x).without(y);
            for w in rest.subsets() {
                for z in rest.minus(w).subsets() {
                    if dsep_in(d, NodeSet::singleton(x), NodeSet::singleton(y), z, all.minus(w)) {
                        rels.push(SepRelation { x: x as u8, y: y as u8, z, w });
                    }
                }
            }
        }
    }
    Fingerprint::new(FingerprintKind::Esep, rels)
}

/// Whether some conditioning set d-separates observed nodes `a` and `b`.
pub fn pair_d_separable<G: AsDag>(g: &G, a: usize, b: usize) -> Result<bool> {
    let d = g.dag();
    let n = d.n_observed();
    for x in [a, b] {
        if x >= n {
            return Err(Error::Index { index: x, len: n });
        }
    }
    if a == b {
        return Err(Error::Disjointness);
    }
    Ok(pair_separable_unchecked(d, a, b))
}

fn pair_separable_unchecked(d: &Dag, a: usize, b: usize) -> bool {
    let z = d.ancestors(a).union(d.ancestors(b)).inter(d.observed()).without(a).without(b);
    dsep_in(d, NodeSet::singleton(a), NodeSet::singleton(b), z, NodeSet::full(d.n_total()))
}

/// Outcome of [`is_maximal`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Maximality {
    Maximal,
    /// A nonadjacent, d-unseparable pair.
    Nonmaximal(usize, usize),
}

/// Checks that every d-unseparable pair is adjacent.
pub fn is_maximal(m: &MDag) -> Maximality {
    let n = m.n_observed();
    for a in 0..n {
        for b in a + 1..n {
            if !m.adjacent_unchecked(a, b) && !pair_separable_unchecked(m.as_dag(), a, b) {
                return Maximality::Nonmaximal(a, b);
            }
        }
    }
    Maximality::Maximal
}

fn check_set(m: &MDag, s: NodeSet) -> Result<()> {
    if !s.is_subset(m.observed()) {
        let bad = s.minus(m.observed()).iter().next().unwrap_or(0);
        return Err(Error::Index { index: bad, len: m.n_observed() });
    }
    if s.len() < 2 {
        return Err(Error::Size);
    }
    Ok(())
}

/// Whether some node of the subgraph on `S` (plus latents) is an ancestor of all of `S`.
pub fn setwise_adjacent(m: &MDag, s: NodeSet) -> Result<bool> {
    check_set(m, s)?;
    Ok(setwise_adjacent_unchecked(m, s))
}

pub(crate) fn setwise_adjacent_unchecked(m: &MDag, s: NodeSet) -> bool {
    let d = m.as_dag();
    let alive = s.union(NodeSet::full(d.n_total()).minus(d.observed()));
    let reach = |root: usize| {
        let mut seen = NodeSet::singleton(root);
        let mut frontier = seen;
        while !frontier.is_empty() {
            let mut next = NodeSet::EMPTY;
            for v in frontier.iter() {
                next = next.union(d.children(v));
            }
            next = next.inter(alive).minus(seen);
            seen = seen.union(next);
            frontier = next;
        }
        seen
    };
    s.iter().chain(d.n_observed()..d.n_total()).any(|r| s.is_subset(reach(r)))
}

/// Whether no pair in `S` is d-separated by any `Z ⊆ observed ∖ S`.
pub fn setwise_d_unrestricted(m: &MDag, s: NodeSet) -> Result<bool> {
    check_set(m, s)?;
    Ok(setwise_unrestricted_unchecked(m, s))
}

pub(crate) fn setwise_unrestricted_unchecked(m: &MDag, s: NodeSet) -> bool {
    let d = m.as_dag();
    let all = NodeSet::full(d.n_total());
    let outside = m.observed().minus(s);
    for a in s.iter() {
        for b in s.iter().filter(|&b| b > a) {
            if outside.subsets().any(|z| dsep_in(d, NodeSet::singleton(a), NodeSet::singleton(b), z, all)) {
                return false;
            }
        }
    }
    true
}

/// Outcome of [`is_setwise_maximal`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetwiseMaximality {
    Maximal,
    /// A setwise d-unrestricted set that is not setwise adjacent.
    Nonmaximal(NodeSet),
}

/// Searches node sets by increasing size, then bitmask, for a setwise-nonmaximal witness.
pub fn is_setwise_maximal(m: &MDag) -> SetwiseMaximality {
    let mut sets: Vec<NodeSet> = m.observed().subsets().filter(|s| s.len() >= 2).collect();
    sets.sort_by_key(|s| (s.len(), s.0));
    for s in sets {
        if setwise_unrestricted_unchecked(m, s) && !setwise_adjacent_unchecked(m, s) {
            return SetwiseMaximality::Nonmaximal(s);
        }
    }
    SetwiseMaximality::Maximal
}

/// A set-valued relation `A ⟂ B | C` among observed nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SetRelation {
    pub a: NodeSet,
    pub b: NodeSet,
    pub c: NodeSet,
}

/// All holding set-valued d-separation relations with disjoint nonempty `A`, `B`
/// (ordered so `min A < min B`), derived from the singleton fingerprint.
pub fn set_relations<G: AsDag>(g: &G) -> Vec<SetRelation> {
    let fp = dsep_fingerprint(g);
    set_relations_from_fingerprint(g.dag().n_observed(), &fp)
}

/// Set-valued relations regenerated from singleton relations by decomposition.
pub fn set_relations_from_fingerprint(n: usize, fp: &Fingerprint) -> Vec<SetRelation> {
    let obs = NodeSet::full(n);
    let holds = |x: usize, y: usize, z: NodeSet| fp.contains(&SepRelation::dsep(x, y, z));
    let mut out = Vec::new();
    for c in obs.subsets() {
        let rest = obs.minus(c);
        for a in rest.subsets().filter(|a| !a.is_empty()) {
            for b in rest.minus(a).subsets().filter(|b| !b.is_empty()) {
                if a.0.trailing_zeros() > b.0.trailing_zeros() {
                    continue;
                }
                if a.iter().all(|x| b.iter().all(|y| holds(x, y, c))) {
                    out.push(SetRelation { a, b, c });
                }
            }
        }
    }
    out.sort_unstable();
    out
}
