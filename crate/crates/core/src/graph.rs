//! DAGs with latent nodes, mDAGs, latent reductions and canonical labeling.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest observed node count an [`MDag`] may have.
pub const MAX_OBSERVED: usize = 6;
/// Largest total node count a [`Dag`] may have.
pub const MAX_NODES: usize = 32;

/// A set of node indices stored as a bitmask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(pub u32);

impl NodeSet {
    /// The empty set.
    pub const EMPTY: NodeSet = NodeSet(0);

    /// `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        if n >= 32 {
            NodeSet(u32::MAX)
        } else {
            NodeSet((1u32 << n) - 1)
        }
    }

    /// `{v}`.
    pub fn singleton(v: usize) -> Self {
        NodeSet(1 << v)
    }

    /// Builds a set from node indices.
    pub fn from_nodes<I: IntoIterator<Item = usize>>(nodes: I) -> Self {
        nodes.into_iter().fold(NodeSet::EMPTY, |s, v| s.with(v))
    }

    /// Raw bitmask.
    pub fn bits(self) -> u32 {
        self.0
    }

    /// Membership test.
    pub fn contains(self, v: usize) -> bool {
        v < 32 && self.0 >> v & 1 == 1
    }

    /// Copy with `v` added.
    pub fn with(self, v: usize) -> Self {
        NodeSet(self.0 | 1 << v)
    }

    /// Copy with `v` removed.
    pub fn without(self, v: usize) -> Self {
        NodeSet(self.0 & !(1 << v))
    }

    /// Set union.
    pub fn union(self, o: Self) -> Self {
        NodeSet(self.0 | o.0)
    }

    /// Set intersection.
    pub fn inter(self, o: Self) -> Self {
        NodeSet(self.0 & o.0)
    }

    /// Set difference.
    pub fn minus(self, o: Self) -> Self {
        NodeSet(self.0 & !o.0)
    }

    /// Subset test.
    pub fn is_subset(self, o: Self) -> bool {
        self.0 & !o.0 == 0
    }

    /// Disjointness test.
    pub fn is_disjoint(self, o: Self) -> bool {
        self.0 & o.0 == 0
    }

    /// Number of members.
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Emptiness test.
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in increasing order.
    pub fn iter(self) -> NodeIter {
        NodeIter(self.0)
    }

    /// All subsets of `self`, in increasing bitmask order.
    pub fn subsets(self) -> impl Iterator<Item = NodeSet> {
        let m = self.0;
        let mut next = Some(0u32);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == m { None } else { Some((cur.wrapping_sub(m)) & m) };
            Some(NodeSet(cur))
        })
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// Iterator over the members of a [`NodeSet`].
#[derive(Clone, Debug)]
pub struct NodeIter(u32);

impl Iterator for NodeIter {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let v = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(v)
    }
}

/// Which relatives [`Dag::relatives`] returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Parents,
    Children,
    Ancestors,
    Descendants,
}

/// A DAG whose first `n_observed` nodes are observed and the rest latent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dag {
    n_observed: usize,
    n_latent: usize,
    parents: Vec<NodeSet>,
    children: Vec<NodeSet>,
    ancestors: Vec<NodeSet>,
    descendants: Vec<NodeSet>,
    topo: Vec<usize>,
}

/// Builds a validated [`Dag`] from an edge list.
pub fn build_dag(n_observed: usize, n_latent: usize, edges: &[(usize, usize)]) -> Result<Dag> {
    Dag::new(n_observed, n_latent, edges)
}

impl Dag {
    /// Builds a DAG from `(source, target)` pairs.
    pub fn new(n_observed: usize, n_latent: usize, edges: &[(usize, usize)]) -> Result<Dag> {
        let n = n_observed + n_latent;
        if n > MAX_NODES {
            return Err(Error::Range { what: "total nodes", value: n, range: "0..=32" });
        }
        let mut parents = vec![NodeSet::EMPTY; n];
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::Index { index: x, len: n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            parents[v] = parents[v].with(u);
        }
        Dag::from_parents(n_observed, n_latent, parents)
    }

    /// Builds a DAG from per-node parent sets.
    pub fn from_parents(n_observed: usize, n_latent: usize, parents: Vec<NodeSet>) -> Result<Dag> {
        let n = n_observed + n_latent;
        if n > MAX_NODES {
            return Err(Error::Range { what: "total nodes", value: n, range: "0..=32" });
        }
        if parents.len() != n {
            return Err(Error::Precondition(format!("expected {n} parent sets, got {}", parents.len())));
        }
        let all = NodeSet::full(n);
        for (v, &p) in parents.iter().enumerate() {
            if p.contains(v) {
                return Err(Error::SelfLoop(v));
            }
            if !p.is_subset(all) {
                let bad = p.minus(all).iter().next().unwrap_or(n);
                return Err(Error::Index { index: bad, len: n });
            }
        }
        let mut children = vec![NodeSet::EMPTY; n];
        for (v, &p) in parents.iter().enumerate() {
            for u in p.iter() {
                children[u] = children[u].with(v);
            }
        }
        let mut topo = Vec::with_capacity(n);
        let mut placed = NodeSet::EMPTY;
        while topo.len() < n {
            let next = (0..n).find(|&v| !placed.contains(v) && parents[v].is_subset(placed));
            match next {
                Some(v) => {
                    topo.push(v);
                    placed = placed.with(v);
                }
                None => return Err(Error::Cycle),
            }
        }
        let mut ancestors = vec![NodeSet::EMPTY; n];
        for &v in &topo {
            ancestors[v] = parents[v].iter().fold(NodeSet::singleton(v), |a, p| a.union(ancestors[p]));
        }
        let mut descendants = vec![NodeSet::EMPTY; n];
        for &v in topo.iter().rev() {
            descendants[v] = children[v].iter().fold(NodeSet::singleton(v), |a, c| a.union(descendants[c]));
        }
        Ok(Dag { n_observed, n_latent, parents, children, ancestors, descendants, topo })
    }

    /// Number of observed nodes.
    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    /// Number of latent nodes.
    pub fn n_latent(&self) -> usize {
        self.n_latent
    }

    /// Total node count.
    pub fn n_total(&self) -> usize {
        self.n_observed + self.n_latent
    }

    /// The observed nodes.
    pub fn observed(&self) -> NodeSet {
        NodeSet::full(self.n_observed)
    }

    /// Whether the graph has no latent nodes.
    pub fn is_latent_free(&self) -> bool {
        self.n_latent == 0
    }

    /// Parents of `v`.
    pub fn parents(&self, v: usize) -> NodeSet {
        self.parents[v]
    }

    /// Children of `v`.
    pub fn children(&self, v: usize) -> NodeSet {
        self.children[v]
    }

    /// Ancestors of `v`, including `v`.
    pub fn ancestors(&self, v: usize) -> NodeSet {
        self.ancestors[v]
    }

    /// Descendants of `v`, including `v`.
    pub fn descendants(&self, v: usize) -> NodeSet {
        self.descendants[v]
    }

    /// Union of the ancestors of every member of `s`.
    pub fn ancestors_of_set(&self, s: NodeSet) -> NodeSet {
        s.iter().fold(NodeSet::EMPTY, |a, v| a.union(self.ancestors[v]))
    }

    /// A topological order, smallest index first among ready nodes.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Checked relative lookup.
    pub fn relatives(&self, v: usize, kind: Relation) -> Result<NodeSet> {
        if v >= self.n_total() {
            return Err(Error::Index { index: v, len: self.n_total() });
        }
        Ok(match kind {
            Relation::Parents => self.parents[v],
            Relation::Children => self.children[v],
            Relation::Ancestors => self.ancestors[v],
            Relation::Descendants => self.descendants[v],
        })
    }

    /// Edges as sorted `(source, target)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = (0..self.n_total()).flat_map(|v| self.parents[v].iter().map(move |u| (u, v))).collect();
        out.sort_unstable();
        out
    }

    /// Per-node parent sets.
    pub fn parent_sets(&self) -> &[NodeSet] {
        &self.parents
    }

    /// Removes the observed nodes in `w`, re-indexing survivors in order.
    pub fn delete_observed(&self, w: NodeSet) -> Dag {
        let n = self.n_total();
        let keep: Vec<usize> = (0..n).filter(|&v| !(v < self.n_observed && w.contains(v))).collect();
        let mut index = vec![usize::MAX; n];
        for (i, &v) in keep.iter().enumerate() {
            index[v] = i;
        }
        let parents = keep
            .iter()
            .map(|&v| NodeSet::from_nodes(self.parents[v].iter().filter(|&u| index[u] != usize::MAX).map(|u| index[u])))
            .collect();
        let removed = w.inter(self.observed()).len();
        Dag::from_parents(self.n_observed - removed, self.n_latent, parents).expect("deletion preserves acyclicity")
    }
}

/// Applies the exogenization of latent `lam`: its parents gain edges to its
/// children and the edges into `lam` are removed.
pub fn exogenize(g: &Dag, lam: usize) -> Result<Dag> {
    if lam >= g.n_total() {
        return Err(Error::Index { index: lam, len: g.n_total() });
    }
    if lam < g.n_observed {
        return Err(Error::NotLatent(lam));
    }
    let mut parents = g.parents.clone();
    let pa = parents[lam];
    for c in g.children[lam].iter() {
        parents[c] = parents[c].union(pa);
    }
    parents[lam] = NodeSet::EMPTY;
    Dag::from_parents(g.n_observed, g.n_latent, parents)
}

/// Reduces a latent-permitting DAG to its mDAG.
pub fn to_mdag(g: &Dag) -> MDag {
    let mut cur = g.clone();
    let order: Vec<usize> = g.topo.iter().copied().filter(|&v| v >= g.n_observed).collect();
    for lam in order {
        cur = exogenize(&cur, lam).expect("latent index is valid");
    }
    let obs = g.observed();
    let parents = (0..g.n_observed).map(|v| cur.parents[v].inter(obs)).collect();
    let facets = (g.n_observed..g.n_total()).map(|l| cur.children[l].inter(obs)).collect();
    MDag::from_masks(g.n_observed, parents, facets).expect("reduction of a valid DAG is a valid mDAG")
}

/// Drops sets of size < 2 and non-maximal sets; sorts and deduplicates.
pub fn normalize_facets(mut facets: Vec<NodeSet>) -> Vec<NodeSet> {
    facets.retain(|f| f.len() >= 2);
    facets.sort_unstable();
    facets.dedup();
    let all = facets.clone();
    facets.retain(|&f| !all.iter().any(|&g| g != f && f.is_subset(g)));
    facets
}

/// Observed DAG plus an antichain of latent facets.
#[derive(Clone, Debug)]
pub struct MDag {
    n: usize,
    parents: Vec<NodeSet>,
    facets: Vec<NodeSet>,
    dag: Dag,
}

impl PartialEq for MDag {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n && self.parents == o.parents && self.facets == o.facets
    }
}

impl Eq for MDag {}

impl std::hash::Hash for MDag {
    fn hash<H: std::hash::Hasher>(&self, h: &mut H) {
        self.n.hash(h);
        self.parents.hash(h);
        self.facets.hash(h);
    }
}

impl MDag {
    /// Builds an mDAG from an edge list and facet lists; facets are normalized.
    pub fn new(n: usize, edges: &[(usize, usize)], facets: &[Vec<usize>]) -> Result<MDag> {
        if n > MAX_OBSERVED {
            return Err(Error::Range { what: "observed nodes", value: n, range: "0..=6" });
        }
        let mut parents = vec![NodeSet::EMPTY; n];
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::Index { index: x, len: n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            parents[v] = parents[v].with(u);
        }
        let mut masks = Vec::with_capacity(facets.len());
        for f in facets {
            for &x in f {
                if x >= n {
                    return Err(Error::Index { index: x, len: n });
                }
            }
            masks.push(NodeSet::from_nodes(f.iter().copied()));
        }
        MDag::from_masks(n, parents, masks)
    }

    /// A latent-free mDAG.
    pub fn latent_free(n: usize, edges: &[(usize, usize)]) -> Result<MDag> {
        MDag::new(n, edges, &[])
    }

    /// Builds an mDAG from parent masks and facet masks; facets are normalized.
    pub fn from_masks(n: usize, parents: Vec<NodeSet>, facets: Vec<NodeSet>) -> Result<MDag> {
        if n > MAX_OBSERVED {
            return Err(Error::Range { what: "observed nodes", value: n, range: "0..=6" });
        }
        let all = NodeSet::full(n);
        for f in &facets {
            if !f.is_subset(all) {
                let bad = f.minus(all).iter().next().unwrap_or(n);
                return Err(Error::Index { index: bad, len: n });
            }
        }
        let facets = normalize_facets(facets);
        let mut full_parents = parents.clone();
        full_parents.resize(n + facets.len(), NodeSet::EMPTY);
        for (i, f) in facets.iter().enumerate() {
            for v in f.iter() {
                full_parents[v] = full_parents[v].with(n + i);
            }
        }
        let dag = Dag::from_parents(n, facets.len(), full_parents)?;
        Ok(MDag { n, parents, facets, dag })
    }

    /// Number of observed nodes.
    pub fn n_observed(&self) -> usize {
        self.n
    }

    /// All observed nodes.
    pub fn observed(&self) -> NodeSet {
        NodeSet::full(self.n)
    }

    /// Observed parents of `v`.
    pub fn parents(&self, v: usize) -> NodeSet {
        self.parents[v]
    }

    /// Per-node observed parent sets.
    pub fn parent_sets(&self) -> &[NodeSet] {
        &self.parents
    }

    /// The facets in canonical order.
    pub fn facets(&self) -> &[NodeSet] {
        &self.facets
    }

    /// Whether there are no facets.
    pub fn is_latent_free(&self) -> bool {
        self.facets.is_empty()
    }

    /// Whether `u -> v` is an edge.
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.parents[v].contains(u)
    }

    /// Directed edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = (0..self.n).flat_map(|v| self.parents[v].iter().map(move |u| (u, v))).collect();
        out.sort_unstable();
        out
    }

    /// The DAG with one latent node per facet, indexed after the observed nodes.
    pub fn as_dag(&self) -> &Dag {
        &self.dag
    }

    /// Owned copy of [`MDag::as_dag`].
    pub fn embed(&self) -> Dag {
        self.dag.clone()
    }

    /// Whether `a` and `b` share an edge or a facet.
    pub fn adjacent(&self, a: usize, b: usize) -> Result<bool> {
        for x in [a, b] {
            if x >= self.n {
                return Err(Error::Index { index: x, len: self.n });
            }
        }
        Ok(self.adjacent_unchecked(a, b))
    }

    pub(crate) fn adjacent_unchecked(&self, a: usize, b: usize) -> bool {
        let pair = NodeSet::singleton(a).with(b);
        self.parents[a].contains(b) || self.parents[b].contains(a) || self.facets.iter().any(|f| pair.is_subset(*f))
    }

    /// Removes observed nodes in `w`, shrinking and re-normalizing facets.
    pub fn delete_observed(&self, w: NodeSet) -> MDag {
        let keep: Vec<usize> = (0..self.n).filter(|&v| !w.contains(v)).collect();
        let mut index = [usize::MAX; 32];
        for (i, &v) in keep.iter().enumerate() {
            index[v] = i;
        }
        let remap = |s: NodeSet| NodeSet::from_nodes(s.iter().filter(|&u| index[u] != usize::MAX).map(|u| index[u]));
        let parents = keep.iter().map(|&v| remap(self.parents[v])).collect();
        let facets = self.facets.iter().map(|&f| remap(f)).collect();
        MDag::from_masks(keep.len(), parents, facets).expect("deletion preserves validity")
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> MDag {
        let map = |s: NodeSet| NodeSet::from_nodes(s.iter().map(|u| perm[u]));
        let mut parents = vec![NodeSet::EMPTY; self.n];
        for v in 0..self.n {
            parents[perm[v]] = map(self.parents[v]);
        }
        let facets = self.facets.iter().map(|&f| map(f)).collect();
        MDag::from_masks(self.n, parents, facets).expect("relabeling preserves validity")
    }

    /// Edge bitmask: bit `u * n + v` is set for `u -> v`.
    pub fn edge_bits(&self) -> u64 {
        let mut bits = 0u64;
        for v in 0..self.n {
            for u in self.parents[v].iter() {
                bits |= 1 << (u * self.n + v);
            }
        }
        bits
    }

    /// Facet family bitmask: bit `F` is set for each facet mask `F`.
    pub fn family_bits(&self) -> u64 {
        self.facets.iter().fold(0u64, |b, f| b | 1 << f.0)
    }

    /// Rebuilds an mDAG from [`MDag::edge_bits`] and [`MDag::family_bits`].
    pub fn from_bits(n: usize, edges: u64, family: u64) -> Result<MDag> {
        if n > MAX_OBSERVED {
            return Err(Error::Range { what: "observed nodes", value: n, range: "0..=6" });
        }
        let mut parents = vec![NodeSet::EMPTY; n];
        let mut e = edges;
        while e != 0 {
            let b = e.trailing_zeros() as usize;
            e &= e - 1;
            let (u, v) = (b / n.max(1), b % n.max(1));
            if u >= n || u == v {
                return Err(Error::Parse(format!("invalid edge bit {b}")));
            }
            parents[v] = parents[v].with(u);
        }
        let mut facets = Vec::new();
        let mut f = family;
        while f != 0 {
            let b = f.trailing_zeros();
            f &= f - 1;
            facets.push(NodeSet(b));
        }
        let m = MDag::from_masks(n, parents, facets)?;
        if m.family_bits() != family {
            return Err(Error::Parse("facet family is not a normalized antichain".into()));
        }
        Ok(m)
    }
}

/// Identifies an mDAG up to relabeling of its observed nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalCode {
    n: u8,
    edges: u64,
    family: u64,
}

impl CanonicalCode {
    /// Node count.
    pub fn n(&self) -> usize {
        self.n as usize
    }

    /// 17-byte big-endian encoding `n ‖ edges ‖ family`.
    pub fn to_bytes(&self) -> [u8; 17] {
        let mut out = [0u8; 17];
        out[0] = self.n;
        out[1..9].copy_from_slice(&self.edges.to_be_bytes());
        out[9..17].copy_from_slice(&self.family.to_be_bytes());
        out
    }

    /// The canonical representative this code names.
    pub fn decode(&self) -> Result<MDag> {
        MDag::from_bits(self.n as usize, self.edges, self.family)
    }
}

impl fmt::Display for CanonicalCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:016x}-{:016x}", self.n, self.edges, self.family)
    }
}

impl FromStr for CanonicalCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed canonical code {s:?}"));
        let mut it = s.split('-');
        let n: u8 = it.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        let edges = it.next().and_then(|x| u64::from_str_radix(x, 16).ok()).ok_or_else(bad)?;
        let family = it.next().and_then(|x| u64::from_str_radix(x, 16).ok()).ok_or_else(bad)?;
        if it.next().is_some() {
            return Err(bad());
        }
        Ok(CanonicalCode { n, edges, family })
    }
}

impl Serialize for CanonicalCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanonicalCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

struct PermTable {
    perms: Vec<Vec<usize>>,
    subset_maps: Vec<Vec<u32>>,
}

fn perm_tables() -> &'static [PermTable] {
    static TABLES: OnceLock<Vec<PermTable>> = OnceLock::new();
    TABLES.get_or_init(|| {
        (0..=MAX_OBSERVED)
            .map(|n| {
                let perms = all_permutations(n);
                let subset_maps = perms
                    .iter()
                    .map(|p| (0u32..1 << n).map(|m| NodeSet(m).iter().fold(0u32, |a, v| a | 1 << p[v])).collect())
                    .collect();
                PermTable { perms, subset_maps }
            })
            .collect()
    })
}

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

fn permute_bits(n: usize, edges: u64, family: u64, perm: &[usize], submap: &[u32]) -> (u64, u64) {
    let mut e = edges;
    let mut pe = 0u64;
    while e != 0 {
        let b = e.trailing_zeros() as usize;
        e &= e - 1;
        pe |= 1 << (perm[b / n] * n + perm[b % n]);
    }
    let mut f = family;
    let mut pf = 0u64;
    while f != 0 {
        let b = f.trailing_zeros() as usize;
        f &= f - 1;
        pf |= 1 << submap[b];
    }
    (pe, pf)
}

/// Canonical code together with a permutation mapping `m` onto the representative.
pub fn canonical_form_with_perm(m: &MDag) -> (CanonicalCode, Vec<usize>) {
    let n = m.n_observed();
    let (code, i) = canonical_bits(n, m.edge_bits(), m.family_bits());
    (code, perm_tables()[n].perms[i].clone())
}

/// Canonical code of the mDAG with the given edge and family bits, plus the
/// index of the minimizing permutation.
pub(crate) fn canonical_bits(n: usize, edges: u64, family: u64) -> (CanonicalCode, usize) {
    let table = &perm_tables()[n];
    let mut best = (u64::MAX, u64::MAX);
    let mut best_perm = 0;
    for (i, p) in table.perms.iter().enumerate() {
        let cand = permute_bits(n, edges, family, p, &table.subset_maps[i]);
        if cand < best {
            best = cand;
            best_perm = i;
        }
    }
    (CanonicalCode { n: n as u8, edges: best.0, family: best.1 }, best_perm)
}

/// Canonical code of `m`, minimized over all relabelings.
pub fn canonical_form(m: &MDag) -> CanonicalCode {
    canonical_form_with_perm(m).0
}

/// Node permutations mapping `m` onto itself.
pub fn automorphisms(m: &MDag) -> Vec<Vec<usize>> {
    let n = m.n_observed();
    let table = &perm_tables()[n];
    let key = (m.edge_bits(), m.family_bits());
    table
        .perms
        .iter()
        .enumerate()
        .filter(|(i, p)| permute_bits(n, key.0, key.1, p, &table.subset_maps[*i]) == key)
        .map(|(_, p)| p.clone())
        .collect()
}

#[derive(Serialize, Deserialize)]
struct MDagJson {
    n: usize,
    edges: Vec<[usize; 2]>,
    facets: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct DagJson {
    n_obs: usize,
    n_lat: usize,
    edges: Vec<[usize; 2]>,
}

impl Serialize for MDag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MDagJson {
            n: self.n,
            edges: self.edges().into_iter().map(|(u, v)| [u, v]).collect(),
            facets: self.facets.iter().map(|f| f.iter().collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MDag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MDagJson::deserialize(d)?;
        let edges: Vec<_> = j.edges.iter().map(|e| (e[0], e[1])).collect();
        MDag::new(j.n, &edges, &j.facets).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Dag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DagJson {
            n_obs: self.n_observed,
            n_lat: self.n_latent,
            edges: self.edges().into_iter().map(|(u, v)| [u, v]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = DagJson::deserialize(d)?;
        let edges: Vec<_> = j.edges.iter().map(|e| (e[0], e[1])).collect();
        Dag::new(j.n_obs, j.n_lat, &edges).map_err(serde::de::Error::custom)
    }
}

/// Parses either graph JSON form; a DAG with explicit latents is reduced to its mDAG.
pub fn parse_graph(text: &str) -> Result<MDag> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("n_obs").is_some() {
        let dag: Dag = serde_json::from_value(value)?;
        Ok(to_mdag(&dag))
    } else {
        Ok(serde_json::from_value(value)?)
    }
}
