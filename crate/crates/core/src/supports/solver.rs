//! Backtracking decision procedure for support compatibility.
//!
//! A model assigns every event of the support one value per facet latent (its
//! explanation). Private noise on each observed node makes its response to a
//! configuration (observed parents plus facet values) a nonempty value set.
//! Configurations reached by some explanation must output exactly the values
//! of the events explaining them; other reachable configurations output a
//! single chosen value. The support is compatible iff some such model
//! generates no event outside the support.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MDag;

use super::sat::{solve_sat, SatOutcome};
use super::Support;

/// Decision procedure used by [`solve`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Depth-first explanation search.
    Backtrack,
    /// CaDiCaL on a propositional encoding.
    Sat,
    /// A short backtracking run to find a model, then SAT.
    #[default]
    Hybrid,
}

/// Smaller latent bounds tried by the SAT engine before the requested one;
/// a model at any bound is a model, only refutation needs the full bound.
const SAT_BOUND_LADDER: [usize; 2] = [2, 4];

/// Backtracking nodes spent by [`Engine::Hybrid`] before switching to SAT.
pub const HYBRID_PROBE_BUDGET: u64 = 20_000;

/// Tuning knobs for [`solve`].
#[derive(Clone, Debug, Default)]
pub struct SolverConfig {
    /// Decision procedure.
    pub engine: Engine,
    /// Largest facet-latent cardinality; `None` means the event count.
    pub bound: Option<usize>,
    /// Abort the backtracking search after this many nodes.
    pub node_budget: Option<u64>,
    /// Abort after this instant.
    pub deadline: Option<Instant>,
    /// Explain events in reverse order.
    pub reverse_events: bool,
    /// Try a fresh latent value before reusing existing ones.
    pub new_value_first: bool,
}

impl SolverConfig {
    /// A configuration exploring in a different order, used for re-verification.
    pub fn alternate() -> Self {
        SolverConfig { engine: Engine::Sat, reverse_events: true, new_value_first: true, ..Default::default() }
    }
}

/// Response of one node to one configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseEntry {
    /// Values of the observed parents, in increasing node order.
    pub parents: Vec<u8>,
    /// Values of the facets containing the node, in facet order.
    pub latents: Vec<u8>,
    /// Output values; several values are realized by private noise.
    pub outputs: Vec<u8>,
}

/// A model generating a support.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    /// Cardinality of each facet latent.
    pub facet_cards: Vec<usize>,
    /// Facet values explaining each support event, in support order.
    pub explanations: Vec<Vec<u8>>,
    /// Response tables per observed node; unlisted configurations are unreachable.
    pub responses: Vec<Vec<ResponseEntry>>,
}

impl Model {
    /// Private-noise cardinality each node needs.
    pub fn private_cards(&self) -> Vec<usize> {
        self.responses.iter().map(|r| r.iter().map(|e| e.outputs.len()).max().unwrap_or(1)).collect()
    }

    /// Forward simulation over every facet-value tuple and noise outcome.
    pub fn generated_events(&self, g: &MDag) -> Vec<Vec<u8>> {
        let n = g.n_observed();
        let order: Vec<usize> = g.as_dag().topological_order().iter().copied().filter(|&v| v < n).collect();
        let facets_of: Vec<Vec<usize>> =
            (0..n).map(|v| (0..g.facets().len()).filter(|&f| g.facets()[f].contains(v)).collect()).collect();
        type Table<'a> = HashMap<(Vec<u8>, Vec<u8>), &'a Vec<u8>>;
        let tables: Vec<Table> = self
            .responses
            .iter()
            .map(|r| r.iter().map(|e| ((e.parents.clone(), e.latents.clone()), &e.outputs)).collect())
            .collect();
        let mut out = HashSet::new();
        let k = self.facet_cards.len();
        let mut mu = vec![0u8; k];
        if self.facet_cards.contains(&0) {
            return Vec::new();
        }
        loop {
            let mut partial: Vec<Vec<u8>> = vec![vec![0u8; n]];
            for &v in &order {
                let mut next = Vec::new();
                for x in &partial {
                    let pa: Vec<u8> = g.parents(v).iter().map(|u| x[u]).collect();
                    let lat: Vec<u8> = facets_of[v].iter().map(|&f| mu[f]).collect();
                    let outs = tables[v].get(&(pa, lat)).map(|o| o.as_slice()).unwrap_or(&[0]);
                    for &val in outs {
                        let mut y = x.clone();
                        y[v] = val;
                        next.push(y);
                    }
                }
                partial = next;
            }
            out.extend(partial);
            let mut i = 0;
            while i < k {
                mu[i] += 1;
                if (mu[i] as usize) < self.facet_cards[i] {
                    break;
                }
                mu[i] = 0;
                i += 1;
            }
            if i == k {
                break;
            }
        }
        let mut v: Vec<_> = out.into_iter().collect();
        v.sort();
        v
    }
}

/// Outcome of [`solve`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result")]
pub enum Compatibility {
    Compatible {
        model: Model,
    },
    /// No model exists with facet cardinalities up to `bound`; `effort` counts
    /// search nodes (backtracking) or clauses (SAT).
    Incompatible {
        engine: Engine,
        bound: usize,
        effort: u64,
    },
}

impl Compatibility {
    /// Whether the outcome is `Compatible`.
    pub fn is_compatible(&self) -> bool {
        matches!(self, Compatibility::Compatible { .. })
    }
}

const UNSET: u8 = u8::MAX;

enum Probe {
    Ok,
    Violation,
    NeedChoice { node: usize, key: u128, candidates: Vec<u8> },
}

struct Search<'a> {
    n: usize,
    order: Vec<usize>,
    parents: Vec<Vec<usize>>,
    facets_of: Vec<Vec<usize>>,
    k: usize,
    /// Events in node order.
    events: Vec<Vec<u8>>,
    /// Prefix codes of support events per topological depth.
    prefixes: Vec<HashSet<u64>>,
    /// Facets touching a node at or after each depth.
    live: Vec<Vec<usize>>,
    /// Nodes whose configuration becomes fixed when facet `f` is assigned (index `f + 1`; index 0 for none).
    complete_at: Vec<Vec<usize>>,
    bound: usize,
    cfg: &'a SolverConfig,
    explored: u64,
    lam: Vec<Vec<u8>>,
    used: Vec<u8>,
    seen: Vec<HashMap<u128, u64>>,
    chosen: Vec<HashMap<u128, u8>>,
    cards: Vec<u8>,
}

impl<'a> Search<'a> {
    fn key(&self, v: usize, x: &[u8], fv: &[u8]) -> u128 {
        let mut key = 0u128;
        for &u in &self.parents[v] {
            key = key << 8 | x[u] as u128;
        }
        for &f in &self.facets_of[v] {
            key = key << 8 | fv[f] as u128;
        }
        key
    }

    fn tick(&mut self) -> Result<()> {
        self.explored += 1;
        if let Some(b) = self.cfg.node_budget {
            if self.explored > b {
                return Err(Error::Timeout { explored: self.explored });
            }
        }
        if self.explored & 0x3ff == 0 {
            if let Some(d) = self.cfg.deadline {
                if Instant::now() >= d {
                    return Err(Error::Timeout { explored: self.explored });
                }
            }
        }
        Ok(())
    }

    /// Explores every path the current partial model generates.
    fn probe(&mut self, final_phase: bool) -> Result<Probe> {
        let mut x = vec![0u8; self.n];
        let mut fv = vec![UNSET; self.k];
        let mut memo = HashSet::new();
        self.walk(0, 0, &mut x, &mut fv, final_phase, &mut memo)
    }

    fn walk(
        &mut self,
        j: usize,
        code: u64,
        x: &mut Vec<u8>,
        fv: &mut Vec<u8>,
        final_phase: bool,
        memo: &mut HashSet<(usize, u64, Vec<u8>)>,
    ) -> Result<Probe> {
        if j == self.n {
            return Ok(Probe::Ok);
        }
        let v = self.order[j];
        if let Some(&f) = self.facets_of[v].iter().find(|&&f| fv[f] == UNSET) {
            for val in 0..self.used[f] {
                fv[f] = val;
                let r = self.walk(j, code, x, fv, final_phase, memo)?;
                if !matches!(r, Probe::Ok) {
                    fv[f] = UNSET;
                    return Ok(r);
                }
            }
            fv[f] = UNSET;
            return Ok(Probe::Ok);
        }
        let state = (j, code, self.live[j].iter().map(|&f| fv[f]).collect::<Vec<u8>>());
        if memo.contains(&state) {
            return Ok(Probe::Ok);
        }
        self.tick()?;
        let key = self.key(v, x, fv);
        let outputs: u64 = match self.seen[v].get(&key) {
            Some(&m) => m,
            None => match self.chosen[v].get(&key) {
                Some(&c) => 1 << c,
                None => {
                    let candidates: Vec<u8> = (0..self.cards[v])
                        .filter(|&val| self.prefixes[j + 1].contains(&(code | (val as u64) << (8 * j))))
                        .collect();
                    if candidates.is_empty() {
                        return Ok(Probe::Violation);
                    }
                    if final_phase {
                        return Ok(Probe::NeedChoice { node: v, key, candidates });
                    }
                    memo.insert(state);
                    return Ok(Probe::Ok);
                }
            },
        };
        let mut m = outputs;
        while m != 0 {
            let val = m.trailing_zeros() as u8;
            m &= m - 1;
            let next = code | (val as u64) << (8 * j);
            if !self.prefixes[j + 1].contains(&next) {
                return Ok(Probe::Violation);
            }
            x[v] = val;
            let r = self.walk(j + 1, next, x, fv, final_phase, memo)?;
            if !matches!(r, Probe::Ok) {
                return Ok(r);
            }
        }
        memo.insert(state);
        Ok(Probe::Ok)
    }

    fn insert_configs(&mut self, e: usize, nodes: &[usize], undo: &mut Vec<(usize, u128, Option<u64>)>) {
        let fv = self.lam[e].clone();
        for &v in nodes {
            let key = self.key(v, &self.events[e], &fv);
            let bit = 1u64 << self.events[e][v];
            let prev = self.seen[v].get(&key).copied();
            if prev.is_none_or(|p| p & bit == 0) {
                undo.push((v, key, prev));
                self.seen[v].insert(key, prev.unwrap_or(0) | bit);
            }
        }
    }

    fn rollback(&mut self, undo: &mut Vec<(usize, u128, Option<u64>)>, mark: usize) {
        while undo.len() > mark {
            let (v, key, prev) = undo.pop().expect("nonempty");
            match prev {
                Some(p) => self.seen[v].insert(key, p),
                None => self.seen[v].remove(&key),
            };
        }
    }

    /// Assigns explanation variables `(event_pos, facet)` depth-first.
    fn assign(
        &mut self,
        event_order: &[usize],
        pos: usize,
        f: usize,
        undo: &mut Vec<(usize, u128, Option<u64>)>,
    ) -> Result<bool> {
        if pos == event_order.len() {
            return self.finish();
        }
        let e = event_order[pos];
        if f != 0 {
            return self.assign_facet(event_order, pos, f, undo);
        }
        let mark = undo.len();
        let nodes = self.complete_at[0].clone();
        self.insert_configs(e, &nodes, undo);
        if !nodes.is_empty() && matches!(self.probe(false)?, Probe::Violation) {
            self.rollback(undo, mark);
            return Ok(false);
        }
        let found = if self.k == 0 {
            self.assign(event_order, pos + 1, 0, undo)?
        } else {
            self.assign_facet(event_order, pos, 0, undo)?
        };
        if !found {
            self.rollback(undo, mark);
        }
        Ok(found)
    }

    fn assign_facet(
        &mut self,
        event_order: &[usize],
        pos: usize,
        f: usize,
        undo: &mut Vec<(usize, u128, Option<u64>)>,
    ) -> Result<bool> {
        let e = event_order[pos];
        let used = self.used[f];
        let fresh = (used as usize) < self.bound;
        let mut values: Vec<u8> = (0..used).collect();
        if fresh {
            if self.cfg.new_value_first {
                values.insert(0, used);
            } else {
                values.push(used);
            }
        }
        for val in values {
            self.tick()?;
            self.lam[e][f] = val;
            if val == used {
                self.used[f] += 1;
            }
            let mark = undo.len();
            let nodes = self.complete_at[f + 1].clone();
            self.insert_configs(e, &nodes, undo);
            let ok = nodes.is_empty() || !matches!(self.probe(false)?, Probe::Violation);
            let found = ok
                && if f + 1 == self.k {
                    self.assign(event_order, pos + 1, 0, undo)?
                } else {
                    self.assign_facet(event_order, pos, f + 1, undo)?
                };
            if found {
                return Ok(true);
            }
            self.rollback(undo, mark);
            if val == used {
                self.used[f] -= 1;
            }
        }
        self.lam[e][f] = UNSET;
        Ok(false)
    }

    /// Chooses outputs for reachable unexplained configurations.
    fn finish(&mut self) -> Result<bool> {
        match self.probe(true)? {
            Probe::Ok => Ok(true),
            Probe::Violation => Ok(false),
            Probe::NeedChoice { node, key, candidates } => {
                for c in candidates {
                    self.tick()?;
                    self.chosen[node].insert(key, c);
                    if self.finish()? {
                        return Ok(true);
                    }
                    self.chosen[node].remove(&key);
                }
                Ok(false)
            }
        }
    }

    fn model(&self) -> Model {
        let decode = |v: usize, key: u128| {
            let np = self.parents[v].len();
            let nf = self.facets_of[v].len();
            let mut bytes = Vec::with_capacity(np + nf);
            for i in (0..np + nf).rev() {
                bytes.push((key >> (8 * i)) as u8);
            }
            (bytes[..np].to_vec(), bytes[np..].to_vec())
        };
        let mut responses = Vec::with_capacity(self.n);
        for v in 0..self.n {
            let mut rows: Vec<ResponseEntry> = self.seen[v]
                .iter()
                .map(|(&key, &mask)| {
                    let (parents, latents) = decode(v, key);
                    let outputs = (0..64u8).filter(|b| mask >> b & 1 == 1).collect();
                    ResponseEntry { parents, latents, outputs }
                })
                .chain(self.chosen[v].iter().map(|(&key, &c)| {
                    let (parents, latents) = decode(v, key);
                    ResponseEntry { parents, latents, outputs: vec![c] }
                }))
                .collect();
            rows.sort_by(|a, b| (&a.parents, &a.latents).cmp(&(&b.parents, &b.latents)));
            responses.push(rows);
        }
        Model {
            facet_cards: self.used.iter().map(|&u| u as usize).collect(),
            explanations: self.lam.clone(),
            responses,
        }
    }
}

/// Decides whether `s` is the support of some distribution compatible with `g`.
pub fn solve(s: &Support, g: &MDag, cfg: &SolverConfig) -> Result<Compatibility> {
    let n = g.n_observed();
    if s.cards.len() != n {
        return Err(Error::Arity { found: s.cards.len(), expected: n });
    }
    if let Some(&c) = s.cards.iter().find(|&&c| c as usize > 64) {
        return Err(Error::Range { what: "cardinality", value: c as usize, range: "1..=64" });
    }
    let bound = cfg.bound.unwrap_or(s.events.len()).max(1);
    if bound > 254 {
        return Err(Error::Range { what: "latent bound", value: bound, range: "1..=254" });
    }
    let sat = |s: &Support| {
        let mut effort = 0;
        for b in SAT_BOUND_LADDER.iter().copied().filter(|&b| b < bound).chain([bound]) {
            match solve_sat(s, g, b, cfg.reverse_events, cfg.deadline)? {
                SatOutcome::Model(model) => return Ok(Compatibility::Compatible { model }),
                SatOutcome::Refuted { clauses } => effort += clauses,
            }
        }
        Ok(Compatibility::Incompatible { engine: Engine::Sat, bound, effort })
    };
    match cfg.engine {
        Engine::Backtrack => backtrack(s, g, bound, cfg),
        Engine::Sat => sat(s),
        Engine::Hybrid => {
            let budget = cfg.node_budget.map_or(HYBRID_PROBE_BUDGET, |b| b.min(HYBRID_PROBE_BUDGET));
            let probe = SolverConfig { node_budget: Some(budget), ..cfg.clone() };
            match backtrack(s, g, bound, &probe) {
                Err(Error::Timeout { .. }) if cfg.deadline.is_none_or(|d| Instant::now() < d) => sat(s),
                other => other,
            }
        }
    }
}

fn backtrack(s: &Support, g: &MDag, bound: usize, cfg: &SolverConfig) -> Result<Compatibility> {
    let n = g.n_observed();
    let k = g.facets().len();
    let order: Vec<usize> = g.as_dag().topological_order().iter().copied().filter(|&v| v < n).collect();
    let parents: Vec<Vec<usize>> = (0..n).map(|v| g.parents(v).iter().collect()).collect();
    let facets_of: Vec<Vec<usize>> = (0..n).map(|v| (0..k).filter(|&f| g.facets()[f].contains(v)).collect()).collect();
    let mut prefixes = vec![HashSet::new(); n + 1];
    for ev in &s.events {
        let mut code = 0u64;
        prefixes[0].insert(0);
        for (j, &v) in order.iter().enumerate() {
            code |= (ev[v] as u64) << (8 * j);
            prefixes[j + 1].insert(code);
        }
    }
    let live = (0..=n)
        .map(|j| {
            (0..k)
                .filter(|&f| {
                    let fs = g.facets()[f];
                    order[j..].iter().any(|&v| fs.contains(v))
                })
                .collect()
        })
        .collect();
    let mut complete_at = vec![Vec::new(); k + 1];
    for (v, fs) in facets_of.iter().enumerate() {
        let slot = fs.last().map_or(0, |&f| f + 1);
        complete_at[slot].push(v);
    }
    let mut search = Search {
        n,
        order,
        parents,
        facets_of,
        k,
        events: s.events.clone(),
        prefixes,
        live,
        complete_at,
        bound,
        cfg,
        explored: 0,
        lam: vec![vec![UNSET; k]; s.events.len()],
        used: vec![0; k],
        seen: vec![HashMap::new(); n],
        chosen: vec![HashMap::new(); n],
        cards: s.cards.clone(),
    };
    let mut event_order: Vec<usize> = (0..s.events.len()).collect();
    if cfg.reverse_events {
        event_order.reverse();
    }
    let mut undo = Vec::new();
    if search.assign(&event_order, 0, 0, &mut undo)? {
        return Ok(Compatibility::Compatible { model: search.model() });
    }
    Ok(Compatibility::Incompatible { engine: Engine::Backtrack, bound, effort: search.explored })
}
