//! Supports: trivial incompatibility, compatibility solving, the latent-free
//! witness distribution and the rapid supports test.

mod sat;
pub mod solver;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{all_permutations, automorphisms, MDag, NodeSet};
use crate::separation::{set_relations, AsDag, SetRelation};

pub use solver::{solve, Compatibility, Engine, Model, ResponseEntry, SolverConfig};

/// A cardinality vector plus the events of nonzero probability.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Support {
    pub cards: Vec<u8>,
    pub events: Vec<Vec<u8>>,
}

#[derive(Deserialize)]
struct SupportJson {
    cards: Vec<u8>,
    events: Vec<Vec<u8>>,
}

impl<'de> Deserialize<'de> for Support {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SupportJson::deserialize(d)?;
        Support::new(j.cards, j.events).map_err(serde::de::Error::custom)
    }
}

impl Support {
    /// Validates, sorts and deduplicates.
    pub fn new(cards: Vec<u8>, mut events: Vec<Vec<u8>>) -> Result<Support> {
        if events.is_empty() {
            return Err(Error::Precondition("support must be nonempty".into()));
        }
        if cards.contains(&0) {
            return Err(Error::Precondition("cardinalities must be positive".into()));
        }
        for e in &events {
            if e.len() != cards.len() {
                return Err(Error::Arity { found: e.len(), expected: cards.len() });
            }
            if e.iter().zip(&cards).any(|(&x, &c)| x >= c) {
                return Err(Error::Precondition(format!("event {e:?} exceeds cardinalities {cards:?}")));
            }
        }
        events.sort();
        events.dedup();
        Ok(Support { cards, events })
    }

    /// Parses compact event strings such as `"0110"`.
    pub fn from_strs(cards: &[u8], events: &[&str]) -> Result<Support> {
        let evs = events
            .iter()
            .map(|s| {
                s.chars()
                    .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| Error::Parse(format!("bad event {s:?}"))))
                    .collect()
            })
            .collect::<Result<Vec<Vec<u8>>>>()?;
        Support::new(cards.to_vec(), evs)
    }

    /// Every event of the cardinality vector.
    pub fn full(cards: &[u8]) -> Support {
        let total = cards.iter().map(|&c| c as usize).product::<usize>();
        Support::new(cards.to_vec(), (0..total).map(|i| decode_event(cards, i)).collect())
            .expect("full support is valid")
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.cards.len()
    }

    /// Number of events.
    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Always false; supports are nonempty.
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Moves variable `v` to position `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Support {
        let mut cards = vec![0; self.n()];
        for v in 0..self.n() {
            cards[perm[v]] = self.cards[v];
        }
        let events = self
            .events
            .iter()
            .map(|e| {
                let mut out = vec![0; e.len()];
                for v in 0..e.len() {
                    out[perm[v]] = e[v];
                }
                out
            })
            .collect();
        Support::new(cards, events).expect("relabeling preserves validity")
    }

    /// Bitmask over event indices (first variable most significant).
    pub fn mask(&self) -> u128 {
        self.events.iter().fold(0u128, |m, e| m | 1 << encode_event(&self.cards, e))
    }

    /// Inverse of [`Support::mask`].
    pub fn from_mask(cards: &[u8], mask: u128) -> Result<Support> {
        let events = (0..128).filter(|b| mask >> b & 1 == 1).map(|b| decode_event(cards, b)).collect();
        Support::new(cards.to_vec(), events)
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let evs: Vec<String> = self.events.iter().map(|e| e.iter().map(|d| d.to_string()).collect()).collect();
        write!(f, "{{{}}}", evs.join(","))
    }
}

fn encode_event(cards: &[u8], e: &[u8]) -> usize {
    e.iter().zip(cards).fold(0usize, |acc, (&x, &c)| acc * c as usize + x as usize)
}

fn decode_event(cards: &[u8], mut i: usize) -> Vec<u8> {
    let mut out = vec![0u8; cards.len()];
    for v in (0..cards.len()).rev() {
        out[v] = (i % cards[v] as usize) as u8;
        i /= cards[v] as usize;
    }
    out
}

/// Values a support takes on `set`, in node order.
fn project(e: &[u8], set: NodeSet) -> Vec<u8> {
    set.iter().map(|v| e[v]).collect()
}

/// A conditional-independence conflict between a support and a graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictWitness {
    pub a: NodeSet,
    pub b: NodeSet,
    pub c: NodeSet,
    /// Values on `a`, `b`, `c` in increasing node order.
    pub a_vals: Vec<u8>,
    pub b_vals: Vec<u8>,
    pub c_vals: Vec<u8>,
}

/// Searches the given relations for an event pattern the support violates.
pub fn conflict_with(s: &Support, relations: &[SetRelation]) -> Option<ConflictWitness> {
    for r in relations {
        let ac: BTreeSet<(Vec<u8>, Vec<u8>)> = s.events.iter().map(|e| (project(e, r.c), project(e, r.a))).collect();
        let bc: BTreeSet<(Vec<u8>, Vec<u8>)> = s.events.iter().map(|e| (project(e, r.c), project(e, r.b))).collect();
        let abc: HashSet<(Vec<u8>, Vec<u8>, Vec<u8>)> =
            s.events.iter().map(|e| (project(e, r.a), project(e, r.b), project(e, r.c))).collect();
        for (c1, a) in &ac {
            for (_, b) in bc.range((c1.clone(), Vec::new())..).take_while(|(c2, _)| c2 == c1) {
                if !abc.contains(&(a.clone(), b.clone(), c1.clone())) {
                    return Some(ConflictWitness {
                        a: r.a,
                        b: r.b,
                        c: r.c,
                        a_vals: a.clone(),
                        b_vals: b.clone(),
                        c_vals: c1.clone(),
                    });
                }
            }
        }
    }
    None
}

/// First conditional-independence conflict between `s` and the set-valued
/// d-separation relations of `g`.
pub fn trivially_incompatible<G: AsDag>(s: &Support, g: &G) -> Result<Option<ConflictWitness>> {
    let n = g.dag().n_observed();
    if s.n() != n {
        return Err(Error::Arity { found: s.n(), expected: n });
    }
    Ok(conflict_with(s, &set_relations(g)))
}

/// Exact probability weights over events.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalDistribution {
    pub cards: Vec<u8>,
    pub weights: BTreeMap<Vec<u8>, BigRational>,
}

impl RationalDistribution {
    /// Events with positive weight.
    pub fn support(&self) -> Vec<Vec<u8>> {
        self.weights.iter().filter(|(_, w)| **w > BigRational::zero()).map(|(e, _)| e.clone()).collect()
    }

    /// Sum of all weights.
    pub fn total(&self) -> BigRational {
        self.weights.values().fold(BigRational::zero(), |a, w| a + w)
    }

    /// Marginal probability of `vals` on `set`.
    pub fn marginal(&self, set: NodeSet, vals: &[u8]) -> BigRational {
        self.weights.iter().filter(|(e, _)| project(e, set) == vals).fold(BigRational::zero(), |a, (_, w)| a + w)
    }
}

/// Product of conditionals, each uniform over the values co-occurring in `s`
/// with the given parent values.
pub fn latent_free_support_distribution(h: &MDag, s: &Support) -> Result<RationalDistribution> {
    if !h.is_latent_free() {
        return Err(Error::Precondition("graph has latent facets".into()));
    }
    if let Some(w) = trivially_incompatible(s, h)? {
        return Err(Error::Precondition(format!("support is trivially incompatible: {w:?}")));
    }
    let n = s.n();
    let mut counts: Vec<HashMap<Vec<u8>, BTreeSet<u8>>> = vec![HashMap::new(); n];
    for e in &s.events {
        for v in 0..n {
            counts[v].entry(project(e, h.parents(v))).or_default().insert(e[v]);
        }
    }
    let total = s.cards.iter().map(|&c| c as usize).product::<usize>();
    let mut weights = BTreeMap::new();
    for i in 0..total {
        let x = decode_event(&s.cards, i);
        let mut p = BigRational::one();
        for v in 0..n {
            match counts[v].get(&project(&x, h.parents(v))) {
                Some(vals) if vals.contains(&x[v]) => p *= BigRational::new(BigInt::one(), BigInt::from(vals.len())),
                _ => {
                    p = BigRational::zero();
                    break;
                }
            }
        }
        if !p.is_zero() {
            weights.insert(x, p);
        }
    }
    let dist = RationalDistribution { cards: s.cards.clone(), weights };
    if dist.support() != s.events {
        return Err(Error::Precondition("construction did not reproduce the support".into()));
    }
    Ok(dist)
}

/// How a cardinality vector's supports are produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CardMode {
    /// Every nonempty event subset.
    Exhaustive,
    /// Built-in fixtures under every node relabeling, plus seeded random samples.
    Targeted,
}

/// One entry of a cardinality schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CardSpec {
    pub cards: Vec<u8>,
    pub mode: CardMode,
}

/// Largest cardinality product enumerated exhaustively by default.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 16;

impl CardSpec {
    /// Exhaustive when the product is within the default cap, targeted otherwise.
    pub fn auto(cards: Vec<u8>) -> Self {
        let product: usize = cards.iter().map(|&c| c as usize).product();
        let mode = if product <= DEFAULT_EXHAUSTIVE_CAP { CardMode::Exhaustive } else { CardMode::Targeted };
        CardSpec { cards, mode }
    }

    /// All-binary exhaustive spec on `n` nodes.
    pub fn binary(n: usize) -> Self {
        CardSpec { cards: vec![2; n], mode: CardMode::Exhaustive }
    }
}

impl fmt::Display for CardSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.cards {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for CardSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let cards = s
            .chars()
            .map(|c| match c.to_digit(10) {
                Some(d) if d >= 1 => Ok(d as u8),
                _ => Err(Error::Parse(format!("bad cardinality vector {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        if cards.is_empty() {
            return Err(Error::Parse("empty cardinality vector".into()));
        }
        Ok(CardSpec::auto(cards))
    }
}

impl Serialize for CardSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CardSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The cardinality-(3,2,2,2) fixture with the ternary variable first.
pub fn ternary_fixture() -> Support {
    Support::from_strs(&[3, 2, 2, 2], &["0000", "0010", "0100", "1000", "1100", "2001", "2110"])
        .expect("fixture is valid")
}

/// Built-in targeted fixtures whose cardinalities are a relabeling of `cards`.
pub fn fixtures_for(cards: &[u8]) -> Vec<Support> {
    let mut want = cards.to_vec();
    want.sort_unstable();
    [ternary_fixture()]
        .into_iter()
        .filter(|s| {
            let mut have = s.cards.clone();
            have.sort_unstable();
            have == want
        })
        .collect()
}

/// Options for [`enumerate_supports`].
#[derive(Clone, Debug, Default)]
pub struct EnumOptions {
    /// Largest cardinality product for exhaustive mode; `0` means the default.
    pub cap: usize,
    /// Node permutations (graph automorphisms) for orbit reduction; `None` disables reduction.
    pub symmetry: Option<Vec<Vec<usize>>>,
    /// Targeted mode: random supports added after the fixtures.
    pub samples: usize,
    /// Seed for the sampler.
    pub seed: u64,
}

/// Supports for one schedule entry.
///
/// Exhaustive mode orders by size then event bitmask. Targeted mode yields every
/// node relabeling of the matching fixtures (identity first, so cardinalities may
/// be any permutation of `spec.cards`), then the sampled supports.
pub fn enumerate_supports(spec: &CardSpec, opts: &EnumOptions) -> Result<Box<dyn Iterator<Item = Support> + Send>> {
    let cards = spec.cards.clone();
    let product: usize = cards.iter().map(|&c| c as usize).product();
    match spec.mode {
        CardMode::Exhaustive => {
            let cap = if opts.cap == 0 { DEFAULT_EXHAUSTIVE_CAP } else { opts.cap };
            if product > cap || product > 32 {
                return Err(Error::Cap { product, cap: cap.min(32) });
            }
            let group = opts.symmetry.as_ref().map(|auts| OrbitReducer::new(&cards, auts));
            let iter = (1..=product as u32).flat_map(move |k| masks_with_popcount(product as u32, k));
            let iter = iter.filter(move |&m| group.as_ref().is_none_or(|g| g.is_representative(m)));
            Ok(Box::new(iter.map(move |m| Support::from_mask(&cards, m as u128).expect("mask within range"))))
        }
        CardMode::Targeted => {
            let mut out: Vec<Support> = Vec::new();
            let mut seen = HashSet::new();
            for fx in fixtures_for(&cards) {
                for p in all_permutations(cards.len()) {
                    let s = fx.permuted(&p);
                    if seen.insert(s.clone()) {
                        out.push(s);
                    }
                }
            }
            if product > 128 && opts.samples > 0 {
                return Err(Error::Cap { product, cap: 128 });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            for _ in 0..opts.samples {
                let events: Vec<Vec<u8>> =
                    (0..product).filter(|_| rng.gen_bool(0.5)).map(|i| decode_event(&cards, i)).collect();
                if let Ok(s) = Support::new(cards.clone(), events) {
                    if seen.insert(s.clone()) {
                        out.push(s);
                    }
                }
            }
            Ok(Box::new(out.into_iter()))
        }
    }
}

fn masks_with_popcount(bits: u32, k: u32) -> impl Iterator<Item = u64> {
    let limit = 1u64 << bits;
    let first = (1u64 << k) - 1;
    std::iter::successors(Some(first), move |&m| {
        let c = m & m.wrapping_neg();
        let r = m + c;
        let next = (((r ^ m) >> 2) / c) | r;
        (next < limit).then_some(next)
    })
    .take_while(move |&m| m < limit)
}

/// Orbit representatives under per-variable value permutations composed with
/// cardinality-preserving node automorphisms.
struct OrbitReducer {
    tables: Vec<Vec<[u64; 256]>>,
}

impl OrbitReducer {
    fn new(cards: &[u8], automorphisms: &[Vec<usize>]) -> Self {
        let n = cards.len();
        let product: usize = cards.iter().map(|&c| c as usize).product();
        let value_perms: Vec<Vec<Vec<u8>>> = cards
            .iter()
            .map(|&c| {
                all_permutations(c as usize).into_iter().map(|p| p.into_iter().map(|x| x as u8).collect()).collect()
            })
            .collect();
        let mut elements: Vec<Vec<usize>> = Vec::new();
        for sigma in automorphisms.iter().filter(|s| (0..n).all(|v| cards[s[v]] == cards[v])) {
            let mut choice = vec![0usize; n];
            loop {
                let image: Vec<usize> = (0..product)
                    .map(|i| {
                        let e = decode_event(cards, i);
                        let mut out = vec![0u8; n];
                        for v in 0..n {
                            out[sigma[v]] = value_perms[v][choice[v]][e[v] as usize];
                        }
                        encode_event(cards, &out)
                    })
                    .collect();
                elements.push(image);
                let mut i = 0;
                while i < n {
                    choice[i] += 1;
                    if choice[i] < value_perms[i].len() {
                        break;
                    }
                    choice[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
        }
        let bytes = product.div_ceil(8);
        let tables = elements
            .iter()
            .map(|img| {
                (0..bytes)
                    .map(|b| {
                        let mut t = [0u64; 256];
                        for (byte, slot) in t.iter_mut().enumerate() {
                            for bit in 0..8 {
                                let ev = b * 8 + bit;
                                if byte >> bit & 1 == 1 && ev < product {
                                    *slot |= 1 << img[ev];
                                }
                            }
                        }
                        t
                    })
                    .collect()
            })
            .collect();
        OrbitReducer { tables }
    }

    fn image(table: &[[u64; 256]], m: u64) -> u64 {
        table.iter().enumerate().fold(0u64, |acc, (b, t)| acc | t[(m >> (8 * b)) as usize & 0xff])
    }

    fn is_representative(&self, m: u64) -> bool {
        self.tables.iter().all(|t| Self::image(t, m) >= m)
    }
}

/// Progress of [`rapid_supports_test`] when it stops early.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportProgress {
    /// Schedule entries fully searched.
    pub completed: Vec<CardSpec>,
    /// Supports examined in the entry that was interrupted.
    pub examined: u64,
}

/// Settings for the rapid supports test.
#[derive(Clone, Debug, Default)]
pub struct RapidOptions {
    pub deadline: Option<Instant>,
    pub samples: usize,
    pub seed: u64,
    /// Examine supports in parallel batches.
    pub parallel: bool,
}

/// Outcome of [`rapid_supports_test`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RapidOutcome {
    /// An incompatible, not trivially incompatible support.
    Witness { spec: CardSpec, support: Support },
    /// Every entry searched without a witness.
    Exhausted,
    /// The deadline passed.
    TimedOut(SupportProgress),
}

/// Runs the schedule in order and returns the first incompatible support that
/// is not trivially incompatible.
pub fn rapid_supports_test(g: &MDag, schedule: &[CardSpec], opts: &RapidOptions) -> Result<RapidOutcome> {
    let relations = set_relations(g);
    let auts = automorphisms(g);
    let mut completed = Vec::new();
    let cfg = SolverConfig { deadline: opts.deadline, ..Default::default() };
    for spec in schedule {
        if spec.cards.len() != g.n_observed() {
            return Err(Error::Arity { found: spec.cards.len(), expected: g.n_observed() });
        }
        let eopts = EnumOptions { cap: 0, symmetry: Some(auts.clone()), samples: opts.samples, seed: opts.seed };
        let mut iter = enumerate_supports(spec, &eopts)?.filter(|s| conflict_with(s, &relations).is_none());
        let mut examined = 0u64;
        let batch = if opts.parallel { 256 } else { 1 };
        loop {
            let chunk: Vec<Support> = iter.by_ref().take(batch).collect();
            if chunk.is_empty() {
                break;
            }
            let results: Vec<Result<Compatibility>> = if opts.parallel {
                chunk.par_iter().map(|s| solve(s, g, &cfg)).collect()
            } else {
                chunk.iter().map(|s| solve(s, g, &cfg)).collect()
            };
            for (s, r) in chunk.into_iter().zip(results) {
                match r {
                    Ok(Compatibility::Incompatible { .. }) => {
                        return Ok(RapidOutcome::Witness { spec: spec.clone(), support: s });
                    }
                    Ok(Compatibility::Compatible { .. }) => examined += 1,
                    Err(Error::Timeout { .. }) => {
                        return Ok(RapidOutcome::TimedOut(SupportProgress { completed, examined }));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        completed.push(spec.clone());
    }
    Ok(RapidOutcome::Exhausted)
}
