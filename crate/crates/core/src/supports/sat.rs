//! Propositional encoding of support compatibility, decided by CaDiCaL.
//!
//! Variables: the facet value explaining each event, which facet values are
//! used, and the output set of every node at every configuration. A layered
//! reachability encoding over the topological order forbids generating any
//! prefix outside the support.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use cadical::{Callbacks, Solver};

use crate::error::{Error, Result};
use crate::graph::MDag;

use super::solver::{Model, ResponseEntry};
use super::Support;

struct Deadline(Option<Instant>);

impl Callbacks for Deadline {
    fn terminate(&mut self) -> bool {
        self.0.is_some_and(|d| Instant::now() >= d)
    }
}

/// Outcome of one SAT run.
pub(crate) enum SatOutcome {
    Model(Model),
    Refuted { clauses: u64 },
}

struct Encoder {
    solver: Solver<Deadline>,
    next: i32,
    clauses: u64,
}

impl Encoder {
    fn var(&mut self) -> i32 {
        self.next += 1;
        self.next
    }

    fn clause(&mut self, lits: &[i32]) {
        self.clauses += 1;
        self.solver.add_clause(lits.iter().copied());
    }
}

fn tuples(dims: &[usize]) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        out = out.into_iter().flat_map(|t| (0..d as u8).map(move |x| [t.as_slice(), &[x]].concat())).collect();
    }
    out
}

fn config_key(parents: &[u8], latents: &[u8]) -> u128 {
    parents.iter().chain(latents).fold(0u128, |k, &x| k << 8 | x as u128)
}

/// Decides compatibility with every facet latent of cardinality at most `bound`.
pub(crate) fn solve_sat(
    s: &Support,
    g: &MDag,
    bound: usize,
    reverse: bool,
    deadline: Option<Instant>,
) -> Result<SatOutcome> {
    let n = g.n_observed();
    let k = g.facets().len();
    let m = s.events.len();
    let events: Vec<&Vec<u8>> = if reverse { s.events.iter().rev().collect() } else { s.events.iter().collect() };
    let order: Vec<usize> = g.as_dag().topological_order().iter().copied().filter(|&v| v < n).collect();
    let mut pos = vec![0; n];
    for (j, &v) in order.iter().enumerate() {
        pos[v] = j;
    }
    let parents: Vec<Vec<usize>> = (0..n).map(|v| g.parents(v).iter().collect()).collect();
    let facets_of: Vec<Vec<usize>> = (0..n).map(|v| (0..k).filter(|&f| g.facets()[f].contains(v)).collect()).collect();
    let cards: Vec<usize> = s.cards.iter().map(|&c| c as usize).collect();

    let mut enc = Encoder { solver: Solver::new(), next: 0, clauses: 0 };
    enc.solver.set_callbacks(Some(Deadline(deadline)));

    // Event e may use facet values below min(bound, e + 1) (restricted growth).
    let dom = |e: usize| bound.min(e + 1);
    let lam: Vec<Vec<Vec<i32>>> =
        (0..m).map(|e| (0..k).map(|_| (0..dom(e)).map(|_| enc.var()).collect()).collect()).collect();
    let used: Vec<Vec<i32>> = (0..k).map(|_| (0..bound).map(|_| enc.var()).collect()).collect();
    for e in 0..m {
        for f in 0..k {
            let vars = lam[e][f].clone();
            enc.clause(&vars);
            for a in 0..vars.len() {
                for b in a + 1..vars.len() {
                    enc.clause(&[-vars[a], -vars[b]]);
                }
                enc.clause(&[-vars[a], used[f][a]]);
                if a > 0 {
                    let mut lits = vec![-vars[a]];
                    lits.extend((0..e).filter(|&e2| dom(e2) > a - 1).map(|e2| lam[e2][f][a - 1]));
                    enc.clause(&lits);
                }
            }
        }
    }
    for uf in &used {
        for t in 1..bound {
            enc.clause(&[-uf[t], uf[t - 1]]);
        }
    }

    // Output variables for every configuration over the full value range.
    let mut outputs: Vec<HashMap<u128, Vec<i32>>> = vec![HashMap::new(); n];
    for v in 0..n {
        let pa_dims: Vec<usize> = parents[v].iter().map(|&u| cards[u]).collect();
        let lat_dims = vec![bound; facets_of[v].len()];
        for pa in tuples(&pa_dims) {
            for lat in tuples(&lat_dims) {
                let vars: Vec<i32> = (0..cards[v]).map(|_| enc.var()).collect();
                let mut lits: Vec<i32> = facets_of[v].iter().zip(&lat).map(|(&f, &t)| -used[f][t as usize]).collect();
                lits.extend(&vars);
                enc.clause(&lits);
                outputs[v].insert(config_key(&pa, &lat), vars);
            }
        }
    }

    // Coverage: each event's explanation produces its values.
    for (e, ev) in events.iter().enumerate() {
        for v in 0..n {
            let pa: Vec<u8> = parents[v].iter().map(|&u| ev[u]).collect();
            let lat_dims = vec![dom(e); facets_of[v].len()];
            for lat in tuples(&lat_dims) {
                let mut lits: Vec<i32> = facets_of[v].iter().zip(&lat).map(|(&f, &t)| -lam[e][f][t as usize]).collect();
                lits.push(outputs[v][&config_key(&pa, &lat)][ev[v] as usize]);
                enc.clause(&lits);
            }
        }
    }

    // Exclusion: layered reachability over (prefix, values of facets still needed).
    let mut prefixes = vec![HashSet::new(); n + 1];
    for ev in &s.events {
        let mut code = 0u64;
        prefixes[0].insert(0);
        for (j, &v) in order.iter().enumerate() {
            code |= (ev[v] as u64) << (8 * j);
            prefixes[j + 1].insert(code);
        }
    }
    let touches = |f: usize, range: &[usize]| range.iter().any(|&v| g.facets()[f].contains(v));
    let carried: Vec<Vec<usize>> =
        (0..=n).map(|j| (0..k).filter(|&f| touches(f, &order[..j]) && touches(f, &order[j..])).collect()).collect();
    let mut layer: HashMap<(u64, Vec<u8>), Option<i32>> = HashMap::new();
    layer.insert((0, Vec::new()), None);
    for j in 0..n {
        let v = order[j];
        let fresh: Vec<usize> = facets_of[v].iter().copied().filter(|f| !carried[j].contains(f)).collect();
        let fresh_tuples = tuples(&vec![bound; fresh.len()]);
        let mut next: HashMap<(u64, Vec<u8>), Option<i32>> = HashMap::new();
        let mut states: Vec<_> = layer.into_iter().collect();
        states.sort();
        for ((code, carried_vals), r) in states {
            let value_of = |f: usize, tf: &[u8]| -> u8 {
                match carried[j].iter().position(|&c| c == f) {
                    Some(i) => carried_vals[i],
                    None => tf[fresh.iter().position(|&c| c == f).expect("facet of v")],
                }
            };
            let pa: Vec<u8> = parents[v].iter().map(|&u| (code >> (8 * pos[u])) as u8).collect();
            for tf in &fresh_tuples {
                let lat: Vec<u8> = facets_of[v].iter().map(|&f| value_of(f, tf)).collect();
                let out = outputs[v][&config_key(&pa, &lat)].clone();
                let nxt_vals: Vec<u8> = carried[j + 1].iter().map(|&f| value_of(f, tf)).collect();
                for (val, &o) in out.iter().enumerate() {
                    let code2 = code | (val as u64) << (8 * j);
                    let mut lits: Vec<i32> = r.map(|x| -x).into_iter().collect();
                    lits.extend(fresh.iter().zip(tf).map(|(&f, &t)| -used[f][t as usize]));
                    lits.push(-o);
                    if !prefixes[j + 1].contains(&code2) {
                        enc.clause(&lits);
                    } else if j + 1 < n {
                        let key = (code2, nxt_vals.clone());
                        let r2 = match next.get(&key) {
                            Some(&x) => x.expect("non-root state"),
                            None => {
                                let x = enc.var();
                                next.insert(key, Some(x));
                                x
                            }
                        };
                        lits.push(r2);
                        enc.clause(&lits);
                    }
                }
            }
        }
        layer = next;
    }

    match enc.solver.solve() {
        None => Err(Error::Timeout { explored: enc.clauses }),
        Some(false) => Ok(SatOutcome::Refuted { clauses: enc.clauses }),
        Some(true) => {
            let val = |x: i32| enc.solver.value(x) == Some(true);
            let facet_cards: Vec<usize> = used.iter().map(|u| u.iter().take_while(|&&x| val(x)).count()).collect();
            let mut explanations = vec![Vec::new(); m];
            for (e, ev) in events.iter().enumerate() {
                let i = s.events.iter().position(|x| x == *ev).expect("event of support");
                explanations[i] =
                    (0..k).map(|f| lam[e][f].iter().position(|&x| val(x)).expect("one value") as u8).collect();
            }
            let mut responses = Vec::with_capacity(n);
            for v in 0..n {
                let pa_dims: Vec<usize> = parents[v].iter().map(|&u| cards[u]).collect();
                let lat_dims: Vec<usize> = facets_of[v].iter().map(|&f| facet_cards[f]).collect();
                let mut rows = Vec::new();
                for pa in tuples(&pa_dims) {
                    for lat in tuples(&lat_dims) {
                        let outs: Vec<u8> = outputs[v][&config_key(&pa, &lat)]
                            .iter()
                            .enumerate()
                            .filter(|(_, &x)| val(x))
                            .map(|(i, _)| i as u8)
                            .collect();
                        rows.push(ResponseEntry { parents: pa.clone(), latents: lat, outputs: outs });
                    }
                }
                responses.push(rows);
            }
            Ok(SatOutcome::Model(Model { facet_cards, explanations, responses }))
        }
    }
}
