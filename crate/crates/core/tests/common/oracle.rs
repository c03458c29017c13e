//! Independent brute-force oracles used to cross-check the library.

use std::collections::{BTreeMap, HashMap, HashSet};

use mdag_core::graph::{Dag, MDag, NodeSet};
use mdag_core::supports::{RationalDistribution, Support};
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Whether some simple path between `x` and `y` is open given `z`.
pub fn path_connected(g: &Dag, x: usize, y: usize, z: NodeSet) -> bool {
    let n = g.n_total();
    let edges = g.edges();
    let has = |u: usize, v: usize| edges.contains(&(u, v));
    let mut desc = vec![NodeSet::EMPTY; n];
    for (v, dv) in desc.iter_mut().enumerate() {
        let mut seen = NodeSet::singleton(v);
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for &(a, b) in &edges {
                if a == u && !seen.contains(b) {
                    seen = seen.with(b);
                    stack.push(b);
                }
            }
        }
        *dv = seen;
    }
    fn walk(
        path: &mut Vec<usize>,
        y: usize,
        ok: &dyn Fn(&[usize]) -> bool,
        n: usize,
        adj: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        let last = *path.last().unwrap();
        if last == y {
            return ok(path);
        }
        for v in 0..n {
            if !path.contains(&v) && adj(last, v) {
                path.push(v);
                if walk(path, y, ok, n, adj) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    let open = |p: &[usize]| {
        p.windows(3).all(|w| {
            let collider = has(w[0], w[1]) && has(w[2], w[1]);
            if collider {
                !desc[w[1]].is_disjoint(z)
            } else {
                !z.contains(w[1])
            }
        })
    };
    walk(&mut vec![x], y, &open, n, &|a, b| has(a, b) || has(b, a))
}

fn topo(g: &MDag) -> Vec<usize> {
    let n = g.n_observed();
    let mut done = vec![false; n];
    let mut out = Vec::new();
    while out.len() < n {
        let v = (0..n).find(|&v| !done[v] && g.parents(v).iter().all(|u| done[u])).unwrap();
        done[v] = true;
        out.push(v);
    }
    out
}

/// Restricted-growth colorings of `m` items with at most `b` colors.
pub fn colorings(m: usize, b: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|c: Vec<u8>| {
                let top = c.iter().map(|&x| x + 1).max().unwrap_or(0) as usize;
                (0..=top.min(b - 1)).map(move |x| [c.clone(), vec![x as u8]].concat())
            })
            .collect();
    }
    out
}

type Config = (usize, Vec<u8>, Vec<u8>);

struct Instance<'a> {
    g: &'a MDag,
    order: Vec<usize>,
    facets_of: Vec<Vec<usize>>,
    cards: Vec<usize>,
    events: HashSet<Vec<u8>>,
}

impl Instance<'_> {
    /// Some completion of the undecided configurations keeps every generated
    /// event inside the support.
    fn extendable(&self, forced: &HashMap<Config, Vec<u8>>, fc: &[usize], free: &mut BTreeMap<Config, u8>) -> bool {
        let n = self.g.n_observed();
        let k = fc.len();
        let total: usize = fc.iter().product();
        for code in 0..total {
            let mut lam = vec![0u8; k];
            let mut c = code;
            for f in 0..k {
                lam[f] = (c % fc[f]) as u8;
                c /= fc[f];
            }
            let mut partial = vec![vec![0u8; n]];
            for &v in &self.order {
                let mut next = Vec::new();
                for x in &partial {
                    let pa: Vec<u8> = self.g.parents(v).iter().map(|u| x[u]).collect();
                    let lat: Vec<u8> = self.facets_of[v].iter().map(|&f| lam[f]).collect();
                    let key = (v, pa, lat);
                    let outs = match (forced.get(&key), free.get(&key)) {
                        (Some(o), _) => o.clone(),
                        (None, Some(&o)) => vec![o],
                        (None, None) => {
                            for val in 0..self.cards[v] as u8 {
                                free.insert(key.clone(), val);
                                if self.extendable(forced, fc, free) {
                                    return true;
                                }
                            }
                            free.remove(&key);
                            return false;
                        }
                    };
                    for o in outs {
                        let mut y = x.clone();
                        y[v] = o;
                        next.push(y);
                    }
                }
                partial = next;
            }
            if partial.iter().any(|e| !self.events.contains(e)) {
                return false;
            }
        }
        true
    }
}

/// Decides compatibility by trying every facet-value explanation of the events,
/// forcing the response sets it implies and searching the remaining choices.
pub fn solver_oracle(s: &Support, g: &MDag, bound: usize) -> bool {
    let n = g.n_observed();
    let k = g.facets().len();
    let inst = Instance {
        g,
        order: topo(g),
        facets_of: (0..n).map(|v| (0..k).filter(|&f| g.facets()[f].contains(v)).collect()).collect(),
        cards: s.cards.iter().map(|&c| c as usize).collect(),
        events: s.events.iter().cloned().collect(),
    };
    let per_facet = colorings(s.events.len(), bound);
    let mut idx = vec![0usize; k];
    loop {
        let cols: Vec<&Vec<u8>> = idx.iter().map(|&i| &per_facet[i]).collect();
        let fc: Vec<usize> = cols.iter().map(|c| *c.iter().max().unwrap() as usize + 1).collect();
        let mut forced: HashMap<Config, Vec<u8>> = HashMap::new();
        for (e, ev) in s.events.iter().enumerate() {
            for v in 0..n {
                let pa: Vec<u8> = g.parents(v).iter().map(|u| ev[u]).collect();
                let lat: Vec<u8> = inst.facets_of[v].iter().map(|&f| cols[f][e]).collect();
                let o = forced.entry((v, pa, lat)).or_default();
                if !o.contains(&ev[v]) {
                    o.push(ev[v]);
                }
            }
        }
        if inst.extendable(&forced, &fc, &mut BTreeMap::new()) {
            return true;
        }
        let mut i = 0;
        while i < k {
            idx[i] += 1;
            if idx[i] < per_facet.len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == k {
            return false;
        }
    }
}

pub fn binary_supports(n: usize) -> Vec<Support> {
    let cards = vec![2u8; n];
    (1u128..1 << (1 << n)).map(|m| Support::from_mask(&cards, m).unwrap()).collect()
}

/// Whether `d` equals the product of its own conditionals along `h`, checked on every event.
pub fn factorizes(h: &MDag, d: &RationalDistribution) -> bool {
    let n = h.n_observed();
    let total: usize = d.cards.iter().map(|&c| c as usize).product();
    (0..total).all(|mut i| {
        let mut x = vec![0u8; n];
        for v in (0..n).rev() {
            x[v] = (i % d.cards[v] as usize) as u8;
            i /= d.cards[v] as usize;
        }
        let pick = |set: NodeSet| set.iter().map(|u| x[u]).collect::<Vec<u8>>();
        let mut prod = BigRational::one();
        for v in 0..n {
            let pa = h.parents(v);
            let denom = d.marginal(pa, &pick(pa));
            if denom.is_zero() {
                prod = BigRational::zero();
                break;
            }
            prod *= d.marginal(pa.with(v), &pick(pa.with(v))) / denom;
        }
        d.weights.get(&x).cloned().unwrap_or_else(BigRational::zero) == prod
    })
}
