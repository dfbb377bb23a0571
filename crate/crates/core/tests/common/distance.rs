//! Exhaustive root-fixing bijection search and random config instances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slatenet::graph_config::{Graph, RootMarkPolicy, RootedConfig, TreatmentSlate};

pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

pub fn adjacent(c: &RootedConfig, u: usize, v: usize) -> bool {
    c.local_neighbors(u).contains(&v)
}

/// Exhaustive discrepancy: try every bijection of the radius-r balls that
/// fixes the root.
pub fn brute_discrepancy(a: &RootedConfig, b: &RootedConfig, r: usize, policy: RootMarkPolicy) -> f64 {
    let na = a.ball_len(r);
    let nb = b.ball_len(r);
    if na != nb {
        return 1.0;
    }
    let rest: Vec<usize> = (1..nb).collect();
    let mut best: Option<usize> = None;
    for perm in permutations(&rest) {
        let phi = |v: usize| if v == 0 { 0 } else { perm[v - 1] };
        let iso = (0..na).all(|u| (0..na).all(|v| adjacent(a, u, v) == adjacent(b, phi(u), phi(v))));
        if !iso {
            continue;
        }
        let start = if policy == RootMarkPolicy::Include { 0 } else { 1 };
        let cost = (start..na).filter(|&v| a.marks()[v] != b.marks()[phi(v)]).count();
        best = Some(best.map_or(cost, |b: usize| b.min(cost)));
    }
    match best {
        None => 1.0,
        Some(m) => {
            let denom = if policy == RootMarkPolicy::Include { na } else { na - 1 };
            if denom == 0 {
                0.0
            } else {
                m as f64 / denom as f64
            }
        }
    }
}

/// Random graph on `n` nodes with edge probability `q` and slates from a small
/// alphabet so mark collisions are common.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, q: f64, p: usize) -> (Graph, Vec<TreatmentSlate>) {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < q {
                edges.push((u, v));
            }
        }
    }
    let slates = (0..n)
        .map(|_| TreatmentSlate::from_neg_mask(p, rng.random_range(0..(1u64 << p))).unwrap())
        .collect();
    (Graph::new(n, &edges).unwrap(), slates)
}

/// Second instance: either an independent draw or a relabeled copy with a few
/// marks flipped, so isomorphic pairs are well represented.
pub fn partner(rng: &mut ChaCha8Rng, g: &Graph, s: &[TreatmentSlate], p: usize) -> (Graph, Vec<TreatmentSlate>) {
    let n = g.num_nodes();
    if rng.random::<f64>() < 0.3 {
        return random_instance(rng, n, 0.4, p);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
    let mut slates = vec![s[0].clone(); n];
    for v in 0..n {
        slates[perm[v]] = s[v].clone();
    }
    for sl in slates.iter_mut() {
        if rng.random::<f64>() < 0.3 {
            *sl = TreatmentSlate::from_neg_mask(p, rng.random_range(0..(1u64 << p))).unwrap();
        }
    }
    (Graph::new(n, &edges).unwrap(), slates)
}
