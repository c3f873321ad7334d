//! Minimum mean cycle of a dense weighted digraph (Karp).
//!
//! Edge `u → v` has weight `W[u][v]`; `+∞` means no edge. A virtual source
//! joined to every node with weight 0 makes the table well defined on graphs
//! with several strongly connected components.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::tropical::{MinPlusMatrix, INF};

#[derive(Clone, Debug)]
pub struct MeanCycle {
    /// Minimum mean edge weight.
    pub mean: f64,
    /// Nodes in order; the cycle closes from the last node back to the first.
    pub cycle: Vec<usize>,
    /// Shortest-walk potentials of the graph reweighted by `−mean`; reduced
    /// costs `W[u][v] − mean + φ(u) − φ(v)` are non-negative.
    pub potentials: Vec<f64>,
}

impl MeanCycle {
    pub fn reduced_cost(&self, w: &MinPlusMatrix, u: usize, v: usize) -> f64 {
        w.get(u, v) - self.mean + self.potentials[u] - self.potentials[v]
    }
}

/// `min_u a[u] + b[u]`, with four independent lanes so the reduction
/// vectorizes.
#[inline]
fn min_sum(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [INF; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            let s = a[4 * c + l] + b[4 * c + l];
            acc[l] = if s < acc[l] { s } else { acc[l] };
        }
    }
    let mut m = acc[0].min(acc[1]).min(acc[2].min(acc[3]));
    for u in 4 * chunks..a.len() {
        m = m.min(a[u] + b[u]);
    }
    m
}

fn argmin_sum(a: &[f64], b: &[f64]) -> usize {
    let mut best = INF;
    let mut arg = 0;
    for (u, (x, y)) in a.iter().zip(b).enumerate() {
        let s = x + y;
        if s < best {
            best = s;
            arg = u;
        }
    }
    arg
}

fn cycle_mean(w: &MinPlusMatrix, cycle: &[usize]) -> f64 {
    let len = cycle.len();
    let total: f64 = (0..len).map(|i| w.get(cycle[i], cycle[(i + 1) % len])).sum();
    total / len as f64
}

/// Returns `None` when the graph has no cycle.
pub fn min_mean_cycle(w: &MinPlusMatrix) -> Option<MeanCycle> {
    let n = w.size();
    if n == 0 {
        return None;
    }
    let wt = w.transpose();
    // d[k * n + v]: minimal weight of a k-edge walk ending at v.
    let mut d = vec![INF; (n + 1) * n];
    d[..n].fill(0.0);
    for k in 1..=n {
        let (prev, cur) = d.split_at_mut(k * n);
        let prev = &prev[(k - 1) * n..];
        for (v, slot) in cur[..n].iter_mut().enumerate() {
            *slot = min_sum(prev, wt.row(v));
        }
    }

    let mut best_mean = INF;
    let mut best_v = usize::MAX;
    for v in 0..n {
        let dn = d[n * n + v];
        if !dn.is_finite() {
            continue;
        }
        let mut worst = f64::NEG_INFINITY;
        for k in 0..n {
            let dk = d[k * n + v];
            if dk.is_finite() {
                worst = worst.max((dn - dk) / (n - k) as f64);
            }
        }
        if worst < best_mean {
            best_mean = worst;
            best_v = v;
        }
    }
    if best_v == usize::MAX {
        return None;
    }

    let mut potentials = vec![INF; n];
    for k in 0..=n {
        for (v, p) in potentials.iter_mut().enumerate() {
            let val = d[k * n + v] - k as f64 * best_mean;
            if val < *p {
                *p = val;
            }
        }
    }

    // Walk back along an optimal n-edge walk into best_v until a node repeats.
    let mut walk = vec![best_v];
    let mut seen = vec![usize::MAX; n];
    seen[best_v] = 0;
    let mut x = best_v;
    let mut found = None;
    for k in (1..=n).rev() {
        let u = argmin_sum(&d[(k - 1) * n..k * n], wt.row(x));
        walk.push(u);
        if seen[u] != usize::MAX {
            found = Some((seen[u], walk.len() - 1));
            break;
        }
        seen[u] = walk.len() - 1;
        x = u;
    }
    let scale = w
        .as_slice()
        .iter()
        .filter(|x| x.is_finite())
        .fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * scale * n as f64;
    let mut sol = MeanCycle {
        mean: best_mean,
        cycle: Vec::new(),
        potentials,
    };
    if let Some((i, j)) = found {
        // walk is reversed in time: walk[j] → walk[j-1] → … → walk[i].
        let cycle: Vec<usize> = walk[i + 1..=j].iter().rev().copied().collect();
        if (cycle_mean(w, &cycle) - best_mean).abs() <= tol {
            sol.cycle = cycle;
            return Some(sol);
        }
    }
    sol.cycle = tight_cycle(w, &sol, tol).unwrap_or_default();
    if sol.cycle.is_empty() {
        return None;
    }
    Some(sol)
}

fn tight_graph(w: &MinPlusMatrix, sol: &MeanCycle, eps: f64) -> DiGraph<(), ()> {
    let n = w.size();
    let mut g = DiGraph::<(), ()>::with_capacity(n, 0);
    for _ in 0..n {
        g.add_node(());
    }
    for u in 0..n {
        for v in 0..n {
            if w.get(u, v).is_finite() && sol.reduced_cost(w, u, v) <= eps {
                g.add_edge(NodeIndex::new(u), NodeIndex::new(v), ());
            }
        }
    }
    g
}

/// Strongly connected components of the tight graph that carry a cycle.
fn cyclic_components(g: &DiGraph<(), ()>) -> Vec<Vec<usize>> {
    tarjan_scc(g)
        .into_iter()
        .filter(|c| c.len() > 1 || g.contains_edge(c[0], c[0]))
        .map(|c| c.into_iter().map(|i| i.index()).collect())
        .collect()
}

fn tight_cycle(w: &MinPlusMatrix, sol: &MeanCycle, eps: f64) -> Option<Vec<usize>> {
    let g = tight_graph(w, sol, eps);
    let comp = cyclic_components(&g).into_iter().next()?;
    let inside: std::collections::HashSet<usize> = comp.iter().copied().collect();
    let mut pos = std::collections::HashMap::new();
    let mut path = Vec::new();
    let mut x = comp[0];
    loop {
        if let Some(&i) = pos.get(&x) {
            return Some(path[i..].to_vec());
        }
        pos.insert(x, path.len());
        path.push(x);
        x = g
            .neighbors(NodeIndex::new(x))
            .map(|y| y.index())
            .filter(|y| inside.contains(y))
            .min()?;
    }
}

/// Edges lying on cycles whose reduced cost is at most `eps` per edge, i.e.
/// edges of every cycle with mean within `eps` of the optimum.
pub fn near_optimal_edges(w: &MinPlusMatrix, sol: &MeanCycle, eps: f64) -> Vec<(usize, usize)> {
    let g = tight_graph(w, sol, eps);
    let mut comp_of = vec![usize::MAX; w.size()];
    for (ci, comp) in cyclic_components(&g).iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }
    let mut edges: Vec<(usize, usize)> = g
        .raw_edges()
        .iter()
        .map(|e| (e.source().index(), e.target().index()))
        .filter(|&(u, v)| comp_of[u] != usize::MAX && comp_of[u] == comp_of[v])
        .collect();
    edges.sort_unstable();
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Mean of every simple cycle, by brute force over node sequences.
    fn brute_force(w: &MinPlusMatrix) -> f64 {
        let n = w.size();
        let mut best = INF;
        fn rec(w: &MinPlusMatrix, path: &mut Vec<usize>, used: &mut Vec<bool>, best: &mut f64) {
            let n = w.size();
            let last = *path.last().unwrap();
            let first = path[0];
            if w.get(last, first).is_finite() {
                *best = best.min(cycle_mean(w, path));
            }
            for v in first + 1..n {
                if !used[v] && w.get(last, v).is_finite() {
                    used[v] = true;
                    path.push(v);
                    rec(w, path, used, best);
                    path.pop();
                    used[v] = false;
                }
            }
        }
        for s in 0..n {
            let mut used = vec![false; n];
            used[s] = true;
            rec(w, &mut vec![s], &mut used, &mut best);
        }
        best
    }

    fn random_graph(n: usize, seed: u64, density: f64) -> MinPlusMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        MinPlusMatrix::from_fn(n, |_, _| {
            if next() < density {
                (next() * 20.0 - 7.0).round() / 4.0
            } else {
                INF
            }
        })
    }

    #[test]
    fn matches_brute_force_on_small_graphs() {
        for seed in 0..40 {
            let w = random_graph(7, seed, 0.4);
            let expected = brute_force(&w);
            match min_mean_cycle(&w) {
                None => assert!(expected == INF, "seed {seed}"),
                Some(sol) => {
                    assert!((sol.mean - expected).abs() < 1e-12, "seed {seed}");
                    assert!((cycle_mean(&w, &sol.cycle) - expected).abs() < 1e-12);
                    for u in 0..7 {
                        for v in 0..7 {
                            if w.get(u, v).is_finite() {
                                assert!(sol.reduced_cost(&w, u, v) >= -1e-12);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ring_with_chord() {
        // 0→1→2→0 has mean 1; self-loop at 3 has mean 0.5; 3 is reachable.
        let mut w = MinPlusMatrix::infinite(4);
        w.set(0, 1, 1.0);
        w.set(1, 2, 1.0);
        w.set(2, 0, 1.0);
        w.set(2, 3, 5.0);
        w.set(3, 3, 0.5);
        let sol = min_mean_cycle(&w).unwrap();
        assert!((sol.mean - 0.5).abs() < 1e-15);
        assert_eq!(sol.cycle, vec![3]);
        assert_eq!(near_optimal_edges(&w, &sol, 1e-9), vec![(3, 3)]);
    }

    #[test]
    fn acyclic_graph_has_no_cycle() {
        let mut w = MinPlusMatrix::infinite(3);
        w.set(0, 1, 1.0);
        w.set(1, 2, 1.0);
        assert!(min_mean_cycle(&w).is_none());
    }

    #[test]
    fn ties_are_all_reported() {
        let mut w = MinPlusMatrix::infinite(3);
        for i in 0..3 {
            w.set(i, i, 0.0);
        }
        w.set(0, 1, 1.0);
        let sol = min_mean_cycle(&w).unwrap();
        assert_eq!(sol.mean, 0.0);
        assert_eq!(near_optimal_edges(&w, &sol, 1e-9), vec![(0, 0), (1, 1), (2, 2)]);
    }
}
