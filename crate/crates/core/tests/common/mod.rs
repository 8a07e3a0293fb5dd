//! Independent oracles and graph builders shared by the integration tests.
//! Nothing here calls into the library's own reachability or d-separation code.

#![allow(dead_code, clippy::needless_range_loop)]

use semcausal::graph::{ConditioningSet, Dag, Edge, NodeName};

/// Node names `v0`, `v1`, ... for index-based graphs.
pub fn names(n: usize) -> Vec<NodeName> {
    (0..n).map(|i| NodeName::new(format!("v{i}")).unwrap()).collect()
}

/// Builds a DAG on `v0..v{n-1}` from index pairs, keeping isolated nodes.
pub fn dag_from_pairs(n: usize, pairs: &[(usize, usize)]) -> Dag {
    let ns = names(n);
    let edges = pairs
        .iter()
        .map(|&(a, b)| Edge::new(ns[a].clone(), ns[b].clone()))
        .collect();
    Dag::new(ns, edges).unwrap()
}

/// All upper-triangular position pairs `(i, j)` with `i < j`.
pub fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Adjacency matrix of `g` indexed by position in `g.nodes()`.
pub fn adjacency(g: &Dag) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut adj = vec![vec![false; n]; n];
    for e in g.edges() {
        let s = g.index_of(&e.source).unwrap();
        let t = g.index_of(&e.target).unwrap();
        adj[s][t] = true;
    }
    adj
}

/// Warshall transitive closure; `closure[i][j]` holds when a directed path of
/// length zero or more leads from `i` to `j`.
pub fn transitive_closure(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut c = adj.to_vec();
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if c[i][k] {
                for j in 0..n {
                    if c[k][j] {
                        c[i][j] = true;
                    }
                }
            }
        }
    }
    c
}

/// d-separation by moralization: restrict to the ancestral set of
/// `{x, y} ∪ z`, marry co-parents, drop directions, delete `z`, and test
/// whether `x` can still reach `y`.
pub fn moral_dsep(adj: &[Vec<bool>], x: usize, y: usize, z: &[usize]) -> bool {
    let n = adj.len();
    let closure = transitive_closure(adj);
    let mut keep = vec![false; n];
    for v in 0..n {
        keep[v] = closure[v][x] || closure[v][y] || z.iter().any(|&w| closure[v][w]);
    }
    let mut und = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            if keep[a] && keep[b] && adj[a][b] {
                und[a][b] = true;
                und[b][a] = true;
            }
        }
    }
    for c in 0..n {
        if !keep[c] {
            continue;
        }
        let parents: Vec<usize> = (0..n).filter(|&p| keep[p] && adj[p][c]).collect();
        for &p in &parents {
            for &q in &parents {
                if p != q {
                    und[p][q] = true;
                }
            }
        }
    }
    let mut seen = vec![false; n];
    for &w in z {
        seen[w] = true;
    }
    let mut stack = vec![x];
    seen[x] = true;
    while let Some(v) = stack.pop() {
        if v == y {
            return false;
        }
        for u in 0..n {
            if und[v][u] && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    true
}

/// All subsets of `pool` with at most `max` members, as sorted index lists.
pub fn subsets_up_to(pool: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << pool.len()) {
        if mask.count_ones() as usize <= max {
            out.push(
                (0..pool.len())
                    .filter(|&i| mask >> i & 1 == 1)
                    .map(|i| pool[i])
                    .collect(),
            );
        }
    }
    out
}

pub fn conditioning(g: &Dag, z: &[usize]) -> ConditioningSet {
    ConditioningSet::new(z.iter().map(|&i| g.nodes()[i].clone())).unwrap()
}
