//! Property tests for reachability and d-separation against independent oracles.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{adjacency, conditioning, dag_from_pairs, moral_dsep, subsets_up_to, transitive_closure, upper_pairs};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semcausal::graph::{
    d_separated, d_separated_exact, descendants, find_path, generate_dag_with, DsepOracle, GraphError,
};

/// A random DAG on up to `max_n` nodes: upper-triangular edges under a
/// random relabelling so the topological order is not the name order.
fn arb_dag(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..=max_n).prop_flat_map(|n| {
        let m = n * (n - 1) / 2;
        (
            Just(n),
            proptest::collection::vec(any::<bool>(), m),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
            .prop_map(|(n, mask, perm)| {
                let pairs = upper_pairs(n)
                    .into_iter()
                    .zip(mask)
                    .filter(|(_, keep)| *keep)
                    .map(|((i, j), _)| (perm[i], perm[j]))
                    .collect();
                (n, pairs)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn find_path_matches_transitive_closure((n, pairs) in arb_dag(10)) {
        let g = dag_from_pairs(n, &pairs);
        let closure = transitive_closure(&adjacency(&g));
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(find_path(&g, &g.nodes()[a], &g.nodes()[b]).unwrap(), closure[a][b]);
            }
        }
    }

    #[test]
    fn descendants_match_transitive_closure((n, pairs) in arb_dag(9)) {
        let g = dag_from_pairs(n, &pairs);
        let closure = transitive_closure(&adjacency(&g));
        for a in 0..n {
            let d = descendants(&g, &g.nodes()[a]).unwrap();
            for b in 0..n {
                prop_assert_eq!(d.contains(&g.nodes()[b]), a != b && closure[a][b], "{} -> {}", a, b);
            }
        }
    }

    #[test]
    fn dsep_matches_moralization((n, pairs) in arb_dag(8), seed in any::<u64>()) {
        let g = dag_from_pairs(n, &pairs);
        let adj = adjacency(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let pool: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                let subsets = subsets_up_to(&pool, 3);
                let z = &subsets[rand::Rng::gen_range(&mut rng, 0..subsets.len())];
                let cz = conditioning(&g, z);
                let expected = moral_dsep(&adj, x, y, z);
                let (gx, gy) = (&g.nodes()[x], &g.nodes()[y]);
                prop_assert_eq!(d_separated_exact(&g, gx, gy, &cz).unwrap(), expected);
                prop_assert_eq!(d_separated(&g, gx, gy, &cz).unwrap(), expected);
            }
        }
    }

    #[test]
    fn dsep_is_symmetric((n, pairs) in arb_dag(9), x in 0usize..9, y in 0usize..9, zmask in 0u32..512) {
        prop_assume!(x < n && y < n && x != y);
        let g = dag_from_pairs(n, &pairs);
        let z: Vec<usize> = (0..n).filter(|&v| v != x && v != y && zmask >> v & 1 == 1).take(3).collect();
        let cz = conditioning(&g, &z);
        let (gx, gy) = (&g.nodes()[x], &g.nodes()[y]);
        prop_assert_eq!(d_separated(&g, gx, gy, &cz).unwrap(), d_separated(&g, gy, gx, &cz).unwrap());
    }

    #[test]
    fn memoized_oracle_matches_uncached((n, pairs) in arb_dag(7), capacity in 1usize..20) {
        let g = dag_from_pairs(n, &pairs);
        let oracle = DsepOracle::with_capacity(capacity);
        for _round in 0..2 {
            for x in 0..n {
                for y in 0..n {
                    if x == y {
                        continue;
                    }
                    let z: Vec<usize> = (0..n).filter(|&v| v != x && v != y).take(1).collect();
                    let cz = conditioning(&g, &z);
                    let (gx, gy) = (&g.nodes()[x], &g.nodes()[y]);
                    prop_assert_eq!(oracle.d_separated(&g, gx, gy, &cz).unwrap(), d_separated(&g, gx, gy, &cz).unwrap());
                    prop_assert!(oracle.len() <= capacity);
                }
            }
        }
    }

    #[test]
    fn generated_dags_are_acyclic_and_bounded(n in 3usize..16, rho in 0.05f64..1.5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = generate_dag_with(n, rho, &(1..=3), &mut rng).unwrap();
        prop_assert_eq!(g.node_count(), n);
        prop_assert!(g.topological_order().is_some());
        prop_assert!(g.edge_count() >= n - 1);
        let closure = transitive_closure(&adjacency(&g));
        for a in 0..n {
            for b in 0..n {
                prop_assert!(!(a != b && closure[a][b] && closure[b][a]));
            }
        }
    }
}

#[test]
fn invalid_queries_are_rejected() {
    let g = dag_from_pairs(3, &[(0, 1), (1, 2)]);
    let ns = g.nodes();
    let empty = conditioning(&g, &[]);
    assert!(matches!(
        d_separated(&g, &ns[0], &ns[0], &empty),
        Err(GraphError::InvalidQuery(_))
    ));
    let with_x = conditioning(&g, &[0]);
    assert!(matches!(
        d_separated(&g, &ns[0], &ns[2], &with_x),
        Err(GraphError::InvalidQuery(_))
    ));
}

#[test]
fn classic_patterns() {
    // chain 0 -> 1 -> 2, fork 1 <- 0 -> 2 style, collider 0 -> 1 <- 2 with descendant 3.
    let chain = dag_from_pairs(3, &[(0, 1), (1, 2)]);
    let n = chain.nodes();
    assert!(!d_separated(&chain, &n[0], &n[2], &conditioning(&chain, &[])).unwrap());
    assert!(d_separated(&chain, &n[0], &n[2], &conditioning(&chain, &[1])).unwrap());

    let fork = dag_from_pairs(3, &[(1, 0), (1, 2)]);
    let n = fork.nodes();
    assert!(!d_separated(&fork, &n[0], &n[2], &conditioning(&fork, &[])).unwrap());
    assert!(d_separated(&fork, &n[0], &n[2], &conditioning(&fork, &[1])).unwrap());

    let collider = dag_from_pairs(4, &[(0, 1), (2, 1), (1, 3)]);
    let n = collider.nodes();
    assert!(d_separated(&collider, &n[0], &n[2], &conditioning(&collider, &[])).unwrap());
    assert!(!d_separated(&collider, &n[0], &n[2], &conditioning(&collider, &[1])).unwrap());
    assert!(!d_separated(&collider, &n[0], &n[2], &conditioning(&collider, &[3])).unwrap());
}
