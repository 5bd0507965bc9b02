use std::collections::{BTreeSet, HashSet};

use depwise::graph::{bfs_shortest_path, connected_pairs, EntityGraph, EntityVocab, Triple};
use depwise::{RelationLabel, NUM_LABELS};
use proptest::prelude::*;

const LETTERS: &[u8] = b"ABCDEFGHIJ";

/// Up to 14 distinct unordered letter pairs with arbitrary labels.
fn triples() -> impl Strategy<Value = Vec<Triple>> {
    prop::collection::vec((0..LETTERS.len(), 0..LETTERS.len(), 0..NUM_LABELS), 1..15).prop_map(|raw| {
        let mut seen = HashSet::new();
        raw.into_iter()
            .filter(|&(a, b, _)| a != b && seen.insert((a.min(b), a.max(b))))
            .map(|(a, b, l)| {
                Triple::new(
                    (LETTERS[a] as char).to_string(),
                    RelationLabel::ALL[l],
                    (LETTERS[b] as char).to_string(),
                )
            })
            .collect()
    })
}

/// All-pairs hop distances by Floyd-Warshall.
fn distances(g: &EntityGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.num_nodes();
    let mut dist = vec![vec![None; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = Some(0);
        for &(j, _) in g.neighbors(i) {
            row[j] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (dist[i][k], dist[k][j]) {
                    if dist[i][j].is_none_or(|d| a + b < d) {
                        dist[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn build_counts_and_symmetry(ts in triples()) {
        let g = EntityGraph::build(&ts, &EntityVocab::letters()).unwrap();
        let names: BTreeSet<&str> = ts.iter().flat_map(|t| [t.src.as_str(), t.dst.as_str()]).collect();
        prop_assert_eq!(g.num_nodes(), names.len());
        prop_assert_eq!(g.num_edges(), ts.len());
        for t in &ts {
            let (a, b) = (g.node_id(&t.src).unwrap(), g.node_id(&t.dst).unwrap());
            prop_assert_eq!(g.relation(a, b), Some(t.relation));
            prop_assert_eq!(g.relation(b, a), Some(t.relation.inverse()));
        }
        for i in 0..g.num_nodes() {
            let nbrs: Vec<&str> = g.neighbors(i).iter().map(|&(j, _)| g.name(j)).collect();
            prop_assert!(nbrs.windows(2).all(|w| w[0] < w[1]));
            for &(j, _) in g.neighbors(i) {
                prop_assert!(g.neighbors(j).iter().any(|&(k, _)| k == i));
            }
        }
    }

    #[test]
    fn bfs_matches_all_pairs_distances(ts in triples()) {
        let g = EntityGraph::build(&ts, &EntityVocab::letters()).unwrap();
        let dist = distances(&g);
        for s in 0..g.num_nodes() {
            for t in 0..g.num_nodes() {
                let p = bfs_shortest_path(&g, s, t).unwrap();
                prop_assert_eq!(p.as_ref().map(|p| p.hops()), dist[s][t]);
                if let Some(p) = p {
                    prop_assert_eq!((p.source(), p.target()), (s, t));
                    for w in p.nodes.windows(2) {
                        prop_assert!(g.relation(w[0], w[1]).is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn long_pairs_are_exactly_the_distant_ones(ts in triples()) {
        let g = EntityGraph::build(&ts, &EntityVocab::letters()).unwrap();
        let dist = distances(&g);
        let pairs: BTreeSet<(usize, usize)> = connected_pairs(&g).into_iter().collect();
        for s in 0..g.num_nodes() {
            for t in 0..g.num_nodes() {
                let far = dist[s][t].is_some_and(|d| d >= 2);
                prop_assert_eq!(pairs.contains(&(s, t)), far);
                prop_assert_eq!(pairs.contains(&(s, t)), pairs.contains(&(t, s)));
            }
        }
    }

    #[test]
    fn paths_ignore_triple_order(ts in triples(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = ts.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = EntityGraph::build(&ts, &EntityVocab::letters()).unwrap();
        let b = EntityGraph::build(&shuffled, &EntityVocab::letters()).unwrap();
        for s in 0..a.num_nodes() {
            for t in 0..a.num_nodes() {
                let names = |g: &EntityGraph, s: usize, t: usize| {
                    bfs_shortest_path(g, s, t).unwrap().map(|p| {
                        p.nodes.iter().map(|&n| g.name(n).to_string()).collect::<Vec<_>>()
                    })
                };
                let (bs, bt) = (b.node_id(a.name(s)).unwrap(), b.node_id(a.name(t)).unwrap());
                prop_assert_eq!(names(&a, s, t), names(&b, bs, bt));
            }
        }
    }
}
