use depwise::graph::bfs_shortest_path;
use depwise::taskgen::{
    generate, generate_mixed, generate_stories, label_histogram, parse, read_jsonl, to_jsonl, NoiseKind, MAX_K,
};
use depwise::{oracle_compose, Error, RelationLabel, NUM_LABELS};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn noise_kind() -> impl Strategy<Value = NoiseKind> {
    prop::sample::select(NoiseKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_arguments_same_bytes(seed in any::<u64>(), k in 1..=MAX_K, noise in noise_kind()) {
        let a = to_jsonl(&generate(seed, k, noise, 12).unwrap()).unwrap();
        let b = to_jsonl(&generate(seed, k, noise, 12).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hop_count_and_gold_follow_the_chain(seed in any::<u64>(), k in 1..=MAX_K, noise in noise_kind()) {
        for story in generate_stories(seed, &[k], noise, 9).unwrap() {
            let inst = &story.instance;
            let g = inst.graph().unwrap();
            let (s, t) = (g.node_id(&inst.question.source).unwrap(), g.node_id(&inst.question.target).unwrap());
            prop_assert_eq!(bfs_shortest_path(&g, s, t).unwrap().unwrap().hops(), k);
            let labels: Vec<RelationLabel> = story
                .chain
                .windows(2)
                .map(|w| g.relation(g.node_id(&w[0]).unwrap(), g.node_id(&w[1]).unwrap()).unwrap())
                .collect();
            prop_assert_eq!(story.chain.len(), k + 1);
            prop_assert_eq!(oracle_compose(&labels).unwrap(), inst.gold);
            prop_assert!(inst.validate().is_ok());
        }
    }

    #[test]
    fn text_round_trips(seed in any::<u64>(), k in 1..=MAX_K, noise in noise_kind()) {
        for inst in generate(seed, k, noise, 4).unwrap() {
            let parsed = parse(&inst.render()).unwrap();
            prop_assert_eq!(&parsed.triples, &inst.triples);
            prop_assert_eq!(parsed.question.as_ref(), Some(&inst.question));
        }
    }

    #[test]
    fn sentence_order_does_not_change_the_graph(seed in any::<u64>(), k in 2..=MAX_K) {
        let inst = generate(seed, k, NoiseKind::Supporting, 1).unwrap().remove(0);
        let mut sentences = inst.sentences.clone();
        sentences.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let parsed = parse(&sentences.join("\n")).unwrap();
        let mut a = parsed.triples.clone();
        let mut b = inst.triples.clone();
        a.sort_by(|x, y| (&x.src, &x.dst).cmp(&(&y.src, &y.dst)));
        b.sort_by(|x, y| (&x.src, &x.dst).cmp(&(&y.src, &y.dst)));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn labels_are_balanced_in_large_sets() {
    let data = generate_mixed(3, &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10], NoiseKind::Irrelevant, 9000).unwrap();
    assert_eq!(label_histogram(&data), [1000; NUM_LABELS]);
    for k in 1..=MAX_K {
        assert_eq!(data.iter().filter(|s| s.k == k).count(), 900);
    }
}

#[test]
fn two_lefts_make_left() {
    let text = "A is to the left of B and is on the same horizontal plane.\n\
                B is to the left of C and is on the same horizontal plane.\n\
                What is the relation of the agent A to the agent C?";
    let parsed = parse(text).unwrap();
    let labels: Vec<RelationLabel> = parsed.triples.iter().map(|t| t.relation).collect();
    assert_eq!(oracle_compose(&labels).unwrap(), RelationLabel::Left);
}

#[test]
fn out_of_range_hops_are_rejected() {
    assert!(matches!(generate(0, 0, NoiseKind::None, 1), Err(Error::Argument(_))));
    assert!(matches!(
        generate(0, MAX_K + 1, NoiseKind::None, 1),
        Err(Error::Argument(_))
    ));
}

#[test]
fn jsonl_round_trip_keeps_everything() {
    let data = generate_mixed(8, &[1, 5, 10], NoiseKind::Disconnected, 30).unwrap();
    let back = read_jsonl(to_jsonl(&data).unwrap().as_bytes()).unwrap();
    assert_eq!(back, data);
}
