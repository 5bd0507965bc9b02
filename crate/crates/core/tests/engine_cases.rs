use depwise::engine::{
    aggregate, collect_long_dependencies, init_memories, run_engine, AggregatorKind, CollectionSemantics, EngineConfig,
    ExactStages,
};
use depwise::graph::{EntityGraph, EntityVocab, Triple};
use depwise::model::{ExactModel, Model, ModelParams, Predictor};
use depwise::taskgen::{generate, NoiseKind, Question};
use depwise::RelationLabel::{self, *};
use depwise_autodiff::{Tape, Var};

const D: usize = 32;

fn t(a: &str, r: RelationLabel, b: &str) -> Triple {
    Triple::new(a, r, b)
}

fn q(a: &str, b: &str) -> Question {
    Question {
        source: a.into(),
        target: b.into(),
    }
}

fn one_hot(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; D];
    v[i] = 1.0;
    v
}

/// Exact-mode inputs: one-hot node roles and the offset edge table.
fn exact_inputs(tape: &mut Tape<'_>, g: &EntityGraph) -> (Vec<Var>, Vec<Var>) {
    let exact = ExactModel::default();
    let nodes = (0..g.num_nodes())
        .map(|i| tape.constant_vector(one_hot(g.embed_row(i))).unwrap())
        .collect();
    let table = RelationLabel::ALL
        .iter()
        .map(|&l| tape.constant_vector(exact.offset_filler(l)).unwrap())
        .collect();
    (nodes, table)
}

fn graph(triples: &[Triple]) -> EntityGraph {
    EntityGraph::build(triples, &EntityVocab::letters()).unwrap()
}

#[test]
fn chain_memory_holds_each_neighbor_offset() {
    let g = graph(&[t("A", Left, "B"), t("B", Left, "C")]);
    let mut tape = Tape::new();
    let (nodes, table) = exact_inputs(&mut tape, &g);
    let mems = init_memories(&mut tape, &g, &ExactStages::new(D), &nodes, &table).unwrap();
    let b = g.node_id("B").unwrap();
    for (other, dx) in [("A", 1.0), ("C", -1.0)] {
        let key = nodes[g.node_id(other).unwrap()];
        let f = tape.matvec(mems[b], key).unwrap();
        let mut want = vec![0.0; D];
        want[0] = dx;
        assert_eq!(tape.value(f), want, "B relative to {other}");
    }
}

#[test]
fn adjacent_only_graph_leaves_memories_unchanged() {
    let g = graph(&[t("A", Above, "B")]);
    let mut tape = Tape::new();
    let (nodes, table) = exact_inputs(&mut tape, &g);
    let stages = ExactStages::new(D);
    let mems = init_memories(&mut tape, &g, &stages, &nodes, &table).unwrap();
    for sem in [CollectionSemantics::Snapshot, CollectionSemantics::Progressive] {
        let c = collect_long_dependencies(&mut tape, &g, &stages, &nodes, &mems, sem).unwrap();
        assert!(c.pairs.is_empty());
        for (a, b) in c.memories.iter().zip(&mems) {
            assert_eq!(tape.value(*a), tape.value(*b));
        }
    }
}

#[test]
fn empty_graph_gives_empty_outputs() {
    let g = graph(&[]);
    let mut tape = Tape::new();
    let (nodes, table) = exact_inputs(&mut tape, &g);
    let key = tape.constant_vector(one_hot(0)).unwrap();
    let out = run_engine(
        &mut tape,
        &g,
        &ExactStages::new(D),
        &nodes,
        &table,
        key,
        CollectionSemantics::Snapshot,
    )
    .unwrap();
    assert!(out.initial_memories.is_empty());
    assert!(out.memories().is_empty());
    assert!(out.retrieval.fillers.is_empty());
}

#[test]
fn unrelated_key_retrieves_nothing() {
    let g = graph(&[t("A", Left, "B"), t("B", Above, "C"), t("C", Right, "D")]);
    let mut tape = Tape::new();
    let (nodes, table) = exact_inputs(&mut tape, &g);
    // row 25 is `Z`, absent from the story
    let key = tape.constant_vector(one_hot(25)).unwrap();
    let out = run_engine(
        &mut tape,
        &g,
        &ExactStages::new(D),
        &nodes,
        &table,
        key,
        CollectionSemantics::Snapshot,
    )
    .unwrap();
    for (i, (&f, &v)) in out.retrieval.fillers.iter().zip(&out.retrieval.updated).enumerate() {
        assert!(tape.value(f).iter().all(|&x| x == 0.0));
        assert_eq!(tape.value(v), tape.value(nodes[i]));
    }
}

#[test]
fn summed_offsets_in_grid_coordinates() {
    let exact = ExactModel::default();
    let mut tape = Tape::new();
    let fs: Vec<Var> = [Left, Left, Above]
        .iter()
        .map(|&l| tape.constant_vector(exact.offset_filler(l)).unwrap())
        .collect();
    let s = aggregate(&mut tape, AggregatorKind::SumExact, &fs).unwrap();
    assert_eq!(&tape.value(s)[..2], [-2.0, 1.0]);
    assert!(tape.value(s)[2..].iter().all(|&x| x == 0.0));
}

fn hub_story() -> Vec<Triple> {
    vec![
        t("C", Right, "Y"),
        t("K", LowerLeft, "C"),
        t("E", Above, "Y"),
        t("Y", Left, "X"),
    ]
}

#[test]
fn hub_story_answered_through_the_chain() {
    let trace = ExactModel::default().run(&hub_story(), &q("K", "E")).unwrap();
    // K-C-Y-E is the only route, so three hops
    assert_eq!(trace.path.as_deref().unwrap(), ["K", "C", "Y", "E"]);
    assert_eq!(trace.hop_fillers.len(), 3);
    assert_eq!(trace.predicted, Below);
    assert_eq!(&trace.retrieved[..2], [0.0, -2.0]);
}

fn chain() -> Vec<Triple> {
    vec![t("A", Left, "B"), t("B", Left, "C")]
}

fn retrieved(triples: &[Triple]) -> Vec<u64> {
    let trace = ExactModel::default().run(triples, &q("A", "C")).unwrap();
    assert_eq!(trace.predicted, Left);
    trace.retrieved.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn noise_does_not_move_the_answer() {
    let clean = retrieved(&chain());
    let with = |extra: &[Triple]| {
        let mut ts = chain();
        ts.extend_from_slice(extra);
        retrieved(&ts)
    };
    // disconnected pair
    assert_eq!(with(&[t("X", Above, "Y")]), clean);
    // branch hanging off B
    assert_eq!(with(&[t("D", Above, "B"), t("F", Right, "D")]), clean);
    // longer consistent detour A-D-E-C
    assert_eq!(
        with(&[t("A", Below, "D"), t("D", Left, "E"), t("E", UpperLeft, "C")]),
        clean
    );
}

#[test]
fn disconnected_members_read_as_zero() {
    let mut ts = chain();
    ts.push(t("X", Above, "Y"));
    let exact = ExactModel::default();
    for key in ["X", "Y"] {
        let f = exact.retrieve_with_key(&ts, &q("A", "C"), key).unwrap();
        assert!(f.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn question_across_components_has_no_path() {
    let mut ts = chain();
    ts.push(t("X", Above, "Y"));
    let trace = ExactModel::default().run(&ts, &q("A", "X")).unwrap();
    assert!(trace.path.is_none());
    assert!(trace.retrieved.iter().all(|&x| x == 0.0));
}

#[test]
fn one_configuration_serves_every_depth() {
    for sem in [CollectionSemantics::Snapshot, CollectionSemantics::Progressive] {
        let exact = ExactModel { d: D, semantics: sem };
        for k in [2, 10] {
            for inst in generate(40 + k as u64, k, NoiseKind::None, 27).unwrap() {
                assert_eq!(exact.predict(&inst).unwrap(), inst.gold, "k={k} {sem:?}");
            }
        }
    }
    let learned = ModelParams::init(EngineConfig::new(8, AggregatorKind::RecurrentGated), 0).unwrap();
    for k in [2, 10] {
        let inst = &generate(7, k, NoiseKind::Supporting, 1).unwrap()[0];
        assert!(learned.logits(inst).unwrap().iter().all(|x| x.is_finite()));
    }
}

#[test]
fn engine_config_has_no_depth_setting() {
    // exhaustive destructuring fails to compile if a field is added
    let EngineConfig {
        d,
        aggregator,
        semantics,
        activation,
    } = EngineConfig::new(D, AggregatorKind::Mean);
    assert_eq!(
        (d, aggregator, semantics),
        (D, AggregatorKind::Mean, CollectionSemantics::Snapshot)
    );
    let _ = activation;
}
