//! Randomized property suites shared by the `prop` command and the
//! acceptance run.

use std::time::Instant;

use depwise_autodiff::opsuite::check_all_ops;
use depwise_autodiff::{finite_difference_report, GradCheckReport, ParamVars, Tape, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::BaselineModel;
use crate::engine::{
    collect_long_dependencies_in_order, init_memories, AggregatorKind, CollectionSemantics, EngineConfig, EngineWeights,
};
use crate::error::{Error, Result};
use crate::graph::{bfs_shortest_path, connected_pairs, EntityGraph, EntityVocab, NodeId, Triple};
use crate::model::{loss, loss_and_grads, ExactModel, Model, ModelParams};
use crate::relation::{RelationLabel, NUM_LABELS};
use crate::taskgen::{generate_story, parse, NoiseKind, MAX_K};
use crate::tpr::{cosine, random_unit_vector, NodeMemory, RoleBasis};

pub const SUITES: [&str; 6] = ["tpr", "grad", "noise", "snapshot", "bfs", "parser"];

#[derive(Debug, Clone)]
pub struct PropOutcome {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub secs: f64,
}

pub fn run_suite(name: &str) -> Result<Vec<PropOutcome>> {
    let checks: Vec<(&'static str, Check)> = match name {
        "tpr" => vec![
            ("orthonormal_recovery", orthonormal_recovery),
            ("worked_unbinding_case", worked_unbinding_case),
            ("crosstalk_scale", crosstalk_scale),
            ("crosstalk_sphere_expectation", crosstalk_sphere_expectation),
            ("random_role_recall", random_role_recall),
            ("store_order_free", store_order_free),
            ("retrieve_linear_in_key", retrieve_linear_in_key),
        ],
        "grad" => vec![("every_op", grad_every_op), ("full_model_d6", grad_full_model)],
        "noise" => vec![
            ("irrelevant_invariance", || noise_invariance(NoiseKind::Irrelevant, 200)),
            ("supporting_invariance", || noise_invariance(NoiseKind::Supporting, 200)),
            ("disconnected_nullity", || disconnected_nullity(200)),
        ],
        "snapshot" => vec![("pair_order_independence", || snapshot_order_independence(100))],
        "bfs" => vec![
            ("brute_force_oracle", || bfs_oracle(300)),
            ("insertion_order_tie_break", || bfs_insertion_order(200)),
        ],
        "parser" => vec![("render_parse_round_trip", || parser_round_trip(10_000))],
        other => {
            return Err(Error::Argument(format!(
                "unknown suite `{other}` (expected one of {SUITES:?})"
            )))
        }
    };
    let suite = SUITES.iter().copied().find(|s| *s == name).expect("matched above");
    let mut out = Vec::with_capacity(checks.len());
    for (check, f) in checks {
        let started = Instant::now();
        let (passed, detail) = f()?;
        out.push(PropOutcome {
            suite,
            name: check,
            passed,
            detail,
            secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

type Check = fn() -> Result<(bool, String)>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn orthonormal_recovery() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut r = rng(1);
    for d in [8, 32, 64, 128] {
        for _ in 0..10 {
            let n = r.random_range(1..=d);
            let roles = RoleBasis::one_hot(d, d)?;
            let mut idx: Vec<usize> = (0..d).collect();
            idx.shuffle(&mut r);
            let fillers: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect())
                .collect();
            let mut m = NodeMemory::zeros(d);
            for (f, &i) in fillers.iter().zip(&idx) {
                m = m.store(f, roles.role(i))?;
            }
            for (f, &i) in fillers.iter().zip(&idx) {
                worst = worst.max(max_abs_diff(&m.retrieve(roles.role(i))?, f));
            }
        }
    }
    Ok((worst <= 1e-12, format!("max abs error {worst:.3e} (bound 1e-12)")))
}

fn worked_unbinding_case() -> Result<(bool, String)> {
    // f_above ⊗ r_X + f_below ⊗ r_K unbound with r_K gives α f_below
    let d = 16;
    let mut r = rng(2);
    let f_above = random_unit_vector(d, &mut r);
    let f_below = random_unit_vector(d, &mut r);
    let roles = RoleBasis::one_hot(2, d)?;
    let t = NodeMemory::zeros(d)
        .store(&f_above, roles.role(0))?
        .store(&f_below, roles.role(1))?;
    let got = t.retrieve(roles.role(1))?;
    let err = max_abs_diff(&got, &f_below);
    let scaled = t.retrieve(&roles.role(1).iter().map(|x| 2.5 * x).collect::<Vec<_>>())?;
    let cos = cosine(&scaled, &f_below);
    let ok = err <= 1e-12 && (cos - 1.0).abs() <= 1e-12;
    Ok((
        ok,
        format!("orthonormal error {err:.3e}, cosine with scaled key {cos:.15}"),
    ))
}

fn mean_abs_inner(d: usize, samples: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut total = 0.0;
    for _ in 0..samples {
        let a = random_unit_vector(d, &mut r);
        let b = random_unit_vector(d, &mut r);
        total += a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>().abs();
    }
    total / samples as f64
}

/// `E|⟨a, b⟩|` for independent uniform unit vectors in `d` dimensions,
/// `Γ(d/2) / (√π Γ((d+1)/2))`.
pub fn sphere_mean_abs_inner(d: usize) -> f64 {
    // g(d) = Γ(d/2) / Γ((d+1)/2), g(d+2) = g(d) d / (d+1)
    let pi = std::f64::consts::PI;
    let (mut g, mut k) = if d % 2 == 1 {
        (pi.sqrt(), 1)
    } else {
        (2.0 / pi.sqrt(), 2)
    };
    while k < d {
        g *= k as f64 / (k + 1) as f64;
        k += 2;
    }
    g / pi.sqrt()
}

/// Mean |⟨r_i, r_j⟩| against 1/√d with a 20% band.
fn crosstalk_scale() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, seed) in [(64, 64), (256, 256)] {
        let m = mean_abs_inner(d, 10_000, seed);
        let ratio = m * (d as f64).sqrt();
        ok &= (ratio - 1.0).abs() <= 0.2;
        parts.push(format!("d={d}: mean {m:.5}, ratio to 1/sqrt(d) {ratio:.4}"));
    }
    Ok((ok, parts.join("; ")))
}

/// Mean |⟨r_i, r_j⟩| against its exact expectation on the sphere.
fn crosstalk_sphere_expectation() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, seed) in [(64, 64), (256, 256)] {
        let m = mean_abs_inner(d, 10_000, seed);
        let e = sphere_mean_abs_inner(d);
        ok &= (m / e - 1.0).abs() <= 0.05;
        parts.push(format!("d={d}: mean {m:.5}, expected {e:.5}"));
    }
    Ok((ok, parts.join("; ")))
}

fn random_role_recall() -> Result<(bool, String)> {
    let (d, n, trials) = (256, 8, 1000);
    let mut r = rng(3);
    let mut total = 0.0;
    for _ in 0..trials {
        let roles = RoleBasis::random_unit(n, d, &mut r)?;
        let fillers: Vec<Vec<f64>> = (0..n).map(|_| random_unit_vector(d, &mut r)).collect();
        let mut m = NodeMemory::zeros(d);
        for (i, f) in fillers.iter().enumerate() {
            m = m.store(f, roles.role(i))?;
        }
        let k = r.random_range(0..n);
        total += cosine(&m.retrieve(roles.role(k))?, &fillers[k]);
    }
    let mean = total / trials as f64;
    Ok((
        mean >= 0.9,
        format!("mean cosine {mean:.4} over {trials} trials (bound 0.9)"),
    ))
}

fn store_order_free() -> Result<(bool, String)> {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for d in [4, 64, 512] {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..16)
            .map(|_| (random_unit_vector(d, &mut r), random_unit_vector(d, &mut r)))
            .collect();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut a = NodeMemory::zeros(d);
        for &i in &order {
            a = a.store(&pairs[i].0, &pairs[i].1)?;
        }
        order.shuffle(&mut r);
        let mut b = NodeMemory::zeros(d);
        for &i in &order {
            b = b.store(&pairs[i].0, &pairs[i].1)?;
        }
        worst = worst.max(max_abs_diff(a.data(), b.data()));
    }
    Ok((worst <= 1e-12, format!("max reordering difference {worst:.3e}")))
}

fn retrieve_linear_in_key() -> Result<(bool, String)> {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = r.random_range(2..=64);
        let mut m = NodeMemory::zeros(d);
        for _ in 0..4 {
            m = m.store(&random_unit_vector(d, &mut r), &random_unit_vector(d, &mut r))?;
        }
        let (k1, k2) = (random_unit_vector(d, &mut r), random_unit_vector(d, &mut r));
        let a: f64 = r.random_range(-3.0..3.0);
        let combo: Vec<f64> = k1.iter().zip(&k2).map(|(x, y)| a * x + y).collect();
        let lhs = m.retrieve(&combo)?;
        let (r1, r2) = (m.retrieve(&k1)?, m.retrieve(&k2)?);
        let rhs: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + y).collect();
        worst = worst.max(max_abs_diff(&lhs, &rhs));
    }
    Ok((worst <= 1e-13, format!("max deviation {worst:.3e}")))
}

fn grad_every_op() -> Result<(bool, String)> {
    let checks = check_all_ops(&[2, 4, 8, 16], &[0, 1, 2, 3, 4], 1e-5, 1e-4)?;
    let worst = checks.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.report.passed)
        .map(|c| format!("{}@d{}s{}", c.op, c.d, c.seed))
        .collect();
    Ok((
        failed.is_empty(),
        format!(
            "{} checks, max rel error {worst:.3e}, failures {failed:?}",
            checks.len()
        ),
    ))
}

/// Central differences of the loss against every parameter coordinate.
pub fn model_grad_check<M: Model>(
    model: &M,
    inst: &crate::taskgen::StoryInstance,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_grads(model, inst)?;
    let analytic: Vec<f64> = grads.concat();
    let mut err = None;
    let report = finite_difference_report(&analytic, h, tol, |i, delta| {
        let mut shifted = model.clone();
        let mut offset = 0;
        shifted.visit_mut(&mut |t| {
            let n = t.numel();
            if (offset..offset + n).contains(&i) {
                t.data_mut()[i - offset] += delta;
            }
            offset += n;
        });
        match loss(&shifted, inst) {
            Ok(v) => Ok(v),
            Err(e) => {
                err = Some(e);
                Ok(f64::NAN)
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn grad_full_model() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let inst = generate_story(
            900 + seed,
            3,
            NoiseKind::Supporting,
            RelationLabel::ALL[seed as usize * 3],
        )?
        .instance;
        let model = ModelParams::init(EngineConfig::new(6, AggregatorKind::RecurrentGated), seed)?;
        let rep = model_grad_check(&model, &inst, 1e-5, 1e-4)?;
        ok &= rep.passed;
        parts.push(format!(
            "seed {seed}: {} coords, max rel {:.3e}",
            rep.analytic.len(),
            rep.max_rel_error
        ));
        let base = BaselineModel::init(6, 2, seed)?;
        let rep = model_grad_check(&base, &inst, 1e-5, 1e-4)?;
        ok &= rep.passed;
        parts.push(format!("baseline seed {seed}: max rel {:.3e}", rep.max_rel_error));
    }
    Ok((ok, parts.join("; ")))
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn noise_invariance(noise: NoiseKind, trials: usize) -> Result<(bool, String)> {
    let exact = ExactModel::default();
    let mut r = rng(6 + noise as u64);
    let mut mismatches = 0;
    for _ in 0..trials {
        let k = r.random_range(1..=MAX_K);
        let gold = RelationLabel::ALL[r.random_range(0..NUM_LABELS)];
        let story = generate_story(r.random(), k, noise, gold)?;
        let q = &story.instance.question;
        let with = exact.run(&story.instance.triples, q)?.retrieved;
        let without = exact.run(&story.clean_triples(), q)?.retrieved;
        if bits(&with) != bits(&without) {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("{mismatches}/{trials} trials changed the retrieved filler"),
    ))
}

fn disconnected_nullity(trials: usize) -> Result<(bool, String)> {
    let exact = ExactModel::default();
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let k = r.random_range(1..=MAX_K);
        let gold = RelationLabel::ALL[r.random_range(0..NUM_LABELS)];
        let story = generate_story(r.random(), k, NoiseKind::Disconnected, gold)?;
        let inst = &story.instance;
        for t in &story.noise_triples {
            for key in [&t.src, &t.dst] {
                let f = exact.retrieve_with_key(&inst.triples, &inst.question, key)?;
                worst = worst.max(f.iter().map(|x| x * x).sum::<f64>().sqrt());
            }
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max retrieved norm {worst:.3e} over {trials} trials"),
    ))
}

/// Random graph on `n` letters: a spanning tree plus a few extra edges,
/// with arbitrary labels.
fn random_graph(r: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<Triple> {
    let mut names: Vec<String> = (b'A'..=b'Z').map(|c| (c as char).to_string()).collect();
    names.shuffle(r);
    names.truncate(n);
    let label = |r: &mut ChaCha8Rng| RelationLabel::ALL[r.random_range(0..NUM_LABELS)];
    let mut triples = Vec::new();
    let mut used = std::collections::HashSet::new();
    for i in 1..n {
        let j = r.random_range(0..i);
        used.insert((j.min(i), j.max(i)));
        triples.push(Triple::new(&names[i], label(r), &names[j]));
    }
    for _ in 0..extra {
        let (a, b) = (r.random_range(0..n), r.random_range(0..n));
        if a != b && used.insert((a.min(b), a.max(b))) {
            triples.push(Triple::new(&names[a], label(r), &names[b]));
        }
    }
    triples
}

fn snapshot_order_independence(graphs: usize) -> Result<(bool, String)> {
    let mut r = rng(8);
    let d = 8;
    let weights = EngineWeights::init(EngineConfig::new(d, AggregatorKind::RecurrentGated), &mut r)?;
    let mut embed_rng = rng(9);
    let entity: Vec<Vec<f64>> = (0..26).map(|_| random_unit_vector(d, &mut embed_rng)).collect();
    let edges: Vec<Vec<f64>> = (0..NUM_LABELS).map(|_| random_unit_vector(d, &mut embed_rng)).collect();
    let mut mismatches = 0;
    let mut total_pairs = 0;
    for _ in 0..graphs {
        let n = r.random_range(3..=10);
        let extra = r.random_range(0..=4);
        let g = EntityGraph::build(&random_graph(&mut r, n, extra), &EntityVocab::letters())?;
        let mut pairs = connected_pairs(&g);
        total_pairs += pairs.len();
        let run = |pairs: &[(NodeId, NodeId)]| -> Result<Vec<Vec<u64>>> {
            let mut tape = Tape::new();
            let engine = weights.bind(&mut tape, &mut ParamVars::default());
            let nodes: Vec<Var> = (0..g.num_nodes())
                .map(|i| tape.constant_vector(entity[g.embed_row(i)].clone()))
                .collect::<std::result::Result<_, _>>()?;
            let table: Vec<Var> = edges
                .iter()
                .map(|e| tape.constant_vector(e.clone()))
                .collect::<std::result::Result<_, _>>()?;
            let mems = init_memories(&mut tape, &g, &engine, &nodes, &table)?;
            let c = collect_long_dependencies_in_order(
                &mut tape,
                &g,
                &engine,
                &nodes,
                &mems,
                CollectionSemantics::Snapshot,
                pairs,
            )?;
            Ok(c.memories.iter().map(|&m| bits(tape.value(m))).collect())
        };
        let canonical = run(&pairs)?;
        pairs.shuffle(&mut r);
        if run(&pairs)? != canonical {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("{mismatches}/{graphs} graphs differed ({total_pairs} pairs collected)"),
    ))
}

/// Every simple path from `s` to `t`, as name sequences.
fn all_simple_paths(g: &EntityGraph, s: NodeId, t: NodeId) -> Vec<Vec<String>> {
    fn go(g: &EntityGraph, cur: NodeId, t: NodeId, seen: &mut Vec<NodeId>, out: &mut Vec<Vec<String>>) {
        if cur == t {
            out.push(seen.iter().map(|&n| g.name(n).to_string()).collect());
            return;
        }
        for &(n, _) in g.neighbors(cur) {
            if !seen.contains(&n) {
                seen.push(n);
                go(g, n, t, seen, out);
                seen.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(g, s, t, &mut vec![s], &mut out);
    out
}

fn bfs_oracle(graphs: usize) -> Result<(bool, String)> {
    let mut r = rng(10);
    let mut failures = 0;
    let mut queries = 0;
    for _ in 0..graphs {
        let n = r.random_range(2..=8);
        let extra = r.random_range(0..=6);
        let mut triples = random_graph(&mut r, n, extra);
        // drop a tree edge now and then so some pairs are disconnected
        if r.random_bool(0.3) && triples.len() > 1 {
            triples.remove(0);
        }
        let g = EntityGraph::build(&triples, &EntityVocab::letters())?;
        for s in 0..g.num_nodes() {
            for t in 0..g.num_nodes() {
                queries += 1;
                let found = bfs_shortest_path(&g, s, t)?;
                let mut paths = all_simple_paths(&g, s, t);
                let best = paths.iter().map(Vec::len).min();
                paths.retain(|p| Some(p.len()) == best);
                paths.sort();
                let ok = match (&found, paths.first()) {
                    (None, None) => true,
                    (Some(p), Some(want)) => {
                        let names: Vec<String> = p.nodes.iter().map(|&n| g.name(n).to_string()).collect();
                        names == *want
                    }
                    _ => false,
                };
                failures += usize::from(!ok);
            }
        }
    }
    Ok((
        failures == 0,
        format!("{failures}/{queries} queries disagreed with enumeration"),
    ))
}

fn bfs_insertion_order(graphs: usize) -> Result<(bool, String)> {
    let mut r = rng(11);
    let mut failures = 0;
    for _ in 0..graphs {
        let n = r.random_range(2..=10);
        let extra = r.random_range(0..=8);
        let mut triples = random_graph(&mut r, n, extra);
        let paths = |ts: &[Triple]| -> Result<Vec<Option<Vec<String>>>> {
            let g = EntityGraph::build(ts, &EntityVocab::letters())?;
            let mut ids: Vec<NodeId> = (0..g.num_nodes()).collect();
            ids.sort_by(|a, b| g.name(*a).cmp(g.name(*b)));
            let mut out = Vec::new();
            for &s in &ids {
                for &t in &ids {
                    out.push(
                        bfs_shortest_path(&g, s, t)?.map(|p| p.nodes.iter().map(|&n| g.name(n).to_string()).collect()),
                    );
                }
            }
            Ok(out)
        };
        let a = paths(&triples)?;
        triples.shuffle(&mut r);
        failures += usize::from(paths(&triples)? != a);
    }
    Ok((
        failures == 0,
        format!("{failures}/{graphs} graphs changed a chosen path after shuffling"),
    ))
}

fn parser_round_trip(n: usize) -> Result<(bool, String)> {
    let mut r = rng(12);
    let mut failures = 0;
    for i in 0..n {
        let k = r.random_range(1..=MAX_K);
        let noise = NoiseKind::ALL[i % NoiseKind::ALL.len()];
        let gold = RelationLabel::ALL[r.random_range(0..NUM_LABELS)];
        let inst = generate_story(r.random(), k, noise, gold)?.instance;
        let parsed = parse(&inst.render())?;
        if parsed.triples != inst.triples || parsed.question.as_ref() != Some(&inst.question) {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("{failures}/{n} stories failed to round-trip")))
}
