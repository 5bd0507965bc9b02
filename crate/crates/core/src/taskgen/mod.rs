//! Synthetic multi-hop spatial stories.
//!
//! Every entity in a story gets an integer grid position, and every triple
//! (chain or noise) is the sign pattern of a unit step between two positions.
//! Any path between the question endpoints therefore composes to the same
//! label, which is what makes the noise families sound by construction.

mod jsonl;
mod text;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bfs_shortest_path, EntityGraph, EntityVocab, Triple};
use crate::relation::{oracle_compose, Offset, RelationLabel, NUM_LABELS};

pub use jsonl::{read_jsonl, read_jsonl_file, to_jsonl, write_jsonl};
pub use text::{
    parse, parse_sentence, render_question, render_text, render_triple, split_sentences, templates, ParsedStory,
};

pub const MAX_K: usize = 10;
pub const ALPHABET: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    None,
    Disconnected,
    Irrelevant,
    Supporting,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::None,
        NoiseKind::Disconnected,
        NoiseKind::Irrelevant,
        NoiseKind::Supporting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Disconnected => "disconnected",
            NoiseKind::Irrelevant => "irrelevant",
            NoiseKind::Supporting => "supporting",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown noise kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Question {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryInstance {
    pub triples: Vec<Triple>,
    pub sentences: Vec<String>,
    pub question: Question,
    pub gold: RelationLabel,
    pub k: usize,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl StoryInstance {
    /// Story sentences and question as one text block.
    pub fn render(&self) -> String {
        render_text(&self.sentences, &self.question)
    }

    pub fn graph(&self) -> Result<EntityGraph> {
        EntityGraph::build(&self.triples, &EntityVocab::letters())
    }

    /// Checks that the question endpoints are `k` hops apart and that the
    /// gold label is the composition along the shortest path.
    pub fn validate(&self) -> Result<()> {
        let g = self.graph()?;
        let node = |name: &str| {
            g.node_id(name)
                .ok_or_else(|| Error::Input(format!("question entity {name} is not in the story")))
        };
        let (s, t) = (node(&self.question.source)?, node(&self.question.target)?);
        let path =
            bfs_shortest_path(&g, s, t)?.ok_or_else(|| Error::Input("question entities are disconnected".into()))?;
        if path.hops() != self.k {
            return Err(Error::Input(format!(
                "k is {} but the shortest path has {} hops",
                self.k,
                path.hops()
            )));
        }
        let labels: Vec<RelationLabel> = path
            .nodes
            .windows(2)
            .map(|w| g.relation(w[0], w[1]).expect("path edges exist"))
            .collect();
        let oracle = oracle_compose(&labels)?;
        if oracle != self.gold {
            return Err(Error::Input(format!(
                "gold is {} but the chain composes to {oracle}",
                self.gold
            )));
        }
        Ok(())
    }
}

/// An instance plus the split between its chain and noise triples.
#[derive(Debug, Clone)]
pub struct GeneratedStory {
    pub instance: StoryInstance,
    /// Chain entities in order, source first.
    pub chain: Vec<String>,
    pub noise_triples: Vec<Triple>,
}

impl GeneratedStory {
    pub fn clean_triples(&self) -> Vec<Triple> {
        self.instance
            .triples
            .iter()
            .filter(|t| !self.noise_triples.contains(t))
            .cloned()
            .collect()
    }
}

fn check_k(k: usize) -> Result<()> {
    if (1..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(Error::Argument(format!("hop count {k} is outside 1..={MAX_K}")))
    }
}

/// Entities needed on top of the `k + 1` chain entities.
fn extra_entities(noise: NoiseKind) -> usize {
    match noise {
        NoiseKind::None => 0,
        NoiseKind::Disconnected | NoiseKind::Irrelevant | NoiseKind::Supporting => 2,
    }
}

/// `k` atomic relations whose composition is `gold`, by rejection sampling.
fn sample_chain(k: usize, gold: RelationLabel, rng: &mut impl Rng) -> Vec<RelationLabel> {
    if k == 1 {
        return vec![gold];
    }
    loop {
        let labels: Vec<RelationLabel> = (0..k)
            .map(|_| RelationLabel::ALL[rng.random_range(0..NUM_LABELS)])
            .collect();
        if oracle_compose(&labels).expect("nonempty") == gold {
            return labels;
        }
    }
}

fn random_unit_step(rng: &mut impl Rng) -> Offset {
    RelationLabel::ALL[rng.random_range(0..NUM_LABELS)].offset()
}

/// Three coordinates in `{-1, 0, 1}` that sum to `target` (|target| ≤ 2).
fn split_in_three(target: i32, rng: &mut impl Rng) -> [i32; 3] {
    let options: Vec<[i32; 3]> = (-1..=1)
        .flat_map(|a| (-1..=1).flat_map(move |b| (-1..=1).map(move |c| [a, b, c])))
        .filter(|v| v.iter().sum::<i32>() == target)
        .collect();
    options[rng.random_range(0..options.len())]
}

/// Relation of the entity at `a` to the entity at `b`; the positions must be
/// at most one step apart on each axis.
fn relation_between(a: Offset, b: Offset) -> RelationLabel {
    let d = Offset::new(a.dx - b.dx, a.dy - b.dy);
    debug_assert!(d.dx.abs() <= 1 && d.dy.abs() <= 1);
    RelationLabel::from_offset(d)
}

/// One story from its own seed. The gold label is fixed by the caller so
/// batches can be stratified.
pub fn generate_story(seed: u64, k: usize, noise: NoiseKind, gold: RelationLabel) -> Result<GeneratedStory> {
    check_k(k)?;
    let needed = k + 1 + extra_entities(noise);
    if needed > ALPHABET {
        return Err(Error::Argument(format!(
            "{needed} entities exceed the {ALPHABET}-letter alphabet"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut letters: Vec<String> = (b'A'..=b'Z').map(|c| (c as char).to_string()).collect();
    letters.shuffle(&mut rng);
    let mut fresh = letters.into_iter();

    let relations = sample_chain(k, gold, &mut rng);
    let chain: Vec<String> = fresh.by_ref().take(k + 1).collect();
    // pos(p_{i+1}) = pos(p_i) - offset(r_i), since p_i is r_i of p_{i+1}
    let mut pos = vec![Offset::default()];
    for r in &relations {
        let last = *pos.last().expect("nonempty");
        pos.push(last + -r.offset());
    }

    let orient = |a: &str, r: RelationLabel, b: &str, rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            Triple::new(a, r, b)
        } else {
            Triple::new(b, r.inverse(), a)
        }
    };

    let mut triples: Vec<Triple> = relations
        .iter()
        .enumerate()
        .map(|(i, &r)| orient(&chain[i], r, &chain[i + 1], &mut rng))
        .collect();

    let mut noise_triples = Vec::new();
    match noise {
        NoiseKind::None => {}
        NoiseKind::Disconnected => {
            let (a, b) = (fresh.next().expect("checked"), fresh.next().expect("checked"));
            let r = RelationLabel::ALL[rng.random_range(0..NUM_LABELS)];
            noise_triples.push(orient(&a, r, &b, &mut rng));
        }
        NoiseKind::Irrelevant => {
            // a dead-end branch of one or two nodes hanging off the chain
            let len = rng.random_range(1..=2);
            let mut anchor = chain[rng.random_range(0..=k)].clone();
            let mut anchor_pos = pos[chain.iter().position(|c| *c == anchor).expect("on chain")];
            for _ in 0..len {
                let name = fresh.next().expect("checked");
                let p = anchor_pos + random_unit_step(&mut rng);
                let r = relation_between(p, anchor_pos);
                noise_triples.push(orient(&name, r, &anchor, &mut rng));
                anchor = name;
                anchor_pos = p;
            }
        }
        NoiseKind::Supporting => {
            // detour p_a -> I -> M -> p_b, strictly longer than the b - a ≤ 2 chain hops it bypasses
            let a = rng.random_range(0..k);
            let b = (a + rng.random_range(1..=2)).min(k);
            let delta = Offset::new(pos[b].dx - pos[a].dx, pos[b].dy - pos[a].dy);
            let xs = split_in_three(delta.dx, &mut rng);
            let ys = split_in_three(delta.dy, &mut rng);
            let mid_i = fresh.next().expect("checked");
            let mid_m = fresh.next().expect("checked");
            let p_i = pos[a] + Offset::new(xs[0], ys[0]);
            let p_m = p_i + Offset::new(xs[1], ys[1]);
            noise_triples.push(orient(&mid_i, relation_between(p_i, pos[a]), &chain[a], &mut rng));
            noise_triples.push(orient(&mid_m, relation_between(p_m, p_i), &mid_i, &mut rng));
            noise_triples.push(orient(&chain[b], relation_between(pos[b], p_m), &mid_m, &mut rng));
        }
    }
    triples.extend(noise_triples.iter().cloned());
    triples.shuffle(&mut rng);

    let sentences = triples
        .iter()
        .map(|t| render_triple(t, rng.random_range(0..templates(t.relation).len())))
        .collect();
    let instance = StoryInstance {
        triples,
        sentences,
        question: Question {
            source: chain[0].clone(),
            target: chain[k].clone(),
        },
        gold,
        k,
        noise,
        seed,
    };
    Ok(GeneratedStory {
        instance,
        chain,
        noise_triples,
    })
}

/// `n` stories at hop count `k`; gold labels cycle through all nine.
pub fn generate(seed: u64, k: usize, noise: NoiseKind, n: usize) -> Result<Vec<StoryInstance>> {
    generate_mixed(seed, &[k], noise, n)
}

/// `n` stories with labels cycling fastest and hop counts cycling through
/// `ks`, so both are balanced.
pub fn generate_mixed(seed: u64, ks: &[usize], noise: NoiseKind, n: usize) -> Result<Vec<StoryInstance>> {
    Ok(generate_stories(seed, ks, noise, n)?
        .into_iter()
        .map(|s| s.instance)
        .collect())
}

pub fn generate_stories(seed: u64, ks: &[usize], noise: NoiseKind, n: usize) -> Result<Vec<GeneratedStory>> {
    if ks.is_empty() {
        return Err(Error::Argument("no hop counts given".into()));
    }
    for &k in ks {
        check_k(k)?;
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n).map(|_| master.next_u64()).collect();
    seeds
        .into_par_iter()
        .enumerate()
        .map(|(i, s)| {
            let gold = RelationLabel::ALL[i % NUM_LABELS];
            let k = ks[(i / NUM_LABELS) % ks.len()];
            generate_story(s, k, noise, gold)
        })
        .collect()
}

/// Count of each gold label, in [`RelationLabel::ALL`] order.
pub fn label_histogram(instances: &[StoryInstance]) -> [usize; NUM_LABELS] {
    let mut h = [0; NUM_LABELS];
    for inst in instances {
        h[inst.gold.index()] += 1;
    }
    h
}
