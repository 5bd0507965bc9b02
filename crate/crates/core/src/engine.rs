//! The depth-wise pass: node memory initialization, long-dependency
//! collection along shortest paths, and relation retrieval by unbinding.
//!
//! Every stage is recorded on a [`Tape`], so the same code serves the
//! trained model (parameters bound as gradient leaves) and the exact mode
//! (constants only). The learned networks live behind [`EngineStages`].
//!
//! There is deliberately no layer or depth count anywhere in this module:
//! one pass handles any hop count.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use depwise_autodiff::{
    Activation, BoundFfn, BoundLayerNorm, BoundLstmCell, Ffn, LayerNorm, LstmCell, LstmState, ParamVars, Parameters,
    Shape, Tape, Tensor, TensorError, Var,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{connected_pairs_with, EntityGraph, NodeId, Path, ShortestPaths};
use crate::relation::NUM_LABELS;
use crate::tpr::{tape_retrieve, tape_store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    /// Gated recurrent cell fed the fillers in path order.
    #[default]
    #[serde(alias = "lstm")]
    RecurrentGated,
    Mean,
    Max,
    /// Parameter-free coordinate-wise sum.
    SumExact,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 4] = [
        AggregatorKind::RecurrentGated,
        AggregatorKind::Mean,
        AggregatorKind::Max,
        AggregatorKind::SumExact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregatorKind::RecurrentGated => "recurrent-gated",
            AggregatorKind::Mean => "mean",
            AggregatorKind::Max => "max",
            AggregatorKind::SumExact => "sum-exact",
        }
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" | "recurrent" => Ok(AggregatorKind::RecurrentGated),
            _ => AggregatorKind::ALL
                .into_iter()
                .find(|k| k.as_str() == s)
                .ok_or_else(|| Error::Config(format!("unknown aggregator `{s}`"))),
        }
    }
}

/// How collection reads memories while it stores long-range fillers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollectionSemantics {
    /// Reads see only the initialized memories; stores are merged at the
    /// end in a canonical order, so pair order cannot matter.
    #[default]
    Snapshot,
    /// Each store is visible to the pairs collected after it.
    Progressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub d: usize,
    pub aggregator: AggregatorKind,
    #[serde(default)]
    pub semantics: CollectionSemantics,
    #[serde(default)]
    pub activation: Activation,
}

impl EngineConfig {
    pub fn new(d: usize, aggregator: AggregatorKind) -> Self {
        EngineConfig {
            d,
            aggregator,
            semantics: CollectionSemantics::Snapshot,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!("embedding width {} is below 2", self.d)));
        }
        Ok(())
    }
}

/// The four places where the pass calls into a learned (or fixed) network.
pub trait EngineStages {
    fn d(&self) -> usize;

    /// Filler for the relation of `i` relative to neighbor `j`.
    fn init_filler(&self, tape: &mut Tape<'_>, v_i: Var, e_ij: Var, v_j: Var) -> Result<Var>;

    /// Reduce the atomic fillers of a path, in path order.
    fn aggregate(&self, tape: &mut Tape<'_>, fillers: &[Var]) -> Result<Var>;

    /// Turn the aggregate into the long-range filler that gets stored.
    fn compose(&self, tape: &mut Tape<'_>, aggregate: Var) -> Result<Var>;

    /// Node update from its own embedding, its retrieved filler and the key.
    fn update(&self, tape: &mut Tape<'_>, v_i: Var, filler: Var, key: Var) -> Result<Var>;
}

#[derive(Debug, Clone, Copy)]
pub enum BoundAggregator {
    Recurrent(BoundLstmCell),
    Mean,
    Max,
    SumExact,
}

impl BoundAggregator {
    pub fn kind(&self) -> AggregatorKind {
        match self {
            BoundAggregator::Recurrent(_) => AggregatorKind::RecurrentGated,
            BoundAggregator::Mean => AggregatorKind::Mean,
            BoundAggregator::Max => AggregatorKind::Max,
            BoundAggregator::SumExact => AggregatorKind::SumExact,
        }
    }

    pub fn apply(&self, tape: &mut Tape<'_>, fillers: &[Var]) -> Result<Var> {
        if fillers.is_empty() {
            return Err(Error::Argument("cannot aggregate an empty filler sequence".into()));
        }
        Ok(match self {
            BoundAggregator::Recurrent(cell) => {
                let mut state = LstmState::zeros(tape, cell.hidden_width());
                for &f in fillers {
                    state = cell.step(tape, f, state)?;
                }
                state.h
            }
            BoundAggregator::Mean => tape.mean_n(fillers)?,
            BoundAggregator::Max => tape.max_n(fillers)?,
            BoundAggregator::SumExact => tape.add_n(fillers)?,
        })
    }
}

/// Aggregate fillers with a parameter-free reduction. The recurrent kind
/// needs weights and goes through [`BoundAggregator::Recurrent`] instead.
pub fn aggregate(tape: &mut Tape<'_>, kind: AggregatorKind, fillers: &[Var]) -> Result<Var> {
    let bound = match kind {
        AggregatorKind::Mean => BoundAggregator::Mean,
        AggregatorKind::Max => BoundAggregator::Max,
        AggregatorKind::SumExact => BoundAggregator::SumExact,
        AggregatorKind::RecurrentGated => {
            return Err(Error::Config("the recurrent aggregator needs bound weights".into()))
        }
    };
    bound.apply(tape, fillers)
}

/// Learned weights of the pass. The initialization, composition and update
/// networks are independent.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineWeights {
    pub config: EngineConfig,
    pub ffn_init: Ffn,
    pub ffn_compose: Ffn,
    pub ln_compose: LayerNorm,
    pub ln_retrieve: LayerNorm,
    pub ffn_update: Ffn,
    pub lstm: Option<LstmCell>,
}

impl EngineWeights {
    pub fn init(config: EngineConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let act = config.activation;
        Ok(EngineWeights {
            config,
            ffn_init: Ffn::init(&[3 * d, d, d], act, rng),
            ffn_compose: Ffn::init(&[d, d, d], act, rng),
            ln_compose: LayerNorm::new(d),
            ln_retrieve: LayerNorm::new(d),
            ffn_update: Ffn::init(&[3 * d, d, d], act, rng),
            lstm: (config.aggregator == AggregatorKind::RecurrentGated).then(|| LstmCell::init(d, d, rng)),
        })
    }

    /// `(name, tensor)` pairs in [`Parameters::visit`] order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        name_tensors(&mut out, "engine.init", &self.ffn_init);
        name_tensors(&mut out, "engine.compose", &self.ffn_compose);
        name_tensors(&mut out, "engine.compose_norm", &self.ln_compose);
        name_tensors(&mut out, "engine.retrieve_norm", &self.ln_retrieve);
        name_tensors(&mut out, "engine.update", &self.ffn_update);
        if let Some(l) = &self.lstm {
            name_tensors(&mut out, "engine.lstm", l);
        }
        out
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>, vars: &mut ParamVars) -> BoundEngine {
        BoundEngine {
            d: self.config.d,
            ffn_init: self.ffn_init.bind(tape, vars),
            ffn_compose: self.ffn_compose.bind(tape, vars),
            ln_compose: self.ln_compose.bind(tape, vars),
            ln_retrieve: self.ln_retrieve.bind(tape, vars),
            ffn_update: self.ffn_update.bind(tape, vars),
            aggregator: match (self.config.aggregator, &self.lstm) {
                (AggregatorKind::RecurrentGated, Some(cell)) => BoundAggregator::Recurrent(cell.bind(tape, vars)),
                (AggregatorKind::Mean, _) => BoundAggregator::Mean,
                (AggregatorKind::Max, _) => BoundAggregator::Max,
                (AggregatorKind::SumExact, _) => BoundAggregator::SumExact,
                (AggregatorKind::RecurrentGated, None) => unreachable!("recurrent weights are created with the config"),
            },
        }
    }
}

/// Appends `prefix.0`, `prefix.1`, ... for each tensor of `p`.
pub fn name_tensors<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: &str, p: &'a impl Parameters) {
    let mut i = 0;
    p.visit(&mut |t| {
        out.push((format!("{prefix}.{i}"), t));
        i += 1;
    });
}

impl Parameters for EngineWeights {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        self.ffn_init.visit(f);
        self.ffn_compose.visit(f);
        self.ln_compose.visit(f);
        self.ln_retrieve.visit(f);
        self.ffn_update.visit(f);
        if let Some(l) = &self.lstm {
            l.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.ffn_init.visit_mut(f);
        self.ffn_compose.visit_mut(f);
        self.ln_compose.visit_mut(f);
        self.ln_retrieve.visit_mut(f);
        self.ffn_update.visit_mut(f);
        if let Some(l) = &mut self.lstm {
            l.visit_mut(f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundEngine {
    d: usize,
    ffn_init: BoundFfn,
    ffn_compose: BoundFfn,
    ln_compose: BoundLayerNorm,
    ln_retrieve: BoundLayerNorm,
    ffn_update: BoundFfn,
    aggregator: BoundAggregator,
}

impl BoundEngine {
    pub fn aggregator(&self) -> &BoundAggregator {
        &self.aggregator
    }

    pub fn retrieve_norm(&self) -> BoundLayerNorm {
        self.ln_retrieve
    }
}

impl EngineStages for BoundEngine {
    fn d(&self) -> usize {
        self.d
    }

    fn init_filler(&self, tape: &mut Tape<'_>, v_i: Var, e_ij: Var, v_j: Var) -> Result<Var> {
        let x = tape.concat(&[v_i, e_ij, v_j])?;
        Ok(self.ffn_init.forward(tape, x)?)
    }

    fn aggregate(&self, tape: &mut Tape<'_>, fillers: &[Var]) -> Result<Var> {
        self.aggregator.apply(tape, fillers)
    }

    fn compose(&self, tape: &mut Tape<'_>, aggregate: Var) -> Result<Var> {
        let h = self.ffn_compose.forward(tape, aggregate)?;
        let r = tape.add(h, aggregate)?;
        Ok(self.ln_compose.forward(tape, r)?)
    }

    fn update(&self, tape: &mut Tape<'_>, v_i: Var, filler: Var, key: Var) -> Result<Var> {
        let nf = self.ln_retrieve.forward(tape, filler)?;
        let x = tape.concat(&[v_i, nf, key])?;
        Ok(self.ffn_update.forward(tape, x)?)
    }
}

/// Parameter-free stages under which the pass is analytically exact: the
/// edge feature is the filler, aggregation is a plain sum, and composition
/// and update are the identity.
#[derive(Debug, Clone, Copy)]
pub struct ExactStages {
    d: usize,
}

impl ExactStages {
    pub fn new(d: usize) -> Self {
        ExactStages { d }
    }

    /// Only the sum aggregator keeps composition exact.
    pub fn for_aggregator(d: usize, kind: AggregatorKind) -> Result<Self> {
        match kind {
            AggregatorKind::SumExact => Ok(ExactStages { d }),
            other => Err(Error::Config(format!(
                "exact mode requires the sum-exact aggregator, got {other}"
            ))),
        }
    }
}

impl EngineStages for ExactStages {
    fn d(&self) -> usize {
        self.d
    }

    fn init_filler(&self, _tape: &mut Tape<'_>, _v_i: Var, e_ij: Var, _v_j: Var) -> Result<Var> {
        Ok(e_ij)
    }

    fn aggregate(&self, tape: &mut Tape<'_>, fillers: &[Var]) -> Result<Var> {
        BoundAggregator::SumExact.apply(tape, fillers)
    }

    fn compose(&self, _tape: &mut Tape<'_>, aggregate: Var) -> Result<Var> {
        Ok(aggregate)
    }

    fn update(&self, _tape: &mut Tape<'_>, v_i: Var, _filler: Var, _key: Var) -> Result<Var> {
        Ok(v_i)
    }
}

fn check_vector(tape: &Tape<'_>, op: &'static str, v: Var, d: usize) -> Result<()> {
    let got = tape.shape(v);
    if got != Shape::Vector(d) {
        return Err(Error::Tensor(TensorError::dim(op, Shape::Vector(d), got)));
    }
    Ok(())
}

/// `M_i = Σ_j init_filler(V_i, E_ij, V_j) ⊗ V_j` over neighbors in name
/// order. `edge_table[label]` is the feature of an edge whose source holds
/// that relation to its target; isolated nodes get the zero memory.
pub fn init_memories<S: EngineStages + ?Sized>(
    tape: &mut Tape<'_>,
    g: &EntityGraph,
    stages: &S,
    nodes: &[Var],
    edge_table: &[Var],
) -> Result<Vec<Var>> {
    let d = stages.d();
    if nodes.len() != g.num_nodes() {
        return Err(Error::Config(format!(
            "{} node embeddings for {} nodes",
            nodes.len(),
            g.num_nodes()
        )));
    }
    if edge_table.len() != NUM_LABELS {
        return Err(Error::Config(format!(
            "edge feature table has {} rows, expected {NUM_LABELS}",
            edge_table.len()
        )));
    }
    for &v in nodes.iter().chain(edge_table) {
        check_vector(tape, "init_memories", v, d)?;
    }
    let mut mems = Vec::with_capacity(g.num_nodes());
    for i in 0..g.num_nodes() {
        let mut bound = Vec::with_capacity(g.degree(i));
        for &(j, _) in g.neighbors(i) {
            let label = g.relation(i, j).expect("neighbors share an edge");
            let f = stages.init_filler(tape, nodes[i], edge_table[label.index()], nodes[j])?;
            bound.push(tape.outer(f, nodes[j])?);
        }
        mems.push(if bound.is_empty() {
            tape.constant(Tensor::zeros(Shape::Matrix(d, d)))
        } else {
            tape.add_n(&bound)?
        });
    }
    Ok(mems)
}

/// One collected long-range pair.
#[derive(Debug, Clone)]
pub struct PairRecord {
    pub path: Path,
    /// Unbound atomic fillers `M_{p_i} · V_{p_{i+1}}`, in path order.
    pub fillers: Vec<Var>,
    pub composed: Var,
}

#[derive(Debug, Clone)]
pub struct Collection {
    pub memories: Vec<Var>,
    /// In canonical `(source name, target name)` order under snapshot
    /// semantics and in processing order otherwise.
    pub pairs: Vec<PairRecord>,
}

pub fn collect_long_dependencies<S: EngineStages + ?Sized>(
    tape: &mut Tape<'_>,
    g: &EntityGraph,
    stages: &S,
    nodes: &[Var],
    mems: &[Var],
    semantics: CollectionSemantics,
) -> Result<Collection> {
    let sp = ShortestPaths::new(g);
    let pairs = connected_pairs_with(g, &sp);
    collect_pairs(tape, g, &sp, stages, nodes, mems, semantics, &pairs)
}

/// Like [`collect_long_dependencies`] but visiting `pairs` in the given
/// order. Every pair must be connected at distance at least 2.
pub fn collect_long_dependencies_in_order<S: EngineStages + ?Sized>(
    tape: &mut Tape<'_>,
    g: &EntityGraph,
    stages: &S,
    nodes: &[Var],
    mems: &[Var],
    semantics: CollectionSemantics,
    pairs: &[(NodeId, NodeId)],
) -> Result<Collection> {
    let sp = ShortestPaths::new(g);
    collect_pairs(tape, g, &sp, stages, nodes, mems, semantics, pairs)
}

#[allow(clippy::too_many_arguments)]
fn collect_pairs<S: EngineStages + ?Sized>(
    tape: &mut Tape<'_>,
    g: &EntityGraph,
    sp: &ShortestPaths,
    stages: &S,
    nodes: &[Var],
    mems: &[Var],
    semantics: CollectionSemantics,
    pairs: &[(NodeId, NodeId)],
) -> Result<Collection> {
    if mems.len() != g.num_nodes() || nodes.len() != g.num_nodes() {
        return Err(Error::Config("memory and embedding counts must match the graph".into()));
    }
    let mut paths = Vec::with_capacity(pairs.len());
    for &(s, t) in pairs {
        if s >= g.num_nodes() || t >= g.num_nodes() {
            return Err(Error::UnknownNode(s.max(t)));
        }
        match sp.distance(s, t) {
            Some(dist) if dist >= 2 => paths.push(sp.path(g, s, t).expect("connected")),
            _ => {
                return Err(Error::Argument(format!(
                    "pair ({}, {}) is not indirectly connected",
                    g.name(s),
                    g.name(t)
                )))
            }
        }
    }

    match semantics {
        CollectionSemantics::Snapshot => {
            let mut unbound: HashMap<(NodeId, NodeId), Var> = HashMap::new();
            let mut records = Vec::with_capacity(paths.len());
            for path in paths {
                let mut fillers = Vec::with_capacity(path.hops());
                for w in path.nodes.windows(2) {
                    let f = match unbound.get(&(w[0], w[1])) {
                        Some(&f) => f,
                        None => {
                            let f = tape_retrieve(tape, mems[w[0]], nodes[w[1]])?;
                            unbound.insert((w[0], w[1]), f);
                            f
                        }
                    };
                    fillers.push(f);
                }
                let agg = stages.aggregate(tape, &fillers)?;
                let composed = stages.compose(tape, agg)?;
                records.push(PairRecord {
                    path,
                    fillers,
                    composed,
                });
            }
            records.sort_by(|a, b| {
                let key = |r: &PairRecord| (g.name(r.path.source()), g.name(r.path.target()));
                key(a).cmp(&key(b))
            });
            let mut memories = mems.to_vec();
            let mut per_source: Vec<Vec<Var>> = vec![Vec::new(); g.num_nodes()];
            for r in &records {
                per_source[r.path.source()].push(tape.outer(r.composed, nodes[r.path.target()])?);
            }
            for (i, bound) in per_source.into_iter().enumerate() {
                if !bound.is_empty() {
                    let stored = tape.add_n(&bound)?;
                    memories[i] = tape.add(memories[i], stored)?;
                }
            }
            Ok(Collection {
                memories,
                pairs: records,
            })
        }
        CollectionSemantics::Progressive => {
            let mut memories = mems.to_vec();
            let mut records = Vec::with_capacity(paths.len());
            for path in paths {
                let mut fillers = Vec::with_capacity(path.hops());
                for w in path.nodes.windows(2) {
                    fillers.push(tape_retrieve(tape, memories[w[0]], nodes[w[1]])?);
                }
                let agg = stages.aggregate(tape, &fillers)?;
                let composed = stages.compose(tape, agg)?;
                let (s, t) = (path.source(), path.target());
                memories[s] = tape_store(tape, memories[s], composed, nodes[t])?;
                records.push(PairRecord {
                    path,
                    fillers,
                    composed,
                });
            }
            Ok(Collection {
                memories,
                pairs: records,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct Retrieval {
    /// `f̂_i = M_i · key` per node.
    pub fillers: Vec<Var>,
    /// `V̂_i` per node.
    pub updated: Vec<Var>,
}

/// Unbind every node memory with `key` and update the node embeddings.
pub fn retrieve_relations<S: EngineStages + ?Sized>(
    tape: &mut Tape<'_>,
    stages: &S,
    nodes: &[Var],
    mems: &[Var],
    key: Var,
) -> Result<Retrieval> {
    let all: Vec<NodeId> = (0..nodes.len()).collect();
    retrieve_for(tape, stages, nodes, mems, key, &all)
}

/// [`retrieve_relations`] restricted to `which`; outputs follow `which`.
pub fn retrieve_for<S: EngineStages + ?Sized>(
    tape: &mut Tape<'_>,
    stages: &S,
    nodes: &[Var],
    mems: &[Var],
    key: Var,
    which: &[NodeId],
) -> Result<Retrieval> {
    check_vector(tape, "retrieve_relations", key, stages.d())?;
    let mut fillers = Vec::with_capacity(which.len());
    let mut updated = Vec::with_capacity(which.len());
    for &i in which {
        let m = *mems.get(i).ok_or(Error::UnknownNode(i))?;
        let f = tape_retrieve(tape, m, key)?;
        updated.push(stages.update(tape, nodes[i], f, key)?);
        fillers.push(f);
    }
    Ok(Retrieval { fillers, updated })
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    pub initial_memories: Vec<Var>,
    pub collection: Collection,
    pub retrieval: Retrieval,
}

impl EngineOutput {
    pub fn memories(&self) -> &[Var] {
        &self.collection.memories
    }
}

/// Initialize, collect, then retrieve for every node.
pub fn run_engine<S: EngineStages + ?Sized>(
    tape: &mut Tape<'_>,
    g: &EntityGraph,
    stages: &S,
    nodes: &[Var],
    edge_table: &[Var],
    key: Var,
    semantics: CollectionSemantics,
) -> Result<EngineOutput> {
    let initial_memories = init_memories(tape, g, stages, nodes, edge_table)?;
    let collection = collect_long_dependencies(tape, g, stages, nodes, &initial_memories, semantics)?;
    let retrieval = retrieve_relations(tape, stages, nodes, &collection.memories, key)?;
    Ok(EngineOutput {
        initial_memories,
        collection,
        retrieval,
    })
}
