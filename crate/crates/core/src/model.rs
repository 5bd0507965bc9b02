//! End-to-end classifiers over stories: the trained depth-wise model, its
//! parameter-free exact instantiation, and the traits shared with the
//! breadth baseline.

use depwise_autodiff::{Ffn, LayerNorm, ParamVars, Parameters, Shape, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{
    collect_long_dependencies, init_memories, name_tensors, retrieve_for, CollectionSemantics, EngineConfig,
    EngineWeights, ExactStages,
};
use crate::error::{Error, Result};
use crate::graph::{bfs_shortest_path, EntityGraph, EntityVocab, NodeId, Triple};
use crate::relation::{RelationLabel, NUM_LABELS};
use crate::taskgen::{Question, StoryInstance};
use crate::tpr::random_unit_vector;

pub const MODEL_VERSION: &str = "depwise-model/1";
pub const NUM_ENTITIES: usize = 26;

/// Which learning rate a tensor trains under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Embedding,
    Network,
}

/// A trainable classifier. `logits_on` must bind parameters in
/// [`Parameters::visit`] order so gradients line up with tensors.
pub trait Model: Parameters + Sync + Send + Clone {
    fn logits_on<'p>(&'p self, tape: &mut Tape<'p>, inst: &StoryInstance) -> Result<(Var, ParamVars)>;

    /// One entry per tensor, in visit order.
    fn param_groups(&self) -> Vec<ParamGroup>;

    /// Called after every optimizer step.
    fn post_step(&mut self) {}

    fn logits(&self, inst: &StoryInstance) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (logits, _) = self.logits_on(&mut tape, inst)?;
        Ok(tape.value(logits).to_vec())
    }
}

/// Rescales each `d`-wide row of `t` to unit length. Rows already at unit
/// length and all-zero rows are left bit-for-bit untouched.
pub fn normalize_rows(t: &mut Tensor, d: usize) {
    for row in t.data_mut().chunks_exact_mut(d) {
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 && (n - 1.0).abs() > 1e-12 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    }
}

pub trait Predictor: Sync {
    fn predict(&self, inst: &StoryInstance) -> Result<RelationLabel>;
}

impl<M: Model> Predictor for M {
    fn predict(&self, inst: &StoryInstance) -> Result<RelationLabel> {
        Ok(argmax_label(&self.logits(inst)?))
    }
}

/// First maximal entry wins ties.
pub fn argmax_label(logits: &[f64]) -> RelationLabel {
    let mut best = 0;
    for (i, &x) in logits.iter().enumerate() {
        if x > logits[best] {
            best = i;
        }
    }
    RelationLabel::from_index(best).expect("nine logits")
}

/// Cross-entropy of one instance with per-tensor gradients in visit order.
pub fn loss_and_grads<M: Model>(model: &M, inst: &StoryInstance) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let (logits, vars) = model.logits_on(&mut tape, inst)?;
    let loss = tape.softmax_xent(logits, inst.gold.index())?;
    let value = tape.scalar(loss)?;
    let grads = tape.backward(loss)?;
    let out = vars
        .0
        .iter()
        .map(|&v| grads.get_or_zeros(v, tape.value(v).len()).into_owned())
        .collect();
    Ok((value, out))
}

pub fn loss<M: Model>(model: &M, inst: &StoryInstance) -> Result<f64> {
    let mut tape = Tape::new();
    let (logits, _) = model.logits_on(&mut tape, inst)?;
    let loss = tape.softmax_xent(logits, inst.gold.index())?;
    Ok(tape.scalar(loss)?)
}

/// Graph plus the question's node ids.
pub fn question_nodes(triples: &[Triple], q: &Question) -> Result<(EntityGraph, NodeId, NodeId)> {
    let g = EntityGraph::build(triples, &EntityVocab::letters())?;
    let node = |name: &str| {
        g.node_id(name)
            .ok_or_else(|| Error::Input(format!("question entity {name} does not appear in the story")))
    };
    let (s, t) = (node(&q.source)?, node(&q.target)?);
    Ok((g, s, t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub version: String,
    pub config: EngineConfig,
    /// One row per capital letter; rows double as roles.
    pub entity_embed: Tensor,
    /// One row per relation label.
    pub relation_embed: Tensor,
    pub engine: EngineWeights,
    pub head_norm: LayerNorm,
    pub head: Ffn,
}

fn unit_rows(rows: usize, d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows).flat_map(|_| random_unit_vector(d, rng)).collect();
    Tensor::matrix(rows, d, data).expect("positive dims")
}

impl ModelParams {
    pub fn init(config: EngineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entity_embed = unit_rows(NUM_ENTITIES, d, &mut rng);
        let relation_embed = unit_rows(NUM_LABELS, d, &mut rng);
        let engine = EngineWeights::init(config, &mut rng)?;
        let head = Ffn::init(&[3 * d, d, NUM_LABELS], config.activation, &mut rng);
        Ok(ModelParams {
            version: MODEL_VERSION.to_string(),
            config,
            entity_embed,
            relation_embed,
            engine,
            head_norm: LayerNorm::new(d),
            head,
        })
    }

    pub fn d(&self) -> usize {
        self.config.d
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("entity_embed".to_string(), &self.entity_embed),
            ("relation_embed".to_string(), &self.relation_embed),
        ];
        out.extend(self.engine.named_tensors());
        name_tensors(&mut out, "head_norm", &self.head_norm);
        name_tensors(&mut out, "head", &self.head);
        out
    }

    /// Features for the triple's two directions: `src → dst` uses the
    /// stated label, `dst → src` its inverse.
    pub fn edge_features(&self, t: &Triple) -> (Vec<f64>, Vec<f64>) {
        let row = |l: RelationLabel| self.relation_embed.row(l.index()).expect("nine rows").to_vec();
        (row(t.relation), row(t.relation.inverse()))
    }

    /// Self-loop edges carry no relation.
    pub fn self_loop_feature(&self) -> Vec<f64> {
        vec![0.0; self.d()]
    }
}

impl Parameters for ModelParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        f(&self.entity_embed);
        f(&self.relation_embed);
        self.engine.visit(f);
        self.head_norm.visit(f);
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.entity_embed);
        f(&mut self.relation_embed);
        self.engine.visit_mut(f);
        self.head_norm.visit_mut(f);
        self.head.visit_mut(f);
    }
}

impl Model for ModelParams {
    fn logits_on<'p>(&'p self, tape: &mut Tape<'p>, inst: &StoryInstance) -> Result<(Var, ParamVars)> {
        let mut vars = ParamVars::default();
        let entities = vars.bind(tape, &self.entity_embed);
        let relations = vars.bind(tape, &self.relation_embed);
        let engine = self.engine.bind(tape, &mut vars);
        let head_norm = self.head_norm.bind(tape, &mut vars);
        let head = self.head.bind(tape, &mut vars);

        let (g, s, t) = question_nodes(&inst.triples, &inst.question)?;
        let nodes = (0..g.num_nodes())
            .map(|i| tape.row(entities, g.embed_row(i)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let edge_table = (0..NUM_LABELS)
            .map(|l| tape.row(relations, l))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let key = nodes[t];

        let mems = init_memories(tape, &g, &engine, &nodes, &edge_table)?;
        let collected = collect_long_dependencies(tape, &g, &engine, &nodes, &mems, self.config.semantics)?;
        let r = retrieve_for(tape, &engine, &nodes, &collected.memories, key, &[s, t])?;
        let nf = head_norm.forward(tape, r.fillers[0])?;
        let x = tape.concat(&[r.updated[0], nf, r.updated[1]])?;
        let logits = head.forward(tape, x)?;
        Ok((logits, vars))
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = vec![ParamGroup::Embedding, ParamGroup::Embedding];
        let mut rest = 0;
        self.engine.visit(&mut |_| rest += 1);
        self.head_norm.visit(&mut |_| rest += 1);
        self.head.visit(&mut |_| rest += 1);
        groups.extend(std::iter::repeat_n(ParamGroup::Network, rest));
        groups
    }

    fn post_step(&mut self) {
        let d = self.d();
        normalize_rows(&mut self.entity_embed, d);
    }
}

pub const EXACT_D: usize = 32;

/// Parameter-free classifier: one-hot roles, offset fillers, plain sums.
///
/// The retrieved source filler carries `pos(source) - pos(target)` in its
/// first two coordinates; the logit of each label is the negative squared
/// distance between that offset's signs and the label's offset.
#[derive(Debug, Clone, Copy)]
pub struct ExactModel {
    pub d: usize,
    pub semantics: CollectionSemantics,
}

impl Default for ExactModel {
    fn default() -> Self {
        ExactModel {
            d: EXACT_D,
            semantics: CollectionSemantics::Snapshot,
        }
    }
}

/// One exact-mode pass over a question, with the intermediate values.
#[derive(Debug, Clone)]
pub struct ExactTrace {
    pub triples: Vec<Triple>,
    pub question: Question,
    /// Shortest path for the question pair, if connected.
    pub path: Option<Vec<String>>,
    /// `(from, to, filler)` for each hop of the question path, read from the
    /// initialized memories.
    pub hop_fillers: Vec<(String, String, Vec<f64>)>,
    /// Number of long-range pairs the collection stage stored.
    pub collected_pairs: usize,
    /// `M_source · V_target` after collection.
    pub retrieved: Vec<f64>,
    pub logits: Vec<f64>,
    pub predicted: RelationLabel,
}

fn one_hot(d: usize, i: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = value;
    v
}

impl ExactModel {
    pub fn new(d: usize) -> Result<Self> {
        if d < NUM_ENTITIES {
            return Err(Error::Config(format!(
                "exact mode needs d ≥ {NUM_ENTITIES} for one-hot roles, got {d}"
            )));
        }
        Ok(ExactModel {
            d,
            semantics: CollectionSemantics::Snapshot,
        })
    }

    /// Offset filler: `(dx, dy, 0, ...)`.
    pub fn offset_filler(&self, l: RelationLabel) -> Vec<f64> {
        let o = l.offset();
        let mut v = vec![0.0; self.d];
        v[0] = o.dx as f64;
        v[1] = o.dy as f64;
        v
    }

    pub fn surrogate_logits(filler: &[f64]) -> Vec<f64> {
        let (sx, sy) = (sign(filler[0]), sign(filler[1]));
        RelationLabel::ALL
            .iter()
            .map(|l| {
                let o = l.offset();
                -((sx - o.dx as f64).powi(2) + (sy - o.dy as f64).powi(2))
            })
            .collect()
    }

    pub fn run(&self, triples: &[Triple], question: &Question) -> Result<ExactTrace> {
        let (g, s, t) = question_nodes(triples, question)?;
        let stages = ExactStages::new(self.d);
        let mut tape = Tape::new();
        let nodes = (0..g.num_nodes())
            .map(|i| tape.constant_vector(one_hot(self.d, g.embed_row(i), 1.0)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let edge_table = RelationLabel::ALL
            .iter()
            .map(|&l| tape.constant_vector(self.offset_filler(l)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mems = init_memories(&mut tape, &g, &stages, &nodes, &edge_table)?;
        let collected = collect_long_dependencies(&mut tape, &g, &stages, &nodes, &mems, self.semantics)?;
        let r = retrieve_for(&mut tape, &stages, &nodes, &collected.memories, nodes[t], &[s])?;
        let retrieved = tape.value(r.fillers[0]).to_vec();

        let path = bfs_shortest_path(&g, s, t)?;
        let mut hop_fillers = Vec::new();
        if let Some(p) = &path {
            for w in p.nodes.windows(2) {
                let f = tape.matvec(mems[w[0]], nodes[w[1]])?;
                hop_fillers.push((
                    g.name(w[0]).to_string(),
                    g.name(w[1]).to_string(),
                    tape.value(f).to_vec(),
                ));
            }
        }
        let logits = Self::surrogate_logits(&retrieved);
        Ok(ExactTrace {
            triples: triples.to_vec(),
            question: question.clone(),
            path: path.map(|p| p.nodes.iter().map(|&n| g.name(n).to_string()).collect()),
            hop_fillers,
            collected_pairs: collected.pairs.len(),
            predicted: argmax_label(&logits),
            retrieved,
            logits,
        })
    }

    /// The retrieved source filler for an instance.
    pub fn retrieve(&self, inst: &StoryInstance) -> Result<Vec<f64>> {
        Ok(self.run(&inst.triples, &inst.question)?.retrieved)
    }

    /// Retrieval from the source memory under an arbitrary letter's role.
    pub fn retrieve_with_key(&self, triples: &[Triple], question: &Question, key_entity: &str) -> Result<Vec<f64>> {
        let (g, s, _) = question_nodes(triples, question)?;
        let row = EntityVocab::letters()
            .row(key_entity)
            .ok_or_else(|| Error::UnknownEntity(key_entity.to_string()))?;
        let stages = ExactStages::new(self.d);
        let mut tape = Tape::new();
        let nodes = (0..g.num_nodes())
            .map(|i| tape.constant_vector(one_hot(self.d, g.embed_row(i), 1.0)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let edge_table = RelationLabel::ALL
            .iter()
            .map(|&l| tape.constant_vector(self.offset_filler(l)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let key = tape.constant_vector(one_hot(self.d, row, 1.0))?;
        let mems = init_memories(&mut tape, &g, &stages, &nodes, &edge_table)?;
        let collected = collect_long_dependencies(&mut tape, &g, &stages, &nodes, &mems, self.semantics)?;
        let r = retrieve_for(&mut tape, &stages, &nodes, &collected.memories, key, &[s])?;
        debug_assert_eq!(tape.shape(r.fillers[0]), Shape::Vector(self.d));
        Ok(tape.value(r.fillers[0]).to_vec())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Predictor for ExactModel {
    fn predict(&self, inst: &StoryInstance) -> Result<RelationLabel> {
        Ok(self.run(&inst.triples, &inst.question)?.predicted)
    }
}
