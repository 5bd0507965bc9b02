//! Stacked breadth aggregation: every layer mixes each node with the mean of
//! its neighbors. Unlike the depth-wise engine, the layer count is an
//! explicit hyperparameter, and stacking many layers smooths embeddings
//! toward one another.

use depwise_autodiff::{
    Activation, BoundLinear, Ffn, LayerNorm, Linear, ParamVars, Parameters, Shape, Tape, Tensor, TensorError, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::name_tensors;
use crate::error::{Error, Result};
use crate::graph::EntityGraph;
use crate::model::{normalize_rows, question_nodes, Model, ParamGroup, NUM_ENTITIES};
use crate::relation::NUM_LABELS;
use crate::taskgen::StoryInstance;
use crate::tpr::{cosine, random_unit_vector};

/// `h' = act(W_self h_i + b + mean_j (W_nbr h_j + W_edge e_ij))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BreadthLayer {
    pub w_self: Linear,
    pub w_nbr: Tensor,
    pub w_edge: Tensor,
}

impl BreadthLayer {
    pub fn init(d: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (2 * d) as f64).sqrt();
        let mut m = || {
            let data = (0..d * d).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::matrix(d, d, data).expect("positive width")
        };
        let (w_nbr, w_edge) = (m(), m());
        BreadthLayer {
            w_self: Linear::init(d, d, rng),
            w_nbr,
            w_edge,
        }
    }

    /// Self and neighbor transforms are the identity; edges are ignored.
    pub fn identity(d: usize) -> Self {
        BreadthLayer {
            w_self: Linear::identity(d),
            w_nbr: Tensor::identity(d),
            w_edge: Tensor::zeros(Shape::Matrix(d, d)),
        }
    }

    pub fn d(&self) -> usize {
        self.w_nbr.rows()
    }

    fn bind<'p>(&'p self, tape: &mut Tape<'p>, vars: &mut ParamVars) -> BoundBreadthLayer {
        BoundBreadthLayer {
            w_self: self.w_self.bind(tape, vars),
            w_nbr: vars.bind(tape, &self.w_nbr),
            w_edge: vars.bind(tape, &self.w_edge),
        }
    }
}

impl Parameters for BreadthLayer {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        self.w_self.visit(f);
        f(&self.w_nbr);
        f(&self.w_edge);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.w_self.visit_mut(f);
        f(&mut self.w_nbr);
        f(&mut self.w_edge);
    }
}

#[derive(Debug, Clone, Copy)]
struct BoundBreadthLayer {
    w_self: BoundLinear,
    w_nbr: Var,
    w_edge: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreadthLayerStack {
    pub layers: Vec<BreadthLayer>,
    pub activation: Activation,
}

impl BreadthLayerStack {
    pub fn init(d: usize, num_layers: usize, activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Config("a breadth stack needs at least one layer".into()));
        }
        Ok(BreadthLayerStack {
            layers: (0..num_layers).map(|_| BreadthLayer::init(d, rng)).collect(),
            activation,
        })
    }

    /// `num_layers` copies of one layer, i.e. the same weights applied repeatedly.
    pub fn shared(layer: BreadthLayer, num_layers: usize, activation: Activation) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Config("a breadth stack needs at least one layer".into()));
        }
        Ok(BreadthLayerStack {
            layers: vec![layer; num_layers],
            activation,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn d(&self) -> usize {
        self.layers[0].d()
    }
}

impl Parameters for BreadthLayerStack {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

/// Runs every layer of `stack` over `g`. `edge_table[label]` is the
/// feature of an edge whose source holds that relation to its target.
pub fn breadth_forward<'p>(
    tape: &mut Tape<'p>,
    g: &EntityGraph,
    stack: &'p BreadthLayerStack,
    vars: &mut ParamVars,
    nodes: &[Var],
    edge_table: &[Var],
) -> Result<Vec<Var>> {
    let d = stack.d();
    if nodes.len() != g.num_nodes() {
        return Err(Error::Config("one embedding per node is required".into()));
    }
    for &v in nodes.iter().chain(edge_table) {
        if tape.shape(v) != Shape::Vector(d) {
            return Err(Error::Tensor(TensorError::dim(
                "breadth_forward",
                Shape::Vector(d),
                tape.shape(v),
            )));
        }
    }
    let bound: Vec<BoundBreadthLayer> = stack.layers.iter().map(|l| l.bind(tape, vars)).collect();
    let mut h = nodes.to_vec();
    for layer in &bound {
        let mut next = Vec::with_capacity(h.len());
        for i in 0..g.num_nodes() {
            let mut z = layer.w_self.forward(tape, h[i])?;
            if g.degree(i) > 0 {
                let mut msgs = Vec::with_capacity(g.degree(i));
                for &(j, _) in g.neighbors(i) {
                    let label = g.relation(i, j).expect("neighbors share an edge");
                    let a = tape.matvec(layer.w_nbr, h[j])?;
                    let b = tape.matvec(layer.w_edge, edge_table[label.index()])?;
                    msgs.push(tape.add(a, b)?);
                }
                let m = tape.mean_n(&msgs)?;
                z = tape.add(z, m)?;
            }
            next.push(stack.activation.apply(tape, z));
        }
        h = next;
    }
    Ok(h)
}

/// Mean cosine similarity over unordered node pairs.
pub fn smoothing_metric(embeddings: &[Vec<f64>]) -> Result<f64> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::Argument(format!("smoothing needs at least 2 nodes, got {n}")));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += cosine(&embeddings[i], &embeddings[j]);
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Breadth-stack classifier with the same embedding tables as the
/// depth-wise model. The head sees `[h_s, layernorm(h_s - h_t), h_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub d: usize,
    pub entity_embed: Tensor,
    pub relation_embed: Tensor,
    pub stack: BreadthLayerStack,
    pub head_norm: LayerNorm,
    pub head: Ffn,
}

impl BaselineModel {
    pub fn init(d: usize, num_layers: usize, seed: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::Config(format!("embedding width {d} is below 2")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = |rows: usize| {
            let data = (0..rows).flat_map(|_| random_unit_vector(d, &mut rng)).collect();
            Tensor::matrix(rows, d, data).expect("positive dims")
        };
        let entity_embed = table(NUM_ENTITIES);
        let relation_embed = table(NUM_LABELS);
        let stack = BreadthLayerStack::init(d, num_layers, Activation::Tanh, &mut rng)?;
        let head = Ffn::init(&[3 * d, d, NUM_LABELS], Activation::Tanh, &mut rng);
        Ok(BaselineModel {
            d,
            entity_embed,
            relation_embed,
            stack,
            head_norm: LayerNorm::new(d),
            head,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.stack.num_layers()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("entity_embed".to_string(), &self.entity_embed),
            ("relation_embed".to_string(), &self.relation_embed),
        ];
        name_tensors(&mut out, "breadth", &self.stack);
        name_tensors(&mut out, "head_norm", &self.head_norm);
        name_tensors(&mut out, "head", &self.head);
        out
    }

    fn encode<'p>(&'p self, tape: &mut Tape<'p>, vars: &mut ParamVars, inst: &StoryInstance) -> Result<Encoded> {
        let entities = vars.bind(tape, &self.entity_embed);
        let relations = vars.bind(tape, &self.relation_embed);
        let (g, s, t) = question_nodes(&inst.triples, &inst.question)?;
        let nodes = (0..g.num_nodes())
            .map(|i| tape.row(entities, g.embed_row(i)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let edge_table = (0..NUM_LABELS)
            .map(|l| tape.row(relations, l))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let h = breadth_forward(tape, &g, &self.stack, vars, &nodes, &edge_table)?;
        Ok(Encoded { h, s, t })
    }

    /// Node embeddings after the whole stack, in node order.
    pub fn node_embeddings(&self, inst: &StoryInstance) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let mut vars = ParamVars::default();
        let enc = self.encode(&mut tape, &mut vars, inst)?;
        Ok(enc.h.iter().map(|&v| tape.value(v).to_vec()).collect())
    }
}

struct Encoded {
    h: Vec<Var>,
    s: usize,
    t: usize,
}

impl Parameters for BaselineModel {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        f(&self.entity_embed);
        f(&self.relation_embed);
        self.stack.visit(f);
        self.head_norm.visit(f);
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.entity_embed);
        f(&mut self.relation_embed);
        self.stack.visit_mut(f);
        self.head_norm.visit_mut(f);
        self.head.visit_mut(f);
    }
}

impl Model for BaselineModel {
    fn logits_on<'p>(&'p self, tape: &mut Tape<'p>, inst: &StoryInstance) -> Result<(Var, ParamVars)> {
        let mut vars = ParamVars::default();
        let enc = self.encode(tape, &mut vars, inst)?;
        let head_norm = self.head_norm.bind(tape, &mut vars);
        let head = self.head.bind(tape, &mut vars);
        let (hs, ht) = (enc.h[enc.s], enc.h[enc.t]);
        let diff = tape.sub(hs, ht)?;
        let nd = head_norm.forward(tape, diff)?;
        let x = tape.concat(&[hs, nd, ht])?;
        Ok((head.forward(tape, x)?, vars))
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        let mut groups = vec![ParamGroup::Embedding, ParamGroup::Embedding];
        groups.extend(std::iter::repeat_n(ParamGroup::Network, n - 2));
        groups
    }

    fn post_step(&mut self) {
        normalize_rows(&mut self.entity_embed, self.d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityVocab, Triple};
    use crate::relation::RelationLabel;

    fn run(g: &EntityGraph, stack: &BreadthLayerStack, embeds: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let d = stack.d();
        let mut tape = Tape::new();
        let mut vars = ParamVars::default();
        let nodes: Vec<Var> = embeds
            .iter()
            .map(|e| tape.constant_vector(e.clone()).unwrap())
            .collect();
        let edges: Vec<Var> = (0..NUM_LABELS)
            .map(|_| tape.constant_vector(vec![1.0; d]).unwrap())
            .collect();
        let out = breadth_forward(&mut tape, g, stack, &mut vars, &nodes, &edges).unwrap();
        out.iter().map(|&v| tape.value(v).to_vec()).collect()
    }

    #[test]
    fn identity_layer_on_pair() {
        let g = EntityGraph::build(&[Triple::new("A", RelationLabel::Left, "B")], &EntityVocab::letters()).unwrap();
        let stack = BreadthLayerStack::shared(BreadthLayer::identity(2), 1, Activation::Identity).unwrap();
        let out = run(&g, &stack, &[vec![1.0, 2.0], vec![10.0, 20.0]]);
        assert_eq!(out[0], [11.0, 22.0]);
        assert_eq!(out[1], [11.0, 22.0]);
    }

    #[test]
    fn isolated_node_keeps_self_transform() {
        let ts = [
            Triple::new("A", RelationLabel::Left, "B"),
            Triple::new("C", RelationLabel::Above, "D"),
        ];
        let g = EntityGraph::build(&ts, &EntityVocab::letters()).unwrap();
        let mut layer = BreadthLayer::identity(2);
        layer.w_self.weight.data_mut().iter_mut().for_each(|x| *x *= 3.0);
        let stack = BreadthLayerStack::shared(layer, 1, Activation::Identity).unwrap();
        let out = run(
            &g,
            &stack,
            &[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]],
        );
        assert_eq!(out[0], [3.0, 0.0]);
    }

    #[test]
    fn smoothing_extremes() {
        let same = vec![vec![1.0, 2.0, 3.0]; 4];
        assert!((smoothing_metric(&same).unwrap() - 1.0).abs() < 1e-12);
        let ortho = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(smoothing_metric(&ortho).unwrap(), 0.0);
        assert!(smoothing_metric(&same[..1]).is_err());
    }

    #[test]
    fn zero_layers_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(BreadthLayerStack::init(4, 0, Activation::Tanh, &mut rng).is_err());
        assert!(BaselineModel::init(4, 0, 0).is_err());
    }

    #[test]
    fn groups_cover_every_tensor() {
        let m = BaselineModel::init(4, 3, 0).unwrap();
        assert_eq!(m.param_groups().len(), m.named_tensors().len());
    }
}
