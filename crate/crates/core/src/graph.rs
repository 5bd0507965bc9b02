//! Entity graphs built from relation triples, plus deterministic
//! breadth-first shortest paths.
//!
//! Nodes are numbered by first mention. Every ordering decision (neighbor
//! lists, tie-breaks between equal-length paths, pair enumeration) uses the
//! entity name, so reordering the input triples never changes a result.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::RelationLabel;

pub type NodeId = usize;
pub type EdgeId = usize;

/// `src` is `relation` of `dst`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, RelationLabel, String)", into = "(String, RelationLabel, String)")]
pub struct Triple {
    pub src: String,
    pub relation: RelationLabel,
    pub dst: String,
}

impl Triple {
    pub fn new(src: impl Into<String>, relation: RelationLabel, dst: impl Into<String>) -> Self {
        Triple {
            src: src.into(),
            relation,
            dst: dst.into(),
        }
    }
}

impl From<(String, RelationLabel, String)> for Triple {
    fn from((src, relation, dst): (String, RelationLabel, String)) -> Self {
        Triple { src, relation, dst }
    }
}

impl From<Triple> for (String, RelationLabel, String) {
    fn from(t: Triple) -> Self {
        (t.src, t.relation, t.dst)
    }
}

/// Maps entity names to rows of an embedding table.
#[derive(Debug, Clone)]
pub struct EntityVocab {
    rows: HashMap<String, usize>,
    len: usize,
}

impl EntityVocab {
    /// `A`..`Z` mapped to rows 0..26.
    pub fn letters() -> Self {
        EntityVocab::from_names((b'A'..=b'Z').map(|c| (c as char).to_string()))
    }

    pub fn from_names(names: impl IntoIterator<Item = String>) -> Self {
        let rows: HashMap<String, usize> = names.into_iter().enumerate().map(|(i, n)| (n, i)).collect();
        let len = rows.len();
        EntityVocab { rows, len }
    }

    pub fn row(&self, name: &str) -> Option<usize> {
        self.rows.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    /// `a` is `relation` of `b`.
    pub relation: RelationLabel,
}

#[derive(Debug, Clone)]
pub struct EntityGraph {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    embed_rows: Vec<usize>,
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    edges: Vec<Edge>,
}

/// A simple path `nodes[0] -> ... -> nodes[n]` of `n` hops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("paths are nonempty")
    }
}

impl EntityGraph {
    /// One node per distinct entity, one undirected edge per related pair.
    ///
    /// Restating a relation (in either orientation) is accepted; a
    /// contradictory restatement is a [`Error::Conflict`]. Self-relations are
    /// rejected because the node memory never binds a node to itself.
    pub fn build(triples: &[Triple], vocab: &EntityVocab) -> Result<Self> {
        let mut g = EntityGraph {
            names: Vec::new(),
            index: HashMap::new(),
            embed_rows: Vec::new(),
            adjacency: Vec::new(),
            edges: Vec::new(),
        };
        let mut pair_edge: HashMap<(NodeId, NodeId), EdgeId> = HashMap::new();
        for t in triples {
            let a = g.intern(&t.src, vocab)?;
            let b = g.intern(&t.dst, vocab)?;
            if a == b {
                return Err(Error::Input(format!("self-relation on entity {}", t.src)));
            }
            let key = (a.min(b), a.max(b));
            if let Some(&e) = pair_edge.get(&key) {
                let existing = g.relation(a, b).expect("edge exists");
                if existing != t.relation {
                    return Err(Error::Conflict {
                        a: t.src.clone(),
                        b: t.dst.clone(),
                        first: existing.to_string(),
                        second: t.relation.to_string(),
                    });
                }
                let _ = e;
                continue;
            }
            let id = g.edges.len();
            g.edges.push(Edge {
                a,
                b,
                relation: t.relation,
            });
            pair_edge.insert(key, id);
            g.adjacency[a].push((b, id));
            g.adjacency[b].push((a, id));
        }
        let names = g.names.clone();
        for list in &mut g.adjacency {
            list.sort_by(|x, y| names[x.0].cmp(&names[y.0]));
        }
        Ok(g)
    }

    fn intern(&mut self, name: &str, vocab: &EntityVocab) -> Result<NodeId> {
        if name.is_empty() {
            return Err(Error::Input("empty entity name".into()));
        }
        if let Some(&id) = self.index.get(name) {
            return Ok(id);
        }
        let row = vocab.row(name).ok_or_else(|| Error::UnknownEntity(name.to_string()))?;
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.embed_rows.push(row);
        self.adjacency.push(Vec::new());
        Ok(id)
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn embed_row(&self, id: NodeId) -> usize {
        self.embed_rows[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id].len()
    }

    /// Neighbors sorted by entity name, with the connecting edge.
    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[id]
    }

    /// Relation of `i` relative to `j` when they share an edge.
    pub fn relation(&self, i: NodeId, j: NodeId) -> Option<RelationLabel> {
        let &(_, e) = self.adjacency.get(i)?.iter().find(|(n, _)| *n == j)?;
        let edge = &self.edges[e];
        Some(if edge.a == i {
            edge.relation
        } else {
            edge.relation.inverse()
        })
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::UnknownNode(id))
        }
    }

    /// Hop distances from `from` to every node (`None` when unreachable).
    pub fn distances_from(&self, from: NodeId) -> Result<Vec<Option<usize>>> {
        self.check(from)?;
        let mut dist = vec![None; self.num_nodes()];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for &(v, _) in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Walks from `src` to the node whose distance table is `dist_to_dst`,
    /// taking the alphabetically first neighbor that is one hop closer.
    fn walk(&self, src: NodeId, dist_to_dst: &[Option<usize>]) -> Option<Path> {
        let mut d = dist_to_dst[src]?;
        let mut nodes = vec![src];
        let mut cur = src;
        while d > 0 {
            let &(next, _) = self.adjacency[cur]
                .iter()
                .find(|(n, _)| dist_to_dst[*n] == Some(d - 1))
                .expect("a closer neighbor exists on a shortest path");
            nodes.push(next);
            cur = next;
            d -= 1;
        }
        Some(Path { nodes })
    }
}

/// Minimum-hop path; ties are broken by the lexicographically smallest
/// sequence of entity names. `None` when `src` and `dst` are disconnected.
pub fn bfs_shortest_path(g: &EntityGraph, src: NodeId, dst: NodeId) -> Result<Option<Path>> {
    g.check(src)?;
    let dist = g.distances_from(dst)?;
    Ok(g.walk(src, &dist))
}

/// All-pairs hop distances and tie-broken shortest paths.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    dist: Vec<Vec<Option<usize>>>,
}

impl ShortestPaths {
    pub fn new(g: &EntityGraph) -> Self {
        let dist = (0..g.num_nodes())
            .map(|n| g.distances_from(n).expect("valid node"))
            .collect();
        ShortestPaths { dist }
    }

    pub fn distance(&self, src: NodeId, dst: NodeId) -> Option<usize> {
        self.dist[dst][src]
    }

    /// Same path as [`bfs_shortest_path`].
    pub fn path(&self, g: &EntityGraph, src: NodeId, dst: NodeId) -> Option<Path> {
        g.walk(src, &self.dist[dst])
    }
}

/// Ordered pairs in the same component at distance ≥ 2, sorted by
/// `(source name, target name)`.
pub fn connected_pairs(g: &EntityGraph) -> Vec<(NodeId, NodeId)> {
    connected_pairs_with(g, &ShortestPaths::new(g))
}

pub fn connected_pairs_with(g: &EntityGraph, sp: &ShortestPaths) -> Vec<(NodeId, NodeId)> {
    let mut order: Vec<NodeId> = (0..g.num_nodes()).collect();
    order.sort_by(|a, b| g.name(*a).cmp(g.name(*b)));
    let mut pairs = Vec::new();
    for &s in &order {
        for &t in &order {
            if matches!(sp.distance(s, t), Some(d) if d >= 2) {
                pairs.push((s, t));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelationLabel::*;

    fn graph(triples: &[(&str, RelationLabel, &str)]) -> EntityGraph {
        let ts: Vec<Triple> = triples.iter().map(|(a, r, b)| Triple::new(*a, *r, *b)).collect();
        EntityGraph::build(&ts, &EntityVocab::letters()).unwrap()
    }

    fn names(g: &EntityGraph, p: &Path) -> Vec<String> {
        p.nodes.iter().map(|&n| g.name(n).to_string()).collect()
    }

    #[test]
    fn single_triple() {
        let g = graph(&[("A", Left, "B")]);
        assert_eq!((g.num_nodes(), g.num_edges()), (2, 1));
        assert_eq!(g.relation(0, 1), Some(Left));
        assert_eq!(g.relation(1, 0), Some(Right));
    }

    #[test]
    fn two_triples_chain() {
        let g = graph(&[("A", Left, "B"), ("B", Above, "C")]);
        assert_eq!((g.num_nodes(), g.num_edges()), (3, 2));
        let p = bfs_shortest_path(&g, 0, 2).unwrap().unwrap();
        assert_eq!(names(&g, &p), ["A", "B", "C"]);
    }

    #[test]
    fn story_with_hub_node() {
        // C right of Y; K lower-left of C; E above Y; Y left of X
        let g = graph(&[
            ("C", Right, "Y"),
            ("K", LowerLeft, "C"),
            ("E", Above, "Y"),
            ("Y", Left, "X"),
        ]);
        assert_eq!((g.num_nodes(), g.num_edges()), (5, 4));
        assert_eq!(g.degree(g.node_id("Y").unwrap()), 3);
    }

    #[test]
    fn adjacency_is_symmetric_and_sorted() {
        let g = graph(&[("D", Left, "B"), ("B", Above, "A"), ("B", Below, "C")]);
        for u in 0..g.num_nodes() {
            let ns: Vec<&str> = g.neighbors(u).iter().map(|(n, _)| g.name(*n)).collect();
            let mut sorted = ns.clone();
            sorted.sort();
            assert_eq!(ns, sorted);
            for &(v, _) in g.neighbors(u) {
                assert!(g.neighbors(v).iter().any(|(w, _)| *w == u));
            }
        }
    }

    #[test]
    fn chain_path_and_disconnection() {
        let g = graph(&[("A", Left, "B"), ("B", Left, "C"), ("C", Left, "D"), ("E", Above, "F")]);
        let p = bfs_shortest_path(&g, 0, 3).unwrap().unwrap();
        assert_eq!(names(&g, &p), ["A", "B", "C", "D"]);
        let e = g.node_id("E").unwrap();
        assert_eq!(bfs_shortest_path(&g, 0, e).unwrap(), None);
        assert!(matches!(bfs_shortest_path(&g, 0, 99), Err(Error::UnknownNode(99))));
    }

    #[test]
    fn equal_length_paths_break_ties_by_name() {
        // A-B-D and A-C-D both have 2 hops
        let g = graph(&[("A", Left, "C"), ("C", Left, "D"), ("A", Above, "B"), ("B", Right, "D")]);
        let (a, d) = (g.node_id("A").unwrap(), g.node_id("D").unwrap());
        let p = bfs_shortest_path(&g, a, d).unwrap().unwrap();
        assert_eq!(names(&g, &p), ["A", "B", "D"]);
    }

    #[test]
    fn chain_shorter_than_detour() {
        // P-X-Q-E direct; P-I-M-Q detour
        let g = graph(&[
            ("P", Left, "X"),
            ("X", Left, "Q"),
            ("Q", Above, "E"),
            ("P", Below, "I"),
            ("I", Right, "M"),
            ("M", LowerLeft, "Q"),
        ]);
        let (p, e) = (g.node_id("P").unwrap(), g.node_id("E").unwrap());
        let path = bfs_shortest_path(&g, p, e).unwrap().unwrap();
        assert_eq!(names(&g, &path), ["P", "X", "Q", "E"]);
    }

    #[test]
    fn pairs_on_chain_star_and_components() {
        let g = graph(&[("A", Left, "B"), ("B", Left, "C")]);
        let named: Vec<(&str, &str)> = connected_pairs(&g)
            .iter()
            .map(|&(s, t)| (g.name(s), g.name(t)))
            .collect();
        assert_eq!(named, [("A", "C"), ("C", "A")]);

        let g = graph(&[("X", Left, "P"), ("X", Above, "Q"), ("X", Below, "R")]);
        assert_eq!(connected_pairs(&g).len(), 6);

        let g = graph(&[("A", Left, "B"), ("C", Left, "D")]);
        assert!(connected_pairs(&g).is_empty());
    }

    #[test]
    fn contradictions_rejected_restatements_merged() {
        let ts = [Triple::new("A", Left, "B"), Triple::new("B", Right, "A")];
        let g = EntityGraph::build(&ts, &EntityVocab::letters()).unwrap();
        assert_eq!(g.num_edges(), 1);
        let ts = [Triple::new("A", Left, "B"), Triple::new("A", Above, "B")];
        assert!(matches!(
            EntityGraph::build(&ts, &EntityVocab::letters()),
            Err(Error::Conflict { .. })
        ));
    }

    #[test]
    fn unknown_entities_rejected() {
        let ts = [Triple::new("A", Left, "bob")];
        assert!(matches!(
            EntityGraph::build(&ts, &EntityVocab::letters()),
            Err(Error::UnknownEntity(_))
        ));
    }

    #[test]
    fn triple_serializes_as_array() {
        let t = Triple::new("A", UpperLeft, "B");
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"["A","upper-left","B"]"#);
    }
}
