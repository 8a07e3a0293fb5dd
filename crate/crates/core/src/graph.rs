//! Causal DAGs over named nodes: generation, reachability and d-separation.
//!
//! Every other module treats the functions here as ground truth. Labels in
//! generated datasets, consistency scores in the semantic loss and the
//! validation pipeline all come back to [`find_path`] and [`d_separated`].

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::num::NonZeroUsize;
use std::ops::RangeInclusive;
use std::sync::Mutex;

use lru::LruCache;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default cap on undirected path length during d-separation.
pub const MAX_PATH_LEN: usize = 10;
/// Largest conditioning set the generators and parsers accept.
pub const MAX_CONDITIONING: usize = 3;
/// Out-degree cap in the controlled DAG generator.
pub const MAX_OUT_DEGREE: usize = 5;
/// Attempts at drawing pairwise-distinct names for one graph.
pub const NAME_ATTEMPTS: usize = 10;
/// Entries kept by [`DsepOracle`].
pub const DSEP_CACHE_CAPACITY: usize = 1000;

const NAME_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("invalid node name {0:?}")]
    InvalidName(String),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeName),
    #[error("self edge on {0}")]
    SelfEdge(NodeName),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(NodeName, NodeName),
    #[error("edge endpoint {0} is not a node")]
    DanglingEdge(NodeName),
    #[error("graph contains a cycle")]
    Cycle,
    #[error("unknown node {0}")]
    UnknownNode(NodeName),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("could not draw {0} distinct names in {NAME_ATTEMPTS} attempts")]
    NameCollision(usize),
}

/// Alphanumeric node identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeName(String);

impl NodeName {
    pub fn new(text: impl Into<String>) -> Result<Self, GraphError> {
        let text = text.into();
        if text.is_empty() || !text.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(GraphError::InvalidName(text));
        }
        Ok(NodeName(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<String> for NodeName {
    type Error = GraphError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        NodeName::new(value)
    }
}

impl From<NodeName> for String {
    fn from(value: NodeName) -> Self {
        value.0
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A directed edge `source -> target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeName,
    pub target: NodeName,
}

impl Edge {
    pub fn new(source: NodeName, target: NodeName) -> Self {
        Edge { source, target }
    }

    pub fn reversed(&self) -> Edge {
        Edge::new(self.target.clone(), self.source.clone())
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.source, self.target)
    }
}

/// Directed acyclic graph with ordered, uniquely named nodes.
///
/// Edges keep their insertion order so that rendering and serialization are
/// reproducible; adjacency is kept by node index.
#[derive(Debug, Clone)]
pub struct Dag {
    nodes: Vec<NodeName>,
    edges: Vec<(usize, usize)>,
    index: HashMap<NodeName, usize>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
}

impl PartialEq for Dag {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Eq for Dag {}

impl Dag {
    pub fn new(nodes: Vec<NodeName>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.clone()));
            }
        }
        let mut pairs = Vec::with_capacity(edges.len());
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            let s = *index
                .get(&e.source)
                .ok_or_else(|| GraphError::DanglingEdge(e.source.clone()))?;
            let t = *index
                .get(&e.target)
                .ok_or_else(|| GraphError::DanglingEdge(e.target.clone()))?;
            if s == t {
                return Err(GraphError::SelfEdge(e.source.clone()));
            }
            if !seen.insert((s, t)) {
                return Err(GraphError::DuplicateEdge(e.source.clone(), e.target.clone()));
            }
            pairs.push((s, t));
        }
        Self::from_indices(nodes, pairs, index)
    }

    /// Builds a graph from edges alone; nodes are ordered by first appearance.
    pub fn from_edges(edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut nodes = Vec::new();
        let mut seen = HashSet::new();
        for e in &edges {
            for n in [&e.source, &e.target] {
                if seen.insert(n.clone()) {
                    nodes.push(n.clone());
                }
            }
        }
        Dag::new(nodes, edges)
    }

    fn from_indices(
        nodes: Vec<NodeName>,
        edges: Vec<(usize, usize)>,
        index: HashMap<NodeName, usize>,
    ) -> Result<Self, GraphError> {
        let mut children = vec![Vec::new(); nodes.len()];
        let mut parents = vec![Vec::new(); nodes.len()];
        for &(s, t) in &edges {
            children[s].push(t);
            parents[t].push(s);
        }
        let dag = Dag {
            nodes,
            edges,
            index,
            children,
            parents,
        };
        if dag.topological_order().is_none() {
            return Err(GraphError::Cycle);
        }
        Ok(dag)
    }

    pub fn nodes(&self) -> &[NodeName] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.edges
            .iter()
            .map(|&(s, t)| Edge::new(self.nodes[s].clone(), self.nodes[t].clone()))
            .collect()
    }

    pub fn edge_set(&self) -> BTreeSet<Edge> {
        self.edges().into_iter().collect()
    }

    pub fn contains(&self, name: &NodeName) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &NodeName) -> Result<usize, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.clone()))
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.children[source].contains(&target)
    }

    pub fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn parents_of(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Same nodes with every edge direction flipped.
    pub fn reversed(&self) -> Dag {
        let edges = self.edges.iter().map(|&(s, t)| (t, s)).collect();
        Self::from_indices(self.nodes.clone(), edges, self.index.clone()).expect("reversing a DAG keeps it acyclic")
    }

    /// Nodes without any incident edge removed.
    pub fn without_isolated(&self) -> Dag {
        Dag::from_edges(self.edges()).expect("subgraph of a DAG is a DAG")
    }

    /// Undirected neighbours of node `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[i].iter().chain(self.parents[i].iter()).copied()
    }

    /// Undirected hop distance, if connected.
    pub fn undirected_distance(&self, a: usize, b: usize) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[a] = 0;
        let mut queue = VecDeque::from([a]);
        while let Some(v) = queue.pop_front() {
            if v == b {
                return Some(dist[v]);
            }
            for n in self.neighbors(v) {
                if dist[n] == usize::MAX {
                    dist[n] = dist[v] + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Weakly connected components as index sets, in node order.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.nodes.len()];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for start in 0..self.nodes.len() {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![];
            let mut stack = vec![start];
            comp[start] = id;
            while let Some(v) = stack.pop() {
                members.push(v);
                for n in self.neighbors(v) {
                    if comp[n] == usize::MAX {
                        comp[n] = id;
                        stack.push(n);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Node-ordered text form: `nodes: a,b,c\nedges: a>b,b>c\n`.
    pub fn serialize(&self) -> String {
        let nodes: Vec<&str> = self.nodes.iter().map(NodeName::as_str).collect();
        let edges: Vec<String> = self
            .edges
            .iter()
            .map(|&(s, t)| format!("{}>{}", self.nodes[s], self.nodes[t]))
            .collect();
        format!("nodes: {}\nedges: {}\n", nodes.join(","), edges.join(","))
    }

    /// SHA-256 over the sorted node and edge lists, independent of insertion order.
    pub fn canonical_digest(&self) -> [u8; 32] {
        let mut nodes: Vec<&str> = self.nodes.iter().map(NodeName::as_str).collect();
        nodes.sort_unstable();
        let mut hasher = Sha256::new();
        for n in nodes {
            hasher.update(n.as_bytes());
            hasher.update(b",");
        }
        hasher.update(b";");
        for e in self.edge_set() {
            hasher.update(e.source.as_str().as_bytes());
            hasher.update(b">");
            hasher.update(e.target.as_str().as_bytes());
            hasher.update(b",");
        }
        hasher.finalize().into()
    }
}

/// Observed variables of a d-separation query, at most [`MAX_CONDITIONING`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditioningSet(BTreeSet<NodeName>);

impl ConditioningSet {
    pub fn new(members: impl IntoIterator<Item = NodeName>) -> Result<Self, GraphError> {
        let set: BTreeSet<NodeName> = members.into_iter().collect();
        if set.len() > MAX_CONDITIONING {
            return Err(GraphError::InvalidQuery(format!(
                "conditioning set of size {} exceeds {MAX_CONDITIONING}",
                set.len()
            )));
        }
        Ok(ConditioningSet(set))
    }

    pub fn empty() -> Self {
        ConditioningSet::default()
    }

    pub fn contains(&self, n: &NodeName) -> bool {
        self.0.contains(n)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Members in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = &NodeName> {
        self.0.iter()
    }
}

/// A simple path that ignores edge direction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct UndirectedPath(Vec<NodeName>);

impl UndirectedPath {
    pub fn new(g: &Dag, nodes: Vec<NodeName>) -> Result<Self, GraphError> {
        if nodes.len() < 2 {
            return Err(GraphError::InvalidPath("fewer than two nodes".into()));
        }
        if nodes.len() - 1 > MAX_PATH_LEN {
            return Err(GraphError::InvalidPath(format!(
                "{} edges exceeds {MAX_PATH_LEN}",
                nodes.len() - 1
            )));
        }
        let idx = nodes.iter().map(|n| g.index_of(n)).collect::<Result<Vec<_>, _>>()?;
        let distinct: HashSet<_> = idx.iter().collect();
        if distinct.len() != idx.len() {
            return Err(GraphError::InvalidPath("repeated node".into()));
        }
        for w in idx.windows(2) {
            if !g.has_edge(w[0], w[1]) && !g.has_edge(w[1], w[0]) {
                return Err(GraphError::InvalidPath(format!(
                    "{} and {} are not adjacent",
                    g.nodes[w[0]], g.nodes[w[1]]
                )));
            }
        }
        Ok(UndirectedPath(nodes))
    }

    pub fn nodes(&self) -> &[NodeName] {
        &self.0
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Parameters for [`generate_chain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub length_range: RangeInclusive<usize>,
    pub name_len_range: RangeInclusive<usize>,
    pub p_flip: f64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if *self.length_range.start() < 2 || self.length_range.is_empty() {
            return Err(GraphError::InvalidConfig(format!(
                "chain length range {:?} must start at 2 or more",
                self.length_range
            )));
        }
        check_name_range(&self.name_len_range)?;
        if !(0.0..=1.0).contains(&self.p_flip) {
            return Err(GraphError::InvalidConfig(format!(
                "p_flip {} outside [0,1]",
                self.p_flip
            )));
        }
        Ok(())
    }
}

/// Parameters for [`generate_dag`]. Density is an out-degree target per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagConfig {
    pub num_nodes_range: RangeInclusive<usize>,
    pub edge_density_range: (f64, f64),
    pub name_len_range: RangeInclusive<usize>,
}

impl DagConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if *self.num_nodes_range.start() < 3 || self.num_nodes_range.is_empty() {
            return Err(GraphError::InvalidConfig(format!(
                "node count range {:?} must start at 3 or more",
                self.num_nodes_range
            )));
        }
        let (lo, hi) = self.edge_density_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(GraphError::InvalidConfig(format!("density range ({lo}, {hi}) invalid")));
        }
        check_name_range(&self.name_len_range)
    }
}

fn check_name_range(r: &RangeInclusive<usize>) -> Result<(), GraphError> {
    if *r.start() < 1 || r.is_empty() {
        return Err(GraphError::InvalidConfig(format!("name length range {r:?} invalid")));
    }
    Ok(())
}

/// Draws `count` pairwise-distinct names, retrying the whole draw on collision.
pub fn sample_names<R: Rng + ?Sized>(
    count: usize,
    name_len_range: &RangeInclusive<usize>,
    rng: &mut R,
) -> Result<Vec<NodeName>, GraphError> {
    for _ in 0..NAME_ATTEMPTS {
        let names: Vec<String> = (0..count)
            .map(|_| {
                let len = rng.gen_range(name_len_range.clone());
                (0..len)
                    .map(|_| NAME_ALPHABET[rng.gen_range(0..NAME_ALPHABET.len())] as char)
                    .collect()
            })
            .collect();
        let distinct: HashSet<&String> = names.iter().collect();
        if distinct.len() == count {
            return names.into_iter().map(NodeName::new).collect();
        }
    }
    Err(GraphError::NameCollision(count))
}

/// Chain `v1 -> ... -> vl` with each edge independently reversed with `p_flip`.
pub fn generate_chain<R: Rng + ?Sized>(config: &ChainConfig, rng: &mut R) -> Result<Dag, GraphError> {
    config.validate()?;
    let length = rng.gen_range(config.length_range.clone());
    let names = sample_names(length, &config.name_len_range, rng)?;
    chain_from_names(names, config.p_flip, rng)
}

/// Chain over the given names in order, with independent edge flips.
pub fn chain_from_names<R: Rng + ?Sized>(names: Vec<NodeName>, p_flip: f64, rng: &mut R) -> Result<Dag, GraphError> {
    let edges = names
        .windows(2)
        .map(|w| {
            // gen_bool(0.0)/gen_bool(1.0) are exact, so p_flip 0 and 1 are deterministic.
            if rng.gen_bool(p_flip) {
                Edge::new(w[1].clone(), w[0].clone())
            } else {
                Edge::new(w[0].clone(), w[1].clone())
            }
        })
        .collect();
    Dag::new(names, edges)
}

/// Out-degree target for a graph of `n` nodes at density `rho`.
pub fn out_degree_target(n: usize, rho: f64) -> usize {
    ((n as f64 * rho).floor() as usize).min(MAX_OUT_DEGREE)
}

/// Topologically ordered DAG: node size and density drawn from the config ranges.
pub fn generate_dag<R: Rng + ?Sized>(config: &DagConfig, rng: &mut R) -> Result<Dag, GraphError> {
    config.validate()?;
    let n = rng.gen_range(config.num_nodes_range.clone());
    let (lo, hi) = config.edge_density_range;
    let rho = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    generate_dag_with(n, rho, &config.name_len_range, rng)
}

/// DAG with a fixed node count and density.
pub fn generate_dag_with<R: Rng + ?Sized>(
    n: usize,
    rho: f64,
    name_len_range: &RangeInclusive<usize>,
    rng: &mut R,
) -> Result<Dag, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidConfig(format!("{n} nodes is too few")));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(GraphError::InvalidConfig(format!("density {rho} invalid")));
    }
    let names = sample_names(n, name_len_range, rng)?;
    let k = out_degree_target(n, rho);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let available = n - 1 - i;
        let take = k.min(available);
        if take == 0 {
            continue;
        }
        let mut targets: Vec<usize> = sample(rng, available, take).into_iter().map(|j| i + 1 + j).collect();
        targets.sort_unstable();
        pairs.extend(targets.into_iter().map(|t| (i, t)));
    }
    if pairs.len() < n - 1 {
        for i in 0..n - 1 {
            if !pairs.contains(&(i, i + 1)) {
                pairs.push((i, i + 1));
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(s, t)| Edge::new(names[s].clone(), names[t].clone()))
        .collect();
    Dag::new(names, edges)
}

/// Directed reachability by depth-first search; a node reaches itself.
pub fn find_path(g: &Dag, start: &NodeName, end: &NodeName) -> Result<bool, GraphError> {
    let s = g.index_of(start)?;
    let e = g.index_of(end)?;
    Ok(reaches(g, s, e))
}

pub(crate) fn reaches(g: &Dag, start: usize, end: usize) -> bool {
    if start == end {
        return true;
    }
    let mut visited = vec![false; g.node_count()];
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        if v == end {
            return true;
        }
        if visited[v] {
            continue;
        }
        visited[v] = true;
        stack.extend(g.children[v].iter().copied());
    }
    false
}

/// All nodes reachable from `node` by directed paths, excluding itself.
pub fn descendants(g: &Dag, node: &NodeName) -> Result<BTreeSet<NodeName>, GraphError> {
    let i = g.index_of(node)?;
    Ok(descendant_indices(g, i)
        .into_iter()
        .map(|d| g.nodes[d].clone())
        .collect())
}

fn descendant_indices(g: &Dag, node: usize) -> Vec<usize> {
    let mut visited = vec![false; g.node_count()];
    visited[node] = true;
    let mut queue = VecDeque::from([node]);
    let mut out = Vec::new();
    while let Some(v) = queue.pop_front() {
        for &c in &g.children[v] {
            if !visited[c] {
                visited[c] = true;
                out.push(c);
                queue.push_back(c);
            }
        }
    }
    out
}

/// All simple undirected paths from `x` to `y` with at most `max_len` edges,
/// sorted lexicographically by node-name sequence.
pub fn enumerate_undirected_paths(
    g: &Dag,
    x: &NodeName,
    y: &NodeName,
    max_len: usize,
) -> Result<Vec<UndirectedPath>, GraphError> {
    let xi = g.index_of(x)?;
    let yi = g.index_of(y)?;
    if xi == yi {
        return Err(GraphError::InvalidQuery(format!("path endpoints are both {x}")));
    }
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut on_path = vec![false; g.node_count()];
    let mut path = vec![xi];
    on_path[xi] = true;
    collect_paths(g, yi, max_len, &mut path, &mut on_path, &mut found);
    let mut paths: Vec<UndirectedPath> = found
        .into_iter()
        .map(|p| UndirectedPath(p.into_iter().map(|i| g.nodes[i].clone()).collect()))
        .collect();
    paths.sort();
    Ok(paths)
}

fn collect_paths(
    g: &Dag,
    target: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    found: &mut Vec<Vec<usize>>,
) {
    let v = *path.last().expect("path is never empty");
    if v == target {
        found.push(path.clone());
        return;
    }
    if path.len() > max_len {
        return;
    }
    let next: Vec<usize> = g.neighbors(v).collect();
    for n in next {
        if on_path[n] {
            continue;
        }
        on_path[n] = true;
        path.push(n);
        collect_paths(g, target, max_len, path, on_path, found);
        path.pop();
        on_path[n] = false;
    }
}

/// Whether some intermediate node blocks `path` given `z`.
pub fn is_blocked(g: &Dag, path: &UndirectedPath, z: &ConditioningSet) -> Result<bool, GraphError> {
    let idx = path.0.iter().map(|n| g.index_of(n)).collect::<Result<Vec<_>, _>>()?;
    let observed = observed_mask(g, z)?;
    let mut memo = HashMap::new();
    for w in idx.windows(3) {
        if blocks_at(g, w[0], w[1], w[2], &observed, &mut memo) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn observed_mask(g: &Dag, z: &ConditioningSet) -> Result<Vec<bool>, GraphError> {
    let mut mask = vec![false; g.node_count()];
    for n in z.iter() {
        mask[g.index_of(n)?] = true;
    }
    Ok(mask)
}

/// Pearl's blocking rule at `mid`, with neighbours `prev` and `next` on the path.
fn blocks_at(
    g: &Dag,
    prev: usize,
    mid: usize,
    next: usize,
    observed: &[bool],
    collider_open: &mut HashMap<usize, bool>,
) -> bool {
    let collider = g.has_edge(prev, mid) && g.has_edge(next, mid);
    if collider {
        let open = *collider_open
            .entry(mid)
            .or_insert_with(|| observed[mid] || descendant_indices(g, mid).into_iter().any(|d| observed[d]));
        !open
    } else {
        observed[mid]
    }
}

/// d-separation of `x` and `y` given `z`, over undirected paths of at most
/// [`MAX_PATH_LEN`] edges.
pub fn d_separated(g: &Dag, x: &NodeName, y: &NodeName, z: &ConditioningSet) -> Result<bool, GraphError> {
    d_separated_within(g, x, y, z, MAX_PATH_LEN)
}

/// d-separation with an explicit path-length cap. `max_len >= node_count - 1`
/// makes the test exact.
pub fn d_separated_within(
    g: &Dag,
    x: &NodeName,
    y: &NodeName,
    z: &ConditioningSet,
    max_len: usize,
) -> Result<bool, GraphError> {
    let (xi, yi) = check_dsep_query(g, x, y, z)?;
    let observed = observed_mask(g, z)?;
    let mut on_path = vec![false; g.node_count()];
    on_path[xi] = true;
    let mut memo = HashMap::new();
    let mut path = vec![xi];
    let active = active_path_exists(g, yi, max_len, &observed, &mut path, &mut on_path, &mut memo);
    Ok(!active)
}

/// The d-separation answer without the path cap.
pub fn d_separated_exact(g: &Dag, x: &NodeName, y: &NodeName, z: &ConditioningSet) -> Result<bool, GraphError> {
    d_separated_within(g, x, y, z, g.node_count().saturating_sub(1).max(1))
}

fn check_dsep_query(g: &Dag, x: &NodeName, y: &NodeName, z: &ConditioningSet) -> Result<(usize, usize), GraphError> {
    let xi = g.index_of(x)?;
    let yi = g.index_of(y)?;
    if xi == yi {
        return Err(GraphError::InvalidQuery(format!("query nodes are both {x}")));
    }
    if z.contains(x) || z.contains(y) {
        return Err(GraphError::InvalidQuery("query node inside conditioning set".into()));
    }
    for n in z.iter() {
        g.index_of(n)?;
    }
    Ok((xi, yi))
}

// Depth-first search over simple undirected paths, abandoning a prefix as
// soon as it is blocked. Equivalent to enumerating every path and checking
// that all are blocked, since blocking at an interior node depends only on
// that node and its two path neighbours.
fn active_path_exists(
    g: &Dag,
    target: usize,
    max_len: usize,
    observed: &[bool],
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    memo: &mut HashMap<usize, bool>,
) -> bool {
    let v = *path.last().expect("path is never empty");
    if path.len() > max_len {
        return false;
    }
    let next: Vec<usize> = g.neighbors(v).collect();
    for n in next {
        if on_path[n] {
            continue;
        }
        if path.len() >= 2 {
            let prev = path[path.len() - 2];
            if blocks_at(g, prev, v, n, observed, memo) {
                continue;
            }
        }
        if n == target {
            return true;
        }
        on_path[n] = true;
        path.push(n);
        let found = active_path_exists(g, target, max_len, observed, path, on_path, memo);
        path.pop();
        on_path[n] = false;
        if found {
            return true;
        }
    }
    false
}

type DsepKey = ([u8; 32], NodeName, NodeName, Vec<NodeName>);

/// Memoizing front end for [`d_separated`], keyed by canonical graph digest
/// and query, with least-recently-used eviction. Safe to share across threads.
pub struct DsepOracle {
    cache: Mutex<LruCache<DsepKey, bool>>,
}

impl Default for DsepOracle {
    fn default() -> Self {
        Self::with_capacity(DSEP_CACHE_CAPACITY)
    }
}

impl DsepOracle {
    pub fn with_capacity(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("capacity is at least one");
        DsepOracle {
            cache: Mutex::new(LruCache::new(cap)),
        }
    }

    pub fn d_separated(&self, g: &Dag, x: &NodeName, y: &NodeName, z: &ConditioningSet) -> Result<bool, GraphError> {
        check_dsep_query(g, x, y, z)?;
        let key = (
            g.canonical_digest(),
            x.clone(),
            y.clone(),
            z.iter().cloned().collect::<Vec<_>>(),
        );
        if let Some(&hit) = self.cache.lock().expect("cache lock poisoned").get(&key) {
            return Ok(hit);
        }
        let answer = d_separated(g, x, y, z)?;
        self.cache.lock().expect("cache lock poisoned").put(key, answer);
        Ok(answer)
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
