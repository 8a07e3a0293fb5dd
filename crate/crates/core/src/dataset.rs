//! Dataset generation, multi-stage validation, and JSONL serialization.
//!
//! Every accepted example is rendered to text and then re-checked from that
//! text alone: both sentences are re-parsed, graph validity is checked for
//! d-separation queries, and the label is recomputed from the parsed graph.
//! The same [`validate_example`] runs inside the generator and over files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    chain_from_names, d_separated, d_separated_exact, find_path, generate_dag, sample_names, ChainConfig,
    ConditioningSet, Dag, DagConfig, Edge, GraphError, NodeName, MAX_CONDITIONING, MAX_PATH_LEN,
};
use crate::text::{
    parse_hypothesis, parse_premise_graph, render_edges, render_hypothesis, Example, Label, Query, QueryKind,
};

/// Attempts per example for the standard suites.
pub const EXAMPLE_ATTEMPTS: usize = 10;
/// Attempts per example for the adversarial suite.
pub const ADVERSARIAL_ATTEMPTS: usize = 15;
/// Suite-wide attempt budget, as a multiple of the requested count.
pub const SUITE_BUDGET_FACTOR: usize = 50;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid generation parameters: {0}")]
    InvalidSpec(String),
    #[error("suite generation stopped after {} attempts with {} of {requested} examples", report.attempted, report.accepted)]
    BudgetExhausted { requested: usize, report: ValidationReport },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Transitivity,
    #[serde(rename = "dsep")]
    DSeparation,
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transitivity" => Ok(Task::Transitivity),
            "dsep" | "d-separation" => Ok(Task::DSeparation),
            _ => Err(format!("unknown task {s:?} (expected transitivity or dsep)")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Transitivity => "transitivity",
            Task::DSeparation => "dsep",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Train,
    Length,
    Branching,
    Reversed,
    Shuffled,
    LongNames,
    Adversarial,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Train,
        Suite::Length,
        Suite::Branching,
        Suite::Reversed,
        Suite::Shuffled,
        Suite::LongNames,
        Suite::Adversarial,
    ];
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Suite::Train),
            "length" => Ok(Suite::Length),
            "branching" => Ok(Suite::Branching),
            "reversed" => Ok(Suite::Reversed),
            "shuffled" => Ok(Suite::Shuffled),
            "long-names" => Ok(Suite::LongNames),
            "adversarial" => Ok(Suite::Adversarial),
            _ => Err(format!("unknown suite {s:?}")),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Train => "train",
            Suite::Length => "length",
            Suite::Branching => "branching",
            Suite::Reversed => "reversed",
            Suite::Shuffled => "shuffled",
            Suite::LongNames => "long-names",
            Suite::Adversarial => "adversarial",
        })
    }
}

/// How the underlying graph of an example is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Chain,
    Dag,
}

/// Sampling ranges for one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteParams {
    pub graph: GraphKind,
    /// Chain length in nodes (chains only).
    pub chain_len: RangeInclusive<usize>,
    /// Node count (DAGs only).
    pub num_nodes: RangeInclusive<usize>,
    pub density: (f64, f64),
    pub name_len: RangeInclusive<usize>,
    /// Flip probability, drawn uniformly from this list per example.
    pub p_flip: Vec<f64>,
    pub cond_size: RangeInclusive<usize>,
    pub reverse_edges: bool,
    pub shuffle_premise: bool,
    /// Best-effort 50/50 label balance for transitivity queries.
    pub balance: bool,
}

impl SuiteParams {
    pub fn defaults(task: Task, suite: Suite) -> Self {
        let mut p = SuiteParams {
            graph: match task {
                Task::Transitivity => GraphKind::Chain,
                Task::DSeparation => GraphKind::Dag,
            },
            chain_len: 3..=6,
            num_nodes: 3..=6,
            density: (0.3, 0.6),
            name_len: 1..=3,
            p_flip: vec![0.0, 0.3, 0.5],
            cond_size: 0..=3,
            reverse_edges: false,
            shuffle_premise: false,
            balance: false,
        };
        match suite {
            Suite::Train | Suite::Adversarial => {}
            Suite::Length => {
                p.chain_len = 7..=15;
                p.num_nodes = 7..=15;
            }
            Suite::Branching => {
                p.graph = GraphKind::Dag;
                p.num_nodes = 7..=15;
                p.density = (0.7, 1.2);
            }
            Suite::Reversed => p.reverse_edges = true,
            Suite::Shuffled => {
                p.p_flip = vec![0.5];
                p.shuffle_premise = true;
            }
            Suite::LongNames => p.name_len = 8..=10,
        }
        p
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        match self.graph {
            GraphKind::Chain => {
                if self.p_flip.is_empty() {
                    return bad("p_flip list is empty".into());
                }
                for &p in &self.p_flip {
                    ChainConfig {
                        length_range: self.chain_len.clone(),
                        name_len_range: self.name_len.clone(),
                        p_flip: p,
                    }
                    .validate()
                    .map_err(|e| DatasetError::InvalidSpec(e.to_string()))?;
                }
            }
            GraphKind::Dag => self
                .dag_config()
                .validate()
                .map_err(|e| DatasetError::InvalidSpec(e.to_string()))?,
        }
        if *self.cond_size.end() > MAX_CONDITIONING || self.cond_size.is_empty() {
            return bad(format!(
                "conditioning size range {:?} outside 0..={MAX_CONDITIONING}",
                self.cond_size
            ));
        }
        Ok(())
    }

    fn dag_config(&self) -> DagConfig {
        DagConfig {
            num_nodes_range: self.num_nodes.clone(),
            edge_density_range: self.density,
            name_len_range: self.name_len.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub task: Task,
    pub suite: Suite,
    pub count: usize,
    pub seed: u64,
    pub params: SuiteParams,
}

impl GenerationSpec {
    pub fn new(task: Task, suite: Suite, count: usize, seed: u64) -> Self {
        GenerationSpec {
            task,
            suite,
            count,
            seed,
            params: SuiteParams::defaults(task, suite),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// The line is not a well-formed three-key JSON record.
    MalformedRecord,
    PremiseParse,
    HypothesisParse,
    LabelMismatch,
    EdgeCountLow,
    EdgeCountHigh,
    UnreachablePair,
    /// The capped d-separation answer differs from the exact one.
    PathLimit,
    NameCollision,
    AttemptLimit,
}

impl RejectReason {
    pub const ALL: [RejectReason; 10] = [
        RejectReason::MalformedRecord,
        RejectReason::PremiseParse,
        RejectReason::HypothesisParse,
        RejectReason::LabelMismatch,
        RejectReason::EdgeCountLow,
        RejectReason::EdgeCountHigh,
        RejectReason::UnreachablePair,
        RejectReason::PathLimit,
        RejectReason::NameCollision,
        RejectReason::AttemptLimit,
    ];
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("enum serializes");
        f.write_str(s.as_str().expect("unit variant"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineFailure {
    pub line: usize,
    pub reason: RejectReason,
    pub detail: String,
}

/// Attempt and rejection accounting for generation or file validation.
///
/// For generation, `attempted` counts individual tries and every failed try
/// records its reason; an example slot that exhausts its tries additionally
/// records one `attempt-limit`. For files, `attempted` is the line count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub attempted: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub rejections: BTreeMap<RejectReason, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<LineFailure>,
}

impl Default for ValidationReport {
    fn default() -> Self {
        ValidationReport {
            attempted: 0,
            accepted: 0,
            acceptance_rate: 0.0,
            rejections: RejectReason::ALL.iter().map(|&r| (r, 0)).collect(),
            failures: Vec::new(),
        }
    }
}

impl ValidationReport {
    pub fn reject(&mut self, reason: RejectReason) {
        *self.rejections.entry(reason).or_insert(0) += 1;
    }

    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejections.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_rejections(&self) -> usize {
        self.rejections.values().sum()
    }

    fn finish(&mut self) {
        self.acceptance_rate = if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        };
    }
}

/// A failed generation or validation step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

impl Rejection {
    fn new(reason: RejectReason, detail: impl Into<String>) -> Self {
        Rejection {
            reason,
            detail: detail.into(),
        }
    }
}

fn graph_rejection(e: GraphError) -> Rejection {
    match e {
        GraphError::NameCollision(_) => Rejection::new(RejectReason::NameCollision, e.to_string()),
        other => Rejection::new(RejectReason::PremiseParse, other.to_string()),
    }
}

/// Recomputes the answer to `query` on `g`.
pub fn oracle_answer(g: &Dag, query: &Query) -> Result<bool, GraphError> {
    match query.kind() {
        QueryKind::Transitivity => find_path(g, query.a(), query.b()),
        QueryKind::DSeparation => d_separated(g, query.a(), query.b(), query.z()),
    }
}

/// Structural checks applied to graphs behind d-separation queries.
pub fn check_dsep_graph(g: &Dag, query: &Query) -> Result<(), Rejection> {
    let v = g.node_count();
    let e = g.edge_count();
    if e + 1 < v {
        return Err(Rejection::new(
            RejectReason::EdgeCountLow,
            format!("{e} edges for {v} nodes"),
        ));
    }
    if e > 3 * v {
        return Err(Rejection::new(
            RejectReason::EdgeCountHigh,
            format!("{e} edges for {v} nodes"),
        ));
    }
    let a = g.index_of(query.a()).map_err(unknown_node)?;
    let b = g.index_of(query.b()).map_err(unknown_node)?;
    match g.undirected_distance(a, b) {
        Some(d) if d <= MAX_PATH_LEN => {}
        _ => {
            return Err(Rejection::new(
                RejectReason::UnreachablePair,
                format!(
                    "no path of at most {MAX_PATH_LEN} edges between {} and {}",
                    query.a(),
                    query.b()
                ),
            ))
        }
    }
    if v > MAX_PATH_LEN + 1 {
        let capped = d_separated(g, query.a(), query.b(), query.z()).map_err(unknown_node)?;
        let exact = d_separated_exact(g, query.a(), query.b(), query.z()).map_err(unknown_node)?;
        if capped != exact {
            return Err(Rejection::new(
                RejectReason::PathLimit,
                "answer depends on paths past the length cap",
            ));
        }
    }
    Ok(())
}

fn unknown_node(e: GraphError) -> Rejection {
    Rejection::new(RejectReason::HypothesisParse, e.to_string())
}

/// Re-runs every check on an example using only its text.
pub fn validate_example(example: &Example) -> Result<(), Rejection> {
    let g =
        parse_premise_graph(&example.premise).map_err(|e| Rejection::new(RejectReason::PremiseParse, e.to_string()))?;
    let query = parse_hypothesis(&example.hypothesis)
        .map_err(|e| Rejection::new(RejectReason::HypothesisParse, e.to_string()))?;
    for n in [query.a(), query.b()].into_iter().chain(query.z().iter()) {
        if !g.contains(n) {
            return Err(Rejection::new(
                RejectReason::HypothesisParse,
                format!("query node {n} does not appear in the premise"),
            ));
        }
    }
    if query.kind() == QueryKind::DSeparation {
        check_dsep_graph(&g, &query)?;
    }
    let truth = oracle_answer(&g, &query).map_err(unknown_node)?;
    let expected = Label::from_bool(truth);
    if expected != example.label {
        return Err(Rejection::new(
            RejectReason::LabelMismatch,
            format!("label {} but graph says {expected}", example.label),
        ));
    }
    Ok(())
}

/// Derives the independent seed for example slot `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5eed)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn build_graph<R: Rng + ?Sized>(params: &SuiteParams, rng: &mut R) -> Result<Dag, Rejection> {
    let g = match params.graph {
        GraphKind::Chain => {
            let p_flip = *params.p_flip.choose(rng).expect("validated nonempty");
            let length = rng.gen_range(params.chain_len.clone());
            let names = sample_names(length, &params.name_len, rng).map_err(graph_rejection)?;
            chain_from_names(names, p_flip, rng).map_err(graph_rejection)?
        }
        GraphKind::Dag => generate_dag(&params.dag_config(), rng).map_err(graph_rejection)?,
    };
    let g = if params.reverse_edges { g.reversed() } else { g };
    Ok(g.without_isolated())
}

fn pick_pair<R: Rng + ?Sized>(count: usize, rng: &mut R) -> (usize, usize) {
    let a = rng.gen_range(0..count);
    let mut b = rng.gen_range(0..count - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

fn pick_query<R: Rng + ?Sized>(task: Task, params: &SuiteParams, g: &Dag, rng: &mut R) -> Result<Query, Rejection> {
    let names = g.nodes();
    let invalid = |e: GraphError| Rejection::new(RejectReason::HypothesisParse, e.to_string());
    match task {
        Task::Transitivity => {
            if params.balance {
                let want = rng.gen_bool(0.5);
                let pairs: Vec<(usize, usize)> = (0..names.len())
                    .flat_map(|a| (0..names.len()).map(move |b| (a, b)))
                    .filter(|&(a, b)| a != b && crate::graph::reaches(g, a, b) == want)
                    .collect();
                if let Some(&(a, b)) = pairs.choose(rng) {
                    return Query::transitivity(names[a].clone(), names[b].clone()).map_err(invalid);
                }
            }
            let (a, b) = pick_pair(names.len(), rng);
            Query::transitivity(names[a].clone(), names[b].clone()).map_err(invalid)
        }
        Task::DSeparation => {
            let (a, b) = pick_pair(names.len(), rng);
            let rest: Vec<&NodeName> = (0..names.len())
                .filter(|&i| i != a && i != b)
                .map(|i| &names[i])
                .collect();
            let size = rng.gen_range(params.cond_size.clone()).min(rest.len());
            let z = ConditioningSet::new(rest.choose_multiple(rng, size).map(|&n| n.clone())).map_err(invalid)?;
            Query::d_separation(names[a].clone(), names[b].clone(), z).map_err(invalid)
        }
    }
}

fn premise_order<R: Rng + ?Sized>(edge_count: usize, shuffle: bool, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..edge_count).collect();
    if shuffle {
        order.shuffle(rng);
    }
    order
}

fn finish_example(g: &Dag, order: &[usize], query: &Query) -> Result<Example, Rejection> {
    let truth = oracle_answer(g, query).map_err(unknown_node)?;
    let edges = g.edges();
    let example = Example {
        premise: render_edges(order.iter().map(|&i| &edges[i])),
        hypothesis: render_hypothesis(query),
        label: Label::from_bool(truth),
    };
    validate_example(&example)?;
    Ok(example)
}

/// A single generation attempt: build, query, render, label, re-validate.
pub fn try_generate_example<R: Rng + ?Sized>(
    task: Task,
    params: &SuiteParams,
    rng: &mut R,
) -> Result<Example, Rejection> {
    let g = build_graph(params, rng)?;
    if g.node_count() < 2 {
        return Err(Rejection::new(RejectReason::EdgeCountLow, "graph has no edges"));
    }
    let query = pick_query(task, params, &g, rng)?;
    let order = premise_order(g.edge_count(), params.shuffle_premise, rng);
    finish_example(&g, &order, &query)
}

/// Up to `max_attempts` tries, recording each outcome in `report`.
pub fn generate_example<R: Rng + ?Sized>(
    task: Task,
    params: &SuiteParams,
    rng: &mut R,
    max_attempts: usize,
    report: &mut ValidationReport,
) -> Option<Example> {
    retry(max_attempts, report, || try_generate_example(task, params, rng))
}

fn retry(
    max_attempts: usize,
    report: &mut ValidationReport,
    mut attempt: impl FnMut() -> Result<Example, Rejection>,
) -> Option<Example> {
    for _ in 0..max_attempts {
        report.attempted += 1;
        match attempt() {
            Ok(ex) => {
                report.accepted += 1;
                return Some(ex);
            }
            Err(r) => report.reject(r.reason),
        }
    }
    report.reject(RejectReason::AttemptLimit);
    None
}

/// Generates exactly `spec.count` accepted examples.
///
/// Each example slot draws from its own seed derived from `(spec.seed, index)`,
/// so output is a pure function of the spec.
pub fn generate_suite(spec: &GenerationSpec) -> Result<(Vec<Example>, ValidationReport), DatasetError> {
    if spec.suite == Suite::Adversarial {
        return generate_adversarial(&AdversarialSpec::new(spec.count, spec.seed));
    }
    if spec.count == 0 {
        return Err(DatasetError::InvalidSpec("count must be at least 1".into()));
    }
    spec.params.validate()?;
    let budget = spec.count * SUITE_BUDGET_FACTOR;
    let mut report = ValidationReport::default();
    let mut out = Vec::with_capacity(spec.count);
    let mut index = 0u64;
    while out.len() < spec.count {
        if report.attempted >= budget {
            report.finish();
            return Err(DatasetError::BudgetExhausted {
                requested: spec.count,
                report,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, index));
        index += 1;
        let tries = EXAMPLE_ATTEMPTS.min(budget - report.attempted);
        if let Some(ex) = generate_example(spec.task, &spec.params, &mut rng, tries, &mut report) {
            out.push(ex);
        }
    }
    report.finish();
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialKind {
    IrrelevantNodes,
    BrokenChains,
    ExtendedTransitivity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarialSpec {
    pub count: usize,
    pub seed: u64,
}

impl AdversarialSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        AdversarialSpec { count, seed }
    }

    /// Irrelevant, broken and extended counts: 30%, 30%, remainder.
    pub fn mix(&self) -> (usize, usize, usize) {
        let irrelevant = self.count * 3 / 10;
        let broken = self.count * 3 / 10;
        (irrelevant, broken, self.count - irrelevant - broken)
    }
}

const ADV_NAME_LEN: RangeInclusive<usize> = 1..=3;
const ADV_P_FLIP: [f64; 3] = [0.0, 0.3, 0.5];

/// Cuts `names` into consecutive chains of the given node counts.
fn chains_over<R: Rng + ?Sized>(
    names: &[NodeName],
    lengths: &[usize],
    p_flip: &[f64],
    rng: &mut R,
) -> Result<Vec<Dag>, Rejection> {
    let mut start = 0;
    let mut chains = Vec::with_capacity(lengths.len());
    for (&len, &p) in lengths.iter().zip(p_flip) {
        chains.push(chain_from_names(names[start..start + len].to_vec(), p, rng).map_err(graph_rejection)?);
        start += len;
    }
    Ok(chains)
}

fn union(chains: &[Dag]) -> Result<Dag, Rejection> {
    let edges: Vec<Edge> = chains.iter().flat_map(|c| c.edges()).collect();
    Dag::from_edges(edges).map_err(graph_rejection)
}

fn try_adversarial<R: Rng + ?Sized>(kind: AdversarialKind, rng: &mut R) -> Result<Example, Rejection> {
    let invalid = |e: GraphError| Rejection::new(RejectReason::HypothesisParse, e.to_string());
    match kind {
        AdversarialKind::IrrelevantNodes => {
            let main_len = rng.gen_range(3..=5);
            let extra = rng.gen_range(1..=3);
            let mut lengths = vec![main_len];
            lengths.extend((0..extra).map(|_| rng.gen_range(2..=4)));
            let flips: Vec<f64> = lengths
                .iter()
                .map(|_| *ADV_P_FLIP.choose(rng).expect("nonempty"))
                .collect();
            let names = sample_names(lengths.iter().sum(), &ADV_NAME_LEN, rng).map_err(graph_rejection)?;
            let chains = chains_over(&names, &lengths, &flips, rng)?;
            let g = union(&chains)?;
            let (a, b) = pick_pair(main_len, rng);
            let query = Query::transitivity(names[a].clone(), names[b].clone()).map_err(invalid)?;
            finish_example(&g, &(0..g.edge_count()).collect::<Vec<_>>(), &query)
        }
        AdversarialKind::BrokenChains => {
            let k = rng.gen_range(2..=3);
            let lengths: Vec<usize> = (0..k).map(|_| rng.gen_range(2..=4)).collect();
            let names = sample_names(lengths.iter().sum(), &ADV_NAME_LEN, rng).map_err(graph_rejection)?;
            let chains = chains_over(&names, &lengths, &vec![0.0; k], rng)?;
            let g = union(&chains)?;
            let (ca, cb) = pick_pair(k, rng);
            let a = chains[ca].nodes().choose(rng).expect("chain has nodes").clone();
            let b = chains[cb].nodes().choose(rng).expect("chain has nodes").clone();
            let query = Query::transitivity(a, b).map_err(invalid)?;
            let ex = finish_example(&g, &(0..g.edge_count()).collect::<Vec<_>>(), &query)?;
            debug_assert_eq!(ex.label, Label::No);
            Ok(ex)
        }
        AdversarialKind::ExtendedTransitivity => {
            let len = rng.gen_range(7..=12);
            let names = sample_names(len, &ADV_NAME_LEN, rng).map_err(graph_rejection)?;
            let g = chain_from_names(names.clone(), 0.0, rng).map_err(graph_rejection)?;
            let query = Query::transitivity(names[0].clone(), names[len - 1].clone()).map_err(invalid)?;
            finish_example(&g, &(0..g.edge_count()).collect::<Vec<_>>(), &query)
        }
    }
}

/// Adversarial suite with an exact 30/30/40 mix, in seeded shuffled order.
pub fn generate_adversarial(spec: &AdversarialSpec) -> Result<(Vec<Example>, ValidationReport), DatasetError> {
    let (examples, _, report) = generate_adversarial_tagged(spec)?;
    Ok((examples, report))
}

/// Like [`generate_adversarial`], also returning each example's construction.
pub fn generate_adversarial_tagged(
    spec: &AdversarialSpec,
) -> Result<(Vec<Example>, Vec<AdversarialKind>, ValidationReport), DatasetError> {
    if spec.count == 0 {
        return Err(DatasetError::InvalidSpec("count must be at least 1".into()));
    }
    let (irrelevant, broken, extended) = spec.mix();
    let mut kinds = Vec::with_capacity(spec.count);
    kinds.extend(std::iter::repeat_n(AdversarialKind::IrrelevantNodes, irrelevant));
    kinds.extend(std::iter::repeat_n(AdversarialKind::BrokenChains, broken));
    kinds.extend(std::iter::repeat_n(AdversarialKind::ExtendedTransitivity, extended));
    kinds.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, u64::MAX)));

    let budget = spec.count * SUITE_BUDGET_FACTOR;
    let mut report = ValidationReport::default();
    let mut out = Vec::with_capacity(spec.count);
    let mut index = 0u64;
    for &kind in &kinds {
        loop {
            if report.attempted >= budget {
                report.finish();
                return Err(DatasetError::BudgetExhausted {
                    requested: spec.count,
                    report,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, index));
            index += 1;
            let tries = ADVERSARIAL_ATTEMPTS.min(budget - report.attempted);
            if let Some(ex) = retry(tries, &mut report, || try_adversarial(kind, &mut rng)) {
                out.push(ex);
                break;
            }
        }
    }
    report.finish();
    Ok((out, kinds, report))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    premise: String,
    hypothesis: String,
    label: String,
}

/// One JSON object per line, keys in the order premise, hypothesis, label.
pub fn format_jsonl(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        let rec = Record {
            premise: ex.premise.clone(),
            hypothesis: ex.hypothesis.clone(),
            label: ex.label.as_str().to_string(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(examples: &[Example], path: &Path) -> Result<(), DatasetError> {
    let mut f = File::create(path)?;
    f.write_all(format_jsonl(examples).as_bytes())?;
    Ok(())
}

/// Parses a single JSONL record.
pub fn parse_record(line: &str) -> Result<Example, String> {
    let rec: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let label = Label::parse(&rec.label).ok_or_else(|| format!("label {:?} is not Yes or No", rec.label))?;
    Ok(Example {
        premise: rec.premise,
        hypothesis: rec.hypothesis,
        label,
    })
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Example>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let ex = parse_record(&line).map_err(|message| DatasetError::Malformed { line: i + 1, message })?;
        out.push(ex);
    }
    Ok(out)
}

/// Validates every line of a JSONL file; line numbers start at 1.
pub fn validate_file(path: &Path) -> Result<ValidationReport, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut report = ValidationReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        report.attempted += 1;
        let outcome = parse_record(&line)
            .map_err(|m| Rejection::new(RejectReason::MalformedRecord, m))
            .and_then(|ex| validate_example(&ex));
        match outcome {
            Ok(()) => report.accepted += 1,
            Err(r) => {
                report.reject(r.reason);
                report.failures.push(LineFailure {
                    line: i + 1,
                    reason: r.reason,
                    detail: r.detail,
                });
            }
        }
    }
    report.finish();
    Ok(report)
}
