//! Second-order biased random walks.
//!
//! Having arrived at `cur` from `prev`, the next node `x` among `cur`'s
//! neighbors is drawn with unnormalized weight `1/p` if `x == prev`, `1` if `x`
//! is adjacent to `prev`, and `1/q` otherwise. The first step of a walk is
//! uniform over the source's neighbors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::alias;
use crate::error::{Error, Result};
use crate::kg::Adjacency;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 50,
            walks_per_node: 50,
            p: 1.0,
            q: 1.0,
            seed: 42,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 1 || self.walks_per_node < 1 {
            return Err(Error::Config(
                "walk_length and walks_per_node must be at least 1".into(),
            ));
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(Error::Config("p and q must be positive".into()));
        }
        Ok(())
    }
}

/// Above this many alias entries the tables fall back to rejection sampling.
pub const DEFAULT_ALIAS_BUDGET: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// `p == q == 1`: every step is uniform, no tables needed.
    Uniform,
    /// One alias table per directed edge.
    Alias,
    /// Uniform proposal accepted with probability `weight / max_weight`.
    Rejection,
}

#[derive(Debug, Clone)]
pub struct TransitionTables {
    p: f64,
    q: f64,
    strategy: SamplingStrategy,
    // for Alias: table for directed edge at flat position e starts at table_start[e]
    table_start: Vec<usize>,
    prob: Vec<f32>,
    alias: Vec<u32>,
}

/// Unnormalized second-order weight of moving `prev -> cur -> next`.
fn edge_weight(adj: &Adjacency, prev: u32, next: u32, p: f64, q: f64) -> f64 {
    if next == prev {
        1.0 / p
    } else if adj.is_adjacent(prev, next) {
        1.0
    } else {
        1.0 / q
    }
}

/// Exact normalized distribution over `cur`'s neighbors after arriving from `prev`.
pub fn transition_probabilities(
    adj: &Adjacency,
    prev: u32,
    cur: u32,
    p: f64,
    q: f64,
) -> Vec<(u32, f64)> {
    let weights: Vec<f64> = adj
        .neighbors(cur)
        .iter()
        .map(|&x| edge_weight(adj, prev, x, p, q))
        .collect();
    let total: f64 = weights.iter().sum();
    adj.neighbors(cur)
        .iter()
        .zip(weights)
        .map(|(&x, w)| (x, w / total))
        .collect()
}

/// Builds the per-edge sampling tables, choosing the strategy automatically.
pub fn precompute_transitions(adj: &Adjacency, p: f64, q: f64) -> TransitionTables {
    let strategy = if p == 1.0 && q == 1.0 {
        SamplingStrategy::Uniform
    } else if alias_entries(adj) <= DEFAULT_ALIAS_BUDGET {
        SamplingStrategy::Alias
    } else {
        SamplingStrategy::Rejection
    };
    TransitionTables::with_strategy(adj, p, q, strategy)
}

fn alias_entries(adj: &Adjacency) -> usize {
    (0..adj.node_count() as u32)
        .map(|v| adj.degree(v) * adj.degree(v))
        .sum()
}

impl TransitionTables {
    pub fn with_strategy(adj: &Adjacency, p: f64, q: f64, strategy: SamplingStrategy) -> Self {
        let mut tables = Self {
            p,
            q,
            strategy,
            table_start: Vec::new(),
            prob: Vec::new(),
            alias: Vec::new(),
        };
        if strategy == SamplingStrategy::Alias {
            let entries = alias_entries(adj);
            tables.table_start.reserve(adj.entry_count());
            tables.prob.reserve(entries);
            tables.alias.reserve(entries);
            let mut weights = Vec::new();
            for prev in 0..adj.node_count() as u32 {
                for &cur in adj.neighbors(prev) {
                    tables.table_start.push(tables.prob.len());
                    weights.clear();
                    weights.extend(
                        adj.neighbors(cur)
                            .iter()
                            .map(|&x| edge_weight(adj, prev, x, p, q)),
                    );
                    alias::build_into(&weights, &mut tables.prob, &mut tables.alias);
                }
            }
        }
        tables
    }

    pub fn strategy(&self) -> SamplingStrategy {
        self.strategy
    }

    /// Samples the node after `cur`, or `None` when `cur` has no neighbors.
    pub fn next_node<R: Rng + ?Sized>(
        &self,
        adj: &Adjacency,
        prev: Option<u32>,
        cur: u32,
        rng: &mut R,
    ) -> Option<u32> {
        let neighbors = adj.neighbors(cur);
        if neighbors.is_empty() {
            return None;
        }
        let prev = match prev {
            None => return Some(neighbors[rng.gen_range(0..neighbors.len())]),
            Some(prev) => prev,
        };
        let pick = match self.strategy {
            SamplingStrategy::Uniform => rng.gen_range(0..neighbors.len()),
            SamplingStrategy::Alias => {
                // flat position of the directed edge prev -> cur
                let j = adj
                    .neighbors(prev)
                    .binary_search(&cur)
                    .expect("walk stepped along a non-edge");
                let start = self.table_start[adj.offset(prev) + j];
                let end = start + neighbors.len();
                alias::sample(&self.prob[start..end], &self.alias[start..end], rng)
            }
            SamplingStrategy::Rejection => {
                let max_w = (1.0 / self.p).max(1.0).max(1.0 / self.q);
                loop {
                    let i = rng.gen_range(0..neighbors.len());
                    let w = edge_weight(adj, prev, neighbors[i], self.p, self.q);
                    if rng.gen::<f64>() * max_w < w {
                        break i;
                    }
                }
            }
        };
        Some(neighbors[pick])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<u32>>,
}

impl WalkCorpus {
    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// One walk per line, space-separated entity indices.
    pub fn write_to<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for walk in &self.walks {
            let line: Vec<String> = walk.iter().map(u32::to_string).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

fn mix_seed(seed: u64, round: u64, node: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed
        ^ round.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ node.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A single walk of at most `walk_length` nodes starting at `source`.
pub fn walk_from<R: Rng + ?Sized>(
    adj: &Adjacency,
    tables: &TransitionTables,
    source: u32,
    walk_length: usize,
    rng: &mut R,
) -> Vec<u32> {
    let mut walk = Vec::with_capacity(walk_length);
    walk.push(source);
    let mut prev = None;
    let mut cur = source;
    while walk.len() < walk_length {
        match tables.next_node(adj, prev, cur, rng) {
            Some(next) => {
                walk.push(next);
                prev = Some(cur);
                cur = next;
            }
            None => break,
        }
    }
    walk
}

/// Generates `walks_per_node` walks from every node that has neighbors and a
/// single singleton walk for every isolated node. Walks are ordered
/// round-major, nodes in index order within a round; each walk draws from its
/// own RNG stream keyed on (seed, round, node), so the corpus does not depend
/// on the number of worker threads.
pub fn generate_walks(
    adj: &Adjacency,
    tables: &TransitionTables,
    config: &WalkConfig,
) -> Result<WalkCorpus> {
    config.validate()?;
    let nodes: Vec<u32> = (0..adj.node_count() as u32).collect();
    let mut walks = Vec::with_capacity(nodes.len() * config.walks_per_node);
    for round in 0..config.walks_per_node {
        let batch: Vec<Vec<u32>> = nodes
            .par_iter()
            .filter(|&&n| round == 0 || adj.degree(n) > 0)
            .map(|&n| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, round as u64, n as u64));
                walk_from(adj, tables, n, config.walk_length, &mut rng)
            })
            .collect();
        walks.extend(batch);
    }
    Ok(WalkCorpus { walks })
}
