//! Small generated graphs and knowledge graphs with known structure, used by
//! the test suites and handy for smoke-testing the CLI.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{build_graph, Adjacency, KnowledgeGraph, NameMap, Triple};
use crate::text::WordEmbeddings;

pub fn triangle() -> Adjacency {
    Adjacency::from_edges(3, [(0, 1), (1, 2), (2, 0)])
}

pub fn path(nodes: usize) -> Adjacency {
    Adjacency::from_edges(nodes, (1..nodes as u32).map(|v| (v - 1, v)))
}

/// Two `k`-cliques, nodes `0..k` and `k..2k`, joined by the edge `(k-1, k)`.
pub fn barbell(k: usize) -> Adjacency {
    let k = k as u32;
    let mut edges = Vec::new();
    for base in [0, k] {
        for a in 0..k {
            for b in a + 1..k {
                edges.push((base + a, base + b));
            }
        }
    }
    edges.push((k - 1, k));
    Adjacency::from_edges(2 * k as usize, edges)
}

const KARATE: &[(u32, &[u32])] = &[
    (1, &[2, 3, 4, 5, 6, 7, 8, 9, 11, 12, 13, 14, 18, 20, 22, 32]),
    (2, &[3, 4, 8, 14, 18, 20, 22, 31]),
    (3, &[4, 8, 9, 10, 14, 28, 29, 33]),
    (4, &[8, 13, 14]),
    (5, &[7, 11]),
    (6, &[7, 11, 17]),
    (7, &[17]),
    (9, &[31, 33, 34]),
    (10, &[34]),
    (14, &[34]),
    (15, &[33, 34]),
    (16, &[33, 34]),
    (19, &[33, 34]),
    (20, &[34]),
    (21, &[33, 34]),
    (23, &[33, 34]),
    (24, &[26, 28, 30, 33, 34]),
    (25, &[26, 28, 32]),
    (26, &[32]),
    (27, &[30, 34]),
    (28, &[34]),
    (29, &[32, 34]),
    (30, &[33, 34]),
    (31, &[33, 34]),
    (32, &[33, 34]),
    (33, &[34]),
];

/// Zachary's karate club: 34 nodes, 78 undirected edges.
pub fn karate_club() -> Adjacency {
    let edges = KARATE
        .iter()
        .flat_map(|&(a, bs)| bs.iter().map(move |&b| (a - 1, b - 1)));
    Adjacency::from_edges(34, edges)
}

/// A knowledge graph in raw string form with entity names and word vectors
/// covering every name token.
#[derive(Debug, Clone)]
pub struct SyntheticKg {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    /// `(entity id, display name)`, one per entity.
    pub names: Vec<(String, String)>,
    pub words: Vec<(String, Vec<f32>)>,
    pub dim: usize,
}

/// Paths written by [`SyntheticKg::write_to_dir`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub names: PathBuf,
    pub word_vectors: PathBuf,
}

impl SyntheticKg {
    pub fn graph(&self) -> KnowledgeGraph {
        build_graph(&self.train, &self.valid, &self.test)
    }

    pub fn name_map(&self) -> NameMap {
        let mut m = NameMap::default();
        for (id, name) in &self.names {
            m.insert(id.clone(), name.clone());
        }
        m
    }

    pub fn word_embeddings(&self) -> WordEmbeddings {
        let mut emb = WordEmbeddings::new(self.dim);
        for (w, v) in &self.words {
            emb.insert(w, v).expect("generated vectors have the right width");
        }
        emb
    }

    /// Display names in the entity order of [`SyntheticKg::graph`].
    pub fn entity_names(&self, graph: &KnowledgeGraph) -> Vec<String> {
        let map = self.name_map();
        graph
            .entities
            .items()
            .iter()
            .map(|id| map.lookup(id).name.to_owned())
            .collect()
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<SyntheticFiles> {
        std::fs::create_dir_all(dir)?;
        let files = SyntheticFiles {
            train: dir.join("train.txt"),
            valid: dir.join("valid.txt"),
            test: dir.join("test.txt"),
            names: dir.join("names.txt"),
            word_vectors: dir.join("vectors.txt"),
        };
        let write = |path: &Path, lines: &mut dyn Iterator<Item = String>| -> Result<()> {
            let mut w = BufWriter::new(File::create(path).map_err(|e| Error::from(e).in_file(path))?);
            for line in lines {
                writeln!(w, "{line}")?;
            }
            w.flush()?;
            Ok(())
        };
        write(&files.train, &mut self.train.iter().map(|t| t.to_string()))?;
        write(&files.valid, &mut self.valid.iter().map(|t| t.to_string()))?;
        write(&files.test, &mut self.test.iter().map(|t| t.to_string()))?;
        write(&files.names, &mut self.names.iter().map(|(id, n)| format!("{id}\t{n}")))?;
        write(
            &files.word_vectors,
            &mut self.words.iter().map(|(word, v)| {
                let nums: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                format!("{word} {}", nums.join(" "))
            }),
        )?;
        Ok(files)
    }
}

fn random_words(count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(count);
    while words.len() < count {
        let w: String = (0..7).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

fn random_vectors(words: &[String], dim: usize, rng: &mut ChaCha8Rng) -> Vec<(String, Vec<f32>)> {
    words
        .iter()
        .map(|w| (w.clone(), (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()))
        .collect()
}

/// Shuffles and splits into (train, valid, test) with the given fractions.
fn split_triples(
    mut triples: Vec<Triple>,
    valid_frac: f64,
    test_frac: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<Triple>, Vec<Triple>, Vec<Triple>) {
    triples.shuffle(rng);
    let n = triples.len();
    let n_test = (n as f64 * test_frac).round() as usize;
    let n_valid = (n as f64 * valid_frac).round() as usize;
    let test = triples.split_off(n - n_test);
    let valid = triples.split_off(n - n_test - n_valid);
    (triples, valid, test)
}

/// Typed entities whose names carry the type: `"<type word> <own word>"`.
/// Every triple connects entities of different types and its relation is the
/// type of the tail, so the tail's type word plus its position in the pair
/// determine the relation, and no relation holds in both directions.
pub fn typed_kg(entities: usize, types: usize, triples: usize, dim: usize, seed: u64) -> SyntheticKg {
    assert!(types >= 2, "need at least two types");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = random_words(types + entities, &mut rng);
    let (type_words, own_words) = vocab.split_at(types);
    let ty = |e: usize| e % types;
    let names = (0..entities)
        .map(|e| (format!("e{e}"), format!("{} {}", type_words[ty(e)], own_words[e])))
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(triples);
    while out.len() < triples {
        let a = rng.gen_range(0..entities);
        let b = rng.gen_range(0..entities);
        if ty(a) == ty(b) || !seen.insert((a, b)) {
            continue;
        }
        let r = ty(b);
        out.push(Triple::new(format!("e{a}"), format!("r{r}"), format!("e{b}")));
    }
    let (train, valid, test) = split_triples(out, 0.1, 0.1, &mut rng);
    SyntheticKg {
        train,
        valid,
        test,
        names,
        words: random_vectors(&vocab, dim, &mut rng),
        dim,
    }
}

/// Entities in `clusters` communities of `size` nodes. Most triples stay
/// inside a community; the relation is the ordered pair of communities.
/// Names are two words drawn from a small shared pool, so they carry no
/// information about the community.
pub fn clustered_kg(
    clusters: usize,
    size: usize,
    triples: usize,
    inter_fraction: f64,
    dim: usize,
    seed: u64,
) -> SyntheticKg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = clusters * size;
    let pool = random_words(5, &mut rng);
    let names = (0..entities)
        .map(|e| {
            let a = pool.choose(&mut rng).unwrap();
            let b = pool.choose(&mut rng).unwrap();
            (format!("n{e}"), format!("{a} {b}"))
        })
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(triples);
    while out.len() < triples {
        let ca = rng.gen_range(0..clusters);
        let cb = if rng.gen_bool(inter_fraction) {
            (ca + rng.gen_range(1..clusters)) % clusters
        } else {
            ca
        };
        let a = ca * size + rng.gen_range(0..size);
        let b = cb * size + rng.gen_range(0..size);
        if a == b || !seen.insert((a, b)) {
            continue;
        }
        out.push(Triple::new(
            format!("n{a}"),
            format!("c{ca}_{cb}"),
            format!("n{b}"),
        ));
    }
    let (train, valid, test) = split_triples(out, 0.1, 0.1, &mut rng);
    SyntheticKg {
        train,
        valid,
        test,
        names,
        words: random_vectors(&pool, dim, &mut rng),
        dim,
    }
}
