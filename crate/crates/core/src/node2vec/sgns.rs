//! Skip-gram with negative sampling over a walk corpus.
//!
//! For each positive pair `(u, v)` within `window` positions in a walk, the
//! trainer ascends `log σ(e_u·e'_v) + Σ_n log σ(−e_u·e'_n)` where `e` are input
//! vectors, `e'` output vectors and the `n` are drawn from the corpus unigram
//! distribution raised to 0.75.

use std::cell::Cell;
use std::io::Write;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::alias::AliasTable;
use super::walk::WalkCorpus;
use crate::error::{Error, Result};
use crate::kg::Vocab;

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f32,
    pub seed: u64,
    /// 1 = deterministic single-threaded; more = lock-free shared updates.
    pub threads: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            window: 10,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            seed: 42,
            threads: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.window < 1 || self.negatives < 1 {
            return Err(Error::Config(
                "sgns dim, window and negatives must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One structural vector per entity, rows in entity-vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    pub matrix: Array2<f32>,
}

impl NodeEmbeddings {
    pub fn zeros(entities: usize, dim: usize) -> Self {
        Self {
            matrix: Array2::zeros((entities, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn row(&self, entity: u32) -> &[f32] {
        let d = self.dim();
        let start = entity as usize * d;
        &self.matrix.as_slice().expect("standard layout")[start..start + d]
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().all(|v| v.is_finite())
    }

    /// Text export: `entity-id v1 ... vd` per line.
    pub fn write_text<W: Write>(&self, entities: &Vocab, mut w: W) -> std::io::Result<()> {
        for (i, id) in entities.items().iter().enumerate() {
            write!(w, "{id}")?;
            for v in self.row(i as u32) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the text export back, in file order.
    pub fn read_text<R: std::io::BufRead>(reader: R) -> Result<(Vec<String>, Self)> {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        crate::kg::for_each_line(reader, |line, text| {
            let mut parts = text.split(' ');
            let id = parts.next().unwrap_or_default();
            let before = data.len();
            for p in parts {
                data.push(p.parse::<f32>().map_err(|_| Error::Parse {
                    line,
                    kind: crate::error::ParseErrorKind::BadFloat(p.to_owned()),
                })?);
            }
            let found = data.len() - before;
            let expected = *dim.get_or_insert(found);
            if found != expected {
                return Err(Error::Parse {
                    line,
                    kind: crate::error::ParseErrorKind::DimMismatch { expected, found },
                });
            }
            ids.push(id.to_owned());
            Ok(())
        })?;
        let dim = dim.unwrap_or(0);
        let matrix = Array2::from_shape_vec((ids.len(), dim), data)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok((ids, Self { matrix }))
    }
}

/// Input vectors uniform in `[-0.5/dim, 0.5/dim]`.
pub fn init_embeddings(entities: usize, dim: usize, seed: u64) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 / dim as f32;
    Array2::from_shape_simple_fn((entities, dim), || rng.gen_range(-half..=half))
}

#[derive(Debug, Clone)]
pub struct SgnsReport {
    /// Mean negative objective per positive pair, one entry per epoch.
    pub epoch_loss: Vec<f64>,
    pub pairs_per_epoch: u64,
}

trait Slot {
    fn get(&self) -> f32;
    fn set(&self, v: f32);
}

impl Slot for Cell<f32> {
    #[inline]
    fn get(&self) -> f32 {
        Cell::get(self)
    }
    #[inline]
    fn set(&self, v: f32) {
        Cell::set(self, v)
    }
}

impl Slot for AtomicU32 {
    #[inline]
    fn get(&self) -> f32 {
        f32::from_bits(self.load(Ordering::Relaxed))
    }
    #[inline]
    fn set(&self, v: f32) {
        self.store(v.to_bits(), Ordering::Relaxed)
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn log_sigmoid(x: f32) -> f64 {
    let x = x as f64;
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// One SGD step on a positive pair and its negatives; returns the pair's loss.
#[allow(clippy::too_many_arguments)]
#[inline]
fn update_pair<S: Slot>(
    input: &[S],
    output: &[S],
    dim: usize,
    center: usize,
    context: usize,
    negatives: &[u32],
    lr: f32,
    grad: &mut [f32],
) -> f64 {
    let eu = &input[center * dim..(center + 1) * dim];
    grad.fill(0.0);
    let mut loss = 0.0;
    let targets = std::iter::once((context, 1.0f32))
        .chain(negatives.iter().map(|&n| (n as usize, 0.0f32)));
    for (target, label) in targets {
        let eo = &output[target * dim..(target + 1) * dim];
        let score: f32 = eu.iter().zip(eo).map(|(a, b)| a.get() * b.get()).sum();
        loss -= if label > 0.5 {
            log_sigmoid(score)
        } else {
            log_sigmoid(-score)
        };
        let g = lr * (label - sigmoid(score));
        for k in 0..dim {
            grad[k] += g * eo[k].get();
            eo[k].set(eo[k].get() + g * eu[k].get());
        }
    }
    for k in 0..dim {
        eu[k].set(eu[k].get() + grad[k]);
    }
    loss
}

fn count_pairs(corpus: &WalkCorpus, window: usize) -> u64 {
    corpus
        .walks
        .iter()
        .map(|w| {
            (0..w.len())
                .map(|i| (i.min(window) + (w.len() - 1 - i).min(window)) as u64)
                .sum::<u64>()
        })
        .sum()
}

fn negative_table(corpus: &WalkCorpus, entities: usize) -> AliasTable {
    let mut counts = vec![0u64; entities];
    for walk in &corpus.walks {
        for &n in walk {
            counts[n as usize] += 1;
        }
    }
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    AliasTable::new(&weights)
}

struct Schedule {
    initial_lr: f32,
    total: u64,
}

impl Schedule {
    fn lr(&self, processed: u64) -> f32 {
        let frac = 1.0 - processed as f64 / self.total.max(1) as f64;
        self.initial_lr * frac.max(1e-4) as f32
    }
}

/// Walks one slice of the corpus, updating the shared parameters. Returns
/// (loss sum, pairs processed).
#[allow(clippy::too_many_arguments)]
fn train_walks<S: Slot>(
    walks: &[Vec<u32>],
    input: &[S],
    output: &[S],
    config: &SgnsConfig,
    negatives: &AliasTable,
    schedule: &Schedule,
    processed: &AtomicU64,
    rng: &mut ChaCha8Rng,
) -> (f64, u64) {
    let dim = config.dim;
    let mut grad = vec![0.0f32; dim];
    let mut negs = Vec::with_capacity(config.negatives);
    let mut loss = 0.0;
    let mut local = 0u64;
    let mut lr = schedule.lr(processed.load(Ordering::Relaxed));
    for walk in walks {
        for (i, &center) in walk.iter().enumerate() {
            let lo = i.saturating_sub(config.window);
            let hi = (i + config.window).min(walk.len() - 1);
            for j in lo..=hi {
                if j == i {
                    continue;
                }
                let context = walk[j];
                negs.clear();
                for _ in 0..config.negatives {
                    let n = negatives.sample(rng) as u32;
                    if n != context {
                        negs.push(n);
                    }
                }
                loss += update_pair(
                    input,
                    output,
                    dim,
                    center as usize,
                    context as usize,
                    &negs,
                    lr,
                    &mut grad,
                );
                local += 1;
                if local % 1024 == 0 {
                    let done = processed.fetch_add(1024, Ordering::Relaxed) + 1024;
                    lr = schedule.lr(done);
                }
            }
        }
    }
    processed.fetch_add(local % 1024, Ordering::Relaxed);
    (loss, local)
}

/// Trains structural embeddings for `entities` nodes. With `threads == 1` the
/// result is bit-identical for a fixed seed.
pub fn train_sgns(
    corpus: &WalkCorpus,
    entities: usize,
    config: &SgnsConfig,
) -> Result<(NodeEmbeddings, SgnsReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("walk corpus".into()));
    }
    let dim = config.dim;
    let mut input = init_embeddings(entities, dim, config.seed);
    let mut output = vec![0.0f32; entities * dim];
    let pairs_per_epoch = count_pairs(corpus, config.window);
    let schedule = Schedule {
        initial_lr: config.initial_lr,
        total: pairs_per_epoch * config.epochs as u64,
    };
    let negatives = negative_table(corpus, entities);
    let processed = AtomicU64::new(0);
    let mut epoch_loss = Vec::with_capacity(config.epochs);

    if pairs_per_epoch == 0 {
        return Ok((
            NodeEmbeddings { matrix: input },
            SgnsReport {
                epoch_loss,
                pairs_per_epoch,
            },
        ));
    }

    let input_slice = input.as_slice_mut().expect("standard layout");
    if config.threads <= 1 {
        let input_cells = Cell::from_mut(input_slice).as_slice_of_cells();
        let output_cells = Cell::from_mut(output.as_mut_slice()).as_slice_of_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_5645);
        for epoch in 0..config.epochs {
            let (loss, n) = train_walks(
                &corpus.walks,
                input_cells,
                output_cells,
                config,
                &negatives,
                &schedule,
                &processed,
                &mut rng,
            );
            let mean = loss / n.max(1) as f64;
            if !mean.is_finite() {
                return Err(Error::NonFinite(format!("sgns loss at epoch {}", epoch + 1)));
            }
            log::debug!("sgns epoch {} loss {mean:.6}", epoch + 1);
            epoch_loss.push(mean);
        }
    } else {
        let shared_in: Vec<AtomicU32> = input_slice.iter().map(|v| AtomicU32::new(v.to_bits())).collect();
        let shared_out: Vec<AtomicU32> = output.iter().map(|v| AtomicU32::new(v.to_bits())).collect();
        let threads = config.threads;
        let chunk = corpus.walks.len().div_ceil(threads);
        for epoch in 0..config.epochs {
            let results: Vec<(f64, u64)> = std::thread::scope(|s| {
                let handles: Vec<_> = corpus
                    .walks
                    .chunks(chunk)
                    .enumerate()
                    .map(|(t, walks)| {
                        let (shared_in, shared_out) = (&shared_in, &shared_out);
                        let (negatives, schedule, processed) = (&negatives, &schedule, &processed);
                        s.spawn(move || {
                            let mut rng = ChaCha8Rng::seed_from_u64(
                                config.seed ^ ((epoch as u64) << 32) ^ t as u64,
                            );
                            train_walks(
                                walks, shared_in, shared_out, config, negatives, schedule,
                                processed, &mut rng,
                            )
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("sgns worker panicked")).collect()
            });
            let (loss, n) = results
                .iter()
                .fold((0.0, 0u64), |(l, c), (l2, c2)| (l + l2, c + c2));
            let mean = loss / n.max(1) as f64;
            if !mean.is_finite() {
                return Err(Error::NonFinite(format!("sgns loss at epoch {}", epoch + 1)));
            }
            epoch_loss.push(mean);
        }
        for (dst, src) in input_slice.iter_mut().zip(&shared_in) {
            *dst = src.get();
        }
    }

    let embeddings = NodeEmbeddings { matrix: input };
    if !embeddings.is_finite() {
        return Err(Error::NonFinite("structural embeddings".into()));
    }
    Ok((
        embeddings,
        SgnsReport {
            epoch_loss,
            pairs_per_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Adjacency;
    use crate::node2vec::walk::{generate_walks, precompute_transitions, WalkConfig};

    fn small_config() -> SgnsConfig {
        SgnsConfig {
            dim: 16,
            epochs: 3,
            ..SgnsConfig::default()
        }
    }

    fn ring_corpus() -> WalkCorpus {
        let adj = Adjacency::from_edges(8, (0..8).map(|i| (i, (i + 1) % 8)));
        let tables = precompute_transitions(&adj, 1.0, 1.0);
        let cfg = WalkConfig {
            walk_length: 12,
            walks_per_node: 5,
            ..WalkConfig::default()
        };
        generate_walks(&adj, &tables, &cfg).unwrap()
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = train_sgns(&WalkCorpus::default(), 3, &small_config()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn singleton_walks_leave_initialization_untouched() {
        let corpus = WalkCorpus {
            walks: vec![vec![0], vec![1], vec![2]],
        };
        let cfg = small_config();
        let (emb, report) = train_sgns(&corpus, 3, &cfg).unwrap();
        assert_eq!(report.pairs_per_epoch, 0);
        assert_eq!(emb.matrix, init_embeddings(3, cfg.dim, cfg.seed));
    }

    #[test]
    fn initialization_range() {
        let m = init_embeddings(10, 20, 1);
        assert!(m.iter().all(|v| v.abs() <= 0.5 / 20.0));
    }

    #[test]
    fn single_thread_is_bit_identical() {
        let corpus = ring_corpus();
        let (a, _) = train_sgns(&corpus, 8, &small_config()).unwrap();
        let (b, _) = train_sgns(&corpus, 8, &small_config()).unwrap();
        assert_eq!(
            a.matrix.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.matrix.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn concurrent_mode_produces_finite_vectors() {
        let cfg = SgnsConfig {
            threads: 3,
            ..small_config()
        };
        let (emb, report) = train_sgns(&ring_corpus(), 8, &cfg).unwrap();
        assert!(emb.is_finite());
        assert_eq!(report.epoch_loss.len(), 3);
    }

    #[test]
    fn pair_count_matches_enumeration() {
        let corpus = WalkCorpus {
            walks: vec![vec![0, 1, 2, 3, 4], vec![5], vec![6, 7]],
        };
        for window in 1..6 {
            let mut brute = 0;
            for w in &corpus.walks {
                for i in 0..w.len() {
                    for j in 0..w.len() {
                        if i != j && i.abs_diff(j) <= window {
                            brute += 1;
                        }
                    }
                }
            }
            assert_eq!(count_pairs(&corpus, window), brute);
        }
    }

    #[test]
    fn text_export_round_trips() {
        let (emb, _) = train_sgns(&ring_corpus(), 8, &small_config()).unwrap();
        let vocab = Vocab::from_items((0..8).map(|i| format!("/m/{i}")));
        let mut buf = Vec::new();
        emb.write_text(&vocab, &mut buf).unwrap();
        let (ids, back) = NodeEmbeddings::read_text(buf.as_slice()).unwrap();
        assert_eq!(ids, vocab.items());
        assert_eq!(back, emb);
    }
}
