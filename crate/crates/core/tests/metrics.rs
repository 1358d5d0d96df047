//! Reference scorers with known metric values.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relpred::eval::{evaluate, PairScorer};
use relpred::kg::{build_graph, build_pair_index, PairRelationIndex, Triple};
use relpred::Result;

/// Puts probability 1 on every relation the index holds for the pair.
struct Oracle<'a> {
    index: &'a PairRelationIndex,
    k: usize,
}

impl PairScorer for Oracle<'_> {
    fn num_relations(&self) -> usize {
        self.k
    }

    fn score_pairs(&self, pairs: &[(u32, u32)]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((pairs.len(), self.k));
        for (i, &(h, t)) in pairs.iter().enumerate() {
            for &r in self.index.get(h, t).unwrap_or(&[]) {
                out[[i, r as usize]] = 1.0;
            }
        }
        Ok(out)
    }
}

struct Uniform {
    k: usize,
    seed: u64,
}

impl PairScorer for Uniform {
    fn num_relations(&self) -> usize {
        self.k
    }

    fn score_pairs(&self, pairs: &[(u32, u32)]) -> Result<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(Array2::from_shape_fn((pairs.len(), self.k), |_| rng.gen::<f64>()))
    }
}

/// `count` triples over distinct pairs, so every valid set is a singleton.
fn distinct_pair_triples(count: usize, k: usize, seed: u64) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (count as f64).sqrt().ceil() as usize + 1;
    (0..count)
        .map(|i| {
            let (a, b) = (i / side, i % side);
            Triple::new(format!("h{a}"), format!("r{}", rng.gen_range(0..k)), format!("t{b}"))
        })
        .collect()
}

#[test]
fn perfect_scorer_hits_every_optimum() {
    let mut triples = distinct_pair_triples(500, 6, 1);
    // a few pairs with two valid relations
    triples.push(Triple::new("h0", "r0", "t0"));
    triples.push(Triple::new("h0", "r1", "t0"));
    triples.dedup();
    let g = build_graph(&triples[..400], &[], &triples[400..]);
    let index = build_pair_index(&g);
    let scorer = Oracle {
        index: &index,
        k: g.num_relations(),
    };
    let m = evaluate(&scorer, &g.test, &index).unwrap();
    assert_eq!(m.triple_count, g.test.len());
    assert_eq!(m.mean_rank, 1.0);
    assert_eq!(m.hits_at_1, 100.0);
    assert_eq!(m.filtered_mean_rank, 1.0);
    assert_eq!(m.filtered_hits_at_1, 100.0);
}

#[test]
fn uniform_scorer_mean_rank_is_middle_of_range() {
    let k = 21;
    let test = distinct_pair_triples(10_000, k, 2);
    let g = build_graph(&[], &[], &test);
    assert_eq!(g.num_relations(), k);
    let index = build_pair_index(&g);
    let m = evaluate(&Uniform { k, seed: 3 }, &g.test, &index).unwrap();
    let expected = (k as f64 + 1.0) / 2.0;
    assert_eq!(m.triple_count, 10_000);
    assert!((m.mean_rank - expected).abs() <= 0.05 * expected, "MR {}", m.mean_rank);
    assert_eq!(m.mean_rank, m.filtered_mean_rank);
    assert!((m.hits_at_1 - 100.0 / k as f64).abs() < 1.5, "hits {}", m.hits_at_1);
}
