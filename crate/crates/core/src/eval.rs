//! Raw and filtered mean rank and Hits@1 for relation prediction.
//!
//! Ranks are optimistic: only strictly higher scores push the target down.
//! The filtered rank additionally ignores other relations known to hold for
//! the same pair.

use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kg::{IndexedTriple, PairRelationIndex};

/// Anything that assigns a score to every relation for a batch of pairs.
pub trait PairScorer: Sync {
    fn num_relations(&self) -> usize;

    /// Scores `(|pairs|, k)`; higher means more likely.
    fn score_pairs(&self, pairs: &[(u32, u32)]) -> Result<Array2<f64>>;
}

pub fn raw_rank(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    1 + scores.iter().filter(|&&v| v > s).count()
}

/// Raw rank minus the other valid relations scored strictly above the target.
pub fn filtered_rank(scores: &[f64], target: usize, valid: &[u32]) -> Result<usize> {
    if !valid.iter().any(|&v| v as usize == target) {
        return Err(Error::TargetNotValid { target });
    }
    let s = scores[target];
    let above = valid
        .iter()
        .filter(|&&v| v as usize != target && scores[v as usize] > s)
        .count();
    Ok(raw_rank(scores, target) - above)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mean_rank: f64,
    /// Percent.
    pub hits_at_1: f64,
    pub filtered_mean_rank: f64,
    /// Percent.
    pub filtered_hits_at_1: f64,
    pub triple_count: usize,
    pub elapsed_secs: f64,
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mean_rank={:.4}", self.mean_rank)?;
        writeln!(f, "hits_at_1={:.2}", self.hits_at_1)?;
        writeln!(f, "filtered_mean_rank={:.4}", self.filtered_mean_rank)?;
        writeln!(f, "filtered_hits_at_1={:.2}", self.filtered_hits_at_1)?;
        writeln!(f, "triple_count={}", self.triple_count)?;
        write!(f, "wall_clock_s={:.2}", self.elapsed_secs)
    }
}

/// Accumulates per-triple ranks; merging is associative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RankAccumulator {
    pub count: usize,
    pub raw_sum: usize,
    pub filtered_sum: usize,
    pub raw_hits: usize,
    pub filtered_hits: usize,
}

impl RankAccumulator {
    pub fn add(&mut self, raw: usize, filtered: usize) {
        self.count += 1;
        self.raw_sum += raw;
        self.filtered_sum += filtered;
        self.raw_hits += (raw == 1) as usize;
        self.filtered_hits += (filtered == 1) as usize;
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            count: self.count + other.count,
            raw_sum: self.raw_sum + other.raw_sum,
            filtered_sum: self.filtered_sum + other.filtered_sum,
            raw_hits: self.raw_hits + other.raw_hits,
            filtered_hits: self.filtered_hits + other.filtered_hits,
        }
    }

    pub fn metrics(&self, elapsed_secs: f64) -> Metrics {
        let n = self.count.max(1) as f64;
        Metrics {
            mean_rank: self.raw_sum as f64 / n,
            hits_at_1: 100.0 * self.raw_hits as f64 / n,
            filtered_mean_rank: self.filtered_sum as f64 / n,
            filtered_hits_at_1: 100.0 * self.filtered_hits as f64 / n,
            triple_count: self.count,
            elapsed_secs,
        }
    }
}

/// Scores every distinct test pair once and ranks each test triple's relation.
pub fn evaluate<S: PairScorer + ?Sized>(
    scorer: &S,
    test: &[IndexedTriple],
    index: &PairRelationIndex,
) -> Result<Metrics> {
    let started = Instant::now();
    if test.is_empty() {
        return Err(Error::EmptyInput("test triples".into()));
    }
    let mut pair_row: HashMap<(u32, u32), usize> = HashMap::new();
    let mut pairs = Vec::new();
    for t in test {
        pair_row.entry(t.pair()).or_insert_with(|| {
            pairs.push(t.pair());
            pairs.len() - 1
        });
    }
    let scores = scorer.score_pairs(&pairs)?;
    if scores.dim() != (pairs.len(), scorer.num_relations()) {
        return Err(Error::Shape(format!(
            "scorer returned {:?} for {} pairs",
            scores.dim(),
            pairs.len()
        )));
    }
    let mut acc = RankAccumulator::default();
    for t in test {
        let row = scores.row(pair_row[&t.pair()]);
        let row = row.as_slice().expect("contiguous scores");
        let target = t.relation as usize;
        let valid = index.get(t.head, t.tail).unwrap_or(&[]);
        let filtered = filtered_rank(row, target, valid)?;
        acc.add(raw_rank(row, target), filtered);
    }
    Ok(acc.metrics(started.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{build_graph, build_pair_index, Triple};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn raw_rank_examples() {
        let s = [0.9, 0.5, 0.7];
        assert_eq!(raw_rank(&s, 0), 1);
        assert_eq!(raw_rank(&s, 1), 3);
        assert_eq!(raw_rank(&[0.5, 0.5, 0.5], 2), 1);
    }

    #[test]
    fn filtered_rank_examples() {
        let s = [0.9, 0.8, 0.1];
        assert_eq!(filtered_rank(&s, 1, &[0, 1]).unwrap(), 1);
        assert_eq!(filtered_rank(&s, 1, &[1]).unwrap(), raw_rank(&s, 1));
        assert!(matches!(
            filtered_rank(&s, 2, &[0, 1]),
            Err(Error::TargetNotValid { target: 2 })
        ));
    }

    #[test]
    fn filtered_never_exceeds_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let s: Vec<f64> = (0..10).map(|_| (rng.gen_range(0..5) as f64) / 4.0).collect();
            let target = rng.gen_range(0..10);
            let mut valid: Vec<u32> = (0..3).map(|_| rng.gen_range(0..10)).collect();
            valid.push(target as u32);
            valid.sort_unstable();
            valid.dedup();
            let raw = raw_rank(&s, target);
            let f = filtered_rank(&s, target, &valid).unwrap();
            assert!(f >= 1 && f <= raw);
            let outranked = valid
                .iter()
                .any(|&v| v as usize != target && s[v as usize] > s[target]);
            assert_eq!(f == raw, !outranked);
        }
    }

    struct Fixed(Vec<Vec<f64>>, HashMap<(u32, u32), usize>);

    impl PairScorer for Fixed {
        fn num_relations(&self) -> usize {
            self.0[0].len()
        }
        fn score_pairs(&self, pairs: &[(u32, u32)]) -> Result<Array2<f64>> {
            let k = self.num_relations();
            let mut out = Array2::zeros((pairs.len(), k));
            for (i, p) in pairs.iter().enumerate() {
                for r in 0..k {
                    out[[i, r]] = self.0[self.1[p]][r];
                }
            }
            Ok(out)
        }
    }

    #[test]
    fn order_invariant_and_hits_cross_check() {
        let t = |h: &str, r: &str, tl: &str| Triple::new(h, r, tl);
        let test = vec![
            t("a", "r0", "b"),
            t("a", "r1", "b"),
            t("b", "r2", "c"),
            t("c", "r0", "a"),
        ];
        let g = build_graph(&[t("a", "r0", "c")], &[], &test);
        let idx = build_pair_index(&g);
        let id = |name: &str| g.entity(name).unwrap();
        let mut rows = HashMap::new();
        rows.insert((id("a"), id("b")), 0);
        rows.insert((id("b"), id("c")), 1);
        rows.insert((id("c"), id("a")), 2);
        let scorer = Fixed(
            vec![vec![0.9, 0.8, 0.1], vec![0.3, 0.2, 0.1], vec![0.5, 0.5, 0.4]],
            rows,
        );
        let m = evaluate(&scorer, &g.test, &idx).unwrap();
        // ranks raw: 1, 2, 3, 1 ; filtered: 1, 1, 3, 1
        assert_eq!(m.triple_count, 4);
        assert!((m.mean_rank - 7.0 / 4.0).abs() < 1e-12);
        assert!((m.filtered_mean_rank - 6.0 / 4.0).abs() < 1e-12);
        assert!((m.hits_at_1 - 50.0).abs() < 1e-12);
        assert!((m.filtered_hits_at_1 - 75.0).abs() < 1e-12);

        let mut reversed = g.test.clone();
        reversed.reverse();
        let m2 = evaluate(&scorer, &reversed, &idx).unwrap();
        assert_eq!(
            (m.mean_rank, m.hits_at_1, m.filtered_mean_rank, m.filtered_hits_at_1),
            (m2.mean_rank, m2.hits_at_1, m2.filtered_mean_rank, m2.filtered_hits_at_1)
        );
    }

    #[test]
    fn accumulator_merge_is_associative() {
        let mut a = RankAccumulator::default();
        a.add(3, 1);
        let mut b = RankAccumulator::default();
        b.add(1, 1);
        let mut c = RankAccumulator::default();
        c.add(2, 2);
        assert_eq!(a.merge(b).merge(c), a.merge(b.merge(c)));
    }
}
