//! Vose's alias method. Tables are stored flat so that many small tables can
//! share two allocations.

use rand::Rng;

/// Appends the alias table for `weights` to `prob`/`alias`. Indices written to
/// `alias` are local to this table. All-zero weights produce a uniform table.
pub fn build_into(weights: &[f64], prob: &mut Vec<f32>, alias: &mut Vec<u32>) {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let start = prob.len();
    prob.resize(start + n, 1.0);
    alias.extend(0..n as u32);
    if n == 0 || total <= 0.0 {
        return;
    }
    let scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
    let mut work = scaled.clone();
    let mut small = Vec::new();
    let mut large = Vec::new();
    for (i, &s) in scaled.iter().enumerate() {
        if s < 1.0 {
            small.push(i);
        } else {
            large.push(i);
        }
    }
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        prob[start + s] = work[s] as f32;
        alias[start + s] = l as u32;
        work[l] = (work[l] + work[s]) - 1.0;
        if work[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    // leftovers are 1 up to rounding
    for i in small.into_iter().chain(large) {
        prob[start + i] = 1.0;
    }
}

/// Draws from a table previously written by [`build_into`].
#[inline]
pub fn sample<R: Rng + ?Sized>(prob: &[f32], alias: &[u32], rng: &mut R) -> usize {
    let i = rng.gen_range(0..prob.len());
    if rng.gen::<f32>() < prob[i] {
        i
    } else {
        alias[i] as usize
    }
}

/// A single standalone alias table.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f32>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Self {
        let mut prob = Vec::with_capacity(weights.len());
        let mut alias = Vec::with_capacity(weights.len());
        build_into(weights, &mut prob, &mut alias);
        Self { prob, alias }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample(&self.prob, &self.alias, rng)
    }

    /// Exact probability of each outcome implied by the table.
    pub fn implied_distribution(&self) -> Vec<f64> {
        let n = self.len();
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let p = self.prob[i] as f64;
            dist[i] += p / n as f64;
            dist[self.alias[i] as usize] += (1.0 - p) / n as f64;
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn implied_distribution_matches_weights() {
        let weights = [2.0, 0.5, 1.0, 0.0, 4.5];
        let table = AliasTable::new(&weights);
        let total: f64 = weights.iter().sum();
        for (got, w) in table.implied_distribution().iter().zip(weights) {
            assert!((got - w / total).abs() < 1e-6, "{got} vs {}", w / total);
        }
    }

    #[test]
    fn single_outcome_always_sampled() {
        let table = AliasTable::new(&[3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| table.sample(&mut rng) == 0));
    }

    #[test]
    fn empirical_frequencies() {
        let table = AliasTable::new(&[2.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let hits = (0..n).filter(|_| table.sample(&mut rng) == 0).count();
        assert!((hits as f64 / n as f64 - 0.8).abs() < 0.01);
    }
}
