use ndarray::Array2;
use rayon::prelude::*;

use super::network::{forward, Mode};
use super::params::ModelParams;
use super::sequence::PairEncoder;
use crate::error::{Error, Result};
use crate::eval::PairScorer;
use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedRelation {
    pub relation: u32,
    pub probability: f64,
}

/// Relations by descending probability; ties keep ascending index order.
pub fn rank_relations(probs: &[f64]) -> Vec<RankedRelation> {
    let mut ranked: Vec<RankedRelation> = probs
        .iter()
        .enumerate()
        .map(|(r, &p)| RankedRelation {
            relation: r as u32,
            probability: p,
        })
        .collect();
    ranked.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    ranked
}

/// Eval-mode scoring with a trained model.
pub struct Predictor<'a> {
    pub params: &'a ModelParams,
    pub encoder: &'a PairEncoder,
    pub batch_size: usize,
}

impl<'a> Predictor<'a> {
    pub fn new(params: &'a ModelParams, encoder: &'a PairEncoder) -> Result<Self> {
        let cfg = params.config();
        if cfg.input_dim != encoder.dim() {
            return Err(Error::Shape(format!(
                "model expects rows of width {}, encoder produces {}",
                cfg.input_dim,
                encoder.dim()
            )));
        }
        Ok(Self {
            params,
            encoder,
            batch_size: 64,
        })
    }

    /// Probabilities `(|pairs|, k)`.
    pub fn score(&self, pairs: &[(u32, u32)]) -> Result<Array2<f64>> {
        let k = self.params.config().relations;
        let blocks = pairs
            .par_chunks(self.batch_size.max(1))
            .map(|chunk| {
                let x = self.encoder.batch(chunk)?;
                Ok(forward(self.params, x.view(), Mode::Eval)?.probs)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros((pairs.len(), k));
        let mut row = 0;
        for block in blocks {
            let n = block.nrows();
            out.slice_mut(ndarray::s![row..row + n, ..]).assign(&block);
            row += n;
        }
        Ok(out)
    }

    /// Full ranking of all relations for a pair of entity ids.
    pub fn predict(&self, graph: &KnowledgeGraph, head: &str, tail: &str) -> Result<Vec<RankedRelation>> {
        let h = graph.entity(head)?;
        let t = graph.entity(tail)?;
        let probs = self.score(&[(h, t)])?;
        Ok(rank_relations(probs.row(0).as_slice().expect("contiguous")))
    }
}

impl PairScorer for Predictor<'_> {
    fn num_relations(&self) -> usize {
        self.params.config().relations
    }

    fn score_pairs(&self, pairs: &[(u32, u32)]) -> Result<Array2<f64>> {
        self.score(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_is_stable_descending() {
        let ranked = rank_relations(&[0.2, 0.9, 0.2, 0.5]);
        let order: Vec<u32> = ranked.iter().map(|r| r.relation).collect();
        assert_eq!(order, vec![1, 3, 0, 2]);
        assert_eq!(ranked[0].probability, 0.9);
    }
}
