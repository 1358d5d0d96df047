//! Assembling `(head, tail)` input sequences.

use ndarray::{s, Array2, Array3};

use crate::error::{Error, Result};
use crate::node2vec::NodeEmbeddings;
use crate::text::{assemble_node, EntityText, NodeRepresentation, Role};

/// `2(n + 2) × d`: head representation stacked above tail representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSequence {
    pub rows: Array2<f32>,
}

pub fn assemble_pair(head: &NodeRepresentation, tail: &NodeRepresentation) -> Result<PairSequence> {
    if head.role != Role::Head || tail.role != Role::Tail {
        return Err(Error::Shape("pair needs a head-role and a tail-role node".into()));
    }
    if head.rows.dim() != tail.rows.dim() {
        return Err(Error::Shape(format!(
            "head rows {:?} vs tail rows {:?}",
            head.rows.dim(),
            tail.rows.dim()
        )));
    }
    let (len, d) = head.rows.dim();
    let mut rows = Array2::zeros((2 * len, d));
    rows.slice_mut(s![..len, ..]).assign(&head.rows);
    rows.slice_mut(s![len.., ..]).assign(&tail.rows);
    Ok(PairSequence { rows })
}

/// Everything needed to turn entity indices into network input.
#[derive(Debug, Clone)]
pub struct PairEncoder {
    text: EntityText,
    structural: NodeEmbeddings,
    direction: f32,
}

impl PairEncoder {
    pub fn new(text: EntityText, structural: NodeEmbeddings, direction: f32) -> Result<Self> {
        if text.dim() != structural.dim() {
            return Err(Error::Shape(format!(
                "word vectors have dimension {} but structural embeddings {}",
                text.dim(),
                structural.dim()
            )));
        }
        if text.token_rows.len() != structural.len() {
            return Err(Error::Shape(format!(
                "{} entities with text but {} with structural embeddings",
                text.token_rows.len(),
                structural.len()
            )));
        }
        Ok(Self {
            text,
            structural,
            direction,
        })
    }

    pub fn dim(&self) -> usize {
        self.text.dim()
    }

    pub fn text_rows(&self) -> usize {
        self.text.n
    }

    pub fn entities(&self) -> usize {
        self.structural.len()
    }

    /// Time steps per pair, `2(n + 2)`.
    pub fn seq_len(&self) -> usize {
        2 * (self.text.n + 2)
    }

    pub fn structural(&self) -> &NodeEmbeddings {
        &self.structural
    }

    pub fn node(&self, entity: u32, role: Role) -> Result<NodeRepresentation> {
        self.check(entity)?;
        assemble_node(
            self.text.matrix(entity).view(),
            self.structural.row(entity),
            role,
            self.direction,
        )
    }

    pub fn pair(&self, head: u32, tail: u32) -> Result<PairSequence> {
        assemble_pair(&self.node(head, Role::Head)?, &self.node(tail, Role::Tail)?)
    }

    fn check(&self, entity: u32) -> Result<()> {
        if entity as usize >= self.entities() {
            return Err(Error::Shape(format!(
                "entity index {entity} out of range ({} entities)",
                self.entities()
            )));
        }
        Ok(())
    }

    /// Network input `(T, B, d)` for a batch of pairs; identical to stacking
    /// [`Self::pair`] results along the batch axis.
    pub fn batch(&self, pairs: &[(u32, u32)]) -> Result<Array3<f64>> {
        let n = self.text.n;
        let half = n + 2;
        let mut x = Array3::zeros((2 * half, pairs.len(), self.dim()));
        for (b, &(head, tail)) in pairs.iter().enumerate() {
            for (entity, role, offset) in [(head, Role::Head, 0), (tail, Role::Tail, half)] {
                self.check(entity)?;
                x.slice_mut(s![offset, b, ..])
                    .fill((role.sign() * self.direction) as f64);
                for (i, &row) in self.text.token_rows[entity as usize].iter().enumerate() {
                    let v = self.text.vectors.row(row as usize);
                    x.slice_mut(s![offset + 1 + i, b, ..])
                        .assign(&v.mapv(f64::from));
                }
                for (dst, &src) in x
                    .slice_mut(s![offset + n + 1, b, ..])
                    .iter_mut()
                    .zip(self.structural.row(entity))
                {
                    *dst = src as f64;
                }
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::WordEmbeddings;

    fn encoder() -> PairEncoder {
        let mut emb = WordEmbeddings::new(3);
        emb.insert("alpha", &[1.0, 2.0, 3.0]).unwrap();
        emb.insert("beta", &[-1.0, 0.5, 0.0]).unwrap();
        let (text, _) = EntityText::build(["alpha beta", "beta"].into_iter(), &emb, 4);
        let mut structural = NodeEmbeddings::zeros(2, 3);
        structural.matrix[[0, 0]] = 0.25;
        structural.matrix[[1, 2]] = -0.75;
        PairEncoder::new(text, structural, 1.0).unwrap()
    }

    #[test]
    fn layout() {
        let enc = encoder();
        let seq = enc.pair(0, 1).unwrap();
        assert_eq!(seq.rows.dim(), (12, 3));
        assert!(seq.rows.row(0).iter().all(|&v| v == 1.0));
        assert!(seq.rows.row(6).iter().all(|&v| v == -1.0));
        assert_eq!(seq.rows.row(5).to_vec(), vec![0.25, 0.0, 0.0]);
        assert_eq!(seq.rows.row(11).to_vec(), vec![0.0, 0.0, -0.75]);
    }

    #[test]
    fn swapping_arguments_swaps_blocks_and_negates_direction() {
        let enc = encoder();
        let ab = enc.pair(0, 1).unwrap().rows;
        let ba = enc.pair(1, 0).unwrap().rows;
        let half = 6;
        let mut expected = Array2::zeros(ab.dim());
        expected.slice_mut(s![..half, ..]).assign(&ab.slice(s![half.., ..]));
        expected.slice_mut(s![half.., ..]).assign(&ab.slice(s![..half, ..]));
        expected.row_mut(0).mapv_inplace(|v| -v);
        expected.row_mut(half).mapv_inplace(|v| -v);
        assert_eq!(ba, expected);
    }

    #[test]
    fn batch_matches_individual_pairs() {
        let enc = encoder();
        let pairs = [(0, 1), (1, 0), (1, 1)];
        let x = enc.batch(&pairs).unwrap();
        for (b, &(h, t)) in pairs.iter().enumerate() {
            let seq = enc.pair(h, t).unwrap();
            assert_eq!(x.slice(s![.., b, ..]).to_owned(), seq.rows.mapv(f64::from));
        }
    }

    #[test]
    fn mismatched_nodes_rejected() {
        let enc = encoder();
        let head = enc.node(0, Role::Head).unwrap();
        assert!(assemble_pair(&head, &head).is_err());
        assert!(enc.pair(0, 9).is_err());
    }
}
