//! Mini-batch Adam training with plateau learning-rate decay and early stopping.

use std::fmt;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::network::{backward, bce_loss, forward, Mode};
use super::params::{ModelConfig, ModelParams};
use super::sequence::PairEncoder;
use crate::error::{Error, Result};
use crate::kg::{pair_targets, KnowledgeGraph, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction removed from the learning rate after a non-improving epoch.
    pub lr_decay: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            patience: 5,
            batch_size: 32,
            lr: 0.0008,
            lr_decay: 0.35,
            dropout: 0.15,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if self.patience < 1 || self.batch_size < 1 || self.epochs < 1 {
            return Err(Error::Config("epochs, patience and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.lr_decay) || !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive and lr_decay in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Distinct (head, tail) pairs of one split with their multi-label targets.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pairs: Vec<(u32, u32)>,
    pub targets: Vec<Vec<u32>>,
    pub relations: usize,
}

impl TrainingSet {
    pub fn from_graph(graph: &KnowledgeGraph, split: Split) -> Self {
        let (pairs, targets) = pair_targets(graph, split).into_iter().unzip();
        Self {
            pairs,
            targets,
            relations: graph.num_relations(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `{0,1}` target matrix `(|indices|, k)`.
    pub fn target_matrix(&self, indices: &[usize]) -> Array2<f64> {
        let mut y = Array2::zeros((indices.len(), self.relations));
        for (row, &i) in indices.iter().enumerate() {
            for &r in &self.targets[i] {
                y[[row, r as usize]] = 1.0;
            }
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    NotImproved,
    Stop,
}

/// Tracks the best monitored loss; signals a stop after `patience`
/// consecutive non-improving observations.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Verdict {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
            Verdict::Improved
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                Verdict::Stop
            } else {
                Verdict::NotImproved
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Holds parameters and optimizer state; one call to [`Trainer::step`] is
/// one gradient update.
pub struct Trainer {
    pub params: ModelParams,
    adam: Adam,
    pub lr: f64,
    pub dropout: f64,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: &ModelConfig, config: &TrainConfig) -> Result<Self> {
        model.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(model, &mut rng);
        Ok(Self::from_params(params, config.lr, config.dropout, rng))
    }

    pub fn from_params(params: ModelParams, lr: f64, dropout: f64, rng: ChaCha8Rng) -> Self {
        let adam = Adam::new(&params);
        Self {
            params,
            adam,
            lr,
            dropout,
            rng,
        }
    }

    /// Forward, backward and Adam update on one batch; returns the batch-mean
    /// loss before the update.
    pub fn step(&mut self, encoder: &PairEncoder, pairs: &[(u32, u32)], targets: &Array2<f64>) -> Result<f64> {
        let x = encoder.batch(pairs)?;
        let pass = forward(
            &self.params,
            x.view(),
            Mode::Train {
                dropout: self.dropout,
                rng: &mut self.rng,
            },
        )?;
        let loss = bce_loss(
            pass.probs.as_slice().expect("contiguous"),
            targets.as_slice().expect("contiguous"),
        )?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        let grads = backward(&self.params, &pass, targets)?;
        self.adam.step(&mut self.params, &grads, self.lr);
        Ok(loss)
    }

    pub fn shuffle(&mut self, order: &mut [usize]) {
        order.shuffle(&mut self.rng);
    }
}

/// Eval-mode mean loss over a whole split.
pub fn evaluation_loss(
    params: &ModelParams,
    encoder: &PairEncoder,
    set: &TrainingSet,
    batch_size: usize,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyInput("validation pairs".into()));
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let sums = indices
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let pairs: Vec<(u32, u32)> = chunk.iter().map(|&i| set.pairs[i]).collect();
            let x = encoder.batch(&pairs)?;
            let pass = forward(params, x.view(), Mode::Eval)?;
            let y = set.target_matrix(chunk);
            let loss = bce_loss(pass.probs.as_slice().unwrap(), y.as_slice().unwrap())?;
            Ok(loss * chunk.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.iter().sum::<f64>() / set.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub lr: f64,
    pub elapsed_secs: f64,
    pub improved: bool,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} train_loss={:.6} valid_loss={:.6} lr={:.6e} elapsed_s={:.2}",
            self.epoch, self.train_loss, self.valid_loss, self.lr, self.elapsed_secs
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Runs the full loop. `on_epoch` sees every epoch's log line and, when the
/// validation loss improved, the new best parameters; an error from it
/// aborts training.
pub fn train(
    model: &ModelConfig,
    train_set: &TrainingSet,
    valid_set: &TrainingSet,
    encoder: &PairEncoder,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, Option<&ModelParams>) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training pairs".into()));
    }
    if valid_set.is_empty() {
        return Err(Error::EmptyInput("validation pairs".into()));
    }
    if model.relations != train_set.relations || model.input_dim != encoder.dim() {
        return Err(Error::Shape(format!(
            "model {model:?} does not fit {} relations of width {}",
            train_set.relations,
            encoder.dim()
        )));
    }
    let mut trainer = Trainer::new(model, config)?;
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = trainer.params.clone();
    let mut best_epoch = 0;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        trainer.shuffle(&mut order);
        let lr = trainer.lr;
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let pairs: Vec<(u32, u32)> = chunk.iter().map(|&i| train_set.pairs[i]).collect();
            let y = train_set.target_matrix(chunk);
            let loss = trainer
                .step(encoder, &pairs, &y)
                .map_err(|e| match e {
                    Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}")),
                    other => other,
                })?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let valid_loss = evaluation_loss(&trainer.params, encoder, valid_set, config.batch_size.max(64))?;
        if !valid_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        let verdict = stopper.observe(valid_loss);
        let entry = EpochLog {
            epoch,
            train_loss,
            valid_loss,
            lr,
            elapsed_secs: started.elapsed().as_secs_f64(),
            improved: verdict == Verdict::Improved,
        };
        if verdict == Verdict::Improved {
            best = trainer.params.clone();
            best_epoch = epoch;
            on_epoch(&entry, Some(&best))?;
        } else {
            trainer.lr *= 1.0 - config.lr_decay;
            on_epoch(&entry, None)?;
        }
        log::info!("{entry}");
        log.push(entry);
        if verdict == Verdict::Stop {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        log,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_five_stops_at_epoch_six() {
        let mut stopper = EarlyStopping::new(5);
        let losses = [1.0, 1.5, 1.2, 1.1, 1.0, 1.3, 0.9];
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            if stopper.observe(l) == Verdict::Stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(6));
        assert_eq!(stopper.best(), 1.0);
    }

    #[test]
    fn improvement_resets_patience() {
        let mut stopper = EarlyStopping::new(2);
        assert_eq!(stopper.observe(1.0), Verdict::Improved);
        assert_eq!(stopper.observe(2.0), Verdict::NotImproved);
        assert_eq!(stopper.observe(0.5), Verdict::Improved);
        assert_eq!(stopper.observe(0.6), Verdict::NotImproved);
        assert_eq!(stopper.observe(0.7), Verdict::Stop);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            dropout: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
