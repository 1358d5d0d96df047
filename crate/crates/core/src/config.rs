//! Flat `key=value` run configuration shared by every CLI command.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments win,
//! which is how command-line overrides are layered over a file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::node2vec::{SgnsConfig, WalkConfig};
use crate::predictor::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// Structural rows replaced by zeros.
    TextOnly,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::TextOnly => "text-only",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "text-only" => Ok(Ablation::TextOnly),
            other => Err(Error::Config(format!(
                "ablation must be `full` or `text-only`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub work_dir: PathBuf,
    /// Shared width of word vectors, structural vectors and input rows.
    pub dim: usize,
    /// Text rows per node.
    pub text_rows: usize,
    /// Magnitude of the direction row.
    pub direction: f32,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub p: f64,
    pub q: f64,
    pub sgns_window: usize,
    pub sgns_negatives: usize,
    pub sgns_epochs: usize,
    pub sgns_lr: f32,
    pub hidden: usize,
    pub layers: usize,
    pub attention: usize,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub dropout: f64,
    pub ablation: Ablation,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub dump_walks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let walk = WalkConfig::default();
        let sgns = SgnsConfig::default();
        let train = TrainConfig::default();
        Self {
            train: None,
            valid: None,
            test: None,
            names: None,
            word_vectors: None,
            work_dir: PathBuf::from("work"),
            dim: 300,
            text_rows: 40,
            direction: 1.0,
            walk_length: walk.walk_length,
            walks_per_node: walk.walks_per_node,
            p: walk.p,
            q: walk.q,
            sgns_window: sgns.window,
            sgns_negatives: sgns.negatives,
            sgns_epochs: sgns.epochs,
            sgns_lr: sgns.initial_lr,
            hidden: 400,
            layers: 2,
            attention: 256,
            epochs: train.epochs,
            patience: train.patience,
            batch_size: train.batch_size,
            lr: train.lr,
            lr_decay: train.lr_decay,
            dropout: train.dropout,
            ablation: Ablation::Full,
            seed: 42,
            threads: 0,
            dump_walks: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

fn path_value(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "train" => self.train = path_value(value),
            "valid" => self.valid = path_value(value),
            "test" => self.test = path_value(value),
            "names" => self.names = path_value(value),
            "word_vectors" => self.word_vectors = path_value(value),
            "work_dir" => self.work_dir = PathBuf::from(value),
            "dim" => self.dim = parse(key, value)?,
            "text_rows" => self.text_rows = parse(key, value)?,
            "direction" => self.direction = parse(key, value)?,
            "walk_length" => self.walk_length = parse(key, value)?,
            "walks_per_node" => self.walks_per_node = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "q" => self.q = parse(key, value)?,
            "sgns_window" => self.sgns_window = parse(key, value)?,
            "sgns_negatives" => self.sgns_negatives = parse(key, value)?,
            "sgns_epochs" => self.sgns_epochs = parse(key, value)?,
            "sgns_lr" => self.sgns_lr = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "attention" => self.attention = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "dump_walks" => self.dump_walks = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        self.set(key, value)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_str(text)?;
        Ok(cfg)
    }

    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply(line)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::parse_str(&text).map_err(|e| e.in_file(path))
    }

    /// Every key with its resolved value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("train", show_path(&self.train)),
            ("valid", show_path(&self.valid)),
            ("test", show_path(&self.test)),
            ("names", show_path(&self.names)),
            ("word_vectors", show_path(&self.word_vectors)),
            ("work_dir", self.work_dir.display().to_string()),
            ("dim", self.dim.to_string()),
            ("text_rows", self.text_rows.to_string()),
            ("direction", self.direction.to_string()),
            ("walk_length", self.walk_length.to_string()),
            ("walks_per_node", self.walks_per_node.to_string()),
            ("p", self.p.to_string()),
            ("q", self.q.to_string()),
            ("sgns_window", self.sgns_window.to_string()),
            ("sgns_negatives", self.sgns_negatives.to_string()),
            ("sgns_epochs", self.sgns_epochs.to_string()),
            ("sgns_lr", self.sgns_lr.to_string()),
            ("hidden", self.hidden.to_string()),
            ("layers", self.layers.to_string()),
            ("attention", self.attention.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("dropout", self.dropout.to_string()),
            ("ablation", self.ablation.name().to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("dump_walks", self.dump_walks.to_string()),
        ]
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            walk_length: self.walk_length,
            walks_per_node: self.walks_per_node,
            p: self.p,
            q: self.q,
            seed: self.seed,
        }
    }

    pub fn sgns_config(&self) -> SgnsConfig {
        SgnsConfig {
            dim: self.dim,
            window: self.sgns_window,
            negatives: self.sgns_negatives,
            epochs: self.sgns_epochs,
            initial_lr: self.sgns_lr,
            seed: self.seed,
            threads: if self.threads == 0 {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            } else {
                self.threads
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_decay: self.lr_decay,
            dropout: self.dropout,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, relations: usize) -> ModelConfig {
        ModelConfig {
            input_dim: self.dim,
            hidden: self.hidden,
            layers: self.layers,
            attention: self.attention,
            relations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.text_rows == 0 {
            return Err(Error::Config("dim and text_rows must be positive".into()));
        }
        if self.work_dir.as_os_str().is_empty() {
            return Err(Error::Config("work_dir must not be empty".into()));
        }
        if !self.direction.is_finite() {
            return Err(Error::Config("direction must be finite".into()));
        }
        self.walk_config().validate()?;
        self.sgns_config().validate()?;
        self.train_config().validate()?;
        self.model_config(1).validate()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in self.entries() {
            writeln!(f, "{key}={value}")?;
        }
        Ok(())
    }
}
