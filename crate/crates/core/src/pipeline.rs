//! The CLI stages as library functions: each reads its prerequisites from the
//! work directory, runs one part of the pipeline and persists its artifacts.
//!
//! ```text
//! prepare           -> dataset.rpst, text.rpst
//! train-structural  -> structural.rpst, embeddings.txt [, walks.txt]
//! train             -> model.rpst, train_log.txt
//! evaluate, predict -> read the above
//! ```

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::config::{Ablation, RunConfig};
use crate::container::{table_value, Container, Tensor};
use crate::error::{Error, Result};
use crate::eval::{self, Metrics};
use crate::kg::{
    build_graph, build_pair_index, load_names, parse_triples, GraphStats, IndexedTriple,
    KnowledgeGraph, NameMap, Split, Triple, Vocab,
};
use crate::node2vec::{generate_walks, precompute_transitions, train_sgns, NodeEmbeddings, SamplingStrategy};
use crate::predictor::{train, EpochLog, ModelParams, PairEncoder, Predictor, TrainOutcome, TrainingSet};
use crate::text::{load_word_embeddings, EntityText, OovReport};

/// Artifact locations inside a work directory.
#[derive(Debug, Clone)]
pub struct WorkDir {
    pub root: PathBuf,
}

impl WorkDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.rpst")
    }

    pub fn text(&self) -> PathBuf {
        self.root.join("text.rpst")
    }

    pub fn structural(&self) -> PathBuf {
        self.root.join("structural.rpst")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.txt")
    }

    pub fn walks(&self) -> PathBuf {
        self.root.join("walks.txt")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.rpst")
    }

    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.txt")
    }
}

fn require_input<'a>(key: &'static str, path: &'a Option<PathBuf>) -> Result<&'a Path> {
    let path = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("`{key}` is not set")))?;
    if !path.is_file() {
        return Err(Error::MissingInput {
            key,
            path: path.to_owned(),
        });
    }
    Ok(path)
}

fn load_artifact(path: &Path, command: &'static str) -> Result<Container> {
    if !path.is_file() {
        return Err(Error::Prerequisite {
            path: path.to_owned(),
            command,
        });
    }
    Container::load(path)
}

/// Writes through a temporary sibling so readers never see a partial file.
fn save_atomically(c: &Container, path: &Path) -> Result<()> {
    let tmp = path.with_extension("rpst.tmp");
    c.save(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::from(e).in_file(path))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::from(e).in_file(path))
}

pub fn read_triples(path: &Path) -> Result<Vec<Triple>> {
    parse_triples(open(path)?).map_err(|e| e.in_file(path))
}

/// Parsed splits plus one display name per entity.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: KnowledgeGraph,
    pub names: Vec<String>,
}

fn triples_tensor(name: &str, triples: &[IndexedTriple]) -> Result<Tensor> {
    let data = triples
        .iter()
        .flat_map(|t| [t.head as f32, t.relation as f32, t.tail as f32])
        .collect();
    Tensor::new(name, vec![triples.len(), 3], data)
}

fn triples_from_tensor(t: &Tensor, entities: usize, relations: usize) -> Result<Vec<IndexedTriple>> {
    if t.dims.len() != 2 || t.dims[1] != 3 {
        return Err(Error::Format(format!("`{}` must have shape [N, 3]", t.name)));
    }
    t.data
        .chunks_exact(3)
        .map(|c| {
            let (h, r, tl) = (c[0] as usize, c[1] as usize, c[2] as usize);
            if h >= entities || tl >= entities || r >= relations {
                return Err(Error::Format(format!("`{}` holds an out-of-range index", t.name)));
            }
            Ok(IndexedTriple {
                head: h as u32,
                relation: r as u32,
                tail: tl as u32,
            })
        })
        .collect()
}

impl Dataset {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container {
            relations: self.graph.relations.items().to_vec(),
            tensors: Split::ALL
                .iter()
                .map(|&s| triples_tensor(s.name(), self.graph.split(s)))
                .collect::<Result<_>>()?,
            tables: Vec::new(),
        };
        c.push_table("entities", self.graph.entities.items().to_vec());
        c.push_table("names", self.names.clone());
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let entities = Vocab::from_items(c.table("entities")?.iter().cloned());
        let relations = Vocab::from_items(c.relations.iter().cloned());
        let names = c.table("names")?.to_vec();
        if names.len() != entities.len() {
            return Err(Error::Format("names table does not match the entity count".into()));
        }
        let (e, r) = (entities.len(), relations.len());
        let split = |s: Split| triples_from_tensor(c.tensor(s.name())?, e, r);
        let graph = KnowledgeGraph::from_indexed(
            entities,
            relations,
            split(Split::Train)?,
            split(Split::Valid)?,
            split(Split::Test)?,
        );
        Ok(Self { graph, names })
    }

    pub fn load(work: &WorkDir) -> Result<Self> {
        let path = work.dataset();
        Self::from_container(&load_artifact(&path, "prepare")?).map_err(|e| e.in_file(path))
    }
}

pub fn text_to_container(text: &EntityText) -> Result<Container> {
    let (u, d) = text.vectors.dim();
    let vectors = Tensor::new("vectors", vec![u, d], text.vectors.iter().copied().collect())?;
    let mut rows = vec![0.0f32; text.token_rows.len() * text.n];
    for (e, ids) in text.token_rows.iter().enumerate() {
        for (i, &id) in ids.iter().enumerate() {
            rows[e * text.n + i] = (id + 1) as f32;
        }
    }
    let token_rows = Tensor::new("token_rows", vec![text.token_rows.len(), text.n], rows)?;
    let mut c = Container {
        relations: Vec::new(),
        tensors: vec![vectors, token_rows],
        tables: Vec::new(),
    };
    c.push_table("text", vec![format!("text_rows={}", text.n), format!("dim={d}")]);
    Ok(c)
}

fn setting<T: std::str::FromStr>(entries: &[String], key: &str) -> Result<T> {
    table_value(entries, key)?
        .parse()
        .map_err(|_| Error::Format(format!("setting `{key}` is malformed")))
}

pub fn text_from_container(c: &Container) -> Result<EntityText> {
    let settings = c.table("text")?;
    let n: usize = setting(settings, "text_rows")?;
    let d: usize = setting(settings, "dim")?;
    let v = c.tensor("vectors")?;
    let r = c.tensor("token_rows")?;
    if v.dims.len() != 2 || v.dims[1] != d || r.dims.len() != 2 || r.dims[1] != n {
        return Err(Error::Format("text cache tensors do not match its settings".into()));
    }
    let u = v.dims[0];
    let vectors = Array2::from_shape_vec((u, d), v.data.clone()).expect("checked shape");
    let token_rows = r
        .data
        .chunks_exact(n)
        .map(|row| {
            row.iter()
                .take_while(|&&x| x > 0.0)
                .map(|&x| {
                    let id = x as usize - 1;
                    if id >= u {
                        Err(Error::Format("token row index out of range".into()))
                    } else {
                        Ok(id as u32)
                    }
                })
                .collect::<Result<Vec<u32>>>()
        })
        .collect::<Result<_>>()?;
    Ok(EntityText { vectors, token_rows, n })
}

pub fn structural_to_container(emb: &NodeEmbeddings, ablation: Ablation) -> Result<Container> {
    let (e, d) = emb.matrix.dim();
    let mut c = Container {
        relations: Vec::new(),
        tensors: vec![Tensor::new("structural", vec![e, d], emb.matrix.iter().copied().collect())?],
        tables: Vec::new(),
    };
    c.push_table("structural", vec![format!("ablation={}", ablation.name())]);
    Ok(c)
}

pub fn structural_from_container(c: &Container) -> Result<(NodeEmbeddings, Ablation)> {
    let t = c.tensor("structural")?;
    if t.dims.len() != 2 {
        return Err(Error::Format("structural tensor must be a matrix".into()));
    }
    let matrix = Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data.clone()).expect("checked shape");
    let ablation = table_value(c.table("structural")?, "ablation")?.parse()?;
    Ok((NodeEmbeddings { matrix }, ablation))
}

#[derive(Debug, Clone)]
pub struct PrepareReport {
    pub stats: GraphStats,
    pub oov: OovReport,
    pub word_vectors: usize,
    pub duplicate_words: usize,
}

impl fmt::Display for PrepareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.stats)?;
        writeln!(f, "word_vectors={}", self.word_vectors)?;
        writeln!(f, "duplicate_words={}", self.duplicate_words)?;
        write!(f, "{}", self.oov)
    }
}

/// Parses the splits and name map, encodes every entity name and writes the
/// dataset and text caches.
pub fn prepare(cfg: &RunConfig) -> Result<PrepareReport> {
    cfg.validate()?;
    let train_path = require_input("train", &cfg.train)?;
    let valid_path = require_input("valid", &cfg.valid)?;
    let test_path = require_input("test", &cfg.test)?;
    let vectors_path = require_input("word_vectors", &cfg.word_vectors)?;
    let names = match &cfg.names {
        Some(_) => {
            let path = require_input("names", &cfg.names)?;
            load_names(open(path)?).map_err(|e| e.in_file(path))?
        }
        None => NameMap::default(),
    };

    let train = read_triples(train_path)?;
    if train.is_empty() {
        return Err(Error::EmptyInput(format!(
            "training split {} has no triples",
            train_path.display()
        )));
    }
    let valid = read_triples(valid_path)?;
    let test = read_triples(test_path)?;
    let graph = build_graph(&train, &valid, &test);
    let stats = GraphStats::collect(&graph, &names);

    let words = load_word_embeddings(open(vectors_path)?, cfg.dim).map_err(|e| e.in_file(vectors_path))?;
    let display: Vec<String> = graph
        .entities
        .items()
        .iter()
        .map(|id| names.lookup(id).name.to_owned())
        .collect();
    let (text, oov) = EntityText::build(display.iter().map(String::as_str), &words, cfg.text_rows);

    let work = WorkDir::new(&cfg.work_dir);
    fs::create_dir_all(&work.root).map_err(|e| Error::from(e).in_file(&work.root))?;
    let dataset = Dataset { graph, names: display };
    save_atomically(&dataset.to_container()?, &work.dataset())?;
    save_atomically(&text_to_container(&text)?, &work.text())?;
    Ok(PrepareReport {
        stats,
        oov,
        word_vectors: words.len(),
        duplicate_words: words.duplicates,
    })
}

#[derive(Debug, Clone)]
pub struct StructuralReport {
    /// `None` when the text-only ablation skipped training.
    pub strategy: Option<SamplingStrategy>,
    pub walks: usize,
    pub walk_tokens: usize,
    pub epoch_loss: Vec<f64>,
}

impl fmt::Display for StructuralReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.strategy {
            None => write!(f, "structural=skipped (text-only ablation, zero matrix written)"),
            Some(s) => {
                writeln!(f, "sampling={s:?}")?;
                writeln!(f, "walks={}", self.walks)?;
                writeln!(f, "walk_tokens={}", self.walk_tokens)?;
                let losses: Vec<String> = self.epoch_loss.iter().map(|l| format!("{l:.6}")).collect();
                write!(f, "sgns_epoch_loss={}", losses.join(","))
            }
        }
    }
}

/// Walks plus skip-gram training over the training graph, or a zero matrix
/// under the text-only ablation.
pub fn train_structural(cfg: &RunConfig) -> Result<StructuralReport> {
    cfg.validate()?;
    let work = WorkDir::new(&cfg.work_dir);
    let dataset = Dataset::load(&work)?;
    let graph = &dataset.graph;
    let (emb, report) = match cfg.ablation {
        Ablation::TextOnly => (
            NodeEmbeddings::zeros(graph.num_entities(), cfg.dim),
            StructuralReport {
                strategy: None,
                walks: 0,
                walk_tokens: 0,
                epoch_loss: Vec::new(),
            },
        ),
        Ablation::Full => {
            let tables = precompute_transitions(&graph.adjacency, cfg.p, cfg.q);
            let corpus = generate_walks(&graph.adjacency, &tables, &cfg.walk_config())?;
            if cfg.dump_walks {
                let path = work.walks();
                let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::from(e).in_file(&path))?);
                corpus.write_to(&mut w)?;
                w.flush()?;
            }
            let (emb, sgns) = train_sgns(&corpus, graph.num_entities(), &cfg.sgns_config())?;
            let report = StructuralReport {
                strategy: Some(tables.strategy()),
                walks: corpus.len(),
                walk_tokens: corpus.token_count(),
                epoch_loss: sgns.epoch_loss,
            };
            (emb, report)
        }
    };
    save_atomically(&structural_to_container(&emb, cfg.ablation)?, &work.structural())?;
    let path = work.embeddings();
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::from(e).in_file(&path))?);
    emb.write_text(&graph.entities, &mut w)?;
    w.flush()?;
    Ok(report)
}

fn load_text(work: &WorkDir) -> Result<EntityText> {
    let path = work.text();
    text_from_container(&load_artifact(&path, "prepare")?).map_err(|e| e.in_file(path))
}

fn structural_for(work: &WorkDir, ablation: Ablation, entities: usize, dim: usize) -> Result<NodeEmbeddings> {
    match ablation {
        Ablation::TextOnly => Ok(NodeEmbeddings::zeros(entities, dim)),
        Ablation::Full => {
            let path = work.structural();
            let (emb, stored) =
                structural_from_container(&load_artifact(&path, "train-structural")?).map_err(|e| e.in_file(&path))?;
            if stored != Ablation::Full {
                return Err(Error::Prerequisite {
                    path,
                    command: "train-structural (with ablation=full)",
                });
            }
            Ok(emb)
        }
    }
}

fn checkpoint_container(params: &ModelParams, relations: &[String], cfg: &RunConfig) -> Result<Container> {
    let mut c = params.to_container(relations)?;
    c.push_table(
        "run",
        vec![
            format!("text_rows={}", cfg.text_rows),
            format!("direction={}", cfg.direction),
            format!("ablation={}", cfg.ablation.name()),
        ],
    );
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub checkpoint: PathBuf,
    pub parameters: usize,
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "parameters={}", self.parameters)?;
        writeln!(f, "epochs_run={}", self.outcome.log.len())?;
        writeln!(f, "best_epoch={}", self.outcome.best_epoch)?;
        if let Some(best) = self.outcome.log.iter().find(|l| l.epoch == self.outcome.best_epoch) {
            writeln!(f, "best_valid_loss={:.6}", best.valid_loss)?;
        }
        let total: f64 = self.outcome.log.iter().map(|l| l.elapsed_secs).sum();
        writeln!(
            f,
            "mean_epoch_s={:.2}",
            total / self.outcome.log.len().max(1) as f64
        )?;
        write!(f, "checkpoint={}", self.checkpoint.display())
    }
}

/// Trains the relation network; the checkpoint is rewritten whenever the
/// validation loss improves, so it always holds the best epoch so far.
pub fn train_model(cfg: &RunConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainReport> {
    cfg.validate()?;
    let work = WorkDir::new(&cfg.work_dir);
    let dataset = Dataset::load(&work)?;
    let graph = &dataset.graph;
    let text = load_text(&work)?;
    if text.dim() != cfg.dim || text.n != cfg.text_rows {
        return Err(Error::Config(format!(
            "text cache was prepared with dim={} text_rows={}, config has dim={} text_rows={}; rerun `prepare`",
            text.dim(),
            text.n,
            cfg.dim,
            cfg.text_rows
        )));
    }
    let structural = structural_for(&work, cfg.ablation, graph.num_entities(), cfg.dim)?;
    let encoder = PairEncoder::new(text, structural, cfg.direction)?;
    let train_set = TrainingSet::from_graph(graph, Split::Train);
    let valid_set = TrainingSet::from_graph(graph, Split::Valid);
    let model = cfg.model_config(graph.num_relations());

    let log_path = work.train_log();
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::from(e).in_file(&log_path))?);
    let checkpoint = work.model();
    let relations = graph.relations.items().to_vec();
    let outcome = train(&model, &train_set, &valid_set, &encoder, &cfg.train_config(), |entry, best| {
        writeln!(log, "{entry}")?;
        log.flush()?;
        if let Some(params) = best {
            save_atomically(&checkpoint_container(params, &relations, cfg)?, &checkpoint)?;
        }
        on_epoch(entry);
        Ok(())
    })?;
    Ok(TrainReport {
        parameters: outcome.params.parameter_count(),
        outcome,
        checkpoint,
    })
}

/// A checkpoint with the settings it was trained under.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub params: ModelParams,
    pub relations: Vec<String>,
    pub text_rows: usize,
    pub direction: f32,
    pub ablation: Ablation,
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedModel> {
    let c = load_artifact(path, "train")?;
    let inner = || -> Result<LoadedModel> {
        let params = ModelParams::from_container(&c, None)?;
        let run = c.table("run")?;
        Ok(LoadedModel {
            params,
            relations: c.relations.clone(),
            text_rows: setting(run, "text_rows")?,
            direction: setting(run, "direction")?,
            ablation: table_value(run, "ablation")?.parse()?,
        })
    };
    inner().map_err(|e| e.in_file(path))
}

struct Loaded {
    dataset: Dataset,
    model: LoadedModel,
    encoder: PairEncoder,
}

fn load_for_inference(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Loaded> {
    let work = WorkDir::new(&cfg.work_dir);
    let dataset = Dataset::load(&work)?;
    let path = checkpoint.map_or_else(|| work.model(), Path::to_path_buf);
    let model = load_checkpoint(&path)?;
    let dataset_relations = dataset.graph.relations.items();
    if model.relations.len() != dataset_relations.len() {
        return Err(Error::VocabularyMismatch {
            checkpoint: model.relations.len(),
            dataset: dataset_relations.len(),
        });
    }
    if let Some(i) = (0..model.relations.len()).find(|&i| model.relations[i] != dataset_relations[i]) {
        return Err(Error::Format(format!(
            "relation {i} is `{}` in the checkpoint but `{}` in the dataset",
            model.relations[i], dataset_relations[i]
        )));
    }
    let text = load_text(&work)?;
    if text.n != model.text_rows {
        return Err(Error::Shape(format!(
            "checkpoint was trained with text_rows={}, text cache has {}",
            model.text_rows, text.n
        )));
    }
    let structural = structural_for(&work, model.ablation, dataset.graph.num_entities(), text.dim())?;
    let encoder = PairEncoder::new(text, structural, model.direction)?;
    Ok(Loaded {
        dataset,
        model,
        encoder,
    })
}

/// Raw and filtered metrics over the test split.
pub fn evaluate_model(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Metrics> {
    let loaded = load_for_inference(cfg, checkpoint)?;
    let graph = &loaded.dataset.graph;
    let predictor = Predictor::new(&loaded.model.params, &loaded.encoder)?;
    eval::evaluate(&predictor, &graph.test, &build_pair_index(graph))
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub head: String,
    pub tail: String,
    pub requested: usize,
    /// `(relation id, probability)`, descending.
    pub ranked: Vec<(String, f64)>,
    pub relation_count: usize,
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.requested > self.relation_count {
            writeln!(
                f,
                "notice: requested top {} but only {} relations exist; listing all",
                self.requested, self.relation_count
            )?;
        }
        writeln!(f, "head={} tail={}", self.head, self.tail)?;
        for (i, (rel, p)) in self.ranked.iter().enumerate() {
            writeln!(f, "{}\t{rel}\t{p:.6}", i + 1)?;
        }
        Ok(())
    }
}

pub fn predict(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    head: &str,
    tail: &str,
    top: usize,
) -> Result<Prediction> {
    let loaded = load_for_inference(cfg, checkpoint)?;
    let graph = &loaded.dataset.graph;
    let predictor = Predictor::new(&loaded.model.params, &loaded.encoder)?;
    let ranked = predictor.predict(graph, head, tail)?;
    let relation_count = ranked.len();
    Ok(Prediction {
        head: head.to_owned(),
        tail: tail.to_owned(),
        requested: top,
        ranked: ranked
            .into_iter()
            .take(top)
            .map(|r| (graph.relations.name(r.relation).to_owned(), r.probability))
            .collect(),
        relation_count,
    })
}
