#![allow(dead_code)]

use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relpred::eval::{evaluate, Metrics};
use relpred::kg::{build_pair_index, KnowledgeGraph, Split};
use relpred::node2vec::{
    generate_walks, precompute_transitions, train_sgns, NodeEmbeddings, SgnsConfig, WalkConfig,
};
use relpred::predictor::{
    backward, bce_loss, forward, train, Mode, ModelConfig, ModelParams, PairEncoder, Predictor,
    TrainConfig, TrainOutcome, TrainingSet,
};
use relpred::synthetic::SyntheticKg;
use relpred::text::EntityText;

pub const TOY_DIM: usize = 16;
pub const TOY_TEXT_ROWS: usize = 4;
pub const TOY_HIDDEN: usize = 32;
pub const TOY_ATTENTION: usize = 16;

pub fn toy_model(relations: usize) -> ModelConfig {
    ModelConfig {
        input_dim: TOY_DIM,
        hidden: TOY_HIDDEN,
        layers: 2,
        attention: TOY_ATTENTION,
        relations,
    }
}

pub fn toy_structural(graph: &KnowledgeGraph, seed: u64) -> NodeEmbeddings {
    let tables = precompute_transitions(&graph.adjacency, 1.0, 1.0);
    let walks = WalkConfig {
        walk_length: 20,
        walks_per_node: 10,
        seed,
        ..WalkConfig::default()
    };
    let corpus = generate_walks(&graph.adjacency, &tables, &walks).unwrap();
    let sgns = SgnsConfig {
        dim: TOY_DIM,
        window: 5,
        seed,
        ..SgnsConfig::default()
    };
    train_sgns(&corpus, graph.num_entities(), &sgns).unwrap().0
}

pub fn toy_encoder(kg: &SyntheticKg, graph: &KnowledgeGraph, structural: bool, seed: u64) -> PairEncoder {
    let names = kg.entity_names(graph);
    let (text, _) = EntityText::build(names.iter().map(String::as_str), &kg.word_embeddings(), TOY_TEXT_ROWS);
    let emb = if structural {
        toy_structural(graph, seed)
    } else {
        NodeEmbeddings::zeros(graph.num_entities(), TOY_DIM)
    };
    PairEncoder::new(text, emb, 1.0).unwrap()
}

pub struct ToyRun {
    pub graph: KnowledgeGraph,
    pub encoder: PairEncoder,
    pub outcome: TrainOutcome,
    pub metrics: Metrics,
    pub elapsed: Duration,
}

/// Full toy pipeline with the default training settings.
pub fn toy_run(kg: &SyntheticKg, structural: bool, seed: u64) -> ToyRun {
    let started = Instant::now();
    let graph = kg.graph();
    let encoder = toy_encoder(kg, &graph, structural, seed);
    let train_set = TrainingSet::from_graph(&graph, Split::Train);
    let valid_set = TrainingSet::from_graph(&graph, Split::Valid);
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let outcome = train(&toy_model(graph.num_relations()), &train_set, &valid_set, &encoder, &cfg, |_, _| Ok(())).unwrap();
    let predictor = Predictor::new(&outcome.params, &encoder).unwrap();
    let metrics = evaluate(&predictor, &graph.test, &build_pair_index(&graph)).unwrap();
    ToyRun {
        graph,
        encoder,
        outcome,
        metrics,
        elapsed: started.elapsed(),
    }
}

pub fn gradcheck_model() -> ModelConfig {
    ModelConfig {
        input_dim: 8,
        hidden: 6,
        layers: 2,
        attention: 5,
        relations: 3,
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Relative errors are taken against at least this magnitude so entries whose
/// true gradient is ~0 are judged by absolute error instead.
pub const FD_FLOOR: f64 = 1e-6;

fn fd_loss(params: &ModelParams, x: &Array3<f64>, y: &Array2<f64>, dropout: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pass = forward(params, x.view(), Mode::Train { dropout, rng: &mut rng }).unwrap();
    bce_loss(pass.probs.as_slice().unwrap(), y.as_slice().unwrap()).unwrap()
}

/// Worst relative error per parameter tensor, sequence length 10, batch 2.
pub fn gradient_check(dropout: f64, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(&gradcheck_model(), &mut rng);
    let x = Array3::from_shape_simple_fn((10, 2, 8), || rng.gen_range(-1.0..1.0));
    let y = Array2::from_shape_vec((2, 3), vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();

    let mut drng = ChaCha8Rng::seed_from_u64(99);
    let pass = forward(&params, x.view(), Mode::Train { dropout, rng: &mut drng }).unwrap();
    let grads = backward(&params, &pass, &y).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|(_, d)| d.to_vec()).collect();

    let mut worst = Vec::new();
    for (ti, name) in params.names().into_iter().enumerate() {
        let mut max_err: f64 = 0.0;
        for i in 0..analytic[ti].len() {
            let original = params.tensors_mut()[ti][i];
            params.tensors_mut()[ti][i] = original + FD_STEP;
            let up = fd_loss(&params, &x, &y, dropout);
            params.tensors_mut()[ti][i] = original - FD_STEP;
            let down = fd_loss(&params, &x, &y, dropout);
            params.tensors_mut()[ti][i] = original;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[ti][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            max_err = max_err.max(err);
        }
        worst.push((name, max_err));
    }
    worst
}
