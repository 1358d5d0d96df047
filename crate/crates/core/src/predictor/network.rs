//! Forward and backward passes of the relation-probability network.
//!
//! ```text
//! input (T, B, d) -> [BiLSTM] x layers -> h (T, B, 2H)
//!   e_t = v · tanh(W h_t + b),  α = softmax_t(e),  context = Σ α_t h_t
//!   z = dropout(context),  probs = sigmoid(out_w z + out_b)
//! ```

use ndarray::{s, Array1, Array2, Array3, ArrayView3, Axis};
use rand::{Rng, RngCore};

use super::lstm::{self, flatten, DirectionPass};
use super::params::ModelParams;
use crate::error::{Error, Result};

/// Clamp applied to probabilities inside the loss.
pub const PROB_EPS: f64 = 1e-7;

pub enum Mode<'a> {
    Eval,
    /// Inverted dropout with probability `dropout` on the attention context.
    Train {
        dropout: f64,
        rng: &'a mut dyn RngCore,
    },
}

struct LayerCache {
    input: Array3<f64>,
    fwd: DirectionPass,
    bwd: DirectionPass,
}

struct Cache {
    layers: Vec<LayerCache>,
    /// Output of the last LSTM layer, `(T, B, 2H)`.
    encoded: Array3<f64>,
    /// `tanh(W h + b)`, `(T·B, A)`.
    projected: Array2<f64>,
    context: Array2<f64>,
    /// Dropout multipliers, `(B, 2H)`: 0 or `1/(1-p)`.
    mask: Array2<f64>,
}

pub struct ForwardPass {
    /// `(B, k)`
    pub probs: Array2<f64>,
    /// Attention weights `(T, B)`.
    pub attention: Array2<f64>,
    cache: Option<Cache>,
}

fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn forward(params: &ModelParams, input: ArrayView3<'_, f64>, mode: Mode<'_>) -> Result<ForwardPass> {
    let cfg = params.config();
    let (steps, batch, dim) = input.dim();
    if dim != cfg.input_dim {
        return Err(Error::Shape(format!(
            "input rows have width {dim}, model expects {}",
            cfg.input_dim
        )));
    }
    if steps == 0 {
        return Err(Error::Shape("empty input sequence".into()));
    }
    let train = matches!(mode, Mode::Train { .. });

    let mut layers = Vec::with_capacity(cfg.layers);
    let mut x = input.as_standard_layout().into_owned();
    for (li, layer) in params.lstm.iter().enumerate() {
        let fwd = lstm::forward(&layer[0], x.view(), false);
        let bwd = lstm::forward(&layer[1], x.view(), true);
        let mut out = Array3::zeros((steps, batch, 2 * cfg.hidden));
        out.slice_mut(s![.., .., ..cfg.hidden]).assign(&fwd.hidden);
        out.slice_mut(s![.., .., cfg.hidden..]).assign(&bwd.hidden);
        check_finite(out.iter(), &format!("lstm layer {}", li + 1))?;
        let input = std::mem::replace(&mut x, out);
        if train {
            layers.push(LayerCache { input, fwd, bwd });
        }
    }
    let encoded = x;

    // attention pooling
    let projected = (flatten(encoded.view()).dot(&params.att_w) + &params.att_b).mapv(f64::tanh);
    let scores = projected
        .dot(&params.att_v)
        .into_shape_with_order((steps, batch))
        .expect("contiguous scores");
    let mut attention = Array2::<f64>::zeros((steps, batch));
    for b in 0..batch {
        let col = scores.column(b);
        let max = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exp: Array1<f64> = col.mapv(|v| (v - max).exp());
        let total = exp.sum();
        attention.column_mut(b).assign(&(exp / total));
    }
    check_finite(attention.iter(), "attention weights")?;
    let mut context = Array2::<f64>::zeros((batch, encoded.dim().2));
    for t in 0..steps {
        let h_t = encoded.index_axis(Axis(0), t);
        for b in 0..batch {
            context
                .row_mut(b)
                .scaled_add(attention[[t, b]], &h_t.row(b));
        }
    }

    let mask = match mode {
        Mode::Train { dropout, rng } if dropout > 0.0 => {
            let keep = 1.0 / (1.0 - dropout);
            Array2::from_shape_simple_fn(context.dim(), || {
                if rng.gen::<f64>() < dropout {
                    0.0
                } else {
                    keep
                }
            })
        }
        _ => Array2::ones(context.dim()),
    };
    let dropped = &context * &mask;
    let logits = dropped.dot(&params.out_w.t()) + &params.out_b;
    let probs = logits.mapv(sigmoid);
    check_finite(probs.iter(), "output layer")?;

    let cache = train.then(|| Cache {
        layers,
        encoded,
        projected,
        context,
        mask,
    });
    Ok(ForwardPass {
        probs,
        attention,
        cache,
    })
}

impl ForwardPass {
    /// Attention context before dropout, available for train-mode passes.
    pub fn context(&self) -> Option<&Array2<f64>> {
        self.cache.as_ref().map(|c| &c.context)
    }

    pub fn dropout_mask(&self) -> Option<&Array2<f64>> {
        self.cache.as_ref().map(|c| &c.mask)
    }
}

/// Gradient of the batch-mean binary cross-entropy with respect to every
/// parameter. Reuses the dropout mask of the forward pass.
pub fn backward(params: &ModelParams, pass: &ForwardPass, targets: &Array2<f64>) -> Result<ModelParams> {
    let cache = pass.cache.as_ref().ok_or(Error::MissingCache)?;
    if targets.dim() != pass.probs.dim() {
        return Err(Error::Shape(format!(
            "targets {:?} vs predictions {:?}",
            targets.dim(),
            pass.probs.dim()
        )));
    }
    let mut grads = ModelParams::zeros(&params.config());
    let (batch, k) = pass.probs.dim();
    let (steps, _, width) = cache.encoded.dim();

    // d(mean BCE)/d logits
    let d_logits = (&pass.probs - targets) / (batch * k) as f64;
    let dropped = &cache.context * &cache.mask;
    grads.out_w = d_logits.t().dot(&dropped);
    grads.out_b = d_logits.sum_axis(Axis(0));
    let d_context = d_logits.dot(&params.out_w) * &cache.mask;

    // attention
    let alpha = &pass.attention;
    let mut d_encoded = Array3::<f64>::zeros((steps, batch, width));
    let mut d_alpha = Array2::<f64>::zeros((steps, batch));
    for t in 0..steps {
        let h_t = cache.encoded.index_axis(Axis(0), t);
        let mut dh_t = d_encoded.index_axis_mut(Axis(0), t);
        for b in 0..batch {
            d_alpha[[t, b]] = h_t.row(b).dot(&d_context.row(b));
            dh_t.row_mut(b).scaled_add(alpha[[t, b]], &d_context.row(b));
        }
    }
    let mut d_scores = Array2::<f64>::zeros((steps, batch));
    for b in 0..batch {
        let weighted: f64 = (0..steps).map(|t| alpha[[t, b]] * d_alpha[[t, b]]).sum();
        for t in 0..steps {
            d_scores[[t, b]] = alpha[[t, b]] * (d_alpha[[t, b]] - weighted);
        }
    }
    let d_scores = d_scores
        .into_shape_with_order(steps * batch)
        .expect("contiguous scores");
    grads.att_v = cache.projected.t().dot(&d_scores);
    let mut d_proj = Array2::<f64>::zeros(cache.projected.dim());
    for (r, mut row) in d_proj.outer_iter_mut().enumerate() {
        row.assign(&(&params.att_v * d_scores[r]));
    }
    d_proj *= &cache.projected.mapv(|u| 1.0 - u * u);
    grads.att_w = flatten(cache.encoded.view()).t().dot(&d_proj);
    grads.att_b = d_proj.sum_axis(Axis(0));
    d_encoded += &d_proj
        .dot(&params.att_w.t())
        .into_shape_with_order((steps, batch, width))
        .expect("contiguous");

    // BiLSTM stack, top to bottom
    let h = params.config().hidden;
    let mut d_out = d_encoded;
    for (li, layer_cache) in cache.layers.iter().enumerate().rev() {
        let layer = &params.lstm[li];
        let [g_fwd, g_bwd] = &mut grads.lstm[li];
        let dx_f = lstm::backward(
            &layer[0],
            layer_cache.input.view(),
            &layer_cache.fwd,
            d_out.slice(s![.., .., ..h]),
            g_fwd,
        );
        let dx_b = lstm::backward(
            &layer[1],
            layer_cache.input.view(),
            &layer_cache.bwd,
            d_out.slice(s![.., .., h..]),
            g_bwd,
        );
        d_out = dx_f + dx_b;
    }
    Ok(grads)
}

/// Mean binary cross-entropy over all entries, probabilities clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce_loss(probs: &[f64], targets: &[f64]) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} probabilities vs {} targets",
            probs.len(),
            targets.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::super::params::ModelConfig;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_dim: 8,
            hidden: 6,
            layers: 2,
            attention: 5,
            relations: 3,
        }
    }

    fn random_input(rng: &mut ChaCha8Rng, steps: usize, batch: usize, dim: usize) -> Array3<f64> {
        Array3::from_shape_simple_fn((steps, batch, dim), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn outputs_are_probabilities_and_attention_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ModelParams::init(&tiny(), &mut rng);
        let x = random_input(&mut rng, 10, 4, 8);
        let pass = forward(&params, x.view(), Mode::Eval).unwrap();
        assert_eq!(pass.probs.dim(), (4, 3));
        assert!(pass.probs.iter().all(|&p| p > 0.0 && p < 1.0));
        for b in 0..4 {
            let col = pass.attention.column(b);
            assert!((col.sum() - 1.0).abs() < 1e-6);
            assert!(col.iter().all(|&a| a >= 0.0));
        }
    }

    #[test]
    fn zero_everything_gives_one_half() {
        let params = ModelParams::zeros(&tiny());
        let x = Array3::zeros((10, 2, 8));
        let pass = forward(&params, x.view(), Mode::Eval).unwrap();
        assert!(pass.probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn eval_mode_is_bitwise_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = ModelParams::init(&tiny(), &mut rng);
        let x = random_input(&mut rng, 7, 3, 8);
        let a = forward(&params, x.view(), Mode::Eval).unwrap();
        let b = forward(&params, x.view(), Mode::Eval).unwrap();
        assert_eq!(
            a.probs.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.probs.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn backward_needs_cache() {
        let params = ModelParams::zeros(&tiny());
        let x = Array3::zeros((4, 1, 8));
        let pass = forward(&params, x.view(), Mode::Eval).unwrap();
        let err = backward(&params, &pass, &Array2::zeros((1, 3))).unwrap_err();
        assert!(matches!(err, Error::MissingCache));
    }

    #[test]
    fn input_width_checked() {
        let params = ModelParams::zeros(&tiny());
        let x = Array3::zeros((4, 1, 7));
        assert!(matches!(forward(&params, x.view(), Mode::Eval), Err(Error::Shape(_))));
    }

    #[test]
    fn stationary_output_layer_when_targets_equal_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = ModelParams::init(&tiny(), &mut rng);
        let x = random_input(&mut rng, 6, 2, 8);
        let mut drng = ChaCha8Rng::seed_from_u64(1);
        let pass = forward(&params, x.view(), Mode::Train { dropout: 0.0, rng: &mut drng }).unwrap();
        let targets = pass.probs.clone();
        let grads = backward(&params, &pass, &targets).unwrap();
        assert!(grads.out_w.iter().all(|g| g.abs() < 1e-15));
        assert!(grads.out_b.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn same_seed_same_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = ModelParams::init(&tiny(), &mut rng);
        let x = random_input(&mut rng, 6, 2, 8);
        let targets = Array2::from_shape_vec((2, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let run = || {
            let mut drng = ChaCha8Rng::seed_from_u64(77);
            let pass = forward(&params, x.view(), Mode::Train { dropout: 0.3, rng: &mut drng }).unwrap();
            backward(&params, &pass, &targets).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_values() {
        assert!((bce_loss(&[0.5; 7], &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let perfect = bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(perfect <= -(1.0 - PROB_EPS).ln() + 1e-15);
        assert!(matches!(bce_loss(&[0.5], &[1.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let p: Vec<f64> = (0..5).map(|_| rng.gen_range(0.01..0.99)).collect();
            let y: Vec<f64> = (0..5).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
            // reference: explicit case split, no clamping needed in this range
            let mut reference = 0.0;
            for i in 0..5 {
                reference += if y[i] == 1.0 { -p[i].ln() } else { -(1.0 - p[i]).ln() };
            }
            reference /= 5.0;
            assert!((bce_loss(&p, &y).unwrap() - reference).abs() < 1e-12);
        }
    }
}
