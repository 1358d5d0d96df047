use ndarray::{Array1, Array2};
use rand::Rng;

use crate::container::{table_value, Container, Tensor};
use crate::error::{Error, Result};

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Width `d` of every input row.
    pub input_dim: usize,
    /// Hidden size per LSTM direction.
    pub hidden: usize,
    /// Number of stacked bidirectional LSTM layers.
    pub layers: usize,
    /// Attention projection width.
    pub attention: usize,
    /// Number of relations `k`.
    pub relations: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.hidden == 0
            || self.layers == 0
            || self.attention == 0
            || self.relations == 0
        {
            return Err(Error::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    fn to_table(self) -> Vec<String> {
        vec![
            format!("input_dim={}", self.input_dim),
            format!("hidden={}", self.hidden),
            format!("layers={}", self.layers),
            format!("attention={}", self.attention),
            format!("relations={}", self.relations),
        ]
    }

    fn from_table(entries: &[String]) -> Result<Self> {
        let get = |key: &str| -> Result<usize> {
            table_value(entries, key)?
                .parse()
                .map_err(|_| Error::Format(format!("setting `{key}` is not an integer")))
        };
        Ok(Self {
            input_dim: get("input_dim")?,
            hidden: get("hidden")?,
            layers: get("layers")?,
            attention: get("attention")?,
            relations: get("relations")?,
        })
    }
}

/// One LSTM direction; gate blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H × in`
    pub w_ih: Array2<f64>,
    /// `4H × H`
    pub w_hh: Array2<f64>,
    /// `4H`
    pub bias: Array1<f64>,
}

impl LstmParams {
    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Per layer: `[forward, backward]`.
    pub lstm: Vec<[LstmParams; 2]>,
    /// `2H × A`
    pub att_w: Array2<f64>,
    pub att_b: Array1<f64>,
    pub att_v: Array1<f64>,
    /// `k × 2H`
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

fn fill_uniform<'a, R: Rng + ?Sized>(values: impl IntoIterator<Item = &'a mut f64>, rng: &mut R, bound: f64) {
    for v in values {
        *v = rng.gen_range(-bound..=bound);
    }
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden;
        let lstm = (0..cfg.layers)
            .map(|layer| {
                let input = if layer == 0 { cfg.input_dim } else { 2 * h };
                [LstmParams::zeros(input, h), LstmParams::zeros(input, h)]
            })
            .collect();
        Self {
            lstm,
            att_w: Array2::zeros((2 * h, cfg.attention)),
            att_b: Array1::zeros(cfg.attention),
            att_v: Array1::zeros(cfg.attention),
            out_w: Array2::zeros((cfg.relations, 2 * h)),
            out_b: Array1::zeros(cfg.relations),
        }
    }

    /// Weights uniform in ±1/√fan-in, forget-gate bias 1, attention scoring
    /// vector uniform in ±0.1, other biases zero.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        let h = cfg.hidden;
        for layer in &mut p.lstm {
            for dir in layer.iter_mut() {
                let fan_in = dir.w_ih.ncols() as f64;
                fill_uniform(dir.w_ih.iter_mut(), rng, 1.0 / fan_in.sqrt());
                fill_uniform(dir.w_hh.iter_mut(), rng, 1.0 / (h as f64).sqrt());
                dir.bias.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
            }
        }
        let bound = 1.0 / ((2 * h) as f64).sqrt();
        fill_uniform(p.att_w.iter_mut(), rng, bound);
        fill_uniform(p.att_v.iter_mut(), rng, 0.1);
        fill_uniform(p.out_w.iter_mut(), rng, bound);
        p
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: self.lstm[0][0].w_ih.ncols(),
            hidden: self.lstm[0][0].hidden(),
            layers: self.lstm.len(),
            attention: self.att_w.ncols(),
            relations: self.out_w.nrows(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for layer in 0..self.lstm.len() {
            for dir in ["fwd", "bwd"] {
                for t in ["w_ih", "w_hh", "bias"] {
                    names.push(format!("lstm.{layer}.{dir}.{t}"));
                }
            }
        }
        for n in ["attention.w", "attention.b", "attention.v", "output.w", "output.b"] {
            names.push(n.to_owned());
        }
        names
    }

    /// Every tensor as `(dims, values)`, in the order of [`Self::names`].
    pub fn tensors(&self) -> Vec<(Vec<usize>, &[f64])> {
        let mut out: Vec<(Vec<usize>, &[f64])> = Vec::new();
        for layer in &self.lstm {
            for dir in layer {
                out.push((dir.w_ih.shape().to_vec(), dir.w_ih.as_slice().unwrap()));
                out.push((dir.w_hh.shape().to_vec(), dir.w_hh.as_slice().unwrap()));
                out.push((dir.bias.shape().to_vec(), dir.bias.as_slice().unwrap()));
            }
        }
        out.push((self.att_w.shape().to_vec(), self.att_w.as_slice().unwrap()));
        out.push((self.att_b.shape().to_vec(), self.att_b.as_slice().unwrap()));
        out.push((self.att_v.shape().to_vec(), self.att_v.as_slice().unwrap()));
        out.push((self.out_w.shape().to_vec(), self.out_w.as_slice().unwrap()));
        out.push((self.out_b.shape().to_vec(), self.out_b.as_slice().unwrap()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.lstm {
            for dir in layer.iter_mut() {
                out.push(dir.w_ih.as_slice_mut().unwrap());
                out.push(dir.w_hh.as_slice_mut().unwrap());
                out.push(dir.bias.as_slice_mut().unwrap());
            }
        }
        out.push(self.att_w.as_slice_mut().unwrap());
        out.push(self.att_b.as_slice_mut().unwrap());
        out.push(self.att_v.as_slice_mut().unwrap());
        out.push(self.out_w.as_slice_mut().unwrap());
        out.push(self.out_b.as_slice_mut().unwrap());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, v)| v.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    /// Checkpoint container: relation vocabulary, named float32 tensors and
    /// the model dimensions.
    pub fn to_container(&self, relations: &[String]) -> Result<Container> {
        let tensors = self
            .names()
            .into_iter()
            .zip(self.tensors())
            .map(|(name, (dims, data))| {
                Tensor::new(name, dims, data.iter().map(|&v| v as f32).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut c = Container {
            relations: relations.to_vec(),
            tensors,
            tables: Vec::new(),
        };
        c.push_table("model", self.config().to_table());
        Ok(c)
    }

    /// Restores parameters, validating every tensor against the stored and,
    /// if given, the expected model dimensions.
    pub fn from_container(c: &Container, expected: Option<&ModelConfig>) -> Result<Self> {
        let cfg = ModelConfig::from_table(c.table("model")?)?;
        cfg.validate()?;
        if let Some(expected) = expected {
            if expected != &cfg {
                return Err(Error::Shape(format!(
                    "checkpoint dimensions {cfg:?} differ from configured {expected:?}"
                )));
            }
        }
        if c.relations.len() != cfg.relations {
            return Err(Error::Format(format!(
                "checkpoint lists {} relations but the output layer has {}",
                c.relations.len(),
                cfg.relations
            )));
        }
        let mut params = Self::zeros(&cfg);
        let names = params.names();
        let shapes: Vec<Vec<usize>> = params.tensors().into_iter().map(|(d, _)| d).collect();
        for ((name, dims), slot) in names.iter().zip(shapes).zip(params.tensors_mut()) {
            let t = c.tensor(name)?;
            if t.dims != dims {
                return Err(Error::Shape(format!(
                    "tensor `{name}` has dims {:?}, expected {dims:?}",
                    t.dims
                )));
            }
            for (dst, &src) in slot.iter_mut().zip(&t.data) {
                *dst = src as f64;
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            input_dim: 8,
            hidden: 6,
            layers: 2,
            attention: 5,
            relations: 3,
        }
    }

    #[test]
    fn shapes_are_consistent() {
        let p = ModelParams::zeros(&cfg());
        assert_eq!(p.config(), cfg());
        assert_eq!(p.lstm[1][0].w_ih.dim(), (24, 12));
        assert_eq!(p.names().len(), p.tensors().len());
        // 2 * (24*8 + 24*6 + 24) + 2 * (24*12 + 24*6 + 24) + 12*5 + 5 + 5 + 3*12 + 3
        assert_eq!(p.parameter_count(), 720 + 912 + 70 + 39);
    }

    #[test]
    fn init_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::init(&cfg(), &mut rng);
        let l0 = &p.lstm[0][0];
        assert!(l0.w_ih.iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
        assert!(l0.w_hh.iter().all(|w| w.abs() <= 1.0 / 6f64.sqrt()));
        assert!(l0.bias.slice(ndarray::s![6..12]).iter().all(|&b| b == 1.0));
        assert!(l0.bias.slice(ndarray::s![0..6]).iter().all(|&b| b == 0.0));
        assert!(p.att_v.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn container_round_trip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(&cfg(), &mut rng);
        let rels: Vec<String> = (0..3).map(|i| format!("r{i}")).collect();
        let c = p.to_container(&rels).unwrap();
        let back = ModelParams::from_container(&c, Some(&cfg())).unwrap();
        for ((_, a), (_, b)) in p.tensors().iter().zip(back.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        let other = ModelConfig { hidden: 7, ..cfg() };
        assert!(matches!(
            ModelParams::from_container(&c, Some(&other)),
            Err(Error::Shape(_))
        ));
    }
}
