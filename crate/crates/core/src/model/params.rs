use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, domain};
use crate::scaling::ScalerKind;
use crate::timebase::N_TIME_FEATURES;

/// Architecture of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub ff1_mult: usize,
    pub ff2_mult: usize,
    pub max_input_len: usize,
    /// Scaler applied to input windows at inference time.
    #[serde(default)]
    pub scaler: ScalerKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            n_blocks: 2,
            n_heads: 4,
            ff1_mult: 32,
            ff2_mult: 8,
            max_input_len: 100,
            scaler: ScalerKind::Robust,
        }
    }
}

impl ModelConfig {
    pub fn with_d_model(d_model: usize) -> Self {
        Self { d_model, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self;
        if c.d_model == 0 || c.n_blocks == 0 || c.n_heads == 0 || c.ff1_mult == 0 || c.ff2_mult == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if !c.d_model.is_multiple_of(c.n_heads) {
            return Err(Error::InvalidArgument(format!(
                "d_model {} is not divisible by n_heads {}",
                c.d_model, c.n_heads
            )));
        }
        if c.max_input_len == 0 {
            return Err(Error::InvalidArgument("max_input_len must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ff1_dim(&self) -> usize {
        self.d_model * self.ff1_mult
    }

    pub fn ff2_dim(&self) -> usize {
        self.d_model * self.ff2_mult
    }
}

/// Affine map `x · weight + bias`, with `weight` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng) as f32 as f64);
        Self { weight, bias: Array1::zeros(fan_out) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        Self { gain: Array1::ones(d), bias: Array1::zeros(d) }
    }

    fn zeros(d: usize) -> Self {
        Self { gain: Array1::zeros(d), bias: Array1::zeros(d) }
    }
}

/// Self-attention followed by the feedforward stack `d → ff1 → ff2 → d`,
/// each with a residual connection and layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ff_out: Linear,
    pub norm2: LayerNorm,
}

impl EncoderBlock {
    fn zeros(c: &ModelConfig) -> Self {
        let d = c.d_model;
        Self {
            query: Linear::zeros(d, d),
            key: Linear::zeros(d, d),
            value: Linear::zeros(d, d),
            output: Linear::zeros(d, d),
            norm1: LayerNorm::zeros(d),
            ff1: Linear::zeros(d, c.ff1_dim()),
            ff2: Linear::zeros(c.ff1_dim(), c.ff2_dim()),
            ff_out: Linear::zeros(c.ff2_dim(), d),
            norm2: LayerNorm::zeros(d),
        }
    }

    fn init<R: Rng + ?Sized>(c: &ModelConfig, rng: &mut R) -> Self {
        let d = c.d_model;
        Self {
            query: Linear::init(d, d, rng),
            key: Linear::init(d, d, rng),
            value: Linear::init(d, d, rng),
            output: Linear::init(d, d, rng),
            norm1: LayerNorm::new(d),
            ff1: Linear::init(d, c.ff1_dim(), rng),
            ff2: Linear::init(c.ff1_dim(), c.ff2_dim(), rng),
            ff_out: Linear::init(c.ff2_dim(), d, rng),
            norm2: LayerNorm::new(d),
        }
    }
}

/// All trainable tensors of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub time_proj: Linear,
    pub value_proj: Linear,
    pub query_token: Array1<f64>,
    pub blocks: Vec<EncoderBlock>,
    pub head: Linear,
}

/// Borrowed view of one named tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        Ok(Self {
            config: *config,
            time_proj: Linear::zeros(N_TIME_FEATURES, d),
            value_proj: Linear::zeros(1, d),
            query_token: Array1::zeros(d),
            blocks: (0..config.n_blocks).map(|_| EncoderBlock::zeros(config)).collect(),
            head: Linear::zeros(d, 1),
        })
    }

    /// Gaussian weights with std `1/sqrt(fan_in)`, zero biases, unit norm
    /// gains. Drawn values are rounded to `f32` so a freshly initialized
    /// model survives a save/load cycle unchanged.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = derive_rng(seed, domain::INIT, 0);
        let d = config.d_model;
        let time_proj = Linear::init(N_TIME_FEATURES, d, &mut rng);
        let value_proj = Linear::init(1, d, &mut rng);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let query_token = Array1::from_shape_fn(d, |_| unit.sample(&mut rng) as f32 as f64);
        let blocks = (0..config.n_blocks).map(|_| EncoderBlock::init(config, &mut rng)).collect();
        let head = Linear::init(d, 1, &mut rng);
        Ok(Self { config: *config, time_proj, value_proj, query_token, blocks, head })
    }

    /// Tensors in canonical (serialization) order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        fn push_linear<'a>(out: &mut Vec<TensorRef<'a>>, name: &str, l: &'a Linear) {
            out.push(TensorRef {
                name: format!("{name}.weight"),
                shape: l.weight.shape().to_vec(),
                data: slice2(&l.weight),
            });
            out.push(TensorRef { name: format!("{name}.bias"), shape: vec![l.bias.len()], data: slice1(&l.bias) });
        }
        fn push_norm<'a>(out: &mut Vec<TensorRef<'a>>, name: &str, n: &'a LayerNorm) {
            out.push(TensorRef { name: format!("{name}.gain"), shape: vec![n.gain.len()], data: slice1(&n.gain) });
            out.push(TensorRef { name: format!("{name}.bias"), shape: vec![n.bias.len()], data: slice1(&n.bias) });
        }
        let mut out = Vec::new();
        push_linear(&mut out, "time_proj", &self.time_proj);
        push_linear(&mut out, "value_proj", &self.value_proj);
        out.push(TensorRef {
            name: "query_token".into(),
            shape: vec![self.query_token.len()],
            data: slice1(&self.query_token),
        });
        for (i, b) in self.blocks.iter().enumerate() {
            let pre = format!("blocks.{i}");
            push_linear(&mut out, &format!("{pre}.attn.query"), &b.query);
            push_linear(&mut out, &format!("{pre}.attn.key"), &b.key);
            push_linear(&mut out, &format!("{pre}.attn.value"), &b.value);
            push_linear(&mut out, &format!("{pre}.attn.output"), &b.output);
            push_norm(&mut out, &format!("{pre}.norm1"), &b.norm1);
            push_linear(&mut out, &format!("{pre}.ff1"), &b.ff1);
            push_linear(&mut out, &format!("{pre}.ff2"), &b.ff2);
            push_linear(&mut out, &format!("{pre}.ff_out"), &b.ff_out);
            push_norm(&mut out, &format!("{pre}.norm2"), &b.norm2);
        }
        push_linear(&mut out, "head", &self.head);
        out
    }

    /// Mutable tensor data, in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn linear<'a>(out: &mut Vec<&'a mut [f64]>, l: &'a mut Linear) {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        fn norm<'a>(out: &mut Vec<&'a mut [f64]>, n: &'a mut LayerNorm) {
            out.push(n.gain.as_slice_mut().expect("standard layout"));
            out.push(n.bias.as_slice_mut().expect("standard layout"));
        }
        let mut out = Vec::new();
        linear(&mut out, &mut self.time_proj);
        linear(&mut out, &mut self.value_proj);
        out.push(self.query_token.as_slice_mut().expect("standard layout"));
        for b in self.blocks.iter_mut() {
            linear(&mut out, &mut b.query);
            linear(&mut out, &mut b.key);
            linear(&mut out, &mut b.value);
            linear(&mut out, &mut b.output);
            norm(&mut out, &mut b.norm1);
            linear(&mut out, &mut b.ff1);
            linear(&mut out, &mut b.ff2);
            linear(&mut out, &mut b.ff_out);
            norm(&mut out, &mut b.norm2);
        }
        linear(&mut out, &mut self.head);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// Rounds every entry to the nearest `f32`, the storage precision of the
    /// weight file.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// `self += alpha * other`; shapes must agree.
    pub fn add_scaled(&mut self, other: &ModelParams, alpha: f64) {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s.data).for_each(|(d, v)| *d += alpha * v);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn bitwise_eq(&self, other: &ModelParams) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        self.config == other.config
            && a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.shape == y.shape
                    && x.data.iter().zip(y.data).all(|(p, q)| p.to_bits() == q.to_bits())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_orders_agree() {
        let mut p = ModelParams::init(&ModelConfig::with_d_model(8), 1).unwrap();
        let lens: Vec<usize> = p.tensors().iter().map(|t| t.data.len()).collect();
        let shapes: Vec<usize> = p.tensors().iter().map(|t| t.shape.iter().product()).collect();
        let mut_lens: Vec<usize> = p.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(lens, mut_lens);
        assert_eq!(lens, shapes);
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.name).collect();
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn shapes_follow_config() {
        let c = ModelConfig::default();
        let p = ModelParams::zeros(&c).unwrap();
        let b = &p.blocks[0];
        assert_eq!(b.ff1.weight.dim(), (32, 1024));
        assert_eq!(b.ff2.weight.dim(), (1024, 256));
        assert_eq!(b.ff_out.weight.dim(), (256, 32));
        assert_eq!(p.blocks.len(), 2);
        assert_eq!(p.time_proj.weight.dim(), (5, 32));
    }

    #[test]
    fn rejects_bad_heads() {
        let c = ModelConfig { d_model: 10, n_heads: 4, ..Default::default() };
        assert!(ModelParams::init(&c, 0).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let c = ModelConfig::with_d_model(8);
        let a = ModelParams::init(&c, 5).unwrap();
        assert!(a.bitwise_eq(&ModelParams::init(&c, 5).unwrap()));
        assert!(!a.bitwise_eq(&ModelParams::init(&c, 6).unwrap()));
        let mut r = a.clone();
        r.round_to_f32();
        assert!(a.bitwise_eq(&r));
    }
}
