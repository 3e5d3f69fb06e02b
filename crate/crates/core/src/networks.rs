//! The four trainable components: encoder E, generator G, joint
//! discriminator D(x, z) and pair discriminator D'(x, x̂), built for two
//! architecture presets.
//!
//! * `image-dcgan`: 32x32x3 inputs through a 4-block DCGAN. The encoder
//!   and the discriminator x-branches downsample 32 -> 16 -> 8 -> 4 with
//!   stride-2 4x4 convolutions; the generator mirrors them with transposed
//!   convolutions and a tanh output. Filter widths `w -> 2w -> 4w` are set
//!   by `base_width` (default 64) and recorded in checkpoint manifests.
//! * `tabular-mlp`: feed-forward encoders with 256-64-16 units by default
//!   (the last hidden size is the latent dimension), mirrored generator,
//!   and MLP discriminators.
//!
//! Discriminators emit one raw, unsquashed score per pair; the latent
//! prior is a standard normal. Inference entry points run the networks in
//! evaluation mode and are pure functions of their inputs; the `_train`
//! variants update batch-norm running statistics and return backward
//! caches, and are reserved for the training loop.

use crate::error::{Error, Result};
use crate::nn::{
    act_backward, act_forward, ActCache, Activation, AdamParams, BatchNorm2d, BatchNormCache,
    Conv2d, Conv2dCache, ConvT2dCache, ConvTranspose2d, Dense, DenseCache, ParamMap, Tensor,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const IMAGE_SHAPE: [usize; 3] = [3, 32, 32];
pub const DEFAULT_IMAGE_LATENT: usize = 100;
pub const DEFAULT_IMAGE_WIDTH: usize = 64;
pub const DEFAULT_TABULAR_HIDDEN: [usize; 3] = [256, 64, 16];

/// Standard-normal latent prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentPrior {
    pub dim: usize,
}

/// Architecture family plus its defining dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArchitecturePreset {
    ImageDcgan {
        latent_dim: usize,
        base_width: usize,
    },
    TabularMlp {
        input_dim: usize,
        hidden_units: Vec<usize>,
    },
}

impl ArchitecturePreset {
    pub fn image_default() -> Self {
        ArchitecturePreset::ImageDcgan {
            latent_dim: DEFAULT_IMAGE_LATENT,
            base_width: DEFAULT_IMAGE_WIDTH,
        }
    }

    pub fn tabular_default(input_dim: usize) -> Self {
        ArchitecturePreset::TabularMlp {
            input_dim,
            hidden_units: DEFAULT_TABULAR_HIDDEN.to_vec(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            ArchitecturePreset::ImageDcgan { latent_dim, .. } => *latent_dim,
            ArchitecturePreset::TabularMlp { hidden_units, .. } => {
                *hidden_units.last().expect("validated non-empty")
            }
        }
    }

    /// Per-sample input shape: `[3, 32, 32]` or `[input_dim]`.
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            ArchitecturePreset::ImageDcgan { .. } => IMAGE_SHAPE.to_vec(),
            ArchitecturePreset::TabularMlp { input_dim, .. } => vec![*input_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape().iter().product()
    }

    fn validate(&self) -> Result<()> {
        match self {
            ArchitecturePreset::ImageDcgan {
                latent_dim,
                base_width,
            } => {
                if *latent_dim == 0 || *base_width == 0 {
                    return Err(Error::invalid("latent_dim and base_width must be positive"));
                }
            }
            ArchitecturePreset::TabularMlp {
                input_dim,
                hidden_units,
            } => {
                if *input_dim == 0 {
                    return Err(Error::invalid("input_dim must be positive"));
                }
                if hidden_units.is_empty() || hidden_units.contains(&0) {
                    return Err(Error::invalid(
                        "hidden_units must be a non-empty list of positive sizes",
                    ));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// MLP building block
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden_act: Activation,
    final_act: Activation,
}

pub struct MlpCache {
    dense: Vec<DenseCache>,
    act: Vec<ActCache>,
}

impl Mlp {
    fn new(
        dims: &[usize],
        hidden_act: Activation,
        final_act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], rng))
            .collect();
        Mlp {
            layers,
            hidden_act,
            final_act,
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.forward(&cur);
            let act = if i + 1 == self.layers.len() {
                self.final_act
            } else {
                self.hidden_act
            };
            cur = act_forward(act, &cur).0;
        }
        cur
    }

    fn forward_train(&self, x: &Tensor) -> (Tensor, MlpCache) {
        let mut dense = Vec::with_capacity(self.layers.len());
        let mut act = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, dc) = layer.forward_train(&cur);
            dense.push(dc);
            let a = if i + 1 == self.layers.len() {
                self.final_act
            } else {
                self.hidden_act
            };
            let (y, ac) = act_forward(a, &y);
            act.push(ac);
            cur = y;
        }
        (cur, MlpCache { dense, act })
    }

    fn backward(&mut self, cache: &MlpCache, dy: &Tensor, accumulate: bool) -> Tensor {
        let mut grad = dy.clone();
        for i in (0..self.layers.len()).rev() {
            let a = if i + 1 == self.layers.len() {
                self.final_act
            } else {
                self.hidden_act
            };
            grad = act_backward(a, &cache.act[i], &grad);
            grad = self.layers[i].backward(&cache.dense[i], &grad, accumulate);
        }
        grad
    }

    fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.zero_grad();
        }
    }

    fn adam_step(&mut self, p: &AdamParams) {
        for l in &mut self.layers {
            l.adam_step(p);
        }
    }

    fn save_into(&self, prefix: &str, map: &mut ParamMap) {
        for (i, l) in self.layers.iter().enumerate() {
            l.save_into(&format!("{prefix}.fc{i}"), map);
        }
    }

    fn load_from(&mut self, prefix: &str, map: &ParamMap) -> Result<()> {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.load_from(&format!("{prefix}.fc{i}"), map)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Image towers
// ---------------------------------------------------------------------------

/// Stride-2 conv stack 32 -> 16 -> 8 -> 4 with leaky-relu and optional
/// batch norm per block, flattened on the way out.
#[derive(Debug, Clone)]
pub struct ConvTower {
    convs: Vec<Conv2d>,
    bns: Vec<Option<BatchNorm2d>>,
}

pub struct ConvTowerCache {
    conv: Vec<Conv2dCache>,
    bn: Vec<Option<BatchNormCache>>,
    act: Vec<ActCache>,
    out_shape: Vec<usize>,
}

impl ConvTower {
    fn new(channels: &[usize], with_bn: bool, rng: &mut ChaCha8Rng) -> Self {
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        for (i, w) in channels.windows(2).enumerate() {
            convs.push(Conv2d::new(w[0], w[1], 4, 2, 1, rng));
            // DCGAN-style: no normalization on the first block.
            if with_bn && i > 0 {
                bns.push(Some(BatchNorm2d::new(w[1], rng)));
            } else {
                bns.push(None);
            }
        }
        ConvTower { convs, bns }
    }

    fn out_dim(&self) -> usize {
        let blocks = self.convs.len();
        let side = 32 >> blocks;
        self.convs.last().unwrap().out_c * side * side
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let mut cur = x.clone();
        for (conv, bn) in self.convs.iter().zip(&self.bns) {
            cur = conv.forward(&cur);
            if let Some(bn) = bn {
                cur = bn.forward_eval(&cur);
            }
            cur = act_forward(Activation::LeakyRelu, &cur).0;
        }
        flatten(cur)
    }

    fn forward_train(&mut self, x: &Tensor) -> (Tensor, ConvTowerCache) {
        let mut conv_caches = Vec::new();
        let mut bn_caches = Vec::new();
        let mut act_caches = Vec::new();
        let mut cur = x.clone();
        for (conv, bn) in self.convs.iter().zip(self.bns.iter_mut()) {
            let (y, cc) = conv.forward_train(&cur);
            conv_caches.push(cc);
            let y = if let Some(bn) = bn {
                let (y, bc) = bn.forward_train(&y);
                bn_caches.push(Some(bc));
                y
            } else {
                bn_caches.push(None);
                y
            };
            let (y, ac) = act_forward(Activation::LeakyRelu, &y);
            act_caches.push(ac);
            cur = y;
        }
        let out_shape = cur.shape.clone();
        (
            flatten(cur),
            ConvTowerCache {
                conv: conv_caches,
                bn: bn_caches,
                act: act_caches,
                out_shape,
            },
        )
    }

    fn backward(&mut self, cache: &ConvTowerCache, dflat: &Tensor, accumulate: bool) -> Tensor {
        let mut grad = Tensor::from_vec(&cache.out_shape, dflat.data.clone());
        for i in (0..self.convs.len()).rev() {
            grad = act_backward(Activation::LeakyRelu, &cache.act[i], &grad);
            if let (Some(bn), Some(bc)) = (&mut self.bns[i], &cache.bn[i]) {
                grad = bn.backward(bc, &grad, accumulate);
            }
            grad = self.convs[i].backward(&cache.conv[i], &grad, accumulate);
        }
        grad
    }

    fn zero_grad(&mut self) {
        for c in &mut self.convs {
            c.zero_grad();
        }
        for bn in self.bns.iter_mut().flatten() {
            bn.zero_grad();
        }
    }

    fn adam_step(&mut self, p: &AdamParams) {
        for c in &mut self.convs {
            c.adam_step(p);
        }
        for bn in self.bns.iter_mut().flatten() {
            bn.adam_step(p);
        }
    }

    fn save_into(&self, prefix: &str, map: &mut ParamMap) {
        for (i, c) in self.convs.iter().enumerate() {
            c.save_into(&format!("{prefix}.conv{i}"), map);
        }
        for (i, bn) in self.bns.iter().enumerate() {
            if let Some(bn) = bn {
                bn.save_into(&format!("{prefix}.bn{i}"), map);
            }
        }
    }

    fn load_from(&mut self, prefix: &str, map: &ParamMap) -> Result<()> {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.load_from(&format!("{prefix}.conv{i}"), map)?;
        }
        for (i, bn) in self.bns.iter_mut().enumerate() {
            if let Some(bn) = bn {
                bn.load_from(&format!("{prefix}.bn{i}"), map)?;
            }
        }
        Ok(())
    }
}

fn flatten(t: Tensor) -> Tensor {
    let n = t.batch();
    let d = t.sample_dim();
    Tensor::from_vec(&[n, d], t.data)
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

/// Image encoder: conv tower (batch-normed after the first block) plus a
/// linear projection to the latent space.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    tower: ConvTower,
    fc: Dense,
}

pub struct ImageEncoderCache {
    tower: ConvTowerCache,
    fc: DenseCache,
}

impl ImageEncoder {
    fn new(latent: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        let tower = ConvTower::new(&[3, width, 2 * width, 4 * width], true, rng);
        let fc = Dense::new(tower.out_dim(), latent, rng);
        ImageEncoder { tower, fc }
    }
}

pub enum Encoder {
    Image(ImageEncoder),
    Tabular(Mlp),
}

pub enum EncoderCache {
    Image(ImageEncoderCache),
    Tabular(MlpCache),
}

impl Encoder {
    pub fn forward(&self, x: &Tensor) -> Tensor {
        match self {
            Encoder::Image(e) => e.fc.forward(&e.tower.forward(x)),
            Encoder::Tabular(m) => m.forward(x),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, EncoderCache) {
        match self {
            Encoder::Image(e) => {
                let (feat, tc) = e.tower.forward_train(x);
                let (z, fc) = e.fc.forward_train(&feat);
                (z, EncoderCache::Image(ImageEncoderCache { tower: tc, fc }))
            }
            Encoder::Tabular(m) => {
                let (z, c) = m.forward_train(x);
                (z, EncoderCache::Tabular(c))
            }
        }
    }

    pub fn backward(
        &mut self,
        cache: &EncoderCache,
        d_latent: &Tensor,
        accumulate: bool,
    ) -> Tensor {
        match (self, cache) {
            (Encoder::Image(e), EncoderCache::Image(c)) => {
                let dfeat = e.fc.backward(&c.fc, d_latent, accumulate);
                e.tower.backward(&c.tower, &dfeat, accumulate)
            }
            (Encoder::Tabular(m), EncoderCache::Tabular(c)) => m.backward(c, d_latent, accumulate),
            _ => unreachable!("encoder cache kind mismatch"),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Encoder::Image(e) => {
                e.tower.zero_grad();
                e.fc.zero_grad();
            }
            Encoder::Tabular(m) => m.zero_grad(),
        }
    }

    pub fn adam_step(&mut self, p: &AdamParams) {
        match self {
            Encoder::Image(e) => {
                e.tower.adam_step(p);
                e.fc.adam_step(p);
            }
            Encoder::Tabular(m) => m.adam_step(p),
        }
    }

    pub fn save_into(&self, map: &mut ParamMap) {
        match self {
            Encoder::Image(e) => {
                e.tower.save_into("tower", map);
                e.fc.save_into("fc", map);
            }
            Encoder::Tabular(m) => m.save_into("mlp", map),
        }
    }

    pub fn load_from(&mut self, map: &ParamMap) -> Result<()> {
        match self {
            Encoder::Image(e) => {
                e.tower.load_from("tower", map)?;
                e.fc.load_from("fc", map)
            }
            Encoder::Tabular(m) => m.load_from("mlp", map),
        }
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Image generator: linear projection to a 4x4 feature map, then three
/// transposed-convolution blocks up to 32x32x3 with a tanh output.
#[derive(Debug, Clone)]
pub struct ImageGenerator {
    width: usize,
    fc: Dense,
    fc_bn: BatchNorm2d,
    tconvs: Vec<ConvTranspose2d>,
    bns: Vec<Option<BatchNorm2d>>,
}

pub struct ImageGeneratorCache {
    fc: DenseCache,
    fc_bn: BatchNormCache,
    fc_act: ActCache,
    tconv: Vec<ConvT2dCache>,
    bn: Vec<Option<BatchNormCache>>,
    act: Vec<ActCache>,
}

impl ImageGenerator {
    fn new(latent: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        let fc = Dense::new(latent, 4 * width * 16, rng);
        let fc_bn = BatchNorm2d::new(4 * width, rng);
        let tconvs = vec![
            ConvTranspose2d::new(4 * width, 2 * width, 4, 2, 1, rng),
            ConvTranspose2d::new(2 * width, width, 4, 2, 1, rng),
            ConvTranspose2d::new(width, 3, 4, 2, 1, rng),
        ];
        let bns = vec![
            Some(BatchNorm2d::new(2 * width, rng)),
            Some(BatchNorm2d::new(width, rng)),
            None,
        ];
        ImageGenerator {
            width,
            fc,
            fc_bn,
            tconvs,
            bns,
        }
    }
}

pub enum Generator {
    Image(ImageGenerator),
    Tabular(Mlp),
}

pub enum GeneratorCache {
    Image(ImageGeneratorCache),
    Tabular(MlpCache),
}

impl Generator {
    pub fn forward(&self, z: &Tensor) -> Tensor {
        match self {
            Generator::Image(g) => {
                let n = z.batch();
                let feat = g.fc.forward(z);
                let feat = Tensor::from_vec(&[n, 4 * g.width, 4, 4], feat.data);
                let feat = g.fc_bn.forward_eval(&feat);
                let mut cur = act_forward(Activation::Relu, &feat).0;
                for (i, (t, bn)) in g.tconvs.iter().zip(&g.bns).enumerate() {
                    cur = t.forward(&cur);
                    if let Some(bn) = bn {
                        cur = bn.forward_eval(&cur);
                    }
                    let act = if i + 1 == g.tconvs.len() {
                        Activation::Tanh
                    } else {
                        Activation::Relu
                    };
                    cur = act_forward(act, &cur).0;
                }
                cur
            }
            Generator::Tabular(m) => m.forward(z),
        }
    }

    pub fn forward_train(&mut self, z: &Tensor) -> (Tensor, GeneratorCache) {
        match self {
            Generator::Image(g) => {
                let n = z.batch();
                let (feat, fc_cache) = g.fc.forward_train(z);
                let feat = Tensor::from_vec(&[n, 4 * g.width, 4, 4], feat.data);
                let (feat, fc_bn_cache) = g.fc_bn.forward_train(&feat);
                let (mut cur, fc_act) = act_forward(Activation::Relu, &feat);
                let mut tconv_caches = Vec::new();
                let mut bn_caches = Vec::new();
                let mut act_caches = Vec::new();
                let count = g.tconvs.len();
                for (i, (t, bn)) in g.tconvs.iter().zip(g.bns.iter_mut()).enumerate() {
                    let (y, tc) = t.forward_train(&cur);
                    tconv_caches.push(tc);
                    let y = if let Some(bn) = bn {
                        let (y, bc) = bn.forward_train(&y);
                        bn_caches.push(Some(bc));
                        y
                    } else {
                        bn_caches.push(None);
                        y
                    };
                    let act = if i + 1 == count {
                        Activation::Tanh
                    } else {
                        Activation::Relu
                    };
                    let (y, ac) = act_forward(act, &y);
                    act_caches.push(ac);
                    cur = y;
                }
                (
                    cur,
                    GeneratorCache::Image(ImageGeneratorCache {
                        fc: fc_cache,
                        fc_bn: fc_bn_cache,
                        fc_act,
                        tconv: tconv_caches,
                        bn: bn_caches,
                        act: act_caches,
                    }),
                )
            }
            Generator::Tabular(m) => {
                let (y, c) = m.forward_train(z);
                (y, GeneratorCache::Tabular(c))
            }
        }
    }

    /// Returns the gradient w.r.t. the latent input.
    pub fn backward(&mut self, cache: &GeneratorCache, dy: &Tensor, accumulate: bool) -> Tensor {
        match (self, cache) {
            (Generator::Image(g), GeneratorCache::Image(c)) => {
                let count = g.tconvs.len();
                let mut grad = dy.clone();
                for i in (0..count).rev() {
                    let act = if i + 1 == count {
                        Activation::Tanh
                    } else {
                        Activation::Relu
                    };
                    grad = act_backward(act, &c.act[i], &grad);
                    if let (Some(bn), Some(bc)) = (&mut g.bns[i], &c.bn[i]) {
                        grad = bn.backward(bc, &grad, accumulate);
                    }
                    grad = g.tconvs[i].backward(&c.tconv[i], &grad, accumulate);
                }
                grad = act_backward(Activation::Relu, &c.fc_act, &grad);
                grad = g.fc_bn.backward(&c.fc_bn, &grad, accumulate);
                let n = grad.batch();
                let flat = Tensor::from_vec(&[n, 4 * g.width * 16], grad.data);
                g.fc.backward(&c.fc, &flat, accumulate)
            }
            (Generator::Tabular(m), GeneratorCache::Tabular(c)) => m.backward(c, dy, accumulate),
            _ => unreachable!("generator cache kind mismatch"),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Generator::Image(g) => {
                g.fc.zero_grad();
                g.fc_bn.zero_grad();
                for t in &mut g.tconvs {
                    t.zero_grad();
                }
                for bn in g.bns.iter_mut().flatten() {
                    bn.zero_grad();
                }
            }
            Generator::Tabular(m) => m.zero_grad(),
        }
    }

    pub fn adam_step(&mut self, p: &AdamParams) {
        match self {
            Generator::Image(g) => {
                g.fc.adam_step(p);
                g.fc_bn.adam_step(p);
                for t in &mut g.tconvs {
                    t.adam_step(p);
                }
                for bn in g.bns.iter_mut().flatten() {
                    bn.adam_step(p);
                }
            }
            Generator::Tabular(m) => m.adam_step(p),
        }
    }

    pub fn save_into(&self, map: &mut ParamMap) {
        match self {
            Generator::Image(g) => {
                g.fc.save_into("fc", map);
                g.fc_bn.save_into("fc_bn", map);
                for (i, t) in g.tconvs.iter().enumerate() {
                    t.save_into(&format!("tconv{i}"), map);
                }
                for (i, bn) in g.bns.iter().enumerate() {
                    if let Some(bn) = bn {
                        bn.save_into(&format!("bn{i}"), map);
                    }
                }
            }
            Generator::Tabular(m) => m.save_into("mlp", map),
        }
    }

    pub fn load_from(&mut self, map: &ParamMap) -> Result<()> {
        match self {
            Generator::Image(g) => {
                g.fc.load_from("fc", map)?;
                g.fc_bn.load_from("fc_bn", map)?;
                for (i, t) in g.tconvs.iter_mut().enumerate() {
                    t.load_from(&format!("tconv{i}"), map)?;
                }
                for (i, bn) in g.bns.iter_mut().enumerate() {
                    if let Some(bn) = bn {
                        bn.load_from(&format!("bn{i}"), map)?;
                    }
                }
                Ok(())
            }
            Generator::Tabular(m) => m.load_from("mlp", map),
        }
    }
}

// ---------------------------------------------------------------------------
// Joint discriminator D(x, z)
// ---------------------------------------------------------------------------

/// x and z are embedded by separate branches, concatenated, and reduced to
/// one raw score by a fully connected head.
pub struct ImageJointDisc {
    x_tower: ConvTower,
    z_mlp: Mlp,
    head: Mlp,
}

pub struct TabularJointDisc {
    x_mlp: Mlp,
    z_mlp: Mlp,
    head: Mlp,
}

pub enum JointDiscriminator {
    Image(ImageJointDisc),
    Tabular(TabularJointDisc),
}

pub enum JointDiscCache {
    Image {
        x: ConvTowerCache,
        z: MlpCache,
        head: MlpCache,
        x_dim: usize,
    },
    Tabular {
        x: MlpCache,
        z: MlpCache,
        head: MlpCache,
        x_dim: usize,
    },
}

const Z_EMBED: usize = 256;
const HEAD_HIDDEN: usize = 256;

impl JointDiscriminator {
    pub fn forward(&self, x: &Tensor, z: &Tensor) -> Tensor {
        match self {
            JointDiscriminator::Image(d) => {
                let xf = d.x_tower.forward(x);
                let zf = d.z_mlp.forward(z);
                d.head.forward(&concat_features(&xf, &zf))
            }
            JointDiscriminator::Tabular(d) => {
                let xf = d.x_mlp.forward(x);
                let zf = d.z_mlp.forward(z);
                d.head.forward(&concat_features(&xf, &zf))
            }
        }
    }

    pub fn forward_train(&mut self, x: &Tensor, z: &Tensor) -> (Tensor, JointDiscCache) {
        match self {
            JointDiscriminator::Image(d) => {
                let (xf, xc) = d.x_tower.forward_train(x);
                let (zf, zc) = d.z_mlp.forward_train(z);
                let x_dim = xf.sample_dim();
                let (s, hc) = d.head.forward_train(&concat_features(&xf, &zf));
                (
                    s,
                    JointDiscCache::Image {
                        x: xc,
                        z: zc,
                        head: hc,
                        x_dim,
                    },
                )
            }
            JointDiscriminator::Tabular(d) => {
                let (xf, xc) = d.x_mlp.forward_train(x);
                let (zf, zc) = d.z_mlp.forward_train(z);
                let x_dim = xf.sample_dim();
                let (s, hc) = d.head.forward_train(&concat_features(&xf, &zf));
                (
                    s,
                    JointDiscCache::Tabular {
                        x: xc,
                        z: zc,
                        head: hc,
                        x_dim,
                    },
                )
            }
        }
    }

    /// Returns (dx, dz).
    pub fn backward(
        &mut self,
        cache: &JointDiscCache,
        dscore: &Tensor,
        accumulate: bool,
    ) -> (Tensor, Tensor) {
        match (self, cache) {
            (JointDiscriminator::Image(d), JointDiscCache::Image { x, z, head, x_dim }) => {
                let dcat = d.head.backward(head, dscore, accumulate);
                let (dxf, dzf) = split_features(&dcat, *x_dim);
                let dx = d.x_tower.backward(x, &dxf, accumulate);
                let dz = d.z_mlp.backward(z, &dzf, accumulate);
                (dx, dz)
            }
            (JointDiscriminator::Tabular(d), JointDiscCache::Tabular { x, z, head, x_dim }) => {
                let dcat = d.head.backward(head, dscore, accumulate);
                let (dxf, dzf) = split_features(&dcat, *x_dim);
                let dx = d.x_mlp.backward(x, &dxf, accumulate);
                let dz = d.z_mlp.backward(z, &dzf, accumulate);
                (dx, dz)
            }
            _ => unreachable!("joint discriminator cache kind mismatch"),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            JointDiscriminator::Image(d) => {
                d.x_tower.zero_grad();
                d.z_mlp.zero_grad();
                d.head.zero_grad();
            }
            JointDiscriminator::Tabular(d) => {
                d.x_mlp.zero_grad();
                d.z_mlp.zero_grad();
                d.head.zero_grad();
            }
        }
    }

    pub fn adam_step(&mut self, p: &AdamParams) {
        match self {
            JointDiscriminator::Image(d) => {
                d.x_tower.adam_step(p);
                d.z_mlp.adam_step(p);
                d.head.adam_step(p);
            }
            JointDiscriminator::Tabular(d) => {
                d.x_mlp.adam_step(p);
                d.z_mlp.adam_step(p);
                d.head.adam_step(p);
            }
        }
    }

    pub fn save_into(&self, map: &mut ParamMap) {
        match self {
            JointDiscriminator::Image(d) => {
                d.x_tower.save_into("x_tower", map);
                d.z_mlp.save_into("z_mlp", map);
                d.head.save_into("head", map);
            }
            JointDiscriminator::Tabular(d) => {
                d.x_mlp.save_into("x_mlp", map);
                d.z_mlp.save_into("z_mlp", map);
                d.head.save_into("head", map);
            }
        }
    }

    pub fn load_from(&mut self, map: &ParamMap) -> Result<()> {
        match self {
            JointDiscriminator::Image(d) => {
                d.x_tower.load_from("x_tower", map)?;
                d.z_mlp.load_from("z_mlp", map)?;
                d.head.load_from("head", map)
            }
            JointDiscriminator::Tabular(d) => {
                d.x_mlp.load_from("x_mlp", map)?;
                d.z_mlp.load_from("z_mlp", map)?;
                d.head.load_from("head", map)
            }
        }
    }
}

fn concat_features(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.batch();
    debug_assert_eq!(n, b.batch());
    let (da, db) = (a.sample_dim(), b.sample_dim());
    let mut out = Tensor::zeros(&[n, da + db]);
    for i in 0..n {
        out.data[i * (da + db)..i * (da + db) + da].copy_from_slice(&a.data[i * da..(i + 1) * da]);
        out.data[i * (da + db) + da..(i + 1) * (da + db)]
            .copy_from_slice(&b.data[i * db..(i + 1) * db]);
    }
    out
}

fn split_features(cat: &Tensor, da: usize) -> (Tensor, Tensor) {
    let n = cat.batch();
    let d = cat.sample_dim();
    let db = d - da;
    let mut a = Tensor::zeros(&[n, da]);
    let mut b = Tensor::zeros(&[n, db]);
    for i in 0..n {
        a.data[i * da..(i + 1) * da].copy_from_slice(&cat.data[i * d..i * d + da]);
        b.data[i * db..(i + 1) * db].copy_from_slice(&cat.data[i * d + da..(i + 1) * d]);
    }
    (a, b)
}

// ---------------------------------------------------------------------------
// Pair discriminator D'(x, x_hat)
// ---------------------------------------------------------------------------

/// The two data-shaped inputs are concatenated (channel axis for images,
/// feature axis for tabular) and reduced to a raw score. No weights are
/// shared with the joint discriminator.
pub struct ImagePairDisc {
    tower: ConvTower,
    head: Mlp,
}

pub enum PairDiscriminator {
    Image(ImagePairDisc),
    Tabular(Mlp),
}

pub enum PairDiscCache {
    Image {
        tower: ConvTowerCache,
        head: MlpCache,
    },
    Tabular(MlpCache),
}

impl PairDiscriminator {
    pub fn forward(&self, x: &Tensor, x_hat: &Tensor) -> Tensor {
        match self {
            PairDiscriminator::Image(d) => {
                let joined = concat_channels(x, x_hat);
                d.head.forward(&d.tower.forward(&joined))
            }
            PairDiscriminator::Tabular(m) => m.forward(&concat_features(x, x_hat)),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor, x_hat: &Tensor) -> (Tensor, PairDiscCache) {
        match self {
            PairDiscriminator::Image(d) => {
                let joined = concat_channels(x, x_hat);
                let (feat, tc) = d.tower.forward_train(&joined);
                let (s, hc) = d.head.forward_train(&feat);
                (
                    s,
                    PairDiscCache::Image {
                        tower: tc,
                        head: hc,
                    },
                )
            }
            PairDiscriminator::Tabular(m) => {
                let (s, c) = m.forward_train(&concat_features(x, x_hat));
                (s, PairDiscCache::Tabular(c))
            }
        }
    }

    /// Returns (dx, dx_hat).
    pub fn backward(
        &mut self,
        cache: &PairDiscCache,
        dscore: &Tensor,
        accumulate: bool,
    ) -> (Tensor, Tensor) {
        match (self, cache) {
            (PairDiscriminator::Image(d), PairDiscCache::Image { tower, head }) => {
                let dfeat = d.head.backward(head, dscore, accumulate);
                let djoined = d.tower.backward(tower, &dfeat, accumulate);
                split_channels(&djoined)
            }
            (PairDiscriminator::Tabular(m), PairDiscCache::Tabular(c)) => {
                let dcat = m.backward(c, dscore, accumulate);
                let half = dcat.sample_dim() / 2;
                split_features(&dcat, half)
            }
            _ => unreachable!("pair discriminator cache kind mismatch"),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            PairDiscriminator::Image(d) => {
                d.tower.zero_grad();
                d.head.zero_grad();
            }
            PairDiscriminator::Tabular(m) => m.zero_grad(),
        }
    }

    pub fn adam_step(&mut self, p: &AdamParams) {
        match self {
            PairDiscriminator::Image(d) => {
                d.tower.adam_step(p);
                d.head.adam_step(p);
            }
            PairDiscriminator::Tabular(m) => m.adam_step(p),
        }
    }

    pub fn save_into(&self, map: &mut ParamMap) {
        match self {
            PairDiscriminator::Image(d) => {
                d.tower.save_into("tower", map);
                d.head.save_into("head", map);
            }
            PairDiscriminator::Tabular(m) => m.save_into("mlp", map),
        }
    }

    pub fn load_from(&mut self, map: &ParamMap) -> Result<()> {
        match self {
            PairDiscriminator::Image(d) => {
                d.tower.load_from("tower", map)?;
                d.head.load_from("head", map)
            }
            PairDiscriminator::Tabular(m) => m.load_from("mlp", map),
        }
    }
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.batch();
    let (c, h, w) = (a.shape[1], a.shape[2], a.shape[3]);
    let plane = c * h * w;
    let mut out = Tensor::zeros(&[n, 2 * c, h, w]);
    for i in 0..n {
        out.data[i * 2 * plane..i * 2 * plane + plane]
            .copy_from_slice(&a.data[i * plane..(i + 1) * plane]);
        out.data[i * 2 * plane + plane..(i + 1) * 2 * plane]
            .copy_from_slice(&b.data[i * plane..(i + 1) * plane]);
    }
    out
}

fn split_channels(cat: &Tensor) -> (Tensor, Tensor) {
    let n = cat.batch();
    let (c2, h, w) = (cat.shape[1], cat.shape[2], cat.shape[3]);
    let c = c2 / 2;
    let plane = c * h * w;
    let mut a = Tensor::zeros(&[n, c, h, w]);
    let mut b = Tensor::zeros(&[n, c, h, w]);
    for i in 0..n {
        a.data[i * plane..(i + 1) * plane]
            .copy_from_slice(&cat.data[i * 2 * plane..i * 2 * plane + plane]);
        b.data[i * plane..(i + 1) * plane]
            .copy_from_slice(&cat.data[i * 2 * plane + plane..(i + 1) * 2 * plane]);
    }
    (a, b)
}

// ---------------------------------------------------------------------------
// ModelBundle
// ---------------------------------------------------------------------------

/// The four trainable networks plus the latent prior.
///
/// Not safe for concurrent mutation; concurrent read-only inference on
/// frozen weights is fine. Training owns the bundle exclusively.
pub struct ModelBundle {
    pub preset: ArchitecturePreset,
    pub prior: LatentPrior,
    pub encoder: Encoder,
    pub generator: Generator,
    pub joint: JointDiscriminator,
    pub pair: PairDiscriminator,
}

impl ModelBundle {
    pub fn new(preset: ArchitecturePreset, seed: u64) -> Result<Self> {
        preset.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latent = preset.latent_dim();
        let bundle = match &preset {
            ArchitecturePreset::ImageDcgan { base_width, .. } => {
                let w = *base_width;
                ModelBundle {
                    prior: LatentPrior { dim: latent },
                    encoder: Encoder::Image(ImageEncoder::new(latent, w, &mut rng)),
                    generator: Generator::Image(ImageGenerator::new(latent, w, &mut rng)),
                    joint: JointDiscriminator::Image({
                        let x_tower = ConvTower::new(&[3, w, 2 * w, 4 * w], false, &mut rng);
                        let x_dim = x_tower.out_dim();
                        ImageJointDisc {
                            x_tower,
                            z_mlp: Mlp::new(
                                &[latent, Z_EMBED, Z_EMBED],
                                Activation::LeakyRelu,
                                Activation::LeakyRelu,
                                &mut rng,
                            ),
                            head: Mlp::new(
                                &[x_dim + Z_EMBED, HEAD_HIDDEN, 1],
                                Activation::LeakyRelu,
                                Activation::Identity,
                                &mut rng,
                            ),
                        }
                    }),
                    pair: PairDiscriminator::Image({
                        let tower = ConvTower::new(&[6, w, 2 * w, 4 * w], false, &mut rng);
                        let f_dim = tower.out_dim();
                        ImagePairDisc {
                            tower,
                            head: Mlp::new(
                                &[f_dim, HEAD_HIDDEN, 1],
                                Activation::LeakyRelu,
                                Activation::Identity,
                                &mut rng,
                            ),
                        }
                    }),
                    preset,
                }
            }
            ArchitecturePreset::TabularMlp {
                input_dim,
                hidden_units,
            } => {
                let d = *input_dim;
                let mut enc_dims = vec![d];
                enc_dims.extend_from_slice(hidden_units);
                let mut gen_dims: Vec<usize> = enc_dims.iter().rev().copied().collect();
                gen_dims[0] = latent;
                let h1 = hidden_units[0];
                // x-branch compresses to the second hidden size (64 by default).
                let x_embed = if hidden_units.len() >= 2 {
                    hidden_units[1]
                } else {
                    hidden_units[0]
                };
                ModelBundle {
                    prior: LatentPrior { dim: latent },
                    encoder: Encoder::Tabular(Mlp::new(
                        &enc_dims,
                        Activation::LeakyRelu,
                        Activation::Identity,
                        &mut rng,
                    )),
                    generator: Generator::Tabular(Mlp::new(
                        &gen_dims,
                        Activation::Relu,
                        Activation::Identity,
                        &mut rng,
                    )),
                    joint: JointDiscriminator::Tabular(TabularJointDisc {
                        x_mlp: Mlp::new(
                            &[d, h1, x_embed],
                            Activation::LeakyRelu,
                            Activation::LeakyRelu,
                            &mut rng,
                        ),
                        z_mlp: Mlp::new(
                            &[latent, x_embed],
                            Activation::LeakyRelu,
                            Activation::LeakyRelu,
                            &mut rng,
                        ),
                        head: Mlp::new(
                            &[2 * x_embed, x_embed, 1],
                            Activation::LeakyRelu,
                            Activation::Identity,
                            &mut rng,
                        ),
                    }),
                    pair: PairDiscriminator::Tabular(Mlp::new(
                        &[2 * d, h1, x_embed, 1],
                        Activation::LeakyRelu,
                        Activation::Identity,
                        &mut rng,
                    )),
                    preset,
                }
            }
        };
        Ok(bundle)
    }

    pub fn latent_dim(&self) -> usize {
        self.prior.dim
    }

    /// Validate and pack a batch of per-sample vectors into a tensor of
    /// shape [n, ...dims].
    pub fn batch_to_tensor(rows: &[Vec<f32>], dims: &[usize]) -> Result<Tensor> {
        let per = dims.iter().product::<usize>();
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut data = Vec::with_capacity(rows.len() * per);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != per {
                return Err(Error::ShapeMismatch {
                    expected: format!("sample dim {per}"),
                    actual: format!("row {i} has dim {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(dims);
        Ok(Tensor::from_vec(&shape, data))
    }

    fn tensor_to_rows(t: &Tensor) -> Vec<Vec<f32>> {
        let d = t.sample_dim();
        t.data.chunks(d).map(|c| c.to_vec()).collect()
    }

    /// Deterministic latent codes for a data batch (evaluation mode).
    pub fn encode(&self, x: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        let t = Self::batch_to_tensor(x, &self.preset.input_shape())?;
        Ok(Self::tensor_to_rows(&self.encoder.forward(&t)))
    }

    /// Generate data from latent codes (evaluation mode).
    pub fn generate(&self, z: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        let t = Self::batch_to_tensor(z, &[self.prior.dim])?;
        Ok(Self::tensor_to_rows(&self.generator.forward(&t)))
    }

    /// generate(encode(x)).
    pub fn reconstruct(&self, x: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        let z = self.encode(x)?;
        self.generate(&z)
    }

    /// One raw score per (x, z) pair.
    pub fn discriminate_joint(&self, x: &[Vec<f32>], z: &[Vec<f32>]) -> Result<Vec<f32>> {
        if x.len() != z.len() {
            return Err(Error::invalid(format!(
                "x batch ({}) and z batch ({}) differ in length",
                x.len(),
                z.len()
            )));
        }
        let xt = Self::batch_to_tensor(x, &self.preset.input_shape())?;
        let zt = Self::batch_to_tensor(z, &[self.prior.dim])?;
        Ok(self.joint.forward(&xt, &zt).data)
    }

    /// One raw score per (x, x_hat) pair.
    pub fn discriminate_pair(&self, x: &[Vec<f32>], x_hat: &[Vec<f32>]) -> Result<Vec<f32>> {
        if x.len() != x_hat.len() {
            return Err(Error::invalid(format!(
                "x batch ({}) and x_hat batch ({}) differ in length",
                x.len(),
                x_hat.len()
            )));
        }
        let shape = self.preset.input_shape();
        let xt = Self::batch_to_tensor(x, &shape)?;
        let ht = Self::batch_to_tensor(x_hat, &shape)?;
        Ok(self.pair.forward(&xt, &ht).data)
    }

    /// Draw `n` i.i.d. standard-normal latent vectors.
    pub fn sample_prior(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f32>>> {
        if n < 1 {
            return Err(Error::invalid("sample_prior requires n >= 1"));
        }
        Ok((0..n)
            .map(|_| {
                (0..self.prior.dim)
                    .map(|_| {
                        let v: f64 = rng.sample(StandardNormal);
                        v as f32
                    })
                    .collect()
            })
            .collect())
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.generator.zero_grad();
        self.joint.zero_grad();
        self.pair.zero_grad();
    }

    /// One named parameter map per network.
    pub fn param_maps(&self) -> Vec<(&'static str, ParamMap)> {
        let mut enc = ParamMap::new();
        self.encoder.save_into(&mut enc);
        let mut gen = ParamMap::new();
        self.generator.save_into(&mut gen);
        let mut joint = ParamMap::new();
        self.joint.save_into(&mut joint);
        let mut pair = ParamMap::new();
        self.pair.save_into(&mut pair);
        vec![
            ("encoder", enc),
            ("generator", gen),
            ("joint_discriminator", joint),
            ("pair_discriminator", pair),
        ]
    }

    pub fn load_param_maps(
        &mut self,
        maps: &std::collections::BTreeMap<String, ParamMap>,
    ) -> Result<()> {
        let get = |name: &str| {
            maps.get(name).ok_or_else(|| {
                Error::InvalidInput(format!("checkpoint is missing the '{name}' archive"))
            })
        };
        self.encoder.load_from(get("encoder")?)?;
        self.generator.load_from(get("generator")?)?;
        self.joint.load_from(get("joint_discriminator")?)?;
        self.pair.load_from(get("pair_discriminator")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tab_bundle() -> ModelBundle {
        ModelBundle::new(ArchitecturePreset::tabular_default(6), 7).unwrap()
    }

    fn img_bundle() -> ModelBundle {
        ModelBundle::new(
            ArchitecturePreset::ImageDcgan {
                latent_dim: 32,
                base_width: 8,
            },
            7,
        )
        .unwrap()
    }

    fn rand_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect()
    }

    #[test]
    fn shape_round_trips_tabular() {
        let m = tab_bundle();
        let x = rand_rows(8, 6, 1);
        let z = m.encode(&x).unwrap();
        assert_eq!(z.len(), 8);
        assert!(z.iter().all(|v| v.len() == 16));
        let xr = m.generate(&z).unwrap();
        assert!(xr.iter().all(|v| v.len() == 6));
        let rec = m.reconstruct(&x).unwrap();
        assert_eq!(rec.len(), 8);
        assert!(rec.iter().all(|v| v.len() == 6));
    }

    #[test]
    fn shape_round_trips_image() {
        let m = img_bundle();
        let x = rand_rows(4, 3 * 32 * 32, 2);
        let z = m.encode(&x).unwrap();
        assert!(z.iter().all(|v| v.len() == 32));
        let g = m.generate(&z).unwrap();
        assert!(g.iter().all(|v| v.len() == 3 * 32 * 32));
        // Generator output is tanh-bounded.
        assert!(g
            .iter()
            .all(|row| row.iter().all(|&v| (-1.0..=1.0).contains(&v))));
    }

    #[test]
    fn determinism_and_finiteness() {
        let m = tab_bundle();
        let x = rand_rows(5, 6, 3);
        let a = m.encode(&x).unwrap();
        let b = m.encode(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| v.is_finite()));

        let s1 = m.discriminate_joint(&x, &m.encode(&x).unwrap()).unwrap();
        let s2 = m.discriminate_joint(&x, &m.encode(&x).unwrap()).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_errors() {
        let m = tab_bundle();
        let bad = rand_rows(3, 5, 4);
        assert!(m.encode(&bad).is_err());
        let x = rand_rows(3, 6, 4);
        let z = rand_rows(2, 16, 5);
        assert!(m.discriminate_joint(&x, &z).is_err());
        let xh = rand_rows(2, 6, 6);
        assert!(m.discriminate_pair(&x, &xh).is_err());
    }

    #[test]
    fn prior_statistics_and_reproducibility() {
        let m = tab_bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = m.sample_prior(10_000, &mut rng).unwrap();
        let dim = m.latent_dim();
        for d in 0..dim {
            let mean: f64 = draws.iter().map(|r| r[d] as f64).sum::<f64>() / 10_000.0;
            assert!(mean.abs() < 0.05, "latent coordinate {d} mean {mean}");
        }

        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        assert_eq!(
            m.sample_prior(3, &mut r1).unwrap(),
            m.sample_prior(3, &mut r2).unwrap()
        );
        assert_eq!(m.sample_prior(1, &mut r1).unwrap().len(), 1);
        assert!(m.sample_prior(0, &mut r1).is_err());
    }

    #[test]
    fn joint_disc_gradient_reaches_both_branches() {
        // Finite-difference probe: the score must move when either the x
        // input or the z input moves.
        let mut m = tab_bundle();
        let x = ModelBundle::batch_to_tensor(&rand_rows(2, 6, 8), &[6]).unwrap();
        let z = ModelBundle::batch_to_tensor(&rand_rows(2, 16, 9), &[16]).unwrap();
        let (s, cache) = m.joint.forward_train(&x, &z);
        let dscore = Tensor::from_vec(&s.shape, vec![1.0; s.data.len()]);
        let (dx, dz) = m.joint.backward(&cache, &dscore, false);
        let dx_norm: f32 = dx.data.iter().map(|v| v * v).sum();
        let dz_norm: f32 = dz.data.iter().map(|v| v * v).sum();
        assert!(dx_norm > 0.0, "no gradient into the x branch");
        assert!(dz_norm > 0.0, "no gradient into the z branch");

        // Cross-check one coordinate against a finite difference.
        let idx = 3;
        let h = 1e-2f32;
        let eval =
            |xt: &Tensor| -> f64 { m.joint.forward(xt, &z).data.iter().map(|&v| v as f64).sum() };
        let mut xp = x.clone();
        xp.data[idx] += h;
        let mut xm = x.clone();
        xm.data[idx] -= h;
        let fd = (eval(&xp) - eval(&xm)) / (2.0 * h as f64);
        assert!(
            (dx.data[idx] as f64 - fd).abs() < 3e-2 * fd.abs().max(1.0),
            "dx[{idx}] {} vs fd {fd}",
            dx.data[idx]
        );
    }

    #[test]
    fn save_load_reproduces_outputs() {
        let m = img_bundle();
        let x = rand_rows(2, 3 * 32 * 32, 10);
        let before = m.reconstruct(&x).unwrap();
        let maps: std::collections::BTreeMap<String, ParamMap> = m
            .param_maps()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let mut fresh = ModelBundle::new(
            ArchitecturePreset::ImageDcgan {
                latent_dim: 32,
                base_width: 8,
            },
            999,
        )
        .unwrap();
        fresh.load_param_maps(&maps).unwrap();
        let after = fresh.reconstruct(&x).unwrap();
        assert_eq!(
            before, after,
            "loaded weights must reproduce outputs exactly"
        );
    }
}
