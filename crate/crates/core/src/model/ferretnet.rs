//! The FerretNet detector.
//!
//! Two stride-2 3x3 stem convolutions, stages of Ferret blocks separated by
//! stride-2 3x3 transitions, then a widening 1x1 conv, global average
//! pooling, dropout and a single-logit linear classifier.
//!
//! A Ferret block at width `C` runs a dilated (rate 2) and a plain depthwise
//! 3x3 conv side by side, concatenates them to `2C`, fuses back to `C` with a
//! 1x1 conv, refines with another depthwise 3x3 and a 1x1 projection, adds
//! the block input and applies ReLU.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::description::{describe_ferretnet, ModelDescription};
use super::variant::FerretVariant;
use crate::error::{Error, Result};
use crate::nn::layer::missing_cache;
use crate::nn::{
    BatchNorm2d, Conv2d, ConvSpec, Dropout, GlobalAvgPool, Layer, Linear, Mode, Param, Relu,
    Scalar, Sequential, Tensor,
};

pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const MIN_INPUT_SIDE: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerretConfig {
    pub variant: FerretVariant,
    pub in_channels: usize,
    pub dropout: f64,
}

impl FerretConfig {
    pub fn new(variant: FerretVariant) -> Self {
        Self {
            variant,
            in_channels: 3,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }
}

fn conv_bn_relu<T: Scalar>(
    name: &str,
    spec: ConvSpec,
    relu: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Sequential<T>> {
    let mut seq = Sequential::new()
        .with(Conv2d::new(&format!("{name}.conv"), spec, false, rng)?)
        .with(BatchNorm2d::new(&format!("{name}.bn"), spec.out_channels));
    if relu {
        seq.push(Relu::new());
    }
    Ok(seq)
}

fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ca, h, w) = a.dims4()?;
    let (_, cb, _, _) = b.dims4()?;
    let hw = h * w;
    let mut out = Vec::with_capacity(a.len() + b.len());
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * ca * hw..][..ca * hw]);
        out.extend_from_slice(&b.data()[i * cb * hw..][..cb * hw]);
    }
    Tensor::new(&[n, ca + cb, h, w], out)
}

fn split_channels<T: Scalar>(g: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = g.dims4()?;
    let hw = h * w;
    let second = c - first;
    let mut a = Vec::with_capacity(n * first * hw);
    let mut b = Vec::with_capacity(n * second * hw);
    for i in 0..n {
        let chunk = &g.data()[i * c * hw..][..c * hw];
        a.extend_from_slice(&chunk[..first * hw]);
        b.extend_from_slice(&chunk[first * hw..]);
    }
    Ok((Tensor::new(&[n, first, h, w], a)?, Tensor::new(&[n, second, h, w], b)?))
}

pub struct FerretBlock<T> {
    channels: usize,
    dilated: Conv2d<T>,
    local: Conv2d<T>,
    fuse: Sequential<T>,
    refine: Sequential<T>,
    project: Conv2d<T>,
    project_bn: BatchNorm2d<T>,
    out_mask: Option<Vec<bool>>,
}

impl<T: Scalar> FerretBlock<T> {
    pub fn new(name: &str, c: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            channels: c,
            dilated: Conv2d::new(
                &format!("{name}.dilated"),
                ConvSpec::depthwise(c, 3).dilation(2).padding(2),
                true,
                rng,
            )?,
            local: Conv2d::new(
                &format!("{name}.local"),
                ConvSpec::depthwise(c, 3).padding(1),
                true,
                rng,
            )?,
            fuse: conv_bn_relu(&format!("{name}.fuse"), ConvSpec::new(2 * c, c, 1), true, rng)?,
            refine: conv_bn_relu(
                &format!("{name}.refine"),
                ConvSpec::depthwise(c, 3).padding(1),
                true,
                rng,
            )?,
            project: Conv2d::new(
                &format!("{name}.project.conv"),
                ConvSpec::new(c, c, 1),
                false,
                rng,
            )?,
            project_bn: BatchNorm2d::new(&format!("{name}.project.bn"), c),
            out_mask: None,
        })
    }

    /// Zeroes the projection conv and its BN scale, collapsing the block to
    /// `ReLU(x + beta)`.
    pub fn zero_residual_branch(&mut self) {
        self.project.weight.value.data_mut().fill(T::zero());
        self.project_bn.gamma.value.data_mut().fill(T::zero());
    }

    fn run(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let a = self.dilated.infer(x)?;
        let b = self.local.infer(x)?;
        let mut h = concat_channels(&a, &b)?;
        h = self.fuse.infer(&h)?;
        h = self.refine.infer(&h)?;
        h = self.project.infer(&h)?;
        h = self.project_bn.infer(&h)?;
        h.add_assign(x);
        Ok(h.map(|v| v.max(T::zero())))
    }
}

impl<T: Scalar> Layer<T> for FerretBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let a = self.dilated.forward(x, mode)?;
        let b = self.local.forward(x, mode)?;
        let mut h = concat_channels(&a, &b)?;
        h = self.fuse.forward(&h, mode)?;
        h = self.refine.forward(&h, mode)?;
        h = self.project.forward(&h, mode)?;
        h = self.project_bn.forward(&h, mode)?;
        h.add_assign(x);
        self.out_mask = Some(h.data().iter().map(|&v| v > T::zero()).collect());
        Ok(h.map(|v| v.max(T::zero())))
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.out_mask.as_ref().ok_or_else(|| missing_cache("ferret block"))?;
        let gs = Tensor::new(
            g.shape(),
            g.data()
                .iter()
                .zip(mask)
                .map(|(&v, &m)| if m { v } else { T::zero() })
                .collect(),
        )?;
        let mut gh = self.project_bn.backward(&gs)?;
        gh = self.project.backward(&gh)?;
        gh = self.refine.backward(&gh)?;
        gh = self.fuse.backward(&gh)?;
        let (ga, gb) = split_channels(&gh, self.channels)?;
        let mut gx = self.dilated.backward(&ga)?;
        gx.add_assign(&self.local.backward(&gb)?);
        gx.add_assign(&gs);
        Ok(gx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.dilated.params();
        v.extend(self.local.params());
        v.extend(self.fuse.params());
        v.extend(self.refine.params());
        v.extend(self.project.params());
        v.extend(self.project_bn.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.dilated.params_mut();
        v.extend(self.local.params_mut());
        v.extend(self.fuse.params_mut());
        v.extend(self.refine.params_mut());
        v.extend(self.project.params_mut());
        v.extend(self.project_bn.params_mut());
        v
    }

    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = self.fuse.buffers();
        v.extend(self.refine.buffers());
        v.extend(self.project_bn.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut v = self.fuse.buffers_mut();
        v.extend(self.refine.buffers_mut());
        v.extend(self.project_bn.buffers_mut());
        v
    }
}

struct Stage<T> {
    down: Option<Sequential<T>>,
    blocks: Vec<FerretBlock<T>>,
}

pub struct FerretNet<T> {
    config: FerretConfig,
    stem: Sequential<T>,
    stages: Vec<Stage<T>>,
    head: Sequential<T>,
}

impl<T: Scalar> FerretNet<T> {
    /// Builds and initializes the network; all randomness derives from `seed`.
    pub fn new(config: FerretConfig, seed: u64) -> Result<Self> {
        let v = &config.variant;
        v.validate()?;
        if config.in_channels == 0 {
            return Err(Error::Config("in_channels must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c1 = v.stage_channels[0];
        let mut stem = conv_bn_relu(
            "stem.0",
            ConvSpec::new(config.in_channels, c1, 3).stride(2).padding(1),
            true,
            &mut rng,
        )?;
        stem.push(conv_bn_relu(
            "stem.1",
            ConvSpec::new(c1, c1, 3).stride(2).padding(1),
            true,
            &mut rng,
        )?);
        let mut stages = Vec::with_capacity(v.stage_channels.len());
        for (i, (&c, &n)) in v.stage_channels.iter().zip(&v.stage_blocks).enumerate() {
            let down = if i > 0 {
                Some(conv_bn_relu(
                    &format!("stage{i}.down"),
                    ConvSpec::new(v.stage_channels[i - 1], c, 3).stride(2).padding(1),
                    true,
                    &mut rng,
                )?)
            } else {
                None
            };
            let blocks = (0..n)
                .map(|b| FerretBlock::new(&format!("stage{i}.block{b}"), c, &mut rng))
                .collect::<Result<_>>()?;
            stages.push(Stage { down, blocks });
        }
        let hc = v.head_channels();
        let mut head = conv_bn_relu("head", ConvSpec::new(v.last_channels(), hc, 1), true, &mut rng)?;
        head.push(GlobalAvgPool::new());
        head.push(Dropout::new(config.dropout, seed ^ 0xd0d0)?);
        head.push(Linear::new("head.fc", hc, 1, &mut rng));
        Ok(Self {
            config,
            stem,
            stages,
            head,
        })
    }

    pub fn config(&self) -> &FerretConfig {
        &self.config
    }

    pub fn description(&self) -> ModelDescription {
        describe_ferretnet(&self.config.variant, self.config.in_channels, self.config.dropout)
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut FerretBlock<T>> {
        self.stages.iter_mut().flat_map(|s| s.blocks.iter_mut())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} channels, got {c}",
                self.config.in_channels
            )));
        }
        if h < MIN_INPUT_SIDE || w < MIN_INPUT_SIDE {
            return Err(Error::InputTooSmall(format!(
                "{h}x{w} input; at least {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE} is needed to survive {} downsamplings",
                self.config.variant.downsamplings()
            )));
        }
        Ok(())
    }

    /// Eval-mode logits of shape `(N, 1)`.
    pub fn predict_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.infer(x)
    }
}

impl<T: Scalar> Layer<T> for FerretNet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = self.stem.forward(x, mode)?;
        for stage in &mut self.stages {
            if let Some(d) = &mut stage.down {
                h = d.forward(&h, mode)?;
            }
            for b in &mut stage.blocks {
                h = b.forward(&h, mode)?;
            }
        }
        self.head.forward(&h, mode)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = self.stem.infer(x)?;
        for stage in &self.stages {
            if let Some(d) = &stage.down {
                h = d.infer(&h)?;
            }
            for b in &stage.blocks {
                h = b.infer(&h)?;
            }
        }
        self.head.infer(&h)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let mut gh = self.head.backward(g)?;
        for stage in self.stages.iter_mut().rev() {
            for b in stage.blocks.iter_mut().rev() {
                gh = b.backward(&gh)?;
            }
            if let Some(d) = &mut stage.down {
                gh = d.backward(&gh)?;
            }
        }
        self.stem.backward(&gh)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.stem.params();
        for s in &self.stages {
            if let Some(d) = &s.down {
                v.extend(d.params());
            }
            for b in &s.blocks {
                v.extend(b.params());
            }
        }
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.stem.params_mut();
        for s in &mut self.stages {
            if let Some(d) = &mut s.down {
                v.extend(d.params_mut());
            }
            for b in &mut s.blocks {
                v.extend(b.params_mut());
            }
        }
        v.extend(self.head.params_mut());
        v
    }

    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = self.stem.buffers();
        for s in &self.stages {
            if let Some(d) = &s.down {
                v.extend(d.buffers());
            }
            for b in &s.blocks {
                v.extend(b.buffers());
            }
        }
        v.extend(self.head.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut v = self.stem.buffers_mut();
        for s in &mut self.stages {
            if let Some(d) = &mut s.down {
                v.extend(d.buffers_mut());
            }
            for b in &mut s.blocks {
                v.extend(b.buffers_mut());
            }
        }
        v.extend(self.head.buffers_mut());
        v
    }

    fn reseed(&mut self, seed: u64) {
        self.head.reseed(seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn concat_split_inverse() {
        let a = random(&[2, 3, 2, 2], 1);
        let b = random(&[2, 1, 2, 2], 2);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 4, 2, 2]);
        let (a2, b2) = split_channels(&c, 3).unwrap();
        assert_eq!((a2, b2), (a, b));
    }

    #[test]
    fn residual_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut block = FerretBlock::<f64>::new("b", 4, &mut rng).unwrap();
        block.zero_residual_branch();
        let x = random(&[2, 4, 6, 6], 4).map(|v| v - 0.5);
        let relu = x.map(|v| v.max(0.0));
        assert_eq!(block.infer(&x).unwrap(), relu);
        assert_eq!(block.forward(&x, Mode::Train).unwrap(), relu);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let net = FerretNet::<f32>::new(FerretConfig::new(FerretVariant::small()), 5).unwrap();
        let x = random(&[2, 3, 32, 32], 6).cast::<f32>();
        let a = net.infer(&x).unwrap();
        assert_eq!(a.shape(), &[2, 1]);
        assert_eq!(a, net.infer(&x).unwrap());
    }

    #[test]
    fn too_small_input_is_rejected() {
        let net = FerretNet::<f32>::new(FerretConfig::new(FerretVariant::small()), 5).unwrap();
        assert!(matches!(
            net.infer(&Tensor::zeros(&[1, 3, 15, 32])),
            Err(Error::InputTooSmall(_))
        ));
        assert!(net.infer(&Tensor::zeros(&[1, 1, 32, 32])).is_err());
    }

    #[test]
    fn train_forward_matches_infer_without_dropout() {
        let mut net =
            FerretNet::<f64>::new(FerretConfig::new(FerretVariant::small()).dropout(0.0), 7).unwrap();
        let x = random(&[2, 3, 32, 32], 8);
        let a = net.forward(&x, Mode::Eval).unwrap();
        let b = net.infer(&x).unwrap();
        assert_eq!(a, b);
    }
}
