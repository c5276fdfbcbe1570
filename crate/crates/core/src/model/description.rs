//! Declarative layer graphs and their analytic parameter / FLOP accounting.

use serde::{Deserialize, Serialize};

use super::variant::FerretVariant;
use crate::error::{Error, Result};
use crate::nn::ConvSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerDesc {
    Conv { spec: ConvSpec, bias: bool },
    BatchNorm { channels: usize },
    Relu,
    GlobalAvgPool,
    Dropout { p: f64 },
    Linear { inputs: usize, outputs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Layer { name: String, layer: LayerDesc },
    Sequence(Vec<Node>),
    /// Branches applied to the same input, concatenated along channels.
    Concat(Vec<Node>),
    /// `body(x) + x`.
    Residual(Box<Node>),
}

impl Node {
    pub fn layer(name: impl Into<String>, layer: LayerDesc) -> Self {
        Node::Layer {
            name: name.into(),
            layer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub root: Node,
}

fn layer_params(layer: &LayerDesc) -> u64 {
    match layer {
        LayerDesc::Conv { spec, bias } => {
            spec.weight_len() as u64 + if *bias { spec.out_channels as u64 } else { 0 }
        }
        LayerDesc::BatchNorm { channels } => 2 * *channels as u64,
        LayerDesc::Linear { inputs, outputs } => (*inputs * *outputs + *outputs) as u64,
        LayerDesc::Relu | LayerDesc::GlobalAvgPool | LayerDesc::Dropout { .. } => 0,
    }
}

fn params(node: &Node) -> u64 {
    match node {
        Node::Layer { layer, .. } => layer_params(layer),
        Node::Sequence(xs) | Node::Concat(xs) => xs.iter().map(params).sum(),
        Node::Residual(body) => params(body),
    }
}

/// Propagates `shape` through `node`, returning the output shape and FLOPs.
fn propagate(node: &Node, shape: &[usize]) -> Result<(Vec<usize>, u64)> {
    match node {
        Node::Layer { name, layer } => layer_shape(name, layer, shape),
        Node::Sequence(xs) => {
            let mut cur = shape.to_vec();
            let mut flops = 0;
            for x in xs {
                let (s, f) = propagate(x, &cur)?;
                cur = s;
                flops += f;
            }
            Ok((cur, flops))
        }
        Node::Concat(branches) => {
            let mut out: Option<Vec<usize>> = None;
            let mut flops = 0;
            for b in branches {
                let (s, f) = propagate(b, shape)?;
                flops += f;
                out = Some(match out {
                    None => s,
                    Some(mut acc) => {
                        if acc.len() != 4 || s.len() != 4 || acc[0] != s[0] || acc[2..] != s[2..] {
                            return Err(Error::Shape(format!("concat of {acc:?} and {s:?}")));
                        }
                        acc[1] += s[1];
                        acc
                    }
                });
            }
            out.map(|s| (s, flops))
                .ok_or_else(|| Error::Shape("empty concat".into()))
        }
        Node::Residual(body) => {
            let (s, f) = propagate(body, shape)?;
            if s != shape {
                return Err(Error::Shape(format!("residual {shape:?} -> {s:?}")));
            }
            Ok((s, f))
        }
    }
}

fn layer_shape(name: &str, layer: &LayerDesc, shape: &[usize]) -> Result<(Vec<usize>, u64)> {
    let bad = || Error::Shape(format!("`{name}` cannot take input {shape:?}"));
    match layer {
        LayerDesc::Conv { spec, .. } => {
            let [n, c, h, w] = *shape else { return Err(bad()) };
            if c != spec.in_channels {
                return Err(bad());
            }
            let (oh, ow) = spec.output_hw(h, w)?;
            let macs = (spec.out_channels * (spec.in_channels / spec.groups) * spec.kernel.0 * spec.kernel.1) as u64
                * (oh * ow * n) as u64;
            Ok((vec![n, spec.out_channels, oh, ow], 2 * macs))
        }
        LayerDesc::BatchNorm { channels } => {
            if shape.len() != 4 || shape[1] != *channels {
                return Err(bad());
            }
            Ok((shape.to_vec(), 0))
        }
        LayerDesc::Relu | LayerDesc::Dropout { .. } => Ok((shape.to_vec(), 0)),
        LayerDesc::GlobalAvgPool => {
            let [n, c, _, _] = *shape else { return Err(bad()) };
            Ok((vec![n, c], 0))
        }
        LayerDesc::Linear { inputs, outputs } => {
            let [n, f] = *shape else { return Err(bad()) };
            if f != *inputs {
                return Err(bad());
            }
            Ok((vec![n, *outputs], 2 * (*inputs * *outputs * n) as u64))
        }
    }
}

impl ModelDescription {
    pub fn empty() -> Self {
        Self {
            root: Node::Sequence(Vec::new()),
        }
    }

    /// Trainable parameters: conv weights and biases, BN scale and shift,
    /// linear weights and biases.
    pub fn param_count(&self) -> u64 {
        params(&self.root)
    }

    /// `2 x multiply-accumulates` of convolutions and linear layers at the
    /// given input shape; normalization, activations and pooling are free.
    pub fn flops_count(&self, input_shape: &[usize]) -> Result<u64> {
        Ok(propagate(&self.root, input_shape)?.1)
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(propagate(&self.root, input_shape)?.0)
    }

    /// Flat list of named layers in execution order.
    pub fn layers(&self) -> Vec<(&str, &LayerDesc)> {
        fn walk<'a>(n: &'a Node, out: &mut Vec<(&'a str, &'a LayerDesc)>) {
            match n {
                Node::Layer { name, layer } => out.push((name, layer)),
                Node::Sequence(xs) | Node::Concat(xs) => xs.iter().for_each(|x| walk(x, out)),
                Node::Residual(b) => walk(b, out),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

fn conv_bn_relu(name: &str, spec: ConvSpec, relu: bool) -> Vec<Node> {
    let mut v = vec![
        Node::layer(format!("{name}.conv"), LayerDesc::Conv { spec, bias: false }),
        Node::layer(
            format!("{name}.bn"),
            LayerDesc::BatchNorm {
                channels: spec.out_channels,
            },
        ),
    ];
    if relu {
        v.push(Node::layer(format!("{name}.relu"), LayerDesc::Relu));
    }
    v
}

/// The body of one Ferret block at width `c` (residual add and final ReLU
/// are added by the caller).
pub fn ferret_block_body(name: &str, c: usize) -> Node {
    let dilated = ConvSpec::depthwise(c, 3).dilation(2).padding(2);
    let plain = ConvSpec::depthwise(c, 3).padding(1);
    let mut body = vec![Node::Concat(vec![
        Node::layer(format!("{name}.dilated"), LayerDesc::Conv { spec: dilated, bias: true }),
        Node::layer(format!("{name}.local"), LayerDesc::Conv { spec: plain, bias: true }),
    ])];
    body.extend(conv_bn_relu(&format!("{name}.fuse"), ConvSpec::new(2 * c, c, 1), true));
    body.extend(conv_bn_relu(
        &format!("{name}.refine"),
        ConvSpec::depthwise(c, 3).padding(1),
        true,
    ));
    body.extend(conv_bn_relu(&format!("{name}.project"), ConvSpec::new(c, c, 1), false));
    Node::Sequence(body)
}

/// Analytic description of a FerretNet built by [`super::FerretNet::new`].
pub fn describe_ferretnet(variant: &FerretVariant, in_channels: usize, dropout: f64) -> ModelDescription {
    let c1 = variant.stage_channels[0];
    let mut seq = Vec::new();
    seq.extend(conv_bn_relu("stem.0", ConvSpec::new(in_channels, c1, 3).stride(2).padding(1), true));
    seq.extend(conv_bn_relu("stem.1", ConvSpec::new(c1, c1, 3).stride(2).padding(1), true));
    for (i, (&c, &blocks)) in variant
        .stage_channels
        .iter()
        .zip(&variant.stage_blocks)
        .enumerate()
    {
        if i > 0 {
            let prev = variant.stage_channels[i - 1];
            seq.extend(conv_bn_relu(
                &format!("stage{i}.down"),
                ConvSpec::new(prev, c, 3).stride(2).padding(1),
                true,
            ));
        }
        for b in 0..blocks {
            let name = format!("stage{i}.block{b}");
            seq.push(Node::Residual(Box::new(ferret_block_body(&name, c))));
            seq.push(Node::layer(format!("{name}.out_relu"), LayerDesc::Relu));
        }
    }
    let last = variant.last_channels();
    let hc = variant.head_channels();
    seq.extend(conv_bn_relu("head", ConvSpec::new(last, hc, 1), true));
    seq.push(Node::layer("head.pool", LayerDesc::GlobalAvgPool));
    seq.push(Node::layer("head.dropout", LayerDesc::Dropout { p: dropout }));
    seq.push(Node::layer(
        "head.fc",
        LayerDesc::Linear {
            inputs: hc,
            outputs: 1,
        },
    ));
    ModelDescription {
        root: Node::Sequence(seq),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_is_free() {
        let m = ModelDescription::empty();
        assert_eq!(m.param_count(), 0);
        assert_eq!(m.flops_count(&[1, 3, 256, 256]).unwrap(), 0);
    }

    #[test]
    fn single_stem_conv() {
        let m = ModelDescription {
            root: Node::layer(
                "c",
                LayerDesc::Conv {
                    spec: ConvSpec::new(3, 96, 3).stride(2).padding(1),
                    bias: true,
                },
            ),
        };
        assert_eq!(m.param_count(), 2688);
        assert_eq!(m.flops_count(&[1, 3, 256, 256]).unwrap(), 84_934_656);
        assert_eq!(m.output_shape(&[1, 3, 256, 256]).unwrap(), vec![1, 96, 128, 128]);
    }

    #[test]
    fn logits_shape() {
        let d = describe_ferretnet(&FerretVariant::base(), 3, 0.2);
        assert_eq!(d.output_shape(&[4, 3, 256, 256]).unwrap(), vec![4, 1]);
    }

    #[test]
    fn residual_shape_checked() {
        let bad = ModelDescription {
            root: Node::Residual(Box::new(Node::layer(
                "c",
                LayerDesc::Conv {
                    spec: ConvSpec::new(2, 4, 1),
                    bias: false,
                },
            ))),
        };
        assert!(bad.flops_count(&[1, 2, 4, 4]).is_err());
    }
}
