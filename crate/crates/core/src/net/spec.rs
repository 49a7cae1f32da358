use serde::{Deserialize, Serialize};

use crate::encode::{CHAR_CLASSES, CHAR_SLOTS};
use crate::error::{Error, Result};

/// Network input: one greyscale channel of 32 x 100.
pub const INPUT_SHAPE: [usize; 3] = [1, 32, 100];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride 1, same padding, square kernel.
    Conv { out_channels: usize, kernel: usize },
    Relu,
    /// 2 x 2, stride 2, floor on odd extents.
    MaxPool,
    Fc { units: usize },
    Dropout { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadSpec {
    /// One softmax over every lexicon word.
    Dict { classes: usize },
    /// 23 independent softmaxes over 37 classes.
    CharSeq,
    /// One logistic output per vocabulary gram.
    NGram { grams: usize },
}

impl HeadSpec {
    pub fn outputs(&self) -> usize {
        match *self {
            HeadSpec::Dict { classes } => classes,
            HeadSpec::CharSeq => CHAR_SLOTS * CHAR_CLASSES,
            HeadSpec::NGram { grams } => grams,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HeadSpec::Dict { .. } => "dict",
            HeadSpec::CharSeq => "charseq",
            HeadSpec::NGram { .. } => "ngram",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// conv-pool-conv-pool-conv-pool-conv-fc-head
    Base,
    /// conv-pool-conv-pool-conv-conv-pool-conv-fc-fc-head
    Plus2,
    /// Free-form stack, any input size.
    Custom,
}

/// Channel widths of the four convolutions and the fully connected width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub conv: [usize; 4],
    pub fc: usize,
}

impl Widths {
    /// 64, 128, 256, 512 filters and 4096 hidden units.
    pub const FULL: Widths = Widths {
        conv: [64, 128, 256, 512],
        fc: 4096,
    };
}

impl Default for Widths {
    fn default() -> Self {
        Widths::FULL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: [usize; 3],
    pub variant: Variant,
    pub layers: Vec<LayerSpec>,
    pub head: HeadSpec,
}

impl NetworkSpec {
    pub fn base(widths: Widths, head: HeadSpec, dropout: f64) -> Self {
        let [c1, c2, c3, c4] = widths.conv;
        let mut layers = vec![
            conv(c1, 5),
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            conv(c2, 5),
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            conv(c3, 3),
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            conv(c4, 3),
            LayerSpec::Relu,
        ];
        push_fc(&mut layers, widths.fc, dropout);
        NetworkSpec {
            input: INPUT_SHAPE,
            variant: Variant::Base,
            layers,
            head,
        }
    }

    /// Base stack plus a 3x3 convolution (width of the last conv) before the
    /// final pooling and a second fully connected layer.
    pub fn plus2(widths: Widths, head: HeadSpec, dropout: f64) -> Self {
        let [c1, c2, c3, c4] = widths.conv;
        let mut layers = vec![
            conv(c1, 5),
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            conv(c2, 5),
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            conv(c3, 3),
            LayerSpec::Relu,
            conv(c4, 3),
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            conv(c4, 3),
            LayerSpec::Relu,
        ];
        push_fc(&mut layers, widths.fc, dropout);
        push_fc(&mut layers, widths.fc, dropout);
        NetworkSpec {
            input: INPUT_SHAPE,
            variant: Variant::Plus2,
            layers,
            head,
        }
    }

    pub fn custom(input: [usize; 3], layers: Vec<LayerSpec>, head: HeadSpec) -> Self {
        NetworkSpec {
            input,
            variant: Variant::Custom,
            layers,
            head,
        }
    }

    pub fn with_head(&self, head: HeadSpec) -> Self {
        NetworkSpec {
            head,
            ..self.clone()
        }
    }

    /// Total trainable values (weights and biases), without allocating them.
    pub fn param_count(&self) -> Result<usize> {
        let plan = shape_plan(self)?;
        let mut prev = self.input.to_vec();
        let mut total = 0usize;
        for (stage, shape) in &plan {
            match stage {
                Stage::Layer(LayerSpec::Conv {
                    out_channels,
                    kernel,
                }) => total += out_channels * prev[0] * kernel * kernel + out_channels,
                Stage::Layer(LayerSpec::Fc { units }) | Stage::Head(HeadSpec::Dict { classes: units })
                | Stage::Head(HeadSpec::NGram { grams: units }) => {
                    total += units * prev.iter().product::<usize>() + units
                }
                Stage::Head(HeadSpec::CharSeq) => {
                    let units = CHAR_SLOTS * CHAR_CLASSES;
                    total += units * prev.iter().product::<usize>() + units
                }
                _ => {}
            }
            prev = shape.clone();
        }
        Ok(total)
    }
}

fn conv(out_channels: usize, kernel: usize) -> LayerSpec {
    LayerSpec::Conv {
        out_channels,
        kernel,
    }
}

fn push_fc(layers: &mut Vec<LayerSpec>, units: usize, dropout: f64) {
    layers.push(LayerSpec::Fc { units });
    layers.push(LayerSpec::Relu);
    if dropout > 0.0 {
        layers.push(LayerSpec::Dropout { rate: dropout });
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    Layer(LayerSpec),
    Head(HeadSpec),
}

/// Output shape of every stage for one input item (batch dimension omitted).
pub fn shape_plan(spec: &NetworkSpec) -> Result<Vec<(Stage, Vec<usize>)>> {
    if spec.variant != Variant::Custom && spec.input != INPUT_SHAPE {
        return Err(Error::Shape(format!(
            "{:?} networks take 1x32x100 input, got {:?}",
            spec.variant, spec.input
        )));
    }
    if spec.input.iter().any(|&d| d == 0) {
        return Err(Error::Shape("zero-sized input".into()));
    }
    let mut shape = spec.input.to_vec();
    let mut plan = Vec::with_capacity(spec.layers.len() + 1);
    for layer in &spec.layers {
        shape = match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel,
            } => {
                if shape.len() != 3 {
                    return Err(Error::Shape("convolution after flattening".into()));
                }
                if kernel % 2 == 0 || kernel == 0 || out_channels == 0 {
                    return Err(Error::Shape(format!(
                        "conv needs an odd kernel and >= 1 channel, got {kernel}/{out_channels}"
                    )));
                }
                vec![out_channels, shape[1], shape[2]]
            }
            LayerSpec::MaxPool => {
                if shape.len() != 3 || shape[1] < 2 || shape[2] < 2 {
                    return Err(Error::Shape(format!("cannot pool {shape:?}")));
                }
                vec![shape[0], shape[1] / 2, shape[2] / 2]
            }
            LayerSpec::Fc { units } => {
                if units == 0 {
                    return Err(Error::Shape("fc with zero units".into()));
                }
                vec![units]
            }
            LayerSpec::Relu => shape,
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Shape(format!("dropout rate {rate} outside [0,1)")));
                }
                shape
            }
        };
        plan.push((Stage::Layer(*layer), shape.clone()));
    }
    if spec.head.outputs() == 0 {
        return Err(Error::Shape("head with zero outputs".into()));
    }
    plan.push((Stage::Head(spec.head), vec![spec.head.outputs()]));
    Ok(plan)
}
