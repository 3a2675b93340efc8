use serde::{Deserialize, Serialize};

use super::ModelError;

/// One entry of the ordered layer list. Convolutions are unpadded ("valid").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv {
        kernel: usize,
        stride: usize,
        channels: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
    Dense {
        units: usize,
    },
}

/// Activation shape `channels x height x width`; dense activations are `n x 1 x 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_size: usize,
    pub layers: Vec<Layer>,
}

/// Location of one layer's parameters inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub layer: usize,
    pub weight_offset: usize,
    pub weight_shape: Vec<usize>,
    pub bias_offset: usize,
    pub bias_len: usize,
}

impl ParamSlot {
    pub fn weight_len(&self) -> usize {
        self.weight_shape.iter().product()
    }

    pub fn fan_in(&self) -> usize {
        self.weight_shape[1..].iter().product()
    }
}

/// Shapes and parameter layout derived from an [`Architecture`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    /// `shapes[0]` is the input; `shapes[i + 1]` follows layer `i`.
    pub shapes: Vec<Shape>,
    pub slots: Vec<Option<ParamSlot>>,
    pub param_count: usize,
}

impl Architecture {
    /// conv3x3/8, relu, pool, conv3x3/16, relu, pool, conv3x3/32, relu, pool,
    /// flatten, dense128, relu, dense2.
    pub fn default_for(input_size: usize) -> Self {
        let conv = |channels| Layer::Conv {
            kernel: 3,
            stride: 1,
            channels,
        };
        Self {
            input_size,
            layers: vec![
                conv(8),
                Layer::Relu,
                Layer::MaxPool2,
                conv(16),
                Layer::Relu,
                Layer::MaxPool2,
                conv(32),
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Flatten,
                Layer::Dense { units: 128 },
                Layer::Relu,
                Layer::Dense { units: 2 },
            ],
        }
    }

    pub fn plan(&self) -> Result<Plan, ModelError> {
        let bad = |msg: String| Err(ModelError::BadArchitecture(msg));
        if self.input_size == 0 {
            return bad("input size must be positive".into());
        }
        match self.layers.last() {
            Some(Layer::Dense { units: 2 }) => {}
            Some(other) => return bad(format!("final layer must be dense with 2 units, got {other:?}")),
            None => return bad("no layers".into()),
        }
        let mut shape = Shape {
            c: 1,
            h: self.input_size,
            w: self.input_size,
        };
        let mut shapes = vec![shape];
        let mut slots = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        let mut flat = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut slot = None;
            shape = match *layer {
                Layer::Conv {
                    kernel,
                    stride,
                    channels,
                } => {
                    if flat {
                        return bad(format!("layer {i}: convolution after flatten"));
                    }
                    if kernel == 0 || stride == 0 || channels == 0 {
                        return bad(format!("layer {i}: zero kernel, stride or channels"));
                    }
                    if kernel > shape.h || kernel > shape.w {
                        return bad(format!(
                            "layer {i}: kernel {kernel} exceeds input {}x{}",
                            shape.h, shape.w
                        ));
                    }
                    let weight_shape = vec![channels, shape.c, kernel, kernel];
                    let wlen: usize = weight_shape.iter().product();
                    slot = Some(ParamSlot {
                        layer: i,
                        weight_offset: offset,
                        weight_shape,
                        bias_offset: offset + wlen,
                        bias_len: channels,
                    });
                    offset += wlen + channels;
                    Shape {
                        c: channels,
                        h: (shape.h - kernel) / stride + 1,
                        w: (shape.w - kernel) / stride + 1,
                    }
                }
                Layer::Relu => shape,
                Layer::MaxPool2 => {
                    if flat || shape.h < 2 || shape.w < 2 {
                        return bad(format!("layer {i}: pooling needs a 2x2 spatial input"));
                    }
                    Shape {
                        c: shape.c,
                        h: shape.h / 2,
                        w: shape.w / 2,
                    }
                }
                Layer::Flatten => {
                    flat = true;
                    Shape {
                        c: shape.len(),
                        h: 1,
                        w: 1,
                    }
                }
                Layer::Dense { units } => {
                    if units == 0 {
                        return bad(format!("layer {i}: dense layer with zero units"));
                    }
                    flat = true;
                    let weight_shape = vec![units, shape.len()];
                    let wlen = units * shape.len();
                    slot = Some(ParamSlot {
                        layer: i,
                        weight_offset: offset,
                        weight_shape,
                        bias_offset: offset + wlen,
                        bias_len: units,
                    });
                    offset += wlen + units;
                    Shape {
                        c: units,
                        h: 1,
                        w: 1,
                    }
                }
            };
            shapes.push(shape);
            slots.push(slot);
        }
        Ok(Plan {
            shapes,
            slots,
            param_count: offset,
        })
    }

    pub fn param_count(&self) -> Result<usize, ModelError> {
        Ok(self.plan()?.param_count)
    }
}
