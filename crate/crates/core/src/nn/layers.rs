use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a feed-forward network. Parameter-free layers occupy zero
/// entries in the parameter vector but still appear in its layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    /// Weights stored row-major as `[outputs][inputs]`, then `outputs` biases.
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Stride 1, no padding. Weights stored as `[filters][in_channels][kernel_h][kernel_w]`,
    /// then `filters` biases.
    Conv2D {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
    },
    /// Non-overlapping window (stride equals window size).
    MaxPool2D {
        pool_h: usize,
        pool_w: usize,
    },
    Flatten,
    ReLU,
    /// Must be the final layer.
    Softmax,
}

/// Per-sample activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    pub fn from_dims(dims: &[usize]) -> Result<Shape> {
        match *dims {
            [n] if n >= 1 => Ok(Shape::Flat(n)),
            [c, h, w] if c >= 1 && h >= 1 && w >= 1 => Ok(Shape::Image {
                channels: c,
                height: h,
                width: w,
            }),
            _ => Err(Error::InputShape(format!("unsupported feature shape {dims:?}"))),
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::Conv2D {
                filters,
                kernel_h,
                kernel_w,
                in_channels,
            } => filters * in_channels * kernel_h * kernel_w + filters,
            _ => 0,
        }
    }

    /// Number of weights (excluding biases) and the Glorot fan-in/fan-out.
    pub(crate) fn weight_fans(&self) -> Option<(usize, usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((inputs * outputs, inputs, outputs)),
            LayerSpec::Conv2D {
                filters,
                kernel_h,
                kernel_w,
                in_channels,
            } => {
                let area = kernel_h * kernel_w;
                Some((filters * in_channels * area, in_channels * area, filters * area))
            }
            _ => None,
        }
    }

    fn check_dims(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Dense { inputs, outputs } => inputs >= 1 && outputs >= 1,
            LayerSpec::Conv2D {
                filters,
                kernel_h,
                kernel_w,
                in_channels,
            } => filters >= 1 && kernel_h >= 1 && kernel_w >= 1 && in_channels >= 1,
            LayerSpec::MaxPool2D { pool_h, pool_w } => pool_h >= 1 && pool_w >= 1,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InputShape(format!("{self:?}: every dimension must be >= 1")))
        }
    }

    /// Output shape of this layer for the given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.check_dims()?;
        let mismatch = || Error::InputShape(format!("{self:?} cannot consume {input:?}"));
        match (*self, input) {
            (LayerSpec::Dense { inputs, outputs }, Shape::Flat(n)) if n == inputs => Ok(Shape::Flat(outputs)),
            (
                LayerSpec::Conv2D {
                    filters,
                    kernel_h,
                    kernel_w,
                    in_channels,
                },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) if channels == in_channels && height >= kernel_h && width >= kernel_w => Ok(Shape::Image {
                channels: filters,
                height: height - kernel_h + 1,
                width: width - kernel_w + 1,
            }),
            (
                LayerSpec::MaxPool2D { pool_h, pool_w },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) if height >= pool_h && width >= pool_w => Ok(Shape::Image {
                channels,
                height: height / pool_h,
                width: width / pool_w,
            }),
            (LayerSpec::Flatten, s) => Ok(Shape::Flat(s.len())),
            (LayerSpec::ReLU, s) => Ok(s),
            (LayerSpec::Softmax, Shape::Flat(n)) => Ok(Shape::Flat(n)),
            _ => Err(mismatch()),
        }
    }
}

/// Checks that the layer stack is shape-compatible with `input` and returns
/// the per-layer output shapes.
pub fn infer_shapes(layers: &[LayerSpec], input: Shape) -> Result<Vec<Shape>> {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input;
    for (i, layer) in layers.iter().enumerate() {
        if matches!(layer, LayerSpec::Softmax) && i + 1 != layers.len() {
            return Err(Error::InputShape("Softmax must be the last layer".into()));
        }
        current = layer.output_shape(current)?;
        shapes.push(current);
    }
    Ok(shapes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet_shapes() {
        let layers = [
            LayerSpec::Conv2D {
                filters: 16,
                kernel_h: 5,
                kernel_w: 5,
                in_channels: 1,
            },
            LayerSpec::ReLU,
            LayerSpec::MaxPool2D { pool_h: 2, pool_w: 2 },
            LayerSpec::Conv2D {
                filters: 32,
                kernel_h: 5,
                kernel_w: 5,
                in_channels: 16,
            },
            LayerSpec::ReLU,
            LayerSpec::MaxPool2D { pool_h: 2, pool_w: 2 },
            LayerSpec::Flatten,
        ];
        let shapes = infer_shapes(
            &layers,
            Shape::Image {
                channels: 1,
                height: 28,
                width: 28,
            },
        )
        .unwrap();
        let heights: Vec<_> = shapes
            .iter()
            .map(|s| match s {
                Shape::Image { height, .. } => *height,
                Shape::Flat(n) => *n,
            })
            .collect();
        assert_eq!(heights, vec![24, 24, 12, 8, 8, 4, 512]);
    }

    #[test]
    fn dense_rejects_wrong_width() {
        let err = LayerSpec::Dense { inputs: 3, outputs: 2 }.output_shape(Shape::Flat(4));
        assert!(matches!(err, Err(Error::InputShape(_))));
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(LayerSpec::Dense { inputs: 0, outputs: 2 }
            .output_shape(Shape::Flat(0))
            .is_err());
    }

    #[test]
    fn softmax_must_be_last() {
        let layers = [LayerSpec::Softmax, LayerSpec::Dense { inputs: 2, outputs: 2 }];
        assert!(infer_shapes(&layers, Shape::Flat(2)).is_err());
    }
}
