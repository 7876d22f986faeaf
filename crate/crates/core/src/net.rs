//! Small fixed-architecture CNN classifier with a designated tap layer.
//!
//! The network is a straight pipeline of conv / relu / 2x2-maxpool /
//! global-average-pool / linear layers. One convolutional layer is marked as
//! the *tap*: [`forward`] records its activation, and
//! [`grad_score_wrt_tap`] computes the exact gradient of a class logit with
//! respect to that activation by reverse-mode chain rule through the layers
//! after the tap. Gradients are hand-derived per layer; there is no autodiff
//! tape.
//!
//! Class scores are pre-softmax logits. [`softmax`] is provided for display
//! probabilities only.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{self, Tensor};

/// One layer of the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        out_channels: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2,
    GlobalAvgPool,
    Linear {
        out_features: usize,
    },
}

impl Layer {
    fn describe(&self) -> String {
        match self {
            Layer::Conv {
                out_channels,
                kh,
                kw,
                stride,
                padding,
            } => format!("conv({out_channels},{kh},{kw},s{stride},p{padding})"),
            Layer::Relu => "relu".into(),
            Layer::MaxPool2 => "maxpool2".into(),
            Layer::GlobalAvgPool => "gap".into(),
            Layer::Linear { out_features } => format!("linear({out_features})"),
        }
    }
}

/// Architecture description: ordered layers, tap index, class count.
#[derive(Clone, Debug)]
pub struct NetworkSpec {
    layers: Vec<Layer>,
    tap_layer: usize,
    num_classes: usize,
}

impl NetworkSpec {
    /// Validates that `tap_layer` indexes a conv layer, that no conv layer
    /// follows the tap (the backward pass supports relu / maxpool / gap /
    /// linear suffixes only), and that the final layer is a linear layer
    /// with `num_classes` outputs.
    pub fn new(layers: Vec<Layer>, tap_layer: usize, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Range("num_classes must be positive".into()));
        }
        match layers.get(tap_layer) {
            Some(Layer::Conv { .. }) => {}
            Some(other) => {
                return Err(Error::Dim(format!(
                    "tap_layer {tap_layer} is {}, expected a conv layer",
                    other.describe()
                )))
            }
            None => {
                return Err(Error::Dim(format!(
                    "tap_layer {tap_layer} out of range for {} layers",
                    layers.len()
                )))
            }
        }
        if let Some(idx) = layers
            .iter()
            .enumerate()
            .skip(tap_layer + 1)
            .find_map(|(i, l)| matches!(l, Layer::Conv { .. }).then_some(i))
        {
            return Err(Error::Dim(format!(
                "conv layer at index {idx} after tap_layer {tap_layer} is unsupported; \
                 the tap must be the last conv layer"
            )));
        }
        match layers.last() {
            Some(Layer::Linear { out_features }) if *out_features == num_classes => {}
            Some(other) => {
                return Err(Error::Dim(format!(
                    "final layer is {}, expected linear({num_classes})",
                    other.describe()
                )))
            }
            None => return Err(Error::Dim("layer list is empty".into())),
        }
        Ok(Self {
            layers,
            tap_layer,
            num_classes,
        })
    }

    /// Default five-grade classifier: two conv blocks, tap on the second
    /// conv, designed for 3x64x64 inputs but valid for any even-sized image
    /// large enough for the pools.
    pub fn default_dr() -> Self {
        Self::new(
            vec![
                Layer::Conv {
                    out_channels: 8,
                    kh: 3,
                    kw: 3,
                    stride: 1,
                    padding: 1,
                },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Conv {
                    out_channels: 16,
                    kh: 3,
                    kw: 3,
                    stride: 1,
                    padding: 1,
                },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::GlobalAvgPool,
                Layer::Linear { out_features: 5 },
            ],
            3,
            5,
        )
        .expect("default architecture is valid")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn tap_layer(&self) -> usize {
        self.tap_layer
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Canonical weight-entry names for a parametered layer.
    fn param_names(&self, index: usize) -> Option<(String, String)> {
        match self.layers[index] {
            Layer::Conv { .. } => Some((format!("layer{index}.kernel"), format!("layer{index}.bias"))),
            Layer::Linear { .. } => {
                Some((format!("layer{index}.weight"), format!("layer{index}.bias")))
            }
            _ => None,
        }
    }
}

/// Shape of the value flowing between layers.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerShape {
    Map { c: usize, h: usize, w: usize },
    Vector { len: usize },
}

impl LayerShape {
    fn describe(&self) -> String {
        match self {
            LayerShape::Map { c, h, w } => format!("{c}x{h}x{w}"),
            LayerShape::Vector { len } => format!("vector[{len}]"),
        }
    }
}

/// Propagates an input shape through every layer, returning the output shape
/// of each. Fails at the first incompatible layer, naming it.
pub fn shape_check(
    spec: &NetworkSpec,
    input_c: usize,
    input_h: usize,
    input_w: usize,
) -> Result<Vec<LayerShape>> {
    let mut cur = LayerShape::Map {
        c: input_c,
        h: input_h,
        w: input_w,
    };
    let mut table = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let err = |msg: String| {
            Error::Dim(format!(
                "layer {i} ({}): {msg} (input shape {})",
                layer.describe(),
                cur.describe()
            ))
        };
        cur = match (layer, &cur) {
            (
                Layer::Conv {
                    out_channels,
                    kh,
                    kw,
                    stride,
                    padding,
                },
                LayerShape::Map { h, w, .. },
            ) => {
                let (ph, pw) = (h + 2 * padding, w + 2 * padding);
                if *kh > ph || *kw > pw {
                    return Err(err(format!("kernel {kh}x{kw} exceeds padded input {ph}x{pw}")));
                }
                LayerShape::Map {
                    c: *out_channels,
                    h: (ph - kh) / stride + 1,
                    w: (pw - kw) / stride + 1,
                }
            }
            (Layer::Relu, shape) => shape.clone(),
            (Layer::MaxPool2, LayerShape::Map { c, h, w }) => {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(err(format!("spatial extents {h}x{w} must be even")));
                }
                LayerShape::Map {
                    c: *c,
                    h: h / 2,
                    w: w / 2,
                }
            }
            (Layer::GlobalAvgPool, LayerShape::Map { c, .. }) => LayerShape::Vector { len: *c },
            (Layer::Linear { out_features }, shape) => {
                // A linear layer flattens map inputs.
                let _ = shape;
                LayerShape::Vector { len: *out_features }
            }
            (_, LayerShape::Vector { .. }) => {
                return Err(err("expected a map input, got a vector".into()))
            }
        };
        table.push(cur.clone());
    }
    Ok(table)
}

fn flat_len(shape: &LayerShape) -> usize {
    match shape {
        LayerShape::Map { c, h, w } => c * h * w,
        LayerShape::Vector { len } => *len,
    }
}

/// Named weight tensors for every parametered layer.
///
/// Entries are kept in a sorted map so iteration (and therefore file
/// serialization) order is deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelWeights {
    entries: BTreeMap<String, Tensor>,
}

impl ModelWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Missing(format!("weight entry `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Seeded initializer: every parameter uniform in [-0.1, 0.1], drawn in
    /// layer order (kernel before bias, row-major within a tensor) from a
    /// SplitMix64 stream.
    pub fn seeded(
        spec: &NetworkSpec,
        input_c: usize,
        input_h: usize,
        input_w: usize,
        seed: u64,
    ) -> Result<Self> {
        let table = shape_check(spec, input_c, input_h, input_w)?;
        let mut rng = SplitMix64::new(seed);
        let mut draw = |shape: Vec<usize>| -> Tensor {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.uniform(-0.1, 0.1)).collect();
            Tensor::new(shape, data).expect("generated shape is valid")
        };
        let mut weights = Self::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            let in_shape = if i == 0 {
                LayerShape::Map {
                    c: input_c,
                    h: input_h,
                    w: input_w,
                }
            } else {
                table[i - 1].clone()
            };
            match layer {
                Layer::Conv {
                    out_channels,
                    kh,
                    kw,
                    ..
                } => {
                    let c_in = match in_shape {
                        LayerShape::Map { c, .. } => c,
                        LayerShape::Vector { .. } => unreachable!("shape_check rejects this"),
                    };
                    let (kname, bname) = spec.param_names(i).unwrap();
                    weights.insert(kname, draw(vec![*out_channels, c_in, *kh, *kw]))?;
                    weights.insert(bname, draw(vec![*out_channels]))?;
                }
                Layer::Linear { out_features } => {
                    let n = flat_len(&in_shape);
                    let (wname, bname) = spec.param_names(i).unwrap();
                    weights.insert(wname, draw(vec![*out_features, n]))?;
                    weights.insert(bname, draw(vec![*out_features]))?;
                }
                _ => {}
            }
        }
        Ok(weights)
    }

    /// Checks that every parametered layer of `spec` has exactly one matching
    /// entry with the declared shape, for the given input size.
    pub fn validate_for(
        &self,
        spec: &NetworkSpec,
        input_c: usize,
        input_h: usize,
        input_w: usize,
    ) -> Result<()> {
        let table = shape_check(spec, input_c, input_h, input_w)?;
        for (i, layer) in spec.layers.iter().enumerate() {
            let in_shape = if i == 0 {
                LayerShape::Map {
                    c: input_c,
                    h: input_h,
                    w: input_w,
                }
            } else {
                table[i - 1].clone()
            };
            let expect = |name: &str, shape: Vec<usize>| -> Result<()> {
                let t = self.get(name)?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::Dim(format!(
                        "weight entry `{name}` has shape {:?}, expected {:?}",
                        t.shape(),
                        shape
                    )));
                }
                Ok(())
            };
            match layer {
                Layer::Conv {
                    out_channels,
                    kh,
                    kw,
                    ..
                } => {
                    let c_in = match in_shape {
                        LayerShape::Map { c, .. } => c,
                        _ => unreachable!(),
                    };
                    let (kname, bname) = spec.param_names(i).unwrap();
                    expect(&kname, vec![*out_channels, c_in, *kh, *kw])?;
                    expect(&bname, vec![*out_channels])?;
                }
                Layer::Linear { out_features } => {
                    let (wname, bname) = spec.param_names(i).unwrap();
                    expect(&wname, vec![*out_features, flat_len(&in_shape)])?;
                    expect(&bname, vec![*out_features])?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Value flowing between layers during a forward pass.
#[derive(Clone, Debug)]
enum Value {
    Map(Tensor),
    Vector(Vec<f32>),
}

impl Value {
    fn describe(&self) -> String {
        match self {
            Value::Map(t) => format!("{:?}", t.shape()),
            Value::Vector(v) => format!("vector[{}]", v.len()),
        }
    }
}

/// Everything [`forward`] records: the logits, the tap activation, and the
/// post-tap layer inputs the backward pass needs.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    logits: Vec<f32>,
    tap_activation: Tensor,
    /// Input to each layer after the tap, in layer order.
    post_tap_inputs: Vec<Value>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f32] {
        &self.logits
    }

    pub fn tap_activation(&self) -> &Tensor {
        &self.tap_activation
    }
}

fn apply_layer(
    layer: &Layer,
    index: usize,
    spec: &NetworkSpec,
    weights: &ModelWeights,
    value: &Value,
) -> Result<Value> {
    match (layer, value) {
        (Layer::Conv { stride, padding, .. }, Value::Map(t)) => {
            let (kname, bname) = spec.param_names(index).unwrap();
            let kernel = weights.get(&kname)?;
            let bias = weights.get(&bname)?;
            Ok(Value::Map(tensor::conv2d(
                t,
                kernel,
                bias.data(),
                *stride,
                *padding,
            )?))
        }
        (Layer::Relu, Value::Map(t)) => Ok(Value::Map(tensor::relu(t))),
        (Layer::Relu, Value::Vector(v)) => {
            Ok(Value::Vector(v.iter().map(|&x| x.max(0.0)).collect()))
        }
        (Layer::MaxPool2, Value::Map(t)) => Ok(Value::Map(tensor::maxpool2d(t)?)),
        (Layer::GlobalAvgPool, Value::Map(t)) => Ok(Value::Vector(tensor::global_avg_pool(t)?)),
        (Layer::Linear { .. }, value) => {
            let flat: Vec<f32> = match value {
                Value::Map(t) => t.data().to_vec(),
                Value::Vector(v) => v.clone(),
            };
            let (wname, bname) = spec.param_names(index).unwrap();
            let weight = weights.get(&wname)?;
            let bias = weights.get(&bname)?;
            Ok(Value::Vector(tensor::linear(&flat, weight, bias.data())?))
        }
        (layer, value) => Err(Error::Dim(format!(
            "layer {index} ({}): cannot apply to {}",
            layer.describe(),
            value.describe()
        ))),
    }
}

/// Runs the network, recording logits, the tap activation, and the post-tap
/// intermediates needed by [`grad_score_wrt_tap`]. The spec is shape-checked
/// against the image before any arithmetic runs.
pub fn forward(spec: &NetworkSpec, weights: &ModelWeights, image: &Tensor) -> Result<ForwardTrace> {
    if image.rank() != 3 {
        return Err(Error::Dim(format!(
            "forward: image must be rank 3 [C,H,W], got shape {:?}",
            image.shape()
        )));
    }
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    shape_check(spec, c, h, w)?;
    weights.validate_for(spec, c, h, w)?;

    let mut value = Value::Map(image.clone());
    let mut tap_activation = None;
    let mut post_tap_inputs = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        if i > spec.tap_layer {
            post_tap_inputs.push(value.clone());
        }
        value = apply_layer(layer, i, spec, weights, &value)?;
        if i == spec.tap_layer {
            match &value {
                Value::Map(t) => tap_activation = Some(t.clone()),
                Value::Vector(_) => unreachable!("tap is a conv layer"),
            }
        }
    }
    let logits = match value {
        Value::Vector(v) => v,
        Value::Map(_) => unreachable!("final layer is linear"),
    };
    Ok(ForwardTrace {
        logits,
        tap_activation: tap_activation.expect("tap layer was executed"),
        post_tap_inputs,
    })
}

/// Exact gradient of logit `class_index` with respect to the tap activation,
/// by reverse-mode chain rule through the post-tap layers.
///
/// Backward rules: relu masks by sign of its cached input (derivative at 0
/// taken as 0); 2x2 maxpool routes the incoming gradient to the first
/// maximal element of each window in row-major order; global average pool
/// distributes 1/(h*w); linear multiplies by the transposed weight.
pub fn grad_score_wrt_tap(
    spec: &NetworkSpec,
    weights: &ModelWeights,
    trace: &ForwardTrace,
    class_index: usize,
) -> Result<Tensor> {
    if class_index >= spec.num_classes {
        return Err(Error::Range(format!(
            "class index {class_index} out of range for {} classes",
            spec.num_classes
        )));
    }
    let expected_post = spec.layers.len() - spec.tap_layer - 1;
    if trace.post_tap_inputs.len() != expected_post
        || trace.logits.len() != spec.num_classes
    {
        return Err(Error::Dim(format!(
            "stale trace: {} cached post-tap inputs and {} logits, expected {} and {}",
            trace.post_tap_inputs.len(),
            trace.logits.len(),
            expected_post,
            spec.num_classes
        )));
    }

    // Seed: dS_c / dlogits = one-hot at class_index.
    let mut grad = {
        let mut g = vec![0.0f32; spec.num_classes];
        g[class_index] = 1.0;
        Value::Vector(g)
    };

    for (offset, layer) in spec.layers.iter().enumerate().skip(spec.tap_layer + 1).rev() {
        let cached = &trace.post_tap_inputs[offset - spec.tap_layer - 1];
        grad = backward_layer(layer, offset, spec, weights, cached, grad)?;
    }

    match grad {
        Value::Map(t) => {
            if t.shape() != trace.tap_activation.shape() {
                return Err(Error::Dim(format!(
                    "stale trace: gradient shape {:?} does not match tap activation {:?}",
                    t.shape(),
                    trace.tap_activation.shape()
                )));
            }
            Ok(t)
        }
        Value::Vector(_) => Err(Error::Dim(
            "gradient did not resolve to a map at the tap".into(),
        )),
    }
}

fn backward_layer(
    layer: &Layer,
    index: usize,
    spec: &NetworkSpec,
    weights: &ModelWeights,
    cached_input: &Value,
    grad_out: Value,
) -> Result<Value> {
    match (layer, cached_input, grad_out) {
        (Layer::Relu, Value::Map(input), Value::Map(g)) => {
            let data = input
                .data()
                .iter()
                .zip(g.data())
                .map(|(&x, &gy)| if x > 0.0 { gy } else { 0.0 })
                .collect();
            Ok(Value::Map(Tensor::new(input.shape().to_vec(), data)?))
        }
        (Layer::Relu, Value::Vector(input), Value::Vector(g)) => Ok(Value::Vector(
            input
                .iter()
                .zip(&g)
                .map(|(&x, &gy)| if x > 0.0 { gy } else { 0.0 })
                .collect(),
        )),
        (Layer::MaxPool2, Value::Map(input), Value::Map(g)) => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let mut dx = Tensor::zeros(vec![c, h, w])?;
            let (oh, ow) = (h / 2, w / 2);
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        // First maximal element in row-major window order.
                        let (mut by, mut bx) = (oy * 2, ox * 2);
                        let mut best = input.at3(ch, by, bx);
                        for (dy, dx_) in [(0, 1), (1, 0), (1, 1)] {
                            let (y, x) = (oy * 2 + dy, ox * 2 + dx_);
                            if input.at3(ch, y, x) > best {
                                best = input.at3(ch, y, x);
                                by = y;
                                bx = x;
                            }
                        }
                        let gv = g.at3(ch, oy, ox);
                        dx.set3(ch, by, bx, dx.at3(ch, by, bx) + gv);
                    }
                }
            }
            Ok(Value::Map(dx))
        }
        (Layer::GlobalAvgPool, Value::Map(input), Value::Vector(g)) => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let scale = 1.0 / (h * w) as f32;
            let mut dx = Tensor::zeros(vec![c, h, w])?;
            for ch in 0..c {
                let gv = g[ch] * scale;
                for y in 0..h {
                    for x in 0..w {
                        dx.set3(ch, y, x, gv);
                    }
                }
            }
            Ok(Value::Map(dx))
        }
        (Layer::Linear { .. }, cached, Value::Vector(g)) => {
            let (wname, _) = spec.param_names(index).unwrap();
            let weight = weights.get(&wname)?;
            let (m, n) = (weight.shape()[0], weight.shape()[1]);
            if g.len() != m {
                return Err(Error::Dim(format!(
                    "linear backward at layer {index}: gradient length {} but weight row axis is {m}",
                    g.len()
                )));
            }
            let mut dx = vec![0.0f32; n];
            for j in 0..n {
                let mut acc = 0.0f64;
                for i in 0..m {
                    acc += f64::from(weight.data()[i * n + j]) * f64::from(g[i]);
                }
                dx[j] = acc as f32;
            }
            match cached {
                Value::Vector(_) => Ok(Value::Vector(dx)),
                Value::Map(t) => Ok(Value::Map(Tensor::new(t.shape().to_vec(), dx)?)),
            }
        }
        (layer, cached, _) => Err(Error::Dim(format!(
            "layer {index} ({}): no backward rule for cached input {}",
            layer.describe(),
            cached.describe()
        ))),
    }
}

/// Numerically stable softmax, for display probabilities only.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let m = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&v| f64::from(v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}
