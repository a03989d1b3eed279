//! Frozen-backbone classifier: the VGG16 convolutional stack followed by a
//! dense head (`[1024, 1024, 512]` ReLU units with dropout) and a softmax
//! output layer.

pub mod backbone;
pub mod layers;
pub mod scalar;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::Tensor;
use crate::error::{Error, Result};
use crate::preprocess::{ImageTensor, MIN_INPUT_SIDE};
use crate::seed;

pub use backbone::{backbone_len, canonical_layers, BackboneLayer, BackboneWeights};
pub use layers::{Activation, Shape};
pub use scalar::Scalar;

use layers::{Conv2d, Dense, DenseActivation};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadActivation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    #[default]
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_classes: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub freeze_layer_count: usize,
    pub head_widths: Vec<usize>,
    pub dropout_rate: f32,
    pub head_activation: HeadActivation,
    pub output_activation: OutputActivation,
    /// Seed for the head's weight initialization.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_classes: 18,
            input_height: 100,
            input_width: 200,
            freeze_layer_count: 14,
            head_widths: vec![1024, 1024, 512],
            dropout_rate: 0.10,
            head_activation: HeadActivation::Relu,
            output_activation: OutputActivation::Softmax,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_height < MIN_INPUT_SIDE || self.input_width < MIN_INPUT_SIDE {
            return Err(Error::shape(format!(
                "input {}x{} is smaller than the {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE} backbone minimum",
                self.input_height, self.input_width
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::config("model.n_classes", "need at least 2 classes"));
        }
        if self.freeze_layer_count > backbone_len() {
            return Err(Error::config(
                "model.freeze_layer_count",
                format!("must be at most {}", backbone_len()),
            ));
        }
        if self.head_widths.is_empty() || self.head_widths.contains(&0) {
            return Err(Error::config(
                "model.head_widths",
                "must be a non-empty list of positive widths",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("model.dropout_rate", "must be in [0, 1)"));
        }
        Ok(())
    }

    /// Spatial size of the last pooling output.
    pub fn feature_grid(&self) -> (usize, usize) {
        (self.input_height / 32, self.input_width / 32)
    }

    pub fn flatten_width(&self) -> usize {
        let (h, w) = self.feature_grid();
        h * w * backbone::FEATURE_CHANNELS
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Input,
    Conv(Conv2d<T>),
    Pool,
    Flatten,
    Dense(Dense<T>),
    Dropout(f32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Input,
    Conv2d,
    MaxPool,
    Flatten,
    Dense,
    Dropout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub name: String,
    pub kind: LayerKind,
    pub output_shape: Vec<usize>,
    pub trainable: bool,
    pub params: usize,
}

/// One boolean per network layer; `true` excludes the layer's parameters
/// from gradient updates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFreezeMask(pub Vec<bool>);

impl LayerFreezeMask {
    pub fn is_frozen(&self, layer: usize) -> bool {
        self.0[layer]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Identifies a parameter array: weight or bias of a given layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamSlot {
    pub layer: usize,
    pub bias: bool,
}

/// A batch of `B x H x W x 3` unit-float images, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBatch<T> {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> InputBatch<T> {
    pub fn from_images(images: &[ImageTensor]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::shape("empty batch"))?;
        let (h, w, _) = first.shape();
        let mut data = Vec::with_capacity(images.len() * h * w * 3);
        for img in images {
            if img.shape() != (h, w, 3) {
                return Err(Error::shape(format!(
                    "batch mixes shapes {:?} and {:?}",
                    first.shape(),
                    img.shape()
                )));
            }
            data.extend(img.data().iter().map(|&v| T::from_f32(v)));
        }
        Ok(Self {
            n: images.len(),
            height: h,
            width: w,
            data,
        })
    }

    pub fn zeros(n: usize, height: usize, width: usize) -> Self {
        Self {
            n,
            height,
            width,
            data: vec![T::zero(); n * height * width * 3],
        }
    }

    /// Converts to the channel-major activation layout.
    pub fn to_activation(&self) -> Activation<T> {
        let plane = self.height * self.width;
        let mut data = vec![T::zero(); self.data.len()];
        for img in 0..self.n {
            for p in 0..plane {
                for c in 0..3 {
                    data[(c * self.n + img) * plane + p] = self.data[(img * plane + p) * 3 + c];
                }
            }
        }
        Activation::new(
            Shape::Spatial {
                c: 3,
                n: self.n,
                h: self.height,
                w: self.width,
            },
            data,
        )
    }
}

/// Cached intermediate values of a training-mode forward pass, starting at
/// the first trainable layer.
#[derive(Debug)]
pub struct ForwardTrace<T> {
    start: usize,
    /// `acts[0]` is the input of layer `start`; `acts[i + 1]` is the output
    /// of layer `start + i`.
    acts: Vec<Activation<T>>,
    pool_argmax: Vec<Vec<u32>>,
    dropout_masks: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Output probabilities, `B x K` row-major.
    pub fn probabilities(&self) -> &[T] {
        &self.acts.last().expect("non-empty trace").data
    }
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub entries: Vec<(ParamSlot, Vec<T>)>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    config: ModelConfig,
    names: Vec<String>,
    layers: Vec<Layer<T>>,
    mask: LayerFreezeMask,
}

fn glorot_uniform<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
        .collect()
}

/// Builds the classifier with the given backbone weights, a freshly
/// initialized head and the configured freeze mask applied.
pub fn build_classifier<T: Scalar>(
    cfg: &ModelConfig,
    weights: &BackboneWeights,
) -> Result<Network<T>> {
    cfg.validate()?;
    if weights.convs.len() != 13 {
        return Err(Error::WeightLoad(format!(
            "expected 13 convolution weight sets, got {}",
            weights.convs.len()
        )));
    }
    let mut names = Vec::new();
    let mut layers = Vec::new();
    let mut convs = weights.convs.iter();
    for l in canonical_layers() {
        names.push(l.name());
        layers.push(match l {
            BackboneLayer::Input => Layer::Input,
            BackboneLayer::Pool { .. } => Layer::Pool,
            BackboneLayer::Conv { in_ch, out_ch, .. } => {
                let (w, b) = convs.next().expect("13 convolutions");
                if w.len() != out_ch * in_ch * 9 || b.len() != out_ch {
                    return Err(Error::WeightLoad(format!("bad shape for {}", l.name())));
                }
                Layer::Conv(Conv2d {
                    in_ch,
                    out_ch,
                    weight: w.iter().map(|&v| T::from_f32(v)).collect(),
                    bias: b.iter().map(|&v| T::from_f32(v)).collect(),
                })
            }
        });
    }
    names.push("flatten".into());
    layers.push(Layer::Flatten);

    let mut fan_in = cfg.flatten_width();
    let n_dense = cfg.head_widths.len() + 1;
    for (i, &width) in cfg.head_widths.iter().chain([&cfg.n_classes]).enumerate() {
        let last = i + 1 == n_dense;
        let mut rng = seed::rng_from(cfg.init_seed, &[i as u64]);
        names.push(if last { "predictions".into() } else { format!("dense_{}", i + 1) });
        layers.push(Layer::Dense(Dense {
            inputs: fan_in,
            outputs: width,
            weight: glorot_uniform(fan_in, width, &mut rng),
            bias: vec![T::zero(); width],
            activation: if last {
                DenseActivation::Softmax
            } else {
                DenseActivation::Relu
            },
        }));
        if !last {
            names.push(format!("dropout_{}", i + 1));
            layers.push(Layer::Dropout(cfg.dropout_rate));
        }
        fan_in = width;
    }

    let n = layers.len();
    let mut net = Network {
        config: cfg.clone(),
        names,
        layers,
        mask: LayerFreezeMask(vec![false; n]),
    };
    freeze_layers(&mut net, cfg.freeze_layer_count)?;
    Ok(net)
}

/// Freezes the first `count` entries of the backbone layer list. The head is
/// never frozen.
pub fn freeze_layers<T>(net: &mut Network<T>, count: usize) -> Result<LayerFreezeMask> {
    if count > backbone_len() {
        return Err(Error::config(
            "model.freeze_layer_count",
            format!("{count} exceeds the {} backbone layers", backbone_len()),
        ));
    }
    let mask = LayerFreezeMask((0..net.layers.len()).map(|i| i < count).collect());
    net.mask = mask.clone();
    net.config.freeze_layer_count = count;
    Ok(mask)
}

/// `(trainable, frozen)` parameter counts.
pub fn count_parameters<T: Scalar>(net: &Network<T>) -> (usize, usize) {
    net.layers
        .iter()
        .enumerate()
        .fold((0, 0), |(tr, fr), (i, l)| {
            let p = Network::<T>::layer_params(l);
            if net.mask.is_frozen(i) {
                (tr, fr + p)
            } else {
                (tr + p, fr)
            }
        })
}

impl<T: Scalar> Network<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn freeze_mask(&self) -> &LayerFreezeMask {
        &self.mask
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn layer_params(l: &Layer<T>) -> usize {
        match l {
            Layer::Conv(c) => c.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }

    pub fn total_parameters(&self) -> usize {
        self.layers.iter().map(Self::layer_params).sum()
    }

    pub fn backbone_parameters(&self) -> usize {
        self.layers[..backbone_len()].iter().map(Self::layer_params).sum()
    }

    pub fn describe(&self) -> Vec<LayerDescriptor> {
        let (mut h, mut w, mut c) = (self.config.input_height, self.config.input_width, 3);
        let mut flat: Option<usize> = None;
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let kind = match l {
                    Layer::Input => LayerKind::Input,
                    Layer::Conv(conv) => {
                        c = conv.out_ch;
                        LayerKind::Conv2d
                    }
                    Layer::Pool => {
                        h /= 2;
                        w /= 2;
                        LayerKind::MaxPool
                    }
                    Layer::Flatten => {
                        flat = Some(h * w * c);
                        LayerKind::Flatten
                    }
                    Layer::Dense(d) => {
                        flat = Some(d.outputs);
                        LayerKind::Dense
                    }
                    Layer::Dropout(_) => LayerKind::Dropout,
                };
                LayerDescriptor {
                    name: self.names[i].clone(),
                    kind,
                    output_shape: match flat {
                        Some(f) => vec![f],
                        None => vec![h, w, c],
                    },
                    trainable: !self.mask.is_frozen(i),
                    params: Self::layer_params(l),
                }
            })
            .collect()
    }

    /// Every parameter array in layer order, weight before bias.
    pub fn param_slots(&self) -> Vec<ParamSlot> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Conv(_) | Layer::Dense(_)))
            .flat_map(|(i, _)| {
                [
                    ParamSlot { layer: i, bias: false },
                    ParamSlot { layer: i, bias: true },
                ]
            })
            .collect()
    }

    pub fn trainable_slots(&self) -> Vec<ParamSlot> {
        self.param_slots()
            .into_iter()
            .filter(|s| !self.mask.is_frozen(s.layer))
            .collect()
    }

    pub fn param(&self, slot: ParamSlot) -> &[T] {
        match (&self.layers[slot.layer], slot.bias) {
            (Layer::Conv(c), false) => &c.weight,
            (Layer::Conv(c), true) => &c.bias,
            (Layer::Dense(d), false) => &d.weight,
            (Layer::Dense(d), true) => &d.bias,
            _ => panic!("layer {} has no parameters", slot.layer),
        }
    }

    pub fn param_mut(&mut self, slot: ParamSlot) -> &mut [T] {
        match (&mut self.layers[slot.layer], slot.bias) {
            (Layer::Conv(c), false) => &mut c.weight,
            (Layer::Conv(c), true) => &mut c.bias,
            (Layer::Dense(d), false) => &mut d.weight,
            (Layer::Dense(d), true) => &mut d.bias,
            _ => panic!("layer {} has no parameters", slot.layer),
        }
    }

    pub fn param_shape(&self, slot: ParamSlot) -> Vec<usize> {
        match (&self.layers[slot.layer], slot.bias) {
            (Layer::Conv(c), false) => vec![c.out_ch, c.in_ch, 3, 3],
            (Layer::Conv(c), true) => vec![c.out_ch],
            (Layer::Dense(d), false) => vec![d.inputs, d.outputs],
            (Layer::Dense(d), true) => vec![d.outputs],
            _ => panic!("layer {} has no parameters", slot.layer),
        }
    }

    pub fn param_name(&self, slot: ParamSlot) -> String {
        format!(
            "{}.{}",
            self.names[slot.layer],
            if slot.bias { "bias" } else { "weight" }
        )
    }

    /// Index of the first layer whose parameters are updated by training.
    pub fn trainable_start(&self) -> usize {
        self.layers
            .iter()
            .enumerate()
            .find(|(i, l)| !self.mask.is_frozen(*i) && Self::layer_params(l) > 0)
            .map(|(i, _)| i)
            .expect("the head is always trainable")
    }

    fn check_input(&self, batch: &InputBatch<T>) -> Result<()> {
        if (batch.height, batch.width) != (self.config.input_height, self.config.input_width) {
            return Err(Error::shape(format!(
                "batch is {}x{}, model expects {}x{}",
                batch.height, batch.width, self.config.input_height, self.config.input_width
            )));
        }
        if batch.data.len() != batch.n * batch.height * batch.width * 3 {
            return Err(Error::shape("batch data length does not match its shape"));
        }
        Ok(())
    }

    /// Inference-mode pass through layers `range` (dropout disabled).
    pub fn forward_range(&self, mut act: Activation<T>, range: std::ops::Range<usize>) -> Activation<T> {
        for layer in &self.layers[range] {
            act = match layer {
                Layer::Input | Layer::Dropout(_) => act,
                Layer::Conv(c) => c.forward(&act),
                Layer::Pool => layers::maxpool_forward(&act, false).0,
                Layer::Flatten => layers::flatten_forward(&act),
                Layer::Dense(d) => d.forward(&act),
            };
        }
        act
    }

    /// Inference forward pass: `B x K` probabilities, row-major.
    pub fn forward(&self, batch: &InputBatch<T>) -> Result<Vec<T>> {
        self.check_input(batch)?;
        Ok(self.forward_range(batch.to_activation(), 0..self.layers.len()).data)
    }

    /// Output of the frozen prefix, i.e. the input of `trainable_start()`.
    pub fn frozen_features(&self, batch: &InputBatch<T>) -> Result<Activation<T>> {
        self.check_input(batch)?;
        Ok(self.forward_range(batch.to_activation(), 0..self.trainable_start()))
    }

    /// Inference pass from precomputed frozen-prefix features.
    pub fn forward_from_features(&self, features: Activation<T>) -> Vec<T> {
        self.forward_range(features, self.trainable_start()..self.layers.len()).data
    }

    /// Training-mode pass from frozen-prefix features, caching what the
    /// backward pass needs. Dropout masks are drawn from `rng`.
    pub fn forward_train(&self, features: Activation<T>, rng: &mut impl Rng) -> ForwardTrace<T> {
        let start = self.trainable_start();
        let mut acts = vec![features];
        let mut pool_argmax = Vec::new();
        let mut dropout_masks = Vec::new();
        for layer in &self.layers[start..] {
            let x = acts.last().expect("non-empty");
            let y = match layer {
                Layer::Input => x.clone(),
                Layer::Conv(c) => c.forward(x),
                Layer::Pool => {
                    let (y, arg) = layers::maxpool_forward(x, true);
                    pool_argmax.push(arg);
                    y
                }
                Layer::Flatten => layers::flatten_forward(x),
                Layer::Dense(d) => d.forward(x),
                Layer::Dropout(rate) => {
                    let mask: Vec<T> = if *rate > 0.0 {
                        layers::dropout_mask(x.data.len(), *rate, rng)
                    } else {
                        vec![T::one(); x.data.len()]
                    };
                    let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    dropout_masks.push(mask);
                    Activation::new(x.shape, data)
                }
            };
            acts.push(y);
        }
        ForwardTrace {
            start,
            acts,
            pool_argmax,
            dropout_masks,
        }
    }

    /// Backpropagates `dlogits` (gradient of the loss w.r.t. the pre-softmax
    /// outputs) and returns gradients for every trainable parameter array.
    pub fn backward(&self, trace: &ForwardTrace<T>, dlogits: &[T]) -> Gradients<T> {
        let start = trace.start;
        let mut grad = dlogits.to_vec();
        let mut entries = Vec::new();
        let mut pools = trace.pool_argmax.iter().rev();
        let mut masks = trace.dropout_masks.iter().rev();
        for i in (start..self.layers.len()).rev() {
            let x = &trace.acts[i - start];
            let y = &trace.acts[i - start + 1];
            let need_dx = i > start;
            let mut push = |dw: Vec<T>, db: Vec<T>| {
                if !self.mask.is_frozen(i) {
                    entries.push((ParamSlot { layer: i, bias: false }, dw));
                    entries.push((ParamSlot { layer: i, bias: true }, db));
                }
            };
            grad = match &self.layers[i] {
                Layer::Input => grad,
                Layer::Conv(c) => {
                    let (dw, db, dx) = c.backward(x, y, &grad, need_dx);
                    push(dw, db);
                    dx.unwrap_or_default()
                }
                Layer::Dense(d) => {
                    let (dw, db, dx) = d.backward(x, y, &grad, need_dx);
                    push(dw, db);
                    dx.unwrap_or_default()
                }
                Layer::Pool => {
                    layers::maxpool_backward(x.shape, pools.next().expect("pool trace"), &grad)
                }
                Layer::Flatten => layers::flatten_backward(x.shape, &grad),
                Layer::Dropout(_) => {
                    let mask = masks.next().expect("dropout trace");
                    grad.iter().zip(mask).map(|(&g, &m)| g * m).collect()
                }
            };
        }
        entries.reverse();
        Gradients { entries }
    }
}

impl Network<f32> {
    /// All parameter arrays, including frozen ones, as named tensors.
    pub fn export_tensors(&self) -> Vec<Tensor> {
        self.param_slots()
            .into_iter()
            .map(|s| Tensor {
                name: self.param_name(s),
                shape: self.param_shape(s),
                data: self.param(s).to_vec(),
            })
            .collect()
    }

    /// Rebuilds a network from exported tensors.
    pub fn from_tensors(cfg: &ModelConfig, tensors: &[Tensor]) -> Result<Self> {
        let placeholder = BackboneWeights {
            convs: canonical_layers()
                .into_iter()
                .filter_map(|l| match l {
                    BackboneLayer::Conv { in_ch, out_ch, .. } => {
                        Some((vec![0.0; out_ch * in_ch * 9], vec![0.0; out_ch]))
                    }
                    _ => None,
                })
                .collect(),
            source: "checkpoint".into(),
            content_hash: String::new(),
        };
        let mut net = build_classifier::<f32>(cfg, &placeholder)?;
        let slots = net.param_slots();
        if slots.len() != tensors.len() {
            return Err(Error::Format(format!(
                "expected {} parameter arrays, found {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            let name = net.param_name(slot);
            if t.name != name || t.shape != net.param_shape(slot) {
                return Err(Error::Format(format!(
                    "parameter `{}` {:?} does not match `{name}` {:?}",
                    t.name,
                    t.shape,
                    net.param_shape(slot)
                )));
            }
            net.param_mut(slot).copy_from_slice(&t.data);
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            n_classes: 3,
            input_height: 32,
            input_width: 64,
            head_widths: vec![8, 8, 4],
            ..ModelConfig::default()
        }
    }

    #[test]
    fn default_layer_table() {
        let net = build_classifier::<f32>(&ModelConfig::default(), &BackboneWeights::standin(0)).unwrap();
        let desc = net.describe();
        assert_eq!(desc.len(), 27);
        assert_eq!(desc[19].name, "flatten");
        assert_eq!(desc[19].output_shape, vec![9216]);
        assert_eq!(desc[18].output_shape, vec![3, 6, 512]);
        let head: Vec<usize> = desc
            .iter()
            .filter(|d| d.kind == LayerKind::Dense)
            .map(|d| d.params)
            .collect();
        assert_eq!(head, vec![9_438_208, 1_049_600, 524_800, 9_234]);
        assert_eq!(net.backbone_parameters(), 14_714_688);
        assert_eq!(net.trainable_start(), 15);
        assert!(desc[..14].iter().all(|d| !d.trainable));
        assert!(desc[14..].iter().all(|d| d.trainable));
    }

    #[test]
    fn config_validation() {
        let w = BackboneWeights::standin(0);
        let mut cfg = small_cfg();
        cfg.input_height = 31;
        assert!(matches!(build_classifier::<f32>(&cfg, &w), Err(Error::Shape(_))));
        let mut cfg = small_cfg();
        cfg.dropout_rate = 1.0;
        assert!(matches!(build_classifier::<f32>(&cfg, &w), Err(Error::Config { .. })));
        let mut cfg = small_cfg();
        cfg.head_widths = vec![];
        assert!(build_classifier::<f32>(&cfg, &w).is_err());
        let mut cfg = small_cfg();
        cfg.freeze_layer_count = 20;
        assert!(build_classifier::<f32>(&cfg, &w).is_err());
    }

    #[test]
    fn freeze_bounds() {
        let mut net = build_classifier::<f32>(&small_cfg(), &BackboneWeights::standin(0)).unwrap();
        let total = net.total_parameters();
        let mask = freeze_layers(&mut net, 0).unwrap();
        assert!(mask.0.iter().all(|f| !f));
        assert_eq!(count_parameters(&net), (total, 0));
        freeze_layers(&mut net, 19).unwrap();
        let (tr, fr) = count_parameters(&net);
        assert_eq!(fr, 14_714_688);
        assert_eq!(tr, total - fr);
        assert_eq!(net.trainable_start(), 20);
        assert!(freeze_layers(&mut net, 20).is_err());
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let net = build_classifier::<f32>(&small_cfg(), &BackboneWeights::standin(0)).unwrap();
        let batch = InputBatch::<f32>::zeros(1, 32, 32);
        assert!(matches!(net.forward(&batch), Err(Error::Shape(_))));
    }

    #[test]
    fn tensor_export_round_trip() {
        let net = build_classifier::<f32>(&small_cfg(), &BackboneWeights::standin(1)).unwrap();
        let tensors = net.export_tensors();
        let back = Network::from_tensors(net.config(), &tensors).unwrap();
        assert_eq!(back.export_tensors(), tensors);
        let mut broken = tensors.clone();
        broken[30].shape = vec![1];
        assert!(matches!(Network::from_tensors(net.config(), &broken), Err(Error::Format(_))));
    }
}
