//! The three benchmark architectures as ordered layer stacks with a uniform
//! forward/backward/parameter interface.
//!
//! - NN-2: flatten, affine(D->256), ReLU, affine(256->256), ReLU, affine(256->L)
//! - NN-3: NN-2 with a third 256-unit hidden affine+ReLU
//! - LeNet: conv(6@5x5, pad 2), ReLU, 2x2 maxpool, conv(16@5x5, pad 0), ReLU,
//!   2x2 maxpool, flatten(400), affine(400->120), ReLU, affine(120->L)
//!
//! Hidden layers use ReLU; weights are He-uniform from the construction seed
//! (one stream, layers in order, each array filled row-major), biases zero.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::array::RealArray;
use crate::error::{Error, Result};
use crate::nn::{
    affine_backward, affine_forward, conv2d_backward, conv2d_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, ArgmaxMask,
};
use crate::rng::Rng;

const HIDDEN_WIDTH: usize = 256;
const CHECKPOINT_MAGIC: &[u8; 4] = b"TGM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Nn2,
    Nn3,
    #[serde(rename = "lenet")]
    LeNet,
}

impl Arch {
    fn id(self) -> u8 {
        match self {
            Arch::Nn2 => 1,
            Arch::Nn3 => 2,
            Arch::LeNet => 3,
        }
    }

    fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Arch::Nn2),
            2 => Ok(Arch::Nn3),
            3 => Ok(Arch::LeNet),
            other => Err(Error::Input(format!("unknown architecture id {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputShape {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl InputShape {
    pub fn element_count(&self) -> usize {
        match *self {
            InputShape::Flat(d) => d,
            InputShape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }
}

#[derive(Debug, Clone)]
enum Layer {
    Flatten,
    Affine {
        weights: RealArray,
        bias: RealArray,
    },
    Conv {
        kernels: RealArray,
        bias: RealArray,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool2x2,
}

/// All model parameters flattened into one vector, with the shape of each
/// parameter array retained so the flat view maps back onto the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    data: Vec<f64>,
    shapes: Vec<Vec<usize>>,
}

impl ParamVector {
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Shapes of the constituent parameter arrays, in layer order.
    pub fn segment_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// `(offset, length)` of segment `i` within the flat data.
    pub fn segment_bounds(&self, i: usize) -> (usize, usize) {
        let mut offset = 0;
        for shape in &self.shapes[..i] {
            offset += shape.iter().product::<usize>();
        }
        (offset, self.shapes[i].iter().product())
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.shapes == other.shapes
    }

    /// Elementwise sum; layouts must match.
    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        if !self.same_layout(other) {
            return Err(Error::Dimension {
                op: "param_add",
                lhs: format!("{:?}", self.shapes),
                rhs: format!("{:?}", other.shapes),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(ParamVector {
            data,
            shapes: self.shapes.clone(),
        })
    }
}

/// Per-layer activations recorded by a cached forward pass. Valid only while
/// the model parameters are unchanged.
pub struct ForwardCache {
    version: u64,
    batch: usize,
    entries: Vec<CacheEntry>,
}

enum CacheEntry {
    Flatten { original_shape: Vec<usize> },
    Affine { input: RealArray },
    Conv { input: RealArray },
    Relu { input: RealArray },
    MaxPool { mask: ArgmaxMask },
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    arch: Arch,
    input_shape: InputShape,
    num_classes: usize,
    layers: Vec<Layer>,
    version: u64,
}

impl Model {
    /// Constructs one of the three architectures with He-uniform weights
    /// drawn from `init_seed` and zero biases.
    pub fn build(
        arch: Arch,
        input_shape: InputShape,
        num_classes: usize,
        init_seed: u64,
    ) -> Result<Model> {
        if num_classes < 2 {
            return Err(Error::Construction(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let mut rng = Rng::from_seed(init_seed);
        let layers = match arch {
            Arch::Nn2 | Arch::Nn3 => {
                let d = input_shape.element_count();
                if d == 0 {
                    return Err(Error::Construction("empty input shape".into()));
                }
                let hidden = if arch == Arch::Nn2 { 2 } else { 3 };
                let mut layers = vec![Layer::Flatten];
                let mut fan_in = d;
                for _ in 0..hidden {
                    layers.push(affine_layer(fan_in, HIDDEN_WIDTH, &mut rng));
                    layers.push(Layer::Relu);
                    fan_in = HIDDEN_WIDTH;
                }
                layers.push(affine_layer(fan_in, num_classes, &mut rng));
                layers
            }
            Arch::LeNet => {
                let channels = match input_shape {
                    InputShape::Image {
                        channels,
                        height: 28,
                        width: 28,
                    } => channels,
                    other => {
                        return Err(Error::Construction(format!(
                            "LeNet requires a 28x28 image input, got {other:?}"
                        )))
                    }
                };
                vec![
                    conv_layer(6, channels, 5, 1, 2, &mut rng),
                    Layer::Relu,
                    Layer::MaxPool2x2,
                    conv_layer(16, 6, 5, 1, 0, &mut rng),
                    Layer::Relu,
                    Layer::MaxPool2x2,
                    Layer::Flatten,
                    affine_layer(400, 120, &mut rng),
                    Layer::Relu,
                    affine_layer(120, num_classes, &mut rng),
                ]
            }
        };
        Ok(Model {
            arch,
            input_shape,
            num_classes,
            layers,
            version: 0,
        })
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn input_shape(&self) -> InputShape {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn param_count(&self) -> usize {
        self.flatten_params().len()
    }

    /// Flattens all parameters in layer order (weights before bias within a
    /// layer).
    pub fn flatten_params(&self) -> ParamVector {
        let mut data = Vec::new();
        let mut shapes = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Affine { weights, bias } | Layer::Conv { kernels: weights, bias, .. } => {
                    shapes.push(weights.shape().to_vec());
                    data.extend_from_slice(weights.data());
                    shapes.push(bias.shape().to_vec());
                    data.extend_from_slice(bias.data());
                }
                _ => {}
            }
        }
        ParamVector { data, shapes }
    }

    /// Writes a flat parameter vector back into the layers. Invalidates any
    /// outstanding [`ForwardCache`].
    pub fn set_params(&mut self, params: &ParamVector) -> Result<()> {
        let current = self.flatten_params();
        if !current.same_layout(params) {
            return Err(Error::Dimension {
                op: "set_params",
                lhs: format!("{:?}", current.shapes),
                rhs: format!("{:?}", params.shapes),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            match layer {
                Layer::Affine { weights, bias } | Layer::Conv { kernels: weights, bias, .. } => {
                    for arr in [weights, bias] {
                        let n = arr.len();
                        arr.data_mut().copy_from_slice(&params.data[offset..offset + n]);
                        offset += n;
                    }
                }
                _ => {}
            }
        }
        self.version += 1;
        Ok(())
    }

    /// A zero gradient vector with this model's parameter layout.
    pub fn zero_grads(&self) -> ParamVector {
        let mut pv = self.flatten_params();
        pv.data.iter_mut().for_each(|v| *v = 0.0);
        pv
    }

    fn check_input(&self, x: &RealArray) -> Result<()> {
        let shape = x.shape();
        if shape.len() < 2 {
            return Err(Error::Dimension {
                op: "forward",
                lhs: format!("{shape:?}"),
                rhs: "a batched input".into(),
            });
        }
        let per_example: usize = shape[1..].iter().product();
        let ok = match self.input_shape {
            InputShape::Flat(d) => per_example == d,
            InputShape::Image {
                channels,
                height,
                width,
            } => shape[1..] == [channels, height, width],
        };
        if !ok {
            return Err(Error::Dimension {
                op: "forward",
                lhs: format!("{shape:?}"),
                rhs: format!("{:?}", self.input_shape),
            });
        }
        Ok(())
    }

    /// Deterministic layer-by-layer evaluation to logits `[N, L]`.
    pub fn forward(&self, x: &RealArray) -> Result<RealArray> {
        self.check_input(x)?;
        let mut current = x.clone();
        for layer in &self.layers {
            current = self.layer_forward(layer, current, None)?;
        }
        Ok(current)
    }

    /// Forward pass that also records the per-layer inputs needed by
    /// [`Model::backward`].
    pub fn forward_cached(&self, x: &RealArray) -> Result<(RealArray, ForwardCache)> {
        self.check_input(x)?;
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            current = self.layer_forward(layer, current, Some(&mut entries))?;
        }
        Ok((
            current,
            ForwardCache {
                version: self.version,
                batch: x.shape()[0],
                entries,
            },
        ))
    }

    fn layer_forward(
        &self,
        layer: &Layer,
        input: RealArray,
        cache: Option<&mut Vec<CacheEntry>>,
    ) -> Result<RealArray> {
        match layer {
            Layer::Flatten => {
                let shape = input.shape().to_vec();
                let n = shape[0];
                let rest: usize = shape[1..].iter().product();
                if let Some(c) = cache {
                    c.push(CacheEntry::Flatten {
                        original_shape: shape,
                    });
                }
                input.reshaped(vec![n, rest])
            }
            Layer::Affine { weights, bias } => {
                let out = affine_forward(&input, weights, bias)?;
                if let Some(c) = cache {
                    c.push(CacheEntry::Affine { input });
                }
                Ok(out)
            }
            Layer::Conv {
                kernels,
                bias,
                stride,
                pad,
            } => {
                let out = conv2d_forward(&input, kernels, bias, *stride, *pad)?;
                if let Some(c) = cache {
                    c.push(CacheEntry::Conv { input });
                }
                Ok(out)
            }
            Layer::Relu => {
                let out = relu_forward(&input);
                if let Some(c) = cache {
                    c.push(CacheEntry::Relu { input });
                }
                Ok(out)
            }
            Layer::MaxPool2x2 => {
                let (out, mask) = maxpool2x2_forward(&input)?;
                if let Some(c) = cache {
                    c.push(CacheEntry::MaxPool { mask });
                }
                Ok(out)
            }
        }
    }

    /// Backpropagates logit gradients through a cached forward pass,
    /// returning unscaled parameter gradients in [`ParamVector`] layout.
    pub fn backward(&self, cache: &ForwardCache, logit_grads: &RealArray) -> Result<ParamVector> {
        if cache.version != self.version {
            return Err(Error::State(
                "forward cache is stale: parameters changed since it was recorded".into(),
            ));
        }
        if cache.entries.len() != self.layers.len() {
            return Err(Error::State("forward cache does not match this model".into()));
        }
        if logit_grads.shape() != [cache.batch, self.num_classes] {
            return Err(Error::Dimension {
                op: "backward",
                lhs: format!("{:?}", logit_grads.shape()),
                rhs: format!("[{}, {}]", cache.batch, self.num_classes),
            });
        }

        let mut upstream = logit_grads.clone();
        let mut per_layer: Vec<Vec<RealArray>> = Vec::with_capacity(self.layers.len());
        for (layer, entry) in self.layers.iter().zip(&cache.entries).rev() {
            match (layer, entry) {
                (Layer::Flatten, CacheEntry::Flatten { original_shape }) => {
                    upstream = upstream.reshaped(original_shape.clone())?;
                    per_layer.push(Vec::new());
                }
                (Layer::Affine { weights, .. }, CacheEntry::Affine { input }) => {
                    let g = affine_backward(input, weights, &upstream)?;
                    upstream = g.input_grad;
                    per_layer.push(g.param_grads);
                }
                (
                    Layer::Conv {
                        kernels,
                        stride,
                        pad,
                        ..
                    },
                    CacheEntry::Conv { input },
                ) => {
                    let g = conv2d_backward(input, kernels, *stride, *pad, &upstream)?;
                    upstream = g.input_grad;
                    per_layer.push(g.param_grads);
                }
                (Layer::Relu, CacheEntry::Relu { input }) => {
                    upstream = relu_backward(input, &upstream)?;
                    per_layer.push(Vec::new());
                }
                (Layer::MaxPool2x2, CacheEntry::MaxPool { mask }) => {
                    upstream = maxpool2x2_backward(mask, &upstream)?;
                    per_layer.push(Vec::new());
                }
                _ => return Err(Error::State("forward cache does not match this model".into())),
            }
        }

        per_layer.reverse();
        let mut data = Vec::new();
        let mut shapes = Vec::new();
        for grads in per_layer {
            for g in grads {
                shapes.push(g.shape().to_vec());
                data.extend_from_slice(g.data());
            }
        }
        Ok(ParamVector { data, shapes })
    }

    /// Writes a versioned binary checkpoint: magic, architecture id, shape
    /// header, then the parameters as little-endian doubles in
    /// [`ParamVector`] order.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.push(self.arch.id());
        match self.input_shape {
            InputShape::Flat(d) => {
                buf.push(0);
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            InputShape::Image {
                channels,
                height,
                width,
            } => {
                buf.push(1);
                for v in [channels, height, width] {
                    buf.extend_from_slice(&(v as u32).to_le_bytes());
                }
            }
        }
        buf.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        let params = self.flatten_params();
        buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for v in params.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, buf)?;
        Ok(())
    }

    /// Loads a checkpoint written by [`Model::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<Model> {
        let mut file = fs::File::open(path)?;
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Input(format!(
                "bad checkpoint magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"
            )));
        }
        let mut byte = [0u8; 1];
        file.read_exact(&mut byte)?;
        let arch = Arch::from_id(byte[0])?;
        file.read_exact(&mut byte)?;
        let input_shape = match byte[0] {
            0 => InputShape::Flat(read_u32(&mut file)? as usize),
            1 => InputShape::Image {
                channels: read_u32(&mut file)? as usize,
                height: read_u32(&mut file)? as usize,
                width: read_u32(&mut file)? as usize,
            },
            other => return Err(Error::Input(format!("unknown input shape kind {other}"))),
        };
        let num_classes = read_u32(&mut file)? as usize;
        let mut count_bytes = [0u8; 8];
        file.read_exact(&mut count_bytes)?;
        let count = u64::from_le_bytes(count_bytes) as usize;

        let mut model = Model::build(arch, input_shape, num_classes, 0)?;
        let mut params = model.flatten_params();
        if params.len() != count {
            return Err(Error::Length {
                expected: params.len(),
                actual: count,
            });
        }
        let mut raw = vec![0u8; count * 8];
        file.read_exact(&mut raw)?;
        for (dst, chunk) in params.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        }
        model.set_params(&params)?;
        Ok(model)
    }
}

fn read_u32(file: &mut fs::File) -> Result<u32> {
    let mut bytes = [0u8; 4];
    file.read_exact(&mut bytes)?;
    Ok(u32::from_le_bytes(bytes))
}

fn affine_layer(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Layer {
    let mut weights = RealArray::zeros(vec![fan_in, fan_out]);
    weights.fill_he_uniform(fan_in, rng);
    Layer::Affine {
        weights,
        bias: RealArray::zeros(vec![fan_out]),
    }
}

fn conv_layer(
    filters: usize,
    channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    rng: &mut Rng,
) -> Layer {
    let mut kernels = RealArray::zeros(vec![filters, channels, kernel, kernel]);
    kernels.fill_he_uniform(channels * kernel * kernel, rng);
    Layer::Conv {
        kernels,
        bias: RealArray::zeros(vec![filters]),
        stride,
        pad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax_cross_entropy;
    use crate::nn::testutil::random_array;

    fn image_28() -> InputShape {
        InputShape::Image {
            channels: 1,
            height: 28,
            width: 28,
        }
    }

    #[test]
    fn nn2_parameter_count() {
        let m = Model::build(Arch::Nn2, InputShape::Flat(784), 10, 1).unwrap();
        assert_eq!(m.param_count(), 269_322);
    }

    #[test]
    fn lenet_first_conv_parameter_count() {
        let m = Model::build(Arch::LeNet, image_28(), 10, 1).unwrap();
        let pv = m.flatten_params();
        let (offset, len) = pv.segment_bounds(0);
        assert_eq!(offset, 0);
        // kernels 6*1*5*5 plus the bias segment of 6
        let (_, bias_len) = pv.segment_bounds(1);
        assert_eq!(len + bias_len, 156);
        assert_eq!(m.param_count(), 51_902);
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let a = Model::build(Arch::Nn3, InputShape::Flat(784), 10, 99).unwrap();
        let b = Model::build(Arch::Nn3, InputShape::Flat(784), 10, 99).unwrap();
        assert_eq!(a.flatten_params(), b.flatten_params());
        let c = Model::build(Arch::Nn3, InputShape::Flat(784), 10, 100).unwrap();
        assert_ne!(a.flatten_params(), c.flatten_params());
    }

    #[test]
    fn flatten_unflatten_roundtrip_all_archs() {
        for (arch, shape) in [
            (Arch::Nn2, InputShape::Flat(784)),
            (Arch::Nn3, InputShape::Flat(784)),
            (Arch::LeNet, image_28()),
        ] {
            let mut m = Model::build(arch, shape, 10, 5).unwrap();
            let pv = m.flatten_params();
            m.set_params(&pv).unwrap();
            assert_eq!(m.flatten_params(), pv);
        }
    }

    #[test]
    fn zeroed_final_layer_gives_equal_logits_per_row() {
        let mut m = Model::build(Arch::Nn2, InputShape::Flat(20), 7, 3).unwrap();
        let mut pv = m.flatten_params();
        let n_segments = pv.segment_shapes().len();
        for seg in [n_segments - 2, n_segments - 1] {
            let (offset, len) = pv.segment_bounds(seg);
            pv.data_mut()[offset..offset + len].fill(0.0);
        }
        m.set_params(&pv).unwrap();
        let mut rng = Rng::from_seed(8);
        let x = random_array(&[4, 20], &mut rng);
        let logits = m.forward(&x).unwrap();
        for row in logits.data().chunks_exact(7) {
            assert!(row.iter().all(|&v| v == row[0]));
        }
    }

    #[test]
    fn single_example_equals_batched_row() {
        let m = Model::build(Arch::LeNet, image_28(), 10, 12).unwrap();
        let mut rng = Rng::from_seed(4);
        let batch = random_array(&[3, 1, 28, 28], &mut rng);
        let batched = m.forward(&batch).unwrap();
        for i in 0..3 {
            let single = RealArray::from_vec(
                vec![1, 1, 28, 28],
                batch.data()[i * 784..(i + 1) * 784].to_vec(),
            )
            .unwrap();
            let row = m.forward(&single).unwrap();
            assert_eq!(row.data(), &batched.data()[i * 10..(i + 1) * 10]);
        }
    }

    #[test]
    fn nn2_matches_hand_composed_ops() {
        let m = Model::build(Arch::Nn2, InputShape::Flat(6), 3, 77).unwrap();
        let pv = m.flatten_params();
        let mut rng = Rng::from_seed(6);
        let x = random_array(&[2, 6], &mut rng);

        let seg = |i: usize| {
            let (offset, len) = pv.segment_bounds(i);
            RealArray::from_vec(
                pv.segment_shapes()[i].clone(),
                pv.data()[offset..offset + len].to_vec(),
            )
            .unwrap()
        };
        let h1 = relu_forward(&affine_forward(&x, &seg(0), &seg(1)).unwrap());
        let h2 = relu_forward(&affine_forward(&h1, &seg(2), &seg(3)).unwrap());
        let logits = affine_forward(&h2, &seg(4), &seg(5)).unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), logits.data());
    }

    #[test]
    fn permuting_batch_rows_permutes_logits() {
        let m = Model::build(Arch::Nn2, InputShape::Flat(8), 4, 2).unwrap();
        let mut rng = Rng::from_seed(10);
        let x = random_array(&[5, 8], &mut rng);
        let perm = [3usize, 0, 4, 1, 2];
        let permuted_data: Vec<f64> = perm
            .iter()
            .flat_map(|&p| x.data()[p * 8..(p + 1) * 8].to_vec())
            .collect();
        let xp = RealArray::from_vec(vec![5, 8], permuted_data).unwrap();
        let logits = m.forward(&x).unwrap();
        let logits_p = m.forward(&xp).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(
                &logits_p.data()[i * 4..(i + 1) * 4],
                &logits.data()[p * 4..(p + 1) * 4]
            );
        }
    }

    #[test]
    fn zero_logit_grads_give_zero_params() {
        let m = Model::build(Arch::LeNet, image_28(), 10, 3).unwrap();
        let mut rng = Rng::from_seed(2);
        let x = random_array(&[2, 1, 28, 28], &mut rng);
        let (_, cache) = m.forward_cached(&x).unwrap();
        let grads = m
            .backward(&cache, &RealArray::zeros(vec![2, 10]))
            .unwrap();
        assert!(grads.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut m = Model::build(Arch::Nn2, InputShape::Flat(8), 4, 2).unwrap();
        let mut rng = Rng::from_seed(20);
        let x = random_array(&[2, 8], &mut rng);
        let (_, cache) = m.forward_cached(&x).unwrap();
        let pv = m.flatten_params();
        m.set_params(&pv).unwrap(); // bumps version even with equal values
        let err = m.backward(&cache, &RealArray::zeros(vec![2, 4]));
        assert!(matches!(err, Err(Error::State(_))));
    }

    #[test]
    fn batch_gradient_is_sum_of_subbatch_gradients() {
        let m = Model::build(Arch::Nn2, InputShape::Flat(12), 5, 9).unwrap();
        let mut rng = Rng::from_seed(30);
        let x = random_array(&[6, 12], &mut rng);
        let labels: Vec<usize> = (0..6).map(|i| i % 5 + 1).collect();

        let grad_of = |xa: &RealArray, labels: &[usize]| {
            let (logits, cache) = m.forward_cached(xa).unwrap();
            let (_, lg) = softmax_cross_entropy(&logits, labels).unwrap();
            m.backward(&cache, &lg).unwrap()
        };

        let whole = grad_of(&x, &labels);
        let first = RealArray::from_vec(vec![3, 12], x.data()[..36].to_vec()).unwrap();
        let second = RealArray::from_vec(vec![3, 12], x.data()[36..].to_vec()).unwrap();
        let sum = grad_of(&first, &labels[..3]).add(&grad_of(&second, &labels[3..])).unwrap();
        for (a, b) in whole.data().iter().zip(sum.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tgm");
        let m = Model::build(Arch::LeNet, image_28(), 10, 123).unwrap();
        m.save_checkpoint(&path).unwrap();
        let loaded = Model::load_checkpoint(&path).unwrap();
        assert_eq!(loaded.arch(), m.arch());
        assert_eq!(loaded.flatten_params(), m.flatten_params());
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tgm");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(Model::load_checkpoint(&path).is_err());
    }
}
