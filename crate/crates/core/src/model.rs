//! Sequential networks assembled from [`LayerSpec`]s.

use rand::Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::layers::standard::{
    add_bias, bias_grad, fully_connected_backward, fully_connected_forward, maxpool2x2_backward, maxpool2x2_forward,
    relu_backward, relu_forward, BatchNorm, BatchNormCache,
};
use crate::layers::{
    rad_backward, rad_forward, ring_backward, ring_forward, rsdw_backward, rsdw_forward_with_activations, LayerKind,
    LayerSpec, RingState, RsdwActivations, RsdwParams,
};
use crate::ring_geometry::{RadialWeights, RingWeights};
use crate::scalar::Real;
use crate::tensor::{conv2d_backward, conv2d_forward, global_avg_pool, global_avg_pool_backward, FilterBank, Tensor4};
use crate::trainer::glorot_uniform;

/// A named parameter tensor with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    /// Running statistics are stored and checkpointed but not optimized.
    pub trainable: bool,
}

impl<T: Real> Param<T> {
    fn new(name: &'static str, shape: Vec<usize>, trainable: bool) -> Self {
        let len = shape.iter().product();
        Self {
            name,
            shape,
            value: vec![T::zero(); len],
            grad: vec![T::zero(); len],
            trainable,
        }
    }

    fn filled(mut self, v: T) -> Self {
        self.value.fill(v);
        self
    }
}

#[derive(Clone, Debug, Default)]
enum Cache<T> {
    #[default]
    Empty,
    Input(Tensor4<T>),
    Rsdw(Tensor4<T>, RsdwActivations<T>),
    Ring(Tensor4<T>, RingState),
    BatchNorm(BatchNormCache<T>),
    MaxPool(Vec<usize>, [usize; 4]),
    Dims([usize; 4]),
}

/// One layer of a [`Model`].
#[derive(Clone, Debug)]
pub struct Layer<T> {
    spec: LayerSpec,
    params: Vec<Param<T>>,
    cache: Cache<T>,
}

impl<T: Real> Layer<T> {
    fn new(spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        let (k, cin, cout) = (spec.k, spec.in_channels, spec.out_channels);
        let bias = |params: &mut Vec<Param<T>>, n: usize| {
            if spec.has_bias {
                params.push(Param::new("bias", vec![n], true));
            }
        };
        let mut params = Vec::new();
        match spec.kind {
            LayerKind::Conv | LayerKind::Ring => {
                params.push(Param::new("weight", vec![cout, cin, k, k], true));
                bias(&mut params, cout);
            }
            LayerKind::Rad => {
                params.push(Param::new("weight", vec![cout, cin, spec.radius() + 1], true));
                bias(&mut params, cout);
            }
            LayerKind::Rsdw => {
                params.push(Param::new("expand", vec![spec.out1, cin, 1, 1], true));
                params.push(Param::new("radial", vec![spec.out1, spec.radius() + 1], true));
                params.push(Param::new("project", vec![cout, spec.out1, 1, 1], true));
                bias(&mut params, cout);
            }
            LayerKind::Batchnorm => {
                params.push(Param::new("gamma", vec![cin], true).filled(T::one()));
                params.push(Param::new("beta", vec![cin], true));
                params.push(Param::new("running_mean", vec![cin], false));
                params.push(Param::new("running_var", vec![cin], false).filled(T::one()));
            }
            LayerKind::FullyConnected => {
                params.push(Param::new("weight", vec![cout, cin], true));
                bias(&mut params, cout);
            }
            LayerKind::Relu | LayerKind::Maxpool | LayerKind::GlobalAvgPool => {}
        }
        Ok(Self {
            spec,
            params,
            cache: Cache::Empty,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    fn bias(&self) -> Option<&[T]> {
        self.params.iter().find(|p| p.name == "bias").map(|p| p.value.as_slice())
    }

    fn set_bias_grad(&mut self, grad: Vec<T>) {
        if let Some(p) = self.params.iter_mut().find(|p| p.name == "bias") {
            p.grad = grad;
        }
    }

    fn filters(&self) -> Result<FilterBank<T>> {
        let s = &self.spec;
        FilterBank::from_vec(s.out_channels, s.in_channels, s.k, self.params[0].value.clone())
    }

    fn radial(&self) -> Result<RadialWeights<T>> {
        let s = &self.spec;
        RadialWeights::from_vec(s.out_channels, s.in_channels, s.radius(), self.params[0].value.clone())
    }

    fn rsdw(&self) -> Result<RsdwParams<T>> {
        let s = &self.spec;
        Ok(RsdwParams {
            expand: FilterBank::from_vec(s.out1, s.in_channels, 1, self.params[0].value.clone())?,
            radial: RadialWeights::from_vec(s.out1, 1, s.radius(), self.params[1].value.clone())?,
            project: FilterBank::from_vec(s.out_channels, s.out1, 1, self.params[2].value.clone())?,
            bias: self.bias().map(<[T]>::to_vec),
        })
    }

    fn batchnorm(&self) -> BatchNorm<T> {
        let mut bn = BatchNorm::new(self.spec.in_channels);
        bn.gamma.clone_from(&self.params[0].value);
        bn.beta.clone_from(&self.params[1].value);
        bn.running_mean.clone_from(&self.params[2].value);
        bn.running_var.clone_from(&self.params[3].value);
        bn
    }

    /// Inference-mode forward pass; leaves no state behind.
    pub fn forward_eval(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let s = &self.spec;
        let (stride, pad) = (s.stride, s.padding());
        match s.kind {
            LayerKind::Conv => {
                let mut y = conv2d_forward(x, &self.filters()?, stride, pad)?;
                if let Some(b) = self.bias() {
                    add_bias(&mut y, b)?;
                }
                Ok(y)
            }
            LayerKind::Rad => rad_forward(x, &self.radial()?, self.bias(), stride, pad),
            LayerKind::Rsdw => Ok(rsdw_forward_with_activations(x, &self.rsdw()?, stride, pad)?.0),
            LayerKind::Ring => Ok(ring_forward(x, &RingWeights::new(self.filters()?)?, self.bias(), stride, pad)?.0),
            LayerKind::Relu => Ok(relu_forward(x)),
            LayerKind::Batchnorm => self.batchnorm().forward_eval(x),
            LayerKind::Maxpool => Ok(maxpool2x2_forward(x)?.0),
            LayerKind::GlobalAvgPool => Ok(global_avg_pool(x)),
            LayerKind::FullyConnected => {
                ensure_dim("fully_connected", "input features", s.in_channels, x.c() * x.plane_len())?;
                fully_connected_forward(x, &self.params[0].value, self.bias(), s.out_channels)
            }
        }
    }

    /// Training-mode forward pass; batch normalization uses batch statistics
    /// and updates its running averages, and every layer keeps what its
    /// backward pass needs.
    fn forward_train(&mut self, x: Tensor4<T>) -> Result<Tensor4<T>> {
        let s = self.spec.clone();
        let (stride, pad) = (s.stride, s.padding());
        let (y, cache) = match s.kind {
            LayerKind::Conv | LayerKind::Rad | LayerKind::Relu | LayerKind::FullyConnected => {
                (self.forward_eval(&x)?, Cache::Input(x))
            }
            LayerKind::Rsdw => {
                let (y, acts) = rsdw_forward_with_activations(&x, &self.rsdw()?, stride, pad)?;
                (y, Cache::Rsdw(x, acts))
            }
            LayerKind::Ring => {
                let (y, state) = ring_forward(&x, &RingWeights::new(self.filters()?)?, self.bias(), stride, pad)?;
                (y, Cache::Ring(x, state))
            }
            LayerKind::Batchnorm => {
                let mut bn = self.batchnorm();
                let (y, cache) = bn.forward_train(&x)?;
                self.params[2].value = bn.running_mean;
                self.params[3].value = bn.running_var;
                (y, Cache::BatchNorm(cache))
            }
            LayerKind::Maxpool => {
                let (y, arg) = maxpool2x2_forward(&x)?;
                (y, Cache::MaxPool(arg, x.dims()))
            }
            LayerKind::GlobalAvgPool => (global_avg_pool(&x), Cache::Dims(x.dims())),
        };
        self.cache = cache;
        Ok(y)
    }

    /// Writes parameter gradients and returns the input gradient. Consumes
    /// the state of the preceding training-mode forward pass.
    fn backward(&mut self, grad: &Tensor4<T>) -> Result<Tensor4<T>> {
        let s = self.spec.clone();
        let (stride, pad) = (s.stride, s.padding());
        let cache = std::mem::take(&mut self.cache);
        let missing = || Error::StaleState(format!("{} layer: backward without a training forward pass", s.kind));
        match (s.kind, cache) {
            (LayerKind::Conv, Cache::Input(x)) => {
                let (gx, gf) = conv2d_backward(&x, &self.filters()?, grad, stride, pad)?;
                self.params[0].grad = gf.into_vec();
                self.set_bias_grad(bias_grad(grad));
                Ok(gx)
            }
            (LayerKind::Rad, Cache::Input(x)) => {
                let g = rad_backward(&x, &self.radial()?, grad, stride, pad)?;
                self.params[0].grad = g.weights.into_vec();
                self.set_bias_grad(g.bias);
                Ok(g.input)
            }
            (LayerKind::Rsdw, Cache::Rsdw(x, acts)) => {
                let g = rsdw_backward(&x, &self.rsdw()?, grad, stride, pad, Some(&acts))?;
                self.params[0].grad = g.expand.into_vec();
                self.params[1].grad = g.radial.into_vec();
                self.params[2].grad = g.project.into_vec();
                self.set_bias_grad(g.bias);
                Ok(g.input)
            }
            (LayerKind::Ring, Cache::Ring(x, state)) => {
                let g = ring_backward(&x, &RingWeights::new(self.filters()?)?, grad, &state, stride, pad)?;
                self.params[0].grad = g.weights.into_vec();
                self.set_bias_grad(g.bias);
                Ok(g.input)
            }
            (LayerKind::Relu, Cache::Input(x)) => relu_backward(&x, grad),
            (LayerKind::Batchnorm, Cache::BatchNorm(cache)) => {
                let (gx, gg, gb) = self.batchnorm().backward(grad, &cache)?;
                self.params[0].grad = gg;
                self.params[1].grad = gb;
                Ok(gx)
            }
            (LayerKind::Maxpool, Cache::MaxPool(arg, dims)) => maxpool2x2_backward(grad, &arg, dims),
            (LayerKind::GlobalAvgPool, Cache::Dims(d)) => Ok(global_avg_pool_backward(grad, d[2], d[3])),
            (LayerKind::FullyConnected, Cache::Input(x)) => {
                let (gx, gw) = fully_connected_backward(&x, &self.params[0].value, grad)?;
                self.params[0].grad = gw;
                self.set_bias_grad(bias_grad(grad));
                Ok(gx)
            }
            _ => Err(missing()),
        }
    }

    /// Glorot-uniform weights, zero biases, unit batchnorm scale.
    ///
    /// Fans are those of the dense filter a layer applies, so a radial
    /// weight that feeds several taps is drawn like one dense tap.
    fn init_glorot<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let s = self.spec.clone();
        let kk = s.k * s.k;
        for p in &mut self.params {
            let fans = match (s.kind, p.name) {
                (_, "bias") | (LayerKind::Batchnorm, _) => None,
                (LayerKind::Conv | LayerKind::Ring | LayerKind::Rad, "weight") => {
                    Some((s.in_channels * kk, s.out_channels * kk))
                }
                (LayerKind::Rsdw, "expand") => Some((s.in_channels, s.out1)),
                (LayerKind::Rsdw, "radial") => Some((kk, kk)),
                (LayerKind::Rsdw, "project") => Some((s.out1, s.out_channels)),
                (LayerKind::FullyConnected, "weight") => Some((s.in_channels, s.out_channels)),
                _ => None,
            };
            match fans {
                Some((fan_in, fan_out)) => p.value = glorot_uniform(p.value.len(), fan_in, fan_out, rng),
                None if p.name == "bias" => p.value.fill(T::zero()),
                None => {}
            }
        }
    }
}

/// A feed-forward stack of layers with a fixed input shape.
#[derive(Clone, Debug)]
pub struct Model<T> {
    input_shape: (usize, usize, usize),
    layers: Vec<Layer<T>>,
}

impl<T: Real> Model<T> {
    /// Builds a zero-initialized model, checking the channel and spatial
    /// chain for inputs of `(c, h, w)`.
    pub fn new(specs: &[LayerSpec], input_shape: (usize, usize, usize)) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("a model needs at least one layer"));
        }
        let mut shape = input_shape;
        let mut layers = Vec::with_capacity(specs.len());
        for (idx, spec) in specs.iter().enumerate() {
            shape = spec
                .output_shape(shape)
                .map_err(|e| Error::invalid(format!("layer {idx} ({}): {e}", spec.kind)))?;
            layers.push(Layer::new(spec.clone())?);
        }
        Ok(Self { input_shape, layers })
    }

    pub fn init_glorot<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            layer.init_glorot(rng);
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    /// `(c, h, w)` after every layer.
    pub fn shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut shape = self.input_shape;
        self.layers
            .iter()
            .map(|l| {
                shape = l.spec.output_shape(shape)?;
                Ok(shape)
            })
            .collect()
    }

    pub fn output_shape(&self) -> Result<(usize, usize, usize)> {
        Ok(*self.shapes()?.last().expect("non-empty model"))
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let (c, h, w) = self.input_shape;
        ensure_dim("model input", "channels", c, x.c())?;
        ensure_dim("model input", "height", h, x.h())?;
        ensure_dim("model input", "width", w, x.w())
    }

    pub fn forward_eval(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut y = x.clone();
        for layer in &self.layers {
            y = layer.forward_eval(&y)?;
        }
        Ok(y)
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut y = x.clone();
        for layer in &mut self.layers {
            y = layer.forward_train(y)?;
        }
        Ok(y)
    }

    /// Backpropagates `grad` (the loss gradient with respect to the output of
    /// the last [`Model::forward_train`]) and overwrites every parameter
    /// gradient. Returns the gradient with respect to the model input.
    pub fn backward(&mut self, grad: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &Param<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    /// `(layer.<idx>.<name>, param)` for every stored tensor.
    pub fn named_params(&self) -> Vec<(String, &Param<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params.iter().map(move |p| (format!("layer.{i}.{}", p.name), p)))
            .collect()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                spec: l.spec.clone(),
                params: l
                    .params
                    .iter()
                    .map(|p| Param {
                        name: p.name,
                        shape: p.shape.clone(),
                        value: p.value.iter().map(|v| U::lit(v.as_f64())).collect(),
                        grad: vec![U::zero(); p.grad.len()],
                        trainable: p.trainable,
                    })
                    .collect(),
                cache: Cache::Empty,
            })
            .collect();
        Model {
            input_shape: self.input_shape,
            layers,
        }
    }

    /// The spatial filter kind shared by every filter layer, if there is
    /// exactly one.
    pub fn filter_kind(&self) -> Option<LayerKind> {
        let mut kinds = self.layers.iter().map(|l| l.spec.kind).filter(|k| k.is_spatial_filter());
        let first = kinds.next()?;
        kinds.all(|k| k == first).then_some(first)
    }

    /// True when every filter layer is rotation-equivariant and all spatial
    /// structure is pooled away before the first fully connected layer.
    pub fn is_rotation_invariant(&self) -> bool {
        let mut pooled = false;
        for l in &self.layers {
            match l.spec.kind {
                LayerKind::Conv => return false,
                LayerKind::Rad | LayerKind::Rsdw | LayerKind::Ring if l.spec.stride != 1 => return false,
                LayerKind::GlobalAvgPool => pooled = true,
                LayerKind::FullyConnected if !pooled => return false,
                _ => {}
            }
        }
        pooled
    }
}

/// A small classification network:
/// `[filter → (batchnorm) → relu → maxpool] × (len(widths) − 1)`, a last
/// `filter → (batchnorm) → relu`, global average pooling and a fully
/// connected head.
pub fn small_cnn(kind: LayerKind, k: usize, in_channels: usize, widths: &[usize], classes: usize, batchnorm: bool) -> Result<Vec<LayerSpec>> {
    if widths.is_empty() {
        return Err(Error::invalid("small_cnn needs at least one width"));
    }
    let mut specs = Vec::new();
    let mut cin = in_channels;
    for (i, &w) in widths.iter().enumerate() {
        specs.push(match kind {
            LayerKind::Conv => LayerSpec::conv(k, cin, w),
            LayerKind::Rad => LayerSpec::rad(k, cin, w),
            LayerKind::Ring => LayerSpec::ring(k, cin, w),
            LayerKind::Rsdw => LayerSpec::rsdw(k, cin, w, w),
            other => return Err(Error::invalid(format!("{other} is not a filter layer"))),
        });
        if batchnorm {
            specs.push(LayerSpec::batchnorm(w));
        }
        specs.push(LayerSpec::relu());
        if i + 1 < widths.len() {
            specs.push(LayerSpec::maxpool());
        }
        cin = w;
    }
    specs.push(LayerSpec::global_avg_pool());
    specs.push(LayerSpec::fully_connected(cin, classes));
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcheck::{check_tensor_grad, check_vec_grad, FD_STEP};
    use crate::layers::standard::softmax_cross_entropy;
    use crate::tensor::rot90;

    fn loss_of(model: &Model<f64>, x: &Tensor4<f64>, labels: &[usize]) -> f64 {
        // Training-mode statistics without touching the caller's running stats.
        let mut m = model.clone();
        let y = m.forward_train(x).unwrap();
        softmax_cross_entropy(&y, labels).unwrap().0
    }

    #[test]
    fn end_to_end_gradcheck_for_every_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [LayerKind::Conv, LayerKind::Rad, LayerKind::Rsdw, LayerKind::Ring] {
            for k in [3, 5] {
                let specs = small_cnn(kind, k, 2, &[3, 4], 3, true).unwrap();
                let mut model = Model::<f64>::new(&specs, (2, 6, 6)).unwrap();
                model.init_glorot(&mut rng);
                let x = Tensor4::<f64>::random([3, 2, 6, 6], 1.0, &mut rng);
                let labels = [0, 2, 1];
                let y = model.forward_train(&x).unwrap();
                let (_, g) = softmax_cross_entropy(&y, &labels).unwrap();
                let gx = model.backward(&g).unwrap();
                let snapshot = model.clone();
                assert!(check_tensor_grad(&x, &gx, |x| loss_of(&snapshot, x, &labels), FD_STEP) < 1e-6, "{kind} k={k} input");
                for (li, layer) in snapshot.layers().iter().enumerate() {
                    for (pi, p) in layer.params().iter().enumerate().filter(|(_, p)| p.trainable) {
                        let err = check_vec_grad(
                            &p.value,
                            &p.grad,
                            |v| {
                                let mut m = snapshot.clone();
                                m.layers_mut()[li].params_mut()[pi].value.copy_from_slice(v);
                                loss_of(&m, &x, &labels)
                            },
                            FD_STEP,
                        );
                        assert!(err < 1e-6, "{kind} k={k} layer {li} {}: {err}", p.name);
                    }
                }
            }
        }
    }

    #[test]
    fn invariant_models_are_invariant_in_eval_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in [LayerKind::Rad, LayerKind::Rsdw, LayerKind::Ring] {
            let specs = small_cnn(kind, 5, 3, &[4, 6], 5, true).unwrap();
            let mut model = Model::<f64>::new(&specs, (3, 8, 8)).unwrap();
            model.init_glorot(&mut rng);
            // Move the running statistics away from their defaults.
            model.forward_train(&Tensor4::random([4, 3, 8, 8], 1.0, &mut rng)).unwrap();
            assert!(model.is_rotation_invariant());
            let x = Tensor4::<f64>::random([2, 3, 8, 8], 1.0, &mut rng);
            let y = model.forward_eval(&x).unwrap();
            for q in 1..4 {
                assert!(model.forward_eval(&rot90(&x, q)).unwrap().max_abs_diff(&y) < 1e-9);
            }
        }
        let conv = Model::<f64>::new(&small_cnn(LayerKind::Conv, 3, 3, &[4], 5, false).unwrap(), (3, 8, 8)).unwrap();
        assert!(!conv.is_rotation_invariant());
    }

    #[test]
    fn chain_errors_name_the_layer() {
        let specs = vec![LayerSpec::conv(3, 3, 8), LayerSpec::ring(3, 4, 8)];
        let err = Model::<f32>::new(&specs, (3, 8, 8)).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
        let specs = vec![LayerSpec::conv(3, 3, 8), LayerSpec::fully_connected(8, 2)];
        assert!(Model::<f32>::new(&specs, (3, 8, 8)).is_err());
    }

    #[test]
    fn glorot_init_respects_bounds_and_zero_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = vec![LayerSpec::rad(5, 3, 16), LayerSpec::relu(), LayerSpec::global_avg_pool(), LayerSpec::fully_connected(16, 10)];
        let mut m = Model::<f64>::new(&specs, (3, 8, 8)).unwrap();
        m.init_glorot(&mut rng);
        let rad_bound = (6.0f64 / (3.0 * 25.0 + 16.0 * 25.0)).sqrt();
        let rad = &m.layers()[0].params()[0];
        assert!(rad.value.iter().all(|v| v.abs() <= rad_bound));
        assert!(rad.value.iter().any(|&v| v != 0.0));
        for p in m.params().filter(|p| p.name == "bias") {
            assert!(p.value.iter().all(|&v| v == 0.0));
        }
        assert_eq!(m.trainable_param_count(), 16 * 3 * 3 + 16 + 160 + 10);
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut m = Model::<f64>::new(&[LayerSpec::relu()], (1, 2, 2)).unwrap();
        assert!(matches!(m.backward(&Tensor4::zeros(1, 1, 2, 2)), Err(Error::StaleState(_))));
    }
}
