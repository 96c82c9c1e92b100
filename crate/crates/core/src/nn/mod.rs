//! Small trainable encoders with hand-written reverse-mode gradients.

mod adam;
mod checkpoint;
mod encode;

use ndarray::{s, Array1, Array2, ArrayD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use encode::{encode_one_hot, encode_signed, BraidEncoder, InputEncoding, Scheme, SignedScaler};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("word has {len} letters but the encoding holds {max}")]
    TooLong { len: usize, max: usize },
    #[error("letter {letter} needs more than {strands} strands")]
    LetterOutOfRange { letter: i32, strands: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    LeakyRelu,
    Gelu,
    Identity,
}

const LEAKY_SLOPE: f64 = 0.01;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            // tanh approximation
            Activation::Gelu => 0.5 * z * (1.0 + (GELU_C * (z + 0.044715 * z * z * z)).tanh()),
            Activation::Identity => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Gelu => {
                let inner = GELU_C * (z + 0.044715 * z * z * z);
                let th = inner.tanh();
                let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * z * z);
                0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * dinner
            }
            Activation::Identity => 1.0,
        }
    }
}

fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

/// Fully connected layer `act(x W^T + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let weight = uniform_matrix(output, input, input, rng);
        let bias = uniform_matrix(1, output, input, rng).remove_axis(Axis(0));
        Self { weight, bias, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn pre_activation(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// `dims = [input, hidden..., output]`; hidden layers use `hidden_act`,
    /// the output layer is linear.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], hidden_act: Activation, rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let act = if i + 2 == dims.len() { Activation::Identity } else { hidden_act };
                Dense::new(d[0], d[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for layer in &self.layers {
            let act = layer.activation;
            h = layer.pre_activation(&h).mapv_into(|z| act.apply(z));
        }
        h
    }

    fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut cache = MlpCache { inputs: Vec::new(), pre: Vec::new() };
        let mut h = x.clone();
        for layer in &self.layers {
            let z = layer.pre_activation(&h);
            let act = layer.activation;
            let out = z.mapv(|v| act.apply(v));
            cache.inputs.push(h);
            cache.pre.push(z);
            h = out;
        }
        (h, cache)
    }

    /// Returns `[dW_0, db_0, dW_1, ...]` and the gradient with respect to
    /// the input.
    fn backward(&self, cache: &MlpCache, dout: &Array2<f64>) -> (Vec<ArrayD<f64>>, Array2<f64>) {
        let mut grads = Vec::with_capacity(2 * self.layers.len());
        let mut d = dout.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let mut dz = d;
            Zip::from(&mut dz).and(&cache.pre[i]).for_each(|g, &z| *g *= act.derivative(z));
            let dw = dz.t().dot(&cache.inputs[i]);
            let db = dz.sum_axis(Axis(0));
            d = dz.dot(&layer.weight);
            grads.push(db.into_dyn());
            grads.push(dw.into_dyn());
        }
        grads.reverse();
        (grads, d)
    }

    fn params_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.view_mut().into_dyn(), l.bias.view_mut().into_dyn()])
            .collect()
    }

    fn params(&self) -> Vec<ArrayD<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.clone().into_dyn(), l.bias.clone().into_dyn()])
            .collect()
    }
}

/// Periodic 1-D convolution whose filters span the whole input, followed by
/// mean pooling over positions and an MLP head. Rotating the input only
/// permutes the positions, so the pooled features are rotation invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularConv {
    /// One row per filter, `input_len` taps each.
    pub filters: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub head: Mlp,
}

struct ConvCache {
    circulant: Array2<f64>,
    pre: Array2<f64>,
    head: MlpCache,
}

impl CircularConv {
    pub fn new<R: Rng + ?Sized>(
        input_len: usize,
        n_filters: usize,
        activation: Activation,
        head_dims: &[usize],
        head_act: Activation,
        rng: &mut R,
    ) -> Self {
        let filters = uniform_matrix(n_filters, input_len, input_len, rng);
        let bias = uniform_matrix(1, n_filters, input_len, rng).remove_axis(Axis(0));
        let mut dims = vec![n_filters];
        dims.extend_from_slice(head_dims);
        Self { filters, bias, activation, head: Mlp::new(&dims, head_act, rng) }
    }

    pub fn input_len(&self) -> usize {
        self.filters.ncols()
    }

    /// Row `b * L + s` holds sample `b` rotated left by `s`.
    fn circulant(x: &Array2<f64>) -> Array2<f64> {
        let (batch, len) = x.dim();
        let mut c = Array2::zeros((batch * len, len));
        for b in 0..batch {
            for s in 0..len {
                let mut row = c.row_mut(b * len + s);
                for k in 0..len {
                    row[k] = x[[b, (s + k) % len]];
                }
            }
        }
        c
    }

    fn pool(&self, activated: &Array2<f64>, batch: usize) -> Array2<f64> {
        let len = self.input_len();
        let f = self.filters.nrows();
        let mut pooled = Array2::zeros((batch, f));
        for b in 0..batch {
            let block = activated.slice(s![b * len..(b + 1) * len, ..]);
            pooled.row_mut(b).assign(&block.mean_axis(Axis(0)).expect("nonempty input"));
        }
        pooled
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, ConvCache) {
        let circulant = Self::circulant(x);
        let pre = circulant.dot(&self.filters.t()) + &self.bias;
        let act = self.activation;
        let activated = pre.mapv(|z| act.apply(z));
        let pooled = self.pool(&activated, x.nrows());
        let (out, head) = self.head.forward_cached(&pooled);
        (out, ConvCache { circulant, pre, head })
    }

    fn backward(&self, cache: &ConvCache, dout: &Array2<f64>) -> Vec<ArrayD<f64>> {
        let (head_grads, dpooled) = self.head.backward(&cache.head, dout);
        let len = self.input_len();
        let act = self.activation;
        let mut dz = Array2::zeros(cache.pre.dim());
        for (r, mut row) in dz.rows_mut().into_iter().enumerate() {
            let b = r / len;
            for (f, g) in row.iter_mut().enumerate() {
                *g = dpooled[[b, f]] / len as f64 * act.derivative(cache.pre[[r, f]]);
            }
        }
        let dfilters = dz.t().dot(&cache.circulant);
        let dbias = dz.sum_axis(Axis(0));
        let mut grads = vec![dfilters.into_dyn(), dbias.into_dyn()];
        grads.extend(head_grads);
        grads
    }
}

/// Architecture description stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Mlp {
        input_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        embedding_dim: usize,
    },
    CircularConv {
        input_len: usize,
        filters: usize,
        conv_activation: Activation,
        hidden: Vec<usize>,
        activation: Activation,
        embedding_dim: usize,
    },
}

impl Architecture {
    /// Two hidden layers of 64 tanh units.
    pub fn default_mlp(input_dim: usize, embedding_dim: usize) -> Self {
        Architecture::Mlp { input_dim, hidden: vec![64, 64], activation: Activation::Tanh, embedding_dim }
    }

    /// 64 leaky-relu filters followed by a 2x64 tanh head.
    pub fn default_conv(input_len: usize, embedding_dim: usize) -> Self {
        Architecture::CircularConv {
            input_len,
            filters: 64,
            conv_activation: Activation::LeakyRelu,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            embedding_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Mlp { input_dim, .. } => *input_dim,
            Architecture::CircularConv { input_len, .. } => *input_len,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            Architecture::Mlp { embedding_dim, .. } | Architecture::CircularConv { embedding_dim, .. } => {
                *embedding_dim
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::Mlp { .. } => "mlp",
            Architecture::CircularConv { .. } => "circular-conv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Mlp(Mlp),
    Conv(CircularConv),
}

/// Opaque forward state needed by [`Encoder::backward`].
pub struct ForwardCache(CacheKind);

enum CacheKind {
    Mlp(MlpCache),
    Conv(ConvCache),
}

/// Parameter-shaped gradients, in [`Encoder::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<ArrayD<f64>>);

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flat_map(|g| g.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        match arch {
            Architecture::Mlp { input_dim, hidden, activation, embedding_dim } => {
                let mut dims = vec![*input_dim];
                dims.extend_from_slice(hidden);
                dims.push(*embedding_dim);
                Encoder::Mlp(Mlp::new(&dims, *activation, rng))
            }
            Architecture::CircularConv {
                input_len,
                filters,
                conv_activation,
                hidden,
                activation,
                embedding_dim,
            } => {
                let mut head = hidden.clone();
                head.push(*embedding_dim);
                Encoder::Conv(CircularConv::new(
                    *input_len,
                    *filters,
                    *conv_activation,
                    &head,
                    *activation,
                    rng,
                ))
            }
        }
    }

    pub fn architecture(&self) -> Architecture {
        let hidden_of = |m: &Mlp| -> (Vec<usize>, Activation) {
            let n = m.layers.len();
            let hidden = m.layers[..n - 1].iter().map(Dense::output_dim).collect();
            let act = m.layers.first().filter(|_| n > 1).map_or(Activation::Tanh, |l| l.activation);
            (hidden, act)
        };
        match self {
            Encoder::Mlp(m) => {
                let (hidden, activation) = hidden_of(m);
                Architecture::Mlp {
                    input_dim: m.input_dim(),
                    hidden,
                    activation,
                    embedding_dim: m.output_dim(),
                }
            }
            Encoder::Conv(c) => {
                let (hidden, activation) = hidden_of(&c.head);
                Architecture::CircularConv {
                    input_len: c.input_len(),
                    filters: c.filters.nrows(),
                    conv_activation: c.activation,
                    hidden,
                    activation,
                    embedding_dim: c.head.output_dim(),
                }
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::Mlp(m) => m.input_dim(),
            Encoder::Conv(c) => c.input_len(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            Encoder::Mlp(m) => m.output_dim(),
            Encoder::Conv(c) => c.head.output_dim(),
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "input width {} but encoder expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Embeds every row of `x`.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x)?;
        Ok(match self {
            Encoder::Mlp(m) => m.forward(x),
            Encoder::Conv(c) => c.forward(x),
        })
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row");
        Ok(self.forward(&row)?.row(0).to_vec())
    }

    pub fn forward_train(&self, x: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check_input(x)?;
        Ok(match self {
            Encoder::Mlp(m) => {
                let (out, c) = m.forward_cached(x);
                (out, ForwardCache(CacheKind::Mlp(c)))
            }
            Encoder::Conv(conv) => {
                let (out, c) = conv.forward_cached(x);
                (out, ForwardCache(CacheKind::Conv(c)))
            }
        })
    }

    /// Backpropagates `dout`, the loss gradient with respect to the
    /// embeddings returned by [`Encoder::forward_train`].
    pub fn backward(&self, cache: &ForwardCache, dout: &Array2<f64>) -> Gradients {
        match (self, &cache.0) {
            (Encoder::Mlp(m), CacheKind::Mlp(c)) => Gradients(m.backward(c, dout).0),
            (Encoder::Conv(conv), CacheKind::Conv(c)) => Gradients(conv.backward(c, dout)),
            _ => panic!("forward cache belongs to a different encoder kind"),
        }
    }

    /// Loss value and exact gradient. `loss_fn` maps the batch embeddings to
    /// the loss and its gradient with respect to those embeddings.
    pub fn gradients<F>(&self, x: &Array2<f64>, loss_fn: F) -> Result<(f64, Gradients), NnError>
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        let (out, cache) = self.forward_train(x)?;
        let (loss, dout) = loss_fn(&out);
        if dout.dim() != out.dim() {
            return Err(NnError::ShapeMismatch(format!(
                "loss gradient {:?} vs embeddings {:?}",
                dout.dim(),
                out.dim()
            )));
        }
        Ok((loss, self.backward(&cache, &dout)))
    }

    pub fn parameters(&self) -> Vec<ArrayD<f64>> {
        match self {
            Encoder::Mlp(m) => m.params(),
            Encoder::Conv(c) => {
                let mut p = vec![c.filters.clone().into_dyn(), c.bias.clone().into_dyn()];
                p.extend(c.head.params());
                p
            }
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        match self {
            Encoder::Mlp(m) => m.params_mut(),
            Encoder::Conv(c) => {
                let mut p = vec![c.filters.view_mut().into_dyn(), c.bias.view_mut().into_dyn()];
                p.extend(c.head.params_mut());
                p
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Overwrites all parameters from tensors in [`Encoder::parameters`] order.
    pub fn set_parameters(&mut self, values: &[ArrayD<f64>]) -> Result<(), NnError> {
        let mut params = self.parameters_mut();
        if params.len() != values.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} tensors for {} parameters",
                values.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.shape() != v.shape() {
                return Err(NnError::ShapeMismatch(format!("{:?} vs {:?}", p.shape(), v.shape())));
            }
            p.assign(v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_the_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mlp = Mlp::new(&[3, 2], Activation::Tanh, &mut rng);
        mlp.layers[0].weight.fill(0.0);
        mlp.layers[0].bias = Array1::from(vec![0.5, -2.0]);
        let out = mlp.forward(&Array2::from_shape_vec((2, 3), vec![1., 2., 3., -4., 5., 6.]).unwrap());
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![0.5, -2.0]);
        }
    }

    #[test]
    fn architecture_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for arch in [Architecture::default_mlp(20, 16), Architecture::default_conv(20, 16)] {
            let enc = Encoder::new(&arch, &mut rng);
            assert_eq!(enc.architecture(), arch);
            assert_eq!(enc.embedding_dim(), 16);
        }
    }

    #[test]
    fn default_mlp_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::new(&Architecture::default_mlp(30, 16), &mut rng);
        assert_eq!(enc.parameter_count(), 30 * 64 + 64 + 64 * 64 + 64 + 64 * 16 + 16);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::new(&Architecture::default_mlp(4, 2), &mut rng);
        assert!(matches!(enc.forward(&Array2::zeros((1, 5))), Err(NnError::ShapeMismatch(_))));
    }
}
