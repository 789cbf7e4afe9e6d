//! Fully connected network: definition, bias-free forward pass with
//! activation traces, softmax/cross-entropy, accuracy, inverted dropout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{init_weights, InitScheme, Matrix};
use crate::rng::RandomStream;

/// Floor applied inside `ln` so a saturated softmax cannot produce -inf.
pub const LOG_FLOOR: f64 = 1e-12;

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    /// Conventional initialization pairing for this activation.
    pub fn default_init(self) -> InitScheme {
        match self {
            Activation::Relu => InitScheme::He,
            Activation::Tanh => InitScheme::Xavier,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative evaluated at the pre-activation value.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Forward-pass mode: `Train` draws dropout masks, `Eval` is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Architecture and initialization description of a network.
///
/// Layers are bias-free affine maps; the output activation is always
/// softmax. `layer_sizes` runs input, hidden..., output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub dropout_rate: f64,
    pub init_scheme: InitScheme,
    pub seed: u64,
}

impl NetworkSpec {
    /// Spec with the activation's conventional init scheme.
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<NetworkSpec> {
        let spec = NetworkSpec {
            layer_sizes,
            hidden_activation,
            dropout_rate,
            init_scheme: hidden_activation.default_init(),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(Error::InvalidArgument(
                "network needs at least one hidden layer (>= 3 layer sizes)".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight matrices.
    pub fn weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Number of hidden layers.
    pub fn hidden_layers(&self) -> usize {
        self.layer_sizes.len() - 2
    }
}

/// The trainable parameters plus the spec they were built for.
///
/// `weights[l]` has shape (layer_sizes[l+1] x layer_sizes[l]); rows are
/// postsynaptic nodes, columns presynaptic.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub weights: Vec<Matrix>,
}

impl NetworkState {
    /// Initialize from the spec's own seed.
    pub fn init(spec: &NetworkSpec) -> Result<NetworkState> {
        let mut rng = RandomStream::new(spec.seed);
        NetworkState::init_with(spec, &mut rng)
    }

    /// Initialize drawing from a caller-owned stream.
    pub fn init_with(spec: &NetworkSpec, rng: &mut RandomStream) -> Result<NetworkState> {
        spec.validate()?;
        let mut weights = Vec::with_capacity(spec.weight_layers());
        for l in 0..spec.weight_layers() {
            weights.push(init_weights(
                spec.layer_sizes[l + 1],
                spec.layer_sizes[l],
                spec.init_scheme,
                rng,
            )?);
        }
        Ok(NetworkState { spec: spec.clone(), weights })
    }

    /// Verify the weight chain matches the spec and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.spec.weight_layers() {
            return Err(Error::ShapeMismatch("weight count != spec layers".into()));
        }
        for (l, w) in self.weights.iter().enumerate() {
            let want = (self.spec.layer_sizes[l + 1], self.spec.layer_sizes[l]);
            if w.shape() != want {
                return Err(Error::ShapeMismatch(format!(
                    "weights[{l}] is {:?}, spec wants {:?}",
                    w.shape(),
                    want
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "weights[{l}] contains non-finite entries"
                )));
            }
        }
        Ok(())
    }
}

/// Everything the backward pass needs from one forward evaluation.
///
/// `pre_activations[l]` is a^(l+1) (one per weight layer); `post_activations`
/// holds the hidden h^l after dropout; `dropout_masks` is empty in eval mode
/// or when the rate is zero.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub pre_activations: Vec<Matrix>,
    pub post_activations: Vec<Matrix>,
    pub output: Matrix,
    pub dropout_masks: Vec<Matrix>,
}

/// Run the network on a batch (one sample per column).
///
/// Train mode draws one inverted-dropout mask per hidden layer from `rng`
/// (required iff the dropout rate is positive); eval mode draws nothing.
pub fn forward(
    state: &NetworkState,
    batch: &Matrix,
    mode: Mode,
    mut rng: Option<&mut RandomStream>,
) -> Result<ForwardTrace> {
    let spec = &state.spec;
    if batch.rows() != spec.input_size() {
        return Err(Error::ShapeMismatch(format!(
            "batch has {} features, network expects {}",
            batch.rows(),
            spec.input_size()
        )));
    }
    let dropout_active = mode == Mode::Train && spec.dropout_rate > 0.0;
    if dropout_active && rng.is_none() {
        return Err(Error::InvalidArgument(
            "train-mode forward with dropout needs a random stream".into(),
        ));
    }

    let layers = spec.weight_layers();
    let mut pre = Vec::with_capacity(layers);
    let mut post = Vec::with_capacity(layers - 1);
    let mut masks = Vec::new();

    for l in 0..layers {
        let below: &Matrix = if l == 0 { batch } else { &post[l - 1] };
        let a = state.weights[l].matmul(below)?;
        if l + 1 < layers {
            let mut h = a.map(|v| spec.hidden_activation.apply(v));
            if dropout_active {
                let rng = rng.as_deref_mut().unwrap();
                let keep_scale = 1.0 / (1.0 - spec.dropout_rate);
                let mask = Matrix::from_fn(h.rows(), h.cols(), |_, _| {
                    if rng.uniform() < spec.dropout_rate {
                        0.0
                    } else {
                        keep_scale
                    }
                });
                h = h.hadamard(&mask)?;
                masks.push(mask);
            }
            pre.push(a);
            post.push(h);
        } else {
            let y = softmax_columns(&a);
            pre.push(a);
            return Ok(ForwardTrace {
                input: batch.clone(),
                pre_activations: pre,
                post_activations: post,
                output: y,
                dropout_masks: masks,
            });
        }
    }
    unreachable!("spec guarantees at least one weight layer");
}

/// Numerically stable per-column softmax (max subtraction).
pub fn softmax_columns(logits: &Matrix) -> Matrix {
    let (rows, cols) = logits.shape();
    let mut out = Matrix::zeros(rows, cols);
    for c in 0..cols {
        let mut max = f64::NEG_INFINITY;
        for r in 0..rows {
            max = max.max(logits.get(r, c));
        }
        let mut sum = 0.0;
        for r in 0..rows {
            let e = (logits.get(r, c) - max).exp();
            out.set(r, c, e);
            sum += e;
        }
        for r in 0..rows {
            out.set(r, c, out.get(r, c) / sum);
        }
    }
    out
}

/// Mean cross-entropy over the batch; `y` columns must be distributions.
pub fn cross_entropy(y: &Matrix, targets_onehot: &Matrix) -> Result<f64> {
    if y.shape() != targets_onehot.shape() {
        return Err(Error::ShapeMismatch(format!(
            "predictions {:?} vs targets {:?}",
            y.shape(),
            targets_onehot.shape()
        )));
    }
    let (rows, cols) = y.shape();
    for c in 0..cols {
        let mut sum = 0.0;
        for r in 0..rows {
            let v = y.get(r, c);
            if !(0.0..=1.0 + 1e-9).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "prediction column {c} is not a distribution (entry {v})"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "prediction column {c} sums to {sum}, not 1"
            )));
        }
    }
    let mut total = 0.0;
    for c in 0..cols {
        for r in 0..rows {
            let t = targets_onehot.get(r, c);
            if t != 0.0 {
                total -= t * y.get(r, c).max(LOG_FLOOR).ln();
            }
        }
    }
    Ok(total / cols as f64)
}

/// Fraction of columns whose prediction argmax equals the target argmax.
/// Ties resolve to the lowest class index on both sides.
pub fn accuracy(y: &Matrix, targets_onehot: &Matrix) -> Result<f64> {
    if y.shape() != targets_onehot.shape() {
        return Err(Error::ShapeMismatch(format!(
            "predictions {:?} vs targets {:?}",
            y.shape(),
            targets_onehot.shape()
        )));
    }
    let cols = y.cols();
    if cols == 0 {
        return Ok(0.0);
    }
    let correct = (0..cols)
        .filter(|&c| argmax_column(y, c) == argmax_column(targets_onehot, c))
        .count();
    Ok(correct as f64 / cols as f64)
}

fn argmax_column(m: &Matrix, c: usize) -> usize {
    let mut best = 0;
    let mut best_val = m.get(0, c);
    for r in 1..m.rows() {
        let v = m.get(r, c);
        if v > best_val {
            best_val = v;
            best = r;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hidden_identity_net() -> NetworkState {
        // 2 -> 2 -> 2 with identity weights everywhere.
        let spec = NetworkSpec::new(vec![2, 2, 2], Activation::Relu, 0.0, 0).unwrap();
        NetworkState {
            spec,
            weights: vec![Matrix::identity(2), Matrix::identity(2)],
        }
    }

    #[test]
    fn forward_relu_hand_case() {
        let state = one_hidden_identity_net();
        let x = Matrix::from_vec(2, 1, vec![1.0, -1.0]).unwrap();
        let trace = forward(&state, &x, Mode::Eval, None).unwrap();
        assert_eq!(trace.post_activations[0].data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let logits = Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let y = softmax_columns(&logits);
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_columns_sum_to_one() {
        let mut rng = RandomStream::new(3);
        let logits = Matrix::from_fn(7, 9, |_, _| rng.uniform_in(-30.0, 30.0));
        let y = softmax_columns(&logits);
        for c in 0..9 {
            let sum: f64 = (0..7).map(|r| y.get(r, c)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_translation_invariance() {
        let mut rng = RandomStream::new(4);
        let logits = Matrix::from_fn(5, 6, |_, _| rng.uniform_in(-3.0, 3.0));
        let shifted = logits.map(|v| v + 17.25);
        let a = softmax_columns(&logits);
        let b = softmax_columns(&shifted);
        for (x, y) in a.data().iter().zip(b.data().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_equals_train_when_masks_are_neutral() {
        // Inverted dropout: eval applies no rescaling, so an all-keep draw in
        // train mode differs from eval only by the 1/(1-rate) factor.
        let mut spec = NetworkSpec::new(vec![2, 2, 2], Activation::Relu, 0.0, 0).unwrap();
        spec.dropout_rate = 0.25;
        let state = NetworkState {
            spec,
            weights: vec![Matrix::identity(2), Matrix::identity(2)],
        };
        let x = Matrix::from_vec(2, 1, vec![2.0, 4.0]).unwrap();
        let eval = forward(&state, &x, Mode::Eval, None).unwrap();
        // Find a seed whose two mask draws both keep (prob 0.75^2 each try).
        let mut seed = 0;
        let train = loop {
            let mut rng = RandomStream::new(seed);
            let t = forward(&state, &x, Mode::Train, Some(&mut rng)).unwrap();
            if t.dropout_masks[0].data().iter().all(|&m| m > 0.0) {
                break t;
            }
            seed += 1;
        };
        let scale = 1.0 / (1.0 - 0.25);
        for (tv, ev) in train.post_activations[0]
            .data()
            .iter()
            .zip(eval.post_activations[0].data().iter())
        {
            assert!((tv - ev * scale).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let spec = NetworkSpec::new(vec![3, 4, 2], Activation::Tanh, 0.5, 11).unwrap();
        let state = NetworkState::init(&spec).unwrap();
        let x = Matrix::from_vec(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let a = forward(&state, &x, Mode::Eval, None).unwrap();
        let b = forward(&state, &x, Mode::Eval, None).unwrap();
        assert_eq!(a.output, b.output);
        assert!(a.dropout_masks.is_empty());
    }

    #[test]
    fn dropout_zero_fraction_near_rate() {
        let rate = 0.25;
        let mut spec = NetworkSpec::new(vec![4, 1000, 2], Activation::Relu, 0.0, 0).unwrap();
        spec.dropout_rate = rate;
        let state = NetworkState::init(&spec).unwrap();
        let x = Matrix::from_fn(4, 100, |_, _| 1.0);
        let mut rng = RandomStream::new(21);
        let trace = forward(&state, &x, Mode::Train, Some(&mut rng)).unwrap();
        let mask = &trace.dropout_masks[0];
        let n = mask.data().len();
        assert_eq!(n, 100_000);
        let zeros = mask.data().iter().filter(|&&m| m == 0.0).count();
        let fraction = zeros as f64 / n as f64;
        assert!((fraction - rate).abs() < 0.01, "zero fraction {fraction}");
        let keep = 1.0 / (1.0 - rate);
        assert!(mask.data().iter().all(|&m| m == 0.0 || m == keep));
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let state = one_hidden_identity_net();
        let x = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(forward(&state, &x, Mode::Eval, None).is_err());
    }

    #[test]
    fn cross_entropy_perfect_prediction_is_zero() {
        let y = Matrix::from_vec(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let t = y.clone();
        let loss = cross_entropy(&y, &t).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_ten_classes() {
        let y = Matrix::from_fn(10, 1, |_, _| 0.1);
        let t = Matrix::from_fn(10, 1, |r, _| if r == 3 { 1.0 } else { 0.0 });
        let loss = cross_entropy(&y, &t).unwrap();
        assert!((loss - 10.0f64.ln()).abs() < 1e-12);
        assert!((loss - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_batch_is_mean_of_samples() {
        let y = Matrix::from_vec(2, 2, vec![0.8, 0.4, 0.2, 0.6]).unwrap();
        let t = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let batch = cross_entropy(&y, &t).unwrap();
        let a = cross_entropy(
            &Matrix::from_vec(2, 1, vec![0.8, 0.2]).unwrap(),
            &Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let b = cross_entropy(
            &Matrix::from_vec(2, 1, vec![0.4, 0.6]).unwrap(),
            &Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert!((batch - 0.5 * (a + b)).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_non_distribution() {
        let y = Matrix::from_vec(2, 1, vec![0.9, 0.9]).unwrap();
        let t = Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        assert!(cross_entropy(&y, &t).is_err());
    }

    #[test]
    fn accuracy_counts() {
        let t = Matrix::from_vec(2, 4, vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let perfect = t.clone();
        assert_eq!(accuracy(&perfect, &t).unwrap(), 1.0);
        let wrong = Matrix::from_vec(2, 4, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(accuracy(&wrong, &t).unwrap(), 0.0);
        let three_of_four =
            Matrix::from_vec(2, 4, vec![0.9, 0.8, 0.1, 0.2, 0.1, 0.2, 0.9, 0.8]).unwrap();
        assert_eq!(accuracy(&three_of_four, &t).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_ties_take_lowest_index() {
        let y = Matrix::from_vec(3, 1, vec![0.4, 0.4, 0.2]).unwrap();
        let t0 = Matrix::from_vec(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let t1 = Matrix::from_vec(3, 1, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(accuracy(&y, &t0).unwrap(), 1.0);
        assert_eq!(accuracy(&y, &t1).unwrap(), 0.0);
    }
}
