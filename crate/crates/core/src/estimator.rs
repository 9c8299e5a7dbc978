//! A small trainable feedforward estimator: Xavier-initialized dense layers
//! with leaky-rectifier hidden units, an objective-dependent output
//! activation, Adam updates, and a validation-driven learning-rate schedule
//! with early stopping.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::dsp::{CHUNK_LEN, NUM_BINS};
use crate::objectives::{
    loss, loss_value, output_activation_for, Activation, LossContext, ObjectiveError, ObjectiveId,
};

/// Negative-side slope of the hidden leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;
/// Hidden layer widths of the default model.
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 512];
/// Floor for per-feature standard deviations so normalization stays finite.
pub const STD_FLOOR: f64 = 1e-6;

pub type Result<T> = std::result::Result<T, EstimatorError>;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("inconsistent layer sizes: {0}")]
    InconsistentLayerSizes(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model output activation is {model} but objective {objective} needs {needed}")]
    ActivationMismatch {
        model: Activation,
        objective: ObjectiveId,
        needed: Activation,
    },
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("non-finite loss for objective {objective} at batch index {batch_index}")]
    NonFiniteLoss {
        objective: ObjectiveId,
        batch_index: usize,
    },
    #[error("normalization std entries must be positive")]
    InvalidNormalization,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Input/output geometry of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub num_bins: usize,
    pub chunk_len: usize,
    /// Width of the optional auxiliary feature vector appended after the
    /// normalized spectral features (0 for audio-only models).
    pub aux_dim: usize,
}

impl ModelShape {
    pub fn new(num_bins: usize, chunk_len: usize, aux_dim: usize) -> Self {
        Self {
            num_bins,
            chunk_len,
            aux_dim,
        }
    }

    /// Flattened spectral feature count (normalized part of the input).
    pub fn feature_dim(&self) -> usize {
        self.num_bins * self.chunk_len
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dim() + self.aux_dim
    }

    pub fn output_dim(&self) -> usize {
        self.feature_dim()
    }
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            num_bins: NUM_BINS,
            chunk_len: CHUNK_LEN,
            aux_dim: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// out_dim x in_dim weight matrix.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct EstimatorModel {
    shape: ModelShape,
    layers: Vec<Layer>,
    output_activation: Activation,
    input_mean: Array1<f64>,
    input_std: Array1<f64>,
}

impl EstimatorModel {
    /// Xavier-initialize a model. `layer_sizes` is the full chain including
    /// input and output widths and must match the shape: the first entry is
    /// feature_dim + aux_dim, the last is feature_dim. Weights are uniform
    /// in +/- sqrt(6/(fan_in + fan_out)), biases zero, deterministic in seed.
    pub fn init(
        shape: ModelShape,
        layer_sizes: &[usize],
        output_activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(EstimatorError::InconsistentLayerSizes(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes[0] != shape.input_dim() {
            return Err(EstimatorError::InconsistentLayerSizes(format!(
                "first size {} != input dim {}",
                layer_sizes[0],
                shape.input_dim()
            )));
        }
        if *layer_sizes.last().unwrap() != shape.output_dim() {
            return Err(EstimatorError::InconsistentLayerSizes(format!(
                "last size {} != output dim {}",
                layer_sizes.last().unwrap(),
                shape.output_dim()
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(EstimatorError::InconsistentLayerSizes(
                "zero-width layer".into(),
            ));
        }

        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights =
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
            layers.push(Layer {
                weights,
                bias: Array1::zeros(fan_out),
            });
        }

        Ok(Self {
            shape,
            layers,
            output_activation,
            input_mean: Array1::zeros(shape.feature_dim()),
            input_std: Array1::ones(shape.feature_dim()),
        })
    }

    /// Default-size model (512-512 hidden) for an objective's activation.
    pub fn default_for(id: ObjectiveId, aux_dim: usize, seed: u64) -> Self {
        let shape = ModelShape::new(NUM_BINS, CHUNK_LEN, aux_dim);
        let sizes = [
            shape.input_dim(),
            DEFAULT_HIDDEN[0],
            DEFAULT_HIDDEN[1],
            shape.output_dim(),
        ];
        Self::init(shape, &sizes, output_activation_for(id), seed)
            .expect("default sizes always chain")
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.ncols()];
        sizes.extend(self.layers.iter().map(|l| l.weights.nrows()));
        sizes
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn input_mean(&self) -> &Array1<f64> {
        &self.input_mean
    }

    pub fn input_std(&self) -> &Array1<f64> {
        &self.input_std
    }

    pub fn set_input_norm(&mut self, mean: Array1<f64>, std: Array1<f64>) -> Result<()> {
        if mean.len() != self.shape.feature_dim() || std.len() != self.shape.feature_dim() {
            return Err(EstimatorError::ShapeMismatch(format!(
                "normalization vectors of {}/{} entries, want {}",
                mean.len(),
                std.len(),
                self.shape.feature_dim()
            )));
        }
        if std.iter().any(|&s| s <= 0.0) {
            return Err(EstimatorError::InvalidNormalization);
        }
        self.input_mean = mean;
        self.input_std = std;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters in layer order, weights row-major then bias.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend(layer.weights.iter());
            flat.extend(layer.bias.iter());
        }
        flat
    }

    pub fn assign_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(EstimatorError::ShapeMismatch(format!(
                "{} parameters provided, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = flat[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    /// Flatten a chunk, apply input normalization, and append aux features.
    fn input_row(&self, chunk: &Array2<f64>, aux: Option<&Array1<f64>>) -> Result<Array1<f64>> {
        let want = (self.shape.num_bins, self.shape.chunk_len);
        if chunk.dim() != want {
            return Err(EstimatorError::ShapeMismatch(format!(
                "chunk {:?}, model expects {:?}",
                chunk.dim(),
                want
            )));
        }
        let aux_len = aux.map_or(0, |a| a.len());
        if aux_len != self.shape.aux_dim {
            return Err(EstimatorError::ShapeMismatch(format!(
                "aux of {} entries, model expects {}",
                aux_len, self.shape.aux_dim
            )));
        }
        let mut row = Array1::zeros(self.shape.input_dim());
        for (i, (&x, (&m, &s))) in chunk
            .iter()
            .zip(self.input_mean.iter().zip(self.input_std.iter()))
            .enumerate()
        {
            row[i] = (x - m) / s;
        }
        if let Some(aux) = aux {
            for (i, &v) in aux.iter().enumerate() {
                row[self.shape.feature_dim() + i] = v;
            }
        }
        Ok(row)
    }

    /// Run one chunk through the network, returning the post-activation
    /// output reshaped to num_bins x chunk_len.
    pub fn forward(&self, chunk: &Array2<f64>, aux: Option<&Array1<f64>>) -> Result<Array2<f64>> {
        let row = self.input_row(chunk, aux)?;
        let x = row.insert_axis(Axis(0));
        let out = self.forward_batch(&x).post.pop().unwrap();
        let flat = out.index_axis(Axis(0), 0).to_owned();
        Ok(flat
            .into_shape_with_order((self.shape.num_bins, self.shape.chunk_len))
            .expect("output reshapes to model shape"))
    }

    /// Batched forward pass keeping pre- and post-activation values of every
    /// layer for backpropagation. `post` ends with the network output.
    fn forward_batch(&self, x: &Array2<f64>) -> ForwardCache {
        let num_layers = self.layers.len();
        let mut pre = Vec::with_capacity(num_layers);
        let mut post = Vec::with_capacity(num_layers);
        let mut current = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = current.dot(&layer.weights.t()) + &layer.bias;
            let activated = if i + 1 == num_layers {
                match self.output_activation {
                    Activation::Linear => z.clone(),
                    Activation::Rectifier => z.mapv(|v| v.max(0.0)),
                    Activation::Exponential => z.mapv(f64::exp),
                }
            } else {
                z.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
            };
            pre.push(z);
            post.push(activated.clone());
            current = activated;
        }
        ForwardCache { pre, post }
    }
}

struct ForwardCache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

/// Per-layer gradient (or moment) storage mirroring the parameters.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    fn zeros_like(layer: &Layer) -> Self {
        Self {
            weights: Array2::zeros(layer.weights.dim()),
            bias: Array1::zeros(layer.bias.dim()),
        }
    }
}

/// Adam optimizer state: first/second moment accumulators and step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<LayerGrad>,
    second: Vec<LayerGrad>,
}

impl AdamState {
    pub fn new(model: &EstimatorModel) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: model.layers.iter().map(LayerGrad::zeros_like).collect(),
            second: model.layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update with bias-corrected moments:
    /// p -= lr * m_hat / (sqrt(v_hat) + eps).
    pub fn update(&mut self, model: &mut EstimatorModel, grads: &[LayerGrad], lr: f64) {
        assert_eq!(grads.len(), model.layers.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((layer, grad), (m, v)) in model
            .layers
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for ((p, &g), (m, v)) in layer
                .weights
                .iter_mut()
                .zip(grad.weights.iter())
                .zip(m.weights.iter_mut().zip(v.weights.iter_mut()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.epsilon);
            }
            for ((p, &g), (m, v)) in layer
                .bias
                .iter_mut()
                .zip(grad.bias.iter())
                .zip(m.bias.iter_mut().zip(v.bias.iter_mut()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.epsilon);
            }
        }
    }
}

/// One training example: the loss context of a noisy/clean chunk pair (the
/// network input is the context's noisy magnitude) plus optional aux features.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub context: LossContext,
    pub aux: Option<Array1<f64>>,
}

/// Mean batch loss and the batch-mean parameter gradients, chained through
/// the output activation and the layers.
pub(crate) fn batch_gradients(
    model: &EstimatorModel,
    batch: &[&TrainItem],
    id: ObjectiveId,
) -> Result<(f64, Vec<LayerGrad>)> {
    if batch.is_empty() {
        return Err(EstimatorError::EmptyDataset("batch"));
    }
    let needed = output_activation_for(id);
    if needed != model.output_activation {
        return Err(EstimatorError::ActivationMismatch {
            model: model.output_activation,
            objective: id,
            needed,
        });
    }

    let n = batch.len();
    let mut x = Array2::zeros((n, model.shape.input_dim()));
    for (i, item) in batch.iter().enumerate() {
        let row = model.input_row(item.context.noisy_mag().values(), item.aux.as_ref())?;
        x.row_mut(i).assign(&row);
    }

    let cache = model.forward_batch(&x);
    let out = cache.post.last().unwrap();

    let mut total_loss = 0.0;
    let mut grad_post = Array2::zeros(out.dim());
    let scale = 1.0 / n as f64;
    for (i, item) in batch.iter().enumerate() {
        let out_mat = out
            .index_axis(Axis(0), i)
            .to_owned()
            .into_shape_with_order((model.shape.num_bins, model.shape.chunk_len))
            .expect("output reshapes to model shape");
        let result = loss(id, &item.context, &out_mat)?;
        if !result.value.is_finite() {
            return Err(EstimatorError::NonFiniteLoss {
                objective: id,
                batch_index: i,
            });
        }
        total_loss += result.value;
        for (j, &g) in result.gradient.iter().enumerate() {
            grad_post[(i, j)] = g * scale;
        }
    }

    // Chain through the output activation.
    let last = model.layers.len() - 1;
    let mut grad_z = match model.output_activation {
        Activation::Linear => grad_post,
        Activation::Rectifier => {
            let mask = cache.pre[last].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            grad_post * &mask
        }
        Activation::Exponential => grad_post * out,
    };

    // Walk the layers backwards accumulating parameter gradients.
    let mut grads: Vec<LayerGrad> = model.layers.iter().map(LayerGrad::zeros_like).collect();
    for l in (0..model.layers.len()).rev() {
        let input = if l == 0 { &x } else { &cache.post[l - 1] };
        grads[l].weights = grad_z.t().dot(input);
        grads[l].bias = grad_z.sum_axis(Axis(0));
        if l > 0 {
            let upstream = grad_z.dot(&model.layers[l].weights);
            let slope = cache.pre[l - 1].mapv(|z| if z > 0.0 { 1.0 } else { LEAKY_SLOPE });
            grad_z = upstream * &slope;
        }
    }

    Ok((total_loss * scale, grads))
}

/// One Adam step over a batch. Returns the pre-update mean batch loss.
pub fn train_step(
    model: &mut EstimatorModel,
    optimizer: &mut AdamState,
    batch: &[&TrainItem],
    id: ObjectiveId,
    lr: f64,
) -> Result<f64> {
    let (mean_batch_loss, grads) = batch_gradients(model, batch, id)?;
    optimizer.update(model, &grads, lr);
    Ok(mean_batch_loss)
}

/// Mean loss of a model over a set of items, without updating anything.
pub fn mean_loss(model: &EstimatorModel, items: &[TrainItem], id: ObjectiveId) -> Result<f64> {
    if items.is_empty() {
        return Err(EstimatorError::EmptyDataset("evaluation"));
    }
    let mut acc = 0.0;
    for item in items {
        let out = model.forward(item.context.noisy_mag().values(), item.aux.as_ref())?;
        acc += loss_value(id, &item.context, &out)?;
    }
    Ok(acc / items.len() as f64)
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    pub validation_interval_epochs: u32,
    pub early_stop_patience_epochs: u32,
    pub max_epochs: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            initial_lr: 4e-4,
            lr_decay_factor: 0.5,
            validation_interval_epochs: 2,
            early_stop_patience_epochs: 10,
            max_epochs: 50,
            seed: 0,
        }
    }
}

/// Decision taken after observing one validation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LrDecision {
    pub improved: bool,
    pub halved: bool,
    pub stop: bool,
}

/// Validation-driven learning-rate schedule: the rate is decayed whenever
/// the validation loss increases versus the best seen, and training stops
/// once no improvement has been observed for the patience window (counted
/// in epochs since the last improvement).
#[derive(Debug, Clone)]
pub struct LrController {
    lr: f64,
    decay_factor: f64,
    patience_epochs: u32,
    best: Option<f64>,
    last_improvement_epoch: u32,
}

impl LrController {
    pub fn new(initial_lr: f64, decay_factor: f64, patience_epochs: u32) -> Self {
        Self {
            lr: initial_lr,
            decay_factor,
            patience_epochs,
            best: None,
            last_improvement_epoch: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, epoch: u32, val_loss: f64) -> LrDecision {
        let improved = self.best.is_none_or(|b| val_loss < b);
        let mut halved = false;
        if improved {
            self.best = Some(val_loss);
            self.last_improvement_epoch = epoch;
        } else if val_loss > self.best.unwrap() {
            self.lr *= self.decay_factor;
            halved = true;
        }
        let stop = epoch - self.last_improvement_epoch >= self.patience_epochs;
        LrDecision {
            improved,
            halved,
            stop,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub learning_rate: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_validation_loss: Option<f64>,
    pub best_epoch: Option<u32>,
    pub stopped_early: bool,
}

/// Fit a model: shuffled mini-batches with Adam, validation every
/// `validation_interval_epochs` epochs driving the learning-rate schedule,
/// and early stopping. Returns the snapshot with the best validation loss
/// (never the last-epoch parameters when they differ) plus the history.
pub fn fit(
    model: EstimatorModel,
    train: &[TrainItem],
    validation: &[TrainItem],
    id: ObjectiveId,
    cfg: &TrainConfig,
) -> Result<(EstimatorModel, TrainHistory)> {
    if train.is_empty() {
        return Err(EstimatorError::EmptyDataset("training"));
    }
    if validation.is_empty() {
        return Err(EstimatorError::EmptyDataset("validation"));
    }
    assert!(
        cfg.batch_size > 0 && cfg.validation_interval_epochs > 0 && cfg.max_epochs > 0,
        "TrainConfig fields must be positive"
    );

    let mut model = model;
    let (mean, std) = input_statistics(&model.shape, train);
    model.set_input_norm(mean, std)?;

    let mut optimizer = AdamState::new(&model);
    let mut controller = LrController::new(
        cfg.initial_lr,
        cfg.lr_decay_factor,
        cfg.early_stop_patience_epochs,
    );
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_validation_loss: None,
        best_epoch: None,
        stopped_early: false,
    };
    let mut best_model: Option<EstimatorModel> = None;

    for epoch in 1..=cfg.max_epochs {
        shuffle(&mut order, &mut rng);
        let lr = controller.lr();
        let mut loss_sum = 0.0;
        for batch_indices in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainItem> = batch_indices.iter().map(|&i| &train[i]).collect();
            let batch_loss = train_step(&mut model, &mut optimizer, &batch, id, lr)?;
            loss_sum += batch_loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;

        let mut validation_loss = None;
        let mut stop = false;
        if epoch % cfg.validation_interval_epochs == 0 {
            let val_loss = mean_loss(&model, validation, id)?;
            validation_loss = Some(val_loss);
            let decision = controller.observe(epoch, val_loss);
            if decision.improved {
                best_model = Some(model.clone());
                history.best_validation_loss = Some(val_loss);
                history.best_epoch = Some(epoch);
            }
            stop = decision.stop;
        }

        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            learning_rate: lr,
            validation_loss,
        });

        if stop {
            history.stopped_early = true;
            break;
        }
    }

    Ok((best_model.unwrap_or(model), history))
}

/// Per-feature mean and (floored) standard deviation over the training set,
/// computed position-by-position on the flattened chunks.
fn input_statistics(shape: &ModelShape, train: &[TrainItem]) -> (Array1<f64>, Array1<f64>) {
    let dim = shape.feature_dim();
    let mut mean = Array1::<f64>::zeros(dim);
    let mut sq = Array1::<f64>::zeros(dim);
    let n = train.len() as f64;
    for item in train {
        for (i, &x) in item.context.noisy_mag().values().iter().enumerate() {
            mean[i] += x;
            sq[i] += x * x;
        }
    }
    mean.mapv_inplace(|m| m / n);
    let std = Array1::from_shape_fn(dim, |i| {
        let var = (sq[i] / n - mean[i] * mean[i]).max(0.0);
        var.sqrt().max(STD_FLOOR)
    });
    (mean, std)
}

/// Fisher-Yates with a caller-supplied generator, so epoch order is a pure
/// function of the training seed.
fn shuffle(order: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}
