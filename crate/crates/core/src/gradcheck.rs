//! Finite-difference verification of the analytic gradients: every objective
//! is checked against central differences, both at the loss level (gradient
//! with respect to the network output) and end-to-end through a tiny model
//! (gradient with respect to every parameter).

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::dsp::{MagnitudeSpectrogram, MelFilterbank};
use crate::estimator::{batch_gradients, EstimatorModel, LayerGrad, ModelShape, TrainItem};
use crate::objectives::{loss_value, output_activation_for, Activation, LossContext, ObjectiveId};
use crate::signalmodel::PhaseDiff;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Tolerance for the loss-level gradient check.
pub const LOSS_GRAD_TOL: f64 = 1e-5;
/// Tolerance for the end-to-end parameter gradient check.
pub const PARAM_GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub objective: ObjectiveId,
    pub loss_grad_max_rel_err: f64,
    pub param_grad_max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.loss_grad_max_rel_err < LOSS_GRAD_TOL && self.param_grad_max_rel_err < PARAM_GRAD_TOL
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Triangular filterbank sized for a tiny test spectrogram.
pub fn small_filterbank(num_bins: usize, num_mel: usize) -> MelFilterbank {
    let fft_size = 2 * (num_bins - 1);
    MelFilterbank::build(num_mel, fft_size, 16_000, 0.0, 8_000.0)
}

/// Random loss context with magnitudes kept away from the log floors.
pub fn random_context(
    seed: u64,
    num_bins: usize,
    num_frames: usize,
    filterbank: Arc<MelFilterbank>,
) -> LossContext {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dims = (num_bins, num_frames);
    let clean = Array2::from_shape_fn(dims, |_| rng.random_range(0.1..2.0));
    let noisy = Array2::from_shape_fn(dims, |_| rng.random_range(0.3..2.0));
    let theta = Array2::from_shape_fn(dims, |_| {
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
    });
    LossContext::new(
        MagnitudeSpectrogram::new(clean),
        MagnitudeSpectrogram::new(noisy),
        PhaseDiff::from_theta(theta),
        filterbank,
    )
    .expect("random context shapes agree")
}

/// Random network output in a range suited to the objective's activation.
pub fn random_net_out(seed: u64, id: ObjectiveId, dims: (usize, usize)) -> Array2<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match output_activation_for(id) {
        Activation::Exponential => Array2::from_shape_fn(dims, |_| rng.random_range(0.2..2.0)),
        Activation::Rectifier => Array2::from_shape_fn(dims, |_| rng.random_range(0.05..2.0)),
        Activation::Linear => Array2::from_shape_fn(dims, |_| rng.random_range(-1.5..1.5)),
    }
}

/// Central finite differences of [`loss_value`] in every output entry.
pub fn fd_loss_gradient(
    id: ObjectiveId,
    ctx: &LossContext,
    net_out: &Array2<f64>,
    step: f64,
) -> Array2<f64> {
    let mut fd = Array2::zeros(net_out.dim());
    let mut probe = net_out.clone();
    for idx in 0..net_out.len() {
        let (k, l) = (idx / net_out.ncols(), idx % net_out.ncols());
        let orig = probe[(k, l)];
        probe[(k, l)] = orig + step;
        let plus = loss_value(id, ctx, &probe).unwrap();
        probe[(k, l)] = orig - step;
        let minus = loss_value(id, ctx, &probe).unwrap();
        probe[(k, l)] = orig;
        fd[(k, l)] = (plus - minus) / (2.0 * step);
    }
    fd
}

/// Max relative error between the analytic and finite-difference loss
/// gradients on a random context.
pub fn loss_gradient_check(id: ObjectiveId, seed: u64, num_bins: usize, num_frames: usize) -> f64 {
    let fb = Arc::new(small_filterbank(num_bins, num_bins / 2));
    let ctx = random_context(seed, num_bins, num_frames, fb);
    let net_out = random_net_out(seed.wrapping_add(1), id, (num_bins, num_frames));
    let analytic = crate::objectives::loss_gradient(id, &ctx, &net_out).unwrap();
    let fd = fd_loss_gradient(id, &ctx, &net_out, FD_STEP);
    analytic
        .iter()
        .zip(fd.iter())
        .map(|(&a, &f)| rel_err(a, f))
        .fold(0.0, f64::max)
}

fn flatten_grads(grads: &[LayerGrad]) -> Vec<f64> {
    let mut flat = Vec::new();
    for g in grads {
        flat.extend(g.weights.iter());
        flat.extend(g.bias.iter());
    }
    flat
}

fn batch_mean_loss(model: &EstimatorModel, batch: &[&TrainItem], id: ObjectiveId) -> f64 {
    let mut acc = 0.0;
    for item in batch {
        let out = model
            .forward(item.context.noisy_mag().values(), item.aux.as_ref())
            .unwrap();
        acc += loss_value(id, &item.context, &out).unwrap();
    }
    acc / batch.len() as f64
}

/// Max relative error between analytic and finite-difference gradients of
/// the mean batch loss with respect to every parameter of a tiny model.
pub fn param_gradient_check(id: ObjectiveId, seed: u64) -> f64 {
    let num_bins = 6;
    let num_frames = 4;
    let shape = ModelShape::new(num_bins, num_frames, 2);
    let fb = Arc::new(small_filterbank(num_bins, 3));

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let items: Vec<TrainItem> = (0..2)
        .map(|i| {
            let ctx = random_context(seed.wrapping_add(100 + i), num_bins, num_frames, fb.clone());
            let aux = Array1::from_shape_fn(2, |_| rng.random_range(0.0..1.0));
            TrainItem {
                context: ctx,
                aux: Some(aux),
            }
        })
        .collect();
    let batch: Vec<&TrainItem> = items.iter().collect();

    let sizes = [shape.input_dim(), 8, shape.output_dim()];
    let mut model = EstimatorModel::init(
        shape,
        &sizes,
        output_activation_for(id),
        seed.wrapping_add(7),
    )
    .expect("tiny model sizes chain");

    // Condition the check point: shrink the weights and lift every bias to 1
    // so pre-activations sit away from the rectifier kinks and log floors,
    // where central differences are accurate.
    let mut params = model.flatten_params();
    for p in params.iter_mut() {
        *p *= 0.05;
    }
    let mut offset = 0;
    for pair in sizes.windows(2) {
        offset += pair[1] * pair[0];
        for b in params[offset..offset + pair[1]].iter_mut() {
            *b = 1.0;
        }
        offset += pair[1];
    }
    model.assign_params(&params).unwrap();

    let (_, grads) = batch_gradients(&model, &batch, id).unwrap();
    let analytic = flatten_grads(&grads);

    let params = model.flatten_params();
    let mut probe = model.clone();
    let mut max_err = 0.0f64;
    let mut perturbed = params.clone();
    for i in 0..params.len() {
        perturbed[i] = params[i] + FD_STEP;
        probe.assign_params(&perturbed).unwrap();
        let plus = batch_mean_loss(&probe, &batch, id);
        perturbed[i] = params[i] - FD_STEP;
        probe.assign_params(&perturbed).unwrap();
        let minus = batch_mean_loss(&probe, &batch, id);
        perturbed[i] = params[i];
        let fd = (plus - minus) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(analytic[i], fd));
    }
    probe.assign_params(&params).unwrap();
    max_err
}

/// Run both checks for all twelve objectives.
pub fn run_full_check(seed: u64) -> Vec<GradCheckReport> {
    ObjectiveId::all()
        .into_iter()
        .enumerate()
        .map(|(i, id)| GradCheckReport {
            objective: id,
            loss_grad_max_rel_err: loss_gradient_check(id, seed.wrapping_add(i as u64), 6, 4),
            param_grad_max_rel_err: param_gradient_check(id, seed.wrapping_add(1000 + i as u64)),
        })
        .collect()
}
