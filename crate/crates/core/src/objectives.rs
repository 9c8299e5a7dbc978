//! The twelve training objectives: direct mapping (DM), indirect mapping
//! (IM), and mask approximation (MA), each in one of the spectral-amplitude
//! domains STSA, LSA, MSA, LMSA, PSSA. Every objective exposes its value and
//! the analytic gradient with respect to the network output, plus the
//! spectrally-weighted rewriting of the MA losses used as a cross check.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use thiserror::Error;

use crate::dsp::{MagnitudeSpectrogram, MelFilterbank, MelSpectrogram};
use crate::signalmodel::{compute_iam, compute_psm, PhaseDiff, EPS_DIV};

/// Floor applied inside every logarithm so silent bins stay finite.
pub const EPS_LOG: f64 = 1e-7;

pub type Result<T> = std::result::Result<T, ObjectiveError>;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("no mask-approximation objective exists in the {0} domain")]
    InvalidCombination(Domain),
    #[error("unknown objective id '{0}'")]
    UnknownId(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("network output contains non-finite values")]
    NonFiniteOutput,
}

/// Spectral-amplitude domain a loss compares in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Short-time spectral amplitude (linear frequency, linear magnitude).
    Stsa,
    /// Log spectral amplitude.
    Lsa,
    /// Mel-scaled spectral amplitude.
    Msa,
    /// Log Mel-scaled spectral amplitude.
    Lmsa,
    /// Phase-sensitive spectral amplitude (target A cos(theta)).
    Pssa,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Stsa,
        Domain::Lsa,
        Domain::Msa,
        Domain::Lmsa,
        Domain::Pssa,
    ];

    fn token(self) -> &'static str {
        match self {
            Domain::Stsa => "stsa",
            Domain::Lsa => "lsa",
            Domain::Msa => "msa",
            Domain::Lmsa => "lmsa",
            Domain::Pssa => "pssa",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// How the network output enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Approach {
    /// Output is the clean-magnitude estimate itself.
    Dm,
    /// Output is a mask; the loss compares the reconstruction mask*noisy.
    Im,
    /// Output is a mask; the loss compares it with the ideal mask.
    Ma,
}

impl Approach {
    fn token(self) -> &'static str {
        match self {
            Approach::Dm => "dm",
            Approach::Im => "im",
            Approach::Ma => "ma",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One of the twelve valid objective cells. Mask approximation exists only
/// for the STSA (amplitude mask) and PSSA (phase-sensitive mask) domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectiveId {
    domain: Domain,
    approach: Approach,
}

impl ObjectiveId {
    pub fn new(domain: Domain, approach: Approach) -> Result<Self> {
        if approach == Approach::Ma && !matches!(domain, Domain::Stsa | Domain::Pssa) {
            return Err(ObjectiveError::InvalidCombination(domain));
        }
        Ok(Self { domain, approach })
    }

    pub fn domain(self) -> Domain {
        self.domain
    }

    pub fn approach(self) -> Approach {
        self.approach
    }

    /// All twelve objectives: the DM column, the IM column, then MA.
    pub fn all() -> Vec<ObjectiveId> {
        let mut ids = Vec::with_capacity(12);
        for approach in [Approach::Dm, Approach::Im] {
            for domain in Domain::ALL {
                ids.push(ObjectiveId { domain, approach });
            }
        }
        ids.push(ObjectiveId {
            domain: Domain::Stsa,
            approach: Approach::Ma,
        });
        ids.push(ObjectiveId {
            domain: Domain::Pssa,
            approach: Approach::Ma,
        });
        ids
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.domain, self.approach)
    }
}

impl FromStr for ObjectiveId {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self> {
        let (dom, app) = s
            .split_once('-')
            .ok_or_else(|| ObjectiveError::UnknownId(s.into()))?;
        let domain = Domain::ALL
            .into_iter()
            .find(|d| d.token() == dom)
            .ok_or_else(|| ObjectiveError::UnknownId(s.into()))?;
        let approach = [Approach::Dm, Approach::Im, Approach::Ma]
            .into_iter()
            .find(|a| a.token() == app)
            .ok_or_else(|| ObjectiveError::UnknownId(s.into()))?;
        ObjectiveId::new(domain, approach).map_err(|_| ObjectiveError::UnknownId(s.into()))
    }
}

/// Output nonlinearity the estimator must use for a given objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Rectifier,
    Linear,
    Exponential,
}

impl Activation {
    pub fn token(self) -> &'static str {
        match self {
            Activation::Rectifier => "rectifier",
            Activation::Linear => "linear",
            Activation::Exponential => "exponential",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Activation {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Activation::Rectifier,
            Activation::Linear,
            Activation::Exponential,
        ]
        .into_iter()
        .find(|a| a.token() == s)
        .ok_or_else(|| ObjectiveError::UnknownId(s.into()))
    }
}

/// Output activation per objective: exponential compression for magnitude
/// mapping in domains with positive targets, a rectifier for positive-valued
/// masks, and a linear output wherever the target can be negative.
pub fn output_activation_for(id: ObjectiveId) -> Activation {
    match (id.domain, id.approach) {
        (Domain::Pssa, _) => Activation::Linear,
        (_, Approach::Dm) => Activation::Exponential,
        (_, Approach::Im) | (_, Approach::Ma) => Activation::Rectifier,
    }
}

/// Everything a loss needs about one clean/noisy pair: magnitudes, phase
/// difference, and their Mel projections through a shared filterbank.
#[derive(Debug, Clone)]
pub struct LossContext {
    clean_mag: MagnitudeSpectrogram,
    noisy_mag: MagnitudeSpectrogram,
    phase_diff: PhaseDiff,
    filterbank: Arc<MelFilterbank>,
    clean_mel: MelSpectrogram,
    noisy_mel: MelSpectrogram,
}

impl LossContext {
    pub fn new(
        clean_mag: MagnitudeSpectrogram,
        noisy_mag: MagnitudeSpectrogram,
        phase_diff: PhaseDiff,
        filterbank: Arc<MelFilterbank>,
    ) -> Result<Self> {
        let dim = clean_mag.values().dim();
        if noisy_mag.values().dim() != dim || phase_diff.theta().dim() != dim {
            return Err(ObjectiveError::ShapeMismatch(format!(
                "clean {:?}, noisy {:?}, theta {:?}",
                dim,
                noisy_mag.values().dim(),
                phase_diff.theta().dim()
            )));
        }
        if filterbank.num_bins() != clean_mag.num_bins() {
            return Err(ObjectiveError::ShapeMismatch(format!(
                "filterbank covers {} bins, spectrogram has {}",
                filterbank.num_bins(),
                clean_mag.num_bins()
            )));
        }
        let clean_mel = filterbank
            .project(&clean_mag)
            .map_err(|e| ObjectiveError::ShapeMismatch(e.to_string()))?;
        let noisy_mel = filterbank
            .project(&noisy_mag)
            .map_err(|e| ObjectiveError::ShapeMismatch(e.to_string()))?;
        Ok(Self {
            clean_mag,
            noisy_mag,
            phase_diff,
            filterbank,
            clean_mel,
            noisy_mel,
        })
    }

    pub fn clean_mag(&self) -> &MagnitudeSpectrogram {
        &self.clean_mag
    }

    pub fn noisy_mag(&self) -> &MagnitudeSpectrogram {
        &self.noisy_mag
    }

    pub fn phase_diff(&self) -> &PhaseDiff {
        &self.phase_diff
    }

    pub fn filterbank(&self) -> &Arc<MelFilterbank> {
        &self.filterbank
    }

    pub fn clean_mel(&self) -> &MelSpectrogram {
        &self.clean_mel
    }

    pub fn noisy_mel(&self) -> &MelSpectrogram {
        &self.noisy_mel
    }

    pub fn num_bins(&self) -> usize {
        self.clean_mag.num_bins()
    }

    pub fn num_frames(&self) -> usize {
        self.clean_mag.num_frames()
    }

    pub fn num_mel(&self) -> usize {
        self.filterbank.num_mel()
    }

    /// Normalizer for linear-frequency losses, 1/(T*F).
    pub fn norm_tf(&self) -> f64 {
        1.0 / (self.num_frames() as f64 * self.num_bins() as f64)
    }

    /// Normalizer for Mel-domain losses, 1/(T*Q).
    pub fn norm_tq(&self) -> f64 {
        1.0 / (self.num_frames() as f64 * self.num_mel() as f64)
    }

    /// Phase-sensitive target A cos(theta).
    fn phase_sensitive_target(&self) -> Array2<f64> {
        self.clean_mag.values() * &self.phase_diff.cos()
    }
}

/// Loss value together with its gradient with respect to the network output.
#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub gradient: Array2<f64>,
}

fn floored_ln(x: f64) -> f64 {
    x.max(EPS_LOG).ln()
}

fn check_net_out(ctx: &LossContext, net_out: &Array2<f64>) -> Result<()> {
    if net_out.dim() != ctx.clean_mag.values().dim() {
        return Err(ObjectiveError::ShapeMismatch(format!(
            "network output {:?} vs context {:?}",
            net_out.dim(),
            ctx.clean_mag.values().dim()
        )));
    }
    if net_out.iter().any(|v| !v.is_finite()) {
        return Err(ObjectiveError::NonFiniteOutput);
    }
    Ok(())
}

fn sq_err(target: &Array2<f64>, pred: &Array2<f64>, norm: f64) -> f64 {
    norm * target
        .iter()
        .zip(pred.iter())
        .map(|(t, p)| (t - p) * (t - p))
        .sum::<f64>()
}

fn log_sq_err(target: &Array2<f64>, pred: &Array2<f64>, norm: f64) -> f64 {
    norm * target
        .iter()
        .zip(pred.iter())
        .map(|(&t, &p)| {
            let d = floored_ln(t) - floored_ln(p);
            d * d
        })
        .sum::<f64>()
}

/// -2 norm (target - pred), the derivative of the squared error in `pred`.
fn sq_err_grad(target: &Array2<f64>, pred: &Array2<f64>, norm: f64) -> Array2<f64> {
    let mut g = Array2::zeros(target.dim());
    for ((g, &t), &p) in g.iter_mut().zip(target.iter()).zip(pred.iter()) {
        *g = -2.0 * norm * (t - p);
    }
    g
}

/// Derivative of the floored-log squared error in `pred`; zero wherever the
/// floor is active, 1/pred otherwise.
fn log_sq_err_grad(target: &Array2<f64>, pred: &Array2<f64>, norm: f64) -> Array2<f64> {
    let mut g = Array2::zeros(target.dim());
    for ((g, &t), &p) in g.iter_mut().zip(target.iter()).zip(pred.iter()) {
        if p > EPS_LOG {
            *g = -2.0 * norm * (floored_ln(t) - floored_ln(p)) / p;
        }
    }
    g
}

/// Mean squared error of the objective's equation on this context.
///
/// DM interprets `net_out` as the post-activation magnitude estimate, IM as
/// a mask applied to the noisy magnitude, MA as a mask compared against the
/// clipped ideal mask. Mel-domain losses project both operands through the
/// filterbank before squaring.
pub fn loss_value(id: ObjectiveId, ctx: &LossContext, net_out: &Array2<f64>) -> Result<f64> {
    check_net_out(ctx, net_out)?;
    let a = ctx.norm_tf();
    let b = ctx.norm_tq();
    let fb = ctx.filterbank.as_ref();
    let clean = ctx.clean_mag.values();
    let noisy = ctx.noisy_mag.values();

    let value = match (id.domain, id.approach) {
        (Domain::Stsa, Approach::Dm) => sq_err(clean, net_out, a),
        (Domain::Lsa, Approach::Dm) => log_sq_err(clean, net_out, a),
        (Domain::Msa, Approach::Dm) => {
            let pred_mel = fb.weights().dot(net_out);
            sq_err(ctx.clean_mel.values(), &pred_mel, b)
        }
        (Domain::Lmsa, Approach::Dm) => {
            let pred_mel = fb.weights().dot(net_out);
            log_sq_err(ctx.clean_mel.values(), &pred_mel, b)
        }
        (Domain::Pssa, Approach::Dm) => sq_err(&ctx.phase_sensitive_target(), net_out, a),
        (Domain::Stsa, Approach::Im) => sq_err(clean, &(net_out * noisy), a),
        (Domain::Lsa, Approach::Im) => log_sq_err(clean, &(net_out * noisy), a),
        (Domain::Msa, Approach::Im) => {
            let pred_mel = fb.weights().dot(&(net_out * noisy));
            sq_err(ctx.clean_mel.values(), &pred_mel, b)
        }
        (Domain::Lmsa, Approach::Im) => {
            let pred_mel = fb.weights().dot(&(net_out * noisy));
            log_sq_err(ctx.clean_mel.values(), &pred_mel, b)
        }
        (Domain::Pssa, Approach::Im) => {
            sq_err(&ctx.phase_sensitive_target(), &(net_out * noisy), a)
        }
        (Domain::Stsa, Approach::Ma) => {
            let target = compute_iam(&ctx.clean_mag, &ctx.noisy_mag);
            sq_err(target.values(), net_out, a)
        }
        (Domain::Pssa, Approach::Ma) => {
            let target = compute_psm(&ctx.clean_mag, &ctx.noisy_mag, &ctx.phase_diff);
            sq_err(target.values(), net_out, a)
        }
        (domain, Approach::Ma) => return Err(ObjectiveError::InvalidCombination(domain)),
    };
    Ok(value)
}

/// Analytic gradient of [`loss_value`] with respect to `net_out`.
///
/// Target clipping is treated as a constant transformation, so no gradient
/// flows through the clip; Mel losses back-project through the transposed
/// filterbank, which is never trainable.
pub fn loss_gradient(
    id: ObjectiveId,
    ctx: &LossContext,
    net_out: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_net_out(ctx, net_out)?;
    let a = ctx.norm_tf();
    let b = ctx.norm_tq();
    let fb = ctx.filterbank.as_ref();
    let clean = ctx.clean_mag.values();
    let noisy = ctx.noisy_mag.values();

    let gradient = match (id.domain, id.approach) {
        (Domain::Stsa, Approach::Dm) => sq_err_grad(clean, net_out, a),
        (Domain::Lsa, Approach::Dm) => log_sq_err_grad(clean, net_out, a),
        (Domain::Msa, Approach::Dm) => {
            let pred_mel = fb.weights().dot(net_out);
            fb.weights()
                .t()
                .dot(&sq_err_grad(ctx.clean_mel.values(), &pred_mel, b))
        }
        (Domain::Lmsa, Approach::Dm) => {
            let pred_mel = fb.weights().dot(net_out);
            fb.weights()
                .t()
                .dot(&log_sq_err_grad(ctx.clean_mel.values(), &pred_mel, b))
        }
        (Domain::Pssa, Approach::Dm) => sq_err_grad(&ctx.phase_sensitive_target(), net_out, a),
        (Domain::Stsa, Approach::Im) => sq_err_grad(clean, &(net_out * noisy), a) * noisy,
        (Domain::Lsa, Approach::Im) => log_sq_err_grad(clean, &(net_out * noisy), a) * noisy,
        (Domain::Msa, Approach::Im) => {
            let pred_mel = fb.weights().dot(&(net_out * noisy));
            fb.weights()
                .t()
                .dot(&sq_err_grad(ctx.clean_mel.values(), &pred_mel, b))
                * noisy
        }
        (Domain::Lmsa, Approach::Im) => {
            let pred_mel = fb.weights().dot(&(net_out * noisy));
            fb.weights()
                .t()
                .dot(&log_sq_err_grad(ctx.clean_mel.values(), &pred_mel, b))
                * noisy
        }
        (Domain::Pssa, Approach::Im) => {
            sq_err_grad(&ctx.phase_sensitive_target(), &(net_out * noisy), a) * noisy
        }
        (Domain::Stsa, Approach::Ma) => {
            let target = compute_iam(&ctx.clean_mag, &ctx.noisy_mag);
            sq_err_grad(target.values(), net_out, a)
        }
        (Domain::Pssa, Approach::Ma) => {
            let target = compute_psm(&ctx.clean_mag, &ctx.noisy_mag, &ctx.phase_diff);
            sq_err_grad(target.values(), net_out, a)
        }
        (domain, Approach::Ma) => return Err(ObjectiveError::InvalidCombination(domain)),
    };
    Ok(gradient)
}

/// Value and gradient in one call.
pub fn loss(id: ObjectiveId, ctx: &LossContext, net_out: &Array2<f64>) -> Result<LossResult> {
    Ok(LossResult {
        value: loss_value(id, ctx, net_out)?,
        gradient: loss_gradient(id, ctx, net_out)?,
    })
}

/// The mask-approximation losses rewritten as spectrally weighted indirect
/// mapping: 1/(TF) sum (A - m_hat R)^2 / R^2, with A cos(theta) replacing A
/// in the phase-sensitive case. Equals the corresponding MA loss whenever no
/// target clipping is active.
pub fn weighted_im_value(
    ctx: &LossContext,
    m_hat: &Array2<f64>,
    phase_sensitive: bool,
) -> Result<f64> {
    check_net_out(ctx, m_hat)?;
    let a = ctx.norm_tf();
    let target = if phase_sensitive {
        ctx.phase_sensitive_target()
    } else {
        ctx.clean_mag.values().clone()
    };
    let mut acc = 0.0;
    for ((&t, &m), &r) in target
        .iter()
        .zip(m_hat.iter())
        .zip(ctx.noisy_mag.values().iter())
    {
        let rg = r.max(EPS_DIV);
        let d = t - m * rg;
        acc += d * d / (rg * rg);
    }
    Ok(a * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::MagnitudeSpectrogram;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn unit_bank() -> Arc<MelFilterbank> {
        Arc::new(MelFilterbank::from_weights(arr2(&[[1.0]]), 0.0, 8000.0).unwrap())
    }

    // 2-band unimodal bank over 4 bins, small enough to hand-check.
    fn small_bank() -> Arc<MelFilterbank> {
        let weights = arr2(&[[0.5, 1.0, 0.25, 0.0], [0.0, 0.3, 1.0, 0.6]]);
        Arc::new(MelFilterbank::from_weights(weights, 0.0, 8000.0).unwrap())
    }

    fn scalar_ctx(a: f64, r: f64, theta: f64) -> LossContext {
        LossContext::new(
            MagnitudeSpectrogram::new(arr2(&[[a]])),
            MagnitudeSpectrogram::new(arr2(&[[r]])),
            PhaseDiff::from_theta(arr2(&[[theta]])),
            unit_bank(),
        )
        .unwrap()
    }

    fn random_ctx(seed: u64, bins: usize, frames: usize, fb: Arc<MelFilterbank>) -> LossContext {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let clean = Array2::from_shape_fn((bins, frames), |_| rng.random_range(0.1..2.0));
        let noisy = Array2::from_shape_fn((bins, frames), |_| rng.random_range(0.3..2.0));
        let theta = Array2::from_shape_fn((bins, frames), |_| {
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
        });
        LossContext::new(
            MagnitudeSpectrogram::new(clean),
            MagnitudeSpectrogram::new(noisy),
            PhaseDiff::from_theta(theta),
            fb,
        )
        .unwrap()
    }

    #[test]
    fn id_string_round_trip_and_count() {
        let ids = ObjectiveId::all();
        assert_eq!(ids.len(), 12);
        let expected = [
            "stsa-dm", "lsa-dm", "msa-dm", "lmsa-dm", "pssa-dm", "stsa-im", "lsa-im", "msa-im",
            "lmsa-im", "pssa-im", "stsa-ma", "pssa-ma",
        ];
        for (id, want) in ids.iter().zip(expected) {
            assert_eq!(id.to_string(), want);
            assert_eq!(ObjectiveId::from_str(want).unwrap(), *id);
        }
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        for domain in [Domain::Lsa, Domain::Msa, Domain::Lmsa] {
            assert!(ObjectiveId::new(domain, Approach::Ma).is_err());
            assert!(ObjectiveId::from_str(&format!("{domain}-ma")).is_err());
        }
        assert!(ObjectiveId::from_str("stsa-xx").is_err());
        assert!(ObjectiveId::from_str("nonsense").is_err());
    }

    #[test]
    fn activation_table_is_exhaustive() {
        let table = [
            ("stsa-dm", Activation::Exponential),
            ("lsa-dm", Activation::Exponential),
            ("msa-dm", Activation::Exponential),
            ("lmsa-dm", Activation::Exponential),
            ("pssa-dm", Activation::Linear),
            ("stsa-im", Activation::Rectifier),
            ("lsa-im", Activation::Rectifier),
            ("msa-im", Activation::Rectifier),
            ("lmsa-im", Activation::Rectifier),
            ("pssa-im", Activation::Linear),
            ("stsa-ma", Activation::Rectifier),
            ("pssa-ma", Activation::Linear),
        ];
        for (name, want) in table {
            let id = ObjectiveId::from_str(name).unwrap();
            assert_eq!(output_activation_for(id), want, "{name}");
        }
    }

    #[test]
    fn stsa_dm_scalar_value_and_gradient() {
        let ctx = scalar_ctx(2.0, 1.0, 0.0);
        let id = ObjectiveId::from_str("stsa-dm").unwrap();
        let out = arr2(&[[1.0]]);
        assert!((loss_value(id, &ctx, &out).unwrap() - 1.0).abs() < 1e-15);
        let g = loss_gradient(id, &ctx, &out).unwrap();
        assert!((g[(0, 0)] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn stsa_im_perfect_mask_gives_zero() {
        let ctx = random_ctx(1, 4, 3, small_bank());
        let m_hat = ctx.clean_mag().values() / ctx.noisy_mag().values();
        let id = ObjectiveId::from_str("stsa-im").unwrap();
        assert!(loss_value(id, &ctx, &m_hat).unwrap() < 1e-24);
    }

    #[test]
    fn pssa_ma_matches_double_loop_oracle() {
        let ctx = random_ctx(2, 4, 3, small_bank());
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m_hat = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.5));
        let id = ObjectiveId::from_str("pssa-ma").unwrap();
        let fast = loss_value(id, &ctx, &m_hat).unwrap();

        let mut acc = 0.0;
        for k in 0..4 {
            for l in 0..3 {
                let a = ctx.clean_mag().values()[(k, l)];
                let r = ctx.noisy_mag().values()[(k, l)].max(EPS_DIV);
                let t = ctx.phase_diff().theta()[(k, l)];
                let psm = (a / r * t.cos()).clamp(-10.0, 10.0);
                let d = psm - m_hat[(k, l)];
                acc += d * d;
            }
        }
        let oracle = acc / 12.0;
        assert!((fast - oracle).abs() < 1e-14, "{fast} vs {oracle}");
    }

    #[test]
    fn mel_losses_match_explicit_projection_oracle() {
        let fb = small_bank();
        let ctx = random_ctx(4, 4, 3, fb.clone());
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let out = Array2::from_shape_fn((4, 3), |_| rng.random_range(0.1..2.0));

        // Brute force: form the Mel operands explicitly, then double loop.
        let pred_mel = fb.weights().dot(&out);
        let b = 1.0 / (2.0 * 3.0);
        let mut linear = 0.0;
        let mut logd = 0.0;
        for q in 0..2 {
            for l in 0..3 {
                let t = ctx.clean_mel().values()[(q, l)];
                let p = pred_mel[(q, l)];
                linear += (t - p) * (t - p);
                let d = t.max(EPS_LOG).ln() - p.max(EPS_LOG).ln();
                logd += d * d;
            }
        }
        let msa = loss_value(ObjectiveId::from_str("msa-dm").unwrap(), &ctx, &out).unwrap();
        let lmsa = loss_value(ObjectiveId::from_str("lmsa-dm").unwrap(), &ctx, &out).unwrap();
        assert!((msa - b * linear).abs() < 1e-14);
        assert!((lmsa - b * logd).abs() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_the_minimizer() {
        let fb = small_bank();
        let ctx = random_ctx(6, 4, 3, fb);
        for id in ObjectiveId::all() {
            let minimizer = match id.approach() {
                Approach::Dm => {
                    if id.domain() == Domain::Pssa {
                        ctx.phase_sensitive_target()
                    } else {
                        ctx.clean_mag().values().clone()
                    }
                }
                Approach::Im => {
                    if id.domain() == Domain::Pssa {
                        ctx.phase_sensitive_target() / ctx.noisy_mag().values()
                    } else {
                        ctx.clean_mag().values() / ctx.noisy_mag().values()
                    }
                }
                Approach::Ma => {
                    if id.domain() == Domain::Pssa {
                        compute_psm(ctx.clean_mag(), ctx.noisy_mag(), ctx.phase_diff())
                            .values()
                            .clone()
                    } else {
                        compute_iam(ctx.clean_mag(), ctx.noisy_mag())
                            .values()
                            .clone()
                    }
                }
            };
            let g = loss_gradient(id, &ctx, &minimizer).unwrap();
            let max = g.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(max < 1e-12, "{id}: residual gradient {max}");
        }
    }

    #[test]
    fn losses_are_nonnegative_on_random_inputs() {
        let fb = small_bank();
        for seed in 0..5u64 {
            let ctx = random_ctx(100 + seed, 4, 3, fb.clone());
            let mut rng = ChaCha20Rng::seed_from_u64(200 + seed);
            let out = Array2::from_shape_fn((4, 3), |_| rng.random_range(0.05..2.0));
            for id in ObjectiveId::all() {
                let v = loss_value(id, &ctx, &out).unwrap();
                assert!(v >= 0.0, "{id}: {v}");
            }
        }
    }

    #[test]
    fn weighted_im_identity_in_unclipped_regime() {
        let fb = small_bank();
        let ctx = random_ctx(7, 4, 3, fb);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let m_hat = Array2::from_shape_fn((4, 3), |_| rng.random_range(0.0..2.0));

        let ma = loss_value(ObjectiveId::from_str("stsa-ma").unwrap(), &ctx, &m_hat).unwrap();
        let w = weighted_im_value(&ctx, &m_hat, false).unwrap();
        assert!((ma - w).abs() / ma.max(1e-30) < 1e-12);

        let pma = loss_value(ObjectiveId::from_str("pssa-ma").unwrap(), &ctx, &m_hat).unwrap();
        let pw = weighted_im_value(&ctx, &m_hat, true).unwrap();
        assert!((pma - pw).abs() / pma.max(1e-30) < 1e-12);
    }

    #[test]
    fn weighted_im_zero_at_exact_ratio_and_theta_zero_collapse() {
        let ctx = random_ctx(9, 4, 3, small_bank());
        let exact = ctx.clean_mag().values() / ctx.noisy_mag().values();
        assert!(weighted_im_value(&ctx, &exact, false).unwrap() < 1e-24);

        let zero_theta = LossContext::new(
            ctx.clean_mag().clone(),
            ctx.noisy_mag().clone(),
            PhaseDiff::from_theta(Array2::zeros((4, 3))),
            small_bank(),
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let m_hat = Array2::from_shape_fn((4, 3), |_| rng.random_range(0.0..2.0));
        let plain = weighted_im_value(&zero_theta, &m_hat, false).unwrap();
        let ps = weighted_im_value(&zero_theta, &m_hat, true).unwrap();
        assert!((plain - ps).abs() < 1e-15);
    }

    #[test]
    fn linear_domain_losses_scale_quadratically_ma_is_invariant() {
        let fb = small_bank();
        let ctx = random_ctx(11, 4, 3, fb.clone());
        let c = 2.7;
        let scaled = LossContext::new(
            MagnitudeSpectrogram::new(ctx.clean_mag().values() * c),
            MagnitudeSpectrogram::new(ctx.noisy_mag().values() * c),
            PhaseDiff::from_theta(ctx.phase_diff().theta().clone()),
            fb,
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let out = Array2::from_shape_fn((4, 3), |_| rng.random_range(0.05..1.5));

        for name in [
            "stsa-dm", "msa-dm", "pssa-dm", "stsa-im", "msa-im", "pssa-im",
        ] {
            let id = ObjectiveId::from_str(name).unwrap();
            let base = loss_value(id, &ctx, &out).unwrap();
            // DM output scales with the magnitudes; IM masks do not.
            let scaled_out = if id.approach() == Approach::Dm {
                &out * c
            } else {
                out.clone()
            };
            let v = loss_value(id, &scaled, &scaled_out).unwrap();
            assert!((v - c * c * base).abs() / (c * c * base) < 1e-12, "{name}");
        }
        for name in ["stsa-ma", "pssa-ma"] {
            let id = ObjectiveId::from_str(name).unwrap();
            let base = loss_value(id, &ctx, &out).unwrap();
            let v = loss_value(id, &scaled, &out).unwrap();
            assert!((v - base).abs() / base.max(1e-30) < 1e-12, "{name}");
        }
    }

    #[test]
    fn non_finite_output_is_rejected() {
        let ctx = scalar_ctx(1.0, 1.0, 0.0);
        let id = ObjectiveId::from_str("stsa-dm").unwrap();
        for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            let out = arr2(&[[bad]]);
            assert!(matches!(
                loss_value(id, &ctx, &out),
                Err(ObjectiveError::NonFiniteOutput)
            ));
            assert!(loss_gradient(id, &ctx, &out).is_err());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let ctx = random_ctx(13, 4, 3, small_bank());
        let id = ObjectiveId::from_str("stsa-dm").unwrap();
        let out = Array2::ones((4, 2));
        assert!(matches!(
            loss_value(id, &ctx, &out),
            Err(ObjectiveError::ShapeMismatch(_))
        ));
    }
}
