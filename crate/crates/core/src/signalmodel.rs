//! Additive mixture construction at a prescribed SNR, the noisy/clean phase
//! difference, and the amplitude and phase-sensitive mask targets.

use ndarray::Array2;
use thiserror::Error;

use crate::dsp::{ComplexSpectrogram, MagnitudeSpectrogram, Waveform};

/// Guard applied to noisy magnitudes before dividing. Together with mask
/// clipping this bounds mask targets on silent bins (1/EPS_DIV far exceeds
/// the clip ceiling, so guarded divisions always land on the clip bound).
pub const EPS_DIV: f64 = 1e-8;

/// Clip ceiling shared by both mask kinds.
pub const MASK_CLIP_HI: f64 = 10.0;

pub type Result<T> = std::result::Result<T, SignalModelError>;

#[derive(Debug, Error)]
pub enum SignalModelError {
    #[error("signals have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("signals have different sample rates ({0} vs {1})")]
    SampleRateMismatch(u32, u32),
    #[error("{0} signal has zero power; SNR undefined")]
    ZeroPower(&'static str),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

/// Mean squared amplitude over the whole signal.
pub fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// A clean/noise/noisy triplet with noisy = clean + scaled noise.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub clean: Waveform,
    pub noise_scaled: Waveform,
    pub noisy: Waveform,
    pub snr_db: f64,
}

impl Mixture {
    /// SNR recomputed from the stored components, for verification.
    pub fn measured_snr_db(&self) -> f64 {
        10.0 * (mean_power(&self.clean.samples) / mean_power(&self.noise_scaled.samples)).log10()
    }
}

/// Scale `noise` so that clean-to-noise power ratio equals `snr_db`, then add.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Mixture> {
    if clean.len() != noise.len() {
        return Err(SignalModelError::LengthMismatch(clean.len(), noise.len()));
    }
    if clean.sample_rate_hz != noise.sample_rate_hz {
        return Err(SignalModelError::SampleRateMismatch(
            clean.sample_rate_hz,
            noise.sample_rate_hz,
        ));
    }
    let p_clean = mean_power(&clean.samples);
    let p_noise = mean_power(&noise.samples);
    if p_clean == 0.0 {
        return Err(SignalModelError::ZeroPower("clean"));
    }
    if p_noise == 0.0 {
        return Err(SignalModelError::ZeroPower("noise"));
    }

    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise_scaled = Waveform::new(
        noise.samples.iter().map(|s| s * gain).collect(),
        noise.sample_rate_hz,
    );
    let noisy = Waveform::new(
        clean
            .samples
            .iter()
            .zip(&noise_scaled.samples)
            .map(|(c, n)| c + n)
            .collect(),
        clean.sample_rate_hz,
    );
    Ok(Mixture {
        clean: clean.clone(),
        noise_scaled,
        noisy,
        snr_db,
    })
}

/// Per-bin phase difference between two spectrograms, wrapped to (-pi, pi].
#[derive(Debug, Clone)]
pub struct PhaseDiff {
    theta: Array2<f64>,
}

impl PhaseDiff {
    pub fn from_theta(theta: Array2<f64>) -> Self {
        Self { theta }
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn cos(&self) -> Array2<f64> {
        self.theta.mapv(f64::cos)
    }
}

fn wrap_angle(mut a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// theta(k,l) = angle(noisy) - angle(clean), wrapped to (-pi, pi].
pub fn phase_difference(
    noisy_spec: &ComplexSpectrogram,
    clean_spec: &ComplexSpectrogram,
) -> Result<PhaseDiff> {
    if noisy_spec.bins().dim() != clean_spec.bins().dim() {
        return Err(SignalModelError::ShapeMismatch(
            noisy_spec.bins().dim(),
            clean_spec.bins().dim(),
        ));
    }
    let mut theta = Array2::zeros(noisy_spec.bins().dim());
    for ((t, &y), &x) in theta
        .iter_mut()
        .zip(noisy_spec.bins().iter())
        .zip(clean_spec.bins().iter())
    {
        *t = wrap_angle(y.arg() - x.arg());
    }
    Ok(PhaseDiff::from_theta(theta))
}

/// Which ideal mask a matrix of values represents; fixes the clip range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Amplitude mask clean/noisy, clipped to [0, 10].
    Iam,
    /// Phase-sensitive mask (clean/noisy)*cos(theta), clipped to [-10, 10].
    Psm,
}

impl MaskKind {
    pub fn clip_lo(self) -> f64 {
        match self {
            MaskKind::Iam => 0.0,
            MaskKind::Psm => -MASK_CLIP_HI,
        }
    }

    pub fn clip_hi(self) -> f64 {
        MASK_CLIP_HI
    }
}

/// An F x T mask with values inside its kind's clip range.
#[derive(Debug, Clone)]
pub struct Mask {
    values: Array2<f64>,
    kind: MaskKind,
}

impl Mask {
    /// Clip arbitrary values (targets or network estimates) into range.
    pub fn from_estimate(values: Array2<f64>, kind: MaskKind) -> Self {
        let (lo, hi) = (kind.clip_lo(), kind.clip_hi());
        Self {
            values: values.mapv(|v| v.clamp(lo, hi)),
            kind,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }
}

/// Ideal amplitude mask clean/noisy with guarded division, clipped to [0, 10].
pub fn compute_iam(clean_mag: &MagnitudeSpectrogram, noisy_mag: &MagnitudeSpectrogram) -> Mask {
    assert_eq!(clean_mag.values().dim(), noisy_mag.values().dim());
    let mut values = Array2::zeros(clean_mag.values().dim());
    for ((v, &a), &r) in values
        .iter_mut()
        .zip(clean_mag.values().iter())
        .zip(noisy_mag.values().iter())
    {
        *v = a / r.max(EPS_DIV);
    }
    Mask::from_estimate(values, MaskKind::Iam)
}

/// Phase-sensitive mask (clean/noisy)*cos(theta), clipped to [-10, 10].
pub fn compute_psm(
    clean_mag: &MagnitudeSpectrogram,
    noisy_mag: &MagnitudeSpectrogram,
    phase_diff: &PhaseDiff,
) -> Mask {
    assert_eq!(clean_mag.values().dim(), noisy_mag.values().dim());
    assert_eq!(clean_mag.values().dim(), phase_diff.theta().dim());
    let mut values = Array2::zeros(clean_mag.values().dim());
    for (((v, &a), &r), &t) in values
        .iter_mut()
        .zip(clean_mag.values().iter())
        .zip(noisy_mag.values().iter())
        .zip(phase_diff.theta().iter())
    {
        *v = a / r.max(EPS_DIV) * t.cos();
    }
    Mask::from_estimate(values, MaskKind::Psm)
}

/// Point-wise product of mask and noisy magnitude. Negative products are
/// floored at zero since the result feeds synthesis as a magnitude.
pub fn apply_mask(mask: &Mask, noisy_mag: &MagnitudeSpectrogram) -> Result<MagnitudeSpectrogram> {
    if mask.values().dim() != noisy_mag.values().dim() {
        return Err(SignalModelError::ShapeMismatch(
            mask.values().dim(),
            noisy_mag.values().dim(),
        ));
    }
    let mut values = Array2::zeros(mask.values().dim());
    for ((v, &m), &r) in values
        .iter_mut()
        .zip(mask.values().iter())
        .zip(noisy_mag.values().iter())
    {
        *v = (m * r).max(0.0);
    }
    Ok(MagnitudeSpectrogram::new(values))
}
