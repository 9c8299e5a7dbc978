//! Waveform-domain quality proxies: scale-invariant SDR, segmental SNR, and
//! log-spectral distance.

use thiserror::Error;

use crate::dsp::{self, Waveform};
use crate::objectives::EPS_LOG;

/// Reported in place of +inf when the projection residual is zero; the
/// symmetric floor bounds degenerate cases from below.
pub const SI_SDR_CAP_DB: f64 = 100.0;
/// Standard per-frame clamp range for segmental SNR.
pub const SEG_SNR_FLOOR_DB: f64 = -10.0;
pub const SEG_SNR_CEIL_DB: f64 = 35.0;

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("signals have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("reference signal is all zeros")]
    ZeroReference,
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub si_sdr_db: f64,
    pub seg_snr_db: f64,
    pub lsd_db: f64,
}

fn check_lengths(reference: &Waveform, estimate: &Waveform) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(MetricsError::LengthMismatch(
            reference.len(),
            estimate.len(),
        ));
    }
    Ok(())
}

/// Scale-invariant SDR in dB: project the estimate onto the reference and
/// compare target energy against residual energy. Clamped to
/// [-SI_SDR_CAP_DB, SI_SDR_CAP_DB] so degenerate estimates stay finite.
pub fn si_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_lengths(reference, estimate)?;
    let ref_energy: f64 = reference.samples.iter().map(|s| s * s).sum();
    if ref_energy == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let dot: f64 = reference
        .samples
        .iter()
        .zip(&estimate.samples)
        .map(|(r, e)| r * e)
        .sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let residual_energy: f64 = estimate
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(e, r)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    if residual_energy == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target_energy == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target_energy / residual_energy).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Mean over frames of 10 log10(P_ref / P_err), each frame clamped to
/// [-10, 35] dB. Frames where the reference is silent are skipped; if every
/// frame is silent the result is 0.
pub fn segmental_snr(
    reference: &Waveform,
    estimate: &Waveform,
    frame_len: usize,
    hop: usize,
) -> Result<f64> {
    check_lengths(reference, estimate)?;
    assert!(frame_len > 0 && hop > 0);
    let n = reference.len();
    let mut acc = 0.0;
    let mut frames = 0usize;
    let mut start = 0;
    while start + frame_len <= n {
        let r = &reference.samples[start..start + frame_len];
        let e = &estimate.samples[start..start + frame_len];
        let p_ref: f64 = r.iter().map(|s| s * s).sum();
        if p_ref > 0.0 {
            let p_err: f64 = r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
            let value = if p_err == 0.0 {
                SEG_SNR_CEIL_DB
            } else {
                (10.0 * (p_ref / p_err).log10()).clamp(SEG_SNR_FLOOR_DB, SEG_SNR_CEIL_DB)
            };
            acc += value;
            frames += 1;
        }
        start += hop;
    }
    if frames == 0 {
        return Ok(0.0);
    }
    Ok(acc / frames as f64)
}

/// Segmental SNR with the module's standard 640/160 framing.
pub fn segmental_snr_default(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    segmental_snr(reference, estimate, dsp::FFT_SIZE, dsp::HOP_SIZE)
}

/// RMS over frames of the per-frame RMS of 20 (log10 A_ref - log10 A_est),
/// with magnitudes floored before the log.
pub fn log_spectral_distance(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_lengths(reference, estimate)?;
    let ref_mag = dsp::stft(reference)?.magnitude();
    let est_mag = dsp::stft(estimate)?.magnitude();
    let bins = ref_mag.num_bins() as f64;
    let mut acc = 0.0;
    let frames = ref_mag.num_frames();
    for l in 0..frames {
        let mut frame_acc = 0.0;
        for k in 0..ref_mag.num_bins() {
            let a = ref_mag.values()[(k, l)].max(EPS_LOG).log10();
            let b = est_mag.values()[(k, l)].max(EPS_LOG).log10();
            let d = 20.0 * (a - b);
            frame_acc += d * d;
        }
        acc += frame_acc / bins;
    }
    Ok((acc / frames as f64).sqrt())
}

/// All three proxies in one report.
pub fn report(reference: &Waveform, estimate: &Waveform) -> Result<MetricReport> {
    Ok(MetricReport {
        si_sdr_db: si_sdr(reference, estimate)?,
        seg_snr_db: segmental_snr_default(reference, estimate)?,
        lsd_db: log_spectral_distance(reference, estimate)?,
    })
}
