//! Full-utterance enhancement: analyze, run the estimator over
//! non-overlapping chunks, stitch the outputs, mask or map, and resynthesize
//! with the noisy phase.

use ndarray::{s, Array1, Array2};
use thiserror::Error;

use crate::dsp::{self, MagnitudeSpectrogram, Waveform, CHUNK_LEN};
use crate::estimator::{EstimatorError, EstimatorModel};
use crate::objectives::{Approach, Domain, ObjectiveId};
use crate::signalmodel::{apply_mask, Mask, MaskKind, SignalModelError};

pub type Result<T> = std::result::Result<T, EnhanceError>;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    SignalModel(#[from] SignalModelError),
    #[error("{got} aux vectors provided, utterance needs {need}")]
    AuxCount { got: usize, need: usize },
}

#[derive(Debug, Clone)]
pub struct EnhanceResult {
    pub enhanced: Waveform,
    pub enhanced_mag: MagnitudeSpectrogram,
    /// The clipped mask that was applied, for mask-based objectives.
    pub mask_used: Option<Mask>,
}

/// Number of chunks covering `num_frames`, the last one zero-padded.
pub fn num_chunks(num_frames: usize) -> usize {
    num_frames.div_ceil(CHUNK_LEN)
}

/// Estimated masks take the phase-sensitive range for PSSA objectives and
/// the amplitude-mask range otherwise.
pub fn mask_kind_for(id: ObjectiveId) -> MaskKind {
    if id.domain() == Domain::Pssa {
        MaskKind::Psm
    } else {
        MaskKind::Iam
    }
}

/// Turn a stitched network output into the enhanced magnitude. Mask-based
/// approaches clip the estimate into its target range and multiply with the
/// noisy magnitude; direct mapping takes the output as the magnitude itself,
/// floored at zero.
pub fn apply_net_output(
    id: ObjectiveId,
    noisy_mag: &MagnitudeSpectrogram,
    net_out: Array2<f64>,
) -> Result<(MagnitudeSpectrogram, Option<Mask>)> {
    match id.approach() {
        Approach::Dm => Ok((
            MagnitudeSpectrogram::new(net_out.mapv(|v| v.max(0.0))),
            None,
        )),
        Approach::Im | Approach::Ma => {
            let mask = Mask::from_estimate(net_out, mask_kind_for(id));
            let mag = apply_mask(&mask, noisy_mag)?;
            Ok((mag, Some(mask)))
        }
    }
}

/// Enhance one utterance with a trained model.
///
/// The spectrogram is processed in non-overlapping 20-frame chunks; the
/// final partial chunk is zero-padded for the forward pass and only its
/// valid frames are kept. Synthesis always reuses the noisy phase and the
/// output has exactly the input's sample count.
pub fn enhance_utterance(
    model: &EstimatorModel,
    id: ObjectiveId,
    noisy: &Waveform,
    aux: Option<&[Array1<f64>]>,
) -> Result<EnhanceResult> {
    let noisy_spec = dsp::stft(noisy)?;
    let noisy_mag = noisy_spec.magnitude();
    let num_frames = noisy_mag.num_frames();
    let num_bins = noisy_mag.num_bins();
    let chunks = num_chunks(num_frames);
    if let Some(aux) = aux {
        if aux.len() != chunks {
            return Err(EnhanceError::AuxCount {
                got: aux.len(),
                need: chunks,
            });
        }
    }

    let mut net_out = Array2::zeros((num_bins, num_frames));
    for c in 0..chunks {
        let start = c * CHUNK_LEN;
        let end = (start + CHUNK_LEN).min(num_frames);
        let mut chunk = Array2::zeros((num_bins, CHUNK_LEN));
        chunk
            .slice_mut(s![.., ..end - start])
            .assign(&noisy_mag.values().slice(s![.., start..end]));
        let out = model.forward(&chunk, aux.map(|a| &a[c]))?;
        net_out
            .slice_mut(s![.., start..end])
            .assign(&out.slice(s![.., ..end - start]));
    }

    let (enhanced_mag, mask_used) = apply_net_output(id, &noisy_mag, net_out)?;
    let enhanced_spec = noisy_spec.with_magnitude(&enhanced_mag)?;
    let enhanced = dsp::istft(&enhanced_spec, noisy.len())?;
    Ok(EnhanceResult {
        enhanced,
        enhanced_mag,
        mask_used,
    })
}
