//! Time-frequency analysis and synthesis: STFT/ISTFT with weighted
//! overlap-add, frame chunking, and the Mel filterbank projection.

use std::sync::{Arc, OnceLock};

use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

/// Sample rate every waveform is expected to carry after preprocessing.
pub const SAMPLE_RATE_HZ: u32 = 16_000;
/// Analysis/synthesis window length in samples (40 ms at 16 kHz).
pub const FFT_SIZE: usize = 640;
/// Hop between consecutive frames in samples (10 ms at 16 kHz).
pub const HOP_SIZE: usize = 160;
/// Number of positive-frequency bins kept from the 640-point spectrum.
pub const NUM_BINS: usize = FFT_SIZE / 2 + 1;
/// Number of frames per training chunk (200 ms).
pub const CHUNK_LEN: usize = 20;
/// Number of Mel bands in the default filterbank.
pub const NUM_MEL_BANDS: usize = 80;
/// Frequency range covered by the default Mel filterbank.
pub const MEL_F_MIN_HZ: f64 = 0.0;
pub const MEL_F_MAX_HZ: f64 = 8_000.0;

pub type Result<T> = std::result::Result<T, DspError>;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("signal of {got} samples is shorter than one {need}-sample window")]
    SignalTooShort { got: usize, need: usize },
    #[error("expected sample rate {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("{frames} frames cannot fill a chunk of {chunk_len}")]
    NotEnoughFrames { frames: usize, chunk_len: usize },
    #[error("{num_samples} samples is inconsistent with {frames} frames")]
    InconsistentLength { num_samples: usize, frames: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("filterbank row {0} has no positive weight")]
    EmptyFilter(usize),
    #[error("filterbank weights must be nonnegative")]
    NegativeFilterWeight,
}

/// A mono time-domain signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |acc, s| acc.max(s.abs()))
    }
}

/// Scale a waveform so its largest absolute sample is 1.
///
/// An all-zero signal is returned unchanged; silence is a legitimate
/// degenerate input for synthetic corpora.
pub fn peak_normalize(wav: &Waveform) -> Waveform {
    let peak = wav.peak();
    if peak == 0.0 {
        return wav.clone();
    }
    Waveform::new(
        wav.samples.iter().map(|s| s / peak).collect(),
        wav.sample_rate_hz,
    )
}

/// Complex STFT of a waveform, positive-frequency half spectrum only.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    bins: Array2<Complex64>,
    fft_size: usize,
    hop: usize,
}

impl ComplexSpectrogram {
    pub fn from_bins(bins: Array2<Complex64>, fft_size: usize, hop: usize) -> Self {
        Self {
            bins,
            fft_size,
            hop,
        }
    }

    pub fn bins(&self) -> &Array2<Complex64> {
        &self.bins
    }

    pub fn num_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.bins.ncols()
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram::new(self.bins.mapv(|c| c.norm()))
    }

    /// Replace every bin's magnitude, keeping this spectrogram's phase.
    /// Bins with zero magnitude get phase 0.
    pub fn with_magnitude(&self, mag: &MagnitudeSpectrogram) -> Result<ComplexSpectrogram> {
        if mag.values().dim() != self.bins.dim() {
            return Err(DspError::ShapeMismatch(format!(
                "magnitude {:?} vs spectrogram {:?}",
                mag.values().dim(),
                self.bins.dim()
            )));
        }
        let mut bins = self.bins.clone();
        for (b, &m) in bins.iter_mut().zip(mag.values().iter()) {
            let norm = b.norm();
            *b = if norm == 0.0 {
                Complex64::new(m, 0.0)
            } else {
                *b / norm * m
            };
        }
        Ok(ComplexSpectrogram::from_bins(bins, self.fft_size, self.hop))
    }
}

/// Nonnegative magnitudes of an F x T spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    values: Array2<f64>,
}

impl MagnitudeSpectrogram {
    pub fn new(values: Array2<f64>) -> Self {
        debug_assert!(
            values.iter().all(|&v| v >= 0.0),
            "magnitudes must be nonnegative"
        );
        Self { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn num_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Q x T Mel-band magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Array2<f64>,
}

impl MelSpectrogram {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn num_bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Symmetric Hamming window, w[n] = 0.54 - 0.46 cos(2 pi n / (L - 1)).
pub fn hamming_window(len: usize) -> Vec<f64> {
    assert!(len > 1);
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Number of fully contained analysis frames for a signal of `num_samples`.
pub fn num_frames_for(num_samples: usize) -> usize {
    if num_samples < FFT_SIZE {
        0
    } else {
        (num_samples - FFT_SIZE) / HOP_SIZE + 1
    }
}

/// Forward STFT with the fixed 640/160 Hamming configuration.
///
/// No zero-padding: only windows fully contained in the signal are analyzed,
/// so frame l covers samples [l*160, l*160 + 640).
pub fn stft(wav: &Waveform) -> Result<ComplexSpectrogram> {
    if wav.sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(DspError::SampleRateMismatch {
            expected: SAMPLE_RATE_HZ,
            got: wav.sample_rate_hz,
        });
    }
    if wav.len() < FFT_SIZE {
        return Err(DspError::SignalTooShort {
            got: wav.len(),
            need: FFT_SIZE,
        });
    }
    let num_frames = num_frames_for(wav.len());
    let window = hamming_window(FFT_SIZE);
    let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);

    let mut bins = Array2::zeros((NUM_BINS, num_frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    for l in 0..num_frames {
        let start = l * HOP_SIZE;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(wav.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..NUM_BINS {
            bins[(k, l)] = buf[k];
        }
    }
    Ok(ComplexSpectrogram::from_bins(bins, FFT_SIZE, HOP_SIZE))
}

/// Inverse STFT by weighted overlap-add.
///
/// The synthesis window equals the analysis window and every sample is
/// normalized by the accumulated sum of squared window values, which makes
/// the interior of a round trip exact. Samples whose normalizer is zero
/// (only possible outside frame coverage) are set to 0.
pub fn istft(spec: &ComplexSpectrogram, num_samples: usize) -> Result<Waveform> {
    let fft_size = spec.fft_size();
    let hop = spec.hop();
    let num_frames = spec.num_frames();
    if num_frames == 0 {
        return Err(DspError::InconsistentLength {
            num_samples,
            frames: 0,
        });
    }
    let covered = (num_frames - 1) * hop + fft_size;
    // num_samples must map back to the same frame count under the framing rule.
    if num_samples < covered || num_samples >= covered + hop {
        return Err(DspError::InconsistentLength {
            num_samples,
            frames: num_frames,
        });
    }

    let window = hamming_window(fft_size);
    let ifft = FftPlanner::new().plan_fft_inverse(fft_size);
    let mut acc = vec![0.0f64; num_samples];
    let mut den = vec![0.0f64; num_samples];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let half = fft_size / 2;

    for l in 0..num_frames {
        // Rebuild the full spectrum from the half spectrum by conjugate symmetry.
        for k in 0..=half {
            buf[k] = spec.bins[(k, l)];
        }
        for k in 1..half {
            buf[fft_size - k] = spec.bins[(k, l)].conj();
        }
        ifft.process(&mut buf);
        let start = l * hop;
        for i in 0..fft_size {
            let sample = buf[i].re / fft_size as f64;
            acc[start + i] += sample * window[i];
            den[start + i] += window[i] * window[i];
        }
    }

    let samples = acc
        .iter()
        .zip(den.iter())
        .map(|(&a, &d)| if d > 0.0 { a / d } else { 0.0 })
        .collect();
    Ok(Waveform::new(samples, SAMPLE_RATE_HZ))
}

/// Split a spectrogram into consecutive non-overlapping F x chunk_len blocks.
/// Trailing frames that do not fill a whole chunk are dropped.
pub fn chunk_frames(mag: &MagnitudeSpectrogram, chunk_len: usize) -> Result<Vec<Array2<f64>>> {
    assert!(chunk_len > 0);
    let frames = mag.num_frames();
    if frames < chunk_len {
        return Err(DspError::NotEnoughFrames { frames, chunk_len });
    }
    let num_chunks = frames / chunk_len;
    let mut chunks = Vec::with_capacity(num_chunks);
    for c in 0..num_chunks {
        let cols = c * chunk_len..(c + 1) * chunk_len;
        chunks.push(mag.values().slice(ndarray::s![.., cols]).to_owned());
    }
    Ok(chunks)
}

pub fn hz_to_mel(f_hz: f64) -> f64 {
    2595.0 * (1.0 + f_hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Q x F matrix of triangular Mel filters.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    f_min_hz: f64,
    f_max_hz: f64,
}

impl MelFilterbank {
    /// Build triangular filters with centers uniformly spaced on the Mel
    /// scale between `f_min_hz` and `f_max_hz`, evaluated at the bin center
    /// frequencies of an `fft_size`-point spectrum.
    pub fn build(
        num_mel: usize,
        fft_size: usize,
        sample_rate_hz: u32,
        f_min_hz: f64,
        f_max_hz: f64,
    ) -> Self {
        assert!(num_mel > 0 && fft_size > 1);
        let num_bins = fft_size / 2 + 1;
        let hz_per_bin = sample_rate_hz as f64 / fft_size as f64;

        let mel_lo = hz_to_mel(f_min_hz);
        let mel_hi = hz_to_mel(f_max_hz);
        let step = (mel_hi - mel_lo) / (num_mel + 1) as f64;
        let edges: Vec<f64> = (0..num_mel + 2)
            .map(|i| mel_to_hz(mel_lo + i as f64 * step))
            .collect();

        let mut weights = Array2::zeros((num_mel, num_bins));
        for q in 0..num_mel {
            let (left, center, right) = (edges[q], edges[q + 1], edges[q + 2]);
            for k in 0..num_bins {
                let f = k as f64 * hz_per_bin;
                let w = if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                weights[(q, k)] = w;
            }
        }
        Self {
            weights,
            f_min_hz,
            f_max_hz,
        }
    }

    /// Wrap an explicit weight matrix, checking nonnegativity and that no
    /// filter is empty. Used by tests that need small synthetic banks.
    pub fn from_weights(weights: Array2<f64>, f_min_hz: f64, f_max_hz: f64) -> Result<Self> {
        if weights.iter().any(|&w| w < 0.0) {
            return Err(DspError::NegativeFilterWeight);
        }
        for (q, row) in weights.rows().into_iter().enumerate() {
            if !row.iter().any(|&w| w > 0.0) {
                return Err(DspError::EmptyFilter(q));
            }
        }
        Ok(Self {
            weights,
            f_min_hz,
            f_max_hz,
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn num_mel(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn f_min_hz(&self) -> f64 {
        self.f_min_hz
    }

    pub fn f_max_hz(&self) -> f64 {
        self.f_max_hz
    }

    /// Project a magnitude spectrogram onto the Mel bands (weights * mag).
    pub fn project(&self, mag: &MagnitudeSpectrogram) -> Result<MelSpectrogram> {
        if mag.num_bins() != self.num_bins() {
            return Err(DspError::ShapeMismatch(format!(
                "filterbank expects {} bins, magnitude has {}",
                self.num_bins(),
                mag.num_bins()
            )));
        }
        Ok(MelSpectrogram::new(self.weights.dot(mag.values())))
    }

    /// Back-project a Q x T Mel-domain matrix to F x T (transpose product).
    pub fn back_project(&self, mel: &Array2<f64>) -> Result<Array2<f64>> {
        if mel.nrows() != self.num_mel() {
            return Err(DspError::ShapeMismatch(format!(
                "filterbank has {} bands, input has {} rows",
                self.num_mel(),
                mel.nrows()
            )));
        }
        Ok(self.weights.t().dot(mel))
    }
}

/// The 80-band, 0-8 kHz filterbank matching the fixed STFT configuration.
pub fn mel_filterbank() -> MelFilterbank {
    MelFilterbank::build(
        NUM_MEL_BANDS,
        FFT_SIZE,
        SAMPLE_RATE_HZ,
        MEL_F_MIN_HZ,
        MEL_F_MAX_HZ,
    )
}

/// Process-wide shared copy of the default filterbank.
pub fn shared_mel_filterbank() -> Arc<MelFilterbank> {
    static BANK: OnceLock<Arc<MelFilterbank>> = OnceLock::new();
    BANK.get_or_init(|| Arc::new(mel_filterbank())).clone()
}

/// Convenience wrapper over [`MelFilterbank::project`].
pub fn mel_project(fb: &MelFilterbank, mag: &MagnitudeSpectrogram) -> Result<MelSpectrogram> {
    fb.project(mag)
}

/// Per-frame energies (sum of squared magnitudes over bins) of a chunk.
pub fn frame_energies(mag: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(
        mag.columns()
            .into_iter()
            .map(|col| col.iter().map(|v| v * v).sum()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sine(freq_hz: f64, num_samples: usize, amplitude: f64) -> Waveform {
        let samples = (0..num_samples)
            .map(|n| {
                amplitude
                    * (2.0 * std::f64::consts::PI * freq_hz * n as f64 / SAMPLE_RATE_HZ as f64)
                        .sin()
            })
            .collect();
        Waveform::new(samples, SAMPLE_RATE_HZ)
    }

    fn white_noise(seed: u64, num_samples: usize) -> Waveform {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let samples = (0..num_samples)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Waveform::new(samples, SAMPLE_RATE_HZ)
    }

    // Naive O(n*F) DFT of one windowed frame, the oracle for stft().
    fn dft_frame_oracle(samples: &[f64], start: usize) -> Vec<Complex64> {
        let window = hamming_window(FFT_SIZE);
        (0..NUM_BINS)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..FFT_SIZE {
                    let angle = -2.0 * std::f64::consts::PI * k as f64 * n as f64 / FFT_SIZE as f64;
                    acc +=
                        Complex64::new(angle.cos(), angle.sin()) * (samples[start + n] * window[n]);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn peak_normalize_scales_by_inverse_peak() {
        let wav = Waveform::new(vec![0.5, -0.25], SAMPLE_RATE_HZ);
        assert_eq!(peak_normalize(&wav).samples, vec![1.0, -0.5]);
    }

    #[test]
    fn peak_normalize_passes_through_silence() {
        let wav = Waveform::new(vec![0.0; 8], SAMPLE_RATE_HZ);
        assert_eq!(peak_normalize(&wav).samples, vec![0.0; 8]);
    }

    #[test]
    fn peak_normalize_uses_absolute_value() {
        let wav = Waveform::new(vec![-2.0, 1.0], SAMPLE_RATE_HZ);
        assert_eq!(peak_normalize(&wav).samples, vec![-1.0, 0.5]);
    }

    #[test]
    fn stft_frame_count_one_second() {
        let spec = stft(&white_noise(7, 16_000)).unwrap();
        assert_eq!(spec.num_frames(), 97);
        assert_eq!(spec.num_bins(), 321);
    }

    #[test]
    fn stft_single_window() {
        let spec = stft(&white_noise(9, 640)).unwrap();
        assert_eq!(spec.num_frames(), 1);
    }

    #[test]
    fn stft_rejects_short_signal() {
        let err = stft(&white_noise(1, 639)).unwrap_err();
        assert!(matches!(
            err,
            DspError::SignalTooShort {
                got: 639,
                need: 640
            }
        ));
    }

    #[test]
    fn stft_rejects_wrong_sample_rate() {
        let wav = Waveform::new(vec![0.0; 16_000], 44_100);
        assert!(matches!(
            stft(&wav).unwrap_err(),
            DspError::SampleRateMismatch { .. }
        ));
    }

    #[test]
    fn stft_sine_peaks_at_expected_bin() {
        // 1 kHz at 25 Hz/bin lands on bin 40.
        let wav = sine(1000.0, 16_000, 1.0);
        let spec = stft(&wav).unwrap();
        let mag = spec.magnitude();
        for l in 0..spec.num_frames() {
            let col = mag.values().column(l);
            let argmax = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 40, "frame {l} peaked at bin {argmax}");
        }
    }

    #[test]
    fn stft_matches_naive_dft() {
        let wav = white_noise(11, 1600);
        let spec = stft(&wav).unwrap();
        for &l in &[0usize, 3, spec.num_frames() - 1] {
            let oracle = dft_frame_oracle(&wav.samples, l * HOP_SIZE);
            for k in 0..NUM_BINS {
                let diff = (spec.bins()[(k, l)] - oracle[k]).norm();
                assert!(diff < 1e-9, "bin {k} frame {l}: diff {diff}");
            }
        }
    }

    #[test]
    fn stft_is_linear() {
        let a = white_noise(21, 3200);
        let b = white_noise(22, 3200);
        let sum = Waveform::new(
            a.samples
                .iter()
                .zip(&b.samples)
                .map(|(x, y)| x + y)
                .collect(),
            SAMPLE_RATE_HZ,
        );
        let sa = stft(&a).unwrap();
        let sb = stft(&b).unwrap();
        let ss = stft(&sum).unwrap();
        for ((&x, &y), &s) in sa.bins().iter().zip(sb.bins().iter()).zip(ss.bins().iter()) {
            assert!((x + y - s).norm() < 1e-9);
        }
    }

    #[test]
    fn stft_scales_with_amplitude() {
        let one = stft(&sine(500.0, 2000, 1.0)).unwrap();
        let two = stft(&sine(500.0, 2000, 2.0)).unwrap();
        for (&a, &b) in one.bins().iter().zip(two.bins().iter()) {
            assert!((a * 2.0 - b).norm() < 1e-9);
        }
    }

    #[test]
    fn istft_round_trip_interior_is_exact() {
        let wav = white_noise(33, 16_000);
        let spec = stft(&wav).unwrap();
        let rec = istft(&spec, wav.len()).unwrap();
        assert_eq!(rec.len(), wav.len());
        let lo = FFT_SIZE;
        let hi = wav.len() - FFT_SIZE;
        let mut err = 0.0;
        let mut ref_pow = 0.0;
        for i in lo..hi {
            err += (rec.samples[i] - wav.samples[i]).powi(2);
            ref_pow += wav.samples[i].powi(2);
        }
        let rel = (err / ref_pow).sqrt();
        assert!(rel < 1e-6, "interior relative RMS error {rel}");
    }

    #[test]
    fn istft_zero_spectrogram_gives_silence() {
        let bins = Array2::from_elem((NUM_BINS, 3), Complex64::new(0.0, 0.0));
        let spec = ComplexSpectrogram::from_bins(bins, FFT_SIZE, HOP_SIZE);
        let wav = istft(&spec, 2 * HOP_SIZE + FFT_SIZE).unwrap();
        assert!(wav.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn istft_single_frame_reconstructs_windowed_segment() {
        // Direct synthesis oracle: with one frame the normalized overlap-add
        // must reproduce the original samples over the whole window.
        let wav = sine(250.0, FFT_SIZE, 0.8);
        let spec = stft(&wav).unwrap();
        assert_eq!(spec.num_frames(), 1);
        let rec = istft(&spec, FFT_SIZE).unwrap();
        for i in 0..FFT_SIZE {
            assert!(
                (rec.samples[i] - wav.samples[i]).abs() < 1e-9,
                "sample {i}: {} vs {}",
                rec.samples[i],
                wav.samples[i]
            );
        }
    }

    #[test]
    fn istft_rejects_inconsistent_length() {
        let spec = stft(&white_noise(4, 1600)).unwrap();
        assert!(matches!(
            istft(&spec, 100),
            Err(DspError::InconsistentLength { .. })
        ));
        assert!(matches!(
            istft(&spec, 100_000),
            Err(DspError::InconsistentLength { .. })
        ));
    }

    #[test]
    fn chunk_counts_follow_floor_division() {
        let mag = MagnitudeSpectrogram::new(Array2::zeros((NUM_BINS, 97)));
        let chunks = chunk_frames(&mag, CHUNK_LEN).unwrap();
        assert_eq!(chunks.len(), 4); // 17 trailing frames dropped
        let mag = MagnitudeSpectrogram::new(Array2::zeros((NUM_BINS, 20)));
        assert_eq!(chunk_frames(&mag, CHUNK_LEN).unwrap().len(), 1);
    }

    #[test]
    fn chunk_concatenation_tiles_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let values = Array2::from_shape_fn((NUM_BINS, 40), |_| rng.random_range(0.0..1.0));
        let mag = MagnitudeSpectrogram::new(values.clone());
        let chunks = chunk_frames(&mag, CHUNK_LEN).unwrap();
        assert_eq!(chunks.len(), 2);
        for (c, chunk) in chunks.iter().enumerate() {
            for k in 0..NUM_BINS {
                for l in 0..CHUNK_LEN {
                    assert_eq!(chunk[(k, l)], values[(k, c * CHUNK_LEN + l)]);
                }
            }
        }
    }

    #[test]
    fn chunk_rejects_short_spectrogram() {
        let mag = MagnitudeSpectrogram::new(Array2::zeros((NUM_BINS, 19)));
        assert!(matches!(
            chunk_frames(&mag, CHUNK_LEN),
            Err(DspError::NotEnoughFrames {
                frames: 19,
                chunk_len: 20
            })
        ));
    }

    #[test]
    fn mel_filterbank_shape_and_rows() {
        let fb = mel_filterbank();
        assert_eq!(fb.num_mel(), 80);
        assert_eq!(fb.num_bins(), 321);
        for (q, row) in fb.weights().rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            assert!(sum > 0.0, "row {q} sums to {sum}");
        }
    }

    #[test]
    fn mel_filterbank_rows_are_unimodal() {
        let fb = mel_filterbank();
        for (q, row) in fb.weights().rows().into_iter().enumerate() {
            let mut falling = false;
            let mut prev = 0.0;
            for (k, &w) in row.iter().enumerate() {
                if w < prev {
                    falling = true;
                } else if w > prev {
                    assert!(!falling, "row {q} rises again at bin {k}");
                }
                prev = w;
            }
        }
    }

    #[test]
    fn mel_centers_increase_monotonically() {
        let fb = mel_filterbank();
        let centers: Vec<usize> = fb
            .weights()
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            })
            .collect();
        for q in 1..centers.len() {
            assert!(
                centers[q] >= centers[q - 1],
                "band {q} center moved backwards"
            );
        }
    }

    #[test]
    fn mel_project_zero_and_one_hot() {
        let fb = mel_filterbank();
        let zero = MagnitudeSpectrogram::new(Array2::zeros((321, 4)));
        assert!(fb
            .project(&zero)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));

        let mut one_hot = Array2::zeros((321, 1));
        one_hot[(40, 0)] = 1.0;
        let projected = fb.project(&MagnitudeSpectrogram::new(one_hot)).unwrap();
        for q in 0..80 {
            assert_eq!(projected.values()[(q, 0)], fb.weights()[(q, 40)]);
        }
    }

    #[test]
    fn mel_project_matches_double_loop_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(40);
        let values = Array2::from_shape_fn((321, 5), |_| rng.random_range(0.0..2.0));
        let fb = mel_filterbank();
        let fast = fb
            .project(&MagnitudeSpectrogram::new(values.clone()))
            .unwrap();
        for q in 0..80 {
            for l in 0..5 {
                let mut acc = 0.0;
                for k in 0..321 {
                    acc += fb.weights()[(q, k)] * values[(k, l)];
                }
                let diff = (fast.values()[(q, l)] - acc).abs();
                assert!(diff < 1e-10, "band {q} frame {l}: diff {diff}");
            }
        }
    }

    #[test]
    fn mel_project_rejects_shape_mismatch() {
        let fb = mel_filterbank();
        let mag = MagnitudeSpectrogram::new(Array2::zeros((100, 4)));
        assert!(matches!(fb.project(&mag), Err(DspError::ShapeMismatch(_))));
    }

    #[test]
    fn mel_project_is_linear() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let a = Array2::from_shape_fn((321, 3), |_| rng.random_range(0.0..1.0));
        let b = Array2::from_shape_fn((321, 3), |_| rng.random_range(0.0..1.0));
        let fb = mel_filterbank();
        let pa = fb.project(&MagnitudeSpectrogram::new(a.clone())).unwrap();
        let pb = fb.project(&MagnitudeSpectrogram::new(b.clone())).unwrap();
        let psum = fb.project(&MagnitudeSpectrogram::new(&a + &b)).unwrap();
        for ((&x, &y), &s) in pa
            .values()
            .iter()
            .zip(pb.values().iter())
            .zip(psum.values().iter())
        {
            assert!((x + y - s).abs() < 1e-9);
        }
    }

    #[test]
    fn from_weights_rejects_empty_rows() {
        let mut weights = Array2::zeros((2, 4));
        weights[(0, 1)] = 1.0;
        assert!(matches!(
            MelFilterbank::from_weights(weights, 0.0, 8000.0),
            Err(DspError::EmptyFilter(1))
        ));
    }
}
