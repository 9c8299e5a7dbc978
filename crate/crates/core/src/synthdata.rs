//! Deterministic synthetic corpus: a speech-like harmonic generator, three
//! noise kinds, SNR-grid mixture construction with disjoint seed spaces per
//! split, and a tab-separated manifest format.

use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dsp::{
    self, peak_normalize, shared_mel_filterbank, DspError, MagnitudeSpectrogram, Waveform,
    CHUNK_LEN, FFT_SIZE, SAMPLE_RATE_HZ,
};
use crate::estimator::TrainItem;
use crate::objectives::{LossContext, ObjectiveError};
use crate::signalmodel::{mix_at_snr, phase_difference, Mixture, SignalModelError};

/// Shortest generatable utterance: one training chunk of audio.
pub const MIN_UTTERANCE_SECONDS: f64 = 0.2;
/// Syllable-style amplitude modulation rate of the clean generator.
pub const SYLLABIC_RATE_HZ: f64 = 4.0;
/// Number of component voices summed into the babble proxy.
pub const BABBLE_VOICES: usize = 8;

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("utterance of {got}s is shorter than the minimum {min}s")]
    TooShort { got: f64, min: f64 },
    #[error(transparent)]
    SignalModel(#[from] SignalModelError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed manifest: {0}")]
    ManifestParse(String),
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// Tag constants keeping clean, noise, and babble seed spaces apart.
const CLEAN_STREAM: u64 = 0x434C_4541_4E5F_5347;
const NOISE_STREAM: u64 = 0x4E4F_4953_455F_5347;
const BABBLE_STREAM: u64 = 0x4241_4242_4C45_5F53;
const SSN_SHAPE_STREAM: u64 = 0x5353_4E5F_5348_4150;

fn mix_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ stream).wrapping_add(index))
}

fn sample_count(seconds: f64) -> Result<usize> {
    if seconds < MIN_UTTERANCE_SECONDS {
        return Err(SynthError::TooShort {
            got: seconds,
            min: MIN_UTTERANCE_SECONDS,
        });
    }
    Ok((seconds * SAMPLE_RATE_HZ as f64).round() as usize)
}

/// Speech-like stand-in: a pitch-modulated harmonic source with
/// formant-style band emphasis and syllabic amplitude modulation at 4 Hz.
/// Peak-normalized, 16 kHz, fully determined by the seed.
pub fn gen_clean(seed: u64, seconds: f64) -> Result<Waveform> {
    let n = sample_count(seconds)?;
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, CLEAN_STREAM, 0));
    let tau = std::f64::consts::TAU;
    let fs = SAMPLE_RATE_HZ as f64;

    let f0_base: f64 = rng.random_range(105.0..210.0);
    let vibrato_rate: f64 = rng.random_range(1.5..3.5);
    let vibrato_depth: f64 = rng.random_range(0.03..0.10);
    let vibrato_phase: f64 = rng.random_range(0.0..tau);
    let am_phase: f64 = rng.random_range(0.0..tau);
    let formants: [(f64, f64); 3] = [
        (rng.random_range(350.0..800.0), 130.0),
        (rng.random_range(1000.0..1900.0), 220.0),
        (rng.random_range(2300.0..3200.0), 320.0),
    ];

    // Harmonics up to 6 kHz, shaped by formant resonances and a spectral
    // tilt that keeps most of the energy in the speech band.
    let num_harmonics = (6000.0 / f0_base).floor() as usize;
    let mut gains = Vec::with_capacity(num_harmonics);
    let mut phases = Vec::with_capacity(num_harmonics);
    for h in 1..=num_harmonics {
        let f = h as f64 * f0_base;
        let resonance: f64 = formants
            .iter()
            .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
            .sum();
        let tilt = 1.0 / (1.0 + (f / 1800.0).powi(2));
        gains.push((0.1 + resonance) * tilt);
        phases.push(rng.random_range(0.0..tau));
    }

    let mut samples = Vec::with_capacity(n);
    let mut phase_acc = 0.0f64;
    for i in 0..n {
        let t = i as f64 / fs;
        let f0 = f0_base * (1.0 + vibrato_depth * (tau * vibrato_rate * t + vibrato_phase).sin());
        phase_acc += tau * f0 / fs;
        let mut v = 0.0;
        for (h, (&g, &p)) in gains.iter().zip(phases.iter()).enumerate() {
            v += g * ((h + 1) as f64 * phase_acc + p).sin();
        }
        let syllable = 0.5 * (1.0 + (tau * SYLLABIC_RATE_HZ * t + am_phase).sin());
        let am = 0.3 + 0.7 * syllable * syllable;
        samples.push(am * v);
    }

    Ok(peak_normalize(&Waveform::new(samples, SAMPLE_RATE_HZ)))
}

/// Available noise generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    White,
    /// White noise filtered to the long-term average spectrum of the clean
    /// generator, a speech-shaped-noise stand-in.
    SsnProxy,
    /// Sum of eight independent clean-generator voices.
    BabbleProxy,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [
        NoiseKind::White,
        NoiseKind::SsnProxy,
        NoiseKind::BabbleProxy,
    ];

    fn token(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::SsnProxy => "ssn_proxy",
            NoiseKind::BabbleProxy => "babble_proxy",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for NoiseKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| SynthError::ManifestParse(format!("unknown noise kind '{s}'")))
    }
}

fn white_samples(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, NOISE_STREAM, 0));
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Long-term average magnitude spectrum of the clean generator, measured
/// once over a fixed bank of internal seeds.
fn clean_long_term_spectrum() -> &'static Vec<f64> {
    static SHAPE: OnceLock<Vec<f64>> = OnceLock::new();
    SHAPE.get_or_init(|| {
        let mut shape = vec![0.0f64; dsp::NUM_BINS];
        let mut total_frames = 0usize;
        for i in 0..8u64 {
            let wav =
                gen_clean(mix_seed(0, SSN_SHAPE_STREAM, i), 1.0).expect("internal shape utterance");
            let mag = dsp::stft(&wav)
                .expect("shape utterance is long enough")
                .magnitude();
            for l in 0..mag.num_frames() {
                for k in 0..dsp::NUM_BINS {
                    shape[k] += mag.values()[(k, l)];
                }
            }
            total_frames += mag.num_frames();
        }
        for v in shape.iter_mut() {
            *v /= total_frames as f64;
        }
        shape
    })
}

fn gen_ssn_proxy(seed: u64, n: usize) -> Result<Waveform> {
    let shape = clean_long_term_spectrum();
    // Extra length so the sliced interior avoids overlap-add edges.
    let padded = n + 2 * FFT_SIZE;
    let white = Waveform::new(white_samples(seed, padded), SAMPLE_RATE_HZ);
    let spec = dsp::stft(&white)?;
    let mut bins = spec.bins().clone();
    for k in 0..bins.nrows() {
        for l in 0..bins.ncols() {
            bins[(k, l)] *= shape[k];
        }
    }
    let shaped = dsp::istft(
        &dsp::ComplexSpectrogram::from_bins(bins, spec.fft_size(), spec.hop()),
        padded,
    )?;
    let samples = shaped.samples[FFT_SIZE..FFT_SIZE + n].to_vec();
    Ok(peak_normalize(&Waveform::new(samples, SAMPLE_RATE_HZ)))
}

fn babble_component_seed(seed: u64, voice: usize) -> u64 {
    mix_seed(seed, BABBLE_STREAM, voice as u64)
}

fn gen_babble_proxy(seed: u64, seconds: f64, n: usize) -> Result<Waveform> {
    let mut sum = vec![0.0f64; n];
    for voice in 0..BABBLE_VOICES {
        let component = gen_clean(babble_component_seed(seed, voice), seconds)?;
        for (acc, s) in sum.iter_mut().zip(&component.samples) {
            *acc += s;
        }
    }
    Ok(peak_normalize(&Waveform::new(sum, SAMPLE_RATE_HZ)))
}

/// Generate a noise signal; peak-normalized and deterministic like
/// [`gen_clean`].
pub fn gen_noise(kind: NoiseKind, seed: u64, seconds: f64) -> Result<Waveform> {
    let n = sample_count(seconds)?;
    match kind {
        NoiseKind::White => Ok(peak_normalize(&Waveform::new(
            white_samples(seed, n),
            SAMPLE_RATE_HZ,
        ))),
        NoiseKind::SsnProxy => gen_ssn_proxy(seed, n),
        NoiseKind::BabbleProxy => gen_babble_proxy(seed, seconds, n),
    }
}

/// What to generate: utterance count (split 5:1:1 into train/validation/
/// test), duration, noise kinds, and the SNR grid.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub num_utterances: usize,
    pub utterance_seconds: f64,
    pub noise_kinds: Vec<NoiseKind>,
    pub snr_grid_db: Vec<f64>,
    pub seed: u64,
}

impl CorpusSpec {
    /// Nine uniform steps from -20 dB to +20 dB.
    pub fn default_snr_grid() -> Vec<f64> {
        (0..9).map(|i| -20.0 + 5.0 * i as f64).collect()
    }
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_utterances: 280,
            utterance_seconds: 0.4,
            noise_kinds: vec![NoiseKind::White],
            snr_grid_db: Self::default_snr_grid(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    fn token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Split {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| SynthError::ManifestParse(format!("unknown split '{s}'")))
    }
}

/// Everything needed to regenerate one mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMeta {
    pub split: Split,
    pub utterance: usize,
    pub noise_kind: NoiseKind,
    pub snr_db: f64,
    pub clean_seed: u64,
    pub noise_seed: u64,
}

/// Validation and test each take a seventh of the utterances (the 280
/// default yields 200/40/40); train gets the remainder.
pub fn split_counts(num_utterances: usize) -> (usize, usize, usize) {
    let validation = num_utterances / 7;
    let test = num_utterances / 7;
    (num_utterances - validation - test, validation, test)
}

#[derive(Debug, Clone, Default)]
pub struct SplitMetas {
    pub train: Vec<MixtureMeta>,
    pub validation: Vec<MixtureMeta>,
    pub test: Vec<MixtureMeta>,
}

impl SplitMetas {
    pub fn split(&self, split: Split) -> &[MixtureMeta] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Lay out the corpus deterministically: every utterance is mixed with every
/// noise kind at every grid SNR, and clean/noise seeds are drawn from
/// disjoint spaces indexed by utterance and mixture counters that never
/// repeat across splits.
pub fn split_metas(spec: &CorpusSpec) -> SplitMetas {
    let (train_n, val_n, _test_n) = split_counts(spec.num_utterances);
    let mut metas = SplitMetas::default();
    let mut mixture_counter = 0u64;
    for utterance in 0..spec.num_utterances {
        let split = if utterance < train_n {
            Split::Train
        } else if utterance < train_n + val_n {
            Split::Validation
        } else {
            Split::Test
        };
        let clean_seed = mix_seed(spec.seed, CLEAN_STREAM, utterance as u64);
        for &noise_kind in &spec.noise_kinds {
            for &snr_db in &spec.snr_grid_db {
                let noise_seed = mix_seed(spec.seed, NOISE_STREAM, mixture_counter);
                mixture_counter += 1;
                let meta = MixtureMeta {
                    split,
                    utterance,
                    noise_kind,
                    snr_db,
                    clean_seed,
                    noise_seed,
                };
                match split {
                    Split::Train => metas.train.push(meta),
                    Split::Validation => metas.validation.push(meta),
                    Split::Test => metas.test.push(meta),
                }
            }
        }
    }
    metas
}

/// One realized mixture: audio, the full-utterance loss context, and one aux
/// vector per chunk (ceil(T/20), covering the padded enhancement chunk too).
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub meta: MixtureMeta,
    pub mixture: Mixture,
    pub context: LossContext,
    pub aux: Vec<Array1<f64>>,
}

/// The aux feature standing in for visual input: the chunk's clean
/// per-frame energy envelope, normalized to its maximum and quantized to 8
/// levels. Information-bearing but phaseless.
pub fn aux_from_clean_chunk(clean_chunk: &Array2<f64>) -> Array1<f64> {
    let energies = dsp::frame_energies(clean_chunk);
    let max = energies.iter().fold(0.0f64, |m, &e| m.max(e));
    if max == 0.0 {
        return Array1::zeros(energies.len());
    }
    energies.mapv(|e| (e / max * 7.0).round() / 7.0)
}

/// Width of the aux vector (one entry per chunk frame).
pub const AUX_DIM: usize = CHUNK_LEN;

/// Build the loss context for a clean/noisy pair of waveforms.
pub fn context_for(clean: &Waveform, noisy: &Waveform) -> Result<LossContext> {
    let clean_spec = dsp::stft(clean)?;
    let noisy_spec = dsp::stft(noisy)?;
    let theta = phase_difference(&noisy_spec, &clean_spec)?;
    Ok(LossContext::new(
        clean_spec.magnitude(),
        noisy_spec.magnitude(),
        theta,
        shared_mel_filterbank(),
    )?)
}

/// Generate the audio for one meta entry and derive its context and aux.
pub fn realize(meta: &MixtureMeta, spec: &CorpusSpec) -> Result<DatasetItem> {
    let clean = gen_clean(meta.clean_seed, spec.utterance_seconds)?;
    let noise = gen_noise(meta.noise_kind, meta.noise_seed, spec.utterance_seconds)?;
    let mixture = mix_at_snr(&clean, &noise, meta.snr_db)?;
    item_from_mixture(meta.clone(), mixture)
}

/// One aux vector per chunk (ceil(T/20)) from a clean magnitude spectrogram,
/// the final partial chunk zero-padded like the enhancement path.
pub fn aux_from_clean_mag(clean_mag: &MagnitudeSpectrogram) -> Vec<Array1<f64>> {
    let frames = clean_mag.num_frames();
    let bins = clean_mag.num_bins();
    let chunks = frames.div_ceil(CHUNK_LEN);
    let mut aux = Vec::with_capacity(chunks);
    for c in 0..chunks {
        let start = c * CHUNK_LEN;
        let end = (start + CHUNK_LEN).min(frames);
        let mut chunk = Array2::zeros((bins, CHUNK_LEN));
        chunk
            .slice_mut(s![.., ..end - start])
            .assign(&clean_mag.values().slice(s![.., start..end]));
        aux.push(aux_from_clean_chunk(&chunk));
    }
    aux
}

/// Aux vectors for enhancing a whole utterance, derived from its clean
/// reference waveform.
pub fn aux_for_utterance(clean: &Waveform) -> Result<Vec<Array1<f64>>> {
    Ok(aux_from_clean_mag(&dsp::stft(clean)?.magnitude()))
}

/// Derive context and aux features for an already materialized mixture
/// (used both by [`realize`] and when reloading audio from disk).
pub fn item_from_mixture(meta: MixtureMeta, mixture: Mixture) -> Result<DatasetItem> {
    let context = context_for(&mixture.clean, &mixture.noisy)?;
    let aux = aux_from_clean_mag(context.clean_mag());
    Ok(DatasetItem {
        meta,
        mixture,
        context,
        aux,
    })
}

/// Chop a realized item into per-chunk training examples. Trailing frames
/// that do not fill a chunk are dropped. With `audio_only` the aux features
/// are omitted.
pub fn to_train_items(item: &DatasetItem, audio_only: bool) -> Result<Vec<TrainItem>> {
    let frames = item.context.num_frames();
    let full_chunks = frames / CHUNK_LEN;
    let mut out = Vec::with_capacity(full_chunks);
    for c in 0..full_chunks {
        let cols = s![.., c * CHUNK_LEN..(c + 1) * CHUNK_LEN];
        let clean = item.context.clean_mag().values().slice(cols).to_owned();
        let noisy = item.context.noisy_mag().values().slice(cols).to_owned();
        let theta = item.context.phase_diff().theta().slice(cols).to_owned();
        let context = LossContext::new(
            MagnitudeSpectrogram::new(clean),
            MagnitudeSpectrogram::new(noisy),
            crate::signalmodel::PhaseDiff::from_theta(theta),
            item.context.filterbank().clone(),
        )?;
        let aux = (!audio_only).then(|| item.aux[c].clone());
        out.push(TrainItem { context, aux });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<DatasetItem>,
    pub validation: Vec<DatasetItem>,
    pub test: Vec<DatasetItem>,
}

/// Materialize the whole corpus. Large corpora are better streamed through
/// [`split_metas`] and [`realize`]; this convenience suits test-sized specs.
pub fn build_dataset(spec: &CorpusSpec) -> Result<Dataset> {
    let metas = split_metas(spec);
    let mut dataset = Dataset::default();
    for (split, out) in [
        (&metas.train, &mut dataset.train),
        (&metas.validation, &mut dataset.validation),
        (&metas.test, &mut dataset.test),
    ] {
        for meta in split {
            out.push(realize(meta, spec)?);
        }
    }
    Ok(dataset)
}

/// One manifest line: where the audio lives plus the recipe that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub meta: MixtureMeta,
    pub clean_path: String,
    pub noise_path: String,
    pub noisy_path: String,
}

const MANIFEST_HEADER: &str =
    "#split\tutterance\tnoise_kind\tsnr_db\tclean_seed\tnoise_seed\tclean_path\tnoise_path\tnoisy_path";

/// Write the tab-separated manifest, one record per mixture.
pub fn write_manifest<P: AsRef<Path>>(path: P, records: &[ManifestRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:?}\t{}\t{}\t{}\t{}\t{}\n",
            r.meta.split,
            r.meta.utterance,
            r.meta.noise_kind,
            r.meta.snr_db,
            r.meta.clean_seed,
            r.meta.noise_seed,
            r.clean_path,
            r.noise_path,
            r.noisy_path,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest<P: AsRef<Path>>(path: P) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 9 {
            return Err(SynthError::ManifestParse(format!(
                "line {}: {} fields, want 9",
                lineno + 1,
                fields.len()
            )));
        }
        let parse_err =
            |what: &str| SynthError::ManifestParse(format!("line {}: bad {what}", lineno + 1));
        records.push(ManifestRecord {
            meta: MixtureMeta {
                split: Split::from_str(fields[0])?,
                utterance: fields[1].parse().map_err(|_| parse_err("utterance"))?,
                noise_kind: NoiseKind::from_str(fields[2])?,
                snr_db: fields[3].parse().map_err(|_| parse_err("snr_db"))?,
                clean_seed: fields[4].parse().map_err(|_| parse_err("clean_seed"))?,
                noise_seed: fields[5].parse().map_err(|_| parse_err("noise_seed"))?,
            },
            clean_path: fields[6].to_string(),
            noise_path: fields[7].to_string(),
            noisy_path: fields[8].to_string(),
        });
    }
    Ok(records)
}
