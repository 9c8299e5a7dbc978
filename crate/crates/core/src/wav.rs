//! Minimal 16-bit PCM mono WAV reader/writer.
//!
//! Files at sample rates other than 16 kHz are rejected rather than
//! resampled, as are multi-channel and non-16-bit files.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::dsp::{Waveform, SAMPLE_RATE_HZ};

pub type Result<T> = std::result::Result<T, WavError>;

#[derive(Debug, Error)]
pub enum WavError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a RIFF/WAVE file")]
    NotWave,
    #[error("malformed WAV: {0}")]
    Malformed(&'static str),
    #[error("unsupported WAV: {0}")]
    Unsupported(String),
}

const I16_SCALE: f64 = 32768.0;

/// Read a mono 16-bit PCM WAV at 16 kHz into a waveform in [-1, 1).
pub fn read_wav<P: AsRef<Path>>(path: P) -> Result<Waveform> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotWave);
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or(WavError::Malformed("chunk size"))?;
        if body_end > bytes.len() {
            return Err(WavError::Malformed("chunk exceeds file"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(WavError::Malformed("fmt chunk too small"));
                }
                let body = &bytes[body_start..body_end];
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(&bytes[body_start..body_end]),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or(WavError::Malformed("missing fmt chunk"))?;
    if format != 1 {
        return Err(WavError::Unsupported(format!(
            "format tag {format}, want PCM (1)"
        )));
    }
    if channels != 1 {
        return Err(WavError::Unsupported(format!(
            "{channels} channels, want mono"
        )));
    }
    if bits != 16 {
        return Err(WavError::Unsupported(format!(
            "{bits}-bit samples, want 16"
        )));
    }
    if rate != SAMPLE_RATE_HZ {
        return Err(WavError::Unsupported(format!(
            "sample rate {rate} Hz, want {SAMPLE_RATE_HZ}"
        )));
    }

    let data = data.ok_or(WavError::Malformed("missing data chunk"))?;
    let samples = data
        .chunks_exact(2)
        .map(|pair| i16::from_le_bytes([pair[0], pair[1]]) as f64 / I16_SCALE)
        .collect();
    Ok(Waveform::new(samples, SAMPLE_RATE_HZ))
}

/// Write a waveform as mono 16-bit PCM. Samples are clamped to [-1, 1]
/// and rounded to the nearest representable level.
pub fn write_wav<P: AsRef<Path>>(path: P, wav: &Waveform) -> Result<()> {
    let num_samples = wav.samples.len();
    let data_size = (num_samples * 2) as u32;
    let mut bytes = Vec::with_capacity(44 + num_samples * 2);

    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_size).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");

    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&wav.sample_rate_hz.to_le_bytes());
    bytes.extend_from_slice(&(wav.sample_rate_hz * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits per sample

    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_size.to_le_bytes());
    for &s in &wav.samples {
        let v = (s * I16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        bytes.extend_from_slice(&v.to_le_bytes());
    }

    fs::write(path, bytes)?;
    Ok(())
}
