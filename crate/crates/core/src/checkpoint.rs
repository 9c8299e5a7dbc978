//! Model checkpoints: a text header (format version, geometry, activation,
//! objective, normalization vectors in decimal) followed by the parameters
//! as little-endian 64-bit floats in layer order, weights row-major then
//! bias. Round trips are bit-exact.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array1;
use thiserror::Error;

use crate::estimator::{EstimatorModel, ModelShape};
use crate::objectives::{Activation, ObjectiveId};

const MAGIC: &str = "MASKLAB-CKPT";
const VERSION: u32 = 1;

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic line)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

fn malformed<T>(msg: impl Into<String>) -> Result<T> {
    Err(CheckpointError::Malformed(msg.into()))
}

fn write_f64_line(out: &mut Vec<u8>, key: &str, values: &Array1<f64>) {
    // Shortest round-trip decimal formatting keeps the header bit-exact.
    let body: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
    let _ = writeln!(out, "{key} {}", body.join(" "));
}

/// Write a trained model together with the objective it was trained for.
pub fn save_checkpoint<P: AsRef<Path>>(
    path: P,
    model: &EstimatorModel,
    objective: ObjectiveId,
) -> Result<()> {
    let shape = model.shape();
    let mut bytes = Vec::new();
    let _ = writeln!(bytes, "{MAGIC} {VERSION}");
    let _ = writeln!(bytes, "objective {objective}");
    let _ = writeln!(
        bytes,
        "hidden_activation leaky_rectifier_{}",
        crate::estimator::LEAKY_SLOPE
    );
    let _ = writeln!(bytes, "output_activation {}", model.output_activation());
    let _ = writeln!(bytes, "num_bins {}", shape.num_bins);
    let _ = writeln!(bytes, "chunk_len {}", shape.chunk_len);
    let _ = writeln!(bytes, "aux_dim {}", shape.aux_dim);
    let sizes: Vec<String> = model.layer_sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(bytes, "layer_sizes {}", sizes.join(" "));
    write_f64_line(&mut bytes, "input_mean", model.input_mean());
    write_f64_line(&mut bytes, "input_std", model.input_std());
    let _ = writeln!(bytes, "params {}", model.param_count());
    let _ = writeln!(bytes, "DATA");
    for p in model.flatten_params() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<(EstimatorModel, ObjectiveId)> {
    let bytes = fs::read(path)?;

    // Split the text header from the binary payload at the DATA line.
    let marker = b"\nDATA\n";
    let data_pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| CheckpointError::Malformed("missing DATA marker".into()))?;
    let header = std::str::from_utf8(&bytes[..data_pos])
        .map_err(|_| CheckpointError::Malformed("header is not UTF-8".into()))?;
    let payload = &bytes[data_pos + marker.len()..];

    let mut lines = header.lines();
    let magic_line = lines.next().ok_or(CheckpointError::BadMagic)?;
    let mut magic_parts = magic_line.split_whitespace();
    if magic_parts.next() != Some(MAGIC) {
        return Err(CheckpointError::BadMagic);
    }
    let version: u32 = magic_parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or(CheckpointError::BadMagic)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }

    let mut objective = None;
    let mut activation = None;
    let mut num_bins = None;
    let mut chunk_len = None;
    let mut aux_dim = None;
    let mut layer_sizes: Option<Vec<usize>> = None;
    let mut input_mean: Option<Vec<f64>> = None;
    let mut input_std: Option<Vec<f64>> = None;
    let mut param_count: Option<usize> = None;

    for line in lines {
        let Some((key, rest)) = line.split_once(' ') else {
            return malformed(format!("unparseable line '{line}'"));
        };
        match key {
            "objective" => {
                objective = Some(
                    ObjectiveId::from_str(rest.trim())
                        .map_err(|e| CheckpointError::Malformed(e.to_string()))?,
                )
            }
            "hidden_activation" => {
                let expected = format!("leaky_rectifier_{}", crate::estimator::LEAKY_SLOPE);
                if rest.trim() != expected {
                    return malformed(format!("unsupported hidden activation '{}'", rest.trim()));
                }
            }
            "output_activation" => {
                activation = Some(
                    Activation::from_str(rest.trim())
                        .map_err(|e| CheckpointError::Malformed(e.to_string()))?,
                )
            }
            "num_bins" => num_bins = rest.trim().parse().ok(),
            "chunk_len" => chunk_len = rest.trim().parse().ok(),
            "aux_dim" => aux_dim = rest.trim().parse().ok(),
            "layer_sizes" => {
                let parsed: std::result::Result<Vec<usize>, _> =
                    rest.split_whitespace().map(|t| t.parse()).collect();
                layer_sizes = parsed.ok();
            }
            "input_mean" => input_mean = parse_f64_list(rest),
            "input_std" => input_std = parse_f64_list(rest),
            "params" => param_count = rest.trim().parse().ok(),
            _ => return malformed(format!("unknown header key '{key}'")),
        }
    }

    let objective =
        objective.ok_or_else(|| CheckpointError::Malformed("missing objective".into()))?;
    let activation =
        activation.ok_or_else(|| CheckpointError::Malformed("missing activation".into()))?;
    let shape = ModelShape::new(
        num_bins.ok_or_else(|| CheckpointError::Malformed("missing num_bins".into()))?,
        chunk_len.ok_or_else(|| CheckpointError::Malformed("missing chunk_len".into()))?,
        aux_dim.ok_or_else(|| CheckpointError::Malformed("missing aux_dim".into()))?,
    );
    let layer_sizes =
        layer_sizes.ok_or_else(|| CheckpointError::Malformed("missing layer_sizes".into()))?;
    let input_mean =
        input_mean.ok_or_else(|| CheckpointError::Malformed("missing input_mean".into()))?;
    let input_std =
        input_std.ok_or_else(|| CheckpointError::Malformed("missing input_std".into()))?;
    let param_count =
        param_count.ok_or_else(|| CheckpointError::Malformed("missing params".into()))?;

    if payload.len() != param_count * 8 {
        return malformed(format!(
            "payload of {} bytes, header promises {} parameters",
            payload.len(),
            param_count
        ));
    }
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut model = EstimatorModel::init(shape, &layer_sizes, activation, 0)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    model
        .assign_params(&params)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    model
        .set_input_norm(Array1::from_vec(input_mean), Array1::from_vec(input_std))
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Ok((model, objective))
}

fn parse_f64_list(rest: &str) -> Option<Vec<f64>> {
    rest.split_whitespace().map(|t| t.parse().ok()).collect()
}
