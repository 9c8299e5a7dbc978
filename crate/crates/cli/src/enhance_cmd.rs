//! `enhance`: run a trained model over one WAV file.

use anyhow::{bail, Context, Result};
use masklab_core::checkpoint::load_checkpoint;
use masklab_core::enhance::enhance_utterance;
use masklab_core::synthdata::aux_for_utterance;
use masklab_core::wav::{read_wav, write_wav};

use crate::EnhanceArgs;

pub fn run(args: EnhanceArgs) -> Result<()> {
    let (model, id) = load_checkpoint(&args.model_in)
        .with_context(|| format!("loading {}", args.model_in.display()))?;
    let noisy =
        read_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;

    let aux = if model.shape().aux_dim > 0 {
        let Some(clean_path) = &args.clean else {
            bail!("model was trained with aux features; pass --clean <wav> to derive them");
        };
        let clean = read_wav(clean_path)?;
        if clean.len() != noisy.len() {
            bail!("--clean and --input must have the same length");
        }
        Some(aux_for_utterance(&clean)?)
    } else {
        None
    };

    let result = enhance_utterance(&model, id, &noisy, aux.as_deref())?;
    write_wav(&args.output, &result.enhanced)?;
    eprintln!(
        "enhanced {} samples with {} -> {}",
        noisy.len(),
        id,
        args.output.display()
    );
    Ok(())
}
