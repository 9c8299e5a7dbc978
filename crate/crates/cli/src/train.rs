//! `train`: fit one objective on a synthesized corpus and save a checkpoint.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use masklab_core::checkpoint::save_checkpoint;
use masklab_core::dsp::Waveform;
use masklab_core::estimator::{fit, EstimatorModel, TrainConfig, TrainItem};
use masklab_core::objectives::ObjectiveId;
use masklab_core::signalmodel::Mixture;
use masklab_core::synthdata::{
    item_from_mixture, read_manifest, to_train_items, ManifestRecord, Split, AUX_DIM,
};
use masklab_core::wav::read_wav;

use crate::TrainArgs;

/// Rebuild the mixture of one manifest record from its audio files.
fn load_mixture(corpus_dir: &Path, record: &ManifestRecord) -> Result<Mixture> {
    let clean =
        read_wav(corpus_dir.join(&record.clean_path)).with_context(|| record.clean_path.clone())?;
    let noisy =
        read_wav(corpus_dir.join(&record.noisy_path)).with_context(|| record.noisy_path.clone())?;
    if clean.len() != noisy.len() {
        bail!("{}: clean and noisy lengths differ", record.noisy_path);
    }
    let noise_scaled = Waveform::new(
        noisy
            .samples
            .iter()
            .zip(&clean.samples)
            .map(|(y, x)| y - x)
            .collect(),
        noisy.sample_rate_hz,
    );
    Ok(Mixture {
        clean,
        noise_scaled,
        noisy,
        snr_db: record.meta.snr_db,
    })
}

/// Load every chunk of a split as training items.
pub fn load_split_items(
    corpus_dir: &Path,
    records: &[ManifestRecord],
    split: Split,
    audio_only: bool,
) -> Result<Vec<TrainItem>> {
    let mut items = Vec::new();
    for record in records.iter().filter(|r| r.meta.split == split) {
        let mixture = load_mixture(corpus_dir, record)?;
        let item = item_from_mixture(record.meta.clone(), mixture)?;
        items.extend(to_train_items(&item, audio_only)?);
    }
    Ok(items)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let id = ObjectiveId::from_str(&args.objective)?;
    let records = read_manifest(args.corpus_dir.join("manifest.tsv"))
        .with_context(|| format!("reading manifest in {}", args.corpus_dir.display()))?;

    let train_items = load_split_items(&args.corpus_dir, &records, Split::Train, args.audio_only)?;
    let val_items = load_split_items(
        &args.corpus_dir,
        &records,
        Split::Validation,
        args.audio_only,
    )?;
    eprintln!(
        "{} train chunks, {} validation chunks",
        train_items.len(),
        val_items.len()
    );

    let aux_dim = if args.audio_only { 0 } else { AUX_DIM };
    let model = EstimatorModel::default_for(id, aux_dim, args.seed);
    let cfg = TrainConfig {
        batch_size: args.batch_size,
        initial_lr: args.lr,
        max_epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };

    let (best, history) = fit(model, &train_items, &val_items, id, &cfg)?;
    for rec in &history.epochs {
        match rec.validation_loss {
            Some(v) => eprintln!(
                "epoch {:3}  train {:.6}  val {:.6}  lr {:.2e}",
                rec.epoch, rec.train_loss, v, rec.learning_rate
            ),
            None => eprintln!(
                "epoch {:3}  train {:.6}               lr {:.2e}",
                rec.epoch, rec.train_loss, rec.learning_rate
            ),
        }
    }
    if history.stopped_early {
        eprintln!(
            "stopped early; best validation at epoch {:?}",
            history.best_epoch
        );
    }

    save_checkpoint(&args.model_out, &best, id)?;
    eprintln!("saved {}", args.model_out.display());
    Ok(())
}
