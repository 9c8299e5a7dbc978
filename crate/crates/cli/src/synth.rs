//! `synth`: write a deterministic corpus of WAV files plus the manifest.

use std::fs;
use std::str::FromStr;

use anyhow::{Context, Result};
use masklab_core::synthdata::{
    realize, split_metas, write_manifest, CorpusSpec, ManifestRecord, MixtureMeta, NoiseKind,
};
use masklab_core::wav::write_wav;

use crate::SynthArgs;

pub fn spec_from_flags(
    utterances: usize,
    seconds: f64,
    noise: &[String],
    snr: Option<Vec<f64>>,
    seed: u64,
) -> Result<CorpusSpec> {
    let noise_kinds = noise
        .iter()
        .map(|s| NoiseKind::from_str(s).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusSpec {
        num_utterances: utterances,
        utterance_seconds: seconds,
        noise_kinds,
        snr_grid_db: snr.unwrap_or_else(CorpusSpec::default_snr_grid),
        seed,
    })
}

fn stem(meta: &MixtureMeta) -> String {
    format!(
        "{}_{:04}_{}_{:+}dB",
        meta.split, meta.utterance, meta.noise_kind, meta.snr_db
    )
}

pub fn run(args: SynthArgs) -> Result<()> {
    let spec = spec_from_flags(
        args.utterances,
        args.seconds,
        &args.noise,
        args.snr,
        args.seed,
    )?;
    let wav_dir = args.corpus_dir.join("wav");
    fs::create_dir_all(&wav_dir).with_context(|| format!("creating {}", wav_dir.display()))?;

    let metas = split_metas(&spec);
    let mut records = Vec::new();
    let mut written_clean = std::collections::HashSet::new();
    for split in [&metas.train, &metas.validation, &metas.test] {
        for meta in split {
            let item = realize(meta, &spec)?;
            // The clean file is shared by every mixture of the utterance.
            let clean_rel = format!("wav/{}_{:04}_clean.wav", meta.split, meta.utterance);
            if written_clean.insert(meta.utterance) {
                write_wav(args.corpus_dir.join(&clean_rel), &item.mixture.clean)?;
            }
            let noise_rel = format!("wav/{}_noise.wav", stem(meta));
            let noisy_rel = format!("wav/{}_noisy.wav", stem(meta));
            write_wav(args.corpus_dir.join(&noise_rel), &item.mixture.noise_scaled)?;
            write_wav(args.corpus_dir.join(&noisy_rel), &item.mixture.noisy)?;
            records.push(ManifestRecord {
                meta: meta.clone(),
                clean_path: clean_rel,
                noise_path: noise_rel,
                noisy_path: noisy_rel,
            });
        }
    }
    write_manifest(args.corpus_dir.join("manifest.tsv"), &records)?;
    eprintln!(
        "wrote {} mixtures ({} train / {} validation / {} test) to {}",
        records.len(),
        metas.train.len(),
        metas.validation.len(),
        metas.test.len(),
        args.corpus_dir.display()
    );
    Ok(())
}
