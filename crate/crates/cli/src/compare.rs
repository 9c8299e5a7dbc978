//! `compare`: train every objective on one corpus and tabulate proxy
//! metrics per SNR on the held-out test split.

use std::fmt::Write as _;

use anyhow::{Context, Result};
use masklab_core::dsp::Waveform;
use masklab_core::enhance::enhance_utterance;
use masklab_core::estimator::{fit, EstimatorModel, TrainConfig, TrainItem};
use masklab_core::metrics::{log_spectral_distance, segmental_snr_default, si_sdr};
use masklab_core::objectives::ObjectiveId;
use masklab_core::synthdata::{
    realize, split_metas, to_train_items, CorpusSpec, MixtureMeta, AUX_DIM,
};
use ndarray::Array1;

use crate::synth::spec_from_flags;
use crate::CompareArgs;

/// Evaluation columns, the grid restricted to the middle of the SNR range.
const EVAL_SNR_MIN: f64 = -15.0;
const EVAL_SNR_MAX: f64 = 15.0;

struct EvalCase {
    snr_db: f64,
    clean: Waveform,
    noisy: Waveform,
    aux: Vec<Array1<f64>>,
}

fn realize_split_items(
    metas: &[MixtureMeta],
    spec: &CorpusSpec,
    audio_only: bool,
) -> Result<Vec<TrainItem>> {
    let mut items = Vec::new();
    for meta in metas {
        let item = realize(meta, spec)?;
        items.extend(to_train_items(&item, audio_only)?);
    }
    Ok(items)
}

const METRICS: [&str; 3] = ["si_sdr_db", "seg_snr_db", "lsd_db"];

fn scores(clean: &Waveform, estimate: &Waveform) -> Result<[f64; 3]> {
    Ok([
        si_sdr(clean, estimate)?,
        segmental_snr_default(clean, estimate)?,
        log_spectral_distance(clean, estimate)?,
    ])
}

/// Per-SNR column means for one system, [metric][column].
fn column_means(per_case: &[(f64, [f64; 3])], columns: &[f64]) -> Vec<Vec<f64>> {
    let mut means = vec![Vec::with_capacity(columns.len()); 3];
    for &snr in columns {
        let selected: Vec<&[f64; 3]> = per_case
            .iter()
            .filter(|(s, _)| *s == snr)
            .map(|(_, v)| v)
            .collect();
        for (m, out) in means.iter_mut().enumerate() {
            let sum: f64 = selected.iter().map(|v| v[m]).sum();
            out.push(sum / selected.len() as f64);
        }
    }
    means
}

fn push_row(out: &mut String, metric: &str, system: &str, values: &[f64]) {
    let _ = write!(out, "{metric}\t{system}");
    for v in values {
        let _ = write!(out, "\t{v:.2}");
    }
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    let _ = writeln!(out, "\t{avg:.2}");
}

pub fn run(args: CompareArgs) -> Result<()> {
    let spec = spec_from_flags(args.utterances, args.seconds, &args.noise, None, args.seed)?;
    let metas = split_metas(&spec);
    if metas.validation.is_empty() || metas.test.is_empty() {
        anyhow::bail!(
            "--utterances {} leaves an empty split; need at least 7",
            args.utterances
        );
    }
    eprintln!(
        "corpus: {} train / {} validation / {} test mixtures",
        metas.train.len(),
        metas.validation.len(),
        metas.test.len()
    );

    let train_items = realize_split_items(&metas.train, &spec, args.audio_only)?;
    let val_items = realize_split_items(&metas.validation, &spec, args.audio_only)?;
    eprintln!(
        "{} train chunks, {} validation chunks",
        train_items.len(),
        val_items.len()
    );

    let mut test_cases = Vec::with_capacity(metas.test.len());
    for meta in &metas.test {
        if meta.snr_db < EVAL_SNR_MIN || meta.snr_db > EVAL_SNR_MAX {
            continue;
        }
        let item = realize(meta, &spec)?;
        test_cases.push(EvalCase {
            snr_db: meta.snr_db,
            clean: item.mixture.clean,
            noisy: item.mixture.noisy,
            aux: item.aux,
        });
    }

    let columns: Vec<f64> = spec
        .snr_grid_db
        .iter()
        .copied()
        .filter(|&s| (EVAL_SNR_MIN..=EVAL_SNR_MAX).contains(&s))
        .collect();

    let mut report = String::new();
    let noise_names: Vec<String> = spec.noise_kinds.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(report, "# masklab compare report");
    let _ = writeln!(
        report,
        "# seed={} utterances={} seconds={} noise={} epochs={} audio_only={}",
        args.seed,
        args.utterances,
        args.seconds,
        noise_names.join(","),
        args.epochs,
        args.audio_only
    );
    let _ = write!(report, "metric\tsystem");
    for snr in &columns {
        let _ = write!(report, "\t{snr:+}");
    }
    let _ = writeln!(report, "\tavg");

    // Unprocessed baseline.
    let mut baseline = Vec::with_capacity(test_cases.len());
    for case in &test_cases {
        baseline.push((case.snr_db, scores(&case.clean, &case.noisy)?));
    }
    let baseline_means = column_means(&baseline, &columns);

    let aux_dim = if args.audio_only { 0 } else { AUX_DIM };
    let cfg_template = TrainConfig {
        max_epochs: args.epochs,
        ..TrainConfig::default()
    };

    let mut tables: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (index, id) in ObjectiveId::all().into_iter().enumerate() {
        let run_seed = args.seed.wrapping_add(1 + index as u64);
        eprintln!("training {id} (seed {run_seed})");
        let model = EstimatorModel::default_for(id, aux_dim, run_seed);
        let cfg = TrainConfig {
            seed: run_seed,
            ..cfg_template.clone()
        };
        let (trained, history) = fit(model, &train_items, &val_items, id, &cfg)?;
        if let Some(last) = history.epochs.last() {
            eprintln!(
                "  {} epochs, final train loss {:.6}",
                history.epochs.len(),
                last.train_loss
            );
        }

        let mut per_case = Vec::with_capacity(test_cases.len());
        for case in &test_cases {
            let aux = (!args.audio_only).then_some(case.aux.as_slice());
            let result = enhance_utterance(&trained, id, &case.noisy, aux)?;
            per_case.push((case.snr_db, scores(&case.clean, &result.enhanced)?));
        }
        tables.push((id.to_string(), column_means(&per_case, &columns)));
    }

    for (m, metric) in METRICS.iter().enumerate() {
        push_row(&mut report, metric, "unprocessed", &baseline_means[m]);
        for (system, means) in &tables {
            push_row(&mut report, metric, system, &means[m]);
        }
    }

    std::fs::write(&args.report, &report)
        .with_context(|| format!("writing {}", args.report.display()))?;
    eprintln!("report written to {}", args.report.display());
    Ok(())
}
