//! End-to-end checks of the command-line surface: subcommand wiring,
//! reproducible outputs, and failure exit codes.

use std::path::Path;
use std::process::Command;

use masklab_core::checkpoint::save_checkpoint;
use masklab_core::estimator::{EstimatorModel, ModelShape};
use masklab_core::objectives::{output_activation_for, ObjectiveId};
use masklab_core::wav::read_wav;

fn masklab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_masklab"))
}

fn synth_micro(dir: &Path, seed: u64) {
    let status = masklab()
        .args([
            "synth",
            "--corpus-dir",
            dir.to_str().unwrap(),
            "--utterances",
            "7",
            "--seconds",
            "0.4",
            "--noise",
            "white",
            "--snr",
            "0",
            "--seed",
            &seed.to_string(),
        ])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn synth_writes_corpus_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let c1 = dir.path().join("c1");
    let c2 = dir.path().join("c2");
    synth_micro(&c1, 9);
    synth_micro(&c2, 9);

    let m1 = std::fs::read(c1.join("manifest.tsv")).unwrap();
    let m2 = std::fs::read(c2.join("manifest.tsv")).unwrap();
    assert_eq!(m1, m2);

    let w1 = std::fs::read(c1.join("wav/train_0000_white_+0dB_noisy.wav")).unwrap();
    let w2 = std::fs::read(c2.join("wav/train_0000_white_+0dB_noisy.wav")).unwrap();
    assert_eq!(w1, w2);
}

#[test]
fn train_checkpoints_are_bit_exact_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_micro(&corpus, 4);
    let train = |out: &Path| {
        let status = masklab()
            .args([
                "train",
                "--objective",
                "stsa-ma",
                "--corpus-dir",
                corpus.to_str().unwrap(),
                "--model-out",
                out.to_str().unwrap(),
                "--epochs",
                "2",
                "--seed",
                "12",
            ])
            .stderr(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
    };
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    train(&p1);
    train(&p2);
    assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
}

#[test]
fn enhance_with_identity_mask_model_is_a_near_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_micro(&corpus, 2);
    let noisy_path = corpus.join("wav/test_0006_white_+0dB_noisy.wav");

    // A bias-only rectifier model emitting a constant all-ones mask.
    let id = ObjectiveId::all()[5]; // stsa-im
    let shape = ModelShape::default();
    let sizes = [shape.input_dim(), 1, shape.output_dim()];
    let mut model = EstimatorModel::init(shape, &sizes, output_activation_for(id), 0).unwrap();
    let mut params = vec![0.0; model.param_count()];
    let bias_start = params.len() - shape.output_dim();
    for p in params.iter_mut().skip(bias_start) {
        *p = 1.0;
    }
    model.assign_params(&params).unwrap();
    let ckpt = dir.path().join("identity.ckpt");
    save_checkpoint(&ckpt, &model, id).unwrap();

    let out_path = dir.path().join("enhanced.wav");
    let status = masklab()
        .args([
            "enhance",
            "--model-in",
            ckpt.to_str().unwrap(),
            "--input",
            noisy_path.to_str().unwrap(),
            "--output",
            out_path.to_str().unwrap(),
        ])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());

    let original = read_wav(&noisy_path).unwrap();
    let enhanced = read_wav(&out_path).unwrap();
    assert_eq!(enhanced.len(), original.len());
    // Identity mask plus requantization: within one LSB per sample.
    for (a, b) in enhanced.samples.iter().zip(&original.samples) {
        assert!((a - b).abs() <= 2.0 / 32768.0, "{a} vs {b}");
    }
}

#[test]
fn eval_prints_metric_lines() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_micro(&corpus, 6);
    let clean = corpus.join("wav/test_0006_clean.wav");
    let noisy = corpus.join("wav/test_0006_white_+0dB_noisy.wav");
    let output = masklab()
        .args([
            "eval",
            "--reference",
            clean.to_str().unwrap(),
            "--estimate",
            noisy.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    for key in ["si_sdr_db", "seg_snr_db", "lsd_db"] {
        assert!(stdout.contains(key), "missing {key} in:\n{stdout}");
    }
}

#[test]
fn unknown_objective_fails_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let output = masklab()
        .args([
            "train",
            "--objective",
            "pssa-xx",
            "--corpus-dir",
            dir.path().to_str().unwrap(),
            "--model-out",
            dir.path().join("x.ckpt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(
        stderr.contains("unknown objective"),
        "stderr was:\n{stderr}"
    );
}

#[test]
fn malformed_wav_fails_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.wav");
    std::fs::write(&bad, b"not audio").unwrap();
    let output = masklab()
        .args([
            "eval",
            "--reference",
            bad.to_str().unwrap(),
            "--estimate",
            bad.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn gradcheck_prints_twelve_pass_lines() {
    let output = masklab()
        .args(["gradcheck", "--seed", "1"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let passes = stdout.lines().filter(|l| l.contains("PASS")).count();
    assert_eq!(passes, 12, "stdout was:\n{stdout}");
}
