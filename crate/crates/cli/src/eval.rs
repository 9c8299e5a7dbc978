//! `eval`: proxy quality metrics of an estimate against its clean reference.

use anyhow::{Context, Result};
use masklab_core::metrics::report;
use masklab_core::wav::read_wav;

use crate::EvalArgs;

pub fn run(args: EvalArgs) -> Result<()> {
    let reference = read_wav(&args.reference)
        .with_context(|| format!("reading {}", args.reference.display()))?;
    let estimate =
        read_wav(&args.estimate).with_context(|| format!("reading {}", args.estimate.display()))?;
    let scores = report(&reference, &estimate)?;

    println!("si_sdr_db\t{:+.2}", scores.si_sdr_db);
    println!("seg_snr_db\t{:+.2}", scores.seg_snr_db);
    println!("lsd_db\t{:.2}", scores.lsd_db);

    if let Some(noisy_path) = &args.noisy {
        let noisy = read_wav(noisy_path)?;
        let base = report(&reference, &noisy)?;
        println!(
            "si_sdr_improvement_db\t{:+.2}",
            scores.si_sdr_db - base.si_sdr_db
        );
        println!(
            "seg_snr_improvement_db\t{:+.2}",
            scores.seg_snr_db - base.seg_snr_db
        );
        println!("lsd_reduction_db\t{:+.2}", base.lsd_db - scores.lsd_db);
    }
    Ok(())
}
