//! `gradcheck`: finite-difference verification of all twelve objectives.

use anyhow::{bail, Result};
use masklab_core::gradcheck::run_full_check;

use crate::GradcheckArgs;

pub fn run(args: GradcheckArgs) -> Result<()> {
    let reports = run_full_check(args.seed);
    let mut failures = 0;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{:8} {status}  loss-grad {:.2e}  param-grad {:.2e}",
            r.objective.to_string(),
            r.loss_grad_max_rel_err,
            r.param_grad_max_rel_err
        );
        if !r.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        bail!("{failures} objective(s) failed the gradient check");
    }
    Ok(())
}
