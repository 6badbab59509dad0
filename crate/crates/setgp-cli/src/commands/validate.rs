//! `setgp validate`: Q^2 table over kernels, ratios, and replications.

use serde_json::json;
use setgp::{Error, Result};

use super::{q2_csv, q2_summary_csv, q2_table_csv, validation_rows};
use crate::data::{self, dataset, kernel_family, kernel_name, source_name};
use crate::manifest::ManifestBuilder;
use crate::ValidateArgs;

pub fn run(args: &ValidateArgs) -> Result<()> {
    if args.kernel.is_empty() {
        return Err(Error::InvalidInput("at least one --kernel is required".into()));
    }
    if args.reps < 1 {
        return Err(Error::InvalidInput("--reps must be at least 1".into()));
    }
    for &r in &args.ratio {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidInput(format!(
                "--ratio {r} must be strictly between 0 and 1"
            )));
        }
    }
    let policy = data::jitter_policy(args.jitter_a)?;

    let problem = source_name(&args.source);
    let mut manifest = ManifestBuilder::new(
        "validate",
        json!({
            "problem": problem,
            "kernels": args.kernel.iter().map(|&k| kernel_name(k)).collect::<Vec<_>>(),
            "jitter_a": args.jitter_a,
            "ratios": args.ratio,
            "reps": args.reps,
        }),
        args.seed,
    );
    let data = dataset(&args.source, args.seed)?;
    let kernels: Vec<_> = args
        .kernel
        .iter()
        .map(|&k| (kernel_name(k), kernel_family(k), policy))
        .collect();
    let rows = validation_rows(&data, &kernels, &args.ratio, args.reps, args.seed)?;
    manifest.write_output(&args.out, "q2.csv", &q2_csv(&problem, &rows))?;
    manifest.write_output(&args.out, "q2_summary.csv", &q2_summary_csv(&problem, &rows))?;
    let kernel_names: Vec<&'static str> = args.kernel.iter().map(|&k| kernel_name(k)).collect();
    manifest.write_output(
        &args.out,
        "q2_table.csv",
        &q2_table_csv(&problem, &rows, &kernel_names, &args.ratio),
    )?;
    manifest.finish(&args.out)
}
