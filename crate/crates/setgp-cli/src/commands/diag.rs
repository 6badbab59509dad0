//! `setgp diag`: leave-one-out and out-of-sample residual files for
//! external plotting.

use serde_json::json;
use setgp::hyperfit::FitConfig;
use setgp::testbed::split;
use setgp::{Error, Result};

use super::fit_model;
use crate::data::{self, dataset, derive_seed, fmt_f64, kernel_family, kernel_name, source_name};
use crate::manifest::ManifestBuilder;
use crate::DiagArgs;

pub fn run(args: &DiagArgs) -> Result<()> {
    if !(args.ratio > 0.0 && args.ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "--ratio {} must be strictly between 0 and 1",
            args.ratio
        )));
    }
    let policy = data::jitter_policy(args.jitter_a)?;
    let problem = source_name(&args.source);
    let mut manifest = ManifestBuilder::new(
        "diag",
        json!({
            "problem": problem,
            "kernel": kernel_name(args.kernel),
            "jitter_a": args.jitter_a,
            "ratio": args.ratio,
        }),
        args.seed,
    );
    let data = dataset(&args.source, args.seed)?;
    let (train, test) = split(&data, args.ratio, derive_seed(args.seed, &[1]))?;
    let cfg = FitConfig {
        seed: derive_seed(args.seed, &[2]),
        jitter_policy: policy,
        ..FitConfig::defaults(data.dimension())
    };
    let model = fit_model(&train, kernel_family(args.kernel), &cfg)?;

    let mut loo_csv = String::from("set_id,observed,predicted,sd,standardized\n");
    for (i, entry) in model.loo_residuals()?.iter().enumerate() {
        let observed = train.records()[i].1;
        let predicted = observed - entry.raw;
        loo_csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            fmt_f64(observed),
            fmt_f64(predicted),
            fmt_f64(entry.sd),
            fmt_f64(entry.standardized.unwrap_or(f64::NAN)),
        ));
    }

    let mut test_csv = String::from("set_id,observed,predicted,sd,standardized\n");
    for (i, (s, observed)) in test.records().iter().enumerate() {
        let p = model.predict(s)?;
        let standardized = if p.sd > 0.0 {
            (observed - p.mean) / p.sd
        } else {
            f64::NAN
        };
        test_csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            fmt_f64(*observed),
            fmt_f64(p.mean),
            fmt_f64(p.sd),
            fmt_f64(standardized),
        ));
    }

    manifest.write_output(&args.out, "residuals_loo.csv", &loo_csv)?;
    manifest.write_output(&args.out, "residuals_test.csv", &test_csv)?;
    manifest.finish(&args.out)
}
