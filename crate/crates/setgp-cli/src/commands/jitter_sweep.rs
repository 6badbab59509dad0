//! `setgp jitter-sweep`: double-sum + jitter prediction (and optionally
//! optimization) across conditioning targets a = 1..=7, one results block
//! per level. Splits and trial seeds are shared across levels so the
//! comparison is paired.

use serde_json::json;
use setgp::bayesopt::{replicate, CampaignConfig, Method};
use setgp::gp::JitterPolicy;
use setgp::hyperfit::{FitConfig, KernelFamily};
use setgp::{Error, Result};

use super::{mean_ok_q2, q2_csv, q2_summary_csv, validation_rows};
use crate::data::{dataset, fmt_f64, pool_with_values, source_name};
use crate::manifest::ManifestBuilder;
use crate::JitterSweepArgs;

pub fn run(args: &JitterSweepArgs) -> Result<()> {
    if !(args.ratio > 0.0 && args.ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "--ratio {} must be strictly between 0 and 1",
            args.ratio
        )));
    }
    if args.reps < 1 {
        return Err(Error::InvalidInput("--reps must be at least 1".into()));
    }
    let problem = source_name(&args.source);
    let data = dataset(&args.source, args.seed)?;
    let pool_values = if args.trials > 0 {
        Some(pool_with_values(&args.source, args.seed)?)
    } else {
        None
    };

    let mut manifest = ManifestBuilder::new(
        "jitter-sweep",
        json!({
            "problem": problem,
            "ratio": args.ratio,
            "reps": args.reps,
            "trials": args.trials,
            "init": args.init,
            "budget": args.budget,
        }),
        args.seed,
    );

    let mut sweep = String::from("a,ratio,mean_q2,n_ok,hits,trials,aborted\n");
    for a in 1..=7u32 {
        let policy = JitterPolicy::Bound { a: a as f64 };
        let sub = args.out.join(format!("a{a}"));
        let kernels = [("ds", KernelFamily::Ds, policy)];
        let rows = validation_rows(&data, &kernels, &[args.ratio], args.reps, args.seed)?;
        manifest.write_output(&sub, "q2.csv", &q2_csv(&problem, &rows))?;
        manifest.write_output(&sub, "q2_summary.csv", &q2_summary_csv(&problem, &rows))?;
        let (mean_q2, n_ok) = mean_ok_q2(&rows);

        let (hits, trials, aborted) = match &pool_values {
            None => (String::new(), String::new(), String::new()),
            Some((pool, values)) => {
                let objective = |i: usize| values[i];
                let cfg = FitConfig {
                    jitter_policy: policy,
                    ..FitConfig::defaults(pool.sets()[0].dim())
                };
                let rep = replicate(
                    pool,
                    &objective,
                    &CampaignConfig {
                        n_init: args.init,
                        budget: args.budget,
                        method: Method::Ei { family: KernelFamily::Ds, cfg },
                    },
                    args.trials,
                    args.seed,
                )?;
                let mut summary = String::from("method,iteration,median,p95\n");
                let name = format!("ei-ds+j{a}");
                for (k, (m, p)) in rep.summary.median.iter().zip(&rep.summary.p95).enumerate() {
                    summary.push_str(&format!("{name},{k},{},{}\n", fmt_f64(*m), fmt_f64(*p)));
                }
                manifest.write_output(&sub, "summary.csv", &summary)?;
                (
                    rep.summary.hit_count.to_string(),
                    rep.summary.n_trials.to_string(),
                    rep.summary.aborted.to_string(),
                )
            }
        };
        sweep.push_str(&format!(
            "{a},{},{},{n_ok},{hits},{trials},{aborted}\n",
            fmt_f64(args.ratio),
            fmt_f64(mean_q2)
        ));
    }
    manifest.write_output(&args.out, "sweep_summary.csv", &sweep)?;
    manifest.finish(&args.out)
}
