//! `setgp bo`: Expected-Improvement campaigns with the random baseline.

use serde_json::json;
use setgp::bayesopt::{replicate, BoTrialRecord, CampaignConfig, Method, Replication};
use setgp::hyperfit::FitConfig;
use setgp::{Error, Result};

use crate::data::{self, fmt_f64, kernel_family, kernel_name, pool_with_values, source_name};
use crate::manifest::ManifestBuilder;
use crate::BoArgs;

pub fn run(args: &BoArgs) -> Result<()> {
    if args.kernel.is_empty() {
        return Err(Error::InvalidInput("at least one --kernel is required".into()));
    }
    if args.trials < 1 {
        return Err(Error::InvalidInput("--trials must be at least 1".into()));
    }
    let policy = data::jitter_policy(args.jitter_a)?;
    let problem = source_name(&args.source);
    let (pool, values) = pool_with_values(&args.source, args.seed)?;
    let objective = |i: usize| values[i];
    let dim = pool.sets()[0].dim();
    let cfg = FitConfig {
        jitter_policy: policy,
        ..FitConfig::defaults(dim)
    };

    let mut methods: Vec<(String, Method)> = args
        .kernel
        .iter()
        .map(|&k| {
            let name = match (k, args.jitter_a) {
                (crate::KernelArg::Ds, Some(a)) => format!("ei-ds+j{a}"),
                _ => format!("ei-{}", kernel_name(k)),
            };
            (name, Method::Ei { family: kernel_family(k), cfg: cfg.clone() })
        })
        .collect();
    methods.push(("random".to_string(), Method::Random));

    let mut manifest = ManifestBuilder::new(
        "bo",
        json!({
            "problem": problem,
            "methods": methods.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            "jitter_a": args.jitter_a,
            "trials": args.trials,
            "init": args.init,
            "budget": args.budget,
            "pool_size": pool.len(),
        }),
        args.seed,
    );

    let mut trials_csv = String::from("method,trial,iteration,chosen,f,best_so_far,error\n");
    let mut summary_csv = String::from("method,iteration,median,p95\n");
    let mut hits_csv = String::from("method,hits,trials,aborted\n");

    for (name, method) in &methods {
        let rep: Replication = replicate(
            &pool,
            &objective,
            &CampaignConfig { n_init: args.init, budget: args.budget, method: method.clone() },
            args.trials,
            args.seed,
        )?;
        for (t, trial) in rep.trials.iter().enumerate() {
            append_trial_rows(&mut trials_csv, name, t, trial);
        }
        for (k, (m, p)) in rep.summary.median.iter().zip(&rep.summary.p95).enumerate() {
            summary_csv.push_str(&format!("{name},{k},{},{}\n", fmt_f64(*m), fmt_f64(*p)));
        }
        hits_csv.push_str(&format!(
            "{name},{},{},{}\n",
            rep.summary.hit_count, rep.summary.n_trials, rep.summary.aborted
        ));
    }

    manifest.write_output(&args.out, "trials.csv", &trials_csv)?;
    manifest.write_output(&args.out, "summary.csv", &summary_csv)?;
    manifest.write_output(&args.out, "hits.csv", &hits_csv)?;
    manifest.finish(&args.out)
}

fn append_trial_rows(out: &mut String, method: &str, t: usize, trial: &BoTrialRecord) {
    for (k, it) in trial.iterations.iter().enumerate() {
        out.push_str(&format!(
            "{method},{t},{},{},{},{},\n",
            k + 1,
            it.chosen_index,
            fmt_f64(it.observed_f),
            fmt_f64(it.best_so_far),
        ));
    }
    if let Some(abort) = &trial.abort {
        out.push_str(&format!(
            "{method},{t},{},,,{},aborted: {}\n",
            abort.iteration,
            fmt_f64(trial.final_best),
            abort.message.replace(',', ";"),
        ));
    }
}
