//! Subcommand implementations.

pub mod bo;
pub mod diag;
pub mod jitter_sweep;
pub mod validate;

use rayon::prelude::*;

use setgp::gp::{self, GPModel, JitterPolicy, SetDataset};
use setgp::hyperfit::{fit_hyperparams, FitConfig, KernelFamily};
use setgp::kernels::{DeepKernelParams, InnerKernelParams, KernelSpec};
use setgp::testbed::split;
use setgp::{Error, Result};

use crate::data::{derive_seed, fmt_f64};

/// Short machine-readable code for a numerical failure, used in CSV error
/// columns.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::SingularMatrix { .. } => "singular",
        Error::SingularAfterJitter { .. } => "singular-after-jitter",
        Error::ExhaustiveSingularity => "exhaustive-singularity",
        Error::ConstantResponses => "constant-responses",
        _ => "numerical",
    }
}

/// Fits ranges on the train split and returns the fitted model.
pub fn fit_model(
    train: &SetDataset,
    family: KernelFamily,
    cfg: &FitConfig,
) -> Result<GPModel> {
    let report = fit_hyperparams(train, family, cfg)?;
    let inner = InnerKernelParams::new(report.best_theta_x)?;
    let spec = match family {
        KernelFamily::Ds => KernelSpec::Ds(inner),
        KernelFamily::De => KernelSpec::De(DeepKernelParams::new(
            inner,
            report.best_theta_h.expect("de family has an outer range"),
            report.best_sigma2_h,
        )?),
    };
    gp::fit(train, &spec, cfg.jitter_policy)
}

/// Test-set Q^2 of a fitted model.
pub fn model_q2(model: &GPModel, test: &SetDataset) -> Result<f64> {
    let actual: Vec<f64> = test.records().iter().map(|(_, y)| *y).collect();
    let predicted: Vec<f64> = test
        .records()
        .iter()
        .map(|(s, _)| model.predict(s).map(|p| p.mean))
        .collect::<Result<_>>()?;
    gp::q2(&actual, &predicted)
}

/// One Q^2 validation cell result.
#[derive(Clone, Copy)]
pub struct Q2Row {
    pub kernel: &'static str,
    pub ratio: f64,
    pub replication: usize,
    pub q2: f64,
    pub error: &'static str,
}

/// Runs `reps` seeded split/fit/score replications for each (kernel,
/// policy) and each ratio. Singular fits become NaN rows with an error
/// code; input errors abort. Cells run in parallel but are reported in
/// deterministic order.
#[allow(clippy::type_complexity)]
pub fn validation_rows(
    data: &SetDataset,
    kernels: &[(&'static str, KernelFamily, JitterPolicy)],
    ratios: &[f64],
    reps: usize,
    base_seed: u64,
) -> Result<Vec<Q2Row>> {
    let mut cells = Vec::new();
    for (ki, &(name, family, policy)) in kernels.iter().enumerate() {
        for (ri, &ratio) in ratios.iter().enumerate() {
            for rep in 0..reps {
                cells.push((ki, name, family, policy, ri, ratio, rep));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(_, name, family, policy, ri, ratio, rep)| {
            // Split seeds depend on (ratio, rep) only, so methods and
            // jitter levels are compared on identical partitions.
            let split_seed = derive_seed(base_seed, &[1, ri as u64, rep as u64]);
            let fit_seed = derive_seed(base_seed, &[2, ri as u64, rep as u64]);
            let (train, test) = split(data, ratio, split_seed)?;
            let cfg = FitConfig {
                seed: fit_seed,
                jitter_policy: policy,
                ..FitConfig::defaults(data.dimension())
            };
            let outcome = fit_model(&train, family, &cfg)
                .and_then(|model| model_q2(&model, &test));
            match outcome {
                Ok(q2) => Ok(Q2Row { kernel: name, ratio, replication: rep, q2, error: "" }),
                Err(e) if e.is_input_error() => Err(e),
                Err(e) => Ok(Q2Row {
                    kernel: name,
                    ratio,
                    replication: rep,
                    q2: f64::NAN,
                    error: error_code(&e),
                }),
            }
        })
        .collect()
}

/// `q2.csv` body: one row per replication.
pub fn q2_csv(problem: &str, rows: &[Q2Row]) -> String {
    let mut out = String::from("problem,kernel,ratio,replication,q2,error\n");
    for r in rows {
        out.push_str(&format!(
            "{problem},{},{},{},{},{}\n",
            r.kernel,
            fmt_f64(r.ratio),
            r.replication,
            fmt_f64(r.q2),
            r.error
        ));
    }
    out
}

/// `q2_summary.csv` body: mean Q^2 per (kernel, ratio) cell over the
/// successful replications.
pub fn q2_summary_csv(problem: &str, rows: &[Q2Row]) -> String {
    let mut out = String::from("problem,kernel,ratio,mean_q2,n_ok,n_failed\n");
    let mut seen: Vec<(&'static str, f64)> = Vec::new();
    for r in rows {
        if !seen.iter().any(|&(k, rt)| k == r.kernel && rt == r.ratio) {
            seen.push((r.kernel, r.ratio));
        }
    }
    for (kernel, ratio) in seen {
        let cell: Vec<&Q2Row> = rows
            .iter()
            .filter(|r| r.kernel == kernel && r.ratio == ratio)
            .collect();
        let ok: Vec<f64> = cell.iter().filter(|r| r.error.is_empty()).map(|r| r.q2).collect();
        let mean = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().sum::<f64>() / ok.len() as f64
        };
        out.push_str(&format!(
            "{problem},{kernel},{},{},{},{}\n",
            fmt_f64(ratio),
            fmt_f64(mean),
            ok.len(),
            cell.len() - ok.len()
        ));
    }
    out
}

/// Mean Q^2 over the successful rows of one cell (NaN when none).
pub fn mean_ok_q2(rows: &[Q2Row]) -> (f64, usize) {
    let ok: Vec<f64> = rows.iter().filter(|r| r.error.is_empty()).map(|r| r.q2).collect();
    if ok.is_empty() {
        (f64::NAN, 0)
    } else {
        (ok.iter().sum::<f64>() / ok.len() as f64, ok.len())
    }
}

/// `q2_table.csv` body: the wide table layout, one row per kernel with a
/// mean-Q^2 column per split ratio.
pub fn q2_table_csv(
    problem: &str,
    rows: &[Q2Row],
    kernels: &[&'static str],
    ratios: &[f64],
) -> String {
    let mut out = String::from("problem,kernel");
    for &r in ratios {
        out.push_str(&format!(",q2_ratio_{}", fmt_f64(r)));
    }
    out.push('\n');
    for &kernel in kernels {
        out.push_str(&format!("{problem},{kernel}"));
        for &ratio in ratios {
            let cell: Vec<Q2Row> = rows
                .iter()
                .filter(|row| row.kernel == kernel && row.ratio == ratio)
                .copied()
                .collect();
            let (mean, _) = mean_ok_q2(&cell);
            out.push_str(&format!(",{}", fmt_f64(mean)));
        }
        out.push('\n');
    }
    out
}
