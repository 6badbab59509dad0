//! Dataset and candidate-pool assembly shared by the subcommands.
//!
//! Synthetic sources follow the experimental protocol scales: Branin-kind
//! objectives draw 1000 sets of 10 points; the combinatorial problem uses
//! 15 latent sites, subsets of 4, a 20x20 grid, and a 200-subset dataset
//! (the optimization pool enumerates all 1365 subsets).

use setgp::bayesopt::CandidatePool;
use setgp::gp::SetDataset;
use setgp::hyperfit::KernelFamily;
use setgp::testbed::{combinations, generate_dataset, load_csv, CombinatorialProblem, SetObjective};
use setgp::{Error, Result};

use crate::{KernelArg, ObjectiveArg, SourceArgs};

pub const SYNTH_N: usize = 1000;
pub const SYNTH_P: usize = 10;
pub const COMB_SITES: usize = 15;
pub const COMB_SUBSET: usize = 4;
pub const COMB_GRID: usize = 20;
pub const COMB_DATASET_N: usize = 200;

pub fn kernel_family(k: KernelArg) -> KernelFamily {
    match k {
        KernelArg::Ds => KernelFamily::Ds,
        KernelArg::De => KernelFamily::De,
    }
}

pub fn kernel_name(k: KernelArg) -> &'static str {
    match k {
        KernelArg::Ds => "ds",
        KernelArg::De => "de",
    }
}

pub fn source_name(source: &SourceArgs) -> String {
    match &source.csv {
        Some(path) => format!("csv:{}", path.display()),
        None => match source.objective {
            ObjectiveArg::Max => "max".into(),
            ObjectiveArg::Min => "min".into(),
            ObjectiveArg::Mean => "mean".into(),
            ObjectiveArg::Combinatorial => "combinatorial".into(),
        },
    }
}

/// Dataset for prediction-style commands.
pub fn dataset(source: &SourceArgs, seed: u64) -> Result<SetDataset> {
    if let Some(path) = &source.csv {
        return load_csv(path);
    }
    match source.objective {
        ObjectiveArg::Max => generate_dataset(&SetObjective::Max, SYNTH_N, SYNTH_P, seed),
        ObjectiveArg::Min => generate_dataset(&SetObjective::Min, SYNTH_N, SYNTH_P, seed),
        ObjectiveArg::Mean => generate_dataset(&SetObjective::Mean, SYNTH_N, SYNTH_P, seed),
        ObjectiveArg::Combinatorial => {
            let problem = CombinatorialProblem::random(COMB_SITES, COMB_SUBSET, COMB_GRID, seed)?;
            generate_dataset(
                &SetObjective::Combinatorial(problem),
                COMB_DATASET_N,
                COMB_SUBSET,
                seed,
            )
        }
    }
}

/// Candidate pool plus per-candidate objective values for optimization
/// commands. CSV and Branin sources optimize over their dataset; the
/// combinatorial source enumerates every subset.
pub fn pool_with_values(source: &SourceArgs, seed: u64) -> Result<(CandidatePool, Vec<f64>)> {
    if source.csv.is_none() && source.objective == ObjectiveArg::Combinatorial {
        let problem = CombinatorialProblem::random(COMB_SITES, COMB_SUBSET, COMB_GRID, seed)?;
        let subsets = combinations(COMB_SITES, COMB_SUBSET);
        let values = subsets
            .iter()
            .map(|s| problem.objective(s))
            .collect::<Result<Vec<f64>>>()?;
        let pool = CandidatePool::from_ground_subsets(problem.ground(), &subsets)?;
        return Ok((pool, values));
    }
    let data = dataset(source, seed)?;
    let values: Vec<f64> = data.records().iter().map(|(_, y)| *y).collect();
    let pool = CandidatePool::new(data.sets())
        .map_err(|e| Error::InvalidInput(format!("dataset is not a valid pool: {e}")))?;
    Ok((pool, values))
}

pub fn jitter_policy(jitter_a: Option<u32>) -> Result<setgp::gp::JitterPolicy> {
    match jitter_a {
        None => Ok(setgp::gp::JitterPolicy::None),
        Some(0) => Err(Error::InvalidInput("--jitter-a must be at least 1".into())),
        Some(a) => Ok(setgp::gp::JitterPolicy::Bound { a: a as f64 }),
    }
}

/// Deterministic per-cell seed derivation.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = h
            .wrapping_add(p)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Shortest round-trip float formatting (NaN prints as `NaN`).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}
