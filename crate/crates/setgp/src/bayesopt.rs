//! Expected-Improvement Bayesian optimization over a finite pool of
//! candidate point sets (minimization).
//!
//! Each iteration re-fits the hyperparameters (full budget on the first
//! iteration, then half population / half generations warm-started at the
//! previous optimum), fits the GP, scores every unevaluated candidate by
//! Expected Improvement, and evaluates the best one. A trial whose fit
//! becomes unrecoverably singular is recorded as aborted rather than
//! dropped, so hit counts account for failures.

use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gp::{self, GPModel, PredictionResult, SetDataset};
use crate::hyperfit::{self, FitConfig, KernelFamily, Thetas};
use crate::kernels::{DeepKernelParams, InnerKernelParams, KernelSpec};
use crate::sets::{GroundSet, PointSet};

/// A finite pool of pairwise-distinct candidate sets.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    sets: Vec<PointSet>,
}

impl CandidatePool {
    /// Validates that the canonicalized candidates are pairwise distinct.
    pub fn new(sets: Vec<PointSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::invalid("candidate pool must be nonempty"));
        }
        let dim = sets[0].dim();
        for s in &sets {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
        }
        let mut order: Vec<usize> = (0..sets.len()).collect();
        order.sort_by(|&a, &b| sets[a].lex_cmp(&sets[b]));
        for w in order.windows(2) {
            if sets[w[0]].lex_cmp(&sets[w[1]]) == std::cmp::Ordering::Equal {
                return Err(Error::invalid(format!(
                    "candidates {} and {} are equal after canonicalization",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(CandidatePool { sets })
    }

    /// Pool of ground-set subsets given by index lists.
    pub fn from_ground_subsets(ground: &GroundSet, subsets: &[Vec<usize>]) -> Result<Self> {
        let sets = subsets
            .iter()
            .map(|idx| ground.subset(idx))
            .collect::<Result<Vec<_>>>()?;
        CandidatePool::new(sets)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&PointSet> {
        self.sets.get(i)
    }

    pub fn sets(&self) -> &[PointSet] {
        &self.sets
    }
}

/// One Expected-Improvement iteration of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct BoIteration {
    pub chosen_index: usize,
    pub ei_value: f64,
    pub observed_f: f64,
    pub best_so_far: f64,
}

/// Why a trial stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct BoAbort {
    /// 1-based iteration at which the failure occurred.
    pub iteration: usize,
    pub message: String,
}

/// Record of one optimization trial.
#[derive(Debug, Clone, PartialEq)]
pub struct BoTrialRecord {
    pub seed: u64,
    pub init_indices: Vec<usize>,
    /// Best response among the initial design, before any iteration.
    pub init_best: f64,
    pub iterations: Vec<BoIteration>,
    pub final_best: f64,
    pub found_optimum: bool,
    pub abort: Option<BoAbort>,
}

impl BoTrialRecord {
    /// Best-so-far curve padded to `budget + 1` entries: index 0 is the
    /// post-initialization best, then one entry per iteration, with the
    /// last value carried forward for aborted trials.
    pub fn best_curve(&self, budget: usize) -> Vec<f64> {
        let mut curve = Vec::with_capacity(budget + 1);
        curve.push(self.init_best);
        let mut last = self.init_best;
        for k in 0..budget {
            if let Some(it) = self.iterations.get(k) {
                last = it.best_so_far;
            }
            curve.push(last);
        }
        curve
    }
}

/// Closed-form Expected Improvement under the minimization convention:
/// `(best - m) Phi(z) + s phi(z)` with `z = (best - m) / s`. Degenerates
/// to `max(0, best - mean)` when the standard deviation vanishes.
pub fn expected_improvement(pred: &PredictionResult, best: f64) -> f64 {
    let improvement = best - pred.mean;
    if pred.sd <= 1e-12 {
        return improvement.max(0.0);
    }
    let z = improvement / pred.sd;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (improvement * normal.cdf(z) + pred.sd * normal.pdf(z)).max(0.0)
}

/// Scores every unevaluated candidate by EI and returns the argmax, ties
/// broken by lowest index.
pub fn propose(
    model: &GPModel,
    pool: &CandidatePool,
    evaluated: &[bool],
) -> Result<(usize, f64)> {
    if evaluated.len() != pool.len() {
        return Err(Error::invalid("evaluated mask length must match pool size"));
    }
    let best = model
        .responses()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let scores: Vec<Option<f64>> = pool
        .sets()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if evaluated[i] {
                None
            } else {
                let pred = model.predict(s).expect("pool dimension checked");
                Some(expected_improvement(&pred, best))
            }
        })
        .collect();
    let mut winner: Option<(usize, f64)> = None;
    for (i, sc) in scores.iter().enumerate() {
        if let Some(ei) = sc {
            match winner {
                Some((_, best_ei)) if *ei <= best_ei => {}
                _ => winner = Some((i, *ei)),
            }
        }
    }
    winner.ok_or(Error::PoolExhausted)
}

/// Seeded uniform sample of `n_init` candidate indices without
/// replacement. Shared by the EI loop and the random baseline so all
/// methods start from the same initial design for a given seed.
pub fn initial_design(pool_len: usize, n_init: usize, seed: u64) -> Vec<usize> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, pool_len, n_init).into_vec()
}

fn validate_budget(pool_len: usize, n_init: usize, budget: usize) -> Result<()> {
    if n_init < 2 {
        return Err(Error::invalid("n_init must be at least 2"));
    }
    if n_init + budget > pool_len {
        return Err(Error::invalid(format!(
            "n_init + budget = {} exceeds pool size {}",
            n_init + budget,
            pool_len
        )));
    }
    Ok(())
}

fn pool_minimum(pool: &CandidatePool, objective: &(dyn Fn(usize) -> f64 + Sync)) -> f64 {
    (0..pool.len())
        .into_par_iter()
        .map(objective)
        .reduce(|| f64::INFINITY, f64::min)
}

fn spec_from_report(family: KernelFamily, thetas: &Thetas, sigma2: f64) -> Result<KernelSpec> {
    let inner = InnerKernelParams::new(thetas.theta_x)?;
    Ok(match family {
        KernelFamily::Ds => KernelSpec::Ds(inner),
        KernelFamily::De => KernelSpec::De(DeepKernelParams::new(
            inner,
            thetas.theta_h.expect("de family has an outer range"),
            sigma2,
        )?),
    })
}

/// Runs one Expected-Improvement trial.
///
/// Hyperparameters are re-determined every iteration: the first fit uses
/// the full `fit_cfg` budget, subsequent fits the reduced budget
/// warm-started at the previous optimum. Per-iteration fit seeds are
/// derived deterministically from `seed`.
pub fn run_bo(
    pool: &CandidatePool,
    objective: &(dyn Fn(usize) -> f64 + Sync),
    n_init: usize,
    budget: usize,
    family: KernelFamily,
    fit_cfg: &FitConfig,
    seed: u64,
) -> Result<BoTrialRecord> {
    validate_budget(pool.len(), n_init, budget)?;
    let pool_min = pool_minimum(pool, objective);

    let init_indices = initial_design(pool.len(), n_init, seed);
    let mut evaluated = vec![false; pool.len()];
    let mut records: Vec<(PointSet, f64)> = Vec::with_capacity(n_init + budget);
    let mut best = f64::INFINITY;
    for &i in &init_indices {
        evaluated[i] = true;
        let y = objective(i);
        best = best.min(y);
        records.push((pool.sets()[i].clone(), y));
    }
    let init_best = best;

    let mut iterations = Vec::with_capacity(budget);
    let mut abort = None;
    let mut warm: Option<Thetas> = None;

    for iter in 1..=budget {
        let data = SetDataset::new(records.clone())?;
        let cfg = FitConfig {
            seed: seed.wrapping_add((iter as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..if iter == 1 { fit_cfg.clone() } else { fit_cfg.reduced() }
        };
        let report = match hyperfit::fit_hyperparams_warm(&data, family, &cfg, warm) {
            Ok(r) => r,
            Err(e) => {
                abort = Some(BoAbort {
                    iteration: iter,
                    message: format!("hyperparameter search failed: {e}"),
                });
                break;
            }
        };
        warm = Some(report.thetas());
        let spec = spec_from_report(family, &report.thetas(), report.best_sigma2_h)?;
        let model = match gp::fit(&data, &spec, cfg.jitter_policy) {
            Ok(m) => m,
            Err(e) => {
                abort = Some(BoAbort {
                    iteration: iter,
                    message: format!("model fit failed: {e}"),
                });
                break;
            }
        };
        let (chosen, ei) = propose(&model, pool, &evaluated)?;
        evaluated[chosen] = true;
        let y = objective(chosen);
        best = best.min(y);
        records.push((pool.sets()[chosen].clone(), y));
        iterations.push(BoIteration {
            chosen_index: chosen,
            ei_value: ei,
            observed_f: y,
            best_so_far: best,
        });
    }

    Ok(BoTrialRecord {
        seed,
        init_indices,
        init_best,
        iterations,
        final_best: best,
        found_optimum: best == pool_min,
        abort,
    })
}

/// Uniform without-replacement baseline with the same record schema. The
/// first `n_init` draws coincide with [`initial_design`] for the seed.
pub fn run_random(
    pool: &CandidatePool,
    objective: &(dyn Fn(usize) -> f64 + Sync),
    n_init: usize,
    budget: usize,
    seed: u64,
) -> Result<BoTrialRecord> {
    use rand::{Rng, SeedableRng};
    validate_budget(pool.len(), n_init, budget)?;
    let pool_min = pool_minimum(pool, objective);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let init_indices = rand::seq::index::sample(&mut rng, pool.len(), n_init).into_vec();
    let mut best = f64::INFINITY;
    for &i in &init_indices {
        best = best.min(objective(i));
    }
    let init_best = best;

    // Continue drawing without replacement from the complement.
    let taken: std::collections::HashSet<usize> = init_indices.iter().copied().collect();
    let mut remaining: Vec<usize> = (0..pool.len()).filter(|i| !taken.contains(i)).collect();
    let mut iterations = Vec::with_capacity(budget);
    for k in 0..budget {
        let j = rng.random_range(k..remaining.len());
        remaining.swap(k, j);
        let chosen = remaining[k];
        let y = objective(chosen);
        best = best.min(y);
        iterations.push(BoIteration {
            chosen_index: chosen,
            ei_value: 0.0,
            observed_f: y,
            best_so_far: best,
        });
    }

    Ok(BoTrialRecord {
        seed,
        init_indices,
        init_best,
        iterations,
        final_best: best,
        found_optimum: best == pool_min,
        abort: None,
    })
}

/// Optimization method for the replication harness.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Ei { family: KernelFamily, cfg: FitConfig },
    Random,
}

/// Replication settings: shared initial-design size and iteration budget.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub n_init: usize,
    pub budget: usize,
    pub method: Method,
}

/// Per-iteration aggregate of the best-so-far curves across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    /// Trials whose final best equals the pool-wide minimum.
    pub hit_count: usize,
    pub n_trials: usize,
    /// Trials that stopped early on a singular fit.
    pub aborted: usize,
    /// Median best-so-far per iteration (index 0 = after initialization).
    pub median: Vec<f64>,
    /// 95th percentile best-so-far per iteration.
    pub p95: Vec<f64>,
}

/// Full output of [`replicate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub trials: Vec<BoTrialRecord>,
    pub summary: ReplicationSummary,
}

/// Runs `n_trials` independent trials (trial `t` uses seed
/// `base_seed + t`) and aggregates best-so-far curves. Aborted trials stay
/// in the aggregate with their best carried forward. Trials run in
/// parallel; results are reduced in trial order, so the output is
/// bit-identical across runs.
pub fn replicate(
    pool: &CandidatePool,
    objective: &(dyn Fn(usize) -> f64 + Sync),
    config: &CampaignConfig,
    n_trials: usize,
    base_seed: u64,
) -> Result<Replication> {
    if n_trials < 1 {
        return Err(Error::invalid("n_trials must be at least 1"));
    }
    validate_budget(pool.len(), config.n_init, config.budget)?;

    let trials: Vec<BoTrialRecord> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let seed = base_seed.wrapping_add(t as u64);
            match &config.method {
                Method::Ei { family, cfg } => {
                    run_bo(pool, objective, config.n_init, config.budget, *family, cfg, seed)
                }
                Method::Random => run_random(pool, objective, config.n_init, config.budget, seed),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = summarize(&trials, config.budget);
    Ok(Replication { trials, summary })
}

fn summarize(trials: &[BoTrialRecord], budget: usize) -> ReplicationSummary {
    let hit_count = trials.iter().filter(|t| t.found_optimum).count();
    let aborted = trials.iter().filter(|t| t.abort.is_some()).count();
    let curves: Vec<Vec<f64>> = trials.iter().map(|t| t.best_curve(budget)).collect();
    let mut median = Vec::with_capacity(budget + 1);
    let mut p95 = Vec::with_capacity(budget + 1);
    for k in 0..=budget {
        let mut values: Vec<f64> = curves.iter().map(|c| c[k]).collect();
        values.sort_by(f64::total_cmp);
        median.push(percentile_sorted(&values, 0.5));
        p95.push(percentile_sorted(&values, 0.95));
    }
    ReplicationSummary {
        hit_count,
        n_trials: trials.len(),
        aborted,
        median,
        p95,
    }
}

/// Percentile with linear interpolation on a sorted slice.
pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
