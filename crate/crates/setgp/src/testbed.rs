//! Synthetic set-valued objectives and dataset utilities.
//!
//! * The rescaled Branin-Hoo function on the unit square and its MAX /
//!   MIN / MEAN extensions to point sets.
//! * A synthetic combinatorial subset-selection objective: pick `p` of `m`
//!   latent sites so that the min-distance coverage of a dense grid
//!   matches the full-site coverage (full-vs-subset score discrepancies,
//!   squared and summed over the grid).
//! * Seeded dataset generation, train/test splitting, and a CSV schema for
//!   external set-valued datasets.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::SetDataset;
use crate::sets::{GroundSet, Point, PointSet};

// ---------------------------------------------------------------------------
// Branin.
// ---------------------------------------------------------------------------

/// Branin-Hoo on its native domain `[-5, 10] x [0, 15]`.
fn branin_native(a: f64, b: f64) -> f64 {
    use std::f64::consts::PI;
    let t = b - 5.1 / (4.0 * PI * PI) * a * a + 5.0 * a / PI - 6.0;
    t * t + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * a.cos() + 10.0
}

/// Rescaled Branin-Hoo: affine map of the unit square onto
/// `[-5, 10] x [0, 15]`, then the standard formula. Global minimum
/// 0.397887 near the three known minimizers.
pub fn branin(x: &Point) -> Result<f64> {
    if x.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: x.dim(),
        });
    }
    let (u, v) = (x.coords()[0], x.coords()[1]);
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!(
            "branin input ({u}, {v}) outside the unit square"
        )));
    }
    Ok(branin_native(15.0 * u - 5.0, 15.0 * v))
}

// ---------------------------------------------------------------------------
// Set objectives.
// ---------------------------------------------------------------------------

/// Deterministic objective over point sets.
#[derive(Debug, Clone)]
pub enum SetObjective {
    /// Largest Branin value over the set.
    Max,
    /// Smallest Branin value over the set.
    Min,
    /// Average Branin value over the set.
    Mean,
    /// Synthetic subset-selection objective on a finite ground set.
    Combinatorial(CombinatorialProblem),
    /// Placeholder for CSV-backed data with no analytic form.
    External,
}

impl SetObjective {
    pub fn name(&self) -> &'static str {
        match self {
            SetObjective::Max => "max",
            SetObjective::Min => "min",
            SetObjective::Mean => "mean",
            SetObjective::Combinatorial(_) => "combinatorial",
            SetObjective::External => "external",
        }
    }
}

/// Evaluates a set objective at a canonical set.
pub fn eval_set_objective(obj: &SetObjective, s: &PointSet) -> Result<f64> {
    match obj {
        SetObjective::Max | SetObjective::Min | SetObjective::Mean => {
            let values = s.iter().map(branin).collect::<Result<Vec<f64>>>()?;
            Ok(match obj {
                SetObjective::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                SetObjective::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
                _ => values.iter().sum::<f64>() / values.len() as f64,
            })
        }
        SetObjective::Combinatorial(problem) => {
            let indices = s
                .iter()
                .map(|p| {
                    problem.ground.position(p).ok_or_else(|| {
                        Error::invalid("set point is not an element of the ground set")
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            problem.objective(&indices)
        }
        SetObjective::External => Err(Error::invalid(
            "external objectives are data-backed and cannot be evaluated",
        )),
    }
}

// ---------------------------------------------------------------------------
// Combinatorial subset selection.
// ---------------------------------------------------------------------------

/// Choose `subset_size` of the ground sites minimizing the squared
/// discrepancy between full-site and subset min-distance coverage over a
/// dense evaluation grid: `f(S) = sum_t (g(t, S_full) - g(t, S))^2` with
/// `g(t, S) = min_{x in S} ||t - x||`. The full subset scores zero by
/// construction and `f` is never negative.
#[derive(Debug, Clone)]
pub struct CombinatorialProblem {
    ground: GroundSet,
    subset_size: usize,
    grid: Vec<(f64, f64)>,
    full_coverage: Vec<f64>,
}

impl CombinatorialProblem {
    /// Builds the problem over a `grid_resolution^2` evaluation grid
    /// (at least 20 x 20). The ground set must be 2-dimensional.
    pub fn new(ground: GroundSet, subset_size: usize, grid_resolution: usize) -> Result<Self> {
        if ground.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: ground.dim(),
            });
        }
        if subset_size < 1 || subset_size > ground.len() {
            return Err(Error::invalid(
                "subset size must be between 1 and the ground cardinality",
            ));
        }
        if grid_resolution < 20 {
            return Err(Error::invalid("grid resolution must be at least 20"));
        }
        let r = grid_resolution;
        let mut grid = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                grid.push((i as f64 / (r - 1) as f64, j as f64 / (r - 1) as f64));
            }
        }
        let all: Vec<usize> = (0..ground.len()).collect();
        let full_coverage = grid
            .iter()
            .map(|&t| coverage(&ground, &all, t))
            .collect();
        Ok(CombinatorialProblem {
            ground,
            subset_size,
            grid,
            full_coverage,
        })
    }

    /// Problem over `m` seeded uniform latent sites.
    pub fn random(m: usize, subset_size: usize, grid_resolution: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sites = (0..m)
            .map(|_| Point::new(vec![rng.random::<f64>(), rng.random::<f64>()]))
            .collect::<Result<Vec<_>>>()?;
        CombinatorialProblem::new(GroundSet::new(sites)?, subset_size, grid_resolution)
    }

    pub fn ground(&self) -> &GroundSet {
        &self.ground
    }

    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    /// The objective at a subset of exactly `subset_size` indices.
    pub fn objective(&self, subset: &[usize]) -> Result<f64> {
        if subset.len() != self.subset_size {
            return Err(Error::invalid(format!(
                "subset has {} indices, problem expects {}",
                subset.len(),
                self.subset_size
            )));
        }
        self.coverage_discrepancy(subset)
    }

    /// The same discrepancy for any nonempty valid subset, regardless of
    /// the problem's nominal size (diagnostics and property checks).
    pub fn coverage_discrepancy(&self, subset: &[usize]) -> Result<f64> {
        self.ground.check_subset(subset)?;
        let mut f = 0.0;
        for (t, &g_full) in self.grid.iter().zip(&self.full_coverage) {
            let g_s = coverage(&self.ground, subset, *t);
            let d = g_full - g_s;
            f += d * d;
        }
        Ok(f)
    }

    /// All `C(m, subset_size)` subsets in lexicographic index order.
    pub fn enumerate_subsets(&self) -> Vec<Vec<usize>> {
        combinations(self.ground.len(), self.subset_size)
    }
}

fn coverage(ground: &GroundSet, subset: &[usize], t: (f64, f64)) -> f64 {
    subset
        .iter()
        .map(|&i| {
            let c = ground.elements()[i].coords();
            let (dx, dy) = (t.0 - c[0], t.1 - c[1]);
            (dx * dx + dy * dy).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// All k-combinations of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if c[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset generation and splitting.
// ---------------------------------------------------------------------------

/// Generates a seeded dataset of `n` sets of `p` points each, paired with
/// objective values.
///
/// Branin-kind objectives draw `p` i.i.d. uniform points per set in the
/// unit square; the combinatorial kind draws `n` distinct random subsets
/// of its ground set (here `p` must equal the problem's subset size).
pub fn generate_dataset(obj: &SetObjective, n: usize, p: usize, seed: u64) -> Result<SetDataset> {
    if n < 1 || p < 1 {
        return Err(Error::invalid("n and p must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match obj {
        SetObjective::Max | SetObjective::Min | SetObjective::Mean => {
            let mut records = Vec::with_capacity(n);
            for _ in 0..n {
                let rows: Vec<Vec<f64>> = (0..p)
                    .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                    .collect();
                let s = PointSet::from_coords(&rows)?;
                let y = eval_set_objective(obj, &s)?;
                records.push((s, y));
            }
            SetDataset::new(records)
        }
        SetObjective::Combinatorial(problem) => {
            if p != problem.subset_size() {
                return Err(Error::invalid(format!(
                    "requested set size {p} differs from the problem's subset size {}",
                    problem.subset_size()
                )));
            }
            let m = problem.ground().len();
            let total = binomial(m, p);
            if (n as u128) > total {
                return Err(Error::invalid(format!(
                    "cannot draw {n} distinct subsets: only {total} exist"
                )));
            }
            let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(n);
            let mut records = Vec::with_capacity(n);
            while records.len() < n {
                let mut idx = rand::seq::index::sample(&mut rng, m, p).into_vec();
                idx.sort_unstable();
                if seen.insert(idx.clone()) {
                    let y = problem.objective(&idx)?;
                    records.push((problem.ground().subset(&idx)?, y));
                }
            }
            SetDataset::new(records)
        }
        SetObjective::External => Err(Error::invalid(
            "external objectives are data-backed; load them from csv",
        )),
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Seeded uniform train/test partition. The train side receives
/// `floor(ratio * n)` records (clamped so both sides are nonempty);
/// original record order is preserved within each side.
pub fn split(data: &SetDataset, ratio: f64, seed: u64) -> Result<(SetDataset, SetDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("split ratio must be strictly between 0 and 1"));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid("splitting requires at least 2 records"));
    }
    let n_train = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = rand::seq::index::sample(&mut rng, n, n_train).into_vec();
    train_idx.sort_unstable();
    let picked: HashSet<usize> = train_idx.iter().copied().collect();
    let test_idx: Vec<usize> = (0..n).filter(|i| !picked.contains(i)).collect();
    Ok((data.select(&train_idx)?, data.select(&test_idx)?))
}

// ---------------------------------------------------------------------------
// CSV ingestion.
// ---------------------------------------------------------------------------
//
// Schema: header `set_id,point_idx,x1,...,xd,response`, one row per point,
// `response` repeated identically on every row of a set, `.` decimal
// separator, LF line endings.

/// Writes a dataset in the set-per-rows CSV schema. Floats are printed in
/// shortest round-trip form, so a write/load cycle is exact.
pub fn save_csv(data: &SetDataset, path: &Path) -> Result<()> {
    let d = data.dimension();
    let mut out = String::new();
    out.push_str("set_id,point_idx");
    for k in 1..=d {
        out.push_str(&format!(",x{k}"));
    }
    out.push_str(",response\n");
    for (set_id, (s, y)) in data.records().iter().enumerate() {
        for (point_idx, pt) in s.iter().enumerate() {
            out.push_str(&format!("{set_id},{point_idx}"));
            for c in pt.coords() {
                out.push_str(&format!(",{c}"));
            }
            out.push_str(&format!(",{y}\n"));
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Loads a dataset from the CSV schema above. Sets are grouped by
/// `set_id` in first-appearance order; varying cardinalities are allowed.
/// Malformed rows fail with their line number.
pub fn load_csv(path: &Path) -> Result<SetDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(&e, 1))?;

    let headers = reader.headers().map_err(|e| csv_error(&e, 1))?.clone();
    let cols = headers.len();
    if cols < 4
        || headers.get(0) != Some("set_id")
        || headers.get(1) != Some("point_idx")
        || headers.get(cols - 1) != Some("response")
    {
        return Err(Error::CsvParse {
            line: 1,
            message: "header must be set_id,point_idx,x1,...,xd,response".into(),
        });
    }
    let d = cols - 3;
    for k in 1..=d {
        if headers.get(1 + k) != Some(format!("x{k}").as_str()) {
            return Err(Error::CsvParse {
                line: 1,
                message: format!("coordinate column {} must be named x{k}", 1 + k),
            });
        }
    }

    struct Group {
        points: Vec<Point>,
        response: f64,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Group> = std::collections::HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = match e.position() {
                Some(p) => p.line(),
                None => 0,
            };
            csv_error(&e, line)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_f64 = |field: usize, name: &str| -> Result<f64> {
            let raw = record.get(field).ok_or_else(|| Error::CsvParse {
                line,
                message: format!("missing {name}"),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::CsvParse {
                line,
                message: format!("invalid {name} value {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::CsvParse {
                    line,
                    message: format!("{name} must be finite"),
                });
            }
            Ok(v)
        };
        let set_id = record.get(0).unwrap_or_default().to_string();
        record
            .get(1)
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::CsvParse {
                line,
                message: "invalid point_idx".into(),
            })?;
        let coords = (0..d)
            .map(|k| parse_f64(2 + k, &format!("x{}", k + 1)))
            .collect::<Result<Vec<f64>>>()?;
        let response = parse_f64(cols - 1, "response")?;
        let point = Point::new(coords).map_err(|e| Error::CsvParse {
            line,
            message: e.to_string(),
        })?;

        match groups.get_mut(&set_id) {
            Some(g) => {
                if g.response != response {
                    return Err(Error::CsvParse {
                        line,
                        message: format!(
                            "response {response} disagrees with earlier value {} for set {set_id}",
                            g.response
                        ),
                    });
                }
                g.points.push(point);
            }
            None => {
                order.push(set_id.clone());
                groups.insert(
                    set_id,
                    Group {
                        points: vec![point],
                        response,
                    },
                );
            }
        }
    }

    if order.is_empty() {
        return Err(Error::CsvParse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let records = order
        .into_iter()
        .map(|id| {
            let g = groups.remove(&id).expect("group exists");
            Ok((PointSet::new(g.points)?, g.response))
        })
        .collect::<Result<Vec<_>>>()?;
    SetDataset::new(records)
}

fn csv_error(e: &csv::Error, line: u64) -> Error {
    Error::CsvParse {
        line,
        message: e.to_string(),
    }
}
