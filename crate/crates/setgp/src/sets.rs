//! Points in the unit hypercube and finite sets of them.
//!
//! A [`PointSet`] is the input object of every kernel in this crate. Sets
//! are stored in a canonical form: exact duplicate points removed and the
//! remainder sorted lexicographically by coordinates, so that two equal
//! sets produce bit-for-bit identical kernel values no matter how their
//! points were ordered on input.

use crate::error::{Error, Result};

/// A single evaluation point, a coordinate vector in `[0,1]^d`.
///
/// The kernels only require finite coordinates; the unit-cube range is the
/// convention of the surrounding test problems and is enforced where it
/// matters (e.g. [`crate::testbed::branin`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    /// Builds a point, rejecting empty or non-finite coordinate vectors.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("point must have at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        Ok(Point { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Squared Euclidean distance to another point of the same dimension.
    pub fn dist2(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        for (a, b) in self.coords.iter().zip(other.coords.iter()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }
}

/// A nonempty finite set of points, canonicalized on construction.
///
/// Canonical form: exact-equality duplicates removed, points sorted in
/// lexicographic coordinate order. All kernel operations require their
/// inputs in this form, which the constructor guarantees.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point>,
    canonical: bool,
}

impl PointSet {
    /// Canonicalizes and validates a list of points.
    ///
    /// Errors on an empty list or mixed dimensions. Exact duplicates are
    /// merged; the result is never empty.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point set must be nonempty"));
        }
        let dim = points[0].dim();
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
        }
        let mut points = points;
        points.sort_by(|a, b| a.lex_cmp(b));
        points.dedup_by(|a, b| a.coords == b.coords);
        Ok(PointSet {
            points,
            canonical: true,
        })
    }

    /// Convenience constructor from raw coordinate rows.
    pub fn from_coords(rows: &[Vec<f64>]) -> Result<Self> {
        let points = rows
            .iter()
            .map(|r| Point::new(r.clone()))
            .collect::<Result<Vec<_>>>()?;
        PointSet::new(points)
    }

    /// Singleton set.
    pub fn singleton(p: Point) -> Self {
        PointSet {
            points: vec![p],
            canonical: true,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    /// Total order used for deduplicating collections of sets.
    pub fn lex_cmp(&self, other: &PointSet) -> std::cmp::Ordering {
        let n = self.points.len().min(other.points.len());
        for i in 0..n {
            match self.points[i].lex_cmp(&other.points[i]) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.points.len().cmp(&other.points.len())
    }

    pub(crate) fn check_same_dim(&self, other: &PointSet) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

/// A finite base set of `c` pairwise-distinct points, indexed `0..c`.
///
/// Subsets of a ground set are addressed by index lists; the combinatorial
/// optimization problems operate on these.
#[derive(Debug, Clone)]
pub struct GroundSet {
    elements: Vec<Point>,
}

impl GroundSet {
    /// Validates that the elements share a dimension and are pairwise
    /// distinct (exact coordinate equality).
    pub fn new(elements: Vec<Point>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("ground set must be nonempty"));
        }
        let dim = elements[0].dim();
        for e in &elements {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
        }
        let mut sorted: Vec<&Point> = elements.iter().collect();
        sorted.sort_by(|a, b| a.lex_cmp(b));
        for w in sorted.windows(2) {
            if w[0].coords == w[1].coords {
                return Err(Error::invalid("ground set elements must be pairwise distinct"));
            }
        }
        Ok(GroundSet { elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn elements(&self) -> &[Point] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> Option<&Point> {
        self.elements.get(i)
    }

    /// Position of a point among the elements, by exact coordinate match.
    pub fn position(&self, p: &Point) -> Option<usize> {
        self.elements.iter().position(|e| e.coords == p.coords)
    }

    /// Validates an index list: nonempty, in range, distinct within the list.
    pub fn check_subset(&self, indices: &[usize]) -> Result<()> {
        if indices.is_empty() {
            return Err(Error::invalid("subset index list must be nonempty"));
        }
        let mut seen = vec![false; self.elements.len()];
        for &i in indices {
            if i >= self.elements.len() {
                return Err(Error::invalid(format!(
                    "subset index {i} out of range for ground set of size {}",
                    self.elements.len()
                )));
            }
            if seen[i] {
                return Err(Error::invalid(format!("subset index {i} repeated")));
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// Materializes the subset with the given indices as a [`PointSet`].
    pub fn subset(&self, indices: &[usize]) -> Result<PointSet> {
        self.check_subset(indices)?;
        PointSet::new(indices.iter().map(|&i| self.elements[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(coords: &[f64]) -> Point {
        Point::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn point_rejects_non_finite() {
        assert!(Point::new(vec![0.1, f64::NAN]).is_err());
        assert!(Point::new(vec![f64::INFINITY]).is_err());
        assert!(Point::new(vec![]).is_err());
    }

    #[test]
    fn set_canonicalizes_order_and_duplicates() {
        let a = PointSet::new(vec![pt(&[0.5, 0.1]), pt(&[0.1, 0.9]), pt(&[0.5, 0.1])]).unwrap();
        let b = PointSet::new(vec![pt(&[0.1, 0.9]), pt(&[0.5, 0.1])]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.is_canonical());
        assert_eq!(a.points()[0].coords(), &[0.1, 0.9]);
    }

    #[test]
    fn set_rejects_empty_and_mixed_dims() {
        assert!(PointSet::new(vec![]).is_err());
        let err = PointSet::new(vec![pt(&[0.1]), pt(&[0.1, 0.2])]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, found: 2 }));
    }

    #[test]
    fn ground_set_rejects_duplicates() {
        assert!(GroundSet::new(vec![pt(&[0.1, 0.2]), pt(&[0.1, 0.2])]).is_err());
        let g = GroundSet::new(vec![pt(&[0.1, 0.2]), pt(&[0.3, 0.4])]).unwrap();
        assert_eq!(g.position(&pt(&[0.3, 0.4])), Some(1));
        assert_eq!(g.position(&pt(&[0.3, 0.5])), None);
    }

    #[test]
    fn ground_set_subset_validation() {
        let g = GroundSet::new(vec![pt(&[0.0]), pt(&[0.5]), pt(&[1.0])]).unwrap();
        assert!(g.check_subset(&[0, 2]).is_ok());
        assert!(g.check_subset(&[]).is_err());
        assert!(g.check_subset(&[3]).is_err());
        assert!(g.check_subset(&[1, 1]).is_err());
        let s = g.subset(&[2, 0]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.points()[0].coords(), &[0.0]);
    }
}
