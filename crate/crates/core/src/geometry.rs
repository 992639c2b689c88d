//! Cube partition of R^d, neighbour families and halos.
//!
//! Cubes are `Q_k = [-g/2, g/2)^d + g k` with edge `g = delta / sqrt(d)`, so
//! every cube has diameter `delta`. Membership is lower-closed/upper-open:
//! a point on an upper face belongs to the next cube.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Relative slack on squared-distance comparisons against `R^2`. Errs
/// towards a larger neighbour set, which is always safe.
const RANGE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PartitionSpec {
    d: usize,
    delta: f64,
    range: f64,
}

impl PartitionSpec {
    pub fn new(d: usize, delta: f64, range: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::param("delta", format!("must be finite and positive, got {delta}")));
        }
        if !(range.is_finite() && range > f64::EPSILON) {
            return Err(Error::param("R", format!("must be finite and above machine epsilon, got {range}")));
        }
        Ok(PartitionSpec { d, delta, range })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Interaction range `R`.
    pub fn range(&self) -> f64 {
        self.range
    }

    /// Cube edge `g = delta / sqrt(d)`.
    pub fn edge(&self) -> f64 {
        self.delta / (self.d as f64).sqrt()
    }

    pub fn cube_volume(&self) -> f64 {
        self.edge().powi(self.d as i32)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(x.to_vec()));
        }
        Ok(())
    }

    /// Index of the cube containing `x`.
    pub fn cube_index(&self, x: &[f64]) -> Result<CubeIndex> {
        self.check_point(x)?;
        Ok(self.cube_index_unchecked(x))
    }

    pub(crate) fn cube_index_unchecked(&self, x: &[f64]) -> CubeIndex {
        let g = self.edge();
        CubeIndex(
            x.iter()
                .map(|&xi| {
                    let mut k = (xi / g + 0.5).floor();
                    // Settle rounding at faces against the bounds used everywhere else.
                    while xi < g * (k - 0.5) {
                        k -= 1.0;
                    }
                    while xi >= g * (k + 0.5) {
                        k += 1.0;
                    }
                    k as i64
                })
                .collect(),
        )
    }

    /// Lower corner (inclusive) and upper corner (exclusive) of `Q_k`.
    pub fn cube_bounds(&self, k: &CubeIndex) -> (Vec<f64>, Vec<f64>) {
        let g = self.edge();
        let lower = k.iter().map(|&ki| g * (ki as f64 - 0.5)).collect();
        let upper = k.iter().map(|&ki| g * (ki as f64 + 0.5)).collect();
        (lower, upper)
    }

    pub fn cube_center(&self, k: &CubeIndex) -> Vec<f64> {
        let g = self.edge();
        k.iter().map(|&ki| g * ki as f64).collect()
    }

    pub fn cube_contains(&self, k: &CubeIndex, x: &[f64]) -> bool {
        let g = self.edge();
        k.iter()
            .zip(x)
            .all(|(&ki, &xi)| g * (ki as f64 - 0.5) <= xi && xi < g * (ki as f64 + 0.5))
    }

    /// Squared minimum distance between the closed hulls of `Q_k` and `Q_j`.
    pub fn gap_squared(&self, k: &CubeIndex, j: &CubeIndex) -> f64 {
        offset_gap_steps(k.iter().zip(j.iter()).map(|(a, b)| b - a)) as f64 * self.edge().powi(2)
    }

    /// Whether some pair of points of `Q_k` and `Q_j` is within distance `R`.
    pub fn within_range(&self, k: &CubeIndex, j: &CubeIndex) -> bool {
        self.gap_squared(k, j) <= self.range * self.range * (1.0 + RANGE_SLACK)
    }

    /// Offsets `j - k` of all neighbour cubes (the zero offset excluded),
    /// in lexicographic order.
    pub fn neighbor_offsets(&self) -> Vec<CubeIndex> {
        let g = self.edge();
        let reach = (self.range / g).floor() as i64 + 1;
        let limit = self.range * self.range * (1.0 + RANGE_SLACK) / (g * g);
        let mut out = Vec::new();
        let mut cur: SmallVec<[i64; 4]> = SmallVec::from_elem(-reach, self.d);
        loop {
            if cur.iter().any(|&c| c != 0) && (offset_gap_steps(cur.iter().copied()) as f64) <= limit {
                out.push(CubeIndex(cur.clone()));
            }
            // odometer increment
            let mut axis = self.d;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                if cur[axis] < reach {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = -reach;
            }
        }
    }

    /// Neighbour family of `Q_k`: every `j != k` whose cube comes within `R`
    /// of `Q_k`. Contains the potential-dependent family for any potential of
    /// range `R`.
    pub fn neighbor_cubes(&self, k: &CubeIndex) -> Region {
        self.neighbor_offsets().iter().map(|o| k.offset(o)).collect()
    }

    /// `m = v_d d^{d/2} ceil(R/delta + 1)^d`, an upper bound on the size of
    /// every neighbour family.
    pub fn interaction_parameter(&self) -> f64 {
        let d = self.d as i32;
        let bracket = (self.range / self.delta + 1.0).ceil();
        let d_pow = if self.d.is_multiple_of(2) {
            (self.d as f64).powi(d / 2)
        } else {
            (self.d as f64).powi(d / 2) * (self.d as f64).sqrt()
        };
        unit_ball_volume(self.d) * d_pow * bracket.powi(d)
    }

    /// Cubes outside `region` that lie within range of some cube of `region`.
    pub fn halo(&self, region: &Region) -> Region {
        let offsets = self.neighbor_offsets();
        let mut out = BTreeSet::new();
        for k in region.iter() {
            for o in &offsets {
                let j = k.offset(o);
                if !region.contains(&j) {
                    out.insert(j);
                }
            }
        }
        Region(out)
    }

    /// `region` grown by `rings` successive halos.
    pub fn grow(&self, region: &Region, rings: usize) -> Region {
        let mut cur = region.clone();
        for _ in 0..rings {
            let h = self.halo(&cur);
            cur = cur.union(&h);
        }
        cur
    }

    pub fn volume(&self, region: &Region) -> f64 {
        region.len() as f64 * self.cube_volume()
    }
}

/// Volume of the unit ball in R^d, via `v_d = 2 pi / d * v_{d-2}`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let mut v = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// `sum_i max(0, |o_i| - 1)^2`: squared hull gap in units of `g^2`.
fn offset_gap_steps(offset: impl Iterator<Item = i64>) -> i64 {
    offset
        .map(|o| {
            let s = (o.abs() - 1).max(0);
            s * s
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CubeIndex(pub SmallVec<[i64; 4]>);

impl CubeIndex {
    pub fn new(k: &[i64]) -> Self {
        CubeIndex(SmallVec::from_slice(k))
    }

    pub fn origin(d: usize) -> Self {
        CubeIndex(SmallVec::from_elem(0, d))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &i64> {
        self.0.iter()
    }

    pub fn offset(&self, by: &CubeIndex) -> CubeIndex {
        CubeIndex(self.0.iter().zip(by.0.iter()).map(|(a, b)| a + b).collect())
    }

    /// Euclidean norm of the integer vector.
    pub fn norm(&self) -> f64 {
        (self.0.iter().map(|&k| (k * k) as f64).sum::<f64>()).sqrt()
    }
}

impl fmt::Display for CubeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// A finite union of partition cubes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region(BTreeSet<CubeIndex>);

impl Region {
    pub fn empty() -> Self {
        Region(BTreeSet::new())
    }

    pub fn single(k: CubeIndex) -> Self {
        Region(BTreeSet::from([k]))
    }

    /// Axis-aligned block of cubes `lo..=hi` in every coordinate.
    pub fn block(lo: &[i64], hi: &[i64]) -> Self {
        let mut out = BTreeSet::new();
        let d = lo.len();
        let mut cur: Vec<i64> = lo.to_vec();
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return Region::empty();
        }
        loop {
            out.insert(CubeIndex::new(&cur));
            let mut axis = d;
            loop {
                if axis == 0 {
                    return Region(out);
                }
                axis -= 1;
                if cur[axis] < hi[axis] {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = lo[axis];
            }
        }
    }

    /// Consecutive cubes `lo..=hi` on the line (d = 1).
    pub fn interval(lo: i64, hi: i64) -> Self {
        Region::block(&[lo], &[hi])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, k: &CubeIndex) -> bool {
        self.0.contains(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CubeIndex> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn union(&self, other: &Region) -> Region {
        Region(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region(self.0.difference(&other.0).cloned().collect())
    }

    /// Number of cubes of `self` missing from `other`.
    pub fn missing_from(&self, other: &Region) -> usize {
        self.0.difference(&other.0).count()
    }
}

impl FromIterator<CubeIndex> for Region {
    fn from_iter<I: IntoIterator<Item = CubeIndex>>(iter: I) -> Self {
        Region(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Region {
    type Item = &'a CubeIndex;
    type IntoIter = std::collections::btree_set::Iter<'a, CubeIndex>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(delta: f64, range: f64) -> PartitionSpec {
        PartitionSpec::new(1, delta, range).unwrap()
    }

    fn ks(v: &[i64]) -> Region {
        v.iter().map(|&k| CubeIndex::new(&[k])).collect()
    }

    #[test]
    fn cube_index_half_open_convention() {
        let s = line(1.0, 1.0);
        assert_eq!(s.cube_index(&[0.49]).unwrap(), CubeIndex::new(&[0]));
        assert_eq!(s.cube_index(&[0.5]).unwrap(), CubeIndex::new(&[1]));
        assert_eq!(s.cube_index(&[-0.5]).unwrap(), CubeIndex::new(&[0]));
    }

    #[test]
    fn cube_index_rejects_non_finite() {
        let s = line(1.0, 1.0);
        assert!(matches!(s.cube_index(&[f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(s.cube_index(&[f64::INFINITY]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn edge_gives_diameter_delta() {
        for d in 1..=4 {
            let s = PartitionSpec::new(d, 0.7, 1.0).unwrap();
            assert!((s.edge() * (d as f64).sqrt() - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn tiny_range_rejected() {
        assert!(PartitionSpec::new(1, 1.0, 1e-17).is_err());
        assert!(PartitionSpec::new(0, 1.0, 1.0).is_err());
        assert!(PartitionSpec::new(1, -1.0, 1.0).is_err());
    }

    #[test]
    fn neighbor_examples() {
        let s = line(1.0, 1.0);
        assert_eq!(s.neighbor_cubes(&CubeIndex::new(&[0])), ks(&[-2, -1, 1, 2]));
        let s = line(1.0, 0.5);
        assert_eq!(s.neighbor_cubes(&CubeIndex::new(&[0])), ks(&[-1, 1]));
    }

    #[test]
    fn interaction_parameter_examples() {
        let s = line(1.0, 1.0);
        assert_eq!(s.interaction_parameter(), 4.0);
        let s = PartitionSpec::new(2, 1.0, 1.0).unwrap();
        assert!((s.interaction_parameter() - 8.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn halo_example() {
        let s = line(1.0, 1.0);
        let h = s.halo(&ks(&[0]));
        assert_eq!(h, ks(&[-2, -1, 1, 2]));
    }

    #[test]
    fn halo_small_range_is_adjacent_cubes() {
        let s = PartitionSpec::new(2, 1.0, 1e-9).unwrap();
        let h = s.halo(&Region::single(CubeIndex::origin(2)));
        assert_eq!(h, Region::block(&[-1, -1], &[1, 1]).difference(&Region::single(CubeIndex::origin(2))));
    }

    #[test]
    fn grow_rings() {
        let s = line(1.0, 0.5);
        assert_eq!(s.grow(&ks(&[0]), 2), Region::interval(-2, 2));
    }

    #[test]
    fn block_enumerates() {
        assert_eq!(Region::block(&[0, 0], &[1, 2]).len(), 6);
        assert!(Region::block(&[1], &[0]).is_empty());
    }
}
