//! Lattice points, finite point sets and killing domains.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vertex of the square lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub x1: i32,
    pub x2: i32,
}

pub const ORIGIN: LatticePoint = LatticePoint { x1: 0, x2: 0 };

const STEPS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

impl LatticePoint {
    pub const fn new(x1: i32, x2: i32) -> Self {
        LatticePoint { x1, x2 }
    }

    /// The four nearest neighbours in a fixed order (+e1, -e1, +e2, -e2).
    pub fn neighbors(self) -> [LatticePoint; 4] {
        STEPS.map(|(d1, d2)| LatticePoint::new(self.x1 + d1, self.x2 + d2))
    }

    pub fn norm2(self) -> i64 {
        let (a, b) = (self.x1 as i64, self.x2 as i64);
        a * a + b * b
    }

    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn is_origin(self) -> bool {
        self == ORIGIN
    }

    /// Canonical representative of the dihedral orbit: 0 <= x2 <= x1.
    pub fn octant(self) -> LatticePoint {
        let (a, b) = (self.x1.abs(), self.x2.abs());
        if a >= b {
            LatticePoint::new(a, b)
        } else {
            LatticePoint::new(b, a)
        }
    }

    pub fn is_neighbor(self, other: LatticePoint) -> bool {
        (self.x1 - other.x1).abs() + (self.x2 - other.x2).abs() == 1
    }
}

impl std::ops::Sub for LatticePoint {
    type Output = LatticePoint;
    fn sub(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl std::ops::Add for LatticePoint {
    type Output = LatticePoint;
    fn add(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

impl std::ops::Neg for LatticePoint {
    type Output = LatticePoint;
    fn neg(self) -> LatticePoint {
        LatticePoint::new(-self.x1, -self.x2)
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1, self.x2)
    }
}

impl From<(i32, i32)> for LatticePoint {
    fn from((a, b): (i32, i32)) -> Self {
        LatticePoint::new(a, b)
    }
}

/// A finite, ordered set of lattice points.
pub type PointSet = BTreeSet<LatticePoint>;

/// Builds a point set from coordinate pairs.
pub fn point_set<I, P>(pts: I) -> PointSet
where
    I: IntoIterator<Item = P>,
    P: Into<LatticePoint>,
{
    pts.into_iter().map(Into::into).collect()
}

/// Points of `a` having at least one neighbour outside `a`.
pub fn interior_boundary(a: &PointSet) -> PointSet {
    a.iter()
        .copied()
        .filter(|p| p.neighbors().iter().any(|q| !a.contains(q)))
        .collect()
}

/// Largest Euclidean distance between two points of the set.
pub fn diameter(a: &PointSet) -> f64 {
    let mut d = 0.0f64;
    for p in a {
        for q in a {
            d = d.max((*p - *q).norm());
        }
    }
    d
}

/// Largest Euclidean norm among points of the set.
pub fn max_norm(a: &PointSet) -> f64 {
    a.iter().map(|p| p.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    EuclideanBall { radius: u32 },
    ExplicitSet,
}

const NONE: u32 = u32::MAX;

/// A finite vertex set used as a killing domain K'.
///
/// Vertices are indexed in row-major order of their bounding box; the index
/// table gives constant-time membership and neighbour lookup.
#[derive(Clone, Debug)]
pub struct Domain {
    kind: DomainKind,
    points: Vec<LatticePoint>,
    lo: LatticePoint,
    width: usize,
    height: usize,
    index: Vec<u32>,
    nbr: Vec<[u32; 4]>,
}

impl Domain {
    /// The Euclidean ball B_N = {x : |x| <= N}.
    pub fn ball(radius: u32) -> Arc<Domain> {
        let n = radius as i32;
        let r2 = (radius as i64) * (radius as i64);
        let mut pts = Vec::new();
        for x2 in -n..=n {
            for x1 in -n..=n {
                let p = LatticePoint::new(x1, x2);
                if p.norm2() <= r2 {
                    pts.push(p);
                }
            }
        }
        Arc::new(Self::build(DomainKind::EuclideanBall { radius }, pts))
    }

    /// An explicit finite vertex set.
    pub fn explicit<I, P>(pts: I) -> Result<Arc<Domain>>
    where
        I: IntoIterator<Item = P>,
        P: Into<LatticePoint>,
    {
        let set: BTreeSet<LatticePoint> = pts.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(Error::domain("domain must be nonempty"));
        }
        let mut pts: Vec<LatticePoint> = set.into_iter().collect();
        pts.sort_by_key(|p| (p.x2, p.x1));
        Ok(Arc::new(Self::build(DomainKind::ExplicitSet, pts)))
    }

    /// Parses `ball:N`.
    pub fn parse(spec: &str) -> Result<Arc<Domain>> {
        let r = spec
            .strip_prefix("ball:")
            .and_then(|s| s.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::domain(format!("expected ball:<radius>, got `{spec}`")))?;
        Ok(Domain::ball(r))
    }

    fn build(kind: DomainKind, points: Vec<LatticePoint>) -> Domain {
        let lo1 = points.iter().map(|p| p.x1).min().unwrap();
        let hi1 = points.iter().map(|p| p.x1).max().unwrap();
        let lo2 = points.iter().map(|p| p.x2).min().unwrap();
        let hi2 = points.iter().map(|p| p.x2).max().unwrap();
        let width = (hi1 - lo1 + 1) as usize;
        let height = (hi2 - lo2 + 1) as usize;
        let mut index = vec![NONE; width * height];
        let lo = LatticePoint::new(lo1, lo2);
        for (i, p) in points.iter().enumerate() {
            index[(p.x2 - lo2) as usize * width + (p.x1 - lo1) as usize] = i as u32;
        }
        let mut d = Domain {
            kind,
            points,
            lo,
            width,
            height,
            index,
            nbr: Vec::new(),
        };
        d.nbr = d
            .points
            .iter()
            .map(|p| p.neighbors().map(|q| d.raw_index(q)))
            .collect();
        d
    }

    fn raw_index(&self, p: LatticePoint) -> u32 {
        let c = p.x1 - self.lo.x1;
        let r = p.x2 - self.lo.x2;
        if c < 0 || r < 0 || c as usize >= self.width || r as usize >= self.height {
            return NONE;
        }
        self.index[r as usize * self.width + c as usize]
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> LatticePoint {
        self.points[i]
    }

    pub fn index_of(&self, p: LatticePoint) -> Option<usize> {
        match self.raw_index(p) {
            NONE => None,
            i => Some(i as usize),
        }
    }

    pub fn contains(&self, p: LatticePoint) -> bool {
        self.raw_index(p) != NONE
    }

    /// Neighbour indices in [`LatticePoint::neighbors`] order; `None` marks exterior.
    pub fn neighbor_indices(&self, i: usize) -> [Option<usize>; 4] {
        self.nbr[i].map(|j| if j == NONE { None } else { Some(j as usize) })
    }

    pub(crate) fn raw_neighbors(&self) -> &[[u32; 4]] {
        &self.nbr
    }

    /// Number of neighbours of vertex `i` lying outside the domain.
    pub fn exterior_degree(&self, i: usize) -> usize {
        self.nbr[i].iter().filter(|&&j| j == NONE).count()
    }

    pub fn contains_all(&self, a: &PointSet) -> bool {
        a.iter().all(|p| self.contains(*p))
    }

    /// Vertices with a neighbour outside the domain.
    pub fn interior_boundary(&self) -> PointSet {
        (0..self.len())
            .filter(|&i| self.exterior_degree(i) > 0)
            .map(|i| self.points[i])
            .collect()
    }

    /// Indices of the points of `a`, failing if any lies outside.
    pub fn indices_of(&self, a: &PointSet) -> Result<Vec<usize>> {
        a.iter()
            .map(|p| {
                self.index_of(*p)
                    .ok_or_else(|| Error::domain(format!("point {p} lies outside the domain")))
            })
            .collect()
    }
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

/// A function on a domain extended by a constant outside it.
#[derive(Clone, Debug)]
pub struct DomainFunction {
    pub domain: Arc<Domain>,
    pub values: Vec<f64>,
    pub exterior: f64,
}

impl DomainFunction {
    pub fn at(&self, p: LatticePoint) -> f64 {
        match self.domain.index_of(p) {
            Some(i) => self.values[i],
            None => self.exterior,
        }
    }

    pub fn at_index(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Value at neighbour slot `k` of vertex `i`.
    pub fn neighbor_value(&self, i: usize, k: usize) -> f64 {
        match self.domain.nbr[i][k] {
            NONE => self.exterior,
            j => self.values[j as usize],
        }
    }

    /// (1/4) sum over the four neighbours of vertex `i`.
    pub fn neighbor_mean(&self, i: usize) -> f64 {
        (0..4).map(|k| self.neighbor_value(i, k)).sum::<f64>() / 4.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_sizes() {
        assert_eq!(Domain::ball(0).len(), 1);
        assert_eq!(Domain::ball(1).len(), 5);
        assert_eq!(Domain::ball(2).len(), 13);
        let d = Domain::ball(8);
        for p in d.points() {
            assert!(p.norm2() <= 64);
            assert_eq!(d.point(d.index_of(*p).unwrap()), *p);
        }
        assert!(!d.contains(LatticePoint::new(6, 7)));
    }

    #[test]
    fn b1_boundary() {
        let d = Domain::ball(1);
        let o = d.index_of(ORIGIN).unwrap();
        assert_eq!(d.exterior_degree(o), 0);
        let e = d.index_of(LatticePoint::new(1, 0)).unwrap();
        assert_eq!(d.exterior_degree(e), 3);
        assert_eq!(d.interior_boundary().len(), 4);
    }

    #[test]
    fn explicit_rejects_empty() {
        let v: Vec<(i32, i32)> = vec![];
        assert!(Domain::explicit(v).is_err());
    }

    #[test]
    fn octant_is_canonical() {
        assert_eq!(LatticePoint::new(-2, 5).octant(), LatticePoint::new(5, 2));
        assert_eq!(LatticePoint::new(3, -3).octant(), LatticePoint::new(3, 3));
    }
}
