//! Finite point clouds standing in for compact sets, plus the generators used
//! to build test sets with known box dimension.

use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of points any generator or dense assembly may produce.
pub const DEFAULT_POINT_CAP: usize = 100_000;

/// A nonempty, ordered, finite sample of points in `R^n`.
///
/// Coordinates are stored row-major in one flat buffer. Diameter and minimum
/// gap are computed lazily and cached; the set is immutable after construction.
/// Serializes as `{"dim": n, "points": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PointSetDoc", into = "PointSetDoc")]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    diameter: OnceLock<f64>,
    min_gap: OnceLock<f64>,
}

impl PartialEq for PointSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coords == other.coords
    }
}

impl PointSet {
    /// Build from a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("ambient dimension must be positive"));
        }
        if coords.is_empty() {
            return Err(Error::invalid("point set must be nonempty"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "coordinate buffer of length {} is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in point {}",
                bad / dim
            )));
        }
        Ok(PointSet {
            dim,
            coords,
            diameter: OnceLock::new(),
            min_gap: OnceLock::new(),
        })
    }

    /// Build from a list of points; every point must have the same length.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("point set must be nonempty"))?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    pub fn singleton(point: &[f64]) -> Result<Self> {
        Self::from_flat(point.len(), point.to_vec())
    }

    /// `count` evenly spaced points on `[0, 1] ⊂ R^1`, endpoints included.
    pub fn unit_segment(count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::invalid("segment needs at least one point")),
            1 => Self::from_flat(1, vec![0.0]),
            _ => {
                let last = (count - 1) as f64;
                Self::from_flat(1, (0..count).map(|i| i as f64 / last).collect())
            }
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Subset by index, in the order given.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("point index {i} out of range")));
            }
            coords.extend_from_slice(self.point(i));
        }
        Self::from_flat(self.dim, coords)
    }

    /// Pad every point with zeros up to `dim` coordinates.
    pub fn embed(&self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::invalid(format!(
                "cannot embed R^{} into R^{dim}",
                self.dim
            )));
        }
        let mut coords = Vec::with_capacity(self.len() * dim);
        for p in self.points() {
            coords.extend_from_slice(p);
            coords.extend(std::iter::repeat_n(0.0, dim - self.dim));
        }
        Self::from_flat(dim, coords)
    }

    pub fn translate(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: shift.len(),
            });
        }
        let coords = self
            .coords
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        Self::from_flat(self.dim, coords)
    }

    /// Maximum pairwise Euclidean distance; 0 for a singleton.
    pub fn diameter(&self) -> f64 {
        *self.diameter.get_or_init(|| {
            if self.dim == 1 {
                let (lo, hi) = self
                    .coords
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                        (lo.min(x), hi.max(x))
                    });
                return hi - lo;
            }
            if self.dim == 2 {
                let hull = convex_hull_2d(&self.coords);
                return max_pair_distance(&hull, 2);
            }
            max_pair_distance(&self.coords, self.dim)
        })
    }

    /// Minimum pairwise distance; 0 when duplicates are present or for a singleton.
    pub fn min_gap(&self) -> f64 {
        *self.min_gap.get_or_init(|| {
            let n = self.len();
            if n < 2 {
                return 0.0;
            }
            // sweep in order of the first coordinate, pruning on |dx|
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| self.point(i)[0].total_cmp(&self.point(j)[0]));
            let mut best2 = f64::INFINITY;
            for (a, &i) in order.iter().enumerate() {
                let p = self.point(i);
                for &j in &order[a + 1..] {
                    let q = self.point(j);
                    let dx = q[0] - p[0];
                    if dx * dx >= best2 {
                        break;
                    }
                    best2 = best2.min(dist2(p, q));
                }
            }
            best2.sqrt()
        })
    }

    /// One point per row, coordinates comma-separated, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.coords.len() * 20);
        for p in self.points() {
            for (k, c) in p.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{c}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut coords = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let before = coords.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("line {}: bad number {field:?}", lineno + 1))
                })?;
                coords.push(v);
            }
            let width = coords.len() - before;
            match dim {
                None => dim = Some(width),
                Some(d) if d != width => {
                    return Err(Error::Parse(format!(
                        "line {}: expected {d} coordinates, found {width}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
        }
        let dim = dim.ok_or_else(|| Error::Parse("empty CSV point set".into()))?;
        Self::from_flat(dim, coords)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Read a `.json` file as JSON and anything else as CSV.
    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_csv(&text)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PointSetDoc {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl TryFrom<PointSetDoc> for PointSet {
    type Error = Error;

    fn try_from(doc: PointSetDoc) -> Result<Self> {
        let ps = Self::from_points(&doc.points)?;
        if ps.dim != doc.dim {
            return Err(Error::DimensionMismatch {
                expected: doc.dim,
                found: ps.dim,
            });
        }
        Ok(ps)
    }
}

impl From<PointSet> for PointSetDoc {
    fn from(ps: PointSet) -> Self {
        PointSetDoc {
            dim: ps.dim,
            points: ps.points().map(<[f64]>::to_vec).collect(),
        }
    }
}

fn max_pair_distance(coords: &[f64], dim: usize) -> f64 {
    let n = coords.len() / dim;
    let mut best = 0.0f64;
    for i in 0..n {
        let a = &coords[i * dim..(i + 1) * dim];
        for j in (i + 1)..n {
            best = best.max(dist2(a, &coords[j * dim..(j + 1) * dim]));
        }
    }
    best.sqrt()
}

/// Vertices of the convex hull of planar points (monotone chain), flattened.
/// The farthest pair of a planar set is always a pair of hull vertices.
fn convex_hull_2d(coords: &[f64]) -> Vec<f64> {
    let mut pts: Vec<[f64; 2]> = coords.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts.concat();
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull.concat()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A contracting similarity `x -> ratio * O x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMap {
    pub ratio: f64,
    pub offset: Vec<f64>,
    /// Row-major `n x n` orthogonal matrix; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthogonal: Option<Vec<f64>>,
}

impl SimilarityMap {
    pub fn scaling(ratio: f64, offset: Vec<f64>) -> Self {
        SimilarityMap {
            ratio,
            offset,
            orthogonal: None,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match &self.orthogonal {
            None => {
                for ((o, xi), b) in out.iter_mut().zip(x).zip(&self.offset) {
                    *o = self.ratio * xi + b;
                }
            }
            Some(m) => {
                let n = x.len();
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &m[i * n..(i + 1) * n];
                    let rx: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                    *o = self.ratio * rx + self.offset[i];
                }
            }
        }
    }
}

/// An iterated function system truncated at a fixed composition depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSpec {
    pub ambient_dim: usize,
    pub maps: Vec<SimilarityMap>,
    pub depth: u32,
}

impl IfsSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.ambient_dim;
        if n == 0 {
            return Err(Error::invalid("IFS ambient dimension must be positive"));
        }
        if self.maps.is_empty() {
            return Err(Error::invalid("IFS needs at least one map"));
        }
        for (k, m) in self.maps.iter().enumerate() {
            if !(m.ratio > 0.0 && m.ratio < 1.0) {
                return Err(Error::invalid(format!(
                    "map {k}: ratio {} not in (0, 1)",
                    m.ratio
                )));
            }
            if m.offset.len() != n || m.offset.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!(
                    "map {k}: offset must have {n} finite coordinates"
                )));
            }
            if let Some(o) = &m.orthogonal {
                if o.len() != n * n {
                    return Err(Error::invalid(format!(
                        "map {k}: orthogonal part must be {n}x{n}"
                    )));
                }
                for i in 0..n {
                    for j in 0..n {
                        let dot: f64 = (0..n).map(|l| o[l * n + i] * o[l * n + j]).sum();
                        let want = if i == j { 1.0 } else { 0.0 };
                        if (dot - want).abs() > 1e-10 {
                            return Err(Error::invalid(format!(
                                "map {k}: linear part is not orthogonal"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of points `generate_ifs` produces, or `None` on overflow.
    pub fn point_count(&self) -> Option<usize> {
        self.maps.len().checked_pow(self.depth)
    }
}

/// Images of the origin under every depth-fold composition of the maps.
///
/// Points are ordered lexicographically by the composition word
/// `f_{i1} ∘ f_{i2} ∘ ... ∘ f_{id}`, with `i1` most significant.
pub fn generate_ifs(spec: &IfsSpec, cap: usize) -> Result<PointSet> {
    spec.validate()?;
    let total = spec.point_count().unwrap_or(usize::MAX);
    if total > cap {
        return Err(Error::ResourceLimit {
            what: "IFS point count",
            requested: total,
            cap,
        });
    }
    let n = spec.ambient_dim;
    let mut current = vec![0.0; n];
    for _ in 0..spec.depth {
        let count = current.len() / n;
        let mut next = vec![0.0; current.len() * spec.maps.len()];
        for (k, map) in spec.maps.iter().enumerate() {
            for i in 0..count {
                let dst = (k * count + i) * n;
                map.apply(&current[i * n..(i + 1) * n], &mut next[dst..dst + n]);
            }
        }
        current = next;
    }
    PointSet::from_flat(n, current)
}

/// The two-map IFS `x -> ratio x`, `x -> ratio x + 1 - ratio` on the line.
pub fn cantor_spec(ratio: f64, depth: u32) -> Result<IfsSpec> {
    if !(ratio > 0.0 && ratio <= 0.5) {
        return Err(Error::invalid(format!(
            "Cantor ratio {ratio} not in (0, 1/2]"
        )));
    }
    Ok(IfsSpec {
        ambient_dim: 1,
        maps: vec![
            SimilarityMap::scaling(ratio, vec![0.0]),
            SimilarityMap::scaling(ratio, vec![1.0 - ratio]),
        ],
        depth,
    })
}

/// Left endpoints of the `depth`-th stage of the central Cantor set with the given ratio.
pub fn generate_cantor(ratio: f64, depth: u32) -> Result<PointSet> {
    generate_ifs(&cantor_spec(ratio, depth)?, DEFAULT_POINT_CAP)
}

/// Sierpinski triangle on the vertices (0,0), (1,0), (1/2, √3/2).
pub fn sierpinski_spec(depth: u32) -> IfsSpec {
    let h = 3f64.sqrt() / 4.0;
    IfsSpec {
        ambient_dim: 2,
        maps: vec![
            SimilarityMap::scaling(0.5, vec![0.0, 0.0]),
            SimilarityMap::scaling(0.5, vec![0.5, 0.0]),
            SimilarityMap::scaling(0.5, vec![0.25, h]),
        ],
        depth,
    }
}

/// Cartesian product; points ordered with `a` as the outer index.
pub fn product_set(a: &PointSet, b: &PointSet, cap: usize) -> Result<PointSet> {
    let total = a.len().saturating_mul(b.len());
    if total > cap {
        return Err(Error::ResourceLimit {
            what: "product point count",
            requested: total,
            cap,
        });
    }
    let dim = a.ambient_dim() + b.ambient_dim();
    let mut coords = Vec::with_capacity(total * dim);
    for p in a.points() {
        for q in b.points() {
            coords.extend_from_slice(p);
            coords.extend_from_slice(q);
        }
    }
    PointSet::from_flat(dim, coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(PointSet::from_flat(2, vec![]).is_err());
        assert!(PointSet::from_flat(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(PointSet::from_flat(1, vec![f64::NAN]).is_err());
        assert!(PointSet::from_points(&[vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn cantor_small_depths() {
        let c0 = generate_cantor(1.0 / 3.0, 0).unwrap();
        assert_eq!(c0.coords(), &[0.0]);
        let c1 = generate_cantor(1.0 / 3.0, 1).unwrap();
        assert_eq!(c1.len(), 2);
        assert_eq!(c1.point(0)[0], 0.0);
        assert!((c1.point(1)[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cantor_rejects_ratio() {
        assert!(matches!(
            generate_cantor(0.6, 3),
            Err(Error::InvalidParameter(_))
        ));
        assert!(generate_cantor(0.0, 3).is_err());
        assert!(generate_cantor(0.5, 3).is_ok());
    }

    #[test]
    fn cantor_depth_12_matches_enumeration() {
        let c = generate_cantor(1.0 / 3.0, 12).unwrap();
        assert_eq!(c.len(), 4096);
        // oracle: left endpoints are sums of 2·3^-k over chosen digits
        let mut oracle: Vec<f64> = (0u32..4096)
            .map(|bits| {
                (0..12)
                    .filter(|k| bits & (1 << (11 - k)) != 0)
                    .map(|k| 2.0 * 3f64.powi(-(k + 1)))
                    .sum()
            })
            .collect();
        oracle.sort_by(f64::total_cmp);
        for (p, o) in c.points().zip(&oracle) {
            assert!((p[0] - o).abs() < 1e-14);
        }
        let oracle_gap = oracle
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        // consecutive stage-12 left endpoints sit one interval plus one gap apart
        assert!((oracle_gap - 2.0 * 3f64.powi(-12)).abs() < 1e-15);
        assert!((c.min_gap() - oracle_gap).abs() < 1e-15);
        assert!((c.diameter() - (1.0 - 3f64.powi(-12))).abs() < 1e-12);
    }

    #[test]
    fn single_map_orbit() {
        let spec = IfsSpec {
            ambient_dim: 2,
            maps: vec![SimilarityMap::scaling(0.5, vec![1.0, 0.0])],
            depth: 5,
        };
        let ps = generate_ifs(&spec, 10).unwrap();
        assert_eq!(ps.len(), 1);
        // x_{k+1} = x_k / 2 + 1 from 0
        assert!((ps.point(0)[0] - (2.0 - 2.0 * 0.5f64.powi(5))).abs() < 1e-15);
    }

    #[test]
    fn sierpinski_inside_triangle() {
        let ps = generate_ifs(&sierpinski_spec(8), DEFAULT_POINT_CAP).unwrap();
        assert_eq!(ps.len(), 6561);
        let s3 = 3f64.sqrt();
        for p in ps.points() {
            let (x, y) = (p[0], p[1]);
            assert!(y >= -1e-12);
            assert!(y <= s3 * x + 1e-12);
            assert!(y <= s3 * (1.0 - x) + 1e-12);
        }
    }

    #[test]
    fn cantor_spec_matches_generator() {
        let spec = cantor_spec(0.25, 7).unwrap();
        assert_eq!(
            generate_ifs(&spec, DEFAULT_POINT_CAP).unwrap(),
            generate_cantor(0.25, 7).unwrap()
        );
    }

    #[test]
    fn orthogonal_part_validated() {
        let mut spec = IfsSpec {
            ambient_dim: 2,
            maps: vec![SimilarityMap {
                ratio: 0.5,
                offset: vec![0.0, 0.0],
                orthogonal: Some(vec![0.0, -1.0, 1.0, 0.0]),
            }],
            depth: 2,
        };
        assert!(spec.validate().is_ok());
        spec.maps[0].orthogonal = Some(vec![1.0, 1.0, 0.0, 1.0]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn product_basics() {
        let z = PointSet::singleton(&[0.0]).unwrap();
        let p = product_set(&z, &z, 10).unwrap();
        assert_eq!(p.ambient_dim(), 2);
        assert_eq!(p.coords(), &[0.0, 0.0]);

        let c12 = generate_cantor(1.0 / 3.0, 12).unwrap();
        assert!(matches!(
            product_set(&c12, &c12, 1_000_000),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn product_diameter() {
        let c = generate_cantor(1.0 / 3.0, 6).unwrap();
        let cc = product_set(&c, &c, DEFAULT_POINT_CAP).unwrap();
        assert_eq!(cc.len(), 4096);
        // oracle: brute-force over all pairs in the product
        let mut best = 0.0f64;
        for i in 0..cc.len() {
            for j in 0..cc.len() {
                best = best.max(dist2(cc.point(i), cc.point(j)));
            }
        }
        assert_eq!(cc.diameter(), best.sqrt());
        assert!((cc.diameter() - 2f64.sqrt() * c.diameter()).abs() < 1e-12);
    }

    #[test]
    fn planar_hull_diameter_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for case in 0..50 {
            let n = 1 + case % 40;
            let mut flat: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if case % 5 == 0 {
                // collinear with repeats
                for i in 0..n {
                    flat[2 * i + 1] = 2.0 * flat[2 * i];
                }
                flat.extend_from_slice(&[flat[0], flat[1]]);
            }
            let e = PointSet::from_flat(2, flat.clone()).unwrap();
            assert_eq!(e.diameter(), max_pair_distance(&flat, 2), "case {case}");
        }
    }

    #[test]
    fn diameter_simple() {
        assert_eq!(PointSet::singleton(&[3.0, 4.0]).unwrap().diameter(), 0.0);
        let two = PointSet::from_points(&[[0.0], [1.0]]).unwrap();
        assert_eq!(two.diameter(), 1.0);
        let tri = PointSet::from_points(&[[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]]).unwrap();
        assert_eq!(tri.diameter(), 5.0);
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let ps = generate_ifs(&sierpinski_spec(3), 100).unwrap();
        assert_eq!(PointSet::from_csv(&ps.to_csv()).unwrap(), ps);
        assert_eq!(PointSet::from_json(&ps.to_json().unwrap()).unwrap(), ps);
        assert!(PointSet::from_csv("1,2\n3\n").is_err());
        assert!(PointSet::from_csv("").is_err());
        assert!(PointSet::from_json(r#"{"dim":3,"points":[[1,2]]}"#).is_err());
    }

    #[test]
    fn csv_is_plain_decimal() {
        let ps = PointSet::from_flat(1, vec![1e-7, 2.5e10]).unwrap();
        let csv = ps.to_csv();
        assert!(!csv.contains('e'), "{csv}");
    }
}
