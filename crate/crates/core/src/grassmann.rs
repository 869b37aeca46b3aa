//! Random subspaces, orthogonal projections and tube probabilities.
//!
//! Subspaces are drawn from the rotation-invariant distribution on the
//! Grassmannian `G(n, m)` by orthonormalizing an `n x m` matrix of independent
//! standard normals. A subspace `V` is stored through an orthonormal basis `B`;
//! projected points are expressed in that basis, `Bᵀx`, and `x - B Bᵀx` is the
//! component orthogonal to `V`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::kernels::{gauss, phi_of_distance};
use crate::pointset::{norm, PointSet};

pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Trials per independently seeded chunk in Monte Carlo estimates.
pub const TUBE_CHUNK: usize = 4096;
pub const MIN_TUBE_TRIALS: usize = 1000;

/// Random stream `stream` of the generator family keyed by `seed`.
pub fn child_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// An `m`-dimensional linear subspace of `R^n`.
///
/// `basis` holds the `m` orthonormal basis vectors one after another
/// (column-major storage of the `n x m` basis matrix). In JSON it appears as
/// a list of `m` basis vectors of length `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubspaceRepr", into = "SubspaceRepr")]
pub struct Subspace {
    n: usize,
    m: usize,
    basis: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SubspaceRepr {
    n: usize,
    m: usize,
    basis: Vec<Vec<f64>>,
}

impl TryFrom<SubspaceRepr> for Subspace {
    type Error = Error;

    fn try_from(r: SubspaceRepr) -> Result<Self> {
        if r.basis.len() != r.m {
            return Err(Error::DimensionMismatch {
                expected: r.m,
                found: r.basis.len(),
            });
        }
        if let Some(col) = r.basis.iter().find(|c| c.len() != r.n) {
            return Err(Error::DimensionMismatch {
                expected: r.n,
                found: col.len(),
            });
        }
        Subspace::from_basis(r.n, r.m, r.basis.concat())
    }
}

impl From<Subspace> for SubspaceRepr {
    fn from(v: Subspace) -> Self {
        SubspaceRepr {
            n: v.n,
            m: v.m,
            basis: v.basis.chunks_exact(v.n).map(<[f64]>::to_vec).collect(),
        }
    }
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "subspace dimension m = {m} must satisfy 1 <= m <= n = {n}"
        )));
    }
    Ok(())
}

impl Subspace {
    /// Validate a column-major orthonormal basis.
    pub fn from_basis(n: usize, m: usize, basis: Vec<f64>) -> Result<Self> {
        check_dims(n, m)?;
        if basis.len() != n * m {
            return Err(Error::DimensionMismatch {
                expected: n * m,
                found: basis.len(),
            });
        }
        for a in 0..m {
            for b in 0..=a {
                let dot: f64 = basis[a * n..(a + 1) * n]
                    .iter()
                    .zip(&basis[b * n..(b + 1) * n])
                    .map(|(x, y)| x * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                if !((dot - want).abs() <= ORTHONORMAL_TOL) {
                    return Err(Error::invalid(format!(
                        "basis columns {a}, {b} have inner product {dot}, expected {want}"
                    )));
                }
            }
        }
        Ok(Subspace { n, m, basis })
    }

    /// The span of the first `m` coordinate vectors.
    pub fn coordinate(n: usize, m: usize) -> Result<Self> {
        check_dims(n, m)?;
        let mut basis = vec![0.0; n * m];
        for c in 0..m {
            basis[c * n + c] = 1.0;
        }
        Ok(Subspace { n, m, basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn basis_vector(&self, c: usize) -> &[f64] {
        &self.basis[c * self.n..(c + 1) * self.n]
    }

    fn check_vector(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Coordinates `Bᵀx` of the projection of `x` in the basis.
    pub fn coords_of(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_vector(x)?;
        Ok(self.coords_unchecked(x))
    }

    fn coords_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .chunks_exact(self.n)
            .map(|col| col.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// The component `x - B Bᵀx` of `x` orthogonal to the subspace.
    pub fn perpendicular(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_vector(x)?;
        Ok(self.perpendicular_unchecked(x))
    }

    fn perpendicular_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let coords = self.coords_unchecked(x);
        let mut out = x.to_vec();
        for (col, c) in self.basis.chunks_exact(self.n).zip(&coords) {
            for (o, b) in out.iter_mut().zip(col) {
                *o -= c * b;
            }
        }
        out
    }

    /// `|π_V x|`, clipped to `|x|` so rounding never makes the projection expand.
    pub fn projected_norm(&self, x: &[f64]) -> Result<f64> {
        self.check_vector(x)?;
        Ok(norm(&self.coords_unchecked(x)).min(norm(x)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Modified Gram-Schmidt on a column-major `n x m` matrix; `None` when a
/// column is (numerically) dependent on the earlier ones.
fn orthonormalize(n: usize, m: usize, mut a: Vec<f64>) -> Option<Vec<f64>> {
    for c in 0..m {
        let (done, rest) = a.split_at_mut(c * n);
        let col = &mut rest[..n];
        let original = norm(col);
        for prev in done.chunks_exact(n) {
            let dot: f64 = prev.iter().zip(col.iter()).map(|(x, y)| x * y).sum();
            col.iter_mut().zip(prev).for_each(|(x, p)| *x -= dot * p);
        }
        let len = norm(col);
        if !(len > 1e-8 * original && len > 0.0) {
            return None;
        }
        col.iter_mut().for_each(|x| *x /= len);
    }
    Some(a)
}

/// A subspace drawn from the invariant distribution using `rng`.
///
/// `G(n, n)` has the single element `R^n`, returned with the coordinate basis.
pub fn sample_subspace_with(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Subspace> {
    check_dims(n, m)?;
    if m == n {
        return Subspace::coordinate(n, n);
    }
    loop {
        let frame: Vec<f64> = (0..n * m).map(|_| StandardNormal.sample(rng)).collect();
        match orthonormalize(n, m, frame) {
            Some(basis) => return Ok(Subspace { n, m, basis }),
            None => log::warn!("rank-deficient Gaussian frame in G({n}, {m}); redrawing"),
        }
    }
}

/// A subspace drawn from the invariant distribution on `G(n, m)`.
///
/// A rank-deficient frame (a probability-zero event) is redrawn with the
/// next seed. For `m = n` the coordinate basis is returned.
pub fn sample_subspace(n: usize, m: usize, rng_seed: u64) -> Result<Subspace> {
    check_dims(n, m)?;
    if m == n {
        return Subspace::coordinate(n, n);
    }
    let mut seed = rng_seed;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame: Vec<f64> = (0..n * m).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(basis) = orthonormalize(n, m, frame) {
            return Ok(Subspace { n, m, basis });
        }
        log::warn!("rank-deficient Gaussian frame for seed {seed}; redrawing with seed {}", seed.wrapping_add(1));
        seed = seed.wrapping_add(1);
    }
}

/// The coordinate set `{Bᵀx_i}` in `R^m`.
pub fn project(e: &PointSet, v: &Subspace) -> Result<PointSet> {
    if e.ambient_dim() != v.n {
        return Err(Error::DimensionMismatch {
            expected: v.n,
            found: e.ambient_dim(),
        });
    }
    let coords: Vec<f64> = e.points().flat_map(|x| v.coords_unchecked(x)).collect();
    PointSet::from_flat(v.m, coords)
}

/// The measure that puts mass `mu_i · exp(-|x_i,⊥|² / 2)` at the projection of
/// `x_i`, where `x_i,⊥` is the part of `x_i` orthogonal to `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedProjection {
    pub subspace: Subspace,
    pub points: PointSet,
    pub weights: Vec<f64>,
}

impl WeightedProjection {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Indices of the projected points carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&i| self.weights[i] > 0.0)
            .collect()
    }
}

pub fn weighted_projection(
    e: &PointSet,
    mu: &DiscreteMeasure,
    v: &Subspace,
) -> Result<WeightedProjection> {
    if mu.set_size() != e.len() {
        return Err(Error::DimensionMismatch {
            expected: e.len(),
            found: mu.set_size(),
        });
    }
    let points = project(e, v)?;
    let weights = e
        .points()
        .zip(mu.weights())
        .map(|(x, w)| w * gauss(&v.perpendicular_unchecked(x), 1.0))
        .collect();
    Ok(WeightedProjection {
        subspace: v.clone(),
        points,
        weights,
    })
}

/// Monte Carlo estimate of a probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: usize,
    pub hits: usize,
}

/// Probability that a random `V` in `G(n, m)` has `|π_V x| <= r`.
///
/// Trials are split into chunks of [`TUBE_CHUNK`]; chunk `k` draws from
/// stream `k` of `seed`, so the estimate does not depend on the thread count.
pub fn tube_probability(
    x: &[f64],
    m: usize,
    r: f64,
    trials: usize,
    rng_seed: u64,
) -> Result<TubeEstimate> {
    let n = x.len();
    check_dims(n, m)?;
    if !(norm(x) > 0.0) {
        return Err(Error::invalid("tube probability needs x != 0"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("radius r = {r} must be finite and > 0")));
    }
    if trials < MIN_TUBE_TRIALS {
        return Err(Error::invalid(format!(
            "need at least {MIN_TUBE_TRIALS} trials, got {trials}"
        )));
    }
    let chunks = trials.div_ceil(TUBE_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = child_rng(rng_seed, k as u64);
            let count = TUBE_CHUNK.min(trials - k * TUBE_CHUNK);
            (0..count)
                .filter(|_| {
                    let v = sample_subspace_with(n, m, &mut rng).expect("dimensions checked");
                    v.projected_norm(x).expect("dimensions checked") <= r
                })
                .count()
        })
        .sum();
    let p = hits as f64 / trials as f64;
    Ok(TubeEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
        hits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeRow {
    /// `|x| / r`
    pub ratio: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub phi: f64,
    /// `estimate / phi`
    pub ratio_to_phi: f64,
}

/// Empirical comparability constants between tube probabilities and `φ_r^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<TubeRow>,
    /// Smallest observed `estimate / phi` (empirical lower constant).
    pub lower: f64,
    /// Largest observed `estimate / phi` (empirical upper constant).
    pub upper: f64,
    pub spread: f64,
    pub floor: f64,
    /// True when `lower` falls below `floor`.
    pub flagged: bool,
}

impl TubeReport {
    pub fn csv_header() -> &'static str {
        "ratio,estimate,stderr,phi,ratio_to_phi"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.ratio, row.estimate, row.stderr, row.phi, row.ratio_to_phi
            ));
        }
        out
    }
}

/// Tube probability over `ratio_grid` values of `|x| / r` (with `r = 1` and
/// `x` along the first axis), each compared with `φ_r^m(x)`. Grid point `k`
/// uses child stream `k` of `seed` as its seed.
pub fn verify_tube_comparability(
    n: usize,
    m: usize,
    ratio_grid: &[f64],
    trials: usize,
    seed: u64,
    floor: f64,
) -> Result<TubeReport> {
    check_dims(n, m)?;
    if ratio_grid.is_empty() || ratio_grid.iter().any(|t| !(1.0..=1e3).contains(t)) {
        return Err(Error::invalid("ratio grid must be nonempty with values in [1, 1000]"));
    }
    let mut rows = Vec::with_capacity(ratio_grid.len());
    for (k, &ratio) in ratio_grid.iter().enumerate() {
        let mut x = vec![0.0; n];
        x[0] = ratio;
        let est = tube_probability(&x, m, 1.0, trials, derive_seed(seed, k as u64))?;
        let phi = phi_of_distance(m as f64, 1.0, ratio);
        rows.push(TubeRow {
            ratio,
            estimate: est.estimate,
            stderr: est.stderr,
            phi,
            ratio_to_phi: est.estimate / phi,
        });
    }
    let lower = rows.iter().map(|r| r.ratio_to_phi).fold(f64::INFINITY, f64::min);
    let upper = rows.iter().map(|r| r.ratio_to_phi).fold(0.0, f64::max);
    Ok(TubeReport {
        n,
        m,
        trials,
        seed,
        rows,
        lower,
        upper,
        spread: upper / lower,
        floor,
        flagged: lower < floor,
    })
}

/// A 64-bit seed derived from `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    child_rng(seed, stream).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::{dist2, generate_cantor, product_set};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn full_dimension_projection_is_identity() {
        let e = PointSet::from_points(&[[0.1, 0.2, 0.3], [1.0, -1.0, 2.0], [0.0, 0.0, 0.0]]).unwrap();
        for seed in 0..3 {
            let v = sample_subspace(3, 3, seed).unwrap();
            assert_eq!(project(&e, &v).unwrap(), e);
        }
        // any orthonormal basis of R^3 preserves all distances
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let v = Subspace::from_basis(3, 3, vec![c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let p = project(&e, &v).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let a = dist2(e.point(i), e.point(j));
                let b = dist2(p.point(i), p.point(j));
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_bases_are_orthonormal() {
        for seed in 0..20 {
            let v = sample_subspace(5, 3, seed).unwrap();
            let again = Subspace::from_basis(5, 3, v.basis.clone());
            assert!(again.is_ok());
        }
        assert!(sample_subspace(3, 0, 1).is_err());
        assert!(sample_subspace(3, 4, 1).is_err());
    }

    #[test]
    fn mean_squared_projection_is_one_third() {
        // rotation invariance: E|π_V e1|² = m / n
        let trials = 100_000;
        let mut rng = child_rng(5, 0);
        let vals: Vec<f64> = (0..trials)
            .map(|_| {
                let v = sample_subspace_with(3, 1, &mut rng).unwrap();
                v.projected_norm(&[1.0, 0.0, 0.0]).unwrap().powi(2)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let t = a[i].min(b[j]);
            while i < a.len() && a[i] <= t {
                i += 1;
            }
            while j < b.len() && b[j] <= t {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn projection_law_is_rotation_invariant() {
        let samples = 10_000;
        let e1 = [1.0, 0.0, 0.0];
        // R e1 for a rotation R taking e1 to this unit vector
        let (c, s) = (1f64.cos(), 1f64.sin());
        let re1 = [c * 0.6, s * 0.6, 0.8];
        let mut rng_a = child_rng(21, 0);
        let mut rng_b = child_rng(21, 1);
        let a: Vec<f64> = (0..samples)
            .map(|_| sample_subspace_with(3, 2, &mut rng_a).unwrap().projected_norm(&e1).unwrap())
            .collect();
        let b: Vec<f64> = (0..samples)
            .map(|_| sample_subspace_with(3, 2, &mut rng_b).unwrap().projected_norm(&re1).unwrap())
            .collect();
        let d = ks_statistic(a, b);
        let critical = 1.628 * (2.0 / samples as f64).sqrt();
        assert!(d < critical, "KS {d} >= {critical}");
    }

    #[test]
    fn cantor_square_projection_does_not_expand() {
        let c = generate_cantor(1.0 / 3.0, 8).unwrap();
        let cc = product_set(&c, &c, 100_000).unwrap();
        for seed in 0..5 {
            let v = sample_subspace(2, 1, seed).unwrap();
            assert!(project(&cc, &v).unwrap().diameter() <= cc.diameter());
        }
    }

    #[test]
    fn subset_of_subspace_keeps_distances_and_mass() {
        let v = sample_subspace(4, 2, 3).unwrap();
        let (b0, b1) = (v.basis_vector(0).to_vec(), v.basis_vector(1).to_vec());
        let pts: Vec<Vec<f64>> = [(1.0, 0.5), (-0.3, 2.0), (0.0, 0.0)]
            .iter()
            .map(|(a, b)| b0.iter().zip(&b1).map(|(x, y)| a * x + b * y).collect())
            .collect();
        let e = PointSet::from_points(&pts).unwrap();
        let p = project(&e, &v).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((dist2(e.point(i), e.point(j)) - dist2(p.point(i), p.point(j))).abs() < 1e-12);
            }
        }
        let mu = DiscreteMeasure::new(vec![0.2, 0.3, 0.5]).unwrap();
        let wp = weighted_projection(&e, &mu, &v).unwrap();
        for (w, m) in wp.weights.iter().zip(mu.weights()) {
            assert!((w - m).abs() < 1e-12);
        }
        assert!((wp.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_distance_from_subspace_weighs_exp_minus_half() {
        let v = Subspace::coordinate(3, 2).unwrap();
        let e = PointSet::singleton(&[0.4, -0.2, 1.0]).unwrap();
        let wp = weighted_projection(&e, &DiscreteMeasure::point_mass(1, 0).unwrap(), &v).unwrap();
        assert!((wp.total_mass() - (-0.5f64).exp()).abs() < 1e-15);
        let bad = DiscreteMeasure::uniform(2).unwrap();
        assert!(weighted_projection(&e, &bad, &v).is_err());
    }

    #[test]
    fn tube_inside_radius_is_certain() {
        let est = tube_probability(&[0.6, 0.8], 1, 1.0, 2000, 1).unwrap();
        assert_eq!(est.estimate, 1.0);
        let est = tube_probability(&[0.3, 0.4, 0.0], 2, 0.5, 2000, 1).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert!(tube_probability(&[0.0, 0.0], 1, 1.0, 2000, 1).is_err());
        assert!(tube_probability(&[1.0, 0.0], 1, 1.0, 10, 1).is_err());
    }

    #[test]
    fn tube_matches_circle_of_lines() {
        let est = tube_probability(&[1.0, 0.0], 1, 0.1, 100_000, 9).unwrap();
        let exact = 2.0 / PI * 0.1f64.asin();
        assert!((est.estimate - exact).abs() < 3.0 * est.stderr, "{est:?} vs {exact}");
    }

    #[test]
    fn tube_matches_sphere_band() {
        // |<x, u>| <= r for u uniform on the sphere has probability r
        let est = tube_probability(&[0.0, 1.0, 0.0], 1, 0.1, 100_000, 4).unwrap();
        assert!((est.estimate - 0.1).abs() < 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn tube_is_thread_count_independent() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = pool.install(|| tube_probability(&[1.0, 2.0, 0.5], 2, 0.7, 20_000, 77).unwrap());
        let b = tube_probability(&[1.0, 2.0, 0.5], 2, 0.7, 20_000, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comparability_report_at_ratio_one() {
        let rep = verify_tube_comparability(2, 1, &[1.0, 1000.0], 20_000, 3, 0.1).unwrap();
        assert_eq!(rep.rows[0].ratio_to_phi, 1.0);
        assert!(verify_tube_comparability(2, 1, &[0.5], 2000, 3, 0.1).is_err());
    }

    #[test]
    fn subspace_json_roundtrip() {
        let v = sample_subspace(4, 2, 8).unwrap();
        assert_eq!(Subspace::from_json(&v.to_json().unwrap()).unwrap(), v);
        let skewed = r#"{"n":2,"m":1,"basis":[[1.0,1.0]]}"#;
        assert!(Subspace::from_json(skewed).is_err());
    }

    proptest! {
        #[test]
        fn pythagoras_and_non_expansion(
            seed in any::<u64>(),
            (n, m) in (2usize..6).prop_flat_map(|n| (Just(n), 1..=n)),
            x in prop::collection::vec(-10.0f64..10.0, 6),
            y in prop::collection::vec(-10.0f64..10.0, 6),
        ) {
            let v = sample_subspace(n, m, seed).unwrap();
            let (x, y) = (&x[..n], &y[..n]);
            let px = v.coords_of(x).unwrap();
            let perp = v.perpendicular(x).unwrap();
            let lhs = norm(x).powi(2);
            let rhs = norm(&px).powi(2) + norm(&perp).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1.0));
            let py = v.coords_of(y).unwrap();
            prop_assert!(dist2(&px, &py) <= dist2(x, y) * (1.0 + 1e-12) + 1e-24);
            // kernel domination under projection
            let d = dist2(x, y).sqrt();
            let pd = dist2(&px, &py).sqrt();
            prop_assert!(phi_of_distance(m as f64, 0.5, pd) >= phi_of_distance(m as f64, 0.5, d) * (1.0 - 1e-12));
        }

        #[test]
        fn weighted_mass_never_exceeds_one(
            seed in any::<u64>(),
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..20),
            raw in prop::collection::vec(0.01f64..1.0, 20),
        ) {
            let e = PointSet::from_points(&pts).unwrap();
            let w: Vec<f64> = raw[..e.len()].to_vec();
            let total: f64 = w.iter().sum();
            let mu = DiscreteMeasure::new(w.iter().map(|x| x / total).collect()).unwrap();
            let v = sample_subspace(3, 1, seed).unwrap();
            let wp = weighted_projection(&e, &mu, &v).unwrap();
            prop_assert!(wp.total_mass() <= 1.0 + 1e-12);
            prop_assert_eq!(wp.points.len(), e.len());
        }
    }
}
