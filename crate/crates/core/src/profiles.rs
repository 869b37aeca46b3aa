//! Scaling-exponent regression and capacity dimension profiles.
//!
//! A dimension profile is the growth exponent of `C_r^s(E)` as `r -> 0`; the
//! box dimension is the growth exponent of `N_r(E)`. Both are estimated from a
//! finite geometric grid of scales by least squares on `(-ln r, ln value)`.
//! The lower and upper limits are approximated by the smallest and largest
//! slope over rolling windows of consecutive grid points.

use serde::{Deserialize, Serialize};

use crate::boxcount::{mesh_count, mesh_representatives};
use crate::capacity::{check_r_grid, solve_equilibrium, SolverOptions};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::pointset::PointSet;

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_GRID_RATIO: f64 = 0.5;
pub const DEFAULT_GAP_FACTOR: f64 = 5.0;
pub const DEFAULT_DENSE_LIMIT: usize = 4096;
pub const DEFAULT_COARSEN_FACTOR: f64 = 0.5;
pub const DEFAULT_INEQUALITY_TOL: f64 = 0.05;

/// Result of a log-log regression over a grid of scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `-ln r` for each grid point.
    pub xs: Vec<f64>,
    /// `ln value` for each grid point.
    pub ys: Vec<f64>,
    pub slope_ols: f64,
    pub slope_lower: f64,
    pub slope_upper: f64,
    pub window: usize,
    pub stderr: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let res = y - my - slope * (x - mx);
            res * res
        })
        .sum();
    let stderr = if xs.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, stderr)
}

/// Fit `ln value` against `-ln r`.
///
/// `slope_lower`/`slope_upper` are the extreme OLS slopes over all windows of
/// `window` consecutive points, widened if necessary to contain `slope_ols`.
pub fn fit_scaling(curve: &[(f64, f64)], window: usize) -> Result<ScalingFit> {
    if window < 3 {
        return Err(Error::invalid(format!("window {window} must be at least 3")));
    }
    if curve.len() < 4 {
        return Err(Error::invalid(format!(
            "scaling fit needs at least 4 grid points, got {}",
            curve.len()
        )));
    }
    if curve.len() < window {
        return Err(Error::invalid(format!(
            "scaling fit has {} grid points, fewer than the window {window}",
            curve.len()
        )));
    }
    if curve.iter().any(|(r, v)| !(*r > 0.0) || !(*v > 0.0)) {
        return Err(Error::invalid("scales and values must be positive"));
    }
    let xs: Vec<f64> = curve.iter().map(|(r, _)| -r.ln()).collect();
    let ys: Vec<f64> = curve.iter().map(|(_, v)| v.ln()).collect();
    let (slope_ols, stderr) = ols(&xs, &ys);
    let mut lower = slope_ols;
    let mut upper = slope_ols;
    for start in 0..=(xs.len() - window) {
        let (s, _) = ols(&xs[start..start + window], &ys[start..start + window]);
        lower = lower.min(s);
        upper = upper.max(s);
    }
    if !(lower.is_finite() && upper.is_finite() && stderr.is_finite()) {
        return Err(Error::Numerical {
            message: "non-finite regression slope (repeated scales?)".into(),
            residual: stderr,
        });
    }
    Ok(ScalingFit {
        xs,
        ys,
        slope_ols,
        slope_lower: lower,
        slope_upper: upper,
        window,
        stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    pub solver: SolverOptions,
    pub window: usize,
    pub grid_ratio: f64,
    /// Smallest admissible scale as a multiple of the sample's minimum gap.
    pub gap_factor: f64,
    /// Sets larger than this are reduced to a mesh net before each solve.
    pub dense_limit: usize,
    /// Net cell diameter as a fraction of `r`; must be at most 1.
    pub coarsen_factor: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            solver: SolverOptions {
                max_iter: 1_000_000,
                ..SolverOptions::default()
            },
            window: DEFAULT_WINDOW,
            grid_ratio: DEFAULT_GRID_RATIO,
            gap_factor: DEFAULT_GAP_FACTOR,
            dense_limit: DEFAULT_DENSE_LIMIT,
            coarsen_factor: DEFAULT_COARSEN_FACTOR,
        }
    }
}

/// The sample a capacity at scale `r` is computed on.
///
/// Sets within the dense limit are used as is. Larger sets are replaced by one
/// representative per occupied mesh cube of diameter `coarsen_factor * r`;
/// points sharing a cube are within distance `r`, where the kernel is
/// identically 1, so the net only perturbs kernel values between distinct cubes.
pub fn working_set(e: &PointSet, r: f64, opts: &ProfileOptions) -> Result<PointSet> {
    if e.len() <= opts.dense_limit {
        return Ok(e.clone());
    }
    if !(opts.coarsen_factor > 0.0 && opts.coarsen_factor <= 1.0) {
        return Err(Error::invalid(format!(
            "coarsen factor {} not in (0, 1]",
            opts.coarsen_factor
        )));
    }
    let net = mesh_representatives(e, opts.coarsen_factor * r)?;
    if net.len() > opts.dense_limit {
        return Err(Error::ResourceLimit {
            what: "mesh net points",
            requested: net.len(),
            cap: opts.dense_limit,
        });
    }
    Ok(net)
}

/// Geometric grid `diam/2, diam/2 * ratio, ...` down to the gap floor.
///
/// For sets above the dense limit the grid also stops before the mesh net
/// would exceed that limit. A singleton has no intrinsic scale; it gets
/// `2^-1 ... 2^-8`.
pub fn default_r_grid(e: &PointSet, opts: &ProfileOptions) -> Result<Vec<f64>> {
    if !(opts.grid_ratio > 0.0 && opts.grid_ratio < 1.0) {
        return Err(Error::invalid(format!(
            "grid ratio {} not in (0, 1)",
            opts.grid_ratio
        )));
    }
    let diam = e.diameter();
    if diam == 0.0 {
        return Ok((1..=8).map(|k| 0.5f64.powi(k)).collect());
    }
    let floor = opts.gap_factor * e.min_gap();
    let mut grid = Vec::new();
    let mut r = diam / 2.0;
    while r >= floor {
        if e.len() > opts.dense_limit
            && mesh_count(e, opts.coarsen_factor * r)?.count > opts.dense_limit
        {
            break;
        }
        grid.push(r);
        r *= opts.grid_ratio;
    }
    Ok(grid)
}

fn check_floor(e: &PointSet, r_grid: &[f64], opts: &ProfileOptions) -> Result<()> {
    check_r_grid(r_grid)?;
    let floor = opts.gap_factor * e.min_gap();
    let smallest = *r_grid.last().expect("grid checked nonempty");
    if smallest < floor {
        return Err(Error::invalid(format!(
            "smallest scale {smallest} is below {} x minimum gap = {floor}",
            opts.gap_factor
        )));
    }
    Ok(())
}

/// One point of a capacity curve as used for profile estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub r: f64,
    pub capacity: f64,
    /// Points in the (possibly coarsened) sample actually solved on.
    pub working_points: usize,
    pub support_size: usize,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Certified capacities `C_r^s` along the grid.
///
/// A solve that does not certify is an error: a profile built on an
/// uncertified capacity is not meaningful.
pub fn profile_points(
    e: &PointSet,
    s: f64,
    r_grid: &[f64],
    opts: &ProfileOptions,
) -> Result<Vec<ProfilePoint>> {
    check_floor(e, r_grid, opts)?;
    r_grid
        .iter()
        .map(|&r| {
            let at = |err: Error| Error::AtScale {
                r,
                source: Box::new(err),
            };
            let work = working_set(e, r, opts).map_err(at)?;
            let spec = KernelSpec::phi(s, r).map_err(at)?;
            let res = solve_equilibrium(&work, &spec, &opts.solver).map_err(at)?;
            if !res.converged {
                return Err(at(Error::Numerical {
                    message: format!(
                        "equilibrium not certified after {} iterations",
                        res.iterations
                    ),
                    residual: res.kkt_residual,
                }));
            }
            Ok(ProfilePoint {
                r,
                capacity: res.capacity,
                working_points: work.len(),
                support_size: res.support_size(),
                kkt_residual: res.kkt_residual,
                iterations: res.iterations,
            })
        })
        .collect()
}

/// Fit of `ln C_r^s(E)` against `-ln r`.
pub fn estimate_profile(
    e: &PointSet,
    s: f64,
    r_grid: &[f64],
    opts: &ProfileOptions,
) -> Result<ScalingFit> {
    let pts = profile_points(e, s, r_grid, opts)?;
    let curve: Vec<(f64, f64)> = pts.iter().map(|p| (p.r, p.capacity)).collect();
    fit_scaling(&curve, opts.window)
}

/// Fit of `ln N_r(E)` against `-ln r` with mesh counts.
pub fn estimate_box_dimension(e: &PointSet, r_grid: &[f64], window: usize) -> Result<ScalingFit> {
    let counts = crate::boxcount::count_curve(e, r_grid)?;
    let curve: Vec<(f64, f64)> = counts.iter().map(|c| (c.r, c.count as f64)).collect();
    fit_scaling(&curve, window)
}

/// Profile estimates over a grid of exponents, all on the same scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub set_id: String,
    pub ambient_dim: usize,
    pub s_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub estimates: Vec<ScalingFit>,
}

impl ProfileCurve {
    /// Assemble from precomputed fits; `s_grid` must be strictly increasing.
    pub fn new(
        set_id: impl Into<String>,
        ambient_dim: usize,
        s_grid: Vec<f64>,
        r_grid: Vec<f64>,
        estimates: Vec<ScalingFit>,
    ) -> Result<Self> {
        if s_grid.is_empty() || s_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("s-grid must be nonempty with finite values > 0"));
        }
        if s_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("s-grid must be strictly increasing"));
        }
        if estimates.len() != s_grid.len() {
            return Err(Error::DimensionMismatch {
                expected: s_grid.len(),
                found: estimates.len(),
            });
        }
        Ok(ProfileCurve {
            set_id: set_id.into(),
            ambient_dim,
            s_grid,
            r_grid,
            estimates,
        })
    }

    pub fn values(&self, variant: SlopeVariant) -> Vec<f64> {
        self.estimates.iter().map(|f| variant.pick(f)).collect()
    }

    pub fn csv_header() -> &'static str {
        "s,slope_lower,slope_ols,slope_upper,stderr"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for (s, f) in self.s_grid.iter().zip(&self.estimates) {
            out.push_str(&format!(
                "{s},{},{},{},{}\n",
                f.slope_lower, f.slope_ols, f.slope_upper, f.stderr
            ));
        }
        out
    }
}

/// `estimate_profile` for every exponent in `s_grid`.
pub fn profile_curve(
    e: &PointSet,
    set_id: &str,
    s_grid: &[f64],
    r_grid: &[f64],
    opts: &ProfileOptions,
) -> Result<ProfileCurve> {
    let mut estimates = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        estimates.push(estimate_profile(e, s, r_grid, opts)?);
    }
    ProfileCurve::new(
        set_id,
        e.ambient_dim(),
        s_grid.to_vec(),
        r_grid.to_vec(),
        estimates,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SlopeVariant {
    Lower,
    #[default]
    Ols,
    Upper,
}

impl SlopeVariant {
    pub fn pick(self, f: &ScalingFit) -> f64 {
        match self {
            SlopeVariant::Lower => f.slope_lower,
            SlopeVariant::Ols => f.slope_ols,
            SlopeVariant::Upper => f.slope_upper,
        }
    }
}

/// One failed inequality between profile values at exponents `s <= t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub s: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`, positive when violated.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: String,
    pub evaluated: usize,
    pub violated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub set_id: String,
    pub variant: SlopeVariant,
    pub tol: f64,
    pub checks: Vec<CheckSummary>,
    pub violations: Vec<Violation>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const CHECK_MONOTONE: &str = "monotone";
pub const CHECK_PROJECTION_BOUNDS: &str = "projection_bounds";
pub const CHECK_RECIPROCAL: &str = "reciprocal";
pub const CHECK_LIPSCHITZ: &str = "lipschitz";

/// Check the profile inequalities for every pair `s < t` of the grid.
///
/// With `d` the chosen slope variant and `n` the ambient dimension:
/// - monotone: `0 <= d(s) <= d(t) <= n`
/// - projection_bounds: `d(t) / (1 + (1/s - 1/t) d(t)) <= d(s) <= s`
/// - reciprocal (when `d(s) > tol`): `1/d(s) - 1/s <= 1/d(t) - 1/t`
/// - lipschitz: `d(t) - d(s) <= t - s`
///
/// each relaxed by `tol` on the right-hand side.
pub fn verify_inequalities(
    p: &ProfileCurve,
    tol: f64,
    variant: SlopeVariant,
) -> Result<InequalityReport> {
    if p.s_grid.len() < 3 {
        return Err(Error::invalid(format!(
            "inequality checks need at least 3 exponents, got {}",
            p.s_grid.len()
        )));
    }
    let d = p.values(variant);
    let n = p.ambient_dim as f64;
    let names = [
        CHECK_MONOTONE,
        CHECK_PROJECTION_BOUNDS,
        CHECK_RECIPROCAL,
        CHECK_LIPSCHITZ,
    ];
    let mut evaluated = [0usize; 4];
    let mut violated = [0usize; 4];
    let mut violations = Vec::new();
    let mut check = |which: usize, s: f64, t: f64, lhs: f64, rhs: f64| {
        evaluated[which] += 1;
        if lhs > rhs + tol {
            violated[which] += 1;
            violations.push(Violation {
                check: names[which].to_string(),
                s,
                t,
                lhs,
                rhs,
                excess: lhs - rhs,
            });
        }
    };
    for a in 0..d.len() {
        for b in (a + 1)..d.len() {
            let (s, t) = (p.s_grid[a], p.s_grid[b]);
            let (ds, dt) = (d[a], d[b]);
            check(0, s, t, 0.0, ds);
            check(0, s, t, ds, dt);
            check(0, s, t, dt, n);
            check(1, s, t, dt / (1.0 + (1.0 / s - 1.0 / t) * dt), ds);
            check(1, s, t, ds, s);
            if ds > tol && dt > 0.0 {
                check(2, s, t, 1.0 / ds - 1.0 / s, 1.0 / dt - 1.0 / t);
            }
            check(3, s, t, dt - ds, t - s);
        }
    }
    Ok(InequalityReport {
        set_id: p.set_id.clone(),
        variant,
        tol,
        checks: names
            .iter()
            .zip(evaluated.iter().zip(&violated))
            .map(|(name, (e, v))| CheckSummary {
                check: name.to_string(),
                evaluated: *e,
                violated: *v,
            })
            .collect(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, s_grid: &[f64]) -> ProfileCurve {
        let estimates = s_grid
            .iter()
            .map(|&s| ScalingFit {
                xs: vec![],
                ys: vec![],
                slope_ols: f(s),
                slope_lower: f(s),
                slope_upper: f(s),
                window: 5,
                stderr: 0.0,
            })
            .collect();
        ProfileCurve::new("synthetic", 1, s_grid.to_vec(), vec![], estimates).unwrap()
    }

    #[test]
    fn exact_power_law() {
        let curve: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let r = 0.5f64.powi(k);
                (r, r.powf(-0.5))
            })
            .collect();
        let f = fit_scaling(&curve, 5).unwrap();
        for s in [f.slope_ols, f.slope_lower, f.slope_upper] {
            assert!((s - 0.5).abs() < 1e-12);
        }
        assert!(f.stderr < 1e-12);
    }

    #[test]
    fn constant_has_zero_slope() {
        let curve: Vec<(f64, f64)> = (0..6).map(|k| (0.5f64.powi(k), 7.0)).collect();
        let f = fit_scaling(&curve, 5).unwrap();
        for s in [f.slope_ols, f.slope_lower, f.slope_upper] {
            assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn fit_preconditions() {
        let three: Vec<(f64, f64)> = (0..3).map(|k| (0.5f64.powi(k), 1.0)).collect();
        assert!(fit_scaling(&three, 3).is_err());
        let four: Vec<(f64, f64)> = (0..4).map(|k| (0.5f64.powi(k), 1.0)).collect();
        assert!(fit_scaling(&four, 5).is_err());
        assert!(fit_scaling(&four, 2).is_err());
        assert!(fit_scaling(&[(1.0, 1.0), (0.5, 0.0), (0.25, 1.0), (0.1, 1.0)], 3).is_err());
    }

    #[test]
    fn ordering_invariant_holds() {
        let curve: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let r = 0.5f64.powi(k);
                (r, (1.0 + (k as f64).sin()).exp() * r.powf(-0.7))
            })
            .collect();
        let f = fit_scaling(&curve, 5).unwrap();
        assert!(f.slope_lower <= f.slope_ols && f.slope_ols <= f.slope_upper);
    }

    #[test]
    fn two_regime_curve() {
        // slope 1 for r >= 2^-8, slope 1/2 below; continuous at the break
        let value = |k: i32| {
            let x = k as f64 * 2f64.ln();
            let xb = 8.0 * 2f64.ln();
            if k <= 8 {
                x
            } else {
                xb + 0.5 * (x - xb)
            }
            .exp()
        };
        let curve: Vec<(f64, f64)> = (0..=16).map(|k| (0.5f64.powi(k), value(k))).collect();
        let f = fit_scaling(&curve, 5).unwrap();
        // independent oracle: each pure regime has at least one full window
        assert!((f.slope_upper - 1.0).abs() < 1e-12);
        assert!((f.slope_lower - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inequalities_hold_for_min_curve() {
        let p = synthetic(|s| s.min(0.5), &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0]);
        let rep = verify_inequalities(&p, 0.0, SlopeVariant::Ols).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        assert!(rep.checks.iter().all(|c| c.evaluated > 0));
    }

    #[test]
    fn squared_curve_violates_lipschitz() {
        let p = synthetic(|s| s * s, &[0.25, 0.5, 0.75, 1.0]);
        let rep = verify_inequalities(&p, 0.0, SlopeVariant::Ols).unwrap();
        assert!(!rep.passed());
        // d(1) - d(1/2) = 0.75 > 0.5
        assert!(rep
            .violations
            .iter()
            .any(|v| v.check == CHECK_LIPSCHITZ && v.s == 0.5 && v.t == 1.0));
    }

    #[test]
    fn inequality_needs_three_points() {
        let p = synthetic(|s| s, &[0.5, 1.0]);
        assert!(verify_inequalities(&p, 0.0, SlopeVariant::Ols).is_err());
    }

    #[test]
    fn s_grid_must_increase() {
        assert!(ProfileCurve::new("x", 1, vec![1.0, 0.5], vec![], vec![]).is_err());
    }

    #[test]
    fn singleton_profile_is_zero() {
        let e = PointSet::singleton(&[0.0, 0.0]).unwrap();
        let opts = ProfileOptions::default();
        let grid = default_r_grid(&e, &opts).unwrap();
        let f = estimate_profile(&e, 1.0, &grid, &opts).unwrap();
        assert_eq!(f.slope_ols, 0.0);
    }

    #[test]
    fn floor_is_enforced() {
        let e = PointSet::unit_segment(11).unwrap();
        let opts = ProfileOptions::default();
        assert!(matches!(
            estimate_profile(&e, 1.0, &[0.4, 0.2, 0.1, 0.04], &opts),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn working_set_coarsens_large_sets() {
        let e = PointSet::unit_segment(2001).unwrap();
        let opts = ProfileOptions {
            dense_limit: 100,
            ..Default::default()
        };
        let w = working_set(&e, 0.1, &opts).unwrap();
        assert!(w.len() <= 100 && w.len() > 10);
        assert!(matches!(
            working_set(&e, 0.001, &opts),
            Err(Error::ResourceLimit { .. })
        ));
        let grid = default_r_grid(&e, &opts).unwrap();
        assert!(grid
            .iter()
            .all(|&r| mesh_count(&e, opts.coarsen_factor * r).unwrap().count <= 100));
    }
}
