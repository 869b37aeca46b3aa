//! Verification suites and the projection experiment, each producing an
//! [`ExperimentReport`] whose config echo reproduces the run exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::boxcount::mesh_count;
use crate::error::{Error, Result};
use crate::grassmann::{child_rng, derive_seed, project, sample_subspace_with, verify_tube_comparability, TubeReport};
use crate::kernels::{phi_of_distance, psi, KernelSpec, PsiEvaluator, DEFAULT_PSI_TOL};
use crate::pointset::{cantor_spec, generate_ifs, product_set, sierpinski_spec, PointSet, DEFAULT_POINT_CAP};
use crate::profiles::{
    default_r_grid, estimate_box_dimension, fit_scaling, profile_curve, profile_points,
    verify_inequalities, InequalityReport, ProfileCurve, ProfileOptions, ProfilePoint, ScalingFit,
    SlopeVariant, DEFAULT_INEQUALITY_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub config: Value,
    pub results: Value,
    pub pass: bool,
    pub violations: Vec<Value>,
}

impl ExperimentReport {
    fn new<C: Serialize, R: Serialize>(
        id: &str,
        config: &C,
        results: &R,
        violations: Vec<Value>,
    ) -> Result<Self> {
        Ok(ExperimentReport {
            experiment_id: id.to_string(),
            config: serde_json::to_value(config)?,
            results: serde_json::to_value(results)?,
            pass: violations.is_empty(),
            violations,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A named way to obtain a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetSpec {
    /// `points` equally spaced points on `[0, 1]`.
    Segment { points: usize },
    Cantor { ratio: f64, depth: u32 },
    /// Product of a Cantor set with itself, in the plane.
    CantorSquare { ratio: f64, depth: u32 },
    Sierpinski { depth: u32 },
    File { path: String },
}

impl SetSpec {
    pub fn build(&self, cap: usize) -> Result<PointSet> {
        match self {
            SetSpec::Segment { points } => PointSet::unit_segment(*points),
            SetSpec::Cantor { ratio, depth } => generate_ifs(&cantor_spec(*ratio, *depth)?, cap),
            SetSpec::CantorSquare { ratio, depth } => {
                let c = generate_ifs(&cantor_spec(*ratio, *depth)?, cap)?;
                product_set(&c, &c, cap)
            }
            SetSpec::Sierpinski { depth } => generate_ifs(&sierpinski_spec(*depth), cap),
            SetSpec::File { path } => PointSet::read_file(std::path::Path::new(path)),
        }
        .and_then(|e| {
            if e.len() > cap {
                Err(Error::ResourceLimit {
                    what: "points",
                    requested: e.len(),
                    cap,
                })
            } else {
                Ok(e)
            }
        })
    }

    pub fn id(&self) -> String {
        match self {
            SetSpec::Segment { points } => format!("segment({points})"),
            SetSpec::Cantor { ratio, depth } => format!("cantor({ratio},{depth})"),
            SetSpec::CantorSquare { ratio, depth } => format!("cantor({ratio},{depth})^2"),
            SetSpec::Sierpinski { depth } => format!("sierpinski({depth})"),
            SetSpec::File { path } => format!("file({path})"),
        }
    }
}

fn violation(kind: &str, detail: Value) -> Value {
    serde_json::json!({ "kind": kind, "detail": detail })
}

fn resolve_grid(e: &PointSet, grid: &Option<Vec<f64>>, opts: &ProfileOptions) -> Result<Vec<f64>> {
    match grid {
        Some(g) => Ok(g.clone()),
        None => default_r_grid(e, opts),
    }
}

// ---------------------------------------------------------------------------
// capacity vs box counting

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityBoxcountConfig {
    pub set: SetSpec,
    pub s: f64,
    /// Defaults to the profile grid of the set.
    pub r_grid: Option<Vec<f64>>,
    pub profile: ProfileOptions,
    /// Allowed slope difference; `None` picks 0.05 for `s > n`, 0.10 for
    /// `s = n` and no slope check for `s < n`.
    pub slope_tol: Option<f64>,
    /// Largest allowed max/min spread of `N_r / C_r`.
    pub band_limit: f64,
    pub point_cap: usize,
}

impl Default for CapacityBoxcountConfig {
    fn default() -> Self {
        CapacityBoxcountConfig {
            set: SetSpec::Cantor {
                ratio: 1.0 / 3.0,
                depth: 10,
            },
            s: 2.0,
            r_grid: None,
            profile: ProfileOptions::default(),
            slope_tol: None,
            band_limit: 10.0,
            point_cap: DEFAULT_POINT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityBoxcountRow {
    pub r: f64,
    pub capacity: f64,
    pub count: usize,
    pub count_over_capacity: f64,
    pub kkt_residual: f64,
    pub working_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityBoxcountResults {
    pub set_id: String,
    pub ambient_dim: usize,
    pub r_grid: Vec<f64>,
    pub rows: Vec<CapacityBoxcountRow>,
    pub capacity_fit: ScalingFit,
    pub box_fit: ScalingFit,
    pub slope_difference: f64,
    pub slope_tol: Option<f64>,
    pub band_min: f64,
    pub band_max: f64,
    pub band_spread: f64,
}

pub fn run_capacity_boxcount(cfg: &CapacityBoxcountConfig) -> Result<ExperimentReport> {
    let e = cfg.set.build(cfg.point_cap)?;
    let grid = resolve_grid(&e, &cfg.r_grid, &cfg.profile)?;
    let pts: Vec<ProfilePoint> = profile_points(&e, cfg.s, &grid, &cfg.profile)?;
    let curve: Vec<(f64, f64)> = pts.iter().map(|p| (p.r, p.capacity)).collect();
    let capacity_fit = fit_scaling(&curve, cfg.profile.window)?;
    let box_fit = estimate_box_dimension(&e, &grid, cfg.profile.window)?;
    let mut rows = Vec::with_capacity(pts.len());
    for p in &pts {
        let count = mesh_count(&e, p.r)?.count;
        rows.push(CapacityBoxcountRow {
            r: p.r,
            capacity: p.capacity,
            count,
            count_over_capacity: count as f64 / p.capacity,
            kkt_residual: p.kkt_residual,
            working_points: p.working_points,
        });
    }
    let band_min = rows.iter().map(|r| r.count_over_capacity).fold(f64::INFINITY, f64::min);
    let band_max = rows.iter().map(|r| r.count_over_capacity).fold(0.0, f64::max);
    let n = e.ambient_dim() as f64;
    let slope_tol = cfg.slope_tol.or(if cfg.s > n {
        Some(0.05)
    } else if cfg.s == n {
        Some(0.10)
    } else {
        None
    });
    let slope_difference = capacity_fit.slope_ols - box_fit.slope_ols;
    let mut violations = Vec::new();
    if let Some(tol) = slope_tol {
        if slope_difference.abs() > tol {
            violations.push(violation(
                "slope_difference",
                serde_json::json!({ "difference": slope_difference, "tol": tol }),
            ));
        }
    }
    if band_max / band_min > cfg.band_limit {
        violations.push(violation(
            "band_spread",
            serde_json::json!({ "spread": band_max / band_min, "limit": cfg.band_limit }),
        ));
    }
    let results = CapacityBoxcountResults {
        set_id: cfg.set.id(),
        ambient_dim: e.ambient_dim(),
        r_grid: grid,
        rows,
        capacity_fit,
        box_fit,
        slope_difference,
        slope_tol,
        band_min,
        band_max,
        band_spread: band_max / band_min,
    };
    ExperimentReport::new("capacity-boxcount", cfg, &results, violations)
}

// ---------------------------------------------------------------------------
// phi vs psi

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsiPhiConfig {
    pub n: usize,
    pub s_values: Vec<f64>,
    pub rho_min: f64,
    pub rho_max: f64,
    pub grid_points: usize,
    pub quad_tol: f64,
    pub band_limit: f64,
    /// Scale at which `psi_r(x) = psi_1(x / r)` is checked.
    pub scaling_r: f64,
    pub scaling_tol: f64,
}

impl Default for PsiPhiConfig {
    fn default() -> Self {
        PsiPhiConfig {
            n: 2,
            s_values: vec![0.5, 1.0, 1.5],
            rho_min: 1e-3,
            rho_max: 1e3,
            grid_points: 61,
            quad_tol: DEFAULT_PSI_TOL,
            band_limit: 1e3,
            scaling_r: 2.5,
            scaling_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiPhiRow {
    pub rho: f64,
    pub phi: f64,
    pub psi: f64,
    pub phi_over_psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiPhiCase {
    pub s: f64,
    pub rows: Vec<PsiPhiRow>,
    pub band_min: f64,
    pub band_max: f64,
    pub band_ratio: f64,
    pub scaling_max_rel_error: f64,
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(Error::invalid("log grid needs 0 < lo < hi and at least 2 points"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect())
}

pub fn run_psi_phi(cfg: &PsiPhiConfig) -> Result<ExperimentReport> {
    let rhos = log_grid(cfg.rho_min, cfg.rho_max, cfg.grid_points)?;
    let mut cases = Vec::new();
    let mut violations = Vec::new();
    for &s in &cfg.s_values {
        let eval = PsiEvaluator::new(cfg.n, s, cfg.quad_tol)?;
        let unit = KernelSpec::psi(s, 1.0)?;
        let scaled = KernelSpec::psi(s, cfg.scaling_r)?;
        let mut rows = Vec::with_capacity(rhos.len());
        let mut scaling_err: f64 = 0.0;
        for &rho in &rhos {
            let p = eval.at_radius(rho)?;
            let f = phi_of_distance(s, 1.0, rho);
            rows.push(PsiPhiRow {
                rho,
                phi: f,
                psi: p,
                phi_over_psi: f / p,
            });
            let mut x = vec![0.0; cfg.n];
            x[0] = rho * cfg.scaling_r;
            let lhs = psi(&scaled, &x, cfg.n, cfg.quad_tol)?;
            x[0] = rho;
            let rhs = psi(&unit, &x, cfg.n, cfg.quad_tol)?;
            scaling_err = scaling_err.max((lhs - rhs).abs() / rhs.abs());
        }
        let band_min = rows.iter().map(|r| r.phi_over_psi).fold(f64::INFINITY, f64::min);
        let band_max = rows.iter().map(|r| r.phi_over_psi).fold(0.0, f64::max);
        if !(band_max / band_min < cfg.band_limit) {
            violations.push(violation(
                "band_ratio",
                serde_json::json!({ "s": s, "ratio": band_max / band_min, "limit": cfg.band_limit }),
            ));
        }
        if !(scaling_err <= cfg.scaling_tol) {
            violations.push(violation(
                "scaling_identity",
                serde_json::json!({ "s": s, "error": scaling_err, "tol": cfg.scaling_tol }),
            ));
        }
        cases.push(PsiPhiCase {
            s,
            rows,
            band_min,
            band_max,
            band_ratio: band_max / band_min,
            scaling_max_rel_error: scaling_err,
        });
    }
    ExperimentReport::new("psi-phi", cfg, &cases, violations)
}

// ---------------------------------------------------------------------------
// tube probabilities

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeCase {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TubeConfig {
    pub cases: Vec<TubeCase>,
    pub ratio_grid: Vec<f64>,
    pub seed: u64,
    /// Lower edge below which the estimate/phi ratio is a violation.
    pub floor: f64,
    /// Upper edge above which the estimate/phi ratio is a violation.
    pub ceiling: f64,
    /// Allowed deviation from a closed form, in Monte Carlo standard errors.
    pub sigmas: f64,
}

impl Default for TubeConfig {
    fn default() -> Self {
        TubeConfig {
            cases: vec![
                TubeCase { n: 2, m: 1, trials: 100_000 },
                TubeCase { n: 3, m: 1, trials: 1_000_000 },
                TubeCase { n: 3, m: 2, trials: 1_000_000 },
                TubeCase { n: 4, m: 2, trials: 1_000_000 },
            ],
            ratio_grid: vec![1.0, 3.0, 10.0, 100.0],
            seed: 0,
            floor: 0.1,
            ceiling: 20.0,
            sigmas: 3.0,
        }
    }
}

/// Exact `P(|π_V x| <= r)` for unit-free `rho = r / |x| <= 1`, where known in
/// closed form: `|π_V x|² / |x|²` follows a Beta(m/2, (n-m)/2) law.
pub fn tube_closed_form(n: usize, m: usize, rho: f64) -> Option<f64> {
    let rho = rho.min(1.0);
    match (n, m) {
        (2, 1) => Some(2.0 / PI * rho.asin()),
        (3, 1) => Some(rho),
        (3, 2) => Some(1.0 - (1.0 - rho * rho).sqrt()),
        (4, 2) => Some(rho * rho),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeCaseResult {
    pub report: TubeReport,
    /// Closed-form probabilities per grid point, where available.
    pub exact: Option<Vec<f64>>,
    /// `|estimate - exact| / stderr` per grid point (0 when both agree exactly).
    pub z_scores: Option<Vec<f64>>,
}

pub fn run_tube(cfg: &TubeConfig) -> Result<ExperimentReport> {
    let mut results = Vec::new();
    let mut violations = Vec::new();
    for (k, case) in cfg.cases.iter().enumerate() {
        let report = verify_tube_comparability(
            case.n,
            case.m,
            &cfg.ratio_grid,
            case.trials,
            derive_seed(cfg.seed, k as u64),
            cfg.floor,
        )?;
        for row in &report.rows {
            if !(row.ratio_to_phi >= cfg.floor && row.ratio_to_phi <= cfg.ceiling) {
                violations.push(violation(
                    "ratio_out_of_band",
                    serde_json::json!({ "n": case.n, "m": case.m, "ratio": row.ratio,
                        "ratio_to_phi": row.ratio_to_phi, "floor": cfg.floor, "ceiling": cfg.ceiling }),
                ));
            }
        }
        let exact: Option<Vec<f64>> = report
            .rows
            .iter()
            .map(|row| tube_closed_form(case.n, case.m, 1.0 / row.ratio))
            .collect();
        let z_scores = exact.as_ref().map(|ex| {
            report
                .rows
                .iter()
                .zip(ex)
                .map(|(row, p)| {
                    let diff = (row.estimate - p).abs();
                    if diff == 0.0 {
                        0.0
                    } else {
                        diff / row.stderr
                    }
                })
                .collect::<Vec<f64>>()
        });
        if let Some(z) = &z_scores {
            for (row, zk) in report.rows.iter().zip(z) {
                if !(*zk <= cfg.sigmas) {
                    violations.push(violation(
                        "closed_form_mismatch",
                        serde_json::json!({ "n": case.n, "m": case.m, "ratio": row.ratio,
                            "z": zk, "sigmas": cfg.sigmas }),
                    ));
                }
            }
        }
        results.push(TubeCaseResult {
            report,
            exact,
            z_scores,
        });
    }
    ExperimentReport::new("tube", cfg, &results, violations)
}

// ---------------------------------------------------------------------------
// profile inequalities

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InequalitiesConfig {
    pub sets: Vec<SetSpec>,
    pub s_grid: Vec<f64>,
    pub tol: f64,
    pub variant: SlopeVariant,
    pub profile: ProfileOptions,
    pub point_cap: usize,
    /// Also run the checks on the synthetic curve `d(s) = s²` and require
    /// that they report a violation.
    pub synthetic_check: bool,
}

impl Default for InequalitiesConfig {
    fn default() -> Self {
        InequalitiesConfig {
            sets: vec![
                SetSpec::Segment { points: 1001 },
                SetSpec::Cantor {
                    ratio: 1.0 / 3.0,
                    depth: 12,
                },
                SetSpec::CantorSquare {
                    ratio: 1.0 / 3.0,
                    depth: 8,
                },
            ],
            s_grid: (1..=8).map(|k| 0.25 * k as f64).collect(),
            tol: DEFAULT_INEQUALITY_TOL,
            variant: SlopeVariant::Ols,
            profile: ProfileOptions::default(),
            point_cap: DEFAULT_POINT_CAP,
            synthetic_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalitiesResults {
    pub curves: Vec<ProfileCurve>,
    pub reports: Vec<InequalityReport>,
    pub synthetic: Option<InequalityReport>,
}

/// The synthetic profile `d(s) = s²` on `s_grid`, which is not 1-Lipschitz.
pub fn squared_profile(s_grid: &[f64]) -> Result<ProfileCurve> {
    let estimates = s_grid
        .iter()
        .map(|&s| ScalingFit {
            xs: Vec::new(),
            ys: Vec::new(),
            slope_ols: s * s,
            slope_lower: s * s,
            slope_upper: s * s,
            window: 0,
            stderr: 0.0,
        })
        .collect();
    ProfileCurve::new("synthetic(s^2)", 1, s_grid.to_vec(), Vec::new(), estimates)
}

pub fn run_inequalities(cfg: &InequalitiesConfig) -> Result<ExperimentReport> {
    let mut curves = Vec::new();
    let mut reports = Vec::new();
    let mut violations = Vec::new();
    for set in &cfg.sets {
        let e = set.build(cfg.point_cap)?;
        let grid = default_r_grid(&e, &cfg.profile)?;
        let curve = profile_curve(&e, &set.id(), &cfg.s_grid, &grid, &cfg.profile)?;
        let report = verify_inequalities(&curve, cfg.tol, cfg.variant)?;
        for v in &report.violations {
            violations.push(violation(
                "inequality",
                serde_json::json!({ "set": set.id(), "violation": v }),
            ));
        }
        curves.push(curve);
        reports.push(report);
    }
    let synthetic = if cfg.synthetic_check {
        let grid: Vec<f64> = cfg.s_grid.iter().copied().filter(|&s| s <= 1.0).collect();
        let rep = verify_inequalities(&squared_profile(&grid)?, cfg.tol, cfg.variant)?;
        if rep.passed() {
            violations.push(violation(
                "synthetic_not_flagged",
                serde_json::json!({ "s_grid": grid }),
            ));
        }
        Some(rep)
    } else {
        None
    };
    let results = InequalitiesResults {
        curves,
        reports,
        synthetic,
    };
    ExperimentReport::new("inequalities", cfg, &results, violations)
}

// ---------------------------------------------------------------------------
// projections vs the m-profile

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    pub set: SetSpec,
    pub m: usize,
    pub subspaces: usize,
    pub seed: u64,
    /// Defaults to the profile grid of the set; projected box counts use the same grid.
    pub r_grid: Option<Vec<f64>>,
    pub profile: ProfileOptions,
    /// Every projected slope must be at most `d(m) + upper_allowance`.
    pub upper_allowance: f64,
    /// Median and individual agreement tolerance.
    pub match_tol: f64,
    /// Fraction of subspaces that must agree within `match_tol`.
    pub min_fraction: f64,
    pub point_cap: usize,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            set: SetSpec::CantorSquare {
                ratio: 1.0 / 3.0,
                depth: 8,
            },
            m: 1,
            subspaces: 50,
            seed: 0,
            r_grid: None,
            profile: ProfileOptions::default(),
            upper_allowance: 0.07,
            match_tol: 0.1,
            min_fraction: 0.8,
            point_cap: DEFAULT_POINT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedSlope {
    pub index: usize,
    pub basis: Vec<Vec<f64>>,
    pub fit: ScalingFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectResults {
    pub set_id: String,
    pub r_grid: Vec<f64>,
    pub profile: ScalingFit,
    pub projections: Vec<ProjectedSlope>,
    pub median_slope: f64,
    pub max_slope: f64,
    pub fraction_within: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Box-count slopes of `K` random projections against the `m`-profile.
///
/// Subspace `k` is drawn from child stream `k` of the seed.
pub fn run_project(cfg: &ProjectConfig) -> Result<ExperimentReport> {
    let e = cfg.set.build(cfg.point_cap)?;
    let n = e.ambient_dim();
    if cfg.m == 0 || cfg.m > n {
        return Err(Error::invalid(format!(
            "projection dimension m = {} must satisfy 1 <= m <= n = {n}",
            cfg.m
        )));
    }
    if cfg.subspaces == 0 {
        return Err(Error::invalid("need at least one subspace"));
    }
    let grid = resolve_grid(&e, &cfg.r_grid, &cfg.profile)?;
    let pts = profile_points(&e, cfg.m as f64, &grid, &cfg.profile)?;
    let curve: Vec<(f64, f64)> = pts.iter().map(|p| (p.r, p.capacity)).collect();
    let profile = fit_scaling(&curve, cfg.profile.window)?;
    let d = profile.slope_ols;
    let mut projections = Vec::with_capacity(cfg.subspaces);
    for k in 0..cfg.subspaces {
        let mut rng = child_rng(cfg.seed, k as u64);
        let v = sample_subspace_with(n, cfg.m, &mut rng)?;
        let projected = project(&e, &v)?;
        let fit = estimate_box_dimension(&projected, &grid, cfg.profile.window).map_err(|err| {
            Error::invalid(format!("projection {k}: {err}"))
        })?;
        projections.push(ProjectedSlope {
            index: k,
            basis: (0..cfg.m).map(|c| v.basis_vector(c).to_vec()).collect(),
            fit,
        });
    }
    let slopes: Vec<f64> = projections.iter().map(|p| p.fit.slope_ols).collect();
    let median_slope = median(&slopes);
    let max_slope = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let within = slopes.iter().filter(|t| (*t - d).abs() <= cfg.match_tol).count();
    let fraction_within = within as f64 / slopes.len() as f64;
    let mut violations = Vec::new();
    for (k, t) in slopes.iter().enumerate() {
        if *t > d + cfg.upper_allowance {
            violations.push(violation(
                "slope_above_profile",
                serde_json::json!({ "index": k, "slope": t, "profile": d,
                    "allowance": cfg.upper_allowance }),
            ));
        }
    }
    if (median_slope - d).abs() > cfg.match_tol {
        violations.push(violation(
            "median_mismatch",
            serde_json::json!({ "median": median_slope, "profile": d, "tol": cfg.match_tol }),
        ));
    }
    if fraction_within < cfg.min_fraction {
        violations.push(violation(
            "fraction_within",
            serde_json::json!({ "fraction": fraction_within, "required": cfg.min_fraction }),
        ));
    }
    let results = ProjectResults {
        set_id: cfg.set.id(),
        r_grid: grid,
        profile,
        projections,
        median_slope,
        max_slope,
        fraction_within,
    };
    ExperimentReport::new("project-experiment", cfg, &results, violations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn closed_forms_agree_at_the_edges() {
        for (n, m) in [(2, 1), (3, 1), (3, 2), (4, 2)] {
            assert!((tube_closed_form(n, m, 1.0).unwrap() - 1.0).abs() < 1e-15);
            assert_eq!(tube_closed_form(n, m, 0.0).unwrap(), 0.0);
        }
        assert!(tube_closed_form(5, 2, 0.5).is_none());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1e3, 61).unwrap();
        assert_eq!(g.len(), 61);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[60] - 1e3).abs() < 1e-9);
        assert!((g[30] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn set_spec_json() {
        let spec = SetSpec::CantorSquare {
            ratio: 0.25,
            depth: 3,
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(text, r#"{"kind":"cantor_square","ratio":0.25,"depth":3}"#);
        let e = spec.build(DEFAULT_POINT_CAP).unwrap();
        assert_eq!((e.len(), e.ambient_dim()), (64, 2));
        assert!(matches!(
            spec.build(10),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn full_dimensional_projection_keeps_slope() {
        let cfg = ProjectConfig {
            set: SetSpec::CantorSquare {
                ratio: 1.0 / 3.0,
                depth: 6,
            },
            m: 2,
            subspaces: 3,
            ..Default::default()
        };
        let rep = run_project(&cfg).unwrap();
        let res: ProjectResults = serde_json::from_value(rep.results).unwrap();
        let e = cfg.set.build(DEFAULT_POINT_CAP).unwrap();
        let own = estimate_box_dimension(&e, &res.r_grid, 5).unwrap();
        for p in &res.projections {
            assert_eq!(p.fit.slope_ols, own.slope_ols);
        }
    }
}
