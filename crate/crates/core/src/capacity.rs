//! Energy minimization over probability measures on a point set.
//!
//! The capacity of a set with respect to a kernel is the reciprocal of the
//! smallest energy `w^T K w` over probability vectors `w`. A minimizer `w*`
//! (the equilibrium measure) has potential `K w*` at least the minimum energy
//! at every point, with equality wherever it carries mass. That pair of
//! conditions is the optimality certificate checked on every solve.
//!
//! The solver is pairwise Frank–Wolfe: each step moves mass from the support
//! point of largest potential to the point of smallest potential, with an
//! exact line search along `e_i - e_j`. The curvature along that direction is
//! `K_ii + K_jj - 2 K_ij`, which is nonnegative for any kernel with unit
//! diagonal and entries in `(0, 1]`, so the step never needs a fallback even
//! though `K` itself need not be positive semidefinite.
//!
//! Pairwise steps identify the support quickly but can crawl once it is
//! known, so every few sweeps the solver also tries the exact stationary
//! point on the current support face and keeps it when it lowers the energy.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{assemble_matrix, KernelMatrix, KernelSpec};
use crate::pointset::{PointSet, DEFAULT_POINT_CAP};

/// Weight above which a point counts as carrying mass.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-10;

/// A probability vector on the points of a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("measure needs at least one atom"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("measure weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "measure weights sum to {total}, not 1"
            )));
        }
        Ok(DiscreteMeasure { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("measure needs at least one atom"));
        }
        Ok(DiscreteMeasure {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn point_mass(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::invalid(format!("atom {i} out of range for {n} points")));
        }
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        Ok(DiscreteMeasure { weights })
    }

    pub fn set_size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_size(&self, floor: f64) -> usize {
        self.weights.iter().filter(|w| **w > floor).count()
    }
}

fn check_sizes(mu: &DiscreteMeasure, k: &KernelMatrix) -> Result<()> {
    if mu.set_size() != k.size() {
        return Err(Error::DimensionMismatch {
            expected: k.size(),
            found: mu.set_size(),
        });
    }
    Ok(())
}

/// `w^T K w`.
pub fn energy(mu: &DiscreteMeasure, k: &KernelMatrix) -> Result<f64> {
    check_sizes(mu, k)?;
    let w = mu.weights();
    Ok(k.matvec(w).iter().zip(w).map(|(p, x)| p * x).sum())
}

/// `(K w)_i`.
pub fn potential(mu: &DiscreteMeasure, k: &KernelMatrix, i: usize) -> Result<f64> {
    check_sizes(mu, k)?;
    if i >= k.size() {
        return Err(Error::invalid(format!("point index {i} out of range")));
    }
    Ok(k.row(i).iter().zip(mu.weights()).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Absolute tolerance on the optimality certificate.
    pub tol: f64,
    /// Extra random starts beyond the uniform one.
    pub restarts: usize,
    pub seed: u64,
    pub weight_floor: f64,
    pub point_cap: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 100_000,
            tol: 1e-8,
            restarts: 0,
            seed: 0,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            point_cap: DEFAULT_POINT_CAP,
        }
    }
}

/// Capacity, equilibrium measure and the optimality certificate of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub capacity: f64,
    pub min_energy: f64,
    pub equilibrium: DiscreteMeasure,
    /// Smallest potential among points carrying mass.
    pub potential_min_on_support: f64,
    /// `max_i (min_energy - potential_i)`, clipped at 0.
    pub potential_max_off_support_defect: f64,
    /// Worst violation of either optimality condition.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub duplicates_merged: usize,
    pub weight_floor: f64,
}

impl CapacityResult {
    pub fn support_size(&self) -> usize {
        self.equilibrium.support_size(self.weight_floor)
    }

    pub fn summary(&self, r: f64, s: f64) -> CapacitySummary {
        CapacitySummary {
            r,
            s,
            capacity: self.capacity,
            min_energy: self.min_energy,
            kkt_residual: self.kkt_residual,
            iterations: self.iterations,
            converged: self.converged,
            support_size: self.support_size(),
        }
    }
}

/// Serialized form of a capacity solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub r: f64,
    pub s: f64,
    pub capacity: f64,
    pub min_energy: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub support_size: usize,
}

struct Run {
    w: Vec<f64>,
    energy: f64,
    iterations: usize,
    gap: f64,
}

fn refresh(k: &KernelMatrix, w: &mut [f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    k.matvec(w)
}

fn argmin(g: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in g.iter().enumerate().skip(1) {
        if *v < g[best] {
            best = i;
        }
    }
    best
}

fn argmax_on_support(g: &[f64], w: &[f64]) -> usize {
    let mut best = usize::MAX;
    for (i, (v, x)) in g.iter().zip(w).enumerate() {
        if *x > 0.0 && (best == usize::MAX || *v > g[best]) {
            best = i;
        }
    }
    best
}

/// Supports up to this size are polished with a dense LU solve, larger ones
/// with conjugate gradients.
const POLISH_DENSE_SUPPORT: usize = 1500;
const POLISH_CG_MAX_ITER: usize = 400;

/// Conjugate gradients for `K_SS v = 1`. Gives up (returns `None`) on a
/// non-positive curvature direction, which indefinite kernel matrices can produce.
fn cg_on_support(k: &KernelMatrix, support: &[usize]) -> Option<Vec<f64>> {
    let m = support.len();
    let apply = |x: &[f64]| -> Vec<f64> {
        support
            .iter()
            .map(|&i| {
                let row = k.row(i);
                support.iter().zip(x).map(|(&j, v)| row[j] * v).sum()
            })
            .collect()
    };
    let mut x = vec![0.0; m];
    let mut res = vec![1.0; m];
    let mut p = res.clone();
    let mut rr: f64 = m as f64;
    let stop = 1e-26 * m as f64;
    for _ in 0..POLISH_CG_MAX_ITER {
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return None;
        }
        let alpha = rr / pap;
        for t in 0..m {
            x[t] += alpha * p[t];
            res[t] -= alpha * ap[t];
        }
        let rr_new: f64 = res.iter().map(|v| v * v).sum();
        if rr_new <= stop {
            return Some(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for t in 0..m {
            p[t] = res[t] + beta * p[t];
        }
    }
    // an unconverged iterate can still lower the energy; the caller checks
    Some(x)
}

/// Solution of `K_SS v = 1` together with the support positions that were
/// skipped as numerically dependent (their entries of `v` are 0).
fn solve_on_support(k: &KernelMatrix, support: &[usize]) -> Option<(Vec<f64>, Vec<usize>)> {
    let m = support.len();
    if m <= POLISH_DENSE_SUPPORT {
        let mut a = vec![0.0; m * m];
        for (r, &i) in support.iter().enumerate() {
            let row = k.row(i);
            for (c, &j) in support.iter().enumerate() {
                a[r * m + c] = row[j];
            }
        }
        symmetric_solve_skipping(&mut a, vec![1.0; m], m)
    } else {
        cg_on_support(k, support).map(|v| (v, Vec::new()))
    }
}

/// Active-set refinement of a feasible point.
///
/// On the current support `S`, the stationary point of the energy on the face
/// is `v / sum(v)` with `K_SS v = 1`. If it lies inside the simplex it is
/// taken and the point of lowest potential off the support is added;
/// otherwise the iterate moves toward it until a weight hits zero and the
/// points with nonpositive face weight are dropped. Stops when no off-support point undercuts the energy by
/// more than `tol`, or when the round budget runs out. Returns `None` if a
/// solve fails; the caller keeps whichever of old and new has lower energy.
fn polish_on_support(k: &KernelMatrix, w: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = w.len();
    let mut x = w.to_vec();
    let mut g = k.matvec(&x);
    // lowest potential first, so of two near-identical points the better one
    // is kept when the elimination skips the other
    let by_potential = |g: &[f64], support: &mut Vec<usize>| {
        support.sort_unstable_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)))
    };
    let mut support: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
    by_potential(&g, &mut support);
    let mut last_energy = f64::INFINITY;
    let budget = if support.len() > POLISH_DENSE_SUPPORT {
        8
    } else {
        64
    };
    for _ in 0..budget {
        if support.is_empty() {
            return None;
        }
        let (mut v, skipped) = solve_on_support(k, &support)?;
        if !skipped.is_empty() {
            for &c in &skipped {
                x[support[c]] = 0.0;
            }
            let (kept_v, kept): (Vec<f64>, Vec<usize>) = support
                .iter()
                .enumerate()
                .filter(|(c, _)| skipped.binary_search(c).is_err())
                .map(|(c, &i)| (v[c], i))
                .unzip();
            support = kept;
            v = kept_v;
            let sum: f64 = x.iter().sum();
            if !(sum > 0.0) {
                x.iter_mut().for_each(|t| *t = 0.0);
                support.iter().for_each(|&i| x[i] = 1.0 / support.len() as f64);
            } else {
                x.iter_mut().for_each(|t| *t /= sum);
            }
        }
        let total: f64 = v.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        let z: Vec<f64> = v.iter().map(|t| t / total).collect();
        if z.iter().all(|t| *t > 0.0) {
            x.iter_mut().for_each(|t| *t = 0.0);
            for (&i, t) in support.iter().zip(&z) {
                x[i] = *t;
            }
            g = k.matvec(&x);
            let energy: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
            let add = argmin(&g);
            // near-identical points can trade places forever; stop once an
            // interior round no longer lowers the energy
            if g[add] >= energy - tol || x[add] > 0.0 || energy >= last_energy {
                return Some(x);
            }
            last_energy = energy;
            support.push(add);
            by_potential(&g, &mut support);
            continue;
        }
        // largest step toward z that keeps every weight nonnegative
        let mut step = 1.0f64;
        for (&i, t) in support.iter().zip(&z) {
            if *t <= 0.0 {
                step = step.min(x[i] / (x[i] - t));
            }
        }
        for (&i, t) in support.iter().zip(&z) {
            x[i] += step * (t - x[i]);
        }
        // drop every point the face solution wants negative, not only the
        // first to reach zero; the caller's energy comparison guards this
        let before = support.len();
        let mut pos = 0;
        support.retain(|&i| {
            let keep = x[i] > 1e-15 && z[pos] > 0.0;
            pos += 1;
            if !keep {
                x[i] = 0.0;
            }
            keep
        });
        if support.len() == before {
            return None;
        }
        let sum: f64 = x.iter().sum();
        x.iter_mut().for_each(|t| *t /= sum);
    }
    Some(x)
}

/// Gaussian elimination without pivoting on a symmetric matrix, in place.
///
/// A diagonal pivot below `1e-10` marks its row and column as dependent on the
/// earlier ones; they are skipped, which amounts to eliminating on the
/// submatrix of the remaining indices. Returns the solution (0 at skipped
/// indices) and the sorted skipped indices.
fn symmetric_solve_skipping(
    a: &mut [f64],
    mut b: Vec<f64>,
    m: usize,
) -> Option<(Vec<f64>, Vec<usize>)> {
    let mut skipped = Vec::new();
    for col in 0..m {
        let d = a[col * m + col];
        if d.abs() < 1e-12 {
            skipped.push(col);
            continue;
        }
        let (upper, lower) = a.split_at_mut((col + 1) * m);
        let pivot_row = &upper[col * m..(col + 1) * m];
        for (r, row) in lower.chunks_exact_mut(m).enumerate() {
            let f = row[col] / d;
            if f != 0.0 {
                for c in (col + 1)..m {
                    row[c] -= f * pivot_row[c];
                }
                b[col + 1 + r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; m];
    for col in (0..m).rev() {
        if skipped.binary_search(&col).is_ok() {
            continue;
        }
        let row = &a[col * m..(col + 1) * m];
        let acc: f64 = b[col] - ((col + 1)..m).map(|c| row[c] * x[c]).sum::<f64>();
        x[col] = acc / row[col];
    }
    x.iter().all(|v| v.is_finite()).then_some((x, skipped))
}

/// Support point to take mass from when adding to `i`, and how much.
///
/// Each candidate `j` with `g[j] > g[i]` is scored by the exact energy
/// decrease of the line-searched transfer from `j` to `i`; the best wins, ties
/// to the lowest index. Plain max-potential pairing would never choose the
/// near-twin of `i`, whose full swap is often the decisive move.
fn best_partner(k: &KernelMatrix, g: &[f64], w: &[f64], i: usize) -> (usize, f64) {
    let row_i = k.row(i);
    let kii = row_i[i];
    let mut best = (usize::MAX, 0.0, f64::NEG_INFINITY);
    for (j, (&gj, &wj)) in g.iter().zip(w).enumerate() {
        if !(wj > 0.0) || gj <= g[i] {
            continue;
        }
        let b = gj - g[i];
        let a = kii + k.get(j, j) - 2.0 * row_i[j];
        let delta = if a > 0.0 { (b / a).min(wj) } else { wj };
        let gain = 2.0 * delta * b - delta * delta * a;
        if gain > best.2 {
            best = (j, delta, gain);
        }
    }
    (best.0, best.1)
}

fn pairwise_frank_wolfe(k: &KernelMatrix, mut w: Vec<f64>, opts: &SolverOptions) -> Run {
    let n = k.size();
    let refresh_every = n.max(1000);
    let polish_every = n.max(500);
    let mut g = refresh(k, &mut w);
    let mut iterations = 0;
    let mut gap;
    loop {
        let i = argmin(&g);
        let j = argmax_on_support(&g, &w);
        gap = g[j] - g[i];
        if gap <= opts.tol {
            // confirm against exactly recomputed potentials
            g = refresh(k, &mut w);
            let i = argmin(&g);
            let j = argmax_on_support(&g, &w);
            gap = g[j] - g[i];
            if gap <= opts.tol {
                break;
            }
            continue;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let (j, delta) = best_partner(k, &g, &w, i);
        w[i] += delta;
        if delta == w[j] {
            w[j] = 0.0;
        } else {
            w[j] -= delta;
        }
        for ((gv, ki), kj) in g.iter_mut().zip(k.row(i)).zip(k.row(j)) {
            *gv += delta * (ki - kj);
        }
        if iterations % polish_every == 0 {
            if let Some(mut cand) = polish_on_support(k, &w, opts.tol) {
                let cand_g = refresh(k, &mut cand);
                let e_cand: f64 = cand.iter().zip(&cand_g).map(|(a, b)| a * b).sum();
                let e_now: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
                if e_cand <= e_now {
                    w = cand;
                    g = cand_g;
                    continue;
                }
            }
        }
        if iterations % refresh_every == 0 {
            g = refresh(k, &mut w);
        }
    }
    g = refresh(k, &mut w);
    let energy = w.iter().zip(&g).map(|(a, b)| a * b).sum();
    Run {
        w,
        energy,
        iterations,
        gap,
    }
}

fn random_start(n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Minimize the energy for an explicit kernel matrix.
///
/// The uniform start is always tried; `opts.restarts` adds random starts drawn
/// from the flat Dirichlet distribution. The lowest-energy certified run wins;
/// if none certifies, the lowest-energy run is returned with `converged = false`.
pub fn solve_with_matrix(k: &KernelMatrix, opts: &SolverOptions) -> Result<CapacityResult> {
    let n = k.size();
    if n == 0 {
        return Err(Error::invalid("empty kernel matrix"));
    }
    let mut best: Option<Run> = None;
    for start in 0..=opts.restarts {
        let w0 = if start == 0 {
            vec![1.0 / n as f64; n]
        } else {
            random_start(n, opts.seed, start as u64)
        };
        let run = pairwise_frank_wolfe(k, w0, opts);
        let ok = run.gap <= opts.tol;
        best = match best {
            None => Some(run),
            Some(b) => {
                let b_ok = b.gap <= opts.tol;
                let better = match (ok, b_ok) {
                    (true, false) => true,
                    (false, true) => false,
                    _ => run.energy < b.energy,
                };
                Some(if better { run } else { b })
            }
        };
    }
    let run = best.expect("at least one start");
    certify(k, run, opts)
}

fn certify(k: &KernelMatrix, run: Run, opts: &SolverOptions) -> Result<CapacityResult> {
    let g = k.matvec(&run.w);
    let energy = run.energy;
    let mut on_support_min = f64::INFINITY;
    let mut on_support_dev: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for (p, x) in g.iter().zip(&run.w) {
        defect = defect.max(energy - p);
        if *x > opts.weight_floor {
            on_support_min = on_support_min.min(*p);
            on_support_dev = on_support_dev.max((p - energy).abs());
        }
    }
    let kkt_residual = defect.max(on_support_dev);
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::Numerical {
            message: "non-positive minimum energy".into(),
            residual: kkt_residual,
        });
    }
    Ok(CapacityResult {
        capacity: 1.0 / energy,
        min_energy: energy,
        equilibrium: DiscreteMeasure { weights: run.w },
        potential_min_on_support: on_support_min,
        potential_max_off_support_defect: defect,
        kkt_residual,
        iterations: run.iterations,
        converged: kkt_residual <= opts.tol,
        duplicates_merged: 0,
        weight_floor: opts.weight_floor,
    })
}

/// Indices of the first occurrence of each distinct point, and for every
/// point the position of its representative in that list.
fn dedup(e: &PointSet) -> (Vec<usize>, Vec<usize>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(e.len());
    let mut firsts = Vec::with_capacity(e.len());
    let mut owner = Vec::with_capacity(e.len());
    for (i, p) in e.points().enumerate() {
        // +0.0 and -0.0 are the same location
        let key: Vec<u64> = p.iter().map(|c| (c + 0.0).to_bits()).collect();
        let slot = *seen.entry(key).or_insert_with(|| {
            firsts.push(i);
            firsts.len() - 1
        });
        owner.push(slot);
    }
    (firsts, owner)
}

/// Capacity and equilibrium measure of a point set for the given kernel.
///
/// Coincident points are merged before assembly; in the returned measure the
/// first copy of each point carries the mass and later copies carry zero.
pub fn solve_equilibrium(
    e: &PointSet,
    spec: &KernelSpec,
    opts: &SolverOptions,
) -> Result<CapacityResult> {
    let (firsts, owner) = dedup(e);
    let merged = e.len() - firsts.len();
    if merged == 0 {
        let k = assemble_matrix(e, spec, opts.point_cap)?;
        return solve_with_matrix(&k, opts);
    }
    log::warn!("merging {merged} coincident points before capacity solve");
    let unique = e.select(&firsts)?;
    let k = assemble_matrix(&unique, spec, opts.point_cap)?;
    let mut res = solve_with_matrix(&k, opts)?;
    let mut weights = vec![0.0; e.len()];
    for (slot, &i) in firsts.iter().enumerate() {
        weights[i] = res.equilibrium.weights[slot];
    }
    debug_assert_eq!(owner.len(), e.len());
    res.equilibrium = DiscreteMeasure { weights };
    res.duplicates_merged = merged;
    Ok(res)
}

pub(crate) fn check_r_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::invalid("empty r-grid"));
    }
    if r_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::invalid("r-grid values must be finite and > 0"));
    }
    if r_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("r-grid must be strictly decreasing"));
    }
    Ok(())
}

/// One certified solve of the truncated power kernel `phi_r^s` per scale.
pub fn capacity_curve(
    e: &PointSet,
    s: f64,
    r_grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<(f64, CapacityResult)>> {
    check_r_grid(r_grid)?;
    r_grid
        .iter()
        .map(|&r| {
            let spec = KernelSpec::phi(s, r)?;
            solve_equilibrium(e, &spec, opts)
                .map(|res| (r, res))
                .map_err(|err| Error::AtScale {
                    r,
                    source: Box::new(err),
                })
        })
        .collect()
}
