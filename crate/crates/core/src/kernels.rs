//! Potential kernels and dense kernel matrices.
//!
//! Two families are provided. The truncated power kernel
//! `phi_r^s(x) = min{1, (r/|x|)^s}` drives every capacity computation. The
//! smoothed Riesz kernel `psi_r^s = (|.|^{-s} * e)(x/r)`, with
//! `e(x) = exp(-|x|^2/2)`, is comparable to `phi_r^s` and has a strictly
//! positive Fourier transform `c r^s |xi|^{s-n} e(r xi)`, which makes its
//! kernel matrices positive definite. That transform is not evaluated here.
//!
//! `psi` has no closed form. Writing `|y|^{-s}` as a Gaussian mixture,
//! `|y|^{-s} = Γ(s/2)^{-1} ∫ t^{s/2-1} exp(-t|y|^2) dt`, and convolving each
//! Gaussian with `e` in closed form gives the one-dimensional radial integral
//!
//! ```text
//! psi_1^s(x) = π^{n/2} / Γ(s/2) ∫_0^∞ t^{s/2-1} (t + 1/2)^{-n/2} exp(-t|x|^2 / (2t + 1)) dt
//! ```
//!
//! which converges exactly when `0 < s < n` and is evaluated by adaptive
//! Gauss–Kronrod quadrature after mapping both halves of the range onto `(0, 1]`.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::{dist2, norm, PointSet};
use crate::quadrature;

pub const DEFAULT_PSI_TOL: f64 = 1e-8;

const PSI_MAX_INTERVALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Phi,
    Psi,
}

/// A kernel family together with its exponent `s` and scale `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub s: f64,
    pub r: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, s: f64, r: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("kernel exponent s = {s} must be > 0")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!("kernel scale r = {r} must be > 0")));
        }
        Ok(KernelSpec { family, s, r })
    }

    pub fn phi(s: f64, r: f64) -> Result<Self> {
        Self::new(KernelFamily::Phi, s, r)
    }

    pub fn psi(s: f64, r: f64) -> Result<Self> {
        Self::new(KernelFamily::Psi, s, r)
    }

    pub fn with_r(self, r: f64) -> Result<Self> {
        Self::new(self.family, self.s, r)
    }
}

/// `min{1, (r/d)^s}` for a distance `d >= 0`.
#[inline]
pub fn phi_of_distance(s: f64, r: f64, d: f64) -> f64 {
    if d <= r {
        1.0
    } else {
        let q = r / d;
        if s == 1.0 {
            q
        } else if s == 2.0 {
            q * q
        } else {
            q.powf(s)
        }
    }
}

/// The truncated power kernel at displacement `x`.
pub fn phi(spec: &KernelSpec, x: &[f64]) -> f64 {
    phi_of_distance(spec.s, spec.r, norm(x))
}

/// `exp(-|x|^2 / (2 r^2))`.
pub fn gauss(x: &[f64], r: f64) -> f64 {
    let t = norm(x) / r;
    (-0.5 * t * t).exp()
}

/// The smoothed Riesz kernel `psi_r^s(x) = psi_1^s(x / r)` in `R^n`.
pub fn psi(spec: &KernelSpec, x: &[f64], ambient_dim: usize, tol: f64) -> Result<f64> {
    if x.len() != ambient_dim {
        return Err(Error::DimensionMismatch {
            expected: ambient_dim,
            found: x.len(),
        });
    }
    psi_unit_radial(ambient_dim, spec.s, norm(x) / spec.r, tol)
}

/// `psi_1^s` at radius `rho` in `R^n`.
pub fn psi_unit_radial(n: usize, s: f64, rho: f64, tol: f64) -> Result<f64> {
    if !(s > 0.0 && s < n as f64) {
        return Err(Error::invalid(format!(
            "psi kernel needs 0 < s < n, got s = {s}, n = {n}"
        )));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("psi radius {rho} must be finite and >= 0")));
    }
    let nf = n as f64;
    let rho2 = rho * rho;

    // t in (0, 1] via t = w^{2/s}: t^{s/2-1} dt = (2/s) dw
    let head = |w: f64| {
        let t = w.powf(2.0 / s);
        (2.0 / s) * (t + 0.5).powf(-0.5 * nf) * (-rho2 * t / (2.0 * t + 1.0)).exp()
    };
    // t in [1, ∞) via t = w^{-alpha}, alpha = 2/(n-s); integrand tends to a constant at w = 0
    let alpha = 2.0 / (nf - s);
    let tail = |w: f64| {
        let ln_t = -alpha * w.ln();
        let inv_t = (-ln_t).exp();
        let log_f = alpha.ln() + (0.5 * s + 1.0 / alpha) * ln_t
            - 0.5 * nf * (ln_t + (0.5 * inv_t).ln_1p())
            - rho2 / (2.0 + inv_t);
        log_f.exp()
    };

    // For large rho the head integrand is concentrated near w ~ rho^{-s}; split
    // geometrically around that point so no rule can step over the peak.
    let mut breaks = vec![0.0];
    if rho > 1.0 {
        let peak = rho.powf(-s);
        let mut b = peak * 4f64.powi(-12);
        while b < 1.0 {
            breaks.push(b);
            b *= 4.0;
        }
    }
    breaks.push(1.0);

    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += quadrature::integrate(head, w[0], w[1], tol, PSI_MAX_INTERVALS)?.value;
    }
    total += quadrature::integrate(tail, 0.0, 1.0, tol, PSI_MAX_INTERVALS)?.value;

    Ok(std::f64::consts::PI.powf(0.5 * nf) / ln_gamma(0.5 * s).exp() * total)
}

/// Memoized `psi_1^s` for a fixed ambient dimension and exponent.
///
/// The kernel is radial, so values are cached by the exact bit pattern of the
/// scaled radius `|x| / r`.
#[derive(Debug)]
pub struct PsiEvaluator {
    n: usize,
    s: f64,
    tol: f64,
    cache: Mutex<HashMap<u64, f64>>,
}

impl PsiEvaluator {
    pub fn new(n: usize, s: f64, tol: f64) -> Result<Self> {
        if !(s > 0.0 && s < n as f64) {
            return Err(Error::invalid(format!(
                "psi kernel needs 0 < s < n, got s = {s}, n = {n}"
            )));
        }
        Ok(PsiEvaluator {
            n,
            s,
            tol,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn at_radius(&self, rho: f64) -> Result<f64> {
        let key = rho.to_bits();
        if let Some(v) = self.cache.lock().expect("psi cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = psi_unit_radial(self.n, self.s, rho, self.tol)?;
        self.cache.lock().expect("psi cache poisoned").insert(key, v);
        Ok(v)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("psi cache poisoned").len()
    }
}

/// Dense symmetric kernel matrix over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    size: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    /// Build from row-major entries; must be square and symmetric.
    pub fn from_rows(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                found: data.len(),
            });
        }
        for i in 0..size {
            for j in 0..i {
                if data[i * size + j] != data[j * size + i] {
                    return Err(Error::invalid("kernel matrix must be symmetric"));
                }
            }
        }
        Ok(KernelMatrix { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// `K w`, summed left to right in each row.
    pub fn matvec(&self, w: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|i| self.row(i).iter().zip(w).map(|(k, x)| k * x).sum())
            .collect()
    }
}

/// Assemble `K[i][j] = kernel(x_i - x_j)`, evaluating each unordered pair once.
pub fn assemble_matrix(e: &PointSet, spec: &KernelSpec, cap: usize) -> Result<KernelMatrix> {
    let n = e.len();
    if n > cap {
        return Err(Error::ResourceLimit {
            what: "kernel matrix points",
            requested: n,
            cap,
        });
    }
    let mut data = vec![0.0; n * n];
    match spec.family {
        KernelFamily::Phi => {
            let (s, r) = (spec.s, spec.r);
            data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let p = e.point(i);
                row[i] = 1.0;
                for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
                    *slot = phi_of_distance(s, r, dist2(p, e.point(j)).sqrt());
                }
            });
        }
        KernelFamily::Psi => {
            let eval = PsiEvaluator::new(e.ambient_dim(), spec.s, DEFAULT_PSI_TOL)?;
            let r = spec.r;
            data.par_chunks_mut(n)
                .enumerate()
                .try_for_each(|(i, row)| -> Result<()> {
                    let p = e.point(i);
                    for (j, slot) in row.iter_mut().enumerate().skip(i) {
                        *slot = eval.at_radius(dist2(p, e.point(j)).sqrt() / r)?;
                    }
                    Ok(())
                })?;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            data[j * n + i] = data[i * n + j];
        }
    }
    Ok(KernelMatrix { size: n, data })
}

/// Natural log of the gamma function for positive arguments (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (k, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
