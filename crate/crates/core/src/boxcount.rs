//! Covering numbers by coordinate mesh cubes.
//!
//! A cube of side `r / √n` has diameter `r`, so the number of occupied mesh
//! cubes of that side is within dimension-dependent factors of the minimum
//! number of sets of diameter `r` needed to cover the set. Cubes are half-open
//! (`floor` indexing), so a point on a shared face lands in exactly one cube;
//! faces are shifted down by [`FACE_SNAP`] of a cube side to absorb rounding.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::capacity::check_r_grid;
use crate::error::{Error, Result};
use crate::pointset::PointSet;

/// Points within this fraction of a cube side below a face are counted in the
/// cube above it, so sample points that should sit exactly on a face but were
/// rounded just below it do not occupy a spurious neighbour.
pub const FACE_SNAP: f64 = 1e-9;

/// Largest cube index magnitude accepted before the mesh is considered degenerate.
const MAX_INDEX: f64 = (1u64 << 62) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCountResult {
    pub r: f64,
    pub cube_side: f64,
    pub count: usize,
}

fn cell_indices(e: &PointSet, r: f64) -> Result<(f64, Vec<i64>)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("box size r = {r} must be finite and > 0")));
    }
    let n = e.ambient_dim();
    let sqrt_n = (n as f64).sqrt();
    let mut idx = Vec::with_capacity(e.coords().len());
    for &c in e.coords() {
        let v = (c * sqrt_n / r + FACE_SNAP).floor();
        if !(v.abs() < MAX_INDEX) {
            return Err(Error::invalid(format!(
                "box size r = {r} too small: mesh index overflows"
            )));
        }
        idx.push(v as i64);
    }
    Ok((r / sqrt_n, idx))
}

/// Number of occupied half-open mesh cubes of diameter `r`.
pub fn mesh_count(e: &PointSet, r: f64) -> Result<BoxCountResult> {
    let (cube_side, idx) = cell_indices(e, r)?;
    let n = e.ambient_dim();
    let count = match n {
        1 => idx.iter().collect::<HashSet<_>>().len(),
        _ => idx.chunks_exact(n).collect::<HashSet<_>>().len(),
    };
    Ok(BoxCountResult {
        r,
        cube_side,
        count,
    })
}

/// One mesh count per scale of a strictly decreasing grid.
pub fn count_curve(e: &PointSet, r_grid: &[f64]) -> Result<Vec<BoxCountResult>> {
    check_r_grid(r_grid)?;
    r_grid
        .iter()
        .map(|&r| {
            mesh_count(e, r).map_err(|err| Error::AtScale {
                r,
                source: Box::new(err),
            })
        })
        .collect()
}

/// The first point (in set order) of every occupied mesh cube of diameter `r`.
///
/// Every point of `e` lies within distance `r` of some returned point, and the
/// result has exactly `mesh_count(e, r).count` points.
pub fn mesh_representatives(e: &PointSet, r: f64) -> Result<PointSet> {
    let (_, idx) = cell_indices(e, r)?;
    let n = e.ambient_dim();
    let mut seen = HashSet::new();
    let keep: Vec<usize> = idx
        .chunks_exact(n)
        .enumerate()
        .filter(|(_, cell)| seen.insert(*cell))
        .map(|(i, _)| i)
        .collect();
    e.select(&keep)
}

impl BoxCountResult {
    pub fn csv_header() -> &'static str {
        "r,cube_side,count"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.r, self.cube_side, self.count)
    }
}
