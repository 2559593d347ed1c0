//! Closed-contour pressure minima and radial composites around them.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Dim};
use crate::error::{Error, Result};
use crate::grid::{great_circle_distance, GridSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCandidate {
    pub time: usize,
    pub lat: f64,
    pub lon: f64,
    /// Pressure at the center, Pa.
    pub value: f64,
    /// Rise above the center value at which the connected low region first
    /// reaches beyond the search radius, Pa.
    pub depth: f64,
    pub closed: bool,
}

/// Cells adjacent to (j, k): eight neighbors with periodic longitude and no
/// wrap across the poles.
fn neighbors(grid: &GridSpec, j: usize, k: usize) -> impl Iterator<Item = (usize, usize)> {
    let (nlat, nlon) = (grid.nlat() as i64, grid.nlon() as i64);
    let (j, k) = (j as i64, k as i64);
    (-1..=1i64)
        .flat_map(move |dj| (-1..=1i64).map(move |dk| (dj, dk)))
        .filter(|&(dj, dk)| dj != 0 || dk != 0)
        .filter_map(move |(dj, dk)| {
            let jj = j + dj;
            (0..nlat)
                .contains(&jj)
                .then(|| (jj as usize, (k + dk).rem_euclid(nlon) as usize))
        })
}

fn cell_center(grid: &GridSpec, i: usize) -> (f64, f64) {
    (grid.lat_deg()[i / grid.nlon()], grid.lon_deg()[i % grid.nlon()])
}

fn is_strict_min(grid: &GridSpec, plane: &[f64], i: usize) -> bool {
    let v = plane[i];
    if v.is_nan() {
        return false;
    }
    let (j, k) = (i / grid.nlon(), i % grid.nlon());
    neighbors(grid, j, k).all(|(jj, kk)| {
        let n = plane[grid.index(jj, kk)];
        n.is_nan() || v < n
    })
}

/// Lowest level at which a region grown from `start` reaches a cell farther
/// than `radius_m` from it, relative to the start value. Infinite when every
/// reachable cell lies within the radius.
fn spill_depth(grid: &GridSpec, plane: &[f64], start: usize, radius_m: f64) -> f64 {
    let center = cell_center(grid, start);
    let base = plane[start];
    let mut seen = vec![false; plane.len()];
    let mut heap = BinaryHeap::new();
    // Levels are non-negative offsets; ordering by bit pattern is monotone
    // for non-negative floats.
    heap.push(Reverse((0.0f64.to_bits(), start)));
    seen[start] = true;
    while let Some(Reverse((bits, i))) = heap.pop() {
        let level = f64::from_bits(bits);
        if great_circle_distance(center, cell_center(grid, i), grid.radius_m()) > radius_m {
            return level;
        }
        let (j, k) = (i / grid.nlon(), i % grid.nlon());
        for (jj, kk) in neighbors(grid, j, k) {
            let n = grid.index(jj, kk);
            if seen[n] || plane[n].is_nan() {
                continue;
            }
            seen[n] = true;
            let l = level.max(plane[n] - base).max(0.0);
            heap.push(Reverse((l.to_bits(), n)));
        }
    }
    f64::INFINITY
}

/// Cells connected to `start` with value below `threshold`, within `radius_m`.
fn filled_region(grid: &GridSpec, plane: &[f64], start: usize, threshold: f64, radius_m: f64) -> Vec<usize> {
    let center = cell_center(grid, start);
    let mut seen = vec![false; plane.len()];
    let mut out = vec![start];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        let (j, k) = (i / grid.nlon(), i % grid.nlon());
        for (jj, kk) in neighbors(grid, j, k) {
            let n = grid.index(jj, kk);
            if seen[n] {
                continue;
            }
            seen[n] = true;
            if plane[n] < threshold && great_circle_distance(center, cell_center(grid, n), grid.radius_m()) <= radius_m
            {
                out.push(n);
                queue.push_back(n);
            }
        }
    }
    out
}

fn detect_plane(grid: &GridSpec, plane: &[f64], time: usize, delta_p: f64, radius_m: f64) -> Vec<FeatureCandidate> {
    let mut minima: Vec<usize> = (0..plane.len()).filter(|&i| is_strict_min(grid, plane, i)).collect();
    minima.sort_by(|&a, &b| plane[a].total_cmp(&plane[b]).then(a.cmp(&b)));
    let mut claimed = vec![false; plane.len()];
    let mut out = Vec::new();
    for i in minima {
        if claimed[i] {
            continue;
        }
        let depth = spill_depth(grid, plane, i, radius_m);
        for c in filled_region(grid, plane, i, plane[i] + delta_p, radius_m) {
            claimed[c] = true;
        }
        let (lat, lon) = cell_center(grid, i);
        out.push(FeatureCandidate {
            time,
            lat,
            lon,
            value: plane[i],
            depth,
            closed: depth >= delta_p,
        });
    }
    out
}

/// Strict local minima of a (time, lat, lon) pressure field, each flagged
/// closed when the region below `value + delta_p` connected to it stays
/// within `max_radius_m`. Minima that fall inside the filled region of a
/// deeper one are dropped.
pub fn detect_pressure_minima(
    ds: &Dataset,
    msl_var: &str,
    delta_p: f64,
    max_radius_m: f64,
) -> Result<Vec<Vec<FeatureCandidate>>> {
    if !(delta_p > 0.0) {
        return Err(Error::Config(format!(
            "contour interval must be positive, got {delta_p}"
        )));
    }
    let spacing = ds.grid.max_spacing_m();
    if !(max_radius_m > spacing) {
        return Err(Error::Config(format!(
            "search radius {max_radius_m} m must exceed the grid spacing {spacing:.0} m"
        )));
    }
    let planes = ds.planes(msl_var)?;
    if planes.field().has(Dim::Level) {
        return Err(Error::Shape(format!("`{msl_var}` must be (time, lat, lon)")));
    }
    Ok((0..planes.ntime)
        .into_par_iter()
        .map(|t| detect_plane(&ds.grid, planes.get(t, 0), t, delta_p, max_radius_m))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialComposite {
    /// Bin edges in meters, `n_bins + 1` values from 0 to the max radius.
    pub bin_edges_m: Vec<f64>,
    /// Mean per bin; NaN where no sample fell in the bin.
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Unweighted mean of `variable` in distance bins around each center
/// `(time, lat, lon)`. Time-independent variables ignore the time index.
pub fn radial_composite(
    ds: &Dataset,
    variable: &str,
    centers: &[(usize, f64, f64)],
    n_bins: usize,
    max_radius_m: f64,
) -> Result<RadialComposite> {
    if n_bins == 0 {
        return Err(Error::Config("radial composite needs at least one bin".into()));
    }
    if !(max_radius_m > 0.0) {
        return Err(Error::Config("radial composite radius must be positive".into()));
    }
    if centers.is_empty() {
        return Err(Error::InsufficientData(
            "radial composite needs at least one center".into(),
        ));
    }
    let planes = ds.planes(variable)?;
    if planes.field().has(Dim::Level) {
        return Err(Error::Shape(format!("`{variable}` must not have a level dim")));
    }
    let grid = &ds.grid;
    let width = max_radius_m / n_bins as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for &(t, lat, lon) in centers {
        let t = if planes.field().has(Dim::Time) { t } else { 0 };
        if t >= planes.ntime {
            return Err(Error::Config(format!("center time index {t} out of range")));
        }
        let plane = planes.get(t, 0);
        for (i, &v) in plane.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            let d = great_circle_distance((lat, lon), cell_center(grid, i), grid.radius_m());
            if d > max_radius_m {
                continue;
            }
            let b = ((d / width) as usize).min(n_bins - 1);
            sums[b] += v;
            counts[b] += 1;
        }
    }
    Ok(RadialComposite {
        bin_edges_m: (0..=n_bins).map(|b| b as f64 * width).collect(),
        values: sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect(),
        counts,
    })
}
