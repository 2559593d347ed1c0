//! Regular latitude-longitude sphere geometry and area-weighted statistics.
//!
//! Angles are stored in degrees on the public surface (that is what files and
//! the command line speak) and converted to radians at the point of use.
//! Masked cells are NaN and are excluded from every reduction; weights are
//! renormalized over the remaining cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6.371e6;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator of values.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Description of a regular latitude-longitude grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    lat_deg: Vec<f64>,
    lon_deg: Vec<f64>,
    radius_m: f64,
}

impl GridSpec {
    /// Builds a grid from cell-center coordinates.
    ///
    /// Latitudes must be strictly increasing inside [-90, 90]; a center placed
    /// exactly on a pole is accepted and receives zero weight. Longitudes
    /// must lie in [0, 360) with uniform spacing `360 / nlon`.
    pub fn new(lat_deg: Vec<f64>, lon_deg: Vec<f64>, radius_m: f64) -> Result<Self> {
        if lat_deg.is_empty() || lon_deg.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if lat_deg.len() < 2 {
            return Err(Error::InvalidGrid(format!("nlat = {} < 2", lat_deg.len())));
        }
        if lon_deg.len() < 4 {
            return Err(Error::InvalidGrid(format!("nlon = {} < 4", lon_deg.len())));
        }
        if !(radius_m.is_finite() && radius_m > 0.0) {
            return Err(Error::InvalidGrid(format!("radius {radius_m} m is not positive")));
        }
        for (j, &lat) in lat_deg.iter().enumerate() {
            if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
                return Err(Error::InvalidGrid(format!("latitude {lat} out of range at row {j}")));
            }
            if j > 0 && lat <= lat_deg[j - 1] {
                return Err(Error::InvalidGrid(format!(
                    "latitudes not strictly increasing at row {j}"
                )));
            }
        }
        let nlon = lon_deg.len();
        let spacing = 360.0 / nlon as f64;
        for (k, &lon) in lon_deg.iter().enumerate() {
            if !lon.is_finite() || !(0.0..360.0).contains(&lon) {
                return Err(Error::InvalidGrid(format!("longitude {lon} out of [0, 360)")));
            }
            let expected = lon_deg[0] + k as f64 * spacing;
            if ((lon - expected) / spacing).abs() > 1e-12 * nlon as f64 {
                return Err(Error::InvalidGrid(format!(
                    "longitude spacing not uniform at column {k}"
                )));
            }
        }
        Ok(Self {
            lat_deg,
            lon_deg,
            radius_m,
        })
    }

    /// Equal-angle grid with cell centers offset half a cell from the poles and
    /// the first longitude at 0.
    pub fn regular(nlat: usize, nlon: usize) -> Result<Self> {
        Self::regular_with_radius(nlat, nlon, EARTH_RADIUS_M)
    }

    pub fn regular_with_radius(nlat: usize, nlon: usize, radius_m: f64) -> Result<Self> {
        if nlat == 0 || nlon == 0 {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        let dlat = 180.0 / nlat as f64;
        let dlon = 360.0 / nlon as f64;
        let lat = (0..nlat).map(|j| -90.0 + (j as f64 + 0.5) * dlat).collect();
        let lon = (0..nlon).map(|k| k as f64 * dlon).collect();
        Self::new(lat, lon, radius_m)
    }

    pub fn nlat(&self) -> usize {
        self.lat_deg.len()
    }

    pub fn nlon(&self) -> usize {
        self.lon_deg.len()
    }

    /// Number of horizontal cells.
    pub fn ncell(&self) -> usize {
        self.nlat() * self.nlon()
    }

    pub fn lat_deg(&self) -> &[f64] {
        &self.lat_deg
    }

    pub fn lon_deg(&self) -> &[f64] {
        &self.lon_deg
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn lat_rad(&self, j: usize) -> f64 {
        self.lat_deg[j].to_radians()
    }

    pub fn lon_rad(&self, k: usize) -> f64 {
        self.lon_deg[k].to_radians()
    }

    pub fn dlon_deg(&self) -> f64 {
        360.0 / self.nlon() as f64
    }

    pub fn dlon_rad(&self) -> f64 {
        self.dlon_deg().to_radians()
    }

    /// cos(latitude) of each row, with exact zeros on the poles.
    pub fn cos_lat(&self) -> Vec<f64> {
        self.lat_deg
            .iter()
            .map(|&lat| if lat.abs() == 90.0 { 0.0 } else { lat.to_radians().cos() })
            .collect()
    }

    /// Latitude bounds (south, north) of row `j` in degrees: midpoints between
    /// neighbouring centers, closed by the poles.
    pub fn lat_bounds_deg(&self, j: usize) -> (f64, f64) {
        let south = if j == 0 {
            -90.0
        } else {
            0.5 * (self.lat_deg[j - 1] + self.lat_deg[j])
        };
        let north = if j + 1 == self.nlat() {
            90.0
        } else {
            0.5 * (self.lat_deg[j] + self.lat_deg[j + 1])
        };
        (south, north)
    }

    /// True when latitude centers are equally spaced and offset half a cell
    /// from both poles.
    pub fn is_equal_angle(&self) -> bool {
        let dlat = 180.0 / self.nlat() as f64;
        self.lat_deg
            .iter()
            .enumerate()
            .all(|(j, &lat)| (lat - (-90.0 + (j as f64 + 0.5) * dlat)).abs() <= 1e-9 * dlat)
    }

    /// Flat row-major index of cell (j, k).
    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.nlon() + k
    }

    /// Cell containing the point (degrees). A point lying exactly on a cell
    /// boundary does not map to exactly one cell and is rejected.
    pub fn locate(&self, lat: f64, lon: f64) -> Result<(usize, usize)> {
        if !(-90.0..=90.0).contains(&lat) || !lon.is_finite() {
            return Err(Error::Config(format!("point ({lat}, {lon}) out of range")));
        }
        let mut row = None;
        for j in 0..self.nlat() {
            let (s, n) = self.lat_bounds_deg(j);
            if lat == s && j > 0 || lat == n && j + 1 < self.nlat() {
                return Err(Error::Config(format!("latitude {lat} lies on a cell boundary")));
            }
            if lat >= s && lat <= n {
                row = Some(j);
                break;
            }
        }
        let j = row.ok_or_else(|| Error::Config(format!("latitude {lat} not on grid")))?;
        let dlon = self.dlon_deg();
        let rel = (lon - self.lon_deg[0] + 0.5 * dlon).rem_euclid(360.0) / dlon;
        if rel.fract() == 0.0 {
            return Err(Error::Config(format!("longitude {lon} lies on a cell boundary")));
        }
        let k = (rel.floor() as usize) % self.nlon();
        Ok((j, k))
    }

    /// Smallest grid spacing that a feature radius must exceed: the larger
    /// of the widest meridional cell and the equatorial zonal spacing.
    pub fn max_spacing_m(&self) -> f64 {
        let dlat = (0..self.nlat())
            .map(|j| {
                let (s, n) = self.lat_bounds_deg(j);
                n - s
            })
            .fold(0.0_f64, f64::max);
        self.radius_m * dlat.max(self.dlon_deg()).to_radians()
    }
}

/// Per-cell area weights, row-major (lat, lon), proportional to cos(latitude)
/// and normalized to unit sum.
pub fn area_weights(grid: &GridSpec) -> Vec<f64> {
    let cos = grid.cos_lat();
    let nlon = grid.nlon();
    let norm = compensated_sum(cos.iter().map(|&c| c * nlon as f64));
    let mut w = Vec::with_capacity(grid.ncell());
    for &c in &cos {
        let wj = c / norm;
        w.extend(std::iter::repeat_n(wj, nlon));
    }
    w
}

fn check_plane(values: &[f64], grid: &GridSpec) -> Result<()> {
    if values.len() != grid.ncell() {
        return Err(Error::Shape(format!(
            "field has {} values, grid has {} cells",
            values.len(),
            grid.ncell()
        )));
    }
    Ok(())
}

/// Area-weighted mean of one (lat, lon) plane over unmasked cells.
pub fn global_mean(values: &[f64], grid: &GridSpec) -> Result<f64> {
    check_plane(values, grid)?;
    let cos = grid.cos_lat();
    let nlon = grid.nlon();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (j, row) in values.chunks_exact(nlon).enumerate() {
        for &v in row {
            if !v.is_nan() {
                num.add(cos[j] * v);
                den.add(cos[j]);
            }
        }
    }
    let den = den.value();
    if den <= 0.0 {
        return Err(Error::UndefinedMean("all cells masked".into()));
    }
    Ok(num.value() / den)
}

/// Result of a zonal mean: one value per latitude row.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalMean {
    pub values: Vec<f64>,
    /// Set when at least one row was fully masked (its entry is NaN).
    pub masked_rows: bool,
}

/// Arithmetic mean over unmasked longitudes of each latitude row.
pub fn zonal_mean(values: &[f64], grid: &GridSpec) -> Result<ZonalMean> {
    check_plane(values, grid)?;
    let mut masked_rows = false;
    let out = values
        .chunks_exact(grid.nlon())
        .map(|row| {
            let mut s = CompensatedSum::new();
            let mut n = 0usize;
            for &v in row.iter().filter(|v| !v.is_nan()) {
                s.add(v);
                n += 1;
            }
            if n == 0 {
                masked_rows = true;
                f64::NAN
            } else {
                s.value() / n as f64
            }
        })
        .collect();
    Ok(ZonalMean {
        values: out,
        masked_rows,
    })
}

/// cos-weighted mean of a per-latitude profile (NaN rows skipped).
pub fn meridional_mean(profile: &[f64], grid: &GridSpec) -> Result<f64> {
    if profile.len() != grid.nlat() {
        return Err(Error::Shape(format!(
            "profile has {} rows, grid has {}",
            profile.len(),
            grid.nlat()
        )));
    }
    let cos = grid.cos_lat();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (c, &v) in cos.iter().zip(profile) {
        if !v.is_nan() {
            num.add(c * v);
            den.add(*c);
        }
    }
    if den.value() <= 0.0 {
        return Err(Error::UndefinedMean("all rows masked".into()));
    }
    Ok(num.value() / den.value())
}

/// Haversine distance in meters between two (lat, lon) points in degrees.
pub fn great_circle_distance(p1: (f64, f64), p2: (f64, f64), radius_m: f64) -> f64 {
    let (phi1, lam1) = (p1.0.to_radians(), p1.1.to_radians());
    let (phi2, lam2) = (p2.0.to_radians(), p2.1.to_radians());
    let sdphi = ((phi2 - phi1) * 0.5).sin();
    let sdlam = ((lam2 - lam1) * 0.5).sin();
    let h = sdphi * sdphi + phi1.cos() * phi2.cos() * sdlam * sdlam;
    2.0 * radius_m * h.clamp(0.0, 1.0).sqrt().asin()
}
