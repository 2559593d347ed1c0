//! Scaling rates (%/K) of global-mean quantities against global-mean surface
//! temperature, checked against expected bands.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calendar::Calendar;
use crate::dataset::{Dataset, Dim};
use crate::error::{Error, Result};
use crate::grid::{global_mean, CompensatedSum};

pub const WATER_VAPOR_BAND: (f64, f64) = (6.0, 8.0);
pub const PRECIP_BAND: (f64, f64) = (1.0, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub rate_pct_per_k: f64,
    pub stderr_pct_per_k: f64,
    pub n_samples: usize,
    pub band: Option<(f64, f64)>,
    pub passed: Option<bool>,
}

impl ScalingResult {
    /// Attaches an inclusive band and the resulting verdict.
    pub fn with_band(mut self, band: (f64, f64)) -> Self {
        self.band = Some(band);
        self.passed = Some(band.0 <= self.rate_pct_per_k && self.rate_pct_per_k <= band.1);
        self
    }
}

/// OLS of ln x on t. The rate is 100 × slope; the standard error comes from
/// the residual variance with n − 2 degrees of freedom.
pub fn scaling_rate(x: &[f64], t: &[f64]) -> Result<ScalingResult> {
    if x.len() != t.len() {
        return Err(Error::Shape(format!("{} values vs {} temperatures", x.len(), t.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "scaling rate needs 3 samples, have {n}"
        )));
    }
    if let Some(bad) = x.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("scaling rate needs positive values, got {bad}")));
    }
    let y: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let nf = n as f64;
    let tm = t.iter().copied().collect::<CompensatedSum>().value() / nf;
    let ym = y.iter().copied().collect::<CompensatedSum>().value() / nf;
    let sxx = t
        .iter()
        .map(|v| (v - tm) * (v - tm))
        .collect::<CompensatedSum>()
        .value();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("temperature series has zero variance".into()));
    }
    let sxy = t
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - tm) * (b - ym))
        .collect::<CompensatedSum>()
        .value();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ssr = t
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .collect::<CompensatedSum>()
        .value();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(ScalingResult {
        rate_pct_per_k: 100.0 * slope,
        stderr_pct_per_k: 100.0 * stderr,
        n_samples: n,
        band: None,
        passed: None,
    })
}

/// Annual means of the global mean of a (time, lat, lon) variable, one per
/// calendar year. Years with fewer samples than the fullest year are
/// dropped. Without a `calendar` attribute the no-leap calendar is used.
pub fn annual_global_means(ds: &Dataset, variable: &str) -> Result<Vec<(i64, f64)>> {
    let planes = ds.planes(variable)?;
    if !planes.field().has(Dim::Time) || planes.field().has(Dim::Level) {
        return Err(Error::Shape(format!("`{variable}` must be (time, lat, lon)")));
    }
    let calendar = if ds.attrs.contains_key("calendar") {
        Calendar::of(ds)?
    } else {
        Calendar::NoLeap
    };
    let mut years: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for t in 0..planes.ntime {
        let g = global_mean(planes.get(t, 0), &ds.grid)?;
        years.entry(calendar.decompose(ds.time_s[t]).year).or_default().push(g);
    }
    let full = years.values().map(Vec::len).max().unwrap_or(0);
    Ok(years
        .into_iter()
        .filter(|(_, v)| v.len() == full)
        .map(|(y, v)| {
            (
                y,
                v.iter().copied().collect::<CompensatedSum>().value() / v.len() as f64,
            )
        })
        .collect())
}

fn annual_scaling(ds: &Dataset, variable: &str, band: (f64, f64)) -> Result<ScalingResult> {
    let x = annual_global_means(ds, variable)?;
    let t = annual_global_means(ds, "tas")?;
    let tmap: BTreeMap<i64, f64> = t.into_iter().collect();
    let (xs, ts): (Vec<f64>, Vec<f64>) = x
        .into_iter()
        .filter_map(|(y, v)| tmap.get(&y).map(|tv| (v, *tv)))
        .unzip();
    Ok(scaling_rate(&xs, &ts)?.with_band(band))
}

/// Column water vapor (`tcwv`) against `tas`, default band 6–8 %/K.
pub fn check_water_vapor_constraint(ds: &Dataset) -> Result<ScalingResult> {
    check_water_vapor_constraint_with(ds, WATER_VAPOR_BAND)
}

pub fn check_water_vapor_constraint_with(ds: &Dataset, band: (f64, f64)) -> Result<ScalingResult> {
    annual_scaling(ds, "tcwv", band)
}

/// Precipitation (`pr`) against `tas`, default band 1–2 %/K.
pub fn check_precip_constraint(ds: &Dataset) -> Result<ScalingResult> {
    check_precip_constraint_with(ds, PRECIP_BAND)
}

pub fn check_precip_constraint_with(ds: &Dataset, band: (f64, f64)) -> Result<ScalingResult> {
    annual_scaling(ds, "pr", band)
}
