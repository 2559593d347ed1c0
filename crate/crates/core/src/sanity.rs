//! Conservation and physical-bound checks on a dataset.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Dim};
use crate::error::{Error, Result};
use crate::grid::{area_weights, compensated_sum, global_mean};

/// Standard gravity, m s⁻².
pub const GRAVITY: f64 = 9.80665;

/// Numerical grace below the non-negativity floor.
pub const NONNEG_GRACE: f64 = 1e-12;

pub const DEFAULT_MASS_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_PRECIP_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_RH_MAX: f64 = 1.01;
pub const DEFAULT_MAX_EXCEED_FRAC: f64 = 1e-4;

const MAX_OFFENDERS: usize = 10;

/// Acceptance rule applied to a check statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Criterion {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Within { lo: f64, hi: f64 },
}

impl Criterion {
    pub fn admits(&self, x: f64) -> bool {
        match *self {
            Criterion::AtMost { limit } => x <= limit,
            Criterion::AtLeast { limit } => x >= limit,
            Criterion::Within { lo, hi } => lo <= x && x <= hi,
        }
    }
}

/// A grid location and value that contributed to a check failing (or came
/// closest to failing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub time: usize,
    pub level: Option<usize>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    #[serde(with = "nan_as_null")]
    pub value: f64,
}

/// Non-finite values have no JSON literal; NaN travels as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Verdict of one check with its quantitative evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: String,
    pub passed: bool,
    #[serde(with = "nan_as_null")]
    pub statistic: f64,
    pub criterion: Criterion,
    /// Most severe first, at most ten.
    pub worst_offenders: Vec<Offender>,
    pub notes: String,
}

impl CheckResult {
    /// `passed` is derived from the criterion, never set independently.
    pub fn new(check_id: impl Into<String>, statistic: f64, criterion: Criterion) -> Self {
        Self {
            check_id: check_id.into(),
            passed: criterion.admits(statistic),
            statistic,
            criterion,
            worst_offenders: Vec::new(),
            notes: String::new(),
        }
    }

    pub fn with_offenders(mut self, offenders: Vec<Offender>) -> Self {
        self.worst_offenders = offenders;
        self
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = notes.into();
        self
    }
}

/// Keeps the `MAX_OFFENDERS` entries with the largest severity, sorted
/// most severe first. Ties break on position so the order is deterministic.
#[derive(Debug, Default)]
struct OffenderHeap {
    items: Vec<(f64, Offender)>,
}

impl OffenderHeap {
    fn push(&mut self, severity: f64, offender: Offender) {
        if self.items.len() == MAX_OFFENDERS && severity <= self.items.last().map_or(f64::NEG_INFINITY, |x| x.0) {
            return;
        }
        let pos = self.items.partition_point(|(s, _)| *s >= severity);
        self.items.insert(pos, (severity, offender));
        self.items.truncate(MAX_OFFENDERS);
    }

    fn into_vec(self) -> Vec<Offender> {
        self.items.into_iter().map(|(_, o)| o).collect()
    }
}

fn require_time(ds: &Dataset, name: &str) -> Result<()> {
    if !ds.variable(name)?.has(Dim::Time) {
        return Err(Error::Shape(format!("`{name}` has no time dimension")));
    }
    Ok(())
}

/// Relative drift of a global integral, `max_t |M(t) - M(0)| / |M(0)|`.
fn drift_result(check_id: &str, mass: &[f64], tolerance_rel: f64, notes: String) -> Result<CheckResult> {
    if mass.len() < 2 {
        return Err(Error::InsufficientData(
            "mass conservation needs at least two timesteps".into(),
        ));
    }
    let m0 = mass[0];
    if m0 == 0.0 {
        return Err(Error::Degenerate("initial global mass is zero".into()));
    }
    let mut heap = OffenderHeap::default();
    let mut worst = 0.0_f64;
    for (t, &m) in mass.iter().enumerate().skip(1) {
        let drift = ((m - m0) / m0).abs();
        worst = worst.max(drift);
        heap.push(
            drift,
            Offender {
                time: t,
                level: None,
                lat: None,
                lon: None,
                value: (m - m0) / m0,
            },
        );
    }
    Ok(
        CheckResult::new(check_id, worst, Criterion::AtMost { limit: tolerance_rel })
            .with_offenders(heap.into_vec())
            .with_notes(notes),
    )
}

/// Global atmospheric mass from surface pressure `ps`; when `tcwv` is
/// present the dry mass `ps/g − tcwv` is used instead.
pub fn check_mass_conservation(ds: &Dataset, tolerance_rel: f64) -> Result<CheckResult> {
    require_time(ds, "ps")?;
    let ps = ds.planes("ps")?;
    let dry = ds.has_variable("tcwv");
    let tcwv = if dry { Some(ds.planes("tcwv")?) } else { None };
    let mut mass = Vec::with_capacity(ps.ntime);
    for t in 0..ps.ntime {
        let plane = ps.get(t, 0);
        let m = match &tcwv {
            Some(w) => {
                let col: Vec<f64> = plane.iter().zip(w.get(t, 0)).map(|(p, q)| p / GRAVITY - q).collect();
                global_mean(&col, &ds.grid)?
            }
            None => global_mean(plane, &ds.grid)? / GRAVITY,
        };
        mass.push(m);
    }
    let notes = if dry {
        "dry-air mass from ps/g - tcwv"
    } else {
        "total mass from ps/g"
    };
    drift_result("mass_conservation", &mass, tolerance_rel, notes.into())
}

/// Drift of the area-weighted integral of an arbitrary conserved tracer.
pub fn check_tracer_mass_conservation(ds: &Dataset, variable: &str, tolerance_rel: f64) -> Result<CheckResult> {
    require_time(ds, variable)?;
    let planes = ds.planes(variable)?;
    if planes.nlevel > 1 {
        return Err(Error::Shape(format!("`{variable}` must be single-level")));
    }
    let mass = (0..planes.ntime)
        .map(|t| global_mean(planes.get(t, 0), &ds.grid))
        .collect::<Result<Vec<_>>>()?;
    drift_result(
        &format!("mass_conservation:{variable}"),
        &mass,
        tolerance_rel,
        format!("area-weighted integral of `{variable}`"),
    )
}

/// Minimum over the named tracers must not fall below `floor` (less the
/// numerical grace).
pub fn check_nonnegative_tracers(ds: &Dataset, tracer_names: &[&str], floor: f64) -> Result<CheckResult> {
    if tracer_names.is_empty() {
        return Err(Error::Config("no tracers named".into()));
    }
    let mut heap = OffenderHeap::default();
    let mut min = f64::INFINITY;
    for &name in tracer_names {
        let planes = ds.planes(name)?;
        for t in 0..planes.ntime {
            for l in 0..planes.nlevel {
                for (i, &v) in planes.get(t, l).iter().enumerate() {
                    if v.is_nan() {
                        continue;
                    }
                    min = min.min(v);
                    if v < floor - NONNEG_GRACE {
                        let (j, k) = (i / ds.grid.nlon(), i % ds.grid.nlon());
                        heap.push(
                            -v,
                            Offender {
                                time: t,
                                level: planes.field().has(Dim::Level).then_some(l),
                                lat: Some(ds.grid.lat_deg()[j]),
                                lon: Some(ds.grid.lon_deg()[k]),
                                value: v,
                            },
                        );
                    }
                }
            }
        }
    }
    if min == f64::INFINITY {
        return Err(Error::InsufficientData("tracers are fully masked".into()));
    }
    Ok(CheckResult::new(
        "nonnegative_tracers",
        min,
        Criterion::AtLeast {
            limit: floor - NONNEG_GRACE,
        },
    )
    .with_offenders(heap.into_vec())
    .with_notes(format!("tracers: {}", tracer_names.join(","))))
}

/// Precipitation within a step may not exceed the column water available at
/// the start of the step plus evaporation: `v = pr·dt − (tcwv + evap·dt)`.
pub fn check_precip_column_budget(ds: &Dataset, dt_s: f64, tolerance: f64) -> Result<CheckResult> {
    if !(dt_s > 0.0) {
        return Err(Error::Config(format!("timestep {dt_s} s is not positive")));
    }
    let pr = ds.planes("pr")?;
    let tcwv = ds.planes("tcwv")?;
    let evap = if ds.has_variable("evap") {
        Some(ds.planes("evap")?)
    } else {
        None
    };
    if pr.ntime != tcwv.ntime {
        return Err(Error::Shape("pr and tcwv time axes differ".into()));
    }
    let mut heap = OffenderHeap::default();
    let mut worst = f64::NEG_INFINITY;
    let nlon = ds.grid.nlon();
    for t in 0..pr.ntime {
        let p = pr.get(t, 0);
        let w = tcwv.get(t, 0);
        let e = evap.as_ref().map(|e| e.get(t, 0));
        for i in 0..p.len() {
            let supply = w[i] + e.map_or(0.0, |e| e[i] * dt_s);
            let v = p[i] * dt_s - supply;
            if v.is_nan() {
                continue;
            }
            worst = worst.max(v);
            if v > tolerance {
                heap.push(
                    v,
                    Offender {
                        time: t,
                        level: None,
                        lat: Some(ds.grid.lat_deg()[i / nlon]),
                        lon: Some(ds.grid.lon_deg()[i % nlon]),
                        value: v,
                    },
                );
            }
        }
    }
    if worst == f64::NEG_INFINITY {
        return Err(Error::InsufficientData("precipitation is fully masked".into()));
    }
    let notes = if evap.is_some() {
        "supply = tcwv + evap*dt"
    } else {
        "supply = tcwv (no evaporation field)"
    };
    Ok(
        CheckResult::new("precip_column_budget", worst, Criterion::AtMost { limit: tolerance })
            .with_offenders(heap.into_vec())
            .with_notes(notes),
    )
}

/// Saturation vapour pressure over water (Pa), Magnus form.
pub fn saturation_vapor_pressure(t_k: f64) -> f64 {
    610.94 * (17.625 * (t_k - 273.15) / (t_k - 30.11)).exp()
}

/// Vapour pressure (Pa) from specific humidity and pressure.
pub fn vapor_pressure(q: f64, p_pa: f64) -> f64 {
    q * p_pa / (0.622 + 0.378 * q)
}

/// Relative humidity e/e_s.
pub fn relative_humidity(t_k: f64, q: f64, p_pa: f64) -> f64 {
    vapor_pressure(q, p_pa) / saturation_vapor_pressure(t_k)
}

/// Specific humidity whose vapour pressure equals `rh · e_s(T)` at `p`.
pub fn specific_humidity_at_rh(t_k: f64, p_pa: f64, rh: f64) -> f64 {
    let e = rh * saturation_vapor_pressure(t_k);
    0.622 * e / (p_pa - 0.378 * e)
}

/// Pressure range (Pa, inclusive) selecting near-surface levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBand {
    pub p_min_pa: f64,
    pub p_max_pa: f64,
}

impl Default for LevelBand {
    fn default() -> Self {
        Self {
            p_min_pa: 85_000.0,
            p_max_pa: 110_000.0,
        }
    }
}

/// Fraction of (time, level, cell) samples in the band whose relative
/// humidity exceeds `rh_max`.
pub fn check_supersaturation(ds: &Dataset, rh_max: f64, band: LevelBand, max_exceed_frac: f64) -> Result<CheckResult> {
    let levels = ds
        .level_pa
        .as_ref()
        .ok_or_else(|| Error::Shape("supersaturation check needs a level axis".into()))?;
    let ta = ds.planes("ta")?;
    let q = ds.planes("q")?;
    for (name, p) in [("ta", &ta), ("q", &q)] {
        if !p.field().has(Dim::Level) {
            return Err(Error::Shape(format!("`{name}` has no level dimension")));
        }
    }
    let selected: Vec<usize> = levels
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= band.p_min_pa && p <= band.p_max_pa)
        .map(|(l, _)| l)
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(format!(
            "level band [{}, {}] Pa selects no levels",
            band.p_min_pa, band.p_max_pa
        )));
    }
    let nlon = ds.grid.nlon();
    let mut heap = OffenderHeap::default();
    let mut exceed = 0usize;
    let mut total = 0usize;
    for t in 0..ta.ntime {
        for &l in &selected {
            let p = levels[l];
            for (i, (&temp, &hum)) in ta.get(t, l).iter().zip(q.get(t, l)).enumerate() {
                if temp.is_nan() || hum.is_nan() {
                    continue;
                }
                total += 1;
                let rh = relative_humidity(temp, hum, p);
                if rh > rh_max {
                    exceed += 1;
                    heap.push(
                        rh,
                        Offender {
                            time: t,
                            level: Some(l),
                            lat: Some(ds.grid.lat_deg()[i / nlon]),
                            lon: Some(ds.grid.lon_deg()[i % nlon]),
                            value: rh,
                        },
                    );
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::InsufficientData("no unmasked samples in band".into()));
    }
    let frac = exceed as f64 / total as f64;
    Ok(
        CheckResult::new("supersaturation", frac, Criterion::AtMost { limit: max_exceed_frac })
            .with_offenders(heap.into_vec())
            .with_notes(format!("{exceed} of {total} samples above RH {rh_max}")),
    )
}

/// Area-weighted global integral helper shared with toy-model tests.
pub fn weighted_total(values: &[f64], weights: &[f64]) -> f64 {
    compensated_sum(values.iter().zip(weights).map(|(v, w)| v * w))
}

/// Convenience for callers holding only a grid.
pub fn tracer_total(values: &[f64], grid: &crate::grid::GridSpec) -> f64 {
    weighted_total(values, &area_weights(grid))
}
