//! Performance metrics: seasonal climatologies, area-weighted RMSE and the
//! median-normalized portrait, zonal power spectra, temporal correlation maps
//! and the hot-day precipitation composite.

mod composite;
mod portrait;
mod spectrum;

pub use composite::{hot_day_composite, HotDayComposite};
pub use portrait::{median, portrait_normalize, MedianPolicy};
pub use spectrum::{
    effective_resolution, zonal_power_spectrum, zonal_power_spectrum_at, SpectrumResult, DEFAULT_RATIO_THRESHOLD,
};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calendar::{Calendar, Season};
use crate::dataset::{Dataset, Dim, Field};
use crate::error::{Error, Result};
use crate::grid::{CompensatedSum, GridSpec};

/// Scalar or vector metric value. NaN entries serialize as `null`.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl MetricValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            MetricValue::Scalar(v) => Some(*v),
            MetricValue::Vector(_) => None,
        }
    }

    pub fn bit_eq(&self, other: &MetricValue) -> bool {
        match (self, other) {
            (MetricValue::Scalar(a), MetricValue::Scalar(b)) => a.to_bits() == b.to_bits(),
            (MetricValue::Vector(a), MetricValue::Vector(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MetricValueRepr {
    Scalar(Option<f64>),
    Vector(Vec<Option<f64>>),
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricValue::Scalar(v) => MetricValueRepr::Scalar(finite_or_none(*v)),
            MetricValue::Vector(v) => MetricValueRepr::Vector(v.iter().copied().map(finite_or_none).collect()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match MetricValueRepr::deserialize(d)? {
            MetricValueRepr::Scalar(v) => MetricValue::Scalar(v.unwrap_or(f64::NAN)),
            MetricValueRepr::Vector(v) => MetricValue::Vector(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()),
        })
    }
}

/// One diagnostic value for a model. The tuple (model_id, variable, season,
/// region, metric_id) identifies it within a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub model_id: String,
    pub variable: String,
    pub season: Season,
    pub region: String,
    pub metric_id: String,
    pub value: MetricValue,
    pub units: String,
}

impl MetricRecord {
    pub fn scalar(
        model_id: &str,
        variable: &str,
        season: Season,
        region: &str,
        metric_id: &str,
        value: f64,
        units: &str,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            variable: variable.into(),
            season,
            region: region.into(),
            metric_id: metric_id.into(),
            value: MetricValue::Scalar(value),
            units: units.into(),
        }
    }

    /// Key identifying the record within one model.
    pub fn key(&self) -> MetricKey {
        MetricKey {
            variable: self.variable.clone(),
            season: self.season,
            region: self.region.clone(),
            metric_id: self.metric_id.clone(),
        }
    }
}

/// Model-independent part of a metric record's identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MetricKey {
    pub variable: String,
    pub season: Season,
    pub region: String,
    pub metric_id: String,
}

impl std::fmt::Display for MetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.variable, self.season, self.region, self.metric_id
        )
    }
}

/// Time mean over the timesteps that belong to complete instances of
/// `season`. The result has the variable's dims minus `time`.
pub fn climatology(ds: &Dataset, variable: &str, season: Season) -> Result<Field> {
    let field = ds.variable(variable)?;
    if !field.has(Dim::Time) {
        if season == Season::Ann {
            return Ok(field.clone());
        }
        return Err(Error::Shape(format!("`{variable}` has no time dimension")));
    }
    let calendar = match season {
        Season::Ann => None,
        _ => Some(Calendar::of(ds)?),
    };
    let selected = season.select(calendar, &ds.time_s)?;
    if selected.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no complete {season} samples for `{variable}`"
        )));
    }
    let stride = field.data.len() / ds.ntime();
    let mut sums = vec![CompensatedSum::new(); stride];
    let mut counts = vec![0usize; stride];
    for &t in &selected {
        for (i, &v) in field.data[t * stride..(t + 1) * stride].iter().enumerate() {
            if !v.is_nan() {
                sums[i].add(v);
                counts[i] += 1;
            }
        }
    }
    let data: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n == 0 { f64::NAN } else { s.value() / n as f64 })
        .collect();
    let any_masked = data.iter().any(|v| v.is_nan());
    Ok(Field {
        name: field.name.clone(),
        dims: field.dims.iter().copied().filter(|&d| d != Dim::Time).collect(),
        data,
        units: field.units.clone(),
        standard_name: field.standard_name.clone(),
        maskable: field.maskable || any_masked,
    })
}

/// Area-weighted RMSE over the unmasked intersection of two fields whose
/// trailing dims are (lat, lon). Leading dims are pooled.
pub fn rmse(model: &Field, reference: &Field, grid: &GridSpec) -> Result<f64> {
    if model.dims != reference.dims || model.data.len() != reference.data.len() {
        return Err(Error::Shape(format!(
            "`{}` and `{}` differ in shape",
            model.name, reference.name
        )));
    }
    let n = grid.ncell();
    if !model.data.len().is_multiple_of(n) || !(model.has(Dim::Lat) && model.has(Dim::Lon)) {
        return Err(Error::Shape(format!("`{}` is not defined over the grid", model.name)));
    }
    let cos = grid.cos_lat();
    let nlon = grid.nlon();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (i, (&m, &r)) in model.data.iter().zip(&reference.data).enumerate() {
        if m.is_nan() || r.is_nan() {
            continue;
        }
        let w = cos[(i % n) / nlon];
        num.add(w * (m - r) * (m - r));
        den.add(w);
    }
    if den.value() <= 0.0 {
        return Err(Error::UndefinedMean("empty unmasked intersection".into()));
    }
    Ok((num.value() / den.value()).sqrt())
}

/// Per-cell temporal Pearson correlation between two variables. Cells with
/// zero variance in either input are masked (NaN).
pub fn covariance_map(ds: &Dataset, var_a: &str, var_b: &str) -> Result<Field> {
    let a = ds.variable(var_a)?;
    let b = ds.variable(var_b)?;
    if a.dims != b.dims || !a.has(Dim::Time) {
        return Err(Error::Shape(format!(
            "`{var_a}` and `{var_b}` must share dims including time"
        )));
    }
    let nt = ds.ntime();
    if nt < 3 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 3 timesteps, have {nt}"
        )));
    }
    let stride = a.data.len() / nt;
    let mut out = Vec::with_capacity(stride);
    for i in 0..stride {
        let pairs: Vec<(f64, f64)> = (0..nt)
            .map(|t| (a.data[t * stride + i], b.data[t * stride + i]))
            .filter(|(x, y)| !x.is_nan() && !y.is_nan())
            .collect();
        out.push(pearson(&pairs));
    }
    Ok(Field {
        name: format!("corr_{var_a}_{var_b}"),
        dims: a.dims.iter().copied().filter(|&d| d != Dim::Time).collect(),
        data: out,
        units: "1".into(),
        standard_name: None,
        maskable: true,
    })
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    if pairs.len() < 3 {
        return f64::NAN;
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).collect::<CompensatedSum>().value() / n;
    let mb = pairs.iter().map(|p| p.1).collect::<CompensatedSum>().value() / n;
    let mut sab = CompensatedSum::new();
    let mut saa = CompensatedSum::new();
    let mut sbb = CompensatedSum::new();
    let mut scale_a = 0.0_f64;
    let mut scale_b = 0.0_f64;
    for &(x, y) in pairs {
        let (da, db) = (x - ma, y - mb);
        sab.add(da * db);
        saa.add(da * da);
        sbb.add(db * db);
        scale_a = scale_a.max(x.abs());
        scale_b = scale_b.max(y.abs());
    }
    let (sa, sb) = (saa.value().sqrt(), sbb.value().sqrt());
    // Deviations at rounding level of the data are treated as no variance.
    let flat = |s: f64, scale: f64| s <= 1e-13 * scale * n.sqrt() || s == 0.0;
    if flat(sa, scale_a) || flat(sb, scale_b) {
        return f64::NAN;
    }
    (sab.value() / (sa * sb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::regular(6, 12).unwrap()
    }

    fn field2d(values: Vec<f64>) -> Field {
        Field::new("x", vec![Dim::Lat, Dim::Lon], values, "1")
    }

    #[test]
    fn rmse_identity_and_offset() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base: Vec<f64> = (0..g.ncell()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = field2d(base.clone());
        assert_eq!(rmse(&a, &a, &g).unwrap(), 0.0);
        let b = field2d(base.iter().map(|v| v - 0.75).collect());
        assert!((rmse(&a, &b, &g).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rmse_matches_double_loop() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..g.ncell()).map(|_| rng.random_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..g.ncell()).map(|_| rng.random_range(0.0..10.0)).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..g.nlat() {
            let w = g.lat_deg()[j].to_radians().cos();
            for k in 0..g.nlon() {
                let d = a[j * g.nlon() + k] - b[j * g.nlon() + k];
                num += w * d * d;
                den += w;
            }
        }
        let oracle = (num / den).sqrt();
        let got = rmse(&field2d(a), &field2d(b), &g).unwrap();
        assert!((got - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn rmse_errors() {
        let g = grid();
        let a = field2d(vec![1.0; g.ncell()]);
        let short = field2d(vec![1.0; g.ncell() - 1]);
        assert!(matches!(rmse(&a, &short, &g), Err(Error::Shape(_))));
        let masked = field2d(vec![f64::NAN; g.ncell()]).maskable();
        assert!(matches!(rmse(&a, &masked, &g), Err(Error::UndefinedMean(_))));
    }

    fn series_ds(nt: usize, f: impl Fn(usize, usize) -> f64, calendar: &str, step_days: f64) -> Dataset {
        let g = GridSpec::regular(2, 4).unwrap();
        let n = g.ncell();
        let data = (0..nt * n).map(|i| f(i / n, i % n)).collect();
        Dataset::new(g, (0..nt).map(|t| t as f64 * step_days * 86400.0).collect())
            .with_attr("calendar", calendar)
            .with_provenance(Provenance::for_model("m"))
            .with_variable(Field::time_lat_lon("x", data, "K"))
            .unwrap()
    }

    #[test]
    fn climatology_trivial_cases() {
        let ds = series_ds(1, |_, i| i as f64, "noleap", 1.0);
        let c = climatology(&ds, "x", Season::Ann).unwrap();
        assert_eq!(c.dims, vec![Dim::Lat, Dim::Lon]);
        assert_eq!(c.data, (0..8).map(|i| i as f64).collect::<Vec<_>>());

        let ds = series_ds(10, |t, _| if t % 2 == 0 { 1.0 } else { -1.0 }, "noleap", 1.0);
        let c = climatology(&ds, "x", Season::Ann).unwrap();
        assert!(c.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn climatology_djf_matches_month_mask() {
        // Daily samples over three no-leap years with an annual sinusoid.
        let nt = 3 * 365;
        let f = |t: usize, i: usize| 280.0 + i as f64 + 10.0 * (2.0 * std::f64::consts::PI * t as f64 / 365.0).sin();
        let ds = series_ds(nt, f, "noleap", 1.0);
        let c = climatology(&ds, "x", Season::Djf).unwrap();

        // Oracle: month from chrono on a non-leap year; complete DJF seasons
        // are Dec(y)..Feb(y+1) for y = 0, 1.
        use chrono::{Datelike, NaiveDate};
        let month = |t: usize| {
            let doy = (t % 365) as i64;
            (NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Duration::days(doy)).month()
        };
        for i in 0..8 {
            let mut s = 0.0;
            let mut n = 0;
            for t in 0..nt {
                let year = t / 365;
                let m = month(t);
                let in_season = (m == 12 && year < 2) || ((m == 1 || m == 2) && year >= 1);
                if in_season {
                    s += f(t, i);
                    n += 1;
                }
            }
            assert_eq!(n, 2 * 90);
            assert!((c.data[i] - s / n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn climatology_empty_season() {
        let ds = series_ds(20, |_, _| 1.0, "noleap", 1.0);
        assert!(matches!(
            climatology(&ds, "x", Season::Jja),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn correlation_affine_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GridSpec::regular(2, 4).unwrap();
        let n = g.ncell();
        let nt = 12;
        let a: Vec<f64> = (0..nt * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let neg: Vec<f64> = a.iter().map(|v| -2.0 * v + 5.0).collect();
        let mut ds = Dataset::new(g, (0..nt).map(|t| t as f64).collect());
        ds.add_variable(Field::time_lat_lon("a", a.clone(), "1")).unwrap();
        ds.add_variable(Field::time_lat_lon("b", a, "1")).unwrap();
        ds.add_variable(Field::time_lat_lon("c", neg, "1")).unwrap();
        let r = covariance_map(&ds, "a", "b").unwrap();
        assert!(r.data.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let r = covariance_map(&ds, "a", "c").unwrap();
        assert!(r.data.iter().all(|v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn correlation_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GridSpec::regular(2, 4).unwrap();
        let n = g.ncell();
        let nt = 30;
        let a: Vec<f64> = (0..nt * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.3 * v + rng.random_range(-1.0..1.0)).collect();
        let ds = Dataset::new(g, (0..nt).map(|t| t as f64).collect())
            .with_variable(Field::time_lat_lon("a", a.clone(), "1"))
            .unwrap()
            .with_variable(Field::time_lat_lon("b", b.clone(), "1"))
            .unwrap();
        let r = covariance_map(&ds, "a", "b").unwrap();
        for i in 0..n {
            let xs: Vec<f64> = (0..nt).map(|t| a[t * n + i]).collect();
            let ys: Vec<f64> = (0..nt).map(|t| b[t * n + i]).collect();
            let mx = xs.iter().sum::<f64>() / nt as f64;
            let my = ys.iter().sum::<f64>() / nt as f64;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
            let oracle = sxy / (sxx * syy).sqrt();
            assert!((r.data[i] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_masks_constant_cells_and_needs_three_steps() {
        let g = GridSpec::regular(2, 4).unwrap();
        let ds = Dataset::new(g.clone(), vec![0.0, 1.0, 2.0, 3.0])
            .with_variable(Field::time_lat_lon("a", (0..32).map(|i| (i * i) as f64).collect(), "1"))
            .unwrap()
            .with_variable(Field::time_lat_lon("b", vec![0.1; 32], "1"))
            .unwrap();
        let r = covariance_map(&ds, "a", "b").unwrap();
        assert!(r.maskable && r.data.iter().all(|v| v.is_nan()));

        let short = Dataset::new(g, vec![0.0, 1.0])
            .with_variable(Field::time_lat_lon("a", vec![0.0; 16], "1"))
            .unwrap()
            .with_variable(Field::time_lat_lon("b", vec![0.0; 16], "1"))
            .unwrap();
        assert!(matches!(
            covariance_map(&short, "a", "b"),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn metric_value_json_nan_is_null() {
        let v = MetricValue::Vector(vec![1.0, f64::NAN]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[1.0,null]");
        let back: MetricValue = serde_json::from_str(&s).unwrap();
        assert!(back.bit_eq(&v) || matches!(back, MetricValue::Vector(ref x) if x[1].is_nan()));
        let s: MetricValue = serde_json::from_str("0.1").unwrap();
        assert_eq!(s, MetricValue::Scalar(0.1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn rmse_symmetric_and_triangle(seed in any::<u64>()) {
                let g = GridSpec::regular(4, 8).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut f = || field2d((0..g.ncell()).map(|_| rng.random_range(-5.0..5.0)).collect());
                let (a, b, c) = (f(), f(), f());
                let ab = rmse(&a, &b, &g).unwrap();
                prop_assert_eq!(ab, rmse(&b, &a, &g).unwrap());
                let ac = rmse(&a, &c, &g).unwrap();
                let cb = rmse(&c, &b, &g).unwrap();
                prop_assert!(ab <= ac + cb + 1e-12);
            }

            #[test]
            fn correlation_affine_invariant(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0, flip in any::<bool>()) {
                let g = GridSpec::regular(2, 4).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let nt = 8;
                let a: Vec<f64> = (0..nt * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..nt * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
                let s = if flip { -scale } else { scale };
                let a2: Vec<f64> = a.iter().map(|v| s * v + shift).collect();
                let ds = Dataset::new(g, (0..nt).map(|t| t as f64).collect())
                    .with_variable(Field::time_lat_lon("a", a, "1")).unwrap()
                    .with_variable(Field::time_lat_lon("a2", a2, "1")).unwrap()
                    .with_variable(Field::time_lat_lon("b", b, "1")).unwrap();
                let r1 = covariance_map(&ds, "a", "b").unwrap();
                let r2 = covariance_map(&ds, "a2", "b").unwrap();
                for (x, y) in r1.data.iter().zip(&r2.data) {
                    let expect = if flip { -x } else { *x };
                    prop_assert!((expect - y).abs() < 1e-10);
                }
            }
        }
    }
}
